//! Farm geometry: layout, beams, camera poses, and the coverage raster.
//!
//! The farm is a 2D rectangle of `length × width` meters. Cameras mount on
//! axis-aligned beams and each camera's field of view is an isosceles
//! triangle with its apex at the camera, height `depth` along the facing
//! direction and half-base `depth * tan(fov/2)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid farm layout: {0}")]
    InvalidLayout(String),
    #[error("genotype has {got} genes but camera spec requires {expected} (3 per camera)")]
    GeneDimensionMismatch { got: usize, expected: usize },
    #[error("field of view {0} degrees is outside the supported open interval (0, 180)")]
    UnsupportedFov(f64),
    #[error("beam index {index} out of range for {beams} beams")]
    BeamIndexOutOfRange { index: usize, beams: usize },
    #[error("camera spec invalid: {0}")]
    InvalidCameraSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Runs along X; `offset` is its y-coordinate.
    Horizontal,
    /// Runs along Y; `offset` is its x-coordinate.
    Vertical,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Beam {
    pub axis: Axis,
    #[serde(rename = "offset_m")]
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FarmLayout {
    #[serde(rename = "length_m")]
    pub length: f64,
    #[serde(rename = "width_m")]
    pub width: f64,
    #[serde(rename = "pixel_size_m")]
    pub pixel_size: f64,
    /// Order matters: descriptor bit `j` refers to `beams[j]`.
    pub beams: Vec<Beam>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraSpec {
    pub fov_deg: f64,
    #[serde(rename = "depth_m")]
    pub depth: f64,
    pub count: usize,
}

impl FarmLayout {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.length > 0.0) || !(self.width > 0.0) {
            return Err(GeometryError::InvalidLayout(format!(
                "farm dimensions must be positive, got {} x {}",
                self.length, self.width
            )));
        }
        if !(self.pixel_size > 0.0) {
            return Err(GeometryError::InvalidLayout(format!(
                "pixel size must be positive, got {}",
                self.pixel_size
            )));
        }
        if self.beams.is_empty() {
            return Err(GeometryError::InvalidLayout("beam list is empty".into()));
        }
        for (i, beam) in self.beams.iter().enumerate() {
            let bound = match beam.axis {
                Axis::Horizontal => self.width,
                Axis::Vertical => self.length,
            };
            if beam.offset < 0.0 || beam.offset > bound {
                return Err(GeometryError::InvalidLayout(format!(
                    "beam {i} offset {} outside [0, {bound}]",
                    beam.offset
                )));
            }
        }
        Ok(())
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        let cols = (self.length / self.pixel_size).ceil() as usize;
        let rows = (self.width / self.pixel_size).ceil() as usize;
        (cols, rows)
    }
}

impl CameraSpec {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(GeometryError::UnsupportedFov(self.fov_deg));
        }
        if !(self.depth > 0.0) {
            return Err(GeometryError::InvalidCameraSpec(format!(
                "depth must be positive, got {}",
                self.depth
            )));
        }
        if self.count == 0 {
            return Err(GeometryError::InvalidCameraSpec("camera count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Normalized gene vector in `[0,1]^(3c)`: per camera x-gene, y-gene, orientation-gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genotype {
    pub genes: Vec<f64>,
}

impl Genotype {
    pub fn new(genes: Vec<f64>) -> Self {
        Self { genes }
    }

    pub fn camera_count(&self) -> usize {
        self.genes.len() / 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub x: f64,
    pub y: f64,
    /// Facing direction in degrees, `[0, 360)`; 0 points along +X.
    pub orientation_deg: f64,
    pub beam_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    /// `[apex, base_left, base_right]`
    pub vertices: [(f64, f64); 3],
}

impl Triangle {
    /// True iff `p` is inside or on the boundary.
    pub fn contains(&self, p: (f64, f64)) -> bool {
        let [a, b, c] = self.vertices;
        let d1 = cross(a, b, p);
        let d2 = cross(b, c, p);
        let d3 = cross(c, a, p);
        let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
        let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
        !(has_neg && has_pos)
    }

    pub fn bounding_box(&self) -> ((f64, f64), (f64, f64)) {
        let xs = self.vertices.iter().map(|v| v.0);
        let ys = self.vertices.iter().map(|v| v.1);
        let min_x = xs.clone().fold(f64::INFINITY, f64::min);
        let max_x = xs.fold(f64::NEG_INFINITY, f64::max);
        let min_y = ys.clone().fold(f64::INFINITY, f64::min);
        let max_y = ys.fold(f64::NEG_INFINITY, f64::max);
        ((min_x, min_y), (max_x, max_y))
    }
}

fn cross(o: (f64, f64), a: (f64, f64), p: (f64, f64)) -> f64 {
    (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0)
}

#[derive(Debug, Clone)]
pub struct CoverageGrid {
    pub cols: usize,
    pub rows: usize,
    pub cells: Vec<bool>,
    pub covered: usize,
}

impl CoverageGrid {
    pub fn fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.covered as f64 / self.cells.len() as f64
    }
}

/// Nearest point to `p` on a beam segment, clamped to the farm rectangle.
fn project_onto_beam(p: (f64, f64), beam: &Beam, layout: &FarmLayout) -> (f64, f64) {
    match beam.axis {
        Axis::Horizontal => (p.0.clamp(0.0, layout.length), beam.offset),
        Axis::Vertical => (beam.offset, p.1.clamp(0.0, layout.width)),
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Decodes a genotype into camera poses. Raw coordinates `(g_x * length,
/// g_y * width)` are snapped to the nearest point on any beam; ties break
/// toward the lowest beam index. Orientation is `gene * 360` normalized.
pub fn decode_genotype(
    g: &Genotype,
    layout: &FarmLayout,
    spec: &CameraSpec,
) -> Result<Vec<CameraPose>, GeometryError> {
    layout.validate()?;
    if g.genes.len() != 3 * spec.count {
        return Err(GeometryError::GeneDimensionMismatch {
            got: g.genes.len(),
            expected: 3 * spec.count,
        });
    }
    let mut poses = Vec::with_capacity(spec.count);
    for cam in 0..spec.count {
        let gx = g.genes[3 * cam];
        let gy = g.genes[3 * cam + 1];
        let go = g.genes[3 * cam + 2];
        let raw = (gx * layout.length, gy * layout.width);
        let mut best = (usize::MAX, f64::INFINITY, (0.0, 0.0));
        for (i, beam) in layout.beams.iter().enumerate() {
            let proj = project_onto_beam(raw, beam, layout);
            let d = dist2(raw, proj);
            if d < best.1 {
                best = (i, d, proj);
            }
        }
        let mut orientation = (go * 360.0) % 360.0;
        if orientation < 0.0 {
            orientation += 360.0;
        }
        // 1.0 * 360 wraps to 0.
        if orientation >= 360.0 {
            orientation = 0.0;
        }
        poses.push(CameraPose {
            x: best.2 .0,
            y: best.2 .1,
            orientation_deg: orientation,
            beam_index: best.0,
        });
    }
    Ok(poses)
}

/// FOV triangle: apex at the pose, height `depth` along the facing
/// direction, half-base `depth * tan(fov/2)`.
pub fn fov_triangle(pose: &CameraPose, spec: &CameraSpec) -> Result<Triangle, GeometryError> {
    if !(spec.fov_deg > 0.0 && spec.fov_deg < 180.0) {
        return Err(GeometryError::UnsupportedFov(spec.fov_deg));
    }
    let theta = pose.orientation_deg.to_radians();
    let (dx, dy) = (theta.cos(), theta.sin());
    // Perpendicular to the facing direction.
    let (px, py) = (-dy, dx);
    let half_base = spec.depth * (spec.fov_deg.to_radians() / 2.0).tan();
    let apex = (pose.x, pose.y);
    let far = (pose.x + spec.depth * dx, pose.y + spec.depth * dy);
    let left = (far.0 + half_base * px, far.1 + half_base * py);
    let right = (far.0 - half_base * px, far.1 - half_base * py);
    Ok(Triangle {
        vertices: [apex, left, right],
    })
}

/// Rasterizes the FOV triangles onto the farm grid. A cell is covered iff
/// its center lies inside (or on the boundary of) any triangle.
pub fn coverage_grid(
    poses: &[CameraPose],
    spec: &CameraSpec,
    layout: &FarmLayout,
) -> Result<CoverageGrid, GeometryError> {
    let (cols, rows) = layout.grid_dims();
    let mut cells = vec![false; cols * rows];
    let px = layout.pixel_size;
    for pose in poses {
        let tri = fov_triangle(pose, spec)?;
        let ((min_x, min_y), (max_x, max_y)) = tri.bounding_box();
        let c0 = ((min_x / px - 0.5).floor().max(0.0)) as usize;
        let c1 = (((max_x / px - 0.5).ceil()) as isize).clamp(0, cols as isize - 1) as usize;
        let r0 = ((min_y / px - 0.5).floor().max(0.0)) as usize;
        let r1 = (((max_y / px - 0.5).ceil()) as isize).clamp(0, rows as isize - 1) as usize;
        for r in r0..=r1 {
            let cy = (r as f64 + 0.5) * px;
            for c in c0..=c1 {
                let idx = r * cols + c;
                if cells[idx] {
                    continue;
                }
                let cx = (c as f64 + 0.5) * px;
                if tri.contains((cx, cy)) {
                    cells[idx] = true;
                }
            }
        }
    }
    let covered = cells.iter().filter(|&&b| b).count();
    Ok(CoverageGrid {
        cols,
        rows,
        cells,
        covered,
    })
}

/// Fraction of farm cells covered by at least one camera, in `[0, 1]`.
pub fn coverage_fraction(
    poses: &[CameraPose],
    spec: &CameraSpec,
    layout: &FarmLayout,
) -> Result<f64, GeometryError> {
    Ok(coverage_grid(poses, spec, layout)?.fraction())
}

/// Binary beam-usage vector: bit `j` is set iff some pose sits on beam `j`.
pub fn beam_usage_descriptor(
    poses: &[CameraPose],
    layout: &FarmLayout,
) -> Result<Vec<bool>, GeometryError> {
    let mut bits = vec![false; layout.beams.len()];
    for pose in poses {
        if pose.beam_index >= layout.beams.len() {
            return Err(GeometryError::BeamIndexOutOfRange {
                index: pose.beam_index,
                beams: layout.beams.len(),
            });
        }
        bits[pose.beam_index] = true;
    }
    Ok(bits)
}

/// Lower bound on cameras needed: `ceil(farm area / sector area)` with
/// sector area `(fov/360) * pi * depth^2`.
pub fn min_camera_estimate(layout: &FarmLayout, spec: &CameraSpec) -> usize {
    let farm_area = layout.length * layout.width;
    let sector = spec.fov_deg / 360.0 * std::f64::consts::PI * spec.depth * spec.depth;
    (farm_area / sector).ceil() as usize
}

/// SVG render of a solution: farm rectangle, beams as lines, FOV triangles
/// as translucent polygons.
pub fn render_svg(layout: &FarmLayout, poses: &[CameraPose], spec: &CameraSpec) -> String {
    let scale = 40.0;
    let w = layout.length * scale;
    let h = layout.width * scale;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"white\" stroke=\"black\"/>\n"
    ));
    for beam in &layout.beams {
        let (x1, y1, x2, y2) = match beam.axis {
            Axis::Horizontal => (0.0, beam.offset * scale, w, beam.offset * scale),
            Axis::Vertical => (beam.offset * scale, 0.0, beam.offset * scale, h),
        };
        out.push_str(&format!(
            "  <line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n"
        ));
    }
    for pose in poses {
        if let Ok(tri) = fov_triangle(pose, spec) {
            let pts = tri
                .vertices
                .iter()
                .map(|(x, y)| format!("{:.2},{:.2}", x * scale, y * scale))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!(
                "  <polygon points=\"{pts}\" fill=\"rgba(30,100,200,0.3)\" stroke=\"rgb(30,100,200)\"/>\n"
            ));
            out.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"red\"/>\n",
                pose.x * scale,
                pose.y * scale
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

/// The deployed farm: 20.5 x 6.5 m, 0.1 m cells, three horizontal beams
/// and five vertical beams, six cameras with 102 degree FOV and 5 m depth.
pub fn reference_layout() -> (FarmLayout, CameraSpec) {
    let beams = vec![
        Beam { axis: Axis::Horizontal, offset: 0.0 },
        Beam { axis: Axis::Horizontal, offset: 3.25 },
        Beam { axis: Axis::Horizontal, offset: 6.5 },
        Beam { axis: Axis::Vertical, offset: 0.0 },
        Beam { axis: Axis::Vertical, offset: 5.125 },
        Beam { axis: Axis::Vertical, offset: 10.25 },
        Beam { axis: Axis::Vertical, offset: 15.375 },
        Beam { axis: Axis::Vertical, offset: 20.5 },
    ];
    let layout = FarmLayout {
        length: 20.5,
        width: 6.5,
        pixel_size: 0.1,
        beams,
    };
    let spec = CameraSpec {
        fov_deg: 102.0,
        depth: 5.0,
        count: 6,
    };
    (layout, spec)
}
