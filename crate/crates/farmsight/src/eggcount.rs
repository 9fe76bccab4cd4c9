//! Egg counting: centroid tracking over per-frame detections, polygonal
//! weight-class bins with count-once semantics, and self-calibration of the
//! bin regions from a run of small eggs (density clustering of the halt
//! positions, then a Hough transform over the clustered centroids).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRAME_WIDTH: f64 = 640.0;
pub const FRAME_HEIGHT: f64 = 480.0;

#[derive(Debug, Error)]
pub enum EggCountError {
    #[error("frame {got} arrived after frame {last}; detections must be replayed in order")]
    OutOfOrderFrame { got: u64, last: u64 },
    #[error("detection at frame {frame} does not match step frame {expected}")]
    MixedFrameBatch { frame: u64, expected: u64 },
    #[error("polygon needs at least 3 vertices, got {0}")]
    DegeneratePolygon(usize),
    #[error("track {track_id} centroid lies inside both {first:?} and {second:?}; bins must be disjoint")]
    OverlappingBins { track_id: u64, first: WeightClass, second: WeightClass },
    #[error("calibration failed: expected 4 spring lines, found {found}")]
    CalibrationFailed { found: usize },
    #[error("calibration produced overlapping regions: columns at x={left:.1} and x={right:.1} are closer than twice the half-width {half_width}")]
    RegionsOverlap { left: f64, right: f64, half_width: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: u64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    pub confidence: f64,
}

impl Detection {
    /// Top-left corner of the bounding box.
    pub fn box_origin(&self) -> (f64, f64) {
        (self.cx - self.width / 2.0, self.cy - self.height / 2.0)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum WeightClass {
    ExtraLarge,
    Large,
    Medium,
    Small,
}

impl WeightClass {
    pub const ALL: [WeightClass; 4] =
        [WeightClass::ExtraLarge, WeightClass::Large, WeightClass::Medium, WeightClass::Small];
}

impl std::fmt::Display for WeightClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            WeightClass::ExtraLarge => "extra-large",
            WeightClass::Large => "large",
            WeightClass::Medium => "medium",
            WeightClass::Small => "small",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub centroid: (f64, f64),
    pub frames_missed: u32,
    pub counted_in: Option<WeightClass>,
    pub path: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrackSet {
    pub tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl TrackSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }
}

/// Advances the tracker by one frame: greedy nearest-pair matching in
/// ascending-distance order within `max_dist`, new ids for unmatched
/// detections, and retirement after more than `max_missed` unseen frames.
pub fn tracker_step(
    tracks: &mut TrackSet,
    frame_index: u64,
    detections: &[Detection],
    max_dist: f64,
    max_missed: u32,
) -> Result<(), EggCountError> {
    if let Some(last) = tracks.last_frame {
        if frame_index <= last {
            return Err(EggCountError::OutOfOrderFrame { got: frame_index, last });
        }
    }
    for d in detections {
        if d.frame_index != frame_index {
            return Err(EggCountError::MixedFrameBatch {
                frame: d.frame_index,
                expected: frame_index,
            });
        }
    }
    tracks.last_frame = Some(frame_index);

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, t) in tracks.tracks.iter().enumerate() {
        for (di, d) in detections.iter().enumerate() {
            let dist = ((t.centroid.0 - d.cx).powi(2) + (t.centroid.1 - d.cy).powi(2)).sqrt();
            if dist <= max_dist {
                candidates.push((dist, ti, di));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });

    let mut track_matched = vec![false; tracks.tracks.len()];
    let mut det_matched = vec![false; detections.len()];
    for (_, ti, di) in candidates {
        if track_matched[ti] || det_matched[di] {
            continue;
        }
        track_matched[ti] = true;
        det_matched[di] = true;
        let t = &mut tracks.tracks[ti];
        t.centroid = (detections[di].cx, detections[di].cy);
        t.frames_missed = 0;
        t.path.push(t.centroid);
    }

    for (ti, matched) in track_matched.iter().enumerate() {
        if !matched {
            tracks.tracks[ti].frames_missed += 1;
        }
    }
    tracks.tracks.retain(|t| t.frames_missed <= max_missed);

    for (di, d) in detections.iter().enumerate() {
        if det_matched[di] {
            continue;
        }
        tracks.tracks.push(Track {
            id: tracks.next_id,
            centroid: (d.cx, d.cy),
            frames_missed: 0,
            counted_in: None,
            path: vec![(d.cx, d.cy)],
        });
        tracks.next_id += 1;
    }
    Ok(())
}

const EDGE_EPS: f64 = 1e-9;

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    if cross.abs() > EDGE_EPS * len.max(1.0) {
        return false;
    }
    let dot = (p.0 - a.0) * (b.0 - a.0) + (p.1 - a.1) * (b.1 - a.1);
    dot >= -EDGE_EPS && dot <= len * len + EDGE_EPS
}

/// Ray-casting parity test; points on an edge or vertex count as inside.
pub fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> Result<bool, EggCountError> {
    if poly.len() < 3 {
        return Err(EggCountError::DegeneratePolygon(poly.len()));
    }
    let n = poly.len();
    for i in 0..n {
        if on_segment(p, poly[i], poly[(i + 1) % n]) {
            return Ok(true);
        }
    }
    let mut inside = false;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[(i + 1) % n];
        if (yi > p.1) != (yj > p.1) {
            let x_cross = xi + (p.1 - yi) / (yj - yi) * (xj - xi);
            if p.0 < x_cross {
                inside = !inside;
            }
        }
    }
    Ok(inside)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightBin {
    pub label: WeightClass,
    pub polygon: Vec<(f64, f64)>,
    pub tally: u64,
}

/// Counts each track at most once: the first frame its centroid sits inside a
/// bin, that bin's tally increments and the track is marked. Returns the
/// number of newly counted tracks.
pub fn count_update(tracks: &mut TrackSet, bins: &mut [WeightBin]) -> Result<u64, EggCountError> {
    let mut newly = 0;
    for t in &mut tracks.tracks {
        if t.counted_in.is_some() {
            continue;
        }
        let mut hit: Option<usize> = None;
        for (bi, bin) in bins.iter().enumerate() {
            if point_in_polygon(t.centroid, &bin.polygon)? {
                if let Some(first) = hit {
                    return Err(EggCountError::OverlappingBins {
                        track_id: t.id,
                        first: bins[first].label,
                        second: bin.label,
                    });
                }
                hit = Some(bi);
            }
        }
        if let Some(bi) = hit {
            bins[bi].tally += 1;
            t.counted_in = Some(bins[bi].label);
            newly += 1;
        }
    }
    Ok(newly)
}

/// Density clustering. Returns one label per point: a cluster index, or -1
/// for noise. Clusters are the connected components of core points within
/// eps; border points join the cluster of their nearest core neighbor, so
/// the partition is independent of input order up to label renaming.
pub fn dbscan(points: &[(f64, f64)], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = points.len();
    let eps2 = eps * eps;
    let dist2 = |i: usize, j: usize| {
        let dx = points[i].0 - points[j].0;
        let dy = points[i].1 - points[j].1;
        dx * dx + dy * dy
    };
    let neighbors: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| dist2(i, j) <= eps2).collect()).collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels = vec![-1i32; n];
    let mut cluster = 0i32;
    for i in 0..n {
        if !core[i] || labels[i] != -1 {
            continue;
        }
        labels[i] = cluster;
        let mut queue = vec![i];
        while let Some(j) = queue.pop() {
            for &k in &neighbors[j] {
                if core[k] && labels[k] == -1 {
                    labels[k] = cluster;
                    queue.push(k);
                }
            }
        }
        cluster += 1;
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        let nearest_core = neighbors[i]
            .iter()
            .filter(|&&j| core[j])
            .min_by(|&&a, &&b| dist2(i, a).partial_cmp(&dist2(i, b)).unwrap());
        if let Some(&j) = nearest_core {
            labels[i] = labels[j];
        }
    }
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughLine {
    /// Signed distance from the origin; `x cos(theta) + y sin(theta) = rho`.
    pub rho: f64,
    /// Normal angle in `[0, pi)`.
    pub theta: f64,
    pub votes: u32,
}

/// Hough transform over point centroids. Peaks with at least `votes_min`
/// votes survive non-maximum suppression against their eight accumulator
/// neighbors; results are sorted by vote count, strongest first.
pub fn hough_lines(
    points: &[(f64, f64)],
    rho_res: f64,
    theta_res_deg: f64,
    votes_min: u32,
) -> Vec<HoughLine> {
    if points.is_empty() {
        return Vec::new();
    }
    let n_theta = (180.0 / theta_res_deg).round() as usize;
    let rho_max = points
        .iter()
        .map(|p| (p.0 * p.0 + p.1 * p.1).sqrt())
        .fold(0.0f64, f64::max)
        .max(rho_res);
    let n_rho = (2.0 * rho_max / rho_res).ceil() as usize + 1;
    let mut acc = vec![0u32; n_theta * n_rho];
    for ti in 0..n_theta {
        let theta = ti as f64 * theta_res_deg.to_radians();
        let (sin_t, cos_t) = theta.sin_cos();
        for p in points {
            let rho = p.0 * cos_t + p.1 * sin_t;
            let ri = ((rho + rho_max) / rho_res).round() as usize;
            acc[ti * n_rho + ri.min(n_rho - 1)] += 1;
        }
    }
    let mut lines = Vec::new();
    for ti in 0..n_theta {
        for ri in 0..n_rho {
            let v = acc[ti * n_rho + ri];
            if v < votes_min {
                continue;
            }
            let idx = ti * n_rho + ri;
            let mut is_peak = true;
            'nms: for dt in -1i64..=1 {
                for dr in -1i64..=1 {
                    if dt == 0 && dr == 0 {
                        continue;
                    }
                    let nt = ti as i64 + dt;
                    let nr = ri as i64 + dr;
                    if nt < 0 || nt >= n_theta as i64 || nr < 0 || nr >= n_rho as i64 {
                        continue;
                    }
                    let nidx = nt as usize * n_rho + nr as usize;
                    let nv = acc[nidx];
                    // Ties break toward the lower accumulator index.
                    if nv > v || (nv == v && nidx < idx) {
                        is_peak = false;
                        break 'nms;
                    }
                }
            }
            if is_peak {
                lines.push(HoughLine {
                    rho: ri as f64 * rho_res - rho_max,
                    theta: ti as f64 * theta_res_deg.to_radians(),
                    votes: v,
                });
            }
        }
    }
    lines.sort_by(|a, b| b.votes.cmp(&a.votes).then(a.rho.partial_cmp(&b.rho).unwrap()));
    lines
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub eps: f64,
    pub min_pts: usize,
    pub rho_res: f64,
    pub theta_res_deg: f64,
    pub votes_min: u32,
    /// Lines tilted more than this from the travel-transverse direction are
    /// discarded (lane-parallel alignments are not spring lines).
    pub max_theta_deg: f64,
    /// Lines closer than this merge into one spring position.
    pub merge_tolerance: f64,
    pub roi_half_width: f64,
    pub lane_top: f64,
    pub lane_bottom: f64,
    pub min_confidence: f64,
    /// Weight classes in ascending-column order along the travel direction.
    pub class_order: [WeightClass; 4],
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            eps: 25.0,
            min_pts: 8,
            rho_res: 2.0,
            theta_res_deg: 1.0,
            votes_min: 12,
            max_theta_deg: 20.0,
            merge_tolerance: 20.0,
            roi_half_width: 30.0,
            lane_top: 0.0,
            lane_bottom: FRAME_HEIGHT,
            min_confidence: 0.5,
            class_order: WeightClass::ALL,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Merged spring lines as `(rho, theta)` with `theta = 0` (columns).
    pub spring_lines: Vec<(f64, f64)>,
    pub rois: Vec<(WeightClass, Vec<(f64, f64)>)>,
    /// Union region containing every ROI; pixels outside it are maskable.
    pub detection_region: Vec<(f64, f64)>,
}

/// Recovers the four weighting-spring columns from a calibration run of small
/// eggs: density clustering isolates where the springs halt the eggs, a Hough
/// transform recovers lines through the clustered centroids, nearby lines
/// merge, and a rectangular ROI is laid around each column.
pub fn calibrate(
    log: &[Detection],
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult, EggCountError> {
    if cfg.eps <= 0.0 || cfg.min_pts == 0 || cfg.rho_res <= 0.0 || cfg.theta_res_deg <= 0.0 {
        return Err(EggCountError::InvalidConfig(
            "eps, min_pts, rho_res, and theta_res must be positive".into(),
        ));
    }
    let points: Vec<(f64, f64)> = log
        .iter()
        .filter(|d| d.confidence >= cfg.min_confidence)
        .map(|d| (d.cx, d.cy))
        .collect();
    let labels = dbscan(&points, cfg.eps, cfg.min_pts);
    let clustered: Vec<(f64, f64)> = points
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l >= 0)
        .map(|(&p, _)| p)
        .collect();
    let lines = hough_lines(&clustered, cfg.rho_res, cfg.theta_res_deg, cfg.votes_min);

    let max_theta = cfg.max_theta_deg.to_radians();
    let y_mid = (cfg.lane_top + cfg.lane_bottom) / 2.0;
    let mut columns: Vec<(f64, u32)> = Vec::new(); // (x at lane mid, votes)
    for l in &lines {
        let near_vertical = l.theta <= max_theta || l.theta >= std::f64::consts::PI - max_theta;
        if !near_vertical {
            continue;
        }
        let x = (l.rho - y_mid * l.theta.sin()) / l.theta.cos();
        columns.push((x, l.votes));
    }
    columns.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut merged: Vec<(f64, u32)> = Vec::new();
    for (x, v) in columns {
        match merged.last_mut() {
            Some((mx, mv)) if (x - *mx).abs() <= cfg.merge_tolerance => {
                // Vote-weighted running mean.
                *mx = (*mx * *mv as f64 + x * v as f64) / (*mv + v) as f64;
                *mv += v;
            }
            _ => merged.push((x, v)),
        }
    }
    if merged.len() != 4 {
        return Err(EggCountError::CalibrationFailed { found: merged.len() });
    }
    for pair in merged.windows(2) {
        if pair[1].0 - pair[0].0 < 2.0 * cfg.roi_half_width {
            return Err(EggCountError::RegionsOverlap {
                left: pair[0].0,
                right: pair[1].0,
                half_width: cfg.roi_half_width,
            });
        }
    }
    let rois: Vec<(WeightClass, Vec<(f64, f64)>)> = merged
        .iter()
        .zip(cfg.class_order)
        .map(|(&(x, _), class)| {
            let hw = cfg.roi_half_width;
            let poly = vec![
                (x - hw, cfg.lane_top),
                (x + hw, cfg.lane_top),
                (x + hw, cfg.lane_bottom),
                (x - hw, cfg.lane_bottom),
            ];
            (class, poly)
        })
        .collect();
    let x_min = merged.first().unwrap().0 - cfg.roi_half_width;
    let x_max = merged.last().unwrap().0 + cfg.roi_half_width;
    let detection_region = vec![
        (x_min, cfg.lane_top),
        (x_max, cfg.lane_top),
        (x_max, cfg.lane_bottom),
        (x_min, cfg.lane_bottom),
    ];
    Ok(CalibrationResult {
        spring_lines: merged.iter().map(|&(x, _)| (x, 0.0)).collect(),
        rois,
        detection_region,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountConfig {
    pub max_dist: f64,
    pub max_missed: u32,
    pub min_confidence: f64,
}

impl Default for CountConfig {
    fn default() -> Self {
        Self { max_dist: 50.0, max_missed: 5, min_confidence: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountReport {
    pub tallies: BTreeMap<WeightClass, u64>,
    pub total: u64,
}

pub type FrameLog = Vec<(u64, Vec<Detection>)>;

/// Groups a flat detection log by frame index, ascending.
pub fn group_frames(log: &[Detection]) -> FrameLog {
    let mut by_frame: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for d in log {
        by_frame.entry(d.frame_index).or_default().push(*d);
    }
    by_frame.into_iter().collect()
}

/// Replays a detection log through the tracker and counting bins.
pub fn run_count(
    frames: &FrameLog,
    calib: &CalibrationResult,
    cfg: &CountConfig,
) -> Result<CountReport, EggCountError> {
    let mut tracks = TrackSet::new();
    let mut bins: Vec<WeightBin> = calib
        .rois
        .iter()
        .map(|(class, poly)| WeightBin { label: *class, polygon: poly.clone(), tally: 0 })
        .collect();
    for (frame, dets) in frames {
        let kept: Vec<Detection> =
            dets.iter().filter(|d| d.confidence >= cfg.min_confidence).copied().collect();
        tracker_step(&mut tracks, *frame, &kept, cfg.max_dist, cfg.max_missed)?;
        count_update(&mut tracks, &mut bins)?;
    }
    let mut tallies: BTreeMap<WeightClass, u64> =
        WeightClass::ALL.iter().map(|&c| (c, 0)).collect();
    for b in &bins {
        *tallies.get_mut(&b.label).unwrap() += b.tally;
    }
    let total = tallies.values().sum();
    Ok(CountReport { tallies, total })
}

pub mod synth {
    //! Synthetic grader sessions with known ground truth, used for testing
    //! the counting and calibration pipelines end to end.

    use super::{Detection, WeightClass};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    /// Geometry of the simulated grader.
    #[derive(Debug, Clone)]
    pub struct GraderSim {
        /// Spring columns in ascending x, one per weight class in
        /// `class_order` order.
        pub columns: [f64; 4],
        pub class_order: [WeightClass; 4],
        /// Lane center lines (y).
        pub lanes: Vec<f64>,
        /// Travel speed in pixels per frame.
        pub speed: f64,
        /// Frames an egg halts on a spring.
        pub halt_frames: u64,
        /// Halt-position jitter in pixels (uniform integer, +/-).
        pub jitter: i32,
    }

    impl Default for GraderSim {
        fn default() -> Self {
            Self {
                columns: [120.0, 240.0, 360.0, 480.0],
                class_order: WeightClass::ALL,
                lanes: vec![120.0, 240.0, 360.0],
                speed: 40.0,
                halt_frames: 10,
                jitter: 2,
            }
        }
    }

    impl GraderSim {
        fn egg_detection(&self, frame: u64, x: f64, y: f64, conf: f64) -> Detection {
            Detection {
                frame_index: frame,
                cx: x,
                cy: y,
                width: 30.0,
                height: 20.0,
                confidence: conf,
            }
        }

        fn column_of(&self, class: WeightClass) -> f64 {
            let i = self.class_order.iter().position(|&c| c == class).unwrap();
            self.columns[i]
        }

        /// One counting egg: enters at x = 20, steps by `speed`, halts with
        /// jitter at its class column, then drops out of view.
        fn counting_egg(
            &self,
            start_frame: u64,
            lane: f64,
            class: WeightClass,
            rng: &mut ChaCha8Rng,
        ) -> Vec<Detection> {
            let col = self.column_of(class);
            let mut dets = Vec::new();
            let mut frame = start_frame;
            let mut x = 20.0;
            while x < col {
                dets.push(self.egg_detection(frame, x, lane, 0.95));
                frame += 1;
                x += self.speed;
            }
            for _ in 0..self.halt_frames {
                let jx = rng.gen_range(-self.jitter..=self.jitter) as f64;
                dets.push(self.egg_detection(frame, col + jx, lane, 0.95));
                frame += 1;
            }
            dets
        }

        /// A full counting session. `noise_rate` is the per-frame chance of a
        /// spurious low-confidence detection. Returns the per-frame log and
        /// the ground-truth class counts.
        pub fn counting_session(
            &self,
            eggs: &[WeightClass],
            seed: u64,
            noise_rate: f64,
        ) -> (super::FrameLog, BTreeMap<WeightClass, u64>) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut log: Vec<Detection> = Vec::new();
            let mut truth: BTreeMap<WeightClass, u64> =
                WeightClass::ALL.iter().map(|&c| (c, 0)).collect();
            for (i, &class) in eggs.iter().enumerate() {
                let lane = self.lanes[i % self.lanes.len()];
                let start = (i as u64) * 6;
                log.extend(self.counting_egg(start, lane, class, &mut rng));
                *truth.get_mut(&class).unwrap() += 1;
            }
            let last_frame = log.iter().map(|d| d.frame_index).max().unwrap_or(0);
            for frame in 0..=last_frame {
                if rng.gen::<f64>() < noise_rate {
                    let x = rng.gen_range(0.0..super::FRAME_WIDTH);
                    let y = rng.gen_range(0.0..super::FRAME_HEIGHT);
                    log.push(Detection {
                        frame_index: frame,
                        cx: x,
                        cy: y,
                        width: 10.0,
                        height: 10.0,
                        confidence: 0.2,
                    });
                }
            }
            (super::group_frames(&log), truth)
        }

        /// A calibration run: small eggs traverse the whole lane, halting at
        /// every spring. Start phases are randomized so only the halt
        /// positions form dense clusters. `noise_rate` adds high-confidence
        /// scattered detections (rejected later by density clustering).
        pub fn calibration_session(
            &self,
            eggs_per_lane: usize,
            seed: u64,
            noise_rate: f64,
        ) -> Vec<Detection> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut log = Vec::new();
            let mut next_start = 0u64;
            for &lane in &self.lanes {
                for _ in 0..eggs_per_lane {
                    let mut frame = next_start;
                    let mut x = rng.gen_range(5.0..45.0);
                    while x < super::FRAME_WIDTH - 10.0 {
                        let at_column = self
                            .columns
                            .iter()
                            .find(|&&c| x < c && x + self.speed >= c)
                            .copied();
                        if let Some(c) = at_column {
                            for _ in 0..self.halt_frames {
                                let jx = rng.gen_range(-self.jitter..=self.jitter) as f64;
                                log.push(self.egg_detection(frame, c + jx, lane, 0.95));
                                frame += 1;
                            }
                            x = c;
                        }
                        log.push(self.egg_detection(frame, x, lane, 0.95));
                        frame += 1;
                        x += self.speed;
                    }
                    next_start += 40;
                }
            }
            let last_frame = log.iter().map(|d| d.frame_index).max().unwrap_or(0);
            let noise_count = (last_frame as f64 * noise_rate) as u64;
            for _ in 0..noise_count {
                log.push(Detection {
                    frame_index: rng.gen_range(0..=last_frame),
                    cx: rng.gen_range(0.0..super::FRAME_WIDTH),
                    cy: rng.gen_range(0.0..super::FRAME_HEIGHT),
                    width: 10.0,
                    height: 10.0,
                    confidence: 0.9,
                });
            }
            log.sort_by_key(|d| d.frame_index);
            log
        }

        /// Calibration settings matched to this simulator's density profile.
        pub fn calibration_config(&self) -> super::CalibrationConfig {
            super::CalibrationConfig {
                eps: 6.0,
                min_pts: 30,
                votes_min: 40,
                max_theta_deg: 5.0,
                roi_half_width: 15.0,
                lane_top: self.lanes.first().copied().unwrap_or(0.0) - 30.0,
                lane_bottom: self.lanes.last().copied().unwrap_or(super::FRAME_HEIGHT) + 30.0,
                ..Default::default()
            }
        }

        pub fn count_config(&self) -> super::CountConfig {
            super::CountConfig { max_dist: 90.0, max_missed: 5, min_confidence: 0.5 }
        }
    }
}
