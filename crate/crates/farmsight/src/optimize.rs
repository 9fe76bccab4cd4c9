//! Black-box maximization of placement coverage.
//!
//! Two search strategies over `[0,1]^dim` gene vectors: CMA-ES for a single
//! best solution and MAP-Elites for a diverse archive keyed by a binary
//! behaviour descriptor. Both clamp genes into the unit box before
//! evaluation and are deterministic per seed.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Genotype;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("objective returned non-finite value {value} at evaluation {evaluation}")]
    NonFiniteFitness { value: f64, evaluation: u64 },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("descriptor length changed from {expected} to {got} during the run")]
    DescriptorLengthChanged { expected: usize, got: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmaesParams {
    /// Initial step size in gene space.
    pub sigma0: f64,
    /// Population size lambda; `None` uses `4 + floor(3 ln dim)`.
    pub population: Option<usize>,
    /// Stop early once best fitness reaches this value.
    pub target_fitness: Option<f64>,
    /// Reinitialize mean, covariance, and paths when the best fitness of the
    /// current run improved by less than `stall_tolerance` over this many
    /// generations. Best-so-far is kept across restarts.
    pub restart_after_stall: Option<u64>,
    pub stall_tolerance: f64,
}

impl Default for CmaesParams {
    fn default() -> Self {
        Self {
            sigma0: 0.3,
            population: None,
            target_fitness: None,
            restart_after_stall: Some(30),
            stall_tolerance: 2e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapElitesParams {
    /// Offspring per iteration after the random init phase.
    pub batch: usize,
    /// Uniform random genotypes evaluated before steady-state batches.
    pub init_random: usize,
    /// Per-gene Gaussian mutation sigma.
    pub mutation_sigma: f64,
}

impl Default for MapElitesParams {
    fn default() -> Self {
        Self { batch: 64, init_random: 2000, mutation_sigma: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub dim: usize,
    pub max_evaluations: u64,
    pub seed: u64,
    #[serde(default)]
    pub cmaes: CmaesParams,
    #[serde(default)]
    pub map_elites: MapElitesParams,
}

impl OptimizerConfig {
    pub fn new(dim: usize, max_evaluations: u64, seed: u64) -> Self {
        Self {
            dim,
            max_evaluations,
            seed,
            cmaes: CmaesParams::default(),
            map_elites: MapElitesParams::default(),
        }
    }

    fn validate(&self) -> Result<(), OptimizeError> {
        if self.dim == 0 {
            return Err(OptimizeError::InvalidConfig("dim must be positive".into()));
        }
        if self.max_evaluations == 0 {
            return Err(OptimizeError::InvalidConfig("max_evaluations must be positive".into()));
        }
        if !(self.cmaes.sigma0 > 0.0 && self.cmaes.sigma0 <= 1.0) {
            return Err(OptimizeError::InvalidConfig(format!(
                "sigma0 must be in (0, 1], got {}",
                self.cmaes.sigma0
            )));
        }
        if let Some(lambda) = self.cmaes.population {
            if lambda < 4 {
                return Err(OptimizeError::InvalidConfig(format!(
                    "population must be >= 4, got {lambda}"
                )));
            }
        }
        if self.map_elites.batch == 0 {
            return Err(OptimizeError::InvalidConfig("batch must be positive".into()));
        }
        if self.map_elites.init_random < self.map_elites.batch {
            return Err(OptimizeError::InvalidConfig(
                "init_random must be >= batch".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionReport {
    pub best: Genotype,
    pub fitness: f64,
    pub evaluations: u64,
    pub seed: u64,
    /// Measured wall time; excluded from serialized reports so reruns with
    /// the same seed export byte-identical results.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// One elite per descriptor cell; replaced only on strict improvement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Elite {
    pub genotype: Genotype,
    pub fitness: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Archive {
    pub cells: BTreeMap<Vec<bool>, Elite>,
    pub evaluations: u64,
    pub seed: u64,
}

impl Archive {
    pub fn best(&self) -> Option<(&Vec<bool>, &Elite)> {
        self.cells
            .iter()
            .max_by(|a, b| a.1.fitness.partial_cmp(&b.1.fitness).unwrap().then(b.0.cmp(a.0)))
    }

    /// CSV export: descriptor bits, fitness, then genes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("descriptor,fitness,genes\n");
        for (desc, elite) in &self.cells {
            let bits: String = desc.iter().map(|&b| if b { '1' } else { '0' }).collect();
            let genes = elite
                .genotype
                .genes
                .iter()
                .map(|g| format!("{g:.17}"))
                .collect::<Vec<_>>()
                .join(";");
            out.push_str(&format!("{bits},{elite_fitness:.17},{genes}\n", elite_fitness = elite.fitness));
        }
        out
    }
}

fn clamp_unit(genes: &mut [f64]) {
    for g in genes.iter_mut() {
        *g = g.clamp(0.0, 1.0);
    }
}

fn evaluate_batch<F>(
    objective: &F,
    batch: &[Vec<f64>],
    evaluations_before: u64,
) -> Result<Vec<f64>, OptimizeError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let fits: Vec<f64> = batch.par_iter().map(|g| objective(g)).collect();
    for (i, &f) in fits.iter().enumerate() {
        if !f.is_finite() {
            return Err(OptimizeError::NonFiniteFitness {
                value: f,
                evaluation: evaluations_before + i as u64 + 1,
            });
        }
    }
    Ok(fits)
}

/// CMA-ES in the standard (mu/mu_w, lambda) formulation with rank-one and
/// rank-mu covariance updates, maximizing `objective` over `[0,1]^dim`.
pub fn cmaes_run<F>(objective: F, config: &OptimizerConfig) -> Result<SolutionReport, OptimizeError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let start = Instant::now();
    let n = config.dim;
    let nf = n as f64;
    let lambda = config
        .cmaes
        .population
        .unwrap_or_else(|| 4 + (3.0 * nf.ln()).floor() as usize);
    let mu = lambda / 2;

    // Log-linear recombination weights.
    let mut weights: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let cc = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let cs = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let cmu = (1.0 - c1)
        .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let damps = 1.0 + 2.0 * (0.0f64).max(((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0) + cs;
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mean = DVector::from_element(n, 0.5);
    let mut sigma = config.cmaes.sigma0;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut ps = DVector::zeros(n);
    let mut pc = DVector::zeros(n);

    let mut best_genes: Vec<f64> = mean.iter().copied().collect();
    let mut best_fitness = f64::NEG_INFINITY;
    let mut evaluations: u64 = 0;
    let mut generation: u64 = 0;
    let mut run_best = f64::NEG_INFINITY;
    let mut run_best_history: std::collections::VecDeque<f64> = std::collections::VecDeque::new();

    while evaluations < config.max_evaluations {
        // Eigendecomposition for sampling: C = B D^2 B^T.
        let eigen = cov.clone().symmetric_eigen();
        let d_sqrt: DVector<f64> = eigen.eigenvalues.map(|v| v.max(1e-20).sqrt());
        let b = &eigen.eigenvectors;

        let batch_size = lambda.min((config.max_evaluations - evaluations) as usize).max(1);
        let mut zs: Vec<DVector<f64>> = Vec::with_capacity(batch_size);
        let mut xs: Vec<Vec<f64>> = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let z = DVector::from_fn(n, |_, _| {
                // Box-Muller on the shared stream keeps sampling reproducible.
                sample_standard_normal(&mut rng)
            });
            let y = b * z.component_mul(&d_sqrt);
            let mut x: Vec<f64> = (&mean + sigma * &y).iter().copied().collect();
            clamp_unit(&mut x);
            zs.push(z);
            xs.push(x);
        }

        let fits = evaluate_batch(&objective, &xs, evaluations)?;
        evaluations += batch_size as u64;
        generation += 1;

        // Sort by fitness descending, stable on sample index.
        let mut order: Vec<usize> = (0..batch_size).collect();
        order.sort_by(|&a, &b| fits[b].partial_cmp(&fits[a]).unwrap().then(a.cmp(&b)));

        if fits[order[0]] > best_fitness {
            best_fitness = fits[order[0]];
            best_genes = xs[order[0]].clone();
        }
        run_best = run_best.max(fits[order[0]]);
        run_best_history.push_back(run_best);
        if let Some(target) = config.cmaes.target_fitness {
            if best_fitness >= target {
                break;
            }
        }
        if batch_size < lambda {
            break; // budget exhausted mid-generation; skip the partial update
        }
        if let Some(stall_limit) = config.cmaes.restart_after_stall {
            while run_best_history.len() > stall_limit as usize {
                run_best_history.pop_front();
            }
            let stalled = run_best_history.len() == stall_limit as usize
                && run_best - run_best_history.front().unwrap() < config.cmaes.stall_tolerance;
            if stalled {
                mean = DVector::from_fn(n, |_, _| rng.gen::<f64>());
                sigma = config.cmaes.sigma0;
                cov = DMatrix::identity(n, n);
                ps = DVector::zeros(n);
                pc = DVector::zeros(n);
                generation = 0;
                run_best = f64::NEG_INFINITY;
                run_best_history.clear();
                continue;
            }
        }

        // Repaired steps: recompute y from the clamped individuals.
        let ys: Vec<DVector<f64>> = xs
            .iter()
            .map(|x| (DVector::from_vec(x.clone()) - &mean) / sigma)
            .collect();
        let _ = zs;

        let y_w: DVector<f64> = order[..mu]
            .iter()
            .zip(&weights)
            .map(|(&idx, &w)| &ys[idx] * w)
            .fold(DVector::zeros(n), |acc, v| acc + v);

        mean += sigma * &y_w;

        // C^{-1/2} y_w for the step-size path.
        let c_inv_sqrt_yw = {
            let bt_y = b.transpose() * &y_w;
            let scaled = DVector::from_fn(n, |i, _| bt_y[i] / d_sqrt[i]);
            b * scaled
        };
        ps = (1.0 - cs) * &ps + (cs * (2.0 - cs) * mu_eff).sqrt() * c_inv_sqrt_yw;

        let ps_norm = ps.norm();
        let hsig = ps_norm
            / (1.0 - (1.0 - cs).powi(2 * generation as i32)).sqrt()
            / chi_n
            < 1.4 + 2.0 / (nf + 1.0);
        let hsig_f = if hsig { 1.0 } else { 0.0 };

        pc = (1.0 - cc) * &pc + hsig_f * (cc * (2.0 - cc) * mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (&idx, &w) in order[..mu].iter().zip(&weights) {
            rank_mu += w * (&ys[idx] * ys[idx].transpose());
        }
        let delta_hsig = (1.0 - hsig_f) * cc * (2.0 - cc);
        cov = (1.0 - c1 - cmu) * &cov
            + c1 * (&pc * pc.transpose() + delta_hsig * &cov)
            + cmu * rank_mu;
        // Symmetrize against accumulated round-off.
        cov = (&cov + cov.transpose()) * 0.5;

        sigma *= ((cs / damps) * (ps_norm / chi_n - 1.0)).exp();
        sigma = sigma.clamp(1e-12, 1e3);
    }

    Ok(SolutionReport {
        best: Genotype::new(best_genes),
        fitness: best_fitness,
        evaluations,
        seed: config.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Marsaglia polar method.
    loop {
        let u: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        let v: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * ((-2.0 * s.ln()) / s).sqrt();
        }
    }
}

/// MAP-Elites: uniform random init, then batches of Gaussian-mutated copies
/// of randomly chosen elites. A cell is replaced only on strict improvement.
pub fn map_elites_run<F, D>(
    objective: F,
    descriptor_fn: D,
    config: &OptimizerConfig,
) -> Result<Archive, OptimizeError>
where
    F: Fn(&[f64]) -> f64 + Sync,
    D: Fn(&[f64]) -> Vec<bool>,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut archive = Archive { cells: BTreeMap::new(), evaluations: 0, seed: config.seed };
    let mut descriptor_len: Option<usize> = None;

    let mut insert = |archive: &mut Archive,
                      genes: Vec<f64>,
                      fitness: f64|
     -> Result<(), OptimizeError> {
        let desc = descriptor_fn(&genes);
        match descriptor_len {
            None => descriptor_len = Some(desc.len()),
            Some(expected) if expected != desc.len() => {
                return Err(OptimizeError::DescriptorLengthChanged { expected, got: desc.len() })
            }
            _ => {}
        }
        match archive.cells.get(&desc) {
            Some(elite) if elite.fitness >= fitness => {}
            _ => {
                archive.cells.insert(desc, Elite { genotype: Genotype::new(genes), fitness });
            }
        }
        Ok(())
    };

    while archive.evaluations < config.max_evaluations {
        let remaining = (config.max_evaluations - archive.evaluations) as usize;
        let batch_size = if archive.evaluations < config.map_elites.init_random as u64 {
            remaining
                .min(config.map_elites.init_random - archive.evaluations as usize)
                .min(config.map_elites.batch.max(256))
        } else {
            remaining.min(config.map_elites.batch)
        };

        let mut batch: Vec<Vec<f64>> = Vec::with_capacity(batch_size);
        if archive.evaluations < config.map_elites.init_random as u64 || archive.cells.is_empty() {
            for _ in 0..batch_size {
                batch.push((0..config.dim).map(|_| rng.gen::<f64>()).collect());
            }
        } else {
            let elites: Vec<&Elite> = archive.cells.values().collect();
            for _ in 0..batch_size {
                let parent = elites[rng.gen_range(0..elites.len())];
                let mut child = parent.genotype.genes.clone();
                // Sparse mutation: each gene flips with probability 1/dim so a
                // child typically differs from its parent in one coordinate,
                // which lets good elites be refined instead of scrambled.
                let mut touched = false;
                for gene in child.iter_mut() {
                    if rng.gen::<f64>() < 1.0 / config.dim as f64 {
                        *gene += config.map_elites.mutation_sigma * sample_standard_normal(&mut rng);
                        touched = true;
                    }
                }
                if !touched {
                    let idx = rng.gen_range(0..config.dim);
                    child[idx] +=
                        config.map_elites.mutation_sigma * sample_standard_normal(&mut rng);
                }
                clamp_unit(&mut child);
                batch.push(child);
            }
        }

        let fits = evaluate_batch(&objective, &batch, archive.evaluations)?;
        archive.evaluations += batch.len() as u64;
        for (genes, fitness) in batch.into_iter().zip(fits) {
            insert(&mut archive, genes, fitness)?;
        }
    }
    Ok(archive)
}
