use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::functional::FunctionalSpec;
use crate::integrators::{CoupledState, Problem, RunConfig, SchemeKind, Simulator};

/// Sample mean with its standard error `sample_std / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl McEstimate {
    /// Mean and standard error of `values`, summed in index order.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n_samples: n,
        }
    }

    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            stderr: 0.0,
            n_samples: 1,
        }
    }
}

/// Estimates of several statistics of the final state over trajectories
/// `0..n_samples`. Trajectories run in parallel; results are gathered by
/// sample index so the output does not depend on the thread count.
pub fn mc_statistics(
    problem: &Problem,
    config: &RunConfig,
    n_samples: usize,
    master_seed: u64,
    stats: impl Fn(&CoupledState) -> Vec<f64> + Sync,
) -> Result<Vec<McEstimate>> {
    if n_samples < 2 {
        return Err(Error::param("n_samples", "must be at least 2"));
    }
    let sim = Simulator::new(problem, config)?;
    let rows: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| stats(&sim.run(master_seed, i)))
        .collect();
    let k = rows.first().map_or(0, Vec::len);
    Ok((0..k)
        .map(|c| {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            McEstimate::from_samples(&col)
        })
        .collect())
}

/// `E phi(X_N)` by Monte Carlo over sample indices `0..n_samples`.
pub fn mc_estimate(
    problem: &Problem,
    config: &RunConfig,
    phi: &FunctionalSpec,
    n_samples: usize,
    master_seed: u64,
) -> Result<McEstimate> {
    phi.check(problem.spectrum())?;
    Ok(mc_statistics(problem, config, n_samples, master_seed, |s| vec![phi.eval(s.x.coeffs())])?[0])
}

/// Monte Carlo estimate of `E phi(X(T))` from the exact-OU scheme on a grid
/// refined by `refinement` (at least 16).
pub fn reference_weak_value(
    problem: &Problem,
    config: &RunConfig,
    phi: &FunctionalSpec,
    refinement: usize,
    n_samples: usize,
    master_seed: u64,
) -> Result<McEstimate> {
    if refinement < 16 {
        return Err(Error::param("refinement", format!("must be at least 16, got {refinement}")));
    }
    let mut cfg = config.with_scheme(SchemeKind::Reference);
    cfg.refinement = refinement;
    mc_estimate(problem, &cfg, phi, n_samples, master_seed)
}
