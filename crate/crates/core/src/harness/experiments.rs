//! Weak-error curves, the asymptotic-preserving diagram, invariant-measure
//! checks, the uniform sweep over `(eps, dt)` and the averaging curve.
//!
//! Whenever the nonlinearity is `LinearInY` and the oracle mode allows it,
//! expectations come from the exact moment recursions and carry no sampling
//! error; otherwise they are Monte Carlo estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::functional::FunctionalSpec;
use crate::harness::mc::{mc_estimate, mc_statistics, reference_weak_value, McEstimate};
use crate::harness::rate::{fit_rate, RateFit};
use crate::integrators::{
    solve_averaged_implicit, solve_averaged_reference, Problem, RunConfig, SchemeKind,
    AVERAGED_REFERENCE_STEPS,
};
use crate::moments::{averaged_moments, continuous_moments, scheme_moments};
use crate::noise::{SeedContext, StreamTag};
use crate::nonlinearity::NonlinearitySpec;
use crate::spectral::{SpectralField, SpectrumSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OracleMode {
    /// Exact moments of scheme and continuous system (`LinearInY` only).
    MomentOracle,
    /// Monte Carlo against the exact-OU scheme on a refined grid.
    RefinedReference,
    /// Monte Carlo against `phi` of the deterministic averaged solution.
    AveragedReference,
}

/// Sampling parameters shared by the Monte Carlo paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub n_samples: usize,
    pub master_seed: u64,
    pub refinement: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            master_seed: 0,
            refinement: crate::integrators::DEFAULT_REFINEMENT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub dt: f64,
    pub steps: usize,
    pub value: f64,
    pub truth: f64,
    pub error: f64,
    pub stderr: f64,
    /// Known bias of the truth value; `NaN` when it cannot be computed.
    pub oracle_bias: f64,
}

/// `N = T / dt`, rejecting steps that do not divide `T`.
pub fn steps_for_dt(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    let n = t_final / dt;
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-9 * r {
        return Err(Error::InvalidConfig(format!("T / dt = {n} is not an integer")));
    }
    Ok(r as usize)
}

/// Step counts for a strictly decreasing ladder of step sizes.
pub fn ladder_steps(t_final: f64, dt_list: &[f64]) -> Result<Vec<usize>> {
    if dt_list.is_empty() {
        return Err(Error::InvalidConfig("empty dt ladder".into()));
    }
    if dt_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidConfig("dt ladder must be strictly decreasing".into()));
    }
    dt_list.iter().map(|&dt| steps_for_dt(t_final, dt)).collect()
}

/// Dyadic ladder `2^{-from}, ..., 2^{-to}`.
pub fn dyadic_ladder(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 0.5f64.powi(k)).collect()
}

fn linear_c(problem: &Problem) -> Option<f64> {
    match problem.nonlinearity().spec() {
        NonlinearitySpec::LinearInY { c } => Some(*c),
        _ => None,
    }
}

fn require_linear(problem: &Problem) -> Result<f64> {
    linear_c(problem).ok_or_else(|| {
        Error::Unsupported(format!(
            "the moment oracle needs LINEAR_IN_Y, got {}",
            problem.nonlinearity().spec().name()
        ))
    })
}

/// Exact `E phi` of the continuous slow component at `config.t_final`
/// (coupled schemes) or of the averaged solution (limiting, averaged).
fn moment_truth(problem: &Problem, c: f64, config: &RunConfig, phi: &FunctionalSpec) -> Result<f64> {
    let spec = problem.spectrum();
    let m = if config.scheme.is_coupled() {
        continuous_moments(spec, c, config.eps, config.t_final, &config.x0, &config.y0)?
    } else {
        averaged_moments(spec, config.t_final, &config.x0)?
    };
    Ok(phi.moment_expectation(&m))
}

/// Exact `E phi(X_N)` of the scheme in `config` for `LinearInY`.
pub fn moment_scheme_value(problem: &Problem, config: &RunConfig, phi: &FunctionalSpec) -> Result<f64> {
    let c = require_linear(problem)?;
    Ok(phi.moment_expectation(&scheme_moments(problem.spectrum(), c, config)?))
}

/// `phi` of the averaged solution at `T` and an estimate of its bias.
pub fn averaged_truth(problem: &Problem, config: &RunConfig, phi: &FunctionalSpec) -> Result<(f64, f64)> {
    let xbar = solve_averaged_reference(problem, &config.x0, config.t_final)?;
    let value = phi.eval(xbar.coeffs());
    let closed_form = problem.nonlinearity().constant_average().is_some()
        || matches!(problem.nonlinearity().spec(), NonlinearitySpec::Affine { .. });
    let bias = if closed_form {
        0.0
    } else {
        let coarse = solve_averaged_implicit(problem, &config.x0, config.t_final, AVERAGED_REFERENCE_STEPS / 2)?;
        (phi.eval(coarse.coeffs()) - value).abs()
    };
    Ok((value, bias))
}

/// Weak error of `base.scheme` for each step size in `dt_list`.
pub fn weak_error_curve(
    problem: &Problem,
    base: &RunConfig,
    dt_list: &[f64],
    phi: &FunctionalSpec,
    oracle: OracleMode,
    mc: McSettings,
) -> Result<Vec<CurvePoint>> {
    let steps = ladder_steps(base.t_final, dt_list)?;
    phi.check(problem.spectrum())?;
    base.validate(problem.spectrum())?;
    let spec = problem.spectrum();
    let mut out = Vec::with_capacity(steps.len());
    for (&dt, &n) in dt_list.iter().zip(&steps) {
        let cfg = base.with_steps(n);
        let point = match oracle {
            OracleMode::MomentOracle => {
                let c = require_linear(problem)?;
                let value = phi.moment_expectation(&scheme_moments(spec, c, &cfg)?);
                let truth = moment_truth(problem, c, &cfg, phi)?;
                CurvePoint {
                    dt,
                    steps: n,
                    value,
                    truth,
                    error: (value - truth).abs(),
                    stderr: 0.0,
                    oracle_bias: 0.0,
                }
            }
            OracleMode::RefinedReference => {
                let est = mc_estimate(problem, &cfg, phi, mc.n_samples, mc.master_seed)?;
                let reference =
                    reference_weak_value(problem, &cfg, phi, mc.refinement, mc.n_samples, mc.master_seed)?;
                let oracle_bias = match linear_c(problem) {
                    Some(c) => {
                        let mut rc = cfg.with_scheme(SchemeKind::Reference);
                        rc.refinement = mc.refinement;
                        let r = phi.moment_expectation(&scheme_moments(spec, c, &rc)?);
                        (r - moment_truth(problem, c, &cfg, phi)?).abs()
                    }
                    None => f64::NAN,
                };
                CurvePoint {
                    dt,
                    steps: n,
                    value: est.mean,
                    truth: reference.mean,
                    error: (est.mean - reference.mean).abs(),
                    stderr: est.stderr.hypot(reference.stderr),
                    oracle_bias,
                }
            }
            OracleMode::AveragedReference => {
                let est = mc_estimate(problem, &cfg, phi, mc.n_samples, mc.master_seed)?;
                let (truth, oracle_bias) = averaged_truth(problem, &cfg, phi)?;
                CurvePoint {
                    dt,
                    steps: n,
                    value: est.mean,
                    truth,
                    error: (est.mean - truth).abs(),
                    stderr: est.stderr,
                    oracle_bias,
                }
            }
        };
        out.push(point);
    }
    Ok(out)
}

pub fn curve_fit(curve: &[CurvePoint], drop_coarsest: bool) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.dt, p.error)).collect();
    fit_rate(&pts, drop_coarsest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApRow {
    pub eps: f64,
    pub coupled: f64,
    pub limiting: f64,
    pub gap: f64,
    pub stderr: f64,
}

/// `|E phi(X_N^{eps, dt}) - E phi(X_N^{dt})|` between the coupled scheme of
/// `base` and the limiting scheme, for each `eps`. Exact for `LinearInY`;
/// otherwise both sides are sampled with the same seeds, which couples them
/// pathwise.
pub fn ap_diagram(
    problem: &Problem,
    base: &RunConfig,
    eps_list: &[f64],
    phi: &FunctionalSpec,
    mc: McSettings,
) -> Result<Vec<ApRow>> {
    if !base.scheme.is_coupled() {
        return Err(Error::InvalidConfig("the AP diagram needs a coupled scheme".into()));
    }
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig("empty eps list".into()));
    }
    phi.check(problem.spectrum())?;
    let limiting_cfg = base.with_scheme(SchemeKind::Limiting);
    if linear_c(problem).is_some() {
        let limiting = moment_scheme_value(problem, &limiting_cfg, phi)?;
        return eps_list
            .iter()
            .map(|&eps| {
                let coupled = moment_scheme_value(problem, &base.with_eps(eps), phi)?;
                Ok(ApRow {
                    eps,
                    coupled,
                    limiting,
                    gap: (coupled - limiting).abs(),
                    stderr: 0.0,
                })
            })
            .collect();
    }
    let limiting = mc_estimate(problem, &limiting_cfg, phi, mc.n_samples, mc.master_seed)?;
    eps_list
        .iter()
        .map(|&eps| {
            let cfg = base.with_eps(eps);
            // paired differences: same sample indices, same noise streams
            let diff = paired_difference(problem, &cfg, &limiting_cfg, phi, mc)?;
            Ok(ApRow {
                eps,
                coupled: limiting.mean + diff.mean,
                limiting: limiting.mean,
                gap: diff.mean.abs(),
                stderr: diff.stderr,
            })
        })
        .collect()
}

/// Monte Carlo estimate of `E[phi(X_a) - phi(X_b)]` over common samples.
pub fn paired_difference(
    problem: &Problem,
    a: &RunConfig,
    b: &RunConfig,
    phi: &FunctionalSpec,
    mc: McSettings,
) -> Result<McEstimate> {
    use crate::integrators::Simulator;
    use rayon::prelude::*;
    if mc.n_samples < 2 {
        return Err(Error::param("n_samples", "must be at least 2"));
    }
    let sa = Simulator::new(problem, a)?;
    let sb = Simulator::new(problem, b)?;
    let values: Vec<f64> = (0..mc.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            phi.eval(sa.run(mc.master_seed, i).x.coeffs()) - phi.eval(sb.run(mc.master_seed, i).x.coeffs())
        })
        .collect();
    Ok(McEstimate::from_samples(&values))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantRow {
    pub tau: f64,
    /// 1-based mode index.
    pub mode: usize,
    pub lambda: f64,
    /// `|map(1/lambda) - 1/lambda|` for the modified scheme.
    pub residual: f64,
    pub relative_residual: f64,
    /// Same for the standard semi-implicit map `v' = a^2 v + 2 tau a^2`.
    pub standard_residual: f64,
    pub empirical: Option<McEstimate>,
}

/// Optional sampling check: `n_samples` independent chains started from the
/// invariant law, each advanced `steps` times by the modified fast scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalSettings {
    pub n_samples: usize,
    pub steps: usize,
    pub master_seed: u64,
}

/// Fixed-point residuals of the one-step variance map at `v = 1/lambda_j`.
pub fn invariant_measure_check(
    spec: &SpectrumSpec,
    tau_list: &[f64],
    empirical: Option<EmpiricalSettings>,
) -> Result<Vec<InvariantRow>> {
    let mut rows = Vec::new();
    for &tau in tau_list {
        let ops = spec.modified_operators(tau)?;
        let emp = match empirical {
            Some(e) => Some(empirical_variances(spec, tau, e)?),
            None => None,
        };
        for (j, &l) in spec.lambdas().iter().enumerate() {
            let v = 1.0 / l;
            let a = ops.a_tau[j];
            let modified = a * a * v + ops.noise_variance(j);
            let standard = a * a * v + 2.0 * tau * a * a;
            rows.push(InvariantRow {
                tau,
                mode: j + 1,
                lambda: l,
                residual: (modified - v).abs(),
                relative_residual: (modified - v).abs() / v,
                standard_residual: (standard - v).abs(),
                empirical: emp.as_ref().map(|e| e[j]),
            });
        }
    }
    Ok(rows)
}

fn empirical_variances(spec: &SpectrumSpec, tau: f64, e: EmpiricalSettings) -> Result<Vec<McEstimate>> {
    use rayon::prelude::*;
    if e.n_samples < 2 {
        return Err(Error::param("n_samples", "must be at least 2"));
    }
    let ops = spec.modified_operators(tau)?;
    let j = spec.modes();
    let scale = (2.0 * tau).sqrt();
    let inv_sqrt: Vec<f64> = spec.lambdas().iter().map(|l| l.powf(-0.5)).collect();
    let rows: Vec<Vec<f64>> = (0..e.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut y = vec![0.0; j];
            let (mut g1, mut g2) = (vec![0.0; j], vec![0.0; j]);
            SeedContext::new(e.master_seed, i, 0, StreamTag::Initial).fill_standard_normal(&mut y);
            y.iter_mut().zip(&inv_sqrt).for_each(|(v, s)| *v *= s);
            for n in 0..e.steps as u64 {
                let ctx = SeedContext::new(e.master_seed, i, n, StreamTag::Gamma1);
                ctx.fill_standard_normal(&mut g1);
                ctx.with_step(n, StreamTag::Gamma2).fill_standard_normal(&mut g2);
                for k in 0..j {
                    y[k] = ops.a_tau[k] * y[k] + scale * (ops.b1[k] * g1[k] + ops.b2[k] * g2[k]);
                }
            }
            y.iter().map(|v| v * v).collect()
        })
        .collect();
    Ok((0..j)
        .map(|k| McEstimate::from_samples(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub dt: f64,
    pub value: f64,
    pub reference: f64,
    pub error: f64,
    pub stderr: f64,
    /// `|reference - exact|` when an exact oracle exists, else `NaN`.
    pub oracle_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `(dt, max over eps of the error)`.
    pub max_errors: Vec<(f64, f64)>,
    pub fit: Option<RateFit>,
}

impl SweepReport {
    pub fn max_oracle_bias(&self) -> f64 {
        self.rows.iter().map(|r| r.oracle_bias).fold(f64::NAN, f64::max)
    }
}

/// Weak error of `base.scheme` against the refined exact-OU reference on the
/// grid `eps_list x dt_list`, with the max over `eps` per `dt` and its fit.
pub fn uniform_sweep(
    problem: &Problem,
    base: &RunConfig,
    eps_list: &[f64],
    dt_list: &[f64],
    phi: &FunctionalSpec,
    mc: McSettings,
    drop_coarsest: bool,
) -> Result<SweepReport> {
    let steps = ladder_steps(base.t_final, dt_list)?;
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig("empty eps list".into()));
    }
    if mc.refinement < 16 {
        return Err(Error::param("refinement", "must be at least 16"));
    }
    phi.check(problem.spectrum())?;
    let spec = problem.spectrum();
    let mut rows = Vec::new();
    for &eps in eps_list {
        for (&dt, &n) in dt_list.iter().zip(&steps) {
            let cfg = base.with_eps(eps).with_steps(n);
            cfg.validate(spec)?;
            let mut rc = cfg.with_scheme(SchemeKind::Reference);
            rc.refinement = mc.refinement;
            let row = match linear_c(problem) {
                Some(c) => {
                    let value = phi.moment_expectation(&scheme_moments(spec, c, &cfg)?);
                    let reference = phi.moment_expectation(&scheme_moments(spec, c, &rc)?);
                    let exact = moment_truth(problem, c, &cfg, phi)?;
                    SweepRow {
                        eps,
                        dt,
                        value,
                        reference,
                        error: (value - reference).abs(),
                        stderr: 0.0,
                        oracle_bias: (reference - exact).abs(),
                    }
                }
                None => {
                    let est = mc_estimate(problem, &cfg, phi, mc.n_samples, mc.master_seed)?;
                    let r = mc_estimate(problem, &rc, phi, mc.n_samples, mc.master_seed)?;
                    SweepRow {
                        eps,
                        dt,
                        value: est.mean,
                        reference: r.mean,
                        error: (est.mean - r.mean).abs(),
                        stderr: est.stderr.hypot(r.stderr),
                        oracle_bias: f64::NAN,
                    }
                }
            };
            rows.push(row);
        }
    }
    let max_errors: Vec<(f64, f64)> = dt_list
        .iter()
        .map(|&dt| {
            let m = rows.iter().filter(|r| r.dt == dt).map(|r| r.error).fold(0.0, f64::max);
            (dt, m)
        })
        .collect();
    let fit = if max_errors.len() >= 3 { fit_rate(&max_errors, drop_coarsest).ok() } else { None };
    Ok(SweepReport { rows, max_errors, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragingRow {
    pub eps: f64,
    /// `|E phi(X^eps(T)) - phi(Xbar(T))|` from the exact moments.
    pub error: f64,
    /// Same with the scheme at `scheme_steps` steps in place of `X^eps(T)`.
    pub scheme_error: f64,
}

/// Averaging error in `eps` for `LinearInY`, where `Fbar = 0`.
pub fn averaging_curve(
    problem: &Problem,
    base: &RunConfig,
    eps_list: &[f64],
    phi: &FunctionalSpec,
    scheme_steps: usize,
) -> Result<Vec<AveragingRow>> {
    let c = require_linear(problem)?;
    let spec = problem.spectrum();
    phi.check(spec)?;
    let xbar = averaged_moments(spec, base.t_final, &base.x0)?;
    let target = phi.moment_expectation(&xbar);
    eps_list
        .iter()
        .map(|&eps| {
            let exact = continuous_moments(spec, c, eps, base.t_final, &base.x0, &base.y0)?;
            let cfg = base.with_eps(eps).with_steps(scheme_steps);
            let scheme = phi.moment_expectation(&scheme_moments(spec, c, &cfg)?);
            Ok(AveragingRow {
                eps,
                error: (phi.moment_expectation(&exact) - target).abs(),
                scheme_error: (scheme - target).abs(),
            })
        })
        .collect()
}

/// Default initial data: `x0 = e_1`, `y0 = 0`.
pub fn default_initial(modes: usize) -> (SpectralField, SpectralField) {
    let mut x0 = SpectralField::zeros(modes);
    if modes > 0 {
        x0.coeffs_mut()[0] = 1.0;
    }
    (x0, SpectralField::zeros(modes))
}

/// Sampled per-mode statistics used to cross-check the moment oracle:
/// the mean of `x_j` and the mean of `(x_j - m_j)^2` for given centers `m_j`.
pub fn sampled_mode_moments(
    problem: &Problem,
    config: &RunConfig,
    centers: &[f64],
    mc: McSettings,
) -> Result<(Vec<McEstimate>, Vec<McEstimate>)> {
    let j = problem.modes();
    if centers.len() != j {
        return Err(Error::DimensionMismatch {
            expected: j,
            found: centers.len(),
        });
    }
    let est = mc_statistics(problem, config, mc.n_samples, mc.master_seed, |s| {
        let x = s.x.coeffs();
        x.iter()
            .copied()
            .chain(x.iter().zip(centers).map(|(v, m)| (v - m).powi(2)))
            .collect()
    })?;
    let (means, vars) = est.split_at(j);
    Ok((means.to_vec(), vars.to_vec()))
}
