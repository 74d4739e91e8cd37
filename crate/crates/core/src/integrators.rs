//! Time integrators for the slow-fast system, its limiting scheme and the
//! averaged equation.
//!
//! All schemes treat the slow linear part with the linear implicit Euler
//! resolvent and evaluate the nonlinearity at `(x_n, y_{n+1})`. They differ
//! in how the fast Ornstein-Uhlenbeck component is advanced:
//!
//! * `CoupledModified`: modified Euler with two independent noises, which
//!   preserves `N(0, Lambda^{-1})` for every step size;
//! * `CoupledExpo`: exact OU transition (accelerated exponential Euler);
//! * `Limiting`: the fast component is replaced by a fresh draw from its
//!   invariant law at every step (the `eps -> 0` limit at fixed `dt`);
//! * `Averaged`: deterministic implicit Euler for the averaged equation;
//! * `Reference`: `CoupledExpo` on a grid refined by `RunConfig::refinement`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::noise::{SeedContext, StreamTag};
use crate::nonlinearity::{Nonlinearity, NonlinearitySpec, Workspace};
use crate::spectral::{ModifiedOperators, SpectralField, SpectrumSpec};

pub const DEFAULT_REFINEMENT: usize = 64;
pub const AVERAGED_REFERENCE_STEPS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SchemeKind {
    CoupledModified,
    CoupledExpo,
    Limiting,
    Averaged,
    Reference,
}

impl SchemeKind {
    pub fn is_coupled(self) -> bool {
        matches!(
            self,
            SchemeKind::CoupledModified | SchemeKind::CoupledExpo | SchemeKind::Reference
        )
    }

    pub fn is_stochastic(self) -> bool {
        self != SchemeKind::Averaged
    }
}

/// Decay factor of the modified fast scheme, `(1 + tau lambda)^{-1}`.
#[inline]
pub fn modified_decay(tau: f64, lambda: f64) -> f64 {
    1.0 / (1.0 + tau * lambda)
}

/// Decay factor of the exact OU transition, `exp(-tau lambda)`.
#[inline]
pub fn exact_decay(tau: f64, lambda: f64) -> f64 {
    (-(tau * lambda)).exp()
}

/// Variance `(1 - exp(-2 tau lambda)) / lambda` injected by one exact OU step.
#[inline]
pub fn exact_noise_variance(tau: f64, lambda: f64) -> f64 {
    -(-2.0 * tau * lambda).exp_m1() / lambda
}

/// Slow and fast components.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub x: SpectralField,
    pub y: SpectralField,
}

impl CoupledState {
    pub fn new(x: SpectralField, y: SpectralField) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(Self { x, y })
    }
}

/// One run: `N` steps of size `T / N` for the chosen scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub t_final: f64,
    pub steps: usize,
    pub eps: f64,
    pub scheme: SchemeKind,
    pub x0: SpectralField,
    pub y0: SpectralField,
    /// Grid refinement factor used by `SchemeKind::Reference`.
    pub refinement: usize,
}

impl RunConfig {
    pub fn new(
        t_final: f64,
        steps: usize,
        eps: f64,
        scheme: SchemeKind,
        x0: SpectralField,
        y0: SpectralField,
    ) -> Self {
        Self {
            t_final,
            steps,
            eps,
            scheme,
            x0,
            y0,
            refinement: DEFAULT_REFINEMENT,
        }
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    /// Number of steps actually taken (the refined count for `Reference`).
    pub fn effective_steps(&self) -> usize {
        match self.scheme {
            SchemeKind::Reference => self.steps * self.refinement,
            _ => self.steps,
        }
    }

    pub fn validate(&self, spec: &SpectrumSpec) -> Result<()> {
        ensure_positive("T", self.t_final)?;
        if self.steps == 0 {
            return Err(Error::param("N", "must be a positive integer"));
        }
        if self.scheme.is_coupled() {
            ensure_positive("eps", self.eps)?;
        }
        if self.scheme == SchemeKind::Reference && self.refinement == 0 {
            return Err(Error::param("refinement", "must be positive"));
        }
        spec.check(&self.x0)?;
        spec.check(&self.y0)
    }

    /// Same run with a different step count.
    pub fn with_steps(&self, steps: usize) -> Self {
        Self {
            steps,
            ..self.clone()
        }
    }

    pub fn with_scheme(&self, scheme: SchemeKind) -> Self {
        Self {
            scheme,
            ..self.clone()
        }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }
}

/// Spectrum plus precomputed nonlinearity context.
#[derive(Debug, Clone)]
pub struct Problem {
    spectrum: SpectrumSpec,
    nonlinearity: Nonlinearity,
}

impl Problem {
    pub fn new(spectrum: SpectrumSpec, nonlinearity: NonlinearitySpec) -> Result<Self> {
        let nonlinearity = Nonlinearity::new(nonlinearity, &spectrum)?;
        Ok(Self {
            spectrum,
            nonlinearity,
        })
    }

    pub fn spectrum(&self) -> &SpectrumSpec {
        &self.spectrum
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn modes(&self) -> usize {
        self.spectrum.modes()
    }
}

/// `y' = A_tau y + sqrt(2 dt / eps) (B_tau,1 g1 + B_tau,2 g2)`,
/// `x' = A_dt (x + dt F(x, y'))`.
pub fn step_coupled_modified(
    problem: &Problem,
    dt: f64,
    ops: &ModifiedOperators,
    state: &CoupledState,
    gamma1: &SpectralField,
    gamma2: &SpectralField,
) -> Result<CoupledState> {
    ensure_positive("dt", dt)?;
    let spec = problem.spectrum();
    for f in [&state.x, &state.y, gamma1, gamma2] {
        spec.check(f)?;
    }
    if ops.a_tau.len() != spec.modes() {
        return Err(Error::DimensionMismatch {
            expected: spec.modes(),
            found: ops.a_tau.len(),
        });
    }
    let eps = dt / ops.tau;
    let scale = (2.0 * dt / eps).sqrt();
    let y: Vec<f64> = (0..spec.modes())
        .map(|j| {
            ops.a_tau[j] * state.y.coeffs()[j]
                + scale * (ops.b1[j] * gamma1.coeffs()[j] + ops.b2[j] * gamma2.coeffs()[j])
        })
        .collect();
    slow_update(problem, dt, &state.x, SpectralField::from_vec(y))
}

/// Exact OU transition for the fast component, then the slow update.
pub fn step_coupled_expo(
    problem: &Problem,
    dt: f64,
    eps: f64,
    state: &CoupledState,
    gamma: &SpectralField,
) -> Result<CoupledState> {
    ensure_positive("dt", dt)?;
    ensure_positive("eps", eps)?;
    let spec = problem.spectrum();
    for f in [&state.x, &state.y, gamma] {
        spec.check(f)?;
    }
    let tau = dt / eps;
    let y: Vec<f64> = spec
        .lambdas()
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            exact_decay(tau, l) * state.y.coeffs()[j]
                + exact_noise_variance(tau, l).sqrt() * gamma.coeffs()[j]
        })
        .collect();
    slow_update(problem, dt, &state.x, SpectralField::from_vec(y))
}

/// `x' = A_dt x + dt A_dt F(x, Lambda^{-1/2} gamma)`.
pub fn step_limiting(
    problem: &Problem,
    dt: f64,
    x: &SpectralField,
    gamma: &SpectralField,
) -> Result<SpectralField> {
    ensure_positive("dt", dt)?;
    let y = problem.spectrum().apply_fractional_power(-0.5, gamma)?;
    Ok(slow_update(problem, dt, x, y)?.x)
}

/// `x' = A_dt x + dt A_dt Fbar(x)`.
pub fn step_averaged(problem: &Problem, dt: f64, x: &SpectralField) -> Result<SpectralField> {
    ensure_positive("dt", dt)?;
    let spec = problem.spectrum();
    spec.check(x)?;
    let nl = problem.nonlinearity();
    let mut f = vec![0.0; spec.modes()];
    nl.eval_bar_into(x.coeffs(), &mut f, &mut nl.workspace());
    let next = x
        .coeffs()
        .iter()
        .zip(&f)
        .zip(spec.lambdas())
        .map(|((xj, fj), l)| (xj + dt * fj) / (1.0 + dt * l))
        .collect();
    Ok(SpectralField::from_vec(next))
}

fn slow_update(problem: &Problem, dt: f64, x: &SpectralField, y: SpectralField) -> Result<CoupledState> {
    let spec = problem.spectrum();
    spec.check(x)?;
    let nl = problem.nonlinearity();
    let mut f = vec![0.0; spec.modes()];
    nl.eval_into(x.coeffs(), y.coeffs(), &mut f, &mut nl.workspace());
    let next = x
        .coeffs()
        .iter()
        .zip(&f)
        .zip(spec.lambdas())
        .map(|((xj, fj), l)| (xj + dt * fj) / (1.0 + dt * l))
        .collect();
    Ok(CoupledState {
        x: SpectralField::from_vec(next),
        y,
    })
}

#[derive(Debug, Clone)]
enum FastRule {
    Modified { decay: Vec<f64>, b1: Vec<f64>, b2: Vec<f64> },
    Exact { decay: Vec<f64>, sd: Vec<f64> },
    Invariant { inv_sqrt: Vec<f64> },
    None,
}

/// Precomputed stepping coefficients for one `(problem, config)` pair.
///
/// Sampling is a pure function of `(master_seed, sample_index)`; step `n`
/// reads the noise contexts with `step_index = n`.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    problem: &'a Problem,
    config: RunConfig,
    dt: f64,
    steps: usize,
    slow_denominator: Vec<f64>,
    fast: FastRule,
}

/// Mutable per-trajectory buffers.
#[derive(Debug, Clone)]
pub struct StepBuffers {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    f: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    ws: Workspace,
}

impl<'a> Simulator<'a> {
    pub fn new(problem: &'a Problem, config: &RunConfig) -> Result<Self> {
        let spec = problem.spectrum();
        config.validate(spec)?;
        let steps = config.effective_steps();
        let dt = config.t_final / steps as f64;
        let lambdas = spec.lambdas();
        let fast = match config.scheme {
            SchemeKind::CoupledModified => {
                let tau = dt / config.eps;
                let ops = spec.modified_operators(tau)?;
                let scale = (2.0 * dt / config.eps).sqrt();
                FastRule::Modified {
                    decay: lambdas.iter().map(|&l| modified_decay(tau, l)).collect(),
                    b1: ops.b1.iter().map(|b| scale * b).collect(),
                    b2: ops.b2.iter().map(|b| scale * b).collect(),
                }
            }
            SchemeKind::CoupledExpo | SchemeKind::Reference => {
                let tau = dt / config.eps;
                FastRule::Exact {
                    decay: lambdas.iter().map(|&l| exact_decay(tau, l)).collect(),
                    sd: lambdas.iter().map(|&l| exact_noise_variance(tau, l).sqrt()).collect(),
                }
            }
            SchemeKind::Limiting => FastRule::Invariant {
                inv_sqrt: lambdas.iter().map(|l| l.powf(-0.5)).collect(),
            },
            SchemeKind::Averaged => FastRule::None,
        };
        Ok(Self {
            problem,
            config: config.clone(),
            dt,
            steps,
            slow_denominator: lambdas.iter().map(|l| 1.0 + dt * l).collect(),
            fast,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn buffers(&self) -> StepBuffers {
        let j = self.problem.modes();
        let y = match self.config.scheme {
            SchemeKind::Limiting | SchemeKind::Averaged => vec![0.0; j],
            _ => self.config.y0.coeffs().to_vec(),
        };
        StepBuffers {
            x: self.config.x0.coeffs().to_vec(),
            y,
            f: vec![0.0; j],
            g1: vec![0.0; j],
            g2: vec![0.0; j],
            ws: self.problem.nonlinearity().workspace(),
        }
    }

    /// Advances `buf` by one step using the noise of step `step_index`.
    pub fn step(&self, buf: &mut StepBuffers, master_seed: u64, sample_index: u64, step_index: u64) {
        let ctx = SeedContext::new(master_seed, sample_index, step_index, StreamTag::Gamma1);
        match &self.fast {
            FastRule::Modified { decay, b1, b2 } => {
                ctx.fill_standard_normal(&mut buf.g1);
                ctx.with_step(step_index, StreamTag::Gamma2)
                    .fill_standard_normal(&mut buf.g2);
                for j in 0..buf.y.len() {
                    buf.y[j] = decay[j] * buf.y[j] + (b1[j] * buf.g1[j] + b2[j] * buf.g2[j]);
                }
            }
            FastRule::Exact { decay, sd } => {
                ctx.with_step(step_index, StreamTag::OuExact)
                    .fill_standard_normal(&mut buf.g1);
                for j in 0..buf.y.len() {
                    buf.y[j] = decay[j] * buf.y[j] + sd[j] * buf.g1[j];
                }
            }
            FastRule::Invariant { inv_sqrt } => {
                // the modified scheme tends to Lambda^{-1/2} gamma2 as eps -> 0,
                // so sharing that stream couples the two schemes pathwise
                ctx.with_step(step_index, StreamTag::Gamma2)
                    .fill_standard_normal(&mut buf.g1);
                for j in 0..buf.y.len() {
                    buf.y[j] = inv_sqrt[j] * buf.g1[j];
                }
            }
            FastRule::None => {}
        }
        let nl = self.problem.nonlinearity();
        if matches!(self.fast, FastRule::None) {
            nl.eval_bar_into(&buf.x, &mut buf.f, &mut buf.ws);
        } else {
            nl.eval_into(&buf.x, &buf.y, &mut buf.f, &mut buf.ws);
        }
        for j in 0..buf.x.len() {
            buf.x[j] = (buf.x[j] + self.dt * buf.f[j]) / self.slow_denominator[j];
        }
    }

    /// Runs all steps, calling `observe(step, x, y)` after the initial state
    /// and after every step.
    pub fn run_observed(
        &self,
        master_seed: u64,
        sample_index: u64,
        mut observe: impl FnMut(usize, &[f64], &[f64]),
    ) -> CoupledState {
        let mut buf = self.buffers();
        observe(0, &buf.x, &buf.y);
        for n in 0..self.steps {
            self.step(&mut buf, master_seed, sample_index, n as u64);
            observe(n + 1, &buf.x, &buf.y);
        }
        CoupledState {
            x: SpectralField::from_vec(buf.x),
            y: SpectralField::from_vec(buf.y),
        }
    }

    pub fn run(&self, master_seed: u64, sample_index: u64) -> CoupledState {
        let mut buf = self.buffers();
        for n in 0..self.steps {
            self.step(&mut buf, master_seed, sample_index, n as u64);
        }
        CoupledState {
            x: SpectralField::from_vec(buf.x),
            y: SpectralField::from_vec(buf.y),
        }
    }
}

/// Final state of one trajectory. For `Limiting` the `y` field is the last
/// invariant draw; for `Averaged` it is zero.
pub fn run_trajectory(
    problem: &Problem,
    config: &RunConfig,
    master_seed: u64,
    sample_index: u64,
) -> Result<CoupledState> {
    Ok(Simulator::new(problem, config)?.run(master_seed, sample_index))
}

/// Solution of the averaged equation `x' = -Lambda x + Fbar(x)` at time `t`.
///
/// Closed forms are used when `Fbar` is zero, a constant field, or linear
/// (`Affine`); otherwise implicit Euler with `AVERAGED_REFERENCE_STEPS` steps.
pub fn solve_averaged_reference(problem: &Problem, x0: &SpectralField, t: f64) -> Result<SpectralField> {
    ensure_positive("T", t)?;
    let spec = problem.spectrum();
    spec.check(x0)?;
    let nl = problem.nonlinearity();
    if let NonlinearitySpec::Affine { c_x, .. } = nl.spec() {
        if *c_x != 0.0 {
            let out = x0
                .coeffs()
                .iter()
                .zip(spec.lambdas())
                .map(|(x, l)| ((c_x - l) * t).exp() * x)
                .collect();
            return Ok(SpectralField::from_vec(out));
        }
    }
    if let Some(g) = nl.constant_average() {
        let out = x0
            .coeffs()
            .iter()
            .zip(g.coeffs())
            .zip(spec.lambdas())
            .map(|((x, g), l)| (-t * l).exp() * x - (-t * l).exp_m1() * g / l)
            .collect();
        return Ok(SpectralField::from_vec(out));
    }
    solve_averaged_implicit(problem, x0, t, AVERAGED_REFERENCE_STEPS)
}

/// Averaged implicit Euler with `steps` steps up to time `t`.
pub fn solve_averaged_implicit(
    problem: &Problem,
    x0: &SpectralField,
    t: f64,
    steps: usize,
) -> Result<SpectralField> {
    let config = RunConfig::new(t, steps, 1.0, SchemeKind::Averaged, x0.clone(), x0.clone());
    Ok(run_trajectory(problem, &config, 0, 0)?.x)
}
