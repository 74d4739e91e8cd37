//! Exact Gaussian moments for `F(x, y) = c y`.
//!
//! With this nonlinearity every mode evolves independently and stays
//! Gaussian, both for the continuous system and for every scheme, so weak
//! errors of polynomial or Gaussian-exponential test functions can be
//! computed without sampling. Scheme moments follow the discrete recursion;
//! continuous moments use closed-form means and the matrix exponential of the
//! covariance equation, cross-checked against an adaptive Dormand-Prince
//! solver in the tests.

use crate::error::{ensure_positive, Error, Result};
use crate::integrators::{exact_decay, exact_noise_variance, modified_decay, RunConfig, SchemeKind};
use crate::spectral::{SpectralField, SpectrumSpec};

/// Moments of one mode pair `(x_j, y_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeMoments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
}

pub fn means_x(moments: &[ModeMoments]) -> SpectralField {
    SpectralField::from_vec(moments.iter().map(|m| m.mean_x).collect())
}

pub fn vars_x(moments: &[ModeMoments]) -> Vec<f64> {
    moments.iter().map(|m| m.var_x).collect()
}

/// Exact moments after `n` steps of size `dt` of one mode of the scheme
/// `kind` applied to `F(x, y) = c y`, from Gaussian initial moments `init`.
///
/// `Reference` is treated as `CoupledExpo` at the given `dt`. Means are
/// propagated with the same floating-point operations as the integrator, so
/// without noise they agree with a trajectory bit for bit.
#[allow(clippy::too_many_arguments)]
pub fn second_moment_recursion(
    kind: SchemeKind,
    lambda: f64,
    c: f64,
    eps: f64,
    dt: f64,
    n: usize,
    init: ModeMoments,
) -> Result<ModeMoments> {
    ensure_positive("lambda", lambda)?;
    ensure_positive("dt", dt)?;
    if kind.is_coupled() {
        ensure_positive("eps", eps)?;
    }
    let l = lambda;
    let mut m = init;
    let fast = match kind {
        SchemeKind::CoupledModified => {
            let tau = dt / eps;
            let a = modified_decay(tau, l);
            Some((a, tau * (a * a + a)))
        }
        SchemeKind::CoupledExpo | SchemeKind::Reference => {
            let tau = dt / eps;
            Some((exact_decay(tau, l), exact_noise_variance(tau, l)))
        }
        SchemeKind::Limiting | SchemeKind::Averaged => None,
    };
    let d = 1.0 + dt * l;
    for _ in 0..n {
        let cross = match fast {
            Some((a, s2)) => {
                m.mean_y *= a;
                m.var_y = a * a * m.var_y + s2;
                a * m.cov_xy
            }
            None => {
                m.mean_y = 0.0;
                m.var_y = if kind == SchemeKind::Limiting { 1.0 / l } else { 0.0 };
                0.0
            }
        };
        if kind == SchemeKind::Averaged {
            m.mean_x /= d;
            m.var_x /= d * d;
            m.cov_xy = 0.0;
            continue;
        }
        m.mean_x = (m.mean_x + dt * (c * m.mean_y)) / d;
        m.var_x = (m.var_x + 2.0 * dt * c * cross + dt * dt * c * c * m.var_y) / (d * d);
        m.cov_xy = (cross + dt * c * m.var_y) / d;
    }
    Ok(m)
}

/// Mean of the slow mode after `n` scheme steps from deterministic `(x0, y0)`.
#[allow(clippy::too_many_arguments)]
pub fn scheme_mean_recursion(
    kind: SchemeKind,
    lambda: f64,
    c: f64,
    eps: f64,
    dt: f64,
    n: usize,
    x0: f64,
    y0: f64,
) -> Result<f64> {
    let init = ModeMoments {
        mean_x: x0,
        mean_y: y0,
        ..Default::default()
    };
    Ok(second_moment_recursion(kind, lambda, c, eps, dt, n, init)?.mean_x)
}

/// Per-mode scheme moments at `T` for the run `config`, started from its
/// deterministic `(x0, y0)`.
pub fn scheme_moments(spec: &SpectrumSpec, c: f64, config: &RunConfig) -> Result<Vec<ModeMoments>> {
    config.validate(spec)?;
    let steps = config.effective_steps();
    let dt = config.t_final / steps as f64;
    spec.lambdas()
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let init = ModeMoments {
                mean_x: config.x0.coeffs()[j],
                mean_y: config.y0.coeffs()[j],
                ..Default::default()
            };
            second_moment_recursion(config.scheme, l, c, config.eps, dt, steps, init)
        })
        .collect()
}

/// `int_0^t exp(-a (t - s)) exp(-b s) ds`, stable for any `a, b >= 0`.
pub fn exp_convolution(a: f64, b: f64, t: f64) -> f64 {
    let (lo, gap) = if a <= b { (a, b - a) } else { (b, a - b) };
    let x = gap * t;
    let phi = if x == 0.0 { 1.0 } else { -(-x).exp_m1() / x };
    (-lo * t).exp() * t * phi
}

/// `E x(T) = e^{-lambda T} x0 + c y0 (e^{-lambda T / eps} - e^{-lambda T}) / (lambda (1 - 1/eps))`,
/// with the limit `c y0 T e^{-lambda T}` at `eps = 1`.
pub fn continuous_mean(lambda: f64, c: f64, eps: f64, t: f64, x0: f64, y0: f64) -> f64 {
    (-lambda * t).exp() * x0 + c * y0 * exp_convolution(lambda, lambda / eps, t)
}

/// Moments at time `t` of one mode of the continuous system from Gaussian
/// initial moments `init`.
pub fn continuous_second_moment(lambda: f64, c: f64, eps: f64, t: f64, init: ModeMoments) -> Result<ModeMoments> {
    ensure_positive("lambda", lambda)?;
    ensure_positive("eps", eps)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("T", "must be finite and >= 0"));
    }
    let l = lambda;
    let mut g = covariance_generator(l, c, eps);
    g.iter_mut().flatten().for_each(|v| *v *= t);
    let e = expm(&g);
    let v0 = [init.var_x, init.cov_xy, init.var_y, 1.0];
    let flow = |i: usize| (0..4).map(|k| e[i][k] * v0[k]).sum::<f64>();
    Ok(ModeMoments {
        mean_x: continuous_mean(l, c, eps, t, init.mean_x, init.mean_y),
        mean_y: (-l * t / eps).exp() * init.mean_y,
        var_x: flow(0),
        cov_xy: flow(1),
        var_y: flow(2),
    })
}

/// Per-mode moments at `t` of the continuous system from deterministic `(x0, y0)`.
pub fn continuous_moments(
    spec: &SpectrumSpec,
    c: f64,
    eps: f64,
    t: f64,
    x0: &SpectralField,
    y0: &SpectralField,
) -> Result<Vec<ModeMoments>> {
    ensure_positive("T", t)?;
    spec.check(x0)?;
    spec.check(y0)?;
    spec.lambdas()
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let init = ModeMoments {
                mean_x: x0.coeffs()[j],
                mean_y: y0.coeffs()[j],
                ..Default::default()
            };
            continuous_second_moment(l, c, eps, t, init)
        })
        .collect()
}

/// Generator of `(var_x, cov_xy, var_y, 1)`.
fn covariance_generator(l: f64, c: f64, eps: f64) -> [[f64; 4]; 4] {
    [
        [-2.0 * l, 2.0 * c, 0.0, 0.0],
        [0.0, -l - l / eps, c, 0.0],
        [0.0, 0.0, -2.0 * l / eps, 2.0 / eps],
        [0.0; 4],
    ]
}

/// Averaged limit of `F(x, y) = c y`: `Fbar = 0`, so `x(t) = exp(-t Lambda) x0`.
pub fn averaged_moments(spec: &SpectrumSpec, t: f64, x0: &SpectralField) -> Result<Vec<ModeMoments>> {
    spec.check(x0)?;
    Ok(spec
        .lambdas()
        .iter()
        .zip(x0.coeffs())
        .map(|(l, x)| ModeMoments {
            mean_x: (-l * t).exp() * x,
            var_y: 1.0 / l,
            ..Default::default()
        })
        .collect())
}

fn matmul<const N: usize>(a: &[[f64; N]; N], b: &[[f64; N]; N]) -> [[f64; N]; N] {
    let mut out = [[0.0; N]; N];
    for i in 0..N {
        for k in 0..N {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..N {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Matrix exponential by scaling and squaring with a degree-20 Taylor
/// polynomial on a matrix of norm at most 1/2.
pub fn expm<const N: usize>(m: &[[f64; N]; N]) -> [[f64; N]; N] {
    let norm = m
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(squarings);
    let mut a = *m;
    a.iter_mut().flatten().for_each(|v| *v *= scale);
    let mut result = [[0.0; N]; N];
    let mut term = [[0.0; N]; N];
    for i in 0..N {
        result[i][i] = 1.0;
        term[i][i] = 1.0;
    }
    for k in 1..=20 {
        term = matmul(&term, &a);
        term.iter_mut().flatten().for_each(|v| *v /= k as f64);
        for i in 0..N {
            for j in 0..N {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    result
}

/// Adaptive Dormand-Prince 5(4) integration of `y' = f(t, y)` from `t0` to `t1`.
pub fn dopri5(
    f: impl Fn(f64, &[f64], &mut [f64]),
    t0: f64,
    y0: &[f64],
    t1: f64,
    rtol: f64,
    atol: f64,
) -> Result<Vec<f64>> {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    // fifth-order weights minus fourth-order weights
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    if !(t1 >= t0) {
        return Err(Error::param("t1", "must not precede t0"));
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = ((t1 - t0) * 1e-3).max(f64::MIN_POSITIVE);
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > 50_000_000 {
            return Err(Error::Unsupported("dopri5: step budget exhausted".into()));
        }
        h = h.min(t1 - t);
        f(t, &y, &mut k[0]);
        for s in 1..7 {
            for i in 0..n {
                stage[i] = y[i] + h * (0..s).map(|r| A[s][r] * k[r][i]).sum::<f64>();
            }
            f(t + C[s] * h, &stage, &mut k[s]);
        }
        y_new.copy_from_slice(&stage);
        let mut err = 0.0f64;
        for i in 0..n {
            let e = h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y_new);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-15 * t1.abs().max(1.0) {
            return Err(Error::Unsupported("dopri5: step size underflow".into()));
        }
    }
    Ok(y)
}
