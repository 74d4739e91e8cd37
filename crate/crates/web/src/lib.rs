//! Browser bindings for the scheme laboratory.
//!
//! Each export has a plain Rust counterpart returning `Result<_, String>` so it
//! can be exercised natively.

use apspde::harness::experiments::{curve_fit, dyadic_ladder, weak_error_curve, McSettings, OracleMode};
use apspde::harness::FunctionalSpec;
use apspde::integrators::{Problem, RunConfig, SchemeKind, Simulator};
use apspde::nonlinearity::{GridTransform, NonlinearitySpec};
use apspde::spectral::{SpectralField, SpectrumSpec};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn scheme_from(name: &str) -> Result<SchemeKind, String> {
    match name {
        "modified" => Ok(SchemeKind::CoupledModified),
        "expo" => Ok(SchemeKind::CoupledExpo),
        "limiting" => Ok(SchemeKind::Limiting),
        "averaged" => Ok(SchemeKind::Averaged),
        other => Err(format!("unknown scheme '{other}'")),
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// One trajectory with the pointwise-square coupling, sampled on the grid.
///
/// Returns `[xi_0.., x(T, xi).., y(T, xi)..]`, each block of `points` values.
pub fn field_snapshot(
    modes: usize,
    points: usize,
    steps: usize,
    eps: f64,
    c: f64,
    scheme: &str,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let spec = SpectrumSpec::dirichlet(modes).map_err(err)?;
    let problem = Problem::new(spec, NonlinearitySpec::PointwiseSquare { c }).map_err(err)?;
    let x0 = SpectralField::basis(modes, 1).map_err(err)?;
    let config = RunConfig::new(1.0, steps, eps, scheme_from(scheme)?, x0, SpectralField::zeros(modes));
    let sim = Simulator::new(&problem, &config).map_err(err)?;
    let state = sim.run(seed, 0);
    let grid = GridTransform::with_points(modes, points).map_err(err)?;
    let mut out = grid.nodes().to_vec();
    out.extend(grid.backward(&state.x).map_err(err)?);
    out.extend(grid.backward(&state.y).map_err(err)?);
    Ok(out)
}

/// One-step variance map started from the invariant law, for the modified
/// and the standard semi-implicit scheme.
///
/// Returns `[lambda_j.., lambda_j v'_modified.., lambda_j v'_standard..]`.
pub fn variance_map(modes: usize, tau: f64) -> Result<Vec<f64>, String> {
    let spec = SpectrumSpec::dirichlet(modes).map_err(err)?;
    let ops = spec.modified_operators(tau).map_err(err)?;
    let lambdas = spec.lambdas();
    let mut out = lambdas.to_vec();
    out.extend(lambdas.iter().enumerate().map(|(j, l)| ops.a_tau[j].powi(2) + l * ops.noise_variance(j)));
    out.extend(lambdas.iter().enumerate().map(|(j, l)| ops.a_tau[j].powi(2) * (1.0 + 2.0 * tau * l)));
    Ok(out)
}

/// Exact weak-error curve of the linear-in-y model against the moment oracle.
pub fn weak_error_json(modes: usize, c: f64, eps: f64, phi: &str, coarsest: i32, finest: i32) -> Result<String, String> {
    let phi = match phi {
        "norm_squared" => FunctionalSpec::NormSquared,
        "bounded_exp" => FunctionalSpec::BoundedExp,
        "first_mode" => FunctionalSpec::linear(SpectralField::basis(modes, 1).map_err(err)?),
        other => return Err(format!("unknown functional '{other}'")),
    };
    if !(1..=20).contains(&coarsest) || !(coarsest + 2..=20).contains(&finest) {
        return Err("dt ladder needs 1 <= coarsest, coarsest + 2 <= finest <= 20".into());
    }
    let spec = SpectrumSpec::dirichlet(modes).map_err(err)?;
    let problem = Problem::new(spec, NonlinearitySpec::LinearInY { c }).map_err(err)?;
    let x0 = SpectralField::basis(modes, 1).map_err(err)?;
    let base = RunConfig::new(1.0, 1, eps, SchemeKind::CoupledModified, x0.clone(), x0);
    let curve = weak_error_curve(
        &problem,
        &base,
        &dyadic_ladder(coarsest, finest),
        &phi,
        OracleMode::MomentOracle,
        McSettings::default(),
    )
    .map_err(err)?;
    let fit = curve_fit(&curve, false).ok();
    Ok(json!({
        "dt": curve.iter().map(|p| p.dt).collect::<Vec<_>>(),
        "error": curve.iter().map(|p| p.error).collect::<Vec<_>>(),
        "slope": fit.as_ref().map(|f| f.slope),
        "r2": fit.as_ref().map(|f| f.r_squared),
    })
    .to_string())
}

#[wasm_bindgen(js_name = fieldSnapshot)]
pub fn field_snapshot_js(
    modes: usize,
    points: usize,
    steps: usize,
    eps: f64,
    c: f64,
    scheme: &str,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    field_snapshot(modes, points, steps, eps, c, scheme, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = varianceMap)]
pub fn variance_map_js(modes: usize, tau: f64) -> Result<Vec<f64>, JsError> {
    variance_map(modes, tau).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = weakErrorCurve)]
pub fn weak_error_js(modes: usize, c: f64, eps: f64, phi: &str, coarsest: i32, finest: i32) -> Result<String, JsError> {
    weak_error_json(modes, c, eps, phi, coarsest, finest).map_err(|e| JsError::new(&e))
}
