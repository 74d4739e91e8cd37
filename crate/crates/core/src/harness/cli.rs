use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Resolved};
use crate::harness::experiments::{
    ap_diagram, curve_fit, dyadic_ladder, invariant_measure_check, uniform_sweep, weak_error_curve,
    EmpiricalSettings, OracleMode,
};
use crate::harness::output::{fmt_f64, write_outputs, Csv};
use crate::harness::rate::RateFit;
use crate::integrators::Simulator;
use crate::nonlinearity::NonlinearitySpec;
use crate::spectral::SpectrumSpec;

#[derive(Debug, Parser)]
#[command(name = "apspde", version, about = "Slow-fast SPDE scheme laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (overrides the config).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump one trajectory to trajectory.csv.
    Simulate(Common),
    /// Weak-error curve over a dt ladder with a rate fit.
    WeakError(Common),
    /// Gap between the coupled and the limiting scheme as eps decreases.
    ApTest(Common),
    /// Fixed-point residuals of the fast variance map.
    InvariantTest(Common),
    /// Weak error over an (eps, dt) grid and the fit of its max over eps.
    UniformSweep(Common),
}

/// Runs the command line `argv` (including the program name) and returns the
/// process exit code. Nothing is written unless the whole run succeeds.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    if let Some(d) = &common.output_dir {
        cfg.output_dir = d.clone();
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<PathBuf> {
    let (common, name) = match &command {
        Command::Simulate(c) => (c, "simulate"),
        Command::WeakError(c) => (c, "weak-error"),
        Command::ApTest(c) => (c, "ap-test"),
        Command::InvariantTest(c) => (c, "invariant-test"),
        Command::UniformSweep(c) => (c, "uniform-sweep"),
    };
    let cfg = load(common)?;
    let resolved = cfg.resolve()?;
    let threads = cfg.threads.unwrap_or_else(rayon::current_num_threads);
    if threads == 0 {
        return Err(Error::param("threads", "must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let files = pool.install(|| match command {
        Command::Simulate(_) => simulate(&cfg, &resolved),
        Command::WeakError(_) => weak_error(&cfg, &resolved),
        Command::ApTest(_) => ap_test(&cfg, &resolved),
        Command::InvariantTest(_) => invariant_test(&cfg, &resolved),
        Command::UniformSweep(_) => sweep(&cfg, &resolved),
    })?;
    let mut files = files;
    for (fname, body) in files.iter_mut() {
        if fname == "summary.json" {
            let mut v: serde_json::Value = serde_json::from_str(body).expect("summary is json");
            v["command"] = json!(name);
            v["config"] = cfg.to_json();
            *body = serde_json::to_string_pretty(&v).expect("json") + "\n";
        }
    }
    write_outputs(&cfg.output_dir, &files)?;
    Ok(cfg.output_dir.clone())
}

type Files = Vec<(String, String)>;

fn fit_json(fit: Option<&RateFit>) -> serde_json::Value {
    match fit {
        Some(f) => json!({
            "slope": fmt_f64(f.slope),
            "intercept": fmt_f64(f.intercept),
            "r2": fmt_f64(f.r_squared),
            "points": f.points.len(),
        }),
        None => serde_json::Value::Null,
    }
}

fn simulate(cfg: &ExperimentConfig, r: &Resolved) -> Result<Files> {
    let sim = Simulator::new(&r.problem, &r.run)?;
    let mut csv = Csv::new(&["step", "mode", "x", "y"]);
    let fin = sim.run_observed(cfg.master_seed, cfg.sample_index, |n, x, y| {
        for j in 0..x.len() {
            csv.row(vec![n.into(), (j + 1).into(), x[j].into(), y[j].into()]);
        }
    });
    let summary = json!({
        "scheme": r.run.scheme,
        "dt": fmt_f64(sim.dt()),
        "steps": sim.steps(),
        "phi": r.phi.name(),
        "phi_final": fmt_f64(r.phi.eval(fin.x.coeffs())),
        "norm_x_final": fmt_f64(fin.x.norm()),
    });
    Ok(vec![
        ("trajectory.csv".into(), csv.into_string()),
        ("summary.json".into(), summary.to_string()),
    ])
}

fn default_oracle(r: &Resolved) -> OracleMode {
    match (r.problem.nonlinearity().spec(), r.run.scheme.is_coupled()) {
        (NonlinearitySpec::LinearInY { .. }, _) => OracleMode::MomentOracle,
        (_, true) => OracleMode::RefinedReference,
        (_, false) => OracleMode::AveragedReference,
    }
}

fn weak_error(cfg: &ExperimentConfig, r: &Resolved) -> Result<Files> {
    let dts = cfg.dt_list.clone().unwrap_or_else(|| dyadic_ladder(4, 9));
    let oracle = cfg.oracle.unwrap_or_else(|| default_oracle(r));
    let curve = weak_error_curve(&r.problem, &r.run, &dts, &r.phi, oracle, r.mc)?;
    let mut csv = Csv::new(&["dt", "error", "stderr", "oracle_bias"]);
    for p in &curve {
        csv.row(vec![p.dt.into(), p.error.into(), p.stderr.into(), p.oracle_bias.into()]);
    }
    let fit = curve_fit(&curve, cfg.drop_coarsest);
    let summary = json!({
        "oracle": oracle,
        "phi": r.phi.name(),
        "label": r.phi.label(),
        "fit": fit_json(fit.as_ref().ok()),
        "fit_error": fit.as_ref().err().map(|e| e.to_string()),
    });
    Ok(vec![
        ("curve.csv".into(), csv.into_string()),
        ("summary.json".into(), summary.to_string()),
    ])
}

fn ap_test(cfg: &ExperimentConfig, r: &Resolved) -> Result<Files> {
    let eps = cfg
        .eps_list
        .clone()
        .unwrap_or_else(|| vec![1.0, 1e-1, 1e-2, 1e-3, 1e-4]);
    let rows = ap_diagram(&r.problem, &r.run, &eps, &r.phi, r.mc)?;
    let mut csv = Csv::new(&["eps", "coupled", "limiting", "gap", "stderr"]);
    for row in &rows {
        csv.row(vec![row.eps.into(), row.coupled.into(), row.limiting.into(), row.gap.into(), row.stderr.into()]);
    }
    let first = rows.first().map_or(f64::NAN, |r| r.gap);
    let last = rows.last().map_or(f64::NAN, |r| r.gap);
    let summary = json!({
        "dt": fmt_f64(r.run.dt()),
        "phi": r.phi.name(),
        "gap_ratio_first_over_last": fmt_f64(first / last),
    });
    Ok(vec![
        ("ap.csv".into(), csv.into_string()),
        ("summary.json".into(), summary.to_string()),
    ])
}

fn invariant_test(cfg: &ExperimentConfig, r: &Resolved) -> Result<Files> {
    let taus = cfg
        .tau_list
        .clone()
        .unwrap_or_else(|| vec![1e-4, 1e-2, 1.0, 1e2, 1e4]);
    let spec: &SpectrumSpec = r.problem.spectrum();
    let emp = cfg.empirical_samples.map(|n| EmpiricalSettings {
        n_samples: n,
        steps: cfg.empirical_steps,
        master_seed: cfg.master_seed,
    });
    let rows = invariant_measure_check(spec, &taus, emp)?;
    let mut csv = Csv::new(&[
        "tau",
        "mode",
        "lambda",
        "residual",
        "relative_residual",
        "standard_residual",
        "empirical_mean",
        "empirical_stderr",
    ]);
    for row in &rows {
        let (m, s) = row.empirical.map_or((f64::NAN, f64::NAN), |e| (e.mean, e.stderr));
        csv.row(vec![
            row.tau.into(),
            row.mode.into(),
            row.lambda.into(),
            row.residual.into(),
            row.relative_residual.into(),
            row.standard_residual.into(),
            m.into(),
            s.into(),
        ]);
    }
    let max_res = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let summary = json!({
        "max_residual": fmt_f64(max_res),
        "preserved": max_res <= 1e-12,
    });
    Ok(vec![
        ("invariant.csv".into(), csv.into_string()),
        ("summary.json".into(), summary.to_string()),
    ])
}

fn sweep(cfg: &ExperimentConfig, r: &Resolved) -> Result<Files> {
    let eps: Vec<f64> = cfg
        .eps_list
        .clone()
        .unwrap_or_else(|| (0..=6).map(|k| 0.25f64.powi(k)).collect());
    let dts = cfg.dt_list.clone().unwrap_or_else(|| dyadic_ladder(4, 10));
    let rep = uniform_sweep(&r.problem, &r.run, &eps, &dts, &r.phi, r.mc, cfg.drop_coarsest)?;
    let mut csv = Csv::new(&["eps", "dt", "value", "reference", "error", "stderr", "oracle_bias"]);
    for row in &rep.rows {
        csv.row(vec![
            row.eps.into(),
            row.dt.into(),
            row.value.into(),
            row.reference.into(),
            row.error.into(),
            row.stderr.into(),
            row.oracle_bias.into(),
        ]);
    }
    let mut curve = Csv::new(&["dt", "error", "stderr", "oracle_bias"]);
    for &(dt, err) in &rep.max_errors {
        let at_dt = rep.rows.iter().filter(|r| r.dt == dt);
        let se = at_dt.clone().map(|r| r.stderr).fold(0.0, f64::max);
        let bias = at_dt.map(|r| r.oracle_bias).fold(f64::NAN, f64::max);
        curve.row(vec![dt.into(), err.into(), se.into(), bias.into()]);
    }
    let summary = json!({
        "phi": r.phi.name(),
        "label": r.phi.label(),
        "fit": fit_json(rep.fit.as_ref()),
        "max_oracle_bias": fmt_f64(rep.max_oracle_bias()),
    });
    Ok(vec![
        ("sweep.csv".into(), csv.into_string()),
        ("curve.csv".into(), curve.into_string()),
        ("summary.json".into(), summary.to_string()),
    ])
}
