use apspde::harness::{fit_rate, mc_estimate, FunctionalSpec};
use apspde::integrators::{modified_decay, Problem, RunConfig, SchemeKind};
use apspde::moments::{second_moment_recursion, ModeMoments};
use apspde::nonlinearity::NonlinearitySpec;
use apspde::spectral::{SpectralField, SpectrumSpec};
use proptest::prelude::*;

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.log10()..hi.log10()).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #[test]
    fn invariant_variance_is_a_fixed_point(tau in log_uniform(1e-6, 1e6), lambda in log_uniform(1e-2, 1e6)) {
        let s = SpectrumSpec::new(vec![lambda]).unwrap();
        let ops = s.modified_operators(tau).unwrap();
        let v = 1.0 / lambda;
        let next = ops.a_tau[0].powi(2) * v + ops.noise_variance(0);
        prop_assert!((next * lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn operator_identities(tau in log_uniform(1e-6, 1e6), lambda in log_uniform(1e-2, 1e6)) {
        let ops = SpectrumSpec::new(vec![lambda]).unwrap().modified_operators(tau).unwrap();
        let a = ops.a_tau[0];
        prop_assert!(a > 0.0 && a < 1.0);
        prop_assert_eq!(a, modified_decay(tau, lambda));
        let lhs = ops.b1[0].powi(2) + ops.b2[0].powi(2);
        prop_assert!((lhs / (0.5 * (a * a + a)) - 1.0).abs() < 1e-12);
        prop_assert!(((-tau * ops.lambda_tau[0]).exp() / a - 1.0).abs() < 1e-12);
        prop_assert!(ops.lambda_tau[0] <= lambda * (1.0 + 1e-15));
    }

    #[test]
    fn resolvent_contracts(dt in log_uniform(1e-6, 1e2), coeffs in prop::collection::vec(-10.0f64..10.0, 1..32)) {
        let s = SpectrumSpec::dirichlet(coeffs.len()).unwrap();
        let x = SpectralField::from_vec(coeffs);
        let y = s.apply_resolvent(dt, &x).unwrap();
        prop_assert!(y.norm() <= x.norm());
        let z = s.apply_semigroup(dt, &x).unwrap();
        prop_assert!(z.norm() <= y.norm() * (1.0 + 1e-15));
    }

    #[test]
    fn fit_recovers_power_laws(slope in 0.1f64..3.0, scale in log_uniform(1e-4, 1e4), n in 3usize..10) {
        let pts: Vec<(f64, f64)> = (0..n).map(|k| {
            let h = 2f64.powi(-(k as i32) - 2);
            (h, scale * h.powf(slope))
        }).collect();
        let fit = fit_rate(&pts, false).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-10);
        prop_assert!((fit.intercept - scale.ln()).abs() < 1e-8);
        prop_assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn functionals_at_zero_variance_are_pointwise(coeffs in prop::collection::vec(-3.0f64..3.0, 1..16), off in -1.0f64..1.0) {
        let n = coeffs.len();
        let h = SpectralField::from_vec((0..n).map(|k| 1.0 / (k + 1) as f64).collect());
        let zeros = vec![0.0; n];
        for phi in [
            FunctionalSpec::Linear { h, offset: off },
            FunctionalSpec::NormSquared,
            FunctionalSpec::BoundedExp,
        ] {
            let direct = phi.eval(&coeffs);
            let gauss = phi.gaussian_expectation(&coeffs, &zeros);
            prop_assert!((direct - gauss).abs() <= 1e-14 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn recursion_keeps_variances_nonnegative(
        lambda in log_uniform(1.0, 1e4),
        c in -3.0f64..3.0,
        eps in log_uniform(1e-6, 1.0),
        dt in log_uniform(1e-4, 1.0),
        n in 1usize..64,
    ) {
        let init = ModeMoments { mean_x: 1.0, mean_y: -1.0, ..ModeMoments::default() };
        for kind in [SchemeKind::CoupledModified, SchemeKind::CoupledExpo, SchemeKind::Limiting, SchemeKind::Averaged] {
            let m = second_moment_recursion(kind, lambda, c, eps, dt, n, init).unwrap();
            prop_assert!(m.var_x >= 0.0 && m.var_y >= 0.0);
            prop_assert!(m.cov_xy * m.cov_xy <= m.var_x * m.var_y * (1.0 + 1e-9) + 1e-300);
        }
    }
}

#[test]
fn stderr_halves_when_samples_quadruple() {
    let p = Problem::new(SpectrumSpec::dirichlet(8).unwrap(), NonlinearitySpec::PointwiseSquare { c: 1.0 }).unwrap();
    let cfg = RunConfig::new(0.5, 8, 0.1, SchemeKind::CoupledModified, SpectralField::basis(8, 1).unwrap(), SpectralField::zeros(8));
    for phi in [FunctionalSpec::NormSquared, FunctionalSpec::BoundedExp] {
        let a = mc_estimate(&p, &cfg, &phi, 4_000, 12).unwrap();
        let b = mc_estimate(&p, &cfg, &phi, 16_000, 12).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio / 2.0 - 1.0).abs() <= 0.2, "{} ratio {ratio}", phi.name());
    }
}
