//! Catalog of slow-component nonlinearities `F(x, y)` and their averages
//! `Fbar(x) = E[F(x, Y)]`, `Y ~ N(0, Lambda^{-1})`.
//!
//! Pointwise (Nemytskii) nonlinearities are evaluated by collocation on the
//! interior sine grid `xi_m = m / (M + 1)`: synthesize grid values from the
//! sine coefficients, apply `f` pointwise, and project back onto the first
//! J modes with the discrete sine transform. With `M >= 4J` the projection
//! of a quadratic in band-limited inputs is resolved up to an `O(M^-4)`
//! quadrature error; averages are exact because the projection is linear.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::{SpectralField, SpectrumSpec};

pub const DEFAULT_QUADRATURE_ORDER: usize = 12;

/// Sine collocation transform between J coefficients and M grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTransform {
    modes: usize,
    points: usize,
    nodes: Vec<f64>,
    // basis[m * modes + j] = sqrt(2) sin((j + 1) pi xi_m)
    basis: Vec<f64>,
}

impl GridTransform {
    /// Transform with the default oversampling `M = 4J`.
    pub fn new(modes: usize) -> Result<Self> {
        Self::with_points(modes, 4 * modes)
    }

    pub fn with_points(modes: usize, points: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::param("J", "must be at least 1"));
        }
        if points < 4 * modes {
            return Err(Error::param(
                "M",
                format!("need at least 4J = {} collocation points, got {points}", 4 * modes),
            ));
        }
        let h = 1.0 / (points + 1) as f64;
        let nodes: Vec<f64> = (1..=points).map(|m| m as f64 * h).collect();
        let mut basis = Vec::with_capacity(points * modes);
        for m in 1..=points {
            for j in 1..=modes {
                // reduce the argument exactly before calling sin
                let k = (j * m) % (2 * (points + 1));
                basis.push(SQRT_2 * (PI * k as f64 * h).sin());
            }
        }
        Ok(Self {
            modes,
            points,
            nodes,
            basis,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `e_j(xi_m)`, `j` 0-based.
    pub fn basis_value(&self, m: usize, j: usize) -> f64 {
        self.basis[m * self.modes + j]
    }

    /// Grid values `sum_j c_j e_j(xi_m)`.
    pub fn backward_into(&self, coeffs: &[f64], grid: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.modes);
        for (g, row) in grid.iter_mut().zip(self.basis.chunks_exact(self.modes)) {
            *g = row.iter().zip(coeffs).map(|(b, c)| b * c).sum();
        }
    }

    /// First J sine coefficients of grid data (trapezoidal rule, exact for
    /// sine polynomials of degree <= M).
    pub fn forward_into(&self, grid: &[f64], coeffs: &mut [f64]) {
        debug_assert_eq!(grid.len(), self.points);
        coeffs.iter_mut().for_each(|c| *c = 0.0);
        for (g, row) in grid.iter().zip(self.basis.chunks_exact(self.modes)) {
            for (c, b) in coeffs.iter_mut().zip(row) {
                *c += b * g;
            }
        }
        let h = 1.0 / (self.points + 1) as f64;
        coeffs.iter_mut().for_each(|c| *c *= h);
    }

    pub fn backward(&self, x: &SpectralField) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut g = vec![0.0; self.points];
        self.backward_into(x.coeffs(), &mut g);
        Ok(g)
    }

    pub fn forward(&self, grid: &[f64]) -> Result<SpectralField> {
        if grid.len() != self.points {
            return Err(Error::DimensionMismatch {
                expected: self.points,
                found: grid.len(),
            });
        }
        let mut c = vec![0.0; self.modes];
        self.forward_into(grid, &mut c);
        Ok(SpectralField::from_vec(c))
    }

    fn check(&self, x: &SpectralField) -> Result<()> {
        if x.len() == self.modes {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.modes,
                found: x.len(),
            })
        }
    }
}

/// `Var Y(xi_m) = sum_j e_j(xi_m)^2 / lambda_j` for `Y ~ N(0, Lambda^{-1})`.
///
/// The eigenfunctions are the sine basis of the transform; for the Dirichlet
/// spectrum this converges to `xi (1 - xi)` as J grows.
pub fn pointwise_variance(spec: &SpectrumSpec, gt: &GridTransform) -> Result<Vec<f64>> {
    if spec.modes() != gt.modes() {
        return Err(Error::DimensionMismatch {
            expected: gt.modes(),
            found: spec.modes(),
        });
    }
    Ok((0..gt.points())
        .map(|m| {
            spec.lambdas()
                .iter()
                .enumerate()
                .map(|(j, l)| gt.basis_value(m, j).powi(2) / l)
                .sum()
        })
        .collect())
}

/// Gauss-Hermite rule for `E g(Z)`, `Z ~ N(0, 1)`: returns `(nodes, weights)`
/// with weights summing to one. Exact for polynomials of degree `< 2 order`.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-0.16667),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // physicists' rule for weight e^{-t^2} -> standard normal
    let nodes = x.iter().map(|t| SQRT_2 * t).collect();
    let weights = w.iter().map(|wi| wi / PI.sqrt()).collect();
    (nodes, weights)
}

/// Scalar `f(u, v)` applied pointwise, with Gauss-Hermite averaging in `v`.
#[derive(Clone)]
pub struct PointwiseFn {
    name: String,
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    lipschitz_v: Option<f64>,
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl fmt::Debug for PointwiseFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointwiseFn")
            .field("name", &self.name)
            .field("order", &self.order)
            .finish()
    }
}

impl PointwiseFn {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        lipschitz_v: Option<f64>,
        order: usize,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::param("quadrature_order", "must be at least 1"));
        }
        let (nodes, weights) = gauss_hermite(order);
        Ok(Self {
            name: name.into(),
            f: Arc::new(f),
            lipschitz_v,
            order,
            nodes,
            weights,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        (self.f)(u, v)
    }

    /// `E f(u, sigma Z)`.
    pub fn gaussian_average(&self, u: f64, variance: f64) -> f64 {
        let s = variance.max(0.0).sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * (self.f)(u, s * z))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub enum NonlinearitySpec {
    /// `F(x, y) = c y` in coefficients.
    LinearInY { c: f64 },
    /// `F(x, y) = c_x x + c_y y`.
    Affine { c_x: f64, c_y: f64 },
    /// `F(x, y)(xi) = c y(xi)^2`. Not globally Lipschitz; kept because its
    /// average is explicit.
    PointwiseSquare { c: f64 },
    /// `F(x, y)(xi) = f(x(xi), y(xi))`.
    PointwiseGeneral(PointwiseFn),
}

impl NonlinearitySpec {
    /// `c v^2 / (1 + v^2)`: bounded with bounded derivatives.
    pub fn saturating(c: f64, order: usize) -> Result<Self> {
        // max |d/dv v^2/(1+v^2)| = 3 sqrt(3) / 8 at v = 1/sqrt(3)
        let lip = c.abs() * 3.0 * 3f64.sqrt() / 8.0;
        Ok(Self::PointwiseGeneral(PointwiseFn::new(
            "saturating",
            move |_, v| c * v * v / (1.0 + v * v),
            Some(lip),
            order,
        )?))
    }

    /// `c sin(u + v)`; its average is `c sin(u) exp(-sigma^2 / 2)`.
    pub fn sine(c: f64, order: usize) -> Result<Self> {
        Ok(Self::PointwiseGeneral(PointwiseFn::new(
            "sine",
            move |u, v| c * (u + v).sin(),
            Some(c.abs()),
            order,
        )?))
    }

    pub fn name(&self) -> &str {
        match self {
            NonlinearitySpec::LinearInY { .. } => "linear_in_y",
            NonlinearitySpec::Affine { .. } => "affine",
            NonlinearitySpec::PointwiseSquare { .. } => "pointwise_square",
            NonlinearitySpec::PointwiseGeneral(p) => p.name(),
        }
    }

    /// Lipschitz constant of `y -> F(x, y)` in H, when one exists.
    pub fn lipschitz_y(&self) -> Option<f64> {
        match self {
            NonlinearitySpec::LinearInY { c } => Some(c.abs()),
            NonlinearitySpec::Affine { c_y, .. } => Some(c_y.abs()),
            NonlinearitySpec::PointwiseSquare { .. } => None,
            NonlinearitySpec::PointwiseGeneral(p) => p.lipschitz_v,
        }
    }

    /// True when `F` does not depend on `y`.
    pub fn is_independent_of_y(&self) -> bool {
        match self {
            NonlinearitySpec::LinearInY { c } => *c == 0.0,
            NonlinearitySpec::Affine { c_y, .. } => *c_y == 0.0,
            NonlinearitySpec::PointwiseSquare { c } => *c == 0.0,
            NonlinearitySpec::PointwiseGeneral(_) => false,
        }
    }

    fn needs_grid(&self) -> bool {
        matches!(
            self,
            NonlinearitySpec::PointwiseSquare { .. } | NonlinearitySpec::PointwiseGeneral(_)
        )
    }
}

/// Scratch space for repeated evaluations without allocation.
#[derive(Debug, Clone)]
pub struct Workspace {
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl Workspace {
    pub fn new(gt: &GridTransform) -> Self {
        Self {
            gx: vec![0.0; gt.points()],
            gy: vec![0.0; gt.points()],
        }
    }
}

/// Precomputed evaluation context: nonlinearity, transform and the pointwise
/// variance of the invariant law.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    spec: NonlinearitySpec,
    grid: GridTransform,
    variance: Vec<f64>,
}

impl Nonlinearity {
    pub fn new(spec: NonlinearitySpec, spectrum: &SpectrumSpec) -> Result<Self> {
        let grid = GridTransform::new(spectrum.modes())?;
        let variance = pointwise_variance(spectrum, &grid)?;
        Ok(Self {
            spec,
            grid,
            variance,
        })
    }

    pub fn spec(&self) -> &NonlinearitySpec {
        &self.spec
    }

    pub fn grid(&self) -> &GridTransform {
        &self.grid
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(&self.grid)
    }

    /// `out = F(x, y)` on coefficient slices of length J.
    pub fn eval_into(&self, x: &[f64], y: &[f64], out: &mut [f64], ws: &mut Workspace) {
        match &self.spec {
            NonlinearitySpec::LinearInY { c } => {
                for (o, yj) in out.iter_mut().zip(y) {
                    *o = c * yj;
                }
            }
            NonlinearitySpec::Affine { c_x, c_y } => {
                for ((o, xj), yj) in out.iter_mut().zip(x).zip(y) {
                    *o = c_x * xj + c_y * yj;
                }
            }
            NonlinearitySpec::PointwiseSquare { c } => {
                self.grid.backward_into(y, &mut ws.gy);
                ws.gy.iter_mut().for_each(|v| *v = c * *v * *v);
                self.grid.forward_into(&ws.gy, out);
            }
            NonlinearitySpec::PointwiseGeneral(p) => {
                self.grid.backward_into(x, &mut ws.gx);
                self.grid.backward_into(y, &mut ws.gy);
                for (gy, gx) in ws.gy.iter_mut().zip(&ws.gx) {
                    *gy = p.eval(*gx, *gy);
                }
                self.grid.forward_into(&ws.gy, out);
            }
        }
    }

    /// `out = Fbar(x)`.
    pub fn eval_bar_into(&self, x: &[f64], out: &mut [f64], ws: &mut Workspace) {
        match &self.spec {
            NonlinearitySpec::LinearInY { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            NonlinearitySpec::Affine { c_x, .. } => {
                for (o, xj) in out.iter_mut().zip(x) {
                    *o = c_x * xj;
                }
            }
            NonlinearitySpec::PointwiseSquare { c } => {
                for (g, v) in ws.gy.iter_mut().zip(&self.variance) {
                    *g = c * v;
                }
                self.grid.forward_into(&ws.gy, out);
            }
            NonlinearitySpec::PointwiseGeneral(p) => {
                self.grid.backward_into(x, &mut ws.gx);
                for ((g, u), v) in ws.gy.iter_mut().zip(&ws.gx).zip(&self.variance) {
                    *g = p.gaussian_average(*u, *v);
                }
                self.grid.forward_into(&ws.gy, out);
            }
        }
    }

    /// `Fbar` when it does not depend on `x` (a fixed forcing field).
    pub fn constant_average(&self) -> Option<SpectralField> {
        match &self.spec {
            NonlinearitySpec::LinearInY { .. } | NonlinearitySpec::PointwiseSquare { .. } => {
                let j = self.grid.modes();
                let mut out = vec![0.0; j];
                let mut ws = self.workspace();
                self.eval_bar_into(&vec![0.0; j], &mut out, &mut ws);
                Some(SpectralField::from_vec(out))
            }
            NonlinearitySpec::Affine { c_x, .. } if *c_x == 0.0 => {
                Some(SpectralField::zeros(self.grid.modes()))
            }
            _ => None,
        }
    }

    pub fn uses_grid(&self) -> bool {
        self.spec.needs_grid()
    }
}

/// `F(x, y)` as a new field.
pub fn eval_f(
    nl: &NonlinearitySpec,
    gt: &GridTransform,
    x: &SpectralField,
    y: &SpectralField,
) -> Result<SpectralField> {
    check_pair(gt, x, y)?;
    let ctx = Nonlinearity {
        spec: nl.clone(),
        grid: gt.clone(),
        variance: Vec::new(),
    };
    let mut out = vec![0.0; gt.modes()];
    ctx.eval_into(x.coeffs(), y.coeffs(), &mut out, &mut ctx.workspace());
    Ok(SpectralField::from_vec(out))
}

/// `Fbar(x)` as a new field.
pub fn eval_fbar(
    nl: &NonlinearitySpec,
    gt: &GridTransform,
    spec: &SpectrumSpec,
    x: &SpectralField,
) -> Result<SpectralField> {
    check_pair(gt, x, x)?;
    spec.check(x)?;
    let ctx = Nonlinearity {
        spec: nl.clone(),
        grid: gt.clone(),
        variance: pointwise_variance(spec, gt)?,
    };
    let mut out = vec![0.0; gt.modes()];
    ctx.eval_bar_into(x.coeffs(), &mut out, &mut ctx.workspace());
    Ok(SpectralField::from_vec(out))
}

fn check_pair(gt: &GridTransform, x: &SpectralField, y: &SpectralField) -> Result<()> {
    gt.check(x)?;
    gt.check(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_invariant_measure, SeedContext, StreamTag};
    use approx::assert_relative_eq;

    fn setup(j: usize) -> (SpectrumSpec, GridTransform) {
        (SpectrumSpec::dirichlet(j).unwrap(), GridTransform::new(j).unwrap())
    }

    #[test]
    fn transform_round_trip() {
        for j in [1usize, 5, 16, 33] {
            let gt = GridTransform::new(j).unwrap();
            let x = SpectralField::from_vec((0..j).map(|k| ((k * 7 + 3) % 11) as f64 - 5.0).collect());
            let back = gt.forward(&gt.backward(&x).unwrap()).unwrap();
            for (a, b) in back.coeffs().iter().zip(x.coeffs()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        assert!(GridTransform::with_points(8, 31).is_err());
    }

    #[test]
    fn linear_variants() {
        let (s, gt) = setup(4);
        let y = SpectralField::basis(4, 1).unwrap();
        let x = SpectralField::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let f = eval_f(&NonlinearitySpec::LinearInY { c: 2.0 }, &gt, &x, &y).unwrap();
        assert_eq!(f.coeffs(), &[2.0, 0.0, 0.0, 0.0]);
        let f = eval_f(&NonlinearitySpec::Affine { c_x: 0.5, c_y: -1.0 }, &gt, &x, &y).unwrap();
        assert_eq!(f.coeffs(), &[-0.5, 1.0, 1.5, 2.0]);
        let fb = eval_fbar(&NonlinearitySpec::LinearInY { c: 3.0 }, &gt, &s, &x).unwrap();
        assert_eq!(fb, SpectralField::zeros(4));
        let fb = eval_fbar(&NonlinearitySpec::Affine { c_x: 0.5, c_y: -1.0 }, &gt, &s, &x).unwrap();
        assert_eq!(fb.coeffs(), &[0.5, 1.0, 1.5, 2.0]);
        assert!(eval_f(&NonlinearitySpec::LinearInY { c: 1.0 }, &gt, &x, &SpectralField::zeros(3)).is_err());
    }

    #[test]
    fn square_of_first_mode() {
        let (_, gt) = setup(8);
        let sq = NonlinearitySpec::PointwiseSquare { c: 1.0 };
        let zero = SpectralField::zeros(8);
        assert!(eval_f(&sq, &gt, &zero, &zero).unwrap().norm() == 0.0);
        let e1 = SpectralField::basis(8, 1).unwrap();
        // int_0^1 2 sin^2(pi xi) sqrt(2) sin(pi xi) dxi and the mode-3 analogue
        let exact1 = 8.0 * SQRT_2 / (3.0 * PI);
        let exact3 = -8.0 * SQRT_2 / (15.0 * PI);
        assert_relative_eq!(exact1, 1.2004, epsilon = 1e-4);
        let f = eval_f(&sq, &gt, &zero, &e1).unwrap();
        assert_relative_eq!(f.coeffs()[0], exact1, max_relative = 1e-5);
        assert_relative_eq!(f.coeffs()[2], exact3, max_relative = 1e-4);
        // y^2 is a cosine series, so the discrete sine projection carries an
        // O(h^4) quadrature error that vanishes under grid refinement
        let mut prev = f64::INFINITY;
        for m in [32usize, 64, 128, 256] {
            let g = GridTransform::with_points(8, m).unwrap();
            let err = (eval_f(&sq, &g, &zero, &e1).unwrap().coeffs()[0] - exact1).abs();
            assert!(err < prev / 8.0 || err < 1e-14, "M={m}: {err}");
            prev = err;
        }
    }

    #[test]
    fn pointwise_variance_midpoint() {
        // with M = 4J + 1 grid points... use an odd M so 1/2 is a node
        let j = 16;
        let s = SpectrumSpec::dirichlet(j).unwrap();
        let gt = GridTransform::with_points(j, 65).unwrap();
        let var = pointwise_variance(&s, &gt).unwrap();
        assert_eq!(gt.nodes()[32], 0.5);
        let brute: f64 = (1..=j)
            .map(|k| 2.0 * (k as f64 * PI / 2.0).sin().powi(2) / (k as f64 * PI).powi(2))
            .sum();
        assert!((var[32] - brute).abs() < 1e-14);
        assert!((var[32] - 0.25).abs() < 0.01);
    }

    fn sup_truncation_error(j: usize) -> f64 {
        let s = SpectrumSpec::dirichlet(j).unwrap();
        let xs: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        xs.iter()
            .map(|&x| {
                let v: f64 = s
                    .lambdas()
                    .iter()
                    .enumerate()
                    .map(|(k, l)| 2.0 * ((k + 1) as f64 * PI * x).sin().powi(2) / l)
                    .sum();
                (v - x * (1.0 - x)).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn truncation_error_is_first_order() {
        let mut prev = f64::INFINITY;
        for j in [4usize, 8, 16, 32, 64] {
            let e = sup_truncation_error(j);
            let tail: f64 = ((j + 1)..200_000).map(|k| 2.0 / (PI * PI * (k * k) as f64)).sum();
            assert!(e < prev);
            assert!(e <= tail * (1.0 + 1e-9), "J={j}: {e} > tail {tail}");
            assert!(e * j as f64 > 0.02 && e * j as f64 <= 0.21, "J={j}: J*err = {}", e * j as f64);
            prev = e;
        }
    }

    #[test]
    fn gauss_hermite_moments() {
        let (z, w) = gauss_hermite(12);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-13);
        let moment = |p: i32| z.iter().zip(&w).map(|(z, w)| w * z.powi(p)).sum::<f64>();
        assert!(moment(1).abs() < 1e-14);
        assert_relative_eq!(moment(2), 1.0, max_relative = 1e-13);
        assert_relative_eq!(moment(4), 3.0, max_relative = 1e-13);
        assert_relative_eq!(moment(22), 13_749_310_575.0, max_relative = 1e-10);
        let (z1, w1) = gauss_hermite(1);
        assert!(z1[0].abs() < 1e-15);
        assert_relative_eq!(w1[0], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn general_square_matches_closed_form() {
        let (s, gt) = setup(16);
        let x = SpectralField::from_vec((0..16).map(|k| 0.3 / (k + 1) as f64).collect());
        let closed = eval_fbar(&NonlinearitySpec::PointwiseSquare { c: 1.5 }, &gt, &s, &x).unwrap();
        for order in [2usize, 3, 12] {
            let general = NonlinearitySpec::PointwiseGeneral(
                PointwiseFn::new("square", |_, v| 1.5 * v * v, None, order).unwrap(),
            );
            let q = eval_fbar(&general, &gt, &s, &x).unwrap();
            for (a, b) in q.coeffs().iter().zip(closed.coeffs()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sine_average_closed_form() {
        let (s, gt) = setup(8);
        let x = SpectralField::from_vec(vec![0.8, -0.3, 0.2, 0.0, 0.1, 0.0, 0.0, 0.05]);
        let fb = eval_fbar(&NonlinearitySpec::sine(0.7, 12).unwrap(), &gt, &s, &x).unwrap();
        let u = gt.backward(&x).unwrap();
        let var = pointwise_variance(&s, &gt).unwrap();
        let grid: Vec<f64> = u.iter().zip(&var).map(|(u, v)| 0.7 * u.sin() * (-v / 2.0).exp()).collect();
        let expected = gt.forward(&grid).unwrap();
        for (a, b) in fb.coeffs().iter().zip(expected.coeffs()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    fn catalog() -> Vec<NonlinearitySpec> {
        vec![
            NonlinearitySpec::LinearInY { c: 1.3 },
            NonlinearitySpec::Affine { c_x: -0.4, c_y: 0.9 },
            NonlinearitySpec::PointwiseSquare { c: 2.0 },
            NonlinearitySpec::saturating(1.5, 12).unwrap(),
            NonlinearitySpec::sine(1.0, 12).unwrap(),
        ]
    }

    #[test]
    fn average_is_centered_expectation() {
        let j = 6;
        let s = SpectrumSpec::dirichlet(j).unwrap();
        let x = SpectralField::from_vec(vec![0.5, -0.2, 0.1, 0.0, 0.05, 0.0]);
        let n = 100_000u64;
        for spec in catalog() {
            let nl = Nonlinearity::new(spec.clone(), &s).unwrap();
            let mut ws = nl.workspace();
            let mut out = vec![0.0; j];
            let mut sum = vec![0.0; j];
            let mut sq = vec![0.0; j];
            for i in 0..n {
                let y = sample_invariant_measure(&s, SeedContext::new(11, i, 0, StreamTag::Initial));
                nl.eval_into(x.coeffs(), y.coeffs(), &mut out, &mut ws);
                for k in 0..j {
                    sum[k] += out[k];
                    sq[k] += out[k] * out[k];
                }
            }
            let mut bar = vec![0.0; j];
            nl.eval_bar_into(x.coeffs(), &mut bar, &mut ws);
            for k in 0..j {
                let mean = sum[k] / n as f64;
                let var = (sq[k] / n as f64 - mean * mean).max(0.0);
                let se = (var / n as f64).sqrt();
                assert!(
                    (mean - bar[k]).abs() <= 4.0 * se + 1e-14,
                    "{}: mode {k}: {mean} vs {} (se {se})",
                    spec.name(),
                    bar[k]
                );
            }
        }
    }

    #[test]
    fn lipschitz_in_y() {
        let j = 8;
        let s = SpectrumSpec::dirichlet(j).unwrap();
        for spec in catalog() {
            let Some(l) = spec.lipschitz_y() else { continue };
            let nl = Nonlinearity::new(spec.clone(), &s).unwrap();
            let mut ws = nl.workspace();
            let (mut f1, mut f2) = (vec![0.0; j], vec![0.0; j]);
            for i in 0..1000u64 {
                let x = sample_invariant_measure(&s, SeedContext::new(5, i, 0, StreamTag::Gamma1)).scaled(3.0);
                let y1 = sample_invariant_measure(&s, SeedContext::new(5, i, 0, StreamTag::Gamma2)).scaled(5.0);
                let y2 = sample_invariant_measure(&s, SeedContext::new(5, i, 1, StreamTag::Gamma2)).scaled(5.0);
                nl.eval_into(x.coeffs(), y1.coeffs(), &mut f1, &mut ws);
                nl.eval_into(x.coeffs(), y2.coeffs(), &mut f2, &mut ws);
                let df = SpectralField::from_vec(f2.clone()).axpy(-1.0, &SpectralField::from_vec(f1.clone())).unwrap();
                let dy = y2.axpy(-1.0, &y1).unwrap();
                assert!(df.norm() <= l * dy.norm() * (1.0 + 1e-12), "{}", spec.name());
            }
        }
    }

    #[test]
    fn linear_averages_superpose() {
        let (s, gt) = setup(5);
        let a = SpectralField::from_vec(vec![1.0, -2.0, 0.5, 0.25, 3.0]);
        let b = SpectralField::from_vec(vec![0.1, 0.2, -0.3, 0.4, -0.5]);
        for spec in [
            NonlinearitySpec::LinearInY { c: 2.0 },
            NonlinearitySpec::Affine { c_x: 0.7, c_y: 1.0 },
        ] {
            let sum = eval_fbar(&spec, &gt, &s, &a.axpy(2.5, &b).unwrap()).unwrap();
            let parts = eval_fbar(&spec, &gt, &s, &a)
                .unwrap()
                .axpy(2.5, &eval_fbar(&spec, &gt, &s, &b).unwrap())
                .unwrap();
            for (p, q) in sum.coeffs().iter().zip(parts.coeffs()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn square_average_tends_to_green_diagonal() {
        let j = 256;
        let s = SpectrumSpec::dirichlet(j).unwrap();
        let gt = GridTransform::with_points(j, 4 * j + 1).unwrap();
        let var = pointwise_variance(&s, &gt).unwrap();
        assert!((var[2 * j] - 0.25).abs() < 1e-3);
    }
}
