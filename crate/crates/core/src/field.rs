//! Elasticity fields in log-price coordinates.
//!
//! Row `i` of an elasticity matrix defines the 1-form `sum_j E_ij du_j`. When
//! that form is closed the log-demand of product `i` can be recovered (up to a
//! multiplicative constant) by integrating it along any path; this module
//! provides the closure check, the line integral and the constant-elasticity
//! closed form used to validate both.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default central-difference step for closure checks.
pub const DEFAULT_CLOSURE_STEP: f64 = 1e-3;
/// Relative tolerance of the adaptive trapezoid rule.
pub const QUADRATURE_TOL: f64 = 1e-8;
/// Upper bound on subdivisions per path segment.
pub const MAX_QUADRATURE_SEGMENTS: usize = 1 << 20;

/// A map from log-prices to an `n x n` elasticity matrix, for one fixed context.
///
/// Implementations must be C¹ in `u` for closure checks to be meaningful and
/// must be callable from several threads.
pub trait ElasticityField: Sync {
    fn dim(&self) -> usize;

    fn matrix(&self, u: &[f64]) -> Result<Array2<f64>>;

    /// Row `i` of the matrix. Implementations may override this when a single
    /// row is cheaper than the full matrix.
    fn row(&self, u: &[f64], i: usize) -> Result<Vec<f64>> {
        Ok(self.matrix(u)?.row(i).to_vec())
    }
}

/// Adapter turning a closure into a field.
pub struct FnField<F> {
    n: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64]) -> Array2<f64> + Sync,
{
    pub fn new(n: usize, f: F) -> Self {
        FnField { n, f }
    }
}

impl<F> ElasticityField for FnField<F>
where
    F: Fn(&[f64]) -> Array2<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }

    fn matrix(&self, u: &[f64]) -> Result<Array2<f64>> {
        Ok((self.f)(u))
    }
}

fn finite_row(field: &dyn ElasticityField, u: &[f64], i: usize) -> Result<Vec<f64>> {
    let row = field.row(u, i)?;
    if row.iter().all(|v| v.is_finite()) {
        Ok(row)
    } else {
        Err(Error::NonFiniteField { point: u.to_vec() })
    }
}

/// Largest violation of `d_k E_ij = d_j E_ik` over all `(j, k)`, using the
/// five-point central difference with step `h`. The stencil is exact on
/// polynomials up to degree four, so cubic-spline fields leave only
/// roundoff and knot-crossing error.
pub fn closure_residual(
    field: &dyn ElasticityField,
    u: &[f64],
    i: usize,
    h: f64,
) -> Result<f64> {
    let n = field.dim();
    if u.len() != n {
        return Err(Error::Shape(format!("u has length {}, field has dim {n}", u.len())));
    }
    // jac[j][k] = d E_ij / d u_k
    let mut jac = vec![vec![0.0; n]; n];
    let mut probe = u.to_vec();
    for k in 0..n {
        let mut at = |offset: f64| {
            probe[k] = u[k] + offset;
            let row = finite_row(field, &probe, i);
            probe[k] = u[k];
            row
        };
        let (up2, up, dn, dn2) = (at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?);
        for j in 0..n {
            jac[j][k] = (8.0 * (up[j] - dn[j]) - (up2[j] - dn2[j])) / (12.0 * h);
        }
    }
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in (j + 1)..n {
            worst = worst.max((jac[j][k] - jac[k][j]).abs());
        }
    }
    Ok(worst)
}

/// Piecewise-linear path in log-price space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    waypoints: Vec<Vec<f64>>,
}

impl PricePath {
    pub fn new(waypoints: Vec<Vec<f64>>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::Domain("a price path needs at least 2 waypoints".into()));
        }
        let n = waypoints[0].len();
        if waypoints.iter().any(|w| w.len() != n) {
            return Err(Error::Shape("path waypoints differ in dimension".into()));
        }
        if waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("path waypoints must be finite".into()));
        }
        Ok(PricePath { waypoints })
    }

    pub fn straight(from: &[f64], to: &[f64]) -> Result<Self> {
        PricePath::new(vec![from.to_vec(), to.to_vec()])
    }

    /// Moves one coordinate at a time, in ascending axis order.
    pub fn staircase(from: &[f64], to: &[f64]) -> Result<Self> {
        if from.len() != to.len() {
            return Err(Error::Shape("staircase endpoints differ in dimension".into()));
        }
        let mut points = vec![from.to_vec()];
        let mut current = from.to_vec();
        for axis in 0..from.len() {
            current[axis] = to[axis];
            points.push(current.clone());
        }
        PricePath::new(points)
    }

    pub fn waypoints(&self) -> &[Vec<f64>] {
        &self.waypoints
    }

    pub fn dim(&self) -> usize {
        self.waypoints[0].len()
    }
}

/// Composite trapezoid of the 1-form over every segment with `n` subdivisions.
fn trapezoid(field: &dyn ElasticityField, i: usize, path: &PricePath, n: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut point = vec![0.0; path.dim()];
    for seg in path.waypoints.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let delta: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        if delta.iter().all(|d| *d == 0.0) {
            continue;
        }
        let mut integrand = |t: f64| -> Result<f64> {
            for ((p, x), d) in point.iter_mut().zip(a).zip(&delta) {
                *p = x + t * d;
            }
            let row = finite_row(field, &point, i)?;
            Ok(row.iter().zip(&delta).map(|(e, d)| e * d).sum())
        };
        let step = 1.0 / n as f64;
        let mut acc = 0.5 * (integrand(0.0)? + integrand(1.0)?);
        for s in 1..n {
            acc += integrand(s as f64 * step)?;
        }
        total += acc * step;
    }
    Ok(total)
}

/// Reconstructs `v_i` at the end of `path` from its value `v0_i` at the start
/// by integrating row `i` of the field, doubling subdivisions until the
/// reconstructed demand changes by less than [`QUADRATURE_TOL`] (relative).
pub fn integrate_line(
    field: &dyn ElasticityField,
    i: usize,
    path: &PricePath,
    v0_i: f64,
    n_seg: usize,
) -> Result<f64> {
    if !(v0_i > 0.0) {
        return Err(Error::Domain(format!("baseline demand must be positive, got {v0_i}")));
    }
    if path.dim() != field.dim() {
        return Err(Error::Shape(format!(
            "path dim {} differs from field dim {}",
            path.dim(),
            field.dim()
        )));
    }
    let mut n = n_seg.max(1);
    let mut previous = trapezoid(field, i, path, n)?;
    loop {
        let next_n = n * 2;
        if next_n > MAX_QUADRATURE_SEGMENTS {
            return Err(Error::Quadrature {
                previous: v0_i * previous.exp(),
                last: v0_i * trapezoid(field, i, path, n)?.exp(),
            });
        }
        let next = trapezoid(field, i, path, next_n)?;
        if ((next - previous).exp() - 1.0).abs() < QUADRATURE_TOL {
            return Ok(v0_i * next.exp());
        }
        previous = next;
        n = next_n;
    }
}

/// Relative disagreement between the straight path and the axis-ordered
/// staircase between the same endpoints.
pub fn path_independence_gap(
    field: &dyn ElasticityField,
    i: usize,
    u0: &[f64],
    u1: &[f64],
    v0_i: f64,
) -> Result<f64> {
    let straight = integrate_line(field, i, &PricePath::straight(u0, u1)?, v0_i, 16)?;
    let stair = integrate_line(field, i, &PricePath::staircase(u0, u1)?, v0_i, 16)?;
    Ok((straight - stair).abs() / straight)
}

/// Constant own elasticities on the diagonal and constant cross elasticities
/// off it. Demand is available in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantElasticityModel {
    /// Own elasticities, one per product.
    pub own: Vec<f64>,
    /// Full `n x n` matrix; the diagonal is ignored in favour of `own`.
    pub cross: Vec<Vec<f64>>,
    pub p0: Vec<f64>,
    pub v0: Vec<f64>,
}

impl ConstantElasticityModel {
    pub fn new(own: Vec<f64>, cross: Vec<Vec<f64>>, p0: Vec<f64>, v0: Vec<f64>) -> Result<Self> {
        let n = own.len();
        if cross.len() != n || cross.iter().any(|r| r.len() != n) || p0.len() != n || v0.len() != n {
            return Err(Error::Shape("constant-elasticity model components differ in size".into()));
        }
        if p0.iter().chain(&v0).any(|v| !(*v > 0.0)) {
            return Err(Error::Domain("baseline prices and demands must be positive".into()));
        }
        Ok(ConstantElasticityModel { own, cross, p0, v0 })
    }

    pub fn n(&self) -> usize {
        self.own.len()
    }

    pub fn elasticity(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.own[i]
        } else {
            self.cross[i][j]
        }
    }

    /// `v_i(p) = v0_i * prod_j (p_j / p0_j)^{E_ij}`.
    pub fn demand(&self, p: &[f64], i: usize) -> Result<f64> {
        if p.len() != self.n() {
            return Err(Error::Shape("price vector has wrong length".into()));
        }
        if let Some(bad) = p.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain(format!("prices must be positive, got {bad}")));
        }
        let log_ratio: f64 = (0..self.n())
            .map(|j| self.elasticity(i, j) * (p[j] / self.p0[j]).ln())
            .sum();
        Ok(self.v0[i] * log_ratio.exp())
    }

    /// Same as [`Self::demand`] in log-price coordinates.
    pub fn log_demand(&self, u: &[f64], i: usize) -> f64 {
        self.v0[i].ln()
            + (0..self.n())
                .map(|j| self.elasticity(i, j) * (u[j] - self.p0[j].ln()))
                .sum::<f64>()
    }
}

impl ElasticityField for ConstantElasticityModel {
    fn dim(&self) -> usize {
        self.n()
    }

    fn matrix(&self, _u: &[f64]) -> Result<Array2<f64>> {
        let n = self.n();
        Ok(Array2::from_shape_fn((n, n), |(i, j)| self.elasticity(i, j)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn planted_non_integrable() -> FnField<impl Fn(&[f64]) -> Array2<f64> + Sync> {
        FnField::new(3, |u: &[f64]| {
            let mut m = Array2::zeros((3, 3));
            m[[0, 1]] = u[2];
            m
        })
    }

    fn single(eps: f64) -> ConstantElasticityModel {
        ConstantElasticityModel::new(vec![eps], vec![vec![0.0]], vec![1.0], vec![1.0]).unwrap()
    }

    #[test]
    fn constant_field_is_closed() {
        let m = ConstantElasticityModel::new(
            vec![-2.0, -1.5],
            vec![vec![0.0, 0.3], vec![-0.2, 0.0]],
            vec![1.0, 2.0],
            vec![5.0, 3.0],
        )
        .unwrap();
        let r = closure_residual(&m, &[0.1, 0.4], 0, DEFAULT_CLOSURE_STEP).unwrap();
        assert!(r <= 1e-12);
    }

    #[test]
    fn planted_counterexample_has_unit_residual() {
        let f = planted_non_integrable();
        let r = closure_residual(&f, &[0.2, -0.1, 0.5], 0, DEFAULT_CLOSURE_STEP).unwrap();
        assert!((r - 1.0).abs() < 1e-6, "residual {r}");
    }

    #[test]
    fn non_finite_field_reports_point() {
        let f = FnField::new(1, |_u: &[f64]| Array2::from_elem((1, 1), f64::NAN));
        match closure_residual(&f, &[0.0], 0, 1e-3) {
            Err(Error::NonFiniteField { point }) => assert_eq!(point.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_length_path_returns_baseline() {
        let m = single(-2.0);
        let path = PricePath::straight(&[0.3], &[0.3]).unwrap();
        assert_eq!(integrate_line(&m, 0, &path, 7.5, 4).unwrap(), 7.5);
    }

    #[test]
    fn constant_elasticity_line_integral() {
        let m = single(-2.0);
        let path = PricePath::straight(&[0.0], &[2f64.ln()]).unwrap();
        let v = integrate_line(&m, 0, &path, 1.0, 4).unwrap();
        assert!((v - 0.25).abs() < 1e-10);
    }

    #[test]
    fn path_gaps() {
        let m = ConstantElasticityModel::new(
            vec![-2.0, -1.0, -3.0],
            vec![vec![0.0, 0.4, -0.1], vec![0.2, 0.0, 0.3], vec![0.0, 0.5, 0.0]],
            vec![1.0; 3],
            vec![1.0; 3],
        )
        .unwrap();
        let gap = path_independence_gap(&m, 1, &[0.0, 0.1, 0.2], &[0.5, -0.3, 0.9], 2.0).unwrap();
        assert!(gap < 1e-10);

        let f = planted_non_integrable();
        let gap = path_independence_gap(&f, 0, &[0.0; 3], &[0.0, 1.0, 1.0], 1.0).unwrap();
        // straight path integrates t dt = 0.5, the staircase integrates 0
        assert!((gap - (1.0 - (-0.5f64).exp())).abs() < 1e-6);
        assert!(gap > 0.1);
    }

    #[test]
    fn closed_form_demand_examples() {
        let m = ConstantElasticityModel::new(
            vec![-2.0, -1.0],
            vec![vec![0.0, 0.5], vec![0.0, 0.0]],
            vec![1.5, 0.8],
            vec![10.0, 4.0],
        )
        .unwrap();
        assert_relative_eq!(m.demand(&[1.5, 0.8], 0).unwrap(), 10.0, max_relative = 1e-15);
        assert_relative_eq!(m.demand(&[3.0, 3.2], 0).unwrap(), 5.0, max_relative = 1e-12);
        // a 50% discount on product 0
        assert_relative_eq!(m.demand(&[0.75, 0.8], 0).unwrap(), 40.0, max_relative = 1e-12);
        assert!(matches!(m.demand(&[0.0, 1.0], 0), Err(Error::Domain(_))));
    }

    #[test]
    fn path_validation() {
        assert!(PricePath::new(vec![vec![0.0]]).is_err());
        assert!(PricePath::new(vec![vec![0.0], vec![f64::INFINITY]]).is_err());
        let s = PricePath::staircase(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(s.waypoints(), &[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 2.0]]);
    }

    #[test]
    fn sign_conventions() {
        let pos = ConstantElasticityModel::new(
            vec![-2.0, -2.0],
            vec![vec![0.0, 0.4], vec![0.0, 0.0]],
            vec![1.0; 2],
            vec![1.0; 2],
        )
        .unwrap();
        let neg = ConstantElasticityModel::new(
            vec![-2.0, -2.0],
            vec![vec![0.0, -0.4], vec![0.0, 0.0]],
            vec![1.0; 2],
            vec![1.0; 2],
        )
        .unwrap();
        let lo = [1.0, 1.0];
        let hi = [1.0, 1.3];
        assert!(pos.demand(&hi, 0).unwrap() > pos.demand(&lo, 0).unwrap());
        assert!(neg.demand(&hi, 0).unwrap() < neg.demand(&lo, 0).unwrap());
    }

    fn model_strategy() -> impl Strategy<Value = (ConstantElasticityModel, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (2usize..5).prop_flat_map(|n| {
            (
                proptest::collection::vec(-3.0f64..-0.5, n),
                proptest::collection::vec(proptest::collection::vec(-0.5f64..0.5, n), n),
                proptest::collection::vec(0.5f64..3.0, n),
                proptest::collection::vec(0.5f64..50.0, n),
                proptest::collection::vec(-0.7f64..0.7, n),
                proptest::collection::vec(-0.7f64..0.7, n),
                proptest::collection::vec(-0.7f64..0.7, n),
            )
                .prop_map(|(own, cross, p0, v0, a, b, c)| {
                    (ConstantElasticityModel::new(own, cross, p0, v0).unwrap(), a, b, c)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn line_integral_matches_closed_form((m, a, mid, b) in model_strategy()) {
            let n = m.n();
            let u0: Vec<f64> = (0..n).map(|j| m.p0[j].ln() + a[j]).collect();
            let um: Vec<f64> = (0..n).map(|j| m.p0[j].ln() + mid[j]).collect();
            let u1: Vec<f64> = (0..n).map(|j| m.p0[j].ln() + b[j]).collect();
            let path = PricePath::new(vec![u0.clone(), um, u1.clone()]).unwrap();
            for i in 0..n {
                let p0: Vec<f64> = u0.iter().map(|v| v.exp()).collect();
                let p1: Vec<f64> = u1.iter().map(|v| v.exp()).collect();
                let start = m.demand(&p0, i).unwrap();
                let got = integrate_line(&m, i, &path, start, 8).unwrap();
                let want = m.demand(&p1, i).unwrap();
                prop_assert!(((got - want) / want).abs() < 1e-9);

                let scaled = integrate_line(&m, i, &path, 3.0 * start, 8).unwrap();
                prop_assert!((scaled / got - 3.0).abs() < 1e-12);
            }
        }
    }
}
