//! Quadrature versions of `Φ` for functions of continuous variables, and two
//! closed-form parametric families.
//!
//! A function on a product of intervals becomes a hypermatrix by sampling at
//! midpoints and multiplying by `∏ √Δ_k`. Every index of `Φ` is paired either
//! inside a squared modulus or between an `x` and a `u` factor, so each
//! continuous axis contributes exactly one factor `Δ` and the discrete `Φ` is
//! a midpoint-rule approximation of the integral `Φ` with no further scaling.
//!
//! The closed forms come from the `m = n = 2` functional with the first axis
//! kept discrete of size 2 and the second made continuous. With
//! `ξ_i^(k)(t) = t^{(a_ik − 1)/2}` on `(0, 1)` the functional equals
//! [`power_inequality`] exactly. With `ξ_i^(k)(t) = e^{−a_ik t²}` on the real
//! line every inner integral carries a factor `√π`, and
//! [`gaussian_inequality`] equals `4/π` times the functional.

use num_complex::Complex64 as C64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cbs::{phi_with_budget, CbsInput, PhiBreakdown, DEFAULT_WORK_BUDGET};
use crate::error::{Error, Result};
use crate::hypermatrix::{DimVector, Hypermatrix};
use crate::lagrange::lagrange_rhs_full;
use crate::numeric::order_independent_sum;
use crate::rng::Rng;

/// Largest number of samples [`discretize`] takes by default.
pub const DEFAULT_SAMPLE_BUDGET: usize = 1 << 24;

/// Gaussian tails beyond the truncation point stay below `e^{-GAUSSIAN_TAIL_EXPONENT}`.
pub const GAUSSIAN_TAIL_EXPONENT: f64 = 62.0;
/// Smallest half-width of the Gaussian truncation interval.
pub const GAUSSIAN_MIN_HALF_WIDTH: f64 = 8.0;

/// Slack added to the quadrature envelope, relative to the cancellation mass.
pub const ENVELOPE_FLOOR: f64 = 1e-11;

/// Uniform midpoint grid with `n` cells on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("grid needs at least one point".into()));
        }
        if !(hi > lo && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("empty or non-finite interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n).map(|k| self.lo + (k as f64 + 0.5) * h).collect()
    }

    /// Same interval with `n` replaced.
    pub fn with_points(&self, n: usize) -> Result<Self> {
        Self::new(self.lo, self.hi, n)
    }
}

/// One axis of a sampled function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisSpec {
    /// A continuous variable sampled on a midpoint grid, weight `√Δ`.
    Grid(GridSpec),
    /// A discrete index `1..=d`, weight 1; the function receives the index as `f64`.
    Index(usize),
}

impl AxisSpec {
    fn len(&self) -> usize {
        match self {
            AxisSpec::Grid(g) => g.n,
            AxisSpec::Index(d) => *d,
        }
    }

    fn points(&self) -> Vec<(f64, f64)> {
        match self {
            AxisSpec::Grid(g) => {
                let w = g.spacing().sqrt();
                g.nodes().into_iter().map(|s| (s, w)).collect()
            }
            AxisSpec::Index(d) => (1..=*d).map(|i| (i as f64, 1.0)).collect(),
        }
    }
}

/// Samples `f` on the product of `axes`, weighting by `√Δ` per grid axis.
pub fn discretize(f: impl Fn(&[f64]) -> C64, axes: &[AxisSpec], budget: usize) -> Result<Hypermatrix> {
    let shape = DimVector::new(axes.iter().map(AxisSpec::len).collect::<Vec<_>>())?;
    if shape.size() > budget {
        return Err(Error::BudgetExceeded { estimate: shape.size() as u128, budget: budget as u128 });
    }
    let points: Vec<Vec<(f64, f64)>> = axes.iter().map(AxisSpec::points).collect();
    let mut coords = vec![0.0; axes.len()];
    Ok(Hypermatrix::from_fn(shape, |idx| {
        let mut weight = 1.0;
        for (k, &c) in idx.components().iter().enumerate() {
            let (s, w) = points[k][c - 1];
            coords[k] = s;
            weight *= w;
        }
        f(&coords) * weight
    }))
}

/// Discretized `Φ_1^(n)(ξ^(1), …, η^(1), …)` on a single grid.
pub fn integral_phi_m1<F, G>(xi: &[F], eta: &[G], grid: &GridSpec) -> Result<PhiBreakdown>
where
    F: Fn(f64) -> C64,
    G: Fn(f64) -> C64,
{
    let axes = [AxisSpec::Grid(*grid)];
    let xs = xi.iter().map(|f| discretize(|s| f(s[0]), &axes, DEFAULT_SAMPLE_BUDGET)).collect::<Result<_>>()?;
    let us = eta.iter().map(|g| discretize(|s| g(s[0]), &axes, DEFAULT_SAMPLE_BUDGET)).collect::<Result<_>>()?;
    phi_with_budget(&CbsInput::new(xs, us)?, DEFAULT_WORK_BUDGET)
}

/// Discretized `½ ∬ |σ_{s;t}(ξ, η̄)|²` on a single grid.
pub fn integral_lagrange_m1(xi: impl Fn(f64) -> C64, eta: impl Fn(f64) -> C64, grid: &GridSpec) -> Result<f64> {
    let axes = [AxisSpec::Grid(*grid)];
    let x = discretize(|s| xi(s[0]), &axes, DEFAULT_SAMPLE_BUDGET)?;
    let u = discretize(|s| eta(s[0]), &axes, DEFAULT_SAMPLE_BUDGET)?;
    lagrange_rhs_full(&x, &u)
}

/// Positive parameters `a_{ik}` and `b_{ik}`, `i, k ∈ {1, 2}`, stored 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub a: [[f64; 2]; 2],
    pub b: [[f64; 2]; 2],
}

impl ParamBlock {
    pub fn new(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> Result<Self> {
        let p = Self { a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for &v in self.a.iter().chain(&self.b).flatten() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain { name: "parameter", value: v, reason: "must be positive and finite" });
            }
        }
        Ok(())
    }

    /// Independent uniform draws from `[lo, hi]`.
    pub fn random(lo: f64, hi: f64, rng: &mut Rng) -> Result<Self> {
        if !(0.0 < lo && lo <= hi) {
            return Err(Error::InvalidArgument(format!("bad parameter range [{lo}, {hi}]")));
        }
        let mut draw = || {
            [
                [rng.random_range(lo..=hi), rng.random_range(lo..=hi)],
                [rng.random_range(lo..=hi), rng.random_range(lo..=hi)],
            ]
        };
        let a = draw();
        let b = draw();
        Self::new(a, b)
    }

    /// Exchanges the roles of the `ξ` and `η` families.
    pub fn swapped(&self) -> Self {
        Self { a: self.b, b: self.a }
    }

    /// Exchanges the superscripts `k = 1` and `k = 2`.
    pub fn relabeled(&self) -> Self {
        let flip = |m: [[f64; 2]; 2]| [[m[0][1], m[0][0]], [m[1][1], m[1][0]]];
        Self { a: flip(self.a), b: flip(self.b) }
    }

    fn min_entry(&self) -> f64 {
        self.a.iter().chain(&self.b).flatten().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The shared four-group pattern; `pair(α, β)` stands for `1/(α·β)` and
/// `single(γ)` for `1/γ` in the power family.
fn four_group_pattern(p: &ParamBlock, pair: impl Fn(f64, f64) -> f64, single: impl Fn(f64) -> f64) -> Result<f64> {
    p.validate()?;
    let (a, b) = (&p.a, &p.b);
    let idx = [0usize, 1];
    let mut g1 = Vec::with_capacity(16);
    let mut g2 = Vec::with_capacity(16);
    for i in idx {
        for j in idx {
            for k in idx {
                for l in idx {
                    g1.push(pair(a[i][k] + a[i][l], b[j][k] + b[j][l]));
                    g2.push(pair(a[i][k] + a[j][l], b[i][k] + b[j][l]));
                }
            }
        }
    }
    let mut g3 = Vec::with_capacity(4);
    for i in idx {
        for j in idx {
            let inner = order_independent_sum(idx.iter().map(|&k| single(a[i][k] + b[j][k])).collect());
            g3.push(inner * inner);
        }
    }
    let diag = order_independent_sum(
        idx.iter().flat_map(|&i| idx.iter().map(move |&k| (i, k))).map(|(i, k)| single(a[i][k] + b[i][k])).collect(),
    );
    Ok(4.0 * order_independent_sum(g1) - 2.0 * order_independent_sum(g2) - 2.0 * order_independent_sum(g3)
        + diag * diag)
}

/// `4Σ 1/((a_ik+a_il)(b_jk+b_jl)) − 2Σ 1/((a_ik+a_jl)(b_ik+b_jl))
///  − 2Σ_ij (Σ_k 1/(a_ik+b_jk))² + (Σ_ik 1/(a_ik+b_ik))²`.
pub fn power_inequality(p: &ParamBlock) -> Result<f64> {
    four_group_pattern(p, |x, y| 1.0 / (x * y), |z| 1.0 / z)
}

/// The power pattern with `1/(α·β)` replaced by `1/√(α·β)` and `1/γ` by `1/√γ`.
pub fn gaussian_inequality(p: &ParamBlock) -> Result<f64> {
    four_group_pattern(p, |x, y| 1.0 / (x * y).sqrt(), |z| 1.0 / z.sqrt())
}

/// Which parametric family a quadrature check evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Power,
    Gaussian,
}

impl Family {
    pub fn closed_form(self, p: &ParamBlock) -> Result<f64> {
        match self {
            Family::Power => power_inequality(p),
            Family::Gaussian => gaussian_inequality(p),
        }
    }

    /// Integration interval for the defining functions.
    pub fn interval(self, p: &ParamBlock) -> (f64, f64) {
        match self {
            Family::Power => (0.0, 1.0),
            Family::Gaussian => {
                let half = gaussian_half_width(p.min_entry());
                (-half, half)
            }
        }
    }

    /// Ratio of the closed form to the integral functional.
    pub fn scale(self) -> f64 {
        match self {
            Family::Power => 1.0,
            Family::Gaussian => 4.0 / std::f64::consts::PI,
        }
    }

    fn sample(self, exponent: f64, t: f64) -> f64 {
        match self {
            Family::Power => t.powf((exponent - 1.0) / 2.0),
            Family::Gaussian => (-exponent * t * t).exp(),
        }
    }
}

/// Half-width `L ≥ 8` with `e^{-2 a_min L²} ≤ e^{-62}`.
pub fn gaussian_half_width(min_param: f64) -> f64 {
    GAUSSIAN_MIN_HALF_WIDTH.max((GAUSSIAN_TAIL_EXPONENT / (2.0 * min_param)).sqrt())
}

/// The `d = (2, N)`, `n = 2` functional of a family, scaled to match its closed form.
pub fn family_quadrature(family: Family, p: &ParamBlock, points: usize) -> Result<PhiBreakdown> {
    p.validate()?;
    let (lo, hi) = family.interval(p);
    let axes = [AxisSpec::Index(2), AxisSpec::Grid(GridSpec::new(lo, hi, points)?)];
    let block = |params: &[[f64; 2]; 2], k: usize| {
        discretize(|c| C64::new(family.sample(params[c[0] as usize - 1][k], c[1]), 0.0), &axes, DEFAULT_SAMPLE_BUDGET)
    };
    let input = CbsInput::new(vec![block(&p.a, 0)?, block(&p.a, 1)?], vec![block(&p.b, 0)?, block(&p.b, 1)?])?;
    let mut b = phi_with_budget(&input, DEFAULT_WORK_BUDGET)?;
    let s = family.scale();
    b.total *= s;
    b.cancellation_mass *= s;
    b.per_subset.iter_mut().for_each(|t| t.value *= s);
    Ok(b)
}

/// Closed form against quadrature at `points`, `points / 2` and `points / 4`.
/// Two Cauchy differences guard against an error that changes sign between levels.
#[derive(Debug, Clone, Serialize)]
pub struct DualPathCheck {
    pub family: Family,
    pub params: ParamBlock,
    pub closed_form: f64,
    pub points: usize,
    pub quadrature: f64,
    pub quadrature_coarse: f64,
    pub quadrature_coarsest: f64,
    pub cancellation_mass: f64,
    /// `2 max(|Φ_N − Φ_{N/2}|, |Φ_{N/2} − Φ_{N/4}|) + ENVELOPE_FLOOR · mass`.
    pub envelope: f64,
    pub deviation: f64,
    pub pass: bool,
}

pub fn dual_path_check(family: Family, p: &ParamBlock, points: usize) -> Result<DualPathCheck> {
    if points < 4 || !points.is_multiple_of(4) {
        return Err(Error::InvalidArgument("dual-path check needs a point count divisible by 4".into()));
    }
    let closed_form = family.closed_form(p)?;
    let fine = family_quadrature(family, p, points)?;
    let coarse = family_quadrature(family, p, points / 2)?;
    let coarsest = family_quadrature(family, p, points / 4)?;
    let cauchy = (fine.total - coarse.total).abs().max((coarse.total - coarsest.total).abs());
    let envelope = 2.0 * cauchy + ENVELOPE_FLOOR * fine.cancellation_mass;
    let deviation = (closed_form - fine.total).abs();
    Ok(DualPathCheck {
        family,
        params: *p,
        closed_form,
        points,
        quadrature: fine.total,
        quadrature_coarse: coarse.total,
        quadrature_coarsest: coarsest.total,
        cancellation_mass: fine.cancellation_mass,
        envelope,
        deviation,
        pass: deviation <= envelope,
    })
}

/// Midpoint-rule refinement study for `ξ = 1`, `η = s` on `[0, 1]`, whose
/// integral functional equals `1/12`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub exact: f64,
    pub points: Vec<usize>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    /// `errors[k] / errors[k + 1]`.
    pub ratios: Vec<f64>,
    pub monotone: bool,
}

pub fn convergence_study(points: &[usize]) -> Result<ConvergenceStudy> {
    let exact = 1.0 / 12.0;
    let mut values = Vec::with_capacity(points.len());
    for &n in points {
        let grid = GridSpec::new(0.0, 1.0, n)?;
        values.push(integral_phi_m1(&[|_s: f64| C64::new(1.0, 0.0)], &[|s: f64| C64::new(s, 0.0)], &grid)?.total);
    }
    let errors: Vec<f64> = values.iter().map(|v| (v - exact).abs()).collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    Ok(ConvergenceStudy { exact, points: points.to_vec(), values, errors, ratios, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn one(_: f64) -> C64 {
        C64::new(1.0, 0.0)
    }

    fn ident(s: f64) -> C64 {
        C64::new(s, 0.0)
    }

    /// Power family with `a_{i1} = a_{i2} = a_i`, `b_{i1} = b_{i2} = b_i`.
    fn degenerate_power(a: [f64; 2], b: [f64; 2]) -> f64 {
        let mut t = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                t[0] += 1.0 / (a[i] * b[j]);
                t[1] += 1.0 / ((a[i] + a[j]) * (b[i] + b[j]));
                t[2] += 1.0 / ((a[i] + b[j]) * (a[i] + b[j]));
            }
            t[3] += 1.0 / (a[i] + b[i]);
        }
        4.0 * (t[0] - 2.0 * t[1] - 2.0 * t[2] + t[3] * t[3])
    }

    fn degenerate_gaussian(a: [f64; 2], b: [f64; 2]) -> f64 {
        let mut t = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                t[0] += 1.0 / (a[i] * b[j]).sqrt();
                t[1] += 1.0 / ((a[i] + a[j]) * (b[i] + b[j])).sqrt();
                t[2] += 1.0 / (a[i] + b[j]);
            }
            t[3] += 1.0 / (a[i] + b[i]).sqrt();
        }
        8.0 * t[0] - 8.0 * t[1] - 8.0 * t[2] + 4.0 * t[3] * t[3]
    }

    fn collapsed(a: [f64; 2], b: [f64; 2]) -> ParamBlock {
        ParamBlock::new([[a[0], a[0]], [a[1], a[1]]], [[b[0], b[0]], [b[1], b[1]]]).unwrap()
    }

    #[test]
    fn grid_basics() {
        let g = GridSpec::new(0.0, 1.0, 4).unwrap();
        assert_eq!(g.nodes(), vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.spacing(), 0.25);
        assert!(GridSpec::new(0.0, 1.0, 0).is_err());
        assert!(GridSpec::new(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn constant_function_has_unit_norm() {
        for n in [1, 7, 64] {
            let g = GridSpec::new(0.0, 1.0, n).unwrap();
            let h = discretize(|_| C64::new(1.0, 0.0), &[AxisSpec::Grid(g)], DEFAULT_SAMPLE_BUDGET).unwrap();
            assert!((h.frobenius_norm_sq() - 1.0).abs() <= 1e-14);
        }
        let g = GridSpec::new(0.0, 1.0, 100).unwrap();
        assert!(discretize(one_c, &[AxisSpec::Grid(g), AxisSpec::Grid(g)], 1000).is_err());
    }

    fn one_c(_: &[f64]) -> C64 {
        C64::new(1.0, 0.0)
    }

    #[test]
    fn proportional_functions_give_zero() {
        let g = GridSpec::new(0.0, 1.0, 50).unwrap();
        let b = integral_phi_m1(&[one], &[one], &g).unwrap();
        assert!(b.total.abs() <= 1e-12);
        let b =
            integral_phi_m1(&[|s: f64| C64::new(s.sin(), 0.0)], &[|s: f64| C64::new(3.0 * s.sin(), 0.0)], &g).unwrap();
        assert!(b.total.abs() <= 1e-12 * b.cancellation_mass);
        // the complex equality case pairs ξ with a multiple of its conjugate
        let b = integral_phi_m1(&[|s: f64| C64::new(s.sin(), s)], &[|s: f64| C64::new(3.0 * s.sin(), -3.0 * s)], &g)
            .unwrap();
        assert!(b.total.abs() <= 1e-12 * b.cancellation_mass);
    }

    #[test]
    fn linear_family_midpoint_error_is_exact() {
        for n in [1, 10, 200] {
            let g = GridSpec::new(0.0, 1.0, n).unwrap();
            let v = integral_phi_m1(&[one], &[ident], &g).unwrap().total;
            let nn = n as f64;
            assert!((v - (1.0 / 12.0 - 1.0 / (12.0 * nn * nn))).abs() <= 1e-14);
        }
        let g = GridSpec::new(0.0, 1.0, 200).unwrap();
        let v = integral_phi_m1(&[one], &[ident], &g).unwrap().total;
        assert!((v - 1.0 / 12.0).abs() <= 2e-2 / 12.0);
    }

    #[test]
    fn convergence_is_second_order() {
        let s = convergence_study(&[32, 64, 128, 256]).unwrap();
        assert!(s.monotone);
        for r in &s.ratios {
            assert!((r - 4.0).abs() <= 0.01, "{r}");
        }
    }

    #[test]
    fn cauchy_differences_shrink() {
        let xi = |s: f64| C64::new((-s * s).exp(), 0.5 * s);
        let eta = |s: f64| C64::new(s.cos(), (2.0 * s).sin());
        let xi2 = |s: f64| C64::new(1.0 - s, 0.0);
        let eta2 = |s: f64| C64::new(s * s, -s);
        let values: Vec<f64> = [32, 64, 128, 256, 512]
            .iter()
            .map(|&n| {
                let g = GridSpec::new(-1.0, 1.0, n).unwrap();
                let fx: [&dyn Fn(f64) -> C64; 2] = [&xi, &xi2];
                let fu: [&dyn Fn(f64) -> C64; 2] = [&eta, &eta2];
                integral_phi_m1(&fx, &fu, &g).unwrap().total
            })
            .collect();
        let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");
    }

    #[test]
    fn integral_lagrange_agrees() {
        let g = GridSpec::new(0.0, 2.0, 40).unwrap();
        let xi = |s: f64| C64::new(s.sin(), s * s);
        let eta = |s: f64| C64::new((1.0 + s).ln(), -s);
        let phi = integral_phi_m1(&[xi], &[eta], &g).unwrap();
        let rhs = integral_lagrange_m1(xi, eta, &g).unwrap();
        assert!(phi.relative_deviation(rhs) <= 1e-10);
    }

    #[test]
    fn param_validation() {
        assert!(ParamBlock::new([[1.0, 1.0], [1.0, 0.0]], [[1.0; 2]; 2]).is_err());
        assert!(ParamBlock::new([[1.0, 1.0], [1.0, -2.0]], [[1.0; 2]; 2]).is_err());
        assert!(ParamBlock::new([[1.0, f64::NAN], [1.0, 1.0]], [[1.0; 2]; 2]).is_err());
        let bad = ParamBlock { a: [[1.0; 2]; 2], b: [[1.0, 0.0], [1.0, 1.0]] };
        assert!(power_inequality(&bad).is_err());
        assert!(gaussian_inequality(&bad).is_err());
    }

    #[test]
    fn all_ones_values() {
        let p = ParamBlock::new([[1.0; 2]; 2], [[1.0; 2]; 2]).unwrap();
        assert!((power_inequality(&p).unwrap() - 4.0).abs() <= 1e-12);
        assert!((gaussian_inequality(&p).unwrap() - 8.0).abs() <= 1e-12);
        for family in [Family::Power, Family::Gaussian] {
            let c = dual_path_check(family, &p, 256).unwrap();
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn degenerate_blocks_match_collapsed_expressions() {
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            let a = [rng.random_range(0.1..10.0), rng.random_range(0.1..10.0)];
            let b = [rng.random_range(0.1..10.0), rng.random_range(0.1..10.0)];
            let p = collapsed(a, b);
            let (pw, gs) = (power_inequality(&p).unwrap(), gaussian_inequality(&p).unwrap());
            let (opw, ogs) = (degenerate_power(a, b), degenerate_gaussian(a, b));
            assert!((pw - opw).abs() <= 1e-12 * opw.abs().max(1.0), "{pw} {opw}");
            assert!((gs - ogs).abs() <= 1e-12 * ogs.abs().max(1.0), "{gs} {ogs}");
        }
    }

    #[test]
    fn gaussian_domain_widens_for_small_parameters() {
        assert_eq!(gaussian_half_width(5.0), 8.0);
        let l = gaussian_half_width(0.1);
        assert!(l > 17.0 && (2.0 * 0.1 * l * l - GAUSSIAN_TAIL_EXPONENT).abs() <= 1e-9);
    }

    #[test]
    fn dual_path_random_blocks() {
        let mut rng = rng_from_seed(17);
        for _ in 0..4 {
            let p = ParamBlock::random(1.0, 10.0, &mut rng).unwrap();
            let c = dual_path_check(Family::Power, &p, 512).unwrap();
            assert!(c.pass, "{c:?}");
            let p = ParamBlock::random(0.1, 10.0, &mut rng).unwrap();
            let c = dual_path_check(Family::Gaussian, &p, 512).unwrap();
            assert!(c.pass, "{c:?}");
        }
        assert!(dual_path_check(Family::Power, &ParamBlock::random(1.0, 2.0, &mut rng).unwrap(), 6).is_err());
    }

    #[test]
    fn dual_path_envelope_covers_sign_changing_error() {
        let p = ParamBlock::new(
            [[5.498599492468099, 9.444518934690716], [1.6837009853099563, 7.077884965592778]],
            [[1.7096576719824301, 7.866383004480712], [4.581369837265347, 4.661968796747858]],
        )
        .unwrap();
        let c = dual_path_check(Family::Power, &p, 1024).unwrap();
        let exact = c.closed_form;
        assert!((c.quadrature_coarsest - exact) < 0.0 && (c.quadrature_coarse - exact) > 0.0);
        assert!(c.deviation > 2.0 * (c.quadrature - c.quadrature_coarse).abs());
        assert!(c.pass, "{c:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn closed_forms_are_nonnegative_and_symmetric(seed in any::<u64>()) {
            let p = ParamBlock::random(0.1, 10.0, &mut rng_from_seed(seed)).unwrap();
            for f in [power_inequality, gaussian_inequality] {
                let v = f(&p).unwrap();
                prop_assert!(v >= -1e-9, "{}", v);
                prop_assert_eq!(f(&p.relabeled()).unwrap().to_bits(), v.to_bits());
                prop_assert_eq!(f(&p.swapped()).unwrap().to_bits(), v.to_bits());
            }
        }
    }
}
