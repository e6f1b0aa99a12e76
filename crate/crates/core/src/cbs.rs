//! The generalized CBS functional `Φ_d^(n)`.
//!
//! For `n` pairs `(x^(k), u^(k))` of same-shape hypermatrices,
//!
//! ```text
//! Φ = Σ_{Q ⊆ I_m} (-1/n)^{|Q|} Φ_Q
//! Φ_Q = Σ_{i_p, j_p : p ∉ Q} | Σ_{i_q = j_q : q ∈ Q} Σ_k x^(k)_i u^(k)_j |²
//! ```
//!
//! Each `Φ_Q` is a sum of squared moduli, so it is nonnegative; all the sign
//! structure lives in the alternating weights. The total is accumulated with
//! compensated summation in a fixed subset order (increasing `|Q|`), which
//! keeps the result bit-identical regardless of how many threads computed the
//! per-subset terms.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypermatrix::{DimVector, Hypermatrix, IndexSubset};
use crate::numeric::CompensatedSum;
use crate::rng::Rng;

/// Default ceiling on scalar multiply-adds for a single evaluation.
pub const DEFAULT_WORK_BUDGET: u128 = 1_000_000_000;

/// Above this many multiply-adds the per-subset terms are computed in parallel.
const PARALLEL_THRESHOLD: u128 = 1 << 20;

/// The argument of `Φ_d^(n)`: `n >= 1` pairs of hypermatrices sharing one shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CbsInputFile", into = "CbsInputFile")]
pub struct CbsInput {
    xs: Vec<Hypermatrix>,
    us: Vec<Hypermatrix>,
}

impl CbsInput {
    pub fn new(xs: Vec<Hypermatrix>, us: Vec<Hypermatrix>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if xs.len() != us.len() {
            return Err(Error::InvalidArgument(format!("{} x-blocks but {} u-blocks", xs.len(), us.len())));
        }
        let shape = xs[0].shape();
        for h in xs.iter().chain(&us) {
            shape.require_same(h.shape())?;
        }
        Ok(Self { xs, us })
    }

    pub fn zeros(shape: DimVector, n: usize) -> Result<Self> {
        let z = Hypermatrix::zeros(shape);
        Self::new(vec![z.clone(); n], vec![z; n])
    }

    /// Every one of the `2n` blocks drawn independently from the unit sphere.
    pub fn random_unit_sphere(shape: &DimVector, n: usize, rng: &mut Rng) -> Result<Self> {
        let xs = (0..n).map(|_| Hypermatrix::random_unit_sphere(shape.clone(), rng)).collect();
        let us = (0..n).map(|_| Hypermatrix::random_unit_sphere(shape.clone(), rng)).collect();
        Self::new(xs, us)
    }

    pub fn random_gaussian(shape: &DimVector, n: usize, rng: &mut Rng) -> Result<Self> {
        let xs = (0..n).map(|_| Hypermatrix::random_gaussian(shape.clone(), rng)).collect();
        let us = (0..n).map(|_| Hypermatrix::random_gaussian(shape.clone(), rng)).collect();
        Self::new(xs, us)
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn shape(&self) -> &DimVector {
        self.xs[0].shape()
    }

    pub fn xs(&self) -> &[Hypermatrix] {
        &self.xs
    }

    pub fn us(&self) -> &[Hypermatrix] {
        &self.us
    }

    pub fn into_parts(self) -> (Vec<Hypermatrix>, Vec<Hypermatrix>) {
        (self.xs, self.us)
    }

    /// Applies `fx` to every x-block and `fu` to every u-block.
    pub fn map_blocks(
        &self,
        fx: impl Fn(&Hypermatrix) -> Result<Hypermatrix>,
        fu: impl Fn(&Hypermatrix) -> Result<Hypermatrix>,
    ) -> Result<Self> {
        let xs = self.xs.iter().map(&fx).collect::<Result<Vec<_>>>()?;
        let us = self.us.iter().map(&fu).collect::<Result<Vec<_>>>()?;
        Self::new(xs, us)
    }
}

#[derive(Serialize, Deserialize)]
struct CbsInputFile {
    n: usize,
    xs: Vec<Hypermatrix>,
    us: Vec<Hypermatrix>,
}

impl TryFrom<CbsInputFile> for CbsInput {
    type Error = Error;
    fn try_from(f: CbsInputFile) -> Result<Self> {
        if f.xs.len() != f.n || f.us.len() != f.n {
            return Err(Error::Format(format!(
                "declared n = {} but found {} xs and {} us",
                f.n,
                f.xs.len(),
                f.us.len()
            )));
        }
        CbsInput::new(f.xs, f.us)
    }
}

impl From<CbsInput> for CbsInputFile {
    fn from(c: CbsInput) -> Self {
        CbsInputFile { n: c.xs.len(), xs: c.xs, us: c.us }
    }
}

/// One term `(-1/n)^{|Q|} Φ_Q` of the alternating sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetTerm {
    #[serde(with = "subset_positions")]
    pub subset: IndexSubset,
    pub weight: f64,
    pub value: f64,
}

mod subset_positions {
    use super::IndexSubset;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        m: usize,
        positions: Vec<usize>,
    }

    pub fn serialize<S: Serializer>(q: &IndexSubset, s: S) -> Result<S::Ok, S::Error> {
        Repr { m: q.order(), positions: q.positions() }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<IndexSubset, D::Error> {
        let r = Repr::deserialize(d)?;
        IndexSubset::from_positions(r.m, &r.positions).map_err(serde::de::Error::custom)
    }
}

/// `Φ` together with its per-subset decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiBreakdown {
    pub total: f64,
    pub cancellation_mass: f64,
    pub per_subset: Vec<SubsetTerm>,
}

impl PhiBreakdown {
    /// Relative deviation of `other` from this total, measured against the
    /// cancellation mass `Σ_Q |weight · Φ_Q|`.
    pub fn relative_deviation(&self, other: f64) -> f64 {
        crate::numeric::relative_deviation(self.total, other, self.cancellation_mass)
    }
}

/// `(-1/n)^{|Q|}`.
pub fn subset_weight(q: &IndexSubset, n: usize) -> f64 {
    (-1.0 / n as f64).powi(q.len() as i32)
}

/// Exact multiply-add count of a full evaluation: `n · ∏_k (d_k² + d_k)`.
pub fn work_estimate(shape: &DimVector, n: usize) -> u128 {
    shape.dims().iter().fold(n as u128, |acc, &d| acc.saturating_mul((d as u128) * (d as u128) + d as u128))
}

pub fn check_budget(shape: &DimVector, n: usize, budget: u128) -> Result<u128> {
    let estimate = work_estimate(shape, n);
    if estimate > budget {
        return Err(Error::BudgetExceeded { estimate, budget });
    }
    Ok(estimate)
}

fn check_subset(q: &IndexSubset, shape: &DimVector) -> Result<()> {
    if q.order() != shape.order() {
        return Err(Error::InvalidArgument(format!(
            "subset over m = {} used with a shape of order {}",
            q.order(),
            shape.order()
        )));
    }
    Ok(())
}

/// Offsets of the outer axes (`p ∉ Q`) and of the contracted axes (`q ∈ Q`).
struct SubsetLayout {
    outer: Vec<usize>,
    inner: Vec<usize>,
}

impl SubsetLayout {
    fn new(shape: &DimVector, q: &IndexSubset) -> Self {
        Self { outer: shape.partial_offsets(&q.complement()), inner: shape.partial_offsets(q) }
    }

    /// The contracted amplitude for outer offsets `(a, b)`.
    #[inline]
    fn amplitude(&self, xs: &[&[C64]], us: &[&[C64]], a: usize, b: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &c in &self.inner {
            for (x, u) in xs.iter().zip(us) {
                acc += x[a + c] * u[b + c];
            }
        }
        acc
    }
}

fn raw_blocks(input: &CbsInput) -> (Vec<&[C64]>, Vec<&[C64]>) {
    (input.xs.iter().map(|h| h.data()).collect(), input.us.iter().map(|h| h.data()).collect())
}

fn subset_value(shape: &DimVector, q: &IndexSubset, xs: &[&[C64]], us: &[&[C64]]) -> f64 {
    let layout = SubsetLayout::new(shape, q);
    let mut acc = CompensatedSum::new();
    for &a in &layout.outer {
        for &b in &layout.outer {
            acc.add(layout.amplitude(xs, us, a, b).norm_sqr());
        }
    }
    acc.value()
}

/// `Φ_Q`: the nonnegative contribution of a single subset, before weighting.
pub fn phi_subset(q: &IndexSubset, input: &CbsInput) -> Result<f64> {
    check_subset(q, input.shape())?;
    let (xs, us) = raw_blocks(input);
    Ok(subset_value(input.shape(), q, &xs, &us))
}

/// `Φ_d^(n)` with the default work budget.
pub fn phi(input: &CbsInput) -> Result<PhiBreakdown> {
    phi_with_budget(input, DEFAULT_WORK_BUDGET)
}

pub fn phi_with_budget(input: &CbsInput, budget: u128) -> Result<PhiBreakdown> {
    let shape = input.shape();
    let estimate = check_budget(shape, input.n(), budget)?;
    let subsets = IndexSubset::all(shape.order())?;
    let (xs, us) = raw_blocks(input);
    let values: Vec<f64> = if estimate > PARALLEL_THRESHOLD {
        subsets.par_iter().map(|q| subset_value(shape, q, &xs, &us)).collect()
    } else {
        subsets.iter().map(|q| subset_value(shape, q, &xs, &us)).collect()
    };
    let n = input.n();
    let per_subset: Vec<SubsetTerm> = subsets
        .into_iter()
        .zip(values)
        .map(|(subset, value)| SubsetTerm { weight: subset_weight(&subset, n), subset, value })
        .collect();
    let mut total = CompensatedSum::new();
    let mut mass = CompensatedSum::new();
    for t in &per_subset {
        total.add(t.weight * t.value);
        mass.add((t.weight * t.value).abs());
    }
    Ok(PhiBreakdown { total: total.value(), cancellation_mass: mass.value(), per_subset })
}

/// Value and real-parameter gradient of `Φ`.
///
/// The gradient of block entry `z = a + ib` is packed as `∂Φ/∂a + i ∂Φ/∂b`,
/// i.e. `2 ∂Φ/∂z̄`.
#[derive(Debug, Clone)]
pub struct PhiGradient {
    pub value: f64,
    pub grad_xs: Vec<Vec<C64>>,
    pub grad_us: Vec<Vec<C64>>,
}

pub fn phi_gradient(input: &CbsInput, budget: u128) -> Result<PhiGradient> {
    let shape = input.shape();
    check_budget(shape, input.n(), budget.saturating_div(2))?;
    let (xs, us) = raw_blocks(input);
    let n = input.n();
    let size = shape.size();
    let mut grad_xs = vec![vec![C64::new(0.0, 0.0); size]; n];
    let mut grad_us = vec![vec![C64::new(0.0, 0.0); size]; n];
    let mut total = CompensatedSum::new();
    for q in IndexSubset::all(shape.order())? {
        let w = subset_weight(&q, n);
        let layout = SubsetLayout::new(shape, &q);
        let mut value = CompensatedSum::new();
        for &a in &layout.outer {
            for &b in &layout.outer {
                let amp = layout.amplitude(&xs, &us, a, b);
                value.add(amp.norm_sqr());
                // |A|² has ∂/∂x̄ = A · conj(∂A/∂x)
                let g = amp * (2.0 * w);
                for &c in &layout.inner {
                    for k in 0..n {
                        grad_xs[k][a + c] += g * us[k][b + c].conj();
                        grad_us[k][b + c] += g * xs[k][a + c].conj();
                    }
                }
            }
        }
        total.add(w * value.value());
    }
    Ok(PhiGradient { value: total.value(), grad_xs, grad_us })
}

fn as_vector(h: &Hypermatrix) -> &[C64] {
    h.data()
}

fn as_matrix(h: &Hypermatrix) -> DMatrix<C64> {
    let d = h.shape().dims();
    DMatrix::from_row_slice(d[0], d[1], h.data())
}

/// Closed form for `m = 1`: with `X = Σ_k (x^(k))ᵀ u^(k)`, returns
/// `‖X‖² - |tr X|² / n`.
pub fn phi_m1_closed(input: &CbsInput) -> Result<f64> {
    if input.shape().order() != 1 {
        return Err(Error::Precondition(format!("closed form needs m = 1, got m = {}", input.shape().order())));
    }
    let d = input.shape().size();
    let mut x = DMatrix::<C64>::zeros(d, d);
    for (xk, uk) in input.xs.iter().zip(&input.us) {
        let col = nalgebra::DVector::from_column_slice(as_vector(xk));
        let row = nalgebra::RowDVector::from_row_slice(as_vector(uk));
        x += col * row;
    }
    Ok(x.norm_squared() - x.trace().norm_sqr() / input.n() as f64)
}

/// Matrix form for `m = 2, n = 2` with `(x, y, u, v) = (x^(1), x^(2), u^(1), u^(2))`:
///
/// `‖x⊗u + y⊗v‖² - ½‖xᵀu + yᵀv‖² - ½‖uxᵀ + vyᵀ‖² + ¼|tr(xᵀu + yᵀv)|²`.
pub fn phi_m2_compact(input: &CbsInput) -> Result<f64> {
    if input.shape().order() != 2 || input.n() != 2 {
        return Err(Error::Precondition(format!(
            "compact form needs m = 2 and n = 2, got m = {} and n = {}",
            input.shape().order(),
            input.n()
        )));
    }
    let x = as_matrix(&input.xs[0]);
    let y = as_matrix(&input.xs[1]);
    let u = as_matrix(&input.us[0]);
    let v = as_matrix(&input.us[1]);
    let kron = x.kronecker(&u) + y.kronecker(&v);
    let left = x.transpose() * &u + y.transpose() * &v;
    let right = &u * x.transpose() + &v * y.transpose();
    Ok(kron.norm_squared() - 0.5 * left.norm_squared() - 0.5 * right.norm_squared() + 0.25 * left.trace().norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn vec_input(xs: &[&[f64]], us: &[&[f64]]) -> CbsInput {
        let shape = DimVector::new(vec![xs[0].len()]).unwrap();
        let mk = |v: &&[f64]| Hypermatrix::from_real(shape.clone(), v).unwrap();
        CbsInput::new(xs.iter().map(mk).collect(), us.iter().map(mk).collect()).unwrap()
    }

    #[test]
    fn subset_examples() {
        let input = vec_input(&[&[1.0, 2.0]], &[&[3.0, 4.0]]);
        let empty = IndexSubset::empty(1).unwrap();
        let full = IndexSubset::full(1).unwrap();
        assert_eq!(phi_subset(&full, &input).unwrap(), 121.0);
        assert_eq!(phi_subset(&empty, &input).unwrap(), 125.0);
        assert!(phi_subset(&IndexSubset::empty(2).unwrap(), &input).is_err());
    }

    #[test]
    fn empty_subset_is_norm_of_outer_product_sum() {
        let mut rng = rng_from_seed(3);
        let shape = DimVector::new(vec![2, 3]).unwrap();
        let input = CbsInput::random_gaussian(&shape, 2, &mut rng).unwrap();
        let mut outer = Vec::new();
        for i in 0..shape.size() {
            for j in 0..shape.size() {
                outer.push((0..2).map(|k| input.xs()[k].data()[i] * input.us()[k].data()[j]).sum::<C64>());
            }
        }
        let expected: f64 = outer.iter().map(|z| z.norm_sqr()).sum();
        let got = phi_subset(&IndexSubset::empty(2).unwrap(), &input).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn phi_examples() {
        let input = vec_input(&[&[1.0, 2.0]], &[&[3.0, 4.0]]);
        let b = phi(&input).unwrap();
        assert_eq!(b.total, 4.0);
        assert_eq!(b.cancellation_mass, 246.0);
        assert_eq!(b.per_subset.len(), 2);

        let two = vec_input(&[&[1.0, 0.0], &[0.0, 1.0]], &[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(phi(&two).unwrap().total, 2.0);

        for dims in [vec![3], vec![2, 2], vec![1, 3, 2]] {
            let zero = CbsInput::zeros(DimVector::new(dims).unwrap(), 3).unwrap();
            assert_eq!(phi(&zero).unwrap().total, 0.0);
        }
    }

    #[test]
    fn closed_forms_examples() {
        let input = vec_input(&[&[1.0, 2.0]], &[&[3.0, 4.0]]);
        assert_eq!(phi_m1_closed(&input).unwrap(), 4.0);
        let two = vec_input(&[&[1.0, 0.0], &[0.0, 1.0]], &[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(phi_m1_closed(&two).unwrap(), 2.0);
        let zero = CbsInput::zeros(DimVector::new(vec![4]).unwrap(), 2).unwrap();
        assert_eq!(phi_m1_closed(&zero).unwrap(), 0.0);

        let s = DimVector::new(vec![2, 2]).unwrap();
        let id = Hypermatrix::from_real(s.clone(), &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let eye = CbsInput::new(vec![id.clone(), id.clone()], vec![id.clone(), id]).unwrap();
        let direct = phi(&eye).unwrap();
        assert!(direct.relative_deviation(phi_m2_compact(&eye).unwrap()) <= 1e-12);
        assert_eq!(phi_m2_compact(&CbsInput::zeros(s, 2).unwrap()).unwrap(), 0.0);

        assert!(phi_m1_closed(&eye).is_err());
        assert!(phi_m2_compact(&input).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let shape = DimVector::new(vec![10, 10, 10]).unwrap();
        let input = CbsInput::zeros(shape.clone(), 2).unwrap();
        assert_eq!(work_estimate(&shape, 2), 2 * 110 * 110 * 110);
        assert!(matches!(phi_with_budget(&input, 1000), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn parallel_and_serial_paths_agree_bitwise() {
        let shape = DimVector::new(vec![10, 10, 10]).unwrap();
        assert!(work_estimate(&shape, 1) > PARALLEL_THRESHOLD);
        let mut rng = rng_from_seed(9);
        let input = CbsInput::random_gaussian(&shape, 1, &mut rng).unwrap();
        let par = phi(&input).unwrap();
        let (xs, us) = raw_blocks(&input);
        let mut total = CompensatedSum::new();
        for q in IndexSubset::all(3).unwrap() {
            total.add(subset_weight(&q, 1) * subset_value(&shape, &q, &xs, &us));
        }
        assert_eq!(par.total.to_bits(), total.value().to_bits());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(21);
        for (dims, n) in [(vec![3], 2), (vec![2, 3], 2), (vec![2, 2, 2], 3), (vec![3, 2], 1)] {
            let shape = DimVector::new(dims).unwrap();
            let input = CbsInput::random_gaussian(&shape, n, &mut rng).unwrap();
            let g = phi_gradient(&input, DEFAULT_WORK_BUDGET).unwrap();
            assert!(phi(&input).unwrap().relative_deviation(g.value) <= 1e-12);
            let h = 1e-6;
            let (xs, us) = input.clone().into_parts();
            let eval = |xs: &[Hypermatrix], us: &[Hypermatrix]| {
                phi(&CbsInput::new(xs.to_vec(), us.to_vec()).unwrap()).unwrap().total
            };
            let scale = g.grad_xs.iter().chain(&g.grad_us).flatten().map(|z| z.norm()).fold(0.0, f64::max);
            for side in 0..2 {
                for k in 0..n {
                    for e in 0..shape.size() {
                        for (dir, part) in [(C64::new(1.0, 0.0), 0), (C64::new(0.0, 1.0), 1)] {
                            let bump = |s: f64| {
                                let (mut xs2, mut us2) = (xs.clone(), us.clone());
                                let target = if side == 0 { &mut xs2 } else { &mut us2 };
                                let mut d = target[k].clone().into_data();
                                d[e] += dir * s;
                                target[k] = Hypermatrix::from_vec(shape.clone(), d).unwrap();
                                eval(&xs2, &us2)
                            };
                            let fd = (bump(h) - bump(-h)) / (2.0 * h);
                            let packed = if side == 0 { g.grad_xs[k][e] } else { g.grad_us[k][e] };
                            let an = if part == 0 { packed.re } else { packed.im };
                            assert!((fd - an).abs() <= 1e-5 * scale.max(1.0), "side {side}: fd {fd} vs {an}");
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn scaling_law(seed in any::<u64>(), re in -2.0f64..2.0, im in -2.0f64..2.0, n in 1usize..4) {
            let mut rng = rng_from_seed(seed);
            let shape = DimVector::new(vec![2, 3]).unwrap();
            let input = CbsInput::random_gaussian(&shape, n, &mut rng).unwrap();
            let c = C64::new(re, im);
            let base = phi(&input).unwrap();
            let scaled_x = input.map_blocks(|h| Ok(h.scale(c)), |h| Ok(h.clone())).unwrap();
            let scaled_u = input.map_blocks(|h| Ok(h.clone()), |h| Ok(h.scale(c))).unwrap();
            let c2 = c.norm_sqr();
            for s in [scaled_x, scaled_u] {
                let b = phi(&s).unwrap();
                prop_assert!((b.total - c2 * base.total).abs() <= 1e-12 * c2 * base.cancellation_mass + 1e-300);
            }
        }

        #[test]
        fn breakdown_is_consistent(seed in any::<u64>(), n in 1usize..4) {
            let mut rng = rng_from_seed(seed);
            let shape = DimVector::new(vec![2, 2, 2]).unwrap();
            let input = CbsInput::random_gaussian(&shape, n, &mut rng).unwrap();
            let b = phi(&input).unwrap();
            prop_assert!(b.per_subset.iter().all(|t| t.value >= 0.0));
            let recomputed: f64 = b.per_subset.iter().map(|t| t.weight * t.value).sum();
            prop_assert!((recomputed - b.total).abs() <= 1e-12 * b.cancellation_mass);
        }

        #[test]
        fn m1_closed_form_agrees(seed in any::<u64>(), d in 1usize..7, n in 1usize..5) {
            let mut rng = rng_from_seed(seed);
            let shape = DimVector::new(vec![d]).unwrap();
            let input = CbsInput::random_gaussian(&shape, n, &mut rng).unwrap();
            let b = phi(&input).unwrap();
            prop_assert!(b.relative_deviation(phi_m1_closed(&input).unwrap()) <= 1e-12);
            prop_assert!(b.total >= -1e-12 * b.cancellation_mass.max(1.0));
        }

        #[test]
        fn m2_compact_form_agrees(seed in any::<u64>(), d1 in 1usize..4, d2 in 1usize..4) {
            let mut rng = rng_from_seed(seed);
            let shape = DimVector::new(vec![d1, d2]).unwrap();
            let input = CbsInput::random_unit_sphere(&shape, 2, &mut rng).unwrap();
            let b = phi(&input).unwrap();
            prop_assert!(b.relative_deviation(phi_m2_compact(&input).unwrap()) <= 1e-12);
        }
    }
}
