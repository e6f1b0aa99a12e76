//! Transforms under which `Φ` is invariant (or rescales by a known factor),
//! paired with a check that compares both sides.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::cbs::{phi_with_budget, CbsInput, DEFAULT_WORK_BUDGET};
use crate::error::{Error, Result};
use crate::hypermatrix::{DimVector, Hypermatrix};
use crate::rng::{rng_from_seed, Rng};

pub const PERMUTE_TOLERANCE: f64 = 1e-12;
pub const UNIT_AXIS_TOLERANCE: f64 = 1e-12;
pub const UNITARY_TOLERANCE: f64 = 1e-10;
/// Multiplied by `cond(Λ)²` to give the mixing tolerance.
pub const MIXING_BASE_TOLERANCE: f64 = 1e-10;
/// Mixing matrices worse conditioned than this are rejected.
pub const MAX_MIXING_CONDITION: f64 = 1e6;

const UNITARITY_TOLERANCE: f64 = 1e-12;

/// A permutation `π` of the axis positions `1..=m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AxisPermutation {
    pi: Vec<usize>,
}

impl AxisPermutation {
    /// `pi[s - 1] = π(s)`, 1-based.
    pub fn new(pi: Vec<usize>) -> Result<Self> {
        let m = pi.len();
        let mut seen = vec![false; m];
        for &p in &pi {
            if p == 0 || p > m || seen[p - 1] {
                return Err(Error::InvalidArgument(format!("{pi:?} is not a permutation of 1..={m}")));
            }
            seen[p - 1] = true;
        }
        Ok(Self { pi })
    }

    pub fn identity(m: usize) -> Self {
        Self { pi: (1..=m).collect() }
    }

    pub fn random(m: usize, rng: &mut Rng) -> Self {
        let mut pi: Vec<usize> = (1..=m).collect();
        pi.shuffle(rng);
        Self { pi }
    }

    pub fn order(&self) -> usize {
        self.pi.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.pi
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.pi.len()];
        for (s, &p) in self.pi.iter().enumerate() {
            inv[p - 1] = s + 1;
        }
        Self { pi: inv }
    }
}

/// Moves axis `s` to position `π(s)`: `d'_{π(s)} = d_s` and
/// `x'_{i'} = x_{i'_{π(1)}, …, i'_{π(m)}}`.
pub fn permute_axes(x: &Hypermatrix, pi: &AxisPermutation) -> Result<Hypermatrix> {
    let m = x.shape().order();
    if pi.order() != m {
        return Err(Error::LengthMismatch { expected: m, found: pi.order() });
    }
    let dims = x.shape().dims();
    let mut new_dims = vec![0; m];
    for s in 0..m {
        new_dims[pi.pi[s] - 1] = dims[s];
    }
    let shape = DimVector::new(new_dims)?;
    let new_strides = shape.strides();
    // stride in the output of each original axis
    let moved: Vec<usize> = (0..m).map(|s| new_strides[pi.pi[s] - 1]).collect();
    let mut out = vec![C64::new(0.0, 0.0); x.data().len()];
    let mut digits = vec![0usize; m];
    for &value in x.data() {
        let target: usize = digits.iter().zip(&moved).map(|(d, st)| d * st).sum();
        out[target] = value;
        for s in (0..m).rev() {
            digits[s] += 1;
            if digits[s] < dims[s] {
                break;
            }
            digits[s] = 0;
        }
    }
    Hypermatrix::from_vec(shape, out)
}

/// Removes a unit axis at 1-based position `s`.
pub fn drop_unit_axis(x: &Hypermatrix, s: usize) -> Result<Hypermatrix> {
    let d = x.shape().dim(s)?;
    if d != 1 {
        return Err(Error::Precondition(format!("axis {s} has dimension {d}, expected 1")));
    }
    Hypermatrix::from_vec(x.shape().without_axis(s)?, x.data().to_vec())
}

/// A `d × d` unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    entries: DMatrix<C64>,
}

impl UnitaryMatrix {
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::InvalidArgument("unitary matrix must be square and nonempty".into()));
        }
        let d = entries.nrows();
        let residual = (&entries * entries.adjoint() - DMatrix::<C64>::identity(d, d)).norm();
        if residual > UNITARITY_TOLERANCE {
            return Err(Error::Numerical(format!("U·U† deviates from identity by {residual:e}")));
        }
        Ok(Self { entries })
    }

    pub fn identity(d: usize) -> Self {
        Self { entries: DMatrix::identity(d, d) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    /// Entrywise conjugate, which is again unitary.
    pub fn conj(&self) -> Self {
        Self { entries: self.entries.map(|z| z.conj()) }
    }
}

fn complex_gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<C64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re * scale, im * scale)
    })
}

/// Haar-distributed unitary from the QR factorization of a complex Gaussian
/// matrix, with the phases of `R`'s diagonal moved into `Q`.
pub fn random_unitary(d: usize, seed: u64) -> Result<UnitaryMatrix> {
    if d == 0 {
        return Err(Error::InvalidArgument("unitary dimension must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let qr = complex_gaussian_matrix(d, d, &mut rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = DMatrix::from_fn(d, d, |i, j| {
        let rii = r[(i, i)];
        if i != j {
            C64::new(0.0, 0.0)
        } else if rii.norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            rii / rii.norm()
        }
    });
    UnitaryMatrix::new(q * phases)
}

/// `(U^(s) x)_{…, i_s, …} = Σ_{i'} U_{i_s, i'} x_{…, i', …}` at 1-based axis `s`.
pub fn apply_unitary(x: &Hypermatrix, u: &UnitaryMatrix, s: usize) -> Result<Hypermatrix> {
    let d = x.shape().dim(s)?;
    if u.dim() != d {
        return Err(Error::ShapeMismatch { expected: vec![d], found: vec![u.dim()] });
    }
    let stride = x.shape().strides()[s - 1];
    let data = x.data();
    let mut out = vec![C64::new(0.0, 0.0); data.len()];
    for base in (0..data.len()).filter(|off| (off / stride).is_multiple_of(d)) {
        for a in 0..d {
            out[base + a * stride] = (0..d).map(|b| u.entries[(a, b)] * data[base + b * stride]).sum();
        }
    }
    Hypermatrix::from_vec(x.shape().clone(), out)
}

/// Applies `U` to every `x`-block and `Ū` to every `u`-block at axis `s`.
pub fn apply_unitary_input(input: &CbsInput, u: &UnitaryMatrix, s: usize) -> Result<CbsInput> {
    let ubar = u.conj();
    input.map_blocks(|x| apply_unitary(x, u, s), |v| apply_unitary(v, &ubar, s))
}

/// An invertible `n × n` matrix `Λ` with `β = (Λᵀ)⁻¹`.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    lambda: DMatrix<C64>,
    beta: DMatrix<C64>,
    cond: f64,
}

impl MixingMatrix {
    pub fn new(lambda: DMatrix<C64>) -> Result<Self> {
        if !lambda.is_square() || lambda.nrows() == 0 {
            return Err(Error::InvalidArgument("mixing matrix must be square and nonempty".into()));
        }
        let n = lambda.nrows();
        let sv = lambda.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if cond.is_nan() || cond > MAX_MIXING_CONDITION {
            return Err(Error::Domain {
                name: "cond(lambda)",
                value: cond,
                reason: "mixing matrix is singular or too ill-conditioned",
            });
        }
        let beta = lambda
            .transpose()
            .lu()
            .solve(&DMatrix::<C64>::identity(n, n))
            .ok_or_else(|| Error::Numerical("LU solve failed on a mixing matrix".into()))?;
        let residual = (lambda.transpose() * &beta - DMatrix::<C64>::identity(n, n)).norm();
        if residual > MIXING_BASE_TOLERANCE * cond * (n as f64) {
            return Err(Error::Numerical(format!("inverse-transpose residual {residual:e}")));
        }
        Ok(Self { lambda, beta, cond })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    /// Complex Gaussian matrix, redrawn until `cond(Λ) ≤ max_cond`.
    pub fn random(n: usize, max_cond: f64, rng: &mut Rng) -> Result<Self> {
        if max_cond < 1.0 {
            return Err(Error::InvalidArgument("max_cond must be at least 1".into()));
        }
        loop {
            if let Ok(mix) = Self::new(complex_gaussian_matrix(n, n, rng)) {
                if mix.cond <= max_cond {
                    return Ok(mix);
                }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn lambda(&self) -> &DMatrix<C64> {
        &self.lambda
    }

    pub fn beta(&self) -> &DMatrix<C64> {
        &self.beta
    }

    pub fn condition_number(&self) -> f64 {
        self.cond
    }

    /// `1e-10 · cond(Λ)²`.
    pub fn tolerance(&self) -> f64 {
        MIXING_BASE_TOLERANCE * self.cond * self.cond
    }
}

/// `x'^(p) = Σ_k α_{p,k} x^(k)` and `u'^(p) = Σ_k β_{p,k} u^(k)`.
pub fn apply_mixing(input: &CbsInput, mix: &MixingMatrix) -> Result<CbsInput> {
    let n = input.n();
    if mix.n() != n {
        return Err(Error::LengthMismatch { expected: n, found: mix.n() });
    }
    let combine = |coeffs: &DMatrix<C64>, blocks: &[Hypermatrix]| -> Result<Vec<Hypermatrix>> {
        (0..n)
            .map(|p| {
                let row: Vec<C64> = (0..n).map(|k| coeffs[(p, k)]).collect();
                Hypermatrix::linear_combination(&row, blocks)
            })
            .collect()
    };
    CbsInput::new(combine(&mix.lambda, input.xs())?, combine(&mix.beta, input.us())?)
}

/// Which invariance law a trial exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvarianceLaw {
    Permute,
    UnitAxis,
    Unitary,
    Mixing,
}

/// Both sides of one invariance law on one input.
#[derive(Debug, Clone, Serialize)]
pub struct InvarianceCheck {
    pub law: InvarianceLaw,
    pub shape: Vec<usize>,
    pub n: usize,
    /// `Φ` of the original input.
    pub original: f64,
    /// `Φ` of the transformed input times the law's factor.
    pub transformed: f64,
    /// Larger of the two cancellation masses (transformed one scaled by the factor).
    pub scale: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn compare(
    law: InvarianceLaw,
    original: &CbsInput,
    transformed: &CbsInput,
    factor: f64,
    tolerance: f64,
) -> Result<InvarianceCheck> {
    let a = phi_with_budget(original, DEFAULT_WORK_BUDGET)?;
    let b = phi_with_budget(transformed, DEFAULT_WORK_BUDGET)?;
    let scale = a.cancellation_mass.max(factor * b.cancellation_mass).max(f64::MIN_POSITIVE);
    let deviation = (a.total - factor * b.total).abs() / scale;
    Ok(InvarianceCheck {
        law,
        shape: original.shape().dims().to_vec(),
        n: original.n(),
        original: a.total,
        transformed: factor * b.total,
        scale,
        deviation,
        tolerance,
        pass: deviation <= tolerance,
    })
}

pub fn permute_input(input: &CbsInput, pi: &AxisPermutation) -> Result<CbsInput> {
    input.map_blocks(|h| permute_axes(h, pi), |h| permute_axes(h, pi))
}

/// `Φ(input) = Φ(π · input)`.
pub fn verify_permutation(input: &CbsInput, pi: &AxisPermutation) -> Result<InvarianceCheck> {
    let moved = permute_input(input, pi)?;
    compare(InvarianceLaw::Permute, input, &moved, 1.0, PERMUTE_TOLERANCE)
}

/// `Φ_d(input) = ((n − 1)/n) · Φ_{d'}(input with axis s dropped)`.
pub fn verify_unit_axis(input: &CbsInput, s: usize) -> Result<InvarianceCheck> {
    let dropped = input.map_blocks(|h| drop_unit_axis(h, s), |h| drop_unit_axis(h, s))?;
    let n = input.n() as f64;
    compare(InvarianceLaw::UnitAxis, input, &dropped, (n - 1.0) / n, UNIT_AXIS_TOLERANCE)
}

/// `Φ(input) = Φ(U^(s) x, Ū^(s) u)`.
pub fn verify_unitary(input: &CbsInput, u: &UnitaryMatrix, s: usize) -> Result<InvarianceCheck> {
    let rotated = apply_unitary_input(input, u, s)?;
    compare(InvarianceLaw::Unitary, input, &rotated, 1.0, UNITARY_TOLERANCE)
}

/// `Φ(input) = Φ(Λ · input)`.
pub fn verify_mixing(input: &CbsInput, mix: &MixingMatrix) -> Result<InvarianceCheck> {
    let mixed = apply_mixing(input, mix)?;
    compare(InvarianceLaw::Mixing, input, &mixed, 1.0, mix.tolerance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbs::phi;
    use crate::hypermatrix::MultiIndex;
    use proptest::prelude::*;

    fn dv(d: &[usize]) -> DimVector {
        DimVector::new(d.to_vec()).unwrap()
    }

    fn input(dims: &[usize], n: usize, seed: u64) -> CbsInput {
        CbsInput::random_gaussian(&dv(dims), n, &mut rng_from_seed(seed)).unwrap()
    }

    #[test]
    fn permutation_validation() {
        assert!(AxisPermutation::new(vec![2, 1, 3]).is_ok());
        assert!(AxisPermutation::new(vec![1, 1]).is_err());
        assert!(AxisPermutation::new(vec![0, 1]).is_err());
        assert!(AxisPermutation::new(vec![3, 1]).is_err());
        let p = AxisPermutation::new(vec![2, 3, 1]).unwrap();
        assert_eq!(p.inverse().images(), &[3, 1, 2]);
    }

    #[test]
    fn identity_permutation_is_noop() {
        let x = input(&[2, 3, 4], 1, 1).xs()[0].clone();
        assert_eq!(permute_axes(&x, &AxisPermutation::identity(3)).unwrap(), x);
    }

    #[test]
    fn swap_is_transpose() {
        let x = Hypermatrix::from_real(dv(&[2, 3]), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let t = permute_axes(&x, &AxisPermutation::new(vec![2, 1]).unwrap()).unwrap();
        let expected = Hypermatrix::from_real(dv(&[3, 2]), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]).unwrap();
        assert_eq!(t, expected);
    }

    #[test]
    fn permute_matches_elementwise_definition() {
        let x = input(&[2, 3, 4], 1, 2).xs()[0].clone();
        let pi = AxisPermutation::new(vec![3, 1, 2]).unwrap();
        let y = permute_axes(&x, &pi).unwrap();
        assert_eq!(y.shape().dims(), &[3, 4, 2]);
        for idx in y.shape().multi_indices() {
            let c = idx.components();
            let source = MultiIndex::new(pi.images().iter().map(|&p| c[p - 1]).collect::<Vec<_>>());
            assert_eq!(y.get(&idx).unwrap(), x.get(&source).unwrap());
        }
        assert!(permute_axes(&x, &AxisPermutation::identity(2)).is_err());
    }

    #[test]
    fn drop_unit_axis_examples() {
        let x = Hypermatrix::from_real(dv(&[1, 3]), &[1.0, 2.0, 3.0]).unwrap();
        let y = drop_unit_axis(&x, 1).unwrap();
        assert_eq!(y, Hypermatrix::from_real(dv(&[3]), &[1.0, 2.0, 3.0]).unwrap());
        assert!(matches!(drop_unit_axis(&x, 2), Err(Error::Precondition(_))));
        assert!(drop_unit_axis(&x, 3).is_err());
    }

    #[test]
    fn unit_axis_with_single_block_vanishes() {
        let inp = input(&[3, 1, 2], 1, 3);
        let b = phi(&inp).unwrap();
        assert!(b.total.abs() <= 1e-12 * b.cancellation_mass);
        assert!(verify_unit_axis(&inp, 2).unwrap().pass);
    }

    #[test]
    fn unit_axis_factor_law() {
        for (dims, s, n) in [(vec![1, 3], 1, 2), (vec![2, 1, 3], 2, 3), (vec![2, 2, 1], 3, 4)] {
            let c = verify_unit_axis(&input(&dims, n, 4), s).unwrap();
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn random_unitary_contract() {
        let u1 = random_unitary(1, 5).unwrap();
        assert!((u1.entries()[(0, 0)].norm() - 1.0).abs() <= 1e-14);
        for d in 1..6 {
            let u = random_unitary(d, 7).unwrap();
            let r = (u.entries() * u.entries().adjoint() - DMatrix::<C64>::identity(d, d)).norm();
            assert!(r <= 1e-12);
            assert_eq!(random_unitary(d, 7).unwrap(), u);
        }
        let (a, b) = (random_unitary(4, 1).unwrap(), random_unitary(4, 2).unwrap());
        assert!((a.entries() - b.entries()).norm() > 1e-6);
        assert!(random_unitary(0, 1).is_err());
        assert!(UnitaryMatrix::new(DMatrix::from_element(2, 2, C64::new(1.0, 0.0))).is_err());
    }

    #[test]
    fn unitary_action_basics() {
        let x = input(&[3, 4], 1, 8).xs()[0].clone();
        assert_eq!(apply_unitary(&x, &UnitaryMatrix::identity(4), 2).unwrap(), x);
        let u = random_unitary(3, 9).unwrap();
        let y = apply_unitary(&x, &u, 1).unwrap();
        assert!((y.frobenius_norm_sq() - x.frobenius_norm_sq()).abs() <= 1e-12 * x.frobenius_norm_sq());
        assert!(apply_unitary(&x, &u, 2).is_err());
        // at axis 1 of a matrix the action is U·X
        let xm = DMatrix::from_row_slice(3, 4, x.data());
        let ym = DMatrix::from_row_slice(3, 4, y.data());
        assert!((u.entries() * xm - ym).norm() <= 1e-12);
    }

    #[test]
    fn product_of_unitaries_on_every_axis() {
        let inp = input(&[2, 3, 2], 2, 10);
        let mut rotated = inp.clone();
        for (s, d) in [(3, 2), (1, 2), (2, 3)] {
            rotated = apply_unitary_input(&rotated, &random_unitary(d, s as u64).unwrap(), s).unwrap();
        }
        let (a, b) = (phi(&inp).unwrap(), phi(&rotated).unwrap());
        assert!(a.relative_deviation(b.total) <= UNITARY_TOLERANCE);
    }

    #[test]
    fn mixing_identity_and_diagonal() {
        let inp = input(&[2, 2], 3, 11);
        let same = apply_mixing(&inp, &MixingMatrix::identity(3).unwrap()).unwrap();
        assert_eq!(same.xs(), inp.xs());
        assert_eq!(same.us(), inp.us());
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(2.0, 1.0),
            C64::new(0.0, -0.5),
            C64::new(3.0, 0.0),
        ]));
        let c = verify_mixing(&inp, &MixingMatrix::new(diag).unwrap()).unwrap();
        assert!(c.pass, "{c:?}");
        assert!(apply_mixing(&inp, &MixingMatrix::identity(2).unwrap()).is_err());
    }

    #[test]
    fn mixing_rejects_singular_and_ill_conditioned() {
        let singular = DMatrix::from_element(2, 2, C64::new(1.0, 0.0));
        assert!(matches!(MixingMatrix::new(singular), Err(Error::Domain { .. })));
        let bad = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1e-7, 0.0)]));
        assert!(MixingMatrix::new(bad).is_err());
    }

    #[test]
    fn mixing_beta_is_inverse_transpose() {
        let mix = MixingMatrix::random(4, 1e3, &mut rng_from_seed(12)).unwrap();
        assert!(mix.condition_number() <= 1e3);
        let prod = mix.lambda().transpose() * mix.beta();
        assert!((prod - DMatrix::<C64>::identity(4, 4)).norm() <= 1e-10 * mix.condition_number());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn permutation_round_trip_and_invariance(
            seed in any::<u64>(),
            dims in prop::collection::vec(1usize..4, 1..4),
            n in 1usize..4,
        ) {
            let mut rng = rng_from_seed(seed);
            let inp = CbsInput::random_gaussian(&DimVector::new(dims.clone()).unwrap(), n, &mut rng).unwrap();
            let pi = AxisPermutation::random(dims.len(), &mut rng);
            let x = &inp.xs()[0];
            let back = permute_axes(&permute_axes(x, &pi).unwrap(), &pi.inverse()).unwrap();
            prop_assert_eq!(&back, x);
            let c = verify_permutation(&inp, &pi).unwrap();
            prop_assert!(c.pass, "{:?}", c);
        }

        #[test]
        fn unitary_invariance(seed in any::<u64>(), dims in prop::collection::vec(1usize..4, 1..4), n in 1usize..4) {
            let mut rng = rng_from_seed(seed);
            let shape = DimVector::new(dims.clone()).unwrap();
            let inp = CbsInput::random_gaussian(&shape, n, &mut rng).unwrap();
            let s = 1 + (seed as usize) % dims.len();
            let u = random_unitary(dims[s - 1], seed).unwrap();
            let c = verify_unitary(&inp, &u, s).unwrap();
            prop_assert!(c.pass, "{:?}", c);
        }

        #[test]
        fn mixing_invariance(seed in any::<u64>(), dims in prop::collection::vec(1usize..4, 1..3), n in 1usize..4) {
            let mut rng = rng_from_seed(seed);
            let inp = CbsInput::random_gaussian(&DimVector::new(dims).unwrap(), n, &mut rng).unwrap();
            let mix = MixingMatrix::random(n, 1e3, &mut rng).unwrap();
            let c = verify_mixing(&inp, &mix).unwrap();
            prop_assert!(c.pass, "{:?}", c);
        }
    }
}
