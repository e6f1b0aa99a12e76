//! The hypermatrix Lagrange identity.
//!
//! For a pair of multi-indices `(i; j)` the kernel
//!
//! ```text
//! σ_{i;j}(x, u) = Σ_{Q ⊆ I_m} (-1)^{|Q|} x_{i^{Q,j}} u_{j^{Q,i}}
//! ```
//!
//! changes sign under every single-position swap, so it vanishes whenever
//! `i_s = j_s` for some `s`. The identity states
//!
//! ```text
//! Φ^(1)(x, u) = 2^{-m} Σ_{i,j} |σ_{i;j}(x, ū)|² = Σ_{i<j} |σ_{i;j}(x, ū)|²
//! ```
//!
//! where `i < j` means `i_s < j_s` for every `s`. Over ℤ (or any commutative
//! ring) the same polynomial identity holds with squares in place of squared
//! moduli; [`lagrange_exact`] checks it with arbitrary-precision integers.

use std::ops::{Mul, Sub};

use num_bigint::BigInt;
use num_complex::Complex64 as C64;
use num_traits::Zero;
use serde::Serialize;

use crate::cbs::{phi, CbsInput};
use crate::error::{Error, Result};
use crate::hypermatrix::{modified_indices, DimVector, Hypermatrix, IndexSubset, IntHypermatrix, MultiIndex};
use crate::numeric::CompensatedSum;

/// Default relative tolerance for [`verify_lagrange`].
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Absolute tolerance of the floating-point sign check.
pub const SIGN_CHECK_TOLERANCE: f64 = 1e-13;

/// Entries the σ kernel can be evaluated over.
pub trait RingElement: Clone + Zero + Sub<Output = Self> + Mul<Output = Self> {}

impl<T: Clone + Zero + Sub<Output = T> + Mul<Output = T>> RingElement for T {}

/// Precomputed per-shape data for evaluating σ by offsets.
struct SigmaKernel {
    strides: Vec<usize>,
    m: usize,
}

impl SigmaKernel {
    fn new(shape: &DimVector) -> Self {
        Self { strides: shape.strides(), m: shape.order() }
    }

    /// `i` and `j` are 0-based digit vectors.
    fn eval<T: RingElement>(&self, i: &[usize], j: &[usize], x: &[T], u: &[T]) -> T {
        let mut plus = T::zero();
        let mut minus = T::zero();
        for mask in 0u64..1 << self.m {
            let (mut xi, mut uj) = (0usize, 0usize);
            for p in 0..self.m {
                let (a, b) = if mask >> p & 1 == 1 { (j[p], i[p]) } else { (i[p], j[p]) };
                xi += a * self.strides[p];
                uj += b * self.strides[p];
            }
            let term = x[xi].clone() * u[uj].clone();
            if mask.count_ones() % 2 == 0 {
                plus = plus + term;
            } else {
                minus = minus + term;
            }
        }
        plus - minus
    }
}

fn zero_based(shape: &DimVector, idx: &MultiIndex) -> Result<Vec<usize>> {
    shape.check_index(idx)?;
    Ok(idx.components().iter().map(|&c| c - 1).collect())
}

fn digits_table(shape: &DimVector) -> Vec<Vec<usize>> {
    shape.multi_indices().map(|idx| idx.components().iter().map(|&c| c - 1).collect()).collect()
}

/// `σ_{i;j}(x, u)` over complex entries.
pub fn sigma(i: &MultiIndex, j: &MultiIndex, x: &Hypermatrix, u: &Hypermatrix) -> Result<C64> {
    x.shape().require_same(u.shape())?;
    let kernel = SigmaKernel::new(x.shape());
    let (i0, j0) = (zero_based(x.shape(), i)?, zero_based(x.shape(), j)?);
    Ok(kernel.eval(&i0, &j0, x.data(), u.data()))
}

/// `σ_{i;j}(x, u)` over exact integers.
pub fn sigma_int(i: &MultiIndex, j: &MultiIndex, x: &IntHypermatrix, u: &IntHypermatrix) -> Result<BigInt> {
    x.shape().require_same(u.shape())?;
    let kernel = SigmaKernel::new(x.shape());
    let (i0, j0) = (zero_based(x.shape(), i)?, zero_based(x.shape(), j)?);
    Ok(kernel.eval(&i0, &j0, x.data(), u.data()))
}

/// Whether `σ_{i^{Q,j}; j^{Q,i}} = (-1)^{|Q|} σ_{i;j}` holds, to
/// [`SIGN_CHECK_TOLERANCE`] absolute.
pub fn sigma_sign_check(
    i: &MultiIndex,
    j: &MultiIndex,
    q: &IndexSubset,
    x: &Hypermatrix,
    u: &Hypermatrix,
) -> Result<bool> {
    let (i2, j2) = modified_indices(i, j, q)?;
    let base = sigma(i, j, x, u)?;
    let swapped = sigma(&i2, &j2, x, u)?;
    let sign = if q.len().is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok((swapped - base * sign).norm() <= SIGN_CHECK_TOLERANCE)
}

/// Exact-integer version of [`sigma_sign_check`].
pub fn sigma_sign_check_exact(
    i: &MultiIndex,
    j: &MultiIndex,
    q: &IndexSubset,
    x: &IntHypermatrix,
    u: &IntHypermatrix,
) -> Result<bool> {
    let (i2, j2) = modified_indices(i, j, q)?;
    let base = sigma_int(i, j, x, u)?;
    let swapped = sigma_int(&i2, &j2, x, u)?;
    Ok(if q.len().is_multiple_of(2) { swapped == base } else { swapped == -base })
}

/// `2^{-m} Σ_{all (i, j)} |σ_{i;j}(x, ū)|²`.
pub fn lagrange_rhs_full(x: &Hypermatrix, u: &Hypermatrix) -> Result<f64> {
    x.shape().require_same(u.shape())?;
    let shape = x.shape();
    let kernel = SigmaKernel::new(shape);
    let ubar = u.conj();
    let digits = digits_table(shape);
    let mut acc = CompensatedSum::new();
    for i in &digits {
        for j in &digits {
            acc.add(kernel.eval(i, j, x.data(), ubar.data()).norm_sqr());
        }
    }
    Ok(acc.value() / 2f64.powi(shape.order() as i32))
}

/// Per-axis pairs `a < b` (0-based), combined over all axes.
fn strictly_increasing_pairs(shape: &DimVector) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut pairs = vec![(Vec::new(), Vec::new())];
    for &d in shape.dims() {
        let mut next = Vec::new();
        for (i, j) in &pairs {
            for a in 0..d {
                for b in a + 1..d {
                    let (mut i2, mut j2) = (i.clone(), j.clone());
                    i2.push(a);
                    j2.push(b);
                    next.push((i2, j2));
                }
            }
        }
        pairs = next;
    }
    pairs
}

/// `Σ_{i<j} |σ_{i;j}(x, ū)|²`; empty (zero) when some `d_s = 1`.
pub fn lagrange_rhs_restricted(x: &Hypermatrix, u: &Hypermatrix) -> Result<f64> {
    x.shape().require_same(u.shape())?;
    let kernel = SigmaKernel::new(x.shape());
    let ubar = u.conj();
    Ok(strictly_increasing_pairs(x.shape())
        .iter()
        .map(|(i, j)| kernel.eval(i, j, x.data(), ubar.data()).norm_sqr())
        .collect::<CompensatedSum>()
        .value())
}

/// Three-way comparison of `Φ^(1)` with both right-hand sides.
#[derive(Debug, Clone, Serialize)]
pub struct LagrangeReport {
    pub shape: Vec<usize>,
    pub phi: f64,
    pub rhs_full: f64,
    pub rhs_restricted: f64,
    pub cancellation_mass: f64,
    /// Largest pairwise difference, relative to the cancellation mass.
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn verify_lagrange(x: &Hypermatrix, u: &Hypermatrix, tol: f64) -> Result<LagrangeReport> {
    x.shape().require_same(u.shape())?;
    let input = CbsInput::new(vec![x.clone()], vec![u.clone()])?;
    let breakdown = phi(&input)?;
    let rhs_full = lagrange_rhs_full(x, u)?;
    let rhs_restricted = lagrange_rhs_restricted(x, u)?;
    let values = [breakdown.total, rhs_full, rhs_restricted];
    let scale = breakdown.cancellation_mass.max(f64::MIN_POSITIVE);
    let mut max_deviation = 0.0f64;
    for a in 0..3 {
        for b in a + 1..3 {
            max_deviation = max_deviation.max((values[a] - values[b]).abs() / scale);
        }
    }
    Ok(LagrangeReport {
        shape: x.shape().dims().to_vec(),
        phi: breakdown.total,
        rhs_full,
        rhs_restricted,
        cancellation_mass: breakdown.cancellation_mass,
        max_deviation,
        tolerance: tol,
        // NaN deviations must fail
        pass: max_deviation <= tol,
    })
}

/// Both sides of the integer identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExactLagrange {
    #[serde(serialize_with = "as_decimal")]
    pub lhs: BigInt,
    #[serde(serialize_with = "as_decimal")]
    pub rhs: BigInt,
    pub equal: bool,
}

fn as_decimal<S: serde::Serializer>(v: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

/// `Σ_Q (-1)^{|Q|} Σ_{outer} (Σ_{inner} x_i u_j)²` against `Σ_{i<j} σ_{i;j}(x, u)²`.
///
/// In the left side the inner sum runs over `i_q` for `q ∈ Q` with `j_q = i_q`;
/// for `Q = ∅` it is the bare product.
pub fn lagrange_exact(x: &IntHypermatrix, u: &IntHypermatrix) -> Result<ExactLagrange> {
    x.shape().require_same(u.shape())?;
    let shape = x.shape();
    if shape.order() > 30 {
        return Err(Error::InvalidArgument("order too large for subset enumeration".into()));
    }
    let (xd, ud) = (x.data(), u.data());
    let mut lhs = BigInt::zero();
    for q in IndexSubset::all(shape.order())? {
        let outer = shape.partial_offsets(&q.complement());
        let inner = shape.partial_offsets(&q);
        let mut part = BigInt::zero();
        for &a in &outer {
            for &b in &outer {
                let mut amp = BigInt::zero();
                for &c in &inner {
                    amp += &xd[a + c] * &ud[b + c];
                }
                part += &amp * &amp;
            }
        }
        if q.len() % 2 == 0 {
            lhs += part;
        } else {
            lhs -= part;
        }
    }
    let kernel = SigmaKernel::new(shape);
    let mut rhs = BigInt::zero();
    for (i, j) in strictly_increasing_pairs(shape) {
        let s = kernel.eval(&i, &j, xd, ud);
        rhs += &s * &s;
    }
    let equal = lhs == rhs;
    Ok(ExactLagrange { lhs, rhs, equal })
}
