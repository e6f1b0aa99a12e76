//! Dense hypermatrices of type `d_1 x ... x d_m`.
//!
//! A hypermatrix is a complex (or exact integer) valued map on the index set
//! `I_{d_1} x ... x I_{d_m}`. Storage is a flat vector in row-major order with
//! the first axis varying slowest, so the `m = 2` case coincides with ordinary
//! matrix layout.
//!
//! The public API is 1-based throughout: multi-index components run over
//! `1..=d_k` and axis positions over `1..=m`. Flat storage offsets are
//! 0-based.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex64 as C64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::norm_sq;
use crate::rng::{rng_from_seed, Rng};

/// Shape `(d_1, ..., d_m)` of a hypermatrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DimVector {
    dims: Vec<usize>,
    size: usize,
}

impl DimVector {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::InvalidShape { dims, reason: "at least one axis is required" });
        }
        if dims.contains(&0) {
            return Err(Error::InvalidShape { dims, reason: "every dimension must be at least 1" });
        }
        let size = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| Error::InvalidShape {
            dims: dims.clone(),
            reason: "total size overflows the addressable range",
        })?;
        Ok(Self { dims, size })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of axes `m`.
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Total number of entries `d_1 * ... * d_m`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Dimension of the axis at 1-based `position`.
    pub fn dim(&self, position: usize) -> Result<usize> {
        self.check_position(position)?;
        Ok(self.dims[position - 1])
    }

    pub(crate) fn check_position(&self, position: usize) -> Result<()> {
        if position == 0 || position > self.order() {
            return Err(Error::InvalidArgument(format!("axis position {position} is outside 1..={}", self.order())));
        }
        Ok(())
    }

    /// Row-major strides, 0-based by axis.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.order()];
        for k in (0..self.order().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        strides
    }

    pub fn linear_offset(&self, idx: &MultiIndex) -> Result<usize> {
        self.check_index(idx)?;
        Ok(idx.0.iter().zip(&self.dims).fold(0usize, |acc, (&i, &d)| acc * d + (i - 1)))
    }

    pub fn multi_index(&self, offset: usize) -> Result<MultiIndex> {
        if offset >= self.size {
            return Err(Error::InvalidArgument(format!("offset {offset} is outside a shape of size {}", self.size)));
        }
        let mut rest = offset;
        let mut idx = vec![0usize; self.order()];
        for k in (0..self.order()).rev() {
            idx[k] = rest % self.dims[k] + 1;
            rest /= self.dims[k];
        }
        Ok(MultiIndex(idx))
    }

    pub fn check_index(&self, idx: &MultiIndex) -> Result<()> {
        let ok = idx.0.len() == self.order() && idx.0.iter().zip(&self.dims).all(|(&i, &d)| (1..=d).contains(&i));
        if ok {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: idx.0.clone(), dims: self.dims.clone() })
        }
    }

    /// All valid multi-indices in storage order.
    pub fn multi_indices(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        (0..self.size).map(move |off| self.multi_index(off).expect("offset in range"))
    }

    /// Offsets `sum_{p in subset} (i_p - 1) * stride_p` for every assignment of
    /// the axes in `subset`, enumerated row-major over those axes. Axes outside
    /// the subset are held at index 1.
    pub(crate) fn partial_offsets(&self, subset: &IndexSubset) -> Vec<usize> {
        let strides = self.strides();
        let mut offsets = vec![0usize];
        for (k, (&d, &stride)) in self.dims.iter().zip(&strides).enumerate() {
            if !subset.contains(k + 1) {
                continue;
            }
            let mut next = Vec::with_capacity(offsets.len() * d);
            for &base in &offsets {
                for i in 0..d {
                    next.push(base + i * stride);
                }
            }
            offsets = next;
        }
        offsets
    }

    /// Shape with the axis at 1-based `position` removed.
    pub fn without_axis(&self, position: usize) -> Result<DimVector> {
        self.check_position(position)?;
        let mut dims = self.dims.clone();
        dims.remove(position - 1);
        DimVector::new(dims)
    }

    pub(crate) fn require_same(&self, other: &DimVector) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { expected: self.dims.clone(), found: other.dims.clone() })
        }
    }
}

impl TryFrom<Vec<usize>> for DimVector {
    type Error = Error;
    fn try_from(dims: Vec<usize>) -> Result<Self> {
        DimVector::new(dims)
    }
}

impl From<DimVector> for Vec<usize> {
    fn from(d: DimVector) -> Self {
        d.dims
    }
}

impl FromStr for DimVector {
    type Err = Error;

    /// Parses a comma-separated list such as `"3,3"` or `"2, 2, 2"`.
    fn from_str(s: &str) -> Result<Self> {
        let dims = s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| Error::Format(format!("bad dimension {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        DimVector::new(dims)
    }
}

impl fmt::Display for DimVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// 1-based multi-index `(i_1, ..., i_m)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(idx: impl Into<Vec<usize>>) -> Self {
        MultiIndex(idx.into())
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Subset `Q` of the axis positions `I_m = {1, ..., m}`, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSubset {
    m: usize,
    mask: u64,
}

impl IndexSubset {
    pub const MAX_ORDER: usize = 63;

    fn check_order(m: usize) -> Result<()> {
        if m > Self::MAX_ORDER {
            return Err(Error::InvalidArgument(format!("subsets are supported for m <= {}, got {m}", Self::MAX_ORDER)));
        }
        Ok(())
    }

    pub fn empty(m: usize) -> Result<Self> {
        Self::check_order(m)?;
        Ok(Self { m, mask: 0 })
    }

    pub fn full(m: usize) -> Result<Self> {
        Self::check_order(m)?;
        Ok(Self { m, mask: (1u64 << m) - 1 })
    }

    pub fn from_mask(m: usize, mask: u64) -> Result<Self> {
        Self::check_order(m)?;
        if mask >> m != 0 {
            return Err(Error::InvalidArgument(format!("mask {mask:#b} has bits beyond m = {m}")));
        }
        Ok(Self { m, mask })
    }

    /// Builds a subset from 1-based positions.
    pub fn from_positions(m: usize, positions: &[usize]) -> Result<Self> {
        Self::check_order(m)?;
        let mut mask = 0u64;
        for &p in positions {
            if p == 0 || p > m {
                return Err(Error::InvalidArgument(format!("position {p} outside 1..={m}")));
            }
            mask |= 1 << (p - 1);
        }
        Ok(Self { m, mask })
    }

    /// All `2^m` subsets, by increasing cardinality and then by mask.
    pub fn all(m: usize) -> Result<Vec<IndexSubset>> {
        Self::check_order(m)?;
        if m > 30 {
            return Err(Error::InvalidArgument(format!("enumerating 2^{m} subsets is not supported")));
        }
        let mut subsets: Vec<IndexSubset> = (0..1u64 << m).map(|mask| IndexSubset { m, mask }).collect();
        subsets.sort_by_key(|q| (q.len(), q.mask));
        Ok(subsets)
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    /// Cardinality `|Q|`.
    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    /// Whether the 1-based `position` belongs to the subset.
    pub fn contains(&self, position: usize) -> bool {
        position >= 1 && position <= self.m && self.mask & (1 << (position - 1)) != 0
    }

    pub fn positions(&self) -> Vec<usize> {
        (1..=self.m).filter(|&p| self.contains(p)).collect()
    }

    /// `I_m \ Q`.
    pub fn complement(&self) -> IndexSubset {
        IndexSubset { m: self.m, mask: !self.mask & ((1u64 << self.m) - 1) }
    }

    /// `Q △ R`.
    pub fn symmetric_difference(&self, other: &IndexSubset) -> Result<IndexSubset> {
        if self.m != other.m {
            return Err(Error::InvalidArgument(format!(
                "subsets over different ground sets (m = {} and m = {})",
                self.m, other.m
            )));
        }
        Ok(IndexSubset { m: self.m, mask: self.mask ^ other.mask })
    }
}

/// The pair `(i^{Q,j}, j^{Q,i})`: position `p` swaps `i_p` and `j_p` exactly
/// when `p` is in `Q`.
pub fn modified_indices(i: &MultiIndex, j: &MultiIndex, q: &IndexSubset) -> Result<(MultiIndex, MultiIndex)> {
    if i.len() != j.len() || i.len() != q.order() {
        return Err(Error::InvalidArgument(format!(
            "index lengths {} and {} do not match subset order {}",
            i.len(),
            j.len(),
            q.order()
        )));
    }
    let mut i2 = i.0.clone();
    let mut j2 = j.0.clone();
    for p in 0..i.len() {
        if q.contains(p + 1) {
            std::mem::swap(&mut i2[p], &mut j2[p]);
        }
    }
    Ok((MultiIndex(i2), MultiIndex(j2)))
}

/// Dense complex hypermatrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HypermatrixFile", into = "HypermatrixFile")]
pub struct Hypermatrix {
    shape: DimVector,
    data: Vec<C64>,
}

impl Hypermatrix {
    pub fn zeros(shape: DimVector) -> Self {
        let data = vec![C64::new(0.0, 0.0); shape.size()];
        Self { shape, data }
    }

    pub fn from_vec(shape: DimVector, data: Vec<C64>) -> Result<Self> {
        if data.len() != shape.size() {
            return Err(Error::LengthMismatch { expected: shape.size(), found: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn from_real(shape: DimVector, values: &[f64]) -> Result<Self> {
        Self::from_vec(shape, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    /// Fills every entry from a function of its multi-index.
    pub fn from_fn(shape: DimVector, mut f: impl FnMut(&MultiIndex) -> C64) -> Self {
        let data = shape.multi_indices().map(|idx| f(&idx)).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &DimVector {
        &self.shape
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, idx: &MultiIndex) -> Result<C64> {
        Ok(self.data[self.shape.linear_offset(idx)?])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&z| f(z)).collect() }
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map(|z| z * c)
    }

    /// Sum of squared moduli of all entries.
    pub fn frobenius_norm_sq(&self) -> f64 {
        norm_sq(&self.data)
    }

    /// `sum_k coeffs[k] * mats[k]`; all operands must share one shape.
    pub fn linear_combination(coeffs: &[C64], mats: &[Hypermatrix]) -> Result<Hypermatrix> {
        if coeffs.len() != mats.len() || mats.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for {} hypermatrices",
                coeffs.len(),
                mats.len()
            )));
        }
        let shape = mats[0].shape.clone();
        let mut data = vec![C64::new(0.0, 0.0); shape.size()];
        for (c, m) in coeffs.iter().zip(mats) {
            shape.require_same(&m.shape)?;
            for (acc, z) in data.iter_mut().zip(&m.data) {
                *acc += c * z;
            }
        }
        Ok(Self { shape, data })
    }

    /// Stacks same-shape parts along a new leading axis of length `parts.len()`.
    pub fn stack(parts: &[Hypermatrix]) -> Result<Hypermatrix> {
        let first = parts.first().ok_or_else(|| Error::InvalidArgument("cannot stack zero hypermatrices".into()))?;
        let mut dims = vec![parts.len()];
        dims.extend_from_slice(first.shape.dims());
        let mut data = Vec::with_capacity(parts.len() * first.data.len());
        for p in parts {
            first.shape.require_same(&p.shape)?;
            data.extend_from_slice(&p.data);
        }
        Hypermatrix::from_vec(DimVector::new(dims)?, data)
    }

    /// Entries are independent standard normals on the real and imaginary parts.
    pub fn random_gaussian(shape: DimVector, rng: &mut Rng) -> Self {
        let data =
            (0..shape.size()).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        Self { shape, data }
    }

    /// Uniform sample from the unit Frobenius sphere.
    pub fn random_unit_sphere(shape: DimVector, rng: &mut Rng) -> Self {
        loop {
            let g = Self::random_gaussian(shape.clone(), rng);
            let norm = g.frobenius_norm_sq().sqrt();
            if norm > 0.0 {
                return g.scale(C64::new(1.0 / norm, 0.0));
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HypermatrixFile {
    shape: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl TryFrom<HypermatrixFile> for Hypermatrix {
    type Error = Error;
    fn try_from(f: HypermatrixFile) -> Result<Self> {
        let shape = DimVector::new(f.shape)?;
        if f.re.len() != shape.size() || f.im.len() != shape.size() {
            return Err(Error::LengthMismatch {
                expected: shape.size(),
                found: if f.re.len() != shape.size() { f.re.len() } else { f.im.len() },
            });
        }
        let data = f.re.iter().zip(&f.im).map(|(&re, &im)| C64::new(re, im)).collect();
        Ok(Hypermatrix { shape, data })
    }
}

impl From<Hypermatrix> for HypermatrixFile {
    fn from(h: Hypermatrix) -> Self {
        HypermatrixFile {
            re: h.data.iter().map(|z| z.re).collect(),
            im: h.data.iter().map(|z| z.im).collect(),
            shape: h.shape.into(),
        }
    }
}

/// Hypermatrix with exact, arbitrary-precision integer entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "IntHypermatrixFile", into = "IntHypermatrixFile")]
pub struct IntHypermatrix {
    shape: DimVector,
    data: Vec<BigInt>,
}

impl IntHypermatrix {
    pub fn from_vec(shape: DimVector, data: Vec<BigInt>) -> Result<Self> {
        if data.len() != shape.size() {
            return Err(Error::LengthMismatch { expected: shape.size(), found: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn from_i64(shape: DimVector, values: &[i64]) -> Result<Self> {
        Self::from_vec(shape, values.iter().map(|&v| BigInt::from(v)).collect())
    }

    pub fn shape(&self) -> &DimVector {
        &self.shape
    }

    pub fn data(&self) -> &[BigInt] {
        &self.data
    }

    pub fn get(&self, idx: &MultiIndex) -> Result<&BigInt> {
        Ok(&self.data[self.shape.linear_offset(idx)?])
    }

    /// Entries drawn uniformly from `lo..=hi`.
    pub fn random_range(shape: DimVector, lo: i64, hi: i64, rng: &mut Rng) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!("empty integer range [{lo}, {hi}]")));
        }
        let data = (0..shape.size()).map(|_| BigInt::from(rng.random_range(lo..=hi))).collect();
        Ok(Self { shape, data })
    }

    /// Lossy conversion to a complex hypermatrix.
    pub fn to_complex(&self) -> Hypermatrix {
        use num_traits::ToPrimitive;
        let data = self.data.iter().map(|v| C64::new(v.to_f64().unwrap_or(f64::NAN), 0.0)).collect();
        Hypermatrix { shape: self.shape.clone(), data }
    }
}

#[derive(Serialize, Deserialize)]
struct IntHypermatrixFile {
    shape: Vec<usize>,
    int: Vec<String>,
}

impl TryFrom<IntHypermatrixFile> for IntHypermatrix {
    type Error = Error;
    fn try_from(f: IntHypermatrixFile) -> Result<Self> {
        let shape = DimVector::new(f.shape)?;
        let data = f
            .int
            .iter()
            .map(|s| s.parse::<BigInt>().map_err(|e| Error::Format(format!("bad integer entry {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        IntHypermatrix::from_vec(shape, data)
    }
}

impl From<IntHypermatrix> for IntHypermatrixFile {
    fn from(h: IntHypermatrix) -> Self {
        IntHypermatrixFile { int: h.data.iter().map(|v| v.to_string()).collect(), shape: h.shape.into() }
    }
}

/// Sampling distribution for [`random_hypermatrix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RandomDist {
    ComplexGaussian,
    UnitSphere,
    IntegerRange { lo: i64, hi: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sampled {
    Complex(Hypermatrix),
    Int(IntHypermatrix),
}

/// Deterministic sample for a given `(shape, seed, dist)`.
pub fn random_hypermatrix(shape: DimVector, seed: u64, dist: RandomDist) -> Result<Sampled> {
    let mut rng = rng_from_seed(seed);
    Ok(match dist {
        RandomDist::ComplexGaussian => Sampled::Complex(Hypermatrix::random_gaussian(shape, &mut rng)),
        RandomDist::UnitSphere => Sampled::Complex(Hypermatrix::random_unit_sphere(shape, &mut rng)),
        RandomDist::IntegerRange { lo, hi } => Sampled::Int(IntHypermatrix::random_range(shape, lo, hi, &mut rng)?),
    })
}
