//! Dense operators on the bipartite space `⊗_k (ℂ^{d_k} ⊗ ℂ^{d_k})`.
//!
//! Basis kets are ordered `|i_1, j_1, i_2, j_2, …, i_m, j_m⟩` row-major with
//! `i_1` slowest. The `A|B` cut groups all `i` indices against all `j`
//! indices. With this ordering the Kronecker product of per-pair operators
//! acts pair by pair, and the expectation of the critical partial transpose
//! on a Schmidt-rank-2 vector reproduces `Φ` with `n = 2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::cbs::{phi, CbsInput};
use crate::error::{Error, Result};
use crate::hypermatrix::{DimVector, Hypermatrix};
use crate::numeric::norm_sq;
use crate::rng::{derive_seed, Rng};
use crate::search::{minimize_expectation, DescentSettings};

/// Largest total dimension `∏ d_k²` for which dense operators are built.
pub const DENSE_DIMENSION_BUDGET: usize = 4096;

/// Default relative singular-value threshold for [`schmidt_rank`].
pub const SCHMIDT_THRESHOLD: f64 = 1e-10;

const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// A square complex matrix acting on a finite-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    entries: DMatrix<C64>,
}

impl DenseOperator {
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::InvalidArgument("operator must be square and nonempty".into()));
        }
        Ok(Self { entries })
    }

    /// Like [`DenseOperator::new`], additionally requiring `A = A†`.
    pub fn hermitian(entries: DMatrix<C64>) -> Result<Self> {
        let op = Self::new(entries)?;
        if !op.is_hermitian(HERMITIAN_TOLERANCE) {
            return Err(Error::Numerical("operator is not Hermitian".into()));
        }
        Ok(op)
    }

    pub fn identity(dim: usize) -> Self {
        Self { entries: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { entries: DMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (&self.entries - self.entries.adjoint()).norm() <= tol
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    pub fn kron(&self, other: &DenseOperator) -> DenseOperator {
        Self { entries: self.entries.kronecker(&other.entries) }
    }

    /// `a · 1 + b · self`.
    pub fn affine(&self, a: f64, b: f64) -> DenseOperator {
        let n = self.dim();
        Self { entries: DMatrix::<C64>::identity(n, n) * C64::new(a, 0.0) + &self.entries * C64::new(b, 0.0) }
    }

    /// Real eigenvalues in increasing order; requires a Hermitian operator.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.is_hermitian(HERMITIAN_TOLERANCE) {
            return Err(Error::Precondition("eigenvalues need a Hermitian operator".into()));
        }
        let mut ev: Vec<f64> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }
}

/// Flip `F = Σ_{i,j} |i,j⟩⟨j,i|` on `ℂ^d ⊗ ℂ^d`.
pub fn flip_operator(d: usize) -> Result<DenseOperator> {
    require_local_dim(d)?;
    let mut f = DMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            f[(i * d + j, j * d + i)] = C64::new(1.0, 0.0);
        }
    }
    DenseOperator::new(f)
}

/// Projector onto `|φ⟩ = d^{-1/2} Σ_i |i,i⟩`.
pub fn max_entangled_projector(d: usize) -> Result<DenseOperator> {
    require_local_dim(d)?;
    let mut p = DMatrix::zeros(d * d, d * d);
    let w = C64::new(1.0 / d as f64, 0.0);
    for i in 0..d {
        for j in 0..d {
            p[(i * d + i, j * d + j)] = w;
        }
    }
    DenseOperator::new(p)
}

/// What [`werner_state`] does with `t` outside `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DomainPolicy {
    #[default]
    Reject,
    Warn,
}

/// Non-normalized Werner state `1 − tF`.
pub fn werner_state(d: usize, t: f64, policy: DomainPolicy) -> Result<DenseOperator> {
    if !(-1.0..=1.0).contains(&t) {
        match policy {
            DomainPolicy::Reject => {
                return Err(Error::Domain { name: "t", value: t, reason: "Werner parameter must lie in [-1, 1]" })
            }
            DomainPolicy::Warn => eprintln!("warning: Werner parameter t = {t} lies outside [-1, 1]"),
        }
    }
    Ok(flip_operator(d)?.affine(1.0, -t))
}

/// Isotropic operator `1 − t d P`, the partial transpose of `1 − tF`.
pub fn isotropic_operator(d: usize, t: f64) -> Result<DenseOperator> {
    Ok(max_entangled_projector(d)?.affine(1.0, -t * d as f64))
}

/// `σ_d^W = ⊗_k (1 − d_k P_k / 2)` in the interleaved basis.
pub fn sigma_crit(dims: &DimVector) -> Result<DenseOperator> {
    let total = total_dimension(dims)?;
    if total > DENSE_DIMENSION_BUDGET {
        return Err(Error::BudgetExceeded { estimate: total as u128, budget: DENSE_DIMENSION_BUDGET as u128 });
    }
    let mut op = DenseOperator::identity(1);
    for &d in dims.dims() {
        op = op.kron(&isotropic_operator(d, 0.5)?);
    }
    Ok(op)
}

fn require_local_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidArgument("local dimension must be at least 1".into()));
    }
    Ok(())
}

fn total_dimension(dims: &DimVector) -> Result<usize> {
    dims.size().checked_mul(dims.size()).ok_or_else(|| Error::InvalidArgument("total dimension overflows".into()))
}

/// Offsets of kets in the interleaved layout for a given shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductBasisLayout {
    dims: DimVector,
    /// Stride of `i_k` and of `j_k` in the interleaved layout, per axis.
    pair_strides: Vec<(usize, usize)>,
    /// Digits of each row-major hypermatrix offset.
    digits: Vec<Vec<usize>>,
}

impl ProductBasisLayout {
    pub fn new(dims: DimVector) -> Self {
        let m = dims.order();
        let mut pair_strides = vec![(0, 0); m];
        let mut stride = 1;
        for k in (0..m).rev() {
            let d = dims.dims()[k];
            pair_strides[k] = (stride * d, stride);
            stride *= d * d;
        }
        let digits = dims.multi_indices().map(|idx| idx.components().iter().map(|c| c - 1).collect()).collect();
        Self { dims, pair_strides, digits }
    }

    pub fn dims(&self) -> &DimVector {
        &self.dims
    }

    pub fn total_dimension(&self) -> usize {
        self.dims.size() * self.dims.size()
    }

    /// Interleaved offset of `|i_1, j_1, …⟩` where `a` and `b` are the
    /// row-major offsets of `i` and `j` in the hypermatrix.
    pub fn offset(&self, a: usize, b: usize) -> usize {
        self.digits[a]
            .iter()
            .zip(&self.digits[b])
            .zip(&self.pair_strides)
            .map(|((i, j), (si, sj))| i * si + j * sj)
            .sum()
    }
}

/// `ψ = x ⊗ u + y ⊗ v`, a vector of Schmidt rank at most two.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchmidtRank2Spec {
    pub x: Hypermatrix,
    pub y: Hypermatrix,
    pub u: Hypermatrix,
    pub v: Hypermatrix,
}

impl SchmidtRank2Spec {
    pub fn new(x: Hypermatrix, y: Hypermatrix, u: Hypermatrix, v: Hypermatrix) -> Result<Self> {
        for h in [&y, &u, &v] {
            x.shape().require_same(h.shape())?;
        }
        Ok(Self { x, y, u, v })
    }

    /// Four independent uniform draws from the unit sphere.
    pub fn random(dims: &DimVector, rng: &mut Rng) -> Self {
        let mut draw = || Hypermatrix::random_unit_sphere(dims.clone(), rng);
        Self { x: draw(), y: draw(), u: draw(), v: draw() }
    }

    pub fn dims(&self) -> &DimVector {
        self.x.shape()
    }

    /// The `n = 2` argument `(x^(1), x^(2), u^(1), u^(2)) = (x, y, u, v)`.
    pub fn to_cbs_input(&self) -> CbsInput {
        CbsInput::new(vec![self.x.clone(), self.y.clone()], vec![self.u.clone(), self.v.clone()])
            .expect("shapes validated at construction")
    }
}

/// Amplitudes `ψ[(i, j)] = x_i u_j + y_i v_j` in the interleaved layout.
pub fn rank2_vector(spec: &SchmidtRank2Spec) -> Vec<C64> {
    let layout = ProductBasisLayout::new(spec.dims().clone());
    let (x, y, u, v) = (spec.x.data(), spec.y.data(), spec.u.data(), spec.v.data());
    let size = x.len();
    let mut psi = vec![C64::new(0.0, 0.0); size * size];
    for a in 0..size {
        for b in 0..size {
            psi[layout.offset(a, b)] = x[a] * u[b] + y[a] * v[b];
        }
    }
    psi
}

/// The `A|B` coefficient matrix `C[i][j] = ψ[(i, j)]`.
pub fn coefficient_matrix(psi: &[C64], dims: &DimVector) -> Result<DMatrix<C64>> {
    let layout = ProductBasisLayout::new(dims.clone());
    if psi.len() != layout.total_dimension() {
        return Err(Error::LengthMismatch { expected: layout.total_dimension(), found: psi.len() });
    }
    let size = dims.size();
    Ok(DMatrix::from_fn(size, size, |a, b| psi[layout.offset(a, b)]))
}

/// Number of singular values of the coefficient matrix above `threshold · σ_max`.
pub fn schmidt_rank(psi: &[C64], dims: &DimVector, threshold: f64) -> Result<usize> {
    let c = coefficient_matrix(psi, dims)?;
    let sv = c.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return Err(Error::Domain { name: "psi", value: 0.0, reason: "Schmidt rank of the zero vector" });
    }
    Ok(sv.iter().filter(|&&s| s > threshold * smax).count())
}

/// `⟨ψ|A|ψ⟩`, rejecting an imaginary part above `1e-12 · ‖A‖ · ‖ψ‖²`.
pub fn expectation(op: &DenseOperator, psi: &[C64]) -> Result<f64> {
    if psi.len() != op.dim() {
        return Err(Error::LengthMismatch { expected: op.dim(), found: psi.len() });
    }
    let v = DVector::from_column_slice(psi);
    let value = v.dotc(&(op.entries() * &v));
    let bound = 1e-12 * op.frobenius_norm() * norm_sq(psi);
    if value.im.abs() > bound {
        return Err(Error::Numerical(format!("expectation has imaginary part {:e} above {bound:e}", value.im)));
    }
    Ok(value.re)
}

/// `⟨ψ|σ_d^W|ψ⟩` against `Φ` on the corresponding `n = 2` input.
#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub dims: Vec<usize>,
    pub expectation: f64,
    pub phi: f64,
    pub cancellation_mass: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn phi_oracle_check(spec: &SchmidtRank2Spec, tol: f64) -> Result<OracleCheck> {
    let sigma = sigma_crit(spec.dims())?;
    let psi = rank2_vector(spec);
    let value = expectation(&sigma, &psi)?;
    let breakdown = phi(&spec.to_cbs_input())?;
    let deviation = breakdown.relative_deviation(value);
    Ok(OracleCheck {
        dims: spec.dims().dims().to_vec(),
        expectation: value,
        phi: breakdown.total,
        cancellation_mass: breakdown.cancellation_mass,
        deviation,
        tolerance: tol,
        pass: deviation <= tol,
    })
}

/// `|1,1⟩ + |2,2⟩` on `ℂ^d ⊗ ℂ^d`, `d ≥ 2`.
pub fn bell_like_vector(d: usize) -> Result<Vec<C64>> {
    if d < 2 {
        return Err(Error::InvalidArgument("needs d >= 2".into()));
    }
    let mut psi = vec![C64::new(0.0, 0.0); d * d];
    psi[0] = C64::new(1.0, 0.0);
    psi[d + 1] = C64::new(1.0, 0.0);
    Ok(psi)
}

/// `|1,2⟩ − |2,1⟩` on `ℂ^d ⊗ ℂ^d`, `d ≥ 2`.
pub fn singlet_like_vector(d: usize) -> Result<Vec<C64>> {
    if d < 2 {
        return Err(Error::InvalidArgument("needs d >= 2".into()));
    }
    let mut psi = vec![C64::new(0.0, 0.0); d * d];
    psi[1] = C64::new(1.0, 0.0);
    psi[d] = C64::new(-1.0, 0.0);
    Ok(psi)
}

/// One point of the two closed-form Werner witnesses.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessCheck {
    pub d: usize,
    pub t: f64,
    /// `⟨ψ|1 − tdP|ψ⟩` at `ψ = |1,1⟩ + |2,2⟩`.
    pub isotropic: f64,
    pub isotropic_expected: f64,
    /// `⟨ψ|1 − tF|ψ⟩` at `ψ = |1,2⟩ − |2,1⟩`.
    pub werner: f64,
    pub werner_expected: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn werner_witness_check(d: usize, t: f64, tol: f64) -> Result<WitnessCheck> {
    let isotropic = expectation(&isotropic_operator(d, t)?, &bell_like_vector(d)?)?;
    let werner = expectation(&werner_state(d, t, DomainPolicy::Reject)?, &singlet_like_vector(d)?)?;
    let (ie, we) = (2.0 * (1.0 - 2.0 * t), 2.0 * (1.0 + t));
    let deviation = (isotropic - ie).abs().max((werner - we).abs());
    Ok(WitnessCheck {
        d,
        t,
        isotropic,
        isotropic_expected: ie,
        werner,
        werner_expected: we,
        deviation,
        tolerance: tol,
        pass: deviation <= tol,
    })
}

/// `n` equally spaced points on `[lo, hi]`, both ends included.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Minima below `-SWEEP_SIGN_TOLERANCE` count as negative in a sweep.
pub const SWEEP_SIGN_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub t: f64,
    pub seed: u64,
    /// Smallest `⟨ψ|1 − tdP|ψ⟩` found over normalized Schmidt-rank-2 `ψ`.
    pub minimum: f64,
    /// `1 − 2t`, the value at the normalized `|1,1⟩ + |2,2⟩`.
    pub witness: f64,
    pub restarts_aborted: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub d: usize,
    pub points: Vec<SweepPoint>,
    /// First consecutive grid pair across which the minimum turns negative.
    pub bracket: Option<(f64, f64)>,
    /// Whether minima are non-increasing in `t` along the grid.
    pub nonincreasing: bool,
}

/// Minimizes `⟨ψ|1 − tdP|ψ⟩` over normalized Schmidt-rank-2 `ψ` at each `t`.
pub fn werner_threshold_sweep(d: usize, t_grid: &[f64], settings: &DescentSettings) -> Result<SweepRecord> {
    if d < 2 {
        return Err(Error::InvalidArgument("sweep needs d >= 2".into()));
    }
    let dims = DimVector::new(vec![d])?;
    let mut points = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        let seed = derive_seed(settings.seed, k as u64);
        let op = isotropic_operator(d, t)?;
        let r = minimize_expectation(&op, &dims, &DescentSettings { seed, ..settings.clone() })?;
        points.push(SweepPoint {
            t,
            seed,
            minimum: r.best_value,
            witness: 1.0 - 2.0 * t,
            restarts_aborted: r.per_restart.iter().filter(|o| o.aborted).count(),
        });
    }
    let bracket = points.windows(2).find_map(|w| {
        (w[0].minimum >= -SWEEP_SIGN_TOLERANCE && w[1].minimum < -SWEEP_SIGN_TOLERANCE).then_some((w[0].t, w[1].t))
    });
    let nonincreasing = points.windows(2).all(|w| w[1].minimum <= w[0].minimum + SWEEP_SIGN_TOLERANCE);
    Ok(SweepRecord { d, points, bracket, nonincreasing })
}
