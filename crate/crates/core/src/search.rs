//! Multi-restart projected gradient descent on products of unit spheres.
//!
//! Every block of the search variable (`x^(k)` and `u^(k)` for `Φ`, or
//! `x, y, u, v` for a Schmidt-rank-2 expectation) is kept on its own unit
//! Frobenius sphere. A step moves against the tangential part of the gradient
//! and renormalizes each block; a halving line search accepts only strict
//! decreases. Restarts run concurrently with per-restart seeds, so the result
//! does not depend on scheduling.

use std::time::Instant;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cbs::{phi_gradient, phi_with_budget, CbsInput, DEFAULT_WORK_BUDGET};
use crate::error::{Error, Result};
use crate::hypermatrix::{DimVector, Hypermatrix};
use crate::numeric::norm_sq;
use crate::quantum::{expectation, rank2_vector, DenseOperator, ProductBasisLayout, SchmidtRank2Spec};
use crate::rng::{derive_seed, rng_from_seed};

/// Cells whose minimum falls below this are flagged as candidate counterexamples.
pub const CANDIDATE_THRESHOLD: f64 = -1e-6;

/// Stop once the objective improves by less than this (relative) over
/// [`STALL_WINDOW`] iterations.
pub const STALL_TOLERANCE: f64 = 1e-12;
pub const STALL_WINDOW: usize = 10;

const MAX_HALVINGS: usize = 60;
const MAX_STEP: f64 = 1e3;

/// How the descent direction is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Central differences with step `grad_eps` in every real parameter.
    #[default]
    FiniteDifference,
    /// Closed-form gradient of the objective.
    Analytic,
}

/// Parameters shared by every descent, independent of the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentSettings {
    pub restarts: usize,
    pub max_iters: usize,
    pub step_init: f64,
    pub grad_eps: f64,
    pub seed: u64,
    pub gradient: GradientMode,
}

impl Default for DescentSettings {
    fn default() -> Self {
        Self {
            restarts: 100,
            max_iters: 2000,
            step_init: 0.1,
            grad_eps: 1e-6,
            seed: 0,
            gradient: GradientMode::FiniteDifference,
        }
    }
}

impl DescentSettings {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.step_init > 0.0 && self.step_init.is_finite()) {
            return Err(Error::Domain { name: "step_init", value: self.step_init, reason: "must be positive" });
        }
        if !(1e-8..=1e-4).contains(&self.grad_eps) {
            return Err(Error::Domain { name: "grad_eps", value: self.grad_eps, reason: "must lie in [1e-8, 1e-4]" });
        }
        Ok(())
    }
}

/// A `Φ` minimization: shape, number of pairs, evaluation budget and descent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub dims: DimVector,
    pub n: usize,
    pub budget: u128,
    #[serde(flatten)]
    pub descent: DescentSettings,
}

impl SearchConfig {
    pub fn new(dims: DimVector, n: usize) -> Self {
        Self { dims, n, budget: DEFAULT_WORK_BUDGET, descent: DescentSettings::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        self.descent.validate()
    }
}

/// How one restart ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartOutcome {
    pub index: usize,
    pub seed: u64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The objective turned NaN and the restart was abandoned.
    pub aborted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub config: SearchConfig,
    pub best_value: f64,
    pub best_restart: usize,
    pub best_input: CbsInput,
    pub per_restart: Vec<RestartOutcome>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpectationSearchResult {
    pub dims: DimVector,
    pub settings: DescentSettings,
    pub best_value: f64,
    pub best_restart: usize,
    pub best_spec: SchmidtRank2Spec,
    pub per_restart: Vec<RestartOutcome>,
    pub wall_time_secs: f64,
}

type Blocks = Vec<Vec<C64>>;

/// An objective on a product of complex unit spheres.
trait Problem: Sync {
    fn block_count(&self) -> usize;
    fn block_len(&self) -> usize;
    fn value(&self, blocks: &[Vec<C64>]) -> Result<f64>;
    /// Packed real-parameter gradient `∂f/∂Re + i ∂f/∂Im` per entry.
    fn analytic_gradient(&self, blocks: &[Vec<C64>]) -> Result<Blocks>;
}

fn finite_difference_gradient(problem: &dyn Problem, blocks: &[Vec<C64>], eps: f64) -> Result<Blocks> {
    let mut work = blocks.to_vec();
    let mut grad = vec![vec![C64::new(0.0, 0.0); problem.block_len()]; blocks.len()];
    for b in 0..blocks.len() {
        for e in 0..blocks[b].len() {
            let original = work[b][e];
            let mut partial = [0.0; 2];
            for (slot, dir) in [C64::new(eps, 0.0), C64::new(0.0, eps)].into_iter().enumerate() {
                work[b][e] = original + dir;
                let plus = problem.value(&work)?;
                work[b][e] = original - dir;
                let minus = problem.value(&work)?;
                partial[slot] = (plus - minus) / (2.0 * eps);
            }
            work[b][e] = original;
            grad[b][e] = C64::new(partial[0], partial[1]);
        }
    }
    Ok(grad)
}

fn normalize(block: &mut [C64]) -> bool {
    let norm = norm_sq(block).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return false;
    }
    block.iter_mut().for_each(|z| *z /= norm);
    true
}

/// Removes the radial component of each block's gradient.
fn project_to_tangent(blocks: &[Vec<C64>], grad: &mut [Vec<C64>]) {
    for (x, g) in blocks.iter().zip(grad.iter_mut()) {
        let radial: f64 = x.iter().zip(g.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        g.iter_mut().zip(x).for_each(|(gi, xi)| *gi -= xi * radial);
    }
}

struct Descent {
    blocks: Blocks,
    value: f64,
    iterations: usize,
    converged: bool,
    aborted: bool,
    /// Objective after every accepted step, starting with the initial value.
    #[cfg_attr(not(test), allow(dead_code))]
    history: Vec<f64>,
}

fn descend(problem: &dyn Problem, mut blocks: Blocks, settings: &DescentSettings) -> Result<Descent> {
    let abort = |blocks, history: Vec<f64>, iterations| Descent {
        blocks,
        value: f64::NAN,
        iterations,
        converged: false,
        aborted: true,
        history,
    };
    for block in blocks.iter_mut() {
        if !normalize(block) {
            return Ok(abort(blocks, Vec::new(), 0));
        }
    }
    let mut f = problem.value(&blocks)?;
    let mut history = vec![f];
    if f.is_nan() {
        return Ok(abort(blocks, history, 0));
    }
    let mut step = settings.step_init;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iters {
        let mut grad = match settings.gradient {
            GradientMode::FiniteDifference => finite_difference_gradient(problem, &blocks, settings.grad_eps)?,
            GradientMode::Analytic => problem.analytic_gradient(&blocks)?,
        };
        if grad.iter().flatten().any(|z| !z.is_finite()) {
            return Ok(abort(blocks, history, iterations));
        }
        project_to_tangent(&blocks, &mut grad);
        if grad.iter().map(|g| norm_sq(g)).sum::<f64>() == 0.0 {
            converged = true;
            break;
        }
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut candidate = blocks.clone();
            let mut ok = true;
            for (c, g) in candidate.iter_mut().zip(&grad) {
                c.iter_mut().zip(g).for_each(|(ci, gi)| *ci -= gi * alpha);
                ok &= normalize(c);
            }
            let fc = if ok { problem.value(&candidate)? } else { f64::NAN };
            if fc.is_nan() {
                return Ok(abort(blocks, history, iterations));
            }
            if fc < f {
                accepted = Some((candidate, fc));
                break;
            }
            alpha /= 2.0;
        }
        let Some((candidate, fc)) = accepted else {
            converged = true;
            break;
        };
        blocks = candidate;
        f = fc;
        history.push(f);
        iterations += 1;
        step = (2.0 * alpha).min(MAX_STEP);
        if history.len() > STALL_WINDOW {
            let before = history[history.len() - 1 - STALL_WINDOW];
            if before - f < STALL_TOLERANCE * f.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }
    Ok(Descent { blocks, value: f, iterations, converged, aborted: false, history })
}

fn random_blocks(count: usize, len: usize, dims: &DimVector, seed: u64) -> Blocks {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| Hypermatrix::random_unit_sphere(dims.clone(), &mut rng).into_data())
        .inspect(|b| debug_assert_eq!(b.len(), len))
        .collect()
}

struct RunOutcome {
    per_restart: Vec<RestartOutcome>,
    best: Option<(usize, Blocks)>,
}

fn run_restarts(problem: &dyn Problem, dims: &DimVector, settings: &DescentSettings) -> Result<RunOutcome> {
    settings.validate()?;
    let runs: Vec<Result<(RestartOutcome, Blocks)>> = (0..settings.restarts)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(settings.seed, index as u64);
            let start = random_blocks(problem.block_count(), problem.block_len(), dims, seed);
            let d = descend(problem, start, settings)?;
            let outcome = RestartOutcome {
                index,
                seed,
                value: d.value,
                iterations: d.iterations,
                converged: d.converged,
                aborted: d.aborted,
            };
            Ok((outcome, d.blocks))
        })
        .collect();
    let mut per_restart = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, f64, Blocks)> = None;
    for run in runs {
        let (outcome, blocks) = run?;
        let improves = best.as_ref().is_none_or(|(_, value, _)| outcome.value < *value);
        if !outcome.aborted && improves {
            best = Some((outcome.index, outcome.value, blocks));
        }
        per_restart.push(outcome);
    }
    Ok(RunOutcome { per_restart, best: best.map(|(i, _, b)| (i, b)) })
}

struct PhiProblem<'a> {
    dims: &'a DimVector,
    n: usize,
    budget: u128,
}

impl PhiProblem<'_> {
    fn input(&self, blocks: &[Vec<C64>]) -> Result<CbsInput> {
        let to_h = |b: &Vec<C64>| Hypermatrix::from_vec(self.dims.clone(), b.clone());
        let xs = blocks[..self.n].iter().map(to_h).collect::<Result<Vec<_>>>()?;
        let us = blocks[self.n..].iter().map(to_h).collect::<Result<Vec<_>>>()?;
        CbsInput::new(xs, us)
    }
}

impl Problem for PhiProblem<'_> {
    fn block_count(&self) -> usize {
        2 * self.n
    }

    fn block_len(&self) -> usize {
        self.dims.size()
    }

    fn value(&self, blocks: &[Vec<C64>]) -> Result<f64> {
        Ok(phi_with_budget(&self.input(blocks)?, self.budget)?.total)
    }

    fn analytic_gradient(&self, blocks: &[Vec<C64>]) -> Result<Blocks> {
        let g = phi_gradient(&self.input(blocks)?, self.budget)?;
        Ok(g.grad_xs.into_iter().chain(g.grad_us).collect())
    }
}

/// Minimizes `Φ_d^(n)` with every block on its unit sphere.
pub fn minimize_phi(config: &SearchConfig) -> Result<SearchResult> {
    config.validate()?;
    let started = Instant::now();
    let problem = PhiProblem { dims: &config.dims, n: config.n, budget: config.budget };
    crate::cbs::check_budget(&config.dims, config.n, config.budget)?;
    let run = run_restarts(&problem, &config.dims, &config.descent)?;
    let (best_restart, blocks) =
        run.best.ok_or_else(|| Error::Numerical("every restart aborted on a NaN objective".into()))?;
    Ok(SearchResult {
        config: config.clone(),
        best_value: run.per_restart[best_restart].value,
        best_restart,
        best_input: problem.input(&blocks)?,
        per_restart: run.per_restart,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

struct ExpectationProblem<'a> {
    op: &'a DenseOperator,
    dims: &'a DimVector,
    layout: ProductBasisLayout,
}

impl ExpectationProblem<'_> {
    fn spec(&self, blocks: &[Vec<C64>]) -> Result<SchmidtRank2Spec> {
        let h = |k: usize| Hypermatrix::from_vec(self.dims.clone(), blocks[k].clone());
        SchmidtRank2Spec::new(h(0)?, h(1)?, h(2)?, h(3)?)
    }
}

impl Problem for ExpectationProblem<'_> {
    fn block_count(&self) -> usize {
        4
    }

    fn block_len(&self) -> usize {
        self.dims.size()
    }

    /// Rayleigh quotient `⟨ψ|A|ψ⟩ / ⟨ψ|ψ⟩`, NaN when `ψ = 0`.
    fn value(&self, blocks: &[Vec<C64>]) -> Result<f64> {
        let psi = rank2_vector(&self.spec(blocks)?);
        let nrm = norm_sq(&psi);
        if nrm == 0.0 {
            return Ok(f64::NAN);
        }
        Ok(expectation(self.op, &psi)? / nrm)
    }

    fn analytic_gradient(&self, blocks: &[Vec<C64>]) -> Result<Blocks> {
        let psi = rank2_vector(&self.spec(blocks)?);
        let nrm = norm_sq(&psi);
        if nrm == 0.0 {
            return Ok(vec![vec![C64::new(f64::NAN, 0.0); self.block_len()]; 4]);
        }
        let q = expectation(self.op, &psi)? / nrm;
        let a_psi = self.op.entries() * nalgebra::DVector::from_column_slice(&psi);
        let g: Vec<C64> = psi.iter().zip(a_psi.iter()).map(|(p, ap)| (ap - p * q) * (2.0 / nrm)).collect();
        let size = self.block_len();
        let (x, y, u, v) = (&blocks[0], &blocks[1], &blocks[2], &blocks[3]);
        let mut out = vec![vec![C64::new(0.0, 0.0); size]; 4];
        for a in 0..size {
            for b in 0..size {
                let gab = g[self.layout.offset(a, b)];
                out[0][a] += gab * u[b].conj();
                out[1][a] += gab * v[b].conj();
                out[2][b] += gab * x[a].conj();
                out[3][b] += gab * y[a].conj();
            }
        }
        Ok(out)
    }
}

/// Minimizes `⟨ψ|A|ψ⟩ / ⟨ψ|ψ⟩` over `ψ = x ⊗ u + y ⊗ v` with unit blocks.
pub fn minimize_expectation(
    op: &DenseOperator,
    dims: &DimVector,
    settings: &DescentSettings,
) -> Result<ExpectationSearchResult> {
    let started = Instant::now();
    let layout = ProductBasisLayout::new(dims.clone());
    if !op.is_hermitian(1e-12) {
        return Err(Error::Precondition("operator must be Hermitian".into()));
    }
    if op.dim() != layout.total_dimension() {
        return Err(Error::LengthMismatch { expected: layout.total_dimension(), found: op.dim() });
    }
    let problem = ExpectationProblem { op, dims, layout };
    let run = run_restarts(&problem, dims, settings)?;
    let (best_restart, blocks) =
        run.best.ok_or_else(|| Error::Numerical("every restart aborted on a NaN objective".into()))?;
    Ok(ExpectationSearchResult {
        dims: dims.clone(),
        settings: settings.clone(),
        best_value: run.per_restart[best_restart].value,
        best_restart,
        best_spec: problem.spec(&blocks)?,
        per_restart: run.per_restart,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Whether nonnegativity of `Φ_d^(n)` is a theorem for this cell:
/// `m = 1`, or `n = 1`, or `n = 2` with at most one `d_k > 2`.
pub fn is_proven_nonnegative(dims: &DimVector, n: usize) -> bool {
    dims.order() == 1 || n == 1 || (n == 2 && dims.dims().iter().filter(|&&d| d > 2).count() <= 1)
}

/// One `(dims, n)` cell of a campaign.
#[derive(Debug, Clone, Serialize)]
pub struct CellOutcome {
    pub dims: Vec<usize>,
    pub n: usize,
    pub seed: u64,
    pub best_value: Option<f64>,
    pub restarts_aborted: usize,
    pub proven_nonnegative: bool,
    pub candidate: bool,
    pub error: Option<String>,
    pub wall_time_secs: f64,
    /// Full input for a flagged candidate, for independent re-verification.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate_input: Option<CbsInput>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignReport {
    pub settings: DescentSettings,
    pub cells: Vec<CellOutcome>,
    pub candidates: usize,
    pub min_value: Option<f64>,
}

/// Runs [`minimize_phi`] per cell, flagging minima below [`CANDIDATE_THRESHOLD`].
pub fn campaign(cells: &[(DimVector, usize)], template: &DescentSettings, budget: u128) -> CampaignReport {
    campaign_with_threshold(cells, template, budget, CANDIDATE_THRESHOLD)
}

pub fn campaign_with_threshold(
    cells: &[(DimVector, usize)],
    template: &DescentSettings,
    budget: u128,
    threshold: f64,
) -> CampaignReport {
    let outcomes: Vec<CellOutcome> = cells
        .iter()
        .enumerate()
        .map(|(index, (dims, n))| {
            let seed = derive_seed(template.seed, index as u64);
            let config = SearchConfig {
                dims: dims.clone(),
                n: *n,
                budget,
                descent: DescentSettings { seed, ..template.clone() },
            };
            let base = CellOutcome {
                dims: dims.dims().to_vec(),
                n: *n,
                seed,
                best_value: None,
                restarts_aborted: 0,
                proven_nonnegative: is_proven_nonnegative(dims, *n),
                candidate: false,
                error: None,
                wall_time_secs: 0.0,
                candidate_input: None,
            };
            match minimize_phi(&config) {
                Ok(r) => {
                    let candidate = r.best_value < threshold;
                    CellOutcome {
                        best_value: Some(r.best_value),
                        restarts_aborted: r.per_restart.iter().filter(|o| o.aborted).count(),
                        candidate,
                        wall_time_secs: r.wall_time_secs,
                        candidate_input: candidate.then_some(r.best_input),
                        ..base
                    }
                }
                Err(e) => CellOutcome { error: Some(e.to_string()), ..base },
            }
        })
        .collect();
    let candidates = outcomes.iter().filter(|c| c.candidate).count();
    let min_value = outcomes.iter().filter_map(|c| c.best_value).min_by(f64::total_cmp);
    CampaignReport { settings: template.clone(), cells: outcomes, candidates, min_value }
}
