//! Multiresponse block group-lasso solver.
//!
//! Minimizes `(2n)^-1 ||Y - sum_j X_j B_j||_F^2 + lambda sum_j ||B_j||_F`
//! by cyclic block coordinate descent, where each block update is one
//! proximal-gradient (group soft-threshold) step with step size `1/L_j`.
//! `L_j` is the largest eigenvalue of `(1/n) X_j^T X_j`, found by power
//! iteration and inflated by a factor `1 + 1e-6` so the per-block descent
//! property survives the iteration's finite tolerance.
//!
//! Thresholded blocks are set to exactly zero, so downstream code can test
//! activity with `norm > 0` and edge sets are parameter-free. Optimality is
//! certified by the stationarity / dual-feasibility residuals of the group
//! lasso KKT system.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splines::FullDesign;

/// Relative tolerance for the per-block power iteration.
const POWER_ITER_TOL: f64 = 1e-8;
const POWER_ITER_MAX: usize = 10_000;
/// Safety inflation on the estimated Lipschitz constants.
const LIPSCHITZ_MARGIN: f64 = 1e-6;

/// One target node's penalized regression problem.
#[derive(Debug, Clone)]
pub struct GroupLassoProblem {
    /// n x m_n response (the target node's scores).
    pub response: Array2<f64>,
    pub design: FullDesign,
    lipschitz: Vec<f64>,
    lambda_max: f64,
}

impl GroupLassoProblem {
    pub fn new(response: Array2<f64>, design: FullDesign) -> Result<GroupLassoProblem> {
        let lipschitz = design
            .blocks
            .iter()
            .map(|b| design_block_lipschitz(&b.matrix))
            .collect();
        GroupLassoProblem::with_lipschitz(response, design, lipschitz)
    }

    /// Constructor for callers that already hold the per-block step
    /// constants (the same block matrix is shared across target nodes).
    pub(crate) fn with_lipschitz(
        response: Array2<f64>,
        design: FullDesign,
        lipschitz: Vec<f64>,
    ) -> Result<GroupLassoProblem> {
        if response.nrows() != design.n {
            return Err(Error::DimensionMismatch(format!(
                "response has {} rows, design has n = {}",
                response.nrows(),
                design.n
            )));
        }
        if response.ncols() != design.m_n {
            return Err(Error::DimensionMismatch(format!(
                "response has {} columns, design has m_n = {}",
                response.ncols(),
                design.m_n
            )));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("response contains non-finite values".into()));
        }
        if lipschitz.len() != design.blocks.len() {
            return Err(Error::DimensionMismatch(
                "one Lipschitz constant per design block required".into(),
            ));
        }
        Ok(GroupLassoProblem {
            response,
            design,
            lipschitz,
        })
    }

    pub fn n(&self) -> usize {
        self.design.n
    }

    pub fn group_count(&self) -> usize {
        self.design.blocks.len()
    }

    pub fn block_columns(&self) -> usize {
        self.design.k_n * self.design.m_n
    }
}

/// Step constant for one design block: the power-iteration estimate of the
/// largest eigenvalue of `(1/n) X^T X`, inflated by the safety margin.
pub(crate) fn design_block_lipschitz(x: &Array2<f64>) -> f64 {
    block_lipschitz(x) * (1.0 + LIPSCHITZ_MARGIN)
}

/// Largest eigenvalue of `(1/n) X^T X` by power iteration.
fn block_lipschitz(x: &Array2<f64>) -> f64 {
    let n = x.nrows() as f64;
    let c = x.ncols();
    let diag: Vec<f64> = (0..c)
        .map(|j| x.column(j).dot(&x.column(j)) / n)
        .collect();
    if diag.iter().sum::<f64>() == 0.0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(c, (c as f64).sqrt().recip());
    let mut lam_prev = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let w = x.dot(&v);
        let z = x.t().dot(&w) / n;
        let norm = z.dot(&z).sqrt();
        if norm == 0.0 {
            // The start vector was annihilated; restart from the dominant
            // diagonal direction, which cannot be in the null space.
            let argmax = diag
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            v.fill(0.0);
            v[argmax] = 1.0;
            lam_prev = 0.0;
            continue;
        }
        let lam = v.dot(&z);
        v = z / norm;
        if (lam - lam_prev).abs() <= POWER_ITER_TOL * lam.abs().max(f64::MIN_POSITIVE) {
            return lam;
        }
        lam_prev = lam;
    }
    lam_prev
}

/// Per-neighbour coefficient blocks, in design order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBlocks {
    /// Each entry is (k_n * m_n) x m_n. Inactive blocks are exactly zero.
    pub blocks: Vec<Array2<f64>>,
}

impl CoefficientBlocks {
    pub fn zeros(design: &FullDesign) -> CoefficientBlocks {
        let c = design.k_n * design.m_n;
        CoefficientBlocks {
            blocks: (0..design.blocks.len())
                .map(|_| Array2::zeros((c, design.m_n)))
                .collect(),
        }
    }

    /// Frobenius norm per block.
    pub fn block_norms(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Group indices whose block norm is strictly positive.
    pub fn active_set(&self) -> Vec<usize> {
        self.block_norms()
            .iter()
            .enumerate()
            .filter(|(_, &norm)| norm > 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    fn total_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// Iteration controls for [`solve`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_sweeps: usize,
    pub kkt_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            max_sweeps: 1000,
            kkt_tol: 1e-5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.kkt_tol > 0.0) {
            return Err(Error::InvalidConfig(
                "solver tolerances must be positive".into(),
            ));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("max_sweeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Stationarity and dual-feasibility residuals of a candidate solution.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    /// Max over active blocks of `||G_j + lambda B_j / ||B_j||_F||_F`.
    pub max_active_residual: f64,
    /// Max over inactive blocks of `max(0, ||G_j||_F - lambda)`.
    pub max_inactive_excess: f64,
    pub satisfied: bool,
}

/// A solution with its convergence metadata.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub blocks: CoefficientBlocks,
    pub converged: bool,
    pub sweeps: usize,
    /// Objective after each sweep; non-increasing.
    pub sweep_objectives: Vec<f64>,
    pub kkt: KktReport,
    /// Set at lambda = 0 on a column-rank-deficient design, where the
    /// least-squares point is not unique.
    pub non_unique: bool,
}

fn residual_from(prob: &GroupLassoProblem, blocks: &CoefficientBlocks) -> Array2<f64> {
    let mut residual = prob.response.clone();
    for (j, block) in prob.design.blocks.iter().enumerate() {
        if blocks.blocks[j].iter().any(|&v| v != 0.0) {
            ndarray::linalg::general_mat_mul(
                -1.0,
                &block.matrix,
                &blocks.blocks[j],
                1.0,
                &mut residual,
            );
        }
    }
    residual
}

/// Penalized objective `(2n)^-1 ||Y - XB||_F^2 + lambda sum_j ||B_j||_F`.
pub fn objective(prob: &GroupLassoProblem, blocks: &CoefficientBlocks, lambda: f64) -> Result<f64> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::Precondition(format!("lambda = {lambda} must be >= 0")));
    }
    check_block_dims(prob, blocks)?;
    let residual = residual_from(prob, blocks);
    let fit: f64 = residual.iter().map(|v| v * v).sum::<f64>() / (2.0 * prob.n() as f64);
    let penalty: f64 = blocks.block_norms().iter().sum();
    Ok(fit + lambda * penalty)
}

fn check_block_dims(prob: &GroupLassoProblem, blocks: &CoefficientBlocks) -> Result<()> {
    if blocks.blocks.len() != prob.group_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficient blocks for {} design blocks",
            blocks.blocks.len(),
            prob.group_count()
        )));
    }
    let c = prob.block_columns();
    for (j, b) in blocks.blocks.iter().enumerate() {
        if b.dim() != (c, prob.design.m_n) {
            return Err(Error::DimensionMismatch(format!(
                "block {j} has shape {:?}, expected ({c}, {})",
                b.dim(),
                prob.design.m_n
            )));
        }
    }
    Ok(())
}

/// Smallest penalty at which the all-zero solution is optimal:
/// `max_j ||(1/n) X_j^T Y||_F`.
pub fn lambda_max(prob: &GroupLassoProblem) -> f64 {
    let n = prob.n() as f64;
    let mut best = 0.0_f64;
    for block in &prob.design.blocks {
        let g = block.matrix.t().dot(&prob.response) / n;
        best = best.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    best
}

/// KKT residuals of `blocks` at the given penalty; `satisfied` compares both
/// maxima against `kkt_tol`.
pub fn kkt_residual(
    prob: &GroupLassoProblem,
    blocks: &CoefficientBlocks,
    lambda: f64,
    kkt_tol: f64,
) -> Result<KktReport> {
    check_block_dims(prob, blocks)?;
    let n = prob.n() as f64;
    let residual = residual_from(prob, blocks);
    let mut max_active = 0.0_f64;
    let mut max_inactive = 0.0_f64;
    for (j, block) in prob.design.blocks.iter().enumerate() {
        // G_j = (1/n) X_j^T (XB - Y) = -(1/n) X_j^T residual.
        let g = block.matrix.t().dot(&residual) * (-1.0 / n);
        let bnorm = blocks.blocks[j]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if bnorm > 0.0 {
            let mut r2 = 0.0;
            for (gv, bv) in g.iter().zip(blocks.blocks[j].iter()) {
                let rv = gv + lambda * bv / bnorm;
                r2 += rv * rv;
            }
            max_active = max_active.max(r2.sqrt());
        } else {
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            max_inactive = max_inactive.max((gnorm - lambda).max(0.0));
        }
    }
    Ok(KktReport {
        max_active_residual: max_active,
        max_inactive_excess: max_inactive,
        satisfied: max_active <= kkt_tol && max_inactive <= kkt_tol,
    })
}

/// Solves at one penalty by cyclic blockwise proximal descent.
pub fn solve(
    prob: &GroupLassoProblem,
    lambda: f64,
    warm: Option<&CoefficientBlocks>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::Precondition(format!("lambda = {lambda} must be >= 0")));
    }
    cfg.validate()?;
    let n = prob.n() as f64;
    let groups = prob.group_count();
    let c = prob.block_columns();
    let m = prob.design.m_n;

    let mut blocks = match warm {
        Some(w) => {
            check_block_dims(prob, w)?;
            w.clone()
        }
        None => CoefficientBlocks::zeros(&prob.design),
    };
    let mut residual = residual_from(prob, &blocks);

    let mut g = Array2::<f64>::zeros((c, m));
    let mut sweep_objectives = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    let mut kkt = None;

    for _ in 0..cfg.max_sweeps {
        sweeps += 1;
        let mut max_update = 0.0_f64;
        for j in 0..groups {
            let lj = prob.lipschitz[j];
            if lj == 0.0 {
                // Zero design block: the optimal block is zero for lambda > 0
                // and contributes nothing to the fit either way.
                let was_active = blocks.blocks[j].iter().any(|&v| v != 0.0);
                if was_active && lambda > 0.0 {
                    blocks.blocks[j].fill(0.0);
                }
                continue;
            }
            let x = &prob.design.blocks[j].matrix;
            ndarray::linalg::general_mat_mul(1.0 / (n * lj), &x.t(), &residual, 0.0, &mut g);
            // g now holds the proximal candidate V = B_j + (1/(n L_j)) X_j^T R.
            g.zip_mut_with(&blocks.blocks[j], |gv, &bv| *gv += bv);
            let vnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let thresh = lambda / lj;
            if vnorm <= thresh {
                if blocks.blocks[j].iter().any(|&v| v != 0.0) {
                    // Block leaves the active set: restore the residual and
                    // zero it out exactly.
                    ndarray::linalg::general_mat_mul(
                        1.0,
                        x,
                        &blocks.blocks[j],
                        1.0,
                        &mut residual,
                    );
                    let norm = blocks.blocks[j]
                        .iter()
                        .map(|v| v * v)
                        .sum::<f64>()
                        .sqrt();
                    max_update = max_update.max(norm);
                    blocks.blocks[j].fill(0.0);
                }
                continue;
            }
            let shrink = 1.0 - thresh / vnorm;
            // Reuse g as the new block; track the change for the residual.
            let mut delta2 = 0.0;
            for (gv, bv) in g.iter_mut().zip(blocks.blocks[j].iter_mut()) {
                let new = shrink * *gv;
                let d = new - *bv;
                delta2 += d * d;
                *gv = d;
                *bv = new;
            }
            if delta2 > 0.0 {
                ndarray::linalg::general_mat_mul(-1.0, x, &g, 1.0, &mut residual);
                max_update = max_update.max(delta2.sqrt());
            }
        }

        let fit: f64 = residual.iter().map(|v| v * v).sum::<f64>() / (2.0 * n);
        let obj = fit + lambda * blocks.block_norms().iter().sum::<f64>();
        if !obj.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "objective became non-finite after sweep {sweeps}"
            )));
        }
        sweep_objectives.push(obj);

        if max_update <= cfg.tol * (1.0 + blocks.total_norm()) {
            let report = kkt_residual(prob, &blocks, lambda, cfg.kkt_tol)?;
            let ok = report.satisfied;
            kkt = Some(report);
            if ok {
                converged = true;
                break;
            }
        }
    }

    let kkt = match kkt {
        Some(report) if converged => report,
        _ => kkt_residual(prob, &blocks, lambda, cfg.kkt_tol)?,
    };
    let non_unique = lambda == 0.0 && prob.design.n_columns() > prob.n();
    Ok(SolveResult {
        blocks,
        converged,
        sweeps,
        sweep_objectives,
        kkt,
        non_unique,
    })
}

/// Solves along a strictly descending positive grid with warm starts.
pub fn solve_path(
    prob: &GroupLassoProblem,
    lambdas: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<SolveResult>> {
    if lambdas.is_empty() {
        return Err(Error::Precondition("empty lambda grid".into()));
    }
    for (i, &lam) in lambdas.iter().enumerate() {
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(Error::Precondition(format!(
                "lambda grid entry {i} = {lam} must be positive"
            )));
        }
        if i > 0 && lam >= lambdas[i - 1] {
            return Err(Error::Precondition(format!(
                "lambda grid must be strictly descending at entry {i}"
            )));
        }
    }
    let mut out = Vec::with_capacity(lambdas.len());
    let mut warm: Option<CoefficientBlocks> = None;
    for &lam in lambdas {
        let result = solve(prob, lam, warm.as_ref(), cfg)?;
        warm = Some(result.blocks.clone());
        out.push(result);
    }
    Ok(out)
}
