//! Per-node functional PCA.
//!
//! The empirical covariance operator is discretized with the quadrature
//! weights: with `W = diag(w)`, the eigenproblem of `f -> int sigma(., s) f(s) ds`
//! becomes the symmetric matrix problem `W^1/2 sigma W^1/2 v = lambda v`,
//! and eigenfunctions are recovered as `phi = W^-1/2 v`. This keeps the
//! problem symmetric and the recovered eigenfunctions orthonormal under
//! the same quadrature used everywhere else.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::fdata::{inner_product, FunctionalDataset, TimeGrid};

/// Threshold under which a leading-relative eigenvalue is treated as zero.
const EIGENVALUE_FLOOR_RATIO: f64 = 1e-10;

/// Sign convention threshold: first grid value of an eigenfunction whose
/// magnitude exceeds this is made positive.
const SIGN_EPS: f64 = 1e-10;

/// Empirical covariance of one node's curves on the grid.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    pub node: usize,
    /// T x T, exactly symmetric.
    pub sigma: Array2<f64>,
}

/// Leading eigenpairs of a node's covariance operator.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub node: usize,
    /// Nonincreasing, clipped at zero.
    pub eigenvalues: Vec<f64>,
    /// Row r holds the r-th eigenfunction on the grid; orthonormal under
    /// quadrature, first significantly nonzero grid value positive.
    pub eigenfunctions: Array2<f64>,
    /// Number of components retained downstream.
    pub m_selected: usize,
}

/// Scaled principal scores for one node: n subjects x m components.
#[derive(Debug, Clone)]
pub struct ScorePanel {
    pub node: usize,
    pub scores: Array2<f64>,
    /// True once mapped into [-1, 1].
    pub transformed: bool,
}

impl ScorePanel {
    pub fn n_subjects(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.scores.ncols()
    }
}

/// Covariance formula `(1/n) sum_u X_u(s) X_u(t)` for an n x T value block.
pub fn empirical_covariance(values: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, t) = values.dim();
    let mut sigma = Array2::zeros((t, t));
    ndarray::linalg::general_mat_mul(1.0 / n as f64, &values.t(), &values, 0.0, &mut sigma);
    // Mirror the upper triangle so the result is bitwise symmetric.
    for s in 0..t {
        for r in s + 1..t {
            sigma[[r, s]] = sigma[[s, r]];
        }
    }
    sigma
}

/// Empirical covariance of `node`'s curves. Requires a centered dataset.
pub fn estimate_covariance(ds: &FunctionalDataset, node: usize) -> Result<CovarianceMatrix> {
    if !ds.centered {
        return Err(Error::Precondition(
            "estimate_covariance requires a centered dataset".into(),
        ));
    }
    if node >= ds.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "node {node} out of range for p = {}",
            ds.n_nodes()
        )));
    }
    let block = ds.values.slice(s![.., node, ..]);
    Ok(CovarianceMatrix {
        node,
        sigma: empirical_covariance(block),
    })
}

/// Solves the discretized operator eigenproblem for the leading `m_max` pairs.
pub fn eigen_decompose(
    cov: &CovarianceMatrix,
    grid: &TimeGrid,
    m_max: usize,
) -> Result<EigenSystem> {
    let t = cov.sigma.nrows();
    if cov.sigma.ncols() != t || grid.len() != t {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{} on a grid of {}",
            cov.sigma.nrows(),
            cov.sigma.ncols(),
            grid.len()
        )));
    }
    if m_max == 0 || m_max > t {
        return Err(Error::DimensionMismatch(format!(
            "m_max = {m_max} must lie in 1..={t}"
        )));
    }
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let mut m = DMatrix::<f64>::zeros(t, t);
    for si in 0..t {
        for sj in si..t {
            let v = sqrt_w[si] * cov.sigma[[si, sj]] * sqrt_w[sj];
            m[(si, sj)] = v;
            m[(sj, si)] = v;
        }
    }
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut eigenvalues = Vec::with_capacity(m_max);
    let mut eigenfunctions = Array2::zeros((m_max, t));
    for (r, &idx) in order.iter().take(m_max).enumerate() {
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
        let col = eig.eigenvectors.column(idx);
        for s in 0..t {
            eigenfunctions[[r, s]] = col[s] / sqrt_w[s];
        }
        // Sign convention: first grid value with magnitude > SIGN_EPS positive.
        if let Some(s0) = (0..t).find(|&s| eigenfunctions[[r, s]].abs() > SIGN_EPS) {
            if eigenfunctions[[r, s0]] < 0.0 {
                for s in 0..t {
                    eigenfunctions[[r, s]] = -eigenfunctions[[r, s]];
                }
            }
        }
    }
    Ok(EigenSystem {
        node: cov.node,
        eigenvalues,
        eigenfunctions,
        m_selected: m_max,
    })
}

/// Smallest m whose leading eigenvalues explain at least `fraction` of the total.
pub fn select_truncation(eigenvalues: &[f64], fraction: f64) -> Result<usize> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let total: f64 = eigenvalues.iter().sum();
    if eigenvalues.is_empty() || total <= 0.0 {
        return Err(Error::DegenerateSpectrum(
            "cannot select a truncation level from an all-zero spectrum".into(),
        ));
    }
    let mut cum = 0.0;
    for (r, lam) in eigenvalues.iter().enumerate() {
        cum += lam;
        if cum / total >= fraction {
            return Ok(r + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// Scaled scores `xi_ur = lambda_r^-1/2 <X_u, phi_r>` for the selected components.
pub fn compute_scores(
    ds: &FunctionalDataset,
    node: usize,
    es: &EigenSystem,
) -> Result<ScorePanel> {
    let m = es.m_selected;
    if m == 0 || m > es.eigenvalues.len() {
        return Err(Error::Precondition(format!(
            "m_selected = {m} must lie in 1..={}",
            es.eigenvalues.len()
        )));
    }
    if es.eigenfunctions.ncols() != ds.n_times() {
        return Err(Error::DimensionMismatch(
            "eigenfunctions and dataset disagree on grid size".into(),
        ));
    }
    let floor = EIGENVALUE_FLOOR_RATIO * es.eigenvalues[0];
    for r in 0..m {
        if es.eigenvalues[r] <= floor {
            return Err(Error::IllConditioned(format!(
                "eigenvalue {r} = {:e} at or below floor {floor:e}",
                es.eigenvalues[r]
            )));
        }
    }
    let n = ds.n_subjects();
    let mut scores = Array2::zeros((n, m));
    for r in 0..m {
        let scale = es.eigenvalues[r].sqrt().recip();
        let phi = es.eigenfunctions.row(r);
        for u in 0..n {
            let x = ds.values.slice(s![u, node, ..]);
            scores[[u, r]] = scale * inner_product(x, phi, &ds.grid)?;
        }
    }
    Ok(ScorePanel {
        node,
        scores,
        transformed: false,
    })
}

/// Monotone map into [-1, 1]: global max-abs rescale, clamp, re-center
/// columns, clamp once more.
pub fn transform_scores(sp: &ScorePanel) -> Result<ScorePanel> {
    if sp.transformed {
        return Err(Error::Precondition("scores already transformed".into()));
    }
    let max_abs = sp
        .scores
        .iter()
        .fold(0.0_f64, |acc, &x| acc.max(x.abs()));
    let c = max_abs.max(1.0);
    let mut scores = sp.scores.mapv(|x| (x / c).clamp(-1.0, 1.0));
    let n = scores.nrows();
    for r in 0..scores.ncols() {
        let mean: f64 = scores.column(r).sum() / n as f64;
        for u in 0..n {
            scores[[u, r]] = (scores[[u, r]] - mean).clamp(-1.0, 1.0);
        }
    }
    Ok(ScorePanel {
        node: sp.node,
        scores,
        transformed: true,
    })
}
