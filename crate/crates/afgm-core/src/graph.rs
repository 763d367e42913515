//! Graph types, pipeline orchestration, and ground-truth machinery.
//!
//! Vertices in [`Graph`] and [`Dag`] are 1-based, matching the on-disk
//! JSON and CSV formats; node positions inside datasets, panels, and fits
//! are 0-based. [`edges_from_fits`] is the only place the two meet.

use std::collections::BTreeSet;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdata::FunctionalDataset;
use crate::fpca::{
    compute_scores, eigen_decompose, estimate_covariance, select_truncation, transform_scores,
    ScorePanel,
};
use crate::solver::{lambda_max, solve_path, CoefficientBlocks, GroupLassoProblem, SolverConfig};
use crate::splines::{make_basis, CenteredDesignBlock, FullDesign, SplineBasis};

/// Largest number of eigenpairs extracted per node.
const DEFAULT_M_MAX: usize = 25;

/// An undirected graph over `p` vertices, stored as canonical (min, max)
/// 1-based pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn new(p: usize) -> Graph {
        Graph {
            p,
            edges: BTreeSet::new(),
        }
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::Precondition(format!("self-loop at vertex {i}")));
        }
        if i < 1 || j < 1 || i > self.p || j > self.p {
            return Err(Error::Precondition(format!(
                "edge ({i}, {j}) outside 1..={}",
                self.p
            )));
        }
        self.edges.insert((i.min(j), i.max(j)));
        Ok(())
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.edges.iter()
    }

    /// Checks the stored pairs after an untrusted deserialization.
    pub fn validate(&self) -> Result<()> {
        for &(i, j) in &self.edges {
            if i >= j || i < 1 || j > self.p {
                return Err(Error::Precondition(format!(
                    "non-canonical or out-of-range edge ({i}, {j})"
                )));
            }
        }
        Ok(())
    }
}

/// A DAG whose directed edges point from the lower to the higher vertex,
/// which makes the index order a topological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    pub p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Dag {
    pub fn new(p: usize) -> Dag {
        Dag {
            p,
            edges: BTreeSet::new(),
        }
    }

    /// Adds `parent -> child`; requires `parent < child`.
    pub fn add_edge(&mut self, parent: usize, child: usize) -> Result<()> {
        if parent >= child || parent < 1 || child > self.p {
            return Err(Error::Precondition(format!(
                "directed edge ({parent} -> {child}) must satisfy 1 <= parent < child <= {}",
                self.p
            )));
        }
        self.edges.insert((parent, child));
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.edges.iter()
    }

    /// Parents of `child` (1-based), ascending.
    pub fn parents_of(&self, child: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, c)| c == child)
            .map(|&(parent, _)| parent)
            .collect()
    }
}

/// Number of edges implied by a pair density, rounded half-up.
pub fn target_edge_count(p: usize, density: f64) -> usize {
    let total = p * (p - 1) / 2;
    ((density * total as f64).round() as usize).min(total)
}

/// Uniform random DAG over `p` vertices with `round(density * C(p, 2))`
/// edges, each oriented low -> high.
pub fn random_dag(p: usize, density: f64, seed: u64) -> Result<Dag> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidConfig(format!(
            "density = {density} outside [0, 1]"
        )));
    }
    random_dag_with_count(p, target_edge_count(p, density), seed)
}

/// Uniform random DAG with an explicit edge count.
pub fn random_dag_with_count(p: usize, count: usize, seed: u64) -> Result<Dag> {
    let total = p * (p - 1) / 2;
    if count > total {
        return Err(Error::InvalidConfig(format!(
            "requested {count} edges but only {total} pairs exist"
        )));
    }
    let mut rng = crate::rng::substream(seed, "dag", &[]);
    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    use rand::Rng;
    while chosen.len() < count {
        chosen.insert(rng.random_range(0..total));
    }
    let mut dag = Dag::new(p);
    for idx in chosen {
        let (a, b) = unrank_pair(p, idx);
        dag.add_edge(a, b)?;
    }
    Ok(dag)
}

/// Maps a pair index in `0..C(p, 2)` to 1-based `(a, b)` with `a < b`.
fn unrank_pair(p: usize, mut idx: usize) -> (usize, usize) {
    for a in 1..p {
        let row = p - a;
        if idx < row {
            return (a, a + idx + 1);
        }
        idx -= row;
    }
    unreachable!("pair index out of range");
}

/// Undirected skeleton plus an edge between every pair of parents that
/// share a child.
pub fn moralize(dag: &Dag) -> Graph {
    let mut graph = Graph::new(dag.p);
    for &(parent, child) in dag.edges() {
        graph.edges.insert((parent, child));
    }
    for child in 1..=dag.p {
        let parents = dag.parents_of(child);
        for (a, &pa) in parents.iter().enumerate() {
            for &pb in &parents[a + 1..] {
                graph.edges.insert((pa.min(pb), pa.max(pb)));
            }
        }
    }
    graph
}

/// The regularization path fitted for one target node.
///
/// `target` and `sources` are 0-based node positions.
#[derive(Debug, Clone)]
pub struct NeighborhoodFit {
    pub target: usize,
    /// Neighbour node positions in design order (ascending, skipping target).
    pub sources: Vec<usize>,
    /// Descending penalty grid shared across all targets.
    pub lambdas: Vec<f64>,
    pub path: Vec<CoefficientBlocks>,
    /// `block_norms[l][pos]` is the Frobenius norm of `path[l].blocks[pos]`.
    pub block_norms: Vec<Vec<f64>>,
    /// Per-lambda convergence flags from the solver.
    pub converged: Vec<bool>,
}

/// Lambda-grid specification: `count` log-spaced values from the largest
/// per-node `lambda_max` down to `min_ratio` times it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaGrid {
    pub count: usize,
    pub min_ratio: f64,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid {
            count: 50,
            min_ratio: 1e-3,
        }
    }
}

/// Pipeline configuration for [`fit_afgm`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AfgmConfig {
    pub variance_fraction: f64,
    pub m_override: Option<usize>,
    pub degree: usize,
    pub lambda: LambdaGrid,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl Default for AfgmConfig {
    fn default() -> Self {
        AfgmConfig {
            variance_fraction: 0.9,
            m_override: None,
            degree: 3,
            lambda: LambdaGrid::default(),
            solver: SolverConfig::default(),
            seed: 0,
        }
    }
}

impl AfgmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.variance_fraction && self.variance_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "variance_fraction = {} outside (0, 1)",
                self.variance_fraction
            )));
        }
        if self.degree < 1 {
            return Err(Error::InvalidConfig("degree must be >= 1".into()));
        }
        if self.lambda.count == 0 {
            return Err(Error::InvalidConfig("lambda.count must be >= 1".into()));
        }
        if !(0.0 < self.lambda.min_ratio && self.lambda.min_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda.min_ratio = {} outside (0, 1)",
                self.lambda.min_ratio
            )));
        }
        if let Some(m) = self.m_override {
            if m == 0 {
                return Err(Error::InvalidConfig("m_override must be >= 1".into()));
            }
        }
        self.solver.validate()
    }
}

/// `count` log-spaced values descending from `top` to `top * min_ratio`.
pub fn log_grid(top: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![top];
    }
    (0..count)
        .map(|l| top * min_ratio.powf(l as f64 / (count - 1) as f64))
        .collect()
}

/// How neighbour blocks are expanded in the design.
#[derive(Debug, Clone, Copy)]
pub(crate) enum DesignKind<'a> {
    /// Centered B-spline expansion of each score component.
    Spline(&'a SplineBasis),
    /// Single centered identity function per score component (k = 1).
    Identity,
}

impl DesignKind<'_> {
    fn k_n(&self) -> usize {
        match self {
            DesignKind::Spline(basis) => basis.k_n,
            DesignKind::Identity => 1,
        }
    }

    fn block_matrix(&self, panel: &ScorePanel) -> Result<Array2<f64>> {
        match self {
            DesignKind::Spline(basis) => crate::splines::centered_block_matrix(panel, basis),
            DesignKind::Identity => {
                if !panel.transformed {
                    return Err(Error::Precondition(format!(
                        "node {} scores must be transformed before design assembly",
                        panel.node
                    )));
                }
                let n = panel.n_subjects();
                let mut matrix = panel.scores.clone();
                for c in 0..matrix.ncols() {
                    let mean = matrix.column(c).sum() / n as f64;
                    matrix.column_mut(c).mapv_inplace(|v| v - mean);
                }
                Ok(matrix)
            }
        }
    }
}

/// FPCA, truncation, and range transform for every node. Returns panels
/// sharing a common component count.
pub(crate) fn panels_from_dataset(
    ds: &FunctionalDataset,
    cfg: &AfgmConfig,
) -> Result<Vec<ScorePanel>> {
    if !ds.centered {
        return Err(Error::Precondition("fit requires a centered dataset".into()));
    }
    if ds.n_subjects() < 2 || ds.n_nodes() < 2 {
        return Err(Error::Precondition(format!(
            "fit requires n >= 2 and p >= 2, got n = {}, p = {}",
            ds.n_subjects(),
            ds.n_nodes()
        )));
    }
    let m_max = ds.n_times().min(DEFAULT_M_MAX);
    let eigens = (0..ds.n_nodes())
        .into_par_iter()
        .map(|node| {
            let cov = estimate_covariance(ds, node)?;
            eigen_decompose(&cov, &ds.grid, m_max)
        })
        .collect::<Result<Vec<_>>>()?;

    let m_n = match cfg.m_override {
        Some(m) => m.min(m_max),
        None => {
            let mut best = 1;
            for es in &eigens {
                best = best.max(select_truncation(&es.eigenvalues, cfg.variance_fraction)?);
            }
            best
        }
    };

    eigens
        .into_par_iter()
        .map(|mut es| {
            es.m_selected = m_n;
            let raw = compute_scores(ds, es.node, &es)?;
            transform_scores(&raw)
        })
        .collect()
}

/// Shared-grid neighbourhood fits for every target node.
pub(crate) fn fit_neighborhoods(
    panels: &[ScorePanel],
    cfg: &AfgmConfig,
    kind: DesignKind<'_>,
) -> Result<Vec<NeighborhoodFit>> {
    let p = panels.len();
    let n = panels[0].n_subjects();
    let m_n = panels[0].n_components();
    let k_n = kind.k_n();

    // One block matrix and one step constant per source node, shared
    // across targets.
    let matrices: Vec<Array2<f64>> = panels
        .par_iter()
        .map(|panel| kind.block_matrix(panel))
        .collect::<Result<_>>()?;
    let lipschitz: Vec<f64> = matrices
        .par_iter()
        .map(|m| crate::solver::design_block_lipschitz(m))
        .collect();

    let make_problem = |target: usize| -> Result<GroupLassoProblem> {
        let blocks = (0..p)
            .filter(|&j| j != target)
            .map(|j| CenteredDesignBlock {
                target_excluded: target,
                source: j,
                matrix: matrices[j].clone(),
            })
            .collect();
        let design = FullDesign {
            blocks,
            n,
            p,
            k_n,
            m_n,
        };
        let lips = (0..p)
            .filter(|&j| j != target)
            .map(|j| lipschitz[j])
            .collect();
        GroupLassoProblem::with_lipschitz(panels[target].scores.clone(), design, lips)
    };

    // The grid top is the largest per-target lambda_max, so index 0 yields
    // the empty graph exactly.
    let tops = (0..p)
        .into_par_iter()
        .map(|target| Ok(lambda_max(&make_problem(target)?)))
        .collect::<Result<Vec<f64>>>()?;
    let mut top = tops.iter().fold(0.0_f64, |a, &b| a.max(b));
    if top <= 0.0 {
        // All responses are zero; any positive grid gives all-zero fits.
        top = 1.0;
    }
    let grid = log_grid(top, cfg.lambda.count, cfg.lambda.min_ratio);

    (0..p)
        .into_par_iter()
        .map(|target| {
            let prob = make_problem(target)?;
            let results = solve_path(&prob, &grid, &cfg.solver)?;
            let sources: Vec<usize> = (0..p).filter(|&j| j != target).collect();
            let mut path = Vec::with_capacity(results.len());
            let mut block_norms = Vec::with_capacity(results.len());
            let mut converged = Vec::with_capacity(results.len());
            for result in results {
                block_norms.push(result.blocks.block_norms());
                converged.push(result.converged);
                path.push(result.blocks);
            }
            Ok(NeighborhoodFit {
                target,
                sources,
                lambdas: grid.clone(),
                path,
                block_norms,
                converged,
            })
        })
        .collect()
}

/// Runs the full pipeline: per-node FPCA with a shared truncation level,
/// score transform, centered spline designs, and a warm-started group-lasso
/// path for every target node.
pub fn fit_afgm(ds: &FunctionalDataset, cfg: &AfgmConfig) -> Result<Vec<NeighborhoodFit>> {
    cfg.validate()?;
    let panels = panels_from_dataset(ds, cfg)?;
    let basis = make_basis(ds.n_subjects(), cfg.degree)?;
    fit_neighborhoods(&panels, cfg, DesignKind::Spline(&basis))
}

/// Edge set at one grid index: `(i, j)` is an edge iff either block norm is
/// positive (the OR rule).
pub fn edges_from_fits(fits: &[NeighborhoodFit], lambda_index: usize) -> Result<Graph> {
    let p = fits.len();
    if p == 0 {
        return Err(Error::Precondition("no fits given".into()));
    }
    let mut graph = Graph::new(p);
    for fit in fits {
        if fit.target >= p {
            return Err(Error::DimensionMismatch(format!(
                "fit target {} out of range for p = {p}",
                fit.target
            )));
        }
        let norms = fit.block_norms.get(lambda_index).ok_or_else(|| {
            Error::Precondition(format!(
                "lambda index {lambda_index} out of range for a path of {}",
                fit.block_norms.len()
            ))
        })?;
        for (pos, &source) in fit.sources.iter().enumerate() {
            if norms[pos] > 0.0 {
                graph.add_edge(fit.target + 1, source + 1)?;
            }
        }
    }
    Ok(graph)
}

/// Grid index whose edge count is closest to `round(density * C(p, 2))`;
/// ties break toward the larger penalty (the sparser graph).
pub fn select_lambda_by_density(fits: &[NeighborhoodFit], target_density: f64) -> Result<usize> {
    if !(0.0 < target_density && target_density < 1.0) {
        return Err(Error::Precondition(format!(
            "target_density = {target_density} outside (0, 1)"
        )));
    }
    let p = fits.len();
    let path_len = fits
        .first()
        .map(|f| f.block_norms.len())
        .ok_or_else(|| Error::Precondition("no fits given".into()))?;
    if fits.iter().any(|f| f.block_norms.len() != path_len) {
        return Err(Error::DimensionMismatch(
            "fits disagree on path length".into(),
        ));
    }
    let target = target_edge_count(p, target_density);
    let mut best_index = 0;
    let mut best_gap = usize::MAX;
    for l in 0..path_len {
        let count = edges_from_fits(fits, l)?.edge_count();
        let gap = count.abs_diff(target);
        if gap < best_gap {
            best_gap = gap;
            best_index = l;
        }
    }
    Ok(best_index)
}
