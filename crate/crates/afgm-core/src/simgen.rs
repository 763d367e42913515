//! Simulation scenarios: additive structural equations on scores over a
//! random DAG, functional assembly on a Fourier basis, observation noise,
//! and spline smoothing.
//!
//! Scores propagate through the DAG in index order (parents always have
//! lower indices). A root node's curves are assembled from its own scores
//! on the Fourier basis; a child node's curves carry the centered sum of
//! the model function applied to its parents' scores, identically across
//! the Fourier components. Observation noise is added pointwise and every
//! curve is then projected onto a small B-spline space.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdata::{center_dataset, FunctionalDataset, TimeGrid};
use crate::graph::{moralize, random_dag, random_dag_with_count, Dag, Graph};
use crate::rng::substream;
use crate::splines::{eval_basis, SplineBasis};

/// Which conditional-mean function and score laws drive the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "I")]
    I,
    #[serde(rename = "II")]
    II,
    #[serde(rename = "III")]
    III,
}

impl ModelKind {
    /// Score-equation noise used when the config does not pin one.
    pub fn default_score_noise_sd(self) -> f64 {
        match self {
            ModelKind::I => 0.5,
            ModelKind::II => 1.0,
            ModelKind::III => 0.5,
        }
    }

    fn root_draw<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            ModelKind::I => rng.random_range(-1.0..=1.0),
            ModelKind::II => rng.random_range(-2.5..=2.5),
            ModelKind::III => StandardNormal.sample(rng),
        }
    }
}

/// The additive component applied along every edge.
pub fn model_fn(model: ModelKind, x: f64) -> f64 {
    match model {
        ModelKind::I => {
            1.4 + 3.0 * x - 0.5
                + (2.0 * std::f64::consts::PI * (x - 0.5)).sin()
                + 8.0 * (x - 1.0 / 3.0).powi(2)
                - 8.0 / 9.0
        }
        ModelKind::II => {
            -(2.0 * x).sin() + x * x - 25.0 / 12.0 + x + (-x).exp()
                - 0.4 * (2.5_f64).sinh()
        }
        ModelKind::III => x,
    }
}

/// Orthonormal Fourier basis member `q` in 1..=5 at `t`.
pub fn fourier_value(q: usize, t: f64) -> Result<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let root2 = 2.0_f64.sqrt();
    Ok(match q {
        1 => 1.0,
        2 => root2 * (two_pi * t).sin(),
        3 => root2 * (two_pi * t).cos(),
        4 => root2 * (2.0 * two_pi * t).sin(),
        5 => root2 * (2.0 * two_pi * t).cos(),
        _ => {
            return Err(Error::Precondition(format!(
                "Fourier index {q} outside 1..=5"
            )))
        }
    })
}

/// Full description of one simulated scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelKind,
    pub p: usize,
    pub n: usize,
    pub t_points: usize,
    pub dag_density: f64,
    /// Overrides the rounded `dag_density * C(p, 2)` edge count.
    pub dag_edge_count: Option<usize>,
    pub noise_sd_obs: f64,
    /// Defaults to the model's own value when absent.
    pub score_noise_sd: Option<f64>,
    pub n_components: usize,
    pub smoothing_basis_size: usize,
    pub smoothing_order: usize,
    /// Divide each child node's score columns by their empirical standard
    /// deviation before assembling curves.
    pub standardize_child_scores: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            model: ModelKind::I,
            p: 100,
            n: 100,
            t_points: 100,
            dag_density: 0.01,
            dag_edge_count: None,
            noise_sd_obs: 0.5,
            score_noise_sd: None,
            n_components: 5,
            smoothing_basis_size: 10,
            smoothing_order: 4,
            standardize_child_scores: true,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn score_noise_sd(&self) -> f64 {
        self.score_noise_sd
            .unwrap_or_else(|| self.model.default_score_noise_sd())
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.n < 1 || self.t_points < 2 {
            return Err(Error::InvalidConfig(format!(
                "p = {}, n = {}, t_points = {} must all be positive (p >= 2, t_points >= 2)",
                self.p, self.n, self.t_points
            )));
        }
        if !(0.0..=1.0).contains(&self.dag_density) {
            return Err(Error::InvalidConfig(format!(
                "dag_density = {} outside [0, 1]",
                self.dag_density
            )));
        }
        if self.noise_sd_obs < 0.0 || self.score_noise_sd() < 0.0 {
            return Err(Error::InvalidConfig("noise sds must be >= 0".into()));
        }
        if !(1..=5).contains(&self.n_components) {
            return Err(Error::InvalidConfig(format!(
                "n_components = {} outside 1..=5",
                self.n_components
            )));
        }
        if self.smoothing_order < 2 {
            return Err(Error::InvalidConfig("smoothing_order must be >= 2".into()));
        }
        if self.smoothing_basis_size < self.smoothing_order + 1 {
            return Err(Error::InvalidConfig(format!(
                "smoothing_basis_size = {} too small for order {}",
                self.smoothing_basis_size, self.smoothing_order
            )));
        }
        Ok(())
    }
}

/// A simulated dataset with its generating DAG, moralized truth, and the
/// raw (pre-standardization) scores.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub dataset: FunctionalDataset,
    pub truth: Graph,
    pub dag: Dag,
    pub scores: Vec<Array2<f64>>,
}

/// Centered model-function values for one parent score column.
fn centered_f_column(model: ModelKind, column: ndarray::ArrayView1<'_, f64>) -> Vec<f64> {
    let n = column.len();
    let mut vals: Vec<f64> = column.iter().map(|&x| model_fn(model, x)).collect();
    let mean: f64 = vals.iter().sum::<f64>() / n as f64;
    for v in &mut vals {
        *v -= mean;
    }
    vals
}

/// Draws all per-node score matrices by walking the DAG in index order.
pub fn generate_scores(dag: &Dag, cfg: &ScenarioConfig, seed: u64) -> Result<Vec<Array2<f64>>> {
    cfg.validate()?;
    if dag.p != cfg.p {
        return Err(Error::DimensionMismatch(format!(
            "DAG has p = {} but config says {}",
            dag.p, cfg.p
        )));
    }
    let n = cfg.n;
    let m = cfg.n_components;
    let sd = cfg.score_noise_sd();
    let mut out: Vec<Array2<f64>> = Vec::with_capacity(cfg.p);
    for node in 1..=cfg.p {
        let mut rng = substream(seed, "scores", &[node as u64]);
        let parents = dag.parents_of(node);
        let mut scores = Array2::zeros((n, m));
        if parents.is_empty() {
            for u in 0..n {
                for r in 0..m {
                    scores[[u, r]] = cfg.model.root_draw(&mut rng);
                }
            }
        } else {
            let mut mean = vec![0.0; n];
            for &parent in &parents {
                let parent_scores = &out[parent - 1];
                for r in 0..m {
                    let vals = centered_f_column(cfg.model, parent_scores.column(r));
                    for u in 0..n {
                        mean[u] += vals[u];
                    }
                }
            }
            for u in 0..n {
                for q in 0..m {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    scores[[u, q]] = mean[u] + sd * noise;
                }
            }
        }
        out.push(scores);
    }
    Ok(out)
}

/// Ordinary least-squares projector onto a spline space evaluated on the
/// grid, mapped from [0, 1] to the basis domain [-1, 1].
pub(crate) struct Smoother {
    /// T x K design of basis values.
    design: nalgebra::DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Smoother {
    pub(crate) fn new(grid: &TimeGrid, basis_size: usize, order: usize) -> Result<Smoother> {
        let basis = SplineBasis::with_basis_count(basis_size, order - 1)?;
        let t_count = grid.len();
        let mut design = nalgebra::DMatrix::zeros(t_count, basis_size);
        for (s, &t) in grid.points().iter().enumerate() {
            let x = (2.0 * t - 1.0).clamp(-1.0, 1.0);
            for (k, &v) in eval_basis(&basis, x)?.iter().enumerate() {
                design[(s, k)] = v;
            }
        }
        let gram = design.transpose() * &design;
        let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
            Error::NumericalFailure("smoothing basis Gram matrix not positive definite".into())
        })?;
        Ok(Smoother { design, chol })
    }

    /// Replaces `curve` with its least-squares spline fit on the grid.
    pub(crate) fn apply(&self, curve: &mut [f64]) {
        let y = nalgebra::DVector::from_column_slice(curve);
        let coef = self.chol.solve(&(self.design.transpose() * y));
        let fitted = &self.design * coef;
        curve.copy_from_slice(fitted.as_slice());
    }
}

/// Assembles, smooths, and centers the curves for pre-drawn scores.
pub fn generate_functions(
    scores: &[Array2<f64>],
    dag: &Dag,
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<GeneratedData> {
    cfg.validate()?;
    if scores.len() != cfg.p || dag.p != cfg.p {
        return Err(Error::DimensionMismatch(format!(
            "expected {} score matrices, got {}",
            cfg.p,
            scores.len()
        )));
    }
    let n = cfg.n;
    let m = cfg.n_components;
    for (idx, sc) in scores.iter().enumerate() {
        if sc.dim() != (n, m) {
            return Err(Error::DimensionMismatch(format!(
                "score matrix {idx} has shape {:?}, expected ({n}, {m})",
                sc.dim()
            )));
        }
    }
    let grid = TimeGrid::equispaced(cfg.t_points)?;

    // Standardize child columns for assembly; roots keep their base law.
    let mut assembly: Vec<Array2<f64>> = scores.to_vec();
    if cfg.standardize_child_scores {
        for node in 1..=cfg.p {
            if dag.parents_of(node).is_empty() {
                continue;
            }
            let sc = &mut assembly[node - 1];
            for r in 0..m {
                let mean = sc.column(r).sum() / n as f64;
                let var = sc
                    .column(r)
                    .iter()
                    .map(|&x| (x - mean) * (x - mean))
                    .sum::<f64>()
                    / n as f64;
                let sd = var.sqrt();
                if sd > 0.0 {
                    sc.column_mut(r).mapv_inplace(|x| x / sd);
                }
            }
        }
    }

    // Fourier values per component on the grid.
    let mut phi = Array2::zeros((m, grid.len()));
    for q in 1..=m {
        for (s, &t) in grid.points().iter().enumerate() {
            phi[[q - 1, s]] = fourier_value(q, t)?;
        }
    }

    let smoother = Smoother::new(&grid, cfg.smoothing_basis_size, cfg.smoothing_order)?;
    let mut values = Array3::zeros((n, cfg.p, grid.len()));
    let mut curve = vec![0.0; grid.len()];
    for node in 1..=cfg.p {
        let mut rng = substream(seed, "obsnoise", &[node as u64]);
        let parents = dag.parents_of(node);
        // Per-subject Fourier coefficients.
        let mut coeff = Array2::zeros((n, m));
        if parents.is_empty() {
            coeff.assign(&assembly[node - 1]);
        } else {
            let mut g = vec![0.0; n];
            for &parent in &parents {
                let parent_scores = &assembly[parent - 1];
                for r in 0..m {
                    let vals = centered_f_column(cfg.model, parent_scores.column(r));
                    for u in 0..n {
                        g[u] += vals[u];
                    }
                }
            }
            for u in 0..n {
                for q in 0..m {
                    coeff[[u, q]] = g[u];
                }
            }
        }
        for u in 0..n {
            for s in 0..grid.len() {
                let mut acc = 0.0;
                for q in 0..m {
                    acc += coeff[[u, q]] * phi[[q, s]];
                }
                let noise: f64 = StandardNormal.sample(&mut rng);
                curve[s] = acc + cfg.noise_sd_obs * noise;
            }
            smoother.apply(&mut curve);
            for s in 0..grid.len() {
                values[[u, node - 1, s]] = curve[s];
            }
        }
    }

    let raw = FunctionalDataset::new(grid, values, false)?;
    Ok(GeneratedData {
        dataset: center_dataset(&raw),
        truth: moralize(dag),
        dag: dag.clone(),
        scores: scores.to_vec(),
    })
}

/// DAG, scores, curves, and moralized truth, all derived from `cfg.seed`.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<GeneratedData> {
    cfg.validate()?;
    let dag = match cfg.dag_edge_count {
        Some(count) => random_dag_with_count(cfg.p, count, cfg.seed)?,
        None => random_dag(cfg.p, cfg.dag_density, cfg.seed)?,
    };
    let scores = generate_scores(&dag, cfg, cfg.seed)?;
    generate_functions(&scores, &dag, cfg, cfg.seed)
}
