//! Evaluation: TP/FP rates over unordered pairs, ROC curves along the
//! penalty path, trapezoid AUC, the linear neighborhood-regression
//! baseline, and a seeded replication harness.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fdata::FunctionalDataset;
use crate::graph::{edges_from_fits, fit_afgm, AfgmConfig, DesignKind, Graph, NeighborhoodFit};
use crate::rng::substream;
use crate::simgen::{generate_scenario, ModelKind, ScenarioConfig};

/// Estimators the harness knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Spline-expanded additive neighborhood regression.
    Afgm,
    /// Same pipeline with a single centered identity function per score:
    /// group-lasso linear neighborhood regression.
    LinearBaseline,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Afgm => "afgm",
            Method::LinearBaseline => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "afgm" => Ok(Method::Afgm),
            "linear" => Ok(Method::LinearBaseline),
            other => Err(Error::InvalidConfig(format!(
                "unknown method '{other}' (expected 'afgm' or 'linear')"
            ))),
        }
    }
}

/// True-positive and false-positive rates over unordered pairs.
pub fn tp_fp(estimated: &Graph, truth: &Graph) -> Result<(f64, f64)> {
    if estimated.p != truth.p {
        return Err(Error::DimensionMismatch(format!(
            "estimated graph has p = {}, truth has p = {}",
            estimated.p, truth.p
        )));
    }
    let total = truth.p * (truth.p - 1) / 2;
    let positives = truth.edge_count();
    if positives == 0 || positives == total {
        return Err(Error::Precondition(format!(
            "truth graph with {positives} of {total} edges is degenerate for TP/FP rates"
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    for &(i, j) in estimated.edges() {
        if truth.has_edge(i, j) {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    Ok((
        tp as f64 / positives as f64,
        fp as f64 / (total - positives) as f64,
    ))
}

/// Per-penalty (FP, TP) points; the anchors (0,0) and (1,1) are implicit
/// and added during integration.
#[derive(Debug, Clone, Serialize)]
pub struct RocCurve {
    pub lambdas: Vec<f64>,
    /// (FP, TP) per lambda, same order as `lambdas`.
    pub points: Vec<(f64, f64)>,
}

/// Evaluates every graph along a path against the truth.
pub fn roc_from_path(graphs: &[Graph], lambdas: &[f64], truth: &Graph) -> Result<RocCurve> {
    if graphs.is_empty() {
        return Err(Error::Precondition("empty graph path".into()));
    }
    if graphs.len() != lambdas.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} graphs for {} lambdas",
            graphs.len(),
            lambdas.len()
        )));
    }
    let mut points = Vec::with_capacity(graphs.len());
    for graph in graphs {
        let (tp, fp) = tp_fp(graph, truth)?;
        points.push((fp, tp));
    }
    Ok(RocCurve {
        lambdas: lambdas.to_vec(),
        points,
    })
}

/// Trapezoid area under the curve, with anchors appended, points sorted by
/// FP, and ties resolved by keeping the largest TP per FP.
pub fn auc(curve: &RocCurve) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.points.clone();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (fp, tp) in pts {
        match dedup.last_mut() {
            Some(last) if last.0 == fp => last.1 = last.1.max(tp),
            _ => dedup.push((fp, tp)),
        }
    }
    let mut area = 0.0;
    for w in dedup.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    area
}

/// The AFGM pipeline with the spline expansion replaced by one centered
/// identity function per score component.
pub fn fit_linear_baseline(
    ds: &FunctionalDataset,
    cfg: &AfgmConfig,
) -> Result<Vec<NeighborhoodFit>> {
    cfg.validate()?;
    let panels = crate::graph::panels_from_dataset(ds, cfg)?;
    crate::graph::fit_neighborhoods(&panels, cfg, DesignKind::Identity)
}

/// One method's result within a replicate.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub auc: f64,
    pub curve: RocCurve,
}

/// All methods' results for one simulated replicate.
#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub outcomes: Vec<MethodOutcome>,
}

/// Per-method aggregate in the on-disk report schema.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRecord {
    pub model: String,
    pub method: String,
    pub mean_auc: f64,
    pub se_auc: f64,
    pub replicates: usize,
    pub seeds: Vec<u64>,
}

/// Aggregated benchmark over replicates.
#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub model: ModelKind,
    pub lambda_count: usize,
    pub seeds: Vec<u64>,
    pub replicates: Vec<ReplicateResult>,
}

impl BenchmarkReport {
    /// Per-replicate AUCs for one method, replicate order.
    pub fn aucs(&self, method: Method) -> Vec<f64> {
        self.replicates
            .iter()
            .flat_map(|rep| {
                rep.outcomes
                    .iter()
                    .filter(|o| o.method == method)
                    .map(|o| o.auc)
            })
            .collect()
    }

    /// Mean and standard error (sample sd / sqrt(R)) of the AUC.
    pub fn mean_se(&self, method: Method) -> Option<(f64, f64)> {
        let aucs = self.aucs(method);
        if aucs.len() < 2 {
            return None;
        }
        let r = aucs.len() as f64;
        let mean = aucs.iter().sum::<f64>() / r;
        let var = aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (r - 1.0);
        Some((mean, var.sqrt() / r.sqrt()))
    }

    /// Flat records matching the report JSON schema, method order preserved.
    pub fn records(&self) -> Vec<ReportRecord> {
        let methods: Vec<Method> = self
            .replicates
            .first()
            .map(|rep| rep.outcomes.iter().map(|o| o.method).collect())
            .unwrap_or_default();
        methods
            .into_iter()
            .filter_map(|method| {
                let (mean_auc, se_auc) = self.mean_se(method)?;
                Some(ReportRecord {
                    model: model_name(self.model).to_string(),
                    method: method.name().to_string(),
                    mean_auc,
                    se_auc,
                    replicates: self.replicates.len(),
                    seeds: self.seeds.clone(),
                })
            })
            .collect()
    }
}

pub fn model_name(model: ModelKind) -> &'static str {
    match model {
        ModelKind::I => "I",
        ModelKind::II => "II",
        ModelKind::III => "III",
    }
}

/// Runs every method on `replicates` fresh scenarios with seeds derived
/// from `master_seed`.
pub fn run_benchmark(
    scenario: &ScenarioConfig,
    methods: &[Method],
    replicates: usize,
    lambda_count: usize,
    master_seed: u64,
) -> Result<BenchmarkReport> {
    let seeds: Vec<u64> = (0..replicates)
        .map(|r| substream(master_seed, "replicate", &[r as u64]).random())
        .collect();
    run_benchmark_with_seeds(scenario, methods, &seeds, lambda_count)
}

/// Same as [`run_benchmark`] with explicit per-replicate seeds.
pub fn run_benchmark_with_seeds(
    scenario: &ScenarioConfig,
    methods: &[Method],
    seeds: &[u64],
    lambda_count: usize,
) -> Result<BenchmarkReport> {
    if seeds.len() < 2 {
        return Err(Error::Precondition(format!(
            "need at least 2 replicates, got {}",
            seeds.len()
        )));
    }
    if methods.is_empty() {
        return Err(Error::Precondition("no methods requested".into()));
    }
    if lambda_count == 0 {
        return Err(Error::InvalidConfig("lambda_count must be >= 1".into()));
    }
    scenario.validate()?;

    let replicates: Vec<ReplicateResult> = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| run_replicate(scenario, methods, r, seed, lambda_count))
        .collect::<Result<_>>()?;

    Ok(BenchmarkReport {
        model: scenario.model,
        lambda_count,
        seeds: seeds.to_vec(),
        replicates,
    })
}

fn run_replicate(
    scenario: &ScenarioConfig,
    methods: &[Method],
    replicate: usize,
    seed: u64,
    lambda_count: usize,
) -> Result<ReplicateResult> {
    let cfg_r = ScenarioConfig {
        seed,
        ..scenario.clone()
    };
    let data = generate_scenario(&cfg_r)?;
    let fit_cfg = AfgmConfig {
        lambda: crate::graph::LambdaGrid {
            count: lambda_count,
            ..Default::default()
        },
        seed,
        ..AfgmConfig::default()
    };
    let mut outcomes = Vec::with_capacity(methods.len());
    for &method in methods {
        let fits = match method {
            Method::Afgm => fit_afgm(&data.dataset, &fit_cfg)?,
            Method::LinearBaseline => fit_linear_baseline(&data.dataset, &fit_cfg)?,
        };
        let graphs: Vec<Graph> = (0..lambda_count)
            .map(|l| edges_from_fits(&fits, l))
            .collect::<Result<_>>()?;
        let curve = roc_from_path(&graphs, &fits[0].lambdas, &data.truth)?;
        let area = auc(&curve);
        outcomes.push(MethodOutcome {
            method,
            auc: area,
            curve,
        });
    }
    Ok(ReplicateResult {
        replicate,
        seed,
        outcomes,
    })
}
