use std::fs::File;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ActiveConfig, DatasetConfig, ExperimentConfig, Method};
use crate::active::{grounded_score, ActiveState, Strategy};
use crate::error::{Error, Result};
use crate::graph::io::{load_features, read_ground_truth};
use crate::graph::{
    build_knn_graph, gen_barbell, gen_gaussian_blobs, gen_gaussian_ring, FeatureMatrix, Graph, LabelSet,
};
use crate::kl::kl_refine;
use crate::linalg::EigenOptions;
use crate::problem::{assemble, decode, global_certificate, laplace_learning, Certificate, Prediction};
use crate::procrustes::{approx_solve, eigenmap_embed, le_ssl_baseline, problem_eigenmap};
use crate::ssm::{ssm_solve, TraceRecord};

const LAPLACE_TOL: f64 = 1e-10;

/// A graph with ground truth, plus the points it was built from if any.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub truth: Vec<usize>,
    pub num_classes: usize,
    pub features: Option<FeatureMatrix>,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let (graph, truth, features) = match &cfg.dataset {
        DatasetConfig::Barbell { clique_size } => {
            let g = gen_barbell(*clique_size)?;
            let truth = (0..2 * clique_size).map(|v| usize::from(v >= *clique_size)).collect();
            (g, truth, None)
        }
        DatasetConfig::GaussianRing { n_per_cluster, sigma, seed } => {
            let pc = gen_gaussian_ring(*n_per_cluster, *sigma, seed.unwrap_or(cfg.seed))?;
            (build_knn_graph(&pc.features, cfg.knn_k)?, pc.labels, Some(pc.features))
        }
        DatasetConfig::GaussianBlobs { centers, classes, n_per_cluster, sigma, seed } => {
            let pc = gen_gaussian_blobs(centers, classes, *n_per_cluster, *sigma, seed.unwrap_or(cfg.seed))?;
            (build_knn_graph(&pc.features, cfg.knn_k)?, pc.labels, Some(pc.features))
        }
        DatasetConfig::External { features, labels } => {
            let f = load_features(features)?;
            let truth = read_ground_truth(File::open(labels)?, f.rows())?;
            (build_knn_graph(&f, cfg.knn_k)?, truth, Some(f))
        }
    };
    let num_classes = truth.iter().max().map_or(0, |&c| c + 1);
    if num_classes < 2 {
        return Err(Error::Config("dataset needs at least two classes".into()));
    }
    Ok(Dataset { graph, truth, num_classes, features })
}

/// Independent stream per trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// `per_class` vertices of each class, drawn without replacement.
pub fn sample_labels(truth: &[usize], k: usize, per_class: usize, rng: &mut ChaCha8Rng) -> Result<LabelSet> {
    let mut entries = Vec::with_capacity(k * per_class);
    for c in 0..k {
        let members: Vec<usize> = (0..truth.len()).filter(|&v| truth[v] == c).collect();
        if members.len() <= per_class {
            return Err(Error::Config(format!(
                "class {c} has {} vertices, cannot label {per_class} and keep one unlabeled",
                members.len()
            )));
        }
        let mut picked: Vec<usize> = sample(rng, members.len(), per_class).into_iter().map(|i| members[i]).collect();
        picked.sort_unstable();
        entries.extend(picked.into_iter().map(|v| (v, c)));
    }
    LabelSet::new(entries, k)
}

/// `count` vertices drawn uniformly, whatever their class.
pub fn sample_uniform_labels(truth: &[usize], k: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<LabelSet> {
    if count >= truth.len() {
        return Err(Error::Config(format!("cannot label {count} of {} vertices", truth.len())));
    }
    let mut picked: Vec<usize> = sample(rng, truth.len(), count).into_vec();
    picked.sort_unstable();
    LabelSet::new(picked.into_iter().map(|v| (v, truth[v])).collect(), k)
}

#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub prediction: Prediction,
    pub foc: Option<f64>,
    pub iterations: usize,
    pub trace: Option<Vec<TraceRecord>>,
}

pub fn run_method(
    g: &Graph,
    labels: &LabelSet,
    method: Method,
    cfg: &ExperimentConfig,
    kl_seed: u64,
) -> Result<MethodOutput> {
    let k = labels.num_classes();
    let plain = |prediction| MethodOutput { prediction, foc: None, iterations: 0, trace: None };
    match method {
        Method::Laplace => laplace_learning(g, labels, LAPLACE_TOL).map(plain),
        Method::Procrustes => {
            let prob = assemble(g, labels)?;
            Ok(plain(approx_solve(&prob, &EigenOptions::default())?.prediction))
        }
        Method::LeSsl => {
            let e = eigenmap_embed(g, k, &EigenOptions::default())?;
            le_ssl_baseline(&e.vectors, labels).map(plain)
        }
        Method::Ssm | Method::SsmKl => {
            let prob = assemble(g, labels)?;
            let res = ssm_solve(&prob, None, &cfg.solver)?;
            debug_assert!(res.x.feasibility_error() < 1e-8);
            debug_assert!(res.state.obj_history.windows(2).all(|w| w[1] <= w[0]));
            let mut prediction = decode(&prob, &res.x_scaled);
            if method == Method::SsmKl {
                let before = g.cut_cost(&prediction.labels);
                prediction = kl_refine(g, &prediction, labels, cfg.kl_sweeps, kl_seed)?;
                debug_assert!(g.cut_cost(&prediction.labels) <= before + 1e-9);
            }
            Ok(MethodOutput { prediction, foc: Some(res.foc()), iterations: res.state.iter, trace: Some(res.trace) })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    /// Over vertices that were not labeled.
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub foc_final: Option<f64>,
    pub iterations: usize,
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_log: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub num_classes: usize,
    pub n_vertices: usize,
    pub trials: usize,
    pub seed: u64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub results: Vec<TrialResult>,
}

/// Mean and sample standard deviation by the two-pass formula.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn unlabeled_mask(n: usize, labels: &LabelSet) -> Vec<bool> {
    labels.mask(n).into_iter().map(|b| !b).collect()
}

fn run_trial(ds: &Dataset, cfg: &ExperimentConfig, method: Method, trial: usize) -> Result<TrialResult> {
    let start = Instant::now();
    let mut rng = trial_rng(cfg.seed, trial);
    let labels = sample_labels(&ds.truth, ds.num_classes, cfg.labels_per_class, &mut rng)?;
    let out = run_method(&ds.graph, &labels, method, cfg, trial_kl_seed(cfg.seed, trial))?;
    let mask = unlabeled_mask(ds.graph.n_vertices(), &labels);
    Ok(TrialResult {
        trial,
        accuracy: out.prediction.accuracy(&ds.truth, &mask),
        per_class: out.prediction.per_class_accuracy(&ds.truth, &mask, ds.num_classes),
        foc_final: out.foc,
        iterations: out.iterations,
        wall_time: if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 },
        query_log: None,
        trace: out.trace,
    })
}

fn trial_kl_seed(seed: u64, trial: usize) -> u64 {
    seed ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Runs every trial of `cfg.method` in parallel; results are in trial order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    run_experiment_on(&ds, cfg, cfg.method)
}

pub fn run_experiment_on(ds: &Dataset, cfg: &ExperimentConfig, method: Method) -> Result<Summary> {
    let results: Vec<TrialResult> =
        (0..cfg.trials).into_par_iter().map(|t| run_trial(ds, cfg, method, t)).collect::<Result<_>>()?;
    let accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    Ok(Summary {
        method,
        num_classes: ds.num_classes,
        n_vertices: ds.graph.n_vertices(),
        trials: cfg.trials,
        seed: cfg.seed,
        mean_accuracy,
        std_accuracy,
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub queries: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveTrial {
    pub trial: usize,
    /// Accuracy after each checkpoint in `ActiveSummary::curve`.
    pub accuracies: Vec<f64>,
    pub query_log: Vec<usize>,
    /// Classes of the queried vertices.
    pub query_classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSummary {
    pub strategy: Strategy,
    pub method: Method,
    pub budget: usize,
    pub batch: usize,
    pub curve: Vec<CurvePoint>,
    pub trials: Vec<ActiveTrial>,
}

fn initial_labels(ds: &Dataset, cfg: &ExperimentConfig, a: &ActiveConfig, rng: &mut ChaCha8Rng) -> Result<LabelSet> {
    match a.initial_labels {
        Some(c) => sample_uniform_labels(&ds.truth, ds.num_classes, c, rng),
        None => sample_labels(&ds.truth, ds.num_classes, cfg.labels_per_class, rng),
    }
}

/// Accuracy of the configured method over the vertices outside `labels`.
fn accuracy_with(ds: &Dataset, labels: &LabelSet, cfg: &ExperimentConfig, seed: u64) -> Result<(f64, Prediction)> {
    let out = run_method(&ds.graph, labels, cfg.method, cfg, seed)?;
    let mask = unlabeled_mask(ds.graph.n_vertices(), labels);
    Ok((out.prediction.accuracy(&ds.truth, &mask), out.prediction))
}

fn run_active_trial(ds: &Dataset, cfg: &ExperimentConfig, a: &ActiveConfig, trial: usize) -> Result<ActiveTrial> {
    let n = ds.graph.n_vertices();
    let mut rng = trial_rng(cfg.seed, trial);
    let labels = initial_labels(ds, cfg, a, &mut rng)?;
    let available = n - labels.len();
    if a.budget > available {
        return Err(Error::BudgetExceedsPool { requested: a.budget, available });
    }
    let mut state = ActiveState::new(labels);
    state.lambda = a.lambda0;
    state.epsilon = a.epsilon;
    state.ell = a.ell;
    let kl_seed = trial_kl_seed(cfg.seed, trial);
    let (acc, mut pred) = accuracy_with(ds, &state.labeled, cfg, kl_seed)?;
    let mut accuracies = vec![acc];
    let opts = EigenOptions { seed: cfg.seed, guard: 1, ..Default::default() };
    let mut done = 0;
    while done < a.budget {
        let batch = a.batch.min(a.budget - done);
        let scores = state.scores(&ds.graph, a.strategy, Some(&pred), &opts, &mut rng)?;
        let picked = state.query(&scores, batch)?;
        state.reveal(&picked, &ds.truth)?;
        state.advance_lambda();
        done += batch;
        let (acc, p) = accuracy_with(ds, &state.labeled, cfg, kl_seed)?;
        accuracies.push(acc);
        pred = p;
    }
    let query_classes = state.query_log.iter().map(|&v| ds.truth[v]).collect();
    Ok(ActiveTrial { trial, accuracies, query_log: state.query_log, query_classes })
}

/// Accuracy-versus-queries curve for the configured strategy.
pub fn run_active(cfg: &ExperimentConfig) -> Result<ActiveSummary> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    run_active_on(&ds, cfg)
}

pub fn run_active_on(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ActiveSummary> {
    let a = cfg.active.as_ref().ok_or_else(|| Error::Config("missing [active] section".into()))?;
    let trials: Vec<ActiveTrial> =
        (0..cfg.trials).into_par_iter().map(|t| run_active_trial(ds, cfg, a, t)).collect::<Result<_>>()?;
    let points = trials.first().map_or(0, |t| t.accuracies.len());
    let mut curve = Vec::with_capacity(points);
    for i in 0..points {
        let xs: Vec<f64> = trials.iter().map(|t| t.accuracies[i]).collect();
        let (mean, std) = mean_std(&xs);
        curve.push(CurvePoint { queries: (i * a.batch).min(a.budget), mean, std });
    }
    Ok(ActiveSummary { strategy: a.strategy, method: cfg.method, budget: a.budget, batch: a.batch, curve, trials })
}

/// `(vertex, x, y, score)` rows of the spectral score for the first trial's
/// initial labels; labeled vertices score 0. Needs 2-D features.
pub fn score_heatmap(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<(usize, f64, f64, f64)>> {
    let f = ds
        .features
        .as_ref()
        .filter(|f| f.dim() == 2)
        .ok_or_else(|| Error::Config("heatmap needs 2-D features".into()))?;
    let a = cfg.active.as_ref().ok_or_else(|| Error::Config("missing [active] section".into()))?;
    let mut rng = trial_rng(cfg.seed, 0);
    let labels = initial_labels(ds, cfg, a, &mut rng)?;
    let labeled: Vec<usize> = labels.vertices().collect();
    let gs = grounded_score(&ds.graph, &labeled, a.ell, &EigenOptions { seed: cfg.seed, ..Default::default() })?;
    let mut score = vec![0.0; ds.graph.n_vertices()];
    for (&v, &s) in gs.vertices.iter().zip(&gs.scores) {
        score[v] = s;
    }
    Ok((0..f.rows()).map(|v| (v, f.row(v)[0], f.row(v)[1], score[v])).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub certificate: Certificate,
}

/// Solves the first trial's instance with SSM and tests global optimality.
pub fn certify(cfg: &ExperimentConfig) -> Result<CertifyReport> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let mut rng = trial_rng(cfg.seed, 0);
    let labels = sample_labels(&ds.truth, ds.num_classes, cfg.labels_per_class, &mut rng)?;
    let prob = assemble(&ds.graph, &labels)?;
    let res = ssm_solve(&prob, None, &cfg.solver)?;
    let eigen = problem_eigenmap(&prob, ds.num_classes, &EigenOptions::default())?;
    let certificate = global_certificate(&prob, res.x.matrix(), &eigen, cfg.solver.foc_tol, 1e-9)?;
    Ok(CertifyReport { objective: res.objective(), iterations: res.state.iter, converged: res.converged, certificate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub wall_time: f64,
}

/// Every method on the same dataset and label draws.
pub fn bench(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    Method::ALL
        .into_iter()
        .map(|m| {
            let start = Instant::now();
            let s = run_experiment_on(&ds, cfg, m)?;
            let wall_time = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
            Ok(BenchRow { method: m, mean_accuracy: s.mean_accuracy, std_accuracy: s.std_accuracy, wall_time })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratified_sampling_is_deterministic_and_balanced() {
        let truth: Vec<usize> = (0..40).map(|v| v % 4).collect();
        let a = sample_labels(&truth, 4, 3, &mut trial_rng(9, 2)).unwrap();
        let b = sample_labels(&truth, 4, 3, &mut trial_rng(9, 2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![3; 4]);
        let c = sample_labels(&truth, 4, 3, &mut trial_rng(9, 3)).unwrap();
        assert_ne!(a, c);
        for &(v, cl) in a.entries() {
            assert_eq!(truth[v], cl);
        }
    }

    #[test]
    fn mean_std_two_pass() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn barbell_ssm_kl_is_perfect() {
        let mut cfg = ExperimentConfig::new(DatasetConfig::Barbell { clique_size: 5 });
        cfg.trials = 20;
        let s = run_experiment(&cfg).unwrap();
        assert_eq!(s.mean_accuracy, 1.0);
        assert_eq!(s.std_accuracy, 0.0);
    }

    #[test]
    fn budget_zero_curve_matches_experiment() {
        let mut cfg = ExperimentConfig::new(DatasetConfig::Barbell { clique_size: 5 });
        cfg.trials = 3;
        cfg.method = Method::Laplace;
        cfg.active = Some(ActiveConfig {
            strategy: Strategy::Spectral,
            budget: 0,
            batch: 1,
            initial_labels: None,
            lambda0: 0.0,
            epsilon: 1e-4,
            ell: 3,
        });
        let act = run_active(&cfg).unwrap();
        let exp = run_experiment(&cfg).unwrap();
        assert_eq!(act.curve.len(), 1);
        assert_eq!(act.curve[0].mean, exp.mean_accuracy);
        cfg.active.as_mut().unwrap().budget = 3;
        let act = run_active(&cfg).unwrap();
        assert!(act.trials.iter().all(|t| t.query_log.len() == 3));
        cfg.active.as_mut().unwrap().budget = 9;
        assert!(matches!(run_active(&cfg), Err(Error::BudgetExceedsPool { .. })));
    }
}
