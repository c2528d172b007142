//! Sparse linear causal model over step features: fits f_t = W f_{t-1} + b
//! with an l1 penalty on W by cyclic coordinate descent, thresholds the
//! weights into a signed graph, and estimates per-edge uncertainty from
//! ensembles trained on episode subsets.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::features::FeatureVector;
use crate::error::{LabError, Result};

/// One recorded step: the extracted features, the action taken at this step
/// (none on the terminal observation) and the reward credited to arriving
/// here. For training rollouts the reward field holds the training signal;
/// the environment reward is carried inside the feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub features: FeatureVector,
    pub action: Option<usize>,
    pub reward: f64,
}

/// One rollout, tagged with the identifier of the policy that generated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<Step>,
    pub policy_tag: String,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Consecutive (previous, next) feature pairs.
    pub fn transitions(&self) -> impl Iterator<Item = (&FeatureVector, &FeatureVector)> {
        self.steps.windows(2).map(|w| (&w[0].features, &w[1].features))
    }
}

/// Bounded FIFO of episodes; eviction is oldest-first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryBuffer {
    episodes: VecDeque<Episode>,
    capacity: usize,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { episodes: VecDeque::new(), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn push(&mut self, episode: Episode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn extend(&mut self, episodes: impl IntoIterator<Item = Episode>) {
        for e in episodes {
            self.push(e);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    pub fn episodes(&self) -> Vec<&Episode> {
        self.episodes.iter().collect()
    }

    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }
}

/// Coordinate-descent stopping rule: a sweep ends the fit when the largest
/// coordinate change drops below `tolerance`, with a hard cap on sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    pub tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_sweeps: 10_000, tolerance: 1e-8 }
    }
}

/// Linear model f_t = W f_{t-1} + b. Row i of `weights` holds the
/// coefficients of every candidate parent for feature i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCausalModel {
    pub feature_names: Vec<String>,
    /// weights[i][j] = coefficient of parent j in the predictor of feature i.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub lambda: f64,
}

impl LinearCausalModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            feature_names: (0..dim).map(|i| format!("f{i}")).collect(),
            weights: vec![vec![0.0; dim]; dim],
            bias: vec![0.0; dim],
            lambda: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn with_feature_names(mut self, names: &[String]) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(LabError::Dimension { expected: self.dim(), got: names.len() });
        }
        self.feature_names = names.to_vec();
        Ok(self)
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w.abs()).sum()
    }
}

/// W f_prev + b.
pub fn predict(model: &LinearCausalModel, f_prev: &FeatureVector) -> Result<FeatureVector> {
    if f_prev.len() != model.dim() {
        return Err(LabError::Dimension { expected: model.dim(), got: f_prev.len() });
    }
    let values = model
        .weights
        .iter()
        .zip(&model.bias)
        .map(|(row, b)| b + row.iter().zip(&f_prev.values).map(|(w, x)| w * x).sum::<f64>())
        .collect();
    Ok(FeatureVector::new(values))
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Sufficient statistics of the regression: per-pair sums that fully
/// determine the objective, so the coordinate descent never revisits the data.
struct GramStats {
    dim: usize,
    n: f64,
    sx: Vec<f64>,
    sy: Vec<f64>,
    /// gram[j][k] = sum over pairs of x_j x_k.
    gram: Vec<Vec<f64>>,
    /// cross[i][j] = sum over pairs of y_i x_j.
    cross: Vec<Vec<f64>>,
}

impl GramStats {
    fn accumulate(episodes: &[&Episode]) -> Result<Self> {
        let dim = episodes
            .iter()
            .flat_map(|e| e.steps.first())
            .map(|s| s.features.len())
            .next()
            .ok_or_else(|| LabError::Empty("no steps in episodes".into()))?;
        let mut stats = GramStats {
            dim,
            n: 0.0,
            sx: vec![0.0; dim],
            sy: vec![0.0; dim],
            gram: vec![vec![0.0; dim]; dim],
            cross: vec![vec![0.0; dim]; dim],
        };
        for episode in episodes {
            for (prev, next) in episode.transitions() {
                if prev.len() != dim || next.len() != dim {
                    return Err(LabError::Dimension { expected: dim, got: prev.len().min(next.len()) });
                }
                stats.n += 1.0;
                for j in 0..dim {
                    let xj = prev.values[j];
                    stats.sx[j] += xj;
                    stats.sy[j] += next.values[j];
                    for k in j..dim {
                        stats.gram[j][k] += xj * prev.values[k];
                    }
                    for i in 0..dim {
                        stats.cross[i][j] += next.values[i] * xj;
                    }
                }
            }
        }
        if stats.n < 1.0 {
            return Err(LabError::Empty("need at least one transition to fit".into()));
        }
        for j in 0..dim {
            for k in 0..j {
                stats.gram[j][k] = stats.gram[k][j];
            }
        }
        Ok(stats)
    }

    /// Centered Gram entry: sum of (x_j - mean_j)(x_k - mean_k).
    fn centered_gram(&self, j: usize, k: usize) -> f64 {
        self.gram[j][k] - self.sx[j] * self.sx[k] / self.n
    }

    /// Centered cross term for target i against predictor j.
    fn centered_cross(&self, i: usize, j: usize) -> f64 {
        self.cross[i][j] - self.sy[i] * self.sx[j] / self.n
    }
}

fn fit_from_stats(stats: &GramStats, lambda: f64, solver: &SolverConfig) -> LinearCausalModel {
    let dim = stats.dim;
    let mut cg = vec![vec![0.0; dim]; dim];
    for j in 0..dim {
        for k in 0..dim {
            cg[j][k] = stats.centered_gram(j, k);
        }
    }
    let mut model = LinearCausalModel::zeros(dim);
    model.lambda = lambda;
    for i in 0..dim {
        let cc: Vec<f64> = (0..dim).map(|j| stats.centered_cross(i, j)).collect();
        let w = &mut model.weights[i];
        for _ in 0..solver.max_sweeps {
            let mut max_delta = 0.0f64;
            for j in 0..dim {
                if cg[j][j] <= 1e-12 {
                    continue;
                }
                let mut rho = cc[j];
                for k in 0..dim {
                    if k != j {
                        rho -= cg[j][k] * w[k];
                    }
                }
                let new = soft_threshold(rho, lambda / 2.0) / cg[j][j];
                max_delta = max_delta.max((new - w[j]).abs());
                w[j] = new;
            }
            if max_delta < solver.tolerance {
                break;
            }
        }
        let xw: f64 = (0..dim).map(|j| stats.sx[j] * w[j]).sum();
        model.bias[i] = (stats.sy[i] - xw) / stats.n;
    }
    model
}

/// Fits the l1-penalized regression of each feature on the previous step's
/// features over every consecutive pair in `episodes`. The objective is the
/// sum over pairs of squared residuals plus `lambda` times the l1 norm of W;
/// the bias is unpenalized. Deterministic given the data and lambda.
pub fn fit_on_episodes(
    episodes: &[&Episode],
    lambda: f64,
    solver: &SolverConfig,
) -> Result<LinearCausalModel> {
    if lambda < 0.0 {
        return Err(LabError::Config(format!("lambda {lambda} must be non-negative")));
    }
    let stats = GramStats::accumulate(episodes)?;
    Ok(fit_from_stats(&stats, lambda, solver))
}

/// Fits on the whole buffer. Requires at least one transition.
pub fn fit_causal_model(
    buffer: &HistoryBuffer,
    lambda: f64,
    solver: &SolverConfig,
) -> Result<LinearCausalModel> {
    if buffer.is_empty() {
        return Err(LabError::Empty("history buffer is empty".into()));
    }
    fit_on_episodes(&buffer.episodes(), lambda, solver)
}

/// Mean over episodes of the summed squared one-step prediction errors
/// (the finite-sample loss; the sum runs over consecutive pairs).
pub fn evaluate_loss(model: &LinearCausalModel, episodes: &[Episode]) -> Result<f64> {
    if episodes.is_empty() {
        return Err(LabError::Empty("no episodes to evaluate".into()));
    }
    let mut total = 0.0;
    for episode in episodes {
        for (prev, next) in episode.transitions() {
            let pred = predict(model, prev)?;
            for (y, p) in next.values.iter().zip(&pred.values) {
                let d = y - p;
                total += d * d;
            }
        }
    }
    Ok(total / episodes.len() as f64)
}

/// Signed adjacency obtained by magnitude-thresholding a model's weights.
/// Row i lists the parents of feature i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub names: Vec<String>,
    pub adjacency: Vec<Vec<bool>>,
    pub sign: Vec<Vec<i8>>,
    pub weights: Vec<Vec<f64>>,
    pub tau: f64,
}

impl CausalGraph {
    pub fn empty(names: &[String], tau: f64) -> Self {
        let dim = names.len();
        Self {
            names: names.to_vec(),
            adjacency: vec![vec![false; dim]; dim],
            sign: vec![vec![0; dim]; dim],
            weights: vec![vec![0.0; dim]; dim],
            tau,
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Inserts the edge parent -> child with the given weight.
    pub fn set_edge(&mut self, child: usize, parent: usize, weight: f64) {
        self.weights[child][parent] = weight;
        self.adjacency[child][parent] = weight.abs() > self.tau;
        self.sign[child][parent] = if self.adjacency[child][parent] {
            if weight > 0.0 {
                1
            } else {
                -1
            }
        } else {
            0
        };
    }

    pub fn has_edge(&self, child: usize, parent: usize) -> bool {
        self.adjacency[child][parent]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().flatten().filter(|&&b| b).count()
    }

    /// Present edges as (child, parent, sign) triples in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, i8)> {
        let mut out = Vec::new();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                if self.adjacency[i][j] {
                    out.push((i, j, self.sign[i][j]));
                }
            }
        }
        out
    }
}

/// Thresholds |W| > tau into a signed graph.
pub fn threshold_graph(model: &LinearCausalModel, tau: f64) -> Result<CausalGraph> {
    if !(tau >= 0.0) {
        return Err(LabError::Config(format!("tau {tau} must be non-negative")));
    }
    let mut graph = CausalGraph::empty(&model.feature_names, tau);
    for i in 0..model.dim() {
        for j in 0..model.dim() {
            graph.set_edge(i, j, model.weights[i][j]);
        }
    }
    Ok(graph)
}

fn cosine_over(mask_a: &[bool], mask_b: &[bool]) -> f64 {
    let dot = mask_a.iter().zip(mask_b).filter(|(a, b)| **a && **b).count() as f64;
    let na = mask_a.iter().filter(|&&a| a).count() as f64;
    let nb = mask_b.iter().filter(|&&b| b).count() as f64;
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Cosine similarity between the flattened binary adjacency matrices.
/// Returns 0 when either graph has no edges.
pub fn cosine_similarity(a: &CausalGraph, b: &CausalGraph) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(LabError::Dimension { expected: a.dim(), got: b.dim() });
    }
    let fa: Vec<bool> = a.adjacency.iter().flatten().copied().collect();
    let fb: Vec<bool> = b.adjacency.iter().flatten().copied().collect();
    Ok(cosine_over(&fa, &fb))
}

/// Cosine similarity restricted to the given target rows of the adjacency.
pub fn cosine_similarity_rows(a: &CausalGraph, b: &CausalGraph, rows: &[usize]) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(LabError::Dimension { expected: a.dim(), got: b.dim() });
    }
    let mut fa = Vec::new();
    let mut fb = Vec::new();
    for &r in rows {
        if r >= a.dim() {
            return Err(LabError::Usage(format!("row {r} out of range for dim {}", a.dim())));
        }
        fa.extend(a.adjacency[r].iter().copied());
        fb.extend(b.adjacency[r].iter().copied());
    }
    Ok(cosine_over(&fa, &fb))
}

/// Per-edge sample variance of the weight matrix across an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeUncertainty {
    pub variance: Vec<Vec<f64>>,
    pub ensemble_size: usize,
}

impl EdgeUncertainty {
    pub fn dim(&self) -> usize {
        self.variance.len()
    }
}

/// Fits `s` models, each on an independent uniform subsample (without
/// replacement) of the buffer's episodes. Sampling is per-episode so the
/// temporal structure inside episodes is preserved. Deterministic given seed.
pub fn ensemble_fit(
    buffer: &HistoryBuffer,
    s: usize,
    subset_fraction: f64,
    lambda: f64,
    solver: &SolverConfig,
    seed: u64,
) -> Result<Vec<LinearCausalModel>> {
    if s < 2 {
        return Err(LabError::Config(format!("ensemble size {s} must be at least 2")));
    }
    if !(subset_fraction > 0.0 && subset_fraction <= 1.0) {
        return Err(LabError::Config(format!("subset fraction {subset_fraction} outside (0, 1]")));
    }
    if buffer.is_empty() {
        return Err(LabError::Empty("history buffer is empty".into()));
    }
    let all = buffer.episodes();
    let take = ((all.len() as f64 * subset_fraction).round() as usize).clamp(1, all.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut models = Vec::with_capacity(s);
    for _ in 0..s {
        let mut order: Vec<usize> = (0..all.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let subset: Vec<&Episode> = order[..take].iter().map(|&i| all[i]).collect();
        models.push(fit_on_episodes(&subset, lambda, solver)?);
    }
    Ok(models)
}

/// Entrywise sample variance (with Bessel correction) of W across models.
pub fn edge_uncertainty(models: &[LinearCausalModel]) -> Result<EdgeUncertainty> {
    if models.len() < 2 {
        return Err(LabError::Empty("need at least 2 models for edge uncertainty".into()));
    }
    let dim = models[0].dim();
    for m in models {
        if m.dim() != dim {
            return Err(LabError::Dimension { expected: dim, got: m.dim() });
        }
    }
    let s = models.len() as f64;
    let mut variance = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            let mean: f64 = models.iter().map(|m| m.weights[i][j]).sum::<f64>() / s;
            let ss: f64 = models.iter().map(|m| (m.weights[i][j] - mean).powi(2)).sum();
            variance[i][j] = ss / (s - 1.0);
        }
    }
    Ok(EdgeUncertainty { variance, ensemble_size: models.len() })
}

/// On-disk model format: row-major flat weight matrix plus the threshold the
/// graph was cut at.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub feature_names: Vec<String>,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub lambda: f64,
    pub tau: f64,
}

impl ModelFile {
    pub fn from_model(model: &LinearCausalModel, tau: f64) -> Self {
        Self {
            feature_names: model.feature_names.clone(),
            w: model.weights.iter().flatten().copied().collect(),
            b: model.bias.clone(),
            lambda: model.lambda,
            tau,
        }
    }

    pub fn into_model(self) -> Result<(LinearCausalModel, f64)> {
        let dim = self.feature_names.len();
        if self.w.len() != dim * dim || self.b.len() != dim {
            return Err(LabError::Parse {
                path: "<model>".into(),
                detail: format!("weight matrix size {} does not match {dim} features", self.w.len()),
            });
        }
        let weights = self.w.chunks(dim).map(|c| c.to_vec()).collect();
        Ok((
            LinearCausalModel {
                feature_names: self.feature_names,
                weights,
                bias: self.b,
                lambda: self.lambda,
            },
            self.tau,
        ))
    }
}

pub fn save_model(model: &LinearCausalModel, tau: f64, path: &Path) -> Result<()> {
    let file = ModelFile::from_model(model, tau);
    crate::harness::persist::write_atomic(path, serde_json::to_string_pretty(&file)?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<(LinearCausalModel, f64)> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| LabError::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    file.into_model()
}
