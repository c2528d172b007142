//! Intervention reward design: the edge, node and loss reward variants built
//! from the current causal model, and the uncertainty-driven selection of
//! which edge or node to target.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::causal::{predict, CausalGraph, EdgeUncertainty, Episode, LinearCausalModel};
use crate::envs::features::{FeatureSpec, FeatureVector};
use crate::error::{LabError, Result};

/// Per-feature mean and population variance over a set of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub episode_count: usize,
}

/// Mean and population variance of every feature over all steps of all
/// episodes.
pub fn compute_feature_stats(episodes: &[Episode]) -> Result<FeatureStats> {
    let dim = episodes
        .iter()
        .flat_map(|e| e.steps.first())
        .map(|s| s.features.len())
        .next()
        .ok_or_else(|| LabError::Empty("no steps to compute feature stats from".into()))?;
    let mut n = 0.0;
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for e in episodes {
        for s in &e.steps {
            if s.features.len() != dim {
                return Err(LabError::Dimension { expected: dim, got: s.features.len() });
            }
            n += 1.0;
            for (k, v) in s.features.values.iter().enumerate() {
                sum[k] += v;
                sum_sq[k] += v * v;
            }
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let variance = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| (sq / n - m * m).max(0.0))
        .collect();
    Ok(FeatureStats { mean, variance, episode_count: episodes.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRewardMode {
    /// -|f_i - x| - d, where d penalizes drift of the feature statistics
    /// away from the baseline.
    StatPenalty,
    /// -|f_i - x| + gamma * (environment reward of the step).
    DiscountedOld,
}

/// The three intervention reward designs. A `Loss` reward holds an immutable
/// snapshot of the model, so refitting the live model never changes the
/// reward an agent is being trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InterventionReward {
    /// Drive the suspected parent i up and the child j down (sign +1), or
    /// both up for a negative-coefficient edge (sign -1).
    Edge { i: usize, j: usize, sign: i8 },
    /// Drive feature i to the target value x.
    Node {
        i: usize,
        x: f64,
        mode: NodeRewardMode,
        gamma: f64,
        baseline_stats: Option<FeatureStats>,
    },
    /// Reward the one-step prediction error of a frozen model snapshot.
    Loss { snapshot: LinearCausalModel },
}

impl InterventionReward {
    pub fn edge(i: usize, j: usize, sign: i8) -> Result<Self> {
        if i == j {
            return Err(LabError::Config("edge intervention requires i != j".into()));
        }
        Ok(InterventionReward::Edge { i, j, sign })
    }

    /// Short tag for logs.
    pub fn kind(&self) -> &'static str {
        match self {
            InterventionReward::Edge { .. } => "edge",
            InterventionReward::Node { .. } => "node",
            InterventionReward::Loss { .. } => "loss",
        }
    }
}

/// Edge intervention reward: f_i - f_j for a positive-coefficient edge
/// (pushing toward do(f_i = max f, f_j = min f)), f_i + f_j for a negative
/// one.
pub fn edge_reward(i: usize, j: usize, sign: i8, f_t: &FeatureVector) -> Result<f64> {
    if i >= f_t.len() || j >= f_t.len() {
        return Err(LabError::Dimension { expected: f_t.len(), got: i.max(j) + 1 });
    }
    Ok(if sign >= 0 { f_t[i] - f_t[j] } else { f_t[i] + f_t[j] })
}

/// Node intervention reward; see [`NodeRewardMode`]. `env_reward_old` is the
/// environment reward of the step, `current_stats` the running statistics of
/// the policy being trained.
#[allow(clippy::too_many_arguments)]
pub fn node_reward(
    i: usize,
    x: f64,
    mode: NodeRewardMode,
    gamma: f64,
    baseline_stats: Option<&FeatureStats>,
    f_t: &FeatureVector,
    env_reward_old: f64,
    current_stats: Option<&FeatureStats>,
) -> Result<f64> {
    if i >= f_t.len() {
        return Err(LabError::Dimension { expected: f_t.len(), got: i + 1 });
    }
    let closeness = -(f_t[i] - x).abs();
    match mode {
        NodeRewardMode::DiscountedOld => Ok(closeness + gamma * env_reward_old),
        NodeRewardMode::StatPenalty => {
            let baseline = baseline_stats.ok_or_else(|| {
                LabError::Config("StatPenalty node reward requires baseline stats".into())
            })?;
            let d = match current_stats {
                Some(cur) => {
                    if cur.mean.len() != baseline.mean.len() {
                        return Err(LabError::Dimension {
                            expected: baseline.mean.len(),
                            got: cur.mean.len(),
                        });
                    }
                    let mut d = 0.0;
                    for k in 0..cur.mean.len() {
                        d += (cur.mean[k] - baseline.mean[k]).abs()
                            + (cur.variance[k] - baseline.variance[k]).abs();
                    }
                    d
                }
                None => 0.0,
            };
            Ok(closeness - d)
        }
    }
}

/// Loss intervention reward: squared one-step prediction error of the frozen
/// snapshot on the transition (f_prev -> f_t). This equals the per-step
/// summand of the model loss.
pub fn loss_reward(snapshot: &LinearCausalModel, f_prev: &FeatureVector, f_t: &FeatureVector) -> Result<f64> {
    if f_t.len() != snapshot.dim() {
        return Err(LabError::Dimension { expected: snapshot.dim(), got: f_t.len() });
    }
    let pred = predict(snapshot, f_prev)?;
    Ok(f_t
        .values
        .iter()
        .zip(&pred.values)
        .map(|(y, p)| (y - p) * (y - p))
        .sum())
}

/// Evaluates any intervention reward on one recorded transition.
pub fn evaluate_reward(
    reward: &InterventionReward,
    f_prev: &FeatureVector,
    f_t: &FeatureVector,
    env_reward: f64,
    current_stats: Option<&FeatureStats>,
) -> Result<f64> {
    match reward {
        InterventionReward::Edge { i, j, sign } => edge_reward(*i, *j, *sign, f_t),
        InterventionReward::Node { i, x, mode, gamma, baseline_stats } => node_reward(
            *i,
            *x,
            *mode,
            *gamma,
            baseline_stats.as_ref(),
            f_t,
            env_reward,
            current_stats,
        ),
        InterventionReward::Loss { snapshot } => loss_reward(snapshot, f_prev, f_t),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionStrategy {
    /// Uniform over present edges / nodes.
    Random,
    /// Sampled with probability proportional to the edge variance.
    Weighted,
    /// Always the highest-variance target.
    Constant,
}

/// Tracks which targets were already handed out when sampling without
/// replacement, and which extreme the next node target should take.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionState {
    pub strategy: SelectionStrategy,
    pub with_replacement: bool,
    selected_edges: Vec<(usize, usize)>,
    selected_nodes: Vec<usize>,
    node_picks: HashMap<usize, usize>,
}

impl SelectionState {
    pub fn new(strategy: SelectionStrategy, with_replacement: bool) -> Self {
        Self {
            strategy,
            with_replacement,
            selected_edges: Vec::new(),
            selected_nodes: Vec::new(),
            node_picks: HashMap::new(),
        }
    }

    pub fn already_selected_edges(&self) -> &[(usize, usize)] {
        &self.selected_edges
    }
}

fn pick_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut draw = rng.gen::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        draw -= w;
        if draw <= 0.0 {
            return k;
        }
    }
    weights.len() - 1
}

/// Picks an edge (child c, parent p in the weight matrix) to test, returned
/// as (i = parent, j = child, sign) to parameterize the edge reward
/// R = f_i - f_j. Self-edges are never intervention targets. Without
/// replacement, edges already handed out are excluded until the pool is
/// exhausted, after which the pool resets. Ties break toward the lowest
/// (child, parent) index.
pub fn select_edge(
    graph: &CausalGraph,
    uncertainty: &EdgeUncertainty,
    selection: &mut SelectionState,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize, i8)> {
    if uncertainty.dim() != graph.dim() {
        return Err(LabError::Dimension { expected: graph.dim(), got: uncertainty.dim() });
    }
    let all: Vec<(usize, usize, i8)> = graph
        .edges()
        .into_iter()
        .filter(|&(child, parent, _)| child != parent)
        .collect();
    if all.is_empty() {
        return Err(LabError::Empty("graph has no edges to intervene on".into()));
    }
    let mut pool: Vec<(usize, usize, i8)> = if selection.with_replacement {
        all.clone()
    } else {
        let fresh: Vec<_> = all
            .iter()
            .copied()
            .filter(|&(c, p, _)| !selection.selected_edges.contains(&(c, p)))
            .collect();
        if fresh.is_empty() {
            selection.selected_edges.clear();
            all.clone()
        } else {
            fresh
        }
    };
    pool.sort();
    let chosen = match selection.strategy {
        SelectionStrategy::Random => pool[rng.gen_range(0..pool.len())],
        SelectionStrategy::Weighted => {
            let weights: Vec<f64> = pool.iter().map(|&(c, p, _)| uncertainty.variance[c][p]).collect();
            pool[pick_weighted(&weights, rng)]
        }
        SelectionStrategy::Constant => {
            let mut best = pool[0];
            let mut best_var = uncertainty.variance[best.0][best.1];
            for &e in &pool[1..] {
                let v = uncertainty.variance[e.0][e.1];
                if v > best_var {
                    best = e;
                    best_var = v;
                }
            }
            best
        }
    };
    if !selection.with_replacement {
        selection.selected_edges.push((chosen.0, chosen.1));
    }
    let (child, parent, sign) = chosen;
    Ok((parent, child, sign))
}

/// Picks a node by the total variance of its adjacent (incoming or outgoing)
/// present edges, then a target value that alternates between the feature's
/// max and min on successive selections of the same node.
pub fn select_node(
    graph: &CausalGraph,
    uncertainty: &EdgeUncertainty,
    spec: &FeatureSpec,
    selection: &mut SelectionState,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, f64)> {
    let dim = graph.dim();
    if dim == 0 {
        return Err(LabError::Empty("graph has no nodes".into()));
    }
    if spec.len() != dim {
        return Err(LabError::Dimension { expected: dim, got: spec.len() });
    }
    let mut score = vec![0.0; dim];
    for (child, parent, _) in graph.edges() {
        score[child] += uncertainty.variance[child][parent];
        if parent != child {
            score[parent] += uncertainty.variance[child][parent];
        }
    }
    let mut pool: Vec<usize> = (0..dim).collect();
    if !selection.with_replacement {
        let fresh: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|n| !selection.selected_nodes.contains(n))
            .collect();
        if fresh.is_empty() {
            selection.selected_nodes.clear();
        } else {
            pool = fresh;
        }
    }
    let node = match selection.strategy {
        SelectionStrategy::Random => pool[rng.gen_range(0..pool.len())],
        SelectionStrategy::Weighted => {
            let weights: Vec<f64> = pool.iter().map(|&n| score[n]).collect();
            pool[pick_weighted(&weights, rng)]
        }
        SelectionStrategy::Constant => {
            let mut best = pool[0];
            for &n in &pool[1..] {
                if score[n] > score[best] {
                    best = n;
                }
            }
            best
        }
    };
    if !selection.with_replacement {
        selection.selected_nodes.push(node);
    }
    let picks = selection.node_picks.entry(node).or_insert(0);
    let x = if *picks % 2 == 0 { spec.max_val[node] } else { spec.min_val[node] };
    *picks += 1;
    Ok((node, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::Step;
    use approx::assert_abs_diff_eq;
    use rand_chacha::rand_core::SeedableRng;

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector::new(values)
    }

    #[test]
    fn edge_reward_formulas() {
        let f = fv(vec![1.0, 0.0, 1.0]);
        assert_eq!(edge_reward(0, 1, 1, &f).unwrap(), 1.0);
        assert_eq!(edge_reward(0, 2, 1, &f).unwrap(), 0.0);
        assert_eq!(edge_reward(0, 2, -1, &f).unwrap(), 2.0);
    }

    #[test]
    fn edge_reward_maximized_at_box_corner() {
        // Enumerate a discretized feature box; the sign=+1 reward must peak
        // exactly at f_i = max, f_j = min.
        let (lo_i, hi_i) = (0.0, 3.0);
        let (lo_j, hi_j) = (-1.0, 2.0);
        let mut best = f64::NEG_INFINITY;
        let mut best_at = (0.0, 0.0);
        for a in 0..=30 {
            for b in 0..=30 {
                let fi = lo_i + (hi_i - lo_i) * a as f64 / 30.0;
                let fj = lo_j + (hi_j - lo_j) * b as f64 / 30.0;
                let r = edge_reward(0, 1, 1, &fv(vec![fi, fj])).unwrap();
                if r > best {
                    best = r;
                    best_at = (fi, fj);
                }
            }
        }
        assert_eq!(best_at, (hi_i, lo_j));
    }

    #[test]
    fn node_reward_modes() {
        let f = fv(vec![0.4, 2.0]);
        // Perfect intervention with no drift penalty.
        let base = FeatureStats { mean: vec![0.0, 0.0], variance: vec![0.0, 0.0], episode_count: 1 };
        let r = node_reward(0, 0.4, NodeRewardMode::StatPenalty, 0.5, Some(&base), &f, 0.0, Some(&base.clone()))
            .unwrap();
        assert_eq!(r, 0.0);
        // DiscountedOld with gamma = 0 reduces to the distance term.
        let r = node_reward(1, 0.5, NodeRewardMode::DiscountedOld, 0.0, None, &f, 3.0, None).unwrap();
        assert_abs_diff_eq!(r, -1.5, epsilon = 1e-12);
        // StatPenalty against a drifted baseline subtracts the L1 drift.
        let drifted = FeatureStats { mean: vec![1.0, 0.0], variance: vec![0.0, 2.0], episode_count: 1 };
        let r = node_reward(0, 0.4, NodeRewardMode::StatPenalty, 0.5, Some(&base), &f, 0.0, Some(&drifted))
            .unwrap();
        assert_abs_diff_eq!(r, -3.0, epsilon = 1e-12);
        // Missing baseline is an error.
        assert!(node_reward(0, 0.4, NodeRewardMode::StatPenalty, 0.5, None, &f, 0.0, None).is_err());
    }

    #[test]
    fn loss_reward_examples() {
        let mut snapshot = LinearCausalModel::zeros(3);
        snapshot.weights[0][0] = 1.0;
        snapshot.weights[1][1] = 1.0;
        snapshot.weights[2][2] = 1.0;
        let f = fv(vec![0.5, -1.0, 2.0]);
        assert_eq!(loss_reward(&snapshot, &f, &f).unwrap(), 0.0);

        let zero = LinearCausalModel::zeros(3);
        let e1 = fv(vec![0.0, 1.0, 0.0]);
        assert_eq!(loss_reward(&zero, &f, &e1).unwrap(), 1.0);
    }

    #[test]
    fn loss_reward_matches_loss_summand() {
        use crate::causal::evaluate_loss;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let dim = 4;
            let mut snapshot = LinearCausalModel::zeros(dim);
            for i in 0..dim {
                snapshot.bias[i] = rng.gen_range(-1.0..1.0);
                for j in 0..dim {
                    snapshot.weights[i][j] = rng.gen_range(-1.0..1.0);
                }
            }
            let prev = fv((0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let next = fv((0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let direct = loss_reward(&snapshot, &prev, &next).unwrap();
            // A one-transition episode's loss is exactly the summand.
            let episode = Episode {
                steps: vec![
                    Step { features: prev.clone(), action: Some(0), reward: 0.0 },
                    Step { features: next.clone(), action: None, reward: 0.0 },
                ],
                policy_tag: "t".into(),
            };
            let via_loss = evaluate_loss(&snapshot, &[episode]).unwrap();
            assert_abs_diff_eq!(direct, via_loss, epsilon = 1e-12);
        }
    }

    #[test]
    fn loss_snapshot_is_immutable() {
        let mut live = LinearCausalModel::zeros(2);
        live.weights[0][0] = 1.0;
        let reward = InterventionReward::Loss { snapshot: live.clone() };
        let prev = fv(vec![1.0, 0.0]);
        let next = fv(vec![0.0, 0.0]);
        let before = evaluate_reward(&reward, &prev, &next, 0.0, None).unwrap();
        // "Refit" the live model; the snapshot must not follow.
        live.weights[0][0] = -5.0;
        live.bias[1] = 3.0;
        let after = evaluate_reward(&reward, &prev, &next, 0.0, None).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn stats_of_constant_features() {
        let eps = vec![Episode {
            steps: (0..5)
                .map(|_| Step { features: fv(vec![2.0, -1.0]), action: Some(0), reward: 0.0 })
                .collect(),
            policy_tag: "c".into(),
        }];
        let stats = compute_feature_stats(&eps).unwrap();
        assert_eq!(stats.mean, vec![2.0, -1.0]);
        assert_eq!(stats.variance, vec![0.0, 0.0]);
    }

    #[test]
    fn stats_two_point_population_variance() {
        let eps = vec![Episode {
            steps: vec![
                Step { features: fv(vec![0.0]), action: Some(0), reward: 0.0 },
                Step { features: fv(vec![1.0]), action: None, reward: 0.0 },
            ],
            policy_tag: "c".into(),
        }];
        let stats = compute_feature_stats(&eps).unwrap();
        assert_abs_diff_eq!(stats.mean[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.variance[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn stats_match_naive_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps: Vec<Episode> = (0..4)
            .map(|_| Episode {
                steps: (0..10)
                    .map(|_| Step {
                        features: fv(vec![rng.gen_range(-3.0..3.0), rng.gen_range(0.0..1.0)]),
                        action: Some(0),
                        reward: 0.0,
                    })
                    .collect(),
                policy_tag: "r".into(),
            })
            .collect();
        let stats = compute_feature_stats(&eps).unwrap();
        for k in 0..2 {
            let vals: Vec<f64> = eps
                .iter()
                .flat_map(|e| e.steps.iter().map(|s| s.features[k]))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert_abs_diff_eq!(stats.mean[k], mean, epsilon = 1e-12);
            assert_abs_diff_eq!(stats.variance[k], var, epsilon = 1e-12);
        }
        assert!(compute_feature_stats(&[]).is_err());
    }

    fn graph_with_edges(dim: usize, edges: &[(usize, usize, f64)]) -> CausalGraph {
        let names: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
        let mut g = CausalGraph::empty(&names, 0.1);
        for &(c, p, w) in edges {
            g.set_edge(c, p, w);
        }
        g
    }

    fn uniform_uncertainty(dim: usize, v: f64) -> EdgeUncertainty {
        EdgeUncertainty { variance: vec![vec![v; dim]; dim], ensemble_size: 5 }
    }

    #[test]
    fn single_edge_graph_returns_it() {
        let g = graph_with_edges(3, &[(1, 0, 0.9)]);
        let unc = uniform_uncertainty(3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for strategy in [SelectionStrategy::Random, SelectionStrategy::Weighted, SelectionStrategy::Constant] {
            let mut sel = SelectionState::new(strategy, true);
            let (i, j, sign) = select_edge(&g, &unc, &mut sel, &mut rng).unwrap();
            assert_eq!((i, j, sign), (0, 1, 1), "parent 0 -> child 1");
        }
    }

    #[test]
    fn weighted_selection_follows_concentrated_variance() {
        let g = graph_with_edges(3, &[(1, 0, 0.9), (2, 0, 0.9), (2, 1, -0.5)]);
        let mut unc = uniform_uncertainty(3, 0.0);
        unc.variance[2][1] = 4.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut sel = SelectionState::new(SelectionStrategy::Weighted, true);
        for _ in 0..50 {
            let (i, j, sign) = select_edge(&g, &unc, &mut sel, &mut rng).unwrap();
            assert_eq!((i, j, sign), (1, 2, -1));
        }
    }

    #[test]
    fn weighted_frequencies_match_variances() {
        let g = graph_with_edges(2, &[(0, 1, 0.5), (1, 0, 0.5)]);
        let mut unc = uniform_uncertainty(2, 0.0);
        unc.variance[0][1] = 3.0;
        unc.variance[1][0] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut sel = SelectionState::new(SelectionStrategy::Weighted, true);
        let n = 10_000;
        let mut first = 0;
        for _ in 0..n {
            let (_, j, _) = select_edge(&g, &unc, &mut sel, &mut rng).unwrap();
            if j == 0 {
                first += 1;
            }
        }
        // Expect 3/4 within 3 sigma of a binomial draw.
        let p = 0.75;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = first as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn without_replacement_cycles_all_edges() {
        let g = graph_with_edges(3, &[(1, 0, 0.9), (2, 0, 0.9), (2, 1, 0.5)]);
        let unc = uniform_uncertainty(3, 1.0);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sel = SelectionState::new(SelectionStrategy::Random, false);
            let mut seen = Vec::new();
            for _ in 0..3 {
                let (i, j, _) = select_edge(&g, &unc, &mut sel, &mut rng).unwrap();
                seen.push((i, j));
            }
            seen.sort();
            assert_eq!(seen, vec![(0, 1), (0, 2), (1, 2)], "seed {seed}");
            // The pool resets after exhaustion.
            assert!(select_edge(&g, &unc, &mut sel, &mut rng).is_ok());
        }
    }

    #[test]
    fn empty_graph_is_an_error() {
        let g = graph_with_edges(3, &[]);
        let unc = uniform_uncertainty(3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sel = SelectionState::new(SelectionStrategy::Random, true);
        assert!(select_edge(&g, &unc, &mut sel, &mut rng).is_err());
    }

    #[test]
    fn self_edges_are_not_intervention_targets() {
        let g = graph_with_edges(2, &[(0, 0, 0.9), (1, 0, 0.9)]);
        let unc = uniform_uncertainty(2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sel = SelectionState::new(SelectionStrategy::Random, true);
        for _ in 0..20 {
            let (i, j, _) = select_edge(&g, &unc, &mut sel, &mut rng).unwrap();
            assert_eq!((i, j), (0, 1));
        }
    }

    fn spec3() -> FeatureSpec {
        FeatureSpec::new(
            vec![
                ("a".into(), -1.0, 1.0),
                ("b".into(), 0.0, 2.0),
                ("c".into(), 0.0, 1.0),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn node_selection_prefers_adjacent_variance() {
        let g = graph_with_edges(3, &[(1, 0, 0.9)]);
        let mut unc = uniform_uncertainty(3, 0.0);
        unc.variance[1][0] = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sel = SelectionState::new(SelectionStrategy::Constant, true);
        let (node, x) = select_node(&g, &unc, &spec3(), &mut sel, &mut rng).unwrap();
        // Nodes 0 and 1 share the score; the tie breaks to the lowest index.
        assert_eq!(node, 0);
        assert_eq!(x, 1.0, "first pick targets the max");
        let (node, x) = select_node(&g, &unc, &spec3(), &mut sel, &mut rng).unwrap();
        assert_eq!(node, 0);
        assert_eq!(x, -1.0, "second pick of the same node targets the min");
    }

    #[test]
    fn zero_variance_constant_picks_lowest_index() {
        let g = graph_with_edges(3, &[]);
        let unc = uniform_uncertainty(3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut sel = SelectionState::new(SelectionStrategy::Constant, true);
        let (node, _) = select_node(&g, &unc, &spec3(), &mut sel, &mut rng).unwrap();
        assert_eq!(node, 0);
    }

    #[test]
    fn random_node_selection_is_uniform() {
        let g = graph_with_edges(3, &[(1, 0, 0.9), (2, 1, 0.9)]);
        let unc = uniform_uncertainty(3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut sel = SelectionState::new(SelectionStrategy::Random, true);
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let (node, _) = select_node(&g, &unc, &spec3(), &mut sel, &mut rng).unwrap();
            counts[node] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - p).abs() < 3.0 * sigma, "freq {freq}");
        }
    }

    #[test]
    fn intervention_reward_serializes() {
        let reward = InterventionReward::edge(2, 0, -1).unwrap();
        let json = serde_json::to_string(&reward).unwrap();
        let back: InterventionReward = serde_json::from_str(&json).unwrap();
        assert_eq!(back, reward);
        assert!(InterventionReward::edge(1, 1, 1).is_err());
    }
}
