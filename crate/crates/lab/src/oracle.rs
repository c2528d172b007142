//! Analytic ground truth for the didactic MDPs (closed-form optimal weights
//! and losses), an exhaustive lasso solver for tiny problems used as an
//! independent check of the coordinate-descent fit, and the realizable-case
//! property check on a deterministic chain.

use serde::{Deserialize, Serialize};

use crate::causal::{evaluate_loss, Episode, LinearCausalModel, Step};
use crate::envs::features::FeatureVector;
use crate::error::{LabError, Result};

/// Optimal linear predictor at the aliased observation o1: coefficients for
/// the o2 and o3 one-hot components and the per-visit prediction loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig3Solution {
    pub w2: f64,
    pub w3: f64,
    pub loss_per_visit: f64,
}

/// For policy pi(p) the best predictor assigns w2 = p, w3 = 1 - p with
/// per-visit loss 2p - 2p^2.
pub fn fig3_optimal(p: f64) -> Result<Fig3Solution> {
    if !(0.0..=1.0).contains(&p) {
        return Err(LabError::Config(format!("p {p} outside [0, 1]")));
    }
    Ok(Fig3Solution { w2: p, w3: 1.0 - p, loss_per_visit: 2.0 * p - 2.0 * p * p })
}

/// Per-visit loss of predicting (w2, w3) at o1 under policy pi(p).
pub fn fig3_loss(p: f64, w2: f64, w3: f64) -> f64 {
    p * ((1.0 - w2).powi(2) + w3 * w3) + (1.0 - p) * (w2 * w2 + (1.0 - w3).powi(2))
}

/// The minimax predictor hedges both successors equally: w2 = w3 = 1/2 with
/// loss 1/2 at every p.
pub fn fig3_minimax() -> Fig3Solution {
    Fig3Solution { w2: 0.5, w3: 0.5, loss_per_visit: 0.5 }
}

/// Numerical min-max over a grid: for each (w2, w3) take the worst p on the
/// grid, then keep the (w2, w3) with the smallest worst case.
pub fn fig3_minimax_grid(step: f64) -> Fig3Solution {
    let ticks = (1.0 / step).round() as usize;
    let mut best = Fig3Solution { w2: 0.0, w3: 0.0, loss_per_visit: f64::INFINITY };
    for i in 0..=ticks {
        let w2 = i as f64 * step;
        for j in 0..=ticks {
            let w3 = j as f64 * step;
            let mut worst = f64::NEG_INFINITY;
            for k in 0..=ticks {
                let p = k as f64 * step;
                worst = worst.max(fig3_loss(p, w2, w3));
            }
            if worst < best.loss_per_visit {
                best = Fig3Solution { w2, w3, loss_per_visit: worst };
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MinimaxChoice {
    RelyOnF1,
    RelyOnF2,
}

/// Optimal reward-predicting weights on the two-path MDP for a policy that
/// reaches s_B with probability q under noise level p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig5Solution {
    pub w1: f64,
    pub w2: f64,
    pub loss: f64,
    pub minimax_choice: Option<MinimaxChoice>,
}

/// Expected prediction loss for weights (w1, w2): visiting s_B with
/// probability q costs p + (1-p)(1-w1)^2 there, and s_C with probability
/// 1 - q costs (1-p)(1-w1-w2)^2 + p(1-w2)^2.
pub fn fig5_loss(p: f64, q: f64, w1: f64, w2: f64) -> f64 {
    q * (p + (1.0 - p) * (1.0 - w1).powi(2))
        + (1.0 - q) * ((1.0 - p) * (1.0 - w1 - w2).powi(2) + p * (1.0 - w2).powi(2))
}

/// Minimizer of [`fig5_loss`]: w1 = q / (p + q - pq); at q = 1 the s_C term
/// vanishes and w2 is set to 0 (the sparse representative of the flat
/// direction).
pub fn fig5_optimal(p: f64, q: f64) -> Result<Fig5Solution> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(LabError::Config(format!("(p, q) = ({p}, {q}) outside the unit square")));
    }
    if p + q == 0.0 {
        return Err(LabError::Config("p = q = 0 is degenerate: no noise and no s_B visits".into()));
    }
    let w1 = q / (p + q - p * q);
    let w2 = if q == 1.0 { 0.0 } else { (1.0 - p) * (1.0 - w1) + p };
    Ok(Fig5Solution { w1, w2, loss: fig5_loss(p, q, w1, w2), minimax_choice: None })
}

/// Worst case over q is q = 0 when relying on f1 (loss p) but q = 1 when
/// relying on f2 (loss 1), so the minimax graph relies on f1 whenever p < 1.
pub fn fig5_minimax(p: f64) -> Result<Fig5Solution> {
    if !(0.0..=1.0).contains(&p) {
        return Err(LabError::Config(format!("p {p} outside [0, 1]")));
    }
    if p < 1.0 {
        Ok(Fig5Solution { w1: 1.0, w2: 0.0, loss: p, minimax_choice: Some(MinimaxChoice::RelyOnF1) })
    } else {
        Ok(Fig5Solution { w1: 0.0, w2: 1.0, loss: 1.0, minimax_choice: Some(MinimaxChoice::RelyOnF2) })
    }
}

const LASSO_BOX: f64 = 3.0;

fn lasso_objective(x: &[Vec<f64>], y: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let mut obj = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let pred: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
        obj += (yi - pred).powi(2);
    }
    obj + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Exhaustive grid minimizer of ||y - Xw||^2 + lambda ||w||_1 over the box
/// [-3, 3]^F at the given step, refined by per-coordinate golden-section
/// passes until the point stops moving. Refuses more than 4 features.
pub fn brute_force_lasso(
    x: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    grid_step: f64,
) -> Result<Vec<f64>> {
    if x.is_empty() || x.len() != y.len() {
        return Err(LabError::Empty("design matrix and targets must be non-empty and aligned".into()));
    }
    let dim = x[0].len();
    if dim > 4 {
        return Err(LabError::Config(format!("brute-force lasso refuses F = {dim} > 4 features")));
    }
    if grid_step <= 0.0 {
        return Err(LabError::Config("grid step must be positive".into()));
    }
    let ticks = (2.0 * LASSO_BOX / grid_step).round() as usize;
    let mut best = vec![0.0; dim];
    let mut best_obj = lasso_objective(x, y, lambda, &best);
    let mut idx = vec![0usize; dim];
    let mut w = vec![-LASSO_BOX; dim];
    loop {
        let obj = lasso_objective(x, y, lambda, &w);
        if obj < best_obj {
            best_obj = obj;
            best = w.clone();
        }
        let mut d = 0;
        loop {
            if d == dim {
                break;
            }
            idx[d] += 1;
            if idx[d] > ticks {
                idx[d] = 0;
                w[d] = -LASSO_BOX;
                d += 1;
            } else {
                w[d] = -LASSO_BOX + idx[d] as f64 * grid_step;
                break;
            }
        }
        if d == dim {
            break;
        }
    }

    // Local refinement: golden-section search per coordinate, cycled until
    // stable. The objective is convex and the l1 term separable, so the
    // coordinate-wise minimum converges to the global one.
    let golden = |w: &mut Vec<f64>, d: usize| {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (-LASSO_BOX, LASSO_BOX);
        let mut c = b - phi * (b - a);
        let mut e = a + phi * (b - a);
        let eval = |w: &mut Vec<f64>, v: f64| {
            w[d] = v;
            lasso_objective(x, y, lambda, w)
        };
        let mut fc = eval(w, c);
        let mut fe = eval(w, e);
        while (b - a).abs() > 1e-9 {
            if fc < fe {
                b = e;
                e = c;
                fe = fc;
                c = b - phi * (b - a);
                fc = eval(w, c);
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + phi * (b - a);
                fe = eval(w, e);
            }
        }
        // The coordinate minimum of an l1 objective often sits exactly at 0;
        // snap when 0 is at least as good as the interior point.
        let mid = (a + b) / 2.0;
        let f_mid = eval(w, mid);
        let f_zero = eval(w, 0.0);
        if f_zero <= f_mid {
            w[d] = 0.0;
        } else {
            w[d] = mid;
        }
    };
    for _ in 0..200 {
        let before = best.clone();
        for d in 0..dim {
            golden(&mut best, d);
        }
        let moved = best
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if moved < 1e-8 {
            break;
        }
    }
    Ok(best)
}

/// Deterministic chain used for the realizable-case check: both actions
/// advance the chain by one state, the last state is terminal, and the
/// features are the one-hot state encoding, so one linear graph fits every
/// policy exactly.
#[derive(Debug, Clone, Copy)]
pub struct ChainMdp {
    pub n_states: usize,
}

impl ChainMdp {
    pub fn new(n_states: usize) -> Self {
        Self { n_states }
    }

    fn features(&self, state: usize) -> FeatureVector {
        let mut v = vec![0.0; self.n_states];
        v[state] = 1.0;
        FeatureVector::new(v)
    }

    /// Rolls one episode under a deterministic policy (a state -> action
    /// table), truncated after `horizon` transitions.
    pub fn rollout(&self, policy: &[usize], horizon: usize) -> Episode {
        let mut steps = Vec::new();
        let mut state = 0usize;
        for _ in 0..horizon {
            if state == self.n_states - 1 {
                break;
            }
            steps.push(Step { features: self.features(state), action: Some(policy[state]), reward: 0.0 });
            state += 1;
        }
        steps.push(Step { features: self.features(state), action: None, reward: 0.0 });
        Episode { steps, policy_tag: "chain".into() }
    }

    /// All 2^n deterministic two-action policies.
    pub fn enumerate_policies(&self) -> Vec<Vec<usize>> {
        let n = self.n_states;
        (0..(1usize << n))
            .map(|mask| (0..n).map(|s| (mask >> s) & 1).collect())
            .collect()
    }
}

/// Realizable-case check: the fitted model must attain (near-)zero loss on
/// rollouts of every supplied adversarial policy.
pub fn realizable_check(
    env: &ChainMdp,
    model: &LinearCausalModel,
    adversarial_policies: &[Vec<usize>],
) -> Result<bool> {
    for policy in adversarial_policies {
        let episode = env.rollout(policy, env.n_states);
        let loss = evaluate_loss(model, std::slice::from_ref(&episode))?;
        if loss >= 1e-6 {
            return Ok(false);
        }
    }
    Ok(true)
}
