//! Policies and a clipped-surrogate policy-gradient trainer that maximizes an
//! arbitrary reward function (environment reward or an intervention reward)
//! over environment rollouts.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::causal::{Episode, Step};
use crate::envs::Environment;
use crate::error::{LabError, Result};
use crate::interventions::{evaluate_reward, FeatureStats, InterventionReward};

/// One hidden tanh layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Softmax policy network: optional hidden tanh layer followed by a linear
/// logit head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub hidden: Option<HiddenLayer>,
    pub w_out: Vec<Vec<f64>>,
    pub b_out: Vec<f64>,
}

impl PolicyNet {
    /// Zero-initialized head (a uniform policy); the hidden layer, when
    /// requested, gets small seeded random weights to break symmetry.
    pub fn new(obs_dim: usize, n_actions: usize, hidden_dim: Option<usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (hidden, head_in) = match hidden_dim {
            Some(h) => {
                let w = (0..h)
                    .map(|_| (0..obs_dim).map(|_| rng.gen_range(-0.1..0.1)).collect())
                    .collect();
                (Some(HiddenLayer { w, b: vec![0.0; h] }), h)
            }
            None => (None, obs_dim),
        };
        Self {
            hidden,
            w_out: vec![vec![0.0; head_in]; n_actions],
            b_out: vec![0.0; n_actions],
        }
    }

    pub fn n_actions(&self) -> usize {
        self.b_out.len()
    }

    pub fn obs_dim(&self) -> usize {
        match &self.hidden {
            Some(h) => h.w.first().map(|r| r.len()).unwrap_or(0),
            None => self.w_out.first().map(|r| r.len()).unwrap_or(0),
        }
    }

    /// Hidden activations (if any) and logits.
    pub fn forward(&self, obs: &[f64]) -> (Option<Vec<f64>>, Vec<f64>) {
        let (head_input, hidden_act): (Vec<f64>, Option<Vec<f64>>) = match &self.hidden {
            Some(layer) => {
                let act: Vec<f64> = layer
                    .w
                    .iter()
                    .zip(&layer.b)
                    .map(|(row, b)| {
                        (b + row.iter().zip(obs).map(|(w, x)| w * x).sum::<f64>()).tanh()
                    })
                    .collect();
                (act.clone(), Some(act))
            }
            None => (obs.to_vec(), None),
        };
        let logits = self
            .w_out
            .iter()
            .zip(&self.b_out)
            .map(|(row, b)| b + row.iter().zip(&head_input).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        (hidden_act, logits)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        if let Some(h) = &self.hidden {
            flat.extend(h.w.iter().flatten());
            flat.extend(&h.b);
        }
        flat.extend(self.w_out.iter().flatten());
        flat.extend(&self.b_out);
        flat
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        if let Some(h) = &mut self.hidden {
            for row in &mut h.w {
                for v in row {
                    *v = *it.next().unwrap();
                }
            }
            for v in &mut h.b {
                *v = *it.next().unwrap();
            }
        }
        for row in &mut self.w_out {
            for v in row {
                *v = *it.next().unwrap();
            }
        }
        for v in &mut self.b_out {
            *v = *it.next().unwrap();
        }
        debug_assert!(it.next().is_none());
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        if let Some(h) = &mut z.hidden {
            for row in &mut h.w {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
            h.b.iter_mut().for_each(|v| *v = 0.0);
        }
        for row in &mut z.w_out {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        z.b_out.iter_mut().for_each(|v| *v = 0.0);
        z
    }

    fn axpy(&mut self, alpha: f64, other: &Self) {
        if let (Some(h), Some(oh)) = (&mut self.hidden, &other.hidden) {
            for (row, orow) in h.w.iter_mut().zip(&oh.w) {
                for (v, o) in row.iter_mut().zip(orow) {
                    *v += alpha * o;
                }
            }
            for (v, o) in h.b.iter_mut().zip(&oh.b) {
                *v += alpha * o;
            }
        }
        for (row, orow) in self.w_out.iter_mut().zip(&other.w_out) {
            for (v, o) in row.iter_mut().zip(orow) {
                *v += alpha * o;
            }
        }
        for (v, o) in self.b_out.iter_mut().zip(&other.b_out) {
            *v += alpha * o;
        }
    }

    fn all_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Agent policies: the uniform-random baseline, the parametric pi(p) of the
/// didactic MDPs, and the trainable softmax policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    UniformRandom,
    ParametricP { p: f64 },
    LearnedSoftmax { net: PolicyNet },
}

impl Policy {
    pub fn tag(&self) -> String {
        match self {
            Policy::UniformRandom => "uniform-random".into(),
            Policy::ParametricP { p } => format!("parametric({p})"),
            Policy::LearnedSoftmax { .. } => "learned-softmax".into(),
        }
    }
}

/// Action probabilities of a softmax net at an observation.
pub fn softmax_probs(net: &PolicyNet, obs: &[f64]) -> Vec<f64> {
    log_softmax(&net.forward(obs).1).iter().map(|lp| lp.exp()).collect()
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut draw = rng.gen::<f64>();
    for (k, p) in probs.iter().enumerate() {
        draw -= p;
        if draw <= 0.0 {
            return k;
        }
    }
    probs.len() - 1
}

/// Samples an action from the policy's distribution at the environment's
/// current observation.
pub fn policy_action(policy: &Policy, env: &dyn Environment, rng: &mut ChaCha8Rng) -> Result<usize> {
    match policy {
        Policy::UniformRandom => Ok(rng.gen_range(0..env.n_actions())),
        Policy::ParametricP { p } => env.parametric_action(*p, rng),
        Policy::LearnedSoftmax { net } => {
            let obs = env.policy_obs();
            if obs.len() != net.obs_dim() {
                return Err(LabError::Dimension { expected: net.obs_dim(), got: obs.len() });
            }
            Ok(sample_categorical(&softmax_probs(net, &obs), rng))
        }
    }
}

/// Rollouts plus the per-step policy observations and environment rewards
/// the trainer needs.
pub struct RolloutData {
    pub episodes: Vec<Episode>,
    /// Policy observations for each non-terminal record of each episode.
    pub obs: Vec<Vec<Vec<f64>>>,
    /// Environment reward credited to each record of each episode.
    pub env_rewards: Vec<Vec<f64>>,
}

/// Tracks mean/variance of the features seen so far during one collection
/// pass, for the stat-penalty node reward.
struct RunningStats {
    n: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl RunningStats {
    fn new(dim: usize) -> Self {
        Self { n: 0.0, sum: vec![0.0; dim], sum_sq: vec![0.0; dim] }
    }

    fn push(&mut self, values: &[f64]) {
        self.n += 1.0;
        for (k, v) in values.iter().enumerate() {
            self.sum[k] += v;
            self.sum_sq[k] += v * v;
        }
    }

    fn snapshot(&self, episode_count: usize) -> Option<FeatureStats> {
        if self.n < 1.0 {
            return None;
        }
        let mean: Vec<f64> = self.sum.iter().map(|s| s / self.n).collect();
        let variance = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| (sq / self.n - m * m).max(0.0))
            .collect();
        Some(FeatureStats { mean, variance, episode_count })
    }
}

/// Collects `n_episodes` rollouts. Episodes are tagged with the policy id;
/// when `reward_override` is given, each stored step reward is the
/// intervention reward evaluated on that step's features (the environment
/// reward stays available inside the features and in [`RolloutData`]).
/// Deterministic given the seed.
pub fn collect_rollouts_detailed(
    env: &mut dyn Environment,
    policy: &Policy,
    n_episodes: usize,
    reward_override: Option<&InterventionReward>,
    seed: u64,
) -> Result<RolloutData> {
    if n_episodes == 0 {
        return Err(LabError::Config("n_episodes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = env.feature_spec().len();
    let mut running = RunningStats::new(dim);
    let mut episodes = Vec::with_capacity(n_episodes);
    let mut all_obs = Vec::with_capacity(n_episodes);
    let mut all_env_rewards = Vec::with_capacity(n_episodes);
    for e in 0..n_episodes {
        let episode_seed = rng.gen::<u64>();
        env.reset(episode_seed)?;
        let mut steps: Vec<Step> = Vec::new();
        let mut obs_trace = Vec::new();
        let mut env_rewards = vec![0.0];
        let mut arrived_reward = 0.0;
        loop {
            if env.done() {
                steps.push(Step {
                    features: env.record_features(None)?,
                    action: None,
                    reward: arrived_reward,
                });
                break;
            }
            let action = policy_action(policy, env, &mut rng)?;
            obs_trace.push(env.policy_obs());
            steps.push(Step {
                features: env.record_features(Some(action))?,
                action: Some(action),
                reward: arrived_reward,
            });
            let (r, _) = env.step(action)?;
            env_rewards.push(r);
            arrived_reward = r;
        }
        // Second pass: replace stored rewards by the intervention reward on
        // each arrival transition.
        if let Some(reward) = reward_override {
            running.push(&steps[0].features.values);
            for t in 1..steps.len() {
                running.push(&steps[t].features.values);
                let stats = running.snapshot(e + 1);
                let r = evaluate_reward(
                    reward,
                    &steps[t - 1].features,
                    &steps[t].features,
                    env_rewards[t],
                    stats.as_ref(),
                )?;
                steps[t].reward = r;
            }
            steps[0].reward = 0.0;
        }
        episodes.push(Episode { steps, policy_tag: policy.tag() });
        all_obs.push(obs_trace);
        all_env_rewards.push(env_rewards);
    }
    Ok(RolloutData { episodes, obs: all_obs, env_rewards: all_env_rewards })
}

/// Plain rollout collection; see [`collect_rollouts_detailed`].
pub fn collect_rollouts(
    env: &mut dyn Environment,
    policy: &Policy,
    n_episodes: usize,
    reward_override: Option<&InterventionReward>,
    seed: u64,
) -> Result<Vec<Episode>> {
    Ok(collect_rollouts_detailed(env, policy, n_episodes, reward_override, seed)?.episodes)
}

/// Trainer knobs. `updates` full batch-collect/update rounds of
/// `episodes_per_update` episodes each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub episodes_per_update: usize,
    pub updates: usize,
    pub discount: f64,
    pub clip_ratio: f64,
    pub learning_rate: f64,
    pub entropy_bonus: f64,
    pub ppo_epochs: usize,
    pub hidden_dim: Option<usize>,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            episodes_per_update: 32,
            updates: 60,
            discount: 0.99,
            clip_ratio: 0.2,
            learning_rate: 3e-3,
            entropy_bonus: 0.01,
            ppo_epochs: 4,
            hidden_dim: None,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes_per_update == 0 || self.updates == 0 || self.ppo_epochs == 0 {
            return Err(LabError::Config("episode/update counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(LabError::Config(format!("discount {} outside [0, 1)", self.discount)));
        }
        if self.clip_ratio <= 0.0 {
            return Err(LabError::Config("clip_ratio must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(LabError::Config("learning_rate must be positive".into()));
        }
        if self.entropy_bonus < 0.0 {
            return Err(LabError::Config("entropy_bonus must be non-negative".into()));
        }
        Ok(())
    }
}

/// Flattened training batch for the surrogate objective.
pub struct SurrogateBatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub advantages: Vec<f64>,
    pub old_logp: Vec<f64>,
}

/// Clipped-surrogate loss (to be minimized):
/// -mean(min(r A, clip(r) A)) - entropy_bonus * mean(H).
pub fn surrogate_loss(net: &PolicyNet, batch: &SurrogateBatch, clip: f64, entropy_bonus: f64) -> f64 {
    let n = batch.obs.len() as f64;
    let mut total = 0.0;
    for k in 0..batch.obs.len() {
        let (_, logits) = net.forward(&batch.obs[k]);
        let logp = log_softmax(&logits);
        let ratio = (logp[batch.actions[k]] - batch.old_logp[k]).exp();
        let adv = batch.advantages[k];
        let surr = (ratio * adv).min(ratio.clamp(1.0 - clip, 1.0 + clip) * adv);
        let entropy: f64 = logp
            .iter()
            .map(|lp| {
                let p = lp.exp();
                if p > 0.0 {
                    -p * lp
                } else {
                    0.0
                }
            })
            .sum();
        total += -surr - entropy_bonus * entropy;
    }
    total / n
}

/// Analytic gradient of [`surrogate_loss`] with respect to every parameter.
pub fn surrogate_grad(
    net: &PolicyNet,
    batch: &SurrogateBatch,
    clip: f64,
    entropy_bonus: f64,
) -> PolicyNet {
    let n = batch.obs.len() as f64;
    let mut grad = net.zeros_like();
    for k in 0..batch.obs.len() {
        let obs = &batch.obs[k];
        let (hidden_act, logits) = net.forward(obs);
        let logp = log_softmax(&logits);
        let probs: Vec<f64> = logp.iter().map(|lp| lp.exp()).collect();
        let a = batch.actions[k];
        let adv = batch.advantages[k];
        let ratio = (logp[a] - batch.old_logp[k]).exp();
        let surr1 = ratio * adv;
        let surr2 = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
        // d(min)/dlogits: the clipped branch is flat in the parameters
        // whenever it is strictly smaller, so only the unclipped branch
        // contributes.
        let use_grad = surr1 <= surr2;
        let entropy: f64 = probs
            .iter()
            .zip(&logp)
            .map(|(p, lp)| if *p > 0.0 { -p * lp } else { 0.0 })
            .sum();
        let n_actions = probs.len();
        let mut dlogits = vec![0.0; n_actions];
        for b in 0..n_actions {
            let indicator = if b == a { 1.0 } else { 0.0 };
            let mut d = 0.0;
            if use_grad {
                d += adv * ratio * (indicator - probs[b]);
            }
            // dH/dz_b = -p_b (log p_b + H)
            let dh = if probs[b] > 0.0 { -probs[b] * (logp[b] + entropy) } else { 0.0 };
            d += entropy_bonus * dh;
            dlogits[b] = -d / n;
        }
        match (&net.hidden, &hidden_act) {
            (Some(layer), Some(act)) => {
                for b in 0..n_actions {
                    for (h, a_h) in act.iter().enumerate() {
                        grad.w_out[b][h] += dlogits[b] * a_h;
                    }
                    grad.b_out[b] += dlogits[b];
                }
                let gh = grad.hidden.as_mut().unwrap();
                for h in 0..act.len() {
                    let mut dact = 0.0;
                    for b in 0..n_actions {
                        dact += dlogits[b] * net.w_out[b][h];
                    }
                    let dpre = dact * (1.0 - act[h] * act[h]);
                    for (x_i, x) in obs.iter().enumerate() {
                        gh.w[h][x_i] += dpre * x;
                    }
                    gh.b[h] += dpre;
                }
                let _ = layer;
            }
            _ => {
                for b in 0..n_actions {
                    for (x_i, x) in obs.iter().enumerate() {
                        grad.w_out[b][x_i] += dlogits[b] * x;
                    }
                    grad.b_out[b] += dlogits[b];
                }
            }
        }
    }
    grad
}

/// One point of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: usize,
    pub mean_train_return: f64,
    pub mean_env_return: f64,
}

/// Outcome of a training run, including the evaluation comparison against
/// the uniform-random baseline on the same training reward.
pub struct TrainResult {
    pub policy: Policy,
    pub curve: Vec<CurvePoint>,
    pub episodes_used: usize,
    pub trained_eval_return: f64,
    pub random_eval_return: f64,
}

/// Mean per-episode training-reward return of a policy over `n` evaluation
/// episodes.
pub fn evaluate_policy(
    env: &mut dyn Environment,
    policy: &Policy,
    reward_override: Option<&InterventionReward>,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let data = collect_rollouts_detailed(env, policy, n, reward_override, seed)?;
    let total: f64 = data
        .episodes
        .iter()
        .map(|e| e.steps.iter().map(|s| s.reward).sum::<f64>())
        .sum();
    Ok(total / n as f64)
}

struct LinearValue {
    w: Vec<f64>,
    b: f64,
}

impl LinearValue {
    fn new(dim: usize) -> Self {
        Self { w: vec![0.0; dim], b: 0.0 }
    }

    fn predict(&self, obs: &[f64]) -> f64 {
        self.b + self.w.iter().zip(obs).map(|(w, x)| w * x).sum::<f64>()
    }

    fn sgd_epoch(&mut self, obs: &[Vec<f64>], targets: &[f64], lr: f64) {
        let n = obs.len() as f64;
        let mut gw = vec![0.0; self.w.len()];
        let mut gb = 0.0;
        for (x, g) in obs.iter().zip(targets) {
            let err = self.predict(x) - g;
            for (k, xv) in x.iter().enumerate() {
                gw[k] += 2.0 * err * xv / n;
            }
            gb += 2.0 * err / n;
        }
        for (w, g) in self.w.iter_mut().zip(&gw) {
            *w -= lr * g;
        }
        self.b -= lr * gb;
    }
}

/// Trains a softmax policy to maximize the given reward (environment reward
/// when `reward_override` is None) with clipped-surrogate policy gradient and
/// normalized advantages against a learned linear value baseline.
/// `init` warm-starts from an existing network. Reproducible given the
/// config seed.
pub fn train_policy(
    env: &mut dyn Environment,
    reward_override: Option<&InterventionReward>,
    config: &TrainerConfig,
    init: Option<PolicyNet>,
) -> Result<TrainResult> {
    config.validate()?;
    let obs_dim = env.policy_obs_dim();
    let n_actions = env.n_actions();
    let mut net = match init {
        Some(net) => {
            if net.obs_dim() != obs_dim || net.n_actions() != n_actions {
                return Err(LabError::Dimension { expected: obs_dim, got: net.obs_dim() });
            }
            net
        }
        None => PolicyNet::new(obs_dim, n_actions, config.hidden_dim, config.seed),
    };
    let mut value = LinearValue::new(obs_dim);
    let mut seed_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut curve = Vec::with_capacity(config.updates);
    let mut episodes_used = 0;

    for update in 0..config.updates {
        let policy = Policy::LearnedSoftmax { net: net.clone() };
        let data = collect_rollouts_detailed(
            env,
            &policy,
            config.episodes_per_update,
            reward_override,
            seed_rng.gen(),
        )?;
        episodes_used += data.episodes.len();

        let mut batch = SurrogateBatch {
            obs: Vec::new(),
            actions: Vec::new(),
            advantages: Vec::new(),
            old_logp: Vec::new(),
        };
        let mut returns = Vec::new();
        let mut train_return_sum = 0.0;
        let mut env_return_sum = 0.0;
        for (e, episode) in data.episodes.iter().enumerate() {
            train_return_sum += episode.steps.iter().map(|s| s.reward).sum::<f64>();
            env_return_sum += data.env_rewards[e].iter().sum::<f64>();
            // Discounted return for the action at record t over rewards
            // credited to records t+1 onward.
            let t_max = episode.steps.len() - 1;
            let mut g = 0.0;
            let mut per_t = vec![0.0; t_max];
            for t in (0..t_max).rev() {
                g = episode.steps[t + 1].reward + config.discount * g;
                per_t[t] = g;
            }
            for t in 0..t_max {
                let obs = &data.obs[e][t];
                let action = episode.steps[t].action.expect("non-terminal record has an action");
                let (_, logits) = net.forward(obs);
                let logp = log_softmax(&logits);
                batch.obs.push(obs.clone());
                batch.actions.push(action);
                batch.old_logp.push(logp[action]);
                returns.push(per_t[t]);
            }
        }
        if batch.obs.is_empty() {
            return Err(LabError::Training("collected batch has no transitions".into()));
        }

        let advantages: Vec<f64> = batch
            .obs
            .iter()
            .zip(&returns)
            .map(|(obs, g)| g - value.predict(obs))
            .collect();
        let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / advantages.len() as f64;
        let std = var.sqrt();
        batch.advantages = advantages
            .iter()
            .map(|a| if std > 1e-8 { (a - mean) / std } else { 0.0 })
            .collect();

        for _ in 0..config.ppo_epochs {
            let grad = surrogate_grad(&net, &batch, config.clip_ratio, config.entropy_bonus);
            net.axpy(-config.learning_rate, &grad);
            value.sgd_epoch(&batch.obs, &returns, config.learning_rate);
        }
        if !net.all_finite() {
            return Err(LabError::Training(format!(
                "non-finite parameters after update {update} (reward {:?})",
                reward_override.map(|r| r.kind())
            )));
        }
        curve.push(CurvePoint {
            update,
            mean_train_return: train_return_sum / data.episodes.len() as f64,
            mean_env_return: env_return_sum / data.episodes.len() as f64,
        });
    }

    let eval_seed = seed_rng.gen();
    let trained_eval_return = evaluate_policy(
        env,
        &Policy::LearnedSoftmax { net: net.clone() },
        reward_override,
        100,
        eval_seed,
    )?;
    let random_eval_return =
        evaluate_policy(env, &Policy::UniformRandom, reward_override, 100, eval_seed)?;
    Ok(TrainResult {
        policy: Policy::LearnedSoftmax { net },
        curve,
        episodes_used,
        trained_eval_return,
        random_eval_return,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::keychest::{GridConfig, Layout};
    use crate::envs::twopath::TwoPathMdpConfig;
    use crate::envs::{AliasedEnv, Environment, KeyChestEnv, TwoPathEnv};

    #[test]
    fn uniform_action_frequencies() {
        let mut env = KeyChestEnv::new(GridConfig::for_layout(Layout::RandomA)).unwrap();
        env.reset(0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[policy_action(&Policy::UniformRandom, &env, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.2).abs() < 0.02, "freq {freq}");
        }
    }

    #[test]
    fn saturated_softmax_is_deterministic() {
        let mut net = PolicyNet::new(4, 2, None, 0);
        net.b_out = vec![20.0, 0.0];
        let env = AliasedEnv::new();
        let policy = Policy::LearnedSoftmax { net };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let mut first = 0;
        for _ in 0..n {
            if policy_action(&policy, &env, &mut rng).unwrap() == 0 {
                first += 1;
            }
        }
        assert!(first as f64 / n as f64 > 0.999);
    }

    #[test]
    fn parametric_p_frequency_at_o0() {
        let env = AliasedEnv::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mut a1 = 0;
        for _ in 0..n {
            if policy_action(&Policy::ParametricP { p: 0.3 }, &env, &mut rng).unwrap() == 0 {
                a1 += 1;
            }
        }
        let freq = a1 as f64 / n as f64;
        assert!((freq - 0.3).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn policy_probabilities_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let mut net = PolicyNet::new(6, 3, Some(5), rng.gen());
            for row in &mut net.w_out {
                for v in row.iter_mut() {
                    *v = rng.gen_range(-3.0..3.0);
                }
            }
            let obs: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let sum: f64 = softmax_probs(&net, &obs).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_on_aliased_splits_o1_successors_evenly() {
        let mut env = AliasedEnv::new();
        let eps = collect_rollouts(&mut env, &Policy::UniformRandom, 10_000, None, 5).unwrap();
        let mut o2 = 0;
        for e in &eps {
            // Terminal record's observation one-hot: index 2 is o2.
            let last = &e.steps.last().unwrap().features;
            if last[2] == 1.0 {
                o2 += 1;
            }
        }
        let freq = o2 as f64 / eps.len() as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn parametric_one_always_reaches_o2() {
        let mut env = AliasedEnv::new();
        let eps = collect_rollouts(&mut env, &Policy::ParametricP { p: 1.0 }, 200, None, 6).unwrap();
        for e in &eps {
            assert_eq!(e.steps.last().unwrap().features[2], 1.0);
        }
    }

    #[test]
    fn parametric_one_always_reaches_s_b_on_twopath() {
        let config = TwoPathMdpConfig::new(4, 0.5);
        let mut env = TwoPathEnv::new(config).unwrap();
        let eps = collect_rollouts(&mut env, &Policy::ParametricP { p: 1.0 }, 200, None, 7).unwrap();
        for e in &eps {
            // Route through s_B has n + 3 records (A, chain 1..n, B, D).
            assert_eq!(e.len(), config.n + 3);
            assert_eq!(e.steps.last().unwrap().features[2], 1.0, "reward on B -> D");
        }
    }

    #[test]
    fn rollouts_are_deterministic_given_seed() {
        let mut env = KeyChestEnv::new(GridConfig::for_layout(Layout::RandomA)).unwrap();
        let a = collect_rollouts(&mut env, &Policy::UniformRandom, 5, None, 11).unwrap();
        let b = collect_rollouts(&mut env, &Policy::UniformRandom, 5, None, 11).unwrap();
        assert_eq!(a, b);
    }

    fn finite_difference_check(hidden: Option<usize>) {
        let obs_dim = 3;
        let n_actions = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut net = PolicyNet::new(obs_dim, n_actions, hidden, 99);
        let mut flat = net.flatten();
        for v in &mut flat {
            *v += rng.gen_range(-0.5..0.5);
        }
        net.load_flat(&flat);
        // Old log-probs from a nearby but different net so ratios != 1.
        let mut old_net = net.clone();
        let mut old_flat = old_net.flatten();
        for v in &mut old_flat {
            *v += rng.gen_range(-0.05..0.05);
        }
        old_net.load_flat(&old_flat);

        let mut batch = SurrogateBatch {
            obs: Vec::new(),
            actions: Vec::new(),
            advantages: Vec::new(),
            old_logp: Vec::new(),
        };
        for _ in 0..16 {
            let obs: Vec<f64> = (0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let action = rng.gen_range(0..n_actions);
            let (_, logits) = old_net.forward(&obs);
            batch.old_logp.push(log_softmax(&logits)[action]);
            batch.obs.push(obs);
            batch.actions.push(action);
            batch.advantages.push(rng.gen_range(-1.0..1.0));
        }

        let clip = 0.2;
        let ent = 0.01;
        let analytic = surrogate_grad(&net, &batch, clip, ent).flatten();
        let base_flat = net.flatten();
        let mut fd = vec![0.0; base_flat.len()];
        let h = 1e-6;
        for k in 0..base_flat.len() {
            let mut plus = base_flat.clone();
            plus[k] += h;
            let mut minus = base_flat.clone();
            minus[k] -= h;
            let mut net_p = net.clone();
            net_p.load_flat(&plus);
            let mut net_m = net.clone();
            net_m.load_flat(&minus);
            fd[k] = (surrogate_loss(&net_p, &batch, clip, ent)
                - surrogate_loss(&net_m, &batch, clip, ent))
                / (2.0 * h);
        }
        let num: f64 = analytic.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(den > 0.0);
        let rel = num / den;
        assert!(rel < 1e-4, "gradient relative error {rel}");
    }

    #[test]
    fn gradient_matches_finite_differences_linear() {
        finite_difference_check(None);
    }

    #[test]
    fn gradient_matches_finite_differences_hidden() {
        finite_difference_check(Some(4));
    }

    #[test]
    fn training_is_reproducible() {
        let config = TrainerConfig {
            episodes_per_update: 4,
            updates: 3,
            ..TrainerConfig::default()
        };
        let mut env = AliasedEnv::new();
        let a = train_policy(&mut env, None, &config, None).unwrap();
        let b = train_policy(&mut env, None, &config, None).unwrap();
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn zero_reward_training_stays_finite() {
        // The o0 one-hot is 0 at every arrival record, so targeting it at 0
        // with gamma = 0 yields an identically zero training reward.
        let reward = InterventionReward::Node {
            i: 0,
            x: 0.0,
            mode: crate::interventions::NodeRewardMode::DiscountedOld,
            gamma: 0.0,
            baseline_stats: None,
        };
        let config = TrainerConfig {
            episodes_per_update: 8,
            updates: 5,
            ..TrainerConfig::default()
        };
        let mut env = AliasedEnv::new();
        let result = train_policy(&mut env, Some(&reward), &config, None).unwrap();
        for point in &result.curve {
            assert_eq!(point.mean_train_return, 0.0);
        }
        if let Policy::LearnedSoftmax { net } = &result.policy {
            assert!(net.all_finite());
        } else {
            panic!("expected a learned policy");
        }
    }

    #[test]
    fn edge_reward_training_beats_random_on_fixed_b() {
        use crate::interventions::InterventionReward;
        // Reward (keys - health): driving keys up and health down is easy to
        // learn and dense.
        let grid = GridConfig::for_layout(Layout::FixedB);
        let spec = grid.feature_spec();
        let keys = spec.index_of("keys").unwrap();
        let health = spec.index_of("health").unwrap();
        let reward = InterventionReward::edge(keys, health, 1).unwrap();
        let mut env = KeyChestEnv::new(grid).unwrap();
        let config = TrainerConfig {
            episodes_per_update: 16,
            updates: 30,
            seed: 3,
            ..TrainerConfig::default()
        };
        let result = train_policy(&mut env, Some(&reward), &config, None).unwrap();
        assert!(
            result.trained_eval_return > result.random_eval_return,
            "trained {} vs random {}",
            result.trained_eval_return,
            result.random_eval_return
        );
    }
}
