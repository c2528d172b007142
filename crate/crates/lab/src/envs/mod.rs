//! Deterministic-given-seed simulations: the KeyChest grid-world family and
//! the two didactic MDPs, plus the hand-designed feature extractor.

pub mod aliased;
pub mod features;
pub mod keychest;
pub mod twopath;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::causal::CausalGraph;
use crate::envs::aliased::{aliased_feature_spec, aliased_features, aliased_mdp_step, AliasedState, ALIASED_N_ACTIONS, ALIASED_N_OBS};
use crate::envs::features::{FeatureSpec, FeatureVector};
use crate::envs::keychest::{extract_features, keychest_reset, keychest_step, policy_observation, Action, GridConfig, GridState, Layout};
use crate::envs::twopath::{twopath_feature_spec, twopath_features, twopath_mdp_step, TwoPathMdpConfig, TwoPathState};
use crate::error::{LabError, Result};

/// Identifier of the simulated environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvId {
    A,
    B,
    C,
    Fig3,
    Fig5,
}

impl std::fmt::Display for EnvId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EnvId::A => "A",
            EnvId::B => "B",
            EnvId::C => "C",
            EnvId::Fig3 => "Fig3",
            EnvId::Fig5 => "Fig5",
        };
        write!(f, "{s}")
    }
}

/// Common simulation interface used by the rollout collector and trainer.
pub trait Environment {
    fn reset(&mut self, seed: u64) -> Result<()>;
    /// Applies one action; returns (reward credited to the arrival, done).
    fn step(&mut self, action: usize) -> Result<(f64, bool)>;
    fn n_actions(&self) -> usize;
    /// Observation vector the policy acts on.
    fn policy_obs(&self) -> Vec<f64>;
    fn policy_obs_dim(&self) -> usize;
    fn feature_spec(&self) -> &FeatureSpec;
    /// Learner features of the current observation. `action` is the action
    /// about to be taken here, for environments whose features embed the
    /// action one-hot; others ignore it.
    fn record_features(&self, action: Option<usize>) -> Result<FeatureVector>;
    fn done(&self) -> bool;
    /// Action of the parametric policy pi(p) at the current observation, for
    /// the environments that define one.
    fn parametric_action(&self, p: f64, rng: &mut ChaCha8Rng) -> Result<usize>;
}

/// KeyChest environment wrapper.
pub struct KeyChestEnv {
    pub config: GridConfig,
    spec: FeatureSpec,
    state: GridState,
}

impl KeyChestEnv {
    pub fn new(config: GridConfig) -> Result<Self> {
        let spec = config.feature_spec();
        let state = keychest_reset(&config, config.seed)?;
        Ok(Self { config, spec, state })
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }
}

impl Environment for KeyChestEnv {
    fn reset(&mut self, seed: u64) -> Result<()> {
        self.state = keychest_reset(&self.config, seed)?;
        Ok(())
    }

    fn step(&mut self, action: usize) -> Result<(f64, bool)> {
        let action = Action::from_index(action)?;
        let (_, reward, done) = keychest_step(&mut self.state, &self.config, action)?;
        Ok((reward, done))
    }

    fn n_actions(&self) -> usize {
        Action::ALL.len()
    }

    fn policy_obs(&self) -> Vec<f64> {
        policy_observation(&self.state, &self.config)
    }

    fn policy_obs_dim(&self) -> usize {
        5 * self.config.width * self.config.height + 3
    }

    fn feature_spec(&self) -> &FeatureSpec {
        &self.spec
    }

    fn record_features(&self, _action: Option<usize>) -> Result<FeatureVector> {
        extract_features(self.state.observation(), &self.spec)
    }

    fn done(&self) -> bool {
        self.state.done
    }

    fn parametric_action(&self, _p: f64, _rng: &mut ChaCha8Rng) -> Result<usize> {
        Err(LabError::Usage("the parametric policy is only defined for the Fig3/Fig5 MDPs".into()))
    }
}

/// Figure-3 aliased MDP wrapper.
pub struct AliasedEnv {
    spec: FeatureSpec,
    state: AliasedState,
}

impl AliasedEnv {
    pub fn new() -> Self {
        Self { spec: aliased_feature_spec(), state: AliasedState::S0 }
    }
}

impl Default for AliasedEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for AliasedEnv {
    fn reset(&mut self, _seed: u64) -> Result<()> {
        self.state = AliasedState::S0;
        Ok(())
    }

    fn step(&mut self, action: usize) -> Result<(f64, bool)> {
        if self.state.terminal() {
            return Err(LabError::Usage("step on a finished aliased-MDP episode".into()));
        }
        if action >= ALIASED_N_ACTIONS {
            return Err(LabError::Usage(format!("action {action} out of range")));
        }
        let (next, done) = aliased_mdp_step(self.state, action);
        self.state = next;
        Ok((0.0, done))
    }

    fn n_actions(&self) -> usize {
        ALIASED_N_ACTIONS
    }

    fn policy_obs(&self) -> Vec<f64> {
        let mut v = vec![0.0; ALIASED_N_OBS];
        v[self.state.observation()] = 1.0;
        v
    }

    fn policy_obs_dim(&self) -> usize {
        ALIASED_N_OBS
    }

    fn feature_spec(&self) -> &FeatureSpec {
        &self.spec
    }

    fn record_features(&self, action: Option<usize>) -> Result<FeatureVector> {
        aliased_features(self.state.observation(), action)
    }

    fn done(&self) -> bool {
        self.state.terminal()
    }

    fn parametric_action(&self, p: f64, rng: &mut ChaCha8Rng) -> Result<usize> {
        let a = match self.state.observation() {
            0 => {
                if rng.gen::<f64>() < p {
                    0
                } else {
                    1
                }
            }
            _ => rng.gen_range(0..ALIASED_N_ACTIONS),
        };
        Ok(a)
    }
}

/// Figure-5 two-path MDP wrapper.
pub struct TwoPathEnv {
    pub config: TwoPathMdpConfig,
    spec: FeatureSpec,
    state: TwoPathState,
    xi: f64,
    last_reward: f64,
    steps: usize,
    truncated: bool,
    rng: ChaCha8Rng,
}

impl TwoPathEnv {
    pub fn new(config: TwoPathMdpConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            spec: twopath_feature_spec(),
            state: TwoPathState::A,
            xi: 0.0,
            last_reward: 0.0,
            steps: 0,
            truncated: false,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
        })
    }
}

impl Environment for TwoPathEnv {
    fn reset(&mut self, seed: u64) -> Result<()> {
        self.state = TwoPathState::A;
        self.xi = 0.0;
        self.last_reward = 0.0;
        self.steps = 0;
        self.truncated = false;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(())
    }

    fn step(&mut self, action: usize) -> Result<(f64, bool)> {
        if self.done() {
            return Err(LabError::Usage("step on a finished two-path episode".into()));
        }
        if action >= 2 {
            return Err(LabError::Usage(format!("action {action} out of range")));
        }
        let (next, xi, reward, done) = twopath_mdp_step(self.state, action, &self.config, &mut self.rng);
        self.state = next;
        self.xi = xi;
        self.last_reward = reward;
        self.steps += 1;
        if !done && self.steps >= self.config.max_episode_steps {
            self.truncated = true;
        }
        Ok((reward, self.done()))
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn policy_obs(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.config.n_states()];
        v[self.state.index(self.config.n)] = 1.0;
        v
    }

    fn policy_obs_dim(&self) -> usize {
        self.config.n_states()
    }

    fn feature_spec(&self) -> &FeatureSpec {
        &self.spec
    }

    fn record_features(&self, _action: Option<usize>) -> Result<FeatureVector> {
        Ok(twopath_features(self.state, self.xi, self.last_reward))
    }

    fn done(&self) -> bool {
        self.state.terminal() || self.truncated
    }

    fn parametric_action(&self, p: f64, rng: &mut ChaCha8Rng) -> Result<usize> {
        let a = match self.state {
            TwoPathState::A => {
                if rng.gen::<f64>() < p {
                    0
                } else {
                    1
                }
            }
            _ => 0,
        };
        Ok(a)
    }
}

/// Environment instance dispatch for the harness.
pub enum LabEnv {
    KeyChest(KeyChestEnv),
    Aliased(AliasedEnv),
    TwoPath(TwoPathEnv),
}

impl LabEnv {
    pub fn for_id(id: EnvId) -> Result<Self> {
        match id {
            EnvId::A => Ok(LabEnv::KeyChest(KeyChestEnv::new(GridConfig::for_layout(Layout::RandomA))?)),
            EnvId::B => Ok(LabEnv::KeyChest(KeyChestEnv::new(GridConfig::for_layout(Layout::FixedB))?)),
            EnvId::C => Ok(LabEnv::KeyChest(KeyChestEnv::new(GridConfig::for_layout(Layout::RandomC))?)),
            EnvId::Fig3 => Ok(LabEnv::Aliased(AliasedEnv::new())),
            EnvId::Fig5 => Ok(LabEnv::TwoPath(TwoPathEnv::new(TwoPathMdpConfig::new(3, 0.1))?)),
        }
    }

    pub fn keychest(config: GridConfig) -> Result<Self> {
        Ok(LabEnv::KeyChest(KeyChestEnv::new(config)?))
    }

    fn inner(&self) -> &dyn Environment {
        match self {
            LabEnv::KeyChest(e) => e,
            LabEnv::Aliased(e) => e,
            LabEnv::TwoPath(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            LabEnv::KeyChest(e) => e,
            LabEnv::Aliased(e) => e,
            LabEnv::TwoPath(e) => e,
        }
    }
}

impl Environment for LabEnv {
    fn reset(&mut self, seed: u64) -> Result<()> {
        self.inner_mut().reset(seed)
    }
    fn step(&mut self, action: usize) -> Result<(f64, bool)> {
        self.inner_mut().step(action)
    }
    fn n_actions(&self) -> usize {
        self.inner().n_actions()
    }
    fn policy_obs(&self) -> Vec<f64> {
        self.inner().policy_obs()
    }
    fn policy_obs_dim(&self) -> usize {
        self.inner().policy_obs_dim()
    }
    fn feature_spec(&self) -> &FeatureSpec {
        self.inner().feature_spec()
    }
    fn record_features(&self, action: Option<usize>) -> Result<FeatureVector> {
        self.inner().record_features(action)
    }
    fn done(&self) -> bool {
        self.inner().done()
    }
    fn parametric_action(&self, p: f64, rng: &mut ChaCha8Rng) -> Result<usize> {
        self.inner().parametric_action(p, rng)
    }
}

/// True signed adjacency of the environment dynamics, encoded over the
/// environment's feature spec.
///
/// For KeyChest: eating food raises health, health/keys/lamp persist, keys
/// rise with collected keys and drop when a chest opens, the button toggles
/// the lamp, and an opened chest pays the reward. There is deliberately no
/// edge from keys or key collection into health. For the two-path MDP the
/// reference is the minimax graph, which relies on f1 to predict the reward.
/// The aliased MDP has no policy-independent ground truth.
pub fn ground_truth_graph(env: EnvId) -> Result<CausalGraph> {
    match env {
        EnvId::A | EnvId::B | EnvId::C => {
            let layout = match env {
                EnvId::A => Layout::RandomA,
                EnvId::B => Layout::FixedB,
                _ => Layout::RandomC,
            };
            let config = GridConfig::for_layout(layout);
            let spec = config.feature_spec();
            let idx = |name: &str| spec.index_of(name).expect("keychest feature name");
            let mut g = CausalGraph::empty(&spec.names, 0.1);
            g.set_edge(idx("health"), idx("food_collected"), config.food_health_gain as f64);
            g.set_edge(idx("health"), idx("health"), 1.0);
            g.set_edge(idx("keys"), idx("key_collected"), 1.0);
            g.set_edge(idx("keys"), idx("chest_opened"), -1.0);
            g.set_edge(idx("keys"), idx("keys"), 1.0);
            g.set_edge(idx("lamp"), idx("button_pressed"), 1.0);
            g.set_edge(idx("lamp"), idx("lamp"), 1.0);
            g.set_edge(idx("reward"), idx("chest_opened"), config.chest_reward);
            Ok(g)
        }
        EnvId::Fig5 => {
            let spec = twopath_feature_spec();
            let mut g = CausalGraph::empty(&spec.names, 0.1);
            let reward = spec.index_of("reward").unwrap();
            let f1 = spec.index_of("f1").unwrap();
            g.set_edge(reward, f1, 1.0);
            Ok(g)
        }
        EnvId::Fig3 => Err(LabError::Usage(
            "the aliased MDP has no policy-independent ground-truth graph".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::cosine_similarity;

    #[test]
    fn ground_truth_has_food_to_health_but_not_key_to_health() {
        let g = ground_truth_graph(EnvId::B).unwrap();
        let spec = GridConfig::for_layout(Layout::FixedB).feature_spec();
        let health = spec.index_of("health").unwrap();
        assert!(g.has_edge(health, spec.index_of("food_collected").unwrap()));
        assert!(!g.has_edge(health, spec.index_of("key_collected").unwrap()));
        assert!(!g.has_edge(health, spec.index_of("keys").unwrap()));
        assert_eq!(g.sign[spec.index_of("keys").unwrap()][spec.index_of("chest_opened").unwrap()], -1);
    }

    #[test]
    fn ground_truth_self_similarity_is_one() {
        for env in [EnvId::A, EnvId::B, EnvId::C, EnvId::Fig5] {
            let g = ground_truth_graph(env).unwrap();
            assert!((cosine_similarity(&g, &g).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fig3_has_no_ground_truth() {
        assert!(ground_truth_graph(EnvId::Fig3).is_err());
    }

    #[test]
    fn twopath_uniform_reachability_matches_analytic() {
        // Uniform policy reaches s_B with probability 1 / (2^n + 1).
        let config = TwoPathMdpConfig::new(3, 0.5);
        let mut env = TwoPathEnv::new(config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let episodes = 100_000;
        let mut hits = 0usize;
        for e in 0..episodes {
            env.reset(e as u64).unwrap();
            let mut reached_b = false;
            while !env.done() {
                let a = rng.gen_range(0..2);
                env.step(a).unwrap();
                if env.state == TwoPathState::B {
                    reached_b = true;
                }
            }
            if reached_b {
                hits += 1;
            }
        }
        let freq = hits as f64 / episodes as f64;
        let analytic = config.uniform_policy_reach_prob();
        assert!(
            freq >= 0.5 * analytic && freq <= 2.0 * analytic,
            "frequency {freq} vs analytic {analytic}"
        );
    }
}
