use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::features::{FeatureSpec, FeatureVector};
use crate::error::{LabError, Result};

/// Chain MDP with two routes to the rewarding terminal state: a long chain
/// ending at s_B (hard to reach by chance) and a single step to s_C. The
/// learner sees only (f1, f2, reward); f1 carries noise xi while f2 separates
/// the two rewarding states, so which feature the regression relies on
/// depends on how often the data-collecting policy reaches s_B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPathMdpConfig {
    /// Chain length n; s_B sits after n intermediate states.
    pub n: usize,
    /// Probability that the noise variable xi is 0 (xi = 1 with prob 1 - p).
    pub p: f64,
    pub seed: u64,
    /// Safety cap on episode length.
    pub max_episode_steps: usize,
}

impl TwoPathMdpConfig {
    pub fn new(n: usize, p: f64) -> Self {
        Self { n, p, seed: 0, max_episode_steps: 10_000 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(LabError::Config(format!("p {} outside [0, 1]", self.p)));
        }
        if self.n == 0 {
            return Err(LabError::Config("chain length n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n + 4
    }

    /// Probability a uniform-random policy eventually reaches s_B:
    /// 1 / (2^n + 1), from the absorbing-chain recurrence.
    pub fn uniform_policy_reach_prob(&self) -> f64 {
        1.0 / (2f64.powi(self.n as i32) + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoPathState {
    A,
    /// Chain position 1..=n.
    Chain(usize),
    B,
    C,
    D,
}

impl TwoPathState {
    pub fn index(&self, n: usize) -> usize {
        match self {
            TwoPathState::A => 0,
            TwoPathState::Chain(i) => *i,
            TwoPathState::B => n + 1,
            TwoPathState::C => n + 2,
            TwoPathState::D => n + 3,
        }
    }

    pub fn terminal(&self) -> bool {
        matches!(self, TwoPathState::D)
    }
}

/// Features visible to the causal learner: f1, f2 and the step reward.
pub fn twopath_feature_spec() -> FeatureSpec {
    FeatureSpec::new(
        vec![
            ("f1".into(), 0.0, 1.0),
            ("f2".into(), 0.0, 1.0),
            ("reward".into(), 0.0, 1.0),
        ],
        vec![],
    )
    .expect("twopath feature spec is well-formed")
}

/// One transition; xi is resampled independently whenever s_B or s_C is
/// entered. Returns (next state, xi at next state, reward, done).
pub fn twopath_mdp_step(
    state: TwoPathState,
    action: usize,
    config: &TwoPathMdpConfig,
    rng: &mut ChaCha8Rng,
) -> (TwoPathState, f64, f64, bool) {
    let next = match state {
        TwoPathState::A => {
            if action == 0 {
                TwoPathState::Chain(1)
            } else {
                TwoPathState::C
            }
        }
        TwoPathState::Chain(i) => {
            if action == 0 {
                if i == config.n {
                    TwoPathState::B
                } else {
                    TwoPathState::Chain(i + 1)
                }
            } else {
                TwoPathState::A
            }
        }
        TwoPathState::B | TwoPathState::C => TwoPathState::D,
        TwoPathState::D => TwoPathState::D,
    };
    let xi = match next {
        TwoPathState::B | TwoPathState::C => {
            if rng.gen::<f64>() < config.p {
                0.0
            } else {
                1.0
            }
        }
        _ => 0.0,
    };
    let reward = match (state, next) {
        (TwoPathState::B, TwoPathState::D) | (TwoPathState::C, TwoPathState::D) => 1.0,
        _ => 0.0,
    };
    (next, xi, reward, next.terminal())
}

/// Learner features at a state given the xi drawn on entry and the reward
/// received on arrival.
pub fn twopath_features(state: TwoPathState, xi: f64, reward: f64) -> FeatureVector {
    let (f1, f2) = match state {
        TwoPathState::B => (xi, 0.0),
        TwoPathState::C => (xi, 1.0),
        _ => (0.0, 0.0),
    };
    FeatureVector::new(vec![f1, f2, reward])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn always_a1_reaches_b_after_n_plus_one_steps() {
        let config = TwoPathMdpConfig::new(4, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = TwoPathState::A;
        let mut steps = 0;
        while state != TwoPathState::B {
            let (next, _, _, _) = twopath_mdp_step(state, 0, &config, &mut rng);
            state = next;
            steps += 1;
        }
        assert_eq!(steps, config.n + 1);
    }

    #[test]
    fn a2_at_start_goes_to_c_then_reward() {
        let config = TwoPathMdpConfig::new(3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (next, _, r, done) = twopath_mdp_step(TwoPathState::A, 1, &config, &mut rng);
        assert_eq!(next, TwoPathState::C);
        assert_eq!(r, 0.0);
        assert!(!done);
        let (next, _, r, done) = twopath_mdp_step(next, 0, &config, &mut rng);
        assert_eq!(next, TwoPathState::D);
        assert_eq!(r, 1.0);
        assert!(done);
    }

    #[test]
    fn zero_noise_gives_f1_one_at_c() {
        let config = TwoPathMdpConfig::new(3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let (next, xi, _, _) = twopath_mdp_step(TwoPathState::A, 1, &config, &mut rng);
            assert_eq!(next, TwoPathState::C);
            let f = twopath_features(next, xi, 0.0);
            assert_eq!(f.values[0], 1.0);
            assert_eq!(f.values[1], 1.0);
        }
    }

    #[test]
    fn a2_on_chain_returns_to_start() {
        let config = TwoPathMdpConfig::new(3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (s1, _, _, _) = twopath_mdp_step(TwoPathState::A, 0, &config, &mut rng);
        assert_eq!(s1, TwoPathState::Chain(1));
        let (back, _, _, _) = twopath_mdp_step(s1, 1, &config, &mut rng);
        assert_eq!(back, TwoPathState::A);
    }
}
