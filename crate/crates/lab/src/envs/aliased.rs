use serde::{Deserialize, Serialize};

use crate::envs::features::{FeatureSpec, FeatureVector};
use crate::error::{LabError, Result};

/// Five-state MDP whose states s1 and s2 are aliased into one observation o1,
/// so the best one-step predictor at o1 depends on the policy's choice at o0.
///
/// Transitions: from s0, action a1 goes to s1 and a2 to s2; s1 always moves to
/// s3 (observed as o2) and s2 to s4 (observed as o3); s3 and s4 are terminal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasedMdpConfig {
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AliasedState {
    S0,
    S1,
    S2,
    S3,
    S4,
}

impl AliasedState {
    /// Observation index under the aliasing o0={s0}, o1={s1,s2}, o2={s3}, o3={s4}.
    pub fn observation(&self) -> usize {
        match self {
            AliasedState::S0 => 0,
            AliasedState::S1 | AliasedState::S2 => 1,
            AliasedState::S3 => 2,
            AliasedState::S4 => 3,
        }
    }

    pub fn terminal(&self) -> bool {
        matches!(self, AliasedState::S3 | AliasedState::S4)
    }
}

pub const ALIASED_N_ACTIONS: usize = 2;
pub const ALIASED_N_OBS: usize = 4;

/// One transition. Returns (next state, done).
pub fn aliased_mdp_step(state: AliasedState, action: usize) -> (AliasedState, bool) {
    let next = match state {
        AliasedState::S0 => {
            if action == 0 {
                AliasedState::S1
            } else {
                AliasedState::S2
            }
        }
        AliasedState::S1 => AliasedState::S3,
        AliasedState::S2 => AliasedState::S4,
        terminal => terminal,
    };
    (next, next.terminal())
}

/// Feature spec: one-hot observation concatenated with one-hot action.
pub fn aliased_feature_spec() -> FeatureSpec {
    let mut base = Vec::new();
    for i in 0..ALIASED_N_OBS {
        base.push((format!("o{i}"), 0.0, 1.0));
    }
    for i in 0..ALIASED_N_ACTIONS {
        base.push((format!("a{}", i + 1), 0.0, 1.0));
    }
    FeatureSpec::new(base, vec![]).expect("aliased feature spec is well-formed")
}

/// One-hot features for an observation and the action taken there (none at
/// terminal observations).
pub fn aliased_features(obs: usize, action: Option<usize>) -> Result<FeatureVector> {
    if obs >= ALIASED_N_OBS {
        return Err(LabError::Usage(format!("observation index {obs} out of range")));
    }
    let mut v = vec![0.0; ALIASED_N_OBS + ALIASED_N_ACTIONS];
    v[obs] = 1.0;
    if let Some(a) = action {
        if a >= ALIASED_N_ACTIONS {
            return Err(LabError::Usage(format!("action index {a} out of range")));
        }
        v[ALIASED_N_OBS + a] = 1.0;
    }
    Ok(FeatureVector::new(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a1_from_s0_reaches_s1_then_s3() {
        let (s, done) = aliased_mdp_step(AliasedState::S0, 0);
        assert_eq!(s, AliasedState::S1);
        assert_eq!(s.observation(), 1);
        assert!(!done);
        let (s, done) = aliased_mdp_step(s, 1);
        assert_eq!(s, AliasedState::S3);
        assert_eq!(s.observation(), 2);
        assert!(done);
    }

    #[test]
    fn s1_and_s2_share_an_observation() {
        assert_eq!(AliasedState::S1.observation(), AliasedState::S2.observation());
    }

    #[test]
    fn any_action_from_s1_goes_to_s3() {
        for a in 0..2 {
            let (s, _) = aliased_mdp_step(AliasedState::S1, a);
            assert_eq!(s, AliasedState::S3);
        }
        for a in 0..2 {
            let (s, _) = aliased_mdp_step(AliasedState::S2, a);
            assert_eq!(s, AliasedState::S4);
        }
    }
}
