//! Shaped reward terms and the staged curriculum that composes them.
//!
//! Three terms drive the task: `r1` pulls the grapple toward the log, `r2`
//! rewards lifting the log and bringing it over the unload point, and `r3`
//! rewards arriving at the bed target with low vertical speed. The weight
//! `b` scales `r2` linearly and `r3` cubically.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, RewardError};

/// `1 / (1 + d^2)`: bounded in (0, 1], equal to 1 only at zero distance.
pub fn proximity_score(d: f64) -> f64 {
    1.0 / (1.0 + d * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gating {
    /// `b = w` everywhere.
    Constant,
    /// `b = w` while the log is held, otherwise 0.
    AttachGated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub weight: f64,
    /// Regularizer added to `|v_z|` in the `r3` denominator, m/s.
    pub epsilon_v: f64,
    pub gating: Gating,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.weight > 0.0) || !self.weight.is_finite() {
            return Err(ConfigError::invalid("reward.weight", "must be positive"));
        }
        if !(self.epsilon_v > 0.0) {
            return Err(ConfigError::invalid("reward.epsilon_v", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    /// Stage-dependent sum; the full `r1 + r2 + r3` unless a curriculum stage
    /// says otherwise.
    pub total: f64,
}

impl RewardTerms {
    pub fn new(r1: f64, r2: f64, r3: f64) -> Self {
        RewardTerms {
            r1,
            r2,
            r3,
            total: r1 + r2 + r3,
        }
    }
}

/// The quantities the reward terms read from a world state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    /// ‖p_l − p_gb‖
    pub d_log_grapple: f64,
    /// ‖p_l − p_unl‖
    pub d_log_unload: f64,
    /// ‖p_l − p_tgt‖
    pub d_log_target: f64,
    pub log_z: f64,
    pub log_vz: f64,
    pub attached: bool,
}

pub fn gating_factor(attached: bool, config: &RewardConfig) -> f64 {
    match config.gating {
        Gating::Constant => config.weight,
        Gating::AttachGated if attached => config.weight,
        Gating::AttachGated => 0.0,
    }
}

pub fn reward_r1(d_log_grapple: f64) -> f64 {
    proximity_score(d_log_grapple)
}

pub fn reward_r2(log_z: f64, d_log_unload: f64, b: f64) -> f64 {
    log_z + proximity_score(d_log_unload) * b
}

/// Target proximity squared over vertical speed, with `|v_z| + ε` in place of
/// the raw (sign-changing, singular) velocity.
pub fn reward_r3(d_log_target: f64, log_vz: f64, b: f64, epsilon_v: f64) -> f64 {
    let x = proximity_score(d_log_target);
    x * x * b * b * b / (log_vz.abs() + epsilon_v)
}

pub fn reward_terms(inputs: &RewardInputs, config: &RewardConfig) -> RewardTerms {
    let b = gating_factor(inputs.attached, config);
    RewardTerms::new(
        reward_r1(inputs.d_log_grapple),
        reward_r2(inputs.log_z, inputs.d_log_unload, b),
        reward_r3(inputs.d_log_target, inputs.log_vz, b, config.epsilon_v),
    )
}

// ---------------------------------------------------------------------------
// Curriculum

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Arrangement {
    /// r1 | r2 | r3
    Separate,
    /// r1r2 | r3
    GraspThenPlace,
    /// r1 | r2r3
    ReachThenRest,
    /// r1r2r3
    Flat,
}

impl Arrangement {
    pub const ALL: [Arrangement; 4] = [
        Arrangement::Separate,
        Arrangement::GraspThenPlace,
        Arrangement::ReachThenRest,
        Arrangement::Flat,
    ];

    pub fn stage_count(self) -> usize {
        match self {
            Arrangement::Separate => 3,
            Arrangement::GraspThenPlace | Arrangement::ReachThenRest => 2,
            Arrangement::Flat => 1,
        }
    }

    /// Compact label in the `r1r2+r3` style.
    pub fn label(self) -> &'static str {
        match self {
            Arrangement::Separate => "r1+r2+r3",
            Arrangement::GraspThenPlace => "r1r2+r3",
            Arrangement::ReachThenRest => "r1+r2r3",
            Arrangement::Flat => "r1r2r3",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arrangement::Separate => "SEPARATE",
            Arrangement::GraspThenPlace => "GRASP_THEN_PLACE",
            Arrangement::ReachThenRest => "REACH_THEN_REST",
            Arrangement::Flat => "FLAT",
        }
    }

    /// Fraction of the total epoch budget spent in each stage.
    pub fn budget_fractions(self) -> &'static [f64] {
        match self {
            Arrangement::Separate => &[0.3, 0.3, 0.4],
            Arrangement::GraspThenPlace | Arrangement::ReachThenRest => &[0.3, 0.7],
            Arrangement::Flat => &[1.0],
        }
    }

    /// Split `total` epochs over the stages; the budgets sum to `total`.
    pub fn split_budget(self, total: u32) -> Vec<u32> {
        let fr = self.budget_fractions();
        let mut out: Vec<u32> = fr[..fr.len() - 1]
            .iter()
            .map(|f| ((total as f64) * f).round().max(1.0) as u32)
            .collect();
        let used: u32 = out.iter().sum();
        out.push(total.saturating_sub(used).max(1));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumConfig {
    pub arrangement: Arrangement,
    pub stage_epochs: Vec<u32>,
}

impl CurriculumConfig {
    pub fn new(arrangement: Arrangement, stage_epochs: Vec<u32>) -> Self {
        CurriculumConfig {
            arrangement,
            stage_epochs,
        }
    }

    pub fn with_total(arrangement: Arrangement, total: u32) -> Self {
        Self::new(arrangement, arrangement.split_budget(total))
    }

    pub fn total_epochs(&self) -> u32 {
        self.stage_epochs.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let want = self.arrangement.stage_count();
        if self.stage_epochs.len() != want {
            return Err(ConfigError::invalid(
                "curriculum.stage_epochs",
                format!(
                    "{} needs {want} stage budget(s), got {}",
                    self.arrangement.name(),
                    self.stage_epochs.len()
                ),
            ));
        }
        if self.stage_epochs.contains(&0) {
            return Err(ConfigError::invalid(
                "curriculum.stage_epochs",
                "budgets must be positive",
            ));
        }
        Ok(())
    }
}

/// Reward for `stage` of `arrangement`. Every arrangement's last stage is the
/// full `r1 + r2 + r3`.
pub fn stage_reward(
    terms: &RewardTerms,
    arrangement: Arrangement,
    stage: usize,
) -> Result<f64, RewardError> {
    let stages = arrangement.stage_count();
    if stage >= stages {
        return Err(RewardError::InvalidStage { stage, stages });
    }
    let RewardTerms { r1, r2, r3, .. } = *terms;
    let full = r1 + r2 + r3;
    Ok(match (arrangement, stage) {
        (Arrangement::Separate, 0) => r1,
        (Arrangement::Separate, 1) => r1 + r2,
        (Arrangement::GraspThenPlace, 0) => r1 + r2,
        (Arrangement::ReachThenRest, 0) => r1,
        _ => full,
    })
}

/// Progress through the curriculum, tracking the best snapshot of the
/// current stage by mean return.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState<C> {
    pub current_stage: usize,
    pub epochs_in_stage: u32,
    pub best_return: f64,
    pub best_checkpoint: Option<C>,
}

impl<C> Default for StageState<C> {
    fn default() -> Self {
        StageState {
            current_stage: 0,
            epochs_in_stage: 0,
            best_return: f64::NEG_INFINITY,
            best_checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTransition<C> {
    pub from_stage: usize,
    pub to_stage: usize,
    pub best_return: f64,
    /// Best snapshot of the completed stage, to continue training from.
    pub restore: Option<C>,
}

/// Record one finished epoch. When the stage budget runs out, moves to the
/// next stage and hands back the completed stage's best snapshot.
pub fn advance_stage<C: Clone>(
    mut state: StageState<C>,
    curriculum: &CurriculumConfig,
    mean_return: f64,
    current: &C,
) -> (StageState<C>, Option<StageTransition<C>>) {
    state.epochs_in_stage += 1;
    if mean_return > state.best_return || state.best_checkpoint.is_none() {
        state.best_return = mean_return;
        state.best_checkpoint = Some(current.clone());
    }
    let last = curriculum.arrangement.stage_count() - 1;
    let budget = curriculum.stage_epochs[state.current_stage];
    if state.current_stage < last && state.epochs_in_stage >= budget {
        let transition = StageTransition {
            from_stage: state.current_stage,
            to_stage: state.current_stage + 1,
            best_return: state.best_return,
            restore: state.best_checkpoint.take(),
        };
        let next = StageState {
            current_stage: state.current_stage + 1,
            ..StageState::default()
        };
        return (next, Some(transition));
    }
    (state, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(gating: Gating, weight: f64) -> RewardConfig {
        RewardConfig {
            weight,
            epsilon_v: 0.1,
            gating,
        }
    }

    #[test]
    fn proximity_values() {
        assert_eq!(proximity_score(0.0), 1.0);
        assert_eq!(proximity_score(1.0), 0.5);
        assert_eq!(proximity_score(3.0), 0.1);
    }

    #[test]
    fn gating_modes() {
        assert_eq!(gating_factor(false, &cfg(Gating::Constant, 10.0)), 10.0);
        assert_eq!(gating_factor(true, &cfg(Gating::Constant, 10.0)), 10.0);
        assert_eq!(gating_factor(false, &cfg(Gating::AttachGated, 5.0)), 0.0);
        assert_eq!(gating_factor(true, &cfg(Gating::AttachGated, 5.0)), 5.0);
    }

    #[test]
    fn r1_examples() {
        assert_eq!(reward_r1(0.0), 1.0);
        assert_eq!(reward_r1(2.0), 0.2);
        assert!(reward_r1(0.5) > reward_r1(1.5));
    }

    #[test]
    fn r2_examples() {
        // Ground log, unload point ~5 m away, detached.
        let r2 = reward_r2(0.15, 1e6, 0.0);
        assert!((r2 - 0.15).abs() < 1e-12);
        assert_eq!(reward_r2(2.5, 0.0, 10.0), 12.5);
    }

    #[test]
    fn r3_examples() {
        assert!((reward_r3(0.0, 0.0, 1.0, 0.1) - 10.0).abs() < 1e-12);
        assert_eq!(reward_r3(0.0, 0.0, 0.0, 0.1), 0.0);
        assert!(reward_r3(0.3, -0.4, 2.0, 0.1) < reward_r3(0.3, -0.2, 2.0, 0.1));
        assert!(reward_r3(0.0, f64::MAX, 10.0, 0.1).is_finite());
    }

    #[test]
    fn stage_reward_examples() {
        let t = RewardTerms::new(0.5, 2.0, 7.0);
        assert_eq!(stage_reward(&t, Arrangement::GraspThenPlace, 0).unwrap(), 2.5);
        assert_eq!(stage_reward(&t, Arrangement::Flat, 0).unwrap(), 9.5);
        assert_eq!(stage_reward(&t, Arrangement::Separate, 0).unwrap(), 0.5);
        assert_eq!(stage_reward(&t, Arrangement::Separate, 1).unwrap(), 2.5);
        assert_eq!(stage_reward(&t, Arrangement::ReachThenRest, 0).unwrap(), 0.5);
        for a in Arrangement::ALL {
            let last = a.stage_count() - 1;
            assert_eq!(stage_reward(&t, a, last).unwrap(), 9.5);
        }
        assert!(matches!(
            stage_reward(&t, Arrangement::Flat, 1),
            Err(RewardError::InvalidStage { stage: 1, stages: 1 })
        ));
    }

    #[test]
    fn advance_at_budget_boundary_restores_best() {
        let c = CurriculumConfig::new(Arrangement::GraspThenPlace, vec![300, 700]);
        let mut s: StageState<u32> = StageState::default();
        for epoch in 1..300u32 {
            // Best return at epoch 120.
            let ret = if epoch == 120 { 100.0 } else { epoch as f64 * 0.01 };
            let (next, t) = advance_stage(s, &c, ret, &epoch);
            assert!(t.is_none());
            s = next;
        }
        assert_eq!(s.epochs_in_stage, 299);
        let (next, t) = advance_stage(s, &c, 0.0, &300);
        let t = t.expect("transition at 300");
        assert_eq!((t.from_stage, t.to_stage), (0, 1));
        assert_eq!(t.restore, Some(120));
        assert_eq!(next.current_stage, 1);
        assert_eq!(next.epochs_in_stage, 0);
        assert_eq!(c.total_epochs(), 1000);
    }

    #[test]
    fn flat_never_advances() {
        let c = CurriculumConfig::new(Arrangement::Flat, vec![5]);
        let mut s: StageState<()> = StageState::default();
        for _ in 0..50 {
            let (next, t) = advance_stage(s, &c, 1.0, &());
            assert!(t.is_none());
            s = next;
        }
        assert_eq!(s.current_stage, 0);
    }

    #[test]
    fn budget_split_sums_to_total() {
        for a in Arrangement::ALL {
            for total in [1u32, 3, 10, 60, 600, 1000] {
                let b = a.split_budget(total);
                assert_eq!(b.len(), a.stage_count());
                if total as usize >= a.stage_count() {
                    assert_eq!(b.iter().sum::<u32>(), total, "{a:?} {total}");
                }
            }
        }
        assert_eq!(Arrangement::GraspThenPlace.split_budget(1000), vec![300, 700]);
        assert_eq!(Arrangement::GraspThenPlace.split_budget(60), vec![18, 42]);
    }

    #[test]
    fn curriculum_validation() {
        assert!(CurriculumConfig::new(Arrangement::Separate, vec![1, 2]).validate().is_err());
        assert!(CurriculumConfig::new(Arrangement::Flat, vec![0]).validate().is_err());
        assert!(CurriculumConfig::new(Arrangement::Flat, vec![4]).validate().is_ok());
    }
}
