//! Jump reward terms added when training the jump behavior.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("foot force {index} is {value}; forces must be finite and non-negative")]
    NegativeForce { index: usize, value: f64 },
    #[error("liftoff velocity must be finite")]
    NonFiniteVelocity,
}

/// Curriculum phase. Phase 1 learns to walk; phase 2 adds the jump input,
/// first with strong shaping (2a) and then with the dense term lowered (2b).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingPhase {
    Walk,
    JumpShaping,
    JumpRefine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpRewardParams<T> {
    /// m/s
    pub v_liftoff_desired: T,
    pub dense_scale: T,
    pub sparse_scale: T,
}

impl<T: Real> JumpRewardParams<T> {
    pub fn for_phase(phase: TrainingPhase) -> Self {
        let (dense, sparse) = match phase {
            TrainingPhase::Walk => (0.0, 0.0),
            TrainingPhase::JumpShaping => (-2.5, 250.0),
            TrainingPhase::JumpRefine => (-0.25, 250.0),
        };
        Self {
            v_liftoff_desired: T::lit(2.5),
            dense_scale: T::lit(dense),
            sparse_scale: T::lit(sparse),
        }
    }

    pub fn scaled_dense(&self, foot_forces: &[T; 4]) -> Result<T, RewardError> {
        Ok(self.dense_scale * dense_jump_reward(foot_forces)?)
    }

    pub fn scaled_sparse(&self, v_liftoff: T) -> Result<T, RewardError> {
        Ok(self.sparse_scale * sparse_jump_reward(v_liftoff, self)?)
    }
}

impl<T: Real> Default for JumpRewardParams<T> {
    fn default() -> Self {
        Self::for_phase(TrainingPhase::JumpShaping)
    }
}

/// Negative population standard deviation of the four foot contact forces.
pub fn dense_jump_reward<T: Real>(foot_forces: &[T; 4]) -> Result<T, RewardError> {
    if let Some((index, &value)) = foot_forces
        .iter()
        .enumerate()
        .find(|(_, f)| !(f.is_finite() && **f >= T::zero()))
    {
        return Err(RewardError::NegativeForce {
            index,
            value: value.to_f64().unwrap_or(f64::NAN),
        });
    }
    let n = T::lit(4.0);
    let mean = foot_forces.iter().copied().sum::<T>() / n;
    let var = foot_forces.iter().map(|&f| (f - mean) * (f - mean)).sum::<T>() / n;
    Ok(-var.sqrt())
}

/// Gaussian bonus `exp(-(v - v_des)² / 2)` on the liftoff velocity.
pub fn sparse_jump_reward<T: Real>(v_liftoff: T, params: &JumpRewardParams<T>) -> Result<T, RewardError> {
    if !v_liftoff.is_finite() {
        return Err(RewardError::NonFiniteVelocity);
    }
    let d = v_liftoff - params.v_liftoff_desired;
    Ok((-(d * d) / T::lit(2.0)).exp())
}
