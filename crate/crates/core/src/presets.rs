//! Reference plants, measured gain sets and training randomization defaults
//! for a Mini-Cheetah-class quadruped.

use serde::{Deserialize, Serialize};

use crate::actuator::{ActuatorParams, PDGains};
use crate::freq::FrequencyBand;
use crate::matcher::GainGrid;
use crate::num::Real;

/// Motor-side rotor inertia of the joint actuators (kg·m²).
pub const ROTOR_INERTIA: f64 = 0.000_072;
/// Knee transmission ratio.
pub const KNEE_GEAR_RATIO: f64 = 9.33;
/// Hip abduction and flexion transmission ratio.
pub const HIP_GEAR_RATIO: f64 = 6.0;
/// Actuator output torque limit (N·m).
pub const MAX_OUTPUT_TORQUE: f64 = 17.0;

/// Shank inertia about the knee axis with the thigh clamped (kg·m²).
pub const KNEE_LINK_INERTIA: f64 = 0.000_8;
/// Thigh and shank about the hip flexion axis (kg·m²).
pub const HIP_PITCH_LINK_INERTIA: f64 = 0.004;
/// Whole leg about the hip abduction axis (kg·m²).
pub const HIP_ROLL_LINK_INERTIA: f64 = 0.006;

/// Gains run on the hardware PD controllers.
pub const HARDWARE_KP: f64 = 17.0;
pub const HARDWARE_KD: f64 = 0.4;

/// Actuator-level PD rate (Hz).
pub const PD_LOOP_RATE: u32 = 40_000;
/// Policy / sensing rate (Hz).
pub const POLICY_RATE: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    HipRoll,
    HipPitch,
    Knee,
}

impl Joint {
    pub const ALL: [Joint; 3] = [Joint::HipRoll, Joint::HipPitch, Joint::Knee];

    pub fn params<T: Real>(self) -> ActuatorParams<T> {
        let (link, gear) = match self {
            Joint::HipRoll => (HIP_ROLL_LINK_INERTIA, HIP_GEAR_RATIO),
            Joint::HipPitch => (HIP_PITCH_LINK_INERTIA, HIP_GEAR_RATIO),
            Joint::Knee => (KNEE_LINK_INERTIA, KNEE_GEAR_RATIO),
        };
        ActuatorParams::linear(T::lit(link), T::zero(), T::lit(ROTOR_INERTIA), T::lit(gear))
    }

    /// Band the matching error is evaluated over.
    pub fn band<T: Real>(self) -> FrequencyBand<T> {
        match self {
            Joint::Knee => FrequencyBand::new_unchecked(T::lit(0.1), T::lit(15.0)),
            Joint::HipRoll | Joint::HipPitch => FrequencyBand::new_unchecked(T::one(), T::lit(10.0)),
        }
    }

    /// Matched (Kp, Kd) per leg in FR, FL, HR, HL order.
    pub fn measured_gains(self) -> [(f64, f64); 4] {
        match self {
            Joint::HipRoll => [(20.6, 0.492), (18.1, 0.516), (18.5, 0.431), (21.0, 0.49)],
            Joint::HipPitch => [(16.5, 0.382), (17.7, 0.406), (16.9, 0.382), (18.9, 0.431)],
            Joint::Knee => [(21.8, 0.541), (22.0, 0.523), (22.2, 0.553), (21.8, 0.553)],
        }
    }

    pub fn measured_pd_gains<T: Real>(self) -> Vec<PDGains<T>> {
        self.measured_gains()
            .iter()
            .map(|&(kp, kd)| PDGains::new(T::lit(kp), T::lit(kd)))
            .collect()
    }

    /// Nominal gains used for policy training.
    pub fn training_gains<T: Real>(self) -> PDGains<T> {
        let (kp, kd) = match self {
            Joint::HipRoll => (20.0, 0.45),
            Joint::HipPitch => (17.5, 0.4),
            Joint::Knee => (21.5, 0.55),
        };
        PDGains::new(T::lit(kp), T::lit(kd))
    }
}

pub fn knee_params<T: Real>() -> ActuatorParams<T> {
    Joint::Knee.params()
}

pub fn hardware_gains<T: Real>() -> PDGains<T> {
    PDGains::new(T::lit(HARDWARE_KP), T::lit(HARDWARE_KD))
}

/// 50 × 50 search over Kp 13–27 N·m/rad and Kd 0.1–0.7 N·m·s/rad.
pub fn search_grid<T: Real>() -> GainGrid<T> {
    GainGrid {
        kp_range: (T::lit(13.0), T::lit(27.0)),
        kd_range: (T::lit(0.1), T::lit(0.7)),
        kp_count: 50,
        kd_count: 50,
    }
}

/// Symmetric uniform interval `U(low, high)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uniform {
    pub low: f64,
    pub high: f64,
}

const fn u(low: f64, high: f64) -> Uniform {
    Uniform { low, high }
}

/// Domain randomization used during policy training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRandomization {
    /// Added to the commanded stiffness (N·m/rad), per joint.
    pub stiffness_offset: Uniform,
    /// Added to the commanded damping (N·m·s/rad), per joint.
    pub damping_offset: Uniform,
    pub decimation: Uniform,
    pub ground_friction: Uniform,
    /// Shank length (m), per leg.
    pub shank_length: Uniform,
    /// Added base mass (kg).
    pub base_mass_offset: Uniform,
    pub joint_position_noise: Uniform,
    pub joint_velocity_noise: Uniform,
    pub angular_velocity_noise: Uniform,
    pub projected_gravity_noise: Uniform,
}

impl Default for TrainingRandomization {
    fn default() -> Self {
        Self {
            stiffness_offset: u(-2.0, 2.0),
            damping_offset: u(-0.05, 0.05),
            decimation: u(-2.0, 2.0),
            ground_friction: u(0.05, 3.0),
            shank_length: u(0.18, 0.20),
            base_mass_offset: u(-0.4, 1.6),
            joint_position_noise: u(-0.05, 0.05),
            joint_velocity_noise: u(-0.5, 0.5),
            angular_velocity_noise: u(-0.2, 0.2),
            projected_gravity_noise: u(-0.05, 0.05),
        }
    }
}
