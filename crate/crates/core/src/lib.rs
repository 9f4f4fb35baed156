//! Frequency-domain identification of PD-controlled robot joints.
//!
//! A joint under PD position control behaves like a driven spring-damper whose
//! inertia includes the gear-reflected rotor inertia. This crate simulates
//! that joint under chirp excitation, estimates its Bode magnitude from the
//! logged sweep, searches the Kp × Kd grid for the simulated gains whose
//! response matches a measured one, and turns several matched pairs into
//! domain-randomization ranges. A small policy-surgery module widens a
//! network's input layer without changing its outputs, alongside the jump
//! reward terms used when retraining.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar for callers that do not care.
//!
//! ```
//! use impedance_core::{analytic_bode, grid_match, presets, FrequencyBand, GainGrid, MatchMode, PDGains};
//!
//! let params = presets::knee_params::<f64>();
//! let freqs = impedance_core::log_space(0.1, 20.0, 150);
//! let reference = analytic_bode(&params, &PDGains::new(17.0, 0.4), &freqs).unwrap();
//! let grid = GainGrid { kp_range: (15.0, 19.0), kd_range: (0.3, 0.5), kp_count: 5, kd_count: 5 };
//! let band = FrequencyBand::new(0.5, 15.0).unwrap();
//! let best = grid_match(&reference, &params, &grid, &band, MatchMode::Analytic).unwrap();
//! assert_eq!(best.best_index, (2, 2));
//! ```

pub mod actuator;
pub mod cli;
pub mod config;
pub mod excitation;
pub mod freq;
pub mod io;
pub mod matcher;
pub mod num;
pub mod plot;
pub mod presets;
pub mod reward;
pub mod surgery;

pub use actuator::{
    applied_torque, reflected_inertia, simulate_sweep, simulate_sweep_logged, step, ActuatorParams, Integrator,
    JointState, PDGains, SimConfig, SimError, SweepLog, TimeSeries, VoltageModel,
};
pub use config::{ConfigError, PipelineConfig};
pub use excitation::{chirp_signal, instantaneous_frequency, ChirpError, ChirpSpec, SweepLaw};
pub use freq::{
    analytic_bode, band_mse, band_points, estimate_frf, log_space, natural_frequency, AnalysisError, BodeMagnitude,
    FrequencyBand, WelchConfig,
};
pub use matcher::{
    check_coverage, derive_ranges, grid_match, CoverageReport, GainGrid, GainRange, GridMatcher, MatchError,
    MatchMode, MatchResult, RandomizationConfig, RandomizationRange, RangeOptions, SimulatedMatch,
};
pub use num::Real;
pub use reward::{dense_jump_reward, sparse_jump_reward, JumpRewardParams, RewardError, TrainingPhase};
pub use surgery::{widen_input_layer, MlpFirstLayer, SurgeryError};

pub type ActuatorParamsF64 = ActuatorParams<f64>;
pub type ActuatorParamsF32 = ActuatorParams<f32>;
pub type PDGainsF64 = PDGains<f64>;
pub type PDGainsF32 = PDGains<f32>;
pub type SimConfigF64 = SimConfig<f64>;
pub type SimConfigF32 = SimConfig<f32>;
pub type ChirpSpecF64 = ChirpSpec<f64>;
pub type ChirpSpecF32 = ChirpSpec<f32>;
pub type TimeSeriesF64 = TimeSeries<f64>;
pub type TimeSeriesF32 = TimeSeries<f32>;
pub type BodeMagnitudeF64 = BodeMagnitude<f64>;
pub type BodeMagnitudeF32 = BodeMagnitude<f32>;
pub type FrequencyBandF64 = FrequencyBand<f64>;
pub type FrequencyBandF32 = FrequencyBand<f32>;
pub type GainGridF64 = GainGrid<f64>;
pub type GainGridF32 = GainGrid<f32>;
pub type MatchResultF64 = MatchResult<f64>;
pub type MatchResultF32 = MatchResult<f32>;
pub type RandomizationRangeF64 = RandomizationRange<f64>;
pub type RandomizationRangeF32 = RandomizationRange<f32>;
pub type MlpFirstLayerF64 = MlpFirstLayer<f64>;
pub type MlpFirstLayerF32 = MlpFirstLayer<f32>;
pub type PipelineConfigF64 = PipelineConfig<f64>;
