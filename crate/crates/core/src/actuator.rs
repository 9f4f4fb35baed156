//! Time-domain simulation of a single PD-controlled geared joint.
//!
//! The linear core is the closed-loop second-order model
//! `I θ̈ + (Kd + b) θ̇ + Kp θ = Kp θ_des + Kd θ̇_des`, where `I` includes the
//! rotor inertia reflected through the gearbox. Torque limits, a back-emf
//! voltage envelope and Coulomb friction can be layered on top; all of them
//! are off by default.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::excitation::{ChirpError, ChirpSpec};
use crate::num::{abs, Real};

/// Regularization width of the Coulomb friction `tanh` (rad/s).
pub const DRY_FRICTION_EPSILON: f64 = 1e-3;

/// Divergence threshold as a multiple of the excitation amplitude.
pub const DIVERGENCE_FACTOR: f64 = 100.0;

/// Minimum ratio of inner-loop rate to the highest chirp frequency.
pub const MIN_RATE_TO_FREQUENCY: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid actuator parameters: {0}")]
    InvalidParams(String),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Chirp(#[from] ChirpError),
    #[error("non-finite {what} at sample {sample:?}")]
    NonFinite {
        what: &'static str,
        sample: Option<usize>,
    },
    #[error("simulation diverged at t = {time:.6} s: |theta| = {theta:e} rad exceeds {limit:e} rad")]
    Divergence { time: f64, theta: f64, limit: f64 },
}

impl SimError {
    fn at_sample(self, i: usize) -> Self {
        match self {
            SimError::NonFinite { what, .. } => SimError::NonFinite {
                what,
                sample: Some(i),
            },
            other => other,
        }
    }
}

/// Linear back-emf model of the motor's voltage-limited torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoltageModel<T> {
    /// Motor-side torque constant k_t (N·m/A); equal to the back-emf constant in SI units.
    pub torque_constant: T,
    /// Ω
    pub winding_resistance: T,
    /// V
    pub bus_voltage: T,
}

/// Physical parameters of one joint and its actuator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Real"))]
pub struct ActuatorParams<T> {
    /// Link inertia about the joint axis (kg·m²).
    pub link_inertia: T,
    /// Viscous friction b (N·m·s/rad).
    pub viscous_friction: T,
    /// Rotor inertia on the motor side of the gearbox (kg·m²).
    pub rotor_inertia: T,
    pub gear_ratio: T,
    /// Output torque limit (N·m); `None` means unlimited.
    #[serde(default)]
    pub torque_limit: Option<T>,
    /// Coulomb friction magnitude (N·m).
    #[serde(default)]
    pub dry_friction: T,
    #[serde(default)]
    pub voltage_model: Option<VoltageModel<T>>,
}

impl<T: Real> ActuatorParams<T> {
    /// Linear plant without limits or Coulomb friction.
    pub fn linear(link_inertia: T, viscous_friction: T, rotor_inertia: T, gear_ratio: T) -> Self {
        Self {
            link_inertia,
            viscous_friction,
            rotor_inertia,
            gear_ratio,
            torque_limit: None,
            dry_friction: T::zero(),
            voltage_model: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidParams(msg));
        let fields = [
            ("link_inertia", self.link_inertia),
            ("viscous_friction", self.viscous_friction),
            ("rotor_inertia", self.rotor_inertia),
            ("gear_ratio", self.gear_ratio),
            ("dry_friction", self.dry_friction),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("{name} is not finite"));
        }
        if self.link_inertia <= T::zero() {
            return bad(format!("link_inertia must be > 0, got {}", self.link_inertia));
        }
        if self.viscous_friction < T::zero() {
            return bad(format!("viscous_friction must be >= 0, got {}", self.viscous_friction));
        }
        if self.rotor_inertia < T::zero() {
            return bad(format!("rotor_inertia must be >= 0, got {}", self.rotor_inertia));
        }
        if self.gear_ratio < T::one() {
            return bad(format!("gear_ratio must be >= 1, got {}", self.gear_ratio));
        }
        if self.dry_friction < T::zero() {
            return bad(format!("dry_friction must be >= 0, got {}", self.dry_friction));
        }
        if let Some(limit) = self.torque_limit {
            if !(limit.is_finite() && limit > T::zero()) {
                return bad(format!("torque_limit must be finite and > 0, got {limit}"));
            }
        }
        if let Some(v) = &self.voltage_model {
            let ok = [v.torque_constant, v.winding_resistance, v.bus_voltage]
                .iter()
                .all(|x| x.is_finite() && *x > T::zero());
            if !ok {
                return bad("voltage_model fields must be finite and > 0".into());
            }
        }
        let inertia = self.total_inertia();
        if !(inertia.is_finite() && inertia > T::zero()) {
            return bad("total inertia is not positive".into());
        }
        Ok(())
    }

    /// Rotor inertia seen at the joint: `J_r · N²`.
    pub fn reflected_inertia(&self) -> T {
        self.rotor_inertia * self.gear_ratio * self.gear_ratio
    }

    /// Link inertia plus reflected rotor inertia (the armature term).
    pub fn total_inertia(&self) -> T {
        self.link_inertia + self.reflected_inertia()
    }

    /// Copy of these parameters with the rotor inertia removed.
    pub fn without_armature(&self) -> Self {
        Self {
            rotor_inertia: T::zero(),
            ..*self
        }
    }
}

/// Free-function form of [`ActuatorParams::reflected_inertia`].
pub fn reflected_inertia<T: Real>(params: &ActuatorParams<T>) -> T {
    params.reflected_inertia()
}

/// Joint-level proportional/derivative feedback gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PDGains<T> {
    /// N·m/rad
    pub kp: T,
    /// N·m·s/rad
    pub kd: T,
}

impl<T: Real> PDGains<T> {
    pub fn new(kp: T, kd: T) -> Self {
        Self { kp, kd }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.kp.is_finite() && self.kp > T::zero()) {
            return Err(SimError::InvalidGains(format!("kp must be finite and > 0, got {}", self.kp)));
        }
        if !(self.kd.is_finite() && self.kd >= T::zero()) {
            return Err(SimError::InvalidGains(format!("kd must be finite and >= 0, got {}", self.kd)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Velocity update first, then position with the new velocity.
    #[default]
    SemiImplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[serde(bound(deserialize = "T: Real"))]
pub struct SimConfig<T> {
    /// PD loop rate (Hz).
    pub inner_loop_rate: u32,
    /// Output sampling rate (Hz).
    pub log_rate: u32,
    pub integrator: Integrator,
    /// (θ₀ rad, θ̇₀ rad/s)
    pub initial_state: (T, T),
    /// Std of Gaussian noise added to the measured channel (rad).
    pub measurement_noise_std: T,
    /// Feed the chirp's analytic velocity into the D term.
    pub velocity_feedforward: bool,
}

impl<T: Real> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            inner_loop_rate: 40_000,
            log_rate: 1_000,
            integrator: Integrator::SemiImplicitEuler,
            initial_state: (T::zero(), T::zero()),
            measurement_noise_std: T::zero(),
            velocity_feedforward: true,
        }
    }
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.inner_loop_rate == 0 || self.log_rate == 0 {
            return bad("rates must be positive".into());
        }
        if !self.inner_loop_rate.is_multiple_of(self.log_rate) {
            return bad(format!(
                "inner_loop_rate {} is not an integer multiple of log_rate {}",
                self.inner_loop_rate, self.log_rate
            ));
        }
        if !(self.initial_state.0.is_finite() && self.initial_state.1.is_finite()) {
            return bad("initial_state is not finite".into());
        }
        if !(self.measurement_noise_std.is_finite() && self.measurement_noise_std >= T::zero()) {
            return bad(format!(
                "measurement_noise_std must be finite and >= 0, got {}",
                self.measurement_noise_std
            ));
        }
        Ok(())
    }

    pub fn dt(&self) -> T {
        T::one() / T::lit(self.inner_loop_rate as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointState<T> {
    /// rad
    pub theta: T,
    /// rad/s
    pub theta_dot: T,
}

impl<T: Real> JointState<T> {
    pub fn new(theta: T, theta_dot: T) -> Self {
        Self { theta, theta_dot }
    }
}

/// Sampled command and measurement channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T> {
    /// Hz
    pub sample_rate: T,
    /// θ_des (rad)
    pub command: Vec<T>,
    /// θ (rad)
    pub measured: Vec<T>,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(sample_rate: T, command: Vec<T>, measured: Vec<T>) -> Result<Self, SimError> {
        let ts = Self {
            sample_rate,
            command,
            measured,
        };
        ts.validate()?;
        Ok(ts)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.sample_rate.is_finite() && self.sample_rate > T::zero()) {
            return Err(SimError::InvalidConfig(format!(
                "sample_rate must be > 0, got {}",
                self.sample_rate
            )));
        }
        if self.command.len() != self.measured.len() {
            return Err(SimError::InvalidConfig(format!(
                "channel lengths differ: command {} vs measured {}",
                self.command.len(),
                self.measured.len()
            )));
        }
        if self.command.len() < 2 {
            return Err(SimError::InvalidConfig("time series needs at least 2 samples".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.command.len()
    }

    pub fn is_empty(&self) -> bool {
        self.command.is_empty()
    }

    /// Time stamp of sample `k` (s).
    pub fn time(&self, k: usize) -> T {
        T::from_index(k) / self.sample_rate
    }

    /// Keeps every `factor`-th sample, starting with the first.
    pub fn decimate(&self, factor: usize) -> Result<Self, SimError> {
        if factor == 0 {
            return Err(SimError::InvalidConfig("decimation factor must be >= 1".into()));
        }
        Self::new(
            self.sample_rate / T::from_index(factor),
            self.command.iter().step_by(factor).copied().collect(),
            self.measured.iter().step_by(factor).copied().collect(),
        )
    }
}

/// Validated plant with the per-step constants folded in.
#[derive(Debug, Clone, Copy)]
struct Plant<T> {
    params: ActuatorParams<T>,
    gains: PDGains<T>,
    inv_inertia: T,
    friction_eps: T,
}

impl<T: Real> Plant<T> {
    fn new(params: &ActuatorParams<T>, gains: &PDGains<T>) -> Result<Self, SimError> {
        params.validate()?;
        gains.validate()?;
        Ok(Self {
            params: *params,
            gains: *gains,
            inv_inertia: T::one() / params.total_inertia(),
            friction_eps: T::lit(DRY_FRICTION_EPSILON),
        })
    }

    /// Output torque after the PD law, voltage envelope and torque limit.
    fn applied_torque(&self, state: &JointState<T>, theta_des: T, theta_dot_des: T) -> T {
        let g = &self.gains;
        let mut tau = g.kp * (theta_des - state.theta) + g.kd * (theta_dot_des - state.theta_dot);
        if let Some(v) = &self.params.voltage_model {
            // joint torque = N·k_t·i, motor speed = N·θ̇
            let n = self.params.gear_ratio;
            let emf = v.torque_constant * n * state.theta_dot;
            let scale = n * v.torque_constant / v.winding_resistance;
            let upper = scale * (v.bus_voltage - emf);
            let lower = scale * (-v.bus_voltage - emf);
            tau = tau.max(lower).min(upper);
        }
        if let Some(limit) = self.params.torque_limit {
            tau = tau.max(-limit).min(limit);
        }
        tau
    }

    fn step(&self, state: &JointState<T>, theta_des: T, theta_dot_des: T, dt: T) -> (JointState<T>, T) {
        let tau = self.applied_torque(state, theta_des, theta_dot_des);
        let mut net = tau - self.params.viscous_friction * state.theta_dot;
        if self.params.dry_friction > T::zero() {
            net = net - self.params.dry_friction * (state.theta_dot / self.friction_eps).tanh();
        }
        let theta_dot = state.theta_dot + dt * net * self.inv_inertia;
        let theta = state.theta + dt * theta_dot;
        (JointState { theta, theta_dot }, tau)
    }
}

fn check_finite<T: Real>(values: &[(&'static str, T)]) -> Result<(), SimError> {
    match values.iter().find(|(_, v)| !v.is_finite()) {
        Some((what, _)) => Err(SimError::NonFinite { what, sample: None }),
        None => Ok(()),
    }
}

/// Torque the actuator delivers for this state and set-point, before friction.
pub fn applied_torque<T: Real>(
    state: &JointState<T>,
    theta_des: T,
    theta_dot_des: T,
    params: &ActuatorParams<T>,
    gains: &PDGains<T>,
) -> Result<T, SimError> {
    let plant = Plant::new(params, gains)?;
    check_finite(&[
        ("theta", state.theta),
        ("theta_dot", state.theta_dot),
        ("theta_des", theta_des),
        ("theta_dot_des", theta_dot_des),
    ])?;
    Ok(plant.applied_torque(state, theta_des, theta_dot_des))
}

/// Advances the joint by one semi-implicit Euler step of length `dt`.
pub fn step<T: Real>(
    state: &JointState<T>,
    theta_des: T,
    theta_dot_des: T,
    params: &ActuatorParams<T>,
    gains: &PDGains<T>,
    dt: T,
) -> Result<JointState<T>, SimError> {
    let plant = Plant::new(params, gains)?;
    check_finite(&[
        ("theta", state.theta),
        ("theta_dot", state.theta_dot),
        ("theta_des", theta_des),
        ("theta_dot_des", theta_dot_des),
        ("dt", dt),
    ])?;
    if dt <= T::zero() {
        return Err(SimError::InvalidConfig(format!("dt must be > 0, got {dt}")));
    }
    let (next, _) = plant.step(state, theta_des, theta_dot_des, dt);
    check_finite(&[("theta", next.theta), ("theta_dot", next.theta_dot)])?;
    Ok(next)
}

/// A sweep together with the actuator torque it required.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepLog<T> {
    pub series: TimeSeries<T>,
    /// Applied torque at each log instant (N·m).
    pub applied_torque: Vec<T>,
    /// Largest |applied torque| over every inner-loop step (N·m).
    pub peak_abs_torque: T,
}

/// Runs the PD loop over the whole chirp and logs command and measurement.
pub fn simulate_sweep<T: Real>(
    params: &ActuatorParams<T>,
    gains: &PDGains<T>,
    chirp: &ChirpSpec<T>,
    sim: &SimConfig<T>,
    seed: u64,
) -> Result<TimeSeries<T>, SimError> {
    simulate_sweep_logged(params, gains, chirp, sim, seed).map(|log| log.series)
}

/// [`simulate_sweep`] that also reports the applied torque.
pub fn simulate_sweep_logged<T: Real>(
    params: &ActuatorParams<T>,
    gains: &PDGains<T>,
    chirp: &ChirpSpec<T>,
    sim: &SimConfig<T>,
    seed: u64,
) -> Result<SweepLog<T>, SimError> {
    let plant = Plant::new(params, gains)?;
    chirp.validate()?;
    sim.validate()?;
    let inner_rate = T::lit(sim.inner_loop_rate as f64);
    if inner_rate < T::lit(MIN_RATE_TO_FREQUENCY) * chirp.f_end {
        return Err(SimError::InvalidConfig(format!(
            "inner_loop_rate {} Hz is below {}x the chirp end frequency {} Hz",
            sim.inner_loop_rate, MIN_RATE_TO_FREQUENCY, chirp.f_end
        )));
    }

    let ratio = (sim.inner_loop_rate / sim.log_rate) as usize;
    let log_rate = T::lit(sim.log_rate as f64);
    let n_intervals = (chirp.duration * log_rate + T::lit(1e-9))
        .floor()
        .to_usize()
        .ok_or_else(|| SimError::InvalidConfig("sweep too long".into()))?;
    if n_intervals == 0 {
        return Err(SimError::InvalidConfig(
            "chirp duration shorter than one log interval".into(),
        ));
    }
    let dt = sim.dt();

    let mut state = JointState::new(sim.initial_state.0, sim.initial_state.1);
    let limit = T::lit(DIVERGENCE_FACTOR) * chirp.amplitude.max(abs(state.theta));
    let check_divergence = limit > T::zero();

    let mut command = Vec::with_capacity(n_intervals + 1);
    let mut measured = Vec::with_capacity(n_intervals + 1);
    let mut torque_log = Vec::with_capacity(n_intervals + 1);
    let mut peak = T::zero();

    let setpoint = |t: T| -> Result<(T, T), SimError> {
        let (pos, vel) = chirp.sample(t.min(chirp.duration))?;
        Ok(if sim.velocity_feedforward {
            (pos, vel)
        } else {
            (pos, T::zero())
        })
    };

    for k in 0..=n_intervals {
        let i0 = k * ratio;
        let t0 = T::from_index(i0) / inner_rate;
        let (pos, vel) = setpoint(t0)?;
        command.push(pos);
        measured.push(state.theta);
        torque_log.push(plant.applied_torque(&state, pos, vel));
        if k == n_intervals {
            break;
        }
        for s in 0..ratio {
            let i = i0 + s;
            let t = T::from_index(i) / inner_rate;
            let (pos, vel) = if s == 0 { (pos, vel) } else { setpoint(t)? };
            let (next, tau) = plant.step(&state, pos, vel, dt);
            check_finite(&[("theta", next.theta), ("theta_dot", next.theta_dot)])
                .map_err(|e| e.at_sample(i + 1))?;
            peak = peak.max(abs(tau));
            state = next;
            if check_divergence && abs(state.theta) > limit {
                return Err(SimError::Divergence {
                    time: (T::from_index(i + 1) / inner_rate).as_f64(),
                    theta: state.theta.as_f64(),
                    limit: limit.as_f64(),
                });
            }
        }
    }

    if sim.measurement_noise_std > T::zero() {
        let normal = Normal::new(0.0, sim.measurement_noise_std.as_f64())
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in measured.iter_mut() {
            *m = *m + T::lit(normal.sample(&mut rng));
        }
    }

    Ok(SweepLog {
        series: TimeSeries::new(log_rate, command, measured)?,
        applied_torque: torque_log,
        peak_abs_torque: peak,
    })
}
