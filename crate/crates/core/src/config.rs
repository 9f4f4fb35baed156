//! Pipeline configuration: one JSON document with a section per module.
//!
//! Every section is optional and defaults to the knee joint at the hardware
//! gains. Unknown keys are rejected at every level.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::{ActuatorParams, PDGains, SimConfig};
use crate::excitation::ChirpSpec;
use crate::freq::{FrequencyBand, WelchConfig};
use crate::matcher::{GainGrid, MatchMode, RangeOptions, SimulatedMatch};
use crate::num::Real;
use crate::presets::{hardware_gains, knee_params, search_grid, Joint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config section `{section}`: {message}")]
    Invalid { section: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[serde(bound(deserialize = "T: Real"))]
pub struct ActuatorSimSection<T> {
    pub params: ActuatorParams<T>,
    pub gains: PDGains<T>,
    pub sim: SimConfig<T>,
}

impl<T: Real> Default for ActuatorSimSection<T> {
    fn default() -> Self {
        Self {
            params: knee_params(),
            gains: hardware_gains(),
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[serde(bound(deserialize = "T: Real"))]
pub struct ExcitationSection<T> {
    pub chirp: ChirpSpec<T>,
}

impl<T: Real> Default for ExcitationSection<T> {
    fn default() -> Self {
        Self {
            chirp: ChirpSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[serde(bound(deserialize = "T: Real"))]
pub struct FreqAnalysisSection<T> {
    pub band: FrequencyBand<T>,
    pub welch: WelchConfig<T>,
}

impl<T: Real> Default for FreqAnalysisSection<T> {
    fn default() -> Self {
        Self {
            band: Joint::Knee.band(),
            welch: WelchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Analytic,
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[serde(bound(deserialize = "T: Real"))]
pub struct MatcherSection<T> {
    pub grid: GainGrid<T>,
    pub mode: ModeName,
    pub ranges: RangeOptions<T>,
}

impl<T: Real> Default for MatcherSection<T> {
    fn default() -> Self {
        Self {
            grid: search_grid(),
            mode: ModeName::Analytic,
            ranges: RangeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[serde(bound(deserialize = "T: Real"))]
pub struct PipelineConfig<T> {
    pub actuator_sim: ActuatorSimSection<T>,
    pub excitation: ExcitationSection<T>,
    pub freq_analysis: FreqAnalysisSection<T>,
    pub matcher: MatcherSection<T>,
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            actuator_sim: ActuatorSimSection::default(),
            excitation: ExcitationSection::default(),
            freq_analysis: FreqAnalysisSection::default(),
            matcher: MatcherSection::default(),
        }
    }
}

fn section<E: std::fmt::Display>(section: &'static str) -> impl Fn(E) -> ConfigError {
    move |e| ConfigError::Invalid {
        section,
        message: e.to_string(),
    }
}

impl<T: Real> PipelineConfig<T> {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.actuator_sim;
        a.params.validate().map_err(section("actuator_sim"))?;
        a.gains.validate().map_err(section("actuator_sim"))?;
        a.sim.validate().map_err(section("actuator_sim"))?;
        self.excitation.chirp.validate().map_err(section("excitation"))?;
        self.freq_analysis.band.validate().map_err(section("freq_analysis"))?;
        self.freq_analysis.welch.validate().map_err(section("freq_analysis"))?;
        self.matcher.grid.validate().map_err(section("matcher"))?;
        self.matcher.ranges.validate().map_err(section("matcher"))?;
        Ok(())
    }

    /// The matcher mode, with simulated sweeps seeded by `seed`.
    pub fn match_mode(&self, seed: u64) -> MatchMode<T> {
        match self.matcher.mode {
            ModeName::Analytic => MatchMode::Analytic,
            ModeName::Simulated => MatchMode::Simulated(SimulatedMatch {
                chirp: self.excitation.chirp,
                sim: self.actuator_sim.sim,
                welch: self.freq_analysis.welch,
                seed,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let cfg = PipelineConfig::<f64>::from_json("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.actuator_sim.gains, PDGains::new(17.0, 0.4));
        assert_eq!(cfg.matcher.grid.kp_count, 50);
    }

    #[test]
    fn default_round_trips_through_json() {
        let cfg = PipelineConfig::<f64>::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(PipelineConfig::<f64>::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"actuator_sim": {"gain": {"kp": 1, "kd": 0}}}"#,
            r#"{"actuator_sim": {"gains": {"kp": 20, "kd": 0.4, "ki": 1}}}"#,
            r#"{"policy": {}}"#,
            r#"{"matcher": {"mode": "fast"}}"#,
        ] {
            assert!(matches!(PipelineConfig::<f64>::from_json(text), Err(ConfigError::Parse(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_name_their_section() {
        let err = PipelineConfig::<f64>::from_json(r#"{"actuator_sim": {"gains": {"kp": -1, "kd": 0.4}}}"#);
        assert!(matches!(err, Err(ConfigError::Invalid { section: "actuator_sim", .. })));
        let err = PipelineConfig::<f64>::from_json(r#"{"freq_analysis": {"band": {"f_low": 5, "f_high": 1}}}"#);
        assert!(matches!(err, Err(ConfigError::Invalid { section: "freq_analysis", .. })));
        let err = PipelineConfig::<f64>::from_json(
            r#"{"matcher": {"grid": {"kp_range": [13, 27], "kd_range": [0.1, 0.7], "kp_count": 1, "kd_count": 5}}}"#,
        );
        assert!(matches!(err, Err(ConfigError::Invalid { section: "matcher", .. })));
    }

    #[test]
    fn simulated_mode_uses_config_sections() {
        let cfg = PipelineConfig::<f64>::from_json(r#"{"matcher": {"mode": "simulated"}}"#).unwrap();
        match cfg.match_mode(9) {
            MatchMode::Simulated(s) => {
                assert_eq!(s.seed, 9);
                assert_eq!(s.chirp, cfg.excitation.chirp);
            }
            MatchMode::Analytic => panic!("expected simulated mode"),
        }
    }
}
