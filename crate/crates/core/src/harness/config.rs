use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::control::{AdaptiveConfig, GainSet};
use crate::dynamics::{VehicleParams, WindField, MAX_DT};
use crate::estimator::{CameraConfig, EstimatorConfig, NoiseConfig, PadLayout};
use crate::faults::{find_scenario, FaultSpec};
use crate::mission::{MissionPlan, TouchdownConfig};
use crate::monitor::MonitorConfig;

/// Mitigation toggles. All off reproduces the unmitigated architecture.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mitigations {
    /// IR altimeter as a redundant altitude source for switching and touchdown.
    pub secondary_altitude: bool,
    /// Auxiliary markers around the primary one.
    pub multi_marker: bool,
    /// Discard detections whose id is not in the layout.
    pub tagging: bool,
    /// Reject frames that do not advance timestamp and sequence number.
    pub sequence_guard: bool,
    /// Disturbance-observer augmentation of the cascade.
    pub adaptive: bool,
    /// Doubled camera rate and single-slot processing queue.
    pub frame_rate_opt: bool,
    /// Abort before take-off if any marker is occluded.
    pub preflight_occlusion_check: bool,
    /// Abort before take-off if lighting is below the floor.
    pub lighting_gate: bool,
}

pub const MITIGATION_NAMES: [&str; 8] = [
    "secondary_altitude",
    "multi_marker",
    "tagging",
    "sequence_guard",
    "adaptive",
    "frame_rate_opt",
    "preflight_occlusion_check",
    "lighting_gate",
];

impl Mitigations {
    pub fn all() -> Self {
        MITIGATION_NAMES.iter().fold(Self::default(), |m, n| m.with(n).expect("known name"))
    }

    fn flag_mut(&mut self, name: &str) -> Option<&mut bool> {
        Some(match name {
            "secondary_altitude" => &mut self.secondary_altitude,
            "multi_marker" => &mut self.multi_marker,
            "tagging" => &mut self.tagging,
            "sequence_guard" => &mut self.sequence_guard,
            "adaptive" => &mut self.adaptive,
            "frame_rate_opt" => &mut self.frame_rate_opt,
            "preflight_occlusion_check" => &mut self.preflight_occlusion_check,
            "lighting_gate" => &mut self.lighting_gate,
            _ => return None,
        })
    }

    /// Copy with the named flag switched on.
    pub fn with(mut self, name: &str) -> Result<Self, HarnessError> {
        *self
            .flag_mut(name)
            .ok_or_else(|| HarnessError::UnknownMitigation(name.to_owned()))? = true;
        Ok(self)
    }

    pub fn union(self, other: Self) -> Self {
        let mut out = self;
        for n in other.enabled() {
            out = out.with(n).expect("known name");
        }
        out
    }

    pub fn enabled(&self) -> Vec<&'static str> {
        let mut probe = *self;
        MITIGATION_NAMES
            .iter()
            .copied()
            .filter(|n| *probe.flag_mut(n).expect("known name"))
            .collect()
    }

    /// Builds from names. Empty entries are skipped; `none` alone means no flags.
    pub fn from_names<'a, I: IntoIterator<Item = &'a str>>(names: I) -> Result<Self, HarnessError> {
        names
            .into_iter()
            .map(str::trim)
            .filter(|n| !n.is_empty() && *n != "none")
            .try_fold(Self::default(), |m, n| m.with(n))
    }
}

impl FromStr for Mitigations {
    type Err = HarnessError;

    /// Comma separated flag names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_names(s.split(','))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub seed: u64,
    /// Simulation step (s).
    pub dt: f64,
    pub max_duration: f64,
    /// Keep one sample every `decimation` ticks.
    pub decimation: usize,
    /// Bundled scenario to apply on top of inline faults.
    pub scenario: Option<String>,
    /// How long the run continues after touchdown is declared (s).
    pub post_touchdown: f64,
    /// Time on the ground after which thrust counts as post-touchdown thrust (s).
    pub ground_settle: f64,
    /// Reference-tracking error that counts as a deviation (m).
    pub deviation_limit: f64,
    /// Command age that counts as a delayed command (s).
    pub delay_limit: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed: 1,
            dt: 0.002,
            max_duration: 80.0,
            decimation: 10,
            scenario: None,
            post_touchdown: 2.0,
            ground_settle: 1.0,
            deviation_limit: 1.0,
            delay_limit: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Environment {
    pub wind: WindField,
    /// Ambient lighting in [0, 1].
    pub lighting: f64,
    /// Minimum lighting the lighting gate accepts.
    pub lighting_floor: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            wind: WindField::calm(),
            lighting: 1.0,
            lighting_floor: 0.6,
        }
    }
}

/// Everything a run needs. Serialized as TOML with one table per section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSettings,
    pub environment: Environment,
    pub mitigations: Mitigations,
    pub vehicle_params: VehicleParams,
    pub gain_set: GainSet,
    pub adaptive_config: AdaptiveConfig,
    pub noise_config: NoiseConfig,
    pub camera_config: CameraConfig,
    pub estimator_config: EstimatorConfig,
    pub pad_layout: PadLayout,
    pub mission_plan: MissionPlan,
    pub touchdown_config: TouchdownConfig,
    pub monitor_config: MonitorConfig,
    pub faults: Vec<FaultSpec>,
}

fn invalid(section: &'static str) -> impl Fn(String) -> HarnessError {
    move |reason| HarnessError::Invalid { section, reason }
}

impl RunConfig {
    /// Parses TOML; errors carry the path of the offending field.
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let de = toml::Deserializer::parse(text).map_err(|e| HarnessError::Config {
            path: String::new(),
            message: e.to_string(),
        })?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn with_scenario(mut self, id: &str) -> Self {
        self.run.scenario = Some(id.to_owned());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }

    pub fn with_mitigations(mut self, m: Mitigations) -> Self {
        self.mitigations = m;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let r = &self.run;
        if !(r.dt > 0.0 && r.dt <= MAX_DT) {
            return Err(invalid("run")(format!("dt {} outside (0, {MAX_DT}]", r.dt)));
        }
        if !(r.max_duration > 0.0 && r.max_duration.is_finite()) {
            return Err(invalid("run")(format!("max_duration must be > 0, got {}", r.max_duration)));
        }
        if r.decimation == 0 {
            return Err(invalid("run")("decimation must be at least 1".into()));
        }
        for (name, v) in [
            ("post_touchdown", r.post_touchdown),
            ("ground_settle", r.ground_settle),
            ("deviation_limit", r.deviation_limit),
            ("delay_limit", r.delay_limit),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid("run")(format!("{name} must be >= 0, got {v}")));
            }
        }
        if let Some(id) = &r.scenario {
            if find_scenario(id).is_none() {
                return Err(HarnessError::UnknownScenario(id.clone()));
            }
        }
        let e = &self.environment;
        if !(0.0..=1.0).contains(&e.lighting) || !(0.0..=1.0).contains(&e.lighting_floor) {
            return Err(invalid("environment")("lighting values must lie in [0, 1]".into()));
        }
        if !e.wind.is_finite() {
            return Err(invalid("environment")("wind must be finite".into()));
        }
        self.vehicle_params
            .validate()
            .map_err(|e| invalid("vehicle_params")(e.to_string()))?;
        self.gain_set.validate().map_err(|e| invalid("gain_set")(e.to_string()))?;
        self.noise_config.validate().map_err(invalid("noise_config"))?;
        self.camera_config.validate().map_err(invalid("camera_config"))?;
        self.estimator_config.validate().map_err(invalid("estimator_config"))?;
        self.pad_layout.validate().map_err(invalid("pad_layout"))?;
        self.mission_plan.validate().map_err(invalid("mission_plan"))?;
        self.monitor_config.validate().map_err(invalid("monitor_config"))?;
        let a = &self.adaptive_config;
        if !(a.bandwidth > 0.0 && a.max_compensation >= 0.0 && a.min_altitude >= 0.0) {
            return Err(invalid("adaptive_config")("bandwidth must be > 0 and limits >= 0".into()));
        }
        let t = &self.touchdown_config;
        if !(t.max_altitude > 0.0 && t.max_vertical_speed > 0.0 && t.hold_time >= 0.0) {
            return Err(invalid("touchdown_config")("thresholds must be > 0".into()));
        }
        for f in &self.faults {
            f.validate()?;
        }
        Ok(())
    }

    /// Scenario faults followed by inline faults.
    pub fn resolved_faults(&self) -> Result<Vec<FaultSpec>, HarnessError> {
        let mut out = match &self.run.scenario {
            Some(id) => find_scenario(id).ok_or_else(|| HarnessError::UnknownScenario(id.clone()))?.faults,
            None => Vec::new(),
        };
        out.extend(self.faults.iter().cloned());
        Ok(out)
    }

    /// Configured flags plus the scenario's defaults.
    pub fn resolved_mitigations(&self) -> Result<Mitigations, HarnessError> {
        let scenario = match &self.run.scenario {
            Some(id) => {
                find_scenario(id)
                    .ok_or_else(|| HarnessError::UnknownScenario(id.clone()))?
                    .default_mitigations
            }
            None => Mitigations::default(),
        };
        Ok(self.mitigations.union(scenario))
    }
}
