//! Runtime checks of the system-level constraints against ground truth.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::RigidBodyState;
use crate::mission::{MissionPhase, PhaseKind};
use crate::stpa::{ModelError, TraceabilityGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub position: [f64; 3],
    /// Minimum allowed distance (m).
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intruder {
    /// `(time, position)` waypoints, linearly interpolated and held at the ends.
    pub track: Vec<(f64, [f64; 3])>,
    pub separation: f64,
}

impl Intruder {
    pub fn position_at(&self, t: f64) -> Option<Vector3<f64>> {
        let first = self.track.first()?;
        if t <= first.0 {
            return Some(Vector3::from(first.1));
        }
        for w in self.track.windows(2) {
            let ((t0, p0), (t1, p1)) = (w[0], w[1]);
            if t <= t1 {
                let a = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                return Some(Vector3::from(p0).lerp(&Vector3::from(p1), a));
            }
        }
        self.track.last().map(|(_, p)| Vector3::from(*p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    pub geofence_min: [f64; 3],
    pub geofence_max: [f64; 3],
    pub landing_center: [f64; 3],
    pub landing_radius: f64,
    pub obstacles: Vec<Obstacle>,
    pub intruder: Option<Intruder>,
    pub max_tilt: f64,
    pub max_rate: f64,
    pub min_duration: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            geofence_min: [-20.0, -20.0, -1.0],
            geofence_max: [20.0, 20.0, 25.0],
            landing_center: [0.0; 3],
            landing_radius: 1.0,
            obstacles: vec![Obstacle {
                position: [8.0, -6.0, 3.0],
                clearance: 2.0,
            }],
            intruder: None,
            max_tilt: 60f64.to_radians(),
            max_rate: 6.0,
            min_duration: 10.0,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), String> {
        for i in 0..3 {
            if !(self.geofence_min[i] < self.geofence_max[i]) {
                return Err("geofence_min must be below geofence_max on every axis".into());
            }
        }
        let pos = |n: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{n} must be > 0, got {v}"))
            }
        };
        pos("landing_radius", self.landing_radius)?;
        pos("max_tilt", self.max_tilt)?;
        pos("max_rate", self.max_rate)?;
        pos("min_duration", self.min_duration)?;
        for o in &self.obstacles {
            pos("obstacle clearance", o.clearance)?;
        }
        if let Some(i) = &self.intruder {
            pos("intruder separation", i.separation)?;
            if i.track.is_empty() {
                return Err("intruder track needs at least one waypoint".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub time: f64,
    pub constraint: String,
    pub hazard: String,
    /// `None` when there is nothing to measure (no touchdown at all).
    pub measured: Option<f64>,
    pub limit: f64,
    pub detail: String,
}

/// Hazard each constraint guards against.
pub fn hazard_for(constraint: &str) -> Option<&'static str> {
    Some(match constraint {
        "SC-1" => "H-1",
        "SC-2" => "H-2",
        "SC-3" => "H-3",
        "SC-4" => "H-4",
        "SC-5" => "H-5",
        "SC-6" => "H-6",
        _ => return None,
    })
}

fn violation(time: f64, constraint: &str, measured: Option<f64>, limit: f64, detail: String) -> Violation {
    Violation {
        time,
        constraint: constraint.into(),
        hazard: hazard_for(constraint).expect("known constraint").into(),
        measured,
        limit,
        detail,
    }
}

/// Per-tick checks for SC-1, SC-2, SC-3 and SC-6.
pub fn check_step(truth: &RigidBodyState, _phase: &MissionPhase, cfg: &MonitorConfig, t: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let p = truth.position;

    let closest = cfg
        .obstacles
        .iter()
        .map(|o| ((p - Vector3::from(o.position)).norm(), o))
        .filter(|(d, o)| *d < o.clearance)
        .min_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((d, o)) = closest {
        out.push(violation(t, "SC-1", Some(d), o.clearance, format!("obstacle at {:?}", o.position)));
    }

    if let Some(intruder) = &cfg.intruder {
        if let Some(q) = intruder.position_at(t) {
            let d = (p - q).norm();
            if d < intruder.separation {
                out.push(violation(t, "SC-2", Some(d), intruder.separation, "intruder separation".into()));
            }
        }
    }

    let outside = (0..3)
        .map(|i| (cfg.geofence_min[i] - p[i]).max(p[i] - cfg.geofence_max[i]))
        .fold(f64::NEG_INFINITY, f64::max);
    if outside > 0.0 {
        out.push(violation(t, "SC-3", Some(outside), 0.0, "distance outside geofence".into()));
    }

    let tilt = truth.tilt();
    let rate = truth.angular_rate.norm();
    if tilt > cfg.max_tilt {
        out.push(violation(t, "SC-6", Some(tilt), cfg.max_tilt, "tilt".into()));
    } else if rate > cfg.max_rate {
        out.push(violation(t, "SC-6", Some(rate), cfg.max_rate, "angular rate".into()));
    }
    out
}

/// End-of-run facts the final checks need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub end_time: f64,
    /// Ground-truth position where landing was recognized; `None` if never.
    pub touchdown: Option<[f64; 3]>,
    /// Time between take-off and motor cut (or run end).
    pub armed_duration: f64,
}

/// SC-4 and SC-5.
pub fn finalize(summary: &RunSummary, cfg: &MonitorConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let t = summary.end_time;
    match summary.touchdown {
        Some(p) => {
            let c = Vector3::from(cfg.landing_center);
            let d = (Vector3::from(p) - c).xy().norm();
            if d > cfg.landing_radius {
                out.push(violation(t, "SC-4", Some(d), cfg.landing_radius, "touchdown outside landing zone".into()));
            }
        }
        None => out.push(violation(t, "SC-4", None, cfg.landing_radius, "no touchdown".into())),
    }
    if summary.armed_duration < cfg.min_duration {
        out.push(violation(
            t,
            "SC-5",
            Some(summary.armed_duration),
            cfg.min_duration,
            "mission shorter than minimum useful duration".into(),
        ));
    }
    out
}

/// Collapses per-tick violations into episodes: one entry per constraint each
/// time it goes from satisfied to violated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorLog {
    active: BTreeMap<String, bool>,
    pub violations: Vec<Violation>,
}

impl MonitorLog {
    pub fn record(&mut self, step: Vec<Violation>) {
        let now: BTreeMap<String, Violation> = step.into_iter().map(|v| (v.constraint.clone(), v)).collect();
        for c in ["SC-1", "SC-2", "SC-3", "SC-6"] {
            let was = self.active.get(c).copied().unwrap_or(false);
            match now.get(c) {
                Some(v) if !was => {
                    self.violations.push(v.clone());
                    self.active.insert(c.into(), true);
                }
                Some(_) => {}
                None => {
                    self.active.insert(c.into(), false);
                }
            }
        }
    }

    pub fn phase_ignored(phase: &MissionPhase) -> bool {
        phase.kind == PhaseKind::PreArm
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rollup {
    pub hazards: BTreeMap<String, usize>,
    pub losses: BTreeMap<String, usize>,
}

/// Counts violations per hazard and propagates them to losses.
pub fn rollup(violations: &[Violation], graph: &TraceabilityGraph) -> Result<Rollup, ModelError> {
    let mut hazards: BTreeMap<String, usize> = graph.hazards.keys().map(|h| (h.clone(), 0)).collect();
    let mut losses: BTreeMap<String, usize> = graph.losses.keys().map(|l| (l.clone(), 0)).collect();
    for v in violations {
        let h = graph.constraint_hazard(&v.constraint)?;
        *hazards.entry(h.to_owned()).or_default() += 1;
        for l in graph.trace_to_losses([h])? {
            *losses.entry(l).or_default() += 1;
        }
    }
    Ok(Rollup { hazards, losses })
}
