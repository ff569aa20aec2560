//! Take-off and landing phase machine, reference generation and touchdown
//! detection.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::Reference;
use crate::estimator::{EstimatedUavState, LandingPadEstimate, SensorReadings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionPlan {
    pub launch: [f64; 3],
    /// Hover height above the launch point (m).
    pub hover_altitude: f64,
    pub hover_hold: f64,
    pub climb_rate: f64,
    pub descent_rate: f64,
    /// Horizontal reference slew limit (m/s).
    pub horizontal_rate: f64,
    pub pad_center: [f64; 3],
    /// How far below the pad the descent reference bottoms out (m).
    pub descent_floor: f64,
    /// Altitude band that ends the take-off climb (m).
    pub altitude_tolerance: f64,
    /// Time spent disarmed before take-off (s).
    pub arm_delay: f64,
    pub yaw: f64,
    pub abort_enabled: bool,
    /// Scripted remote-pilot abort.
    pub abort_at: Option<f64>,
}

impl Default for MissionPlan {
    fn default() -> Self {
        Self {
            launch: [0.0; 3],
            hover_altitude: 12.0,
            hover_hold: 8.0,
            climb_rate: 1.5,
            descent_rate: 0.6,
            horizontal_rate: 1.0,
            pad_center: [0.0; 3],
            descent_floor: 0.5,
            altitude_tolerance: 0.2,
            arm_delay: 0.5,
            yaw: 0.0,
            abort_enabled: true,
            abort_at: None,
        }
    }
}

impl MissionPlan {
    pub fn validate(&self) -> Result<(), String> {
        let pos = |n: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{n} must be > 0, got {v}"))
            }
        };
        pos("hover_altitude", self.hover_altitude)?;
        pos("climb_rate", self.climb_rate)?;
        pos("descent_rate", self.descent_rate)?;
        pos("horizontal_rate", self.horizontal_rate)?;
        pos("altitude_tolerance", self.altitude_tolerance)?;
        for (n, v) in [
            ("hover_hold", self.hover_hold),
            ("descent_floor", self.descent_floor),
            ("arm_delay", self.arm_delay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{n} must be >= 0, got {v}"));
            }
        }
        if !self.launch.iter().chain(&self.pad_center).all(|v| v.is_finite()) || !self.yaw.is_finite() {
            return Err("launch, pad_center and yaw must be finite".into());
        }
        Ok(())
    }

    pub fn launch(&self) -> Vector3<f64> {
        Vector3::from(self.launch)
    }

    pub fn pad_center(&self) -> Vector3<f64> {
        Vector3::from(self.pad_center)
    }

    pub fn hover_point(&self) -> Vector3<f64> {
        self.launch() + Vector3::new(0.0, 0.0, self.hover_altitude)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhaseKind {
    PreArm,
    TakeOff,
    HoverHold,
    Descent,
    TouchedDown,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionPhase {
    pub kind: PhaseKind,
    pub entered: f64,
    /// Only meaningful for `Aborted`: whether the vehicle is on the ground.
    pub on_ground: bool,
}

impl MissionPhase {
    pub fn new(kind: PhaseKind, entered: f64) -> Self {
        Self {
            kind,
            entered,
            on_ground: false,
        }
    }

    pub fn aborted(entered: f64, on_ground: bool) -> Self {
        Self {
            kind: PhaseKind::Aborted,
            entered,
            on_ground,
        }
    }

    pub fn armed(&self) -> bool {
        self.kind != PhaseKind::PreArm && !motor_cut(self)
    }
}

/// Whether `to` may follow `from`.
pub fn legal_transition(from: PhaseKind, to: PhaseKind) -> bool {
    use PhaseKind::*;
    matches!(
        (from, to),
        (PreArm, TakeOff) | (TakeOff, HoverHold) | (HoverHold, Descent) | (Descent, TouchedDown)
    ) || (to == Aborted && from != TouchedDown)
        || from == to
}

pub fn motor_cut(phase: &MissionPhase) -> bool {
    match phase.kind {
        PhaseKind::TouchedDown => true,
        PhaseKind::Aborted => phase.on_ground,
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TouchdownConfig {
    pub max_altitude: f64,
    pub max_vertical_speed: f64,
    pub hold_time: f64,
}

impl Default for TouchdownConfig {
    fn default() -> Self {
        Self {
            max_altitude: 0.05,
            max_vertical_speed: 0.1,
            hold_time: 0.3,
        }
    }
}

/// Persistence-based touchdown detector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TouchdownDetector {
    pub config: TouchdownConfig,
    since: Option<f64>,
}

impl TouchdownDetector {
    pub fn new(config: TouchdownConfig) -> Self {
        Self { config, since: None }
    }

    /// Altitude the detector judges by: IR when enabled and present.
    pub fn decision_altitude(eus: &EstimatedUavState, readings: &SensorReadings, secondary_altitude: bool) -> f64 {
        match readings.ir_altitude {
            Some(ir) if secondary_altitude => ir,
            _ => eus.altitude,
        }
    }

    pub fn update(&mut self, eus: &EstimatedUavState, readings: &SensorReadings, secondary_altitude: bool, t: f64) -> bool {
        let h = Self::decision_altitude(eus, readings, secondary_altitude);
        if h <= self.config.max_altitude && eus.velocity.z.abs() <= self.config.max_vertical_speed {
            let start = *self.since.get_or_insert(t);
            t - start >= self.config.hold_time - 1e-9
        } else {
            self.since = None;
            false
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceState {
    pub phase: MissionPhase,
    pub reference: Reference,
    /// Last pad centre seen while descending.
    pub last_pad: Option<Vector3<f64>>,
}

impl GuidanceState {
    pub fn new(plan: &MissionPlan) -> Self {
        Self {
            phase: MissionPhase::new(PhaseKind::PreArm, 0.0),
            reference: Reference::new(plan.launch(), plan.yaw),
            last_pad: None,
        }
    }
}

/// Events from outside guidance that can change phase this tick.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GuidanceEvents {
    pub touched_down: bool,
    pub abort: bool,
}

fn slew(from: f64, to: f64, max_step: f64) -> f64 {
    from + (to - from).clamp(-max_step, max_step)
}

fn slew_xy(from: Vector2<f64>, to: Vector2<f64>, max_step: f64) -> Vector2<f64> {
    let d = to - from;
    let n = d.norm();
    if n > max_step {
        from + d * (max_step / n)
    } else {
        to
    }
}

/// Advances the phase machine and produces the next reference.
pub fn next_reference(
    state: &GuidanceState,
    eus: &EstimatedUavState,
    pad: Option<&LandingPadEstimate>,
    plan: &MissionPlan,
    events: GuidanceEvents,
    t: f64,
    dt: f64,
) -> GuidanceState {
    use PhaseKind::*;
    let mut next = state.clone();
    let phase = state.phase;

    if events.abort && plan.abort_enabled && !matches!(phase.kind, Aborted | TouchedDown) {
        let on_ground = phase.kind == PreArm;
        next.phase = MissionPhase::aborted(t, on_ground);
    } else {
        match phase.kind {
            PreArm if t - phase.entered >= plan.arm_delay => next.phase = MissionPhase::new(TakeOff, t),
            TakeOff => {
                let target = plan.hover_point().z;
                if (state.reference.position.z - target).abs() < 1e-12
                    && (eus.altitude - target).abs() <= plan.altitude_tolerance
                {
                    next.phase = MissionPhase::new(HoverHold, t);
                }
            }
            HoverHold if t - phase.entered >= plan.hover_hold => next.phase = MissionPhase::new(Descent, t),
            Descent if events.touched_down => next.phase = MissionPhase::new(TouchedDown, t),
            Aborted if !phase.on_ground && events.touched_down => next.phase = MissionPhase::aborted(phase.entered, true),
            _ => {}
        }
    }

    if next.phase.kind == Descent {
        if let Some(p) = pad {
            next.last_pad = Some(p.position);
        }
    }

    let r = state.reference.position;
    let h_step = plan.horizontal_rate * dt;
    let (target_xy, target_z, z_rate) = match next.phase.kind {
        PreArm => (plan.launch().xy(), plan.launch().z, plan.climb_rate),
        TakeOff | HoverHold => (plan.hover_point().xy(), plan.hover_point().z, plan.climb_rate),
        Descent => {
            let pad_xy = next.last_pad.unwrap_or_else(|| plan.pad_center()).xy();
            (pad_xy, plan.pad_center().z - plan.descent_floor, plan.descent_rate)
        }
        TouchedDown => (r.xy(), r.z, plan.descent_rate),
        Aborted => (r.xy(), plan.pad_center().z - plan.descent_floor, plan.descent_rate),
    };
    let xy = slew_xy(r.xy(), target_xy, h_step);
    let z = slew(r.z, target_z, z_rate * dt);
    next.reference = Reference::new(Vector3::new(xy.x, xy.y, z), plan.yaw);
    next
}
