//! Parameterized faults realizing the loss scenarios, the injectors that apply
//! them on each channel, and the bundled scenario library.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ActuatorCommand, GainSet};
use crate::dynamics::{RigidBodyState, WindField, WindStep};
use crate::estimator::{detect_marker, CameraConfig, CameraFrame, SensorReadings, Visibility};
use crate::harness::Mitigations;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaultError {
    #[error("fault `{kind}` does not act on the {channel} channel")]
    WrongChannel { kind: &'static str, channel: Channel },
    #[error("invalid fault `{kind}`: {reason}")]
    Invalid { kind: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Sensor,
    Frame,
    Command,
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Channel::Sensor => "sensor",
            Channel::Frame => "frame",
            Channel::Command => "command",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutPolicy {
    #[default]
    Zero,
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum FaultKind {
    /// Added to the altitude the source switch judges by (m).
    AltitudeBeliefBias { delta: f64 },
    OcclusionWindow { fraction: f64, markers: Vec<String> },
    LightingLevel { value: f64 },
    /// A foreign marker that is not part of the pad layout.
    SpoofMarker { position: [f64; 3], size: f64, id: String },
    /// Frames are released in reversed groups of `window`.
    FrameReorder { window: usize },
    /// Frames are released no earlier than capture + `latency`.
    FrameDelay { latency: f64 },
    CommandDropout {
        #[serde(default)]
        policy: DropoutPolicy,
    },
    CommandDelay { latency: f64 },
    /// Wind velocity step added over the window (m/s).
    TrimShift { wind: [f64; 3] },
    GainScale { factor: f64 },
    /// Added to every altitude measurement feeding the estimate (m).
    PostLandingEusBias { delta: f64 },
}

impl FaultKind {
    pub fn name(&self) -> &'static str {
        match self {
            FaultKind::AltitudeBeliefBias { .. } => "AltitudeBeliefBias",
            FaultKind::OcclusionWindow { .. } => "OcclusionWindow",
            FaultKind::LightingLevel { .. } => "LightingLevel",
            FaultKind::SpoofMarker { .. } => "SpoofMarker",
            FaultKind::FrameReorder { .. } => "FrameReorder",
            FaultKind::FrameDelay { .. } => "FrameDelay",
            FaultKind::CommandDropout { .. } => "CommandDropout",
            FaultKind::CommandDelay { .. } => "CommandDelay",
            FaultKind::TrimShift { .. } => "TrimShift",
            FaultKind::GainScale { .. } => "GainScale",
            FaultKind::PostLandingEusBias { .. } => "PostLandingEusBias",
        }
    }

    /// The injector that accepts this kind. Wind, gain, occlusion and
    /// lighting faults are accepted there but take effect at setup or render.
    pub fn channel(&self) -> Channel {
        match self {
            FaultKind::AltitudeBeliefBias { .. } | FaultKind::PostLandingEusBias { .. } | FaultKind::TrimShift { .. } => {
                Channel::Sensor
            }
            FaultKind::OcclusionWindow { .. }
            | FaultKind::LightingLevel { .. }
            | FaultKind::SpoofMarker { .. }
            | FaultKind::FrameReorder { .. }
            | FaultKind::FrameDelay { .. } => Channel::Frame,
            FaultKind::CommandDropout { .. } | FaultKind::CommandDelay { .. } | FaultKind::GainScale { .. } => {
                Channel::Command
            }
        }
    }
}

fn default_end() -> f64 {
    f64::INFINITY
}

fn open_ended(end: &f64) -> bool {
    end.is_infinite()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    #[serde(flatten)]
    pub kind: FaultKind,
    pub start: f64,
    #[serde(default = "default_end", skip_serializing_if = "open_ended")]
    pub end: f64,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, start: f64, end: f64) -> Self {
        Self { kind, start, end }
    }

    /// Active from `start` for the rest of the run.
    pub fn from(kind: FaultKind, start: f64) -> Self {
        Self::new(kind, start, f64::INFINITY)
    }

    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }

    pub fn validate(&self) -> Result<(), FaultError> {
        let kind = self.kind.name();
        let bad = |reason: String| Err(FaultError::Invalid { kind, reason });
        if !(self.start.is_finite() && self.start < self.end) || self.end.is_nan() {
            return bad(format!("window [{}, {}] must satisfy start < end", self.start, self.end));
        }
        let finite = |v: f64| v.is_finite();
        match &self.kind {
            FaultKind::AltitudeBeliefBias { delta } | FaultKind::PostLandingEusBias { delta } if !finite(*delta) => {
                bad("delta must be finite".into())
            }
            FaultKind::OcclusionWindow { fraction, .. } if !(0.0..=1.0).contains(fraction) => {
                bad("fraction must be within [0, 1]".into())
            }
            FaultKind::LightingLevel { value } if !(0.0..=1.0).contains(value) => bad("value must be within [0, 1]".into()),
            FaultKind::SpoofMarker { position, size, .. } if !(position.iter().all(|v| v.is_finite()) && *size > 0.0) => {
                bad("position must be finite and size > 0".into())
            }
            FaultKind::FrameReorder { window } if *window < 2 => bad("window must be >= 2".into()),
            FaultKind::FrameDelay { latency } | FaultKind::CommandDelay { latency }
                if !(latency.is_finite() && *latency >= 0.0) =>
            {
                bad("latency must be >= 0".into())
            }
            FaultKind::TrimShift { wind } if !wind.iter().all(|v| v.is_finite()) => bad("wind must be finite".into()),
            FaultKind::GainScale { factor } if !(factor.is_finite() && *factor >= 0.0) => bad("factor must be >= 0".into()),
            _ => Ok(()),
        }
    }

    fn wrong(&self, channel: Channel) -> FaultError {
        FaultError::WrongChannel {
            kind: self.kind.name(),
            channel,
        }
    }
}

/// Sensor and belief channel.
pub fn inject_sensor(fault: &FaultSpec, readings: &SensorReadings, t: f64) -> Result<SensorReadings, FaultError> {
    if fault.kind.channel() != Channel::Sensor {
        return Err(fault.wrong(Channel::Sensor));
    }
    let mut out = readings.clone();
    if fault.active(t) {
        match fault.kind {
            FaultKind::AltitudeBeliefBias { delta } => out.switch_altitude_bias += delta,
            FaultKind::PostLandingEusBias { delta } => out.eus_altitude_bias += delta,
            _ => {}
        }
    }
    Ok(out)
}

/// Per-fault state of the frame channel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameQueue {
    held: VecDeque<CameraFrame>,
}

impl FrameQueue {
    pub fn len(&self) -> usize {
        self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held.is_empty()
    }
}

/// What the frame injector needs to synthesize spoof detections.
pub struct FrameContext<'a, R: Rng + ?Sized> {
    pub truth: &'a RigidBodyState,
    pub camera: &'a CameraConfig,
    pub lighting: f64,
    pub rng: &'a mut R,
}

/// Frame channel. `frames` are those produced this tick, in order.
pub fn inject_frames<R: Rng + ?Sized>(
    fault: &FaultSpec,
    frames: Vec<CameraFrame>,
    t: f64,
    queue: &mut FrameQueue,
    ctx: &mut FrameContext<'_, R>,
) -> Result<Vec<CameraFrame>, FaultError> {
    if fault.kind.channel() != Channel::Frame {
        return Err(fault.wrong(Channel::Frame));
    }
    let active = fault.active(t);
    match &fault.kind {
        FaultKind::FrameReorder { window } => {
            if !active {
                let mut out: Vec<_> = queue.held.drain(..).collect();
                out.extend(frames);
                return Ok(out);
            }
            let mut out = Vec::new();
            for f in frames {
                queue.held.push_back(f);
                if queue.held.len() >= *window {
                    out.extend(queue.held.drain(..).rev());
                }
            }
            Ok(out)
        }
        FaultKind::FrameDelay { latency } => {
            if !active {
                let mut out: Vec<_> = queue.held.drain(..).collect();
                out.extend(frames);
                return Ok(out);
            }
            queue.held.extend(frames);
            let mut out = Vec::new();
            while queue.held.front().is_some_and(|f| f.timestamp + latency <= t + 1e-9) {
                out.push(queue.held.pop_front().expect("checked non-empty"));
            }
            Ok(out)
        }
        FaultKind::SpoofMarker { position, size, id } => {
            let mut frames = frames;
            if active {
                let vis = Visibility {
                    lighting: ctx.lighting,
                    occlusion: 0.0,
                };
                for f in &mut frames {
                    let world = Vector3::from(*position);
                    if let Some(d) = detect_marker(ctx.truth, id, &world, *size, ctx.camera, vis, ctx.rng) {
                        f.detections.push(d);
                    }
                }
            }
            Ok(frames)
        }
        _ => Ok(frames),
    }
}

/// Per-fault state of the command channel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandQueue {
    history: VecDeque<(f64, ActuatorCommand)>,
    last_output: Option<ActuatorCommand>,
    /// Age of the command released on the last call (s).
    pub last_age: f64,
}

/// Command channel. Must be called every tick, in or out of the window, so
/// the delay line and hold value stay current.
pub fn inject_commands(
    fault: &FaultSpec,
    cmd: &ActuatorCommand,
    t: f64,
    queue: &mut CommandQueue,
) -> Result<ActuatorCommand, FaultError> {
    if fault.kind.channel() != Channel::Command {
        return Err(fault.wrong(Channel::Command));
    }
    let active = fault.active(t);
    queue.last_age = 0.0;
    let out = match &fault.kind {
        FaultKind::CommandDropout { policy } if active => match policy {
            DropoutPolicy::Zero => ActuatorCommand::ZERO,
            DropoutPolicy::Hold => queue.last_output.unwrap_or(ActuatorCommand::ZERO),
        },
        FaultKind::CommandDelay { latency } => {
            queue.history.push_back((t, *cmd));
            while queue.history.len() > 1 && queue.history[1].0 <= t - latency + 1e-9 {
                queue.history.pop_front();
            }
            if active {
                let (at, delayed) = queue.history[0];
                queue.last_age = t - at;
                delayed
            } else {
                *cmd
            }
        }
        _ => *cmd,
    };
    queue.last_output = Some(out);
    Ok(out)
}

/// Lighting and per-marker occlusion at time `t`.
pub fn render_conditions(faults: &[FaultSpec], base_lighting: f64, t: f64) -> (f64, BTreeMap<String, f64>) {
    let mut lighting = base_lighting;
    let mut occluded: BTreeMap<String, f64> = BTreeMap::new();
    for f in faults.iter().filter(|f| f.active(t)) {
        match &f.kind {
            FaultKind::LightingLevel { value } => lighting = lighting.min(*value),
            FaultKind::OcclusionWindow { fraction, markers } => {
                for m in markers {
                    let e = occluded.entry(m.clone()).or_insert(0.0);
                    *e = e.max(*fraction);
                }
            }
            _ => {}
        }
    }
    (lighting, occluded)
}

/// The wind field with every trim shift added over its window.
pub fn wind_with_faults(base: &WindField, faults: &[FaultSpec]) -> WindField {
    let shifts: Vec<_> = faults
        .iter()
        .filter_map(|f| match f.kind {
            FaultKind::TrimShift { wind } => Some((f.start, f.end, Vector3::from(wind))),
            _ => None,
        })
        .collect();
    if shifts.is_empty() {
        return base.clone();
    }
    let mut times: Vec<f64> = base.steps.iter().map(|s| s.at).collect();
    for (s, e, _) in &shifts {
        times.push(*s);
        if e.is_finite() {
            times.push(e.next_up());
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let steps = times
        .into_iter()
        .map(|at| {
            let extra: Vector3<f64> = shifts
                .iter()
                .filter(|(s, e, _)| at >= *s && at <= *e)
                .map(|(_, _, w)| w)
                .sum();
            WindStep {
                at,
                velocity: (base.velocity_at(at) + extra).into(),
            }
        })
        .collect();
    WindField {
        constant: base.constant,
        steps,
    }
}

/// Gains in effect at `t`: the product of every active gain scale.
pub fn gain_factor(faults: &[FaultSpec], t: f64) -> f64 {
    faults
        .iter()
        .filter(|f| f.active(t))
        .filter_map(|f| match f.kind {
            FaultKind::GainScale { factor } => Some(factor),
            _ => None,
        })
        .product()
}

pub fn scaled_gains(gains: &GainSet, faults: &[FaultSpec], t: f64) -> GainSet {
    let k = gain_factor(faults, t);
    if k == 1.0 {
        gains.clone()
    } else {
        gains.scaled(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    pub ucas: Vec<String>,
    pub faults: Vec<FaultSpec>,
    pub default_mitigations: Mitigations,
    pub narrative: String,
}

/// Identifier of the primary (large, central) marker of the default layout.
pub const PRIMARY_MARKER: &str = "tag-0";
/// Start of the wind step in the trim-shift scenario (s).
pub const TRIM_SHIFT_AT: f64 = 11.0;

fn scenario(id: &str, uca: &str, faults: Vec<FaultSpec>, narrative: &str) -> ScenarioSpec {
    ScenarioSpec {
        id: id.into(),
        ucas: vec![uca.into()],
        faults,
        default_mitigations: Mitigations::default(),
        narrative: narrative.into(),
    }
}

/// The eight bundled scenarios, one per unsafe control action. Fault times
/// assume the default mission plan: descent begins near 17 s and touchdown
/// comes near 38 s.
pub fn scenario_library() -> Vec<ScenarioSpec> {
    use FaultKind::*;
    let occlude = |fraction| OcclusionWindow {
        fraction,
        markers: vec![PRIMARY_MARKER.into()],
    };
    vec![
        scenario(
            "S-UCA1",
            "UCA-1",
            vec![
                FaultSpec::from(AltitudeBeliefBias { delta: -4.0 }, 0.0),
                FaultSpec::from(occlude(1.0), 0.0),
                FaultSpec::from(LightingLevel { value: 0.4 }, 0.0),
            ],
            "Altitude belief reads low, the pad marker is covered and light is poor: no pad position is produced.",
        ),
        scenario(
            "S-UCA2",
            "UCA-2",
            vec![
                FaultSpec::from(AltitudeBeliefBias { delta: 4.0 }, 0.0),
                FaultSpec::from(
                    SpoofMarker {
                        position: [0.8, 0.0, 0.0],
                        size: 0.4,
                        id: "spoof-7".into(),
                    },
                    0.0,
                ),
            ],
            "Altitude belief reads high and a neighbouring foreign marker of a different size is in view.",
        ),
        scenario(
            "S-UCA3",
            "UCA-3",
            vec![FaultSpec::from(FrameReorder { window: 2 }, 0.0)],
            "Frames leave the detector out of order.",
        ),
        scenario(
            "S-UCA4",
            "UCA-4",
            vec![
                FaultSpec::from(AltitudeBeliefBias { delta: 2.0 }, 0.0),
                FaultSpec::from(occlude(1.0), 26.0),
            ],
            "The pad marker becomes covered part way down; pad position stops.",
        ),
        scenario(
            "S-UCA5",
            "UCA-5",
            vec![FaultSpec::new(
                CommandDropout {
                    policy: DropoutPolicy::Zero,
                },
                29.0,
                30.0,
            )],
            "Motor commands are not provided for one second during descent.",
        ),
        scenario(
            "S-UCA6",
            "UCA-6",
            vec![
                FaultSpec::from(TrimShift { wind: [2.4, 0.0, -1.8] }, TRIM_SHIFT_AT),
                FaultSpec::from(GainScale { factor: 0.5 }, TRIM_SHIFT_AT),
            ],
            "A 3 m/s wind step moves the trim point away from the one the gains were tuned for.",
        ),
        scenario(
            "S-UCA7",
            "UCA-7",
            vec![FaultSpec::from(PostLandingEusBias { delta: 0.6 }, 30.0)],
            "The estimate reads 0.6 m high near the ground, so landing is never recognized.",
        ),
        scenario(
            "S-UCA8",
            "UCA-8",
            vec![FaultSpec::from(CommandDelay { latency: 0.4 }, 20.0)],
            "Motor commands arrive 0.4 s late during descent.",
        ),
    ]
}

pub fn find_scenario(id: &str) -> Option<ScenarioSpec> {
    scenario_library().into_iter().find(|s| s.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::MotorThrusts;
    use crate::estimator::SwitchInput;
    use crate::stpa;
    use proptest::prelude::{any, prop_assert_eq, prop_oneof, proptest, Just, Strategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn readings() -> SensorReadings {
        SensorReadings {
            gps_position: Vector3::new(0.0, 0.0, 12.0),
            gps_valid: true,
            baro_altitude: 12.0,
            accel: Vector3::new(0.0, 0.0, 9.81),
            gyro: Vector3::zeros(),
            heading: 0.0,
            ir_altitude: None,
            timestamp: 5.0,
            switch_altitude_bias: 0.0,
            eus_altitude_bias: 0.0,
        }
    }

    fn frame(seq: u64) -> CameraFrame {
        CameraFrame {
            timestamp: seq as f64 * 0.05,
            sequence: seq,
            detections: vec![],
        }
    }

    fn cmd(v: f64) -> ActuatorCommand {
        ActuatorCommand::from_thrusts(MotorThrusts([v; 4]))
    }

    #[test]
    fn belief_bias_shifts_switch_altitude() {
        let f = FaultSpec::new(FaultKind::AltitudeBeliefBias { delta: -5.0 }, 0.0, 10.0);
        let r = inject_sensor(&f, &readings(), 5.0).unwrap();
        let input = SwitchInput {
            eus_altitude: 12.0,
            belief_bias: r.switch_altitude_bias,
            vision_available: false,
            ir_altitude: None,
        };
        assert_eq!(input.decision_altitude(), 7.0);
        assert_eq!(inject_sensor(&f, &readings(), 11.0).unwrap(), readings());
        let wrong = FaultSpec::new(FaultKind::CommandDelay { latency: 0.1 }, 0.0, 1.0);
        assert!(matches!(
            inject_sensor(&wrong, &readings(), 0.5),
            Err(FaultError::WrongChannel { .. })
        ));
    }

    fn ctx_run(fault: &FaultSpec, batches: Vec<(f64, Vec<CameraFrame>)>) -> Vec<(f64, CameraFrame)> {
        let truth = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 3.0));
        let cam = CameraConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = FrameQueue::default();
        let mut out = vec![];
        for (t, frames) in batches {
            let mut ctx = FrameContext {
                truth: &truth,
                camera: &cam,
                lighting: 1.0,
                rng: &mut rng,
            };
            for f in inject_frames(fault, frames, t, &mut q, &mut ctx).unwrap() {
                out.push((t, f));
            }
        }
        out
    }

    #[test]
    fn reorder_swaps_pairs() {
        let f = FaultSpec::from(FaultKind::FrameReorder { window: 2 }, 0.0);
        let out = ctx_run(&f, vec![(0.25, vec![frame(5)]), (0.3, vec![frame(6)])]);
        let seqs: Vec<u64> = out.iter().map(|(_, f)| f.sequence).collect();
        assert_eq!(seqs, [6, 5]);
    }

    #[test]
    fn delay_releases_at_capture_plus_latency() {
        let f = FaultSpec::from(FaultKind::FrameDelay { latency: 0.5 }, 0.0);
        let dt = 0.002;
        let batches = (0..1000)
            .map(|i| {
                let t = i as f64 * dt;
                let captured = if i % 25 == 0 { vec![frame((i / 25) as u64)] } else { vec![] };
                (t, captured)
            })
            .collect();
        let out = ctx_run(&f, batches);
        assert!(!out.is_empty());
        for (t, fr) in out {
            assert!((t - (fr.timestamp + 0.5)).abs() <= dt + 1e-9, "{t} vs {}", fr.timestamp);
        }
    }

    #[test]
    fn spoof_pulls_fused_estimate_between_pad_and_spoof() {
        use crate::estimator::{fuse_pad_position, EstimatedUavState, PadLayout};
        let layout = PadLayout::default().primary_only();
        let mut truth = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 4.0));
        truth.grounded = false;
        let cam = CameraConfig {
            p_base: 1.0,
            noise_base: 0.0,
            ..CameraConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f0 = crate::estimator::render_detections(&truth, &layout, &cam, 1.0, &BTreeMap::new(), &mut rng, 0.0, 0);
        let spoof = FaultSpec::from(
            FaultKind::SpoofMarker {
                position: [0.8, 0.0, 0.0],
                size: 0.4,
                id: "spoof".into(),
            },
            0.0,
        );
        let mut q = FrameQueue::default();
        let mut ctx = FrameContext {
            truth: &truth,
            camera: &cam,
            lighting: 1.0,
            rng: &mut rng,
        };
        let out = inject_frames(&spoof, vec![f0], 0.0, &mut q, &mut ctx).unwrap();
        let eus = EstimatedUavState::at_rest(truth.position, 9.81);
        let est = fuse_pad_position(&out[0], &layout, &eus, false).unwrap();
        // oracle: weighted mean of the two candidates with weight = side / range
        let w_pad = 0.5 / 4.0;
        let w_spoof = 0.4 / (0.8f64.hypot(4.0));
        let want = 0.8 * w_spoof / (w_pad + w_spoof);
        assert!(est.position.x > 0.0 && est.position.x < 0.8);
        assert!((est.position.x - want).abs() < 1e-9);
        assert!(fuse_pad_position(&out[0], &layout, &eus, true).unwrap().position.norm() < 1e-9);
    }

    #[test]
    fn command_dropout_and_delay() {
        let drop = FaultSpec::new(FaultKind::CommandDropout { policy: DropoutPolicy::Zero }, 1.0, 2.0);
        let mut q = CommandQueue::default();
        assert_eq!(inject_commands(&drop, &cmd(3.0), 0.5, &mut q).unwrap(), cmd(3.0));
        assert_eq!(inject_commands(&drop, &cmd(3.0), 1.5, &mut q).unwrap(), ActuatorCommand::ZERO);
        assert_eq!(inject_commands(&drop, &cmd(3.0), 2.5, &mut q).unwrap(), cmd(3.0));

        let hold = FaultSpec::new(FaultKind::CommandDropout { policy: DropoutPolicy::Hold }, 1.0, 2.0);
        let mut q = CommandQueue::default();
        inject_commands(&hold, &cmd(3.0), 0.9, &mut q).unwrap();
        assert_eq!(inject_commands(&hold, &cmd(5.0), 1.5, &mut q).unwrap(), cmd(3.0));

        let delay = FaultSpec::from(FaultKind::CommandDelay { latency: 0.1 }, 0.0);
        let mut q = CommandQueue::default();
        let dt = 0.002;
        for i in 0..200 {
            let t = i as f64 * dt;
            let out = inject_commands(&delay, &cmd(t), t, &mut q).unwrap();
            if t >= 0.1 {
                assert!((out.thrusts.0[0] - (t - 0.1)).abs() < 1e-9);
                assert!((q.last_age - 0.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn library_shape_and_links() {
        let lib = scenario_library();
        let ids: Vec<_> = lib.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["S-UCA1", "S-UCA2", "S-UCA3", "S-UCA4", "S-UCA5", "S-UCA6", "S-UCA7", "S-UCA8"]);
        let graph = stpa::bundled_model();
        for s in &lib {
            for u in &s.ucas {
                assert!(graph.ucas.contains_key(u), "{u}");
            }
            for f in &s.faults {
                f.validate().unwrap();
            }
        }
        let s6 = lib.iter().find(|s| s.id == "S-UCA6").unwrap();
        let hazards = graph.uca_hazards(&s6.ucas[0]).unwrap();
        let want: Vec<String> = (1..=6).map(|i| format!("H-{i}")).collect();
        assert_eq!(hazards.iter().cloned().collect::<Vec<_>>(), want);
    }

    #[test]
    fn trim_shift_and_gain_scale_routing() {
        let faults = vec![
            FaultSpec::new(FaultKind::TrimShift { wind: [1.0, 0.0, 0.0] }, 5.0, 8.0),
            FaultSpec::from(FaultKind::GainScale { factor: 0.5 }, 5.0),
        ];
        let base = WindField::constant(Vector3::new(0.0, 0.5, 0.0));
        let w = wind_with_faults(&base, &faults);
        assert_eq!(w.velocity_at(4.0), Vector3::new(0.0, 0.5, 0.0));
        assert_eq!(w.velocity_at(6.0), Vector3::new(1.0, 0.5, 0.0));
        assert_eq!(w.velocity_at(9.0), Vector3::new(0.0, 0.5, 0.0));
        assert_eq!(gain_factor(&faults, 4.0), 1.0);
        assert_eq!(gain_factor(&faults, 6.0), 0.5);
        let g = scaled_gains(&GainSet::default(), &faults, 6.0);
        assert_eq!(g.tilt_p, GainSet::default().tilt_p * 0.5);
    }

    fn arb_kind() -> impl Strategy<Value = FaultKind> {
        use FaultKind::*;
        prop_oneof![
            (-10.0f64..10.0).prop_map(|delta| AltitudeBeliefBias { delta }),
            (0.0f64..1.0).prop_map(|fraction| OcclusionWindow {
                fraction,
                markers: vec!["tag-0".into()]
            }),
            (0.0f64..1.0).prop_map(|value| LightingLevel { value }),
            (0.1f64..1.0).prop_map(|size| SpoofMarker {
                position: [0.5, 0.0, 0.0],
                size,
                id: "x".into()
            }),
            (2usize..5).prop_map(|window| FrameReorder { window }),
            (0.0f64..1.0).prop_map(|latency| FrameDelay { latency }),
            prop_oneof![Just(DropoutPolicy::Zero), Just(DropoutPolicy::Hold)].prop_map(|policy| CommandDropout { policy }),
            (0.0f64..1.0).prop_map(|latency| CommandDelay { latency }),
            (-5.0f64..5.0).prop_map(|w| TrimShift { wind: [w, 0.0, 0.0] }),
            (0.0f64..2.0).prop_map(|factor| GainScale { factor }),
            (-2.0f64..2.0).prop_map(|delta| PostLandingEusBias { delta }),
        ]
    }

    proptest! {
        #[test]
        fn injectors_are_identity_outside_window(
            kind in arb_kind(),
            start in 1.0f64..50.0,
            len in 0.1f64..10.0,
            before in any::<bool>(),
            gap in 0.01f64..20.0,
        ) {
            let f = FaultSpec::new(kind, start, start + len);
            let t = if before { start - gap } else { start + len + gap };
            let mut accepted = 0;
            if let Ok(r) = inject_sensor(&f, &readings(), t) {
                accepted += 1;
                prop_assert_eq!(r, readings());
            }
            let truth = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 3.0));
            let cam = CameraConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut ctx = FrameContext { truth: &truth, camera: &cam, lighting: 1.0, rng: &mut rng };
            let mut fq = FrameQueue::default();
            if let Ok(out) = inject_frames(&f, vec![frame(3)], t, &mut fq, &mut ctx) {
                accepted += 1;
                prop_assert_eq!(out, vec![frame(3)]);
            }
            let mut cq = CommandQueue::default();
            if let Ok(out) = inject_commands(&f, &cmd(2.0), t, &mut cq) {
                accepted += 1;
                prop_assert_eq!(out, cmd(2.0));
            }
            prop_assert_eq!(accepted, 1);
            prop_assert_eq!(render_conditions(&[f.clone()], 1.0, t), (1.0, BTreeMap::new()));
            prop_assert_eq!(gain_factor(&[f], t), 1.0);
        }
    }
}
