use std::collections::{BTreeMap, VecDeque};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HarnessError, Mitigations, RunConfig};
use crate::control::{adaptive_augment, allocate, cascade_step, schedule, ActuatorCommand, ControllerState, FlightMode};
use crate::dynamics::{forward_mix, step, DynamicsError, RigidBodyState};
use crate::estimator::{
    detect_marker, fuse_pad_position, guard_sequence, initial_eus, simulate_sensors, switch_source, update_eus,
    AltitudeSource, CameraConfig, CameraFrame, GuardDecision, LandingPadEstimate, SensorSetup, SwitchInput, Visibility,
};
use crate::faults::{
    inject_commands, inject_frames, inject_sensor, render_conditions, scaled_gains, wind_with_faults, Channel,
    CommandQueue, FaultKind, FrameContext, FrameQueue,
};
use crate::mission::{motor_cut, next_reference, GuidanceEvents, GuidanceState, MissionPhase, PhaseKind, TouchdownDetector};
use crate::monitor::{check_step, finalize, rollup, MonitorLog, Rollup, RunSummary, Violation};
use crate::stpa::bundled_model;

/// Pipeline stages of one tick, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Wind,
    Dynamics,
    Monitors,
    Sensors,
    InjectSensor,
    Render,
    InjectFrames,
    Guard,
    Fuse,
    Switch,
    Estimate,
    Guidance,
    Cascade,
    Adaptive,
    Allocate,
    Schedule,
    InjectCommands,
}

struct StageTrace {
    last: Option<Stage>,
    record: Vec<Vec<Stage>>,
    keep_ticks: usize,
    recording: bool,
}

impl StageTrace {
    fn new(keep_ticks: usize) -> Self {
        Self {
            last: None,
            record: Vec::new(),
            keep_ticks,
            recording: false,
        }
    }

    fn begin_tick(&mut self, tick: u64) {
        self.last = None;
        self.recording = (tick as usize) < self.keep_ticks;
        if self.recording {
            self.record.push(Vec::new());
        }
    }

    fn mark(&mut self, stage: Stage) {
        debug_assert!(self.last.is_none_or(|l| l < stage), "{stage:?} ran after {:?}", self.last);
        self.last = Some(stage);
        if let Some(tick) = self.record.last_mut().filter(|_| self.recording) {
            if tick.last() != Some(&stage) {
                tick.push(stage);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Landed,
    Aborted,
    Crashed,
    Diverged,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub phase: PhaseKind,
    pub source: AltitudeSource,
    pub truth_position: [f64; 3],
    pub truth_velocity: [f64; 3],
    pub truth_tilt: f64,
    pub eus_position: [f64; 3],
    pub eus_altitude: f64,
    pub reference: [f64; 3],
    pub thrusts: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcaTrigger {
    pub count: u64,
    pub first: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub frames_captured: u64,
    pub frames_rejected: u64,
    pub fusions: u64,
    /// Fusions whose source frame was not newer than the previous fusion's.
    pub fusions_out_of_order: u64,
    /// Fusions that included a detection whose id is not in the layout.
    pub foreign_fusions: u64,
    /// Mean error of the fused pad-relative offset against ground truth (m).
    pub pad_estimate_error: Option<f64>,
    /// Ticks with nonzero thrust after the vehicle has rested on the ground.
    pub post_touchdown_thrust_ticks: u64,
    pub control_errors: u64,
    /// Mean |altitude − hover altitude| from 1 s to 5 s after a wind step, in hover.
    pub wind_step_altitude_error: Option<f64>,
    pub max_tilt: f64,
    pub max_impact_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub scenario: Option<String>,
    pub mitigations: Mitigations,
    pub outcome: Outcome,
    pub ticks: u64,
    pub duration: f64,
    pub touchdown_time: Option<f64>,
    /// Ground-truth position where the motors were cut on the ground.
    pub touchdown_position: Option<[f64; 3]>,
    /// Horizontal distance from touchdown to the planned pad centre (m).
    pub landing_error: Option<f64>,
    pub armed_duration: f64,
    pub violations: Vec<Violation>,
    pub rollup: Rollup,
    pub uca_triggers: BTreeMap<String, UcaTrigger>,
    pub metrics: RunMetrics,
    pub samples: Vec<Sample>,
}

impl RunReport {
    pub fn has_violation(&self, constraint: &str) -> bool {
        self.violations.iter().any(|v| v.constraint == constraint)
    }

    pub fn triggered(&self, uca: &str) -> bool {
        self.uca_triggers.contains_key(uca)
    }
}

fn trigger(log: &mut BTreeMap<String, UcaTrigger>, uca: &str, t: f64) {
    log.entry(uca.to_owned())
        .and_modify(|e| e.count += 1)
        .or_insert(UcaTrigger { count: 1, first: t });
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_GPS_BIAS: u64 = 1;
const STREAM_SENSORS: u64 = 2;
const STREAM_SPOOF: u64 = 3;
const STREAM_MARKER_BASE: u64 = 16;

/// Whether a marker is geometrically detectable, ignoring lighting and occlusion.
fn in_view(truth: &RigidBodyState, world: &Vector3<f64>, side: f64, cam: &CameraConfig) -> bool {
    let rel = truth.attitude.inverse_transform_vector(&(world - truth.position));
    let range = rel.norm();
    range > f64::EPSILON && (-rel.z / range).clamp(-1.0, 1.0).acos() <= cam.half_fov && side / range >= cam.min_apparent_size
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Executes one closed-loop run.
pub fn run(config: &RunConfig) -> Result<RunReport, HarnessError> {
    run_with_trace(config, 0).map(|(r, _)| r)
}

/// As [`run`], also returning the stage order of the first `trace_ticks` ticks.
pub fn run_with_trace(config: &RunConfig, trace_ticks: usize) -> Result<(RunReport, Vec<Vec<Stage>>), HarnessError> {
    config.validate()?;
    let mut trace = StageTrace::new(trace_ticks);
    let settings = &config.run;
    let seed = settings.seed;
    let dt = settings.dt;
    let mit = config.resolved_mitigations()?;
    let faults = config.resolved_faults()?;
    let vp = &config.vehicle_params;
    let plan = &config.mission_plan;
    let est_cfg = &config.estimator_config;
    let mon_cfg = &config.monitor_config;
    let gravity = vp.gravity;

    let layout = if mit.multi_marker {
        config.pad_layout.clone()
    } else {
        config.pad_layout.primary_only()
    };
    let pad_center = layout.center();
    let camera = if mit.frame_rate_opt {
        config.camera_config.optimized()
    } else {
        config.camera_config.clone()
    };
    let mut marker_rngs: BTreeMap<String, ChaCha8Rng> = config
        .pad_layout
        .markers
        .iter()
        .enumerate()
        .map(|(i, m)| (m.id.clone(), stream(seed, STREAM_MARKER_BASE + i as u64)))
        .collect();
    let mut sensor_rng = stream(seed, STREAM_SENSORS);
    let mut spoof_rng = stream(seed, STREAM_SPOOF);
    let gps_bias = config.noise_config.draw_gps_bias(&mut stream(seed, STREAM_GPS_BIAS));
    let mut setup = SensorSetup {
        gps_bias,
        ir_beacon: None,
        gravity,
    };
    if mit.secondary_altitude {
        setup = setup.with_ir(pad_center);
    }
    let wind = wind_with_faults(&config.environment.wind, &faults);
    let channel = |c: Channel| -> Vec<_> { faults.iter().filter(|f| f.kind.channel() == c).cloned().collect() };
    let sensor_faults = channel(Channel::Sensor);
    let frame_faults = channel(Channel::Frame);
    let command_faults = channel(Channel::Command);
    let mut frame_queues = vec![FrameQueue::default(); frame_faults.len()];
    let mut command_queues = vec![CommandQueue::default(); command_faults.len()];
    let trim_shift_at = faults
        .iter()
        .filter(|f| matches!(f.kind, FaultKind::TrimShift { .. }))
        .map(|f| f.start)
        .reduce(f64::min);

    let mut truth = RigidBodyState::at_rest(plan.launch());
    let first = simulate_sensors(&truth, &config.noise_config, &setup, &mut sensor_rng);
    let mut eus = initial_eus(&first);
    let mut guidance = GuidanceState::new(plan);
    let mut detector = TouchdownDetector::new(config.touchdown_config);
    let mut cstate = ControllerState::default();
    let mut delivered = ActuatorCommand::ZERO;

    let mut uca: BTreeMap<String, UcaTrigger> = BTreeMap::new();
    let mut metrics = RunMetrics::default();
    let mut monitor = MonitorLog::default();
    let mut samples = Vec::new();

    // preflight checklist
    let (light0, occl0) = render_conditions(&faults, config.environment.lighting, 0.0);
    let occluded_at_start = layout.markers.iter().any(|m| occl0.get(&m.id).is_some_and(|o| *o > 0.0));
    if (mit.preflight_occlusion_check && occluded_at_start) || (mit.lighting_gate && light0 < config.environment.lighting_floor) {
        guidance.phase = MissionPhase::aborted(0.0, true);
    }

    let mut pipeline: VecDeque<(f64, CameraFrame)> = VecDeque::new();
    let mut next_capture = 0.0;
    let mut sequence = 0u64;
    let mut last_accepted: Option<(f64, u64)> = None;
    let mut last_fused: Option<f64> = None;
    let mut latest_pad: Option<LandingPadEstimate> = None;
    let mut had_pad = false;
    let mut pad_err_sum = 0.0;
    let mut abort_fired = false;
    let mut takeoff_at: Option<f64> = None;
    let mut cut_at: Option<f64> = None;
    let mut touchdown_position = None;
    let mut crashed = false;
    let mut airborne_once = false;
    let mut grounded_for = 0.0;
    let mut wind_err = (0.0, 0u64);

    let mut ticks = 0u64;
    let outcome = loop {
        if motor_cut(&guidance.phase) {
            if cut_at.is_none() {
                cut_at = Some(truth.time);
                touchdown_position = Some(arr(&truth.position));
            }
            if guidance.phase.kind == PhaseKind::Aborted {
                break Outcome::Aborted;
            }
            if truth.time - guidance.phase.entered >= settings.post_touchdown - 1e-9 {
                break Outcome::Landed;
            }
        }
        if crashed {
            break Outcome::Crashed;
        }
        if truth.time >= settings.max_duration - 1e-9 {
            break Outcome::TimedOut;
        }

        trace.begin_tick(ticks);
        trace.mark(Stage::Wind);
        trace.mark(Stage::Dynamics);
        truth = match step(&truth, &delivered.thrusts, &wind, vp, dt) {
            Ok(s) => s,
            Err(DynamicsError::NonFinite(_)) => break Outcome::Diverged,
            Err(e) => return Err(e.into()),
        };
        ticks += 1;
        let t = truth.time;
        metrics.max_tilt = metrics.max_tilt.max(truth.tilt());
        metrics.max_impact_speed = metrics.max_impact_speed.max(truth.impact_speed);
        if truth.impact_speed > vp.crash_speed {
            crashed = true;
        }

        trace.mark(Stage::Monitors);
        monitor.record(check_step(&truth, &guidance.phase, mon_cfg, t));

        trace.mark(Stage::Sensors);
        let mut readings = simulate_sensors(&truth, &config.noise_config, &setup, &mut sensor_rng);
        trace.mark(Stage::InjectSensor);
        for f in &sensor_faults {
            readings = inject_sensor(f, &readings, t)?;
        }

        trace.mark(Stage::Render);
        let mut frames = Vec::new();
        if t + 1e-9 >= next_capture {
            next_capture += camera.period();
            sequence += 1;
            let (lighting, occluded) = render_conditions(&faults, config.environment.lighting, t);
            let mut detections = Vec::new();
            for m in &layout.markers {
                let vis = Visibility {
                    lighting,
                    occlusion: occluded.get(&m.id).copied().unwrap_or(0.0),
                };
                let rng = marker_rngs.get_mut(&m.id).expect("stream per marker");
                detections.extend(detect_marker(&truth, &m.id, &layout.marker_position(m), m.side, &camera, vis, rng));
            }
            frames.push(CameraFrame {
                timestamp: t,
                sequence,
                detections,
            });
            metrics.frames_captured += 1;
        }
        trace.mark(Stage::InjectFrames);
        {
            let (lighting, _) = render_conditions(&faults, config.environment.lighting, t);
            let mut ctx = FrameContext {
                truth: &truth,
                camera: &camera,
                lighting,
                rng: &mut spoof_rng,
            };
            for (f, q) in frame_faults.iter().zip(frame_queues.iter_mut()) {
                frames = inject_frames(f, frames, t, q, &mut ctx)?;
            }
        }
        for f in frames {
            pipeline.push_back((t + camera.latency, f));
            while pipeline.len() > camera.queue_depth {
                pipeline.pop_front();
            }
        }
        let mut delivered_frames = Vec::new();
        while pipeline.front().is_some_and(|(at, _)| *at <= t + 1e-9) {
            delivered_frames.push(pipeline.pop_front().expect("front exists").1);
        }

        trace.mark(Stage::Guard);
        let mut fused_now = Vec::new();
        for frame in delivered_frames {
            if mit.sequence_guard {
                match guard_sequence(&frame, last_accepted) {
                    GuardDecision::Accept => last_accepted = Some((frame.timestamp, frame.sequence)),
                    GuardDecision::Reject(_) => {
                        metrics.frames_rejected += 1;
                        continue;
                    }
                }
            }
            fused_now.push(frame);
        }
        trace.mark(Stage::Fuse);
        for frame in fused_now {
            let Some(est) = fuse_pad_position(&frame, &layout, &eus, mit.tagging) else {
                continue;
            };
            metrics.fusions += 1;
            if est.contributors.iter().any(|id| layout.marker(id).is_none()) {
                metrics.foreign_fusions += 1;
                trigger(&mut uca, "UCA-2", t);
            }
            if last_fused.is_some_and(|prev| est.timestamp <= prev) {
                metrics.fusions_out_of_order += 1;
                trigger(&mut uca, "UCA-3", t);
            }
            last_fused = Some(est.timestamp);
            pad_err_sum += (est.relative_offset - (pad_center - truth.position)).norm();
            latest_pad = Some(est);
        }
        let fresh = latest_pad
            .as_ref()
            .filter(|p| t - p.timestamp <= est_cfg.vision_timeout + 1e-9);

        trace.mark(Stage::Switch);
        let input = SwitchInput {
            eus_altitude: eus.altitude,
            belief_bias: readings.switch_altitude_bias,
            vision_available: fresh.is_some(),
            ir_altitude: readings.ir_altitude,
        };
        let source = switch_source(&input, est_cfg.switch_threshold, est_cfg.switch_hysteresis, eus.altitude_source);
        trace.mark(Stage::Estimate);
        eus = update_eus(&readings, fresh, source, &eus, &pad_center, est_cfg, dt);

        trace.mark(Stage::Guidance);
        let phase = guidance.phase;
        let landing_watch = phase.kind == PhaseKind::Descent || (phase.kind == PhaseKind::Aborted && !phase.on_ground);
        let touched_down = if landing_watch {
            detector.update(&eus, &readings, mit.secondary_altitude, t)
        } else {
            detector = TouchdownDetector::new(config.touchdown_config);
            false
        };
        let abort = !abort_fired && plan.abort_at.is_some_and(|a| t >= a);
        abort_fired |= abort;
        guidance = next_reference(&guidance, &eus, fresh, plan, GuidanceEvents { touched_down, abort }, t, dt);
        if guidance.phase.kind == PhaseKind::TakeOff && takeoff_at.is_none() {
            takeoff_at = Some(t);
        }

        let armed = guidance.phase.armed();
        let mut cmd = ActuatorCommand::ZERO;
        if armed {
            trace.mark(Stage::Cascade);
            let gains = scaled_gains(&config.gain_set, &faults, t);
            match cascade_step(&guidance.reference, &eus, &gains, &cstate, dt) {
                Ok((nominal, next)) => {
                    trace.mark(Stage::Adaptive);
                    let (out, next) =
                        adaptive_augment(&next, &eus, nominal, &gains, &config.adaptive_config, dt, mit.adaptive);
                    cstate = next;
                    trace.mark(Stage::Allocate);
                    let (thrusts, _) = allocate(out.collective, &out.torques, vp);
                    cstate.record_applied(forward_mix(&thrusts, vp).0);
                    trace.mark(Stage::Schedule);
                    cmd = schedule(&ActuatorCommand::from_thrusts(thrusts), FlightMode::Hover)?;
                }
                Err(_) => {
                    metrics.control_errors += 1;
                    trigger(&mut uca, "UCA-5", t);
                }
            }
        } else {
            cstate = ControllerState::default();
        }
        trace.mark(Stage::InjectCommands);
        let mut age: f64 = 0.0;
        for (f, q) in command_faults.iter().zip(command_queues.iter_mut()) {
            cmd = inject_commands(f, &cmd, t, q)?;
            age = age.max(q.last_age);
        }
        delivered = cmd;

        // UCA trigger log
        let in_flight = matches!(guidance.phase.kind, PhaseKind::TakeOff | PhaseKind::HoverHold | PhaseKind::Descent);
        let has_pad = fresh.is_some();
        if matches!(guidance.phase.kind, PhaseKind::TakeOff | PhaseKind::Descent)
            && !has_pad
            && truth.position.z > 0.3
            && layout.markers.iter().any(|m| in_view(&truth, &layout.marker_position(m), m.side, &camera))
        {
            trigger(&mut uca, "UCA-1", t);
        }
        if guidance.phase.kind == PhaseKind::Descent && had_pad && !has_pad {
            trigger(&mut uca, "UCA-4", t);
        }
        had_pad = has_pad;
        if armed && delivered.thrusts.is_zero() {
            trigger(&mut uca, "UCA-5", t);
        }
        if in_flight && (truth.position.z - guidance.reference.position.z).abs() > settings.deviation_limit {
            trigger(&mut uca, "UCA-6", t);
        }
        if armed && age > settings.delay_limit {
            trigger(&mut uca, "UCA-8", t);
        }
        if truth.grounded {
            if airborne_once {
                grounded_for += dt;
            }
        } else {
            grounded_for = 0.0;
            airborne_once |= truth.position.z > 0.5;
        }
        if airborne_once && grounded_for >= settings.ground_settle - 1e-9 && !delivered.thrusts.is_zero() {
            metrics.post_touchdown_thrust_ticks += 1;
            trigger(&mut uca, "UCA-7", t);
        }

        if let Some(s) = trim_shift_at {
            if guidance.phase.kind == PhaseKind::HoverHold && t >= s + 1.0 && t <= s + 5.0 {
                wind_err.0 += (truth.position.z - plan.hover_point().z).abs();
                wind_err.1 += 1;
            }
        }

        if ticks.is_multiple_of(settings.decimation as u64) {
            samples.push(Sample {
                time: t,
                phase: guidance.phase.kind,
                source: eus.altitude_source,
                truth_position: arr(&truth.position),
                truth_velocity: arr(&truth.velocity),
                truth_tilt: truth.tilt(),
                eus_position: arr(&eus.position),
                eus_altitude: eus.altitude,
                reference: arr(&guidance.reference.position),
                thrusts: delivered.thrusts.0,
            });
        }
    };

    if crashed {
        touchdown_position = None;
    }
    metrics.pad_estimate_error = (metrics.fusions > 0).then(|| pad_err_sum / metrics.fusions as f64);
    metrics.wind_step_altitude_error = (wind_err.1 > 0).then(|| wind_err.0 / wind_err.1 as f64);

    let end = truth.time;
    let armed_duration = match takeoff_at {
        Some(t0) => cut_at.unwrap_or(end) - t0,
        None => 0.0,
    };
    let touchdown_time = (guidance.phase.kind == PhaseKind::TouchedDown && !crashed).then_some(guidance.phase.entered);
    let mut violations = monitor.violations;
    violations.extend(finalize(
        &RunSummary {
            end_time: end,
            touchdown: touchdown_position,
            armed_duration,
        },
        mon_cfg,
    ));
    let rollup = rollup(&violations, &bundled_model())?;
    let landing_error = touchdown_position.map(|p| (Vector3::from(p) - plan.pad_center()).xy().norm());

    let report = RunReport {
        seed,
        scenario: settings.scenario.clone(),
        mitigations: mit,
        outcome,
        ticks,
        duration: end,
        touchdown_time,
        touchdown_position,
        landing_error,
        armed_duration,
        violations,
        rollup,
        uca_triggers: uca,
        metrics,
        samples,
    };
    Ok((report, trace.record))
}
