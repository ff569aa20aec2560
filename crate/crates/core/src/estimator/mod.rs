//! Sensor simulation, fiducial-marker detection and fusion, source switching
//! and the complementary-filter state estimate.

mod sensors;
mod state;
mod vision;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub use sensors::{simulate_sensors, NoiseConfig, SensorReadings, SensorSetup};
pub use state::{AltitudeSource, EstimatedUavState};
pub use vision::{
    detect_marker, fuse_pad_position, guard_sequence, render_detections, CameraConfig, CameraFrame,
    GuardDecision, LandingPadEstimate, Marker, MarkerDetection, PadLayout, RejectReason, Visibility,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Natural frequency of the vertical position/velocity filter (rad/s).
    pub position_bandwidth: f64,
    /// Natural frequency of the horizontal position/velocity filter (rad/s).
    pub horizontal_bandwidth: f64,
    /// Tilt correction gain from the accelerometer (1/s).
    pub attitude_gain: f64,
    /// Yaw correction gain from the heading reading (1/s).
    pub heading_gain: f64,
    /// Accelerometer corrections are used only while |f| / g lies in this band.
    pub accel_gate: [f64; 2],
    pub switch_threshold: f64,
    pub switch_hysteresis: f64,
    /// A pad estimate older than this no longer counts as available (s).
    pub vision_timeout: f64,
    pub gravity: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            position_bandwidth: 10.0,
            horizontal_bandwidth: 10.0,
            attitude_gain: 0.05,
            heading_gain: 0.5,
            accel_gate: [0.5, 1.5],
            switch_threshold: 10.0,
            switch_hysteresis: 0.5,
            vision_timeout: 0.3,
            gravity: 9.81,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("position_bandwidth", self.position_bandwidth),
            ("horizontal_bandwidth", self.horizontal_bandwidth),
            ("switch_threshold", self.switch_threshold),
            ("vision_timeout", self.vision_timeout),
            ("gravity", self.gravity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be > 0, got {v}"));
            }
        }
        for (name, v) in [
            ("attitude_gain", self.attitude_gain),
            ("heading_gain", self.heading_gain),
            ("switch_hysteresis", self.switch_hysteresis),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !(self.accel_gate[0] < self.accel_gate[1]) {
            return Err("accel_gate must be an increasing pair".into());
        }
        Ok(())
    }
}

/// Inputs to the source-switching decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchInput {
    pub eus_altitude: f64,
    /// Bias a fault may have added to the altitude the switch sees.
    pub belief_bias: f64,
    pub vision_available: bool,
    pub ir_altitude: Option<f64>,
}

impl SwitchInput {
    /// IR when present, otherwise the (possibly biased) EUS altitude.
    pub fn decision_altitude(&self) -> f64 {
        self.ir_altitude.unwrap_or(self.eus_altitude + self.belief_bias)
    }
}

/// Chooses the altitude/position source. Below the threshold vision wins
/// when available, then IR, then barometer. Staying below needs only to be
/// under threshold + hysteresis.
pub fn switch_source(input: &SwitchInput, threshold: f64, hysteresis: f64, previous: AltitudeSource) -> AltitudeSource {
    let h = input.decision_altitude();
    let limit = if previous == AltitudeSource::Baro {
        threshold
    } else {
        threshold + hysteresis
    };
    if h >= limit {
        return AltitudeSource::Baro;
    }
    if input.vision_available {
        AltitudeSource::Vision
    } else if input.ir_altitude.is_some() {
        AltitudeSource::Ir
    } else {
        AltitudeSource::Baro
    }
}

fn wrap_pi(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

/// Advances the estimate by one tick: gyro propagation with accelerometer and
/// heading correction, then a second-order complementary filter per axis
/// driven by the measurement the `source` decision selects. `pad` is the
/// freshest available pad estimate, `pad_center` the surveyed pad position.
pub fn update_eus(
    readings: &SensorReadings,
    pad: Option<&LandingPadEstimate>,
    source: AltitudeSource,
    prev: &EstimatedUavState,
    pad_center: &Vector3<f64>,
    cfg: &EstimatorConfig,
    dt: f64,
) -> EstimatedUavState {
    let g = cfg.gravity;

    // attitude
    let mut omega = readings.gyro;
    let f = readings.accel;
    let ratio = f.norm() / g;
    if ratio >= cfg.accel_gate[0] && ratio <= cfg.accel_gate[1] {
        let up_body = prev.attitude.inverse_transform_vector(&Vector3::z());
        omega += (f.normalize()).cross(&up_body) * cfg.attitude_gain;
    }
    let mut attitude = prev.attitude * UnitQuaternion::from_scaled_axis(omega * dt);
    let (_, _, yaw) = attitude.euler_angles();
    let yaw_err = wrap_pi(readings.heading - yaw);
    attitude = UnitQuaternion::from_scaled_axis(Vector3::z() * (cfg.heading_gain * yaw_err * dt)) * attitude;
    attitude.renormalize();

    // translation
    let accel_world = attitude * f - Vector3::new(0.0, 0.0, g);
    let mut velocity = prev.velocity + accel_world * dt;
    let mut position = prev.position + velocity * dt;

    let gps_xy = readings.gps_valid.then_some((readings.gps_position.x, readings.gps_position.y));
    let baro_z = readings.baro_altitude + readings.eus_altitude_bias;
    let ir_z = readings.ir_altitude.map(|ir| pad_center.z + ir);
    let (meas_xy, meas_z) = match (source, pad) {
        (AltitudeSource::Vision, Some(p)) => {
            let own = p.own_position(pad_center);
            (Some((own.x, own.y)), ir_z.unwrap_or(own.z + readings.eus_altitude_bias))
        }
        _ => (gps_xy, ir_z.unwrap_or(baro_z)),
    };

    let mut correct = |axis: usize, y: f64, w: f64| {
        let e = y - position[axis];
        position[axis] += 2.0 * w * e * dt;
        velocity[axis] += w * w * e * dt;
    };
    if let Some((x, y)) = meas_xy {
        correct(0, x, cfg.horizontal_bandwidth);
        correct(1, y, cfg.horizontal_bandwidth);
    }
    correct(2, meas_z, cfg.position_bandwidth);

    EstimatedUavState {
        position,
        velocity,
        attitude,
        angular_rate: readings.gyro,
        specific_force: f,
        altitude: position.z,
        altitude_source: source,
        timestamp: readings.timestamp,
    }
}

/// Initial estimate taken straight from the first readings.
pub fn initial_eus(readings: &SensorReadings) -> EstimatedUavState {
    let mut eus = EstimatedUavState::at_rest(
        Vector3::new(
            readings.gps_position.x,
            readings.gps_position.y,
            readings.baro_altitude + readings.eus_altitude_bias,
        ),
        readings.accel.norm(),
    );
    eus.attitude = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), readings.heading);
    eus.specific_force = readings.accel;
    eus.angular_rate = readings.gyro;
    eus.timestamp = readings.timestamp;
    eus
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::RigidBodyState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input(alt: f64, vision: bool, ir: Option<f64>) -> SwitchInput {
        SwitchInput {
            eus_altitude: alt,
            belief_bias: 0.0,
            vision_available: vision,
            ir_altitude: ir,
        }
    }

    #[test]
    fn switch_rules() {
        use AltitudeSource::*;
        assert_eq!(switch_source(&input(12.0, true, None), 10.0, 0.5, Baro), Baro);
        assert_eq!(switch_source(&input(8.0, true, None), 10.0, 0.5, Baro), Vision);
        assert_eq!(switch_source(&input(8.0, false, None), 10.0, 0.5, Baro), Baro);
        assert_eq!(switch_source(&input(8.0, false, Some(8.0)), 10.0, 0.5, Baro), Ir);
        // biased belief overridden by IR
        assert_eq!(switch_source(&input(8.0, true, Some(15.0)), 10.0, 0.5, Baro), Baro);
        let biased = SwitchInput {
            belief_bias: -5.0,
            ..input(12.0, true, None)
        };
        assert_eq!(switch_source(&biased, 10.0, 0.5, Baro), Vision);
    }

    #[test]
    fn switch_hysteresis() {
        use AltitudeSource::*;
        assert_eq!(switch_source(&input(10.2, true, None), 10.0, 0.5, Vision), Vision);
        assert_eq!(switch_source(&input(10.2, true, None), 10.0, 0.5, Baro), Baro);
        assert_eq!(switch_source(&input(10.6, true, None), 10.0, 0.5, Vision), Baro);
    }

    fn noiseless_readings(truth: &RigidBodyState) -> SensorReadings {
        simulate_sensors(
            truth,
            &NoiseConfig::noiseless(),
            &SensorSetup::unbiased(9.81),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
    }

    #[test]
    fn converges_to_stationary_truth() {
        let mut truth = RigidBodyState::at_rest(Vector3::new(1.0, -2.0, 6.0));
        truth.attitude = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.4);
        let cfg = EstimatorConfig::default();
        let mut eus = EstimatedUavState::at_rest(Vector3::new(1.3, -2.2, 5.8), 9.81);
        eus.attitude = truth.attitude;
        let dt = 0.002;
        for i in 0..500 {
            truth.time = (i + 1) as f64 * dt;
            let r = noiseless_readings(&truth);
            eus = update_eus(&r, None, AltitudeSource::Baro, &eus, &Vector3::zeros(), &cfg, dt);
        }
        assert!((eus.position - truth.position).norm() < 1e-3, "{:?}", eus.position);
        assert!(eus.attitude.angle_to(&truth.attitude) < 1e-9);
    }

    #[test]
    fn tilt_estimate_converges() {
        let mut truth = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 5.0));
        truth.attitude = UnitQuaternion::from_euler_angles(0.1, -0.05, 0.0);
        let cfg = EstimatorConfig {
            attitude_gain: 1.0,
            ..EstimatorConfig::default()
        };
        let mut eus = EstimatedUavState::at_rest(truth.position, 9.81);
        let dt = 0.002;
        for _ in 0..5000 {
            let r = noiseless_readings(&truth);
            eus = update_eus(&r, None, AltitudeSource::Baro, &eus, &Vector3::zeros(), &cfg, dt);
        }
        assert!(eus.attitude.angle_to(&truth.attitude) < 1e-3);
    }

    #[test]
    fn dead_reckoning_without_gps_diverges_monotonically() {
        let truth = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 5.0));
        let cfg = EstimatorConfig::default();
        let mut eus = EstimatedUavState::at_rest(truth.position, 9.81);
        let dt = 0.002;
        let mut last = 0.0;
        for _ in 0..1000 {
            let mut r = noiseless_readings(&truth);
            r.gps_valid = false;
            r.accel.x += 0.05;
            eus = update_eus(&r, None, AltitudeSource::Baro, &eus, &Vector3::zeros(), &cfg, dt);
            let err = (eus.position.xy() - truth.position.xy()).norm();
            assert!(err >= last);
            last = err;
        }
        assert!(last > 0.01);
    }

    #[test]
    fn vision_source_pulls_toward_pad_frame() {
        // GPS offset by 1.5 m; vision sees the pad from the true position
        let truth = RigidBodyState::at_rest(Vector3::new(0.5, 0.0, 4.0));
        let cfg = EstimatorConfig::default();
        let setup = SensorSetup {
            gps_bias: Vector3::new(1.5, 0.0, 0.0),
            ..SensorSetup::unbiased(9.81)
        };
        let pad = LandingPadEstimate {
            position: Vector3::zeros(),
            weight_sum: 1.0,
            timestamp: 0.0,
            contributors: Default::default(),
            relative_offset: -truth.position,
        };
        let mut eus = EstimatedUavState::at_rest(truth.position + setup.gps_bias, 9.81);
        for _ in 0..1000 {
            let r = simulate_sensors(&truth, &NoiseConfig::noiseless(), &setup, &mut ChaCha8Rng::seed_from_u64(0));
            eus = update_eus(&r, Some(&pad), AltitudeSource::Vision, &eus, &Vector3::zeros(), &cfg, 0.002);
            assert_eq!(eus.altitude_source, AltitudeSource::Vision);
        }
        assert!((eus.position - truth.position).norm() < 1e-3);
    }
}
