use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::RigidBodyState;

/// One-sigma noise levels and the IR range gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Per-axis white noise on GPS position (m).
    pub gps_sigma: f64,
    /// Sigma of the constant horizontal GPS offset drawn once per run (m).
    pub gps_bias_sigma: f64,
    pub baro_sigma: f64,
    pub accel_sigma: f64,
    pub gyro_sigma: f64,
    pub heading_sigma: f64,
    pub ir_sigma: f64,
    /// IR beacon readings exist only below this slant range (m).
    pub ir_range: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            gps_sigma: 0.3,
            gps_bias_sigma: 1.5,
            baro_sigma: 0.05,
            accel_sigma: 0.05,
            gyro_sigma: 0.005,
            heading_sigma: 0.01,
            ir_sigma: 0.01,
            ir_range: 20.0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            gps_sigma: 0.0,
            gps_bias_sigma: 0.0,
            baro_sigma: 0.0,
            accel_sigma: 0.0,
            gyro_sigma: 0.0,
            heading_sigma: 0.0,
            ir_sigma: 0.0,
            ir_range: 20.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("gps_sigma", self.gps_sigma),
            ("gps_bias_sigma", self.gps_bias_sigma),
            ("baro_sigma", self.baro_sigma),
            ("accel_sigma", self.accel_sigma),
            ("gyro_sigma", self.gyro_sigma),
            ("heading_sigma", self.heading_sigma),
            ("ir_sigma", self.ir_sigma),
            ("ir_range", self.ir_range),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Per-run horizontal GPS offset.
    pub fn draw_gps_bias<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector3<f64> {
        Vector3::new(
            gaussian(rng, self.gps_bias_sigma),
            gaussian(rng, self.gps_bias_sigma),
            0.0,
        )
    }
}

/// Sensor outputs for one tick. The two bias fields are zero unless a fault
/// writes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReadings {
    pub gps_position: Vector3<f64>,
    pub gps_valid: bool,
    pub baro_altitude: f64,
    /// Body-frame specific force (m/s²).
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
    pub heading: f64,
    pub ir_altitude: Option<f64>,
    pub timestamp: f64,
    /// Added to the altitude the source-switching logic sees.
    pub switch_altitude_bias: f64,
    /// Added to the barometric and vision altitude feeding the estimate.
    pub eus_altitude_bias: f64,
}

impl SensorReadings {
    pub fn is_finite(&self) -> bool {
        self.gps_position.iter().all(|v| v.is_finite())
            && self.baro_altitude.is_finite()
            && self.accel.iter().all(|v| v.is_finite())
            && self.gyro.iter().all(|v| v.is_finite())
            && self.heading.is_finite()
            && self.ir_altitude.is_none_or(f64::is_finite)
            && self.switch_altitude_bias.is_finite()
            && self.eus_altitude_bias.is_finite()
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    Vector3::new(gaussian(rng, sigma), gaussian(rng, sigma), gaussian(rng, sigma))
}

/// Per-run sensor installation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSetup {
    pub gps_bias: Vector3<f64>,
    /// IR beacon position; `None` when the beacon is not installed.
    pub ir_beacon: Option<Vector3<f64>>,
    pub gravity: f64,
}

impl SensorSetup {
    pub fn unbiased(gravity: f64) -> Self {
        Self {
            gps_bias: Vector3::zeros(),
            ir_beacon: None,
            gravity,
        }
    }

    pub fn with_ir(mut self, beacon: Vector3<f64>) -> Self {
        self.ir_beacon = Some(beacon);
        self
    }
}

/// Samples every channel from ground truth. Draw order is fixed and does not
/// depend on the IR beacon, so installing it leaves other channels' noise
/// unchanged for a given stream.
pub fn simulate_sensors<R: Rng + ?Sized>(
    truth: &RigidBodyState,
    noise: &NoiseConfig,
    setup: &SensorSetup,
    rng: &mut R,
) -> SensorReadings {
    let gravity = setup.gravity;
    let gps_position = truth.position + setup.gps_bias + gaussian3(rng, noise.gps_sigma);
    let baro_altitude = truth.position.z + gaussian(rng, noise.baro_sigma);
    let accel = truth.specific_force(gravity) + gaussian3(rng, noise.accel_sigma);
    let gyro = truth.angular_rate + gaussian3(rng, noise.gyro_sigma);
    let (_, _, yaw) = truth.attitude.euler_angles();
    let heading = yaw + gaussian(rng, noise.heading_sigma);

    let ir_noise = gaussian(rng, noise.ir_sigma);
    let ir_altitude = setup
        .ir_beacon
        .filter(|b| (truth.position - b).norm() < noise.ir_range)
        .map(|b| truth.position.z - b.z + ir_noise);

    SensorReadings {
        gps_position,
        gps_valid: true,
        baro_altitude,
        accel,
        gyro,
        heading,
        ir_altitude,
        timestamp: truth.time,
        switch_altitude_bias: 0.0,
        eus_altitude_bias: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ir_setup() -> SensorSetup {
        SensorSetup::unbiased(9.81).with_ir(Vector3::zeros())
    }

    fn hovering() -> RigidBodyState {
        let mut s = RigidBodyState::at_rest(Vector3::new(1.0, 2.0, 8.0));
        s.attitude = UnitQuaternion::from_euler_angles(0.05, -0.02, 0.7);
        s.angular_rate = Vector3::new(0.1, 0.0, -0.2);
        s.time = 3.0;
        s
    }

    #[test]
    fn zero_noise_reproduces_truth() {
        let truth = hovering();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = simulate_sensors(&truth, &NoiseConfig::noiseless(), &ir_setup(), &mut rng);
        assert_eq!(r.gps_position, truth.position);
        assert_eq!(r.baro_altitude, truth.position.z);
        assert_eq!(r.gyro, truth.angular_rate);
        assert_eq!(r.accel, truth.specific_force(9.81));
        assert!((r.heading - 0.7).abs() < 1e-12);
        assert_eq!(r.ir_altitude, Some(8.0));
        assert_eq!(r.timestamp, 3.0);
    }

    #[test]
    fn ir_absent_when_disabled_or_out_of_range() {
        let truth = hovering();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = NoiseConfig::default();
        assert!(simulate_sensors(&truth, &noise, &SensorSetup::unbiased(9.81), &mut rng)
            .ir_altitude
            .is_none());
        let far = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 30.0));
        assert!(simulate_sensors(&far, &noise, &ir_setup(), &mut rng)
            .ir_altitude
            .is_none());
    }

    #[test]
    fn gps_sigma_statistics() {
        let truth = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 5.0));
        let noise = NoiseConfig {
            gps_sigma: 1.0,
            ..NoiseConfig::noiseless()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| simulate_sensors(&truth, &noise, &SensorSetup::unbiased(9.81), &mut rng).gps_position.x)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 1.0).abs() < 0.05, "sample sigma {}", var.sqrt());
    }

    #[test]
    fn ir_toggle_does_not_shift_other_channels() {
        let truth = hovering();
        let noise = NoiseConfig::default();
        let a = simulate_sensors(&truth, &noise, &SensorSetup::unbiased(9.81), &mut ChaCha8Rng::seed_from_u64(9));
        let b = simulate_sensors(&truth, &noise, &ir_setup(), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.gps_position, b.gps_position);
        assert_eq!(a.heading, b.heading);
        assert!(b.ir_altitude.is_some());
    }
}
