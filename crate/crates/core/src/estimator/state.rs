use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Which measurement drives the altitude and position correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AltitudeSource {
    Baro,
    Vision,
    Ir,
}

/// Estimator output consumed by guidance and control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedUavState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    /// Latest gyro reading, body frame.
    pub angular_rate: Vector3<f64>,
    /// Latest accelerometer reading, body frame.
    pub specific_force: Vector3<f64>,
    /// Height above the ground plane; equals `position.z`.
    pub altitude: f64,
    pub altitude_source: AltitudeSource,
    pub timestamp: f64,
}

impl EstimatedUavState {
    /// Level, at rest, at `position`, as an accelerometer would read it.
    pub fn at_rest(position: Vector3<f64>, gravity: f64) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            angular_rate: Vector3::zeros(),
            specific_force: Vector3::new(0.0, 0.0, gravity),
            altitude: position.z,
            altitude_source: AltitudeSource::Baro,
            timestamp: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.angular_rate.iter().all(|v| v.is_finite())
            && self.specific_force.iter().all(|v| v.is_finite())
            && self.attitude.coords.iter().all(|v| v.is_finite())
            && self.altitude.is_finite()
    }
}
