//! Cascaded multirotor controller (position, velocity, attitude, angular
//! rate), control allocation, the flight-mode scheduler and the adaptive
//! disturbance-observer augmentation.

mod adaptive;
mod allocation;
mod cascade;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adaptive::{acceleration_residual, adaptive_augment, AdaptiveConfig};
pub use allocation::allocate;
pub use cascade::cascade_step;

use crate::dynamics::MotorThrusts;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("non-finite value in the {0} loop")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("flight mode {0:?} is outside the hover scope")]
    OutOfScope(FlightMode),
    #[error("invalid gain `{field}`: {reason}")]
    InvalidGain { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pid {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Pid {
    pub const fn new(kp: f64, ki: f64, kd: f64) -> Self {
        Self { kp, ki, kd }
    }

    fn scaled(self, k: f64) -> Self {
        Self::new(self.kp * k, self.ki * k, self.kd * k)
    }
}

/// The controller's own model of the airframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantModel {
    pub mass: f64,
    pub gravity: f64,
    pub inertia: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainSet {
    pub position_p_xy: f64,
    pub position_p_z: f64,
    pub velocity_xy: Pid,
    pub velocity_z: Pid,
    pub tilt_p: f64,
    pub yaw_p: f64,
    pub rate_roll_pitch: Pid,
    pub rate_yaw: Pid,
    pub max_velocity_xy: f64,
    pub max_velocity_z: f64,
    pub max_tilt: f64,
    pub max_rate: f64,
    pub max_torque: [f64; 3],
    /// Bounds on the commanded vertical acceleration (both positive numbers).
    pub max_accel_up: f64,
    pub max_accel_down: f64,
    pub velocity_integral_limit: f64,
    pub rate_integral_limit: f64,
    /// Position and velocity loop rate; attitude and rate loops run every call.
    pub outer_loop_hz: f64,
    pub model: PlantModel,
}

impl Default for GainSet {
    fn default() -> Self {
        Self {
            position_p_xy: 1.0,
            position_p_z: 1.5,
            velocity_xy: Pid::new(2.5, 0.4, 0.0),
            velocity_z: Pid::new(4.0, 0.5, 0.0),
            tilt_p: 8.0,
            yaw_p: 3.0,
            rate_roll_pitch: Pid::new(25.0, 5.0, 0.0),
            rate_yaw: Pid::new(10.0, 1.0, 0.0),
            max_velocity_xy: 3.0,
            max_velocity_z: 2.0,
            max_tilt: 35f64.to_radians(),
            max_rate: 3.0,
            max_torque: [1.5, 1.5, 0.3],
            max_accel_up: 8.0,
            max_accel_down: 6.0,
            velocity_integral_limit: 2.0,
            rate_integral_limit: 1.0,
            outer_loop_hz: 50.0,
            model: PlantModel {
                mass: 1.5,
                gravity: 9.81,
                inertia: [0.029, 0.029, 0.055],
            },
        }
    }
}

impl GainSet {
    pub fn validate(&self) -> Result<(), ControlError> {
        let nonneg = |field: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ControlError::InvalidGain {
                    field,
                    reason: format!("{v} must be finite and >= 0"),
                })
            }
        };
        let positive = |field: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ControlError::InvalidGain {
                    field,
                    reason: format!("{v} must be finite and > 0"),
                })
            }
        };
        nonneg("position_p_xy", self.position_p_xy)?;
        nonneg("position_p_z", self.position_p_z)?;
        for (name, pid) in [
            ("velocity_xy", self.velocity_xy),
            ("velocity_z", self.velocity_z),
            ("rate_roll_pitch", self.rate_roll_pitch),
            ("rate_yaw", self.rate_yaw),
        ] {
            nonneg(name, pid.kp)?;
            nonneg(name, pid.ki)?;
            nonneg(name, pid.kd)?;
        }
        nonneg("tilt_p", self.tilt_p)?;
        nonneg("yaw_p", self.yaw_p)?;
        positive("max_velocity_xy", self.max_velocity_xy)?;
        positive("max_velocity_z", self.max_velocity_z)?;
        positive("max_tilt", self.max_tilt)?;
        positive("max_rate", self.max_rate)?;
        for t in self.max_torque {
            positive("max_torque", t)?;
        }
        positive("max_accel_up", self.max_accel_up)?;
        positive("max_accel_down", self.max_accel_down)?;
        positive("velocity_integral_limit", self.velocity_integral_limit)?;
        positive("rate_integral_limit", self.rate_integral_limit)?;
        positive("outer_loop_hz", self.outer_loop_hz)?;
        positive("model.mass", self.model.mass)?;
        positive("model.gravity", self.model.gravity)?;
        for i in self.model.inertia {
            positive("model.inertia", i)?;
        }
        if self.max_tilt >= std::f64::consts::FRAC_PI_2 {
            return Err(ControlError::InvalidGain {
                field: "max_tilt",
                reason: "must be below 90 degrees".into(),
            });
        }
        Ok(())
    }

    /// Every loop gain multiplied by `factor`; limits and model unchanged.
    pub fn scaled(&self, factor: f64) -> GainSet {
        GainSet {
            position_p_xy: self.position_p_xy * factor,
            position_p_z: self.position_p_z * factor,
            velocity_xy: self.velocity_xy.scaled(factor),
            velocity_z: self.velocity_z.scaled(factor),
            tilt_p: self.tilt_p * factor,
            yaw_p: self.yaw_p * factor,
            rate_roll_pitch: self.rate_roll_pitch.scaled(factor),
            rate_yaw: self.rate_yaw.scaled(factor),
            ..self.clone()
        }
    }

    pub fn outer_period(&self) -> f64 {
        1.0 / self.outer_loop_hz
    }

    pub fn hover_thrust(&self) -> f64 {
        self.model.mass * self.model.gravity
    }
}

/// Position and yaw setpoint from guidance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub position: Vector3<f64>,
    pub yaw: f64,
}

impl Reference {
    pub fn new(position: Vector3<f64>, yaw: f64) -> Self {
        Self { position, yaw }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.yaw.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub velocity_integral: Vector3<f64>,
    pub prev_velocity_error: Option<Vector3<f64>>,
    pub rate_integral: Vector3<f64>,
    pub prev_rate_error: Option<Vector3<f64>>,
    /// Time since the outer loops last ran; `None` until the first run.
    pub outer_elapsed: Option<f64>,
    pub velocity_setpoint: Vector3<f64>,
    /// Desired force per unit mass direction scaled by mass (N, world).
    pub thrust_setpoint: Vector3<f64>,
    pub attitude_setpoint: UnitQuaternion<f64>,
    pub rate_setpoint: Vector3<f64>,
    /// Translational disturbance estimate (m/s², world).
    pub disturbance: Vector3<f64>,
    /// Collective thrust actually delivered to the motors on the last tick.
    pub applied_collective: f64,
    pub last_collective: f64,
    pub last_torques: Vector3<f64>,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            velocity_integral: Vector3::zeros(),
            prev_velocity_error: None,
            rate_integral: Vector3::zeros(),
            prev_rate_error: None,
            outer_elapsed: None,
            velocity_setpoint: Vector3::zeros(),
            thrust_setpoint: Vector3::zeros(),
            attitude_setpoint: UnitQuaternion::identity(),
            rate_setpoint: Vector3::zeros(),
            disturbance: Vector3::zeros(),
            applied_collective: 0.0,
            last_collective: 0.0,
            last_torques: Vector3::zeros(),
        }
    }
}

impl ControllerState {
    pub fn record_applied(&mut self, collective: f64) {
        self.applied_collective = collective;
    }

    pub fn is_finite(&self) -> bool {
        self.velocity_integral.iter().all(|v| v.is_finite())
            && self.rate_integral.iter().all(|v| v.is_finite())
            && self.disturbance.iter().all(|v| v.is_finite())
            && self.last_collective.is_finite()
            && self.last_torques.iter().all(|v| v.is_finite())
    }
}

/// Collective thrust (N) and body torques (N·m) requested of the mixer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeOutput {
    pub collective: f64,
    pub torques: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlightMode {
    Hover,
    Transition,
    FixedWing,
    BackTransition,
}

/// Number of control surfaces carried in an [`ActuatorCommand`].
pub const SURFACE_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub thrusts: MotorThrusts,
    /// Aileron, elevator, rudder deflections (rad); unused in hover.
    pub surfaces: [f64; SURFACE_COUNT],
}

impl ActuatorCommand {
    pub const ZERO: ActuatorCommand = ActuatorCommand {
        thrusts: MotorThrusts::ZERO,
        surfaces: [0.0; SURFACE_COUNT],
    };

    pub fn from_thrusts(thrusts: MotorThrusts) -> Self {
        Self {
            thrusts,
            surfaces: [0.0; SURFACE_COUNT],
        }
    }
}

/// Level-2 scheduler: routes commands according to flight mode.
pub fn schedule(cmd: &ActuatorCommand, mode: FlightMode) -> Result<ActuatorCommand, ControlError> {
    match mode {
        FlightMode::Hover => Ok(ActuatorCommand {
            thrusts: cmd.thrusts,
            surfaces: [0.0; SURFACE_COUNT],
        }),
        FlightMode::FixedWing => Ok(ActuatorCommand {
            thrusts: MotorThrusts::ZERO,
            surfaces: cmd.surfaces,
        }),
        FlightMode::Transition | FlightMode::BackTransition => Err(ControlError::OutOfScope(mode)),
    }
}
