//! Ground-truth quadrotor rigid body in the hover regime.
//!
//! World frame is z-up. Motors sit in an X configuration at ±45° from the
//! body x axis, numbered counter-clockwise from front-left:
//!
//! ```text
//!      x
//!   0  ^  3
//!    \ | /
//!      +--> -y
//!    /   \
//!   1     2
//! ```
//!
//! Motors 0 and 2 produce positive yaw reaction torque, 1 and 3 negative.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest integration step accepted by [`step`].
pub const MAX_DT: f64 = 0.02;

/// Per-motor signs of the roll, pitch and yaw torque contributions.
pub const ROLL_SIGN: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
pub const PITCH_SIGN: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
pub const YAW_SIGN: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("time step {0} outside (0, {MAX_DT}]")]
    InvalidTimeStep(f64),
    #[error("invalid vehicle parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },
    #[error("hover infeasible: trim thrust {trim:.3} N exceeds motor limit {max:.3} N")]
    Infeasible { trim: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub mass: f64,
    pub inertia: [f64; 3],
    pub arm_length: f64,
    /// Yaw reaction torque per newton of thrust, in metres.
    pub yaw_moment_coeff: f64,
    pub max_motor_thrust: f64,
    /// Linear drag in 1/s per world axis. Zero disables drag on that axis.
    pub drag: [f64; 3],
    pub gravity: f64,
    /// Vertical impact speed above which ground contact is a crash.
    pub crash_speed: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1.5,
            inertia: [0.029, 0.029, 0.055],
            arm_length: 0.25,
            yaw_moment_coeff: 0.016,
            max_motor_thrust: 8.0,
            drag: [0.3, 0.3, 0.3],
            gravity: 9.81,
            crash_speed: 3.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let positive = |field: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(DynamicsError::InvalidParams {
                    field,
                    reason: format!("{v} must be finite and > 0"),
                })
            }
        };
        positive("mass", self.mass)?;
        for v in self.inertia {
            positive("inertia", v)?;
        }
        positive("arm_length", self.arm_length)?;
        positive("yaw_moment_coeff", self.yaw_moment_coeff)?;
        positive("max_motor_thrust", self.max_motor_thrust)?;
        positive("gravity", self.gravity)?;
        positive("crash_speed", self.crash_speed)?;
        if self.drag.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(DynamicsError::InvalidParams {
                field: "drag",
                reason: "drag coefficients must be finite and >= 0".into(),
            });
        }
        if 4.0 * self.max_motor_thrust <= self.mass * self.gravity {
            return Err(DynamicsError::Infeasible {
                trim: self.mass * self.gravity / 4.0,
                max: self.max_motor_thrust,
            });
        }
        Ok(())
    }

    /// Moment arm of each motor about the roll and pitch axes.
    pub fn moment_arm(&self) -> f64 {
        self.arm_length * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.inertia))
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorThrusts(pub [f64; 4]);

impl MotorThrusts {
    pub const ZERO: MotorThrusts = MotorThrusts([0.0; 4]);

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|t| *t == 0.0)
    }

    pub fn clamped(&self, max: f64) -> MotorThrusts {
        MotorThrusts(self.0.map(|t| t.clamp(0.0, max)))
    }
}

/// Collective thrust and body torques produced by four motor thrusts.
pub fn forward_mix(thrusts: &MotorThrusts, params: &VehicleParams) -> (f64, Vector3<f64>) {
    let d = params.moment_arm();
    let k = params.yaw_moment_coeff;
    let mut torque = Vector3::zeros();
    for (i, f) in thrusts.0.iter().enumerate() {
        torque.x += d * ROLL_SIGN[i] * f;
        torque.y += d * PITCH_SIGN[i] * f;
        torque.z += k * YAW_SIGN[i] * f;
    }
    (thrusts.total(), torque)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindStep {
    pub at: f64,
    pub velocity: [f64; 3],
}

/// Constant wind plus a piecewise-constant step schedule. After a step's
/// `at` time its velocity replaces the constant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindField {
    pub constant: [f64; 3],
    pub steps: Vec<WindStep>,
}

impl WindField {
    pub fn calm() -> Self {
        Self::default()
    }

    pub fn constant(v: Vector3<f64>) -> Self {
        Self {
            constant: v.into(),
            steps: Vec::new(),
        }
    }

    pub fn velocity_at(&self, t: f64) -> Vector3<f64> {
        self.steps
            .iter()
            .filter(|s| s.at <= t)
            .max_by(|a, b| a.at.total_cmp(&b.at))
            .map(|s| Vector3::from(s.velocity))
            .unwrap_or_else(|| Vector3::from(self.constant))
    }

    pub fn is_finite(&self) -> bool {
        self.constant.iter().all(|v| v.is_finite())
            && self
                .steps
                .iter()
                .all(|s| s.at.is_finite() && s.velocity.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Body to world rotation.
    pub attitude: UnitQuaternion<f64>,
    /// Body-frame angular rate.
    pub angular_rate: Vector3<f64>,
    pub time: f64,
    /// World-frame linear acceleration over the last step.
    pub acceleration: Vector3<f64>,
    pub grounded: bool,
    /// Vertical speed at the moment of the most recent ground impact; zero
    /// on every other step.
    pub impact_speed: f64,
}

impl RigidBodyState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            angular_rate: Vector3::zeros(),
            time: 0.0,
            acceleration: Vector3::zeros(),
            grounded: position.z <= 0.0,
            impact_speed: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        let q = self.attitude.quaternion();
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.angular_rate.iter().all(|v| v.is_finite())
            && q.coords.iter().all(|v| v.is_finite())
            && self.time.is_finite()
    }

    /// Angle between body z and world z.
    pub fn tilt(&self) -> f64 {
        tilt_of(&self.attitude)
    }

    /// Accelerometer specific force in the body frame.
    pub fn specific_force(&self, gravity: f64) -> Vector3<f64> {
        self.attitude
            .inverse_transform_vector(&(self.acceleration + Vector3::new(0.0, 0.0, gravity)))
    }
}

pub fn tilt_of(q: &UnitQuaternion<f64>) -> f64 {
    let z = q * Vector3::z();
    z.z.clamp(-1.0, 1.0).acos()
}

/// Advances the rigid body by one semi-implicit step.
pub fn step(
    state: &RigidBodyState,
    thrusts: &MotorThrusts,
    wind: &WindField,
    params: &VehicleParams,
    dt: f64,
) -> Result<RigidBodyState, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(DynamicsError::InvalidTimeStep(dt));
    }
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if thrusts.0.iter().any(|t| !t.is_finite()) {
        return Err(DynamicsError::NonFinite("motor thrust"));
    }
    if !wind.is_finite() {
        return Err(DynamicsError::NonFinite("wind"));
    }
    let thrusts = thrusts.clamped(params.max_motor_thrust);
    let (collective, torque) = forward_mix(&thrusts, params);

    let air = wind.velocity_at(state.time);
    let drag = Vector3::from(params.drag);
    let thrust_world = state.attitude * Vector3::new(0.0, 0.0, collective / params.mass);
    let accel = thrust_world - Vector3::new(0.0, 0.0, params.gravity)
        - drag.component_mul(&(state.velocity - air));

    let velocity = state.velocity + accel * dt;
    let mut position = state.position + (state.velocity + velocity) * (0.5 * dt);

    let inertia = params.inertia_matrix();
    let w = state.angular_rate;
    let gyroscopic = w.cross(&(inertia * w));
    let angular_accel = (torque - gyroscopic).component_div(&Vector3::from(params.inertia));
    let angular_rate = w + angular_accel * dt;
    let mut attitude = state.attitude * UnitQuaternion::from_scaled_axis(angular_rate * dt);
    attitude.renormalize();

    let mut next = RigidBodyState {
        position,
        velocity,
        attitude,
        angular_rate,
        time: state.time + dt,
        acceleration: accel,
        grounded: false,
        impact_speed: 0.0,
    };

    if position.z <= 0.0 && velocity.z <= 0.0 {
        if state.grounded {
            position.x = state.position.x;
            position.y = state.position.y;
        } else {
            next.impact_speed = -velocity.z;
        }
        position.z = 0.0;
        next.position = position;
        next.attitude = state.attitude;
        next.velocity = Vector3::zeros();
        next.angular_rate = Vector3::zeros();
        next.acceleration = Vector3::zeros();
        next.grounded = true;
    }

    if !next.is_finite() {
        return Err(DynamicsError::NonFinite("integrated state"));
    }
    Ok(next)
}

/// Equal per-motor thrust that balances weight.
pub fn hover_trim(params: &VehicleParams) -> Result<MotorThrusts, DynamicsError> {
    let trim = params.weight() / 4.0;
    if trim > params.max_motor_thrust {
        return Err(DynamicsError::Infeasible {
            trim,
            max: params.max_motor_thrust,
        });
    }
    Ok(MotorThrusts([trim; 4]))
}
