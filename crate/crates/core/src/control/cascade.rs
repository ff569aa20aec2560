use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::{CascadeOutput, ControlError, ControllerState, GainSet, Pid, Reference};
use crate::estimator::EstimatedUavState;

fn finite(v: &Vector3<f64>, loop_name: &'static str) -> Result<(), ControlError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ControlError::NonFinite(loop_name))
    }
}

fn clamp_xy(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.xy().norm();
    if n > max {
        Vector3::new(v.x * max / n, v.y * max / n, v.z)
    } else {
        v
    }
}

fn wrap_pi(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = a % two_pi;
    if a > std::f64::consts::PI {
        a -= two_pi;
    } else if a < -std::f64::consts::PI {
        a += two_pi;
    }
    a
}

fn pid_axis(g: Pid, e: f64, integral: f64, derivative: f64) -> f64 {
    g.kp * e + g.ki * integral + g.kd * derivative
}

/// Attitude whose body z is `z_axis` and whose heading is `yaw`.
fn attitude_from_thrust(z_axis: &Vector3<f64>, yaw: f64) -> UnitQuaternion<f64> {
    let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let mut y = z_axis.cross(&heading);
    if y.norm() < 1e-9 {
        y = Vector3::y();
    }
    let y = y.normalize();
    let x = y.cross(z_axis);
    let m = Matrix3::from_columns(&[x, y, *z_axis]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// Position P -> velocity PID: updates the velocity, thrust and attitude setpoints.
fn outer_loops(
    reference: &Reference,
    eus: &EstimatedUavState,
    gains: &GainSet,
    state: &mut ControllerState,
    dt: f64,
) -> Result<(), ControlError> {
    let pos_err = reference.position - eus.position;
    let v_sp = Vector3::new(
        gains.position_p_xy * pos_err.x,
        gains.position_p_xy * pos_err.y,
        (gains.position_p_z * pos_err.z).clamp(-gains.max_velocity_z, gains.max_velocity_z),
    );
    let v_sp = clamp_xy(v_sp, gains.max_velocity_xy);
    finite(&v_sp, "position")?;

    let v_err = v_sp - eus.velocity;
    let limit = gains.velocity_integral_limit;
    let integral = (state.velocity_integral + v_err * dt).map(|x| x.clamp(-limit, limit));
    let derivative = state
        .prev_velocity_error
        .map(|p| (v_err - p) / dt)
        .unwrap_or_else(Vector3::zeros);
    let mut accel = Vector3::new(
        pid_axis(gains.velocity_xy, v_err.x, integral.x, derivative.x),
        pid_axis(gains.velocity_xy, v_err.y, integral.y, derivative.y),
        pid_axis(gains.velocity_z, v_err.z, integral.z, derivative.z),
    );
    finite(&accel, "velocity")?;

    // horizontal disturbance compensation; the vertical part is added to the
    // collective by the adaptive augmentation
    accel.x -= state.disturbance.x;
    accel.y -= state.disturbance.y;

    let g = gains.model.gravity;
    accel.z = accel.z.clamp(-gains.max_accel_down, gains.max_accel_up);
    let vertical = g + accel.z;
    let max_lateral = vertical * gains.max_tilt.tan();
    let accel = clamp_xy(accel, max_lateral);
    let thrust = gains.model.mass * Vector3::new(accel.x, accel.y, vertical);
    finite(&thrust, "velocity")?;

    state.velocity_setpoint = v_sp;
    state.velocity_integral = integral;
    state.prev_velocity_error = Some(v_err);
    state.thrust_setpoint = thrust;
    state.attitude_setpoint = attitude_from_thrust(&thrust.normalize(), reference.yaw);
    Ok(())
}

/// Tilt and yaw errors (rad) of `current` relative to `desired`, body frame.
fn attitude_error(current: &UnitQuaternion<f64>, desired: &UnitQuaternion<f64>) -> (Vector3<f64>, f64) {
    let z_des_body = current.inverse_transform_vector(&(desired * Vector3::z()));
    let axis = Vector3::z().cross(&z_des_body);
    let angle = z_des_body.z.clamp(-1.0, 1.0).acos();
    let tilt = if axis.norm() > 1e-12 {
        axis.normalize() * angle
    } else if z_des_body.z < 0.0 {
        Vector3::x() * angle
    } else {
        Vector3::zeros()
    };
    let reduced = UnitQuaternion::rotation_between(&Vector3::z(), &z_des_body)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
    let remainder = reduced.inverse() * current.inverse() * desired;
    let q = remainder.quaternion();
    let yaw = wrap_pi(2.0 * q.k.atan2(q.w));
    (tilt, yaw)
}

/// One controller tick. The outer loops run at `gains.outer_loop_hz`; the
/// attitude and rate loops run on every call.
pub fn cascade_step(
    reference: &Reference,
    eus: &EstimatedUavState,
    gains: &GainSet,
    cstate: &ControllerState,
    dt: f64,
) -> Result<(CascadeOutput, ControllerState), ControlError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ControlError::InvalidTimeStep(dt));
    }
    if !reference.is_finite() {
        return Err(ControlError::NonFinite("position"));
    }
    if !eus.is_finite() {
        return Err(ControlError::NonFinite("estimate"));
    }
    let mut state = cstate.clone();

    let period = gains.outer_period();
    match state.outer_elapsed {
        Some(elapsed) if elapsed + dt < period - 1e-9 => {
            state.outer_elapsed = Some(elapsed + dt);
        }
        Some(elapsed) => {
            outer_loops(reference, eus, gains, &mut state, elapsed + dt)?;
            state.outer_elapsed = Some(0.0);
        }
        None => {
            outer_loops(reference, eus, gains, &mut state, period)?;
            state.outer_elapsed = Some(0.0);
        }
    }

    let body_z = eus.attitude * Vector3::z();
    let collective = state.thrust_setpoint.dot(&body_z).max(0.0);

    let (tilt_err, yaw_err) = attitude_error(&eus.attitude, &state.attitude_setpoint);
    let rate_sp = Vector3::new(
        gains.tilt_p * tilt_err.x,
        gains.tilt_p * tilt_err.y,
        gains.yaw_p * yaw_err,
    )
    .map(|r| r.clamp(-gains.max_rate, gains.max_rate));
    finite(&rate_sp, "attitude")?;

    let rate_err = rate_sp - eus.angular_rate;
    let limit = gains.rate_integral_limit;
    let integral = (state.rate_integral + rate_err * dt).map(|x| x.clamp(-limit, limit));
    let derivative = state
        .prev_rate_error
        .map(|p| (rate_err - p) / dt)
        .unwrap_or_else(Vector3::zeros);
    let gains_by_axis = [gains.rate_roll_pitch, gains.rate_roll_pitch, gains.rate_yaw];
    let inertia = gains.model.inertia;
    let mut torques = Vector3::zeros();
    for i in 0..3 {
        let u = pid_axis(gains_by_axis[i], rate_err[i], integral[i], derivative[i]);
        torques[i] = (inertia[i] * u).clamp(-gains.max_torque[i], gains.max_torque[i]);
    }
    finite(&torques, "rate")?;
    if !collective.is_finite() {
        return Err(ControlError::NonFinite("velocity"));
    }

    state.rate_setpoint = rate_sp;
    state.rate_integral = integral;
    state.prev_rate_error = Some(rate_err);
    state.last_collective = collective;
    state.last_torques = torques;
    Ok((CascadeOutput { collective, torques }, state))
}
