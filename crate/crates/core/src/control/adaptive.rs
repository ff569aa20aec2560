use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{CascadeOutput, ControllerState, GainSet};
use crate::estimator::EstimatedUavState;

/// First-order translational disturbance observer. Stands in for a full
/// adaptive architecture; only the translational channel is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveConfig {
    /// Observer low-pass bandwidth (rad/s).
    pub bandwidth: f64,
    /// Bound on the estimate magnitude (m/s²).
    pub max_compensation: f64,
    /// Below this estimated altitude the estimate is held, not updated.
    pub min_altitude: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            bandwidth: 4.0,
            max_compensation: 4.0,
            min_altitude: 0.5,
        }
    }
}

/// Residual between the acceleration the accelerometer reports and the one
/// the applied collective alone would produce, in the world frame.
pub fn acceleration_residual(eus: &EstimatedUavState, applied_collective: f64, mass: f64) -> Vector3<f64> {
    let measured = eus.attitude * eus.specific_force;
    let predicted = eus.attitude * Vector3::new(0.0, 0.0, applied_collective / mass);
    measured - predicted
}

/// Updates the disturbance estimate and adds its vertical compensation to the
/// nominal collective. Horizontal compensation enters through the cascade's
/// next outer-loop update. Disabled: returns `nominal` and `cstate` untouched.
pub fn adaptive_augment(
    cstate: &ControllerState,
    eus: &EstimatedUavState,
    nominal: CascadeOutput,
    gains: &GainSet,
    config: &AdaptiveConfig,
    dt: f64,
    enabled: bool,
) -> (CascadeOutput, ControllerState) {
    if !enabled || !(dt > 0.0) {
        return (nominal, cstate.clone());
    }
    let mut state = cstate.clone();
    let mass = gains.model.mass;

    if eus.altitude >= config.min_altitude {
        let residual = acceleration_residual(eus, cstate.applied_collective, mass);
        if residual.iter().all(|v| v.is_finite()) {
            let alpha = (config.bandwidth * dt).min(1.0);
            let mut d = state.disturbance + (residual - state.disturbance) * alpha;
            let n = d.norm();
            if n > config.max_compensation {
                d *= config.max_compensation / n;
            }
            state.disturbance = d;
        }
    }

    let body_z = eus.attitude * Vector3::z();
    let delta = -mass * state.disturbance.z / body_z.z.max(0.5);
    let out = CascadeOutput {
        collective: (nominal.collective + delta).max(0.0),
        torques: nominal.torques,
    };
    state.last_collective = out.collective;
    (out, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{allocate, cascade_step, Reference};
    use crate::dynamics::{self, forward_mix, RigidBodyState, VehicleParams, WindField, WindStep};
    use crate::estimator::AltitudeSource;

    #[test]
    fn disabled_is_identity() {
        let gains = GainSet::default();
        let eus = EstimatedUavState::at_rest(Vector3::new(0.0, 0.0, 5.0), gains.model.gravity);
        let mut cs = ControllerState::default();
        cs.disturbance = Vector3::new(0.3, 0.0, -1.0);
        let nominal = CascadeOutput {
            collective: 12.0,
            torques: Vector3::new(0.1, 0.2, 0.0),
        };
        let (out, s) = adaptive_augment(&cs, &eus, nominal, &gains, &AdaptiveConfig::default(), 0.002, false);
        assert_eq!(out, nominal);
        assert_eq!(s, cs);
    }

    #[test]
    fn zero_residual_leaves_nominal() {
        let gains = GainSet::default();
        let eus = EstimatedUavState::at_rest(Vector3::new(0.0, 0.0, 5.0), gains.model.gravity);
        let mut cs = ControllerState::default();
        cs.applied_collective = gains.hover_thrust();
        let nominal = CascadeOutput {
            collective: gains.hover_thrust(),
            torques: Vector3::zeros(),
        };
        let (out, s) = adaptive_augment(&cs, &eus, nominal, &gains, &AdaptiveConfig::default(), 0.002, true);
        assert_eq!(out, nominal);
        assert_eq!(s.disturbance, Vector3::zeros());
    }

    fn eus_from_truth(s: &RigidBodyState, g: f64) -> EstimatedUavState {
        EstimatedUavState {
            position: s.position,
            velocity: s.velocity,
            attitude: s.attitude,
            angular_rate: s.angular_rate,
            specific_force: s.specific_force(g),
            altitude: s.position.z,
            altitude_source: AltitudeSource::Baro,
            timestamp: s.time,
        }
    }

    /// Hover at 5 m with a wind step at 1 s; returns mean |z error| over
    /// the window [2 s, 6 s] and the largest disturbance estimate norm seen.
    fn wind_step_run(wind: Vector3<f64>, enabled: bool) -> (f64, f64) {
        let params = VehicleParams::default();
        let gains = GainSet::default();
        let cfg = AdaptiveConfig::default();
        let dt = 0.002;
        let mut truth = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 5.0));
        let wind_field = WindField {
            constant: [0.0; 3],
            steps: vec![WindStep {
                at: 1.0,
                velocity: wind.into(),
            }],
        };
        let r = Reference::new(Vector3::new(0.0, 0.0, 5.0), 0.0);
        let mut cs = ControllerState::default();
        let (mut err_sum, mut n, mut peak) = (0.0, 0, 0.0f64);
        for _ in 0..3500 {
            let eus = eus_from_truth(&truth, params.gravity);
            let (nom, s) = cascade_step(&r, &eus, &gains, &cs, dt).unwrap();
            let (out, mut s) = adaptive_augment(&s, &eus, nom, &gains, &cfg, dt, enabled);
            let (m, _) = allocate(out.collective, &out.torques, &params);
            s.record_applied(forward_mix(&m, &params).0);
            cs = s;
            peak = peak.max(cs.disturbance.norm());
            truth = dynamics::step(&truth, &m, &wind_field, &params, dt).unwrap();
            if (2.0..6.0).contains(&truth.time) {
                err_sum += (truth.position.z - 5.0).abs();
                n += 1;
            }
        }
        (err_sum / n as f64, peak)
    }

    #[test]
    fn observer_halves_wind_step_altitude_error() {
        let wind = Vector3::new(2.4, 0.0, -1.8);
        let (e0, _) = wind_step_run(wind, false);
        let (e1, _) = wind_step_run(wind, true);
        assert!(e0 > 0.0);
        assert!(e1 < e0 / 2.0, "unmitigated {e0}, mitigated {e1}");
    }

    #[test]
    fn compensation_bounded_across_gust_sweep() {
        let bound = AdaptiveConfig::default().max_compensation;
        for speed in [2.0, 4.0, 6.0, 8.0, 10.0] {
            for dir in [Vector3::x(), -Vector3::z(), Vector3::new(0.6, 0.0, -0.8)] {
                let (_, peak) = wind_step_run(dir * speed, true);
                assert!(peak <= bound + 1e-12, "speed {speed}: {peak}");
            }
        }
    }
}
