use nalgebra::Vector3;

use crate::dynamics::{MotorThrusts, VehicleParams, PITCH_SIGN, ROLL_SIGN, YAW_SIGN};

/// Inverts the X-configuration mix. When the exact solution leaves
/// `[0, max_motor_thrust]`, collective is kept (clamped to its feasible range)
/// and the torque part is scaled down uniformly until every motor fits.
/// Returns the thrusts and whether any limiting engaged.
pub fn allocate(collective: f64, torques: &Vector3<f64>, params: &VehicleParams) -> (MotorThrusts, bool) {
    let max = params.max_motor_thrust;
    let d = params.moment_arm();
    let k = params.yaw_moment_coeff;

    let total = collective.clamp(0.0, 4.0 * max);
    let mut saturated = total != collective;
    let base = total / 4.0;

    let mut delta = [0.0; 4];
    for (i, v) in delta.iter_mut().enumerate() {
        *v = torques.x * ROLL_SIGN[i] / (4.0 * d)
            + torques.y * PITCH_SIGN[i] / (4.0 * d)
            + torques.z * YAW_SIGN[i] / (4.0 * k);
    }

    let mut scale: f64 = 1.0;
    for v in delta {
        if v > 0.0 {
            scale = scale.min((max - base) / v);
        } else if v < 0.0 {
            scale = scale.min(base / -v);
        }
    }
    let scale = scale.clamp(0.0, 1.0);
    if scale < 1.0 {
        saturated = true;
    }
    let thrusts = MotorThrusts(delta.map(|v| (base + scale * v).clamp(0.0, max)));
    (thrusts, saturated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::forward_mix;
    use proptest::prelude::*;

    #[test]
    fn hover_splits_evenly() {
        let p = VehicleParams::default();
        let (m, sat) = allocate(p.weight(), &Vector3::zeros(), &p);
        assert!(!sat);
        for f in m.0 {
            assert!((f - p.weight() / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_collective_with_torque_saturates() {
        let p = VehicleParams::default();
        for t in [Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, -0.2, 0.0), Vector3::new(0.0, 0.0, 0.01)] {
            let (m, sat) = allocate(0.0, &t, &p);
            assert!(sat);
            assert!(m.is_zero());
        }
    }

    #[test]
    fn collective_priority_under_saturation() {
        let p = VehicleParams::default();
        let (m, sat) = allocate(p.weight(), &Vector3::new(5.0, 0.0, 0.0), &p);
        assert!(sat);
        let (t, tau) = forward_mix(&m, &p);
        assert!((t - p.weight()).abs() < 1e-9);
        assert!(tau.x > 0.0 && tau.x < 5.0);
        assert!(m.0.iter().all(|f| (0.0..=p.max_motor_thrust).contains(f)));
    }

    #[test]
    fn excess_collective_is_clamped() {
        let p = VehicleParams::default();
        let (m, sat) = allocate(100.0, &Vector3::zeros(), &p);
        assert!(sat);
        assert_eq!(m.0, [p.max_motor_thrust; 4]);
        let (m, sat) = allocate(-3.0, &Vector3::zeros(), &p);
        assert!(sat);
        assert!(m.is_zero());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn round_trip_on_feasible_set(f in prop::array::uniform4(0.0f64..8.0)) {
            let p = VehicleParams::default();
            let (t, tau) = forward_mix(&MotorThrusts(f), &p);
            let (m, sat) = allocate(t, &tau, &p);
            let (t2, tau2) = forward_mix(&m, &p);
            prop_assert!(!sat || f.iter().any(|x| *x == 0.0 || *x == 8.0));
            prop_assert!((t - t2).abs() < 1e-9);
            prop_assert!((tau - tau2).norm() < 1e-9);
        }

        #[test]
        fn output_always_within_limits(
            c in -10.0f64..60.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -1.0f64..1.0,
        ) {
            let p = VehicleParams::default();
            let (m, _) = allocate(c, &Vector3::new(tx, ty, tz), &p);
            prop_assert!(m.0.iter().all(|f| (0.0..=p.max_motor_thrust).contains(f)));
        }
    }
}
