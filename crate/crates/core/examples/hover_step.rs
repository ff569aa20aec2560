//! Altitude step response of the cascade controller on the rigid-body model,
//! with the estimate equal to truth. Prints z every 0.25 s.
//!
//! `cargo run --example hover_step [-- <step m>]`

use nalgebra::Vector3;
use vtol_sil::control::{allocate, cascade_step, ControllerState, GainSet, Reference};
use vtol_sil::dynamics::{self, RigidBodyState, VehicleParams, WindField};
use vtol_sil::estimator::{AltitudeSource, EstimatedUavState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let step: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let params = VehicleParams::default();
    let gains = GainSet::default();
    let dt = 0.002;

    let mut truth = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 5.0));
    truth.grounded = false;
    let mut cstate = ControllerState::default();
    let target = 5.0 + step;
    let reference = Reference::new(Vector3::new(0.0, 0.0, target), 0.0);
    let mut peak = f64::MIN;

    for i in 0..(6.0 / dt) as usize {
        let eus = EstimatedUavState {
            position: truth.position,
            velocity: truth.velocity,
            attitude: truth.attitude,
            angular_rate: truth.angular_rate,
            specific_force: truth.specific_force(params.gravity),
            altitude: truth.position.z,
            altitude_source: AltitudeSource::Baro,
            timestamp: truth.time,
        };
        let (out, next) = cascade_step(&reference, &eus, &gains, &cstate, dt)?;
        let (thrusts, saturated) = allocate(out.collective, &out.torques, &params);
        cstate = next;
        truth = dynamics::step(&truth, &thrusts, &WindField::calm(), &params, dt)?;
        peak = peak.max(truth.position.z);
        if i % 125 == 0 {
            println!(
                "t {:5.2}  z {:7.4}  vz {:7.4}  collective {:6.2} N{}",
                truth.time,
                truth.position.z,
                truth.velocity.z,
                thrusts.total(),
                if saturated { "  (saturated)" } else { "" }
            );
        }
    }
    println!("overshoot {:.4} m", (peak - target).max(0.0));
    Ok(())
}
