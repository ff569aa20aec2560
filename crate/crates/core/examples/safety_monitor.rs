//! Flies a scripted truth trajectory past an obstacle, out of the geofence and
//! through a steep bank, then lands off the pad. Prints each violation episode
//! and the hazard/loss roll-up.
//!
//! `cargo run --example safety_monitor`

use nalgebra::{UnitQuaternion, Vector3};
use vtol_sil::dynamics::RigidBodyState;
use vtol_sil::mission::{MissionPhase, PhaseKind};
use vtol_sil::monitor::{check_step, finalize, rollup, MonitorConfig, MonitorLog, RunSummary};
use vtol_sil::stpa::bundled_model;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = MonitorConfig::default();
    let phase = MissionPhase::new(PhaseKind::Descent, 0.0);
    let mut log = MonitorLog::default();

    let waypoints = [[0.0, 0.0, 5.0], [8.0, -6.0, 3.5], [22.0, 0.0, 5.0], [5.0, 5.0, 5.0], [3.0, 3.0, 0.0]];
    let dt = 0.1;
    let mut t = 0.0;
    for pair in waypoints.windows(2) {
        let (a, b) = (Vector3::from(pair[0]), Vector3::from(pair[1]));
        for i in 0..50 {
            let mut s = RigidBodyState::at_rest(a.lerp(&b, i as f64 / 50.0));
            if (15.0..17.0).contains(&t) {
                s.attitude = UnitQuaternion::from_euler_angles(1.2, 0.0, 0.0);
            }
            log.record(check_step(&s, &phase, &cfg, t));
            t += dt;
        }
    }
    let summary = RunSummary {
        end_time: t,
        touchdown: Some(waypoints[4]),
        armed_duration: t,
    };
    let mut violations = log.violations;
    violations.extend(finalize(&summary, &cfg));
    for v in &violations {
        println!(
            "{:6.1} s  {} ({})  measured {:?} limit {}  {}",
            v.time, v.constraint, v.hazard, v.measured, v.limit, v.detail
        );
    }
    let r = rollup(&violations, &bundled_model())?;
    println!("hazards {:?}", r.hazards);
    println!("losses  {:?}", r.losses);
    Ok(())
}
