//! Walks the scenario library, then drives the frame and command injectors
//! by hand: a reorder window swaps frame pairs and a command delay line
//! releases stale commands.
//!
//! `cargo run --example fault_injection`

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vtol_sil::control::ActuatorCommand;
use vtol_sil::dynamics::{MotorThrusts, RigidBodyState};
use vtol_sil::estimator::{CameraConfig, CameraFrame};
use vtol_sil::faults::{
    inject_commands, inject_frames, scenario_library, CommandQueue, FaultKind, FaultSpec, FrameContext, FrameQueue,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for s in scenario_library() {
        let kinds: Vec<&str> = s.faults.iter().map(|f| f.kind.name()).collect();
        println!("{} {:?} {:?}\n    {}", s.id, s.ucas, kinds, s.narrative);
    }

    let reorder = FaultSpec::from(FaultKind::FrameReorder { window: 2 }, 0.0);
    let truth = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 4.0));
    let camera = CameraConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ctx = FrameContext {
        truth: &truth,
        camera: &camera,
        lighting: 1.0,
        rng: &mut rng,
    };
    let mut queue = FrameQueue::default();
    let mut released = Vec::new();
    for seq in 0..6 {
        let frame = CameraFrame {
            timestamp: seq as f64 * 0.1,
            sequence: seq,
            detections: Vec::new(),
        };
        let out = inject_frames(&reorder, vec![frame], seq as f64 * 0.1, &mut queue, &mut ctx)?;
        released.extend(out.iter().map(|f| f.sequence));
    }
    println!("\nreorder window 2 releases sequences {released:?}");

    let delay = FaultSpec::new(FaultKind::CommandDelay { latency: 0.03 }, 0.02, 0.08);
    let mut queue = CommandQueue::default();
    println!("\ncommand delay 0.03 s active over [0.02, 0.08)");
    for i in 0..10 {
        let t = i as f64 * 0.01;
        let cmd = ActuatorCommand::from_thrusts(MotorThrusts([i as f64; 4]));
        let out = inject_commands(&delay, &cmd, t, &mut queue)?;
        println!(
            "  t {:.2}  sent {:.0}  delivered {:.0}  age {:.2}",
            t,
            cmd.thrusts.0[0],
            out.thrusts.0[0],
            queue.last_age
        );
    }
    Ok(())
}
