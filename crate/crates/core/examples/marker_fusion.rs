//! Renders camera frames of the default pad from 3 m above it, fuses them and
//! shows how an untagged foreign marker drags the estimate unless tagging is on.
//!
//! `cargo run --example marker_fusion`

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vtol_sil::dynamics::RigidBodyState;
use vtol_sil::estimator::{
    detect_marker, fuse_pad_position, render_detections, CameraConfig, EstimatedUavState, PadLayout, Visibility,
};

fn main() {
    let layout = PadLayout::default();
    let cam = CameraConfig::default();
    let mut truth = RigidBodyState::at_rest(Vector3::new(0.3, -0.2, 3.0));
    truth.grounded = false;
    let eus = EstimatedUavState::at_rest(truth.position, 9.81);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let spoof = Vector3::new(0.8, 0.0, 0.0);
    let clear = Visibility {
        lighting: 1.0,
        occlusion: 0.0,
    };
    for seq in 0..5 {
        let mut frame = render_detections(&truth, &layout, &cam, 1.0, &BTreeMap::new(), &mut rng, seq as f64 * 0.033, seq);
        let ids: Vec<&str> = frame.detections.iter().map(|d| d.id.as_str()).collect();
        println!("frame {seq}: {ids:?}");
        if let Some(est) = fuse_pad_position(&frame, &layout, &eus, false) {
            println!("  clean     pad at {:+.3?}", est.position.as_slice());
        }
        if let Some(d) = detect_marker(&truth, "spoof-7", &spoof, 0.4, &cam, clear, &mut rng) {
            frame.detections.push(d);
        }
        for tagging in [false, true] {
            if let Some(est) = fuse_pad_position(&frame, &layout, &eus, tagging) {
                println!(
                    "  spoofed   tagging {:<5} pad at {:+.3?}  from {:?}",
                    tagging,
                    est.position.as_slice(),
                    est.contributors
                );
            }
        }
    }
}
