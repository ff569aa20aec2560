//! One closed-loop mission with the default configuration. Prints the phase
//! timeline, a coarse trajectory and the landing summary.
//!
//! `cargo run --release --example nominal_mission [-- <seed> [<scenario>]]`

use vtol_sil::harness::{run, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let mut cfg = RunConfig::default().with_seed(seed);
    if let Some(id) = args.next() {
        cfg = cfg.with_scenario(&id);
    }
    let report = run(&cfg)?;

    let mut phase = None;
    for (i, s) in report.samples.iter().enumerate() {
        if phase != Some(s.phase) {
            println!("{:6.2} s  -> {:?}", s.time, s.phase);
            phase = Some(s.phase);
        }
        if i % 100 == 0 {
            println!(
                "{:6.2} s  truth {:+.2?}  eus {:+.2?}  ref {:+.2?}  {:?}",
                s.time, s.truth_position, s.eus_position, s.reference, s.source
            );
        }
    }
    println!(
        "\noutcome {:?}  touchdown {:?} s  landing error {:?} m  violations {}",
        report.outcome,
        report.touchdown_time,
        report.landing_error,
        report.violations.len()
    );
    for (uca, trig) in &report.uca_triggers {
        println!("{uca}: {} ticks, first at {:.2} s", trig.count, trig.first);
    }
    Ok(())
}
