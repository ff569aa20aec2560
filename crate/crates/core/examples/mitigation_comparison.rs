//! Paired-seed comparison of one scenario with and without a mitigation set.
//!
//! `cargo run --release --example mitigation_comparison -- S-UCA2 tagging 10`

use vtol_sil::harness::{run_batch, Mitigations, RunConfig, RunReport};

fn line(r: &RunReport) -> String {
    let v: Vec<&str> = r.violations.iter().map(|v| v.constraint.as_str()).collect();
    format!(
        "{:?} err {:>5} pad {:>5} ooo {:>4} foreign {:>4} ptt {:>5} wind {:>5} {:?}",
        r.outcome,
        r.landing_error.map_or("-".into(), |e| format!("{e:.2}")),
        r.metrics.pad_estimate_error.map_or("-".into(), |e| format!("{e:.2}")),
        r.metrics.fusions_out_of_order,
        r.metrics.foreign_fusions,
        r.metrics.post_touchdown_thrust_ticks,
        r.metrics.wind_step_altitude_error.map_or("-".into(), |e| format!("{e:.3}")),
        v
    )
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let scenario = args.next().unwrap_or_else(|| "S-UCA2".into());
    let mitigations: Mitigations = args.next().unwrap_or_else(|| "tagging".into()).parse()?;
    let n: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(6);
    let seeds: Vec<u64> = (1..=n).collect();

    let base = RunConfig::default();
    let off = run_batch(&base, Some(&scenario), Mitigations::default(), &seeds)?;
    let on = run_batch(&base, Some(&scenario), mitigations, &seeds)?;
    println!("{scenario}, mitigations {:?}", mitigations.enabled());
    for (a, b) in off.iter().zip(&on) {
        println!("seed {:>3}  off  {}", a.seed, line(a));
        println!("          on   {}", line(b));
    }
    Ok(())
}
