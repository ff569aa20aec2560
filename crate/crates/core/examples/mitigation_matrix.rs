//! Small scenario × mitigation-set sweep, written as CSV and JSON.
//!
//! `cargo run --release --example mitigation_matrix [-- <out dir>]`

use std::path::PathBuf;

use vtol_sil::harness::{emit_table, parse_mitigation_sets, run_matrix, Format, RunConfig};

const SETS: &str = r#"
baseline = []
redundant = ["multi_marker", "secondary_altitude"]
guarded = ["tagging", "sequence_guard"]
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "matrix-out".into()).into();
    let scenarios: Vec<String> = ["S-UCA1", "S-UCA3", "S-UCA4"].map(String::from).to_vec();
    let sets = parse_mitigation_sets(SETS)?;
    let table = run_matrix(&RunConfig::default(), &scenarios, &sets, &[1, 2, 3, 4])?;
    for r in &table.rows {
        println!(
            "{:<7} {:<10} SC-4 {:.2}  touchdowns {}  mean error {:?}",
            r.scenario, r.mitigation_set, r.violation_rate["SC-4"], r.touchdowns, r.mean_landing_error
        );
    }
    for format in [Format::Csv, Format::Json] {
        println!("wrote {}", emit_table(&table, format, &out)?.display());
    }
    Ok(())
}
