//! Loads the bundled STPA model, checks completeness, prints the UCA matrix of
//! one control action and traces a few hazards back to losses.
//!
//! `cargo run --example stpa_model [-- <model file>]`

use vtol_sil::stpa::{bundled_model, load_model, UcaCategory};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let graph = match std::env::args().nth(1) {
        Some(path) => load_model(&std::fs::read_to_string(path)?)?,
        None => bundled_model(),
    };
    println!(
        "{} losses, {} hazards, {} constraints, {} actions, {} UCAs, {} loss scenarios",
        graph.losses.len(),
        graph.hazards.len(),
        graph.constraints.len(),
        graph.actions.len(),
        graph.ucas.len(),
        graph.scenarios.len()
    );
    print!("{}", graph.check_completeness());

    let matrix = graph.uca_candidate_matrix("Motor commands")?;
    println!("\nMotor commands");
    for c in UcaCategory::ALL {
        println!("  {:<36} {:?}", c.token(), matrix.cell(c));
    }

    for (loss, hazards) in graph.hazards_by_loss() {
        println!("{loss} <- {hazards:?}");
    }
    let losses = graph.trace_to_losses(["H-4", "H-5"])?;
    println!("H-4 + H-5 -> {losses:?}");
    Ok(())
}
