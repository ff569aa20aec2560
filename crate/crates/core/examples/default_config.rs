//! Prints the default run configuration as TOML, ready to edit and feed to
//! `vtol-sil run --config`.
//!
//! `cargo run --example default_config > run.toml`

use vtol_sil::harness::RunConfig;

fn main() {
    print!("{}", RunConfig::default().to_toml());
}
