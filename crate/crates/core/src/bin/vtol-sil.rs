use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vtol_sil::harness::{
    emit_report, emit_table, parse_mitigation_sets, parse_seed_range, run, run_matrix, Format, HarnessError, Mitigations,
    Outcome, RunConfig,
};
use vtol_sil::stpa::{bundled_model, load_model, TraceabilityGraph, UcaCategory};

#[derive(Parser)]
#[command(name = "vtol-sil", version, about = "Hover take-off and landing safety harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop mission.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenario: Option<String>,
        /// Comma list of mitigation flags; replaces those in the config.
        #[arg(long)]
        mitigations: Option<Mitigations>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value = "json")]
        format: Format,
    },
    /// Scenario × mitigation set × seed sweep.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        /// Comma list of scenario ids.
        #[arg(long, value_delimiter = ',', required = true)]
        scenarios: Vec<String>,
        /// TOML file of `name = ["flag", ...]` entries.
        #[arg(long)]
        mitigation_sets: PathBuf,
        /// Inclusive range `n..m`.
        #[arg(long)]
        seeds: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value = "json")]
        format: Format,
    },
    /// Inspect an STPA model.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Completeness check.
    Check {
        #[arg(long)]
        file: PathBuf,
    },
    /// UCA candidate matrix for one control action.
    Matrix {
        #[arg(long)]
        action: String,
        /// Model file; the bundled model when omitted.
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

fn read(path: &PathBuf) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })
}

fn model_at(file: Option<&PathBuf>) -> Result<TraceabilityGraph, HarnessError> {
    match file {
        Some(path) => Ok(load_model(&read(path)?)?),
        None => Ok(bundled_model()),
    }
}

/// Ok(true) when the command ran clean.
fn execute(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run {
            config,
            scenario,
            mitigations,
            seed,
            out,
            format,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(id) = scenario {
                cfg = cfg.with_scenario(&id);
            }
            if let Some(m) = mitigations {
                cfg = cfg.with_mitigations(m);
            }
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            let report = run(&cfg)?;
            let path = emit_report(&report, format, &out)?;
            println!(
                "seed {} outcome {:?} touchdown {} landing error {} violations {}",
                report.seed,
                report.outcome,
                report.touchdown_time.map_or("-".into(), |t| format!("{t:.2} s")),
                report.landing_error.map_or("-".into(), |e| format!("{e:.3} m")),
                report.violations.len()
            );
            for v in &report.violations {
                println!("  {:>7.3} s  {} -> {}  {}", v.time, v.constraint, v.hazard, v.detail);
            }
            println!("wrote {}", path.display());
            Ok(report.violations.is_empty() && report.outcome == Outcome::Landed)
        }
        Command::Matrix {
            config,
            scenarios,
            mitigation_sets,
            seeds,
            out,
            format,
        } => {
            let cfg = RunConfig::load(&config)?;
            let sets = parse_mitigation_sets(&read(&mitigation_sets)?)?;
            let seeds = parse_seed_range(&seeds)?;
            let table = run_matrix(&cfg, &scenarios, &sets, &seeds)?;
            for r in &table.rows {
                let rates: Vec<String> = r.violation_rate.iter().map(|(c, v)| format!("{c}={v:.2}")).collect();
                println!("{:<8} {:<16} runs {:>3}  {}", r.scenario, r.mitigation_set, r.runs, rates.join(" "));
            }
            let path = emit_table(&table, format, &out)?;
            println!("wrote {}", path.display());
            Ok(!table.any_violation())
        }
        Command::Model { command } => match command {
            ModelCommand::Check { file } => {
                let graph = model_at(Some(&file))?;
                let report = graph.check_completeness();
                print!("{report}");
                Ok(report.all_passed())
            }
            ModelCommand::Matrix { action, file } => {
                let graph = model_at(file.as_ref())?;
                let matrix = graph.uca_candidate_matrix(&action)?;
                for c in UcaCategory::ALL {
                    let ids: Vec<&str> = matrix.cell(c).iter().map(String::as_str).collect();
                    println!("{:<36} {}", c.token(), if ids.is_empty() { "-".into() } else { ids.join(", ") });
                }
                Ok(true)
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
