use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spinpair_core::scenario::{execute, Command, OutputFormat, RunReport, Summary};

/// Runs two-spin scenarios described by JSON config files.
#[derive(Parser, Debug)]
#[command(name = "spinpair", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Reference propagation from the configured initial state.
    Propagate(Args),
    /// Reference vs zeroth- and first-order adiabatic solutions.
    Compare(Args),
    /// Runs the scenario over the values of its sweep section.
    Sweep(Args),
    /// Checks invariants (spectrum, frame, conservation, sparsity) on the scenario.
    Validate(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
    Json,
}

fn print_summary(s: &Summary) {
    let p = s.final_lab_populations;
    println!("  final product-state populations: {:.6} {:.6} {:.6} {:.6}", p[0], p[1], p[2], p[3]);
    if let Some(t) = s.reference_transition {
        println!("  transition out of initial adiabatic state: {t:.6e}");
    }
    if let Some(lz) = s.lz_asymptotic {
        println!("  Landau-Zener asymptotic survival: {lz:.6e}");
    }
    if let (Some(z), Some(f)) = (s.final_infidelity_zeroth, s.final_infidelity_first) {
        println!("  final infidelity: zeroth order {z:.3e}, first order {f:.3e}");
    }
    println!("  max adiabaticity ratio: {:.3e}{}", s.eta_max, if s.eta_divergent { " (diverges where the field vanishes)" } else { "" });
    if s.non_adiabatic == Some(true) {
        println!("  warning: run is outside the adiabatic regime");
    }
}

fn print_report(r: &RunReport) {
    if let Some(s) = &r.summary {
        print_summary(s);
    }
    if let Some(points) = &r.sweep {
        for pt in points {
            let t = pt.summary.reference_transition.map_or("-".to_string(), |t| format!("{t:.6e}"));
            println!("  point {} value {}: transition {t}", pt.index, pt.value);
        }
    }
    if let Some(checks) = &r.validation {
        for c in checks {
            let verdict = if c.passed { "ok" } else { "FAILED" };
            println!("  {:<30} {:.3e} (limit {:.1e}) {verdict}", c.name, c.value, c.limit);
        }
    }
    for f in &r.files {
        match f.rows {
            Some(n) => println!("  wrote {} ({n} rows)", f.file),
            None => println!("  wrote {}", f.file),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Propagate(a) => (Command::Propagate, a),
        Cmd::Compare(a) => (Command::Compare, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Validate(a) => (Command::Validate, a),
    };
    let format = match args.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    match execute(&args.config, command, &args.out, format) {
        Ok(report) => {
            if !args.quiet {
                print_report(&report);
            }
            if !report.validation_passed() {
                eprintln!("spinpair: validation failed");
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("spinpair: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
