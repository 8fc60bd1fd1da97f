use std::path::PathBuf;
use std::process::ExitCode;

use circulate::bench::{break_even_scan, check_orderings, run_experiment, StatsTable};
use circulate::config::{load_experiment, RunConfig};
use circulate::engine;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "circulate", version, about = "Proxy-based workflow orchestration on a simulated network")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one workflow and print its trace as JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Print only the per-class byte totals and elapsed time.
        #[arg(long)]
        brief: bool,
    },
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Sweep the reference patterns and write a stats CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Evaluate the ordering checks; exit nonzero if any fails.
        #[arg(long)]
        check: bool,
    },
    /// Scan single-invocation payload sizes for the speedup crossover.
    Breakeven {
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate a stats CSV into a per-pattern table.
    Summary { csv: PathBuf },
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main(cli: Cli) -> circulate::Result<ExitCode> {
    match cli.cmd {
        Cmd::Run { config, brief } => {
            let cfg = RunConfig::load(&config)?;
            let behaviors = cfg.behaviors()?;
            let trace = engine::run(&cfg.pattern, cfg.mode, cfg.case, &cfg.topology()?, &cfg.transport(), &behaviors)?;
            let json = if brief {
                serde_json::json!({
                    "mode": trace.mode,
                    "case": trace.case,
                    "elapsed_ms": trace.elapsed_ms,
                    "per_class_bytes": trace.per_class_bytes,
                    "final_result": trace.final_result,
                })
            } else {
                serde_json::to_value(&trace).expect("trace serializes")
            };
            println!("{}", serde_json::to_string_pretty(&json).expect("json"));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bench(BenchCmd::Run { config, out, check }) => {
            let cfg = load_experiment(&config)?;
            let table = run_experiment(&cfg)?;
            table.emit_csv(&out)?;
            let failed = table.rows.iter().filter(|r| !r.is_ok()).count();
            if failed > 0 {
                eprintln!("{failed} configuration(s) failed; see the error column");
            }
            print!("{}", table.emit_summary());
            if !check {
                return Ok(ExitCode::SUCCESS);
            }
            let mut ok = true;
            for c in check_orderings(&table) {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.pass;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Bench(BenchCmd::Breakeven { config }) => {
            let cfg = load_experiment(&config)?;
            let report = break_even_scan(&cfg.calibration, &cfg.breakeven_sizes)?;
            for (bytes, ratio) in &report.points {
                println!("{bytes:>12} {ratio:.3}");
            }
            println!("{}", report.message);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bench(BenchCmd::Summary { csv }) => {
            print!("{}", StatsTable::parse_csv(&csv)?.emit_summary());
            Ok(ExitCode::SUCCESS)
        }
    }
}
