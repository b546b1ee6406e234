// Licensed under the Apache-2.0 license

//! Attack-scenario runner.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rctee::harness::{format_report, run_happy_path, run_suite};

#[derive(Parser)]
#[command(name = "rctee-harness", about = "End-to-end runs and attack scenarios on an in-process testbed")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the attack suite, or one scenario
    Run {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the honest end-to-end flow once
    Happy {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run { scenario, seed, report } => {
            let results = match run_suite(seed, scenario.as_deref()) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("rctee-harness: {e}");
                    return ExitCode::from(2);
                }
            };
            let text = format_report(&results);
            print!("{text}");
            if let Some(path) = report {
                if let Err(e) = fs::write(&path, &text) {
                    eprintln!("rctee-harness: {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            if results.iter().all(|r| r.passed()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Cmd::Happy { seed } => match run_happy_path(seed) {
            Ok(r) => {
                println!("PK_DEV {}", hex::encode(r.pk_dev));
                println!("ping {}", if r.ping_ok { "ok" } else { "MISMATCH" });
                println!("add32(2,3) = {}", r.add32);
                println!("lenet_stub = {}", hex::encode(&r.lenet));
                println!("CRPs consumed {}/{}", r.ledger.1, r.ledger.0);
                println!("elapsed {:.3}s", r.elapsed.as_secs_f64());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("rctee-harness: {e}");
                ExitCode::from(1)
            }
        },
    }
}
