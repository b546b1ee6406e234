// Licensed under the Apache-2.0 license

//! TTP service and its admin commands.

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rctee::ttp::{EnrollOptions, Ttp, DEFAULT_CRP_COUNT};
use rctee_cli::{listen_addr, load_config, parse_hex32, random32, write_key_file};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "rctee-ttp", about = "Trusted third party: enrollment and attestation verification")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve attestation and user-enrollment requests
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Enroll a board and write its image, BBRAM key and device config
    EnrollDevice {
        #[arg(long)]
        db: PathBuf,
        /// 32-byte hex seed standing in for the board's silicon
        #[arg(long)]
        device_seed: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csp")]
        csp: String,
        #[arg(long, default_value = "board-rev1")]
        board: String,
        #[arg(long)]
        standard_firmware: bool,
        #[arg(long, default_value_t = DEFAULT_CRP_COUNT)]
        crps: usize,
    },
    /// Certify a user public key (hex)
    EnrollUser {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        public: String,
    },
    /// Print CRP totals per device
    Ledger {
        #[arg(long)]
        db: PathBuf,
    },
}

#[derive(Deserialize, Default)]
struct ServeConfig {
    listen: Option<String>,
    db: Option<PathBuf>,
}

fn open_db(path: &Path) -> Result<Ttp, String> {
    if path.exists() {
        Ttp::load(path, random32()).map_err(|e| e.to_string())
    } else {
        let ttp = Ttp::new(random32()).with_snapshot(path);
        ttp.save(path).map_err(|e| e.to_string())?;
        Ok(ttp)
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Serve { config, listen, db } => {
            let cfg: ServeConfig = match &config {
                Some(p) => load_config(p)?,
                None => ServeConfig::default(),
            };
            let db = db
                .or(cfg.db.map(|d| config.as_deref().map(|c| rctee_cli::relative_to(c, &d)).unwrap_or(d)))
                .unwrap_or_else(|| PathBuf::from("ttp.db"));
            let addr = listen_addr(listen.or(cfg.listen).as_deref().unwrap_or("127.0.0.1:7100"), "RCTEE_TTP_PORT")?;
            let ttp = Arc::new(open_db(&db)?);
            let (bound, handle) = ttp.serve(TcpListener::bind(addr).map_err(|e| format!("{addr}: {e}"))?).map_err(|e| e.to_string())?;
            println!("ttp listening on {bound} (db {}, PK_TTP {})", db.display(), hex::encode(ttp.public()));
            handle.join().map_err(|_| "listener thread panicked".to_string())
        }
        Cmd::EnrollDevice { db, device_seed, out, csp, board, standard_firmware, crps } => {
            let ttp = open_db(&db)?;
            let seed = parse_hex32(&device_seed)?;
            let opts = EnrollOptions { standard_firmware, crp_count: crps, ..EnrollOptions::default() };
            let e = ttp.enroll_device(csp.as_bytes(), board.as_bytes(), seed, &opts).map_err(|e| e.to_string())?;
            fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            fs::write(out.join("image.rcbi"), e.image.encode()).map_err(|e| e.to_string())?;
            write_key_file(&out.join("bbram.key"), e.bbram_key.bytes())?;
            let device_toml = format!(
                "image = \"image.rcbi\"\nkey_file = \"bbram.key\"\ndevice_seed = \"{}\"\nproxy_listen = \"127.0.0.1:7200\"\ncontrol_listen = \"127.0.0.1:7201\"\n",
                device_seed.trim()
            );
            fs::write(out.join("device.toml"), device_toml).map_err(|e| e.to_string())?;
            println!("enrolled {} ({crps} CRPs) -> {}", hex::encode(e.device_id), out.display());
            Ok(())
        }
        Cmd::EnrollUser { db, public } => {
            let ttp = open_db(&db)?;
            let (cert, uid, _) = ttp.enroll_user(&parse_hex32(&public)?).map_err(|e| e.to_string())?;
            println!("uid {} signature {}", String::from_utf8_lossy(&uid), hex::encode(cert.signature));
            Ok(())
        }
        Cmd::Ledger { db } => {
            let ttp = open_db(&db)?;
            for id in ttp.device_ids() {
                let (total, used) = ttp.crp_ledger_status(&id).map_err(|e| e.to_string())?;
                println!("{} total={total} consumed={used} remaining={}", hex::encode(id), total - used);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rctee-ttp: {e}");
            ExitCode::from(1)
        }
    }
}
