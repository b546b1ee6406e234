// Licensed under the Apache-2.0 license

//! User client. Identity and per-device sessions live under `--home`.
//!
//! Exit codes: 0 success, 2 protocol rejection, 3 authentication failure,
//! 4 network error.

use std::fs;
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use rctee::client::{self, ClientError, DeviceSession, UserIdentity};
use rctee::crypto::Drbg;
use rctee::wire::Connection;
use rctee_cli::random32;

#[derive(Parser)]
#[command(name = "rctee-client", about = "Attest a device, deploy bitstreams and invoke IPs")]
struct Cli {
    #[arg(long, env = "RCTEE_HOME", default_value = ".rctee")]
    home: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Register a fresh keypair with the TTP
    Enroll {
        #[arg(long)]
        ttp: String,
    },
    /// Run remote attestation and store the session
    Attest {
        #[arg(long)]
        device: String,
        #[arg(long)]
        ttp: String,
    },
    /// Build, seal, sign and deploy a bitstream from a manifest
    Deploy {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        device: String,
    },
    /// Invoke a deployed IP with hex inputs, one per input address
    Invoke {
        #[arg(long)]
        device: String,
        #[arg(long)]
        ip: String,
        #[arg(long = "in", num_args = 0..)]
        inputs: Vec<String>,
    },
    /// Show the identity and stored sessions
    Status,
}

fn connect(addr: &str) -> Result<Connection<TcpStream>, ClientError> {
    let stream = TcpStream::connect(addr).map_err(|e| ClientError::Network(format!("{addr}: {e}")))?;
    stream.set_read_timeout(Some(Duration::from_secs(120))).map_err(|e| ClientError::Network(e.to_string()))?;
    stream.set_nodelay(true).map_err(|e| ClientError::Network(e.to_string()))?;
    Ok(Connection::new(stream))
}

fn storage(e: impl std::fmt::Display) -> ClientError {
    ClientError::Storage(e.to_string())
}

fn session_path(home: &Path, device: &str) -> PathBuf {
    let name: String = device.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    home.join("sessions").join(format!("{name}.session"))
}

fn load_identity(home: &Path) -> Result<UserIdentity, ClientError> {
    let bytes = fs::read(home.join("identity")).map_err(|e| storage(format!("identity: {e} (run enroll first)")))?;
    UserIdentity::decode(&bytes)
}

fn load_session(home: &Path, device: &str) -> Result<DeviceSession, ClientError> {
    let bytes = fs::read(session_path(home, device)).map_err(|e| storage(format!("session for {device}: {e} (run attest first)")))?;
    DeviceSession::decode(&bytes)
}

fn save_session(home: &Path, device: &str, s: &DeviceSession) -> Result<(), ClientError> {
    let path = session_path(home, device);
    fs::create_dir_all(path.parent().expect("has parent")).map_err(storage)?;
    fs::write(path, s.encode()).map_err(storage)
}

fn run(cli: Cli) -> Result<(), ClientError> {
    let home = cli.home;
    match cli.cmd {
        Cmd::Enroll { ttp } => {
            let identity = client::enroll(&mut connect(&ttp)?, &mut rand::rng())?;
            fs::create_dir_all(&home).map_err(storage)?;
            fs::write(home.join("identity"), identity.encode()).map_err(storage)?;
            println!("enrolled as {}", String::from_utf8_lossy(&identity.uid));
        }
        Cmd::Attest { device, ttp } => {
            let identity = load_identity(&home)?;
            let session = client::attest(&identity, &mut connect(&device)?, &mut connect(&ttp)?)?;
            save_session(&home, &device, &session)?;
            println!("device authenticated; PK_DEV {}", hex::encode(session.pk_dev));
        }
        Cmd::Deploy { manifest, device } => {
            let identity = load_identity(&home)?;
            let mut session = load_session(&home, &device)?;
            let text = fs::read_to_string(&manifest).map_err(storage)?;
            let manifest = client::parse_manifest(&text)?;
            let mut filler = Drbg::new(&random32()).map_err(storage)?;
            let (enc_bin, sig) = client::prepare_bitstream(&identity, &session, &manifest, &mut filler)?;
            let size = enc_bin.len();
            let result = client::deploy(&mut session, &mut connect(&device)?, enc_bin, sig, &manifest.ips);
            save_session(&home, &device, &session)?;
            result?;
            println!("deployed {} IPs ({size} bytes sealed)", manifest.ips.len());
        }
        Cmd::Invoke { device, ip, inputs } => {
            let mut session = load_session(&home, &device)?;
            let desc = session
                .find_ip(&ip)
                .cloned()
                .ok_or_else(|| ClientError::ManifestInvalid(format!("no deployed IP named {ip}")))?;
            let inputs = inputs
                .iter()
                .map(|h| hex::decode(h).map_err(|e| ClientError::ManifestInvalid(format!("input {h}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let result = client::invoke(&mut session, &mut connect(&device)?, &desc, &inputs);
            save_session(&home, &device, &session)?;
            for (addr, data) in result? {
                println!("{addr:#x} {}", hex::encode(data));
            }
        }
        Cmd::Status => {
            let identity = load_identity(&home)?;
            println!("uid {} PK_USER {}", String::from_utf8_lossy(&identity.uid), hex::encode(identity.keys.public));
            let dir = home.join("sessions");
            let mut entries: Vec<_> = fs::read_dir(&dir).map(|d| d.flatten().map(|e| e.path()).collect()).unwrap_or_default();
            entries.sort();
            for path in entries {
                let s = DeviceSession::decode(&fs::read(&path).map_err(storage)?)?;
                let ips: Vec<String> = s.deployed.iter().map(|ip| ip.ip_id.display()).collect();
                println!(
                    "{} device {} deploy_ctr={} invoke_ctr={} ips=[{}]",
                    path.file_stem().unwrap_or_default().to_string_lossy(),
                    hex::encode(&s.cert_dev.subject_id),
                    s.deploy_ctr,
                    s.invoke_ctr,
                    ips.join(",")
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rctee-client: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
