// Licensed under the Apache-2.0 license

//! One simulated board: boots from its image and exposes the ROS proxy
//! port and the harness control port.

use std::fs;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rctee::crypto::SymmetricKey;
use rctee::device::host::{ClockMode, DeviceHost};
use rctee::device::{DeviceConfig, Soc};
use rctee::puf::{instantiate, PufParams};
use rctee::ttp::device_id_for;
use rctee::wire::proxy::Proxy;
use rctee_cli::{listen_addr, load_config, parse_hex32, random32, read_key_file, relative_to};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "rctee-device", about = "Simulated FPGA-SoC with SMA, proxy and control port")]
struct Cli {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    proxy_listen: Option<String>,
    #[arg(long)]
    control_listen: Option<String>,
    /// Stay powered off until a power-on control message arrives
    #[arg(long)]
    no_boot: bool,
}

#[derive(Deserialize)]
struct DeviceFile {
    image: PathBuf,
    key_file: PathBuf,
    device_seed: String,
    noise_seed: Option<String>,
    proxy_listen: Option<String>,
    control_listen: Option<String>,
}

fn run(cli: Cli) -> Result<(), String> {
    let cfg: DeviceFile = load_config(&cli.config)?;
    let image = fs::read(relative_to(&cli.config, &cfg.image)).map_err(|e| format!("image: {e}"))?;
    let key = read_key_file(&relative_to(&cli.config, &cfg.key_file))?;
    let seed = parse_hex32(&cfg.device_seed)?;
    let noise_seed = match &cfg.noise_seed {
        Some(s) => parse_hex32(s)?,
        None => random32(),
    };
    let soc = Soc::new(DeviceConfig {
        device_id: device_id_for(&seed),
        bbram_key: SymmetricKey::new(key, b"BBRAM"),
        puf: instantiate(seed, PufParams::default()).map_err(|e| e.to_string())?,
        noise_seed,
    });
    let host = DeviceHost::new(soc, image, ClockMode::System);
    if !cli.no_boot {
        match host.lock().power_on() {
            Ok(()) => println!("booted {}", hex::encode(device_id_for(&seed))),
            Err(e) => eprintln!("boot failed: {e}"),
        }
    }
    let proxy = listen_addr(cli.proxy_listen.or(cfg.proxy_listen).as_deref().unwrap_or("127.0.0.1:7200"), "RCTEE_PROXY_PORT")?;
    let control = listen_addr(cli.control_listen.or(cfg.control_listen).as_deref().unwrap_or("127.0.0.1:7201"), "RCTEE_CONTROL_PORT")?;
    let bind = |a| TcpListener::bind(a).map_err(|e| format!("{a}: {e}"));
    let (control_addr, _) = host.serve_control(bind(control)?).map_err(|e| e.to_string())?;
    let (proxy_addr, handle) = Proxy::new(host).spawn(bind(proxy)?).map_err(|e| e.to_string())?;
    println!("proxy on {proxy_addr}, control on {control_addr}");
    handle.join().map_err(|_| "proxy thread panicked".to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rctee-device: {e}");
            ExitCode::from(1)
        }
    }
}
