// Licensed under the Apache-2.0 license

//! Boot-image and bitstream tooling.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rctee::client::parse_manifest;
use rctee::crypto::{Drbg, SymmetricKey};
use rctee::image::{encode_bitstream, package, unpack_and_measure, BootableImage, Partition, PartitionKind};
use rctee_cli::{random32, read_key_file};

#[derive(Parser)]
#[command(name = "rctee-image", about = "Pack, unpack and measure RCBI images; build RCTB bitstreams")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Encrypt seven partition payloads into an image
    Pack {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        key_file: PathBuf,
        /// kind=path, one per partition (fsbl, pmu_fw, bit, atf, tee, uboot, linux)
        #[arg(long = "partition", required = true)]
        partitions: Vec<String>,
    },
    /// Decrypt every partition into a directory
    Unpack {
        image: PathBuf,
        #[arg(long)]
        key_file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print per-partition digests and H_BOOT
    Measure {
        image: PathBuf,
        #[arg(long)]
        key_file: PathBuf,
    },
    /// Build a plaintext bitstream container from a manifest
    MakeBitstream {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn decrypt(image: &Path, key_file: &Path) -> Result<(Vec<Partition>, rctee::image::MeasurementSet), String> {
    let image = BootableImage::decode(&fs::read(image).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let key = SymmetricKey::new(read_key_file(key_file)?, b"BBRAM");
    unpack_and_measure(&image, &key).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Pack { out, key_file, partitions } => {
            let key = SymmetricKey::new(read_key_file(&key_file)?, b"BBRAM");
            let mut parts = Vec::new();
            for entry in &partitions {
                let (kind, path) = entry.split_once('=').ok_or_else(|| format!("{entry}: expected kind=path"))?;
                let kind = PartitionKind::from_name(kind).ok_or_else(|| format!("unknown partition kind {kind}"))?;
                parts.push(Partition::opaque(kind, fs::read(path).map_err(|e| format!("{path}: {e}"))?));
            }
            let image = package(&parts, &key, &mut rand::rng()).map_err(|e| e.to_string())?;
            fs::write(&out, image.encode()).map_err(|e| e.to_string())?;
            println!("wrote {}", out.display());
        }
        Cmd::Unpack { image, key_file, out } => {
            let (parts, _) = decrypt(&image, &key_file)?;
            fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            for p in parts {
                let path = out.join(format!("{}.bin", p.kind.name()));
                fs::write(&path, &p.payload).map_err(|e| e.to_string())?;
                println!("{} {} bytes", path.display(), p.payload.len());
            }
        }
        Cmd::Measure { image, key_file } => {
            let (_, ms) = decrypt(&image, &key_file)?;
            for kind in PartitionKind::ALL {
                println!("{:<7} {}", kind.name(), hex::encode(ms.get(kind).0));
            }
            println!("H_BOOT  {}", hex::encode(ms.h_boot()));
        }
        Cmd::MakeBitstream { manifest, out } => {
            let m = parse_manifest(&fs::read_to_string(&manifest).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let mut filler = Drbg::new(&random32()).map_err(|e| e.to_string())?;
            let bin = encode_bitstream(&m.ips, m.filler_len, &mut filler).map_err(|e| e.to_string())?;
            fs::write(&out, &bin).map_err(|e| e.to_string())?;
            println!("wrote {} ({} bytes, {} IPs)", out.display(), bin.len(), m.ips.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rctee-image: {e}");
            ExitCode::from(1)
        }
    }
}
