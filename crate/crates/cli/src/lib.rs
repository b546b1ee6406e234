// Licensed under the Apache-2.0 license

//! Plumbing shared by the command-line tools: config files, hex key files
//! and listen-address overrides.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

/// Reads a TOML config file.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Resolves `p` against the directory holding the config file.
pub fn relative_to(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    config.parent().map(|d| d.join(p)).unwrap_or_else(|| p.to_path_buf())
}

pub fn parse_hex32(text: &str) -> Result<[u8; 32], String> {
    let bytes = hex::decode(text.trim()).map_err(|e| format!("hex: {e}"))?;
    bytes.try_into().map_err(|b: Vec<u8>| format!("expected 32 bytes, got {}", b.len()))
}

pub fn read_key_file(path: &Path) -> Result<[u8; 32], String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_hex32(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn write_key_file(path: &Path, key: &[u8; 32]) -> Result<(), String> {
    fs::write(path, format!("{}\n", hex::encode(key))).map_err(|e| format!("{}: {e}", path.display()))
}

/// Parses `addr`, replacing its port with `$env_var` when that is set.
pub fn listen_addr(addr: &str, env_var: &str) -> Result<SocketAddr, String> {
    let mut parsed: SocketAddr = addr.parse().map_err(|e| format!("{addr}: {e}"))?;
    if let Ok(port) = std::env::var(env_var) {
        parsed.set_port(port.parse().map_err(|e| format!("{env_var}={port}: {e}"))?);
    }
    Ok(parsed)
}

pub fn random32() -> [u8; 32] {
    rand::random()
}
