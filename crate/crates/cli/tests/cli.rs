// Licensed under the Apache-2.0 license

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

struct Daemon(Child);

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// Starts a binary and returns it with its first stdout line.
fn spawn(bin: &str, args: &[&str]) -> (Daemon, String) {
    let mut child = Command::new(bin).args(args).stdout(Stdio::piped()).stderr(Stdio::inherit()).spawn().unwrap();
    let mut reader = BufReader::new(child.stdout.take().unwrap());
    let mut lines = Vec::new();
    let mut line = String::new();
    while reader.read_line(&mut line).unwrap() > 0 {
        lines.push(line.trim().to_string());
        if line.contains(" on ") {
            break;
        }
        line.clear();
    }
    (Daemon(child), lines.join("\n"))
}

fn after<'a>(text: &'a str, marker: &str) -> &'a str {
    let rest = &text[text.find(marker).unwrap() + marker.len()..];
    rest.split([' ', ',', '\n']).next().unwrap()
}

fn run(bin: &str, args: &[&str]) -> Output {
    Command::new(bin).args(args).output().unwrap()
}

fn home_args<'a>(home: &'a str, rest: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--home", home];
    v.extend_from_slice(rest);
    v
}

#[test]
fn processes_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    let (ttp_bin, dev_bin, cli_bin) =
        (env!("CARGO_BIN_EXE_rctee-ttp"), env!("CARGO_BIN_EXE_rctee-device"), env!("CARGO_BIN_EXE_rctee-client"));
    let seed = "11".repeat(32);

    let out = run(ttp_bin, &["enroll-device", "--db", &d("ttp.db"), "--device-seed", &seed, "--out", &d("board"), "--crps", "16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let again = run(ttp_bin, &["enroll-device", "--db", &d("ttp.db"), "--device-seed", &seed, "--out", &d("b2")]);
    assert!(String::from_utf8_lossy(&again.stderr).contains("already enrolled"));

    let (_ttp, banner) = spawn(ttp_bin, &["serve", "--db", &d("ttp.db"), "--listen", "127.0.0.1:0"]);
    let ttp_addr = after(&banner, "listening on ").to_string();
    let board_cfg = d("board/device.toml");
    let (_dev, banner) =
        spawn(dev_bin, &["--config", &board_cfg, "--proxy-listen", "127.0.0.1:0", "--control-listen", "127.0.0.1:0"]);
    assert!(banner.contains("booted"), "{banner}");
    let dev_addr = after(&banner, "proxy on ").to_string();

    let home = d("home");
    let out = run(cli_bin, &home_args(&home, &["enroll", "--ttp", &ttp_addr]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(cli_bin, &home_args(&home, &["attest", "--device", &dev_addr, "--ttp", &ttp_addr]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(
        d("design.toml"),
        "[[ip]]\nid = \"adder\"\nkernel = \"add32\"\ninputs = 2\n\n[[ip]]\nid = \"mirror\"\nkernel = \"echo\"\nsecure = false\n",
    )
    .unwrap();
    let out = run(cli_bin, &home_args(&home, &["deploy", "--manifest", &d("design.toml"), "--device", &dev_addr]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(cli_bin, &home_args(&home, &["invoke", "--device", &dev_addr, "--ip", "adder", "--in", "00000002", "00000003"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).trim().ends_with("00000005"));

    let out = run(cli_bin, &home_args(&home, &["status"]));
    let status = String::from_utf8_lossy(&out.stdout);
    assert!(status.contains("user-000001") && status.contains("adder,mirror") && status.contains("invoke_ctr=1"), "{status}");

    let out = run(ttp_bin, &["ledger", "--db", &d("ttp.db")]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("total=16 consumed=1"));

    // bad input width comes back sealed as a kernel fault: protocol rejection
    let out = run(cli_bin, &home_args(&home, &["invoke", "--device", &dev_addr, "--ip", "adder", "--in", "01", "02"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn client_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path().to_str().unwrap();
    let cli_bin = env!("CARGO_BIN_EXE_rctee-client");
    let free = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string();
    assert_eq!(run(cli_bin, &home_args(home, &["enroll", "--ttp", &free])).status.code(), Some(4));
    assert_eq!(run(cli_bin, &home_args(home, &["status"])).status.code(), Some(2));
}

#[test]
fn image_tool_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s);
    let bin = env!("CARGO_BIN_EXE_rctee-image");
    std::fs::write(p("key"), "42".repeat(32)).unwrap();
    let mut args = vec!["pack".to_string(), "--out".into(), p("img").display().to_string(), "--key-file".into(), p("key").display().to_string()];
    for kind in ["fsbl", "pmu_fw", "bit", "atf", "tee", "uboot", "linux"] {
        std::fs::write(p(kind), format!("{kind} payload")).unwrap();
        args.push("--partition".into());
        args.push(format!("{kind}={}", p(kind).display()));
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert!(run(bin, &args).status.success());

    let out = run(bin, &["measure", p("img").to_str().unwrap(), "--key-file", p("key").to_str().unwrap()]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let h_boot = text.lines().last().unwrap().split_whitespace().nth(1).unwrap().to_string();
    assert_eq!(h_boot.len(), 336 * 2);
    assert!(text.lines().next().unwrap().starts_with("fsbl"));

    assert!(run(bin, &["unpack", p("img").to_str().unwrap(), "--key-file", p("key").to_str().unwrap(), "--out", p("out").to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(p("out").join("uboot.bin")).unwrap(), b"uboot payload");

    std::fs::write(p("wrong"), "43".repeat(32)).unwrap();
    assert!(!run(bin, &["measure", p("img").to_str().unwrap(), "--key-file", p("wrong").to_str().unwrap()]).status.success());

    std::fs::write(p("m.toml"), "filler_len = 100\n[[ip]]\nid = \"h\"\nkernel = \"sha384\"\n").unwrap();
    assert!(run(bin, &["make-bitstream", "--manifest", p("m.toml").to_str().unwrap(), "--out", p("b.rctb").to_str().unwrap()]).status.success());
    assert!(Path::new(&p("b.rctb")).exists());
}

#[test]
fn harness_single_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.txt");
    let out = run(env!("CARGO_BIN_EXE_rctee-harness"), &["run", "--scenario", "ta", "--seed", "4", "--report", report.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(report).unwrap(), "ta verdict=TA_AUTH_FAIL expected=TA_AUTH_FAIL PASS\n");
}
