// Licensed under the Apache-2.0 license

//! Acceptance run: one line per criterion, nonzero exit when any fails.

use std::collections::HashSet;
use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rctee::client::{self, ClientError};
use rctee::crypto::{Certificate, Digest, Drbg, SymmetricKey};
use rctee::device::{BusAccess, BusOp, DeviceError, IpInvocation, Prot, World};
use rctee::harness::{format_report, happy_manifest, run_happy_path, run_suite, verdict_of, Testbed, TestbedOptions};
use rctee::image::{encode_bitstream, package, IpId, PartitionKind};
use rctee::memmap::{SECURE_REGION, SHARED_REGION};
use rctee::puf::{instantiate, random_challenge, Challenge, PufParams};
use rctee::sma::TraceEvent;
use rctee::wire::message::{types, StageEntry};
use rctee::wire::{decode, encode, read_frame, CodecError, ControlMessage, ErrorCode, Message, RawFrame, WireError};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn ack_status(reply: &ControlMessage) -> Option<u16> {
    match reply {
        ControlMessage::Ack { status, .. } => Some(*status),
        _ => None,
    }
}

fn c1_happy_path() -> Outcome {
    let r = run_happy_path(1).map_err(err)?;
    ensure!(r.ping_ok, "sealed ping did not echo");
    ensure!(r.add32 == 5, "add32(2,3) = {}", r.add32);
    ensure!(r.elapsed.as_millis() < 10_000, "took {:?}", r.elapsed);
    Ok(format!("ping ok, add32(2,3)=5, {:.2} s", r.elapsed.as_secs_f64()))
}

fn c2_boot_tamper() -> Outcome {
    let (mut aead_hits, mut measured_hits) = (0, 0);
    for (i, kind) in PartitionKind::ALL.iter().enumerate() {
        let mut tb = Testbed::start(&TestbedOptions { crp_count: 4, ..TestbedOptions::new(200 + i as u64) }).map_err(err)?;

        // ciphertext byte on the boot medium
        tb.control(ControlMessage::PowerOff).map_err(err)?;
        tb.control(ControlMessage::InjectTamper { partition: *kind as u8, offset: 17 }).map_err(err)?;
        let boot = tb.control(ControlMessage::PowerOn).map_err(err)?;
        if ack_status(&boot) == Some(ErrorCode::BootAuthFail.as_u16()) {
            aead_hits += 1;
        } else {
            return Err(format!("{}: tampered ciphertext gave {boot:?}", kind.name()));
        }

        // plaintext byte, image rebuilt under an attacker key
        let mut parts = tb.enrollment.partitions.clone();
        let part = parts.iter_mut().find(|p| p.kind == *kind).expect("partition present");
        *part.payload.last_mut().expect("non-empty") ^= 0x01;
        let key = SymmetricKey::random(&mut tb.rng, b"BBRAM");
        let image = package(&parts, &key, &mut tb.rng).map_err(err)?;
        tb.reflash(key, image.encode()).map_err(err)?;
        let boot = tb.control(ControlMessage::PowerOn).map_err(err)?;
        ensure!(ack_status(&boot) == Some(0), "{}: rebuilt image did not boot: {boot:?}", kind.name());
        let v = verdict_of(&tb.attest());
        ensure!(v == "MEASUREMENT_MISMATCH", "{}: rebuilt image attested as {v}", kind.name());
        measured_hits += 1;
    }
    Ok(format!("ciphertext flips {aead_hits}/7 BOOT_AUTH_FAIL, rebuilt images {measured_hits}/7 MEASUREMENT_MISMATCH"))
}

fn c3_device_auth() -> Outcome {
    let trials = 100;
    let mut emulated_rejected = 0;
    let mut honest_passed = 0;
    let mut odd = Vec::new();
    for t in 0..trials {
        let opts = TestbedOptions { crp_count: 2, ..TestbedOptions::new(1000 + t) };
        let emu = Testbed::start(&TestbedOptions { emulated: true, ..opts.clone() }).map_err(err)?;
        match emu.attest() {
            Err(ClientError::DeviceAuthFail) => emulated_rejected += 1,
            other => odd.push(format!("emulated #{t}: {}", verdict_of(&other))),
        }
        let honest = Testbed::start(&opts).map_err(err)?;
        match honest.attest() {
            Ok(_) => honest_passed += 1,
            other => odd.push(format!("honest #{t}: {}", verdict_of(&other))),
        }
    }
    let detail = format!("emulated rejected {emulated_rejected}/{trials}, honest passed {honest_passed}/{trials}");
    ensure!(emulated_rejected == trials && honest_passed >= 99, "{detail}; {}", odd.join("; "));
    Ok(detail)
}

fn c4_puf_statistics() -> Outcome {
    let started = Instant::now();
    let params = PufParams::default();
    let mut drbg = Drbg::new(b"acceptance-puf").map_err(err)?;
    let mut noise = ChaCha20Rng::seed_from_u64(4);
    let challenge = random_challenge(&mut drbg, 64, 64);

    let model = instantiate([0x42; 32], params).map_err(err)?;
    let reference = model.evaluate(&challenge, &mut noise).map_err(err)?;
    let mut flipped = 0usize;
    let mut identical = 0usize;
    let evaluations = 200;
    for _ in 0..evaluations {
        let r = model.evaluate(&challenge, &mut noise).map_err(err)?;
        let hd = r.hamming_distance(&reference);
        flipped += hd;
        identical += usize::from(hd == 0);
    }
    let intra = 1.0 - flipped as f64 / (evaluations * 64) as f64;

    let pairs = 100;
    let mut inter_sum = 0.0;
    for p in 0..pairs {
        let mut seeds = [[0u8; 32]; 2];
        for (k, s) in seeds.iter_mut().enumerate() {
            s[..8].copy_from_slice(&(p as u64).to_be_bytes());
            s[8] = k as u8 + 1;
        }
        let a = instantiate(seeds[0], params).map_err(err)?.evaluate(&challenge, &mut noise).map_err(err)?;
        let b = instantiate(seeds[1], params).map_err(err)?.evaluate(&challenge, &mut noise).map_err(err)?;
        inter_sum += a.hamming_distance(&b) as f64 / 64.0;
    }
    let inter = inter_sum / pairs as f64;
    let elapsed = started.elapsed();
    let detail = format!(
        "intra bit agreement {:.4} ({identical}/{evaluations} identical responses), inter mean FHD {inter:.4}, {:.2} s",
        intra,
        elapsed.as_secs_f64()
    );
    ensure!(intra >= 0.99 && (0.45..=0.55).contains(&inter) && elapsed.as_secs() < 30, "{detail}");
    Ok(detail)
}

fn c5_bitstream_integrity() -> Outcome {
    let mut tb = Testbed::start(&TestbedOptions { crp_count: 4, ..TestbedOptions::new(5) }).map_err(err)?;
    let mut session = tb.attest().map_err(err)?;
    let manifest = happy_manifest();
    let mut filler = tb.filler();
    let (enc_bin, sig) = client::prepare_bitstream(&tb.identity, &session, &manifest, &mut filler).map_err(err)?;
    ensure!(enc_bin.len() >= 4096, "encrypted bitstream only {} bytes", enc_bin.len());
    let mut dev = tb.device_conn().map_err(err)?;
    tb.host.lock().sma.as_mut().expect("sma").take_trace();

    for i in 0..enc_bin.len() {
        let mut bad = enc_bin.clone();
        bad[i] ^= (i % 255 + 1) as u8;
        let v = verdict_of(&client::deploy(&mut session, &mut dev, bad, sig, &manifest.ips));
        ensure!(v == "SIG_MISMATCH", "flip at byte {i} gave {v}");
        let trace = tb.host.lock().sma.as_mut().expect("sma").take_trace();
        ensure!(trace == [TraceEvent::SignatureCheck { ok: false }], "flip at byte {i} traced {trace:?}");
    }

    // control: the same design sealed under the current deploy counter goes through
    let (fresh, fresh_sig) = client::prepare_bitstream(&tb.identity, &session, &manifest, &mut filler).map_err(err)?;
    client::deploy(&mut session, &mut dev, fresh, fresh_sig, &manifest.ips).map_err(err)?;
    let trace = tb.host.lock().sma.as_mut().expect("sma").take_trace();
    ensure!(
        matches!(trace.as_slice(), [TraceEvent::SignatureCheck { ok: true }, TraceEvent::AeadOpen { ok: true, .. }, TraceEvent::Program { ok: true }]),
        "genuine deploy traced {trace:?}"
    );
    Ok(format!("{} of {} flips rejected with SIG_MISMATCH, no AEAD open; a freshly sealed copy deploys", enc_bin.len(), enc_bin.len()))
}

fn c6_challenge_non_reuse() -> Outcome {
    let tb = Testbed::start(&TestbedOptions { crp_count: 64, ..TestbedOptions::new(6) }).map_err(err)?;
    let mut seen = HashSet::new();
    for n in 0..50 {
        tb.ttp_tap.clear();
        tb.attest().map_err(|e| format!("attestation {n}: {e}"))?;
        let challenges: Vec<Vec<u8>> = tb
            .ttp_tap
            .capture()
            .iter()
            .filter(|c| c.frame.msg_type == types::TTP_VERIFY_RESPONSE)
            .filter_map(|c| match c.frame.decode() {
                Ok(Message::TtpVerifyResponse { challenge, .. }) => Some(challenge.to_wire()),
                _ => None,
            })
            .collect();
        ensure!(challenges.len() == 1, "attestation {n} saw {} verify responses", challenges.len());
        ensure!(seen.insert(challenges[0].clone()), "attestation {n} reused a challenge");
    }
    let (total, consumed) = tb.ttp.crp_ledger_status(&tb.enrollment.device_id).map_err(err)?;
    ensure!(consumed == 50, "ledger consumed {consumed}");
    Ok(format!("50 distinct challenges, ledger {consumed}/{total} consumed"))
}

fn c7_world_confinement() -> Outcome {
    let tb = Testbed::start(&TestbedOptions { crp_count: 2, ..TestbedOptions::new(7) }).map_err(err)?;
    let golden = tb.ttp.device_record(&tb.enrollment.device_id).map_err(err)?.golden.h_boot();
    let mut drbg = Drbg::new(b"acceptance-design").map_err(err)?;
    let design = encode_bitstream(&happy_manifest().ips, 64, &mut drbg).map_err(err)?;
    let challenge = Challenge::new((0..64u8).map(|i| (i, (i + 1) % 64)).collect());
    let ghost = IpInvocation { inputs: vec![], status_addr: SECURE_REGION.start, outputs: vec![SECURE_REGION.start + 8] };
    let ghost_id = IpId::from_name("ghost").expect("name fits");

    let mut cells = 0;
    let mut st = tb.host.lock();
    let soc = &mut st.soc;
    let mut check = |name: &str, ok: bool| -> Result<(), String> {
        cells += 1;
        ensure!(ok, "cell {name} wrong");
        Ok(())
    };
    check("boot_hash/ros", soc.syscall_get_boot_hash(World::Ros).err() == Some(DeviceError::WorldViolation))?;
    check("puf/ros", soc.syscall_get_hw_puf_response(World::Ros, &challenge).err() == Some(DeviceError::WorldViolation))?;
    check("usr_def_ip/ros", soc.syscall_usr_def_ip(World::Ros, &ghost_id, &ghost).err() == Some(DeviceError::WorldViolation))?;
    check("program/ros", soc.syscall_program_user_hw(World::Ros, &design).err() == Some(DeviceError::WorldViolation))?;
    check("boot_hash/tos", soc.syscall_get_boot_hash(World::Tos).ok() == Some(golden))?;
    check("puf/tos", soc.syscall_get_hw_puf_response(World::Tos, &challenge).map(|r| r.bits.len()) == Ok(64))?;
    check("usr_def_ip/tos", matches!(soc.syscall_usr_def_ip(World::Tos, &ghost_id, &ghost), Err(DeviceError::UnknownIp(_))))?;

    let secure = SECURE_REGION.start + 0x40;
    for (name, op) in [("read", BusOp::Read { len: 4 }), ("write", BusOp::Write { data: vec![1, 2, 3, 4] })] {
        let ns = soc.bus_access(BusAccess { addr: secure, prot: Prot::NonSecure, op: op.clone() });
        check(&format!("bus {name}/nonsecure"), ns == Err(DeviceError::ProtViolation(secure)))?;
        let s = soc.bus_access(BusAccess { addr: secure, prot: Prot::Secure, op });
        check(&format!("bus {name}/secure"), s.is_ok())?;
    }
    let shared = soc.bus_access(BusAccess::read(World::Ros, SHARED_REGION.start, 4));
    check("bus shared/nonsecure", shared.is_ok())?;
    check("program/tos", soc.syscall_program_user_hw(World::Tos, &design).is_ok())?;
    drop(st);

    // same rule enforced through the REE control endpoint
    let prot = ErrorCode::ProtViolation.as_u16();
    let read = tb.control(ControlMessage::BusRead { addr: secure, len: 4 }).map_err(err)?;
    check("control read", ack_status(&read) == Some(prot))?;
    let write = tb.control(ControlMessage::BusWrite { addr: secure, data: vec![9] }).map_err(err)?;
    check("control write", ack_status(&write) == Some(prot))?;
    Ok(format!("{cells}/{cells} cells correct"))
}

fn c8_attack_suite() -> Outcome {
    let first = run_suite(8, None).map_err(err)?;
    let second = run_suite(8, None).map_err(err)?;
    let report = format_report(&first);
    ensure!(first == second, "runs differ:\n{report}---\n{}", format_report(&second));
    let failed: Vec<&str> = report.lines().filter(|l| l.ends_with("FAIL")).collect();
    ensure!(failed.is_empty(), "failing: {}", failed.join("; "));
    for line in report.lines() {
        println!("    {line}");
    }
    Ok(format!("{} scenarios pass, identical across two runs", first.len()))
}

// ---- codec fuzzing ----

fn bytes(rng: &mut ChaCha20Rng, max: usize) -> Vec<u8> {
    let n = rng.random_range(0..=max);
    let mut v = vec![0u8; n];
    rng.fill_bytes(&mut v);
    v
}

fn arr<const N: usize>(rng: &mut ChaCha20Rng) -> [u8; N] {
    let mut a = [0u8; N];
    rng.fill_bytes(&mut a);
    a
}

fn text(rng: &mut ChaCha20Rng, max: usize) -> String {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| *b"abcdefghijklmnopqrstuvwxyz_-:0123456789 ".get(rng.random_range(0..40)).unwrap() as char).collect()
}

fn cert(rng: &mut ChaCha20Rng) -> Certificate {
    Certificate { subject_id: bytes(rng, 40), subject_public: arr(rng), signature: arr(rng) }
}

fn challenge(rng: &mut ChaCha20Rng) -> Challenge {
    let n = rng.random_range(0..300);
    Challenge::new((0..n).map(|_| (rng.random(), rng.random())).collect())
}

const ALL_TYPES: [u8; 28] = [
    0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, 0x09, 0x0A, 0x0B, 0x0C, 0x0D, 0x10, 0x11, 0x20, 0x21, 0x22, 0x23, 0x24,
    0x25, 0x26, 0x27, 0x28, 0x29, 0x2A, 0x2B, 0x00,
];

fn message_of_type(t: u8, rng: &mut ChaCha20Rng) -> Message {
    match t {
        0x01 => Message::AttestRequest { cert: cert(rng) },
        0x02 => Message::AttestResponse { delta: arr(rng), epsilon: bytes(rng, 200) },
        0x03 => Message::TtpVerifyRequest { delta: arr(rng), epsilon: bytes(rng, 200) },
        0x04 => Message::TtpVerifyResponse { cert_dev: cert(rng), challenge: challenge(rng), credential: Digest(arr(rng)) },
        0x05 => Message::TtpReject { reason: rng.random() },
        0x06 => Message::ChallengeForward { challenge: challenge(rng) },
        0x07 => Message::ChallengeAnswer { digest: Digest(arr(rng)) },
        0x08 => Message::DeployData { enc_bin: bytes(rng, 4096) },
        0x09 => Message::DeployRequest { sig: arr(rng) },
        0x0A => Message::DeployAck { status: rng.random() },
        0x0B => Message::InvokeRequest { sealed: bytes(rng, 512) },
        0x0C => Message::InvokeResponse { sealed: bytes(rng, 512) },
        0x0D => Message::Error { code: rng.random(), detail: text(rng, 40) },
        0x10 => Message::EnrollUserRequest { public: arr(rng) },
        0x11 => Message::EnrollUserResponse { cert: cert(rng), uid: bytes(rng, 16), pk_ttp: arr(rng) },
        0x20 => Message::Control(ControlMessage::PowerOn),
        0x21 => Message::Control(ControlMessage::PowerOff),
        0x22 => Message::Control(ControlMessage::InjectTamper { partition: rng.random(), offset: rng.random() }),
        0x23 => Message::Control(ControlMessage::SetFirmware { standard: rng.random() }),
        0x24 => Message::Control(ControlMessage::StageQuery),
        0x25 => Message::Control(ControlMessage::StageReport {
            phase: text(rng, 12),
            stages: (0..rng.random_range(0..8))
                .map(|_| StageEntry { stage: text(rng, 12), ocm_slot_nonzero: rng.random() })
                .collect(),
        }),
        0x26 => Message::Control(ControlMessage::Ack { status: rng.random(), detail: text(rng, 20) }),
        0x27 => Message::Control(ControlMessage::BusRead { addr: rng.random(), len: rng.random() }),
        0x28 => Message::Control(ControlMessage::BusWrite { addr: rng.random(), data: bytes(rng, 64) }),
        0x29 => Message::Control(ControlMessage::PcapReadback),
        0x2A => Message::Control(ControlMessage::Data { data: bytes(rng, 64) }),
        0x2B => Message::Control(ControlMessage::StartTa { artifact: bytes(rng, 64), sig: arr(rng) }),
        _ => unreachable!(),
    }
}

fn fuzz_frame(rng: &mut ChaCha20Rng) -> Vec<u8> {
    match rng.random_range(0..5) {
        // random bytes
        0 => bytes(rng, 300),
        // one flipped byte in a valid encoding
        1 => {
            let mut b = encode(&message_of_type(ALL_TYPES[rng.random_range(0..27)], rng));
            let at = rng.random_range(0..b.len());
            b[at] ^= rng.random_range(1..=255u8);
            b
        }
        // truncated or extended valid encoding
        2 => {
            let mut b = encode(&message_of_type(ALL_TYPES[rng.random_range(0..27)], rng));
            if rng.random() {
                b.truncate(rng.random_range(0..b.len()));
            } else {
                b.extend(bytes(rng, 8));
                if rng.random() {
                    let len = (b.len() - 4) as u32;
                    b[..4].copy_from_slice(&len.to_be_bytes());
                }
            }
            b
        }
        // well-formed header, arbitrary type and payload
        3 => RawFrame::new(rng.random(), bytes(rng, 200)).to_bytes(),
        // declared length beyond the limit
        _ => {
            let mut b = rng.random_range(64 * 1024 * 1024 + 1..=u32::MAX).to_be_bytes().to_vec();
            b.extend(bytes(rng, 32));
            b
        }
    }
}

fn c9_codec_robustness() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let mut counts = [0usize; 4];
    for n in 0..10_000 {
        let frame = fuzz_frame(&mut rng);
        let outcome = catch_unwind(|| decode(&frame)).map_err(|_| format!("decode panicked on frame {n}"))?;
        match outcome {
            Err(CodecError::Malformed(_)) => counts[0] += 1,
            Err(CodecError::Oversize(_)) => counts[1] += 1,
            Err(CodecError::UnknownType(_)) => counts[2] += 1,
            Ok(msg) => {
                // a mutation can land on another valid message; it must then be canonical
                ensure!(encode(&msg) == frame, "frame {n} decoded to a non-canonical {msg:?}");
                counts[3] += 1;
            }
        }
        let streamed = catch_unwind(|| read_frame(&mut Cursor::new(&frame)).map(|f| f.decode()))
            .map_err(|_| format!("read_frame panicked on frame {n}"))?;
        ensure!(
            matches!(streamed, Ok(_) | Err(WireError::Codec(_)) | Err(WireError::Io(_))),
            "frame {n}: stream path gave {streamed:?}"
        );
    }

    let mut round_trips = 0;
    for t in &ALL_TYPES[..27] {
        for _ in 0..100 {
            let msg = message_of_type(*t, &mut rng);
            let wire = encode(&msg);
            ensure!(wire[4] == *t, "type byte {:#04x} for {t:#04x}", wire[4]);
            ensure!(decode(&wire).as_ref() == Ok(&msg), "round trip failed for type {t:#04x}");
            round_trips += 1;
        }
    }
    Ok(format!(
        "10000 fuzzed frames: {} MALFORMED, {} OVERSIZE, {} UNKNOWN_TYPE, {} still valid; {round_trips} round trips over 27 types",
        counts[0], counts[1], counts[2], counts[3]
    ))
}

fn c10_scale() -> Outcome {
    let mut tb = Testbed::start(&TestbedOptions { crp_count: 2, ..TestbedOptions::new(10) }).map_err(err)?;
    let mut session = tb.attest().map_err(err)?;
    let mut manifest = happy_manifest();
    manifest.filler_len = 27 * 1024 * 1024;
    let mut filler = tb.filler();
    let (enc_bin, sig) = client::prepare_bitstream(&tb.identity, &session, &manifest, &mut filler).map_err(err)?;
    let mut dev = tb.device_conn().map_err(err)?;
    let started = Instant::now();
    client::deploy(&mut session, &mut dev, enc_bin.clone(), sig, &manifest.ips).map_err(err)?;
    let elapsed = started.elapsed();
    let adder = session.find_ip("adder").cloned().expect("deployed");
    let out = client::invoke(&mut session, &mut dev, &adder, &[vec![0, 0, 0, 20], vec![0, 0, 0, 22]]).map_err(err)?;
    ensure!(out[0].1 == 42u32.to_be_bytes(), "adder after large deploy gave {:?}", out[0].1);
    ensure!(tb.host.lock().soc.pl_container().is_some_and(|c| c.payload.len() == manifest.filler_len), "PL payload size");
    Ok(format!("{:.1} MB encrypted bitstream deployed in {:.2} s", enc_bin.len() as f64 / 1e6, elapsed.as_secs_f64()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("end-to-end protocol", c1_happy_path),
        ("attestation soundness", c2_boot_tamper),
        ("device authentication", c3_device_auth),
        ("PUF statistics", c4_puf_statistics),
        ("bitstream integrity", c5_bitstream_integrity),
        ("challenge non-reuse", c6_challenge_non_reuse),
        ("world confinement", c7_world_confinement),
        ("attack suite", c8_attack_suite),
        ("codec robustness", c9_codec_robustness),
        ("scale check", c10_scale),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.1} s]", i + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {:>2} {name}: FAIL ({why}) [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
