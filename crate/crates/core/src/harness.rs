// Licensed under the Apache-2.0 license

//! In-process testbed (TTP, device, proxy, client over loopback TCP), a
//! frame-level interceptor for the adversary, and the attack scenarios.

use std::fmt::Write as _;
use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::client::{self, ClientError, DeviceSession, Manifest, UserIdentity};
use crate::crypto::{hash, hash_parts, sign, Certificate, Drbg, SignKeyPair, SymmetricKey};
use crate::device::host::{ClockMode, DeviceHost};
use crate::device::{DeviceConfig, Soc};
use crate::image::{package, BitstreamContainer, PartitionKind};
use crate::puf::{instantiate, PufParams};
use crate::sma::SmaArtifact;
use crate::ttp::{EnrollOptions, Enrollment, Ttp};
use crate::wire::message::types;
use crate::wire::proxy::Proxy;
use crate::wire::{read_frame, write_frame, Connection, ControlMessage, ErrorCode, Message, RawFrame, WireError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("client: {0}")]
    Client(#[from] ClientError),
    #[error("ttp: {0}")]
    Ttp(#[from] crate::ttp::TtpError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("wire: {0}")]
    Wire(#[from] WireError),
    #[error("{0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    ToServer,
    ToClient,
}

pub enum Action {
    Forward(RawFrame),
    Drop,
    /// Answer the sender directly instead of forwarding.
    Reply(RawFrame),
}

pub type Rule = Box<dyn FnMut(Flow, &RawFrame) -> Action + Send>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Captured {
    pub flow: Flow,
    pub frame: RawFrame,
}

/// Relay sitting between the client and one server. Every frame is
/// captured as sent, then passed through the current rule.
pub struct Interceptor {
    upstream: SocketAddr,
    addr: SocketAddr,
    rule: Mutex<Option<Rule>>,
    capture: Mutex<Vec<Captured>>,
}

impl Interceptor {
    pub fn spawn(upstream: SocketAddr) -> std::io::Result<Arc<Self>> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let tap = Arc::new(Interceptor {
            upstream,
            addr: listener.local_addr()?,
            rule: Mutex::new(None),
            capture: Mutex::new(Vec::new()),
        });
        let t = tap.clone();
        thread::spawn(move || {
            for client in listener.incoming().flatten() {
                let t = t.clone();
                thread::spawn(move || {
                    let _ = t.relay(client);
                });
            }
        });
        Ok(tap)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn set_rule(&self, rule: Option<Rule>) {
        *self.rule.lock().unwrap() = rule;
    }

    pub fn capture(&self) -> Vec<Captured> {
        self.capture.lock().unwrap().clone()
    }

    pub fn clear(&self) {
        self.capture.lock().unwrap().clear();
    }

    fn relay(self: Arc<Self>, client: TcpStream) -> std::io::Result<()> {
        let server = TcpStream::connect(self.upstream)?;
        server.set_nodelay(true)?;
        client.set_nodelay(true)?;
        let client_w = Arc::new(Mutex::new(BufWriter::new(client.try_clone()?)));
        let server_w = Arc::new(Mutex::new(BufWriter::new(server.try_clone()?)));
        let shutdown = {
            let (c, s) = (client.try_clone()?, server.try_clone()?);
            Arc::new(move || {
                let _ = c.shutdown(std::net::Shutdown::Both);
                let _ = s.shutdown(std::net::Shutdown::Both);
            })
        };
        let up = {
            let me = self.clone();
            let (fw, back) = (server_w.clone(), client_w.clone());
            let src = client.try_clone()?;
            let shutdown = shutdown.clone();
            thread::spawn(move || {
                me.pump(src, Flow::ToServer, fw, back);
                shutdown();
            })
        };
        self.pump(server, Flow::ToClient, client_w, server_w);
        shutdown();
        let _ = up.join();
        Ok(())
    }

    fn pump(
        &self,
        src: TcpStream,
        flow: Flow,
        forward: Arc<Mutex<BufWriter<TcpStream>>>,
        back: Arc<Mutex<BufWriter<TcpStream>>>,
    ) {
        let mut reader = BufReader::new(src);
        loop {
            let frame = match read_frame(&mut reader) {
                Ok(f) => f,
                Err(_) => return,
            };
            self.capture.lock().unwrap().push(Captured { flow, frame: frame.clone() });
            let action = match self.rule.lock().unwrap().as_mut() {
                Some(rule) => rule(flow, &frame),
                None => Action::Forward(frame),
            };
            let result = match action {
                Action::Forward(f) => write_frame(&mut *forward.lock().unwrap(), &f),
                Action::Reply(f) => write_frame(&mut *back.lock().unwrap(), &f),
                Action::Drop => Ok(()),
            };
            if result.is_err() {
                return;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestbedOptions {
    pub seed: u64,
    pub standard_firmware: bool,
    pub crp_count: usize,
    pub puf: PufParams,
    /// Board whose PUF differs from the enrolled one (an emulated device
    /// holding a copy of the image and key).
    pub emulated: bool,
}

impl TestbedOptions {
    pub fn new(seed: u64) -> Self {
        TestbedOptions {
            seed,
            standard_firmware: false,
            crp_count: crate::ttp::DEFAULT_CRP_COUNT,
            puf: PufParams::default(),
            emulated: false,
        }
    }
}

fn derive(seed: u64, label: &str) -> [u8; 32] {
    hash_parts(&[b"RCTEE-HARNESS", label.as_bytes(), &seed.to_be_bytes()]).0[..32]
        .try_into()
        .expect("32 bytes")
}

pub struct Testbed {
    pub ttp: Arc<Ttp>,
    pub host: Arc<DeviceHost>,
    pub enrollment: Enrollment,
    pub identity: UserIdentity,
    pub device_tap: Arc<Interceptor>,
    pub ttp_tap: Arc<Interceptor>,
    pub proxy_addr: SocketAddr,
    pub ttp_addr: SocketAddr,
    pub control_addr: SocketAddr,
    pub device_seed: [u8; 32],
    pub noise_seed: [u8; 32],
    pub puf: PufParams,
    pub rng: ChaCha20Rng,
}

impl Testbed {
    /// Enrolls a device and a user, boots the device and brings up the
    /// proxy, TTP service, control port and both interceptors.
    pub fn start(opts: &TestbedOptions) -> Result<Self, HarnessError> {
        let ttp = Arc::new(Ttp::new(derive(opts.seed, "ttp")));
        let device_seed = derive(opts.seed, "device");
        let noise_seed = derive(opts.seed, "noise");
        let enroll = EnrollOptions {
            standard_firmware: opts.standard_firmware,
            crp_count: opts.crp_count,
            puf: opts.puf,
            ..EnrollOptions::default()
        };
        let enrollment = ttp.enroll_device(b"csp-lab", b"zcu102-rev1", device_seed, &enroll)?;
        let board_seed = if opts.emulated { derive(opts.seed, "emulated-board") } else { device_seed };
        let soc = Soc::new(DeviceConfig {
            device_id: enrollment.device_id,
            bbram_key: enrollment.bbram_key.clone(),
            puf: instantiate(board_seed, opts.puf).map_err(|e| HarnessError::Setup(e.to_string()))?,
            noise_seed,
        });
        let host = DeviceHost::new(soc, enrollment.image.encode(), ClockMode::Deterministic);
        host.lock().power_on().map_err(|e| HarnessError::Setup(format!("boot: {e}")))?;

        let (proxy_addr, _) = Proxy::new(host.clone()).spawn(TcpListener::bind("127.0.0.1:0")?)?;
        let (control_addr, _) = host.serve_control(TcpListener::bind("127.0.0.1:0")?)?;
        let (ttp_addr, _) = ttp.serve(TcpListener::bind("127.0.0.1:0")?)?;
        let device_tap = Interceptor::spawn(proxy_addr)?;
        let ttp_tap = Interceptor::spawn(ttp_addr)?;

        let mut rng = ChaCha20Rng::from_seed(derive(opts.seed, "client"));
        let identity = client::enroll(&mut connect(ttp_tap.addr())?, &mut rng)?;
        Ok(Testbed {
            ttp,
            host,
            enrollment,
            identity,
            device_tap,
            ttp_tap,
            proxy_addr,
            ttp_addr,
            control_addr,
            device_seed,
            noise_seed,
            puf: opts.puf,
            rng,
        })
    }

    pub fn device_conn(&self) -> Result<Connection<TcpStream>, HarnessError> {
        Ok(connect(self.device_tap.addr())?)
    }

    pub fn ttp_conn(&self) -> Result<Connection<TcpStream>, HarnessError> {
        Ok(connect(self.ttp_tap.addr())?)
    }

    pub fn control(&self, msg: ControlMessage) -> Result<ControlMessage, HarnessError> {
        match connect(self.control_addr)?.call(&Message::Control(msg))? {
            Message::Control(reply) => Ok(reply),
            other => Err(HarnessError::Setup(format!("control port replied {other:?}"))),
        }
    }

    pub fn attest(&self) -> Result<DeviceSession, ClientError> {
        let mut dev = connect(self.device_tap.addr()).map_err(net)?;
        let mut ttp = connect(self.ttp_tap.addr()).map_err(net)?;
        client::attest(&self.identity, &mut dev, &mut ttp)
    }

    pub fn enroll_other_user(&mut self) -> Result<UserIdentity, HarnessError> {
        Ok(client::enroll(&mut self.ttp_conn()?, &mut self.rng)?)
    }

    /// Simulates an attacker with physical access burning a new BBRAM key
    /// and flashing an image of their own; the PUF silicon is unchanged.
    pub fn reflash(&self, bbram_key: SymmetricKey, image: Vec<u8>) -> Result<(), HarnessError> {
        let mut st = self.host.lock();
        st.power_off();
        st.soc = Soc::new(DeviceConfig {
            device_id: self.enrollment.device_id,
            bbram_key,
            puf: instantiate(self.device_seed, self.puf).map_err(|e| HarnessError::Setup(e.to_string()))?,
            noise_seed: self.noise_seed,
        });
        st.medium = image;
        Ok(())
    }

    pub fn filler(&mut self) -> Drbg {
        let mut seed = [0u8; 32];
        self.rng.fill_bytes(&mut seed);
        Drbg::new(&seed).expect("non-empty seed")
    }
}

fn connect(addr: SocketAddr) -> std::io::Result<Connection<TcpStream>> {
    let stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(Duration::from_secs(60)))?;
    stream.set_nodelay(true)?;
    Ok(Connection::new(stream))
}

fn net(e: std::io::Error) -> ClientError {
    ClientError::Network(e.to_string())
}

pub fn happy_manifest() -> Manifest {
    client::parse_manifest(
        r#"
        filler_len = 4096
        [[ip]]
        id = "adder"
        kernel = "add32"
        inputs = 2
        [[ip]]
        id = "lenet"
        kernel = "lenet_stub"
        "#,
    )
    .expect("static manifest")
}

#[derive(Debug, Clone)]
pub struct HappyReport {
    pub pk_dev: [u8; 32],
    pub ping_ok: bool,
    pub add32: u32,
    pub lenet: Vec<u8>,
    pub ledger: (usize, usize),
    pub elapsed: Duration,
}

/// Enrollment, boot, attestation, sealed ping, deployment and two
/// invocations, end to end.
pub fn run_happy_path(seed: u64) -> Result<HappyReport, HarnessError> {
    let started = Instant::now();
    let mut tb = Testbed::start(&TestbedOptions::new(seed))?;
    let mut session = tb.attest()?;
    let mut dev = tb.device_conn()?;
    let ping_ok = client::ping(&mut session, &mut dev, b"sesskey-check")? == b"sesskey-check";
    let manifest = happy_manifest();
    let mut filler = tb.filler();
    let (enc_bin, sig) = client::prepare_bitstream(&tb.identity, &session, &manifest, &mut filler)?;
    client::deploy(&mut session, &mut dev, enc_bin, sig, &manifest.ips)?;
    let adder = session.find_ip("adder").cloned().expect("deployed");
    let out = client::invoke(&mut session, &mut dev, &adder, &[2u32.to_be_bytes().to_vec(), 3u32.to_be_bytes().to_vec()])?;
    let add32 = u32::from_be_bytes(out[0].1.as_slice().try_into().map_err(|_| HarnessError::Setup("add32 width".into()))?);
    let lenet_ip = session.find_ip("lenet").cloned().expect("deployed");
    let lenet = client::invoke(&mut session, &mut dev, &lenet_ip, &[b"digit-7".to_vec()])?.remove(0).1;
    let ledger = tb.ttp.crp_ledger_status(&tb.enrollment.device_id)?;
    Ok(HappyReport { pk_dev: session.pk_dev, ping_ok, add32, lenet, ledger, elapsed: started.elapsed() })
}

/// What a client-side result looks like in a report.
pub fn verdict_of<T>(r: &Result<T, ClientError>) -> String {
    match r {
        Ok(_) => "OK".into(),
        Err(ClientError::TtpRejected(code)) => ErrorCode::describe(*code),
        Err(e) => e.code().name().into(),
    }
}

fn ack_verdict(reply: &ControlMessage) -> String {
    match reply {
        ControlMessage::Ack { status: 0, .. } => "OK".into(),
        ControlMessage::Ack { status, .. } => ErrorCode::describe(*status),
        ControlMessage::Data { .. } => "DATA".into(),
        other => format!("UNEXPECTED({other:?})"),
    }
}

fn first_frame(capture: &[Captured], flow: Flow, msg_type: u8) -> Option<RawFrame> {
    capture.iter().find(|c| c.flow == flow && c.frame.msg_type == msg_type).map(|c| c.frame.clone())
}

pub struct Scenario {
    pub name: &'static str,
    pub expected: &'static str,
    run: fn(u64) -> Result<String, HarnessError>,
}

pub const SCENARIO_NAMES: [&str; 11] = [
    "ra-1",
    "ra-2",
    "mitm-substitute",
    "mitm-stale-cert",
    "rba-custom",
    "rba-standard",
    "fia",
    "uafr",
    "ta",
    "boot",
    "kpa-wiretap",
];

pub fn scenarios() -> Vec<Scenario> {
    vec![
        Scenario { name: "ra-1", expected: "DEVICE_AUTH_FAIL", run: ra_replay_answer },
        Scenario { name: "ra-2", expected: "AUTH_FAIL", run: ra_replay_invoke },
        Scenario { name: "mitm-substitute", expected: "CERT_INVALID", run: mitm_substitute },
        Scenario { name: "mitm-stale-cert", expected: "DEVICE_AUTH_FAIL", run: mitm_stale_cert },
        Scenario { name: "rba-custom", expected: "PCAP_DISABLED", run: rba_custom },
        Scenario { name: "rba-standard", expected: "PLAINTEXT_BITSTREAM", run: rba_standard },
        Scenario { name: "fia", expected: "SIG_MISMATCH,SIG_MISMATCH", run: fia },
        Scenario { name: "uafr", expected: "PROT_VIOLATION", run: uafr },
        Scenario { name: "ta", expected: "TA_AUTH_FAIL", run: ta_forged },
        Scenario { name: "boot", expected: "BOOT_FAILED,MEASUREMENT_MISMATCH", run: boot },
        Scenario { name: "kpa-wiretap", expected: "NO_PLAINTEXT", run: kpa_wiretap },
    ]
}

/// Session 1 answer replayed into session 2.
fn ra_replay_answer(seed: u64) -> Result<String, HarnessError> {
    let tb = Testbed::start(&TestbedOptions::new(seed))?;
    tb.attest()?;
    let old = first_frame(&tb.device_tap.capture(), Flow::ToClient, types::CHALLENGE_ANSWER)
        .ok_or_else(|| HarnessError::Setup("no answer captured".into()))?;
    tb.device_tap.clear();
    tb.device_tap.set_rule(Some(Box::new(move |flow, f| match (flow, f.msg_type) {
        (Flow::ToClient, types::CHALLENGE_ANSWER) => Action::Forward(old.clone()),
        _ => Action::Forward(f.clone()),
    })));
    let result = tb.attest();
    // a client that failed step 10 must not send bitstreams or data
    let leaked = tb
        .device_tap
        .capture()
        .iter()
        .any(|c| c.flow == Flow::ToServer && matches!(c.frame.msg_type, types::DEPLOY_DATA | types::INVOKE_REQUEST));
    Ok(if leaked { "GATE_BYPASSED".into() } else { verdict_of(&result) })
}

/// A sealed request from earlier in the session replayed later.
fn ra_replay_invoke(seed: u64) -> Result<String, HarnessError> {
    let tb = Testbed::start(&TestbedOptions::new(seed))?;
    let mut session = tb.attest()?;
    let mut dev = tb.device_conn()?;
    tb.device_tap.clear();
    client::ping(&mut session, &mut dev, b"first")?;
    let old = first_frame(&tb.device_tap.capture(), Flow::ToServer, types::INVOKE_REQUEST)
        .ok_or_else(|| HarnessError::Setup("no request captured".into()))?;
    tb.device_tap.set_rule(Some(Box::new(move |flow, f| match (flow, f.msg_type) {
        (Flow::ToServer, types::INVOKE_REQUEST) => Action::Forward(old.clone()),
        _ => Action::Forward(f.clone()),
    })));
    Ok(verdict_of(&client::ping(&mut session, &mut dev, b"second")))
}

fn swap_cert_dev(frame: &RawFrame, cert: &Certificate) -> RawFrame {
    match frame.decode() {
        Ok(Message::TtpVerifyResponse { challenge, credential, .. }) => {
            Message::TtpVerifyResponse { cert_dev: cert.clone(), challenge, credential }.to_frame()
        }
        _ => frame.clone(),
    }
}

/// Adversary puts its own key where PK_DEV belongs, certifying it itself.
fn mitm_substitute(seed: u64) -> Result<String, HarnessError> {
    let mut tb = Testbed::start(&TestbedOptions::new(seed))?;
    let adversary = SignKeyPair::generate(&mut tb.rng);
    let forged = Certificate::issue(&adversary, &tb.enrollment.device_id, adversary.public);
    tb.ttp_tap.set_rule(Some(Box::new(move |flow, f| match (flow, f.msg_type) {
        (Flow::ToClient, types::TTP_VERIFY_RESPONSE) => Action::Forward(swap_cert_dev(f, &forged)),
        _ => Action::Forward(f.clone()),
    })));
    Ok(verdict_of(&tb.attest()))
}

/// Adversary replays a genuine but stale Ca(PK_DEV) and answers the
/// challenge itself, having no access to the PUF.
fn mitm_stale_cert(seed: u64) -> Result<String, HarnessError> {
    let tb = Testbed::start(&TestbedOptions::new(seed))?;
    tb.attest()?;
    let stale = match first_frame(&tb.ttp_tap.capture(), Flow::ToClient, types::TTP_VERIFY_RESPONSE).map(|f| f.decode()) {
        Some(Ok(Message::TtpVerifyResponse { cert_dev, .. })) => cert_dev,
        _ => return Err(HarnessError::Setup("no certificate captured".into())),
    };
    tb.ttp_tap.set_rule(Some(Box::new(move |flow, f| match (flow, f.msg_type) {
        (Flow::ToClient, types::TTP_VERIFY_RESPONSE) => Action::Forward(swap_cert_dev(f, &stale)),
        _ => Action::Forward(f.clone()),
    })));
    tb.device_tap.set_rule(Some(Box::new(|flow, f| match (flow, f.msg_type) {
        (Flow::ToServer, types::CHALLENGE_FORWARD) => {
            Action::Reply(Message::ChallengeAnswer { digest: hash(b"adversary guess") }.to_frame())
        }
        _ => Action::Forward(f.clone()),
    })));
    Ok(verdict_of(&tb.attest()))
}

/// Attests and deploys the happy-path design; returns the plaintext container.
fn deploy_design(tb: &mut Testbed) -> Result<(DeviceSession, Vec<u8>), HarnessError> {
    let mut session = tb.attest()?;
    let manifest = happy_manifest();
    let bin = crate::image::encode_bitstream(&manifest.ips, manifest.filler_len, &mut tb.filler())
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    let (enc_bin, sig) = client::seal_bitstream(&tb.identity, &session, &bin);
    client::deploy(&mut session, &mut tb.device_conn()?, enc_bin, sig, &manifest.ips)?;
    Ok((session, bin))
}

fn rba_custom(seed: u64) -> Result<String, HarnessError> {
    let mut tb = Testbed::start(&TestbedOptions::new(seed))?;
    deploy_design(&mut tb)?;
    Ok(ack_verdict(&tb.control(ControlMessage::PcapReadback)?))
}

/// Misconfigured baseline: standard PMU firmware leaves PCAP readable.
fn rba_standard(seed: u64) -> Result<String, HarnessError> {
    let mut tb = Testbed::start(&TestbedOptions { standard_firmware: true, ..TestbedOptions::new(seed) })?;
    let (_, bin) = deploy_design(&mut tb)?;
    Ok(match tb.control(ControlMessage::PcapReadback)? {
        ControlMessage::Data { data } if data == bin => "PLAINTEXT_BITSTREAM".into(),
        ControlMessage::Data { .. } => "UNEXPECTED_BYTES".into(),
        other => ack_verdict(&other),
    })
}

/// Flipped ciphertext byte, then a signature by another registered user.
fn fia(seed: u64) -> Result<String, HarnessError> {
    let mut tb = Testbed::start(&TestbedOptions::new(seed))?;
    let other = tb.enroll_other_user()?;
    let mut session = tb.attest()?;
    let manifest = happy_manifest();
    let mut filler = tb.filler();
    let (mut enc_bin, sig) = client::prepare_bitstream(&tb.identity, &session, &manifest, &mut filler)?;
    let mut dev = tb.device_conn()?;
    let at = enc_bin.len() / 2;
    enc_bin[at] ^= 0x40;
    let flipped = client::deploy(&mut session, &mut dev, enc_bin.clone(), sig, &manifest.ips);
    enc_bin[at] ^= 0x40;
    let foreign = sign(&other.keys.secret, &hash(&enc_bin).0);
    let foreign = client::deploy(&mut session, &mut dev, enc_bin, foreign, &manifest.ips);
    Ok(format!("{},{}", verdict_of(&flipped), verdict_of(&foreign)))
}

/// REE read of a deployed secure IP's output register.
fn uafr(seed: u64) -> Result<String, HarnessError> {
    let mut tb = Testbed::start(&TestbedOptions::new(seed))?;
    let (mut session, _) = deploy_design(&mut tb)?;
    let adder = session.find_ip("adder").cloned().expect("deployed");
    client::invoke(&mut session, &mut tb.device_conn()?, &adder, &[vec![0, 0, 0, 2], vec![0, 0, 0, 3]])?;
    Ok(ack_verdict(&tb.control(ControlMessage::BusRead { addr: adder.outputs[0], len: 4 })?))
}

fn ta_forged(seed: u64) -> Result<String, HarnessError> {
    let mut tb = Testbed::start(&TestbedOptions::new(seed))?;
    let adversary = SignKeyPair::generate(&mut tb.rng);
    let artifact = SmaArtifact { pk_ttp: adversary.public }.encode();
    let sig = sign(&adversary.secret, &artifact);
    Ok(ack_verdict(&tb.control(ControlMessage::StartTa { artifact, sig })?))
}

/// Tampered ciphertext on the boot medium, then an image rebuilt with
/// one modified partition under an attacker-chosen BBRAM key.
fn boot(seed: u64) -> Result<String, HarnessError> {
    let mut tb = Testbed::start(&TestbedOptions::new(seed))?;
    tb.control(ControlMessage::PowerOff)?;
    tb.control(ControlMessage::InjectTamper { partition: PartitionKind::Uboot as u8, offset: 3 })?;
    let tampered = match tb.control(ControlMessage::PowerOn)? {
        ControlMessage::Ack { status, .. } if status == ErrorCode::BootAuthFail.as_u16() => "BOOT_FAILED".to_string(),
        other => ack_verdict(&other),
    };

    let mut parts = tb.enrollment.partitions.clone();
    let uboot = parts.iter_mut().find(|p| p.kind == PartitionKind::Uboot).expect("uboot");
    *uboot.payload.last_mut().expect("non-empty") ^= 0x01;
    let attacker_key = SymmetricKey::random(&mut tb.rng, b"BBRAM");
    let image = package(&parts, &attacker_key, &mut tb.rng).map_err(|e| HarnessError::Setup(e.to_string()))?;
    tb.reflash(attacker_key, image.encode())?;
    let booted = ack_verdict(&tb.control(ControlMessage::PowerOn)?);
    if booted != "OK" {
        return Ok(format!("{tampered},REBUILT_{booted}"));
    }
    Ok(format!("{tampered},{}", verdict_of(&tb.attest())))
}

/// Known-plaintext check: a canary placed in the bitstream never shows
/// up on either wire.
fn kpa_wiretap(seed: u64) -> Result<String, HarnessError> {
    let mut tb = Testbed::start(&TestbedOptions::new(seed))?;
    let mut canary = [0u8; 32];
    tb.rng.fill_bytes(&mut canary);
    let mut session = tb.attest()?;
    let manifest = happy_manifest();
    let mut payload = tb.filler().take(4096);
    payload.extend_from_slice(&canary);
    let bin = BitstreamContainer { ips: manifest.ips.clone(), payload }
        .encode()
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    let (enc_bin, sig) = client::seal_bitstream(&tb.identity, &session, &bin);
    let mut dev = tb.device_conn()?;
    client::deploy(&mut session, &mut dev, enc_bin, sig, &manifest.ips)?;
    let adder = session.find_ip("adder").cloned().expect("deployed");
    client::invoke(&mut session, &mut dev, &adder, &[canary[..4].to_vec(), canary[4..8].to_vec()])?;
    let frames: Vec<Captured> = tb.device_tap.capture().into_iter().chain(tb.ttp_tap.capture()).collect();
    let leaked = frames.iter().any(|c| c.frame.to_bytes().windows(canary.len()).any(|w| w == canary));
    Ok(if leaked { "CANARY_LEAKED".into() } else { "NO_PLAINTEXT".into() })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioResult {
    pub name: String,
    pub verdict: String,
    pub expected: String,
}

impl ScenarioResult {
    pub fn passed(&self) -> bool {
        self.verdict == self.expected
    }
}

/// Runs the suite (or one named scenario); scenario `i` uses `seed + i`.
pub fn run_suite(seed: u64, only: Option<&str>) -> Result<Vec<ScenarioResult>, HarnessError> {
    let all = scenarios();
    if let Some(name) = only {
        if !all.iter().any(|s| s.name == name) {
            return Err(HarnessError::Setup(format!("no scenario named {name:?}")));
        }
    }
    Ok(all
        .iter()
        .enumerate()
        .filter(|(_, s)| only.is_none_or(|n| n == s.name))
        .map(|(i, s)| {
            let verdict = match (s.run)(seed.wrapping_add(i as u64)) {
                Ok(v) => v,
                Err(e) => format!("ERROR({e})"),
            };
            ScenarioResult { name: s.name.into(), verdict, expected: s.expected.into() }
        })
        .collect())
}

pub fn format_report(results: &[ScenarioResult]) -> String {
    let mut out = String::new();
    for r in results {
        let _ = writeln!(
            out,
            "{} verdict={} expected={} {}",
            r.name,
            r.verdict,
            r.expected,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    out
}
