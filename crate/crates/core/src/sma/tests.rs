// Licensed under the Apache-2.0 license

use super::*;
use crate::crypto::{aead_seal, SignKeyPair};
use crate::device::DeviceConfig;
use crate::image::{BitstreamContainer, IpDescriptor};
use crate::memmap::SECURE_REGION;
use crate::puf::{instantiate, PufParams};
use crate::ttp::{EnrollOptions, Enrollment, Ttp};
use tiny_keccak::{Hasher, Sha3};

fn sha3_384(parts: &[&[u8]]) -> [u8; 48] {
    let mut h = Sha3::v384();
    for p in parts {
        h.update(p);
    }
    let mut out = [0u8; 48];
    h.finalize(&mut out);
    out
}

struct Bench {
    ttp: Ttp,
    enrollment: Enrollment,
    soc: Soc,
    sma: Sma,
    user: SignKeyPair,
    cert: Certificate,
}

fn bench() -> Bench {
    let ttp = Ttp::new([2; 32]);
    let opts = EnrollOptions { crp_count: 16, ..EnrollOptions::default() };
    let enrollment = ttp.enroll_device(b"csp", b"rev1", [5; 32], &opts).unwrap();
    let mut soc = Soc::new(DeviceConfig {
        device_id: enrollment.device_id,
        bbram_key: enrollment.bbram_key.clone(),
        puf: instantiate([5; 32], PufParams::default()).unwrap(),
        noise_seed: [6; 32],
    });
    soc.power_on(&enrollment.image.encode()).unwrap();
    let sma = Sma::start(
        &soc,
        &enrollment.sma_artifact,
        &enrollment.sma_signature,
        Box::new(StepClock { now: 0, step: 1000 }),
    )
    .unwrap();
    let user = SignKeyPair::from_secret([8; 32]);
    let (cert, _, _) = ttp.enroll_user(&user.public).unwrap();
    Bench { ttp, enrollment, soc, sma, user, cert }
}

impl Bench {
    /// Runs the attestation exchange and returns the user's session key.
    fn establish(&mut self) -> SymmetricKey {
        let (delta, eps) = self.sma.handle_attest_request(&mut self.soc, &self.cert).unwrap();
        let att = self.ttp.verify_attestation(&delta, &eps).unwrap();
        let digest = self.sma.handle_challenge(&mut self.soc, &att.challenge).unwrap();
        assert_eq!(digest, att.credential);
        assert_eq!(Some(att.cert_dev.subject_public), self.sma.pk_dev());
        session_key(&self.user.secret, &att.cert_dev.subject_public).unwrap()
    }

    fn stage(&mut self, enc_bin: &[u8]) {
        let payload = Message::DeployData { enc_bin: enc_bin.to_vec() }.encode_payload();
        self.soc.write_shared(&payload).unwrap();
    }
}

fn adder() -> IpDescriptor {
    let base = SECURE_REGION.start + 0x400;
    IpDescriptor {
        ip_id: IpId::from_name("adder").unwrap(),
        kernel: crate::device::kernels::ADD32.into(),
        secure: true,
        status_addr: base,
        inputs: vec![base + 8, base + 16],
        outputs: vec![base + 24],
    }
}

#[test]
fn nonce_layout() {
    assert_eq!(session_nonce(DEPLOY_NONCE_LABEL, 1), *b"DEP\0\0\0\0\0\0\0\x01\0");
    assert_eq!(session_nonce(RESPONSE_NONCE_LABEL, 0x0102), *b"INR\0\0\0\0\0\0\x01\x02\0");
    assert_ne!(session_nonce(INVOKE_NONCE_LABEL, 5), session_nonce(RESPONSE_NONCE_LABEL, 5));
}

#[test]
fn alpha_and_credential_match_reference_hash() {
    let h_boot = [0xA5u8; 336];
    let di = [0x11u8; 16];
    assert_eq!(alpha(&h_boot, &di).0, sha3_384(&[&h_boot, &di]));
    assert_eq!(credential_digest(&[1, 2, 3], &di).0, sha3_384(&[&[1, 2, 3], &di]));
}

#[test]
fn artifact_round_trip() {
    let a = SmaArtifact { pk_ttp: [3; 32] };
    let bytes = a.encode();
    assert!(bytes.starts_with(ARTIFACT_MAGIC));
    assert_eq!(SmaArtifact::decode(&bytes), Some(a));
    assert_eq!(SmaArtifact::decode(&bytes[..bytes.len() - 1]), None);
    let mut extra = bytes.clone();
    extra.push(0);
    assert_eq!(SmaArtifact::decode(&extra), None);
}

#[test]
fn start_requires_ta_signature() {
    let b = bench();
    let forged = sign(&[9; 32], &b.enrollment.sma_artifact);
    let e = Sma::start(&b.soc, &b.enrollment.sma_artifact, &forged, Box::new(SystemClock)).err().unwrap();
    assert_eq!(e.code(), ErrorCode::TaAuthFail);
}

#[test]
fn attestation_report_is_bound_to_boot_state() {
    let mut b = bench();
    let (delta, eps) = b.sma.handle_attest_request(&mut b.soc, &b.cert).unwrap();
    assert_eq!(b.sma.state(), SessionState::AwaitChallenge);
    let pk_dev = b.sma.pk_dev().unwrap();
    let golden = b.ttp.device_record(&b.enrollment.device_id).unwrap().golden.h_boot();
    assert!(verify(&pk_dev, &alpha(&golden, &b.enrollment.device_id).0, &delta));
    assert_eq!(eps.len(), 32 + EPSILON_PLAINTEXT_LEN + 16);
    let att = b.ttp.verify_attestation(&delta, &eps).unwrap();
    assert_eq!(att.cert_dev.subject_id, b.enrollment.device_id);
}

#[test]
fn each_attestation_yields_a_fresh_device_key() {
    let mut b = bench();
    b.sma.handle_attest_request(&mut b.soc, &b.cert).unwrap();
    let first = b.sma.pk_dev().unwrap();
    b.sma.handle_attest_request(&mut b.soc, &b.cert).unwrap();
    assert_ne!(first, b.sma.pk_dev().unwrap());
}

#[test]
fn untrusted_user_certificate_rejected() {
    let mut b = bench();
    let rogue = SignKeyPair::from_secret([0x44; 32]);
    let cert = Certificate::issue(&rogue, b"user-x", b.user.public);
    assert_eq!(b.sma.handle_attest_request(&mut b.soc, &cert), Err(SmaError::CertInvalid));
    assert_eq!(b.sma.state(), SessionState::Idle);
    assert!(b.sma.pk_dev().is_none());
}

#[test]
fn messages_out_of_order_are_refused() {
    let mut b = bench();
    let c = Challenge::new(vec![(0, 1)]);
    assert_eq!(b.sma.handle_challenge(&mut b.soc, &c), Err(SmaError::BadState(SessionState::Idle)));
    assert_eq!(b.sma.handle_deploy(&mut b.soc, &[0; 64]), Err(SmaError::BadState(SessionState::Idle)));
    assert_eq!(b.sma.handle_invoke(&mut b.soc, b"x"), Err(SmaError::BadState(SessionState::Idle)));
    b.establish();
    assert_eq!(b.sma.handle_challenge(&mut b.soc, &c), Err(SmaError::BadState(SessionState::Established)));
}

#[test]
fn deploy_then_invoke() {
    let mut b = bench();
    let key = b.establish();
    let bin = BitstreamContainer { ips: vec![adder()], payload: vec![0; 128] }.encode().unwrap();
    let enc = aead_seal(&key, &session_nonce(DEPLOY_NONCE_LABEL, 0), DEPLOY_AAD, &bin);
    b.stage(&enc);
    b.sma.handle_deploy(&mut b.soc, &sign(&b.user.secret, &hash(&enc).0)).unwrap();
    assert_eq!(b.soc.pl_container().unwrap().ips, vec![adder()]);
    assert_eq!(
        b.sma.take_trace(),
        vec![
            TraceEvent::SignatureCheck { ok: true },
            TraceEvent::AeadOpen { purpose: "deploy", ok: true },
            TraceEvent::Program { ok: true },
        ]
    );

    let ip = adder();
    let inv = IpInvocation {
        inputs: vec![(ip.inputs[0], 20u32.to_be_bytes().to_vec()), (ip.inputs[1], 22u32.to_be_bytes().to_vec())],
        status_addr: ip.status_addr,
        outputs: ip.outputs.clone(),
    };
    let req = aead_seal(&key, &session_nonce(INVOKE_NONCE_LABEL, 0), INVOKE_AAD, &encode_invoke(&ip.ip_id, &inv));
    let sealed = b.sma.handle_invoke(&mut b.soc, &req).unwrap();
    let body = aead_open(&key, &session_nonce(RESPONSE_NONCE_LABEL, 0), INVOKE_AAD, &sealed).unwrap();
    let (status, rest) = decode_body(&body).unwrap();
    assert_eq!(status, 0);
    assert_eq!(decode_invoke_outputs(rest).unwrap(), vec![(ip.outputs[0], 42u32.to_be_bytes().to_vec())]);

    // the PUF left with the initial design
    let cert = b.cert.clone();
    assert_eq!(b.sma.handle_attest_request(&mut b.soc, &cert).unwrap_err().code(), ErrorCode::PufNotPresent);
    assert_eq!(b.sma.state(), SessionState::Established);
}

#[test]
fn signature_checked_before_decryption() {
    let mut b = bench();
    let key = b.establish();
    let bin = BitstreamContainer { ips: vec![adder()], payload: vec![1; 64] }.encode().unwrap();
    let enc = aead_seal(&key, &session_nonce(DEPLOY_NONCE_LABEL, 0), DEPLOY_AAD, &bin);
    let sig = sign(&b.user.secret, &hash(&enc).0);
    let mut bad = enc.clone();
    bad[10] ^= 4;
    b.stage(&bad);
    assert_eq!(b.sma.handle_deploy(&mut b.soc, &sig), Err(SmaError::SigMismatch));
    assert_eq!(b.sma.take_trace(), vec![TraceEvent::SignatureCheck { ok: false }]);
    assert_eq!(b.soc.pl_container().unwrap().ips, crate::device::initial_design());
    assert_eq!(b.soc.shared_len(), 0);
}

#[test]
fn deploy_counter_moves_on_failed_attempts() {
    let mut b = bench();
    let key = b.establish();
    let bin = BitstreamContainer { ips: vec![adder()], payload: vec![] }.encode().unwrap();
    // attempt 0 fails on an empty staging area
    assert_eq!(b.sma.handle_deploy(&mut b.soc, &[0; 64]).unwrap_err().code(), ErrorCode::Malformed);
    let stale = aead_seal(&key, &session_nonce(DEPLOY_NONCE_LABEL, 0), DEPLOY_AAD, &bin);
    b.stage(&stale);
    assert_eq!(b.sma.handle_deploy(&mut b.soc, &sign(&b.user.secret, &hash(&stale).0)), Err(SmaError::AuthFail));
    let fresh = aead_seal(&key, &session_nonce(DEPLOY_NONCE_LABEL, 2), DEPLOY_AAD, &bin);
    b.stage(&fresh);
    b.sma.handle_deploy(&mut b.soc, &sign(&b.user.secret, &hash(&fresh).0)).unwrap();
}

#[test]
fn replayed_invoke_gets_sealed_auth_fail() {
    let mut b = bench();
    let key = b.establish();
    let req = aead_seal(&key, &session_nonce(INVOKE_NONCE_LABEL, 0), INVOKE_AAD, &encode_ping(b"hello"));
    let first = b.sma.handle_invoke(&mut b.soc, &req).unwrap();
    let body = aead_open(&key, &session_nonce(RESPONSE_NONCE_LABEL, 0), INVOKE_AAD, &first).unwrap();
    assert_eq!(decode_body(&body).unwrap(), (0, &b"hello"[..]));

    let replay = b.sma.handle_invoke(&mut b.soc, &req).unwrap();
    let body = aead_open(&key, &session_nonce(RESPONSE_NONCE_LABEL, 1), INVOKE_AAD, &replay).unwrap();
    assert_eq!(decode_body(&body).unwrap().0, ErrorCode::AuthFail.as_u16());
    assert_eq!(b.sma.take_trace().last(), Some(&TraceEvent::AeadOpen { purpose: "invoke", ok: false }));
}

#[test]
fn invoke_errors_are_sealed_with_codes() {
    let mut b = bench();
    let key = b.establish();
    let ip = adder();
    let inv = IpInvocation { inputs: vec![], status_addr: ip.status_addr, outputs: ip.outputs.clone() };
    let req = aead_seal(&key, &session_nonce(INVOKE_NONCE_LABEL, 0), INVOKE_AAD, &encode_invoke(&ip.ip_id, &inv));
    let sealed = b.sma.handle_invoke(&mut b.soc, &req).unwrap();
    let body = aead_open(&key, &session_nonce(RESPONSE_NONCE_LABEL, 0), INVOKE_AAD, &sealed).unwrap();
    assert_eq!(decode_body(&body).unwrap().0, ErrorCode::UnknownIp.as_u16());

    let req = aead_seal(&key, &session_nonce(INVOKE_NONCE_LABEL, 1), INVOKE_AAD, &[9]);
    let sealed = b.sma.handle_invoke(&mut b.soc, &req).unwrap();
    let body = aead_open(&key, &session_nonce(RESPONSE_NONCE_LABEL, 1), INVOKE_AAD, &sealed).unwrap();
    assert_eq!(decode_body(&body).unwrap().0, ErrorCode::Malformed.as_u16());
}

#[test]
fn dispatcher_refuses_foreign_vocabulary() {
    let mut b = bench();
    let reply = b.sma.handle(&mut b.soc, Message::TtpReject { reason: 1 }).unwrap();
    assert!(matches!(reply, Message::Error { code, .. } if code == ErrorCode::UnknownType.as_u16()));
    let reply = b.sma.handle(&mut b.soc, Message::DeployRequest { sig: [0; 64] }).unwrap();
    assert_eq!(reply, Message::DeployAck { status: ErrorCode::BadState.as_u16() });
}

#[test]
fn device_errors_map_to_wire_codes() {
    assert_eq!(SmaError::Device(DeviceError::NotRunning).code(), ErrorCode::NotBooted);
    assert_eq!(SmaError::Device(DeviceError::PufNotPresent).code(), ErrorCode::PufNotPresent);
}
