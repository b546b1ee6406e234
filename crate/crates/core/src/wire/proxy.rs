// Licensed under the Apache-2.0 license

//! REE proxy server. It reads frame headers only: payloads are handed to
//! the SMA endpoint untouched, and `DeployData` payloads go straight into
//! the REE/TEE shared buffer.

use std::io::{BufReader, BufWriter, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use super::message::types::DEPLOY_DATA;
use super::{read_frame, write_frame, ErrorCode, Message, RawFrame, WireError};
use crate::memmap::{SHARED_MEMORY_SIZE, SHARED_REGION};

/// What the proxy can reach inside the device: the shared buffer and the
/// SMA's message entry point.
pub trait SmaEndpoint: Send + Sync {
    /// Copies `data` to the start of shared memory.
    fn write_shared(&self, data: &[u8]) -> Result<(), ErrorCode>;
    /// Hands one frame to the SMA. `None` means the SMA sends no reply.
    fn deliver(&self, frame: RawFrame) -> Result<Option<RawFrame>, ErrorCode>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedHandle {
    pub addr: u64,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Inbound,
    Outbound,
}

pub type Tap = Arc<dyn Fn(Direction, &RawFrame) + Send + Sync>;

pub fn receive_write_bitstream(endpoint: &dyn SmaEndpoint, enc_bin: &[u8]) -> Result<SharedHandle, ErrorCode> {
    if enc_bin.is_empty() {
        return Err(ErrorCode::Malformed);
    }
    if enc_bin.len() > SHARED_MEMORY_SIZE {
        return Err(ErrorCode::SharedMemOverflow);
    }
    endpoint.write_shared(enc_bin)?;
    Ok(SharedHandle { addr: SHARED_REGION.start, len: enc_bin.len() })
}

fn error_frame(code: ErrorCode, detail: &str) -> RawFrame {
    Message::error(code, detail).to_frame()
}

#[derive(Clone)]
pub struct Proxy {
    endpoint: Arc<dyn SmaEndpoint>,
    tap: Option<Tap>,
}

impl Proxy {
    pub fn new(endpoint: Arc<dyn SmaEndpoint>) -> Self {
        Proxy { endpoint, tap: None }
    }

    pub fn with_tap(mut self, tap: Tap) -> Self {
        self.tap = Some(tap);
        self
    }

    /// Response to one inbound frame, if any.
    pub fn handle_frame(&self, frame: RawFrame) -> Option<RawFrame> {
        if frame.msg_type == DEPLOY_DATA {
            return match receive_write_bitstream(self.endpoint.as_ref(), &frame.payload) {
                Ok(_) => None,
                Err(code) => Some(error_frame(code, "receive-write bitstream")),
            };
        }
        match self.endpoint.deliver(frame) {
            Ok(reply) => reply,
            Err(code) => Some(error_frame(code, "sma")),
        }
    }

    /// Relays frames until the peer closes the connection.
    pub fn forward(&self, stream: TcpStream) -> Result<(), WireError> {
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = BufWriter::new(stream);
        loop {
            let frame = match read_frame(&mut reader) {
                Ok(f) => f,
                Err(WireError::Io(e)) if e.kind() == ErrorKind::UnexpectedEof => return Ok(()),
                Err(WireError::Codec(e)) => {
                    // framing is lost; report and drop the connection
                    write_frame(&mut writer, &error_frame(e.code(), &e.to_string()))?;
                    return Ok(());
                }
                Err(e) => return Err(e),
            };
            if let Some(tap) = &self.tap {
                tap(Direction::Inbound, &frame);
            }
            if let Some(reply) = self.handle_frame(frame) {
                if let Some(tap) = &self.tap {
                    tap(Direction::Outbound, &reply);
                }
                write_frame(&mut writer, &reply)?;
            }
        }
    }

    /// Accepts connections on `listener`, one thread per client.
    pub fn spawn(self, listener: TcpListener) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
        let addr = listener.local_addr()?;
        let handle = thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let proxy = self.clone();
                thread::spawn(move || {
                    let _ = proxy.forward(stream);
                });
            }
        });
        Ok((addr, handle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::Connection;
    use std::sync::Mutex;

    #[derive(Default)]
    struct Recorder {
        shared: Mutex<Vec<u8>>,
        delivered: Mutex<Vec<RawFrame>>,
        down: bool,
    }

    impl SmaEndpoint for Recorder {
        fn write_shared(&self, data: &[u8]) -> Result<(), ErrorCode> {
            *self.shared.lock().unwrap() = data.to_vec();
            Ok(())
        }

        fn deliver(&self, frame: RawFrame) -> Result<Option<RawFrame>, ErrorCode> {
            if self.down {
                return Err(ErrorCode::SmaUnavailable);
            }
            self.delivered.lock().unwrap().push(frame.clone());
            Ok(Some(frame))
        }
    }

    #[test]
    fn shared_memory_bounds() {
        let r = Recorder::default();
        assert_eq!(receive_write_bitstream(&r, &[]), Err(ErrorCode::Malformed));
        let big = vec![0u8; SHARED_MEMORY_SIZE + 1];
        assert_eq!(receive_write_bitstream(&r, &big), Err(ErrorCode::SharedMemOverflow));
        let h = receive_write_bitstream(&r, b"cipher").unwrap();
        assert_eq!(h, SharedHandle { addr: 0x6000_0000, len: 6 });
        assert_eq!(*r.shared.lock().unwrap(), b"cipher");
    }

    #[test]
    fn relays_over_tcp_byte_identical() {
        let rec = Arc::new(Recorder::default());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen2 = seen.clone();
        let proxy = Proxy::new(rec.clone()).with_tap(Arc::new(move |d, f: &RawFrame| {
            seen2.lock().unwrap().push((d, f.to_bytes()));
        }));
        let (addr, _h) = proxy.spawn(TcpListener::bind("127.0.0.1:0").unwrap()).unwrap();
        let mut conn = Connection::new(TcpStream::connect(addr).unwrap());

        let deploy = Message::DeployData { enc_bin: vec![0xAB; 1000] };
        conn.send(&deploy).unwrap();
        let invoke = Message::InvokeRequest { sealed: vec![1, 2, 3] };
        assert_eq!(conn.call(&invoke).unwrap(), invoke);

        assert_eq!(*rec.shared.lock().unwrap(), deploy.encode_payload());
        assert_eq!(rec.delivered.lock().unwrap()[0], invoke.to_frame());
        let seen = seen.lock().unwrap();
        assert_eq!(seen[1].1, seen[2].1);
        assert_eq!(seen[1].1, crate::wire::encode(&invoke));
    }

    #[test]
    fn sma_down_and_bad_frames() {
        let proxy = Proxy::new(Arc::new(Recorder { down: true, ..Default::default() }));
        let (addr, _h) = proxy.spawn(TcpListener::bind("127.0.0.1:0").unwrap()).unwrap();
        let mut conn = Connection::new(TcpStream::connect(addr).unwrap());
        let reply = conn.call(&Message::ChallengeAnswer { digest: crate::crypto::hash(b"") }).unwrap();
        assert!(matches!(reply, Message::Error { code, .. } if code == ErrorCode::SmaUnavailable as u16));

        let mut stream = TcpStream::connect(addr).unwrap();
        use std::io::Write;
        stream.write_all(&(200u32 * 1024 * 1024).to_be_bytes()).unwrap();
        let mut conn = Connection::new(stream);
        let reply = conn.recv().unwrap();
        assert!(matches!(reply, Message::Error { code, .. } if code == ErrorCode::Oversize as u16));
    }
}
