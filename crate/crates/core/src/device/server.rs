use std::io::BufReader;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::protocol::{read_payload, write_frame, Message, ERR_MALFORMED, ERR_REQUEST_REJECTED};
use super::{DeviceModel, DeviceSpec};
use crate::error::{Error, Result};
use crate::rng::mix_seed;

/// TCP sample server. Each connection gets its own thread; all sessions share
/// one [`DeviceModel`] and therefore one sampler cache.
#[derive(Debug)]
pub struct Server {
    listener: TcpListener,
    model: Arc<DeviceModel>,
    seed: u64,
    requests: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
}

impl Server {
    pub fn bind(spec: &DeviceSpec, address: impl ToSocketAddrs, seed: u64) -> Result<Self> {
        let model = Arc::new(DeviceModel::new(spec)?);
        let listener = TcpListener::bind(address).map_err(|e| Error::Connection(format!("cannot bind: {e}")))?;
        Ok(Self {
            listener,
            model,
            seed,
            requests: Arc::new(AtomicU64::new(0)),
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until [`ServerHandle::shutdown`] is called.
    pub fn run(self) -> Result<()> {
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(_) => continue,
            };
            let model = Arc::clone(&self.model);
            let requests = Arc::clone(&self.requests);
            let seed = self.seed;
            std::thread::spawn(move || {
                let _ = session(stream, &model, seed, &requests);
            });
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::clone(&self.stop);
        let thread = std::thread::spawn(move || self.run());
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }
}

fn session(stream: TcpStream, model: &DeviceModel, seed: u64, requests: &AtomicU64) -> Result<()> {
    stream.set_nodelay(true).ok();
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    loop {
        let request = match read_payload(&mut reader) {
            Ok(None) => return Ok(()),
            Ok(Some(payload)) => Message::decode(&payload),
            Err(e) => Err(e),
        };
        let reply = match request {
            Ok(Message::SampleRequest {
                circuit_seed,
                n_qubits,
                shots,
            }) => {
                let rng_seed = mix_seed(seed, requests.fetch_add(1, Ordering::Relaxed));
                match model.sample(circuit_seed, u32::from(n_qubits), shots, rng_seed) {
                    Ok(set) => Message::SampleResponse(set),
                    Err(e) => Message::Error {
                        code: ERR_REQUEST_REJECTED,
                        message: e.to_string(),
                    },
                }
            }
            Ok(other) => {
                let message = format!("unexpected message from client: {other:?}");
                write_frame(&mut writer, &Message::Error { code: ERR_MALFORMED, message })?;
                return Ok(());
            }
            Err(Error::Io(e)) => return Err(Error::Io(e)),
            Err(e) => {
                write_frame(&mut writer, &Message::Error { code: ERR_MALFORMED, message: e.to_string() })?;
                return Ok(());
            }
        };
        write_frame(&mut writer, &reply)?;
    }
}

/// Handle to a server running on a background thread.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<()>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections; open sessions end when their clients disconnect.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_now();
        }
    }
}

/// Serves `spec` on `address` until the process is stopped.
pub fn serve(spec: &DeviceSpec, address: &str, seed: u64) -> Result<()> {
    Server::bind(spec, address, seed)?.run()
}
