use std::net::TcpStream;

use super::protocol::{read_frame, write_frame, Message};
use super::BitstringSource;
use crate::error::{Error, Result};
use crate::sampling::SampleSet;

/// Client side of the sample protocol: one blocking request per batch.
#[derive(Debug)]
pub struct RemoteDevice {
    address: String,
    stream: TcpStream,
}

impl RemoteDevice {
    pub fn connect(address: &str) -> Result<Self> {
        let stream = TcpStream::connect(address)
            .map_err(|e| Error::Connection(format!("cannot reach {address}: {e}")))?;
        stream.set_nodelay(true).ok();
        Ok(Self {
            address: address.to_string(),
            stream,
        })
    }

    pub fn address(&self) -> &str {
        &self.address
    }
}

impl BitstringSource for RemoteDevice {
    fn max_qubits(&self) -> u32 {
        // the request carries n_qubits in one byte; the server enforces its own limit
        64
    }

    fn sample(&mut self, circuit_seed: u64, n_qubits: u32, shots: u64) -> Result<SampleSet> {
        let n = u8::try_from(n_qubits)
            .ok()
            .filter(|&n| n <= 64)
            .ok_or_else(|| Error::domain(format!("{n_qubits} qubits cannot be requested remotely")))?;
        write_frame(
            &mut self.stream,
            &Message::SampleRequest {
                circuit_seed,
                n_qubits: n,
                shots,
            },
        )
        .map_err(|e| Error::Connection(format!("{}: {e}", self.address)))?;
        match read_frame(&mut self.stream)? {
            Some(Message::SampleResponse(set)) => {
                if set.n_bits() != n_qubits || set.total() != shots {
                    return Err(Error::Protocol {
                        code: 0,
                        message: format!(
                            "server answered with {} {}-bit samples for a request of {shots} {n_qubits}-bit samples",
                            set.total(),
                            set.n_bits()
                        ),
                    });
                }
                Ok(set)
            }
            Some(Message::Error { code, message }) => Err(Error::Protocol { code, message }),
            Some(other) => Err(Error::Protocol {
                code: 0,
                message: format!("unexpected reply {other:?}"),
            }),
            None => Err(Error::Connection(format!("{} closed the connection", self.address))),
        }
    }
}
