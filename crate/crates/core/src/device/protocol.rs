//! Length-prefixed request/response frames for remote sampling.
//!
//! ```text
//! frame   := len: u32 LE, payload[len]
//! payload := opcode: u8, body
//! 0x01 SAMPLE_REQ  { circuit_seed: u64 LE, n_qubits: u8, shots: u64 LE }
//! 0x02 SAMPLE_RESP { sample-set encoding }
//! 0x7F ERROR       { code: u8, message: UTF-8 }
//! ```

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::sampling::SampleSet;

pub const OP_SAMPLE_REQ: u8 = 0x01;
pub const OP_SAMPLE_RESP: u8 = 0x02;
pub const OP_ERROR: u8 = 0x7F;

/// Malformed frame or unexpected message; the session is closed.
pub const ERR_MALFORMED: u8 = 1;
/// Well-formed request the device could not serve; the session stays open.
pub const ERR_REQUEST_REJECTED: u8 = 2;

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_LEN: u32 = 1 << 30;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    SampleRequest { circuit_seed: u64, n_qubits: u8, shots: u64 },
    SampleResponse(SampleSet),
    Error { code: u8, message: String },
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Message::SampleRequest {
                circuit_seed,
                n_qubits,
                shots,
            } => {
                let mut out = Vec::with_capacity(18);
                out.push(OP_SAMPLE_REQ);
                out.extend_from_slice(&circuit_seed.to_le_bytes());
                out.push(*n_qubits);
                out.extend_from_slice(&shots.to_le_bytes());
                out
            }
            Message::SampleResponse(set) => {
                let mut out = Vec::with_capacity(1 + set.encoded_len());
                out.push(OP_SAMPLE_RESP);
                set.write_to(&mut out).expect("writing to a Vec cannot fail");
                out
            }
            Message::Error { code, message } => {
                let mut out = Vec::with_capacity(2 + message.len());
                out.push(OP_ERROR);
                out.push(*code);
                out.extend_from_slice(message.as_bytes());
                out
            }
        }
    }

    pub fn decode(payload: &[u8]) -> Result<Message> {
        let (&opcode, body) = payload
            .split_first()
            .ok_or_else(|| Error::format(0, "empty payload"))?;
        match opcode {
            OP_SAMPLE_REQ => {
                if body.len() != 17 {
                    return Err(Error::format(1, format!("SAMPLE_REQ body has {} bytes, expected 17", body.len())));
                }
                Ok(Message::SampleRequest {
                    circuit_seed: u64::from_le_bytes(body[0..8].try_into().unwrap()),
                    n_qubits: body[8],
                    shots: u64::from_le_bytes(body[9..17].try_into().unwrap()),
                })
            }
            OP_SAMPLE_RESP => Ok(Message::SampleResponse(
                SampleSet::from_bytes(body).map_err(|e| shift_offset(e, 1))?,
            )),
            OP_ERROR => {
                let (&code, text) = body
                    .split_first()
                    .ok_or_else(|| Error::format(1, "ERROR frame without a code"))?;
                let message = String::from_utf8(text.to_vec())
                    .map_err(|_| Error::format(2, "ERROR message is not UTF-8"))?;
                Ok(Message::Error { code, message })
            }
            other => Err(Error::format(0, format!("unknown opcode {other:#04x}"))),
        }
    }
}

fn shift_offset(e: Error, by: u64) -> Error {
    match e {
        Error::Format { offset, message } => Error::Format {
            offset: offset + by,
            message,
        },
        other => other,
    }
}

/// Writes one frame.
pub fn write_frame<W: Write>(w: &mut W, message: &Message) -> io::Result<()> {
    let payload = message.encode();
    w.write_all(&(payload.len() as u32).to_le_bytes())?;
    w.write_all(&payload)?;
    w.flush()
}

/// Reads one raw payload; `Ok(None)` on a clean end of stream before a frame starts.
pub fn read_payload<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::format(got as u64, "stream ended inside a frame header")),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(len);
    if len == 0 || len > MAX_FRAME_LEN {
        return Err(Error::format(0, format!("invalid frame length {len}")));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::format(4, "stream ended inside a frame payload"),
        _ => Error::Io(e),
    })?;
    Ok(Some(payload))
}

/// Reads and decodes one frame.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Message>> {
    match read_payload(r)? {
        Some(payload) => Message::decode(&payload).map(Some),
        None => Ok(None),
    }
}
