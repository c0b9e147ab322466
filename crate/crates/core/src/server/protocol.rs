use std::io::{self, Read, Write};

use crate::render::FRAME_PIXELS;

use super::ServerError;

pub const OP_HELLO: u8 = 0x01;
pub const OP_RESET: u8 = 0x02;
pub const OP_STEP: u8 = 0x03;
pub const OP_CLOSE: u8 = 0x04;
pub const OP_ERROR: u8 = 0xFF;

/// Largest accepted payload.
pub const MAX_PAYLOAD: usize = 5 * 1024 * 1024;

pub const MODE_STATES: u8 = 0b01;
pub const MODE_PIXELS: u8 = 0b10;

const STATE_BYTES: usize = 6 * 4;

/// Error codes carried by an `OP_ERROR` frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum ErrorCode {
    UnknownSession = 0x01,
    EpisodeFinished = 0x02,
    InvalidAction = 0x03,
    UnknownOpcode = 0x04,
    MalformedPayload = 0x05,
    Refused = 0x06,
}

impl ErrorCode {
    pub fn from_u16(v: u16) -> Option<Self> {
        Some(match v {
            0x01 => Self::UnknownSession,
            0x02 => Self::EpisodeFinished,
            0x03 => Self::InvalidAction,
            0x04 => Self::UnknownOpcode,
            0x05 => Self::MalformedPayload,
            0x06 => Self::Refused,
            _ => return None,
        })
    }
}

/// One length-prefixed message: `u32 length | u8 opcode | payload`, where
/// `length = 1 + payload.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(opcode: u8, payload: Vec<u8>) -> Self {
        Self { opcode, payload }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.extend_from_slice(&(1 + self.payload.len() as u32).to_le_bytes());
        out.push(self.opcode);
        out.extend_from_slice(&self.payload);
        out
    }
}

/// Writes a frame and flushes.
pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), ServerError> {
    if frame.payload.len() > MAX_PAYLOAD {
        return Err(ServerError::FrameTooLarge(frame.payload.len()));
    }
    w.write_all(&frame.to_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` on a clean end of stream before the length
/// prefix.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, ServerError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len == 0 {
        return Err(ServerError::Protocol("zero-length frame".into()));
    }
    if len - 1 > MAX_PAYLOAD {
        return Err(ServerError::FrameTooLarge(len - 1));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let opcode = body[0];
    body.remove(0);
    Ok(Some(Frame { opcode, payload: body }))
}

/// Observation as sent over the wire. Pixels are the frame's quantized
/// intensity levels.
#[derive(Debug, Clone, PartialEq)]
pub struct WireObservation {
    pub states: Option<[f32; 6]>,
    pub pixels: Option<Vec<u8>>,
}

impl WireObservation {
    fn write(&self, out: &mut Vec<u8>) {
        if let Some(s) = &self.states {
            for v in s {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(p) = &self.pixels {
            out.extend_from_slice(p);
        }
    }

    /// The payload length identifies which parts are present.
    fn read(bytes: &[u8]) -> Result<Self, ServerError> {
        let (has_states, has_pixels) = match bytes.len() {
            0 => (false, false),
            STATE_BYTES => (true, false),
            FRAME_PIXELS => (false, true),
            n if n == STATE_BYTES + FRAME_PIXELS => (true, true),
            n => return Err(ServerError::Protocol(format!("observation of {n} bytes"))),
        };
        let states = has_states.then(|| {
            let mut s = [0f32; 6];
            for (i, v) in s.iter_mut().enumerate() {
                *v = f32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
            }
            s
        });
        let off = if has_states { STATE_BYTES } else { 0 };
        let pixels = has_pixels.then(|| bytes[off..off + FRAME_PIXELS].to_vec());
        Ok(Self { states, pixels })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Hello { mode: u8, noise: bool, seed: u64 },
    Reset { session: u32 },
    Step { session: u32, action: [f32; 2] },
    Close { session: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Hello { session: u32 },
    Reset(WireObservation),
    Step {
        reward: f32,
        done: bool,
        success: bool,
        observation: WireObservation,
    },
    Closed { session: u32 },
    Error(u16),
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ServerError> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| ServerError::Protocol("payload too short".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ServerError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ServerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ServerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, ServerError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn flag(&mut self) -> Result<bool, ServerError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(ServerError::Protocol(format!("flag byte {b}"))),
        }
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }

    fn finish(&self) -> Result<(), ServerError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(ServerError::Protocol("trailing payload bytes".into()))
        }
    }
}

impl Request {
    pub fn encode(&self) -> Frame {
        let mut p = Vec::new();
        let op = match self {
            Self::Hello { mode, noise, seed } => {
                p.push(*mode);
                p.push(*noise as u8);
                p.extend_from_slice(&seed.to_le_bytes());
                OP_HELLO
            }
            Self::Reset { session } => {
                p.extend_from_slice(&session.to_le_bytes());
                OP_RESET
            }
            Self::Step { session, action } => {
                p.extend_from_slice(&session.to_le_bytes());
                p.extend_from_slice(&action[0].to_le_bytes());
                p.extend_from_slice(&action[1].to_le_bytes());
                OP_STEP
            }
            Self::Close { session } => {
                p.extend_from_slice(&session.to_le_bytes());
                OP_CLOSE
            }
        };
        Frame::new(op, p)
    }

    pub fn decode(frame: &Frame) -> Result<Self, ServerError> {
        let mut c = Cursor::new(&frame.payload);
        let req = match frame.opcode {
            OP_HELLO => Self::Hello {
                mode: c.u8()?,
                noise: c.flag()?,
                seed: c.u64()?,
            },
            OP_RESET => Self::Reset { session: c.u32()? },
            OP_STEP => Self::Step {
                session: c.u32()?,
                action: [c.f32()?, c.f32()?],
            },
            OP_CLOSE => Self::Close { session: c.u32()? },
            op => return Err(ServerError::UnknownOpcode(op)),
        };
        c.finish()?;
        Ok(req)
    }
}

impl Response {
    pub fn encode(&self) -> Frame {
        let mut p = Vec::new();
        let op = match self {
            Self::Hello { session } => {
                p.extend_from_slice(&session.to_le_bytes());
                OP_HELLO
            }
            Self::Reset(obs) => {
                obs.write(&mut p);
                OP_RESET
            }
            Self::Step {
                reward,
                done,
                success,
                observation,
            } => {
                p.extend_from_slice(&reward.to_le_bytes());
                p.push(*done as u8);
                p.push(*success as u8);
                observation.write(&mut p);
                OP_STEP
            }
            Self::Closed { session } => {
                p.extend_from_slice(&session.to_le_bytes());
                OP_CLOSE
            }
            Self::Error(code) => {
                p.extend_from_slice(&code.to_le_bytes());
                OP_ERROR
            }
        };
        Frame::new(op, p)
    }

    pub fn decode(frame: &Frame) -> Result<Self, ServerError> {
        let mut c = Cursor::new(&frame.payload);
        let resp = match frame.opcode {
            OP_HELLO => Self::Hello { session: c.u32()? },
            OP_RESET => Self::Reset(WireObservation::read(c.rest())?),
            OP_STEP => Self::Step {
                reward: c.f32()?,
                done: c.flag()?,
                success: c.flag()?,
                observation: WireObservation::read(c.rest())?,
            },
            OP_CLOSE => Self::Closed { session: c.u32()? },
            OP_ERROR => Self::Error(u16::from_le_bytes(c.take(2)?.try_into().unwrap())),
            op => return Err(ServerError::UnknownOpcode(op)),
        };
        c.finish()?;
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout() {
        let f = Request::Reset { session: 7 }.encode();
        assert_eq!(f.to_bytes(), vec![5, 0, 0, 0, OP_RESET, 7, 0, 0, 0]);
    }

    #[test]
    fn oversized_length_rejected() {
        let mut bytes = ((MAX_PAYLOAD + 2) as u32).to_le_bytes().to_vec();
        bytes.push(OP_HELLO);
        assert!(matches!(
            read_frame(&mut bytes.as_slice()),
            Err(ServerError::FrameTooLarge(_))
        ));
    }

    #[test]
    fn observation_sizes() {
        assert!(WireObservation::read(&[0u8; 10]).is_err());
        let o = WireObservation::read(&[0u8; STATE_BYTES + FRAME_PIXELS]).unwrap();
        assert!(o.states.is_some() && o.pixels.is_some());
    }
}
