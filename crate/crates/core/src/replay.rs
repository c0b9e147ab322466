//! Experience replay and the `RLRB1` transition dataset format.
//!
//! File layout (all little-endian):
//!
//! ```text
//! "RLRB1" | kind u8 | dim u32 | count u64 | count × record
//! record = state | action 2×f32 | reward f32 | next_state | terminal u8
//! ```
//!
//! A feature state is `dim` f32 values; a pixel state is 4096 bytes of
//! intensity levels. Kind 0 is features, 1 pixels, 2 features followed by
//! pixels. For kind 1 `dim` holds the frame size as `(width << 16) | height`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::render::{PixelFrame, FRAME_PIXELS, FRAME_SIZE};

const MAGIC: &[u8; 5] = b"RLRB1";
const HEADER_LEN: usize = 5 + 1 + 4 + 8;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("transition does not match buffer kind {expected:?}")]
    KindMismatch { expected: StateKind },
    #[error("cannot sample from an empty buffer")]
    Empty,
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("dataset format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ReplayError>;

/// What a stored state consists of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Features { dim: usize },
    Pixels,
    FeaturesAndPixels { dim: usize },
}

impl StateKind {
    fn tag(self) -> u8 {
        match self {
            StateKind::Features { .. } => 0,
            StateKind::Pixels => 1,
            StateKind::FeaturesAndPixels { .. } => 2,
        }
    }

    fn dim_field(self) -> u32 {
        match self {
            StateKind::Features { dim } | StateKind::FeaturesAndPixels { dim } => dim as u32,
            StateKind::Pixels => ((FRAME_SIZE as u32) << 16) | FRAME_SIZE as u32,
        }
    }

    fn from_header(tag: u8, dim: u32) -> Result<Self> {
        match tag {
            0 => Ok(StateKind::Features { dim: dim as usize }),
            1 => {
                let (w, h) = (dim >> 16, dim & 0xFFFF);
                if w as usize != FRAME_SIZE || h as usize != FRAME_SIZE {
                    return Err(ReplayError::Format(format!("unsupported frame size {w}x{h}")));
                }
                Ok(StateKind::Pixels)
            }
            2 => Ok(StateKind::FeaturesAndPixels { dim: dim as usize }),
            t => Err(ReplayError::Format(format!("unknown state kind {t}"))),
        }
    }

    /// Bytes one state occupies in a record.
    pub fn state_bytes(self) -> usize {
        match self {
            StateKind::Features { dim } => 4 * dim,
            StateKind::Pixels => FRAME_PIXELS,
            StateKind::FeaturesAndPixels { dim } => 4 * dim + FRAME_PIXELS,
        }
    }

    pub fn record_bytes(self) -> usize {
        2 * self.state_bytes() + 8 + 4 + 1
    }
}

/// A state as stored in the buffer. Frames are shared, not copied.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Features(Vec<f32>),
    Pixels(Arc<PixelFrame>),
    FeaturesAndPixels(Vec<f32>, Arc<PixelFrame>),
}

impl Observation {
    pub fn kind(&self) -> StateKind {
        match self {
            Observation::Features(f) => StateKind::Features { dim: f.len() },
            Observation::Pixels(_) => StateKind::Pixels,
            Observation::FeaturesAndPixels(f, _) => StateKind::FeaturesAndPixels { dim: f.len() },
        }
    }

    pub fn features(&self) -> Option<&[f32]> {
        match self {
            Observation::Features(f) | Observation::FeaturesAndPixels(f, _) => Some(f),
            Observation::Pixels(_) => None,
        }
    }

    pub fn pixels(&self) -> Option<&PixelFrame> {
        match self {
            Observation::Pixels(p) | Observation::FeaturesAndPixels(_, p) => Some(p),
            Observation::Features(_) => None,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        if let Some(f) = self.features() {
            for v in f {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(p) = self.pixels() {
            out.extend_from_slice(p.levels());
        }
    }

    fn read(kind: StateKind, bytes: &[u8]) -> Self {
        let floats = |b: &[u8]| -> Vec<f32> {
            b.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()
        };
        let frame = |b: &[u8]| Arc::new(PixelFrame::from_levels(b.to_vec()).expect("frame-sized slice"));
        match kind {
            StateKind::Features { .. } => Observation::Features(floats(bytes)),
            StateKind::Pixels => Observation::Pixels(frame(bytes)),
            StateKind::FeaturesAndPixels { dim } => {
                Observation::FeaturesAndPixels(floats(&bytes[..4 * dim]), frame(&bytes[4 * dim..]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub action: [f32; 2],
    pub reward: f32,
    pub next_state: Observation,
    /// Set only when the episode ended in the goal; time-limit cut-offs are
    /// not terminal.
    pub terminal: bool,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    kind: StateKind,
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push writes once the buffer is full.
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, kind: StateKind) -> Result<Self> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(Self {
            kind,
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        })
    }

    pub fn kind(&self) -> StateKind {
        self.kind
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.state.kind() != self.kind || t.next_state.kind() != self.kind {
            return Err(ReplayError::KindMismatch { expected: self.kind });
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
        Ok(())
    }

    /// `i`-th oldest stored transition.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.items.len() {
            return None;
        }
        let start = if self.items.len() == self.capacity { self.cursor } else { 0 };
        Some(&self.items[(start + i) % self.items.len()])
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        (0..self.len()).map(move |i| self.get(i).expect("index below len"))
    }

    /// Uniform draw with replacement, as storage-slot indices.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(ReplayError::Empty);
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.cursor = 0;
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(MAGIC);
        header.push(self.kind.tag());
        header.extend_from_slice(&self.kind.dim_field().to_le_bytes());
        header.extend_from_slice(&(self.len() as u64).to_le_bytes());
        w.write_all(&header)?;
        let mut rec = Vec::with_capacity(self.kind.record_bytes());
        for t in self.iter() {
            rec.clear();
            t.state.write(&mut rec);
            rec.extend_from_slice(&t.action[0].to_le_bytes());
            rec.extend_from_slice(&t.action[1].to_le_bytes());
            rec.extend_from_slice(&t.reward.to_le_bytes());
            t.next_state.write(&mut rec);
            rec.push(t.terminal as u8);
            w.write_all(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a complete dataset; the capacity equals the record count.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(ReplayError::Format("file shorter than header".into()));
        }
        if &bytes[..5] != MAGIC {
            return Err(ReplayError::Format("bad magic, not a transition dataset".into()));
        }
        let dim = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
        let kind = StateKind::from_header(bytes[5], dim)?;
        let count = u64::from_le_bytes(bytes[10..18].try_into().expect("8 bytes"));
        let rec_len = kind.record_bytes();
        let expected = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(rec_len))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| ReplayError::Format(format!("implausible record count {count}")))?;
        if bytes.len() != expected {
            return Err(ReplayError::Format(format!(
                "expected {expected} bytes for {count} records, found {}",
                bytes.len()
            )));
        }
        let count = count as usize;
        let sb = kind.state_bytes();
        let mut buf = Self::new(count.max(1), kind)?;
        buf.items.reserve(count);
        for rec in bytes[HEADER_LEN..].chunks_exact(rec_len) {
            let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().expect("4 bytes"));
            let terminal = match rec[rec_len - 1] {
                0 => false,
                1 => true,
                v => return Err(ReplayError::Format(format!("bad terminal flag {v}"))),
            };
            buf.items.push(Transition {
                state: Observation::read(kind, &rec[..sb]),
                action: [f(sb), f(sb + 4)],
                reward: f(sb + 8),
                next_state: Observation::read(kind, &rec[sb + 12..2 * sb + 12]),
                terminal,
            });
        }
        Ok(buf)
    }

    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
