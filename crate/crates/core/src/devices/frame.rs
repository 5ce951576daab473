//! Binary frame carried on the emulated RS-232 power-meter link.
//!
//! ```text
//! [0] 0xA5 sync  [1] device id  [2] sequence  [3] register count N
//! N × { register id, value hi, value lo, 0x00 }
//! CRC-16/CCITT-FALSE over bytes 0..end-of-payload, little-endian
//! ```
//!
//! | id   | quantity      | scale per LSB | encoding            |
//! |------|---------------|---------------|---------------------|
//! | 0x01 | V rms         | 0.1 V         | unsigned            |
//! | 0x02 | I rms         | 0.01 A        | unsigned            |
//! | 0x03 | P             | 1 W           | unsigned            |
//! | 0x04 | Q             | 1 var         | unsigned            |
//! | 0x05 | frequency     | 0.01 Hz       | unsigned            |
//! | 0x06 | shaft speed   | 1 RPM         | unsigned            |
//! | 0x07 | shaft torque  | 0.01 N·m      | offset-binary 0x8000|
//! | 0x08 | phase angle   | 0.01 °        | offset-binary 0x8000|

use std::collections::BTreeMap;

use crc::{Crc, CRC_16_IBM_3740};
use serde::{Deserialize, Serialize};

use crate::error::FrameError;

pub const SYNC: u8 = 0xA5;
pub const HEADER_LEN: usize = 4;
pub const REGISTER_LEN: usize = 4;
pub const CRC_LEN: usize = 2;

/// CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection).
const CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16(bytes: &[u8]) -> u16 {
    CCITT_FALSE.checksum(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum RegisterId {
    VoltageRms = 0x01,
    CurrentRms = 0x02,
    RealPower = 0x03,
    ReactivePower = 0x04,
    Frequency = 0x05,
    Speed = 0x06,
    Torque = 0x07,
    PhaseAngle = 0x08,
}

impl RegisterId {
    pub const ALL: [RegisterId; 8] = [
        RegisterId::VoltageRms,
        RegisterId::CurrentRms,
        RegisterId::RealPower,
        RegisterId::ReactivePower,
        RegisterId::Frequency,
        RegisterId::Speed,
        RegisterId::Torque,
        RegisterId::PhaseAngle,
    ];

    pub fn from_u8(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|r| *r as u8 == id)
    }

    pub fn scale(self) -> f64 {
        match self {
            RegisterId::VoltageRms => 0.1,
            RegisterId::CurrentRms => 0.01,
            RegisterId::RealPower | RegisterId::ReactivePower => 1.0,
            RegisterId::Frequency => 0.01,
            RegisterId::Speed => 1.0,
            RegisterId::Torque => 0.01,
            RegisterId::PhaseAngle => 0.01,
        }
    }

    pub fn offset(self) -> i64 {
        match self {
            RegisterId::Torque | RegisterId::PhaseAngle => 0x8000,
            _ => 0,
        }
    }

    /// Physical range representable by this register.
    pub fn range(self) -> (f64, f64) {
        let lo = -self.offset() as f64 * self.scale();
        let hi = (u16::MAX as i64 - self.offset()) as f64 * self.scale();
        (lo, hi)
    }

    pub fn encode(self, value: f64) -> Result<u16, FrameError> {
        let raw = (value / self.scale()).round();
        if !raw.is_finite() {
            return Err(FrameError::EncodingRange { register: self as u8 });
        }
        let raw = raw as i64 + self.offset();
        u16::try_from(raw).map_err(|_| FrameError::EncodingRange { register: self as u8 })
    }

    pub fn decode(self, raw: u16) -> f64 {
        (raw as i64 - self.offset()) as f64 * self.scale()
    }

    /// Clamps to the representable range, as a saturating meter front end does.
    pub fn saturate(self, value: f64) -> f64 {
        let (lo, hi) = self.range();
        if value.is_nan() {
            0.0
        } else {
            value.clamp(lo, hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub id: u8,
    pub value: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterFrame {
    pub device_id: u8,
    pub sequence: u8,
    pub payload: Vec<Register>,
}

impl MeterFrame {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + REGISTER_LEN * self.payload.len() + CRC_LEN
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FrameError> {
        let n = u8::try_from(self.payload.len())
            .map_err(|_| FrameError::TooManyRegisters(self.payload.len()))?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&[SYNC, self.device_id, self.sequence, n]);
        for r in &self.payload {
            out.push(r.id);
            out.extend_from_slice(&r.value.to_be_bytes());
            out.push(0);
        }
        let crc = crc16(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Physical value of a known register, if present.
    pub fn value(&self, id: RegisterId) -> Option<f64> {
        self.payload
            .iter()
            .find(|r| r.id == id as u8)
            .map(|r| id.decode(r.value))
    }
}

/// Encodes scaled readings into a frame; out-of-range values are refused.
pub fn encode_meter_frame(
    readings: &[(RegisterId, f64)],
    device_id: u8,
    sequence: u8,
) -> Result<Vec<u8>, FrameError> {
    let payload = readings
        .iter()
        .map(|(id, v)| {
            Ok(Register {
                id: *id as u8,
                value: id.encode(*v)?,
            })
        })
        .collect::<Result<Vec<_>, FrameError>>()?;
    MeterFrame {
        device_id,
        sequence,
        payload,
    }
    .to_bytes()
}

/// Decodes exactly one frame from the front of `bytes`.
///
/// Returns the frame and the number of bytes it occupied.
pub fn decode_meter_frame(bytes: &[u8]) -> Result<(MeterFrame, usize), FrameError> {
    let first = *bytes.first().ok_or(FrameError::Truncated {
        needed: HEADER_LEN,
        available: 0,
    })?;
    if first != SYNC {
        return Err(FrameError::BadSync(first));
    }
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let n = bytes[3] as usize;
    let body = HEADER_LEN + REGISTER_LEN * n;
    let total = body + CRC_LEN;
    if bytes.len() < total {
        return Err(FrameError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    let computed = crc16(&bytes[..body]);
    let carried = u16::from_le_bytes([bytes[body], bytes[body + 1]]);
    if computed != carried {
        return Err(FrameError::BadCrc { computed, carried });
    }
    let mut payload = Vec::with_capacity(n);
    for chunk in bytes[HEADER_LEN..body].chunks_exact(REGISTER_LEN) {
        if chunk[3] != 0 {
            return Err(FrameError::BadReserved(chunk[0]));
        }
        payload.push(Register {
            id: chunk[0],
            value: u16::from_be_bytes([chunk[1], chunk[2]]),
        });
    }
    Ok((
        MeterFrame {
            device_id: bytes[1],
            sequence: bytes[2],
            payload,
        },
        total,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DecoderStats {
    pub frames: u64,
    pub rejected: u64,
    pub resync_bytes: u64,
    pub sequence_gaps: u64,
}

/// Streaming decoder for a byte queue that may hold partial, concatenated or
/// corrupted frames. Bad sync bytes are skipped; a failed CRC discards the
/// sync byte and rescans.
#[derive(Debug, Clone, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    last_sequence: BTreeMap<u8, u8>,
    pub stats: DecoderStats,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn poll(&mut self) -> Option<MeterFrame> {
        loop {
            let start = self.buf.iter().position(|&b| b == SYNC);
            let skip = start.unwrap_or(self.buf.len());
            if skip > 0 {
                self.stats.resync_bytes += skip as u64;
                self.buf.drain(..skip);
            }
            if self.buf.is_empty() {
                return None;
            }
            match decode_meter_frame(&self.buf) {
                Ok((frame, used)) => {
                    self.buf.drain(..used);
                    self.stats.frames += 1;
                    if let Some(prev) = self.last_sequence.insert(frame.device_id, frame.sequence) {
                        if frame.sequence != prev.wrapping_add(1) {
                            self.stats.sequence_gaps += 1;
                        }
                    }
                    return Some(frame);
                }
                Err(FrameError::Truncated { .. }) => return None,
                Err(_) => {
                    self.stats.rejected += 1;
                    self.buf.drain(..1);
                }
            }
        }
    }
}
