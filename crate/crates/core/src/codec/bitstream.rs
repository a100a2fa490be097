//! RDMC container.
//!
//! ```text
//! "RDMC"  u8 version  u32 width  u32 height  u16 ctu_size  u8 min_cu  u8 qp_pic  u64 payload_bits
//! payload (MSB-first bits, zero-padded to a byte)
//! ```
//!
//! Integers are little-endian. The payload holds, per CTU in raster order, the
//! signed exp-Golomb QP delta against the previous CTU (the first against
//! `qp_pic`) followed by the CU tree.

use crate::error::{Error, Result};
use crate::frame::CTU_SIZES;
use crate::rate_control::QP_MAX;

pub const MAGIC: &[u8; 4] = b"RDMC";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub width: u32,
    pub height: u32,
    pub ctu_size: u32,
    pub min_cu: u32,
    pub qp_pic: i32,
    pub payload_bits: u64,
}

impl Header {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Bitstream("zero frame dimension".into()));
        }
        if !CTU_SIZES.contains(&self.ctu_size) {
            return Err(Error::Bitstream(format!("illegal ctu size {}", self.ctu_size)));
        }
        if !self.min_cu.is_power_of_two() || self.min_cu < 4 || self.min_cu > self.ctu_size {
            return Err(Error::Bitstream(format!("illegal minimum CU {}", self.min_cu)));
        }
        if !(0..=QP_MAX).contains(&self.qp_pic) {
            return Err(Error::Bitstream(format!("illegal picture QP {}", self.qp_pic)));
        }
        Ok(())
    }
}

pub fn write_stream(header: &Header, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&header.width.to_le_bytes());
    out.extend_from_slice(&header.height.to_le_bytes());
    out.extend_from_slice(&(header.ctu_size as u16).to_le_bytes());
    out.push(header.min_cu as u8);
    out.push(header.qp_pic as u8);
    out.extend_from_slice(&header.payload_bits.to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Parses and validates the header; returns it with the payload bytes.
pub fn read_stream(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Bitstream(format!(
            "stream of {} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Bitstream("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Bitstream(format!("unsupported version {}", bytes[4])));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let header = Header {
        width: u32_at(5),
        height: u32_at(9),
        ctu_size: u16::from_le_bytes([bytes[13], bytes[14]]) as u32,
        min_cu: bytes[15] as u32,
        qp_pic: bytes[16] as i32,
        payload_bits: u64::from_le_bytes(bytes[17..25].try_into().unwrap()),
    };
    header.validate()?;
    let payload = &bytes[HEADER_BYTES..];
    if header.payload_bits.div_ceil(8) != payload.len() as u64 {
        return Err(Error::Bitstream(format!(
            "payload of {} bytes does not match {} declared bits",
            payload.len(),
            header.payload_bits
        )));
    }
    Ok((header, payload))
}
