//! MSB-first bit writer/reader with exp-Golomb and unary codes.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len_bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn put_bit(&mut self, bit: bool) {
        let offset = (self.bits % 8) as u8;
        if offset == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> offset;
        }
        self.bits += 1;
    }

    pub fn put_bits(&mut self, value: u64, n: u32) {
        for i in (0..n).rev() {
            self.put_bit((value >> i) & 1 == 1);
        }
    }

    /// Unsigned exp-Golomb.
    pub fn put_ue(&mut self, v: u64) {
        let code = v + 1;
        let len = 64 - code.leading_zeros();
        self.put_bits(0, len - 1);
        self.put_bits(code, len);
    }

    pub fn put_se(&mut self, v: i64) {
        self.put_ue(se_to_ue(v));
    }

    /// `n` ones followed by a zero.
    pub fn put_unary(&mut self, n: u64) {
        for _ in 0..n {
            self.put_bit(true);
        }
        self.put_bit(false);
    }

    pub fn append(&mut self, other: &BitWriter) {
        let mut r = BitReader::new(&other.bytes, other.bits);
        for _ in 0..other.bits {
            self.put_bit(r.bit().expect("within length"));
        }
    }

    pub fn into_bytes(self) -> (Vec<u8>, u64) {
        (self.bytes, self.bits)
    }
}

#[inline]
pub fn se_to_ue(v: i64) -> u64 {
    if v > 0 {
        (2 * v - 1) as u64
    } else {
        (-2 * v) as u64
    }
}

#[inline]
pub fn ue_to_se(c: u64) -> i64 {
    if c % 2 == 1 {
        c.div_ceil(2) as i64
    } else {
        -((c / 2) as i64)
    }
}

#[inline]
pub fn ue_len(v: u64) -> u64 {
    2 * (63 - (v + 1).leading_zeros() as u64) + 1
}

#[inline]
pub fn se_len(v: i64) -> u64 {
    ue_len(se_to_ue(v))
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    limit: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], limit_bits: u64) -> Self {
        BitReader {
            bytes,
            limit: limit_bits.min(bytes.len() as u64 * 8),
            pos: 0,
        }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.pos
    }

    #[inline]
    pub fn bit(&mut self) -> Result<bool> {
        if self.pos >= self.limit {
            return Err(Error::Bitstream("unexpected end of payload".into()));
        }
        let b = self.bytes[(self.pos / 8) as usize] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(b)
    }

    pub fn bits(&mut self, n: u32) -> Result<u64> {
        let mut v = 0;
        for _ in 0..n {
            v = (v << 1) | self.bit()? as u64;
        }
        Ok(v)
    }

    pub fn ue(&mut self) -> Result<u64> {
        let mut zeros = 0u32;
        while !self.bit()? {
            zeros += 1;
            if zeros > 62 {
                return Err(Error::Bitstream("exp-Golomb prefix too long".into()));
            }
        }
        let rest = self.bits(zeros)?;
        Ok(((1u64 << zeros) | rest) - 1)
    }

    pub fn se(&mut self) -> Result<i64> {
        Ok(ue_to_se(self.ue()?))
    }

    pub fn unary(&mut self, max: u64) -> Result<u64> {
        let mut n = 0;
        while self.bit()? {
            n += 1;
            if n > max {
                return Err(Error::Bitstream(format!("unary code exceeds {max}")));
            }
        }
        Ok(n)
    }
}
