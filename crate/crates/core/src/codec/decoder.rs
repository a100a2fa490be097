//! Bitstream decoder.

use super::bitstream::{read_stream, Header};
use super::bits::BitReader;
use super::rdo::{read_tree, reconstruct_leaf, write_block};
use crate::error::{Error, Result};
use crate::frame::{CtuGrid, Frame};
use crate::rate_control::{QP_MAX, QP_MIN};

#[derive(Debug, Clone)]
pub struct Decoded {
    pub header: Header,
    pub frame: Frame,
    pub ctu_qps: Vec<i32>,
}

pub fn decode(bytes: &[u8]) -> Result<Decoded> {
    let (header, payload) = read_stream(bytes)?;
    let grid = CtuGrid::new(header.width, header.height, header.ctu_size)
        .map_err(|e| Error::Bitstream(e.to_string()))?;
    let (pw, ph) = grid.padded_dims();
    let mut recon = Frame::filled(pw, ph, 0)?;
    let mut r = BitReader::new(payload, header.payload_bits);
    let mut qp = header.qp_pic;
    let mut ctu_qps = Vec::with_capacity(grid.len());
    let mut leaves = Vec::new();
    for k in 0..grid.len() {
        let delta = r.se()?;
        let next = qp as i64 + delta;
        if !(QP_MIN as i64..=QP_MAX as i64).contains(&next) {
            return Err(Error::Bitstream(format!("CTU {k}: QP {next} out of range")));
        }
        qp = next as i32;
        ctu_qps.push(qp);
        leaves.clear();
        read_tree(&mut r, grid.coded_region(k), header.min_cu, &mut leaves)?;
        for leaf in &leaves {
            let rec = reconstruct_leaf(&recon, &leaf.region, leaf.mode, &leaf.levels, qp);
            write_block(&mut recon, &leaf.region, &rec);
        }
    }
    if r.remaining() != 0 {
        return Err(Error::Bitstream(format!("{} trailing payload bits", r.remaining())));
    }
    Ok(Decoded {
        header,
        frame: recon.cropped(header.width, header.height)?,
        ctu_qps,
    })
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    Ok(decode(bytes)?.frame)
}
