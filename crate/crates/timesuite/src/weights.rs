//! `TSW1` weight files.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic     4 bytes  "TSW1"
//! kind      u32      1 = token shuffle, 2 = TAPE
//! nmeta     u32
//! meta      nmeta x u64
//!             shuffle: m, c_q, c_l
//!             tape:    merge_len, clip_num, input_dim, mid_dim, output_dim, sample_rate
//! ntensors  u32
//! per tensor:
//!   name_len u32, name (UTF-8), rank u32, dims rank x u64, data prod(dims) x f64
//! ```
//!
//! TAPE tensors appear in `TapeParams::visit` order with the same names.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use timesuite_core::tape::{tape_init, TapeConfig, TapeParams};
use timesuite_core::token_shuffle::{ShuffleConfig, ShuffleParams};
use timesuite_core::Tensor2D;

pub const MAGIC: &[u8; 4] = b"TSW1";
pub const KIND_SHUFFLE: u32 = 1;
pub const KIND_TAPE: u32 = 2;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn header(&mut self, kind: u32, meta: &[usize]) {
        self.0.extend_from_slice(MAGIC);
        self.u32(kind);
        self.u32(meta.len() as u32);
        meta.iter().for_each(|&m| self.u64(m as u64));
    }

    fn tensor(&mut self, name: &str, dims: &[usize], data: &[f64]) {
        self.u32(name.len() as u32);
        self.0.extend_from_slice(name.as_bytes());
        self.u32(dims.len() as u32);
        dims.iter().for_each(|&d| self.u64(d as u64));
        data.iter().for_each(|v| self.0.extend_from_slice(&v.to_le_bytes()));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            bail!("truncated weight file at byte {}", self.pos);
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into()?))
    }

    fn header(&mut self, kind: u32) -> Result<Vec<usize>> {
        ensure!(self.take(4)? == MAGIC, "not a TSW1 weight file");
        let found = self.u32()?;
        ensure!(found == kind, "weight file holds kind {found}, expected {kind}");
        let n = self.u32()? as usize;
        (0..n).map(|_| Ok(usize::try_from(self.u64()?)?)).collect()
    }

    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f64>)> {
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec()).context("tensor name is not UTF-8")?;
        let rank = self.u32()? as usize;
        let dims: Vec<usize> = (0..rank).map(|_| Ok(usize::try_from(self.u64()?)?)).collect::<Result<_>>()?;
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .context("tensor size overflows")?;
        let bytes = self.take(count.checked_mul(8).context("tensor size overflows")?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok((name, dims, data))
    }

    fn finish(&self) -> Result<()> {
        ensure!(self.pos == self.buf.len(), "{} trailing bytes in weight file", self.buf.len() - self.pos);
        Ok(())
    }
}

pub fn encode_shuffle(p: &ShuffleParams) -> Vec<u8> {
    let c = p.config;
    let mut w = Writer(Vec::new());
    w.header(KIND_SHUFFLE, &[c.m, c.c_q, c.c_l]);
    w.u32(2);
    w.tensor("weight", &[p.weight.rows(), p.weight.cols()], p.weight.data());
    w.tensor("bias", &[p.bias.len()], &p.bias);
    w.0
}

pub fn decode_shuffle(buf: &[u8]) -> Result<ShuffleParams> {
    let mut r = Reader { buf, pos: 0 };
    let meta = r.header(KIND_SHUFFLE)?;
    let [m, c_q, c_l] = meta[..] else {
        bail!("shuffle header needs 3 values, found {}", meta.len());
    };
    ensure!(r.u32()? == 2, "shuffle weight file must hold 2 tensors");
    let (wn, wd, wv) = r.tensor()?;
    let (bn, bd, bv) = r.tensor()?;
    r.finish()?;
    ensure!(wn == "weight" && bn == "bias", "unexpected tensor names {wn:?}, {bn:?}");
    ensure!(wd.len() == 2 && bd.len() == 1, "unexpected tensor ranks");
    let config = ShuffleConfig { m, c_q, c_l };
    Ok(ShuffleParams::new(config, Tensor2D::from_vec(wd[0], wd[1], wv)?, bv)?)
}

pub fn encode_tape(p: &TapeParams) -> Vec<u8> {
    let c = p.config;
    let mut w = Writer(Vec::new());
    w.header(
        KIND_TAPE,
        &[c.merge_len, c.clip_num, c.input_dim, c.mid_dim, c.output_dim, c.sample_rate],
    );
    let mut n = 0u32;
    p.visit(|_, _, _| n += 1);
    w.u32(n);
    p.visit(|name, dims, data| w.tensor(name, dims, data));
    w.0
}

pub fn decode_tape(buf: &[u8]) -> Result<TapeParams> {
    let mut r = Reader { buf, pos: 0 };
    let meta = r.header(KIND_TAPE)?;
    let [merge_len, clip_num, input_dim, mid_dim, output_dim, sample_rate] = meta[..] else {
        bail!("TAPE header needs 6 values, found {}", meta.len());
    };
    let config = TapeConfig {
        merge_len,
        clip_num,
        input_dim,
        mid_dim,
        output_dim,
        sample_rate,
    };
    let mut params = tape_init(config, 0)?;
    let mut expected = Vec::new();
    params.visit(|name, dims, _| expected.push((name.to_string(), dims.to_vec())));
    let n = r.u32()? as usize;
    ensure!(n == expected.len(), "TAPE file holds {n} tensors, expected {}", expected.len());
    let mut flat = Vec::with_capacity(params.num_params());
    for (name, dims) in &expected {
        let (found, fdims, data) = r.tensor()?;
        ensure!(&found == name && &fdims == dims, "tensor {found:?} {fdims:?} where {name:?} {dims:?} was expected");
        flat.extend(data);
    }
    r.finish()?;
    params.load_flat(&flat)?;
    Ok(params)
}

pub fn read_tape(path: &Path) -> Result<TapeParams> {
    let buf = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_tape(&buf).with_context(|| format!("decoding {}", path.display()))
}

pub fn read_shuffle(path: &Path) -> Result<ShuffleParams> {
    let buf = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_shuffle(&buf).with_context(|| format!("decoding {}", path.display()))
}
