//! Binary model format.
//!
//! All integers are little-endian `u32`, all reals little-endian IEEE-754
//! `f64` bit patterns, so a save/load round trip is bit-exact.
//!
//! ```text
//! magic        4 bytes  "MXIG"
//! version      u32      = 1
//! ndim         u32
//! input_shape  ndim x u32
//! layer_count  u32
//! layers       layer_count records, each a u8 tag followed by its payload:
//!   0 dense    inputs u32, outputs u32, weights (outputs*inputs) f64, bias (outputs) f64
//!   1 conv2d   in_ch u32, out_ch u32, k u32, kernels (out_ch*in_ch*k*k) f64, bias (out_ch) f64
//!   2 relu     -
//!   3 maxpool  -
//!   4 flatten  -
//!   5 softmax  -
//! ```

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::layer::{Conv2D, Dense, Layer};
use super::network::Network;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MXIG";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let w = &mut out;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
    w.write_u32::<LittleEndian>(net.input_shape().len() as u32).unwrap();
    for &d in net.input_shape() {
        w.write_u32::<LittleEndian>(d as u32).unwrap();
    }
    w.write_u32::<LittleEndian>(net.layers().len() as u32).unwrap();
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                w.write_u8(0).unwrap();
                w.write_u32::<LittleEndian>(d.inputs as u32).unwrap();
                w.write_u32::<LittleEndian>(d.outputs as u32).unwrap();
                write_reals(w, &d.weights);
                write_reals(w, &d.bias);
            }
            Layer::Conv2D(c) => {
                w.write_u8(1).unwrap();
                w.write_u32::<LittleEndian>(c.in_channels as u32).unwrap();
                w.write_u32::<LittleEndian>(c.out_channels as u32).unwrap();
                w.write_u32::<LittleEndian>(c.kernel_size as u32).unwrap();
                write_reals(w, &c.kernels);
                write_reals(w, &c.bias);
            }
            Layer::Relu => w.write_u8(2).unwrap(),
            Layer::MaxPool2x2 => w.write_u8(3).unwrap(),
            Layer::Flatten => w.write_u8(4).unwrap(),
            Layer::Softmax => w.write_u8(5).unwrap(),
        }
    }
    out
}

fn write_reals(w: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        w.write_u64::<LittleEndian>(v.to_bits()).unwrap();
    }
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<Network> {
    let bad = |reason: &str| Error::format(origin, reason);
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic, not a model file"));
    }
    let trunc = |_| bad("truncated model file");
    let version = cur.read_u32::<LittleEndian>().map_err(trunc)?;
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let ndim = cur.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let mut input_shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        input_shape.push(cur.read_u32::<LittleEndian>().map_err(trunc)? as usize);
    }
    let count = cur.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let tag = cur.read_u8().map_err(trunc)?;
        let layer = match tag {
            0 => {
                let inputs = cur.read_u32::<LittleEndian>().map_err(trunc)? as usize;
                let outputs = cur.read_u32::<LittleEndian>().map_err(trunc)? as usize;
                let weights = read_reals(&mut cur, inputs * outputs).map_err(trunc)?;
                let bias = read_reals(&mut cur, outputs).map_err(trunc)?;
                Layer::Dense(Dense::new(inputs, outputs, weights, bias)?)
            }
            1 => {
                let in_ch = cur.read_u32::<LittleEndian>().map_err(trunc)? as usize;
                let out_ch = cur.read_u32::<LittleEndian>().map_err(trunc)? as usize;
                let k = cur.read_u32::<LittleEndian>().map_err(trunc)? as usize;
                let kernels = read_reals(&mut cur, out_ch * in_ch * k * k).map_err(trunc)?;
                let bias = read_reals(&mut cur, out_ch).map_err(trunc)?;
                Layer::Conv2D(Conv2D::new(in_ch, out_ch, k, kernels, bias)?)
            }
            2 => Layer::Relu,
            3 => Layer::MaxPool2x2,
            4 => Layer::Flatten,
            5 => Layer::Softmax,
            other => return Err(bad(&format!("unknown layer tag {other}"))),
        };
        layers.push(layer);
    }
    if (cur.position() as usize) != bytes.len() {
        return Err(bad("trailing bytes after last layer"));
    }
    Network::new(layers, input_shape)
}

fn read_reals(cur: &mut Cursor<&[u8]>, n: usize) -> std::io::Result<Vec<f64>> {
    let remaining = cur.get_ref().len() - cur.position() as usize;
    if n.checked_mul(8).is_none_or(|b| b > remaining) {
        return Err(std::io::ErrorKind::UnexpectedEof.into());
    }
    (0..n)
        .map(|_| cur.read_u64::<LittleEndian>().map(f64::from_bits))
        .collect()
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Network> {
    let bytes = fs::read(path)?;
    decode(&bytes, path)
}
