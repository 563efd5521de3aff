//! MRC2014 stacks, mode 2 (32-bit float) only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub const HEADER_LEN: usize = 1024;
const MODE_F32: i32 = 2;

/// `nz` square sections of `nx * nx` floats; section `z`, row `i`, column
/// `j` is `data[(z * nx + i) * nx + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MrcStack {
    pub nx: usize,
    pub nz: usize,
    /// Angstrom per pixel.
    pub pixel_size: f32,
    pub data: Vec<f32>,
    pub labels: Vec<String>,
}

impl MrcStack {
    pub fn from_images(images: &[Image]) -> Result<Self> {
        let nx = images.first().map_or(0, |im| im.size());
        let pixel_size = images.first().map_or(1.0, |im| im.pixel_size()) as f32;
        let mut data = Vec::with_capacity(images.len() * nx * nx);
        for im in images {
            if im.size() != nx {
                return Err(Error::Shape("images in a stack must share one size".into()));
            }
            data.extend(im.data().iter().map(|&v| v as f32));
        }
        Ok(Self {
            nx,
            nz: images.len(),
            pixel_size,
            data,
            labels: Vec::new(),
        })
    }

    pub fn to_images(&self) -> Vec<Image> {
        let sec = self.nx * self.nx;
        (0..self.nz)
            .map(|z| {
                let v = self.data[z * sec..(z + 1) * sec].iter().map(|&x| x as f64).collect();
                Image::from_vec(self.nx, self.pixel_size as f64, v).expect("section size")
            })
            .collect()
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.labels.push(label.to_string());
        self
    }
}

fn put_i32(buf: &mut [u8], word: usize, v: i32) {
    buf[word * 4..word * 4 + 4].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(buf: &mut [u8], word: usize, v: f32) {
    buf[word * 4..word * 4 + 4].copy_from_slice(&v.to_le_bytes());
}

fn get_i32(buf: &[u8], word: usize) -> i32 {
    i32::from_le_bytes(buf[word * 4..word * 4 + 4].try_into().expect("4 bytes"))
}

fn get_f32(buf: &[u8], word: usize) -> f32 {
    f32::from_le_bytes(buf[word * 4..word * 4 + 4].try_into().expect("4 bytes"))
}

pub fn encode_mrc(stack: &MrcStack) -> Result<Vec<u8>> {
    if stack.data.len() != stack.nx * stack.nx * stack.nz {
        return Err(Error::Shape(format!(
            "{} values for a {}x{}x{} stack",
            stack.data.len(),
            stack.nx,
            stack.nx,
            stack.nz
        )));
    }
    if stack.labels.len() > 10 {
        return Err(Error::InvalidParameter("at most 10 labels".into()));
    }
    let mut h = vec![0u8; HEADER_LEN];
    let (nx, nz) = (stack.nx as i32, stack.nz as i32);
    put_i32(&mut h, 0, nx);
    put_i32(&mut h, 1, nx);
    put_i32(&mut h, 2, nz);
    put_i32(&mut h, 3, MODE_F32);
    put_i32(&mut h, 7, nx);
    put_i32(&mut h, 8, nx);
    put_i32(&mut h, 9, nz);
    let px = stack.pixel_size;
    put_f32(&mut h, 10, px * nx as f32);
    put_f32(&mut h, 11, px * nx as f32);
    put_f32(&mut h, 12, px * nz as f32);
    for w in 13..16 {
        put_f32(&mut h, w, 90.0);
    }
    put_i32(&mut h, 16, 1);
    put_i32(&mut h, 17, 2);
    put_i32(&mut h, 18, 3);
    let (mut lo, mut hi, mut sum, mut sq) = (f32::INFINITY, f32::NEG_INFINITY, 0.0f64, 0.0f64);
    for &v in &stack.data {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v as f64;
        sq += (v as f64) * (v as f64);
    }
    let count = stack.data.len().max(1) as f64;
    let mean = sum / count;
    let rms = (sq / count - mean * mean).max(0.0).sqrt();
    if stack.data.is_empty() {
        lo = 0.0;
        hi = 0.0;
    }
    put_f32(&mut h, 19, lo);
    put_f32(&mut h, 20, hi);
    put_f32(&mut h, 21, mean as f32);
    // ispg 0 (image stack), nsymbt 0
    h[104..108].copy_from_slice(b"MRCO");
    put_i32(&mut h, 27, 20140);
    h[208..212].copy_from_slice(b"MAP ");
    h[212..216].copy_from_slice(&[0x44, 0x44, 0, 0]);
    put_f32(&mut h, 54, rms as f32);
    put_i32(&mut h, 55, stack.labels.len() as i32);
    for (t, label) in stack.labels.iter().enumerate() {
        let bytes = label.as_bytes();
        let n = bytes.len().min(80);
        let start = 224 + 80 * t;
        h[start..start + n].copy_from_slice(&bytes[..n]);
        h[start + n..start + 80].fill(b' ');
    }
    let mut out = h;
    out.reserve(stack.data.len() * 4);
    for &v in &stack.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_mrc(bytes: &[u8]) -> Result<MrcStack> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!(
            "{} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    let mode = get_i32(bytes, 3);
    if mode != MODE_F32 {
        return Err(Error::UnsupportedMode(mode));
    }
    if bytes[212] != 0x44 {
        return Err(Error::Schema("only little-endian MRC files are supported".into()));
    }
    let (nx, ny, nz) = (get_i32(bytes, 0), get_i32(bytes, 1), get_i32(bytes, 2));
    if nx != ny {
        return Err(Error::Shape(format!("nx = {nx} differs from ny = {ny}")));
    }
    if nx < 0 || nz < 0 {
        return Err(Error::Shape(format!("negative dimensions {nx} x {nz}")));
    }
    let ext = get_i32(bytes, 23).max(0) as usize;
    let (nx, nz) = (nx as usize, nz as usize);
    let start = HEADER_LEN + ext;
    let need = start + nx * nx * nz * 4;
    if bytes.len() < need {
        return Err(Error::Truncated(format!("{} bytes, expected {need}", bytes.len())));
    }
    let data = bytes[start..need]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let nlabl = get_i32(bytes, 55).clamp(0, 10) as usize;
    let labels = (0..nlabl)
        .map(|t| {
            let raw = &bytes[224 + 80 * t..224 + 80 * (t + 1)];
            String::from_utf8_lossy(raw).trim_end().to_string()
        })
        .collect();
    let cell = get_f32(bytes, 10);
    let pixel_size = if nx > 0 && cell > 0.0 { cell / nx as f32 } else { 1.0 };
    Ok(MrcStack {
        nx,
        nz,
        pixel_size,
        data,
        labels,
    })
}

pub fn write_mrc(stack: &MrcStack, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_mrc(stack)?)?;
    Ok(())
}

pub fn read_mrc(path: impl AsRef<Path>) -> Result<MrcStack> {
    decode_mrc(&fs::read(path)?)
}
