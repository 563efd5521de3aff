//! Per-block covariance error and Fourier ring correlation.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::covariance::BlockDiagHermitian;
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub n: usize,
    pub error: f64,
}

/// `||C_n - R_n||_F / ||R_n||_F` for every block whose reference is
/// nonzero; zero-norm reference blocks are skipped.
pub fn block_relative_error(
    estimate: &BlockDiagHermitian,
    reference: &BlockDiagHermitian,
) -> Result<Vec<BlockError>> {
    if estimate.dims() != reference.dims() {
        return Err(Error::Shape("block structures differ".into()));
    }
    let mut out = Vec::new();
    for n in 0..reference.num_blocks() {
        let norm = reference.block_norm(n);
        if norm == 0.0 {
            log::debug!("block {n} skipped: zero reference norm");
            continue;
        }
        let diff: f64 = estimate
            .block(n)
            .iter()
            .zip(reference.block(n))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        out.push(BlockError {
            n,
            error: diff / norm,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrcRing {
    pub radius: usize,
    pub value: f64,
    /// Fourier samples in the ring.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrcCurve {
    pub rings: Vec<FrcRing>,
}

impl FrcCurve {
    pub fn values(&self) -> Vec<f64> {
        self.rings.iter().map(|r| r.value).collect()
    }

    pub fn mean(&self) -> f64 {
        self.rings.iter().map(|r| r.value).sum::<f64>() / self.rings.len().max(1) as f64
    }
}

fn fft2(img: &Image, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let l = img.size();
    let fft = planner.plan_fft_forward(l);
    let mut data: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for row in data.chunks_mut(l) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); l];
    for j in 0..l {
        for i in 0..l {
            col[i] = data[i * l + j];
        }
        fft.process(&mut col);
        for i in 0..l {
            data[i * l + j] = col[i];
        }
    }
    data
}

fn signed_frequency(i: usize, l: usize) -> f64 {
    if i < l.div_ceil(2) {
        i as f64
    } else {
        i as f64 - l as f64
    }
}

/// Per ring `r = floor(|k|) < L/2`: `(sum a conj(b), sum |a|^2, sum |b|^2, count)`.
pub fn ring_sums(a: &Image, b: &Image) -> Result<Vec<(Complex64, f64, f64, usize)>> {
    if a.size() != b.size() {
        return Err(Error::Shape(format!("image sizes {} and {}", a.size(), b.size())));
    }
    let l = a.size();
    let mut planner = FftPlanner::new();
    let fa = fft2(a, &mut planner);
    let fb = fft2(b, &mut planner);
    let rings = l / 2;
    let mut out = vec![(Complex64::new(0.0, 0.0), 0.0, 0.0, 0usize); rings];
    for i in 0..l {
        let ki = signed_frequency(i, l);
        for j in 0..l {
            let kj = signed_frequency(j, l);
            let r = (ki * ki + kj * kj).sqrt().floor() as usize;
            if r >= rings {
                continue;
            }
            let (x, y) = (fa[i * l + j], fb[i * l + j]);
            let e = &mut out[r];
            e.0 += x * y.conj();
            e.1 += x.norm_sqr();
            e.2 += y.norm_sqr();
            e.3 += 1;
        }
    }
    Ok(out)
}

/// Fourier ring correlation; rings with zero energy in either image read 0.
pub fn frc(a: &Image, b: &Image) -> Result<FrcCurve> {
    let rings = ring_sums(a, b)?
        .into_iter()
        .enumerate()
        .map(|(radius, (cross, ea, eb, count))| {
            let denom = (ea * eb).sqrt();
            let value = if denom > 0.0 { cross.re / denom } else { 0.0 };
            FrcRing {
                radius,
                value,
                count,
            }
        })
        .collect();
    Ok(FrcCurve { rings })
}

/// Ring-wise average of the FRC over image pairs.
pub fn frc_mean(a: &[Image], b: &[Image]) -> Result<FrcCurve> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidParameter("need equally many, nonzero image pairs".into()));
    }
    use rayon::prelude::*;
    let curves: Vec<FrcCurve> = a
        .par_iter()
        .zip(b)
        .map(|(x, y)| frc(x, y))
        .collect::<Result<_>>()?;
    let mut out = curves[0].clone();
    for ring in &mut out.rings {
        ring.value = 0.0;
    }
    for c in &curves {
        for (o, r) in out.rings.iter_mut().zip(&c.rings) {
            o.value += r.value;
        }
    }
    for o in &mut out.rings {
        o.value /= curves.len() as f64;
    }
    Ok(out)
}
