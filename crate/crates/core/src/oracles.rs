//! Slow, independent reference implementations for tests and acceptance
//! runs. Nothing here calls the estimation, denoising or convolution code it
//! is used to check; only the basis, container types and images are shared.
//! Everything runs on the calling thread.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::basis::BasisSpec;
use crate::coeffs::{CoeffVec, RadialWeightVec};
use crate::covariance::BlockDiagHermitian;
use crate::error::{Error, Result};
use crate::image::Image;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A least-squares covariance problem with group-shared weights.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub coeffs: Vec<CoeffVec>,
    pub group_of: Vec<usize>,
    pub group_weights: Vec<RadialWeightVec>,
    pub sigma2: f64,
}

impl OracleInstance {
    fn weight(&self, i: usize) -> &RadialWeightVec {
        &self.group_weights[self.group_of[i]]
    }

    /// Per-index least-squares mean, by direct loops.
    pub fn mean(&self, basis: &BasisSpec) -> Result<CoeffVec> {
        let mut out = CoeffVec::zeros(basis.len());
        for j in 0..basis.len() {
            let mut num = ZERO;
            let mut den = 0.0;
            for (i, g) in self.coeffs.iter().enumerate() {
                let h = self.weight(i)[j];
                num += g[j] * h;
                den += h * h;
            }
            if den == 0.0 {
                let idx = basis.indices()[j];
                return Err(Error::DeadFrequency { n: idx.n, k: idx.k });
            }
            out[j] = num / den;
        }
        Ok(out)
    }
}

/// Solves each scalar normal equation
/// `sum_i h_ik^2 h_ik'^2 c = sum_i h_ik h_ik' r_ik conj(r_ik') - sigma2 [k = k'] sum_i h_ik^2`
/// by division, one entry at a time.
pub fn lstsq_entrywise(basis: &BasisSpec, inst: &OracleInstance) -> Result<BlockDiagHermitian> {
    let mean = inst.mean(basis)?;
    let mut blocks = Vec::new();
    for (n, block) in basis.blocks().iter().enumerate() {
        let d = block.dim();
        let mut c = vec![ZERO; d * d];
        for a in 0..d {
            for b in 0..d {
                let (ja, jb) = (block.positive[a], block.positive[b]);
                let mut num = ZERO;
                let mut den = 0.0;
                let mut energy = 0.0;
                for (i, g) in inst.coeffs.iter().enumerate() {
                    let h = inst.weight(i);
                    let ra = g[ja] - h[ja] * mean[ja];
                    let rb = g[jb] - h[jb] * mean[jb];
                    num += h[ja] * h[jb] * ra * rb.conj();
                    den += h[ja] * h[ja] * h[jb] * h[jb];
                    energy += h[ja] * h[ja];
                }
                if den == 0.0 {
                    return Err(Error::ZeroDenominator { n, k: a + 1, k2: b + 1 });
                }
                if a == b {
                    num -= inst.sigma2 * energy;
                }
                c[a * d + b] = num / den;
            }
        }
        blocks.push(c);
    }
    BlockDiagHermitian::from_blocks(basis.hash(), blocks)
}

/// Full `|I| x |I|` normal-equation sums, row-major, for a given mean.
pub fn dense_num_den(
    basis: &BasisSpec,
    inst: &OracleInstance,
    mean: &CoeffVec,
) -> (Vec<Complex64>, Vec<f64>) {
    let len = basis.len();
    let mut num = vec![ZERO; len * len];
    let mut den = vec![0.0; len * len];
    for (i, g) in inst.coeffs.iter().enumerate() {
        let h = inst.weight(i);
        for a in 0..len {
            let ra = g[a] - h[a] * mean[a];
            for b in 0..len {
                let rb = g[b] - h[b] * mean[b];
                num[a * len + b] += h[a] * h[b] * ra * rb.conj();
                den[a * len + b] += h[a] * h[a] * h[b] * h[b];
            }
        }
    }
    (num, den)
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub max_iterations: usize,
    /// Stop once `||r|| <= tolerance * ||b||`; 0 runs all iterations.
    pub tolerance: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub covariance: BlockDiagHermitian,
    /// Relative residual before each iteration and after the last.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Unpreconditioned conjugate gradient on the normal equations of the
/// covariance least-squares problem, with the block-diagonal Hermitian
/// matrix as unknown. The operator is applied one defocus group at a time,
/// `A(C) = sum_g n_g (h_g h_g^T)^2 . C`, so each iteration costs O(M) block
/// passes. An emulation of iterative solvers, not a reproduction of one.
pub fn lstsq_cg(basis: &BasisSpec, inst: &OracleInstance, options: CgOptions) -> Result<CgResult> {
    let mean = inst.mean(basis)?;
    let blocks = basis.blocks();
    let dims: Vec<usize> = blocks.iter().map(|b| b.dim()).collect();
    let size: usize = dims.iter().map(|d| d * d).sum();
    let mut counts = vec![0usize; inst.group_weights.len()];
    for &g in &inst.group_of {
        counts[g] += 1;
    }
    // per group, h at the +n positions of every block, flattened
    let group_h: Vec<Vec<f64>> = inst
        .group_weights
        .iter()
        .map(|w| {
            blocks
                .iter()
                .flat_map(|b| b.positive.iter().map(|&j| w[j]))
                .collect()
        })
        .collect();

    // right-hand side
    let mut rhs = vec![ZERO; size];
    for (i, g) in inst.coeffs.iter().enumerate() {
        let h = inst.weight(i);
        let mut off = 0;
        for (b, block) in blocks.iter().enumerate() {
            let d = dims[b];
            for x in 0..d {
                let jx = block.positive[x];
                let rx = (g[jx] - h[jx] * mean[jx]) * h[jx];
                for y in 0..d {
                    let jy = block.positive[y];
                    let ry = (g[jy] - h[jy] * mean[jy]) * h[jy];
                    rhs[off + x * d + y] += rx * ry.conj();
                }
                rhs[off + x * d + x] -= inst.sigma2 * h[jx] * h[jx];
            }
            off += d * d;
        }
    }

    let apply = |c: &[Complex64], out: &mut [Complex64]| {
        out.iter_mut().for_each(|v| *v = ZERO);
        for (hg, &count) in group_h.iter().zip(&counts) {
            if count == 0 {
                continue;
            }
            let m = count as f64;
            let mut off = 0;
            let mut hoff = 0;
            for &d in &dims {
                for x in 0..d {
                    let hx = hg[hoff + x] * hg[hoff + x];
                    for y in 0..d {
                        let hy = hg[hoff + y] * hg[hoff + y];
                        out[off + x * d + y] += c[off + x * d + y] * (m * hx * hy);
                    }
                }
                off += d * d;
                hoff += d;
            }
        }
    };
    let dot = |a: &[Complex64], b: &[Complex64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
    };

    let mut x = vec![ZERO; size];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut ap = vec![ZERO; size];
    let bnorm = dot(&rhs, &rhs).sqrt();
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut rr = dot(&r, &r);
    let mut residuals = vec![rr.sqrt() / scale];
    let mut iterations = 0;
    while iterations < options.max_iterations {
        if rr == 0.0 || rr.sqrt() <= options.tolerance * scale {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += pi * alpha;
            *ri -= api * alpha;
        }
        let rr_next = dot(&r, &r);
        iterations += 1;
        residuals.push(rr_next.sqrt() / scale);
        let t = residuals.len() - 1;
        if t >= 20 && residuals[t] > 10.0 * residuals[t - 20] {
            return Err(Error::Diverged {
                iteration: iterations,
                residual: residuals[t],
            });
        }
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + *pi * beta;
        }
        rr = rr_next;
    }
    let mut out = Vec::with_capacity(dims.len());
    let mut off = 0;
    for &d in &dims {
        out.push(x[off..off + d * d].to_vec());
        off += d * d;
    }
    Ok(CgResult {
        covariance: BlockDiagHermitian::from_blocks(basis.hash(), out)?,
        residuals,
        iterations,
    })
}

/// Convolution with a radial kernel given by its transfer function
/// `transfer(omega)`, `omega` an angular frequency in unit-disk coordinates
/// (the units of the basis roots). The image is zero padded to `2L`,
/// filtered with the FFT and cropped.
pub fn spatial_convolve(img: &Image, transfer: impl Fn(f64) -> f64) -> Image {
    let l = img.size();
    let p = 2 * l;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(p);
    let inv = planner.plan_fft_inverse(p);
    let mut buf = vec![ZERO; p * p];
    for i in 0..l {
        for j in 0..l {
            buf[i * p + j] = Complex64::new(img.get(i, j), 0.0);
        }
    }
    let pass = |buf: &mut Vec<Complex64>, fft: &dyn rustfft::Fft<f64>| {
        for row in buf.chunks_mut(p) {
            fft.process(row);
        }
        let mut col = vec![ZERO; p];
        for j in 0..p {
            for i in 0..p {
                col[i] = buf[i * p + j];
            }
            fft.process(&mut col);
            for i in 0..p {
                buf[i * p + j] = col[i];
            }
        }
    };
    pass(&mut buf, fwd.as_ref());
    // sample spacing 2/L in unit coordinates
    let step = 2.0 * PI / (p as f64 * 2.0 / l as f64);
    let freq = |i: usize| -> f64 {
        let k = if i < p / 2 { i as f64 } else { i as f64 - p as f64 };
        k * step
    };
    for i in 0..p {
        for j in 0..p {
            let w = (freq(i).powi(2) + freq(j).powi(2)).sqrt();
            buf[i * p + j] *= transfer(w);
        }
    }
    pass(&mut buf, inv.as_ref());
    let norm = 1.0 / (p * p) as f64;
    let mut out = Image::zeros(l, img.pixel_size());
    for i in 0..l {
        for j in 0..l {
            out.set(i, j, buf[i * p + j].re * norm);
        }
    }
    out
}

/// Unrestricted sample covariance `(1/N) sum (x - m)(x - m)^H`, row-major
/// `|I| x |I|`, about the sample mean.
pub fn dense_sample_covariance(coeffs: &[CoeffVec]) -> Vec<Complex64> {
    let len = coeffs[0].len();
    let count = coeffs.len() as f64;
    let mut mean = vec![ZERO; len];
    for x in coeffs {
        for (m, v) in mean.iter_mut().zip(x.values()) {
            *m += v / count;
        }
    }
    let mut out = vec![ZERO; len * len];
    let mut r = vec![ZERO; len];
    for x in coeffs {
        for a in 0..len {
            r[a] = x[a] - mean[a];
        }
        for a in 0..len {
            let ra = r[a] / count;
            let row = &mut out[a * len..(a + 1) * len];
            for (o, rb) in row.iter_mut().zip(&r) {
                *o += ra * rb.conj();
            }
        }
    }
    out
}

/// `||entries with n != n'||_F / ||all entries||_F` of a dense covariance.
pub fn offblock_mass(basis: &BasisSpec, dense: &[Complex64]) -> f64 {
    let len = basis.len();
    let idx = basis.indices();
    let mut off = 0.0;
    let mut total = 0.0;
    for a in 0..len {
        for b in 0..len {
            let v = dense[a * len + b].norm_sqr();
            total += v;
            if idx[a].n != idx[b].n {
                off += v;
            }
        }
    }
    (off / total).sqrt()
}

/// Blockwise sample covariance about the sample mean, normalised by `N`.
pub fn block_sample_covariance(basis: &BasisSpec, coeffs: &[CoeffVec]) -> BlockDiagHermitian {
    let count = coeffs.len() as f64;
    let mut blocks = Vec::new();
    for block in basis.blocks() {
        let d = block.dim();
        let mut mean = vec![ZERO; d];
        for x in coeffs {
            for (m, &j) in mean.iter_mut().zip(&block.positive) {
                *m += x[j] / count;
            }
        }
        let mut c = vec![ZERO; d * d];
        let mut r = vec![ZERO; d];
        for x in coeffs {
            for a in 0..d {
                r[a] = x[block.positive[a]] - mean[a];
            }
            for a in 0..d {
                for b in 0..d {
                    c[a * d + b] += r[a] * r[b].conj() / count;
                }
            }
        }
        blocks.push(c);
    }
    BlockDiagHermitian::from_blocks(basis.hash(), blocks).expect("square blocks")
}
