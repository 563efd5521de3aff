//! Mean and block-diagonal covariance estimation in the disk-harmonic basis.
//!
//! With `G_i = H_i . F_i + E_i`, the least-squares covariance decouples into
//! one scalar equation per entry of each angular block, so every entry is a
//! ratio of two sums over images. Only blocks `n >= 0` are stored; the
//! `-n` block is the entrywise conjugate.

use std::borrow::Borrow;
use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::coeffs::{check_len, CoeffVec, RadialWeightVec};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Tolerated Hermitian asymmetry of an accumulated numerator.
pub const HERMITIAN_DRIFT_TOL: f64 = 1e-8;

/// One complex Hermitian matrix per angular frequency `n >= 0`, stored
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagHermitian {
    #[serde(with = "hex_hash")]
    basis_hash: [u8; 32],
    dims: Vec<usize>,
    blocks: Vec<Vec<Complex64>>,
}

impl BlockDiagHermitian {
    pub fn zeros(basis: &BasisSpec) -> Self {
        let dims: Vec<usize> = basis.blocks().iter().map(|b| b.dim()).collect();
        Self::zeros_with(basis.hash(), dims)
    }

    pub fn zeros_with(basis_hash: [u8; 32], dims: Vec<usize>) -> Self {
        let blocks = dims.iter().map(|&d| vec![ZERO; d * d]).collect();
        Self {
            basis_hash,
            dims,
            blocks,
        }
    }

    /// Builds from row-major blocks; each must be `dims[n]^2` long.
    pub fn from_blocks(basis_hash: [u8; 32], blocks: Vec<Vec<Complex64>>) -> Result<Self> {
        let mut dims = Vec::with_capacity(blocks.len());
        for b in &blocks {
            let d = (b.len() as f64).sqrt().round() as usize;
            if d * d != b.len() {
                return Err(Error::Shape(format!("block of length {} is not square", b.len())));
            }
            dims.push(d);
        }
        Ok(Self {
            basis_hash,
            dims,
            blocks,
        })
    }

    pub fn basis_hash(&self) -> [u8; 32] {
        self.basis_hash
    }

    /// Errors unless this matrix was built for `basis`.
    pub fn check_basis(&self, basis: &BasisSpec) -> Result<()> {
        if self.basis_hash != basis.hash() {
            return Err(Error::BasisMismatch {
                expected: basis.hash_hex(),
                found: hex::encode(self.basis_hash),
            });
        }
        Ok(())
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self, n: usize) -> usize {
        self.dims[n]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn block(&self, n: usize) -> &[Complex64] {
        &self.blocks[n]
    }

    pub fn block_mut(&mut self, n: usize) -> &mut [Complex64] {
        &mut self.blocks[n]
    }

    pub fn blocks(&self) -> &[Vec<Complex64>] {
        &self.blocks
    }

    /// Entry `(k, k2)` of block `n`, with 1-based radial indices.
    pub fn get(&self, n: usize, k: usize, k2: usize) -> Complex64 {
        self.blocks[n][(k - 1) * self.dims[n] + (k2 - 1)]
    }

    pub fn total_entries(&self) -> usize {
        self.dims.iter().map(|d| d * d).sum()
    }

    pub fn block_norm(&self, n: usize) -> f64 {
        self.blocks[n].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius norm counting each `n > 0` block twice (it also stands for
    /// its `-n` conjugate).
    pub fn frobenius_norm(&self) -> f64 {
        (0..self.num_blocks())
            .map(|n| {
                let w = if n == 0 { 1.0 } else { 2.0 };
                w * self.block_norm(n).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest `|B - B^H|` entry of block `n`.
    pub fn hermitian_drift(&self, n: usize) -> f64 {
        let d = self.dims[n];
        let b = &self.blocks[n];
        let mut drift: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                drift = drift.max((b[i * d + j] - b[j * d + i].conj()).norm());
            }
        }
        drift
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let mut out = self.clone();
        for (a, b) in out.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= y;
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.blocks {
            for x in b.iter_mut() {
                *x *= s;
            }
        }
        out
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape("block structures differ".into()));
        }
        Ok(())
    }

    /// Eigenvalues (ascending) and row-major eigenvectors of block `n`.
    pub fn block_eigen(&self, n: usize) -> Result<(Vec<f64>, Vec<Complex64>)> {
        linalg::hermitian_eigen(&self.blocks[n], self.dims[n])
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut m = f64::INFINITY;
        for n in 0..self.num_blocks() {
            if self.dims[n] > 0 {
                m = m.min(self.block_eigen(n)?.0[0]);
            }
        }
        Ok(m)
    }

    /// Projection onto positive semidefinite matrices, blockwise.
    pub fn clip_psd(&self) -> Result<Self> {
        let mut out = self.clone();
        for n in 0..self.num_blocks() {
            let d = self.dims[n];
            if d == 0 {
                continue;
            }
            let (mut vals, vecs) = self.block_eigen(n)?;
            if vals[0] >= 0.0 {
                continue;
            }
            for v in &mut vals {
                *v = v.max(0.0);
            }
            out.blocks[n] = linalg::recompose(&vals, &vecs, d);
        }
        Ok(out)
    }

    /// `C alpha`, acting on `+n` indices through block `n` and on `-n`
    /// indices through its conjugate.
    pub fn apply(&self, basis: &BasisSpec, alpha: &CoeffVec) -> Result<CoeffVec> {
        self.check_basis(basis)?;
        check_len(basis.len(), alpha.len())?;
        let mut out = CoeffVec::zeros(alpha.len());
        for (n, block) in basis.blocks().iter().enumerate() {
            let d = block.dim();
            let c = &self.blocks[n];
            for a in 0..d {
                let mut pos = ZERO;
                let mut neg = ZERO;
                for b in 0..d {
                    pos += c[a * d + b] * alpha[block.positive[b]];
                    if n > 0 {
                        neg += c[a * d + b].conj() * alpha[block.negative[b]];
                    }
                }
                out[block.positive[a]] = pos;
                if n > 0 {
                    out[block.negative[a]] = neg;
                }
            }
        }
        Ok(out)
    }
}

pub(crate) mod hex_hash {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(hash: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(hash))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("basis hash must be 32 bytes"))
    }
}

/// `mu = (sum H_i . G_i) ./ (sum H_i^2)`, entrywise.
pub fn estimate_mean<B>(basis: &BasisSpec, g: &[CoeffVec], h: &[B]) -> Result<CoeffVec>
where
    B: Borrow<RadialWeightVec>,
{
    check_inputs(basis, g, h)?;
    let len = basis.len();
    let mut num = vec![ZERO; len];
    let mut den = vec![0.0; len];
    for (gi, hi) in g.iter().zip(h) {
        let hi = hi.borrow();
        for j in 0..len {
            num[j] += gi[j] * hi[j];
            den[j] += hi[j] * hi[j];
        }
    }
    let mut mean = CoeffVec::zeros(len);
    for j in 0..len {
        if den[j] == 0.0 {
            let idx = basis.indices()[j];
            return Err(Error::DeadFrequency { n: idx.n, k: idx.k });
        }
        mean[j] = num[j] / den[j];
    }
    Ok(mean)
}

fn check_inputs<B: Borrow<RadialWeightVec>>(
    basis: &BasisSpec,
    g: &[CoeffVec],
    h: &[B],
) -> Result<()> {
    if g.is_empty() {
        return Err(Error::InvalidParameter("no images".into()));
    }
    check_len(g.len(), h.len())?;
    for (gi, hi) in g.iter().zip(h) {
        check_len(basis.len(), gi.len())?;
        check_len(basis.len(), hi.borrow().len())?;
    }
    Ok(())
}

/// Sufficient statistics of the least-squares covariance problem.
///
/// For block `n` and radial indices `k, k2`:
/// `num = sum_i H_i(k) r_i(k) conj(r_i(k2)) H_i(k2)` with `r_i = G_i - H_i . mu`,
/// `den = sum_i H_i(k)^2 H_i(k2)^2`, and `energy(k) = sum_i H_i(k)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulation {
    num: BlockDiagHermitian,
    den: Vec<Vec<f64>>,
    energy: Vec<Vec<f64>>,
    count: usize,
}

/// Images per parallel shard is at least this; shard boundaries depend only
/// on the image count, so sums are reproducible for any thread count.
const MIN_SHARD: usize = 32;
const MAX_SHARDS: usize = 64;

impl Accumulation {
    pub fn empty(basis: &BasisSpec) -> Self {
        let num = BlockDiagHermitian::zeros(basis);
        let den = num.dims.iter().map(|&d| vec![0.0; d * d]).collect();
        let energy = num.dims.iter().map(|&d| vec![0.0; d]).collect();
        Self {
            num,
            den,
            energy,
            count: 0,
        }
    }

    pub fn num(&self) -> &BlockDiagHermitian {
        &self.num
    }

    /// Row-major denominator of block `n`.
    pub fn den(&self, n: usize) -> &[f64] {
        &self.den[n]
    }

    /// `sum_i H_i(n, k)^2` for `k = 1..=dim`.
    pub fn energy(&self, n: usize) -> &[f64] {
        &self.energy[n]
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds another partial accumulation.
    pub fn merge(&mut self, other: &Accumulation) -> Result<()> {
        self.num.check_shape(&other.num)?;
        if self.num.basis_hash != other.num.basis_hash {
            return Err(Error::BasisMismatch {
                expected: hex::encode(self.num.basis_hash),
                found: hex::encode(other.num.basis_hash),
            });
        }
        for (a, b) in self.num.blocks.iter_mut().zip(&other.num.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.den.iter_mut().zip(&other.den) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.energy.iter_mut().zip(&other.energy) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.count += other.count;
        Ok(())
    }

    /// Adds one image; only upper triangles are touched until `mirror`.
    fn push(&mut self, basis: &BasisSpec, g: &CoeffVec, h: &RadialWeightVec, mean: &CoeffVec) {
        let mut w = Vec::new();
        let mut q = Vec::new();
        for (n, block) in basis.blocks().iter().enumerate() {
            let d = block.dim();
            w.clear();
            q.clear();
            for &j in &block.positive {
                let hj = h[j];
                w.push((g[j] - mean[j] * hj) * hj);
                q.push(hj * hj);
            }
            let num = &mut self.num.blocks[n];
            let den = &mut self.den[n];
            for a in 0..d {
                let wa = w[a];
                let qa = q[a];
                let nrow = &mut num[a * d..(a + 1) * d];
                let drow = &mut den[a * d..(a + 1) * d];
                for b in a..d {
                    nrow[b] += wa * w[b].conj();
                    drow[b] += qa * q[b];
                }
            }
            for (e, qa) in self.energy[n].iter_mut().zip(&q) {
                *e += qa;
            }
        }
        self.count += 1;
    }

    /// Fills lower triangles from upper triangles.
    fn mirror(&mut self) {
        for (n, &d) in self.num.dims.iter().enumerate() {
            let num = &mut self.num.blocks[n];
            let den = &mut self.den[n];
            for a in 0..d {
                num[a * d + a].im = 0.0;
                for b in 0..a {
                    num[a * d + b] = num[b * d + a].conj();
                    den[a * d + b] = den[b * d + a];
                }
            }
        }
    }
}

/// Accumulates numerator, denominator and weight energy over all images,
/// in parallel over fixed shards merged in order.
pub fn accumulate<B>(
    basis: &BasisSpec,
    g: &[CoeffVec],
    h: &[B],
    mean: &CoeffVec,
) -> Result<Accumulation>
where
    B: Borrow<RadialWeightVec> + Sync,
{
    check_inputs(basis, g, h)?;
    check_len(basis.len(), mean.len())?;
    let shard = MIN_SHARD.max(g.len().div_ceil(MAX_SHARDS));
    let parts: Vec<Accumulation> = g
        .par_chunks(shard)
        .zip(h.par_chunks(shard))
        .map(|(gs, hs)| {
            let mut acc = Accumulation::empty(basis);
            for (gi, hi) in gs.iter().zip(hs) {
                acc.push(basis, gi, hi.borrow(), mean);
            }
            acc
        })
        .collect();
    let mut total = Accumulation::empty(basis);
    for part in &parts {
        total.merge(part)?;
    }
    total.mirror();
    Ok(total)
}

/// Closed-form covariance with its per-block diagnostics.
#[derive(Debug, Clone)]
pub struct CovarianceSolution {
    pub covariance: BlockDiagHermitian,
    /// Ratio of largest to smallest denominator entry per block.
    pub condition_numbers: Vec<f64>,
    pub shrink: bool,
}

/// `C = (num - sigma2 diag(energy)) ./ den` per block, or the shrinkage
/// variant (see [`shrink_block`]) followed by a projection onto PSD
/// matrices.
pub fn solve_covariance(acc: &Accumulation, sigma2: f64, shrink: bool) -> Result<CovarianceSolution> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidParameter(format!("noise variance {sigma2}")));
    }
    let dims = acc.num.dims.clone();
    let count = acc.count as f64;
    let solved: Vec<Result<(Vec<Complex64>, f64)>> = (0..dims.len())
        .into_par_iter()
        .map(|n| {
            let d = dims[n];
            let drift = acc.num.hermitian_drift(n);
            let scale = acc.num.block_norm(n).max(1.0);
            if drift > HERMITIAN_DRIFT_TOL * scale {
                return Err(Error::NonHermitian { n, drift });
            }
            let den = &acc.den[n];
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for a in 0..d {
                for b in 0..d {
                    let v = den[a * d + b];
                    if v == 0.0 {
                        return Err(Error::ZeroDenominator { n, k: a + 1, k2: b + 1 });
                    }
                    lo = lo.min(v.abs());
                    hi = hi.max(v.abs());
                }
            }
            let cond = if d == 0 { 1.0 } else { hi / lo };
            let energy = &acc.energy[n];
            let mut block = if shrink && sigma2 > 0.0 {
                shrink_block(&acc.num.blocks[n], energy, d, count, sigma2)?
            } else {
                let mut b = acc.num.blocks[n].clone();
                for a in 0..d {
                    b[a * d + a] -= sigma2 * energy[a];
                }
                b
            };
            for (x, &v) in block.iter_mut().zip(den) {
                *x /= v;
            }
            if shrink {
                block = clip_block(block, d)?;
            }
            Ok((block, cond))
        })
        .collect();
    let mut blocks = Vec::with_capacity(dims.len());
    let mut condition_numbers = Vec::with_capacity(dims.len());
    for r in solved {
        let (b, c) = r?;
        blocks.push(b);
        condition_numbers.push(c);
    }
    Ok(CovarianceSolution {
        covariance: BlockDiagHermitian {
            basis_hash: acc.num.basis_hash,
            dims,
            blocks,
        },
        condition_numbers,
        shrink,
    })
}

fn clip_block(block: Vec<Complex64>, d: usize) -> Result<Vec<Complex64>> {
    if d == 0 {
        return Ok(block);
    }
    let (mut vals, vecs) = linalg::hermitian_eigen(&block, d)?;
    if vals[0] >= 0.0 {
        // keep exact Hermitian structure of the input
        return Ok(block);
    }
    for v in &mut vals {
        *v = v.max(0.0);
    }
    Ok(linalg::recompose(&vals, &vecs, d))
}

/// Operator-norm optimal shrinker of the spiked covariance model, in units
/// of the noise level: returns the signal eigenvalue `ell - 1` for a sample
/// eigenvalue `x` above the bulk edge `(1 + sqrt(gamma))^2`, else 0.
pub fn spiked_shrinker(x: f64, gamma: f64) -> f64 {
    let edge = (1.0 + gamma.sqrt()).powi(2);
    if x <= edge {
        return 0.0;
    }
    let b = x + 1.0 - gamma;
    let ell = 0.5 * (b + (b * b - 4.0 * x).max(0.0).sqrt());
    (ell - 1.0).max(0.0)
}

/// Shrinks the noise-whitened numerator of one block.
///
/// `S = D^{-1/2} (num / N) D^{-1/2}` with `D = diag(energy / N)` has noise
/// covariance `sigma2 * I`; its eigenvalues are shrunk with
/// [`spiked_shrinker`] at aspect ratio `dim / N`, and the result is mapped
/// back by `D^{1/2} . D^{1/2}` and multiplied by `N` so the caller can
/// divide by `den` like the unshrunk numerator.
pub fn shrink_block(
    num: &[Complex64],
    energy: &[f64],
    dim: usize,
    count: f64,
    sigma2: f64,
) -> Result<Vec<Complex64>> {
    if dim == 0 {
        return Ok(Vec::new());
    }
    let scale: Vec<f64> = energy.iter().map(|&e| (e / count).sqrt()).collect();
    let mut s = vec![ZERO; dim * dim];
    for a in 0..dim {
        for b in 0..dim {
            s[a * dim + b] = num[a * dim + b] / (count * scale[a] * scale[b]);
        }
    }
    let (vals, vecs) = linalg::hermitian_eigen(&s, dim)?;
    let gamma = dim as f64 / count;
    let shrunk: Vec<f64> = vals
        .iter()
        .map(|&v| sigma2 * spiked_shrinker(v / sigma2, gamma))
        .collect();
    if shrunk.iter().all(|&v| v == 0.0) {
        return Ok(vec![ZERO; dim * dim]);
    }
    let mut out = linalg::recompose(&shrunk, &vecs, dim);
    for a in 0..dim {
        for b in 0..dim {
            out[a * dim + b] *= count * scale[a] * scale[b];
        }
    }
    Ok(out)
}

/// Principal component of a covariance block, embedded as a real image.
#[derive(Debug, Clone)]
pub struct Eigenimage {
    pub eigenvalue: f64,
    pub n: usize,
    /// Position of the eigenvector inside its block, by ascending eigenvalue.
    pub index: usize,
    /// Unit-norm, conjugate-symmetric coefficient vector.
    pub coeffs: CoeffVec,
    pub image: Image,
}

/// Top `top` eigenimages over all blocks, eigenvalues clipped at zero and
/// sorted by (eigenvalue desc, n asc, in-block index asc).
pub fn eigenimages(cov: &BlockDiagHermitian, basis: &BasisSpec, top: usize) -> Result<Vec<Eigenimage>> {
    cov.check_basis(basis)?;
    let mut candidates = Vec::new();
    let mut vectors = Vec::new();
    for (n, block) in basis.blocks().iter().enumerate() {
        let d = block.dim();
        if d == 0 {
            continue;
        }
        let (vals, vecs) = cov.block_eigen(n)?;
        // descending order inside the block
        for (rank, c) in (0..d).rev().enumerate() {
            candidates.push((vals[c].max(0.0), n, rank, vectors.len()));
            vectors.push((0..d).map(|r| vecs[r * d + c]).collect::<Vec<_>>());
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    candidates
        .into_iter()
        .take(top)
        .map(|(value, n, rank, vi)| {
            let v = normalize_phase(&vectors[vi]);
            let block = &basis.blocks()[n];
            let mut coeffs = CoeffVec::zeros(basis.len());
            let s = if n == 0 { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
            for (k, &c) in v.iter().enumerate() {
                coeffs[block.positive[k]] = c * s;
                if n > 0 {
                    coeffs[block.negative[k]] = c.conj() * s;
                }
            }
            let image = basis.synthesize(&coeffs)?;
            Ok(Eigenimage {
                eigenvalue: value,
                n,
                index: rank,
                coeffs,
                image,
            })
        })
        .collect()
}

/// Rotates a vector so its largest component is real and positive.
fn normalize_phase(v: &[Complex64]) -> Vec<Complex64> {
    let mut best = 0;
    for (i, c) in v.iter().enumerate() {
        if c.norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let p = v[best];
    if p.norm() == 0.0 {
        return v.to_vec();
    }
    let phase = p.conj() / p.norm();
    v.iter().map(|c| c * phase).collect()
}

/// Everything produced by one estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub version: u32,
    pub grid_size: usize,
    pub band_ratio: f64,
    pub pixel_size: f64,
    pub basis_hash: String,
    pub num_images: usize,
    pub num_groups: usize,
    pub mean: CoeffVec,
    pub covariance: BlockDiagHermitian,
    pub sigma2: f64,
    pub condition_numbers: Vec<f64>,
    /// Frequency-coverage margin.
    pub delta: f64,
    pub shrink: bool,
    /// Stage name to seconds.
    pub timings: BTreeMap<String, f64>,
}

pub const REPORT_VERSION: u32 = 1;
