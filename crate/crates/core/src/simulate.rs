//! Synthetic data: a Gaussian-blob phantom, its tomographic projections,
//! CTF filtering and colored noise in the coefficient domain, and whitening.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::coeffs::{check_len, CoeffVec, RadialWeightVec};
use crate::ctf::{CtfParams, Filter};
use crate::error::{Error, Result};
use crate::image::{pixel_coordinate, Image};
use crate::rng::{domain, Stream};

pub type Rotation = [[f64; 3]; 3];

pub const IDENTITY: Rotation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Pixel size (Angstrom) giving a fixed 426 Angstrom field of view.
pub fn default_pixel_size(grid_size: usize) -> f64 {
    0.832 * 512.0 / grid_size as f64
}

/// Cubic voxel grid; `data[(i * L + j) * L + k]` sits at
/// `(x_i, y_j, z_k)` in unit-cube coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    size: usize,
    voxel_size: f64,
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(size: usize, voxel_size: f64) -> Self {
        Self {
            size,
            voxel_size,
            data: vec![0.0; size * size * size],
        }
    }

    pub fn from_fn(size: usize, voxel_size: f64, f: impl Fn([f64; 3]) -> f64 + Sync) -> Self {
        let data = (0..size * size * size)
            .into_par_iter()
            .map(|t| {
                let (i, j, k) = (t / (size * size), (t / size) % size, t % size);
                f([
                    pixel_coordinate(i, size),
                    pixel_coordinate(j, size),
                    pixel_coordinate(k, size),
                ])
            })
            .collect();
        Self {
            size,
            voxel_size,
            data,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.size + j) * self.size + k]
    }

    /// Trilinear interpolation at unit-cube coordinates; zero off the grid.
    pub fn sample(&self, p: [f64; 3]) -> f64 {
        let l = self.size as isize;
        let half = self.size as f64 / 2.0;
        let u = p.map(|c| c * half + half - 0.5);
        let base = u.map(|c| c.floor() as isize);
        let frac = [
            u[0] - base[0] as f64,
            u[1] - base[1] as f64,
            u[2] - base[2] as f64,
        ];
        if base.iter().any(|&b| b < -1 || b >= l) {
            return 0.0;
        }
        let mut acc = 0.0;
        for di in 0..2 {
            let i = base[0] + di;
            if i < 0 || i >= l {
                continue;
            }
            let wi = if di == 0 { 1.0 - frac[0] } else { frac[0] };
            for dj in 0..2 {
                let j = base[1] + dj;
                if j < 0 || j >= l {
                    continue;
                }
                let wj = if dj == 0 { 1.0 - frac[1] } else { frac[1] };
                for dk in 0..2 {
                    let k = base[2] + dk;
                    if k < 0 || k >= l {
                        continue;
                    }
                    let wk = if dk == 0 { 1.0 - frac[2] } else { frac[2] };
                    acc += wi * wj * wk * self.data[((i * l + j) * l + k) as usize];
                }
            }
        }
        acc
    }
}

/// Anisotropic Gaussian in unit-cube coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 3],
    pub amplitude: f64,
    pub sigmas: [f64; 3],
    /// Columns are the blob's principal axes.
    pub frame: Rotation,
}

impl Blob {
    pub fn value(&self, p: [f64; 3]) -> f64 {
        let d = [
            p[0] - self.center[0],
            p[1] - self.center[1],
            p[2] - self.center[2],
        ];
        let mut q = 0.0;
        for a in 0..3 {
            let t = (0..3).map(|r| self.frame[r][a] * d[r]).sum::<f64>() / self.sigmas[a];
            q += t * t;
        }
        self.amplitude * (-0.5 * q).exp()
    }
}

pub const PHANTOM_BLOBS: usize = 12;

/// Blob parameters of the phantom for `seed`: centers uniform in the ball
/// of radius 0.8, amplitudes in [0.5, 1.5], widths in [0.04, 0.12] * L
/// pixels, random orientation.
pub fn phantom_blobs(seed: u64) -> Vec<Blob> {
    let mut s = Stream::new(seed, domain::PHANTOM, 0);
    (0..PHANTOM_BLOBS)
        .map(|_| {
            let center = loop {
                let c = [0; 3].map(|_| s.uniform_range(-0.8, 0.8));
                if c.iter().map(|v| v * v).sum::<f64>() <= 0.64 {
                    break c;
                }
            };
            let amplitude = s.uniform_range(0.5, 1.5);
            // fraction of L in pixels, times 2/L for unit coordinates
            let sigmas = [0; 3].map(|_| 2.0 * s.uniform_range(0.04, 0.12));
            let frame = s.rotation();
            Blob {
                center,
                amplitude,
                sigmas,
                frame,
            }
        })
        .collect()
}

pub fn blob_sum(blobs: &[Blob], p: [f64; 3]) -> f64 {
    blobs.iter().map(|b| b.value(p)).sum()
}

/// Voxelized phantom with voxel size [`default_pixel_size`].
pub fn make_phantom(size: usize, seed: u64) -> Result<Volume> {
    if size < 8 {
        return Err(Error::InvalidParameter(format!("phantom size {size} < 8")));
    }
    Ok(phantom_from_blobs(size, &phantom_blobs(seed)))
}

pub fn phantom_from_blobs(size: usize, blobs: &[Blob]) -> Volume {
    Volume::from_fn(size, default_pixel_size(size), |p| blob_sum(blobs, p))
}

fn determinant(r: &Rotation) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// Line integrals along `z` of the volume rotated by `r`:
/// `img(x, y) = sum_k v(R^T (x, y, z_k)) * voxel_size`.
pub fn project(v: &Volume, r: &Rotation) -> Result<Image> {
    if (determinant(r) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("rotation must have determinant 1".into()));
    }
    let l = v.size;
    let coords: Vec<f64> = (0..l).map(|i| pixel_coordinate(i, l)).collect();
    let mut img = Image::zeros(l, v.voxel_size);
    let out = img.data_mut();
    for i in 0..l {
        for j in 0..l {
            let (x, y) = (coords[i], coords[j]);
            let mut acc = 0.0;
            for &z in &coords {
                let p = [x, y, z];
                let q = [0, 1, 2].map(|a| r[0][a] * p[0] + r[1][a] * p[1] + r[2][a] * p[2]);
                acc += v.sample(q);
            }
            out[i * l + j] = acc * v.voxel_size;
        }
    }
    Ok(img)
}

/// Rotation by `angle` about the projection axis.
pub fn rotation_z(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// No noise (infinite SNR).
    None,
    White,
    /// Radial PSD `1 / (r L / 20 + 1)` with `r = lambda / lambda_max`.
    Colored,
}

/// Additive noise in the coefficient domain: index `(n, k)` has variance
/// `variance * psd(lambda_nk)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub variance: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            variance: 0.0,
        }
    }

    pub fn white(variance: f64) -> Self {
        Self {
            kind: NoiseKind::White,
            variance,
        }
    }

    /// Relative PSD at every basis index (variance excluded).
    pub fn psd(&self, basis: &BasisSpec) -> RadialWeightVec {
        let l = basis.grid_size() as f64;
        let lmax = basis.lambda_max();
        match self.kind {
            NoiseKind::Colored => basis.radial_weights(|lam| 1.0 / (lam / lmax * l / 20.0 + 1.0)),
            _ => RadialWeightVec::ones(basis.len()),
        }
    }

    /// Draws one noise coefficient vector (conjugate symmetric).
    pub fn draw(&self, basis: &BasisSpec, stream: &mut Stream) -> CoeffVec {
        let mut out = CoeffVec::zeros(basis.len());
        if self.kind == NoiseKind::None || self.variance == 0.0 {
            return out;
        }
        let psd = self.psd(basis);
        for (j, idx) in basis.indices().iter().enumerate() {
            let var = self.variance * psd[j];
            if idx.n == 0 {
                out[j] = Complex64::new(var.sqrt() * stream.normal(), 0.0);
            } else if idx.n > 0 {
                let sd = (0.5 * var).sqrt();
                let z = Complex64::new(sd * stream.normal(), sd * stream.normal());
                out[j] = z;
                out[basis.partner(j)] = z.conj();
            }
        }
        out
    }

    /// Expected disk energy of one synthesized noise image.
    pub fn expected_energy(&self, basis: &BasisSpec) -> f64 {
        if self.kind == NoiseKind::None {
            return 0.0;
        }
        self.variance * unit_noise_energy(basis, &self.psd(basis))
    }
}

/// Disk energy of a noise image with unit variance scale and relative PSD
/// `psd`; `n != 0` parameters carry half the variance.
fn unit_noise_energy(basis: &BasisSpec, psd: &RadialWeightVec) -> f64 {
    basis
        .column_energies()
        .iter()
        .zip(basis.indices())
        .zip(psd.values())
        .map(|((e, idx), p)| if idx.n == 0 { e * p } else { 0.5 * e * p })
        .sum()
}

/// Evenly spaced defocus values on [1, 4] micrometres.
pub fn defocus_values(num_groups: usize) -> Vec<f64> {
    if num_groups == 1 {
        return vec![1.0];
    }
    (0..num_groups)
        .map(|g| 1.0 + 3.0 * g as f64 / (num_groups - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub num_images: usize,
    pub num_groups: usize,
    /// `None` for noiseless data.
    pub snr: Option<f64>,
    pub noise: NoiseKind,
    pub seed: u64,
    /// Apply CTFs; `false` gives all-ones filters.
    pub apply_ctf: bool,
}

impl SimulationConfig {
    pub fn new(num_images: usize, num_groups: usize, snr: Option<f64>, seed: u64) -> Self {
        Self {
            num_images,
            num_groups,
            snr,
            noise: NoiseKind::Colored,
            seed,
            apply_ctf: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_groups == 0 || self.num_groups > self.num_images {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= groups ({}) <= images ({})",
                self.num_groups, self.num_images
            )));
        }
        if let Some(snr) = self.snr {
            if !(snr > 0.0) || !snr.is_finite() {
                return Err(Error::InvalidParameter(format!("snr must be positive, got {snr}")));
            }
        }
        Ok(())
    }
}

/// Noisy images with their acquisition metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub group_of: Vec<usize>,
    pub filters: Vec<Filter>,
    pub noise: NoiseModel,
    /// Ground truth before CTF, simulation only.
    pub clean: Option<Vec<Image>>,
    pub config: Option<SimulationConfig>,
    /// Disk energy ratio of CTF-filtered signal to realized noise.
    pub measured_snr: Option<f64>,
}

impl Dataset {
    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn num_groups(&self) -> usize {
        self.filters.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_len(self.images.len(), self.group_of.len())?;
        for &g in &self.group_of {
            if g >= self.filters.len() {
                return Err(Error::UnknownGroup(g));
            }
        }
        Ok(())
    }
}

/// Uniformly distributed rotation of image `i`.
pub fn image_rotation(seed: u64, i: usize) -> Rotation {
    Stream::new(seed, domain::ROTATION, i as u64).rotation()
}

/// Expanded projections of `v` under the rotations of images `0..count`.
pub fn clean_coefficients(basis: &BasisSpec, v: &Volume, count: usize, seed: u64) -> Result<Vec<CoeffVec>> {
    (0..count)
        .into_par_iter()
        .map(|i| basis.expand(&project(v, &image_rotation(seed, i))?))
        .collect()
}

/// Copies of each vector steered by independent uniform angles.
pub fn rotation_augment(basis: &BasisSpec, coeffs: &[CoeffVec], copies: usize, seed: u64) -> Result<Vec<CoeffVec>> {
    (0..coeffs.len() * copies)
        .into_par_iter()
        .map(|t| {
            let mut s = Stream::new(seed, domain::AUGMENT, t as u64);
            basis.steer(&coeffs[t / copies], 2.0 * PI * s.uniform())
        })
        .collect()
}

/// Simulates `config.num_images` noisy, CTF-filtered projections of `v`.
///
/// Image `i` belongs to group `i mod M`; group `g` has defocus
/// `defocus_values(M)[g]`. The CTF acts on the coefficients of the expanded
/// projection. The noise scale is set so that the total disk energy of the
/// filtered signal over all images is `snr` times the expected noise energy.
pub fn make_dataset(basis: &BasisSpec, v: &Volume, config: &SimulationConfig) -> Result<Dataset> {
    config.validate()?;
    if v.size() != basis.grid_size() {
        return Err(Error::Shape(format!(
            "volume size {} differs from grid size {}",
            v.size(),
            basis.grid_size()
        )));
    }
    let pixel_size = v.voxel_size();
    let filters: Vec<Filter> = if config.apply_ctf {
        defocus_values(config.num_groups)
            .into_iter()
            .map(|d| Filter::Ctf(CtfParams::new(d, pixel_size)))
            .collect()
    } else {
        vec![Filter::None; config.num_groups]
    };
    let weights: Vec<RadialWeightVec> = filters.iter().map(|f| f.weights(basis)).collect();
    let group_of: Vec<usize> = (0..config.num_images).map(|i| i % config.num_groups).collect();
    let clean = clean_coefficients(basis, v, config.num_images, config.seed)?;
    let filtered: Vec<CoeffVec> = clean
        .par_iter()
        .zip(&group_of)
        .map(|(x, &g)| x.weighted(&weights[g]))
        .collect::<Result<_>>()?;
    let filtered_images: Vec<Image> = filtered
        .par_iter()
        .map(|y| basis.synthesize(y))
        .collect::<Result<_>>()?;
    let signal: f64 = filtered_images.iter().map(|im| im.disk_energy()).sum();

    let noise = match (config.snr, config.noise) {
        (None, _) | (_, NoiseKind::None) => NoiseModel::none(),
        (Some(snr), kind) => {
            let unit = NoiseModel { kind, variance: 1.0 };
            let per_image = unit.expected_energy(basis) * config.num_images as f64;
            NoiseModel {
                kind,
                variance: signal / (snr * per_image),
            }
        }
    };
    let noisy: Vec<(Image, f64)> = filtered
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            let mut s = Stream::new(config.seed, domain::NOISE, i as u64);
            let e = noise.draw(basis, &mut s);
            let energy = basis.synthesize(&e)?.disk_energy();
            Ok((basis.synthesize(&y.add(&e))?, energy))
        })
        .collect::<Result<_>>()?;
    let noise_energy: f64 = noisy.iter().map(|p| p.1).sum();
    let measured_snr = (noise_energy > 0.0).then(|| signal / noise_energy);
    let clean_images: Vec<Image> = clean
        .par_iter()
        .map(|x| basis.synthesize(x))
        .collect::<Result<_>>()?;
    Ok(Dataset {
        images: noisy.into_iter().map(|p| p.0).collect(),
        group_of,
        filters,
        noise,
        clean: Some(clean_images),
        config: Some(*config),
        measured_snr,
    })
}

/// Coefficient-domain view of a dataset, ready for estimation.
#[derive(Debug, Clone)]
pub struct CoeffDataset {
    pub coeffs: Vec<CoeffVec>,
    pub group_of: Vec<usize>,
    pub group_weights: Vec<RadialWeightVec>,
    pub sigma2: f64,
    /// Per-index multiplier applied by whitening (all ones if none).
    pub whitening: RadialWeightVec,
}

impl CoeffDataset {
    /// Weight vector of every image, borrowed from its group.
    pub fn image_weights(&self) -> Vec<&RadialWeightVec> {
        self.group_of.iter().map(|&g| &self.group_weights[g]).collect()
    }

    /// `(weights, image count)` per group.
    pub fn group_counts(&self) -> Vec<(&RadialWeightVec, usize)> {
        let mut counts = vec![0usize; self.group_weights.len()];
        for &g in &self.group_of {
            counts[g] += 1;
        }
        self.group_weights.iter().zip(counts).collect()
    }
}

/// Multiplies coefficients and group weights by `1 / sqrt(variance * psd)`
/// so the noise becomes white with unit variance. Noiseless data and data
/// that is already white with unit variance are returned unchanged.
pub fn whiten(basis: &BasisSpec, data: &CoeffDataset, noise: &NoiseModel) -> Result<CoeffDataset> {
    if noise.kind == NoiseKind::None || noise.variance == 0.0 {
        return Ok(data.clone());
    }
    if !(noise.variance > 0.0) {
        return Err(Error::InvalidPsd);
    }
    let psd = noise.psd(basis);
    if psd.values().iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidPsd);
    }
    let mult = RadialWeightVec::from_vec(
        psd.values()
            .iter()
            .map(|&p| 1.0 / (noise.variance * p).sqrt())
            .collect(),
    );
    if mult.values().iter().all(|&m| m == 1.0) {
        let mut out = data.clone();
        out.sigma2 = 1.0;
        return Ok(out);
    }
    let coeffs = data
        .coeffs
        .par_iter()
        .map(|g| g.weighted(&mult))
        .collect::<Result<_>>()?;
    let group_weights = data
        .group_weights
        .iter()
        .map(|h| h.hadamard(&mult))
        .collect::<Result<_>>()?;
    Ok(CoeffDataset {
        coeffs,
        group_of: data.group_of.clone(),
        group_weights,
        sigma2: 1.0,
        whitening: data.whitening.hadamard(&mult)?,
    })
}

#[cfg(test)]
mod tests;
