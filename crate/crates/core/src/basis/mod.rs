//! Fourier-Bessel (disk harmonic) basis on an `L x L` pixel grid.
//!
//! Basis functions are `psi_nk(r, theta) = gamma_nk J_|n|(lambda_nk r) e^{i n theta}`
//! on the closed unit disk, with `lambda_nk` the `k`-th positive root of
//! `J_|n|` and `gamma_nk = 1 / (sqrt(pi) |J_{|n|+1}(lambda_nk)|)` giving unit
//! norm on the continuous disk. Using `J_|n|` for negative `n` makes
//! `psi_{-n,k} = conj(psi_nk)`, so real images have coefficients with
//! `alpha_{-n,k} = conj(alpha_{n,k})`.
//!
//! Indices are ordered by `|n|`, then `k`, with `+n` before `-n`.
//!
//! Expansion is least squares over the disk pixels through a precomputed,
//! lightly Tikhonov-regularized normal-equation factorization of the real
//! synthesis matrix. The real parameterization uses one column per index:
//! `gamma J_0` for `n = 0`, `2 gamma J_m cos(m theta)` for `+m` (real part)
//! and `-2 gamma J_m sin(m theta)` for `-m` (imaginary part of `alpha_{+m}`).

pub mod bessel;
pub mod roots;

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use roots::{compute_bessel_roots, RootTable};

use crate::coeffs::{check_len, CoeffVec, RadialWeightVec};
use crate::error::{Error, Result};
use crate::image::{pixel_coordinate, Image};
use crate::linalg;
use bessel::bessel_j;

/// Relative Tikhonov weight applied to the normal equations.
pub const TIKHONOV: f64 = 1e-10;

/// Condition numbers above this are treated as rank deficient.
const MAX_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FbIndex {
    pub n: i32,
    pub k: u32,
}

/// Positions of one angular-frequency block inside a coefficient vector.
#[derive(Debug, Clone)]
pub struct Block {
    /// Angular frequency `n >= 0`.
    pub n: usize,
    /// Index of `(n, k)` for `k = 1..=dim`.
    pub positive: Vec<usize>,
    /// Index of `(-n, k)`; empty for `n = 0`.
    pub negative: Vec<usize>,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.positive.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub grid_size: usize,
    pub band_ratio: f64,
    /// Angstrom per pixel; metadata only.
    pub pixel_size: f64,
    /// Lower end of the frequency window used by the well-posedness check.
    pub lambda_min: f64,
}

impl BasisConfig {
    pub fn new(grid_size: usize, band_ratio: f64) -> Self {
        Self {
            grid_size,
            band_ratio,
            pixel_size: 1.0,
            lambda_min: 0.0,
        }
    }

    pub fn with_pixel_size(mut self, pixel_size: f64) -> Self {
        self.pixel_size = pixel_size;
        self
    }
}

/// Disk-harmonic basis together with its sampled tables and the
/// precomputed least-squares expansion operator. Immutable once built.
pub struct BasisSpec {
    config: BasisConfig,
    lambda_max: f64,
    roots: RootTable,
    indices: Vec<FbIndex>,
    lambdas: Vec<f64>,
    gammas: Vec<f64>,
    blocks: Vec<Block>,
    partner: Vec<usize>,
    /// nonnegative-frequency slot of every index (shared by +n and -n)
    slot_of: Vec<usize>,
    /// block position `n` of every slot
    slot_order: Vec<usize>,
    num_slots: usize,
    max_order: usize,
    /// flat pixel offsets inside the closed unit disk
    disk: Vec<usize>,
    /// `disk.len() x num_slots`, row-major: gamma J_m(lambda r_p)
    radial: Vec<f64>,
    /// `disk.len() x (max_order + 1)`: cos(m theta_p), sin(m theta_p)
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
    /// `|I| x disk.len()` real least-squares operator
    analysis: Mat<f64>,
    condition_number: f64,
    stability_bound: f64,
    hash: [u8; 32],
}

impl std::fmt::Debug for BasisSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BasisSpec")
            .field("grid_size", &self.config.grid_size)
            .field("band_ratio", &self.config.band_ratio)
            .field("num_coeffs", &self.indices.len())
            .field("condition_number", &self.condition_number)
            .finish()
    }
}

/// Builds the basis for an `L x L` grid with `lambda_max = band_ratio * pi * L / 2`.
pub fn build_basis(grid_size: usize, band_ratio: f64) -> Result<BasisSpec> {
    BasisSpec::new(BasisConfig::new(grid_size, band_ratio))
}

impl BasisSpec {
    pub fn new(config: BasisConfig) -> Result<Self> {
        let l = config.grid_size;
        if l < 4 || l % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid size must be even and >= 4, got {l}"
            )));
        }
        if !(config.band_ratio > 0.0 && config.band_ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "band_ratio must lie in (0, 1], got {}",
                config.band_ratio
            )));
        }
        if !(config.pixel_size > 0.0) || !(config.lambda_min >= 0.0) {
            return Err(Error::InvalidParameter(
                "pixel_size must be positive and lambda_min nonnegative".into(),
            ));
        }
        let lambda_max = config.band_ratio * PI * l as f64 / 2.0;
        let roots = compute_bessel_roots(None, lambda_max)?;

        let mut indices = Vec::new();
        let mut lambdas = Vec::new();
        let mut gammas = Vec::new();
        let mut blocks = Vec::new();
        let mut slot_of = Vec::new();
        let mut slot_order = Vec::new();
        let mut slot_lambda = Vec::new();
        let mut slot_gamma = Vec::new();
        let mut partner = Vec::new();
        for m in 0..roots.num_orders() {
            let mut block = Block {
                n: m,
                positive: Vec::new(),
                negative: Vec::new(),
            };
            for (kk, &lam) in roots.order(m).iter().enumerate() {
                let gamma = 1.0 / (PI.sqrt() * bessel_j(m + 1, lam).abs());
                let slot = slot_lambda.len();
                slot_lambda.push(lam);
                slot_gamma.push(gamma);
                slot_order.push(m);
                let signs: &[i32] = if m == 0 { &[1] } else { &[1, -1] };
                let first = indices.len();
                for &sign in signs {
                    let pos = indices.len();
                    indices.push(FbIndex {
                        n: sign * m as i32,
                        k: kk as u32 + 1,
                    });
                    lambdas.push(lam);
                    gammas.push(gamma);
                    slot_of.push(slot);
                    if sign > 0 {
                        block.positive.push(pos);
                    } else {
                        block.negative.push(pos);
                    }
                }
                if m == 0 {
                    partner.push(first);
                } else {
                    partner.push(first + 1);
                    partner.push(first);
                }
            }
            blocks.push(block);
        }
        let num_slots = slot_lambda.len();
        let max_order = blocks.len() - 1;

        // pixel geometry
        let mut disk = Vec::new();
        let mut radius = Vec::new();
        let mut angle = Vec::new();
        let mut radius_key = Vec::new();
        for i in 0..l {
            let x = pixel_coordinate(i, l);
            for j in 0..l {
                let y = pixel_coordinate(j, l);
                let r2 = x * x + y * y;
                if r2 <= 1.0 {
                    disk.push(i * l + j);
                    radius.push(r2.sqrt());
                    angle.push(y.atan2(x));
                    // exact integer key for r^2 * L^2
                    let a = 2 * i as i64 + 1 - l as i64;
                    let b = 2 * j as i64 + 1 - l as i64;
                    radius_key.push(a * a + b * b);
                }
            }
        }
        let npix = disk.len();
        let mut keys: Vec<i64> = radius_key.clone();
        keys.sort_unstable();
        keys.dedup();
        let unique_r: Vec<f64> = keys
            .iter()
            .map(|&k| (k as f64).sqrt() / l as f64)
            .collect();
        let ring_of: Vec<usize> = radius_key
            .iter()
            .map(|k| keys.binary_search(k).expect("key present"))
            .collect();

        // gamma J_m(lambda r) for every slot and distinct radius
        let per_slot: Vec<Vec<f64>> = (0..num_slots)
            .into_par_iter()
            .map(|s| {
                let m = slot_order[s];
                unique_r
                    .iter()
                    .map(|&r| slot_gamma[s] * bessel_j(m, slot_lambda[s] * r))
                    .collect()
            })
            .collect();
        let mut radial = vec![0.0; npix * num_slots];
        for p in 0..npix {
            let row = &mut radial[p * num_slots..(p + 1) * num_slots];
            for (s, v) in row.iter_mut().enumerate() {
                *v = per_slot[s][ring_of[p]];
            }
        }
        let mut cos_table = vec![0.0; npix * (max_order + 1)];
        let mut sin_table = vec![0.0; npix * (max_order + 1)];
        for p in 0..npix {
            for m in 0..=max_order {
                let (s, c) = (m as f64 * angle[p]).sin_cos();
                cos_table[p * (max_order + 1) + m] = c;
                sin_table[p * (max_order + 1) + m] = s;
            }
        }

        // real synthesis matrix, one column per index
        let nidx = indices.len();
        let design = Mat::<f64>::from_fn(npix, nidx, |p, j| {
            let idx = indices[j];
            let m = idx.n.unsigned_abs() as usize;
            let rad = radial[p * num_slots + slot_of[j]];
            let t = p * (max_order + 1) + m;
            match idx.n.signum() {
                0 => rad,
                1 => 2.0 * rad * cos_table[t],
                _ => -2.0 * rad * sin_table[t],
            }
        });
        let mut gram = linalg::gram(design.as_ref());
        let eig = linalg::symmetric_eigenvalues(gram.as_ref())?;
        let (mu_min, mu_max) = (eig[0], eig[eig.len() - 1]);
        let condition_number = if mu_min > 0.0 {
            (mu_max / mu_min).sqrt()
        } else {
            f64::INFINITY
        };
        if !(condition_number < MAX_CONDITION) {
            return Err(Error::RankDeficient {
                condition: condition_number,
            });
        }
        let tau = TIKHONOV * mu_max;
        for j in 0..nidx {
            gram[(j, j)] += tau;
        }
        // sup over singular values s of s / (s^2 + tau), times sqrt(2) for
        // the complex norm of the +-n pairs
        let stability_bound = 2f64.sqrt()
            * eig
                .iter()
                .map(|&mu| mu.max(0.0).sqrt() / (mu.max(0.0) + tau))
                .fold(0.0, f64::max);
        let mut analysis = design.transpose().to_owned();
        linalg::spd_solve_in_place(gram.as_ref(), analysis.as_mut())?;

        let hash = basis_hash(&config, &indices, &lambdas);
        Ok(Self {
            config,
            lambda_max,
            roots,
            indices,
            lambdas,
            gammas,
            blocks,
            partner,
            slot_of,
            slot_order,
            num_slots,
            max_order,
            disk,
            radial,
            cos_table,
            sin_table,
            analysis,
            condition_number,
            stability_bound,
            hash,
        })
    }

    pub fn config(&self) -> &BasisConfig {
        &self.config
    }

    pub fn grid_size(&self) -> usize {
        self.config.grid_size
    }

    pub fn band_ratio(&self) -> f64 {
        self.config.band_ratio
    }

    pub fn pixel_size(&self) -> f64 {
        self.config.pixel_size
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn lambda_min(&self) -> f64 {
        self.config.lambda_min
    }

    pub fn roots(&self) -> &RootTable {
        &self.roots
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[FbIndex] {
        &self.indices
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// Blocks for `n = 0, 1, ...`, in order.
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Position of `(-n, k)` for the index at `(n, k)`.
    pub fn partner(&self, j: usize) -> usize {
        self.partner[j]
    }

    pub fn position(&self, n: i32, k: u32) -> Option<usize> {
        let block = self.blocks.get(n.unsigned_abs() as usize)?;
        let list = if n >= 0 {
            &block.positive
        } else {
            &block.negative
        };
        list.get((k as usize).checked_sub(1)?).copied()
    }

    /// Sum of squared block sizes over `n >= 0`: stored covariance entries.
    pub fn block_entries(&self) -> usize {
        self.blocks.iter().map(|b| b.dim() * b.dim()).sum()
    }

    pub fn num_disk_pixels(&self) -> usize {
        self.disk.len()
    }

    /// Flat pixel offsets of the pixels inside the unit disk.
    pub fn disk_pixels(&self) -> &[usize] {
        &self.disk
    }

    /// Condition number of the pixel-sampled synthesis matrix.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    /// Constant `B` with `||expand(g)|| <= B ||g||` for every image `g`.
    pub fn stability_bound(&self) -> f64 {
        self.stability_bound
    }

    pub fn hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash)
    }

    /// Area of one pixel in unit-disk coordinates.
    pub fn pixel_area(&self) -> f64 {
        let d = 2.0 / self.config.grid_size as f64;
        d * d
    }

    /// Real part of `sum_j alpha_j psi_j`, sampled at pixel centers; zero
    /// outside the unit disk.
    pub fn synthesize(&self, alpha: &CoeffVec) -> Result<Image> {
        check_len(self.len(), alpha.len())?;
        let ns = self.num_slots;
        // for each slot: u = Re(a+) + Re(a-), v = Im(a+) - Im(a-)
        let mut u = vec![0.0; ns];
        let mut v = vec![0.0; ns];
        for (j, idx) in self.indices.iter().enumerate() {
            let a = alpha[j];
            let s = self.slot_of[j];
            if idx.n >= 0 {
                u[s] += a.re;
                if idx.n > 0 {
                    v[s] += a.im;
                }
            } else {
                u[s] += a.re;
                v[s] -= a.im;
            }
        }
        let l = self.config.grid_size;
        let mut img = Image::zeros(l, self.config.pixel_size);
        let out = img.data_mut();
        let mo = self.max_order + 1;
        for (p, &pix) in self.disk.iter().enumerate() {
            let row = &self.radial[p * ns..(p + 1) * ns];
            let cos = &self.cos_table[p * mo..(p + 1) * mo];
            let sin = &self.sin_table[p * mo..(p + 1) * mo];
            let mut acc = 0.0;
            let mut s = 0;
            for (m, block) in self.blocks.iter().enumerate() {
                let mut su = 0.0;
                let mut sv = 0.0;
                for _ in 0..block.dim() {
                    su += row[s] * u[s];
                    sv += row[s] * v[s];
                    s += 1;
                }
                acc += cos[m] * su - sin[m] * sv;
            }
            out[pix] = acc;
        }
        Ok(img)
    }

    /// Squared norm, over disk pixels, of the image of each real parameter:
    /// `gamma J_0` for `n = 0`, `2 gamma J_m cos(m theta)` for `+m` and
    /// `2 gamma J_m sin(m theta)` for `-m`.
    pub fn column_energies(&self) -> Vec<f64> {
        let ns = self.num_slots;
        let mo = self.max_order + 1;
        let mut out = vec![0.0; self.len()];
        for p in 0..self.disk.len() {
            let row = &self.radial[p * ns..(p + 1) * ns];
            for (j, idx) in self.indices.iter().enumerate() {
                let m = idx.n.unsigned_abs() as usize;
                let rad = row[self.slot_of[j]];
                let v = match idx.n.signum() {
                    0 => rad,
                    1 => 2.0 * rad * self.cos_table[p * mo + m],
                    _ => 2.0 * rad * self.sin_table[p * mo + m],
                };
                out[j] += v * v;
            }
        }
        out
    }

    /// Adjoint of [`synthesize`](Self::synthesize) with respect to the real
    /// inner products `<a, b> = Re sum conj(a_j) b_j` and the pixel dot
    /// product: `(A* g)_j = sum_p g_p conj(psi_j(p))`.
    pub fn analysis_adjoint(&self, g: &Image) -> Result<CoeffVec> {
        self.check_image(g)?;
        let ns = self.num_slots;
        let mo = self.max_order + 1;
        let mut c = vec![0.0; ns];
        let mut s_acc = vec![0.0; ns];
        let data = g.data();
        for (p, &pix) in self.disk.iter().enumerate() {
            let gp = data[pix];
            if gp == 0.0 {
                continue;
            }
            let row = &self.radial[p * ns..(p + 1) * ns];
            let cos = &self.cos_table[p * mo..(p + 1) * mo];
            let sin = &self.sin_table[p * mo..(p + 1) * mo];
            for s in 0..ns {
                let m = self.slot_order[s];
                let w = gp * row[s];
                c[s] += w * cos[m];
                s_acc[s] += w * sin[m];
            }
        }
        let mut out = CoeffVec::zeros(self.len());
        for (j, idx) in self.indices.iter().enumerate() {
            let s = self.slot_of[j];
            out[j] = if idx.n >= 0 {
                Complex64::new(c[s], -s_acc[s])
            } else {
                Complex64::new(c[s], s_acc[s])
            };
        }
        Ok(out)
    }

    /// Least-squares coefficients of `g` over the disk pixels. The output is
    /// exactly conjugate symmetric.
    pub fn expand(&self, g: &Image) -> Result<CoeffVec> {
        self.check_image(g)?;
        let data = g.data();
        let nidx = self.len();
        let mut params = vec![0.0; nidx];
        for (p, &pix) in self.disk.iter().enumerate() {
            let gp = data[pix];
            if gp == 0.0 {
                continue;
            }
            let col = self.analysis.col_as_slice(p);
            for (acc, w) in params.iter_mut().zip(col) {
                *acc += gp * w;
            }
        }
        Ok(self.params_to_coeffs(&params))
    }

    fn params_to_coeffs(&self, params: &[f64]) -> CoeffVec {
        let mut out = CoeffVec::zeros(self.len());
        for (j, idx) in self.indices.iter().enumerate() {
            match idx.n.signum() {
                0 => out[j] = Complex64::new(params[j], 0.0),
                1 => {
                    let q = self.partner[j];
                    out[j] = Complex64::new(params[j], params[q]);
                    out[q] = Complex64::new(params[j], -params[q]);
                }
                _ => {}
            }
        }
        out
    }

    fn check_image(&self, g: &Image) -> Result<()> {
        if g.size() != self.config.grid_size {
            return Err(Error::Shape(format!(
                "image is {}x{}, basis expects {}x{}",
                g.size(),
                g.size(),
                self.config.grid_size,
                self.config.grid_size
            )));
        }
        Ok(())
    }

    /// `alpha_nk * e^{i n phi}`. The synthesized result satisfies
    /// `f'(r, theta) = f(r, theta + phi)`, i.e. a clockwise rotation of the
    /// image by `phi` in the `(x, y)` frame.
    pub fn steer(&self, alpha: &CoeffVec, phi: f64) -> Result<CoeffVec> {
        check_len(self.len(), alpha.len())?;
        let mut out = alpha.clone();
        for (j, idx) in self.indices.iter().enumerate() {
            if idx.n != 0 {
                out[j] *= Complex64::from_polar(1.0, idx.n as f64 * phi);
            }
        }
        Ok(out)
    }

    /// Radial convolution as a diagonal operator: `alpha_nk * w_nk`.
    pub fn radial_convolve(&self, alpha: &CoeffVec, w: &RadialWeightVec) -> Result<CoeffVec> {
        check_len(self.len(), alpha.len())?;
        alpha.weighted(w)
    }

    /// Weight vector `w_nk = f(lambda_nk)` for a radial transfer function.
    pub fn radial_weights(&self, f: impl Fn(f64) -> f64) -> RadialWeightVec {
        RadialWeightVec::from_vec(self.lambdas.iter().map(|&l| f(l)).collect())
    }

    /// Checks `alpha_{-n,k} = conj(alpha_{n,k})` up to `tol` (absolute).
    pub fn is_conjugate_symmetric(&self, alpha: &CoeffVec, tol: f64) -> bool {
        self.indices.iter().enumerate().all(|(j, idx)| {
            let q = self.partner[j];
            if idx.n == 0 {
                alpha[j].im.abs() <= tol
            } else {
                (alpha[j] - alpha[q].conj()).norm() <= tol
            }
        })
    }

    /// Projects onto conjugate-symmetric vectors (the coefficients of the real
    /// image that `synthesize` would produce).
    pub fn symmetrize(&self, alpha: &CoeffVec) -> CoeffVec {
        let mut out = alpha.clone();
        for (j, idx) in self.indices.iter().enumerate() {
            let q = self.partner[j];
            out[j] = if idx.n == 0 {
                Complex64::new(alpha[j].re, 0.0)
            } else {
                0.5 * (alpha[j] + alpha[q].conj())
            };
        }
        out
    }
}

fn basis_hash(config: &BasisConfig, indices: &[FbIndex], lambdas: &[f64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"steercov-fb-basis-v1");
    h.update((config.grid_size as u32).to_le_bytes());
    h.update(config.band_ratio.to_bits().to_le_bytes());
    h.update(config.lambda_min.to_bits().to_le_bytes());
    h.update((indices.len() as u32).to_le_bytes());
    for (idx, lam) in indices.iter().zip(lambdas) {
        h.update(idx.n.to_le_bytes());
        h.update(idx.k.to_le_bytes());
        h.update(lam.to_bits().to_le_bytes());
    }
    h.finalize().into()
}
