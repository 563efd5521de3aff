//! Covariance Wiener filtering in the coefficient domain.
//!
//! For an image with weights `H` the estimate is
//! `F = mu + C D (D C D + sigma2 I)^{-1} (G - H . mu)` with `D = diag(H)`,
//! applied block by block. The filter depends on the image only through
//! `H`, so one set of block filters is built per defocus group and reused.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::BasisSpec;
use crate::coeffs::{check_len, CoeffVec, RadialWeightVec};
use crate::covariance::BlockDiagHermitian;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Per-block filter matrices `W_n` (row-major) for one weight vector.
#[derive(Debug, Clone)]
pub struct GroupFilter {
    blocks: Vec<Vec<Complex64>>,
    /// True when some block needed the pseudo-inverse.
    pub used_pseudo_inverse: bool,
}

impl GroupFilter {
    pub fn block(&self, n: usize) -> &[Complex64] {
        &self.blocks[n]
    }
}

struct CacheEntry {
    filter: Arc<GroupFilter>,
    last_used: u64,
}

/// Immutable filter inputs plus the per-group filter cache.
pub struct WienerContext {
    basis_hash: [u8; 32],
    mean: CoeffVec,
    covariance: BlockDiagHermitian,
    sigma2: f64,
    capacity: Option<usize>,
    cache: Mutex<(HashMap<usize, CacheEntry>, u64)>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl WienerContext {
    /// Clips `covariance` to its PSD part and prepares an empty cache with
    /// unbounded capacity.
    pub fn new(
        basis: &BasisSpec,
        mean: CoeffVec,
        covariance: &BlockDiagHermitian,
        sigma2: f64,
    ) -> Result<Self> {
        covariance.check_basis(basis)?;
        check_len(basis.len(), mean.len())?;
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!("noise variance {sigma2}")));
        }
        Ok(Self {
            basis_hash: basis.hash(),
            mean,
            covariance: covariance.clip_psd()?,
            sigma2,
            capacity: None,
            cache: Mutex::new((HashMap::new(), 0)),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    /// Limits the number of cached group filters (least recently used are
    /// evicted first).
    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = Some(capacity.max(1));
        self
    }

    pub fn mean(&self) -> &CoeffVec {
        &self.mean
    }

    /// The PSD-clipped covariance actually used by the filter.
    pub fn covariance(&self) -> &BlockDiagHermitian {
        &self.covariance
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `(hits, misses)` of the group cache.
    pub fn cache_stats(&self) -> (usize, usize) {
        (
            self.hits.load(Ordering::Relaxed),
            self.misses.load(Ordering::Relaxed),
        )
    }

    fn check_basis(&self, basis: &BasisSpec) -> Result<()> {
        if basis.hash() != self.basis_hash {
            return Err(Error::BasisMismatch {
                expected: hex::encode(self.basis_hash),
                found: basis.hash_hex(),
            });
        }
        Ok(())
    }

    /// Builds the block filters for weights `h` without caching.
    pub fn build_filter(&self, basis: &BasisSpec, h: &RadialWeightVec) -> Result<GroupFilter> {
        self.check_basis(basis)?;
        check_len(basis.len(), h.len())?;
        let mut used_pinv = false;
        let mut blocks = Vec::with_capacity(basis.blocks().len());
        for (n, block) in basis.blocks().iter().enumerate() {
            let d = block.dim();
            let c = self.covariance.block(n);
            let hw: Vec<f64> = block.positive.iter().map(|&j| h[j]).collect();
            // A = D C D + sigma2 I, B = D C
            let mut a = vec![ZERO; d * d];
            let mut b = vec![ZERO; d * d];
            for r in 0..d {
                for s in 0..d {
                    b[r * d + s] = c[r * d + s] * hw[r];
                    a[r * d + s] = c[r * d + s] * (hw[r] * hw[s]);
                }
                a[r * d + r] += self.sigma2;
            }
            let x = match linalg::hpd_solve(&a, d, &b, d) {
                Some(x) => x,
                None => {
                    used_pinv = true;
                    pinv_solve(&a, d, &b)?
                }
            };
            // W = X^H
            let mut w = vec![ZERO; d * d];
            for r in 0..d {
                for s in 0..d {
                    w[r * d + s] = x[s * d + r].conj();
                }
            }
            blocks.push(w);
        }
        if used_pinv {
            log::warn!("Wiener system singular; using pseudo-inverse");
        }
        Ok(GroupFilter {
            blocks,
            used_pseudo_inverse: used_pinv,
        })
    }

    /// Cached filter for `group`. `h` must be that group's weights.
    pub fn group_filter(
        &self,
        basis: &BasisSpec,
        group: usize,
        h: &RadialWeightVec,
    ) -> Result<Arc<GroupFilter>> {
        {
            let mut guard = self.cache.lock().expect("cache poisoned");
            let (map, tick) = &mut *guard;
            *tick += 1;
            let now = *tick;
            if let Some(entry) = map.get_mut(&group) {
                entry.last_used = now;
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(entry.filter.clone());
            }
        }
        let filter = Arc::new(self.build_filter(basis, h)?);
        self.misses.fetch_add(1, Ordering::Relaxed);
        let mut guard = self.cache.lock().expect("cache poisoned");
        let (map, tick) = &mut *guard;
        if let Some(cap) = self.capacity {
            while map.len() >= cap {
                let oldest = map
                    .iter()
                    .min_by_key(|(_, e)| e.last_used)
                    .map(|(&g, _)| g)
                    .expect("nonempty cache");
                map.remove(&oldest);
            }
        }
        map.insert(
            group,
            CacheEntry {
                filter: filter.clone(),
                last_used: *tick,
            },
        );
        Ok(filter)
    }

    /// Applies prepared block filters to one coefficient vector.
    pub fn apply(
        &self,
        basis: &BasisSpec,
        filter: &GroupFilter,
        g: &CoeffVec,
        h: &RadialWeightVec,
    ) -> Result<CoeffVec> {
        self.check_basis(basis)?;
        check_len(basis.len(), g.len())?;
        check_len(basis.len(), h.len())?;
        let mu = &self.mean;
        let mut out = mu.clone();
        let mut r = Vec::new();
        for (n, block) in basis.blocks().iter().enumerate() {
            let d = block.dim();
            let w = &filter.blocks[n];
            let sides: &[(&Vec<usize>, bool)] = if n == 0 {
                &[(&block.positive, false)]
            } else {
                &[(&block.positive, false), (&block.negative, true)]
            };
            for &(pos, conj) in sides {
                r.clear();
                r.extend(pos.iter().map(|&j| g[j] - mu[j] * h[j]));
                for a in 0..d {
                    let mut acc = ZERO;
                    for b in 0..d {
                        let wab = if conj { w[a * d + b].conj() } else { w[a * d + b] };
                        acc += wab * r[b];
                    }
                    out[pos[a]] += acc;
                }
            }
        }
        Ok(out)
    }
}

/// `A^+ B` through the eigendecomposition of Hermitian `A`.
fn pinv_solve(a: &[Complex64], d: usize, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let (vals, vecs) = linalg::hermitian_eigen(a, d)?;
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = top * d as f64 * f64::EPSILON;
    let inv: Vec<f64> = vals
        .iter()
        .map(|&v| if v.abs() > tol { 1.0 / v } else { 0.0 })
        .collect();
    let p = linalg::recompose(&inv, &vecs, d);
    let mut x = vec![ZERO; d * d];
    for r in 0..d {
        for k in 0..d {
            let prk = p[r * d + k];
            if prk == ZERO {
                continue;
            }
            for s in 0..d {
                x[r * d + s] += prk * b[k * d + s];
            }
        }
    }
    Ok(x)
}

/// Wiener estimate of the clean coefficients behind `g`.
pub fn wiener_denoise(
    basis: &BasisSpec,
    g: &CoeffVec,
    h: &RadialWeightVec,
    ctx: &WienerContext,
) -> Result<CoeffVec> {
    let filter = ctx.build_filter(basis, h)?;
    ctx.apply(basis, &filter, g, h)
}

/// Denoises the selected images and synthesizes them. Filters are built
/// once per group, sequentially, then images are filtered in parallel.
pub fn denoise_batch(
    basis: &BasisSpec,
    coeffs: &[CoeffVec],
    group_of: &[usize],
    group_weights: &[RadialWeightVec],
    ctx: &WienerContext,
    selection: &[usize],
) -> Result<Vec<Image>> {
    check_len(coeffs.len(), group_of.len())?;
    let mut jobs = Vec::with_capacity(selection.len());
    for &i in selection {
        if i >= coeffs.len() {
            return Err(Error::InvalidParameter(format!(
                "image {i} out of range (0..{})",
                coeffs.len()
            )));
        }
        let group = group_of[i];
        let h = group_weights.get(group).ok_or(Error::UnknownGroup(group))?;
        let filter = ctx.group_filter(basis, group, h)?;
        jobs.push((i, filter, h));
    }
    jobs.par_iter()
        .map(|(i, filter, h)| {
            let f = ctx.apply(basis, filter, &coeffs[*i], h)?;
            basis.synthesize(&f)
        })
        .collect()
}
