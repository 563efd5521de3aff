//! Radial contrast transfer functions and the frequency-coverage check.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::coeffs::{check_len, RadialWeightVec};
use crate::error::{Error, Result};

/// `delta` at or below this value triggers a warning.
pub const WELLPOSED_WARN: f64 = 1e-10;

/// Weak-phase CTF parameters. Field names in JSON follow the CTF file layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtfParams {
    /// Micrometres; negative for overfocus.
    #[serde(rename = "defocus_um")]
    pub defocus: f64,
    /// Kilovolts.
    #[serde(rename = "voltage_kv")]
    pub voltage: f64,
    /// Millimetres.
    #[serde(rename = "cs_mm")]
    pub spherical_aberration: f64,
    pub amplitude_contrast: f64,
    /// Angstrom.
    #[serde(rename = "pixel_size_a")]
    pub pixel_size: f64,
    /// Square Angstrom.
    #[serde(rename = "b_factor_a2", default)]
    pub b_factor: f64,
}

impl CtfParams {
    /// 300 kV, Cs 2 mm, amplitude contrast 0.1, no envelope.
    pub fn new(defocus_um: f64, pixel_size: f64) -> Self {
        Self {
            defocus: defocus_um,
            voltage: 300.0,
            spherical_aberration: 2.0,
            amplitude_contrast: 0.1,
            pixel_size,
            b_factor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.voltage > 0.0
            && self.pixel_size > 0.0
            && (0.0..1.0).contains(&self.amplitude_contrast)
            && self.b_factor >= 0.0
            && self.defocus.is_finite()
            && self.spherical_aberration.is_finite();
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "invalid CTF parameters {self:?}"
            )));
        }
        Ok(())
    }

    /// Relativistic electron wavelength in Angstrom.
    pub fn wavelength(&self) -> f64 {
        electron_wavelength(self.voltage)
    }

    /// Phase aberration `chi(s)` for spatial frequency `s` in 1/Angstrom.
    pub fn phase(&self, s: f64) -> f64 {
        let lam = self.wavelength();
        let defocus = self.defocus * 1e4;
        let cs = self.spherical_aberration * 1e7;
        let s2 = s * s;
        PI * lam * defocus * s2 - 0.5 * PI * cs * lam.powi(3) * s2 * s2
    }
}

/// Relativistic electron wavelength (Angstrom) for an accelerating voltage in kV.
pub fn electron_wavelength(voltage_kv: f64) -> f64 {
    let v = voltage_kv * 1e3;
    12.2643 / (v * (1.0 + v * 0.978466e-6)).sqrt()
}

/// `CTF(s) = -[sqrt(1 - w^2) sin chi + w cos chi] exp(-B s^2 / 4)`.
pub fn eval_ctf(p: &CtfParams, s: f64) -> f64 {
    let w = p.amplitude_contrast;
    let chi = p.phase(s);
    let env = (-p.b_factor * s * s / 4.0).exp();
    -((1.0 - w * w).sqrt() * chi.sin() + w * chi.cos()) * env
}

/// Spatial frequency (1/Angstrom) of basis root `lambda`, mapping the unit
/// disk onto the physical half-width `L/2 * pixel_size`.
pub fn root_frequency(lambda: f64, grid_size: usize, pixel_size: f64) -> f64 {
    lambda / (2.0 * PI * (grid_size as f64 / 2.0) * pixel_size)
}

/// Per-image point spread in the coefficient domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Filter {
    /// All-ones weights.
    None,
    Ctf(CtfParams),
}

impl Filter {
    pub fn weights(&self, basis: &BasisSpec) -> RadialWeightVec {
        match self {
            Filter::None => RadialWeightVec::ones(basis.len()),
            Filter::Ctf(p) => ctf_to_weights(p, basis),
        }
    }
}

/// Samples the CTF at every basis root. The pixel size of `p` sets the
/// frequency scale.
pub fn ctf_to_weights(p: &CtfParams, basis: &BasisSpec) -> RadialWeightVec {
    let l = basis.grid_size();
    basis.radial_weights(|lam| eval_ctf(p, root_frequency(lam, l, p.pixel_size)))
}

/// Outcome of the frequency-coverage check.
#[derive(Debug, Clone)]
pub struct Wellposedness {
    pub delta: f64,
    /// Distinct roots, ascending.
    pub lambdas: Vec<f64>,
    /// Row-major `log10 sum_i w_i(xi)^2 w_i(eta)^2` over `lambdas x lambdas`.
    pub heatmap: Vec<f64>,
}

/// Frequency coverage for a list of per-image weight vectors.
pub fn check_wellposedness(weights: &[RadialWeightVec], basis: &BasisSpec) -> Result<Wellposedness> {
    let counted: Vec<(&RadialWeightVec, usize)> = weights.iter().map(|w| (w, 1)).collect();
    check_wellposedness_counted(&counted, basis)
}

/// Same as [`check_wellposedness`] with each weight vector standing for
/// `count` images (one entry per defocus group).
pub fn check_wellposedness_counted(
    weights: &[(&RadialWeightVec, usize)],
    basis: &BasisSpec,
) -> Result<Wellposedness> {
    if weights.is_empty() {
        return Err(Error::InvalidParameter("no weight vectors".into()));
    }
    // one representative index per distinct root
    let mut reps: Vec<(f64, usize)> = basis
        .indices()
        .iter()
        .enumerate()
        .filter(|(_, idx)| idx.n >= 0)
        .map(|(j, _)| (basis.lambdas()[j], j))
        .collect();
    reps.sort_by(|a, b| a.0.total_cmp(&b.0));
    reps.dedup_by(|a, b| a.0 == b.0);
    let dim = reps.len();
    let mut sum = vec![0.0; dim * dim];
    for (w, count) in weights {
        check_len(basis.len(), w.len())?;
        let sq: Vec<f64> = reps.iter().map(|&(_, j)| w[j] * w[j]).collect();
        let c = *count as f64;
        for a in 0..dim {
            let wa = c * sq[a];
            let row = &mut sum[a * dim..(a + 1) * dim];
            for (b, out) in row.iter_mut().enumerate() {
                *out += wa * sq[b];
            }
        }
    }
    let delta = sum.iter().copied().fold(f64::INFINITY, f64::min);
    if delta <= WELLPOSED_WARN {
        log::warn!("frequency coverage is poor: delta = {delta:e}");
    }
    Ok(Wellposedness {
        delta,
        lambdas: reps.iter().map(|r| r.0).collect(),
        heatmap: sum.into_iter().map(f64::log10).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;

    #[test]
    fn wavelength_at_300kv() {
        assert!((electron_wavelength(300.0) - 0.019687).abs() < 1e-5);
    }

    #[test]
    fn zero_frequency_is_minus_amplitude_contrast() {
        let mut p = CtfParams::new(2.5, 1.3);
        p.amplitude_contrast = 0.07;
        assert_eq!(eval_ctf(&p, 0.0), -0.07);
    }

    #[test]
    fn first_zero_is_bracketed() {
        let mut p = CtfParams::new(2.0, 1.0);
        p.amplitude_contrast = 0.07;
        // first zero: sqrt(1-w^2) sin chi + w cos chi = 0 with chi in (0, pi)
        let target = PI - (p.amplitude_contrast / (1.0 - 0.07f64.powi(2)).sqrt()).atan();
        let (mut lo, mut hi) = (0.0, 0.2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p.phase(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s0 = 0.5 * (lo + hi);
        assert!(eval_ctf(&p, s0 * 0.999) * eval_ctf(&p, s0 * 1.001) < 0.0);
        assert!(eval_ctf(&p, s0 * 0.5) < 0.0);
    }

    #[test]
    fn bounded_without_envelope() {
        let p = CtfParams::new(1.7, 1.0);
        for i in 0..2000 {
            assert!(eval_ctf(&p, i as f64 * 2.5e-4).abs() <= 1.0);
        }
    }

    #[test]
    fn weights_match_scalar_evaluation_and_are_radial() {
        let basis = build_basis(64, 1.0).unwrap();
        let p = CtfParams::new(1.0, 1.0);
        let w = ctf_to_weights(&p, &basis);
        for (n, k) in [(0, 1), (0, 2)] {
            let j = basis.position(n, k).unwrap();
            let lam = basis.lambdas()[j];
            let s = lam / (2.0 * PI * 32.0);
            assert_eq!(w[j], eval_ctf(&p, s));
        }
        for (j, idx) in basis.indices().iter().enumerate() {
            if idx.n != 0 {
                assert_eq!(w[j], w[basis.partner(j)]);
            }
        }
        assert_eq!(Filter::None.weights(&basis), RadialWeightVec::ones(basis.len()));
    }

    #[test]
    fn wellposedness_trivial_cases() {
        let basis = build_basis(8, 1.0).unwrap();
        let ones = RadialWeightVec::ones(basis.len());
        let r = check_wellposedness(std::slice::from_ref(&ones), &basis).unwrap();
        assert_eq!(r.delta, 1.0);
        assert!(r.heatmap.iter().all(|&v| v == 0.0));

        let mut v = ones.clone().into_vec();
        v[3] = 0.0;
        let hole = RadialWeightVec::from_vec(v);
        assert_eq!(check_wellposedness(&[hole], &basis).unwrap().delta, 0.0);
    }

    #[test]
    fn disjoint_zero_masks_match_brute_force() {
        // two masks with disjoint zeros still leave (xi in Z_a, eta in Z_b)
        // uncovered; a third mask with its own zero set closes the gap
        let basis = build_basis(8, 1.0).unwrap();
        let third = basis.lambda_max() / 3.0;
        let band = |l: f64| ((l / third) as usize).min(2);
        let list: Vec<RadialWeightVec> = (0..3)
            .map(|m| basis.radial_weights(|l| if band(l) == m { 0.0 } else { 0.5 + l / 30.0 + m as f64 }))
            .collect();
        let r = check_wellposedness(&list, &basis).unwrap();
        let mut brute = f64::INFINITY;
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                let s: f64 = list.iter().map(|w| w[i].powi(2) * w[j].powi(2)).sum();
                brute = brute.min(s);
            }
        }
        assert!(r.delta > 0.0);
        assert_eq!(r.delta, brute);
        let pair = check_wellposedness(&list[..2], &basis).unwrap();
        assert_eq!(pair.delta, 0.0);
        let reversed: Vec<_> = list.iter().rev().cloned().collect();
        assert_eq!(check_wellposedness(&reversed, &basis).unwrap().delta, r.delta);
    }
}
