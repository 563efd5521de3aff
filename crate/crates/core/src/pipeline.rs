//! End-to-end estimation: expand images, build (whitened) CTF weights,
//! estimate mean and covariance, with per-stage wall-clock timings.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::basis::BasisSpec;
use crate::coeffs::{CoeffVec, RadialWeightVec};
use crate::covariance::{
    accumulate, estimate_mean, solve_covariance, EstimationReport, REPORT_VERSION,
};
use crate::ctf::check_wellposedness_counted;
use crate::denoise::{denoise_batch, WienerContext};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::simulate::{whiten, CoeffDataset, Dataset};

/// Stage name to seconds.
pub type Timings = BTreeMap<String, f64>;

/// Expands every image (`ffb`) and builds whitened group weights (`ctf`).
pub fn prepare(basis: &BasisSpec, data: &Dataset) -> Result<(CoeffDataset, Timings)> {
    data.validate()?;
    let mut timings = Timings::new();
    let t = Instant::now();
    let coeffs: Vec<CoeffVec> = data
        .images
        .par_iter()
        .map(|im| basis.expand(im))
        .collect::<Result<_>>()?;
    timings.insert("ffb".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let group_weights: Vec<RadialWeightVec> = data.filters.iter().map(|f| f.weights(basis)).collect();
    let raw = CoeffDataset {
        coeffs,
        group_of: data.group_of.clone(),
        group_weights,
        sigma2: data.noise.variance,
        whitening: RadialWeightVec::ones(basis.len()),
    };
    let prepared = whiten(basis, &raw, &data.noise)?;
    timings.insert("ctf".into(), t.elapsed().as_secs_f64());
    Ok((prepared, timings))
}


/// Mean, coverage check, accumulation and closed-form solve. `shrink`
/// defaults to on when the noise variance is positive.
pub fn estimate(
    basis: &BasisSpec,
    data: &CoeffDataset,
    shrink: Option<bool>,
    mut timings: Timings,
) -> Result<EstimationReport> {
    let shrink = shrink.unwrap_or(data.sigma2 > 0.0);
    let coverage = check_wellposedness_counted(&data.group_counts(), basis)?;
    if coverage.delta == 0.0 {
        return Err(Error::InvalidParameter(
            "frequency coverage delta is 0: some frequency pair is never observed".into(),
        ));
    }
    let weights = data.image_weights();
    let t = Instant::now();
    let mean = estimate_mean(basis, &data.coeffs, &weights)?;
    let t_mean = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let acc = accumulate(basis, &data.coeffs, &weights, &mean)?;
    let t_acc = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let sol = solve_covariance(&acc, data.sigma2, shrink)?;
    let t_solve = t.elapsed().as_secs_f64();
    timings.insert("mean".into(), t_mean);
    timings.insert("accumulate".into(), t_acc);
    timings.insert("solve".into(), t_solve);
    timings.insert("cov".into(), t_mean + t_acc + t_solve);
    Ok(EstimationReport {
        version: REPORT_VERSION,
        grid_size: basis.grid_size(),
        band_ratio: basis.band_ratio(),
        pixel_size: basis.pixel_size(),
        basis_hash: basis.hash_hex(),
        num_images: data.coeffs.len(),
        num_groups: data.group_weights.len(),
        mean,
        covariance: sol.covariance,
        sigma2: data.sigma2,
        condition_numbers: sol.condition_numbers,
        delta: coverage.delta,
        shrink,
        timings,
    })
}

/// `prepare` followed by `estimate`.
pub fn run_estimation(basis: &BasisSpec, data: &Dataset, shrink: Option<bool>) -> Result<EstimationReport> {
    let (prepared, timings) = prepare(basis, data)?;
    estimate(basis, &prepared, shrink, timings)
}

/// Wiener-denoises the selected images of prepared data using a report.
pub fn denoise_selection(
    basis: &BasisSpec,
    data: &CoeffDataset,
    report: &EstimationReport,
    selection: &[usize],
) -> Result<Vec<Image>> {
    if report.basis_hash != basis.hash_hex() {
        return Err(Error::BasisMismatch {
            expected: basis.hash_hex(),
            found: report.basis_hash.clone(),
        });
    }
    let ctx = WienerContext::new(basis, report.mean.clone(), &report.covariance, report.sigma2)?;
    denoise_batch(basis, &data.coeffs, &data.group_of, &data.group_weights, &ctx, selection)
}
