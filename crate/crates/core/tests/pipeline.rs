mod common;

use steercov::ctf::Filter;
use steercov::oracles::block_sample_covariance;
use steercov::pipeline::{denoise_selection, prepare, run_estimation};
use steercov::simulate::{
    clean_coefficients, make_dataset, make_phantom, rotation_augment, NoiseKind, NoiseModel,
    SimulationConfig,
};
use steercov::{build_basis, eigenimages, Dataset};

#[test]
fn unit_weights_reduce_to_sample_covariance_minus_noise() {
    let basis = build_basis(16, 1.0).unwrap();
    let v = make_phantom(16, 1).unwrap();
    let mut cfg = SimulationConfig::new(300, 3, Some(2.0), 5);
    cfg.apply_ctf = false;
    cfg.noise = NoiseKind::White;
    let d = make_dataset(&basis, &v, &cfg).unwrap();
    assert!(d.filters.iter().all(|f| *f == Filter::None));
    let (mut prepared, timings) = prepare(&basis, &d).unwrap();
    // whitening folds a non-unit multiplier into the effective filter
    for h in &mut prepared.group_weights {
        *h = steercov::RadialWeightVec::ones(basis.len());
    }
    let report = steercov::pipeline::estimate(&basis, &prepared, Some(false), timings).unwrap();
    assert_eq!(report.sigma2, 1.0);
    let sample = block_sample_covariance(&basis, &prepared.coeffs);
    for n in 0..sample.num_blocks() {
        let dim = sample.dim(n);
        let mut want = sample.block(n).to_vec();
        for a in 0..dim {
            want[a * dim + a] -= 1.0;
        }
        let got = report.covariance.block(n);
        let diff = common::block_rel_diff(got, &want);
        assert!(diff < 1e-10, "block {n}: {diff}");
    }
}

#[test]
fn estimation_is_repeatable_and_timed() {
    let basis = build_basis(16, 1.0).unwrap();
    let v = make_phantom(16, 2).unwrap();
    let d = make_dataset(&basis, &v, &SimulationConfig::new(200, 4, Some(0.5), 9)).unwrap();
    let a = run_estimation(&basis, &d, None).unwrap();
    let b = run_estimation(&basis, &d, None).unwrap();
    assert_eq!(a.covariance, b.covariance);
    assert!(a.shrink);
    for stage in ["ffb", "ctf", "cov", "accumulate", "solve"] {
        assert!(a.timings[stage] > 0.0, "{stage}");
    }
    assert!(a.delta > 0.0);
    assert_eq!(a.condition_numbers.len(), a.covariance.num_blocks());
}

#[test]
fn denoising_a_single_image_matches_composition() {
    let basis = build_basis(16, 1.0).unwrap();
    let v = make_phantom(16, 3).unwrap();
    let d = make_dataset(&basis, &v, &SimulationConfig::new(100, 2, Some(1.0), 1)).unwrap();
    let (prepared, timings) = prepare(&basis, &d).unwrap();
    let report = steercov::pipeline::estimate(&basis, &prepared, None, timings).unwrap();
    let out = denoise_selection(&basis, &prepared, &report, &[7]).unwrap();
    let ctx = steercov::WienerContext::new(&basis, report.mean.clone(), &report.covariance, report.sigma2).unwrap();
    let h = &prepared.group_weights[prepared.group_of[7]];
    let f = steercov::wiener_denoise(&basis, &prepared.coeffs[7], h, &ctx).unwrap();
    let want = basis.synthesize(&f).unwrap();
    assert!(out[0].sub(&want).norm() <= 1e-12 * want.norm());
}

#[test]
fn mean_is_nearly_radial_for_rotation_invariant_data() {
    let basis = build_basis(16, 1.0).unwrap();
    let v = make_phantom(16, 4).unwrap();
    let clean = clean_coefficients(&basis, &v, 500, 3).unwrap();
    let mut ratios = Vec::new();
    for count in [100usize, 1600] {
        let aug = rotation_augment(&basis, &clean[..count / 4], 4, 8).unwrap();
        let mut mean = steercov::CoeffVec::zeros(basis.len());
        for x in &aug {
            mean = mean.add(x);
        }
        let mean = mean.scale(num_complex::Complex64::new(1.0 / aug.len() as f64, 0.0));
        let angular: f64 = basis
            .indices()
            .iter()
            .enumerate()
            .filter(|(_, i)| i.n != 0)
            .map(|(j, _)| mean[j].norm_sqr())
            .sum::<f64>()
            .sqrt();
        ratios.push(angular / mean.norm());
    }
    // c / sqrt(N): sixteen times more samples, roughly four times smaller
    assert!(ratios[1] < ratios[0] / 2.0, "{ratios:?}");
    assert!(ratios[1] < 3.0 / (1600f64).sqrt(), "{ratios:?}");
}

#[test]
fn top_eigenimage_matches_monte_carlo() {
    let basis = build_basis(16, 1.0).unwrap();
    let v = make_phantom(16, 0).unwrap();
    let base = clean_coefficients(&basis, &v, 2000, 1).unwrap();
    let reference = block_sample_covariance(&basis, &rotation_augment(&basis, &base, 50, 2).unwrap());
    let d = make_dataset(&basis, &v, &SimulationConfig::new(2000, 8, Some(1.0), 7)).unwrap();
    let report = run_estimation(&basis, &d, None).unwrap();
    let est = eigenimages(&report.covariance, &basis, 1).unwrap();
    let want = eigenimages(&reference, &basis, 1).unwrap();
    assert_eq!(est[0].n, want[0].n);
    let a = &est[0].image;
    let b = &want[0].image;
    let dot: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
    let corr = dot.abs() / (a.norm() * b.norm());
    assert!(corr >= 0.95, "{corr}");
}

#[test]
fn noiseless_white_dataset_is_not_whitened() {
    let basis = build_basis(8, 1.0).unwrap();
    let v = make_phantom(8, 0).unwrap();
    let d: Dataset = make_dataset(&basis, &v, &SimulationConfig::new(10, 1, None, 0)).unwrap();
    assert_eq!(d.noise, NoiseModel::none());
    let (prepared, _) = prepare(&basis, &d).unwrap();
    assert_eq!(prepared.sigma2, 0.0);
    assert!(prepared.whitening.values().iter().all(|&w| w == 1.0));
}
