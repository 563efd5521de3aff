//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_complex::Complex64;
use steercov::basis::bessel::bessel_j;
use steercov::covariance::{accumulate, estimate_mean, solve_covariance};
use steercov::image::pixel_coordinate;
use steercov::metrics::{block_relative_error, frc_mean};
use steercov::oracles::{
    block_sample_covariance, dense_sample_covariance, lstsq_cg, lstsq_entrywise, offblock_mass,
    spatial_convolve, CgOptions, OracleInstance,
};
use steercov::pipeline::{estimate, prepare};
use steercov::rng::{domain, Stream};
use steercov::simulate::{clean_coefficients, make_phantom, rotation_augment, SimulationConfig};
use steercov::{
    build_basis, make_dataset, BasisSpec, BlockDiagHermitian, CoeffDataset, CoeffVec, CtfParams,
    Filter, Image, NoiseModel, RadialWeightVec,
};
use steercov_cli::commands::{cmd_bench, COVARIANCE_FILE};
use steercov_cli::{run, Command, Flags, RunConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_coeffs(basis: &BasisSpec, s: &mut Stream) -> CoeffVec {
    let raw = CoeffVec::from_vec(
        (0..basis.len())
            .map(|_| Complex64::new(s.normal(), s.normal()))
            .collect(),
    );
    basis.symmetrize(&raw)
}

fn random_ctfs(basis: &BasisSpec, groups: usize, s: &mut Stream) -> Vec<RadialWeightVec> {
    let px = 4.0 * 64.0 / basis.grid_size() as f64;
    (0..groups)
        .map(|_| Filter::Ctf(CtfParams::new(s.uniform_range(1.0, 4.0), px)).weights(basis))
        .collect()
}

fn block_rel_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let norm: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    if norm == 0.0 {
        diff.sqrt()
    } else {
        (diff / norm).sqrt()
    }
}

fn sci(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(", ")
}

fn max_block_diff(a: &BlockDiagHermitian, b: &BlockDiagHermitian) -> f64 {
    (0..a.num_blocks())
        .map(|n| block_rel_diff(a.block(n), b.block(n)))
        .fold(0.0, f64::max)
}

/// Accumulate + solve on `coeffs`; returns (covariance, seconds).
fn fast_path(
    basis: &BasisSpec,
    coeffs: &[CoeffVec],
    weights: &[&RadialWeightVec],
    sigma2: f64,
    shrink: bool,
) -> (BlockDiagHermitian, f64) {
    let mean = estimate_mean(basis, coeffs, weights).unwrap();
    let t = Instant::now();
    let acc = accumulate(basis, coeffs, weights, &mean).unwrap();
    let cov = solve_covariance(&acc, sigma2, shrink).unwrap().covariance;
    (cov, t.elapsed().as_secs_f64())
}

fn closed_form_correctness() -> Outcome {
    let t = Instant::now();
    let basis = build_basis(8, 1.0).unwrap();
    let (mut worst_entry, mut worst_cg) = (0.0f64, 0.0f64);
    let mut seed = 0;
    for groups in [1, 4] {
        for sigma2 in [0.0, 0.5] {
            for _ in 0..5 {
                seed += 1;
                let mut s = Stream::new(seed, domain::TEST, 0);
                let inst = OracleInstance {
                    coeffs: (0..64).map(|_| random_coeffs(&basis, &mut s)).collect(),
                    group_of: (0..64).map(|i| i % groups).collect(),
                    group_weights: random_ctfs(&basis, groups, &mut s),
                    sigma2,
                };
                let weights: Vec<_> = inst.group_of.iter().map(|&g| &inst.group_weights[g]).collect();
                let (fast, _) = fast_path(&basis, &inst.coeffs, &weights, sigma2, false);
                let entry = lstsq_entrywise(&basis, &inst).unwrap();
                let cg = lstsq_cg(
                    &basis,
                    &inst,
                    CgOptions {
                        max_iterations: 5000,
                        tolerance: 1e-13,
                    },
                )
                .unwrap();
                worst_entry = worst_entry.max(max_block_diff(&fast, &entry));
                worst_cg = worst_cg.max(max_block_diff(&cg.covariance, &fast));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst_entry <= 1e-12 && worst_cg <= 1e-8 && secs < 60.0,
        format!(
            "20 instances, max block error vs entrywise {worst_entry:.2e} (<= 1e-12), vs CG {worst_cg:.2e} (<= 1e-8), {secs:.1}s (< 60s)"
        ),
    )
}

/// Sum of random Gaussian blobs inside radius 0.5; effectively bandlimited.
fn blob_image(size: usize, seed: u64) -> Image {
    let mut s = Stream::new(seed, domain::TEST, 1);
    let blobs: Vec<[f64; 4]> = (0..8)
        .map(|_| {
            let r = 0.5 * s.uniform().sqrt();
            let t = 2.0 * std::f64::consts::PI * s.uniform();
            [r * t.cos(), r * t.sin(), s.normal(), 0.06 + 0.06 * s.uniform()]
        })
        .collect();
    Image::from_fn(size, 1.0, |x, y| {
        blobs
            .iter()
            .map(|&[cx, cy, a, w]| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * w * w)).exp())
            .sum()
    })
}

fn diagonal_convolution(basis: &BasisSpec) -> Outcome {
    let l = basis.grid_size();
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let img = blob_image(l, seed);
        let alpha = basis.expand(&img).unwrap();
        for width in [0.02, 0.05, 0.1] {
            let transfer = |w: f64| (-0.5 * (w * width).powi(2)).exp();
            let fast = basis
                .synthesize(&basis.radial_convolve(&alpha, &basis.radial_weights(transfer)).unwrap())
                .unwrap();
            let slow = spatial_convolve(&img, transfer);
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..l {
                for j in 0..l {
                    let (x, y) = (pixel_coordinate(i, l), pixel_coordinate(j, l));
                    if x * x + y * y <= 1.0 {
                        num += (fast.get(i, j) - slow.get(i, j)).powi(2);
                        den += slow.get(i, j).powi(2);
                    }
                }
            }
            worst = worst.max((num / den).sqrt());
        }
    }
    outcome(
        worst <= 1e-3,
        format!("L={l}, 5 images x 3 Gaussian kernels, max relative L2 {worst:.2e} (<= 1e-3)"),
    )
}

fn block_diagonality() -> Outcome {
    let basis = build_basis(16, 1.0).unwrap();
    let volume = make_phantom(16, 0).unwrap();
    let mut ratios = Vec::new();
    for seed in [11u64, 12, 13] {
        let mass = |n: usize| {
            let clean = clean_coefficients(&basis, &volume, n, seed).unwrap();
            let aug = rotation_augment(&basis, &clean, 1, seed).unwrap();
            offblock_mass(&basis, &dense_sample_covariance(&aug))
        };
        ratios.push(mass(2000) / mass(8000));
    }
    outcome(
        ratios.iter().all(|&r| r >= 1.7),
        format!("off-block mass ratio N=2000/8000 per seed {ratios:.3?} (each >= 1.7)"),
    )
}

fn consistency() -> Outcome {
    let basis = build_basis(32, 1.0).unwrap();
    let volume = make_phantom(32, 0).unwrap();
    let base = clean_coefficients(&basis, &volume, 10_000, 1001).unwrap();
    let reference = block_sample_covariance(&basis, &rotation_augment(&basis, &base, 10, 1002).unwrap());
    let mut norms: Vec<(usize, f64)> = (0..reference.num_blocks())
        .map(|n| (n, reference.block_norm(n)))
        .collect();
    norms.sort_by(|a, b| b.1.total_cmp(&a.1));
    let keep = reference.num_blocks().div_ceil(10);
    let top: Vec<usize> = norms[..keep].iter().map(|p| p.0).collect();
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); top.len()];
    for n_images in [500, 2000, 8000] {
        let d = make_dataset(&basis, &volume, &SimulationConfig::new(n_images, 16, Some(1.0), 7)).unwrap();
        let (prepared, timings) = prepare(&basis, &d).unwrap();
        let report = estimate(&basis, &prepared, None, timings).unwrap();
        let errs = block_relative_error(&report.covariance, &reference).unwrap();
        for (slot, &n) in top.iter().enumerate() {
            let e = errs.iter().find(|e| e.n == n).expect("reference block is nonzero");
            errors[slot].push(e.error);
        }
    }
    let monotone = errors.iter().all(|e| e.windows(2).all(|w| w[1] < w[0]));
    let shown: Vec<String> = top
        .iter()
        .zip(&errors)
        .map(|(n, e)| format!("n={n}: {:.3}/{:.3}/{:.3}", e[0], e[1], e[2]))
        .collect();
    outcome(
        monotone,
        format!("M=16, err_n over N=500/2000/8000 for top-decile blocks [{}] (strictly decreasing)", shown.join(", ")),
    )
}

fn denoising_gain() -> Outcome {
    let basis = build_basis(32, 1.0).unwrap();
    let volume = make_phantom(32, 0).unwrap();
    let d = make_dataset(&basis, &volume, &SimulationConfig::new(4000, 100, Some(0.1), 5)).unwrap();
    let (prepared, timings) = prepare(&basis, &d).unwrap();
    let report = estimate(&basis, &prepared, None, timings).unwrap();
    let selection: Vec<usize> = (0..d.num_images()).collect();
    let denoised = steercov::pipeline::denoise_selection(&basis, &prepared, &report, &selection).unwrap();
    let clean = d.clean.as_ref().unwrap();
    let naive: Vec<Image> = d
        .images
        .iter()
        .zip(&d.group_of)
        .map(|(img, &g)| {
            let h = d.filters[g].weights(&basis);
            let g_coef = basis.expand(img).unwrap();
            let inv: Vec<f64> = h
                .values()
                .iter()
                .map(|&v| if v.abs() >= 0.1 { 1.0 / v } else { 0.0 })
                .collect();
            basis.synthesize(&g_coef.weighted(&RadialWeightVec::from_vec(inv)).unwrap()).unwrap()
        })
        .collect();
    let f_den = frc_mean(&denoised, clean).unwrap();
    let f_noisy = frc_mean(&d.images, clean).unwrap();
    let f_naive = frc_mean(&naive, clean).unwrap();
    let low = basis.grid_size() / 4;
    let ringwise = f_den
        .rings
        .iter()
        .zip(&f_noisy.rings)
        .filter(|(a, _)| a.radius < low)
        .all(|(a, b)| a.value > b.value);
    let worst_gap = f_den
        .rings
        .iter()
        .zip(&f_noisy.rings)
        .filter(|(a, _)| a.radius < low)
        .map(|(a, b)| a.value - b.value)
        .fold(f64::INFINITY, f64::min);
    outcome(
        ringwise && f_den.mean() > f_naive.mean(),
        format!(
            "L=32 N=4000 M=100 SNR=0.1: min gain over noisy on rings < {low} {worst_gap:.3} (> 0); mean FRC denoised {:.3} vs naive CTF division {:.3} vs noisy {:.3}",
            f_den.mean(),
            f_naive.mean(),
            f_noisy.mean()
        ),
    )
}

fn bench_flags(dir: &std::path::Path, size: usize, num_images: usize, groups: Vec<usize>) -> RunConfig {
    let flags = Flags {
        size,
        num_images,
        bench_groups: groups,
        snr: 1.0,
        out: dir.to_path_buf(),
        force: true,
        ..Flags::default()
    };
    RunConfig::new(Command::Bench, flags)
}

fn runtime_independence() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let fast = cmd_bench(&bench_flags(dir.path(), 32, 2000, vec![1, 2000])).unwrap();
    let (a, b) = (fast[0].t_fast, fast[1].t_fast);
    let ratio = a.max(b) / a.min(b);
    let cg = cmd_bench(&bench_flags(dir.path(), 8, 256, vec![1, 4, 16, 64])).unwrap();
    let t_cg: Vec<f64> = cg.iter().map(|r| r.t_cg.unwrap()).collect();
    let monotone = t_cg.windows(2).all(|w| w[1] > w[0]);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        ratio <= 1.5 && monotone && secs < 300.0,
        format!(
            "accumulate+solve L=32 N=2000: M=1 {a:.2e}s, M=2000 {b:.2e}s, ratio {ratio:.2} (<= 1.5); CG L=8 N=256 over M=1/4/16/64 [{}] (increasing); {secs:.0}s (< 300s)",
            sci(&t_cg)
        ),
    )
}

fn scaling_exponent(big: &BasisSpec) -> Outcome {
    let mut points = Vec::new();
    for size in [16usize, 32, 64] {
        let owned;
        let basis = if size == big.grid_size() {
            big
        } else {
            owned = build_basis(size, 1.0).unwrap();
            &owned
        };
        let mut s = Stream::new(size as u64, domain::TEST, 2);
        let coeffs: Vec<CoeffVec> = (0..500).map(|_| random_coeffs(basis, &mut s)).collect();
        let ctfs = random_ctfs(basis, 10, &mut s);
        let weights: Vec<&RadialWeightVec> = (0..500).map(|i| &ctfs[i % 10]).collect();
        let best = (0..3)
            .map(|_| fast_path(basis, &coeffs, &weights, 1.0, true).1)
            .fold(f64::INFINITY, f64::min);
        points.push(((size as f64).ln(), best.ln()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let times: Vec<f64> = points.iter().map(|p| p.1.exp()).collect();
    outcome(
        slope <= 3.6,
        format!(
            "N=500, L=16/32/64 best-of-3 times [{}]s, fitted exponent {slope:.2} (<= 3.6)",
            sci(&times)
        ),
    )
}

fn basis_quality(basis: &BasisSpec) -> Outcome {
    let mut s = Stream::new(8, domain::TEST, 3);
    let (mut round, mut adjoint, mut steer_mod, mut steer_back) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..4 {
        let a = random_coeffs(basis, &mut s);
        let back = basis.expand(&basis.synthesize(&a).unwrap()).unwrap();
        round = round.max(back.sub(&a).norm() / a.norm());

        let g = Image::from_vec(
            basis.grid_size(),
            1.0,
            (0..basis.grid_size().pow(2)).map(|_| s.normal()).collect(),
        )
        .unwrap();
        let lhs: f64 = basis.synthesize(&a).unwrap().data().iter().zip(g.data()).map(|(x, y)| x * y).sum();
        let at = basis.analysis_adjoint(&g).unwrap();
        let rhs: f64 = a.values().iter().zip(at.values()).map(|(x, y)| (x.conj() * y).re).sum();
        adjoint = adjoint.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));

        let phi = 2.0 * std::f64::consts::PI * s.uniform();
        let st = basis.steer(&a, phi).unwrap();
        for (x, y) in a.values().iter().zip(st.values()) {
            steer_mod = steer_mod.max((x.norm() - y.norm()).abs() / x.norm().max(f64::MIN_POSITIVE));
        }
        let undone = basis.steer(&st, -phi).unwrap();
        steer_back = steer_back.max(undone.sub(&a).norm() / a.norm());
    }

    let roots = basis.roots();
    let mut residual = 0.0f64;
    let mut ordered = true;
    let mut interlaced = true;
    let mut count = 0;
    for (n, k, lambda) in roots.iter() {
        count += 1;
        residual = residual.max(bessel_j(n, lambda).abs());
        if let Some(next) = roots.get(n, k + 1) {
            ordered &= next > lambda;
        }
        if let Some(up) = roots.get(n + 1, k) {
            interlaced &= lambda < up;
            if let Some(next) = roots.get(n, k + 1) {
                interlaced &= up < next;
            }
        }
    }
    let eps = f64::EPSILON;
    let pass = round <= 1e-8
        && adjoint <= 1e-12
        && steer_mod <= 4.0 * eps
        && steer_back <= 4.0 * eps
        && residual <= 1e-12
        && ordered
        && interlaced;
    outcome(
        pass,
        format!(
            "L={}: round trip {round:.1e} (<= 1e-8), adjoint {adjoint:.1e} (<= 1e-12), steering modulus drift {steer_mod:.1e} and inverse {steer_back:.1e} (<= 4 eps), {count} roots with max |J_n| {residual:.1e} (<= 1e-12), increasing {ordered}, interlacing {interlaced}",
            basis.grid_size()
        ),
    )
}

fn shrinkage_sanity(basis: &BasisSpec) -> Outcome {
    let k_max = basis.blocks().iter().map(|b| b.dim()).max().unwrap();
    let count = 10 * k_max;
    let noise = NoiseModel::white(1.0);
    let coeffs: Vec<CoeffVec> = (0..count)
        .map(|i| noise.draw(basis, &mut Stream::new(0, domain::NOISE, i as u64)))
        .collect();
    let data = CoeffDataset {
        coeffs,
        group_of: vec![0; count],
        group_weights: vec![RadialWeightVec::ones(basis.len())],
        sigma2: 1.0,
        whitening: RadialWeightVec::ones(basis.len()),
    };
    let report = estimate(basis, &data, Some(true), Default::default()).unwrap();
    let cov = &report.covariance;
    let mut psd = true;
    let mut zero = 0;
    for n in 0..cov.num_blocks() {
        let (values, _) = cov.block_eigen(n).unwrap();
        let scale = cov.block_norm(n).max(f64::MIN_POSITIVE);
        psd &= values.iter().all(|&v| v >= -1e-12 * scale);
        if cov.block(n).iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
            zero += 1;
        }
    }
    let frac = zero as f64 / cov.num_blocks() as f64;
    outcome(
        psd && frac >= 0.95,
        format!(
            "pure noise L={} N={count}: all blocks PSD {psd}; {zero}/{} blocks exactly zero ({:.1}%, >= 95%)",
            basis.grid_size(),
            cov.num_blocks(),
            100.0 * frac
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for threads in [1usize, 4] {
        let data = dir.path().join(format!("data{threads}"));
        let est = dir.path().join(format!("est{threads}"));
        let sim = Flags {
            threads: Some(threads),
            seed: 3,
            out: data.clone(),
            ..Flags::default()
        };
        run(&RunConfig::new(Command::Simulate, sim.clone())).unwrap();
        let flags = Flags {
            input: Some(data),
            out: est.clone(),
            ..sim
        };
        run(&RunConfig::new(Command::Estimate, flags)).unwrap();
        files.push(std::fs::read(est.join(COVARIANCE_FILE)).unwrap());
    }
    outcome(
        files[0] == files[1],
        format!(
            "simulate + estimate (L=32 N=1000 M=10) with 1 and 4 threads: {} byte covariance files identical {}",
            files[0].len(),
            files[0] == files[1]
        ),
    )
}

fn main() {
    let big = build_basis(64, 1.0).expect("L=64 basis");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("closed-form correctness", Box::new(closed_form_correctness)),
        ("diagonal convolution", Box::new(|| diagonal_convolution(&big))),
        ("block diagonality", Box::new(block_diagonality)),
        ("consistency", Box::new(consistency)),
        ("denoising gain", Box::new(denoising_gain)),
        ("runtime independent of M", Box::new(runtime_independence)),
        ("scaling exponent", Box::new(|| scaling_exponent(&big))),
        ("basis quality", Box::new(|| basis_quality(&big))),
        ("shrinkage sanity", Box::new(|| shrinkage_sanity(&big))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.1}s]",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
