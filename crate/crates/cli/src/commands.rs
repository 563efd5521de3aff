//! Subcommand implementations. Each writes into `flags.out` and returns a
//! short summary.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use steercov::covariance::{eigenimages, EstimationReport};
use steercov::io::dataset::{read_sidecar, IMAGES_FILE, SIDECAR_FILE};
use steercov::io::{
    load_report, read_dataset, save_report, write_block_matrix, write_dataset, write_metrics_csv,
    write_mrc, write_png_preview, MetricRow, MrcStack,
};
use steercov::metrics::frc_mean;
use steercov::oracles::{lstsq_cg, CgOptions, OracleInstance};
use steercov::pipeline::{denoise_selection, estimate, prepare};
use steercov::simulate::{default_pixel_size, make_dataset, make_phantom, SimulationConfig};
use steercov::{BasisConfig, BasisSpec, Dataset};

use crate::config::{Command, RunConfig};
use crate::plot::plot_bench;

pub const REPORT_FILE: &str = "report.json";
pub const COVARIANCE_FILE: &str = "covariance.scov";
pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const DENOISED_FILE: &str = "denoised.mrc";
pub const EIGENIMAGES_FILE: &str = "eigenimages.mrc";
pub const EIGENVALUES_FILE: &str = "eigenimages.csv";
pub const BENCH_CSV: &str = "bench.csv";
pub const BENCH_PLOT: &str = "bench.png";

/// Validates `cfg`, then runs its subcommand on a thread pool of the
/// requested size.
pub fn run(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads()? {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().context("building thread pool")?;
    pool.install(|| match cfg.command {
        Command::Simulate => cmd_simulate(cfg),
        Command::Estimate => cmd_estimate(cfg),
        Command::Denoise => cmd_denoise(cfg),
        Command::Eigenimages => cmd_eigenimages(cfg),
        Command::Bench => cmd_bench(cfg).map(|rows| format!("bench: {} rows", rows.len())),
    })
}

/// Creates `dir`, refusing to overwrite any of `files` unless forced.
fn prepare_out(dir: &Path, files: &[&str], force: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if !force {
        for f in files {
            let p = dir.join(f);
            if p.exists() {
                bail!("{} already exists (pass --force to overwrite)", p.display());
            }
        }
    }
    Ok(())
}

fn write_run_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let text = serde_json::to_string_pretty(&cfg.to_json())?;
    fs::write(dir.join(RUN_CONFIG_FILE), text + "\n")?;
    Ok(())
}

fn basis_for(size: usize, band_ratio: f64, pixel_size: f64) -> Result<BasisSpec> {
    Ok(BasisSpec::new(
        BasisConfig::new(size, band_ratio).with_pixel_size(pixel_size),
    )?)
}

/// Rebuilds the basis a report was estimated in and checks its hash.
pub fn basis_for_report(report: &EstimationReport) -> Result<BasisSpec> {
    let basis = basis_for(report.grid_size, report.band_ratio, report.pixel_size)?;
    ensure!(
        basis.hash_hex() == report.basis_hash,
        "report basis hash {} does not match the rebuilt basis {}",
        report.basis_hash,
        basis.hash_hex()
    );
    Ok(basis)
}

fn simulation(cfg: &RunConfig, num_groups: usize) -> SimulationConfig {
    let f = &cfg.flags;
    let mut sim = SimulationConfig::new(f.num_images, num_groups, Some(f.snr), f.seed);
    sim.noise = f.noise.into();
    sim
}

pub fn simulate_dataset(cfg: &RunConfig, basis: &BasisSpec, num_groups: usize) -> Result<Dataset> {
    let volume = make_phantom(cfg.flags.size, cfg.flags.seed)?;
    Ok(make_dataset(basis, &volume, &simulation(cfg, num_groups))?)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<String> {
    let f = &cfg.flags;
    let out = &f.out;
    prepare_out(out, &[IMAGES_FILE, SIDECAR_FILE], f.force)?;
    let basis = basis_for(f.size, f.band_ratio, default_pixel_size(f.size))?;
    let data = simulate_dataset(cfg, &basis, f.num_groups)?;
    write_dataset(out, &data, cfg.to_json())?;
    write_run_config(out, cfg)?;
    Ok(format!(
        "simulate: {} images of {}x{} in {} groups, measured snr {}",
        data.num_images(),
        f.size,
        f.size,
        data.num_groups(),
        data.measured_snr.map_or("n/a".into(), |s| format!("{s:.4}"))
    ))
}

fn load_input(cfg: &RunConfig) -> Result<(BasisSpec, Dataset)> {
    let input = cfg.input()?;
    let sidecar = read_sidecar(input).with_context(|| format!("reading dataset {}", input.display()))?;
    let data = read_dataset(input)?;
    let basis = basis_for(sidecar.grid_size, cfg.flags.band_ratio, sidecar.pixel_size)?;
    Ok((basis, data))
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<String> {
    let out = &cfg.flags.out;
    prepare_out(out, &[REPORT_FILE, COVARIANCE_FILE], cfg.flags.force)?;
    let (basis, data) = load_input(cfg)?;
    let (prepared, timings) = prepare(&basis, &data)?;
    let report = estimate(&basis, &prepared, cfg.shrink(), timings)?;
    save_report(&report, out.join(REPORT_FILE))?;
    write_block_matrix(&report.covariance, out.join(COVARIANCE_FILE))?;
    write_run_config(out, cfg)?;
    let t = &report.timings;
    Ok(format!(
        "estimate: N={} M={} sigma2={:.4e} delta={:.3e} shrink={} T_ffb={:.3}s T_ctf={:.3}s T_cov={:.3}s",
        report.num_images,
        report.num_groups,
        report.sigma2,
        report.delta,
        report.shrink,
        t["ffb"],
        t["ctf"],
        t["cov"]
    ))
}

pub fn cmd_denoise(cfg: &RunConfig) -> Result<String> {
    let out = &cfg.flags.out;
    prepare_out(out, &[DENOISED_FILE], cfg.flags.force)?;
    let report = load_report(cfg.report_path()?)?;
    let (_, data) = load_input(cfg)?;
    let basis = basis_for_report(&report)?;
    let selection = cfg.flags.select.expect("validated").indices();
    if let Some(&bad) = selection.iter().find(|&&i| i >= data.num_images()) {
        bail!("selected image {bad} but the dataset has {} images", data.num_images());
    }
    let (prepared, _) = prepare(&basis, &data)?;
    let denoised = denoise_selection(&basis, &prepared, &report, &selection)?;
    write_mrc(
        &MrcStack::from_images(&denoised)?.with_label("wiener denoised"),
        out.join(DENOISED_FILE),
    )?;
    for (img, &i) in denoised.iter().zip(&selection) {
        write_png_preview(out.join(format!("denoised_{i:06}.png")), img)?;
    }
    let mut summary = format!("denoise: {} images", denoised.len());
    if let Some(clean) = &data.clean {
        let clean_sel: Vec<_> = selection.iter().map(|&i| clean[i].clone()).collect();
        let noisy_sel: Vec<_> = selection.iter().map(|&i| data.images[i].clone()).collect();
        let after = frc_mean(&denoised, &clean_sel)?;
        let before = frc_mean(&noisy_sel, &clean_sel)?;
        let mut rows = Vec::new();
        for (name, curve) in [("frc_denoised", &after), ("frc_noisy", &before)] {
            rows.extend(curve.rings.iter().map(|r| MetricRow {
                metric: name.into(),
                index: r.radius as i64,
                value: r.value,
                count: r.count as u64,
            }));
        }
        write_metrics_csv(out.join("frc.csv"), &rows)?;
        summary += &format!(", mean FRC {:.3} (noisy {:.3})", after.mean(), before.mean());
    }
    write_run_config(out, cfg)?;
    Ok(summary)
}

pub fn cmd_eigenimages(cfg: &RunConfig) -> Result<String> {
    let out = &cfg.flags.out;
    prepare_out(out, &[EIGENIMAGES_FILE, EIGENVALUES_FILE], cfg.flags.force)?;
    let report = load_report(cfg.report_path()?)?;
    let basis = basis_for_report(&report)?;
    let eig = eigenimages(&report.covariance, &basis, cfg.flags.top)?;
    let images: Vec<_> = eig.iter().map(|e| e.image.clone()).collect();
    write_mrc(
        &MrcStack::from_images(&images)?.with_label("eigenimages"),
        out.join(EIGENIMAGES_FILE),
    )?;
    let mut csv = String::from("rank,eigenvalue,n\n");
    for (rank, e) in eig.iter().enumerate() {
        write_png_preview(out.join(format!("eigenimage_{:02}.png", rank + 1)), &e.image)?;
        csv += &format!("{},{:e},{}\n", rank + 1, e.eigenvalue, e.n);
    }
    fs::write(out.join(EIGENVALUES_FILE), csv)?;
    write_run_config(out, cfg)?;
    Ok(format!("eigenimages: wrote {}", eig.len()))
}

/// One line of the benchmark table. `t_cg` is absent when the group count
/// exceeds the iterative baseline's image count.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub num_groups: usize,
    pub t_fast: f64,
    pub t_cg: Option<f64>,
    pub cg_iterations: Option<usize>,
}

/// Repeated CG solves per timing sample; one solve at the default size
/// takes well under a millisecond.
const CG_INNER: usize = 10;

/// Times the closed-form solver (accumulate + solve, best of `repeats`)
/// against the iterative baseline at each group count.
pub fn cmd_bench(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    let f = &cfg.flags;
    let out = &f.out;
    prepare_out(out, &[BENCH_CSV, BENCH_PLOT], f.force)?;
    let basis = basis_for(f.size, f.band_ratio, default_pixel_size(f.size))?;
    let cg_basis = basis_for(f.cg_size, f.band_ratio, default_pixel_size(f.cg_size))?;
    let mut cg_cfg = cfg.clone();
    cg_cfg.flags.size = f.cg_size;
    cg_cfg.flags.num_images = f.cg_images;

    let mut rows = Vec::new();
    for &m in &f.bench_groups {
        let data = simulate_dataset(cfg, &basis, m)?;
        let (prepared, _) = prepare(&basis, &data)?;
        let mut t_fast = f64::INFINITY;
        for _ in 0..f.repeats {
            let r = estimate(&basis, &prepared, cfg.shrink(), Default::default())?;
            t_fast = t_fast.min(r.timings["accumulate"] + r.timings["solve"]);
        }
        let (t_cg, cg_iterations) = if m <= f.cg_images {
            let small = simulate_dataset(&cg_cfg, &cg_basis, m)?;
            let (p, _) = prepare(&cg_basis, &small)?;
            let inst = OracleInstance {
                coeffs: p.coeffs,
                group_of: p.group_of,
                group_weights: p.group_weights,
                sigma2: p.sigma2,
            };
            let mut best = f64::INFINITY;
            let mut iterations = 0;
            for _ in 0..f.repeats {
                let t = Instant::now();
                for _ in 0..CG_INNER {
                    iterations = lstsq_cg(&cg_basis, &inst, CgOptions::default())?.iterations;
                }
                best = best.min(t.elapsed().as_secs_f64() / CG_INNER as f64);
            }
            (Some(best), Some(iterations))
        } else {
            (None, None)
        };
        log::info!("bench M={m}: fast {t_fast:.4e}s, cg {t_cg:?}");
        rows.push(BenchRow {
            num_groups: m,
            t_fast,
            t_cg,
            cg_iterations,
        });
    }

    fs::write(out.join(BENCH_CSV), bench_csv(&rows))?;
    plot_bench(&out.join(BENCH_PLOT), &rows)?;
    write_run_config(out, cfg)?;
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("M,t_fast,t_cg,cg_iterations\n");
    for r in rows {
        let opt = |v: Option<String>| v.unwrap_or_default();
        s += &format!(
            "{},{:e},{},{}\n",
            r.num_groups,
            r.t_fast,
            opt(r.t_cg.map(|t| format!("{t:e}"))),
            opt(r.cg_iterations.map(|i| i.to_string()))
        );
    }
    s
}

