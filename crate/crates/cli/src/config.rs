//! Run configuration shared by every subcommand.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use steercov::simulate::NoiseKind;

pub const THREADS_ENV: &str = "STEERABLE_COV_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Simulate a CTF-corrupted projection dataset
    Simulate,
    /// Estimate mean and block-diagonal covariance of a dataset
    Estimate,
    /// Wiener-denoise selected images of a dataset
    Denoise,
    /// Write the top eigenimages of an estimated covariance
    Eigenimages,
    /// Time the estimator against the iterative baseline over group counts
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseArg {
    None,
    White,
    Colored,
}

impl From<NoiseArg> for NoiseKind {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::None => NoiseKind::None,
            NoiseArg::White => NoiseKind::White,
            NoiseArg::Colored => NoiseKind::Colored,
        }
    }
}

/// Inclusive `start:step:stop` range of image indices; a single index is
/// also accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub start: usize,
    pub step: usize,
    pub stop: usize,
}

impl Selection {
    pub fn indices(&self) -> Vec<usize> {
        (self.start..=self.stop).step_by(self.step).collect()
    }
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad selection {s:?}: {e}"))
        };
        let sel = match parts.as_slice() {
            [i] => {
                let i = num(i)?;
                Selection { start: i, step: 1, stop: i }
            }
            [a, b, c] => Selection {
                start: num(a)?,
                step: num(b)?,
                stop: num(c)?,
            },
            _ => return Err(format!("selection {s:?} is not start:step:stop")),
        };
        if sel.step == 0 {
            return Err("selection step must be positive".into());
        }
        if sel.stop < sel.start {
            return Err(format!("selection stop {} precedes start {}", sel.stop, sel.start));
        }
        Ok(sel)
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.step, self.stop)
    }
}

/// Flags accepted by all subcommands; unused ones are ignored.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Flags {
    /// Image side length in pixels
    #[arg(long, global = true, default_value_t = 32)]
    pub size: usize,
    /// Number of images to simulate (also N for bench)
    #[arg(long, global = true, default_value_t = 1000)]
    pub num_images: usize,
    /// Number of defocus groups
    #[arg(long, global = true, default_value_t = 10)]
    pub num_groups: usize,
    /// Signal-to-noise ratio of simulated data
    #[arg(long, global = true, default_value_t = 1.0)]
    pub snr: f64,
    /// Noise spectrum of simulated data
    #[arg(long, global = true, value_enum, default_value_t = NoiseArg::Colored)]
    pub noise: NoiseArg,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of the grid Nyquist frequency kept by the basis
    #[arg(long, global = true, default_value_t = 1.0)]
    pub band_ratio: f64,
    /// Shrink eigenvalues (default: on whenever the data is noisy)
    #[arg(long, global = true, overrides_with = "no_shrink")]
    pub shrink: bool,
    #[arg(long, global = true, overrides_with = "shrink")]
    pub no_shrink: bool,
    /// Worker threads (falls back to STEERABLE_COV_THREADS)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Dataset directory to read
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Estimation report, or the directory holding report.json
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Images to denoise, start:step:stop with stop inclusive
    #[arg(long, global = true)]
    pub select: Option<Selection>,
    /// Number of eigenimages to write
    #[arg(long, global = true, default_value_t = 6)]
    pub top: usize,
    /// Group counts timed by bench, comma separated
    #[arg(long, global = true, value_delimiter = ',', default_values_t = [1usize, 4, 16, 64])]
    pub bench_groups: Vec<usize>,
    /// Image size of the iterative baseline in bench
    #[arg(long, global = true, default_value_t = 8)]
    pub cg_size: usize,
    /// Image count of the iterative baseline in bench
    #[arg(long, global = true, default_value_t = 256)]
    pub cg_images: usize,
    /// Timing repetitions in bench; the fastest is kept
    #[arg(long, global = true, default_value_t = 3)]
    pub repeats: usize,
    /// Overwrite existing outputs
    #[arg(long, global = true)]
    pub force: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            size: 32,
            num_images: 1000,
            num_groups: 10,
            snr: 1.0,
            noise: NoiseArg::Colored,
            seed: 0,
            band_ratio: 1.0,
            shrink: false,
            no_shrink: false,
            threads: None,
            input: None,
            report: None,
            out: PathBuf::from("out"),
            select: None,
            top: 6,
            bench_groups: vec![1, 4, 16, 64],
            cg_size: 8,
            cg_images: 256,
            repeats: 3,
            force: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(flatten)]
    pub flags: Flags,
}

impl RunConfig {
    pub fn new(command: Command, flags: Flags) -> Self {
        Self { command, flags }
    }

    /// `Some(true)` / `Some(false)` when forced, `None` for the default.
    pub fn shrink(&self) -> Option<bool> {
        match (self.flags.shrink, self.flags.no_shrink) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }

    pub fn threads(&self) -> Result<Option<usize>> {
        if let Some(t) = self.flags.threads {
            return Ok(Some(t));
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => {
                let t = v
                    .trim()
                    .parse()
                    .with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
                Ok(Some(t))
            }
            _ => Ok(None),
        }
    }

    pub fn input(&self) -> Result<&Path> {
        self.flags
            .input
            .as_deref()
            .context("--input <dataset dir> is required")
    }

    pub fn report_path(&self) -> Result<PathBuf> {
        let p = self
            .flags
            .report
            .as_deref()
            .context("--report <report.json or estimate dir> is required")?;
        Ok(if p.is_dir() { p.join("report.json") } else { p.to_path_buf() })
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.flags;
        if let Some(t) = self.threads()? {
            ensure!(t >= 1, "thread count must be at least 1");
        }
        ensure!(
            f.band_ratio > 0.0 && f.band_ratio <= 1.0,
            "band ratio must lie in (0, 1], got {}",
            f.band_ratio
        );
        match self.command {
            Command::Simulate | Command::Bench => {
                ensure!(
                    f.size >= 8 && f.size % 2 == 0,
                    "size must be even and at least 8, got {}",
                    f.size
                );
                ensure!(f.num_images >= 1, "need at least one image");
                ensure!(
                    f.snr > 0.0 && f.snr.is_finite(),
                    "snr must be positive and finite, got {}",
                    f.snr
                );
            }
            _ => {}
        }
        match self.command {
            Command::Simulate => ensure!(
                f.num_groups >= 1 && f.num_groups <= f.num_images,
                "need 1 <= num-groups ({}) <= num-images ({})",
                f.num_groups,
                f.num_images
            ),
            Command::Estimate => {
                self.input()?;
            }
            Command::Denoise => {
                self.input()?;
                self.report_path()?;
                ensure!(f.select.is_some(), "--select start:step:stop is required");
            }
            Command::Eigenimages => {
                self.report_path()?;
                ensure!(f.top >= 1, "--top must be at least 1");
            }
            Command::Bench => {
                ensure!(!f.bench_groups.is_empty(), "--bench-groups is empty");
                for &m in &f.bench_groups {
                    if m == 0 || m > f.num_images {
                        bail!("bench group count {m} outside 1..={}", f.num_images);
                    }
                }
                ensure!(
                    f.cg_size >= 8 && f.cg_size % 2 == 0 && f.cg_images >= 1,
                    "bad iterative baseline size"
                );
                ensure!(f.repeats >= 1, "--repeats must be at least 1");
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config is plain data")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_is_inclusive() {
        let s: Selection = "0:100:1000".parse().unwrap();
        assert_eq!(s.indices().len(), 11);
        assert_eq!(s.indices().last(), Some(&1000));
        let one: Selection = "7".parse().unwrap();
        assert_eq!(one.indices(), vec![7]);
        assert_eq!("3:2:8".parse::<Selection>().unwrap().indices(), vec![3, 5, 7]);
        assert!("1:0:4".parse::<Selection>().is_err());
        assert!("5:1:4".parse::<Selection>().is_err());
        assert!("1:2".parse::<Selection>().is_err());
    }

    #[test]
    fn validation_catches_bad_flags() {
        let mut f = Flags::default();
        f.num_groups = 2000;
        assert!(RunConfig::new(Command::Simulate, f.clone()).validate().is_err());
        f.num_groups = 10;
        assert!(RunConfig::new(Command::Simulate, f.clone()).validate().is_ok());
        assert!(RunConfig::new(Command::Estimate, f.clone()).validate().is_err());
        f.band_ratio = 1.5;
        assert!(RunConfig::new(Command::Simulate, f).validate().is_err());
    }

    #[test]
    fn shrink_flags() {
        let mut f = Flags::default();
        assert_eq!(RunConfig::new(Command::Estimate, f.clone()).shrink(), None);
        f.no_shrink = true;
        assert_eq!(RunConfig::new(Command::Estimate, f.clone()).shrink(), Some(false));
        f.shrink = true;
        f.no_shrink = false;
        assert_eq!(RunConfig::new(Command::Estimate, f).shrink(), Some(true));
    }
}
