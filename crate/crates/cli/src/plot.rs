//! Runtime-versus-group-count chart for `bench`. Drawn without text so no
//! font backend is needed: closed-form times in blue, iterative baseline
//! in red, both axes logarithmic. The numbers live in the CSV.

use std::path::Path;

use anyhow::{anyhow, Result};
use plotters::prelude::*;

use crate::commands::BenchRow;

pub fn plot_bench(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let err = |e: &dyn std::fmt::Display| anyhow!("plotting {}: {e}", path.display());
    let times: Vec<f64> = rows
        .iter()
        .flat_map(|r| std::iter::once(r.t_fast).chain(r.t_cg))
        .filter(|t| *t > 0.0)
        .collect();
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    let (lo, hi) = if lo < hi { (lo / 2.0, hi * 2.0) } else { (1e-6, 1.0) };
    let m_max = rows.iter().map(|r| r.num_groups).max().unwrap_or(1) as f64;

    let root = BitMapBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(30)
        .build_cartesian_2d((0.5..m_max * 2.0).log_scale(), (lo..hi).log_scale())
        .map_err(|e| err(&e))?;
    chart
        .plotting_area()
        .draw(&PathElement::new(
            vec![(0.5, lo), (m_max * 2.0, lo), (m_max * 2.0, hi), (0.5, hi), (0.5, lo)],
            BLACK,
        ))
        .map_err(|e| err(&e))?;
    let fast: Vec<(f64, f64)> = rows.iter().map(|r| (r.num_groups as f64, r.t_fast)).collect();
    let cg: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.t_cg.map(|t| (r.num_groups as f64, t)))
        .collect();
    for (series, color) in [(fast, BLUE), (cg, RED)] {
        chart
            .draw_series(LineSeries::new(series.clone(), color.stroke_width(2)))
            .map_err(|e| err(&e))?;
        chart
            .draw_series(series.iter().map(|&p| Circle::new(p, 4, color.filled())))
            .map_err(|e| err(&e))?;
    }
    root.present().map_err(|e| err(&e))?;
    Ok(())
}
