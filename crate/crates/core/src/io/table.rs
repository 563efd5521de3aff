//! CSV metric tables and PNG previews.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub index: i64,
    pub value: f64,
    pub count: u64,
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("metric,index,value,count\n");
    for r in rows {
        writeln!(out, "{},{},{:e},{}", r.metric, r.index, r.value, r.count).expect("string write");
    }
    out
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<()> {
    fs::write(path, metrics_csv(rows))?;
    Ok(())
}

/// 8-bit grayscale preview, linearly stretched from min to max. Not
/// quantitative.
pub fn preview_bytes(img: &Image) -> Vec<u8> {
    let (lo, hi) = img
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    img.data()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect()
}

pub fn write_png_preview(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let l = img.size() as u32;
    let buf = image::GrayImage::from_raw(l, l, preview_bytes(img))
        .ok_or_else(|| Error::Encode("preview buffer size".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Encode(e.to_string()))
}
