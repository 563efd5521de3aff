//! JSON persistence of [`EstimationReport`].

use std::fs;
use std::path::Path;

use crate::covariance::{EstimationReport, REPORT_VERSION};
use crate::error::{Error, Result};

fn check_finite(report: &EstimationReport) -> Result<()> {
    let bad = |what: &str| Err(Error::InvalidParameter(format!("{what} is not finite")));
    if !report.sigma2.is_finite() {
        return bad("sigma2");
    }
    if !report.delta.is_finite() {
        return bad("delta");
    }
    if !report.band_ratio.is_finite() || !report.pixel_size.is_finite() {
        return bad("basis parameters");
    }
    if report.condition_numbers.iter().any(|v| !v.is_finite()) {
        return bad("a condition number");
    }
    if let Some((k, _)) = report.timings.iter().find(|(_, v)| !v.is_finite()) {
        return bad(&format!("timing `{k}`"));
    }
    if report.mean.values().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return bad("the mean");
    }
    for b in report.covariance.blocks() {
        if b.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return bad("the covariance");
        }
    }
    Ok(())
}

pub fn report_to_json(report: &EstimationReport) -> Result<String> {
    check_finite(report)?;
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn report_from_json(text: &str) -> Result<EstimationReport> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Schema("missing field `version`".into()))?;
    if version != REPORT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            expected: REPORT_VERSION,
            found: version as u32,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))
}

pub fn save_report(report: &EstimationReport, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, report_to_json(report)?)?;
    Ok(())
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EstimationReport> {
    report_from_json(&fs::read_to_string(path)?)
}
