//! Per-sample rationale reports and their JSON serialization.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::Span;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub token_f1: Option<f64>,
    pub iou_f1: Option<f64>,
    pub sufficiency: f64,
    pub comprehensiveness: f64,
}

/// Everything one explanation run produced for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleReport {
    pub sample_id: usize,
    pub method: String,
    /// Soft per-position relevance scores.
    pub scores: Vec<f64>,
    /// Binarized rationale spans (half-open intervals).
    pub spans: Vec<Span>,
    pub metrics: ReportMetrics,
    pub sufficiency_trace: Vec<f64>,
    pub comprehensiveness_trace: Vec<f64>,
    /// Hash of the run configuration that produced this report.
    pub config_fingerprint: String,
}

impl RationaleReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Stable 64-bit FNV-1a fingerprint of a serializable config, as hex.
/// Identical configs fingerprint identically across runs and platforms.
pub fn fingerprint_json<S: Serialize>(value: &S) -> Result<String> {
    let json = serde_json::to_string(value)?;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in json.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{hash:016x}"))
}
