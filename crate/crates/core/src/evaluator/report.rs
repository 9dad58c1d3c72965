//! Report files: metrics JSON, 8-bit PGM confusion heat maps and 16-bit
//! PPM saliency frames (maxval 256, so the top of the saliency range is
//! stored exactly).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{fmt_err, Result};
use crate::evaluator::metrics::ConfusionMatrix;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub half_width: Option<f64>,
}

impl MetricValue {
    pub fn exact(value: f64) -> Self {
        Self { value, half_width: None }
    }

    pub fn with_ci(value: f64, half_width: f64) -> Self {
        Self {
            value,
            half_width: Some(half_width),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub normalized: Vec<Vec<f64>>,
}

impl ConfusionReport {
    pub fn new(classes: Vec<String>, m: &ConfusionMatrix) -> Self {
        Self {
            classes,
            counts: m.counts.clone(),
            normalized: m.normalized(),
        }
    }

    pub fn matrix(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            counts: self.counts.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metrics: BTreeMap<String, MetricValue>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confusion: Option<ConfusionReport>,
    /// Extra structured sections (match series, bias vectors, ...).
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub sections: BTreeMap<String, serde_json::Value>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| fmt_err!("report: {e}"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| fmt_err!("report: {e}"))
    }
}

/// Binary PPM with maxval 256: two big-endian bytes per sample.
pub fn encode_ppm16(map: &Tensor) -> Result<Vec<u8>> {
    let (h, w, c) = map.hwc()?;
    if c != 3 {
        return Err(fmt_err!("PPM needs 3 channels, map has {c}"));
    }
    let mut out = format!("P6\n{w} {h}\n256\n").into_bytes();
    for &v in map.data() {
        let s = v.round().clamp(0.0, 256.0) as u16;
        out.extend_from_slice(&s.to_be_bytes());
    }
    Ok(out)
}

fn header_fields(bytes: &[u8], count: usize) -> Result<(Vec<usize>, &[u8])> {
    let mut fields = Vec::with_capacity(count);
    let mut i = 0;
    while fields.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(fmt_err!("truncated image header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| fmt_err!("bad header"))?.to_string());
    }
    // Exactly one whitespace byte separates the header from the raster.
    let rest = bytes.get(i + 1..).ok_or_else(|| fmt_err!("truncated image header"))?;
    let magic = fields[0].clone();
    let nums = fields[1..]
        .iter()
        .map(|f| f.parse::<usize>().map_err(|_| fmt_err!("bad header field {f:?} after {magic}")))
        .collect::<Result<Vec<_>>>()?;
    Ok((nums, rest))
}

pub fn decode_ppm16(bytes: &[u8]) -> Result<Tensor> {
    if !bytes.starts_with(b"P6") {
        return Err(fmt_err!("not a binary PPM"));
    }
    let (nums, raster) = header_fields(bytes, 4)?;
    let (w, h, maxval) = (nums[0], nums[1], nums[2]);
    if maxval != 256 || raster.len() != w * h * 6 {
        return Err(fmt_err!("expected a {w}x{h} PPM with maxval 256"));
    }
    let data = raster
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32)
        .collect();
    Tensor::new(&[h, w, 3], data)
}

/// Row-normalized confusion as an 8-bit grayscale image, one pixel per cell.
pub fn encode_confusion_pgm(m: &ConfusionMatrix) -> Vec<u8> {
    let n = m.classes();
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    for row in m.normalized() {
        out.extend(row.iter().map(|&v| (v * 255.0).round() as u8));
    }
    out
}

/// Writes `report.json`, `confusion.pgm` when a confusion matrix is present
/// and one PPM per saliency map. Returns the paths written.
pub fn export_report(report: &Report, saliency: &[(String, Tensor)], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json = dir.join("report.json");
    fs::write(&json, report.to_json()? + "\n")?;
    written.push(json);
    if let Some(c) = &report.confusion {
        let p = dir.join("confusion.pgm");
        fs::write(&p, encode_confusion_pgm(&c.matrix()))?;
        written.push(p);
    }
    for (name, map) in saliency {
        let p = dir.join(format!("{name}.ppm"));
        fs::write(&p, encode_ppm16(map)?)?;
        written.push(p);
    }
    Ok(written)
}
