//! On-disk formats.
//!
//! A dataset directory holds
//!
//! ```text
//! manifest.json            layout, domain, frequencies, timestamps, config echo
//! windows/window_0000.csv  channel × frequency power, one file per window
//! truth/field.csv          window × channel excitability (simulated data only)
//! truth/g7.csv             per-window g7 log-offset
//! truth/coeffs.csv         window × mode coefficients, when defined
//! ```
//!
//! CSV files follow RFC 4180 (CRLF line endings, header row). Floats are
//! written with 17 significant digits so that reading and re-writing a file
//! reproduces it byte for byte. A results directory holds `results.json`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ElectrodeLayout, SpectralWindow};
use crate::error::{Error, Result};
use crate::field::DomainSpec;
use crate::filter::{BeliefTrajectory, TrajectoryEntry};
use crate::harness::settings::FilterSettings;
use crate::harness::sim::SimConfig;
use crate::vl::{GaussianBelief, InversionReport};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub layout: ElectrodeLayout,
    pub domain: DomainSpec,
    pub channel_ids: Vec<String>,
    pub freqs_hz: Vec<f64>,
    pub timestamps: Vec<f64>,
    pub config: Option<SimConfig>,
    pub has_truth: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// `field[window][channel]`
    pub field: Vec<Vec<f64>>,
    pub g7_log_offset: Vec<f64>,
    /// `coeffs[window][mode]`
    pub coeffs: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    /// `windows[window][channel][freq]`
    pub windows: Vec<Vec<Vec<f64>>>,
    pub truth: Option<Truth>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        let n_ch = m.layout.n_channels();
        if m.channel_ids.len() != n_ch {
            return Err(Error::Format("channel id count does not match layout".into()));
        }
        if self.windows.len() != m.timestamps.len() {
            return Err(Error::Format(format!(
                "{} windows for {} timestamps",
                self.windows.len(),
                m.timestamps.len()
            )));
        }
        for (k, w) in self.windows.iter().enumerate() {
            if w.len() != n_ch || w.iter().any(|row| row.len() != m.freqs_hz.len()) {
                return Err(Error::Format(format!("window {k}: matrix shape does not match manifest")));
            }
            if w.iter().flatten().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Format(format!("window {k}: power must be finite and >= 0")));
            }
        }
        if let Some(t) = &self.truth {
            if t.field.len() != self.windows.len() || t.field.iter().any(|r| r.len() != n_ch) {
                return Err(Error::Format("truth field shape does not match manifest".into()));
            }
            if t.g7_log_offset.len() != self.windows.len() {
                return Err(Error::Format("truth g7 length does not match manifest".into()));
            }
        }
        if m.has_truth != self.truth.is_some() {
            return Err(Error::Format("has_truth flag disagrees with contents".into()));
        }
        Ok(())
    }

    pub fn spectral_windows(&self) -> Vec<SpectralWindow> {
        let positions = self.manifest.layout.positions();
        self.windows
            .iter()
            .zip(&self.manifest.timestamps)
            .map(|(power, &t)| SpectralWindow {
                t,
                positions: positions.clone(),
                freqs_hz: self.manifest.freqs_hz.clone(),
                power: power.clone(),
            })
            .collect()
    }

    /// SHA-256 of the canonical manifest serialization.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(manifest_bytes(&self.manifest)?)))
    }
}

fn manifest_bytes(m: &Manifest) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(m)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// 17 significant digits; round-trips every finite f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// RFC-4180 table with a header row and a string key in the first column.
pub fn write_csv(path: &Path, header: &[String], rows: &[(String, Vec<f64>)]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push_str("\r\n");
    for (key, values) in rows {
        out.push_str(key);
        for v in values {
            out.push(',');
            out.push_str(&format_float(*v));
        }
        out.push_str("\r\n");
    }
    write_file(path, out.as_bytes())
}

struct Table {
    header: Vec<String>,
    rows: Vec<(String, Vec<f64>)>,
}

fn read_csv(path: &Path) -> Result<Table> {
    let text = read_file(path)?;
    let mut lines = text.split("\r\n");
    let header: Vec<String> = lines
        .next()
        .filter(|h| !h.is_empty())
        .ok_or_else(|| Error::Format(format!("{}: missing header", path.display())))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let key = fields.next().unwrap_or_default().to_owned();
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Format(format!("{}: row {}: bad number {f:?}", path.display(), i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() + 1 != header.len() {
            return Err(Error::Format(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 1,
                values.len() + 1,
                header.len()
            )));
        }
        rows.push((key, values));
    }
    Ok(Table { header, rows })
}

fn window_path(dir: &Path, k: usize) -> std::path::PathBuf {
    dir.join("windows").join(format!("window_{k:04}.csv"))
}

fn index_rows(values: &[Vec<f64>]) -> Vec<(String, Vec<f64>)> {
    values
        .iter()
        .enumerate()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    let m = &ds.manifest;
    write_file(&dir.join("manifest.json"), &manifest_bytes(m)?)?;
    let mut header = vec!["channel".to_owned()];
    header.extend(m.freqs_hz.iter().map(|f| format_float(*f)));
    for (k, w) in ds.windows.iter().enumerate() {
        let rows: Vec<(String, Vec<f64>)> = m
            .channel_ids
            .iter()
            .cloned()
            .zip(w.iter().cloned())
            .collect();
        write_csv(&window_path(dir, k), &header, &rows)?;
    }
    if let Some(truth) = &ds.truth {
        let mut header = vec!["window".to_owned()];
        header.extend(m.channel_ids.iter().cloned());
        write_csv(&dir.join("truth").join("field.csv"), &header, &index_rows(&truth.field))?;
        let g7_rows: Vec<Vec<f64>> = truth.g7_log_offset.iter().map(|v| vec![*v]).collect();
        write_csv(
            &dir.join("truth").join("g7.csv"),
            &["window".to_owned(), "g7_log_offset".to_owned()],
            &index_rows(&g7_rows),
        )?;
        if let Some(coeffs) = &truth.coeffs {
            let n = coeffs.first().map_or(0, Vec::len);
            let mut header = vec!["window".to_owned()];
            header.extend((0..n).map(|i| format!("c{i}")));
            write_csv(&dir.join("truth").join("coeffs.csv"), &header, &index_rows(coeffs))?;
        }
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = read_file(&dir.join("manifest.json"))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest.json: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Format("manifest.json: missing format_version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::Version {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Format(format!("manifest.json: {e}")))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let mut windows = Vec::with_capacity(manifest.timestamps.len());
    for k in 0..manifest.timestamps.len() {
        let path = window_path(dir, k);
        let table = read_csv(&path)?;
        let freqs: Vec<f64> = table.header[1..]
            .iter()
            .map(|h| h.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("{}: bad frequency header", path.display())))?;
        if freqs != manifest.freqs_hz {
            return Err(Error::Format(format!("{}: frequencies differ from manifest", path.display())));
        }
        let ids: Vec<&String> = table.rows.iter().map(|(k, _)| k).collect();
        if ids.len() != manifest.channel_ids.len() || ids.iter().zip(&manifest.channel_ids).any(|(a, b)| *a != b) {
            return Err(Error::Format(format!("{}: channel ids differ from manifest", path.display())));
        }
        windows.push(table.rows.into_iter().map(|(_, v)| v).collect());
    }
    let truth = if manifest.has_truth {
        let values = |name: &str| -> Result<Vec<Vec<f64>>> {
            Ok(read_csv(&dir.join("truth").join(name))?
                .rows
                .into_iter()
                .map(|(_, v)| v)
                .collect())
        };
        let coeffs_path = dir.join("truth").join("coeffs.csv");
        Some(Truth {
            field: values("field.csv")?,
            g7_log_offset: values("g7.csv")?.into_iter().flatten().collect(),
            coeffs: if coeffs_path.exists() { Some(values("coeffs.csv")?) } else { None },
        })
    } else {
        None
    };
    let ds = Dataset {
        manifest,
        windows,
        truth,
    };
    ds.validate()?;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefRecord {
    pub mean: Vec<f64>,
    /// Row-major covariance.
    pub cov: Vec<Vec<f64>>,
}

impl From<&GaussianBelief> for BeliefRecord {
    fn from(b: &GaussianBelief) -> Self {
        BeliefRecord {
            mean: b.mean.iter().copied().collect(),
            cov: b.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

impl BeliefRecord {
    fn to_belief(&self) -> Result<GaussianBelief> {
        let n = self.mean.len();
        if self.cov.len() != n || self.cov.iter().any(|r| r.len() != n) {
            return Err(Error::Format("covariance shape does not match mean".into()));
        }
        Ok(GaussianBelief::new(
            DVector::from_column_slice(&self.mean),
            DMatrix::from_fn(n, n, |i, j| self.cov[i][j]),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub t: f64,
    pub prior: BeliefRecord,
    pub posterior: BeliefRecord,
    pub free_energy: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub regularized: bool,
    pub log_precision: f64,
    pub explained_variance: f64,
    pub predicted: Vec<f64>,
    pub observed: Vec<f64>,
}

/// Everything `invert` produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub format_version: u32,
    pub dataset_fingerprint: String,
    pub settings: FilterSettings,
    pub total_explained_variance: f64,
    pub windows: Vec<WindowRecord>,
}

impl ResultsBundle {
    pub fn new(traj: &BeliefTrajectory, dataset_fingerprint: String, settings: FilterSettings) -> Self {
        ResultsBundle {
            format_version: FORMAT_VERSION,
            dataset_fingerprint,
            settings,
            total_explained_variance: traj.total_explained_variance(),
            windows: traj
                .entries
                .iter()
                .map(|e| WindowRecord {
                    t: e.t,
                    prior: (&e.prior).into(),
                    posterior: (&e.report.posterior).into(),
                    free_energy: e.report.free_energy,
                    objective_trace: e.report.objective_trace.clone(),
                    iterations: e.report.iterations,
                    converged: e.report.converged,
                    regularized: e.report.regularized,
                    log_precision: e.report.log_precision,
                    explained_variance: e.report.explained_variance,
                    predicted: e.report.predicted.clone(),
                    observed: e.report.observed.clone(),
                })
                .collect(),
        }
    }

    pub fn trajectory(&self) -> Result<BeliefTrajectory> {
        let entries = self
            .windows
            .iter()
            .map(|w| {
                Ok(TrajectoryEntry {
                    t: w.t,
                    prior: w.prior.to_belief()?,
                    report: InversionReport {
                        posterior: w.posterior.to_belief()?,
                        free_energy: w.free_energy,
                        objective_trace: w.objective_trace.clone(),
                        iterations: w.iterations,
                        converged: w.converged,
                        regularized: w.regularized,
                        log_precision: w.log_precision,
                        predicted: w.predicted.clone(),
                        observed: w.observed.clone(),
                        explained_variance: w.explained_variance,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BeliefTrajectory { entries })
    }
}

pub fn results_bytes(bundle: &ResultsBundle) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(bundle)?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn write_results(bundle: &ResultsBundle, dir: &Path) -> Result<()> {
    write_file(&dir.join("results.json"), &results_bytes(bundle)?)
}

pub fn read_results(dir: &Path) -> Result<ResultsBundle> {
    let text = read_file(&dir.join("results.json"))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("results.json: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Format("results.json: missing format_version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::Version {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Format(format!("results.json: {e}")))
}
