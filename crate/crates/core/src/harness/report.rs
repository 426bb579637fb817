//! Fit and recovery summaries plus CSV/SVG field maps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ElectrodeLayout;
use crate::error::{Error, Result};
use crate::field::{build_basis, evaluate_field, DomainShape, FieldCoeffs, Point};
use crate::filter::field_movie;
use crate::harness::io::{format_float, write_csv, Dataset, ResultsBundle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub t: f64,
    pub explained_variance: f64,
    pub free_energy: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// Pearson correlation over all (channel, window) pairs.
    pub pearson: f64,
    /// Fraction of windows whose estimated hotspot lies within one
    /// electrode cell of the true one.
    pub hotspot_agreement: f64,
    pub g7_pearson: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dataset_fingerprint: String,
    pub total_explained_variance: f64,
    pub windows: Vec<WindowSummary>,
    pub recovery: Option<Recovery>,
}

/// Map grid resolution per axis.
pub const MAP_RESOLUTION: usize = 32;

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i)
}

/// Fraction of windows where the argmax channels are within one cell
/// (Chebyshev distance on the electrode grid).
pub fn hotspot_agreement(layout: &ElectrodeLayout, truth: &[Vec<f64>], estimate: &[Vec<f64>]) -> f64 {
    let hits = truth
        .iter()
        .zip(estimate)
        .filter(|(t, e)| {
            let (tr, tc) = layout.cell(argmax(t));
            let (er, ec) = layout.cell(argmax(e));
            tr.abs_diff(er) <= 1 && tc.abs_diff(ec) <= 1
        })
        .count();
    hits as f64 / truth.len() as f64
}

/// Posterior-mean excitability at the electrodes, `[window][channel]`.
pub fn electrode_estimates(results: &ResultsBundle, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    let basis = results_basis(results, dataset)?;
    let positions = dataset.manifest.layout.positions();
    results
        .windows
        .iter()
        .map(|w| {
            let n = w.posterior.mean.len() - 1;
            evaluate_field(&FieldCoeffs { c: w.posterior.mean[..n].to_vec() }, &basis, &positions)
        })
        .collect()
}

fn results_basis(results: &ResultsBundle, dataset: &Dataset) -> Result<crate::field::EigenBasis> {
    let mut domain = dataset.manifest.domain;
    if let Some(alpha) = results.settings.alpha {
        domain.alpha = alpha;
    }
    build_basis(domain, results.settings.n_modes)
}

pub fn map_grid(shape: DomainShape, resolution: usize) -> (usize, usize, Vec<Point>) {
    match shape {
        DomainShape::Interval { length } => {
            let pts = (0..resolution)
                .map(|i| [(i as f64 + 0.5) / resolution as f64 * length, 0.0])
                .collect();
            (resolution, 1, pts)
        }
        DomainShape::Rectangle { lx, ly } => {
            let mut pts = Vec::with_capacity(resolution * resolution);
            for j in 0..resolution {
                for i in 0..resolution {
                    pts.push([
                        (i as f64 + 0.5) / resolution as f64 * lx,
                        (j as f64 + 0.5) / resolution as f64 * ly,
                    ]);
                }
            }
            (resolution, resolution, pts)
        }
    }
}

fn colour(frac: f64) -> (u8, u8, u8) {
    // linear ramp between the viridis end points
    let lo = (68.0, 1.0, 84.0);
    let hi = (253.0, 231.0, 37.0);
    let f = frac.clamp(0.0, 1.0);
    let mix = |a: f64, b: f64| (a + f * (b - a)).round() as u8;
    (mix(lo.0, hi.0), mix(lo.1, hi.1), mix(lo.2, hi.2))
}

/// Heatmap of `values` laid out row-major on an `nx × ny` grid, with the
/// colour scale spanning the data's own min and max.
pub fn render_heatmap(values: &[f64], nx: usize, ny: usize, title: &str) -> String {
    let cell = 12usize;
    let (w, h) = (nx * cell, ny * cell);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if max > min { max - min } else { 1.0 };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        w,
        h + 40,
        w,
        h + 40
    );
    let _ = writeln!(svg, r#"<text x="2" y="14" font-size="12" font-family="monospace">{title}</text>"#);
    // y grows upward in the domain, downward in SVG
    for j in 0..ny {
        for i in 0..nx {
            let v = values[j * nx + i];
            let (r, g, b) = colour((v - min) / span);
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="rgb({r},{g},{b})"/>"#,
                i * cell,
                20 + (ny - 1 - j) * cell
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="2" y="{}" font-size="11" font-family="monospace">min {} max {}</text>"#,
        h + 34,
        format_float(min),
        format_float(max)
    );
    svg.push_str("</svg>\n");
    svg
}

/// Computes fit and recovery metrics and writes the report artefacts into
/// `out`.
pub fn report(results: &ResultsBundle, dataset: &Dataset, out: &Path) -> Result<Summary> {
    let fingerprint = dataset.fingerprint()?;
    if fingerprint != results.dataset_fingerprint {
        return Err(Error::ManifestMismatch(format!(
            "results were produced from dataset {}, not {}",
            results.dataset_fingerprint, fingerprint
        )));
    }
    if results.windows.len() != dataset.windows.len() {
        return Err(Error::ManifestMismatch("window counts differ".into()));
    }
    let layout = dataset.manifest.layout;
    let trajectory = results.trajectory()?;
    let windows: Vec<WindowSummary> = results
        .windows
        .iter()
        .map(|w| WindowSummary {
            t: w.t,
            explained_variance: w.explained_variance,
            free_energy: w.free_energy,
            iterations: w.iterations,
            converged: w.converged,
        })
        .collect();
    let estimates = electrode_estimates(results, dataset)?;
    let recovery = dataset.truth.as_ref().map(|truth| {
        let flat_t: Vec<f64> = truth.field.iter().flatten().copied().collect();
        let flat_e: Vec<f64> = estimates.iter().flatten().copied().collect();
        let g7_est: Vec<f64> = results.windows.iter().map(|w| *w.posterior.mean.last().unwrap_or(&0.0)).collect();
        Recovery {
            pearson: pearson(&flat_t, &flat_e),
            hotspot_agreement: hotspot_agreement(&layout, &truth.field, &estimates),
            g7_pearson: pearson(&truth.g7_log_offset, &g7_est),
        }
    });
    let summary = Summary {
        dataset_fingerprint: fingerprint,
        total_explained_variance: trajectory.total_explained_variance(),
        windows,
        recovery,
    };

    fs::create_dir_all(out.join("maps")).map_err(|e| Error::io(out, e))?;
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    let path = out.join("summary.json");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    let ev_rows: Vec<(String, Vec<f64>)> = summary
        .windows
        .iter()
        .enumerate()
        .map(|(k, w)| (k.to_string(), vec![w.t, w.explained_variance]))
        .collect();
    write_csv(
        &out.join("explained_variance.csv"),
        &["window".into(), "t".into(), "explained_variance".into()],
        &ev_rows,
    )?;

    let mut header = vec!["window".to_owned()];
    header.extend(dataset.manifest.channel_ids.iter().cloned());
    let est_rows: Vec<(String, Vec<f64>)> =
        estimates.iter().enumerate().map(|(k, v)| (k.to_string(), v.clone())).collect();
    write_csv(&out.join("electrodes_posterior.csv"), &header, &est_rows)?;

    let basis = results_basis(results, dataset)?;
    let (nx, ny, grid) = map_grid(basis.domain.shape, MAP_RESOLUTION);
    let maps = field_movie(&trajectory, &basis, &grid)?;
    for (k, map) in maps.iter().enumerate() {
        let rows: Vec<(String, Vec<f64>)> = (0..ny)
            .map(|j| (j.to_string(), map[j * nx..(j + 1) * nx].to_vec()))
            .collect();
        let mut header = vec!["row".to_owned()];
        header.extend((0..nx).map(|i| format!("x{i}")));
        write_csv(&out.join("maps").join(format!("posterior_{k:04}.csv")), &header, &rows)?;
        let title = format!("posterior mean field, t = {}", results.windows[k].t);
        let path = out.join("maps").join(format!("posterior_{k:04}.svg"));
        fs::write(&path, render_heatmap(map, nx, ny, &title)).map_err(|e| Error::io(&path, e))?;
    }
    if let Some(truth) = &dataset.truth {
        let rows: Vec<(String, Vec<f64>)> =
            truth.field.iter().enumerate().map(|(k, v)| (k.to_string(), v.clone())).collect();
        write_csv(&out.join("electrodes_truth.csv"), &header, &rows)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_of_affine_copy_is_one() {
        let a = [1.0, 2.0, 4.0, 8.0];
        let b: Vec<f64> = a.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((pearson(&a, &b) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hotspot_tolerates_one_cell() {
        let layout = ElectrodeLayout { rows: 3, cols: 3, spacing: 1.0 };
        let mut truth = vec![0.0; 9];
        truth[4] = 1.0;
        let mut near = vec![0.0; 9];
        near[8] = 1.0;
        let far = {
            let mut v = vec![0.0; 9];
            v[0] = 1.0;
            let mut t = vec![0.0; 9];
            t[8] = 1.0;
            (t, v)
        };
        assert_eq!(hotspot_agreement(&layout, &[truth.clone()], &[near]), 1.0);
        assert_eq!(hotspot_agreement(&layout, &[far.0], &[far.1]), 0.0);
    }

    #[test]
    fn heatmap_is_deterministic_and_annotated() {
        let v: Vec<f64> = (0..12).map(f64::from).collect();
        let a = render_heatmap(&v, 4, 3, "t");
        assert_eq!(a, render_heatmap(&v, 4, 3, "t"));
        assert!(a.contains("min 0.0000000000000000e0 max 1.1000000000000000e1"));
        assert_eq!(a.matches("<rect").count(), 12);
    }
}
