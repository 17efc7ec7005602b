//! SVG plot emission: top-down trajectories and metric-vs-guidance sweeps.

use std::path::Path;

use plotters::prelude::*;

use duet_core::dataset::Dataset;
use duet_core::error::{DuetError, Result};
use duet_core::motion::kinematics::joint_positions;

use crate::commands::FullReport;

fn plot_err(e: impl std::fmt::Display) -> DuetError {
    DuetError::InvalidConfig(format!("plot error: {e}"))
}

/// Ground-plane (x/z) root and wrist traces for the first few clips.
pub fn plot_trajectories(dataset: &Dataset, max_clips: usize, out: &Path) -> Result<()> {
    let clips = dataset.pairs.len().min(max_clips.max(1));
    let root = SVGBackend::new(out, (420 * clips as u32, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let areas = root.split_evenly((1, clips));
    let wrist = dataset
        .skeleton
        .joint_names
        .iter()
        .position(|n| n == "r_wrist");
    for (i, area) in areas.iter().enumerate() {
        let pair = &dataset.pairs[i];
        let pos_a = joint_positions(&pair.person_a, &dataset.skeleton)?;
        let pos_b = joint_positions(&pair.person_b, &dataset.skeleton)?;
        let mut min = (f64::INFINITY, f64::INFINITY);
        let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for frame in pos_a.iter().chain(&pos_b) {
            for p in frame {
                min.0 = min.0.min(p.x);
                min.1 = min.1.min(p.z);
                max.0 = max.0.max(p.x);
                max.1 = max.1.max(p.z);
            }
        }
        let pad = 0.2;
        let mut chart = ChartBuilder::on(area)
            .caption(&pair.text, ("sans-serif", 13))
            .margin(8)
            .x_label_area_size(22)
            .y_label_area_size(28)
            .build_cartesian_2d(min.0 - pad..max.0 + pad, min.1 - pad..max.1 + pad)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .disable_mesh()
            .draw()
            .map_err(plot_err)?;
        let series = |positions: &[Vec<duet_core::nalgebra::Vector3<f64>>], joint: usize| -> Vec<(f64, f64)> {
            positions.iter().map(|f| (f[joint].x, f[joint].z)).collect()
        };
        chart
            .draw_series(LineSeries::new(series(&pos_a, 0), &BLUE))
            .map_err(plot_err)?
            .label("person a");
        chart
            .draw_series(LineSeries::new(series(&pos_b, 0), &RED))
            .map_err(plot_err)?
            .label("person b");
        if let Some(w) = wrist {
            chart
                .draw_series(LineSeries::new(series(&pos_a, w), BLUE.mix(0.4).stroke_width(1)))
                .map_err(plot_err)?;
            chart
                .draw_series(LineSeries::new(series(&pos_b, w), RED.mix(0.4).stroke_width(1)))
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .border_style(BLACK.mix(0.3))
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Metric curves against the guidance scale, from a set of eval reports.
pub fn plot_sweep(reports: &[(f64, FullReport)], out: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(DuetError::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut sorted: Vec<&(f64, FullReport)> = reports.iter().collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let metrics: Vec<(&str, Vec<(f64, f64)>)> = vec![
        (
            "fid",
            sorted
                .iter()
                .filter_map(|(w, r)| r.fidelity.as_ref().map(|f| (*w, f.fid)))
                .collect(),
        ),
        (
            "mm-dist",
            sorted
                .iter()
                .filter_map(|(w, r)| r.fidelity.as_ref().map(|f| (*w, f.mm_dist)))
                .collect(),
        ),
        (
            "r-precision@1",
            sorted
                .iter()
                .filter_map(|(w, r)| {
                    r.fidelity
                        .as_ref()
                        .map(|f| (*w, f.r_precision[0]))
                        .filter(|(_, v)| v.is_finite())
                })
                .collect(),
        ),
        (
            "pv",
            sorted
                .iter()
                .filter_map(|(w, r)| r.physics.as_ref().map(|p| (*w, p.pv)))
                .collect(),
        ),
        (
            "contact-ratio",
            sorted
                .iter()
                .filter_map(|(w, r)| {
                    r.physics
                        .as_ref()
                        .and_then(|p| p.contact_ratio)
                        .map(|c| (*w, c))
                })
                .collect(),
        ),
    ];
    let present: Vec<&(&str, Vec<(f64, f64)>)> =
        metrics.iter().filter(|(_, pts)| !pts.is_empty()).collect();
    if present.is_empty() {
        return Err(DuetError::InsufficientSamples { needed: 1, got: 0 });
    }

    let root =
        SVGBackend::new(out, (460, 300 * present.len() as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let areas = root.split_evenly((present.len(), 1));
    for (area, (name, pts)) in areas.iter().zip(&present) {
        let w_min = pts.first().map(|p| p.0).unwrap_or(0.0);
        let w_max = pts.last().map(|p| p.0).unwrap_or(1.0);
        let v_min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let v_max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let span = (v_max - v_min).max(1e-9);
        let mut chart = ChartBuilder::on(area)
            .caption(*name, ("sans-serif", 14))
            .margin(10)
            .x_label_area_size(24)
            .y_label_area_size(46)
            .build_cartesian_2d(
                w_min - 0.1..w_max + 0.1,
                v_min - 0.1 * span..v_max + 0.1 * span,
            )
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("guidance scale")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), &BLUE))
            .map_err(plot_err)?;
        chart
            .draw_series(pts.iter().map(|p| Circle::new(*p, 3, BLUE.filled())))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}
