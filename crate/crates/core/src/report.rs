//! SVG figures (loss heatmaps and loss curves) and CSV export.
//!
//! SVG is emitted by hand with fixed geometry and fixed number formatting,
//! so identical inputs give byte-identical documents.
//!
//! Heatmap colors interpolate linearly in RGB from dark blue `#081d58` at
//! zero loss to light yellow `#ffffcc` at `loss_cap`; values are clamped
//! to `[0, loss_cap]`.

use crate::cells::CellKind;
use crate::error::{Error, Result};
use crate::sweep::{aggregate, load_curves, load_run_log, SweepGrid, CURVES_FILE, GRID_FILE, RUNS_FILE};
use crate::tasks::TaskKind;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// (p, seed) -> curve points
type CurvesByRun = BTreeMap<(usize, u32), Vec<(usize, f64)>>;

pub const PANEL_WIDTH: f64 = 900.0;
pub const PANEL_HEIGHT: f64 = 300.0;
const LEGEND_HEIGHT: f64 = 60.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

pub const RAMP_LOW: (u8, u8, u8) = (0x08, 0x1d, 0x58);
pub const RAMP_HIGH: (u8, u8, u8) = (0xff, 0xff, 0xcc);
pub const CURVE_Y_MAX: f64 = 0.5;
pub const BASELINE_MAE: f64 = 0.25;

/// Stroke colors by position, cycling after ten.
pub const POSITION_COLORS: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapMetric {
    #[default]
    Mean,
    Std,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapStyle {
    pub loss_cap: f64,
    pub metric: HeatmapMetric,
}

impl Default for HeatmapStyle {
    fn default() -> Self {
        HeatmapStyle {
            loss_cap: BASELINE_MAE,
            metric: HeatmapMetric::Mean,
        }
    }
}

impl HeatmapStyle {
    pub fn validate(&self) -> Result<()> {
        if !(self.loss_cap.is_finite() && self.loss_cap > 0.0) {
            return Err(Error::InvalidArgument(format!("loss cap {} must be > 0", self.loss_cap)));
        }
        Ok(())
    }
}

/// Position of `value` on the color ramp, in `[0, 1]`.
pub fn ramp_position(value: f64, cap: f64) -> f64 {
    if value.is_nan() {
        return 1.0;
    }
    (value / cap).clamp(0.0, 1.0)
}

pub fn ramp_color(value: f64, cap: f64) -> String {
    let t = ramp_position(value, cap);
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(RAMP_LOW.0, RAMP_HIGH.0),
        mix(RAMP_LOW.1, RAMP_HIGH.1),
        mix(RAMP_LOW.2, RAMP_HIGH.2)
    )
}

fn hex((r, g, b): (u8, u8, u8)) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#);
}

fn text(out: &mut String, x: f64, y: f64, anchor: &str, extra: &str, body: &str) {
    let _ = writeln!(
        out,
        r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}"{extra}>{body}</text>"#
    );
}

/// One panel per (model, layers), stacked vertically; x = cells, y =
/// position with p = 1 at the bottom; a color legend at the foot.
pub fn heatmap_svg(grid: &SweepGrid, style: &HeatmapStyle) -> Result<String> {
    style.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("heatmap of an empty grid".into()));
    }
    let mut panels: BTreeMap<(CellKind, usize), Vec<_>> = BTreeMap::new();
    for (key, cell) in grid.iter() {
        panels.entry((key.model, key.layers)).or_default().push((key, cell));
    }
    let height = panels.len() as f64 * PANEL_HEIGHT + LEGEND_HEIGHT;
    let mut out = String::new();
    svg_open(&mut out, PANEL_WIDTH, height);

    for (i, ((model, layers), cells)) in panels.iter().enumerate() {
        let top = i as f64 * PANEL_HEIGHT;
        let xs: Vec<usize> = cells.iter().map(|(k, _)| k.cells).collect::<BTreeSet<_>>().into_iter().collect();
        let ys: Vec<usize> = cells.iter().map(|(k, _)| k.position).collect::<BTreeSet<_>>().into_iter().collect();
        let plot_w = PANEL_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let cw = plot_w / xs.len() as f64;
        let ch = plot_h / ys.len() as f64;
        let x0 = MARGIN_LEFT;
        let y0 = top + MARGIN_TOP;

        let _ = writeln!(out, r#"<g class="panel" data-model="{model}" data-layers="{layers}">"#);
        text(
            &mut out,
            PANEL_WIDTH / 2.0,
            top + 24.0,
            "middle",
            r#" font-size="15" class="title""#,
            &format!("{} l={layers}", model.as_str().to_uppercase()),
        );
        for (key, cell) in cells {
            let xi = xs.binary_search(&key.cells).unwrap_or(0);
            let yi = ys.len() - 1 - ys.binary_search(&key.position).unwrap_or(0);
            let value = match style.metric {
                HeatmapMetric::Mean => cell.mean_mae,
                HeatmapMetric::Std => cell.std_mae,
            };
            let _ = writeln!(
                out,
                r#"<rect class="cell" x="{:.2}" y="{:.2}" width="{cw:.2}" height="{ch:.2}" fill="{}" data-c="{}" data-p="{}" data-value="{value}"/>"#,
                x0 + xi as f64 * cw,
                y0 + yi as f64 * ch,
                ramp_color(value, style.loss_cap),
                key.cells,
                key.position
            );
        }
        for (xi, c) in xs.iter().enumerate() {
            text(&mut out, x0 + (xi as f64 + 0.5) * cw, y0 + plot_h + 16.0, "middle", "", &c.to_string());
        }
        for (yi, p) in ys.iter().rev().enumerate() {
            text(&mut out, x0 - 8.0, y0 + (yi as f64 + 0.5) * ch + 4.0, "end", "", &p.to_string());
        }
        text(&mut out, x0 + plot_w / 2.0, y0 + plot_h + 36.0, "middle", r#" class="xlabel""#, "cells c");
        let ly = y0 + plot_h / 2.0;
        text(
            &mut out,
            24.0,
            ly,
            "middle",
            &format!(r#" class="ylabel" transform="rotate(-90 24 {ly:.2})""#),
            "position p",
        );
        out.push_str("</g>\n");
    }

    let legend_top = panels.len() as f64 * PANEL_HEIGHT;
    let bar_w = PANEL_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    out.push_str("<defs><linearGradient id=\"ramp\" x1=\"0\" x2=\"1\" y1=\"0\" y2=\"0\">");
    let _ = write!(
        out,
        r#"<stop offset="0" stop-color="{}"/><stop offset="1" stop-color="{}"/>"#,
        hex(RAMP_LOW),
        hex(RAMP_HIGH)
    );
    out.push_str("</linearGradient></defs>\n");
    let _ = writeln!(
        out,
        r#"<rect class="legend" x="{MARGIN_LEFT:.2}" y="{:.2}" width="{bar_w:.2}" height="14" fill="url(#ramp)" stroke="black" stroke-width="0.5"/>"#,
        legend_top + 10.0
    );
    let label = match style.metric {
        HeatmapMetric::Mean => "mean absolute loss",
        HeatmapMetric::Std => "std of absolute loss",
    };
    text(&mut out, MARGIN_LEFT, legend_top + 40.0, "start", "", "0");
    text(&mut out, MARGIN_LEFT + bar_w / 2.0, legend_top + 40.0, "middle", "", label);
    text(
        &mut out,
        MARGIN_LEFT + bar_w,
        legend_top + 40.0,
        "end",
        "",
        &format!("&#8805; {}", style.loss_cap),
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Eval MAE over epochs, one polyline per run, colored by position.
/// The y range is fixed at `[0, 0.5]` with a gridline at the 0.25 baseline.
pub fn losscurves_svg(runs: &[(usize, &[(usize, f64)])]) -> String {
    let (w, h) = (PANEL_WIDTH, PANEL_HEIGHT);
    let plot_w = w - MARGIN_LEFT - MARGIN_RIGHT - 60.0;
    let plot_h = h - MARGIN_TOP - MARGIN_BOTTOM;
    let x_max = runs
        .iter()
        .flat_map(|(_, c)| c.iter().map(|(e, _)| *e))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let sx = |e: usize| MARGIN_LEFT + e as f64 / x_max * plot_w;
    let sy = |v: f64| MARGIN_TOP + (1.0 - v.clamp(0.0, CURVE_Y_MAX) / CURVE_Y_MAX) * plot_h;

    let mut out = String::new();
    svg_open(&mut out, w, h);
    let bottom = MARGIN_TOP + plot_h;
    let right = MARGIN_LEFT + plot_w;
    let _ = writeln!(
        out,
        r#"<path class="axes" d="M{MARGIN_LEFT:.2} {MARGIN_TOP:.2} V{bottom:.2} H{right:.2}" fill="none" stroke="black"/>"#
    );
    let base = sy(BASELINE_MAE);
    let _ = writeln!(
        out,
        r#"<line class="baseline" x1="{MARGIN_LEFT:.2}" y1="{base:.2}" x2="{right:.2}" y2="{base:.2}" stroke="gray" stroke-dasharray="4 3"/>"#
    );
    for v in [0.0, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5] {
        text(&mut out, MARGIN_LEFT - 8.0, sy(v) + 4.0, "end", "", &format!("{v:.2}"));
    }
    for i in 0..=4 {
        let e = (x_max * i as f64 / 4.0).round() as usize;
        text(&mut out, sx(e), bottom + 16.0, "middle", "", &e.to_string());
    }
    text(&mut out, MARGIN_LEFT + plot_w / 2.0, bottom + 36.0, "middle", r#" class="xlabel""#, "epoch");
    let ly = MARGIN_TOP + plot_h / 2.0;
    text(
        &mut out,
        24.0,
        ly,
        "middle",
        &format!(r#" class="ylabel" transform="rotate(-90 24 {ly:.2})""#),
        "eval MAE",
    );

    for (p, curve) in runs {
        let points: Vec<String> = curve.iter().map(|&(e, v)| format!("{:.2},{:.2}", sx(e), sy(v))).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="run" data-p="{p}" points="{}" fill="none" stroke="{}" stroke-width="1"/>"#,
            points.join(" "),
            position_color(*p)
        );
    }
    let positions: BTreeSet<usize> = runs.iter().map(|(p, _)| *p).collect();
    for (i, p) in positions.iter().enumerate() {
        let y = MARGIN_TOP + 12.0 + i as f64 * 16.0;
        let x = right + 16.0;
        let _ = writeln!(
            out,
            r#"<line class="key" x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"/>"#,
            x + 16.0,
            position_color(*p)
        );
        text(&mut out, x + 20.0, y + 4.0, "start", "", &format!("p={p}"));
    }
    out.push_str("</svg>\n");
    out
}

pub fn position_color(p: usize) -> &'static str {
    POSITION_COLORS[p.saturating_sub(1) % POSITION_COLORS.len()]
}

/// Grid CSV in the sweep export schema.
pub fn export_csv(grid: &SweepGrid) -> String {
    grid.to_csv()
}

/// `{task}_{model}_{kind}.svg`
pub fn figure_name(task: TaskKind, model: CellKind, kind: &str) -> String {
    format!("{task}_{model}_{kind}.svg")
}

/// Renders a sweep directory: per model a mean heatmap, a std heatmap and
/// one loss-curve figure per (l, c), plus the grid CSV. Returns the paths
/// written, in a deterministic order.
pub fn write_report(in_dir: &Path, out_dir: &Path, style: &HeatmapStyle) -> Result<Vec<PathBuf>> {
    let records = load_run_log(&in_dir.join(RUNS_FILE))?;
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!("no runs in {}", in_dir.join(RUNS_FILE).display())));
    }
    let tasks: BTreeSet<TaskKind> = records.iter().map(|r| r.task).collect();
    let grid = aggregate(&records);
    let curves = match in_dir.join(CURVES_FILE) {
        p if p.exists() => load_curves(&p)?,
        _ => Vec::new(),
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut written = Vec::new();
    let mut write = |name: String, body: &str| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    write(GRID_FILE.to_string(), &export_csv(&grid))?;
    for &task in &tasks {
        let task_records: Vec<_> = records.iter().filter(|r| r.task == task).cloned().collect();
        let task_grid = aggregate(&task_records);
        for model in task_grid.models() {
            let sub = task_grid.for_model(model);
            write(figure_name(task, model, "heatmap"), &heatmap_svg(&sub, style)?)?;
            let std_style = HeatmapStyle {
                metric: HeatmapMetric::Std,
                ..*style
            };
            write(figure_name(task, model, "std-heatmap"), &heatmap_svg(&sub, &std_style)?)?;

            // (l, c) -> (p, seed) -> curve
            let mut by_config: BTreeMap<(usize, usize), CurvesByRun> = BTreeMap::new();
            for pt in curves.iter().filter(|pt| pt.task == task && pt.model == model) {
                by_config
                    .entry((pt.layers, pt.cells))
                    .or_default()
                    .entry((pt.position, pt.seed))
                    .or_default()
                    .push((pt.epoch, pt.eval_mae));
            }
            for ((l, c), runs) in by_config {
                let tagged: Vec<(usize, &[(usize, f64)])> =
                    runs.iter().map(|((p, _), pts)| (*p, pts.as_slice())).collect();
                write(figure_name(task, model, &format!("losscurves-l{l}-c{c}")), &losscurves_svg(&tagged))?;
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{GridCell, GridKey};

    fn cell(mean: f64) -> GridCell {
        GridCell { mean_mae: mean, std_mae: mean / 10.0, n_runs: 3, n_diverged: 0 }
    }

    fn grid(models: &[CellKind], layers: &[usize], cs: usize, ps: usize) -> SweepGrid {
        let mut g = SweepGrid::default();
        for &model in models {
            for &l in layers {
                for c in 1..=cs {
                    for p in 1..=ps {
                        let v = 0.25 * (p as f64 / (c as f64 + p as f64));
                        g.insert(GridKey { model, layers: l, cells: c, position: p }, cell(v));
                    }
                }
            }
        }
        g
    }

    fn class_count(doc: &roxmltree::Document, tag: &str, class: &str) -> usize {
        doc.descendants()
            .filter(|n| n.has_tag_name(tag) && n.attribute("class") == Some(class))
            .count()
    }

    #[test]
    fn ramp_endpoints_and_clamp() {
        assert_eq!(ramp_color(0.0, 0.25), "#081d58");
        assert_eq!(ramp_color(0.25, 0.25), "#ffffcc");
        assert_eq!(ramp_color(0.4, 0.25), "#ffffcc");
        assert_eq!(ramp_color(-1.0, 0.25), "#081d58");
        assert_eq!(ramp_position(f64::NAN, 0.25), 1.0);
    }

    #[test]
    fn ramp_is_monotone() {
        let mut prev = -1.0;
        for i in 0..=100 {
            let t = ramp_position(i as f64 * 0.0025, 0.25);
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn single_cell_heatmap() {
        let mut g = SweepGrid::default();
        g.insert(GridKey { model: CellKind::Rnn, layers: 1, cells: 1, position: 1 }, cell(0.0));
        let svg = heatmap_svg(&g, &HeatmapStyle::default()).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let cells: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("cell")).collect();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].attribute("fill"), Some("#081d58"));
    }

    #[test]
    fn over_cap_is_clamped() {
        let mut g = SweepGrid::default();
        g.insert(GridKey { model: CellKind::Gru, layers: 2, cells: 3, position: 1 }, cell(0.4));
        let svg = heatmap_svg(&g, &HeatmapStyle::default()).unwrap();
        assert!(svg.contains(r##"fill="#ffffcc" data-c="3""##));
    }

    #[test]
    fn panels_and_cells_counted() {
        let g = grid(&[CellKind::Rnn, CellKind::Lstm], &[1, 2, 3], 4, 5);
        let svg = heatmap_svg(&g, &HeatmapStyle::default()).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(class_count(&doc, "g", "panel"), 6);
        assert_eq!(class_count(&doc, "rect", "cell"), 2 * 3 * 4 * 5);
        assert_eq!(class_count(&doc, "text", "title"), 6);
        assert_eq!(class_count(&doc, "rect", "legend"), 1);
        let root = doc.root_element();
        assert_eq!(root.attribute("height"), Some("1860"));
        let mut seen = BTreeSet::new();
        for n in doc.descendants().filter(|n| n.attribute("class") == Some("cell")) {
            let p = n.parent().unwrap();
            let key = (p.attribute("data-model").unwrap(), p.attribute("data-layers").unwrap(), n.attribute("data-c").unwrap(), n.attribute("data-p").unwrap());
            assert!(seen.insert(key), "cell rendered twice");
        }
    }

    #[test]
    fn heatmap_is_deterministic_and_rejects_empty() {
        let g = grid(&[CellKind::Rnn], &[1], 3, 3);
        let style = HeatmapStyle::default();
        assert_eq!(heatmap_svg(&g, &style).unwrap(), heatmap_svg(&g, &style).unwrap());
        assert!(heatmap_svg(&SweepGrid::default(), &style).is_err());
        let bad = HeatmapStyle { loss_cap: 0.0, ..style };
        assert!(heatmap_svg(&g, &bad).is_err());
    }

    #[test]
    fn std_metric_uses_std_column() {
        let g = grid(&[CellKind::Rnn], &[1], 1, 1);
        let style = HeatmapStyle { metric: HeatmapMetric::Std, ..Default::default() };
        let svg = heatmap_svg(&g, &style).unwrap();
        let want = g.iter().next().unwrap().1.std_mae;
        assert!(svg.contains(&format!(r#"data-value="{want}""#)));
    }

    #[test]
    fn flat_curve_sits_on_baseline() {
        let curve: Vec<(usize, f64)> = (1..=10).map(|e| (e * 10, 0.25)).collect();
        let svg = losscurves_svg(&[(10, &curve)]);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let base = doc.descendants().find(|n| n.attribute("class") == Some("baseline")).unwrap();
        let y = base.attribute("y1").unwrap();
        let line = doc.descendants().find(|n| n.has_tag_name("polyline")).unwrap();
        for pt in line.attribute("points").unwrap().split(' ') {
            assert_eq!(pt.split(',').nth(1), Some(y));
        }
    }

    #[test]
    fn same_position_same_color() {
        let a = vec![(10, 0.2), (20, 0.1)];
        let b = vec![(10, 0.3), (20, 0.05)];
        let svg = losscurves_svg(&[(2, &a), (2, &b)]);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let strokes: Vec<_> = doc
            .descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .map(|n| n.attribute("stroke").unwrap())
            .collect();
        assert_eq!(strokes.len(), 2);
        assert_eq!(strokes[0], strokes[1]);
    }

    #[test]
    fn figure_scale_curve_count() {
        let curves: Vec<(usize, Vec<(usize, f64)>)> = (1..=10)
            .flat_map(|p| (0..10).map(move |s| (p, (1..=50).map(|e| (e * 10, 0.25 - 0.001 * (e + s) as f64)).collect())))
            .collect();
        let tagged: Vec<(usize, &[(usize, f64)])> = curves.iter().map(|(p, c)| (*p, c.as_slice())).collect();
        let svg = losscurves_svg(&tagged);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(class_count(&doc, "polyline", "run"), 100);
        assert_eq!(class_count(&doc, "line", "key"), 10);
        assert_eq!(svg, losscurves_svg(&tagged));
    }

    #[test]
    fn curve_values_are_clamped_to_axis() {
        let c = vec![(1, 3.0), (2, -1.0)];
        let svg = losscurves_svg(&[(1, &c)]);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let ys: Vec<f64> = doc
            .descendants()
            .find(|n| n.has_tag_name("polyline"))
            .unwrap()
            .attribute("points")
            .unwrap()
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(ys, vec![MARGIN_TOP, PANEL_HEIGHT - MARGIN_BOTTOM]);
    }

    #[test]
    fn export_csv_round_trip() {
        assert_eq!(export_csv(&SweepGrid::default()).lines().count(), 1);
        let mut g = SweepGrid::default();
        g.insert(GridKey { model: CellKind::Lstm, layers: 1, cells: 2, position: 1 }, cell(0.1));
        g.insert(GridKey { model: CellKind::Rnn, layers: 1, cells: 1, position: 2 }, cell(0.2));
        let text = export_csv(&g);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("rnn,") && lines[2].starts_with("lstm,"));
        assert_eq!(export_csv(&SweepGrid::from_csv(&text).unwrap()), text);
    }

    #[test]
    fn figure_names() {
        assert_eq!(figure_name(TaskKind::Random, CellKind::Gru, "heatmap"), "random_gru_heatmap.svg");
    }
}
