//! Minimal deterministic SVG line charts for learning curves and
//! normalization diagnostics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

use fedpon_core::fed::Strategy;

use crate::runner::{discover_cells, load_rounds};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Render one multi-series line chart. Series map a label to y-values over
/// an implicit 0..n x-axis.
pub fn line_chart(title: &str, y_label: &str, series: &[(String, Vec<f64>)]) -> Result<String> {
    if series.is_empty() || series.iter().all(|(_, ys)| ys.is_empty()) {
        bail!("nothing to plot");
    }
    let max_len = series.iter().map(|(_, ys)| ys.len()).max().unwrap();
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, ys) in series {
        for &y in ys {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !(y_min.is_finite() && y_max.is_finite()) {
        bail!("non-finite values in plot data");
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let x_of = |i: usize| {
        MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (max_len.saturating_sub(1).max(1)) as f64
    };
    let y_of = |y: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (y - y_min) / (y_max - y_min);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
        w = WIDTH,
        h = HEIGHT
    ));
    svg.push_str(&format!(
        "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        WIDTH, HEIGHT
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        title
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{:.2}</text>\n",
        MARGIN - 6.0,
        MARGIN + 4.0,
        y_max
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{:.2}</text>\n",
        MARGIN - 6.0,
        HEIGHT - MARGIN + 4.0,
        y_min
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">round</text>\n",
        WIDTH / 2.0,
        HEIGHT - MARGIN + 32.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        y_label
    ));

    for (idx, (label, ys)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let points: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| format!("{:.2},{:.2}", x_of(i), y_of(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            color,
            points.join(" ")
        ));
        let ly = MARGIN + 16.0 * idx as f64;
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{c}\" stroke-width=\"2\"/>\n<text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"11\">{l}</text>\n",
            x = WIDTH - MARGIN - 150.0,
            x2 = WIDTH - MARGIN - 130.0,
            y = ly,
            c = color,
            tx = WIDTH - MARGIN - 124.0,
            ty = ly + 4.0,
            l = label
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn seed_mean_by_strategy<F>(dir: &Path, per_round: F) -> Result<Vec<(String, Vec<f64>)>>
where
    F: Fn(&fedpon_core::fed::RoundRecord) -> Option<f64>,
{
    let cells = discover_cells(dir)?;
    if cells.is_empty() {
        bail!("no runs found under {}", dir.display());
    }
    let mut curves: BTreeMap<&'static str, Vec<Vec<f64>>> = BTreeMap::new();
    let mut order: Vec<Strategy> = Vec::new();
    for (strategy, _, cell) in &cells {
        if !order.contains(strategy) {
            order.push(*strategy);
        }
        let records = load_rounds(cell)?;
        let curve: Vec<f64> = records.iter().filter_map(&per_round).collect();
        curves.entry(strategy.name()).or_default().push(curve);
    }
    let mut series = Vec::new();
    for strategy in order {
        let seeds = &curves[strategy.name()];
        let len = seeds.iter().map(|c| c.len()).min().unwrap_or(0);
        let mean: Vec<f64> = (0..len)
            .map(|i| seeds.iter().map(|c| c[i]).sum::<f64>() / seeds.len() as f64)
            .collect();
        series.push((strategy.name().to_string(), mean));
    }
    Ok(series)
}

/// Write learning-curve and normalized-observation-mean charts for all runs
/// under `dir`. Returns the written paths.
pub fn plot_all(dir: &Path) -> Result<Vec<PathBuf>> {
    let returns = seed_mean_by_strategy(dir, crate::report::round_return)?;
    let returns_svg = line_chart("Mean evaluation return", "return", &returns)?;
    let returns_path = dir.join("learning_curves.svg");
    fs::write(&returns_path, returns_svg)?;

    let norm_means = seed_mean_by_strategy(dir, |record| {
        let vals: Vec<f64> = record
            .agents
            .iter()
            .map(|a| {
                a.obs.norm_mean.iter().map(|v| v.abs()).sum::<f64>() / a.obs.norm_mean.len() as f64
            })
            .collect();
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    })?;
    let norm_svg = line_chart(
        "Mean |normalized observation mean|",
        "|mean|",
        &norm_means,
    )?;
    let norm_path = dir.join("norm_means.svg");
    fs::write(&norm_path, norm_svg)?;

    Ok(vec![returns_path, norm_path])
}
