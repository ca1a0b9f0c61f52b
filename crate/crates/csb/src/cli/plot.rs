//! Self-contained SVG emission of mean-regret curves with change-point
//! markers.

use std::collections::BTreeMap;

use crate::error::{CsbError, Result};

/// One named polyline of `(round, value)` points.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Parses an aggregated-results CSV (`policy,t,mean_cum_regret,...`) into
/// one series per policy, in first-appearance order.
pub fn series_from_aggregate_csv(text: &str) -> Result<Vec<Series>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CsbError::invalid(format!("aggregate CSV is missing column `{name}`")))
    };
    let policy_col = col("policy")?;
    let t_col = col("t")?;
    let value_col = col("mean_cum_regret")?;

    let mut order = Vec::new();
    let mut by_policy: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let policy = record
            .get(policy_col)
            .ok_or_else(|| CsbError::invalid("short CSV record"))?
            .to_string();
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| CsbError::invalid("short CSV record"))?
                .parse::<f64>()
                .map_err(|e| CsbError::invalid(format!("malformed CSV number: {e}")))
        };
        let t = parse(t_col)?;
        let value = parse(value_col)?;
        if !by_policy.contains_key(&policy) {
            order.push(policy.clone());
        }
        by_policy.entry(policy).or_default().push((t, value));
    }
    if order.is_empty() {
        return Err(CsbError::invalid("aggregate CSV contains no data rows"));
    }
    Ok(order
        .into_iter()
        .map(|name| {
            let points = by_policy.remove(&name).unwrap();
            Series { name, points }
        })
        .collect())
}

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#e377c2", "#7f7f7f",
    "#bcbd22",
];

const WIDTH: f64 = 920.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;

/// Renders curves plus vertical markers at distribution changes (solid
/// green) and graph changes (dashed gray).
pub fn render_svg(
    series: &[Series],
    dist_change_rounds: &[usize],
    graph_change_rounds: &[usize],
) -> Result<String> {
    if series.is_empty() {
        return Err(CsbError::invalid("nothing to plot"));
    }
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(1.0_f64, f64::max);
    let y_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .fold(0.0_f64, f64::max)
        .max(1e-9);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |t: f64| MARGIN_LEFT + (t - 1.0) / (x_max - 1.0).max(1.0) * plot_w;
    let sy = |v: f64| MARGIN_TOP + (1.0 - v / y_max) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y1}\" x2=\"{x1}\" y2=\"{y1}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n",
        x0 = MARGIN_LEFT,
        x1 = MARGIN_LEFT + plot_w,
        y0 = MARGIN_TOP,
        y1 = MARGIN_TOP + plot_h,
    ));
    for i in 0..=5 {
        let frac = i as f64 / 5.0;
        let t = 1.0 + frac * (x_max - 1.0);
        let v = frac * y_max;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.0}</text>\n",
            sx(t),
            MARGIN_TOP + plot_h + 18.0,
            t
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.1}</text>\n",
            MARGIN_LEFT - 6.0,
            sy(v) + 4.0,
            v
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">round</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {0:.1})\">mean cumulative regret</text>\n",
        MARGIN_TOP + plot_h / 2.0
    ));

    // Change-point markers.
    for &round in dist_change_rounds {
        let x = sx(round as f64);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
             stroke=\"#2ca02c\" stroke-width=\"1.2\"/>\n",
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        ));
    }
    for &round in graph_change_rounds {
        let x = sx(round as f64);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
             stroke=\"#888888\" stroke-width=\"1.2\" stroke-dasharray=\"5,4\"/>\n",
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        ));
    }

    // Curves, downsampled to keep the artifact small.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let stride = (s.points.len() / 1000).max(1);
        let mut d = String::new();
        for (j, &(t, v)) in s.points.iter().enumerate() {
            if j % stride != 0 && j != s.points.len() - 1 {
                continue;
            }
            if !v.is_finite() {
                return Err(CsbError::invalid("non-finite value in plot data"));
            }
            d.push_str(&format!("{:.1},{:.1} ", sx(t), sy(v)));
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
            d.trim_end()
        ));
        let ly = MARGIN_TOP + 16.0 + 16.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            MARGIN_LEFT + 10.0,
            MARGIN_LEFT + 34.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            MARGIN_LEFT + 40.0,
            ly + 4.0,
            s.name
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}
