//! Self-contained SVG learning-curve plots: one mean polyline per series with
//! a min/max band across seeds.

use std::fmt::Write as _;

use thiserror::Error;

use super::metrics::AggregatePoint;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no series to plot")]
    NoSeries,
    #[error("series {0:?} has no points")]
    EmptySeries(String),
}

#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub label: String,
    pub points: Vec<AggregatePoint>,
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 58.0;

const PALETTE: [&str; 6] = [
    "#1b6ca8", "#d1495b", "#66a182", "#edae49", "#8d5a97", "#3c3c3b",
];

/// Renders success-rate-vs-env-step curves as a standalone SVG document.
pub fn emit_plot(series: &[PlotSeries], title: &str) -> Result<String, PlotError> {
    if series.is_empty() {
        return Err(PlotError::NoSeries);
    }
    for s in series {
        if s.points.is_empty() {
            return Err(PlotError::EmptySeries(s.label.clone()));
        }
    }
    let max_step = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.env_step))
        .max()
        .unwrap_or(0)
        .max(1) as f64;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |step: u64| MARGIN_LEFT + (step as f64 / max_step) * plot_w;
    let y_of = |rate: f64| MARGIN_TOP + (1.0 - rate.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );

    // axes
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    let _ = writeln!(
        svg,
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{:.1}\" y2=\"{y0}\" stroke=\"black\"/>",
        x0 + plot_w
    );
    let _ = writeln!(
        svg,
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{MARGIN_TOP}\" stroke=\"black\"/>"
    );
    for i in 0..=4 {
        let rate = i as f64 / 4.0;
        let y = y_of(rate);
        let _ = writeln!(
            svg,
            "  <line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{x0}\" y2=\"{y:.1}\" stroke=\"black\"/>",
            x0 - 5.0
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{rate:.2}</text>",
            x0 - 9.0,
            y + 4.0
        );
        let step = (max_step * rate).round() as u64;
        let x = x_of(step);
        let _ = writeln!(
            svg,
            "  <line x1=\"{x:.1}\" y1=\"{y0}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            y0 + 5.0
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{step}</text>",
            y0 + 20.0
        );
    }
    let _ = writeln!(
        svg,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">environment steps</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        "  <text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">success rate</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() == 1 {
            // degenerate single-point series: a marker instead of a polyline
            let p = s.points[0];
            let _ = writeln!(
                svg,
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>",
                x_of(p.env_step),
                y_of(p.mean)
            );
        } else {
            // min/max band as a closed polygon
            let mut band = String::new();
            for p in &s.points {
                let _ = write!(band, "{:.2},{:.2} ", x_of(p.env_step), y_of(p.max));
            }
            for p in s.points.iter().rev() {
                let _ = write!(band, "{:.2},{:.2} ", x_of(p.env_step), y_of(p.min));
            }
            let _ = writeln!(
                svg,
                "  <polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>",
                band.trim_end()
            );
            let mean: Vec<String> = s
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", x_of(p.env_step), y_of(p.mean)))
                .collect();
            let _ = writeln!(
                svg,
                "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
                mean.join(" ")
            );
        }
        // legend entry
        let ly = MARGIN_TOP + 14.0 + 18.0 * i as f64;
        let lx = MARGIN_LEFT + plot_w - 150.0;
        let _ = writeln!(
            svg,
            "  <rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"14\" height=\"4\" fill=\"{color}\"/>",
            ly - 4.0
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"{ly:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            lx + 20.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
