//! Rendering of p-value P-P plots as SVG images or raw CSV triples.

use std::fs;
use std::io;
use std::path::Path;

use crate::consistency::PPPlotData;

/// Output format for [`render_plot`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Svg,
    Csv,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 55.0;

fn x_px(alpha: f64) -> f64 {
    MARGIN_LEFT + alpha * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
}

fn y_px(value: f64) -> f64 {
    HEIGHT - MARGIN_BOTTOM - value * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
}

/// Renders the plot data into an SVG document.
pub fn render_svg_string(data: &PPPlotData) -> String {
    let mut svg = String::with_capacity(16 * 1024);
    svg.push_str(&format!(
        r#"<svg version="1.1" width="{WIDTH}" height="{HEIGHT}" xmlns="http://www.w3.org/2000/svg">"#
    ));
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);

    // Axes with ticks every 0.2.
    svg.push_str(&format!(
        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        x_px(0.0),
        y_px(0.0),
        x_px(1.0),
        y_px(0.0)
    ));
    svg.push_str(&format!(
        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        x_px(0.0),
        y_px(0.0),
        x_px(0.0),
        y_px(1.0)
    ));
    for i in 0..=5 {
        let v = f64::from(i) / 5.0;
        svg.push_str(&format!(
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
            x_px(v),
            y_px(0.0),
            x_px(v),
            y_px(0.0) + 5.0
        ));
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12">{v:.1}</text>"#,
            x_px(v),
            y_px(0.0) + 18.0
        ));
        svg.push_str(&format!(
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
            x_px(0.0) - 5.0,
            y_px(v),
            x_px(0.0),
            y_px(v)
        ));
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="12">{v:.1}</text>"#,
            x_px(0.0) - 8.0,
            y_px(v) + 4.0
        ));
    }
    svg.push_str(&format!(
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="14">p-value / expected CDF</text>"#,
        x_px(0.5),
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="14" transform="rotate(-90 16 {:.1})">observed ECDF</text>"#,
        y_px(0.5),
        y_px(0.5)
    ));

    // x = y reference.
    svg.push_str(&format!(
        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
        x_px(0.0),
        y_px(0.0),
        x_px(1.0),
        y_px(1.0)
    ));

    // Threshold curve.
    let mut path = String::new();
    for (i, &(alpha, f)) in data.threshold.iter().enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        path.push_str(&format!("{cmd}{:.2} {:.2} ", x_px(alpha), y_px(f.min(1.0))));
    }
    svg.push_str(&format!(
        r#"<path d="{}" stroke="black" stroke-width="1.5" fill="none"/>"#,
        path.trim_end()
    ));

    // ECDF points.
    for &(alpha, ecdf) in &data.points {
        svg.push_str(&format!(
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="steelblue"/>"#,
            x_px(alpha),
            y_px(ecdf)
        ));
    }

    svg.push_str("</svg>");
    svg
}

/// Writes the raw `(alpha, ecdf, threshold)` triples as CSV. Floats use
/// Rust's shortest round-trip form, so a parse of the output reproduces the
/// values bit-exactly.
pub fn write_plot_csv<W: io::Write>(data: &PPPlotData, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["alpha", "ecdf", "threshold"])?;
    for (alpha, ecdf, threshold) in data.csv_rows() {
        w.write_record([alpha.to_string(), ecdf.to_string(), threshold.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Renders plot data to a file in the requested format.
pub fn render_plot(data: &PPPlotData, path: &Path, format: PlotFormat) -> io::Result<()> {
    match format {
        PlotFormat::Svg => fs::write(path, render_svg_string(data)),
        PlotFormat::Csv => {
            let file = fs::File::create(path)?;
            write_plot_csv(data, file).map_err(io::Error::other)
        }
    }
}
