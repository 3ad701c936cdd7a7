//! Dependency-free SVG emission for scatter and line plots.
//!
//! The CLI's figures — the embedding scatter and the scaling curve — are
//! plain SVG strings assembled by hand: a frame, tick marks with labels, and
//! either circle markers or a polyline.  No drawing library, no text
//! measurement; the layout is fixed and the files open in any browser.

use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;
const TICKS: usize = 5;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_points(points: &[(f64, f64)]) -> Frame {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for &(x, y) in points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        // Pad degenerate ranges so a single point or a flat line still draws.
        if !(x_max > x_min) {
            x_min -= 0.5;
            x_max += 0.5;
        }
        if !(y_max > y_min) {
            y_min -= 0.5;
            y_max += 0.5;
        }
        // 5% margin inside the axes.
        let xpad = 0.05 * (x_max - x_min);
        let ypad = 0.05 * (y_max - y_min);
        Frame {
            x_min: x_min - xpad,
            x_max: x_max + xpad,
            y_min: y_min - ypad,
            y_max: y_max + ypad,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        // SVG y grows downward.
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Compact tick-label formatting: plain decimals in a comfortable range,
/// scientific notation outside it.
fn fmt_tick(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let a = x.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{x:.2e}");
    }
    let s = format!("{x:.3}");
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    trimmed.to_string()
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn keep_finite(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect()
}

fn svg_header(title: &str, xlabel: &str, ylabel: &str, frame: &Frame) -> String {
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape_text(title)
    ));
    // Axes frame.
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    svg.push_str(&format!(
        "  <rect x=\"{x0:.1}\" y=\"{y1:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" \
         stroke=\"#444444\" stroke-width=\"1\"/>\n",
        x1 - x0,
        y0 - y1
    ));
    // Ticks and labels.
    for t in 0..=TICKS {
        let fx = frame.x_min + (frame.x_max - frame.x_min) * t as f64 / TICKS as f64;
        let px = frame.px(fx);
        svg.push_str(&format!(
            "  <line x1=\"{px:.1}\" y1=\"{y0:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" \
             stroke=\"#444444\" stroke-width=\"1\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{px:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            y0 + 18.0,
            fmt_tick(fx)
        ));
        let fy = frame.y_min + (frame.y_max - frame.y_min) * t as f64 / TICKS as f64;
        let py = frame.py(fy);
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0:.1}\" y2=\"{py:.1}\" \
             stroke=\"#444444\" stroke-width=\"1\"/>\n",
            x0 - 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>\n",
            x0 - 8.0,
            py + 4.0,
            fmt_tick(fy)
        ));
    }
    // Axis labels.
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        escape_text(xlabel)
    ));
    svg.push_str(&format!(
        "  <text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape_text(ylabel)
    ));
    svg
}

/// Scatter plot of `(x, y)` points; non-finite points are dropped.
pub fn scatter_svg(points: &[(f64, f64)], title: &str, xlabel: &str, ylabel: &str) -> Result<String> {
    let pts = keep_finite(points);
    if pts.is_empty() {
        return Err(Error::invalid("scatter plot needs at least one finite point"));
    }
    let frame = Frame::from_points(&pts);
    let mut svg = svg_header(title, xlabel, ylabel, &frame);
    for (x, y) in &pts {
        svg.push_str(&format!(
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"#2b6cb0\" fill-opacity=\"0.7\"/>\n",
            frame.px(*x),
            frame.py(*y)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Line plot through the points in x order, with circle markers.
pub fn line_svg(points: &[(f64, f64)], title: &str, xlabel: &str, ylabel: &str) -> Result<String> {
    let mut pts = keep_finite(points);
    if pts.is_empty() {
        return Err(Error::invalid("line plot needs at least one finite point"));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let frame = Frame::from_points(&pts);
    let mut svg = svg_header(title, xlabel, ylabel, &frame);
    let path: Vec<String> = pts
        .iter()
        .map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)))
        .collect();
    svg.push_str(&format!(
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"#c53030\" stroke-width=\"1.5\"/>\n",
        path.join(" ")
    ));
    for (x, y) in &pts {
        svg.push_str(&format!(
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#c53030\"/>\n",
            frame.px(*x),
            frame.py(*y)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Write an SVG string to disk.
pub fn write_svg<P: AsRef<Path>>(path: P, svg: &str) -> Result<()> {
    std::fs::write(path.as_ref(), svg).map_err(|e| Error::io(path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_contains_every_point_and_is_well_formed() {
        let pts = vec![(0.0, 0.0), (1.0, 2.0), (-1.0, 0.5)];
        let svg = scatter_svg(&pts, "demo", "x", "y").unwrap();
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("demo"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn non_finite_points_are_dropped() {
        let pts = vec![(0.0, 0.0), (f64::NAN, 1.0), (1.0, f64::INFINITY), (2.0, 1.0)];
        let svg = scatter_svg(&pts, "t", "x", "y").unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn all_marker_coordinates_stay_inside_the_canvas() {
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|i| {
                let t = i as f64 / 10.0;
                (t.cos() * 3.0, t.sin() * 0.01)
            })
            .collect();
        let svg = scatter_svg(&pts, "circle", "x", "y").unwrap();
        for line in svg.lines().filter(|l| l.contains("<circle")) {
            let cx: f64 = line.split("cx=\"").nth(1).unwrap().split('"').next().unwrap()
                .parse()
                .unwrap();
            let cy: f64 = line.split("cy=\"").nth(1).unwrap().split('"').next().unwrap()
                .parse()
                .unwrap();
            assert!((0.0..=WIDTH).contains(&cx), "cx {cx} outside canvas");
            assert!((0.0..=HEIGHT).contains(&cy), "cy {cy} outside canvas");
        }
    }

    #[test]
    fn line_plot_sorts_by_x_and_draws_one_polyline() {
        let pts = vec![(3.0, 9.0), (1.0, 1.0), (2.0, 4.0)];
        let svg = line_svg(&pts, "quad", "n", "t").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let poly = svg.lines().find(|l| l.contains("<polyline")).unwrap();
        let coords: Vec<f64> = poly
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap()
            .split(' ')
            .map(|p| p.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(coords.windows(2).all(|w| w[0] < w[1]), "x must be sorted");
    }

    #[test]
    fn degenerate_single_point_still_renders() {
        let svg = scatter_svg(&[(5.0, 5.0)], "dot", "x", "y").unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("NaN"));
        assert!(scatter_svg(&[(f64::NAN, f64::NAN)], "none", "x", "y").is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let svg = scatter_svg(&[(0.0, 0.0)], "a < b & c", "x", "y").unwrap();
        assert!(svg.contains("a &lt; b &amp; c"));
    }
}
