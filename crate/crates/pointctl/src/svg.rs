//! Minimal self-contained SVG line charts: polyline series, optional
//! per-series uncertainty bands, an optional horizontal reference band
//! (target zone), axes with ticks, and a legend. No scripting, no external
//! resources, so the files render anywhere.

use std::fmt::Write as _;

/// One plotted series: points in data coordinates, an optional (lo, hi)
/// band per point, and a display label.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Per-point envelope (x, lo, hi), drawn as a translucent polygon.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            band: None,
        }
    }

    pub fn with_band(mut self, band: Vec<(f64, f64, f64)>) -> Self {
        self.band = Some(band);
        self
    }
}

/// One chart panel.
#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Horizontal zone (lo, hi) shaded across the panel width.
    pub hband: Option<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 40.0;

fn finite_or(v: f64, fallback: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        fallback
    }
}

struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn new() -> Self {
        Self {
            lo: f64::INFINITY,
            hi: f64::NEG_INFINITY,
        }
    }

    fn add(&mut self, v: f64) {
        if v.is_finite() {
            self.lo = self.lo.min(v);
            self.hi = self.hi.max(v);
        }
    }

    /// Non-degenerate span for mapping; pads flat data symmetrically.
    fn padded(mut self) -> (f64, f64) {
        if !self.lo.is_finite() || !self.hi.is_finite() {
            return (0.0, 1.0);
        }
        if self.hi - self.lo < 1e-12 {
            let pad = self.lo.abs().max(1.0) * 0.05;
            self.lo -= pad;
            self.hi += pad;
        }
        (self.lo, self.hi)
    }
}

fn tick_values(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        mag
    } else if norm < 3.5 {
        2.0 * mag
    } else if norm < 7.5 {
        5.0 * mag
    } else {
        10.0 * mag
    };
    let first = (lo / step).ceil() * step;
    let mut out = Vec::new();
    let mut v = first;
    while v <= hi + step * 1e-9 {
        // Snap roundoff so labels print cleanly.
        out.push(if v.abs() < step * 1e-9 { 0.0 } else { v });
        v += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 0.01 && a < 10000.0 {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render_panel(out: &mut String, panel: &Panel, y_offset: f64) {
    let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;

    let mut xr = Range::new();
    let mut yr = Range::new();
    for s in &panel.series {
        for &(x, y) in &s.points {
            xr.add(x);
            yr.add(y);
        }
        if let Some(band) = &s.band {
            for &(x, lo, hi) in band {
                xr.add(x);
                yr.add(lo);
                yr.add(hi);
            }
        }
    }
    if let Some((lo, hi)) = panel.hband {
        yr.add(lo);
        yr.add(hi);
    }
    let (x0, x1) = xr.padded();
    let (y0, y1) = yr.padded();
    let mx = move |x: f64| MARGIN_L + (finite_or(x, x0) - x0) / (x1 - x0) * plot_w;
    let my = move |y: f64| y_offset + MARGIN_T + plot_h - (finite_or(y, y0) - y0) / (y1 - y0) * plot_h;

    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" font-family=\"sans-serif\" font-weight=\"bold\">{}</text>",
        MARGIN_L,
        y_offset + 16.0,
        escape(&panel.title)
    );

    // Frame and ticks.
    let _ = writeln!(
        out,
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>",
        MARGIN_L,
        y_offset + MARGIN_T
    );
    for t in tick_values(x0, x1, 6) {
        let x = mx(t);
        let yb = y_offset + MARGIN_T + plot_h;
        let _ = writeln!(
            out,
            "<line x1=\"{x:.1}\" y1=\"{yb:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>",
            yb + 4.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"10\" font-family=\"sans-serif\" text-anchor=\"middle\">{}</text>",
            yb + 16.0,
            fmt_tick(t)
        );
    }
    for t in tick_values(y0, y1, 5) {
        let y = my(t);
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#333\"/>",
            MARGIN_L - 4.0,
            MARGIN_L
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" font-family=\"sans-serif\" text-anchor=\"end\">{}</text>",
            MARGIN_L - 7.0,
            y + 3.5,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\">{}</text>",
        MARGIN_L + plot_w / 2.0,
        y_offset + PANEL_H - 6.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        y_offset + MARGIN_T + plot_h / 2.0,
        y_offset + MARGIN_T + plot_h / 2.0,
        escape(&panel.y_label)
    );

    if let Some((lo, hi)) = panel.hband {
        let top = my(hi);
        let bottom = my(lo);
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{top:.1}\" width=\"{plot_w:.1}\" height=\"{:.1}\" fill=\"#999\" fill-opacity=\"0.25\"/>",
            MARGIN_L,
            (bottom - top).max(0.5)
        );
    }

    for (i, s) in panel.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(band) = &s.band {
            if band.len() > 1 {
                let mut d = String::new();
                for &(x, lo, _) in band {
                    let _ = write!(d, "{:.2},{:.2} ", mx(x), my(lo));
                }
                for &(x, _, hi) in band.iter().rev() {
                    let _ = write!(d, "{:.2},{:.2} ", mx(x), my(hi));
                }
                let _ = writeln!(
                    out,
                    "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\"/>",
                    d.trim_end()
                );
            }
        }
        if s.points.len() > 1 {
            let mut d = String::new();
            for &(x, y) in &s.points {
                let _ = write!(d, "{:.2},{:.2} ", mx(x), my(y));
            }
            let _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                d.trim_end()
            );
        }
        let ly = y_offset + MARGIN_T + 14.0 + 16.0 * i as f64;
        let lx = PANEL_W - MARGIN_R + 12.0;
        let _ = writeln!(
            out,
            "<line x1=\"{lx:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-size=\"10\" font-family=\"sans-serif\">{}</text>",
            lx + 24.0,
            escape(&s.label)
        );
    }
}

/// Render stacked panels into one standalone SVG document.
pub fn render(panels: &[Panel]) -> String {
    let height = PANEL_H * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PANEL_W:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {PANEL_W:.0} {height:.0}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, PANEL_H * i as f64);
    }
    out.push_str("</svg>\n");
    out
}
