//! Minimal hand-rolled SVG line charts for the report command. No external
//! renderer: the output is a self-contained `<svg>` document.

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 200.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 58.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dotted vertical guides (e.g. phase boundaries), in data coordinates.
    pub vlines: Vec<f64>,
    /// Plot x on a log10 scale (positive x only).
    pub log_x: bool,
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LineChart {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
            vlines: Vec::new(),
            log_x: false,
        }
    }

    pub fn render(&self) -> String {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let finite = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite();

        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for p in s.points.iter().map(|&(x, y)| (tx(x), y)).filter(finite) {
                xs.push(p.0);
                ys.push(p.1);
            }
        }
        for &v in &self.vlines {
            let v = tx(v);
            if v.is_finite() {
                xs.push(v);
            }
        }

        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
        ));
        out.push_str(&format!(
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            escape(&self.title)
        ));

        if xs.is_empty() {
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">no data</text>\n",
                WIDTH / 2.0,
                HEIGHT / 2.0
            ));
            out.push_str("</svg>\n");
            return out;
        }

        let (x_lo, x_hi) = padded_range(&xs, 0.0);
        let (y_lo, y_hi) = padded_range(&ys, 0.05);
        let sx = move |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let sy = move |y: f64| MARGIN_TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

        // Frame and axes.
        out.push_str(&format!(
            "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" \
             fill=\"none\" stroke=\"#444\"/>\n"
        ));

        // Ticks and grid lines.
        for t in nice_ticks(y_lo, y_hi, 6) {
            let y = sy(t);
            out.push_str(&format!(
                "<line x1=\"{MARGIN_LEFT}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
                 stroke=\"#ddd\"/>\n",
                MARGIN_LEFT + plot_w
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
                MARGIN_LEFT - 6.0,
                y + 4.0,
                fmt_tick(t)
            ));
        }
        let x_ticks = if self.log_x {
            log_ticks(x_lo, x_hi)
        } else {
            nice_ticks(x_lo, x_hi, 6)
        };
        for t in x_ticks {
            let x = sx(t);
            out.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>\n",
                MARGIN_TOP + plot_h,
                MARGIN_TOP + plot_h + 5.0
            ));
            let label = if self.log_x { fmt_tick(10f64.powf(t)) } else { fmt_tick(t) };
            out.push_str(&format!(
                "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                MARGIN_TOP + plot_h + 18.0,
                label
            ));
        }

        // Axis labels.
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"20\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" \
             transform=\"rotate(-90 20 {:.1})\">{}</text>\n",
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        ));

        // Phase-boundary guides.
        for &v in &self.vlines {
            let v = tx(v);
            if !v.is_finite() || v < x_lo || v > x_hi {
                continue;
            }
            let x = sx(v);
            out.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{MARGIN_TOP}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
                 stroke=\"#888\" stroke-dasharray=\"4 4\"/>\n",
                MARGIN_TOP + plot_h
            ));
        }

        // Series and legend.
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| (tx(x), y))
                .filter(finite)
                .map(|(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
                .collect();
            if pts.len() == 1 {
                let (x, y) = pts[0].split_once(',').unwrap();
                out.push_str(&format!(
                    "<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"{color}\"/>\n"
                ));
            } else if !pts.is_empty() {
                out.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" \
                     points=\"{}\"/>\n",
                    pts.join(" ")
                ));
            }
            let ly = MARGIN_TOP + 14.0 + i as f64 * 18.0;
            let lx = MARGIN_LEFT + plot_w + 14.0;
            out.push_str(&format!(
                "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
                 stroke=\"{color}\" stroke-width=\"2\"/>\n",
                lx + 18.0
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>\n",
                lx + 24.0,
                ly + 4.0,
                escape(&s.name)
            ));
        }

        out.push_str("</svg>\n");
        out
    }
}

fn padded_range(values: &[f64], pad: f64) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return (lo - 1.0, hi + 1.0);
    }
    let span = hi - lo;
    (lo - pad * span, hi + pad * span)
}

/// Round tick positions: multiples of {1, 2, 5} x 10^k covering the range.
fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span.is_finite() && span > 0.0) {
        return vec![lo];
    }
    let raw = span / target.max(2) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm <= 1.0 + 1e-9 {
        1.0
    } else if norm <= 2.0 + 1e-9 {
        2.0
    } else if norm <= 5.0 + 1e-9 {
        5.0
    } else {
        10.0
    } * mag;
    let first = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = first;
    while t <= hi + step * 1e-9 {
        // Snap near-zero ticks produced by rounding to exactly zero.
        ticks.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    ticks
}

/// Decade ticks (with the 5x midpoints when the range is short) for log-x
/// charts; positions are in log10 space.
fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let mut ticks = Vec::new();
    let first = lo.ceil() as i64 - 1;
    let last = hi.floor() as i64 + 1;
    let decades = (last - first).max(1);
    for d in first..=last {
        let base = d as f64;
        if base >= lo && base <= hi {
            ticks.push(base);
        }
        if decades <= 6 {
            let mid = base + 5f64.log10();
            if mid >= lo && mid <= hi {
                ticks.push(mid);
            }
        }
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a >= 1e6 {
        format!("{}M", trim(v / 1e6))
    } else if a >= 1e4 {
        format!("{}k", trim(v / 1e3))
    } else {
        trim(v)
    }
}

fn trim(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
