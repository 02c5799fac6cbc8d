//! Hand-rolled SVG charts: polyline series with optional vertical markers,
//! and bar charts with confidence whiskers. Output is a pure function of the
//! data (no timestamps, no randomness), so plot files are reproducible.

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#8c564b", "#17becf"];
const MARKER_COLOR: &str = "#9467bd";

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Bar {
    pub label: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_ranges(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        for x in xs.filter(|v| v.is_finite()) {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for y in ys.filter(|v| v.is_finite()) {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        let mut f = Frame { x_min, x_max, y_min, y_max };
        f.degap();
        f
    }

    fn degap(&mut self) {
        if !self.x_min.is_finite() || !self.x_max.is_finite() {
            self.x_min = 0.0;
            self.x_max = 1.0;
        }
        if !self.y_min.is_finite() || !self.y_max.is_finite() {
            self.y_min = 0.0;
            self.y_max = 1.0;
        }
        if self.x_max - self.x_min < 1e-12 {
            let pad = self.x_min.abs().max(1.0) * 0.5;
            self.x_min -= pad;
            self.x_max += pad;
        }
        if self.y_max - self.y_min < 1e-12 {
            let pad = self.y_min.abs().max(1.0) * 0.5;
            self.y_min -= pad;
            self.y_max += pad;
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min)
            * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn open_svg(out: &mut String, title: &str) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = frame.x_min + t * (frame.x_max - frame.x_min);
        let yv = frame.y_min + t * (frame.y_max - frame.y_min);
        let xp = frame.px(xv);
        let yp = frame.py(yv);
        out.push_str(&format!(
            "<line x1=\"{xp:.2}\" y1=\"{y0}\" x2=\"{xp:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
             <text x=\"{xp:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            y0 + 5.0,
            y0 + 18.0,
            fmt_tick(xv)
        ));
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{yp:.2}\" x2=\"{x0}\" y2=\"{yp:.2}\" stroke=\"black\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            yp + 4.0,
            fmt_tick(yv)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label),
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    ));
}

fn legend(out: &mut String, labels: &[(String, &str)]) {
    let mut y = MARGIN_TOP + 8.0;
    for (label, color) in labels {
        let x = WIDTH - MARGIN_RIGHT - 170.0;
        out.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            y - 10.0,
            x + 18.0,
            y,
            escape(label)
        ));
        y += 18.0;
    }
}

/// Polyline chart. `markers` draws dashed vertical lines at the given x
/// positions (adjustment episodes, phase boundaries).
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    markers: &[f64],
) -> String {
    let frame = Frame::from_ranges(
        series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .chain(markers.iter().copied()),
        series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
    );
    let mut out = String::new();
    open_svg(&mut out, title);
    axes(&mut out, &frame, x_label, y_label);
    for &x in markers {
        let xp = frame.px(x);
        out.push_str(&format!(
            "<line x1=\"{xp:.2}\" y1=\"{:.2}\" x2=\"{xp:.2}\" y2=\"{MARGIN_TOP}\" \
             stroke=\"{MARKER_COLOR}\" stroke-dasharray=\"4 3\"/>\n",
            HEIGHT - MARGIN_BOTTOM
        ));
    }
    let mut labels = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut coords = String::new();
        for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            coords.push_str(&format!("{:.2},{:.2} ", frame.px(x), frame.py(y)));
        }
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            coords.trim_end()
        ));
        labels.push((s.label.clone(), color));
    }
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

/// Bar chart with whiskers from `lo` to `hi` per bar.
pub fn bar_chart(title: &str, x_label: &str, y_label: &str, bars: &[Bar]) -> String {
    let frame = Frame::from_ranges(
        (0..bars.len().max(1)).map(|i| i as f64),
        bars.iter().flat_map(|b| [b.value, b.lo, b.hi, 0.0]),
    );
    // categorical x: one unit of room per bar
    let frame = Frame { x_min: -0.5, x_max: bars.len().max(1) as f64 - 0.5, ..frame };
    let mut out = String::new();
    open_svg(&mut out, title);
    axes(&mut out, &frame, x_label, y_label);
    let base = frame.py(0.0f64.clamp(frame.y_min, frame.y_max));
    for (i, bar) in bars.iter().enumerate() {
        let cx = frame.px(i as f64);
        let half = 0.3 * (frame.px(1.0) - frame.px(0.0));
        let top = frame.py(bar.value);
        let (y, h) = if top <= base { (top, base - top) } else { (base, top - base) };
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{h:.2}\" \
             fill=\"{}\" fill-opacity=\"0.7\"/>\n",
            cx - half,
            2.0 * half,
            PALETTE[0]
        ));
        let (lo, hi) = (frame.py(bar.lo), frame.py(bar.hi));
        out.push_str(&format!(
            "<line x1=\"{cx:.2}\" y1=\"{lo:.2}\" x2=\"{cx:.2}\" y2=\"{hi:.2}\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" y1=\"{lo:.2}\" x2=\"{:.2}\" y2=\"{lo:.2}\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" y1=\"{hi:.2}\" x2=\"{:.2}\" y2=\"{hi:.2}\" stroke=\"black\"/>\n",
            cx - 6.0,
            cx + 6.0,
            cx - 6.0,
            cx + 6.0
        ));
        out.push_str(&format!(
            "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_BOTTOM + 32.0,
            escape(&bar.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}
