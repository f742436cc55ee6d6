//! Static SVG figures: conditional centile charts and QQ plots. Output is a
//! pure function of the input, with coordinates printed to three decimals.

use std::fmt::Write;

use crate::chartmodel::{predict, BootstrapBands, FittedChartModel, ScreeningQuery};
use crate::diagnosis::DiagnosticsReport;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 52.0;
const CURVE_POINTS: usize = 60;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Frame {
        let pad = |lo: f64, hi: f64| {
            let span = if hi > lo { hi - lo } else { 1.0 };
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        let (x0, x1) = pad(x.0, x.1);
        let (y0, y1) = pad(y.0, y.1);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{l:.3},{t:.3}V{b:.3}H{r:.3}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for k in 0..=4 {
        let x = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let px = f.px(x);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.3}" y1="{b:.3}" x2="{px:.3}" y2="{:.3}" stroke="black"/><text x="{px:.3}" y="{:.3}" text-anchor="middle">{x:.3}</text>"#,
            b + 5.0,
            b + 18.0
        );
        let y = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let py = f.py(y);
        let _ = writeln!(
            out,
            r#"<line x1="{:.3}" y1="{py:.3}" x2="{l:.3}" y2="{py:.3}" stroke="black"/><text x="{:.3}" y="{:.3}" text-anchor="end">{y:.3}</text>"#,
            l - 5.0,
            l - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(16,{:.3}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

/// Conditional centile curves for one subject from its last measurement to
/// the end of the model domain, with its history, the screened point at
/// `query.t_query`, and optional bootstrap intervals drawn at that time.
pub fn render_chart(
    model: &FittedChartModel,
    query: &ScreeningQuery,
    bands: Option<&BootstrapBands>,
) -> Result<String> {
    let spec = &model.config.spec;
    let start = query.history.last().map_or(spec.t_lower, |h| h.0);
    if start >= spec.t_upper {
        return Err(Error::Domain(format!(
            "history ends at {start}, beyond the model domain"
        )));
    }
    let g = model.config.tau_grid.len();
    let mut curves = vec![Vec::with_capacity(CURVE_POINTS); g];
    for k in 1..=CURVE_POINTS {
        let t = start + (spec.t_upper - start) * k as f64 / CURVE_POINTS as f64;
        let q = ScreeningQuery {
            t_query: t,
            ..query.clone()
        };
        for (curve, v) in curves.iter_mut().zip(predict(model, &q)?.values) {
            curve.push((t, v));
        }
    }
    if let Some(b) = bands {
        if b.lower.len() != g {
            return Err(Error::Shape(
                "bootstrap bands do not match the tau grid".into(),
            ));
        }
    }

    let xs = extent(
        query
            .history
            .iter()
            .map(|h| h.0)
            .chain([start, spec.t_upper, query.t_query]),
    );
    let band_values = bands
        .into_iter()
        .flat_map(|b| b.lower.iter().chain(&b.upper).copied());
    let ys = extent(
        curves
            .iter()
            .flatten()
            .map(|p| p.1)
            .chain(query.history.iter().map(|h| h.1))
            .chain([query.y_query])
            .chain(band_values),
    );
    let f = Frame::new(xs, ys);

    let mut out = String::new();
    open(&mut out, "conditional centiles");
    axes(&mut out, &f, "time", "measurement");
    if let Some(b) = bands {
        let px = f.px(query.t_query);
        for (lo, hi) in b.lower.iter().zip(&b.upper) {
            let (top, bottom) = (f.py(*hi), f.py(*lo));
            let _ = writeln!(
                out,
                r#"<rect class="band" x="{:.3}" y="{top:.3}" width="8.000" height="{:.3}" fill="gray" fill-opacity="0.4"/>"#,
                px - 4.0,
                (bottom - top).max(0.5)
            );
        }
    }
    for (tau, curve) in model.config.tau_grid.iter().zip(&curves) {
        let mut d = String::new();
        for (k, (t, v)) in curve.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.3},{:.3}",
                if k == 0 { "M" } else { "L" },
                f.px(*t),
                f.py(*v)
            );
        }
        let _ = writeln!(
            out,
            r##"<path class="centile" data-tau="{tau}" d="{d}" fill="none" stroke="#1f4e9c" stroke-width="1.2"/>"##
        );
        if let Some(&(t, v)) = curve.last() {
            let _ = writeln!(
                out,
                r#"<text x="{:.3}" y="{:.3}" font-size="10">{tau}</text>"#,
                f.px(t) - 22.0,
                f.py(v) - 3.0
            );
        }
    }
    for &(t, y) in &query.history {
        let _ = writeln!(
            out,
            r#"<circle class="history" cx="{:.3}" cy="{:.3}" r="3" fill="black"/>"#,
            f.px(t),
            f.py(y)
        );
    }
    let _ = writeln!(
        out,
        r##"<circle class="subject" cx="{:.3}" cy="{:.3}" r="4.5" fill="#c0392b"/>"##,
        f.px(query.t_query),
        f.py(query.y_query)
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Observed against simulated quantiles with the identity line.
pub fn render_qq(report: &DiagnosticsReport) -> String {
    let title = format!("measurement {}, {}", report.j, report.group_label);
    let mut out = String::new();
    open(&mut out, &title);
    if report.qq_pairs.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">no observations</text>"#,
            WIDTH / 2.0,
            HEIGHT / 2.0
        );
        out.push_str("</svg>\n");
        return out;
    }
    let r = extent(
        report
            .qq_pairs
            .iter()
            .flat_map(|p| [p.simulated, p.observed]),
    );
    let f = Frame::new(r, r);
    axes(&mut out, &f, "simulated quantile", "observed quantile");
    let (lo, hi) = (f.x0.max(f.y0), f.x1.min(f.y1));
    let _ = writeln!(
        out,
        r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="gray" stroke-dasharray="4 3"/>"#,
        f.px(lo),
        f.py(lo),
        f.px(hi),
        f.py(hi)
    );
    for p in &report.qq_pairs {
        let _ = writeln!(
            out,
            r#"<circle class="qq" cx="{:.3}" cy="{:.3}" r="2.5" fill="none" stroke="black"/>"#,
            f.px(p.simulated),
            f.py(p.observed)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.3}" y="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(&title)
    );
    out.push_str("</svg>\n");
    out
}
