//! Standalone SVG line chart for sweep results.

use super::metrics::MetricsReport;
use super::sweep::SweepResult;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

/// A "nice" tick step covering `span` in about five steps.
fn tick_step(span: f64) -> f64 {
    if span <= 0.0 || !span.is_finite() {
        return 1.0;
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.3}", v);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Plots the mean of `metric` against the swept value, with one-stddev bars
/// and every run as a faint dot.
pub fn sweep_svg(res: &SweepResult, metric: &str) -> String {
    let idx = MetricsReport::FIELDS.iter().position(|&f| f == metric);
    let aggs = res.aggregates();
    let mean: Vec<(f64, f64, f64)> = aggs
        .iter()
        .filter_map(|a| {
            let i = idx?;
            Some((a.value, a.mean[i]?, a.stddev[i].unwrap_or(0.0)))
        })
        .collect();
    let dots: Vec<(f64, f64)> = res
        .rows
        .iter()
        .filter_map(|r| Some((r.value, r.report.values()[idx?]?)))
        .collect();

    let (x0, x1) = range(aggs.iter().map(|a| a.value));
    let (mut y0, y1) = range(
        dots.iter()
            .map(|d| d.1)
            .chain(mean.iter().flat_map(|m| [m.1 - m.2, m.1 + m.2])),
    );
    if y0 > 0.0 && y0 < 0.5 * y1 {
        y0 = 0.0;
    }
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let mut w = |line: String| {
        s.push_str(&line);
        s.push('\n');
    };
    w(format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    ));
    w(format!(r#"<rect width="{W}" height="{H}" fill="white"/>"#));
    w(format!(
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{} vs {}</text>"#,
        W / 2.0,
        escape(metric),
        res.variable
    ));
    w(format!(
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    ));

    let step = tick_step(x1 - x0);
    let mut t = (x0 / step).ceil() * step;
    while t <= x1 + step * 1e-9 {
        let x = sx(t);
        w(format!(
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#444"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 19.0,
            fmt_tick(t)
        ));
        t += step;
    }
    let step = tick_step(y1 - y0);
    let mut t = (y0 / step).ceil() * step;
    while t <= y1 + step * 1e-9 {
        let y = sy(t);
        w(format!(
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            LEFT,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(t)
        ));
        t += step;
    }
    w(format!(
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 14.0,
        res.variable
    ));
    w(format!(
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(metric)
    ));

    for &(x, y) in &dots {
        w(format!(
            r##"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="#9ab" fill-opacity="0.6"/>"##,
            sx(x),
            sy(y)
        ));
    }
    for &(x, m, sd) in &mean {
        if sd > 0.0 {
            w(format!(
                r##"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="#c33"/>"##,
                sx(x),
                sy(m - sd),
                sy(m + sd)
            ));
        }
    }
    if !mean.is_empty() {
        let pts: Vec<String> = mean
            .iter()
            .map(|&(x, m, _)| format!("{:.1},{:.1}", sx(x), sy(m)))
            .collect();
        w(format!(
            r##"<polyline points="{}" fill="none" stroke="#c33" stroke-width="2"/>"##,
            pts.join(" ")
        ));
        for &(x, m, _) in &mean {
            w(format!(
                r##"<circle cx="{:.1}" cy="{:.1}" r="4" fill="#c33"/>"##,
                sx(x),
                sy(m)
            ));
        }
    } else {
        w(format!(
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">no defined values</text>"#,
            LEFT + pw / 2.0,
            TOP + ph / 2.0
        ));
    }
    w("</svg>".into());
    s
}
