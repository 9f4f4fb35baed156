//! Static SVG figures: error-surface heatmap and Bode magnitude overlay.

use std::fmt::Write;

use crate::freq::BodeMagnitude;
use crate::matcher::MatchResult;
use crate::num::Real;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 110.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;

/// Viridis-like ramp sampled at five stops.
const RAMP: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

fn color(x: f64) -> String {
    let x = x.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let k = (x.floor() as usize).min(RAMP.len() - 2);
    let u = x - k as f64;
    let (a, b) = (RAMP[k], RAMP[k + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * u).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap of `log10(mse)` with Kd on the horizontal axis and Kp on the
/// vertical axis. The best cell carries `id="best-cell"` and its gains as
/// `data-kp`/`data-kd` attributes. Infinite cells are grey.
pub fn heatmap_svg<T: Real>(result: &MatchResult<T>) -> String {
    let g = &result.grid;
    let finite: Vec<f64> = result
        .error_surface
        .iter()
        .map(|e| e.as_f64())
        .filter(|e| e.is_finite())
        .collect();
    let floor = 1e-12;
    let lmin = finite.iter().fold(f64::INFINITY, |a, &e| a.min((e.max(floor)).log10()));
    let lmax = finite.iter().fold(f64::NEG_INFINITY, |a, &e| a.max((e.max(floor)).log10()));
    let span = if lmax > lmin { lmax - lmin } else { 1.0 };

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let cw = pw / g.kd_count as f64;
    let ch = ph / g.kp_count as f64;

    let mut out = String::new();
    header(&mut out, "Band MSE (dB²), log scale");
    let _ = writeln!(out, r#"<g shape-rendering="crispEdges">"#);
    for i in 0..g.kp_count {
        for j in 0..g.kd_count {
            let e = result.error_at(i, j).as_f64();
            let fill = if e.is_finite() {
                color(((e.max(floor)).log10() - lmin) / span)
            } else {
                "#bbbbbb".to_string()
            };
            let x = LEFT + j as f64 * cw;
            // larger Kp toward the top
            let y = TOP + (g.kp_count - 1 - i) as f64 * ch;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="{fill}"/>"#,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    let _ = writeln!(out, "</g>");

    let (bi, bj) = result.best_index;
    let bx = LEFT + bj as f64 * cw;
    let by = TOP + (g.kp_count - 1 - bi) as f64 * ch;
    let _ = writeln!(
        out,
        r#"<rect id="best-cell" data-kp="{}" data-kd="{}" data-mse="{}" x="{bx:.3}" y="{by:.3}" width="{cw:.3}" height="{ch:.3}" fill="none" stroke="red" stroke-width="2"/>"#,
        result.best_gains.kp, result.best_gains.kd, result.best_error
    );

    for k in 0..=4 {
        let u = k as f64 / 4.0;
        let kd = g.kd_range.0.as_f64() + u * (g.kd_range.1 - g.kd_range.0).as_f64();
        let kp = g.kp_range.0.as_f64() + u * (g.kp_range.1 - g.kp_range.0).as_f64();
        let x = LEFT + cw / 2.0 + u * (pw - cw);
        let y = TOP + ch / 2.0 + (1.0 - u) * (ph - ch);
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{kd:.3}</text>"#,
            HEIGHT - BOTTOM + 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{kp:.2}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Kd (N·m·s/rad)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">Kp (N·m/rad)</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    // colour bar
    let bar_x = WIDTH - RIGHT + 25.0;
    for k in 0..50 {
        let u = k as f64 / 49.0;
        let y = TOP + (1.0 - u) * (ph - ph / 50.0);
        let _ = writeln!(
            out,
            r#"<rect x="{bar_x:.1}" y="{y:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            ph / 50.0 + 0.5,
            color(u)
        );
    }
    if !finite.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">1e{lmax:.1}</text>"#,
            bar_x + 20.0,
            TOP + 8.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">1e{lmin:.1}</text>"#,
            bar_x + 20.0,
            TOP + ph
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Reference and candidate magnitude curves on a log-frequency axis.
pub fn bode_overlay_svg<T: Real>(reference: &BodeMagnitude<T>, candidate: &BodeMagnitude<T>, label: &str) -> String {
    let curves = [reference, candidate];
    let fmin = curves
        .iter()
        .flat_map(|c| c.frequencies.first())
        .map(|f| f.as_f64())
        .fold(f64::INFINITY, f64::min);
    let fmax = curves
        .iter()
        .flat_map(|c| c.frequencies.last())
        .map(|f| f.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut mmin, mut mmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in curves {
        for m in &c.magnitude_db {
            mmin = mmin.min(m.as_f64());
            mmax = mmax.max(m.as_f64());
        }
    }
    mmin = (mmin / 10.0).floor() * 10.0;
    mmax = (mmax / 10.0).ceil() * 10.0;
    if mmax <= mmin {
        mmax = mmin + 10.0;
    }
    let (lf0, lf1) = (fmin.log10(), fmax.log10().max(fmin.log10() + 1e-9));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |f: f64| LEFT + (f.log10() - lf0) / (lf1 - lf0) * pw;
    let py = |m: f64| TOP + (mmax - m) / (mmax - mmin) * ph;

    let mut out = String::new();
    header(&mut out, "Bode magnitude");
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    let mut decade = lf0.ceil() as i32;
    while decade as f64 <= lf1 {
        let x = px(10f64.powi(decade));
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.1}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 16.0,
            10f64.powi(decade)
        );
        decade += 1;
    }
    let mut m = mmin;
    while m <= mmax + 1e-9 {
        let y = py(m);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eee"/><text x="{:.1}" y="{:.2}" text-anchor="end">{m}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
        m += 10.0;
    }
    for (c, stroke, name) in [(reference, "#1f77b4", "reference"), (candidate, "#d62728", label)] {
        let mut pts = String::new();
        for (f, m) in c.frequencies.iter().zip(&c.magnitude_db) {
            let _ = write!(pts, "{:.2},{:.2} ", px(f.as_f64()), py(m.as_f64()));
        }
        let _ = writeln!(
            out,
            r#"<polyline class="{}" fill="none" stroke="{stroke}" stroke-width="1.5" points="{}"/>"#,
            if name == "reference" { "reference" } else { "candidate" },
            pts.trim_end()
        );
    }
    let lx = WIDTH - RIGHT + 10.0;
    let _ = writeln!(
        out,
        r##"<line x1="{lx}" y1="50" x2="{}" y2="50" stroke="#1f77b4" stroke-width="2"/><text x="{}" y="54">reference</text>"##,
        lx + 18.0,
        lx + 22.0
    );
    let _ = writeln!(
        out,
        r##"<line x1="{lx}" y1="68" x2="{}" y2="68" stroke="#d62728" stroke-width="2"/><text x="{}" y="72">{}</text>"##,
        lx + 18.0,
        lx + 22.0,
        escape(label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">frequency (Hz)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">magnitude (dB)</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    out.push_str("</svg>\n");
    out
}
