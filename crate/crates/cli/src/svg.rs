//! Static SVG line plots and heatmaps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn header(out: &mut String, title: &str, meta: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, "<metadata>{}</metadata>", escape(meta));
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Residual against iteration on a log axis, one polyline per series.
pub fn convergence_plot(title: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let pts = series
        .iter()
        .flat_map(|(_, s)| s.iter())
        .filter(|p| p.1 > 0.0);
    let (mut kmax, mut lo, mut hi) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(k, r) in pts {
        kmax = kmax.max(k);
        lo = lo.min(r.log10());
        hi = hi.max(r.log10());
    }
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 0.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |k: f64| LEFT + pw * k / kmax;
    let sy = |r: f64| TOP + ph * (hi - r.log10()) / (hi - lo);

    let mut out = String::new();
    header(
        &mut out,
        title,
        &format!("log10 residual range [{lo}, {hi}], iterations 0..{kmax}"),
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut e = lo as i32;
    while e <= hi as i32 {
        let y = TOP + ph * (hi - e as f64) / (hi - lo);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{e}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
        e += 1;
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#,
        LEFT + pw / 2.0,
        H - 12.0
    );
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"];
    for (i, (name, s)) in series.iter().enumerate() {
        let color = colors[i % colors.len()];
        let path: Vec<String> = s
            .iter()
            .filter(|p| p.1 > 0.0)
            .map(|&(k, r)| format!("{:.1},{:.1}", sx(k), sy(r)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}" text-anchor="end">{}</text>"#,
            LEFT + pw - 6.0,
            TOP + 16.0 + 14.0 * i as f64,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Iteration counts over a (β, m) grid. `None` cells are left blank.
pub fn heatmap(
    title: &str,
    betas: &[f64],
    depths: &[f64],
    cell: impl Fn(usize, usize) -> Option<usize>,
) -> String {
    let values: Vec<usize> = (0..depths.len())
        .flat_map(|j| (0..betas.len()).map(move |i| (i, j)))
        .filter_map(|(i, j)| cell(i, j))
        .collect();
    let vmin = values.iter().copied().min().unwrap_or(0) as f64;
    let vmax = values.iter().copied().max().unwrap_or(1) as f64;
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let cw = pw / betas.len().max(1) as f64;
    let ch = ph / depths.len().max(1) as f64;

    let mut out = String::new();
    header(
        &mut out,
        title,
        &format!("iteration color range [{vmin}, {vmax}]"),
    );
    for (j, m) in depths.iter().enumerate() {
        let y = TOP + ph - (j as f64 + 1.0) * ch;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{m}</text>"#,
            LEFT - 6.0,
            y + ch / 2.0 + 4.0
        );
        for i in 0..betas.len() {
            let Some(v) = cell(i, j) else { continue };
            let t = if vmax > vmin {
                (v as f64 - vmin) / (vmax - vmin)
            } else {
                0.0
            };
            // Light yellow for few iterations to dark blue for many.
            let (r, g, b) = (
                (255.0 * (1.0 - t) + 20.0 * t) as u8,
                (240.0 * (1.0 - t) + 40.0 * t) as u8,
                (150.0 * (1.0 - t) + 120.0 * t) as u8,
            );
            let x = LEFT + i as f64 * cw;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{ch:.1}" fill="rgb({r},{g},{b})"><title>{v}</title></rect>"#
            );
        }
    }
    let step = (betas.len() / 10).max(1);
    for (i, b) in betas.iter().enumerate().step_by(step) {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{b}</text>"#,
            LEFT + (i as f64 + 0.5) * cw,
            TOP + ph + 16.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">beta</text><text x="16" y="{}" text-anchor="middle">m</text>"#,
        LEFT + pw / 2.0,
        H - 10.0,
        TOP + ph / 2.0
    );
    out.push_str("</svg>\n");
    out
}
