//! Self-contained SVG line chart of mean sum-rate against SNR.

use std::fmt::Write;

use relaydof::dof::DofEstimate;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

/// Round `x` up to 1, 2 or 5 times a power of ten.
fn nice_ceil(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return 1.0;
    }
    let p = 10f64.powf(x.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * p).find(|&v| v >= x - 1e-12).unwrap_or(10.0 * p)
}

pub fn render(est: &DofEstimate) -> String {
    let xs = &est.snr_grid_db;
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let top = est
        .mean_rates
        .iter()
        .zip(&est.stderr)
        .map(|(m, s)| m + s)
        .fold(0.0, f64::max);
    let y_max = nice_ceil(top);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - y / y_max * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">Sum-rate vs SNR ({})</text>"#,
        W / 2.0,
        est.scheme
    );

    // axes and grid
    let (ax0, ax1, ay0, ay1) = (px(x0), px(x1), py(0.0), py(y_max));
    let _ = writeln!(
        s,
        r#"<path d="M {ax0:.1} {ay1:.1} L {ax0:.1} {ay0:.1} L {ax1:.1} {ay0:.1}" stroke="black" fill="none"/>"#
    );
    for i in 0..=5 {
        let v = y_max * i as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{ax0:.1}" y1="{y:.1}" x2="{ax1:.1}" y2="{y:.1}" stroke="#dddddd"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            ax0 - 6.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
    let label_every = xs.len().div_ceil(10).max(1);
    for (i, &x) in xs.iter().enumerate() {
        let cx = px(x);
        let _ = writeln!(s, r#"<line x1="{cx:.1}" y1="{ay0:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#, ay0 + 5.0);
        if i % label_every == 0 {
            let _ = writeln!(
                s,
                r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                ay0 + 19.0,
                fmt_tick(x)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SNR (dB)</text>"#,
        (ax0 + ax1) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">mean sum-rate (bits/slot)</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0
    );

    // fitted line over the fit range
    let start = xs.len() - est.fit_points;
    let lg = |db: f64| db / 10.0 * 10f64.log2();
    let fit_x: Vec<f64> = xs[start..].iter().map(|&d| lg(d)).collect();
    let mx = fit_x.iter().sum::<f64>() / fit_x.len() as f64;
    let my = est.mean_rates[start..].iter().sum::<f64>() / fit_x.len() as f64;
    let line = |db: f64| my + est.slope * (lg(db) - mx);
    if est.slope.is_finite() {
        let (a, b) = (xs[start], x1);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#d62728" stroke-dasharray="6 4"/>"##,
            px(a),
            py(line(a).clamp(0.0, y_max)),
            px(b),
            py(line(b).clamp(0.0, y_max))
        );
    }

    // data
    let pts: Vec<String> = xs
        .iter()
        .zip(&est.mean_rates)
        .map(|(&x, &m)| format!("{:.1},{:.1}", px(x), py(m)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" stroke="#1f77b4" stroke-width="2" fill="none"/>"##,
        pts.join(" ")
    );
    for ((&x, &m), &e) in xs.iter().zip(&est.mean_rates).zip(&est.stderr) {
        let cx = px(x);
        if e > 0.0 {
            let _ = writeln!(
                s,
                r##"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="#1f77b4"/>"##,
                py((m - e).max(0.0)),
                py(m + e)
            );
        }
        let _ = writeln!(s, r##"<circle cx="{cx:.1}" cy="{:.1}" r="3" fill="#1f77b4"/>"##, py(m));
    }

    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}">slope {:.4} ± {:.4} (nominal {:.4}, {} trials)</text>"#,
        ax0 + 10.0,
        ay1 + 16.0,
        est.slope,
        est.slope_half_width,
        est.nominal_dof,
        est.trials - est.aborted
    );
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.1}")
    }
}
