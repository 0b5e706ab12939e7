//! A minimal bar chart with standard-error whiskers, written by hand so the
//! output is byte-stable.

use std::fmt::Write;

pub struct Bar {
    pub label: String,
    pub value: Option<f64>,
    pub std_error: Option<f64>,
}

const WIDTH: f64 = 520.0;
const HEIGHT: f64 = 320.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bars on a shared axis that always includes 0 and 1. Undefined values
/// are drawn as an "n/a" label.
pub fn bar_chart(title: &str, y_label: &str, bars: &[Bar]) -> String {
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    for b in bars {
        if let Some(v) = b.value {
            let e = b.std_error.unwrap_or(0.0);
            lo = lo.min(v - e);
            hi = hi.max(v + e);
        }
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_h = HEIGHT - TOP - BOTTOM;
    let plot_w = WIDTH - LEFT - RIGHT;
    let y = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    for tick in [0.0, 0.5, 1.0] {
        if tick < lo || tick > hi {
            continue;
        }
        let ty = y(tick);
        let dash = if tick == 0.0 { "" } else { r#" stroke-dasharray="3,3""# };
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#888"{dash}/>"##,
            WIDTH - RIGHT
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick}</text>"#, LEFT - 6.0, ty + 4.0);
    }
    let slot = plot_w / bars.len().max(1) as f64;
    for (i, b) in bars.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 18.0,
            escape(&b.label)
        );
        let Some(v) = b.value else {
            let _ = writeln!(s, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">n/a</text>"#, y(0.0) - 6.0);
            continue;
        };
        let w = slot * 0.6;
        let (top, bottom) = (y(v.max(0.0)), y(v.min(0.0)));
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{top:.2}" width="{w:.2}" height="{:.2}" fill="#4c72b0"/>"##,
            cx - w / 2.0,
            bottom - top
        );
        if let Some(e) = b.std_error.filter(|e| *e > 0.0) {
            let (y1, y2) = (y(v + e), y(v - e));
            let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{y1:.2}" x2="{cx:.2}" y2="{y2:.2}" stroke="black"/>"#);
            for yy in [y1, y2] {
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="black"/>"#,
                    cx - 6.0,
                    cx + 6.0
                );
            }
        }
        let _ = writeln!(s, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{v:.2}</text>"#, y(v.max(0.0)) - 4.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_well_formed() {
        let bars = vec![
            Bar {
                label: "a<b".into(),
                value: Some(0.4),
                std_error: Some(0.1),
            },
            Bar {
                label: "none".into(),
                value: None,
                std_error: None,
            },
        ];
        let s = bar_chart("t", "y", &bars);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a&lt;b") && s.contains("n/a"));
        assert_eq!(s, bar_chart("t", "y", &bars));
    }
}
