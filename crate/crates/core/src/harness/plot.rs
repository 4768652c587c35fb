//! Minimal standalone SVG line charts.

use std::fmt::Write as _;

use super::RoundAggregate;
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 56.0;
const MAX_POINTS: usize = 1000;
const COLORS: [&str; 2] = ["#1f5fa8", "#d0671f"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    CumRegret,
    RoundRegret,
    Revenue,
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn sample_indices(n: usize) -> Vec<usize> {
    let step = n.div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..n).step_by(step).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    idx
}

fn series(rows: &[RoundAggregate], idx: &[usize], name: &str, f: impl Fn(usize) -> f64) -> Series {
    Series {
        name: name.to_string(),
        points: idx.iter().map(|&i| (rows[i].round as f64, f(i))).collect(),
    }
}

fn build(rows: &[RoundAggregate], kind: PlotKind) -> (&'static str, &'static str, Vec<Series>) {
    let idx = sample_indices(rows.len());
    match kind {
        PlotKind::CumRegret => {
            let mid = (rows.len() / 2).max(1) - 1;
            let scale = rows[mid].mean_cum_regret / (rows[mid].round as f64).sqrt();
            (
                "Mean cumulative regret",
                "cumulative regret",
                vec![
                    series(rows, &idx, "mean cumulative regret", |i| {
                        rows[i].mean_cum_regret
                    }),
                    series(rows, &idx, "scaled sqrt(t)", |i| {
                        scale * (rows[i].round as f64).sqrt()
                    }),
                ],
            )
        }
        PlotKind::RoundRegret => {
            let window = (rows.len() / 50).max(1);
            let mut prefix = vec![0.0; rows.len() + 1];
            for (i, r) in rows.iter().enumerate() {
                prefix[i + 1] = prefix[i] + r.mean_round_regret;
            }
            (
                "Mean regret per round",
                "regret",
                vec![
                    series(rows, &idx, "mean round regret", |i| {
                        rows[i].mean_round_regret
                    }),
                    series(rows, &idx, "trailing mean", |i| {
                        let lo = (i + 1).saturating_sub(window);
                        (prefix[i + 1] - prefix[lo]) / (i + 1 - lo) as f64
                    }),
                ],
            )
        }
        PlotKind::Revenue => (
            "Cumulative user utility",
            "utility",
            vec![
                series(rows, &idx, "actual", |i| rows[i].mean_user_utility),
                series(rows, &idx, "clairvoyant", |i| {
                    rows[i].mean_clairvoyant_utility
                }),
            ],
        ),
    }
}

/// Renders one chart of `rows` as an SVG document.
pub fn render_plot(rows: &[RoundAggregate], kind: PlotKind) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    let (title, y_label, all) = build(rows, kind);
    let x_min = rows[0].round as f64;
    let x_max = (rows[rows.len() - 1].round as f64).max(x_min + 1.0);
    let ys = all.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let (mut y_min, mut y_max) = ys.fold((0.0f64, 0.0f64), |(lo, hi), y| (lo.min(y), hi.max(y)));
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    if y_min < 0.0 {
        y_min -= pad;
    }
    y_max += pad;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#,
        WIDTH / 2.0
    );
    let (x0, y0, x1, y1) = (px(x_min), py(y_min), px(x_max), py(y_max));
    let _ = writeln!(
        svg,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x_min + f * (x_max - x_min);
        let yv = y_min + f * (y_max - y_min);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(xv),
            y0 + 18.0,
            xv.round()
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py(yv) + 4.0,
            format_tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">round</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{y_label}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for (k, s) in all.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            s.name,
            pts.join(" ")
        );
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            LEFT + 12.0,
            LEFT + 32.0,
            LEFT + 38.0,
            ly + 4.0,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == 0.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: u64) -> Vec<RoundAggregate> {
        (1..=n)
            .map(|t| RoundAggregate {
                round: t,
                mean_cum_regret: 2.0 * (t as f64).sqrt(),
                mean_round_regret: 1.0 / (t as f64).sqrt(),
                mean_user_utility: 0.5 * t as f64,
                mean_clairvoyant_utility: 0.6 * t as f64,
            })
            .collect()
    }

    #[test]
    fn downsampling_keeps_endpoints() {
        let idx = sample_indices(10_000);
        assert!(idx.len() <= MAX_POINTS + 1);
        assert_eq!(idx[0], 0);
        assert_eq!(*idx.last().unwrap(), 9_999);
        assert_eq!(sample_indices(1), vec![0]);
    }

    #[test]
    fn guide_matches_curve_at_half_horizon() {
        let r = rows(100);
        let (_, _, s) = build(&r, PlotKind::CumRegret);
        let at = |k: usize| s[k].points.iter().find(|p| p.0 == 50.0).unwrap().1;
        assert!((at(0) - at(1)).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(render_plot(&[], PlotKind::Revenue).is_err());
    }

    #[test]
    fn every_kind_has_two_series() {
        for kind in [
            PlotKind::CumRegret,
            PlotKind::RoundRegret,
            PlotKind::Revenue,
        ] {
            let svg = render_plot(&rows(5), kind).unwrap();
            assert_eq!(svg.matches("<polyline").count(), 2);
        }
        assert!(render_plot(&rows(1), PlotKind::CumRegret).is_ok());
    }
}
