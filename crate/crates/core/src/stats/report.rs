//! Text renderings of trial summaries: accuracy table CSV, accuracy-vs-updates
//! CSV and a dependency-free SVG line chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{mean_curve, Summary, TrialResult};
use crate::curriculum::Strategy;
use crate::error::Result;

/// `strategy,trials,mean_accuracy,std_accuracy,mean_updates,t,p_value,significant`
pub fn summary_csv(summary: &Summary) -> String {
    let mut out = String::from(
        "strategy,trials,mean_accuracy,std_accuracy,mean_updates,t,p_value,significant\n",
    );
    for row in &summary.rows {
        let (t, p, star) = match &row.vs_baseline {
            Some(s) => (
                format!("{:.6}", s.t),
                format!("{:.6}", s.p_value),
                if s.significant { "*" } else { "" },
            ),
            None => (String::new(), String::new(), ""),
        };
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.1},{},{},{}",
            row.strategy,
            row.trials,
            row.mean_accuracy,
            row.std_accuracy,
            row.mean_updates,
            t,
            p,
            star
        );
    }
    out
}

fn curves(trials: &[TrialResult]) -> Result<BTreeMap<Strategy, Vec<(f64, f64)>>> {
    let mut grouped: BTreeMap<Strategy, Vec<&TrialResult>> = BTreeMap::new();
    for t in trials {
        grouped.entry(t.strategy).or_default().push(t);
    }
    grouped
        .into_iter()
        .map(|(s, mut ts)| {
            ts.sort_by_key(|t| t.seed);
            Ok((s, mean_curve(&ts)?))
        })
        .collect()
}

/// `strategy,point,updates,mean_accuracy`, one row per evaluation point.
pub fn curve_csv(trials: &[TrialResult]) -> Result<String> {
    let mut out = String::from("strategy,point,updates,mean_accuracy\n");
    for (s, curve) in curves(trials)? {
        for (i, (u, a)) in curve.iter().enumerate() {
            let _ = writeln!(out, "{s},{i},{u:.1},{a:.6}");
        }
    }
    Ok(out)
}

const PALETTE: [&str; 7] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf",
];

/// Mean accuracy against cumulative gradient updates, one line per strategy.
pub fn curve_svg(trials: &[TrialResult], title: &str) -> Result<String> {
    let curves = curves(trials)?;
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let points = curves.values().flatten();
    let max_u = points.clone().map(|p| p.0).fold(0.0f64, f64::max).max(1.0);
    let (mut lo, mut hi) = points
        .map(|p| p.1)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
            (lo.min(a), hi.max(a))
        });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    lo = (lo - 0.02).max(0.0);
    hi = (hi + 0.02).min(1.0);
    if hi - lo < 1e-6 {
        hi = lo + 0.1;
    }
    let x = |u: f64| left + u / max_u * pw;
    let y = |a: f64| top + (hi - a) / (hi - lo) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let u = max_u * frac;
        let a = lo + (hi - lo) * frac;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"#,
            x(u),
            top + ph + 18.0,
            u
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            y(a) + 4.0,
            a
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Gradient updates</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">Mean macro accuracy</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (i, (s, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .iter()
            .map(|&(u, a)| format!("{:.1},{:.1}", x(u), y(a)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        for &(u, a) in curve {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}"/>"#,
                x(u),
                y(a)
            );
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">{s}</text>"#,
            lx + 26.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{aggregate, EvalPoint};

    fn trial(strategy: Strategy, seed: u64, accs: &[f64]) -> TrialResult {
        let curve: Vec<EvalPoint> = accs
            .iter()
            .enumerate()
            .map(|(i, &a)| EvalPoint {
                stage: i + 1,
                epoch: i + 1,
                updates: 10 * (i as u64 + 1),
                accuracy: a,
            })
            .collect();
        TrialResult {
            strategy,
            seed,
            stage_accuracies: accs.to_vec(),
            stage_updates: curve.iter().map(|p| p.updates).collect(),
            final_accuracy: *accs.last().unwrap(),
            total_updates: curve.last().unwrap().updates,
            curve,
            epoch_losses: vec![],
        }
    }

    #[test]
    fn csv_shapes() {
        let ts = vec![
            trial(Strategy::None, 1, &[0.5]),
            trial(Strategy::None, 2, &[0.6]),
            trial(Strategy::Ipa1, 1, &[0.3, 0.7]),
            trial(Strategy::Ipa1, 2, &[0.4, 0.8]),
        ];
        let table = summary_csv(&aggregate(&ts, Strategy::None).unwrap());
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("none,2,0.550000"));
        assert!(lines[2].starts_with("ipa1,2,0.750000"));

        let curve = curve_csv(&ts).unwrap();
        assert!(curve.contains("ipa1,1,20.0,0.750000"));
        assert!(curve.contains("none,0,10.0,0.550000"));

        let svg = curve_svg(&ts, "a < b").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
