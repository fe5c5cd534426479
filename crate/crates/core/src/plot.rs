//! Static SVG charts of metric reports.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::eval::{MetricsReport, ProtocolKind, ProtocolSpec};
use crate::numfmt::fmt9;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with markers; `x_labels` replaces numeric ticks when given.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], x_labels: Option<&[String]>) -> Result<String> {
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if pts.is_empty() {
        return Err(Error::InvalidInput("nothing to plot".into()));
    }
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in plot data".into()));
    }
    let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let y1 = pts.iter().fold(0.0f64, |a, p| a.max(p.1)) * 1.1;
    let y1 = if y1 > 0.0 { y1 } else { 1.0 };
    if x1 == x0 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - y / y1 * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {b} H{r} M{m} {b} V{m}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for k in 0..=4 {
        let v = y1 * k as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(svg, r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, W - MARGIN);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN - 6.0, y + 4.0, tick(v));
    }
    match x_labels {
        Some(labels) => {
            for (i, l) in labels.iter().enumerate() {
                let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, sx(i as f64), H - MARGIN + 18.0, escape(l));
            }
        }
        None => {
            for k in 0..=4 {
                let v = x0 + (x1 - x0) * k as f64 / 4.0;
                let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, sx(v), H - MARGIN + 18.0, tick(v));
            }
        }
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" stroke="{c}" stroke-width="2" fill="none"/>"#, path.join(" "));
        for &(x, y) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(x), sy(y));
        }
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/>"#, W - MARGIN - 130.0, ly - 9.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}">{}</text>"#, W - MARGIN - 115.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        fmt9((v * 100.0).round() / 100.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A sweep of reports as MPJPE against protocol (noise sigma on the x axis when
/// every protocol is clean or noise), or a single report's per-joint errors.
pub fn metrics_svg(reports: &[MetricsReport]) -> Result<String> {
    match reports {
        [] => Err(Error::InvalidInput("no metric reports".into())),
        [r] => {
            let s = Series {
                name: "MPJPE".into(),
                points: r.per_joint.iter().enumerate().map(|(i, &e)| (i as f64, e)).collect(),
            };
            line_chart(
                &format!("Per-joint error ({})", r.protocol),
                "joint",
                "error (mm)",
                &[s],
                Some(&r.joint_names),
            )
        }
        many => {
            let sigmas: Option<Vec<f64>> = many
                .iter()
                .map(|r| match r.protocol.parse::<ProtocolSpec>().ok()?.kind {
                    ProtocolKind::Clean => Some(0.0),
                    ProtocolKind::Noise(s) => Some(s),
                    ProtocolKind::Occlusion(_) => None,
                })
                .collect();
            let xs: Vec<f64> = match &sigmas {
                Some(s) => s.clone(),
                None => (0..many.len()).map(|i| i as f64).collect(),
            };
            let mut series = vec![Series {
                name: "MPJPE".into(),
                points: xs.iter().zip(many).map(|(&x, r)| (x, r.mpjpe)).collect(),
            }];
            let pick = |name: &str, f: fn(&MetricsReport) -> Option<f64>| {
                let points: Vec<(f64, f64)> = xs.iter().zip(many).filter_map(|(&x, r)| f(r).map(|v| (x, v))).collect();
                (!points.is_empty()).then(|| Series { name: name.into(), points })
            };
            series.extend(pick("occluded joints", |r| r.occluded_mpjpe));
            series.extend(pick("mean-pose baseline", |r| r.baseline_mpjpe));
            let labels: Vec<String> = many.iter().map(|r| r.protocol.clone()).collect();
            match sigmas {
                Some(_) => line_chart("Error under detector noise", "noise sigma (px)", "MPJPE (mm)", &series, None),
                None => line_chart("Error by protocol", "protocol", "MPJPE (mm)", &series, Some(&labels)),
            }
        }
    }
}

/// Parses a single report or an array of reports.
pub fn parse_reports(json: &str) -> Result<Vec<MetricsReport>> {
    let v: serde_json::Value = serde_json::from_str(json)?;
    Ok(match v {
        serde_json::Value::Array(_) => serde_json::from_value(v)?,
        _ => vec![serde_json::from_value(v)?],
    })
}
