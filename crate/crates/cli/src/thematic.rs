//! Quantile classing and SVG choropleths of a single hex frame column.

use std::fmt::Write as _;

use anyhow::{bail, ensure, Context, Result};
use hexposome::expometrics::bivariate;
use hexposome::hexgrid::cell_boundary;
use hexposome::ingest::HexFrame;

/// Empirical quantiles at i/k for i = 1..k−1, interpolating linearly between
/// order statistics at position q·(n − 1).
pub fn quantile_breaks(values: &[f64], k: usize) -> Result<Vec<f64>> {
    ensure!(k >= 2, "need at least 2 classes, got {k}");
    ensure!(!values.is_empty(), "no values to class");
    ensure!(values.iter().all(|v| v.is_finite()), "non-finite value in classing input");
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok((1..k)
        .map(|i| {
            let pos = i as f64 / k as f64 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
        })
        .collect())
}

/// Class index in 0..=breaks.len(). Classes are [b(i−1), b(i)); the last
/// one is closed above.
pub fn class_of(v: f64, breaks: &[f64]) -> usize {
    breaks.iter().take_while(|b| v >= **b).count()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classing {
    Quantile { column: String, classes: usize },
    /// Smoke and total PM2.5 columns on the 4×4 AQI grid.
    Bivariate { smoke: String, total: String },
    /// Two classes split at `threshold`.
    CeemThreshold { column: String, threshold: f64 },
}

pub const CEEM_THRESHOLD: f64 = 1.0;

const SEQUENTIAL: [&str; 10] = [
    "#fff5eb", "#fee6ce", "#fdd0a2", "#fdae6b", "#fd8d3c", "#f16913", "#d94801", "#a63603", "#7f2704", "#4d1a02",
];

const BIVARIATE: [&str; 16] = [
    "#e8e8e8", "#b5c0da", "#6c83b5", "#304c89", "#e4d9ac", "#b0d5df", "#6a99c4", "#2e6395", "#dcc470",
    "#a9b971", "#6a8e8f", "#2d5f74", "#c8b35a", "#98953b", "#5e7a3e", "#2a5a5b",
];

const CEEM_COLORS: [&str; 2] = ["#4575b4", "#d73027"];

const MISSING: &str = "#bdbdbd";

fn check_color(c: &str) -> Result<()> {
    let ok = c.len() == 7 && c.starts_with('#') && c[1..].bytes().all(|b| b.is_ascii_hexdigit());
    ensure!(ok, "palette color {c:?} is not #rrggbb");
    Ok(())
}

fn pick_palette(custom: Option<&[String]>, needed: usize, default: &[&str]) -> Result<Vec<String>> {
    match custom {
        Some(p) => {
            ensure!(p.len() == needed, "palette has {} colors, {needed} needed", p.len());
            for c in p {
                check_color(c)?;
            }
            Ok(p.to_vec())
        }
        None if needed <= default.len() => {
            // spread the classes over the full ramp
            Ok((0..needed)
                .map(|i| default[i * (default.len() - 1) / (needed - 1).max(1)].to_string())
                .collect())
        }
        None => bail!("no default palette for {needed} classes; pass one explicitly"),
    }
}

struct Plan {
    /// Per frame row: class index, or None when the input is missing.
    classes: Vec<Option<usize>>,
    colors: Vec<String>,
    labels: Vec<String>,
    title: String,
}

fn column(frame: &HexFrame, name: &str) -> Result<usize> {
    frame.column_index(name).with_context(|| format!("frame has no column {name:?}"))
}

fn plan(frame: &HexFrame, classing: &Classing, palette: Option<&[String]>) -> Result<Plan> {
    match classing {
        Classing::Quantile { column: name, classes } => {
            let c = column(frame, name)?;
            let vals: Vec<Option<f64>> = frame.rows().map(|(_, v)| v[c]).collect();
            let present: Vec<f64> = vals.iter().flatten().copied().collect();
            let breaks = quantile_breaks(&present, *classes)?;
            let mut labels = Vec::with_capacity(*classes);
            for i in 0..*classes {
                let lo = if i == 0 { present.iter().copied().fold(f64::INFINITY, f64::min) } else { breaks[i - 1] };
                let hi = if i + 1 == *classes {
                    present.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                } else {
                    breaks[i]
                };
                let close = if i + 1 == *classes { ']' } else { ')' };
                labels.push(format!("[{lo:.4}, {hi:.4}{close}"));
            }
            Ok(Plan {
                classes: vals.iter().map(|v| v.map(|x| class_of(x, &breaks))).collect(),
                colors: pick_palette(palette, *classes, &SEQUENTIAL)?,
                labels,
                title: format!("{name} quantiles"),
            })
        }
        Classing::Bivariate { smoke, total } => {
            let (a, b) = (column(frame, smoke)?, column(frame, total)?);
            let mut classes = Vec::with_capacity(frame.len());
            for (_, v) in frame.rows() {
                classes.push(match (v[a], v[b]) {
                    (Some(x), Some(y)) => {
                        let (cx, cy) = bivariate(x, y)?;
                        Some(4 * usize::from(cx.code() - 1) + usize::from(cy.code() - 1))
                    }
                    _ => None,
                });
            }
            let labels = (0..16).map(|i| format!("{smoke} {} / {total} {}", i / 4 + 1, i % 4 + 1)).collect();
            Ok(Plan {
                classes,
                colors: pick_palette(palette, 16, &BIVARIATE)?,
                labels,
                title: format!("{smoke} × {total}"),
            })
        }
        Classing::CeemThreshold { column: name, threshold } => {
            ensure!(threshold.is_finite(), "threshold must be finite");
            let c = column(frame, name)?;
            Ok(Plan {
                classes: frame.rows().map(|(_, v)| v[c].map(|x| usize::from(x > *threshold))).collect(),
                colors: pick_palette(palette, 2, &CEEM_COLORS)?,
                labels: vec![format!("≤ {threshold}"), format!("> {threshold}")],
                title: format!("{name} limit exceedance"),
            })
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One `<polygon>` per frame row, in frame order, with a legend group. The
/// frame must hold a single period.
pub fn render_svg(frame: &HexFrame, classing: &Classing, palette: Option<&[String]>) -> Result<String> {
    let periods = frame.periods();
    ensure!(
        periods.len() <= 1,
        "frame has {} periods; select one with a period filter",
        periods.len()
    );
    ensure!(!frame.is_empty(), "frame has no rows to render");
    let plan = plan(frame, classing, palette)?;
    let g = frame.grid().grid();
    let rings = frame
        .rows()
        .map(|(k, _)| cell_boundary(&k.hex, &g))
        .collect::<Result<Vec<_>, _>>()?;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in rings.iter().flatten() {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let pad = 0.02 * w.max(h);
    let legend_w = 0.6 * w.max(h);
    let row_h = h.max(w) / 20.0;
    let legend_h = row_h * (plan.labels.len() + 2) as f64;
    let total_w = w + 3.0 * pad + legend_w;
    let total_h = (h + 2.0 * pad).max(legend_h + 2.0 * pad);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {total_w:.4} {total_h:.4}\" width=\"{:.0}\" height=\"{:.0}\">",
        800.0,
        800.0 * total_h / total_w
    );
    let _ = writeln!(out, "<title>{}</title>", escape(&plan.title));
    let _ = writeln!(out, "<g id=\"cells\" stroke=\"#ffffff\" stroke-width=\"{:.4}\">", w.max(h) / 2000.0);
    for (((k, _), ring), class) in frame.rows().zip(&rings).zip(&plan.classes) {
        let pts: Vec<String> = ring
            .iter()
            .map(|p| format!("{:.4},{:.4}", p.x - x0 + pad, y1 - p.y + pad))
            .collect();
        let (fill, cls) = match class {
            Some(c) => (plan.colors[*c].as_str(), c.to_string()),
            None => (MISSING, "NA".to_string()),
        };
        let _ = writeln!(
            out,
            "<polygon data-hex=\"{}\" data-class=\"{cls}\" fill=\"{fill}\" points=\"{}\"/>",
            k.hex,
            pts.join(" ")
        );
    }
    out.push_str("</g>\n");
    let lx = w + 2.0 * pad;
    let _ = writeln!(out, "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"{:.4}\">", row_h * 0.6);
    let _ = writeln!(out, "<text x=\"{lx:.4}\" y=\"{:.4}\">{}</text>", pad + row_h * 0.7, escape(&plan.title));
    for (i, (color, label)) in plan.colors.iter().zip(&plan.labels).enumerate() {
        let y = pad + row_h * (i + 1) as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{lx:.4}\" y=\"{y:.4}\" width=\"{:.4}\" height=\"{:.4}\" fill=\"{color}\"/>",
            row_h * 0.8,
            row_h * 0.8
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.4}\" y=\"{:.4}\">{}</text>",
            lx + row_h,
            y + row_h * 0.65,
            escape(label)
        );
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}
