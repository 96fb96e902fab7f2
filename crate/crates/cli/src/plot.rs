//! Minimal SVG line charts for the CSV artifacts.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const WIDTH: f64 = 760.0;
const PANEL_H: f64 = 220.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 30.0, 30.0); // left, right, top, bottom

/// A parsed numeric CSV: column names and rows. Lines starting with `#`
/// are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let head = lines.next().context("empty CSV")?;
        let columns: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let row: Vec<f64> = l
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("data row {}", i + 1))?;
            if row.len() != columns.len() {
                bail!("data row {} has {} fields, header has {}", i + 1, row.len(), columns.len());
            }
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub struct Panel {
    pub title: String,
    pub series: Vec<(String, Vec<f64>)>,
}

/// Panels chosen from the recognised column sets; anything else plots every
/// column against the first.
pub fn panels_for(t: &Table) -> Result<(String, Vec<f64>, Vec<Panel>)> {
    let has = |c: &str| t.columns.iter().any(|x| x == c);
    let pick = |title: &str, cols: &[&str]| -> Result<Panel> {
        Ok(Panel {
            title: title.to_string(),
            series: cols
                .iter()
                .map(|c| Ok((c.to_string(), t.column(c).with_context(|| format!("missing column {c}"))?)))
                .collect::<Result<_>>()?,
        })
    };
    if has("action") && has("t_hx_s_in") {
        let x = t.column("t").context("missing column t")?;
        return Ok((
            "step".into(),
            x,
            vec![
                pick("Power demand and action", &["demand", "action"])?,
                pick("Heat-exchanger inlet vs minimum", &["t_hx_s_in", "c_in_min"])?,
                pick("Heat-exchanger outlet vs maximum", &["t_hx_s_out", "c_out_max"])?,
            ],
        ));
    }
    if has("lambda1") && has("J1") {
        let x = t.column("epoch").context("missing column epoch")?;
        return Ok((
            "epoch".into(),
            x,
            vec![
                pick("Mean return", &["mean_return"])?,
                pick("Discounted costs", &["J1", "J2"])?,
                pick("Lagrange multipliers", &["lambda1", "lambda2"])?,
                pick("Policy entropy", &["entropy"])?,
            ],
        ));
    }
    if has("setpoint") && has("power") {
        let x = t.column("time").context("missing column time")?;
        return Ok((
            "time (s)".into(),
            x,
            vec![
                pick("Power and setpoint", &["power", "setpoint"])?,
                pick("Secondary temperatures", &["t_hx_s_in", "t_hx_s_out"])?,
            ],
        ));
    }
    if t.columns.len() < 2 {
        bail!("need at least two columns to plot");
    }
    let x = t.rows.iter().map(|r| r[0]).collect();
    let series = t.columns[1..]
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), t.rows.iter().map(|r| r[i + 1]).collect()))
        .collect();
    Ok((t.columns[0].clone(), x, vec![Panel { title: String::new(), series }]))
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

pub fn render(x_label: &str, x: &[f64], panels: &[Panel]) -> String {
    let (ml, mr, mt, mb) = MARGIN;
    let h = PANEL_H * panels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{h}" viewBox="0 0 {WIDTH} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1) = range(x.iter().copied());
    for (pi, p) in panels.iter().enumerate() {
        let top = pi as f64 * PANEL_H + mt;
        let bottom = (pi + 1) as f64 * PANEL_H - mb;
        let (left, right) = (ml, WIDTH - mr);
        let (y0, y1) = range(p.series.iter().flat_map(|(_, v)| v.iter().copied()));
        let sx = |v: f64| left + (v - x0) / (x1 - x0) * (right - left);
        let sy = |v: f64| bottom - (v - y0) / (y1 - y0) * (bottom - top);
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="gray"/>"#,
            right - left,
            bottom - top
        );
        let _ = writeln!(s, r#"<text x="{left}" y="{}" font-weight="bold">{}</text>"#, top - 8.0, p.title);
        for k in 0..=4 {
            let yv = y0 + (y1 - y0) * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
                left - 4.0,
                sy(yv) + 4.0,
                num(yv)
            );
            let xv = x0 + (x1 - x0) * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
                sx(xv),
                bottom + 14.0,
                num(xv)
            );
        }
        let _ = writeln!(s, r#"<text x="{right}" y="{}" text-anchor="end">{x_label}</text>"#, bottom + 26.0);
        for (si, (name, ys)) in p.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let pts: Vec<String> = x
                .iter()
                .zip(ys)
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .map(|(a, b)| format!("{:.2},{:.2}", sx(*a), sy(*b)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = top + 14.0 + 14.0 * si as f64;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{name}</text>"#,
                right - 6.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn plot_csv(text: &str) -> Result<String> {
    let t = Table::parse(text)?;
    if t.rows.is_empty() {
        bail!("CSV has no data rows");
    }
    let (xl, x, panels) = panels_for(&t)?;
    Ok(render(&xl, &x, &panels))
}
