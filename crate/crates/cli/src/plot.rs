use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};

use crate::output::{num, Table};

/// A windowed metric series read back from a curve CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub metric: String,
    /// (window index, sample index, step, value)
    pub points: Vec<(usize, usize, usize, f64)>,
}

const FIXED: [&str; 6] = ["sample_index", "step", "delta", "y_true", "y_pred", "score"];

pub fn read_curve(bytes: &[u8], metrics: &[String]) -> Result<Vec<Series>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let header: Vec<String> = rdr.headers().context("curve CSV has no header")?.iter().map(String::from).collect();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| anyhow!("curve CSV lacks column `{name}`"));
    let (si, st) = (col("sample_index")?, col("step")?);
    let wanted: Vec<String> = if metrics.is_empty() {
        header.iter().filter(|h| !FIXED.contains(&h.as_str())).cloned().collect()
    } else {
        metrics.to_vec()
    };
    if wanted.is_empty() {
        bail!("curve CSV has no metric columns");
    }
    let idx: Vec<usize> = wanted.iter().map(|m| col(m)).collect::<Result<_>>()?;
    let mut series: Vec<Series> = wanted
        .iter()
        .map(|m| Series {
            metric: m.clone(),
            points: Vec::new(),
        })
        .collect();
    let mut window = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("malformed curve CSV at row {}", line + 2))?;
        let parse_usize = |j: usize| -> Result<usize> {
            rec.get(j)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| anyhow!("malformed curve CSV at row {}: bad integer in column {}", line + 2, header[j]))
        };
        let cells: Vec<&str> = idx.iter().map(|&j| rec.get(j).unwrap_or("")).collect();
        if cells.iter().all(|c| c.is_empty()) {
            continue;
        }
        let (sample, step) = (parse_usize(si)?, parse_usize(st)?);
        for (s, cell) in series.iter_mut().zip(cells) {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| anyhow!("malformed curve CSV at row {}: `{cell}` in column {}", line + 2, s.metric))?;
            s.points.push((window, sample, step, v));
        }
        window += 1;
    }
    if let Some(empty) = series.iter().find(|s| s.points.is_empty()) {
        bail!("metric column `{}` has no values", empty.metric);
    }
    Ok(series)
}

pub fn long_format(series: &[Series]) -> Table {
    let mut t = Table::new(["window_index", "sample_index", "step", "metric", "value"]);
    for s in series {
        for &(w, i, k, v) in &s.points {
            t.push(vec![w.to_string(), i.to_string(), k.to_string(), s.metric.clone(), num(v)]);
        }
    }
    t
}

const PALETTE: [&str; 8] = ["#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f", "#bcbd22"];

/// Line chart on a fixed [0, 1] value axis; `tau` draws a dashed red rule.
pub fn svg(series: &[Series], tau: Option<f64>) -> String {
    let (w, h, pad) = (900.0, 420.0, 50.0);
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let x = |i: usize| pad + (w - 2.0 * pad) * i as f64 / x_max;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v.clamp(0.0, 1.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{tick}</text>"#, pad - 6.0, y(tick) + 4.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">cumulative samples (0..{x_max})</text>"#,
        w / 2.0,
        h - 12.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", x(p.1), y(p.3))).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-metric="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            s.metric,
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - pad - 140.0,
            pad + 16.0 * (i as f64 + 1.0),
            s.metric
        );
    }
    if let Some(t) = tau {
        let _ = writeln!(
            out,
            r#"<line class="tau" data-tau="{t}" x1="{pad}" x2="{}" y1="{:.2}" y2="{:.2}" stroke="red" stroke-dasharray="6 4"/>"#,
            w - pad,
            y(t),
            y(t)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CURVE: &str = "sample_index,step,delta,y_true,y_pred,score,precision,f1\n\
                         0,0,0,1,1,0.9,,\n\
                         1,0,0,0,1,0.6,0.8,0.7\n\
                         2,1,-0.1,1,1,0.7,0.8,0.75\n";

    #[test]
    fn constant_metric_is_flat() {
        let s = read_curve(CURVE.as_bytes(), &["precision".into()]).unwrap();
        assert_eq!(s[0].points, vec![(0, 1, 0, 0.8), (1, 2, 1, 0.8)]);
        let pic = svg(&s, None);
        let poly = pic.lines().find(|l| l.contains("polyline")).unwrap();
        let ys: Vec<&str> = poly.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>").split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
        assert!(!pic.contains("class=\"tau\""));
    }

    #[test]
    fn tau_rule_drawn() {
        let s = read_curve(CURVE.as_bytes(), &[]).unwrap();
        assert_eq!(s.len(), 2);
        assert!(svg(&s, Some(0.7)).contains("data-tau=\"0.7\""));
        assert_eq!(long_format(&s).rows.len(), 4);
    }

    #[test]
    fn empty_column_named() {
        let text = "sample_index,step,delta,y_true,y_pred,score,precision,recall\n0,0,0,1,1,0.9,0.5,\n";
        let err = read_curve(text.as_bytes(), &["precision".into(), "recall".into()]).unwrap_err();
        assert!(err.to_string().contains("recall"), "{err}");
        let missing = read_curve(text.as_bytes(), &["kappa".into()]).unwrap_err();
        assert!(missing.to_string().contains("kappa"));
    }
}
