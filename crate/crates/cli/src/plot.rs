//! Self-contained SVG line plots of a run directory.
//!
//! Output is a pure function of the input files: coordinates are printed with
//! fixed precision and series are emitted in a fixed order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::output::OutputTree;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: (f64, f64, f64, f64) = (80.0, 150.0, 40.0, 56.0); // left, right, top, bottom
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];
/// Density curves drawn at most.
const MAX_SNAPSHOTS: usize = 6;
/// Trajectories drawn at most; the fan is subsampled evenly by id.
const MAX_TRAJECTORIES: usize = 60;
const MAX_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Numeric CSV with a header row. Empty input gives no columns.
fn read_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return Ok((vec![], vec![]));
    };
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut cols = vec![Vec::new(); names.len()];
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("{}: row {} has {} cells", path.display(), n + 2, cells.len())));
        }
        for (c, cell) in cols.iter_mut().zip(cells) {
            let v = cell.trim().parse().map_err(|_| io::Error::new(io::ErrorKind::InvalidData, format!("{}: bad number '{cell}'", path.display())))?;
            c.push(v);
        }
    }
    Ok((names, cols))
}

fn column<'a>(names: &[String], cols: &'a [Vec<f64>], name: &str, path: &Path) -> io::Result<&'a [f64]> {
    names
        .iter()
        .position(|n| n == name)
        .map(|i| cols[i].as_slice())
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("{}: no column '{name}'", path.display())))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1e-12) };
    (lo - pad, hi + pad)
}

/// Renders labelled polylines on shared axes.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], legend: bool) -> String {
    let (ml, mr, mt, mb) = MARGIN;
    let (pw, ph) = (WIDTH - ml - mr, HEIGHT - mt - mb);
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#, ml + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, mt + ph, mt + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, mt + ph + 19.0, tick_label(xv));
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{ml}" y2="{py:.2}" stroke="black"/>"#, ml - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, ml - 8.0, py + 4.0, tick_label(yv));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, HEIGHT - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        escape(ylabel)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let stride = ser.points.len().div_ceil(MAX_POINTS).max(1);
        let mut pts = String::new();
        for (n, (x, y)) in ser.points.iter().enumerate() {
            if (n % stride == 0 || n + 1 == ser.points.len()) && x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(*x), sy(*y));
            }
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.4" points="{}"/>"#, pts.trim_end());
        if legend {
            let ly = mt + 14.0 + 18.0 * i as f64;
            let lx = ml + pw + 12.0;
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 20.0, ly - 4.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 26.0, escape(&ser.label));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn density_plot(root: &Path) -> io::Result<Option<String>> {
    let times_path = root.join("fields/times.csv");
    if !times_path.exists() {
        return Ok(None);
    }
    let (names, cols) = read_csv(&times_path)?;
    let (steps, times) = (column(&names, &cols, "step", &times_path)?, column(&names, &cols, "t", &times_path)?);
    if steps.is_empty() {
        return Ok(None);
    }
    let pick: Vec<usize> = if steps.len() <= MAX_SNAPSHOTS {
        (0..steps.len()).collect()
    } else {
        (0..MAX_SNAPSHOTS).map(|i| i * (steps.len() - 1) / (MAX_SNAPSHOTS - 1)).collect()
    };
    let mut series = vec![];
    for i in pick {
        let path = root.join(format!("fields/current_{:06}.csv", steps[i] as usize));
        let (n, c) = read_csv(&path)?;
        let (x, p) = (column(&n, &c, "x", &path)?, column(&n, &c, "j0", &path)?);
        series.push(Series { label: format!("t = {}", tick_label(times[i])), points: x.iter().copied().zip(p.iter().copied()).collect() });
    }
    Ok(Some(line_plot("Probability density", "x", "P(x)", &series, true)))
}

fn trajectory_plot(root: &Path) -> io::Result<Option<String>> {
    let mut series = vec![];
    let ens = root.join("trajectories.csv");
    if ens.exists() {
        let (n, c) = read_csv(&ens)?;
        if c.first().is_some_and(|col| !col.is_empty()) {
            let (id, t, x) = (column(&n, &c, "id", &ens)?, column(&n, &c, "t", &ens)?, column(&n, &c, "x", &ens)?);
            let mut by_id: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
            for i in 0..id.len() {
                by_id.entry(id[i] as u64).or_default().push((t[i], x[i]));
            }
            let stride = by_id.len().div_ceil(MAX_TRAJECTORIES).max(1);
            for (k, (i, pts)) in by_id.into_iter().enumerate() {
                if k % stride == 0 {
                    series.push(Series { label: format!("sample {i}"), points: pts.into_iter().map(|(t, x)| (x, t)).collect() });
                }
            }
        } else {
            eprintln!("warning: {} has no trajectory rows; skipped", ens.display());
        }
    }
    let single = root.join("particle.csv");
    if single.exists() {
        let (n, c) = read_csv(&single)?;
        if c.first().is_some_and(|col| !col.is_empty()) {
            let (t, x) = (column(&n, &c, "t", &single)?, column(&n, &c, "x", &single)?);
            series.push(Series { label: "particle".into(), points: x.iter().copied().zip(t.iter().copied()).collect() });
        } else {
            eprintln!("warning: {} has no trajectory rows; skipped", single.display());
        }
    }
    if series.is_empty() {
        return Ok(None);
    }
    let legend = series.len() == 1;
    Ok(Some(line_plot("Trajectories", "x", "t", &series, legend)))
}

fn energy_plot(root: &Path) -> io::Result<Option<String>> {
    let path = root.join("energy.csv");
    if !path.exists() {
        return Ok(None);
    }
    let (n, c) = read_csv(&path)?;
    let t = column(&n, &c, "t", &path)?;
    if t.is_empty() {
        eprintln!("warning: {} has no rows; skipped", path.display());
        return Ok(None);
    }
    let mut series = vec![];
    for (name, label) in [("e_field", "field"), ("e_particle", "particle"), ("e_total", "total")] {
        let v = column(&n, &c, name, &path)?;
        series.push(Series { label: label.into(), points: t.iter().copied().zip(v.iter().copied()).collect() });
    }
    Ok(Some(line_plot("Energy exchange", "t", "energy", &series, true)))
}

/// Writes `density.svg`, `trajectories.svg` and `energy.svg` for whichever
/// inputs are present. Fails if none are.
pub fn render(tree: &mut OutputTree) -> io::Result<usize> {
    let root = tree.root().to_path_buf();
    let plots = [
        ("density.svg", density_plot(&root)?),
        ("trajectories.svg", trajectory_plot(&root)?),
        ("energy.svg", energy_plot(&root)?),
    ];
    let mut written = 0;
    for (name, svg) in plots {
        if let Some(svg) = svg {
            tree.write(&format!("plots/{name}"), svg.as_bytes())?;
            written += 1;
        }
    }
    if written == 0 {
        return Err(io::Error::new(io::ErrorKind::NotFound, format!("{}: no plottable outputs", root.display())));
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_deterministic_and_labelled() {
        let s = vec![
            Series { label: "field".into(), points: vec![(0.0, 1.0), (1.0, 0.5)] },
            Series { label: "a<b".into(), points: vec![(0.0, 0.0), (1.0, 0.5)] },
        ];
        let a = line_plot("E", "t", "energy", &s, true);
        assert_eq!(a, line_plot("E", "t", "energy", &s, true));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains(">field</text>") && a.contains("a&lt;b"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn flat_and_empty_series_still_render() {
        let flat = vec![Series { label: "c".into(), points: vec![(0.0, 2.0), (1.0, 2.0)] }];
        assert!(!line_plot("f", "x", "y", &flat, false).contains("NaN"));
        assert!(!line_plot("f", "x", "y", &[], false).contains("NaN"));
    }

    #[test]
    fn ticks_switch_to_exponent_outside_plain_range() {
        assert_eq!(tick_label(0.0), "0");
        assert_eq!(tick_label(1.5), "1.500");
        assert_eq!(tick_label(3e-6), "3.00e-6");
    }
}
