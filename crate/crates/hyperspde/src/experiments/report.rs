use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::StudyResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Least-squares line through `(ln delta, ln rmse)`.
pub fn fit_rate(deltas: &[f64], rmses: &[f64]) -> Result<RateFit> {
    if deltas.len() != rmses.len() {
        return Err(Error::Dimension(format!("{} deltas vs {} rmses", deltas.len(), rmses.len())));
    }
    if deltas.len() < 3 {
        return Err(Error::InvalidInput(format!("rate fit needs >= 3 points, got {}", deltas.len())));
    }
    if let Some(bad) = deltas.iter().chain(rmses).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("rate fit needs positive finite inputs, got {bad}")));
    }
    let x: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let y: Vec<f64> = rmses.iter().map(|r| r.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("rate fit needs distinct deltas".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(RateFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub cells_csv: PathBuf,
    pub replicates_csv: PathBuf,
    pub summary_txt: PathBuf,
    pub plot_svg: PathBuf,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cells_csv(r: &StudyResult) -> String {
    let mut s = String::from("delta,n_loc,parameter,truth,rmse,rmse_se,bias,z_mean,z_var,clt_var,replicates,failures\n");
    let names = r.config.parameter_names();
    for c in &r.cells {
        for (i, name) in names.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.9e},{:.9e},{:.9e},{:.6e},{:.6e},{:.6e},{},{}",
                c.delta,
                c.n_loc,
                name,
                r.truth[i],
                c.rmse(i, &r.truth),
                c.rmse_se(i, &r.truth),
                c.bias(i, &r.truth),
                c.z_mean(i),
                c.z_cov(i, i),
                r.clt_covariance[(i, i)],
                c.count(),
                c.failures.len()
            );
        }
    }
    s
}

fn replicates_csv(r: &StudyResult) -> String {
    let names = r.config.parameter_names();
    let mut s = String::from("delta,replicate");
    for n in &names {
        let _ = write!(s, ",{n}_hat");
    }
    for n in &names {
        let _ = write!(s, ",z_{n}");
    }
    s.push_str(",condition\n");
    for c in &r.cells {
        for o in &c.outcomes {
            let _ = write!(s, "{},{}", c.delta, o.replicate);
            for v in o.estimate.iter().chain(&o.standardized) {
                let _ = write!(s, ",{v:.12e}");
            }
            let _ = writeln!(s, ",{:.6e}", o.condition);
        }
    }
    s
}

fn summary_txt(r: &StudyResult) -> String {
    let cfg = &r.config;
    let names = cfg.parameter_names();
    let mut s = String::new();
    let _ = writeln!(s, "study {}", cfg.name);
    let _ = writeln!(
        s,
        "integrator {}  estimator {}  replicates {}  n_steps {}  k_max {}  seed {}",
        cfg.integrator, cfg.estimator, cfg.replicates, cfg.n_steps, r.k_max, cfg.seed
    );
    let _ = writeln!(s, "n_rule {:?}  margin {}", cfg.n_rule, cfg.margin);
    for (n, t) in names.iter().zip(&r.truth) {
        let _ = writeln!(s, "true {n} = {t}");
    }
    s.push('\n');
    for c in &r.cells {
        let _ = writeln!(s, "delta {}  N {}  ok {}  failed {}", c.delta, c.n_loc, c.count(), c.failures.len());
        for (i, n) in names.iter().enumerate() {
            let _ = writeln!(
                s,
                "  {n:<8} rmse {:.4e} +- {:.1e}  bias {:+.3e}  var(z) {:.3} (limit {:.3})",
                c.rmse(i, &r.truth),
                c.rmse_se(i, &r.truth),
                c.bias(i, &r.truth),
                c.z_cov(i, i),
                r.clt_covariance[(i, i)]
            );
        }
        for f in &c.failures {
            let _ = writeln!(s, "  replicate {} failed: {}", f.replicate, f.message);
        }
    }
    s.push('\n');
    let theory = cfg.theoretical_slopes();
    match r.slopes() {
        Ok(fits) => {
            for ((n, f), t) in names.iter().zip(fits).zip(theory) {
                let _ = writeln!(
                    s,
                    "slope {n:<8} fitted {:.3}  theory {:.3}  residual {:.3e}",
                    f.slope, t, f.residual
                );
            }
        }
        Err(e) => {
            let _ = writeln!(s, "slopes unavailable: {e}");
        }
    }
    s
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Log-log RMSE plot with one dashed theoretical-slope line per parameter.
pub fn svg_plot(r: &StudyResult) -> String {
    let (w, h, pad) = (640.0, 440.0, 60.0);
    let names = r.config.parameter_names();
    let theory = r.config.theoretical_slopes();
    let deltas = r.deltas();
    let series: Vec<Vec<f64>> = (0..names.len()).map(|i| r.rmse_series(i)).collect();
    let lx: Vec<f64> = deltas.iter().map(|d| d.log10()).collect();
    let (mut x0, mut x1) = (lx.iter().copied().fold(f64::INFINITY, f64::min), lx.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    if x1 - x0 < 1e-9 {
        x0 -= 0.1;
        x1 += 0.1;
    }
    let ly: Vec<f64> = series.iter().flatten().filter(|v| **v > 0.0).map(|v| v.log10()).collect();
    let (mut y0, mut y1) = (ly.iter().copied().fold(f64::INFINITY, f64::min), ly.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    if !y0.is_finite() {
        (y0, y1) = (-1.0, 0.0);
    }
    let ypad = 0.1 * (y1 - y0).max(0.5);
    y0 -= ypad;
    y1 += ypad;
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    for (d, x) in deltas.iter().zip(&lx) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{d}</text>"#,
            px(*x),
            h - pad + 16.0
        );
    }
    for e in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">1e{e}</text>"#,
            pad - 6.0,
            py(e as f64) + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">delta</text>"#, w / 2.0, h - 18.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">RMSE</text>"#, h / 2.0, h / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="13" text-anchor="middle">{}</text>"#, w / 2.0, r.config.name);

    for (i, name) in names.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = lx
            .iter()
            .zip(&series[i])
            .filter(|(_, v)| **v > 0.0)
            .map(|(x, v)| (*x, v.log10()))
            .collect();
        let poly: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="rmse" data-parameter="{name}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            poly.join(" ")
        );
        for (x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(*x), py(*y));
        }
        // Reference line through the centroid of the data in log space.
        if !pts.is_empty() {
            let cx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            let cy = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            let k = theory[i];
            let _ = writeln!(
                s,
                r#"<line class="reference" data-parameter="{name}" data-slope="{k}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="6 4"/>"#,
                px(x0),
                py(cy + k * (x0 - cx)),
                px(x1),
                py(cy + k * (x1 - cx))
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{color}">{name} (slope {})</text>"#,
            pad + 8.0,
            pad + 16.0 + 14.0 * i as f64,
            theory[i]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<name>_cells.csv`, `<name>_replicates.csv`, `<name>_summary.txt` and `<name>_rmse.svg`.
pub fn emit_report(result: &StudyResult, out_dir: &Path) -> Result<ReportFiles> {
    if result.cells.is_empty() {
        return Err(Error::InvalidInput("empty study result".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let name = &result.config.name;
    let files = ReportFiles {
        cells_csv: out_dir.join(format!("{name}_cells.csv")),
        replicates_csv: out_dir.join(format!("{name}_replicates.csv")),
        summary_txt: out_dir.join(format!("{name}_summary.txt")),
        plot_svg: out_dir.join(format!("{name}_rmse.svg")),
    };
    write(&files.cells_csv, &cells_csv(result))?;
    write(&files.replicates_csv, &replicates_csv(result))?;
    write(&files.summary_txt, &summary_txt(result))?;
    write(&files.plot_svg, &svg_plot(result))?;
    Ok(files)
}
