//! CSV tables and SVG plots for experiment reports.

use std::fmt::Write as _;
use std::io::Write;

use super::effects::EffectEstimate;
use super::metrics::{DetectionMetrics, RocPoint};
use super::protocol::{AblationRow, FactorialReport, MitigationRow, SensitivityRow, ThresholdPoint};
use crate::error::Result;
use crate::mitigation::csv_err;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.6}"))
}

fn metric_fields(m: &DetectionMetrics) -> [String; 7] {
    [
        format!("{:.6}", m.precision),
        format!("{:.6}", m.recall),
        format!("{:.6}", m.f1),
        format!("{:.6}", m.auc_roc),
        opt(m.detection_latency_episodes),
        opt(m.overhead_pct),
        opt(m.brier),
    ]
}

const METRIC_HEADER: [&str; 7] = ["precision", "recall", "f1", "auc_roc", "latency_episodes", "overhead_pct", "brier"];

/// One row per named configuration (detector, baseline, ensemble).
pub fn write_metrics_csv<W: Write>(out: W, rows: &[(String, DetectionMetrics)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["name"];
    header.extend(METRIC_HEADER);
    w.write_record(&header).map_err(csv_err)?;
    for (name, m) in rows {
        let mut rec = vec![name.clone()];
        rec.extend(metric_fields(m));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ablation_csv<W: Write>(out: W, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["configuration"];
    header.extend(METRIC_HEADER);
    header.push("f1_drop");
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let name = r.removed.map_or_else(|| "full_ensemble".to_string(), |c| format!("without_{}", c.name()));
        let mut rec = vec![name];
        rec.extend(metric_fields(&r.metrics));
        rec.push(format!("{:.6}", r.f1_drop));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sensitivity_csv<W: Write>(out: W, rows: &[SensitivityRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["tau_spec", "delta_rho", "contamination", "ppl_mult"];
    header.extend(METRIC_HEADER);
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.tau_spec.to_string(), r.delta_rho.to_string(), r.contamination.to_string(), r.ppl_mult.to_string()];
        rec.extend(metric_fields(&r.metrics));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, points: &[ThresholdPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["risk_threshold", "flagged", "precision", "recall"]).map_err(csv_err)?;
    for p in points {
        w.write_record([
            p.threshold.to_string(),
            p.flagged.to_string(),
            format!("{:.6}", p.precision),
            format!("{:.6}", p.recall),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_effects_csv<W: Write>(out: W, effects: &[EffectEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["factor", "effect", "cohens_d", "p_value"]).map_err(csv_err)?;
    for e in effects {
        w.write_record([e.factor.clone(), format!("{:.6}", e.effect), format!("{:.6}", e.cohens_d), format!("{:.6e}", e.p_value)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Every replication's estimates next to the planted values.
pub fn write_factorial_csv<W: Write>(out: W, report: &FactorialReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replication", "factor", "planted", "effect", "cohens_d", "p_value"]).map_err(csv_err)?;
    let planted = report.planted_values();
    for (r, rep) in report.replications.iter().enumerate() {
        for (e, p) in rep.iter().zip(planted) {
            w.write_record([
                r.to_string(),
                e.factor.clone(),
                format!("{p:.6}"),
                format!("{:.6}", e.effect),
                format!("{:.6}", e.cohens_d),
                format!("{:.6e}", e.p_value),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Hacking frequency, performance and their changes per technique and
/// intensity. Wall-clock figures are not deterministic and are left to the caller.
pub fn write_mitigation_rows_csv<W: Write>(out: W, rows: &[MitigationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "technique",
        "intensity",
        "hacking_frequency",
        "performance",
        "hacking_reduction_pct",
        "performance_impact_pct",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.technique.name().to_string(),
            r.intensity.to_string(),
            format!("{:.6}", r.outcome.hacking_frequency),
            format!("{:.6}", r.outcome.performance),
            opt(r.effect.hacking_reduction_pct),
            format!("{:.6}", r.effect.performance_impact_pct),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean hacking frequency per factorial cell.
pub fn write_cells_csv<W: Write>(out: W, report: &FactorialReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["density", "alignment", "complexity", "runs", "hacking_frequency"]).map_err(csv_err)?;
    for (d, f, n) in &report.cells {
        w.write_record([
            format!("{:?}", d.density).to_lowercase(),
            format!("{:?}", d.alignment).to_lowercase(),
            format!("{:?}", d.complexity).to_lowercase(),
            n.to_string(),
            format!("{f:.6}"),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Plot area mapping data coordinates to SVG pixels.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    svg: String,
}

impl Frame {
    fn new(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let mut f = Frame { x: widen(x), y: widen(y), svg: String::new() };
        let _ = write!(
            f.svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = write!(f.svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = write!(f.svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
        let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN, MARGIN);
        let _ = write!(f.svg, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
        for k in 0..=4 {
            let fx = f.x.0 + (f.x.1 - f.x.0) * f64::from(k) / 4.0;
            let fy = f.y.0 + (f.y.1 - f.y.0) * f64::from(k) / 4.0;
            let (px, py) = (f.px(fx), f.py(fy));
            let _ = write!(f.svg, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y0 + 16.0, tick(fx));
            let _ = write!(f.svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, py + 4.0, tick(fy));
        }
        let _ = write!(f.svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 18.0, escape(xlabel));
        let _ = write!(
            f.svg,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        );
        f
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, width: f64, dashed: bool) {
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let dash = if dashed { r#" stroke-dasharray="4 4""# } else { "" };
        let _ = write!(
            self.svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"{dash}/>"#,
            coords.join(" ")
        );
    }

    fn point(&mut self, x: f64, y: f64, color: &str, label: Option<&str>) {
        let (px, py) = (self.px(x), self.py(y));
        let _ = write!(self.svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="5" fill="{color}"/>"#);
        if let Some(l) = label {
            let _ = write!(self.svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, px + 7.0, py - 7.0, escape(l));
        }
    }

    fn legend(&mut self, entries: &[(String, &str, f64)]) {
        for (i, (name, color, width)) in entries.iter().enumerate() {
            let y = MARGIN + 14.0 + 16.0 * i as f64;
            let x = W - MARGIN - 190.0;
            let _ = write!(
                self.svg,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="{width}"/><text x="{}" y="{}">{}</text>"#,
                x + 24.0,
                x + 30.0,
                y + 4.0,
                escape(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// ROC curves; the curve named `emphasis` is drawn thick and black.
pub fn roc_svg(curves: &[(String, Vec<RocPoint>)], emphasis: Option<&str>) -> String {
    let mut f = Frame::new("ROC", "false positive rate", "true positive rate", (0.0, 1.0), (0.0, 1.0));
    f.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#999999", 1.0, true);
    let mut legend = vec![];
    for (i, (name, pts)) in curves.iter().enumerate() {
        let strong = emphasis == Some(name.as_str());
        let (color, width) = if strong { ("black", 3.5) } else { (PALETTE[i % PALETTE.len()], 1.5) };
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.fpr, p.tpr)).collect();
        f.polyline(&xy, color, width, false);
        legend.push((name.clone(), color, width));
    }
    f.legend(&legend);
    f.finish()
}

/// Line plot of one or more series against their position.
pub fn series_svg(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let all = series.iter().flat_map(|s| s.1.iter());
    let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (0.0f64, 1.0f64));
    for &(a, b) in all {
        x = (x.0.min(a), x.1.max(a));
        y = (y.0.min(b), y.1.max(b));
    }
    if !x.0.is_finite() {
        x = (0.0, 1.0);
    }
    let mut f = Frame::new(title, xlabel, ylabel, x, y);
    let mut legend = vec![];
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        f.polyline(pts, color, 1.5, false);
        legend.push((name.clone(), color, 1.5));
    }
    f.legend(&legend);
    f.finish()
}

/// Labeled scatter, e.g. hacking reduction against performance cost.
pub fn scatter_svg(title: &str, xlabel: &str, ylabel: &str, points: &[(String, f64, f64)]) -> String {
    let xs = points.iter().map(|p| p.1);
    let ys = points.iter().map(|p| p.2);
    let range = |it: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if lo.is_finite() {
            let pad = 0.1 * (hi - lo).max(1.0);
            (lo - pad, hi + pad)
        } else {
            (0.0, 1.0)
        }
    };
    let mut f = Frame::new(title, xlabel, ylabel, range(&mut { xs }), range(&mut { ys }));
    for (i, (name, x, y)) in points.iter().enumerate() {
        f.point(*x, *y, PALETTE[i % PALETTE.len()], Some(name));
    }
    f.finish()
}
