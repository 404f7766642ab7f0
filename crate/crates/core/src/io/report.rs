use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hallucinate::HallucinationReport;
use crate::kmeans::PrototypeSet;
use crate::toy::StepMetrics;

pub const METRICS_HEADER: &str = "step,l_cl,l_halp,total,mu,generated,retained,t_star_mean,wall_ms";

/// Floats use the shortest round-tripping representation, so equal runs
/// produce byte-identical files.
pub fn write_metrics_csv(path: impl AsRef<Path>, metrics: &[StepMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(64 * (metrics.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            m.step, m.l_cl, m.l_halp, m.total, m.mu, m.generated, m.retained, m.t_star_mean, m.wall_ms
        )
        .unwrap();
    }
    write_text(path, &out)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `key=value` lines describing a k-means fit.
pub fn cluster_stats_document(set: &PrototypeSet) -> String {
    let history: Vec<String> = set.inertia_history.iter().map(f64::to_string).collect();
    format!(
        "k={}\ndim={}\ninertia={}\niterations={}\nconverged={}\ninertia_history={}\n",
        set.len(),
        set.dim(),
        set.inertia,
        set.iterations_run,
        set.converged,
        history.join(","),
    )
}

/// `key=value` lines summarizing a hallucination run.
pub fn hallucination_report_document(report: &HallucinationReport, anchors: usize) -> String {
    let ts = &report.t_star_values;
    let (min, max) = ts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    let (min, max) = if ts.is_empty() { (0.0, 0.0) } else { (min, max) };
    format!(
        "anchors={anchors}\ngenerated={}\nretained={}\nretention_rate={}\nskipped_degenerate={}\n\
         t_star_count={}\nt_star_mean={}\nt_star_min={min}\nt_star_max={max}\n",
        report.generated,
        report.retained,
        report.retention_rate(),
        report.skipped_degenerate,
        ts.len(),
        report.t_star_mean(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = StepMetrics {
            step: 3,
            l_cl: 1.5,
            l_halp: 0.0,
            total: 1.5,
            mu: 1.0,
            generated: 10,
            retained: 9,
            t_star_mean: 0.25,
            wall_ms: 0.0,
        };
        write_metrics_csv(&p, &[m]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, format!("{METRICS_HEADER}\n3,1.5,0,1.5,1,10,9,0.25,0\n"));
    }

    #[test]
    fn report_document_keys() {
        let r = HallucinationReport {
            generated: 4,
            retained: 3,
            t_star_values: vec![0.2, 0.4],
            skipped_degenerate: 1,
        };
        let doc = hallucination_report_document(&r, 2);
        assert!(doc.contains("retention_rate=0.75\n"));
        assert!(doc.contains("t_star_min=0.2\n"));
        assert!(doc.contains("t_star_max=0.4\n"));
    }
}
