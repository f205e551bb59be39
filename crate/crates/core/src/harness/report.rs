//! CSV, SVG and JSON renderings of a suite report. All three are
//! byte-identical for identical inputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::curve::AccuracyCurve;
use super::suite::SuiteReport;
use crate::error::{Error, Result};
use crate::util::{read_json, write_json};

pub const CSV_HEADER: &str = "scheme,n_nodes,snr_db,accuracy,n_test";

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub summary: PathBuf,
}

pub fn render_csv(curves: &[AccuracyCurve]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in curves {
        for p in &c.points {
            writeln!(
                out,
                "{},{},{},{:.6},{}",
                c.scheme, c.n_nodes, p.snr_db, p.accuracy, p.n_test
            )
            .unwrap();
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Accuracy against SNR, one polyline per curve.
pub fn render_svg(report: &SuiteReport) -> String {
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (70.0, 190.0, 40.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let snrs: Vec<f64> = report.curves.iter().flat_map(|c| c.snrs()).collect();
    let lo = snrs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = snrs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (-20.0, 20.0)
    };
    let x = |s: f64| left + (s - lo) / (hi - lo) * pw;
    let y = |a: f64| top + (1.0 - a) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        s,
        "<metadata>suite={} profile={} seed={} config={}</metadata>",
        report.suite.name(),
        report.config.profile.name(),
        report.seed,
        report.config_fingerprint
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{} (seed {}, config {})</text>"#,
        left + pw / 2.0,
        report.suite.name(),
        report.seed,
        report.config_fingerprint
    )
    .unwrap();

    for i in 0..=10 {
        let a = i as f64 / 10.0;
        writeln!(
            s,
            r##"<line x1="{left:.1}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#e0e0e0"/><text x="{2:.1}" y="{3:.1}" text-anchor="end">{a:.1}</text>"##,
            y(a),
            left + pw,
            left - 6.0,
            y(a) + 4.0
        )
        .unwrap();
    }
    let step = if hi - lo > 20.0 { 5.0 } else { 2.0 };
    let mut t = (lo / step).ceil() * step;
    while t <= hi + 1e-9 {
        writeln!(
            s,
            r##"<line x1="{0:.1}" y1="{top:.1}" x2="{0:.1}" y2="{1:.1}" stroke="#e0e0e0"/><text x="{0:.1}" y="{2:.1}" text-anchor="middle">{t}</text>"##,
            x(t),
            top + ph,
            top + ph + 18.0
        )
        .unwrap();
        t += step;
    }
    writeln!(
        s,
        r#"<rect x="{left:.1}" y="{top:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SNR (dB)</text>"#,
        left + pw / 2.0,
        h - 18.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{0:.1}" text-anchor="middle" transform="rotate(-90 18 {0:.1})">accuracy</text>"#,
        top + ph / 2.0
    )
    .unwrap();

    for (i, c) in report.curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.snr_db), y(p.accuracy)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = left + pw + 14.0;
        writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&c.id())
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<suite>.csv`, `<suite>.svg` and `summary.json` into `dir`.
pub fn emit_report(report: &SuiteReport, dir: &Path) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = report.suite.name();
    let files = ReportFiles {
        csv: dir.join(format!("{name}.csv")),
        svg: dir.join(format!("{name}.svg")),
        summary: dir.join("summary.json"),
    };
    std::fs::write(&files.csv, render_csv(&report.curves)).map_err(|e| Error::io(&files.csv, e))?;
    std::fs::write(&files.svg, render_svg(report)).map_err(|e| Error::io(&files.svg, e))?;
    write_json(&files.summary, report)?;
    Ok(files)
}

/// Reads back a `summary.json` written by [`emit_report`].
pub fn load_report(summary: &Path) -> Result<SuiteReport> {
    read_json(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::overhead_per_sample;
    use crate::harness::config::{ExperimentConfig, Profile, Suite};
    use crate::harness::curve::CurvePoint;

    fn sample_report() -> SuiteReport {
        let cfg = ExperimentConfig::new(Suite::Fig5, Profile::Desk);
        let curve = |scheme: &str, n, shift: f64| AccuracyCurve {
            scheme: scheme.into(),
            n_nodes: n,
            points: (-5..=5)
                .map(|i| CurvePoint {
                    snr_db: 4.0 * i as f64,
                    accuracy: 1.0 / (1.0 + (-(4.0 * i as f64 + shift) / 4.0).exp()),
                    n_test: 36,
                })
                .collect(),
        };
        SuiteReport {
            suite: cfg.suite,
            seed: cfg.seed,
            config_fingerprint: cfg.fingerprint(),
            config: cfg,
            curves: vec![curve("single", 1, 0.0), curve("feature", 2, 3.0)],
            gains: vec![],
            overhead: overhead_per_sample(2, 512, 32),
            metrics: Default::default(),
        }
    }

    #[test]
    fn csv_layout() {
        let csv = render_csv(&sample_report().curves);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 22);
        assert!(lines[1].starts_with("single,1,-20,"));
        assert!(lines[1].ends_with(",36"));
    }

    #[test]
    fn emitted_files_are_deterministic_and_roundtrip() {
        let r = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let a = emit_report(&r, &dir.path().join("a")).unwrap();
        let b = emit_report(&r, &dir.path().join("b")).unwrap();
        for (x, y) in [(&a.csv, &b.csv), (&a.svg, &b.svg), (&a.summary, &b.summary)] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        assert_eq!(load_report(&a.summary).unwrap(), r);
        let svg = std::fs::read_to_string(&a.svg).unwrap();
        assert!(svg.contains(&r.config_fingerprint) && svg.contains("seed 2020"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn unwritable_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let err = emit_report(&sample_report(), &blocker.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err:?}");
    }
}
