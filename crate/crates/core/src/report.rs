//! Writes metrics.csv, trajectories.csv, elo.svg and report.txt for a transcript.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::metrics::{metrics_report, MetricsError, MetricsReport, Trajectory};
use crate::transcript::Transcript;

pub const METRICS_CSV: &str = "metrics.csv";
pub const TRAJECTORIES_CSV: &str = "trajectories.csv";
pub const ELO_SVG: &str = "elo.svg";
pub const REPORT_TXT: &str = "report.txt";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

const COLORS: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#a6761d"];

/// SVG line chart: one polyline per reviewer, x = round, y = Elo, dashed reference at `reference`.
pub fn render_svg(series: &[Trajectory], reference: i64, title: &str) -> String {
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (60.0, 140.0, 30.0, 40.0);
    let max_round = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).max().unwrap_or(0).max(1) as f64;
    let values = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain([reference]);
    let (mut lo, mut hi) = values.fold((i64::MAX, i64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
    lo -= 50;
    hi += 50;
    let span = (hi - lo) as f64;
    let x = |r: f64| left + r / max_round * (w - left - right);
    let y = |e: i64| top + (hi - e) as f64 / span * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" font-size="14" font-family="sans-serif">{}</text>"#, left, escape(title));
    let (x0, x1, yb) = (x(0.0), x(max_round), h - bottom);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{top}" x2="{x0}" y2="{yb}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{yb}" x2="{x1}" y2="{yb}" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif" text-anchor="middle">round</text>"#,
        (x0 + x1) / 2.0,
        h - 8.0
    );
    for (label, v) in [(hi, hi), (lo, lo)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="10" font-family="sans-serif" text-anchor="end">{label}</text>"#,
            x0 - 4.0,
            y(v) + 3.0
        );
    }
    let yr = y(reference);
    let _ = writeln!(
        s,
        r#"<line x1="{x0}" y1="{yr:.1}" x2="{x1}" y2="{yr:.1}" stroke="gray" stroke-dasharray="4 3" class="reference"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{:.1}" font-size="10" font-family="sans-serif" text-anchor="end">{reference}</text>"#,
        x0 - 4.0,
        yr + 3.0
    );
    for (i, t) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = t.points.iter().map(|&(r, e)| format!("{:.1},{:.1}", x(r as f64), y(e))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}" data-reviewer="{}"/>"#,
            pts.join(" "),
            escape(&t.reviewer)
        );
        let ly = top + 16.0 * i as f64 + 10.0;
        let lx = w - right + 10.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif">{} ({})</text>"#,
            lx + 24.0,
            ly + 4.0,
            t.persona.name(),
            escape(&t.reviewer)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_text(report: &MetricsReport, t: &Transcript) -> String {
    let c = report.counts;
    let s = report.scores;
    let mut out = String::new();
    let _ = writeln!(out, "mode: {}", t.header.config.mode);
    let _ = writeln!(out, "rounds: {}", t.rounds.len());
    let _ = writeln!(out, "decisions: {} (tp {}, fp {}, fn {}, tn {})", c.total(), c.tp, c.fp, c.fn_, c.tn);
    let _ = writeln!(out);
    let _ = writeln!(out, "Acc.  F-1   Pre.  Rec.");
    let _ = writeln!(out, "{:.2}  {:.2}  {:.2}  {:.2}", s.accuracy, s.f1, s.precision, s.recall);
    let _ = writeln!(out);
    let _ = writeln!(out, "final Elo:");
    for tr in &report.trajectories {
        let last = tr.points.last().map(|p| p.1).unwrap_or_default();
        let _ = writeln!(out, "  {:<8} {:<11} {last}", tr.reviewer, tr.persona.name());
    }
    out
}

fn write_metrics_csv(path: &Path, report: &MetricsReport, t: &Transcript) -> Result<(), ReportError> {
    let err = |source| ReportError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["mode", "decisions", "tp", "fp", "fn", "tn", "accuracy", "precision", "recall", "f1"]).map_err(err)?;
    let c = report.counts;
    let s = report.scores;
    w.write_record([
        t.header.config.mode.to_string(),
        c.total().to_string(),
        c.tp.to_string(),
        c.fp.to_string(),
        c.fn_.to_string(),
        c.tn.to_string(),
        s.accuracy.to_string(),
        s.precision.to_string(),
        s.recall.to_string(),
        s.f1.to_string(),
    ])
    .map_err(err)?;
    w.flush().map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

fn write_trajectories_csv(path: &Path, series: &[Trajectory]) -> Result<(), ReportError> {
    let err = |source| ReportError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["round", "reviewer", "persona", "elo"]).map_err(err)?;
    for t in series {
        for &(round, elo) in &t.points {
            w.write_record([round.to_string(), t.reviewer.clone(), t.persona.name().to_string(), elo.to_string()])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

/// Writes the four report files into `dir`, creating it if needed, and returns their paths.
pub fn emit_report(t: &Transcript, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| ReportError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let report = metrics_report(t)?;
    let paths: Vec<PathBuf> = [METRICS_CSV, TRAJECTORIES_CSV, ELO_SVG, REPORT_TXT].iter().map(|f| dir.join(f)).collect();
    write_metrics_csv(&paths[0], &report, t)?;
    write_trajectories_csv(&paths[1], &report.trajectories)?;
    let title = format!("Reviewer Elo by round ({})", t.header.config.mode);
    std::fs::write(&paths[2], render_svg(&report.trajectories, t.header.config.initial_elo, &title)).map_err(io(&paths[2]))?;
    std::fs::write(&paths[3], render_text(&report, t)).map_err(io(&paths[3]))?;
    Ok(paths)
}
