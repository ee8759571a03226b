use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{report_depth, LayerFailure, LayerScoreReport, ScoreRow, SweepSummary, Task};
use crate::error::{Error, Result};

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v:?}"))
}

/// `layer,depth,rho,p_value`; failed layers carry `NA`.
pub fn scores_csv(report: &LayerScoreReport) -> String {
    let mut out = String::from("layer,depth,rho,p_value\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{:?},{},{}",
            r.layer,
            r.depth,
            fmt_opt(r.rho),
            fmt_opt(r.p_value)
        );
    }
    out
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    task: Task,
    condition: Option<&'a str>,
    config_digest: &'a str,
    summary: Option<&'a SweepSummary>,
    failures: Vec<(usize, &'a LayerFailure)>,
}

pub fn summary_json(report: &LayerScoreReport, summary: Option<&SweepSummary>) -> String {
    let file = SummaryFile {
        task: report.task,
        condition: report.condition.as_deref(),
        config_digest: &report.config_digest,
        summary,
        failures: report
            .rows
            .iter()
            .filter_map(|r| r.failure.as_ref().map(|f| (r.layer, f)))
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("summary serializes");
    s.push('\n');
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Line plot of rho against normalized depth, one polyline per report, with
/// each curve's peak circled.
pub fn curves_svg(reports: &[LayerScoreReport]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 600.0, 30.0, 350.0);
    let lo = reports
        .iter()
        .flat_map(|r| r.rows.iter().filter_map(|row| row.rho))
        .fold(0.0f64, f64::min);
    let hi = 1.0f64;
    let px = |d: f64| left + d * (right - left);
    let py = |v: f64| bottom - (v - lo) / (hi - lo) * (bottom - top);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    if let Some(first) = reports.first() {
        let _ = writeln!(s, "<!-- config {} -->", xml_escape(&first.config_digest));
    }
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" stroke="black" fill="none"/>"#
    );
    for tick in 0..=4 {
        let d = f64::from(tick) / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{:.2}</text>"#,
            px(d),
            bottom + 16.0,
            d
        );
        let v = lo + (hi - lo) * d;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{:.2}</text>"#,
            left - 6.0,
            py(v) + 4.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">normalized depth</text>"#,
        (left + right) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">Spearman rho</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );
    for (i, r) in reports.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let scored: Vec<&ScoreRow> = r.rows.iter().filter(|row| row.rho.is_some()).collect();
        let points: Vec<String> = scored
            .iter()
            .map(|row| format!("{:.2},{:.2}", px(row.depth), py(row.rho.unwrap_or(0.0))))
            .collect();
        let name = r.condition.clone().unwrap_or_else(|| match r.task {
            Task::Trajectory => "trajectory".into(),
            Task::Perturbation => "perturbation".into(),
        });
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"><title>{}</title></polyline>"#,
            points.join(" "),
            xml_escape(&name)
        );
        let peak = scored
            .iter()
            .fold(None, |best: Option<&&ScoreRow>, row| match best {
                Some(b) if b.rho >= row.rho => Some(b),
                _ => Some(row),
            });
        if let Some(p) = peak {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="5" stroke="{color}" fill="none"/>"#,
                px(p.depth),
                py(p.rho.unwrap_or(0.0))
            );
        }
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">{}</text>"#,
            right - 110.0,
            ly + 10.0,
            xml_escape(&name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `scores.csv`, `summary.json` and `curve.svg` into `out_dir`.
pub fn emit_report(
    report: &LayerScoreReport,
    summary: Option<&SweepSummary>,
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join("scores.csv"), &scores_csv(report))?;
    write(
        &out_dir.join("summary.json"),
        &summary_json(report, summary),
    )?;
    write(
        &out_dir.join("curve.svg"),
        &curves_svg(std::slice::from_ref(report)),
    )
}

pub fn write_combined_svg(reports: &[LayerScoreReport], path: &Path) -> Result<()> {
    write(path, &curves_svg(reports))
}

/// Parses a layer table: a `layer` column, optional `depth` and `p_value`
/// columns, and one score column per condition. A score column named `rho`
/// has no condition. `NA` marks a missing score.
pub(crate) fn parse_table(text: &str, task: Task, source: &str) -> Result<Vec<LayerScoreReport>> {
    let err = |msg: String| Error::Parse {
        what: source.to_string(),
        msg,
    };
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| err(e.to_string()))?.clone();
    if headers.get(0) != Some("layer") {
        return Err(err("first column must be `layer`".into()));
    }
    let depth_col = headers.iter().position(|h| h == "depth");
    let p_col = headers.iter().position(|h| h == "p_value");
    let score_cols: Vec<usize> = (1..headers.len())
        .filter(|&i| Some(i) != depth_col && Some(i) != p_col)
        .collect();
    if score_cols.is_empty() {
        return Err(err("no score column".into()));
    }
    let records = r
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| err(e.to_string()))?;
    let n = records.len();
    let num = |field: &str, line: usize| -> Result<Option<f64>> {
        if field == "NA" {
            return Ok(None);
        }
        field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Some)
            .ok_or_else(|| err(format!("line {line}: bad number {field:?}")))
    };
    let mut reports: Vec<LayerScoreReport> = score_cols
        .iter()
        .map(|&c| LayerScoreReport {
            task,
            condition: (headers[c] != *"rho").then(|| headers[c].to_string()),
            rows: Vec::with_capacity(n),
            config_digest: String::new(),
        })
        .collect();
    for (i, rec) in records.iter().enumerate() {
        let line = i + 2;
        let layer: usize = rec[0]
            .parse()
            .map_err(|_| err(format!("line {line}: bad layer {:?}", &rec[0])))?;
        if layer != i + 1 {
            return Err(err(format!(
                "line {line}: expected layer {}, found {layer}",
                i + 1
            )));
        }
        let depth = match depth_col {
            Some(c) => {
                num(&rec[c], line)?.ok_or_else(|| err(format!("line {line}: missing depth")))?
            }
            None => report_depth(layer, n)?,
        };
        let p_value = match p_col {
            Some(c) if score_cols.len() == 1 => num(&rec[c], line)?,
            _ => None,
        };
        for (rep, &c) in reports.iter_mut().zip(&score_cols) {
            rep.rows.push(ScoreRow {
                layer,
                depth,
                rho: num(&rec[c], line)?,
                p_value,
                failure: None,
            });
        }
    }
    if n == 0 {
        return Err(err("table has no rows".into()));
    }
    Ok(reports)
}

/// Reads a `scores.csv` (or any layer table in the same shape).
pub fn read_scores_csv(path: &Path, task: Task) -> Result<Vec<LayerScoreReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, task, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::summarize;

    fn sample() -> LayerScoreReport {
        let mut r = LayerScoreReport::from_scores(
            Task::Trajectory,
            None,
            &[Some(0.25), None, Some(0.5)],
            "abc".into(),
        )
        .unwrap();
        r.rows[0].p_value = Some(0.01);
        r.rows[1].failure = Some(LayerFailure {
            code: "E_DISCONNECTED".into(),
            message: "2 components".into(),
        });
        r
    }

    #[test]
    fn scores_csv_shape() {
        let text = scores_csv(&sample());
        assert_eq!(
            text,
            "layer,depth,rho,p_value\n1,0.0,0.25,0.01\n2,0.5,NA,NA\n3,1.0,0.5,NA\n"
        );
        let back = parse_table(&text, Task::Trajectory, "t").unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].rho(), sample().rho());
        assert_eq!(back[0].rows[0].p_value, Some(0.01));
    }

    #[test]
    fn multi_condition_table() {
        let reps = parse_table(
            "layer,Rest,Stim\n1,0.1,0.3\n2,0.2,NA\n",
            Task::Perturbation,
            "t",
        )
        .unwrap();
        assert_eq!(reps.len(), 2);
        assert_eq!(reps[1].condition.as_deref(), Some("Stim"));
        assert_eq!(reps[1].rho(), [Some(0.3), None]);
    }

    #[test]
    fn malformed_tables() {
        assert!(parse_table("x,rho\n1,0.1\n", Task::Trajectory, "t").is_err());
        assert!(parse_table("layer,rho\n2,0.1\n", Task::Trajectory, "t").is_err());
        assert!(parse_table("layer,rho\n1,abc\n", Task::Trajectory, "t").is_err());
    }

    #[test]
    fn svg_has_one_polyline_per_report() {
        let mut other = sample();
        other.condition = Some("A&B".into());
        let svg = curves_svg(&[sample(), other]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("A&amp;B"));
        assert!(!svg.contains("A&B"));
    }

    #[test]
    fn emit_writes_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample();
        let summary = summarize(&report).unwrap();
        emit_report(&report, Some(&summary), dir.path()).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
                .unwrap();
        assert_eq!(json["summary"]["peak_layer"], 3);
        assert_eq!(json["failures"][0][0], 2);
        assert_eq!(
            fs::read_to_string(dir.path().join("scores.csv"))
                .unwrap()
                .lines()
                .count(),
            4
        );
        assert!(dir.path().join("curve.svg").exists());
    }
}
