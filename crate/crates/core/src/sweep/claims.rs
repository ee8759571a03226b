use serde::{Deserialize, Serialize};

use super::report::parse_table;
use super::{summarize, LayerScoreReport, SweepSummary, Task};
use crate::error::Result;

/// Published per-layer tables bundled with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fixture {
    /// scFoundation trajectory scores, 12 layers.
    Table1,
    /// Tahoe-X1 trajectory scores, 24 layers.
    Table2,
    /// scFoundation perturbation scores by activation state.
    Table3,
    /// Tahoe-X1 perturbation scores by activation state.
    Table4,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [
        Fixture::Table1,
        Fixture::Table2,
        Fixture::Table3,
        Fixture::Table4,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            Fixture::Table1 => "table1.csv",
            Fixture::Table2 => "table2.csv",
            Fixture::Table3 => "table3.csv",
            Fixture::Table4 => "table4.csv",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            Fixture::Table1 => include_str!("../../fixtures/table1.csv"),
            Fixture::Table2 => include_str!("../../fixtures/table2.csv"),
            Fixture::Table3 => include_str!("../../fixtures/table3.csv"),
            Fixture::Table4 => include_str!("../../fixtures/table4.csv"),
        }
    }

    pub fn task(self) -> Task {
        match self {
            Fixture::Table1 | Fixture::Table2 => Task::Trajectory,
            Fixture::Table3 | Fixture::Table4 => Task::Perturbation,
        }
    }

    pub fn model(self) -> &'static str {
        match self {
            Fixture::Table1 | Fixture::Table3 => "scFoundation",
            Fixture::Table2 | Fixture::Table4 => "Tahoe-X1",
        }
    }
}

/// Reports parsed from a bundled table, one per score column.
pub fn fixture_reports(f: Fixture) -> Result<Vec<LayerScoreReport>> {
    parse_table(f.text(), f.task(), f.file_name())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimStatus {
    Pass,
    Fail,
    /// The tables and the accompanying text disagree; reported, not failed.
    Flagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimCheck {
    pub id: String,
    pub description: String,
    pub expected: String,
    pub observed: String,
    pub status: ClaimStatus,
}

/// Table entries are typed verbatim, so recomputed values must match them
/// up to float noise.
const EXACT: f64 = 1e-9;
/// Percentages computed here are compared to one decimal place.
const ONE_DECIMAL_PP: f64 = 0.05;
/// Rounded headline improvement (a whole percent) vs the exact value.
const HEADLINE_PP: f64 = 0.5;
/// Loose "about half" gain statements.
const ROUGH_GAIN_PP: f64 = 10.0;
/// Range endpoints quoted to two decimals (truncated, not rounded).
const TWO_DECIMALS: f64 = 0.01;

fn num(id: &str, description: &str, expected: f64, observed: f64, tol: f64) -> ClaimCheck {
    ClaimCheck {
        id: id.into(),
        description: description.into(),
        expected: format!("{expected} ± {tol}"),
        observed: format!("{observed:.6}"),
        status: if (expected - observed).abs() <= tol {
            ClaimStatus::Pass
        } else {
            ClaimStatus::Fail
        },
    }
}

fn exact<T: PartialEq + std::fmt::Display>(
    id: &str,
    description: &str,
    expected: T,
    observed: T,
) -> ClaimCheck {
    ClaimCheck {
        id: id.into(),
        description: description.into(),
        expected: expected.to_string(),
        observed: observed.to_string(),
        status: if expected == observed {
            ClaimStatus::Pass
        } else {
            ClaimStatus::Fail
        },
    }
}

fn percent_depth(s: &SweepSummary) -> i64 {
    (s.peak_depth * 100.0).round() as i64
}

fn summaries(f: Fixture) -> Result<Vec<SweepSummary>> {
    fixture_reports(f)?.iter().map(summarize).collect()
}

/// Recomputes the headline numbers from the bundled tables and compares them
/// with the values stated in the text.
pub fn check_claims() -> Result<Vec<ClaimCheck>> {
    let mut out = Vec::new();

    let t1 = &summaries(Fixture::Table1)?[0];
    out.push(exact(
        "t1.peak_layer",
        "scFoundation trajectory peak layer",
        11,
        t1.peak_layer,
    ));
    out.push(num(
        "t1.peak_rho",
        "scFoundation trajectory peak rho",
        0.5944,
        t1.peak_rho,
        EXACT,
    ));
    out.push(num(
        "t1.range_min",
        "scFoundation trajectory minimum rho",
        0.0484,
        t1.rho_range.0,
        EXACT,
    ));

    let t2 = &summaries(Fixture::Table2)?[0];
    out.push(exact(
        "t2.peak_layer",
        "Tahoe-X1 trajectory peak layer",
        16,
        t2.peak_layer,
    ));
    out.push(num(
        "t2.peak_rho",
        "Tahoe-X1 trajectory peak rho",
        0.7626,
        t2.peak_rho,
        EXACT,
    ));
    out.push(num(
        "t2.final_rho",
        "Tahoe-X1 trajectory final-layer rho",
        0.5843,
        t2.final_rho.unwrap_or(f64::NAN),
        EXACT,
    ));
    let rel = 100.0 * t2.rel_improvement_vs_final.unwrap_or(f64::NAN);
    out.push(num(
        "t2.rel_improvement_exact",
        "Tahoe-X1 peak over final layer, percent",
        30.51,
        rel,
        ONE_DECIMAL_PP,
    ));
    out.push(num(
        "t2.rel_improvement_headline",
        "Tahoe-X1 peak over final layer vs the rounded headline, percent",
        31.0,
        rel,
        HEADLINE_PP,
    ));
    out.push(num(
        "t2.range_min",
        "Tahoe-X1 trajectory range, low end",
        0.08,
        t2.rho_range.0,
        TWO_DECIMALS,
    ));
    out.push(num(
        "t2.range_max",
        "Tahoe-X1 trajectory range, high end",
        0.76,
        t2.rho_range.1,
        TWO_DECIMALS,
    ));
    let stated_depth = 60;
    out.push(ClaimCheck {
        id: "t2.peak_depth_text".into(),
        description: "Tahoe-X1 trajectory peak depth as stated in the text (layer 19, 60%) \
                      vs the table's peak"
            .into(),
        expected: format!("{stated_depth}%"),
        observed: format!("layer {} at {}%", t2.peak_layer, percent_depth(t2)),
        status: if percent_depth(t2) == stated_depth {
            ClaimStatus::Pass
        } else {
            ClaimStatus::Flagged
        },
    });

    let expectations = [
        (
            Fixture::Table3,
            "scFoundation",
            [(10, 0.329, 82), (12, 0.398, 100), (6, 0.498, 45)],
            51.4,
        ),
        (
            Fixture::Table4,
            "Tahoe-X1",
            [(1, 0.368, 0), (4, 0.444, 13), (23, 0.536, 96)],
            45.7,
        ),
    ];
    let mut max_span = 0;
    for (fixture, model, per_condition, gain) in expectations {
        let tag = if fixture == Fixture::Table3 {
            "t3"
        } else {
            "t4"
        };
        let sums = summaries(fixture)?;
        for (s, (layer, rho, depth)) in sums.iter().zip(per_condition) {
            let cond = s.condition.as_deref().unwrap_or("?");
            out.push(exact(
                &format!("{tag}.{cond}.peak_layer"),
                &format!("{model} {cond} perturbation peak layer"),
                layer,
                s.peak_layer,
            ));
            out.push(num(
                &format!("{tag}.{cond}.peak_rho"),
                &format!("{model} {cond} perturbation peak rho"),
                rho,
                s.peak_rho,
                EXACT,
            ));
            out.push(exact(
                &format!("{tag}.{cond}.peak_depth_pct"),
                &format!("{model} {cond} optimal depth, integer percent"),
                depth,
                percent_depth(s),
            ));
        }
        let depths: Vec<i64> = sums.iter().map(percent_depth).collect();
        let span = depths.iter().max().unwrap_or(&0) - depths.iter().min().unwrap_or(&0);
        max_span = max_span.max(span);
        let first = sums.first().map_or(f64::NAN, |s| s.peak_rho);
        let last = sums.last().map_or(f64::NAN, |s| s.peak_rho);
        let observed = 100.0 * (last - first) / first;
        out.push(num(
            &format!("{tag}.gain_exact"),
            &format!("{model} peak score gain from Rest to Stim48hr, percent"),
            gain,
            observed,
            ONE_DECIMAL_PP,
        ));
        out.push(num(
            &format!("{tag}.gain_headline"),
            &format!("{model} peak score gain vs the rough 50% statement, percent"),
            50.0,
            observed,
            ROUGH_GAIN_PP,
        ));
    }
    out.push(exact(
        "t34.max_depth_span_pp",
        "largest within-model spread of optimal depth across states, percentage points",
        96,
        max_span,
    ));
    Ok(out)
}
