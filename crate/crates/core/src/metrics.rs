//! Evaluation quantities computed from campaign reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::CampaignReport;
use crate::config::Rational;
use crate::transport::LogEntry;
use crate::types::{NodeId, Tick};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("empty coverage series")]
    EmptySeries,
    #[error("reports cover different targets ({0} and {1})")]
    MixedTargets(String, String),
    #[error("no reports supplied")]
    NoReports,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSample {
    pub tick: Tick,
    pub node: NodeId,
    pub coverage_count: usize,
    pub corpus_size: usize,
    /// Cumulative.
    pub sync_cost: u64,
    /// Cumulative, hash-deduplicated.
    pub crashes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub tick: Tick,
    pub coverage: usize,
}

/// First tick whose coverage reaches `ceil(fraction * best)`.
pub fn time_to_target(
    series: &[SeriesPoint],
    best: usize,
    fraction: Rational,
) -> Result<Option<Tick>, MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let target = fraction.mul_ceil(best as u64);
    Ok(series
        .iter()
        .find(|p| p.coverage as u64 >= target)
        .map(|p| p.tick))
}

/// Highest final aggregate coverage among `reports`.
pub fn best_coverage(reports: &[CampaignReport]) -> usize {
    reports.iter().map(|r| r.final_coverage).max().unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashStats {
    pub max_crashes: usize,
    pub first_crash_tick: Option<Tick>,
}

pub fn crash_stats(report: &CampaignReport) -> CrashStats {
    let unique: BTreeSet<u64> = report.crash_ids.iter().copied().collect();
    CrashStats {
        max_crashes: unique.len(),
        first_crash_tick: report.node_first_crash.iter().flatten().copied().min(),
    }
}

pub fn default_fractions() -> Vec<Rational> {
    vec![Rational::new(1, 2), Rational::new(3, 4), Rational::new(9, 10)]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    /// One cell per fraction; `None` renders as `---`.
    pub cells: Vec<Option<Tick>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetCoverageTable {
    /// Fuzzer class name, or `all` for campaign-wide coverage.
    pub scope: String,
    pub best: usize,
    pub fractions: Vec<Rational>,
    pub rows: Vec<TableRow>,
}

pub const ALL_SCOPE: &str = "all";

impl TargetCoverageTable {
    pub fn render(&self) -> String {
        let mut header = vec![format!("{} (best {})", self.scope, self.best)];
        header.extend(self.fractions.iter().map(|f| format!("{}%", percent(*f))));
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                let mut line = vec![row.label.clone()];
                line.extend(row.cells.iter().map(|c| match c {
                    Some(t) => t.to_string(),
                    None => "---".to_string(),
                }));
                line
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|l| l[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for line in std::iter::once(&header).chain(body.iter()) {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        format!("{c:<w$}", w = widths[i])
                    } else {
                        format!("{c:>w$}", w = widths[i])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

fn percent(f: Rational) -> String {
    let scaled = f.num() as f64 * 100.0 / f.den() as f64;
    let s = format!("{scaled:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// One table per fuzzer class plus a campaign-wide table.
///
/// Each row is one report; the best is taken across all reports for that
/// scope, using final coverage.
pub fn render_tables(
    reports: &[CampaignReport],
    fractions: &[Rational],
) -> Result<Vec<TargetCoverageTable>, MetricsError> {
    let first = reports.first().ok_or(MetricsError::NoReports)?;
    if let Some(other) = reports.iter().find(|r| r.target_id != first.target_id) {
        return Err(MetricsError::MixedTargets(
            first.target_id.clone(),
            other.target_id.clone(),
        ));
    }

    // Per scope: (report index, series, final coverage).
    type Entry<'a> = (usize, &'a [SeriesPoint], usize);
    let mut scopes: BTreeMap<String, Vec<Entry<'_>>> = BTreeMap::new();
    for (i, r) in reports.iter().enumerate() {
        scopes
            .entry(ALL_SCOPE.to_string())
            .or_default()
            .push((i, &r.aggregate_series, r.final_coverage));
        for (class, series) in &r.class_series {
            let fin = r.final_class_coverage.get(class).copied().unwrap_or(0);
            scopes
                .entry(class.to_string())
                .or_default()
                .push((i, series, fin));
        }
    }

    let mut tables = Vec::new();
    for (scope, entries) in scopes {
        let best = entries.iter().map(|e| e.2).max().unwrap_or(0);
        let mut rows = Vec::new();
        for (i, series, _) in entries {
            let cells = fractions
                .iter()
                .map(|&f| time_to_target(series, best, f))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(TableRow {
                label: reports[i].label.clone(),
                cells,
            });
        }
        tables.push(TargetCoverageTable {
            scope,
            best,
            fractions: fractions.to_vec(),
            rows,
        });
    }
    // Campaign-wide table first, then classes alphabetically.
    tables.sort_by_key(|t| (t.scope != ALL_SCOPE, t.scope.clone()));
    Ok(tables)
}

pub const SAMPLES_CSV_HEADER: &str = "tick,node,coverage,corpus_size,sync_cost,crashes";
pub const MSGLOG_CSV_HEADER: &str = "tick,src,dst,kind";

pub fn samples_csv(samples: &[MetricSample]) -> String {
    let mut out = String::with_capacity(32 * (samples.len() + 1));
    out.push_str(SAMPLES_CSV_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.tick, s.node, s.coverage_count, s.corpus_size, s.sync_cost, s.crashes
        );
    }
    out
}

pub fn message_log_csv(log: &[LogEntry]) -> String {
    let mut out = String::with_capacity(24 * (log.len() + 1));
    out.push_str(MSGLOG_CSV_HEADER);
    out.push('\n');
    for e in log {
        let _ = writeln!(out, "{},{},{},{}", e.tick, e.src, e.dst, e.kind.as_str());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: &[(Tick, usize)]) -> Vec<SeriesPoint> {
        points
            .iter()
            .map(|&(tick, coverage)| SeriesPoint { tick, coverage })
            .collect()
    }

    fn worked() -> Vec<SeriesPoint> {
        series(&[(5, 10), (10, 40), (15, 60), (20, 80), (25, 100)])
    }

    #[test]
    fn worked_series() {
        let s = worked();
        assert_eq!(time_to_target(&s, 100, Rational::new(1, 2)), Ok(Some(15)));
        assert_eq!(time_to_target(&s, 100, Rational::new(3, 4)), Ok(Some(20)));
        assert_eq!(time_to_target(&s, 100, Rational::new(9, 10)), Ok(Some(25)));
    }

    #[test]
    fn unreachable_target() {
        assert_eq!(time_to_target(&worked(), 101, Rational::integer(1)), Ok(None));
    }

    #[test]
    fn zero_fraction_is_first_sample() {
        assert_eq!(time_to_target(&worked(), 100, Rational::ZERO), Ok(Some(5)));
    }

    #[test]
    fn empty_series() {
        assert_eq!(
            time_to_target(&[], 10, Rational::new(1, 2)),
            Err(MetricsError::EmptySeries)
        );
    }

    #[test]
    fn ceiling_on_odd_best() {
        // 50% of 7 is 3.5, so the target is 4.
        let s = series(&[(0, 3), (60, 4)]);
        assert_eq!(time_to_target(&s, 7, Rational::new(1, 2)), Ok(Some(60)));
    }

    #[test]
    fn samples_csv_layout() {
        let csv = samples_csv(&[MetricSample {
            tick: 60,
            node: NodeId(2),
            coverage_count: 5,
            corpus_size: 4,
            sync_cost: 9,
            crashes: 1,
        }]);
        assert_eq!(csv, "tick,node,coverage,corpus_size,sync_cost,crashes\n60,2,5,4,9,1\n");
    }

    #[test]
    fn table_rendering_marks_unreached() {
        let t = TargetCoverageTable {
            scope: "all".into(),
            best: 10,
            fractions: default_fractions(),
            rows: vec![
                TableRow {
                    label: "selective".into(),
                    cells: vec![Some(60), Some(120), Some(300)],
                },
                TableRow {
                    label: "none".into(),
                    cells: vec![Some(60), None, None],
                },
            ],
        };
        let text = t.render();
        assert!(text.starts_with("all (best 10)"));
        assert!(text.contains("50%"));
        assert!(text.contains("75%"));
        assert!(text.contains("90%"));
        assert_eq!(text.matches("---").count(), 2);
    }
}
