//! Aggregation of multi-seed results into a comparison table.
//!
//! A [`MethodSummary`] holds raw per-seed metrics for one method, in
//! percentage points. A [`ComparisonReport`] reduces summaries to mean and
//! standard deviation and annotates every non-teacher row with the relative
//! change against the teacher baseline, rendered as text and CSV.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::TrainOutput;

/// Per-seed metrics for one method. Accuracy and DEO values are stored in
/// percentage points so reports read in the same units they are printed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSummary {
    pub tag: String,
    pub seeds: Vec<u64>,
    pub accuracy: Vec<f64>,
    pub deo_a: Vec<f64>,
    pub deo_m: Vec<f64>,
}

impl MethodSummary {
    /// Collects the final metrics of a set of finished runs, converting the
    /// trainer's fractional metrics to percentage points.
    pub fn from_runs(tag: &str, runs: &[(u64, TrainOutput)]) -> Self {
        MethodSummary {
            tag: tag.to_string(),
            seeds: runs.iter().map(|(s, _)| *s).collect(),
            accuracy: runs.iter().map(|(_, r)| 100.0 * r.accuracy).collect(),
            deo_a: runs.iter().map(|(_, r)| 100.0 * r.report.deo_a).collect(),
            deo_m: runs.iter().map(|(_, r)| 100.0 * r.report.deo_m).collect(),
        }
    }

    /// Builds a summary directly from per-seed metric triples, already in
    /// percentage points.
    pub fn from_metrics(tag: &str, rows: &[(u64, f64, f64, f64)]) -> Self {
        MethodSummary {
            tag: tag.to_string(),
            seeds: rows.iter().map(|r| r.0).collect(),
            accuracy: rows.iter().map(|r| r.1).collect(),
            deo_a: rows.iter().map(|r| r.2).collect(),
            deo_m: rows.iter().map(|r| r.3).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.seeds.len();
        if n == 0 {
            return Err(Error::Parameter(format!("summary {}: no seeds", self.tag)));
        }
        if self.accuracy.len() != n || self.deo_a.len() != n || self.deo_m.len() != n {
            return Err(Error::Shape(format!(
                "summary {}: {} seeds vs {}/{}/{} metric entries",
                self.tag,
                n,
                self.accuracy.len(),
                self.deo_a.len(),
                self.deo_m.len()
            )));
        }
        for v in self
            .accuracy
            .iter()
            .chain(&self.deo_a)
            .chain(&self.deo_m)
        {
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "summary {}: non-finite metric",
                    self.tag
                )));
            }
        }
        Ok(())
    }
}

/// Sample mean and (n-1)-denominator standard deviation. A single value has
/// standard deviation zero.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Relative change of `value` against `reference`, in percent. Positive means
/// the value increased.
pub fn relative_change_pct(value: f64, reference: f64) -> Result<f64> {
    if !value.is_finite() || !reference.is_finite() {
        return Err(Error::Domain("relative change of non-finite value".into()));
    }
    if reference == 0.0 {
        return Err(Error::Domain("relative change against zero reference".into()));
    }
    Ok(100.0 * (value - reference) / reference)
}

/// One rendered row: seed count, per-metric mean and standard deviation, and
/// the signed relative change against the teacher. The teacher row carries no
/// relative changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub tag: String,
    pub seeds: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub deo_a_mean: f64,
    pub deo_a_std: f64,
    pub deo_m_mean: f64,
    pub deo_m_std: f64,
    pub acc_rel_pct: Option<f64>,
    pub deo_a_rel_pct: Option<f64>,
    pub deo_m_rel_pct: Option<f64>,
}

fn reduce(summary: &MethodSummary) -> ResultRow {
    let (acc_mean, acc_std) = mean_std(&summary.accuracy);
    let (deo_a_mean, deo_a_std) = mean_std(&summary.deo_a);
    let (deo_m_mean, deo_m_std) = mean_std(&summary.deo_m);
    ResultRow {
        tag: summary.tag.clone(),
        seeds: summary.seeds.len(),
        acc_mean,
        acc_std,
        deo_a_mean,
        deo_a_std,
        deo_m_mean,
        deo_m_std,
        acc_rel_pct: None,
        deo_a_rel_pct: None,
        deo_m_rel_pct: None,
    }
}

/// A full comparison table. The first row is always the teacher baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ResultRow>,
}

impl ComparisonReport {
    /// Reduces the teacher and method summaries and computes every relative
    /// change against the teacher's mean.
    pub fn build(teacher: &MethodSummary, methods: &[MethodSummary]) -> Result<Self> {
        teacher.validate()?;
        for m in methods {
            m.validate()?;
        }
        let base = reduce(teacher);
        let mut rows = vec![base.clone()];
        for m in methods {
            let mut row = reduce(m);
            row.acc_rel_pct = Some(relative_change_pct(row.acc_mean, base.acc_mean)?);
            row.deo_a_rel_pct = Some(relative_change_pct(row.deo_a_mean, base.deo_a_mean)?);
            row.deo_m_rel_pct = Some(relative_change_pct(row.deo_m_mean, base.deo_m_mean)?);
            rows.push(row);
        }
        Ok(ComparisonReport { rows })
    }

    /// Plain-text table. Method cells read `mean (change arrow)` where the
    /// arrow gives the direction of the change and the number its magnitude,
    /// both at two decimals; the teacher cell is the bare mean.
    pub fn render_text(&self) -> String {
        let headers = ["model", "seeds", "accuracy", "deo_a", "deo_m"];
        let mut grid: Vec<[String; 5]> = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            grid.push([
                row.tag.clone(),
                row.seeds.to_string(),
                metric_cell(row.acc_mean, row.acc_rel_pct),
                metric_cell(row.deo_a_mean, row.deo_a_rel_pct),
                metric_cell(row.deo_m_mean, row.deo_m_rel_pct),
            ]);
        }
        let mut widths = [0usize; 5];
        for (i, h) in headers.iter().enumerate() {
            widths[i] = h.chars().count();
        }
        for cells in &grid {
            for (i, c) in cells.iter().enumerate() {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
        let mut out = String::new();
        render_line(&mut out, &headers.map(String::from), &widths);
        let rule: String = widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("  ");
        out.push_str(&rule);
        out.push('\n');
        for cells in &grid {
            render_line(&mut out, cells, &widths);
        }
        out
    }

    /// CSV form with signed relative changes. The teacher's relative-change
    /// cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "tag,seeds,acc_mean,acc_std,deo_a_mean,deo_a_std,deo_m_mean,deo_m_std,\
             acc_rel_pct,deo_a_rel_pct,deo_m_rel_pct\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.tag,
                r.seeds,
                r.acc_mean,
                r.acc_std,
                r.deo_a_mean,
                r.deo_a_std,
                r.deo_m_mean,
                r.deo_m_std,
                opt_cell(r.acc_rel_pct),
                opt_cell(r.deo_a_rel_pct),
                opt_cell(r.deo_m_rel_pct),
            ));
        }
        out
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Formats one metric cell: `82.77 (3.96 ↑)` for a method, `79.62` for the
/// teacher, `82.77 (0.00)` when nothing changed.
fn metric_cell(mean: f64, rel: Option<f64>) -> String {
    match rel {
        None => format!("{mean:.2}"),
        Some(r) if r > 0.0 => format!("{mean:.2} ({:.2} \u{2191})", r),
        Some(r) if r < 0.0 => format!("{mean:.2} ({:.2} \u{2193})", -r),
        Some(_) => format!("{mean:.2} (0.00)"),
    }
}

fn render_line(out: &mut String, cells: &[String; 5], widths: &[usize; 5]) {
    let mut parts = Vec::with_capacity(5);
    for (c, w) in cells.iter().zip(widths) {
        let pad = w - c.chars().count();
        parts.push(format!("{}{}", c, " ".repeat(pad)));
    }
    out.push_str(parts.join("  ").trim_end());
    out.push('\n');
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(tag: &str, acc: f64, deo_a: f64, deo_m: f64) -> MethodSummary {
        MethodSummary::from_metrics(tag, &[(0, acc, deo_a, deo_m)])
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let (m1, s1) = mean_std(&[7.25]);
        assert_eq!(m1, 7.25);
        assert_eq!(s1, 0.0);
    }

    #[test]
    fn relative_change_is_signed() {
        let up = relative_change_pct(82.77, 79.62).unwrap();
        assert!(up > 0.0);
        assert_eq!(format!("{up:.2}"), "3.96");
        let down = relative_change_pct(6.08, 31.32).unwrap();
        assert!(down < 0.0);
        assert_eq!(format!("{:.2}", -down), "80.59");
    }

    #[test]
    fn relative_change_rejects_zero_and_non_finite_reference() {
        assert!(relative_change_pct(1.0, 0.0).is_err());
        assert!(relative_change_pct(1.0, f64::NAN).is_err());
        assert!(relative_change_pct(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn metric_cells_round_tricky_magnitudes() {
        let teacher = summary("teacher", 79.62, 15.63, 31.32);
        let cases = [
            ("a", 79.59, 15.90, 32.47, "0.04 \u{2193}", "1.73 \u{2191}", "3.67 \u{2191}"),
            ("b", 79.00, 15.57, 31.25, "0.78 \u{2193}", "0.38 \u{2193}", "0.22 \u{2193}"),
            ("c", 80.34, 15.54, 34.12, "0.90 \u{2191}", "0.58 \u{2193}", "8.94 \u{2191}"),
        ];
        for (tag, acc, da, dm, e_acc, e_da, e_dm) in cases {
            let rep =
                ComparisonReport::build(&teacher, &[summary(tag, acc, da, dm)]).unwrap();
            let text = rep.render_text();
            assert!(text.contains(&format!("{acc:.2} ({e_acc})")), "{text}");
            assert!(text.contains(&format!("{da:.2} ({e_da})")), "{text}");
            assert!(text.contains(&format!("{dm:.2} ({e_dm})")), "{text}");
        }
    }

    #[test]
    fn identical_method_shows_zero_change() {
        let teacher = summary("teacher", 80.0, 10.0, 20.0);
        let rep =
            ComparisonReport::build(&teacher, &[summary("clone", 80.0, 10.0, 20.0)]).unwrap();
        let text = rep.render_text();
        assert_eq!(text.matches("(0.00)").count(), 3);
        let clone = &rep.rows[1];
        assert_eq!(clone.acc_rel_pct, Some(0.0));
        assert_eq!(clone.deo_a_rel_pct, Some(0.0));
        assert_eq!(clone.deo_m_rel_pct, Some(0.0));
    }

    #[test]
    fn teacher_row_has_no_parentheses() {
        let teacher = summary("teacher", 79.62, 15.63, 31.32);
        let rep =
            ComparisonReport::build(&teacher, &[summary("m", 82.77, 2.73, 6.08)]).unwrap();
        let text = rep.render_text();
        let teacher_line = text
            .lines()
            .find(|l| l.starts_with("teacher"))
            .unwrap();
        assert!(!teacher_line.contains('('));
        assert!(teacher_line.contains("79.62"));
        let m_line = text.lines().find(|l| l.starts_with("m ")).unwrap();
        assert!(m_line.contains("82.77 (3.96 \u{2191})"));
        assert!(m_line.contains("2.73 (82.53 \u{2193})"));
        assert!(m_line.contains("6.08 (80.59 \u{2193})"));
    }

    #[test]
    fn csv_keeps_signs_and_empty_teacher_cells() {
        let teacher = summary("teacher", 79.62, 15.63, 31.32);
        let rep =
            ComparisonReport::build(&teacher, &[summary("m", 82.77, 2.73, 6.08)]).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "tag,seeds,acc_mean,acc_std,deo_a_mean,deo_a_std,deo_m_mean,deo_m_std,\
             acc_rel_pct,deo_a_rel_pct,deo_m_rel_pct"
        );
        assert!(lines[1].ends_with(",,,"));
        let cells: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(cells.len(), 11);
        assert!(cells[8].parse::<f64>().unwrap() > 0.0);
        assert!(cells[9].parse::<f64>().unwrap() < 0.0);
        assert!(cells[10].parse::<f64>().unwrap() < 0.0);
    }

    #[test]
    fn multi_seed_reduction_uses_sample_std() {
        let s = MethodSummary::from_metrics(
            "m",
            &[(0, 80.0, 10.0, 20.0), (1, 82.0, 12.0, 24.0)],
        );
        let teacher = summary("teacher", 80.0, 10.0, 20.0);
        let rep = ComparisonReport::build(&teacher, &[s]).unwrap();
        let row = &rep.rows[1];
        assert_eq!(row.seeds, 2);
        assert!((row.acc_mean - 81.0).abs() < 1e-12);
        assert!((row.acc_std - (2.0f64).sqrt()).abs() < 1e-12);
        assert!((row.deo_m_mean - 22.0).abs() < 1e-12);
    }

    #[test]
    fn build_rejects_ragged_and_empty_summaries() {
        let teacher = summary("teacher", 80.0, 10.0, 20.0);
        let mut bad = summary("m", 80.0, 10.0, 20.0);
        bad.deo_m.push(1.0);
        assert!(ComparisonReport::build(&teacher, &[bad]).is_err());
        let empty = MethodSummary::from_metrics("m", &[]);
        assert!(ComparisonReport::build(&teacher, &[empty]).is_err());
        let zero_ref = summary("teacher", 80.0, 0.0, 20.0);
        let m = summary("m", 80.0, 1.0, 20.0);
        assert!(ComparisonReport::build(&zero_ref, &[m]).is_err());
    }

    #[test]
    fn summary_survives_json_round_trip() {
        let s = MethodSummary::from_metrics(
            "mfd",
            &[(11, 82.5, 2.7, 6.1), (12, 83.0, 2.9, 6.0)],
        );
        let j = serde_json::to_string(&s).unwrap();
        let back: MethodSummary = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        let rejected = serde_json::from_str::<MethodSummary>(
            "{\"tag\":\"x\",\"seeds\":[],\"accuracy\":[],\"deo_a\":[],\"deo_m\":[],\"extra\":1}",
        );
        assert!(rejected.is_err());
    }
}
