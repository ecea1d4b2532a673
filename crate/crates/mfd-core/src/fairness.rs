//! Equalized-odds style fairness metrics over (group, class) cells.
//!
//! DEO_M is the maximum over classes of the largest between-group accuracy
//! gap for that class; DEO_A is the mean of those per-class gaps over all
//! classes. Cells with zero support are excluded from gap computation rather
//! than treated as zero accuracy, and classes with fewer than two supported
//! groups contribute a zero gap (they still count in DEO_A's denominator).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-cell accuracy table plus the derived DEO metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeoReport {
    pub num_classes: usize,
    pub num_groups: usize,
    /// Fraction of all samples predicted correctly.
    pub overall_acc: f64,
    /// Mean over classes of the per-class max between-group gap.
    pub deo_a: f64,
    /// Max over classes of the per-class max between-group gap.
    pub deo_m: f64,
    /// acc[group][class]; `None` where the cell has no samples.
    pub acc: Vec<Vec<Option<f64>>>,
    /// support[group][class]: sample count per cell.
    pub support: Vec<Vec<usize>>,
}

fn validate_inputs(
    preds: &[usize],
    labels: &[usize],
    groups: &[usize],
    num_classes: usize,
    num_groups: usize,
) -> Result<()> {
    if num_classes == 0 || num_groups == 0 {
        return Err(Error::Parameter("need at least one class and one group".into()));
    }
    if preds.len() != labels.len() || labels.len() != groups.len() {
        return Err(Error::Shape(format!(
            "length mismatch: {} preds, {} labels, {} groups",
            preds.len(),
            labels.len(),
            groups.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Parameter("empty evaluation set".into()));
    }
    if let Some(bad) = labels.iter().find(|l| **l >= num_classes) {
        return Err(Error::Domain(format!("label {bad} out of range 0..{num_classes}")));
    }
    if let Some(bad) = preds.iter().find(|p| **p >= num_classes) {
        return Err(Error::Domain(format!("prediction {bad} out of range 0..{num_classes}")));
    }
    if let Some(bad) = groups.iter().find(|g| **g >= num_groups) {
        return Err(Error::Domain(format!("group {bad} out of range 0..{num_groups}")));
    }
    Ok(())
}

/// Per-(group, class) accuracy and support tables.
pub fn group_class_accuracy(
    preds: &[usize],
    labels: &[usize],
    groups: &[usize],
    num_classes: usize,
    num_groups: usize,
) -> Result<(Vec<Vec<Option<f64>>>, Vec<Vec<usize>>)> {
    validate_inputs(preds, labels, groups, num_classes, num_groups)?;
    let mut correct = vec![vec![0usize; num_classes]; num_groups];
    let mut support = vec![vec![0usize; num_classes]; num_groups];
    for i in 0..preds.len() {
        support[groups[i]][labels[i]] += 1;
        if preds[i] == labels[i] {
            correct[groups[i]][labels[i]] += 1;
        }
    }
    let acc = correct
        .iter()
        .zip(&support)
        .map(|(crow, srow)| {
            crow.iter()
                .zip(srow)
                .map(|(&c, &s)| if s > 0 { Some(c as f64 / s as f64) } else { None })
                .collect()
        })
        .collect();
    Ok((acc, support))
}

/// Derives DEO metrics from accuracy and support tables (as produced by
/// [`group_class_accuracy`]).
pub fn deo_metrics(acc: &[Vec<Option<f64>>], support: &[Vec<usize>]) -> Result<DeoReport> {
    let num_groups = acc.len();
    if num_groups == 0 || num_groups != support.len() {
        return Err(Error::Shape("accuracy/support group counts differ or are zero".into()));
    }
    let num_classes = acc[0].len();
    if num_classes == 0 {
        return Err(Error::Shape("zero classes".into()));
    }
    for a in 0..num_groups {
        if acc[a].len() != num_classes || support[a].len() != num_classes {
            return Err(Error::Shape("ragged accuracy/support tables".into()));
        }
        for y in 0..num_classes {
            match acc[a][y] {
                Some(v) => {
                    if support[a][y] == 0 {
                        return Err(Error::Contract(format!(
                            "cell ({a}, {y}) has accuracy but zero support"
                        )));
                    }
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Domain(format!(
                            "accuracy {v} outside [0, 1] at ({a}, {y})"
                        )));
                    }
                }
                None => {
                    if support[a][y] != 0 {
                        return Err(Error::Contract(format!(
                            "cell ({a}, {y}) has support but no accuracy"
                        )));
                    }
                }
            }
        }
    }

    let mut gap_sum = 0.0;
    let mut gap_max = 0.0f64;
    for y in 0..num_classes {
        let present: Vec<f64> = (0..num_groups).filter_map(|a| acc[a][y]).collect();
        let mut gap = 0.0f64;
        for i in 0..present.len() {
            for j in (i + 1)..present.len() {
                gap = gap.max((present[i] - present[j]).abs());
            }
        }
        if present.len() >= 2 {
            gap_max = gap_max.max(gap);
            gap_sum += gap;
        }
    }

    let mut weighted = 0.0;
    let mut total = 0usize;
    for a in 0..num_groups {
        for y in 0..num_classes {
            if let Some(v) = acc[a][y] {
                weighted += v * support[a][y] as f64;
                total += support[a][y];
            }
        }
    }
    if total == 0 {
        return Err(Error::Parameter("all cells empty".into()));
    }

    Ok(DeoReport {
        num_classes,
        num_groups,
        overall_acc: weighted / total as f64,
        deo_a: gap_sum / num_classes as f64,
        deo_m: gap_max,
        acc: acc.to_vec(),
        support: support.to_vec(),
    })
}

/// Convenience composition of [`group_class_accuracy`] and [`deo_metrics`].
pub fn deo_report(
    preds: &[usize],
    labels: &[usize],
    groups: &[usize],
    num_classes: usize,
    num_groups: usize,
) -> Result<DeoReport> {
    let (acc, support) = group_class_accuracy(preds, labels, groups, num_classes, num_groups)?;
    deo_metrics(&acc, &support)
}

impl DeoReport {
    /// Flat key/value JSON rendering with deterministic (sorted) keys:
    /// scalars first, then acc_{a}_{y} and support_{a}_{y} per cell.
    pub fn to_flat_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        let mut entries: Vec<(String, serde_json::Value)> = vec![
            ("num_classes".into(), self.num_classes.into()),
            ("num_groups".into(), self.num_groups.into()),
            ("overall_acc".into(), self.overall_acc.into()),
            ("deo_a".into(), self.deo_a.into()),
            ("deo_m".into(), self.deo_m.into()),
        ];
        for a in 0..self.num_groups {
            for y in 0..self.num_classes {
                let acc_v = match self.acc[a][y] {
                    Some(v) => serde_json::Value::from(v),
                    None => serde_json::Value::Null,
                };
                entries.push((format!("acc_{a}_{y}"), acc_v));
                entries.push((format!("support_{a}_{y}"), self.support[a][y].into()));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for (k, v) in entries {
            map.insert(k, v);
        }
        serde_json::Value::Object(map)
    }
}
