//! Dataset-level evaluation: per-case metric reports plus aggregates.
//!
//! Predictions and ground truths are matched by case_id; unmatched ids are
//! reported and the run continues on the intersection. Distance metrics
//! that are undefined for a case (one empty mask) enter the CSV as `inf`
//! and are excluded from the aggregates, with the exclusion counted.

use crate::manifest::DatasetManifest;
use craniaug_core::metrics::{evaluate_case, MetricsReport};
use craniaug_core::nrrd::load_nrrd;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("no case ids in common between predictions and ground truth")]
    NoOverlap,
    #[error("case {case_id}: {message}")]
    Case { case_id: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Cases whose value was undefined (one empty mask) and therefore
    /// excluded from the statistics above.
    pub undefined: usize,
}

fn stats(values: &[f64]) -> MetricStats {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let undefined = values.len() - finite.len();
    if finite.is_empty() {
        return MetricStats {
            mean: f64::NAN,
            std: f64::NAN,
            median: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
            undefined,
        };
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let var = finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = finite.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    MetricStats {
        mean,
        std: var.sqrt(),
        median,
        min: sorted[0],
        max: *sorted.last().unwrap(),
        undefined,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateStats {
    pub cases: usize,
    pub dsc: MetricStats,
    pub sdsc: MetricStats,
    pub hd95: MetricStats,
    pub msd: MetricStats,
    pub bdsc: MetricStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetEvaluation {
    pub per_case: Vec<(String, MetricsReport)>,
    pub aggregate: AggregateStats,
    pub unmatched_pred: Vec<String>,
    pub unmatched_gt: Vec<String>,
}

impl DatasetEvaluation {
    /// Per-case table with header (case_id, dsc, sdsc, hd95, msd, bdsc).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case_id,dsc,sdsc,hd95,msd,bdsc\n");
        for (id, r) in &self.per_case {
            out.push_str(&format!(
                "{id},{},{},{},{},{}\n",
                r.dsc, r.sdsc, r.hd95, r.msd, r.bdsc
            ));
        }
        out
    }
}

/// Evaluate every case id present in both manifests (the `defect` channel
/// carries the evaluated mask on both sides).
pub fn evaluate_dataset(
    pred_manifest: &DatasetManifest,
    gt_manifest: &DatasetManifest,
    tau: f64,
) -> Result<DatasetEvaluation, EvaluateError> {
    let preds: BTreeMap<&str, _> = pred_manifest
        .cases
        .iter()
        .map(|c| (c.case_id.as_str(), c))
        .collect();
    let gts: BTreeMap<&str, _> = gt_manifest
        .cases
        .iter()
        .map(|c| (c.case_id.as_str(), c))
        .collect();

    let matched: Vec<&str> = preds
        .keys()
        .filter(|k| gts.contains_key(*k))
        .copied()
        .collect();
    let unmatched_pred: Vec<String> = preds
        .keys()
        .filter(|k| !gts.contains_key(*k))
        .map(|s| s.to_string())
        .collect();
    let unmatched_gt: Vec<String> = gts
        .keys()
        .filter(|k| !preds.contains_key(*k))
        .map(|s| s.to_string())
        .collect();
    if matched.is_empty() {
        return Err(EvaluateError::NoOverlap);
    }

    let per_case: Vec<(String, MetricsReport)> = matched
        .par_iter()
        .map(|&id| {
            let run = || -> Result<MetricsReport, String> {
                let pred_path = pred_manifest.defect_path(preds[id]);
                let gt_path = gt_manifest.defect_path(gts[id]);
                let pred = load_nrrd(&pred_path)
                    .map_err(|e| format!("{}: {e}", pred_path.display()))?
                    .binarize(0.5);
                let gt = load_nrrd(&gt_path)
                    .map_err(|e| format!("{}: {e}", gt_path.display()))?
                    .binarize(0.5);
                evaluate_case(&pred, &gt, None, tau).map_err(|e| e.to_string())
            };
            run()
                .map(|r| (id.to_string(), r))
                .map_err(|message| EvaluateError::Case {
                    case_id: id.to_string(),
                    message,
                })
        })
        .collect::<Result<_, _>>()?;

    let collect =
        |f: fn(&MetricsReport) -> f64| -> Vec<f64> { per_case.iter().map(|(_, r)| f(r)).collect() };
    let aggregate = AggregateStats {
        cases: per_case.len(),
        dsc: stats(&collect(|r| r.dsc)),
        sdsc: stats(&collect(|r| r.sdsc)),
        hd95: stats(&collect(|r| r.hd95)),
        msd: stats(&collect(|r| r.msd)),
        bdsc: stats(&collect(|r| r.bdsc)),
    };
    Ok(DatasetEvaluation {
        per_case,
        aggregate,
        unmatched_pred,
        unmatched_gt,
    })
}

/// Parse a per-case metrics CSV (the `to_csv` format) into id -> column.
pub fn parse_metrics_csv(text: &str, metric: &str) -> Result<Vec<(String, f64)>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty CSV")?;
    let columns: Vec<&str> = header.split(',').collect();
    let col = columns
        .iter()
        .position(|&c| c == metric)
        .ok_or_else(|| format!("metric {metric:?} not in header {header:?}"))?;
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(format!("line {}: wrong field count", lineno + 2));
        }
        let value: f64 = fields[col]
            .parse()
            .map_err(|e| format!("line {}: {e}", lineno + 2))?;
        out.push((fields[0].to_string(), value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::CaseEntry;
    use craniaug_core::nrrd::{save_nrrd_with, NrrdEncoding, NrrdType};
    use craniaug_core::synth;
    use std::path::Path;

    fn write_mask_pairs(dir: &Path, shift: [i64; 3]) -> (DatasetManifest, DatasetManifest) {
        let mut pred_cases = Vec::new();
        let mut gt_cases = Vec::new();
        for i in 0..3 {
            let c = 8.0 + i as f64;
            let gt = synth::ball((20, 20, 20), (c, c, c), 4.0);
            let pred = gt.translate((shift[0], shift[1], shift[2]));
            let gt_path = dir.join(format!("gt{i}.nrrd"));
            let pred_path = dir.join(format!("pred{i}.nrrd"));
            save_nrrd_with(
                gt.as_volume(),
                &gt_path,
                NrrdType::Uint8,
                NrrdEncoding::Gzip,
            )
            .unwrap();
            save_nrrd_with(
                pred.as_volume(),
                &pred_path,
                NrrdType::Uint8,
                NrrdEncoding::Gzip,
            )
            .unwrap();
            gt_cases.push(CaseEntry {
                case_id: format!("case{i}"),
                defective_skull: None,
                defect: gt_path,
                complete_skull: None,
            });
            pred_cases.push(CaseEntry {
                case_id: format!("case{i}"),
                defective_skull: None,
                defect: pred_path,
                complete_skull: None,
            });
        }
        (
            DatasetManifest {
                root: dir.to_path_buf(),
                cases: pred_cases,
            },
            DatasetManifest {
                root: dir.to_path_buf(),
                cases: gt_cases,
            },
        )
    }

    #[test]
    fn identical_predictions_score_perfect() {
        let dir = tempfile::tempdir().unwrap();
        let (pred, gt) = write_mask_pairs(dir.path(), [0, 0, 0]);
        let eval = evaluate_dataset(&pred, &gt, 1.0).unwrap();
        assert_eq!(eval.aggregate.cases, 3);
        assert_eq!(eval.aggregate.dsc.mean, 1.0);
        assert_eq!(eval.aggregate.hd95.mean, 0.0);
        assert_eq!(
            eval.aggregate.dsc.std, 0.0,
            "identical reports have zero spread"
        );
    }

    #[test]
    fn single_case_aggregate_equals_case() {
        let dir = tempfile::tempdir().unwrap();
        let (mut pred, mut gt) = write_mask_pairs(dir.path(), [1, 0, 0]);
        pred.cases.truncate(1);
        gt.cases.truncate(1);
        let eval = evaluate_dataset(&pred, &gt, 1.0).unwrap();
        let (_, report) = &eval.per_case[0];
        assert_eq!(eval.aggregate.dsc.mean, report.dsc);
        assert_eq!(eval.aggregate.hd95.max, report.hd95);
        assert_eq!(eval.aggregate.msd.median, report.msd);
    }

    #[test]
    fn unmatched_ids_are_reported_and_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let (mut pred, gt) = write_mask_pairs(dir.path(), [0, 0, 0]);
        pred.cases[0].case_id = "only_in_pred".into();
        let eval = evaluate_dataset(&pred, &gt, 1.0).unwrap();
        assert_eq!(eval.aggregate.cases, 2);
        assert_eq!(eval.unmatched_pred, vec!["only_in_pred".to_string()]);
        assert_eq!(eval.unmatched_gt, vec!["case0".to_string()]);
    }

    #[test]
    fn disjoint_manifests_error() {
        let dir = tempfile::tempdir().unwrap();
        let (mut pred, gt) = write_mask_pairs(dir.path(), [0, 0, 0]);
        for (i, c) in pred.cases.iter_mut().enumerate() {
            c.case_id = format!("other{i}");
        }
        assert!(matches!(
            evaluate_dataset(&pred, &gt, 1.0),
            Err(EvaluateError::NoOverlap)
        ));
    }

    #[test]
    fn csv_round_trip_and_column_select() {
        let dir = tempfile::tempdir().unwrap();
        let (pred, gt) = write_mask_pairs(dir.path(), [1, 0, 0]);
        let eval = evaluate_dataset(&pred, &gt, 1.0).unwrap();
        let csv = eval.to_csv();
        let dscs = parse_metrics_csv(&csv, "dsc").unwrap();
        assert_eq!(dscs.len(), 3);
        for ((id, value), (cid, report)) in dscs.iter().zip(&eval.per_case) {
            assert_eq!(id, cid);
            assert_eq!(*value, report.dsc);
        }
        assert!(parse_metrics_csv(&csv, "nope").is_err());
    }
}
