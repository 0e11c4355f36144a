use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_io::Sample;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::par;

use super::{binarize, boundary_errors, longest_axis, region_metrics, BinaryMask};

/// The seven per-image metrics plus stratification data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub ji: f64,
    pub dsc: f64,
    pub aer: f64,
    pub he: f64,
    pub mae: f64,
    pub longest_axis: f64,
    pub is_small: bool,
    /// Prediction was empty; `he` and `mae` hold the image diagonal.
    pub empty_prediction: bool,
}

/// Metrics of prediction `pred` against ground truth `truth`. Small tumours
/// have a ground-truth longest axis of at most `small_axis` pixels.
pub fn image_metrics(pred: &BinaryMask, truth: &BinaryMask, small_axis: f64) -> Result<ImageMetrics> {
    let r = region_metrics(pred, truth)?;
    let axis = longest_axis(truth)?;
    let (he, mae, empty_prediction) = if pred.is_empty() {
        let diag = ((pred.width().pow(2) + pred.height().pow(2)) as f64).sqrt();
        (diag, diag, true)
    } else {
        let b = boundary_errors(pred, truth)?;
        (b.he, b.mae, false)
    };
    Ok(ImageMetrics {
        tpr: r.tpr,
        fpr: r.fpr,
        ji: r.ji,
        dsc: r.dsc,
        aer: r.aer,
        he,
        mae,
        longest_axis: axis,
        is_small: axis <= small_axis,
        empty_prediction,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub id: String,
    #[serde(flatten)]
    pub metrics: ImageMetrics,
}

/// Arithmetic means over a stratum; columns use the usual table names.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    #[serde(rename = "TPR")]
    pub tpr: f64,
    #[serde(rename = "FPR")]
    pub fpr: f64,
    #[serde(rename = "JI")]
    pub ji: f64,
    #[serde(rename = "DSC")]
    pub dsc: f64,
    #[serde(rename = "AER")]
    pub aer: f64,
    #[serde(rename = "AHE")]
    pub ahe: f64,
    #[serde(rename = "AME")]
    pub ame: f64,
}

impl Aggregate {
    /// Means in iteration order; `None` for an empty stratum.
    pub fn mean<'a>(rows: impl IntoIterator<Item = &'a ImageMetrics>) -> Option<Aggregate> {
        let mut a = Aggregate { count: 0, tpr: 0.0, fpr: 0.0, ji: 0.0, dsc: 0.0, aer: 0.0, ahe: 0.0, ame: 0.0 };
        for m in rows {
            a.count += 1;
            a.tpr += m.tpr;
            a.fpr += m.fpr;
            a.ji += m.ji;
            a.dsc += m.dsc;
            a.aer += m.aer;
            a.ahe += m.he;
            a.ame += m.mae;
        }
        if a.count == 0 {
            return None;
        }
        let n = a.count as f64;
        for v in [&mut a.tpr, &mut a.fpr, &mut a.ji, &mut a.dsc, &mut a.aer, &mut a.ahe, &mut a.ame] {
            *v /= n;
        }
        Some(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub threshold: f64,
    pub small_axis: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { threshold: 0.5, small_axis: 120.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Model and run configuration the report was produced with.
    pub provenance: BTreeMap<String, String>,
    pub threshold: f64,
    pub small_axis: f64,
    pub rows: Vec<ImageRow>,
    /// Ids skipped because their ground truth was empty.
    pub excluded: Vec<String>,
    pub all: Option<Aggregate>,
    pub small: Option<Aggregate>,
    pub non_small: Option<Aggregate>,
}

pub const CSV_HEADER: &str = "id,TPR,FPR,JI,DSC,AER,AHE,AME,longest_axis,is_small";

impl MetricsReport {
    pub fn from_rows(rows: Vec<ImageRow>, excluded: Vec<String>, opts: EvalOptions) -> Self {
        let all = Aggregate::mean(rows.iter().map(|r| &r.metrics));
        let small = Aggregate::mean(rows.iter().filter(|r| r.metrics.is_small).map(|r| &r.metrics));
        let non_small = Aggregate::mean(rows.iter().filter(|r| !r.metrics.is_small).map(|r| &r.metrics));
        MetricsReport {
            provenance: BTreeMap::new(),
            threshold: opts.threshold,
            small_axis: opts.small_axis,
            rows,
            excluded,
            all,
            small,
            non_small,
        }
    }

    pub fn small_ids(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| r.metrics.is_small).map(|r| r.id.as_str()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.id, m.tpr, m.fpr, m.ji, m.dsc, m.aer, m.he, m.mae, m.longest_axis, m.is_small
            );
        }
        out
    }

    /// Plain-text table of the three strata.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<22} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7} {:>8} {:>8}\n",
            "stratum", "n", "TPR", "FPR", "JI", "DSC", "AER", "AHE", "AME"
        );
        let small_label = format!("small (<= {} px)", self.small_axis);
        for (label, agg) in [("all", &self.all), (small_label.as_str(), &self.small), ("non-small", &self.non_small)] {
            match agg {
                Some(a) => {
                    let _ = writeln!(
                        out,
                        "{label:<22} {:>5} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>8.2} {:>8.2}",
                        a.count, a.tpr, a.fpr, a.ji, a.dsc, a.aer, a.ahe, a.ame
                    );
                }
                None => {
                    let _ = writeln!(out, "{label:<22} {:>5}", 0);
                }
            }
        }
        out
    }

    /// Writes `<path>` as JSON and the same path with a `.csv` extension.
    pub fn write(&self, json_path: impl AsRef<Path>) -> Result<()> {
        let json_path = json_path.as_ref();
        fs::write(json_path, self.to_json()?).map_err(|e| Error::io(json_path, e))?;
        let csv_path = json_path.with_extension("csv");
        fs::write(&csv_path, self.to_csv()).map_err(|e| Error::io(&csv_path, e))
    }
}

/// Evaluates `(id, prediction, ground truth)` triples. Samples with empty
/// ground truth are excluded and listed.
pub fn evaluate_masks(items: &[(String, BinaryMask, BinaryMask)], opts: EvalOptions) -> Result<MetricsReport> {
    let results = par::map_slice(items, |(_, pred, truth)| image_metrics(pred, truth, opts.small_axis));
    let mut rows = Vec::with_capacity(items.len());
    let mut excluded = Vec::new();
    for ((id, _, _), res) in items.iter().zip(results) {
        match res {
            Ok(metrics) => rows.push(ImageRow { id: id.clone(), metrics }),
            Err(Error::EmptyGroundTruth) => excluded.push(id.clone()),
            Err(e) => return Err(e),
        }
    }
    Ok(MetricsReport::from_rows(rows, excluded, opts))
}

/// Forward, binarize and score every sample.
pub fn evaluate(model: &Model, samples: &[Sample], opts: EvalOptions) -> Result<MetricsReport> {
    let preds = par::map_slice(samples, |s| -> Result<BinaryMask> {
        let p = model.forward(&s.image.to_tensor())?;
        binarize(p.data(), s.image.width, s.image.height, opts.threshold)
    });
    let items = samples
        .iter()
        .zip(preds)
        .map(|(s, p)| Ok((s.id.clone(), p?, s.mask.clone())))
        .collect::<Result<Vec<_>>>()?;
    let mut report = evaluate_masks(&items, opts)?;
    let cfg = model.config();
    report.provenance.insert("arch".into(), cfg.arch.to_string());
    report.provenance.insert("input_size".into(), cfg.input_size.to_string());
    report.provenance.insert("base_filters".into(), cfg.base_filters.to_string());
    report.provenance.insert("seed".into(), cfg.seed.to_string());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(size: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(size, size, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
    }

    #[test]
    fn perfect_predictions_aggregate_to_ideal_row() {
        let items: Vec<_> = (0..3)
            .map(|i| {
                let m = disc(32, 10.0 + i as f64, 15.0, 4.0 + i as f64);
                (format!("s{i}"), m.clone(), m)
            })
            .collect();
        let r = evaluate_masks(&items, EvalOptions::default()).unwrap();
        let a = r.all.unwrap();
        assert_eq!((a.tpr, a.fpr, a.ji, a.dsc, a.aer, a.ahe, a.ame), (1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn strata_partition_by_axis() {
        // Horizontal bars with longest axes 100 and 130.
        let bar = |len: usize| BinaryMask::from_fn(160, 3, move |x, y| y == 1 && x < len);
        let items = vec![
            ("short".to_string(), bar(101), bar(101)),
            ("long".to_string(), bar(131), bar(131)),
        ];
        let r = evaluate_masks(&items, EvalOptions::default()).unwrap();
        assert_eq!(r.small.unwrap().count, 1);
        assert_eq!(r.non_small.unwrap().count, 1);
        assert_eq!(r.small_ids(), ["short"]);
    }

    #[test]
    fn empty_truth_is_excluded_and_empty_prediction_flagged() {
        let g = disc(16, 8.0, 8.0, 3.0);
        let items = vec![
            ("blank".to_string(), g.clone(), BinaryMask::empty(16, 16)),
            ("miss".to_string(), BinaryMask::empty(16, 16), g),
        ];
        let r = evaluate_masks(&items, EvalOptions::default()).unwrap();
        assert_eq!(r.excluded, ["blank"]);
        assert_eq!(r.rows.len(), 1);
        let m = r.rows[0].metrics;
        assert!(m.empty_prediction);
        assert_eq!(m.he, (512f64).sqrt());
        assert_eq!((m.tpr, m.fpr, m.aer), (0.0, 0.0, 1.0));
    }

    #[test]
    fn csv_has_one_row_per_image() {
        let m = disc(16, 8.0, 8.0, 3.0);
        let r = evaluate_masks(&[("a".into(), m.clone(), m)], EvalOptions::default()).unwrap();
        let csv = r.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("a,1,0,1,1,0,0,0,"));
    }
}
