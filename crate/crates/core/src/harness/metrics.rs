use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chartrec::Recommendation;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::paradr::quality::trustworthiness;
use crate::paradr::{centroid, distance, Embedding};

/// One side of a before/after comparison.
pub enum Observed<'a> {
    /// Embedding plus, optionally, the high-dimensional rows it came from.
    Embedding {
        embedding: &'a Embedding,
        high: Option<&'a Tensor>,
    },
    Recommendation(&'a Recommendation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricRecord {
    Embedding {
        /// area(after) / area(before)
        bbox_area_ratio: f64,
        /// Per-label centroid displacement, for labels present on both sides.
        centroid_shifts: BTreeMap<String, f64>,
        /// trustworthiness(after) − trustworthiness(before); both sides need rows.
        trustworthiness_delta: Option<f64>,
    },
    Recommendation {
        top1_flipped: bool,
        /// Spearman correlation of ranks over entries present on both sides.
        rank_correlation: Option<f64>,
        shared_entries: usize,
    },
}

pub const TRUST_K: usize = 10;

fn shifts(before: &Embedding, after: &Embedding) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let (Some(_), Some(_)) = (before.labels(), after.labels()) else {
        return out;
    };
    for label in before.label_set() {
        let a = before.cluster(label);
        let b = after.cluster(label);
        if !a.is_empty() && !b.is_empty() {
            out.insert(label.to_string(), distance(centroid(&a), centroid(&b)));
        }
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

pub fn metrics(before: &Observed<'_>, after: &Observed<'_>) -> Result<MetricRecord> {
    match (before, after) {
        (
            Observed::Embedding {
                embedding: eb,
                high: hb,
            },
            Observed::Embedding {
                embedding: ea,
                high: ha,
            },
        ) => {
            let area_before = eb.bbox().area();
            let bbox_area_ratio = if area_before > 0.0 {
                ea.bbox().area() / area_before
            } else {
                f64::NAN
            };
            let trustworthiness_delta = match (hb, ha) {
                (Some(hb), Some(ha)) => {
                    let k = TRUST_K.min(eb.len().min(ea.len()).saturating_sub(2)).max(1);
                    let tb = trustworthiness(hb, eb.points(), k)?;
                    let ta = trustworthiness(ha, ea.points(), k)?;
                    Some(ta - tb)
                }
                _ => None,
            };
            Ok(MetricRecord::Embedding {
                bbox_area_ratio,
                centroid_shifts: shifts(eb, ea),
                trustworthiness_delta,
            })
        }
        (Observed::Recommendation(rb), Observed::Recommendation(ra)) => {
            let top1_flipped = match (rb.entries.first(), ra.entries.first()) {
                (Some(a), Some(b)) => !a.same_choice(b),
                (None, None) => false,
                _ => true,
            };
            let mut rank_b = Vec::new();
            let mut rank_a = Vec::new();
            for (i, e) in rb.entries.iter().enumerate() {
                if let Some(j) = ra.entries.iter().position(|x| x.same_choice(e)) {
                    rank_b.push(i as f64);
                    rank_a.push(j as f64);
                }
            }
            Ok(MetricRecord::Recommendation {
                top1_flipped,
                shared_entries: rank_b.len(),
                rank_correlation: spearman(&rank_b, &rank_a),
            })
        }
        _ => Err(Error::KindMismatch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartrec::{ChartSpec, ChartType, RecEntry};

    fn entry(cols: &[&str], chart: ChartType) -> RecEntry {
        RecEntry {
            columns: cols.iter().map(|s| s.to_string()).collect(),
            indices: (0..cols.len()).collect(),
            chart,
            set_score: 0.0,
            chart_probability: 1.0,
            score: 0.0,
            spec: ChartSpec {
                mark: chart,
                x: None,
                y: None,
                color: None,
            },
        }
    }

    fn rec(entries: Vec<RecEntry>) -> Recommendation {
        Recommendation {
            table: "t".into(),
            entries,
        }
    }

    #[test]
    fn identical_inputs_have_zero_deltas() {
        let high = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let e = Embedding::from_tensor(&high, Some(vec![0, 0, 1, 1])).unwrap();
        let m = metrics(
            &Observed::Embedding { embedding: &e, high: Some(&high) },
            &Observed::Embedding { embedding: &e, high: Some(&high) },
        )
        .unwrap();
        match m {
            MetricRecord::Embedding {
                bbox_area_ratio,
                centroid_shifts,
                trustworthiness_delta,
            } => {
                assert_eq!(bbox_area_ratio, 1.0);
                assert_eq!(centroid_shifts.len(), 2);
                assert!(centroid_shifts.values().all(|&v| v == 0.0));
                assert_eq!(trustworthiness_delta, Some(0.0));
            }
            _ => panic!("wrong kind"),
        }
        let r = rec(vec![entry(&["a", "b"], ChartType::Scatter), entry(&["a"], ChartType::Area)]);
        let m = metrics(&Observed::Recommendation(&r), &Observed::Recommendation(&r)).unwrap();
        assert_eq!(
            m,
            MetricRecord::Recommendation {
                top1_flipped: false,
                rank_correlation: Some(1.0),
                shared_entries: 2
            }
        );
    }

    #[test]
    fn swapped_ranking_flips() {
        let a = rec(vec![entry(&["a", "b"], ChartType::Scatter), entry(&["a"], ChartType::Area)]);
        let b = rec(vec![entry(&["a"], ChartType::Area), entry(&["b", "a"], ChartType::Scatter)]);
        match metrics(&Observed::Recommendation(&a), &Observed::Recommendation(&b)).unwrap() {
            MetricRecord::Recommendation {
                top1_flipped,
                rank_correlation,
                ..
            } => {
                assert!(top1_flipped);
                assert_eq!(rank_correlation, Some(-1.0));
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn kinds_must_match() {
        let high = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let e = Embedding::from_tensor(&high, None).unwrap();
        let r = rec(vec![]);
        assert!(matches!(
            metrics(&Observed::Embedding { embedding: &e, high: None }, &Observed::Recommendation(&r)),
            Err(Error::KindMismatch)
        ));
    }
}
