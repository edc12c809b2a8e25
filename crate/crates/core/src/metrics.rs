//! Confusion-matrix metrics and ROC/AUC with the anomalous class as positive.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(truth: &[bool], predicted: &[bool]) -> Result<Confusion> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    let mut c = Confusion::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Which recall formula to report. The printed evaluation formula for
/// recall repeats the precision denominator; `AsPrinted` reproduces that.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallConvention {
    /// TP / (TP + FN)
    #[default]
    Standard,
    /// TP / (TP + FP)
    AsPrinted,
}

/// A metric whose denominator was zero is reported as 0 and listed here.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degenerate {
    pub accuracy: bool,
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.accuracy || self.precision || self.recall || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: Degenerate,
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn scalar_metrics(c: &Confusion, recall: RecallConvention) -> ScalarMetrics {
    let mut deg = Degenerate::default();
    let accuracy = ratio(c.tp + c.tn, c.total(), &mut deg.accuracy);
    let precision = ratio(c.tp, c.tp + c.fp, &mut deg.precision);
    let recall_den = match recall {
        RecallConvention::Standard => c.tp + c.fn_,
        RecallConvention::AsPrinted => c.tp + c.fp,
    };
    let recall = ratio(c.tp, recall_den, &mut deg.recall);
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fn_ + c.fp, &mut deg.f1);
    ScalarMetrics {
        accuracy,
        precision,
        recall,
        f1,
        degenerate: deg,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Score at or above which samples are flagged; `None` for the origin.
    pub threshold: Option<f64>,
}

/// ROC curve over distinct score thresholds (descending) and trapezoidal AUC.
///
/// Equal scores form one step, so a tie between a positive and a negative
/// contributes half a unit of area.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<(Vec<RocPoint>, f64)> {
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: scores.len(),
        });
    }
    let positives = truth.iter().filter(|&&t| t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: None,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == threshold {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // trapezoid in integer units, normalized once at the end
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push(RocPoint {
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
            threshold: Some(threshold),
        });
    }
    Ok((points, auc / (p * n)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: Degenerate,
    pub recall_convention: RecallConvention,
    pub auc: f64,
    pub roc_points: Vec<RocPoint>,
}

impl MetricsReport {
    pub fn build(
        scores: &[f64],
        truth: &[bool],
        predicted: &[bool],
        recall: RecallConvention,
    ) -> Result<Self> {
        let confusion = confusion(truth, predicted)?;
        let s = scalar_metrics(&confusion, recall);
        let (roc_points, auc) = roc_auc(scores, truth)?;
        Ok(Self {
            confusion,
            accuracy: s.accuracy,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            degenerate: s.degenerate,
            recall_convention: recall,
            auc,
            roc_points,
        })
    }

    pub const CSV_HEADER: &'static str = "model,tp,tn,fp,fn,accuracy,precision,recall,f1,auc";

    pub fn csv_row(&self, model: &str) -> String {
        let c = &self.confusion;
        format!(
            "{model},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            c.tp, c.tn, c.fp, c.fn_, self.accuracy, self.precision, self.recall, self.f1, self.auc
        )
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    /// ROC points as `fpr,tpr,threshold` (empty threshold at the origin).
    pub fn write_roc_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "fpr,tpr,threshold")?;
        for p in &self.roc_points {
            match p.threshold {
                Some(t) => writeln!(f, "{},{},{}", p.fpr, p.tpr, t)?,
                None => writeln!(f, "{},{},", p.fpr, p.tpr)?,
            }
        }
        Ok(())
    }
}

/// Writes `(model, report)` rows under [`MetricsReport::CSV_HEADER`].
pub fn write_metrics_csv(path: &Path, rows: &[(String, MetricsReport)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", MetricsReport::CSV_HEADER)?;
    for (name, r) in rows {
        writeln!(f, "{}", r.csv_row(name))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn hand_counted_confusion() {
        let c = confusion(&b(&[1, 1, 0, 0, 1]), &b(&[1, 0, 0, 1, 1])).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (2, 1, 1, 1));
        let perfect = confusion(&b(&[1, 0, 1]), &b(&[1, 0, 1])).unwrap();
        assert_eq!((perfect.fp, perfect.fn_), (0, 0));
        assert_eq!(confusion(&[], &[]).unwrap(), Confusion::default());
        assert!(confusion(&b(&[1]), &[]).is_err());
    }

    #[test]
    fn scalar_arithmetic() {
        let c = Confusion {
            tp: 3,
            tn: 5,
            fp: 1,
            fn_: 1,
        };
        let m = scalar_metrics(&c, RecallConvention::Standard);
        assert!((m.accuracy - 0.8).abs() < 1e-15);
        assert!((m.precision - 0.75).abs() < 1e-15);
        assert!((m.recall - 0.75).abs() < 1e-15);
        assert!((m.f1 - 0.75).abs() < 1e-15);
        assert!(!m.degenerate.any());
    }

    #[test]
    fn printed_recall_matches_precision() {
        let c = Confusion {
            tp: 3,
            tn: 5,
            fp: 2,
            fn_: 1,
        };
        let m = scalar_metrics(&c, RecallConvention::AsPrinted);
        assert_eq!(m.recall, m.precision);
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let c = Confusion {
            tp: 0,
            tn: 4,
            fp: 0,
            fn_: 2,
        };
        let m = scalar_metrics(&c, RecallConvention::Standard);
        assert_eq!(m.precision, 0.0);
        assert!(m.degenerate.precision);
        assert!(!m.degenerate.recall);
    }

    #[test]
    fn roc_examples() {
        let (_, auc) = roc_auc(&[0.9, 0.8, 0.7, 0.6], &b(&[1, 0, 1, 0])).unwrap();
        assert!((auc - 0.75).abs() < 1e-15);
        let (_, perfect) = roc_auc(&[3.0, 2.0, 1.0], &b(&[1, 1, 0])).unwrap();
        assert_eq!(perfect, 1.0);
        let (pts, tied) = roc_auc(&[1.0; 4], &b(&[1, 0, 0, 1])).unwrap();
        assert_eq!(tied, 0.5);
        assert_eq!(pts.len(), 2);
        assert!(matches!(roc_auc(&[1.0, 2.0], &b(&[1, 1])), Err(Error::SingleClass)));
    }

    #[test]
    fn roc_endpoints_and_monotone() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.2];
        let (pts, _) = roc_auc(&scores, &b(&[0, 1, 0, 1, 0, 1])).unwrap();
        assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in pts.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
            (2usize..60).prop_flat_map(|n| {
                (
                    prop::collection::vec(0u8..12, n).prop_map(|v| {
                        v.into_iter().map(f64::from).collect::<Vec<_>>()
                    }),
                    prop::collection::vec(any::<bool>(), n),
                )
            })
            .prop_filter("both classes", |(_, t)| t.iter().any(|&x| x) && t.iter().any(|&x| !x))
        }

        proptest! {
            #[test]
            fn auc_is_rank_invariant((scores, truth) in instance()) {
                let (_, a) = roc_auc(&scores, &truth).unwrap();
                let mapped: Vec<f64> = scores.iter().map(|s| (s * 0.3).exp() + 5.0).collect();
                let (_, m) = roc_auc(&mapped, &truth).unwrap();
                prop_assert!((a - m).abs() < 1e-12);
            }

            #[test]
            fn negated_scores_complement((scores, truth) in instance()) {
                let (_, a) = roc_auc(&scores, &truth).unwrap();
                let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
                let (_, b) = roc_auc(&neg, &truth).unwrap();
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }
    }
}
