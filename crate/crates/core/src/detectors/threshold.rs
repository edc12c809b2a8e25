//! Turning scores into anomaly labels.

use serde::{Deserialize, Serialize};

/// Flags the top ⌈contamination·n⌉ scores; equal scores flag the earlier index first.
pub fn score_to_label(scores: &[f64], contamination: f64) -> Vec<bool> {
    let n = scores.len();
    let take = ((contamination * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut flags = vec![false; n];
    for &i in &order[..take] {
        flags[i] = true;
    }
    flags
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Modified z-scores 0.6745·(x − median)/MAD. With a zero MAD, values above
/// the median map to +∞ and the rest to 0.
pub fn robust_z_scores(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = median(&dev);
    values
        .iter()
        .map(|&v| {
            if mad > 0.0 {
                0.6745 * (v - med) / mad
            } else if v > med {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect()
}

/// Alerting rule for live hunts.
///
/// Scores are mapped to robust z-scores on the log scale. Candidates are the
/// samples inside the contamination budget with z at least `z_floor`. Walking
/// the candidates from the top, every sample above the deepest drop of at
/// least `min_gap` to the next lower z is flagged; without such a drop
/// nothing is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HuntThreshold {
    pub contamination: f64,
    pub z_floor: f64,
    pub min_gap: f64,
}

impl Default for HuntThreshold {
    fn default() -> Self {
        Self {
            contamination: 0.05,
            z_floor: 3.0,
            min_gap: 1.0,
        }
    }
}

impl HuntThreshold {
    pub fn apply(&self, scores: &[f64]) -> Vec<bool> {
        let n = scores.len();
        let mut flags = vec![false; n];
        if n == 0 {
            return flags;
        }
        let logs: Vec<f64> = scores.iter().map(|s| s.max(1e-300).ln()).collect();
        let z = robust_z_scores(&logs);
        let budget = score_to_label(scores, self.contamination);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
        let candidates = order
            .iter()
            .take_while(|&&i| z[i] >= self.z_floor)
            .filter(|&&i| budget[i])
            .count();
        let mut cut = None;
        for pos in 0..candidates {
            let below = order.get(pos + 1).map_or(f64::NEG_INFINITY, |&i| z[i]);
            let gap = z[order[pos]] - below;
            if gap.is_nan() {
                continue;
            }
            if gap >= self.min_gap {
                cut = Some(pos);
            }
        }
        if let Some(last) = cut {
            for &i in &order[..=last] {
                flags[i] = true;
            }
        }
        flags
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        if !(self.contamination > 0.0 && self.contamination < 1.0) || !(self.min_gap > 0.0) || !self.z_floor.is_finite() {
            return Err(crate::error::Error::InvalidParameter(
                "hunt threshold needs 0 < contamination < 1, min_gap > 0 and a finite z_floor".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flagged(flags: &[bool]) -> Vec<usize> {
        flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect()
    }

    #[test]
    fn top_two_by_value() {
        assert_eq!(flagged(&score_to_label(&[1.0, 9.0, 2.0, 8.0], 0.5)), vec![1, 3]);
    }

    #[test]
    fn ceiling_rule() {
        let scores: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert_eq!(flagged(&score_to_label(&scores, 0.1)), vec![18, 19]);
        assert_eq!(score_to_label(&scores, 0.11).iter().filter(|&&f| f).count(), 3);
    }

    #[test]
    fn ties_flag_earlier_index() {
        assert_eq!(flagged(&score_to_label(&[3.0; 4], 0.25)), vec![0]);
    }

    #[test]
    fn robust_z_known_values() {
        // median 3, MAD 1
        let z = robust_z_scores(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((z[4] - 2.0 * 0.6745).abs() < 1e-12);
        assert_eq!(z[2], 0.0);
        let flat = robust_z_scores(&[1.0, 1.0, 1.0, 7.0]);
        assert_eq!(flat, vec![0.0, 0.0, 0.0, f64::INFINITY]);
    }

    fn bulk(n: usize) -> Vec<f64> {
        (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.01).collect()
    }

    #[test]
    fn isolated_spikes_are_flagged() {
        let mut scores = bulk(100);
        scores[10] = 1000.0;
        scores[40] = 900.0;
        let t = HuntThreshold::default();
        assert_eq!(flagged(&t.apply(&scores)), vec![10, 40]);
        assert!(flagged(&t.apply(&bulk(100))).is_empty());
    }

    #[test]
    fn cut_sits_at_the_deepest_gap() {
        // z (MAD 1 after scaling) of the top four: 12, 10.5, 7, 6.8, then the bulk.
        let mut logs: Vec<f64> = (0..200).map(|i| ((i % 21) as f64 - 10.0) / 10.0).collect();
        let med_mad = {
            let z = robust_z_scores(&logs);
            logs[20] / z[20]
        };
        for (i, z) in [(0, 12.0), (1, 10.5), (2, 7.0), (3, 6.8)] {
            logs[i] = z * med_mad;
        }
        let scores: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
        assert_eq!(flagged(&HuntThreshold::default().apply(&scores)), vec![0, 1, 2, 3]);
    }

    #[test]
    fn budget_caps_candidates() {
        let mut scores = bulk(100);
        for s in scores.iter_mut().take(10) {
            *s = 1000.0;
        }
        let t = HuntThreshold {
            contamination: 0.05,
            ..HuntThreshold::default()
        };
        assert!(flagged(&t.apply(&scores)).is_empty());
        let wide = HuntThreshold {
            contamination: 0.2,
            ..HuntThreshold::default()
        };
        assert_eq!(flagged(&wide.apply(&scores)), (0..10).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn flag_count_is_ceiling(scores in prop::collection::vec(-1e6f64..1e6, 1..200), c in 0.001f64..0.999) {
            let flags = score_to_label(&scores, c);
            let expected = ((c * scores.len() as f64) - 1e-9).ceil() as usize;
            prop_assert_eq!(flags.iter().filter(|&&f| f).count(), expected);
            let min_flagged = scores.iter().zip(&flags).filter(|(_, &f)| f).map(|(s, _)| *s).fold(f64::INFINITY, f64::min);
            let max_unflagged = scores.iter().zip(&flags).filter(|(_, &f)| !f).map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_flagged >= max_unflagged);
        }
    }
}
