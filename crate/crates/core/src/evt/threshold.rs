//! Threshold selection and the coefficient-of-variation exponentiality test.

use serde::{Deserialize, Serialize};

use super::EvtError;

/// Mean of a top-k set at or below this marks a group with no positive tail.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Relative half-width used to spread tied exceedances.
const TIE_SPREAD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub u: f64,
    /// Values strictly above `u`, in descending order.
    pub exceedances: Vec<f64>,
}

impl Threshold {
    pub fn k(&self) -> usize {
        self.exceedances.len()
    }

    pub fn excesses(&self) -> Vec<f64> {
        self.exceedances.iter().map(|x| x - self.u).collect()
    }
}

/// Places `u` at the `(k_max + 1)`-th largest value so that `k_max` values
/// exceed it. When ties at the boundary leave fewer strict exceedances, `u`
/// drops to the largest value that admits at least `k_max` of them.
pub fn select_threshold(values: &[f64], k_max: usize) -> Result<Threshold, EvtError> {
    if k_max < 2 || values.len() <= k_max {
        return Err(EvtError::TooFewSamples {
            needed: k_max.max(2) + 1,
            got: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Walk down from the nominal position to the first value strictly below
    // the k_max-th largest.
    let kth = sorted[k_max - 1];
    let pos = match sorted[k_max..].iter().position(|&v| v < kth) {
        Some(p) => k_max + p,
        None => return Err(EvtError::AllEqual),
    };
    let u = sorted[pos];
    Ok(Threshold {
        u,
        exceedances: sorted[..pos].to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvStep {
    pub k: usize,
    pub cv: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CvOutcome {
    Passed,
    /// Fewer than `k_max` values.
    TooFewSamples,
    /// `CV_k` reached its bound at this `k`.
    Violated { k: usize },
    /// The top-k mean is not positive: there is no upper tail to test.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTest {
    pub outcome: CvOutcome,
    /// One entry per tested k, up to and including the deciding one.
    pub per_k: Vec<CvStep>,
}

impl CvTest {
    pub fn passed(&self) -> bool {
        self.outcome == CvOutcome::Passed
    }

    pub fn degenerate(&self) -> bool {
        self.outcome == CvOutcome::Degenerate
    }
}

/// Bias-corrected bound on the coefficient of variation of the top-k values.
pub fn cv_bound(k: usize) -> f64 {
    1.0 + 1.0 / (4.0 * k as f64)
}

/// Runs the exponentiality test on the top-k values for every k in
/// `k_min..=k_max`.
pub fn cv_test(values: &[f64], k_min: usize, k_max: usize) -> Result<CvTest, EvtError> {
    check_range(k_min, k_max)?;
    let mut top = values.to_vec();
    top.sort_by(|a, b| b.total_cmp(a));
    top.truncate(k_max);
    cv_test_top(&top, values.len(), k_min, k_max)
}

/// As [`cv_test`] given only the largest values in descending order
/// (at least `min(n, k_max)` of them) and the total sample size `n`.
pub fn cv_test_top(
    top_desc: &[f64],
    n: usize,
    k_min: usize,
    k_max: usize,
) -> Result<CvTest, EvtError> {
    check_range(k_min, k_max)?;
    let mut per_k = Vec::new();
    if n < k_max || top_desc.len() < k_max {
        return Ok(CvTest {
            outcome: CvOutcome::TooFewSamples,
            per_k,
        });
    }
    for k in k_min..=k_max {
        let theta = &top_desc[..k];
        let mean = theta.iter().sum::<f64>() / k as f64;
        if mean <= DEGENERACY_TOL {
            return Ok(CvTest {
                outcome: CvOutcome::Degenerate,
                per_k,
            });
        }
        let var = theta.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        let cv = var.sqrt() / mean;
        let bound = cv_bound(k);
        per_k.push(CvStep { k, cv, bound });
        if cv >= bound {
            return Ok(CvTest {
                outcome: CvOutcome::Violated { k },
                per_k,
            });
        }
    }
    Ok(CvTest {
        outcome: CvOutcome::Passed,
        per_k,
    })
}

fn check_range(k_min: usize, k_max: usize) -> Result<(), EvtError> {
    if k_min < 2 || k_min > k_max {
        return Err(EvtError::InvalidArgument(format!(
            "need 2 <= k_min <= k_max, got k_min={k_min}, k_max={k_max}"
        )));
    }
    Ok(())
}

/// Spreads runs of tied values evenly over a small interval around the tied
/// value, keeping every value above `floor` and the order between distinct
/// values. Returns the values in ascending order and whether anything moved.
pub fn break_ties(values: &[f64], floor: f64) -> (Vec<f64>, bool) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let orig = v.clone();
    let mut changed = false;
    let mut i = 0;
    while i < orig.len() {
        let c = orig[i];
        let mut j = i + 1;
        while j < orig.len() && orig[j] == c {
            j += 1;
        }
        let r = j - i;
        if r > 1 {
            let below = if i == 0 { c - floor } else { c - orig[i - 1] };
            let above = if j == orig.len() { f64::INFINITY } else { orig[j] - c };
            let width = (TIE_SPREAD * c.abs().max(1e-12))
                .min(0.5 * below)
                .min(0.5 * above);
            if width > 0.0 {
                for (slot, idx) in (i..j).enumerate() {
                    v[idx] = c + width * ((slot as f64 + 0.5) / r as f64 - 0.5);
                }
                changed = true;
            }
        }
        i = j;
    }
    (v, changed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistic_threshold() {
        let vals: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let t = select_threshold(&vals, 3).unwrap();
        assert_eq!(t.u, 0.7);
        assert_eq!(t.exceedances, vec![1.0, 0.9, 0.8]);
    }

    #[test]
    fn threshold_errors() {
        assert!(matches!(
            select_threshold(&[0.1, 0.2, 0.3], 3),
            Err(EvtError::TooFewSamples { .. })
        ));
        assert!(matches!(select_threshold(&[0.5; 20], 3), Err(EvtError::AllEqual)));
    }

    #[test]
    fn ties_lower_the_threshold() {
        let vals = [0.9, 0.9, 0.9, 0.9, 0.2, 0.1];
        let t = select_threshold(&vals, 3).unwrap();
        assert_eq!(t.u, 0.2);
        assert_eq!(t.k(), 4);
    }

    #[test]
    fn zero_variance_passes() {
        let r = cv_test(&[2.0; 5], 2, 3).unwrap();
        assert!(r.passed());
        assert!(r.per_k.iter().all(|s| s.cv == 0.0));
    }

    #[test]
    fn hand_computed_violation() {
        // top-2 {9, 2}: CV = 4.95 / 5.5 = 0.9 < 1.125; top-3 {9, 2, 1}: sqrt(19)/4
        let r = cv_test(&[1.0, 2.0, 9.0, 0.5], 2, 3).unwrap();
        assert_eq!(r.outcome, CvOutcome::Violated { k: 3 });
        let last = r.per_k.last().unwrap();
        assert!((last.cv - 19f64.sqrt() / 4.0).abs() < 1e-12);
        assert!((last.bound - (1.0 + 1.0 / 12.0)).abs() < 1e-15);
        assert!(last.cv >= last.bound);
    }

    #[test]
    fn size_check() {
        let vals: Vec<f64> = (0..30).map(|i| i as f64 + 1.0).collect();
        assert_eq!(cv_test(&vals, 10, 50).unwrap().outcome, CvOutcome::TooFewSamples);
    }

    #[test]
    fn zero_tail_is_degenerate() {
        assert_eq!(cv_test(&[0.0; 60], 10, 50).unwrap().outcome, CvOutcome::Degenerate);
        assert!(cv_test(&[1.0; 10], 1, 5).is_err());
    }

    #[test]
    fn tie_breaking_keeps_order_and_floor() {
        let (v, changed) = break_ties(&[0.3, 0.3, 0.3, 0.5], 0.01);
        assert!(changed);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!(v.iter().all(|&x| x > 0.01));
        assert!((v[..3].iter().sum::<f64>() / 3.0 - 0.3).abs() < 1e-12);
        let (w, changed) = break_ties(&[0.1, 0.2], 0.0);
        assert!(!changed);
        assert_eq!(w, vec![0.1, 0.2]);
    }
}
