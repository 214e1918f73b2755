//! Student-t confidence intervals and paired t-tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn t_dist(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("degrees of freedom are positive")
}

/// Mean with a two-sided Student-t interval at `level` (e.g. 0.95).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn mean_ci(scores: &[f64], level: f64) -> Result<MeanCi> {
    if scores.len() < 2 {
        return Err(Error::Contract(format!(
            "a confidence interval needs at least 2 scores, got {}",
            scores.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0, 1)")));
    }
    let n = scores.len() as f64;
    let m = mean(scores);
    let se = (sample_variance(scores) / n).sqrt();
    if se == 0.0 {
        return Ok(MeanCi { mean: m, lo: m, hi: m });
    }
    let q = t_dist(n - 1.0).inverse_cdf(0.5 + level / 2.0);
    Ok(MeanCi {
        mean: m,
        lo: m - q * se,
        hi: m + q * se,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestMode {
    /// Ordinary paired t-test over all score pairs.
    #[default]
    Paired,
    /// Variance-corrected 5x2cv test: needs exactly 10 pairs ordered as
    /// (repetition 1 fold 1, repetition 1 fold 2, repetition 2 fold 1, ...).
    FiveByTwo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub df: f64,
    /// Set when the differences have zero variance; `t` is then 0 and `p` 1.
    pub degenerate: bool,
}

impl TTest {
    pub fn significant(&self, alpha: f64) -> bool {
        !self.degenerate && self.p < alpha
    }
}

fn two_sided(t: f64, df: f64) -> f64 {
    let p = 2.0 * t_dist(df).cdf(-t.abs());
    p.min(1.0)
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Contract(format!(
            "paired t-test needs two equal-length samples of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let var = sample_variance(&d);
    let df = n - 1.0;
    if var == 0.0 {
        return Ok(TTest {
            t: 0.0,
            p: 1.0,
            df,
            degenerate: true,
        });
    }
    let t = mean(&d) / (var / n).sqrt();
    Ok(TTest {
        t,
        p: two_sided(t, df),
        df,
        degenerate: false,
    })
}

/// Dietterich's 5x2cv paired t-test.
pub fn five_by_two_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != 10 || b.len() != 10 {
        return Err(Error::Contract("the 5x2cv test needs exactly 10 score pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s2: f64 = d
        .chunks_exact(2)
        .map(|pair| {
            let m = 0.5 * (pair[0] + pair[1]);
            (pair[0] - m).powi(2) + (pair[1] - m).powi(2)
        })
        .sum();
    let df = 5.0;
    if s2 == 0.0 {
        return Ok(TTest {
            t: 0.0,
            p: 1.0,
            df,
            degenerate: true,
        });
    }
    let t = d[0] / (s2 / 5.0).sqrt();
    Ok(TTest {
        t,
        p: two_sided(t, df),
        df,
        degenerate: false,
    })
}

pub fn t_test(a: &[f64], b: &[f64], mode: TTestMode) -> Result<TTest> {
    match mode {
        TTestMode::Paired => paired_t_test(a, b),
        TTestMode::FiveByTwo => five_by_two_t_test(a, b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from scipy.stats (ttest_rel, t.ppf, sem).
    const A: [f64; 10] = [0.81, 0.79, 0.85, 0.88, 0.77, 0.83, 0.80, 0.86, 0.84, 0.82];
    const B: [f64; 10] = [0.78, 0.80, 0.79, 0.84, 0.75, 0.80, 0.79, 0.81, 0.83, 0.78];

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn paired_matches_reference() {
        let r = paired_t_test(&A, &B).unwrap();
        close(r.t, 4.221158824088692);
        close(r.p, 0.0022356179572671723);
        let s = paired_t_test(&B, &A).unwrap();
        close(s.t, -r.t);
        close(s.p, r.p);
    }

    #[test]
    fn five_by_two_matches_reference() {
        let r = five_by_two_t_test(&A, &B).unwrap();
        close(r.t, 1.3987572123604741);
        close(r.p, 0.22075396111701368);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let r = paired_t_test(&A, &A).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p, 1.0);
        assert!(!r.significant(0.05));
    }

    #[test]
    fn ci_matches_reference() {
        let c = mean_ci(&[0.8, 0.9], 0.95).unwrap();
        close(c.lo, 0.2146897631783955);
        close(c.hi, 1.4853102368216047);
        let c = mean_ci(&[0.71, 0.74, 0.69, 0.77, 0.72], 0.95).unwrap();
        close(c.mean, 0.726);
        close(c.lo, 0.6881343371836054);
        close(c.hi, 0.7638656628163946);
    }

    #[test]
    fn ci_edge_cases() {
        let c = mean_ci(&[0.5, 0.5, 0.5], 0.95).unwrap();
        assert_eq!((c.lo, c.hi), (0.5, 0.5));
        assert!(mean_ci(&[0.5], 0.95).is_err());
        let narrow = mean_ci(&[0.5, 0.6, 0.55], 0.95).unwrap();
        let wide = mean_ci(&[0.3, 0.8, 0.55], 0.95).unwrap();
        assert!(wide.hi - wide.lo > narrow.hi - narrow.lo);
    }
}
