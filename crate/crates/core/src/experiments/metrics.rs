use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// F1 of one class given per-record membership flags. When the class never
/// occurs and is never predicted the score is 1.
fn class_f1(pred: impl Iterator<Item = bool>, truth: impl Iterator<Item = bool>) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (p, t) in pred.zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        1.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Unweighted mean of the F1 scores for presence and for absence.
pub fn macro_f1(decisions: &[bool], labels: &[bool]) -> f64 {
    assert_eq!(decisions.len(), labels.len(), "decision/label length mismatch");
    let pos = class_f1(decisions.iter().copied(), labels.iter().copied());
    let neg = class_f1(decisions.iter().map(|d| !d), labels.iter().map(|l| !l));
    0.5 * (pos + neg)
}

/// Unweighted mean over targets.
pub fn overall_f1(per_target: &[f64]) -> f64 {
    assert!(!per_target.is_empty(), "overall F1 needs at least one target");
    per_target.iter().sum::<f64>() / per_target.len() as f64
}

/// Per-record, per-target probabilities with their true labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub targets: Vec<String>,
    pub record_ids: Vec<String>,
    /// `probabilities[record][target]`
    pub probabilities: Vec<Vec<f64>>,
    /// `labels[record][target]`
    pub labels: Vec<Vec<bool>>,
    pub threshold: f64,
}

impl PredictionSet {
    pub fn new(targets: Vec<String>, threshold: f64) -> Self {
        PredictionSet {
            targets,
            record_ids: Vec::new(),
            probabilities: Vec::new(),
            labels: Vec::new(),
            threshold,
        }
    }

    pub fn push(&mut self, record_id: String, probabilities: Vec<f64>, labels: Vec<bool>) {
        debug_assert_eq!(probabilities.len(), self.targets.len());
        self.record_ids.push(record_id);
        self.probabilities.push(probabilities);
        self.labels.push(labels);
    }

    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }

    fn target_index(&self, target: &str) -> Result<usize> {
        self.targets
            .iter()
            .position(|t| t == target)
            .ok_or_else(|| Error::MissingDecoder(target.to_string()))
    }

    pub fn decisions(&self, target: &str) -> Result<Vec<bool>> {
        let t = self.target_index(target)?;
        Ok(self
            .probabilities
            .iter()
            .map(|p| p[t] >= self.threshold)
            .collect())
    }

    pub fn truth(&self, target: &str) -> Result<Vec<bool>> {
        let t = self.target_index(target)?;
        Ok(self.labels.iter().map(|l| l[t]).collect())
    }

    pub fn macro_f1(&self, target: &str) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyDataset("no predictions to score".into()));
        }
        Ok(macro_f1(&self.decisions(target)?, &self.truth(target)?))
    }

    pub fn per_target_f1(&self) -> Result<Vec<f64>> {
        self.targets.iter().map(|t| self.macro_f1(t)).collect()
    }

    pub fn overall_f1(&self) -> Result<f64> {
        Ok(overall_f1(&self.per_target_f1()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bools(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn perfect_is_one() {
        let l = bools(&[1, 0, 0, 1, 1]);
        assert_eq!(macro_f1(&l, &l), 1.0);
        let all_neg = bools(&[0, 0, 0]);
        assert_eq!(macro_f1(&all_neg, &all_neg), 1.0);
    }

    #[test]
    fn hand_computed_cases() {
        assert_eq!(macro_f1(&bools(&[1, 0, 1, 0]), &bools(&[1, 1, 0, 0])), 0.5);
        assert_eq!(macro_f1(&bools(&[0, 0]), &bools(&[1, 1])), 0.0);
    }

    #[test]
    fn overall_is_plain_mean() {
        assert_eq!(overall_f1(&[1.0, 1.0]), 1.0);
        assert_eq!(overall_f1(&[0.4, 0.6]), 0.5);
        let eight = [0.91, 0.72, 0.65, 0.88, 0.5, 0.97, 0.61, 0.8];
        // 6.04 / 8
        assert!((overall_f1(&eight) - 0.755).abs() < 1e-12);
    }

    #[test]
    fn prediction_set_thresholds_at_half() {
        let mut p = PredictionSet::new(vec!["a".into()], 0.5);
        p.push("1".into(), vec![0.5], vec![true]);
        p.push("2".into(), vec![0.49], vec![false]);
        assert_eq!(p.decisions("a").unwrap(), vec![true, false]);
        assert_eq!(p.overall_f1().unwrap(), 1.0);
        assert!(p.macro_f1("b").is_err());
    }
}
