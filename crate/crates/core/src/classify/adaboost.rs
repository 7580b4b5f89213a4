//! Multi-class AdaBoost (SAMME) with Gaussian naive Bayes base learners
//! trained on weight-proportional resamples.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::naive_bayes::{softmax, GaussianNb};
use super::TrainingSet;
use crate::error::Result;
use crate::rng::{self, Rng};

/// Learner weight used when a round reaches zero training error.
const PERFECT_ERROR: f64 = 1e-10;
/// Resample attempts for a round whose learner is no better than chance.
const RESAMPLE_ATTEMPTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedNb {
    pub class_count: usize,
    /// Classes seen in training; the distribution is spread over these.
    pub present: Vec<bool>,
    pub learners: Vec<(GaussianNb, f64)>,
    /// Weighted ensemble training error after each accepted round.
    pub error_history: Vec<f64>,
}

/// Indices drawn with replacement, probability proportional to `weights`.
pub(crate) fn weighted_resample(weights: &[f64], count: usize, rng: &mut Rng) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cumulative.push(acc);
    }
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cumulative.partition_point(|&c| c <= u).min(weights.len() - 1)
        })
        .collect()
}

fn weighted_error(preds: &[usize], labels: &[usize], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let wrong: f64 = preds
        .iter()
        .zip(labels)
        .zip(w)
        .filter(|((p, y), _)| p != y)
        .map(|(_, w)| w)
        .sum();
    wrong / total
}

pub fn train_adaboost_nb(train: &TrainingSet, rounds: usize, seed: u64) -> Result<BoostedNb> {
    train.validate()?;
    let n = train.len();
    let m = train.class_count;
    let present = train.present_classes();
    let k = present.iter().filter(|&&p| p).count();
    let mut rng = rng::stream(seed, 0x626f_6f73);
    let total: f64 = train.weights.iter().sum();
    let mut w: Vec<f64> = train.weights.iter().map(|v| v / total).collect();
    let mut learners: Vec<(GaussianNb, f64)> = Vec::new();
    let mut error_history = Vec::new();
    let mut votes = vec![vec![0.0; m]; n];

    if k < 2 {
        let nb = GaussianNb::fit(&train.rows, &train.labels, Some(&train.weights), m)?;
        return Ok(BoostedNb {
            class_count: m,
            present,
            learners: vec![(nb, 1.0)],
            error_history: vec![0.0],
        });
    }
    let chance = 1.0 - 1.0 / k as f64;

    for _ in 0..rounds.max(1) {
        let mut accepted = None;
        for _ in 0..RESAMPLE_ATTEMPTS {
            let idx = weighted_resample(&w, n, &mut rng);
            let x: Vec<Vec<f64>> = idx.iter().map(|&i| train.rows[i].clone()).collect();
            let y: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let nb = GaussianNb::fit(&x, &y, None, m)?;
            let preds: Vec<usize> = train.rows.iter().map(|r| nb.predict(r)).collect();
            let err = weighted_error(&preds, &train.labels, &w);
            if err < chance {
                accepted = Some((nb, preds, err));
                break;
            }
        }
        let Some((nb, preds, err)) = accepted else {
            break;
        };
        let e = err.max(PERFECT_ERROR);
        let alpha = ((1.0 - e) / e).ln() + ((k - 1) as f64).ln();
        for (i, &p) in preds.iter().enumerate() {
            votes[i][p] += alpha;
        }
        learners.push((nb, alpha));
        let ens_preds: Vec<usize> = votes.iter().map(|v| crate::stats::argmax(v)).collect();
        error_history.push(weighted_error(&ens_preds, &train.labels, &train.weights));
        if err == 0.0 {
            break;
        }
        for (i, &p) in preds.iter().enumerate() {
            if p != train.labels[i] {
                w[i] *= alpha.exp();
            }
        }
        let s: f64 = w.iter().sum();
        for v in &mut w {
            *v /= s;
        }
    }

    if learners.is_empty() {
        log::warn!("every boosting round was no better than chance; using a single naive Bayes model");
        let nb = GaussianNb::fit(&train.rows, &train.labels, Some(&train.weights), m)?;
        let preds: Vec<usize> = train.rows.iter().map(|r| nb.predict(r)).collect();
        error_history.push(weighted_error(&preds, &train.labels, &train.weights));
        learners.push((nb, 1.0));
    }
    Ok(BoostedNb {
        class_count: m,
        present,
        learners,
        error_history,
    })
}

impl BoostedNb {
    /// Normalized weighted vote per class.
    pub fn votes(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.class_count];
        let total: f64 = self.learners.iter().map(|(_, a)| a).sum();
        for (nb, a) in &self.learners {
            v[nb.predict(x)] += a / total;
        }
        v
    }

    /// Softmax over present classes of `(K - 1)` times the normalized vote.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let k = self.present.iter().filter(|&&p| p).count();
        let v = self.votes(x);
        let scale = (k.max(2) - 1) as f64;
        let logits: Vec<f64> = v
            .iter()
            .zip(&self.present)
            .map(|(s, &p)| if p { scale * s } else { f64::NEG_INFINITY })
            .collect();
        if k == 1 {
            return self.present.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
        }
        softmax(&logits)
    }

    pub fn dim(&self) -> usize {
        self.learners.first().map_or(0, |(nb, _)| nb.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n_per: usize, centers: &[f64], spread: f64, seed: u64) -> TrainingSet {
        let mut rng = rng::stream(seed, 1);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &mu) in centers.iter().enumerate() {
            for _ in 0..n_per {
                rows.push(vec![
                    mu + spread * (rng.random::<f64>() - 0.5),
                    -mu + spread * (rng.random::<f64>() - 0.5),
                ]);
                labels.push(c);
            }
        }
        TrainingSet::new(rows, labels, centers.len()).unwrap()
    }

    #[test]
    fn separable_data_stops_early() {
        let t = blobs(20, &[0.0, 10.0], 1.0, 1);
        let b = train_adaboost_nb(&t, 10, 3).unwrap();
        assert_eq!(b.learners.len(), 1);
        assert_eq!(b.error_history, vec![0.0]);
        let p = b.predict_proba(&[10.0, -10.0]);
        assert!(p[1] > p[0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let t = blobs(15, &[0.0, 1.0, 2.0], 2.0, 2);
        assert_eq!(train_adaboost_nb(&t, 8, 5).unwrap(), train_adaboost_nb(&t, 8, 5).unwrap());
    }

    #[test]
    fn single_class_is_indicator() {
        let t = TrainingSet::new(vec![vec![1.0], vec![2.0], vec![1.5]], vec![2, 2, 2], 4).unwrap();
        let b = train_adaboost_nb(&t, 5, 0).unwrap();
        assert_eq!(b.predict_proba(&[100.0]), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn distribution_covers_present_classes_only() {
        let t = blobs(10, &[0.0, 3.0, 6.0], 2.5, 4);
        let mut labels = t.labels.clone();
        for l in &mut labels {
            *l *= 2;
        }
        let t = TrainingSet::new(t.rows.clone(), labels, 6).unwrap();
        let b = train_adaboost_nb(&t, 10, 1).unwrap();
        let p = b.predict_proba(&[3.0, -3.0]);
        assert_eq!((p[1], p[3], p[5]), (0.0, 0.0, 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    #[ignore = "SAMME training error rises in some rounds on overlapping classes"]
    fn ensemble_error_does_not_grow_on_overlapping_blobs() {
        let t = blobs(40, &[0.0, 1.5, 3.0, 4.5], 3.0, 6);
        let b = train_adaboost_nb(&t, 20, 2).unwrap();
        assert!(b.error_history.len() > 1);
        for w in b.error_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", b.error_history);
        }
    }

    #[test]
    fn resample_follows_weights() {
        let mut rng = rng::stream(9, 9);
        let idx = weighted_resample(&[0.0, 1.0, 0.0, 3.0], 4000, &mut rng);
        assert!(idx.iter().all(|&i| i == 1 || i == 3));
        let threes = idx.iter().filter(|&&i| i == 3).count() as f64 / 4000.0;
        assert!((threes - 0.75).abs() < 0.03);
    }
}
