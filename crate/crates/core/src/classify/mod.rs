//! Per-segment interval classifiers and the combined probability model.

pub mod adaboost;
pub mod forest;
pub mod naive_bayes;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_vector, FeatureConfig};
use crate::model::{EnuSample, Segment};
use crate::rng;
pub use adaboost::{train_adaboost_nb, BoostedNb};
pub use forest::{train_random_forest, ForestConfig, RandomForest};

pub const ENSEMBLE_SCHEMA: u32 = 1;
const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Per-row sample weight, all 1.0 unless set.
    pub weights: Vec<f64>,
    pub class_count: usize,
}

impl TrainingSet {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let weights = vec![1.0; rows.len()];
        Self::with_weights(rows, labels, weights, class_count)
    }

    pub fn with_weights(
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        weights: Vec<f64>,
        class_count: usize,
    ) -> Result<Self> {
        let t = TrainingSet {
            rows,
            labels,
            weights,
            class_count,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Validation("empty training set".into()));
        }
        if self.labels.len() != self.rows.len() || self.weights.len() != self.rows.len() {
            return Err(Error::Validation("rows, labels and weights differ in length".into()));
        }
        let dim = self.rows[0].len();
        if dim == 0 {
            return Err(Error::Validation("zero-dimensional rows".into()));
        }
        if let Some(r) = self.rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        if self.rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::Validation("weights must be positive".into()));
        }
        let mut counts = vec![0usize; self.class_count];
        for &l in &self.labels {
            if l >= self.class_count {
                return Err(Error::Validation(format!(
                    "label {l} out of range for {} classes",
                    self.class_count
                )));
            }
            counts[l] += 1;
        }
        if let Some(c) = counts.iter().position(|&c| c == 1) {
            return Err(Error::Validation(format!("class {c} has a single row")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn present_classes(&self) -> Vec<bool> {
        let mut p = vec![false; self.class_count];
        for &l in &self.labels {
            p[l] = true;
        }
        p
    }
}

/// `rows[i][j]`: probability that segment `i` is interval `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    pub rows: Vec<Vec<f64>>,
}

impl ProbabilityMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = ProbabilityMatrix { rows };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.rows.first() else {
            return Err(Error::Validation("empty probability matrix".into()));
        };
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != first.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    got: r.len(),
                });
            }
            if r.iter().any(|p| !(*p >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Validation(format!("row {i} is not a distribution")));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> usize {
        self.rows.len()
    }

    pub fn intervals(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn get(&self, segment: usize, interval: usize) -> f64 {
        self.rows[segment][interval]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub boost_rounds: usize,
    pub forest: ForestConfig,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            boost_rounds: 20,
            forest: ForestConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEnsemble {
    pub schema_version: u32,
    pub class_count: usize,
    pub feature_config: FeatureConfig,
    pub boosted: BoostedNb,
    pub forest: RandomForest,
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

impl IntervalEnsemble {
    pub fn train(train: &TrainingSet, feature_config: FeatureConfig, cfg: &EnsembleConfig) -> Result<Self> {
        train.validate()?;
        if train.dim() != feature_config.dim() {
            return Err(Error::DimensionMismatch {
                expected: feature_config.dim(),
                got: train.dim(),
            });
        }
        if cfg.boost_rounds == 0 {
            return Err(Error::InvalidArgument("boost_rounds must be at least 1".into()));
        }
        let (boosted, forest) = rayon::join(
            || train_adaboost_nb(train, cfg.boost_rounds, rng::derive(cfg.seed, 1)),
            || train_random_forest(train, &cfg.forest, rng::derive(cfg.seed, 2)),
        );
        Ok(IntervalEnsemble {
            schema_version: ENSEMBLE_SCHEMA,
            class_count: train.class_count,
            feature_config,
            boosted: boosted?,
            forest: forest?,
        })
    }

    pub fn dim(&self) -> usize {
        self.feature_config.dim()
    }

    /// Mean of the boosted and forest distributions.
    pub fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut b = self.boosted.predict_proba(x);
        let mut f = self.forest.predict_proba(x);
        normalize(&mut b);
        normalize(&mut f);
        let mut row: Vec<f64> = b.iter().zip(&f).map(|(a, c)| 0.5 * a + 0.5 * c).collect();
        normalize(&mut row);
        Ok(row)
    }

    pub fn predict_matrix(&self, segments: &[Vec<f64>]) -> Result<ProbabilityMatrix> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument("no segments to classify".into()));
        }
        let rows = segments
            .par_iter()
            .map(|x| self.predict_row(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProbabilityMatrix { rows })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        let version = v.get("schema_version").and_then(|x| x.as_u64());
        if version != Some(ENSEMBLE_SCHEMA as u64) {
            return Err(Error::Format(format!(
                "unsupported interval model schema {version:?}, expected {ENSEMBLE_SCHEMA}"
            )));
        }
        let e: IntervalEnsemble = serde_json::from_value(v)?;
        if e.forest.trees.is_empty() || e.boosted.learners.iter().any(|(_, a)| !(*a > 0.0)) {
            return Err(Error::Format("interval model has no trees or a non-positive learner weight".into()));
        }
        if e.forest.class_count != e.class_count || e.boosted.class_count != e.class_count {
            return Err(Error::Format("class counts disagree inside interval model".into()));
        }
        if e.forest.dim != e.dim() {
            return Err(Error::DimensionMismatch {
                expected: e.dim(),
                got: e.forest.dim,
            });
        }
        Ok(e)
    }
}

/// Anything that maps segments of an ENU series to interval distributions.
pub trait SegmentClassifier: Sync {
    fn class_count(&self) -> usize;

    /// One row per segment; segment indices address `enu`.
    fn predict_segments(&self, enu: &[EnuSample], segments: &[Segment]) -> Result<ProbabilityMatrix>;
}

impl SegmentClassifier for IntervalEnsemble {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict_segments(&self, enu: &[EnuSample], segments: &[Segment]) -> Result<ProbabilityMatrix> {
        let rows = segments
            .par_iter()
            .map(|s| feature_vector(&enu[s.start_index..s.end_index], &self.feature_config))
            .collect::<Result<Vec<_>>>()?;
        self.predict_matrix(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    /// 45 statistics plus length.
    fn small_config(dim: usize) -> FeatureConfig {
        let fc = FeatureConfig {
            include_peaks: false,
            ..FeatureConfig::default()
        };
        assert_eq!(fc.dim(), dim);
        fc
    }

    fn synthetic(classes: usize, per: usize, noise: f64, seed: u64) -> TrainingSet {
        let dim = 46;
        let mut rng = rng::stream(seed, 3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for _ in 0..per {
                let r: Vec<f64> = (0..dim)
                    .map(|d| ((c * 7 + d * 3) % 11) as f64 * 0.3 + noise * (rng.random::<f64>() - 0.5))
                    .collect();
                rows.push(r);
                labels.push(c);
            }
        }
        TrainingSet::new(rows, labels, classes).unwrap()
    }

    fn quick() -> EnsembleConfig {
        EnsembleConfig {
            boost_rounds: 5,
            forest: ForestConfig {
                trees: 15,
                ..ForestConfig::default()
            },
            seed: 11,
        }
    }

    #[test]
    fn training_set_rejects_singletons_and_bad_labels() {
        assert!(TrainingSet::new(vec![vec![1.0], vec![2.0], vec![3.0]], vec![0, 0, 1], 2).is_err());
        assert!(TrainingSet::new(vec![vec![1.0], vec![2.0]], vec![2, 2], 2).is_err());
        assert!(TrainingSet::new(vec![], vec![], 2).is_err());
        assert!(TrainingSet::new(vec![vec![1.0], vec![2.0, 1.0]], vec![0, 0], 1).is_err());
    }

    #[test]
    fn single_class_gives_indicator_row() {
        let t = TrainingSet::new(vec![vec![0.0; 46], vec![1.0; 46], vec![0.5; 46]], vec![3, 3, 3], 5).unwrap();
        let e = IntervalEnsemble::train(&t, small_config(46), &quick()).unwrap();
        assert_eq!(e.predict_row(&[0.2; 46]).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let t = synthetic(3, 6, 0.5, 1);
        let e = IntervalEnsemble::train(&t, small_config(46), &quick()).unwrap();
        assert!(matches!(
            e.predict_row(&[0.0; 45]),
            Err(Error::DimensionMismatch { expected: 46, got: 45 })
        ));
        assert!(e.predict_matrix(&[]).is_err());
        assert!(IntervalEnsemble::train(&t, FeatureConfig::default(), &quick()).is_err());
    }

    #[test]
    fn matrix_is_stacked_rows() {
        let t = synthetic(4, 8, 1.0, 2);
        let e = IntervalEnsemble::train(&t, small_config(46), &quick()).unwrap();
        let segs: Vec<Vec<f64>> = t.rows.iter().step_by(3).cloned().collect();
        let m = e.predict_matrix(&segs).unwrap();
        m.validate().unwrap();
        for (row, x) in m.rows.iter().zip(&segs) {
            assert_eq!(row, &e.predict_row(x).unwrap());
        }
        let mut rev = segs.clone();
        rev.reverse();
        let mr = e.predict_matrix(&rev).unwrap();
        let mut back = mr.rows.clone();
        back.reverse();
        assert_eq!(back, m.rows);
        assert_eq!(e.predict_matrix(&segs[..1]).unwrap().segments(), 1);
    }

    #[test]
    fn json_round_trip_and_version_guard() {
        let t = synthetic(3, 6, 0.5, 4);
        let e = IntervalEnsemble::train(&t, small_config(46), &quick()).unwrap();
        let s = e.to_json().unwrap();
        let back = IntervalEnsemble::from_json(&s).unwrap();
        assert_eq!(back, e);
        let bumped = s.replacen("\"schema_version\":1", "\"schema_version\":9", 1);
        assert!(matches!(IntervalEnsemble::from_json(&bumped), Err(Error::Format(_))));
    }

    #[test]
    fn deterministic_training() {
        let t = synthetic(3, 6, 2.0, 5);
        let a = IntervalEnsemble::train(&t, small_config(46), &quick()).unwrap();
        let b = IntervalEnsemble::train(&t, small_config(46), &quick()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probability_matrix_checks_rows() {
        assert!(ProbabilityMatrix::new(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).is_ok());
        assert!(ProbabilityMatrix::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(ProbabilityMatrix::new(vec![vec![-0.1, 1.1]]).is_err());
        assert!(ProbabilityMatrix::new(vec![]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn rows_are_distributions(x in prop::collection::vec(-1e3f64..1e3, 46)) {
            thread_local! {
                static MODEL: IntervalEnsemble =
                    IntervalEnsemble::train(&synthetic(5, 6, 3.0, 6), small_config(46), &quick()).unwrap();
            }
            let row = MODEL.with(|m| m.predict_row(&x).unwrap());
            prop_assert_eq!(row.len(), 5);
            prop_assert!(row.iter().all(|p| *p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
