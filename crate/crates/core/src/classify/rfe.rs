//! Recursive feature elimination driven by split-count importance.

use std::io::Write;

use serde::Serialize;

use super::{rank_features, train_boosted, BoostConfig, ClassifierConfig, ClassifyError};
use crate::eval::cross_validate;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RfeStep {
    /// Column indices of `x` in this round, in ascending order.
    pub features: Vec<usize>,
    pub accuracy: f64,
    /// `(feature, split count)` of the model fitted on all rows this round.
    pub weights: Vec<(usize, u32)>,
}

/// Starting from `features`, record the cross-validated accuracy, fit on all
/// rows, drop the feature with the fewest splits (the highest index among
/// ties) and repeat until one feature is left.
pub fn recursive_feature_elimination(
    x: &[Vec<f64>],
    y: &[bool],
    features: &[usize],
    config: &BoostConfig,
    folds: usize,
    seed: u64,
) -> Result<Vec<RfeStep>, ClassifyError> {
    if features.len() < 2 {
        return Err(ClassifyError::Config("elimination needs at least 2 features".into()));
    }
    let mut current: Vec<usize> = features.to_vec();
    current.sort_unstable();
    current.dedup();
    let trainer = ClassifierConfig::Boosted(config.clone());
    let mut curve = Vec::with_capacity(current.len());
    loop {
        let projected: Vec<Vec<f64>> = x
            .iter()
            .map(|r| current.iter().map(|&f| r[f]).collect())
            .collect();
        let report = cross_validate(&projected, y, &trainer, folds, seed)?;
        let model = train_boosted(&projected, y, config)?;
        let weights: Vec<(usize, u32)> = rank_features(&model)
            .into_iter()
            .map(|(local, w)| (current[local], w))
            .collect();
        curve.push(RfeStep {
            features: current.clone(),
            accuracy: report.mean_accuracy,
            weights: weights.clone(),
        });
        if current.len() == 1 {
            return Ok(curve);
        }
        let weakest = weights
            .iter()
            .min_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("at least two features")
            .0;
        current.retain(|&f| f != weakest);
    }
}

/// Highest accuracy; ties go to the smaller feature set.
pub fn best_step(curve: &[RfeStep]) -> Option<&RfeStep> {
    curve.iter().reduce(|best, s| {
        let better = s.accuracy > best.accuracy
            || (s.accuracy == best.accuracy && s.features.len() < best.features.len());
        if better {
            s
        } else {
            best
        }
    })
}

/// CSV with columns `num_features,accuracy,features`.
pub fn write_rfe_csv<W: Write>(w: W, curve: &[RfeStep]) -> Result<(), ClassifyError> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| ClassifyError::Io(e.into());
    wtr.write_record(["num_features", "accuracy", "features"]).map_err(io)?;
    for s in curve {
        let names: Vec<String> = s.features.iter().map(|f| format!("F{f}")).collect();
        wtr.write_record([
            s.features.len().to_string(),
            format!("{:.6}", s.accuracy),
            names.join(" "),
        ])
        .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<Vec<f64>>, Vec<bool>) {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, 5.0, (i % 4) as f64]).collect();
        let y = (0..60).map(|i| i >= 30).collect();
        (x, y)
    }

    #[test]
    fn curve_length_matches_features() {
        let (x, y) = data();
        let cfg = BoostConfig { rounds: 10, ..Default::default() };
        let curve = recursive_feature_elimination(&x, &y, &[0, 1], &cfg, 5, 1).unwrap();
        assert_eq!(curve.len(), 2);
        let curve = recursive_feature_elimination(&x, &y, &[0, 1, 2], &cfg, 5, 1).unwrap();
        assert_eq!(curve.len(), 3);
        // Columns 1 and 2 never split; the higher index of the tie goes first.
        assert_eq!(curve[1].features, vec![0, 1]);
        assert_eq!(curve[2].features, vec![0]);
        let mut buf = Vec::new();
        write_rfe_csv(&mut buf, &curve).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    #[test]
    fn best_prefers_fewer_features_on_ties() {
        let step = |n: usize, accuracy| RfeStep { features: (0..n).collect(), accuracy, weights: vec![] };
        let curve = vec![step(3, 0.9), step(2, 0.9), step(1, 0.8)];
        assert_eq!(best_step(&curve).unwrap().features.len(), 2);
    }

    #[test]
    fn one_feature_is_error() {
        let (x, y) = data();
        assert!(recursive_feature_elimination(&x, &y, &[0], &BoostConfig::default(), 5, 1).is_err());
    }
}
