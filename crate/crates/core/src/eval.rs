//! Accuracy, k-fold splitting, cross-validation and model comparison.
//!
//! Reported accuracies are the mean of per-fold accuracies, not pooled counts.

use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("accuracy of an empty confusion matrix is undefined")]
    EmptyConfusion,
    #[error("cannot split {n} samples into {k} folds")]
    TooFewSamples { n: usize, k: usize },
    #[error("need at least 2 folds, got {0}")]
    Folds(usize),
    #[error("features and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cross-validation needs both classes in the data")]
    SingleClass,
    #[error("need at least {0} configurations to compare")]
    TooFewConfigs(usize),
    #[error("training failed on fold {fold}: {message}")]
    Training { fold: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A trained binary classifier; `true` means troll.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> bool;
}

/// Something that fits a [`Predictor`] on a labeled matrix.
pub trait Trainer: Sync {
    fn name(&self) -> String;
    fn fit(&self, x: &[Vec<f64>], y: &[bool]) -> Result<Box<dyn Predictor>, String>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> Result<f64, EvalError> {
        accuracy(self.tp, self.tn, self.fp, self.fn_)
    }
}

/// `(TP + TN) / (TP + TN + FP + FN)`.
pub fn accuracy(tp: usize, tn: usize, fp: usize, fn_: usize) -> Result<f64, EvalError> {
    let total = tp + tn + fp + fn_;
    if total == 0 {
        return Err(EvalError::EmptyConfusion);
    }
    Ok((tp + tn) as f64 / total as f64)
}

/// Shuffle `0..n` with the seed, then deal indices round-robin into `k` folds.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    check_folds(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (p, i) in order.into_iter().enumerate() {
        folds[p % k].push(i);
    }
    Ok(folds)
}

/// Like [`kfold_split`] but each class is shuffled and dealt separately, with
/// the dealing position carried over from one class to the next so fold sizes
/// still differ by at most one.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    check_folds(labels.len(), k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::with_capacity(labels.len() / k + 1); k];
    let mut position = 0;
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[position % k].push(i);
            position += 1;
        }
    }
    Ok(folds)
}

fn check_folds(n: usize, k: usize) -> Result<(), EvalError> {
    if k < 2 {
        return Err(EvalError::Folds(k));
    }
    if n < k {
        return Err(EvalError::TooFewSamples { n, k });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub confusion: Confusion,
    pub accuracy: f64,
    /// The training split held a single class; the fold predicted that class.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub classifier: String,
    pub features: Vec<usize>,
    pub seed: u64,
    pub folds: Vec<FoldReport>,
    pub mean_accuracy: f64,
}

impl EvaluationReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| EvalError::Io(e.into());
        wtr.write_record(["fold", "train_size", "test_size", "tp", "tn", "fp", "fn", "accuracy", "degenerate"])
            .map_err(io)?;
        for f in &self.folds {
            let c = f.confusion;
            wtr.write_record([
                f.fold.to_string(),
                f.train_size.to_string(),
                f.test_size.to_string(),
                c.tp.to_string(),
                c.tn.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                format!("{:.6}", f.accuracy),
                f.degenerate.to_string(),
            ])
            .map_err(io)?;
        }
        wtr.write_record(["mean", "", "", "", "", "", "", &format!("{:.6}", self.mean_accuracy), ""])
            .map_err(io)?;
        wtr.flush()?;
        Ok(())
    }
}

/// Stratified k-fold cross-validation. Folds are trained in parallel; each
/// model sees only the rows outside its test fold.
pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[bool],
    trainer: &dyn Trainer,
    k: usize,
    seed: u64,
) -> Result<EvaluationReport, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if !(y.iter().any(|&t| t) && y.iter().any(|&t| !t)) {
        return Err(EvalError::SingleClass);
    }
    let folds = stratified_kfold(y, k, seed)?;
    let reports: Vec<FoldReport> = folds
        .par_iter()
        .enumerate()
        .map(|(fold, test)| run_fold(x, y, trainer, fold, test))
        .collect::<Result<_, _>>()?;
    let mean_accuracy = reports.iter().map(|r| r.accuracy).sum::<f64>() / reports.len() as f64;
    Ok(EvaluationReport {
        classifier: trainer.name(),
        features: Vec::new(),
        seed,
        folds: reports,
        mean_accuracy,
    })
}

fn run_fold(
    x: &[Vec<f64>],
    y: &[bool],
    trainer: &dyn Trainer,
    fold: usize,
    test: &[usize],
) -> Result<FoldReport, EvalError> {
    let mut is_test = vec![false; x.len()];
    for &i in test {
        is_test[i] = true;
    }
    let train: Vec<usize> = (0..x.len()).filter(|&i| !is_test[i]).collect();
    let train_x: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
    let train_y: Vec<bool> = train.iter().map(|&i| y[i]).collect();

    let positives = train_y.iter().filter(|&&t| t).count();
    let degenerate = positives == 0 || positives == train_y.len();
    let mut confusion = Confusion::default();
    if degenerate {
        let majority = positives * 2 > train_y.len();
        for &i in test {
            confusion.record(majority, y[i]);
        }
    } else {
        let model = trainer
            .fit(&train_x, &train_y)
            .map_err(|message| EvalError::Training { fold, message })?;
        for &i in test {
            confusion.record(model.predict(&x[i]), y[i]);
        }
    }
    Ok(FoldReport {
        fold,
        train_size: train.len(),
        test_size: test.len(),
        accuracy: confusion.accuracy()?,
        confusion,
        degenerate,
    })
}

/// One classifier restricted to a feature subset.
pub struct ComparisonConfig<'a> {
    pub label: String,
    pub trainer: &'a dyn Trainer,
    pub features: Vec<usize>,
}

/// Cross-validate every configuration on the same folds.
pub fn compare_models(
    x: &[Vec<f64>],
    y: &[bool],
    configs: &[ComparisonConfig<'_>],
    k: usize,
    seed: u64,
) -> Result<Vec<(String, EvaluationReport)>, EvalError> {
    if configs.len() < 2 {
        return Err(EvalError::TooFewConfigs(2));
    }
    configs
        .iter()
        .map(|c| {
            let projected: Vec<Vec<f64>> = x
                .iter()
                .map(|r| c.features.iter().map(|&f| r[f]).collect())
                .collect();
            let mut report = cross_validate(&projected, y, c.trainer, k, seed)?;
            report.features = c.features.clone();
            Ok((c.label.clone(), report))
        })
        .collect()
}

pub fn write_comparison_csv<W: Write>(w: W, rows: &[(String, EvaluationReport)]) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| EvalError::Io(e.into());
    wtr.write_record(["config", "classifier", "features", "mean_accuracy"])
        .map_err(io)?;
    for (label, r) in rows {
        wtr.write_record([
            label.clone(),
            r.classifier.clone(),
            feature_list(&r.features),
            format!("{:.6}", r.mean_accuracy),
        ])
        .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn comparison_table(rows: &[(String, EvaluationReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:<10}  {:>8}  features\n", "config", "classifier", "accuracy");
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:<10}  {:>8.4}  {}",
            label,
            r.classifier,
            r.mean_accuracy,
            feature_list(&r.features)
        );
    }
    out
}

fn feature_list(features: &[usize]) -> String {
    features.iter().map(|f| format!("F{f}")).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::Mutex;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(8, 7, 3, 2).unwrap(), 0.75);
        assert_eq!(accuracy(4, 6, 0, 0).unwrap(), 1.0);
        assert_eq!(accuracy(0, 0, 3, 1).unwrap(), 0.0);
        assert!(accuracy(0, 0, 0, 0).is_err());
    }

    #[test]
    fn fold_sizes() {
        let sizes = |n, k| {
            let mut s: Vec<usize> = kfold_split(n, k, 3).unwrap().iter().map(Vec::len).collect();
            s.sort_unstable_by(|a, b| b.cmp(a));
            s
        };
        assert_eq!(sizes(100, 5), vec![20; 5]);
        assert_eq!(sizes(7, 5), vec![2, 2, 1, 1, 1]);
        assert!(kfold_split(3, 5, 0).is_err());
    }

    struct Majority;
    struct Constant(bool);
    impl Predictor for Constant {
        fn predict(&self, _: &[f64]) -> bool {
            self.0
        }
    }
    impl Trainer for Majority {
        fn name(&self) -> String {
            "majority".into()
        }
        fn fit(&self, _: &[Vec<f64>], y: &[bool]) -> Result<Box<dyn Predictor>, String> {
            let pos = y.iter().filter(|&&t| t).count();
            Ok(Box::new(Constant(pos * 2 > y.len())))
        }
    }

    #[test]
    fn majority_baseline_on_sixty_forty() {
        let y: Vec<bool> = (0..100).map(|i| i < 40).collect();
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let r = cross_validate(&x, &y, &Majority, 5, 9).unwrap();
        assert!((r.mean_accuracy - 0.6).abs() < 1e-12);
        assert_eq!(r, cross_validate(&x, &y, &Majority, 5, 9).unwrap());
    }

    /// Records every training row it sees, keyed by the first feature.
    struct Spy(Mutex<Vec<Vec<usize>>>);
    impl Trainer for Spy {
        fn name(&self) -> String {
            "spy".into()
        }
        fn fit(&self, x: &[Vec<f64>], _: &[bool]) -> Result<Box<dyn Predictor>, String> {
            self.0.lock().unwrap().push(x.iter().map(|r| r[0] as usize).collect());
            Ok(Box::new(Constant(false)))
        }
    }

    #[test]
    fn never_trains_on_test_rows() {
        let n = 23;
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let spy = Spy(Mutex::new(Vec::new()));
        cross_validate(&x, &y, &spy, 5, 1).unwrap();
        let folds = stratified_kfold(&y, 5, 1).unwrap();
        let seen = spy.0.into_inner().unwrap();
        assert_eq!(seen.len(), 5);
        for train in seen {
            let test = folds.iter().find(|f| f.iter().all(|i| !train.contains(i))).unwrap();
            assert_eq!(train.len() + test.len(), n);
        }
    }

    #[test]
    fn degenerate_fold_is_marked() {
        // With k = n the fold holding the only positive trains on negatives.
        let y = vec![true, false, false];
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let r = cross_validate(&x, &y, &Majority, 3, 0).unwrap();
        assert!(r.folds.iter().any(|f| f.degenerate));
    }

    #[test]
    fn comparison_rows_match_configs() {
        let y: Vec<bool> = (0..30).map(|i| i % 2 == 0).collect();
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 1.0]).collect();
        let configs = vec![
            ComparisonConfig { label: "a".into(), trainer: &Majority, features: vec![0] },
            ComparisonConfig { label: "b".into(), trainer: &Majority, features: vec![0] },
        ];
        let rows = compare_models(&x, &y, &configs, 5, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].1.mean_accuracy, rows[1].1.mean_accuracy);
        let mut buf = Vec::new();
        write_comparison_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        assert_eq!(comparison_table(&rows).lines().count(), 3);
    }

    proptest! {
        #[test]
        fn kfold_is_partition(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let folds = kfold_split(n, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn stratified_is_partition(labels in prop::collection::vec(any::<bool>(), 5..120), seed in any::<u64>()) {
            let folds = stratified_kfold(&labels, 5, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn accuracy_formula(tp in 0usize..1000, tn in 0usize..1000, fp in 0usize..1000, fn_ in 0usize..1000) {
            let total = tp + tn + fp + fn_;
            prop_assume!(total > 0);
            prop_assert_eq!(accuracy(tp, tn, fp, fn_).unwrap(), (tp + tn) as f64 / total as f64);
        }
    }
}
