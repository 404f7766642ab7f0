//! Training-free k-nearest-neighbor evaluation by cosine similarity.

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::sphere::UnitVector;

/// Fraction of test points whose majority label among their `k` most
/// similar training points matches the true label.
///
/// Neighbor ties go to the lower training index; vote ties go to the label
/// whose nearest supporter ranks first.
pub fn knn_eval(
    train: &[UnitVector],
    train_labels: &[i64],
    test: &[UnitVector],
    test_labels: &[i64],
    k: usize,
) -> Result<f64> {
    knn_eval_with(train, train_labels, test, test_labels, k, Execution::Sequential)
}

pub fn knn_eval_with(
    train: &[UnitVector],
    train_labels: &[i64],
    test: &[UnitVector],
    test_labels: &[i64],
    k: usize,
    execution: Execution,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    if train.len() != train_labels.len() || test.len() != test_labels.len() {
        return Err(Error::ConfigInvalid(
            "embedding and label counts differ".into(),
        ));
    }
    if k == 0 {
        return Err(Error::ConfigInvalid("k must be positive".into()));
    }
    if test.is_empty() {
        return Err(Error::ConfigInvalid("test set is empty".into()));
    }
    let dim = train[0].dim();
    if let Some(bad) = train.iter().chain(test).find(|v| v.dim() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let k = k.min(train.len());
    let hits = exec::map_indexed(execution, test, |i, z| {
        predict(z, train, train_labels, k) == test_labels[i]
    });
    Ok(hits.iter().filter(|&&h| h).count() as f64 / test.len() as f64)
}

fn predict(z: &UnitVector, train: &[UnitVector], labels: &[i64], k: usize) -> i64 {
    if k == 1 {
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (i, t) in train.iter().enumerate() {
            let s = z.dot(t);
            if s > best_sim {
                best_sim = s;
                best = i;
            }
        }
        return labels[best];
    }
    let mut ranked: Vec<(f64, usize)> = train.iter().map(|t| z.dot(t)).zip(0..).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    // (label, votes), in order of first appearance.
    let mut votes: Vec<(i64, usize)> = Vec::new();
    for &(_, i) in &ranked[..k] {
        match votes.iter_mut().find(|(l, _)| *l == labels[i]) {
            Some(entry) => entry.1 += 1,
            None => votes.push((labels[i], 1)),
        }
    }
    let top = votes.iter().map(|v| v.1).max().unwrap_or(0);
    votes.iter().find(|v| v.1 == top).map_or(labels[ranked[0].1], |v| v.0)
}
