//! Synthetic labeled data: isotropic gaussian classes in input space, plus
//! a stochastic augmentation standing in for two random views of a sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDataSpec {
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    /// Standard deviation of each class-mean coordinate.
    pub class_mean_scale: f64,
    /// Within-class standard deviation.
    pub noise_sigma: f64,
    pub augment_noise_sigma: f64,
    /// Uniform range of the random rescaling applied by [`augment`].
    pub augment_scale_range: [f64; 2],
    pub seed: u64,
}

impl Default for SyntheticDataSpec {
    fn default() -> Self {
        SyntheticDataSpec {
            num_classes: 10,
            input_dim: 32,
            samples_per_class: 100,
            class_mean_scale: 1.0,
            noise_sigma: 1.0,
            augment_noise_sigma: 0.5,
            augment_scale_range: [0.8, 1.2],
            seed: 0,
        }
    }
}

impl SyntheticDataSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if self.num_classes == 0 || self.input_dim == 0 || self.samples_per_class == 0 {
            return bad("data counts must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.augment_noise_sigma >= 0.0) {
            return bad("noise sigmas must be non-negative");
        }
        if !(self.class_mean_scale >= 0.0) {
            return bad("class_mean_scale must be non-negative");
        }
        let [lo, hi] = self.augment_scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad("augment_scale_range must satisfy 0 < lo <= hi");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Class centers, fixed by `spec.seed` alone.
pub fn class_means(spec: &SyntheticDataSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.num_classes)
        .map(|_| {
            (0..spec.input_dim)
                .map(|_| spec.class_mean_scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// `samples_per_class` draws of `mean_c + N(0, noise_sigma²)` per class,
/// ordered by class.
pub fn sample_dataset<R: Rng + ?Sized>(spec: &SyntheticDataSpec, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    let means = class_means(spec);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let mut inputs = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    let mut labels = Vec::with_capacity(inputs.capacity());
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            inputs.push(mean.iter().map(|m| m + noise.sample(rng)).collect());
            labels.push(c);
        }
    }
    Ok(Dataset { inputs, labels })
}

/// The pool the encoder is trained on; also the labeled reference set for
/// kNN evaluation.
pub fn train_split(spec: &SyntheticDataSpec) -> Result<Dataset> {
    sample_dataset(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7261_696e))
}

/// Held-out samples from the same classes.
pub fn test_split(spec: &SyntheticDataSpec) -> Result<Dataset> {
    sample_dataset(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7465_7374))
}

/// `s · (input + N(0, augment_noise_sigma²))` with `s ~ U[lo, hi]`.
pub fn augment<R: Rng + ?Sized>(input: &[f64], spec: &SyntheticDataSpec, rng: &mut R) -> Vec<f64> {
    let [lo, hi] = spec.augment_scale_range;
    let noise = Normal::new(0.0, spec.augment_noise_sigma).expect("validated sigma");
    let jittered: Vec<f64> = input.iter().map(|x| x + noise.sample(rng)).collect();
    let scale = if lo == hi { lo } else { rng.gen_range(lo..hi) };
    jittered.into_iter().map(|x| scale * x).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_collapses_classes() {
        let spec = SyntheticDataSpec {
            noise_sigma: 0.0,
            samples_per_class: 5,
            num_classes: 3,
            ..SyntheticDataSpec::default()
        };
        let data = sample_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for c in 0..3 {
            let rows: Vec<_> = data.inputs[c * 5..(c + 1) * 5].to_vec();
            assert!(rows.iter().all(|r| r == &rows[0]));
            assert!(data.labels[c * 5..(c + 1) * 5].iter().all(|&l| l == c));
        }
    }

    #[test]
    fn far_classes_are_linearly_separable() {
        let spec = SyntheticDataSpec {
            noise_sigma: 0.0,
            num_classes: 2,
            input_dim: 4,
            samples_per_class: 3,
            class_mean_scale: 10.0,
            ..SyntheticDataSpec::default()
        };
        let data = sample_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let means = class_means(&spec);
        // The hyperplane bisecting the two means separates the classes.
        let normal: Vec<f64> = means[0].iter().zip(&means[1]).map(|(a, b)| a - b).collect();
        let mid: Vec<f64> = means[0].iter().zip(&means[1]).map(|(a, b)| 0.5 * (a + b)).collect();
        for (x, &l) in data.inputs.iter().zip(&data.labels) {
            let side: f64 = x.iter().zip(&mid).zip(&normal).map(|((x, m), n)| (x - m) * n).sum();
            assert_eq!(side > 0.0, l == 0);
        }
    }

    #[test]
    fn empirical_means_track_class_means() {
        let spec = SyntheticDataSpec {
            num_classes: 3,
            input_dim: 6,
            samples_per_class: 400,
            noise_sigma: 0.7,
            ..SyntheticDataSpec::default()
        };
        let means = class_means(&spec);
        let band = 3.0 * spec.noise_sigma / (spec.samples_per_class as f64).sqrt();
        let mut inside = 0;
        let mut total = 0;
        for seed in 0..20 {
            let data = sample_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for (c, mean) in means.iter().enumerate() {
                let rows = &data.inputs[c * 400..(c + 1) * 400];
                for d in 0..spec.input_dim {
                    let m = rows.iter().map(|r| r[d]).sum::<f64>() / 400.0;
                    total += 1;
                    if (m - mean[d]).abs() <= band {
                        inside += 1;
                    }
                }
            }
        }
        // 3σ covers 99.73%; allow a little Monte Carlo slack.
        assert!(inside as f64 / total as f64 > 0.99, "{inside}/{total}");
    }

    #[test]
    fn augment_examples() {
        let x = vec![1.0, -2.0, 3.5];
        let identity = SyntheticDataSpec {
            augment_noise_sigma: 0.0,
            augment_scale_range: [1.0, 1.0],
            ..SyntheticDataSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&x, &identity, &mut rng), x);
        let double = SyntheticDataSpec {
            augment_scale_range: [2.0, 2.0],
            ..identity
        };
        assert_eq!(augment(&x, &double, &mut rng), vec![2.0, -4.0, 7.0]);
        let noisy = SyntheticDataSpec::default();
        assert_ne!(augment(&x, &noisy, &mut rng), augment(&x, &noisy, &mut rng));
    }

    #[test]
    fn spec_validation() {
        let bad = SyntheticDataSpec {
            augment_scale_range: [1.2, 0.8],
            ..SyntheticDataSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SyntheticDataSpec {
            noise_sigma: -1.0,
            ..SyntheticDataSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
