//! Wall-clock cost of positive generation relative to a full training step.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Execution;
use crate::hallucinate::{hallucinate_batch, HallucinationConfig};
use crate::kmeans::KMeansConfig;
use crate::losses::MuSchedule;
use crate::sphere::UnitVector;
use crate::toy::{SyntheticDataSpec, TrainConfig, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadConfig {
    pub dim: usize,
    pub batch: usize,
    pub num_positives: usize,
    pub prototypes: usize,
    pub repeats: usize,
    /// Queue capacity of the timed training step; filled before timing.
    pub queue: usize,
    pub seed: u64,
}

impl Default for OverheadConfig {
    fn default() -> Self {
        OverheadConfig {
            dim: 128,
            batch: 64,
            num_positives: 100,
            prototypes: 20,
            repeats: 20,
            queue: 4096,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl Timing {
    /// Nearest-rank median and 95th percentile.
    pub fn from_samples(samples: &[f64]) -> Timing {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |q: f64| {
            if s.is_empty() {
                return 0.0;
            }
            let i = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
            s[i]
        };
        Timing {
            median_ms: rank(0.5),
            p95_ms: rank(0.95),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub hallucinate: Timing,
    pub train_step: Timing,
    /// `hallucinate.median_ms / train_step.median_ms`.
    pub ratio: f64,
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> UnitVector {
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(v) = UnitVector::project(&raw) {
            return v;
        }
    }
}

fn time_ms(f: impl FnOnce() -> Result<()>) -> Result<f64> {
    let start = Instant::now();
    f()?;
    Ok(start.elapsed().as_secs_f64() * 1e3)
}

/// Single-threaded timings for one `hallucinate_batch` call and one training
/// step with hallucination active, at matching sizes.
pub fn measure_overhead(cfg: &OverheadConfig) -> Result<OverheadReport> {
    let repeats = cfg.repeats.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let keys: Vec<UnitVector> = (0..cfg.batch).map(|_| random_unit(cfg.dim, &mut rng)).collect();
    let protos: Vec<UnitVector> = (0..cfg.prototypes).map(|_| random_unit(cfg.dim, &mut rng)).collect();
    // With no positives requested there is nothing to generate; time an
    // empty call and train without the hallucination term.
    let generate = cfg.num_positives > 0;
    let hcfg = HallucinationConfig {
        num_positives: cfg.num_positives.max(1),
        seed: cfg.seed,
        execution: Execution::Sequential,
        ..HallucinationConfig::default()
    };
    let mut hall = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        hall.push(time_ms(|| {
            if generate {
                hallucinate_batch(&keys, None, &protos, &hcfg)?;
            }
            Ok(())
        })?);
    }

    let top_k = 256.max(cfg.prototypes).min(cfg.queue);
    let tcfg = TrainConfig {
        steps: usize::MAX,
        batch_size: cfg.batch,
        embedding_dim: cfg.dim,
        queue_capacity: cfg.queue.max(cfg.batch).max(top_k),
        top_k,
        num_prototypes: cfg.prototypes,
        kmeans: KMeansConfig {
            k: cfg.prototypes,
            ..KMeansConfig::default()
        },
        hallucination: hcfg,
        mu: MuSchedule {
            warmup_steps: 0,
            mu_after: if generate { 1.0 } else { 0.0 },
        },
        seed: cfg.seed,
        execution: Execution::Sequential,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(tcfg, SyntheticDataSpec::default())?;
    while trainer.queue().filled() < trainer.queue().capacity()
        || (generate && !trainer.hallucination_active())
    {
        trainer.step()?;
    }
    let mut steps = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        steps.push(time_ms(|| trainer.step().map(drop))?);
    }

    let hallucinate = Timing::from_samples(&hall);
    let train_step = Timing::from_samples(&steps);
    let ratio = if train_step.median_ms > 0.0 {
        hallucinate.median_ms / train_step.median_ms
    } else {
        0.0
    };
    Ok(OverheadReport {
        hallucinate,
        train_step,
        ratio,
    })
}
