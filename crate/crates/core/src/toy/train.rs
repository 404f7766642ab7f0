//! Momentum-contrast training loop with hallucinated positives.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::hallucinate::{hallucinate_batch, HallucinationConfig, HallucinationReport};
use crate::kmeans::{self, KMeansConfig, PrototypeSet};
use crate::losses::{halp_loss, info_nce, total_loss, MuSchedule, DEFAULT_TAU};
use crate::queue::{MemoryQueue, DEFAULT_CAPACITY};
use crate::sphere::{slerp, UnitVector};

use super::data::{augment, test_split, train_split, Dataset, SyntheticDataSpec};
use super::encoder::{encode_backward, encode_forward, momentum_update, EncoderGradient, ToyEncoder};
use super::knn::knn_eval_with;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Heavy-ball coefficient of the query-encoder optimizer.
    pub sgd_momentum: f64,
    /// EMA coefficient of the key encoder.
    pub momentum_m: f64,
    pub tau: f64,
    pub mu: MuSchedule,
    pub queue_capacity: usize,
    /// Most recent queue entries clustered into prototypes.
    pub top_k: usize,
    pub num_prototypes: usize,
    /// Steps between prototype refits.
    pub prototype_refresh_period: usize,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub hallucination: HallucinationConfig,
    pub kmeans: KMeansConfig,
    pub seed: u64,
    /// Replace prototype-directed positives with points on the geodesic
    /// from key to query. Off by default.
    pub query_key_interpolation: bool,
    /// When false, `wall_ms` is reported as 0 so metrics are reproducible
    /// byte for byte.
    pub record_timing: bool,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 64,
            learning_rate: 0.01,
            sgd_momentum: 0.9,
            momentum_m: 0.999,
            tau: DEFAULT_TAU,
            mu: MuSchedule::default(),
            queue_capacity: DEFAULT_CAPACITY,
            top_k: 256,
            num_prototypes: 20,
            prototype_refresh_period: 5,
            hidden_dims: vec![64],
            embedding_dim: 16,
            hallucination: HallucinationConfig::default(),
            kmeans: KMeansConfig::default(),
            seed: 0,
            query_key_interpolation: false,
            record_timing: true,
            execution: Execution::Sequential,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.steps == 0 || self.batch_size == 0 || self.prototype_refresh_period == 0 {
            return bad("steps, batch_size and prototype_refresh_period must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum_m) {
            return bad(format!("momentum_m must lie in [0, 1), got {}", self.momentum_m));
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) {
            return bad(format!("sgd_momentum must lie in [0, 1), got {}", self.sgd_momentum));
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidTemperature(self.tau));
        }
        if self.queue_capacity < self.top_k || self.queue_capacity < self.batch_size {
            return bad("queue_capacity must be at least top_k and batch_size".into());
        }
        if self.top_k < self.num_prototypes || self.num_prototypes == 0 {
            return bad("need 1 <= num_prototypes <= top_k".into());
        }
        if self.kmeans.k != self.num_prototypes {
            return bad(format!(
                "kmeans.k ({}) must equal num_prototypes ({})",
                self.kmeans.k, self.num_prototypes
            ));
        }
        if self.embedding_dim < 2 || self.hidden_dims.contains(&0) {
            return bad("embedding_dim must be >= 2 and hidden widths positive".into());
        }
        self.kmeans.validate()?;
        self.hallucination.validate()
    }

    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.embedding_dim);
        dims
    }
}

/// Number of optimizer steps covering `epochs` passes over `dataset_len`
/// samples.
pub fn epochs_to_steps(epochs: usize, dataset_len: usize, batch_size: usize) -> usize {
    epochs * dataset_len.div_ceil(batch_size.max(1))
}

/// One row of the metrics time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub l_cl: f64,
    pub l_halp: f64,
    pub total: f64,
    pub mu: f64,
    pub generated: usize,
    pub retained: usize,
    pub t_star_mean: f64,
    pub wall_ms: f64,
}

impl StepMetrics {
    pub fn retention_rate(&self) -> Option<f64> {
        (self.generated > 0).then(|| self.retained as f64 / self.generated as f64)
    }
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub metrics: Vec<StepMetrics>,
    pub query_encoder: ToyEncoder,
    pub key_encoder: ToyEncoder,
    pub prototypes: Option<PrototypeSet>,
}

/// splitmix64 of `a` combined with `b`; used to derive per-step seeds.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stateful trainer; [`train`] drives it for `config.steps` steps.
pub struct Trainer {
    config: TrainConfig,
    spec: SyntheticDataSpec,
    data: Dataset,
    query: ToyEncoder,
    key: ToyEncoder,
    velocity: EncoderGradient,
    queue: MemoryQueue,
    prototypes: Option<PrototypeSet>,
    last_refresh: usize,
    rng: ChaCha8Rng,
    step: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, spec: SyntheticDataSpec) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        let data = train_split(&spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let query = ToyEncoder::new(&config.layer_dims(spec.input_dim), &mut rng)?;
        let key = query.clone();
        let velocity = EncoderGradient::zeros_like(&query);
        let queue = MemoryQueue::new(config.queue_capacity, config.embedding_dim)?;
        Ok(Trainer {
            config,
            spec,
            data,
            query,
            key,
            velocity,
            queue,
            prototypes: None,
            last_refresh: 0,
            rng,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn query_encoder(&self) -> &ToyEncoder {
        &self.query
    }

    pub fn key_encoder(&self) -> &ToyEncoder {
        &self.key
    }

    pub fn queue(&self) -> &MemoryQueue {
        &self.queue
    }

    pub fn prototypes(&self) -> Option<&PrototypeSet> {
        self.prototypes.as_ref()
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Whether positives will be hallucinated on the next step.
    pub fn hallucination_active(&self) -> bool {
        self.config.mu.mu_at(self.step) != 0.0 && self.queue.filled() >= self.config.top_k
    }

    fn refresh_prototypes(&mut self) -> Result<()> {
        let due = self.prototypes.is_none()
            || self.step - self.last_refresh >= self.config.prototype_refresh_period;
        if !due {
            return Ok(());
        }
        let pool = self.queue.top_k_recent(self.config.top_k)?;
        let mut cfg = self.config.kmeans.clone();
        cfg.execution = self.config.execution;
        cfg.seed = mix(cfg.seed, self.step as u64);
        let fitted = match &self.prototypes {
            Some(prev) if cfg.warm_start && prev.len() == cfg.k => {
                kmeans::fit_from(&pool, &prev.prototypes, &cfg)?
            }
            _ => kmeans::fit(&pool, &cfg)?,
        };
        self.prototypes = Some(fitted);
        self.last_refresh = self.step;
        Ok(())
    }

    /// Positives per sample plus generation statistics.
    pub fn hallucinate(
        &mut self,
        queries: &[UnitVector],
        keys: &[UnitVector],
    ) -> Result<(Vec<Vec<UnitVector>>, HallucinationReport)> {
        let mut cfg = self.config.hallucination.clone();
        cfg.execution = self.config.execution;
        cfg.seed = mix(cfg.seed, self.step as u64);

        if self.config.query_key_interpolation {
            return Ok(interpolate_query_key(queries, keys, &cfg));
        }
        self.refresh_prototypes()?;
        let protos = &self.prototypes.as_ref().expect("refreshed above").prototypes;
        let out = hallucinate_batch(keys, Some(queries), protos, &cfg)?;
        Ok((out.positives, out.report))
    }

    /// Runs one optimization step.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let start = Instant::now();
        let batch = self.config.batch_size;
        let mut x_q = Vec::with_capacity(batch);
        let mut x_k = Vec::with_capacity(batch);
        for _ in 0..batch {
            let i = self.rng.gen_range(0..self.data.len());
            x_q.push(augment(&self.data.inputs[i], &self.spec, &mut self.rng));
            x_k.push(augment(&self.data.inputs[i], &self.spec, &mut self.rng));
        }
        let (z_q, cache) = encode_forward(&self.query, &x_q)?;
        let (z_k, _) = encode_forward(&self.key, &x_k)?;

        let mu = self.config.mu.mu_at(self.step);
        let (positives, report) = if self.hallucination_active() {
            self.hallucinate(&z_q, &z_k)?
        } else {
            (vec![Vec::new(); batch], HallucinationReport::default())
        };

        let tau = self.config.tau;
        let negatives = self.queue.negatives();
        let scale = 1.0 / batch as f64;
        let per_sample = exec::map_range(self.config.execution, batch, |i| {
            let cl = info_nce(z_q[i].as_slice(), &z_k[i], negatives, tau)?;
            let hl = halp_loss(z_q[i].as_slice(), &positives[i], tau)?;
            let grad: Vec<f64> = cl
                .grad
                .as_slice()
                .iter()
                .zip(hl.grad.as_slice())
                .map(|(a, b)| scale * (a + mu * b))
                .collect();
            Ok::<_, Error>((cl.loss, hl.loss, grad))
        });
        let mut l_cl = 0.0;
        let mut l_halp = 0.0;
        let mut grads = Vec::with_capacity(batch);
        for r in per_sample {
            let (a, b, g) = r?;
            l_cl += a * scale;
            l_halp += b * scale;
            grads.push(g);
        }

        let grad = encode_backward(&self.query, &cache, &grads)?;
        self.velocity.decay_add(self.config.sgd_momentum, &grad);
        self.query.apply_step(&self.velocity, self.config.learning_rate)?;
        momentum_update(&self.query, &mut self.key, self.config.momentum_m)?;
        self.queue.push(&z_k)?;

        let breakdown = total_loss(l_cl, l_halp, report.retained, self.step, &self.config.mu, tau);
        let metrics = StepMetrics {
            step: self.step,
            l_cl: breakdown.l_cl,
            l_halp: breakdown.l_halp,
            total: breakdown.total,
            mu: breakdown.mu,
            generated: report.generated,
            retained: report.retained,
            t_star_mean: report.t_star_mean(),
            wall_ms: if self.config.record_timing {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        };
        self.step += 1;
        Ok(metrics)
    }

    pub fn run(mut self) -> Result<TrainRun> {
        let mut metrics = Vec::with_capacity(self.config.steps);
        while self.step < self.config.steps {
            metrics.push(self.step()?);
        }
        Ok(TrainRun {
            metrics,
            query_encoder: self.query,
            key_encoder: self.key,
            prototypes: self.prototypes,
        })
    }
}

/// Positives on the geodesic from each key toward its query, `t ~ U[0, λ)`.
fn interpolate_query_key(
    queries: &[UnitVector],
    keys: &[UnitVector],
    cfg: &HallucinationConfig,
) -> (Vec<Vec<UnitVector>>, HallucinationReport) {
    let mut report = HallucinationReport::default();
    let positives = keys
        .iter()
        .zip(queries)
        .enumerate()
        .map(|(i, (k, q))| {
            let mut rng = crate::hallucinate::anchor_rng(cfg.seed, i);
            let mut out = Vec::with_capacity(cfg.num_positives);
            for _ in 0..cfg.num_positives {
                let t = cfg.lambda * rng.gen::<f64>();
                match slerp(k, q, t) {
                    Ok(z) => out.push(z),
                    Err(e) if e.is_degenerate_geometry() => out.push(k.clone()),
                    Err(_) => {}
                }
            }
            report.generated += out.len();
            report.retained += out.len();
            out
        })
        .collect();
    (positives, report)
}

/// Trains for `config.steps` steps on the synthetic task.
pub fn train(config: &TrainConfig, spec: &SyntheticDataSpec) -> Result<TrainRun> {
    Trainer::new(config.clone(), spec.clone())?.run()
}

/// Embeds `inputs` with `encoder`.
pub fn embed(encoder: &ToyEncoder, inputs: &[Vec<f64>]) -> Result<Vec<UnitVector>> {
    Ok(encode_forward(encoder, inputs)?.0)
}

/// kNN accuracy of `encoder` on the held-out split, using the clean
/// training pool as the labeled reference set.
pub fn evaluate_knn(
    encoder: &ToyEncoder,
    spec: &SyntheticDataSpec,
    k: usize,
    execution: Execution,
) -> Result<f64> {
    let train = train_split(spec)?;
    let test = test_split(spec)?;
    let labels = |d: &Dataset| d.labels.iter().map(|&l| l as i64).collect::<Vec<_>>();
    knn_eval_with(
        &embed(encoder, &train.inputs)?,
        &labels(&train),
        &embed(encoder, &test.inputs)?,
        &labels(&test),
        k,
        execution,
    )
}
