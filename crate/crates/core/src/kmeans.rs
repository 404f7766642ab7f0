//! k-means on the hypersphere under the geodesic metric.
//!
//! Assignment uses the largest cosine similarity, centroids are Karcher
//! (Fréchet) means computed by Riemannian gradient descent, and the objective
//! is the sum of squared geodesic distances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::sphere::{angle_between, exp_map, log_map, project, TangentVector, UnitVector};

/// Centroid initialization strategy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KMeansInit {
    /// Distance-weighted seeding.
    #[default]
    PlusPlus,
    /// Caller supplies the initial centroids through [`fit_from`].
    Provided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub tolerance: f64,
    pub step_size: f64,
    pub max_iterations: usize,
    /// Cap on Karcher-mean steps per centroid update.
    pub max_mean_steps: usize,
    pub seed: u64,
    pub init: KMeansInit,
    /// Reuse the previous prototypes as the starting point when refitting
    /// during training.
    pub warm_start: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 20,
            tolerance: 1e-3,
            step_size: 1.0,
            max_iterations: 100,
            max_mean_steps: 32,
            seed: 0,
            init: KMeansInit::PlusPlus,
            warm_start: true,
            execution: Execution::default(),
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::ConfigInvalid(msg.to_string()));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return bad("step_size must lie in (0, 1]");
        }
        if self.max_iterations == 0 || self.max_mean_steps == 0 {
            return bad("iteration caps must be positive");
        }
        Ok(())
    }
}

/// Cluster centroids plus fit diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSet {
    pub prototypes: Vec<UnitVector>,
    /// Sum of squared geodesic distances from each point to its centroid.
    pub inertia: f64,
    pub iterations_run: usize,
    pub converged: bool,
    /// Inertia after every outer iteration.
    pub inertia_history: Vec<f64>,
}

impl PrototypeSet {
    /// Wraps externally supplied prototypes (for example loaded from disk).
    pub fn from_prototypes(prototypes: Vec<UnitVector>) -> Result<Self> {
        if prototypes.is_empty() {
            return Err(Error::EmptyPrototypeSet);
        }
        check_same_dim(&prototypes)?;
        Ok(PrototypeSet {
            prototypes,
            inertia: 0.0,
            iterations_run: 0,
            converged: true,
            inertia_history: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.first().map_or(0, UnitVector::dim)
    }
}

/// Result of a Karcher-mean iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct KarcherMean {
    pub point: UnitVector,
    pub iterations: usize,
    /// False when `max_iterations` was hit before the update fell below
    /// tolerance.
    pub converged: bool,
}

fn check_same_dim(points: &[UnitVector]) -> Result<usize> {
    let dim = points.first().map_or(0, UnitVector::dim);
    for p in points {
        if p.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
    }
    Ok(dim)
}

#[inline]
fn sq_dist(a: &UnitVector, b: &UnitVector) -> f64 {
    let d = angle_between(a.as_slice(), b.as_slice());
    d * d
}

/// Distance-weighted seeding: the first centroid uniformly at random, each
/// later one with probability proportional to its squared geodesic distance
/// to the nearest centroid chosen so far.
pub fn init_plusplus(points: &[UnitVector], k: usize, seed: u64) -> Result<Vec<UnitVector>> {
    if k == 0 || points.len() < k {
        return Err(Error::TooFewPoints {
            needed: k.max(1),
            available: points.len(),
        });
    }
    check_same_dim(points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; points.len()];
    let first = rng.gen_range(0..points.len());
    chosen[first] = true;
    let mut seeds = vec![points[first].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    nearest[first] = 0.0;

    while seeds.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in nearest.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if target < acc {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // Everything left duplicates a chosen point.
            let free: Vec<usize> = (0..points.len()).filter(|&i| !chosen[i]).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen[pick] = true;
        seeds.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = if chosen[i] {
                0.0
            } else {
                nearest[i].min(sq_dist(p, &points[pick]))
            };
        }
    }
    Ok(seeds)
}

pub(crate) fn nearest_index(point: &UnitVector, centroids: &[UnitVector]) -> usize {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let s = point.dot(c);
        if s > best_sim {
            best_sim = s;
            best = j;
        }
    }
    best
}

/// Labels each point with its most similar centroid; ties go to the lowest
/// index.
pub fn assign(points: &[UnitVector], centroids: &[UnitVector]) -> Result<Vec<usize>> {
    assign_with(points, centroids, Execution::Sequential)
}

pub fn assign_with(
    points: &[UnitVector],
    centroids: &[UnitVector],
    execution: Execution,
) -> Result<Vec<usize>> {
    if centroids.is_empty() {
        return Err(Error::EmptyPrototypeSet);
    }
    let dim = check_same_dim(centroids)?;
    for p in points {
        if p.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
    }
    Ok(exec::map_indexed(execution, points, |_, p| {
        nearest_index(p, centroids)
    }))
}

/// Karcher mean of `points`, started from their normalized Euclidean mean.
pub fn frechet_mean(
    points: &[UnitVector],
    tolerance: f64,
    step_size: f64,
    max_iterations: usize,
) -> Result<KarcherMean> {
    if points.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let dim = check_same_dim(points)?;
    let mut sum = vec![0.0; dim];
    for p in points {
        sum.iter_mut().zip(p.as_slice()).for_each(|(s, x)| *s += x);
    }
    let start = project(&sum).unwrap_or_else(|_| points[0].clone());
    frechet_mean_from(points, start, tolerance, step_size, max_iterations)
}

/// Karcher mean iteration `m <- exp_m(step · mean_i log_m(x_i))` from a
/// given starting point.
pub fn frechet_mean_from(
    points: &[UnitVector],
    start: UnitVector,
    tolerance: f64,
    step_size: f64,
    max_iterations: usize,
) -> Result<KarcherMean> {
    if points.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut mean = start;
    let inv_n = 1.0 / points.len() as f64;
    for iteration in 1..=max_iterations {
        let mut avg = vec![0.0; mean.dim()];
        for p in points {
            let v = log_map(&mean, p).map_err(|e| match e {
                Error::AntipodalPoints { .. } => Error::AntipodalConfiguration,
                other => other,
            })?;
            avg.iter_mut()
                .zip(v.components())
                .for_each(|(a, c)| *a += c * inv_n);
        }
        let update = TangentVector::new(mean.clone(), &avg)?;
        if update.norm() < tolerance {
            return Ok(KarcherMean {
                point: mean,
                iterations: iteration,
                converged: true,
            });
        }
        mean = exp_map(&mean, &update.scale(step_size))?;
    }
    Ok(KarcherMean {
        point: mean,
        iterations: max_iterations,
        converged: false,
    })
}

fn cluster_cost(points: &[UnitVector], members: &[usize], centroid: &UnitVector) -> f64 {
    members.iter().map(|&i| sq_dist(&points[i], centroid)).sum()
}

fn inertia(points: &[UnitVector], labels: &[usize], centroids: &[UnitVector]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

/// Fits `config.k` prototypes with distance-weighted initialization.
pub fn fit(points: &[UnitVector], config: &KMeansConfig) -> Result<PrototypeSet> {
    if config.init == KMeansInit::Provided {
        return Err(Error::ConfigInvalid(
            "init = provided requires initial centroids".into(),
        ));
    }
    config.validate()?;
    let initial = init_plusplus(points, config.k, config.seed)?;
    run(points, initial, config)
}

/// Fits starting from the given centroids (warm start).
pub fn fit_from(
    points: &[UnitVector],
    initial: &[UnitVector],
    config: &KMeansConfig,
) -> Result<PrototypeSet> {
    config.validate()?;
    if initial.len() != config.k {
        return Err(Error::ConfigInvalid(format!(
            "{} initial centroids supplied for k = {}",
            initial.len(),
            config.k
        )));
    }
    if points.len() < config.k {
        return Err(Error::TooFewPoints {
            needed: config.k,
            available: points.len(),
        });
    }
    run(points, initial.to_vec(), config)
}

fn run(
    points: &[UnitVector],
    mut centroids: Vec<UnitVector>,
    config: &KMeansConfig,
) -> Result<PrototypeSet> {
    let k = config.k;
    if points.len() < k {
        return Err(Error::TooFewPoints {
            needed: k,
            available: points.len(),
        });
    }
    let mut history = Vec::new();
    let mut previous = f64::INFINITY;
    let mut converged = false;
    let mut iterations_run = 0;

    for iteration in 1..=config.max_iterations {
        iterations_run = iteration;
        let before = centroids.clone();
        let mut labels = assign_with(points, &centroids, config.execution)?;
        reseed_empty(points, &mut labels, &mut centroids);

        let mut members = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let updated = exec::map_indexed(config.execution, &members, |j, idx| {
            update_centroid(points, idx, &centroids[j], config)
        });
        for (c, u) in centroids.iter_mut().zip(updated) {
            *c = u?;
        }

        let current = inertia(points, &labels, &centroids);
        if current > previous {
            // Only reachable through rounding: every move is non-increasing
            // in exact arithmetic. Keep the last accepted state.
            centroids = before;
            converged = true;
            break;
        }
        history.push(current);
        if previous - current < config.tolerance {
            converged = true;
            break;
        }
        previous = current;
    }

    let labels = assign_with(points, &centroids, config.execution)?;
    let final_inertia = inertia(points, &labels, &centroids);
    Ok(PrototypeSet {
        prototypes: centroids,
        inertia: final_inertia,
        iterations_run,
        converged,
        inertia_history: history,
    })
}

/// Moves the centroid to the Karcher mean of its members, keeping the old
/// centroid if the capped iteration did not lower the cluster cost.
fn update_centroid(
    points: &[UnitVector],
    members: &[usize],
    current: &UnitVector,
    config: &KMeansConfig,
) -> Result<UnitVector> {
    if members.is_empty() {
        return Ok(current.clone());
    }
    let cluster: Vec<UnitVector> = members.iter().map(|&i| points[i].clone()).collect();
    let candidate = match frechet_mean_from(
        &cluster,
        current.clone(),
        config.tolerance,
        config.step_size,
        config.max_mean_steps,
    ) {
        Ok(mean) => mean.point,
        Err(Error::AntipodalConfiguration) => return Ok(current.clone()),
        Err(e) => return Err(e),
    };
    if cluster_cost(points, members, &candidate) <= cluster_cost(points, members, current) {
        Ok(candidate)
    } else {
        Ok(current.clone())
    }
}

/// Gives every empty cluster the point farthest from its own centroid,
/// taken from a cluster that can spare it.
fn reseed_empty(points: &[UnitVector], labels: &mut [usize], centroids: &mut [UnitVector]) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_dist = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[labels[i]]);
            if d > far_dist {
                far_dist = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { return };
        sizes[labels[i]] -= 1;
        labels[i] = j;
        sizes[j] = 1;
        centroids[j] = points[i].clone();
    }
}
