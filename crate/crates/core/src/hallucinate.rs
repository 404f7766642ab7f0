//! Hard latent positive generation.
//!
//! For an anchor key `z_k` whose closest prototype is `P*`, a prototype
//! `P_sel` is picked and the anchor is walked along the geodesic toward it.
//! The walk may go as far as the point where `P*` and `P_sel` become equally
//! similar; that boundary has a closed form. Positives are sampled uniformly
//! short of `λ` times that boundary and then filtered.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::kmeans::nearest_index;
use crate::sphere::{checked_angle, combine_unit, slerp_weights, UnitVector};

/// Minimum `|z_k · (P* − P_sel)|` for which the boundary is well defined.
pub const EQUIDISTANT_EPS: f64 = 1e-10;

/// Finest grid spacing the reference solver refuses to go above.
pub const MAX_ORACLE_RESOLUTION: f64 = 1e-4;

/// Post-generation filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Keep a candidate iff its closest prototype is the anchor's.
    #[default]
    Rank,
    /// Keep iff `z_q·z ≥ z_q·z_k`.
    Variant1,
    /// Keep iff `z_k·z ≥ z_k·P_sel`.
    Variant2,
    None,
}

impl std::str::FromStr for FilterMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rank" => Ok(FilterMode::Rank),
            "variant1" => Ok(FilterMode::Variant1),
            "variant2" => Ok(FilterMode::Variant2),
            "none" => Ok(FilterMode::None),
            other => Err(format!(
                "unknown filter {other:?} (expected rank, variant1, variant2 or none)"
            )),
        }
    }
}

/// How often a target prototype is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrototypeSelection {
    /// One target prototype per anchor; all its positives share a geodesic.
    #[default]
    PerAnchor,
    /// A fresh target prototype for every generated positive.
    PerPositive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HallucinationConfig {
    /// Positives generated per anchor before filtering.
    pub num_positives: usize,
    /// Hardness cap: positives are drawn from `[0, lambda · t*)`.
    pub lambda: f64,
    pub filter: FilterMode,
    /// Never walk toward the anchor's own closest prototype.
    pub exclude_own_prototype: bool,
    pub selection: PrototypeSelection,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for HallucinationConfig {
    fn default() -> Self {
        HallucinationConfig {
            num_positives: 100,
            lambda: 0.8,
            filter: FilterMode::Rank,
            exclude_own_prototype: true,
            selection: PrototypeSelection::PerAnchor,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl HallucinationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_positives == 0 {
            return Err(Error::ConfigInvalid("num_positives must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::ConfigInvalid(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Generation and filtering counts for one batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HallucinationReport {
    pub generated: usize,
    pub retained: usize,
    /// Boundary parameter of every geodesic walked, in generation order.
    pub t_star_values: Vec<f64>,
    /// Anchor/target pairs dropped for degenerate geometry.
    pub skipped_degenerate: usize,
}

impl HallucinationReport {
    pub fn retention_rate(&self) -> f64 {
        if self.generated == 0 {
            0.0
        } else {
            self.retained as f64 / self.generated as f64
        }
    }

    /// Mean of `t_star_values`, or 0 when there are none.
    pub fn t_star_mean(&self) -> f64 {
        if self.t_star_values.is_empty() {
            0.0
        } else {
            self.t_star_values.iter().sum::<f64>() / self.t_star_values.len() as f64
        }
    }

    pub fn merge(&mut self, other: HallucinationReport) {
        self.generated += other.generated;
        self.retained += other.retained;
        self.t_star_values.extend(other.t_star_values);
        self.skipped_degenerate += other.skipped_degenerate;
    }
}

/// Retained positives per anchor, in anchor order.
#[derive(Clone, Debug, PartialEq)]
pub struct HallucinatedBatch {
    pub positives: Vec<Vec<UnitVector>>,
    pub report: HallucinationReport,
}

fn check_dim(expected: usize, v: &UnitVector) -> Result<()> {
    if v.dim() != expected {
        return Err(Error::DimMismatch {
            expected,
            found: v.dim(),
        });
    }
    Ok(())
}

fn check_prototypes(protos: &[UnitVector]) -> Result<usize> {
    let first = protos.first().ok_or(Error::EmptyPrototypeSet)?;
    for p in protos {
        check_dim(first.dim(), p)?;
    }
    Ok(first.dim())
}

/// Index of the prototype most similar to `z`; ties go to the lowest index.
pub fn closest_prototype(z: &UnitVector, protos: &[UnitVector]) -> Result<usize> {
    let dim = check_prototypes(protos)?;
    check_dim(dim, z)?;
    Ok(nearest_index(z, protos))
}

/// `κ = (1 − P_sel·P*) / (z_k·(P* − P_sel))`.
pub fn kappa(z_k: &UnitVector, p_star: &UnitVector, p_sel: &UnitVector) -> Result<f64> {
    check_dim(z_k.dim(), p_star)?;
    check_dim(z_k.dim(), p_sel)?;
    let denominator = z_k.dot(p_star) - z_k.dot(p_sel);
    if denominator.abs() <= EQUIDISTANT_EPS {
        return Err(Error::EquidistantAnchor { denominator });
    }
    if denominator < 0.0 {
        return Err(Error::AnchorNotClosest);
    }
    Ok((1.0 - p_sel.dot(p_star)) / denominator)
}

/// Closed-form position `t*` on the geodesic from `z_k` to `p_sel` where
/// `p_star` and `p_sel` become equally similar.
///
/// Uses `atan2(sin Ω, κ + cos Ω) / Ω` so the answer stays on the right branch
/// when `κ + cos Ω ≤ 0`.
pub fn t_star(z_k: &UnitVector, p_star: &UnitVector, p_sel: &UnitVector) -> Result<f64> {
    let k = kappa(z_k, p_star, p_sel)?;
    let omega = checked_angle(z_k, p_sel)?;
    Ok(t_star_from(k, omega))
}

#[inline]
fn t_star_from(kappa: f64, omega: f64) -> f64 {
    let angle = omega.sin().atan2(kappa + omega.cos());
    (angle / omega).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Which constraint set the grid solver enforces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMode {
    /// Only `sim(z, P*) ≥ sim(z, P_sel)`.
    TwoProto,
    /// `sim(z, P*) ≥ sim(z, P)` for every prototype.
    FullRank,
}

/// Reference solver: the largest grid point `t ∈ [0, 1]` at which the
/// constraint holds along the geodesic from `z_k` to `protos[p_sel]`.
pub fn t_star_grid_oracle(
    z_k: &UnitVector,
    protos: &[UnitVector],
    p_sel: usize,
    mode: OracleMode,
    resolution: f64,
) -> Result<f64> {
    if !(resolution > 0.0 && resolution <= MAX_ORACLE_RESOLUTION) {
        return Err(Error::ConfigInvalid(format!(
            "grid resolution must lie in (0, {MAX_ORACLE_RESOLUTION}], got {resolution}"
        )));
    }
    let p_star = closest_prototype(z_k, protos)?;
    let sel = protos.get(p_sel).ok_or(Error::PrototypeIndex {
        index: p_sel,
        len: protos.len(),
    })?;
    let omega = checked_angle(z_k, sel)?;

    let rivals: Vec<usize> = match mode {
        OracleMode::TwoProto => vec![p_sel],
        OracleMode::FullRank => (0..protos.len()).collect(),
    };
    // The path is a combination of z_k and P_sel, so every similarity along
    // it is the same combination of two precomputed inner products.
    let from_anchor: Vec<f64> = rivals.iter().map(|&j| z_k.dot(&protos[j])).collect();
    let from_sel: Vec<f64> = rivals.iter().map(|&j| sel.dot(&protos[j])).collect();
    let star_anchor = z_k.dot(&protos[p_star]);
    let star_sel = sel.dot(&protos[p_star]);

    let steps = (1.0 / resolution).ceil() as usize;
    let mut best = None;
    for i in 0..=steps {
        let t = (i as f64 * resolution).min(1.0);
        let (wa, wb) = slerp_weights(omega, t);
        let star = wa * star_anchor + wb * star_sel;
        let feasible = from_anchor
            .iter()
            .zip(&from_sel)
            .all(|(a, b)| star >= wa * a + wb * b);
        if feasible {
            best = Some(t);
        } else if i == 0 {
            return Err(Error::NoFeasiblePoint);
        }
    }
    best.ok_or(Error::NoFeasiblePoint)
}

/// Draws a hardness position uniformly from `[0, lambda · t_star)`.
pub fn sample_t<R: Rng + ?Sized>(t_star: f64, lambda: f64, rng: &mut R) -> f64 {
    lambda * t_star * rng.gen::<f64>()
}

fn check_all(expected: usize, candidates: &[UnitVector]) -> Result<()> {
    candidates.iter().try_for_each(|c| check_dim(expected, c))
}

/// Keeps the candidates whose closest prototype is `protos[p_star]`.
pub fn rank_filter(
    candidates: Vec<UnitVector>,
    protos: &[UnitVector],
    p_star: usize,
) -> Result<Vec<UnitVector>> {
    let dim = check_prototypes(protos)?;
    check_all(dim, &candidates)?;
    Ok(candidates
        .into_iter()
        .filter(|z| nearest_index(z, protos) == p_star)
        .collect())
}

/// Keeps candidates at least as similar to the query as the key is.
pub fn filter_variant1(
    candidates: Vec<UnitVector>,
    z_q: &UnitVector,
    z_k: &UnitVector,
) -> Result<Vec<UnitVector>> {
    check_dim(z_q.dim(), z_k)?;
    check_all(z_q.dim(), &candidates)?;
    let bar = z_q.dot(z_k);
    Ok(candidates.into_iter().filter(|z| z_q.dot(z) >= bar).collect())
}

/// Keeps candidates at least as similar to the key as the target prototype
/// is.
pub fn filter_variant2(
    candidates: Vec<UnitVector>,
    z_k: &UnitVector,
    p_sel: &UnitVector,
) -> Result<Vec<UnitVector>> {
    check_dim(z_k.dim(), p_sel)?;
    check_all(z_k.dim(), &candidates)?;
    let bar = p_sel.dot(z_k);
    Ok(candidates.into_iter().filter(|z| z_k.dot(z) >= bar).collect())
}

/// Independent RNG stream for anchor `index` under `seed`.
pub fn anchor_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn pick_target<R: Rng>(rng: &mut R, n: usize, p_star: usize, exclude_own: bool) -> usize {
    if exclude_own {
        let j = rng.gen_range(0..n - 1);
        if j >= p_star {
            j + 1
        } else {
            j
        }
    } else {
        rng.gen_range(0..n)
    }
}

/// One anchor's walk toward one target prototype.
struct Geodesic<'a> {
    z_k: &'a UnitVector,
    target: usize,
    omega: f64,
    t_star: f64,
}

impl Geodesic<'_> {
    fn point(&self, protos: &[UnitVector], t: f64) -> (UnitVector, f64, f64) {
        if t == 0.0 {
            return (self.z_k.clone(), 1.0, 0.0);
        }
        let (wa, wb) = slerp_weights(self.omega, t);
        (combine_unit(self.z_k, wa, &protos[self.target], wb), wa, wb)
    }
}

fn walk_to<'a>(
    z_k: &'a UnitVector,
    protos: &[UnitVector],
    p_star: usize,
    target: usize,
    report: &mut HallucinationReport,
) -> Option<Geodesic<'a>> {
    let path = t_star(z_k, &protos[p_star], &protos[target])
        .and_then(|t| checked_angle(z_k, &protos[target]).map(|omega| (t, omega)));
    match path {
        Ok((t_star, omega)) => {
            report.t_star_values.push(t_star);
            Some(Geodesic {
                z_k,
                target,
                omega,
                t_star,
            })
        }
        Err(_) => {
            report.skipped_degenerate += 1;
            None
        }
    }
}

struct AnchorOutcome {
    positives: Vec<UnitVector>,
    report: HallucinationReport,
}

fn hallucinate_anchor(
    index: usize,
    z_k: &UnitVector,
    z_q: Option<&UnitVector>,
    protos: &[UnitVector],
    // z_k · P_j for every prototype, shared by every candidate on a path.
    anchor_sims: &[f64],
    config: &HallucinationConfig,
) -> AnchorOutcome {
    let mut rng = anchor_rng(config.seed, index);
    let n = protos.len();
    let p_star = nearest_index(z_k, protos);
    let mut report = HallucinationReport::default();
    let mut positives = Vec::new();

    let per_anchor = match config.selection {
        PrototypeSelection::PerAnchor => {
            let target = pick_target(&mut rng, n, p_star, config.exclude_own_prototype);
            match walk_to(z_k, protos, p_star, target, &mut report) {
                Some(g) => Some(g),
                None => return AnchorOutcome { positives, report },
            }
        }
        PrototypeSelection::PerPositive => None,
    };

    let mut target_sims = vec![0.0; n];
    let mut cached_target = usize::MAX;
    for _ in 0..config.num_positives {
        let fresh;
        let path = match &per_anchor {
            Some(g) => g,
            None => {
                let target = pick_target(&mut rng, n, p_star, config.exclude_own_prototype);
                match walk_to(z_k, protos, p_star, target, &mut report) {
                    Some(g) => {
                        fresh = g;
                        &fresh
                    }
                    None => continue,
                }
            }
        };
        let t = sample_t(path.t_star, config.lambda, &mut rng);
        let (z, wa, wb) = path.point(protos, t);
        report.generated += 1;

        let keep = match config.filter {
            FilterMode::None => true,
            FilterMode::Rank => {
                if cached_target != path.target {
                    for (s, p) in target_sims.iter_mut().zip(protos) {
                        *s = protos[path.target].dot(p);
                    }
                    cached_target = path.target;
                }
                // Similarities of the unnormalized combination wa·z_k + wb·P_sel;
                // a positive rescaling leaves the argmax unchanged.
                let mut best = 0;
                let mut best_sim = f64::NEG_INFINITY;
                for (j, (a, b)) in anchor_sims.iter().zip(&target_sims).enumerate() {
                    let s = wa * a + wb * b;
                    if s > best_sim {
                        best_sim = s;
                        best = j;
                    }
                }
                best == p_star
            }
            FilterMode::Variant1 => {
                let z_q = z_q.expect("queries checked before generation");
                z_q.dot(&z) >= z_q.dot(z_k)
            }
            FilterMode::Variant2 => z_k.dot(&z) >= protos[path.target].dot(z_k),
        };
        if keep {
            report.retained += 1;
            positives.push(z);
        }
    }
    AnchorOutcome { positives, report }
}

/// Generates and filters `config.num_positives` positives for every key.
///
/// `queries` is required by [`FilterMode::Variant1`] and ignored otherwise.
/// Anchors with degenerate geometry produce no positives and are counted in
/// `skipped_degenerate`. Each anchor draws from its own RNG stream derived
/// from `(config.seed, anchor index)`, so the output does not depend on the
/// execution mode.
pub fn hallucinate_batch(
    keys: &[UnitVector],
    queries: Option<&[UnitVector]>,
    protos: &[UnitVector],
    config: &HallucinationConfig,
) -> Result<HallucinatedBatch> {
    config.validate()?;
    let dim = check_prototypes(protos)?;
    if config.exclude_own_prototype && protos.len() < 2 {
        return Err(Error::SinglePrototype);
    }
    check_all(dim, keys)?;
    let queries = match (config.filter, queries) {
        (FilterMode::Variant1, None) => {
            return Err(Error::ConfigInvalid(
                "variant1 filter needs the query embeddings".into(),
            ))
        }
        (_, Some(q)) => {
            if q.len() != keys.len() {
                return Err(Error::ConfigInvalid(format!(
                    "{} queries for {} keys",
                    q.len(),
                    keys.len()
                )));
            }
            check_all(dim, q)?;
            Some(q)
        }
        (_, None) => None,
    };

    let outcomes = exec::map_indexed(config.execution, keys, |i, z_k| {
        let anchor_sims: Vec<f64> = protos.iter().map(|p| z_k.dot(p)).collect();
        hallucinate_anchor(
            i,
            z_k,
            queries.map(|q| &q[i]),
            protos,
            &anchor_sims,
            config,
        )
    });

    let mut report = HallucinationReport::default();
    let mut positives = Vec::with_capacity(keys.len());
    for outcome in outcomes {
        report.merge(outcome.report);
        positives.push(outcome.positives);
    }
    Ok(HallucinatedBatch { positives, report })
}
