//! Contrastive objectives with analytic gradients.
//!
//! Gradients are returned only with respect to the query embedding. Keys,
//! queue negatives and hallucinated positives enter as borrowed constants,
//! so no gradient pathway through them exists at the type level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{dot, UnitVector};

/// Default temperature.
pub const DEFAULT_TAU: f64 = 0.07;

/// d(loss)/d(z_q). The only gradient a loss in this module produces.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryGradient(Vec<f64>);

impl QueryGradient {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub grad: QueryGradient,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::InvalidTemperature(tau));
    }
    Ok(())
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch { expected, found });
    }
    Ok(())
}

/// InfoNCE with the key as the positive class against queue negatives.
///
/// `z_q` is taken as a raw slice so the loss can be probed off the sphere.
pub fn info_nce(z_q: &[f64], z_k: &UnitVector, negatives: &[UnitVector], tau: f64) -> Result<LossValue> {
    check_tau(tau)?;
    if z_q.is_empty() || z_k.dim() == 0 {
        return Err(Error::EmptyBatch);
    }
    check_dim(z_q.len(), z_k.dim())?;
    for n in negatives {
        check_dim(z_q.len(), n.dim())?;
    }

    let positive = dot(z_q, z_k.as_slice()) / tau;
    let logits: Vec<f64> = negatives.iter().map(|n| dot(z_q, n.as_slice()) / tau).collect();
    let max = logits.iter().copied().fold(positive, f64::max);
    let pos_weight = (positive - max).exp();
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total = pos_weight + weights.iter().sum::<f64>();
    let loss = -(positive - max) + total.ln();

    // d/dz_q = (Σ_j p_j v_j − z_k) / τ with p the softmax over all logits.
    let mut grad: Vec<f64> = z_k
        .as_slice()
        .iter()
        .map(|k| (pos_weight / total - 1.0) * k / tau)
        .collect();
    for (n, w) in negatives.iter().zip(&weights) {
        let p = w / total / tau;
        grad.iter_mut().zip(n.as_slice()).for_each(|(g, x)| *g += p * x);
    }
    Ok(LossValue {
        loss,
        grad: QueryGradient(grad),
    })
}

/// Mean negative scaled similarity of the query to the hallucinated
/// positives. An empty positive set contributes nothing.
pub fn halp_loss(z_q: &[f64], positives: &[UnitVector], tau: f64) -> Result<LossValue> {
    check_tau(tau)?;
    if positives.is_empty() {
        return Ok(LossValue {
            loss: 0.0,
            grad: QueryGradient(vec![0.0; z_q.len()]),
        });
    }
    let scale = 1.0 / (positives.len() as f64 * tau);
    let mut loss = 0.0;
    let mut grad = vec![0.0; z_q.len()];
    for p in positives {
        check_dim(z_q.len(), p.dim())?;
        loss -= dot(z_q, p.as_slice());
        grad.iter_mut().zip(p.as_slice()).for_each(|(g, x)| *g -= x);
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(LossValue {
        loss: loss * scale,
        grad: QueryGradient(grad),
    })
}

/// Step-based warm-up for the hallucination weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuSchedule {
    pub warmup_steps: usize,
    pub mu_after: f64,
}

impl Default for MuSchedule {
    fn default() -> Self {
        MuSchedule {
            warmup_steps: 0,
            mu_after: 1.0,
        }
    }
}

impl MuSchedule {
    pub fn mu_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            0.0
        } else {
            self.mu_after
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_cl: f64,
    pub l_halp: f64,
    pub total: f64,
    pub mu: f64,
    pub tau: f64,
    pub num_filtered: usize,
}

/// `total = l_cl + μ·l_halp` with `μ` from the schedule at `step`.
pub fn total_loss(
    l_cl: f64,
    l_halp: f64,
    num_filtered: usize,
    step: usize,
    schedule: &MuSchedule,
    tau: f64,
) -> LossBreakdown {
    let mu = schedule.mu_at(step);
    LossBreakdown {
        l_cl,
        l_halp,
        total: l_cl + mu * l_halp,
        mu,
        tau,
        num_filtered,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::project;

    fn v(x: &[f64]) -> UnitVector {
        project(x).unwrap()
    }

    #[test]
    fn info_nce_examples() {
        let e0 = v(&[1.0, 0.0]);
        let e1 = v(&[0.0, 1.0]);
        let out = info_nce(e0.as_slice(), &e0, &[], 0.07).unwrap();
        assert!(out.loss.abs() < 1e-15);
        let out = info_nce(e0.as_slice(), &e0, std::slice::from_ref(&e1), 1.0).unwrap();
        assert!((out.loss - (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);
        assert!((out.loss - 0.313262).abs() < 1e-6);
        let out = info_nce(e1.as_slice(), &e0, std::slice::from_ref(&e0), 1.0).unwrap();
        assert!((out.loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn info_nce_errors() {
        let e0 = v(&[1.0, 0.0]);
        assert!(matches!(
            info_nce(e0.as_slice(), &e0, &[], 0.0),
            Err(Error::InvalidTemperature(_))
        ));
        assert!(matches!(info_nce(&[], &e0, &[], 1.0), Err(Error::EmptyBatch)));
        assert!(matches!(
            info_nce(&[1.0, 0.0, 0.0], &e0, &[], 1.0),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn info_nce_survives_huge_logits() {
        let e0 = v(&[1.0, 0.0]);
        let e1 = v(&[0.0, 1.0]);
        let out = info_nce(e0.as_slice(), &e0, &[e1], 1e-4).unwrap();
        assert!(out.loss.is_finite());
        assert!(out.grad.as_slice().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn halp_loss_examples() {
        let e0 = v(&[1.0, 0.0]);
        let e1 = v(&[0.0, 1.0]);
        let out = halp_loss(e0.as_slice(), std::slice::from_ref(&e0), 1.0).unwrap();
        assert_eq!(out.loss, -1.0);
        let out = halp_loss(e0.as_slice(), &[e0.clone(), e1], 1.0).unwrap();
        assert_eq!(out.loss, -0.5);
        let out = halp_loss(e0.as_slice(), &[], 1.0).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.as_slice().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn total_loss_examples() {
        let warm = MuSchedule {
            warmup_steps: 10,
            mu_after: 1.0,
        };
        assert_eq!(total_loss(0.3, -0.5, 4, 3, &warm, 0.07).total, 0.3);
        let b = total_loss(0.3, -0.5, 4, 10, &warm, 0.07);
        assert!((b.total + 0.2).abs() < 1e-15);
        assert_eq!((b.mu, b.num_filtered), (1.0, 4));
        let ntu120 = MuSchedule {
            warmup_steps: 0,
            mu_after: 2.0,
        };
        assert_eq!(total_loss(0.3, -0.5, 1, 0, &ntu120, 0.07).total, 0.3 + 2.0 * -0.5);
    }
}
