//! Training-free feature propagation: `F_k = Â^k X`, fused as `Σ α_k F_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::matrix::FeatureMatrix;

pub const DEFAULT_HOPS: usize = 2;

/// Non-negative hop weights `α_0..α_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HopWeights(Vec<f64>);

impl HopWeights {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidInput("hop weights need at least alpha_0".into()));
        }
        if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidInput(format!(
                "hop weights must be finite and non-negative: {alphas:?}"
            )));
        }
        if alphas.iter().all(|&a| a == 0.0) {
            return Err(Error::InvalidInput("hop weights are all zero".into()));
        }
        Ok(HopWeights(alphas))
    }

    /// `α_k = 1 / (K + 1)` for `k = 0..=K`.
    pub fn uniform(max_hop: usize) -> Self {
        HopWeights(vec![1.0 / (max_hop + 1) as f64; max_hop + 1])
    }

    pub fn max_hop(&self) -> usize {
        self.0.len() - 1
    }

    pub fn alphas(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for HopWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        HopWeights::new(v)
    }
}

impl From<HopWeights> for Vec<f64> {
    fn from(w: HopWeights) -> Self {
        w.0
    }
}

/// `[X, ÂX, Â²X, …, Â^K X]` by repeated sparse products.
pub fn propagate_hops(a_hat: &NormalizedAdjacency, x: &FeatureMatrix, max_hop: usize) -> Result<Vec<FeatureMatrix>> {
    if a_hat.n() != x.n() {
        return Err(Error::DimensionMismatch(format!(
            "operator has {} nodes, features have {} rows",
            a_hat.n(),
            x.n()
        )));
    }
    let mut hops = Vec::with_capacity(max_hop + 1);
    hops.push(x.clone());
    for k in 1..=max_hop {
        let next = a_hat.mul_dense(&hops[k - 1])?;
        hops.push(next);
    }
    Ok(hops)
}

/// Elementwise `Σ_k α_k · hops[k]`. Zero-weight hops are skipped entirely.
pub fn fuse(hops: &[FeatureMatrix], w: &HopWeights) -> Result<FeatureMatrix> {
    if hops.len() != w.0.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} hop matrices for {} weights",
            hops.len(),
            w.0.len()
        )));
    }
    let (n, d) = (hops[0].n(), hops[0].d());
    if let Some(bad) = hops.iter().position(|h| h.n() != n || h.d() != d) {
        return Err(Error::DimensionMismatch(format!(
            "hop {bad} is {}x{}, expected {n}x{d}",
            hops[bad].n(),
            hops[bad].d()
        )));
    }
    let mut acc: Option<Vec<f64>> = None;
    for (h, &a) in hops.iter().zip(&w.0) {
        if a == 0.0 {
            continue;
        }
        match acc.as_mut() {
            None => acc = Some(h.values().iter().map(|v| a * v).collect()),
            Some(acc) => {
                for (o, v) in acc.iter_mut().zip(h.values()) {
                    *o += a * v;
                }
            }
        }
    }
    FeatureMatrix::new(n, d, acc.expect("at least one positive weight"))
}

/// Propagates for `w.max_hop()` hops and fuses.
pub fn propagate(a_hat: &NormalizedAdjacency, x: &FeatureMatrix, w: &HopWeights) -> Result<FeatureMatrix> {
    let hops = propagate_hops(a_hat, x, w.max_hop())?;
    fuse(&hops, w)
}
