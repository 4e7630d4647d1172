//! Exact stationary ages along a fixed relay path.
//!
//! When information about a source flows to a target along a unique directed
//! path, and each hop forwards the item independently with a fixed per-slot
//! probability, the stationary age at the target is a sum of independent
//! geometric slot counts, one per hop. This module builds that hop
//! specification from a topology, a policy and a channel, and evaluates its
//! moments, its pmf, and explicit tail bounds.

use crate::error::{Error, Result};
use crate::model::{ChannelModel, NodeId, PolicyTable, Topology};

/// Mean and variance of a scalar age distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// A sum of independent geometric random variables on `{1, 2, ...}`, one per
/// hop, with per-hop success probabilities `probs`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeomSumSpec {
    probs: Vec<f64>,
}

/// Tabulated pmf of a [`GeomSumSpec`] on `1..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeomSumPmf {
    min_support: u64,
    k_max: u64,
    probs: Vec<f64>,
    tail_mass: f64,
    tail_bound: f64,
}

impl GeomSumSpec {
    /// Per-hop success probabilities, each in `(0, 1]`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptySpec);
        }
        for &p in &probs {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidProbability {
                    name: "hop success probability",
                    value: p,
                    range: "(0, 1]",
                });
            }
        }
        Ok(Self { probs })
    }

    pub fn hops(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Sum of per-hop geometric moments: mean `1 / p`, variance
    /// `(1 - p) / p^2` per hop.
    pub fn moments(&self) -> Moments {
        let mean = self.probs.iter().map(|p| 1.0 / p).sum();
        let variance = self.probs.iter().map(|p| (1.0 - p) / (p * p)).sum();
        Moments { mean, variance }
    }

    /// Exact pmf on `1..=k_max` by convolving one hop at a time. The
    /// recurrence for adding a hop with success probability `p` is
    /// `next[k] = p * cur[k - 1] + (1 - p) * next[k - 1]`.
    pub fn pmf(&self, k_max: u64) -> Result<GeomSumPmf> {
        let hops = self.hops() as u64;
        if k_max < hops {
            return Err(Error::BoxTooSmall {
                k: k_max,
                min: hops,
            });
        }
        let len = k_max as usize;
        let mut cur = vec![0.0f64; len];
        let p0 = self.probs[0];
        let mut geom = p0;
        for slot in cur.iter_mut() {
            *slot = geom;
            geom *= 1.0 - p0;
        }
        for &p in &self.probs[1..] {
            let mut next = vec![0.0f64; len];
            for k in 1..len {
                next[k] = p * cur[k - 1] + (1.0 - p) * next[k - 1];
            }
            cur = next;
        }
        let tail_mass = (1.0 - cur.iter().sum::<f64>()).max(0.0);
        Ok(GeomSumPmf {
            min_support: hops,
            k_max,
            probs: cur,
            tail_mass,
            tail_bound: self.tail_bound(k_max),
        })
    }

    /// Upper bound on `P(sum > k_max)`. The sum is stochastically dominated
    /// by replacing every hop probability with the smallest one, `p`; the
    /// dominating sum exceeds `k_max` exactly when fewer than `hops`
    /// successes occur in `k_max` independent trials, so the bound is the
    /// binomial lower tail `sum_{l < hops} C(k_max, l) p^l (1-p)^(k_max-l)`.
    pub fn tail_bound(&self, k_max: u64) -> f64 {
        let hops = self.hops() as u64;
        if k_max < hops {
            return 1.0;
        }
        let p = self.probs.iter().copied().fold(f64::INFINITY, f64::min);
        if p >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - p;
        let mut term = q.powi(k_max as i32);
        let mut total = term;
        for l in 0..hops - 1 {
            term *= (k_max - l) as f64 / (l + 1) as f64 * (p / q);
            total += term;
        }
        total.min(1.0)
    }
}

impl GeomSumPmf {
    pub fn min_support(&self) -> u64 {
        self.min_support
    }

    pub fn k_max(&self) -> u64 {
        self.k_max
    }

    /// `P(sum = k)`; `None` beyond the tabulated range.
    pub fn prob(&self, k: u64) -> Option<f64> {
        if k == 0 {
            return Some(0.0);
        }
        if k > self.k_max {
            return None;
        }
        Some(self.probs[k as usize - 1])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(idx, &p)| (idx as u64 + 1, p))
    }

    /// Mass not captured by the table, `1 - sum of tabulated probabilities`.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Analytic upper bound on the tail, always at least [`Self::tail_mass`]
    /// up to rounding.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }
}

/// Hop specification for the unique path from `source` to `target` in a
/// forest. Hop `u -> v` succeeds in a slot when `u` broadcasts item
/// `source` and the edge delivers, so its probability is
/// `policy.prob(u, source) * channel.success_prob((u, v))`.
pub fn tree_path_spec(
    topology: &Topology,
    policy: &PolicyTable,
    channel: &ChannelModel,
    source: NodeId,
    target: NodeId,
) -> Result<GeomSumSpec> {
    topology.check_forest()?;
    channel.validate_for(topology)?;
    let n = topology.node_count();
    if policy.node_count() != n {
        return Err(Error::InvalidConfig(format!(
            "policy covers {} nodes, topology has {n}",
            policy.node_count()
        )));
    }
    for node in [source, target] {
        if node < 1 || node > n {
            return Err(Error::NodeOutOfRange { node, max: n });
        }
    }
    if source == target {
        return Err(Error::InvalidParameter {
            name: "target",
            reason: "source and target must differ".into(),
        });
    }
    // In a forest the directed path is unique if it exists; walk back from
    // the target over in-edges reachable from the source.
    let mut prev = vec![0usize; n + 1];
    let mut visited = vec![false; n + 1];
    visited[source] = true;
    let out = topology.out_neighbours();
    let mut stack = vec![source];
    while let Some(u) = stack.pop() {
        for &v in &out[u] {
            if !visited[v] {
                visited[v] = true;
                prev[v] = u;
                stack.push(v);
            }
        }
    }
    if !visited[target] {
        return Err(Error::Unreachable {
            from: source,
            to: target,
        });
    }
    let mut hops = Vec::new();
    let mut v = target;
    while v != source {
        let u = prev[v];
        hops.push(policy.prob(u, source) * channel.success_prob((u, v)));
        v = u;
    }
    hops.reverse();
    GeomSumSpec::new(hops).map_err(|e| match e {
        Error::InvalidProbability { value, .. } => Error::InvalidPolicy(format!(
            "a hop on the path {source} -> {target} has zero or invalid per-slot \
             probability {value}"
        )),
        other => other,
    })
}
