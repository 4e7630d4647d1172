//! Exact stationary ages in a star: one hub broadcasts, several receivers
//! listen over possibly correlated channels.
//!
//! The reception pattern of a slot is a random subset `B` of receivers (the
//! ones that obtain the hub's fresh item that slot), drawn independently
//! across slots from a distribution `lambda` over subsets. Ages then follow
//! by looking backwards: receiver `d` has age `a` exactly when it received
//! `a` slots ago and not since. [`star_joint_algorithm1`] turns that
//! observation into a recursion over the joint age vector, and the
//! two-receiver closed forms provide independent checks.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::joint::JointPmf;
use crate::model::{NodeId, PROB_SUM_TOL};

/// `base^exp` with an exact integer exponent.
pub(crate) fn fpow(base: f64, exp: u64) -> f64 {
    match i32::try_from(exp) {
        Ok(e) => base.powi(e),
        Err(_) => base.powf(exp as f64),
    }
}

/// Distribution of the per-slot reception subset. `nodes` lists the receiver
/// ids in increasing order; `mass[m]` is the probability that exactly the
/// receivers whose bit is set in `m` receive.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTable {
    nodes: Vec<NodeId>,
    mass: Vec<f64>,
}

impl LambdaTable {
    /// Builds a table from an explicit subset distribution. Bit `b` of a
    /// mask refers to `nodes[b]` after sorting; `mass` must have length
    /// `2^nodes.len()` and sum to one.
    pub fn new(mut nodes: Vec<NodeId>, mass: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptySubset);
        }
        let unsorted = nodes.windows(2).any(|w| w[0] >= w[1]);
        if unsorted {
            nodes.sort_unstable();
            if nodes.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidConfig("duplicate receiver id".into()));
            }
        }
        if nodes.len() > 20 {
            return Err(Error::InvalidConfig(format!(
                "at most 20 receivers supported, got {}",
                nodes.len()
            )));
        }
        if mass.len() != 1 << nodes.len() {
            return Err(Error::DimensionMismatch {
                left: mass.len(),
                right: 1 << nodes.len(),
            });
        }
        let mut sum = 0.0;
        for &p in &mass {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProbability {
                    name: "subset probability",
                    value: p,
                    range: "[0, 1]",
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidConfig(format!(
                "subset probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { nodes, mass })
    }

    /// Table for receivers that hear the hub over independent links;
    /// `links[k] = (node, p)` succeeds with probability `p` each slot.
    pub fn from_independent_links(links: &[(NodeId, f64)]) -> Result<Self> {
        let mut sorted: Vec<(NodeId, f64)> = links.to_vec();
        sorted.sort_unstable_by_key(|&(node, _)| node);
        for &(_, p) in &sorted {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProbability {
                    name: "link probability",
                    value: p,
                    range: "[0, 1]",
                });
            }
        }
        let nodes: Vec<NodeId> = sorted.iter().map(|&(node, _)| node).collect();
        let n = nodes.len();
        if n == 0 {
            return Err(Error::EmptySubset);
        }
        let mut mass = vec![0.0; 1 << n];
        for (m, slot) in mass.iter_mut().enumerate() {
            let mut prob = 1.0;
            for (bit, &(_, p)) in sorted.iter().enumerate() {
                prob *= if m >> bit & 1 == 1 { p } else { 1.0 - p };
            }
            *slot = prob;
        }
        Self::new(nodes, mass)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn bit_of(&self, node: NodeId) -> Result<usize> {
        self.nodes
            .binary_search(&node)
            .map_err(|_| Error::NotInTable(node))
    }

    fn mask_of(&self, set: &[NodeId]) -> Result<usize> {
        let mut mask = 0usize;
        for &node in set {
            mask |= 1 << self.bit_of(node)?;
        }
        Ok(mask)
    }

    /// Probability that exactly the given set of receivers (and no others in
    /// the table) receive in a slot.
    pub fn mass_of(&self, set: &[NodeId]) -> Result<f64> {
        Ok(self.mass[self.mask_of(set)?])
    }

    /// Probability that, among the receivers in `among`, exactly those in
    /// `received` get the item; receivers outside `among` are unrestricted.
    pub fn reception_prob(&self, received: &[NodeId], among: &[NodeId]) -> Result<f64> {
        let among_mask = self.mask_of(among)?;
        let received_mask = self.mask_of(received)?;
        if received_mask & !among_mask != 0 {
            return Err(Error::InvalidConfig(
                "received set must lie inside the conditioning set".into(),
            ));
        }
        let mut total = 0.0;
        for (m, &p) in self.mass.iter().enumerate() {
            if m & among_mask == received_mask {
                total += p;
            }
        }
        Ok(total)
    }

    /// Projects the table onto a subset of receivers, summing out the rest.
    pub fn restrict(&self, keep: &[NodeId]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::EmptySubset);
        }
        let mut bits: Vec<usize> = keep
            .iter()
            .map(|&node| self.bit_of(node))
            .collect::<Result<_>>()?;
        bits.sort_unstable();
        bits.dedup();
        let nodes: Vec<NodeId> = bits.iter().map(|&b| self.nodes[b]).collect();
        let mut mass = vec![0.0; 1 << bits.len()];
        for (m, &p) in self.mass.iter().enumerate() {
            let mut small = 0usize;
            for (new_bit, &old_bit) in bits.iter().enumerate() {
                small |= (m >> old_bit & 1) << new_bit;
            }
            mass[small] += p;
        }
        Ok(Self { nodes, mass })
    }

    /// Marginal probability that `node` receives in a slot.
    pub fn marginal_reception_prob(&self, node: NodeId) -> Result<f64> {
        let bit = self.bit_of(node)?;
        Ok(self
            .mass
            .iter()
            .enumerate()
            .filter(|&(m, _)| m >> bit & 1 == 1)
            .map(|(_, &p)| p)
            .sum())
    }
}

/// Stationary age of a single receiver: geometric on `{1, 2, ...}` with
/// success probability `r`, the receiver's per-slot reception probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalGeometric {
    pub r: f64,
}

impl MarginalGeometric {
    pub fn pmf(&self, age: u64) -> f64 {
        if age == 0 {
            return 0.0;
        }
        self.r * fpow(1.0 - self.r, age - 1)
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.r
    }

    pub fn variance(&self) -> f64 {
        (1.0 - self.r) / (self.r * self.r)
    }
}

/// Stationary marginal age of one receiver in the table.
pub fn marginal_geometric(table: &LambdaTable, node: NodeId) -> Result<MarginalGeometric> {
    let r = table.marginal_reception_prob(node)?;
    if r <= 0.0 {
        return Err(Error::NoStationaryDistribution(node));
    }
    Ok(MarginalGeometric { r })
}

fn two_receiver_parts(table: &LambdaTable) -> Result<(f64, f64, f64, f64)> {
    if table.node_count() != 2 {
        return Err(Error::DimensionMismatch {
            left: table.node_count(),
            right: 2,
        });
    }
    // (nobody, first only, second only, both)
    Ok((table.mass[0], table.mass[1], table.mass[2], table.mass[3]))
}

/// Closed-form stationary joint pmf for two receivers: probability that the
/// lower-id receiver has age `ages.0` and the higher-id one age `ages.1`.
/// Reading backwards from the current slot, the younger side pins the most
/// recent reception, the diagonal needs a simultaneous one, and the gap
/// in between excludes only the older side.
pub fn star2_joint_closed_form(table: &LambdaTable, ages: (u64, u64)) -> Result<f64> {
    let (l_none, l_first, l_second, l_both) = two_receiver_parts(table)?;
    let (a1, a2) = ages;
    if a1 == 0 || a2 == 0 {
        return Err(Error::AgeBelowSupport(0));
    }
    Ok(match a1.cmp(&a2) {
        std::cmp::Ordering::Equal => fpow(l_none, a1 - 1) * l_both,
        std::cmp::Ordering::Greater => {
            let c2 = 1.0 - (l_first + l_both); // second may receive, first must not
            fpow(l_none, a2 - 1) * l_second * fpow(c2, a1 - a2 - 1) * (l_first + l_both)
        }
        std::cmp::Ordering::Less => {
            let c1 = 1.0 - (l_second + l_both);
            fpow(l_none, a1 - 1) * l_first * fpow(c1, a2 - a1 - 1) * (l_second + l_both)
        }
    })
}

/// Stationary covariance of the two receivers' ages.
pub fn star2_covariance(table: &LambdaTable) -> Result<f64> {
    let (l_none, l_first, l_second, l_both) = two_receiver_parts(table)?;
    let r1 = l_first + l_both;
    let r2 = l_second + l_both;
    if r1 <= 0.0 || r2 <= 0.0 {
        let node = if r1 <= 0.0 { table.nodes[0] } else { table.nodes[1] };
        return Err(Error::NoStationaryDistribution(node));
    }
    Ok((l_none * l_both - l_first * l_second) / (r1 * r2 * (1.0 - l_none)))
}

/// How far the table is from making the two ages independent:
/// `r1 * r2 - l_both`. Zero exactly when the joint pmf factorises, which is
/// also exactly when [`star2_covariance`] vanishes, since the covariance
/// numerator `l_none * l_both - l_first * l_second` equals the negated
/// defect.
pub fn star2_product_form_defect(table: &LambdaTable) -> Result<f64> {
    let (_, l_first, l_second, l_both) = two_receiver_parts(table)?;
    Ok((l_first + l_both) * (l_second + l_both) - l_both)
}

fn joint_recursion(table: &LambdaTable, ages: &[u64]) -> Result<f64> {
    let a_min = *ages.iter().min().expect("nonempty ages");
    if a_min > 1 {
        // Nobody in the set received during the last a_min - 1 slots.
        let shifted: Vec<u64> = ages.iter().map(|a| a - (a_min - 1)).collect();
        return Ok(fpow(table.mass[0], a_min - 1) * joint_recursion(table, &shifted)?);
    }
    let fresh_mask: usize = ages
        .iter()
        .enumerate()
        .filter(|&(_, &a)| a == 1)
        .map(|(bit, _)| 1 << bit)
        .sum();
    if fresh_mask == table.mass.len() - 1 {
        return Ok(table.mass[fresh_mask]);
    }
    // Last slot: exactly the age-1 receivers got the item. The rest carry on
    // one slot older, with the table projected onto them.
    let stale_nodes: Vec<NodeId> = ages
        .iter()
        .enumerate()
        .filter(|&(_, &a)| a > 1)
        .map(|(bit, _)| table.nodes[bit])
        .collect();
    let stale_ages: Vec<u64> = ages.iter().filter(|&&a| a > 1).map(|a| a - 1).collect();
    let sub = table.restrict(&stale_nodes)?;
    Ok(table.mass[fresh_mask] * joint_recursion(&sub, &stale_ages)?)
}

/// Stationary joint age pmf `P(A_d = ages[d] for every d in nodes)`,
/// computed by peeling slots off the most recent reception first.
pub fn star_joint_algorithm1(
    table: &LambdaTable,
    nodes: &[NodeId],
    ages: &[u64],
) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptySubset);
    }
    if nodes.len() != ages.len() {
        return Err(Error::DimensionMismatch {
            left: nodes.len(),
            right: ages.len(),
        });
    }
    if let Some(&bad) = ages.iter().find(|&&a| a == 0) {
        return Err(Error::AgeBelowSupport(bad));
    }
    let mut pairs: Vec<(NodeId, u64)> = nodes.iter().copied().zip(ages.iter().copied()).collect();
    pairs.sort_unstable_by_key(|&(node, _)| node);
    if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidConfig("duplicate receiver id".into()));
    }
    let sorted_nodes: Vec<NodeId> = pairs.iter().map(|&(node, _)| node).collect();
    let sorted_ages: Vec<u64> = pairs.iter().map(|&(_, age)| age).collect();
    let sub = table.restrict(&sorted_nodes)?;
    for &node in &sorted_nodes {
        if sub.marginal_reception_prob(node)? <= 0.0 {
            return Err(Error::NoStationaryDistribution(node));
        }
    }
    joint_recursion(&sub, &sorted_ages)
}

/// Tabulates the joint pmf of the given receivers over the box
/// `{1..=k}^|nodes|` and bounds the missing mass by a union bound:
/// receiver `d` exceeds age `k` with probability `(1 - r_d)^k`. Axes follow
/// the receivers in increasing id order.
pub fn star_joint_pmf_box(table: &LambdaTable, nodes: &[NodeId], k: u64) -> Result<JointPmf> {
    if k == 0 {
        return Err(Error::BoxTooSmall { k, min: 1 });
    }
    let mut sorted_nodes = nodes.to_vec();
    sorted_nodes.sort_unstable();
    sorted_nodes.dedup();
    if sorted_nodes.len() != nodes.len() {
        return Err(Error::InvalidConfig("duplicate receiver id".into()));
    }
    let sub = table.restrict(&sorted_nodes)?;
    let dims = sorted_nodes.len();
    let mut tail = 0.0;
    for &node in &sorted_nodes {
        let r = sub.marginal_reception_prob(node)?;
        if r <= 0.0 {
            return Err(Error::NoStationaryDistribution(node));
        }
        tail += fpow(1.0 - r, k);
    }
    let mut mass = BTreeMap::new();
    let mut ages = vec![1u64; dims];
    loop {
        let p = joint_recursion(&sub, &ages)?;
        if p > 0.0 {
            mass.insert(ages.clone(), p);
        }
        // Odometer over the box.
        let mut axis = dims;
        loop {
            if axis == 0 {
                return JointPmf::new(dims, k, tail.min(1.0), mass);
            }
            axis -= 1;
            if ages[axis] < k {
                ages[axis] += 1;
                break;
            }
            ages[axis] = 1;
        }
    }
}
