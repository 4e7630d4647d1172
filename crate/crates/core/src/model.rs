//! Core model: topologies, broadcast policies, channels, and the one-slot
//! age update.
//!
//! The state tracks, for every ordered pair `(i, j)` with a directed path
//! from `j` to `i`, the number of slots since the freshest information node
//! `i` holds about node `j` was sensed at `j`. In each slot every node
//! broadcasts exactly one item to all of its out-neighbours; a receiver that
//! obtains item `j` from sender `k` may lower its age for `j` to `k`'s age,
//! and every age then grows by one. A node's age about itself is identically
//! zero and is never stored.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_rational::Ratio;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};

/// 1-based node index.
pub type NodeId = usize;

/// Ring coordinate relative to the source, an exact rational in `[-1, 1)`.
/// On a ring of `2m` nodes, node `i` sits at `(i - 1 - m) / m`; the source
/// is at `-1` and the antipodal node at `0`.
pub type Theta = Ratio<i64>;

/// Builds a reduced rational coordinate. Panics if `den == 0`.
pub fn theta(num: i64, den: i64) -> Theta {
    Ratio::new(num, den)
}

/// Tolerance used when checking that probability vectors sum to one.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Ring coordinate of a node on a ring of `2 * m` nodes.
pub fn theta_of_node(node: NodeId, m: usize) -> Result<Theta> {
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "must be positive".into(),
        });
    }
    if node < 1 || node > 2 * m {
        return Err(Error::NodeOutOfRange {
            node,
            max: 2 * m,
        });
    }
    Ok(Ratio::new(node as i64 - 1 - m as i64, m as i64))
}

/// Inverse of [`theta_of_node`]; errors when `theta` is off the grid.
pub fn node_of_theta(theta: Theta, m: usize) -> Result<NodeId> {
    let scaled = theta * Ratio::from_integer(m as i64);
    if !scaled.is_integer() {
        return Err(Error::ThetaOffGrid(theta.to_string()));
    }
    let idx = scaled.to_integer() + m as i64 + 1;
    if idx < 1 || idx > 2 * m as i64 {
        return Err(Error::ThetaOffGrid(theta.to_string()));
    }
    Ok(idx as NodeId)
}

/// All `2m` grid coordinates, from `-1` up to `(m - 1) / m`.
pub fn theta_grid(m: usize) -> impl Iterator<Item = Theta> {
    let m = m as i64;
    (0..2 * m).map(move |k| Ratio::new(k - m, m))
}

/// Structural class of a topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Line,
    Tree,
    Ring,
    Star,
    General,
}

/// Directed broadcast graph. Nodes are labelled `1..=node_count`; an edge
/// `(k, i)` means `i` can hear `k`'s broadcasts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    kind: TopologyKind,
    node_count: usize,
    edges: BTreeSet<(NodeId, NodeId)>,
}

impl Topology {
    /// Directed line `1 -> 2 -> ... -> n`.
    pub fn line(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTopology("line needs at least one node".into()));
        }
        let edges = (1..n).map(|i| (i, i + 1)).collect();
        Ok(Self {
            kind: TopologyKind::Line,
            node_count: n,
            edges,
        })
    }

    /// Bidirectional ring on an even number of nodes.
    pub fn ring(two_m: usize) -> Result<Self> {
        if two_m < 2 || two_m % 2 != 0 {
            return Err(Error::InvalidTopology(format!(
                "ring needs an even node count of at least 2, got {two_m}"
            )));
        }
        let mut edges = BTreeSet::new();
        for i in 1..=two_m {
            let right = i % two_m + 1;
            edges.insert((i, right));
            edges.insert((right, i));
        }
        Ok(Self {
            kind: TopologyKind::Ring,
            node_count: two_m,
            edges,
        })
    }

    /// Star with hub node 1 broadcasting to `receivers` leaf nodes.
    pub fn star(receivers: usize) -> Result<Self> {
        if receivers == 0 {
            return Err(Error::InvalidTopology("star needs at least one receiver".into()));
        }
        let edges = (2..=receivers + 1).map(|k| (1, k)).collect();
        Ok(Self {
            kind: TopologyKind::Star,
            node_count: receivers + 1,
            edges,
        })
    }

    /// Directed tree (more generally, a forest: the underlying undirected
    /// graph must be acyclic, so any ordered pair is joined by at most one
    /// directed path).
    pub fn tree(node_count: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let topo = Self::general_with_kind(TopologyKind::Tree, node_count, edges)?;
        topo.check_forest()?;
        Ok(topo)
    }

    /// Arbitrary directed graph without self-loops.
    pub fn general(node_count: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        Self::general_with_kind(TopologyKind::General, node_count, edges)
    }

    fn general_with_kind(
        kind: TopologyKind,
        node_count: usize,
        edges: &[(NodeId, NodeId)],
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidTopology("need at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            for node in [a, b] {
                if node < 1 || node > node_count {
                    return Err(Error::NodeOutOfRange {
                        node,
                        max: node_count,
                    });
                }
            }
            if a == b {
                return Err(Error::InvalidTopology(format!("self-loop at node {a}")));
            }
            set.insert((a, b));
        }
        Ok(Self {
            kind,
            node_count,
            edges: set,
        })
    }

    /// Acyclicity of the underlying undirected multigraph, checked with a
    /// union-find; an antiparallel pair counts as a cycle.
    pub(crate) fn check_forest(&self) -> Result<()> {
        let mut parent: Vec<usize> = (0..=self.node_count).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut root = x;
            while parent[root] != root {
                root = parent[root];
            }
            let mut cur = x;
            while parent[cur] != root {
                let next = parent[cur];
                parent[cur] = root;
                cur = next;
            }
            root
        }
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(Error::NotATree(format!(
                    "edge ({a}, {b}) closes an undirected cycle"
                )));
            }
            parent[ra] = rb;
        }
        Ok(())
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// For ring topologies, half the node count.
    pub fn ring_m(&self) -> Option<usize> {
        (self.kind == TopologyKind::Ring).then_some(self.node_count / 2)
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Edges in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub(crate) fn out_neighbours(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.node_count + 1];
        for &(a, b) in &self.edges {
            out[a].push(b);
        }
        out
    }
}

/// Minimal attainable age for every trackable pair: `floor[(i, j)]` is the
/// directed graph distance from `j` to `i`. Pairs with no path are absent.
pub fn shortest_path_floor(topology: &Topology) -> BTreeMap<(NodeId, NodeId), u64> {
    let out = topology.out_neighbours();
    let mut floor = BTreeMap::new();
    for j in 1..=topology.node_count() {
        let mut dist = vec![u64::MAX; topology.node_count() + 1];
        let mut queue = VecDeque::new();
        dist[j] = 0;
        queue.push_back(j);
        while let Some(u) = queue.pop_front() {
            for &v in &out[u] {
                if dist[v] == u64::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for i in 1..=topology.node_count() {
            if i != j && dist[i] != u64::MAX {
                floor.insert((i, j), dist[i]);
            }
        }
    }
    floor
}

/// Ring policy parameters: own-transmission probability `beta`, relay decay
/// `alpha`, half node count `m`, and the normalisation constant `c` that
/// makes the per-node item distribution sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RingPolicy {
    pub alpha: f64,
    pub beta: f64,
    pub m: usize,
    pub c: f64,
}

impl RingPolicy {
    /// Probability that a node transmits the item whose origin sits at ring
    /// coordinate `theta` relative to the node itself: `beta` at `theta = -1`
    /// (the node's own reading) and `c * alpha^(m * (1 - |theta|))` elsewhere;
    /// the exponent is the ring distance from the origin to the node.
    pub fn q(&self, theta: Theta) -> Result<f64> {
        let m = self.m as i64;
        if theta == Ratio::from_integer(-1) {
            return Ok(self.beta);
        }
        let scaled = theta * Ratio::from_integer(m);
        if !scaled.is_integer() {
            return Err(Error::ThetaOffGrid(theta.to_string()));
        }
        let t = scaled.to_integer();
        if t < -m || t >= m {
            return Err(Error::ThetaOffGrid(theta.to_string()));
        }
        let dist = m - t.abs();
        Ok(self.c * self.alpha.powi(dist as i32))
    }
}

/// Normalisation constant of the ring policy.
pub fn ring_normalization(alpha: f64, beta: f64, m: usize) -> f64 {
    if alpha == 1.0 {
        (1.0 - beta) / (2.0 * m as f64 - 1.0)
    } else {
        (1.0 - beta) * (1.0 - alpha)
            / (2.0 * alpha - alpha.powi(m as i32) * (alpha + 1.0))
    }
}

/// Per-node distribution over which item to broadcast each slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    rows: Vec<Vec<f64>>,
    ring: Option<RingPolicy>,
}

impl PolicyTable {
    /// Explicit per-node distributions; `rows[i - 1][j - 1]` is the
    /// probability that node `i` broadcasts item `j`. Every row must sum to
    /// one within [`PROB_SUM_TOL`].
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidPolicy("no rows".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidPolicy(format!(
                    "row {} has {} entries, expected {}",
                    i + 1,
                    row.len(),
                    n
                )));
            }
            let mut sum = 0.0;
            for &p in row {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidProbability {
                        name: "policy entry",
                        value: p,
                        range: "[0, 1]",
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "row {} sums to {sum}, expected 1",
                    i + 1
                )));
            }
        }
        Ok(Self { rows, ring: None })
    }

    /// Broadcast policy for a ring of `2 * m` nodes. Each node transmits its
    /// own reading with probability `beta` and relays the item that
    /// originated `d` hops away (`1 <= d <= m`) with probability
    /// `c * alpha^d`, with `c` chosen so the distribution sums to one.
    pub fn ring(alpha: f64, beta: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter {
                name: "m",
                reason: "must be positive".into(),
            });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidProbability {
                name: "alpha",
                value: alpha,
                range: "(0, 1]",
            });
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidProbability {
                name: "beta",
                value: beta,
                range: "(0, 1)",
            });
        }
        let n = 2 * m;
        let c = ring_normalization(alpha, beta, m);
        let mut rows = Vec::with_capacity(n);
        for i in 1..=n {
            let mut row = vec![0.0; n];
            for (j, slot) in row.iter_mut().enumerate() {
                let rel = (j + 1 + n - i) % n;
                *slot = if rel == 0 {
                    beta
                } else {
                    let dist = m as i64 - (rel as i64 - m as i64).abs();
                    c * alpha.powi(dist as i32)
                };
            }
            rows.push(row);
        }
        let mut policy = Self::from_rows(rows)?;
        policy.ring = Some(RingPolicy { alpha, beta, m, c });
        Ok(policy)
    }

    /// Line policy from relay probabilities `relay[d]` = probability that a
    /// node broadcasts the item that originated `d` hops upstream
    /// (`relay[0]` is its own reading). Mass that would land on nodes left
    /// of the line's start, and any remainder of an incomplete list, is
    /// assigned to an item the node holds no information about, so those
    /// broadcasts are ignored by receivers and the per-hop relay
    /// probabilities stay exactly as given.
    pub fn line(node_count: usize, relay: &[f64]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidPolicy("line needs at least one node".into()));
        }
        let mut sum = 0.0;
        for &p in relay {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProbability {
                    name: "relay probability",
                    value: p,
                    range: "[0, 1]",
                });
            }
            sum += p;
        }
        if sum > 1.0 + PROB_SUM_TOL {
            return Err(Error::InvalidPolicy(format!(
                "relay probabilities sum to {sum} > 1"
            )));
        }
        let mut rows = Vec::with_capacity(node_count);
        for k in 1..=node_count {
            let mut row = vec![0.0; node_count];
            let mut assigned = 0.0;
            for (d, &p) in relay.iter().enumerate() {
                if d < k {
                    row[k - d - 1] += p;
                    assigned += p;
                }
            }
            // Downstream items are never known here, so this mass is inert.
            let junk = if k < node_count { k } else { k - 1 };
            row[junk] += 1.0 - assigned;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    /// Star policy: the hub (node 1) broadcasts its own reading with
    /// probability `transmit_own`; leaves broadcast their own readings.
    /// The hub's remaining mass goes to an item it has no information about.
    pub fn star(receivers: usize, transmit_own: f64) -> Result<Self> {
        if receivers == 0 {
            return Err(Error::InvalidPolicy("star needs at least one receiver".into()));
        }
        if !(transmit_own > 0.0 && transmit_own <= 1.0) {
            return Err(Error::InvalidProbability {
                name: "transmit_own",
                value: transmit_own,
                range: "(0, 1]",
            });
        }
        let n = receivers + 1;
        let mut rows = vec![vec![0.0; n]; n];
        rows[0][0] = transmit_own;
        rows[0][1] += 1.0 - transmit_own;
        for (k, row) in rows.iter_mut().enumerate().skip(1) {
            row[k] = 1.0;
        }
        Self::from_rows(rows)
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    /// Probability that `node` broadcasts `item` in a slot.
    pub fn prob(&self, node: NodeId, item: NodeId) -> f64 {
        self.rows[node - 1][item - 1]
    }

    pub fn row(&self, node: NodeId) -> &[f64] {
        &self.rows[node - 1]
    }

    /// Ring parameters when this table was built by [`PolicyTable::ring`].
    pub fn ring_params(&self) -> Option<&RingPolicy> {
        self.ring.as_ref()
    }
}

/// Reception model for the broadcast edges.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// Every broadcast is received by every out-neighbour.
    Ideal,
    /// Each edge succeeds independently with its own probability in `(0, 1]`.
    IndependentLoss(BTreeMap<(NodeId, NodeId), f64>),
}

impl ChannelModel {
    pub fn ideal() -> Self {
        ChannelModel::Ideal
    }

    /// Independent losses with one probability for every edge of `topology`.
    pub fn independent_uniform(topology: &Topology, p: f64) -> Result<Self> {
        Self::check_prob(p)?;
        Ok(ChannelModel::IndependentLoss(
            topology.edges().map(|e| (e, p)).collect(),
        ))
    }

    /// Independent losses with explicit per-edge probabilities.
    pub fn independent(probs: BTreeMap<(NodeId, NodeId), f64>) -> Result<Self> {
        for &p in probs.values() {
            Self::check_prob(p)?;
        }
        Ok(ChannelModel::IndependentLoss(probs))
    }

    fn check_prob(p: f64) -> Result<()> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidProbability {
                name: "edge success probability",
                value: p,
                range: "(0, 1]",
            });
        }
        Ok(())
    }

    /// Success probability of one edge; callers must have validated the
    /// channel against the topology first.
    pub fn success_prob(&self, edge: (NodeId, NodeId)) -> f64 {
        match self {
            ChannelModel::Ideal => 1.0,
            ChannelModel::IndependentLoss(map) => {
                debug_assert!(map.contains_key(&edge));
                map.get(&edge).copied().unwrap_or(1.0)
            }
        }
    }

    /// Checks that the channel specifies exactly the edges of `topology`.
    pub fn validate_for(&self, topology: &Topology) -> Result<()> {
        if let ChannelModel::IndependentLoss(map) = self {
            if map.len() != topology.edge_count()
                || !map.keys().all(|&(a, b)| topology.has_edge(a, b))
            {
                return Err(Error::InvalidConfig(
                    "channel must specify exactly the topology's edges".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Ages of all trackable pairs after some number of slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeState {
    slot: u64,
    ages: BTreeMap<(NodeId, NodeId), u64>,
}

impl AgeState {
    /// Minimal attainable state: every pair at its graph-distance floor.
    pub fn initial(topology: &Topology) -> Self {
        Self {
            slot: 0,
            ages: shortest_path_floor(topology),
        }
    }

    /// Builds a state from explicit ages; every age must be at least one.
    pub fn from_ages(slot: u64, ages: BTreeMap<(NodeId, NodeId), u64>) -> Result<Self> {
        for (&(i, j), &a) in &ages {
            if i == j {
                return Err(Error::InvalidOutcome(format!(
                    "diagonal pair ({i}, {j}) must not be stored"
                )));
            }
            if a == 0 {
                return Err(Error::AgeBelowSupport(a));
            }
        }
        Ok(Self { slot, ages })
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Age of pair `(i, j)`, absent when `j` cannot reach `i`.
    pub fn age(&self, i: NodeId, j: NodeId) -> Option<u64> {
        self.ages.get(&(i, j)).copied()
    }

    pub fn ages(&self) -> impl Iterator<Item = ((NodeId, NodeId), u64)> + '_ {
        self.ages.iter().map(|(&k, &v)| (k, v))
    }

    pub fn pair_count(&self) -> usize {
        self.ages.len()
    }
}

/// Everything that happened in one slot: which item each node broadcast
/// (`transmissions[i - 1]` for node `i`) and which edges delivered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOutcome {
    pub transmissions: Vec<NodeId>,
    pub receptions: BTreeSet<(NodeId, NodeId)>,
}

/// Samples one slot's broadcasts and receptions. Broadcast items are drawn
/// per node in index order, then edge successes in sorted edge order; edges
/// with success probability one consume no randomness.
pub fn sample_slot<R: Rng + ?Sized>(
    topology: &Topology,
    policy: &PolicyTable,
    channel: &ChannelModel,
    rng: &mut R,
) -> Result<SlotOutcome> {
    let n = topology.node_count();
    if policy.node_count() != n {
        return Err(Error::InvalidConfig(format!(
            "policy covers {} nodes, topology has {n}",
            policy.node_count()
        )));
    }
    channel.validate_for(topology)?;
    let mut transmissions = Vec::with_capacity(n);
    for i in 1..=n {
        let dist = WeightedIndex::new(policy.row(i).iter().copied())
            .map_err(|e| Error::InvalidPolicy(e.to_string()))?;
        transmissions.push(dist.sample(rng) + 1);
    }
    let mut receptions = BTreeSet::new();
    for edge in topology.edges() {
        let p = channel.success_prob(edge);
        if p >= 1.0 || rng.gen_bool(p) {
            receptions.insert(edge);
        }
    }
    Ok(SlotOutcome {
        transmissions,
        receptions,
    })
}

/// Applies one slot outcome to a state. For every pair `(i, j)`, the new age
/// is the minimum of the old age and the ages offered by senders that both
/// reached `i` and broadcast item `j`, plus one; a sender offering its own
/// reading offers age zero. Broadcasts of items the sender holds no
/// information about are ignored.
pub fn apply_slot(
    state: &AgeState,
    topology: &Topology,
    outcome: &SlotOutcome,
) -> Result<AgeState> {
    let n = topology.node_count();
    if outcome.transmissions.len() != n {
        return Err(Error::InvalidOutcome(format!(
            "{} transmissions for {n} nodes",
            outcome.transmissions.len()
        )));
    }
    for &item in &outcome.transmissions {
        if item < 1 || item > n {
            return Err(Error::InvalidOutcome(format!("item {item} out of range")));
        }
    }
    for &(k, i) in &outcome.receptions {
        if !topology.has_edge(k, i) {
            return Err(Error::InvalidOutcome(format!(
                "reception ({k}, {i}) is not a topology edge"
            )));
        }
    }
    let mut best: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
    for &(k, i) in &outcome.receptions {
        let j = outcome.transmissions[k - 1];
        if j == i {
            continue; // a node never gains from hearing its own item
        }
        let offered = if j == k {
            0
        } else {
            match state.age(k, j) {
                Some(a) => a,
                None => continue, // sender has no information about j
            }
        };
        best.entry((i, j))
            .and_modify(|b| *b = (*b).min(offered))
            .or_insert(offered);
    }
    let mut ages = BTreeMap::new();
    for ((i, j), a) in state.ages() {
        let reduced = match best.get(&(i, j)) {
            Some(&offer) => a.min(offer),
            None => a,
        };
        ages.insert((i, j), reduced + 1);
    }
    Ok(AgeState {
        slot: state.slot + 1,
        ages,
    })
}

/// Samples and applies one slot.
pub fn step<R: Rng + ?Sized>(
    state: &AgeState,
    topology: &Topology,
    policy: &PolicyTable,
    channel: &ChannelModel,
    rng: &mut R,
) -> Result<(AgeState, SlotOutcome)> {
    let outcome = sample_slot(topology, policy, channel, rng)?;
    let next = apply_slot(state, topology, &outcome)?;
    Ok((next, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn theta_endpoints() {
        assert_eq!(theta_of_node(1, 2).unwrap(), theta(-1, 1));
        assert_eq!(theta_of_node(8, 7).unwrap(), theta(0, 1));
        assert_eq!(theta_of_node(30, 15).unwrap(), theta(14, 15));
        assert!(theta_of_node(5, 2).is_err());
        assert!(theta_of_node(0, 2).is_err());
    }

    #[test]
    fn theta_round_trips_through_node_index() {
        for m in [1usize, 2, 7, 15] {
            for i in 1..=2 * m {
                let t = theta_of_node(i, m).unwrap();
                assert_eq!(node_of_theta(t, m).unwrap(), i);
            }
        }
        assert!(node_of_theta(theta(1, 3), 2).is_err());
    }

    #[test]
    fn ring_policy_uniform_case() {
        // alpha = 1, beta = 1/4, m = 2: c = (3/4)/3 = 1/4 and q is uniform.
        let policy = PolicyTable::ring(1.0, 0.25, 2).unwrap();
        let rp = policy.ring_params().unwrap();
        assert!((rp.c - 0.25).abs() < 1e-15);
        for t in theta_grid(2) {
            assert!((rp.q(t).unwrap() - 0.25).abs() < 1e-15);
        }
        for i in 1..=4 {
            for j in 1..=4 {
                assert!((policy.prob(i, j) - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ring_policy_decaying_case() {
        // alpha = 0.1, beta = 0.5, m = 2: c = 0.45 / 0.189 = 50/21.
        let policy = PolicyTable::ring(0.1, 0.5, 2).unwrap();
        let rp = policy.ring_params().unwrap();
        assert!((rp.c - 50.0 / 21.0).abs() < 1e-12);
        assert!((rp.q(theta(-1, 1)).unwrap() - 0.5).abs() < 1e-15);
        assert!((rp.q(theta(-1, 2)).unwrap() - 5.0 / 21.0).abs() < 1e-12);
        assert!((rp.q(theta(0, 1)).unwrap() - 1.0 / 42.0).abs() < 1e-12);
        assert!((rp.q(theta(1, 2)).unwrap() - 5.0 / 21.0).abs() < 1e-12);
        let sum: f64 = theta_grid(2).map(|t| rp.q(t).unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ring_policy_rejects_bad_parameters() {
        assert!(PolicyTable::ring(1.0, 0.0, 2).is_err());
        assert!(PolicyTable::ring(1.0, 1.0, 2).is_err());
        assert!(PolicyTable::ring(0.0, 0.5, 2).is_err());
        assert!(PolicyTable::ring(1.1, 0.5, 2).is_err());
        assert!(PolicyTable::ring(1.0, 0.5, 0).is_err());
    }

    #[test]
    fn ring_q_is_symmetric_in_theta() {
        let policy = PolicyTable::ring(0.3, 0.2, 5).unwrap();
        let rp = policy.ring_params().unwrap();
        for d in 1..5i64 {
            let plus = rp.q(theta(d, 5)).unwrap();
            let minus = rp.q(theta(-d, 5)).unwrap();
            assert_eq!(plus, minus);
        }
    }

    #[test]
    fn line_policy_keeps_hop_probabilities() {
        let policy = PolicyTable::line(3, &[0.5, 0.25]).unwrap();
        // Node 1: own item 0.5, the rest is inert mass on item 2.
        assert_eq!(policy.prob(1, 1), 0.5);
        assert_eq!(policy.prob(2, 2), 0.5);
        assert_eq!(policy.prob(2, 1), 0.25);
        assert_eq!(policy.prob(3, 2), 0.25);
        for i in 1..=3 {
            let sum: f64 = (1..=3).map(|j| policy.prob(i, j)).sum();
            assert!((sum - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shortest_path_floor_examples() {
        let line = Topology::line(3).unwrap();
        let floor = shortest_path_floor(&line);
        assert_eq!(floor[&(3, 1)], 2);
        assert_eq!(floor.get(&(1, 3)), None);

        let ring = Topology::ring(4).unwrap();
        let floor = shortest_path_floor(&ring);
        assert_eq!(floor[&(3, 1)], 2);
        assert_eq!(floor[&(2, 1)], 1);

        let star = Topology::star(3).unwrap();
        let floor = shortest_path_floor(&star);
        assert_eq!(floor[&(2, 1)], 1);
        assert_eq!(floor.get(&(2, 3)), None);
    }

    #[test]
    fn tree_rejects_cycles_and_antiparallel_edges() {
        assert!(Topology::tree(3, &[(1, 2), (2, 3), (3, 1)]).is_err());
        assert!(Topology::tree(2, &[(1, 2), (2, 1)]).is_err());
        assert!(Topology::tree(4, &[(1, 2), (2, 3), (2, 4)]).is_ok());
    }

    fn outcome(transmissions: Vec<NodeId>, receptions: &[(NodeId, NodeId)]) -> SlotOutcome {
        SlotOutcome {
            transmissions,
            receptions: receptions.iter().copied().collect(),
        }
    }

    #[test]
    fn apply_slot_without_receptions_ages_everything() {
        let topo = Topology::line(3).unwrap();
        let state = AgeState::initial(&topo);
        let next = apply_slot(&state, &topo, &outcome(vec![1, 1, 1], &[])).unwrap();
        assert_eq!(next.slot(), 1);
        assert_eq!(next.age(2, 1), Some(2));
        assert_eq!(next.age(3, 1), Some(3));
        assert_eq!(next.age(3, 2), Some(2));
    }

    #[test]
    fn apply_slot_fresh_reception_resets_to_one() {
        let topo = Topology::line(2).unwrap();
        let mut ages = BTreeMap::new();
        ages.insert((2, 1), 7);
        let state = AgeState::from_ages(10, ages).unwrap();
        let next = apply_slot(&state, &topo, &outcome(vec![1, 2], &[(1, 2)])).unwrap();
        assert_eq!(next.age(2, 1), Some(1));
    }

    #[test]
    fn apply_slot_relay_takes_sender_age_plus_one() {
        let topo = Topology::line(3).unwrap();
        let mut ages = BTreeMap::new();
        ages.insert((2, 1), 3);
        ages.insert((3, 1), 2);
        ages.insert((3, 2), 9);
        let state = AgeState::from_ages(5, ages).unwrap();
        // Node 2 relays item 1 and the reception succeeds, but node 3's own
        // copy is fresher: min(2, 3) + 1.
        let next = apply_slot(&state, &topo, &outcome(vec![1, 1, 1], &[(2, 3)])).unwrap();
        assert_eq!(next.age(3, 1), Some(3));
        assert_eq!(next.age(3, 2), Some(10));
    }

    #[test]
    fn apply_slot_ignores_items_the_sender_does_not_hold() {
        let topo = Topology::line(2).unwrap();
        let state = AgeState::initial(&topo);
        // Node 1 broadcasts item 2, about which it holds nothing.
        let next = apply_slot(&state, &topo, &outcome(vec![2, 2], &[(1, 2)])).unwrap();
        assert_eq!(next.age(2, 1), Some(2));
    }

    #[test]
    fn step_is_deterministic_for_a_fixed_seed() {
        let topo = Topology::ring(6).unwrap();
        let policy = PolicyTable::ring(0.7, 0.3, 3).unwrap();
        let channel = ChannelModel::independent_uniform(&topo, 0.8).unwrap();
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = AgeState::initial(&topo);
            let mut outcomes = Vec::new();
            for _ in 0..25 {
                let (next, out) = step(&state, &topo, &policy, &channel, &mut rng).unwrap();
                state = next;
                outcomes.push(out);
            }
            (state, outcomes)
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11).0, run(12).0);
    }

    proptest! {
        #[test]
        fn ages_grow_by_at_most_one_and_respect_the_floor(
            m in 1usize..4,
            alpha in 0.05f64..=1.0,
            beta in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            let topo = Topology::ring(2 * m).unwrap();
            let policy = PolicyTable::ring(alpha, beta, m).unwrap();
            let channel = ChannelModel::ideal();
            let floor = shortest_path_floor(&topo);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = AgeState::initial(&topo);
            for _ in 0..40 {
                let (next, _) = step(&state, &topo, &policy, &channel, &mut rng).unwrap();
                for ((i, j), a) in next.ages() {
                    let old = state.age(i, j).unwrap();
                    prop_assert!(a >= 1);
                    prop_assert!(a <= old + 1);
                    prop_assert!(a >= floor[&(i, j)]);
                }
                state = next;
            }
        }

        #[test]
        fn policy_rows_always_normalise(
            m in 1usize..6,
            alpha in 0.05f64..=1.0,
            beta in 0.05f64..0.95,
        ) {
            let policy = PolicyTable::ring(alpha, beta, m).unwrap();
            for i in 1..=2 * m {
                let sum: f64 = policy.row(i).iter().sum();
                prop_assert!((sum - 1.0).abs() < PROB_SUM_TOL);
            }
        }
    }
}
