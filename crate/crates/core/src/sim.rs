//! Monte Carlo simulation of the slot dynamics with reproducible seeding.
//!
//! A run executes independent replications (in parallel, but merged in
//! replication order so results are identical regardless of thread count),
//! each simulating the network slot by slot: every node draws which item to
//! broadcast, every edge draws whether it delivers, and ages update
//! synchronously from the previous slot's values. After a burn-in the
//! tracked pair ages are recorded every slot into exact integer sums,
//! per-age histograms and, optionally, a joint tuple histogram.
//!
//! When every tracked pair shares one source item, the run uses a reduced
//! state holding only that item's column of ages, which is self-contained
//! under the update rule; whether a node broadcasts that particular item is
//! a Bernoulli draw with its policy row probability. Otherwise the full age
//! matrix is simulated. Both paths draw per slot in a fixed order (node
//! broadcasts in node order, then edge deliveries in sorted edge order) and
//! edges with success probability one consume no randomness.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::joint::JointPmf;
use crate::model::{shortest_path_floor, ChannelModel, NodeId, PolicyTable, Topology};

/// How replication seeds derive from the run seed.
pub const SEED_RULE: &str =
    "replication r uses splitmix64(seed + r * 0x9E3779B97F4A7C15) (wrapping)";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-replication seed; see [`SEED_RULE`].
pub fn replication_seed(seed: u64, rep: u32) -> u64 {
    splitmix64(seed.wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Which ordered pairs `(observer, source)` to record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrackedPairs {
    /// Every pair with a directed path from source to observer.
    All,
    /// An explicit list of pairs; each must be reachable.
    Pairs(Vec<(NodeId, NodeId)>),
}

/// Full description of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub topology: Topology,
    pub policy: PolicyTable,
    pub channel: ChannelModel,
    /// Slots discarded before sampling starts, per replication.
    pub burn_in_slots: u64,
    /// Slots sampled per replication.
    pub sample_slots: u64,
    pub replications: u32,
    pub seed: u64,
    pub tracked: TrackedPairs,
    /// Pairs whose ages are additionally recorded jointly per slot. Must be
    /// a subset of the tracked pairs.
    pub joint_pairs: Option<Vec<(NodeId, NodeId)>>,
    /// Ages above this go to a per-pair overflow bucket instead of the
    /// histogram. Moment sums always cover every sample.
    pub histogram_cap: u64,
    /// Maximum number of distinct joint age tuples before the run aborts.
    pub joint_support_cap: usize,
}

impl SimConfig {
    /// A run with defaults: burn-in of `100 * node_count` slots, one
    /// replication, all reachable pairs tracked, no joint tracking,
    /// histogram cap 10000 and joint support cap 1000000.
    pub fn new(
        topology: Topology,
        policy: PolicyTable,
        channel: ChannelModel,
        sample_slots: u64,
        seed: u64,
    ) -> Self {
        let burn_in_slots = 100 * topology.node_count() as u64;
        Self {
            topology,
            policy,
            channel,
            burn_in_slots,
            sample_slots,
            replications: 1,
            seed,
            tracked: TrackedPairs::All,
            joint_pairs: None,
            histogram_cap: 10_000,
            joint_support_cap: 1_000_000,
        }
    }
}

/// Exact integer accumulators for one pair in one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct RepStat {
    n: u64,
    sum: u64,
    sumsq: u128,
}

impl RepStat {
    fn push(&mut self, age: u64) {
        self.n += 1;
        self.sum += age;
        self.sumsq += age as u128 * age as u128;
    }

    fn mean(&self) -> f64 {
        self.sum as f64 / self.n as f64
    }

    fn variance(&self) -> f64 {
        let mean = self.mean();
        (self.sumsq as f64 / self.n as f64 - mean * mean).max(0.0)
    }
}

/// Mean and variance estimates for one tracked pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    /// Population variance of the pooled samples.
    pub variance: f64,
    /// Standard error of the mean from the spread of replication means;
    /// `None` with fewer than two replications.
    pub stderr_of_mean: Option<f64>,
    pub samples: u64,
}

/// Recorded output of a simulation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeSamples {
    pairs: Vec<(NodeId, NodeId)>,
    sample_slots: u64,
    replications: u32,
    histogram_cap: u64,
    hists: Vec<BTreeMap<u64, u64>>,
    overflow: Vec<u64>,
    rep_stats: Vec<Vec<RepStat>>,
    joint_pairs: Option<Vec<(NodeId, NodeId)>>,
    joint: BTreeMap<Vec<u64>, u64>,
}

impl AgeSamples {
    /// Tracked pairs in increasing order.
    pub fn pairs(&self) -> &[(NodeId, NodeId)] {
        &self.pairs
    }

    pub fn replications(&self) -> u32 {
        self.replications
    }

    /// Samples recorded per pair over all replications.
    pub fn total_samples(&self) -> u64 {
        self.sample_slots * self.replications as u64
    }

    fn index_of(&self, pair: (NodeId, NodeId)) -> Result<usize> {
        self.pairs
            .binary_search(&pair)
            .map_err(|_| Error::PairsNotTracked(format!("({}, {})", pair.0, pair.1)))
    }

    /// Per-age sample counts for a pair, capped at the histogram cap.
    pub fn histogram(&self, pair: (NodeId, NodeId)) -> Result<&BTreeMap<u64, u64>> {
        Ok(&self.hists[self.index_of(pair)?])
    }

    /// Samples above the histogram cap for a pair.
    pub fn overflow_count(&self, pair: (NodeId, NodeId)) -> Result<u64> {
        Ok(self.overflow[self.index_of(pair)?])
    }

    /// Moment estimates from the exact sums (overflowed samples included).
    pub fn estimate_moments(&self, pair: (NodeId, NodeId)) -> Result<MomentEstimate> {
        let idx = self.index_of(pair)?;
        let stats = &self.rep_stats[idx];
        let n: u64 = stats.iter().map(|s| s.n).sum();
        if n == 0 {
            return Err(Error::InsufficientSamples { need: 1, have: 0 });
        }
        let sum: u64 = stats.iter().map(|s| s.sum).sum();
        let sumsq: u128 = stats.iter().map(|s| s.sumsq).sum();
        let mean = sum as f64 / n as f64;
        let variance = (sumsq as f64 / n as f64 - mean * mean).max(0.0);
        let stderr_of_mean = if stats.len() >= 2 {
            let means: Vec<f64> = stats.iter().map(RepStat::mean).collect();
            let grand = means.iter().sum::<f64>() / means.len() as f64;
            let var_of_means = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
                / (means.len() - 1) as f64;
            Some((var_of_means / means.len() as f64).sqrt())
        } else {
            None
        };
        Ok(MomentEstimate {
            mean,
            variance,
            stderr_of_mean,
            samples: n,
        })
    }

    /// Per-replication sample means for a pair.
    pub fn replication_means(&self, pair: (NodeId, NodeId)) -> Result<Vec<f64>> {
        let idx = self.index_of(pair)?;
        Ok(self.rep_stats[idx].iter().map(RepStat::mean).collect())
    }

    /// Per-replication population variances for a pair.
    pub fn replication_variances(&self, pair: (NodeId, NodeId)) -> Result<Vec<f64>> {
        let idx = self.index_of(pair)?;
        Ok(self.rep_stats[idx].iter().map(RepStat::variance).collect())
    }

    /// Empirical pmf of a pair's age from the histogram, normalised by the
    /// full sample count; overflowed samples have no entries, so the map
    /// sums to one minus the overflow fraction.
    pub fn empirical_pmf(&self, pair: (NodeId, NodeId)) -> Result<BTreeMap<u64, f64>> {
        let idx = self.index_of(pair)?;
        let n = self.total_samples() as f64;
        Ok(self.hists[idx]
            .iter()
            .map(|(&age, &count)| (age, count as f64 / n))
            .collect())
    }

    /// Kolmogorov distance between the empirical age distribution of a pair
    /// and the geometric law on `{1, 2, ...}` with success rate `r`.
    pub fn ks_distance_to_geometric(&self, pair: (NodeId, NodeId), r: f64) -> Result<f64> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::InvalidProbability {
                name: "r",
                value: r,
                range: "(0, 1]",
            });
        }
        let idx = self.index_of(pair)?;
        let n = self.total_samples() as f64;
        let hist = &self.hists[idx];
        let max_age = hist.keys().next_back().copied().unwrap_or(0);
        let mut cum = 0u64;
        let mut dist = 0.0f64;
        for age in 1..=max_age {
            cum += hist.get(&age).copied().unwrap_or(0);
            let f_hat = cum as f64 / n;
            let f = 1.0 - (1.0 - r).powi(age as i32);
            dist = dist.max((f_hat - f).abs());
        }
        if self.overflow[idx] > 0 {
            let f_hat = (self.total_samples() - self.overflow[idx]) as f64 / n;
            let f = 1.0 - (1.0 - r).powi(self.histogram_cap as i32);
            dist = dist.max((f_hat - f).abs());
        }
        Ok(dist)
    }

    /// Jointly tracked pairs, in the order their ages appear in tuples.
    pub fn joint_pairs(&self) -> Option<&[(NodeId, NodeId)]> {
        self.joint_pairs.as_deref()
    }

    /// Empirical joint pmf of the given jointly tracked pairs, with axes in
    /// the order requested. The box is the largest observed age.
    pub fn empirical_joint_pmf(&self, pairs: &[(NodeId, NodeId)]) -> Result<JointPmf> {
        let tracked = self
            .joint_pairs
            .as_ref()
            .ok_or_else(|| Error::PairsNotTracked("no joint tracking enabled".into()))?;
        if pairs.is_empty() {
            return Err(Error::EmptySubset);
        }
        let mut axes = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let axis = tracked.iter().position(|t| t == pair).ok_or_else(|| {
                Error::PairsNotTracked(format!("({}, {}) not jointly tracked", pair.0, pair.1))
            })?;
            if axes.contains(&axis) {
                return Err(Error::InvalidConfig("duplicate pair requested".into()));
            }
            axes.push(axis);
        }
        let total: u64 = self.joint.values().sum();
        if total == 0 {
            return Err(Error::InsufficientSamples { need: 1, have: 0 });
        }
        let mut mass: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
        let mut box_size = 1u64;
        for (key, &count) in &self.joint {
            let sub: Vec<u64> = axes.iter().map(|&a| key[a]).collect();
            for &age in &sub {
                box_size = box_size.max(age);
            }
            *mass.entry(sub).or_insert(0.0) += count as f64 / total as f64;
        }
        JointPmf::new(pairs.len(), box_size, 0.0, mass)
    }
}

/// Per-replication accumulators, merged into [`AgeSamples`] afterwards.
struct RepOutput {
    stats: Vec<RepStat>,
    hists: Vec<BTreeMap<u64, u64>>,
    overflow: Vec<u64>,
    joint: BTreeMap<Vec<u64>, u64>,
    key_buf: Vec<u64>,
}

impl RepOutput {
    fn new(pair_count: usize) -> Self {
        Self {
            stats: vec![RepStat::default(); pair_count],
            hists: vec![BTreeMap::new(); pair_count],
            overflow: vec![0; pair_count],
            joint: BTreeMap::new(),
            key_buf: Vec::new(),
        }
    }

    fn record(&mut self, idx: usize, age: u64, cap: u64) {
        self.stats[idx].push(age);
        if age <= cap {
            *self.hists[idx].entry(age).or_insert(0) += 1;
        } else {
            self.overflow[idx] += 1;
        }
    }

    fn record_joint(&mut self, cap: usize) -> Result<()> {
        if let Some(count) = self.joint.get_mut(self.key_buf.as_slice()) {
            *count += 1;
        } else {
            if self.joint.len() >= cap {
                return Err(Error::JointSupportExceeded { cap });
            }
            self.joint.insert(self.key_buf.clone(), 1);
        }
        Ok(())
    }
}

/// Precomputed single-column run: only the ages about one source item.
struct ColumnCtx {
    source: NodeId,
    tx_prob: Vec<f64>,
    edges: Vec<(NodeId, NodeId, f64)>,
    floor_ages: Vec<u64>,
    tracked_nodes: Vec<NodeId>,
    joint_nodes: Option<Vec<NodeId>>,
}

/// Precomputed full-matrix run.
struct GeneralCtx {
    node_count: usize,
    windex: Vec<WeightedIndex<f64>>,
    edges: Vec<(NodeId, NodeId, f64)>,
    floor: Vec<u64>,
    tracked_cells: Vec<usize>,
    joint_cells: Option<Vec<usize>>,
}

enum SimCtx {
    Column(ColumnCtx),
    General(GeneralCtx),
}

const UNREACHABLE: u64 = u64::MAX;

fn run_column_rep(config: &SimConfig, ctx: &ColumnCtx, rep: u32) -> Result<RepOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(config.seed, rep));
    let n = config.topology.node_count();
    let mut ages = ctx.floor_ages.clone();
    let mut tx = vec![false; n + 1];
    let mut best = vec![UNREACHABLE; n + 1];
    let mut out = RepOutput::new(ctx.tracked_nodes.len());
    let total_slots = config.burn_in_slots + config.sample_slots;
    for slot in 0..total_slots {
        for (k, flag) in tx.iter_mut().enumerate().skip(1) {
            let p = ctx.tx_prob[k];
            *flag = p >= 1.0 || (p > 0.0 && rng.gen_bool(p));
        }
        for &(k, i, p) in &ctx.edges {
            // The item content never affects delivery, so skipping the draw
            // when the sender holds nothing relevant leaves the law intact.
            if !tx[k] || ages[k] == UNREACHABLE {
                continue;
            }
            if p >= 1.0 || rng.gen_bool(p) {
                best[i] = best[i].min(ages[k]);
            }
        }
        for i in 1..=n {
            let a = ages[i];
            if a == UNREACHABLE || i == ctx.source {
                best[i] = UNREACHABLE;
                continue;
            }
            ages[i] = a.min(best[i]) + 1;
            best[i] = UNREACHABLE;
        }
        if slot >= config.burn_in_slots {
            for (idx, &node) in ctx.tracked_nodes.iter().enumerate() {
                out.record(idx, ages[node], config.histogram_cap);
            }
            if let Some(nodes) = &ctx.joint_nodes {
                out.key_buf.clear();
                out.key_buf.extend(nodes.iter().map(|&node| ages[node]));
                out.record_joint(config.joint_support_cap)?;
            }
        }
    }
    Ok(out)
}

fn run_general_rep(config: &SimConfig, ctx: &GeneralCtx, rep: u32) -> Result<RepOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(config.seed, rep));
    let n = ctx.node_count;
    let mut ages = ctx.floor.clone();
    let mut best = vec![UNREACHABLE; n * n];
    let mut touched: Vec<usize> = Vec::new();
    let mut tx = vec![0usize; n + 1];
    let mut out = RepOutput::new(ctx.tracked_cells.len());
    let total_slots = config.burn_in_slots + config.sample_slots;
    for slot in 0..total_slots {
        for (k, item) in tx.iter_mut().enumerate().skip(1) {
            *item = ctx.windex[k - 1].sample(&mut rng) + 1;
        }
        for &(k, i, p) in &ctx.edges {
            // Every lossy edge draws, whatever is broadcast, to mirror the
            // one-slot reference sampler.
            if !(p >= 1.0 || rng.gen_bool(p)) {
                continue;
            }
            let j = tx[k];
            if j == i {
                continue;
            }
            let offered = if j == k {
                0
            } else {
                ages[(k - 1) * n + (j - 1)]
            };
            if offered == UNREACHABLE {
                continue;
            }
            let cell = (i - 1) * n + (j - 1);
            if best[cell] == UNREACHABLE {
                touched.push(cell);
            }
            best[cell] = best[cell].min(offered);
        }
        for &cell in &touched {
            if ages[cell] != UNREACHABLE {
                ages[cell] = ages[cell].min(best[cell]);
            }
            best[cell] = UNREACHABLE;
        }
        touched.clear();
        for age in ages.iter_mut() {
            if *age != UNREACHABLE {
                *age += 1;
            }
        }
        if slot >= config.burn_in_slots {
            for (idx, &cell) in ctx.tracked_cells.iter().enumerate() {
                out.record(idx, ages[cell], config.histogram_cap);
            }
            if let Some(cells) = &ctx.joint_cells {
                out.key_buf.clear();
                out.key_buf.extend(cells.iter().map(|&cell| ages[cell]));
                out.record_joint(config.joint_support_cap)?;
            }
        }
    }
    Ok(out)
}

/// Runs the configured simulation and collects age samples. Deterministic
/// in the seed: replications are merged in order regardless of scheduling.
pub fn run_simulation(config: &SimConfig) -> Result<AgeSamples> {
    let topo = &config.topology;
    let n = topo.node_count();
    if config.policy.node_count() != n {
        return Err(Error::InvalidConfig(format!(
            "policy covers {} nodes, topology has {n}",
            config.policy.node_count()
        )));
    }
    config.channel.validate_for(topo)?;
    if config.sample_slots == 0 {
        return Err(Error::InvalidParameter {
            name: "sample_slots",
            reason: "must be positive".into(),
        });
    }
    if config.replications == 0 {
        return Err(Error::InvalidParameter {
            name: "replications",
            reason: "must be positive".into(),
        });
    }
    if config.histogram_cap == 0 {
        return Err(Error::InvalidParameter {
            name: "histogram_cap",
            reason: "must be positive".into(),
        });
    }
    let floor = shortest_path_floor(topo);
    let pairs: Vec<(NodeId, NodeId)> = match &config.tracked {
        TrackedPairs::All => floor.keys().copied().collect(),
        TrackedPairs::Pairs(list) => {
            let mut sorted = list.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != list.len() {
                return Err(Error::InvalidConfig("duplicate tracked pair".into()));
            }
            for &(i, j) in &sorted {
                if !floor.contains_key(&(i, j)) {
                    return Err(Error::PairsNotTracked(format!(
                        "({i}, {j}) has no directed path"
                    )));
                }
            }
            sorted
        }
    };
    if pairs.is_empty() {
        return Err(Error::InvalidConfig(
            "topology has no reachable pairs to track".into(),
        ));
    }
    let joint_pairs = match &config.joint_pairs {
        None => None,
        Some(list) => {
            if list.is_empty() {
                return Err(Error::EmptySubset);
            }
            let mut seen = BTreeSet::new();
            for pair in list {
                if pairs.binary_search(pair).is_err() {
                    return Err(Error::PairsNotTracked(format!(
                        "joint pair ({}, {}) is not tracked",
                        pair.0, pair.1
                    )));
                }
                if !seen.insert(*pair) {
                    return Err(Error::InvalidConfig("duplicate joint pair".into()));
                }
            }
            Some(list.clone())
        }
    };

    let columns: BTreeSet<NodeId> = pairs.iter().map(|&(_, j)| j).collect();
    let ctx = if columns.len() == 1 {
        let source = *columns.iter().next().expect("nonempty");
        let mut tx_prob = vec![0.0; n + 1];
        for k in 1..=n {
            tx_prob[k] = config.policy.prob(k, source);
        }
        let mut floor_ages = vec![UNREACHABLE; n + 1];
        floor_ages[source] = 0;
        for i in 1..=n {
            if let Some(&d) = floor.get(&(i, source)) {
                floor_ages[i] = d;
            }
        }
        SimCtx::Column(ColumnCtx {
            source,
            tx_prob,
            edges: topo
                .edges()
                .map(|e| (e.0, e.1, config.channel.success_prob(e)))
                .collect(),
            floor_ages,
            tracked_nodes: pairs.iter().map(|&(i, _)| i).collect(),
            joint_nodes: joint_pairs
                .as_ref()
                .map(|jp| jp.iter().map(|&(i, _)| i).collect()),
        })
    } else {
        let windex = (1..=n)
            .map(|k| {
                WeightedIndex::new(config.policy.row(k).iter().copied())
                    .map_err(|e| Error::InvalidPolicy(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut floor_matrix = vec![UNREACHABLE; n * n];
        for (&(i, j), &d) in &floor {
            floor_matrix[(i - 1) * n + (j - 1)] = d;
        }
        let cell = |&(i, j): &(NodeId, NodeId)| (i - 1) * n + (j - 1);
        SimCtx::General(GeneralCtx {
            node_count: n,
            windex,
            edges: topo
                .edges()
                .map(|e| (e.0, e.1, config.channel.success_prob(e)))
                .collect(),
            floor: floor_matrix,
            tracked_cells: pairs.iter().map(cell).collect(),
            joint_cells: joint_pairs.as_ref().map(|jp| jp.iter().map(cell).collect()),
        })
    };

    let outputs: Vec<RepOutput> = (0..config.replications)
        .into_par_iter()
        .map(|rep| match &ctx {
            SimCtx::Column(c) => run_column_rep(config, c, rep),
            SimCtx::General(g) => run_general_rep(config, g, rep),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut samples = AgeSamples {
        pairs: pairs.clone(),
        sample_slots: config.sample_slots,
        replications: config.replications,
        histogram_cap: config.histogram_cap,
        hists: vec![BTreeMap::new(); pairs.len()],
        overflow: vec![0; pairs.len()],
        rep_stats: vec![Vec::with_capacity(outputs.len()); pairs.len()],
        joint_pairs,
        joint: BTreeMap::new(),
    };
    for out in outputs {
        for (idx, stat) in out.stats.into_iter().enumerate() {
            samples.rep_stats[idx].push(stat);
        }
        for (idx, hist) in out.hists.into_iter().enumerate() {
            for (age, count) in hist {
                *samples.hists[idx].entry(age).or_insert(0) += count;
            }
        }
        for (idx, extra) in out.overflow.into_iter().enumerate() {
            samples.overflow[idx] += extra;
        }
        for (key, count) in out.joint {
            match samples.joint.get_mut(&key) {
                Some(c) => *c += count,
                None => {
                    if samples.joint.len() >= config.joint_support_cap {
                        return Err(Error::JointSupportExceeded {
                            cap: config.joint_support_cap,
                        });
                    }
                    samples.joint.insert(key, count);
                }
            }
        }
    }
    Ok(samples)
}
