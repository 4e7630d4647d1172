//! Brute-force stationary distributions of age chains truncated to a box.
//!
//! These solvers build the full transition kernel of the age process with
//! every age capped at `k` (an increment that would leave the box stays at
//! the cap) and run power iteration to the fixed point. They share no code
//! with the closed forms and recursions elsewhere in the crate, so they
//! serve as independent oracles: on a box large enough that the capped
//! states carry negligible mass, the results must agree.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::joint::JointPmf;
use crate::ring::Ring4Channels;
use crate::star::LambdaTable;

const RESIDUAL_TOL: f64 = 1e-13;
const MAX_ITERATIONS: usize = 200_000;
const MAX_STATES: usize = 8_000_000;

/// Runs `v <- v P` from a point mass at `start` until the L1 step residual
/// drops below tolerance. `push` must scatter `cur` one slot forward into
/// `next` (which arrives zeroed).
fn power_iterate<F>(dim: usize, start: usize, push: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut cur = vec![0.0f64; dim];
    cur[start] = 1.0;
    let mut next = vec![0.0f64; dim];
    for _ in 0..MAX_ITERATIONS {
        next.iter_mut().for_each(|x| *x = 0.0);
        push(&cur, &mut next);
        let residual: f64 = cur.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut cur, &mut next);
        if residual < RESIDUAL_TOL {
            let total: f64 = cur.iter().sum();
            cur.iter_mut().for_each(|x| *x /= total);
            return Ok(cur);
        }
    }
    let residual: f64 = cur.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
    Err(Error::NotConverged { residual })
}

/// Stationary joint ages of all receivers in `table`, with each age capped
/// at `k`. State `(a_1, ..., a_n)` steps to ages `1` for the receivers in
/// the slot's reception subset and `min(a + 1, k)` for the rest. Axes
/// follow the receivers in increasing id order.
pub fn star_stationary(table: &LambdaTable, k: u64) -> Result<JointPmf> {
    if k < 2 {
        return Err(Error::BoxTooSmall { k, min: 2 });
    }
    let n = table.node_count();
    let kk = k as usize;
    let mut dim = 1usize;
    for _ in 0..n {
        dim = dim
            .checked_mul(kk)
            .filter(|&d| d <= MAX_STATES)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "state space {kk}^{n} too large for the truncated solver"
                ))
            })?;
    }
    for &node in table.nodes() {
        if table.marginal_reception_prob(node)? <= 0.0 {
            return Err(Error::NoStationaryDistribution(node));
        }
    }
    let masks = 1usize << n;
    let mut subset_mass = vec![0.0f64; masks];
    for (m, slot) in subset_mass.iter_mut().enumerate() {
        let mut set = Vec::new();
        for (bit, &node) in table.nodes().iter().enumerate() {
            if m >> bit & 1 == 1 {
                set.push(node);
            }
        }
        *slot = table.mass_of(&set)?;
    }
    // Axis `d` has stride kk^d; precompute, for every state, the index of
    // the fully aged successor and the per-axis amount to subtract when an
    // axis resets to age one instead.
    let strides: Vec<usize> = (0..n).map(|d| kk.pow(d as u32)).collect();
    let mut aged_index = vec![0usize; dim];
    let mut reset_sub = vec![0usize; dim * n];
    for s in 0..dim {
        let mut aged = 0usize;
        for d in 0..n {
            let age = s / strides[d] % kk + 1;
            let aged_axis = (age + 1).min(kk);
            aged += (aged_axis - 1) * strides[d];
            reset_sub[s * n + d] = (aged_axis - 1) * strides[d];
        }
        aged_index[s] = aged;
    }
    let push = |cur: &[f64], next: &mut [f64]| {
        let mut sub = vec![0usize; masks];
        for (s, &weight) in cur.iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            let base = aged_index[s];
            let resets = &reset_sub[s * n..(s + 1) * n];
            for m in 1..masks {
                let low = m.trailing_zeros() as usize;
                sub[m] = sub[m & (m - 1)] + resets[low];
            }
            next[base] += weight * subset_mass[0];
            for (m, &sm) in subset_mass.iter().enumerate().skip(1) {
                next[base - sub[m]] += weight * sm;
            }
        }
    };
    let stationary = power_iterate(dim, 0, push)?;
    let mut mass = BTreeMap::new();
    for (s, &p) in stationary.iter().enumerate() {
        if p > 0.0 {
            let ages: Vec<u64> = (0..n).map(|d| (s / strides[d] % kk) as u64 + 1).collect();
            mass.insert(ages, p);
        }
    }
    JointPmf::new(n, k, 0.0, mass)
}

/// Stationary joint law of (neighbour age, antipode age) on the four-node
/// ring with ideal reception and ages capped at `k`, solved by brute force
/// from the slot dynamics: the neighbour age resets to one when the source
/// fires, and the antipode takes the smaller of its own age and the old
/// neighbour age whenever at least one relay fires. Axis 0 is the
/// neighbour age, axis 1 the antipode age.
pub fn ring4_stationary(channels: &Ring4Channels, k: u64) -> Result<JointPmf> {
    if k < 2 {
        return Err(Error::BoxTooSmall { k, min: 2 });
    }
    let kk = k as usize;
    let dim = kk * kk;
    let beta = channels.source;
    let rho =
        channels.relay_cw + channels.relay_ccw - channels.relay_cw * channels.relay_ccw;
    let cases = [
        (beta * rho, true, true),
        (beta * (1.0 - rho), true, false),
        ((1.0 - beta) * rho, false, true),
        ((1.0 - beta) * (1.0 - rho), false, false),
    ];
    let push = |cur: &[f64], next: &mut [f64]| {
        for (s, &weight) in cur.iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            let i = s / kk + 1;
            let j = s % kk + 1;
            for &(p, source_fired, relay_fired) in &cases {
                if p == 0.0 {
                    continue;
                }
                let ni = if source_fired { 1 } else { (i + 1).min(kk) };
                let nj = (if relay_fired { j.min(i) } else { j } + 1).min(kk);
                next[(ni - 1) * kk + (nj - 1)] += weight * p;
            }
        }
    };
    // Start from the floor state (1, 2).
    let stationary = power_iterate(dim, 1, push)?;
    let mut mass = BTreeMap::new();
    for (s, &p) in stationary.iter().enumerate() {
        if p > 0.0 {
            mass.insert(vec![(s / kk) as u64 + 1, (s % kk) as u64 + 1], p);
        }
    }
    JointPmf::new(2, k, 0.0, mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::star::{marginal_geometric, star2_joint_closed_form};
    use approx::assert_relative_eq;

    #[test]
    fn single_receiver_truncation_is_a_capped_geometric() {
        let table = LambdaTable::from_independent_links(&[(2, 0.5)]).unwrap();
        let pmf = star_stationary(&table, 30).unwrap();
        // pi(a) = r (1-r)^(a-1) below the cap and (1-r)^(k-1) at it.
        for a in 1..30u64 {
            assert_relative_eq!(
                pmf.prob(&[a]),
                0.5f64.powi(a as i32),
                epsilon = 1e-12,
                max_relative = 1e-6
            );
        }
        assert_relative_eq!(
            pmf.prob(&[30]),
            0.5f64.powi(29),
            epsilon = 1e-12,
            max_relative = 1e-6
        );
        assert_relative_eq!(pmf.total_mass(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn two_receivers_match_the_closed_form_away_from_the_cap() {
        let table = LambdaTable::new(vec![2, 3], vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        let pmf = star_stationary(&table, 50).unwrap();
        for a1 in 1..=12u64 {
            for a2 in 1..=12u64 {
                let exact = star2_joint_closed_form(&table, (a1, a2)).unwrap();
                assert_relative_eq!(
                    pmf.prob(&[a1, a2]),
                    exact,
                    epsilon = 1e-12,
                    max_relative = 1e-6
                );
            }
        }
    }

    #[test]
    fn three_receivers_have_geometric_marginals() {
        let table =
            LambdaTable::from_independent_links(&[(2, 0.5), (3, 0.6), (4, 0.7)]).unwrap();
        let pmf = star_stationary(&table, 25).unwrap();
        assert_relative_eq!(pmf.total_mass(), 1.0, max_relative = 1e-12);
        for (axis, node) in [(0usize, 2), (1, 3), (2, 4)] {
            let marginal = pmf.marginal(axis).unwrap();
            let geo = marginal_geometric(&table, node).unwrap();
            for a in 1..=10u64 {
                assert_relative_eq!(
                    marginal.get(&a).copied().unwrap_or(0.0),
                    geo.pmf(a),
                    epsilon = 1e-12,
                    max_relative = 1e-6
                );
            }
        }
    }

    #[test]
    fn ring4_truncation_reproduces_the_neighbour_geometric() {
        let ch = Ring4Channels::from_policy(1.0, 0.25).unwrap();
        let pmf = ring4_stationary(&ch, 60).unwrap();
        assert_relative_eq!(pmf.total_mass(), 1.0, max_relative = 1e-12);
        let marginal = pmf.marginal(0).unwrap();
        for i in 1..=10u64 {
            assert_relative_eq!(
                marginal.get(&i).copied().unwrap_or(0.0),
                0.25 * 0.75f64.powi(i as i32 - 1),
                max_relative = 1e-9
            );
        }
        // The antipode is never fresher than slot two and never beats the
        // neighbours.
        for key in [[1u64, 1u64], [5, 4], [9, 2]] {
            assert_eq!(pmf.prob(&key), 0.0);
        }
    }

    #[test]
    fn rejects_oversized_state_spaces() {
        let table = LambdaTable::from_independent_links(&[
            (1, 0.5),
            (2, 0.5),
            (3, 0.5),
            (4, 0.5),
            (5, 0.5),
        ])
        .unwrap();
        assert!(star_stationary(&table, 200).is_err());
    }
}
