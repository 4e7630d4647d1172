//! Ring networks: an exact joint recursion for the four-node ring and
//! Gaussian asymptotics for large rings.
//!
//! On a bidirectional ring every node relays items in both directions, so
//! information about a source reaches a node over two competing directed
//! paths. The four-node ring is small enough for an exact treatment of the
//! joint law of the neighbour and antipode ages. For large rings the two
//! directed path ages become approximately normal, and the age of a node at
//! ring coordinate `theta` is approximated by a geometric source term plus
//! the minimum of two Gaussians.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::joint::JointPmf;
use crate::line_tree::{GeomSumSpec, Moments};
use crate::model::{theta, PolicyTable, Theta};
use crate::normal::{std_normal_cdf, std_normal_pdf};
use crate::star::LambdaTable;

/// Per-slot success probabilities of the three independent events that
/// drive the four-node ring with an item fixed at node 1: the source
/// broadcast reaching both neighbours at once, and each neighbour's relay
/// reaching the antipode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ring4Channels {
    pub source: f64,
    pub relay_cw: f64,
    pub relay_ccw: f64,
}

impl Ring4Channels {
    pub fn new(source: f64, relay_cw: f64, relay_ccw: f64) -> Result<Self> {
        for (name, p) in [
            ("source", source),
            ("relay_cw", relay_cw),
            ("relay_ccw", relay_ccw),
        ] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidProbability {
                    name,
                    value: p,
                    range: "(0, 1]",
                });
            }
        }
        Ok(Self {
            source,
            relay_cw,
            relay_ccw,
        })
    }

    /// Channels induced by the standard ring policy on four nodes: the
    /// source fires with probability `beta`, and each neighbour relays the
    /// source's item with the policy's distance-one probability.
    pub fn from_policy(alpha: f64, beta: f64) -> Result<Self> {
        let policy = PolicyTable::ring(alpha, beta, 2)?;
        let rp = policy.ring_params().expect("ring-built policy");
        Self::new(beta, rp.q(theta(-1, 2))?, rp.q(theta(1, 2))?)
    }
}

/// Joint distribution of which of the three events fire in a slot, as a
/// subset table over the synthetic ids 1 (source), 2 (clockwise relay) and
/// 3 (anticlockwise relay). The events are independent.
pub fn ring4_lambda(channels: &Ring4Channels) -> Result<LambdaTable> {
    LambdaTable::from_independent_links(&[
        (1, channels.source),
        (2, channels.relay_cw),
        (3, channels.relay_ccw),
    ])
}

/// Exact stationary joint pmf of `(A_n, A_a)` on the four-node ring with
/// ideal reception, where `A_n` is the common age of the two neighbours of
/// the source and `A_a` the age of the antipode, tabulated for
/// `A_a <= k`. Axis 0 is the neighbour age, axis 1 the antipode age.
///
/// Both neighbours hear the source directly, so their ages coincide and are
/// geometric in the source rate. The antipode improves only through a relay,
/// which offers the (older) neighbour age, giving the invariant
/// `A_n <= A_a` and a column-by-column recursion: outside the diagonal a
/// state `(i, j)` is reached only from `(i - 1, j - 1)` with no event
/// firing, while the `i = 1` row and the diagonal absorb the source and
/// relay events against the neighbour marginal.
pub fn ring4_joint_algorithm2(channels: &Ring4Channels, k: u64) -> Result<JointPmf> {
    if k < 3 {
        return Err(Error::BoxTooSmall { k, min: 3 });
    }
    let beta = channels.source;
    let rho =
        channels.relay_cw + channels.relay_ccw - channels.relay_cw * channels.relay_ccw;
    let l_none = (1.0 - beta) * (1.0 - rho);
    let neighbour_marginal = |i: u64| beta * crate::star::fpow(1.0 - beta, i - 1);

    let kk = k as usize;
    // col[i - 1] holds pi(i, j) for the column currently being built.
    let mut col = vec![0.0f64; kk];
    let mut mass = BTreeMap::new();
    let mut col_sum;
    // Column j = 2: a relay fired last slot, so the antipode took the
    // then-current neighbour age 1; the source either fired too (i = 1) or
    // not (i = 2).
    col[0] = beta * rho * neighbour_marginal(1);
    col[1] = (1.0 - beta) * rho * neighbour_marginal(1);
    col_sum = col[0] + col[1];
    mass.insert(vec![1, 2], col[0]);
    mass.insert(vec![2, 2], col[1]);
    for j in 3..=k {
        let mut next = vec![0.0f64; kk];
        next[0] = beta * (1.0 - rho) * col_sum + beta * rho * neighbour_marginal(j - 1);
        for i in 2..j {
            next[i as usize - 1] = l_none * col[i as usize - 2];
        }
        next[j as usize - 1] = (1.0 - beta) * rho * neighbour_marginal(j - 1)
            + l_none * col[j as usize - 2];
        col_sum = 0.0;
        for (idx, &p) in next.iter().enumerate().take(j as usize) {
            col_sum += p;
            if p > 0.0 {
                mass.insert(vec![idx as u64 + 1, j], p);
            }
        }
        col = next;
    }
    // The antipode age is distributed as a two-hop relay chain, one
    // geometric per stage, which bounds the untabulated mass.
    let tail = GeomSumSpec::new(vec![beta, rho])?.tail_bound(k);
    JointPmf::new(2, k, tail, mass)
}

/// Moments of the two directed path ages for a node at grid coordinate
/// `theta` on a ring driven by `policy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectedAgeMoments {
    pub clockwise: Moments,
    pub anticlockwise: Moments,
}

/// Per-hop success chain of the clockwise path from the item's origin to
/// coordinate `theta`: first the origin's own broadcast, then one relay per
/// intermediate node, each forwarding the item with the policy probability
/// for its distance from the origin.
fn clockwise_spec(policy: &PolicyTable, th: Theta) -> Result<GeomSumSpec> {
    let rp = policy.ring_params().ok_or(Error::InvalidParameter {
        name: "policy",
        reason: "directed path ages need a ring policy".into(),
    })?;
    let m = rp.m as i64;
    let scaled = th * Ratio::from_integer(m);
    if !scaled.is_integer() {
        return Err(Error::ThetaOffGrid(th.to_string()));
    }
    let t = scaled.to_integer();
    if t <= -m || t >= m {
        return Err(Error::ThetaOffGrid(th.to_string()));
    }
    let mut probs = Vec::with_capacity((t + m) as usize);
    for d in -m..t {
        probs.push(rp.q(Ratio::new(d, m))?);
    }
    GeomSumSpec::new(probs)
}

/// Exact moments of the clockwise and anticlockwise path ages at `theta`.
/// At `theta = -1` the node is the origin itself and both ages are zero.
pub fn directed_age_moments(policy: &PolicyTable, th: Theta) -> Result<DirectedAgeMoments> {
    if th == Ratio::from_integer(-1) {
        let zero = Moments {
            mean: 0.0,
            variance: 0.0,
        };
        return Ok(DirectedAgeMoments {
            clockwise: zero,
            anticlockwise: zero,
        });
    }
    // The policy is symmetric in distance, so the anticlockwise chain to
    // theta equals the clockwise chain to -theta.
    Ok(DirectedAgeMoments {
        clockwise: clockwise_spec(policy, th)?.moments(),
        anticlockwise: clockwise_spec(policy, -th)?.moments(),
    })
}

/// Gaussian approximation of the age at ring coordinate `theta`, for the
/// non-decaying policy (`alpha = 1`) where every relay fires with the same
/// probability `c = (1 - beta) / (2m - 1)`.
///
/// The approximated quantity is `zhat = y + min(x_plus, x_minus)`: `y` is
/// the geometric source term with rate `beta`, and `x_plus`, `x_minus` are
/// the relay parts of the two directed path ages, treated as independent
/// normals with the exact means `mu = h / c` and variances
/// `sigma^2 = mu * (1 / c - 1)` for `h` relay hops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxMoments {
    pub m: usize,
    pub beta: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    /// `mu_plus - mu_minus`.
    pub mu_bar: f64,
    /// `sqrt(sigma_plus^2 + sigma_minus^2)`.
    pub delta: f64,
    /// Second moments `mu^2 + sigma^2` of the two relay parts.
    pub omega_plus: f64,
    pub omega_minus: f64,
    /// `1/beta + E[min]` under the Gaussian approximation.
    pub zhat_mean: f64,
    /// Legacy combination `-1/beta + omega_plus * Phi(-mu_bar / delta)
    /// + omega_minus * Phi(mu_bar / delta) - mu_bar * delta * phi(-mu_bar /
    /// delta)`, kept verbatim for reference output. It is not
    /// `E[zhat^2]` and can fall below `zhat_mean^2`; use
    /// [`ApproxMoments::second_moment`] for a proper second moment.
    pub zhat_second_moment: f64,
}

impl ApproxMoments {
    fn min_parts(&self) -> (f64, f64, f64) {
        if self.delta == 0.0 {
            // Both relay parts are deterministic.
            let mn = self.mu_plus.min(self.mu_minus);
            return (mn, mn * mn, 0.0);
        }
        let z = self.mu_bar / self.delta;
        let mean = self.mu_plus * std_normal_cdf(-z) + self.mu_minus * std_normal_cdf(z)
            - self.delta * std_normal_pdf(z);
        let second = self.omega_plus * std_normal_cdf(-z) + self.omega_minus * std_normal_cdf(z)
            - (self.mu_plus + self.mu_minus) * self.delta * std_normal_pdf(z);
        (mean, second, second - mean * mean)
    }

    /// `E[zhat^2]` from the definition of `zhat` as an independent sum:
    /// geometric second moment plus cross term plus the Gaussian minimum's
    /// second moment.
    pub fn second_moment(&self) -> f64 {
        let (min_mean, min_second, _) = self.min_parts();
        let y_mean = 1.0 / self.beta;
        let y_second = (2.0 - self.beta) / (self.beta * self.beta);
        y_second + 2.0 * y_mean * min_mean + min_second
    }

    /// Variance of `zhat` from its definition: geometric variance plus the
    /// variance of the Gaussian minimum.
    pub fn variance(&self) -> f64 {
        let (_, _, min_var) = self.min_parts();
        (1.0 - self.beta) / (self.beta * self.beta) + min_var
    }

    /// Variance implied by the legacy second-moment combination. Negative
    /// values occur near `|theta| = 1`, which is why [`Self::variance`]
    /// exists.
    pub fn printed_variance(&self) -> f64 {
        self.zhat_second_moment - self.zhat_mean * self.zhat_mean
    }
}

fn theta_to_f64(th: Theta) -> f64 {
    *th.numer() as f64 / *th.denom() as f64
}

/// Gaussian approximation of the age at coordinate `theta` on a ring of
/// `2 * m` nodes with relay decay one. `theta` may be any rational with
/// `(1 - |theta|) * m >= 1`; grid membership is not required because the
/// approximation treats the coordinate as a continuum position.
pub fn approx_moments(m: usize, beta: f64, th: Theta) -> Result<ApproxMoments> {
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "must be positive".into(),
        });
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidProbability {
            name: "beta",
            value: beta,
            range: "(0, 1)",
        });
    }
    // Degeneracy test in exact arithmetic: (1 - |theta|) * m < 1 collapses
    // one of the two directed chains to zero hops. Floating point misjudges
    // boundary cases like theta = 14/15 with m = 15.
    let abs_th = if th < Theta::from_integer(0) { -th } else { th };
    if abs_th * Theta::from_integer(m as i64) > Theta::from_integer(m as i64 - 1) {
        return Err(Error::DegenerateTheta(th.to_string()));
    }
    let c = (1.0 - beta) / (2.0 * m as f64 - 1.0);
    // Hop counts (1 +- theta) * m - 1 stay rational for the same reason:
    // at the boundary the short side must come out exactly zero, not -2e-16.
    let one = Theta::from_integer(1);
    let m_rat = Theta::from_integer(m as i64);
    let hops_plus = theta_to_f64((one + th) * m_rat - one);
    let hops_minus = theta_to_f64((one - th) * m_rat - one);
    let mu_plus = hops_plus / c;
    let mu_minus = hops_minus / c;
    let sigma_plus = (mu_plus * (1.0 / c - 1.0)).sqrt();
    let sigma_minus = (mu_minus * (1.0 / c - 1.0)).sqrt();
    let mu_bar = mu_plus - mu_minus;
    let delta = (sigma_plus * sigma_plus + sigma_minus * sigma_minus).sqrt();
    let omega_plus = mu_plus * mu_plus + sigma_plus * sigma_plus;
    let omega_minus = mu_minus * mu_minus + sigma_minus * sigma_minus;
    let (zhat_mean, zhat_second_moment) = if delta == 0.0 {
        let mn = mu_plus.min(mu_minus);
        let omega_min = if mu_plus <= mu_minus {
            omega_plus
        } else {
            omega_minus
        };
        (1.0 / beta + mn, -1.0 / beta + omega_min)
    } else {
        let z = mu_bar / delta;
        (
            1.0 / beta + mu_plus * std_normal_cdf(-z) + mu_minus * std_normal_cdf(z)
                - delta * std_normal_pdf(z),
            -1.0 / beta + omega_plus * std_normal_cdf(-z) + omega_minus * std_normal_cdf(z)
                - mu_bar * delta * std_normal_pdf(-z),
        )
    };
    Ok(ApproxMoments {
        m,
        beta,
        mu_plus,
        mu_minus,
        sigma_plus,
        sigma_minus,
        mu_bar,
        delta,
        omega_plus,
        omega_minus,
        zhat_mean,
        zhat_second_moment,
    })
}

/// Approximate mean age at `theta`; see [`approx_moments`].
pub fn zhat_mean(m: usize, beta: f64, th: Theta) -> Result<f64> {
    Ok(approx_moments(m, beta, th)?.zhat_mean)
}

/// Monte Carlo moments of the exact `zhat` (geometric source term plus the
/// minimum of the two directed relay chains) for an on-grid `theta`. Used
/// to check the Gaussian approximation against the distribution it
/// approximates.
pub fn sample_zhat_moments(
    m: usize,
    beta: f64,
    th: Theta,
    samples: u64,
    seed: u64,
) -> Result<Moments> {
    approx_moments(m, beta, th)?;
    let scaled = th * Ratio::from_integer(m as i64);
    if !scaled.is_integer() {
        return Err(Error::ThetaOffGrid(th.to_string()));
    }
    let t = scaled.to_integer();
    let hops_plus = (m as i64 + t - 1) as u64;
    let hops_minus = (m as i64 - t - 1) as u64;
    let c = (1.0 - beta) / (2.0 * m as f64 - 1.0);
    let source = Geometric::new(beta).map_err(|_| Error::InvalidProbability {
        name: "beta",
        value: beta,
        range: "(0, 1)",
    })?;
    let relay = Geometric::new(c).map_err(|_| Error::InvalidProbability {
        name: "relay rate",
        value: c,
        range: "(0, 1)",
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = |hops: u64, rng: &mut ChaCha8Rng| -> f64 {
        let mut total = 0u64;
        for _ in 0..hops {
            total += relay.sample(rng) + 1;
        }
        total as f64
    };
    let (mut sum, mut sumsq) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let y = (source.sample(&mut rng) + 1) as f64;
        let x_plus = chain(hops_plus, &mut rng);
        let x_minus = chain(hops_minus, &mut rng);
        let z = y + x_plus.min(x_minus);
        sum += z;
        sumsq += z * z;
    }
    let mean = sum / samples as f64;
    Ok(Moments {
        mean,
        variance: sumsq / samples as f64 - mean * mean,
    })
}

/// How the numeric broadcast-rate optimum was located.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaSearch {
    /// Unimodal scan plus golden-section refinement.
    GoldenSection,
    /// The coarse scan was not unimodal; a dense grid was used instead.
    DenseGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalBeta {
    pub beta: f64,
    pub search: BetaSearch,
}

/// Closed-form large-ring optimum of the broadcast rate:
/// `sqrt(2 / (1 - |theta|)) / (2 m)`.
pub fn optimal_beta_closed_form(m: usize, th: Theta) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "must be positive".into(),
        });
    }
    let t = theta_to_f64(th);
    if t.abs() >= 1.0 {
        return Err(Error::DegenerateTheta(th.to_string()));
    }
    let beta = (2.0 / (1.0 - t.abs())).sqrt() / (2.0 * m as f64);
    if beta >= 1.0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: format!("ring too small for an interior optimum at theta {th}"),
        });
    }
    Ok(beta)
}

/// Numeric minimiser of the approximate mean age over the broadcast rate.
/// A coarse scan brackets the minimum; if the scan looks unimodal the
/// bracket is refined by golden-section search to about 1e-6, otherwise a
/// dense grid is taken and flagged.
pub fn optimal_beta_numeric(m: usize, th: Theta) -> Result<OptimalBeta> {
    if m < 2 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "numeric search needs at least two nodes per side".into(),
        });
    }
    let f = |beta: f64| {
        approx_moments(m, beta, th)
            .map(|mm| mm.zhat_mean)
            .unwrap_or(f64::INFINITY)
    };
    const SCAN_POINTS: usize = 400;
    let lo = 1e-6;
    let hi = 1.0 - 1e-6;
    let at = |idx: usize| lo + (hi - lo) * idx as f64 / (SCAN_POINTS - 1) as f64;
    let values: Vec<f64> = (0..SCAN_POINTS).map(|idx| f(at(idx))).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(idx, _)| idx)
        .expect("nonempty scan");
    let mut descents = 0;
    for w in values.windows(2) {
        if w[1] < w[0] {
            descents += 1;
        }
    }
    // Unimodal means every descent happens before the scan minimum.
    let unimodal = descents == best;
    if !unimodal || best == 0 || best == SCAN_POINTS - 1 {
        let mut beta = lo;
        let mut best_beta = lo;
        let mut best_val = f64::INFINITY;
        while beta < hi {
            let v = f(beta);
            if v < best_val {
                best_val = v;
                best_beta = beta;
            }
            beta += 5e-7;
        }
        return Ok(OptimalBeta {
            beta: best_beta,
            search: BetaSearch::DenseGrid,
        });
    }
    let (mut a, mut b) = (at(best - 1), at(best + 1));
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-6 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    Ok(OptimalBeta {
        beta: 0.5 * (a + b),
        search: BetaSearch::GoldenSection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::theta_grid;
    use approx::assert_relative_eq;

    #[test]
    fn ring4_lambda_uniform_masses() {
        // alpha = 1, beta = 1/4 makes every broadcast probability 1/4, so
        // lambda(empty) = (3/4)^3 = 27/64 and lambda({2,3}) = 3/64.
        let ch = Ring4Channels::from_policy(1.0, 0.25).unwrap();
        assert_relative_eq!(ch.relay_cw, 0.25);
        assert_relative_eq!(ch.relay_ccw, 0.25);
        let lambda = ring4_lambda(&ch).unwrap();
        assert_relative_eq!(lambda.mass_of(&[]).unwrap(), 27.0 / 64.0);
        assert_relative_eq!(lambda.mass_of(&[2, 3]).unwrap(), 3.0 / 64.0);
    }

    #[test]
    fn ring4_recursion_uniform_hand_values() {
        // beta = 1/4, rho = 7/16: pi(1,2) = beta * rho * beta = 7/256,
        // pi(2,2) = (1 - beta) * rho * beta = 21/256,
        // pi(2,3) = lambda_empty * pi(1,2) = (27/64) * (7/256),
        // pi(1,3) = beta(1-rho)(pi(1,2) + pi(2,2)) + beta rho beta(1-beta)
        //         = (9/64)(28/256) + 21/1024 = 147/4096.
        let ch = Ring4Channels::from_policy(1.0, 0.25).unwrap();
        let pmf = ring4_joint_algorithm2(&ch, 40).unwrap();
        assert_relative_eq!(pmf.prob(&[1, 2]), 7.0 / 256.0, max_relative = 1e-13);
        assert_relative_eq!(pmf.prob(&[2, 2]), 21.0 / 256.0, max_relative = 1e-13);
        assert_relative_eq!(
            pmf.prob(&[2, 3]),
            27.0 / 64.0 * 7.0 / 256.0,
            max_relative = 1e-13
        );
        assert_relative_eq!(pmf.prob(&[1, 3]), 147.0 / 4096.0, max_relative = 1e-13);
        // The antipode never has age 1 and never beats the neighbours.
        assert_eq!(pmf.prob(&[1, 1]), 0.0);
        assert_eq!(pmf.prob(&[3, 2]), 0.0);
    }

    #[test]
    fn ring4_recursion_nearly_normalises_and_matches_marginal() {
        for (alpha, beta) in [(1.0, 0.25), (0.1, 0.5)] {
            let ch = Ring4Channels::from_policy(alpha, beta).unwrap();
            let pmf = ring4_joint_algorithm2(&ch, 120).unwrap();
            assert!(1.0 - pmf.total_mass() <= pmf.tail_mass_bound() + 1e-12);
            assert!(pmf.total_mass() <= 1.0 + 1e-12);
            // Neighbour marginal is geometric(beta) up to the tail.
            let marginal = pmf.marginal(0).unwrap();
            for i in 1..=8u64 {
                let expect = beta * (1.0 - beta).powi(i as i32 - 1);
                let got = marginal.get(&i).copied().unwrap_or(0.0);
                assert!(expect - got >= -1e-12);
                assert!(expect - got <= pmf.tail_mass_bound() + 1e-12);
            }
        }
    }

    #[test]
    fn directed_moments_uniform_ring() {
        // m = 15, beta = 1/30 gives c = (29/30)/29 = 1/30, so every hop of
        // the antipodal path has rate 1/30: mean 15 * 30 = 450 and variance
        // 15 * (29/30) * 900 = 13050.
        let policy = PolicyTable::ring(1.0, 1.0 / 30.0, 15).unwrap();
        let dm = directed_age_moments(&policy, theta(0, 1)).unwrap();
        assert_relative_eq!(dm.clockwise.mean, 450.0, max_relative = 1e-12);
        assert_relative_eq!(dm.clockwise.variance, 13050.0, max_relative = 1e-12);
        assert_relative_eq!(dm.anticlockwise.mean, 450.0, max_relative = 1e-12);

        let origin = directed_age_moments(&policy, theta(-1, 1)).unwrap();
        assert_eq!(origin.clockwise.mean, 0.0);
        assert_eq!(origin.anticlockwise.variance, 0.0);

        // One step clockwise from the origin: single hop at rate beta.
        let nb = directed_age_moments(&policy, theta(-14, 15)).unwrap();
        assert_relative_eq!(nb.clockwise.mean, 30.0, max_relative = 1e-12);
        assert_relative_eq!(nb.anticlockwise.mean, 450.0 + 420.0, max_relative = 1e-12);
    }

    #[test]
    fn directed_moments_swap_under_reflection() {
        let policy = PolicyTable::ring(0.4, 0.2, 6).unwrap();
        for t in theta_grid(6).skip(1) {
            let fwd = directed_age_moments(&policy, t).unwrap();
            let bwd = directed_age_moments(&policy, -t).unwrap();
            assert_relative_eq!(fwd.clockwise.mean, bwd.anticlockwise.mean, max_relative = 1e-12);
            assert_relative_eq!(
                fwd.clockwise.variance,
                bwd.anticlockwise.variance,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn approx_moments_antipode_values() {
        // m = 15, beta = 1/30: mu = 14 * 30 = 420 on both sides,
        // delta^2 = 2 * 420 * 29 = 24360, and the mean collapses to
        // 30 + 420 - sqrt(24360) * phi(0) = 387.734.
        let mm = approx_moments(15, 1.0 / 30.0, theta(0, 1)).unwrap();
        assert_relative_eq!(mm.mu_plus, 420.0, max_relative = 1e-12);
        assert_relative_eq!(mm.sigma_plus * mm.sigma_plus, 12180.0, max_relative = 1e-12);
        assert_relative_eq!(mm.zhat_mean, 387.734, max_relative = 1e-5);
        assert_relative_eq!(mm.zhat_second_moment, 188550.0, max_relative = 1e-12);
        // The legacy combination undershoots the proper second moment here.
        assert!(mm.second_moment() < mm.zhat_second_moment);
        assert!(mm.variance() > 0.0);
    }

    #[test]
    fn printed_variance_goes_negative_near_the_source() {
        // Next to the source one relay part is deterministic zero and the
        // legacy combination loses to zhat_mean^2.
        let mm = approx_moments(15, 1.0 / 30.0, theta(14, 15)).unwrap();
        assert!(mm.printed_variance() < 0.0);
        assert!(mm.variance() > 0.0);
        // The defining variance collapses to the geometric term since the
        // minimum is essentially the zero-hop side.
        assert_relative_eq!(
            mm.variance(),
            (1.0 - mm.beta) / (mm.beta * mm.beta),
            max_relative = 1e-3
        );
    }

    #[test]
    fn approx_mean_grows_with_distance() {
        let beta = 1.0 / 30.0;
        let mid = zhat_mean(15, beta, theta(0, 1)).unwrap();
        let closer = zhat_mean(15, beta, theta(7, 15)).unwrap();
        let close = zhat_mean(15, beta, theta(14, 15)).unwrap();
        assert!(close < closer);
        assert!(closer < mid);
    }

    #[test]
    fn approx_rejects_degenerate_coordinates() {
        assert!(matches!(
            approx_moments(2, 0.1, theta(-1, 1)),
            Err(Error::DegenerateTheta(_))
        ));
        assert!(matches!(
            approx_moments(2, 0.1, theta(9, 10)),
            Err(Error::DegenerateTheta(_))
        ));
        assert!(approx_moments(1, 0.1, theta(0, 1)).is_ok());
    }

    #[test]
    fn single_pair_ring_collapses_to_geometric() {
        // m = 1, theta = 0: no relay hops at all, so zhat is the source
        // geometric alone.
        let mm = approx_moments(1, 0.3, theta(0, 1)).unwrap();
        assert_eq!(mm.delta, 0.0);
        assert_relative_eq!(mm.zhat_mean, 1.0 / 0.3, max_relative = 1e-12);
        assert_relative_eq!(mm.variance(), 0.7 / 0.09, max_relative = 1e-12);
        assert_relative_eq!(
            mm.second_moment(),
            (2.0 - 0.3) / 0.09,
            max_relative = 1e-12
        );
    }

    #[test]
    fn gaussian_approximation_tracks_monte_carlo() {
        // At the antipode the two directed chains tie, which is where the
        // normal min formula is weakest: it tracks the mean and second
        // moment closely but pads the variance of the minimum (about 23%
        // high against sampling at m = 15).
        let mm = approx_moments(15, 1.0 / 30.0, theta(0, 1)).unwrap();
        let mc = sample_zhat_moments(15, 1.0 / 30.0, theta(0, 1), 200_000, 7).unwrap();
        assert!((mm.zhat_mean - mc.mean).abs() / mc.mean < 0.02);
        let true_second = mc.variance + mc.mean * mc.mean;
        assert!((mm.second_moment() - true_second).abs() / true_second < 0.02);
        assert!(mm.variance() > mc.variance);
        assert!((mm.variance() - mc.variance) / mc.variance < 0.35);
        // An off-centre node has distinct path lengths, the minimum is
        // nearly always the short side, and the variance padding vanishes.
        // The proper second moment stays close to the sampled one while
        // the legacy combination drifts far off.
        let mm = approx_moments(15, 1.0 / 30.0, theta(7, 15)).unwrap();
        let mc = sample_zhat_moments(15, 1.0 / 30.0, theta(7, 15), 200_000, 8).unwrap();
        assert!((mm.variance() - mc.variance).abs() / mc.variance < 0.05);
        let true_second = mc.variance + mc.mean * mc.mean;
        assert!((mm.second_moment() - true_second).abs() / true_second < 0.05);
        assert!((mm.zhat_second_moment - true_second).abs() / true_second > 0.10);
    }

    #[test]
    fn optimal_beta_closed_form_values() {
        // theta = 0: sqrt(2)/(2m); theta = 1/2: sqrt(4)/(2m) = 2/(2m).
        assert_relative_eq!(
            optimal_beta_closed_form(50, theta(0, 1)).unwrap(),
            2.0f64.sqrt() / 100.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            optimal_beta_closed_form(50, theta(1, 2)).unwrap(),
            0.02,
            max_relative = 1e-15
        );
        // m = 1 still yields an interior optimum at the origin (sqrt(2)/2)
        // but not at theta = 1/2, where the formula reaches 1.
        assert_relative_eq!(
            optimal_beta_closed_form(1, theta(0, 1)).unwrap(),
            2.0f64.sqrt() / 2.0,
            max_relative = 1e-15
        );
        assert!(optimal_beta_closed_form(1, theta(1, 2)).is_err());
        assert!(optimal_beta_closed_form(10, theta(-1, 1)).is_err());
    }

    #[test]
    fn numeric_optimum_is_near_the_closed_form_for_a_large_ring() {
        let numeric = optimal_beta_numeric(50, theta(0, 1)).unwrap();
        assert_eq!(numeric.search, BetaSearch::GoldenSection);
        let closed = optimal_beta_closed_form(50, theta(0, 1)).unwrap();
        assert!((numeric.beta - closed).abs() / closed < 0.08);
        // The optimum broadcasts its own item about sqrt(2) times as often
        // as it relays each other item.
        let c = (1.0 - numeric.beta) / 99.0;
        let ratio = numeric.beta / c;
        assert!((ratio - 2.0f64.sqrt()).abs() < 0.1);
        // And it actually minimises the scanned objective nearby.
        let at = |b: f64| zhat_mean(50, b, theta(0, 1)).unwrap();
        assert!(at(numeric.beta) <= at(numeric.beta * 1.05));
        assert!(at(numeric.beta) <= at(numeric.beta * 0.95));
    }
}
