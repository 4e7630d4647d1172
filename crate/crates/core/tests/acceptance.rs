//! End-to-end acceptance gate, run as a plain binary so every criterion
//! prints one PASS/FAIL line with its headline metric and elapsed time in
//! the default `cargo test` output. Exits nonzero if any criterion fails.

use std::time::Instant;

use aoi_gossip::line_tree::GeomSumSpec;
use aoi_gossip::ring::{
    approx_moments, optimal_beta_closed_form, optimal_beta_numeric, ring4_joint_algorithm2,
    Ring4Channels,
};
use aoi_gossip::star::{
    star2_covariance, star2_joint_closed_form, star2_product_form_defect, star_joint_algorithm1,
    star_joint_pmf_box,
};
use aoi_gossip::truncated::{ring4_stationary, star_stationary};
use aoi_gossip::{
    run_simulation, shortest_path_floor, step, theta, theta_of_node, AgeState, ChannelModel,
    LambdaTable, PolicyTable, SimConfig, Topology, TrackedPairs,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Check {
    ok: bool,
    metric: String,
}

fn check(ok: bool, metric: String) -> Check {
    Check { ok, metric }
}

fn stderr_of(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (n - 1.0) / n).sqrt()
}

fn main() {
    let criteria: [(u32, &str, f64, fn() -> Check); 8] = [
        (1, "single-link geometric age", 10.0, criterion_1_single_link_geometric_age),
        (2, "two-receiver closed form vs recursion", 1.0, criterion_2_closed_form_vs_recursion),
        (3, "exact solvers vs truncated chains", 60.0, criterion_3_exact_vs_truncated),
        (4, "ring simulation vs exact joint", 60.0, criterion_4_ring_sim_vs_exact_joint),
        (5, "line moments", 30.0, criterion_5_line_moments),
        (6, "ring asymptotics vs simulation", 300.0, criterion_6_asymptotics_vs_simulation),
        (7, "optimal beta convergence", 10.0, criterion_7_optimal_beta_convergence),
        (8, "property suite", 60.0, criterion_8_property_suite),
    ];
    let mut all_ok = true;
    for (n, label, budget, run) in criteria {
        let t0 = Instant::now();
        let result = std::panic::catch_unwind(run);
        let elapsed = t0.elapsed().as_secs_f64();
        let (ok, metric) = match result {
            Ok(c) => (c.ok && elapsed < budget, c.metric),
            Err(_) => (false, "panicked".to_string()),
        };
        println!(
            "criterion {n} ({label}): {} ({metric}, {elapsed:.2}s)",
            if ok { "PASS" } else { "FAIL" }
        );
        all_ok &= ok;
    }
    std::process::exit(if all_ok { 0 } else { 1 });
}

fn criterion_1_single_link_geometric_age() -> Check {
    let topology = Topology::star(1).unwrap();
    let policy = PolicyTable::star(1, 0.5).unwrap();
    let mut config = SimConfig::new(topology, policy, ChannelModel::ideal(), 1_000_000, 0xA01);
    config.tracked = TrackedPairs::Pairs(vec![(2, 1)]);
    let samples = run_simulation(&config).unwrap();
    let ks = samples.ks_distance_to_geometric((2, 1), 0.5).unwrap();
    check(ks < 0.005, format!("ks={ks:.5}"))
}

fn criterion_2_closed_form_vs_recursion() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA02);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let mass: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let table = LambdaTable::new(vec![1, 2], mass).unwrap();
        for a1 in 1..=20u64 {
            for a2 in 1..=20u64 {
                let closed = star2_joint_closed_form(&table, (a1, a2)).unwrap();
                let rec = star_joint_algorithm1(&table, &[1, 2], &[a1, a2]).unwrap();
                worst = worst.max((closed - rec).abs());
            }
        }
    }
    check(worst <= 1e-12, format!("max dev={worst:.2e}"))
}

fn criterion_3_exact_vs_truncated() -> Check {
    let k = 60;
    let table = LambdaTable::from_independent_links(&[(1, 0.5), (2, 0.6), (3, 0.7)]).unwrap();
    let alg1 = star_joint_pmf_box(&table, &[1, 2, 3], k).unwrap();
    let tv_star = alg1.total_variation(&star_stationary(&table, k).unwrap()).unwrap();

    let uniform = Ring4Channels::from_policy(1.0, 0.25).unwrap();
    let concentrated = Ring4Channels::from_policy(0.1, 0.5).unwrap();
    let a2_uniform = ring4_joint_algorithm2(&uniform, k).unwrap();
    let a2_concentrated = ring4_joint_algorithm2(&concentrated, k).unwrap();
    let tv_uniform = a2_uniform
        .total_variation(&ring4_stationary(&uniform, k).unwrap())
        .unwrap();
    let tv_concentrated = a2_concentrated
        .total_variation(&ring4_stationary(&concentrated, k).unwrap())
        .unwrap();

    // The concentrated policy piles mass onto the freshest state (1, 2)
    // while the uniform policy spreads it out to older antipode ages.
    let mean_j = |pmf: &aoi_gossip::JointPmf| {
        pmf.marginal(1)
            .unwrap()
            .iter()
            .map(|(&j, &p)| j as f64 * p)
            .sum::<f64>()
    };
    let spread_ok = a2_concentrated.prob(&[1, 2]) > a2_uniform.prob(&[1, 2])
        && mean_j(&a2_uniform) > mean_j(&a2_concentrated);

    let worst = tv_star.max(tv_uniform).max(tv_concentrated);
    let ok = worst <= 1e-6 && spread_ok;
    if !ok {
        println!(
            "  star={tv_star:.2e} uniform={tv_uniform:.2e} \
             concentrated={tv_concentrated:.2e} spread_ok={spread_ok}"
        );
    }
    check(ok, format!("max tv={worst:.2e}"))
}

fn criterion_4_ring_sim_vs_exact_joint() -> Check {
    let topology = Topology::ring(4).unwrap();
    let policy = PolicyTable::ring(1.0, 0.25, 2).unwrap();
    let mut config = SimConfig::new(topology, policy, ChannelModel::ideal(), 1_000_000, 0xA04);
    config.tracked = TrackedPairs::Pairs(vec![(2, 1), (3, 1)]);
    config.joint_pairs = Some(vec![(2, 1), (3, 1)]);
    let samples = run_simulation(&config).unwrap();
    let empirical = samples.empirical_joint_pmf(&[(2, 1), (3, 1)]).unwrap();
    let exact = ring4_joint_algorithm2(
        &Ring4Channels::from_policy(1.0, 0.25).unwrap(),
        empirical.box_size().max(3) + 8,
    )
    .unwrap();
    let tv = empirical.total_variation(&exact).unwrap();
    check(tv < 0.01, format!("tv={tv:.4}"))
}

fn criterion_5_line_moments() -> Check {
    let topology = Topology::line(3).unwrap();
    let policy = PolicyTable::line(3, &[0.5, 0.25]).unwrap();
    let mut config = SimConfig::new(topology, policy, ChannelModel::ideal(), 20_000, 0xA05);
    config.tracked = TrackedPairs::Pairs(vec![(3, 1)]);
    config.replications = 10;
    let samples = run_simulation(&config).unwrap();
    let est = samples.estimate_moments((3, 1)).unwrap();
    let se_mean = est.stderr_of_mean.unwrap();
    let se_var = stderr_of(&samples.replication_variances((3, 1)).unwrap());
    // Two hops at 0.5 and 0.25: mean 2 + 4 = 6, variance 2 + 12 = 14.
    let mean_dev = (est.mean - 6.0).abs();
    let var_dev = (est.variance - 14.0).abs();
    let ok = mean_dev <= 3.0 * se_mean && var_dev <= 3.0 * se_var;
    if !ok {
        println!("  mean dev {mean_dev} vs se {se_mean}, var dev {var_dev} vs se {se_var}");
    }
    check(ok, format!("mean={:.3} var={:.2}", est.mean, est.variance))
}

fn criterion_6_asymptotics_vs_simulation() -> Check {
    let m = 15;
    let beta = 1.0 / 30.0;
    let topology = Topology::ring(2 * m).unwrap();
    let policy = PolicyTable::ring(1.0, beta, m).unwrap();
    let pairs: Vec<_> = (2..=2 * m).map(|i| (i, 1)).collect();
    let mut config = SimConfig::new(topology, policy, ChannelModel::ideal(), 50_000, 0xA06);
    config.tracked = TrackedPairs::Pairs(pairs.clone());
    config.burn_in_slots = 5_000;
    config.replications = 20;
    let samples = run_simulation(&config).unwrap();

    let mut worst_rel = 0.0f64;
    let mut ok = true;
    for &(i, _) in &pairs {
        let th = theta_of_node(i, m).unwrap();
        let approx = approx_moments(m, beta, th).unwrap();
        let est = samples.estimate_moments((i, 1)).unwrap();
        let se_mean = est.stderr_of_mean.unwrap();
        let se_var = stderr_of(&samples.replication_variances((i, 1)).unwrap());
        let rel = (est.mean - approx.zhat_mean).abs() / approx.zhat_mean;
        worst_rel = worst_rel.max(rel);
        // The sampled age sits within 5% of the approximation, from above
        // up to noise, and its variance never beats the formula's.
        let node_ok = rel < 0.05
            && est.mean >= approx.zhat_mean - 3.0 * se_mean
            && est.variance <= approx.variance() + 3.0 * se_var;
        if !node_ok {
            println!(
                "  node {i} (theta {th}): sim mean {:.3} vs {:.3}, sim var {:.1} vs {:.1}",
                est.mean,
                approx.zhat_mean,
                est.variance,
                approx.variance()
            );
        }
        ok &= node_ok;
    }
    check(ok, format!("worst mean dev={:.2}%", 100.0 * worst_rel))
}

fn criterion_7_optimal_beta_convergence() -> Check {
    let mut ok = true;
    let mut worst_at_100 = 0.0f64;
    for th in [theta(0, 1), theta(1, 4), theta(1, 2)] {
        let mut prev = f64::INFINITY;
        for m in [10usize, 25, 50, 100] {
            let closed = optimal_beta_closed_form(m, th).unwrap();
            if th == theta(0, 1) {
                // Interior optimum at the antipode: exactly sqrt(2) / (2m).
                let exact = 2.0f64.sqrt() / (2.0 * m as f64);
                ok &= (closed - exact).abs() <= 1e-15 * exact;
            }
            let numeric = optimal_beta_numeric(m, th).unwrap().beta;
            let rel = (numeric - closed).abs() / closed;
            ok &= rel < prev;
            if m == 100 {
                worst_at_100 = worst_at_100.max(rel);
                ok &= rel < 0.05;
            }
            prev = rel;
        }
    }
    check(ok, format!("worst gap at m=100: {:.2}%", 100.0 * worst_at_100))
}

fn criterion_8_property_suite() -> Check {
    let mut ok = true;

    // Policy rows are distributions.
    for table in [
        PolicyTable::ring(1.0, 0.25, 2).unwrap(),
        PolicyTable::ring(0.1, 0.5, 2).unwrap(),
        PolicyTable::line(5, &[0.5, 0.25]).unwrap(),
        PolicyTable::star(3, 0.7).unwrap(),
    ] {
        for node in 1..=table.node_count() {
            let sum: f64 = table.row(node).iter().sum();
            ok &= (sum - 1.0).abs() < 1e-12;
        }
    }

    // PMFs normalise once the tail is accounted for, and the tail honours
    // its bound.
    let spec = GeomSumSpec::new(vec![0.5, 0.25, 0.8]).unwrap();
    let pmf = spec.pmf(200).unwrap();
    let total: f64 = pmf.iter().map(|(_, p)| p).sum();
    ok &= (total + pmf.tail_mass() - 1.0).abs() < 1e-9;
    ok &= pmf.tail_mass() <= pmf.tail_bound() + 1e-15;
    let table = LambdaTable::from_independent_links(&[(1, 0.5), (2, 0.6)]).unwrap();
    let boxed = star_joint_pmf_box(&table, &[1, 2], 80).unwrap();
    ok &= (boxed.total_mass() + boxed.tail_mass_bound() - 1.0).abs() < 1e-9;
    let a2 = ring4_joint_algorithm2(&Ring4Channels::from_policy(1.0, 0.25).unwrap(), 100).unwrap();
    ok &= a2.total_mass() >= 1.0 - a2.tail_mass_bound() - 1e-12;
    ok &= a2.total_mass() <= 1.0 + 1e-12;

    // Ages move by at most one per slot and never drop below the
    // shortest-path floor.
    let topology = Topology::ring(6).unwrap();
    let policy = PolicyTable::ring(0.5, 0.3, 3).unwrap();
    let channel = ChannelModel::independent_uniform(&topology, 0.8).unwrap();
    let floor = shortest_path_floor(&topology);
    let mut rng = ChaCha8Rng::seed_from_u64(0xA08);
    let mut state = AgeState::initial(&topology);
    for _ in 0..200 {
        let (next, _) = step(&state, &topology, &policy, &channel, &mut rng).unwrap();
        for (pair, age) in next.ages() {
            ok &= age <= state.age(pair.0, pair.1).unwrap() + 1;
            ok &= age >= floor[&pair];
        }
        state = next;
    }

    // Covariance vanishes exactly when receptions factorise.
    let indep = LambdaTable::from_independent_links(&[(1, 0.4), (2, 0.7)]).unwrap();
    ok &= star2_product_form_defect(&indep).unwrap().abs() < 1e-15;
    ok &= star2_covariance(&indep).unwrap().abs() < 1e-12;
    let coupled = LambdaTable::new(vec![1, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
    ok &= star2_product_form_defect(&coupled).unwrap() < 0.0;
    ok &= star2_covariance(&coupled).unwrap() > 0.0;

    // Identical specs reproduce byte-identical samples; a new seed differs.
    let base = SimConfig::new(
        Topology::line(3).unwrap(),
        PolicyTable::line(3, &[0.5, 0.25]).unwrap(),
        ChannelModel::ideal(),
        2_000,
        0xA08,
    );
    let a = run_simulation(&base).unwrap();
    let b = run_simulation(&base).unwrap();
    ok &= a == b;
    let mut reseeded = base.clone();
    reseeded.seed ^= 1;
    ok &= run_simulation(&reseeded).unwrap() != a;

    check(ok, "invariants hold".to_string())
}
