//! Command dispatch. Each command resolves its parameters, computes, and
//! only then writes its CSV outputs and the run manifest from one place.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use aoi_gossip::line_tree;
use aoi_gossip::ring::{
    approx_moments, optimal_beta_closed_form, optimal_beta_numeric, ring4_joint_algorithm2,
    Ring4Channels,
};
use aoi_gossip::star::{marginal_geometric, star2_joint_closed_form, star_joint_pmf_box};
use aoi_gossip::truncated::{ring4_stationary, star_stationary};
use aoi_gossip::{
    run_simulation, star, theta_of_node, ChannelModel, LambdaTable, PolicyTable, SimConfig,
    Topology, TrackedPairs, SEED_RULE,
};

use crate::config::{
    parse_list_f64, parse_list_theta, parse_list_usize, parse_prob, parse_u64, parse_usize, Spec,
};

pub fn run(spec: &Spec) -> Result<i32, String> {
    match spec.command()? {
        "simulate" => simulate(spec),
        "exact-star" => exact_star(spec),
        "exact-ring4" => exact_ring4(spec),
        "approx-ring" => approx_ring(spec),
        "optimal-beta" => optimal_beta(spec),
        "validate" => validate(spec),
        _ => unreachable!("command checked by Spec::command"),
    }
}

/// Twelve significant digits, `NaN` spelled out.
fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.11e}")
    }
}

fn write_file(path: PathBuf, text: &str) -> Result<(), String> {
    fs::write(&path, text).map_err(|e| format!("cannot write '{}': {e}", path.display()))
}

/// One manifest per run: the tool version, the seed derivation rule, and
/// every resolved parameter. No timestamps, so reruns are byte-identical.
fn write_outputs(
    out: &Path,
    echo: &BTreeMap<String, String>,
    files: &[(&str, String)],
) -> Result<(), String> {
    fs::create_dir_all(out).map_err(|e| format!("cannot create '{}': {e}", out.display()))?;
    let mut manifest = String::new();
    manifest.push_str(&format!("tool_version = {}\n", env!("CARGO_PKG_VERSION")));
    manifest.push_str(&format!("seed_rule = {SEED_RULE}\n"));
    for (key, value) in echo {
        manifest.push_str(&format!("{key} = {value}\n"));
    }
    write_file(out.join("manifest.txt"), &manifest)?;
    for (name, text) in files {
        write_file(out.join(name), text)?;
    }
    Ok(())
}

/// Collects the resolved value of every parameter a command used,
/// starting from the entries of the parsed [`Spec`].
struct Echo(BTreeMap<String, String>);

impl Echo {
    fn new(spec: &Spec) -> Self {
        Echo(
            spec.entries()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    fn default(&mut self, key: &str, value: String) -> String {
        self.0
            .entry(key.to_string())
            .or_insert(value)
            .clone()
    }
}

fn simulate(spec: &Spec) -> Result<i32, String> {
    let out = spec.out_dir()?;
    let mut echo = Echo::new(spec);
    let kind = echo.default("topology", "ring".into());
    let nodes = parse_usize("nodes", spec.require("nodes")?)?;
    if nodes < 2 {
        return Err("invalid value for 'nodes': need at least two nodes".into());
    }

    let (topology, policy) = match kind.as_str() {
        "ring" => {
            let topology = Topology::ring(nodes).map_err(|e| format!("invalid 'nodes': {e}"))?;
            let alpha = parse_prob("alpha", &echo.default("alpha", "1".into()), "(0, 1]")?;
            let beta = parse_prob("beta", spec.require("beta")?, "(0, 1)")?;
            let policy = PolicyTable::ring(alpha, beta, nodes / 2).map_err(|e| e.to_string())?;
            (topology, policy)
        }
        "line" => {
            let relay = parse_list_f64("relay", spec.require("relay")?)?;
            let topology = Topology::line(nodes).map_err(|e| e.to_string())?;
            let policy = PolicyTable::line(nodes, &relay)
                .map_err(|e| format!("invalid value for 'relay': {e}"))?;
            (topology, policy)
        }
        "star" => {
            let transmit = parse_prob("transmit", spec.require("transmit")?, "(0, 1]")?;
            let topology = Topology::star(nodes - 1).map_err(|e| e.to_string())?;
            let policy = PolicyTable::star(nodes - 1, transmit).map_err(|e| e.to_string())?;
            (topology, policy)
        }
        other => {
            return Err(format!(
                "invalid value for 'topology': '{other}' is not one of ring, line, star"
            ))
        }
    };

    let channel = match spec.get("loss") {
        Some(raw) => {
            let loss = parse_prob("loss", raw, "[0, 1)")?;
            ChannelModel::independent_uniform(&topology, 1.0 - loss).map_err(|e| e.to_string())?
        }
        None => ChannelModel::ideal(),
    };

    let slots = parse_u64("slots", spec.require("slots")?)?;
    let seed = parse_u64("seed", &echo.default("seed", "0".into()))?;
    let burn_in = parse_u64(
        "burn_in",
        &echo.default("burn_in", (100 * nodes as u64).to_string()),
    )?;
    let replications = parse_u64("replications", &echo.default("replications", "1".into()))?;
    if replications == 0 || replications > u32::MAX as u64 {
        return Err("invalid value for 'replications': must be a positive 32-bit count".into());
    }
    let pmf_node = match spec.get("pmf_node") {
        Some(raw) => {
            let node = parse_usize("pmf_node", raw)?;
            if !(2..=nodes).contains(&node) {
                return Err(format!(
                    "invalid value for 'pmf_node': {node} is not a non-source node"
                ));
            }
            Some(node)
        }
        None => None,
    };

    let pairs: Vec<(usize, usize)> = (2..=nodes).map(|i| (i, 1)).collect();
    let mut config = SimConfig::new(topology.clone(), policy, channel, slots, seed);
    config.tracked = TrackedPairs::Pairs(pairs.clone());
    config.burn_in_slots = burn_in;
    config.replications = replications as u32;
    let samples = run_simulation(&config).map_err(|e| format!("simulate: {e}"))?;

    let mut moments = String::from("node,theta_num,theta_den,mean,variance,stderr\n");
    for &(i, _) in &pairs {
        let (tn, td) = match topology.ring_m() {
            Some(m) => {
                let th = theta_of_node(i, m).expect("grid node");
                (th.numer().to_string(), th.denom().to_string())
            }
            None => ("NaN".into(), "NaN".into()),
        };
        let est = samples.estimate_moments((i, 1)).expect("tracked pair");
        let stderr = est.stderr_of_mean.unwrap_or(f64::NAN);
        moments.push_str(&format!(
            "{i},{tn},{td},{},{},{}\n",
            fmt_f(est.mean),
            fmt_f(est.variance),
            fmt_f(stderr)
        ));
    }

    let mut files = vec![("moments.csv", moments)];
    if let Some(node) = pmf_node {
        let mut pmf = String::from("age,prob\n");
        for (age, p) in samples.empirical_pmf((node, 1)).expect("tracked pair") {
            pmf.push_str(&format!("{age},{}\n", fmt_f(p)));
        }
        files.push(("pmf.csv", pmf));
    }
    write_outputs(&out, &echo.0, &files)?;
    Ok(0)
}

fn star_table(spec: &Spec) -> Result<LambdaTable, String> {
    let links = parse_list_f64("links", spec.require("links")?)?;
    for &p in &links {
        if !(p > 0.0 && p <= 1.0) {
            return Err(format!("invalid value for 'links': {p} is outside (0, 1]"));
        }
    }
    let pairs: Vec<(usize, f64)> = links.iter().enumerate().map(|(i, &p)| (i + 1, p)).collect();
    LambdaTable::from_independent_links(&pairs).map_err(|e| format!("invalid 'links': {e}"))
}

fn exact_star(spec: &Spec) -> Result<i32, String> {
    let out = spec.out_dir()?;
    let mut echo = Echo::new(spec);
    let table = star_table(spec)?;
    let receivers = table.node_count();
    let k = parse_u64("k", &echo.default("k", "100".into()))?;
    if k == 0 {
        return Err("invalid value for 'k': must be positive".into());
    }

    let files = match (spec.get("joint"), spec.get("marginal")) {
        (Some(raw), None) => {
            let ids = parse_list_usize("joint", raw)?;
            if ids.len() != 2 || ids[0] == ids[1] {
                return Err("invalid value for 'joint': need two distinct receivers".into());
            }
            for &id in &ids {
                if !(1..=receivers).contains(&id) {
                    return Err(format!("invalid value for 'joint': no receiver {id}"));
                }
            }
            let pmf = star_joint_pmf_box(&table, &ids, k).map_err(|e| e.to_string())?;
            let mut text = String::from("i,j,prob\n");
            for (ages, p) in pmf.iter() {
                text.push_str(&format!("{},{},{}\n", ages[0], ages[1], fmt_f(p)));
            }
            vec![("joint.csv", text)]
        }
        (None, Some(raw)) => {
            let id = parse_usize("marginal", raw)?;
            if !(1..=receivers).contains(&id) {
                return Err(format!("invalid value for 'marginal': no receiver {id}"));
            }
            let geom = marginal_geometric(&table, id).map_err(|e| e.to_string())?;
            let mut text = String::from("age,prob\n");
            for age in 1..=k {
                text.push_str(&format!("{age},{}\n", fmt_f(geom.pmf(age))));
            }
            vec![("pmf.csv", text)]
        }
        _ => return Err("exact-star needs exactly one of 'joint' or 'marginal'".into()),
    };
    write_outputs(&out, &echo.0, &files)?;
    Ok(0)
}

fn exact_ring4(spec: &Spec) -> Result<i32, String> {
    let out = spec.out_dir()?;
    let mut echo = Echo::new(spec);
    let alpha = parse_prob("alpha", spec.require("alpha")?, "(0, 1]")?;
    let beta = parse_prob("beta", spec.require("beta")?, "(0, 1)")?;
    let k = parse_u64("k", &echo.default("k", "100".into()))?;
    let channels = Ring4Channels::from_policy(alpha, beta).map_err(|e| e.to_string())?;
    let pmf =
        ring4_joint_algorithm2(&channels, k).map_err(|e| format!("invalid value for 'k': {e}"))?;
    let mut text = String::from("i,j,prob\n");
    for (ages, p) in pmf.iter() {
        text.push_str(&format!("{},{},{}\n", ages[0], ages[1], fmt_f(p)));
    }
    write_outputs(&out, &echo.0, &[("joint.csv", text)])?;
    Ok(0)
}

fn approx_ring(spec: &Spec) -> Result<i32, String> {
    let out = spec.out_dir()?;
    let echo = Echo::new(spec);
    let nodes = parse_usize("nodes", spec.require("nodes")?)?;
    if nodes < 2 || nodes % 2 != 0 {
        return Err("invalid value for 'nodes': ring size must be even and positive".into());
    }
    let m = nodes / 2;
    let beta = parse_prob("beta", spec.require("beta")?, "(0, 1)")?;
    let mut text = String::from("node,theta_num,theta_den,mean,variance,stderr\n");
    for node in 2..=nodes {
        let th = theta_of_node(node, m).expect("grid node");
        let mm = approx_moments(m, beta, th).map_err(|e| e.to_string())?;
        text.push_str(&format!(
            "{node},{},{},{},{},NaN\n",
            th.numer(),
            th.denom(),
            fmt_f(mm.zhat_mean),
            fmt_f(mm.variance())
        ));
    }
    write_outputs(&out, &echo.0, &[("moments.csv", text)])?;
    Ok(0)
}

fn optimal_beta(spec: &Spec) -> Result<i32, String> {
    let out = spec.out_dir()?;
    let echo = Echo::new(spec);
    let ms = parse_list_usize("m_list", spec.require("m_list")?)?;
    if ms.iter().any(|&m| m == 0) {
        return Err("invalid value for 'm_list': ring half-sizes must be positive".into());
    }
    let thetas = parse_list_theta("theta_list", spec.require("theta_list")?)?;
    for th in &thetas {
        let along = (*th.numer() as f64 / *th.denom() as f64).abs();
        if along >= 1.0 {
            return Err(format!(
                "invalid value for 'theta_list': {th} is at or beyond the source"
            ));
        }
    }
    // A cell stays NaN when no interior optimum exists at that size.
    let mut text = String::from("M,theta_num,theta_den,beta_numeric,beta_closed_form\n");
    for &m in &ms {
        for &th in &thetas {
            let numeric = optimal_beta_numeric(m, th).map(|o| o.beta).unwrap_or(f64::NAN);
            let closed = optimal_beta_closed_form(m, th).unwrap_or(f64::NAN);
            text.push_str(&format!(
                "{m},{},{},{},{}\n",
                th.numer(),
                th.denom(),
                fmt_f(numeric),
                fmt_f(closed)
            ));
        }
    }
    write_outputs(&out, &echo.0, &[("betas.csv", text)])?;
    Ok(0)
}

/// Cross-oracle checks: each line reports pass/fail; any failure flips the
/// exit code to 2.
fn validate(spec: &Spec) -> Result<i32, String> {
    let out = spec.out_dir()?;
    let echo = Echo::new(spec);
    let mut all_ok = true;
    let mut check = |label: &str, ok: bool, metric: String| {
        println!("check {label}: {} ({metric})", if ok { "pass" } else { "fail" });
        all_ok &= ok;
    };

    let coupled = LambdaTable::new(vec![1, 2], vec![0.3, 0.2, 0.1, 0.4])
        .expect("valid fixed table");
    let mut dev = 0.0f64;
    for a1 in 1..=12u64 {
        for a2 in 1..=12u64 {
            let closed = star2_joint_closed_form(&coupled, (a1, a2)).expect("in range");
            let rec = star::star_joint_algorithm1(&coupled, &[1, 2], &[a1, a2]).expect("in range");
            dev = dev.max((closed - rec).abs());
        }
    }
    check("algorithm 1 vs closed form", dev <= 1e-12, format!("max dev={dev:.2e}"));

    let indep = LambdaTable::from_independent_links(&[(1, 0.5), (2, 0.6)]).expect("valid links");
    let tv = star_joint_pmf_box(&indep, &[1, 2], 60)
        .and_then(|a| a.total_variation(&star_stationary(&indep, 60)?))
        .expect("solvers agree on shape");
    check("algorithm 1 vs truncated chain", tv <= 1e-6, format!("tv={tv:.2e}"));

    let uniform = Ring4Channels::from_policy(1.0, 0.25).expect("valid policy");
    let tv = ring4_joint_algorithm2(&uniform, 60)
        .and_then(|a| a.total_variation(&ring4_stationary(&uniform, 60)?))
        .expect("solvers agree on shape");
    check("algorithm 2 vs truncated chain", tv <= 1e-6, format!("tv={tv:.2e}"));

    let topology = Topology::ring(4).expect("valid ring");
    let policy = PolicyTable::ring(1.0, 0.25, 2).expect("valid policy");
    let mut config = SimConfig::new(topology, policy, ChannelModel::ideal(), 200_000, 1);
    config.tracked = TrackedPairs::Pairs(vec![(2, 1), (3, 1)]);
    config.joint_pairs = Some(vec![(2, 1), (3, 1)]);
    let samples = run_simulation(&config).map_err(|e| format!("validate: {e}"))?;
    let empirical = samples
        .empirical_joint_pmf(&[(2, 1), (3, 1)])
        .expect("joint tracked");
    let exact = ring4_joint_algorithm2(&uniform, empirical.box_size().max(3) + 8)
        .expect("valid box");
    let tv = empirical.total_variation(&exact).expect("same shape");
    check("simulation vs exact joint", tv < 0.02, format!("tv={tv:.4}"));

    let topology = Topology::star(1).expect("valid star");
    let policy = PolicyTable::star(1, 0.5).expect("valid policy");
    let mut config = SimConfig::new(topology, policy, ChannelModel::ideal(), 100_000, 2);
    config.tracked = TrackedPairs::Pairs(vec![(2, 1)]);
    let samples = run_simulation(&config).map_err(|e| format!("validate: {e}"))?;
    let ks = samples.ks_distance_to_geometric((2, 1), 0.5).expect("tracked");
    check("simulation vs geometric marginal", ks < 0.01, format!("ks={ks:.4}"));

    // The line moment formulas double as a sanity check of the path spec.
    let spec_line = line_tree::GeomSumSpec::new(vec![0.5, 0.25]).expect("valid hops");
    let moments = spec_line.moments();
    check(
        "line moment formulas",
        (moments.mean - 6.0).abs() < 1e-12 && (moments.variance - 14.0).abs() < 1e-12,
        format!("mean={} variance={}", moments.mean, moments.variance),
    );

    write_outputs(&out, &echo.0, &[])?;
    Ok(if all_ok { 0 } else { 2 })
}
