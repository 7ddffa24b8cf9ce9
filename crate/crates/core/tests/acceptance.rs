//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails. Pass criterion numbers as
//! arguments to run a subset.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::ng::{
    check_fee_splits, check_single_poison, key_chain_is_weightless, random_ng_config,
};
use common::{assert_matches_oracle, small_config};
use ngsim::chain::Protocol;
use ngsim::harness::{run_simulation, run_sweep, SimConfig, SweepAxis, SweepResult, SweepSpec};
use ngsim::incentive::{
    censorship_wait, feasible_split, feasible_split_exact, r_leader_lower, r_leader_lower_exact,
    r_leader_upper, r_leader_upper_exact,
};
use ngsim::metrics::MetricsParams;
use ngsim::mining::{assign_powers_by_rank, largest_miner, power_fraction};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Spearman rank correlation with average ranks for ties.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    pearson(&ranks(x), &ranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn mean_of(result: &SweepResult, metric: &str) -> Result<Vec<f64>, String> {
    result
        .points
        .iter()
        .map(|p| {
            if p.failures() > 0 {
                return Err(format!("{} failed run(s) at {}", p.failures(), p.value));
            }
            p.summary(metric)
                .map(|s| s.0)
                .ok_or_else(|| format!("{metric} undefined at {}", p.value))
        })
        .collect()
}

fn fmt_series(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn incentive_bounds() -> Outcome {
    const TOL: f64 = 1e-12;
    let lo = r_leader_lower(0.25).map_err(|e| e.to_string())?;
    let up = r_leader_upper(0.25).map_err(|e| e.to_string())?;
    ensure(
        lo > 0.368 && lo < 0.369,
        format!("lower bound {lo} outside (0.368, 0.369)"),
    )?;
    ensure(
        up > 0.428 && up < 0.429,
        format!("upper bound {up} outside (0.428, 0.429)"),
    )?;
    // 1 - (3/4) / (19/16) = 7/19 and (3/4) / (7/4) = 3/7.
    ensure(
        (lo - 7.0 / 19.0).abs() <= TOL,
        format!("lower bound {lo} != 7/19"),
    )?;
    ensure(
        (up - 3.0 / 7.0).abs() <= TOL,
        format!("upper bound {up} != 3/7"),
    )?;
    let quarter = Ratio::new(1, 4);
    ensure(
        r_leader_lower_exact(quarter) == Ok(Ratio::new(7, 19)),
        "exact lower bound != 7/19",
    )?;
    ensure(
        r_leader_upper_exact(quarter) == Ok(Ratio::new(3, 7)),
        "exact upper bound != 3/7",
    )?;
    let (ok_quarter, _) = feasible_split(0.25, 0.40).map_err(|e| e.to_string())?;
    let (ok_third, b) = feasible_split(1.0 / 3.0, 0.40).map_err(|e| e.to_string())?;
    ensure(ok_quarter, "0.40 infeasible at alpha 1/4")?;
    ensure(!ok_third, "0.40 feasible at alpha 1/3")?;
    ensure(b.r_lower > b.r_upper, "bounds at alpha 1/3 still intersect")?;
    ensure(
        feasible_split_exact(quarter, Ratio::new(2, 5)) == Ok(true)
            && feasible_split_exact(Ratio::new(1, 3), Ratio::new(2, 5)) == Ok(false),
        "exact feasibility disagrees",
    )?;
    Ok(format!(
        "r_lower(1/4) = {lo:.6}, r_upper(1/4) = {up:.6}, 0.40 feasible at 1/4 only"
    ))
}

fn censorship() -> Outcome {
    let w = censorship_wait(0.75, 600.0).map_err(|e| e.to_string())?;
    ensure(w == 800.0, format!("wait {w} s != 800 s"))?;
    Ok(format!("censorship_wait(0.75, 600 s) = {w} s"))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases: Vec<(SimConfig, MetricsParams)> = (0..200)
        .map(|_| {
            let cfg = small_config(
                rng.random(),
                rng.random_range(3..=10),
                rng.random(),
                rng.random_range(1..=20),
                rng.random_range(1.0..8.0),
                rng.random_range(600..20_000),
                rng.random(),
                rng.random(),
            );
            let params = MetricsParams {
                epsilon: [0.5, 2.0 / 3.0, 0.9, 1.0][rng.random_range(0..4)],
                delta: [0.5, 0.9, 1.0][rng.random_range(0..3)],
                warmup_fraction: if rng.random() { 0.05 } else { 0.0 },
            };
            (cfg, params)
        })
        .collect();
    let forked = cases
        .par_iter()
        .map(|(cfg, params)| {
            let out = run_simulation(cfg).map_err(|e| e.to_string())?;
            let log = &out.log;
            panic::catch_unwind(AssertUnwindSafe(|| assert_matches_oracle(log, params)))
                .map_err(|e| format!("seed {}: {}", cfg.seed, panic_message(&*e)))?;
            Ok(usize::from(
                out.pow_blocks as usize > out.metrics().map_err(|e| e.to_string())?.main_pow_blocks,
            ))
        })
        .collect::<Result<Vec<usize>, String>>()?
        .into_iter()
        .sum::<usize>();
    ensure(forked > 0, "no randomized run forked")?;
    Ok(format!(
        "200 runs equal the brute-force oracle on every metric ({forked} with forks)"
    ))
}

fn propagation_linearity() -> Outcome {
    let sizes = [50_000.0, 100_000.0, 200_000.0, 400_000.0, 800_000.0];
    let mut base = SimConfig::for_protocol(Protocol::Bitcoin);
    base.n_nodes = 100;
    base.run_length_blocks = 20;
    base.epsilon = 0.9;
    base.delta = 0.9;
    let spec = SweepSpec {
        base,
        axis: SweepAxis::BlockSize,
        values: sizes.to_vec(),
        constant_payload: false,
        seeds: vec![1, 2, 3],
    };
    let prop = mean_of(&run_sweep(&spec), "propagation_time")?;
    let r = pearson(&sizes, &prop);
    let r2 = r * r;
    ensure(
        r2 > 0.99,
        format!("R^2 = {r2:.5} for {}", fmt_series(&prop)),
    )?;
    Ok(format!(
        "90th-percentile propagation {} s, R^2 = {r2:.5}",
        fmt_series(&prop)
    ))
}

fn largest_share(n: usize, cfg: &SimConfig) -> f64 {
    let powers = assign_powers_by_rank(n, cfg.power_exponent, cfg.miners_per_rank)
        .expect("valid power profile");
    power_fraction(&powers, largest_miner(&powers).expect("miners"))
}

fn bitcoin_frequency_trends() -> Outcome {
    let freqs = [
        1.0 / 600.0,
        1.0 / 300.0,
        1.0 / 120.0,
        1.0 / 60.0,
        1.0 / 30.0,
        1.0 / 10.0,
    ];
    let base = SimConfig::for_protocol(Protocol::Bitcoin);
    let spec = SweepSpec {
        base: base.clone(),
        axis: SweepAxis::BlockFrequency,
        values: freqs.to_vec(),
        constant_payload: true,
        seeds: vec![1, 2, 3, 4, 5],
    };
    let result = run_sweep(&spec);
    let mpu = mean_of(&result, "mining_power_utilization")?;
    let fair = mean_of(&result, "fairness")?;
    let delay = mean_of(&result, "consensus_delay")?;
    let share = largest_share(base.n_nodes, &base);
    let detail = format!(
        "MPU {} fairness {} consensus delay {} largest share {share:.3}",
        fmt_series(&mpu),
        fmt_series(&fair),
        fmt_series(&delay)
    );
    let mut failures = Vec::new();
    let rho = spearman(&freqs, &mpu);
    if rho > -0.9 {
        failures.push(format!("MPU Spearman {rho:.3} > -0.9"));
    }
    let rho_f = spearman(&freqs, &fair);
    if rho_f >= 0.0 {
        failures.push(format!("fairness Spearman {rho_f:.3} >= 0"));
    }
    let rho_d = spearman(&freqs, &delay);
    if rho_d >= 0.0 {
        failures.push(format!("consensus delay Spearman {rho_d:.3} >= 0"));
    }
    let hi = *freqs.last().unwrap();
    if *delay.last().unwrap() < 1.0 / hi {
        failures.push(format!(
            "consensus delay {:.1} s below the {:.0} s block interval at the highest frequency",
            delay.last().unwrap(),
            1.0 / hi
        ));
    }
    let (first, last) = (mpu[0], *mpu.last().unwrap());
    if last >= 0.5 {
        failures.push(format!("MPU {last:.3} >= 0.5 at the highest frequency"));
    }
    if (last - share).abs() >= (first - share).abs() {
        failures.push(format!(
            "MPU does not approach the largest share {share:.3}"
        ));
    }
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

fn ng_microblock_sweep() -> Outcome {
    let intervals = [100.0, 50.0, 30.0, 20.0, 10.0];
    let mut base = SimConfig::for_protocol(Protocol::Ng);
    base.key_interval_sec = 100.0;
    let rate = base.configured_tx_rate();
    let mean =
        |metric: &str, runs: &[Vec<ngsim::metrics::MetricsReport>]| -> Result<Vec<f64>, String> {
            runs.iter()
                .map(|rs| {
                    let v: Vec<f64> = rs.iter().filter_map(|r| r.get(metric)).collect();
                    ensure(v.len() == rs.len(), format!("{metric} undefined"))?;
                    Ok(v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect()
        };
    let runs: Vec<Vec<ngsim::metrics::MetricsReport>> = intervals
        .par_iter()
        .map(|&interval| {
            // Equal simulated duration at every point.
            let mut cfg = SweepSpec {
                base: base.clone(),
                axis: SweepAxis::BlockFrequency,
                values: vec![],
                constant_payload: true,
                seeds: vec![],
            }
            .point_config(1.0 / interval);
            cfg.run_length_blocks = (10_000.0 / interval).round() as u64;
            (1..=5u64)
                .into_par_iter()
                .map(|seed| {
                    let mut c = cfg.clone();
                    c.seed = seed;
                    ngsim::harness::run_and_measure(&c)
                        .map(|(_, r)| r)
                        .map_err(|e| e.to_string())
                })
                .collect::<Result<Vec<_>, String>>()
        })
        .collect::<Result<_, String>>()?;
    let freqs: Vec<f64> = intervals.iter().map(|i| 1.0 / i).collect();
    let fair = mean("fairness", &runs)?;
    let mpu = mean("mining_power_utilization", &runs)?;
    let delay = mean("consensus_delay", &runs)?;
    let prune = mean("time_to_prune", &runs)?;
    let detail = format!(
        "fairness {} MPU {} consensus delay {} time to prune {} (payload {rate:.2} tx/s)",
        fmt_series(&fair),
        fmt_series(&mpu),
        fmt_series(&delay),
        fmt_series(&prune)
    );
    let mut failures = Vec::new();
    for (i, rs) in runs.iter().enumerate() {
        for r in rs {
            let f = r.fairness.unwrap_or(f64::NAN);
            let m = r.mining_power_utilization.unwrap_or(f64::NAN);
            if !((f - 1.0).abs() <= 0.15) {
                failures.push(format!("fairness {f:.3} at {} s", intervals[i]));
            }
            if !(m >= 0.9) {
                failures.push(format!("MPU {m:.3} at {} s", intervals[i]));
            }
        }
    }
    let rho_d = spearman(&freqs, &delay);
    if rho_d > -0.9 {
        failures.push(format!("consensus delay Spearman {rho_d:.3} > -0.9"));
    }
    let rho_p = spearman(&freqs, &prune);
    if rho_p > -0.9 {
        failures.push(format!("time to prune Spearman {rho_p:.3} > -0.9"));
    }
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

fn weightless_microblocks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfgs: Vec<SimConfig> = (0..50)
        .map(|_| {
            let n = rng.random_range(3..=12);
            random_ng_config(
                rng.random(),
                n,
                rng.random_range(2.0..20.0),
                rng.random_range(0.5..5.0),
                [0, 2, 3][rng.random_range(0..3)],
                rng.random(),
            )
        })
        .collect();
    cfgs.par_iter()
        .map(|cfg| {
            let out = run_simulation(cfg).map_err(|e| e.to_string())?;
            key_chain_is_weightless(&out).map_err(|e| format!("seed {}: {e}", cfg.seed))
        })
        .collect::<Result<Vec<()>, String>>()?;
    Ok("50 runs: every node's key-block chain is unchanged without microblocks".into())
}

fn fee_split() -> Outcome {
    let mut cfg = SimConfig::for_protocol(Protocol::Ng);
    cfg.run_length_blocks = 100;
    let out = run_simulation(&cfg).map_err(|e| e.to_string())?;
    ensure(
        out.payload_blocks == 100,
        format!("{} microblocks", out.payload_blocks),
    )?;
    let bp = (cfg.leader_fee_share * 10_000.0).round() as u64;
    ensure(bp == 4000, "leader share is not 40%")?;
    check_fee_splits(&out, bp);
    Ok(format!(
        "{} nodes: every completed epoch splits its fees 40/60 exactly",
        out.nodes.len()
    ))
}

fn poison() -> Outcome {
    let mut parts = Vec::new();
    for fork_count in [2, 5] {
        let mut cfg = SimConfig::for_protocol(Protocol::Ng);
        cfg.n_nodes = 20;
        cfg.seed = 7;
        cfg.run_length_blocks = 300;
        cfg.fork_count = fork_count;
        cfg.adversary_node = 0;
        let out = run_simulation(&cfg).map_err(|e| e.to_string())?;
        let again = run_simulation(&cfg).map_err(|e| e.to_string())?;
        ensure(out.log.to_text() == again.log.to_text(), "rerun differs")?;
        let p = check_single_poison(&out, 0);
        ensure(p.poisoner != p.cheater, "cheater poisoned itself")?;
        parts.push(format!(
            "fork_count {fork_count}: miner {} voided {}, 5% to miner {}",
            p.cheater, p.voided, p.poisoner
        ));
    }
    Ok(parts.join("; "))
}

fn determinism() -> Outcome {
    let mut configs = Vec::new();
    for protocol in [Protocol::Bitcoin, Protocol::Ng] {
        let mut cfg = SimConfig::for_protocol(protocol);
        cfg.run_length_blocks = 30;
        configs.push(cfg.clone());
        cfg.clock_skew_sec = 1.0;
        cfg.fork_count = if protocol == Protocol::Ng { 3 } else { 0 };
        cfg.seed = 99;
        cfg.block_interval_sec = 20.0;
        cfg.key_interval_sec = 20.0;
        configs.push(cfg);
    }
    for cfg in &configs {
        let a = run_simulation(cfg)
            .map_err(|e| e.to_string())?
            .log
            .to_text();
        let b = run_simulation(cfg)
            .map_err(|e| e.to_string())?
            .log
            .to_text();
        ensure(
            a == b,
            format!("{} seed {} differs on rerun", cfg.protocol, cfg.seed),
        )?;
    }
    Ok(format!(
        "{} configurations rerun byte-identically",
        configs.len()
    ))
}

fn panic_message(e: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = e.downcast_ref::<String>() {
        s.clone()
    } else if let Some(s) = e.downcast_ref::<&str>() {
        (*s).to_string()
    } else {
        "panic".into()
    }
}

type Check = fn() -> Outcome;

const CRITERIA: [(&str, Check); 10] = [
    ("incentive bounds exact", incentive_bounds),
    ("censorship wait", censorship),
    ("metric-oracle equivalence", oracle_equivalence),
    (
        "propagation time linear in block size",
        propagation_linearity,
    ),
    ("Bitcoin frequency-sweep trends", bitcoin_frequency_trends),
    ("Bitcoin-NG microblock-frequency sweep", ng_microblock_sweep),
    ("microblock weightlessness", weightless_microblocks),
    ("fee conservation and 40/60 split", fee_split),
    ("poison mechanism", poison),
    ("determinism", determinism),
];

fn main() {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    // Keep assertion output of failing checks out of the summary.
    panic::set_hook(Box::new(|_| {}));
    let results: Vec<(usize, Outcome, f64)> = CRITERIA
        .par_iter()
        .enumerate()
        .filter(|(i, _)| wanted.is_empty() || wanted.contains(&(i + 1)))
        .map(|(i, (_, check))| {
            let start = Instant::now();
            let outcome = panic::catch_unwind(*check)
                .unwrap_or_else(|e| Err(format!("panicked: {}", panic_message(&*e))));
            (i + 1, outcome, start.elapsed().as_secs_f64())
        })
        .collect();
    let _ = panic::take_hook();
    let mut failed = 0;
    for (n, outcome, secs) in &results {
        let title = CRITERIA[n - 1].0;
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {title} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {title} ({secs:.1} s): {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
