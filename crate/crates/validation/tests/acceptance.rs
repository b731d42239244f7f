//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the binary
//! fails if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use root_oram::metrics::{k_anonymity, kl_divergence, min_entropy, shannon_entropy, Distribution};
use root_oram::net::{bench_latency, BenchConfig, RemoteStore, Server};
use root_oram::oracle::{all_sequences, channel, delta_witness, format_rational, max_ratio_bruteforce, ModelParams, WitnessPattern};
use root_oram::params::{p_from_exponent, uniform_p};
use root_oram::privacy::{bandwidth_of, compose, delta_of, epsilon_of, recursion_plan, solve_p_for_epsilon, PrivacySpec};
use root_oram::protocol::remap;
use root_oram::sim::{growth_params, m_growth, run_sim, run_sim_with, SimOptions};
use root_oram::{AccessRequest, CipherKind, ClientState, Lambda, ParamsBuilder};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn q(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Exact (p1/p2)^2 at M = 3, capacity 2, with a worst-case-pattern witness.
fn epsilon_oracle() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [2i64, 4] {
        let max_p = q(n - 1, n);
        for fraction in [q(1, 4), q(1, 2), q(3, 4)] {
            let p = max_p.clone() * fraction;
            let model = ModelParams::exact(n as u64, p.clone(), 2).map_err(|e| e.to_string())?;
            let report = max_ratio_bruteforce(&model, 3, 3).map_err(|e| e.to_string())?;
            let pattern = report
                .pattern_witness
                .as_ref()
                .is_some_and(|w| matches!(w.pattern, WitnessPattern::Exact | WitnessPattern::FirstTouch));
            let cell_ok = report.attains_bound() && pattern;
            ok &= cell_ok;
            parts.push(format!(
                "N={n} p={} max={} bound={}{}",
                format_rational(&p),
                format_rational(&report.max_ratio),
                format_rational(&report.bound),
                if cell_ok { "" } else { " (not attained)" }
            ));
        }
    }
    check(ok, parts.join("; "))
}

fn delta_witnesses() -> Outcome {
    let mut parts = Vec::new();
    for capacity in [2u64, 3, 4] {
        for (n, p) in [(2i64, q(1, 4)), (4, q(1, 2)), (4, q(3, 4))] {
            let model = ModelParams::exact(n as u64, p, capacity).map_err(|e| e.to_string())?;
            let w = delta_witness(&model, 0).map_err(|e| e.to_string())?;
            let m_k = capacity + 1;
            let expected = num_traits::pow(q(1, n), (m_k - 1) as usize) * model.p1.clone();
            if !w.prob1.is_zero() || w.prob2 != expected || w.prob2 <= BigRational::zero() {
                return Err(format!("capacity {capacity}, N={n}: prob1={} prob2={}", w.prob1, w.prob2));
            }
        }
        parts.push(format!("C={capacity} ok"));
    }
    Ok(parts.join(", "))
}

fn bandwidth() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (z, k, lambda) in [(2usize, 1u32, Lambda::Rate(4.0)), (2, 10, Lambda::Rate(1.0)), (4, 3, Lambda::Infinite)] {
        let params = ParamsBuilder::new(10).k(k).z(z).p(p_from_exponent(k)).block_size(8).lambda(lambda).build().unwrap();
        let stats = run_sim(params, 10_000, 17).map_err(|e| e.to_string())?;
        let measured = stats.blocks_per_access();
        let expected = bandwidth_of(z, k, lambda);
        let rel = (measured - expected).abs() / expected;
        ok &= rel <= 0.03;
        if z == 2 && k == 1 {
            ok &= (measured - 10.0).abs() / 10.0 <= 0.03;
        }
        parts.push(format!("(Z={z},k={k},λ={lambda}) {measured:.3} vs {expected}"));
    }
    check(ok, parts.join("; "))
}

fn remap_distribution() -> Outcome {
    let n = 16u64;
    let trials = 100_000u64;
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let mut parts = Vec::new();
    let mut ok = true;
    for p in [0.5, uniform_p(4)] {
        let mut counts = vec![0u64; n as usize];
        let x = 5;
        for _ in 0..trials {
            counts[remap(&mut rng, n, p, x) as usize] += 1;
        }
        let same = counts[x as usize] as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let within = (same - (1.0 - p)).abs() <= 3.0 * sigma;
        ok &= within;
        parts.push(format!("p={p}: same-leaf {same:.4} vs {:.4} (3σ={:.4})", 1.0 - p, 3.0 * sigma));
        if p == uniform_p(4) {
            let expected = trials as f64 / n as f64;
            let chi: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            // 15 degrees of freedom, 5% level
            ok &= chi < 24.996;
            parts.push(format!("chi²={chi:.2} < 24.996"));
        }
    }
    check(ok, parts.join("; "))
}

fn invariant_audit() -> Outcome {
    let params = ParamsBuilder::new(10).k(5).z(4).p(p_from_exponent(5)).block_size(8).lambda(Lambda::Rate(1.0)).build().unwrap();
    let options = SimOptions { audit_interval: Some(1000), ..SimOptions::default() };
    match run_sim_with(params, 100_000, 23, &options) {
        Ok(stats) => Ok(format!("100 audits clean, {} fakes, max stash {}", stats.fake_accesses, stats.max_stash)),
        Err(e) => Err(e.to_string()),
    }
}

fn stash_behaviour() -> Outcome {
    let n = 1024u64;
    let mut maxima = Vec::new();
    for seed in 0..5 {
        let params = ParamsBuilder::new(10).k(10).z(4).p(uniform_p(10)).block_size(8).build().unwrap();
        maxima.push(run_sim(params, 16 * n, seed).map_err(|e| e.to_string())?.max_stash);
    }
    let mut growth = Vec::new();
    for seed in 0..3 {
        let rows = m_growth(growth_params(10, 7, 4).unwrap(), &[n, 100 * n], seed).map_err(|e| e.to_string())?;
        growth.push((rows[0].max_stash, rows[1].max_stash));
    }
    let ok = maxima.iter().all(|&m| m <= 150)
        && growth.iter().all(|&(a, b)| a > 0 && b as f64 / a as f64 <= 4.0);
    check(ok, format!("max stash {maxima:?} <= 150; growth (k=7,Z=4) N→100N {growth:?} ratio <= 4"))
}

fn accountant() -> Outcome {
    let mut worst: f64 = 0.0;
    for bits in 1..=20u32 {
        let n = 1u64 << bits;
        for step in 0..=400 {
            let eps = step as f64 * 0.1;
            let p = solve_p_for_epsilon(n, eps).map_err(|e| e.to_string())?;
            let back = epsilon_of(n, p).map_err(|e| e.to_string())?;
            worst = worst.max((back - eps).abs());
        }
    }
    let spec = PrivacySpec::new(0.3, 1e-6).unwrap();
    let composed = compose(7, spec).unwrap();
    let plan = recursion_plan(3, spec, 10.0, 50.0).unwrap();
    let delta = delta_of(0.5, 0, 1, 1).unwrap();
    let ok = worst <= 1e-9
        && (composed.epsilon - 2.1).abs() < 1e-12
        && (composed.delta - 7e-6).abs() < 1e-18
        && (plan.spec.epsilon - 0.9).abs() < 1e-12
        && (plan.bandwidth - 30.0).abs() < 1e-12
        && (plan.outsourcing_ratio - 125_000.0).abs() < 1e-6
        && delta == 0.125;
    check(ok, format!("round-trip error {worst:.2e}; δ(0.5,0,1,1)={delta}; R^3={}", plan.outsourcing_ratio))
}

/// Sequence probability written out directly from the model's rules.
fn naive_probability(n: u64, p1: &BigRational, p2: &BigRational, capacity: usize, real: &[u64], observed: &[u64]) -> BigRational {
    let mut prob = BigRational::one();
    let mut last: BTreeMap<u64, u64> = BTreeMap::new();
    for (&r, &o) in real.iter().zip(observed) {
        prob *= match last.get(&r) {
            None => q(1, n as i64),
            Some(&l) if l == o => p1.clone(),
            Some(_) => p2.clone(),
        };
        last.insert(r, o);
        if (0..n).any(|leaf| last.values().filter(|&&l| l == leaf).count() > capacity) {
            return BigRational::zero();
        }
    }
    prob
}

fn metric_identities() -> Outcome {
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let random_dist = |rng: &mut ChaCha12Rng| {
        let size = rng.gen_range(2..=32);
        let raw: Vec<f64> = (0..size).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mut mass: Vec<f64> = raw.iter().map(|m| m / total).collect();
        let rest: f64 = mass[1..].iter().sum();
        mass[0] = 1.0 - rest;
        Distribution::from_masses(mass).unwrap()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = random_dist(&mut rng);
        let u = Distribution::uniform(p.len()).unwrap();
        worst = worst.max((kl_divergence(&p, &u) - ((p.len() as f64).ln() - shannon_entropy(&p))).abs());
    }
    let mut ordered = true;
    for _ in 0..1000 {
        let p = random_dist(&mut rng);
        ordered &= min_entropy(&p) <= shannon_entropy(&p);
    }
    let mut ks = Vec::new();
    for capacity in [1u64, 2] {
        let model = ModelParams::exact(2, q(1, 4), capacity).unwrap();
        let k = k_anonymity(channel(&model, 2, 2)).map_err(|e| e.to_string())?;
        let mut preimages: BTreeMap<Vec<u64>, BTreeSet<Vec<u64>>> = BTreeMap::new();
        for real in all_sequences(2, 2) {
            for observed in all_sequences(2, 2) {
                if naive_probability(2, &model.p1, &model.p2, capacity as usize, &real, &observed) > BigRational::zero() {
                    preimages.entry(observed).or_default().insert(real.clone());
                }
            }
        }
        let independent = preimages.values().map(BTreeSet::len).min().unwrap();
        ks.push((capacity, k, independent));
    }
    let ok = worst <= 1e-12 && ordered && ks.iter().all(|&(_, k, b)| k == b) && ks == vec![(1, 2, 2), (2, 4, 4)];
    check(ok, format!("KL identity error {worst:.2e}; H∞ <= H on 1000; k (capacity, oracle, brute force) {ks:?}"))
}

fn backend_equivalence() -> Outcome {
    for seed in [1u64, 2, 3] {
        let params = ParamsBuilder::new(8).k(4).z(4).p(0.5).block_size(32).lambda(Lambda::Rate(1.0)).build().unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed + 100);
        let requests: Vec<AccessRequest> = (0..1000)
            .map(|i| {
                let addr = rng.gen_range(0..params.n());
                if i % 3 == 0 {
                    AccessRequest::write(addr, vec![(i % 251) as u8; 32])
                } else {
                    AccessRequest::read(addr)
                }
            })
            .collect();
        let (mut local, mut memory) = ClientState::setup(params, seed, CipherKind::Aead).map_err(|e| e.to_string())?;
        let (mut remote_client, store) = ClientState::setup(params, seed, CipherKind::Aead).map_err(|e| e.to_string())?;
        local.record_trace();
        remote_client.record_trace();
        let server = Server::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
        let addr = server.local_addr().map_err(|e| e.to_string())?;
        let handle = std::thread::spawn(move || server.serve_one(store));
        let mut remote = RemoteStore::connect(addr, remote_client.layout(), None).map_err(|e| e.to_string())?;
        let a = local.run(&mut memory, requests.clone()).map_err(|e| e.to_string())?;
        let b = remote_client.run(&mut remote, requests).map_err(|e| e.to_string())?;
        drop(remote);
        let served = handle.join().map_err(|_| "server panicked".to_string())?.map_err(|e| e.to_string())?;
        let same = a == b
            && local.position_map() == remote_client.position_map()
            && local.stash_snapshot() == remote_client.stash_snapshot()
            && memory.buckets().unwrap() == served.buckets().unwrap();
        if !same {
            return Err(format!("seed {seed}: state diverged"));
        }
    }
    Ok("3 seeds identical (payloads, traces, position maps, stashes, trees)".into())
}

fn latency_trend() -> Outcome {
    let mut config = BenchConfig::new(10);
    config.ks = vec![1, 4, 7, 10];
    config.zs = vec![2];
    config.block_sizes = vec![1024];
    config.rates_bps = vec![Some(1e6)];
    config.accesses = 20;
    let rows = bench_latency(&config).map_err(|e| e.to_string())?;
    let means: Vec<f64> = rows.iter().map(|r| r.mean_ms).collect();
    let monotone = means.windows(2).all(|w| w[0] <= w[1]);
    let ratio = means[3] / means[0];
    let shown: Vec<String> = rows.iter().map(|r| format!("k={} {:.1}ms", r.k, r.mean_ms)).collect();
    check(monotone && ratio > 3.0, format!("{}; k=10/k=1 = {ratio:.2}", shown.join(", ")))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("epsilon bound attained by exact oracle", epsilon_oracle, Duration::from_secs(5)),
        ("delta witness", delta_witnesses, Duration::from_secs(1)),
        ("bandwidth per real access", bandwidth, Duration::from_secs(30)),
        ("remap distribution", remap_distribution, Duration::from_secs(10)),
        ("main invariant and conservation", invariant_audit, Duration::from_secs(60)),
        ("stash behaviour", stash_behaviour, Duration::from_secs(600)),
        ("accountant identities", accountant, Duration::from_secs(1)),
        ("metric identities", metric_identities, Duration::from_secs(5)),
        ("backend equivalence", backend_equivalence, Duration::from_secs(60)),
        ("latency trend under throttle", latency_trend, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {}: {} ({:.2}s of {}s) {detail}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
