//! Access latency over loopback, optionally throttled.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::net::{RemoteStore, Server, ThrottleConfig};
use crate::params::{Lambda, Params, ParamsBuilder};
use crate::protocol::{AccessRequest, ClientState};
use crate::storage::CipherKind;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub levels: u32,
    pub ks: Vec<u32>,
    pub zs: Vec<usize>,
    pub block_sizes: Vec<usize>,
    /// `None` runs unthrottled.
    pub rates_bps: Vec<Option<f64>>,
    pub burst_bytes: usize,
    /// Remap probability; uniform when absent.
    pub p: Option<f64>,
    pub lambda: Lambda,
    pub cipher: CipherKind,
    pub accesses: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(levels: u32) -> Self {
        BenchConfig {
            levels,
            ks: vec![1, levels],
            zs: vec![2],
            block_sizes: vec![1024],
            rates_bps: vec![None],
            burst_bytes: 1500,
            p: None,
            lambda: Lambda::Infinite,
            cipher: CipherKind::Null,
            accesses: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct BenchRow {
    pub k: u32,
    pub Z: usize,
    pub B: usize,
    pub rate_bps: Option<f64>,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub blocks_per_access: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// One row per (k, Z, B, rate) cell, in that nesting order. Each cell warms
/// up in memory, moves the store behind a fresh loopback server and times
/// `accesses` uniformly random reads through the throttled client.
pub fn bench_latency(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if config.accesses == 0 {
        return Err(Error::domain("accesses must be positive"));
    }
    let mut rows = Vec::new();
    for &k in &config.ks {
        for &z in &config.zs {
            for &b in &config.block_sizes {
                for &rate in &config.rates_bps {
                    let mut builder = ParamsBuilder::new(config.levels).k(k).z(z).block_size(b).lambda(config.lambda);
                    if let Some(p) = config.p {
                        builder = builder.p(p);
                    }
                    let params = builder.build()?;
                    let throttle = rate.map(|r| ThrottleConfig::new(r, config.burst_bytes)).transpose()?;
                    rows.push(bench_cell(params, throttle, config)?);
                }
            }
        }
    }
    Ok(rows)
}

fn bench_cell(params: Params, throttle: Option<ThrottleConfig>, config: &BenchConfig) -> Result<BenchRow> {
    let (mut client, store) = ClientState::setup(params, config.seed, config.cipher)?;
    let server = Server::bind("127.0.0.1:0")?;
    let addr = server.local_addr()?;
    let handle = std::thread::spawn(move || server.serve_one(store));
    let mut remote = RemoteStore::connect(addr, client.layout(), throttle)?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed ^ 0x0062_656e_6368);
    let mut samples = Vec::with_capacity(config.accesses);
    for _ in 0..config.accesses {
        let addr = rng.gen_range(0..params.n());
        let start = Instant::now();
        client.access(&mut remote, AccessRequest::read(addr))?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    drop(remote);
    handle.join().map_err(|_| Error::Protocol("server thread panicked".into()))??;
    let mean_ms = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.sort_by(f64::total_cmp);
    Ok(BenchRow {
        k: params.k(),
        Z: params.z(),
        B: params.block_size(),
        rate_bps: throttle.map(|t| t.rate_bps),
        mean_ms,
        p50_ms: percentile(&samples, 0.5),
        p95_ms: percentile(&samples, 0.95),
        blocks_per_access: client.stats().blocks_transferred as f64 / client.stats().real_accesses as f64,
    })
}
