//! Stash-size and bandwidth experiments driven by uniformly random
//! workloads over the in-memory store with the null cipher.

use std::io::{Read, Write};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{p_from_exponent, Lambda, Params, ParamsBuilder};
use crate::privacy::{bandwidth_of, delta_of, epsilon_of};
use crate::protocol::{AccessRequest, ClientState};
use crate::storage::{CipherKind, MemoryStore, StorageBackend};

pub const SAMPLE_INTERVAL: u64 = 64;
pub const AUDIT_INTERVAL: u64 = 1000;
pub const SIM_BLOCK_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StashStats {
    /// Largest stash seen after any access, excluding the path being
    /// processed.
    pub max_stash: usize,
    /// Stash size after every `sample_interval`-th real access.
    pub samples: Vec<usize>,
    pub sample_interval: u64,
    pub real_accesses: u64,
    pub fake_accesses: u64,
    pub blocks_transferred: u64,
    pub warmup_max_stash: usize,
    /// Running maximum at each requested checkpoint.
    pub checkpoints: Vec<(u64, usize)>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl StashStats {
    pub fn blocks_per_access(&self) -> f64 {
        self.blocks_transferred as f64 / self.real_accesses as f64
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub sample_interval: u64,
    /// Full audit period in real accesses; `None` disables auditing.
    pub audit_interval: Option<u64>,
    /// Access counts at which to record the running maximum.
    pub checkpoints: Vec<u64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { sample_interval: SAMPLE_INTERVAL, audit_interval: None, checkpoints: Vec::new() }
    }
}

/// `m` uniformly random reads after the warm-up.
pub fn run_sim(params: Params, m: u64, seed: u64) -> Result<StashStats> {
    run_sim_with(params, m, seed, &SimOptions::default())
}

pub fn run_sim_with(params: Params, m: u64, seed: u64, options: &SimOptions) -> Result<StashStats> {
    let started = Instant::now();
    let (mut client, mut store) = ClientState::setup(params, seed, CipherKind::Null)?;
    let audit = options.audit_interval;
    let mut stats = drive(&mut client, &mut store, m, seed, options, |client, store, i| match audit {
        Some(a) if i % a == 0 => audit_or_abort(client, store, i),
        _ => Ok(()),
    })?;
    stats.wall_time = started.elapsed();
    Ok(stats)
}

/// Issue `m` uniformly random reads from a warmed-up client against any
/// backend. The workload stream is derived from `seed` but independent of
/// the client's own randomness. `after_access` sees the state after every
/// real access.
pub fn drive<S, F>(
    client: &mut ClientState,
    store: &mut S,
    m: u64,
    seed: u64,
    options: &SimOptions,
    mut after_access: F,
) -> Result<StashStats>
where
    S: StorageBackend,
    F: FnMut(&ClientState, &S, u64) -> Result<()>,
{
    if m == 0 {
        return Err(Error::domain("M must be at least 1"));
    }
    if options.sample_interval == 0 {
        return Err(Error::domain("sample interval must be positive"));
    }
    let started = Instant::now();
    let n = client.params().n();
    let warmup_max_stash = client.warmup_stats().map_or(0, |s| s.max_stash);
    let mut workload = ChaCha12Rng::seed_from_u64(seed);
    workload.set_stream(1);
    let mut samples = Vec::with_capacity((m / options.sample_interval) as usize);
    let mut checkpoints = Vec::with_capacity(options.checkpoints.len());
    let mut next_checkpoint = options.checkpoints.iter().copied().filter(|&c| c <= m).peekable();
    for i in 1..=m {
        let addr = workload.gen_range(0..n);
        client.access(store, AccessRequest::read(addr))?;
        if i % options.sample_interval == 0 {
            samples.push(client.stash_len());
        }
        after_access(client, store, i)?;
        while next_checkpoint.next_if(|&c| c <= i).is_some() {
            checkpoints.push((i, client.stats().max_stash));
        }
    }
    let stats = *client.stats();
    Ok(StashStats {
        max_stash: stats.max_stash,
        samples,
        sample_interval: options.sample_interval,
        real_accesses: stats.real_accesses,
        fake_accesses: stats.fake_accesses,
        blocks_transferred: stats.blocks_transferred,
        warmup_max_stash,
        checkpoints,
        wall_time: started.elapsed(),
    })
}

fn audit_or_abort(client: &ClientState, store: &MemoryStore, access: u64) -> Result<()> {
    let report = client.audit(store)?;
    if report.is_clean() {
        return Ok(());
    }
    Err(Error::Invariant(format!("audit after access {access}: {}", report.violations.join("; "))))
}

/// Outsourced blocks per stash block, or `N` when the stash stayed empty.
pub fn outsourcing_ratio(params: &Params, stats: &StashStats) -> f64 {
    if stats.max_stash == 0 {
        params.n() as f64
    } else {
        params.n() as f64 / stats.max_stash as f64
    }
}

/// Size of a position map of `N` entries of `L` bits each.
pub fn posmap_bytes(params: &Params) -> u64 {
    (params.n() * params.levels() as u64).div_ceil(8)
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct SweepGrid {
    #[serde(rename = "L")]
    pub levels: Vec<u32>,
    pub k: Vec<u32>,
    #[serde(rename = "Z")]
    pub z: Vec<usize>,
    /// Exponents `i` of `p = 1 - 2^-i`.
    pub p_i: Vec<u32>,
    #[serde(with = "lambda_list")]
    pub lambda: Vec<Lambda>,
    #[serde(rename = "M")]
    pub m: Vec<u64>,
    pub seeds: Vec<u64>,
}

mod lambda_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::params::Lambda;

    #[derive(Deserialize, Serialize)]
    #[serde(untagged)]
    enum Entry {
        Rate(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(values: &[Lambda], s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = values
            .iter()
            .map(|l| match l {
                Lambda::Rate(r) => Entry::Rate(*r),
                Lambda::Infinite => Entry::Text("inf".into()),
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Lambda>, D::Error> {
        Vec::<Entry>::deserialize(d)?
            .into_iter()
            .map(|e| match e {
                Entry::Rate(r) => Lambda::new(r),
                Entry::Text(t) => t.parse(),
            })
            .collect::<crate::Result<_>>()
            .map_err(serde::de::Error::custom)
    }
}

impl SweepGrid {
    pub fn from_json<R: Read>(input: R) -> Result<Self> {
        Ok(serde_json::from_reader(input)?)
    }

    /// Every valid cell in row order L, k, Z, p, lambda, M, seed. Cells
    /// with `k > L` or `i > L` do not exist and are skipped.
    pub fn cells(&self) -> Result<Vec<(Params, u64, u64)>> {
        let mut cells = Vec::new();
        for &levels in &self.levels {
            for &k in self.k.iter().filter(|&&k| k <= levels) {
                for &z in &self.z {
                    for &i in self.p_i.iter().filter(|&&i| i <= levels) {
                        for &lambda in &self.lambda {
                            let params = ParamsBuilder::new(levels)
                                .k(k)
                                .z(z)
                                .p(p_from_exponent(i))
                                .block_size(SIM_BLOCK_SIZE)
                                .lambda(lambda)
                                .build()?;
                            for &m in &self.m {
                                for &seed in &self.seeds {
                                    cells.push((params, m, seed));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct SweepRow {
    pub L: u32,
    pub k: u32,
    pub Z: usize,
    pub p: f64,
    pub lambda: String,
    pub M: u64,
    pub seed: u64,
    pub max_stash: usize,
    pub R: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub bandwidth: f64,
    pub posmap_bytes: u64,
    pub warmup_max_stash: usize,
}

/// Simulate one cell with auditing enabled and attach the accountant's
/// figures. δ uses the measured maximum stash as the stash bound.
pub fn sweep_cell(params: Params, m: u64, seed: u64) -> Result<SweepRow> {
    let options = SimOptions { audit_interval: Some(AUDIT_INTERVAL), ..SimOptions::default() };
    let stats = run_sim_with(params, m, seed, &options)?;
    SweepRow::from_stats(&params, m, seed, &stats)
}

impl SweepRow {
    pub fn from_stats(params: &Params, m: u64, seed: u64, stats: &StashStats) -> Result<Self> {
        Ok(SweepRow {
        L: params.levels(),
        k: params.k(),
        Z: params.z(),
        p: params.p(),
        lambda: params.lambda().to_string(),
        M: m,
        seed,
        max_stash: stats.max_stash,
        R: outsourcing_ratio(params, stats),
        epsilon: epsilon_of(params.n(), params.p())?,
        delta: delta_of(params.p(), stats.max_stash as u64, params.z(), params.k())?,
        bandwidth: bandwidth_of(params.z(), params.k(), params.lambda()),
        posmap_bytes: posmap_bytes(params),
        warmup_max_stash: stats.warmup_max_stash,
        })
    }
}

/// Run every cell in parallel; rows come back in grid order.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    grid.cells()?.into_par_iter().map(|(params, m, seed)| sweep_cell(params, m, seed)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct GrowthRow {
    pub L: u32,
    pub k: u32,
    pub Z: usize,
    pub p: f64,
    pub lambda: String,
    pub seed: u64,
    pub M: u64,
    pub max_stash: usize,
}

/// Maximum stash after each of `ms` accesses, all taken from one run.
pub fn m_growth(params: Params, ms: &[u64], seed: u64) -> Result<Vec<GrowthRow>> {
    if ms.is_empty() || ms.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("M values must be non-empty and strictly increasing"));
    }
    let options = SimOptions { checkpoints: ms.to_vec(), ..SimOptions::default() };
    let stats = run_sim_with(params, *ms.last().expect("non-empty"), seed, &options)?;
    Ok(stats
        .checkpoints
        .into_iter()
        .map(|(m, max_stash)| GrowthRow {
            L: params.levels(),
            k: params.k(),
            Z: params.z(),
            p: params.p(),
            lambda: params.lambda().to_string(),
            seed,
            M: m,
            max_stash,
        })
        .collect())
}

/// `λ = 1`, `p = 1 - 2^-k`.
pub fn growth_params(levels: u32, k: u32, z: usize) -> Result<Params> {
    ParamsBuilder::new(levels)
        .k(k)
        .z(z)
        .p(p_from_exponent(k))
        .block_size(SIM_BLOCK_SIZE)
        .lambda(Lambda::Rate(1.0))
        .build()
}

/// Serialize rows as CSV with a header line.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
