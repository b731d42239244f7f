use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use root_oram::metrics::{channel_from_csv, k_anonymity, kl_divergence, min_entropy, shannon_entropy, to_bits, Distribution};
use root_oram::net::{bench_latency, BenchConfig, RemoteStore, Server, ThrottleConfig};
use root_oram::oracle::{delta_witness, format_rational, max_ratio_bruteforce, parse_rational, ModelParams, Witness};
use root_oram::privacy::{
    bandwidth_of, compose, delta_of, epsilon_of, recursion_plan, solve_k_for_bandwidth, solve_p_for_epsilon, PrivacySpec,
};
use root_oram::sim::{drive, growth_params, m_growth, sweep, sweep_cell, SimOptions, SweepGrid, SweepRow};
use root_oram::storage::BlockKind;
use root_oram::{ClientState, Error, MemoryStore, Result, StorageBackend};

use crate::output::{pairs, sink, table};
use crate::{Cli, Command, Format, SnapshotCommand, ThrottleArgs};

pub fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Simulate { params, m, connect, throttle, cipher } => {
            let params = params.build()?;
            let row = match connect {
                None => sweep_cell(params, *m, cli.seed)?,
                Some(addr) => {
                    let mut client = ClientState::new(params, cli.seed, cipher.build(cli.seed));
                    let mut remote = RemoteStore::connect(addr.as_str(), client.layout(), throttle_of(throttle)?)?;
                    client.warm_up(&mut remote)?;
                    let stats = drive(&mut client, &mut remote, *m, cli.seed, &SimOptions::default(), |_, _, _| Ok(()))?;
                    SweepRow::from_stats(&params, *m, cli.seed, &stats)?
                }
            };
            table(out, cli.format, &[row])
        }
        Command::Sweep { grid } => {
            let grid = SweepGrid::from_json(BufReader::new(File::open(grid)?))?;
            table(out, cli.format, &sweep(&grid)?)
        }
        Command::Mgrowth { levels, k, z, lambda, m } => {
            let params = growth_params(*levels, *k, *z)?.with_lambda(*lambda);
            let ms: Vec<u64> = if m.is_empty() { (0..8).map(|i| params.n() << i).collect() } else { m.clone() };
            table(out, cli.format, &m_growth(params, &ms, cli.seed)?)
        }
        Command::Accountant { n, p, z, k, lambda, stash_bound, compose: m, epsilon, delta, rounds, ratio } => {
            let mut items = Vec::new();
            let mut eps = *epsilon;
            let mut del = *delta;
            if let (Some(n), Some(p)) = (n, p) {
                let e = epsilon_of(*n, *p)?;
                items.push(("epsilon".into(), e.to_string()));
                eps = eps.or(Some(e));
            }
            if let (Some(p), Some(z), Some(k)) = (p, z, k) {
                let d = delta_of(*p, *stash_bound, *z, *k)?;
                items.push(("delta".into(), d.to_string()));
                del = del.or(Some(d));
            }
            let bandwidth = match (z, k) {
                (Some(z), Some(k)) => {
                    let b = bandwidth_of(*z, *k, *lambda);
                    items.push(("bandwidth".into(), b.to_string()));
                    Some(b)
                }
                _ => None,
            };
            let spec = eps.map(|e| PrivacySpec::new(e, del.unwrap_or(0.0))).transpose()?;
            if let Some(m) = m {
                let spec = spec.ok_or_else(|| Error::Domain("--compose needs epsilon (or N and p)".into()))?;
                let composed = compose(*m, spec)?;
                items.push(("composed_epsilon".into(), composed.epsilon.to_string()));
                items.push(("composed_delta".into(), composed.delta.to_string()));
            }
            if let Some(t) = rounds {
                let (Some(spec), Some(b), Some(r)) = (spec, bandwidth, ratio) else {
                    return Err(Error::Domain("--rounds needs epsilon, Z, k and R".into()));
                };
                let plan = recursion_plan(*t, spec, b, *r)?;
                items.push(("recursion_epsilon".into(), plan.spec.epsilon.to_string()));
                items.push(("recursion_delta".into(), plan.spec.delta.to_string()));
                items.push(("recursion_bandwidth".into(), plan.bandwidth.to_string()));
                items.push(("recursion_ratio".into(), plan.outsourcing_ratio.to_string()));
            }
            if items.is_empty() {
                return Err(Error::Domain("nothing to compute: give N and p, or Z and k".into()));
            }
            pairs(out, cli.format, &items)
        }
        Command::Solve { n, epsilon, bandwidth, z, lambda, levels } => {
            let mut items = Vec::new();
            if let (Some(n), Some(e)) = (n, epsilon) {
                items.push(("p".into(), solve_p_for_epsilon(*n, *e)?.to_string()));
            }
            if let Some(b) = bandwidth {
                items.push(("k".into(), solve_k_for_bandwidth(*b, *z, *lambda, *levels)?.to_string()));
            }
            if items.is_empty() {
                return Err(Error::Domain("give N and epsilon, or bandwidth".into()));
            }
            pairs(out, cli.format, &items)
        }
        Command::Verify { n, p, m, capacity, elements } => {
            let model = ModelParams::exact(*n, parse_rational(p)?, *capacity)?;
            let elements = elements.unwrap_or((*m as u64).min(4));
            let report = max_ratio_bruteforce(&model, *m, elements)?;
            let delta = delta_witness(&model, 0)?;
            let verdict = if report.within_bound() { "PASS" } else { "FAIL" };
            let relation = if report.attains_bound() {
                "="
            } else if report.within_bound() {
                "<"
            } else {
                ">"
            };
            let mut w = sink(out)?;
            if cli.format == Some(Format::Json) {
                let show = |w: &Option<Witness<_>>| {
                    w.as_ref().map(|w| {
                        serde_json::json!({
                            "r1": w.r1, "r2": w.r2, "observed": w.observed, "position": w.position,
                            "prob1": format_rational(&w.prob1), "prob2": format_rational(&w.prob2),
                            "pattern": format!("{:?}", w.pattern),
                        })
                    })
                };
                let value = serde_json::json!({
                    "max_ratio": format_rational(&report.max_ratio),
                    "bound": format_rational(&report.bound),
                    "attains_bound": report.attains_bound(),
                    "pass": report.within_bound(),
                    "pairs_compared": report.pairs_compared,
                    "witness": show(&report.witness),
                    "pattern_witness": show(&report.pattern_witness),
                    "delta_witness": {
                        "r1": delta.r1, "r2": delta.r2, "observed": delta.observed,
                        "prob1": format_rational(&delta.prob1), "prob2": format_rational(&delta.prob2),
                    },
                });
                serde_json::to_writer_pretty(&mut w, &value)?;
                writeln!(w)?;
            } else {
                writeln!(
                    w,
                    "max ratio {} {relation} bound {}, {verdict}",
                    format_rational(&report.max_ratio),
                    format_rational(&report.bound)
                )?;
                writeln!(w, "pairs compared {}", report.pairs_compared)?;
                if let Some(wit) = &report.witness {
                    writeln!(w, "witness r1={:?} r2={:?} observed={:?} ({:?})", wit.r1, wit.r2, wit.observed, wit.pattern)?;
                }
                writeln!(
                    w,
                    "delta witness r1={:?} r2={:?} observed={:?} prob1={} prob2={}",
                    delta.r1,
                    delta.r2,
                    delta.observed,
                    format_rational(&delta.prob1),
                    format_rational(&delta.prob2)
                )?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Metrics { dist, against, channel, bits } => {
            let unit = |x: f64| if *bits { to_bits(x) } else { x };
            let mut items = Vec::new();
            if let Some(path) = dist {
                let p = Distribution::from_csv(File::open(path)?)?;
                let q = match against {
                    Some(path) => Distribution::from_csv(File::open(path)?)?,
                    None => Distribution::new(p.support().to_vec(), vec![1.0 / p.len() as f64; p.len()])?,
                };
                items.push(("shannon_entropy".into(), unit(shannon_entropy(&p)).to_string()));
                items.push(("min_entropy".into(), unit(min_entropy(&p)).to_string()));
                items.push(("kl_divergence".into(), unit(kl_divergence(&p, &q)).to_string()));
            }
            if let Some(path) = channel {
                let rows = channel_from_csv(File::open(path)?)?;
                items.push(("k_anonymity".into(), k_anonymity(rows)?.to_string()));
            }
            if items.is_empty() {
                return Err(Error::Domain("give --dist and/or --channel".into()));
            }
            pairs(out, cli.format, &items)
        }
        Command::Serve { params, listen, throttle, snapshot, sessions, cipher } => {
            let params = params.build()?;
            let mut store = match snapshot {
                Some(path) if path.exists() => MemoryStore::load_snapshot(BufReader::new(File::open(path)?))?,
                _ => ClientState::new(params, cli.seed, cipher.build(cli.seed)).format_store(),
            };
            let server = Server::bind(listen.as_str())?.with_throttle(throttle_of(throttle)?);
            eprintln!("listening on {}", server.local_addr()?);
            let mut served = 0u64;
            server.serve_sessions(&mut store, |store| {
                served += 1;
                if let Some(path) = snapshot {
                    save(store, path)?;
                }
                Ok(*sessions == 0 || served < *sessions)
            })
        }
        Command::Bench { levels, k, z, block_size, rate_bps, burst_bytes, p, lambda, accesses, cipher } => {
            let config = BenchConfig {
                levels: *levels,
                ks: k.clone(),
                zs: z.clone(),
                block_sizes: block_size.clone(),
                rates_bps: rate_bps.iter().map(|&r| (r > 0.0).then_some(r)).collect(),
                burst_bytes: *burst_bytes,
                p: *p,
                lambda: *lambda,
                cipher: *cipher,
                accesses: *accesses,
                seed: cli.seed,
            };
            table(out, cli.format, &bench_latency(&config)?)
        }
        Command::Snapshot(SnapshotCommand::Save { path, params, m, cipher }) => {
            let params = params.build()?;
            let (mut client, mut store) = ClientState::setup(params, cli.seed, *cipher)?;
            if *m > 0 {
                drive(&mut client, &mut store, *m, cli.seed, &SimOptions::default(), |_, _, _| Ok(()))?;
            }
            save(&store, path)?;
            let items = vec![
                ("path".into(), path.display().to_string()),
                ("buckets".into(), store.buckets()?.len().to_string()),
                ("stash".into(), client.stash_len().to_string()),
            ];
            pairs(out, cli.format, &items)
        }
        Command::Snapshot(SnapshotCommand::Load { path, cipher }) => {
            let store = MemoryStore::load_snapshot(BufReader::new(File::open(path)?))?;
            let opener = cipher.build(cli.seed);
            let layout = store.layout();
            let mut real = 0u64;
            for env in store.buckets()?.iter().flat_map(|b| &b.envelopes) {
                if matches!(opener.open(env)?.kind, BlockKind::Real(_)) {
                    real += 1;
                }
            }
            let items = vec![
                ("L".into(), layout.shape.levels().to_string()),
                ("k".into(), layout.shape.k().to_string()),
                ("Z".into(), layout.z.to_string()),
                ("B".into(), layout.block_size.to_string()),
                ("envelope_len".into(), layout.envelope_len.to_string()),
                ("buckets".into(), store.buckets()?.len().to_string()),
                ("real_blocks".into(), real.to_string()),
            ];
            pairs(out, cli.format, &items)
        }
    }
}

fn throttle_of(args: &ThrottleArgs) -> Result<Option<ThrottleConfig>> {
    args.rate_bps.map(|r| ThrottleConfig::new(r, args.burst_bytes)).transpose()
}

fn save(store: &MemoryStore, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut w = std::io::BufWriter::new(File::create(&tmp)?);
    store.save_snapshot(&mut w)?;
    w.flush()?;
    drop(w);
    std::fs::rename(tmp, path)?;
    Ok(())
}
