use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::*;
use crate::params::{uniform_p, ParamsBuilder};
use crate::storage::NullCipher;

fn params(levels: u32, k: u32, z: usize, p: f64, lambda: Lambda) -> Params {
    ParamsBuilder::new(levels).k(k).z(z).p(p).block_size(8).lambda(lambda).build().unwrap()
}

fn payload(byte: u8) -> Vec<u8> {
    vec![byte; 8]
}

/// Client with an empty stash and a formatted store, blocks not yet placed.
fn bare_client(params: Params) -> (ClientState, MemoryStore) {
    let mut client = ClientState::new(params, 1, Box::new(NullCipher));
    let store = client.format_store();
    (client, store)
}

#[test]
fn write_then_read_returns_written_value() {
    let (mut client, mut store) = ClientState::setup(params(4, 2, 2, 0.3, Lambda::Rate(2.0)), 3, CipherKind::Aead).unwrap();
    for a in 0..16u64 {
        client.access(&mut store, AccessRequest::write(a, payload(a as u8 + 1))).unwrap();
    }
    for round in 0..3 {
        for a in (0..16u64).rev() {
            let got = client.access(&mut store, AccessRequest::read(a)).unwrap();
            assert_eq!(got, payload(a as u8 + 1), "round {round} addr {a}");
        }
    }
}

#[test]
fn write_returns_previous_payload() {
    let (mut client, mut store) = ClientState::setup(params(3, 3, 4, uniform_p(3), Lambda::Infinite), 0, CipherKind::Null).unwrap();
    assert_eq!(client.access(&mut store, AccessRequest::write(2, payload(9))).unwrap(), payload(0));
    assert_eq!(client.access(&mut store, AccessRequest::write(2, payload(7))).unwrap(), payload(9));
    assert_eq!(client.access(&mut store, AccessRequest::read(2)).unwrap(), payload(7));
}

#[test]
fn fresh_block_reads_as_zeros() {
    let (mut client, mut store) = ClientState::setup(params(3, 2, 2, 0.5, Lambda::Rate(1.0)), 8, CipherKind::Null).unwrap();
    assert_eq!(client.access(&mut store, AccessRequest::read(5)).unwrap(), vec![0; 8]);
}

#[test]
fn malformed_requests_are_rejected() {
    let (mut client, mut store) = ClientState::setup(params(3, 2, 2, 0.5, Lambda::Infinite), 8, CipherKind::Null).unwrap();
    assert!(matches!(client.access(&mut store, AccessRequest::read(8)), Err(Error::Domain(_))));
    assert!(client.access(&mut store, AccessRequest::write(1, vec![1; 7])).is_err());
    let bad = AccessRequest { op: Op::Write, addr: 1, data: None };
    assert!(client.access(&mut store, bad).is_err());
    let bad = AccessRequest { op: Op::Read, addr: 1, data: Some(payload(1)) };
    assert!(client.access(&mut store, bad).is_err());
}

#[test]
fn single_access_moves_one_path_each_way() {
    let (mut client, mut store) = ClientState::setup(params(2, 1, 4, uniform_p(2), Lambda::Infinite), 5, CipherKind::Null).unwrap();
    let (reads, writes) = (store.path_reads(), store.path_writes());
    client.access(&mut store, AccessRequest::read(1)).unwrap();
    assert_eq!(store.path_reads() - reads, 1);
    assert_eq!(store.path_writes() - writes, 1);
    // two buckets of four slots, read and written
    assert_eq!(client.stats().blocks_transferred, 16);
}

#[test]
fn infinite_lambda_never_fakes() {
    let (mut client, mut store) = ClientState::setup(params(3, 2, 2, 0.5, Lambda::Infinite), 1, CipherKind::Null).unwrap();
    let (_, trace) = client.run(&mut store, [1, 2, 3].map(AccessRequest::read)).unwrap();
    assert_eq!(trace.len(), 3);
    assert_eq!(trace.fake_count(), 0);
}

#[test]
fn unit_lambda_issues_one_fake_per_real() {
    let (mut client, mut store) = ClientState::setup(params(6, 3, 2, 0.5, Lambda::Rate(1.0)), 2, CipherKind::Null).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let reals = 10_000u64;
    for _ in 0..reals {
        client.access(&mut store, AccessRequest::read(rng.gen_range(0..64))).unwrap();
    }
    let ratio = client.stats().fake_accesses as f64 / reals as f64;
    // renewal count with unit-mean, unit-variance cycles: sd of the ratio ≈ 1/sqrt(reals)
    assert!((ratio - 1.0).abs() < 3.0 / (reals as f64).sqrt(), "ratio {ratio}");
}

#[test]
fn audit_stays_clean_across_parameters() {
    let cases = [
        params(5, 1, 1, 0.5, Lambda::Rate(0.5)),
        params(5, 5, 4, uniform_p(5), Lambda::Infinite),
        params(6, 3, 2, 0.125, Lambda::Rate(2.0)),
        params(4, 2, 3, 1e-6, Lambda::Rate(1.0)),
    ];
    for (seed, p) in cases.into_iter().enumerate() {
        let (mut client, mut store) = ClientState::setup(p, seed as u64, CipherKind::Null).unwrap();
        assert!(client.audit(&store).unwrap().is_clean());
        let mut rng = ChaCha12Rng::seed_from_u64(seed as u64);
        for i in 0..10_000u32 {
            let a = rng.gen_range(0..p.n());
            if i % 3 == 0 {
                client.access(&mut store, AccessRequest::write(a, payload(i as u8))).unwrap();
            } else {
                client.access(&mut store, AccessRequest::read(a)).unwrap();
            }
            if i % 1000 == 999 {
                let report = client.audit(&store).unwrap();
                assert!(report.is_clean(), "{p}: {:?}", report.violations);
                assert_eq!(report.blocks_in_tree + report.blocks_in_stash, p.n());
            }
        }
    }
}

#[test]
fn block_found_in_stash_still_fetches_full_path() {
    let p = params(3, 3, 2, uniform_p(3), Lambda::Infinite);
    let (mut client, mut store) = bare_client(p);
    // every block still sits in the stash
    client.record_trace();
    client.access(&mut store, AccessRequest::read(4)).unwrap();
    assert_eq!(store.path_reads(), 1);
    assert_eq!(client.stats().blocks_transferred, 2 * 2 * 4);
    assert_eq!(client.take_trace().len(), 1);
}

#[test]
fn path_oram_shape_reads_l_plus_one_buckets() {
    let p = params(5, 5, 1, uniform_p(5), Lambda::Infinite);
    let (mut client, mut store) = bare_client(p);
    client.access(&mut store, AccessRequest::read(0)).unwrap();
    assert_eq!(client.stats().blocks_transferred, 2 * 6);
    assert_eq!(store.read_path(0).unwrap().len(), 6);
}

#[test]
fn push_down_moves_block_to_its_leaf() {
    let shape = TreeShape::new(3, 3).unwrap();
    let placement = push_down(&shape, 1, 5, &[(9, 5)]);
    assert_eq!(placement.levels, vec![vec![], vec![], vec![], vec![9]]);
}

#[test]
fn push_down_prefers_deepest_reach_then_low_id() {
    let shape = TreeShape::new(2, 2).unwrap();
    // from leaf 0: ids 7 and 3 reach level 2, 5 reaches level 1 (leaf 1), 1 only the root (leaf 2)
    let placement = push_down(&shape, 1, 0, &[(1, 2), (5, 1), (7, 0), (3, 0)]);
    assert_eq!(placement.levels, vec![vec![5], vec![7], vec![3]]);
    let placement = push_down(&shape, 1, 0, &[(1, 2), (7, 0), (3, 0)]);
    assert_eq!(placement.levels, vec![vec![1], vec![7], vec![3]]);
}

#[test]
fn push_down_is_a_fixed_point_on_full_deepest_path() {
    let shape = TreeShape::new(2, 1).unwrap();
    let placement = push_down(&shape, 2, 3, &[(0, 3), (1, 3), (2, 0), (3, 1)]);
    let again = push_down(&shape, 2, 3, &placement.placed().map(|id| (id, [3, 3, 0, 1][id as usize])).collect::<Vec<_>>());
    assert_eq!(placement, again);
    assert_eq!(placement.levels[1], vec![0, 1]);
}

#[test]
fn push_down_conserves_blocks_and_capacity() {
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    for _ in 0..10_000 {
        let levels = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=levels);
        let shape = TreeShape::new(levels, k).unwrap();
        let z = rng.gen_range(1..=4);
        let x = rng.gen_range(0..shape.n());
        let count = rng.gen_range(0..3 * z * (k as usize + 1));
        let candidates: Vec<(u64, u64)> = (0..count as u64).map(|id| (id, rng.gen_range(0..shape.n()))).collect();
        let placement = push_down(&shape, z, x, &candidates);
        let mut placed: Vec<u64> = placement.placed().collect();
        placed.sort_unstable();
        placed.dedup();
        assert_eq!(placed.len(), placement.placed().count(), "duplicate placement");
        for (level, ids) in placement.levels.iter().enumerate() {
            assert!(ids.len() <= z);
            for id in ids {
                let leaf = candidates[*id as usize].1;
                assert!(shape.common_level(x, leaf).unwrap() as usize >= level);
            }
        }
        // every unplaced block is blocked by full buckets at all levels it may use
        for &(id, leaf) in &candidates {
            if !placed.contains(&id) {
                let reach = shape.common_level(x, leaf).unwrap() as usize;
                assert!(placement.levels[..=reach].iter().all(|b| b.len() == z));
            }
        }
    }
}

#[test]
fn write_back_lands_in_leaf_when_mapping_kept() {
    let p = params(3, 2, 2, 1e-9, Lambda::Infinite);
    let (mut client, mut store) = bare_client(p);
    client.stash.clear();
    client.stash.insert(3, payload(3));
    client.position[3] = 6;
    client.access(&mut store, AccessRequest::read(3)).unwrap();
    assert_eq!(client.position(3), Some(6));
    let leaf = client.shape.leaf_bucket(6).unwrap();
    let bucket = &store.buckets().unwrap()[leaf.index as usize];
    assert_eq!(NullCipher.open(&bucket.envelopes[0]).unwrap(), Block::real(3, payload(3)));
    assert_eq!(client.stash_len(), 0);
}

#[test]
fn write_back_overflow_keeps_block_in_stash() {
    // k = 1, Z = 1: root shared by all leaves
    let p = params(2, 1, 1, 0.75, Lambda::Infinite);
    let (mut client, mut store) = bare_client(p);
    client.stash.clear();
    client.stash.insert(0, payload(1));
    client.stash.insert(1, payload(2));
    client.stash.insert(2, payload(3));
    client.position[..3].copy_from_slice(&[0, 2, 0]);
    // force z != x by drawing until the remap moves block 0
    client.record_trace();
    loop {
        let before = client.position[0];
        client.access(&mut store, AccessRequest::read(0)).unwrap();
        if client.position[0] != before {
            break;
        }
    }
    let trace = client.take_trace();
    assert!(!trace.is_empty());
    assert!(client.stash.contains_key(&0));
    // every bucket on the written path is full-size
    for leaf in 0..4 {
        for bucket in store.read_path(leaf).unwrap() {
            assert_eq!(bucket.envelopes.len(), 1);
        }
    }
    assert!(client.audit(&store).unwrap().violations.iter().all(|v| v.contains("lost")));
}

#[test]
fn written_buckets_are_padded_to_z() {
    let (mut client, mut store) = ClientState::setup(params(4, 2, 3, 0.5, Lambda::Rate(1.0)), 9, CipherKind::Aead).unwrap();
    let env_len = client.layout().envelope_len;
    for a in 0..16 {
        client.access(&mut store, AccessRequest::read(a)).unwrap();
    }
    for bucket in store.buckets().unwrap() {
        assert_eq!(bucket.envelopes.len(), 3);
        assert!(bucket.envelopes.iter().all(|e| e.len() == env_len));
    }
}

/// Write `id` into the deepest free slot of its own path, bypassing the client.
fn place_in_tree(client: &ClientState, store: &mut MemoryStore, id: u64) {
    let leaf = client.position[id as usize];
    let mut path = store.read_path(leaf).unwrap();
    let is_free = |e: &Vec<u8>| NullCipher.open(e).unwrap().kind == BlockKind::Dummy;
    let level = (0..path.len()).rev().find(|&l| path[l].envelopes.iter().any(is_free)).expect("room on path");
    let slot = path[level].envelopes.iter().position(is_free).unwrap();
    path[level].envelopes[slot] = NullCipher.seal(&Block::real(id, vec![0; client.params.block_size()]));
    store.write_path(leaf, path).unwrap();
}

#[test]
fn fake_access_on_singleton_stash_targets_it() {
    let p = params(3, 3, 4, uniform_p(3), Lambda::Infinite);
    let (mut client, mut store) = bare_client(p);
    client.stash.retain(|&id, _| id == 6);
    for id in (0..8).filter(|&id| id != 6) {
        place_in_tree(&client, &mut store, id);
    }
    assert!(client.audit(&store).unwrap().is_clean());
    let leaf = client.position[6];
    client.record_trace();
    client.fake_access(&mut store).unwrap();
    assert_eq!(client.take_trace().entries, vec![TraceEntry { leaf, fake: true }]);
    assert!(client.audit(&store).unwrap().is_clean());
}

#[test]
fn empty_stash_fake_still_moves_a_full_path() {
    let p = params(4, 4, 4, uniform_p(4), Lambda::Infinite);
    let (mut client, mut store) = bare_client(p);
    client.stash.clear();
    for id in 0..16 {
        place_in_tree(&client, &mut store, id);
    }
    assert!(client.audit(&store).unwrap().is_clean());
    client.reset_stats();
    client.record_trace();
    let before = store.path_writes();
    client.fake_access(&mut store).unwrap();
    assert_eq!(store.path_writes() - before, 1);
    assert_eq!(client.take_trace().len(), 1);
    assert_eq!(client.stats().blocks_transferred, 2 * 4 * 5);
    assert!(client.audit(&store).unwrap().is_clean());
}

#[test]
fn every_fake_moves_two_paths_of_blocks() {
    let p = params(6, 2, 3, 0.5, Lambda::Infinite);
    let (mut client, mut store) = ClientState::setup(p, 1, CipherKind::Null).unwrap();
    for _ in 0..10_000 {
        client.fake_access(&mut store).unwrap();
    }
    assert_eq!(client.stats().blocks_transferred, 10_000 * 2 * 3 * 3);
}

#[test]
fn remap_with_tiny_p_keeps_leaf() {
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    assert!((0..100_000).all(|_| remap(&mut rng, 1024, 1e-9, 17) == 17));
}

#[test]
fn remap_same_leaf_frequency() {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let trials = 100_000;
    let same = (0..trials).filter(|_| remap(&mut rng, 4, 0.6, 2) == 2).count() as f64 / trials as f64;
    let sigma = (0.4f64 * 0.6 / trials as f64).sqrt();
    assert!((same - 0.4).abs() < 3.0 * sigma, "{same}");
}

#[test]
fn remap_never_leaves_range() {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    for x in 0..8 {
        for _ in 0..1000 {
            assert!(remap(&mut rng, 8, 0.875, x) < 8);
        }
    }
}

#[test]
fn same_seed_same_everything() {
    let p = params(5, 3, 2, 0.25, Lambda::Rate(0.75));
    let run = || {
        let (mut client, mut store) = ClientState::setup(p, 42, CipherKind::Aead).unwrap();
        let (out, trace) = client.run(&mut store, (0..200).map(|i| AccessRequest::read(i % 32))).unwrap();
        (out, trace, client.position_map().to_vec(), client.stash_snapshot(), store.buckets().unwrap().to_vec())
    };
    assert_eq!(run(), run());
}

#[test]
fn warm_up_stats_are_kept_apart() {
    let p = params(4, 2, 2, 0.5, Lambda::Rate(1.0));
    let (client, _) = ClientState::setup(p, 0, CipherKind::Null).unwrap();
    assert_eq!(client.warmup_stats().unwrap().fake_accesses, 16);
    assert_eq!(client.stats().fake_accesses, 0);
    assert_eq!(client.stats().max_stash, client.stash_len());
}

/// Passes reads through and rejects every write while `fail` is set.
struct FlakyStore {
    inner: MemoryStore,
    fail: bool,
}

impl StorageBackend for FlakyStore {
    fn layout(&self) -> StoreLayout {
        self.inner.layout()
    }

    fn read_path(&mut self, leaf: u64) -> Result<Vec<Bucket>> {
        self.inner.read_path(leaf)
    }

    fn write_path(&mut self, leaf: u64, buckets: Vec<Bucket>) -> Result<()> {
        if self.fail {
            return Err(Error::Io(std::io::Error::new(std::io::ErrorKind::BrokenPipe, "dropped")));
        }
        self.inner.write_path(leaf, buckets)
    }
}

#[test]
fn failed_write_rolls_client_back() {
    let (mut client, inner) = ClientState::setup(params(5, 3, 2, 0.4, Lambda::Rate(1.0)), 21, CipherKind::Null).unwrap();
    let mut store = FlakyStore { inner, fail: false };
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    for i in 0..300u64 {
        let addr = rng.gen_range(0..32);
        store.fail = i % 7 == 3;
        let before = (client.position_map().to_vec(), client.stash_snapshot());
        let result = client.access(&mut store, AccessRequest::write(addr, payload(i as u8)));
        if store.fail {
            assert!(result.unwrap_err().is_io());
            assert_eq!(client.position_map(), &before.0[..]);
            assert_eq!(client.stash_snapshot(), before.1);
        }
        let report = client.audit(&store.inner).unwrap();
        assert!(report.is_clean(), "{:?}", report.violations);
    }
}
