//! The trusted client.
//!
//! [`ClientState`] owns the position map, the stash and the random source.
//! Every access, real or fake, reads one whole path, evicts blocks as deep
//! as possible along it, remaps the accessed block with the sticky
//! distribution (keep the leaf with probability `1 - p`, otherwise move to
//! a uniformly random other leaf) and writes the path back re-encrypted.

pub mod poisson;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{Lambda, Params};
use crate::storage::{Block, BlockKind, Bucket, Cipher, CipherKind, MemoryStore, StorageBackend, StoreLayout};
use crate::tree::{derive_tree_shape, TreeShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Op {
    Read,
    Write,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessRequest {
    pub op: Op,
    pub addr: u64,
    pub data: Option<Vec<u8>>,
}

impl AccessRequest {
    pub fn read(addr: u64) -> Self {
        AccessRequest { op: Op::Read, addr, data: None }
    }

    pub fn write(addr: u64, data: Vec<u8>) -> Self {
        AccessRequest { op: Op::Write, addr, data: Some(data) }
    }
}

/// One server-visible path access.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub leaf: u64,
    pub fake: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AccessTrace {
    pub entries: Vec<TraceEntry>,
}

impl AccessTrace {
    /// What the server sees: leaves only.
    pub fn observed(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.leaf).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fake_count(&self) -> usize {
        self.entries.iter().filter(|e| e.fake).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClientStats {
    pub real_accesses: u64,
    pub fake_accesses: u64,
    /// Blocks moved in either direction, counting dummies.
    pub blocks_transferred: u64,
    /// Largest stash observed between accesses.
    pub max_stash: usize,
}

/// Per-level block placement along one path, root first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Placement {
    pub levels: Vec<Vec<u64>>,
}

impl Placement {
    fn empty(depth: usize) -> Self {
        Placement { levels: vec![Vec::new(); depth] }
    }

    pub fn placed(&self) -> impl Iterator<Item = u64> + '_ {
        self.levels.iter().flatten().copied()
    }

    /// Put `id` in the deepest level `<= deepest` with room; false when every
    /// such level is full.
    fn place(&mut self, id: u64, deepest: u32, capacity: usize) -> bool {
        for level in (0..=deepest as usize).rev() {
            if self.levels[level].len() < capacity {
                self.levels[level].push(id);
                return true;
            }
        }
        false
    }
}

/// Greedy eviction onto `P(x)`.
///
/// Each candidate `(block id, mapped leaf)` may sit at any level up to the
/// deepest bucket shared by `P(x)` and its own path. Blocks with the
/// deepest reach go first, ties by ascending id; each takes the deepest
/// free slot it is allowed. Blocks that do not fit are left out.
pub fn push_down(shape: &TreeShape, z: usize, x: u64, candidates: &[(u64, u64)]) -> Placement {
    let mut order: Vec<(u32, u64)> =
        candidates.iter().map(|&(id, leaf)| (shape.common_level_unchecked(x, leaf), id)).collect();
    order.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut placement = Placement::empty(shape.path_length_buckets);
    let mut free = shape.path_length_buckets * z;
    for (deepest, id) in order {
        if free == 0 {
            break;
        }
        if placement.place(id, deepest, z) {
            free -= 1;
        }
    }
    placement
}

/// Draw a new leaf for a block currently on `x`: keep `x` with probability
/// `1 - p`, otherwise pick uniformly among the other `n - 1` leaves.
pub fn remap<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64, x: u64) -> u64 {
    if n < 2 || !rng.gen_bool(p) {
        return x;
    }
    let r = rng.gen_range(0..n - 1);
    if r >= x {
        r + 1
    } else {
        r
    }
}

/// Outcome of a full-state audit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub blocks_in_tree: u64,
    pub blocks_in_stash: u64,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub struct ClientState {
    params: Params,
    shape: TreeShape,
    position: Vec<u64>,
    stash: IndexMap<u64, Vec<u8>>,
    rng: ChaCha12Rng,
    cipher: Box<dyn Cipher>,
    /// Real accesses left before the next fake; `None` when a fresh draw is due.
    pending_real: Option<u64>,
    stats: ClientStats,
    warmup_stats: Option<ClientStats>,
    trace: Option<AccessTrace>,
}

impl std::fmt::Debug for ClientState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientState")
            .field("params", &self.params)
            .field("stash_len", &self.stash.len())
            .field("stats", &self.stats)
            .finish_non_exhaustive()
    }
}

impl ClientState {
    /// Fresh client: zero payloads, uniform random positions, every block in
    /// the stash.
    pub fn new(params: Params, seed: u64, cipher: Box<dyn Cipher>) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n = params.n();
        let position = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let stash = (0..n).map(|id| (id, vec![0u8; params.block_size()])).collect();
        ClientState {
            params,
            shape: derive_tree_shape(&params),
            position,
            stash,
            rng,
            cipher,
            pending_real: None,
            stats: ClientStats::default(),
            warmup_stats: None,
            trace: None,
        }
    }

    /// Client plus formatted in-memory store, warmed up.
    pub fn setup(params: Params, seed: u64, cipher: CipherKind) -> Result<(Self, MemoryStore)> {
        let mut client = ClientState::new(params, seed, cipher.build(seed));
        let mut store = client.format_store();
        client.warm_up(&mut store)?;
        Ok((client, store))
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    pub fn layout(&self) -> StoreLayout {
        StoreLayout::new(self.shape, self.params.z(), self.params.block_size(), self.cipher.envelope_len(self.params.block_size()))
    }

    pub fn stats(&self) -> &ClientStats {
        &self.stats
    }

    /// Counters accumulated during [`ClientState::warm_up`], if it ran.
    pub fn warmup_stats(&self) -> Option<&ClientStats> {
        self.warmup_stats.as_ref()
    }

    pub fn reset_stats(&mut self) {
        self.stats = ClientStats { max_stash: self.stash.len(), ..ClientStats::default() };
    }

    pub fn stash_len(&self) -> usize {
        self.stash.len()
    }

    pub fn stash_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.stash.keys().copied()
    }

    pub fn position(&self, addr: u64) -> Option<u64> {
        self.position.get(addr as usize).copied()
    }

    pub fn position_map(&self) -> &[u64] {
        &self.position
    }

    /// Sorted copy of the stash, for state comparisons.
    pub fn stash_snapshot(&self) -> Vec<(u64, Vec<u8>)> {
        let mut items: Vec<_> = self.stash.iter().map(|(k, v)| (*k, v.clone())).collect();
        items.sort_unstable_by_key(|(k, _)| *k);
        items
    }

    pub fn cipher(&self) -> &dyn Cipher {
        self.cipher.as_ref()
    }

    /// Start recording server-visible accesses.
    pub fn record_trace(&mut self) {
        self.trace.get_or_insert_with(AccessTrace::default);
    }

    pub fn take_trace(&mut self) -> AccessTrace {
        self.trace.take().unwrap_or_default()
    }

    /// A store holding only sealed dummies, laid out for this client.
    pub fn format_store(&mut self) -> MemoryStore {
        MemoryStore::formatted(self.layout(), self.cipher.as_mut())
    }

    /// Drain the initial stash with one fake access per block. Counters from
    /// this phase are kept apart from the experiment counters.
    pub fn warm_up<S: StorageBackend + ?Sized>(&mut self, store: &mut S) -> Result<()> {
        self.reset_stats();
        for _ in 0..self.params.n() {
            self.fake_access(store)?;
        }
        self.warmup_stats = Some(self.stats);
        self.reset_stats();
        Ok(())
    }

    fn check_addr(&self, addr: u64) -> Result<()> {
        if addr >= self.params.n() {
            return Err(Error::domain(format!("address {addr} out of range [0, {})", self.params.n())));
        }
        Ok(())
    }

    fn check_request(&self, req: &AccessRequest) -> Result<()> {
        self.check_addr(req.addr)?;
        match (req.op, &req.data) {
            (Op::Read, None) => Ok(()),
            (Op::Write, Some(d)) if d.len() == self.params.block_size() => Ok(()),
            (Op::Write, Some(d)) => Err(Error::domain(format!(
                "write payload is {} bytes, expected {}",
                d.len(),
                self.params.block_size()
            ))),
            (Op::Write, None) => Err(Error::domain("write request without data")),
            (Op::Read, Some(_)) => Err(Error::domain("read request with data")),
        }
    }

    /// Serve one real request, issuing whatever fake accesses the Poisson
    /// schedule puts before it. Returns the block's payload as it was before
    /// the access.
    pub fn access<S: StorageBackend + ?Sized>(&mut self, store: &mut S, req: AccessRequest) -> Result<Vec<u8>> {
        self.check_request(&req)?;
        if let Lambda::Rate(rate) = self.params.lambda() {
            loop {
                let budget = match self.pending_real {
                    Some(b) => b,
                    None => *self.pending_real.insert(poisson::sample(&mut self.rng, rate)),
                };
                if budget > 0 {
                    self.pending_real = Some(budget - 1);
                    break;
                }
                self.fake_access(store)?;
                self.pending_real = None;
            }
        }
        let out = self.normal_access(store, req.addr, req.data, false)?;
        self.stats.real_accesses += 1;
        Ok(out)
    }

    /// Serve a whole request stream; returns per-request payloads and the
    /// trace of every path touched (including fakes).
    pub fn run<S, I>(&mut self, store: &mut S, requests: I) -> Result<(Vec<Vec<u8>>, AccessTrace)>
    where
        S: StorageBackend + ?Sized,
        I: IntoIterator<Item = AccessRequest>,
    {
        let previous = self.trace.replace(AccessTrace::default());
        let outcome: Result<Vec<Vec<u8>>> = requests.into_iter().map(|req| self.access(store, req)).collect();
        let trace = std::mem::replace(&mut self.trace, previous).unwrap_or_default();
        if let Some(prev) = self.trace.as_mut() {
            prev.entries.extend_from_slice(&trace.entries);
        }
        Ok((outcome?, trace))
    }

    /// Access a uniformly random stash block, or a uniformly random block
    /// when the stash is empty.
    pub fn fake_access<S: StorageBackend + ?Sized>(&mut self, store: &mut S) -> Result<()> {
        let target = if self.stash.is_empty() {
            self.rng.gen_range(0..self.params.n())
        } else {
            let i = self.rng.gen_range(0..self.stash.len());
            *self.stash.get_index(i).expect("index in range").0
        };
        self.normal_access(store, target, None, true)?;
        self.stats.fake_accesses += 1;
        Ok(())
    }

    /// read, push_down on the old path, update_mapping, write. If the path
    /// write fails the client is rolled back to its state before the read,
    /// so it stays consistent with a server that never applied the write.
    fn normal_access<S: StorageBackend + ?Sized>(
        &mut self,
        store: &mut S,
        addr: u64,
        new_data: Option<Vec<u8>>,
        fake: bool,
    ) -> Result<Vec<u8>> {
        let previous = self.stash.get(&addr).cloned();
        let (x, fetched) = self.read_blocks(store, addr, fake)?;
        let payload = self.stash.get(&addr).cloned().expect("read_blocks located the block");
        let candidates: Vec<(u64, u64)> = self
            .stash
            .keys()
            .filter(|&&id| id != addr)
            .map(|&id| (id, self.position[id as usize]))
            .collect();
        let placement = push_down(&self.shape, self.params.z(), x, &candidates);
        let z = self.update_mapping(addr);
        if let Some(data) = new_data {
            *self.stash.get_mut(&addr).expect("present") = data;
        }
        if let Err(e) = self.write_back(store, addr, x, z, placement) {
            self.position[addr as usize] = x;
            for id in fetched {
                self.stash.swap_remove(&id);
            }
            if let Some(old) = previous {
                self.stash.insert(addr, old);
            }
            return Err(e);
        }
        Ok(payload)
    }

    /// Fetch `P(position[addr])` into the stash. Returns the old leaf and the
    /// ids that came from the path.
    fn read_blocks<S: StorageBackend + ?Sized>(&mut self, store: &mut S, addr: u64, fake: bool) -> Result<(u64, Vec<u64>)> {
        let x = self.position[addr as usize];
        let buckets = store.read_path(x)?;
        self.layout().check_path(&buckets)?;
        let mut fetched = Vec::new();
        for (level, bucket) in buckets.iter().enumerate() {
            for env in &bucket.envelopes {
                let block = self.cipher.open(env)?;
                let BlockKind::Real(id) = block.kind else { continue };
                let Some(&mapped) = self.position.get(id as usize) else {
                    return Err(Error::Invariant(format!("unknown block id {id} on path {x}")));
                };
                if (self.shape.common_level_unchecked(x, mapped) as usize) < level {
                    return Err(Error::Invariant(format!(
                        "block {id} mapped to leaf {mapped} found at level {level} of path {x}"
                    )));
                }
                if self.stash.contains_key(&id) || fetched.iter().any(|(f, _)| *f == id) {
                    return Err(Error::Invariant(format!("block {id} held twice")));
                }
                fetched.push((id, block.payload));
            }
        }
        if !self.stash.contains_key(&addr) && !fetched.iter().any(|(f, _)| *f == addr) {
            return Err(Error::Invariant(format!("block {addr} neither on path {x} nor in the stash")));
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.entries.push(TraceEntry { leaf: x, fake });
        }
        self.stats.blocks_transferred += self.params.path_blocks() as u64;
        let ids = fetched.iter().map(|(id, _)| *id).collect();
        self.stash.extend(fetched);
        Ok((x, ids))
    }

    /// Remap `addr` and return its new leaf.
    pub fn update_mapping(&mut self, addr: u64) -> u64 {
        let x = self.position[addr as usize];
        let z = remap(&mut self.rng, self.params.n(), self.params.p(), x);
        self.position[addr as usize] = z;
        z
    }

    /// Place `addr` in the deepest free bucket at or above the lowest common
    /// bucket of `P(x)` and `P(z)`, then seal and write the whole path back.
    /// Blocks leave the stash only once the write succeeded.
    fn write_back<S: StorageBackend + ?Sized>(
        &mut self,
        store: &mut S,
        addr: u64,
        x: u64,
        z: u64,
        mut placement: Placement,
    ) -> Result<()> {
        let deepest = self.shape.common_level_unchecked(x, z);
        placement.place(addr, deepest, self.params.z());
        let dummy = Block::dummy(self.params.block_size());
        let mut buckets = Vec::with_capacity(placement.levels.len());
        for ids in &placement.levels {
            let mut envelopes = Vec::with_capacity(self.params.z());
            for id in ids {
                let block = Block::real(*id, self.stash[id].clone());
                envelopes.push(self.cipher.seal(&block));
            }
            while envelopes.len() < self.params.z() {
                envelopes.push(self.cipher.seal(&dummy));
            }
            buckets.push(Bucket { envelopes });
        }
        store.write_path(x, buckets)?;
        for id in placement.placed() {
            self.stash.swap_remove(&id);
        }
        self.stats.blocks_transferred += self.params.path_blocks() as u64;
        self.stats.max_stash = self.stats.max_stash.max(self.stash.len());
        Ok(())
    }

    /// Check the main invariant and block conservation against a full copy
    /// of the tree.
    pub fn audit_buckets(&self, buckets: &[Bucket]) -> AuditReport {
        let mut report = AuditReport::default();
        let n = self.params.n();
        let mut seen = vec![false; n as usize];
        for id in self.stash.keys() {
            seen[*id as usize] = true;
        }
        report.blocks_in_stash = self.stash.len() as u64;
        if buckets.len() as u64 != self.shape.total_buckets {
            report.violations.push(format!("tree has {} buckets, expected {}", buckets.len(), self.shape.total_buckets));
            return report;
        }
        for (index, bucket) in buckets.iter().enumerate() {
            let index = index as u64;
            let level = if index >= self.shape.internal_node_count {
                self.shape.k()
            } else {
                63 - (index + 1).leading_zeros()
            };
            let under = self.shape.leaves_under(crate::tree::BucketId { index, level });
            if bucket.envelopes.len() != self.params.z() {
                report.violations.push(format!("bucket {index} has {} slots", bucket.envelopes.len()));
            }
            for env in &bucket.envelopes {
                let block = match self.cipher.open(env) {
                    Ok(b) => b,
                    Err(e) => {
                        report.violations.push(format!("bucket {index}: {e}"));
                        continue;
                    }
                };
                let BlockKind::Real(id) = block.kind else { continue };
                if id >= n {
                    report.violations.push(format!("bucket {index}: unknown block {id}"));
                    continue;
                }
                report.blocks_in_tree += 1;
                if std::mem::replace(&mut seen[id as usize], true) {
                    report.violations.push(format!("block {id} duplicated (bucket {index})"));
                }
                let leaf = self.position[id as usize];
                if !under.contains(&leaf) {
                    report.violations.push(format!("block {id} in bucket {index} is off the path of leaf {leaf}"));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            report.violations.push(format!("block {missing} is lost"));
        }
        report
    }

    pub fn audit(&self, store: &MemoryStore) -> Result<AuditReport> {
        Ok(self.audit_buckets(store.buckets()?))
    }
}

#[cfg(test)]
mod tests;
