//! Root ORAM: a tunable tree ORAM whose remapping is sticky rather than
//! uniform, trading access-pattern privacy for bandwidth and local storage.
//!
//! The crate is split along the protocol boundary:
//!
//! * [`params`] and [`tree`] describe the parameter space and the server tree.
//! * [`protocol`] is the trusted client (position map, stash, fake accesses).
//! * [`storage`] holds the untrusted bucket store and block envelopes.
//! * [`net`] puts a store behind a framed TCP protocol with throttling.
//! * [`privacy`] computes (ε, δ), bandwidth and budget accounting.
//! * [`oracle`] evaluates the sequence probability model exactly.
//! * [`metrics`] computes entropy, KL divergence and k-anonymity.
//! * [`sim`] runs the stash and bandwidth experiments.

pub mod error;
pub mod metrics;
pub mod net;
pub mod oracle;
pub mod params;
pub mod privacy;
pub mod protocol;
pub mod sim;
pub mod storage;
pub mod tree;

pub use error::{Error, Result};
pub use params::{Lambda, Params, ParamsBuilder};
pub use protocol::{AccessRequest, AccessTrace, ClientState, Op};
pub use storage::{CipherKind, MemoryStore, StorageBackend};
pub use tree::{derive_tree_shape, BucketId, TreeShape};
