//! Remote bucket storage over a framed TCP protocol, with a client-side
//! token-bucket throttle and a latency benchmark.

pub mod bench;
mod remote;
mod server;
pub mod throttle;
pub mod wire;

pub use bench::{bench_latency, BenchConfig, BenchRow};
pub use remote::RemoteStore;
pub use server::{handle_session, Server};
pub use throttle::{ThrottleConfig, ThrottledStream, TokenBucket};
pub use wire::{ErrorCode, Message, MsgType, HEADER_LEN};
