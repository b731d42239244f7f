//! Token bucket bandwidth limiter.

use std::io::{self, Read, Write};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::net::wire::HEADER_LEN;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrottleConfig {
    pub rate_bps: f64,
    pub burst_bytes: usize,
}

impl ThrottleConfig {
    pub fn new(rate_bps: f64, burst_bytes: usize) -> Result<Self> {
        if !(rate_bps.is_finite() && rate_bps > 0.0) {
            return Err(Error::domain(format!("rate must be positive, got {rate_bps}")));
        }
        if burst_bytes < HEADER_LEN {
            return Err(Error::domain(format!("burst must be at least {HEADER_LEN} bytes")));
        }
        Ok(ThrottleConfig { rate_bps, burst_bytes })
    }

    pub fn bytes_per_second(&self) -> f64 {
        self.rate_bps / 8.0
    }
}

/// Bytes are released only when the bucket holds enough tokens for them, so
/// any window of length `t` carries at most `burst + t·rate/8` bytes.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    config: ThrottleConfig,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    pub fn new(config: ThrottleConfig, now: Instant) -> Self {
        TokenBucket { config, tokens: config.burst_bytes as f64, last: now }
    }

    pub fn config(&self) -> ThrottleConfig {
        self.config
    }

    fn refill(&mut self, now: Instant) {
        if now > self.last {
            let earned = (now - self.last).as_secs_f64() * self.config.bytes_per_second();
            self.tokens = (self.tokens + earned).min(self.config.burst_bytes as f64);
            self.last = now;
        }
    }

    /// Reserve `bytes` (at most one burst) and return how long to wait
    /// before they may go out.
    pub fn reserve(&mut self, bytes: usize, now: Instant) -> Duration {
        assert!(bytes <= self.config.burst_bytes, "reservation larger than the burst");
        self.refill(now);
        let bytes = bytes as f64;
        if self.tokens >= bytes {
            self.tokens -= bytes;
            return Duration::ZERO;
        }
        let wait = Duration::from_secs_f64((bytes - self.tokens) / self.config.bytes_per_second());
        self.tokens = 0.0;
        self.last = now.max(self.last) + wait;
        wait
    }
}

/// Stream wrapper throttling each direction with its own bucket.
#[derive(Debug)]
pub struct ThrottledStream<S> {
    inner: S,
    read_bucket: TokenBucket,
    write_bucket: TokenBucket,
}

impl<S> ThrottledStream<S> {
    pub fn new(inner: S, config: ThrottleConfig) -> Self {
        let now = Instant::now();
        ThrottledStream { inner, read_bucket: TokenBucket::new(config, now), write_bucket: TokenBucket::new(config, now) }
    }

    pub fn get_ref(&self) -> &S {
        &self.inner
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

fn pause(d: Duration) {
    if !d.is_zero() {
        std::thread::sleep(d);
    }
}

impl<S: Read> Read for ThrottledStream<S> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let limit = buf.len().min(self.read_bucket.config.burst_bytes);
        let n = self.inner.read(&mut buf[..limit])?;
        pause(self.read_bucket.reserve(n, Instant::now()));
        Ok(n)
    }
}

impl<S: Write> Write for ThrottledStream<S> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = buf.len().min(self.write_bucket.config.burst_bytes);
        pause(self.write_bucket.reserve(n, Instant::now()));
        self.inner.write_all(&buf[..n])?;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}
