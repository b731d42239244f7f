//! Protocol parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported tree exponent. Leaf ids and bucket indices must fit in
/// a `u64` and position maps in memory.
pub const MAX_LEVELS: u32 = 40;

/// Fake-access rate: on average `rate` real accesses are served per fake.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Lambda {
    Rate(f64),
    /// Fake accesses disabled.
    Infinite,
}

impl Lambda {
    pub fn new(rate: f64) -> Result<Self> {
        if rate.is_infinite() && rate > 0.0 {
            return Ok(Lambda::Infinite);
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::domain(format!("lambda must be positive, got {rate}")));
        }
        Ok(Lambda::Rate(rate))
    }

    /// Expected fake accesses per real access, `1/lambda`.
    pub fn fake_fraction(self) -> f64 {
        match self {
            Lambda::Rate(r) => 1.0 / r,
            Lambda::Infinite => 0.0,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Lambda::Infinite)
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Rate(r) => write!(f, "{r}"),
            Lambda::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Lambda {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" | "∞" => Ok(Lambda::Infinite),
            other => {
                let rate: f64 = other
                    .parse()
                    .map_err(|_| Error::domain(format!("invalid lambda {s:?}")))?;
                Lambda::new(rate)
            }
        }
    }
}

/// All protocol parameters. Construct through [`Params::new`] or
/// [`ParamsBuilder`] so the invariants hold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    levels: u32,
    k: u32,
    p: f64,
    z: usize,
    block_size: usize,
    lambda: Lambda,
}

impl Params {
    /// `levels` is the tree exponent (`N = 2^levels`), `k` the depth of the
    /// binary part of the tree, `p` the remap parameter, `z` the bucket size
    /// and `block_size` the payload size in bytes.
    pub fn new(levels: u32, k: u32, p: f64, z: usize, block_size: usize, lambda: Lambda) -> Result<Self> {
        if levels == 0 || levels > MAX_LEVELS {
            return Err(Error::domain(format!("L must be in [1, {MAX_LEVELS}], got {levels}")));
        }
        if k == 0 || k > levels {
            return Err(Error::domain(format!("k must be in [1, L={levels}], got {k}")));
        }
        if z == 0 {
            return Err(Error::domain("Z must be at least 1"));
        }
        if block_size == 0 {
            return Err(Error::domain("B must be at least 1"));
        }
        check_p(1u64 << levels, p)?;
        if let Lambda::Rate(r) = lambda {
            Lambda::new(r)?;
        }
        Ok(Params { levels, k, p, z, block_size, lambda })
    }

    /// The Path ORAM point: complete tree, uniform remapping, no fakes.
    pub fn path_oram(levels: u32, z: usize, block_size: usize) -> Result<Self> {
        Self::new(levels, levels, uniform_p(levels), z, block_size, Lambda::Infinite)
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Number of real blocks and of leaves, `2^L`.
    pub fn n(&self) -> u64 {
        1u64 << self.levels
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn z(&self) -> usize {
        self.z
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn lambda(&self) -> Lambda {
        self.lambda
    }

    /// Probability of keeping the same leaf on remap.
    pub fn p1(&self) -> f64 {
        1.0 - self.p
    }

    /// Probability of moving to one specific other leaf.
    pub fn p2(&self) -> f64 {
        self.p / (self.n() - 1) as f64
    }

    /// Blocks on one path, `Z(k+1)`.
    pub fn path_blocks(&self) -> usize {
        self.z * (self.k as usize + 1)
    }

    pub fn with_lambda(mut self, lambda: Lambda) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_block_size(mut self, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::domain("B must be at least 1"));
        }
        self.block_size = block_size;
        Ok(self)
    }
}

impl fmt::Display for Params {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L={} k={} p={} Z={} B={} lambda={}",
            self.levels, self.k, self.p, self.z, self.block_size, self.lambda
        )
    }
}

/// `p = 1 - 1/N`, the value at which remapping is uniform.
pub fn uniform_p(levels: u32) -> f64 {
    1.0 - 1.0 / (1u64 << levels) as f64
}

/// `p = 1 - 2^-i`, the family used by the parameter sweeps.
pub fn p_from_exponent(i: u32) -> f64 {
    1.0 - 0.5f64.powi(i as i32)
}

pub(crate) fn check_p(n: u64, p: f64) -> Result<()> {
    let max = 1.0 - 1.0 / n as f64;
    // one ulp of slack for values computed as 1 - 1/N by other routes
    if !(p > 0.0 && p <= max + f64::EPSILON) {
        return Err(Error::domain(format!("p must be in (0, 1 - 1/N] = (0, {max}], got {p}")));
    }
    Ok(())
}

/// Builder with Path-ORAM-like defaults (`Z = 4`, `B = 64`, no fakes, uniform `p`).
#[derive(Clone, Debug)]
pub struct ParamsBuilder {
    levels: u32,
    k: Option<u32>,
    p: Option<f64>,
    z: usize,
    block_size: usize,
    lambda: Lambda,
}

impl ParamsBuilder {
    pub fn new(levels: u32) -> Self {
        ParamsBuilder { levels, k: None, p: None, z: 4, block_size: 64, lambda: Lambda::Infinite }
    }

    pub fn k(mut self, k: u32) -> Self {
        self.k = Some(k);
        self
    }

    pub fn p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }

    pub fn z(mut self, z: usize) -> Self {
        self.z = z;
        self
    }

    pub fn block_size(mut self, b: usize) -> Self {
        self.block_size = b;
        self
    }

    pub fn lambda(mut self, lambda: Lambda) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn build(self) -> Result<Params> {
        if self.levels == 0 || self.levels > MAX_LEVELS {
            return Err(Error::domain(format!("L must be in [1, {MAX_LEVELS}], got {}", self.levels)));
        }
        Params::new(
            self.levels,
            self.k.unwrap_or(self.levels),
            self.p.unwrap_or_else(|| uniform_p(self.levels)),
            self.z,
            self.block_size,
            self.lambda,
        )
    }
}
