//! The sequence probability model as an executable oracle.
//!
//! Against an adversary who sees which accesses are real (no benefit from
//! fakes), the probability that a real sequence produces an observed leaf
//! sequence is a product of per-access factors:
//!
//! * first touch of an element: `1/N`;
//! * later touches: `p1` if the observed leaf repeats the element's previous
//!   observed leaf, else `p2`;
//! * zero as soon as more than `capacity = Z(k+1) + C` elements are mapped to
//!   one leaf.
//!
//! Everything is generic over [`Probability`] so the neighbour-ratio bound
//! can be checked in exact rational arithmetic.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{Lambda, Params};
use crate::protocol::{AccessRequest, ClientState};
use crate::storage::CipherKind;

pub trait Probability:
    Clone
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + fmt::Display
    + fmt::Debug
    + Send
    + Sync
{
    fn ratio(num: u64, den: u64) -> Self;
    fn to_f64(&self) -> f64;
}

impl Probability for BigRational {
    fn ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl Probability for f64 {
    fn ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

/// Parse `"a/b"`, an integer, or a finite decimal such as `"0.375"` into an
/// exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let text = text.trim();
    let bad = || Error::domain(format!("not a rational number: {text:?}"));
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(num, den));
    }
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    if frac.chars().any(|c| !c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = digits.parse().map_err(|_| bad())?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    Ok(BigRational::new(num, den))
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelParams<T> {
    pub n: u64,
    pub p1: T,
    pub p2: T,
    /// Most elements that may be mapped to one leaf at once.
    pub capacity: u64,
}

impl<T: Probability> ModelParams<T> {
    fn build(n: u64, p: T, capacity: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("N must be at least 2"));
        }
        if capacity == 0 {
            return Err(Error::domain("capacity must be at least 1"));
        }
        let max = T::one() - T::ratio(1, n);
        if !(p > T::zero() && p <= max) {
            return Err(Error::domain(format!("p = {p} outside (0, 1 - 1/N]")));
        }
        let p1 = T::one() - p.clone();
        let p2 = p / T::ratio(n - 1, 1);
        Ok(ModelParams { n, p1, p2, capacity })
    }

    pub fn is_uniform(&self) -> bool {
        self.p1 == self.p2
    }

    /// Probability of observing leaf `z` for an element last seen at `x`
    /// (`None` = never accessed).
    pub fn transition(&self, z: u64, x: Option<u64>) -> T {
        match x {
            None => T::ratio(1, self.n),
            Some(x) if x == z => self.p1.clone(),
            Some(_) => self.p2.clone(),
        }
    }

    /// The extended Kronecker delta, with `None` standing for "never
    /// accessed". On that branch its value satisfies
    /// `p2 + (p1 - p2)·δ = 1/N`; undefined when `p1 = p2`.
    pub fn modified_kronecker(&self, z: u64, x: Option<u64>) -> Result<T> {
        match x {
            Some(x) if x == z => Ok(T::one()),
            Some(_) => Ok(T::zero()),
            None if self.is_uniform() => {
                Err(Error::domain("first-touch delta is undefined for uniform remapping; the factor is 1/N"))
            }
            None => Ok((T::ratio(1, self.n) - self.p2.clone()) / (self.p1.clone() - self.p2.clone())),
        }
    }

    /// `p2 + (p1 - p2)·δ(z, x)`, falling back to `1/N` on first touch when
    /// remapping is uniform.
    pub fn kronecker_transition(&self, z: u64, x: Option<u64>) -> T {
        match self.modified_kronecker(z, x) {
            Ok(delta) => self.p2.clone() + (self.p1.clone() - self.p2.clone()) * delta,
            Err(_) => T::ratio(1, self.n),
        }
    }

    /// `(p1/p2)^2`, the worst-case neighbour ratio.
    pub fn ratio_bound(&self) -> T {
        let r = self.p1.clone() / self.p2.clone();
        r.clone() * r
    }
}

impl ModelParams<BigRational> {
    pub fn exact(n: u64, p: BigRational, capacity: u64) -> Result<Self> {
        Self::build(n, p, capacity)
    }
}

impl ModelParams<f64> {
    pub fn approx(n: u64, p: f64, capacity: u64) -> Result<Self> {
        Self::build(n, p, capacity)
    }

    /// Model of a protocol instance whose stash never exceeds `stash_bound`.
    pub fn from_params(params: &Params, stash_bound: u64) -> Result<Self> {
        let capacity = crate::privacy::CapacityModel::new(stash_bound, params.z(), params.k()).capacity;
        Self::build(params.n(), params.p(), capacity)
    }
}

/// Probability that `real` yields `observed`.
pub fn seq_probability<T: Probability>(model: &ModelParams<T>, real: &[u64], observed: &[u64]) -> Result<T> {
    if real.len() != observed.len() {
        return Err(Error::domain(format!(
            "real sequence has {} accesses, observed has {}",
            real.len(),
            observed.len()
        )));
    }
    if let Some(bad) = observed.iter().find(|&&l| l >= model.n) {
        return Err(Error::domain(format!("observed leaf {bad} out of range")));
    }
    Ok(probability_unchecked(model, real, observed))
}

fn probability_unchecked<T: Probability>(model: &ModelParams<T>, real: &[u64], observed: &[u64]) -> T {
    let mut last: HashMap<u64, u64> = HashMap::with_capacity(real.len());
    let mut load: HashMap<u64, u64> = HashMap::with_capacity(real.len());
    let mut prob = T::one();
    for (&element, &leaf) in real.iter().zip(observed) {
        let previous = last.insert(element, leaf);
        prob = prob * model.transition(leaf, previous);
        if let Some(prev) = previous {
            *load.get_mut(&prev).expect("tracked") -= 1;
        }
        let count = load.entry(leaf).or_insert(0);
        *count += 1;
        if *count > model.capacity {
            return T::zero();
        }
    }
    prob
}

/// Which form of the worst case a witness takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WitnessPattern {
    /// `l_pa = l = l_na`, `l_pb = l_nb ≠ l`.
    Exact,
    /// As `Exact` but `a` was never touched before: the first-touch factors
    /// cancel, giving the same ratio.
    FirstTouch,
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness<T> {
    pub r1: Vec<u64>,
    pub r2: Vec<u64>,
    pub observed: Vec<u64>,
    /// Index of the access that differs.
    pub position: usize,
    pub prob1: T,
    pub prob2: T,
    pub pattern: WitnessPattern,
}

/// Leaves surrounding the changed access: where `a` (in `r1`) and `b` (in
/// `r2`) were observed just before and just after it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Neighbourhood {
    pub l: u64,
    pub l_pa: Option<u64>,
    pub l_na: Option<u64>,
    pub l_pb: Option<u64>,
    pub l_nb: Option<u64>,
}

impl Neighbourhood {
    pub fn of(r1: &[u64], r2: &[u64], observed: &[u64], position: usize) -> Self {
        let (a, b) = (r1[position], r2[position]);
        let prev = |seq: &[u64], e: u64| seq[..position].iter().rposition(|&x| x == e).map(|j| observed[j]);
        let next = |seq: &[u64], e: u64| {
            seq[position + 1..].iter().position(|&x| x == e).map(|j| observed[position + 1 + j])
        };
        Neighbourhood {
            l: observed[position],
            l_pa: prev(r1, a),
            l_na: next(r1, a),
            l_pb: prev(r2, b),
            l_nb: next(r2, b),
        }
    }

    pub fn pattern(&self) -> WitnessPattern {
        let b_side = self.l_pb.is_some() && self.l_pb == self.l_nb && self.l_pb != Some(self.l);
        if !(b_side && self.l_na == Some(self.l)) {
            return WitnessPattern::Other;
        }
        match self.l_pa {
            Some(l) if l == self.l => WitnessPattern::Exact,
            None => WitnessPattern::FirstTouch,
            Some(_) => WitnessPattern::Other,
        }
    }

    /// Closed-form ratio `P(r1→o)/P(r2→o)` from the six factors that can
    /// differ, ignoring the capacity check. A missing next access
    /// contributes a factor of one.
    pub fn closed_form_ratio<T: Probability>(&self, model: &ModelParams<T>) -> T {
        let next = |n: Option<u64>, prev: Option<u64>| match n {
            Some(n) => model.kronecker_transition(n, prev),
            None => T::one(),
        };
        let numerator = model.kronecker_transition(self.l, self.l_pa)
            * next(self.l_na, Some(self.l))
            * next(self.l_nb, self.l_pb);
        let denominator = next(self.l_na, self.l_pa)
            * model.kronecker_transition(self.l, self.l_pb)
            * next(self.l_nb, Some(self.l));
        numerator / denominator
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MaxRatioReport<T> {
    pub max_ratio: T,
    pub bound: T,
    /// Lexicographically first pair attaining the maximum.
    pub witness: Option<Witness<T>>,
    /// First maximising pair with the worst-case pattern, if any.
    pub pattern_witness: Option<Witness<T>>,
    pub pairs_compared: u64,
}

impl<T: Probability> MaxRatioReport<T> {
    pub fn within_bound(&self) -> bool {
        self.max_ratio <= self.bound
    }

    pub fn attains_bound(&self) -> bool {
        self.max_ratio == self.bound
    }
}

/// All sequences of `len` symbols drawn from `0..alphabet`, lexicographic.
pub fn all_sequences(alphabet: u64, len: usize) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::with_capacity(len)];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..alphabet).map(move |s| {
                    let mut next = prefix.clone();
                    next.push(s);
                    next
                })
            })
            .collect();
    }
    out
}

struct Best<T> {
    ratio: T,
    witness: Option<Witness<T>>,
    pattern_witness: Option<Witness<T>>,
    pairs: u64,
}

impl<T: Probability> Best<T> {
    fn new() -> Self {
        Best { ratio: T::zero(), witness: None, pattern_witness: None, pairs: 0 }
    }

    /// Merge a later (in enumeration order) partial result into this one.
    fn merge(mut self, later: Self) -> Self {
        self.pairs += later.pairs;
        if later.witness.is_none() {
            return self;
        }
        if self.witness.is_none() || later.ratio > self.ratio {
            return Best { pairs: self.pairs, ..later };
        }
        if later.ratio == self.ratio && self.pattern_witness.is_none() {
            self.pattern_witness = later.pattern_witness;
        }
        self
    }
}

/// Enumerate every pair of real sequences over `elements` symbols that
/// differ in exactly one of `m` accesses, against every observed sequence,
/// and return the largest probability ratio among pairs where both
/// probabilities are positive.
pub fn max_ratio_bruteforce<T: Probability>(model: &ModelParams<T>, m: usize, elements: u64) -> Result<MaxRatioReport<T>> {
    if model.n > 4 || m > 4 || elements > 4 {
        return Err(Error::domain("enumeration limited to N <= 4, M <= 4 and at most 4 elements"));
    }
    if m == 0 || elements < 2 {
        return Err(Error::domain("need at least one access and two elements"));
    }
    let reals = all_sequences(elements, m);
    let index_of = |seq: &[u64]| seq.iter().fold(0usize, |acc, &s| acc * elements as usize + s as usize);
    let best = all_sequences(model.n, m)
        .into_par_iter()
        .map(|observed| {
            let probs: Vec<T> = reals.iter().map(|r| probability_unchecked(model, r, &observed)).collect();
            let mut best = Best::new();
            for (i1, r1) in reals.iter().enumerate() {
                if probs[i1].is_zero() {
                    continue;
                }
                for position in 0..m {
                    for b in (0..elements).filter(|&b| b != r1[position]) {
                        let mut r2 = r1.clone();
                        r2[position] = b;
                        let i2 = index_of(&r2);
                        if probs[i2].is_zero() {
                            continue;
                        }
                        best.pairs += 1;
                        let ratio = probs[i1].clone() / probs[i2].clone();
                        let better = best.witness.is_none() || ratio > best.ratio;
                        let tie = !better && ratio == best.ratio;
                        if !(better || (tie && best.pattern_witness.is_none())) {
                            continue;
                        }
                        let pattern = Neighbourhood::of(r1, &r2, &observed, position).pattern();
                        let witness = Witness {
                            r1: r1.clone(),
                            r2,
                            observed: observed.clone(),
                            position,
                            prob1: probs[i1].clone(),
                            prob2: probs[i2].clone(),
                            pattern,
                        };
                        let matches = pattern != WitnessPattern::Other;
                        if better {
                            best.ratio = ratio;
                            best.pattern_witness = matches.then(|| witness.clone());
                            best.witness = Some(witness);
                        } else if matches {
                            best.pattern_witness = Some(witness);
                        }
                    }
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Best::new(), Best::merge);
    Ok(MaxRatioReport {
        max_ratio: best.ratio,
        bound: model.ratio_bound(),
        witness: best.witness,
        pattern_witness: best.pattern_witness,
        pairs_compared: best.pairs,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaWitness<T> {
    pub r1: Vec<u64>,
    pub r2: Vec<u64>,
    pub observed: Vec<u64>,
    pub prob1: T,
    pub prob2: T,
}

/// The pair showing why δ is needed: `M_k` distinct elements all observed at
/// one leaf is impossible, while repeating the first element instead is not.
pub fn delta_witness<T: Probability>(model: &ModelParams<T>, leaf: u64) -> Result<DeltaWitness<T>> {
    if leaf >= model.n {
        return Err(Error::domain(format!("leaf {leaf} out of range")));
    }
    let m_k = model.capacity + 1;
    let r1: Vec<u64> = (1..=m_k).collect();
    let mut r2 = r1.clone();
    *r2.last_mut().expect("m_k >= 2") = 1;
    let observed = vec![leaf; m_k as usize];
    let prob1 = seq_probability(model, &r1, &observed)?;
    let prob2 = seq_probability(model, &r2, &observed)?;
    Ok(DeltaWitness { r1, r2, observed, prob1, prob2 })
}

/// The full channel real sequence → observed sequence with its exact
/// probability, over `elements` symbols and `m` accesses.
pub fn channel<T: Probability>(model: &ModelParams<T>, m: usize, elements: u64) -> Vec<(Vec<u64>, Vec<u64>, T)> {
    let observed = all_sequences(model.n, m);
    all_sequences(elements, m)
        .into_iter()
        .flat_map(|real| {
            observed.iter().map(move |o| {
                let p = probability_unchecked(model, &real, o);
                (real.clone(), o.clone(), p)
            })
        })
        .collect()
}

/// Measured remap behaviour of the running protocol against the model.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalReport {
    pub repeat_accesses: u64,
    pub same_leaf_frequency: f64,
    pub expected_same_leaf: f64,
    /// Largest deviation of any specific other leaf's frequency from `p2`.
    pub max_other_leaf_deviation: f64,
    pub first_touch_counts: Vec<u64>,
    /// Pearson statistic of the first-touch counts against uniform.
    pub first_touch_chi_square: f64,
    /// Largest absolute deviation among all compared frequencies.
    pub max_abs_deviation: f64,
}

/// Drive the real protocol (no fakes) and compare its observable leaf
/// transitions with `p1`, `p2` and the uniform first touch.
pub fn empirical_vs_model(params: &Params, seed: u64, trials: u64) -> Result<EmpiricalReport> {
    if params.levels() > 8 {
        return Err(Error::domain("empirical comparison is meant for small trees (L <= 8)"));
    }
    let params = params.with_lambda(Lambda::Infinite);
    let n = params.n();
    let (mut client, mut store) = ClientState::setup(params, seed, CipherKind::Null)?;
    client.record_trace();
    for _ in 0..=trials {
        client.access(&mut store, AccessRequest::read(0))?;
    }
    let leaves = client.take_trace().observed();
    let mut moved_to = vec![0u64; n as usize];
    let mut same = 0u64;
    for pair in leaves.windows(2) {
        if pair[0] == pair[1] {
            same += 1;
        } else {
            // index the destination relative to the source so every
            // "other leaf" slot is comparable
            moved_to[((pair[1] + n - pair[0]) % n) as usize] += 1;
        }
    }
    let same_leaf_frequency = same as f64 / trials as f64;
    let max_other_leaf_deviation = moved_to[1..]
        .iter()
        .map(|&c| (c as f64 / trials as f64 - params.p2()).abs())
        .fold(0.0, f64::max);

    let first_trials = trials.clamp(1, 4000);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut first_touch_counts = vec![0u64; n as usize];
    for _ in 0..first_trials {
        let mut fresh = ClientState::new(params, rng.gen(), CipherKind::Null.build(0));
        let mut store = fresh.format_store();
        fresh.record_trace();
        fresh.access(&mut store, AccessRequest::read(0))?;
        first_touch_counts[fresh.take_trace().entries[0].leaf as usize] += 1;
    }
    let expected = first_trials as f64 / n as f64;
    let first_touch_chi_square = first_touch_counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let first_touch_deviation = first_touch_counts
        .iter()
        .map(|&c| (c as f64 / first_trials as f64 - 1.0 / n as f64).abs())
        .fold(0.0, f64::max);
    let expected_same_leaf = params.p1();
    Ok(EmpiricalReport {
        repeat_accesses: trials,
        same_leaf_frequency,
        expected_same_leaf,
        max_other_leaf_deviation,
        first_touch_counts,
        first_touch_chi_square,
        max_abs_deviation: (same_leaf_frequency - expected_same_leaf)
            .abs()
            .max(max_other_leaf_deviation)
            .max(first_touch_deviation),
    })
}

/// Exact rational to a short display string, e.g. `9` or `28/9`.
pub fn format_rational(value: &BigRational) -> String {
    if value.is_integer() {
        value.to_integer().to_string()
    } else if value.is_negative() {
        format!("-{}", format_rational(&-value.clone()))
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}
