//! Statistical privacy metrics over finite distributions and channels.
//!
//! All logarithms are natural; use [`to_bits`] to convert.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;
use std::io::Read;

use num_traits::Zero;

use crate::error::{Error, Result};

/// Allowed slack on total mass.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// A finite distribution over labelled outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    support: Vec<String>,
    mass: Vec<f64>,
}

impl Distribution {
    pub fn new(support: Vec<String>, mass: Vec<f64>) -> Result<Self> {
        if support.len() != mass.len() {
            return Err(Error::domain("support and mass differ in length"));
        }
        if support.is_empty() {
            return Err(Error::domain("empty distribution"));
        }
        let mut seen = HashSet::new();
        for label in &support {
            if !seen.insert(label.as_str()) {
                return Err(Error::domain(format!("duplicate outcome {label:?}")));
            }
        }
        if let Some(bad) = mass.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::domain(format!("invalid mass {bad}")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::domain(format!("mass sums to {total}, not 1")));
        }
        Ok(Distribution { support, mass })
    }

    /// Outcomes labelled `0..mass.len()`.
    pub fn from_masses(mass: Vec<f64>) -> Result<Self> {
        let support = (0..mass.len()).map(|i| i.to_string()).collect();
        Self::new(support, mass)
    }

    pub fn uniform(size: usize) -> Result<Self> {
        Self::from_masses(vec![1.0 / size as f64; size])
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn get(&self, outcome: &str) -> f64 {
        self.support.iter().position(|s| s == outcome).map_or(0.0, |i| self.mass[i])
    }

    /// Reads `outcome,mass` rows. A header row is optional.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut support = Vec::new();
        let mut mass = Vec::new();
        for (i, record) in csv_records(input)?.into_iter().enumerate() {
            if record.len() != 2 {
                return Err(Error::domain(format!("row {}: expected outcome,mass", i + 1)));
            }
            match record[1].trim().parse::<f64>() {
                Ok(m) => {
                    support.push(record[0].trim().to_string());
                    mass.push(m);
                }
                Err(_) if i == 0 => {}
                Err(_) => return Err(Error::domain(format!("row {}: bad mass {:?}", i + 1, &record[1]))),
            }
        }
        Self::new(support, mass)
    }
}

/// KL divergence D(P‖Q) in nats. Outcomes are matched by label; an outcome
/// missing from Q has zero mass there.
///
/// Returns `f64::INFINITY` when P puts mass where Q has none.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> f64 {
    let q_mass: HashMap<&str, f64> = q.support.iter().map(String::as_str).zip(q.mass.iter().copied()).collect();
    let mut total = 0.0;
    for (label, &pi) in p.support.iter().zip(&p.mass) {
        if pi == 0.0 {
            continue;
        }
        let qi = q_mass.get(label.as_str()).copied().unwrap_or(0.0);
        if qi == 0.0 {
            return f64::INFINITY;
        }
        total += pi * (pi / qi).ln();
    }
    total.max(0.0)
}

pub fn shannon_entropy(p: &Distribution) -> f64 {
    -p.mass.iter().filter(|&&m| m > 0.0).map(|&m| m * m.ln()).sum::<f64>()
}

pub fn min_entropy(p: &Distribution) -> f64 {
    let max = p.mass.iter().copied().fold(0.0, f64::max);
    -max.ln()
}

pub fn to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// Smallest non-empty preimage size over all outputs of a channel given as
/// `(input, output, probability)` triples.
pub fn k_anonymity<I, O, P, C>(channel: C) -> Result<usize>
where
    I: Eq + Hash,
    O: Eq + Hash,
    P: Zero + PartialOrd,
    C: IntoIterator<Item = (I, O, P)>,
{
    let mut preimages: HashMap<O, HashSet<I>> = HashMap::new();
    let mut any = false;
    for (input, output, prob) in channel {
        any = true;
        if prob > P::zero() {
            preimages.entry(output).or_default().insert(input);
        }
    }
    if !any {
        return Err(Error::domain("empty channel"));
    }
    preimages
        .values()
        .map(HashSet::len)
        .min()
        .ok_or_else(|| Error::domain("channel has no output with positive probability"))
}

/// Reads `input,output,mass` rows. A header row is optional.
pub fn channel_from_csv<R: Read>(input: R) -> Result<Vec<(String, String, f64)>> {
    let mut rows = Vec::new();
    for (i, record) in csv_records(input)?.into_iter().enumerate() {
        if record.len() != 3 {
            return Err(Error::domain(format!("row {}: expected input,output,mass", i + 1)));
        }
        match record[2].trim().parse::<f64>() {
            Ok(m) if m.is_finite() && m >= 0.0 => {
                rows.push((record[0].trim().to_string(), record[1].trim().to_string(), m))
            }
            Err(_) if i == 0 => {}
            _ => return Err(Error::domain(format!("row {}: bad mass {:?}", i + 1, &record[2]))),
        }
    }
    Ok(rows)
}

fn csv_records<R: Read>(input: R) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut out = Vec::new();
    for record in reader.records() {
        out.push(record?);
    }
    Ok(out)
}
