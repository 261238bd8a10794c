//! The cognitive space: an `n`-cube of normalized property intensities.
//!
//! Anchors are the `2^n` vertices. Their canonical order writes `k - 1` in
//! binary with dimension 1 as the least significant bit, so for `n = 2` the
//! order is `(0,0), (1,0), (0,1), (1,1)`. Every list of weights or fields
//! indexed by anchor uses this order.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported number of dimensions.
pub const MAX_DIMENSIONS: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("a cognitive space needs between 1 and {MAX_DIMENSIONS} dimensions, got {0}")]
    DimensionCount(usize),
    #[error("dimension name at position {0} is empty")]
    EmptyName(usize),
    #[error("dimension name `{0}` is used more than once")]
    DuplicateName(String),
    #[error("score component {index} = {value} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f64 },
    #[error("expected {expected} components, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("anchor bit {index} = {value} is not 0 or 1")]
    InvalidBit { index: usize, value: u8 },
}

/// Which extreme of a dimension a rewrite pushes toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pole {
    Low,
    High,
}

impl Pole {
    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Pole::Low
        } else {
            Pole::High
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Pole::Low => 0,
            Pole::High => 1,
        }
    }

    /// `+1.0` for the high pole, `-1.0` for the low pole.
    pub fn sign(self) -> f64 {
        match self {
            Pole::Low => -1.0,
            Pole::High => 1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pole::Low => '-',
            Pole::High => '+',
        }
    }
}

/// One axis of the space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DimensionSpec {
    pub name: String,
    /// 1-based position.
    pub index: usize,
    pub low_pole_text: String,
    pub high_pole_text: String,
}

impl DimensionSpec {
    pub fn pole_text(&self, pole: Pole) -> &str {
        match pole {
            Pole::Low => &self.low_pole_text,
            Pole::High => &self.high_pole_text,
        }
    }
}

/// Config-file form of a dimension; the index is positional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionRecord {
    pub name: String,
    #[serde(default)]
    pub low_pole_text: String,
    #[serde(default)]
    pub high_pole_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<DimensionRecord>", into = "Vec<DimensionRecord>")]
pub struct CognitiveSpace {
    dimensions: Vec<DimensionSpec>,
}

impl CognitiveSpace {
    pub fn new(records: Vec<DimensionRecord>) -> Result<Self, SpaceError> {
        let n = records.len();
        if n == 0 || n > MAX_DIMENSIONS {
            return Err(SpaceError::DimensionCount(n));
        }
        let mut seen = HashSet::new();
        let mut dimensions = Vec::with_capacity(n);
        for (pos, rec) in records.into_iter().enumerate() {
            if rec.name.is_empty() {
                return Err(SpaceError::EmptyName(pos + 1));
            }
            if !seen.insert(rec.name.clone()) {
                return Err(SpaceError::DuplicateName(rec.name));
            }
            dimensions.push(DimensionSpec {
                name: rec.name,
                index: pos + 1,
                low_pole_text: rec.low_pole_text,
                high_pole_text: rec.high_pole_text,
            });
        }
        Ok(Self { dimensions })
    }

    /// A space of `n` dimensions named `d1..dn`.
    pub fn numbered(n: usize) -> Result<Self, SpaceError> {
        Self::new(
            (1..=n)
                .map(|i| DimensionRecord {
                    name: format!("d{i}"),
                    low_pole_text: format!("minimal d{i}"),
                    high_pole_text: format!("maximal d{i}"),
                })
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.dimensions.len()
    }

    pub fn anchor_count(&self) -> usize {
        1 << self.n()
    }

    pub fn dimensions(&self) -> &[DimensionSpec] {
        &self.dimensions
    }

    /// Dimension by 1-based index.
    pub fn dimension(&self, index: usize) -> Option<&DimensionSpec> {
        index.checked_sub(1).and_then(|i| self.dimensions.get(i))
    }

    pub fn position_of(&self, name: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d.name == name)
    }

    pub fn score(&self, values: Vec<f64>) -> Result<ScoreVector, SpaceError> {
        if values.len() != self.n() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.n(),
                actual: values.len(),
            });
        }
        ScoreVector::new(values)
    }

    pub fn anchor(&self, index: usize) -> Option<CognitiveAnchor> {
        (1..=self.anchor_count())
            .contains(&index)
            .then(|| CognitiveAnchor::from_index(index, self.n()))
    }

    /// All `2^n` anchors in canonical order.
    pub fn enumerate_anchors(&self) -> Vec<CognitiveAnchor> {
        (1..=self.anchor_count())
            .map(|k| CognitiveAnchor::from_index(k, self.n()))
            .collect()
    }

    /// Multilinear interpolation weights of `s` over the anchors, in canonical order.
    pub fn weight_vector(&self, s: &ScoreVector) -> Result<Vec<f64>, SpaceError> {
        if s.len() != self.n() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.n(),
                actual: s.len(),
            });
        }
        self.enumerate_anchors()
            .iter()
            .map(|a| anchor_weight(s, a))
            .collect()
    }
}

impl TryFrom<Vec<DimensionRecord>> for CognitiveSpace {
    type Error = SpaceError;

    fn try_from(records: Vec<DimensionRecord>) -> Result<Self, Self::Error> {
        Self::new(records)
    }
}

impl From<CognitiveSpace> for Vec<DimensionRecord> {
    fn from(space: CognitiveSpace) -> Self {
        space
            .dimensions
            .into_iter()
            .map(|d| DimensionRecord {
                name: d.name,
                low_pole_text: d.low_pole_text,
                high_pole_text: d.high_pole_text,
            })
            .collect()
    }
}

/// A point of the unit hypercube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    /// Rejects any component outside `[0, 1]` (including NaN).
    pub fn new(values: Vec<f64>) -> Result<Self, SpaceError> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(SpaceError::ScoreOutOfRange { index, value });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ScoreVector {
    type Error = SpaceError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<ScoreVector> for Vec<f64> {
    fn from(s: ScoreVector) -> Self {
        s.0
    }
}

impl From<&CognitiveAnchor> for ScoreVector {
    fn from(a: &CognitiveAnchor) -> Self {
        Self(a.bits.iter().map(|&b| b as f64).collect())
    }
}

/// A vertex of the hypercube.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CognitiveAnchor {
    bits: Vec<u8>,
    index: usize,
}

impl CognitiveAnchor {
    /// Anchor `k` (1-based) of an `n`-dimensional space.
    pub fn from_index(k: usize, n: usize) -> Self {
        debug_assert!(k >= 1 && k <= 1 << n);
        let code = k - 1;
        Self {
            bits: (0..n).map(|i| ((code >> i) & 1) as u8).collect(),
            index: k,
        }
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self, SpaceError> {
        if bits.is_empty() || bits.len() > MAX_DIMENSIONS {
            return Err(SpaceError::DimensionCount(bits.len()));
        }
        let mut code = 0usize;
        for (i, &b) in bits.iter().enumerate() {
            if b > 1 {
                return Err(SpaceError::InvalidBit { index: i, value: b });
            }
            code |= (b as usize) << i;
        }
        Ok(Self {
            bits,
            index: code + 1,
        })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Canonical 1-based index.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n(&self) -> usize {
        self.bits.len()
    }

    /// Pole of dimension `position` (0-based).
    pub fn pole(&self, position: usize) -> Pole {
        Pole::from_bit(self.bits[position])
    }
}

impl fmt::Display for CognitiveAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, b) in self.bits.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, ")")
    }
}

/// `prod_i (s_i a_i + (1 - a_i)(1 - s_i))`.
pub fn anchor_weight(s: &ScoreVector, a: &CognitiveAnchor) -> Result<f64, SpaceError> {
    if s.len() != a.n() {
        return Err(SpaceError::DimensionMismatch {
            expected: a.n(),
            actual: s.len(),
        });
    }
    Ok(s.values()
        .iter()
        .zip(a.bits())
        .map(|(&si, &ai)| if ai == 1 { si } else { 1.0 - si })
        .product())
}
