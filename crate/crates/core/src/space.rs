//! Discrete annotation spaces: parameters, coordinates and neighborhoods.
//!
//! A [`SearchSpace`] is an ordered list of [`ParamDef`]s. A [`Coordinate`]
//! holds one index per parameter into that parameter's value list, so moving
//! "one step" always means moving to the adjacent entry of the value list,
//! never to the adjacent integer value.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a parameter controls. Drives initialization and mutation policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Tile,
    Unroll,
    Parallel,
    Flag,
    Other,
}

/// One tunable parameter with its ordered candidate values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamDef {
    name: String,
    kind: ParamKind,
    values: Vec<i64>,
}

impl ParamDef {
    pub fn new(name: impl Into<String>, kind: ParamKind, values: Vec<i64>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(Error::InvalidParam {
                name,
                reason: "empty value list".into(),
            });
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParam {
                name,
                reason: "values must be strictly increasing".into(),
            });
        }
        Ok(Self { name, kind, values })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    /// Index of `value` in the value list, if present.
    pub fn index_of(&self, value: i64) -> Option<usize> {
        self.values.binary_search(&value).ok()
    }
}

/// The set of every annotation of one sketch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize)]
pub struct SearchSpace {
    params: Vec<ParamDef>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamDef>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &params {
            if !seen.insert(p.name.as_str()) {
                return Err(Error::DuplicateParam(p.name.clone()));
            }
        }
        Ok(Self { params })
    }

    /// The zero-dimensional space holding only the empty annotation.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn params(&self) -> &[ParamDef] {
        &self.params
    }

    pub fn dimension(&self) -> usize {
        self.params.len()
    }

    pub fn param(&self, name: &str) -> Option<(usize, &ParamDef)> {
        self.params.iter().enumerate().find(|(_, p)| p.name == name)
    }

    /// Number of coordinates, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        self.params
            .iter()
            .map(|p| p.cardinality() as u128)
            .fold(1u128, |acc, c| acc.saturating_mul(c))
    }

    /// Number of coordinates as a machine word.
    pub fn size_usize(&self) -> Result<usize> {
        let mut acc: usize = 1;
        for p in &self.params {
            acc = acc
                .checked_mul(p.cardinality())
                .ok_or(Error::SpaceTooLarge)?;
        }
        Ok(acc)
    }

    pub fn contains(&self, c: &Coordinate) -> bool {
        c.indices.len() == self.dimension()
            && c.indices
                .iter()
                .zip(&self.params)
                .all(|(&i, p)| i < p.cardinality())
    }

    pub fn validate(&self, c: &Coordinate) -> Result<()> {
        if c.indices.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: c.indices.len(),
            });
        }
        for (d, (&i, p)) in c.indices.iter().zip(&self.params).enumerate() {
            if i >= p.cardinality() {
                return Err(Error::IndexOutOfRange {
                    dim: d,
                    index: i,
                    cardinality: p.cardinality(),
                });
            }
        }
        Ok(())
    }

    /// The all-zero coordinate: the first value of every parameter.
    pub fn origin(&self) -> Coordinate {
        Coordinate::new(vec![0; self.dimension()])
    }

    /// Parameter values selected by `c`.
    pub fn values_of(&self, c: &Coordinate) -> Result<Vec<i64>> {
        self.validate(c)?;
        Ok(c.indices
            .iter()
            .zip(&self.params)
            .map(|(&i, p)| p.values[i])
            .collect())
    }

    /// Coordinate selecting the given parameter values.
    pub fn coordinate_of(&self, values: &[i64]) -> Result<Coordinate> {
        if values.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: values.len(),
            });
        }
        let mut indices = Vec::with_capacity(values.len());
        for (p, &v) in self.params.iter().zip(values) {
            let i = p.index_of(v).ok_or_else(|| Error::InvalidParam {
                name: p.name.clone(),
                reason: format!("value {v} is not in the value list"),
            })?;
            indices.push(i);
        }
        Ok(Coordinate::new(indices))
    }

    /// Axis-aligned ±1 index moves from `c`, clamped at the boundaries.
    ///
    /// Order is dimension-major with the minus step before the plus step.
    pub fn neighbors(&self, c: &Coordinate) -> Result<Vec<Coordinate>> {
        self.validate(c)?;
        let mut out = Vec::with_capacity(2 * self.dimension());
        for (d, p) in self.params.iter().enumerate() {
            let i = c.indices[d];
            if i > 0 {
                out.push(c.with(d, i - 1));
            }
            if i + 1 < p.cardinality() {
                out.push(c.with(d, i + 1));
            }
        }
        Ok(out)
    }

    /// Every coordinate in row-major order (last parameter varies fastest).
    pub fn enumerate(&self) -> Result<Enumerate<'_>> {
        let total = self.size_usize()?;
        Ok(Enumerate {
            space: self,
            next: 0,
            total,
        })
    }

    /// Row-major linear index of `c`.
    pub fn linear_index(&self, c: &Coordinate) -> Result<u128> {
        self.validate(c)?;
        let mut idx: u128 = 0;
        for (&i, p) in c.indices.iter().zip(&self.params) {
            idx = idx * p.cardinality() as u128 + i as u128;
        }
        Ok(idx)
    }

    /// Inverse of [`SearchSpace::linear_index`]. `idx` must be below `size()`.
    pub fn from_linear(&self, mut idx: u128) -> Coordinate {
        let mut indices = vec![0; self.dimension()];
        for (d, p) in self.params.iter().enumerate().rev() {
            let card = p.cardinality() as u128;
            indices[d] = (idx % card) as usize;
            idx /= card;
        }
        Coordinate::new(indices)
    }
}

#[derive(Deserialize)]
struct RawSpace {
    params: Vec<ParamDef>,
}

impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSpace::deserialize(d)?;
        for p in &raw.params {
            ParamDef::new(p.name.clone(), p.kind, p.values.clone())
                .map_err(serde::de::Error::custom)?;
        }
        SearchSpace::new(raw.params).map_err(serde::de::Error::custom)
    }
}

/// Iterator returned by [`SearchSpace::enumerate`].
#[derive(Debug, Clone)]
pub struct Enumerate<'a> {
    space: &'a SearchSpace,
    next: usize,
    total: usize,
}

impl Iterator for Enumerate<'_> {
    type Item = Coordinate;

    fn next(&mut self) -> Option<Coordinate> {
        if self.next >= self.total {
            return None;
        }
        let c = self.space.from_linear(self.next as u128);
        self.next += 1;
        Some(c)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.total - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Enumerate<'_> {}

/// A point in a [`SearchSpace`]: one value-list index per parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coordinate {
    indices: Vec<usize>,
}

impl Coordinate {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Copy of `self` with dimension `dim` set to `index`.
    pub fn with(&self, dim: usize, index: usize) -> Self {
        let mut indices = self.indices.clone();
        indices[dim] = index;
        Self { indices }
    }
}

impl From<Vec<usize>> for Coordinate {
    fn from(indices: Vec<usize>) -> Self {
        Self::new(indices)
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.indices.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}
