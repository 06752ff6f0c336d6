//! Lattice configuration and coordinate-string parsing.
//!
//! The lattice config is JSON with either a canonical construction
//! (`radicands` + optional `alpha` keyed by generator subsets like `"1,3"`)
//! or explicit `generators` given as canonical coordinate strings; a bare
//! `level` selects the standard integer lattice. Unknown keys are rejected.
//!
//! Coordinate strings are signed sums of terms `scalar`, `scalar*e<k>` or
//! `e<k>`, where the scalar part is rational or `q*sqrt(r)` with `r` a
//! product of the field's radicands, e.g. `"1+e1"`, `"sqrt(2)*e1"`,
//! `"3/2*sqrt(6)*e4-1/2"`.

use std::collections::{BTreeMap, HashMap};

use serde::Deserialize;
use thiserror::Error;

use crate::algebra::basis;
use crate::algebra::CDElement;
use crate::lattice::{Lattice, LatticeError};
use crate::number_field::{MQElement, MQField, NumberFieldError};
use crate::scalar::{rat_from_str, Rat, Scalar};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Field(#[from] NumberFieldError),
    #[error("bad subset key {0:?} (expected comma-separated generator indices)")]
    BadSubsetKey(String),
    #[error("bad rational {0:?}")]
    BadRational(String),
    #[error("config needs one of: generators, radicands, level")]
    Underspecified,
    #[error("cannot parse element {0:?}")]
    BadElement(String),
    #[error("basis index {0} out of range for level {1}")]
    BadUnitIndex(usize, u32),
}

/// JSON schema of a lattice description.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub level: Option<u32>,
    pub radicands: Option<Vec<u64>>,
    pub alpha: Option<BTreeMap<String, String>>,
    pub generators: Option<Vec<Vec<String>>>,
}

impl LatticeConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn standard(level: u32) -> Self {
        LatticeConfig {
            level: Some(level),
            ..Default::default()
        }
    }

    pub fn canonical(radicands: &[u64]) -> Self {
        LatticeConfig {
            radicands: Some(radicands.to_vec()),
            ..Default::default()
        }
    }

    /// The scalar field the config implies.
    pub fn field(&self) -> Result<MQField, ConfigError> {
        match &self.radicands {
            Some(r) => Ok(MQField::new(r)?),
            None => Ok(MQField::rationals()),
        }
    }

    pub fn build(&self) -> Result<Lattice, ConfigError> {
        if let Some(gens) = &self.generators {
            let field = self.field()?;
            let level = match self.level {
                Some(l) => l,
                None => {
                    let n = gens.len();
                    n.trailing_zeros()
                }
            };
            let parsed: Result<Vec<CDElement<MQElement>>, ConfigError> = gens
                .iter()
                .map(|coords| {
                    let vals: Result<Vec<MQElement>, ConfigError> = coords
                        .iter()
                        .map(|s| Ok(MQElement::parse(&field, s)?))
                        .collect();
                    Ok(basis::from_coords(level, &vals?))
                })
                .collect();
            return Ok(Lattice::from_generators(parsed?)?);
        }
        if let Some(radicands) = &self.radicands {
            let mut alpha = HashMap::new();
            if let Some(map) = &self.alpha {
                for (key, value) in map {
                    let mask = parse_subset_key(key)
                        .ok_or_else(|| ConfigError::BadSubsetKey(key.clone()))?;
                    let r = rat_from_str(value)
                        .ok_or_else(|| ConfigError::BadRational(value.clone()))?;
                    alpha.insert(mask, r);
                }
            }
            return Ok(Lattice::canonical(radicands, &alpha)?);
        }
        if let Some(level) = self.level {
            return Ok(Lattice::standard(level));
        }
        Err(ConfigError::Underspecified)
    }
}

fn parse_subset_key(key: &str) -> Option<u32> {
    let mut mask = 0u32;
    for part in key.split(',') {
        let i: u32 = part.trim().parse().ok()?;
        if i == 0 || i > 31 {
            return None;
        }
        mask |= 1 << (i - 1);
    }
    Some(mask)
}

/// Parse a coordinate string into an exact element at the given level.
pub fn parse_element(
    field: &MQField,
    level: u32,
    input: &str,
) -> Result<CDElement<MQElement>, ConfigError> {
    let compact: String = input.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(ConfigError::BadElement(input.to_string()));
    }
    let dim = 1usize << level;
    let mut out = CDElement::<MQElement>::zero(level);
    let b = basis::basis(level);
    let mut rest = compact.as_str();
    let mut first = true;
    while !rest.is_empty() {
        let mut negate = false;
        if let Some(r) = rest.strip_prefix('+') {
            rest = r;
        } else if let Some(r) = rest.strip_prefix('-') {
            negate = true;
            rest = r;
        } else if !first {
            return Err(ConfigError::BadElement(input.to_string()));
        }
        first = false;
        let end = rest
            .char_indices()
            .position(|(i, ch)| i > 0 && (ch == '+' || ch == '-'))
            .unwrap_or(rest.len());
        let term = &rest[..end];
        rest = &rest[end..];

        // split off a trailing unit factor "e<k>"
        let (scalar_str, unit_idx) = match term.rfind('e') {
            Some(pos) if term[pos + 1..].chars().all(|c| c.is_ascii_digit())
                && !term[pos + 1..].is_empty() =>
            {
                let idx: usize = term[pos + 1..]
                    .parse()
                    .map_err(|_| ConfigError::BadElement(input.to_string()))?;
                let mut s = &term[..pos];
                s = s.strip_suffix('*').unwrap_or(s);
                (s, idx)
            }
            _ => (term, 0usize),
        };
        if unit_idx >= dim {
            return Err(ConfigError::BadUnitIndex(unit_idx, level));
        }
        let scalar = if scalar_str.is_empty() {
            MQElement::from_rat_in(field, <Rat as Scalar>::from_i64(1))
        } else {
            MQElement::parse(field, scalar_str)?
        };
        let scalar = if negate { scalar.mq_neg() } else { scalar };
        out = out.add(&b.unit::<MQElement>(unit_idx).scale(&scalar));
    }
    Ok(out)
}
