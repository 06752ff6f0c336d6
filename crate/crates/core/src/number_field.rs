//! Exact arithmetic in multiquadratic fields `Q[sqrt(m_1), ..., sqrt(m_k)]`.
//!
//! Elements are stored on the radical basis indexed by subset bitmask: bit
//! `i-1` of a mask selects `sqrt(m_i)`, so an element is
//! `sum_T q_T * sqrt(prod_{i in T} m_i)` with rational `q_T`.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_integer::{Integer, Roots};
use num_traits::Signed;
use thiserror::Error;

use crate::scalar::{rat_from_str, rat_to_f64, Rat, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumberFieldError {
    #[error("radicand {0} must be >= 2")]
    RadicandTooSmall(u64),
    #[error("radicand {0} is not square-free")]
    NotSquareFree(u64),
    #[error("radicand {0} exceeds the square-free validation bound")]
    TooLargeToValidate(u64),
    #[error("duplicate radicand {0}")]
    DuplicateRadicand(u64),
    #[error("radicands are multiplicatively dependent: product over {{{0}}} is a perfect square")]
    Dependent(String),
    #[error("mixed multiquadratic fields")]
    FieldMismatch,
    #[error("inverse of zero")]
    ZeroInverse,
    #[error("precision must lie in 2..=53 bits, got {0}")]
    BadPrecision(u32),
    #[error("cannot parse {0:?} as a field element")]
    Parse(String),
    #[error("sqrt({0}) is not representable on the field's radical basis")]
    NotRepresentable(u64),
}

const DEFAULT_TRIAL_BOUND: u64 = 1_000_000;

#[derive(Debug, PartialEq, Eq)]
struct FieldData {
    radicands: Vec<u64>,
}

/// The field `Q[sqrt(m_1), ..., sqrt(m_k)]`.
///
/// Radicands must be distinct square-free integers `>= 2` and multiplicatively
/// independent (no nonempty subset multiplies to a perfect square), which is
/// exactly the condition for the radical basis to be linearly independent.
#[derive(Clone, Debug)]
pub struct MQField {
    inner: Arc<FieldData>,
}

impl PartialEq for MQField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner == other.inner
    }
}
impl Eq for MQField {}

impl MQField {
    pub fn new(radicands: &[u64]) -> Result<Self, NumberFieldError> {
        Self::with_trial_bound(radicands, DEFAULT_TRIAL_BOUND)
    }

    pub fn with_trial_bound(radicands: &[u64], bound: u64) -> Result<Self, NumberFieldError> {
        for (i, &m) in radicands.iter().enumerate() {
            if m < 2 {
                return Err(NumberFieldError::RadicandTooSmall(m));
            }
            if radicands[..i].contains(&m) {
                return Err(NumberFieldError::DuplicateRadicand(m));
            }
            check_square_free(m, bound)?;
        }
        check_independent(radicands)?;
        Ok(MQField {
            inner: Arc::new(FieldData {
                radicands: radicands.to_vec(),
            }),
        })
    }

    /// The rank-zero field, i.e. plain rationals.
    pub fn rationals() -> Self {
        MQField {
            inner: Arc::new(FieldData { radicands: vec![] }),
        }
    }

    pub fn radicands(&self) -> &[u64] {
        &self.inner.radicands
    }

    pub fn rank(&self) -> usize {
        self.inner.radicands.len()
    }

    /// Number of basis radicals, `2^rank`.
    pub fn basis_len(&self) -> usize {
        1usize << self.rank()
    }

    pub fn is_rationals(&self) -> bool {
        self.rank() == 0
    }

    /// Product of the radicands selected by `mask`.
    pub fn subset_radicand(&self, mask: usize) -> u128 {
        let mut p: u128 = 1;
        for (i, &m) in self.inner.radicands.iter().enumerate() {
            if mask >> i & 1 == 1 {
                p *= m as u128;
            }
        }
        p
    }

    /// Subset mask whose radicand product equals `r`, if any.
    pub fn mask_of_radicand(&self, r: u64) -> Option<usize> {
        (0..self.basis_len()).find(|&mask| self.subset_radicand(mask) == r as u128)
    }

    pub fn zero(&self) -> MQElement {
        MQElement::from_rat_in(self, Rat::from_i64(0))
    }

    pub fn one(&self) -> MQElement {
        MQElement::from_rat_in(self, Rat::from_i64(1))
    }

    /// The element `sqrt(prod_{i in mask} m_i)`.
    pub fn radical(&self, mask: usize) -> MQElement {
        let mut coeffs = vec![Rat::from_i64(0); self.basis_len()];
        coeffs[mask] = Rat::from_i64(1);
        MQElement {
            field: self.clone(),
            coeffs,
        }
    }
}

fn check_square_free(m: u64, bound: u64) -> Result<(), NumberFieldError> {
    let mut r = m;
    let mut d: u64 = 2;
    while d <= bound && d.saturating_mul(d) <= r {
        if r % d == 0 {
            r /= d;
            if r % d == 0 {
                return Err(NumberFieldError::NotSquareFree(m));
            }
        }
        d += 1;
    }
    if r > 1 && r > bound {
        // All prime factors of r exceed `bound` (or r itself is prime).
        let s = r.sqrt();
        if s * s == r {
            return Err(NumberFieldError::NotSquareFree(m));
        }
        // r < bound^3 rules out p^2*q with p,q > bound.
        if bound.checked_pow(3).map_or(false, |b3| r >= b3) {
            return Err(NumberFieldError::TooLargeToValidate(m));
        }
    }
    Ok(())
}

/// Rejects radicand lists where some nonempty subset multiplies to a perfect
/// square (e.g. (2, 3, 6)); those do not generate a degree-2^k field.
fn check_independent(radicands: &[u64]) -> Result<(), NumberFieldError> {
    // Coprime-base refinement, then GF(2) elimination on exponent vectors.
    let mut base: Vec<u64> = Vec::new();
    for &m in radicands {
        let mut todo = vec![m];
        while let Some(mut x) = todo.pop() {
            if x == 1 {
                continue;
            }
            let mut split = false;
            for i in 0..base.len() {
                let g = x.gcd(&base[i]);
                if g > 1 && g < base[i] {
                    let b = base[i];
                    base[i] = g;
                    base.push(b / g);
                    todo.push(x);
                    split = true;
                    break;
                } else if g == base[i] {
                    x /= g;
                    if x == 1 {
                        break;
                    }
                }
            }
            if !split && x > 1 {
                base.push(x);
            }
        }
    }
    // Exponent parity vector of each radicand over the base.
    let mut rows: Vec<(u128, usize)> = Vec::new();
    for (idx, &m) in radicands.iter().enumerate() {
        let mut bits: u128 = 0;
        let mut x = m;
        for (j, &b) in base.iter().enumerate() {
            let mut e = 0u32;
            while x % b == 0 {
                x /= b;
                e += 1;
            }
            if e % 2 == 1 {
                bits |= 1 << j;
            }
        }
        debug_assert_eq!(x, 1);
        rows.push((bits, idx));
    }
    // GF(2) Gaussian elimination; a vanishing combination names the subset.
    let mut pivots: Vec<(u128, u128)> = Vec::new(); // (row bits, member mask)
    for (mut bits, idx) in rows {
        let mut members: u128 = 1 << idx;
        for &(p, pm) in &pivots {
            let low = p & p.wrapping_neg();
            if bits & low != 0 {
                bits ^= p;
                members ^= pm;
            }
        }
        if bits == 0 {
            let subset: Vec<String> = (0..radicands.len())
                .filter(|i| members >> i & 1 == 1)
                .map(|i| radicands[i].to_string())
                .collect();
            return Err(NumberFieldError::Dependent(subset.join(", ")));
        }
        pivots.push((bits, members));
        pivots.sort_by_key(|&(p, _)| std::cmp::Reverse(p & p.wrapping_neg()));
    }
    Ok(())
}

/// An exact element of a multiquadratic field.
#[derive(Clone, Debug)]
pub struct MQElement {
    field: MQField,
    coeffs: Vec<Rat>,
}

impl PartialEq for MQElement {
    fn eq(&self, other: &Self) -> bool {
        if self.field == other.field {
            return self.coeffs == other.coeffs;
        }
        // Rationals embed in every field; elements of distinct nontrivial
        // fields are never considered equal.
        if self.field.is_rationals() {
            other.is_rational() && &other.coeffs[0] == &self.coeffs[0]
        } else if other.field.is_rationals() {
            self.is_rational() && &self.coeffs[0] == &other.coeffs[0]
        } else {
            false
        }
    }
}

impl MQElement {
    pub fn from_coeffs(field: &MQField, coeffs: Vec<Rat>) -> Self {
        assert_eq!(coeffs.len(), field.basis_len(), "coefficient length");
        MQElement {
            field: field.clone(),
            coeffs,
        }
    }

    pub fn from_rat_in(field: &MQField, r: Rat) -> Self {
        let mut coeffs = vec![Rat::from_i64(0); field.basis_len()];
        coeffs[0] = r;
        MQElement {
            field: field.clone(),
            coeffs,
        }
    }

    pub fn from_rat(r: Rat) -> Self {
        Self::from_rat_in(&MQField::rationals(), r)
    }

    pub fn field(&self) -> &MQField {
        &self.field
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    pub fn coeff(&self, mask: usize) -> &Rat {
        &self.coeffs[mask]
    }

    /// True when all radical coefficients vanish.
    pub fn is_rational(&self) -> bool {
        self.coeffs[1..].iter().all(|c| c.is_zero())
    }

    pub fn rational_part(&self) -> &Rat {
        &self.coeffs[0]
    }

    pub fn is_integer(&self) -> bool {
        self.is_rational() && self.coeffs[0].is_integer()
    }

    /// Promote into `field` (only rank-0 elements can be promoted).
    pub fn promote(&self, field: &MQField) -> MQElement {
        if self.field == *field {
            return self.clone();
        }
        assert!(
            self.field.is_rationals(),
            "cannot promote a non-rational element into another field"
        );
        MQElement::from_rat_in(field, self.coeffs[0].clone())
    }

    fn unified(a: &MQElement, b: &MQElement) -> (MQElement, MQElement) {
        if a.field == b.field {
            (a.clone(), b.clone())
        } else if a.field.is_rationals() {
            (a.promote(&b.field), b.clone())
        } else if b.field.is_rationals() {
            (a.clone(), b.promote(&a.field))
        } else {
            panic!("mixed multiquadratic fields");
        }
    }

    pub fn mq_add(&self, rhs: &MQElement) -> MQElement {
        let (a, b) = Self::unified(self, rhs);
        let coeffs = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| x + y)
            .collect();
        MQElement {
            field: a.field,
            coeffs,
        }
    }

    pub fn mq_neg(&self) -> MQElement {
        MQElement {
            field: self.field.clone(),
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }

    pub fn mq_sub(&self, rhs: &MQElement) -> MQElement {
        self.mq_add(&rhs.mq_neg())
    }

    /// Exact product; radical products re-expand on the subset basis using
    /// `sqrt(m_i) * sqrt(m_i) = m_i`.
    pub fn mq_mul(&self, rhs: &MQElement) -> MQElement {
        let (a, b) = Self::unified(self, rhs);
        let n = a.field.basis_len();
        let mut coeffs = vec![Rat::from_i64(0); n];
        for s in 0..n {
            if a.coeffs[s].is_zero() {
                continue;
            }
            for t in 0..n {
                if b.coeffs[t].is_zero() {
                    continue;
                }
                let overlap = a.field.subset_radicand(s & t);
                let mut term = &a.coeffs[s] * &b.coeffs[t];
                if overlap != 1 {
                    term *= Rat::from_integer(BigInt::from(overlap));
                }
                coeffs[s ^ t] += term;
            }
        }
        MQElement {
            field: a.field,
            coeffs,
        }
    }

    /// Conjugate flipping the sign of every radical selected by `flip_mask`.
    fn galois(&self, flip_mask: usize) -> MQElement {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(t, c)| {
                if (t & flip_mask).count_ones() % 2 == 1 {
                    -c
                } else {
                    c.clone()
                }
            })
            .collect();
        MQElement {
            field: self.field.clone(),
            coeffs,
        }
    }

    /// Exact inverse via the product of all nontrivial Galois conjugates.
    pub fn mq_inverse(&self) -> Result<MQElement, NumberFieldError> {
        if self.mq_is_zero() {
            return Err(NumberFieldError::ZeroInverse);
        }
        let n = self.field.basis_len();
        let mut prod = MQElement::from_rat_in(&self.field, Rat::from_i64(1));
        for g in 1..n {
            prod = prod.mq_mul(&self.galois(g));
        }
        let norm = self.mq_mul(&prod);
        debug_assert!(
            norm.is_rational(),
            "field norm must be rational: {norm:?} (dependent radicands?)"
        );
        let inv_norm = Rat::from_i64(1) / norm.rational_part().clone();
        let coeffs = prod.coeffs.iter().map(|c| c * &inv_norm).collect();
        Ok(MQElement {
            field: self.field.clone(),
            coeffs,
        })
    }

    pub fn mq_is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// Rational interval `[lo, hi]` containing the value, with
    /// `hi - lo <= 2^-frac_bits * sum |q_T| * something`; refines radicals to
    /// `frac_bits` fractional bits.
    fn interval(&self, frac_bits: u32) -> (Rat, Rat) {
        let mut lo = self.coeffs[0].clone();
        let mut hi = self.coeffs[0].clone();
        let scale = BigUint::from(1u8) << frac_bits;
        let scale2 = BigInt::from(&scale * &scale);
        let scale_rat = Rat::from_integer(BigInt::from(scale));
        for (t, q) in self.coeffs.iter().enumerate().skip(1) {
            if q.is_zero() {
                continue;
            }
            let r = self.field.subset_radicand(t);
            let scaled = BigInt::from(r) * &scale2;
            let s = scaled.sqrt();
            let r_lo = Rat::from_integer(s.clone()) / &scale_rat;
            let r_hi = Rat::from_integer(s + BigInt::from(1)) / &scale_rat;
            if q.is_positive() {
                lo += q * &r_lo;
                hi += q * &r_hi;
            } else {
                lo += q * &r_hi;
                hi += q * &r_lo;
            }
        }
        (lo, hi)
    }

    /// Floating approximation with relative error below `2^(1-precision)`.
    ///
    /// `precision` must lie in `2..=53`; the radicals are refined adaptively
    /// until the enclosing interval is tight enough, then rounded once.
    pub fn embed(&self, precision: u32) -> Result<f64, NumberFieldError> {
        if !(2..=53).contains(&precision) {
            return Err(NumberFieldError::BadPrecision(precision));
        }
        if self.mq_is_zero() {
            return Ok(0.0);
        }
        if self.is_rational() {
            return Ok(rat_to_f64(&self.coeffs[0]));
        }
        let mut frac_bits = 64u32;
        loop {
            let (lo, hi) = self.interval(frac_bits);
            let width = &hi - &lo;
            let mag = std::cmp::max(lo.abs(), hi.abs());
            // width <= mag * 2^-(precision+2) leaves room for the final rounding
            let tol = &mag / Rat::from_integer(BigInt::from(1) << (precision + 2));
            if !mag.is_zero() && width <= tol {
                let mid = (&lo + &hi) / Rat::from_integer(BigInt::from(2));
                return Ok(rat_to_f64(&mid));
            }
            frac_bits *= 2;
            assert!(frac_bits <= 1 << 20, "embed failed to converge");
        }
    }

    /// Exact sign of the value.
    pub fn sign(&self) -> Ordering {
        if self.mq_is_zero() {
            return Ordering::Equal;
        }
        if self.is_rational() {
            return self.coeffs[0].cmp(&Rat::from_i64(0));
        }
        let mut frac_bits = 64u32;
        loop {
            let (lo, hi) = self.interval(frac_bits);
            if lo.is_positive() {
                return Ordering::Greater;
            }
            if hi.is_negative() {
                return Ordering::Less;
            }
            frac_bits *= 2;
            assert!(frac_bits <= 1 << 20, "sign failed to converge");
        }
    }

    /// Parse grammar: signed sum of terms `rat`, `rat*sqrt(r)`, `sqrt(r)`.
    pub fn parse(field: &MQField, input: &str) -> Result<MQElement, NumberFieldError> {
        let compact: String = input.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(NumberFieldError::Parse(input.to_string()));
        }
        let mut out = field.zero();
        let mut rest = compact.as_str();
        let mut first = true;
        while !rest.is_empty() {
            let mut sign = Rat::from_i64(1);
            if let Some(r) = rest.strip_prefix('+') {
                rest = r;
            } else if let Some(r) = rest.strip_prefix('-') {
                sign = Rat::from_i64(-1);
                rest = r;
            } else if !first {
                return Err(NumberFieldError::Parse(input.to_string()));
            }
            first = false;
            // A term extends until the next top-level '+'/'-' (minus inside a
            // numerator only occurs at the start, handled above).
            let end = rest
                .char_indices()
                .position(|(i, c)| i > 0 && (c == '+' || c == '-'))
                .unwrap_or(rest.len());
            let term = &rest[..end];
            rest = &rest[end..];
            out = out.mq_add(&parse_term(field, term, sign, input)?);
        }
        Ok(out)
    }
}

fn parse_term(
    field: &MQField,
    term: &str,
    sign: Rat,
    orig: &str,
) -> Result<MQElement, NumberFieldError> {
    let err = || NumberFieldError::Parse(orig.to_string());
    let (coef_str, radical_str) = match term.find("sqrt(") {
        Some(pos) => {
            let coef = term[..pos].trim_end_matches('*');
            (coef, Some(&term[pos..]))
        }
        None => (term, None),
    };
    let coef = if coef_str.is_empty() {
        Rat::from_i64(1)
    } else {
        rat_from_str(coef_str).ok_or_else(err)?
    };
    let mask = match radical_str {
        None => 0usize,
        Some(r) => {
            let inner = r
                .strip_prefix("sqrt(")
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(err)?;
            let radicand: u64 = inner.parse().map_err(|_| err())?;
            if radicand == 1 {
                0
            } else {
                field
                    .mask_of_radicand(radicand)
                    .ok_or(NumberFieldError::NotRepresentable(radicand))?
            }
        }
    };
    let mut coeffs = vec![Rat::from_i64(0); field.basis_len()];
    coeffs[mask] = sign * coef;
    Ok(MQElement::from_coeffs(field, coeffs))
}

impl fmt::Display for MQElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut wrote = false;
        for (t, q) in self.coeffs.iter().enumerate() {
            if q.is_zero() {
                continue;
            }
            if wrote && q.is_positive() {
                write!(f, "+")?;
            }
            if t == 0 {
                write!(f, "{q}")?;
            } else {
                let r = self.field.subset_radicand(t);
                if *q == Rat::from_i64(1) {
                    write!(f, "sqrt({r})")?;
                } else if *q == Rat::from_i64(-1) {
                    write!(f, "-sqrt({r})")?;
                } else {
                    write!(f, "{q}*sqrt({r})")?;
                }
            }
            wrote = true;
        }
        if !wrote {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl Scalar for MQElement {
    const EXACT: bool = true;

    fn zero() -> Self {
        MQElement::from_rat(Rat::from_i64(0))
    }
    fn one() -> Self {
        MQElement::from_rat(Rat::from_i64(1))
    }
    fn from_i64(v: i64) -> Self {
        MQElement::from_rat(Rat::from_integer(BigInt::from(v)))
    }
    fn from_rat(r: &Rat) -> Self {
        MQElement::from_rat(r.clone())
    }
    fn is_zero(&self) -> bool {
        self.mq_is_zero()
    }
    fn add(&self, rhs: &Self) -> Self {
        self.mq_add(rhs)
    }
    fn sub(&self, rhs: &Self) -> Self {
        self.mq_sub(rhs)
    }
    fn mul(&self, rhs: &Self) -> Self {
        self.mq_mul(rhs)
    }
    fn neg(&self) -> Self {
        self.mq_neg()
    }
    fn try_div(&self, rhs: &Self) -> Option<Self> {
        if rhs.mq_is_zero() {
            None
        } else {
            let (a, b) = MQElement::unified(self, rhs);
            Some(a.mq_mul(&b.mq_inverse().ok()?))
        }
    }
    fn approx_f64(&self) -> f64 {
        self.embed(53).unwrap_or(f64::NAN)
    }
}
