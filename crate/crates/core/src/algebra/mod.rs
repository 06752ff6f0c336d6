//! Generic Cayley-Dickson arithmetic at any doubling level.
//!
//! Elements store their coordinates in the doubling-native ("slot") layout:
//! the first half of the vector is the first pair component, the second half
//! the second. In that layout a level-k element padded with zeros is
//! literally a level-(k+1) element with identical arithmetic. The canonical
//! basis `e_1, ..., e_{2^k-1}` used by the classical multiplication tables is
//! a signed permutation of the slots and lives in [`basis`].

pub mod basis;
pub mod identity;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: u32, right: u32 },
    #[error("element has zero norm")]
    ZeroNorm,
    #[error("coordinate count {0} is not a power of two")]
    BadCoordinateCount(usize),
}

/// A Cayley-Dickson number with `2^level` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CDElement<S: Scalar> {
    coords: Vec<S>,
}

/// Result of [`CDElement::inverse`]. Below the sedenions a two-sided inverse
/// is automatic; from level 4 on the flag records an explicit product check.
#[derive(Clone, Debug)]
pub struct Inverse<S: Scalar> {
    pub value: CDElement<S>,
    pub two_sided_verified: bool,
}

impl<S: Scalar> CDElement<S> {
    /// Build from slot coordinates; the length must be a power of two.
    pub fn from_slot_coords(coords: Vec<S>) -> Result<Self, AlgebraError> {
        if !coords.len().is_power_of_two() {
            return Err(AlgebraError::BadCoordinateCount(coords.len()));
        }
        Ok(CDElement { coords })
    }

    pub fn zero(level: u32) -> Self {
        CDElement {
            coords: vec![S::zero(); 1 << level],
        }
    }

    pub fn one(level: u32) -> Self {
        Self::from_scalar(level, S::one())
    }

    pub fn from_scalar(level: u32, s: S) -> Self {
        let mut coords = vec![S::zero(); 1 << level];
        coords[0] = s;
        CDElement { coords }
    }

    pub fn level(&self) -> u32 {
        self.coords.len().trailing_zeros()
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn slot_coords(&self) -> &[S] {
        &self.coords
    }

    pub fn into_slot_coords(self) -> Vec<S> {
        self.coords
    }

    /// The real (scalar) coordinate `x_0`.
    pub fn real_part(&self) -> &S {
        &self.coords[0]
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(S::is_zero)
    }

    /// Zero-pad to a higher level; the embedded element behaves identically
    /// under the higher-level arithmetic.
    pub fn pad_to_level(&self, level: u32) -> Self {
        assert!(level >= self.level());
        let mut coords = self.coords.clone();
        coords.resize(1 << level, S::zero());
        CDElement { coords }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim(), rhs.dim(), "level mismatch");
        CDElement {
            coords: self
                .coords
                .iter()
                .zip(&rhs.coords)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim(), rhs.dim(), "level mismatch");
        CDElement {
            coords: self
                .coords
                .iter()
                .zip(&rhs.coords)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn neg(&self) -> Self {
        CDElement {
            coords: self.coords.iter().map(S::neg).collect(),
        }
    }

    pub fn scale(&self, s: &S) -> Self {
        CDElement {
            coords: self.coords.iter().map(|c| c.mul(s)).collect(),
        }
    }

    /// Conjugation `(a, b) -> (conj a, -b)`; unrolled this negates every slot
    /// except the real one.
    pub fn conj(&self) -> Self {
        let mut coords = self.coords.clone();
        for c in coords.iter_mut().skip(1) {
            *c = c.neg();
        }
        CDElement { coords }
    }

    /// The recursive doubling product `(a,b)(c,d) = (ac - d conj(b), conj(a) d + c b)`.
    pub fn mul(&self, rhs: &Self) -> Result<Self, AlgebraError> {
        if self.dim() != rhs.dim() {
            return Err(AlgebraError::LevelMismatch {
                left: self.level(),
                right: rhs.level(),
            });
        }
        let mut out = vec![S::zero(); self.dim()];
        mul_into(&self.coords, &rhs.coords, &mut out);
        Ok(CDElement { coords: out })
    }

    /// Trace `S(z) = z + conj(z) = 2 x_0`.
    pub fn trace(&self) -> S {
        self.coords[0].add(&self.coords[0])
    }

    /// Norm `N(z) = z conj(z) = sum of squared coordinates`.
    pub fn norm(&self) -> S {
        let mut acc = S::zero();
        for c in &self.coords {
            acc = acc.add(&c.mul(c));
        }
        acc
    }

    /// `conj(z) / N(z)`; errors on zero norm. For levels >= 4 the two-sided
    /// inverse property is verified by explicit multiplication.
    pub fn inverse(&self) -> Result<Inverse<S>, AlgebraError> {
        let n = self.norm();
        if n.is_zero() {
            return Err(AlgebraError::ZeroNorm);
        }
        let coords = self
            .conj()
            .coords
            .into_iter()
            .map(|c| c.try_div(&n).expect("nonzero norm"))
            .collect();
        let value = CDElement { coords };
        let two_sided_verified = if self.level() <= 3 {
            true
        } else {
            let one = Self::one(self.level());
            self.mul(&value).unwrap() == one && value.mul(self).unwrap() == one
        };
        Ok(Inverse {
            value,
            two_sided_verified,
        })
    }

    /// `z^2 - S(z) z + N(z)`; identically zero for exact scalars.
    pub fn quadratic_residual(&self) -> Self {
        let sq = self.mul(self).unwrap();
        let tz = self.scale(&self.trace());
        let n = Self::from_scalar(self.level(), self.norm());
        sq.sub(&tz).add(&n)
    }

    /// Euclidean magnitude of the coordinate vector, as f64.
    pub fn magnitude_f64(&self) -> f64 {
        self.coords
            .iter()
            .map(|c| {
                let v = c.approx_f64();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> CDElement<T> {
        CDElement {
            coords: self.coords.iter().map(f).collect(),
        }
    }
}

fn is_zero_slice<S: Scalar>(a: &[S]) -> bool {
    a.iter().all(S::is_zero)
}

fn conj_slice<S: Scalar>(a: &[S]) -> Vec<S> {
    let mut out = a.to_vec();
    for c in out.iter_mut().skip(1) {
        *c = c.neg();
    }
    out
}

fn mul_into<S: Scalar>(a: &[S], b: &[S], out: &mut [S]) {
    let n = a.len();
    if n == 1 {
        out[0] = a[0].mul(&b[0]);
        return;
    }
    if is_zero_slice(a) || is_zero_slice(b) {
        for c in out.iter_mut() {
            *c = S::zero();
        }
        return;
    }
    let h = n / 2;
    let (a1, a2) = a.split_at(h);
    let (b1, b2) = b.split_at(h);
    let mut t1 = vec![S::zero(); h];
    let mut t2 = vec![S::zero(); h];
    // first half: a1*b1 - b2*conj(a2)
    mul_into(a1, b1, &mut t1);
    mul_into(b2, &conj_slice(a2), &mut t2);
    for i in 0..h {
        out[i] = t1[i].sub(&t2[i]);
    }
    // second half: conj(a1)*b2 + b1*a2
    mul_into(&conj_slice(a1), b2, &mut t1);
    mul_into(b1, a2, &mut t2);
    for i in 0..h {
        out[h + i] = t1[i].add(&t2[i]);
    }
}
