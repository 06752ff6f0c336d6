//! Full-rank lattices in a Cayley-Dickson algebra with exact generator
//! coordinates, Brandt integrality checks, membership solving and
//! CM-multiplicator matrices.

use std::collections::HashMap;

use thiserror::Error;

use crate::algebra::basis::{self, Basis};
use crate::algebra::CDElement;
use crate::linalg::Matrix;
use crate::number_field::{MQElement, MQField, NumberFieldError};
use crate::scalar::{Rat, Scalar};
use std::sync::Arc;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("expected {expected} generators, got {got}")]
    GeneratorCount { expected: usize, got: usize },
    #[error("generators are linearly dependent (det W = 0)")]
    SingularGenerators,
    #[error("generator level mismatch")]
    LevelMismatch,
    #[error("alpha coefficient for subset {0:#b} must be nonzero")]
    ZeroAlpha(u32),
    #[error("multiplicator must be nonzero")]
    ZeroMultiplier,
    #[error("lambda*(omega_{h} * mu) does not lie in the lattice")]
    NotAMultiplier { h: usize },
    #[error(transparent)]
    Field(#[from] NumberFieldError),
}

/// Whether Brandt pairings must be rational or integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BrandtMode {
    Rational,
    Integral,
}

/// A rank-`2^k` lattice with exact multiquadratic generator coordinates.
///
/// `W` stores the canonical coordinates of the generators (row `h` is
/// `omega_h`), `theta` is the cofactor matrix pinned by
/// `sum_h W[h][i] * theta[h][l] = delta_il * det(W)`.
#[derive(Clone, Debug)]
pub struct Lattice {
    level: u32,
    field: MQField,
    generators: Vec<CDElement<MQElement>>,
    w: Matrix<MQElement>,
    det_w: MQElement,
    theta: Matrix<MQElement>,
    basis: Arc<Basis>,
}

impl Lattice {
    pub fn from_generators(generators: Vec<CDElement<MQElement>>) -> Result<Self, LatticeError> {
        let level = generators
            .first()
            .ok_or(LatticeError::GeneratorCount {
                expected: 1,
                got: 0,
            })?
            .level();
        let dim = 1usize << level;
        if generators.len() != dim {
            return Err(LatticeError::GeneratorCount {
                expected: dim,
                got: generators.len(),
            });
        }
        if generators.iter().any(|g| g.level() != level) {
            return Err(LatticeError::LevelMismatch);
        }
        let field = generators
            .iter()
            .flat_map(|g| g.slot_coords())
            .find(|c| !c.field().is_rationals())
            .map(|c| c.field().clone())
            .unwrap_or_else(MQField::rationals);
        let generators: Vec<CDElement<MQElement>> = generators
            .iter()
            .map(|g| g.map(|c| c.promote(&field)))
            .collect();
        let b = basis::basis(level);
        let w = Matrix::from_rows(generators.iter().map(|g| b.coords_of(g)).collect());
        let det_w = w.det();
        if det_w.is_zero() {
            return Err(LatticeError::SingularGenerators);
        }
        let theta = w.cofactor_matrix();
        Ok(Lattice {
            level,
            field,
            generators,
            w,
            det_w,
            theta,
            basis: b,
        })
    }

    /// The standard lattice `Z^(2^k)` on the canonical basis.
    pub fn standard(level: u32) -> Self {
        let b = basis::basis(level);
        let gens = (0..1usize << level).map(|j| b.unit(j)).collect();
        Self::from_generators(gens).expect("standard basis is independent")
    }

    /// Canonical CM lattice with the multiplicative coefficient system
    /// `alpha_T = prod_{i in T} alpha_i` built from one rational per
    /// radicand, the way composite generators arise as products of the
    /// primitive ones (`omega_1 omega_2 = alpha_1 alpha_2 sqrt(m_1 m_2) e_1 e_2`).
    /// Integer `alpha_i` then give a lattice closed under multiplication.
    pub fn canonical_multiplicative(
        radicands: &[u64],
        alphas: &[Rat],
    ) -> Result<Self, LatticeError> {
        assert_eq!(alphas.len(), radicands.len(), "one alpha per radicand");
        let mut map = HashMap::new();
        for mask in 1u32..(1 << radicands.len()) {
            let mut a = Rat::from_i64(1);
            for (i, alpha) in alphas.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    a = a.mul(alpha);
                }
            }
            map.insert(mask, a);
        }
        Self::canonical(radicands, &map)
    }

    /// Canonical CM lattice: `omega_T = alpha_T * sqrt(prod_{i in T} m_i) * e_T`
    /// with `omega_0 = 1`. `alpha` maps generator-subset bitmasks to rational
    /// coefficients; missing entries default to 1. Note that closure under
    /// multiplication requires the coefficients to form a multiplicative
    /// system; see [`Lattice::canonical_multiplicative`].
    pub fn canonical(radicands: &[u64], alpha: &HashMap<u32, Rat>) -> Result<Self, LatticeError> {
        let level = radicands.len() as u32;
        let field = MQField::new(radicands)?;
        let b = basis::basis(level);
        let dim = 1usize << level;
        let mut gens = Vec::with_capacity(dim);
        for h in 0..dim {
            let mask = b.subset(h);
            let a = alpha.get(&mask).cloned().unwrap_or_else(|| Rat::from_i64(1));
            if a.is_zero() {
                return Err(LatticeError::ZeroAlpha(mask));
            }
            let coeff = if h == 0 {
                field.one()
            } else {
                field.radical(mask as usize).mq_mul(&MQElement::from_rat_in(&field, a))
            };
            gens.push(b.unit::<MQElement>(h).scale(&coeff));
        }
        Self::from_generators(gens)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        1 << self.level
    }

    pub fn field(&self) -> &MQField {
        &self.field
    }

    pub fn generators(&self) -> &[CDElement<MQElement>] {
        &self.generators
    }

    pub fn generator(&self, h: usize) -> &CDElement<MQElement> {
        &self.generators[h]
    }

    pub fn w(&self) -> &Matrix<MQElement> {
        &self.w
    }

    pub fn det_w(&self) -> &MQElement {
        &self.det_w
    }

    pub fn theta(&self) -> &Matrix<MQElement> {
        &self.theta
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    /// Exact coefficients of `z` on the generators: solves `W^T c = z` via
    /// the cofactor matrix, so `c = theta * z / det(W)`.
    pub fn coefficients(&self, z: &CDElement<MQElement>) -> Option<Vec<Rat>> {
        if z.level() != self.level {
            return None;
        }
        let coords = self.basis.coords_of(&z.map(|c| c.promote(&self.field)));
        let num = self.theta.mat_vec(&coords);
        let mut out = Vec::with_capacity(num.len());
        for v in num {
            let c = v.try_div(&self.det_w).expect("det nonzero");
            if !c.is_rational() {
                return None;
            }
            out.push(c.rational_part().clone());
        }
        Some(out)
    }

    /// Integer coefficient vector of `z` if `z` lies in the lattice.
    pub fn contains(&self, z: &CDElement<MQElement>) -> Option<Vec<i64>> {
        let coeffs = self.coefficients(z)?;
        let mut out = Vec::with_capacity(coeffs.len());
        for c in coeffs {
            if !c.is_integer() {
                return None;
            }
            out.push(i64::try_from(c.to_integer()).ok()?);
        }
        Some(out)
    }

    /// True iff every pairwise generator product stays in the lattice.
    pub fn is_closed_under_multiplication(&self) -> bool {
        for a in &self.generators {
            for b in &self.generators {
                if self.contains(&a.mul(b).unwrap()).is_none() {
                    return false;
                }
            }
        }
        true
    }

    /// Integer matrix `n` with `lambda * (omega_h * mu) = sum_j n[h][j] omega_j`.
    pub fn cm_multiplier_matrix(
        &self,
        lambda: &CDElement<MQElement>,
        mu: &CDElement<MQElement>,
    ) -> Result<CMMultiplier, LatticeError> {
        if lambda.is_zero() || mu.is_zero() {
            return Err(LatticeError::ZeroMultiplier);
        }
        let lambda = lambda.map(|c| c.promote(&self.field));
        let mu = mu.map(|c| c.promote(&self.field));
        let mut n = Vec::with_capacity(self.dim());
        for h in 0..self.dim() {
            let p = lambda.mul(&self.generators[h].mul(&mu).unwrap()).unwrap();
            let row = self
                .contains(&p)
                .ok_or(LatticeError::NotAMultiplier { h })?;
            n.push(row);
        }
        Ok(CMMultiplier { lambda, mu, n })
    }
}

/// A verified CM multiplicator pair with its integer matrix.
#[derive(Clone, Debug)]
pub struct CMMultiplier {
    pub lambda: CDElement<MQElement>,
    pub mu: CDElement<MQElement>,
    /// `n[h][j]`: coefficients of `lambda * (omega_h * mu)` on the generators.
    pub n: Vec<Vec<i64>>,
}

impl CMMultiplier {
    pub fn dim(&self) -> usize {
        self.n.len()
    }
}

/// Twice the Euclidean pairing of the coordinate vectors, `2<a,b>`.
fn double_inner(a: &CDElement<MQElement>, b: &CDElement<MQElement>) -> MQElement {
    let mut acc = <MQElement as Scalar>::zero();
    for (x, y) in a.slot_coords().iter().zip(b.slot_coords()) {
        acc = acc.add(&x.mul(y));
    }
    acc.add(&acc.clone())
}

/// Brandt pairing condition: `2<a,b>` and `2<a, conj b>` rational (resp.
/// integral).
pub fn brandt_check(
    a: &CDElement<MQElement>,
    b: &CDElement<MQElement>,
    mode: BrandtMode,
) -> bool {
    let p1 = double_inner(a, b);
    let p2 = double_inner(a, &b.conj());
    match mode {
        BrandtMode::Rational => p1.is_rational() && p2.is_rational(),
        BrandtMode::Integral => p1.is_integer() && p2.is_integer(),
    }
}

/// The element has rational trace and norm.
pub fn is_rational_element(a: &CDElement<MQElement>) -> bool {
    a.trace().is_rational() && a.norm().is_rational()
}

/// The element has integral trace and norm.
pub fn is_integral_element(a: &CDElement<MQElement>) -> bool {
    a.trace().is_integer() && a.norm().is_integer()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::basis::unit;

    fn mq(v: i64) -> MQElement {
        MQElement::from_i64(v)
    }

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(n.into(), d.into())
    }

    #[test]
    fn standard_lattice_has_identity_w() {
        let l = Lattice::standard(3);
        assert_eq!(l.det_w(), &mq(1));
        for i in 0..8 {
            for j in 0..8 {
                let expect = mq(if i == j { 1 } else { 0 });
                assert_eq!(l.w().entry(i, j), &expect);
                assert_eq!(l.theta().entry(i, j), &expect);
            }
        }
        assert!(l.is_closed_under_multiplication());
    }

    #[test]
    fn canonical_level_one_lattice() {
        // k = 1, m = (2): Z + Z sqrt(2) e1
        let l = Lattice::canonical(&[2], &HashMap::new()).unwrap();
        assert_eq!(l.level(), 1);
        assert_eq!(l.generator(0), &CDElement::one(1));
        let f = l.field().clone();
        assert_eq!(l.generator(1), &unit::<MQElement>(1, 1).scale(&f.radical(1)));
        assert!(l.is_closed_under_multiplication());
    }

    #[test]
    fn canonical_lattice_determinant_and_units() {
        let l = Lattice::canonical(&[2, 3, 5], &HashMap::new()).unwrap();
        // det W = sqrt(2*3*5*6*10*15*30) = 900
        assert_eq!(l.det_w(), &mq(900));
        // omega_4 = sqrt(6) e_4 (e_4 = e_1 e_2, subsets {1,2})
        let f = l.field().clone();
        let expect = unit::<MQElement>(3, 4).scale(&f.radical(0b011));
        assert_eq!(l.generator(4), &expect);
        assert!(l.is_closed_under_multiplication());
    }

    #[test]
    fn adjugate_identity_holds_exactly() {
        let mut alpha = HashMap::new();
        alpha.insert(0b001u32, rat(1, 2));
        alpha.insert(0b110u32, rat(3, 1));
        let l = Lattice::canonical(&[2, 3, 5], &alpha).unwrap();
        let dim = l.dim();
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = <MQElement as Scalar>::zero();
                for h in 0..dim {
                    acc = acc.add(&l.w().entry(h, i).mul(l.theta().entry(h, j)));
                }
                let expect = if i == j {
                    l.det_w().clone()
                } else {
                    <MQElement as Scalar>::zero()
                };
                assert_eq!(acc, expect, "({i},{j})");
            }
        }
    }

    #[test]
    fn dependent_generators_rejected() {
        let b = basis::basis(1);
        let g0 = b.unit::<MQElement>(0);
        let gens = vec![g0.clone(), g0.scale(&mq(2))];
        assert!(matches!(
            Lattice::from_generators(gens),
            Err(LatticeError::SingularGenerators)
        ));
    }

    #[test]
    fn membership() {
        let l = Lattice::canonical(&[2, 3, 5], &HashMap::new()).unwrap();
        // omega_2 itself
        let c = l.contains(l.generator(2)).unwrap();
        assert_eq!(c, vec![0, 0, 1, 0, 0, 0, 0, 0]);
        // omega_1 / 2 is not in the lattice
        let half = l
            .generator(1)
            .scale(&MQElement::from_rat(rat(1, 2)));
        assert!(l.contains(&half).is_none());
        // omega_1 * omega_2 = sqrt(6) e_4 = omega_4
        let p = l.generator(1).mul(l.generator(2)).unwrap();
        assert_eq!(l.contains(&p).unwrap(), vec![0, 0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn fractional_alpha_breaks_closure() {
        let mut alpha = HashMap::new();
        alpha.insert(0b001u32, rat(1, 2));
        let l = Lattice::canonical(&[2, 3, 5], &alpha).unwrap();
        // omega_1^2 = (1/2 sqrt2 e1)^2 = -1/2, not an integer combination
        assert!(!l.is_closed_under_multiplication());
    }

    #[test]
    fn multiplicative_integer_alphas_stay_closed() {
        let l = Lattice::canonical_multiplicative(
            &[2, 3, 5],
            &[rat(2, 1), rat(1, 1), rat(3, 1)],
        )
        .unwrap();
        assert!(l.is_closed_under_multiplication());
        // omega_5 (= subset {1,3}) picks up alpha_1 alpha_3 = 6
        let f = l.field().clone();
        let six = MQElement::from_rat_in(&f, rat(6, 1));
        assert_eq!(
            l.generator(5),
            &unit::<MQElement>(3, 5).scale(&f.radical(0b101).mq_mul(&six))
        );
    }

    #[test]
    fn independent_subset_alpha_can_break_closure() {
        // An isolated integer coefficient is not a multiplicative system:
        // omega_2 omega_3 = sqrt(15) e_6 needs 1/3 of omega_6.
        let mut alpha = HashMap::new();
        alpha.insert(0b110u32, rat(3, 1));
        let l = Lattice::canonical(&[2, 3, 5], &alpha).unwrap();
        assert!(!l.is_closed_under_multiplication());
    }

    #[test]
    fn brandt_conditions() {
        let e1 = unit::<MQElement>(3, 1);
        assert!(brandt_check(&e1, &e1, BrandtMode::Integral));
        // a = (1 + e1)/2, b = 1: 2<a,b> = 1
        let a = unit::<MQElement>(3, 0)
            .add(&e1)
            .scale(&MQElement::from_rat(rat(1, 2)));
        let one = CDElement::one(3);
        assert!(brandt_check(&a, &one, BrandtMode::Integral));
        // an element with a coordinate outside Q fails rationality
        let f = MQField::new(&[2]).unwrap();
        let irr = CDElement::from_scalar(3, f.radical(1));
        assert!(!brandt_check(&irr, &one.map(|c| c.promote(&f)), BrandtMode::Rational));
        // canonical generators pairwise satisfy the rational Brandt check
        let l = Lattice::canonical(&[2, 3, 5], &HashMap::new()).unwrap();
        for a in l.generators() {
            for b in l.generators() {
                assert!(brandt_check(a, b, BrandtMode::Rational));
                assert!(is_rational_element(a));
            }
        }
    }

    #[test]
    fn cm_multiplier_on_standard_lattice() {
        let l = Lattice::standard(3);
        let lambda = CDElement::one(3).add(&unit(3, 1)); // 1 + e1
        let one = CDElement::one(3);
        let cm = l.cm_multiplier_matrix(&lambda, &one).unwrap();
        assert_eq!(cm.n[0], vec![1, 1, 0, 0, 0, 0, 0, 0]);
        // (1+e1) e2 = e2 + e4
        assert_eq!(cm.n[2], vec![0, 0, 1, 0, 1, 0, 0, 0]);
        // reconstruction: sum_j n[h][j] omega_j = lambda * (omega_h * mu)
        for h in 0..8 {
            let mut acc = CDElement::<MQElement>::zero(3);
            for j in 0..8 {
                acc = acc.add(&l.generator(j).scale(&mq(cm.n[h][j])));
            }
            let lhs = lambda.mul(&l.generator(h).mul(&one).unwrap()).unwrap();
            assert_eq!(acc, lhs);
        }
    }

    #[test]
    fn cm_multiplier_on_canonical_lattice() {
        let l = Lattice::canonical(&[2, 3, 5], &HashMap::new()).unwrap();
        let lambda = l.generator(1).clone(); // sqrt(2) e1
        let one = CDElement::one(3);
        let cm = l.cm_multiplier_matrix(&lambda, &one).unwrap();
        // lambda * omega_2 = sqrt(6) e4 = omega_4
        assert_eq!(cm.n[2], vec![0, 0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn non_multiplier_reports_offending_generator() {
        let l = Lattice::standard(3);
        let third = CDElement::from_scalar(3, MQElement::from_rat(rat(1, 3)));
        let one = CDElement::one(3);
        assert!(matches!(
            l.cm_multiplier_matrix(&third, &one),
            Err(LatticeError::NotAMultiplier { h: 0 })
        ));
    }
}
