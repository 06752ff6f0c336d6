//! Canonical basis for each doubling level.
//!
//! The basis `e_0 = 1, e_1, ..., e_{2^k-1}` is indexed by the subsets of the
//! level's generators ordered by size and then lexicographically, so that at
//! level 3 the numbering agrees with the classical octonion table:
//! `e_4 = e_1 e_2`, `e_5 = e_1 e_3`, `e_6 = e_2 e_3`, `e_7 = (e_1 e_2) e_3`.
//! Generator `i` is the unit introduced by the i-th doubling (slot `2^(i-1)`)
//! and `e_T` is the left-nested ascending product of its generators, computed
//! by the doubling formula itself. Every basis element is a signed slot unit,
//! so conversions between slot and canonical coordinates are signed
//! permutations.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::CDElement;
use crate::scalar::{Rat, Scalar};

/// Signed-permutation frame between slot coordinates and the canonical basis,
/// plus the full signed basis-product table, for one level.
#[derive(Debug)]
pub struct Basis {
    level: u32,
    dim: usize,
    subsets: Vec<u32>,
    slot_of: Vec<usize>,
    sign_of: Vec<i8>,
    prod_sign: Vec<i8>,
    prod_index: Vec<usize>,
}

fn subset_order_key(mask: u32) -> (u32, Vec<u32>) {
    let elems: Vec<u32> = (0..32).filter(|i| mask >> i & 1 == 1).collect();
    (mask.count_ones(), elems)
}

impl Basis {
    fn build(level: u32) -> Basis {
        assert!(level <= 8, "basis tables limited to level <= 8");
        let dim = 1usize << level;
        let mut subsets: Vec<u32> = (0..dim as u32).collect();
        subsets.sort_by_key(|&m| subset_order_key(m));

        // e_T as an exact element: left-nested ascending generator product.
        let mut slot_of = vec![0usize; dim];
        let mut sign_of = vec![1i8; dim];
        let mut units: Vec<CDElement<Rat>> = Vec::with_capacity(dim);
        for (idx, &mask) in subsets.iter().enumerate() {
            let mut acc = CDElement::<Rat>::one(level);
            for i in 0..level {
                if mask >> i & 1 == 1 {
                    let gen = slot_unit::<Rat>(level, 1usize << i);
                    acc = acc.mul(&gen).unwrap();
                }
            }
            let (slot, sign) = single_slot(&acc).expect("basis product must be a signed unit");
            slot_of[idx] = slot;
            sign_of[idx] = sign;
            units.push(acc);
        }
        let mut index_of_slot = vec![0usize; dim];
        for (idx, &slot) in slot_of.iter().enumerate() {
            index_of_slot[slot] = idx;
        }

        let mut prod_sign = vec![0i8; dim * dim];
        let mut prod_index = vec![0usize; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let p = units[i].mul(&units[j]).unwrap();
                let (slot, s) = single_slot(&p).expect("unit product must be a signed unit");
                let m = index_of_slot[slot];
                prod_sign[i * dim + j] = s * sign_of[m];
                prod_index[i * dim + j] = m;
            }
        }

        Basis {
            level,
            dim,
            subsets,
            slot_of,
            sign_of,
            prod_sign,
            prod_index,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Generator subset of basis index `j` (bit `i-1` selects generator `i`).
    pub fn subset(&self, j: usize) -> u32 {
        self.subsets[j]
    }

    /// Basis index of a generator subset.
    pub fn index_of_subset(&self, mask: u32) -> usize {
        self.subsets.iter().position(|&m| m == mask).unwrap()
    }

    /// Signed product `e_i e_j = sign * e_m`, from the doubling recursion.
    pub fn product(&self, i: usize, j: usize) -> (i8, usize) {
        (self.prod_sign[i * self.dim + j], self.prod_index[i * self.dim + j])
    }

    /// The basis element `e_j` over any scalar.
    pub fn unit<S: Scalar>(&self, j: usize) -> CDElement<S> {
        let mut coords = vec![S::zero(); self.dim];
        coords[self.slot_of[j]] = S::from_i64(self.sign_of[j] as i64);
        CDElement::from_slot_coords(coords).unwrap()
    }

    /// Canonical coordinates `x_0..x_{2^k-1}` of `z = sum x_j e_j`.
    pub fn coords_of<S: Scalar>(&self, z: &CDElement<S>) -> Vec<S> {
        assert_eq!(z.dim(), self.dim);
        let slots = z.slot_coords();
        (0..self.dim)
            .map(|j| {
                let c = &slots[self.slot_of[j]];
                if self.sign_of[j] < 0 {
                    c.neg()
                } else {
                    c.clone()
                }
            })
            .collect()
    }

    pub fn from_coords<S: Scalar>(&self, coords: &[S]) -> CDElement<S> {
        assert_eq!(coords.len(), self.dim);
        let mut slots = vec![S::zero(); self.dim];
        for (j, c) in coords.iter().enumerate() {
            slots[self.slot_of[j]] = if self.sign_of[j] < 0 {
                c.neg()
            } else {
                c.clone()
            };
        }
        CDElement::from_slot_coords(slots).unwrap()
    }

    /// Product on canonical f64 coordinate vectors via the signed table.
    pub fn mul_canonical_f64(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.dim {
            let ai = a[i];
            if ai == 0.0 {
                continue;
            }
            let row = i * self.dim;
            for j in 0..self.dim {
                let bj = b[j];
                if bj == 0.0 {
                    continue;
                }
                out[self.prod_index[row + j]] += self.prod_sign[row + j] as f64 * ai * bj;
            }
        }
    }
}

fn slot_unit<S: Scalar>(level: u32, slot: usize) -> CDElement<S> {
    let mut coords = vec![S::zero(); 1 << level];
    coords[slot] = S::one();
    CDElement::from_slot_coords(coords).unwrap()
}

fn single_slot(z: &CDElement<Rat>) -> Option<(usize, i8)> {
    let mut found = None;
    for (i, c) in z.slot_coords().iter().enumerate() {
        if !c.is_zero() {
            if found.is_some() {
                return None;
            }
            let sign = if *c == Rat::one() {
                1i8
            } else if *c == Rat::from_i64(-1) {
                -1i8
            } else {
                return None;
            };
            found = Some((i, sign));
        }
    }
    found
}

static CACHE: OnceLock<Mutex<HashMap<u32, Arc<Basis>>>> = OnceLock::new();

/// The cached canonical basis for a level.
pub fn basis(level: u32) -> Arc<Basis> {
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(level)
        .or_insert_with(|| Arc::new(Basis::build(level)))
        .clone()
}

/// `e_i e_j` at the given level as `(sign, index)`; `(s, 0)` means the
/// scalar `s`.
pub fn basis_product(level: u32, i: usize, j: usize) -> (i8, usize) {
    basis(level).product(i, j)
}

/// Canonical basis unit `e_j`.
pub fn unit<S: Scalar>(level: u32, j: usize) -> CDElement<S> {
    basis(level).unit(j)
}

/// Canonical coordinates of `z`.
pub fn coords_of<S: Scalar>(z: &CDElement<S>) -> Vec<S> {
    basis(z.level()).coords_of(z)
}

/// Element from canonical coordinates.
pub fn from_coords<S: Scalar>(level: u32, coords: &[S]) -> CDElement<S> {
    basis(level).from_coords(coords)
}
