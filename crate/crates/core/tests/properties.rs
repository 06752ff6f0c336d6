//! Property tests for the exact-arithmetic invariants.

use std::collections::HashMap;

use proptest::prelude::*;

use cdell_core::algebra::basis::{self, basis_product};
use cdell_core::algebra::CDElement;
use cdell_core::lattice::Lattice;
use cdell_core::number_field::{MQElement, MQField};
use cdell_core::scalar::{Rat, Scalar};

fn small_rat() -> impl Strategy<Value = Rat> {
    (-8i64..=8, 1i64..=8).prop_map(|(p, q)| Rat::new(p.into(), q.into()))
}

fn mq_element(field: MQField) -> impl Strategy<Value = MQElement> {
    let n = field.basis_len();
    proptest::collection::vec(small_rat(), n)
        .prop_map(move |coeffs| MQElement::from_coeffs(&field, coeffs))
}

fn cd_element(level: u32) -> impl Strategy<Value = CDElement<Rat>> {
    proptest::collection::vec(small_rat(), 1usize << level)
        .prop_map(|coords| CDElement::from_slot_coords(coords).unwrap())
}

fn q23() -> MQField {
    MQField::new(&[2, 3]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mq_field_axioms(a in mq_element(q23()), b in mq_element(q23()), c in mq_element(q23())) {
        prop_assert_eq!(a.mq_mul(&b), b.mq_mul(&a));
        prop_assert_eq!(a.mq_mul(&b).mq_mul(&c), a.mq_mul(&b.mq_mul(&c)));
        prop_assert_eq!(
            a.mq_mul(&b.mq_add(&c)),
            a.mq_mul(&b).mq_add(&a.mq_mul(&c))
        );
    }

    #[test]
    fn mq_inverse_roundtrip(a in mq_element(q23())) {
        prop_assume!(!a.mq_is_zero());
        let inv = a.mq_inverse().unwrap();
        prop_assert_eq!(a.mq_mul(&inv), MQField::new(&[2, 3]).unwrap().one());
    }

    #[test]
    fn mq_embed_is_multiplicative_within_bound(a in mq_element(q23()), b in mq_element(q23())) {
        let ab = a.mq_mul(&b);
        let ea = a.embed(53).unwrap();
        let eb = b.embed(53).unwrap();
        let eab = ab.embed(53).unwrap();
        let scale = eab.abs().max(ea.abs() * eb.abs()).max(1e-30);
        prop_assert!((eab - ea * eb).abs() <= 1e-13 * scale);
    }

    #[test]
    fn mq_display_roundtrips(a in mq_element(q23())) {
        let f = q23();
        let text = a.to_string();
        let back = MQElement::parse(&f, &text).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn conj_reverses_products(level in 0u32..=4, seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = cdell_core::algebra::identity::random_element(level, &mut rng);
        let b = cdell_core::algebra::identity::random_element(level, &mut rng);
        prop_assert_eq!(a.mul(&b).unwrap().conj(), b.conj().mul(&a.conj()).unwrap());
    }

    #[test]
    fn quadratic_identity(level in 0u32..=4, seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z = cdell_core::algebra::identity::random_element(level, &mut rng);
        prop_assert!(z.quadratic_residual().is_zero());
    }

    #[test]
    fn octonion_norm_composition_and_moufang(
        a in cd_element(3), b in cd_element(3), c in cd_element(3)
    ) {
        prop_assert_eq!(a.mul(&b).unwrap().norm(), a.norm().mul(&b.norm()));
        let lhs = a.mul(&b).unwrap().mul(&c.mul(&a).unwrap()).unwrap();
        let rhs = a.mul(&b.mul(&c).unwrap().mul(&a).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
        // flexibility
        prop_assert_eq!(
            a.mul(&b).unwrap().mul(&a).unwrap(),
            a.mul(&b.mul(&a).unwrap()).unwrap()
        );
    }

    #[test]
    fn basis_product_agrees_with_cd_mul(level in 1u32..=4, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = 1usize << level;
        let i = rng.gen_range(0..dim);
        let j = rng.gen_range(0..dim);
        let (sign, m) = basis_product(level, i, j);
        let prod = basis::unit::<Rat>(level, i)
            .mul(&basis::unit::<Rat>(level, j))
            .unwrap();
        let expect = basis::unit::<Rat>(level, m).scale(&Rat::from_i64(sign as i64));
        prop_assert_eq!(prod, expect);
    }

    #[test]
    fn lattice_membership_roundtrip(coeffs in proptest::collection::vec(-6i64..=6, 8)) {
        let l = Lattice::canonical(&[2, 3, 5], &HashMap::new()).unwrap();
        let mut z = CDElement::<MQElement>::zero(3);
        for (h, &c) in coeffs.iter().enumerate() {
            if c != 0 {
                z = z.add(&l.generator(h).scale(&MQElement::from_i64(c)));
            }
        }
        prop_assert_eq!(l.contains(&z), Some(coeffs));
    }
}
