//! Lossless value formatting for reports.
//!
//! Hypercomplex values serialize as arrays of per-coordinate strings on the
//! canonical basis: floats use the shortest round-trip decimal form, exact
//! scalars their rational/radical form (e.g. `"3/2*sqrt(6)"`).

use crate::algebra::basis;
use crate::algebra::CDElement;
use crate::number_field::MQElement;
use crate::scalar::Rat;

pub fn f64_string(v: f64) -> String {
    format!("{v}")
}

/// Canonical coordinates of a float element as shortest round-trip strings.
pub fn float_coords(z: &CDElement<f64>) -> Vec<String> {
    basis::coords_of(z).iter().map(|v| f64_string(*v)).collect()
}

/// Canonical coordinates of an exact element as rational/radical strings.
pub fn exact_coords(z: &CDElement<MQElement>) -> Vec<String> {
    basis::coords_of(z).iter().map(|c| c.to_string()).collect()
}

/// Canonical coordinates of a rational element.
pub fn rat_coords(z: &CDElement<Rat>) -> Vec<String> {
    basis::coords_of(z).iter().map(|c| c.to_string()).collect()
}

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::basis::unit;
    use crate::number_field::MQField;

    #[test]
    fn float_coords_roundtrip() {
        let z = basis::from_coords(3, &[0.1, -2.5e-17, 3.0, 0.0, 1.0 / 3.0, 2.0, -1.0, 0.25]);
        let strings = float_coords(&z);
        let back: Vec<f64> = strings.iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(back, basis::coords_of(&z));
    }

    #[test]
    fn exact_coords_format() {
        let f = MQField::new(&[2, 3, 5]).unwrap();
        let s = MQElement::parse(&f, "3/2*sqrt(6)").unwrap();
        let z = unit::<MQElement>(3, 4).scale(&s);
        let strings = exact_coords(&z);
        assert_eq!(strings[4], "3/2*sqrt(6)");
        assert_eq!(strings[0], "0");
    }
}
