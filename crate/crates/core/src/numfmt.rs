//! Decimal-string encoding of `f64` values for model files.
//!
//! Rust's `Display` for `f64` emits the shortest string that parses back to the
//! same bits, so `parse(format(x)) == x` for every finite value.

use serde::{Deserialize, Deserializer, Serializer};

pub fn format(x: f64) -> String {
    format!("{x}")
}

pub fn parse(s: &str) -> Result<f64, std::num::ParseFloatError> {
    s.parse()
}

/// `#[serde(with = "crate::numfmt::vec")]` for `Vec<f64>` stored as decimal strings.
pub mod vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&super::format(*v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<String> = Vec::deserialize(d)?;
        raw.iter()
            .map(|s| super::parse(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// `#[serde(with = "crate::numfmt::scalar")]` for a single `f64`.
pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format(*value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let raw = String::deserialize(d)?;
        super::parse(&raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn decimal_strings_round_trip_bits(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back = super::parse(&super::format(x)).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
