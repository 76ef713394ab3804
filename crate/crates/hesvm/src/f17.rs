//! Serde helpers writing reals as decimal with 17 significant digits
//! (`d.dddddddddddddddde±x`), which round-trips every finite double.

use serde::de::Deserialize;
use serde::ser::{Error, SerializeSeq};
use serde::{Deserializer, Serializer};
use serde_json::value::RawValue;

pub fn format(v: f64) -> String {
    format!("{v:.16e}")
}

fn raw(v: f64) -> Result<Box<RawValue>, String> {
    if !v.is_finite() {
        return Err(format!("non-finite value {v}"));
    }
    RawValue::from_string(format(v)).map_err(|e| e.to_string())
}

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&raw(*v).map_err(S::Error::custom)?, s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    f64::deserialize(d)
}

struct Row<'a>(&'a [f64]);

impl serde::Serialize for Row<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for &v in self.0 {
            seq.serialize_element(&raw(v).map_err(S::Error::custom)?)?;
        }
        seq.end()
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(&Row(v), s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<f64>::deserialize(d)
    }
}

pub mod rows {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for r in v {
            seq.serialize_element(&Row(r))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        Vec::<Vec<f64>>::deserialize(d)
    }
}

pub mod pair {
    use super::*;

    pub fn serialize<S: Serializer>(v: &(f64, f64), s: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(&Row(&[v.0, v.1]), s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(f64, f64), D::Error> {
        <(f64, f64)>::deserialize(d)
    }
}
