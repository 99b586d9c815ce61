//! JSON has no representation for infinities or NaN; these helpers write
//! such values as the strings `"inf"`, `"-inf"` and `"nan"`.

use serde::{Deserialize, Deserializer, Serializer};

#[derive(Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Text(String),
}

fn parse<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
    match r {
        Repr::Num(v) => Ok(v),
        Repr::Text(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(E::custom(format!("expected a number, got {other:?}"))),
        },
    }
}

pub mod float {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        parse(Repr::deserialize(d)?)
    }
}

pub mod opt_float {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => super::float::serialize(x, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<Repr>::deserialize(d)?.map(parse).transpose()
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Probe {
        #[serde(with = "super::float")]
        x: f64,
        #[serde(with = "super::opt_float", default)]
        y: Option<f64>,
    }

    #[test]
    fn non_finite_round_trip() {
        for x in [1.5, f64::INFINITY, f64::NEG_INFINITY, -0.0, 1e-300] {
            let p = Probe { x, y: Some(x) };
            let s = serde_json::to_string(&p).unwrap();
            let back: Probe = serde_json::from_str(&s).unwrap();
            assert_eq!(back, p);
            assert_eq!(back.x.to_bits(), x.to_bits());
        }
        let s = serde_json::to_string(&Probe { x: f64::NAN, y: None }).unwrap();
        assert_eq!(s, r#"{"x":"nan","y":null}"#);
        let back: Probe = serde_json::from_str(&s).unwrap();
        assert!(back.x.is_nan());
    }
}
