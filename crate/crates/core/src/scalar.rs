//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the decomposition is computed in (`f32` or `f64`).
pub trait Scalar:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or configuration value.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the concrete type.
    fn eps() -> Self;
}

impl Scalar for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// Serde adapters writing non-finite values as `"inf"`, `"-inf"` or `"nan"`,
/// since JSON has no literal for them.
pub(crate) mod nonfinite {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Scalar;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr<T: Scalar>(v: T) -> Repr {
        let x = v.as_f64();
        if x.is_finite() {
            Repr::Num(x)
        } else if x.is_nan() {
            Repr::Text("nan".into())
        } else if x > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    fn from_repr<T: Scalar, E: serde::de::Error>(r: Repr) -> Result<T, E> {
        let x = match r {
            Repr::Num(x) => x,
            Repr::Text(s) => match s.as_str() {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                "nan" => f64::NAN,
                other => return Err(E::custom(format!("`{other}` is not a number"))),
            },
        };
        Ok(T::of(x))
    }

    pub fn serialize<T: Scalar, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod trace {
        use super::*;

        pub fn serialize<T: Scalar, S: Serializer>(v: &[(T, T)], s: S) -> Result<S::Ok, S::Error> {
            let r: Vec<(Repr, Repr)> = v.iter().map(|&(a, b)| (to_repr(a), to_repr(b))).collect();
            r.serialize(s)
        }

        pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<Vec<(T, T)>, D::Error> {
            Vec::<(Repr, Repr)>::deserialize(d)?
                .into_iter()
                .map(|(a, b)| Ok((from_repr(a)?, from_repr(b)?)))
                .collect()
        }
    }

    pub mod traces {
        use super::*;

        pub fn serialize<T: Scalar, S: Serializer>(v: &[Vec<(T, T)>], s: S) -> Result<S::Ok, S::Error> {
            let r: Vec<Vec<(Repr, Repr)>> = v
                .iter()
                .map(|t| t.iter().map(|&(a, b)| (to_repr(a), to_repr(b))).collect())
                .collect();
            r.serialize(s)
        }

        pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<(T, T)>>, D::Error> {
            Vec::<Vec<(Repr, Repr)>>::deserialize(d)?
                .into_iter()
                .map(|t| t.into_iter().map(|(a, b)| Ok((from_repr(a)?, from_repr(b)?))).collect())
                .collect()
        }
    }

    pub mod list {
        use super::*;

        pub fn serialize<T: Scalar, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|&x| to_repr(x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<Vec<T>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
        }
    }
}
