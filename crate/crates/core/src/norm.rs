//! The three norm orders used for perturbation budgets and their duals.

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// Norm order for perturbations (`p`) and gradient magnitudes (`q`).
///
/// Only the three classical orders are supported; the dual pairing is
/// 1 ↔ ∞ and 2 ↔ 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PNorm {
    L1,
    L2,
    LInf,
}

impl PNorm {
    /// The dual order `q` with `1/p + 1/q = 1`.
    pub fn dual(self) -> PNorm {
        match self {
            PNorm::L1 => PNorm::LInf,
            PNorm::L2 => PNorm::L2,
            PNorm::LInf => PNorm::L1,
        }
    }

    /// Evaluates `‖v‖_p`.
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            PNorm::L1 => v.iter().map(|x| x.abs()).sum(),
            PNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            PNorm::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

impl std::fmt::Display for PNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PNorm::L1 => write!(f, "1"),
            PNorm::L2 => write!(f, "2"),
            PNorm::LInf => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for PNorm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(PNorm::L1),
            "2" => Ok(PNorm::L2),
            "inf" | "infinity" | "max" => Ok(PNorm::LInf),
            other => Err(format!(
                "unsupported norm order {other:?} (use 1, 2 or inf)"
            )),
        }
    }
}

// Serialized as the JSON number 1 or 2, and as the string "inf" for the
// maximum norm, so config echoes read naturally.
impl Serialize for PNorm {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            PNorm::L1 => serializer.serialize_u64(1),
            PNorm::L2 => serializer.serialize_u64(2),
            PNorm::LInf => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(1) => Ok(PNorm::L1),
            Raw::Num(2) => Ok(PNorm::L2),
            Raw::Num(n) => Err(de::Error::custom(format!("unsupported norm order {n}"))),
            Raw::Text(s) => s.parse().map_err(de::Error::custom),
        }
    }
}
