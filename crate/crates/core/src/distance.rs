//! Mixed-type instance distances with values in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, FeatureSchema, FeatureValue, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    /// Weighted mix of categorical mismatch rate and range-normalized
    /// Euclidean distance over continuous features.
    #[default]
    Neuclid,
    /// Cosine distance over one-hot / range-scaled encodings.
    Cosine,
    /// Mean per-feature normalized absolute difference.
    Minmax,
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::Neuclid => "neuclid",
            DistanceKind::Cosine => "cosine",
            DistanceKind::Minmax => "minmax",
        })
    }
}

impl FromStr for DistanceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "neuclid" => Ok(DistanceKind::Neuclid),
            "cosine" => Ok(DistanceKind::Cosine),
            "minmax" => Ok(DistanceKind::Minmax),
            other => Err(format!("unknown distance `{other}` (expected neuclid, cosine or minmax)")),
        }
    }
}

/// Distance between two schema-valid instances.
///
/// Panics if either instance does not have the schema's arity.
pub fn distance(kind: DistanceKind, schema: &FeatureSchema, x: &Instance, z: &Instance) -> f64 {
    assert!(
        x.len() == schema.len() && z.len() == schema.len(),
        "instance arity does not match schema"
    );
    if x == z {
        return 0.0;
    }
    match kind {
        DistanceKind::Neuclid => neuclid(schema, x, z),
        DistanceKind::Cosine => cosine(schema, x, z),
        DistanceKind::Minmax => minmax(schema, x, z),
    }
}

fn scaled_gap(min: f64, max: f64, a: f64, b: f64) -> f64 {
    let range = max - min;
    if range <= 0.0 {
        0.0
    } else {
        ((a - b) / range).abs().min(1.0)
    }
}

fn neuclid(schema: &FeatureSchema, x: &Instance, z: &Instance) -> f64 {
    let m = schema.len();
    if m == 0 {
        return 0.0;
    }
    let mut categorical = 0usize;
    let mut mismatches = 0usize;
    let mut squared = 0.0;
    for (i, spec) in schema.features.iter().enumerate() {
        match (&spec.kind, x.get(i), z.get(i)) {
            (FeatureKind::Categorical { .. }, a, b) => {
                categorical += 1;
                if a != b {
                    mismatches += 1;
                }
            }
            (FeatureKind::Continuous { min, max }, FeatureValue::Number(a), FeatureValue::Number(b)) => {
                let g = scaled_gap(*min, *max, *a, *b);
                squared += g * g;
            }
            _ => panic!("value kind does not match feature `{}`", spec.name),
        }
    }
    let continuous = m - categorical;
    let simple_match = if categorical == 0 {
        0.0
    } else {
        mismatches as f64 / categorical as f64
    };
    let norm_euclid = if continuous == 0 {
        0.0
    } else {
        (squared / continuous as f64).sqrt().clamp(0.0, 1.0)
    };
    let d = (categorical as f64 / m as f64) * simple_match + (continuous as f64 / m as f64) * norm_euclid;
    d.clamp(0.0, 1.0)
}

fn cosine(schema: &FeatureSchema, x: &Instance, z: &Instance) -> f64 {
    // one-hot categoricals contribute 1 to the norms and 1 to the dot
    // product when they agree; continuous values are scaled into [0, 1]
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut nz = 0.0;
    for (i, spec) in schema.features.iter().enumerate() {
        match (&spec.kind, x.get(i), z.get(i)) {
            (FeatureKind::Categorical { .. }, a, b) => {
                nx += 1.0;
                nz += 1.0;
                if a == b {
                    dot += 1.0;
                }
            }
            (FeatureKind::Continuous { min, max }, FeatureValue::Number(a), FeatureValue::Number(b)) => {
                let range = max - min;
                let (sa, sb) = if range <= 0.0 {
                    (0.0, 0.0)
                } else {
                    (((a - min) / range).clamp(0.0, 1.0), ((b - min) / range).clamp(0.0, 1.0))
                };
                dot += sa * sb;
                nx += sa * sa;
                nz += sb * sb;
            }
            _ => panic!("value kind does not match feature `{}`", spec.name),
        }
    }
    if nx == 0.0 && nz == 0.0 {
        return 0.0;
    }
    if nx == 0.0 || nz == 0.0 {
        return 1.0;
    }
    // encodings are non-negative, so the similarity lies in [0, 1]
    (1.0 - dot / (nx.sqrt() * nz.sqrt())).clamp(0.0, 1.0)
}

fn minmax(schema: &FeatureSchema, x: &Instance, z: &Instance) -> f64 {
    let m = schema.len();
    if m == 0 {
        return 0.0;
    }
    let total: f64 = schema
        .features
        .iter()
        .enumerate()
        .map(|(i, spec)| match (&spec.kind, x.get(i), z.get(i)) {
            (FeatureKind::Categorical { .. }, a, b) => f64::from(u8::from(a != b)),
            (FeatureKind::Continuous { min, max }, FeatureValue::Number(a), FeatureValue::Number(b)) => {
                scaled_gap(*min, *max, *a, *b)
            }
            _ => panic!("value kind does not match feature `{}`", spec.name),
        })
        .sum();
    (total / m as f64).clamp(0.0, 1.0)
}
