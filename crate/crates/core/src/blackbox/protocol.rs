//! Line-delimited JSON messages exchanged with external black boxes.
//!
//! ```text
//! -> {"type":"hello","version":1,"features":["age","job"]}
//! <- {"type":"ready","labels":["deny","grant"]}
//! -> {"type":"predict","id":0,"instances":[[22,"clerk"],[40,"other"]]}
//! <- {"type":"labels","id":0,"labels":["deny","grant"]}
//! ```
//!
//! Values follow schema column order; categorical values are strings and
//! continuous values are numbers.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::BlackBoxError;
use crate::data::{FeatureKind, FeatureSchema, FeatureValue, Instance};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Hello {
        version: u32,
        features: Vec<String>,
    },
    Ready {
        labels: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        version: Option<u32>,
    },
    Predict {
        id: u64,
        instances: Vec<Vec<Value>>,
    },
    Labels {
        id: u64,
        labels: Vec<String>,
    },
    Error {
        message: String,
    },
}

impl Message {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("protocol messages serialize")
    }

    pub fn parse(line: &str) -> Result<Message, BlackBoxError> {
        serde_json::from_str(line.trim()).map_err(|e| BlackBoxError::Protocol(format!("{e}: `{}`", line.trim())))
    }
}

pub fn encode_instance(schema: &FeatureSchema, x: &Instance) -> Vec<Value> {
    x.values()
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            FeatureValue::Category(c) => Value::String(schema.features[i].category_name(*c).to_string()),
            FeatureValue::Number(n) => serde_json::Number::from_f64(*n).map_or(Value::Null, Value::Number),
        })
        .collect()
}

pub fn decode_instance(schema: &FeatureSchema, values: &[Value]) -> Result<Instance, BlackBoxError> {
    if values.len() != schema.len() {
        return Err(BlackBoxError::ContractViolation(format!(
            "instance has {} values, schema has {} features",
            values.len(),
            schema.len()
        )));
    }
    values
        .iter()
        .zip(&schema.features)
        .map(|(v, spec)| match (&spec.kind, v) {
            (FeatureKind::Categorical { .. }, Value::String(s)) => spec
                .category_index(s)
                .map(FeatureValue::Category)
                .ok_or_else(|| BlackBoxError::ContractViolation(format!("unknown category `{s}` for `{}`", spec.name))),
            (FeatureKind::Continuous { .. }, Value::Number(n)) => n
                .as_f64()
                .map(FeatureValue::Number)
                .ok_or_else(|| BlackBoxError::ContractViolation(format!("bad number for `{}`", spec.name))),
            _ => Err(BlackBoxError::ContractViolation(format!(
                "value `{v}` has the wrong type for `{}`",
                spec.name
            ))),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Instance::new)
}
