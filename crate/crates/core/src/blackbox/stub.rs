//! Server side of the wire protocol, used by the bundled stub black box
//! and by protocol tests. Fault modes deliberately break the contract.

use std::io::{BufRead, Write};
use std::str::FromStr;

use super::protocol::{decode_instance, Message, PROTOCOL_VERSION};
use super::{BlackBoxError, Predictor};
use crate::data::FeatureSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StubFault {
    #[default]
    None,
    /// Drops the last label of every response.
    WrongLength,
    /// Answers with an id that does not match the request.
    WrongId,
    /// Announces an unsupported protocol version.
    BadVersion,
    /// Answers predictions with a line that is not JSON.
    Garbage,
    /// Never answers predictions.
    Silent,
}

impl FromStr for StubFault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => StubFault::None,
            "wrong-length" => StubFault::WrongLength,
            "wrong-id" => StubFault::WrongId,
            "bad-version" => StubFault::BadVersion,
            "garbage" => StubFault::Garbage,
            "silent" => StubFault::Silent,
            other => return Err(format!("unknown fault `{other}`")),
        })
    }
}

pub struct StubServer {
    schema: FeatureSchema,
    model: Box<dyn Predictor>,
    fault: StubFault,
}

impl StubServer {
    pub fn new(schema: FeatureSchema, model: impl Predictor + 'static, fault: StubFault) -> Self {
        StubServer {
            schema,
            model: Box::new(model),
            fault,
        }
    }

    /// Response line for one request line; `None` means stay silent.
    pub fn respond(&self, line: &str) -> Option<String> {
        let msg = match Message::parse(line) {
            Ok(m) => m,
            Err(e) => return Some(Message::Error { message: e.to_string() }.to_line()),
        };
        let reply = match msg {
            Message::Hello { version, .. } if version != PROTOCOL_VERSION => Message::Error {
                message: format!("unsupported protocol version {version}"),
            },
            Message::Hello { .. } => Message::Ready {
                labels: self.schema.target.labels.to_vec(),
                version: (self.fault == StubFault::BadVersion).then_some(PROTOCOL_VERSION + 1),
            },
            Message::Predict { id, instances } => {
                match self.fault {
                    StubFault::Silent => return None,
                    StubFault::Garbage => return Some("%%% not a message %%%".into()),
                    _ => {}
                }
                match self.predict(&instances) {
                    Ok(mut labels) => {
                        if self.fault == StubFault::WrongLength {
                            labels.pop();
                        }
                        let id = if self.fault == StubFault::WrongId { id + 1 } else { id };
                        Message::Labels { id, labels }
                    }
                    Err(e) => Message::Error { message: e.to_string() },
                }
            }
            other => Message::Error {
                message: format!("unexpected message {}", other.to_line()),
            },
        };
        Some(reply.to_line())
    }

    fn predict(&self, instances: &[Vec<serde_json::Value>]) -> Result<Vec<String>, BlackBoxError> {
        let xs = instances
            .iter()
            .map(|v| decode_instance(&self.schema, v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self
            .model
            .predict(&xs)?
            .into_iter()
            .map(|l| self.schema.label_name(l).to_string())
            .collect())
    }

    /// Serves requests line by line until the reader is exhausted.
    pub fn serve_lines<R: BufRead, W: Write>(&self, reader: R, mut writer: W) -> std::io::Result<()> {
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(reply) = self.respond(&line) {
                writeln!(writer, "{reply}")?;
                writer.flush()?;
            }
        }
        Ok(())
    }
}
