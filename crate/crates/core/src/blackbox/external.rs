//! Adapters for black boxes living in another process or behind HTTP.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::protocol::{encode_instance, Message, PROTOCOL_VERSION};
use super::{BlackBox, BlackBoxError, Predictor};
use crate::data::{FeatureSchema, Instance, Label};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// One request, one response.
trait Exchange: Send {
    fn exchange(&mut self, msg: &Message) -> Result<Message, BlackBoxError>;
}

struct ProcessChannel {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl ProcessChannel {
    fn spawn(command: &str, timeout: Duration) -> Result<Self, BlackBoxError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(format!("exec {command}"))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BlackBoxError::Transport(format!("cannot spawn `{command}`: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ProcessChannel {
            child,
            stdin,
            lines: rx,
            timeout,
        })
    }
}

impl Exchange for ProcessChannel {
    fn exchange(&mut self, msg: &Message) -> Result<Message, BlackBoxError> {
        let io = |e: std::io::Error| BlackBoxError::Transport(e.to_string());
        writeln!(self.stdin, "{}", msg.to_line()).map_err(io)?;
        self.stdin.flush().map_err(io)?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Message::parse(&line),
            Ok(Err(e)) => Err(io(e)),
            Err(RecvTimeoutError::Timeout) => Err(BlackBoxError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(BlackBoxError::Transport("black box closed its output".into())),
        }
    }
}

impl Drop for ProcessChannel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct HttpChannel {
    agent: ureq::Agent,
    url: String,
    timeout: Duration,
}

impl Exchange for HttpChannel {
    fn exchange(&mut self, msg: &Message) -> Result<Message, BlackBoxError> {
        let to_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => BlackBoxError::Timeout(self.timeout),
            other => BlackBoxError::Transport(other.to_string()),
        };
        let mut response = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(msg.to_line())
            .map_err(to_err)?;
        let body = response.body_mut().read_to_string().map_err(to_err)?;
        Message::parse(&body)
    }
}

struct ExternalPredictor {
    channel: Mutex<Box<dyn Exchange>>,
    schema: FeatureSchema,
    labels: HashMap<String, Label>,
    next_id: AtomicU64,
}

impl ExternalPredictor {
    fn handshake(mut channel: Box<dyn Exchange>, schema: &FeatureSchema) -> Result<Self, BlackBoxError> {
        let hello = Message::Hello {
            version: PROTOCOL_VERSION,
            features: schema.feature_names().into_iter().map(String::from).collect(),
        };
        let labels = match channel.exchange(&hello)? {
            Message::Ready { version: Some(v), .. } if v != PROTOCOL_VERSION => {
                return Err(BlackBoxError::VersionMismatch {
                    expected: PROTOCOL_VERSION,
                    found: v,
                })
            }
            Message::Ready { labels, .. } => labels,
            Message::Error { message } => return Err(BlackBoxError::ContractViolation(message)),
            other => {
                return Err(BlackBoxError::ContractViolation(format!(
                    "expected a ready message, got {}",
                    other.to_line()
                )))
            }
        };
        let mut expected = schema.target.labels.to_vec();
        let mut announced = labels.clone();
        expected.sort();
        announced.sort();
        if expected != announced {
            return Err(BlackBoxError::ContractViolation(format!(
                "black box announced labels {labels:?}, schema expects {:?}",
                schema.target.labels
            )));
        }
        let labels = schema.target.labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Ok(ExternalPredictor {
            channel: Mutex::new(channel),
            schema: schema.clone(),
            labels,
            next_id: AtomicU64::new(0),
        })
    }
}

impl Predictor for ExternalPredictor {
    fn predict(&self, xs: &[Instance]) -> Result<Vec<Label>, BlackBoxError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let request = Message::Predict {
            id,
            instances: xs.iter().map(|x| encode_instance(&self.schema, x)).collect(),
        };
        let response = {
            let mut channel = self.channel.lock().unwrap_or_else(|p| p.into_inner());
            channel.exchange(&request)?
        };
        let labels = match response {
            Message::Labels { id: got, labels } => {
                if got != id {
                    return Err(BlackBoxError::ContractViolation(format!(
                        "response id {got} does not match request id {id}"
                    )));
                }
                labels
            }
            Message::Error { message } => return Err(BlackBoxError::ContractViolation(message)),
            other => {
                return Err(BlackBoxError::ContractViolation(format!(
                    "expected a labels message, got {}",
                    other.to_line()
                )))
            }
        };
        if labels.len() != xs.len() {
            return Err(BlackBoxError::ContractViolation(format!(
                "{} labels returned for {} instances",
                labels.len(),
                xs.len()
            )));
        }
        labels
            .iter()
            .map(|l| {
                self.labels
                    .get(l)
                    .copied()
                    .ok_or_else(|| BlackBoxError::ContractViolation(format!("unknown label `{l}`")))
            })
            .collect()
    }
}

/// Connects to an external black box. `target` is either an `http://` or
/// `https://` URL, or a shell command whose standard streams carry the
/// protocol. The handshake completes before this returns.
pub fn connect_external(target: &str, schema: &FeatureSchema) -> Result<BlackBox, BlackBoxError> {
    connect_external_with_timeout(target, schema, DEFAULT_TIMEOUT)
}

pub fn connect_external_with_timeout(target: &str, schema: &FeatureSchema, timeout: Duration) -> Result<BlackBox, BlackBoxError> {
    let channel: Box<dyn Exchange> = if target.starts_with("http://") || target.starts_with("https://") {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Box::new(HttpChannel {
            agent,
            url: target.to_string(),
            timeout,
        })
    } else {
        Box::new(ProcessChannel::spawn(target, timeout)?)
    };
    Ok(BlackBox::new(ExternalPredictor::handshake(channel, schema)?))
}
