//! Wire bridge to external agents.
//!
//! The endpoint runs as a child process speaking newline-delimited JSON over
//! standard streams: each request line carries the full observation plus the
//! previous step's raw tool response; each response line is one action. A
//! malformed response is tolerated (the step becomes a `wait` with a note);
//! a timeout or closed stream ends the episode as a harness error.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agent::{Action, Decision, Observation, Policy, PolicyError};
use crate::contract::ToolResponse;

pub const WIRE_VERSION: u32 = 1;

/// One request line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireRequest {
    pub v: u32,
    pub step: u32,
    pub observation: Observation,
    /// Raw response to the previous action; this is the only channel that
    /// carries profile values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_response: Option<ToolResponse>,
}

enum ExchangeError {
    Protocol(String),
    Timeout(String),
    Io(String),
}

pub struct WireAgent {
    child: Child,
    stdin: ChildStdin,
    lines: mpsc::Receiver<std::io::Result<String>>,
    timeout: Duration,
    name: String,
}

impl WireAgent {
    /// Spawn `command` through `sh -c`, with stdin/stdout piped for the
    /// protocol and stderr passed through for endpoint-side logging.
    pub fn spawn(command: &str, timeout: Duration) -> std::io::Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = child.stdout.take().expect("stdout was piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout,
            name: format!("external:{command}"),
        })
    }

    fn exchange(&mut self, request: &WireRequest) -> Result<Action, ExchangeError> {
        let line = serde_json::to_string(request).expect("request serializes");
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| ExchangeError::Io(format!("write to endpoint failed: {e}")))?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => serde_json::from_str::<Action>(&reply)
                .map_err(|e| ExchangeError::Protocol(format!("unparseable action '{reply}': {e}"))),
            Ok(Err(e)) => Err(ExchangeError::Io(format!("read from endpoint failed: {e}"))),
            Err(mpsc::RecvTimeoutError::Timeout) => Err(ExchangeError::Timeout(format!(
                "no action within {:?}",
                self.timeout
            ))),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(ExchangeError::Io("endpoint closed its stdout".to_string()))
            }
        }
    }
}

impl Policy for WireAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(
        &mut self,
        observation: &Observation,
        last_response: Option<&ToolResponse>,
    ) -> Result<Decision, PolicyError> {
        let request = WireRequest {
            v: WIRE_VERSION,
            step: observation.step,
            observation: observation.clone(),
            tool_response: last_response.cloned(),
        };
        match self.exchange(&request) {
            Ok(action) => Ok(Decision::act(action)),
            Err(ExchangeError::Protocol(msg)) => Ok(Decision {
                action: Action::Wait,
                note: Some(format!("protocol error, substituted wait: {msg}")),
            }),
            Err(ExchangeError::Timeout(msg)) => Err(PolicyError::Timeout(msg)),
            Err(ExchangeError::Io(msg)) => Err(PolicyError::Io(msg)),
        }
    }
}

impl Drop for WireAgent {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
