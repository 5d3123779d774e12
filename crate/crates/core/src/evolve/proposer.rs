//! Line-delimited JSON protocol for out-of-process proposers.
//!
//! Each request is one JSON object on one line written to the proposer's
//! stdin; the proposer answers with one JSON object on one line on stdout:
//! either `{"expr_text": "..."}` or `{"error": "..."}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::exprlang::{BatchStat, BinaryOp, CostModel, UnaryOp};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

pub const DEFAULT_INSTRUCTION: &str = "Act as a Senior Machine Learning Researcher specializing in model \
robustness and OOD (Out-of-Distribution) generalization. Your task is to iteratively improve the OOD \
Evaluation Metric by modifying the activation functions in the provided code, where larger values are \
better. Theoretical Justification: For each proposal, explicitly explain why it mathematically supports \
OOD generalization better than the baseline.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParentRecord {
    pub expr_text: String,
    pub fitness: f64,
    pub flop_cost: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRequest {
    pub protocol_version: u32,
    pub instruction: String,
    pub parents: Vec<ParentRecord>,
    /// Maximum FLOPs per element.
    pub budget: u64,
    pub grammar_reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ProposalResponse {
    Proposal { expr_text: String },
    Error { error: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProposerError {
    #[error("proposer did not answer within {0:?}")]
    Timeout(Duration),
    #[error("proposer protocol error: {0}")]
    Protocol(String),
    #[error("proposer i/o error: {0}")]
    Io(String),
}

impl ProposalRequest {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

impl ProposalResponse {
    pub fn parse_line(line: &str) -> Result<Self, ProposerError> {
        serde_json::from_str(line.trim_end()).map_err(|e| ProposerError::Protocol(format!("{e}: `{}`", line.trim_end())))
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

/// Plain-text grammar summary sent with every request.
pub fn grammar_reference(model: &CostModel) -> String {
    let list = |names: Vec<&str>| {
        names
            .into_iter()
            .map(|n| format!("{n}={}", model.op_cost(n)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!(
        "expr := x | NUMBER | (UNARY expr) | (BINARY expr expr) | (STAT expr)\n\
         UNARY: {}\nBINARY: {}\nSTAT: {}\n\
         The exponent of pow must be a NUMBER. STAT nodes reduce over the whole tensor.\n\
         Numbers after each name are FLOPs per element; x and NUMBER are free.",
        list(UnaryOp::ALL.iter().map(|o| o.name()).collect()),
        list(BinaryOp::ALL.iter().map(|o| o.name()).collect()),
        list(BatchStat::ALL.iter().map(|o| o.name()).collect()),
    )
}

/// One request, one response.
pub trait ProposerChannel {
    fn exchange(&mut self, request_line: &str, timeout: Duration) -> Result<String, ProposerError>;
}

/// In-process channel backed by a closure; used for tests and embedding.
pub struct FnChannel<F>(pub F);

impl<F> ProposerChannel for FnChannel<F>
where
    F: FnMut(&str) -> Result<String, ProposerError>,
{
    fn exchange(&mut self, request_line: &str, _timeout: Duration) -> Result<String, ProposerError> {
        (self.0)(request_line)
    }
}

/// A proposer that answers with the first parent unchanged.
pub fn echo_channel() -> FnChannel<impl FnMut(&str) -> Result<String, ProposerError>> {
    FnChannel(|line: &str| {
        let req: ProposalRequest =
            serde_json::from_str(line).map_err(|e| ProposerError::Protocol(e.to_string()))?;
        let first = req
            .parents
            .first()
            .ok_or_else(|| ProposerError::Protocol("no parents".into()))?;
        Ok(ProposalResponse::Proposal {
            expr_text: first.expr_text.clone(),
        }
        .to_line())
    })
}

#[cfg(not(target_arch = "wasm32"))]
pub use process::ChildProcessChannel;

#[cfg(not(target_arch = "wasm32"))]
mod process {
    use std::io::{BufRead, BufReader, Write};
    use std::process::{Child, ChildStdin, Command, Stdio};
    use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
    use std::thread;
    use std::time::Duration;

    use super::{ProposerChannel, ProposerError};

    struct Running {
        child: Child,
        stdin: ChildStdin,
        lines: Receiver<std::io::Result<String>>,
    }

    /// Talks to a child process over its stdin/stdout. The process is
    /// started lazily and restarted after a timeout, so a late answer can
    /// never be mistaken for the reply to the next request.
    pub struct ChildProcessChannel {
        program: String,
        args: Vec<String>,
        running: Option<Running>,
    }

    impl ChildProcessChannel {
        pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
            Self {
                program: program.into(),
                args,
                running: None,
            }
        }

        fn start(&mut self) -> Result<&mut Running, ProposerError> {
            if self.running.is_none() {
                let mut child = Command::new(&self.program)
                    .args(&self.args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| ProposerError::Io(format!("spawning {}: {e}", self.program)))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let (tx, rx) = mpsc::channel();
                thread::spawn(move || {
                    for line in BufReader::new(stdout).lines() {
                        if tx.send(line).is_err() {
                            break;
                        }
                    }
                });
                self.running = Some(Running {
                    child,
                    stdin,
                    lines: rx,
                });
            }
            Ok(self.running.as_mut().expect("just started"))
        }

        fn stop(&mut self) {
            if let Some(mut r) = self.running.take() {
                let _ = r.child.kill();
                let _ = r.child.wait();
            }
        }
    }

    impl ProposerChannel for ChildProcessChannel {
        fn exchange(&mut self, request_line: &str, timeout: Duration) -> Result<String, ProposerError> {
            let running = self.start()?;
            let sent = writeln!(running.stdin, "{request_line}").and_then(|_| running.stdin.flush());
            if let Err(e) = sent {
                self.stop();
                return Err(ProposerError::Io(format!("writing request: {e}")));
            }
            let result = match running.lines.recv_timeout(timeout) {
                Ok(Ok(line)) => return Ok(line),
                Ok(Err(e)) => Err(ProposerError::Io(format!("reading response: {e}"))),
                Err(RecvTimeoutError::Timeout) => Err(ProposerError::Timeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    Err(ProposerError::Protocol("proposer closed its output".into()))
                }
            };
            self.stop();
            result
        }
    }

    impl Drop for ChildProcessChannel {
        fn drop(&mut self) {
            self.stop();
        }
    }
}
