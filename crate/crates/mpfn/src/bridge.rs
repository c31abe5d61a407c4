//! Client for external predictors speaking newline-delimited JSON over a
//! child process's stdin/stdout.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use mixturepfn_core::micp::Prompt;
use mixturepfn_core::predictor::{
    validate_external_rows, Capabilities, InContextPredictor, PredictError, PredictorKind,
};
use mixturepfn_core::Matrix;
use serde::{Deserialize, Serialize};

/// Environment variable overriding the external predictor command.
pub const BRIDGE_CMD_ENV: &str = "MPFN_BRIDGE_CMD";

#[derive(Debug, Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request<'a> {
    Hello,
    Predict {
        ctx_x: Vec<&'a [f64]>,
        ctx_y: &'a [usize],
        qry_x: Vec<&'a [f64]>,
        n_classes: usize,
        n_ensemble: usize,
        seed: u64,
    },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Reply {
    Hello {
        max_context: usize,
        max_features: usize,
        max_classes: usize,
        #[serde(default)]
        supports_ensembling: Option<bool>,
    },
    Probs {
        rows: Vec<Vec<f64>>,
    },
    Error {
        msg: String,
    },
}

pub fn encode_predict(prompt: &Prompt, n_ensemble: usize, seed: u64) -> String {
    let req = Request::Predict {
        ctx_x: prompt.context_features.iter_rows().collect(),
        ctx_y: &prompt.context_labels,
        qry_x: prompt.query_features.iter_rows().collect(),
        n_classes: prompt.n_classes,
        n_ensemble,
        seed,
    };
    serde_json::to_string(&req).expect("finite numbers serialize")
}

/// One bridge session; requests are strictly sequential.
pub struct ExternalPredictor {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    caps: Capabilities,
    /// Seed sent with single-member requests.
    pub seed: u64,
}

fn unavailable(e: impl std::fmt::Display) -> PredictError {
    PredictError::BridgeUnavailable(e.to_string())
}

impl ExternalPredictor {
    /// Launches `command` through the shell and performs the handshake.
    pub fn spawn(command: &str) -> Result<Self, PredictError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| unavailable(format!("cannot start `{command}`: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut this = Self {
            child,
            stdin,
            stdout,
            caps: Capabilities::UNBOUNDED,
            seed: 0,
        };
        match this.exchange(&serde_json::to_string(&Request::Hello).expect("static"))? {
            Reply::Hello {
                max_context,
                max_features,
                max_classes,
                supports_ensembling,
            } => {
                this.caps = Capabilities {
                    max_context,
                    max_features,
                    max_classes,
                    supports_ensembling: supports_ensembling.unwrap_or(true),
                };
                Ok(this)
            }
            other => Err(PredictError::ProtocolViolation(format!(
                "expected hello reply, got {other:?}"
            ))),
        }
    }

    fn exchange(&mut self, line: &str) -> Result<Reply, PredictError> {
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.write_all(b"\n"))
            .and_then(|_| self.stdin.flush())
            .map_err(unavailable)?;
        let mut buf = String::new();
        let n = self.stdout.read_line(&mut buf).map_err(unavailable)?;
        if n == 0 {
            return Err(unavailable("bridge closed its output"));
        }
        serde_json::from_str(buf.trim_end())
            .map_err(|e| PredictError::ProtocolViolation(format!("unparseable reply: {e}")))
    }

    fn request(
        &mut self,
        prompt: &Prompt,
        n_ensemble: usize,
        seed: u64,
    ) -> Result<Matrix, PredictError> {
        self.caps.check(prompt)?;
        match self.exchange(&encode_predict(prompt, n_ensemble, seed))? {
            Reply::Probs { rows } => {
                validate_external_rows(rows, prompt.n_queries(), prompt.n_classes)
            }
            Reply::Error { msg } => Err(PredictError::ProtocolViolation(format!(
                "bridge error: {msg}"
            ))),
            other => Err(PredictError::ProtocolViolation(format!(
                "unexpected reply {other:?}"
            ))),
        }
    }

    /// Sends `shutdown` and reaps the child.
    pub fn shutdown(mut self) {
        self.close();
    }

    fn close(&mut self) {
        let _ = self
            .stdin
            .write_all(b"{\"op\":\"shutdown\"}\n")
            .and_then(|_| self.stdin.flush());
        if !matches!(self.child.try_wait(), Ok(Some(_))) {
            // give a well-behaved bridge a moment before killing it
            for _ in 0..50 {
                if matches!(self.child.try_wait(), Ok(Some(_))) {
                    return;
                }
                std::thread::sleep(std::time::Duration::from_millis(10));
            }
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        self.close();
    }
}

impl InContextPredictor for ExternalPredictor {
    fn kind(&self) -> PredictorKind {
        PredictorKind::External
    }

    fn capabilities(&self) -> Capabilities {
        self.caps
    }

    fn predict(&mut self, prompt: &Prompt) -> Result<Matrix, PredictError> {
        let seed = self.seed;
        self.request(prompt, 1, seed)
    }

    fn predict_ensembled(
        &mut self,
        prompt: &Prompt,
        n_ensemble: usize,
        seed: u64,
    ) -> Result<Matrix, PredictError> {
        self.request(prompt, n_ensemble, seed)
    }
}
