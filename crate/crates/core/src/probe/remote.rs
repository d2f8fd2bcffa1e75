//! Out-of-process adapters speaking a line-delimited JSON protocol.
//!
//! For every loss query the frames are written to a temporary `.rvclip` file
//! (f32 samples) and one request line is sent on the child's stdin:
//!
//! ```text
//! {"frames_path": "...", "timestep": 91, "seed": 123, "prompt": "...", "loss_mask": [true, ...]}
//! ```
//!
//! The child answers with one line, either `{"loss": 0.123}` or
//! `{"error": "message"}`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{AdapterError, DenoiserAdapter, LossRequest};
use crate::clipfile::{self, SampleType};
use crate::preprocess::ModelSpec;

#[derive(Debug, Serialize, Deserialize)]
pub struct WireRequest {
    pub frames_path: String,
    pub timestep: u32,
    pub seed: u64,
    pub prompt: String,
    pub loss_mask: Vec<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default)]
    pub loss: Option<f64>,
    #[serde(default)]
    pub error: Option<String>,
}

struct Pipe {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

pub struct ProcessAdapter {
    spec: ModelSpec,
    pipe: Mutex<Pipe>,
    scratch: tempfile::TempDir,
    counter: AtomicU64,
}

impl ProcessAdapter {
    /// Spawns `program args...`; the child lives as long as the adapter.
    pub fn spawn(spec: ModelSpec, program: &str, args: &[String]) -> Result<Self, AdapterError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AdapterError::Transport(format!("cannot start {program}: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let scratch = tempfile::tempdir().map_err(|e| AdapterError::Transport(e.to_string()))?;
        Ok(Self {
            spec,
            pipe: Mutex::new(Pipe { child, stdin, stdout }),
            scratch,
            counter: AtomicU64::new(0),
        })
    }

    /// Parses a `process:<command line>` declaration (whitespace separated).
    pub fn from_declaration(spec: ModelSpec, decl: &str) -> Result<Self, AdapterError> {
        let cmd = decl
            .strip_prefix("process:")
            .ok_or_else(|| AdapterError::Transport(format!("not a process adapter: {decl:?}")))?;
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| AdapterError::Transport("empty adapter command".into()))?;
        let args: Vec<String> = parts.collect();
        Self::spawn(spec, &program, &args)
    }

    fn frames_path(&self) -> PathBuf {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        self.scratch.path().join(format!("q{n}.{}", clipfile::EXTENSION))
    }
}

impl DenoiserAdapter for ProcessAdapter {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn denoising_loss(&self, req: &LossRequest<'_>) -> Result<f64, AdapterError> {
        let path = self.frames_path();
        clipfile::write_clip(&path, req.frames, SampleType::F32).map_err(|e| AdapterError::Transport(e.to_string()))?;
        let wire = WireRequest {
            frames_path: path.display().to_string(),
            timestep: req.timestep,
            seed: req.noise_seed,
            prompt: req.prompt.to_string(),
            loss_mask: req.loss_mask.to_vec(),
        };
        let mut line = serde_json::to_string(&wire).expect("serializable request");
        line.push('\n');
        let result = {
            let mut pipe = self.pipe.lock().unwrap_or_else(|p| p.into_inner());
            let transport = |e: std::io::Error| AdapterError::Transport(e.to_string());
            pipe.stdin.write_all(line.as_bytes()).map_err(transport)?;
            pipe.stdin.flush().map_err(transport)?;
            let mut reply = String::new();
            let n = pipe.stdout.read_line(&mut reply).map_err(transport)?;
            if n == 0 {
                Err(AdapterError::Transport("adapter process closed its output".into()))
            } else {
                Ok(reply)
            }
        };
        let _ = std::fs::remove_file(&path);
        let reply: WireResponse =
            serde_json::from_str(result?.trim()).map_err(|e| AdapterError::Transport(format!("bad reply: {e}")))?;
        match (reply.loss, reply.error) {
            (_, Some(msg)) => Err(AdapterError::Failed(msg)),
            (Some(loss), None) => Ok(loss),
            (None, None) => Err(AdapterError::Transport("reply carries neither loss nor error".into())),
        }
    }
}

impl Drop for ProcessAdapter {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}
