use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Classifier, Prediction};
use crate::corpus::{Label, Post};
use crate::error::{Error, Result};

pub const PROTOCOL: &str = "age-clf/1";

#[derive(Debug, Clone, PartialEq)]
pub struct PluginOptions {
    /// Longest wait for any single response line.
    pub timeout: Duration,
    /// Respawn attempts after the plug-in exits unexpectedly.
    pub retries: u32,
}

impl Default for PluginOptions {
    fn default() -> Self {
        PluginOptions {
            timeout: Duration::from_secs(60),
            retries: 2,
        }
    }
}

#[derive(Serialize)]
struct Handshake<'a> {
    protocol: &'a str,
}

#[derive(Deserialize)]
struct HandshakeReply {
    ok: bool,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Serialize)]
struct Request<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct Response {
    id: String,
    label: Label,
    score: f64,
}

enum Failure {
    /// The process went away; the batch may be retried on a fresh one.
    Crashed(String),
    Fatal(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Fatal(e)
    }
}

struct Process {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    lines_read: usize,
    name: String,
}

impl Process {
    fn spawn(command: &[String], timeout: Duration) -> std::result::Result<Self, Failure> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("empty plug-in command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Plugin(format!("cannot start {program:?}: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut process = Process {
            child,
            stdin,
            lines: rx,
            lines_read: 0,
            name: String::new(),
        };
        process.handshake(timeout)?;
        Ok(process)
    }

    fn handshake(&mut self, timeout: Duration) -> std::result::Result<(), Failure> {
        let line = serde_json::to_string(&Handshake { protocol: PROTOCOL }).expect("serializable");
        if let Err(e) = writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush()) {
            return Err(Failure::Crashed(format!("handshake write failed: {e}")));
        }
        let line = self.next_line(timeout)?;
        let reply: HandshakeReply = serde_json::from_str(&line).map_err(|e| Error::Protocol {
            line: self.lines_read,
            message: format!("bad handshake reply {line:?}: {e}"),
        })?;
        if !reply.ok {
            return Err(Failure::Fatal(Error::Plugin(format!(
                "handshake refused: {}",
                reply.error.unwrap_or_default()
            ))));
        }
        self.name = reply.name.unwrap_or_default();
        Ok(())
    }

    fn next_line(&mut self, timeout: Duration) -> std::result::Result<String, Failure> {
        LineSource {
            lines: &self.lines,
            lines_read: &mut self.lines_read,
            child: &mut self.child,
        }
        .next(timeout)
    }

    fn classify(&mut self, posts: &[Post], timeout: Duration) -> std::result::Result<Vec<Prediction>, Failure> {
        let mut payload = Vec::new();
        for p in posts {
            serde_json::to_writer(&mut payload, &Request { id: &p.id, text: &p.text }).expect("serializable");
            payload.push(b'\n');
        }
        let mut slot: HashMap<&str, usize> = posts.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
        let mut out: Vec<Option<Prediction>> = vec![None; posts.len()];

        let Process {
            child,
            stdin,
            lines,
            lines_read,
            ..
        } = self;
        // the writer runs on its own thread so a plug-in that answers before
        // reading everything cannot deadlock against a full pipe
        std::thread::scope(|scope| {
            let writer = scope.spawn(move || stdin.write_all(&payload).and_then(|_| stdin.flush()));
            let mut reader = LineSource {
                lines,
                lines_read,
                child: &mut *child,
            };
            let result = (|| {
                for _ in 0..posts.len() {
                    let line = reader.next(timeout)?;
                    let line_no = *reader.lines_read;
                    let response: Response = serde_json::from_str(&line).map_err(|e| Error::Protocol {
                        line: line_no,
                        message: format!("{e}: {line:?}"),
                    })?;
                    let Some(i) = slot.remove(response.id.as_str()) else {
                        let message = if posts.iter().any(|p| p.id == response.id) {
                            format!("duplicate response for id {:?}", response.id)
                        } else {
                            format!("unknown id {:?}", response.id)
                        };
                        return Err(Failure::Fatal(Error::Protocol { line: line_no, message }));
                    };
                    out[i] = Some(Prediction {
                        post_id: response.id,
                        label: response.label,
                        score: response.score,
                    });
                }
                Ok(())
            })();
            if result.is_err() {
                // unblocks a writer stuck on a full pipe
                let _ = reader.child.kill();
            }
            let written = writer.join().expect("writer thread panicked");
            match (result, written) {
                (Err(e), _) => Err(e),
                (Ok(()), Err(e)) => Err(Failure::Crashed(format!("request write failed: {e}"))),
                (Ok(()), Ok(())) => Ok(()),
            }
        })?;
        Ok(out.into_iter().map(|p| p.expect("every slot filled")).collect())
    }

    fn shutdown(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct LineSource<'a> {
    lines: &'a Receiver<std::io::Result<String>>,
    lines_read: &'a mut usize,
    child: &'a mut Child,
}

impl LineSource<'_> {
    fn next(&mut self, timeout: Duration) -> std::result::Result<String, Failure> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => {
                *self.lines_read += 1;
                Ok(line)
            }
            Ok(Err(e)) => Err(Failure::Crashed(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Failure::Fatal(Error::Timeout(timeout))),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self
                    .child
                    .try_wait()
                    .ok()
                    .flatten()
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "closed its output".into());
                Err(Failure::Crashed(format!("plug-in exited ({status})")))
            }
        }
    }
}

/// Client for an external classifier speaking `age-clf/1`: one JSON object
/// per line over the child's stdin/stdout. Responses are matched to
/// requests by id, so the plug-in may answer in any order.
pub struct ExternalClassifierClient {
    command: Vec<String>,
    options: PluginOptions,
    process: Option<Process>,
    name: String,
}

impl ExternalClassifierClient {
    /// Starts the plug-in and completes the handshake.
    pub fn spawn(command: Vec<String>, options: PluginOptions) -> Result<Self> {
        let mut client = ExternalClassifierClient {
            command,
            options,
            process: None,
            name: String::new(),
        };
        client.ensure_process()?;
        Ok(client)
    }

    fn ensure_process(&mut self) -> Result<&mut Process> {
        if self.process.is_none() {
            let mut attempts = 0;
            let process = loop {
                match Process::spawn(&self.command, self.options.timeout) {
                    Ok(p) => break p,
                    Err(Failure::Fatal(e)) => return Err(e),
                    Err(Failure::Crashed(msg)) if attempts >= self.options.retries => {
                        return Err(Error::Plugin(format!("{msg}; gave up after {} attempts", attempts + 1)))
                    }
                    Err(Failure::Crashed(_)) => attempts += 1,
                }
            };
            self.name = process.name.clone();
            self.process = Some(process);
        }
        Ok(self.process.as_mut().expect("just set"))
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    pub fn classify_external(&mut self, posts: &[Post]) -> Result<Vec<Prediction>> {
        let mut seen = std::collections::HashSet::with_capacity(posts.len());
        if let Some(p) = posts.iter().find(|p| !seen.insert(p.id.as_str())) {
            return Err(Error::Config(format!("duplicate post id {:?} in one batch", p.id)));
        }
        if posts.is_empty() {
            return Ok(Vec::new());
        }
        let mut attempt = 0;
        loop {
            let timeout = self.options.timeout;
            let result = self.ensure_process()?.classify(posts, timeout);
            match result {
                Ok(predictions) => return Ok(predictions),
                Err(failure) => {
                    if let Some(p) = self.process.take() {
                        p.shutdown();
                    }
                    match failure {
                        Failure::Fatal(e) => return Err(e),
                        Failure::Crashed(msg) if attempt >= self.options.retries => {
                            return Err(Error::Plugin(format!("{msg}; gave up after {} attempts", attempt + 1)))
                        }
                        Failure::Crashed(_) => attempt += 1,
                    }
                }
            }
        }
    }
}

impl Classifier for ExternalClassifierClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn classify(&mut self, posts: &[Post]) -> Result<Vec<Prediction>> {
        self.classify_external(posts)
    }
}

impl Drop for ExternalClassifierClient {
    fn drop(&mut self) {
        if let Some(p) = self.process.take() {
            p.shutdown();
        }
    }
}
