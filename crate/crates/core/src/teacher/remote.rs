//! Newline-delimited JSON teacher protocol.
//!
//! Every message is one JSON object on one line:
//!
//! ```text
//! -> {"type":"hello"}
//! <- {"type":"hello","alphabet_size":N}
//! -> {"id":k,"type":"string_prob","tokens":[t0,t1,...]}
//! <- {"id":k,"p":0.0123}
//! <- {"id":k,"type":"error","message":"..."}
//! ```
//!
//! [`RemoteTeacher`] is the client side; [`serve`] answers the protocol from a
//! known automaton and backs the `mock-teacher` test binary.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Teacher, TeacherError};
use crate::pdfa::{Pdfa, Token};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

type Line = io::Result<Option<String>>;

/// Client for a teacher speaking the line protocol over a pair of streams,
/// usually the standard streams of a child process. One request is in flight
/// at a time.
pub struct RemoteTeacher {
    child: Option<Child>,
    writer: Box<dyn Write + Send>,
    lines: Receiver<Line>,
    alphabet_size: usize,
    next_id: u64,
    timeout: Duration,
}

impl std::fmt::Debug for RemoteTeacher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteTeacher")
            .field("alphabet_size", &self.alphabet_size)
            .field("next_id", &self.next_id)
            .field("timeout", &self.timeout)
            .finish_non_exhaustive()
    }
}

impl RemoteTeacher {
    /// Runs `command` through `sh -c` and performs the handshake.
    pub fn spawn(command: &str) -> Result<Self, TeacherError> {
        Self::spawn_with_timeout(command, DEFAULT_TIMEOUT)
    }

    pub fn spawn_with_timeout(command: &str, timeout: Duration) -> Result<Self, TeacherError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(TeacherError::Spawn)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut teacher = Self::connect(stdout, stdin, timeout);
        teacher.child = Some(child);
        teacher.handshake()?;
        Ok(teacher)
    }

    /// Connects to a teacher over arbitrary streams and performs the
    /// handshake.
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Result<Self, TeacherError>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let mut teacher = Self::connect(reader, writer, timeout);
        teacher.handshake()?;
        Ok(teacher)
    }

    fn connect<R, W>(mut reader: R, writer: W, timeout: Duration) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || loop {
            let mut buf = String::new();
            let msg = match reader.read_line(&mut buf) {
                Ok(0) => Ok(None),
                Ok(_) => Ok(Some(buf)),
                Err(e) => Err(e),
            };
            let done = !matches!(msg, Ok(Some(_)));
            if tx.send(msg).is_err() || done {
                break;
            }
        });
        RemoteTeacher {
            child: None,
            writer: Box::new(writer),
            lines: rx,
            alphabet_size: 0,
            next_id: 1,
            timeout,
        }
    }

    fn handshake(&mut self) -> Result<(), TeacherError> {
        self.send(&json!({"type": "hello"}))?;
        let line = self.receive()?;
        self.alphabet_size = parse_hello(&line)?;
        Ok(())
    }

    fn send(&mut self, msg: &Value) -> Result<(), TeacherError> {
        let mut line = msg.to_string();
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(TeacherError::Io)
    }

    fn receive(&mut self) -> Result<String, TeacherError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(Some(line))) => Ok(line),
            Ok(Ok(None)) => Err(TeacherError::Closed),
            Ok(Err(e)) => Err(TeacherError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(TeacherError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(TeacherError::Closed),
        }
    }

    pub fn remote_string_prob(&mut self, x: &[Token]) -> Result<f64, TeacherError> {
        if let Some(t) = x.iter().find(|t| t.index() >= self.alphabet_size) {
            return Err(crate::pdfa::PdfaError::InvalidToken {
                token: t.0,
                alphabet_size: self.alphabet_size,
            }
            .into());
        }
        let id = self.next_id;
        self.next_id += 1;
        let ids: Vec<u32> = x.iter().map(|t| t.0).collect();
        self.send(&json!({"id": id, "type": "string_prob", "tokens": ids}))?;
        let line = self.receive()?;
        parse_response(&line, id)
    }
}

impl Teacher for RemoteTeacher {
    fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    fn string_prob(&mut self, x: &[Token]) -> Result<f64, TeacherError> {
        self.remote_string_prob(x)
    }
}

impl Drop for RemoteTeacher {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // closing stdin lets a well-behaved server exit on its own
            self.writer = Box::new(io::sink());
            for _ in 0..50 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(2));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn malformed(reason: impl Into<String>, line: &str) -> TeacherError {
    TeacherError::Malformed {
        reason: reason.into(),
        payload: line.trim_end().to_string(),
    }
}

fn parse_object(line: &str) -> Result<serde_json::Map<String, Value>, TeacherError> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(malformed("not a JSON object", line)),
        Err(e) => Err(malformed(format!("invalid JSON: {e}"), line)),
    }
}

/// Parses the handshake reply and returns the alphabet size.
pub fn parse_hello(line: &str) -> Result<usize, TeacherError> {
    let msg = parse_object(line)?;
    if msg.get("type").and_then(Value::as_str) != Some("hello") {
        return Err(malformed("expected a hello reply", line));
    }
    msg.get("alphabet_size")
        .and_then(Value::as_u64)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| malformed("missing or invalid alphabet_size", line))
}

/// Parses the reply to request `expected_id`.
pub fn parse_response(line: &str, expected_id: u64) -> Result<f64, TeacherError> {
    let msg = parse_object(line)?;
    let id = msg
        .get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed("missing or invalid id", line))?;
    if id != expected_id {
        return Err(malformed(format!("expected id {expected_id}, got {id}"), line));
    }
    if msg.get("type").and_then(Value::as_str) == Some("error") {
        let message = msg
            .get("message")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        return Err(TeacherError::Remote { id, message });
    }
    let p = msg
        .get("p")
        .and_then(Value::as_f64)
        .ok_or_else(|| malformed("missing or non-numeric p", line))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(TeacherError::OutOfRange {
            p,
            payload: line.trim_end().to_string(),
        });
    }
    Ok(p)
}

/// Answers protocol requests from `input` using `pdfa` until end of input.
pub fn serve<R: BufRead, W: Write>(pdfa: &Pdfa, input: R, mut output: W) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = answer(pdfa, &line);
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}

fn answer(pdfa: &Pdfa, line: &str) -> Value {
    let msg: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return json!({"id": null, "type": "error", "message": format!("invalid JSON: {e}")}),
    };
    let id = msg.get("id").cloned().unwrap_or(Value::Null);
    let error = |message: String| json!({"id": id, "type": "error", "message": message});
    match msg.get("type").and_then(Value::as_str) {
        Some("hello") => json!({"type": "hello", "alphabet_size": pdfa.alphabet_size()}),
        Some("string_prob") => {
            let Some(raw) = msg.get("tokens").and_then(Value::as_array) else {
                return error("missing tokens".into());
            };
            let mut x = Vec::with_capacity(raw.len());
            for t in raw {
                match t.as_u64().and_then(|t| u32::try_from(t).ok()) {
                    Some(t) => x.push(Token(t)),
                    None => return error(format!("invalid token {t}")),
                }
            }
            match pdfa.eval_string_prob(&x) {
                Ok(p) => json!({"id": id, "p": p}),
                Err(e) => error(e.to_string()),
            }
        }
        _ => error("unknown request type".into()),
    }
}
