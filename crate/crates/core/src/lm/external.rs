//! Client side of the newline-delimited JSON provider protocol.
//!
//! Request: `{"context":[ids]}`. Reply: `{"ids":[...],"probs":[...]}` with
//! `probs` already normalized. Probabilities are quantized locally so both
//! ends of a stego channel derive identical integer masses.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ConditionalDistribution, LmError, LmProvider};
use crate::TokenId;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Request {
    pub context: Vec<TokenId>,
}

/// Probabilities are taken as JSON values so `NaN`/`null` entries surface as
/// provider errors rather than parse failures.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Reply {
    pub ids: Vec<TokenId>,
    pub probs: Vec<serde_json::Value>,
}

/// Parses one reply line into a quantized distribution.
pub fn parse_reply(line: &str) -> Result<ConditionalDistribution, LmError> {
    let reply: Reply =
        serde_json::from_str(line.trim()).map_err(|e| LmError::Provider(format!("malformed reply: {e}")))?;
    let probs = reply
        .probs
        .iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| LmError::Provider(format!("non-numeric probability {v}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ConditionalDistribution::from_probs(&reply.ids, &probs).map_err(|e| LmError::Provider(e.to_string()))
}

/// A provider reached over a byte stream pair. One request is in flight at
/// a time.
pub struct ExternalProvider {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    eos: Option<TokenId>,
    child: Option<Child>,
}

impl ExternalProvider {
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self {
            writer: Box::new(writer),
            lines: rx,
            timeout,
            eos: None,
            child: None,
        }
    }

    /// Spawns `command` and talks to it over stdin/stdout.
    pub fn spawn(mut command: Command, timeout: Duration) -> Result<Self, LmError> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| LmError::Provider(format!("spawn failed: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut p = Self::from_streams(stdout, stdin, timeout);
        p.child = Some(child);
        Ok(p)
    }

    pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<Self, LmError> {
        let stream = TcpStream::connect(addr).map_err(|e| LmError::Provider(format!("connect failed: {e}")))?;
        let reader = stream
            .try_clone()
            .map_err(|e| LmError::Provider(e.to_string()))?;
        Ok(Self::from_streams(reader, stream, timeout))
    }

    /// Declares which id the provider uses for end-of-sentence so the
    /// generation driver can apply its length constraints.
    pub fn with_eos(mut self, eos: TokenId) -> Self {
        self.eos = Some(eos);
        self
    }
}

impl Drop for ExternalProvider {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl LmProvider for ExternalProvider {
    fn next_distribution(&mut self, context: &[TokenId]) -> Result<ConditionalDistribution, LmError> {
        let mut req = serde_json::to_string(&Request {
            context: context.to_vec(),
        })
        .expect("request serializes");
        req.push('\n');
        self.writer
            .write_all(req.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| LmError::Provider(format!("write failed: {e}")))?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => parse_reply(&line),
            Ok(Err(e)) => Err(LmError::Provider(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(LmError::Provider(format!(
                "no reply within {} ms",
                self.timeout.as_millis()
            ))),
            Err(RecvTimeoutError::Disconnected) => Err(LmError::Provider("provider closed the stream".into())),
        }
    }

    fn eos(&self) -> Option<TokenId> {
        self.eos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;
    use std::sync::{Arc, Mutex};

    #[derive(Clone, Default)]
    struct Sink(Arc<Mutex<Vec<u8>>>);
    impl Write for Sink {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn uniform_reply() {
        let d = parse_reply(r#"{"ids":[4,5,6,7],"probs":[0.25,0.25,0.25,0.25]}"#).unwrap();
        assert!(d.entries().iter().all(|e| e.mass == 1 << 29));
    }

    #[test]
    fn quantized_reply() {
        let d = parse_reply(r#"{"ids":[10,11,12,13],"probs":[0.4,0.3,0.2,0.1]}"#).unwrap();
        let m: Vec<u64> = d.entries().iter().map(|e| e.mass).collect();
        assert_eq!(m, vec![858_993_459, 644_245_094, 429_496_730, 214_748_365]);
    }

    #[test]
    fn bad_replies() {
        for line in [
            r#"{"ids":[1,2],"probs":[0.5,NaN]}"#,
            r#"{"ids":[1,2],"probs":[0.5,null]}"#,
            r#"{"ids":[1,2],"probs":[0.5]}"#,
            r#"{"ids":[1,2],"probs":[0.5,0.1]}"#,
            r#"{"ids":[1,1],"probs":[0.5,0.5]}"#,
            "not json",
        ] {
            assert!(matches!(parse_reply(line), Err(LmError::Provider(_))), "{line}");
        }
    }

    #[test]
    fn stream_request_and_reply() {
        let reply = b"{\"ids\":[1,2],\"probs\":[0.5,0.5]}\n".to_vec();
        let sink = Sink::default();
        let mut p = ExternalProvider::from_streams(Cursor::new(reply), sink.clone(), Duration::from_secs(5));
        let d = p.next_distribution(&[2, 7]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(String::from_utf8(sink.0.lock().unwrap().clone()).unwrap(), "{\"context\":[2,7]}\n");
        // stream ended: next call reports the closed provider
        assert!(matches!(p.next_distribution(&[2]), Err(LmError::Provider(_))));
    }

    #[test]
    fn timeout_is_a_provider_error() {
        let (_keep, rx) = std::os::unix::net::UnixStream::pair().unwrap();
        let writer = rx.try_clone().unwrap();
        let mut p = ExternalProvider::from_streams(rx, writer, Duration::from_millis(50));
        let err = p.next_distribution(&[2]).unwrap_err();
        assert!(err.to_string().contains("no reply"), "{err}");
    }
}
