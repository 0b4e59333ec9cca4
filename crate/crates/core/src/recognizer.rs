//! The black-box recognizer: character error rate scoring, a deterministic
//! mock driven by log-spectral distance, and an external decoder process
//! speaking line-delimited JSON.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::metrics::log_spectral_distance;

/// Environment variable that overrides the recognizer launch command.
pub const RECOGNIZER_CMD_ENV: &str = "RLSE_RECOGNIZER_CMD";

/// Character tokens with whitespace removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript(Vec<char>);

impl Transcript {
    pub fn new(text: &str) -> Self {
        Self(text.chars().filter(|c| !c.is_whitespace()).collect())
    }

    pub fn chars(&self) -> &[char] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for Transcript {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.iter().try_for_each(|c| write!(f, "{c}"))
    }
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// (substitutions + deletions + insertions) / reference length.
pub fn cer(hypothesis: &Transcript, reference: &Transcript) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::invalid("CER needs a nonempty reference"));
    }
    Ok(edit_distance(hypothesis.chars(), reference.chars()) as f64 / reference.len() as f64)
}

/// What an utterance is scored against.
#[derive(Debug, Clone)]
pub enum Reference {
    Text(String),
    Clean(Arc<Waveform>),
}

pub enum Audio<'a> {
    Memory(&'a Waveform),
    File(&'a Path),
}

pub trait Recognizer: Send + Sync {
    /// Utterance error rate as a fraction (may exceed 1 with insertions).
    fn error_rate(&self, id: &str, audio: Audio<'_>, reference: &Reference) -> Result<f64>;

    /// Interprets the `reference` column of a manifest.
    fn parse_reference(&self, raw: &str) -> Result<Reference> {
        Ok(Reference::Text(raw.to_string()))
    }
}

/// Deterministic stand-in for a decoder: error rate is the log-spectral
/// distance to the clean reference divided by a calibration distance,
/// clamped to [0, 1].
#[derive(Debug, Clone)]
pub struct MockRecognizer {
    extractor: FeatureExtractor,
    calibration: f64,
    dynamic_range_db: f64,
}

impl MockRecognizer {
    pub fn new(extractor: FeatureExtractor, calibration: f64, dynamic_range_db: f64) -> Result<Self> {
        if !(calibration > 0.0 && calibration.is_finite()) {
            return Err(Error::invalid("mock calibration distance must be positive"));
        }
        Ok(Self {
            extractor,
            calibration,
            dynamic_range_db,
        })
    }

    pub fn calibration(&self) -> f64 {
        self.calibration
    }

    /// Log-spectral distance between two waveforms trimmed to a common length.
    pub fn distance(&self, enhanced: &Waveform, clean: &Waveform) -> Result<f64> {
        lsd_between(&self.extractor, enhanced, clean, self.dynamic_range_db)
    }

    pub fn mock_error_rate(&self, enhanced: &Waveform, clean: &Waveform) -> Result<f64> {
        Ok((self.distance(enhanced, clean)? / self.calibration).clamp(0.0, 1.0))
    }
}

pub fn lsd_between(
    extractor: &FeatureExtractor,
    estimate: &Waveform,
    clean: &Waveform,
    dynamic_range_db: f64,
) -> Result<f64> {
    let len = estimate.len().min(clean.len());
    let est = extractor.mel(&estimate.resized(len))?;
    let reference = extractor.mel(&clean.resized(len))?;
    log_spectral_distance(&est, &reference, dynamic_range_db)
}

impl Recognizer for MockRecognizer {
    fn error_rate(&self, id: &str, audio: Audio<'_>, reference: &Reference) -> Result<f64> {
        let Reference::Clean(clean) = reference else {
            return Err(Error::Recognizer {
                id: id.to_string(),
                reason: "mock recognizer needs a clean reference waveform".into(),
            });
        };
        let owned;
        let enhanced = match audio {
            Audio::Memory(w) => w,
            Audio::File(path) => {
                owned = Waveform::read_wav(path)?;
                &owned
            }
        };
        self.mock_error_rate(enhanced, clean)
    }

    fn parse_reference(&self, raw: &str) -> Result<Reference> {
        Ok(Reference::Clean(Arc::new(Waveform::read_wav(raw)?)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: String,
    pub wav: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Request {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

impl Response {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }

    pub fn parse(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line.trim_end_matches(['\r', '\n']))?)
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Session {
    fn spawn(command: &str) -> std::io::Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
        })
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Long-lived child process; requests on one process are serialized.
pub struct ExternalRecognizer {
    command: String,
    timeout: Duration,
    session: Mutex<Option<Session>>,
    scratch: tempfile::TempDir,
}

impl ExternalRecognizer {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Result<Self> {
        if timeout.is_zero() {
            return Err(Error::invalid("recognizer timeout must be positive"));
        }
        Ok(Self {
            command: command.into(),
            timeout,
            session: Mutex::new(None),
            scratch: tempfile::tempdir()?,
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn recognize(&self, id: &str, wav: &Path) -> Result<Transcript> {
        let fail = |reason: String| Error::Recognizer {
            id: id.to_string(),
            reason,
        };
        if !wav.is_file() {
            return Err(fail(format!("no such file {}", wav.display())));
        }
        let request = Request {
            id: id.to_string(),
            wav: wav.to_string_lossy().into_owned(),
        };
        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(Session::spawn(&self.command).map_err(|e| fail(format!("spawn: {e}")))?);
        }
        let session = guard.as_mut().unwrap();
        let outcome = exchange(session, &request, self.timeout);
        match outcome {
            Ok(resp) => {
                if resp.id != id {
                    *guard = None;
                    return Err(fail(format!("response id {:?} does not match", resp.id)));
                }
                match (resp.transcript, resp.error) {
                    (_, Some(err)) => Err(fail(err)),
                    (Some(text), None) => Ok(Transcript::new(&text)),
                    (None, None) => Err(fail("response has neither transcript nor error".into())),
                }
            }
            Err(reason) => {
                let status = guard
                    .as_mut()
                    .and_then(|s| s.child.try_wait().ok().flatten())
                    .map(|st| format!(" (process exited: {st})"))
                    .unwrap_or_default();
                *guard = None;
                Err(fail(format!("{reason}{status}")))
            }
        }
    }
}

fn exchange(
    session: &mut Session,
    request: &Request,
    timeout: Duration,
) -> std::result::Result<Response, String> {
    writeln!(session.stdin, "{}", request.to_line()).map_err(|e| format!("write: {e}"))?;
    session.stdin.flush().map_err(|e| format!("flush: {e}"))?;
    match session.lines.recv_timeout(timeout) {
        Ok(Ok(line)) => Response::parse(&line).map_err(|e| format!("malformed response: {e}")),
        Ok(Err(e)) => Err(format!("read: {e}")),
        Err(RecvTimeoutError::Timeout) => Err(format!("no response within {timeout:?}")),
        Err(RecvTimeoutError::Disconnected) => Err("recognizer closed its output".into()),
    }
}

impl Recognizer for ExternalRecognizer {
    fn error_rate(&self, id: &str, audio: Audio<'_>, reference: &Reference) -> Result<f64> {
        let Reference::Text(text) = reference else {
            return Err(Error::Recognizer {
                id: id.to_string(),
                reason: "external recognizer needs a reference transcript".into(),
            });
        };
        let hyp = match audio {
            Audio::File(path) => self.recognize(id, path)?,
            Audio::Memory(w) => {
                let safe: String = id
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                    .collect();
                let path = self.scratch.path().join(format!("{safe}.wav"));
                w.write_wav(&path)?;
                let out = self.recognize(id, &path);
                let _ = std::fs::remove_file(&path);
                out?
            }
        };
        cer(&hyp, &Transcript::new(text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RecognizerEndpoint {
    Mock {
        calibration: f64,
        dynamic_range_db: f64,
    },
    External {
        command: String,
        timeout_secs: f64,
    },
}

impl RecognizerEndpoint {
    pub fn connect(&self, extractor: &FeatureExtractor) -> Result<Box<dyn Recognizer>> {
        match self {
            RecognizerEndpoint::Mock {
                calibration,
                dynamic_range_db,
            } => Ok(Box::new(MockRecognizer::new(
                extractor.clone(),
                *calibration,
                *dynamic_range_db,
            )?)),
            RecognizerEndpoint::External {
                command,
                timeout_secs,
            } => {
                if timeout_secs.is_nan() || *timeout_secs <= 0.0 {
                    return Err(Error::invalid("recognizer timeout must be positive"));
                }
                Ok(Box::new(ExternalRecognizer::new(
                    command.clone(),
                    Duration::from_secs_f64(*timeout_secs),
                )?))
            }
        }
    }
}

/// One row of a recognition manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub wav_path: PathBuf,
    pub reference: String,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct BatchResult {
    pub rates: BTreeMap<String, f64>,
    pub failures: BTreeMap<String, String>,
}

/// Scores every entry; failures are recorded per id.
pub fn batch_recognize(recognizer: &dyn Recognizer, manifest: &[ManifestEntry]) -> BatchResult {
    let mut out = BatchResult::default();
    for entry in manifest {
        let scored = recognizer
            .parse_reference(&entry.reference)
            .and_then(|r| recognizer.error_rate(&entry.id, Audio::File(&entry.wav_path), &r));
        match scored {
            Ok(rate) => {
                out.rates.insert(entry.id.clone(), rate);
            }
            Err(e) => {
                log::warn!("recognition failed for {}: {e}", entry.id);
                out.failures.insert(entry.id.clone(), e.to_string());
            }
        }
    }
    out
}
