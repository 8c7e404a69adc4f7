//! Deterministic scripted chat provider.
//!
//! A transcript is a list of (matcher, response) entries. Requests are
//! matched on a whitespace-normalized view of `system + "\n" + user`, either
//! by substring, by SHA-256 hash of the normalized text, or unconditionally.
//! `keyed` transcripts answer any matching entry (reusable unless marked
//! `once`); `ordered` transcripts walk entries front to back. In strict mode
//! an unmatched request is a hard transcript miss — the test or replay run is
//! wrong and should fail loudly rather than improvise.

use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{ChatProvider, ProviderFailure, ProviderReply, ProviderRequest};

/// Collapses whitespace runs to single spaces and trims, so formatting-only
/// differences never break matching.
pub(crate) fn normalize_request(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn request_hash(normalized: &str) -> String {
    let mut h = Sha256::new();
    h.update(normalized.as_bytes());
    format!("{:x}", h.finalize())
}

#[derive(Debug, Clone)]
enum Matcher {
    Any,
    Substring(String),
    Hash(String),
}

impl Matcher {
    fn matches(&self, normalized: &str, hash: &str) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Substring(needle) => normalized.contains(&normalize_request(needle)),
            Matcher::Hash(h) => h.eq_ignore_ascii_case(hash),
        }
    }
}

#[derive(Debug)]
struct Entry {
    matcher: Matcher,
    response: String,
    latency_s: f64,
    /// Simulate this many transient transport failures before succeeding.
    fail_times: u32,
    once: bool,
    used: u32,
    failed: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Keyed,
    Ordered,
}

pub struct ScriptedChat {
    entries: Mutex<Vec<Entry>>,
    cursor: Mutex<usize>,
    mode: Mode,
    strict: bool,
}

impl ScriptedChat {
    pub fn keyed() -> Self {
        ScriptedChat {
            entries: Mutex::new(Vec::new()),
            cursor: Mutex::new(0),
            mode: Mode::Keyed,
            strict: true,
        }
    }

    pub fn ordered() -> Self {
        ScriptedChat { mode: Mode::Ordered, ..ScriptedChat::keyed() }
    }

    /// Lenient mode: unmatched requests get an empty reply instead of an
    /// error. Only useful for smoke runs; tests should stay strict.
    pub fn lenient(mut self) -> Self {
        self.strict = false;
        self
    }

    fn push(self, entry: Entry) -> Self {
        self.entries.lock().unwrap().push(entry);
        self
    }

    /// Entry matched by substring of the normalized request.
    pub fn on(self, needle: &str, response: &str) -> Self {
        self.push(Entry {
            matcher: Matcher::Substring(needle.to_string()),
            response: response.to_string(),
            latency_s: 0.0,
            fail_times: 0,
            once: false,
            used: 0,
            failed: 0,
        })
    }

    /// Like [`ScriptedChat::on`] but consumable a single time.
    pub fn on_once(self, needle: &str, response: &str) -> Self {
        self.push(Entry {
            matcher: Matcher::Substring(needle.to_string()),
            response: response.to_string(),
            latency_s: 0.0,
            fail_times: 0,
            once: true,
            used: 0,
            failed: 0,
        })
    }

    /// Entry that reports `fail_times` transient failures before answering.
    pub fn on_failing(self, needle: &str, response: &str, fail_times: u32) -> Self {
        self.push(Entry {
            matcher: Matcher::Substring(needle.to_string()),
            response: response.to_string(),
            latency_s: 0.0,
            fail_times,
            once: false,
            used: 0,
            failed: 0,
        })
    }

    /// Entry with a scripted latency, for deterministic timing fields.
    pub fn on_with_latency(self, needle: &str, response: &str, latency_s: f64) -> Self {
        self.push(Entry {
            matcher: Matcher::Substring(needle.to_string()),
            response: response.to_string(),
            latency_s,
            fail_times: 0,
            once: false,
            used: 0,
            failed: 0,
        })
    }

    /// Catch-all entry; in keyed mode place it last.
    pub fn any(self, response: &str) -> Self {
        self.push(Entry {
            matcher: Matcher::Any,
            response: response.to_string(),
            latency_s: 0.0,
            fail_times: 0,
            once: false,
            used: 0,
            failed: 0,
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read transcript {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: TranscriptFile =
            serde_json::from_str(text).map_err(|e| format!("bad transcript JSON: {e}"))?;
        Ok(Self::from_spec(file))
    }

    pub fn from_spec(file: TranscriptFile) -> Self {
        let mode = match file.mode.as_str() {
            "ordered" => Mode::Ordered,
            _ => Mode::Keyed,
        };
        let entries = file
            .entries
            .into_iter()
            .map(|e| Entry {
                matcher: match (e.hash, e.substring) {
                    (Some(h), _) => Matcher::Hash(h),
                    (None, Some(s)) => Matcher::Substring(s),
                    (None, None) => Matcher::Any,
                },
                response: e.response,
                latency_s: e.latency_s,
                fail_times: e.fail_times,
                once: e.once,
                used: 0,
                failed: 0,
            })
            .collect();
        ScriptedChat {
            entries: Mutex::new(entries),
            cursor: Mutex::new(0),
            mode,
            strict: file.strict,
        }
    }

    /// Hash a request body the way matching does; handy when authoring
    /// hash-keyed transcripts.
    pub fn hash_of(system: &str, user: &str) -> String {
        request_hash(&normalize_request(&format!("{system}\n{user}")))
    }
}

impl ChatProvider for ScriptedChat {
    fn complete(&self, req: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure> {
        let normalized = normalize_request(&format!("{}\n{}", req.system, req.user));
        let hash = request_hash(&normalized);
        let mut entries = self.entries.lock().unwrap();

        let index = match self.mode {
            Mode::Ordered => {
                let cursor = *self.cursor.lock().unwrap();
                match entries.get(cursor) {
                    Some(e) if e.matcher.matches(&normalized, &hash) => Some(cursor),
                    _ => None,
                }
            }
            Mode::Keyed => entries.iter().position(|e| {
                e.matcher.matches(&normalized, &hash) && (!e.once || e.used == 0)
            }),
        };

        let Some(index) = index else {
            let preview: String = normalized.chars().take(160).collect();
            if self.strict {
                return Err(ProviderFailure::miss(format!(
                    "no entry matches request (normalized prefix: `{preview}`)"
                )));
            }
            return Ok(ProviderReply { text: String::new(), latency_s: 0.0 });
        };

        let entry = &mut entries[index];
        if entry.failed < entry.fail_times {
            entry.failed += 1;
            return Err(ProviderFailure::transient("scripted transient failure"));
        }
        entry.used += 1;
        let reply = ProviderReply { text: entry.response.clone(), latency_s: entry.latency_s };
        if self.mode == Mode::Ordered {
            *self.cursor.lock().unwrap() += 1;
        }
        Ok(reply)
    }
}

/// On-disk transcript format (JSON).
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct TranscriptFile {
    /// `"keyed"` (default) or `"ordered"`.
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_strict")]
    pub strict: bool,
    pub entries: Vec<TranscriptEntry>,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct TranscriptEntry {
    /// Substring of the whitespace-normalized `system\nuser` text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substring: Option<String>,
    /// SHA-256 hex of the full normalized request; takes precedence over
    /// `substring`. Neither set means match-anything.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
    pub response: String,
    #[serde(default)]
    pub latency_s: f64,
    #[serde(default)]
    pub fail_times: u32,
    #[serde(default)]
    pub once: bool,
}

fn default_mode() -> String {
    "keyed".to_string()
}

fn default_strict() -> bool {
    true
}

/// Answers every request with the same text. Useful as a stub where the
/// response content is irrelevant.
pub struct FixedChat {
    response: String,
}

impl FixedChat {
    pub fn new(response: &str) -> Self {
        FixedChat { response: response.to_string() }
    }
}

impl ChatProvider for FixedChat {
    fn complete(&self, _req: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure> {
        Ok(ProviderReply { text: self.response.clone(), latency_s: 0.0 })
    }
}
