//! Deterministic replay backend.
//!
//! A sequence script hands out its assistant messages in order; each
//! session starts again from the first message, so concurrent statement
//! runs all see the same replay. A keyed script answers by the exact
//! fingerprint of the incoming message list instead.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fingerprint, Backend, ChatError, ChatMessage, ChatSession, CompletionRequest, Role};

/// One line of a trajectory fixture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryLine {
    #[serde(flatten)]
    pub message: ChatMessage,
    /// Request fingerprint this assistant message answers (keyed scripts only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
}

#[derive(Debug, Clone)]
enum Script {
    Sequence(Vec<ChatMessage>),
    Keyed(HashMap<String, ChatMessage>),
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    script: Script,
    label: String,
}

/// Builds a sequence backend; the script must be non-empty and contain only
/// well-formed assistant messages.
pub fn scripted_backend(script: Vec<ChatMessage>) -> Result<ScriptedBackend, ChatError> {
    ScriptedBackend::sequence(script)
}

fn check_reply(m: &ChatMessage) -> Result<(), ChatError> {
    if m.role != Role::Assistant {
        return Err(ChatError::InvalidScript(format!("scripted reply has role {}", m.role.as_str())));
    }
    m.check_shape().map_err(ChatError::InvalidScript)
}

impl ScriptedBackend {
    pub fn sequence(script: Vec<ChatMessage>) -> Result<Self, ChatError> {
        if script.is_empty() {
            return Err(ChatError::EmptyScript);
        }
        script.iter().try_for_each(check_reply)?;
        let label = format!("scripted sequence ({} replies)", script.len());
        Ok(ScriptedBackend { script: Script::Sequence(script), label })
    }

    pub fn keyed(responses: HashMap<String, ChatMessage>) -> Result<Self, ChatError> {
        if responses.is_empty() {
            return Err(ChatError::EmptyScript);
        }
        responses.values().try_for_each(check_reply)?;
        let label = format!("scripted keyed ({} replies)", responses.len());
        Ok(ScriptedBackend { script: Script::Keyed(responses), label })
    }

    /// Builds a backend from trajectory lines: the assistant messages become
    /// the script. Either every assistant line carries a fingerprint (keyed)
    /// or none does (sequence).
    pub fn from_trajectory(lines: Vec<TrajectoryLine>) -> Result<Self, ChatError> {
        let replies: Vec<TrajectoryLine> =
            lines.into_iter().filter(|l| l.message.role == Role::Assistant).collect();
        let keyed = replies.iter().filter(|l| l.fingerprint.is_some()).count();
        if keyed == 0 {
            Self::sequence(replies.into_iter().map(|l| l.message).collect())
        } else if keyed == replies.len() {
            let map = replies.into_iter().map(|l| (l.fingerprint.unwrap_or_default(), l.message)).collect();
            Self::keyed(map)
        } else {
            Err(ChatError::InvalidScript(format!(
                "{keyed} of {} assistant lines carry a fingerprint; use all or none",
                replies.len()
            )))
        }
    }

    pub fn from_trajectory_file(path: &Path) -> Result<Self, ChatError> {
        let file = std::fs::File::open(path)
            .map_err(|e| ChatError::InvalidScript(format!("{}: {e}", path.display())))?;
        let mut backend = Self::from_trajectory(read_trajectory(file)?)?;
        backend.label = format!("{} from {}", backend.label, path.display());
        Ok(backend)
    }
}

/// Reads a line-delimited trajectory; blank lines are skipped.
pub fn read_trajectory<R: Read>(reader: R) -> Result<Vec<TrajectoryLine>, ChatError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| ChatError::InvalidScript(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TrajectoryLine = serde_json::from_str(&line)
            .map_err(|e| ChatError::InvalidScript(format!("line {}: {e}", i + 1)))?;
        out.push(parsed);
    }
    Ok(out)
}

pub fn write_trajectory<W: Write>(mut w: W, messages: &[ChatMessage]) -> std::io::Result<()> {
    for m in messages {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

struct SequenceSession<'a> {
    script: &'a [ChatMessage],
    cursor: usize,
}

impl ChatSession for SequenceSession<'_> {
    fn send(&mut self, _req: &CompletionRequest) -> Result<ChatMessage, ChatError> {
        let reply = self.script.get(self.cursor).cloned().ok_or(ChatError::ScriptExhausted(self.cursor))?;
        self.cursor += 1;
        Ok(reply)
    }
}

struct KeyedSession<'a> {
    responses: &'a HashMap<String, ChatMessage>,
}

impl ChatSession for KeyedSession<'_> {
    fn send(&mut self, req: &CompletionRequest) -> Result<ChatMessage, ChatError> {
        let key = fingerprint(&req.messages);
        self.responses.get(&key).cloned().ok_or(ChatError::ScriptMiss(key))
    }
}

impl Backend for ScriptedBackend {
    fn open(&self) -> Box<dyn ChatSession + '_> {
        match &self.script {
            Script::Sequence(s) => Box::new(SequenceSession { script: s, cursor: 0 }),
            Script::Keyed(map) => Box::new(KeyedSession { responses: map }),
        }
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}
