//! Scenario execution: one statement in, one [`RunRecord`] out.

mod prompts;
mod verdict;

use std::collections::HashMap;
use std::fmt;
use std::io;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompts::{build_prompts, initial_messages, PromptSet, FORCED_ANSWER_MESSAGE};
pub use verdict::parse_verdict;

use crate::chat::{
    cap_message, complete, fingerprint, Backend, ChatError, ChatMessage, CompletionRequest, ScriptedBackend, ToolExecutor,
    ToolOutput, DEFAULT_CHAR_CAP,
};
use crate::corpus::{Corpus, Region, Statement, Verdict};
use crate::exec::Execution;
use crate::wikitools::{FETCH_ENTITY, FETCH_ENTITY_WITH_HEADER};

/// Maximum number of tool-call steps before the answer is forced.
pub const DEFAULT_STEP_CAP: usize = 15;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "statement")]
    StatementOnly,
    #[serde(rename = "rag")]
    RagGold,
    #[serde(rename = "agent")]
    AgentWiki,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::StatementOnly, ScenarioKind::RagGold, ScenarioKind::AgentWiki];

    /// Short name used on the command line and in record files.
    pub fn key(self) -> &'static str {
        match self {
            ScenarioKind::StatementOnly => "statement",
            ScenarioKind::RagGold => "rag",
            ScenarioKind::AgentWiki => "agent",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::StatementOnly => "Statement-only",
            ScenarioKind::RagGold => "RAG-based",
            ScenarioKind::AgentWiki => "Agent-based",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| s.eq_ignore_ascii_case(k.key()) || s.eq_ignore_ascii_case(k.label()))
            .ok_or_else(|| format!("unknown scenario '{s}' (expected statement, rag or agent)"))
    }
}

/// Run measurements that vary between otherwise identical runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Telemetry {
    pub wall_time_ms: u64,
    pub cache_hits: u32,
    pub cache_misses: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub statement_id: String,
    pub model_id: String,
    pub scenario: ScenarioKind,
    pub region: Region,
    pub predicted: Verdict,
    pub gold: Verdict,
    pub raw_final: String,
    pub n_tool_steps: usize,
    pub hit_step_limit: bool,
    /// Characters in the user prompt before truncation.
    pub prompt_chars: usize,
    pub trajectory: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub telemetry: Option<Telemetry>,
}

impl RunRecord {
    pub fn is_correct(&self) -> bool {
        self.predicted == self.gold
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("run records always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub model_id: String,
    pub char_cap: usize,
    pub step_cap: usize,
    pub timeout: Duration,
    /// Attach [`Telemetry`]; off keeps record files byte-reproducible.
    pub telemetry: bool,
    pub prompts: PromptSet,
}

impl RunConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        RunConfig {
            model_id: model_id.into(),
            char_cap: DEFAULT_CHAR_CAP,
            step_cap: DEFAULT_STEP_CAP,
            timeout: DEFAULT_TIMEOUT,
            telemetry: false,
            prompts: PromptSet::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("cannot write run record: {0}")]
    Sink(#[from] io::Error),
}

/// Checks that an agent registry offers exactly the two Wikipedia tools.
pub fn check_agent_tools(tools: Option<&dyn ToolExecutor>) -> Result<(), RunError> {
    let Some(tools) = tools else {
        return Err(RunError::Config("the agent scenario needs the Wikipedia tools".into()));
    };
    let mut names: Vec<String> = tools.specs().into_iter().map(|s| s.name).collect();
    names.sort();
    if names != [FETCH_ENTITY, FETCH_ENTITY_WITH_HEADER] {
        return Err(RunError::Config(format!(
            "agent tools must be exactly {FETCH_ENTITY} and {FETCH_ENTITY_WITH_HEADER}, got {names:?}"
        )));
    }
    Ok(())
}

fn check_config(cfg: &RunConfig, kind: ScenarioKind, tools: Option<&dyn ToolExecutor>) -> Result<(), RunError> {
    if cfg.step_cap == 0 {
        return Err(RunError::Config("step cap must be at least 1".into()));
    }
    if cfg.char_cap <= crate::chat::TRUNCATION_MARKER.chars().count() {
        return Err(RunError::Config(format!("character cap {} is too small", cfg.char_cap)));
    }
    if kind == ScenarioKind::AgentWiki {
        check_agent_tools(tools)?;
    }
    Ok(())
}

/// Runs one statement through one scenario. Backend failures, timeouts and
/// unparsable answers all end in an `Unclear` record rather than an error;
/// `Err` is reserved for configurations that cannot run at all.
pub fn run_statement(
    s: &Statement,
    kind: ScenarioKind,
    cfg: &RunConfig,
    backend: &dyn Backend,
    tools: Option<&dyn ToolExecutor>,
) -> Result<RunRecord, RunError> {
    check_config(cfg, kind, tools)?;
    Ok(run_checked(s, kind, cfg, backend, tools))
}

fn run_checked(
    s: &Statement,
    kind: ScenarioKind,
    cfg: &RunConfig,
    backend: &dyn Backend,
    tools: Option<&dyn ToolExecutor>,
) -> RunRecord {
    let start = Instant::now();
    let opening = cfg.prompts.build(s, kind);
    let prompt_chars = opening[1].content.chars().count();
    let cap = |m: ChatMessage| cap_message(m, cfg.char_cap).expect("cap checked in check_config");
    let mut messages: Vec<ChatMessage> = opening.into_iter().map(cap).collect();

    let (specs, tools) = match (kind, tools) {
        (ScenarioKind::AgentWiki, Some(t)) => (t.specs(), Some(t)),
        _ => (Vec::new(), None),
    };
    let mut session = backend.open();
    let mut telemetry = Telemetry::default();
    let mut n_tool_steps = 0;
    let mut hit_step_limit = false;
    let mut error = None;
    let mut raw_final = String::new();

    loop {
        if start.elapsed() > cfg.timeout {
            error = Some(format!("timed out after {} s", cfg.timeout.as_secs_f64()));
            break;
        }
        let req = CompletionRequest::new(cfg.model_id.clone(), messages.clone(), specs.clone())
            .with_char_cap(cfg.char_cap);
        let reply = match complete(&req, session.as_mut()) {
            Ok(r) => r,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        };
        messages.push(reply.clone());

        let Some(tools) = tools.filter(|_| reply.has_tool_calls() && !hit_step_limit) else {
            raw_final = reply.content;
            break;
        };
        n_tool_steps += 1;
        for call in &reply.tool_calls {
            let out = match (&call.invalid_arguments, call.validate(&specs)) {
                (Some(bad), _) => ToolOutput::error(format!("Error: arguments are not valid JSON: {bad}")),
                (None, Err(e)) => ToolOutput::error(format!("Error: {e}")),
                (None, Ok(_)) => tools.execute(call),
            };
            match out.cache_hit {
                Some(true) => telemetry.cache_hits += 1,
                Some(false) => telemetry.cache_misses += 1,
                None => {}
            }
            messages.push(cap(ChatMessage::tool(call.id.clone(), out.text)));
        }
        if n_tool_steps >= cfg.step_cap {
            hit_step_limit = true;
            messages.push(cap(ChatMessage::user(FORCED_ANSWER_MESSAGE)));
        }
    }

    let predicted = if error.is_some() { Verdict::Unclear } else { parse_verdict(&raw_final) };
    if let Some(e) = &error {
        log::warn!("{} [{} / {}]: {e}", s.id, cfg.model_id, kind.key());
    }
    telemetry.wall_time_ms = start.elapsed().as_millis() as u64;
    RunRecord {
        statement_id: s.id.clone(),
        model_id: cfg.model_id.clone(),
        scenario: kind,
        region: s.region,
        predicted,
        gold: s.gold.into(),
        raw_final,
        n_tool_steps,
        hit_step_limit,
        prompt_chars,
        trajectory: messages,
        error,
        telemetry: cfg.telemetry.then_some(telemetry),
    }
}

/// Aggregate counts over one corpus run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub n: usize,
    pub n_correct: usize,
    pub n_unclear: usize,
    pub n_errors: usize,
    pub n_step_limit: usize,
}

impl RunSummary {
    fn add(&mut self, r: &RunRecord) {
        self.n += 1;
        self.n_correct += r.is_correct() as usize;
        self.n_unclear += (r.predicted == Verdict::Unclear) as usize;
        self.n_errors += r.error.is_some() as usize;
        self.n_step_limit += r.hit_step_limit as usize;
    }

    pub fn accuracy(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.n_correct as f64 / self.n as f64
        }
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} statements, {} correct ({:.1} %), {} unclear, {} errors, {} hit the step limit",
            self.n,
            self.n_correct,
            100.0 * self.accuracy(),
            self.n_unclear,
            self.n_errors,
            self.n_step_limit
        )
    }
}

/// Runs every statement of `corpus`, handing records to `sink` in corpus
/// order. Statements are processed in batches so that memory stays bounded
/// and records reach the sink while later batches are still running.
pub fn run_corpus(
    corpus: &Corpus,
    kind: ScenarioKind,
    cfg: &RunConfig,
    backend: &dyn Backend,
    tools: Option<&dyn ToolExecutor>,
    exec: Execution,
    sink: &mut (dyn FnMut(RunRecord) -> io::Result<()> + Send),
) -> Result<RunSummary, RunError> {
    check_config(cfg, kind, tools)?;
    let batch = match exec {
        Execution::Sequential => 1,
        Execution::Parallel { threads } => threads * 4,
    };
    exec.install(|| {
        let mut summary = RunSummary::default();
        for chunk in corpus.statements.chunks(batch) {
            for record in exec.map(chunk, |s| run_checked(s, kind, cfg, backend, tools)) {
                summary.add(&record);
                sink(record)?;
            }
        }
        Ok(summary)
    })
}

/// [`run_corpus`] collecting the records in memory.
pub fn run_corpus_collect(
    corpus: &Corpus,
    kind: ScenarioKind,
    cfg: &RunConfig,
    backend: &dyn Backend,
    tools: Option<&dyn ToolExecutor>,
    exec: Execution,
) -> Result<Vec<RunRecord>, RunError> {
    let mut out = Vec::with_capacity(corpus.len());
    run_corpus(corpus, kind, cfg, backend, tools, exec, &mut |r| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

/// Keyed replay backend that answers every statement of `corpus` with its
/// gold label on the first turn of `kind`. Useful for checking that the
/// pipeline loses no records.
pub fn echo_gold_backend(corpus: &Corpus, kind: ScenarioKind, cfg: &RunConfig) -> Result<ScriptedBackend, ChatError> {
    let mut replies = HashMap::new();
    for s in &corpus.statements {
        let opening = cfg.prompts.build(s, kind);
        let opening: Vec<ChatMessage> = opening
            .into_iter()
            .map(|m| cap_message(m, cfg.char_cap))
            .collect::<Result<_, _>>()
            .map_err(|e| ChatError::InvalidScript(e.to_string()))?;
        replies.insert(fingerprint(&opening), ChatMessage::assistant(Verdict::from(s.gold).as_str()));
    }
    ScriptedBackend::keyed(replies)
}

/// Reads a record file written by the `run` command.
pub fn read_records(reader: impl io::BufRead) -> io::Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::{scripted_backend, ToolCall, ToolSpec};
    use crate::corpus::{GoldLabel, YearMonth};

    fn statement(id: &str, gold: GoldLabel) -> Statement {
        Statement {
            id: id.into(),
            text: format!("Statement {id}."),
            region: Region::Africa,
            gold,
            source_url: "https://example.org".into(),
            article_text: "x".repeat(400),
            published: YearMonth { year: 2021, month: 3 },
        }
    }

    fn tool_call(i: usize) -> ChatMessage {
        ChatMessage::assistant_tool_calls(vec![ToolCall::new(format!("c{i}"), FETCH_ENTITY, [("entity", "Nowhere")])])
    }

    struct Canned;
    impl ToolExecutor for Canned {
        fn specs(&self) -> Vec<ToolSpec> {
            crate::wikitools::wiki_tool_specs()
        }
        fn execute(&self, call: &ToolCall) -> ToolOutput {
            ToolOutput { text: format!("result for {}", call.id), is_error: false, cache_hit: Some(false) }
        }
    }

    #[test]
    fn scenario_names_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.key().parse::<ScenarioKind>().unwrap(), k);
            assert_eq!(k.label().parse::<ScenarioKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.key()));
        }
        assert!("web".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn immediate_answer() {
        let b = scripted_backend(vec![ChatMessage::assistant("true")]).unwrap();
        let r = run_statement(&statement("a", GoldLabel::True), ScenarioKind::AgentWiki, &RunConfig::new("m"), &b, Some(&Canned))
            .unwrap();
        assert_eq!(r.n_tool_steps, 0);
        assert_eq!(r.predicted, Verdict::True);
        assert!(!r.hit_step_limit);
        assert_eq!(r.trajectory.len(), 3);
        assert!(r.telemetry.is_none());
    }

    #[test]
    fn step_limit_forces_an_answer() {
        let mut script: Vec<ChatMessage> = (0..16).map(tool_call).collect();
        script.push(ChatMessage::assistant("unclear"));
        let b = scripted_backend(script).unwrap();
        let r = run_statement(&statement("a", GoldLabel::False), ScenarioKind::AgentWiki, &RunConfig::new("m"), &b, Some(&Canned))
            .unwrap();
        assert!(r.hit_step_limit);
        assert_eq!(r.n_tool_steps, 15);
        assert_eq!(r.predicted, Verdict::Unclear);
        let forced: Vec<_> = r.trajectory.iter().filter(|m| m.content == FORCED_ANSWER_MESSAGE).collect();
        assert_eq!(forced.len(), 1);
        // the 16th tool call is the final reply and is not executed
        assert!(r.trajectory.last().unwrap().has_tool_calls());
        assert_eq!(r.trajectory.iter().filter(|m| m.role == crate::chat::Role::Tool).count(), 15);
    }

    #[test]
    fn answer_after_forced_message_counts() {
        let mut script: Vec<ChatMessage> = (0..3).map(tool_call).collect();
        script.push(ChatMessage::assistant("false"));
        let b = scripted_backend(script).unwrap();
        let mut cfg = RunConfig::new("m");
        cfg.step_cap = 3;
        let r = run_statement(&statement("a", GoldLabel::False), ScenarioKind::AgentWiki, &cfg, &b, Some(&Canned)).unwrap();
        assert!(r.hit_step_limit);
        assert_eq!(r.predicted, Verdict::False);
        assert!(r.is_correct());
    }

    #[test]
    fn grouped_calls_are_one_step() {
        let grouped = ChatMessage::assistant_tool_calls(vec![
            ToolCall::new("a", FETCH_ENTITY, [("entity", "X")]),
            ToolCall::new("b", FETCH_ENTITY_WITH_HEADER, [("entity", "X"), ("header", "History")]),
        ]);
        let b = scripted_backend(vec![grouped, ChatMessage::assistant("true")]).unwrap();
        let mut cfg = RunConfig::new("m");
        cfg.telemetry = true;
        let r = run_statement(&statement("a", GoldLabel::True), ScenarioKind::AgentWiki, &cfg, &b, Some(&Canned)).unwrap();
        assert_eq!(r.n_tool_steps, 1);
        assert_eq!(r.telemetry.unwrap().cache_misses, 2);
    }

    #[test]
    fn bad_tool_calls_become_error_messages() {
        let mut bad = ToolCall::new("a", FETCH_ENTITY, [("entity", "X")]);
        bad.invalid_arguments = Some("{not json".into());
        let unknown = ToolCall::new("b", "search_the_web", [("q", "X")]);
        let b = scripted_backend(vec![
            ChatMessage::assistant_tool_calls(vec![bad, unknown]),
            ChatMessage::assistant("false"),
        ])
        .unwrap();
        let r = run_statement(&statement("a", GoldLabel::False), ScenarioKind::AgentWiki, &RunConfig::new("m"), &b, Some(&Canned))
            .unwrap();
        let tool_texts: Vec<_> = r.trajectory.iter().filter(|m| m.role == crate::chat::Role::Tool).map(|m| &m.content).collect();
        assert_eq!(tool_texts.len(), 2);
        assert!(tool_texts.iter().all(|t| t.starts_with("Error: ")));
        assert_eq!(r.predicted, Verdict::False);
    }

    #[test]
    fn backend_failure_is_recorded_as_unclear() {
        let b = scripted_backend(vec![ChatMessage::assistant("true")]).unwrap();
        let r = run_statement(&statement("a", GoldLabel::True), ScenarioKind::AgentWiki, &RunConfig::new("m"), &b, Some(&Canned));
        assert_eq!(r.unwrap().predicted, Verdict::True);
        let b = ScriptedBackend::sequence(vec![tool_call(0)]).unwrap();
        let r = run_statement(&statement("a", GoldLabel::True), ScenarioKind::AgentWiki, &RunConfig::new("m"), &b, Some(&Canned))
            .unwrap();
        assert_eq!(r.predicted, Verdict::Unclear);
        assert!(r.error.as_deref().unwrap().contains("exhausted"));
    }

    #[test]
    fn timeout_is_recorded_as_unclear() {
        let b = scripted_backend(vec![tool_call(0), ChatMessage::assistant("true")]).unwrap();
        let mut cfg = RunConfig::new("m");
        cfg.timeout = Duration::ZERO;
        let r = run_statement(&statement("a", GoldLabel::True), ScenarioKind::AgentWiki, &cfg, &b, Some(&Canned)).unwrap();
        assert_eq!(r.predicted, Verdict::Unclear);
        assert!(r.error.unwrap().contains("timed out"));
    }

    #[test]
    fn tools_ignored_outside_agent_scenario() {
        let b = scripted_backend(vec![tool_call(0)]).unwrap();
        let r = run_statement(&statement("a", GoldLabel::True), ScenarioKind::StatementOnly, &RunConfig::new("m"), &b, None)
            .unwrap();
        assert_eq!(r.n_tool_steps, 0);
        assert_eq!(r.predicted, Verdict::Unclear);
        assert_eq!(r.trajectory.len(), 3);
    }

    #[test]
    fn agent_requires_wiki_tools() {
        let b = scripted_backend(vec![ChatMessage::assistant("true")]).unwrap();
        let s = statement("a", GoldLabel::True);
        assert!(matches!(
            run_statement(&s, ScenarioKind::AgentWiki, &RunConfig::new("m"), &b, None),
            Err(RunError::Config(_))
        ));
    }

    #[test]
    fn records_round_trip_as_json_lines() {
        let b = scripted_backend(vec![tool_call(0), ChatMessage::assistant("false")]).unwrap();
        let r = run_statement(&statement("a", GoldLabel::False), ScenarioKind::AgentWiki, &RunConfig::new("m"), &b, Some(&Canned))
            .unwrap();
        let line = r.to_json_line();
        assert!(!line.contains('\n'));
        let back = read_records(io::Cursor::new(format!("{line}\n\n{line}\n"))).unwrap();
        assert_eq!(back, vec![r.clone(), r]);
    }

    #[test]
    fn corpus_order_is_preserved() {
        let statements: Vec<Statement> = (0..23)
            .map(|i| statement(&format!("s{i:02}"), if i % 2 == 0 { GoldLabel::True } else { GoldLabel::False }))
            .collect();
        let corpus = Corpus::new(statements);
        let b = scripted_backend(vec![ChatMessage::assistant("true")]).unwrap();
        let cfg = RunConfig::new("m");
        for exec in [Execution::Sequential, Execution::with_parallelism(4)] {
            let recs = run_corpus_collect(&corpus, ScenarioKind::StatementOnly, &cfg, &b, None, exec).unwrap();
            let ids: Vec<_> = recs.iter().map(|r| r.statement_id.clone()).collect();
            let expected: Vec<_> = corpus.statements.iter().map(|s| s.id.clone()).collect();
            assert_eq!(ids, expected);
            assert_eq!(recs.iter().filter(|r| r.is_correct()).count(), 12);
        }
    }

    #[test]
    fn sink_failure_aborts() {
        let corpus = Corpus::new(vec![statement("a", GoldLabel::True), statement("b", GoldLabel::True)]);
        let b = scripted_backend(vec![ChatMessage::assistant("true")]).unwrap();
        let mut seen = 0;
        let res = run_corpus(&corpus, ScenarioKind::StatementOnly, &RunConfig::new("m"), &b, None, Execution::Sequential, &mut |_| {
            seen += 1;
            Err(io::Error::other("disk full"))
        });
        assert!(matches!(res, Err(RunError::Sink(_))));
        assert_eq!(seen, 1);
    }
}
