#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geocheck_core::corpus::{Region, Verdict};
use geocheck_core::runner::{RunRecord, ScenarioKind};

pub fn core_fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

pub fn geocheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geocheck"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Offline config: recorded Wikipedia pages, in-memory cache, four workers.
pub fn fixture_config(dir: &Path) -> PathBuf {
    let path = dir.join("offline.toml");
    let wiki = core_fixture("wiki").canonicalize().unwrap();
    std::fs::write(&path, format!("model_id = \"gpt-4o\"\nparallelism = 4\nwiki_fixtures = {:?}\n", wiki)).unwrap();
    path
}

const PREDICTED: [Verdict; 3] = [Verdict::True, Verdict::False, Verdict::Unclear];

/// One record per counted outcome in the confusion fixture; regions cycle so every
/// (model, scenario, region) cell is populated.
pub fn records_from_confusion_csv(text: &str) -> Vec<RunRecord> {
    let mut out = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let (model, scenario, actual) = (f[0], f[1].parse::<ScenarioKind>().unwrap(), f[2]);
        let gold = if actual == "true" { Verdict::True } else { Verdict::False };
        let mut i = 0;
        for (col, predicted) in PREDICTED.iter().enumerate() {
            let n: usize = f[3 + col].parse().unwrap();
            for _ in 0..n {
                out.push(RunRecord {
                    statement_id: format!("{model}/{}/{actual}/{i:03}", scenario.key()),
                    model_id: model.to_string(),
                    scenario,
                    region: Region::ALL[i % 6],
                    predicted: *predicted,
                    gold,
                    raw_final: String::new(),
                    n_tool_steps: 0,
                    hit_step_limit: false,
                    prompt_chars: 0,
                    trajectory: Vec::new(),
                    error: None,
                    telemetry: None,
                });
                i += 1;
            }
        }
    }
    out
}

pub fn write_records(path: &Path, records: &[RunRecord]) {
    let body: String = records.iter().map(|r| r.to_json_line() + "\n").collect();
    std::fs::write(path, body).unwrap();
}
