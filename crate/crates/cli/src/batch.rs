//! Batch mode: one task over every `*.json` file in a directory, on a bounded
//! pool of worker threads.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context as _, Result};
use serde_json::{json, Value};

use crate::commands::{self, Context, Outcome, Task};
use crate::files;

pub struct BatchSummary {
    pub code: u8,
    pub summary: Value,
}

pub fn list_inputs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut inputs = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            inputs.push(path);
        }
    }
    inputs.sort();
    Ok(inputs)
}

/// Redirects a task's side outputs into `out_dir`, named after `input`.
fn task_for(task: &Task, input: &Path, out_dir: &Path) -> Task {
    let stem = commands::stem_path(Path::new(input.file_name().expect("listed files have names")));
    let base = out_dir.join(stem);
    let named = |suffix: &str| {
        let mut s = base.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    match task.clone() {
        Task::Scale { opts, history } => Task::Scale { opts, history: history.map(|_| named(".history.json")) },
        Task::Fnf { opts, .. } => Task::Fnf { opts, out: Some(base.clone()) },
        Task::Tilde { opts, check, .. } => Task::Tilde { opts, out: Some(named(".tilde.json")), check },
        t @ Task::Support { .. } => t,
    }
}

/// Runs `task` on every input. `finish` turns an outcome into the final
/// report (header added, side files written) and returns the exit code.
pub fn run(
    ctx: &Context,
    task: &Task,
    dir: &Path,
    out_dir: &Path,
    jobs: usize,
    finish: impl Fn(&Path, Outcome) -> (u8, Value) + Sync,
) -> Result<BatchSummary> {
    let inputs = list_inputs(dir)?;
    if inputs.is_empty() {
        bail!("no .json inputs in {}", dir.display());
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Value>>> = Mutex::new(vec![None; inputs.len()]);
    let workers = jobs.clamp(1, inputs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(input) = inputs.get(idx) else { break };
                let job = task_for(task, input, out_dir);
                let outcome = commands::run_task(ctx, &job, input);
                let (code, report) = finish(input, outcome);
                let stem = commands::stem_path(Path::new(input.file_name().expect("listed")));
                let mut name = out_dir.join(stem).into_os_string();
                name.push(".report.json");
                let report_path = PathBuf::from(name);
                let written = files::write_json_atomic(&report_path, &report);
                let entry = json!({
                    "input": input.display().to_string(),
                    "report": report_path.display().to_string(),
                    "exit_code": code,
                    "verdict": report.get("verdict").cloned().unwrap_or(Value::Null),
                    "error": written.err().map(|e| format!("{e:#}")).or_else(|| {
                        report.get("error").and_then(Value::as_str).map(str::to_string)
                    }),
                });
                results.lock().expect("no worker panics while holding the lock")[idx] = Some(entry);
            });
        }
    });
    let entries: Vec<Value> = results.into_inner().expect("workers joined").into_iter().map(Option::unwrap).collect();
    let code = entries.iter().filter_map(|e| e["exit_code"].as_u64()).max().unwrap_or(0) as u8;
    let summary = json!({
        "command": task.name(),
        "inputs": entries.len(),
        "exit_code": code,
        "results": entries,
    });
    files::write_json_atomic(&out_dir.join("summary.json"), &summary)?;
    Ok(BatchSummary { code, summary })
}
