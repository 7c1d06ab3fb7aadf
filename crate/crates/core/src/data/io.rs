//! JSONL example files and on-disk suites.
//!
//! A suite directory holds one subdirectory per task:
//!
//! ```text
//! <dir>/<task>/spec.json    TaskSpec
//! <dir>/<task>/train.jsonl  {"input": ..., "label": ...} per line
//! <dir>/<task>/dev.jsonl
//! <dir>/<task>/test.jsonl
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::tasks::{Example, Suite, TaskData, TaskSpec};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct Line {
    input: Option<String>,
    label: Option<String>,
}

/// Read examples, one JSON object per line. Blank lines are skipped.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let parsed: Line = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let input = parsed
            .input
            .ok_or_else(|| parse_err("missing field `input`".into()))?;
        let label = parsed
            .label
            .ok_or_else(|| parse_err("missing field `label`".into()))?;
        out.push(Example { input, label });
    }
    Ok(out)
}

pub fn save_jsonl(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_task_spec(path: impl AsRef<Path>, spec: &TaskSpec) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(spec)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_task_spec(path: impl AsRef<Path>) -> Result<TaskSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: TaskSpec = serde_json::from_str(&text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn save_suite(dir: impl AsRef<Path>, suite: &Suite) -> Result<()> {
    let dir = dir.as_ref();
    for task in &suite.tasks {
        let tdir = dir.join(&task.spec.name);
        fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        save_task_spec(tdir.join("spec.json"), &task.spec)?;
        save_jsonl(tdir.join("train.jsonl"), &task.train)?;
        save_jsonl(tdir.join("dev.jsonl"), &task.dev)?;
        save_jsonl(tdir.join("test.jsonl"), &task.test)?;
    }
    Ok(())
}

/// Load every task subdirectory (sorted by name) of a suite directory.
pub fn load_suite(dir: impl AsRef<Path>) -> Result<Suite> {
    let dir = dir.as_ref();
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().join("spec.json").is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    let mut tasks = Vec::new();
    for name in names {
        let tdir = dir.join(&name);
        let spec = load_task_spec(tdir.join("spec.json"))?;
        tasks.push(TaskData {
            spec,
            train: load_jsonl(tdir.join("train.jsonl"))?,
            dev: load_jsonl(tdir.join("dev.jsonl"))?,
            test: load_jsonl(tdir.join("test.jsonl"))?,
        });
    }
    if tasks.is_empty() {
        return Err(Error::input(format!("no tasks found under {}", dir.display())));
    }
    Ok(Suite { tasks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        let exs = vec![
            Example::new("polarity: \"quoted\" text", "POS"),
            Example::new("nli-a: a\\b", "no"),
        ];
        save_jsonl(&p, &exs).unwrap();
        assert_eq!(load_jsonl(&p).unwrap(), exs);
    }

    #[test]
    fn empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        fs::write(&p, "").unwrap();
        assert!(load_jsonl(&p).unwrap().is_empty());
    }

    #[test]
    fn missing_label_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        fs::write(&p, "{\"input\":\"a\",\"label\":\"b\"}\n{\"input\":\"c\"}\n").unwrap();
        match load_jsonl(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("label"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        fs::write(&p, "not json\n").unwrap();
        assert!(matches!(load_jsonl(&p), Err(Error::Parse { line: 1, .. })));
    }
}
