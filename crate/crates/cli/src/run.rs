//! Per-invocation plumbing: output directories, config overrides, report
//! encoding and the `run.json` record.

use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use stylus_core::{Error, Result};

use crate::{Command, Format, GlobalArgs};

pub struct RunContext {
    pub command: Command,
    pub global: GlobalArgs,
    dir: PathBuf,
    overrides: Map<String, Value>,
    params: Map<String, Value>,
    artifacts: Vec<PathBuf>,
    notes: Vec<String>,
    started: Instant,
}

fn read_overrides(raw: &str, command: Command) -> Result<Map<String, Value>> {
    let text = if raw.trim_start().starts_with('{') {
        raw.to_string()
    } else {
        std::fs::read_to_string(raw).map_err(|e| Error::io(raw, e))?
    };
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Error::validation(format!("--config is not valid JSON: {e}")))?;
    let Value::Object(mut root) = value else {
        return Err(Error::validation("--config must be a JSON object"));
    };
    // a config grouped by subcommand contributes only this command's section
    let grouped = root
        .iter()
        .any(|(k, v)| v.is_object() && Command::ALL.iter().any(|c| c.name() == k));
    if !grouped {
        return Ok(root);
    }
    match root.remove(command.name()) {
        Some(Value::Object(section)) => Ok(section),
        Some(_) => Err(Error::validation(format!("config section {:?} must be an object", command.name()))),
        None => Ok(Map::new()),
    }
}

/// Overlays `over` onto `base`, refusing keys the base does not have.
fn merge(base: &mut Map<String, Value>, over: &Map<String, Value>, prefix: &str) -> Result<()> {
    for (key, value) in over {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match base.get_mut(key) {
            None => {
                let known: Vec<&String> = base.keys().collect();
                return Err(Error::validation(format!("unknown config key {path:?}; expected one of {known:?}")));
            }
            Some(Value::Object(inner)) if value.is_object() => {
                merge(inner, value.as_object().expect("checked"), &path)?;
            }
            Some(slot) => *slot = value.clone(),
        }
    }
    Ok(())
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

/// Cell text as JSON: canonical integers and decimals become numbers.
fn cell_value(s: &str) -> Value {
    if let Ok(i) = s.parse::<i64>() {
        if i.to_string() == s {
            return Value::from(i);
        }
    }
    let leading_zero = s.len() > 1 && s.starts_with('0') && s.as_bytes()[1].is_ascii_digit();
    if !leading_zero && !s.starts_with('+') {
        if let Ok(f) = s.parse::<f64>() {
            return serde_json::Number::from_f64(f).map(Value::Number).unwrap_or(Value::Null);
        }
    }
    match s {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => Value::String(s.to_string()),
    }
}

fn csv_to_json(csv_path: &Path, json_path: &Path) -> Result<()> {
    let mut r = csv::Reader::from_path(csv_path)?;
    let headers = r.headers()?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let obj: Map<String, Value> = headers
            .iter()
            .zip(rec.iter())
            .map(|(h, v)| (h.to_string(), cell_value(v)))
            .collect();
        rows.push(Value::Object(obj));
    }
    write_json(json_path, &rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl RunContext {
    pub fn new(command: Command, global: GlobalArgs) -> Result<Self> {
        let overrides = match &global.config {
            Some(raw) => read_overrides(raw, command)?,
            None => Map::new(),
        };
        let dir = match command {
            Command::GenSynthetic => global.out.clone(),
            other => global.out.join(other.name()),
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(RunContext {
            command,
            global,
            dir,
            overrides,
            params: Map::new(),
            artifacts: Vec::new(),
            notes: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Parameters for this stage: `T::default()` with the overrides applied.
    pub fn params<T: Serialize + DeserializeOwned + Default>(&mut self) -> Result<T> {
        let Value::Object(mut base) = serde_json::to_value(T::default())? else {
            return Err(Error::validation("stage parameters must serialise to an object"));
        };
        merge(&mut base, &self.overrides, "")?;
        let parsed: T = serde_json::from_value(Value::Object(base.clone()))
            .map_err(|e| Error::validation(format!("invalid config for {}: {e}", self.command.name())))?;
        self.params = base;
        Ok(parsed)
    }

    /// Replaces one recorded parameter, for values the stage derives itself.
    pub fn set_param(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.params.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn manifest(&self) -> Result<&Path> {
        self.global
            .manifest
            .as_deref()
            .ok_or_else(|| Error::validation(format!("{} needs --manifest", self.command.name())))
    }

    pub fn seed(&self) -> u64 {
        self.global.seed
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path of an artifact in this stage's directory, recorded in `run.json`.
    pub fn artifact(&mut self, name: impl AsRef<Path>) -> PathBuf {
        let path = self.dir.join(name.as_ref());
        self.artifacts.push(name.as_ref().to_path_buf());
        path
    }

    /// A file produced by an earlier stage under the same output root.
    pub fn input(&self, stage: Command, name: &str) -> Result<PathBuf> {
        let path = self.global.out.join(stage.name()).join(name);
        if !path.exists() {
            return Err(Error::io(
                &path,
                io::Error::new(io::ErrorKind::NotFound, format!("run `stylus {}` first", stage.name())),
            ));
        }
        Ok(path)
    }

    /// Writes a table as `<stem>.csv`, or converts it to `<stem>.json` when
    /// `--format json` is set.
    pub fn write_table(&mut self, stem: &str, write_csv: impl FnOnce(&Path) -> Result<()>) -> Result<PathBuf> {
        let csv_path = self.dir.join(format!("{stem}.csv"));
        write_csv(&csv_path)?;
        match self.global.format {
            Format::Csv => {
                self.artifacts.push(format!("{stem}.csv").into());
                Ok(csv_path)
            }
            Format::Json => {
                let json_path = self.artifact(format!("{stem}.json"));
                csv_to_json(&csv_path, &json_path)?;
                std::fs::remove_file(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
                Ok(json_path)
            }
        }
    }

    /// Logs a warning and keeps it in `run.json`.
    pub fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.notes.push(msg);
    }

    /// Writes `run.json`. Wall time makes this the one file that differs
    /// between otherwise identical runs.
    pub fn finish(self) -> Result<()> {
        let record = serde_json::json!({
            "command": self.command.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "git_describe": git_describe(),
            "seed": self.global.seed,
            "threads": rayon::current_num_threads(),
            "format": self.global.format,
            "manifest": self.global.manifest,
            "out": self.global.out,
            "config": Value::Object(self.params),
            "artifacts": self.artifacts,
            "notes": self.notes,
            "wall_seconds": self.started.elapsed().as_secs_f64(),
        });
        write_json(&self.dir.join("run.json"), &record)
    }
}
