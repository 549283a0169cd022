use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::error::{CliError, Result};

/// Append-only JSON-lines event log.
pub struct RunLog {
    file: Option<Mutex<File>>,
    command: String,
}

impl RunLog {
    pub fn open(path: &Path, command: &str) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            file: Some(Mutex::new(file)),
            command: command.to_string(),
        })
    }

    pub fn disabled() -> Self {
        Self {
            file: None,
            command: String::new(),
        }
    }

    pub fn event(&self, level: &str, event: &str, fields: Value) {
        let Some(file) = &self.file else { return };
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
        let line = json!({
            "ts_ms": ts as u64,
            "level": level,
            "command": self.command,
            "event": event,
            "fields": fields,
        });
        if let Ok(mut f) = file.lock() {
            // A failed log write should not abort the command.
            let _ = writeln!(f, "{line}");
        }
    }

    pub fn info(&self, event: &str, fields: Value) {
        self.event("info", event, fields);
    }

    pub fn warn(&self, event: &str, fields: Value) {
        self.event("warn", event, fields);
    }

    pub fn error(&self, event: &str, fields: Value) {
        self.event("error", event, fields);
    }
}
