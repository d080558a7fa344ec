//! Progress reporting on stderr: plain lines for people, one JSON object
//! per line when `--json` is set. Output files never share the stream.

use serde_json::{json, Value};

pub struct Progress {
    command: &'static str,
    json: bool,
}

impl Progress {
    pub fn new(command: &'static str, json: bool) -> Self {
        Progress { command, json }
    }

    /// Emits one progress line. `detail` must be a JSON object; its fields
    /// are merged into the machine-readable record.
    pub fn emit(&self, event: &str, human: &str, detail: Value) {
        if self.json {
            let mut record = json!({
                "command": self.command,
                "event": event,
            });
            if let (Value::Object(target), Value::Object(fields)) = (&mut record, detail) {
                target.extend(fields);
            }
            eprintln!("{record}");
        } else {
            eprintln!("{}: {human}", self.command);
        }
    }

    pub fn error(&self, message: &str, exit_code: u8) {
        if self.json {
            let record = json!({
                "command": self.command,
                "event": "error",
                "message": message,
                "exit_code": exit_code,
            });
            eprintln!("{record}");
        } else {
            eprintln!("{}: error: {message}", self.command);
        }
    }
}
