//! Output files stamped with the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::PipelineConfig;
use crate::CliError;

pub struct Outputs {
    dir: PathBuf,
    provenance: Value,
    pub written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Result<Self, CliError> {
        let dir = PathBuf::from(&cfg.out_dir);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let provenance = json!({
            "tool": "discoconf",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "variant": cfg.variant(),
            "config": cfg,
        });
        Ok(Self {
            dir,
            provenance,
            written: Vec::new(),
        })
    }

    fn header_line(&self) -> String {
        format!("discoconf provenance: {}", self.provenance)
    }

    /// Adds the provenance header in the comment syntax of the file type.
    fn stamp(&self, name: &str, body: &str) -> String {
        match Path::new(name).extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let mut v: Value = serde_json::from_str(body).expect("outputs are valid JSON");
                match v.as_object_mut() {
                    Some(obj) => {
                        obj.insert("provenance".into(), self.provenance.clone());
                    }
                    None => v = json!({ "provenance": self.provenance, "result": v }),
                }
                let mut s = serde_json::to_string_pretty(&v).expect("serializable");
                s.push('\n');
                s
            }
            Some("svg") => {
                // "--" may not appear inside an XML comment
                let text = self.header_line().replace("--", "- -");
                format!("<!-- {text} -->\n{body}")
            }
            _ => format!("# {}\n{body}", self.header_line()),
        }
    }

    pub fn write(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, self.stamp(name, body)).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}
