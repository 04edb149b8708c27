//! Task datasets on disk: a header line with the scene parameters, then one
//! task configuration per line.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use objdis_core::scene::{SceneParams, TaskConfig, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub scene_params: SceneParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub params: SceneParams,
    pub configs: Vec<TaskConfig>,
}

impl Dataset {
    pub fn to_jsonl(&self) -> String {
        let header = DatasetHeader {
            schema_version: SCHEMA_VERSION,
            scene_params: self.params.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for c in &self.configs {
            out.push_str(&c.to_json());
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Dataset> {
        let err = |reason: String| HarnessError::Dataset {
            path: path.display().to_string(),
            reason,
        };
        let file = fs::File::open(path).map_err(|e| err(e.to_string()))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| err("empty file".into()))?
            .map_err(|e| err(e.to_string()))?;
        let header: DatasetHeader =
            serde_json::from_str(&header).map_err(|e| err(format!("header: {e}")))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(err(format!(
                "schema_version {} (expected {SCHEMA_VERSION})",
                header.schema_version
            )));
        }
        let mut configs = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            configs.push(TaskConfig::from_json(&line).map_err(|e| err(format!("line {}: {e}", i + 2)))?);
        }
        Ok(Dataset {
            params: header.scene_params,
            configs,
        })
    }
}
