use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{load_checkpoint, Parameters};
use crate::pruner::{load_mask, save_mask, surgery, PruneMask};
use crate::trainer::predict;

pub const DEFAULT_MAX_STEPS: usize = 16;

/// A directory of per-task masks named `<task>.mask.json`.
#[derive(Debug, Clone)]
pub struct MaskStore {
    dir: PathBuf,
}

impl MaskStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        MaskStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, task: &str) -> PathBuf {
        self.dir.join(format!("{task}.mask.json"))
    }

    pub fn save(&self, task: &str, mask: &PruneMask) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path(task);
        save_mask(&path, mask)?;
        Ok(path)
    }

    pub fn load(&self, task: &str) -> Result<PruneMask> {
        let path = self.path(task);
        if !path.exists() {
            return Err(Error::MissingMask(task.to_string()));
        }
        load_mask(path)
    }

    /// Tasks with a stored mask, sorted.
    pub fn tasks(&self) -> Result<Vec<String>> {
        let Ok(entries) = fs::read_dir(&self.dir) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for e in entries {
            let e = e.map_err(|err| Error::io(&self.dir, err))?;
            if let Some(task) = e.file_name().to_str().and_then(|n| n.strip_suffix(".mask.json")) {
                out.push(task.to_string());
            }
        }
        out.sort();
        Ok(out)
    }
}

/// Holds one loaded checkpoint and serves any task by pruning a copy of it
/// on request.
pub struct Server {
    params: Parameters,
    store: MaskStore,
    pub max_steps: usize,
}

impl Server {
    pub fn new(params: Parameters, store: MaskStore) -> Self {
        Server {
            params,
            store,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    /// Greedy outputs of the task-pruned model for each full model input.
    pub fn serve(&self, task: &str, inputs: &[String]) -> Result<Vec<String>> {
        let mask = self.store.load(task)?;
        let pruned = surgery(&self.params, &mask)?;
        inputs
            .par_iter()
            .map(|x| predict(&pruned, x, self.max_steps))
            .collect()
    }
}

pub fn infer_on_demand(task: &str, inputs: &[String], store: &MaskStore, checkpoint: impl AsRef<Path>) -> Result<Vec<String>> {
    let params = load_checkpoint(checkpoint)?;
    Server::new(params, store.clone()).serve(task, inputs)
}
