//! Losses from a third-party program. The command receives the candidate
//! and seed in environment variables and prints the loss as the last line
//! of its standard output.
//!
//! | variable           | content                               |
//! |--------------------|---------------------------------------|
//! | `RLAB_SPEC`        | candidate description as JSON         |
//! | `RLAB_SPEC_INDEX`  | position of the candidate in the list |
//! | `RLAB_ROUND`       | selection round, from 1               |
//! | `RLAB_SEED`        | seed for this instance                |

use std::process::Command;

use serde::Serialize;

use crate::error::{Error, Result};

pub struct ExternalTrainer {
    program: String,
    args: Vec<String>,
}

impl ExternalTrainer {
    pub fn new(command: &[String]) -> Result<Self> {
        let (program, args) =
            command.split_first().ok_or_else(|| Error::Config("external trainer command is empty".into()))?;
        Ok(Self { program: program.clone(), args: args.to_vec() })
    }

    pub fn loss<S: Serialize>(&self, spec: &S, index: usize, round: usize, seed: u64) -> Result<f64> {
        let json = serde_json::to_string(spec)?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .env("RLAB_SPEC", json)
            .env("RLAB_SPEC_INDEX", index.to_string())
            .env("RLAB_ROUND", round.to_string())
            .env("RLAB_SEED", seed.to_string())
            .output()
            .map_err(|e| Error::External(format!("cannot run {}: {e}", self.program)))?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            return Err(Error::External(format!("{} exited with {}: {}", self.program, out.status, stderr.trim())));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        let last = stdout.lines().rev().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
        last.parse().map_err(|_| Error::External(format!("{} printed {last:?} instead of a loss", self.program)))
    }
}
