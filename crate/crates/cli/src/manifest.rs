//! Run manifests: everything needed to reproduce an output.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{Command, ReplayArgs};
use crate::{commands, io};

pub struct Context {
    pub seed: u64,
    pub threads: Option<usize>,
    /// Resolved configuration recorded by an earlier run; replaces config files.
    pub embedded_config: Option<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config: Value,
    pub command: Command,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<PathBuf>,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Written next to the first output.
pub fn write(
    ctx: &Context,
    command: &Command,
    config: Value,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> anyhow::Result<()> {
    let Some(first) = outputs.first() else { return Ok(()) };
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: commands::name(command),
        seed: ctx.seed,
        threads: ctx.threads,
        config,
        command: command.clone(),
        inputs: inputs
            .iter()
            .map(|p| Ok(FileDigest { path: p.clone(), sha256: io::sha256_hex(p)? }))
            .collect::<anyhow::Result<_>>()?,
        outputs: outputs.to_vec(),
    };
    io::write_json(&manifest_path(first), &m)
}

pub fn replay(args: &ReplayArgs, threads: Option<usize>) -> anyhow::Result<()> {
    let m: Manifest = io::read_json(&args.manifest)?;
    if m.version != env!("CARGO_PKG_VERSION") {
        eprintln!("warning: manifest written by version {}, replaying with {}", m.version, env!("CARGO_PKG_VERSION"));
    }
    for d in &m.inputs {
        let now = io::sha256_hex(&d.path).with_context(|| format!("input {} of the manifest", d.path.display()))?;
        if now != d.sha256 {
            bail!("input {} changed since the manifest was written", d.path.display());
        }
    }
    if threads.is_none() {
        if let Some(n) = m.threads {
            rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
        }
    }
    let mut command = m.command.clone();
    if let Some(dir) = &args.out_dir {
        for p in commands::outputs_mut(&mut command) {
            let name = p.file_name().context("output path has no file name")?.to_owned();
            *p = dir.join(name);
        }
    }
    let ctx = Context {
        seed: m.seed,
        threads: threads.or(m.threads),
        embedded_config: Some(m.config),
    };
    commands::execute(command, &ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("a/b.csv")), PathBuf::from("a/b.csv.manifest.json"));
    }
}
