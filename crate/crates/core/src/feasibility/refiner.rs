use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedstore::{read_binary, write_binary, EmbeddingTable};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Maps an embedding table to a refined table with the same labels, order and dim.
pub trait Refiner: Sync {
    fn name(&self) -> String;
    fn refine(&self, table: &EmbeddingTable) -> Result<EmbeddingTable>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRefiner;

impl Refiner for IdentityRefiner {
    fn name(&self) -> String {
        "identity".into()
    }

    fn refine(&self, table: &EmbeddingTable) -> Result<EmbeddingTable> {
        Ok(table.clone())
    }
}

/// One residual self-attention layer over rows. Matrices are stored as
/// nested arrays, `wq`/`wk` are `dim × dk`, `wv` is `dim × dv`, `wo` is `dv × dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionLayer {
    pub wq: Vec<Vec<f64>>,
    pub wk: Vec<Vec<f64>>,
    pub wv: Vec<Vec<f64>>,
    pub wo: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub layers: Vec<AttentionLayer>,
}

fn mat(name: &str, rows: &[Vec<f64>], r: usize, c: Option<usize>) -> Result<Matrix> {
    let m = Matrix::from_rows(rows).map_err(|e| Error::Shape(format!("{name}: {e}")))?;
    if m.rows() != r || c.is_some_and(|c| m.cols() != c) {
        return Err(Error::Shape(format!(
            "{name} is {}x{}, expected {r}x{}",
            m.rows(),
            m.cols(),
            c.map_or("_".to_string(), |c| c.to_string())
        )));
    }
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
    }
    Ok(m)
}

impl AttentionLayer {
    /// Gaussian init with standard deviation `scale / sqrt(dim)`.
    pub fn random(dim: usize, dk: usize, scale: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let normal = Normal::new(0.0, scale / (dim as f64).sqrt()).expect("finite scale");
        let mut draw = |r: usize, c: usize| -> Vec<Vec<f64>> {
            (0..r).map(|_| (0..c).map(|_| normal.sample(&mut rng)).collect()).collect()
        };
        Self {
            wq: draw(dim, dk),
            wk: draw(dim, dk),
            wv: draw(dim, dim),
            wo: draw(dim, dim),
        }
    }

    /// `X + softmax(Q Kᵀ / √dk) V Wo`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let dim = x.cols();
        let wq = mat("wq", &self.wq, dim, None)?;
        let dk = wq.cols();
        let wk = mat("wk", &self.wk, dim, Some(dk))?;
        let wv = mat("wv", &self.wv, dim, None)?;
        let wo = mat("wo", &self.wo, wv.cols(), Some(dim))?;
        let q = x.matmul(&wq)?;
        let k = x.matmul(&wk)?;
        let v = x.matmul(&wv)?;
        let mut scores = q.matmul(&k.transpose())?;
        let scale = 1.0 / (dk.max(1) as f64).sqrt();
        for r in 0..scores.rows() {
            let row = scores.row_mut(r);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s * scale));
            let mut sum = 0.0;
            for s in row.iter_mut() {
                *s = (*s * scale - max).exp();
                sum += *s;
            }
            row.iter_mut().for_each(|s| *s /= sum);
        }
        let out = scores.matmul(&v)?.matmul(&wo)?;
        let data = x.as_slice().iter().zip(out.as_slice()).map(|(a, b)| a + b).collect();
        Matrix::from_vec(x.rows(), dim, data)
    }
}

impl AttentionWeights {
    pub fn random(dim: usize, dk: usize, depth: usize, scale: f64, seed: u64) -> Self {
        Self {
            layers: (0..depth)
                .map(|i| AttentionLayer::random(dim, dk, scale, seed::derive_index(seed, i as u64)))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Apply every layer of `weights` in order. Row order is preserved.
pub fn toy_attention_refine(table: &EmbeddingTable, weights: &AttentionWeights) -> Result<EmbeddingTable> {
    let mut x = table.matrix().clone();
    for layer in &weights.layers {
        x = layer.apply(&x)?;
    }
    table.with_matrix(x)
}

#[derive(Debug, Clone)]
pub struct AttentionRefiner {
    pub weights: AttentionWeights,
}

impl Refiner for AttentionRefiner {
    fn name(&self) -> String {
        format!("attention[{}]", self.weights.layers.len())
    }

    fn refine(&self, table: &EmbeddingTable) -> Result<EmbeddingTable> {
        toy_attention_refine(table, &self.weights)
    }
}

/// Runs `<program> [args..] <input.emb> <output.emb>` in a scratch directory.
#[derive(Debug, Clone)]
pub struct ExternalRefiner {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(300);

impl ExternalRefiner {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
            timeout: DEFAULT_EXTERNAL_TIMEOUT,
        }
    }

    /// Splits a command line on whitespace into program and leading args.
    pub fn from_command_line(cmd: &str) -> Result<Self> {
        let mut parts = cmd.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty refiner command".into()))?;
        Ok(Self {
            program: program.into(),
            args: parts.map(str::to_string).collect(),
            timeout: DEFAULT_EXTERNAL_TIMEOUT,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Refiner for ExternalRefiner {
    fn name(&self) -> String {
        let mut s = self.program.display().to_string();
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        s
    }

    fn refine(&self, table: &EmbeddingTable) -> Result<EmbeddingTable> {
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let input = dir.path().join("input.emb");
        let output = dir.path().join("output.emb");
        let stderr_path = dir.path().join("stderr.txt");
        {
            let f = File::create(&input).map_err(|e| Error::io(&input, e))?;
            let mut w = BufWriter::new(f);
            write_binary(table, &mut w)?;
            std::io::Write::flush(&mut w).map_err(|e| Error::io(&input, e))?;
        }
        let stderr = File::create(&stderr_path).map_err(|e| Error::io(&stderr_path, e))?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(&input)
            .arg(&output)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(stderr)
            .spawn()
            .map_err(|e| Error::io(&self.program, e))?;
        let start = Instant::now();
        let status = loop {
            match child.try_wait().map_err(|e| Error::io(&self.program, e))? {
                Some(s) => break s,
                None if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::InvalidArgument(format!(
                        "`{}` timed out after {:?}",
                        self.name(),
                        self.timeout
                    )));
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        };
        if !status.success() {
            let err = std::fs::read_to_string(&stderr_path).unwrap_or_default();
            return Err(Error::InvalidArgument(format!(
                "`{}` exited with {status}: {}",
                self.name(),
                err.trim()
            )));
        }
        let f = File::open(&output).map_err(|e| Error::io(&output, e))?;
        read_binary(&mut BufReader::new(f))
    }
}
