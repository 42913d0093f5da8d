//! Dataset loading, synthesis, and deterministic batch streaming.
//!
//! Rows are quantized once at load to scale-2^R integers; the batch order is
//! a seeded shuffle redrawn each epoch, so the full batch stream is a pure
//! function of (dataset bytes, seed).

use crate::quant::{quantize, QuantParams};
use crate::schema::{domain_rng, uniform_below, uniform_range};
use rand_chacha::ChaCha20Rng;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("bad header: {0}")]
    Header(String),
    #[error("dataset has {got} label columns, config expects {expected}")]
    LabelMismatch { expected: usize, got: usize },
    #[error("value at row {row}, column {col} overflows the {bits}-bit budget")]
    Range { row: usize, col: usize, bits: u32 },
    #[error("dataset is empty")]
    Empty,
}

/// Quantized dataset: row-major features and labels at scale 2^R.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub input_dim: usize,
    pub out_dim: usize,
    pub features: Vec<i128>,
    pub labels: Vec<i128>,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.features.len() / self.input_dim
    }

    fn feature_row(&self, r: usize) -> &[i128] {
        &self.features[r * self.input_dim..(r + 1) * self.input_dim]
    }

    fn label_row(&self, r: usize) -> &[i128] {
        &self.labels[r * self.out_dim..(r + 1) * self.out_dim]
    }

    fn check_range(self, params: &QuantParams) -> Result<Self, DataError> {
        let bound = params.bound();
        for (i, v) in self.features.iter().chain(self.labels.iter()).enumerate() {
            if *v < -bound || *v >= bound {
                let flat = if i < self.features.len() {
                    (i / self.input_dim, i % self.input_dim)
                } else {
                    let j = i - self.features.len();
                    (j / self.out_dim, self.input_dim + j % self.out_dim)
                };
                return Err(DataError::Range {
                    row: flat.0,
                    col: flat.1,
                    bits: params.total_bits(),
                });
            }
        }
        Ok(self)
    }
}

/// Loads a CSV with a header row, float feature columns, then `out_dim`
/// label columns. The feature count is inferred from the header width.
pub fn load_csv(path: &Path, out_dim: usize, params: &QuantParams) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DataError::Empty)?;
    let n_cols = header.split(',').count();
    if n_cols <= out_dim {
        return Err(DataError::LabelMismatch { expected: out_dim, got: n_cols.saturating_sub(1) });
    }
    let input_dim = n_cols - out_dim;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(DataError::Parse {
                line: idx + 1,
                col: fields.len(),
                msg: format!("expected {n_cols} columns, found {}", fields.len()),
            });
        }
        for (c, f) in fields.iter().enumerate() {
            let x: f64 = f.trim().parse().map_err(|e| DataError::Parse {
                line: idx + 1,
                col: c + 1,
                msg: format!("{e}"),
            })?;
            let q = quantize(x, params.r_bits) as i128;
            if c < input_dim {
                features.push(q);
            } else {
                labels.push(q);
            }
        }
    }
    if features.is_empty() {
        return Err(DataError::Empty);
    }
    Dataset { input_dim, out_dim, features, labels }.check_range(params)
}

pub const F32BIN_MAGIC: &[u8; 4] = b"ZKDS";

/// Loads the raw binary format: magic, u32 rows, u32 feature columns, u32
/// label columns, then row-major little-endian f32 values (features then
/// labels per row).
pub fn load_f32_binary(
    path: &Path,
    out_dim: usize,
    params: &QuantParams,
) -> Result<Dataset, DataError> {
    let mut f = std::fs::File::open(path)?;
    let mut head = [0u8; 16];
    f.read_exact(&mut head)
        .map_err(|_| DataError::Header("file shorter than the header".into()))?;
    if &head[0..4] != F32BIN_MAGIC {
        return Err(DataError::Header("bad magic".into()));
    }
    let rows = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let input_dim = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let lab = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    if lab != out_dim {
        return Err(DataError::LabelMismatch { expected: out_dim, got: lab });
    }
    if rows == 0 || input_dim == 0 {
        return Err(DataError::Empty);
    }
    let n_vals = rows * (input_dim + lab);
    let mut raw = vec![0u8; n_vals * 4];
    f.read_exact(&mut raw)
        .map_err(|_| DataError::Header(format!("expected {n_vals} f32 values after the header")))?;
    let mut features = Vec::with_capacity(rows * input_dim);
    let mut labels = Vec::with_capacity(rows * lab);
    for r in 0..rows {
        for c in 0..input_dim + lab {
            let off = (r * (input_dim + lab) + c) * 4;
            let x = f32::from_le_bytes(raw[off..off + 4].try_into().unwrap()) as f64;
            let q = quantize(x, params.r_bits) as i128;
            if c < input_dim {
                features.push(q);
            } else {
                labels.push(q);
            }
        }
    }
    Dataset { input_dim, out_dim, features, labels }.check_range(params)
}

/// Deterministic synthetic classification data: features uniform in
/// [-2^(R-3), 2^(R-3)] (magnitude 1/8), labels one-hot at scale 2^R.
/// Small feature magnitudes keep deep pre-activations inside the doubly
/// scaled (Q+R)-bit budget.
pub fn synthetic(
    seed: u64,
    rows: usize,
    input_dim: usize,
    out_dim: usize,
    params: &QuantParams,
) -> Dataset {
    let mut rng = domain_rng("data", seed);
    let fb = 1i128 << params.r_bits.saturating_sub(3);
    let hot = 1i128 << params.r_bits;
    let mut features = Vec::with_capacity(rows * input_dim);
    let mut labels = Vec::with_capacity(rows * out_dim);
    for _ in 0..rows {
        for _ in 0..input_dim {
            features.push(uniform_range(&mut rng, -fb, fb));
        }
        let class = uniform_below(&mut rng, out_dim as u64) as usize;
        for c in 0..out_dim {
            labels.push(if c == class { hot } else { 0 });
        }
    }
    Dataset { input_dim, out_dim, features, labels }
}

/// Seeded batch stream: a fresh shuffle each epoch, remainder rows dropped.
pub struct BatchStream<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha20Rng,
}

impl<'a> BatchStream<'a> {
    pub fn new(ds: &'a Dataset, seed: u64) -> Self {
        let mut s = BatchStream {
            ds,
            order: (0..ds.rows()).collect(),
            pos: 0,
            rng: domain_rng("shuffle", seed),
        };
        s.shuffle();
        s
    }

    fn shuffle(&mut self) {
        for i in (1..self.order.len()).rev() {
            let j = uniform_below(&mut self.rng, (i + 1) as u64) as usize;
            self.order.swap(i, j);
        }
        self.pos = 0;
    }

    /// Next batch as row-major (features, labels), batch x dim each.
    pub fn next_batch(&mut self, batch: usize) -> (Vec<i128>, Vec<i128>) {
        assert!(batch <= self.ds.rows(), "batch exceeds the dataset");
        if self.pos + batch > self.order.len() {
            self.shuffle();
        }
        let mut x = Vec::with_capacity(batch * self.ds.input_dim);
        let mut y = Vec::with_capacity(batch * self.ds.out_dim);
        for &r in &self.order[self.pos..self.pos + batch] {
            x.extend_from_slice(self.ds.feature_row(r));
            y.extend_from_slice(self.ds.label_row(r));
        }
        self.pos += batch;
        (x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    fn params() -> QuantParams {
        QuantParams::new(16, 16).unwrap()
    }

    #[test]
    fn csv_round_trip_and_quantization() {
        let dir = std::env::temp_dir().join("zkdl-ds-test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("tiny.csv");
        std::fs::write(&p, "f0,f1,l0,l1\n0.5,-0.25,1.0,0.0\n0.0,0.125,0.0,1.0\n").unwrap();
        let ds = load_csv(&p, 2, &params()).unwrap();
        assert_eq!((ds.input_dim, ds.out_dim, ds.rows()), (2, 2, 2));
        assert_eq!(ds.feature_row(0), &[32768, -16384]);
        assert_eq!(ds.label_row(1), &[0, 65536]);
    }

    #[test]
    fn csv_errors_carry_position() {
        let dir = std::env::temp_dir().join("zkdl-ds-test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.csv");
        std::fs::write(&p, "a,b,c\n1.0,2.0,3.0\n1.0,oops,3.0\n").unwrap();
        match load_csv(&p, 1, &params()) {
            Err(DataError::Parse { line: 3, col: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn f32_binary_round_trip() {
        let dir = std::env::temp_dir().join("zkdl-ds-test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("tiny.bin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(F32BIN_MAGIC);
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        for v in [0.5f32, -0.5, 0.0, 1.0, 0.25, 0.125, -0.125, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&p, &bytes).unwrap();
        let ds = load_f32_binary(&p, 1, &params()).unwrap();
        assert_eq!((ds.input_dim, ds.rows()), (3, 2));
        assert_eq!(ds.feature_row(0), &[32768, -32768, 0]);
        assert_eq!(ds.label_row(0), &[65536]);
        assert!(matches!(
            load_f32_binary(&p, 2, &params()),
            Err(DataError::LabelMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn batch_stream_is_seed_deterministic() {
        let ds = synthetic(11, 32, 4, 3, &params());
        let mut h1 = Sha256::new();
        let mut h2 = Sha256::new();
        for h in [&mut h1, &mut h2] {
            let mut bs = BatchStream::new(&ds, 11);
            for _ in 0..10 {
                let (x, y) = bs.next_batch(8);
                for v in x.iter().chain(y.iter()) {
                    h.update(v.to_le_bytes());
                }
            }
        }
        let (d1, d2) = (h1.finalize(), h2.finalize());
        assert_eq!(d1, d2);

        let mut bs3 = BatchStream::new(&ds, 12);
        let mut h3 = Sha256::new();
        for _ in 0..10 {
            let (x, y) = bs3.next_batch(8);
            for v in x.iter().chain(y.iter()) {
                h3.update(v.to_le_bytes());
            }
        }
        assert_ne!(d1, h3.finalize());
    }

    #[test]
    fn synthetic_labels_are_one_hot() {
        let p = params();
        let ds = synthetic(5, 16, 8, 4, &p);
        let hot = 1i128 << p.r_bits;
        for r in 0..ds.rows() {
            let row = ds.label_row(r);
            assert_eq!(row.iter().filter(|v| **v == hot).count(), 1);
            assert_eq!(row.iter().filter(|v| **v == 0).count(), 3);
        }
        let fb = 1i128 << (p.r_bits - 3);
        assert!(ds.features.iter().all(|v| -fb <= *v && *v <= fb));
    }
}
