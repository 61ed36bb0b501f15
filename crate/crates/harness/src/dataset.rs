//! Simulated univariate datasets with train / interpolation / extrapolation
//! splits, stored as CSV with a JSON sidecar for the generator settings.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hsgp_core::{sample_prior, KernelFamily, KernelSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DataSettings, KernelSettings};
use crate::error::{config_err, io_err, HarnessError, Result};

/// Seed for sub-stream `index` of a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "interp-test")]
    InterpTest,
    #[serde(rename = "extrap-test")]
    ExtrapTest,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::InterpTest => "interp-test",
            Split::ExtrapTest => "extrap-test",
        })
    }
}

impl FromStr for Split {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "interp-test" => Ok(Split::InterpTest),
            "extrap-test" => Ok(Split::ExtrapTest),
            other => config_err(format!("unknown split label {other:?}")),
        }
    }
}

/// Generator settings written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub family: KernelFamily,
    pub alpha: f64,
    pub lengthscale: f64,
    pub noise_sd: f64,
    pub seed: u64,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub f: DVector<f64>,
    pub y: DVector<f64>,
    pub split: Vec<Split>,
    pub meta: Option<DatasetMeta>,
}

/// Points of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub x: DMatrix<f64>,
    pub f: DVector<f64>,
    pub y: DVector<f64>,
}

/// Split labels for `n` sorted inputs: `n_extrap/2` at each end, a contiguous
/// block of `n_interp` in the middle of what remains, the rest for training.
pub fn assign_splits(n: usize, n_interp: usize, n_extrap: usize) -> Vec<Split> {
    let half = n_extrap / 2;
    let inner = n - 2 * half;
    let start = half + (inner - n_interp) / 2;
    (0..n)
        .map(|i| {
            if i < half || i >= n - half {
                Split::ExtrapTest
            } else if i >= start && i < start + n_interp {
                Split::InterpTest
            } else {
                Split::Train
            }
        })
        .collect()
}

impl Dataset {
    /// Draw sorted uniform inputs, then `f ~ GP(0, k)` and `y = f + σε`.
    pub fn simulate(kernel: &KernelSettings, data: &DataSettings, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
        let mut xs: Vec<f64> = (0..data.n).map(|_| rng.random_range(data.x_min..data.x_max)).collect();
        xs.sort_by(f64::total_cmp);
        let x = DMatrix::from_column_slice(data.n, 1, &xs);
        let spec = KernelSpec::new(kernel.family, kernel.alpha, vec![kernel.lengthscale], None)?;
        let (f, y) = sample_prior(&spec, &x, data.noise_sd, derive_seed(seed, 1))?;
        Ok(Dataset {
            x,
            f,
            y,
            split: assign_splits(data.n, data.n_interp, data.n_extrap),
            meta: Some(DatasetMeta {
                family: kernel.family,
                alpha: kernel.alpha,
                lengthscale: kernel.lengthscale,
                noise_sd: data.noise_sd,
                seed,
                x_min: data.x_min,
                x_max: data.x_max,
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn part(&self, which: Split) -> Part {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.split[i] == which).collect();
        Part {
            x: self.x.select_rows(&idx),
            f: self.f.select_rows(&idx),
            y: self.y.select_rows(&idx),
        }
    }

    pub fn count(&self, which: Split) -> usize {
        self.split.iter().filter(|&&s| s == which).count()
    }

    /// Header `x_1..x_D,f,y,split`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.x.ncols();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x_{k}")).collect();
        header.extend(["f".into(), "y".into(), "split".into()]);
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row: Vec<String> = (0..d).map(|k| self.x[(i, k)].to_string()).collect();
            row.push(self.f[i].to_string());
            row.push(self.y[i].to_string());
            row.push(self.split[i].to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| HarnessError::Config("empty dataset".into()))?.split(',').collect();
        let d = header.iter().take_while(|h| h.starts_with("x_")).count();
        if d == 0 || header[d..] != ["f", "y", "split"] {
            return config_err(format!("unexpected dataset header {header:?}"));
        }
        let (mut xs, mut f, mut y, mut split) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (ln, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != d + 3 {
                return config_err(format!("dataset row {} has {} fields", ln + 2, cols.len()));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| HarnessError::Config(format!("row {}: {e}", ln + 2)));
            for c in &cols[..d] {
                xs.push(num(c)?);
            }
            f.push(num(cols[d])?);
            y.push(num(cols[d + 1])?);
            split.push(cols[d + 2].parse()?);
        }
        let n = y.len();
        Ok(Dataset {
            x: DMatrix::from_row_slice(n, d, &xs),
            f: DVector::from_vec(f),
            y: DVector::from_vec(y),
            split,
            meta: None,
        })
    }

    pub fn meta_path(csv: &Path) -> PathBuf {
        let mut s = csv.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(io_err(path))?;
        std::fs::write(path, buf).map_err(io_err(path))?;
        if let Some(meta) = &self.meta {
            let mp = Self::meta_path(path);
            std::fs::write(&mp, serde_json::to_string_pretty(meta).unwrap() + "\n").map_err(io_err(&mp))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut ds = Self::parse_csv(&text)?;
        let mp = Self::meta_path(path);
        if mp.exists() {
            let meta = std::fs::read_to_string(&mp).map_err(io_err(&mp))?;
            ds.meta = Some(serde_json::from_str(&meta).map_err(|e| HarnessError::Config(e.to_string()))?);
        }
        Ok(ds)
    }
}
