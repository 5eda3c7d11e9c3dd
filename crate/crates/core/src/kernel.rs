//! Scalar covariance kernels `f: [0,1]² → ℝ`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a kernel is not smooth, which decides how it must be integrated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularity {
    /// Polynomial on all of `[0,1]²`.
    Smooth,
    /// Smooth on each side of the diagonal `s = t`.
    DiagonalKink,
    /// Piecewise bilinear on a uniform lattice with `cells` cells per axis.
    Lattice { cells: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum CovarianceKernel {
    /// `min(s, t)`
    BrownianMotion,
    /// `min(s, t) − s·t`
    BrownianBridge,
    /// `s·t`
    Product,
    /// `1`
    Constant,
    /// `exp(−|s − t| / scale)`
    Exponential { scale: f64 },
    /// Tabulated on uniform nodes, bilinear in between.
    Grid(Arc<GridKernel>),
}

impl CovarianceKernel {
    pub fn exponential(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidKernel(format!("exponential scale must be positive, got {scale}")));
        }
        Ok(CovarianceKernel::Exponential { scale })
    }

    pub fn grid(kernel: GridKernel) -> Self {
        CovarianceKernel::Grid(Arc::new(kernel))
    }

    /// Looks up a preset by name; `exponential` takes its scale as
    /// `exponential:0.5` (default 1).
    pub fn preset(name: &str) -> Result<Self> {
        let (base, arg) = match name.split_once(':') {
            Some((b, a)) => (b, Some(a)),
            None => (name, None),
        };
        let kernel = match base {
            "brownian_motion" => CovarianceKernel::BrownianMotion,
            "brownian_bridge" => CovarianceKernel::BrownianBridge,
            "product" => CovarianceKernel::Product,
            "constant" => CovarianceKernel::Constant,
            "exponential" => {
                let scale = match arg {
                    Some(a) => a.parse().map_err(|_| Error::InvalidKernel(format!("bad exponential scale '{a}'")))?,
                    None => 1.0,
                };
                return CovarianceKernel::exponential(scale);
            }
            other => return Err(Error::InvalidKernel(format!("unknown preset '{other}'"))),
        };
        if arg.is_some() {
            return Err(Error::InvalidKernel(format!("preset '{base}' takes no parameter")));
        }
        Ok(kernel)
    }

    pub fn regularity(&self) -> Regularity {
        match self {
            CovarianceKernel::Product | CovarianceKernel::Constant => Regularity::Smooth,
            CovarianceKernel::BrownianMotion
            | CovarianceKernel::BrownianBridge
            | CovarianceKernel::Exponential { .. } => Regularity::DiagonalKink,
            CovarianceKernel::Grid(g) => Regularity::Lattice { cells: g.nodes - 1 },
        }
    }

    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        for x in [s, t] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::TimeOutOfRange(x));
            }
        }
        Ok(self.at(s, t))
    }

    /// Unchecked evaluation for inner loops. Arguments are ordered before
    /// evaluation so `at(s, t) == at(t, s)` bit for bit.
    #[inline]
    pub fn at(&self, s: f64, t: f64) -> f64 {
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        match self {
            CovarianceKernel::BrownianMotion => lo,
            CovarianceKernel::BrownianBridge => lo - lo * hi,
            CovarianceKernel::Product => lo * hi,
            CovarianceKernel::Constant => 1.0,
            CovarianceKernel::Exponential { scale } => (-(hi - lo) / scale).exp(),
            CovarianceKernel::Grid(g) => g.interpolate(lo, hi),
        }
    }

    /// `Gᵢⱼ = f(sᵢ, sⱼ)`.
    pub fn gram(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        for &t in times {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::TimeOutOfRange(t));
            }
        }
        Ok(self.gram_unchecked(times))
    }

    pub(crate) fn gram_unchecked(&self, times: &[f64]) -> DMatrix<f64> {
        let n = times.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.at(times[i], times[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Stable label, used to key caches and in reports.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for CovarianceKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceKernel::BrownianMotion => write!(f, "brownian_motion"),
            CovarianceKernel::BrownianBridge => write!(f, "brownian_bridge"),
            CovarianceKernel::Product => write!(f, "product"),
            CovarianceKernel::Constant => write!(f, "constant"),
            CovarianceKernel::Exponential { scale } => write!(f, "exponential:{scale}"),
            CovarianceKernel::Grid(g) => write!(f, "grid:{}:{:016x}", g.nodes, g.fingerprint()),
        }
    }
}

/// A symmetric table on the nodes `0, 1/(N−1), …, 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridKernel {
    nodes: usize,
    table: Vec<f64>,
}

/// Asymmetry above which loading a grid logs a warning.
pub const GRID_ASYMMETRY_WARN: f64 = 1e-9;

impl GridKernel {
    /// Builds a grid kernel, replacing the table by `(T + Tᵀ)/2`.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nodes = rows.len();
        if nodes < 2 {
            return Err(Error::InvalidKernel("grid needs at least 2 nodes per axis".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != nodes) {
            return Err(Error::InvalidKernel(format!(
                "grid must be square: row of length {} in {nodes}×{nodes}",
                r.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel("grid contains non-finite values".into()));
        }
        let mut table = vec![0.0; nodes * nodes];
        let mut correction: f64 = 0.0;
        for i in 0..nodes {
            for j in 0..nodes {
                let avg = 0.5 * (rows[i][j] + rows[j][i]);
                correction = correction.max((avg - rows[i][j]).abs());
                table[i * nodes + j] = avg;
            }
        }
        if correction > GRID_ASYMMETRY_WARN {
            log::warn!("grid kernel symmetrized; largest correction {correction:e}");
        }
        Ok(GridKernel { nodes, table })
    }

    /// Reads an `N×N` CSV table without a header row.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|cell| {
                    cell.parse::<f64>()
                        .map_err(|_| Error::InvalidKernel(format!("bad grid value '{cell}' in {}", path.display())))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        GridKernel::new(rows)
    }

    /// Samples `kernel` on `nodes` uniform nodes.
    pub fn sample(kernel: &CovarianceKernel, nodes: usize) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::InvalidKernel("grid needs at least 2 nodes per axis".into()));
        }
        let h = 1.0 / (nodes - 1) as f64;
        let rows = (0..nodes).map(|i| (0..nodes).map(|j| kernel.at(i as f64 * h, j as f64 * h)).collect()).collect();
        GridKernel::new(rows)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn value_at_node(&self, i: usize, j: usize) -> f64 {
        self.table[i * self.nodes + j]
    }

    fn interpolate(&self, s: f64, t: f64) -> f64 {
        let cells = (self.nodes - 1) as f64;
        let locate = |x: f64| {
            let pos = (x * cells).clamp(0.0, cells);
            let i = (pos.floor() as usize).min(self.nodes - 2);
            (i, pos - i as f64)
        };
        let (i, u) = locate(s);
        let (j, v) = locate(t);
        let at = |a: usize, b: usize| self.table[a * self.nodes + b];
        (1.0 - u) * ((1.0 - v) * at(i, j) + v * at(i, j + 1)) + u * ((1.0 - v) * at(i + 1, j) + v * at(i + 1, j + 1))
    }

    fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw bits
        self.table.iter().fold(0xcbf29ce484222325u64, |h, v| {
            v.to_bits().to_le_bytes().iter().fold(h, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x100000001b3))
        })
    }
}

/// Kernel selection as it appears in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    Preset {
        preset: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    GridFile {
        grid_file: String,
    },
}

impl KernelSpec {
    pub fn build(&self) -> Result<CovarianceKernel> {
        match self {
            KernelSpec::Preset { preset, scale: Some(scale) } if preset == "exponential" => {
                CovarianceKernel::exponential(*scale)
            }
            KernelSpec::Preset { preset, scale: Some(_) } => {
                Err(Error::InvalidKernel(format!("preset '{preset}' takes no scale")))
            }
            KernelSpec::Preset { preset, scale: None } => CovarianceKernel::preset(preset),
            KernelSpec::GridFile { grid_file } => {
                Ok(CovarianceKernel::grid(GridKernel::from_csv_path(Path::new(grid_file))?))
            }
        }
    }
}
