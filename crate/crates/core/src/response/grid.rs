use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::model::{AncillaScheme, Model};

use super::Pruning;

/// Delay-time axes `t_1 .. t_M` in fs, each ascending with a uniform step.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayGrid {
    axes: Vec<Vec<f64>>,
}

impl DelayGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("delay grid needs at least one axis".into()));
        }
        for (m, axis) in axes.iter().enumerate() {
            if axis.is_empty() {
                return Err(Error::InvalidArgument(format!("delay axis {} is empty", m + 1)));
            }
            if axis.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(Error::InvalidArgument(format!("delay axis {} has a negative or non-finite time", m + 1)));
            }
            if axis.len() > 1 {
                let step = axis[1] - axis[0];
                let scale = axis.last().unwrap().abs().max(step.abs());
                let uniform = axis.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * scale);
                if !(step > 0.0) || !uniform {
                    return Err(Error::InvalidArgument(format!(
                        "delay axis {} must be ascending with a uniform step",
                        m + 1
                    )));
                }
            }
        }
        Ok(Self { axes })
    }

    /// `count` points `start + k * step`.
    pub fn axis(start: f64, step: f64, count: usize) -> Vec<f64> {
        (0..count).map(|k| start + k as f64 * step).collect()
    }

    /// First-order grid `0, step, .., (count - 1) step`.
    pub fn linear(step: f64, count: usize) -> Result<Self> {
        Self::new(vec![Self::axis(0.0, step, count)])
    }

    /// Third-order grid over `(t1, t3)` at one waiting time.
    pub fn rephasing(t1: Vec<f64>, t2: f64, t3: Vec<f64>) -> Result<Self> {
        Self::new(vec![t1, vec![t2], t3])
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn order(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis times as propagation step counts.
    pub fn step_counts(&self, dt: f64) -> Result<Vec<Vec<usize>>> {
        self.axes
            .iter()
            .map(|axis| axis.iter().map(|&t| crate::dynamics::step_count(t, dt)).collect())
            .collect()
    }
}

/// How a response grid was computed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "engine")]
pub enum Provenance {
    Classical {
        dynamics: String,
    },
    CircuitExact {
        hamiltonian_trotter_steps: usize,
        collision_trotter_steps: usize,
        scheme: AncillaScheme,
        pruning: Pruning,
    },
    CircuitShots {
        hamiltonian_trotter_steps: usize,
        collision_trotter_steps: usize,
        scheme: AncillaScheme,
        pruning: Pruning,
        shots: u64,
        seed: u64,
    },
}

/// Post-processing applied to a response since evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Processing {
    /// Rotating-frame frequency (energy units) already multiplied in.
    pub frame: f64,
    /// First zeroed sample of the tail cut.
    pub cut: Option<usize>,
    /// Number of samples before zero padding.
    pub recorded: Option<usize>,
}

/// Complex response values on a delay grid, row-major with `t_1` slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseGrid {
    pub name: String,
    pub axes: Vec<Vec<f64>>,
    /// Propagation step (fs).
    pub dt: f64,
    pub hbar: f64,
    /// Ket minus bra excitation number during each delay: `+1` oscillates as
    /// `exp(-i e t / hbar)`, `-1` as its conjugate, `0` is a population delay.
    pub coherence: Vec<i8>,
    pub values: Vec<C64>,
    /// `E|estimate - exact|^2` per point when shot noise is present.
    pub variance: Option<Vec<f64>>,
    pub provenance: Provenance,
    pub processing: Processing,
}

impl ResponseGrid {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, axis)| acc * axis.len() + i)
    }

    pub fn at(&self, idx: &[usize]) -> C64 {
        self.values[self.index(idx)]
    }

    /// Pointwise sum of several pathways on identical grids.
    pub fn sum(parts: &[ResponseGrid]) -> Result<ResponseGrid> {
        let first = parts.first().ok_or_else(|| Error::InvalidArgument("nothing to sum".into()))?;
        let mut out = first.clone();
        for p in &parts[1..] {
            if p.axes != first.axes || p.dt != first.dt || p.coherence != first.coherence || p.processing != first.processing {
                return Err(Error::DimensionMismatch(format!("grids {} and {} differ", first.name, p.name)));
            }
            for (a, b) in out.values.iter_mut().zip(&p.values) {
                *a += b;
            }
            out.variance = match (out.variance.take(), &p.variance) {
                (Some(mut a), Some(b)) => {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    Some(a)
                }
                (a, None) => a,
                (None, Some(b)) => Some(b.clone()),
            };
            out.name = format!("{}+{}", out.name, p.name);
        }
        Ok(out)
    }

    /// The `(t1, t3)` plane of a third-order grid at waiting-time index `k2`,
    /// as rows over `t1`.
    pub fn plane(&self, k2: usize) -> Result<Vec<Vec<C64>>> {
        if self.axes.len() != 3 || k2 >= self.axes[1].len() {
            return Err(Error::InvalidArgument("plane needs a third-order grid and a valid t2 index".into()));
        }
        Ok((0..self.axes[0].len())
            .map(|i| (0..self.axes[2].len()).map(|j| self.at(&[i, k2, j])).collect())
            .collect())
    }

    /// Long-format CSV: one column per delay, then real and imaginary parts
    /// (and the variance when present).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.axes.len()).map(|m| format!("t{m}_fs")).collect();
        header.extend(["re".to_string(), "im".to_string()]);
        if self.variance.is_some() {
            header.push("variance".into());
        }
        w.write_record(&header).map_err(csv_error)?;
        let shape = self.shape();
        let mut idx = vec![0usize; shape.len()];
        for (flat, v) in self.values.iter().enumerate() {
            let mut rem = flat;
            for m in (0..shape.len()).rev() {
                idx[m] = rem % shape[m];
                rem /= shape[m];
            }
            let mut rec: Vec<String> = idx.iter().zip(&self.axes).map(|(&i, a)| a[i].to_string()).collect();
            rec.push(v.re.to_string());
            rec.push(v.im.to_string());
            if let Some(var) = &self.variance {
                rec.push(var[flat].to_string());
            }
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Reproducibility record stored next to response dumps.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResponseManifest {
    pub model_hash: String,
    pub pathways: Vec<String>,
    pub dt_fs: f64,
    pub axes_fs: Vec<Vec<f64>>,
    pub provenance: Provenance,
    pub code_version: String,
}

impl ResponseManifest {
    pub fn new(model: &Model, grids: &[ResponseGrid]) -> Result<Self> {
        let first = grids.first().ok_or_else(|| Error::InvalidArgument("manifest needs a grid".into()))?;
        Ok(Self {
            model_hash: model.fingerprint(),
            pathways: grids.iter().map(|g| g.name.clone()).collect(),
            dt_fs: first.dt,
            axes_fs: first.axes.clone(),
            provenance: first.provenance.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
