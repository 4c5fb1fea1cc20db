//! Post-processing of response functions into absorption spectra and
//! rephasing 2D maps.
//!
//! Transform conventions: an axis whose coherence oscillates as
//! `exp(-i c e t / hbar)` is transformed with the kernel `exp(+i c w t / hbar)`
//! so that a transition at `e` appears at `w = e > 0`. The first sample of each
//! axis carries half weight. Frequency axes are ascending, centred on zero
//! before the rotating-frame frequency is added back.

mod fit;


use std::io::Write;

use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::response::ResponseGrid;

pub use fit::{fit_exponential_approach, ExponentialFit};

/// Default zero-padded length as a multiple of the recorded length.
pub const DEFAULT_PAD_FACTOR: usize = 8;

/// Samples in the centred window of the running amplitude envelope.
pub const ENVELOPE_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Apodization {
    #[default]
    None,
    /// Half-Hann taper falling from 1 at `t = 0` to 0 after the last sample.
    Hann,
}

impl Apodization {
    fn weight(self, n: usize, len: usize) -> f64 {
        match self {
            Apodization::None => 1.0,
            Apodization::Hann => {
                let x = n as f64 / len as f64;
                0.5 * (1.0 + (std::f64::consts::PI * x).cos())
            }
        }
    }
}

fn time_step(axis: &[f64]) -> Result<f64> {
    match axis {
        [a, b, ..] => Ok(b - a),
        _ => Err(Error::InvalidArgument("a transformed axis needs at least two samples".into())),
    }
}

/// Multiplies each coherence axis by `exp(+i c w_rf t / hbar)`, moving a
/// transition at `e` to `e - w_rf`. Spectra add `w_rf` back to their axes.
pub fn apply_rotating_frame(response: &ResponseGrid, omega_rf: f64) -> ResponseGrid {
    let mut out = response.clone();
    let shape = response.shape();
    for (flat, v) in out.values.iter_mut().enumerate() {
        let mut rem = flat;
        let mut phase = 0.0;
        for m in (0..shape.len()).rev() {
            let t = response.axes[m][rem % shape[m]];
            rem /= shape[m];
            phase += response.coherence[m] as f64 * omega_rf * t / response.hbar;
        }
        *v *= C64::from_polar(1.0, phase);
    }
    out.processing.frame += omega_rf;
    out
}

/// Noise level implied by the shot statistics stored with a response:
/// the root of the largest variance over the recorded points.
pub fn shot_noise_floor(response: &ResponseGrid) -> Option<f64> {
    let var = response.variance.as_ref()?;
    let n = response.processing.recorded.unwrap_or(var.len()).min(var.len());
    if n == 0 {
        return None;
    }
    Some(var[..n].iter().cloned().fold(0.0, f64::max).sqrt())
}

/// Noise-debiased running amplitude: `sqrt(max(<|x|^2> - sigma^2, 0))` over a
/// centred window.
pub fn amplitude_envelope(values: &[C64], noise_floor: f64) -> Vec<f64> {
    let half = ENVELOPE_WINDOW / 2;
    (0..values.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(values.len());
            let power = values[lo..hi].iter().map(|v| v.norm_sqr()).sum::<f64>() / (hi - lo) as f64;
            (power - noise_floor * noise_floor).max(0.0).sqrt()
        })
        .collect()
}

/// Zeroes a first-order response from the first sample whose running
/// envelope falls below `noise_floor`, then zero-pads it to `pad_to` samples.
///
/// `None` skips the cut (noiseless data). A floor that is not strictly
/// positive is rejected.
pub fn snr_cut_and_pad(response: &ResponseGrid, noise_floor: Option<f64>, pad_to: usize) -> Result<ResponseGrid> {
    if response.axes.len() != 1 {
        return Err(Error::InvalidArgument("tail cut applies to first-order responses".into()));
    }
    let len = response.values.len();
    if pad_to < len {
        return Err(Error::InvalidArgument(format!("pad length {pad_to} is shorter than the signal ({len})")));
    }
    let mut out = response.clone();
    if let Some(floor) = noise_floor {
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(Error::InvalidArgument(format!("noise floor {floor} must be positive and finite")));
        }
        let env = amplitude_envelope(&response.values, floor);
        if let Some(cut) = env.iter().position(|&e| e < floor) {
            out.values[cut..].iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            out.processing.cut = Some(cut);
        }
    }
    let step = time_step(&response.axes[0]).unwrap_or(response.dt);
    let t0 = response.axes[0][0];
    out.axes[0] = (0..pad_to).map(|k| t0 + k as f64 * step).collect();
    out.values.resize(pad_to, C64::new(0.0, 0.0));
    if let Some(var) = out.variance.as_mut() {
        var.resize(pad_to, 0.0);
    }
    out.processing.recorded = Some(response.processing.recorded.unwrap_or(len));
    Ok(out)
}

/// `(-i)^order`.
fn inverse_prefactor(order: usize) -> C64 {
    match order % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, -1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, 1.0),
    }
}

/// In-place `sum_n x_n exp(+i c 2 pi k n / L)` followed by an fftshift.
fn transform_lane(planner: &mut FftPlanner<f64>, lane: &mut Vec<C64>, coherence: i8) {
    let len = lane.len();
    let fft = if coherence >= 0 { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
    fft.process(lane);
    lane.rotate_right(len / 2);
}

/// Angular-frequency axis (energy units) of an fftshifted transform.
fn frequency_axis(len: usize, step: f64, hbar: f64, frame: f64) -> Vec<f64> {
    let bin = 2.0 * std::f64::consts::PI * hbar / (len as f64 * step);
    (0..len).map(|j| (j as f64 - (len / 2) as f64) * bin + frame).collect()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Spectrum1D {
    /// Energy axis (eV for models in eV and fs).
    pub omega: Vec<f64>,
    /// Absorptive (real) part.
    pub values: Vec<f64>,
    /// Full complex transform, aligned with `omega`.
    #[serde(skip)]
    pub complex: Vec<C64>,
    pub frame: f64,
    pub length: usize,
    pub cut: Option<usize>,
    pub recorded: Option<usize>,
}

/// Discrete Fourier transform of a first-order response along `t1`.
pub fn absorption_spectrum(response: &ResponseGrid) -> Result<Spectrum1D> {
    absorption_spectrum_with(response, Apodization::None)
}

pub fn absorption_spectrum_with(response: &ResponseGrid, window: Apodization) -> Result<Spectrum1D> {
    if response.axes.len() != 1 || response.values.len() != response.axes[0].len() {
        return Err(Error::InvalidArgument("absorption spectrum needs a first-order response".into()));
    }
    let step = time_step(&response.axes[0])?;
    let len = response.values.len();
    let coherence = response.coherence[0];
    if coherence.abs() != 1 {
        return Err(Error::InvalidArgument("first delay is not an optical coherence".into()));
    }
    let recorded = response.processing.recorded.unwrap_or(len);
    let pre = inverse_prefactor(1);
    // The conjugate pathway is transformed through its mirror image.
    let mut lane: Vec<C64> = response
        .values
        .iter()
        .enumerate()
        .map(|(n, &v)| {
            let v = if coherence < 0 { v.conj() } else { v };
            let w = if n == 0 { 0.5 } else { 1.0 } * window.weight(n, recorded);
            pre * v * (w * step)
        })
        .collect();
    let mut planner = FftPlanner::new();
    transform_lane(&mut planner, &mut lane, 1);
    Ok(Spectrum1D {
        omega: frequency_axis(len, step, response.hbar, response.processing.frame),
        values: lane.iter().map(|c| c.re).collect(),
        complex: lane,
        frame: response.processing.frame,
        length: len,
        cut: response.processing.cut,
        recorded: response.processing.recorded,
    })
}

impl Spectrum1D {
    pub fn bin_width(&self) -> f64 {
        self.omega[1] - self.omega[0]
    }

    /// Position and value of the global maximum.
    pub fn peak(&self) -> (f64, f64) {
        let (i, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        (self.omega[i], v)
    }

    /// Local maxima above `fraction` of the global maximum, ascending in energy.
    pub fn peaks(&self, fraction: f64) -> Vec<(f64, f64)> {
        let top = self.peak().1;
        (1..self.values.len().saturating_sub(1))
            .filter(|&i| {
                let v = self.values[i];
                v > self.values[i - 1] && v >= self.values[i + 1] && v >= fraction * top
            })
            .map(|i| (self.omega[i], self.values[i]))
            .collect()
    }

    /// Full width at half maximum of the global peak, with linear
    /// interpolation between bins.
    pub fn fwhm(&self) -> Option<f64> {
        let (i0, top) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let half = top / 2.0;
        let crossing = |a: usize, b: usize| {
            let (va, vb) = (self.values[a], self.values[b]);
            self.omega[a] + (half - va) / (vb - va) * (self.omega[b] - self.omega[a])
        };
        let right = (i0..self.values.len() - 1).find(|&i| self.values[i + 1] < half).map(|i| crossing(i, i + 1))?;
        let left = (1..=i0).rev().find(|&i| self.values[i - 1] < half).map(|i| crossing(i, i - 1))?;
        Some(right - left)
    }

    /// Standardised fourth moment `m4 / m2^2` of the positive part of the
    /// spectrum inside `[lo, hi]`.
    pub fn kurtosis(&self, lo: f64, hi: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .omega
            .iter()
            .zip(&self.values)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .map(|(&w, &v)| (w, v.max(0.0)))
            .collect();
        let norm: f64 = pts.iter().map(|p| p.1).sum();
        let mean = pts.iter().map(|p| p.0 * p.1).sum::<f64>() / norm;
        let m2 = pts.iter().map(|p| (p.0 - mean).powi(2) * p.1).sum::<f64>() / norm;
        let m4 = pts.iter().map(|p| (p.0 - mean).powi(4) * p.1).sum::<f64>() / norm;
        m4 / (m2 * m2)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["omega_ev", "amplitude"]).map_err(csv_error)?;
        for (o, v) in self.omega.iter().zip(&self.values) {
            w.write_record([o.to_string(), v.to_string()]).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Spectrum2DOptions {
    pub pad_factor: usize,
    pub apodization: Apodization,
}

impl Default for Spectrum2DOptions {
    fn default() -> Self {
        Self { pad_factor: DEFAULT_PAD_FACTOR, apodization: Apodization::None }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Spectrum2D {
    pub omega1: Vec<f64>,
    pub omega3: Vec<f64>,
    /// Real part, rows over `omega1`.
    pub values: Vec<Vec<f64>>,
    /// Waiting time (fs).
    pub t2: f64,
    pub pathways: String,
    pub frame: f64,
}

/// Rephasing map at waiting time `t2`, zero-padded by the default factor.
pub fn spectrum_2d(grid: &ResponseGrid, t2: f64) -> Result<Spectrum2D> {
    spectrum_2d_with(grid, t2, &Spectrum2DOptions::default())
}

pub fn spectrum_2d_with(grid: &ResponseGrid, t2: f64, options: &Spectrum2DOptions) -> Result<Spectrum2D> {
    if grid.axes.len() != 3 {
        return Err(Error::InvalidArgument("2D spectrum needs a third-order response".into()));
    }
    if grid.values.len() != grid.shape().iter().product::<usize>() {
        return Err(Error::DimensionMismatch(format!(
            "ragged grid: {} values for shape {:?}",
            grid.values.len(),
            grid.shape()
        )));
    }
    if options.pad_factor == 0 {
        return Err(Error::InvalidArgument("pad factor must be >= 1".into()));
    }
    let (c1, c3) = (grid.coherence[0], grid.coherence[2]);
    if c1.abs() != 1 || c3.abs() != 1 {
        return Err(Error::InvalidArgument("t1 and t3 must be optical coherences".into()));
    }
    let k2 = grid.axes[1]
        .iter()
        .position(|&t| (t - t2).abs() <= 1e-9 * t2.abs().max(1.0))
        .ok_or_else(|| Error::InvalidArgument(format!("waiting time {t2} fs is not on the grid")))?;
    let plane = grid.plane(k2)?;
    let (n1, n3) = (grid.axes[0].len(), grid.axes[2].len());
    let (s1, s3) = (time_step(&grid.axes[0])?, time_step(&grid.axes[2])?);
    let (l1, l3) = (n1 * options.pad_factor, n3 * options.pad_factor);
    let pre = inverse_prefactor(3) * (s1 * s3);
    let mut data = vec![vec![C64::new(0.0, 0.0); l3]; l1];
    for i in 0..n1 {
        for j in 0..n3 {
            let w = if i == 0 { 0.5 } else { 1.0 }
                * if j == 0 { 0.5 } else { 1.0 }
                * options.apodization.weight(i, n1)
                * options.apodization.weight(j, n3);
            data[i][j] = pre * plane[i][j] * w;
        }
    }
    let mut planner = FftPlanner::new();
    for row in data.iter_mut() {
        transform_lane(&mut planner, row, c3);
    }
    for j in 0..l3 {
        let mut col: Vec<C64> = data.iter().map(|r| r[j]).collect();
        transform_lane(&mut planner, &mut col, c1);
        for (r, v) in data.iter_mut().zip(col) {
            r[j] = v;
        }
    }
    let frame = grid.processing.frame;
    Ok(Spectrum2D {
        omega1: frequency_axis(l1, s1, grid.hbar, frame),
        omega3: frequency_axis(l3, s3, grid.hbar, frame),
        values: data.iter().map(|r| r.iter().map(|c| c.re).collect()).collect(),
        t2: grid.axes[1][k2],
        pathways: grid.name.clone(),
        frame,
    })
}

/// One map per waiting time on the grid, computed in parallel.
pub fn spectra_2d(grid: &ResponseGrid, options: &Spectrum2DOptions) -> Result<Vec<Spectrum2D>> {
    grid.axes[1].par_iter().map(|&t2| spectrum_2d_with(grid, t2, options)).collect()
}

fn nearest(axis: &[f64], x: f64) -> usize {
    axis.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map(|p| p.0)
        .unwrap_or(0)
}

/// Fractional position of `x` between samples, clamped to the axis.
fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    let step = axis[1] - axis[0];
    let pos = ((x - axis[0]) / step).clamp(0.0, (axis.len() - 1) as f64);
    let i = (pos.floor() as usize).min(axis.len() - 2);
    (i, pos - i as f64)
}

impl Spectrum2D {
    pub fn bin_widths(&self) -> (f64, f64) {
        (self.omega1[1] - self.omega1[0], self.omega3[1] - self.omega3[0])
    }

    /// Amplitude at the bin nearest to `(w1, w3)`.
    pub fn nearest(&self, w1: f64, w3: f64) -> f64 {
        self.values[nearest(&self.omega1, w1)][nearest(&self.omega3, w3)]
    }

    /// Bilinear interpolation of the amplitude at `(w1, w3)`.
    pub fn value_at(&self, w1: f64, w3: f64) -> f64 {
        let (i, a) = bracket(&self.omega1, w1);
        let (j, b) = bracket(&self.omega3, w3);
        let v = &self.values;
        (1.0 - a) * (1.0 - b) * v[i][j] + a * (1.0 - b) * v[i + 1][j] + (1.0 - a) * b * v[i][j + 1] + a * b * v[i + 1][j + 1]
    }

    /// Largest `|amplitude|` within `radius` (energy units) of `(w1, w3)`,
    /// with its position.
    pub fn local_extremum(&self, w1: f64, w3: f64, radius: f64) -> (f64, f64, f64) {
        let mut best = (w1, w3, 0.0f64);
        for (i, &o1) in self.omega1.iter().enumerate() {
            if (o1 - w1).abs() > radius {
                continue;
            }
            for (j, &o3) in self.omega3.iter().enumerate() {
                if (o3 - w3).abs() <= radius && self.values[i][j].abs() > best.2.abs() {
                    best = (o1, o3, self.values[i][j]);
                }
            }
        }
        best
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Long-format CSV `omega1_ev, omega3_ev, amplitude`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["omega1_ev", "omega3_ev", "amplitude"]).map_err(csv_error)?;
        for (o1, row) in self.omega1.iter().zip(&self.values) {
            for (o3, v) in self.omega3.iter().zip(row) {
                w.write_record([o1.to_string(), o3.to_string(), v.to_string()]).map_err(csv_error)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Gnuplot `matrix nonuniform` block: first row holds the `omega3` axis,
    /// first column the `omega1` axis.
    pub fn write_gnuplot_matrix<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "{}", self.omega3.len())?;
        for o3 in &self.omega3 {
            write!(w, " {o3}")?;
        }
        writeln!(w)?;
        for (o1, row) in self.omega1.iter().zip(&self.values) {
            write!(w, "{o1}")?;
            for v in row {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
