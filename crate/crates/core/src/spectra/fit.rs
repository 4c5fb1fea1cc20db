use crate::error::{Error, Result};

/// Least-squares fit of `y_j(t) = a_j + b_j exp(-t / tau)` with one shared
/// time constant.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExponentialFit {
    pub tau: f64,
    pub offsets: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub rms_residual: f64,
}

/// Linear least squares for `(a, b)` at fixed decay; returns the residual sum.
fn linear_part(times: &[f64], y: &[f64], tau: f64) -> (f64, f64, f64) {
    let n = times.len() as f64;
    let e: Vec<f64> = times.iter().map(|t| (-t / tau).exp()).collect();
    let (se, see) = (e.iter().sum::<f64>(), e.iter().map(|x| x * x).sum::<f64>());
    let (sy, sey) = (y.iter().sum::<f64>(), e.iter().zip(y).map(|(a, b)| a * b).sum::<f64>());
    let det = n * see - se * se;
    let (a, b) = if det.abs() < 1e-300 { (sy / n, 0.0) } else { ((see * sy - se * sey) / det, (n * sey - se * sy) / det) };
    let sse = e.iter().zip(y).map(|(ei, yi)| (yi - a - b * ei).powi(2)).sum();
    (a, b, sse)
}

fn total_sse(times: &[f64], traces: &[Vec<f64>], tau: f64) -> f64 {
    traces.iter().map(|y| linear_part(times, y, tau).2).sum()
}

/// Variable-projection fit: the offsets and amplitudes are eliminated
/// analytically and the shared `tau` is located by a logarithmic scan over
/// `[step / 20, 20 * span]` refined by golden-section search.
pub fn fit_exponential_approach(times: &[f64], traces: &[Vec<f64>]) -> Result<ExponentialFit> {
    if times.len() < 3 || traces.is_empty() || traces.iter().any(|y| y.len() != times.len()) {
        return Err(Error::InvalidArgument("exponential fit needs >= 3 samples per trace".into()));
    }
    let span = times.last().unwrap() - times[0];
    let step = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(span > 0.0) || !(step > 0.0) {
        return Err(Error::InvalidArgument("fit times must be strictly ascending".into()));
    }
    let (lo, hi) = ((step / 20.0).ln(), (20.0 * span).ln());
    let grid = 400;
    let at = |k: usize| lo + (hi - lo) * k as f64 / grid as f64;
    let best = (0..=grid)
        .map(|k| (k, total_sse(times, traces, at(k).exp())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|p| p.0)
        .unwrap();
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(grid)));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let f = |x: f64| total_sse(times, traces, x.exp());
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    for _ in 0..100 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - ratio * (b - a);
        d = a + ratio * (b - a);
    }
    let tau = ((a + b) / 2.0).exp();
    let parts: Vec<(f64, f64, f64)> = traces.iter().map(|y| linear_part(times, y, tau)).collect();
    let count = (traces.len() * times.len()) as f64;
    Ok(ExponentialFit {
        tau,
        offsets: parts.iter().map(|p| p.0).collect(),
        amplitudes: parts.iter().map(|p| p.1).collect(),
        rms_residual: (parts.iter().map(|p| p.2).sum::<f64>() / count).sqrt(),
    })
}
