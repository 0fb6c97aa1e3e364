//! Arrival detection in probe series: local maxima of high-passed energy.

#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub time: f64,
    /// Peak energy divided by the detection floor.
    pub prominence: f64,
}

#[derive(Debug, Clone)]
pub struct DetectorConfig {
    /// Floor = median + `mad_factor`·MAD of the energy.
    pub mad_factor: f64,
    /// Energies below this fraction of the series' peak squared amplitude are ignored.
    pub relative_floor: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { mad_factor: 6.0, relative_floor: 1e-3 }
    }
}

/// Gaussian smoothing with standard deviation `sigma` samples. The series is extended
/// by point reflection at both ends so linear trends pass through unchanged.
fn smooth(x: &[f64], sigma: f64) -> Vec<f64> {
    let n = x.len();
    if sigma <= 0.0 || n == 0 {
        return x.to_vec();
    }
    let r = (4.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = w.iter().sum();
    let last = n as isize - 1;
    let at = |i: isize| -> f64 {
        if i < 0 {
            2.0 * x[0] - x[(-i).min(last) as usize]
        } else if i > last {
            2.0 * x[last as usize] - x[(2 * last - i).max(0) as usize]
        } else {
            x[i as usize]
        }
    };
    (0..n as isize).map(|i| (-r..=r).zip(&w).map(|(k, wk)| wk * at(i + k)).sum::<f64>() / total).collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Arrival times in a uniformly sampled series.
///
/// The series is high-passed by subtracting a Gaussian smoothing at scale `window`/2,
/// the squared residual is smoothed at scale `window`/8, and local maxima above
/// max(median + 6·MAD, relative floor) are kept and merged within `window`.
pub fn detect_singularities(series: &[f64], dt: f64, window: f64, cfg: &DetectorConfig) -> Vec<Arrival> {
    let n = series.len();
    if n < 3 || !(dt > 0.0) || !(window > 0.0) {
        return Vec::new();
    }
    let low = smooth(series, 0.5 * window / dt);
    let hp: Vec<f64> = series.iter().zip(&low).map(|(s, l)| s - l).collect();
    let energy = smooth(&hp.iter().map(|v| v * v).collect::<Vec<_>>(), 0.125 * window / dt);

    let mut sorted = energy.clone();
    let med = median(&mut sorted);
    let mut dev: Vec<f64> = energy.iter().map(|e| (e - med).abs()).collect();
    let mad = median(&mut dev);
    let peak = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (med + cfg.mad_factor * mad).max(cfg.relative_floor * peak * peak).max(f64::MIN_POSITIVE);

    let mut peaks: Vec<(usize, f64)> = (1..n - 1)
        .filter(|&i| energy[i] > floor && energy[i] >= energy[i - 1] && energy[i] > energy[i + 1])
        .map(|i| (i, energy[i]))
        .collect();
    // strongest first; drop weaker maxima within the window of a kept one
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for (i, e) in peaks {
        if kept.iter().all(|(j, _)| (i as f64 - *j as f64).abs() * dt > window) {
            kept.push((i, e));
        }
    }
    kept.sort_by_key(|k| k.0);
    kept.into_iter().map(|(i, e)| Arrival { time: i as f64 * dt, prominence: e / floor }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64, dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| f(i as f64 * dt)).collect()
    }

    #[test]
    fn single_pulse_is_found() {
        let dt = 1e-3;
        let pulse = |t: f64| {
            let s = (t - 2.0) / 0.01;
            -s * (-0.5 * s * s).exp()
        };
        let x = series(|t| 0.5 * (0.7 * t).sin() + 0.2 * t + pulse(t), dt, 4000);
        let found = detect_singularities(&x, dt, 0.1, &DetectorConfig::default());
        assert_eq!(found.len(), 1, "{found:?}");
        assert!((found[0].time - 2.0).abs() <= 0.1);
    }

    #[test]
    fn smooth_series_is_quiet() {
        let dt = 1e-3;
        let x = series(|t| (0.9 * t).sin() + 0.3 * (0.4 * t).cos() + 0.05 * t * t, dt, 5000);
        assert!(detect_singularities(&x, dt, 0.1, &DetectorConfig::default()).is_empty());
        assert!(detect_singularities(&vec![0.0; 100], dt, 0.1, &DetectorConfig::default()).is_empty());
    }

    #[test]
    fn smoothing_preserves_constants() {
        let y = smooth(&[2.0; 7], 5.0);
        assert!(y.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }
}
