//! Small numerical helpers shared by the solver and the statistics code.

use crate::rng::GaussianSource;

/// Pairwise summation in a fixed order, independent of how the input was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return (m, f64::INFINITY);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Ordinary least squares `y ≈ slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Running integral of equally spaced samples: Simpson on node pairs, with a
/// three-point quadratic rule for the odd tail. Exact for quadratics.
pub fn cumulative_integral(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (f[0] + f[1]);
        return out;
    }
    out[1] = h / 12.0 * (5.0 * f[0] + 8.0 * f[1] - f[2]);
    for j in 2..n {
        out[j] = if j % 2 == 0 {
            out[j - 2] + h / 3.0 * (f[j - 2] + 4.0 * f[j - 1] + f[j])
        } else {
            out[j - 1] + h / 12.0 * (-f[j - 2] + 8.0 * f[j - 1] + 5.0 * f[j])
        };
    }
    out
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct BootstrapSummary {
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
    pub seed: u64,
}

/// Nonparametric bootstrap of `stat` with a fixed resampling seed.
pub fn bootstrap(
    xs: &[f64],
    resamples: usize,
    seed: u64,
    mut stat: impl FnMut(&mut Vec<f64>) -> f64,
) -> BootstrapSummary {
    let mut src = GaussianSource::new(seed);
    let n = xs.len();
    let mut buf = Vec::with_capacity(n);
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        buf.clear();
        buf.extend((0..n).map(|_| xs[src.below(n)]));
        stats.push(stat(&mut buf));
    }
    let (_, se_of_mean) = mean_and_se(&stats);
    let std_error = se_of_mean * (resamples as f64).sqrt();
    stats.sort_by(f64::total_cmp);
    let q = |p: f64| stats[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    BootstrapSummary {
        std_error,
        ci_low: q(0.025),
        ci_high: q(0.975),
        resamples,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 49_995_000.0);
    }

    #[test]
    fn cumulative_integral_exact_on_quadratics() {
        let h = 0.1;
        let f: Vec<f64> = (0..8).map(|i| (i as f64 * h).powi(2)).collect();
        let c = cumulative_integral(&f, h);
        for (i, v) in c.iter().enumerate() {
            let x = i as f64 * h;
            assert!((v - x.powi(3) / 3.0).abs() < 1e-14, "{i}");
        }
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (s, c) = linear_fit(&x, &y);
        assert!((s - 2.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_se_of_mean_is_close_to_analytic() {
        let mut g = GaussianSource::new(11);
        let xs: Vec<f64> = (0..2000).map(|_| g.normal()).collect();
        let b = bootstrap(&xs, 200, 5, |v| mean(v));
        let (_, se) = mean_and_se(&xs);
        assert!((b.std_error / se - 1.0).abs() < 0.25);
        assert!(b.ci_low < b.ci_high);
    }
}
