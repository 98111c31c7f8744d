//! Small statistical helpers: Wilson intervals and weighted least squares.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Binomial {
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Wilson score interval. With no trials the estimate is 0 and the
/// interval is the whole of [0, 1].
pub fn wilson(successes: u64, n: u64) -> Binomial {
    if n == 0 {
        return Binomial { p_hat: 0.0, ci_lo: 0.0, ci_hi: 1.0 };
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Binomial {
        p_hat: p,
        ci_lo: (center - half).max(0.0).min(p),
        ci_hi: (center + half).min(1.0).max(p),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

/// Weighted least squares of `ys` on `xs`. Returns `None` for fewer than two
/// points or a degenerate abscissa. The slope standard error uses the
/// residual variance and is NaN with only two points.
pub fn least_squares(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..n).map(w).sum();
    let mx = (0..n).map(|i| w(i) * xs[i]).sum::<f64>() / sw;
    let my = (0..n).map(|i| w(i) * ys[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w(i) * (xs[i] - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = (0..n).map(|i| w(i) * (xs[i] - mx) * (ys[i] - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        // Weights are relative, so rescale them to average one.
        let scale = n as f64 / sw;
        let rss: f64 =
            (0..n).map(|i| scale * w(i) * (ys[i] - intercept - slope * xs[i]).powi(2)).sum();
        (rss / (n as f64 - 2.0) / (scale * sxx)).sqrt()
    } else {
        f64::NAN
    };
    Some(LineFit { slope, intercept, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let f = least_squares(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0], None).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.stderr.abs() < 1e-12);
    }

    #[test]
    fn wilson_known_value() {
        // 10 of 100: Wilson interval [0.05522, 0.17436].
        let b = wilson(10, 100);
        assert!((b.ci_lo - 0.055229).abs() < 1e-5, "{b:?}");
        assert!((b.ci_hi - 0.174366).abs() < 1e-5, "{b:?}");
    }

    proptest! {
        #[test]
        fn wilson_contains_estimate(n in 0u64..5000, frac in 0.0f64..=1.0) {
            let k = (frac * n as f64).round() as u64;
            let b = wilson(k, n);
            prop_assert!(0.0 <= b.ci_lo && b.ci_lo <= b.p_hat && b.p_hat <= b.ci_hi && b.ci_hi <= 1.0);
        }
    }
}
