//! Statistical helpers: one-sample Kolmogorov-Smirnov statistics, normal and
//! exponential CDFs, sample moments, and small least-squares fits.

use crate::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Exponential CDF with the given rate.
pub fn exp_cdf(x: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-rate * x).exp()
    }
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Asymptotic KS critical value at level `alpha` for `n` samples.
///
/// Hard-coded for alpha in {0.05, 0.01}.
pub fn ks_critical(alpha: f64, n: usize) -> Result<f64> {
    let c = if (alpha - 0.05).abs() < 1e-12 {
        1.358
    } else if (alpha - 0.01).abs() < 1e-12 {
        1.63
    } else {
        return Err(Error::InvalidArgument(format!(
            "unsupported KS level {alpha}; use 0.05 or 0.01"
        )));
    };
    Ok(c / (n as f64).sqrt())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Least-squares line `y = a + b*x`; returns `(a, b, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument(
            "linear fit needs >= 2 paired points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx < 1e-300 {
        return Err(Error::InvalidArgument("degenerate abscissa in fit".into()));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if syy < 1e-300 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    let _ = n;
    Ok((a, b, r2))
}

/// Least-squares parabola `y = c0 + c1*x + c2*x^2`; returns `(c0, c1, c2)`.
pub fn parabola_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InvalidArgument(
            "parabola fit needs >= 3 paired points".into(),
        ));
    }
    // Normal equations for the Vandermonde system.
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut xp = 1.0;
        for sk in s.iter_mut() {
            *sk += xp;
            xp *= x;
        }
        t[0] += y;
        t[1] += y * x;
        t[2] += y * x * x;
    }
    let a = [
        s[0], s[1], s[2], //
        s[1], s[2], s[3], //
        s[2], s[3], s[4],
    ];
    let c = crate::linalg::solve(&a, &t, 3)
        .ok_or_else(|| Error::InvalidArgument("degenerate profile: singular fit".into()))?;
    Ok((c[0], c[1], c[2]))
}

/// Gaussian absolute moment E|N(0,1)|^p for p in {1, 2, 4}.
pub fn gaussian_abs_moment(p: u32) -> Result<f64> {
    match p {
        1 => Ok((2.0 / std::f64::consts::PI).sqrt()),
        2 => Ok(1.0),
        4 => Ok(3.0),
        _ => Err(Error::InvalidArgument(format!(
            "unsupported moment order {p}"
        ))),
    }
}
