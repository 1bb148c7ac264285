//! Closed-form least squares on small polynomial designs.

use crate::error::{Error, Result};

/// Coefficient of determination, `1 - SS_res / SS_tot`.
///
/// Can be negative when `predicted` is worse than the mean of `observed`.
pub fn r_squared(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::LengthMismatch(predicted.len(), observed.len()));
    }
    if observed.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (ss_res, ss_tot) = sums_of_squares(predicted, observed);
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// R² for a model that was fitted to `observed` and can represent a constant.
/// Zero-variance targets fitted exactly count as a perfect fit.
pub(crate) fn fitted_r_squared(predicted: &[f64], observed: &[f64]) -> f64 {
    let (ss_res, ss_tot) = sums_of_squares(predicted, observed);
    let scale = observed.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    if ss_tot <= 1e-24 * scale {
        if ss_res <= 1e-20 * scale {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

fn sums_of_squares(predicted: &[f64], observed: &[f64]) -> (f64, f64) {
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    predicted
        .iter()
        .zip(observed)
        .fold((0.0, 0.0), |(res, tot), (p, o)| {
            (res + (o - p) * (o - p), tot + (o - mean) * (o - mean))
        })
}

/// `y = slope * x + intercept`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares line through `(xs, ys)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<Line> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (sxx, sxy) = xs.iter().zip(ys).fold((0.0, 0.0), |(sxx, sxy), (x, y)| {
        let dx = x - mx;
        (sxx + dx * dx, sxy + dx * (y - my))
    });
    if distinct_count(xs) < 2 || sxx == 0.0 {
        return Err(Error::DegenerateDesign("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    Ok(Line {
        slope,
        intercept: my - slope * mx,
    })
}

/// `y = a x² + b x + c`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

/// Least-squares parabola via 3×3 normal equations.
///
/// The abscissa is centred and scaled to unit spread before forming the
/// normal equations, then the coefficients are expanded back.
pub fn fit_quadratic(xs: &[f64], ys: &[f64]) -> Result<Quadratic> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if distinct_count(xs) < 3 {
        return Err(Error::DegenerateDesign(
            "quadratic fit needs at least 3 distinct x values".into(),
        ));
    }
    let nf = n as f64;
    let shift = xs.iter().sum::<f64>() / nf;
    let scale = (xs.iter().map(|x| (x - shift).powi(2)).sum::<f64>() / nf).sqrt();

    // Moments of the standardised abscissa u.
    let mut su = [0.0; 5];
    let mut suy = [0.0; 3];
    for (x, y) in xs.iter().zip(ys) {
        let u = (x - shift) / scale;
        let mut p = 1.0;
        for (k, s) in su.iter_mut().enumerate() {
            *s += p;
            if k < 3 {
                suy[k] += p * y;
            }
            p *= u;
        }
    }
    // Unknowns ordered [c0, c1, c2] for c0 + c1 u + c2 u².
    let normal = [
        [su[0], su[1], su[2]],
        [su[1], su[2], su[3]],
        [su[2], su[3], su[4]],
    ];
    let [c0, c1, c2] = solve3(normal, suy)?;

    // Expand u = (x - shift) / scale.
    let s2 = scale * scale;
    Ok(Quadratic {
        a: c2 / s2,
        b: c1 / scale - 2.0 * c2 * shift / s2,
        c: c0 - c1 * shift / scale + c2 * shift * shift / s2,
    })
}

/// Number of distinct values, compared with a relative tolerance.
pub(crate) fn distinct_count(xs: &[f64]) -> usize {
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let span = sorted.last().unwrap_or(&0.0).abs().max(sorted.first().unwrap_or(&0.0).abs());
    let tol = span * 1e-12;
    let mut count = 0;
    let mut last: Option<f64> = None;
    for x in sorted {
        if last.is_none_or(|l| (x - l).abs() > tol) {
            count += 1;
            last = Some(x);
        }
    }
    count
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Result<[f64; 3]> {
    let norm = m.iter().flatten().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap_or(col);
        if m[pivot][col].abs() <= 1e-12 * norm {
            return Err(Error::DegenerateDesign("normal matrix is singular".into()));
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (dst, src) in m[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Ok(x)
}
