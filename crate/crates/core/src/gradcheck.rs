//! Central finite-difference gradient checking (double precision).

use crate::error::{Error, Result};

/// Outcome of a gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckReport {
    pub max_relative_error: f64,
    /// Coordinate where the maximum was attained.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Number of coordinates compared.
    pub checked: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient returned by `f` against central
/// differences at every coordinate of `point`. `f` maps a point to a scalar
/// loss and its gradient.
pub fn gradcheck<F>(f: F, point: &[f64], eps: f64) -> Result<GradcheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let all: Vec<usize> = (0..point.len()).collect();
    gradcheck_at(f, point, eps, &all)
}

/// As [`gradcheck`], restricted to the listed coordinates.
pub fn gradcheck_at<F>(
    mut f: F,
    point: &[f64],
    eps: f64,
    indices: &[usize],
) -> Result<GradcheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const OP: &str = "gradcheck";
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::usage(
            OP,
            format!("step {eps:e} outside [1e-6, 1e-4]"),
        ));
    }
    let (loss, analytic) = f(point)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "gradcheck loss at the base point".into(),
            index: 0,
        });
    }
    if analytic.len() != point.len() {
        return Err(Error::usage(
            OP,
            format!(
                "gradient has {} entries for a {}-dimensional point",
                analytic.len(),
                point.len()
            ),
        ));
    }
    if let Some(i) = analytic.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: "gradcheck analytic gradient, parameter".into(),
            index: i,
        });
    }

    let mut report = GradcheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = point.to_vec();
    for &i in indices {
        let x = point[i];
        probe[i] = x + eps;
        let (up, _) = f(&probe)?;
        probe[i] = x - eps;
        let (down, _) = f(&probe)?;
        probe[i] = x;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite {
                context: "gradcheck perturbed loss, parameter".into(),
                index: i,
            });
        }
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_relative_error || report.checked == 0 {
            report.max_relative_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
        report.checked += 1;
    }
    Ok(report)
}
