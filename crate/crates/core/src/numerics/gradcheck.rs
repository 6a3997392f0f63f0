//! Central finite-difference gradient checking.

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error at this scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst: Option<usize>,
    /// Coordinates whose relative error exceeds the tolerance.
    pub flagged: Vec<usize>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares `analytic[i]` against `(f(p + h·e_i) - f(p - h·e_i)) / 2h` for
/// every `i` in `coords`.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    coords: impl IntoIterator<Item = usize>,
    h: f64,
    tol: f64,
) -> GradCheckReport {
    assert!(h > 0.0, "step must be positive");
    assert_eq!(params.len(), analytic.len());
    let mut p = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        flagged: Vec::new(),
        checked: 0,
    };
    for i in coords {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        report.checked += 1;
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some(i);
        }
        if err > tol || !err.is_finite() {
            report.flagged.push(i);
        }
    }
    report
}

/// Every coordinate of a `len`-long parameter vector.
pub fn all_coords(len: usize) -> std::ops::Range<usize> {
    0..len
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let p = [0.3, -0.7, 1.2];
        let f = |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>() + 2.0 * x[0] * x[1];
        let g = [p[0] + 2.0 * p[1], p[1] + 2.0 * p[0], p[2]];
        let r = grad_check(f, &p, &g, all_coords(3), 1e-4, 1e-8);
        assert!(r.passed(), "{r:?}");
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let p = [0.3, -0.7, 1.2];
        let f = |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let mut g = p;
        g[1] += 0.01;
        let r = grad_check(f, &p, &g, all_coords(3), 1e-4, 1e-6);
        assert_eq!(r.flagged, vec![1]);
        assert_eq!(r.worst, Some(1));
    }
}
