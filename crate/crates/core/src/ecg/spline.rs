//! Natural cubic spline through a set of knots.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::invalid(
                "spline needs at least 2 knots with matching values",
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("spline knots must be strictly increasing"));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let inner = n - 2;
            let mut diag = vec![0.0; inner];
            let mut upper = vec![0.0; inner];
            let mut rhs = vec![0.0; inner];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for k in 1..inner {
                let lower = xs[k + 1] - xs[k];
                let factor = lower / diag[k - 1];
                diag[k] -= factor * upper[k - 1];
                rhs[k] -= factor * rhs[k - 1];
            }
            m[inner] = rhs[inner - 1] / diag[inner - 1];
            for k in (0..inner - 1).rev() {
                m[k + 1] = (rhs[k] - upper[k] * m[k + 2]) / diag[k];
            }
        }
        Ok(Self { xs, ys, m })
    }

    fn slope_at_start(&self, i: usize) -> f64 {
        let h = self.xs[i + 1] - self.xs[i];
        (self.ys[i + 1] - self.ys[i]) / h - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0
    }

    /// Evaluate; outside the knot range the spline continues linearly with
    /// its end slope.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let (x0, xn) = (self.xs[0], self.xs[n - 1]);
        if x <= x0 {
            return self.ys[0] + self.slope_at_start(0) * (x - x0);
        }
        if x >= xn {
            let i = n - 2;
            let h = xn - self.xs[i];
            let end_slope =
                self.slope_at_start(i) + self.m[i] * h + (self.m[i + 1] - self.m[i]) * h / 2.0;
            return self.ys[n - 1] + end_slope * (x - xn);
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let t = x - self.xs[i];
        self.ys[i]
            + self.slope_at_start(i) * t
            + self.m[i] / 2.0 * t * t
            + (self.m[i + 1] - self.m[i]) / (6.0 * h) * t * t * t
    }
}
