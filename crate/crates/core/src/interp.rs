//! Cubic Hermite interpolation of tabulated maps.

/// Cubic Hermite interpolant through increasing knots. Outside the knot range it
/// extends linearly with the end slopes.
#[derive(Debug, Clone)]
pub struct CubicHermite {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    uniform: Option<f64>,
}

impl CubicHermite {
    /// Interpolant with the given derivatives at the strictly increasing `knots`.
    pub fn new(knots: Vec<f64>, values: Vec<f64>, slopes: Vec<f64>) -> Self {
        let n = knots.len();
        assert!(n >= 2 && values.len() == n && slopes.len() == n);
        let span = knots[n - 1] - knots[0];
        let step = span / (n - 1) as f64;
        let uniform = knots
            .iter()
            .enumerate()
            .all(|(k, &t)| (t - (knots[0] + k as f64 * step)).abs() <= 1e-12 * span.max(1.0))
            .then_some(step);
        Self {
            knots,
            values,
            slopes,
            uniform,
        }
    }

    /// Monotone interpolant of monotone data: the preferred `slopes` are limited by the
    /// Fritsch-Carlson conditions.
    pub fn monotone(knots: Vec<f64>, values: Vec<f64>, mut slopes: Vec<f64>) -> Self {
        let n = knots.len();
        assert!(n >= 2 && values.len() == n && slopes.len() == n);
        for k in 0..n - 1 {
            let delta = (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]);
            if delta == 0.0 {
                slopes[k] = 0.0;
                slopes[k + 1] = 0.0;
                continue;
            }
            let a = slopes[k] / delta;
            let b = slopes[k + 1] / delta;
            if a < 0.0 {
                slopes[k] = 0.0;
            }
            if b < 0.0 {
                slopes[k + 1] = 0.0;
            }
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                slopes[k] = tau * a * delta;
                slopes[k + 1] = tau * b * delta;
            }
        }
        Self::new(knots, values, slopes)
    }

    /// The inverse of a monotone map, built on the same knots with reciprocal slopes.
    pub fn inverse(&self) -> Self {
        let slopes = self
            .slopes
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
            .collect();
        Self::monotone(self.values.clone(), self.knots.clone(), slopes)
    }

    pub fn first_knot(&self) -> f64 {
        self.knots[0]
    }
    pub fn last_knot(&self) -> f64 {
        *self.knots.last().unwrap()
    }
    pub fn last_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.knots.len();
        match self.uniform {
            Some(step) => (((t - self.knots[0]) / step).floor().max(0.0) as usize).min(n - 2),
            None => self.knots.partition_point(|&k| k <= t).clamp(1, n - 1) - 1,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if t <= self.knots[0] {
            return self.values[0] + self.slopes[0] * (t - self.knots[0]);
        }
        if t >= self.knots[n - 1] {
            return self.values[n - 1] + self.slopes[n - 1] * (t - self.knots[n - 1]);
        }
        let k = self.interval(t);
        let h = self.knots[k + 1] - self.knots[k];
        let s = (t - self.knots[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.values[k]
            + h10 * h * self.slopes[k]
            + h01 * self.values[k + 1]
            + h11 * h * self.slopes[k + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_knots_and_cubics() {
        let knots: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        let values: Vec<f64> = knots.iter().map(|t| t * t * t + t).collect();
        let slopes: Vec<f64> = knots.iter().map(|t| 3.0 * t * t + 1.0).collect();
        let c = CubicHermite::monotone(knots.clone(), values.clone(), slopes);
        for (t, v) in knots.iter().zip(&values) {
            assert_eq!(c.eval(*t), *v);
        }
        for &t in &[0.05, 0.33, 0.71, 0.999] {
            assert!((c.eval(t) - (t * t * t + t)).abs() < 1e-14);
        }
    }

    #[test]
    fn limiter_keeps_steps_monotone() {
        let knots = vec![0.0, 1.0, 2.0, 3.0];
        let values = vec![0.0, 0.0, 1.0, 1.0];
        let c = CubicHermite::monotone(knots, values, vec![5.0; 4]);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=300 {
            let v = c.eval(k as f64 / 100.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn inverse_round_trip() {
        let knots: Vec<f64> = (0..201).map(|k| k as f64 / 200.0).collect();
        let values: Vec<f64> = knots.iter().map(|t| (1.0 + t).ln()).collect();
        let slopes: Vec<f64> = knots.iter().map(|t| 1.0 / (1.0 + t)).collect();
        let f = CubicHermite::monotone(knots, values, slopes);
        let g = f.inverse();
        for &t in &[0.0, 0.123, 0.5, 0.7, 1.0] {
            assert!((g.eval(f.eval(t)) - t).abs() < 1e-9);
        }
    }
}
