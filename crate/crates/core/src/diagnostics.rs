//! Lyapunov weights, the quadratic functional `V1`, the symmetrizer `R = D + Theta` and
//! decay-rate fits.

use std::io::{self, Write};

use crate::backstepping::{transformed_speeds, CoordinateScaling};
use crate::error::{Error, Result};
use crate::model::{check_points, trapezoid, LinearSystemSpec, QuasilinearSystemSpec, StateField};

pub type Mat2 = [[f64; 2]; 2];

/// Default rates of the weight construction.
pub const DEFAULT_LAMBDA1: f64 = 1.0;
pub const DEFAULT_LAMBDA2: f64 = 1.0;

/// Parameters of `D(x) = diag(A e^{-mu x} / eps1, B e^{mu x} / eps2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovWeights {
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl LyapunovWeights {
    /// Explicit weights; `lambda1`, `lambda2` are left at zero.
    pub fn new(a: f64, b: f64, mu: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && mu >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weights need A, B > 0 and mu >= 0 (A = {a}, B = {b}, mu = {mu})"
            )));
        }
        Ok(Self {
            a,
            b,
            mu,
            lambda1: 0.0,
            lambda2: 0.0,
        })
    }

    /// `mu = lambda1 eps_bar`, `A = lambda2 e^mu`, `B = q^2 A + lambda2`, with
    /// `eps_bar = max(1/eps1, 1/eps2)`.
    pub fn from_rates(sys: &LinearSystemSpec, lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1 > 0.0 && lambda2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rates must be positive (lambda1 = {lambda1}, lambda2 = {lambda2})"
            )));
        }
        let mu = lambda1 * sys.inverse_speed_bound();
        let a = lambda2 * mu.exp();
        let b = sys.q() * sys.q() * a + lambda2;
        Ok(Self {
            a,
            b,
            mu,
            lambda1,
            lambda2,
        })
    }
}

/// Diagonal of `D(x)`.
pub fn weight_d(w: &LyapunovWeights, sys: &LinearSystemSpec, x: f64) -> [f64; 2] {
    [
        w.a * (-w.mu * x).exp() / sys.eps1(x),
        w.b * (w.mu * x).exp() / sys.eps2(x),
    ]
}

/// `V1 = int gamma^T D gamma`.
pub fn lyapunov_v1(w: &LyapunovWeights, sys: &LinearSystemSpec, gamma: &StateField) -> f64 {
    let vals: Vec<f64> = (0..gamma.m())
        .map(|k| {
            let d = weight_d(w, sys, gamma.x(k));
            let [a, b] = gamma.at(k);
            d[0] * a * a + d[1] * b * b
        })
        .collect();
    trapezoid(&vals, gamma.h())
}

/// `K1 = min (eps1 + eps2)` over the check points.
pub fn speed_sum_min(sys: &LinearSystemSpec) -> f64 {
    check_points()
        .map(|x| sys.eps1(x) + sys.eps2(x))
        .fold(f64::INFINITY, f64::min)
}

/// `R = D + Theta` at the nodes `x_k = k / (m - 1)` for the pointwise matrices `f1`
/// (the nonlinear speed part at a given state), with
/// `psi = (D11 F12 - D22 F21) / (eps1 + eps2 + F11 - F22)` on the antidiagonal of `Theta`.
pub fn build_r(sys: &LinearSystemSpec, f1: &[Mat2], w: &LyapunovWeights) -> Result<Vec<Mat2>> {
    let m = f1.len();
    if m < 2 {
        return Err(Error::GridTooCoarse {
            what: "symmetrizer",
            min: 2,
            got: m,
        });
    }
    let bound = 0.5 * speed_sum_min(sys);
    f1.iter()
        .enumerate()
        .map(|(k, f)| {
            let x = k as f64 / (m - 1) as f64;
            let d = weight_d(w, sys, x);
            let den = sys.eps1(x) + sys.eps2(x) + f[0][0] - f[1][1];
            if den < bound {
                return Err(Error::SmallDenominator { x, value: den, bound });
            }
            let psi = (d[0] * f[0][1] - d[1] * f[1][0]) / den;
            Ok([[d[0], psi], [psi, d[1]]])
        })
        .collect()
}

/// `Sigma(x) - F1` at the nodes of `f1`.
pub fn sigma_minus(sys: &LinearSystemSpec, f1: &[Mat2]) -> Vec<Mat2> {
    let m = f1.len();
    f1.iter()
        .enumerate()
        .map(|(k, f)| {
            let x = k as f64 / (m.max(2) - 1) as f64;
            [
                [-sys.eps1(x) - f[0][0], -f[0][1]],
                [-f[1][0], sys.eps2(x) - f[1][1]],
            ]
        })
        .collect()
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// `sup_k max_ij |(R M - M^T R)_ij|` with `M = Sigma - F1`.
pub fn check_symmetry_identity(r: &[Mat2], sigma_minus_f1: &[Mat2]) -> f64 {
    r.iter()
        .zip(sigma_minus_f1)
        .map(|(r, m)| {
            let a = mul(r, m);
            let b = mul(&transpose(m), r);
            (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| (a[i][j] - b[i][j]).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn symmetric_eigenvalues(r: &Mat2) -> [f64; 2] {
    let mean = 0.5 * (r[0][0] + r[1][1]);
    let half_diff = 0.5 * (r[0][0] - r[1][1]);
    let rad = (half_diff * half_diff + r[0][1] * r[1][0]).max(0.0).sqrt();
    [mean - rad, mean + rad]
}

/// Nonlinear speed part `Lambda_NL(w, x) = Lambda_bar(w, x) + Sigma(x)` at every node of `w`.
pub fn nonlinear_speed_part(q: &QuasilinearSystemSpec, s: &CoordinateScaling, w: &StateField) -> Vec<Mat2> {
    (0..w.m())
        .map(|k| {
            let x = w.x(k);
            let mut l = transformed_speeds(q, s, w.at(k), x);
            l[0][0] -= q.lambda1(x);
            l[1][1] -= q.lambda2(x);
            l
        })
        .collect()
}

/// Constants of the positivity regime of `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEstimate {
    /// `min (eps1 + eps2)`.
    pub k1: f64,
    /// Sampled bound of `|Lambda_NL(w, x)_ij| / (|w1| + |w2|)`.
    pub k2: f64,
    /// States with `sup (|w1| + |w2|) < delta` keep the denominator above `K1 / 2` and `R` positive definite.
    pub delta: f64,
}

/// Estimates `delta` from `K1` and a Lipschitz bound `K2` of `Lambda_NL` sampled on
/// `|w1| + |w2| <= probe`.
pub fn estimate_delta(
    q: &QuasilinearSystemSpec,
    s: &CoordinateScaling,
    sys: &LinearSystemSpec,
    w: &LyapunovWeights,
    probe: f64,
) -> Result<DeltaEstimate> {
    if !(probe > 0.0) {
        return Err(Error::InvalidArgument(format!("probe radius must be positive, got {probe}")));
    }
    let k1 = speed_sum_min(sys);
    let mut k2: f64 = 0.0;
    let radii = [0.25, 0.5, 1.0];
    let dirs = 16;
    for x in (0..=50).map(|k| k as f64 / 50.0) {
        for &r in &radii {
            for d in 0..dirs {
                let th = std::f64::consts::TAU * d as f64 / dirs as f64;
                let (c, sn) = (th.cos(), th.sin());
                let scale = r * probe / (c.abs() + sn.abs());
                let wv = [scale * c, scale * sn];
                let mut l = transformed_speeds(q, s, wv, x);
                l[0][0] -= q.lambda1(x);
                l[1][1] -= q.lambda2(x);
                let size = l.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
                k2 = k2.max(size / (r * probe));
            }
        }
    }
    if k2 == 0.0 {
        return Ok(DeltaEstimate {
            k1,
            k2,
            delta: f64::INFINITY,
        });
    }
    let mut delta = k1 / (4.0 * k2);
    for x in check_points().step_by(10) {
        let d = weight_d(w, sys, x);
        delta = delta.min(k1 * (d[0] * d[1]).sqrt() / (2.0 * k2 * (d[0] + d[1])));
    }
    Ok(DeltaEstimate {
        k1,
        k2,
        delta: delta.min(probe),
    })
}

/// Least-squares fit `ln n(t) = c - rate t` over samples with `t_start <= t <= t_end`.
/// Returns `(rate, r_squared)`; constant data have `r_squared = 1`.
pub fn fit_decay_rate(times: &[f64], norms: &[f64], t_start: f64, t_end: f64) -> Result<(f64, f64)> {
    if times.len() != norms.len() {
        return Err(Error::InvalidArgument("times and norms differ in length".into()));
    }
    let mut pts = Vec::new();
    for (&t, &n) in times.iter().zip(norms) {
        if t >= t_start && t <= t_end {
            if !(n > 0.0) {
                return Err(Error::NonPositiveNorm { t });
            }
            pts.push((t, n.ln()));
        }
    }
    if pts.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs at least 5 samples in [{t_start}, {t_end}], got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sty / stt;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (my + slope * (p.0 - mt))).powi(2))
        .sum();
    let r2 = if ss_tot <= f64::EPSILON * n * my.abs().max(1.0) {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok((-slope, r2))
}

/// Per-sample `V1` with a trailing-window estimate of its decay rate
/// `-(ln V1(t_k) - ln V1(t_{k-w})) / (t_k - t_{k-w})`, `None` where undefined.
pub fn v1_series(times: &[f64], v1: &[f64], window: usize) -> Vec<(f64, f64, Option<f64>)> {
    (0..times.len())
        .map(|k| {
            let rate = (k >= window && window > 0)
                .then(|| {
                    let j = k - window;
                    (v1[k] > 0.0 && v1[j] > 0.0)
                        .then(|| -(v1[k].ln() - v1[j].ln()) / (times[k] - times[j]))
                })
                .flatten();
            (times[k], v1[k], rate)
        })
        .collect()
}

/// CSV `t,V1,rate_window_estimate`; undefined rates are written as `nan`.
pub fn write_diagnostics_csv<W: Write>(rows: &[(f64, f64, Option<f64>)], mut out: W) -> io::Result<()> {
    writeln!(out, "t,V1,rate_window_estimate")?;
    for (t, v, r) in rows {
        match r {
            Some(r) => writeln!(out, "{t:.16e},{v:.16e},{r:.16e}")?,
            None => writeln!(out, "{t:.16e},{v:.16e},nan")?,
        }
    }
    Ok(())
}
