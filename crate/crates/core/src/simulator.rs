//! First-order upwind time marching of the linear and quasilinear plants, and the
//! explicit solution of the target system.

use std::io::{self, Write};

use crate::backstepping::{ControllerGains, DynamicExtension};
use crate::characteristics::{CharacteristicMaps, Phi, DEFAULT_QUAD_POINTS};
use crate::error::{Error, Result};
use crate::model::{norm_l2, LinearSystemSpec, QuasilinearSystemSpec, ScalarFn, SimulationTrace, StateField};

/// Ratio of the L2 norm to its initial value that aborts a run.
pub const DIVERGENCE_GUARD: f64 = 1e6;

const SOURCE_QUAD_PANELS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub m: usize,
    pub cfl: f64,
    pub t_end: f64,
    pub snapshot_stride: usize,
}

impl SchemeConfig {
    pub fn new(m: usize, cfl: f64, t_end: f64, snapshot_stride: usize) -> Result<Self> {
        let c = Self {
            m,
            cfl,
            t_end,
            snapshot_stride,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 8 {
            return Err(Error::GridTooCoarse {
                what: "simulation grid",
                min: 8,
                got: self.m,
            });
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidArgument(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end must be finite and non-negative, got {}", self.t_end)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidArgument("snapshot_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.m - 1) as f64
    }
}

/// Explicit solution of the target system `alpha_t = -eps1 alpha_x + g(x) beta(0, t)`,
/// `beta_t = eps2 beta_x`, `alpha(0) = q beta(0)`, `beta(1) = 0`. Without a source
/// (`g = 0`) it is the pure cascade that vanishes after `t_F`.
#[derive(Clone)]
pub struct TargetSolution {
    maps: CharacteristicMaps,
    q: f64,
    source: Option<ScalarFn>,
}

impl std::fmt::Debug for TargetSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetSolution")
            .field("q", &self.q)
            .field("t_f", &self.t_f())
            .field("source", &self.source.is_some())
            .finish()
    }
}

impl TargetSolution {
    pub fn new(sys: &LinearSystemSpec) -> Result<Self> {
        Ok(Self {
            maps: CharacteristicMaps::build(&sys.eps1_fn(), &sys.eps2_fn(), DEFAULT_QUAD_POINTS)?,
            q: sys.q(),
            source: None,
        })
    }

    pub fn with_source(mut self, g: ScalarFn) -> Self {
        self.source = Some(g);
        self
    }

    /// `t_F = phi1(1) + phi2(1)`.
    pub fn t_f(&self) -> f64 {
        self.maps.phi_total(Phi::One) + self.maps.phi_total(Phi::Two)
    }

    fn beta_at_zero(&self, beta0: &dyn Fn(f64) -> f64, tau: f64) -> f64 {
        if tau <= self.maps.phi_total(Phi::Two) {
            beta0(self.maps.phi_inv(Phi::Two, tau).clamp(0.0, 1.0))
        } else {
            0.0
        }
    }

    pub fn eval(&self, alpha0: &dyn Fn(f64) -> f64, beta0: &dyn Fn(f64) -> f64, x: f64, t: f64) -> (f64, f64) {
        let m = &self.maps;
        let p1 = m.phi(Phi::One, x);
        let p2 = m.phi(Phi::Two, x);
        let beta = if t <= m.phi_total(Phi::Two) - p2 {
            beta0(m.phi_inv(Phi::Two, p2 + t).clamp(0.0, 1.0))
        } else {
            0.0
        };
        let mut alpha = if t <= p1 {
            alpha0(m.phi_inv(Phi::One, p1 - t).clamp(0.0, 1.0))
        } else {
            self.q * self.beta_at_zero(beta0, t - p1)
        };
        if let Some(g) = &self.source {
            // int over tau in [max(0, t - phi1(x)), t] of g(X(tau)) beta(0, tau)
            let start = (t - p1).max(0.0);
            let len = t - start;
            if len > 0.0 {
                let n = SOURCE_QUAD_PANELS;
                let d = len / n as f64;
                let mut acc = 0.0;
                for k in 0..=n {
                    let tau = start + k as f64 * d;
                    let xk = m.phi_inv(Phi::One, p1 - (t - tau)).clamp(0.0, 1.0);
                    let w = if k == 0 || k == n { 0.5 * d } else { d };
                    acc += w * g(xk) * self.beta_at_zero(beta0, tau);
                }
                alpha += acc;
            }
        }
        (alpha, beta)
    }

    /// The solution sampled on `m` points.
    pub fn field(&self, alpha0: &dyn Fn(f64) -> f64, beta0: &dyn Fn(f64) -> f64, m: usize, t: f64) -> Result<StateField> {
        let xs: Vec<f64> = (0..m).map(|k| k as f64 / (m.max(2) - 1) as f64).collect();
        let vals: Vec<(f64, f64)> = xs.iter().map(|&x| self.eval(alpha0, beta0, x, t)).collect();
        StateField::new(vals.iter().map(|v| v.0).collect(), vals.iter().map(|v| v.1).collect())
    }
}

/// Target-system state `(alpha, beta)(x, t)` of `sys` for initial data `(alpha0, beta0)`.
pub fn target_exact(
    sys: &LinearSystemSpec,
    alpha0: &dyn Fn(f64) -> f64,
    beta0: &dyn Fn(f64) -> f64,
    x: f64,
    t: f64,
) -> Result<(f64, f64)> {
    Ok(TargetSolution::new(sys)?.eval(alpha0, beta0, x, t))
}

struct Recorder<'a> {
    cfg: &'a SchemeConfig,
    trace: SimulationTrace,
    limit: f64,
}

impl<'a> Recorder<'a> {
    fn new(cfg: &'a SchemeConfig, initial: f64) -> Self {
        Self {
            cfg,
            trace: SimulationTrace::default(),
            limit: DIVERGENCE_GUARD * initial.max(f64::MIN_POSITIVE),
        }
    }

    fn guard(&self, t: f64, s: &StateField) -> Result<()> {
        let n = norm_l2(s);
        if !(n <= self.limit) {
            return Err(Error::UnstableStep {
                t,
                norm: n,
                limit: self.limit,
            });
        }
        Ok(())
    }

    fn record(&mut self, step: usize, last: bool, t: f64, s: &StateField, ab: (f64, f64), u: f64) -> Result<()> {
        if step % self.cfg.snapshot_stride == 0 || last {
            self.trace.push(t, s.clone(), ab.0, ab.1, u)?;
        }
        Ok(())
    }
}

/// Upwind simulation of `w_t = Sigma w_x + C w`, `u(0) = q v(0)`, `v(1) = U`. The control is
/// the trapezoid feedback of `gains` (open loop when `None`), solved together with `v(1)`.
pub fn simulate_linear(
    sys: &LinearSystemSpec,
    gains: Option<&ControllerGains>,
    w0: &StateField,
    cfg: &SchemeConfig,
) -> Result<SimulationTrace> {
    cfg.validate()?;
    let m = cfg.m;
    if w0.m() != m {
        return Err(Error::InvalidArgument(format!(
            "initial state has {} points, scheme expects {m}",
            w0.m()
        )));
    }
    if let Some(g) = gains {
        if g.m() != m {
            return Err(Error::InvalidArgument(format!("gains have {} points, scheme expects {m}", g.m())));
        }
    }
    let h = cfg.h();
    let xs: Vec<f64> = (0..m).map(|k| k as f64 * h).collect();
    let e1: Vec<f64> = xs.iter().map(|&x| sys.eps1(x)).collect();
    let e2: Vec<f64> = xs.iter().map(|&x| sys.eps2(x)).collect();
    let c1: Vec<f64> = xs.iter().map(|&x| sys.c1(x)).collect();
    let c2: Vec<f64> = xs.iter().map(|&x| sys.c2(x)).collect();
    let v_max = e1.iter().chain(&e2).fold(0.0f64, |a, &b| a.max(b));
    let dt0 = cfg.cfl * h / v_max;
    let q = sys.q();

    let mut rec = Recorder::new(cfg, norm_l2(w0));
    let mut u = w0.first().to_vec();
    let mut v = w0.second().to_vec();
    let mut t = 0.0;
    rec.record(0, false, t, w0, (0.0, 0.0), v[m - 1])?;
    let mut step = 0;
    while t < cfg.t_end {
        let dt = dt0.min(cfg.t_end - t);
        let last = cfg.t_end - t <= dt0;
        let mut un = u.clone();
        let mut vn = v.clone();
        for k in 1..m {
            un[k] = u[k] - dt * e1[k] * (u[k] - u[k - 1]) / h + dt * c1[k] * v[k];
        }
        for k in 0..m - 1 {
            vn[k] = v[k] + dt * e2[k] * (v[k + 1] - v[k]) / h + dt * c2[k] * u[k];
        }
        un[0] = q * vn[0];
        let control = match gains {
            Some(g) => g.implicit_boundary_value(&StateField::from_parts_unchecked(un.clone(), vn.clone()), 0.0)?,
            None => 0.0,
        };
        vn[m - 1] = control;
        step += 1;
        t = if last { cfg.t_end } else { t + dt };
        let state = StateField::from_parts_unchecked(un, vn);
        rec.guard(t, &state)?;
        rec.record(step, last, t, &state, (0.0, 0.0), control)?;
        u = state.first().to_vec();
        v = state.second().to_vec();
        if last {
            break;
        }
    }
    Ok(rec.trace)
}

/// Upwind simulation of `z_t + Lambda(z, x) z_x + f(z, x) = 0` with `z1(0) = G0(z2(0))` and
/// `z2(1) = int k^T z + a(t) + b(t)`. Diagonal speeds are upwinded by their sign, the
/// off-diagonal entries of `Lambda` use central differences.
pub fn simulate_quasilinear(
    q: &QuasilinearSystemSpec,
    gains: &ControllerGains,
    ext: &DynamicExtension,
    z0: &StateField,
    cfg: &SchemeConfig,
) -> Result<SimulationTrace> {
    cfg.validate()?;
    let m = cfg.m;
    if z0.m() != m || gains.m() != m {
        return Err(Error::InvalidArgument(format!(
            "state ({}) and gains ({}) must have the scheme's {m} points",
            z0.m(),
            gains.m()
        )));
    }
    let h = cfg.h();
    let xs: Vec<f64> = (0..m).map(|k| k as f64 * h).collect();
    let mut z1 = z0.first().to_vec();
    let mut z2 = z0.second().to_vec();
    let mut rec = Recorder::new(cfg, norm_l2(z0) + ext.a0.abs() + ext.b0.abs());
    let mut t = 0.0;
    rec.record(0, false, t, z0, ext.at(0.0), z2[m - 1])?;
    let mut step = 0;
    let mut lam = vec![[[0.0; 2]; 2]; m];
    let mut src = vec![[0.0; 2]; m];
    while t < cfg.t_end {
        let mut s_max: f64 = 0.0;
        for k in 0..m {
            let z = [z1[k], z2[k]];
            lam[k] = q.lambda(z, xs[k]);
            src[k] = q.f(z, xs[k]);
            let (l1, l2) = (lam[k][0][0], lam[k][1][1]);
            if !(l1 > 0.0 && l2 < 0.0) {
                return Err(Error::HyperbolicitySignChange {
                    t,
                    x: xs[k],
                    lambda1: l1,
                    lambda2: l2,
                });
            }
            s_max = s_max.max(l1).max(-l2);
        }
        let dt_cfl = cfg.cfl * h / s_max;
        let dt = dt_cfl.min(cfg.t_end - t);
        let last = cfg.t_end - t <= dt_cfl;
        let central = |f: &[f64], k: usize| {
            if k == 0 {
                (f[1] - f[0]) / h
            } else if k == m - 1 {
                (f[m - 1] - f[m - 2]) / h
            } else {
                (f[k + 1] - f[k - 1]) / (2.0 * h)
            }
        };
        let mut n1 = z1.clone();
        let mut n2 = z2.clone();
        for k in 1..m {
            let l = &lam[k];
            let rate = l[0][0] * (z1[k] - z1[k - 1]) / h + l[0][1] * central(&z2, k) + src[k][0];
            n1[k] = z1[k] - dt * rate;
        }
        for k in 0..m - 1 {
            let l = &lam[k];
            let rate = l[1][1] * (z2[k + 1] - z2[k]) / h + l[1][0] * central(&z1, k) + src[k][1];
            n2[k] = z2[k] - dt * rate;
        }
        n1[0] = q.g0(n2[0]);
        step += 1;
        t = if last { cfg.t_end } else { t + dt };
        let (a, b) = ext.at(t);
        let state = StateField::from_parts_unchecked(n1, n2);
        let control = gains.implicit_boundary_value(&state, a + b)?;
        let (n1, mut n2) = (state.first().to_vec(), state.second().to_vec());
        n2[m - 1] = control;
        let state = StateField::from_parts_unchecked(n1, n2);
        if state.first().iter().chain(state.second()).any(|v| !v.is_finite()) {
            return Err(Error::UnstableStep {
                t,
                norm: f64::INFINITY,
                limit: rec.limit,
            });
        }
        rec.guard(t, &state)?;
        rec.record(step, last, t, &state, (a, b), control)?;
        z1 = state.first().to_vec();
        z2 = state.second().to_vec();
        if last {
            break;
        }
    }
    Ok(rec.trace)
}

/// One row of the per-time norm table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
    pub sup: f64,
    pub a: f64,
    pub b: f64,
    pub control: f64,
}

pub fn step_report(trace: &SimulationTrace) -> Vec<ReportRow> {
    (0..trace.len())
        .map(|k| ReportRow {
            t: trace.times[k],
            l2: trace.norms[k].l2,
            h1: trace.norms[k].h1,
            h2: trace.norms[k].h2,
            sup: trace.norms[k].sup,
            a: trace.a[k],
            b: trace.b[k],
            control: trace.control[k],
        })
        .collect()
}

/// CSV `t,L2,H1,H2,sup,a,b,U`.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, mut out: W) -> io::Result<()> {
    writeln!(out, "t,L2,H1,H2,sup,a,b,U")?;
    for r in step_report(trace) {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.l2, r.h1, r.h2, r.sup, r.a, r.b, r.control
        )?;
    }
    Ok(())
}

/// CSV `x,z1,z2`.
pub fn write_state_csv<W: Write>(s: &StateField, mut out: W) -> io::Result<()> {
    writeln!(out, "x,z1,z2")?;
    for k in 0..s.m() {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", s.x(k), s.first()[k], s.second()[k])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_config_ranges() {
        assert!(SchemeConfig::new(7, 0.5, 1.0, 1).is_err());
        assert!(SchemeConfig::new(8, 0.0, 1.0, 1).is_err());
        assert!(SchemeConfig::new(8, 1.1, 1.0, 1).is_err());
        assert!(SchemeConfig::new(8, 1.0, 1.0, 0).is_err());
        assert!(SchemeConfig::new(8, 1.0, 1.0, 1).is_ok());
    }

    #[test]
    fn finite_horizon_of_constant_speeds() {
        let sys = LinearSystemSpec::constant(1.0, 2.0, 0.3, -0.2, 0.8).unwrap();
        let ts = TargetSolution::new(&sys).unwrap();
        assert_eq!(ts.t_f(), 1.5);
        let a0 = |x: f64| (3.0 * x).sin() + 1.0;
        let b0 = |x: f64| x * x;
        assert_eq!(ts.eval(&a0, &b0, 0.4, 0.0), (a0(0.4), b0(0.4)));
    }

    #[test]
    fn trace_csv_header_and_rows() {
        let sys = LinearSystemSpec::constant(1.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        let w0 = StateField::zeros(8).unwrap();
        let tr = simulate_linear(&sys, None, &w0, &SchemeConfig::new(8, 0.9, 0.1, 1).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,L2,H1,H2,sup,a,b,U\n"));
        assert_eq!(text.lines().count(), 1 + tr.len());
        assert!(step_report(&tr).iter().all(|r| r.l2 == 0.0 && r.control == 0.0));
    }
}
