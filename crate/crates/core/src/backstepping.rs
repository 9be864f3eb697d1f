//! Kernel problems of the backstepping transformation, the Volterra transforms,
//! the boundary feedback and the coordinate change of the quasilinear plant.
//!
//! Kernel storage follows `F1 = K^uu`, `F2 = K^uv`, `F3 = K^vu`, `F4 = K^vv` for the
//! direct transformation and the same order for the inverse kernels `L`.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::goursat::{GoursatProblem, KernelSet};
use crate::interp::CubicHermite;
use crate::model::{
    check_points, constant, field_fn, first_derivative, scalar_fn, trapezoid, LinearSystemSpec,
    QuasilinearSystemSpec, ScalarFn, StateField, FD_STEP,
};

/// Below this `|q|` the reflection coefficients of the kernel problem blow up and the
/// `q = 0` construction must be used instead.
pub const Q_MIN: f64 = 1e-6;

/// Tolerance of the difference check on the linearized coupling.
pub const LINEARIZATION_TOL: f64 = 1e-6;

const SCALING_POINTS: usize = 4097;

fn check_q(sys: &LinearSystemSpec) -> Result<()> {
    if sys.q().abs() < Q_MIN {
        return Err(Error::QNearZero {
            q: sys.q().abs(),
            q_min: Q_MIN,
        });
    }
    Ok(())
}

/// Diagonal data and reflections shared by the direct and inverse problems.
fn common_structure(sys: &LinearSystemSpec, p: &mut GoursatProblem, with_uu_row: bool) {
    let (e1, e2, c1, c2) = (sys.eps1_fn(), sys.eps2_fn(), sys.c1_fn(), sys.c2_fn());
    let (a, b) = (e1.clone(), e2.clone());
    p.set_boundary(2, scalar_fn(move |x| c1(x) / (a(x) + b(x))));
    p.set_boundary(3, scalar_fn(move |x| -c2(x) / (e1(x) + e2(x))));
    let ratio = sys.q() * sys.eps1(0.0) / sys.eps2(0.0);
    if with_uu_row {
        p.set_reflection(1, constant(1.0 / ratio));
    }
    p.set_reflection(4, constant(ratio));
}

fn speed_derivative_couplings(sys: &LinearSystemSpec, p: &mut GoursatProblem) {
    let d1 = sys.eps1_prime_fn();
    let d2 = sys.eps2_prime_fn();
    let (a, b, c, d) = (d1.clone(), d2.clone(), d1, d2);
    p.set_coupling(1, 1, field_fn(move |_, xi| -a(xi)))
        .set_coupling(2, 2, field_fn(move |_, xi| b(xi)))
        .set_coupling(3, 3, field_fn(move |_, xi| c(xi)))
        .set_coupling(4, 4, field_fn(move |_, xi| -d(xi)));
}

fn direct_problem_unchecked(sys: &LinearSystemSpec, with_uu_row: bool) -> GoursatProblem {
    let mut p = GoursatProblem::new(sys.eps1_fn(), sys.eps2_fn());
    speed_derivative_couplings(sys, &mut p);
    let (c1, c2) = (sys.c1_fn(), sys.c2_fn());
    let (a, b, c, d) = (c2.clone(), c1.clone(), c2, c1);
    p.set_coupling(1, 2, field_fn(move |_, xi| -a(xi)))
        .set_coupling(2, 1, field_fn(move |_, xi| -b(xi)))
        .set_coupling(3, 4, field_fn(move |_, xi| c(xi)))
        .set_coupling(4, 3, field_fn(move |_, xi| d(xi)));
    common_structure(sys, &mut p, with_uu_row);
    p
}

/// Goursat problem of the direct kernels `K`.
pub fn assemble_direct_kernel_problem(sys: &LinearSystemSpec) -> Result<GoursatProblem> {
    check_q(sys)?;
    Ok(direct_problem_unchecked(sys, true))
}

/// Goursat problem of the inverse kernels `L`.
pub fn assemble_inverse_kernel_problem(sys: &LinearSystemSpec) -> Result<GoursatProblem> {
    check_q(sys)?;
    let mut p = GoursatProblem::new(sys.eps1_fn(), sys.eps2_fn());
    speed_derivative_couplings(sys, &mut p);
    let (c1, c2) = (sys.c1_fn(), sys.c2_fn());
    let (a, b, c, d) = (c1.clone(), c1, c2.clone(), c2);
    p.set_coupling(1, 3, field_fn(move |x, _| a(x)))
        .set_coupling(2, 4, field_fn(move |x, _| b(x)))
        .set_coupling(3, 1, field_fn(move |x, _| -c(x)))
        .set_coupling(4, 2, field_fn(move |x, _| -d(x)));
    common_structure(sys, &mut p, true);
    Ok(p)
}

/// Kernel problem for vanishing (or small) `q`: `K^uu(x, 0) = h_free(x)` replaces the
/// reflected row, and the target gains the source `g(x) beta(0, t)` in the alpha equation.
#[derive(Clone)]
pub struct Q0KernelProblem {
    pub problem: GoursatProblem,
    h_free: ScalarFn,
    q_eps1_0: f64,
    eps2_0: f64,
}

impl fmt::Debug for Q0KernelProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Q0KernelProblem")
            .field("problem", &self.problem)
            .field("q_eps1_0", &self.q_eps1_0)
            .field("eps2_0", &self.eps2_0)
            .finish()
    }
}

impl Q0KernelProblem {
    /// Source gain of the modified target, `g(x) = eps2(0) K^uv(x, 0) - q eps1(0) h_free(x)`,
    /// sampled from the solved kernels.
    pub fn source_gain(&self, k: &KernelSet) -> ScalarFn {
        let kuv = k.kernel(2).clone();
        let h = self.h_free.clone();
        let (a, b) = (self.eps2_0, self.q_eps1_0);
        scalar_fn(move |x| a * kuv.eval(x, 0.0) - b * h(x))
    }
}

/// `h_free` defaults to zero.
pub fn assemble_q0_kernel_problem(sys: &LinearSystemSpec, h_free: Option<ScalarFn>) -> Q0KernelProblem {
    let mut problem = direct_problem_unchecked(sys, false);
    let h_free = h_free.unwrap_or_else(|| constant(0.0));
    problem.set_boundary(1, h_free.clone());
    if sys.q() == 0.0 {
        problem.clear_reflection(4);
    }
    Q0KernelProblem {
        problem,
        h_free,
        q_eps1_0: sys.q() * sys.eps1(0.0),
        eps2_0: sys.eps2(0.0),
    }
}

/// Volterra operator `s -> s + sign * int_0^x K(x, xi) s(xi) dxi` sampled on `m` points.
#[derive(Debug, Clone)]
pub struct VolterraTransform {
    m: usize,
    // row k holds the weighted kernel entries at (x_k, xi_l), l = 0..=k
    rows: Vec<[f64; 4]>,
}

impl VolterraTransform {
    fn new(k: &KernelSet, m: usize, sign: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::GridTooCoarse {
                what: "Volterra transform",
                min: 2,
                got: m,
            });
        }
        let h = 1.0 / (m - 1) as f64;
        let mut rows = Vec::with_capacity(m * (m + 1) / 2);
        for i in 0..m {
            let x = i as f64 * h;
            for l in 0..=i {
                let xi = l as f64 * h;
                let w = if i == 0 {
                    0.0
                } else if l == 0 || l == i {
                    0.5 * h * sign
                } else {
                    h * sign
                };
                rows.push([
                    w * k.kernel(1).eval(x, xi),
                    w * k.kernel(2).eval(x, xi),
                    w * k.kernel(3).eval(x, xi),
                    w * k.kernel(4).eval(x, xi),
                ]);
            }
        }
        Ok(Self { m, rows })
    }

    /// `gamma = w - int K w`.
    pub fn direct(k: &KernelSet, m: usize) -> Result<Self> {
        Self::new(k, m, -1.0)
    }

    /// `w = gamma + int L gamma`.
    pub fn inverse(l: &KernelSet, m: usize) -> Result<Self> {
        Self::new(l, m, 1.0)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn apply(&self, s: &StateField) -> Result<StateField> {
        let s = s.resample(self.m)?;
        let (u, v) = (s.first(), s.second());
        let mut first = u.to_vec();
        let mut second = v.to_vec();
        let mut offset = 0;
        for i in 0..self.m {
            let (mut a, mut b) = (0.0, 0.0);
            for (l, w) in self.rows[offset..offset + i + 1].iter().enumerate() {
                a += w[0] * u[l] + w[1] * v[l];
                b += w[2] * u[l] + w[3] * v[l];
            }
            first[i] += a;
            second[i] += b;
            offset += i + 1;
        }
        StateField::new(first, second)
    }
}

/// `gamma = w - int_0^x K(x, xi) w(xi) dxi` on the grid of `w`.
pub fn direct_transform(k: &KernelSet, w: &StateField) -> Result<StateField> {
    VolterraTransform::direct(k, w.m())?.apply(w)
}

/// `w = gamma + int_0^x L(x, xi) gamma(xi) dxi` on the grid of `gamma`.
pub fn inverse_transform(l: &KernelSet, gamma: &StateField) -> Result<StateField> {
    VolterraTransform::inverse(l, gamma.m())?.apply(gamma)
}

/// Diagonal scalings `phi1`, `phi2` of `w = Phi z`.
#[derive(Debug, Clone)]
pub struct CoordinateScaling {
    log_phi: [CubicHermite; 2],
}

impl CoordinateScaling {
    pub fn identity() -> Self {
        let flat = || CubicHermite::new(vec![0.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0]);
        Self {
            log_phi: [flat(), flat()],
        }
    }

    /// `phi_i(x) = exp(int_0^x f_ii / Lambda_i)`.
    pub fn of(q: &QuasilinearSystemSpec) -> Self {
        let xs: Vec<f64> = (0..SCALING_POINTS)
            .map(|k| k as f64 / (SCALING_POINTS - 1) as f64)
            .collect();
        let h = 1.0 / (SCALING_POINTS - 1) as f64;
        let table = |i: usize| {
            let rate: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    let l = if i == 0 { q.lambda1(x) } else { q.lambda2(x) };
                    q.f_lin(i, i, x) / l
                })
                .collect();
            let mut acc = 0.0;
            let mut vals = vec![0.0];
            for w in rate.windows(2) {
                acc += 0.5 * h * (w[0] + w[1]);
                vals.push(acc);
            }
            CubicHermite::new(xs.clone(), vals, rate)
        };
        Self {
            log_phi: [table(0), table(1)],
        }
    }

    pub fn phi1(&self, x: f64) -> f64 {
        self.log_phi[0].eval(x).exp()
    }
    pub fn phi2(&self, x: f64) -> f64 {
        self.log_phi[1].eval(x).exp()
    }
}

/// Linear design system of a quasilinear plant together with its coordinate scaling.
#[derive(Debug, Clone)]
pub struct LinearizedPlant {
    pub linear: LinearSystemSpec,
    pub scaling: Arc<CoordinateScaling>,
}

/// Transformed drift `f_bar(w, x) = Phi f(Phi^-1 w, x) - Lambda_bar(w, x) diag(f11/L1, f22/L2) w`.
pub fn transformed_drift(q: &QuasilinearSystemSpec, s: &CoordinateScaling, w: [f64; 2], x: f64) -> [f64; 2] {
    let (p1, p2) = (s.phi1(x), s.phi2(x));
    let z = [w[0] / p1, w[1] / p2];
    let f = q.f(z, x);
    let l = q.lambda(z, x);
    let lbar = [[l[0][0], l[0][1] * p1 / p2], [l[1][0] * p2 / p1, l[1][1]]];
    let dw = [
        q.f_lin(0, 0, x) / q.lambda1(x) * w[0],
        q.f_lin(1, 1, x) / q.lambda2(x) * w[1],
    ];
    [
        p1 * f[0] - (lbar[0][0] * dw[0] + lbar[0][1] * dw[1]),
        p2 * f[1] - (lbar[1][0] * dw[0] + lbar[1][1] * dw[1]),
    ]
}

/// Transformed speed matrix `Lambda_bar(w, x) = Phi Lambda(Phi^-1 w, x) Phi^-1`.
pub fn transformed_speeds(
    q: &QuasilinearSystemSpec,
    s: &CoordinateScaling,
    w: [f64; 2],
    x: f64,
) -> [[f64; 2]; 2] {
    let (p1, p2) = (s.phi1(x), s.phi2(x));
    let l = q.lambda([w[0] / p1, w[1] / p2], x);
    [[l[0][0], l[0][1] * p1 / p2], [l[1][0] * p2 / p1, l[1][1]]]
}

/// Linear design system of `q`: `eps1 = Lambda1`, `eps2 = -Lambda2`, reflection `G0'(0)`,
/// coupling `C = -d f_bar/dw (0, x)` checked against differences of `f_bar`.
pub fn build_linear_spec(q: &QuasilinearSystemSpec) -> Result<LinearizedPlant> {
    for x in check_points() {
        let (l1, l2) = (q.lambda1(x), q.lambda2(x));
        if !(l1 > 0.0 && l2 < 0.0) {
            return Err(Error::HyperbolicityViolation {
                x,
                lambda1: l1,
                lambda2: l2,
            });
        }
    }
    let scaling = Arc::new(CoordinateScaling::of(q));
    let c1 = {
        let (q, s) = (q.clone(), scaling.clone());
        scalar_fn(move |x| -q.f_lin(0, 1, x) * s.phi1(x) / s.phi2(x))
    };
    let c2 = {
        let (q, s) = (q.clone(), scaling.clone());
        scalar_fn(move |x| -q.f_lin(1, 0, x) * s.phi2(x) / s.phi1(x))
    };
    for x in (0..=100).map(|k| k as f64 / 100.0) {
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut wp = [0.0; 2];
            let mut wm = [0.0; 2];
            wp[j] = FD_STEP;
            wm[j] = -FD_STEP;
            let (fp, fm) = (transformed_drift(q, &scaling, wp, x), transformed_drift(q, &scaling, wm, x));
            for i in 0..2 {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * FD_STEP);
            }
        }
        let checks = [
            ("11", 0.0, -jac[0][0]),
            ("12", c1(x), -jac[0][1]),
            ("21", c2(x), -jac[1][0]),
            ("22", 0.0, -jac[1][1]),
        ];
        for (entry, formula, numeric) in checks {
            if (formula - numeric).abs() > LINEARIZATION_TOL {
                return Err(Error::LinearizationMismatch {
                    x,
                    entry,
                    formula,
                    numeric,
                });
            }
        }
    }
    let (l1, l2) = (q.clone(), q.clone());
    let linear = LinearSystemSpec::new(
        scalar_fn(move |x| l1.lambda1(x)),
        scalar_fn(move |x| -l2.lambda2(x)),
        c1,
        c2,
        q.q0_deriv(),
    )?;
    Ok(LinearizedPlant { linear, scaling })
}

/// Feedback gains `K^vu(1, .)`, `K^vv(1, .)` and scalings sampled on a simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    kvu: Vec<f64>,
    kvv: Vec<f64>,
    phi1: Vec<f64>,
    phi2: Vec<f64>,
}

impl ControllerGains {
    /// Gains of a linear plant (unit scalings).
    pub fn from_kernels(k: &KernelSet, m: usize) -> Result<Self> {
        Self::with_scaling(k, m, &CoordinateScaling::identity())
    }

    pub fn with_scaling(k: &KernelSet, m: usize, s: &CoordinateScaling) -> Result<Self> {
        if m < 2 {
            return Err(Error::GridTooCoarse {
                what: "controller gains",
                min: 2,
                got: m,
            });
        }
        let xs: Vec<f64> = (0..m).map(|l| l as f64 / (m - 1) as f64).collect();
        let gains = Self {
            kvu: xs.iter().map(|&xi| k.kernel(3).eval(1.0, xi)).collect(),
            kvv: xs.iter().map(|&xi| k.kernel(4).eval(1.0, xi)).collect(),
            phi1: xs.iter().map(|&x| s.phi1(x)).collect(),
            phi2: xs.iter().map(|&x| s.phi2(x)).collect(),
        };
        if gains.kvu.iter().chain(&gains.kvv).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoefficient { name: "gain", x: 1.0 });
        }
        if gains.phi1.iter().chain(&gains.phi2).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("coordinate scaling must be positive".into()));
        }
        Ok(gains)
    }

    /// Zero gains: `U = 0` plus any extension states.
    pub fn zero(m: usize) -> Self {
        Self {
            kvu: vec![0.0; m],
            kvv: vec![0.0; m],
            phi1: vec![1.0; m],
            phi2: vec![1.0; m],
        }
    }

    pub fn m(&self) -> usize {
        self.kvu.len()
    }
    pub fn kvu(&self) -> &[f64] {
        &self.kvu
    }
    pub fn kvv(&self) -> &[f64] {
        &self.kvv
    }
    pub fn phi1(&self) -> &[f64] {
        &self.phi1
    }
    pub fn phi2(&self) -> &[f64] {
        &self.phi2
    }
    pub fn phi2_at_1(&self) -> f64 {
        *self.phi2.last().unwrap()
    }

    /// Weights `k(xi) = (phi1 K^vu(1, xi), phi2 K^vv(1, xi)) / phi2(1)` of the z-feedback.
    pub fn weights(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.phi2_at_1();
        (
            self.kvu.iter().zip(&self.phi1).map(|(k, f)| k * f / p).collect(),
            self.kvv.iter().zip(&self.phi2).map(|(k, f)| k * f / p).collect(),
        )
    }

    fn check_grid(&self, z: &StateField) -> Result<()> {
        if z.m() != self.m() {
            return Err(Error::InvalidArgument(format!(
                "state has {} points, gains have {}",
                z.m(),
                self.m()
            )));
        }
        Ok(())
    }

    /// `int_0^1 k^T z` by the trapezoid rule.
    pub fn feedback_integral(&self, z: &StateField) -> Result<f64> {
        self.check_grid(z)?;
        let (k1, k2) = self.weights();
        let integrand: Vec<f64> = (0..self.m())
            .map(|l| k1[l] * z.first()[l] + k2[l] * z.second()[l])
            .collect();
        Ok(trapezoid(&integrand, z.h()))
    }

    /// Boundary value that satisfies `z2(1) = int k^T z + extra` when the last sample of
    /// `z2` is itself that boundary value (the stored `z2(1)` is ignored).
    pub fn implicit_boundary_value(&self, z: &StateField, extra: f64) -> Result<f64> {
        self.check_grid(z)?;
        let (k1, k2) = self.weights();
        let m = self.m();
        let mut integrand: Vec<f64> = (0..m)
            .map(|l| k1[l] * z.first()[l] + k2[l] * z.second()[l])
            .collect();
        integrand[m - 1] = k1[m - 1] * z.first()[m - 1];
        let partial = trapezoid(&integrand, z.h());
        let self_weight = 0.5 * z.h() * k2[m - 1];
        Ok((partial + extra) / (1.0 - self_weight))
    }

    /// CSV `xi,kvu,kvv,phi1,phi2`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "xi,kvu,kvv,phi1,phi2")?;
        let m = self.m();
        for l in 0..m {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                l as f64 / (m - 1) as f64,
                self.kvu[l],
                self.kvv[l],
                self.phi1[l],
                self.phi2[l]
            )?;
        }
        Ok(())
    }
}

/// Controller states `a(t) = a0 e^{-d1 t}`, `b(t) = b0 e^{-d2 t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicExtension {
    pub a0: f64,
    pub b0: f64,
    d1: f64,
    d2: f64,
}

impl DynamicExtension {
    pub fn new(a0: f64, b0: f64, d1: f64, d2: f64) -> Result<Self> {
        if !(d1 > 0.0 && d2 > 0.0) || (d1 - d2).abs() <= 1e-9 {
            return Err(Error::DegenerateRates { d1, d2 });
        }
        Ok(Self { a0, b0, d1, d2 })
    }

    /// Extension with zero states; the rates are never used.
    pub fn inactive() -> Self {
        Self {
            a0: 0.0,
            b0: 0.0,
            d1: 1.0,
            d2: 2.0,
        }
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }
    pub fn d2(&self) -> f64 {
        self.d2
    }

    /// `(a(t), b(t))`, evaluated in closed form.
    pub fn at(&self, t: f64) -> (f64, f64) {
        (self.a0 * (-self.d1 * t).exp(), self.b0 * (-self.d2 * t).exp())
    }
}

/// Boundary value `z2(1) = int k^T z + a + b` for the given state and extension values.
pub fn control_value(gains: &ControllerGains, z: &StateField, a: f64, b: f64) -> Result<f64> {
    Ok(gains.feedback_integral(z)? + a + b)
}

fn flux(q: &QuasilinearSystemSpec, z: &StateField, zx: &StateField, k: usize) -> [f64; 2] {
    let x = z.x(k);
    let zk = z.at(k);
    let l = q.lambda(zk, x);
    let d = zx.at(k);
    let f = q.f(zk, x);
    [
        l[0][0] * d[0] + l[0][1] * d[1] + f[0],
        l[1][0] * d[0] + l[1][1] * d[1] + f[1],
    ]
}

/// Mismatches `P1 = z0_2(1) - int k^T z0` and
/// `P2 = [Lambda z0_x + f](1)_2 - int k^T (Lambda z0_x + f)`.
pub fn compatibility_moments(
    q: &QuasilinearSystemSpec,
    gains: &ControllerGains,
    z0: &StateField,
) -> Result<(f64, f64)> {
    if z0.m() < 4 {
        return Err(Error::GridTooCoarse {
            what: "compatibility data",
            min: 4,
            got: z0.m(),
        });
    }
    let m = z0.m();
    let zx = z0.dx()?;
    let fl: Vec<[f64; 2]> = (0..m).map(|k| flux(q, z0, &zx, k)).collect();
    let fl_field = StateField::new(fl.iter().map(|v| v[0]).collect(), fl.iter().map(|v| v[1]).collect())?;
    let p1 = z0.second()[m - 1] - gains.feedback_integral(z0)?;
    let p2 = fl[m - 1][1] - gains.feedback_integral(&fl_field)?;
    Ok((p1, p2))
}

/// Extension whose initial states make the feedback-induced compatibility conditions hold.
pub fn init_extension(
    q: &QuasilinearSystemSpec,
    gains: &ControllerGains,
    z0: &StateField,
    d1: f64,
    d2: f64,
) -> Result<DynamicExtension> {
    DynamicExtension::new(0.0, 0.0, d1, d2)?;
    let (p1, p2) = compatibility_moments(q, gains, z0)?;
    let a0 = -(p2 + d2 * p1) / (d1 - d2);
    let b0 = (d1 * p1 + p2) / (d1 - d2);
    DynamicExtension::new(a0, b0, d1, d2)
}

/// Residuals of the zeroth- and first-order feedback compatibility conditions:
/// `int k^T z0 + a + b - z0_2(1)` and `int k^T (Lambda z0_x + f) - d1 a - d2 b - [Lambda z0_x + f](1)_2`.
pub fn feedback_compatibility_residuals(
    q: &QuasilinearSystemSpec,
    gains: &ControllerGains,
    z0: &StateField,
    ext: &DynamicExtension,
) -> Result<(f64, f64)> {
    let (p1, p2) = compatibility_moments(q, gains, z0)?;
    Ok((
        -p1 + ext.a0 + ext.b0,
        -p2 - ext.d1 * ext.a0 - ext.d2 * ext.b0,
    ))
}

/// Absolute residuals of the natural compatibility conditions at `x = 0`:
/// `G0(z0_2(0)) - z0_1(0)` and `G0'(z0_2(0)) r_2 - r_1` with `r = Lambda z0_x + f` at `x = 0`.
pub fn check_natural_compatibility(q: &QuasilinearSystemSpec, z0: &StateField) -> Result<(f64, f64)> {
    if z0.m() < 4 {
        return Err(Error::GridTooCoarse {
            what: "compatibility data",
            min: 4,
            got: z0.m(),
        });
    }
    let z = z0.at(0);
    let r0 = q.g0(z[1]) - z[0];
    let d = first_derivative(z0.first(), z0.h())[0];
    let e = first_derivative(z0.second(), z0.h())[0];
    let zx = StateField::from_parts_unchecked(vec![d, d], vec![e, e]);
    let zz = StateField::from_parts_unchecked(vec![z[0], z[0]], vec![z[1], z[1]]);
    let r = flux(q, &zz, &zx, 0);
    let g_prime = (q.g0(z[1] + FD_STEP) - q.g0(z[1] - FD_STEP)) / (2.0 * FD_STEP);
    Ok((r0.abs(), (g_prime * r[1] - r[0]).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goursat::{picard_solve, PicardOptions};
    use crate::model::{MatrixFn, TriangularGrid, VectorFn};

    fn unit_plant() -> LinearSystemSpec {
        LinearSystemSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn direct_problem_boundary_data() {
        let p = assemble_direct_kernel_problem(&unit_plant()).unwrap();
        assert_eq!(p.boundary(2, 0.3), 0.5);
        assert_eq!(p.boundary(3, 0.3), -0.5);
        assert_eq!(p.reflection(1, 0.0), 1.0);
        assert_eq!(p.reflection(4, 0.0), 1.0);
        assert_eq!(p.reflection(2, 0.0), 0.0);
        assert_eq!(p.coupling(1, 2, 0.5, 0.2), -1.0);
        assert_eq!(p.coupling(4, 3, 0.5, 0.2), 1.0);
    }

    #[test]
    fn reflection_coefficients_by_substitution() {
        let sys = LinearSystemSpec::constant(1.0, 2.0, 1.0, 1.0, 0.5).unwrap();
        let p = assemble_direct_kernel_problem(&sys).unwrap();
        assert_eq!(p.reflection(1, 0.0), 4.0);
        assert_eq!(p.reflection(4, 0.0), 0.25);
    }

    #[test]
    fn small_q_is_rejected() {
        let sys = LinearSystemSpec::constant(1.0, 1.0, 1.0, 1.0, 1e-7).unwrap();
        assert!(matches!(
            assemble_direct_kernel_problem(&sys),
            Err(Error::QNearZero { .. })
        ));
        assert!(assemble_inverse_kernel_problem(&sys).is_err());
    }

    #[test]
    fn uncoupled_plant_has_zero_kernels() {
        let sys = LinearSystemSpec::constant(1.0, 1.5, 0.0, 0.0, 0.7).unwrap();
        let g = TriangularGrid::new(11).unwrap();
        for p in [
            assemble_direct_kernel_problem(&sys).unwrap(),
            assemble_inverse_kernel_problem(&sys).unwrap(),
        ] {
            let k = picard_solve(&p, g, PicardOptions::default()).unwrap();
            assert_eq!(k.sup_norm(), 0.0);
        }
    }

    #[test]
    fn transforms_are_identity_at_the_left_end() {
        let g = TriangularGrid::new(21).unwrap();
        let k = picard_solve(
            &assemble_direct_kernel_problem(&unit_plant()).unwrap(),
            g,
            PicardOptions::default(),
        )
        .unwrap();
        let w = StateField::from_fns(33, |x| 1.0 + x, |x| x * x - 0.3).unwrap();
        let gamma = direct_transform(&k, &w).unwrap();
        assert_eq!(gamma.at(0), w.at(0));
        let back = inverse_transform(&k, &w).unwrap();
        assert_eq!(back.at(0), w.at(0));
    }

    #[test]
    fn extension_rates_must_differ() {
        assert!(matches!(
            DynamicExtension::new(0.0, 0.0, 1.0, 1.0),
            Err(Error::DegenerateRates { .. })
        ));
        assert!(DynamicExtension::new(0.0, 0.0, -1.0, 1.0).is_err());
        let e = DynamicExtension::new(2.0, 3.0, 1.0, 2.0).unwrap();
        assert_eq!(e.at(0.0), (2.0, 3.0));
    }

    #[test]
    fn pure_extension_control() {
        let z = StateField::zeros(16).unwrap();
        let g = ControllerGains::zero(16);
        assert_eq!(control_value(&g, &z, 1.0, 2.0).unwrap(), 3.0);
        assert_eq!(control_value(&g, &z, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_plant_linearizes_to_itself() {
        let lambda: MatrixFn = Arc::new(|_, _| [[1.0, 0.0], [0.0, -1.0]]);
        let f: VectorFn = Arc::new(|_, _| [0.0, 0.0]);
        let q = QuasilinearSystemSpec::new(lambda, f, scalar_fn(|v| v)).unwrap();
        let lin = build_linear_spec(&q).unwrap();
        for x in [0.0, 0.4, 1.0] {
            assert_eq!(lin.linear.eps1(x), 1.0);
            assert_eq!(lin.linear.eps2(x), 1.0);
            assert_eq!(lin.linear.c1(x), 0.0);
            assert_eq!(lin.scaling.phi2(x), 1.0);
        }
        assert!((lin.linear.q() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn natural_compatibility_of_incompatible_data() {
        let lambda: MatrixFn = Arc::new(|_, _| [[1.0, 0.0], [0.0, -1.0]]);
        let f: VectorFn = Arc::new(|_, _| [0.0, 0.0]);
        let q = QuasilinearSystemSpec::new(lambda, f, scalar_fn(|v| v)).unwrap();
        let z0 = StateField::from_fns(20, |x| 1.0 - x, |_| 0.0).unwrap();
        let (r0, _) = check_natural_compatibility(&q, &z0).unwrap();
        assert_eq!(r0, 1.0);
    }
}
