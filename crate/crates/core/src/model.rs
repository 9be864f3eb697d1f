//! Domain types shared by the kernel solver, the controller and the simulators.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Scalar coefficient on `[0, 1]`.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Coefficient on the triangle `0 <= xi <= x <= 1`, called as `f(x, xi)`.
pub type FieldFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// State-dependent 2x2 matrix, called as `f(z, x)`.
pub type MatrixFn = Arc<dyn Fn([f64; 2], f64) -> [[f64; 2]; 2] + Send + Sync>;
/// State-dependent vector field, called as `f(z, x)`.
pub type VectorFn = Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;

/// Number of uniformly spaced points at which coefficient invariants are checked.
pub const CHECK_POINTS: usize = 1001;

/// Step of the finite differences used for coefficient derivatives.
pub const FD_STEP: f64 = 1e-6;

pub fn constant(value: f64) -> ScalarFn {
    Arc::new(move |_| value)
}

pub fn scalar_fn<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> ScalarFn {
    Arc::new(f)
}

pub fn field_fn<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(f: F) -> FieldFn {
    Arc::new(f)
}

pub(crate) fn check_points() -> impl Iterator<Item = f64> {
    (0..CHECK_POINTS).map(|k| k as f64 / (CHECK_POINTS - 1) as f64)
}

/// Central difference clamped to `[0, 1]` (one-sided at the ends).
pub(crate) fn derivative(f: &dyn Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    let lo = (x - step).max(0.0);
    let hi = (x + step).min(1.0);
    (f(hi) - f(lo)) / (hi - lo)
}

/// Linear plant `w_t = Sigma w_x + C w` with `Sigma = diag(-eps1, eps2)`,
/// `C = [[0, c1], [c2, 0]]` and boundary conditions `u(0) = q v(0)`, `v(1) = U`.
#[derive(Clone)]
pub struct LinearSystemSpec {
    eps1: ScalarFn,
    eps2: ScalarFn,
    c1: ScalarFn,
    c2: ScalarFn,
    q: f64,
    eps1_prime: Option<ScalarFn>,
    eps2_prime: Option<ScalarFn>,
}

impl fmt::Debug for LinearSystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearSystemSpec")
            .field("eps1(0)", &self.eps1(0.0))
            .field("eps2(0)", &self.eps2(0.0))
            .field("c1(0)", &self.c1(0.0))
            .field("c2(0)", &self.c2(0.0))
            .field("q", &self.q)
            .finish()
    }
}

impl LinearSystemSpec {
    pub fn new(eps1: ScalarFn, eps2: ScalarFn, c1: ScalarFn, c2: ScalarFn, q: f64) -> Result<Self> {
        if !q.is_finite() {
            return Err(Error::InvalidArgument(format!("q must be finite, got {q}")));
        }
        for x in check_points() {
            for (name, f) in [("eps1", &eps1), ("eps2", &eps2)] {
                let v = f(x);
                if !v.is_finite() {
                    return Err(Error::NonFiniteCoefficient { name, x });
                }
                if v <= 0.0 {
                    return Err(Error::NonPositiveSpeed { name, x, value: v });
                }
            }
            for (name, f) in [("c1", &c1), ("c2", &c2)] {
                if !f(x).is_finite() {
                    return Err(Error::NonFiniteCoefficient { name, x });
                }
            }
        }
        Ok(Self {
            eps1,
            eps2,
            c1,
            c2,
            q,
            eps1_prime: None,
            eps2_prime: None,
        })
    }

    /// Constant-coefficient system.
    pub fn constant(eps1: f64, eps2: f64, c1: f64, c2: f64, q: f64) -> Result<Self> {
        Ok(
            Self::new(constant(eps1), constant(eps2), constant(c1), constant(c2), q)?
                .with_speed_derivatives(constant(0.0), constant(0.0)),
        )
    }

    /// Supplies analytic derivatives of the speeds instead of finite differences.
    pub fn with_speed_derivatives(mut self, eps1_prime: ScalarFn, eps2_prime: ScalarFn) -> Self {
        self.eps1_prime = Some(eps1_prime);
        self.eps2_prime = Some(eps2_prime);
        self
    }

    pub fn eps1(&self, x: f64) -> f64 {
        (self.eps1)(x)
    }
    pub fn eps2(&self, x: f64) -> f64 {
        (self.eps2)(x)
    }
    pub fn c1(&self, x: f64) -> f64 {
        (self.c1)(x)
    }
    pub fn c2(&self, x: f64) -> f64 {
        (self.c2)(x)
    }
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn eps1_prime(&self, x: f64) -> f64 {
        match &self.eps1_prime {
            Some(d) => d(x),
            None => derivative(&*self.eps1, x, FD_STEP),
        }
    }
    pub fn eps2_prime(&self, x: f64) -> f64 {
        match &self.eps2_prime {
            Some(d) => d(x),
            None => derivative(&*self.eps2, x, FD_STEP),
        }
    }

    pub fn eps1_fn(&self) -> ScalarFn {
        self.eps1.clone()
    }
    pub fn eps2_fn(&self) -> ScalarFn {
        self.eps2.clone()
    }
    pub fn c1_fn(&self) -> ScalarFn {
        self.c1.clone()
    }
    pub fn c2_fn(&self) -> ScalarFn {
        self.c2.clone()
    }
    pub(crate) fn eps1_prime_fn(&self) -> ScalarFn {
        match &self.eps1_prime {
            Some(d) => d.clone(),
            None => {
                let e = self.eps1.clone();
                Arc::new(move |x| derivative(&*e, x, FD_STEP))
            }
        }
    }
    pub(crate) fn eps2_prime_fn(&self) -> ScalarFn {
        match &self.eps2_prime {
            Some(d) => d.clone(),
            None => {
                let e = self.eps2.clone();
                Arc::new(move |x| derivative(&*e, x, FD_STEP))
            }
        }
    }

    /// Same system with another reflection coefficient.
    pub fn with_q(&self, q: f64) -> Self {
        Self { q, ..self.clone() }
    }

    /// `max(1/eps1, 1/eps2)` over the check points.
    pub fn inverse_speed_bound(&self) -> f64 {
        check_points()
            .map(|x| (1.0 / self.eps1(x)).max(1.0 / self.eps2(x)))
            .fold(0.0, f64::max)
    }
}

/// Quasilinear plant `z_t + Lambda(z, x) z_x + f(z, x) = 0` with
/// `z1(0) = G0(z2(0))` and `z2(1) = U`.
#[derive(Clone)]
pub struct QuasilinearSystemSpec {
    lambda: MatrixFn,
    f: VectorFn,
    g0: ScalarFn,
    f_lin: [ScalarFn; 4],
    q0_deriv: f64,
}

impl fmt::Debug for QuasilinearSystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuasilinearSystemSpec")
            .field("lambda(0,0)", &self.lambda([0.0; 2], 0.0))
            .field("q0_deriv", &self.q0_deriv)
            .finish()
    }
}

impl QuasilinearSystemSpec {
    /// Builds the plant; the Jacobian `df/dz(0, x)` and `G0'(0)` are taken by
    /// central differences unless supplied through [`Self::with_linearization`].
    pub fn new(lambda: MatrixFn, f: VectorFn, g0: ScalarFn) -> Result<Self> {
        let f_lin = fd_jacobian_entries(&f);
        let h = FD_STEP;
        let q0_deriv = (g0(h) - g0(-h)) / (2.0 * h);
        let spec = Self {
            lambda,
            f,
            g0,
            f_lin,
            q0_deriv,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_linearization(mut self, f_lin: [ScalarFn; 4], q0_deriv: f64) -> Self {
        self.f_lin = f_lin;
        self.q0_deriv = q0_deriv;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.g0(0.0).abs() > 1e-12 {
            return Err(Error::NotAnEquilibrium(format!(
                "G0(0) = {} must vanish",
                self.g0(0.0)
            )));
        }
        for x in check_points() {
            let l = self.lambda([0.0; 2], x);
            if l[0][1].abs() > 1e-12 || l[1][0].abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "Lambda(0, {x}) must be diagonal, got {l:?}"
                )));
            }
            if !(l[0][0] > 0.0 && l[1][1] < 0.0) {
                return Err(Error::HyperbolicityViolation {
                    x,
                    lambda1: l[0][0],
                    lambda2: l[1][1],
                });
            }
            let f0 = self.f([0.0; 2], x);
            if f0[0].abs() > 1e-12 || f0[1].abs() > 1e-12 {
                return Err(Error::NotAnEquilibrium(format!("f(0, {x}) = {f0:?}")));
            }
        }
        Ok(())
    }

    pub fn lambda(&self, z: [f64; 2], x: f64) -> [[f64; 2]; 2] {
        (self.lambda)(z, x)
    }
    pub fn f(&self, z: [f64; 2], x: f64) -> [f64; 2] {
        (self.f)(z, x)
    }
    pub fn g0(&self, v: f64) -> f64 {
        (self.g0)(v)
    }
    /// `G0'(0)`, the reflection coefficient of the linearization.
    pub fn q0_deriv(&self) -> f64 {
        self.q0_deriv
    }
    /// Entry `(i, j)` (zero based) of `df/dz(0, x)`.
    pub fn f_lin(&self, i: usize, j: usize, x: f64) -> f64 {
        (self.f_lin[2 * i + j])(x)
    }
    pub fn lambda1(&self, x: f64) -> f64 {
        self.lambda([0.0; 2], x)[0][0]
    }
    pub fn lambda2(&self, x: f64) -> f64 {
        self.lambda([0.0; 2], x)[1][1]
    }
}

fn fd_jacobian_entries(f: &VectorFn) -> [ScalarFn; 4] {
    let entry = |i: usize, j: usize| -> ScalarFn {
        let f = f.clone();
        Arc::new(move |x| {
            let mut zp = [0.0; 2];
            let mut zm = [0.0; 2];
            zp[j] = FD_STEP;
            zm[j] = -FD_STEP;
            (f(zp, x)[i] - f(zm, x)[i]) / (2.0 * FD_STEP)
        })
    };
    [entry(0, 0), entry(0, 1), entry(1, 0), entry(1, 1)]
}

/// Uniform nodes `(x_i, xi_j)`, `j <= i`, on the triangle `0 <= xi <= x <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriangularGrid {
    n: usize,
}

/// Interpolation weights of at most four nodes.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub idx: [usize; 4],
    pub w: [f64; 4],
    pub len: usize,
}

impl Stencil {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(move |k| (self.idx[k], self.w[k]))
    }
}

impl TriangularGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::GridTooCoarse {
                what: "triangular grid",
                min: 2,
                got: n,
            });
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 / (self.n - 1) as f64
    }
    /// Number of nodes, `n (n + 1) / 2`.
    pub fn len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Row-major index of node `(i, j)`, `j <= i`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i < self.n);
        i * (i + 1) / 2 + j
    }
    /// Node indices `(i, j)` in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n;
        (0..n).flat_map(|i| (0..=i).map(move |j| (i, j)))
    }

    /// Bilinear weights on square cells, linear weights on the diagonal cells.
    pub fn stencil(&self, x: f64, xi: f64) -> Stencil {
        let last = (self.n - 1) as f64;
        let x = x.clamp(0.0, 1.0);
        let xi = xi.clamp(0.0, x);
        let sx = x * last;
        let sxi = xi * last;
        let i = (sx.floor() as usize).min(self.n - 2);
        let fx = sx - i as f64;
        let j = (sxi.floor() as usize).min(i);
        let fxi = (sxi - j as f64).clamp(0.0, 1.0);
        if j < i {
            Stencil {
                idx: [
                    self.index(i, j),
                    self.index(i + 1, j),
                    self.index(i, j + 1),
                    self.index(i + 1, j + 1),
                ],
                w: [
                    (1.0 - fx) * (1.0 - fxi),
                    fx * (1.0 - fxi),
                    (1.0 - fx) * fxi,
                    fx * fxi,
                ],
                len: 4,
            }
        } else {
            let fxi = fxi.min(fx);
            Stencil {
                idx: [
                    self.index(i, i),
                    self.index(i + 1, i),
                    self.index(i + 1, i + 1),
                    0,
                ],
                w: [1.0 - fx, fx - fxi, fxi, 0.0],
                len: 3,
            }
        }
    }
}

/// Scalar field stored at the nodes of a [`TriangularGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction2T {
    grid: TriangularGrid,
    values: Vec<f64>,
}

impl GridFunction2T {
    pub fn zeros(grid: TriangularGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: TriangularGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} nodal values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TriangularGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid
            .nodes()
            .map(|(i, j)| f(grid.coord(i), grid.coord(j)))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> TriangularGrid {
        self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn eval(&self, x: f64, xi: f64) -> f64 {
        self.grid
            .stencil(x, xi)
            .iter()
            .map(|(k, w)| w * self.values[k])
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Two-component state sampled on `x_k = k / (m - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    first: Vec<f64>,
    second: Vec<f64>,
}

impl StateField {
    pub fn new(first: Vec<f64>, second: Vec<f64>) -> Result<Self> {
        if first.len() != second.len() {
            return Err(Error::InvalidArgument(format!(
                "component lengths differ: {} vs {}",
                first.len(),
                second.len()
            )));
        }
        if first.len() < 2 {
            return Err(Error::GridTooCoarse {
                what: "state field",
                min: 2,
                got: first.len(),
            });
        }
        if first.iter().chain(&second).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("state contains non-finite values".into()));
        }
        Ok(Self { first, second })
    }

    pub fn zeros(m: usize) -> Result<Self> {
        Self::new(vec![0.0; m], vec![0.0; m])
    }

    pub fn from_fns(m: usize, f1: impl Fn(f64) -> f64, f2: impl Fn(f64) -> f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::GridTooCoarse {
                what: "state field",
                min: 2,
                got: m,
            });
        }
        let xs: Vec<f64> = (0..m).map(|k| k as f64 / (m - 1) as f64).collect();
        Self::new(xs.iter().map(|&x| f1(x)).collect(), xs.iter().map(|&x| f2(x)).collect())
    }

    pub(crate) fn from_parts_unchecked(first: Vec<f64>, second: Vec<f64>) -> Self {
        Self { first, second }
    }

    pub fn m(&self) -> usize {
        self.first.len()
    }
    pub fn h(&self) -> f64 {
        1.0 / (self.m() - 1) as f64
    }
    pub fn x(&self, k: usize) -> f64 {
        k as f64 / (self.m() - 1) as f64
    }
    pub fn first(&self) -> &[f64] {
        &self.first
    }
    pub fn second(&self) -> &[f64] {
        &self.second
    }
    pub fn at(&self, k: usize) -> [f64; 2] {
        [self.first[k], self.second[k]]
    }

    /// Piecewise-linear evaluation.
    pub fn eval(&self, x: f64) -> [f64; 2] {
        let last = (self.m() - 1) as f64;
        let s = x.clamp(0.0, 1.0) * last;
        let k = (s.floor() as usize).min(self.m() - 2);
        let t = s - k as f64;
        [
            (1.0 - t) * self.first[k] + t * self.first[k + 1],
            (1.0 - t) * self.second[k] + t * self.second[k + 1],
        ]
    }

    /// Same field on `m` points by linear interpolation.
    pub fn resample(&self, m: usize) -> Result<Self> {
        if m == self.m() {
            return Ok(self.clone());
        }
        Self::from_fns(m, |x| self.eval(x)[0], |x| self.eval(x)[1])
    }

    /// Derivative field: central differences inside, second-order one-sided at the ends.
    pub fn dx(&self) -> Result<Self> {
        Ok(Self::from_parts_unchecked(
            first_derivative(&self.first, self.h()),
            first_derivative(&self.second, self.h()),
        ))
    }

    pub fn dxx(&self) -> Result<Self> {
        if self.m() < 4 {
            return Err(Error::GridTooCoarse {
                what: "second derivative",
                min: 4,
                got: self.m(),
            });
        }
        Ok(Self::from_parts_unchecked(
            second_derivative(&self.first, self.h()),
            second_derivative(&self.second, self.h()),
        ))
    }
}

pub(crate) fn first_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let m = f.len();
    if m == 2 {
        let d = (f[1] - f[0]) / h;
        return vec![d, d];
    }
    (0..m)
        .map(|k| {
            if k == 0 {
                (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
            } else if k == m - 1 {
                (3.0 * f[m - 1] - 4.0 * f[m - 2] + f[m - 3]) / (2.0 * h)
            } else {
                (f[k + 1] - f[k - 1]) / (2.0 * h)
            }
        })
        .collect()
}

pub(crate) fn second_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let m = f.len();
    let h2 = h * h;
    (0..m)
        .map(|k| {
            if k == 0 {
                (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2
            } else if k == m - 1 {
                (2.0 * f[m - 1] - 5.0 * f[m - 2] + 4.0 * f[m - 3] - f[m - 4]) / h2
            } else {
                (f[k + 1] - 2.0 * f[k] + f[k - 1]) / h2
            }
        })
        .collect()
}

/// Composite trapezoid of samples on a uniform grid of spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        m => h * (values[1..m - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[m - 1])),
    }
}

/// `sqrt(int (u^2 + v^2))` by the composite trapezoid rule.
pub fn norm_l2(s: &StateField) -> f64 {
    let sq: Vec<f64> = s
        .first
        .iter()
        .zip(&s.second)
        .map(|(u, v)| u * u + v * v)
        .collect();
    trapezoid(&sq, s.h()).max(0.0).sqrt()
}

/// `|z|_L2 + |z_x|_L2`.
pub fn norm_h1(s: &StateField) -> Result<f64> {
    Ok(norm_l2(s) + norm_l2(&s.dx()?))
}

/// `|z|_H1 + |z_xx|_L2`.
pub fn norm_h2(s: &StateField) -> Result<f64> {
    if s.m() < 4 {
        return Err(Error::GridTooCoarse {
            what: "H2 norm",
            min: 4,
            got: s.m(),
        });
    }
    Ok(norm_h1(s)? + norm_l2(&s.dxx()?))
}

/// `sup_x (|u(x)| + |v(x)|)`.
pub fn norm_sup(s: &StateField) -> f64 {
    s.first
        .iter()
        .zip(&s.second)
        .fold(0.0, |m, (u, v)| m.max(u.abs() + v.abs()))
}

/// Norms of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormRecord {
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
    pub sup: f64,
}

impl NormRecord {
    pub fn of(s: &StateField) -> Result<Self> {
        Ok(Self {
            l2: norm_l2(s),
            h1: norm_h1(s)?,
            h2: norm_h2(s)?,
            sup: norm_sup(s),
        })
    }

    pub fn max(&self) -> f64 {
        self.l2.max(self.h1).max(self.h2).max(self.sup)
    }
}

/// Time series produced by the simulators.
#[derive(Debug, Clone, Default)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub snapshots: Vec<StateField>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub control: Vec<f64>,
    pub norms: Vec<NormRecord>,
}

impl SimulationTrace {
    pub fn push(&mut self, t: f64, state: StateField, a: f64, b: f64, control: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::InvalidArgument(format!(
                    "trace times must increase ({t} after {last})"
                )));
            }
        }
        self.norms.push(NormRecord::of(&state)?);
        self.times.push(t);
        self.snapshots.push(state);
        self.a.push(a);
        self.b.push(b);
        self.control.push(control);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Snapshot closest to `t`.
    pub fn nearest(&self, t: f64) -> Option<(f64, &StateField)> {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some((self.times[k], &self.snapshots[k]))
    }
}
