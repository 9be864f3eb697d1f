//! Generic 4x4 Goursat system on the triangle `0 <= xi <= x <= 1`:
//!
//! ```text
//! eps1(x) F1_x + eps1(xi) F1_xi = g1 + sum_i C1i Fi
//! eps1(x) F2_x - eps2(xi) F2_xi = g2 + sum_i C2i Fi
//! eps2(x) F3_x - eps1(xi) F3_xi = g3 + sum_i C3i Fi
//! eps2(x) F4_x + eps2(xi) F4_xi = g4 + sum_i C4i Fi
//!
//! F1(x, 0) = h1 + q1 F2(x, 0) + q2 F3(x, 0)
//! F2(x, x) = h2,  F3(x, x) = h3
//! F4(x, 0) = h4 + q3 F2(x, 0) + q4 F3(x, 0)
//! ```
//!
//! Each equation is integrated along its characteristic, turning the system into
//! `F = phi + Phi[F]` with `Phi` linear. The solver discretizes `Phi` once into a
//! sparse operator on the nodal values (trapezoid along each curve, bilinear
//! interpolation of the iterate) and runs successive approximations
//! `F^0 = phi`, `F^n = phi + Phi[F^(n-1)]` until the sup increment drops below `tol`.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::characteristics::{CharacteristicMaps, DEFAULT_QUAD_POINTS};
use crate::error::{Error, Result};
use crate::model::{check_points, FieldFn, GridFunction2T, ScalarFn, TriangularGrid};

/// Coefficients of the Goursat system. Indices are 1-based, as in `C_ji`, `h_i`, `q_i`.
/// Unset entries are identically zero.
#[derive(Clone)]
pub struct GoursatProblem {
    eps1: ScalarFn,
    eps2: ScalarFn,
    coupling: [[Option<FieldFn>; 4]; 4],
    forcing: [Option<FieldFn>; 4],
    boundary: [Option<ScalarFn>; 4],
    reflection: [Option<ScalarFn>; 4],
}

impl fmt::Debug for GoursatProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let set = |o: &[Option<FieldFn>; 4]| o.iter().map(Option::is_some).collect::<Vec<_>>();
        f.debug_struct("GoursatProblem")
            .field("coupling", &self.coupling.iter().map(set).collect::<Vec<_>>())
            .field("forcing", &set(&self.forcing))
            .field(
                "boundary",
                &self.boundary.iter().map(Option::is_some).collect::<Vec<_>>(),
            )
            .field(
                "reflection",
                &self.reflection.iter().map(Option::is_some).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl GoursatProblem {
    pub fn new(eps1: ScalarFn, eps2: ScalarFn) -> Self {
        Self {
            eps1,
            eps2,
            coupling: Default::default(),
            forcing: Default::default(),
            boundary: Default::default(),
            reflection: Default::default(),
        }
    }

    /// Sets `C_ji`.
    pub fn set_coupling(&mut self, j: usize, i: usize, c: FieldFn) -> &mut Self {
        self.coupling[j - 1][i - 1] = Some(c);
        self
    }
    /// Sets `g_j`.
    pub fn set_forcing(&mut self, j: usize, g: FieldFn) -> &mut Self {
        self.forcing[j - 1] = Some(g);
        self
    }
    /// Sets `h_j`.
    pub fn set_boundary(&mut self, j: usize, h: ScalarFn) -> &mut Self {
        self.boundary[j - 1] = Some(h);
        self
    }
    /// Sets `q_k`, k = 1..4.
    pub fn set_reflection(&mut self, k: usize, q: ScalarFn) -> &mut Self {
        self.reflection[k - 1] = Some(q);
        self
    }
    pub fn clear_boundary(&mut self, j: usize) -> &mut Self {
        self.boundary[j - 1] = None;
        self
    }
    pub fn clear_reflection(&mut self, k: usize) -> &mut Self {
        self.reflection[k - 1] = None;
        self
    }
    pub fn clear_forcing(&mut self, j: usize) -> &mut Self {
        self.forcing[j - 1] = None;
        self
    }

    pub fn eps1(&self, x: f64) -> f64 {
        (self.eps1)(x)
    }
    pub fn eps2(&self, x: f64) -> f64 {
        (self.eps2)(x)
    }
    pub fn coupling(&self, j: usize, i: usize, x: f64, xi: f64) -> f64 {
        self.coupling[j - 1][i - 1].as_ref().map_or(0.0, |c| c(x, xi))
    }
    pub fn forcing(&self, j: usize, x: f64, xi: f64) -> f64 {
        self.forcing[j - 1].as_ref().map_or(0.0, |g| g(x, xi))
    }
    pub fn boundary(&self, j: usize, x: f64) -> f64 {
        self.boundary[j - 1].as_ref().map_or(0.0, |h| h(x))
    }
    pub fn reflection(&self, k: usize, x: f64) -> f64 {
        self.reflection[k - 1].as_ref().map_or(0.0, |q| q(x))
    }

    /// Checks positivity of the speeds and finiteness of every coefficient on `grid`.
    pub fn validate(&self, grid: TriangularGrid) -> Result<()> {
        for x in check_points() {
            for (name, e) in [("eps1", &self.eps1), ("eps2", &self.eps2)] {
                let v = e(x);
                if !v.is_finite() {
                    return Err(Error::NonFiniteCoefficient { name, x });
                }
                if v <= 0.0 {
                    return Err(Error::NonPositiveSpeed { name, x, value: v });
                }
            }
        }
        for (i, j) in grid.nodes() {
            let (x, xi) = (grid.coord(i), grid.coord(j));
            for r in 1..=4 {
                for c in 1..=4 {
                    if !self.coupling(r, c, x, xi).is_finite() {
                        return Err(Error::NonFiniteCoefficient { name: "C", x });
                    }
                }
                if !self.forcing(r, x, xi).is_finite() {
                    return Err(Error::NonFiniteCoefficient { name: "g", x });
                }
            }
        }
        for k in 0..grid.n() {
            let x = grid.coord(k);
            for r in 1..=4 {
                if !self.boundary(r, x).is_finite() {
                    return Err(Error::NonFiniteCoefficient { name: "h", x });
                }
                if !self.reflection(r, x).is_finite() {
                    return Err(Error::NonFiniteCoefficient { name: "q", x });
                }
            }
        }
        Ok(())
    }

    fn has_coupling(&self, j: usize, i: usize) -> bool {
        self.coupling[j - 1][i - 1].is_some()
    }
}

/// Number of trapezoid panels used along each characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubSamples {
    /// `ceil(L / h) + 2` panels, `L` the length bound `s_F * max(eps)` of the curve.
    GridMatched,
    /// At least this many panels on every curve, and never fewer than grid-matched.
    AtLeast(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub sub_samples: SubSamples,
    pub quad_points: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            sub_samples: SubSamples::GridMatched,
            quad_points: DEFAULT_QUAD_POINTS,
        }
    }
}

/// Constants of the factorial bound `|dF^n| <= phi_bar (C_bar K_eps)^n / n!`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConstants {
    pub phi_bar: f64,
    pub c_bar: f64,
    pub k_eps: f64,
}

impl PicardConstants {
    /// Bound on the `n`-th increment.
    pub fn increment_bound(&self, n: usize) -> f64 {
        if self.phi_bar == 0.0 {
            return 0.0;
        }
        let ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
        let rate = self.c_bar * self.k_eps;
        if rate == 0.0 {
            return if n == 0 { self.phi_bar } else { 0.0 };
        }
        (self.phi_bar.ln() + n as f64 * rate.ln() - ln_fact).exp()
    }

    /// Bound on the solution, `phi_bar exp(C_bar K_eps)`.
    pub fn solution_bound(&self) -> f64 {
        self.phi_bar * (self.c_bar * self.k_eps).exp()
    }
}

/// Solved kernels `F1..F4` on a triangular grid with convergence data.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub kernels: [GridFunction2T; 4],
    pub iterations: usize,
    pub final_increment: f64,
    pub certified_bound: f64,
    /// `sup |F^n - F^(n-1)|` for n = 0, 1, ..., with `F^(-1) = 0`.
    pub increments: Vec<f64>,
    pub constants: PicardConstants,
}

impl KernelSet {
    pub fn grid(&self) -> TriangularGrid {
        self.kernels[0].grid()
    }

    /// Kernel `F_k`, k = 1..4.
    pub fn kernel(&self, k: usize) -> &GridFunction2T {
        &self.kernels[k - 1]
    }

    pub fn sup_norm(&self) -> f64 {
        self.kernels.iter().map(GridFunction2T::sup_norm).fold(0.0, f64::max)
    }

    /// CSV `x,xi,F1,F2,F3,F4`, one row per node, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,xi,F1,F2,F3,F4")?;
        let g = self.grid();
        for (i, j) in g.nodes() {
            let k = g.index(i, j);
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                g.coord(i),
                g.coord(j),
                self.kernels[0].values()[k],
                self.kernels[1].values()[k],
                self.kernels[2].values()[k],
                self.kernels[3].values()[k]
            )?;
        }
        Ok(())
    }
}

/// Sparse affine map `F -> constant + A F` on the stacked nodal values.
#[derive(Debug, Clone)]
struct SweepOperator {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    constant: Vec<f64>,
}

impl SweepOperator {
    fn apply(&self, prev: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = self.constant[r];
            for (c, v) in self.cols[lo..hi].iter().zip(&self.vals[lo..hi]) {
                acc += v * prev[*c as usize];
            }
            *o = acc;
        });
    }
}

#[derive(Default)]
struct RowAcc {
    constant: f64,
    entries: Vec<(u32, f64)>,
}

struct Assembler<'a> {
    p: &'a GoursatProblem,
    maps: &'a CharacteristicMaps,
    grid: TriangularGrid,
    v_max: f64,
    sub: SubSamples,
}

impl Assembler<'_> {
    fn panels(&self, s_final: f64) -> usize {
        let matched = (s_final * self.v_max / self.grid.h()).ceil() as usize + 2;
        match self.sub {
            SubSamples::GridMatched => matched,
            SubSamples::AtLeast(k) => matched.max(k),
        }
    }

    /// Adds `scale * (H_j + G_j + I_j[F])` at `(x, xi)` and, for j = 1, 4, the
    /// reflected contributions of equations 2 and 3 evaluated on `xi = 0`.
    fn add_equation(&self, j: usize, x: f64, xi: f64, scale: f64, row: &mut RowAcc) {
        let ch = self.maps.characteristic(j, x, xi);
        let (x0, _) = ch.start();
        row.constant += scale * self.p.boundary(j, x0);
        let s_final = ch.s_final();
        if s_final > 0.0 {
            let panels = self.panels(s_final);
            let ds = s_final / panels as f64;
            let n_nodes = self.grid.len();
            for k in 0..=panels {
                let w = if k == 0 || k == panels { 0.5 * ds } else { ds } * scale;
                let (px, pxi) = ch.at(k as f64 * ds);
                row.constant += w * self.p.forcing(j, px, pxi);
                let mut stencil = None;
                for i in 1..=4 {
                    if !self.p.has_coupling(j, i) {
                        continue;
                    }
                    let c = w * self.p.coupling(j, i, px, pxi);
                    if c == 0.0 {
                        continue;
                    }
                    let st = *stencil.get_or_insert_with(|| self.grid.stencil(px, pxi));
                    let offset = (i - 1) * n_nodes;
                    for (idx, omega) in st.iter() {
                        if omega != 0.0 {
                            row.entries.push(((offset + idx) as u32, c * omega));
                        }
                    }
                }
            }
        }
        let reflected: &[(usize, usize)] = match j {
            1 => &[(1, 2), (2, 3)],
            4 => &[(3, 2), (4, 3)],
            _ => &[],
        };
        for &(k, target) in reflected {
            let q = self.p.reflection(k, x0);
            if q != 0.0 {
                self.add_equation(target, x0, 0.0, scale * q, row);
            }
        }
    }

    fn build(&self) -> SweepOperator {
        let n_nodes = self.grid.len();
        let nodes: Vec<(usize, usize)> = self.grid.nodes().collect();
        let rows: Vec<(f64, Vec<u32>, Vec<f64>)> = (0..4 * n_nodes)
            .into_par_iter()
            .map(|r| {
                let j = r / n_nodes + 1;
                let (ix, ixi) = nodes[r % n_nodes];
                let mut acc = RowAcc::default();
                self.add_equation(j, self.grid.coord(ix), self.grid.coord(ixi), 1.0, &mut acc);
                acc.entries.sort_unstable_by_key(|e| e.0);
                let mut cols: Vec<u32> = Vec::with_capacity(acc.entries.len());
                let mut vals: Vec<f64> = Vec::with_capacity(acc.entries.len());
                for (c, v) in acc.entries {
                    if cols.last() == Some(&c) {
                        *vals.last_mut().unwrap() += v;
                    } else {
                        cols.push(c);
                        vals.push(v);
                    }
                }
                cols.shrink_to_fit();
                vals.shrink_to_fit();
                (acc.constant, cols, vals)
            })
            .collect();
        let nnz: usize = rows.iter().map(|r| r.1.len()).sum();
        let mut op = SweepOperator {
            row_ptr: Vec::with_capacity(rows.len() + 1),
            cols: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
            constant: Vec::with_capacity(rows.len()),
        };
        op.row_ptr.push(0);
        for (c, cols, vals) in rows {
            op.constant.push(c);
            op.cols.extend_from_slice(&cols);
            op.vals.extend_from_slice(&vals);
            op.row_ptr.push(op.cols.len());
        }
        op
    }
}

/// Discretized successive-approximation solver for one [`GoursatProblem`] on one grid.
pub struct GoursatSolver {
    grid: TriangularGrid,
    maps: CharacteristicMaps,
    op: SweepOperator,
    constants: PicardConstants,
    options: PicardOptions,
}

impl GoursatSolver {
    pub fn new(p: &GoursatProblem, grid: TriangularGrid, options: PicardOptions) -> Result<Self> {
        if !(options.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", options.tol)));
        }
        if options.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if let SubSamples::AtLeast(k) = options.sub_samples {
            if k < 4 {
                return Err(Error::InvalidArgument(format!("sub_samples must be at least 4, got {k}")));
            }
        }
        p.validate(grid)?;
        let maps = CharacteristicMaps::build(&p.eps1, &p.eps2, options.quad_points)?;
        let v_max = check_points()
            .map(|x| p.eps1(x).max(p.eps2(x)))
            .fold(0.0, f64::max);
        let op = Assembler {
            p,
            maps: &maps,
            grid,
            v_max,
            sub: options.sub_samples,
        }
        .build();
        let constants = picard_constants(p, grid, &op.constant);
        Ok(Self {
            grid,
            maps,
            op,
            constants,
            options,
        })
    }

    pub fn maps(&self) -> &CharacteristicMaps {
        &self.maps
    }

    pub fn constants(&self) -> PicardConstants {
        self.constants
    }

    /// Number of stored operator coefficients.
    pub fn operator_size(&self) -> usize {
        self.op.vals.len()
    }

    pub fn solve(&self) -> Result<KernelSet> {
        let n_nodes = self.grid.len();
        let mut prev = self.op.constant.clone();
        let mut next = vec![0.0; 4 * n_nodes];
        let mut increments = vec![sup_abs(&prev)];
        let mut last = f64::INFINITY;
        for iter in 1..=self.options.max_iter {
            self.op.apply(&prev, &mut next);
            last = prev
                .iter()
                .zip(&next)
                .fold(0.0, |m, (a, b)| m.max((a - b).abs()));
            increments.push(last);
            std::mem::swap(&mut prev, &mut next);
            if !last.is_finite() {
                break;
            }
            if last <= self.options.tol {
                return Ok(self.kernel_set(prev, iter, last, increments));
            }
        }
        Err(Error::NoConvergence {
            max_iter: self.options.max_iter,
            last_increment: last,
        })
    }

    /// One application of the discretized fixed-point map to `k`.
    pub fn sweep(&self, k: &KernelSet) -> [GridFunction2T; 4] {
        let prev: Vec<f64> = k.kernels.iter().flat_map(|f| f.values().iter().copied()).collect();
        let mut next = vec![0.0; prev.len()];
        self.op.apply(&prev, &mut next);
        split(self.grid, next)
    }

    fn kernel_set(&self, values: Vec<f64>, iterations: usize, last: f64, increments: Vec<f64>) -> KernelSet {
        KernelSet {
            kernels: split(self.grid, values),
            iterations,
            final_increment: last,
            certified_bound: self.constants.solution_bound(),
            increments,
            constants: self.constants,
        }
    }
}

fn split(grid: TriangularGrid, values: Vec<f64>) -> [GridFunction2T; 4] {
    let n = grid.len();
    let part = |k: usize| GridFunction2T::from_values(grid, values[k * n..(k + 1) * n].to_vec()).unwrap();
    [part(0), part(1), part(2), part(3)]
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn picard_constants(p: &GoursatProblem, grid: TriangularGrid, phi: &[f64]) -> PicardConstants {
    let mut c_sum = 0.0;
    for j in 1..=4 {
        for i in 1..=4 {
            if p.has_coupling(j, i) {
                c_sum += grid
                    .nodes()
                    .map(|(a, b)| p.coupling(j, i, grid.coord(a), grid.coord(b)).abs())
                    .fold(0.0, f64::max);
            }
        }
    }
    let mut q_sum = 0.0;
    let mut k_eps: f64 = 0.0;
    for k in 1..=4 {
        q_sum += (0..grid.n())
            .map(|a| p.reflection(k, grid.coord(a)).abs())
            .fold(0.0, f64::max);
    }
    for a in 0..grid.n() {
        let x = grid.coord(a);
        k_eps = k_eps.max(1.0 / p.eps1(x)).max(1.0 / p.eps2(x));
    }
    PicardConstants {
        phi_bar: sup_abs(phi),
        c_bar: (1.0 + q_sum) * c_sum,
        k_eps,
    }
}

/// Solves `p` on `grid` by successive approximations.
pub fn picard_solve(p: &GoursatProblem, grid: TriangularGrid, options: PicardOptions) -> Result<KernelSet> {
    GoursatSolver::new(p, grid, options)?.solve()
}

/// True when every recorded increment obeys the factorial bound. A roundoff
/// allowance of `64 eps` times the solution bound is added to each term.
pub fn verify_picard_bound(increments: &[f64], constants: &PicardConstants) -> bool {
    let floor = 64.0 * f64::EPSILON * constants.solution_bound();
    increments
        .iter()
        .enumerate()
        .all(|(n, &inc)| inc <= constants.increment_bound(n) * (1.0 + 1e-12) + floor)
}

/// Sup residuals of the PDE rows (interior nodes, central differences) and of the boundary rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub interior: [f64; 4],
    pub boundary: [f64; 4],
}

impl Residuals {
    pub fn interior_sup(&self) -> f64 {
        self.interior.iter().copied().fold(0.0, f64::max)
    }
    pub fn boundary_sup(&self) -> f64 {
        self.boundary.iter().copied().fold(0.0, f64::max)
    }
}

/// Evaluates how well `k` satisfies the differential and boundary equations of `p`.
pub fn residual_check(p: &GoursatProblem, k: &KernelSet) -> Result<Residuals> {
    let g = k.grid();
    let n = g.n();
    if n < 5 {
        return Err(Error::GridTooCoarse {
            what: "residual check",
            min: 5,
            got: n,
        });
    }
    let h = g.h();
    let f = |c: usize, i: usize, j: usize| k.kernels[c - 1].at(i, j);
    let mut interior = [0.0f64; 4];
    for i in 2..n - 1 {
        for j in 1..i {
            let (x, xi) = (g.coord(i), g.coord(j));
            let coupled = |r: usize| -> f64 {
                p.forcing(r, x, xi) + (1..=4).map(|c| p.coupling(r, c, x, xi) * f(c, i, j)).sum::<f64>()
            };
            let dx = |c: usize| (f(c, i + 1, j) - f(c, i - 1, j)) / (2.0 * h);
            let dxi = |c: usize| (f(c, i, j + 1) - f(c, i, j - 1)) / (2.0 * h);
            let lhs = [
                p.eps1(x) * dx(1) + p.eps1(xi) * dxi(1),
                p.eps1(x) * dx(2) - p.eps2(xi) * dxi(2),
                p.eps2(x) * dx(3) - p.eps1(xi) * dxi(3),
                p.eps2(x) * dx(4) + p.eps2(xi) * dxi(4),
            ];
            for r in 0..4 {
                interior[r] = interior[r].max((lhs[r] - coupled(r + 1)).abs());
            }
        }
    }
    let mut boundary = [0.0f64; 4];
    for i in 0..n {
        let x = g.coord(i);
        let b1 = f(1, i, 0) - p.boundary(1, x) - p.reflection(1, x) * f(2, i, 0) - p.reflection(2, x) * f(3, i, 0);
        let b4 = f(4, i, 0) - p.boundary(4, x) - p.reflection(3, x) * f(2, i, 0) - p.reflection(4, x) * f(3, i, 0);
        boundary[0] = boundary[0].max(b1.abs());
        boundary[1] = boundary[1].max((f(2, i, i) - p.boundary(2, x)).abs());
        boundary[2] = boundary[2].max((f(3, i, i) - p.boundary(3, x)).abs());
        boundary[3] = boundary[3].max(b4.abs());
    }
    Ok(Residuals { interior, boundary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{constant, field_fn};

    fn zero_problem() -> GoursatProblem {
        GoursatProblem::new(constant(1.0), constant(1.0))
    }

    /// Direct kernel problem of the unit-speed, unit-coupling, q = 1 plant.
    fn unit_direct() -> GoursatProblem {
        let mut p = GoursatProblem::new(constant(1.0), constant(1.0));
        p.set_coupling(1, 2, field_fn(|_, _| -1.0))
            .set_coupling(2, 1, field_fn(|_, _| -1.0))
            .set_coupling(3, 4, field_fn(|_, _| 1.0))
            .set_coupling(4, 3, field_fn(|_, _| 1.0))
            .set_boundary(2, constant(0.5))
            .set_boundary(3, constant(-0.5))
            .set_reflection(1, constant(1.0))
            .set_reflection(4, constant(1.0));
        p
    }

    #[test]
    fn zero_problem_converges_in_one_sweep() {
        let k = picard_solve(&zero_problem(), TriangularGrid::new(11).unwrap(), PicardOptions::default())
            .unwrap();
        assert_eq!(k.iterations, 1);
        assert_eq!(k.sup_norm(), 0.0);
        assert!(verify_picard_bound(&k.increments, &k.constants));
    }

    #[test]
    fn diagonal_values_are_exact() {
        let g = TriangularGrid::new(21).unwrap();
        let k = picard_solve(&unit_direct(), g, PicardOptions::default()).unwrap();
        for i in 0..g.n() {
            assert_eq!(k.kernel(2).at(i, i), 0.5);
            assert_eq!(k.kernel(3).at(i, i), -0.5);
        }
    }

    #[test]
    fn extra_sweep_is_within_twice_tol() {
        let g = TriangularGrid::new(21).unwrap();
        let opts = PicardOptions::default();
        let solver = GoursatSolver::new(&unit_direct(), g, opts).unwrap();
        let k = solver.solve().unwrap();
        let next = solver.sweep(&k);
        let diff = next
            .iter()
            .zip(&k.kernels)
            .flat_map(|(a, b)| a.values().iter().zip(b.values()).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max);
        assert!(diff <= 2.0 * opts.tol, "{diff}");
    }

    #[test]
    fn inflated_increments_fail_the_bound() {
        let g = TriangularGrid::new(11).unwrap();
        let k = picard_solve(&unit_direct(), g, PicardOptions::default()).unwrap();
        assert!(verify_picard_bound(&k.increments, &k.constants));
        let mut bad = k.increments.clone();
        bad[3] = 10.0 * k.constants.increment_bound(3) + 1.0;
        assert!(!verify_picard_bound(&bad, &k.constants));
    }

    #[test]
    fn no_convergence_is_reported() {
        let opts = PicardOptions {
            max_iter: 1,
            ..Default::default()
        };
        let r = picard_solve(&unit_direct(), TriangularGrid::new(11).unwrap(), opts);
        assert!(matches!(r, Err(Error::NoConvergence { max_iter: 1, .. })));
    }

    #[test]
    fn option_preconditions() {
        let g = TriangularGrid::new(5).unwrap();
        let bad_tol = PicardOptions {
            tol: 0.0,
            ..Default::default()
        };
        assert!(picard_solve(&zero_problem(), g, bad_tol).is_err());
        let bad_sub = PicardOptions {
            sub_samples: SubSamples::AtLeast(2),
            ..Default::default()
        };
        assert!(picard_solve(&zero_problem(), g, bad_sub).is_err());
    }

    #[test]
    fn residual_of_zero_solution_is_zero() {
        let p = zero_problem();
        let k = picard_solve(&p, TriangularGrid::new(9).unwrap(), PicardOptions::default()).unwrap();
        let r = residual_check(&p, &k).unwrap();
        assert_eq!(r.interior_sup(), 0.0);
        assert_eq!(r.boundary_sup(), 0.0);
    }

    #[test]
    fn residual_needs_five_points() {
        let p = zero_problem();
        let k = picard_solve(&p, TriangularGrid::new(4).unwrap(), PicardOptions::default()).unwrap();
        assert!(residual_check(&p, &k).is_err());
    }

    #[test]
    fn csv_layout() {
        let k = picard_solve(&unit_direct(), TriangularGrid::new(3).unwrap(), PicardOptions::default())
            .unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,xi,F1,F2,F3,F4");
        assert_eq!(lines.len(), 1 + 6);
        assert!(lines[2].starts_with("5.0000000000000000e-1,0.0000000000000000e0,"));
        let back: f64 = lines[3].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(back, k.kernel(1).at(1, 1));
    }
}
