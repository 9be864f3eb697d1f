#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use hyperbolic_backstepping::backstepping::{assemble_direct_kernel_problem, assemble_inverse_kernel_problem};
use hyperbolic_backstepping::goursat::{picard_solve, KernelSet, PicardOptions};
use hyperbolic_backstepping::model::{
    scalar_fn, LinearSystemSpec, MatrixFn, QuasilinearSystemSpec, StateField, TriangularGrid, VectorFn,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Unit speeds, unit coupling, unit reflection.
pub fn benchmark() -> LinearSystemSpec {
    LinearSystemSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0).unwrap()
}

/// Smooth variable-coefficient system.
pub fn variable() -> LinearSystemSpec {
    LinearSystemSpec::new(
        scalar_fn(|x| 1.0 + 0.5 * x),
        scalar_fn(|x| 2.0 - x),
        scalar_fn(|x| (PI * x).cos()),
        scalar_fn(|x| 0.5 + x * x),
        0.8,
    )
    .unwrap()
}

pub fn solve_direct(sys: &LinearSystemSpec, n: usize) -> KernelSet {
    let p = assemble_direct_kernel_problem(sys).unwrap();
    picard_solve(&p, TriangularGrid::new(n).unwrap(), PicardOptions::default()).unwrap()
}

pub fn solve_inverse(sys: &LinearSystemSpec, n: usize) -> KernelSet {
    let p = assemble_inverse_kernel_problem(sys).unwrap();
    picard_solve(&p, TriangularGrid::new(n).unwrap(), PicardOptions::default()).unwrap()
}

/// Quasilinear benchmark `Lambda = diag(1 + z1, -1 + z2)`, `f = (z2 / 2, z1 / 2)`, `G0(v) = v`.
pub fn quasilinear_benchmark() -> QuasilinearSystemSpec {
    let lambda: MatrixFn = Arc::new(|z, _| [[1.0 + z[0], 0.0], [0.0, -1.0 + z[1]]]);
    let f: VectorFn = Arc::new(|z, _| [z[1] / 2.0, z[0] / 2.0]);
    QuasilinearSystemSpec::new(lambda, f, scalar_fn(|v| v)).unwrap()
}

/// Random smooth field: three Fourier modes per component with amplitudes in `[-amp, amp]`.
pub fn smooth_field(rng: &mut ChaCha8Rng, m: usize, amp: f64) -> StateField {
    let c: Vec<f64> = (0..12).map(|_| rng.gen_range(-amp..=amp)).collect();
    let g = |o: usize, x: f64| -> f64 {
        (0..3)
            .map(|k| {
                let w = PI * (k + 1) as f64;
                c[o + 2 * k] * (w * x).sin() + c[o + 2 * k + 1] * (w * x).cos()
            })
            .sum::<f64>()
            / 3.0
    };
    StateField::from_fns(m, |x| g(0, x), |x| g(6, x)).unwrap()
}

pub fn sup_diff(a: &StateField, b: &StateField) -> f64 {
    a.first()
        .iter()
        .zip(b.first())
        .chain(a.second().iter().zip(b.second()))
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

/// The state `gamma0 = (sin^2 pi x, 0.5 sin^2 pi x)` used as target-coordinate initial data.
pub fn gamma0(x: f64) -> (f64, f64) {
    let s = (PI * x).sin().powi(2);
    (s, 0.5 * s)
}
