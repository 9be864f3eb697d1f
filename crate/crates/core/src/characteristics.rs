//! Characteristic curves of the four transport operators of the Goursat system.
//!
//! With `phi1(x) = int_0^x dz/eps1`, `phi2(x) = int_0^x dz/eps2` and
//! `phi3 = phi1 + phi2`, the operators
//!
//! ```text
//! eps1(x) d_x + eps1(xi) d_xi,   eps1(x) d_x - eps2(xi) d_xi,
//! eps2(x) d_x - eps1(xi) d_xi,   eps2(x) d_x + eps2(xi) d_xi
//! ```
//!
//! become `d/ds` along the curves `(x_i(s), xi_i(s))`, `s in [0, s_i^F]`, which start on
//! `xi = 0` (families 1 and 4) or on the diagonal `xi = x` (families 2 and 3) at `s = 0`
//! and end at the queried point `(x, xi)` at `s = s_i^F`.

use crate::error::{Error, Result};
use crate::interp::CubicHermite;
use crate::model::ScalarFn;

pub const DEFAULT_QUAD_POINTS: usize = 2049;

/// Tabulated travel-time maps and their inverses.
#[derive(Debug, Clone)]
pub struct CharacteristicMaps {
    phi: [CubicHermite; 3],
    phi_inv: [CubicHermite; 3],
}

/// Which of the three travel-time maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phi {
    One,
    Two,
    Three,
}

impl Phi {
    fn idx(self) -> usize {
        match self {
            Phi::One => 0,
            Phi::Two => 1,
            Phi::Three => 2,
        }
    }
}

impl CharacteristicMaps {
    /// Tabulates the maps by the trapezoid rule on `quad_points` uniform samples.
    pub fn build(eps1: &ScalarFn, eps2: &ScalarFn, quad_points: usize) -> Result<Self> {
        if quad_points < 16 {
            return Err(Error::GridTooCoarse {
                what: "characteristic quadrature",
                min: 16,
                got: quad_points,
            });
        }
        let xs: Vec<f64> = (0..quad_points)
            .map(|k| k as f64 / (quad_points - 1) as f64)
            .collect();
        let mut inv = [Vec::with_capacity(quad_points), Vec::with_capacity(quad_points)];
        for &x in &xs {
            for (k, (name, e)) in [("eps1", eps1), ("eps2", eps2)].into_iter().enumerate() {
                let v = e(x);
                if !v.is_finite() {
                    return Err(Error::NonFiniteCoefficient { name, x });
                }
                if v <= 0.0 {
                    return Err(Error::NonPositiveSpeed { name, x, value: v });
                }
                inv[k].push(1.0 / v);
            }
        }
        let h = 1.0 / (quad_points - 1) as f64;
        let integrate = |f: &[f64]| -> Vec<f64> {
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(f.len());
            out.push(0.0);
            for w in f.windows(2) {
                acc += 0.5 * h * (w[0] + w[1]);
                out.push(acc);
            }
            out
        };
        let p1 = integrate(&inv[0]);
        let p2 = integrate(&inv[1]);
        let p3: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| a + b).collect();
        let d3: Vec<f64> = inv[0].iter().zip(&inv[1]).map(|(a, b)| a + b).collect();
        let phi = [
            CubicHermite::monotone(xs.clone(), p1, inv[0].clone()),
            CubicHermite::monotone(xs.clone(), p2, inv[1].clone()),
            CubicHermite::monotone(xs, p3, d3),
        ];
        let phi_inv = [phi[0].inverse(), phi[1].inverse(), phi[2].inverse()];
        Ok(Self { phi, phi_inv })
    }

    pub fn phi(&self, which: Phi, x: f64) -> f64 {
        self.phi[which.idx()].eval(x)
    }

    pub fn phi_inv(&self, which: Phi, y: f64) -> f64 {
        self.phi_inv[which.idx()].eval(y)
    }

    /// `phi_k(1)`.
    pub fn phi_total(&self, which: Phi) -> f64 {
        self.phi[which.idx()].last_value()
    }

    /// Characteristic of `family` (1..=4) through `(x, xi)`.
    pub fn characteristic(&self, family: usize, x: f64, xi: f64) -> Characteristic<'_> {
        use Phi::*;
        let (a, b, s_final) = match family {
            1 => {
                let a = self.phi(One, x) - self.phi(One, xi);
                (a, 0.0, self.phi(One, xi))
            }
            2 => {
                if x == xi {
                    let a = self.phi(One, x);
                    (a, self.phi(Two, x), 0.0)
                } else {
                    let anchor = self.phi_inv(Three, self.phi(One, x) + self.phi(Two, xi));
                    let a = self.phi(One, anchor);
                    (a, self.phi(Two, anchor), self.phi(One, x) - a)
                }
            }
            3 => {
                if x == xi {
                    let a = self.phi(Two, x);
                    (a, self.phi(One, x), 0.0)
                } else {
                    let anchor = self.phi_inv(Three, self.phi(Two, x) + self.phi(One, xi));
                    let a = self.phi(Two, anchor);
                    (a, self.phi(One, anchor), self.phi(Two, x) - a)
                }
            }
            4 => {
                let a = self.phi(Two, x) - self.phi(Two, xi);
                (a, 0.0, self.phi(Two, xi))
            }
            _ => panic!("characteristic family must be 1..=4, got {family}"),
        };
        Characteristic {
            maps: self,
            family,
            a,
            b,
            s_final: s_final.max(0.0),
            x,
            xi,
        }
    }

    /// `s_i^F(x, xi)`.
    pub fn s_final(&self, family: usize, x: f64, xi: f64) -> f64 {
        self.characteristic(family, x, xi).s_final()
    }

    /// `(x_i(x, xi, s), xi_i(x, xi, s))`.
    pub fn point(&self, family: usize, x: f64, xi: f64, s: f64) -> (f64, f64) {
        self.characteristic(family, x, xi).at(s)
    }
}

/// One characteristic curve, parameterized by `s in [0, s_final]`.
#[derive(Debug, Clone, Copy)]
pub struct Characteristic<'a> {
    maps: &'a CharacteristicMaps,
    family: usize,
    a: f64,
    b: f64,
    s_final: f64,
    x: f64,
    xi: f64,
}

impl Characteristic<'_> {
    pub fn s_final(&self) -> f64 {
        self.s_final
    }

    pub fn family(&self) -> usize {
        self.family
    }

    /// Point at parameter `s`, clamped into the triangle.
    pub fn at(&self, s: f64) -> (f64, f64) {
        use Phi::*;
        if s >= self.s_final {
            return (self.x, self.xi);
        }
        let m = self.maps;
        let (x, xi) = match self.family {
            1 => (m.phi_inv(One, self.a + s), m.phi_inv(One, s)),
            2 => (m.phi_inv(One, self.a + s), m.phi_inv(Two, self.b - s)),
            3 => (m.phi_inv(Two, self.a + s), m.phi_inv(One, self.b - s)),
            _ => (m.phi_inv(Two, self.a + s), m.phi_inv(Two, s)),
        };
        let x = x.clamp(0.0, self.x);
        (x, xi.clamp(0.0, x))
    }

    /// Starting point on the boundary of the triangle.
    pub fn start(&self) -> (f64, f64) {
        let (x, _) = self.at(0.0);
        match self.family {
            1 | 4 => (x, 0.0),
            _ => (x, x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{constant, scalar_fn};

    fn unit() -> CharacteristicMaps {
        CharacteristicMaps::build(&constant(1.0), &constant(1.0), 64).unwrap()
    }

    #[test]
    fn unit_speeds_give_affine_maps() {
        let m = unit();
        for &x in &[0.0, 0.25, 0.6, 1.0] {
            assert!((m.phi(Phi::One, x) - x).abs() < 1e-14);
            assert!((m.phi(Phi::Three, x) - 2.0 * x).abs() < 1e-14);
        }
        let (x, xi, s) = (0.9, 0.4, 0.3);
        let (px, pxi) = m.point(1, x, xi, s);
        assert!((px - (x - xi + s)).abs() < 1e-14);
        assert!((pxi - s).abs() < 1e-14);
        assert!((m.s_final(1, x, xi) - xi).abs() < 1e-14);
    }

    #[test]
    fn unit_speeds_family_two_starts_on_the_diagonal_midpoint() {
        let m = unit();
        let (x, xi) = (0.8, 0.2);
        assert!((m.s_final(2, x, xi) - (x - xi) / 2.0).abs() < 1e-14);
        let (px, pxi) = m.point(2, x, xi, 0.0);
        assert!((px - 0.5).abs() < 1e-14 && (pxi - 0.5).abs() < 1e-14);
    }

    #[test]
    fn log_map_round_trip() {
        let m = CharacteristicMaps::build(&scalar_fn(|x| 1.0 + x), &constant(1.0), DEFAULT_QUAD_POINTS)
            .unwrap();
        let y = m.phi(Phi::One, 0.7);
        assert!((y - 1.7f64.ln()).abs() < 1e-7);
        assert!((m.phi_inv(Phi::One, y) - 0.7).abs() < 1e-8);
    }

    #[test]
    fn rejects_non_positive_speed() {
        let r = CharacteristicMaps::build(&scalar_fn(|x| x - 0.5), &constant(1.0), 64);
        assert!(matches!(r, Err(Error::NonPositiveSpeed { .. })));
        assert!(CharacteristicMaps::build(&constant(1.0), &constant(1.0), 8).is_err());
    }

    #[test]
    fn diagonal_nodes_have_zero_length_for_families_two_and_three() {
        let m = CharacteristicMaps::build(&scalar_fn(|x| 1.0 + x), &scalar_fn(|x| 2.0 - x), 257)
            .unwrap();
        for &x in &[0.0, 0.3, 1.0] {
            assert_eq!(m.s_final(2, x, x), 0.0);
            assert_eq!(m.s_final(3, x, x), 0.0);
        }
    }

    #[test]
    fn curves_end_at_the_query_point() {
        let m = CharacteristicMaps::build(&scalar_fn(|x| 1.0 + x), &scalar_fn(|x| 2.0 - x), 1025)
            .unwrap();
        let (x, xi) = (0.83, 0.31);
        for fam in 1..=4 {
            let c = m.characteristic(fam, x, xi);
            // approach the end from slightly below s_final
            let (px, pxi) = c.at(c.s_final() * (1.0 - 1e-12));
            assert!((px - x).abs() < 1e-9 && (pxi - xi).abs() < 1e-9, "family {fam}");
        }
    }
}
