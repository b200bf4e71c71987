//! Relativistic Maxwellian `M(v) = exp(-sqrt(1+|v|^2))`, its moments, the
//! orthonormal collision invariants and the fluid constants `a`, `b`.

use crate::error::{Error, Result};
use crate::galerkin::GalerkinBasis;
use crate::quadrature::{QuadratureSet, Rule1d, SphereRule};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelVelocity {
    pub v: [f64; 3],
    pub v0: f64,
    pub vhat: [f64; 3],
}

impl RelVelocity {
    pub fn new(v: [f64; 3]) -> Self {
        let v0 = (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        Self { v, v0, vhat: [v[0] / v0, v[1] / v0, v[2] / v0] }
    }

    pub fn norm(&self) -> f64 {
        (self.v[0] * self.v[0] + self.v[1] * self.v[1] + self.v[2] * self.v[2]).sqrt()
    }
}

pub fn maxwellian(v: &RelVelocity) -> f64 {
    (-v.v0).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxwellianMoments {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    /// Variance of `v0` under `M / p0`, scaled by `p0`: `int v0^2 M - p2^2 / p0`.
    pub p3: f64,
    /// `int v_j^2 M` for each axis.
    pub p1_axes: [f64; 3],
}

fn moments_with(rule: &Rule1d) -> MaxwellianMoments {
    let m = |r: f64| (-(1.0 + r * r).sqrt()).exp();
    let p0 = 4.0 * PI * rule.integrate(|r| r * r * m(r));
    let p2 = 4.0 * PI * rule.integrate(|r| r * r * (1.0 + r * r).sqrt() * m(r));
    let second = 4.0 * PI * rule.integrate(|r| r * r * (1.0 + r * r) * m(r));
    let rad4 = rule.integrate(|r| r.powi(4) * m(r));
    let sphere = SphereRule::exact_to_degree(2);
    let mut p1_axes = [0.0; 3];
    for (axis, out) in p1_axes.iter_mut().enumerate() {
        let ang: f64 = sphere.dirs.iter().zip(&sphere.weights).map(|(d, w)| w * d[axis] * d[axis]).sum();
        *out = ang * rad4;
    }
    MaxwellianMoments {
        p0,
        p1: 4.0 * PI / 3.0 * rad4,
        p2,
        p3: second - p2 * p2 / p0,
        p1_axes,
    }
}

/// Moments on the default radial rule, checked against a refined rule.
pub fn compute_moments(quad: &QuadratureSet, rtol: f64) -> Result<MaxwellianMoments> {
    let coarse = moments_with(&quad.radial());
    let fine = moments_with(&quad.radial_refined());
    let pairs = [
        (coarse.p0, fine.p0),
        (coarse.p1, fine.p1),
        (coarse.p2, fine.p2),
        (coarse.p3, fine.p3),
    ];
    let delta = pairs.iter().map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
    if !(delta <= rtol) {
        return Err(Error::ToleranceNotMet { what: "maxwellian moments".into(), delta, tol: rtol });
    }
    for (name, v) in [("p0", fine.p0), ("p1", fine.p1), ("p2", fine.p2), ("p3", fine.p3)] {
        if !(v > 0.0) {
            return Err(Error::NonpositiveConstant { name: name.into(), value: v });
        }
    }
    Ok(fine)
}

/// Coefficient vectors of `psi_0 .. psi_4` in a Galerkin basis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NullSpaceBasis {
    pub psi: [Vec<f64>; 5],
}

impl NullSpaceBasis {
    pub fn dim(&self) -> usize {
        self.psi[0].len()
    }

    /// `sum_j omega_j psi_j` for `j = 1..3`.
    pub fn momentum_along(&self, omega: [f64; 3]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| omega[0] * self.psi[1][i] + omega[1] * self.psi[2][i] + omega[2] * self.psi[3][i])
            .collect()
    }
}

pub fn null_space_basis(moments: &MaxwellianMoments, basis: &GalerkinBasis) -> Result<NullSpaceBasis> {
    let dim = basis.dim();
    let mut psi: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; dim]);
    let n0 = basis.config.radial_count(0);
    let n1 = basis.config.radial_count(1);
    let mut q0 = vec![0.0; n0];
    let mut q1 = vec![0.0; n1];
    let c0 = (4.0 * PI / moments.p0).sqrt();
    let c1 = (4.0 * PI / (3.0 * moments.p1)).sqrt();
    let c4 = (4.0 * PI / moments.p3).sqrt();
    let shift = moments.p2 / moments.p0;
    let idx0: Vec<usize> = (0..n0).map(|n| basis.index_of(n, 0, 0).unwrap()).collect();
    let idx1: [Vec<usize>; 3] = [1i64, -1, 0].map(|m| (0..n1).map(|n| basis.index_of(n, 1, m).unwrap()).collect());
    for (&r, &w) in basis.rule.nodes.iter().zip(&basis.rule.weights) {
        let v0 = (1.0 + r * r).sqrt();
        let wm = w * r * r * (-v0).exp();
        basis.radial_values(0, r, &mut q0);
        basis.radial_values(1, r, &mut q1);
        for n in 0..n0 {
            psi[0][idx0[n]] += c0 * wm * q0[n];
            psi[4][idx0[n]] += c4 * wm * (v0 - shift) * q0[n];
        }
        for (axis, idx) in idx1.iter().enumerate() {
            for n in 0..n1 {
                psi[axis + 1][idx[n]] += c1 * wm * r * q1[n];
            }
        }
    }
    let mut worst = 0.0f64;
    for i in 0..5 {
        for j in 0..5 {
            let g: f64 = psi[i].iter().zip(&psi[j]).map(|(a, b)| a * b).sum();
            worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    if worst > 1e-10 {
        return Err(Error::IllConditionedBasis { deviation: worst });
    }
    Ok(NullSpaceBasis { psi })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidConstants {
    pub a: f64,
    pub b: f64,
    /// Sound speeds `[u_{-1}, u_0, u_1]`.
    pub u: [f64; 3],
    pub b1: f64,
    pub b2: f64,
    /// Per-axis values of `a` and `b`.
    pub a_axes: [f64; 3],
    pub b_axes: [f64; 3],
}

impl FluidConstants {
    pub fn sound_speed(&self) -> f64 {
        (self.a * self.a + self.b * self.b).sqrt()
    }

    /// `u_j` for `j = -1..=3`; the shear and entropy speeds vanish.
    pub fn u_of(&self, j: i32) -> f64 {
        match j {
            -1 => self.u[0],
            1 => self.u[2],
            _ => 0.0,
        }
    }
}

/// `a = (vhat_1 psi_1, psi_4)` and `b = (vhat_1 psi_0, psi_1)` by radial x sphere
/// quadrature, evaluated along each coordinate axis.
pub fn fluid_constants(moments: &MaxwellianMoments, quad: &QuadratureSet) -> Result<FluidConstants> {
    let rule = quad.radial();
    let sphere = SphereRule::exact_to_degree(2);
    let (p0, p1, p2, p3) = (moments.p0, moments.p1, moments.p2, moments.p3);
    let mut a_axes = [0.0; 3];
    let mut b_axes = [0.0; 3];
    for axis in 0..3 {
        let (mut a, mut b) = (0.0, 0.0);
        for (&r, &wr) in rule.nodes.iter().zip(&rule.weights) {
            let v0 = (1.0 + r * r).sqrt();
            let m = (-v0).exp();
            for (d, ws) in sphere.dirs.iter().zip(&sphere.weights) {
                let vj = r * d[axis];
                let w = wr * ws * r * r * m * vj * vj / v0;
                a += w * (v0 - p2 / p0);
                b += w;
            }
        }
        a_axes[axis] = a / (p1 * p3).sqrt();
        b_axes[axis] = b / (p0 * p1).sqrt();
    }
    let a = a_axes[2];
    let b = b_axes[2];
    for (name, v) in [("a", a), ("b", b)] {
        if !(v > 0.0) {
            return Err(Error::NonpositiveConstant { name: name.into(), value: v });
        }
    }
    let c = (a * a + b * b).sqrt();
    Ok(FluidConstants {
        a,
        b,
        u: [c, 0.0, -c],
        b1: b / c,
        b2: a / c,
        a_axes,
        b_axes,
    })
}

/// Modified Bessel function `K_nu(z)`, `z > 0`, from `int_0^inf exp(-z cosh t) cosh(nu t) dt`.
pub fn bessel_k(nu: f64, z: f64) -> f64 {
    let upper = (800.0 / z).max(1.0).acosh();
    Rule1d::composite(0.0, upper, 64, 20).integrate(|t| (-z * t.cosh()).exp() * (nu * t).cosh())
}

/// `p0` and `p2` in closed form: `4 pi K2(1)` and `4 pi (K2(1) + (K1(1) + K3(1)) / 2)`.
pub fn bessel_moments() -> (f64, f64) {
    let (k1, k2, k3) = (bessel_k(1.0, 1.0), bessel_k(2.0, 1.0), bessel_k(3.0, 1.0));
    (4.0 * PI * k2, 4.0 * PI * (k2 + 0.5 * (k1 + k3)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::BasisConfig;

    #[test]
    fn maxwellian_values() {
        let m0 = maxwellian(&RelVelocity::new([0.0; 3]));
        assert!((m0 - (-1.0f64).exp()).abs() < 1e-16);
        let v = [0.3, -1.1, 2.0];
        let w = [-0.3, 1.1, -2.0];
        assert_eq!(maxwellian(&RelVelocity::new(v)), maxwellian(&RelVelocity::new(w)));
        let mut prev = m0;
        for i in 1..50 {
            let cur = maxwellian(&RelVelocity::new([i as f64, 0.0, 0.0]));
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn mass_shell_relation() {
        let v = RelVelocity::new([3.0, -4.0, 12.0]);
        assert!((v.v0 * v.v0 - v.norm().powi(2) - 1.0).abs() < 1e-12);
        assert!(v.vhat.iter().map(|x| x * x).sum::<f64>() < 1.0);
    }

    #[test]
    fn moments_match_bessel_reduction() {
        let (k1, k2, k3) = (bessel_k(1.0, 1.0), bessel_k(2.0, 1.0), bessel_k(3.0, 1.0));
        assert!((k2 - 1.624838898635177).abs() < 1e-12);
        assert!((k1 - 0.6019072301972346).abs() < 1e-12);
        let m = compute_moments(&QuadratureSet::default(), 1e-8).unwrap();
        assert!((m.p0 - 4.0 * PI * k2).abs() / m.p0 < 1e-12);
        assert!((m.p2 - 4.0 * PI * (k2 + 0.5 * (k1 + k3))).abs() / m.p2 < 1e-12);
        let (p0, p2) = bessel_moments();
        assert_eq!((p0, p2), (4.0 * PI * k2, 4.0 * PI * (k2 + 0.5 * (k1 + k3))));
        assert!((m.p1_axes[0] - m.p1_axes[1]).abs() < 1e-12 * m.p1);
        assert!((m.p1_axes[0] - m.p1_axes[2]).abs() < 1e-12 * m.p1);
        assert!((m.p1_axes[0] - m.p1).abs() < 1e-12 * m.p1);
        assert!(m.p3 > 0.0);
    }

    #[test]
    fn null_space_is_orthonormal() {
        let quad = QuadratureSet::default();
        let m = compute_moments(&quad, 1e-8).unwrap();
        let basis = GalerkinBasis::build(&BasisConfig { n_radial: 3, l_max: 2, m_max: 1, r_max: None }).unwrap();
        let ns = null_space_basis(&m, &basis).unwrap();
        let dot: f64 = ns.psi[0].iter().zip(&ns.psi[4]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);
        // psi_1 evaluated pointwise is proportional to v_1 sqrt(M)
        let v = [0.7, -0.2, 0.4];
        let got = basis.evaluate(&ns.psi[1], v);
        let want = v[0] * (-0.5 * RelVelocity::new(v).v0).exp() / m.p1.sqrt();
        assert!((got - want).abs() < 1e-10 * want.abs());
    }

    #[test]
    fn fluid_constants_radial_oracle() {
        let quad = QuadratureSet::default();
        let m = compute_moments(&quad, 1e-8).unwrap();
        let fc = fluid_constants(&m, &quad).unwrap();
        let rule = Rule1d::composite(0.0, 40.0, 80, 20);
        let b = 4.0 * PI / 3.0 * rule.integrate(|r| r.powi(4) / (1.0 + r * r).sqrt() * (-(1.0 + r * r).sqrt()).exp())
            / (m.p0 * m.p1).sqrt();
        assert!((fc.b - b).abs() < 1e-12 * b);
        assert!(fc.a > 0.0 && fc.b > 0.0);
        for k in 0..3 {
            assert!((fc.a_axes[k] - fc.a).abs() < 1e-10);
            assert!((fc.b_axes[k] - fc.b).abs() < 1e-10);
        }
        assert_eq!(fc.u[0], -fc.u[2]);
        assert!(fc.u[2] < 0.0);
        assert!(fc.sound_speed() < 1.0);
    }
}
