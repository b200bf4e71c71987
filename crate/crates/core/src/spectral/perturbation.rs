use crate::error::{Error, Result};
use crate::galerkin::StreamingMatrix;
use crate::linalg::{dot, matvec, DeflatedSolver};
use crate::maxwellian::{FluidConstants, NullSpaceBasis};
use faer::c64;
use serde::{Deserialize, Serialize};

/// Zeroth- and first-order data of the five fluid branches. Arrays indexed
/// by `j + 1` for `j = -1..=3`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationData {
    pub omega: [f64; 3],
    pub w2: [f64; 3],
    pub w3: [f64; 3],
    pub b1: f64,
    pub b2: f64,
    pub u: [f64; 5],
    /// `E_j(omega)` as real coefficient vectors.
    pub e: [Vec<f64>; 5],
    /// `A_j = (L^{-1} P1 V E_j, V E_j)`, negative.
    pub a: [f64; 5],
    /// `D[j][n] = (L^{-1} P1 V E_j, V E_n)`.
    pub d: [[f64; 5]; 5],
    /// `b^j_n` for `j, n = -1..=1`, indexed `[j + 1][n + 1]`.
    pub bcoef: [[c64; 3]; 3],
    /// First-order eigenvector corrections `e_{j,1}`.
    pub e1: [Vec<c64>; 5],
}

/// Orthonormal `W2, W3` perpendicular to `omega`; `(e1, e2)` for the polar axis.
pub fn transverse_pair(omega: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let reference = if omega[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let p = reference[0] * omega[0] + reference[1] * omega[1] + reference[2] * omega[2];
    let mut w2 = [reference[0] - p * omega[0], reference[1] - p * omega[1], reference[2] - p * omega[2]];
    let n = (w2[0] * w2[0] + w2[1] * w2[1] + w2[2] * w2[2]).sqrt();
    for x in w2.iter_mut() {
        *x /= n;
    }
    let w3 = [
        omega[1] * w2[2] - omega[2] * w2[1],
        omega[2] * w2[0] - omega[0] * w2[2],
        omega[0] * w2[1] - omega[1] * w2[0],
    ];
    (w2, w3)
}

pub(crate) fn fluid_vectors(psi: &NullSpaceBasis, consts: &FluidConstants, omega: [f64; 3]) -> ([Vec<f64>; 5], [f64; 3], [f64; 3]) {
    let (w2, w3) = transverse_pair(omega);
    let dim = psi.dim();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let along = psi.momentum_along(omega);
    let (b1, b2) = (consts.b1, consts.b2);
    let pm = |sgn: f64| -> Vec<f64> {
        (0..dim).map(|i| h * b1 * psi.psi[0][i] - sgn * h * along[i] + h * b2 * psi.psi[4][i]).collect()
    };
    let e0: Vec<f64> = (0..dim).map(|i| -b2 * psi.psi[0][i] + b1 * psi.psi[4][i]).collect();
    (
        [pm(-1.0), e0, pm(1.0), psi.momentum_along(w2), psi.momentum_along(w3)],
        w2,
        w3,
    )
}

pub fn perturbation_coefficients(
    solver: &DeflatedSolver,
    streaming: &StreamingMatrix,
    psi: &NullSpaceBasis,
    consts: &FluidConstants,
) -> Result<PerturbationData> {
    let (e, w2, w3) = fluid_vectors(psi, consts, streaming.axis);
    let ve: Vec<Vec<f64>> = e.iter().map(|x| matvec(&streaming.vmat, x)).collect();
    let x: Vec<Vec<f64>> = ve.iter().map(|y| solver.solve(y)).collect();
    let mut d = [[0.0; 5]; 5];
    for j in 0..5 {
        for n in 0..5 {
            d[j][n] = dot(&x[j], &ve[n]);
        }
    }
    let a: [f64; 5] = std::array::from_fn(|j| d[j][j]);
    if let Some(bad) = a.iter().find(|v| !(**v < 0.0)) {
        return Err(Error::DeflatedSolve(format!("second-order coefficient {bad} is not negative")));
    }
    let u = [consts.u[0], 0.0, consts.u[2], 0.0, 0.0];
    let mut bcoef = [[c64::new(0.0, 0.0); 3]; 3];
    for j in 0..3 {
        for n in 0..3 {
            if j != n {
                bcoef[j][n] = c64::new(d[j][n], 0.0) / c64::new(0.0, u[n] - u[j]);
            }
        }
    }
    let dim = psi.dim();
    let e1: [Vec<c64>; 5] = std::array::from_fn(|l| {
        (0..dim)
            .map(|i| {
                let mut z = c64::new(0.0, x[l][i]);
                if l < 3 {
                    for n in 0..3 {
                        z += bcoef[l][n] * e[n][i];
                    }
                }
                z
            })
            .collect()
    });
    Ok(PerturbationData {
        omega: streaming.axis,
        w2,
        w3,
        b1: consts.b1,
        b2: consts.b2,
        u,
        e,
        a,
        d,
        bcoef,
        e1,
    })
}
