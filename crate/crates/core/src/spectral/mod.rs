//! Fourier-mode operator `B(k) = L - i |k| vhat.omega`, its five fluid
//! branches, the perturbation data and the dispersion determinants.

mod branches;
mod dispersion;
mod perturbation;
mod validation;

pub use branches::{eigen_branches, measure_tau0, BranchOptions, EigenBranchTable, SpectrumSummary, BRANCH_IDS};
pub use dispersion::{d0, d1, dispersion_solve, resolvent_r, DispersionOptions, DispersionResult, ResolventSolver};
pub use perturbation::{perturbation_coefficients, transverse_pair, PerturbationData};
pub use validation::{expansion_validation, BranchFit, ExpansionReport};

use crate::collision::CollisionMatrices;
use crate::error::{Error, Result};
use crate::galerkin::{build_projectors, GalerkinBasis, Projectors, StreamingMatrix};
use crate::linalg::{self, DeflatedSolver};
use crate::maxwellian::{FluidConstants, NullSpaceBasis};
use faer::{c64, Mat};

#[derive(Clone, Debug)]
pub struct FourierModeOperator {
    pub kmag: f64,
    pub omega: [f64; 3],
    pub bmat: Mat<c64>,
}

impl FourierModeOperator {
    /// Largest eigenvalue of the Hermitian part, an upper bound for the
    /// real part of the numerical range.
    pub fn numerical_abscissa(&self) -> Result<f64> {
        let n = self.bmat.nrows();
        let h = Mat::from_fn(n, n, |i, j| 0.5 * (self.bmat[(i, j)].re + self.bmat[(j, i)].re));
        let (vals, _) = linalg::sym_eigen(&h)?;
        Ok(vals[n - 1])
    }
}

pub fn assemble_bk(lmat: &Mat<f64>, v: &StreamingMatrix, kmag: f64) -> FourierModeOperator {
    let n = lmat.nrows();
    FourierModeOperator {
        kmag,
        omega: v.axis,
        bmat: Mat::from_fn(n, n, |i, j| c64::new(lmat[(i, j)], -kmag * v.vmat[(i, j)])),
    }
}

/// Everything the spectral and semigroup stages need for one axis.
pub struct SpectralModel {
    pub lmat: Mat<f64>,
    pub streaming: StreamingMatrix,
    pub psi: NullSpaceBasis,
    pub proj: Projectors,
    pub consts: FluidConstants,
    pub muhat: f64,
    /// Index sets of the `m` sectors.
    pub blocks: Vec<Vec<usize>>,
    pub solver: DeflatedSolver,
    pub pert: PerturbationData,
}

impl SpectralModel {
    pub fn new(
        basis: &GalerkinBasis,
        mats: &CollisionMatrices,
        psi: &NullSpaceBasis,
        consts: &FluidConstants,
        streaming: StreamingMatrix,
    ) -> Result<Self> {
        let muhat = mats
            .muhat
            .ok_or_else(|| Error::InvalidConfig("spectral gap must be computed before the spectral stage".into()))?;
        let proj = build_projectors(psi);
        let solver = DeflatedSolver::new(&mats.lmat, &proj.p0, &proj.p1)?;
        let pert = perturbation_coefficients(&solver, &streaming, psi, consts)?;
        Ok(Self {
            lmat: mats.lmat.clone(),
            streaming,
            psi: psi.clone(),
            proj,
            consts: *consts,
            muhat,
            blocks: basis.sectors().into_iter().map(|(_, idx)| idx).collect(),
            solver,
            pert,
        })
    }

    pub fn dim(&self) -> usize {
        self.lmat.nrows()
    }

    pub fn bk(&self, kmag: f64) -> FourierModeOperator {
        assemble_bk(&self.lmat, &self.streaming, kmag)
    }

    /// All eigenpairs of `B(k)`, split by sector when possible.
    pub fn eigen(&self, kmag: f64) -> Result<(Vec<c64>, Vec<Vec<c64>>)> {
        linalg::eigen_blocks(&self.bk(kmag).bmat, &self.blocks)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::collision::{assemble_l, spectral_gap, AssemblyOptions, ScatteringKernel};
    use crate::galerkin::{streaming_matrix, BasisConfig};
    use crate::maxwellian::{compute_moments, fluid_constants, null_space_basis};
    use crate::quadrature::QuadratureSet;

    /// Small but complete model shared by the unit tests of this module.
    pub fn small_model(m_max: usize, axis: [f64; 3]) -> (GalerkinBasis, SpectralModel) {
        let quad = QuadratureSet { qmc_samples: 20_000, ..Default::default() };
        let basis = GalerkinBasis::build(&BasisConfig { n_radial: 4, l_max: 3, m_max, r_max: None }).unwrap();
        let m = compute_moments(&quad, 1e-8).unwrap();
        let psi = null_space_basis(&m, &basis).unwrap();
        let fc = fluid_constants(&m, &quad).unwrap();
        let opts = AssemblyOptions { with_nu: false, rtol: 1.0, ..Default::default() };
        let mut mats = assemble_l(&basis, &ScatteringKernel::default(), &quad, &opts).unwrap();
        mats.muhat = Some(spectral_gap(&mats, &psi).unwrap().muhat);
        let v = streaming_matrix(&basis, axis).unwrap();
        let model = SpectralModel::new(&basis, &mats, &psi, &fc, v).unwrap();
        (basis, model)
    }
}

#[cfg(test)]
mod tests {
    use super::testing::small_model;

    #[test]
    fn bk_structure() {
        let (_, model) = small_model(1, [0.0, 0.0, 1.0]);
        let b0 = model.bk(0.0);
        for i in 0..model.dim() {
            for j in 0..model.dim() {
                assert_eq!(b0.bmat[(i, j)].re, model.lmat[(i, j)]);
                assert_eq!(b0.bmat[(i, j)].im, 0.0);
            }
        }
        let b = model.bk(1.3);
        for i in 0..model.dim() {
            for j in 0..model.dim() {
                assert_eq!(b.bmat[(i, j)].re, model.lmat[(i, j)]);
                assert_eq!(b.bmat[(i, j)].im, -1.3 * model.streaming.vmat[(i, j)]);
            }
        }
        assert!(b.numerical_abscissa().unwrap() <= 1e-8);
    }
}
