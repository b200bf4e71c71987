//! The propagator `exp(t B(k))`, its split into the fluid part `G1` and the
//! remainder `G2`, leading-order macroscopic amplitudes and decay experiments.

mod decay;
mod fit;

pub use decay::{decay_experiment, DecayConfig, DecayScenario, DecaySeries, ObservableSeries, ScenarioHygiene, ScenarioKind};
pub use fit::{fit_rate, RateFit};

use crate::error::{Error, Result};
use crate::linalg::{self, bilinear, dot, norm_c, ComplexLu};
use crate::spectral::{eigen_branches, BranchOptions, EigenBranchTable, FourierModeOperator, SpectralModel};
use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Eigenvector condition number above which the Padé path is used.
pub const CONDITION_LIMIT: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagationMethod {
    Spectral,
    Pade,
}

#[derive(Clone, Debug)]
pub struct PropagatorResult {
    pub t: f64,
    pub kmag: f64,
    pub omega: [f64; 3],
    pub state: Vec<c64>,
    pub method: PropagationMethod,
}

struct Modes {
    vals: Vec<c64>,
    vecs: Mat<c64>,
    inv: Mat<c64>,
}

/// `exp(t B(k))` for one Fourier mode. The eigendecomposition is computed
/// once and reused for every `t`.
pub struct Propagator {
    pub kmag: f64,
    pub omega: [f64; 3],
    /// One-norm condition number of the unit-column eigenvector matrix.
    pub condition: f64,
    bmat: Mat<c64>,
    modes: Option<Modes>,
}

impl Propagator {
    pub fn new(op: &FourierModeOperator, blocks: &[Vec<usize>]) -> Result<Self> {
        let n = op.bmat.nrows();
        let (vals, vecs) = linalg::eigen_blocks(&op.bmat, blocks)?;
        let v = Mat::from_fn(n, n, |i, j| vecs[j][i] / norm_c(&vecs[j]));
        let lu = ComplexLu::new(&v);
        let inv = lu.inverse();
        let condition = if lu.pivot_ratio() > 0.0 { one_norm(&v) * one_norm(&inv) } else { f64::INFINITY };
        let modes = if condition.is_finite() && condition < CONDITION_LIMIT { Some(Modes { vals, vecs: v, inv }) } else { None };
        Ok(Self { kmag: op.kmag, omega: op.omega, condition, bmat: op.bmat.clone(), modes })
    }

    pub fn method(&self) -> PropagationMethod {
        if self.modes.is_some() {
            PropagationMethod::Spectral
        } else {
            PropagationMethod::Pade
        }
    }

    pub fn apply(&self, t: f64, f: &[c64]) -> Result<PropagatorResult> {
        if !(t >= 0.0) {
            return Err(Error::InvalidConfig(format!("propagation time must be nonnegative, got {t}")));
        }
        let state = match &self.modes {
            Some(m) => {
                let mut y = linalg::matvec_c(&m.inv, f);
                for (z, l) in y.iter_mut().zip(&m.vals) {
                    *z *= (l * t).exp();
                }
                linalg::matvec_c(&m.vecs, &y)
            }
            None => {
                let n = self.bmat.nrows();
                let tb = Mat::from_fn(n, n, |i, j| self.bmat[(i, j)] * t);
                linalg::matvec_c(&linalg::expm_pade13(&tb), f)
            }
        };
        Ok(PropagatorResult { t, kmag: self.kmag, omega: self.omega, state, method: self.method() })
    }
}

fn one_norm(a: &Mat<c64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(t B(k)) f0` in one call.
pub fn propagate(op: &FourierModeOperator, blocks: &[Vec<usize>], t: f64, f0: &[c64]) -> Result<PropagatorResult> {
    Propagator::new(op, blocks)?.apply(t, f0)
}

/// The five fluid eigenpairs at one `|k|`.
#[derive(Clone, Debug)]
pub struct BranchModes {
    pub kmag: f64,
    pub lambda: [c64; 5],
    pub evec: [Vec<c64>; 5],
}

impl EigenBranchTable {
    pub fn modes(&self, index: usize) -> BranchModes {
        BranchModes { kmag: self.kgrid[index], lambda: self.lambda[index], evec: self.evec[index].clone() }
    }
}

/// Fluid coefficients `(f, conj e_j)`.
pub fn fluid_coefficients(modes: &BranchModes, f: &[c64]) -> [c64; 5] {
    std::array::from_fn(|j| bilinear(f, &modes.evec[j]))
}

/// `G1 f0 = sum_j exp(lambda_j t) (f0, conj e_j) e_j` for `|k| <= tau0` and zero
/// otherwise; `G2 f0` is the exact remainder.
pub fn split_g1_g2(prop: &Propagator, t: f64, f0: &[c64], modes: &BranchModes, tau0: f64) -> Result<(Vec<c64>, Vec<c64>)> {
    if (modes.kmag - prop.kmag).abs() > 1e-12 * (1.0 + prop.kmag) {
        return Err(Error::InvalidConfig(format!("branch data at |k| = {} used for |k| = {}", modes.kmag, prop.kmag)));
    }
    let full = prop.apply(t, f0)?.state;
    let mut g1 = vec![c64::new(0.0, 0.0); f0.len()];
    if prop.kmag <= tau0 {
        for j in 0..5 {
            if !(norm_c(&modes.evec[j]) < 1e6) {
                return Err(Error::DefectiveBranch { branch: crate::spectral::BRANCH_IDS[j], k: modes.kmag });
            }
        }
        let alpha = fluid_coefficients(modes, f0);
        for j in 0..5 {
            let w = (modes.lambda[j] * t).exp() * alpha[j];
            for (g, e) in g1.iter_mut().zip(&modes.evec[j]) {
                *g += w * e;
            }
        }
    }
    let g2 = full.iter().zip(&g1).map(|(a, b)| a - b).collect();
    Ok((g1, g2))
}

/// Leading-order prediction of `(G1 f0, psi_i)`, `i = 0..=4`, from the exact
/// branch eigenvalues and the zeroth-order eigenvectors `E_j`. The generic
/// coefficients are `(f0, E_j)`; for `P0 f0 = 0` they are
/// `|k| (f0, conj e_{j,1})`. Under `b q0 = a n0` and `m0 = 0` the
/// `psi_0` entry is `n0 exp(Re lambda_1 t) cos(Im lambda_1 t)`.
pub fn macro_amplitudes(model: &SpectralModel, kind: ScenarioKind, f0: &[c64], lambda: &[c64; 5], kmag: f64, t: f64) -> [c64; 5] {
    let pert = &model.pert;
    let psi = &model.psi.psi;
    let alpha: [c64; 5] = std::array::from_fn(|j| match kind {
        ScenarioKind::Generic => f0.iter().zip(&pert.e[j]).map(|(f, e)| f * e).sum(),
        ScenarioKind::Microscopic => bilinear(f0, &pert.e1[j]) * kmag,
    });
    std::array::from_fn(|i| {
        (0..5)
            .map(|j| (lambda[j] * t).exp() * alpha[j] * dot(&pert.e[j], &psi[i]))
            .sum()
    })
}

#[derive(Clone, Copy, Debug)]
pub struct G2Options {
    /// Random initial data per `|k|`.
    pub samples: usize,
    pub seed: u64,
    /// Fit window `[0, horizon / muhat]`.
    pub horizon: f64,
    pub t_points: usize,
    /// Relative size below which `|G2 f|` is treated as roundoff.
    pub floor: f64,
}

impl Default for G2Options {
    fn default() -> Self {
        Self { samples: 20, seed: 0x5eed_2024, horizon: 25.0, t_points: 26, floor: 1e-11 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct G2RateReport {
    pub kvals: Vec<f64>,
    /// Fitted decay rate of `max_f |G2 f| / |f|` at each `|k|`.
    pub rates: Vec<f64>,
    pub sigma0: f64,
    pub mean: f64,
    /// `(max - min) / mean` of the rates.
    pub spread: f64,
    pub t_end: f64,
    /// Largest `|G1 f + G2 f - G f|` seen, relative to `|f|`.
    pub additivity: f64,
}

/// Fits the exponential envelope of `G2` at each `|k|` in `kvals`.
pub fn g2_decay_rates(model: &SpectralModel, kvals: &[f64], tau0: f64, opts: &G2Options) -> Result<G2RateReport> {
    if kvals.is_empty() || kvals.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::InvalidConfig("G2 rates need positive |k| values".into()));
    }
    let kmax = kvals.iter().cloned().fold(0.0, f64::max);
    let mut grid: Vec<f64> = (0..=48).map(|i| kmax * i as f64 / 48.0).collect();
    grid.extend_from_slice(kvals);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * kmax);
    let table = eigen_branches(model, &grid, &BranchOptions::default())?;
    let t_end = opts.horizon / model.muhat;
    let times: Vec<f64> = (0..opts.t_points).map(|i| t_end * i as f64 / (opts.t_points - 1) as f64).collect();
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rates = Vec::with_capacity(kvals.len());
    let mut additivity = 0.0f64;
    for &k in kvals {
        let idx = grid.iter().position(|g| (g - k).abs() <= 1e-12 * kmax).unwrap();
        let modes = table.modes(idx);
        let prop = Propagator::new(&model.bk(modes.kmag), &model.blocks)?;
        let mut envelope = vec![0.0f64; times.len()];
        for _ in 0..opts.samples {
            let f: Vec<c64> = (0..n).map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let fn_ = norm_c(&f);
            for (e, &t) in envelope.iter_mut().zip(&times) {
                let (g1, g2) = split_g1_g2(&prop, t, &f, &modes, tau0)?;
                let full = prop.apply(t, &f)?.state;
                let sum: Vec<c64> = g1.iter().zip(&g2).zip(&full).map(|((a, b), c)| a + b - c).collect();
                additivity = additivity.max(norm_c(&sum) / fn_);
                *e = e.max(norm_c(&g2) / fn_);
            }
        }
        let pts: Vec<(f64, f64)> = times
            .iter()
            .zip(&envelope)
            .filter(|(_, e)| **e > opts.floor)
            .map(|(t, e)| (*t, e.ln()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::InvalidConfig(format!("G2 envelope at |k| = {k} is below the roundoff floor")));
        }
        rates.push(-line_slope(&pts));
    }
    let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    Ok(G2RateReport { kvals: kvals.to_vec(), rates, sigma0: lo, mean, spread: (hi - lo) / mean, t_end, additivity })
}

fn line_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::testing::small_model;

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<c64> {
        (0..n).map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn propagator_identity_contraction_and_semigroup_law() {
        let (_, model) = small_model(1, [0.0, 0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &k in &[0.0, 0.7, 2.0, 15.0] {
            let prop = Propagator::new(&model.bk(k), &model.blocks).unwrap();
            let f = random_state(&mut rng, model.dim());
            let s0 = prop.apply(0.0, &f).unwrap().state;
            assert!(s0.iter().zip(&f).all(|(a, b)| (a - b).norm() < 1e-12));
            for &t in &[0.01, 1.0, 10.0, 100.0] {
                let s = prop.apply(t, &f).unwrap().state;
                assert!(norm_c(&s) <= norm_c(&f) * (1.0 + 1e-8));
            }
            let (t, s) = (0.013, 0.021);
            let direct = prop.apply(t + s, &f).unwrap().state;
            let half = prop.apply(s, &f).unwrap().state;
            let composed = prop.apply(t, &half).unwrap().state;
            let d: Vec<c64> = direct.iter().zip(&composed).map(|(a, b)| a - b).collect();
            assert!(norm_c(&d) <= 1e-8 * norm_c(&direct));
        }
    }

    #[test]
    fn spectral_and_pade_paths_agree() {
        let (_, model) = small_model(1, [0.0, 0.0, 1.0]);
        let op = model.bk(1.1);
        let prop = Propagator::new(&op, &model.blocks).unwrap();
        assert_eq!(prop.method(), PropagationMethod::Spectral);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_state(&mut rng, model.dim());
        let t = 0.02;
        let a = prop.apply(t, &f).unwrap().state;
        let n = model.dim();
        let tb = Mat::from_fn(n, n, |i, j| op.bmat[(i, j)] * t);
        let b = linalg::matvec_c(&linalg::expm_pade13(&tb), &f);
        let d: Vec<c64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(norm_c(&d) < 1e-10 * norm_c(&a));
        assert!(prop.apply(-1.0, &f).is_err());
    }

    #[test]
    fn split_is_exact_and_vanishes_beyond_tau0() {
        let (_, model) = small_model(1, [0.0, 0.0, 1.0]);
        let grid: Vec<f64> = (0..=20).map(|i| 0.25 * i as f64).collect();
        let table = eigen_branches(&model, &grid, &BranchOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_state(&mut rng, model.dim());
        for idx in [4usize, 20] {
            let modes = table.modes(idx);
            let prop = Propagator::new(&model.bk(modes.kmag), &model.blocks).unwrap();
            let full = prop.apply(0.3, &f).unwrap().state;
            let (g1, g2) = split_g1_g2(&prop, 0.3, &f, &modes, 2.0).unwrap();
            for i in 0..f.len() {
                assert_eq!(g1[i] + g2[i], full[i]);
            }
            if modes.kmag > 2.0 {
                assert!(g1.iter().all(|z| *z == c64::new(0.0, 0.0)));
            }
        }
        let wrong = table.modes(3);
        let prop = Propagator::new(&model.bk(table.kgrid[4]), &model.blocks).unwrap();
        assert!(split_g1_g2(&prop, 0.0, &f, &wrong, 2.0).is_err());
    }

    #[test]
    fn macro_amplitudes_reduce_to_n0_at_origin() {
        let (_, model) = small_model(1, [0.0, 0.0, 1.0]);
        let scenario = DecayScenario::build(ScenarioKind::Generic, 1.0, 1.0, &model).unwrap();
        let f = linalg::real_to_c(&scenario.profile);
        let zero = [c64::new(0.0, 0.0); 5];
        let amp = macro_amplitudes(&model, ScenarioKind::Generic, &f, &zero, 0.0, 0.0);
        let n0 = dot(&scenario.profile, &model.psi.psi[0]);
        let q0 = dot(&scenario.profile, &model.psi.psi[4]);
        assert!((amp[0] - c64::new(n0, 0.0)).norm() < 1e-12);
        assert!((amp[4] - c64::new(q0, 0.0)).norm() < 1e-12);
        // cosine form for b q0 = a n0
        let lam = c64::new(-0.01, 0.4);
        let lambda = [lam.conj(), c64::new(-0.2, 0.0), lam, c64::new(-0.1, 0.0), c64::new(-0.1, 0.0)];
        let t = 3.0;
        let amp = macro_amplitudes(&model, ScenarioKind::Generic, &f, &lambda, 0.5, t);
        let expected = n0 * (lam.re * t).exp() * (lam.im * t).cos();
        assert!((amp[0] - c64::new(expected, 0.0)).norm() < 1e-12);
    }
}
