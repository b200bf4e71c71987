use super::SpectralModel;
use crate::error::{Error, Result};
use crate::linalg::{bilinear, dot, hermitian, matvec, matvec_c, norm_c, real_to_c};
use faer::c64;
use serde::{Deserialize, Serialize};

/// Branch labels in storage order.
pub const BRANCH_IDS: [i32; 5] = [-1, 0, 1, 2, 3];

#[derive(Clone, Copy, Debug)]
pub struct BranchOptions {
    pub min_overlap: f64,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self { min_overlap: 0.8 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenBranchTable {
    pub kgrid: Vec<f64>,
    /// `lambda[k][j + 1]`.
    pub lambda: Vec<[c64; 5]>,
    /// Eigenvectors with `e^T e = 1` (unconjugated).
    pub evec: Vec<[Vec<c64>; 5]>,
    /// `|B e - lambda e| / |e|`.
    pub residual: Vec<[f64; 5]>,
    /// Smallest normalized overlap used to continue a branch at each `k`.
    pub min_overlap: Vec<f64>,
    /// Number of eigenvalues with real part above `-muhat / 2`.
    pub count_above: Vec<usize>,
    /// Largest real part among the eigenvalues not on a branch.
    pub max_re_rest: Vec<f64>,
    pub max_re_all: Vec<f64>,
    /// Largest grid point up to which the five branches are exactly the
    /// eigenvalues above `-muhat / 2`.
    pub tau0_grid: f64,
    pub muhat: f64,
}

impl EigenBranchTable {
    pub fn branch(&self, j: i32) -> Vec<c64> {
        let idx = (j + 1) as usize;
        self.lambda.iter().map(|l| l[idx]).collect()
    }
}

fn hermitian_overlap(a: &[c64], b: &[c64]) -> f64 {
    hermitian(a, b).norm() / (norm_c(a) * norm_c(b))
}

/// Tracks the five fluid branches over `kgrid`, which must start at zero.
pub fn eigen_branches(model: &SpectralModel, kgrid: &[f64], opts: &BranchOptions) -> Result<EigenBranchTable> {
    if kgrid.first() != Some(&0.0) || kgrid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig("k grid must start at 0 and increase strictly".into()));
    }
    let e0: [Vec<c64>; 5] = std::array::from_fn(|j| real_to_c(&model.pert.e[j]));
    let threshold = -0.5 * model.muhat;
    let mut table = EigenBranchTable {
        kgrid: kgrid.to_vec(),
        lambda: Vec::new(),
        evec: Vec::new(),
        residual: Vec::new(),
        min_overlap: Vec::new(),
        count_above: Vec::new(),
        max_re_rest: Vec::new(),
        max_re_all: Vec::new(),
        tau0_grid: 0.0,
        muhat: model.muhat,
    };
    let mut prev = e0.clone();
    let mut separated = true;
    for &k in kgrid {
        let (vals, vecs) = model.eigen(k)?;
        let count = vals.iter().filter(|z| z.re > threshold).count();
        let max_all = vals.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        if k == 0.0 {
            let lam: [c64; 5] = std::array::from_fn(|j| {
                c64::new(dot(&model.pert.e[j], &matvec(&model.lmat, &model.pert.e[j])), 0.0)
            });
            let res: [f64; 5] = std::array::from_fn(|j| {
                let r = matvec(&model.lmat, &model.pert.e[j]);
                r.iter().map(|x| x * x).sum::<f64>().sqrt()
            });
            let mut rest: Vec<f64> = vals.iter().map(|z| z.re).collect();
            rest.sort_by(|a, b| b.partial_cmp(a).unwrap());
            table.lambda.push(lam);
            table.evec.push(e0.clone());
            table.residual.push(res);
            table.min_overlap.push(1.0);
            table.count_above.push(count);
            table.max_re_rest.push(rest.get(5).copied().unwrap_or(f64::NEG_INFINITY));
            table.max_re_all.push(max_all);
            separated &= count == 5;
            continue;
        }
        let mut taken = vec![false; vals.len()];
        let mut lam = [c64::new(0.0, 0.0); 5];
        let mut ev: [Vec<c64>; 5] = std::array::from_fn(|_| Vec::new());
        let mut worst = 1.0f64;
        for j in 0..5 {
            let mut best = (usize::MAX, -1.0);
            for (c, v) in vecs.iter().enumerate() {
                if taken[c] {
                    continue;
                }
                let o = hermitian_overlap(&prev[j], v);
                if o > best.1 {
                    best = (c, o);
                }
            }
            if best.1 < opts.min_overlap {
                return Err(Error::BranchAmbiguity { k, overlap: best.1 });
            }
            worst = worst.min(best.1);
            taken[best.0] = true;
            lam[j] = vals[best.0];
            let v = &vecs[best.0];
            let nrm = bilinear(v, v).sqrt();
            if nrm.norm() < 1e-8 * norm_c(v).powi(2) {
                return Err(Error::DefectiveBranch { branch: BRANCH_IDS[j], k });
            }
            let mut e: Vec<c64> = v.iter().map(|z| z / nrm).collect();
            if hermitian(&prev[j], &e).re < 0.0 {
                for z in e.iter_mut() {
                    *z = -*z;
                }
            }
            ev[j] = e;
        }
        let bk = model.bk(k);
        let res: [f64; 5] = std::array::from_fn(|j| {
            let be = matvec_c(&bk.bmat, &ev[j]);
            let r: Vec<c64> = be.iter().zip(&ev[j]).map(|(a, b)| a - lam[j] * b).collect();
            norm_c(&r) / norm_c(&ev[j])
        });
        let above_on_branch = lam.iter().filter(|z| z.re > threshold).count();
        let max_rest = vals
            .iter()
            .enumerate()
            .filter(|(c, _)| !taken[*c])
            .map(|(_, z)| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        separated &= count == 5 && above_on_branch == 5;
        if separated {
            table.tau0_grid = k;
        }
        prev = ev.clone();
        table.lambda.push(lam);
        table.evec.push(ev);
        table.residual.push(res);
        table.min_overlap.push(worst);
        table.count_above.push(count);
        table.max_re_rest.push(max_rest);
        table.max_re_all.push(max_all);
    }
    Ok(table)
}

/// Result of the five-branch region scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumSummary {
    /// Measured `tau0`: largest `|k|` with exactly five eigenvalues above `-muhat / 2`.
    pub tau0: f64,
    /// First `|k|` past `tau0` where the count differs from five.
    pub k_fail: f64,
    /// Spectral abscissa `max Re lambda` at `2 tau0`.
    pub abscissa_at_2tau0: f64,
}

fn count_above(model: &SpectralModel, k: f64) -> Result<usize> {
    let (vals, _) = model.eigen(k)?;
    Ok(vals.iter().filter(|z| z.re > -0.5 * model.muhat).count())
}

/// Scans `|k|` geometrically from `k_start` and bisects the first change in
/// the count of eigenvalues above `-muhat / 2`.
pub fn measure_tau0(model: &SpectralModel, k_start: f64, k_limit: f64) -> Result<SpectrumSummary> {
    let mut lo = 0.0;
    let mut hi = k_start;
    loop {
        if count_above(model, hi)? != 5 {
            break;
        }
        lo = hi;
        hi *= 1.25;
        if hi > k_limit {
            return Err(Error::ClusterMiscount { k: k_limit, count: 5 });
        }
    }
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if count_above(model, mid)? == 5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 * hi {
            break;
        }
    }
    let (vals, _) = model.eigen(2.0 * lo)?;
    let abscissa = vals.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(SpectrumSummary { tau0: lo, k_fail: hi, abscissa_at_2tau0: abscissa })
}

#[cfg(test)]
mod tests {
    use super::super::testing::small_model;
    use super::*;

    #[test]
    fn branches_start_at_zero_and_pair_up() {
        let (_, model) = small_model(1, [0.0, 0.0, 1.0]);
        let grid: Vec<f64> = (0..=10).map(|i| 0.2 * i as f64).collect();
        let t = eigen_branches(&model, &grid, &BranchOptions::default()).unwrap();
        for j in 0..5 {
            assert!(t.lambda[0][j].norm() < 1e-9);
        }
        for k in 1..grid.len() {
            let l = t.lambda[k];
            assert!(l.iter().all(|z| z.re < 0.0));
            assert!((l[3] - l[4]).norm() < 1e-8);
            assert!((l[0] - l[2].conj()).norm() < 1e-8);
            assert!(t.residual[k].iter().all(|r| *r < 1e-9));
            for j in 0..5 {
                let n = bilinear(&t.evec[k][j], &t.evec[k][j]);
                assert!((n - c64::new(1.0, 0.0)).norm() < 1e-10);
            }
        }
        assert_eq!(t.tau0_grid, 2.0);
    }

    #[test]
    fn grid_must_start_at_zero() {
        let (_, model) = small_model(1, [0.0, 0.0, 1.0]);
        assert!(eigen_branches(&model, &[0.1, 0.2], &BranchOptions::default()).is_err());
    }
}
