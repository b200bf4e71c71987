use super::{EigenBranchTable, PerturbationData, BRANCH_IDS};
use crate::error::{Error, Result};
use crate::linalg::norm_c;
use faer::c64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchFit {
    pub branch: i32,
    /// Recovered coefficients of `lambda = c1 k + c2 k^2 + c3 k^3`.
    pub c1: c64,
    pub c2: c64,
    pub c3: c64,
    pub c1_target: c64,
    /// `|c1 - c1_target| / sqrt(a^2 + b^2)`.
    pub c1_error: f64,
    pub a_target: f64,
    /// `|c2 - A_j| / |A_j|`.
    pub c2_error: f64,
    /// Slope of `log |lambda - (-i u_j k + A_j k^2)|` against `log k`.
    pub order: f64,
    /// Same for `|e_j(k) - (E_j + k e_{j,1})|`.
    pub evec_order: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub k_window: [f64; 2],
    pub points: usize,
    pub fits: Vec<BranchFit>,
}

impl ExpansionReport {
    pub fn max_c1_error(&self) -> f64 {
        self.fits.iter().map(|f| f.c1_error).fold(0.0, f64::max)
    }

    pub fn max_c2_error(&self) -> f64 {
        self.fits.iter().map(|f| f.c2_error).fold(0.0, f64::max)
    }

    pub fn min_order(&self) -> f64 {
        self.fits.iter().map(|f| f.order).fold(f64::INFINITY, f64::min)
    }

    /// Fails when any fitted remainder order is below `min_order`.
    pub fn check_order(&self, min_order: f64) -> Result<()> {
        for f in &self.fits {
            if !(f.order >= min_order) {
                return Err(Error::OrderCheck { branch: f.branch, order: f.order });
            }
        }
        Ok(())
    }
}

/// Least squares on complex data with real abscissae; returns the
/// coefficients of `sum_p c_p x^{p + first}`.
fn complex_poly_fit(x: &[f64], y: &[c64], first: i32, count: usize) -> Vec<c64> {
    let mut ata = vec![vec![0.0; count]; count];
    let mut aty = vec![c64::new(0.0, 0.0); count];
    // scale the abscissa for conditioning
    let xs = x.iter().cloned().fold(0.0, f64::max);
    for (&xi, &yi) in x.iter().zip(y) {
        let t = xi / xs;
        let row: Vec<f64> = (0..count).map(|p| t.powi(p as i32 + first)).collect();
        for a in 0..count {
            for b in 0..count {
                ata[a][b] += row[a] * row[b];
            }
            aty[a] += yi * row[a];
        }
    }
    // Gaussian elimination with partial pivoting
    for c in 0..count {
        let p = (c..count).max_by(|&i, &j| ata[i][c].abs().partial_cmp(&ata[j][c].abs()).unwrap()).unwrap();
        ata.swap(c, p);
        aty.swap(c, p);
        for r in (c + 1)..count {
            let f = ata[r][c] / ata[c][c];
            for k in c..count {
                ata[r][k] -= f * ata[c][k];
            }
            let sub = aty[c] * f;
            aty[r] -= sub;
        }
    }
    let mut sol = vec![c64::new(0.0, 0.0); count];
    for c in (0..count).rev() {
        let mut acc = aty[c];
        for k in (c + 1)..count {
            acc -= sol[k] * ata[c][k];
        }
        sol[c] = acc / ata[c][c];
    }
    sol.iter().enumerate().map(|(p, s)| s / xs.powi(p as i32 + first)).collect()
}

/// Slope of the least-squares line through `(log x, log y)`.
pub(crate) fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, v)| **v > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Compares the branch table with the perturbation expansion on the grid
/// points in `(0, k_fit]`.
pub fn expansion_validation(table: &EigenBranchTable, pert: &PerturbationData, k_fit: f64) -> Result<ExpansionReport> {
    let sel: Vec<usize> = (0..table.kgrid.len()).filter(|&i| table.kgrid[i] > 0.0 && table.kgrid[i] <= k_fit).collect();
    if sel.len() < 6 {
        return Err(Error::InvalidConfig(format!("expansion fit needs 6 grid points in (0, {k_fit}], found {}", sel.len())));
    }
    let ks: Vec<f64> = sel.iter().map(|&i| table.kgrid[i]).collect();
    let c = pert.u[0].abs();
    let mut fits = Vec::new();
    for (j, &branch) in BRANCH_IDS.iter().enumerate() {
        let lam: Vec<c64> = sel.iter().map(|&i| table.lambda[i][j]).collect();
        let coef = complex_poly_fit(&ks, &lam, 1, 3);
        let c1_target = c64::new(0.0, -pert.u[j]);
        let a = pert.a[j];
        let resid: Vec<f64> = ks
            .iter()
            .zip(&lam)
            .map(|(&k, &l)| (l - c1_target * k - c64::new(a * k * k, 0.0)).norm())
            .collect();
        let evres: Vec<f64> = sel
            .iter()
            .map(|&i| {
                let k = table.kgrid[i];
                let d: Vec<c64> = table.evec[i][j]
                    .iter()
                    .zip(&pert.e[j])
                    .zip(&pert.e1[j])
                    .map(|((e, e0), e1)| e - c64::new(*e0, 0.0) - e1 * k)
                    .collect();
                norm_c(&d)
            })
            .collect();
        fits.push(BranchFit {
            branch,
            c1: coef[0],
            c2: coef[1],
            c3: coef[2],
            c1_target,
            c1_error: (coef[0] - c1_target).norm() / c,
            a_target: a,
            c2_error: (coef[1] - c64::new(a, 0.0)).norm() / a.abs(),
            order: loglog_slope(&ks, &resid),
            evec_order: loglog_slope(&ks, &evres),
        });
    }
    Ok(ExpansionReport { k_window: [ks[0], *ks.last().unwrap()], points: ks.len(), fits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_fit_recovers_cubic() {
        let x: Vec<f64> = (1..=10).map(|i| 0.1 * i as f64).collect();
        let y: Vec<c64> = x
            .iter()
            .map(|&t| c64::new(0.0, 0.5) * t + c64::new(-0.2, 0.0) * t * t + c64::new(0.01, 0.03) * t * t * t)
            .collect();
        let c = complex_poly_fit(&x, &y, 1, 3);
        assert!((c[0] - c64::new(0.0, 0.5)).norm() < 1e-12);
        assert!((c[1] - c64::new(-0.2, 0.0)).norm() < 1e-11);
        assert!((c[2] - c64::new(0.01, 0.03)).norm() < 1e-10);
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|t| 3.0 * t.powi(3)).collect();
        assert!((loglog_slope(&x, &y) - 3.0).abs() < 1e-12);
    }
}
