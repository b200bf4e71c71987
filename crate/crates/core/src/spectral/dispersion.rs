use super::{EigenBranchTable, SpectralModel};
use crate::error::{Error, Result};
use crate::linalg::{matvec, ComplexLu};
use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

/// Factored deflated resolvent `P1 (L - i s V - s beta) P1 - P0` restricted
/// to the sectors that carry the requested fluid vectors.
pub struct ResolventSolver {
    idx: Vec<usize>,
    lu: ComplexLu,
    vf: Vec<Vec<f64>>,
    which: Vec<usize>,
}

fn support_indices(model: &SpectralModel, which: &[usize]) -> Vec<usize> {
    let n = model.dim();
    let mut used = vec![false; n];
    for &w in which {
        for (i, x) in model.pert.e[w].iter().enumerate() {
            if x.abs() > 0.0 {
                used[i] = true;
            }
        }
    }
    let mut idx: Vec<usize> = Vec::new();
    for b in &model.blocks {
        if b.iter().any(|&i| used[i]) {
            idx.extend_from_slice(b);
        }
    }
    idx.sort_unstable();
    let mut inside = vec![false; n];
    for &i in &idx {
        inside[i] = true;
    }
    let scale = crate::linalg::max_abs(&model.lmat).max(1.0);
    let coupled = (0..n).any(|i| {
        inside[i]
            && (0..n).any(|j| {
                !inside[j]
                    && (model.lmat[(i, j)].abs() > 1e-12 * scale
                        || model.streaming.vmat[(i, j)].abs() > 1e-12
                        || model.proj.p0[(i, j)].abs() > 1e-12)
            })
    });
    if coupled {
        (0..n).collect()
    } else {
        idx
    }
}

impl ResolventSolver {
    pub fn new(model: &SpectralModel, beta: c64, s: f64, which: &[usize]) -> Result<Self> {
        let idx = support_indices(model, which);
        let m = idx.len();
        let l = &model.lmat;
        let v = &model.streaming.vmat;
        let (p0, p1) = (&model.proj.p0, &model.proj.p1);
        let inner = Mat::from_fn(m, m, |a, b| {
            let (i, j) = (idx[a], idx[b]);
            let diag = if i == j { s * beta } else { c64::new(0.0, 0.0) };
            c64::new(l[(i, j)], -s * v[(i, j)]) - diag
        });
        let p1s = Mat::from_fn(m, m, |a, b| c64::new(p1[(idx[a], idx[b])], 0.0));
        let prod = &(&p1s * &inner) * &p1s;
        let a = Mat::from_fn(m, m, |x, y| prod[(x, y)] - c64::new(p0[(idx[x], idx[y])], 0.0));
        let lu = ComplexLu::new(&a);
        if !(lu.pivot_ratio() > 1e-14) {
            return Err(Error::SingularSolve { re: beta.re, im: beta.im });
        }
        let vf = (0..5).map(|j| matvec(v, &model.pert.e[j])).collect();
        Ok(Self { idx, lu, vf, which: which.to_vec() })
    }

    /// `R_ij = ((L - i s P1 V - s beta)^{-1} P1 V F_i, V F_j)` for `i, j` in
    /// the requested set; other entries are left at zero.
    pub fn matrix(&self, model: &SpectralModel) -> [[c64; 5]; 5] {
        let mut r = [[c64::new(0.0, 0.0); 5]; 5];
        let p1 = &model.proj.p1;
        for &i in &self.which {
            let rhs: Vec<c64> = self
                .idx
                .iter()
                .map(|&a| c64::new(self.idx.iter().map(|&b| p1[(a, b)] * self.vf[i][b]).sum::<f64>(), 0.0))
                .collect();
            let x = self.lu.solve(&rhs);
            for &j in &self.which {
                r[i][j] = self.idx.iter().zip(&x).fold(c64::new(0.0, 0.0), |acc, (&a, z)| acc + z * self.vf[j][a]);
            }
        }
        r
    }
}

/// All 25 resolvent entries at `(beta, s)`.
pub fn resolvent_r(model: &SpectralModel, beta: c64, s: f64) -> Result<[[c64; 5]; 5]> {
    let all = [0, 1, 2, 3, 4];
    let solver = ResolventSolver::new(model, beta, s, &all)?;
    Ok(solver.matrix(model))
}

fn det3(m: [[c64; 3]; 3]) -> c64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// `D_0(beta, s) = beta - s R_33`.
pub fn d0(model: &SpectralModel, beta: c64, s: f64) -> Result<c64> {
    if s == 0.0 {
        return Ok(beta);
    }
    let r = ResolventSolver::new(model, beta, s, &[3])?.matrix(model);
    Ok(beta - r[3][3] * s)
}

/// Three-by-three fluid determinant `D_1(beta, s)`.
pub fn d1(model: &SpectralModel, beta: c64, s: f64) -> Result<c64> {
    let u = model.pert.u;
    let r = if s == 0.0 {
        [[c64::new(0.0, 0.0); 5]; 5]
    } else {
        ResolventSolver::new(model, beta, s, &[0, 1, 2])?.matrix(model)
    };
    let mut m = [[c64::new(0.0, 0.0); 3]; 3];
    for (row, line) in m.iter_mut().enumerate() {
        for (col, entry) in line.iter_mut().enumerate() {
            let diag = if row == col { beta + c64::new(0.0, u[row]) } else { c64::new(0.0, 0.0) };
            *entry = diag - r[col][row] * s;
        }
    }
    Ok(det3(m))
}

#[derive(Clone, Copy, Debug)]
pub struct DispersionOptions {
    pub residual_tol: f64,
    pub max_iter: usize,
    pub collision_tol: f64,
}

impl Default for DispersionOptions {
    fn default() -> Self {
        Self { residual_tol: 1e-10, max_iter: 50, collision_tol: 1e-12 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DispersionResult {
    pub sgrid: Vec<f64>,
    /// `[beta_{-1}, beta_0, beta_1]` from `D_1` and the shear root from `D_0`.
    pub roots: Vec<[c64; 4]>,
    pub residuals: Vec<[f64; 4]>,
    pub iterations: Vec<[usize; 4]>,
}

impl DispersionResult {
    /// Largest relative gap between `s beta` and the eigen-branches on the
    /// shared grid, excluding `s = 0`. Branches 2 and 3 are both compared
    /// with the `D_0` root.
    pub fn compare(&self, table: &EigenBranchTable) -> Result<f64> {
        if table.kgrid != self.sgrid {
            return Err(Error::InvalidConfig("dispersion and branch grids differ".into()));
        }
        let mut worst = 0.0f64;
        for (k, s) in self.sgrid.iter().enumerate() {
            if *s == 0.0 {
                continue;
            }
            for &(slot, branch) in [(0usize, 0usize), (1, 1), (2, 2), (3, 3), (3, 4)].iter() {
                let lam = table.lambda[k][branch];
                let pred = self.roots[k][slot] * *s;
                worst = worst.max((pred - lam).norm() / lam.norm());
            }
        }
        Ok(worst)
    }
}

fn newton(f: &dyn Fn(c64) -> Result<c64>, start: c64, s: f64, opts: &DispersionOptions) -> Result<(c64, f64, usize)> {
    let mut beta = start;
    let mut fb = f(beta)?;
    for it in 0..opts.max_iter {
        if fb.norm() <= opts.residual_tol {
            return Ok((beta, fb.norm(), it));
        }
        let h = 1e-7 * (1.0 + beta.norm());
        let jac = (f(beta + h)? - f(beta - h)?) / (2.0 * h);
        if jac.norm() == 0.0 {
            return Err(Error::NewtonDivergence { s });
        }
        let step = -fb / jac;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = beta + step * lambda;
            let ft = f(trial)?;
            if ft.norm() < fb.norm() {
                beta = trial;
                fb = ft;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            if fb.norm() <= 10.0 * opts.residual_tol {
                return Ok((beta, fb.norm(), it));
            }
            return Err(Error::NewtonDivergence { s });
        }
        if (step * lambda).norm() < 1e-15 * (1.0 + beta.norm()) && fb.norm() <= opts.residual_tol {
            return Ok((beta, fb.norm(), it + 1));
        }
    }
    if fb.norm() <= opts.residual_tol {
        Ok((beta, fb.norm(), opts.max_iter))
    } else {
        Err(Error::NewtonDivergence { s })
    }
}

/// Newton continuation of the dispersion roots from their `s = 0` values.
pub fn dispersion_solve(model: &SpectralModel, sgrid: &[f64], opts: &DispersionOptions) -> Result<DispersionResult> {
    if sgrid.iter().any(|s| *s < 0.0) || sgrid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig("s grid must be nonnegative and increasing".into()));
    }
    let u = model.pert.u;
    let mut current = [c64::new(0.0, -u[0]), c64::new(0.0, -u[1]), c64::new(0.0, -u[2]), c64::new(0.0, 0.0)];
    let mut previous: Option<([c64; 4], f64)> = None;
    let mut out = DispersionResult { sgrid: sgrid.to_vec(), roots: Vec::new(), residuals: Vec::new(), iterations: Vec::new() };
    let mut last_s = 0.0;
    for &s in sgrid {
        // linear extrapolation of beta in s from the two previous points
        let guess: [c64; 4] = match previous {
            Some((p, ps)) if last_s > ps => std::array::from_fn(|i| current[i] + (current[i] - p[i]) * ((s - last_s) / (last_s - ps))),
            _ => current,
        };
        let mut roots = [c64::new(0.0, 0.0); 4];
        let mut res = [0.0; 4];
        let mut its = [0usize; 4];
        for slot in 0..4 {
            let f = |b: c64| if slot < 3 { d1(model, b, s) } else { d0(model, b, s) };
            let (b, r, it) = newton(&f, guess[slot], s, opts)?;
            roots[slot] = b;
            res[slot] = r;
            its[slot] = it;
        }
        for a in 0..3 {
            for b in (a + 1)..3 {
                if (roots[a] - roots[b]).norm() < opts.collision_tol {
                    return Err(Error::RootCollision { s });
                }
            }
        }
        previous = Some((current, last_s));
        current = roots;
        last_s = s;
        out.roots.push(roots);
        out.residuals.push(res);
        out.iterations.push(its);
    }
    Ok(out)
}
