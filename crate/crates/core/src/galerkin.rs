//! Symmetry-adapted velocity basis `q_{n,l}(|v|) Y_l^m(v/|v|) sqrt(M(v))`.
//!
//! Radial factors are `r^l p_n(v0)` with `p_n` orthonormal polynomials in
//! `v0` for the weight `r^{2l+2} e^{-v0}`, generated by a discretized
//! Stieltjes recurrence. The collision invariants (`1`, `v0` at `l = 0`,
//! `r` at `l = 1`) are therefore exact basis members.

use crate::error::{Error, Result};
use crate::quadrature::{Rule1d, SphereRule, QuadratureSet};
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    /// Radial functions per angular degree (`l = 0` always gets at least two).
    pub n_radial: usize,
    pub l_max: usize,
    /// Largest `|m|` kept. `1` suffices for all five fluid branches when the
    /// wave vector is the polar axis.
    pub m_max: usize,
    /// Radial truncation; `None` sizes it from the polynomial degree.
    #[serde(default)]
    pub r_max: Option<f64>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { n_radial: 8, l_max: 7, m_max: 1, r_max: None }
    }
}

impl BasisConfig {
    pub fn radial_count(&self, l: usize) -> usize {
        if l == 0 {
            self.n_radial.max(2)
        } else {
            self.n_radial
        }
    }

    pub fn resolved_r_max(&self) -> f64 {
        self.r_max.unwrap_or_else(|| {
            let power = 2.0 * (self.n_radial.max(2) - 1) as f64 + 2.0 * self.l_max as f64 + 3.0;
            QuadratureSet::truncation_radius(power, 1e-17).max(33.0)
        })
    }

    /// One refinement level: two more radial functions and two more degrees.
    pub fn refined(&self) -> Self {
        Self {
            n_radial: self.n_radial + 2,
            l_max: self.l_max + 2,
            m_max: self.m_max,
            r_max: None,
        }
    }
}

/// `(n, l, m)` label of a basis function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisLabel {
    pub n: usize,
    pub l: usize,
    pub m: i64,
}

/// Three-term recurrence of the orthonormal radial polynomials for one `l`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialFamily {
    pub l: usize,
    pub alpha: Vec<f64>,
    /// `b[n]` multiplies `p_{n-1}`; `b[0]` is unused.
    pub b: Vec<f64>,
    pub p0: f64,
}

impl RadialFamily {
    fn build(l: usize, count: usize, rule: &Rule1d) -> Result<Self> {
        let w: Vec<f64> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&r, &wi)| wi * r.powi(2 * l as i32 + 2) * (-(1.0 + r * r).sqrt()).exp())
            .collect();
        let x: Vec<f64> = rule.nodes.iter().map(|&r| (1.0 + r * r).sqrt()).collect();
        let mu0: f64 = w.iter().sum();
        let p0 = 1.0 / mu0.sqrt();
        let mut prev = vec![0.0; w.len()];
        let mut cur = vec![p0; w.len()];
        let mut alpha = Vec::with_capacity(count);
        let mut b = vec![0.0; count.max(1)];
        for n in 0..count {
            let a: f64 = (0..w.len()).map(|i| w[i] * x[i] * cur[i] * cur[i]).sum();
            alpha.push(a);
            if n + 1 == count {
                break;
            }
            let mut next: Vec<f64> = (0..w.len())
                .map(|i| (x[i] - a) * cur[i] - b[n] * prev[i])
                .collect();
            // one reorthogonalization pass against the two previous members
            for basis in [&cur, &prev] {
                let proj: f64 = (0..w.len()).map(|i| w[i] * next[i] * basis[i]).sum();
                for i in 0..w.len() {
                    next[i] -= proj * basis[i];
                }
            }
            let norm: f64 = (0..w.len()).map(|i| w[i] * next[i] * next[i]).sum::<f64>().sqrt();
            let scale: f64 = (0..w.len()).map(|i| w[i] * x[i] * x[i] * cur[i] * cur[i]).sum::<f64>().sqrt();
            if !(norm > 1e-10 * scale) {
                return Err(Error::RankDeficiency { l, n: n + 1 });
            }
            b[n + 1] = norm;
            for v in next.iter_mut() {
                *v /= norm;
            }
            prev = cur;
            cur = next;
        }
        Ok(Self { l, alpha, b, p0 })
    }

    /// `q_{n,l}(r) = r^l p_n(v0)` for all `n`, written into `out`.
    pub fn eval(&self, r: f64, out: &mut [f64]) {
        let x = (1.0 + r * r).sqrt();
        let rl = r.powi(self.l as i32);
        let count = self.alpha.len();
        let mut prev = 0.0;
        let mut cur = self.p0;
        out[0] = rl * cur;
        for n in 1..count {
            let next = ((x - self.alpha[n - 1]) * cur - self.b[n - 1] * prev) / self.b[n];
            prev = cur;
            cur = next;
            out[n] = rl * cur;
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Real orthonormal spherical harmonics (no Condon-Shortley phase), so that
/// `Y_1^1 ~ x`, `Y_1^{-1} ~ y`, `Y_1^0 ~ z`.
pub fn real_harmonic(l: usize, m: i64, dir: [f64; 3]) -> f64 {
    let am = m.unsigned_abs() as usize;
    if am > l {
        return 0.0;
    }
    let z = dir[2];
    // reduced associated Legendre P_l^m(z) / (1-z^2)^{m/2}
    let mut pmm = 1.0;
    for k in 1..=am {
        pmm *= (2 * k - 1) as f64;
    }
    let reduced = if l == am {
        pmm
    } else {
        let mut p_prev = pmm;
        let mut p_cur = z * (2 * am + 1) as f64 * pmm;
        for ll in (am + 2)..=l {
            let next = ((2 * ll - 1) as f64 * z * p_cur - (ll + am - 1) as f64 * p_prev) / (ll - am) as f64;
            p_prev = p_cur;
            p_cur = next;
        }
        p_cur
    };
    let mut fact_ratio = 1.0;
    for k in (l - am + 1)..=(l + am) {
        fact_ratio /= k as f64;
    }
    let norm = ((2 * l + 1) as f64 / (4.0 * PI) * fact_ratio).sqrt();
    if am == 0 {
        return norm * reduced;
    }
    // Re / Im of (x + i y)^m
    let (mut re, mut im) = (1.0, 0.0);
    for _ in 0..am {
        let nr = re * dir[0] - im * dir[1];
        let ni = re * dir[1] + im * dir[0];
        re = nr;
        im = ni;
    }
    let trig = if m > 0 { re } else { im };
    std::f64::consts::SQRT_2 * norm * reduced * trig
}

/// Orthonormal Galerkin basis and its descriptor.
#[derive(Clone, Debug)]
pub struct GalerkinBasis {
    pub config: BasisConfig,
    pub labels: Vec<BasisLabel>,
    pub radial: Vec<RadialFamily>,
    pub rule: Rule1d,
    pub r_max: f64,
    pub gram: Mat<f64>,
}

/// Serializable description of the basis so saved matrices are self-describing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub config: BasisConfig,
    pub r_max: f64,
    pub labels: Vec<BasisLabel>,
    pub radial: Vec<RadialFamily>,
}

/// Sector order of `m`: 0, 1, -1, 2, -2, ...
fn m_sequence(m_max: usize) -> Vec<i64> {
    let mut out = vec![0i64];
    for m in 1..=m_max as i64 {
        out.push(m);
        out.push(-m);
    }
    out
}

impl GalerkinBasis {
    pub fn build(config: &BasisConfig) -> Result<Self> {
        if config.l_max < 1 || config.m_max < 1 || config.n_radial < 1 {
            return Err(Error::InvalidConfig(
                "basis needs n_radial >= 1, l_max >= 1 and m_max >= 1 to hold the collision invariants".into(),
            ));
        }
        let r_max = config.resolved_r_max();
        let panels = (r_max / 1.5).ceil() as usize;
        let rule = Rule1d::composite(0.0, r_max, panels, 16);
        let radial = (0..=config.l_max)
            .map(|l| RadialFamily::build(l, config.radial_count(l), &rule))
            .collect::<Result<Vec<_>>>()?;
        let mut labels = Vec::new();
        for m in m_sequence(config.m_max.min(config.l_max)) {
            for l in m.unsigned_abs() as usize..=config.l_max {
                for n in 0..config.radial_count(l) {
                    labels.push(BasisLabel { n, l, m });
                }
            }
        }
        let mut basis = Self {
            config: config.clone(),
            labels,
            radial,
            rule,
            r_max,
            gram: Mat::zeros(0, 0),
        };
        basis.gram = basis.separable_matrix(|_| 1.0, |_, a, b| a * b, 0);
        let dim = basis.dim();
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((basis.gram[(i, j)] - target).abs());
            }
        }
        if worst > 1e-10 {
            return Err(Error::IllConditionedBasis { deviation: worst });
        }
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor {
            config: self.config.clone(),
            r_max: self.r_max,
            labels: self.labels.clone(),
            radial: self.radial.clone(),
        }
    }

    pub fn index_of(&self, n: usize, l: usize, m: i64) -> Option<usize> {
        self.labels.iter().position(|b| b.n == n && b.l == l && b.m == m)
    }

    /// Index sets of the `m` sectors in basis order.
    pub fn sectors(&self) -> Vec<(i64, Vec<usize>)> {
        let mut out: Vec<(i64, Vec<usize>)> = Vec::new();
        for (i, lab) in self.labels.iter().enumerate() {
            match out.iter_mut().find(|(m, _)| *m == lab.m) {
                Some((_, v)) => v.push(i),
                None => out.push((lab.m, vec![i])),
            }
        }
        out
    }

    /// Radial values `q_{n,l}(r)` for all `n`.
    pub fn radial_values(&self, l: usize, r: f64, out: &mut [f64]) {
        self.radial[l].eval(r, out);
    }

    /// Evaluates `sum_a coeffs[a] phi_a(v)`.
    pub fn evaluate(&self, coeffs: &[f64], v: [f64; 3]) -> f64 {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let dir = if r > 0.0 { [v[0] / r, v[1] / r, v[2] / r] } else { [0.0, 0.0, 1.0] };
        let sqrt_m = (-0.5 * (1.0 + r * r).sqrt()).exp();
        let mut radial = vec![vec![0.0; self.config.n_radial.max(2)]; self.config.l_max + 1];
        for (l, out) in radial.iter_mut().enumerate() {
            self.radial_values(l, r, out);
        }
        self.labels
            .iter()
            .zip(coeffs)
            .map(|(lab, c)| c * radial[lab.l][lab.n] * real_harmonic(lab.l, lab.m, dir))
            .sum::<f64>()
            * sqrt_m
    }

    /// Builds a matrix whose entries factor as
    /// `radial_integral(l, l') [n, n'] * angular(label, label')`.
    ///
    /// `radial_weight(r)` multiplies `r^2 M(r) q_{n,l} q_{n',l'}` and
    /// `angular(dir, Y, Y')` is integrated with a sphere rule exact to
    /// `2 l_max + extra_degree`.
    pub(crate) fn separable_matrix(
        &self,
        radial_weight: impl Fn(f64) -> f64,
        angular: impl Fn([f64; 3], f64, f64) -> f64,
        extra_degree: usize,
    ) -> Mat<f64> {
        let lmax = self.config.l_max;
        let nmax = self.config.n_radial.max(2);
        let nodes = self.rule.len();
        // radial tables q[l][node][n]
        let mut q = vec![vec![vec![0.0; nmax]; nodes]; lmax + 1];
        for (l, table) in q.iter_mut().enumerate() {
            for (i, row) in table.iter_mut().enumerate() {
                self.radial_values(l, self.rule.nodes[i], row);
            }
        }
        let wr: Vec<f64> = self
            .rule
            .nodes
            .iter()
            .zip(&self.rule.weights)
            .map(|(&r, &w)| w * r * r * (-(1.0 + r * r).sqrt()).exp() * radial_weight(r))
            .collect();
        let mut radial_int = vec![vec![vec![0.0; nmax * nmax]; lmax + 1]; lmax + 1];
        for l1 in 0..=lmax {
            for l2 in 0..=lmax {
                let cnt1 = self.radial[l1].len();
                let cnt2 = self.radial[l2].len();
                for n1 in 0..cnt1 {
                    for n2 in 0..cnt2 {
                        radial_int[l1][l2][n1 * nmax + n2] =
                            (0..nodes).map(|i| wr[i] * q[l1][i][n1] * q[l2][i][n2]).sum();
                    }
                }
            }
        }
        let sphere = SphereRule::exact_to_degree(2 * lmax + extra_degree);
        let mut lm: Vec<(usize, i64)> = Vec::new();
        for lab in &self.labels {
            if !lm.contains(&(lab.l, lab.m)) {
                lm.push((lab.l, lab.m));
            }
        }
        let ylm: Vec<Vec<f64>> = sphere
            .dirs
            .iter()
            .map(|&d| lm.iter().map(|&(l, m)| real_harmonic(l, m, d)).collect())
            .collect();
        let mut ang = vec![0.0; lm.len() * lm.len()];
        for a in 0..lm.len() {
            for b in 0..lm.len() {
                ang[a * lm.len() + b] = sphere
                    .dirs
                    .iter()
                    .zip(&sphere.weights)
                    .enumerate()
                    .map(|(k, (&d, &w))| w * angular(d, ylm[k][a], ylm[k][b]))
                    .sum();
            }
        }
        let slot: Vec<usize> = self
            .labels
            .iter()
            .map(|lab| lm.iter().position(|&p| p == (lab.l, lab.m)).unwrap())
            .collect();
        let dim = self.dim();
        let mut out = Mat::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let (a, b) = (self.labels[i], self.labels[j]);
                let v = ang[slot[i] * lm.len() + slot[j]] * radial_int[a.l][b.l][a.n * nmax + b.n];
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

/// Orthogonal projectors onto the null space and its complement.
#[derive(Clone, Debug)]
pub struct Projectors {
    pub p0: Mat<f64>,
    pub p1: Mat<f64>,
}

pub fn build_projectors(psi: &crate::maxwellian::NullSpaceBasis) -> Projectors {
    let dim = psi.dim();
    let mut p0 = Mat::zeros(dim, dim);
    for v in &psi.psi {
        for i in 0..dim {
            for j in 0..dim {
                p0[(i, j)] += v[i] * v[j];
            }
        }
    }
    let mut p1 = Mat::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            p1[(i, j)] = if i == j { 1.0 } else { 0.0 } - p0[(i, j)];
        }
    }
    Projectors { p0, p1 }
}

/// Galerkin matrix of multiplication by `vhat . omega`.
#[derive(Clone, Debug)]
pub struct StreamingMatrix {
    pub axis: [f64; 3],
    pub vmat: Mat<f64>,
}

pub fn streaming_matrix(basis: &GalerkinBasis, omega: [f64; 3]) -> Result<StreamingMatrix> {
    let norm = (omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]).sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidConfig("streaming axis must be nonzero".into()));
    }
    let w = [omega[0] / norm, omega[1] / norm, omega[2] / norm];
    let vmat = basis.separable_matrix(
        |r| r / (1.0 + r * r).sqrt(),
        |d, a, b| (d[0] * w[0] + d[1] * w[1] + d[2] * w[2]) * a * b,
        1,
    );
    Ok(StreamingMatrix { axis: w, vmat })
}
