//! Scattering kernel, two-body kinematics, collision frequency and the
//! Dirichlet-form assembly of the linearized collision operator.

use crate::error::{Error, Result};
use crate::galerkin::GalerkinBasis;
use crate::linalg::{self, max_abs};
use crate::maxwellian::{NullSpaceBasis, RelVelocity};
use crate::quadrature::{gauss_legendre, legendre_all, QuadratureSet, RadialSampler, Rule1d, SobolStream};
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Convention for the invariant `s` entering the flux factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SConvention {
    /// `s = 4 + 4 g^2`.
    #[default]
    Consistent,
    /// `s = 2 (u0 v0 - u.v - 1) = 4 g^2`.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelForm {
    /// `sigma = g^{beta+1} / (1 + g) * sin(theta)^gamma`.
    #[default]
    PowerLaw,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatteringKernel {
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub form: KernelForm,
    #[serde(default)]
    pub s_convention: SConvention,
}

impl Default for ScatteringKernel {
    fn default() -> Self {
        Self { beta: 1.0, delta: 0.0, gamma: 0.0, form: KernelForm::PowerLaw, s_convention: SConvention::Consistent }
    }
}

impl ScatteringKernel {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..0.5).contains(&self.delta) && self.beta >= 0.0 && self.beta < 2.0 - 2.0 * self.delta && self.gamma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "kernel outside admissible window: beta = {}, delta = {}, gamma = {}",
                self.beta, self.delta, self.gamma
            )))
        }
    }

    /// Short identifier, at most 16 bytes, stored in matrix containers.
    pub fn id(&self) -> String {
        let mut s = format!("pl{:.3}/{:.3}", self.beta, self.gamma);
        if self.s_convention == SConvention::Literal {
            s.push('L');
        }
        s.truncate(16);
        s
    }

    /// `int sin(theta)^gamma d omega` over the unit sphere.
    pub fn angular_factor(&self) -> f64 {
        if self.gamma == 0.0 {
            return 4.0 * PI;
        }
        let rule = Rule1d::composite(0.0, PI, 16, 20);
        2.0 * PI * rule.integrate(|t| t.sin().powf(self.gamma + 1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionKinematics {
    pub g: f64,
    pub s: f64,
    pub vm: f64,
}

pub fn relative_momentum(u: &RelVelocity, v: &RelVelocity) -> CollisionKinematics {
    kinematics_with(u, v, SConvention::Consistent)
}

pub fn kinematics_with(u: &RelVelocity, v: &RelVelocity, conv: SConvention) -> CollisionKinematics {
    // u0 v0 - u.v - 1 = (|u - v|^2 - (u0 - v0)^2) / 2, free of cancellation for u ~ v
    let d2 = (0..3).map(|k| (u.v[k] - v.v[k]).powi(2)).sum::<f64>();
    let nu2 = u.v.iter().map(|x| x * x).sum::<f64>();
    let nv2 = v.v.iter().map(|x| x * x).sum::<f64>();
    let de = (nu2 - nv2) / (u.v0 + v.v0);
    let g2 = ((d2 - de * de) / 4.0).max(0.0);
    let g = g2.sqrt();
    let s = match conv {
        SConvention::Consistent => 4.0 + 4.0 * g2,
        SConvention::Literal => 4.0 * g2,
    };
    CollisionKinematics { g, s, vm: g * s.sqrt() / (u.v0 * v.v0) }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Direction of `u` in the center-of-momentum frame of `(u, v)`.
pub fn cm_direction(u: &RelVelocity, v: &RelVelocity) -> Option<[f64; 3]> {
    let p = [u.v[0] + v.v[0], u.v[1] + v.v[1], u.v[2] + v.v[2]];
    let p0 = u.v0 + v.v0;
    let g = relative_momentum(u, v).g;
    if g < 1e-10 {
        return None;
    }
    let rs = 2.0 * (1.0 + g * g).sqrt();
    let c = 1.0 / (rs * (p0 + rs));
    let f = c * dot3(&p, &u.v) - u.v0 / rs;
    let star = [u.v[0] + f * p[0], u.v[1] + f * p[1], u.v[2] + f * p[2]];
    let n = dot3(&star, &star).sqrt();
    Some([star[0] / n, star[1] / n, star[2] / n])
}

/// Post-collision momenta with center-of-momentum direction `omega`.
pub fn post_collision(u: &RelVelocity, v: &RelVelocity, omega: [f64; 3]) -> (RelVelocity, RelVelocity) {
    let g = relative_momentum(u, v).g;
    if g < 1e-10 {
        return (*u, *v);
    }
    boost_out(u, v, g, omega)
}

fn boost_out(u: &RelVelocity, v: &RelVelocity, g: f64, omega: [f64; 3]) -> (RelVelocity, RelVelocity) {
    let p = [u.v[0] + v.v[0], u.v[1] + v.v[1], u.v[2] + v.v[2]];
    let p0 = u.v0 + v.v0;
    let rs = 2.0 * (1.0 + g * g).sqrt();
    let c = 1.0 / (rs * (p0 + rs));
    let pw = dot3(&p, &omega);
    let up = [
        0.5 * p[0] + g * (omega[0] + c * pw * p[0]),
        0.5 * p[1] + g * (omega[1] + c * pw * p[1]),
        0.5 * p[2] + g * (omega[2] + c * pw * p[2]),
    ];
    let u0p = 0.5 * p0 + g * pw / rs;
    let vp = [p[0] - up[0], p[1] - up[1], p[2] - up[2]];
    let v0p = p0 - u0p;
    let mk = |w: [f64; 3], w0: f64| RelVelocity { v: w, v0: w0, vhat: [w[0] / w0, w[1] / w0, w[2] / w0] };
    (mk(up, u0p), mk(vp, v0p))
}

/// Scattering angle from the Minkowski relative four-momenta.
pub fn scattering_cos(u: &RelVelocity, v: &RelVelocity, up: &RelVelocity, vp: &RelVelocity) -> f64 {
    let mink = |a0: f64, a: [f64; 3], b0: f64, b: [f64; 3]| a0 * b0 - dot3(&a, &b);
    let d = |x: &RelVelocity, y: &RelVelocity| (x.v0 - y.v0, [x.v[0] - y.v[0], x.v[1] - y.v[1], x.v[2] - y.v[2]]);
    let (e, w) = d(u, v);
    let (ep, wp) = d(up, vp);
    let num = mink(e, w, ep, wp);
    let den = mink(e, w, e, w);
    if den == 0.0 {
        return 1.0;
    }
    (num / den).clamp(-1.0, 1.0)
}

pub fn sigma(g: f64, theta: f64, kernel: &ScatteringKernel) -> f64 {
    match kernel.form {
        KernelForm::PowerLaw => {
            let radial = g.powf(kernel.beta + 1.0) / (1.0 + g);
            if kernel.gamma == 0.0 {
                radial
            } else {
                radial * theta.sin().abs().powf(kernel.gamma)
            }
        }
    }
}

fn sigma_radial(g: f64, kernel: &ScatteringKernel) -> f64 {
    match kernel.form {
        KernelForm::PowerLaw => g.powf(kernel.beta + 1.0) / (1.0 + g),
    }
}

fn nu_product(r: f64, kernel: &ScatteringKernel, rule: &Rule1d, cos_nodes: &(Vec<f64>, Vec<f64>)) -> f64 {
    let v = RelVelocity::new([0.0, 0.0, r]);
    let mut acc = 0.0;
    for (&ru, &wr) in rule.nodes.iter().zip(&rule.weights) {
        let u0 = (1.0 + ru * ru).sqrt();
        let mu = (-u0).exp();
        let mut inner = 0.0;
        for (&c, &wc) in cos_nodes.0.iter().zip(&cos_nodes.1) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            let u = RelVelocity { v: [ru * s, 0.0, ru * c], v0: u0, vhat: [0.0; 3] };
            let k = kinematics_with(&u, &v, kernel.s_convention);
            inner += wc * k.vm * sigma_radial(k.g, kernel);
        }
        acc += wr * ru * ru * mu * inner;
    }
    2.0 * PI * kernel.angular_factor() * acc
}

fn nu_rule(r: f64, quad: &QuadratureSet, refine: usize) -> Rule1d {
    let panels = quad.radial_panels * refine;
    let h = quad.r_max / panels as f64;
    let mut breaks: Vec<f64> = (0..=panels).map(|i| i as f64 * h).collect();
    if r > 0.0 && r < quad.r_max {
        breaks.push(r);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    }
    Rule1d::on_breakpoints(&breaks, quad.radial_order)
}

/// `nu(v) = int int vM sigma M(u) d omega du` by product quadrature in
/// `(|u|, cos angle(u, v))`, checked against a refined rule.
pub fn collision_frequency(v: &RelVelocity, kernel: &ScatteringKernel, quad: &QuadratureSet, rtol: f64) -> Result<f64> {
    let r = v.norm();
    let coarse = nu_product(r, kernel, &nu_rule(r, quad, 1), &gauss_legendre(32));
    let fine = nu_product(r, kernel, &nu_rule(r, quad, 2), &gauss_legendre(64));
    let delta = ((coarse - fine) / fine).abs();
    if !(delta <= rtol) {
        return Err(Error::ToleranceNotMet { what: format!("collision frequency at |v| = {r}"), delta, tol: rtol });
    }
    Ok(fine)
}

/// Collision frequency by a seeded Sobol stream over `(u, omega)`; makes no
/// use of isotropy.
pub fn collision_frequency_qmc(v: &RelVelocity, kernel: &ScatteringKernel, samples: usize, seed: u64, r_max: f64) -> f64 {
    let sampler = RadialSampler::new(r_max, 4096);
    let stream = SobolStream::new(5, seed);
    let mut x = [0.0; 5];
    let mut acc = 0.0;
    for i in 0..samples as u64 {
        stream.point(i, &mut x);
        let (ru, w) = sampler.sample(x[0]);
        let du = uniform_sphere(x[1], x[2]);
        let om = uniform_sphere(x[3], x[4]);
        let u = RelVelocity::new([ru * du[0], ru * du[1], ru * du[2]]);
        let k = kinematics_with(&u, v, kernel.s_convention);
        if k.g < 1e-10 {
            continue;
        }
        let theta = cm_direction(&u, v).map(|d| dot3(&d, &om).clamp(-1.0, 1.0).acos()).unwrap_or(0.0);
        acc += w * 4.0 * PI * k.vm * sigma(k.g, theta, kernel);
    }
    acc / samples as f64
}

fn uniform_sphere(a: f64, b: f64) -> [f64; 3] {
    let z = 2.0 * a - 1.0;
    let s = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * PI * b;
    [s * phi.cos(), s * phi.sin(), z]
}

#[derive(Clone, Debug)]
pub struct CollisionMatrices {
    pub nmat: Mat<f64>,
    pub lmat: Mat<f64>,
    /// Per-degree radial blocks; `lmat` repeats them over `m`.
    pub radial_blocks: Vec<Mat<f64>>,
    /// Largest entrywise half-difference between the two shifted estimates.
    pub lmat_error: f64,
    pub c0hat: f64,
    pub c1hat: f64,
    pub muhat: Option<f64>,
    /// `(|v|, nu)` samples used for the envelope fit.
    pub nu_table: Vec<(f64, f64)>,
    pub seed: u64,
    pub samples: usize,
}

impl CollisionMatrices {
    pub fn kmat(&self) -> Mat<f64> {
        Mat::from_fn(self.lmat.nrows(), self.lmat.ncols(), |i, j| self.lmat[(i, j)] + self.nmat[(i, j)])
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AssemblyOptions {
    pub chunk: usize,
    pub rtol: f64,
    pub nu_rtol: f64,
    /// Skip the collision-frequency matrix (it is not needed by the spectral stages).
    pub with_nu: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { chunk: 4096, rtol: 5e-2, nu_rtol: 1e-6, with_nu: true }
    }
}

/// Proposal density for the radial samples: the average of the squared
/// basis functions, so every basis function has its support covered.
fn basis_sampler(basis: &GalerkinBasis) -> RadialSampler {
    let lmax = basis.config.l_max;
    let counts: Vec<usize> = (0..=lmax).map(|l| basis.config.radial_count(l)).collect();
    let total: usize = counts.iter().sum();
    RadialSampler::with_proposal(basis.r_max, 16384, |r| {
        let mut q = vec![0.0; basis.config.n_radial.max(2)];
        let mut acc = 0.0;
        for l in 0..=lmax {
            basis.radial_values(l, r, &mut q);
            acc += q[..counts[l]].iter().map(|x| x * x).sum::<f64>();
        }
        0.5 * RadialSampler::density(r) / (4.0 * PI) * (acc / total as f64) + 0.5 * RadialSampler::density(r) / 20.0
    })
}

struct Accumulator {
    blocks: Vec<Vec<f64>>,
}

impl Accumulator {
    fn zeros(counts: &[usize]) -> Self {
        Self { blocks: counts.iter().map(|&n| vec![0.0; n * n]).collect() }
    }

    fn add(mut self, other: &Accumulator) -> Self {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }
}

fn tree_sum(mut parts: Vec<Accumulator>) -> Accumulator {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a.add(&b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop().unwrap()
}

fn dirichlet_chunk(
    basis: &GalerkinBasis,
    kernel: &ScatteringKernel,
    sampler: &RadialSampler,
    stream: &SobolStream,
    start: u64,
    end: u64,
) -> Accumulator {
    let lmax = basis.config.l_max;
    let counts: Vec<usize> = (0..=lmax).map(|l| basis.config.radial_count(l)).collect();
    let nmax = *counts.iter().max().unwrap();
    let mut acc = Accumulator::zeros(&counts);
    let mut x = [0.0; 5];
    let mut q = vec![vec![vec![0.0; nmax]; lmax + 1]; 4];
    let mut pl = vec![vec![0.0; lmax + 1]; 6];
    let mut xm = vec![0.0; 4 * nmax];
    let mut ym = vec![0.0; 4 * nmax];
    let signs = [1.0, 1.0, -1.0, -1.0];
    let pair = |a: usize, b: usize| -> usize {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        match (a, b) {
            (0, 1) => 0,
            (0, 2) => 1,
            (0, 3) => 2,
            (1, 2) => 3,
            (1, 3) => 4,
            _ => 5,
        }
    };
    for i in start..end {
        stream.point(i, &mut x);
        let (rv, wv) = sampler.sample(x[0]);
        let (ru, wu) = sampler.sample(x[1]);
        if wv == 0.0 || wu == 0.0 {
            continue;
        }
        let ca = 2.0 * x[2] - 1.0;
        let sa = (1.0 - ca * ca).max(0.0).sqrt();
        let v = RelVelocity::new([0.0, 0.0, rv]);
        let u = RelVelocity::new([ru * sa, 0.0, ru * ca]);
        let k = kinematics_with(&u, &v, kernel.s_convention);
        if k.g < 1e-10 {
            continue;
        }
        let om = uniform_sphere(x[3], x[4]);
        let sig = if kernel.gamma == 0.0 {
            sigma_radial(k.g, kernel)
        } else {
            let theta = cm_direction(&u, &v).map(|d| dot3(&d, &om).clamp(-1.0, 1.0).acos()).unwrap_or(0.0);
            sigma(k.g, theta, kernel)
        };
        let w = wv * wu * 4.0 * PI * k.vm * sig;
        if w == 0.0 {
            continue;
        }
        let (up, vp) = boost_out(&u, &v, k.g, om);
        let pts = [vp.v, up.v, v.v, u.v];
        let mut radii = [0.0; 4];
        let mut dirs = [[0.0, 0.0, 1.0]; 4];
        for a in 0..4 {
            let r = dot3(&pts[a], &pts[a]).sqrt();
            radii[a] = r;
            if r > 0.0 {
                dirs[a] = [pts[a][0] / r, pts[a][1] / r, pts[a][2] / r];
            }
            for l in 0..=lmax {
                basis.radial_values(l, r, &mut q[a][l]);
            }
        }
        for a in 0..4 {
            for b in (a + 1)..4 {
                let c = dot3(&dirs[a], &dirs[b]).clamp(-1.0, 1.0);
                legendre_all(lmax, c, &mut pl[pair(a, b)]);
            }
        }
        for l in 0..=lmax {
            let n = counts[l];
            for a in 0..4 {
                for j in 0..n {
                    xm[a * n + j] = signs[a] * q[a][l][j];
                }
            }
            for a in 0..4 {
                for j in 0..n {
                    let mut s = xm[a * n + j];
                    for b in 0..4 {
                        if b != a {
                            s += pl[pair(a, b)][l] * xm[b * n + j];
                        }
                    }
                    ym[a * n + j] = w * s;
                }
            }
            let blk = &mut acc.blocks[l];
            for i2 in 0..n {
                for j in i2..n {
                    let mut s = 0.0;
                    for a in 0..4 {
                        s += xm[a * n + i2] * ym[a * n + j];
                    }
                    blk[i2 * n + j] += s;
                }
            }
        }
    }
    acc
}

fn dirichlet_blocks(
    basis: &GalerkinBasis,
    kernel: &ScatteringKernel,
    sampler: &RadialSampler,
    samples: usize,
    seed: u64,
    chunk: usize,
) -> Vec<Mat<f64>> {
    let stream = SobolStream::new(5, seed);
    let chunks = samples.div_ceil(chunk);
    let parts: Vec<Accumulator> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = (c * chunk) as u64;
            let end = ((c + 1) * chunk).min(samples) as u64;
            dirichlet_chunk(basis, kernel, sampler, &stream, start, end)
        })
        .collect();
    let total = tree_sum(parts);
    let scale = -1.0 / (16.0 * PI * samples as f64);
    total
        .blocks
        .iter()
        .enumerate()
        .map(|(l, blk)| {
            let n = basis.config.radial_count(l);
            let mut m = Mat::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    m[(i, j)] = scale * blk[i * n + j];
                    m[(j, i)] = m[(i, j)];
                }
            }
            m
        })
        .collect()
}

fn expand_blocks(basis: &GalerkinBasis, blocks: &[Mat<f64>]) -> Mat<f64> {
    let dim = basis.dim();
    let mut out = Mat::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let (a, b) = (basis.labels[i], basis.labels[j]);
            if a.l == b.l && a.m == b.m {
                out[(i, j)] = blocks[a.l][(a.n, b.n)];
            }
        }
    }
    out
}

/// Derives the two digital-shift seeds used for the error estimate.
pub fn shift_seeds(seed: u64) -> [u64; 2] {
    [seed, seed ^ 0x9e37_79b9_7f4a_7c15]
}

pub fn assemble_l(
    basis: &GalerkinBasis,
    kernel: &ScatteringKernel,
    quad: &QuadratureSet,
    opts: &AssemblyOptions,
) -> Result<CollisionMatrices> {
    kernel.validate()?;
    if quad.qmc_samples == 0 || opts.chunk == 0 {
        return Err(Error::InvalidConfig("sample and chunk counts must be positive".into()));
    }
    let sampler = basis_sampler(basis);
    let [sa, sb] = shift_seeds(quad.seed);
    let a = dirichlet_blocks(basis, kernel, &sampler, quad.qmc_samples, sa, opts.chunk);
    let b = dirichlet_blocks(basis, kernel, &sampler, quad.qmc_samples, sb, opts.chunk);
    let blocks: Vec<Mat<f64>> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| Mat::from_fn(x.nrows(), x.ncols(), |i, j| 0.5 * (x[(i, j)] + y[(i, j)])))
        .collect();
    let mut err = 0.0f64;
    for (x, y) in a.iter().zip(&b) {
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                err = err.max(0.5 * (x[(i, j)] - y[(i, j)]).abs());
            }
        }
    }
    let lmat = expand_blocks(basis, &blocks);
    let nu_table: Vec<(f64, f64)> = (0..=30)
        .into_par_iter()
        .map(|i| {
            let r = i as f64;
            collision_frequency(&RelVelocity::new([0.0, 0.0, r]), kernel, quad, opts.nu_rtol).map(|nu| (r, nu))
        })
        .collect::<Result<Vec<_>>>()?;
    // nu(0) keeps the scale meaningful when L is pure roundoff (invariants only)
    let scale = max_abs(&lmat).max(nu_table[0].1);
    if !(err <= opts.rtol * scale) {
        return Err(Error::AssemblyTolerance { delta: err / scale, tol: opts.rtol });
    }
    let ratios: Vec<f64> = nu_table.iter().map(|&(r, nu)| nu / (1.0 + r * r).sqrt().sqrt()).collect();
    let c0hat = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let c1hat = ratios.iter().cloned().fold(0.0, f64::max);
    let nmat = if opts.with_nu {
        // coarser per-node rule: the weight r^2 M(r) q q' is already smooth
        let light = QuadratureSet { radial_panels: quad.radial_panels / 2, ..quad.clone() };
        let cos_nodes = gauss_legendre(24);
        let nodes: Vec<f64> = basis.rule.nodes.clone();
        let nus: Vec<f64> =
            nodes.par_iter().map(|&r| nu_product(r, kernel, &nu_rule(r, &light, 1), &cos_nodes)).collect();
        let lookup = |r: f64| {
            let i = nodes.partition_point(|&x| x < r).min(nodes.len() - 1);
            nus[i]
        };
        basis.separable_matrix(lookup, |_, a, b| a * b, 0)
    } else {
        Mat::zeros(basis.dim(), basis.dim())
    };
    Ok(CollisionMatrices {
        nmat,
        lmat,
        radial_blocks: blocks,
        lmat_error: err,
        c0hat,
        c1hat,
        muhat: None,
        nu_table,
        seed: quad.seed,
        samples: quad.qmc_samples,
    })
}

/// Spectral gap on the orthogonal complement of the null space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapReport {
    pub muhat: f64,
    /// Ascending eigenvalues of `Lmat`.
    pub eigenvalues: Vec<f64>,
    pub near_zero: usize,
    pub null_residual: f64,
}

pub fn spectral_gap(mats: &CollisionMatrices, psi: &NullSpaceBasis) -> Result<GapReport> {
    let l = &mats.lmat;
    let dim = l.nrows();
    let norm = max_abs(l).max(f64::MIN_POSITIVE);
    let proj = crate::galerkin::build_projectors(psi);
    let p1lp1 = &(&proj.p1 * l) * &proj.p1;
    let shifted = Mat::from_fn(dim, dim, |i, j| p1lp1[(i, j)] - 2.0 * norm * dim as f64 * proj.p0[(i, j)]);
    let (restricted, _) = linalg::sym_eigen(&shifted)?;
    let muhat = -restricted[dim - 1];
    let (eigenvalues, _) = linalg::sym_eigen(l)?;
    let near_zero = eigenvalues.iter().filter(|e| e.abs() < muhat / 10.0).count();
    let null_residual = psi
        .psi
        .iter()
        .map(|p| linalg::matvec(l, p).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if !(muhat > 0.0) || near_zero != 5 {
        return Err(Error::GapCollapse { count: near_zero });
    }
    Ok(GapReport { muhat, eigenvalues, near_zero, null_residual })
}
