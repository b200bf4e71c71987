use super::fit::{fit_rate, RateFit};
use super::Propagator;
use crate::error::{Error, Result};
use crate::linalg::{bilinear, dot, hermitian, matvec, real_to_c};
use crate::quadrature::gauss_legendre;
use crate::spectral::{eigen_branches, BranchOptions, SpectralModel};
use faer::c64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Generic,
    Microscopic,
}

impl ScenarioKind {
    /// Extra power of `|k|` carried by the fluid coefficients.
    fn order(self) -> i32 {
        match self {
            Self::Generic => 0,
            Self::Microscopic => 1,
        }
    }
}

/// Scenario checks, all relative to `|f0|` except `lead`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioHygiene {
    /// `|(f0, psi')|`.
    pub transverse: f64,
    /// `|b q0 - a n0|`.
    pub fluid_relation: f64,
    /// `|P0 f0|`.
    pub macro_part: f64,
    /// `max_{j = 0, 4} |(f0, X_j)| / |X_j|` with `X_j = L^{-1} P1 vhat.omega psi_j`.
    pub micro_relation: f64,
    /// `|(f0, psi_0)|` (generic) or `|(f0, L^{-1} P1 vhat.omega (omega.psi'))|` (microscopic).
    pub lead: f64,
}

/// Initial data `f0(k, v) = profile(v) 1{|k| <= k_max}`, rotated with `k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayScenario {
    pub kind: ScenarioKind,
    pub d0: f64,
    pub k_max: f64,
    pub profile: Vec<f64>,
    pub hygiene: ScenarioHygiene,
}

impl DecayScenario {
    /// Generic: `d0 (psi_0 + (a / b) psi_4)`. Microscopic: `L^{-1} P1 vhat.omega
    /// (omega.psi')` with the `psi_0` and `psi_4` images projected out, scaled
    /// so that its pairing with the unprojected image is `d0`.
    pub fn build(kind: ScenarioKind, d0: f64, k_max: f64, model: &SpectralModel) -> Result<Self> {
        if !(d0 > 0.0) || !(k_max > 0.0) {
            return Err(Error::InvalidConfig("scenario amplitude and k support must be positive".into()));
        }
        let psi = &model.psi.psi;
        let omega = model.streaming.axis;
        let along = model.psi.momentum_along(omega);
        let image = |x: &[f64]| model.solver.solve(&matvec(&model.streaming.vmat, x));
        let (x0, x4, xw) = (image(&psi[0]), image(&psi[4]), image(&along));
        let profile: Vec<f64> = match kind {
            ScenarioKind::Generic => {
                let r = model.consts.a / model.consts.b;
                psi[0].iter().zip(&psi[4]).map(|(p0, p4)| d0 * (p0 + r * p4)).collect()
            }
            ScenarioKind::Microscopic => {
                let mut q = xw.clone();
                let mut basis: Vec<Vec<f64>> = Vec::new();
                for x in [&x0, &x4] {
                    let mut u = x.clone();
                    for b in &basis {
                        let c = dot(&u, b);
                        u.iter_mut().zip(b).for_each(|(a, bb)| *a -= c * bb);
                    }
                    // the psi_4 image is a multiple of the psi_0 image up to roundoff
                    let n = dot(&u, &u).sqrt();
                    if n > 1e-6 * dot(x, x).sqrt() {
                        basis.push(u.iter().map(|a| a / n).collect());
                    }
                }
                for b in &basis {
                    let c = dot(&q, b);
                    q.iter_mut().zip(b).for_each(|(a, bb)| *a -= c * bb);
                }
                let q = matvec(&model.proj.p1, &q);
                let pairing = dot(&q, &xw);
                if !(pairing.abs() > 0.0) {
                    return Err(Error::DeflatedSolve("microscopic profile is degenerate".into()));
                }
                q.iter().map(|a| d0 * a / pairing).collect()
            }
        };
        let fnorm = dot(&profile, &profile).sqrt();
        let inner = |i: usize| dot(&profile, &psi[i]);
        let transverse = (inner(1).powi(2) + inner(2).powi(2) + inner(3).powi(2)).sqrt() / fnorm;
        let fluid_relation = (model.consts.b * inner(4) - model.consts.a * inner(0)).abs() / fnorm;
        let macro_part = (0..5).map(|i| inner(i).powi(2)).sum::<f64>().sqrt() / fnorm;
        let rel = |x: &[f64]| dot(&profile, x).abs() / (fnorm * dot(x, x).sqrt());
        let micro_relation = rel(&x0).max(rel(&x4));
        let lead = match kind {
            ScenarioKind::Generic => inner(0).abs(),
            ScenarioKind::Microscopic => dot(&profile, &xw).abs(),
        };
        Ok(Self { kind, d0, k_max, profile, hygiene: ScenarioHygiene { transverse, fluid_relation, macro_part, micro_relation, lead } })
    }

    /// Checks the hypotheses of the scenario at tolerance `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let h = &self.hygiene;
        let ok = match self.kind {
            ScenarioKind::Generic => h.transverse <= tol && h.fluid_relation <= tol,
            ScenarioKind::Microscopic => h.macro_part <= tol && h.micro_relation <= tol,
        } && h.lead >= self.d0 * (1.0 - 1e-12);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{:?} scenario violates its hypotheses: {h:?}", self.kind)))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub fit_window: [f64; 2],
    /// Chebyshev nodes for the modal interpolants on `[0, k_max]`.
    pub cheb_nodes: usize,
    /// Integrand contributions below `exp(-2 cutoff)` are skipped.
    pub cutoff: f64,
    /// Gauss nodes per panel of the `|k|` rule.
    pub panel_order: usize,
    pub max_ci: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            t_min: 1.0,
            t_max: 1e4,
            t_points: 40,
            fit_window: [1e2, 1e4],
            cheb_nodes: 64,
            cutoff: 40.0,
            panel_order: 8,
            max_ci: 0.1,
        }
    }
}

impl DecayConfig {
    pub fn tgrid(&self) -> Vec<f64> {
        let n = self.t_points;
        (0..n).map(|i| self.t_min * (self.t_max / self.t_min).powf(i as f64 / (n - 1) as f64)).collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_max > self.t_min && self.t_points >= 2 && self.cheb_nodes >= 8 && self.panel_order >= 2) {
            return Err(Error::InvalidConfig(format!("invalid decay configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub name: String,
    /// Number of `x` derivatives.
    pub alpha: u32,
    pub expected_rate: f64,
    pub norms: Vec<f64>,
    pub fit: RateFit,
    /// `[min, max]` of `(1 + t)^{-expected_rate} norm` on the fit window.
    pub witness: [f64; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecaySeries {
    pub kind: ScenarioKind,
    pub tgrid: Vec<f64>,
    pub k_max: f64,
    pub k_nodes: usize,
    pub fit_window: [f64; 2],
    pub observables: Vec<ObservableSeries>,
    /// Largest relative gap between the modal integrand and direct propagation
    /// at the check points.
    pub modal_check: f64,
}

impl DecaySeries {
    pub fn get(&self, name: &str) -> Option<&ObservableSeries> {
        self.observables.iter().find(|o| o.name == name)
    }

    /// Fails when a slope interval is wider than `max_ci`.
    pub fn check(&self, max_ci: f64) -> Result<()> {
        for o in &self.observables {
            if !(o.fit.ci <= max_ci) {
                return Err(Error::SlopeFitUnstable { ci: o.fit.ci });
            }
        }
        Ok(())
    }
}

const OBSERVABLES: [&str; 4] = ["psi0", "transverse", "psi4", "micro"];
/// Interpolated functions: `lambda_j / k`, `beta_{ij}`, `H_{jl}`.
const NFUN: usize = 5 + 25 + 25;

/// Chebyshev interpolants of the modal data on `[0, k_max]`.
struct ModalData {
    k_max: f64,
    order: i32,
    coef: Vec<c64>,
    degree: usize,
}

/// Raw modal data at one `|k|`: eigenvalues, `beta_{ij} = (f0, conj e_j)(e_j, psi_i)`
/// and `H_{jl} = a_j conj(a_l) (P1 e_j, P1 e_l)`.
fn modal_values(model: &SpectralModel, profile: &[f64], lambda: &[c64; 5], evec: &[Vec<c64>; 5]) -> [c64; NFUN] {
    let psi = &model.psi.psi;
    let p1 = |v: &[c64]| -> Vec<c64> {
        let mut out = v.to_vec();
        for p in psi {
            let c: c64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
            out.iter_mut().zip(p).for_each(|(o, b)| *o -= c * b);
        }
        out
    };
    let pe: Vec<Vec<c64>> = evec.iter().map(|e| p1(e)).collect();
    let f = real_to_c(profile);
    let pf = p1(&f);
    let qf: Vec<c64> = f.iter().zip(&pf).map(|(a, b)| a - b).collect();
    let alpha: [c64; 5] = std::array::from_fn(|j| {
        let qe: Vec<c64> = evec[j].iter().zip(&pe[j]).map(|(a, b)| a - b).collect();
        bilinear(&pf, &pe[j]) + bilinear(&qf, &qe)
    });
    let mut out = [c64::new(0.0, 0.0); NFUN];
    out[..5].copy_from_slice(lambda);
    for i in 0..5 {
        for j in 0..5 {
            let proj: c64 = evec[j].iter().zip(&psi[i]).map(|(a, b)| a * b).sum();
            out[5 + 5 * i + j] = alpha[j] * proj;
            out[30 + 5 * j + i] = alpha[j] * alpha[i].conj() * hermitian(&pe[i], &pe[j]);
        }
    }
    out
}

impl ModalData {
    fn powers(&self, k: f64) -> [f64; 3] {
        [k, k.powi(self.order), k.powi(2 * self.order + 2)]
    }

    fn build(model: &SpectralModel, scenario: &DecayScenario, nodes: usize) -> Result<Self> {
        let kmax = scenario.k_max;
        let cheb: Vec<f64> = (0..nodes).map(|m| 0.5 * kmax * (1.0 + (PI * (m as f64 + 0.5) / nodes as f64).cos())).collect();
        let mut grid: Vec<f64> = (0..=48).map(|i| kmax * i as f64 / 48.0).collect();
        grid.extend_from_slice(&cheb);
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        let table = eigen_branches(model, &grid, &BranchOptions::default())?;
        let mut data = Self { k_max: kmax, order: scenario.kind.order(), coef: vec![c64::new(0.0, 0.0); nodes * NFUN], degree: nodes };
        let mut values = Vec::with_capacity(nodes);
        for &k in &cheb {
            let idx = grid.iter().position(|g| *g == k).unwrap();
            let raw = modal_values(model, &scenario.profile, &table.lambda[idx], &table.evec[idx]);
            let p = data.powers(k);
            let mut scaled = raw;
            for (f, v) in scaled.iter_mut().enumerate() {
                *v /= p[group(f)];
            }
            values.push(scaled);
        }
        for n in 0..nodes {
            for (m, v) in values.iter().enumerate() {
                let w = (PI * n as f64 * (m as f64 + 0.5) / nodes as f64).cos() * 2.0 / nodes as f64;
                for f in 0..NFUN {
                    data.coef[n * NFUN + f] += v[f] * w;
                }
            }
        }
        Ok(data)
    }

    /// Unscaled modal data at `k`.
    fn eval(&self, k: f64) -> [c64; NFUN] {
        let x = 2.0 * k / self.k_max - 1.0;
        let mut b1 = [c64::new(0.0, 0.0); NFUN];
        let mut b2 = [c64::new(0.0, 0.0); NFUN];
        for n in (1..self.degree).rev() {
            let c = &self.coef[n * NFUN..(n + 1) * NFUN];
            for f in 0..NFUN {
                let t = c[f] + b1[f] * (2.0 * x) - b2[f];
                b2[f] = b1[f];
                b1[f] = t;
            }
        }
        let p = self.powers(k);
        std::array::from_fn(|f| (self.coef[f] * 0.5 + b1[f] * x - b2[f]) * p[group(f)])
    }
}

fn group(f: usize) -> usize {
    match f {
        0..=4 => 0,
        5..=29 => 1,
        _ => 2,
    }
}

/// `[|(G f, psi_0)|^2, |(G f, psi')|^2, |(G f, psi_4)|^2, |P1 G f|^2]` from modal data.
fn modal_observables(data: &[c64; NFUN], t: f64) -> [f64; 4] {
    let e: [c64; 5] = std::array::from_fn(|j| (data[j] * t).exp());
    let a: [c64; 5] = std::array::from_fn(|i| (0..5).map(|j| e[j] * data[5 + 5 * i + j]).sum());
    let mut micro = c64::new(0.0, 0.0);
    for j in 0..5 {
        for l in 0..5 {
            micro += e[j] * e[l].conj() * data[30 + 5 * j + l];
        }
    }
    [a[0].norm_sqr(), a[1].norm_sqr() + a[2].norm_sqr() + a[3].norm_sqr(), a[4].norm_sqr(), micro.re.max(0.0)]
}

fn direct_observables(model: &SpectralModel, state: &[c64]) -> [f64; 4] {
    let psi = &model.psi.psi;
    let a: Vec<c64> = psi.iter().map(|p| state.iter().zip(p).map(|(s, q)| s * q).sum()).collect();
    let mut rest = state.to_vec();
    for (p, c) in psi.iter().zip(&a) {
        rest.iter_mut().zip(p).for_each(|(r, q)| *r -= c * q);
    }
    let micro = rest.iter().map(|z| z.norm_sqr()).sum::<f64>();
    [a[0].norm_sqr(), a[1].norm_sqr() + a[2].norm_sqr() + a[3].norm_sqr(), a[4].norm_sqr(), micro]
}

/// Computes `|d_x^alpha (f, psi)|` and `|d_x^alpha P1 f|`, `alpha = 0, 1`, as
/// `|k|`-radial integrals of the modal representation of `G1 f0`, and
/// fits their decay rates.
///
/// For every `t` the `|k|` rule resolves the cross-branch oscillation
/// `exp(i (Im lambda_j - Im lambda_l) t)`; panels are sized for the largest
/// `t` at which a given `|k|` still contributes.
pub fn decay_experiment(model: &SpectralModel, scenario: &DecayScenario, cfg: &DecayConfig, tau0: f64) -> Result<DecaySeries> {
    cfg.validate()?;
    if scenario.k_max > tau0 * (1.0 + 1e-9) {
        return Err(Error::InvalidConfig(format!("k support {} exceeds tau0 = {tau0}", scenario.k_max)));
    }
    let tgrid = cfg.tgrid();
    let kmax = scenario.k_max;
    let data = ModalData::build(model, scenario, cfg.cheb_nodes)?;

    // envelope of max Re lambda and the largest phase speed
    let scan = 4096;
    let mut maxre = vec![0.0f64; scan + 1];
    let mut speed = 0.0f64;
    for (i, slot) in maxre.iter_mut().enumerate() {
        let k = kmax * i as f64 / scan as f64;
        let d = data.eval(k.max(1e-12 * kmax));
        *slot = (0..5).map(|j| d[j].re).fold(f64::NEG_INFINITY, f64::max).min(0.0);
        if k > 0.0 {
            speed = speed.max((0..5).map(|j| d[j].im.abs() / k).fold(0.0, f64::max));
        }
    }
    let horizon = |k: f64| -> f64 {
        let i = ((k / kmax * scan as f64).floor() as usize).min(scan);
        let r = maxre[i].abs();
        if r == 0.0 {
            cfg.t_max
        } else {
            (cfg.cutoff / r).min(cfg.t_max).max(cfg.t_min)
        }
    };
    let (gx, gw) = gauss_legendre(cfg.panel_order);
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    let mut a = 0.0;
    let wavelength = 2.0 * PI / (2.0 * speed.max(1e-12));
    while a < kmax {
        let h = (kmax / 64.0).min(0.5 * wavelength / horizon(a)).min(kmax - a);
        for (x, w) in gx.iter().zip(&gw) {
            nodes.push((a + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
        a += h;
        if h <= 0.0 {
            break;
        }
    }
    let nt = tgrid.len();
    let chunk = 4096;
    let partial: Vec<Vec<[f64; 8]>> = nodes
        .par_chunks(chunk)
        .map(|part| {
            let mut acc = vec![[0.0f64; 8]; nt];
            for &(k, w) in part {
                let d = data.eval(k);
                let mr = (0..5).map(|j| d[j].re).fold(f64::NEG_INFINITY, f64::max);
                let jac = 4.0 * PI * k * k * w;
                for (slot, &t) in acc.iter_mut().zip(&tgrid) {
                    if mr * t < -cfg.cutoff {
                        continue;
                    }
                    let obs = modal_observables(&d, t);
                    for o in 0..4 {
                        slot[o] += jac * obs[o];
                        slot[4 + o] += jac * k * k * obs[o];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![[0.0f64; 8]; nt];
    for part in &partial {
        for (t, p) in total.iter_mut().zip(part) {
            for o in 0..8 {
                t[o] += p[o];
            }
        }
    }

    // direct propagation at a few check points
    let checks = [kmax / 7.0, kmax / 3.0, 0.9 * kmax];
    let mut modal_check = 0.0f64;
    let f0 = real_to_c(&scenario.profile);
    for &k in &checks {
        let prop = Propagator::new(&model.bk(k), &model.blocks)?;
        let d = data.eval(k);
        for &t in &[cfg.t_min, cfg.fit_window[0]] {
            let exact = direct_observables(model, &prop.apply(t, &f0)?.state);
            let approx = modal_observables(&d, t);
            let scale = exact.iter().cloned().fold(0.0, f64::max);
            for o in 0..4 {
                if exact[o] > 1e-200 && exact[o] > 1e-12 * scale {
                    modal_check = modal_check.max((approx[o] - exact[o]).abs() / exact[o]);
                }
            }
        }
    }

    let base = match scenario.kind {
        ScenarioKind::Generic => [-0.75, -0.75, -0.75, -1.25],
        ScenarioKind::Microscopic => [-1.25, -1.25, -1.25, -1.75],
    };
    let mut observables = Vec::new();
    for alpha in 0..2u32 {
        for o in 0..4 {
            let norms: Vec<f64> = total.iter().map(|v| v[4 * alpha as usize + o].max(0.0).sqrt()).collect();
            let expected = base[o] - 0.5 * alpha as f64;
            let fit = fit_rate(&tgrid, &norms, cfg.fit_window)?;
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for (t, n) in tgrid.iter().zip(&norms) {
                if *t >= cfg.fit_window[0] && *t <= cfg.fit_window[1] {
                    let w = (1.0 + t).powf(-expected) * n;
                    lo = lo.min(w);
                    hi = hi.max(w);
                }
            }
            let name = if alpha == 0 { OBSERVABLES[o].to_string() } else { format!("d_{}", OBSERVABLES[o]) };
            observables.push(ObservableSeries { name, alpha, expected_rate: expected, norms, fit, witness: [lo, hi] });
        }
    }
    Ok(DecaySeries { kind: scenario.kind, tgrid, k_max: kmax, k_nodes: nodes.len(), fit_window: cfg.fit_window, observables, modal_check })
}
