//! Deterministic node/weight sets used by every integral in the crate.
//!
//! Radial integrals use composite Gauss-Legendre panels on `[0, r_max]`,
//! angular integrals a Gauss-Legendre x trapezoid product rule on the unit
//! sphere (exact for polynomials up to a requested degree), and the
//! high-dimensional collision integrals a digitally shifted Sobol stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Legendre polynomials `P_0..=P_lmax` at `z`, written into `out`.
pub fn legendre_all(lmax: usize, z: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if lmax == 0 {
        return;
    }
    out[1] = z;
    for l in 2..=lmax {
        out[l] = ((2 * l - 1) as f64 * z * out[l - 1] - (l - 1) as f64 * out[l - 2]) / l as f64;
    }
}

/// A one-dimensional rule `sum_i w_i f(x_i)`.
#[derive(Clone, Debug)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    /// Composite Gauss-Legendre with `panels` equal panels of `order` nodes.
    pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(lo + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Self { nodes, weights }
    }

    /// Gauss-Legendre on explicit panel breakpoints.
    pub fn on_breakpoints(breaks: &[f64], order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for pair in breaks.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let h = hi - lo;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(lo + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Product rule on the unit sphere: Gauss-Legendre in `cos(theta)` and the
/// trapezoid rule in `phi`. Exact for polynomials of degree `<= degree`
/// restricted to the sphere. Weights sum to `4 pi`.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub dirs: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn exact_to_degree(degree: usize) -> Self {
        let nz = degree / 2 + 1;
        let nphi = degree + 1;
        let (z, wz) = gauss_legendre(nz);
        let mut dirs = Vec::with_capacity(nz * nphi);
        let mut weights = Vec::with_capacity(nz * nphi);
        let dphi = 2.0 * PI / nphi as f64;
        for (zi, wi) in z.iter().zip(&wz) {
            let s = (1.0 - zi * zi).max(0.0).sqrt();
            for k in 0..nphi {
                let phi = (k as f64 + 0.5) * dphi;
                dirs.push([s * phi.cos(), s * phi.sin(), *zi]);
                weights.push(wi * dphi);
            }
        }
        Self { dirs, weights }
    }
}

/// Velocity-space quadrature configuration shared across modules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSet {
    /// Radial truncation `|v| <= r_max`.
    pub r_max: f64,
    /// Composite Gauss-Legendre panels and order for radial integrals.
    pub radial_panels: usize,
    pub radial_order: usize,
    /// Sobol samples for the collision integrals.
    pub qmc_samples: usize,
    pub seed: u64,
}

impl Default for QuadratureSet {
    fn default() -> Self {
        Self {
            r_max: 50.0,
            radial_panels: 48,
            radial_order: 16,
            qmc_samples: 2_000_000,
            seed: 0x5eed_2024,
        }
    }
}

impl QuadratureSet {
    pub fn radial(&self) -> Rule1d {
        Rule1d::composite(0.0, self.r_max, self.radial_panels, self.radial_order)
    }

    /// Same rule with twice as many panels.
    pub fn radial_refined(&self) -> Rule1d {
        Rule1d::composite(0.0, self.r_max, 2 * self.radial_panels, self.radial_order)
    }

    /// Smallest radius where `r^p e^{-sqrt(1+r^2)}` drops below `tol` times
    /// its peak value. Used to size `r_max` for high-degree basis products.
    pub fn truncation_radius(power: f64, tol: f64) -> f64 {
        let log_f = |r: f64| power * r.max(1e-300).ln() - (1.0 + r * r).sqrt();
        let peak = power.max(1.0);
        let target = log_f(peak) + tol.ln();
        let mut lo = peak;
        let mut hi = peak + 10.0;
        while log_f(hi) > target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if log_f(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

const SOBOL_BITS: usize = 32;

// Joe-Kuo primitive polynomials (degree s, coefficients a) and initial
// direction numbers for dimensions 2..=8.
const SOBOL_TABLE: [(u32, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

/// Maximum dimension supported by [`SobolStream`].
pub const SOBOL_MAX_DIM: usize = SOBOL_TABLE.len() + 1;

/// Digitally shifted Sobol sequence. The shift is derived from `seed`, so a
/// (seed, index) pair always maps to the same point.
#[derive(Clone, Debug)]
pub struct SobolStream {
    dim: usize,
    directions: Vec<[u32; SOBOL_BITS]>,
    shift: Vec<u32>,
}

impl SobolStream {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!((1..=SOBOL_MAX_DIM).contains(&dim), "unsupported Sobol dimension {dim}");
        let mut directions = Vec::with_capacity(dim);
        let mut first = [0u32; SOBOL_BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1u32 << (SOBOL_BITS - 1 - k);
        }
        directions.push(first);
        for &(s, a, m) in SOBOL_TABLE.iter().take(dim - 1) {
            let s = s as usize;
            let mut v = [0u32; SOBOL_BITS];
            for k in 0..SOBOL_BITS {
                if k < s {
                    v[k] = m[k] << (SOBOL_BITS - 1 - k);
                } else {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for i in 1..s {
                        if (a >> (s - 1 - i)) & 1 == 1 {
                            x ^= v[k - i];
                        }
                    }
                    v[k] = x;
                }
            }
            directions.push(v);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.random::<u32>()).collect();
        Self { dim, directions, shift }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes point `index` (in `(0, 1)^dim`) to `out`.
    pub fn point(&self, index: u64, out: &mut [f64]) {
        // Gray-code ordering so consecutive indices differ by one direction.
        let gray = index ^ (index >> 1);
        for d in 0..self.dim {
            let mut x = 0u32;
            let mut g = gray;
            let mut k = 0;
            while g != 0 && k < SOBOL_BITS {
                if g & 1 == 1 {
                    x ^= self.directions[d][k];
                }
                g >>= 1;
                k += 1;
            }
            x ^= self.shift[d];
            out[d] = (x as f64 + 0.5) / 4_294_967_296.0;
        }
    }
}

/// Inverse-CDF sampler for the radial Maxwellian density
/// `4 pi r^2 e^{-sqrt(1+r^2)}` on `[0, r_max]`, piecewise linear in `r`.
#[derive(Clone, Debug)]
pub struct RadialSampler {
    h: f64,
    cdf: Vec<f64>,
}

impl RadialSampler {
    pub fn new(r_max: f64, cells: usize) -> Self {
        Self::with_proposal(r_max, cells, Self::density)
    }

    /// Draws `r` from the (unnormalized) `proposal` while keeping the
    /// Maxwellian density as the integration target.
    pub fn with_proposal(r_max: f64, cells: usize, proposal: impl Fn(f64) -> f64) -> Self {
        let h = r_max / cells as f64;
        let (x, w) = gauss_legendre(8);
        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for c in 0..cells {
            let lo = c as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                let r = lo + 0.5 * h * (xi + 1.0);
                acc += 0.5 * h * wi * proposal(r);
            }
            cdf.push(acc);
        }
        Self { h, cdf }
    }

    pub fn density(r: f64) -> f64 {
        4.0 * PI * r * r * (-(1.0 + r * r).sqrt()).exp()
    }

    /// Total mass of the proposal.
    pub fn mass(&self) -> f64 {
        *self.cdf.last().unwrap()
    }

    /// Maps `x in (0,1)` to `(r, weight)` with `E[weight * f(r)] = int f(r) density(r) dr`.
    pub fn sample(&self, x: f64) -> (f64, f64) {
        let target = x * self.mass();
        let idx = match self.cdf.binary_search_by(|c| c.partial_cmp(&target).unwrap()) {
            Ok(i) => i.min(self.cdf.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.cdf.len() - 2),
        };
        let (c0, c1) = (self.cdf[idx], self.cdf[idx + 1]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.5 };
        let r = (idx as f64 + frac) * self.h;
        let cell_pdf = (c1 - c0) / (self.h * self.mass());
        let weight = if cell_pdf > 0.0 { Self::density(r) / cell_pdf } else { 0.0 };
        (r, weight)
    }
}
