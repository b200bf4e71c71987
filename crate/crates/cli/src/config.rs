use relboltz::collision::ScatteringKernel;
use relboltz::galerkin::BasisConfig;
use relboltz::quadrature::QuadratureSet;
use relboltz::semigroup::{DecayConfig, G2Options, ScenarioKind};
use relboltz::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: ScatteringKernel,
    pub basis: BasisConfig,
    pub quadrature: QuadratureSet,
    pub spectrum: SpectrumConfig,
    pub decay: DecaySection,
    pub tolerances: Tolerances,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Upper end of the branch table; `None` uses the measured `tau0`.
    pub k_max: Option<f64>,
    pub k_points: usize,
    /// Wave-vector direction.
    pub axis: [f64; 3],
    /// The expansion fit uses `(0, fit_fraction * tau0]`.
    pub fit_fraction: f64,
    pub fit_points: usize,
    pub dispersion_points: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { k_max: None, k_points: 41, axis: [0.0, 0.0, 1.0], fit_fraction: 0.25, fit_points: 40, dispersion_points: 20 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySection {
    pub scenario: ScenarioKind,
    pub d0: f64,
    /// Support of the initial data in `|k|`; `None` uses the measured `tau0`.
    pub k_max: Option<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub fit_window: [f64; 2],
    pub cheb_nodes: usize,
    pub cutoff: f64,
    pub panel_order: usize,
    /// Number of `|k|` values, evenly spaced on `(0, tau0]`, for the remainder rates.
    pub g2_points: usize,
    pub g2_samples: usize,
    pub g2_horizon: f64,
    pub g2_t_points: usize,
}

impl Default for DecaySection {
    fn default() -> Self {
        let d = DecayConfig::default();
        let g = G2Options::default();
        Self {
            scenario: ScenarioKind::Generic,
            d0: 1.0,
            k_max: None,
            t_min: d.t_min,
            t_max: d.t_max,
            t_points: d.t_points,
            fit_window: d.fit_window,
            cheb_nodes: d.cheb_nodes,
            cutoff: d.cutoff,
            panel_order: d.panel_order,
            g2_points: 10,
            g2_samples: g.samples,
            g2_horizon: g.horizon,
            g2_t_points: g.t_points,
        }
    }
}

impl DecaySection {
    pub fn series(&self, max_ci: f64) -> DecayConfig {
        DecayConfig {
            t_min: self.t_min,
            t_max: self.t_max,
            t_points: self.t_points,
            fit_window: self.fit_window,
            cheb_nodes: self.cheb_nodes,
            cutoff: self.cutoff,
            panel_order: self.panel_order,
            max_ci,
        }
    }

    pub fn g2(&self, seed: u64) -> G2Options {
        G2Options { samples: self.g2_samples, seed, horizon: self.g2_horizon, t_points: self.g2_t_points, ..G2Options::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub moments: f64,
    pub nu: f64,
    /// Largest accepted seed discrepancy relative to `max |L|`.
    pub assembly: f64,
    /// Eigenvalues below `null_space * |L|` count as zero.
    pub null_space: f64,
    pub symmetry: f64,
    pub first_order: f64,
    pub second_order: f64,
    pub min_order: f64,
    pub dispersion: f64,
    pub dispersion_residual: f64,
    pub scenario: f64,
    /// Largest gap between the interpolated modal integrand and direct propagation.
    pub modal: f64,
    pub slope: f64,
    pub max_ci: f64,
    pub g2_spread: f64,
    pub additivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            moments: 1e-8,
            nu: 1e-6,
            assembly: 5e-2,
            null_space: 1e-6,
            symmetry: 1e-8,
            first_order: 0.02,
            second_order: 0.05,
            min_order: 2.5,
            dispersion: 1e-6,
            dispersion_residual: 1e-10,
            scenario: 1e-8,
            modal: 1e-6,
            slope: 0.05,
            max_ci: 0.1,
            g2_spread: 0.5,
            additivity: 1e-12,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 16] {
        [
            ("moments", self.moments),
            ("nu", self.nu),
            ("assembly", self.assembly),
            ("null_space", self.null_space),
            ("symmetry", self.symmetry),
            ("first_order", self.first_order),
            ("second_order", self.second_order),
            ("min_order", self.min_order),
            ("dispersion", self.dispersion),
            ("dispersion_residual", self.dispersion_residual),
            ("scenario", self.scenario),
            ("modal", self.modal),
            ("slope", self.slope),
            ("max_ci", self.max_ci),
            ("g2_spread", self.g2_spread),
            ("additivity", self.additivity),
        ]
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let q = &self.quadrature;
        let s = &self.spectrum;
        let d = &self.decay;
        let counts = [
            ("basis.n_radial", self.basis.n_radial),
            ("basis.l_max", self.basis.l_max),
            ("basis.m_max", self.basis.m_max),
            ("quadrature.qmc_samples", q.qmc_samples),
            ("quadrature.radial_panels", q.radial_panels),
            ("quadrature.radial_order", q.radial_order),
            ("spectrum.k_points", s.k_points),
            ("spectrum.fit_points", s.fit_points),
            ("spectrum.dispersion_points", s.dispersion_points),
            ("decay.t_points", d.t_points),
            ("decay.cheb_nodes", d.cheb_nodes),
            ("decay.panel_order", d.panel_order),
            ("decay.g2_points", d.g2_points),
            ("decay.g2_samples", d.g2_samples),
            ("decay.g2_t_points", d.g2_t_points),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(invalid(format!("{name} must be at least 1")));
            }
        }
        if s.k_points < 2 {
            return Err(invalid("spectrum.k_points must be at least 2"));
        }
        if !(q.r_max > 0.0) {
            return Err(invalid("quadrature.r_max must be positive"));
        }
        if self.basis.r_max.is_some_and(|r| !(r > 0.0)) {
            return Err(invalid("basis.r_max must be positive"));
        }
        for (name, v) in [("spectrum.k_max", s.k_max), ("decay.k_max", d.k_max)] {
            if v.is_some_and(|x| !(x > 0.0)) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if !(s.fit_fraction > 0.0 && s.fit_fraction <= 1.0) {
            return Err(invalid("spectrum.fit_fraction must lie in (0, 1]"));
        }
        if s.axis.iter().all(|x| *x == 0.0) {
            return Err(invalid("spectrum.axis must be nonzero"));
        }
        if !(d.d0 > 0.0 && d.t_min > 0.0 && d.t_max > d.t_min && d.cutoff > 0.0 && d.g2_horizon > 0.0) {
            return Err(invalid("decay: d0, t_min, cutoff and g2_horizon must be positive and t_max > t_min"));
        }
        if !(d.fit_window[0] > 0.0 && d.fit_window[1] > d.fit_window[0]) {
            return Err(invalid("decay.fit_window must be an increasing pair of positive times"));
        }
        for (name, v) in self.tolerances.entries() {
            if !(v > 0.0) {
                return Err(invalid(format!("tolerances.{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Hash of the inputs that determine the collision matrices.
    pub fn assembly_key(&self) -> String {
        let v = serde_json::json!({
            "kernel": self.kernel,
            "basis": self.basis,
            "quadrature": self.quadrature,
            "assembly": self.tolerances.assembly,
            "nu": self.tolerances.nu,
            "axis": self.spectrum.axis,
        });
        sha256_hex(v.to_string().as_bytes())
    }

    /// Hash of the whole configuration except the output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
