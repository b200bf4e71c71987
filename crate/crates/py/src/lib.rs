//! Python bindings: moments, rate fits, matrix containers and a small
//! end-to-end spectrum run.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use relboltz::collision::{assemble_l, spectral_gap, AssemblyOptions, ScatteringKernel};
use relboltz::galerkin::{streaming_matrix, BasisConfig, GalerkinBasis};
use relboltz::io::{decode, MatrixData};
use relboltz::maxwellian::{bessel_moments, compute_moments, fluid_constants, null_space_basis};
use relboltz::quadrature::QuadratureSet;
use relboltz::semigroup::fit_rate as core_fit_rate;
use relboltz::spectral::{eigen_branches, measure_tau0, BranchOptions, SpectralModel};
use relboltz::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Branch table of a small model, used by `spectrum`.
pub struct SmallSpectrum {
    pub dim: usize,
    pub muhat: f64,
    pub tau0: f64,
    pub kgrid: Vec<f64>,
    /// `branches[k][j]` as `(re, im)`, branches ordered -1, 0, 1, 2, 3.
    pub branches: Vec<[(f64, f64); 5]>,
}

pub fn small_spectrum(n_radial: usize, l_max: usize, samples: usize, k_points: usize) -> relboltz::Result<SmallSpectrum> {
    if k_points < 2 {
        return Err(Error::InvalidConfig("k_points must be at least 2".into()));
    }
    let quad = QuadratureSet { qmc_samples: samples, ..Default::default() };
    let basis = GalerkinBasis::build(&BasisConfig { n_radial, l_max, m_max: 1, r_max: None })?;
    let m = compute_moments(&quad, 1e-8)?;
    let psi = null_space_basis(&m, &basis)?;
    let fc = fluid_constants(&m, &quad)?;
    let opts = AssemblyOptions { with_nu: false, rtol: 1.0, ..Default::default() };
    let mut mats = assemble_l(&basis, &ScatteringKernel::default(), &quad, &opts)?;
    mats.muhat = Some(spectral_gap(&mats, &psi)?.muhat);
    let model = SpectralModel::new(&basis, &mats, &psi, &fc, streaming_matrix(&basis, [0.0, 0.0, 1.0])?)?;
    let tau0 = measure_tau0(&model, 1e-3 * model.muhat, 1e4 * model.muhat)?.tau0;
    let kgrid: Vec<f64> = (0..k_points).map(|i| tau0 * i as f64 / (k_points - 1) as f64).collect();
    let table = eigen_branches(&model, &kgrid, &BranchOptions::default())?;
    let branches = table.lambda.iter().map(|l| l.map(|z| (z.re, z.im))).collect();
    Ok(SmallSpectrum { dim: model.dim(), muhat: model.muhat, tau0, kgrid, branches })
}

/// Maxwellian moments, fluid constants and the closed-form Bessel values.
#[pyfunction]
#[pyo3(signature = (rtol = 1e-8))]
fn moments(py: Python<'_>, rtol: f64) -> PyResult<Bound<'_, PyDict>> {
    let quad = QuadratureSet::default();
    let m = compute_moments(&quad, rtol).map_err(to_py)?;
    let fc = fluid_constants(&m, &quad).map_err(to_py)?;
    let (bp0, bp2) = bessel_moments();
    let d = PyDict::new(py);
    for (k, v) in [
        ("p0", m.p0),
        ("p1", m.p1),
        ("p2", m.p2),
        ("p3", m.p3),
        ("a", fc.a),
        ("b", fc.b),
        ("sound_speed", fc.sound_speed()),
        ("bessel_p0", bp0),
        ("bessel_p2", bp2),
    ] {
        d.set_item(k, v)?;
    }
    Ok(d)
}

/// Slope, intercept and 95% half-width of `log norm` against `log(1 + t)`.
#[pyfunction]
fn fit_rate(t: Vec<f64>, norms: Vec<f64>, window: (f64, f64)) -> PyResult<(f64, f64, f64)> {
    if t.len() != norms.len() {
        return Err(PyValueError::new_err("t and norms differ in length"));
    }
    let f = core_fit_rate(&t, &norms, [window.0, window.1]).map_err(to_py)?;
    Ok((f.slope, f.intercept, f.ci))
}

/// Reads a matrix container: `(dim, kind, seed, kernel_id, data)` with
/// row-major data, complex entries interleaved.
#[pyfunction]
fn read_matrix(path: &str) -> PyResult<(u32, String, u64, String, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
    let (h, data) = decode(&bytes).map_err(to_py)?;
    let n = h.dim as usize;
    let (kind, flat) = match data {
        MatrixData::Real(m) => ("real", (0..n * n).map(|i| m[(i / n, i % n)]).collect()),
        MatrixData::Complex(m) => ("complex", (0..n * n).flat_map(|i| [m[(i / n, i % n)].re, m[(i / n, i % n)].im]).collect()),
    };
    Ok((h.dim, kind.into(), h.seed, h.kernel_id, flat))
}

/// Assembles a small model and returns its five fluid branches on `[0, tau0]`.
#[pyfunction]
#[pyo3(signature = (n_radial = 4, l_max = 3, samples = 20000, k_points = 11))]
fn spectrum(py: Python<'_>, n_radial: usize, l_max: usize, samples: usize, k_points: usize) -> PyResult<Bound<'_, PyDict>> {
    let s = py.detach(|| small_spectrum(n_radial, l_max, samples, k_points)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("dim", s.dim)?;
    d.set_item("muhat", s.muhat)?;
    d.set_item("tau0", s.tau0)?;
    d.set_item("kgrid", s.kgrid)?;
    d.set_item("branches", s.branches.iter().map(|b| b.to_vec()).collect::<Vec<_>>())?;
    Ok(d)
}

#[pymodule]
fn relboltz_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", relboltz::VERSION)?;
    m.add_function(wrap_pyfunction!(moments, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(read_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_spectrum_has_five_branches_from_zero() {
        let s = small_spectrum(3, 2, 5000, 5).unwrap();
        assert_eq!(s.kgrid.len(), 5);
        assert_eq!(s.kgrid[0], 0.0);
        assert!(s.muhat > 0.0 && s.tau0 > 0.0);
        assert!(s.branches[0].iter().all(|(re, im)| re.abs() < 1e-8 && im.abs() < 1e-8));
        assert!(s.branches[4].iter().all(|(re, _)| *re < 0.0));
        assert!(small_spectrum(3, 2, 5000, 1).is_err());
    }
}
