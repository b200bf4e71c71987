use crate::config::RunConfig;
use crate::manifest::Output;
use relboltz::collision::{assemble_l, spectral_gap, AssemblyOptions, CollisionMatrices, GapReport};
use relboltz::faer::{c64, Mat};
use relboltz::galerkin::{build_projectors, streaming_matrix, GalerkinBasis, StreamingMatrix};
use relboltz::io::{decode, encode_real, CsvTable, Cell, MatrixData};
use relboltz::linalg::{max_abs, sym_eigen};
use relboltz::maxwellian::{bessel_moments, compute_moments, fluid_constants, null_space_basis, FluidConstants, MaxwellianMoments, NullSpaceBasis};
use relboltz::semigroup::{decay_experiment, g2_decay_rates, DecayScenario, DecaySeries, G2RateReport, ScenarioHygiene, ScenarioKind};
use relboltz::spectral::{
    d1, dispersion_solve, eigen_branches, expansion_validation, measure_tau0, BranchOptions, DispersionOptions, DispersionResult,
    EigenBranchTable, ExpansionReport, SpectralModel, SpectrumSummary, BRANCH_IDS,
};
use relboltz::{Error, Result};
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const CODE_CONFIG: i32 = 1;
pub const CODE_MOMENTS: i32 = 2;
pub const CODE_ASSEMBLY: i32 = 3;
pub const CODE_SPECTRUM: i32 = 4;
pub const CODE_DECAY: i32 = 5;

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub stage: String,
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn from_error(stage: &str, code: i32, err: &Error) -> Self {
        let code = if matches!(err, Error::InvalidConfig(_)) { CODE_CONFIG } else { code };
        let debug = format!("{err:?}");
        let kind = debug.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string();
        Self { stage: stage.into(), code, kind, message: err.to_string() }
    }
}

/// One acceptance invariant of a stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// `<=`, `<`, `>=`, `>` or `==`.
    pub relation: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, relation: "<=".into(), pass: value <= limit }
    }

    pub fn below(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, relation: "<".into(), pass: value < limit }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, relation: ">=".into(), pass: value >= limit }
    }

    pub fn above(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, relation: ">".into(), pass: value > limit }
    }

    pub fn equals(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, relation: "==".into(), pass: value == limit }
    }
}

/// Mutable state of one command.
pub struct Run {
    pub cfg: RunConfig,
    pub out: Output,
    pub failures: Vec<Failure>,
    pub checks: Vec<(String, Check)>,
}

impl Run {
    pub fn new(cfg: RunConfig, out: Output) -> Self {
        Self { cfg, out, failures: Vec::new(), checks: Vec::new() }
    }

    fn record(&mut self, stage: &str, code: i32, checks: &[Check]) {
        for c in checks {
            if !c.pass {
                self.failures.push(Failure {
                    stage: stage.into(),
                    code,
                    kind: "AcceptanceCheck".into(),
                    message: format!("{}: {:.6e} {} {:.6e} does not hold", c.name, c.value, c.relation, c.limit),
                });
            }
            self.checks.push((stage.into(), c.clone()));
        }
    }

    /// Runs `f`, timing it and converting an error into a failure with `code`.
    pub fn stage<T>(&mut self, name: &str, code: i32, f: impl FnOnce(&mut Self) -> Result<T>) -> Option<T> {
        let start = Instant::now();
        let r = f(self);
        self.out.manifest.timings.insert(name.into(), start.elapsed().as_secs_f64());
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.failures.push(Failure::from_error(name, code, &e));
                None
            }
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.failures.first().map(|f| f.code).unwrap_or(0)
    }
}

fn csv_bytes(t: CsvTable) -> Result<Vec<u8>> {
    t.into_bytes()
}

// ---------------------------------------------------------------- moments

pub struct MomentsStage {
    pub moments: MaxwellianMoments,
    pub consts: FluidConstants,
}

#[derive(Serialize)]
struct BesselCheck {
    p0: f64,
    p2: f64,
    delta_p0: f64,
    delta_p2: f64,
}

#[derive(Serialize)]
struct MomentsReport<'a> {
    moments: &'a MaxwellianMoments,
    constants: &'a FluidConstants,
    sound_speed: f64,
    oracle: BesselCheck,
    rtol: f64,
    checks: &'a [Check],
}

pub fn moments(run: &mut Run) -> Result<MomentsStage> {
    let rtol = run.cfg.tolerances.moments;
    let moments = compute_moments(&run.cfg.quadrature, rtol)?;
    let consts = fluid_constants(&moments, &run.cfg.quadrature)?;
    let (p0, p2) = bessel_moments();
    let oracle = BesselCheck { p0, p2, delta_p0: (moments.p0 - p0).abs() / p0, delta_p2: (moments.p2 - p2).abs() / p2 };
    let checks = vec![
        Check::at_most("p0_vs_bessel", oracle.delta_p0, rtol),
        Check::at_most("p2_vs_bessel", oracle.delta_p2, rtol),
        Check::above("a", consts.a, 0.0),
        Check::above("b", consts.b, 0.0),
    ];
    let report = MomentsReport { moments: &moments, constants: &consts, sound_speed: consts.sound_speed(), oracle, rtol, checks: &checks };
    run.out.write_json("moments.json", &report, "moments", &run.cfg.hash())?;
    run.record("moments", CODE_MOMENTS, &checks);
    Ok(MomentsStage { moments, consts })
}

// ---------------------------------------------------------------- assembly

pub struct Assembled {
    pub basis: GalerkinBasis,
    pub psi: NullSpaceBasis,
    pub mats: CollisionMatrices,
    pub streaming: StreamingMatrix,
    pub gap: Option<GapReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AssemblyReport {
    dim: usize,
    kernel_id: String,
    seed: u64,
    samples: usize,
    /// Largest entrywise half-difference of the two shifted estimates.
    lmat_error: f64,
    max_abs: f64,
    /// Largest `|eigenvalue|` of `L`.
    norm: f64,
    null_count: usize,
    null_residual: f64,
    muhat: Option<f64>,
    c0hat: f64,
    c1hat: f64,
    nu_table: Vec<(f64, f64)>,
    /// Eight eigenvalues of `L` closest to zero, descending.
    top_eigenvalues: Vec<f64>,
    checks: Vec<Check>,
}

const ASSEMBLY_FILES: [&str; 4] = ["L.rbsm", "V.rbsm", "P0.rbsm", "assembly.json"];

fn load_real(bytes: &[u8]) -> Result<Mat<f64>> {
    match decode(bytes)?.1 {
        MatrixData::Real(m) => Ok(m),
        MatrixData::Complex(_) => Err(Error::Format("expected a real matrix".into())),
    }
}

pub fn assemble(run: &mut Run, mom: &MomentsStage) -> Result<Assembled> {
    let cfg = run.cfg.clone();
    let key = cfg.assembly_key();
    let basis = GalerkinBasis::build(&cfg.basis)?;
    let psi = null_space_basis(&mom.moments, &basis)?;
    let staged: Option<Vec<Vec<u8>>> = ASSEMBLY_FILES.iter().map(|f| run.out.staged(f, &key)).collect();
    let (mats, streaming, report) = match staged {
        Some(files) => {
            let lmat = load_real(&files[0])?;
            let vmat = load_real(&files[1])?;
            let report: AssemblyReport =
                serde_json::from_slice(&files[3]).map_err(|e| Error::Format(format!("assembly.json: {e}")))?;
            if lmat.nrows() != basis.dim() {
                return Err(Error::Format("staged matrices do not match the basis".into()));
            }
            let mats = CollisionMatrices {
                nmat: Mat::zeros(lmat.nrows(), lmat.ncols()),
                lmat,
                radial_blocks: Vec::new(),
                lmat_error: report.lmat_error,
                c0hat: report.c0hat,
                c1hat: report.c1hat,
                muhat: report.muhat,
                nu_table: report.nu_table.clone(),
                seed: report.seed,
                samples: report.samples,
            };
            let axis = streaming_matrix(&basis, cfg.spectrum.axis)?.axis;
            (mats, StreamingMatrix { axis, vmat }, report)
        }
        None => {
            let opts = AssemblyOptions { rtol: cfg.tolerances.assembly, nu_rtol: cfg.tolerances.nu, with_nu: false, ..Default::default() };
            let mut mats = assemble_l(&basis, &cfg.kernel, &cfg.quadrature, &opts)?;
            let streaming = streaming_matrix(&basis, cfg.spectrum.axis)?;
            let (eig, _) = sym_eigen(&mats.lmat)?;
            let norm = eig.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let null_count = eig.iter().filter(|x| x.abs() < cfg.tolerances.null_space * norm).count();
            let null_residual = psi
                .psi
                .iter()
                .map(|p| relboltz::linalg::matvec(&mats.lmat, p).iter().map(|x| x * x).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            let mut checks = Vec::new();
            if basis.dim() > 5 {
                checks.push(Check::equals("null_space_dimension", null_count as f64, 5.0));
                match spectral_gap(&mats, &psi) {
                    Ok(g) => {
                        mats.muhat = Some(g.muhat);
                        checks.push(Check::above("muhat", g.muhat, 0.0));
                    }
                    Err(e) => run.failures.push(Failure::from_error("assemble", CODE_ASSEMBLY, &e)),
                }
            }
            let mut top: Vec<f64> = eig.iter().rev().take(8).cloned().collect();
            top.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let report = AssemblyReport {
                dim: basis.dim(),
                kernel_id: cfg.kernel.id(),
                seed: cfg.quadrature.seed,
                samples: cfg.quadrature.qmc_samples,
                lmat_error: mats.lmat_error,
                max_abs: max_abs(&mats.lmat),
                norm,
                null_count,
                null_residual,
                muhat: mats.muhat,
                c0hat: mats.c0hat,
                c1hat: mats.c1hat,
                nu_table: mats.nu_table.clone(),
                top_eigenvalues: top,
                checks,
            };
            let id = cfg.kernel.id();
            let seed = cfg.quadrature.seed;
            let p0 = build_projectors(&psi).p0;
            run.out.write("L.rbsm", &encode_real(&mats.lmat, seed, &id)?, "assemble", &key)?;
            run.out.write("V.rbsm", &encode_real(&streaming.vmat, seed, &id)?, "assemble", &key)?;
            run.out.write("P0.rbsm", &encode_real(&p0, seed, &id)?, "assemble", &key)?;
            run.out.write_json("basis.json", &basis.descriptor(), "assemble", &key)?;
            let mut nu = CsvTable::new(&["speed", "nu", "nu_over_weight"])?;
            for &(r, v) in &mats.nu_table {
                nu.row(&[Cell::Float(r), Cell::Float(v), Cell::Float(v / (1.0 + r * r).sqrt().sqrt())])?;
            }
            run.out.write("nu.csv", &csv_bytes(nu)?, "assemble", &key)?;
            run.out.write_json("assembly.json", &report, "assemble", &key)?;
            (mats, streaming, report)
        }
    };
    run.record("assemble", CODE_ASSEMBLY, &report.checks);
    let gap = mats.muhat.map(|muhat| GapReport { muhat, eigenvalues: Vec::new(), near_zero: report.null_count, null_residual: report.null_residual });
    Ok(Assembled { basis, psi, mats, streaming, gap })
}

// ---------------------------------------------------------------- spectral model

pub struct ModelStage {
    pub model: SpectralModel,
    pub summary: SpectrumSummary,
}

pub fn model(_run: &mut Run, mom: &MomentsStage, asm: &Assembled) -> Result<ModelStage> {
    if asm.mats.muhat.is_none() {
        return Err(Error::GapCollapse { count: asm.gap.as_ref().map(|g| g.near_zero).unwrap_or(0) });
    }
    let model = SpectralModel::new(&asm.basis, &asm.mats, &asm.psi, &mom.consts, asm.streaming.clone())?;
    let k_start = 1e-3 * model.muhat;
    let summary = measure_tau0(&model, k_start, 1e4 * model.muhat)?;
    Ok(ModelStage { model, summary })
}

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

// ---------------------------------------------------------------- spectrum

#[derive(Serialize)]
struct BranchReport<'a> {
    dim: usize,
    muhat: f64,
    summary: &'a SpectrumSummary,
    k_max: f64,
    kgrid: &'a [f64],
    count_above: &'a [usize],
    max_re_rest: &'a [f64],
    min_overlap: &'a [f64],
    shear_degeneracy: f64,
    acoustic_conjugacy: f64,
    max_re_positive_k: f64,
    checks: &'a [Check],
}

pub fn spectrum(run: &mut Run, ms: &ModelStage) -> Result<EigenBranchTable> {
    let cfg = run.cfg.clone();
    let key = cfg.hash();
    let tol = &cfg.tolerances;
    let tau0 = ms.summary.tau0;
    let k_max = cfg.spectrum.k_max.unwrap_or(tau0);
    let grid = uniform(0.0, k_max, cfg.spectrum.k_points);
    let table = eigen_branches(&ms.model, &grid, &BranchOptions::default())?;
    let mut shear = 0.0f64;
    let mut conj = 0.0f64;
    let mut max_re = f64::NEG_INFINITY;
    let mut miscount = 0usize;
    for (i, &k) in grid.iter().enumerate() {
        let l = table.lambda[i];
        shear = shear.max((l[3] - l[4]).norm());
        conj = conj.max((l[0] - l[2].conj()).norm());
        if k > 0.0 {
            max_re = max_re.max(l.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max));
        }
        if k <= tau0 && table.count_above[i] != 5 {
            miscount += 1;
        }
    }
    let mut checks = vec![
        Check::equals("five_branch_miscount", miscount as f64, 0.0),
        Check::at_most("shear_degeneracy", shear, tol.symmetry),
        Check::at_most("acoustic_conjugacy", conj, tol.symmetry),
        Check::below("max_re_branches_k_positive", max_re, 0.0),
    ];

    let mut csv = CsvTable::new(&["k", "branch", "re", "im", "residual"])?;
    for (i, &k) in grid.iter().enumerate() {
        for (j, &b) in BRANCH_IDS.iter().enumerate() {
            let z = table.lambda[i][j];
            csv.row(&[Cell::Float(k), Cell::Int(b as i64), Cell::Float(z.re), Cell::Float(z.im), Cell::Float(table.residual[i][j])])?;
        }
    }
    run.out.write("branches.csv", &csv_bytes(csv)?, "spectrum", &key)?;

    let k_fit = cfg.spectrum.fit_fraction * tau0;
    let fine = uniform(0.0, k_fit, cfg.spectrum.fit_points + 1);
    let fine_table = eigen_branches(&ms.model, &fine, &BranchOptions::default())?;
    let expansion = expansion_validation(&fine_table, &ms.model.pert, k_fit)?;
    let exp_checks = vec![
        Check::at_most("first_order_error", expansion.max_c1_error(), tol.first_order),
        Check::at_most("second_order_error", expansion.max_c2_error(), tol.second_order),
        Check::at_least("remainder_order", expansion.min_order(), tol.min_order),
    ];
    #[derive(Serialize)]
    struct ExpansionOut<'a> {
        a: [f64; 5],
        report: &'a ExpansionReport,
        checks: &'a [Check],
    }
    run.out.write_json("expansion.json", &ExpansionOut { a: ms.model.pert.a, report: &expansion, checks: &exp_checks }, "spectrum", &key)?;
    checks.extend(exp_checks);

    let report = BranchReport {
        dim: ms.model.dim(),
        muhat: ms.model.muhat,
        summary: &ms.summary,
        k_max,
        kgrid: &grid,
        count_above: &table.count_above,
        max_re_rest: &table.max_re_rest,
        min_overlap: &table.min_overlap,
        shear_degeneracy: shear,
        acoustic_conjugacy: conj,
        max_re_positive_k: max_re,
        checks: &checks,
    };
    run.out.write_json("branches.json", &report, "spectrum", &key)?;
    run.record("spectrum", CODE_SPECTRUM, &checks);
    Ok(table)
}

// ---------------------------------------------------------------- dispersion

const ROOT_NAMES: [&str; 4] = ["-1", "0", "1", "shear"];

/// Row `(slot, branch index)` pairs compared with the eigen-branches.
const ROOT_BRANCHES: [(usize, usize); 5] = [(0, 0), (1, 1), (2, 2), (3, 3), (3, 4)];

/// `max |D1(beta, 0) - prod (beta + i u_j)|` over a few test points.
pub fn factorization_error(model: &SpectralModel) -> Result<f64> {
    let u = model.pert.u;
    let mut worst = 0.0f64;
    for beta in [c64::new(0.3, -0.2), c64::new(-1.0, 2.0), c64::new(0.0, 0.1), c64::new(0.05, -0.5)] {
        let d = d1(model, beta, 0.0)?;
        let p = (beta + c64::new(0.0, u[0])) * (beta + c64::new(0.0, u[1])) * (beta + c64::new(0.0, u[2]));
        worst = worst.max((d - p).norm());
    }
    Ok(worst)
}

pub fn dispersion(run: &mut Run, ms: &ModelStage) -> Result<DispersionResult> {
    let cfg = run.cfg.clone();
    let key = cfg.hash();
    let tau0 = ms.summary.tau0;
    let grid = uniform(0.0, tau0, cfg.spectrum.dispersion_points + 1);
    let disp = dispersion_solve(&ms.model, &grid, &DispersionOptions { residual_tol: cfg.tolerances.dispersion_residual, ..Default::default() })?;
    let table = eigen_branches(&ms.model, &grid, &BranchOptions::default())?;
    let rel = disp.compare(&table)?;
    let max_res = disp.residuals.iter().flatten().cloned().fold(0.0, f64::max);
    let fact = factorization_error(&ms.model)?;
    let checks = vec![
        Check::at_most("relative_gap_to_eigensolve", rel, cfg.tolerances.dispersion),
        Check::at_most("max_residual", max_res, cfg.tolerances.dispersion_residual),
        Check::at_most("d1_factorization", fact, 1e-12),
    ];
    let mut csv = CsvTable::new(&["s", "root", "branch", "beta_re", "beta_im", "residual", "iterations", "relative_gap"])?;
    for (i, &s) in grid.iter().enumerate() {
        for &(slot, b) in &ROOT_BRANCHES {
            let beta = disp.roots[i][slot];
            let lam = table.lambda[i][b];
            let gap = if s == 0.0 { 0.0 } else { (beta * s - lam).norm() / lam.norm() };
            csv.row(&[
                Cell::Float(s),
                Cell::Text(ROOT_NAMES[slot]),
                Cell::Int(BRANCH_IDS[b] as i64),
                Cell::Float(beta.re),
                Cell::Float(beta.im),
                Cell::Float(disp.residuals[i][slot]),
                Cell::Int(disp.iterations[i][slot] as i64),
                Cell::Float(gap),
            ])?;
        }
    }
    run.out.write("dispersion.csv", &csv_bytes(csv)?, "dispersion", &key)?;
    #[derive(Serialize)]
    struct DispersionOut<'a> {
        tau0: f64,
        result: &'a DispersionResult,
        checks: &'a [Check],
    }
    run.out.write_json("dispersion.json", &DispersionOut { tau0, result: &disp, checks: &checks }, "dispersion", &key)?;
    run.record("dispersion", CODE_SPECTRUM, &checks);
    Ok(disp)
}

// ---------------------------------------------------------------- decay

#[derive(Serialize)]
struct ObservableOut {
    name: String,
    alpha: u32,
    expected_rate: f64,
    slope: f64,
    ci: f64,
    intercept: f64,
    points: usize,
    witness: [f64; 2],
}

#[derive(Serialize)]
struct ScenarioOut {
    kind: ScenarioKind,
    d0: f64,
    k_max: f64,
    k_nodes: usize,
    fit_window: [f64; 2],
    modal_check: f64,
    hygiene: ScenarioHygiene,
    observables: Vec<ObservableOut>,
    checks: Vec<Check>,
}

pub fn decay(run: &mut Run, ms: &ModelStage, kinds: &[ScenarioKind]) -> Result<Vec<DecaySeries>> {
    let cfg = run.cfg.clone();
    let key = cfg.hash();
    let tol = cfg.tolerances.clone();
    let tau0 = ms.summary.tau0;
    let k_max = cfg.decay.k_max.unwrap_or(tau0);
    let series_cfg = cfg.decay.series(tol.max_ci);
    let mut all = Vec::new();
    let mut outs = Vec::new();
    let mut csv = CsvTable::new(&["scenario", "t", "observable", "norm", "witness"])?;
    let mut plot = String::new();
    for &kind in kinds {
        let scenario = DecayScenario::build(kind, cfg.decay.d0, k_max, &ms.model)?;
        let h = &scenario.hygiene;
        let mut checks = match kind {
            ScenarioKind::Generic => vec![
                Check::at_most("transverse_part", h.transverse, tol.scenario),
                Check::at_most("fluid_relation", h.fluid_relation, tol.scenario),
            ],
            ScenarioKind::Microscopic => vec![
                Check::at_most("macroscopic_part", h.macro_part, tol.scenario),
                Check::at_most("micro_relation", h.micro_relation, tol.scenario),
            ],
        };
        checks.push(Check::above("leading_pairing", h.lead, 0.0));
        let series = decay_experiment(&ms.model, &scenario, &series_cfg, tau0)?;
        checks.push(Check::at_most("modal_check", series.modal_check, tol.modal));
        let name = match kind {
            ScenarioKind::Generic => "generic",
            ScenarioKind::Microscopic => "microscopic",
        };
        let mut observables = Vec::new();
        for o in &series.observables {
            checks.push(Check::at_most(&format!("{}_slope_error", o.name), (o.fit.slope - o.expected_rate).abs(), tol.slope));
            checks.push(Check::at_most(&format!("{}_slope_ci", o.name), o.fit.ci, tol.max_ci));
            checks.push(Check::above(&format!("{}_witness_min", o.name), o.witness[0], 0.0));
            observables.push(ObservableOut {
                name: o.name.clone(),
                alpha: o.alpha,
                expected_rate: o.expected_rate,
                slope: o.fit.slope,
                ci: o.fit.ci,
                intercept: o.fit.intercept,
                points: o.fit.points,
                witness: o.witness,
            });
            for (t, n) in series.tgrid.iter().zip(&o.norms) {
                let w = (1.0 + t).powf(-o.expected_rate) * n;
                csv.row(&[Cell::Text(name), Cell::Float(*t), Cell::Text(&o.name), Cell::Float(*n), Cell::Float(w)])?;
            }
        }
        if !plot.is_empty() {
            plot.push_str("\n\n");
        }
        plot.push_str(&format!("# scenario {name}\n# t"));
        for o in &series.observables {
            plot.push(' ');
            plot.push_str(&o.name);
        }
        plot.push('\n');
        for (i, t) in series.tgrid.iter().enumerate() {
            plot.push_str(&relboltz::io::fmt_f64(*t));
            for o in &series.observables {
                plot.push(' ');
                plot.push_str(&relboltz::io::fmt_f64(o.norms[i]));
            }
            plot.push('\n');
        }
        run.record("decay", CODE_DECAY, &checks);
        outs.push(ScenarioOut {
            kind,
            d0: scenario.d0,
            k_max,
            k_nodes: series.k_nodes,
            fit_window: series.fit_window,
            modal_check: series.modal_check,
            hygiene: scenario.hygiene.clone(),
            observables,
            checks,
        });
        all.push(series);
    }
    run.out.write("decay.csv", &csv_bytes(csv)?, "decay", &key)?;
    run.out.write("decay_plot.dat", plot.as_bytes(), "decay", &key)?;
    #[derive(Serialize)]
    struct SlopesOut<'a> {
        tau0: f64,
        scenarios: &'a [ScenarioOut],
    }
    run.out.write_json("slopes.json", &SlopesOut { tau0, scenarios: &outs }, "decay", &key)?;
    Ok(all)
}

pub fn remainder(run: &mut Run, ms: &ModelStage) -> Result<G2RateReport> {
    let cfg = run.cfg.clone();
    let key = cfg.hash();
    let tau0 = ms.summary.tau0;
    let n = cfg.decay.g2_points;
    let kvals: Vec<f64> = (1..=n).map(|i| tau0 * i as f64 / n as f64).collect();
    let g2 = g2_decay_rates(&ms.model, &kvals, tau0, &cfg.decay.g2(cfg.quadrature.seed))?;
    let checks = vec![
        Check::above("sigma0", g2.sigma0, 0.0),
        Check::at_most("rate_spread", g2.spread, cfg.tolerances.g2_spread),
        Check::at_most("additivity", g2.additivity, cfg.tolerances.additivity),
    ];
    #[derive(Serialize)]
    struct G2Out<'a> {
        tau0: f64,
        report: &'a G2RateReport,
        checks: &'a [Check],
    }
    run.out.write_json("g2.json", &G2Out { tau0, report: &g2, checks: &checks }, "decay", &key)?;
    run.record("decay", CODE_DECAY, &checks);
    Ok(g2)
}
