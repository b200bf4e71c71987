//! End-to-end acceptance suite at the default configuration.
//!
//! Prints one PASS/FAIL line per criterion and fails if any criterion fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relboltz::collision::{assemble_l, spectral_gap, AssemblyOptions, CollisionMatrices, ScatteringKernel};
use relboltz::faer::c64;
use relboltz::galerkin::{streaming_matrix, BasisConfig, GalerkinBasis};
use relboltz::linalg::{dot, matvec, norm_c, sym_eigen};
use relboltz::maxwellian::{compute_moments, fluid_constants, null_space_basis, FluidConstants, NullSpaceBasis};
use relboltz::quadrature::QuadratureSet;
use relboltz::semigroup::{decay_experiment, g2_decay_rates, split_g1_g2, DecayConfig, DecayScenario, G2Options, Propagator, ScenarioKind};
use relboltz::spectral::{
    d1, dispersion_solve, eigen_branches, expansion_validation, measure_tau0, BranchOptions, DispersionOptions, SpectralModel,
};
use std::path::Path;
use std::time::Instant;

struct Outcome {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

struct Assembled {
    basis: GalerkinBasis,
    psi: NullSpaceBasis,
    mats: CollisionMatrices,
    assembly_secs: f64,
}

fn assemble(cfg: &BasisConfig, quad: &QuadratureSet) -> Assembled {
    let basis = GalerkinBasis::build(cfg).unwrap();
    let m = compute_moments(quad, 1e-8).unwrap();
    let psi = null_space_basis(&m, &basis).unwrap();
    let opts = AssemblyOptions { with_nu: false, ..Default::default() };
    let start = Instant::now();
    let mats = assemble_l(&basis, &ScatteringKernel::default(), quad, &opts).unwrap();
    Assembled { basis, psi, mats, assembly_secs: start.elapsed().as_secs_f64() }
}

fn criterion_1(main: &mut Assembled, quad: &QuadratureSet) -> Outcome {
    let start = Instant::now();
    let (eig, _) = sym_eigen(&main.mats.lmat).unwrap();
    let gap = spectral_gap(&main.mats, &main.psi).unwrap();
    let eig_secs = start.elapsed().as_secs_f64();
    main.mats.muhat = Some(gap.muhat);
    let norm = eig.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let null = eig.iter().filter(|x| x.abs() < 1e-6 * norm).count();

    let refined = assemble(&BasisConfig::default().refined(), quad);
    let mu_ref = spectral_gap(&refined.mats, &refined.psi).unwrap().muhat;
    let change = (mu_ref - gap.muhat).abs() / gap.muhat;
    let pass = null == 5 && gap.muhat > 0.0 && change < 0.10 && main.assembly_secs <= 600.0 && eig_secs <= 10.0;
    Outcome {
        id: 1,
        title: "null space and spectral gap",
        pass,
        detail: format!(
            "null count {null}, muhat {:.4} (dim {}), refined {:.4} (dim {}), change {:.2}%, assembly {:.1}s, eigensolve {:.2}s",
            gap.muhat,
            main.basis.dim(),
            mu_ref,
            refined.basis.dim(),
            100.0 * change,
            main.assembly_secs,
            eig_secs
        ),
    }
}

fn criterion_2(model: &SpectralModel, tau0: f64) -> Outcome {
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_form = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        worst_form = worst_form.max(dot(&x, &matvec(&model.lmat, &x)) / dot(&x, &x));
    }
    let mut worst_re = f64::NEG_INFINITY;
    for k in uniform(0.0, 2.0, 20) {
        let (vals, _) = model.eigen(k).unwrap();
        worst_re = worst_re.max(vals.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max));
    }
    let mut samples = 0;
    let mut worst_growth = 0.0f64;
    for k in uniform(0.0, 2.0 * tau0, 10) {
        let prop = Propagator::new(&model.bk(k), &model.blocks).unwrap();
        for _ in 0..5 {
            let f: Vec<c64> = (0..n).map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            for t in [1e-3, 0.1, 1.0, 30.0] {
                let g = prop.apply(t, &f).unwrap().state;
                worst_growth = worst_growth.max(norm_c(&g) / norm_c(&f));
                samples += 1;
            }
        }
    }
    let pass = worst_form <= 0.0 && worst_re <= 1e-8 && worst_growth <= 1.0 + 1e-8 && samples >= 200;
    Outcome {
        id: 2,
        title: "dissipativity and contraction",
        pass,
        detail: format!(
            "max x.Lx/|x|^2 {worst_form:.3e} over 1000 x, max Re lambda {worst_re:.3e} on 20 k in [0,2], max growth {worst_growth:.12} on {samples} samples"
        ),
    }
}

fn criterion_3(model: &SpectralModel, tau0: f64) -> Outcome {
    let grid = uniform(0.0, tau0, 41);
    let table = eigen_branches(model, &grid, &BranchOptions::default()).unwrap();
    let mut miscount = 0;
    let mut shear = 0.0f64;
    let mut conj = 0.0f64;
    let mut max_re = f64::NEG_INFINITY;
    for (i, &k) in grid.iter().enumerate() {
        let (vals, _) = model.eigen(k).unwrap();
        if vals.iter().filter(|z| z.re > -0.5 * model.muhat).count() != 5 {
            miscount += 1;
        }
        let l = table.lambda[i];
        shear = shear.max((l[3] - l[4]).norm());
        conj = conj.max((l[0] - l[2].conj()).norm());
        if k > 0.0 {
            max_re = max_re.max(l.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max));
        }
    }
    // just past the measured edge the count must change
    let (past, _) = model.eigen(tau0 * 1.01).unwrap();
    let beyond = past.iter().filter(|z| z.re > -0.5 * model.muhat).count();
    let pass = miscount == 0 && shear <= 1e-8 && conj <= 1e-8 && max_re < 0.0 && beyond != 5;
    Outcome {
        id: 3,
        title: "five-branch structure",
        pass,
        detail: format!(
            "tau0 {tau0:.4}, grid points with count != 5: {miscount}, count at 1.01 tau0: {beyond}, |l2-l3| {shear:.2e}, |l-1 - conj l1| {conj:.2e}, max Re (k>0) {max_re:.3e}"
        ),
    }
}

fn criterion_4(model: &SpectralModel, consts: &FluidConstants, tau0: f64) -> Outcome {
    let start = Instant::now();
    let k_fit = tau0 / 4.0;
    let grid = uniform(0.0, k_fit, 41);
    let table = eigen_branches(model, &grid, &BranchOptions::default()).unwrap();
    let rep = expansion_validation(&table, &model.pert, k_fit).unwrap();
    // first-order targets straight from the fluid constants
    let c = (consts.a * consts.a + consts.b * consts.b).sqrt();
    // lambda_j ~ -i u_j k with u_{-1} = c, u_1 = -c
    let targets = [c64::new(0.0, -c), c64::new(0.0, 0.0), c64::new(0.0, c), c64::new(0.0, 0.0), c64::new(0.0, 0.0)];
    let c1 = rep.fits.iter().zip(&targets).map(|(f, t)| (f.c1 - t).norm() / c).fold(0.0, f64::max);
    let c2 = rep.max_c2_error();
    let order = rep.min_order();
    let secs = start.elapsed().as_secs_f64();
    let pass = c1 <= 0.02 && c2 <= 0.05 && order >= 2.5 && secs <= 300.0;
    Outcome {
        id: 4,
        title: "expansion coefficients",
        pass,
        detail: format!(
            "window (0, {k_fit:.3}], first-order error {:.3e}, second-order error {:.3e}, remainder order {:.3}, A = {:?}, {secs:.1}s",
            c1,
            c2,
            order,
            model.pert.a.map(|x| (x * 1e8).round() / 1e8)
        ),
    }
}

fn criterion_5(model: &SpectralModel, tau0: f64) -> Outcome {
    let grid = uniform(0.0, tau0, 21);
    let disp = dispersion_solve(model, &grid, &DispersionOptions::default()).unwrap();
    let table = eigen_branches(model, &grid, &BranchOptions::default()).unwrap();
    let rel = disp.compare(&table).unwrap();
    let u = model.pert.u;
    let mut fact = 0.0f64;
    for beta in [c64::new(0.3, -0.2), c64::new(-1.0, 2.0), c64::new(0.0, 0.1), c64::new(0.7, 0.7)] {
        let d = d1(model, beta, 0.0).unwrap();
        let p = (beta + c64::new(0.0, u[0])) * (beta + c64::new(0.0, u[1])) * (beta + c64::new(0.0, u[2]));
        fact = fact.max((d - p).norm());
    }
    let pass = rel <= 1e-6 && fact <= 1e-12;
    Outcome {
        id: 5,
        title: "dispersion roots vs eigensolve",
        pass,
        detail: format!("max relative gap {rel:.3e} on 20 points of (0, tau0], D1(beta,0) factorization error {fact:.3e}"),
    }
}

fn criterion_6(model: &SpectralModel, tau0: f64) -> Outcome {
    let kvals: Vec<f64> = (1..=10).map(|i| tau0 * i as f64 / 10.0).collect();
    let rep = g2_decay_rates(model, &kvals, tau0, &G2Options::default()).unwrap();
    // a second, independent additivity check on fresh data
    let grid = vec![0.0, 0.3 * tau0, 0.8 * tau0];
    let table = eigen_branches(model, &grid, &BranchOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut add = 0.0f64;
    for (i, &k) in grid.iter().enumerate().skip(1) {
        let prop = Propagator::new(&model.bk(k), &model.blocks).unwrap();
        let f: Vec<c64> = (0..model.dim()).map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        for t in [0.0, 0.01, 1.0] {
            let (g1, g2) = split_g1_g2(&prop, t, &f, &table.modes(i), tau0).unwrap();
            let full = prop.apply(t, &f).unwrap().state;
            let d: Vec<c64> = full.iter().zip(g1.iter().zip(&g2)).map(|(x, (a, b))| x - a - b).collect();
            add = add.max(norm_c(&d) / norm_c(&full));
        }
    }
    let pass = rep.sigma0 > 0.0 && rep.spread <= 0.5 && rep.additivity <= 1e-12 && add <= 1e-12;
    Outcome {
        id: 6,
        title: "semigroup decomposition",
        pass,
        detail: format!(
            "sigma0 {:.3}, mean {:.3}, spread {:.3}, additivity {:.2e} / {:.2e}",
            rep.sigma0, rep.mean, rep.spread, rep.additivity, add
        ),
    }
}

fn decay_criterion(model: &SpectralModel, tau0: f64, kind: ScenarioKind) -> Outcome {
    let start = Instant::now();
    let scenario = DecayScenario::build(kind, 1.0, tau0, model).unwrap();
    let hygiene = scenario.check(1e-8).is_ok();
    let series = decay_experiment(model, &scenario, &DecayConfig::default(), tau0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (macro_rate, micro_rate) = match kind {
        ScenarioKind::Generic => (-0.75, -1.25),
        ScenarioKind::Microscopic => (-1.25, -1.75),
    };
    let mut pass = hygiene && secs <= 900.0;
    let mut parts = Vec::new();
    for o in &series.observables {
        let micro = o.name.ends_with("micro");
        let expected = if micro { micro_rate } else { macro_rate } - 0.5 * o.alpha as f64;
        assert_eq!(o.expected_rate, expected, "{}", o.name);
        let ok = (o.fit.slope - expected).abs() <= 0.05 && o.witness[0] > 0.0 && o.witness[1].is_finite();
        pass &= ok;
        parts.push(format!("{} {:.4} (target {}, C1 {:.3e}, C2 {:.3e})", o.name, o.fit.slope, expected, o.witness[0], o.witness[1]));
    }
    Outcome {
        id: if kind == ScenarioKind::Generic { 7 } else { 8 },
        title: if kind == ScenarioKind::Generic { "decay rates, generic data" } else { "decay rates, microscopic data" },
        pass,
        detail: format!("{}; {secs:.1}s", parts.join(", ")),
    }
}

fn deterministic_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|x| x.to_str()), Some("rbsm") | Some("csv")))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("threads{threads}"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_relboltz"))
            .env_remove("RELBOLTZ_OUT_DIR")
            .args(["spectrum", "--threads", threads, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        runs.push(deterministic_files(&out));
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    let pass = runs[0] == runs[1] && names.len() >= 5;
    Outcome { id: 9, title: "determinism", pass, detail: format!("compared {} with 1 and 2 threads", names.join(", ")) }
}

#[test]
fn acceptance() {
    let quad = QuadratureSet::default();
    let mut main = assemble(&BasisConfig::default(), &quad);
    let mut results = vec![criterion_1(&mut main, &quad)];

    let m = compute_moments(&quad, 1e-8).unwrap();
    let consts = fluid_constants(&m, &quad).unwrap();
    let v = streaming_matrix(&main.basis, [0.0, 0.0, 1.0]).unwrap();
    let model = SpectralModel::new(&main.basis, &main.mats, &main.psi, &consts, v).unwrap();
    let tau0 = measure_tau0(&model, 1e-3 * model.muhat, 1e4 * model.muhat).unwrap().tau0;

    results.push(criterion_2(&model, tau0));
    results.push(criterion_3(&model, tau0));
    results.push(criterion_4(&model, &consts, tau0));
    results.push(criterion_5(&model, tau0));
    results.push(criterion_6(&model, tau0));
    results.push(decay_criterion(&model, tau0, ScenarioKind::Generic));
    results.push(decay_criterion(&model, tau0, ScenarioKind::Microscopic));
    results.push(criterion_9());

    for r in &results {
        println!("criterion {} [{}]: {} - {}", r.id, r.title, if r.pass { "PASS" } else { "FAIL" }, r.detail);
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
