use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use salm_core::alm::{AlmError, Termination};
use salm_core::control::solve::SolveError;
use salm_core::control::{solve_sparse_control, verify_kkt, ControlError};
use salm_core::denoise::{
    denoise_observed, estimate_quantile, simulate_counts, DenoiseRunError, IntensityGrid, MultiscaleFamily,
};
use salm_core::io::{
    intensity_from_pgm, read_raw, write_alm_trace, write_control_trace, write_denoise_metrics, write_json,
    write_pgm, write_quantile_samples, write_raw, BitDepth, IoError, MeshInfo, RawSidecar,
};
use salm_core::numkit::Rng;

use crate::config::{load_json, ControlRunConfig, DenoiseRunConfig, QuantileRunConfig};
use crate::manifest::{version_string, ResolvedConfig, RunManifest};
use crate::{CliError, ControlArgs, DenoiseArgs, QuantileArgs};

/// Stream of the generator that draws the Poisson observation.
const OBSERVATION_STREAM: u64 = 1 << 62;

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn io_input(e: IoError) -> CliError {
    CliError::Input(e.to_string())
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn raw(&mut self, name: &str, values: &[f64], sidecar: &RawSidecar) -> Result<(), CliError> {
        let path = self.path(name);
        self.written.push(salm_core::io::sidecar_path(Path::new(name)).display().to_string());
        write_raw(&path, values, sidecar).map_err(io_input)
    }

    fn finish(mut self, manifest: &mut RunManifest) -> Result<(), CliError> {
        let path = self.path("manifest.json");
        manifest.outputs = self.written;
        write_json(&path, manifest).map_err(io_input)
    }
}

fn termination_result(termination: Termination, what: &str) -> Result<(), CliError> {
    match termination {
        Termination::Converged => Ok(()),
        Termination::MaxIterations => Err(CliError::NotConverged(format!(
            "{what} stopped at the outer iteration cap; outputs were written"
        ))),
    }
}

pub fn control(args: ControlArgs) -> Result<(), CliError> {
    let mut cfg: ControlRunConfig = load_json(args.config.as_deref())?;
    set(&mut cfg.kappa, args.kappa);
    set(&mut cfg.rho0, args.rho0);
    set(&mut cfg.tau, args.tau);
    set(&mut cfg.gamma, args.gamma);
    set(&mut cfg.mesh_m, args.mesh_m);
    set(&mut cfg.sigma, args.sigma);
    set(&mut cfg.eps, args.eps);
    set(&mut cfg.max_outer_iterations, args.max_outer);
    set(&mut cfg.seed, args.seed);
    if !(cfg.kappa > 0.0) {
        return Err(CliError::Usage(format!("--kappa must be positive, got {}", cfg.kappa)));
    }
    let started = Instant::now();
    let sol = match solve_sparse_control(cfg.kappa, &cfg.to_core()) {
        Ok(sol) => sol,
        Err(SolveError::Alm(AlmError::Solver {
            k,
            source: ControlError::SsnIterationCap { iterations, residual },
        })) => {
            return Err(CliError::NotConverged(format!(
                "semismooth Newton hit its cap of {iterations} iterations at outer iteration {k} (residual {residual:e})"
            )))
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    let elapsed = started.elapsed().as_secs_f64();

    let mut out = Outputs::new(&args.out)?;
    write_control_trace(&out.path("trace.csv"), &sol.trace).map_err(io_input)?;
    write_alm_trace(&out.path("alm_trace.csv"), &sol.trace).map_err(io_input)?;
    let m = sol.fem.cells_per_side;
    let sidecar = RawSidecar {
        mesh: Some(MeshInfo {
            cells_per_side: m,
            mesh_width: sol.fem.mesh_width(),
            nodes: "interior".into(),
        }),
        ..RawSidecar::square(m - 1)
    };
    out.raw("u.f64", &sol.iterate.u, &sidecar)?;
    out.raw("y.f64", &sol.iterate.y, &sidecar)?;
    out.raw("p.f64", &sol.iterate.p, &sidecar)?;
    let (lo, hi) = sol
        .iterate
        .u
        .iter()
        .fold((0.0f64, 0.0f64), |(lo, hi), &u| (lo.min(u), hi.max(u)));
    write_pgm(&out.path("u.pgm"), m - 1, m - 1, &sol.iterate.u, lo, hi, BitDepth::Eight).map_err(io_input)?;

    let kkt = verify_kkt(&sol.iterate, sol.multiplier, cfg.kappa, sol.sigma, &sol.fem, 1e-6);
    let l1 = sol.fem.l1_norm(&sol.iterate.u);
    let last = sol.trace.last().expect("at least one outer iteration");
    let max_ell = sol.trace.iter().map(|r| r.inner_iterations).max().unwrap_or(0);
    let mut metrics = BTreeMap::new();
    metrics.insert("outer_iterations".into(), sol.trace.len() as f64);
    metrics.insert("max_ssn_iterations".into(), max_ell as f64);
    metrics.insert("final_V".into(), last.feasibility);
    metrics.insert("final_rho".into(), last.rho);
    metrics.insert("objective".into(), sol.objective());
    metrics.insert("l1_norm".into(), l1);
    metrics.insert("multiplier".into(), sol.multiplier);
    metrics.insert("kkt_state_residual".into(), kkt.state_residual);
    metrics.insert("kkt_adjoint_residual".into(), kkt.adjoint_residual);
    let mut flags = BTreeMap::new();
    flags.insert("constraint_active".into(), sol.multiplier > 0.0);
    flags.insert("kkt_passed".into(), kkt.passed());
    let mut manifest = RunManifest {
        version: version_string(),
        seed: cfg.seed,
        run: ResolvedConfig::Control(cfg.clone()),
        wall_clock_seconds: elapsed,
        termination: sol.termination.to_string(),
        metrics,
        flags,
        outputs: Vec::new(),
    };
    out.finish(&mut manifest)?;

    println!("termination: {}", sol.termination);
    println!("outer iterations: {}, max SSN iterations: {max_ell}", sol.trace.len());
    println!("final V: {:e}, rho: {:e}", last.feasibility, last.rho);
    println!(
        "||u||_1 = {l1:.6} (kappa {}), multiplier {:e}, constraint {}",
        cfg.kappa,
        sol.multiplier,
        if sol.multiplier > 0.0 { "active" } else { "not active" }
    );
    for v in &kkt.violations {
        eprintln!("warning: KKT check: {v}");
    }
    termination_result(sol.termination, "control run")
}

fn load_truth(cfg: &DenoiseRunConfig) -> Result<IntensityGrid, CliError> {
    match (&cfg.input, cfg.synthetic) {
        (Some(_), Some(_)) => Err(CliError::Usage("give either --input or --synthetic, not both".into())),
        (None, None) => Err(CliError::Usage("one of --input or --synthetic is required".into())),
        (None, Some(img)) => img.render(cfg.n, cfg.peak).map_err(|e| CliError::Usage(e.to_string())),
        (Some(path), None) => {
            if path.extension().is_some_and(|e| e == "f64") {
                let (meta, values) = read_raw(path).map_err(io_input)?;
                IntensityGrid::new(meta.n, values).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
            } else {
                intensity_from_pgm(path, cfg.peak).map_err(io_input)
            }
        }
    }
}

pub fn denoise(args: DenoiseArgs) -> Result<(), CliError> {
    let mut cfg: DenoiseRunConfig = load_json(args.config.as_deref())?;
    if args.input.is_some() {
        cfg.synthetic = None;
    }
    if args.synthetic.is_some() {
        cfg.input = None;
    }
    set(&mut cfg.input, args.input.map(Some));
    set(&mut cfg.synthetic, args.synthetic.map(Some));
    set(&mut cfg.n, args.n);
    set(&mut cfg.peak, args.peak);
    set(&mut cfg.alpha, args.alpha);
    set(&mut cfg.qtilde, args.qtilde.map(Some));
    set(&mut cfg.r_shift, args.r_shift);
    set(&mut cfg.mc_samples, args.mc_samples);
    set(&mut cfg.max_scale, args.max_scale);
    set(&mut cfg.nadam_iterations, args.nadam_iterations);
    set(&mut cfg.max_outer_iterations, args.max_outer);
    set(&mut cfg.penalty_convention, args.penalty_convention);
    set(&mut cfg.seed, args.seed);
    let core = cfg.to_core();
    core.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let truth = load_truth(&cfg)?;
    let n = truth.n();
    let counts = simulate_counts(&truth, &mut Rng::derived(cfg.seed, OBSERVATION_STREAM));

    let started = Instant::now();
    let result = denoise_observed(&counts, &core, &mut |m| {
        eprintln!(
            "k={:<3} f={:.6e} violated={:.4} max_rel={:.4e} V={:.4e} rho={:e}",
            m.k, m.f, m.violated_fraction, m.max_rel_violation, m.feasibility, m.rho
        );
    });
    let outcome = match result {
        Ok(o) => o,
        Err(DenoiseRunError::Setup(e)) => return Err(CliError::Usage(e.to_string())),
        Err(e) => return Err(CliError::Input(e.to_string())),
    };
    let elapsed = started.elapsed().as_secs_f64();

    let mut out = Outputs::new(&args.out)?;
    write_denoise_metrics(&out.path("metrics.csv"), &outcome.metrics).map_err(io_input)?;
    write_alm_trace(&out.path("trace.csv"), &outcome.trace).map_err(io_input)?;
    let noisy = counts.to_intensity();
    let top = truth
        .values()
        .iter()
        .chain(noisy.values())
        .fold(0.0f64, |a, &b| a.max(b));
    for (name, grid) in [("truth.pgm", &truth), ("noisy.pgm", &noisy), ("reconstruction.pgm", &outcome.reconstruction)] {
        write_pgm(&out.path(name), n, n, grid.values(), 0.0, top, BitDepth::Sixteen).map_err(io_input)?;
    }
    out.raw("reconstruction.f64", outcome.reconstruction.values(), &RawSidecar::square(n))?;
    if let Some(q) = &outcome.quantile {
        write_quantile_samples(&out.path("quantile_samples.csv"), &q.samples).map_err(io_input)?;
    }

    let last = outcome.metrics.last().expect("at least one outer iteration");
    let rmse = (outcome
        .reconstruction
        .pixel_means()
        .iter()
        .zip(truth.pixel_means())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / (n * n) as f64)
        .sqrt();
    let mut metrics = BTreeMap::new();
    metrics.insert("q_tilde".into(), outcome.q_tilde);
    metrics.insert("constraints".into(), outcome.constraint_count as f64);
    metrics.insert("outer_iterations".into(), outcome.metrics.len() as f64);
    metrics.insert("f_initial".into(), outcome.f_initial);
    metrics.insert("f_final".into(), last.f);
    metrics.insert("final_V".into(), last.feasibility);
    metrics.insert("final_rho".into(), last.rho);
    metrics.insert("violated_fraction".into(), last.violated_fraction);
    metrics.insert("max_rel_violation".into(), last.max_rel_violation);
    metrics.insert("mean_rel_violation".into(), last.mean_rel_violation);
    metrics.insert("rmse_counts".into(), rmse);
    let mut manifest = RunManifest {
        version: version_string(),
        seed: cfg.seed,
        run: ResolvedConfig::Denoise(cfg.clone()),
        wall_clock_seconds: elapsed,
        termination: outcome.termination.to_string(),
        metrics,
        flags: BTreeMap::new(),
        outputs: Vec::new(),
    };
    out.finish(&mut manifest)?;

    println!("termination: {}", outcome.termination);
    println!("q_tilde: {}, constraints: {}", outcome.q_tilde, outcome.constraint_count);
    println!(
        "outer iterations: {}, final V: {:e}, violated fraction: {:.6}",
        outcome.metrics.len(),
        last.feasibility,
        last.violated_fraction
    );
    termination_result(outcome.termination, "denoise run")
}

pub fn quantile(args: QuantileArgs) -> Result<(), CliError> {
    let mut cfg: QuantileRunConfig = load_json(args.config.as_deref())?;
    set(&mut cfg.n, args.n);
    set(&mut cfg.alpha, args.alpha);
    set(&mut cfg.samples, args.samples);
    set(&mut cfg.max_scale, args.max_scale);
    set(&mut cfg.penalty_convention, args.penalty_convention);
    set(&mut cfg.seed, args.seed);
    let usage = |e: salm_core::denoise::DenoiseError| CliError::Usage(e.to_string());
    let family = MultiscaleFamily::standard(cfg.n, cfg.max_scale, cfg.penalty_convention).map_err(usage)?;
    if cfg.n == 0 || !cfg.n.is_power_of_two() {
        return Err(CliError::Usage(format!("--n must be a power of two, got {}", cfg.n)));
    }
    let started = Instant::now();
    let est = estimate_quantile(&family, cfg.alpha, cfg.samples, cfg.seed).map_err(usage)?;
    let elapsed = started.elapsed().as_secs_f64();

    let mut out = Outputs::new(&args.out)?;
    write_quantile_samples(&out.path("quantile_samples.csv"), &est.samples).map_err(io_input)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("q_tilde".into(), est.q);
    metrics.insert("constraints".into(), family.len() as f64);
    let mut manifest = RunManifest {
        version: version_string(),
        seed: cfg.seed,
        run: ResolvedConfig::Quantile(cfg.clone()),
        wall_clock_seconds: elapsed,
        termination: "completed".into(),
        metrics,
        flags: BTreeMap::new(),
        outputs: Vec::new(),
    };
    out.finish(&mut manifest)?;
    println!("{}", est.q);
    Ok(())
}
