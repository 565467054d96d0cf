//! Subcommand implementations. Each writes its files under the configured
//! output directory and finishes with `manifest.txt`.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use hibler_core::discretization::{assemble_coupled, FieldSet, Grid};
use hibler_core::dynamics::{
    run, Diagnostics, DynamicsError, ForcingInputs, GrowthLaw, RunObserver,
};
use hibler_core::output::{
    field_range, fmt_float, write_ppm, write_ppm_sidecar, write_snapshot, Manifest,
};
use hibler_core::sampling::SampleRng;
use hibler_core::stability::{
    assemble_a0, decay_experiment, kernel_residual, perturbed_equilibrium, semisimplicity,
    spectrum, DecayConfig, StabilityError,
};
use hibler_core::symbol::{ellipticity_at, lopatinskii_shapiro_check, LsProbe};
use hibler_core::verify::{
    sample_state, DECAY_RATE_TOL, KERNEL_TOL, LIMIT_MEAN_TOL, LS_SMIN_TOL, SEMISIMPLE_TOL,
};
use num_complex::Complex;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("config error: {0}")]
    Hypothesis(String),
    #[error("{0}")]
    Budget(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    /// 2 for usage and configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Config(_)
            | CliError::Hypothesis(_)
            | CliError::Budget(_) => 2,
            CliError::Io { .. } | CliError::Failure(_) => 1,
        }
    }
}

/// Verdict and human-readable summary of a subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub lines: Vec<String>,
}

/// Output directory plus the manifest of everything written into it.
pub struct OutputDir {
    root: PathBuf,
    manifest: Manifest,
}

impl OutputDir {
    pub fn create(root: &Path, command: &str) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|source| CliError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest::new(command),
        })
    }

    pub fn write_with(
        &mut self,
        name: &str,
        format: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.root.join(name);
        let io_err = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        body(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        self.manifest.add_file(name, format);
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, format: &str, text: &str) -> Result<(), CliError> {
        self.write_with(name, format, |w| w.write_all(text.as_bytes()))
    }

    /// Writes `manifest.txt` (listing itself) and returns its path.
    pub fn finish(mut self, cfg: &RunConfig) -> Result<PathBuf, CliError> {
        self.manifest.add_file("manifest.txt", "manifest");
        self.manifest.config = cfg.entries();
        let text = self.manifest.render();
        let path = self.root.join("manifest.txt");
        fs::write(&path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

fn ok_flag(ok: bool) -> u8 {
    u8::from(ok)
}

/// Random `(ε, ξ, η)` samples of the principal symbol.
pub fn symbol(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = &cfg.rheology;
    let mut rng = SampleRng::new(cfg.experiment.seed);
    let mut csv = String::from(
        "sample,eps11,eps12,eps22,h,a,pressure,xi1,xi2,eta1_re,eta1_im,eta2_re,eta2_im,\
         scale,min_eigenvalue,max_imag,form_re,bound,relative_margin,ok\n",
    );
    let mut failures = 0;
    let mut min_rel_eig = f64::INFINITY;
    let mut min_rel_margin = f64::INFINITY;
    for k in 0..cfg.experiment.n_samples {
        let (eps, h, a, p) = sample_state(params, &mut rng);
        let xi: [f64; 2] = rng.unit2();
        let eta: [Complex<f64>; 2] = rng.complex_unit2();
        let s = ellipticity_at(params, &eps, p, xi, &eta);
        let scale = 0.5 * p / params.delta_reg(&eps);
        let rel_margin = s.margin() / s.bound;
        let ok = s.min_eigenvalue > 0.0 && s.max_imag / scale <= 1e-12 && rel_margin >= -1e-9;
        failures += usize::from(!ok);
        min_rel_eig = min_rel_eig.min(s.min_eigenvalue / scale);
        min_rel_margin = min_rel_margin.min(rel_margin);
        let cols = [
            eps.e11, eps.e12, eps.e22, h, a, p, xi[0], xi[1], eta[0].re, eta[0].im, eta[1].re,
            eta[1].im, scale, s.min_eigenvalue, s.max_imag, s.form_re, s.bound, rel_margin,
        ];
        csv.push_str(&format!("{k},"));
        for c in cols {
            csv.push_str(&fmt_float(c));
            csv.push(',');
        }
        csv.push_str(&format!("{}\n", ok_flag(ok)));
    }
    let mut out = OutputDir::create(&cfg.experiment.output_dir, "symbol")?;
    out.write_text("symbol.csv", "csv", &csv)?;
    let manifest = out.finish(cfg)?;
    Ok(Outcome {
        passed: failures == 0,
        lines: vec![
            format!("samples = {}", cfg.experiment.n_samples),
            format!("failures = {failures}"),
            format!("min_relative_eigenvalue = {}", fmt_float(min_rel_eig)),
            format!("min_relative_margin = {}", fmt_float(min_rel_margin)),
            format!("manifest = {}", manifest.display()),
        ],
    })
}

/// Random boundary probes of the Lopatinskii–Shapiro condition.
pub fn ls_check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let x = &cfg.experiment;
    if x.lambda_re_min < 0.0 {
        return Err(CliError::Hypothesis(format!(
            "experiment.lambda_re_min = {} admits probes with Re lambda < 0; \
             the boundary condition is only claimed for Re lambda >= 0",
            x.lambda_re_min
        )));
    }
    let params = &cfg.rheology;
    let mut rng = SampleRng::new(x.seed);
    let mut csv = String::from(
        "sample,eps11,eps12,eps22,h,a,pressure,xi1,xi2,lambda_re,lambda_im,scale,stable_roots,s_min,ok\n",
    );
    let mut failures = 0;
    let mut min_s = f64::INFINITY;
    for k in 0..x.n_samples {
        let (eps, h, a, p) = sample_state(params, &mut rng);
        let scale = 0.5 * p / params.delta_reg(&eps);
        let re: f64 = rng.uniform(x.lambda_re_min, x.lambda_re_max);
        let im: f64 = rng.uniform(-x.lambda_im_max, x.lambda_im_max);
        let lambda = Complex::new(re, im) * scale;
        let probe = LsProbe::from_tangent(rng.unit2(), lambda, eps, p);
        let (stable, s_min) = match lopatinskii_shapiro_check(params, &probe) {
            Ok(r) => (r.stable, r.s_min),
            Err(_) => (0, f64::NAN),
        };
        let ok = stable == 2 && s_min > LS_SMIN_TOL;
        failures += usize::from(!ok);
        if ok {
            min_s = min_s.min(s_min);
        }
        csv.push_str(&format!("{k},"));
        for c in [
            eps.e11, eps.e12, eps.e22, h, a, p, probe.xi[0], probe.xi[1], lambda.re, lambda.im,
            scale,
        ] {
            csv.push_str(&fmt_float(c));
            csv.push(',');
        }
        csv.push_str(&format!("{stable},{},{}\n", fmt_float(s_min), ok_flag(ok)));
    }
    let mut out = OutputDir::create(&x.output_dir, "ls-check")?;
    out.write_text("ls_check.csv", "csv", &csv)?;
    let manifest = out.finish(cfg)?;
    Ok(Outcome {
        passed: failures == 0,
        lines: vec![
            format!("probes = {}", x.n_samples),
            format!("failures = {failures}"),
            format!("min_s_min = {}", fmt_float(min_s)),
            format!("manifest = {}", manifest.display()),
        ],
    })
}

fn stability_error(e: StabilityError) -> CliError {
    match e {
        StabilityError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
        StabilityError::InvalidEquilibrium(m) => CliError::Hypothesis(m),
        other => CliError::Failure(other.to_string()),
    }
}

/// Dense spectrum of the linearisation at the configured equilibrium.
pub fn spectrum_cmd(cfg: &RunConfig, export_matrix: bool) -> Result<Outcome, CliError> {
    let grid = cfg.grid();
    let a0 = assemble_a0(&cfg.equilibrium(), &grid, &cfg.rheology).map_err(stability_error)?;
    let rep = spectrum(&a0, true).map_err(stability_error)?;
    let ss = semisimplicity(&a0).map_err(stability_error)?;
    let kres = kernel_residual(&a0);
    let semisimple = ss.passes(SEMISIMPLE_TOL);
    let passed = rep.is_stable_with_kernel(2) && kres <= KERNEL_TOL && semisimple;

    let mut out = OutputDir::create(&cfg.experiment.output_dir, "spectrum")?;
    out.write_with("eigenvalues.csv", "csv", |w| {
        writeln!(w, "index,re,im")?;
        for (k, z) in rep.eigenvalues.iter().enumerate() {
            writeln!(w, "{k},{},{}", fmt_float(z.re), fmt_float(z.im))?;
        }
        Ok(())
    })?;
    let summary = [
        ("dimension", rep.eigenvalues.len().to_string()),
        ("spectral_radius", fmt_float(rep.spectral_radius)),
        ("tol_kernel", fmt_float(rep.tol_kernel)),
        ("kernel_dim", rep.kernel_dim.to_string()),
        ("gap", fmt_float(rep.gap)),
        ("min_real", fmt_float(rep.min_real)),
        ("max_imag", fmt_float(rep.max_imag)),
        ("kernel_residual", fmt_float(kres)),
        ("null_singular_value_0", fmt_float(ss.null_singular_values[0])),
        ("null_singular_value_1", fmt_float(ss.null_singular_values[1])),
        ("next_singular_value", fmt_float(ss.next_singular_value)),
        ("restriction_norm", fmt_float(ss.restriction_norm)),
        ("semisimple", semisimple.to_string()),
        ("stable", passed.to_string()),
    ];
    let text: String = summary.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    out.write_text("spectrum.txt", "text", &text)?;
    if export_matrix {
        out.write_with("linearisation.coo", "coo", |w| a0.write_coo(w))?;
    }
    let manifest = out.finish(cfg)?;
    let mut lines: Vec<String> = summary.iter().map(|(k, v)| format!("{k} = {v}")).collect();
    lines.push(format!("manifest = {}", manifest.display()));
    Ok(Outcome { passed, lines })
}

/// Relaxation from a perturbed equilibrium and fit of the decay rate.
pub fn decay(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.grid();
    let dcfg = DecayConfig {
        perturbation_scale: cfg.experiment.perturbation_scale,
        seed: cfg.experiment.seed,
        stepper: cfg.stepper.clone(),
        decades: Some(cfg.experiment.decades),
        ..DecayConfig::default()
    };
    let rep = decay_experiment(&cfg.equilibrium(), &grid, &cfg.rheology, &dcfg)
        .map_err(stability_error)?;
    let rel_err = rep
        .fitted_rate
        .map(|r| (r - rep.predicted_gap).abs() / rep.predicted_gap);
    let passed =
        rel_err.is_none_or(|e| e <= DECAY_RATE_TOL) && rep.limit_mismatch <= LIMIT_MEAN_TOL;

    let mut out = OutputDir::create(&cfg.experiment.output_dir, "decay")?;
    write_diagnostics(&mut out, &rep.diagnostics)?;
    let opt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), fmt_float);
    let summary = [
        ("fitted_rate", opt(rep.fitted_rate)),
        ("predicted_gap", fmt_float(rep.predicted_gap)),
        ("relative_error", opt(rel_err)),
        ("limit_mismatch", fmt_float(rep.limit_mismatch)),
        ("limit_h", fmt_float(rep.limit_h)),
        ("limit_a", fmt_float(rep.limit_a)),
        ("fit_samples", rep.fit_samples.to_string()),
        ("t_end", fmt_float(rep.t_end)),
        ("passed", passed.to_string()),
    ];
    let text: String = summary.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    out.write_text("decay.txt", "text", &text)?;
    let manifest = out.finish(cfg)?;
    let mut lines: Vec<String> = summary.iter().map(|(k, v)| format!("{k} = {v}")).collect();
    lines.push(format!("manifest = {}", manifest.display()));
    Ok(Outcome { passed, lines })
}

fn write_diagnostics(out: &mut OutputDir, diags: &[Diagnostics<f64>]) -> Result<(), CliError> {
    out.write_with("diagnostics.csv", "csv", |w| {
        writeln!(w, "{}", Diagnostics::<f64>::CSV_HEADER)?;
        for d in diags {
            writeln!(w, "{}", d.csv_row())?;
        }
        Ok(())
    })
}

struct SnapshotWriter<'a> {
    out: &'a mut OutputDir,
    grid: &'a Grid<f64>,
    every: usize,
    total: usize,
}

impl RunObserver<f64> for SnapshotWriter<'_> {
    fn observe(
        &mut self,
        step: usize,
        state: &FieldSet<f64>,
        diag: &Diagnostics<f64>,
    ) -> Result<(), String> {
        let due = step == self.total || (self.every > 0 && step.is_multiple_of(self.every));
        if !due {
            return Ok(());
        }
        let name = format!("snapshot_{step:06}.bin");
        let grid = self.grid;
        self.out
            .write_with(&name, "snapshot", |w| {
                write_snapshot(w, grid, state, diag.time)
            })
            .map_err(|e| e.to_string())
    }
}

/// Forced run from a perturbed equilibrium.
pub fn simulate(cfg: &RunConfig, export_matrix: bool) -> Result<Outcome, CliError> {
    let grid = cfg.grid();
    let params = &cfg.rheology;
    let v0 = perturbed_equilibrium(
        &cfg.equilibrium(),
        &grid,
        cfg.experiment.perturbation_scale,
        cfg.experiment.seed,
    );
    let f = &cfg.forcing;
    let inputs = ForcingInputs::uniform(&grid, f.wind, f.current, f.tilt, GrowthLaw::Zero);
    let mut out = OutputDir::create(&cfg.experiment.output_dir, "simulate")?;
    if export_matrix {
        let op = assemble_coupled(&v0, &grid, params, cfg.stepper.omega)
            .map_err(|e| CliError::Failure(e.to_string()))?;
        out.write_with("implicit_operator.coo", "coo", |w| op.write_coo(w))?;
    }
    let summary = {
        let mut obs = SnapshotWriter {
            out: &mut out,
            grid: &grid,
            every: cfg.experiment.snapshot_every,
            total: cfg.stepper.step_count(),
        };
        run(&v0, &grid, &inputs, params, &cfg.stepper, None, &mut obs)
    };
    let summary = summary.map_err(|e| match e {
        DynamicsError::Observer(m) => CliError::Failure(m),
        other => CliError::Failure(format!("simulation failed: {other}")),
    })?;
    write_diagnostics(&mut out, &summary.diagnostics)?;
    if cfg.experiment.heatmaps {
        let v = &summary.final_state;
        for (name, field) in [("u1", &v.u1), ("u2", &v.u2), ("h", &v.h), ("a", &v.a)] {
            let (lo, hi) = field_range(field);
            out.write_with(&format!("final_{name}.ppm"), "ppm", |w| {
                write_ppm(w, &grid, field, lo, hi)
            })?;
            out.write_with(&format!("final_{name}.ppm.txt"), "text", |w| {
                write_ppm_sidecar(w, name, lo, hi)
            })?;
        }
    }
    let manifest = out.finish(cfg)?;
    let last = summary.diagnostics.last().expect("initial diagnostics present");
    Ok(Outcome {
        passed: true,
        lines: vec![
            format!("steps = {}", summary.steps),
            format!("time = {}", fmt_float(last.time)),
            format!("kinetic_energy = {}", fmt_float(last.kinetic_energy)),
            format!("mean_h = {}", fmt_float(last.mean_h)),
            format!("mean_a = {}", fmt_float(last.mean_a)),
            format!("max_u = {}", fmt_float(last.max_u)),
            format!("manifest = {}", manifest.display()),
        ],
    })
}
