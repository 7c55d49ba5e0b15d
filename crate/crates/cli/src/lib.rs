#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Experiment runner behind the `regcomplex` binary.

pub mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};

use regcomplex::dense::DenseMatrix;
use regcomplex::diagnostics::{
    check_fidelity_conditions, check_strong_subdiff_sampled, find_l1_certificate, lasso_admissible_gamma,
    segment_distance, strict_complementarity, FidelityConstants, LassoGammaReport, SubregSampling, SubregTarget,
};
use regcomplex::experiments::{
    make_phantom, run_lasso_sweep, run_tikhonov_sweep, run_tv_deblur_sweep, write_csv, LassoInstance, PhantomKind,
    SweepOptions, SweepResult, TikhonovInstance, TvSweepConfig,
};
use regcomplex::rng::NoiseRng;
use regcomplex::schedules::check_convergence_conditions;
use regcomplex::vector::dist;
use regcomplex::{Functional, LinearMap};

pub use config::{ConfigError, Experiment, RawConfig, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_THEOREM: u8 = 2;

/// Regularisation-complexity experiments for linear inverse problems.
///
/// Writes a CSV table (`--out`) and a JSON sidecar (`--report`, default
/// `<out>.json`). Exit status: 0 on success, 1 on operational errors, 2 when
/// a proved inequality fails on some row. Schedule condition checks are
/// advisory and only reported.
#[derive(Debug, Parser)]
#[command(name = "regcomplex", version)]
pub struct Args {
    /// tikhonov, lasso, tv-deblur, check-source, check-subreg or check-fidelity.
    #[arg(value_name = "EXPERIMENT")]
    pub positional: Option<String>,
    /// Same as the positional argument.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Flat key=value file, or a JSON sidecar to rerun. Flags override it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Image size WxH (or N for NxN); for matrix experiments columns x rows.
    /// Defaults: tv-deblur 64x64, tikhonov 10x10, lasso uses the built-in toy.
    #[arg(long, value_name = "WxH")]
    pub size: Option<String>,
    /// Ground-truth PGM image for tv-deblur (P5 or P2).
    #[arg(long, value_name = "PATH")]
    pub image: Option<PathBuf>,
    /// Noise seed [default: 0].
    #[arg(long)]
    pub seed: Option<String>,
    /// common (every row scales one draw) or per-row [default: common].
    #[arg(long, value_name = "POLICY")]
    pub seed_policy: Option<String>,
    /// Built-in Lasso instance: axis or segment.
    #[arg(long)]
    pub instance: Option<String>,
    /// Strictly decreasing comma-separated corruption levels.
    #[arg(long, value_name = "LIST", conflicts_with = "paper_grid")]
    pub delta_grid: Option<String>,
    /// {1, 0.5}·10^-p for p = 0..=P [default P: 5].
    #[arg(long, value_name = "P", num_args = 0..=1, default_missing_value = "5")]
    pub paper_grid: Option<String>,
    /// half-delta or power:c:p.
    #[arg(long, value_name = "RULE")]
    pub alpha_rule: Option<String>,
    /// iterated-log, power:c:q or fixed:N.
    #[arg(long, value_name = "RULE")]
    pub n_rule: Option<String>,
    /// tv-deblur curve: schedule or fixed:N. Repeatable
    /// [default: schedule, fixed:100, fixed:1000].
    #[arg(long, value_name = "CURVE")]
    pub curve: Vec<String>,
    /// CSV output path (required for sweeps).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// JSON sidecar path.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Drop grid points whose projected runtime exceeds this budget.
    #[arg(long, value_name = "SECONDS")]
    pub cap_seconds: Option<String>,
    /// check-fidelity constants C:p:C':q [default: 3:2:0.5:2].
    #[arg(long, value_name = "C:p:C':q")]
    pub fidelity: Option<String>,
    /// Sample count for the check-* experiments [default: 10000].
    #[arg(long)]
    pub samples: Option<String>,
}

/// File values first, then flags on top.
pub fn parse_config(args: &Args) -> Result<RunConfig, ConfigError> {
    let mut raw = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            if text.trim_start().starts_with('{') {
                config::parse_sidecar_config(&text)?
            } else {
                config::parse_config_text(&text)?
            }
        }
        None => RawConfig::new(),
    };
    if let (Some(a), Some(b)) = (&args.positional, &args.experiment) {
        if a != b {
            return Err(ConfigError(format!("experiment given twice: {a} and {b}")));
        }
    }
    fn set(raw: &mut RawConfig, k: &str, v: &Option<String>) {
        if let Some(v) = v {
            raw.insert(k.to_string(), vec![v.clone()]);
        }
    }
    set(&mut raw, "experiment", &args.positional.clone().or(args.experiment.clone()));
    set(&mut raw, "size", &args.size);
    set(&mut raw, "image", &args.image.as_ref().map(|p| p.display().to_string()));
    set(&mut raw, "seed", &args.seed);
    set(&mut raw, "seed-policy", &args.seed_policy);
    set(&mut raw, "instance", &args.instance);
    set(&mut raw, "alpha-rule", &args.alpha_rule);
    set(&mut raw, "n-rule", &args.n_rule);
    set(&mut raw, "out", &args.out.as_ref().map(|p| p.display().to_string()));
    set(&mut raw, "report", &args.report.as_ref().map(|p| p.display().to_string()));
    set(&mut raw, "cap-seconds", &args.cap_seconds);
    set(&mut raw, "fidelity", &args.fidelity);
    set(&mut raw, "samples", &args.samples);
    if args.delta_grid.is_some() || args.paper_grid.is_some() {
        raw.remove("delta-grid");
        raw.remove("paper-grid");
        set(&mut raw, "delta-grid", &args.delta_grid);
        set(&mut raw, "paper-grid", &args.paper_grid);
    }
    if args.size.is_some() {
        raw.remove("image");
    }
    if args.image.is_some() {
        raw.remove("size");
    }
    if !args.curve.is_empty() {
        raw.insert("curve".into(), args.curve.clone());
    }
    RunConfig::from_raw(&raw)
}

pub struct Outcome {
    pub exit_code: u8,
    pub sidecar: Value,
}

type RunResult = Result<Outcome, Box<dyn std::error::Error>>;

pub fn run(cfg: &RunConfig) -> RunResult {
    let t0 = Instant::now();
    let mut out = match cfg.experiment {
        Experiment::Tikhonov => run_tikhonov(cfg)?,
        Experiment::Lasso => run_lasso(cfg)?,
        Experiment::TvDeblur => run_tv(cfg)?,
        Experiment::CheckSource => check_source(cfg)?,
        Experiment::CheckSubreg => check_subreg(cfg)?,
        Experiment::CheckFidelity => check_fidelity(cfg)?,
    };
    let sidecar = out.sidecar.as_object_mut().expect("sidecar is an object");
    sidecar.insert("version".into(), json!(regcomplex::VERSION));
    sidecar.insert("config".into(), json!(cfg.to_raw()));
    sidecar.insert("exit_code".into(), json!(out.exit_code));
    sidecar.insert("runtime_ms".into(), json!(t0.elapsed().as_secs_f64() * 1e3));
    if let Some(path) = report_path(cfg) {
        std::fs::write(&path, serde_json::to_string_pretty(&out.sidecar)? + "\n")?;
    }
    Ok(out)
}

fn report_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.report.clone().or_else(|| {
        cfg.out.as_ref().map(|o| {
            let mut s = o.clone().into_os_string();
            s.push(".json");
            PathBuf::from(s)
        })
    })
}

fn write_table(path: &Path, sweeps: &[SweepResult]) -> Result<(), Box<dyn std::error::Error>> {
    let file = std::fs::File::create(path).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    write_csv(std::io::BufWriter::new(file), sweeps)?;
    Ok(())
}

fn options(cfg: &RunConfig) -> SweepOptions {
    SweepOptions {
        seed: cfg.seed,
        seed_policy: cfg.seed_policy,
    }
}

fn advisory(cfg: &RunConfig) -> Value {
    match check_convergence_conditions(&cfg.schedule, &cfg.deltas) {
        Ok(r) => json!(r),
        Err(e) => json!({ "passes": false, "error": e.to_string() }),
    }
}

fn sweep_sidecar(cfg: &RunConfig, sweeps: &[SweepResult], extra: Value) -> Outcome {
    let violations: Vec<String> = sweeps.iter().flat_map(|s| s.theorem_violations()).collect();
    let rows: Vec<Value> = sweeps
        .iter()
        .flat_map(|s| {
            s.rows.iter().map(move |r| {
                json!({ "curve": s.curve, "level": r.level, "delta_measured": r.data_dist, "runtime_ms": r.runtime_ms })
            })
        })
        .collect();
    let mut sidecar = json!({
        "experiment": cfg.experiment.name(),
        "rows": rows,
        "truncated": sweeps.iter().any(|s| s.truncated),
        "convergence_conditions": advisory(cfg),
        "theorem_violations": violations,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut sidecar, extra) {
        m.extend(e);
    }
    Outcome {
        exit_code: if violations.is_empty() { EXIT_OK } else { EXIT_THEOREM },
        sidecar,
    }
}

fn run_tikhonov(cfg: &RunConfig) -> RunResult {
    let (n, m) = cfg.size.unwrap_or((10, 10));
    let inst = TikhonovInstance::random(m, n, cfg.seed)?;
    let r = run_tikhonov_sweep(&inst, &cfg.schedule, &cfg.deltas, &options(cfg))?;
    write_table(cfg.out.as_ref().expect("validated"), std::slice::from_ref(&r))?;
    Ok(sweep_sidecar(cfg, &[r], json!({ "w_hat_norm": regcomplex::vector::norm(&inst.v) })))
}

fn toy(instance: config::Instance) -> LassoInstance {
    match instance {
        config::Instance::Segment => LassoInstance::segment_toy(),
        config::Instance::Axis => LassoInstance {
            a: DenseMatrix::from_rows(&[vec![1.0, 0.0]]).expect("static matrix"),
            xhat: vec![1.0, 0.0],
            certificate: Some(regcomplex::diagnostics::SourceCertificate {
                w: vec![-1.0],
                d: vec![1.0, 0.0],
                residual: 0.0,
                found: true,
                iterations: 0,
            }),
            set_distance: Box::new(|x| dist(x, &[1.0, 0.0])),
        },
    }
}

/// Gaussian `A` with `N(0, 1/m)` entries and a sparse `x̂`; the solution is
/// assumed unique, so the set distance is the distance to `x̂`.
fn random_lasso(n: usize, m: usize, seed: u64) -> Result<LassoInstance, Box<dyn std::error::Error>> {
    let mut rng = NoiseRng::new(seed);
    let s = 1.0 / (m as f64).sqrt();
    let a = DenseMatrix::new(m, n, rng.normal_vec(m * n).into_iter().map(|v| s * v).collect())?;
    let mut xhat = vec![0.0; n];
    for k in 0..(n / 10).max(1) {
        xhat[(k * 7) % n] = 1.0 + rng.uniform();
    }
    let cert = find_l1_certificate(&a, &xhat, 1e-10, 100_000)?;
    let target = xhat.clone();
    Ok(LassoInstance {
        a,
        xhat,
        certificate: cert.found.then_some(cert),
        set_distance: Box::new(move |x| dist(x, &target)),
    })
}

fn run_lasso(cfg: &RunConfig) -> RunResult {
    let inst = match cfg.size {
        Some((n, m)) => random_lasso(n, m, cfg.seed)?,
        None => toy(cfg.instance),
    };
    let r = run_lasso_sweep(&inst, &cfg.schedule, &cfg.deltas, &options(cfg))?;
    write_table(cfg.out.as_ref().expect("validated"), std::slice::from_ref(&r))?;
    Ok(sweep_sidecar(cfg, &[r], json!({ "certified": inst.certificate.is_some() })))
}

fn run_tv(cfg: &RunConfig) -> RunResult {
    let kind = match &cfg.image {
        Some(p) => PhantomKind::LoadedPgm(p.clone()),
        None => PhantomKind::Disk,
    };
    let (w, h) = cfg.size.unwrap_or((64, 64));
    let (img, _) = make_phantom(&kind, w, h)?;
    let mut tv = TvSweepConfig::new(img, cfg.deltas.clone(), cfg.seed);
    tv.schedule = cfg.schedule.clone();
    tv.curves = cfg.curves.clone();
    tv.options = options(cfg);
    tv.cap_seconds = cfg.cap_seconds;
    let out = run_tv_deblur_sweep(&tv)?;
    let mut sweeps = out.curves.clone();
    sweeps.push(out.data.clone());
    write_table(cfg.out.as_ref().expect("validated"), &sweeps)?;
    let late: Vec<Value> = out
        .curves
        .iter()
        .flat_map(|c| {
            c.rows.iter().filter(|r| r.late_ergodic_increase.is_some_and(|v| v > 1e-7)).map(move |r| {
                json!({ "curve": c.curve, "level": r.level, "increase": r.late_ergodic_increase })
            })
        })
        .collect();
    Ok(sweep_sidecar(
        cfg,
        &sweeps,
        json!({
            "k_norm": out.k_norm,
            "levels_run": out.levels_run,
            "image": { "width": tv.phantom.width, "height": tv.phantom.height },
            "late_ergodic_rises": late,
        }),
    ))
}

fn check_source(cfg: &RunConfig) -> RunResult {
    let inst = toy(cfg.instance);
    let c = find_l1_certificate(&inst.a, &inst.xhat, 1e-12, 100_000)?;
    println!("source condition: found={} residual={:.3e}", c.found, c.residual);
    Ok(Outcome {
        exit_code: EXIT_OK,
        sidecar: json!({ "experiment": cfg.experiment.name(), "instance": cfg.instance.name(), "certificate": c }),
    })
}

fn check_subreg(cfg: &RunConfig) -> RunResult {
    let inst = toy(cfg.instance);
    let cert = find_l1_certificate(&inst.a, &inst.xhat, 1e-12, 100_000)?;
    let (strict, _) = strict_complementarity(&inst.xhat, &cert.d, 1e-9)?;
    let radius = 0.1;
    let gamma_report = lasso_admissible_gamma(&inst.a, &inst.xhat, &cert.d, radius, 1e-12).ok();
    let gamma = gamma_report.as_ref().map_or(0.1, |g| g.gamma(0.9)).max(1e-6);
    let alpha = LassoGammaReport::alpha_max(gamma).min(0.05);
    let mut sampling = SubregSampling::new(radius, cfg.samples, cfg.seed);
    if cfg.instance == config::Instance::Segment {
        sampling.probes.push(vec![-1.0, 1.0]);
    }
    let l1 = Functional::l1(1.0)?;
    let a = LinearMap::dense(inst.a.clone());
    let strong = check_strong_subdiff_sampled(&a, &l1, alpha, &inst.xhat, &cert.d, gamma, alpha, &sampling, SubregTarget::StrongNorm)?;
    let set = |x: &[f64]| match cfg.instance {
        config::Instance::Segment => segment_distance(&[1.0, 0.0], &[0.0, 1.0], x),
        config::Instance::Axis => dist(x, &[1.0, 0.0]),
    };
    let semi = check_strong_subdiff_sampled(
        &a,
        &l1,
        alpha,
        &inst.xhat,
        &cert.d,
        gamma,
        alpha,
        &sampling,
        SubregTarget::SemiStrongDist(&set),
    )?;
    println!(
        "strict complementarity: {strict}; strong check passes: {}; set-distance check passes: {}",
        strong.passes(),
        semi.passes()
    );
    let exit_code = if strict && gamma_report.is_some() && !strong.passes() {
        EXIT_THEOREM
    } else {
        EXIT_OK
    };
    Ok(Outcome {
        exit_code,
        sidecar: json!({
            "experiment": cfg.experiment.name(),
            "instance": cfg.instance.name(),
            "strict_complementarity": strict,
            "gamma": gamma_report,
            "alpha": alpha,
            "strong": strong,
            "set_distance": semi,
        }),
    })
}

fn check_fidelity(cfg: &RunConfig) -> RunResult {
    let (c, p, c_prime, q) = cfg.fidelity;
    let e = Functional::squared_norm(1.0)?;
    let r = check_fidelity_conditions(&e, FidelityConstants { c, p, c_prime, q }, 4, cfg.samples, cfg.seed)?;
    println!(
        "pseudo-triangle (C={c}, p={p}): {}; noise bound (C'={c_prime}, q={q}): {}",
        r.triangle_holds(1e-12),
        r.noise_holds(1e-12)
    );
    Ok(Outcome {
        exit_code: EXIT_OK,
        sidecar: json!({
            "experiment": cfg.experiment.name(),
            "triangle_holds": r.triangle_holds(1e-12),
            "noise_holds": r.noise_holds(1e-12),
            "report": r,
        }),
    })
}

/// Parses arguments, runs, and maps the outcome to an exit status.
pub fn main_with(args: Args) -> u8 {
    let cfg = match parse_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    match run(&cfg) {
        Ok(o) => {
            if o.exit_code == EXIT_THEOREM {
                eprintln!("theorem check failed; see the report");
            }
            o.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use regcomplex::experiments::{LevelName, SweepRow};

    fn row(lhs: f64, rhs: f64) -> SweepRow {
        SweepRow {
            level: 0.1,
            alpha: 0.1,
            n_iters: 1,
            dist_to_truth: 0.0,
            normalized_dist: 0.0,
            ergodic_normalized_dist: None,
            set_dist: None,
            data_dist: 0.1,
            objective: 0.0,
            e_delta: None,
            bound_lhs: Some(lhs),
            bound_rhs: Some(rhs),
            bregman_lhs: None,
            bregman_rhs: None,
            late_ergodic_increase: None,
            runtime_ms: 0.0,
        }
    }

    #[test]
    fn violated_bound_exits_two() {
        let cfg = RunConfig::from_raw(&config::parse_config_text("experiment=lasso\nout=x.csv\n").unwrap()).unwrap();
        let sweep = |r| SweepResult {
            curve: "lasso".into(),
            level_name: LevelName::Delta,
            rows: vec![r],
            truncated: false,
        };
        assert_eq!(sweep_sidecar(&cfg, &[sweep(row(1.0, 2.0))], json!({})).exit_code, EXIT_OK);
        let o = sweep_sidecar(&cfg, &[sweep(row(2.0, 1.0))], json!({}));
        assert_eq!(o.exit_code, EXIT_THEOREM);
        assert_eq!(o.sidecar["theorem_violations"].as_array().unwrap().len(), 1);
    }
}
