//! Noise, phantoms and the three parameter sweeps (Tikhonov, Lasso, TV
//! deblurring).

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::diagnostics::{segment_distance, verify_bregman_bound, CertifiedRun, SourceCertificate};
use crate::error::{check_len, Error, Result};
use crate::linop::{estimate_norm, make_gaussian_blur, make_grad2d, make_stack, FlatAreaCollection, LinearMap};
use crate::par::par_map;
use crate::pgm::read_pgm;
use crate::prox::Functional;
use crate::rng::{derive_seed, NoiseRng};
use crate::schedules::{alpha_of, n_of, Schedule};
use crate::solvers::{
    fb_accuracy_bound, forward_backward_observed, pdps_observed, tikhonov_solve, ProblemSpec, StepParams,
};
use crate::vector::{dist, norm, norm_sq, sub};

/// Pixel side length; the discrete grid uses `h = 1`.
pub const CELL_WIDTH: f64 = 1.0;

/// Slack allowed on theorem inequalities in sweep rows.
pub const THEOREM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("image dimensions must be positive".into()));
        }
        check_len("ImageGrid::new", width * height, values.len())?;
        Ok(Self { width, height, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PhantomKind {
    /// Value 1 on a centred disk of radius `min(w, h)/4`, 0 outside.
    Disk,
    /// 0 on the left half of each row, 1 on the right half.
    Steps1D,
    LoadedPgm(PathBuf),
}

/// Chebyshev radius by which flat regions are shrunk.
const EROSION: usize = 2;

/// The phantom and its strictly interior flat regions. `LoadedPgm` ignores
/// the requested size and yields no regions.
pub fn make_phantom(kind: &PhantomKind, width: usize, height: usize) -> Result<(ImageGrid, FlatAreaCollection)> {
    let values = match kind {
        PhantomKind::Disk => {
            if width < 8 || height < 8 {
                return Err(Error::InvalidParameter(format!("disk phantom needs at least 8x8, got {width}x{height}")));
            }
            let r = width.min(height) as f64 / 4.0;
            let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
            let mut v = vec![0.0; width * height];
            for j in 0..height {
                for i in 0..width {
                    let (dx, dy) = (i as f64 + 0.5 - cx, j as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= r * r {
                        v[j * width + i] = 1.0;
                    }
                }
            }
            v
        }
        PhantomKind::Steps1D => {
            if width < 8 || height == 0 {
                return Err(Error::InvalidParameter(format!("step phantom needs width at least 8, got {width}")));
            }
            (0..width * height)
                .map(|p| if p % width >= width / 2 { 1.0 } else { 0.0 })
                .collect()
        }
        PhantomKind::LoadedPgm(path) => {
            let img = read_pgm(path)?;
            return Ok((ImageGrid::new(img.width, img.height, img.values)?, FlatAreaCollection::new(Vec::new())));
        }
    };
    let grid = ImageGrid::new(width, height, values)?;
    let regions = flat_regions(&grid, EROSION);
    Ok((grid, regions))
}

/// Pixels whose whole Chebyshev neighbourhood (clipped to the image) has
/// their value, grouped by value in order of first appearance.
fn flat_regions(img: &ImageGrid, radius: usize) -> FlatAreaCollection {
    let (w, h) = (img.width, img.height);
    let mut levels: Vec<f64> = Vec::new();
    let mut regions: Vec<Vec<usize>> = Vec::new();
    for j in 0..h {
        for i in 0..w {
            let v = img.values[j * w + i];
            let flat = (j.saturating_sub(radius)..=(j + radius).min(h - 1))
                .all(|jj| (i.saturating_sub(radius)..=(i + radius).min(w - 1)).all(|ii| img.values[jj * w + ii] == v));
            if !flat {
                continue;
            }
            match levels.iter().position(|&l| l == v) {
                Some(k) => regions[k].push(j * w + i),
                None => {
                    levels.push(v);
                    regions.push(vec![j * w + i]);
                }
            }
        }
    }
    FlatAreaCollection::new(regions)
}

/// i.i.d. `N(0, std²)` samples: `std` times the standard normal stream of
/// [`NoiseRng`] seeded with `seed`.
pub fn gaussian_noise(len: usize, std: f64, seed: u64) -> Result<Vec<f64>> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::InvalidParameter(format!("noise std must be finite and nonnegative, got {std}")));
    }
    let mut v = NoiseRng::new(seed).normal_vec(len);
    v.iter_mut().for_each(|x| *x *= std);
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    /// `b = A(x̂ + noise)`
    PixelwiseGaussianThenBlur,
    /// `b = Ax̂ + noise`
    AdditiveGaussianOnData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedData {
    pub b_delta: Vec<f64>,
    /// `Ax̂`
    pub b_clean: Vec<f64>,
    /// `‖b_δ − Ax̂‖`
    pub delta_measured: f64,
}

pub fn generate_data(xhat: &[f64], a: &LinearMap, model: &NoiseModel) -> Result<GeneratedData> {
    let b_clean = a.apply(xhat)?;
    let b_delta = match model.kind {
        NoiseKind::PixelwiseGaussianThenBlur => {
            let noise = gaussian_noise(xhat.len(), model.level, model.seed)?;
            let noisy: Vec<f64> = xhat.iter().zip(&noise).map(|(x, e)| x + e).collect();
            a.apply(&noisy)?
        }
        NoiseKind::AdditiveGaussianOnData => {
            let noise = gaussian_noise(b_clean.len(), model.level, model.seed)?;
            b_clean.iter().zip(&noise).map(|(b, e)| b + e).collect()
        }
    };
    let delta_measured = dist(&b_delta, &b_clean);
    Ok(GeneratedData {
        b_delta,
        b_clean,
        delta_measured,
    })
}

/// How rows of a sweep draw their noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SeedPolicy {
    /// Every row scales the same standard-normal draw.
    #[default]
    Common,
    /// Row `i` uses the stream `derive_seed(seed, i)`.
    PerRow,
}

impl SeedPolicy {
    pub fn row_seed(self, seed: u64, row: usize) -> u64 {
        match self {
            SeedPolicy::Common => seed,
            SeedPolicy::PerRow => derive_seed(seed, row as u64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub seed: u64,
    pub seed_policy: SeedPolicy,
}

impl SweepOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            seed_policy: SeedPolicy::Common,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelName {
    Delta,
    DeltaBreve,
}

impl LevelName {
    pub fn as_str(self) -> &'static str {
        match self {
            LevelName::Delta => "delta",
            LevelName::DeltaBreve => "delta_breve",
        }
    }
}

/// One corruption level of a sweep. Optional columns depend on the
/// experiment: `bound_*` is the Tikhonov estimate for Tikhonov rows and the
/// forward-backward accuracy estimate for Lasso rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: f64,
    pub alpha: f64,
    pub n_iters: usize,
    pub dist_to_truth: f64,
    pub normalized_dist: f64,
    pub ergodic_normalized_dist: Option<f64>,
    pub set_dist: Option<f64>,
    /// `‖b_δ − Ax̂‖`
    pub data_dist: f64,
    pub objective: f64,
    pub e_delta: Option<f64>,
    pub bound_lhs: Option<f64>,
    pub bound_rhs: Option<f64>,
    pub bregman_lhs: Option<f64>,
    pub bregman_rhs: Option<f64>,
    /// Largest rise of the ergodic objective over the last quarter of iterations.
    pub late_ergodic_increase: Option<f64>,
    /// Wall time; kept out of the CSV so reruns are byte-identical.
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub curve: String,
    pub level_name: LevelName,
    pub rows: Vec<SweepRow>,
    pub truncated: bool,
}

pub const CSV_COLUMNS: [&str; 16] = [
    "curve",
    "level",
    "alpha",
    "n_iters",
    "dist_to_truth",
    "normalized_dist",
    "ergodic_normalized_dist",
    "set_dist",
    "data_dist",
    "objective",
    "e_delta",
    "bound_lhs",
    "bound_rhs",
    "bregman_lhs",
    "bregman_rhs",
    "late_ergodic_increase",
];

/// 17 significant digits, enough to round-trip any double.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

impl SweepResult {
    fn csv_record(&self, r: &SweepRow) -> Vec<String> {
        vec![
            self.curve.clone(),
            format_float(r.level),
            format_float(r.alpha),
            r.n_iters.to_string(),
            format_float(r.dist_to_truth),
            format_float(r.normalized_dist),
            opt(r.ergodic_normalized_dist),
            opt(r.set_dist),
            format_float(r.data_dist),
            format_float(r.objective),
            opt(r.e_delta),
            opt(r.bound_lhs),
            opt(r.bound_rhs),
            opt(r.bregman_lhs),
            opt(r.bregman_rhs),
            opt(r.late_ergodic_increase),
        ]
    }

    /// Rows whose recorded theorem inequalities fail by more than
    /// [`THEOREM_SLACK`].
    pub fn theorem_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.rows {
            if let (Some(l), Some(h)) = (r.bound_lhs, r.bound_rhs) {
                if !(l <= h + THEOREM_SLACK) {
                    out.push(format!("{} {}={}: bound {l} > {h}", self.curve, self.level_name.as_str(), r.level));
                }
            }
            if let (Some(l), Some(h)) = (r.bregman_lhs, r.bregman_rhs) {
                if !(l <= h + THEOREM_SLACK) || l < -THEOREM_SLACK {
                    out.push(format!("{} {}={}: bregman {l} > {h}", self.curve, self.level_name.as_str(), r.level));
                }
            }
        }
        out
    }

    pub fn row_at(&self, level: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.level == level)
    }
}

/// Writes sweeps as one CSV table; the level column is headed `delta` or
/// `delta_breve` after the first sweep.
pub fn write_csv<W: std::io::Write>(out: W, sweeps: &[SweepResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let level = sweeps.first().map_or("delta", |s| s.level_name.as_str());
    let header: Vec<&str> = CSV_COLUMNS.iter().map(|&c| if c == "level" { level } else { c }).collect();
    w.write_record(&header).map_err(csv_err)?;
    for s in sweeps {
        for r in &s.rows {
            w.write_record(s.csv_record(r)).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn check_grid(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("empty corruption grid".into()));
    }
    if levels.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidParameter("corruption levels must be positive".into()));
    }
    if levels.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("corruption grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// `A` together with `v`, so that `x̂ = A*v` and `ŵ = −v` certify the source
/// condition of `½‖·‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TikhonovInstance {
    pub a: DenseMatrix,
    pub v: Vec<f64>,
}

impl TikhonovInstance {
    pub fn new(a: DenseMatrix, v: Vec<f64>) -> Result<Self> {
        check_len("TikhonovInstance", a.rows(), v.len())?;
        Ok(Self { a, v })
    }

    /// Entries of `A` are `N(0, 1/m)`, entries of `v` are `N(0, 1)`.
    pub fn random(m: usize, n: usize, seed: u64) -> Result<Self> {
        let mut rng = NoiseRng::new(seed);
        let s = 1.0 / (m as f64).sqrt();
        let a = DenseMatrix::new(m, n, rng.normal_vec(m * n).into_iter().map(|x| s * x).collect())?;
        Self::new(a, rng.normal_vec(m))
    }

    /// Finds `v` with `A*v = x̂` by a regularised normal-equation solve.
    pub fn from_xhat(a: DenseMatrix, xhat: &[f64]) -> Result<Self> {
        check_len("TikhonovInstance::from_xhat", a.cols(), xhat.len())?;
        let at = a.transpose();
        let mut aat = at.gram();
        let trace: f64 = (0..aat.rows()).map(|i| aat.get(i, i)).sum();
        aat.add_diagonal(1e-14 * trace.max(1.0));
        let v = aat.cholesky_solve(&a.matvec(xhat)?)?;
        let resid = dist(&a.matvec_t(&v)?, xhat);
        if resid > 1e-8 * (1.0 + norm(xhat)) {
            return Err(Error::InvalidCertificate(resid));
        }
        Self::new(a, v)
    }

    pub fn xhat(&self) -> Vec<f64> {
        self.a.matvec_t(&self.v).expect("dimensions checked at construction")
    }

    pub fn certificate(&self) -> SourceCertificate {
        let w: Vec<f64> = self.v.iter().map(|x| -x).collect();
        SourceCertificate {
            d: self.xhat(),
            w,
            residual: 0.0,
            found: true,
            iterations: 0,
        }
    }
}

/// Closed-form Tikhonov solves with additive data noise of standard
/// deviation `δ` per component.
pub fn run_tikhonov_sweep(
    inst: &TikhonovInstance,
    schedule: &Schedule,
    deltas: &[f64],
    opts: &SweepOptions,
) -> Result<SweepResult> {
    check_grid(deltas)?;
    let a_op = LinearMap::Dense(inst.a.clone());
    let xhat = inst.xhat();
    let cert = inst.certificate();
    let w_sq = norm_sq(&cert.w);
    let reg = Functional::squared_norm(1.0)?;
    let xnorm = norm(&xhat);
    let mut rows = Vec::with_capacity(deltas.len());
    for (i, &level) in deltas.iter().enumerate() {
        let t0 = Instant::now();
        let data = generate_data(
            &xhat,
            &a_op,
            &NoiseModel {
                kind: NoiseKind::AdditiveGaussianOnData,
                level,
                seed: opts.seed_policy.row_seed(opts.seed, i),
            },
        )?;
        let alpha = alpha_of(schedule, level)?;
        let x = tikhonov_solve(&inst.a, &data.b_delta, alpha)?;
        let spec = ProblemSpec::new(a_op.clone(), data.b_delta.clone(), reg.with_weight(alpha)?, None)?;
        let objective = spec.objective(&x)?;
        let e_delta = (objective - spec.objective(&xhat)?).max(0.0);
        let delta = data.delta_measured;
        let d = dist(&x, &xhat);
        let breg = verify_bregman_bound(
            &CertifiedRun {
                regulariser: &reg,
                certificate: &cert,
                x_delta: &x,
                xhat: &xhat,
                e_delta,
                delta,
                alpha,
            },
            1e-12,
        )?;
        rows.push(SweepRow {
            level,
            alpha,
            n_iters: 1,
            dist_to_truth: d,
            normalized_dist: d / xnorm,
            ergodic_normalized_dist: None,
            set_dist: None,
            data_dist: delta,
            objective,
            e_delta: Some(e_delta),
            bound_lhs: Some(d * d),
            bound_rhs: Some(delta * delta / (2.0 * alpha) + 0.5 * alpha * w_sq),
            bregman_lhs: Some(breg.lhs),
            bregman_rhs: Some(breg.rhs),
            late_ergodic_increase: None,
            runtime_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(SweepResult {
        curve: "tikhonov".into(),
        level_name: LevelName::Delta,
        rows,
        truncated: false,
    })
}

/// `x ↦ dist(x, X̂)`
pub type SetDistance = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A Lasso instance with a known solution set.
pub struct LassoInstance {
    pub a: DenseMatrix,
    pub xhat: Vec<f64>,
    pub certificate: Option<SourceCertificate>,
    /// `dist(x, X̂)`
    pub set_distance: SetDistance,
}

impl LassoInstance {
    /// `A = [[1, 1]]`, `x̂ = (1, 0)`, `X̂` the segment from `(1, 0)` to `(0, 1)`,
    /// certified by `ŵ = −1`, `d̂ = (1, 1)`.
    pub fn segment_toy() -> Self {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).expect("static matrix");
        Self {
            a,
            xhat: vec![1.0, 0.0],
            certificate: Some(SourceCertificate {
                w: vec![-1.0],
                d: vec![1.0, 1.0],
                residual: 0.0,
                found: true,
                iterations: 0,
            }),
            set_distance: Box::new(|x| segment_distance(&[1.0, 0.0], &[0.0, 1.0], x)),
        }
    }
}

/// Forward-backward from zero with `τ = 0.99/‖A‖²` and `N_δ` iterations per row.
pub fn run_lasso_sweep(
    inst: &LassoInstance,
    schedule: &Schedule,
    deltas: &[f64],
    opts: &SweepOptions,
) -> Result<SweepResult> {
    check_grid(deltas)?;
    let a_op = LinearMap::Dense(inst.a.clone());
    let lmax = inst.a.gram().symmetric_eigenvalues(1e-10)?.last().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return Err(Error::ZeroOperator);
    }
    let tau = 0.99 / lmax;
    let params = StepParams::forward_backward(tau, lmax)?;
    let xhat = &inst.xhat;
    let x0 = vec![0.0; xhat.len()];
    let xnorm = norm(xhat);
    let l1 = Functional::l1(1.0)?;
    let mut rows = Vec::with_capacity(deltas.len());
    for (i, &level) in deltas.iter().enumerate() {
        let t0 = Instant::now();
        let data = generate_data(
            xhat,
            &a_op,
            &NoiseModel {
                kind: NoiseKind::AdditiveGaussianOnData,
                level,
                seed: opts.seed_policy.row_seed(opts.seed, i),
            },
        )?;
        let alpha = alpha_of(schedule, level)?;
        let n = n_of(schedule, level)?;
        let spec = ProblemSpec::new(a_op.clone(), data.b_delta.clone(), l1.with_weight(alpha)?, None)?;
        let (x, _) = forward_backward_observed(&spec, &params, &x0, n, |_, _, _| {})?;
        let objective = spec.objective(&x)?;
        let e_delta = (objective - spec.objective(xhat)?).max(0.0);
        let d = dist(&x, xhat);
        let (bregman_lhs, bregman_rhs) = match &inst.certificate {
            Some(cert) => {
                let b = verify_bregman_bound(
                    &CertifiedRun {
                        regulariser: &l1,
                        certificate: cert,
                        x_delta: &x,
                        xhat,
                        e_delta,
                        delta: data.delta_measured,
                        alpha,
                    },
                    1e-8,
                )?;
                (Some(b.lhs), Some(b.rhs))
            }
            None => (None, None),
        };
        rows.push(SweepRow {
            level,
            alpha,
            n_iters: n,
            dist_to_truth: d,
            normalized_dist: d / xnorm,
            ergodic_normalized_dist: None,
            set_dist: Some((inst.set_distance)(&x)),
            data_dist: data.delta_measured,
            objective,
            e_delta: Some(e_delta),
            bound_lhs: Some(objective - spec.objective(xhat)?),
            bound_rhs: Some(fb_accuracy_bound(&x0, xhat, tau, n)?),
            bregman_lhs,
            bregman_rhs,
            late_ergodic_increase: None,
            runtime_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(SweepResult {
        curve: "lasso".into(),
        level_name: LevelName::Delta,
        rows,
        truncated: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Curve {
    /// Iterations from the schedule's `N` rule.
    Schedule,
    FixedN(usize),
}

impl Curve {
    pub fn label(&self) -> String {
        match self {
            Curve::Schedule => "n_delta".into(),
            Curve::FixedN(n) => format!("fixed_{n}"),
        }
    }

    fn n_for(&self, schedule: &Schedule, level: f64) -> Result<usize> {
        match self {
            Curve::Schedule => n_of(schedule, level),
            Curve::FixedN(n) => Ok(*n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvSweepConfig {
    pub phantom: ImageGrid,
    pub blur_std: f64,
    pub blur_window: usize,
    pub schedule: Schedule,
    pub delta_breves: Vec<f64>,
    pub curves: Vec<Curve>,
    pub options: SweepOptions,
    /// Runtime cap; rows projected to exceed it are dropped.
    pub cap_seconds: Option<f64>,
}

impl TvSweepConfig {
    /// Blur std 2 with a 7×7 window, curves `N_δ̆`, `N = 100`, `N = 1000`.
    pub fn new(phantom: ImageGrid, delta_breves: Vec<f64>, seed: u64) -> Self {
        Self {
            phantom,
            blur_std: 2.0,
            blur_window: 7,
            schedule: Schedule::iterated_log(),
            delta_breves,
            curves: vec![Curve::Schedule, Curve::FixedN(100), Curve::FixedN(1000)],
            options: SweepOptions::new(seed),
            cap_seconds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvSweepOutput {
    /// One sweep per requested curve, in request order.
    pub curves: Vec<SweepResult>,
    /// `normalized_dist = ‖b_δ̆ − x̂‖/‖x̂‖`, the quality of the raw data.
    pub data: SweepResult,
    pub truncated: bool,
    pub k_norm: f64,
    /// Levels actually run.
    pub levels_run: Vec<f64>,
}

struct TvRow {
    per_curve: Vec<SweepRow>,
    data: SweepRow,
}

/// The TV deblurring operator `K = (blur, ∇)` for an image.
pub fn tv_deblur_operators(width: usize, height: usize, blur_std: f64, blur_window: usize) -> Result<(LinearMap, LinearMap)> {
    let blur = make_gaussian_blur(width, height, blur_std, blur_window)?;
    let grad = make_grad2d(width, height)?;
    Ok((blur, grad))
}

/// PDPS from zero with `τ = 5/L`, `σ = 0.99/(5L)` for every level and curve.
/// One run per level serves all curves: each curve reads the iterate at its
/// own `N`.
pub fn run_tv_deblur_sweep(cfg: &TvSweepConfig) -> Result<TvSweepOutput> {
    check_grid(&cfg.delta_breves)?;
    let img = &cfg.phantom;
    if img.width < 16 || img.height < 16 {
        return Err(Error::InvalidParameter(format!(
            "TV sweep needs at least 16x16, got {}x{}",
            img.width, img.height
        )));
    }
    if cfg.curves.is_empty() {
        return Err(Error::InvalidParameter("no curves requested".into()));
    }
    let (blur, grad) = tv_deblur_operators(img.width, img.height, cfg.blur_std, cfg.blur_window)?;
    let k = make_stack(blur.clone(), grad.clone())?;
    let k_norm = estimate_norm(&k, 1e-10, 10_000, 0)?.norm;
    let params = StepParams::pdps_default(k_norm)?;

    let mut plan = Vec::with_capacity(cfg.delta_breves.len());
    for (i, &level) in cfg.delta_breves.iter().enumerate() {
        let ns = cfg
            .curves
            .iter()
            .map(|c| c.n_for(&cfg.schedule, level))
            .collect::<Result<Vec<_>>>()?;
        plan.push((i, level, ns));
    }
    let mut truncated = false;
    if let Some(cap) = cfg.cap_seconds {
        let per_iter = time_per_iteration(&k, &params, &blur, img)?;
        let mut total = 0.0;
        let keep = plan
            .iter()
            .take_while(|(_, _, ns)| {
                total += per_iter * *ns.iter().max().unwrap_or(&0) as f64;
                total <= cap
            })
            .count();
        truncated = keep < plan.len();
        plan.truncate(keep);
    }
    let levels_run: Vec<f64> = plan.iter().map(|(_, l, _)| *l).collect();

    let rows = par_map(plan, |(i, level, ns)| tv_row(cfg, &blur, &grad, &params, i, level, &ns));
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let mut curves: Vec<SweepResult> = cfg
        .curves
        .iter()
        .map(|c| SweepResult {
            curve: c.label(),
            level_name: LevelName::DeltaBreve,
            rows: Vec::with_capacity(rows.len()),
            truncated,
        })
        .collect();
    let mut data = SweepResult {
        curve: "data".into(),
        level_name: LevelName::DeltaBreve,
        rows: Vec::with_capacity(rows.len()),
        truncated,
    };
    for row in rows {
        for (c, r) in curves.iter_mut().zip(row.per_curve) {
            c.rows.push(r);
        }
        data.rows.push(row.data);
    }
    Ok(TvSweepOutput {
        curves,
        data,
        truncated,
        k_norm,
        levels_run,
    })
}

fn time_per_iteration(k: &LinearMap, params: &StepParams, blur: &LinearMap, img: &ImageGrid) -> Result<f64> {
    let b = blur.apply(&img.values)?;
    let form = tv_form(k, b, 0.5)?;
    let iters = 20;
    let t0 = Instant::now();
    pdps_observed(&form, params, &vec![0.0; img.len()], &vec![0.0; k.codomain_dim()], iters, None, |_, _, _| {})?;
    Ok(t0.elapsed().as_secs_f64() / iters as f64)
}

fn tv_form(k: &LinearMap, b: Vec<f64>, alpha: f64) -> Result<crate::solvers::PrimalDualForm> {
    let n_data = b.len();
    Ok(crate::solvers::PrimalDualForm {
        primal: Functional::zero(),
        k: k.clone(),
        dual: crate::solvers::SeparableSum::new(vec![
            (Functional::squared_distance(b, 1.0)?, n_data),
            (Functional::isotropic_tv(alpha)?, k.codomain_dim() - n_data),
        ]),
    })
}

fn tv_row(
    cfg: &TvSweepConfig,
    blur: &LinearMap,
    grad: &LinearMap,
    params: &StepParams,
    index: usize,
    level: f64,
    ns: &[usize],
) -> Result<TvRow> {
    let t0 = Instant::now();
    let xhat = &cfg.phantom.values;
    let xnorm = norm(xhat);
    let data = generate_data(
        xhat,
        blur,
        &NoiseModel {
            kind: NoiseKind::PixelwiseGaussianThenBlur,
            level,
            seed: cfg.options.seed_policy.row_seed(cfg.options.seed, index),
        },
    )?;
    let alpha = alpha_of(&cfg.schedule, level)?;
    let spec = ProblemSpec::new(blur.clone(), data.b_delta.clone(), Functional::isotropic_tv(alpha)?, Some(grad.clone()))?;
    let form = spec.primal_dual_form()?;
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let n = xhat.len();

    let mut erg = vec![0.0; n];
    let mut snaps: Vec<Option<(f64, f64, f64)>> = vec![None; ns.len()];
    let trace = pdps_observed(
        &form,
        params,
        &vec![0.0; n],
        &vec![0.0; form.k.codomain_dim()],
        n_max,
        None,
        |k, x, _| {
            let w = 1.0 / k as f64;
            erg.iter_mut().zip(x).for_each(|(m, v)| *m += w * (v - *m));
            for (slot, &target) in snaps.iter_mut().zip(ns) {
                if target == k {
                    *slot = Some((dist(x, xhat), dist(&erg, xhat), t0.elapsed().as_secs_f64() * 1e3));
                }
            }
        },
    )?;
    let x0_dist = norm(xhat);
    let mut per_curve = Vec::with_capacity(ns.len());
    for (slot, &target) in snaps.iter().zip(ns) {
        let (d, ed, ms) = slot.unwrap_or((x0_dist, x0_dist, t0.elapsed().as_secs_f64() * 1e3));
        let objective = if target == 0 {
            trace.initial_objective
        } else {
            trace.records[target - 1].objective
        };
        let late = (target >= 4).then(|| {
            let from = target - target / 4;
            trace.records[from - 1..target]
                .windows(2)
                .map(|w| w[1].ergodic_objective.unwrap_or(0.0) - w[0].ergodic_objective.unwrap_or(0.0))
                .fold(f64::NEG_INFINITY, f64::max)
        });
        per_curve.push(SweepRow {
            level,
            alpha,
            n_iters: target,
            dist_to_truth: d,
            normalized_dist: d / xnorm,
            ergodic_normalized_dist: Some(ed / xnorm),
            set_dist: None,
            data_dist: data.delta_measured,
            objective,
            e_delta: None,
            bound_lhs: None,
            bound_rhs: None,
            bregman_lhs: None,
            bregman_rhs: None,
            late_ergodic_increase: late,
            runtime_ms: ms,
        });
    }
    let raw = dist(&data.b_delta, xhat);
    Ok(TvRow {
        per_curve,
        data: SweepRow {
            level,
            alpha,
            n_iters: 0,
            dist_to_truth: raw,
            normalized_dist: raw / xnorm,
            ergodic_normalized_dist: None,
            set_dist: None,
            data_dist: data.delta_measured,
            objective: spec.objective(&data.b_delta)?,
            e_delta: None,
            bound_lhs: None,
            bound_rhs: None,
            bregman_lhs: None,
            bregman_rhs: None,
            late_ergodic_increase: None,
            runtime_ms: 0.0,
        },
    })
}

/// The pointwise dual field `φ = z/α` from the `∇`-block `z` of a PDPS dual
/// iterate whose first `n_data` entries belong to the data term.
pub fn tv_dual_field(y: &[f64], n_data: usize, alpha: f64) -> Result<Vec<f64>> {
    if n_data > y.len() || !(alpha > 0.0) {
        return Err(Error::InvalidParameter("bad dual split or alpha".into()));
    }
    Ok(y[n_data..].iter().map(|v| v / alpha).collect())
}

/// `‖x − x̂‖/‖x̂‖`
pub fn normalized_distance(x: &[f64], xhat: &[f64]) -> f64 {
    norm(&sub(x, xhat)) / norm(xhat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::{AlphaRule, GammaRule, NRule};

    #[test]
    fn noise_statistics_and_scaling() {
        let v = gaussian_noise(100_000, 1.0, 42).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
        assert!(mean.abs() <= 0.02, "{mean}");
        assert!((0.99..=1.01).contains(&var.sqrt()), "{var}");
        assert_eq!(v, gaussian_noise(100_000, 1.0, 42).unwrap());
        let s = gaussian_noise(1000, 0.37, 42).unwrap();
        for (a, b) in s.iter().zip(&v) {
            assert_eq!(*a, 0.37 * b);
        }
    }

    #[test]
    fn generate_data_examples() {
        let a = LinearMap::dense(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]]).unwrap());
        let xhat = [1.0, -1.0];
        let zero = generate_data(&xhat, &a, &NoiseModel { kind: NoiseKind::AdditiveGaussianOnData, level: 0.0, seed: 1 }).unwrap();
        assert_eq!(zero.b_delta, zero.b_clean);
        assert_eq!(zero.delta_measured, 0.0);
        let add = generate_data(&xhat, &a, &NoiseModel { kind: NoiseKind::AdditiveGaussianOnData, level: 0.1, seed: 1 }).unwrap();
        assert!((add.delta_measured - norm(&gaussian_noise(2, 0.1, 1).unwrap())).abs() < 1e-15);

        let blur = make_gaussian_blur(16, 16, 2.0, 7).unwrap();
        let (img, _) = make_phantom(&PhantomKind::Disk, 16, 16).unwrap();
        let g = generate_data(&img.values, &blur, &NoiseModel { kind: NoiseKind::PixelwiseGaussianThenBlur, level: 0.2, seed: 3 })
            .unwrap();
        let bound = estimate_norm(&blur, 1e-12, 1000, 0).unwrap().norm * norm(&gaussian_noise(256, 0.2, 3).unwrap());
        assert!(g.delta_measured <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn phantom_examples() {
        let (img, regions) = make_phantom(&PhantomKind::Disk, 32, 32).unwrap();
        assert!(img.values.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(regions.regions.len(), 2);
        regions.validate(img.len()).unwrap();
        let grad = make_grad2d(32, 32).unwrap();
        let g = grad.apply(&img.values).unwrap();
        let n = img.len();
        for r in &regions.regions {
            for &i in r {
                assert_eq!(g[i], 0.0);
                assert_eq!(g[i + n], 0.0);
            }
        }
        let tv = Functional::isotropic_tv(1.0).unwrap().value(&g).unwrap();
        assert!(tv > 0.0);
        for i in 0..n {
            let nonzero = g[i] != 0.0 || g[i + n] != 0.0;
            if nonzero {
                let (x, y) = ((i % 32) as f64 + 0.5 - 16.0, (i / 32) as f64 + 0.5 - 16.0);
                let r = (x * x + y * y).sqrt();
                assert!((r - 8.0).abs() < 2.0, "gradient at radius {r}");
            }
        }

        let (steps, _) = make_phantom(&PhantomKind::Steps1D, 8, 1).unwrap();
        assert_eq!(steps.values, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(make_phantom(&PhantomKind::Disk, 7, 32).is_err());
    }

    #[test]
    fn csv_is_round_trippable() {
        assert_eq!(format_float(0.1).parse::<f64>().unwrap(), 0.1);
        let v = 1.0 / 3.0;
        assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        assert_eq!(format_float(v).split('e').next().unwrap().replace('.', "").len(), 17);
    }

    #[test]
    fn tikhonov_sweep_identity() {
        let inst = TikhonovInstance::new(DenseMatrix::identity(5), vec![1.0, -0.5, 0.25, 2.0, 0.0]).unwrap();
        let s = Schedule::new(AlphaRule::Power { c: 1.0, p: 1.0 }, NRule::Fixed(1), GammaRule::EqualAlpha).unwrap();
        let r = run_tikhonov_sweep(&inst, &s, &[1e-1, 1e-2, 1e-3, 1e-4], &SweepOptions::new(5)).unwrap();
        assert!(r.rows.windows(2).all(|w| w[1].dist_to_truth < w[0].dist_to_truth));
        assert!(r.theorem_violations().is_empty());
        // no noise: the bound reduces to √(α/2)·‖ŵ‖
        let alpha = 0.01;
        let x = tikhonov_solve(&inst.a, &inst.xhat(), alpha).unwrap();
        assert!(dist(&x, &inst.xhat()) <= (alpha / 2.0).sqrt() * norm(&inst.v));
    }

    #[test]
    fn tikhonov_certificate_from_xhat() {
        let inst = TikhonovInstance::random(6, 6, 11).unwrap();
        let again = TikhonovInstance::from_xhat(inst.a.clone(), &inst.xhat()).unwrap();
        assert!(dist(&again.v, &inst.v) < 1e-6 * (1.0 + norm(&inst.v)));
        let wide = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert!(TikhonovInstance::from_xhat(wide, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn lasso_toy_sweep_converges_to_segment() {
        let inst = LassoInstance::segment_toy();
        let grid = [1e-1, 1e-2, 1e-3];
        let r = run_lasso_sweep(&inst, &Schedule::lasso_default(), &grid, &SweepOptions::new(2)).unwrap();
        let d: Vec<f64> = r.rows.iter().map(|r| r.set_dist.unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
        assert!(d[2] < d[0] / 10.0);
        assert!(r.theorem_violations().is_empty(), "{:?}", r.theorem_violations());
        let ratio: Vec<f64> = r.rows.iter().map(|r| r.bound_rhs.unwrap() / r.alpha).collect();
        assert!(ratio.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn tv_sweep_small_runs_and_is_deterministic() {
        let (img, _) = make_phantom(&PhantomKind::Disk, 16, 16).unwrap();
        let mut cfg = TvSweepConfig::new(img, vec![1.0, 0.1, 0.01], 7);
        cfg.curves = vec![Curve::Schedule, Curve::FixedN(50)];
        let a = run_tv_deblur_sweep(&cfg).unwrap();
        let b = run_tv_deblur_sweep(&cfg).unwrap();
        assert_eq!(a.curves.len(), 2);
        assert_eq!(a.data.rows.len(), 3);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        write_csv(&mut ca, &a.curves).unwrap();
        write_csv(&mut cb, &b.curves).unwrap();
        assert_eq!(ca, cb);
        let text = String::from_utf8(ca).unwrap();
        assert!(text.starts_with("curve,delta_breve,alpha,n_iters"));
    }

    #[test]
    fn tv_sweep_cap_truncates() {
        let (img, _) = make_phantom(&PhantomKind::Disk, 16, 16).unwrap();
        let mut cfg = TvSweepConfig::new(img, vec![1.0, 0.5], 7);
        cfg.curves = vec![Curve::FixedN(1_000_000_000)];
        cfg.cap_seconds = Some(0.01);
        let out = run_tv_deblur_sweep(&cfg).unwrap();
        assert!(out.truncated && out.levels_run.is_empty());
    }
}
