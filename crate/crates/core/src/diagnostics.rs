//! Numerical checks of source conditions, subregularity, ellipticity and the
//! error bounds. Sampled checks are evidence, not proofs: a passing report
//! only means no violation was found.

use serde::{Deserialize, Serialize};

use crate::dense::{smallest_nonzero_eigenvalue, DenseMatrix};
use crate::error::{check_len, Error, Result};
use crate::linop::{make_centring, FlatAreaCollection, LinearMap};
use crate::prox::{bregman_divergence_with_tol, sign_set_membership, Functional, SubgradientChoice};
use crate::rng::{derive_seed, NoiseRng};
use crate::vector::{dist, dot, norm, norm_inf, norm_sq, sub};

/// Components with `|x̂_k|` at or below this count as zero.
pub const ZERO_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCertificate {
    /// `ŵ`
    pub w: Vec<f64>,
    /// `d̂ = −A*ŵ`
    pub d: Vec<f64>,
    /// Distance of `d̂` to the required subdifferential.
    pub residual: f64,
    pub found: bool,
    pub iterations: usize,
}

impl SourceCertificate {
    /// Certificate from a known `ŵ`; `d̂` is recomputed as `−A*ŵ`.
    pub fn from_dual(a: &LinearMap, w: Vec<f64>, residual: f64) -> Result<Self> {
        let d = a.adjoint_apply(&w)?.into_iter().map(|v| -v).collect();
        Ok(Self {
            w,
            d,
            residual,
            found: true,
            iterations: 0,
        })
    }

    pub fn w_norm(&self) -> f64 {
        norm(&self.w)
    }
}

fn project_sign_set(xhat: &[f64], d: &[f64], out: &mut [f64]) {
    for ((o, &x), &v) in out.iter_mut().zip(xhat).zip(d) {
        *o = if x > ZERO_THRESHOLD {
            1.0
        } else if x < -ZERO_THRESHOLD {
            -1.0
        } else {
            v.clamp(-1.0, 1.0)
        };
    }
}

/// Gradient descent with step `1/‖A‖²` on `w ↦ ½ dist²(−A*w, Sign x̂)`,
/// started at `w = 0`. Success iff the final distance is at most `tol`.
pub fn find_l1_certificate(a: &DenseMatrix, xhat: &[f64], tol: f64, max_iter: usize) -> Result<SourceCertificate> {
    check_len("find_l1_certificate", a.cols(), xhat.len())?;
    let lmax = a.gram().symmetric_eigenvalues(1e-10)?.last().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return Err(Error::ZeroOperator);
    }
    let step = 1.0 / lmax;
    let n = a.cols();
    let mut w = vec![0.0; a.rows()];
    let mut d = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut grad = vec![0.0; a.rows()];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..=max_iter {
        a.matvec_t_into(&w, &mut d);
        d.iter_mut().for_each(|v| *v = -*v);
        project_sign_set(xhat, &d, &mut p);
        for ((ri, di), pi) in r.iter_mut().zip(&d).zip(&p) {
            *ri = di - pi;
        }
        residual = norm(&r);
        iterations = it;
        if residual <= tol || it == max_iter {
            break;
        }
        // ∇ = −A(d − P d)
        a.matvec_into(&r, &mut grad);
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi += step * gi;
        }
    }
    Ok(SourceCertificate {
        w,
        d,
        residual,
        found: residual <= tol,
        iterations,
    })
}

/// Whether `(x̂, d)` is strictly complementary, and the index set
/// `Z = {k : x̂_k = 0, |d_k| < 1}` (0-based, with `tol` slack).
pub fn strict_complementarity(xhat: &[f64], d: &[f64], tol: f64) -> Result<(bool, Vec<usize>)> {
    check_len("strict_complementarity", xhat.len(), d.len())?;
    if !sign_set_membership(xhat, d, tol) {
        return Err(Error::InvalidCertificate(
            xhat.iter()
                .zip(d)
                .map(|(&x, &v)| {
                    if x > tol {
                        (v - 1.0).abs()
                    } else if x < -tol {
                        (v + 1.0).abs()
                    } else {
                        (v.abs() - 1.0).max(0.0)
                    }
                })
                .fold(0.0, f64::max),
        ));
    }
    let zeros: Vec<usize> = (0..xhat.len()).filter(|&k| xhat[k].abs() <= tol).collect();
    let z: Vec<usize> = zeros.iter().copied().filter(|&k| d[k].abs() < 1.0 - tol).collect();
    Ok((z.len() == zeros.len(), z))
}

/// `A*A + Σ_{k∈Z} e_k e_kᵀ`
pub fn lasso_m_matrix(a: &DenseMatrix, z_set: &[usize]) -> Result<DenseMatrix> {
    let mut m = a.gram();
    for &k in z_set {
        if k >= a.cols() {
            return Err(Error::InvalidParameter(format!("index {k} out of range for {} columns", a.cols())));
        }
        m.set(k, k, m.get(k, k) + 1.0);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoGammaReport {
    pub z_set: Vec<usize>,
    pub lambda_min: f64,
    /// `sup_{x∈U} ‖x‖∞`, bounded by `‖x̂‖∞ + radius` on the ball `U`.
    pub rho: f64,
    /// `β₀ = ρ⁻¹·min_{k∈Z}(1 − |d_k|)`; infinite when `Z` is empty.
    pub beta0: f64,
    pub beta: f64,
    /// Admissible factors are `0 < γ < gamma_sup = min{½, β·λ_min}`.
    pub gamma_sup: f64,
}

impl LassoGammaReport {
    /// `fraction · gamma_sup`, `fraction ∈ (0, 1)`.
    pub fn gamma(&self, fraction: f64) -> f64 {
        fraction * self.gamma_sup
    }

    /// Largest `α` with `α ≤ ½ − γ`.
    pub fn alpha_max(gamma: f64) -> f64 {
        0.5 - gamma
    }
}

pub fn lasso_admissible_gamma(a: &DenseMatrix, xhat: &[f64], d: &[f64], radius: f64, tol: f64) -> Result<LassoGammaReport> {
    let (_, z) = strict_complementarity(xhat, d, tol)?;
    let m = lasso_m_matrix(a, &z)?;
    let lambda_min = smallest_nonzero_eigenvalue(&m, 1e-10)?;
    let rho = norm_inf(xhat) + radius;
    let beta0 = z
        .iter()
        .map(|&k| (1.0 - d[k].abs()) / rho)
        .fold(f64::INFINITY, f64::min);
    let beta = beta0.min(1.0);
    Ok(LassoGammaReport {
        z_set: z,
        lambda_min,
        rho,
        beta0,
        beta,
        gamma_sup: (beta * lambda_min).min(0.5),
    })
}

/// What the right-hand side of the sampled inequality measures.
pub enum SubregTarget<'a> {
    /// `‖x − x̂‖²`
    StrongNorm,
    /// `dist²(x, X̂)` with a caller-supplied distance.
    SemiStrongDist(&'a dyn Fn(&[f64]) -> f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubregSampling {
    pub radius: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Points along `x̂ + t·v/‖v‖` for `t = radius·2^{−j}`, `j < 10`.
    pub probes: Vec<Vec<f64>>,
    /// Keep only samples with `R(x) ≤ R(x̂) + ρ`.
    pub rho: Option<f64>,
    pub tol: f64,
}

impl SubregSampling {
    pub fn new(radius: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            radius,
            n_samples,
            seed,
            probes: Vec::new(),
            rho: None,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubregularityReport {
    pub gamma_tested: f64,
    pub gamma_delta: f64,
    pub n_samples: usize,
    pub n_filtered: usize,
    pub min_slack: f64,
    pub violated_at: Option<Vec<f64>>,
}

impl SubregularityReport {
    pub fn passes(&self) -> bool {
        self.violated_at.is_none()
    }
}

/// Samples
/// `α[R(x) − R(x̂) − ⟨d, x − x̂⟩] + (½ − γ)‖A(x − x̂)‖² − γ·γ_δ·target(x)`
/// around `x̂`. The data term cancels, so no data vector is needed.
#[allow(clippy::too_many_arguments)]
pub fn check_strong_subdiff_sampled(
    a: &LinearMap,
    reg: &Functional,
    alpha: f64,
    xhat: &[f64],
    d: &[f64],
    gamma: f64,
    gamma_delta: f64,
    sampling: &SubregSampling,
    target: SubregTarget<'_>,
) -> Result<SubregularityReport> {
    let n = xhat.len();
    check_len("check_strong_subdiff_sampled xhat", a.domain_dim(), n)?;
    check_len("check_strong_subdiff_sampled d", n, d.len())?;
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1/2), got {gamma}")));
    }
    if !(sampling.radius > 0.0) {
        return Err(Error::InvalidParameter("radius must be positive".into()));
    }
    let r_hat = reg.value(xhat)?;
    let slack = |x: &[f64]| -> Result<f64> {
        let dx = sub(x, xhat);
        let growth = reg.value(x)? - r_hat - dot(d, &dx);
        let fit = norm_sq(&a.apply(&dx)?);
        let t = match &target {
            SubregTarget::StrongNorm => norm_sq(&dx),
            SubregTarget::SemiStrongDist(f) => {
                let v = f(x);
                v * v
            }
        };
        Ok(alpha * growth + (0.5 - gamma) * fit - gamma * gamma_delta * t)
    };

    let mut points: Vec<Vec<f64>> = Vec::with_capacity(sampling.n_samples + 10 * sampling.probes.len());
    for i in 0..sampling.n_samples {
        let mut rng = NoiseRng::new(derive_seed(sampling.seed, i as u64));
        let off = rng.in_ball(n, sampling.radius);
        points.push(xhat.iter().zip(&off).map(|(a, b)| a + b).collect());
    }
    for v in &sampling.probes {
        check_len("check_strong_subdiff_sampled probe", n, v.len())?;
        let nv = norm(v);
        if nv == 0.0 {
            continue;
        }
        for j in 0..10 {
            let t = sampling.radius * 0.5f64.powi(j) / nv;
            points.push(xhat.iter().zip(v).map(|(a, b)| a + t * b).collect());
        }
    }

    let mut min_slack = f64::INFINITY;
    let mut worst = None;
    let mut kept = 0;
    let mut filtered = 0;
    for x in points {
        if let Some(rho) = sampling.rho {
            if reg.value(&x)? > r_hat + rho {
                filtered += 1;
                continue;
            }
        }
        kept += 1;
        let s = slack(&x)?;
        if s < min_slack {
            min_slack = s;
            worst = Some(x);
        }
    }
    let violated_at = if min_slack < -sampling.tol { worst } else { None };
    Ok(SubregularityReport {
        gamma_tested: gamma,
        gamma_delta,
        n_samples: kept,
        n_filtered: filtered,
        min_slack,
        violated_at,
    })
}

/// Exact distance to the segment `[p, q]`.
pub fn segment_distance(p: &[f64], q: &[f64], x: &[f64]) -> f64 {
    let e = sub(q, p);
    let ee = norm_sq(&e);
    let t = if ee == 0.0 { 0.0 } else { (dot(&sub(x, p), &e) / ee).clamp(0.0, 1.0) };
    let proj: Vec<f64> = p.iter().zip(&e).map(|(a, b)| a + t * b).collect();
    dist(x, &proj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenMethod {
    DenseJacobi,
    ShiftedPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub holds: bool,
    /// Estimate of `λ_min(K_𝒪*K_𝒪 + A*A)`.
    pub epsilon: f64,
    pub method: EigenMethod,
    pub converged: bool,
}

const DENSE_ELLIPTICITY_LIMIT: usize = 256;

/// Smallest eigenvalue of `K_𝒪*K_𝒪 + A*A`: dense Jacobi up to 256 pixels,
/// shifted power iteration above.
pub fn check_tv_ellipticity(
    a: &LinearMap,
    collection: &FlatAreaCollection,
    width: usize,
    height: usize,
    tol: f64,
) -> Result<EllipticityReport> {
    let n = width * height;
    check_len("check_tv_ellipticity", n, a.domain_dim())?;
    let ko = make_centring(collection, width, height)?;
    let s_apply = |x: &[f64]| -> Result<Vec<f64>> {
        let mut v = a.normal_apply(x)?;
        let c = ko.normal_apply(x)?;
        v.iter_mut().zip(&c).for_each(|(p, q)| *p += q);
        Ok(v)
    };
    if n <= DENSE_ELLIPTICITY_LIMIT {
        let mut m = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = s_apply(&e)?;
            e[j] = 0.0;
            for (i, v) in col.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        let eig = m.symmetric_eigenvalues(1e-9)?;
        let epsilon = eig[0];
        return Ok(EllipticityReport {
            holds: epsilon > tol,
            epsilon,
            method: EigenMethod::DenseJacobi,
            converged: true,
        });
    }
    let max_iter = 20_000;
    let (lmax, c1) = power_iteration(|x| s_apply(x), n, 0, max_iter)?;
    let shift = lmax * (1.0 + 1e-9);
    let (mu, c2) = power_iteration(
        |x| {
            let sx = s_apply(x)?;
            Ok(x.iter().zip(&sx).map(|(a, b)| shift * a - b).collect())
        },
        n,
        1,
        max_iter,
    )?;
    let epsilon = shift - mu;
    Ok(EllipticityReport {
        holds: epsilon > tol,
        epsilon,
        method: EigenMethod::ShiftedPower,
        converged: c1 && c2,
    })
}

fn power_iteration(
    op: impl Fn(&[f64]) -> Result<Vec<f64>>,
    n: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(f64, bool)> {
    let mut x = NoiseRng::new(seed).normal_vec(n);
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let y = op(&x)?;
        let next = dot(&x, &y);
        let ny = norm(&y);
        if ny == 0.0 {
            return Ok((0.0, true));
        }
        x = y.into_iter().map(|v| v / ny).collect();
        if (next - lambda).abs() <= 1e-12 * next.abs().max(1.0) {
            return Ok((next, true));
        }
        lambda = next;
    }
    Ok((lambda, false))
}

/// Whether every region is a strictly flat area for the dual field `phi`
/// (two components per pixel in the gradient layout).
pub fn strictly_flat_check(phi: &[f64], collection: &FlatAreaCollection, grad_xhat: &[f64], tol: f64) -> Result<bool> {
    check_len("strictly_flat_check", grad_xhat.len(), phi.len())?;
    if !phi.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter("dual field needs two components per pixel".into()));
    }
    let n = phi.len() / 2;
    collection.validate(n)?;
    let pix = |v: &[f64], i: usize| (v[i] * v[i] + v[i + n] * v[i + n]).sqrt();
    let worst = (0..n).map(|i| pix(phi, i)).fold(0.0, f64::max);
    if worst > 1.0 + tol {
        return Err(Error::InvalidParameter(format!(
            "dual field has pointwise norm {worst} > 1"
        )));
    }
    Ok(collection.regions.iter().all(|region| {
        region.iter().all(|&i| {
            grad_xhat[i].abs() <= tol && grad_xhat[i + n].abs() <= tol && pix(phi, i) <= 1.0 - tol
        })
    }))
}

/// A regularised solve together with its source certificate.
#[derive(Debug, Clone, Copy)]
pub struct CertifiedRun<'a> {
    /// `R` without the weight `α`.
    pub regulariser: &'a Functional,
    pub certificate: &'a SourceCertificate,
    pub x_delta: &'a [f64],
    pub xhat: &'a [f64],
    /// Accuracy `[J + αR](x_δ) − [J + αR](x̂)`, floored at zero.
    pub e_delta: f64,
    pub delta: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

const BOUND_SLACK: f64 = 1e-9;

/// `0 ≤ B_R^{−A*ŵ}(x_δ, x̂) ≤ e_δ/α + δ²/α + α‖ŵ‖²`
pub fn verify_bregman_bound(run: &CertifiedRun<'_>, cert_tol: f64) -> Result<BoundCheck> {
    let cert = run.certificate;
    if !(cert.residual <= cert_tol) {
        return Err(Error::InvalidCertificate(cert.residual));
    }
    let d = SubgradientChoice::new(cert.d.clone());
    let lhs = bregman_divergence_with_tol(run.regulariser, &d, run.x_delta, run.xhat, cert_tol.max(1e-9))?;
    let rhs = run.e_delta / run.alpha + run.delta * run.delta / run.alpha + run.alpha * norm_sq(&cert.w);
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs >= -BOUND_SLACK && lhs <= rhs + BOUND_SLACK,
    })
}

/// `‖x_δ − x̂‖² ≤ e_δ/(γγ_δ) + δ²/(2γ²γ_δ) + α²‖ŵ‖²/(2γ²γ_δ)`
pub fn verify_strong_estimate(run: &CertifiedRun<'_>, gamma: f64, gamma_delta: f64) -> Result<BoundCheck> {
    if !(gamma > 0.0) || !(gamma_delta > 0.0) {
        return Err(Error::InvalidParameter("gamma and gamma_delta must be positive".into()));
    }
    check_len("verify_strong_estimate", run.xhat.len(), run.x_delta.len())?;
    let lhs = norm_sq(&sub(run.x_delta, run.xhat));
    let g2 = 2.0 * gamma * gamma * gamma_delta;
    let rhs = run.e_delta / (gamma * gamma_delta)
        + run.delta * run.delta / g2
        + run.alpha * run.alpha * norm_sq(&run.certificate.w) / g2;
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + BOUND_SLACK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub c: f64,
    pub p: f64,
    pub c_prime: f64,
    pub q: f64,
    pub n_samples: usize,
    /// Minimum of `E(w) + ‖E′(z − w)‖^p − E(z)/C`, divided by one plus the
    /// largest of the three terms.
    pub min_triangle_slack: f64,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    /// Minimum of `C′‖E′(v)‖^q − E(v)`, scaled the same way.
    pub min_noise_slack: f64,
}

impl FidelityReport {
    pub fn triangle_holds(&self, tol: f64) -> bool {
        self.min_triangle_slack >= -tol
    }

    pub fn noise_holds(&self, tol: f64) -> bool {
        self.min_noise_slack >= -tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityConstants {
    pub c: f64,
    pub p: f64,
    pub c_prime: f64,
    pub q: f64,
}

/// Samples the pseudo-Hölder estimate `C⁻¹E(z) ≤ E(w) + ‖E′(z − w)‖^p` and the
/// noise-level bound `E(v) ≤ C′‖E′(v)‖^q` at random points of dimension `dim`,
/// with scales spread log-uniformly over `[10⁻³, 10³]`.
pub fn check_fidelity_conditions(
    e: &Functional,
    constants: FidelityConstants,
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<FidelityReport> {
    if !e.is_smooth() {
        return Err(Error::NotSmooth(e.name()));
    }
    let FidelityConstants { c, p, c_prime, q } = constants;
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("C must be positive, got {c}")));
    }
    let mut min_tri = f64::INFINITY;
    let mut worst = None;
    let mut min_noise = f64::INFINITY;
    for i in 0..samples {
        let mut rng = NoiseRng::new(derive_seed(seed, i as u64));
        let draw = |rng: &mut NoiseRng| {
            let s = 10f64.powf(6.0 * rng.uniform() - 3.0);
            rng.normal_vec(dim).into_iter().map(|v| s * v).collect::<Vec<f64>>()
        };
        let z = draw(&mut rng);
        let w = draw(&mut rng);
        let g = norm(&e.gradient(&sub(&z, &w))?);
        let (ew, gp, ez) = (e.value(&w)?, g.powf(p), e.value(&z)? / c);
        let s = (ew + gp - ez) / (1.0 + ew.abs().max(gp).max(ez.abs()));
        if s < min_tri {
            min_tri = s;
            worst = Some((z.clone(), w));
        }
        let gv = norm(&e.gradient(&z)?);
        let (bound, ez) = (c_prime * gv.powf(q), e.value(&z)?);
        min_noise = min_noise.min((bound - ez) / (1.0 + bound.abs().max(ez.abs())));
    }
    Ok(FidelityReport {
        c,
        p,
        c_prime,
        q,
        n_samples: samples,
        min_triangle_slack: min_tri,
        worst_pair: worst,
        min_noise_slack: min_noise,
    })
}

/// A differentiable forward map with its Jacobian action.
pub trait ForwardMap {
    fn domain_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `A′(x)v`
    fn jacobian_apply(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

impl ForwardMap for LinearMap {
    fn domain_dim(&self) -> usize {
        LinearMap::domain_dim(self)
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(x)
    }

    fn jacobian_apply(&self, _x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.apply(v)
    }
}

/// A forward map from two closures.
pub struct FnForwardMap<F, J> {
    pub dim: usize,
    pub eval: F,
    pub jacobian: J,
}

impl<F, J> ForwardMap for FnForwardMap<F, J>
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    fn domain_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("FnForwardMap::eval", self.dim, x.len())?;
        Ok((self.eval)(x))
    }

    fn jacobian_apply(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_len("FnForwardMap::jacobian_apply", self.dim, v.len())?;
        Ok((self.jacobian)(x, v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub eta: f64,
    pub n_samples: usize,
    pub min_slack: f64,
    pub worst: Option<Vec<f64>>,
}

impl LinearityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_slack >= -tol
    }
}

fn check_jacobian<M: ForwardMap + ?Sized>(map: &M, xhat: &[f64], seed: u64) -> Result<()> {
    let n = xhat.len();
    let h = 1e-6 * (1.0 + norm(xhat));
    for i in 0..3 {
        let mut v = NoiseRng::new(derive_seed(seed ^ 0x4a43, i)).normal_vec(n);
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let plus: Vec<f64> = xhat.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = xhat.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let fd: Vec<f64> = map
            .eval(&plus)?
            .iter()
            .zip(map.eval(&minus)?)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let jv = map.jacobian_apply(xhat, &v)?;
        let err = dist(&fd, &jv);
        if err > 1e-5 * (1.0 + norm(&jv)) {
            return Err(Error::JacobianMismatch(err));
        }
    }
    Ok(())
}

/// One sampled point and the two sides of the approximate linearity
/// inequality at it.
fn linearity_terms<M: ForwardMap + ?Sized>(map: &M, xhat: &[f64], resid: &[f64], ahat: &[f64], x: &[f64]) -> Result<(f64, f64)> {
    let dx = sub(x, xhat);
    let ax = map.eval(x)?;
    let jd = map.jacobian_apply(xhat, &dx)?;
    let diff = sub(&ax, ahat);
    let rem: Vec<f64> = diff.iter().zip(&jd).map(|(a, b)| a - b).collect();
    Ok((0.5 * norm_sq(&diff) + dot(resid, &rem), norm_sq(&jd)))
}

fn linearity_points(n: usize, xhat: &[f64], radius: f64, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..samples)
        .map(|i| {
            let off = NoiseRng::new(derive_seed(seed, i as u64)).in_ball(n, radius);
            xhat.iter().zip(&off).map(|(a, b)| a + b).collect()
        })
        .collect()
}

/// Samples
/// `½‖A(x) − A(x̂)‖² + ⟨A(x̂) − b_δ, A(x) − A(x̂) − A′(x̂)(x − x̂)⟩ − η‖A′(x̂)(x − x̂)‖²`
/// in the ball around `x̂`, after a finite-difference check of the Jacobian.
pub fn check_approximate_linearity<M: ForwardMap + ?Sized>(
    map: &M,
    xhat: &[f64],
    b_delta: &[f64],
    eta: f64,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<LinearityReport> {
    check_len("check_approximate_linearity", map.domain_dim(), xhat.len())?;
    check_jacobian(map, xhat, seed)?;
    let ahat = map.eval(xhat)?;
    check_len("check_approximate_linearity b_delta", ahat.len(), b_delta.len())?;
    let resid = sub(&ahat, b_delta);
    let mut min_slack = f64::INFINITY;
    let mut worst = None;
    for x in linearity_points(xhat.len(), xhat, radius, samples, seed) {
        let (lhs, quad) = linearity_terms(map, xhat, &resid, &ahat, &x)?;
        let s = lhs - eta * quad;
        if s < min_slack {
            min_slack = s;
            worst = Some(x);
        }
    }
    Ok(LinearityReport {
        eta,
        n_samples: samples,
        min_slack,
        worst,
    })
}

/// Largest `η ∈ [0, 1]` valid at every sample, by bisection to `1e-4`.
pub fn largest_linearity_eta<M: ForwardMap + ?Sized>(
    map: &M,
    xhat: &[f64],
    b_delta: &[f64],
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_len("largest_linearity_eta", map.domain_dim(), xhat.len())?;
    check_jacobian(map, xhat, seed)?;
    let ahat = map.eval(xhat)?;
    let resid = sub(&ahat, b_delta);
    let terms = linearity_points(xhat.len(), xhat, radius, samples, seed)
        .iter()
        .map(|x| linearity_terms(map, xhat, &resid, &ahat, x))
        .collect::<Result<Vec<_>>>()?;
    let valid = |eta: f64| terms.iter().all(|(l, q)| l - eta * q >= -1e-14 * (1.0 + q));
    if !valid(0.0) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    if valid(hi) {
        return Ok(hi);
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if valid(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::make_grad2d;

    fn dense(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn certificate_examples() {
        let c = find_l1_certificate(&DenseMatrix::identity(2), &[1.0, -2.0], 1e-12, 1000).unwrap();
        assert!(c.found && c.residual == 0.0);
        assert_eq!(c.d, vec![1.0, -1.0]);
        assert_eq!(c.w, vec![-1.0, 1.0]);

        let a = dense(&[vec![1.0, 1.0]]);
        let c = find_l1_certificate(&a, &[1.0, 0.0], 1e-12, 1000).unwrap();
        assert!(c.found);
        assert!((c.w[0] + 1.0).abs() < 1e-11);

        let c = find_l1_certificate(&a, &[1.0, -1.0], 1e-12, 1000).unwrap();
        assert!(!c.found);
        assert!(c.residual >= 2f64.sqrt() - 1e-9);
    }

    #[test]
    fn certificate_residual_does_not_increase() {
        let a = dense(&[vec![1.0, 0.5, -0.2], vec![0.3, 1.0, 0.8]]);
        let xhat = [1.0, 0.0, 0.0];
        let mut prev = f64::INFINITY;
        for it in 0..40 {
            let c = find_l1_certificate(&a, &xhat, 0.0, it).unwrap();
            assert!(c.residual <= prev + 1e-15);
            prev = c.residual;
        }
    }

    #[test]
    fn strict_complementarity_examples() {
        assert_eq!(strict_complementarity(&[1.0, 0.0], &[1.0, 0.5], 1e-12).unwrap(), (true, vec![1]));
        assert_eq!(strict_complementarity(&[1.0, 0.0], &[1.0, 1.0], 1e-12).unwrap(), (false, vec![]));
        assert_eq!(strict_complementarity(&[0.0, 0.0], &[0.0, 0.0], 1e-12).unwrap(), (true, vec![0, 1]));
        assert!(strict_complementarity(&[1.0, 0.0], &[0.5, 0.0], 1e-12).is_err());
    }

    #[test]
    fn m_matrix_examples() {
        let a = dense(&[vec![1.0, 0.0]]);
        assert_eq!(lasso_m_matrix(&a, &[1]).unwrap(), DenseMatrix::diag(&[1.0, 1.0]));
        assert_eq!(lasso_m_matrix(&a, &[]).unwrap(), a.gram());
        let b = dense(&[vec![1.0, 1.0]]);
        assert_eq!(lasso_m_matrix(&b, &[0, 1]).unwrap(), dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]));
        assert!(lasso_m_matrix(&b, &[2]).is_err());
    }

    #[test]
    fn subregularity_controls() {
        // squared norm: a global quadratic identity
        let id = LinearMap::identity(3);
        let sq = Functional::squared_norm(1.0).unwrap();
        let xhat = [0.3, -1.0, 2.0];
        let r = check_strong_subdiff_sampled(
            &id,
            &sq,
            0.1,
            &xhat,
            &xhat,
            0.25,
            0.1,
            &SubregSampling::new(1.0, 500, 4),
            SubregTarget::StrongNorm,
        )
        .unwrap();
        assert!(r.passes(), "{r:?}");

        let a = dense(&[vec![1.0, 0.0]]);
        let d = [1.0, 0.5];
        let g = lasso_admissible_gamma(&a, &[1.0, 0.0], &d, 0.1, 1e-12).unwrap();
        let gamma = g.gamma(0.9);
        let alpha = 0.05;
        assert!(alpha <= LassoGammaReport::alpha_max(gamma));
        let l1 = Functional::l1(1.0).unwrap();
        let r = check_strong_subdiff_sampled(
            &LinearMap::dense(a),
            &l1,
            alpha,
            &[1.0, 0.0],
            &d,
            gamma,
            alpha,
            &SubregSampling::new(0.1, 2000, 9),
            SubregTarget::StrongNorm,
        )
        .unwrap();
        assert!(r.passes(), "{r:?}");

        let b = LinearMap::dense(dense(&[vec![1.0, 1.0]]));
        let mut s = SubregSampling::new(0.1, 0, 1);
        s.probes.push(vec![-1.0, 1.0]);
        for gamma in [1e-6, 1e-3, 0.1, 0.49] {
            let r = check_strong_subdiff_sampled(&b, &l1, 0.05, &[1.0, 0.0], &[1.0, 1.0], gamma, 0.05, &s, SubregTarget::StrongNorm)
                .unwrap();
            assert!(!r.passes());
        }
    }

    #[test]
    fn semi_strong_uses_supplied_distance() {
        let b = LinearMap::dense(dense(&[vec![1.0, 1.0]]));
        let l1 = Functional::l1(1.0).unwrap();
        let mut s = SubregSampling::new(0.1, 0, 1);
        s.probes.push(vec![-1.0, 1.0]);
        let seg = |x: &[f64]| segment_distance(&[1.0, 0.0], &[0.0, 1.0], x);
        let r = check_strong_subdiff_sampled(
            &b,
            &l1,
            0.05,
            &[1.0, 0.0],
            &[1.0, 1.0],
            0.1,
            0.05,
            &s,
            SubregTarget::SemiStrongDist(&seg),
        )
        .unwrap();
        assert!(r.passes(), "{r:?}");
    }

    #[test]
    fn ellipticity_examples() {
        let (w, h) = (4, 4);
        let whole = FlatAreaCollection::new(vec![(0..16).collect()]);
        let r = check_tv_ellipticity(&LinearMap::identity(16), &whole, w, h, 1e-9).unwrap();
        assert!(r.holds && r.epsilon >= 1.0 - 1e-9);
        let r = check_tv_ellipticity(&LinearMap::zero(16, 1), &whole, w, h, 1e-9).unwrap();
        assert!(!r.holds && r.epsilon.abs() < 1e-9);
        let sum = LinearMap::dense(DenseMatrix::new(1, 16, vec![1.0; 16]).unwrap());
        let r = check_tv_ellipticity(&sum, &whole, w, h, 1e-9).unwrap();
        assert!(r.holds && (r.epsilon - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ellipticity_shifted_power_agrees() {
        let (w, h) = (20, 20);
        let whole = FlatAreaCollection::new(vec![(0..400).collect()]);
        let sum = LinearMap::dense(DenseMatrix::new(1, 400, vec![0.05; 400]).unwrap());
        let r = check_tv_ellipticity(&sum, &whole, w, h, 1e-6).unwrap();
        assert_eq!(r.method, EigenMethod::ShiftedPower);
        assert!(r.holds && r.converged, "{r:?}");
        assert!((r.epsilon - 1.0).abs() < 1e-6);
    }

    #[test]
    fn strictly_flat_examples() {
        let grad = make_grad2d(3, 3).unwrap();
        let g = grad.apply(&[1.0; 9]).unwrap();
        let regions = FlatAreaCollection::new(vec![vec![0, 1, 4]]);
        assert!(strictly_flat_check(&[0.0; 18], &regions, &g, 1e-9).unwrap());
        let mut phi = vec![0.0; 18];
        phi[4] = 1.0;
        assert!(!strictly_flat_check(&phi, &regions, &g, 1e-9).unwrap());
        phi[4] = 1.5;
        assert!(strictly_flat_check(&phi, &regions, &g, 1e-9).is_err());
    }

    #[test]
    fn bregman_and_strong_bounds_tikhonov_scalar() {
        // A = Id(1), x̂ = 1 = A*v with v = 1, ŵ = −1
        let a = LinearMap::identity(1);
        let cert = SourceCertificate::from_dual(&a, vec![-1.0], 0.0).unwrap();
        assert_eq!(cert.d, vec![1.0]);
        let r = Functional::squared_norm(1.0).unwrap();
        let same = CertifiedRun {
            regulariser: &r,
            certificate: &cert,
            x_delta: &[1.0],
            xhat: &[1.0],
            e_delta: 0.0,
            delta: 0.0,
            alpha: 0.1,
        };
        let b = verify_bregman_bound(&same, 1e-12).unwrap();
        assert!(b.holds && b.lhs == 0.0);
        let s = verify_strong_estimate(&same, 0.25, 0.1).unwrap();
        assert!(s.holds && s.lhs == 0.0);
        assert!((s.rhs - 0.01 / (2.0 * 0.0625 * 0.1)).abs() < 1e-12);

        for delta in [0.5, 0.1, 1e-2, 1e-3, 1e-4] {
            let alpha = delta;
            let x = (1.0 + delta) / (1.0 + alpha);
            let run = CertifiedRun {
                x_delta: &[x],
                delta,
                alpha,
                ..same
            };
            let b = verify_bregman_bound(&run, 1e-12).unwrap();
            assert!(b.holds && b.lhs < b.rhs, "{b:?}");
            assert!(verify_strong_estimate(&run, 0.25, alpha).unwrap().holds);
        }
        let bad = SourceCertificate {
            residual: 1.0,
            ..cert.clone()
        };
        let run = CertifiedRun {
            certificate: &bad,
            ..same
        };
        assert!(matches!(verify_bregman_bound(&run, 1e-8), Err(Error::InvalidCertificate(_))));
    }

    #[test]
    fn fidelity_examples() {
        let e = Functional::squared_norm(1.0).unwrap();
        let k = FidelityConstants {
            c: 3.0,
            p: 2.0,
            c_prime: 0.5,
            q: 2.0,
        };
        let r = check_fidelity_conditions(&e, k, 4, 2000, 1).unwrap();
        assert!(r.triangle_holds(1e-12) && r.noise_holds(1e-12), "{r:?}");
        let r = check_fidelity_conditions(&e, FidelityConstants { c: 1.0, ..k }, 4, 2000, 1).unwrap();
        assert!(!r.triangle_holds(1e-12));
        assert!(check_fidelity_conditions(&Functional::l1(1.0).unwrap(), k, 2, 1, 0).is_err());
    }

    #[test]
    fn approximate_linearity_examples() {
        let a = LinearMap::dense(dense(&[vec![1.0, 2.0], vec![0.0, 1.0], vec![3.0, -1.0]]));
        let xhat = [0.5, -0.5];
        let b = [0.3, 0.1, -0.2];
        let r = check_approximate_linearity(&a, &xhat, &b, 0.5, 1.0, 500, 2).unwrap();
        assert!(r.holds(1e-12), "{r:?}");

        let sq = FnForwardMap {
            dim: 1,
            eval: |x: &[f64]| vec![x[0] * x[0]],
            jacobian: |x: &[f64], v: &[f64]| vec![2.0 * x[0] * v[0]],
        };
        let r = check_approximate_linearity(&sq, &[1.0], &[1.0], 0.3, 0.1, 100, 0).unwrap();
        assert!(r.holds(0.0));
        let eta = largest_linearity_eta(&sq, &[1.0], &[1.0], 0.1, 4000, 5).unwrap();
        assert!((eta - 0.45125).abs() < 2e-3, "{eta}");

        let wrong = FnForwardMap {
            dim: 1,
            eval: |x: &[f64]| vec![x[0] * x[0]],
            jacobian: |_: &[f64], v: &[f64]| vec![v[0]],
        };
        assert!(matches!(
            check_approximate_linearity(&wrong, &[1.0], &[1.0], 0.3, 0.1, 10, 0),
            Err(Error::JacobianMismatch(_))
        ));
    }
}
