//! Forward-backward splitting, primal-dual proximal splitting, and the
//! closed-form Tikhonov solvers.
//!
//! Both iterative methods minimise `½‖Ax − b‖² + α·R₀(Qx)`; the weight `α`
//! lives in the regulariser's [`Functional::weight`].

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{check_len, Error, Result};
use crate::linop::{estimate_norm, make_stack, LinearMap};
use crate::prox::Functional;
use crate::vector::{dist, dot, norm_sq};

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub forward: LinearMap,
    pub data: Vec<f64>,
    /// `α·R₀`; the weight is the regularisation parameter.
    pub regulariser: Functional,
    /// `Q`; identity when absent.
    pub reg_operator: Option<LinearMap>,
}

impl ProblemSpec {
    pub fn new(
        forward: LinearMap,
        data: Vec<f64>,
        regulariser: Functional,
        reg_operator: Option<LinearMap>,
    ) -> Result<Self> {
        check_len("ProblemSpec data", forward.codomain_dim(), data.len())?;
        if let Some(q) = &reg_operator {
            check_len("ProblemSpec reg_operator domain", forward.domain_dim(), q.domain_dim())?;
        }
        Ok(Self {
            forward,
            data,
            regulariser,
            reg_operator,
        })
    }

    pub fn dim(&self) -> usize {
        self.forward.domain_dim()
    }

    pub fn alpha(&self) -> f64 {
        self.regulariser.weight
    }

    fn reg_value(&self, x: &[f64]) -> Result<f64> {
        match &self.reg_operator {
            Some(q) => self.regulariser.value(&q.apply(x)?),
            None => self.regulariser.value(x),
        }
    }

    /// `½‖Ax − b‖²`
    pub fn fidelity(&self, x: &[f64]) -> Result<f64> {
        let ax = self.forward.apply(x)?;
        Ok(0.5 * ax.iter().zip(&self.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
    }

    /// `½‖Ax − b‖² + α·R₀(Qx)`
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        Ok(self.fidelity(x)? + self.reg_value(x)?)
    }

    /// `K = (A, Q)` with `Q = Id` when absent.
    pub fn stacked_operator(&self) -> Result<LinearMap> {
        let q = self
            .reg_operator
            .clone()
            .unwrap_or_else(|| LinearMap::identity(self.dim()));
        make_stack(self.forward.clone(), q)
    }

    /// The splitting `F = 0`, `G(y, z) = ½‖y − b‖² + α·R₀(z)`, `Kx = (Ax, Qx)`.
    pub fn primal_dual_form(&self) -> Result<PrimalDualForm> {
        let k = self.stacked_operator()?;
        let q_len = k.codomain_dim() - self.forward.codomain_dim();
        Ok(PrimalDualForm {
            primal: Functional::zero(),
            k,
            dual: SeparableSum::new(vec![
                (Functional::squared_distance(self.data.clone(), 1.0)?, self.data.len()),
                (self.regulariser.clone(), q_len),
            ]),
        })
    }
}

/// A functional that is a sum over consecutive blocks of its argument.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableSum {
    pub parts: Vec<(Functional, usize)>,
}

impl SeparableSum {
    pub fn new(parts: Vec<(Functional, usize)>) -> Self {
        Self { parts }
    }

    pub fn len(&self) -> usize {
        self.parts.iter().map(|(_, n)| n).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn blocks<'a>(&'a self, y: &'a [f64]) -> impl Iterator<Item = (&'a Functional, &'a [f64])> {
        let mut start = 0;
        self.parts.iter().map(move |(f, n)| {
            let block = &y[start..start + n];
            start += n;
            (f, block)
        })
    }

    pub fn value(&self, y: &[f64]) -> Result<f64> {
        check_len("SeparableSum::value", self.len(), y.len())?;
        self.blocks(y).map(|(f, b)| f.value(b)).sum()
    }

    pub fn conjugate_value(&self, y: &[f64]) -> Result<f64> {
        check_len("SeparableSum::conjugate_value", self.len(), y.len())?;
        self.blocks(y).map(|(f, b)| f.conjugate_value(b)).sum()
    }

    pub fn prox_conjugate_in_place(&self, sigma: f64, y: &mut [f64]) -> Result<()> {
        check_len("SeparableSum::prox_conjugate", self.len(), y.len())?;
        let mut rest = y;
        for (f, n) in &self.parts {
            let (block, tail) = rest.split_at_mut(*n);
            f.prox_conjugate_in_place(sigma, block)?;
            rest = tail;
        }
        Ok(())
    }
}

/// `min_x F(x) + G(Kx)`
#[derive(Debug, Clone)]
pub struct PrimalDualForm {
    pub primal: Functional,
    pub k: LinearMap,
    pub dual: SeparableSum,
}

impl PrimalDualForm {
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        Ok(self.primal.value(x)? + self.dual.value(&self.k.apply(x)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub tau: f64,
    /// Dual step; unused by forward-backward.
    pub sigma: f64,
    /// `L = ‖A‖²` for forward-backward, `‖K‖` for PDPS.
    pub lipschitz_or_norm: f64,
}

impl StepParams {
    pub fn forward_backward(tau: f64, lipschitz: f64) -> Result<Self> {
        let p = Self {
            tau,
            sigma: 0.0,
            lipschitz_or_norm: lipschitz,
        };
        p.check_forward_backward()?;
        Ok(p)
    }

    pub fn pdps(tau: f64, sigma: f64, k_norm: f64) -> Result<Self> {
        let p = Self {
            tau,
            sigma,
            lipschitz_or_norm: k_norm,
        };
        p.check_pdps()?;
        Ok(p)
    }

    /// `τ = 5/L`, `σ = 0.99/(5L)` for a norm estimate `L` of `K`.
    pub fn pdps_default(k_norm: f64) -> Result<Self> {
        if !(k_norm > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "operator norm must be positive, got {k_norm}"
            )));
        }
        Self::pdps(5.0 / k_norm, 0.99 / (5.0 * k_norm), k_norm)
    }

    pub fn check_forward_backward(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.tau * self.lipschitz_or_norm < 1.0) {
            return Err(Error::StepSize(format!(
                "need tau > 0 and tau*L < 1, got tau={} L={}",
                self.tau, self.lipschitz_or_norm
            )));
        }
        Ok(())
    }

    pub fn check_pdps(&self) -> Result<()> {
        let l = self.lipschitz_or_norm;
        if !(self.tau > 0.0) || !(self.sigma > 0.0) || !(self.tau * self.sigma * l * l < 1.0) {
            return Err(Error::StepSize(format!(
                "need tau, sigma > 0 and tau*sigma*|K|^2 < 1, got tau={} sigma={} |K|={l}",
                self.tau, self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub objective: f64,
    pub dist_to_truth: Option<f64>,
    /// Objective at the running ergodic average (PDPS only).
    pub ergodic_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub initial_objective: f64,
    /// One record per iteration `k = 1..=N`.
    pub records: Vec<IterationRecord>,
    pub final_iterate: Vec<f64>,
    pub final_dual: Option<Vec<f64>>,
    /// `(1/N)·Σ_{k=1..N} x^k` (PDPS only; equals `x⁰` when `N = 0`).
    pub ergodic: Option<Vec<f64>>,
    pub ergodic_dual: Option<Vec<f64>>,
    pub iterations: usize,
}

impl SolveTrace {
    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(self.initial_objective, |r| r.objective)
    }

    /// Largest increase `objective(x^{k+1}) − objective(x^k)` over the run.
    pub fn max_objective_increase(&self) -> f64 {
        let mut prev = self.initial_objective;
        let mut worst = f64::NEG_INFINITY;
        for r in &self.records {
            worst = worst.max(r.objective - prev);
            prev = r.objective;
        }
        worst
    }
}

/// Iterates `x ← prox_{τ·αR}(x − τ·A*(Ax − b))` exactly `n_iters` times.
pub fn forward_backward(
    spec: &ProblemSpec,
    params: &StepParams,
    x0: &[f64],
    n_iters: usize,
    xhat: Option<&[f64]>,
) -> Result<SolveTrace> {
    if let Some(xh) = xhat {
        check_len("forward_backward xhat", spec.dim(), xh.len())?;
    }
    let mut records = Vec::with_capacity(n_iters);
    let (final_iterate, initial_objective) = forward_backward_observed(spec, params, x0, n_iters, |k, x, objective| {
        records.push(IterationRecord {
            k,
            objective,
            dist_to_truth: xhat.map(|xh| dist(x, xh)),
            ergodic_objective: None,
        });
    })?;
    Ok(SolveTrace {
        initial_objective,
        records,
        final_iterate,
        final_dual: None,
        ergodic: None,
        ergodic_dual: None,
        iterations: n_iters,
    })
}

/// [`forward_backward`] without a stored trace: `observer(k, x^k, objective(x^k))`
/// runs after every iteration. Returns the final iterate and the initial objective.
pub fn forward_backward_observed(
    spec: &ProblemSpec,
    params: &StepParams,
    x0: &[f64],
    n_iters: usize,
    mut observer: impl FnMut(usize, &[f64], f64),
) -> Result<(Vec<f64>, f64)> {
    if spec.reg_operator.is_some() {
        return Err(Error::ComposedRegulariser);
    }
    params.check_forward_backward()?;
    let n = spec.dim();
    check_len("forward_backward x0", n, x0.len())?;
    let a = &spec.forward;
    let tau = params.tau;
    let mut x = x0.to_vec();
    let mut ax = a.apply(&x)?;
    let mut resid = vec![0.0; ax.len()];
    let mut grad = vec![0.0; n];
    let objective = |ax: &[f64], x: &[f64]| -> Result<f64> {
        let fid = 0.5 * ax.iter().zip(&spec.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        Ok(fid + spec.regulariser.value(x)?)
    };
    let initial_objective = objective(&ax, &x)?;
    for k in 1..=n_iters {
        for ((r, a), b) in resid.iter_mut().zip(&ax).zip(&spec.data) {
            *r = a - b;
        }
        a.adjoint_into(&resid, &mut grad)?;
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi -= tau * gi;
        }
        spec.regulariser.prox_in_place(tau, &mut x)?;
        a.apply_into(&x, &mut ax)?;
        observer(k, &x, objective(&ax, &x)?);
    }
    Ok((x, initial_objective))
}

/// `‖x⁰ − x̂‖² / (2τN)`
pub fn fb_accuracy_bound(x0: &[f64], xhat: &[f64], tau: f64, n: usize) -> Result<f64> {
    check_len("fb_accuracy_bound", x0.len(), xhat.len())?;
    if n == 0 || !(tau > 0.0) {
        return Err(Error::InvalidParameter("need n >= 1 and tau > 0".into()));
    }
    Ok(norm_sq(&crate::vector::sub(x0, xhat)) / (2.0 * tau * n as f64))
}

/// PDPS on the splitting of [`ProblemSpec::primal_dual_form`].
pub fn pdps(
    spec: &ProblemSpec,
    params: &StepParams,
    x0: &[f64],
    y0: &[f64],
    n_iters: usize,
    xhat: Option<&[f64]>,
) -> Result<SolveTrace> {
    let form = spec.primal_dual_form()?;
    pdps_observed(&form, params, x0, y0, n_iters, xhat, |_, _, _| {})
}

/// PDPS on a general `min F(x) + G(Kx)`. `observer(k, x^k, y^k)` runs after
/// every iteration `k = 1..=N`.
pub fn pdps_observed(
    form: &PrimalDualForm,
    params: &StepParams,
    x0: &[f64],
    y0: &[f64],
    n_iters: usize,
    xhat: Option<&[f64]>,
    mut observer: impl FnMut(usize, &[f64], &[f64]),
) -> Result<SolveTrace> {
    params.check_pdps()?;
    let k_op = &form.k;
    let n = k_op.domain_dim();
    let m = k_op.codomain_dim();
    check_len("pdps x0", n, x0.len())?;
    check_len("pdps y0", m, y0.len())?;
    check_len("pdps dual functional", m, form.dual.len())?;
    if let Some(xh) = xhat {
        check_len("pdps xhat", n, xh.len())?;
    }
    let (tau, sigma) = (params.tau, params.sigma);
    let objective = |x: &[f64], kx: &[f64]| -> Result<f64> {
        Ok(form.primal.value(x)? + form.dual.value(kx)?)
    };

    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut kx = k_op.apply(&x)?;
    let initial_objective = objective(&x, &kx)?;
    let mut kty = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut kx_new = vec![0.0; m];
    let mut x_erg = x0.to_vec();
    let mut y_erg = y0.to_vec();
    let mut kx_erg = kx.clone();
    let mut records = Vec::with_capacity(n_iters);

    for k in 1..=n_iters {
        k_op.adjoint_into(&y, &mut kty)?;
        for ((xn, xi), g) in x_new.iter_mut().zip(&x).zip(&kty) {
            *xn = xi - tau * g;
        }
        form.primal.prox_in_place(tau, &mut x_new)?;
        k_op.apply_into(&x_new, &mut kx_new)?;
        // K(2x^{k+1} − x^k) from the cached images
        for ((yi, kn), ko) in y.iter_mut().zip(&kx_new).zip(&kx) {
            *yi += sigma * (2.0 * kn - ko);
        }
        form.dual.prox_conjugate_in_place(sigma, &mut y)?;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut kx, &mut kx_new);

        let w = 1.0 / k as f64;
        if k == 1 {
            x_erg.copy_from_slice(&x);
            y_erg.copy_from_slice(&y);
            kx_erg.copy_from_slice(&kx);
        } else {
            running_mean(&mut x_erg, &x, w);
            running_mean(&mut y_erg, &y, w);
            running_mean(&mut kx_erg, &kx, w);
        }
        records.push(IterationRecord {
            k,
            objective: objective(&x, &kx)?,
            dist_to_truth: xhat.map(|xh| dist(&x, xh)),
            ergodic_objective: Some(objective(&x_erg, &kx_erg)?),
        });
        observer(k, &x, &y);
    }
    Ok(SolveTrace {
        initial_objective,
        records,
        final_iterate: x,
        final_dual: Some(y),
        ergodic: Some(x_erg),
        ergodic_dual: Some(y_erg),
        iterations: n_iters,
    })
}

fn running_mean(mean: &mut [f64], v: &[f64], w: f64) {
    for (m, vi) in mean.iter_mut().zip(v) {
        *m += w * (vi - *m);
    }
}

/// `τ⁻¹‖Δx‖² − 2⟨KΔx, Δy⟩ + σ⁻¹‖Δy‖²`
pub fn m_norm_squared(params: &StepParams, k: &LinearMap, du_x: &[f64], du_y: &[f64]) -> Result<f64> {
    let kdx = k.apply(du_x)?;
    check_len("m_norm_squared du_y", kdx.len(), du_y.len())?;
    Ok(norm_sq(du_x) / params.tau - 2.0 * dot(&kdx, du_y) + norm_sq(du_y) / params.sigma)
}

/// `(F(x) + ⟨Kx, ỹ⟩ − G*(ỹ)) − (F(x̃) + ⟨Kx̃, y⟩ − G*(y))`
pub fn lagrangian_gap(form: &PrimalDualForm, x: &[f64], y: &[f64], xref: &[f64], yref: &[f64]) -> Result<f64> {
    let kx = form.k.apply(x)?;
    let kxref = form.k.apply(xref)?;
    check_len("lagrangian_gap y", kx.len(), y.len())?;
    check_len("lagrangian_gap yref", kx.len(), yref.len())?;
    let first = form.primal.value(x)? + dot(&kx, yref) - form.dual.conjugate_value(yref)?;
    let second = form.primal.value(xref)? + dot(&kxref, y) - form.dual.conjugate_value(y)?;
    // (+∞) − (+∞) cannot arise: G* at an infeasible yref makes the gap −∞
    Ok(first - second)
}

/// `max_{ẙ} ‖(x⁰, y⁰) − (x̂, ẙ)‖²_M / (2N)` over the supplied dual samples.
/// A lower approximation of the supremum over the bounded dual set.
pub fn pdps_accuracy_bound(
    x0: &[f64],
    y0: &[f64],
    xhat: &[f64],
    y_ball_samples: &[Vec<f64>],
    params: &StepParams,
    k: &LinearMap,
    n_iters: usize,
) -> Result<f64> {
    if y_ball_samples.is_empty() {
        return Err(Error::InvalidParameter("need at least one dual sample".into()));
    }
    if n_iters == 0 {
        return Err(Error::InvalidParameter("need n_iters >= 1".into()));
    }
    check_len("pdps_accuracy_bound xhat", x0.len(), xhat.len())?;
    let dx = crate::vector::sub(x0, xhat);
    let mut best = f64::NEG_INFINITY;
    for yh in y_ball_samples {
        check_len("pdps_accuracy_bound sample", y0.len(), yh.len())?;
        let dy = crate::vector::sub(y0, yh);
        best = best.max(m_norm_squared(params, k, &dx, &dy)?);
    }
    Ok(best / (2.0 * n_iters as f64))
}

/// Minimiser of `½‖Ax − b‖² + (α/2)‖x‖²`, i.e. the solution of
/// `(A*A + α)x = A*b`.
pub fn tikhonov_solve(a: &DenseMatrix, b: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let rhs = a.matvec_t(b)?;
    let mut m = a.gram();
    m.add_diagonal(alpha);
    m.cholesky_solve(&rhs)
}

/// Minimiser of `½‖Ax − b‖² + (α/2)‖x‖²` over `x ≥ 0` by projected gradient
/// with step `1/(‖A‖² + α)`.
pub fn tikhonov_nonneg_solve(
    a: &DenseMatrix,
    b: &[f64],
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    check_len("tikhonov_nonneg_solve", a.rows(), b.len())?;
    let op = LinearMap::Dense(a.clone());
    let l = estimate_norm(&op, 1e-12, 10_000, 0)?.norm;
    let tau = 1.0 / (l * l + alpha);
    let n = a.cols();
    let mut x = vec![0.0; n];
    let mut ax = vec![0.0; a.rows()];
    let mut grad = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        a.matvec_into(&x, &mut ax);
        ax.iter_mut().zip(b).for_each(|(v, bi)| *v -= bi);
        a.matvec_t_into(&ax, &mut grad);
        change = 0.0;
        for (xi, gi) in x.iter_mut().zip(&grad) {
            let next = (*xi - tau * (gi + alpha * *xi)).max(0.0);
            change += (next - *xi) * (next - *xi);
            *xi = next;
        }
        change = change.sqrt();
        if change < tol {
            return Ok(x);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        last_change: change,
        last_iterate: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::make_grad2d;

    fn dense(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn fb_single_step_by_hand() {
        let spec = ProblemSpec::new(
            LinearMap::identity(1),
            vec![0.0],
            Functional::l1(1.0).unwrap(),
            None,
        )
        .unwrap();
        let p = StepParams::forward_backward(0.5, 1.0).unwrap();
        let t = forward_backward(&spec, &p, &[2.0], 1, None).unwrap();
        assert_eq!(t.final_iterate, vec![0.5]);
    }

    #[test]
    fn fb_fixed_point_is_stationary() {
        let spec = ProblemSpec::new(
            LinearMap::identity(2),
            vec![1.0, 0.1],
            Functional::l1(0.2).unwrap(),
            None,
        )
        .unwrap();
        let p = StepParams::forward_backward(0.5, 1.0).unwrap();
        let t = forward_backward(&spec, &p, &[0.8, 0.0], 20, None).unwrap();
        for r in &t.records {
            assert!((r.objective - t.initial_objective).abs() < 1e-15);
        }
        assert_eq!(t.final_iterate, vec![0.8, 0.0]);
    }

    #[test]
    fn fb_lasso_orthonormal_limit() {
        let spec = ProblemSpec::new(
            LinearMap::dense(dense(&[vec![1.0, 0.0], vec![0.0, 1.0]])),
            vec![1.0, 0.1],
            Functional::l1(0.2).unwrap(),
            None,
        )
        .unwrap();
        let p = StepParams::forward_backward(0.9, 1.0).unwrap();
        let t = forward_backward(&spec, &p, &[5.0, -3.0], 200, None).unwrap();
        assert!((t.final_iterate[0] - 0.8).abs() < 1e-12);
        assert!(t.final_iterate[1].abs() < 1e-12);
    }

    #[test]
    fn fb_rejects_bad_steps_and_composed_regulariser() {
        let spec = ProblemSpec::new(
            LinearMap::identity(1),
            vec![0.0],
            Functional::l1(1.0).unwrap(),
            Some(LinearMap::identity(1)),
        )
        .unwrap();
        let p = StepParams {
            tau: 0.5,
            sigma: 0.0,
            lipschitz_or_norm: 1.0,
        };
        assert_eq!(
            forward_backward(&spec, &p, &[1.0], 1, None).unwrap_err(),
            Error::ComposedRegulariser
        );
        assert!(StepParams::forward_backward(1.0, 1.0).is_err());
        assert!(StepParams::pdps(1.0, 1.0, 1.0).is_err());
        assert!(StepParams::pdps(1.0, 0.99, 1.0).is_ok());
    }

    #[test]
    fn fb_accuracy_bound_examples() {
        assert_eq!(fb_accuracy_bound(&[1.0, 2.0], &[1.0, 2.0], 1.0, 3).unwrap(), 0.0);
        assert_eq!(fb_accuracy_bound(&[2.0, 0.0], &[0.0, 0.0], 1.0, 2).unwrap(), 1.0);
        assert!(fb_accuracy_bound(&[0.0], &[0.0], 1.0, 0).is_err());
    }

    #[test]
    fn pdps_zero_iterations_returns_start() {
        let spec = ProblemSpec::new(
            LinearMap::identity(1),
            vec![1.0],
            Functional::l1(0.3).unwrap(),
            Some(LinearMap::zero(1, 1)),
        )
        .unwrap();
        let p = StepParams::pdps_default(1.0).unwrap();
        let t = pdps(&spec, &p, &[0.25], &[0.0, 0.0], 0, None).unwrap();
        assert_eq!(t.final_iterate, vec![0.25]);
        assert!(t.records.is_empty());
    }

    #[test]
    fn pdps_converges_on_scalar_least_squares() {
        let spec = ProblemSpec::new(
            LinearMap::identity(1),
            vec![1.0],
            Functional::l1(0.7).unwrap(),
            Some(LinearMap::zero(1, 1)),
        )
        .unwrap();
        let k = spec.stacked_operator().unwrap();
        let l = estimate_norm(&k, 1e-12, 100, 0).unwrap().norm;
        let p = StepParams::pdps(0.9 / l, 0.9 / l, l).unwrap();
        let t = pdps(&spec, &p, &[0.0], &[0.0, 0.0], 200, None).unwrap();
        assert!((t.final_iterate[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn m_norm_examples() {
        let p = StepParams::pdps(0.5, 0.25, 1.0).unwrap();
        let z = LinearMap::zero(2, 3);
        assert_eq!(m_norm_squared(&p, &z, &[0.0; 2], &[0.0; 3]).unwrap(), 0.0);
        let v = m_norm_squared(&p, &z, &[1.0, 1.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, 2.0 / 0.5 + 1.0 / 0.25);
    }

    #[test]
    fn lagrangian_gap_vanishes_on_diagonal() {
        let spec = ProblemSpec::new(
            LinearMap::identity(4),
            vec![0.0, 0.0, 1.0, 1.0],
            Functional::isotropic_tv(0.25).unwrap(),
            Some(make_grad2d(4, 1).unwrap()),
        )
        .unwrap();
        let form = spec.primal_dual_form().unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        let y = vec![0.05; form.k.codomain_dim()];
        assert!(lagrangian_gap(&form, &x, &y, &x, &y).unwrap().abs() < 1e-15);
    }

    #[test]
    fn pdps_accuracy_bound_examples() {
        let p = StepParams::pdps(0.5, 0.5, 1.0).unwrap();
        let k = LinearMap::identity(2);
        let b = pdps_accuracy_bound(&[1.0, 2.0], &[3.0, 4.0], &[1.0, 2.0], &[vec![3.0, 4.0]], &p, &k, 10)
            .unwrap();
        assert_eq!(b, 0.0);
        let single = pdps_accuracy_bound(&[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[vec![0.0, 1.0]], &p, &k, 2)
            .unwrap();
        let direct = m_norm_squared(&p, &k, &[1.0, 0.0], &[0.0, -1.0]).unwrap() / 4.0;
        assert_eq!(single, direct);
        assert!(pdps_accuracy_bound(&[0.0], &[0.0], &[0.0], &[], &p, &LinearMap::identity(1), 1).is_err());
    }

    #[test]
    fn tikhonov_examples() {
        let i1 = dense(&[vec![1.0]]);
        assert!((tikhonov_solve(&i1, &[1.0], 1.0).unwrap()[0] - 0.5).abs() < 1e-15);
        assert!(tikhonov_solve(&i1, &[1.0], 1e6).unwrap()[0].abs() < 2e-6);
        assert!(tikhonov_solve(&i1, &[1.0], 0.0).is_err());
    }

    #[test]
    fn tikhonov_nonneg_examples() {
        let i1 = dense(&[vec![1.0]]);
        let x = tikhonov_nonneg_solve(&i1, &[-1.0], 1.0, 1e-14, 10_000).unwrap();
        assert_eq!(x, vec![0.0]);
        let x = tikhonov_nonneg_solve(&i1, &[1.0], 1.0, 1e-14, 10_000).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12);
        let err = tikhonov_nonneg_solve(&dense(&[vec![1.0, 0.9], vec![0.9, 1.0]]), &[1.0, -1.0], 1e-3, 1e-300, 3);
        assert!(matches!(err, Err(Error::NotConverged { iterations: 3, .. })));
    }

    #[test]
    fn pdps_tv_denoise_shrunk_step() {
        // the dual field p = (0.5, 1, 0.5) certifies x − b = −α·Dᵀp with |p| ≤ 1
        let spec = ProblemSpec::new(
            LinearMap::identity(4),
            vec![0.0, 0.0, 1.0, 1.0],
            Functional::isotropic_tv(0.25).unwrap(),
            Some(make_grad2d(4, 1).unwrap()),
        )
        .unwrap();
        let k = spec.stacked_operator().unwrap();
        let l = estimate_norm(&k, 1e-12, 1000, 0).unwrap().norm;
        let p = StepParams::pdps(0.99 / l, 0.99 / l, l).unwrap();
        let y0 = vec![0.0; k.codomain_dim()];
        let t = pdps(&spec, &p, &spec.data, &y0, 5000, None).unwrap();
        let expect = [0.125, 0.125, 0.875, 0.875];
        let erg = t.ergodic.unwrap();
        for (e, x) in expect.iter().zip(&erg) {
            assert!((e - x).abs() < 1e-4, "{erg:?}");
        }
    }
}
