//! Convex functionals with closed-form proximal maps.
//!
//! Every functional is `weight · base(x)`. Values are extended reals: an
//! indicator outside its set evaluates to `f64::INFINITY`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::vector::{dot, norm_sq};

/// Default tolerance for subgradient membership tests.
pub const DEFAULT_SUBGRADIENT_TOL: f64 = 1e-9;

const NONNEG_TOL: f64 = 1e-12;
// relative slack for the conjugate indicators of the norm balls
const BALL_SLACK: f64 = 1e-9;

/// How a flat vector is cut into groups for the mixed `ℓ²,¹` norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupLayout {
    /// Group `i` is `x[i·g .. (i+1)·g]`.
    Contiguous,
    /// Group `i` is `{x[i + j·n] : j < g}` with `n = len / g`; this is the
    /// layout of the 2-D gradient (all horizontal, then all vertical parts).
    Planar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FunctionalKind {
    /// `½‖x‖²`
    SquaredNorm,
    /// `‖x‖₁`
    L1,
    /// `Σ_groups ‖x_g‖₂`
    GroupL21 { group_size: usize, layout: GroupLayout },
    /// `δ_{x ≥ 0}`
    NonnegIndicator,
    /// `½‖x − b‖²`
    SquaredDistanceToData(Vec<f64>),
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub kind: FunctionalKind,
    pub weight: f64,
}

/// A selected element of a subdifferential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgradientChoice {
    pub vector: Vec<f64>,
}

impl SubgradientChoice {
    pub fn new(vector: Vec<f64>) -> Self {
        Self { vector }
    }
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl Functional {
    pub fn new(kind: FunctionalKind, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "functional weight must be finite and nonnegative, got {weight}"
            )));
        }
        if let FunctionalKind::GroupL21 { group_size, .. } = kind {
            if group_size == 0 {
                return Err(Error::InvalidParameter("group size must be positive".into()));
            }
        }
        Ok(Self { kind, weight })
    }

    pub fn squared_norm(weight: f64) -> Result<Self> {
        Self::new(FunctionalKind::SquaredNorm, weight)
    }

    pub fn l1(weight: f64) -> Result<Self> {
        Self::new(FunctionalKind::L1, weight)
    }

    pub fn group_l21(weight: f64, group_size: usize, layout: GroupLayout) -> Result<Self> {
        Self::new(FunctionalKind::GroupL21 { group_size, layout }, weight)
    }

    /// Isotropic total variation of a 2-D gradient field in the `Grad2D` layout.
    pub fn isotropic_tv(weight: f64) -> Result<Self> {
        Self::group_l21(weight, 2, GroupLayout::Planar)
    }

    pub fn nonneg_indicator() -> Self {
        Self {
            kind: FunctionalKind::NonnegIndicator,
            weight: 1.0,
        }
    }

    pub fn squared_distance(data: Vec<f64>, weight: f64) -> Result<Self> {
        Self::new(FunctionalKind::SquaredDistanceToData(data), weight)
    }

    pub fn zero() -> Self {
        Self {
            kind: FunctionalKind::Zero,
            weight: 0.0,
        }
    }

    /// The same functional with a different weight.
    pub fn with_weight(&self, weight: f64) -> Result<Self> {
        Self::new(self.kind.clone(), weight)
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FunctionalKind::SquaredNorm => "squared-norm",
            FunctionalKind::L1 => "l1",
            FunctionalKind::GroupL21 { .. } => "group-l21",
            FunctionalKind::NonnegIndicator => "nonneg-indicator",
            FunctionalKind::SquaredDistanceToData(_) => "squared-distance",
            FunctionalKind::Zero => "zero",
        }
    }

    pub fn is_smooth(&self) -> bool {
        matches!(
            self.kind,
            FunctionalKind::SquaredNorm | FunctionalKind::SquaredDistanceToData(_) | FunctionalKind::Zero
        )
    }

    fn check_input(&self, context: &'static str, x: &[f64]) -> Result<()> {
        match &self.kind {
            FunctionalKind::SquaredDistanceToData(b) => check_len(context, b.len(), x.len()),
            FunctionalKind::GroupL21 { group_size, .. } if !x.len().is_multiple_of(*group_size) => {
                Err(Error::InvalidParameter(format!(
                    "{context}: length {} is not a multiple of group size {group_size}",
                    x.len()
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_input("value", x)?;
        let w = self.weight;
        Ok(match &self.kind {
            FunctionalKind::SquaredNorm => w * 0.5 * norm_sq(x),
            FunctionalKind::L1 => w * x.iter().map(|v| v.abs()).sum::<f64>(),
            FunctionalKind::GroupL21 { group_size, layout } => {
                let mut s = 0.0;
                for_each_group(x.len(), *group_size, *layout, |idx| {
                    s += idx.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                });
                w * s
            }
            FunctionalKind::NonnegIndicator => {
                if x.iter().any(|v| *v < -NONNEG_TOL) {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            FunctionalKind::SquaredDistanceToData(b) => {
                w * 0.5 * x.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
            FunctionalKind::Zero => 0.0,
        })
    }

    /// `argmin_z ½‖z − x‖² + tau·f(z)`
    pub fn prox(&self, tau: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = x.to_vec();
        self.prox_in_place(tau, &mut out)?;
        Ok(out)
    }

    pub fn prox_in_place(&self, tau: f64, x: &mut [f64]) -> Result<()> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("prox step must be positive, got {tau}")));
        }
        self.check_input("prox", x)?;
        let t = tau * self.weight;
        match &self.kind {
            FunctionalKind::SquaredNorm => x.iter_mut().for_each(|v| *v /= 1.0 + t),
            FunctionalKind::L1 => x.iter_mut().for_each(|v| *v = soft(*v, t)),
            FunctionalKind::GroupL21 { group_size, layout } => {
                for_each_group(x.len(), *group_size, *layout, |idx| {
                    let n = idx.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                    let s = if n > t { 1.0 - t / n } else { 0.0 };
                    idx.iter().for_each(|&i| x[i] *= s);
                });
            }
            FunctionalKind::NonnegIndicator => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            FunctionalKind::SquaredDistanceToData(b) => x
                .iter_mut()
                .zip(b)
                .for_each(|(v, b)| *v = (*v + t * b) / (1.0 + t)),
            FunctionalKind::Zero => {}
        }
        Ok(())
    }

    /// `prox_{σ f*}(y)`, in closed form. Agrees with the Moreau identity
    /// `y − σ·prox_{f/σ}(y/σ)`.
    pub fn prox_conjugate(&self, sigma: f64, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = y.to_vec();
        self.prox_conjugate_in_place(sigma, &mut out)?;
        Ok(out)
    }

    pub fn prox_conjugate_in_place(&self, sigma: f64, y: &mut [f64]) -> Result<()> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "conjugate prox step must be positive, got {sigma}"
            )));
        }
        self.check_input("prox_conjugate", y)?;
        let w = self.weight;
        match &self.kind {
            FunctionalKind::SquaredNorm => {
                let c = w / (w + sigma);
                y.iter_mut().for_each(|v| *v *= c);
            }
            FunctionalKind::L1 => y.iter_mut().for_each(|v| *v = v.clamp(-w, w)),
            FunctionalKind::GroupL21 { group_size, layout } => {
                for_each_group(y.len(), *group_size, *layout, |idx| {
                    let n = idx.iter().map(|&i| y[i] * y[i]).sum::<f64>().sqrt();
                    if n > w {
                        let s = w / n;
                        idx.iter().for_each(|&i| y[i] *= s);
                    }
                });
            }
            FunctionalKind::NonnegIndicator => y.iter_mut().for_each(|v| *v = v.min(0.0)),
            FunctionalKind::SquaredDistanceToData(b) => {
                let c = w / (w + sigma);
                y.iter_mut()
                    .zip(b)
                    .for_each(|(v, b)| *v = c * (*v - sigma * b));
            }
            FunctionalKind::Zero => y.iter_mut().for_each(|v| *v = 0.0),
        }
        Ok(())
    }

    /// Fenchel conjugate `f*(y)`.
    pub fn conjugate_value(&self, y: &[f64]) -> Result<f64> {
        self.check_input("conjugate_value", y)?;
        let w = self.weight;
        let ball = |n: f64| n <= w * (1.0 + BALL_SLACK) + 1e-15;
        Ok(match &self.kind {
            FunctionalKind::SquaredNorm => {
                if w > 0.0 {
                    norm_sq(y) / (2.0 * w)
                } else if y.iter().all(|v| *v == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            FunctionalKind::L1 => {
                if y.iter().all(|v| ball(v.abs())) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            FunctionalKind::GroupL21 { group_size, layout } => {
                let mut inside = true;
                for_each_group(y.len(), *group_size, *layout, |idx| {
                    inside &= ball(idx.iter().map(|&i| y[i] * y[i]).sum::<f64>().sqrt());
                });
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            FunctionalKind::NonnegIndicator => {
                if y.iter().all(|v| *v <= NONNEG_TOL) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            FunctionalKind::SquaredDistanceToData(b) => {
                if w > 0.0 {
                    norm_sq(y) / (2.0 * w) + dot(y, b)
                } else if y.iter().all(|v| *v == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            FunctionalKind::Zero => {
                if y.iter().all(|v| *v == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        })
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input("gradient", x)?;
        let w = self.weight;
        match &self.kind {
            FunctionalKind::SquaredNorm => Ok(x.iter().map(|v| w * v).collect()),
            FunctionalKind::SquaredDistanceToData(b) => {
                Ok(x.iter().zip(b).map(|(v, b)| w * (v - b)).collect())
            }
            FunctionalKind::Zero => Ok(vec![0.0; x.len()]),
            _ => Err(Error::NotSmooth(self.name())),
        }
    }

    /// Checks `d ∈ ∂f(x)` where the test is cheap. Returns the size of the
    /// violation, or `None` for kinds whose membership is trusted.
    pub fn subgradient_violation(&self, d: &[f64], x: &[f64]) -> Result<Option<f64>> {
        check_len("subgradient_violation", x.len(), d.len())?;
        self.check_input("subgradient_violation", x)?;
        let w = self.weight;
        Ok(match &self.kind {
            FunctionalKind::SquaredNorm => Some(
                d.iter()
                    .zip(x)
                    .map(|(d, x)| (d - w * x).abs())
                    .fold(0.0, f64::max),
            ),
            FunctionalKind::L1 => Some(sign_set_violation(x, d, w, 0.0)),
            FunctionalKind::GroupL21 { group_size, layout } => {
                let mut worst: f64 = 0.0;
                for_each_group(x.len(), *group_size, *layout, |idx| {
                    let nx = idx.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                    if nx > 0.0 {
                        let v = idx
                            .iter()
                            .map(|&i| (d[i] - w * x[i] / nx).powi(2))
                            .sum::<f64>()
                            .sqrt();
                        worst = worst.max(v);
                    } else {
                        let nd = idx.iter().map(|&i| d[i] * d[i]).sum::<f64>().sqrt();
                        worst = worst.max(nd - w);
                    }
                });
                Some(worst)
            }
            FunctionalKind::Zero => Some(d.iter().fold(0.0, |m, v| m.max(v.abs()))),
            _ => None,
        })
    }
}

fn for_each_group(len: usize, group_size: usize, layout: GroupLayout, mut f: impl FnMut(&[usize])) {
    let groups = len / group_size;
    let mut idx = vec![0usize; group_size];
    for g in 0..groups {
        for (j, slot) in idx.iter_mut().enumerate() {
            *slot = match layout {
                GroupLayout::Contiguous => g * group_size + j,
                GroupLayout::Planar => g + j * groups,
            };
        }
        f(&idx);
    }
}

// Largest violation of d ∈ w·Sign(x), treating |x_k| ≤ zero_tol as zero.
fn sign_set_violation(x: &[f64], d: &[f64], w: f64, zero_tol: f64) -> f64 {
    x.iter()
        .zip(d)
        .map(|(&xk, &dk)| {
            if xk > zero_tol {
                (dk - w).abs()
            } else if xk < -zero_tol {
                (dk + w).abs()
            } else {
                (dk.abs() - w).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// `B_f^d(x, x̂) = ⟨d, x̂ − x⟩ + f(x) − f(x̂)` for `d ∈ ∂f(x̂)`.
pub fn bregman_divergence(f: &Functional, d: &SubgradientChoice, x: &[f64], xhat: &[f64]) -> Result<f64> {
    bregman_divergence_with_tol(f, d, x, xhat, DEFAULT_SUBGRADIENT_TOL)
}

pub fn bregman_divergence_with_tol(
    f: &Functional,
    d: &SubgradientChoice,
    x: &[f64],
    xhat: &[f64],
    tol: f64,
) -> Result<f64> {
    check_len("bregman_divergence x", xhat.len(), x.len())?;
    check_len("bregman_divergence d", xhat.len(), d.vector.len())?;
    if let Some(v) = f.subgradient_violation(&d.vector, xhat)? {
        if v > tol {
            return Err(Error::NotASubgradient(v));
        }
    }
    let diff: Vec<f64> = xhat.iter().zip(x).map(|(a, b)| a - b).collect();
    Ok(dot(&d.vector, &diff) + f.value(x)? - f.value(xhat)?)
}

/// Whether `d ∈ Sign x` up to `tol`.
pub fn sign_set_membership(x: &[f64], d: &[f64], tol: f64) -> bool {
    x.len() == d.len()
        && x.iter().zip(d).all(|(&xk, &dk)| {
            if xk > tol {
                (dk - 1.0).abs() <= tol
            } else if xk < -tol {
                (dk + 1.0).abs() <= tol
            } else {
                dk.abs() <= 1.0 + tol
            }
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_examples() {
        assert_eq!(Functional::l1(1.0).unwrap().value(&[1.0, -2.0, 0.0]).unwrap(), 3.0);
        assert_eq!(Functional::squared_norm(2.0).unwrap().value(&[3.0, 4.0]).unwrap(), 25.0);
        let g = Functional::group_l21(1.0, 2, GroupLayout::Contiguous).unwrap();
        assert_eq!(g.value(&[3.0, 4.0, 0.0, 0.0]).unwrap(), 5.0);
        let ind = Functional::nonneg_indicator();
        assert_eq!(ind.value(&[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(ind.value(&[-1e-13, 1.0]).unwrap(), 0.0);
        assert_eq!(ind.value(&[-1e-6, 1.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn planar_groups_pair_gradient_components() {
        // (gx0, gx1, gy0, gy1) = (3, 0, 4, 0): pixel 0 has norm 5
        let tv = Functional::isotropic_tv(1.0).unwrap();
        assert_eq!(tv.value(&[3.0, 0.0, 4.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn prox_examples() {
        let p = Functional::l1(1.0).unwrap().prox(1.0, &[2.5, -0.5]).unwrap();
        assert_eq!(p, vec![1.5, 0.0]);
        let p = Functional::squared_norm(1.0).unwrap().prox(1.0, &[2.0]).unwrap();
        assert_eq!(p, vec![1.0]);
        let g = Functional::group_l21(1.0, 2, GroupLayout::Contiguous).unwrap();
        let p = g.prox(1.0, &[3.0, 4.0]).unwrap();
        assert!((p[0] - 2.4).abs() < 1e-15 && (p[1] - 3.2).abs() < 1e-15);
        assert_eq!(Functional::nonneg_indicator().prox(0.3, &[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
        assert_eq!(Functional::zero().prox(0.3, &[-1.0, 2.0]).unwrap(), vec![-1.0, 2.0]);
    }

    #[test]
    fn prox_rejects_nonpositive_step() {
        assert!(Functional::l1(1.0).unwrap().prox(0.0, &[1.0]).is_err());
        assert!(Functional::l1(1.0).unwrap().prox_conjugate(-1.0, &[1.0]).is_err());
    }

    #[test]
    fn prox_conjugate_examples() {
        let g = Functional::group_l21(1.0, 2, GroupLayout::Contiguous).unwrap();
        for sigma in [0.1, 1.0, 7.0] {
            let p = g.prox_conjugate(sigma, &[3.0, 4.0]).unwrap();
            assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        }
        assert_eq!(g.prox_conjugate(1.0, &[0.3, 0.4]).unwrap(), vec![0.3, 0.4]);
        let e = Functional::squared_distance(vec![0.0], 1.0).unwrap();
        assert_eq!(e.prox_conjugate(1.0, &[2.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn gradient_examples() {
        let g = Functional::squared_norm(1.0).unwrap().gradient(&[1.0, 2.0]).unwrap();
        assert_eq!(g, vec![1.0, 2.0]);
        let e = Functional::squared_distance(vec![1.0], 1.0).unwrap();
        assert_eq!(e.gradient(&[3.0]).unwrap(), vec![2.0]);
        assert_eq!(
            Functional::l1(1.0).unwrap().gradient(&[1.0]),
            Err(Error::NotSmooth("l1"))
        );
    }

    #[test]
    fn bregman_examples() {
        let sq = Functional::squared_norm(1.0).unwrap();
        let b = bregman_divergence(&sq, &SubgradientChoice::new(vec![0.0]), &[2.0], &[0.0]).unwrap();
        assert_eq!(b, 2.0);
        let l1 = Functional::l1(1.0).unwrap();
        let d = SubgradientChoice::new(vec![1.0, 0.0]);
        assert_eq!(bregman_divergence(&l1, &d, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(bregman_divergence(&l1, &d, &[1.0, 2.0], &[1.0, 0.0]).unwrap(), 2.0);
        let bad = SubgradientChoice::new(vec![0.5, 0.0]);
        assert!(matches!(
            bregman_divergence(&l1, &bad, &[1.0, 2.0], &[1.0, 0.0]),
            Err(Error::NotASubgradient(_))
        ));
    }

    #[test]
    fn sign_set_examples() {
        assert!(sign_set_membership(&[1.0, 0.0], &[1.0, 0.5], 1e-9));
        assert!(!sign_set_membership(&[1.0, 0.0], &[0.9, 0.0], 1e-9));
        assert!(sign_set_membership(&[0.0, 0.0, 0.0], &[1.0, -1.0, 0.3], 1e-9));
        assert!(!sign_set_membership(&[0.0], &[1.1], 1e-9));
    }

    #[test]
    fn value_dimension_checks() {
        let e = Functional::squared_distance(vec![0.0, 1.0], 1.0).unwrap();
        assert!(e.value(&[1.0]).is_err());
        let g = Functional::group_l21(1.0, 2, GroupLayout::Planar).unwrap();
        assert!(g.value(&[1.0, 2.0, 3.0]).is_err());
        assert!(Functional::l1(-1.0).is_err());
    }
}
