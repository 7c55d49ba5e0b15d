//! Parameter choice rules: corruption level to regularisation weight `α`,
//! subregularity factor `γ`, and iteration count `N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of logarithm folds and the iteration floor of [`NRule::IteratedLog`].
pub const ITERATED_LOG_FOLDS: usize = 1000;
pub const ITERATED_LOG_FLOOR: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AlphaRule {
    /// `α = δ/2`
    HalfDelta,
    /// `α = c·δ^p`
    Power { c: f64, p: f64 },
    /// Exact `(δ, α)` lookup.
    Table(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NRule {
    /// `N = 100 + ⌈α⁻¹·log1p^{∘1000}(1/δ)⌉`
    IteratedLog,
    /// `N = ⌈c·δ^{−q}⌉`
    Power { c: f64, q: f64 },
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GammaRule {
    EqualAlpha,
    /// `γ = c·δ^p`
    Power { c: f64, p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub alpha_rule: AlphaRule,
    pub n_rule: NRule,
    pub gamma_rule: GammaRule,
}

impl Schedule {
    pub fn new(alpha_rule: AlphaRule, n_rule: NRule, gamma_rule: GammaRule) -> Result<Self> {
        match &alpha_rule {
            AlphaRule::Power { c, p } if !(*c > 0.0) || !p.is_finite() => {
                return Err(Error::InvalidParameter(format!("alpha rule needs c > 0, got c={c} p={p}")))
            }
            AlphaRule::Table(rows) if rows.iter().any(|(d, a)| !(*d > 0.0) || !(*a > 0.0)) => {
                return Err(Error::InvalidParameter("alpha table entries must be positive".into()))
            }
            _ => {}
        }
        match &n_rule {
            NRule::Power { c, q } if !(*c > 0.0) || !q.is_finite() => {
                return Err(Error::InvalidParameter(format!("n rule needs c > 0, got c={c} q={q}")))
            }
            NRule::Fixed(0) => return Err(Error::InvalidParameter("fixed N must be at least 1".into())),
            _ => {}
        }
        if let GammaRule::Power { c, p } = &gamma_rule {
            if !(*c > 0.0) || !p.is_finite() {
                return Err(Error::InvalidParameter(format!("gamma rule needs c > 0, got c={c} p={p}")));
            }
        }
        Ok(Self {
            alpha_rule,
            n_rule,
            gamma_rule,
        })
    }

    /// `α = δ/2`, iterated-log `N`, `γ = α`.
    pub fn iterated_log() -> Self {
        Self {
            alpha_rule: AlphaRule::HalfDelta,
            n_rule: NRule::IteratedLog,
            gamma_rule: GammaRule::EqualAlpha,
        }
    }

    pub fn fixed_n(n: usize) -> Result<Self> {
        Self::new(AlphaRule::HalfDelta, NRule::Fixed(n), GammaRule::EqualAlpha)
    }

    /// `α = δ`, `N = ⌈δ^{−1.5}⌉`, `γ = α`.
    pub fn lasso_default() -> Self {
        Self {
            alpha_rule: AlphaRule::Power { c: 1.0, p: 1.0 },
            n_rule: NRule::Power { c: 1.0, q: 1.5 },
            gamma_rule: GammaRule::EqualAlpha,
        }
    }

    pub fn with_n_rule(&self, n_rule: NRule) -> Result<Self> {
        Self::new(self.alpha_rule.clone(), n_rule, self.gamma_rule.clone())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "corruption level must be positive and finite, got {delta}"
        )));
    }
    Ok(())
}

pub fn alpha_of(schedule: &Schedule, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    match &schedule.alpha_rule {
        AlphaRule::HalfDelta => Ok(delta / 2.0),
        AlphaRule::Power { c, p } => Ok(c * delta.powf(*p)),
        AlphaRule::Table(rows) => rows
            .iter()
            .find(|(d, _)| *d == delta)
            .map(|(_, a)| *a)
            .ok_or_else(|| Error::InvalidParameter(format!("no alpha table entry for delta={delta}"))),
    }
}

pub fn gamma_of(schedule: &Schedule, delta: f64) -> Result<f64> {
    match &schedule.gamma_rule {
        GammaRule::EqualAlpha => alpha_of(schedule, delta),
        GammaRule::Power { c, p } => {
            check_delta(delta)?;
            Ok(c * delta.powf(*p))
        }
    }
}

/// `t ↦ ln(1 + t)` applied `folds` times.
pub fn iterated_log(t: f64, folds: usize) -> f64 {
    let mut u = t.max(0.0);
    for _ in 0..folds {
        u = u.ln_1p();
    }
    u
}

pub fn n_of(schedule: &Schedule, delta: f64) -> Result<usize> {
    check_delta(delta)?;
    let n = match &schedule.n_rule {
        NRule::IteratedLog => {
            let alpha = alpha_of(schedule, delta)?;
            let extra = (iterated_log(1.0 / delta, ITERATED_LOG_FOLDS) / alpha).ceil();
            ITERATED_LOG_FLOOR + to_count(extra)?
        }
        NRule::Power { c, q } => to_count((c * delta.powf(-q)).ceil())?.max(1),
        NRule::Fixed(n) => *n,
    };
    Ok(n.max(1))
}

fn to_count(v: f64) -> Result<usize> {
    if !v.is_finite() || v >= usize::MAX as f64 {
        return Err(Error::InvalidParameter(format!("iteration count {v} is not representable")));
    }
    Ok(v.max(0.0) as usize)
}

/// The three ratios `α²/min{α,γ}`, `δ²/min{α,γ}`, `1/(N·min{α,γ})` on a grid,
/// and whether each strictly decreases over the tail of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub deltas: Vec<f64>,
    pub alpha_ratio: Vec<f64>,
    pub delta_ratio: Vec<f64>,
    pub inv_n_ratio: Vec<f64>,
    /// Index of the first grid point in the tail.
    pub tail_start: usize,
    pub alpha_ratio_decreasing: bool,
    pub delta_ratio_decreasing: bool,
    pub inv_n_ratio_decreasing: bool,
    pub passes: bool,
}

const TAIL_SLACK: f64 = 1e-12;

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0] * (1.0 - TAIL_SLACK))
}

/// The tail is the last third of the grid (at least two points).
pub fn check_convergence_conditions(schedule: &Schedule, deltas: &[f64]) -> Result<ConvergenceReport> {
    if deltas.len() < 3 {
        return Err(Error::InvalidParameter("need at least three grid points".into()));
    }
    for &d in deltas {
        check_delta(d)?;
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("grid must be strictly decreasing".into()));
    }
    let mut alpha_ratio = Vec::with_capacity(deltas.len());
    let mut delta_ratio = Vec::with_capacity(deltas.len());
    let mut inv_n_ratio = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let a = alpha_of(schedule, d)?;
        let m = a.min(gamma_of(schedule, d)?);
        let n = n_of(schedule, d)? as f64;
        alpha_ratio.push(a * a / m);
        delta_ratio.push(d * d / m);
        inv_n_ratio.push(1.0 / (n * m));
    }
    let tail_len = deltas.len().div_ceil(3).max(2);
    let tail_start = deltas.len() - tail_len;
    let a_ok = strictly_decreasing(&alpha_ratio[tail_start..]);
    let d_ok = strictly_decreasing(&delta_ratio[tail_start..]);
    let n_ok = strictly_decreasing(&inv_n_ratio[tail_start..]);
    Ok(ConvergenceReport {
        deltas: deltas.to_vec(),
        alpha_ratio,
        delta_ratio,
        inv_n_ratio,
        tail_start,
        alpha_ratio_decreasing: a_ok,
        delta_ratio_decreasing: d_ok,
        inv_n_ratio_decreasing: n_ok,
        passes: a_ok && d_ok && n_ok,
    })
}

/// `{f·10^{−p} : f ∈ {1, 0.5}, p = 0..=max_exp}`, descending.
pub fn paper_grid(max_exp: u32) -> Vec<f64> {
    let mut g = Vec::with_capacity(2 * max_exp as usize + 2);
    for p in 0..=max_exp {
        let s = 10f64.powi(-(p as i32));
        g.push(s);
        g.push(0.5 * s);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_examples() {
        let s = Schedule::iterated_log();
        assert_eq!(alpha_of(&s, 1.0).unwrap(), 0.5);
        assert_eq!(alpha_of(&s, 1e-4).unwrap(), 5e-5);
        let p = Schedule::lasso_default();
        assert_eq!(alpha_of(&p, 0.01).unwrap(), 0.01);
        assert!(alpha_of(&s, 0.0).is_err());
        assert!(alpha_of(&s, -1.0).is_err());
    }

    #[test]
    fn iterated_log_examples() {
        assert_eq!(iterated_log(0.0, 17), 0.0);
        assert!((iterated_log(1.0, 1) - std::f64::consts::LN_2).abs() < 1e-15);
        let v = iterated_log(1.0, 1000);
        assert!((v - 2.0 / 1002.0).abs() / v < 0.1);
        assert!(iterated_log(5.0, 11) < iterated_log(5.0, 10));
    }

    #[test]
    fn n_examples() {
        let fixed = Schedule::fixed_n(100).unwrap();
        assert_eq!(n_of(&fixed, 0.3).unwrap(), 100);
        assert_eq!(n_of(&fixed, 1e-7).unwrap(), 100);
        let s = Schedule::iterated_log();
        assert_eq!(n_of(&s, 1.0).unwrap(), 101);
        let grid = paper_grid(8);
        let ns: Vec<usize> = grid.iter().map(|&d| n_of(&s, d).unwrap()).collect();
        assert!(ns.windows(2).all(|w| w[1] >= w[0]), "{ns:?}");
        assert!(Schedule::fixed_n(0).is_err());
    }

    #[test]
    fn convergence_condition_examples() {
        let grid = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
        let r = check_convergence_conditions(&Schedule::lasso_default(), &grid).unwrap();
        assert!(r.passes);
        let fixed = Schedule::new(AlphaRule::Power { c: 1.0, p: 1.0 }, NRule::Fixed(100), GammaRule::EqualAlpha).unwrap();
        let r = check_convergence_conditions(&fixed, &grid).unwrap();
        assert!(!r.inv_n_ratio_decreasing && !r.passes);
        let sq = Schedule::new(AlphaRule::Power { c: 1.0, p: 2.0 }, NRule::Power { c: 1.0, q: 3.0 }, GammaRule::EqualAlpha)
            .unwrap();
        let r = check_convergence_conditions(&sq, &grid).unwrap();
        assert!(!r.delta_ratio_decreasing && !r.passes);
        assert!(check_convergence_conditions(&fixed, &[1e-2, 1e-1, 1e-3]).is_err());
        assert!(check_convergence_conditions(&fixed, &[1e-2, 1e-3]).is_err());
    }

    #[test]
    fn paper_grid_shape() {
        let g = paper_grid(8);
        assert_eq!(g.len(), 18);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[1], 0.5);
        assert_eq!(*g.last().unwrap(), 0.5e-8);
    }
}
