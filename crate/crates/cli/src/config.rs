//! Flat `key=value` configuration shared by config files, flags and
//! sidecar reruns.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use regcomplex::experiments::{format_float, Curve, SeedPolicy};
use regcomplex::schedules::{paper_grid, AlphaRule, GammaRule, NRule, Schedule};

pub const KEYS: [&str; 16] = [
    "experiment",
    "seed",
    "seed-policy",
    "size",
    "image",
    "instance",
    "delta-grid",
    "paper-grid",
    "alpha-rule",
    "n-rule",
    "curve",
    "out",
    "report",
    "cap-seconds",
    "fidelity",
    "samples",
];

/// Default `--paper-grid` exponent: `δ̆ ≥ 5·10⁻⁶`.
pub const DEFAULT_PAPER_EXP: u32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    Tikhonov,
    Lasso,
    TvDeblur,
    CheckSource,
    CheckSubreg,
    CheckFidelity,
}

impl Experiment {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        Ok(match s {
            "tikhonov" => Self::Tikhonov,
            "lasso" => Self::Lasso,
            "tv-deblur" => Self::TvDeblur,
            "check-source" => Self::CheckSource,
            "check-subreg" => Self::CheckSubreg,
            "check-fidelity" => Self::CheckFidelity,
            _ => return err(format!("unknown experiment {s:?}")),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Tikhonov => "tikhonov",
            Self::Lasso => "lasso",
            Self::TvDeblur => "tv-deblur",
            Self::CheckSource => "check-source",
            Self::CheckSubreg => "check-subreg",
            Self::CheckFidelity => "check-fidelity",
        }
    }

    pub fn is_sweep(self) -> bool {
        matches!(self, Self::Tikhonov | Self::Lasso | Self::TvDeblur)
    }
}

/// Built-in Lasso instances for the `check-*` experiments and the default
/// Lasso sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instance {
    /// `A = [[1, 0]]`, `x̂ = (1, 0)`: strictly complementary.
    Axis,
    /// `A = [[1, 1]]`, `x̂ = (1, 0)`: solution set is a segment.
    Segment,
}

impl Instance {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "axis" => Ok(Self::Axis),
            "segment" => Ok(Self::Segment),
            _ => err(format!("unknown instance {s:?} (expected axis or segment)")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Axis => "axis",
            Self::Segment => "segment",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub seed_policy: SeedPolicy,
    /// `(width, height)`; columns × rows for matrix experiments.
    pub size: Option<(usize, usize)>,
    pub image: Option<PathBuf>,
    pub instance: Instance,
    pub deltas: Vec<f64>,
    pub schedule: Schedule,
    pub curves: Vec<Curve>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub cap_seconds: Option<f64>,
    /// `(C, p, C′, q)`
    pub fidelity: (f64, f64, f64, f64),
    pub samples: usize,
}

pub type RawConfig = BTreeMap<String, Vec<String>>;

/// Parses `key=value` lines; `#` starts a comment. `curve` may repeat.
pub fn parse_config_text(text: &str) -> Result<RawConfig, ConfigError> {
    let mut map = RawConfig::new();
    let mut unknown = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return err(format!("line {}: expected key=value, got {line:?}", i + 1));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            unknown.push(k.to_string());
            continue;
        }
        let entry = map.entry(k.to_string()).or_default();
        if k != "curve" {
            entry.clear();
        }
        entry.push(v.to_string());
    }
    if !unknown.is_empty() {
        return err(format!("unknown config keys: {}", unknown.join(", ")));
    }
    Ok(map)
}

/// Reads the `config` object of a JSON sidecar.
pub fn parse_sidecar_config(text: &str) -> Result<RawConfig, ConfigError> {
    #[derive(Deserialize)]
    struct Sidecar {
        config: BTreeMap<String, serde_json::Value>,
    }
    let s: Sidecar = serde_json::from_str(text).map_err(|e| ConfigError(format!("malformed sidecar: {e}")))?;
    let mut map = RawConfig::new();
    let mut unknown = Vec::new();
    for (k, v) in s.config {
        if !KEYS.contains(&k.as_str()) {
            unknown.push(k);
            continue;
        }
        let vals = match v {
            serde_json::Value::String(s) => vec![s],
            serde_json::Value::Array(a) => a
                .into_iter()
                .map(|x| x.as_str().map(str::to_string).ok_or_else(|| ConfigError(format!("non-string value for {k}"))))
                .collect::<Result<_, _>>()?,
            _ => return err(format!("non-string value for {k}")),
        };
        map.insert(k, vals);
    }
    if !unknown.is_empty() {
        return err(format!("unknown config keys: {}", unknown.join(", ")));
    }
    Ok(map)
}

fn single<'a>(raw: &'a RawConfig, key: &str) -> Option<&'a str> {
    raw.get(key).and_then(|v| v.last()).map(String::as_str)
}

fn parse_f64(key: &str, s: &str) -> Result<f64, ConfigError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| ConfigError(format!("{key}: expected a number, got {s:?}")))
}

pub fn parse_size(s: &str) -> Result<(usize, usize), ConfigError> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| ConfigError(format!("size: expected WxH or N, got {s:?}")))
    };
    match s.split_once(['x', 'X']) {
        Some((w, h)) => Ok((parse(w)?, parse(h)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

/// Comma-separated, strictly decreasing, positive.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, ConfigError> {
    let g = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse_f64("delta-grid", t))
        .collect::<Result<Vec<_>, _>>()?;
    if g.is_empty() {
        return err("delta-grid is empty");
    }
    if g.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return err("delta-grid entries must be positive");
    }
    if g.windows(2).any(|w| w[1] >= w[0]) {
        return err("delta-grid must be strictly decreasing");
    }
    Ok(g)
}

pub fn parse_alpha_rule(s: &str) -> Result<AlphaRule, ConfigError> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["half-delta"] => Ok(AlphaRule::HalfDelta),
        ["power", c, p] => Ok(AlphaRule::Power {
            c: parse_f64("alpha-rule", c)?,
            p: parse_f64("alpha-rule", p)?,
        }),
        _ => err(format!("alpha-rule: expected half-delta or power:c:p, got {s:?}")),
    }
}

pub fn parse_n_rule(s: &str) -> Result<NRule, ConfigError> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["iterated-log"] => Ok(NRule::IteratedLog),
        ["power", c, q] => Ok(NRule::Power {
            c: parse_f64("n-rule", c)?,
            q: parse_f64("n-rule", q)?,
        }),
        ["fixed", n] => Ok(NRule::Fixed(parse_count("n-rule", n)?)),
        _ => err(format!("n-rule: expected iterated-log, power:c:q or fixed:N, got {s:?}")),
    }
}

fn parse_count(key: &str, s: &str) -> Result<usize, ConfigError> {
    s.trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError(format!("{key}: expected a positive integer, got {s:?}")))
}

pub fn parse_curve(s: &str) -> Result<Curve, ConfigError> {
    match s.split_once(':') {
        None if s == "schedule" => Ok(Curve::Schedule),
        Some(("fixed", n)) => Ok(Curve::FixedN(parse_count("curve", n)?)),
        _ => err(format!("curve: expected schedule or fixed:N, got {s:?}")),
    }
}

fn alpha_rule_string(r: &AlphaRule) -> String {
    match r {
        AlphaRule::HalfDelta => "half-delta".into(),
        AlphaRule::Power { c, p } => format!("power:{}:{}", format_float(*c), format_float(*p)),
        AlphaRule::Table(_) => unreachable!("tables are not configurable"),
    }
}

fn n_rule_string(r: &NRule) -> String {
    match r {
        NRule::IteratedLog => "iterated-log".into(),
        NRule::Power { c, q } => format!("power:{}:{}", format_float(*c), format_float(*q)),
        NRule::Fixed(n) => format!("fixed:{n}"),
    }
}

fn curve_string(c: &Curve) -> String {
    match c {
        Curve::Schedule => "schedule".into(),
        Curve::FixedN(n) => format!("fixed:{n}"),
    }
}

fn default_schedule(e: Experiment) -> Schedule {
    match e {
        Experiment::TvDeblur => Schedule::iterated_log(),
        Experiment::Tikhonov => Schedule {
            alpha_rule: AlphaRule::Power { c: 1.0, p: 1.0 },
            n_rule: NRule::Fixed(1),
            gamma_rule: GammaRule::EqualAlpha,
        },
        _ => Schedule::lasso_default(),
    }
}

fn default_grid(e: Experiment) -> Vec<f64> {
    match e {
        Experiment::TvDeblur => paper_grid(DEFAULT_PAPER_EXP),
        Experiment::Tikhonov => vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
        _ => vec![1e-1, 1e-2, 1e-3, 1e-4],
    }
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let experiment = match single(raw, "experiment") {
            Some(s) => Experiment::parse(s)?,
            None => return err("missing required key: experiment"),
        };
        let seed = match single(raw, "seed") {
            Some(s) => s.trim().parse().map_err(|_| ConfigError(format!("seed: expected an integer, got {s:?}")))?,
            None => 0,
        };
        let seed_policy = match single(raw, "seed-policy") {
            None | Some("common") => SeedPolicy::Common,
            Some("per-row") => SeedPolicy::PerRow,
            Some(s) => return err(format!("seed-policy: expected common or per-row, got {s:?}")),
        };
        let size = single(raw, "size").map(parse_size).transpose()?;
        let image = single(raw, "image").map(PathBuf::from);
        if size.is_some() && image.is_some() {
            return err("size and image are mutually exclusive");
        }
        if image.is_some() && experiment != Experiment::TvDeblur {
            return err("image applies only to tv-deblur");
        }
        let instance = match single(raw, "instance") {
            Some(s) => Instance::parse(s)?,
            None if experiment == Experiment::CheckSource => Instance::Segment,
            None => Instance::Axis,
        };
        let deltas = match (single(raw, "delta-grid"), single(raw, "paper-grid")) {
            (Some(_), Some(_)) => return err("delta-grid and paper-grid are mutually exclusive"),
            (Some(g), None) => parse_grid(g)?,
            (None, Some(p)) => {
                let p = if p.is_empty() || p == "true" {
                    DEFAULT_PAPER_EXP
                } else {
                    p.parse().map_err(|_| ConfigError(format!("paper-grid: expected an exponent, got {p:?}")))?
                };
                paper_grid(p)
            }
            (None, None) => default_grid(experiment),
        };
        let mut schedule = default_schedule(experiment);
        if let Some(s) = single(raw, "alpha-rule") {
            schedule.alpha_rule = parse_alpha_rule(s)?;
        }
        if let Some(s) = single(raw, "n-rule") {
            schedule.n_rule = parse_n_rule(s)?;
        }
        let schedule = Schedule::new(schedule.alpha_rule, schedule.n_rule, schedule.gamma_rule)
            .map_err(|e| ConfigError(e.to_string()))?;
        let curves = match raw.get("curve") {
            Some(list) if experiment != Experiment::TvDeblur && !list.is_empty() => {
                return err("curve applies only to tv-deblur")
            }
            Some(list) => list
                .iter()
                .flat_map(|s| s.split(','))
                .filter(|s| !s.trim().is_empty())
                .map(|s| parse_curve(s.trim()))
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        let curves = if curves.is_empty() && experiment == Experiment::TvDeblur {
            vec![Curve::Schedule, Curve::FixedN(100), Curve::FixedN(1000)]
        } else {
            curves
        };
        for (i, c) in curves.iter().enumerate() {
            if curves[..i].contains(c) {
                return err(format!("curve {} declared twice", curve_string(c)));
            }
        }
        let out = single(raw, "out").map(PathBuf::from);
        if experiment.is_sweep() && out.is_none() {
            return err(format!("missing required key for {}: out", experiment.name()));
        }
        let report = single(raw, "report").map(PathBuf::from);
        let cap_seconds = single(raw, "cap-seconds").map(|s| parse_f64("cap-seconds", s)).transpose()?;
        if cap_seconds.is_some_and(|c| !(c > 0.0)) {
            return err("cap-seconds must be positive");
        }
        let fidelity = match single(raw, "fidelity") {
            None => (3.0, 2.0, 0.5, 2.0),
            Some(s) => {
                let v = s.split(':').map(|t| parse_f64("fidelity", t)).collect::<Result<Vec<_>, _>>()?;
                match v.as_slice() {
                    [c, p, cp, q] => (*c, *p, *cp, *q),
                    _ => return err(format!("fidelity: expected C:p:C':q, got {s:?}")),
                }
            }
        };
        let samples = match single(raw, "samples") {
            Some(s) => parse_count("samples", s)?,
            None => 10_000,
        };
        Ok(Self {
            experiment,
            seed,
            seed_policy,
            size,
            image,
            instance,
            deltas,
            schedule,
            curves,
            out,
            report,
            cap_seconds,
            fidelity,
            samples,
        })
    }

    /// The resolved configuration as `key → values`, enough to rerun
    /// bit-identically.
    pub fn to_raw(&self) -> RawConfig {
        let mut m = RawConfig::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), vec![v]);
        };
        put("experiment", self.experiment.name().into());
        put("seed", self.seed.to_string());
        put(
            "seed-policy",
            match self.seed_policy {
                SeedPolicy::Common => "common",
                SeedPolicy::PerRow => "per-row",
            }
            .into(),
        );
        if let Some((w, h)) = self.size {
            put("size", format!("{w}x{h}"));
        }
        if let Some(p) = &self.image {
            put("image", p.display().to_string());
        }
        put("instance", self.instance.name().into());
        put("delta-grid", self.deltas.iter().map(|d| format_float(*d)).collect::<Vec<_>>().join(","));
        put("alpha-rule", alpha_rule_string(&self.schedule.alpha_rule));
        put("n-rule", n_rule_string(&self.schedule.n_rule));
        if let Some(p) = &self.out {
            put("out", p.display().to_string());
        }
        if let Some(p) = &self.report {
            put("report", p.display().to_string());
        }
        if let Some(c) = self.cap_seconds {
            put("cap-seconds", format_float(c));
        }
        let (c, p, cp, q) = self.fidelity;
        put("fidelity", [c, p, cp, q].map(format_float).join(":"));
        put("samples", self.samples.to_string());
        if !self.curves.is_empty() {
            m.insert("curve".into(), self.curves.iter().map(curve_string).collect());
        }
        m
    }
}
