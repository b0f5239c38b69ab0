//! Run configuration: strict TOML in, fully resolved TOML out.

use std::path::{Path, PathBuf};

use csbp::skeleton::InitialLaw;
use csbp::{BranchingMechanism, Criticality, LevyMeasure};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = csbp::verify::DEFAULT_SEED;
const DEFAULT_X: f64 = 1.0;
const DEFAULT_T: f64 = 1.0;
const DEFAULT_N: usize = 10_000;
const DEFAULT_DT: f64 = 1e-3;
const DEFAULT_TABLE_DT: f64 = 1e-2;
const DEFAULT_THETA: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Also write per-path CSVs.
    #[serde(default)]
    pub emit_paths: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<MechanismSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: DEFAULT_SEED, out: default_out(), emit_paths: false, mechanism: None, experiment: None, verify: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSection {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "no_levy")]
    pub levy: LevyMeasure,
}

fn no_levy() -> LevyMeasure {
    LevyMeasure::None
}

impl MechanismSection {
    pub fn build(&self) -> Result<BranchingMechanism, CliError> {
        BranchingMechanism::new(self.alpha, self.beta, self.levy.clone()).map_err(CliError::from)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    #[serde(rename = "csbp")]
    Csbp,
    #[serde(rename = "spine")]
    Spine,
    #[serde(rename = "die_by_T")]
    DieByT,
    #[serde(rename = "lambda_skeleton")]
    LambdaSkeleton,
    #[serde(rename = "T_skeleton")]
    TSkeleton,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_jump: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(rename = "T_list", skip_serializing_if = "Option::is_none")]
    pub t_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitialLaw>,
    /// Grid stride of the per-path CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// What a command reads from the config.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Mech,
    Table,
    Simulate,
    Verify,
    Sweep,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        if cfg.seed > i64::MAX as u64 {
            return Err(CliError::usage("seed must be below 2^63 to be stored in TOML"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialise")
    }

    pub fn mechanism(&self) -> Result<BranchingMechanism, CliError> {
        self.mechanism.as_ref().ok_or_else(|| CliError::usage("config has no [mechanism] section"))?.build()
    }

    fn experiment(&self) -> Result<&ExperimentSection, CliError> {
        self.experiment.as_ref().ok_or_else(|| CliError::usage("config has no [experiment] section"))
    }

    /// Check every parameter against `cmd`, fill defaults, and return the
    /// config that reproduces the run.
    pub fn resolve(mut self, cmd: Command) -> Result<Self, CliError> {
        if self.seed > i64::MAX as u64 {
            return Err(CliError::usage("seed must be below 2^63 to be stored in TOML"));
        }
        match cmd {
            Command::Verify => {
                if self.mechanism.is_some() || self.experiment.is_some() {
                    return Err(CliError::usage("verify reads only the seed, out and [verify] keys"));
                }
                let v = self.verify.get_or_insert(VerifySection { n: None, dt: DEFAULT_DT });
                if !(v.dt > 0.0 && v.dt <= 0.1) {
                    return Err(CliError::usage(format!("verify.dt must be in (0, 0.1], got {}", v.dt)));
                }
                if v.n == Some(0) {
                    return Err(CliError::usage("verify.N must be positive"));
                }
                return Ok(self);
            }
            _ if self.verify.is_some() => return Err(CliError::usage("[verify] is only read by the verify command")),
            _ => {}
        }
        let mech = self.mechanism()?;
        let e = match cmd {
            Command::Mech => {
                if self.experiment.is_some() {
                    return Err(CliError::usage("mech reads only the [mechanism] section"));
                }
                return Ok(self);
            }
            Command::Table => resolve_table(self.experiment()?)?,
            Command::Simulate => resolve_simulate(self.experiment()?, &mech)?,
            Command::Sweep => resolve_sweep(self.experiment()?, &mech)?,
            Command::Verify => unreachable!(),
        };
        self.experiment = Some(e);
        Ok(self)
    }
}

fn present(e: &ExperimentSection) -> Vec<&'static str> {
    let mut v = Vec::new();
    let mut add = |on: bool, k: &'static str| {
        if on {
            v.push(k)
        }
    };
    add(e.kind.is_some(), "kind");
    add(e.x.is_some(), "x");
    add(e.t.is_some(), "t");
    add(e.horizon.is_some(), "T");
    add(e.lambda.is_some(), "lambda");
    add(e.n.is_some(), "N");
    add(e.dt.is_some(), "dt");
    add(e.eps_jump.is_some(), "eps_jump");
    add(e.theta.is_some(), "theta");
    add(e.t_list.is_some(), "T_list");
    add(e.init.is_some(), "init");
    add(e.record_every.is_some(), "record_every");
    v
}

fn only(e: &ExperimentSection, allowed: &[&str], what: &str) -> Result<(), CliError> {
    match present(e).into_iter().find(|k| !allowed.contains(k)) {
        Some(k) => Err(CliError::usage(format!("`{k}` is not a parameter of {what}"))),
        None => Ok(()),
    }
}

fn positive(v: f64, name: &str) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::usage(format!("{name} must be > 0, got {v}")))
    }
}

fn nonneg(v: f64, name: &str) -> Result<f64, CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::usage(format!("{name} must be ≥ 0, got {v}")))
    }
}

fn thetas(e: &ExperimentSection) -> Result<Vec<f64>, CliError> {
    let th = e.theta.clone().unwrap_or_else(|| DEFAULT_THETA.to_vec());
    if th.is_empty() {
        return Err(CliError::usage("theta grid is empty"));
    }
    for &v in &th {
        nonneg(v, "theta")?;
    }
    Ok(th)
}

fn resolve_table(e: &ExperimentSection) -> Result<ExperimentSection, CliError> {
    only(e, &["t", "dt", "theta"], "table")?;
    Ok(ExperimentSection {
        t: Some(positive(e.t.unwrap_or(DEFAULT_T), "t")?),
        dt: Some(positive(e.dt.unwrap_or(DEFAULT_TABLE_DT), "dt")?),
        theta: Some(thetas(e)?),
        ..Default::default()
    })
}

fn common(e: &ExperimentSection) -> Result<ExperimentSection, CliError> {
    let n = e.n.unwrap_or(DEFAULT_N);
    if n == 0 {
        return Err(CliError::usage("N must be positive"));
    }
    if let Some(eps) = e.eps_jump {
        nonneg(eps, "eps_jump")?;
    }
    Ok(ExperimentSection {
        x: Some(nonneg(e.x.unwrap_or(DEFAULT_X), "x")?),
        t: Some(positive(e.t.unwrap_or(DEFAULT_T), "t")?),
        n: Some(n),
        dt: Some(positive(e.dt.unwrap_or(DEFAULT_DT), "dt")?),
        eps_jump: e.eps_jump,
        theta: Some(thetas(e)?),
        record_every: e.record_every,
        ..Default::default()
    })
}

const COMMON: [&str; 8] = ["kind", "x", "t", "N", "dt", "eps_jump", "theta", "record_every"];

fn with(extra: &[&'static str]) -> Vec<&'static str> {
    COMMON.iter().copied().chain(extra.iter().copied()).collect()
}

fn resolve_simulate(e: &ExperimentSection, mech: &BranchingMechanism) -> Result<ExperimentSection, CliError> {
    let kind = e.kind.ok_or_else(|| CliError::usage("simulate needs experiment.kind"))?;
    let mut r = common(e)?;
    r.kind = Some(kind);
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::usage(format!("kind {kind:?} needs `{name}`")));
    let t = r.t.unwrap();
    let x = r.x.unwrap();
    match kind {
        Kind::Csbp => only(e, &COMMON, "kind csbp")?,
        Kind::Spine => {
            only(e, &COMMON, "kind spine")?;
            if mech.classify() == Criticality::Supercritical {
                return Err(CliError::usage("the spine needs a (sub)critical mechanism"));
            }
        }
        Kind::DieByT => {
            only(e, &with(&["T"]), "kind die_by_T")?;
            let h = positive(need(e.horizon, "T")?, "T")?;
            if t >= h {
                return Err(CliError::usage(format!("need t < T, got t = {t}, T = {h}")));
            }
            r.horizon = Some(h);
        }
        Kind::LambdaSkeleton => {
            only(e, &with(&["lambda", "init"]), "kind lambda_skeleton")?;
            let l = positive(need(e.lambda, "lambda")?, "lambda")?;
            if mech.classify() != Criticality::Supercritical {
                return Err(CliError::usage("the λ-skeleton needs a supercritical mechanism"));
            }
            let ls = mech.lambda_star()?;
            if l < ls {
                return Err(CliError::usage(format!("lambda = {l} is below λ* = {ls}")));
            }
            r.lambda = Some(l);
            r.init = Some(e.init.unwrap_or(InitialLaw::Poisson(l * x)));
        }
        Kind::TSkeleton => {
            only(e, &with(&["T", "init"]), "kind T_skeleton")?;
            let h = positive(need(e.horizon, "T")?, "T")?;
            if t >= h {
                return Err(CliError::usage(format!("need t < T, got t = {t}, T = {h}")));
            }
            r.horizon = Some(h);
            r.init = Some(match e.init {
                Some(i) => i,
                None => InitialLaw::Poisson(csbp::evolution::u_infinity(mech, h)? * x),
            });
        }
    }
    if let Some(init) = r.init {
        init.validate()?;
    }
    Ok(r)
}

fn resolve_sweep(e: &ExperimentSection, mech: &BranchingMechanism) -> Result<ExperimentSection, CliError> {
    only(e, &["x", "t", "N", "dt", "eps_jump", "theta", "T_list"], "sweep")?;
    if mech.classify() == Criticality::Supercritical {
        return Err(CliError::usage("the spine sweep needs a (sub)critical mechanism"));
    }
    let list = e.t_list.clone().ok_or_else(|| CliError::usage("sweep needs experiment.T_list"))?;
    if list.is_empty() || list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::usage("T_list must be non-empty and increasing"));
    }
    let mut r = common(e)?;
    let t = r.t.unwrap();
    if t >= list[0] {
        return Err(CliError::usage(format!("need t < min T_list, got t = {t}")));
    }
    positive(r.x.unwrap(), "x")?;
    r.t_list = Some(list);
    Ok(r)
}
