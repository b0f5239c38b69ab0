//! Path engines. One coupled stepper drives every process in the crate:
//! a mass Λ following Euler steps of a (possibly time-tilted) CSBP, plus an
//! optional skeleton count Z simulated exactly, which feeds immigration into
//! Λ along its edges and at its branch points.
//!
//! The baseline CSBP is Z ≡ 0 without tilt, the spine is Z ≡ 1 without
//! branching, the λ-skeleton has a constant tilt and the T-skeleton and the
//! conditioned-to-die process use the tilt u_{T−s}(∞).

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, precondition, Error, Result};
use crate::evolution::{self, DELTA_MIN_REL};
use crate::levy::LevyMeasure;
use crate::mechanism::{BranchingMechanism, Criticality};
use crate::rng::PathStreams;

/// Bound on the big-jump rate per unit mass used to pick eps for
/// infinite-activity measures.
pub const MAX_JUMP_RATE: f64 = 1e3;

/// Safety factor on the per-step thinning bound of the T-skeleton.
pub const THINNING_PAD: f64 = 1.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallJumpMode {
    /// Jumps below eps replaced by a Gaussian of matching variance.
    Compensate,
    /// Jumps below eps dropped; the lost variance is recorded.
    Drop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub dt: f64,
    /// Small-jump cutoff; `None` picks 0 for finite-activity measures and
    /// Π([eps, ∞)) = 10³ otherwise.
    pub eps_jump: Option<f64>,
    pub small_jump_mode: SmallJumpMode,
    pub horizon: f64,
    pub absorb_at_zero: bool,
    /// Keep every k-th grid value; 0 keeps only the endpoints.
    pub record_every: usize,
    pub log_jumps: bool,
    /// Stop a path once its mass reaches this level.
    pub mass_cap: Option<f64>,
    /// Required to run the spine with a truncated stable immigration.
    pub accept_truncation_bias: bool,
}

impl PathConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        PathConfig {
            dt,
            eps_jump: None,
            small_jump_mode: SmallJumpMode::Compensate,
            horizon,
            absorb_at_zero: true,
            record_every: 0,
            log_jumps: false,
            mass_cap: None,
            accept_truncation_bias: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return domain(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return domain(format!("horizon must be > 0, got {}", self.horizon));
        }
        if let Some(e) = self.eps_jump {
            if !(e >= 0.0 && e.is_finite()) {
                return domain(format!("eps_jump must be ≥ 0, got {e}"));
            }
        }
        if let Some(c) = self.mass_cap {
            if !(c > 0.0) {
                return domain("mass_cap must be > 0");
            }
        }
        Ok(())
    }

    /// Base step grid 0 = s_0 < … < s_N = horizon.
    pub fn grid(&self) -> Vec<f64> {
        let n = (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize;
        (0..=n).map(|i| if i == n { self.horizon } else { i as f64 * self.dt }).collect()
    }
}

/// Cutoff eps for `levy` under `cfg`.
pub fn jump_cutoff(levy: &LevyMeasure, cfg: &PathConfig) -> f64 {
    if let Some(e) = cfg.eps_jump {
        if e > 0.0 || levy.finite_activity() {
            return e;
        }
    }
    if levy.finite_activity() {
        return 0.0;
    }
    // Π([eps, ∞)) is decreasing in eps: bisect in log eps.
    let (mut lo, mut hi) = (-60.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if levy.moment_above(0, mid.exp()) > MAX_JUMP_RATE {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi.exp()
}

/// Source of a logged jump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpSource {
    Levy,
    Immigration,
    BranchPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpRecord {
    pub time: f64,
    pub size: f64,
    pub source: JumpSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum EventKind {
    Branch(u32),
    EdgeImmigration(f64),
    BranchImmigration(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SkeletonEvent {
    pub time: f64,
    pub kind: EventKind,
    /// Z just after the event.
    pub z_after: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PathDiagnostics {
    /// Thinning proposals whose true rate exceeded the bound.
    pub thinning_violations: u64,
    pub immigration_jumps: u64,
    pub branch_events: u64,
    pub stopped_at_cap: bool,
    /// ∫ Λ ds · ∫_{(0,eps)} r²Π(dr) lost in Drop mode.
    pub dropped_variance: f64,
}

/// A coupled (Λ, Z) path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledPath {
    pub times: Vec<f64>,
    pub lambda_mass: Vec<f64>,
    pub z_count: Vec<u64>,
    pub events: Vec<SkeletonEvent>,
    pub jumps: Vec<JumpRecord>,
    pub extinction_time: Option<f64>,
    /// Whether Z stayed equal to 1 on the whole path.
    pub z_always_one: bool,
    pub first_branch_time: Option<f64>,
    pub diagnostics: PathDiagnostics,
}

impl CoupledPath {
    pub fn final_mass(&self) -> f64 {
        *self.lambda_mass.last().unwrap()
    }
    pub fn final_count(&self) -> u64 {
        *self.z_count.last().unwrap()
    }
    pub fn initial_count(&self) -> u64 {
        self.z_count[0]
    }
}

/// A single-type mass path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub extinction_time: Option<f64>,
    pub jumps: Vec<JumpRecord>,
    pub diagnostics: PathDiagnostics,
}

impl TrajectorySample {
    pub fn final_mass(&self) -> f64 {
        *self.mass.last().unwrap()
    }
}

impl From<CoupledPath> for TrajectorySample {
    fn from(p: CoupledPath) -> Self {
        TrajectorySample {
            times: p.times,
            mass: p.lambda_mass,
            extinction_time: p.extinction_time,
            jumps: p.jumps,
            diagnostics: p.diagnostics,
        }
    }
}

/// Frozen coefficients for one base step at tilt τ.
#[derive(Clone, Debug)]
struct StepLaw {
    tilt: f64,
    /// coefficient of Λ·h: α_τ minus the compensator of jumps ≥ eps
    drift: f64,
    diffusion: f64,
    small_var: f64,
    dropped_var: f64,
    big_rate: f64,
    levy: LevyMeasure,
    /// per skeleton individual: drift 2β plus the mean of dropped small immigrations
    imm_drift: f64,
    imm_rate: f64,
    /// branch rate per individual and the weights of its components
    branch: Option<BranchLaw>,
}

#[derive(Clone, Copy, Debug)]
struct BranchLaw {
    u: f64,
    death: f64,
    gauss: f64,
    pairs: f64,
}

impl BranchLaw {
    fn homogeneous(mech: &BranchingMechanism, lambda: f64, with_death: bool) -> Self {
        BranchLaw {
            u: lambda,
            death: if with_death { mech.psi_unchecked(lambda).max(0.0) } else { 0.0 },
            gauss: mech.beta * lambda * lambda,
            pairs: mech.levy.branch_pair_mass(lambda),
        }
    }

    fn rate(&self) -> f64 {
        (self.death + self.gauss + self.pairs) / self.u
    }
}

/// How Z behaves.
#[derive(Clone, Copy, Debug, PartialEq)]
enum SkeletonMode {
    /// Z ≡ 0: a plain (possibly tilted) CSBP.
    Absent,
    /// Z ≡ 1 forever: the spine.
    Spine,
    /// A branching skeleton.
    Branching,
}

#[derive(Clone, Debug)]
enum Laws {
    Constant(Box<StepLaw>),
    /// One law per base step, plus u at every grid point for thinning.
    Scheduled { laws: Vec<StepLaw>, u_grid: Vec<f64> },
}

/// A fully prepared path simulator; cheap to run many times.
#[derive(Clone, Debug)]
pub struct Engine {
    mech: BranchingMechanism,
    cfg: PathConfig,
    eps: f64,
    grid: Vec<f64>,
    mode: SkeletonMode,
    laws: Laws,
}

impl Engine {
    fn step_law(mech: &BranchingMechanism, tilt: f64, eps: f64, cfg: &PathConfig, imm_tilt: f64) -> StepLaw {
        let levy = mech.levy.tilted(tilt);
        let alpha_t = if tilt == 0.0 { mech.alpha } else { -mech.psi_prime_unchecked(tilt) };
        let big_mean = if levy.is_none() { 0.0 } else { levy.moment_above(1, eps) };
        let below = if levy.is_none() || eps == 0.0 { 0.0 } else { levy.moment_below(2, eps) };
        let (small_var, dropped_var) = match cfg.small_jump_mode {
            SmallJumpMode::Compensate => (below, 0.0),
            SmallJumpMode::Drop => (0.0, below),
        };
        let imm_levy = mech.levy.tilted(imm_tilt);
        let (imm_rate, imm_small) = if imm_levy.is_none() {
            (0.0, 0.0)
        } else {
            (imm_levy.moment_above(1, eps), if eps == 0.0 { 0.0 } else { imm_levy.moment_below(2, eps) })
        };
        StepLaw {
            tilt,
            drift: alpha_t - big_mean,
            diffusion: 2.0 * mech.beta,
            small_var,
            dropped_var,
            big_rate: if levy.is_none() { 0.0 } else { levy.moment_above(0, eps) },
            levy,
            imm_drift: 2.0 * mech.beta + imm_small,
            imm_rate,
            branch: None,
        }
    }

    fn base(mech: &BranchingMechanism, cfg: &PathConfig) -> Result<(f64, Vec<f64>)> {
        cfg.validate()?;
        Ok((jump_cutoff(&mech.levy, cfg), cfg.grid()))
    }

    /// The baseline CSBP.
    pub fn csbp(mech: &BranchingMechanism, cfg: &PathConfig) -> Result<Self> {
        let (eps, grid) = Self::base(mech, cfg)?;
        let law = Self::step_law(mech, 0.0, eps, cfg, 0.0);
        Ok(Engine { mech: mech.clone(), cfg: cfg.clone(), eps, grid, mode: SkeletonMode::Absent, laws: Laws::Constant(Box::new(law)) })
    }

    /// The CSBP conditioned to survive: one immortal spine with immigration.
    pub fn spine(mech: &BranchingMechanism, cfg: &PathConfig) -> Result<Self> {
        if mech.classify() == Criticality::Supercritical {
            return precondition("the spine decomposition needs −ψ′(0+) ≤ 0");
        }
        if !mech.levy.finite_activity() && !cfg.accept_truncation_bias {
            return precondition("stable immigration is truncated at eps; set accept_truncation_bias to proceed");
        }
        let (eps, grid) = Self::base(mech, cfg)?;
        let law = Self::step_law(mech, 0.0, eps, cfg, 0.0);
        let mut cfg = cfg.clone();
        cfg.absorb_at_zero = false;
        Ok(Engine { mech: mech.clone(), cfg, eps, grid, mode: SkeletonMode::Spine, laws: Laws::Constant(Box::new(law)) })
    }

    /// The λ-skeleton with its dressing.
    pub fn lambda_skeleton(mech: &BranchingMechanism, lambda: f64, cfg: &PathConfig) -> Result<Self> {
        if mech.classify() != Criticality::Supercritical {
            return precondition("the λ-skeleton is built for supercritical mechanisms");
        }
        let ls = mech.lambda_star()?;
        if !(lambda >= ls * (1.0 - 1e-12)) || !lambda.is_finite() {
            return domain(format!("skeleton tilt {lambda} is below λ* = {ls}"));
        }
        let (eps, grid) = Self::base(mech, cfg)?;
        let mut law = Self::step_law(mech, lambda, eps, cfg, lambda);
        law.branch = Some(BranchLaw::homogeneous(mech, lambda, lambda != ls));
        Ok(Engine {
            mech: mech.clone(),
            cfg: cfg.clone(),
            eps,
            grid,
            mode: SkeletonMode::Branching,
            laws: Laws::Constant(Box::new(law)),
        })
    }

    fn horizon_laws(mech: &BranchingMechanism, horizon: f64, cfg: &PathConfig, eps: f64, grid: &[f64], branching: bool) -> Result<Laws> {
        if !(cfg.horizon < horizon - DELTA_MIN_REL * horizon) {
            return Err(Error::Precondition(format!(
                "simulation horizon {} reaches the truncation zone of T = {horizon}",
                cfg.horizon
            )));
        }
        if !mech.greys_condition()? {
            return domain("Grey's condition fails");
        }
        let u_grid = evolution::extinction_curve(mech, horizon, grid)?;
        let laws = u_grid[..grid.len() - 1]
            .iter()
            .map(|&u| {
                let mut law = Self::step_law(mech, u, eps, cfg, u);
                if branching {
                    law.branch = Some(BranchLaw { u, death: 0.0, gauss: mech.beta * u * u, pairs: mech.levy.branch_pair_mass(u) });
                }
                law
            })
            .collect();
        Ok(Laws::Scheduled { laws, u_grid })
    }

    /// The T-skeleton with its dressing.
    pub fn t_skeleton(mech: &BranchingMechanism, horizon: f64, cfg: &PathConfig) -> Result<Self> {
        let (eps, grid) = Self::base(mech, cfg)?;
        let laws = Self::horizon_laws(mech, horizon, cfg, eps, &grid, true)?;
        Ok(Engine { mech: mech.clone(), cfg: cfg.clone(), eps, grid, mode: SkeletonMode::Branching, laws })
    }

    /// The CSBP conditioned to be extinct by time T.
    pub fn die_by_t(mech: &BranchingMechanism, horizon: f64, cfg: &PathConfig) -> Result<Self> {
        let (eps, grid) = Self::base(mech, cfg)?;
        let laws = Self::horizon_laws(mech, horizon, cfg, eps, &grid, false)?;
        Ok(Engine { mech: mech.clone(), cfg: cfg.clone(), eps, grid, mode: SkeletonMode::Absent, laws })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn config(&self) -> &PathConfig {
        &self.cfg
    }

    fn law(&self, n: usize) -> &StepLaw {
        match &self.laws {
            Laws::Constant(l) => l,
            Laws::Scheduled { laws, .. } => &laws[n],
        }
    }

    /// T-skeleton branching weights at time v inside step n, from one RK4
    /// step of du/ds = ψ(u) starting at the grid value.
    fn branch_at(&self, n: usize, v: f64) -> BranchLaw {
        match &self.laws {
            Laws::Constant(l) => l.branch.unwrap(),
            Laws::Scheduled { u_grid, .. } => {
                let h = v - self.grid[n];
                let f = |u: f64| self.mech.psi_unchecked(u);
                let u0 = u_grid[n];
                let k1 = f(u0);
                let k2 = f(u0 + 0.5 * h * k1);
                let k3 = f(u0 + 0.5 * h * k2);
                let k4 = f(u0 + h * k3);
                let u = u0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                BranchLaw { u, death: 0.0, gauss: self.mech.beta * u * u, pairs: self.mech.levy.branch_pair_mass(u) }
            }
        }
    }

    /// Upper bound on the per-individual branch rate over step n.
    fn rate_bound(&self, n: usize) -> f64 {
        match &self.laws {
            Laws::Constant(l) => l.branch.unwrap().rate(),
            // u is monotone over the step but q(u) need not be; pad the
            // larger endpoint rate and count any proposal above it.
            Laws::Scheduled { u_grid, .. } => {
                let q = |u: f64| BranchLaw { u, death: 0.0, gauss: self.mech.beta * u * u, pairs: self.mech.levy.branch_pair_mass(u) }.rate();
                THINNING_PAD * q(u_grid[n]).max(q(u_grid[n + 1]))
            }
        }
    }

    /// Run one path from Λ_0 = x with Z_0 = z0 (ignored unless branching).
    pub fn run(&self, x: f64, z0: u64, streams: &mut PathStreams) -> CoupledPath {
        let cfg = &self.cfg;
        let n_steps = self.grid.len() - 1;
        let mut lam = x;
        let mut z = match self.mode {
            SkeletonMode::Absent => 0,
            SkeletonMode::Spine => 1,
            SkeletonMode::Branching => z0,
        };
        let mut rec = Recorder::new(cfg.record_every, n_steps);
        rec.push(0, 0.0, lam, z);
        let mut diag = PathDiagnostics::default();
        let mut events = Vec::new();
        let mut jumps = Vec::new();
        let mut z_always_one = z == 1;
        let mut first_branch = None;
        let mut extinction_time = if lam == 0.0 && z == 0 { Some(0.0) } else { None };
        for n in 0..n_steps {
            if cfg.absorb_at_zero && lam == 0.0 && z == 0 {
                rec.fill_rest(n, &self.grid, 0.0, 0);
                break;
            }
            if let Some(cap) = cfg.mass_cap {
                if lam >= cap {
                    diag.stopped_at_cap = true;
                    rec.truncate_at(n, &self.grid, lam, z);
                    break;
                }
            }
            let law = self.law(n);
            let (s0, s1) = (self.grid[n], self.grid[n + 1]);
            let g: f64 = StandardNormal.sample(&mut streams.diffusion);
            let mut rem_t = s1 - s0;
            let mut rem_w = rem_t.sqrt() * g;
            let mut cur = s0;
            let bound = if self.mode == SkeletonMode::Branching { self.rate_bound(n) } else { 0.0 };
            loop {
                let tau = if bound > 0.0 && z > 0 {
                    let e: f64 = Exp1.sample(&mut streams.skeleton);
                    cur + e / (bound * z as f64)
                } else {
                    f64::INFINITY
                };
                let event = tau < s1;
                let (sub, w) = if event {
                    let sub = tau - cur;
                    let f = sub / rem_t;
                    let b: f64 = StandardNormal.sample(&mut streams.bridge);
                    let w = f * rem_w + (f * (1.0 - f) * rem_t).max(0.0).sqrt() * b;
                    rem_w -= w;
                    rem_t -= sub;
                    (sub, w)
                } else {
                    (rem_t, rem_w)
                };
                lam = self.advance(lam, z, sub, w, cur, law, streams, &mut diag, &mut events, &mut jumps);
                if !event {
                    break;
                }
                cur = tau;
                let bl = self.branch_at(n, tau);
                let ratio = bl.rate() / bound;
                if ratio > 1.0 + 1e-12 {
                    diag.thinning_violations += 1;
                }
                if ratio < 1.0 && streams.skeleton.gen::<f64>() >= ratio {
                    continue;
                }
                let (k, r) = sample_branch(&self.mech, &bl, &mut streams.skeleton);
                z = z + k as u64 - 1;
                diag.branch_events += 1;
                first_branch.get_or_insert(tau);
                events.push(SkeletonEvent { time: tau, kind: EventKind::Branch(k), z_after: z });
                if r > 0.0 {
                    lam += r;
                    events.push(SkeletonEvent { time: tau, kind: EventKind::BranchImmigration(r), z_after: z });
                    if cfg.log_jumps {
                        jumps.push(JumpRecord { time: tau, size: r, source: JumpSource::BranchPoint });
                    }
                }
                if z != 1 {
                    z_always_one = false;
                }
            }
            if lam == 0.0 && z == 0 && extinction_time.is_none() {
                extinction_time = Some(s1);
            }
            rec.push(n + 1, s1, lam, z);
        }
        let (times, lambda_mass, z_count) = rec.finish();
        CoupledPath {
            times,
            lambda_mass,
            z_count,
            events,
            jumps,
            extinction_time,
            z_always_one,
            first_branch_time: first_branch,
            diagnostics: diag,
        }
    }

    /// One Euler substep of length h with Brownian increment w, followed by
    /// the clamp and then skeleton immigration.
    #[allow(clippy::too_many_arguments)]
    fn advance(
        &self,
        lam: f64,
        z: u64,
        h: f64,
        w: f64,
        t: f64,
        law: &StepLaw,
        streams: &mut PathStreams,
        diag: &mut PathDiagnostics,
        events: &mut Vec<SkeletonEvent>,
        jumps: &mut Vec<JumpRecord>,
    ) -> f64 {
        let mut y = lam;
        if lam > 0.0 {
            y += law.drift * lam * h + (law.diffusion * lam).sqrt() * w;
            if law.small_var > 0.0 {
                let g: f64 = StandardNormal.sample(&mut streams.jumps);
                y += (law.small_var * lam * h).sqrt() * g;
            }
            diag.dropped_variance += law.dropped_var * lam * h;
            if law.big_rate > 0.0 {
                let n = poisson(law.big_rate * lam * h, &mut streams.jumps);
                for _ in 0..n {
                    let r = law.levy.sample_above(self.eps, &mut streams.jumps);
                    y += r;
                    if self.cfg.log_jumps {
                        jumps.push(JumpRecord { time: t + h, size: r, source: JumpSource::Levy });
                    }
                }
            }
            y = y.max(0.0);
        }
        if z > 0 {
            let zf = z as f64;
            y += zf * law.imm_drift * h;
            if law.imm_rate > 0.0 {
                let n = poisson(zf * law.imm_rate * h, &mut streams.immigration);
                let imm = self.mech.levy.tilted(law.tilt);
                for _ in 0..n {
                    let r = imm.sample_biased_above(self.eps, &mut streams.immigration);
                    y += r;
                    diag.immigration_jumps += 1;
                    if self.mode == SkeletonMode::Branching {
                        events.push(SkeletonEvent { time: t + h, kind: EventKind::EdgeImmigration(r), z_after: z });
                    }
                    if self.cfg.log_jumps {
                        jumps.push(JumpRecord { time: t + h, size: r, source: JumpSource::Immigration });
                    }
                }
            }
        }
        y
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let k: f64 = Poisson::new(mean).unwrap().sample(rng);
    k as u64
}

/// Joint draw of (k, r) at a branch event.
fn sample_branch<R: Rng + ?Sized>(mech: &BranchingMechanism, b: &BranchLaw, rng: &mut R) -> (u32, f64) {
    let total = b.death + b.gauss + b.pairs;
    let u = rng.gen::<f64>() * total;
    if u < b.death {
        (0, 0.0)
    } else if u < b.death + b.gauss {
        (2, 0.0)
    } else {
        mech.levy.sample_branch_pair(b.u, rng)
    }
}

struct Recorder {
    every: usize,
    last: usize,
    times: Vec<f64>,
    mass: Vec<f64>,
    count: Vec<u64>,
}

impl Recorder {
    fn new(every: usize, last: usize) -> Self {
        Recorder { every, last, times: Vec::new(), mass: Vec::new(), count: Vec::new() }
    }

    fn wanted(&self, n: usize) -> bool {
        n == 0 || n == self.last || (self.every > 0 && n % self.every == 0)
    }

    fn push(&mut self, n: usize, t: f64, m: f64, z: u64) {
        if self.wanted(n) {
            self.times.push(t);
            self.mass.push(m);
            self.count.push(z);
        }
    }

    fn fill_rest(&mut self, from: usize, grid: &[f64], m: f64, z: u64) {
        for n in from + 1..=self.last {
            self.push(n, grid[n], m, z);
        }
    }

    /// A path stopped early keeps its final state at the stopping time.
    fn truncate_at(&mut self, n: usize, grid: &[f64], m: f64, z: u64) {
        if !self.wanted(n) {
            self.times.push(grid[n]);
            self.mass.push(m);
            self.count.push(z);
        }
    }

    fn finish(self) -> (Vec<f64>, Vec<f64>, Vec<u64>) {
        (self.times, self.mass, self.count)
    }
}

/// Euler path of the baseline CSBP.
pub fn simulate_csbp(mech: &BranchingMechanism, x: f64, cfg: &PathConfig, streams: &mut PathStreams) -> Result<TrajectorySample> {
    check_start(x)?;
    Ok(Engine::csbp(mech, cfg)?.run(x, 0, streams).into())
}

/// Euler path of the CSBP conditioned to survive.
pub fn simulate_spine_sde(mech: &BranchingMechanism, x: f64, cfg: &PathConfig, streams: &mut PathStreams) -> Result<TrajectorySample> {
    check_start(x)?;
    Ok(Engine::spine(mech, cfg)?.run(x, 1, streams).into())
}

/// Euler path of the CSBP conditioned to be extinct by time T.
pub fn simulate_die_by_t(
    mech: &BranchingMechanism,
    horizon: f64,
    x: f64,
    cfg: &PathConfig,
    streams: &mut PathStreams,
) -> Result<TrajectorySample> {
    check_start(x)?;
    Ok(Engine::die_by_t(mech, horizon, cfg)?.run(x, 0, streams).into())
}

pub(crate) fn check_start(x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        domain(format!("initial mass must be ≥ 0, got {x}"))
    }
}

/// The coefficients (c, d) with u_t(θ) = cθ/(1 + dθ) for ψ(θ) = −αθ + βθ².
pub fn feller_coefficients(mech: &BranchingMechanism, t: f64) -> Result<(f64, f64)> {
    if !mech.levy.is_none() || mech.beta <= 0.0 {
        return domain("exact sampling needs Π = 0 and β > 0");
    }
    let a = mech.alpha;
    let c = (a * t).exp();
    let d = if a == 0.0 { mech.beta * t } else { mech.beta * (a * t).exp_m1() / a };
    Ok((c, d))
}

/// Exact draw of X_t for a diffusion-only mechanism: a Poisson(xc/d) number
/// of independent exponentials with mean d.
pub fn sample_feller_exact<R: Rng + ?Sized>(mech: &BranchingMechanism, x: f64, t: f64, rng: &mut R) -> Result<f64> {
    check_start(x)?;
    let (c, d) = feller_coefficients(mech, t)?;
    if x == 0.0 || t == 0.0 {
        return Ok(x);
    }
    let n = poisson(x * c / d, rng);
    if n == 0 {
        return Ok(0.0);
    }
    Ok(Gamma::new(n as f64, d).unwrap().sample(rng))
}
