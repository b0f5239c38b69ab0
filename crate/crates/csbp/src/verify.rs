//! Verification harness: analytic identities checked to tight tolerances and
//! Monte Carlo estimates compared with exact oracles.
//!
//! Every assertion carries its oracle, estimate, standard error and the
//! additive allowance for discretisation bias. Statistical assertions use
//! z = (estimate − oracle)/(se + bias) against a threshold; tolerance
//! assertions use z = (estimate − oracle)/tol against 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::evolution;
use crate::levy::em1x;
use crate::mechanism::{BranchingMechanism, Criticality};
use crate::rng::{map_paths, splitmix64, PathStreams};
use crate::simulate::{sample_feller_exact, Engine, PathConfig};
use crate::skeleton::{spine_limit_experiment, InitialLaw, SkeletonRunner};
use crate::special::norm_cdf;
use crate::stats::{mean_se, MeanSe};

/// Threshold on |z| for Monte Carlo assertions.
pub const Z_THRESHOLD: f64 = 4.0;
/// Threshold for the binned dispersion residuals.
pub const DISPERSION_THRESHOLD: f64 = 5.0;
/// Allowance for Euler bias on a Laplace functional, per unit of dt.
/// The control variate puts the bias of the Feller Laplace values at dt = 1e−3
/// between 1.4e−4 and 2.4e−4.
pub const LAPLACE_BIAS_PER_DT: f64 = 1.0;
/// Tolerance of the analytic identity checks (relative).
pub const IDENTITY_RTOL: f64 = 1e-8;
/// Absolute target of the quadratures inside the identity checks.
const QUAD_TOL: f64 = 1e-13;
/// Tolerance of the thinning identity (relative to max(1, |value|)).
pub const THINNING_TOL: f64 = 1e-10;
/// Euler against exact sampler: allowed relative gap of Laplace values.
pub const EULER_REL_GAP: f64 = 0.005;
/// Offset, in standard errors, applied to the oracle by the self-test.
pub const SELFTEST_OFFSET_SE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn of(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssertionKind {
    /// z = (estimate − oracle)/(se + bias), pass iff |z| ≤ threshold.
    Statistical,
    /// z = (estimate − oracle)/bias, pass iff |z| ≤ 1.
    Tolerance,
    /// z = estimate/oracle, pass iff z ≤ 1 (oracle is the bound).
    UpperBound,
    /// z = oracle/estimate, pass iff z ≤ 1 (oracle is the bound).
    LowerBound,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub statistic: String,
    pub kind: AssertionKind,
    pub oracle: f64,
    pub estimate: f64,
    pub standard_error: f64,
    pub bias_allowance: f64,
    pub z_score: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl Assertion {
    pub fn statistical(statistic: impl Into<String>, oracle: f64, estimate: f64, se: f64, bias: f64, threshold: f64) -> Self {
        let gap = estimate - oracle;
        let scale = se + bias;
        let z = if gap == 0.0 { 0.0 } else if scale > 0.0 { gap / scale } else { f64::INFINITY.copysign(gap) };
        Assertion {
            statistic: statistic.into(),
            kind: AssertionKind::Statistical,
            oracle,
            estimate,
            standard_error: se,
            bias_allowance: bias,
            z_score: z,
            threshold,
            verdict: Verdict::of(z.abs() <= threshold),
        }
    }

    /// |estimate − oracle| ≤ tol; `se` is informational.
    pub fn tolerance(statistic: impl Into<String>, oracle: f64, estimate: f64, se: f64, tol: f64) -> Self {
        let gap = estimate - oracle;
        let z = if gap == 0.0 { 0.0 } else { gap / tol };
        Assertion {
            statistic: statistic.into(),
            kind: AssertionKind::Tolerance,
            oracle,
            estimate,
            standard_error: se,
            bias_allowance: tol,
            z_score: z,
            threshold: 1.0,
            verdict: Verdict::of(z.abs() <= 1.0 && estimate.is_finite()),
        }
    }

    /// Analytic identity: relative residual against `scale`.
    pub fn identity(statistic: impl Into<String>, lhs: f64, rhs: f64, rtol: f64, scale: f64) -> Self {
        Self::tolerance(statistic, rhs, lhs, 0.0, rtol * scale.abs().max(f64::MIN_POSITIVE))
    }

    pub fn upper_bound(statistic: impl Into<String>, estimate: f64, bound: f64, se: f64) -> Self {
        let z = estimate / bound;
        Assertion {
            statistic: statistic.into(),
            kind: AssertionKind::UpperBound,
            oracle: bound,
            estimate,
            standard_error: se,
            bias_allowance: 0.0,
            z_score: z,
            threshold: 1.0,
            verdict: Verdict::of(estimate < bound),
        }
    }

    pub fn lower_bound(statistic: impl Into<String>, estimate: f64, bound: f64, se: f64) -> Self {
        let z = bound / estimate;
        Assertion {
            statistic: statistic.into(),
            kind: AssertionKind::LowerBound,
            oracle: bound,
            estimate,
            standard_error: se,
            bias_allowance: 0.0,
            z_score: z,
            threshold: 1.0,
            verdict: Verdict::of(estimate > bound),
        }
    }
}

/// What a report was computed from.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReportInputs {
    pub mechanism: Option<BranchingMechanism>,
    pub parameters: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub dt: Option<f64>,
}

impl ReportInputs {
    pub fn new(mech: &BranchingMechanism) -> Self {
        ReportInputs { mechanism: Some(mech.clone()), ..Default::default() }
    }
    pub fn param(mut self, key: &str, v: f64) -> Self {
        self.parameters.insert(key.into(), v);
        self
    }
    pub fn mc(mut self, seed: u64, n: usize, dt: Option<f64>) -> Self {
        self.seed = Some(seed);
        self.n = Some(n);
        self.dt = dt;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub test_name: String,
    pub inputs: ReportInputs,
    pub assertions: Vec<Assertion>,
    pub flags: Vec<String>,
    pub verdict: Verdict,
}

impl VerificationReport {
    pub fn new(test_name: impl Into<String>, inputs: ReportInputs, assertions: Vec<Assertion>) -> Self {
        let verdict = Verdict::of(!assertions.is_empty() && assertions.iter().all(|a| a.verdict.passed()));
        VerificationReport { test_name: test_name.into(), inputs, assertions, flags: Vec::new(), verdict }
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }

    fn flag(mut self, note: impl Into<String>) -> Self {
        self.flags.push(note.into());
        self
    }
}

/// The reports of one named suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub reports: Vec<VerificationReport>,
    pub verdict: Verdict,
}

impl SuiteReport {
    fn new(suite: &str, seed: u64, reports: Vec<VerificationReport>) -> Self {
        let verdict = Verdict::of(reports.iter().all(|r| r.passed()));
        SuiteReport { suite: suite.into(), seed, reports, verdict }
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "suite {} (seed {}): {}", self.suite, self.seed, verdict_word(self.verdict));
        for r in &self.reports {
            let _ = writeln!(s, "\n[{}] {}", verdict_word(r.verdict), r.test_name);
            for f in &r.flags {
                let _ = writeln!(s, "  note: {f}");
            }
            let _ = writeln!(
                s,
                "  {:<44} {:>14} {:>14} {:>10} {:>10} {:>9} {:>5}",
                "statistic", "oracle", "estimate", "se", "bias/tol", "z", ""
            );
            for a in &r.assertions {
                let _ = writeln!(
                    s,
                    "  {:<44} {:>14.8} {:>14.8} {:>10.2e} {:>10.2e} {:>9.3} {:>5}",
                    a.statistic,
                    a.oracle,
                    a.estimate,
                    a.standard_error,
                    a.bias_allowance,
                    a.z_score,
                    verdict_word(a.verdict)
                );
            }
        }
        s
    }
}

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
    }
}

// ---------------------------------------------------------------------------
// Analytic identities

/// ψ′(λ) + α − 2βλ = ∫(1 − e^{−λr}) rΠ(dr), the right side by quadrature.
pub fn check_thinning_identity(mech: &BranchingMechanism, lambdas: &[f64]) -> Result<VerificationReport> {
    let mut out = Vec::new();
    for &l in lambdas {
        let lhs = mech.psi_prime(l)? + mech.alpha - 2.0 * mech.beta * l;
        let rhs = mech.levy.integrate_numeric(|r| -(-l * r).exp_m1() * r, QUAD_TOL);
        out.push(Assertion::tolerance(format!("thinning λ={l}"), rhs, lhs, 0.0, THINNING_TOL * rhs.abs().max(1.0)));
    }
    Ok(VerificationReport::new("thinning_identity", ReportInputs::new(mech), out))
}

/// A_λ(η, θ) from its displayed integral, by quadrature.
pub fn pde_coefficient_a(mech: &BranchingMechanism, lambda: f64, eta: f64) -> f64 {
    let jumps = mech.levy.tilted(lambda).integrate_numeric(|r| em1x(eta * r), QUAD_TOL);
    eta * (-mech.psi_prime_unchecked(lambda) - eta * mech.beta) - jumps
}

/// B_λ(η, θ) from its displayed sum over offspring numbers k, by quadrature.
pub fn pde_coefficient_b(mech: &BranchingMechanism, lambda: f64, eta: f64, theta: f64) -> f64 {
    let l = lambda;
    let death = theta.exp_m1() * mech.psi_unchecked(l) / l;
    let binary = (-theta).exp_m1() * mech.beta * l;
    // Σ_{k≥1} (e^{−ηr−θ(k−1)} − 1) λ^{k−1} r^k/k! e^{−λr}
    let h = |r: f64| {
        let x = l * r;
        if x < 1.0 {
            let mut term = (-x).exp() / l;
            let mut sum = 0.0;
            for k in 1..80 {
                term *= x / k as f64;
                let add = term * (-eta * r - theta * (k - 1) as f64).exp_m1();
                sum += add;
                if term < 1e-18 * sum.abs() {
                    break;
                }
            }
            sum
        } else {
            (theta.exp() * (-(l + eta) * r).exp() * (l * (-theta).exp() * r).exp_m1() + (-x).exp_m1()) / l
        }
    };
    let pairs = mech.levy.integrate_numeric(h, QUAD_TOL);
    2.0 * eta * mech.beta - (death + binary + pairs)
}

/// −ψ(κ) = A_λ(η, θ) + λe^{−θ}B_λ(η, θ) with κ = η + λ(1 − e^{−θ}).
pub fn check_pde_coefficients(mech: &BranchingMechanism, lambda: f64, grid: &[(f64, f64)]) -> Result<VerificationReport> {
    if !(lambda > 0.0) || lambda < mech.lambda_star_or_zero()? * (1.0 - 1e-12) {
        return domain(format!("PDE coefficients need λ ≥ λ* and λ > 0, got {lambda}"));
    }
    let mut out = Vec::new();
    for &(eta, theta) in grid {
        let kappa = eta + lambda * -(-theta).exp_m1();
        let lhs = -mech.psi(kappa)?;
        let a = pde_coefficient_a(mech, lambda, eta);
        let b = lambda * (-theta).exp() * pde_coefficient_b(mech, lambda, eta, theta);
        // absolute floor: every term vanishes at η = θ = 0
        let scale = lhs.abs().max(a.abs()).max(b.abs()).max(1.0);
        out.push(Assertion::identity(format!("pde λ={lambda} η={eta} θ={theta}"), a + b, lhs, IDENTITY_RTOL, scale));
    }
    Ok(VerificationReport::new("pde_coefficients", ReportInputs::new(mech).param("lambda", lambda), out))
}

/// ψ_λ(θ) = ψ(θ + λ) − ψ(λ), the left side from the tilted parameters.
pub fn check_esscher(mech: &BranchingMechanism, lambdas: &[f64], thetas: &[f64]) -> Result<VerificationReport> {
    let mut out = Vec::new();
    for &l in lambdas {
        let tilted = mech.esscher(l)?;
        for &th in thetas {
            let lhs = tilted.psi(th)?;
            let a = mech.psi(th + l)?;
            let b = mech.psi(l)?;
            let scale = a.abs().max(b.abs()).max(lhs.abs());
            out.push(Assertion::identity(format!("esscher λ={l} θ={th}"), lhs, a - b, IDENTITY_RTOL, scale));
        }
    }
    Ok(VerificationReport::new("esscher", ReportInputs::new(mech), out))
}

/// u_{t+s}(θ) = u_t(u_s(θ)).
pub fn check_semigroup(mech: &BranchingMechanism, thetas: &[f64], pairs: &[(f64, f64)]) -> Result<VerificationReport> {
    let mut out = Vec::new();
    for &th in thetas {
        for &(t, s) in pairs {
            let whole = evolution::u_at(mech, th, t + s)?;
            let split = evolution::u_at(mech, evolution::u_at(mech, th, s)?, t)?;
            out.push(Assertion::identity(format!("flow θ={th} t={t} s={s}"), split, whole, IDENTITY_RTOL, whole));
        }
    }
    Ok(VerificationReport::new("semigroup", ReportInputs::new(mech), out))
}

/// q(Σ p_k r^k − r) = ψ(λ(1 − r))/λ.
pub fn check_generating_function(mech: &BranchingMechanism, lambda: f64, rs: &[f64]) -> Result<VerificationReport> {
    let law = mech.skeleton_params(lambda, 512)?;
    let q = law.rate;
    let mut out = Vec::new();
    for &r in rs {
        let lhs = q * (law.pgf(r) - r);
        let rhs = mech.psi(lambda * (1.0 - r))? / lambda;
        out.push(Assertion::identity(format!("pgf λ={lambda} r={r}"), lhs, rhs, IDENTITY_RTOL, rhs.abs().max(q)));
    }
    Ok(VerificationReport::new("generating_function", ReportInputs::new(mech).param("lambda", lambda), out))
}

// ---------------------------------------------------------------------------
// Monte Carlo tests

/// Minimum sample size for a marginal Laplace test.
pub const MIN_SAMPLES: usize = 1000;

/// Mean of e^{−θ·mass} against an oracle on a θ grid.
pub fn test_marginal_laplace(
    name: &str,
    samples: &[f64],
    oracle: impl Fn(f64) -> Result<f64>,
    theta_grid: &[f64],
    bias: f64,
    inputs: ReportInputs,
) -> Result<VerificationReport> {
    if samples.len() < MIN_SAMPLES {
        return domain(format!("marginal Laplace test needs ≥ {MIN_SAMPLES} samples, got {}", samples.len()));
    }
    let mut out = Vec::new();
    for &th in theta_grid {
        let m = mean_se(samples.iter().map(|&x| (-th * x).exp()));
        out.push(Assertion::statistical(format!("E[exp(-{th} X)]"), oracle(th)?, m.mean, m.se, bias, Z_THRESHOLD));
    }
    let mut r = VerificationReport::new(name, inputs, out);
    if samples.iter().all(|&s| s == samples[0]) {
        r = r.flag("degenerate sample: all values equal");
    }
    Ok(r)
}

/// Two independent samples with the same Laplace transform.
pub fn test_two_sample_laplace(name: &str, a: &[f64], b: &[f64], theta_grid: &[f64], bias: f64, inputs: ReportInputs) -> VerificationReport {
    let out = theta_grid
        .iter()
        .map(|&th| {
            let ma = mean_se(a.iter().map(|&x| (-th * x).exp()));
            let mb = mean_se(b.iter().map(|&x| (-th * x).exp()));
            let se = (ma.se * ma.se + mb.se * mb.se).sqrt();
            Assertion::statistical(format!("two-sample E[exp(-{th} X)]"), mb.mean, ma.mean, se, bias, Z_THRESHOLD)
        })
        .collect();
    VerificationReport::new(name, inputs, out)
}

/// E[e^{−ηΛ−θZ}] = E[e^{−(η + tilt(1 − e^{−θ}))Λ}] on the same paths.
pub fn test_joint_poissonization(
    name: &str,
    pairs: &[(f64, u64)],
    tilt: f64,
    grid: &[(f64, f64)],
    bias: f64,
    inputs: ReportInputs,
) -> VerificationReport {
    let out = grid
        .iter()
        .map(|&(eta, theta)| {
            let kappa = eta + tilt * -(-theta).exp_m1();
            let lhs = mean_se(pairs.iter().map(|&(l, z)| (-eta * l - theta * z as f64).exp()));
            let d = mean_se(pairs.iter().map(|&(l, z)| (-eta * l - theta * z as f64).exp() - (-kappa * l).exp()));
            let oracle = lhs.mean - d.mean;
            Assertion::statistical(format!("joint η={eta} θ={theta}"), oracle, lhs.mean, d.se, bias, Z_THRESHOLD)
        })
        .collect();
    VerificationReport::new(name, inputs, out)
}

/// Poisson mean = variance of Z given Λ: within each Λ-decile the residuals
/// Z − cΛ and (Z − cΛ)² − cΛ average to zero.
pub fn test_dispersion(name: &str, pairs: &[(f64, u64)], tilt: f64, bins: usize, inputs: ReportInputs) -> VerificationReport {
    let mut sorted: Vec<(f64, u64)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = sorted.len();
    let mut out = Vec::new();
    for b in 0..bins {
        let chunk = &sorted[b * n / bins..(b + 1) * n / bins];
        let r1 = mean_se(chunk.iter().map(|&(l, z)| z as f64 - tilt * l));
        let r2 = mean_se(chunk.iter().map(|&(l, z)| (z as f64 - tilt * l).powi(2) - tilt * l));
        out.push(Assertion::statistical(format!("decile {b} mean residual"), 0.0, r1.mean, r1.se, 0.0, DISPERSION_THRESHOLD));
        out.push(Assertion::statistical(format!("decile {b} variance residual"), 0.0, r2.mean, r2.se, 0.0, DISPERSION_THRESHOLD));
    }
    VerificationReport::new(name, inputs, out)
}

/// Sample mean against x e^{αt}.
pub fn test_mean_growth(name: &str, samples: &[f64], x: f64, mech: &BranchingMechanism, t: f64, bias: f64, inputs: ReportInputs) -> VerificationReport {
    let m = mean_se(samples.iter().copied());
    let oracle = x * (mech.alpha * t).exp();
    VerificationReport::new(name, inputs, vec![Assertion::statistical("mean", oracle, m.mean, m.se, bias, Z_THRESHOLD)])
}

/// Frequency of absorption by `horizon` against e^{−x u_H(∞)}. Paths are
/// stopped once their mass reaches 30/λ*, from where survival fails with
/// probability below e^{−30}.
pub fn test_extinction(mech: &BranchingMechanism, x: f64, horizon: f64, n: usize, dt: f64, seed: u64) -> Result<VerificationReport> {
    if mech.classify() != Criticality::Supercritical {
        return domain("extinction test expects a supercritical mechanism");
    }
    let ls = mech.lambda_star()?;
    let cap = 30.0 / ls;
    let mut cfg = PathConfig::new(dt, horizon);
    cfg.mass_cap = Some(cap);
    let engine = Engine::csbp(mech, &cfg)?;
    let dead = map_paths(n, |i| engine.run(x, 0, &mut PathStreams::new(seed, i)).extinction_time.is_some() as u8 as f64);
    let m = mean_se(dead);
    let exact = (-x * evolution::u_infinity(mech, horizon)?).exp();
    let limit = (-ls * x).exp();
    let se = (exact * (1.0 - exact) / n as f64).sqrt();
    let inputs = ReportInputs::new(mech).param("x", x).param("horizon", horizon).param("mass_cap", cap).mc(seed, n, Some(dt));
    let out = vec![
        Assertion::statistical("P(X_H = 0)", exact, m.mean, se, (-ls * cap).exp(), Z_THRESHOLD),
        Assertion::tolerance("exp(-x u_H(inf)) vs exp(-lambda* x)", limit, exact, 0.0, 1e-12),
    ];
    Ok(VerificationReport::new(format!("extinction x={x}"), inputs, out))
}

/// Control-variate Euler estimate of E[e^{−θX_t}] for Π = 0:
/// Y = e^{−u_0 X_0} + Σ_n (E_n[e^{−u_{n+1}X_{n+1}}] − e^{−u_n X_n}) with
/// u_n = u_{t−t_n}(θ), where E_n is the exact one-step expectation under the
/// clamped Euler step. E[Y] = E[e^{−θX_N}] under the scheme, with a much
/// smaller variance.
pub fn euler_laplace_control_variate(
    mech: &BranchingMechanism,
    x: f64,
    t: f64,
    thetas: &[f64],
    n: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<MeanSe>> {
    if !mech.levy.is_none() {
        return domain("the control variate is built for Π = 0");
    }
    let mut cfg = PathConfig::new(dt, t);
    cfg.record_every = 1;
    let engine = Engine::csbp(mech, &cfg)?;
    let grid = engine.grid().to_vec();
    let steps = grid.len() - 1;
    // u_n at remaining time t − t_n
    let remaining: Vec<f64> = grid.iter().rev().map(|s| t - s).map(|r| r.max(0.0)).collect();
    let us: Vec<Vec<f64>> = thetas
        .iter()
        .map(|&th| {
            let tab = evolution::solve_u(mech, th, &remaining)?;
            Ok(tab.u.into_iter().rev().collect())
        })
        .collect::<Result<_>>()?;
    let (alpha, beta) = (mech.alpha, mech.beta);
    let ys: Vec<Vec<f64>> = map_paths(n, |i| {
        let p = engine.run(x, 0, &mut PathStreams::new(seed, i));
        us.iter()
            .map(|u| {
                let mut y = (-u[0] * x).exp();
                for k in 0..steps {
                    let xk = p.lambda_mass[k];
                    let h = grid[k + 1] - grid[k];
                    let now = (-u[k] * xk).exp();
                    let next = if xk == 0.0 {
                        1.0
                    } else {
                        let m = xk * (1.0 + alpha * h);
                        let s = (2.0 * beta * xk * h).sqrt();
                        let v = u[k + 1];
                        norm_cdf(-m / s) + (-v * m + 0.5 * v * v * s * s).exp() * norm_cdf(m / s - v * s)
                    };
                    y += next - now;
                }
                y
            })
            .collect()
    });
    Ok((0..thetas.len()).map(|j| mean_se(ys.iter().map(|y| y[j]))).collect())
}

// ---------------------------------------------------------------------------
// Suites

pub mod presets {
    use crate::levy::LevyMeasure;
    use crate::mechanism::BranchingMechanism;

    /// ψ(θ) = −θ + θ².
    pub fn feller_super() -> BranchingMechanism {
        BranchingMechanism::feller(1.0, 1.0).unwrap()
    }
    /// ψ(θ) = θ + θ².
    pub fn feller_sub() -> BranchingMechanism {
        BranchingMechanism::feller(-1.0, 1.0).unwrap()
    }
    /// α = 1, β = 1/2, Π(dr) = e^{−r}dr.
    pub fn e1() -> BranchingMechanism {
        BranchingMechanism::new(1.0, 0.5, LevyMeasure::Exponential { c: 1.0, b: 1.0 }).unwrap()
    }
    /// Supercritical tempered stable: α = 1, β = 0, c r^{−5/2} e^{−r}.
    pub fn tempered_super() -> BranchingMechanism {
        BranchingMechanism::new(1.0, 0.0, LevyMeasure::Tilted { c: 1.0, a: 1.5, tilt: 1.0 }).unwrap()
    }
    /// Subcritical with finite atoms: α = −1, β = 1/2, atoms at 0.5 and 2.
    pub fn atoms_sub() -> BranchingMechanism {
        BranchingMechanism::new(-1.0, 0.5, LevyMeasure::Atoms { atoms: vec![(0.5, 1.0), (2.0, 0.25)] }).unwrap()
    }
}

pub const SUITES: &[&str] = &["identities", "exact", "euler", "theorem21", "theorem22", "theorem23", "extinction", "selftest", "all"];

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Overrides the per-suite path counts when set.
    pub paths: Option<usize>,
    pub dt: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { seed: DEFAULT_SEED, paths: None, dt: 1e-3 }
    }
}

impl SuiteConfig {
    fn n(&self, default: usize) -> usize {
        self.paths.unwrap_or(default)
    }
    /// Independent seed for the k-th experiment of a suite.
    fn seed_for(&self, k: u64) -> u64 {
        splitmix64(self.seed ^ k.wrapping_mul(0x2545_f491_4f6c_dd1d))
    }
    fn laplace_bias(&self) -> f64 {
        LAPLACE_BIAS_PER_DT * self.dt
    }
}

pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let reports = match name {
        "identities" => suite_identities()?,
        "exact" => suite_exact(cfg)?,
        "euler" => suite_euler(cfg)?,
        "theorem21" => suite_theorem21(cfg)?,
        "theorem22" => suite_theorem22(cfg)?,
        "theorem23" => suite_theorem23(cfg)?,
        "extinction" => suite_extinction(cfg)?,
        "selftest" => suite_selftest(cfg)?,
        "all" => {
            let mut v = Vec::new();
            for s in SUITES.iter().filter(|s| !matches!(**s, "all" | "selftest")) {
                v.extend(run_suite(s, cfg)?.reports);
            }
            v
        }
        other => return Err(Error::UnknownSuite(other.into())),
    };
    Ok(SuiteReport::new(name, cfg.seed, reports))
}

fn suite_identities() -> Result<Vec<VerificationReport>> {
    use presets::*;
    let grid: Vec<(f64, f64)> = [0.25, 0.5, 1.0]
        .iter()
        .flat_map(|&e| [0.25, 0.7, 1.0].iter().map(move |&t| (e, t)))
        .chain([(0.0, 0.0), (0.5, 0.7), (1.0, 1.0)])
        .collect();
    let mut out = Vec::new();
    for m in [feller_super(), feller_sub(), e1(), tempered_super(), atoms_sub()] {
        let ls = m.lambda_star_or_zero()?;
        out.push(check_thinning_identity(&m, &[0.0, 0.5, 1.0, 2.0, 5.0])?);
        let tilts: Vec<f64> = if ls > 0.0 { vec![ls, 2.0 * ls] } else { vec![0.5, 2.0] };
        out.push(check_esscher(&m, &tilts, &[0.25, 1.0, 4.0])?);
        out.push(check_semigroup(&m, &[0.5, 2.0], &[(0.3, 0.7), (1.0, 1.0)])?);
        for &l in &tilts {
            out.push(check_pde_coefficients(&m, l, &grid)?);
            out.push(check_generating_function(&m, l, &[0.0, 0.3, 0.7, 1.0])?);
        }
    }
    Ok(out)
}

const THETAS: [f64; 3] = [0.5, 1.0, 2.0];

fn suite_exact(cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let mech = presets::feller_super();
    let (x, t) = (1.0, 1.0);
    let n = cfg.n(1_000_000);
    let seed = cfg.seed_for(1);
    let samples = map_paths(n, |i| sample_feller_exact(&mech, x, t, &mut PathStreams::new(seed, i).exact).unwrap());
    let inputs = ReportInputs::new(&mech).param("x", x).param("t", t).mc(seed, n, None);
    let lap = test_marginal_laplace("exact sampler Laplace", &samples, |th| evolution::laplace_csbp(&mech, x, t, th), &THETAS, 0.0, inputs.clone())?;
    let zero = mean_se(samples.iter().map(|&s| (s == 0.0) as u8 as f64));
    let atom = (-x * evolution::u_infinity(&mech, t)?).exp();
    let atom_se = (atom * (1.0 - atom) / n as f64).sqrt();
    let atom_report = VerificationReport::new(
        "exact sampler extinction atom",
        inputs.clone(),
        vec![Assertion::statistical("P(X_t = 0)", atom, zero.mean, atom_se, 0.0, Z_THRESHOLD)],
    );
    let mean = test_mean_growth("exact sampler mean", &samples, x, &mech, t, 0.0, inputs);
    Ok(vec![lap, atom_report, mean])
}

fn suite_euler(cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let mech = presets::feller_super();
    let (x, t) = (1.0, 1.0);
    let n = cfg.n(100_000);
    let n_exact = 10 * n;
    let (seed_e, seed_x, seed_cv) = (cfg.seed_for(11), cfg.seed_for(12), cfg.seed_for(13));
    let engine = Engine::csbp(&mech, &PathConfig::new(cfg.dt, t))?;
    let euler = map_paths(n, |i| engine.run(x, 0, &mut PathStreams::new(seed_e, i)).final_mass());
    let exact = map_paths(n_exact, |i| sample_feller_exact(&mech, x, t, &mut PathStreams::new(seed_x, i).exact).unwrap());
    let cv = euler_laplace_control_variate(&mech, x, t, &THETAS, n, cfg.dt, seed_cv)?;
    let bias = cfg.laplace_bias();
    let inputs = ReportInputs::new(&mech).param("x", x).param("t", t).mc(seed_e, n, Some(cfg.dt));

    let mut gap = Vec::new();
    let mut plain = Vec::new();
    let mut oracle = Vec::new();
    for (j, &th) in THETAS.iter().enumerate() {
        let ex = mean_se(exact.iter().map(|&s| (-th * s).exp()));
        let eu = mean_se(euler.iter().map(|&s| (-th * s).exp()));
        let se = (cv[j].se.powi(2) + ex.se.powi(2)).sqrt();
        gap.push(Assertion::tolerance(format!("Euler/exact rel. gap θ={th}"), 0.0, cv[j].mean / ex.mean - 1.0, se / ex.mean, EULER_REL_GAP));
        let se2 = (eu.se.powi(2) + ex.se.powi(2)).sqrt();
        plain.push(Assertion::statistical(format!("Euler vs exact E[exp(-{th} X)]"), ex.mean, eu.mean, se2, bias, Z_THRESHOLD));
        let o = evolution::laplace_csbp(&mech, x, t, th)?;
        oracle.push(Assertion::statistical(format!("Euler (control variate) θ={th}"), o, cv[j].mean, cv[j].se, bias, Z_THRESHOLD));
    }
    Ok(vec![
        VerificationReport::new("Euler vs exact sampler (relative gap)", inputs.clone().param("n_exact", n_exact as f64), gap),
        VerificationReport::new("Euler vs exact sampler (two-sample)", inputs.clone(), plain),
        VerificationReport::new("Euler control variate vs oracle", inputs.clone(), oracle),
        test_mean_growth("Euler mean growth", &euler, x, &mech, t, cfg.dt * (mech.alpha * t).exp(), inputs),
    ])
}

/// Laplace grid of the joint Poissonization tests.
fn joint_grid() -> Vec<(f64, f64)> {
    [0.25, 0.5, 1.0].iter().flat_map(|&e| [0.25, 0.5, 1.0].iter().map(move |&t| (e, t))).collect()
}

fn suite_theorem21(cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let (x, t) = (1.0, 1.0);
    let n = cfg.n(100_000);
    let bias = cfg.laplace_bias();
    let path_cfg = PathConfig::new(cfg.dt, t);
    let mut out = Vec::new();
    let cases = [
        ("Feller-super", presets::feller_super(), 1.0, true),
        ("Feller-super", presets::feller_super(), 2.0, false),
        ("E1", presets::e1(), 1.0, true),
    ];
    for (k, (label, mech, mult, joint)) in cases.iter().enumerate() {
        let lambda = mult * mech.lambda_star()?;
        let seed = cfg.seed_for(21 + k as u64);
        let runner = SkeletonRunner::lambda_skeleton(mech, lambda, x, InitialLaw::Poisson(lambda * x), &path_cfg)?;
        let pairs: Vec<(f64, u64)> = map_paths(n, |i| {
            let p = runner.run(&mut PathStreams::new(seed, i));
            (p.final_mass(), p.final_count())
        });
        let masses: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let inputs = ReportInputs::new(mech).param("lambda", lambda).param("x", x).param("t", t).mc(seed, n, Some(cfg.dt));
        out.push(test_marginal_laplace(
            &format!("lambda-skeleton marginal, {label}, λ = {mult}λ*"),
            &masses,
            |th| evolution::laplace_csbp(mech, x, t, th),
            &THETAS,
            bias,
            inputs.clone(),
        )?);
        if *joint {
            out.push(test_joint_poissonization(
                &format!("lambda-skeleton joint Poissonization, {label}, λ = {mult}λ*"),
                &pairs,
                lambda,
                &joint_grid(),
                bias,
                inputs.clone(),
            ));
            out.push(test_dispersion(&format!("lambda-skeleton dispersion, {label}, λ = {mult}λ*"), &pairs, lambda, 10, inputs));
        }
    }
    Ok(out)
}

fn suite_theorem22(cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let mech = presets::feller_sub();
    let (x, t, horizon) = (1.0, 1.0, 2.0);
    let n = cfg.n(100_000);
    let bias = cfg.laplace_bias();
    let path_cfg = PathConfig::new(cfg.dt, t);
    let u_t = evolution::u_infinity(&mech, horizon)?;
    let u_rest = evolution::u_infinity(&mech, horizon - t)?;
    let base = ReportInputs::new(&mech).param("T", horizon).param("x", x).param("t", t);
    let mut out = Vec::new();

    // Poisson(u_T(∞)x) start: Λ^T is the ψ-CSBP and Z^T is Poisson given Λ^T.
    let seed = cfg.seed_for(31);
    let runner = SkeletonRunner::t_skeleton(&mech, horizon, x, InitialLaw::Poisson(u_t * x), &path_cfg)?;
    let pairs: Vec<(f64, u64)> = map_paths(n, |i| {
        let p = runner.run(&mut PathStreams::new(seed, i));
        (p.final_mass(), p.final_count())
    });
    let masses: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let inputs = base.clone().mc(seed, n, Some(cfg.dt));
    out.push(test_marginal_laplace("T-skeleton marginal", &masses, |th| evolution::laplace_csbp(&mech, x, t, th), &THETAS, bias, inputs.clone())?);
    out.push(test_joint_poissonization("T-skeleton joint Poissonization", &pairs, u_rest, &joint_grid(), bias, inputs));

    // Z_0 = 0: the process conditioned to die by T.
    let seed = cfg.seed_for(32);
    let runner = SkeletonRunner::t_skeleton(&mech, horizon, x, InitialLaw::Fixed(0), &path_cfg)?;
    let masses = map_paths(n, |i| runner.run(&mut PathStreams::new(seed, i)).final_mass());
    out.push(test_marginal_laplace(
        "T-skeleton with Z_0 = 0 vs die-by-T",
        &masses,
        |th| evolution::laplace_die_by_t(&mech, horizon, x, t, th),
        &THETAS,
        bias,
        base.clone().mc(seed, n, Some(cfg.dt)),
    )?);

    // First branching time of a single individual.
    let seed = cfg.seed_for(33);
    let runner = SkeletonRunner::t_skeleton(&mech, horizon, 0.0, InitialLaw::Fixed(1), &path_cfg)?;
    let alive = mean_se(map_paths(n, |i| runner.run(&mut PathStreams::new(seed, i)).first_branch_time.is_none() as u8 as f64));
    let exact = evolution::gamma_t_survival(&mech, horizon, t)?;
    let se = (exact * (1.0 - exact) / n as f64).sqrt();
    out.push(VerificationReport::new(
        "T-skeleton first branch time",
        base.param("x", 0.0).mc(seed, n, Some(cfg.dt)),
        vec![Assertion::statistical("P(no branch by t)", exact, alive.mean, se, 0.0, Z_THRESHOLD)],
    ));
    Ok(out)
}

fn suite_theorem23(cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let mech = presets::feller_sub();
    let (x, t) = (1.0, 1.0);
    let horizons = [2.0, 4.0, 8.0, 16.0];
    let n = cfg.n(100_000);
    let bias = cfg.laplace_bias();
    let seed = cfg.seed_for(41);
    let path_cfg = PathConfig::new(cfg.dt, t);
    let sweep = spine_limit_experiment(&mech, x, t, &horizons, n, &THETAS, &path_cfg, seed)?;
    let inputs = ReportInputs::new(&mech).param("x", x).param("t", t).mc(seed, n, Some(cfg.dt));

    let mut shape = Vec::new();
    for w in sweep.rows.windows(2) {
        shape.push(Assertion::upper_bound(
            format!("paired d_T decreasing T={}→{}", w[0].horizon, w[1].horizon),
            w[1].d_t_paired,
            w[0].d_t_paired,
            w[1].se_paired,
        ));
    }
    let last = sweep.rows.last().unwrap();
    shape.push(Assertion::upper_bound(format!("d_T at T={}", last.horizon), last.d_t, 3.0 * (last.se + bias), last.se));
    let p = last.p_z_always_one;
    shape.push(Assertion::lower_bound(
        format!("P(Z = 1 on [0,t]) at T={}", last.horizon),
        p,
        0.99,
        (p * (1.0 - p) / n as f64).sqrt(),
    ));

    let mut conditioned = Vec::new();
    for row in &sweep.rows {
        for (j, &th) in THETAS.iter().enumerate() {
            conditioned.push(Assertion::statistical(
                format!("T={} E[exp(-{th} Λ_t) | Z_0 ≥ 1]", row.horizon),
                row.conditioned_oracle[j],
                row.laplace[j].mean,
                row.laplace[j].se,
                bias,
                Z_THRESHOLD,
            ));
        }
    }

    let seed_s = cfg.seed_for(42);
    let engine = Engine::spine(&mech, &path_cfg)?;
    let spine = map_paths(n, |i| engine.run(x, 1, &mut PathStreams::new(seed_s, i)).final_mass());
    let spine_report = test_marginal_laplace(
        "spine SDE vs immigration oracle",
        &spine,
        |th| evolution::laplace_immigration(&mech, x, 1, t, th),
        &THETAS,
        bias,
        ReportInputs::new(&mech).param("x", x).param("t", t).mc(seed_s, n, Some(cfg.dt)),
    )?;
    Ok(vec![
        VerificationReport::new("spine limit: shape of d_T", inputs.clone(), shape),
        VerificationReport::new("spine limit: conditioned marginals", inputs, conditioned),
        spine_report,
    ])
}

fn suite_extinction(cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let mech = presets::feller_super();
    let n = cfg.n(100_000);
    [1.0, 3.0]
        .iter()
        .enumerate()
        .map(|(k, &x)| test_extinction(&mech, x, 40.0, n, cfg.dt, cfg.seed_for(51 + k as u64)))
        .collect()
}

/// A deliberately corrupted oracle; the suite must fail.
fn suite_selftest(cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let mech = presets::feller_super();
    let n = cfg.n(10_000);
    let seed = cfg.seed_for(61);
    let samples = map_paths(n, |i| sample_feller_exact(&mech, 1.0, 1.0, &mut PathStreams::new(seed, i).exact).unwrap());
    let se = mean_se(samples.iter().map(|&s| (-s).exp())).se;
    let report = test_marginal_laplace(
        "self-test: oracle offset by 10 s.e.",
        &samples,
        |th| Ok(evolution::laplace_csbp(&mech, 1.0, 1.0, th)? + SELFTEST_OFFSET_SE * se),
        &[1.0],
        0.0,
        ReportInputs::new(&mech).mc(seed, n, None),
    )?;
    Ok(vec![report])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyMeasure;
    use presets::*;

    #[test]
    fn thinning_examples() {
        let r = check_thinning_identity(&feller_super(), &[0.0, 1.0]).unwrap();
        assert!(r.passed());
        assert!(r.assertions.iter().all(|a| a.estimate.abs() < 1e-15));
        let r = check_thinning_identity(&e1(), &[1.0]).unwrap();
        assert!((r.assertions[0].oracle - 0.75).abs() < 1e-12);
        assert!(r.passed());
    }

    #[test]
    fn pde_examples() {
        let m = feller_super();
        let a = pde_coefficient_a(&m, 1.0, 0.5);
        let b = pde_coefficient_b(&m, 1.0, 0.5, 0.7);
        // Π = 0: A = η(−ψ′(λ) − ηβ), B = 2ηβ − (e^{−θ} − 1)βλ
        assert!((a - 0.5 * (-1.0 - 0.5)).abs() < 1e-15);
        assert!((b - (1.0 - (-0.7f64).exp_m1())).abs() < 1e-15);
        let k = 0.5 + 1.0 - (-0.7f64).exp();
        assert!((k - 1.003415).abs() < 1e-6);
        assert!((m.psi(k).unwrap() - 0.003427).abs() < 1e-6);
        let r = check_pde_coefficients(&m, 1.0, &[(0.0, 0.0), (0.5, 0.7)]).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.assertions[0].estimate, 0.0);
        assert!(check_pde_coefficients(&e1(), 1.0, &[(1.0, 1.0)]).unwrap().passed());
        assert!(check_pde_coefficients(&m, 0.5, &[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn pde_series_and_closed_branches_agree() {
        // the Π-part integrand switches form at λr = 1
        let m = BranchingMechanism::new(1.0, 0.0, LevyMeasure::Atoms { atoms: vec![(1.0 - 1e-9, 1.0)] }).unwrap();
        let n = BranchingMechanism::new(1.0, 0.0, LevyMeasure::Atoms { atoms: vec![(1.0 + 1e-9, 1.0)] }).unwrap();
        let (a, b) = (pde_coefficient_b(&m, 1.0, 0.3, 0.6), pde_coefficient_b(&n, 1.0, 0.3, 0.6));
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn identities_suite_passes() {
        let r = run_suite("identities", &SuiteConfig::default()).unwrap();
        for rep in &r.reports {
            for a in &rep.assertions {
                assert!(a.verdict.passed(), "{}: {a:?}", rep.test_name);
            }
        }
        assert!(r.passed());
    }

    #[test]
    fn marginal_laplace_edge_cases() {
        let zeros = vec![0.0; 1000];
        let r = test_marginal_laplace("zeros", &zeros, |_| Ok(1.0), &[1.0], 0.0, ReportInputs::default()).unwrap();
        assert!(r.passed());
        assert_eq!(r.assertions[0].estimate, 1.0);
        assert_eq!(r.assertions[0].z_score, 0.0);
        assert_eq!(r.flags.len(), 1);
        assert!(test_marginal_laplace("few", &zeros[..10], |_| Ok(1.0), &[1.0], 0.0, ReportInputs::default()).is_err());
    }

    #[test]
    fn joint_identity_is_trivial_at_theta_zero() {
        let pairs: Vec<(f64, u64)> = (0..100).map(|i| (i as f64 * 0.1, i % 3)).collect();
        let r = test_joint_poissonization("t", &pairs, 1.0, &[(0.5, 0.0)], 0.0, ReportInputs::default());
        assert_eq!(r.assertions[0].z_score, 0.0);
        assert!(r.passed());
    }

    #[test]
    fn control_variate_is_unbiased_for_the_scheme() {
        // coarse dt makes the Euler bias visible; the plain and control-variate
        // estimators must agree with each other, not with the exact oracle
        let m = feller_super();
        let dt = 0.05;
        let n = 40_000;
        let cv = euler_laplace_control_variate(&m, 1.0, 1.0, &[1.0], n, dt, 5).unwrap();
        let engine = Engine::csbp(&m, &PathConfig::new(dt, 1.0)).unwrap();
        let plain = mean_se(map_paths(n, |i| (-engine.run(1.0, 0, &mut PathStreams::new(6, i)).final_mass()).exp()));
        let se = (plain.se.powi(2) + cv[0].se.powi(2)).sqrt();
        assert!((plain.mean - cv[0].mean).abs() < 4.0 * se, "{plain:?} vs {:?}", cv[0]);
        assert!(cv[0].se < 0.2 * plain.se);
    }

    #[test]
    fn extinction_from_zero() {
        let r = test_extinction(&feller_super(), 0.0, 5.0, 1000, 1e-2, 1).unwrap();
        assert_eq!(r.assertions[0].estimate, 1.0);
        assert_eq!(r.assertions[0].oracle, 1.0);
        assert!(r.passed());
    }

    #[test]
    fn selftest_fails() {
        let r = run_suite("selftest", &SuiteConfig::default()).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn unknown_suite() {
        assert!(matches!(run_suite("nope", &SuiteConfig::default()), Err(Error::UnknownSuite(_))));
    }

    #[test]
    fn report_json_has_fixed_fields() {
        let r = run_suite("selftest", &SuiteConfig { paths: Some(2000), ..Default::default() }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let a = &v["reports"][0]["assertions"][0];
        for key in ["statistic", "oracle", "estimate", "standard_error", "bias_allowance", "z_score", "threshold", "verdict"] {
            assert!(a.get(key).is_some(), "{key}");
        }
        assert_eq!(v["verdict"], "fail");
        assert!(r.to_text().contains("FAIL"));
    }
}
