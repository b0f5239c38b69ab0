//! The evolution equation du/dt = −ψ(u), the extinction exponent u_t(∞), the
//! conditioned exponent V^T_t and the Laplace-transform oracles built on them.

use std::io::Write;

use serde::Serialize;

use crate::error::{domain, precondition, Error, Result};
use crate::mechanism::{BranchingMechanism, Criticality};
use crate::ode::Dopri5;
use crate::quad;

/// Relative tolerance of every ODE solve in this module.
pub const SOLVER_RTOL: f64 = 1e-10;
/// Cross-check threshold between the quadrature root and the capped ODE.
const CROSS_CHECK_RTOL: f64 = 1e-6;
const CAP_START: f64 = 1e6;
const CAP_LIMIT: f64 = 1e30;
const CAP_CONVERGED: f64 = 1e-8;

fn solver() -> Dopri5 {
    Dopri5 { rtol: SOLVER_RTOL, ..Dopri5::default() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum InitialValue {
    Finite(f64),
    Infinity,
}

/// u_t(θ) tabulated on a time grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvolutionTable {
    pub theta: InitialValue,
    pub times: Vec<f64>,
    pub u: Vec<f64>,
    pub du_dtheta: Option<Vec<f64>>,
    pub tol: f64,
}

impl EvolutionTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Numerical(format!("csv: {e}"));
        match &self.du_dtheta {
            Some(d) => {
                out.write_record(["t", "u", "du_dtheta"]).map_err(io)?;
                for i in 0..self.times.len() {
                    out.write_record([fmt(self.times[i]), fmt(self.u[i]), fmt(d[i])]).map_err(io)?;
                }
            }
            None => {
                out.write_record(["t", "u"]).map_err(io)?;
                for i in 0..self.times.len() {
                    out.write_record([fmt(self.times[i]), fmt(self.u[i])]).map_err(io)?;
                }
            }
        }
        out.flush().map_err(|e| Error::Numerical(format!("csv: {e}")))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return domain("empty time grid");
    }
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !t.is_finite()) {
        return domain("time grid must be finite, non-negative and non-decreasing");
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta >= 0.0 {
        Ok(())
    } else {
        domain(format!("theta must be finite and ≥ 0, got {theta}"))
    }
}

/// Solve du/dt = −ψ(u), u(0) = θ on `times`.
pub fn solve_u(mech: &BranchingMechanism, theta: f64, times: &[f64]) -> Result<EvolutionTable> {
    check_theta(theta)?;
    check_grid(times)?;
    let u = if theta == 0.0 {
        vec![0.0; times.len()]
    } else {
        let sol = solver().solve(|_, y: &[f64; 1]| [-mech.psi_unchecked(y[0])], 0.0, [theta], times)?;
        sol.states.iter().map(|s| s[0]).collect()
    };
    check_monotone(mech, theta, &u)?;
    Ok(EvolutionTable { theta: InitialValue::Finite(theta), times: times.to_vec(), u, du_dtheta: None, tol: SOLVER_RTOL })
}

/// u_t(θ) together with ∂u_t/∂θ, from the variational equation w' = −ψ′(u)w.
pub fn solve_u_with_derivative(mech: &BranchingMechanism, theta: f64, times: &[f64]) -> Result<EvolutionTable> {
    check_theta(theta)?;
    if theta == 0.0 {
        return domain("du/dθ requires θ > 0");
    }
    check_grid(times)?;
    let sol = solver().solve(
        |_, y: &[f64; 2]| [-mech.psi_unchecked(y[0]), -mech.psi_prime_unchecked(y[0]) * y[1]],
        0.0,
        [theta, 1.0],
        times,
    )?;
    let u: Vec<f64> = sol.states.iter().map(|s| s[0]).collect();
    check_monotone(mech, theta, &u)?;
    Ok(EvolutionTable {
        theta: InitialValue::Finite(theta),
        times: times.to_vec(),
        u,
        du_dtheta: Some(sol.states.iter().map(|s| s[1]).collect()),
        tol: SOLVER_RTOL,
    })
}

fn check_monotone(mech: &BranchingMechanism, theta: f64, u: &[f64]) -> Result<()> {
    let slack = |a: f64| 1e-12 * a.abs().max(1e-300);
    let ls = mech.lambda_star_or_zero()?;
    let increasing = mech.classify() == Criticality::Supercritical && theta < ls;
    for w in u.windows(2) {
        let bad = if increasing { w[1] < w[0] - slack(w[0]) } else { w[1] > w[0] + slack(w[0]) };
        if bad {
            return Err(Error::Numerical(format!("u lost monotonicity: {} then {}", w[0], w[1])));
        }
    }
    if theta > 0.0 && u.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Numerical("u reached 0 in finite time".into()));
    }
    Ok(())
}

/// u_t(θ) at a single time.
pub fn u_at(mech: &BranchingMechanism, theta: f64, t: f64) -> Result<f64> {
    Ok(solve_u(mech, theta, &[t])?.u[0])
}

/// ∂u_t(θ)/∂θ = exp(−∫_0^t ψ′(u_r(θ)) dr).
pub fn du_dtheta(mech: &BranchingMechanism, theta: f64, t: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return domain("du/dθ requires θ > 0");
    }
    Ok(solve_u_with_derivative(mech, theta, &[t])?.du_dtheta.unwrap()[0])
}

fn require_grey(mech: &BranchingMechanism) -> Result<()> {
    if mech.greys_condition()? {
        Ok(())
    } else {
        domain("Grey's condition fails: u_t(∞) is infinite")
    }
}

/// Mechanism recentred at its largest root: ψ*(w) = ψ(λ* + w), with ψ*(0) = 0
/// exactly. Returns (λ*, ψ*).
fn recentred(mech: &BranchingMechanism) -> Result<(f64, BranchingMechanism)> {
    if mech.classify() == Criticality::Supercritical {
        let ls = mech.lambda_star()?;
        Ok((ls, mech.esscher(ls)?))
    } else {
        Ok((0.0, mech.clone()))
    }
}

/// ∫_w^∞ dζ/ψ(ζ) for a mechanism with ψ > 0 on (0, ∞).
fn time_to_infinity(star: &BranchingMechanism, w: f64) -> f64 {
    let m = w.max(1.0);
    let g = |s: f64| {
        let z = s.exp();
        z / star.psi_unchecked(z)
    };
    let mut total = 0.0;
    if w < m {
        total += quad::integrate(&g, w.ln(), m.ln(), 1e-14);
    }
    total + quad::integrate_log_tail(&|z: f64| 1.0 / star.psi_unchecked(z), m, 1e-14)
}

/// ∫_w^cap dζ/ψ(ζ).
fn time_to_cap(star: &BranchingMechanism, w: f64, cap: f64) -> f64 {
    let g = |s: f64| {
        let z = s.exp();
        z / star.psi_unchecked(z)
    };
    quad::integrate(&g, w.ln(), cap.ln(), 1e-14)
}

/// Root w of G(w) = t for a decreasing G, solved in y = ln w by Newton with
/// a bisection safeguard. `dg` is dG/dw.
fn decreasing_root(g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64, t: f64) -> Result<f64> {
    let f = |y: f64| g(y.exp()) - t;
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let f0 = f(0.0);
    if f0 > 0.0 {
        hi = 2.0;
        while f(hi) > 0.0 {
            lo = hi;
            hi += 2.0;
            if hi > 700.0 {
                return Err(Error::Numerical("extinction root not bracketed above".into()));
            }
        }
    } else {
        lo = -2.0;
        while f(lo) < 0.0 {
            hi = lo;
            lo -= 2.0;
            if lo < -700.0 {
                return Err(Error::Numerical("extinction root not bracketed below".into()));
            }
        }
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fy = f(y);
        if fy > 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let w = y.exp();
        let d = dg(w) * w;
        let mut next = if d < 0.0 { y - fy / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() < 1e-14 * (1.0 + y.abs()) || hi - lo < 1e-15 * (1.0 + y.abs()) {
            return Ok(next.exp());
        }
        y = next;
    }
    Err(Error::Numerical("extinction root did not converge".into()))
}

/// Outcome of the u_t(∞) computation with its cross-check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtinctionExponent {
    pub value: f64,
    pub ode_value: f64,
    pub cap: f64,
    pub cap_converged: bool,
}

/// u_t(∞), the exponent of P_x(X_t = 0) = e^{−x u_t(∞)}.
pub fn u_infinity(mech: &BranchingMechanism, t: f64) -> Result<f64> {
    Ok(u_infinity_checked(mech, t)?.value)
}

pub fn u_infinity_checked(mech: &BranchingMechanism, t: f64) -> Result<ExtinctionExponent> {
    if !(t > 0.0 && t.is_finite()) {
        return domain(format!("u_t(∞) needs t > 0, got {t}"));
    }
    require_grey(mech)?;
    let (ls, star) = recentred(mech)?;
    let w = decreasing_root(|w| time_to_infinity(&star, w), |w| -1.0 / star.psi_unchecked(w), t)?;

    // Backward ODE from a growing cap.
    let ode_from = |cap: f64| -> Result<f64> {
        let sol = solver().solve(|_, y: &[f64; 1]| [-star.psi_unchecked(y[0])], 0.0, [cap - ls], &[t])?;
        Ok(sol.states[0][0])
    };
    let mut cap = CAP_START.max(10.0 * (ls + w));
    let mut prev = ode_from(cap)?;
    let mut converged = false;
    while cap < CAP_LIMIT {
        cap *= 2.0;
        let next = ode_from(cap)?;
        let moved = (next - prev).abs() / (ls + next);
        prev = next;
        if moved < CAP_CONVERGED {
            converged = true;
            break;
        }
    }
    // Without a converged cap, compare like with like: the root truncated at the cap.
    let reference = if converged {
        w
    } else {
        decreasing_root(|w| time_to_cap(&star, w, cap - ls), |w| -1.0 / star.psi_unchecked(w), t)?
    };
    let gap = (reference - prev).abs() / (ls + reference);
    if gap > CROSS_CHECK_RTOL {
        return Err(Error::Numerical(format!(
            "u_{t}(∞): quadrature root {} and capped ODE {} disagree (relative {gap:.2e})",
            ls + reference,
            ls + prev
        )));
    }
    Ok(ExtinctionExponent { value: ls + w, ode_value: ls + prev, cap, cap_converged: converged })
}

/// u_r(∞) for r = T − s over an increasing grid of s, all with T − s > 0.
/// One quadrature root at the smallest s, then the flow dw/ds = ψ*(w)
/// forward in s; the last value is cross-checked against its own root.
pub fn extinction_curve(mech: &BranchingMechanism, horizon: f64, s_grid: &[f64]) -> Result<Vec<f64>> {
    check_grid(s_grid)?;
    let last = *s_grid.last().unwrap();
    if !(last < horizon) {
        return domain("extinction curve needs s < T on the whole grid");
    }
    let (ls, star) = recentred(mech)?;
    let s0 = s_grid[0];
    let w0 = u_infinity(mech, horizon - s0)? - ls;
    let rel: Vec<f64> = s_grid.iter().map(|s| s - s0).collect();
    let sol = solver().solve(|_, y: &[f64; 1]| [star.psi_unchecked(y[0])], 0.0, [w0], &rel)?;
    let out: Vec<f64> = sol.states.iter().map(|s| ls + s[0]).collect();
    let check = u_infinity(mech, horizon - last)?;
    let end = *out.last().unwrap();
    if (end - check).abs() > CROSS_CHECK_RTOL * check {
        return Err(Error::Numerical(format!("extinction curve drifted: {end} vs {check} at T − s = {}", horizon - last)));
    }
    Ok(out)
}

/// V^T_t(θ) = u_t(θ + u_{T−t}(∞)) − u_T(∞).
pub fn v_exponent(mech: &BranchingMechanism, horizon: f64, t: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(t >= 0.0 && t < horizon) {
        return domain(format!("need 0 ≤ t < T, got t = {t}, T = {horizon}"));
    }
    if theta == 0.0 {
        // u_t(u_{T−t}(∞)) = u_T(∞) by the semigroup property
        require_grey(mech)?;
        return Ok(0.0);
    }
    let u_total = u_infinity(mech, horizon)?;
    let u_rest = u_infinity(mech, horizon - t)?;
    Ok(u_at(mech, theta + u_rest, t)? - u_total)
}

pub fn log_laplace_csbp(mech: &BranchingMechanism, x: f64, t: f64, theta: f64) -> Result<f64> {
    check_theta(x)?;
    Ok(-x * u_at(mech, theta, t)?)
}

/// E_x[e^{−θX_t}] = e^{−x u_t(θ)}.
pub fn laplace_csbp(mech: &BranchingMechanism, x: f64, t: f64, theta: f64) -> Result<f64> {
    Ok(log_laplace_csbp(mech, x, t, theta)?.exp())
}

pub fn log_laplace_immigration(mech: &BranchingMechanism, x: f64, n: u32, t: f64, theta: f64) -> Result<f64> {
    check_theta(x)?;
    check_theta(theta)?;
    check_grid(&[t])?;
    if theta == 0.0 {
        return Ok(0.0);
    }
    if n == 0 {
        return log_laplace_csbp(mech, x, t, theta);
    }
    let sol = solver().solve(
        |_, y: &[f64; 2]| [-mech.psi_unchecked(y[0]), mech.phi_unchecked(0.0, y[0])],
        0.0,
        [theta, 0.0],
        &[t],
    )?;
    let [u, integral] = sol.states[0];
    Ok(-x * u - n as f64 * integral)
}

/// e^{−x u_t(θ) − n ∫_0^t φ_0(u_v(θ)) dv}: n independent immigrating spines.
pub fn laplace_immigration(mech: &BranchingMechanism, x: f64, n: u32, t: f64, theta: f64) -> Result<f64> {
    Ok(log_laplace_immigration(mech, x, n, t, theta)?.exp())
}

/// E_x[e^{−θX_t} | X_T = 0] = e^{−x V^T_t(θ)}.
pub fn laplace_die_by_t(mech: &BranchingMechanism, horizon: f64, x: f64, t: f64, theta: f64) -> Result<f64> {
    check_theta(x)?;
    Ok((-x * v_exponent(mech, horizon, t, theta)?).exp())
}

/// ψ(u)/u without the cancellation of the linear terms.
fn psi_over_u(mech: &BranchingMechanism, u: f64) -> f64 {
    -mech.alpha + mech.beta * u + mech.levy.lt(u) / u
}

/// Survival function at t of the first branching time of a single
/// T-skeleton individual started at time 0.
pub fn gamma_t_survival(mech: &BranchingMechanism, horizon: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t < horizon) {
        return domain(format!("need 0 ≤ t < T, got t = {t}, T = {horizon}"));
    }
    if t == 0.0 {
        require_grey(mech)?;
        return Ok(1.0);
    }
    let a = u_infinity(mech, horizon)?;
    let b = u_infinity(mech, horizon - t)?;
    Ok(psi_over_u(mech, a) / psi_over_u(mech, b))
}

/// Parameters of the T-skeleton at one time s.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleEntry {
    pub s: f64,
    /// u_{T−s}(∞)
    pub u: f64,
    /// q^{T−s}
    pub rate: f64,
    /// p_k^{T−s}, indexed by k
    pub offspring: Vec<f64>,
    pub tail: f64,
    /// weight of the zero atom of η_2^{T−s}
    pub atom2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeSkeletonSchedule {
    pub horizon: f64,
    pub delta_min: f64,
    pub entries: Vec<ScheduleEntry>,
    /// First requested grid time dropped for lying within δ_min of T.
    pub truncated_at: Option<f64>,
}

/// Relative size of the excluded neighbourhood of the horizon.
pub const DELTA_MIN_REL: f64 = 1e-4;
const SCHEDULE_K_CAP: usize = 512;

/// Grid on [0, T − δ_min] with spacing proportional to T − s.
pub fn geometric_grid(horizon: f64, ratio: f64) -> Vec<f64> {
    let delta = DELTA_MIN_REL * horizon;
    let mut grid = vec![0.0];
    let mut gap = horizon;
    loop {
        gap *= ratio;
        if gap < delta {
            break;
        }
        grid.push(horizon - gap);
    }
    grid
}

/// Branching weight of the T-skeleton at tilt u: D(u) = uψ′(u) − ψ(u),
/// evaluated as βu² + Σ_{k≥2} ∫(ur)^k/k! e^{−ur}Π(dr).
pub fn t_skeleton_weight(mech: &BranchingMechanism, u: f64) -> f64 {
    mech.beta * u * u + mech.levy.branch_pair_mass(u)
}

pub fn schedule_entry(mech: &BranchingMechanism, s: f64, u: f64) -> Result<ScheduleEntry> {
    let d = t_skeleton_weight(mech, u);
    let gauss = mech.beta * u * u;
    let mut k_max = 16;
    loop {
        let mut probs = vec![0.0; k_max + 1];
        let mut covered = 0.0;
        for (k, p) in probs.iter_mut().enumerate().skip(2) {
            let w = mech.levy.poisson_weight(u, k as u32);
            covered += w;
            *p = (w + if k == 2 { gauss } else { 0.0 }) / d;
        }
        let tail = ((mech.levy.branch_pair_mass(u) - covered) / d).max(0.0);
        if tail < 1e-10 || k_max >= SCHEDULE_K_CAP {
            let sum: f64 = probs.iter().sum();
            if (sum + tail - 1.0).abs() > 1e-10 {
                return Err(Error::Numerical(format!("schedule offspring law sums to {}", sum + tail)));
            }
            let atom2 = if gauss > 0.0 { gauss / (gauss + mech.levy.poisson_weight(u, 2)) } else { 0.0 };
            return Ok(ScheduleEntry { s, u, rate: d / u, offspring: probs, tail, atom2 });
        }
        k_max *= 2;
    }
}

/// T-skeleton parameters on `grid`; points within δ_min of T are dropped and
/// the truncation recorded.
pub fn time_schedule(mech: &BranchingMechanism, horizon: f64, grid: &[f64]) -> Result<TimeSkeletonSchedule> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return domain("horizon must be > 0");
    }
    require_grey(mech)?;
    check_grid(grid)?;
    let delta_min = DELTA_MIN_REL * horizon;
    let keep: Vec<f64> = grid.iter().copied().filter(|&s| horizon - s >= delta_min).collect();
    let truncated_at = grid.iter().copied().find(|&s| horizon - s < delta_min);
    if keep.is_empty() {
        return precondition("every grid point lies within δ_min of the horizon");
    }
    let us = extinction_curve(mech, horizon, &keep)?;
    let entries = keep.iter().zip(&us).map(|(&s, &u)| schedule_entry(mech, s, u)).collect::<Result<Vec<_>>>()?;
    for w in entries.windows(2) {
        if !(w[1].rate > w[0].rate) && w[1].s > w[0].s {
            return Err(Error::Numerical(format!("T-skeleton rate not increasing at s = {}", w[1].s)));
        }
    }
    Ok(TimeSkeletonSchedule { horizon, delta_min, entries, truncated_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyMeasure;

    fn feller(alpha: f64) -> BranchingMechanism {
        BranchingMechanism::feller(alpha, 1.0).unwrap()
    }

    /// Logistic closed form for ψ(θ) = −αθ + θ².
    fn logistic(alpha: f64, theta: f64, t: f64) -> f64 {
        let e = (alpha * t).exp();
        theta * e / (1.0 + theta * (e - 1.0) / alpha)
    }

    /// u_t(∞) for ψ(θ) = −αθ + θ².
    fn u_inf(alpha: f64, t: f64) -> f64 {
        alpha / (1.0 - (-alpha * t).exp())
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn solve_u_examples() {
        let tab = solve_u(&feller(1.0), 0.5, &[0.0, 1.0]).unwrap();
        assert_eq!(tab.u[0], 0.5);
        assert!((tab.u[1] - 0.731059).abs() < 1e-6);
        assert!(close(tab.u[1], logistic(1.0, 0.5, 1.0), 1e-9));
        assert!(solve_u(&feller(1.0), 0.0, &[1.0, 2.0]).unwrap().u.iter().all(|&u| u == 0.0));
        let tab = solve_u(&feller(1.0), 1.0, &[0.5, 3.0, 40.0]).unwrap();
        assert!(tab.u.iter().all(|&u| (u - 1.0).abs() < 1e-10));
    }

    #[test]
    fn u_infinity_examples() {
        assert!((u_infinity(&feller(1.0), 1.0).unwrap() - 1.581977).abs() < 1e-6);
        let e = 1f64.exp();
        assert!(close(u_infinity(&feller(1.0), 1.0).unwrap(), 1.0 / (1.0 - 1.0 / e), 1e-10));
        assert!(close(u_infinity(&feller(-1.0), 1.0).unwrap(), 1.0 / (e - 1.0), 1e-10));
        assert!((u_infinity(&feller(1.0), 40.0).unwrap() - 1.0).abs() < 1e-10);
        let at = BranchingMechanism::new(-1.0, 0.0, LevyMeasure::Atoms { atoms: vec![(1.0, 1.0)] }).unwrap();
        assert!(matches!(u_infinity(&at, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn u_infinity_stable() {
        // ψ(θ) = k θ^a: u_t(∞) = ((a−1) k t)^{−1/(a−1)}
        let m = BranchingMechanism::new(0.0, 0.0, LevyMeasure::StableTail { c: 1.0, a: 1.5 }).unwrap();
        let k = statrs::function::gamma::gamma(-1.5);
        let exact = (0.5 * k * 2.0f64).powf(-2.0);
        let got = u_infinity_checked(&m, 2.0).unwrap();
        assert!(close(got.value, exact, 1e-9), "{got:?} vs {exact}");
    }

    #[test]
    fn v_exponent_examples() {
        let sub = feller(-1.0);
        assert!(v_exponent(&sub, 2.0, 1.0, 0.0).unwrap().abs() < 1e-9);
        let v = v_exponent(&sub, 2.0, 1.0, 1.0).unwrap();
        let exact = logistic(-1.0, 1.0 + u_inf(-1.0, 1.0), 1.0) - u_inf(-1.0, 2.0);
        assert!((exact - 0.134471).abs() < 1e-6);
        assert!(close(v, exact, 1e-8), "{v} vs {exact}");
        let v = v_exponent(&sub, 40.0, 1.0, 1.0).unwrap();
        assert!((v - 0.225400).abs() < 1e-6, "{v}");
    }

    #[test]
    fn du_dtheta_examples() {
        assert_eq!(du_dtheta(&feller(-1.0), 1.0, 0.0).unwrap(), 1.0);
        let e1 = (-1f64).exp();
        let exact = e1 / (1.0 + (1.0 - e1)).powi(2);
        assert!((exact - 0.138102).abs() < 1e-6);
        assert!(close(du_dtheta(&feller(-1.0), 1.0, 1.0).unwrap(), exact, 1e-8));
        assert!(close(du_dtheta(&feller(1.0), 1.0, 1.0).unwrap(), (-1f64).exp(), 1e-9));
    }

    #[test]
    fn laplace_examples() {
        assert_eq!(laplace_csbp(&feller(1.0), 0.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((laplace_csbp(&feller(1.0), 1.0, 1.0, 1.0).unwrap() - 0.367879).abs() < 1e-6);
        let u = logistic(-1.0, 1.0, 1.0);
        assert!((u - 0.225400).abs() < 1e-6);
        assert!(close(laplace_csbp(&feller(-1.0), 2.0, 1.0, 1.0).unwrap(), (-2.0 * u).exp(), 1e-9));

        let sub = feller(-1.0);
        assert!(close(laplace_immigration(&sub, 1.3, 0, 1.0, 0.7).unwrap(), laplace_csbp(&sub, 1.3, 1.0, 0.7).unwrap(), 0.0));
        // ∫_0^t 2u_v dv = 2 ln(1 + θ(1 − e^{−t})) for ψ(θ) = θ + θ²
        let e1 = (-1f64).exp();
        let imm = (-u).exp() / (1.0 + (1.0 - e1)).powi(2);
        assert!((imm - 0.299644).abs() < 1e-6);
        assert!(close(laplace_immigration(&sub, 1.0, 1, 1.0, 1.0).unwrap(), imm, 1e-8));
        assert!((laplace_immigration(&sub, 0.0, 1, 1.0, 1e-12).unwrap() - 1.0).abs() < 1e-10);

        assert_eq!(laplace_die_by_t(&sub, 2.0, 1.0, 1.0, 0.0).unwrap(), 1.0);
        let v = logistic(-1.0, 1.0 + u_inf(-1.0, 1.0), 1.0) - u_inf(-1.0, 2.0);
        assert!(close(laplace_die_by_t(&sub, 2.0, 1.0, 1.0, 1.0).unwrap(), (-v).exp(), 1e-8));
        let far = laplace_die_by_t(&sub, 40.0, 1.0, 1.0, 1.0).unwrap();
        assert!(close(far, laplace_csbp(&sub, 1.0, 1.0, 1.0).unwrap(), 1e-8));
    }

    #[test]
    fn gamma_survival_examples() {
        let sub = feller(-1.0);
        assert_eq!(gamma_t_survival(&sub, 2.0, 0.0).unwrap(), 1.0);
        // ψ(u)/u = 1 + u
        let exact = (1.0 + u_inf(-1.0, 2.0)) / (1.0 + u_inf(-1.0, 1.0));
        assert!((exact - 0.731058).abs() < 1e-6);
        assert!(close(gamma_t_survival(&sub, 2.0, 1.0).unwrap(), exact, 1e-9));
        assert!((gamma_t_survival(&sub, 40.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_examples() {
        for (alpha, q) in [(-1.0, 0.581977), (1.0, 1.581977)] {
            let m = feller(alpha);
            let sch = time_schedule(&m, 2.0, &[0.0, 1.0, 1.5]).unwrap();
            let e = &sch.entries[1];
            assert!((e.rate - q).abs() < 1e-6);
            assert!((e.offspring[2] - 1.0).abs() < 1e-15);
            assert!(e.offspring.iter().enumerate().all(|(k, &p)| k == 2 || p == 0.0));
            assert!(sch.truncated_at.is_none());
        }
        let sch = time_schedule(&feller(-1.0), 1.0, &[0.0, 0.5, 0.99995]).unwrap();
        assert_eq!(sch.entries.len(), 2);
        assert_eq!(sch.truncated_at, Some(0.99995));
    }

    #[test]
    fn rate_explodes_toward_horizon() {
        for alpha in [-1.0, 1.0] {
            let m = feller(alpha);
            let sch = time_schedule(&m, 2.0, &[1.0, 2.0 - 1e-3]).unwrap();
            assert!(sch.entries[1].rate > 10.0 * sch.entries[0].rate);
        }
    }

    #[test]
    fn extinction_curve_matches_pointwise_roots() {
        let m = BranchingMechanism::new(1.0, 0.5, LevyMeasure::Exponential { c: 1.0, b: 1.0 }).unwrap();
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let curve = extinction_curve(&m, 2.0, &grid).unwrap();
        for (s, u) in grid.iter().zip(&curve) {
            let direct = u_infinity(&m, 2.0 - s).unwrap();
            assert!(close(*u, direct, 1e-8), "s={s}: {u} vs {direct}");
        }
    }

    #[test]
    fn csv_export() {
        let tab = solve_u_with_derivative(&feller(-1.0), 1.0, &[0.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        tab.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,u,du_dtheta\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
