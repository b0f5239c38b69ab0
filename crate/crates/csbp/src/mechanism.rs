//! Branching mechanisms ψ(θ) = −αθ + βθ² + ∫(e^{−θr} − 1 + θr)Π(dr) and the
//! skeleton laws derived from them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, precondition, Error, Result};
use crate::levy::{em1x, LevyMeasure};
use crate::quad;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingMechanism {
    pub alpha: f64,
    pub beta: f64,
    pub levy: LevyMeasure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criticality {
    Supercritical,
    Critical,
    Subcritical,
}

impl std::fmt::Display for Criticality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Criticality::Supercritical => "Supercritical",
            Criticality::Critical => "Critical",
            Criticality::Subcritical => "Subcritical",
        };
        f.write_str(s)
    }
}

/// Upper end of the range probed by the Grey test.
const GREY_THETA_MAX: f64 = 1e8;
const GREY_SLOPE_BAND: f64 = 0.05;

impl BranchingMechanism {
    pub fn new(alpha: f64, beta: f64, levy: LevyMeasure) -> Result<Self> {
        if !alpha.is_finite() {
            return domain(format!("alpha must be finite, got {alpha}"));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return domain(format!("beta must be ≥ 0, got {beta}"));
        }
        levy.validate()?;
        if beta == 0.0 && levy.is_none() {
            return domain("beta = 0 with no Lévy measure gives monotone paths");
        }
        let mech = BranchingMechanism { alpha, beta, levy };
        if !mech.levy.finite_activity() {
            mech.cross_check_stable()?;
        }
        Ok(mech)
    }

    pub fn feller(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, LevyMeasure::None)
    }

    /// The analytic continuation formula is checked once against quadrature.
    fn cross_check_stable(&self) -> Result<()> {
        for &th in &[0.5, 3.0] {
            let closed = self.levy.lt(th);
            // Beyond R the exponential is below e^{−50}; (θr − 1) is integrated exactly.
            let (c, a, tilt) = self.levy.stable().unwrap();
            let big = 50.0 / th;
            let mut q = self.levy.integrate_numeric_upto(|r| em1x(th * r), big, 1e-13 * closed.abs().max(1e-300));
            if tilt == 0.0 {
                q += c * (th * big.powf(1.0 - a) / (a - 1.0) - big.powf(-a) / a);
            } else {
                let upper = |s: f64| crate::special::upper_gamma(s, tilt * big) * tilt.powf(-s);
                q += c * (th * upper(1.0 - a) - upper(-a));
            }
            if (closed - q).abs() > 1e-8 * closed.abs() {
                return Err(Error::Numerical(format!(
                    "stable closed form {closed} disagrees with quadrature {q} at θ = {th}"
                )));
            }
        }
        Ok(())
    }

    pub fn psi(&self, theta: f64) -> Result<f64> {
        check_nonneg(theta, "theta")?;
        Ok(self.psi_unchecked(theta))
    }

    pub fn psi_unchecked(&self, theta: f64) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        -self.alpha * theta + self.beta * theta * theta + self.levy.lt(theta)
    }

    pub fn psi_prime(&self, theta: f64) -> Result<f64> {
        check_nonneg(theta, "theta")?;
        Ok(self.psi_prime_unchecked(theta))
    }

    pub fn psi_prime_unchecked(&self, theta: f64) -> f64 {
        -self.alpha + 2.0 * self.beta * theta + self.levy.lt_prime(theta)
    }

    pub fn classify(&self) -> Criticality {
        if self.alpha > 0.0 {
            Criticality::Supercritical
        } else if self.alpha == 0.0 {
            Criticality::Critical
        } else {
            Criticality::Subcritical
        }
    }

    /// Largest root of ψ; only defined for supercritical mechanisms.
    pub fn lambda_star(&self) -> Result<f64> {
        if self.classify() != Criticality::Supercritical {
            return precondition("λ* is only defined for supercritical mechanisms");
        }
        let mut hi = 1.0;
        while self.psi_unchecked(hi) <= 0.0 {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Numerical("ψ never becomes positive".into()));
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-13 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.psi_unchecked(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut root = 0.5 * (lo + hi);
        for _ in 0..2 {
            let d = self.psi_prime_unchecked(root);
            if d > 0.0 {
                root -= self.psi_unchecked(root) / d;
            }
        }
        let resid = self.psi_unchecked(root).abs();
        if resid >= 1e-12 * self.psi_prime_unchecked(root).max(1.0) {
            return Err(Error::Numerical(format!("λ* residual {resid:.3e}")));
        }
        Ok(root)
    }

    /// λ* for supercritical mechanisms, 0 otherwise.
    pub fn lambda_star_or_zero(&self) -> Result<f64> {
        match self.classify() {
            Criticality::Supercritical => self.lambda_star(),
            _ => Ok(0.0),
        }
    }

    /// ψ_λ(θ) = ψ(θ + λ) − ψ(λ).
    pub fn esscher(&self, lambda: f64) -> Result<BranchingMechanism> {
        check_nonneg(lambda, "lambda")?;
        if self.classify() == Criticality::Supercritical {
            let ls = self.lambda_star()?;
            if lambda < ls * (1.0 - 1e-12) {
                return domain(format!("Esscher tilt {lambda} is below λ* = {ls}"));
            }
        }
        Ok(BranchingMechanism {
            alpha: -self.psi_prime_unchecked(lambda),
            beta: self.beta,
            levy: self.levy.tilted(lambda),
        })
    }

    /// Whether ∫^∞ dξ/ψ(ξ) < ∞.
    pub fn greys_condition(&self) -> Result<bool> {
        Ok(self.grey_report()?.finite)
    }

    pub fn grey_report(&self) -> Result<GreyReport> {
        if self.beta > 0.0 {
            return Ok(GreyReport { finite: true, slope: 2.0, tail_integral: None });
        }
        if self.levy.finite_activity() {
            // ψ(θ) ≤ (|α| + ∫rΠ)θ: at most linear growth, the integral diverges.
            return Ok(GreyReport { finite: false, slope: 1.0, tail_integral: None });
        }
        let hi = GREY_THETA_MAX;
        let lo = hi / 10.0;
        let slope = (self.psi_unchecked(hi) / self.psi_unchecked(lo)).ln() / 10f64.ln();
        if (slope - 1.0).abs() < GREY_SLOPE_BAND {
            return Err(Error::Indeterminate { slope });
        }
        let start = (2.0 * self.lambda_star_or_zero()?).max(1.0);
        let g = |s: f64| {
            let x = start * s.exp();
            x / self.psi_unchecked(x)
        };
        let partial = quad::integrate(&g, 0.0, (hi / start).ln(), 1e-10);
        Ok(GreyReport { finite: slope > 1.0, slope, tail_integral: Some(partial) })
    }

    /// φ_λ(z) = 2βz + ∫(1 − e^{−zr}) r e^{−λr} Π(dr).
    pub fn phi(&self, lambda: f64, z: f64) -> Result<f64> {
        check_nonneg(lambda, "lambda")?;
        check_nonneg(z, "z")?;
        Ok(self.phi_unchecked(lambda, z))
    }

    pub fn phi_unchecked(&self, lambda: f64, z: f64) -> f64 {
        2.0 * self.beta * z + self.levy.tilted(lambda).lt_prime(z)
    }

    /// Tilt must be admissible for a skeleton: λ ≥ λ* (supercritical) or λ > 0.
    fn check_skeleton_tilt(&self, lambda: f64) -> Result<()> {
        check_nonneg(lambda, "lambda")?;
        if self.classify() == Criticality::Supercritical {
            let ls = self.lambda_star()?;
            if lambda < ls * (1.0 - 1e-12) {
                return domain(format!("skeleton tilt {lambda} is below λ* = {ls}"));
            }
        } else if lambda <= 0.0 {
            return domain("skeleton tilt must be > 0");
        }
        Ok(())
    }

    /// Offspring law of the homogeneous skeleton with tilt λ.
    pub fn skeleton_params(&self, lambda: f64, k_max: usize) -> Result<OffspringLaw> {
        self.check_skeleton_tilt(lambda)?;
        let rate = self.psi_prime_unchecked(lambda);
        if rate <= 0.0 {
            return domain(format!("ψ′(λ) = {rate} ≤ 0"));
        }
        let norm = lambda * rate;
        let psi_l = self.psi_unchecked(lambda);
        let ls = self.lambda_star_or_zero()?;
        let p0 = if self.classify() == Criticality::Supercritical && lambda == ls {
            0.0
        } else {
            psi_l / norm
        };
        offspring_from_weights(rate, lambda, p0, self.beta * lambda * lambda, &self.levy, norm, k_max)
    }

    /// Law of the mass grafted onto a skeleton edge (kind EdgeJump) or at a
    /// branch point with k offspring (kind BranchPoint(k)).
    pub fn immigration_law(&self, lambda: f64, kind: ImmigrationKind, eps: f64) -> Result<ImmigrationLaw> {
        check_nonneg(lambda, "lambda")?;
        let levy = self.levy.tilted(lambda);
        match kind {
            ImmigrationKind::EdgeJump => {
                if levy.is_none() {
                    return Err(Error::InvalidLaw("edge immigration with Π = 0 has rate 0".into()));
                }
                if !levy.finite_activity() && eps <= 0.0 {
                    return Err(Error::InvalidLaw("edge immigration for stable Π needs eps > 0".into()));
                }
                let rate = levy.moment_above(1, eps);
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(Error::InvalidLaw(format!("edge immigration rate {rate}")));
                }
                Ok(ImmigrationLaw { kind, lambda, atom_at_zero: 0.0, levy, eps, rate })
            }
            ImmigrationKind::BranchPoint(k) => {
                if k == 1 {
                    return Err(Error::InvalidLaw("η_1 carries no mass".into()));
                }
                let atom = match k {
                    0 => 1.0,
                    2 => {
                        let gauss = self.beta * lambda * lambda;
                        let w = self.levy.poisson_weight(lambda, 2);
                        gauss / (gauss + w)
                    }
                    _ => 0.0,
                };
                Ok(ImmigrationLaw { kind, lambda, atom_at_zero: atom, levy: self.levy.clone(), eps: 0.0, rate: 0.0 })
            }
        }
    }
}

fn check_nonneg(v: f64, name: &str) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        domain(format!("{name} must be finite and ≥ 0, got {v}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreyReport {
    pub finite: bool,
    /// log-log slope of ψ over the last probed decade
    pub slope: f64,
    /// ∫ dξ/ψ(ξ) over the probed range, when computed
    pub tail_integral: Option<f64>,
}

/// Offspring distribution of a skeleton: rate q, p_k for k ≤ K_max and the
/// unresolved tail.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OffspringLaw {
    pub rate: f64,
    pub lambda: f64,
    /// probs[k] = p_k for 0 ≤ k ≤ K_max
    pub probs: Vec<f64>,
    pub tail: f64,
}

impl OffspringLaw {
    pub fn k_max(&self) -> usize {
        self.probs.len() - 1
    }

    /// Probability generating function Σ_{k ≤ K_max} p_k s^k.
    pub fn pgf(&self, s: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        crate::levy::categorical(&self.probs, rng)
    }
}

/// Build p_0, p_2..p_K from weights w_k / norm, with the tail computed
/// independently from the closed-form total of the Poisson weights.
pub(crate) fn offspring_from_weights(
    rate: f64,
    lambda: f64,
    p0: f64,
    gauss2: f64,
    levy: &LevyMeasure,
    norm: f64,
    k_max: usize,
) -> Result<OffspringLaw> {
    let k_max = k_max.max(2);
    let mut probs = vec![0.0; k_max + 1];
    probs[0] = p0;
    let mut covered = 0.0;
    for (k, p) in probs.iter_mut().enumerate().skip(2) {
        let w = levy.poisson_weight(lambda, k as u32);
        covered += w;
        *p = (w + if k == 2 { gauss2 } else { 0.0 }) / norm;
    }
    let tail = ((levy.branch_pair_mass(lambda) - covered) / norm).max(0.0);
    let sum: f64 = probs.iter().sum();
    if (sum + tail - 1.0).abs() > 1e-12 {
        return Err(Error::Numerical(format!(
            "offspring law does not normalise: Σp = {sum}, tail = {tail:.3e}"
        )));
    }
    if tail >= 1e-10 {
        return Err(Error::TruncatedOffspring { k_max, tail });
    }
    Ok(OffspringLaw { rate, lambda, probs, tail })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImmigrationKind {
    EdgeJump,
    BranchPoint(u32),
}

/// Immigration law attached to the skeleton with tilt λ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImmigrationLaw {
    pub kind: ImmigrationKind,
    pub lambda: f64,
    /// Probability of a zero draw (the Gaussian part of η_2, or η_0 = δ_0).
    pub atom_at_zero: f64,
    /// Π for BranchPoint, e^{−λr}Π for EdgeJump
    levy: LevyMeasure,
    eps: f64,
    /// EdgeJump rate m1(λ) = ∫_{[eps,∞)} r e^{−λr} Π(dr)
    pub rate: f64,
}

impl ImmigrationLaw {
    /// E[R^j] under the law.
    pub fn moment(&self, j: u32) -> f64 {
        match self.kind {
            ImmigrationKind::EdgeJump => self.levy.moment_above(j + 1, self.eps) / self.rate,
            ImmigrationKind::BranchPoint(0) => {
                if j == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            ImmigrationKind::BranchPoint(k) => {
                if j == 0 {
                    return 1.0;
                }
                let cont = self.levy.poisson_moment(self.lambda, k, j) / self.levy.poisson_weight(self.lambda, k);
                (1.0 - self.atom_at_zero) * cont
            }
        }
    }

    /// Total mass of the law (1 when well formed).
    pub fn total_mass(&self) -> f64 {
        match self.kind {
            ImmigrationKind::EdgeJump => 1.0,
            ImmigrationKind::BranchPoint(_) => self.atom_at_zero + (1.0 - self.atom_at_zero),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            ImmigrationKind::EdgeJump => self.levy.sample_biased_above(self.eps, rng),
            ImmigrationKind::BranchPoint(k) => {
                if self.atom_at_zero >= 1.0 || (self.atom_at_zero > 0.0 && rng.gen::<f64>() < self.atom_at_zero) {
                    0.0
                } else {
                    self.levy.sample_poisson_size(self.lambda, k, rng)
                }
            }
        }
    }
}

/// Sample from an immigration law.
pub fn sample_immigration<R: Rng + ?Sized>(law: &ImmigrationLaw, rng: &mut R) -> f64 {
    law.sample(rng)
}
