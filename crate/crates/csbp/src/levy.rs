//! Parametric Lévy measures Π on (0, ∞) and everything the mechanism and the
//! samplers need from them.
//!
//! All integrals have closed forms. `integrate_numeric` provides an
//! independent quadrature route used by the cross-checks.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{domain, Result};
use crate::quad;
use crate::special::{lower_gamma, poisson_tail2, upper_gamma};

/// A Lévy measure Π on (0, ∞) with ∫(r ∧ r²)Π(dr) < ∞.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevyMeasure {
    None,
    /// Π(dr) = c e^{−br} dr
    Exponential { c: f64, b: f64 },
    /// Π(dr) = c r^{−1−a} dr, a ∈ (1, 2)
    StableTail { c: f64, a: f64 },
    /// Σ m_i δ_{r_i}
    Atoms { atoms: Vec<(f64, f64)> },
    /// StableTail(c, a) multiplied by e^{−tilt·r}
    Tilted { c: f64, a: f64, tilt: f64 },
}

/// e^{−x} − 1 + x without cancellation for small x.
pub fn em1x(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let mut term = x * x / 2.0;
        let mut sum = term;
        for k in 3..12 {
            term *= -x / k as f64;
            sum += term;
        }
        sum
    } else {
        (-x).exp_m1() + x
    }
}

impl LevyMeasure {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                domain(format!("{name} must be finite and > 0, got {v}"))
            }
        };
        match self {
            LevyMeasure::None => Ok(()),
            LevyMeasure::Exponential { c, b } => {
                pos(*c, "c")?;
                pos(*b, "b")
            }
            LevyMeasure::StableTail { c, a } | LevyMeasure::Tilted { c, a, .. } => {
                pos(*c, "c")?;
                if !(*a > 1.0 && *a < 2.0) {
                    return domain(format!("stable index a must lie in (1, 2), got {a}"));
                }
                if let LevyMeasure::Tilted { tilt, .. } = self {
                    if !(tilt.is_finite() && *tilt >= 0.0) {
                        return domain(format!("tilt must be ≥ 0, got {tilt}"));
                    }
                }
                Ok(())
            }
            LevyMeasure::Atoms { atoms } => {
                if atoms.is_empty() {
                    return domain("atom list is empty");
                }
                for &(r, m) in atoms {
                    pos(r, "atom location")?;
                    pos(m, "atom mass")?;
                }
                Ok(())
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, LevyMeasure::None)
    }

    /// Π((0, ∞)) < ∞.
    pub fn finite_activity(&self) -> bool {
        !matches!(self, LevyMeasure::StableTail { .. } | LevyMeasure::Tilted { .. })
    }

    /// (c, a, τ) for the stable families.
    pub(crate) fn stable(&self) -> Option<(f64, f64, f64)> {
        match *self {
            LevyMeasure::StableTail { c, a } => Some((c, a, 0.0)),
            LevyMeasure::Tilted { c, a, tilt } => Some((c, a, tilt)),
            _ => None,
        }
    }

    /// The measure e^{−λr}Π(dr).
    pub fn tilted(&self, lambda: f64) -> LevyMeasure {
        if lambda == 0.0 {
            return self.clone();
        }
        match self {
            LevyMeasure::None => LevyMeasure::None,
            LevyMeasure::Exponential { c, b } => LevyMeasure::Exponential { c: *c, b: b + lambda },
            LevyMeasure::Atoms { atoms } => LevyMeasure::Atoms {
                atoms: atoms.iter().map(|&(r, m)| (r, m * (-lambda * r).exp())).collect(),
            },
            LevyMeasure::StableTail { c, a } => LevyMeasure::Tilted { c: *c, a: *a, tilt: lambda },
            LevyMeasure::Tilted { c, a, tilt } => LevyMeasure::Tilted { c: *c, a: *a, tilt: tilt + lambda },
        }
    }

    /// ∫(e^{−θr} − 1 + θr) Π(dr)
    pub fn lt(&self, theta: f64) -> f64 {
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::Exponential { c, b } => c * theta * theta / (b * b * (b + theta)),
            LevyMeasure::Atoms { atoms } => atoms.iter().map(|&(r, m)| m * em1x(theta * r)).sum(),
            _ => {
                let (c, a, t) = self.stable().unwrap();
                let k = c * gamma(-a);
                if t == 0.0 {
                    k * theta.powf(a)
                } else {
                    // τ^a[(1+x)^a − 1 − a x] with x = θ/τ, expanded when x is small
                    let x = theta / t;
                    let bracket = if x < 1e-4 {
                        a * (a - 1.0) / 2.0 * x * x * (1.0 + (a - 2.0) / 3.0 * x)
                    } else {
                        (1.0 + x).powf(a) - 1.0 - a * x
                    };
                    k * t.powf(a) * bracket
                }
            }
        }
    }

    /// ∫(1 − e^{−θr}) r Π(dr)
    pub fn lt_prime(&self, theta: f64) -> f64 {
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::Exponential { c, b } => c * (1.0 / (b * b) - 1.0 / ((b + theta) * (b + theta))),
            LevyMeasure::Atoms { atoms } => atoms.iter().map(|&(r, m)| -m * r * (-theta * r).exp_m1()).sum(),
            _ => {
                let (c, a, t) = self.stable().unwrap();
                let k = a * c * gamma(-a);
                if t == 0.0 {
                    k * theta.powf(a - 1.0)
                } else {
                    k * t.powf(a - 1.0) * ((1.0 + theta / t).powf(a - 1.0) - 1.0)
                }
            }
        }
    }

    /// ∫ r^j (λr)^k/k! e^{−λr} Π(dr); +∞ where the integral diverges.
    pub fn poisson_moment(&self, lambda: f64, k: u32, j: u32) -> f64 {
        let n = (k + j) as f64;
        let lnkf = ln_gamma(k as f64 + 1.0);
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::Exponential { c, b } => {
                let rate = b + lambda;
                let lam_k = if k == 0 { 0.0 } else { k as f64 * lambda.ln() };
                c * (lam_k + ln_gamma(n + 1.0) - lnkf - (n + 1.0) * rate.ln()).exp()
            }
            LevyMeasure::Atoms { atoms } => atoms
                .iter()
                .map(|&(r, m)| {
                    let lam_k = if k == 0 { 0.0 } else { k as f64 * (lambda * r).ln() };
                    m * (j as f64 * r.ln() + lam_k - lnkf - lambda * r).exp()
                })
                .sum(),
            _ => {
                let (c, a, t) = self.stable().unwrap();
                if n - a <= 0.0 {
                    return f64::INFINITY;
                }
                let rate = lambda + t;
                if rate == 0.0 {
                    return f64::INFINITY;
                }
                let lam_k = if k == 0 { 0.0 } else { k as f64 * lambda.ln() };
                c * (lam_k + ln_gamma(n - a) - lnkf - (n - a) * rate.ln()).exp()
            }
        }
    }

    /// ∫ (λr)^k/k! e^{−λr} Π(dr)
    pub fn poisson_weight(&self, lambda: f64, k: u32) -> f64 {
        self.poisson_moment(lambda, k, 0)
    }

    /// Σ_{k≥2} poisson_weight(λ, k) = ∫(1 − e^{−λr}(1 + λr)) Π(dr).
    pub fn branch_pair_mass(&self, lambda: f64) -> f64 {
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::Exponential { c, b } => c * lambda * lambda / (b * (b + lambda) * (b + lambda)),
            LevyMeasure::Atoms { atoms } => atoms.iter().map(|&(r, m)| m * poisson_tail2(lambda * r)).sum(),
            _ => {
                let (c, a, t) = self.stable().unwrap();
                let s = t + lambda;
                c * gamma(-a) * (a * lambda * s.powf(a - 1.0) - s.powf(a) + t.powf(a))
            }
        }
    }

    /// ∫_{[eps,∞)} r^j Π(dr)
    pub fn moment_above(&self, j: u32, eps: f64) -> f64 {
        let jf = j as f64;
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::Exponential { c, b } => {
                if eps == 0.0 {
                    c * gamma(jf + 1.0) / b.powf(jf + 1.0)
                } else {
                    c * upper_gamma(jf + 1.0, b * eps) / b.powf(jf + 1.0)
                }
            }
            LevyMeasure::Atoms { atoms } => {
                atoms.iter().filter(|(r, _)| *r >= eps).map(|&(r, m)| m * r.powi(j as i32)).sum()
            }
            _ => {
                let (c, a, t) = self.stable().unwrap();
                if eps == 0.0 && jf - a <= 0.0 {
                    return f64::INFINITY;
                }
                if t == 0.0 {
                    if jf >= a {
                        return f64::INFINITY;
                    }
                    return c * eps.powf(jf - a) / (a - jf);
                }
                if eps == 0.0 {
                    return c * gamma(jf - a) * t.powf(a - jf);
                }
                c * t.powf(a - jf) * upper_gamma(jf - a, t * eps)
            }
        }
    }

    /// ∫_{(0,eps)} r^j Π(dr)
    pub fn moment_below(&self, j: u32, eps: f64) -> f64 {
        if eps == 0.0 {
            return 0.0;
        }
        let jf = j as f64;
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::Exponential { c, b } => c * lower_gamma(jf + 1.0, b * eps) / b.powf(jf + 1.0),
            LevyMeasure::Atoms { atoms } => {
                atoms.iter().filter(|(r, _)| *r < eps).map(|&(r, m)| m * r.powi(j as i32)).sum()
            }
            _ => {
                let (c, a, t) = self.stable().unwrap();
                if jf <= a {
                    return f64::INFINITY;
                }
                if t == 0.0 {
                    c * eps.powf(jf - a) / (jf - a)
                } else {
                    c * t.powf(a - jf) * lower_gamma(jf - a, t * eps)
                }
            }
        }
    }

    /// Lebesgue density of the continuous families.
    pub fn density(&self, r: f64) -> Option<f64> {
        match *self {
            LevyMeasure::Exponential { c, b } => Some(c * (-b * r).exp()),
            LevyMeasure::StableTail { c, a } => Some(c * r.powf(-1.0 - a)),
            LevyMeasure::Tilted { c, a, tilt } => Some(c * r.powf(-1.0 - a) * (-tilt * r).exp()),
            _ => None,
        }
    }

    /// ∫ f(r) Π(dr) by quadrature (atoms are summed exactly).
    pub fn integrate_numeric<F: Fn(f64) -> f64>(&self, f: F, tol: f64) -> f64 {
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::Atoms { atoms } => atoms.iter().map(|&(r, m)| m * f(r)).sum(),
            LevyMeasure::Exponential { c, b } => {
                let g = |r: f64| f(r) * c * (-b * r).exp();
                quad::integrate_to_infinity(&g, 0.0, tol)
            }
            _ => {
                let (c, a, t) = self.stable().unwrap();
                let g = |r: f64| f(r) * c * r.powf(-1.0 - a) * (-t * r).exp();
                self.integrate_near_zero(&f, 1.0, tol) + quad::integrate_log_tail(&g, 1.0, tol)
            }
        }
    }

    /// ∫_{(0,hi]} f dΠ by quadrature; continuous families only.
    pub fn integrate_numeric_upto<F: Fn(f64) -> f64>(&self, f: F, hi: f64, tol: f64) -> f64 {
        match self {
            LevyMeasure::None => 0.0,
            LevyMeasure::Atoms { atoms } => atoms.iter().filter(|a| a.0 <= hi).map(|&(r, m)| m * f(r)).sum(),
            LevyMeasure::Exponential { c, b } => quad::integrate(&|r: f64| f(r) * c * (-b * r).exp(), 0.0, hi, tol),
            _ => {
                let (c, a, t) = self.stable().unwrap();
                let m = hi.min(1.0);
                let g = |s: f64| {
                    let r = s.exp();
                    r * f(r) * c * r.powf(-1.0 - a) * (-t * r).exp()
                };
                let tail = if hi > 1.0 { quad::integrate(&g, 0.0, hi.ln(), tol) } else { 0.0 };
                self.integrate_near_zero(&f, m, tol) + tail
            }
        }
    }

    /// ∫_{(0,hi]} f dΠ for the stable families, in r = hi·s^m so that an
    /// integrand like r²Π(dr) has no endpoint singularity.
    fn integrate_near_zero<F: Fn(f64) -> f64>(&self, f: &F, hi: f64, tol: f64) -> f64 {
        let (c, a, t) = self.stable().unwrap();
        let m = (2.0 / (2.0 - a)).min(50.0);
        let g = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let r = hi * s.powf(m);
            let y = f(r) * c * r.powf(-1.0 - a) * (-t * r).exp() * m * r / s;
            if y.is_finite() {
                y
            } else {
                0.0
            }
        };
        quad::integrate(&g, 0.0, 1.0, tol)
    }

    /// Draw from Π restricted to [eps, ∞), normalised.
    pub fn sample_above<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R) -> f64 {
        match self {
            LevyMeasure::None => unreachable!("sampling from the zero measure"),
            LevyMeasure::Exponential { b, .. } => eps + exp1(rng) / b,
            LevyMeasure::Atoms { atoms } => pick_atom(atoms, eps, |_, m| m, rng),
            _ => {
                let (_, a, t) = self.stable().unwrap();
                pareto_tilted(a, eps, t, rng)
            }
        }
    }

    /// Draw from r Π(dr) restricted to [eps, ∞), normalised.
    pub fn sample_biased_above<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R) -> f64 {
        match self {
            LevyMeasure::None => unreachable!("sampling from the zero measure"),
            LevyMeasure::Exponential { b, .. } => {
                // (eps + y) e^{−by}: mixture of Exp(b) and Gamma(2, b), shifted by eps
                let p_exp = eps * b / (eps * b + 1.0);
                if rng.gen::<f64>() < p_exp {
                    eps + exp1(rng) / b
                } else {
                    eps + Gamma::new(2.0, 1.0 / b).unwrap().sample(rng)
                }
            }
            LevyMeasure::Atoms { atoms } => pick_atom(atoms, eps, |r, m| r * m, rng),
            _ => {
                let (_, a, t) = self.stable().unwrap();
                pareto_tilted(a - 1.0, eps, t, rng)
            }
        }
    }

    /// Draw r from the law ∝ r^k e^{−λr} Π(dr).
    pub fn sample_poisson_size<R: Rng + ?Sized>(&self, lambda: f64, k: u32, rng: &mut R) -> f64 {
        match self {
            LevyMeasure::None => unreachable!("sampling from the zero measure"),
            LevyMeasure::Exponential { b, .. } => {
                Gamma::new(k as f64 + 1.0, 1.0 / (b + lambda)).unwrap().sample(rng)
            }
            LevyMeasure::Atoms { atoms } => {
                let logw: Vec<f64> =
                    atoms.iter().map(|&(r, m)| m.ln() + k as f64 * r.ln() - lambda * r).collect();
                let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
                atoms[categorical(&w, rng)].0
            }
            _ => {
                let (_, a, t) = self.stable().unwrap();
                Gamma::new(k as f64 - a, 1.0 / (lambda + t)).unwrap().sample(rng)
            }
        }
    }

    /// Joint draw of (k, r) from (λr)^k/k! e^{−λr} Π(dr), k ≥ 2.
    pub fn sample_branch_pair<R: Rng + ?Sized>(&self, lambda: f64, rng: &mut R) -> (u32, f64) {
        match self {
            LevyMeasure::None => unreachable!("sampling from the zero measure"),
            LevyMeasure::Exponential { b, .. } => {
                // P(k) ∝ ρ^k with ρ = λ/(b+λ); r | k ~ Gamma(k+1, b+λ)
                let rho = lambda / (b + lambda);
                let u: f64 = 1.0 - rng.gen::<f64>();
                let k = 2 + (u.ln() / rho.ln()).floor() as u32;
                let r = Gamma::new(k as f64 + 1.0, 1.0 / (b + lambda)).unwrap().sample(rng);
                (k, r)
            }
            LevyMeasure::Atoms { atoms } => {
                let w: Vec<f64> = atoms.iter().map(|&(r, m)| m * poisson_tail2(lambda * r)).collect();
                let r = atoms[categorical(&w, rng)].0;
                (poisson_at_least_two(lambda * r, rng), r)
            }
            _ => {
                let (_, a, t) = self.stable().unwrap();
                // Envelope min((λr)²/2, 1)·r^{−1−a}, split at r0 = √2/λ.
                let r0 = std::f64::consts::SQRT_2 / lambda;
                let mass_lo = r0.powf(-a) / (2.0 - a);
                let mass_hi = r0.powf(-a) / a;
                loop {
                    let u: f64 = rng.gen();
                    let v: f64 = 1.0 - rng.gen::<f64>();
                    let (r, env) = if u * (mass_lo + mass_hi) < mass_lo {
                        let r = r0 * v.powf(1.0 / (2.0 - a));
                        (r, 0.5 * (lambda * r).powi(2))
                    } else {
                        (r0 * v.powf(-1.0 / a), 1.0)
                    };
                    let x = lambda * r;
                    let accept = poisson_tail2(x) / env * (-t * r).exp();
                    if rng.gen::<f64>() < accept {
                        return (poisson_at_least_two(x, rng), r);
                    }
                }
            }
        }
    }
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Pareto(shape, scale eps) thinned by e^{−τ(r−eps)}.
fn pareto_tilted<R: Rng + ?Sized>(shape: f64, eps: f64, tau: f64, rng: &mut R) -> f64 {
    debug_assert!(eps > 0.0);
    loop {
        let v: f64 = 1.0 - rng.gen::<f64>();
        let r = eps * v.powf(-1.0 / shape);
        if tau == 0.0 || rng.gen::<f64>() < (-tau * (r - eps)).exp() {
            return r;
        }
    }
}

fn pick_atom<R: Rng + ?Sized>(atoms: &[(f64, f64)], eps: f64, weight: impl Fn(f64, f64) -> f64, rng: &mut R) -> f64 {
    let w: Vec<f64> =
        atoms.iter().map(|&(r, m)| if r >= eps { weight(r, m) } else { 0.0 }).collect();
    atoms[categorical(&w, rng)].0
}

/// Index drawn with probability proportional to `w`.
pub fn categorical<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let total: f64 = w.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &wi) in w.iter().enumerate() {
        if u < wi {
            return i;
        }
        u -= wi;
    }
    w.iter().rposition(|&wi| wi > 0.0).unwrap_or(0)
}

/// Poisson(x) conditioned on ≥ 2.
pub fn poisson_at_least_two<R: Rng + ?Sized>(x: f64, rng: &mut R) -> u32 {
    if x > 2.0 {
        let pois = Poisson::new(x).unwrap();
        loop {
            let k: f64 = pois.sample(rng);
            if k >= 2.0 {
                return k as u32;
            }
        }
    }
    // inverse CDF on the conditional law
    let mut u = rng.gen::<f64>() * poisson_tail2(x);
    let mut k = 2u32;
    let mut p = (-x).exp() * x * x / 2.0;
    loop {
        if u < p || p == 0.0 {
            return k;
        }
        u -= p;
        k += 1;
        p *= x / k as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn families() -> Vec<LevyMeasure> {
        vec![
            LevyMeasure::Exponential { c: 1.3, b: 0.7 },
            LevyMeasure::StableTail { c: 0.8, a: 1.5 },
            LevyMeasure::Tilted { c: 0.8, a: 1.3, tilt: 2.0 },
            LevyMeasure::Atoms { atoms: vec![(0.5, 1.0), (2.0, 0.25)] },
        ]
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for pi in families() {
            for &th in &[0.1, 1.0, 4.0] {
                let q = pi.integrate_numeric(|r| em1x(th * r), 1e-14);
                let c = pi.lt(th);
                assert!((q - c).abs() < 1e-9 * c.abs(), "{pi:?} θ={th}: {q} vs {c}");
                let q = pi.integrate_numeric(|r| -(-th * r).exp_m1() * r, 1e-14);
                let c = pi.lt_prime(th);
                assert!((q - c).abs() < 1e-9 * c.abs(), "{pi:?} θ={th}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn poisson_weights_match_quadrature() {
        for pi in families() {
            let lam = 1.7;
            for k in 2..6u32 {
                let kf: f64 = (1..=k).map(|i| i as f64).product();
                let q = pi.integrate_numeric(|r| (lam * r).powi(k as i32) / kf * (-lam * r).exp(), 1e-15);
                let c = pi.poisson_weight(lam, k);
                assert!((q - c).abs() < 1e-9 * c, "{pi:?} k={k}: {q} vs {c}");
            }
            let total: f64 = (2..400).map(|k| pi.poisson_weight(lam, k)).sum();
            let closed = pi.branch_pair_mass(lam);
            // untilted stable weights decay like c λ^a k^{−1−a}
            let tail = match pi.stable() {
                Some((c, a, t)) if t == 0.0 => 1.1 * c * lam.powf(a) * 399f64.powf(-a) / a,
                _ => 0.0,
            };
            assert!(total <= closed * (1.0 + 1e-12), "{pi:?}: {total} vs {closed}");
            assert!(closed - total < 1e-6 * closed + tail, "{pi:?}: {total} vs {closed}");
        }
    }

    fn numeric_on<F: Fn(f64) -> f64>(pi: &LevyMeasure, f: F, lo: f64, hi: f64) -> f64 {
        match pi {
            LevyMeasure::Atoms { atoms } => {
                atoms.iter().filter(|(r, _)| *r >= lo && *r < hi).map(|&(r, m)| m * f(r)).sum()
            }
            _ => {
                let g = |r: f64| f(r) * pi.density(r).unwrap();
                if hi.is_finite() {
                    quad::integrate(&g, lo, hi, 1e-15)
                } else {
                    quad::integrate(&g, lo, 1.0, 1e-15) + quad::integrate_log_tail(&g, 1.0, 1e-15)
                }
            }
        }
    }

    #[test]
    fn truncation_moments() {
        for pi in families() {
            let eps = 0.05;
            for j in 0..2u32 {
                let above = pi.moment_above(j, eps);
                let q = numeric_on(&pi, |r| r.powi(j as i32), eps, f64::INFINITY);
                assert!((above - q).abs() < 1e-8 * q, "{pi:?} j={j}: {above} vs {q}");
            }
            let below = pi.moment_below(2, eps);
            let q = numeric_on(&pi, |r| r * r, 0.0, eps);
            assert!((below - q).abs() < 1e-8 * q.max(1e-300), "{pi:?}: {below} vs {q}");
        }
    }

    #[test]
    fn tilt_composes() {
        let pi = LevyMeasure::StableTail { c: 1.0, a: 1.4 };
        assert_eq!(pi.tilted(0.5).tilted(1.0), pi.tilted(1.5));
        let pi = LevyMeasure::Exponential { c: 1.0, b: 1.0 };
        assert_eq!(pi.tilted(1.0), LevyMeasure::Exponential { c: 1.0, b: 2.0 });
    }

    #[test]
    fn branch_pair_sampler_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for pi in families() {
            let lam = 1.2;
            let n = 200_000;
            let mut count = [0usize; 4];
            let mut mean_e = 0.0;
            let mut mean_e2 = 0.0;
            for _ in 0..n {
                let (k, r) = pi.sample_branch_pair(lam, &mut rng);
                assert!(k >= 2);
                if k < 6 {
                    count[(k - 2) as usize] += 1;
                }
                mean_e += (-r).exp() / n as f64;
                mean_e2 += (-2.0 * r).exp() / n as f64;
            }
            let total = pi.branch_pair_mass(lam);
            for k in 2..6u32 {
                let p = pi.poisson_weight(lam, k) / total;
                let phat = count[(k - 2) as usize] as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((phat - p).abs() < 5.0 * se + 1e-12, "{pi:?} k={k}: {phat} vs {p}");
            }
            // r may have infinite variance, so test the bounded E[e^{−r}]:
            // ∫(λr)^k/k! e^{−(λ+1)r}Π = (λ/(λ+1))^k w_k(λ+1)
            let ee: f64 = (2..400)
                .map(|k| (lam / (lam + 1.0)).powi(k as i32) * pi.poisson_weight(lam + 1.0, k))
                .sum::<f64>()
                / total;
            let se = ((mean_e2 - mean_e * mean_e) / n as f64).sqrt();
            assert!((mean_e - ee).abs() < 5.0 * se, "{pi:?}: {mean_e} vs {ee}");
        }
    }

    #[test]
    fn truncated_samplers_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for pi in families() {
            let eps = 0.02;
            let n = 100_000;
            let m: f64 = (0..n).map(|_| pi.sample_above(eps, &mut rng).min(1.0)).sum::<f64>() / n as f64;
            let z = pi.moment_above(0, eps);
            let q = (numeric_on(&pi, |r| r, eps, 1.0) + numeric_on(&pi, |_| 1.0, 1.0, f64::INFINITY)) / z;
            assert!((m - q).abs() < 0.01 * q, "{pi:?}: {m} vs {q}");
        }
    }
}
