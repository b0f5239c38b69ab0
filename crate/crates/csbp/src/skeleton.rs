//! Skeleton decompositions: the prolific λ-skeleton, the finite-horizon
//! T-skeleton and the skeleton-to-spine limit.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, precondition, Error, Result};
use crate::evolution;
use crate::mechanism::{BranchingMechanism, Criticality};
use crate::rng::{map_paths, PathStreams};
use crate::simulate::{check_start, CoupledPath, Engine, EventKind, PathConfig};
use crate::stats::{mean_se, MeanSe};

/// Law of the initial skeleton count Z_0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law", content = "value")]
pub enum InitialLaw {
    Fixed(u64),
    Poisson(f64),
    /// Poisson conditioned to be at least one.
    PoissonConditionedPositive(f64),
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialLaw::Fixed(_) => Ok(()),
            InitialLaw::Poisson(mu) if mu >= 0.0 && mu.is_finite() => Ok(()),
            InitialLaw::PoissonConditionedPositive(mu) if mu > 0.0 && mu.is_finite() => Ok(()),
            other => domain(format!("invalid initial law {other:?}")),
        }
    }
}

/// Below this intensity the conditioned Poisson is drawn by inversion.
const INVERSION_BELOW: f64 = 1e-3;

pub fn sample_initial<R: Rng + ?Sized>(init: &InitialLaw, rng: &mut R) -> u64 {
    match *init {
        InitialLaw::Fixed(n) => n,
        InitialLaw::Poisson(mu) => poisson(mu, rng),
        InitialLaw::PoissonConditionedPositive(mu) if mu > INVERSION_BELOW => loop {
            let k = poisson(mu, rng);
            if k >= 1 {
                return k;
            }
        },
        InitialLaw::PoissonConditionedPositive(mu) => {
            // ϖ_k = μ^k e^{−μ} / (k! (1 − e^{−μ}))
            let norm = -(-mu).exp_m1();
            let mut u = rng.gen::<f64>() * norm;
            let mut p = mu * (-mu).exp();
            let mut k = 1u64;
            while u >= p && p > 0.0 {
                u -= p;
                k += 1;
                p *= mu / k as f64;
            }
            k
        }
    }
}

fn poisson<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    let k: f64 = Poisson::new(mu).unwrap().sample(rng);
    k as u64
}

/// A prepared skeleton simulator: the engine plus the initial law.
#[derive(Clone, Debug)]
pub struct SkeletonRunner {
    engine: Engine,
    init: InitialLaw,
    x: f64,
}

impl SkeletonRunner {
    pub fn lambda_skeleton(mech: &BranchingMechanism, lambda: f64, x: f64, init: InitialLaw, cfg: &PathConfig) -> Result<Self> {
        check_start(x)?;
        init.validate()?;
        Ok(SkeletonRunner { engine: Engine::lambda_skeleton(mech, lambda, cfg)?, init, x })
    }

    pub fn t_skeleton(mech: &BranchingMechanism, horizon: f64, x: f64, init: InitialLaw, cfg: &PathConfig) -> Result<Self> {
        check_start(x)?;
        init.validate()?;
        Ok(SkeletonRunner { engine: Engine::t_skeleton(mech, horizon, cfg)?, init, x })
    }

    pub fn run(&self, streams: &mut PathStreams) -> CoupledPath {
        let z0 = sample_initial(&self.init, &mut streams.initial);
        self.engine.run(self.x, z0, streams)
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }
}

/// One path of the λ-skeleton with its dressing, started from Λ_0 = x.
pub fn simulate_lambda_skeleton(
    mech: &BranchingMechanism,
    lambda: f64,
    x: f64,
    init: InitialLaw,
    cfg: &PathConfig,
    streams: &mut PathStreams,
) -> Result<CoupledPath> {
    Ok(SkeletonRunner::lambda_skeleton(mech, lambda, x, init, cfg)?.run(streams))
}

/// One path of the T-skeleton with its dressing, started from Λ_0 = x.
pub fn simulate_t_skeleton(
    mech: &BranchingMechanism,
    horizon: f64,
    x: f64,
    init: InitialLaw,
    cfg: &PathConfig,
    streams: &mut PathStreams,
) -> Result<CoupledPath> {
    Ok(SkeletonRunner::t_skeleton(mech, horizon, x, init, cfg)?.run(streams))
}

/// Summary of the skeleton-to-spine experiment at one horizon T.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpineLimitRow {
    pub horizon: f64,
    pub p_z0_eq_1: f64,
    /// Fraction of paths with Z = 1 throughout [0, t].
    pub p_z_always_one: f64,
    pub laplace: Vec<MeanSe>,
    /// e^{−θΛ^T_t} − e^{−θX^↑_t} on paths sharing their random streams.
    pub paired: Vec<MeanSe>,
    /// E_x[e^{−θX_t} | X_T > 0], the exact law of Λ^T_t under this initial law.
    pub conditioned_oracle: Vec<f64>,
    /// max_θ |MC − spine oracle|.
    pub d_t: f64,
    /// s.e. of the estimate attaining d_t.
    pub se: f64,
    /// max_θ |paired mean|.
    pub d_t_paired: f64,
    pub se_paired: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpineLimitSummary {
    pub x: f64,
    pub t: f64,
    pub theta_grid: Vec<f64>,
    pub spine_oracle: Vec<f64>,
    pub rows: Vec<SpineLimitRow>,
}

/// For each T: N T-skeleton paths started from a positive Poisson(u_T(∞)x)
/// count, compared at time t with the immortal-spine oracle.
#[allow(clippy::too_many_arguments)]
pub fn spine_limit_experiment(
    mech: &BranchingMechanism,
    x: f64,
    t: f64,
    horizons: &[f64],
    n: usize,
    theta_grid: &[f64],
    cfg: &PathConfig,
    seed: u64,
) -> Result<SpineLimitSummary> {
    check_start(x)?;
    if mech.classify() == Criticality::Supercritical {
        return precondition("the spine limit needs a (sub)critical mechanism");
    }
    if horizons.is_empty() || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return domain("T list must be non-empty and increasing");
    }
    if !(t >= 0.0) || t >= horizons[0] {
        return domain(format!("need 0 ≤ t < min T, got t = {t}"));
    }
    if !(x > 0.0) {
        return domain("the spine limit conditions on survival and needs x > 0");
    }
    let spine_oracle = theta_grid
        .iter()
        .map(|&th| evolution::laplace_immigration(mech, x, 1, t, th))
        .collect::<Result<Vec<_>>>()?;

    let mut cfg = cfg.clone();
    cfg.horizon = t;
    cfg.record_every = 0;
    let endpoints = |paths: &[(f64, bool, u64)]| -> Vec<MeanSe> {
        theta_grid.iter().map(|&th| mean_se(paths.iter().map(|p| (-th * p.0).exp()))).collect()
    };

    // t = 0: nothing to simulate, Λ_0 = x exactly
    let spine: Vec<f64> = if t > 0.0 {
        let engine = Engine::spine(mech, &cfg)?;
        map_paths(n, |i| engine.run(x, 1, &mut PathStreams::new(seed, i)).final_mass())
    } else {
        vec![x; n]
    };

    let mut rows = Vec::with_capacity(horizons.len());
    for &horizon in horizons {
        let u_inf = evolution::u_infinity(mech, horizon)?;
        let init = InitialLaw::PoissonConditionedPositive(u_inf * x);
        let paths: Vec<(f64, bool, u64)> = if t > 0.0 {
            let runner = SkeletonRunner::t_skeleton(mech, horizon, x, init, &cfg)?;
            map_paths(n, |i| {
                let p = runner.run(&mut PathStreams::new(seed, i));
                (p.final_mass(), p.z_always_one, p.initial_count())
            })
        } else {
            map_paths(n, |i| {
                let z = sample_initial(&init, &mut PathStreams::new(seed, i).initial);
                (x, z == 1, z)
            })
        };
        let laplace = endpoints(&paths);
        let paired: Vec<MeanSe> = theta_grid
            .iter()
            .map(|&th| mean_se(paths.iter().zip(&spine).map(|(p, &s)| (-th * p.0).exp() - (-th * s).exp())))
            .collect();
        let u_rest = if t > 0.0 { evolution::u_infinity(mech, horizon - t)? } else { f64::INFINITY };
        let survive = -(-x * u_inf).exp_m1();
        let conditioned_oracle = theta_grid
            .iter()
            .map(|&th| {
                let a = evolution::log_laplace_csbp(mech, x, t, th)?;
                let b = if u_rest.is_finite() { evolution::log_laplace_csbp(mech, x, t, th + u_rest)? } else { f64::NEG_INFINITY };
                Ok((a.exp() - b.exp()) / survive)
            })
            .collect::<Result<Vec<_>>>()?;
        let (d_t, se) = max_gap(laplace.iter().zip(&spine_oracle).map(|(m, &o)| (m.mean - o, m.se)));
        let (d_t_paired, se_paired) = max_gap(paired.iter().map(|m| (m.mean, m.se)));
        let nf = n as f64;
        rows.push(SpineLimitRow {
            horizon,
            p_z0_eq_1: paths.iter().filter(|p| p.2 == 1).count() as f64 / nf,
            p_z_always_one: paths.iter().filter(|p| p.1).count() as f64 / nf,
            laplace,
            paired,
            conditioned_oracle,
            d_t,
            se,
            d_t_paired,
            se_paired,
        });
    }
    Ok(SpineLimitSummary { x, t, theta_grid: theta_grid.to_vec(), spine_oracle, rows })
}

fn max_gap(it: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    it.fold((0.0, 0.0), |acc, (d, se)| if d.abs() > acc.0 { (d.abs(), se) } else { acc })
}

/// Per-path grid values as CSV: path_id, t, lambda_mass, z_count.
pub fn write_paths_csv<W: Write>(paths: &[CoupledPath], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path_id", "t", "lambda_mass", "z_count"]).map_err(csv_err)?;
    for (i, p) in paths.iter().enumerate() {
        for ((t, m), z) in p.times.iter().zip(&p.lambda_mass).zip(&p.z_count) {
            out.write_record(&[i.to_string(), t.to_string(), m.to_string(), z.to_string()]).map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| Error::Numerical(format!("csv write failed: {e}")))
}

/// Event log as CSV: path_id, time, kind, k, size, z_after.
pub fn write_events_csv<W: Write>(paths: &[CoupledPath], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path_id", "time", "kind", "k", "size", "z_after"]).map_err(csv_err)?;
    for (i, p) in paths.iter().enumerate() {
        for e in &p.events {
            let (kind, k, size) = match e.kind {
                EventKind::Branch(k) => ("branch", k.to_string(), String::new()),
                EventKind::EdgeImmigration(r) => ("edge_immigration", String::new(), r.to_string()),
                EventKind::BranchImmigration(r) => ("branch_immigration", String::new(), r.to_string()),
            };
            out.write_record(&[i.to_string(), e.time.to_string(), kind.into(), k, size, e.z_after.to_string()])
                .map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| Error::Numerical(format!("csv write failed: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Numerical(format!("csv write failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyMeasure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn feller(alpha: f64) -> BranchingMechanism {
        BranchingMechanism::feller(alpha, 1.0).unwrap()
    }

    #[test]
    fn initial_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_initial(&InitialLaw::Fixed(3), &mut rng), 3);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_initial(&InitialLaw::PoissonConditionedPositive(1e-3), &mut rng) == 1)
            .count();
        assert!(ones as f64 / n as f64 > 0.999);
        let m = mean_se((0..n).map(|_| sample_initial(&InitialLaw::Poisson(2.0), &mut rng) as f64));
        assert!((m.mean - 2.0).abs() < 4.0 * m.se);
        // E[K | K ≥ 1] = μ / (1 − e^{−μ}) on both sides of the inversion switch
        for mu in [5e-4, 0.7] {
            let m = mean_se((0..n).map(|_| sample_initial(&InitialLaw::PoissonConditionedPositive(mu), &mut rng) as f64));
            let exact = mu / -(-mu).exp_m1();
            assert!((m.mean - exact).abs() < 4.0 * m.se + 1e-12, "μ={mu}: {} vs {exact}", m.mean);
        }
        assert!(InitialLaw::Poisson(-1.0).validate().is_err());
    }

    #[test]
    fn empty_skeleton_is_plain_csbp() {
        let cfg = PathConfig::new(1e-2, 1.0);
        let p = simulate_lambda_skeleton(&feller(1.0), 1.0, 1.0, InitialLaw::Fixed(0), &cfg, &mut PathStreams::new(1, 0)).unwrap();
        assert!(p.z_count.iter().all(|&z| z == 0));
        assert!(p.events.is_empty());
    }

    #[test]
    fn lambda_below_star_rejected() {
        let cfg = PathConfig::new(1e-2, 1.0);
        let r = simulate_lambda_skeleton(&feller(1.0), 0.5, 1.0, InitialLaw::Fixed(1), &cfg, &mut PathStreams::new(1, 0));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn yule_growth() {
        // p_2 = 1 at rate ψ′(1) = 1: E[Z_t] = e^t
        let cfg = PathConfig::new(1e-2, 1.0);
        let runner = SkeletonRunner::lambda_skeleton(&feller(1.0), 1.0, 0.0, InitialLaw::Fixed(1), &cfg).unwrap();
        let z = map_paths(20_000, |i| runner.run(&mut PathStreams::new(4, i)).final_count() as f64);
        let m = mean_se(z);
        assert!((m.mean - 1f64.exp()).abs() < 4.0 * m.se, "{m:?}");
    }

    #[test]
    fn skeleton_event_invariants() {
        let mech = BranchingMechanism::new(1.0, 0.5, LevyMeasure::Exponential { c: 2.0, b: 1.0 }).unwrap();
        let ls = mech.lambda_star().unwrap();
        let mut cfg = PathConfig::new(1e-2, 1.0);
        cfg.record_every = 1;
        for lambda in [ls, 2.0 * ls] {
            let runner = SkeletonRunner::lambda_skeleton(&mech, lambda, 1.0, InitialLaw::Poisson(lambda), &cfg).unwrap();
            let mut saw_death = false;
            for i in 0..300 {
                let p = runner.run(&mut PathStreams::new(9, i));
                assert!(p.lambda_mass.iter().all(|&m| m >= 0.0));
                let mut z = p.initial_count();
                for e in &p.events {
                    if let EventKind::Branch(k) = e.kind {
                        assert!(lambda != ls || k != 0, "death at λ = λ*");
                        saw_death |= k == 0;
                        z = z + k as u64 - 1;
                    }
                    assert_eq!(z, e.z_after);
                }
                assert_eq!(z, p.final_count());
            }
            if lambda > ls {
                assert!(saw_death);
            }
        }
    }

    #[test]
    fn t_skeleton_horizon_checks() {
        let cfg = PathConfig::new(1e-2, 2.0);
        assert!(SkeletonRunner::t_skeleton(&feller(-1.0), 2.0, 1.0, InitialLaw::Fixed(1), &cfg).is_err());
        let at = BranchingMechanism::new(-1.0, 0.0, LevyMeasure::Atoms { atoms: vec![(1.0, 1.0)] }).unwrap();
        let cfg = PathConfig::new(1e-2, 1.0);
        assert!(SkeletonRunner::t_skeleton(&at, 2.0, 1.0, InitialLaw::Fixed(1), &cfg).is_err());
    }

    #[test]
    fn spine_limit_at_time_zero() {
        let s = spine_limit_experiment(&feller(-1.0), 1.0, 0.0, &[2.0, 4.0], 200, &[0.5, 1.0], &PathConfig::new(1e-2, 1.0), 3)
            .unwrap();
        for row in &s.rows {
            assert_eq!(row.d_t, 0.0);
            assert_eq!(row.d_t_paired, 0.0);
        }
    }

    #[test]
    fn spine_limit_rejects_bad_input() {
        let cfg = PathConfig::new(1e-2, 1.0);
        assert!(spine_limit_experiment(&feller(1.0), 1.0, 1.0, &[2.0], 10, &[1.0], &cfg, 1).is_err());
        assert!(spine_limit_experiment(&feller(-1.0), 1.0, 2.0, &[2.0], 10, &[1.0], &cfg, 1).is_err());
        assert!(spine_limit_experiment(&feller(-1.0), 1.0, 1.0, &[4.0, 2.0], 10, &[1.0], &cfg, 1).is_err());
    }

    #[test]
    fn csv_exports() {
        let mut cfg = PathConfig::new(0.25, 1.0);
        cfg.record_every = 1;
        let runner = SkeletonRunner::lambda_skeleton(&feller(1.0), 1.0, 1.0, InitialLaw::Fixed(2), &cfg).unwrap();
        let paths: Vec<_> = (0..3).map(|i| runner.run(&mut PathStreams::new(2, i))).collect();
        let mut buf = Vec::new();
        write_paths_csv(&paths, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("path_id,t,lambda_mass,z_count\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 5);
        let mut buf = Vec::new();
        write_events_csv(&paths, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("path_id,time,kind,k,size,z_after\n"));
    }
}
