use std::fmt::Write as _;

use csbp::evolution;
use csbp::rng::{map_paths, PathStreams};
use csbp::simulate::{CoupledPath, Engine, PathConfig, PathDiagnostics};
use csbp::skeleton::{spine_limit_experiment, write_events_csv, write_paths_csv, InitialLaw, SkeletonRunner};
use csbp::stats::{mean_se, MeanSe};
use csbp::verify::{run_suite, SuiteConfig, SUITES};
use csbp::{BranchingMechanism, Criticality, Error};
use serde::Serialize;

use crate::config::{Kind, RunConfig};
use crate::run::Run;
use crate::CliError;

/// Stride of the per-path CSV when the config does not set one.
const DEFAULT_RECORD_EVERY: usize = 10;
const PSI_TABLE_POINTS: usize = 201;

pub struct Outcome {
    pub run: Run,
    pub text: String,
    pub passed: bool,
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::from(Error::Numerical(format!("csv: {e}")))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::usage(e.to_string()))
}

/// Shortest decimal form, keeping a trailing ".0" on integral values.
fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Serialize)]
struct GreySummary {
    finite: Option<bool>,
    slope: Option<f64>,
    note: Option<String>,
}

#[derive(Serialize)]
struct MechSummary {
    mechanism: BranchingMechanism,
    classification: Criticality,
    lambda_star: Option<f64>,
    grey: GreySummary,
}

pub fn mech(cfg: RunConfig) -> Result<Outcome, CliError> {
    let m = cfg.mechanism()?;
    let class = m.classify();
    let lambda_star = if class == Criticality::Supercritical { Some(m.lambda_star()?) } else { None };
    let grey = match m.grey_report() {
        Ok(g) => GreySummary { finite: Some(g.finite), slope: Some(g.slope), note: None },
        Err(Error::Indeterminate { slope }) => GreySummary { finite: None, slope: Some(slope), note: Some("indeterminate".into()) },
        Err(e) => return Err(e.into()),
    };
    let grey_word = grey.finite.map_or("indeterminate".to_string(), |g| g.to_string());
    let text = match lambda_star {
        Some(l) => format!("{class}, λ* = {}, Grey: {grey_word}\n", num(round12(l))),
        None => format!("{class}, Grey: {grey_word}\n"),
    };
    let top = 4.0 * lambda_star.unwrap_or(1.0).max(1.0);
    let rows = (0..PSI_TABLE_POINTS)
        .map(|i| {
            let th = top * i as f64 / (PSI_TABLE_POINTS - 1) as f64;
            Ok(vec![num(th), num(m.psi(th)?), num(m.psi_prime(th)?)])
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut run = Run::start("mech", cfg);
    run.add("psi.csv", csv_bytes(&["theta", "psi", "psi_prime"], rows)?);
    run.add_json("summary.json", &MechSummary { mechanism: m, classification: class, lambda_star, grey });
    Ok(Outcome { run, text, passed: true })
}

/// Rounds away root-finding noise in the last digits for display.
fn round12(v: f64) -> f64 {
    let s = format!("{v:.12e}");
    s.parse().unwrap_or(v)
}

pub fn table(cfg: RunConfig) -> Result<Outcome, CliError> {
    let m = cfg.mechanism()?;
    let e = cfg.experiment.clone().expect("resolved");
    let (t, dt) = (e.t.unwrap(), e.dt.unwrap());
    let n = (t / dt - 1e-9).ceil().max(1.0) as usize;
    let times: Vec<f64> = (0..=n).map(|i| if i == n { t } else { i as f64 * dt }).collect();
    let mut rows = Vec::new();
    for &th in e.theta.as_ref().unwrap() {
        let tab = evolution::solve_u_with_derivative(&m, th, &times)?;
        let du = tab.du_dtheta.unwrap_or_default();
        for (k, (&s, &u)) in tab.times.iter().zip(&tab.u).enumerate() {
            rows.push(vec![num(s), num(th), num(u), du.get(k).map(|&d| num(d)).unwrap_or_default()]);
        }
    }
    let grey = m.greys_condition().unwrap_or(false);
    if grey {
        for &s in &times[1..] {
            rows.push(vec![num(s), "inf".into(), num(evolution::u_infinity(&m, s)?), String::new()]);
        }
    }
    let text = format!("u_t(θ) on {} times for {} θ values{}\n", times.len(), e.theta.as_ref().unwrap().len(), if grey { " and θ = ∞" } else { "" });
    let mut run = Run::start("table", cfg);
    run.add("table.csv", csv_bytes(&["t", "theta", "u", "du_dtheta"], rows)?);
    Ok(Outcome { run, text, passed: true })
}

#[derive(Serialize)]
struct LaplaceRow {
    theta: f64,
    mean: f64,
    se: f64,
    oracle: Option<f64>,
    /// (mean − oracle)/se, without any allowance for discretisation bias
    z: Option<f64>,
}

#[derive(Serialize)]
struct SkeletonSummary {
    #[serde(rename = "mean_Z_0")]
    mean_z_0: MeanSe,
    #[serde(rename = "mean_Z_t")]
    mean_z_t: MeanSe,
    #[serde(rename = "P_Z_t_eq_0")]
    p_z_t_zero: f64,
    z_identically_zero: bool,
    branch_events_per_path: f64,
}

#[derive(Serialize)]
struct DiagnosticsSummary {
    thinning_violations: u64,
    immigration_jumps_per_path: f64,
    paths_stopped_at_cap: u64,
    mean_dropped_variance: f64,
}

#[derive(Serialize)]
struct SimSummary {
    kind: Kind,
    seed: u64,
    n: usize,
    x: f64,
    t: f64,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    lambda: Option<f64>,
    init: Option<InitialLaw>,
    eps_jump: f64,
    #[serde(rename = "mean_X_t")]
    mean_x_t: MeanSe,
    #[serde(rename = "oracle_mean_X_t")]
    oracle_mean: Option<f64>,
    extinct_fraction: f64,
    laplace: Vec<LaplaceRow>,
    skeleton: Option<SkeletonSummary>,
    diagnostics: DiagnosticsSummary,
    notes: Vec<String>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
}

pub fn simulate(cfg: RunConfig) -> Result<Outcome, CliError> {
    let m = cfg.mechanism()?;
    let e = cfg.experiment.clone().expect("resolved");
    let kind = e.kind.unwrap();
    let (x, t, n) = (e.x.unwrap(), e.t.unwrap(), e.n.unwrap());
    let thetas = e.theta.clone().unwrap();
    let mut pc = PathConfig::new(e.dt.unwrap(), t);
    pc.eps_jump = e.eps_jump;
    pc.record_every = if cfg.emit_paths { e.record_every.unwrap_or(DEFAULT_RECORD_EVERY) } else { 0 };
    let seed = cfg.seed;

    enum Source {
        Engine(Engine, u64),
        Skeleton(SkeletonRunner),
    }
    let source = match kind {
        Kind::Csbp => Source::Engine(Engine::csbp(&m, &pc)?, 0),
        Kind::Spine => Source::Engine(Engine::spine(&m, &pc)?, 1),
        Kind::DieByT => Source::Engine(Engine::die_by_t(&m, e.horizon.unwrap(), &pc)?, 0),
        Kind::LambdaSkeleton => Source::Skeleton(SkeletonRunner::lambda_skeleton(&m, e.lambda.unwrap(), x, e.init.unwrap(), &pc)?),
        Kind::TSkeleton => Source::Skeleton(SkeletonRunner::t_skeleton(&m, e.horizon.unwrap(), x, e.init.unwrap(), &pc)?),
    };
    let eps = match &source {
        Source::Engine(en, _) => en.eps(),
        Source::Skeleton(r) => r.engine().eps(),
    };
    let paths: Vec<CoupledPath> = map_paths(n, |i| {
        let mut s = PathStreams::new(seed, i);
        match &source {
            Source::Engine(en, z0) => en.run(x, *z0, &mut s),
            Source::Skeleton(r) => r.run(&mut s),
        }
    });

    let oracle = |th: f64| -> Result<Option<f64>, Error> {
        match kind {
            Kind::Csbp => evolution::laplace_csbp(&m, x, t, th).map(Some),
            Kind::Spine => evolution::laplace_immigration(&m, x, 1, t, th).map(Some),
            Kind::DieByT => evolution::laplace_die_by_t(&m, e.horizon.unwrap(), x, t, th).map(Some),
            Kind::LambdaSkeleton => match e.init.unwrap() {
                InitialLaw::Poisson(mu) if close(mu, e.lambda.unwrap() * x) => evolution::laplace_csbp(&m, x, t, th).map(Some),
                _ => Ok(None),
            },
            Kind::TSkeleton => {
                let h = e.horizon.unwrap();
                match e.init.unwrap() {
                    InitialLaw::Poisson(mu) if close(mu, evolution::u_infinity(&m, h)? * x) => evolution::laplace_csbp(&m, x, t, th).map(Some),
                    InitialLaw::Fixed(0) => evolution::laplace_die_by_t(&m, h, x, t, th).map(Some),
                    _ => Ok(None),
                }
            }
        }
    };
    let mut laplace = Vec::new();
    for &th in &thetas {
        let est = mean_se(paths.iter().map(|p| (-th * p.final_mass()).exp()));
        let o = oracle(th)?;
        let z = o.map(|o| if est.mean == o { 0.0 } else { (est.mean - o) / est.se });
        laplace.push(LaplaceRow { theta: th, mean: est.mean, se: est.se, oracle: o, z });
    }

    let nf = n as f64;
    let mut notes = Vec::new();
    let skeleton = matches!(kind, Kind::LambdaSkeleton | Kind::TSkeleton).then(|| {
        let zero = paths.iter().all(|p| p.z_count.iter().all(|&z| z == 0));
        if zero {
            notes.push("Z ≡ 0 on all paths".to_string());
        }
        SkeletonSummary {
            mean_z_0: mean_se(paths.iter().map(|p| p.initial_count() as f64)),
            mean_z_t: mean_se(paths.iter().map(|p| p.final_count() as f64)),
            p_z_t_zero: paths.iter().filter(|p| p.final_count() == 0).count() as f64 / nf,
            z_identically_zero: zero,
            branch_events_per_path: paths.iter().map(|p| p.diagnostics.branch_events as f64).sum::<f64>() / nf,
        }
    });
    let diag: Vec<&PathDiagnostics> = paths.iter().map(|p| &p.diagnostics).collect();
    let diagnostics = DiagnosticsSummary {
        thinning_violations: diag.iter().map(|d| d.thinning_violations).sum(),
        immigration_jumps_per_path: diag.iter().map(|d| d.immigration_jumps as f64).sum::<f64>() / nf,
        paths_stopped_at_cap: diag.iter().filter(|d| d.stopped_at_cap).count() as u64,
        mean_dropped_variance: diag.iter().map(|d| d.dropped_variance).sum::<f64>() / nf,
    };
    if diagnostics.thinning_violations > 0 {
        notes.push(format!("{} thinning bound violations", diagnostics.thinning_violations));
    }
    let summary = SimSummary {
        kind,
        seed,
        n,
        x,
        t,
        horizon: e.horizon,
        lambda: e.lambda,
        init: e.init,
        eps_jump: eps,
        mean_x_t: mean_se(paths.iter().map(|p| p.final_mass())),
        oracle_mean: (kind == Kind::Csbp).then(|| x * (m.alpha * t).exp()),
        extinct_fraction: paths.iter().filter(|p| p.final_mass() == 0.0).count() as f64 / nf,
        laplace,
        skeleton,
        diagnostics,
        notes,
    };

    let mut text = String::new();
    let _ = writeln!(text, "{kind:?}: N = {n}, x = {x}, t = {t}");
    let _ = writeln!(text, "mean X_t = {:.6} ± {:.6}", summary.mean_x_t.mean, summary.mean_x_t.se);
    for r in &summary.laplace {
        let _ = match (r.oracle, r.z) {
            (Some(o), Some(z)) => writeln!(text, "E[exp(-{} X_t)] = {:.6} ± {:.6}  (oracle {:.6}, z = {:.2})", r.theta, r.mean, r.se, o, z),
            _ => writeln!(text, "E[exp(-{} X_t)] = {:.6} ± {:.6}", r.theta, r.mean, r.se),
        };
    }
    for note in &summary.notes {
        let _ = writeln!(text, "note: {note}");
    }

    let emit = cfg.emit_paths;
    let mut run = Run::start("simulate", cfg);
    run.add_json("summary.json", &summary);
    if emit {
        let mut buf = Vec::new();
        write_paths_csv(&paths, &mut buf)?;
        run.add("paths.csv", buf);
        if matches!(kind, Kind::LambdaSkeleton | Kind::TSkeleton) {
            let mut buf = Vec::new();
            write_events_csv(&paths, &mut buf)?;
            run.add("events.csv", buf);
        }
    }
    Ok(Outcome { run, text, passed: true })
}

pub fn verify(cfg: RunConfig, suite: &str) -> Result<Outcome, CliError> {
    if !SUITES.contains(&suite) {
        return Err(CliError::usage(format!("unknown suite `{suite}`; expected one of {}", SUITES.join(", "))));
    }
    let v = cfg.verify.clone().expect("resolved");
    let report = run_suite(suite, &SuiteConfig { seed: cfg.seed, paths: v.n, dt: v.dt })?;
    let text = report.to_text();
    let passed = report.passed();
    let mut run = Run::start(&format!("verify {suite}"), cfg);
    run.add("report.json", (report.to_json() + "\n").into_bytes());
    run.add("report.txt", text.clone().into_bytes());
    Ok(Outcome { run, text, passed })
}

pub fn sweep(cfg: RunConfig) -> Result<Outcome, CliError> {
    let m = cfg.mechanism()?;
    let e = cfg.experiment.clone().expect("resolved");
    let mut pc = PathConfig::new(e.dt.unwrap(), e.t.unwrap());
    pc.eps_jump = e.eps_jump;
    let list = e.t_list.clone().unwrap();
    let summary = spine_limit_experiment(&m, e.x.unwrap(), e.t.unwrap(), &list, e.n.unwrap(), e.theta.as_ref().unwrap(), &pc, cfg.seed)?;
    let rows = summary.rows.iter().map(|r| vec![num(r.horizon), num(r.p_z0_eq_1), num(r.d_t), num(r.se)]);
    let csv = csv_bytes(&["T", "P_hat_Z0_eq_1", "d_T", "se"], rows)?;
    let mut text = String::new();
    let _ = writeln!(text, "{:>8} {:>14} {:>12} {:>12} {:>12}", "T", "P(Z_0 = 1)", "d_T", "se", "paired d_T");
    for r in &summary.rows {
        let _ = writeln!(text, "{:>8} {:>14.6} {:>12.3e} {:>12.3e} {:>12.3e}", r.horizon, r.p_z0_eq_1, r.d_t, r.se, r.d_t_paired);
    }
    let mut run = Run::start("sweep", cfg);
    run.add("sweep.csv", csv);
    run.add_json("summary.json", &summary);
    Ok(Outcome { run, text, passed: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_a_decimal_point() {
        assert_eq!(num(1.0), "1.0");
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(round12(1.0000000000000002)), "1.0");
    }
}
