//! CLI plumbing: configuration, scenario dispatch, sweep orchestration,
//! slope fitting and machine-readable reports.

pub mod claims;
pub mod config;
pub mod csv;

pub use claims::{ClaimOptions, ClaimReport, ClaimStatus};
pub use config::{parse_grid, RunConfig, Task};

use crate::error::{Error, Result};
use crate::expansion::build_bundle;
use crate::geometry::Scenario;
use crate::loops::{find_geodesic, gauge_normalize, reproject_samples, seed_loop, DescentOptions, Loop};
use crate::num::{linear_fit, Grid};
use crate::orbit::{adiabatic_sweep, correct_orbit, OrbitOptions};
use crate::periodic_ode::OdeMode;
use crate::reduction::{minimize_reduced, ReduceOptions};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares on (log x, log y). Callers gate rate claims on r2 >= 0.99;
/// lower r2 marks a claim inconclusive rather than failed.
pub fn fit_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    let usable: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .collect();
    if usable.len() < 4 {
        return Err(Error::InsufficientPoints { needed: 4, got: usable.len() });
    }
    let xs: Vec<f64> = usable.iter().map(|(x, _)| x.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|(_, y)| y.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(SlopeFit { slope, intercept, r2 })
}

/// Rate-claim policy: pass/fail on the slope window when the fit is clean,
/// inconclusive when r2 < 0.99 (suggests a finer grid, not a violation).
pub fn slope_claim(pairs: &[(f64, f64)], lo: f64, hi: f64) -> Result<(SlopeFit, ClaimStatus)> {
    let fit = fit_slope(pairs)?;
    let status = if fit.r2 < 0.99 {
        ClaimStatus::Inconclusive
    } else if fit.slope >= lo && fit.slope <= hi {
        ClaimStatus::Pass
    } else {
        ClaimStatus::Fail
    };
    Ok((fit, status))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub reports: Vec<ClaimReport>,
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

impl RunOutcome {
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.status != ClaimStatus::Fail)
    }
}

fn scenario_of(config: &RunConfig) -> Result<Scenario> {
    Scenario::from_name(&config.scenario, &config.params)
}

/// Geodesic for a task: read from `loop_csv` when configured (reprojected,
/// gauge-fixed and verified against the class), else descend from a seed.
fn geodesic_for(config: &RunConfig, sc: &Scenario, grid: &Grid) -> Result<Loop> {
    if let Some(path) = &config.loop_csv {
        let raw = csv::read_loop(path)?;
        if raw.n_samples() != grid.n {
            return Err(Error::Invalid(format!(
                "loop CSV has {} samples, expected {}",
                raw.n_samples(),
                grid.n
            )));
        }
        let lp = reproject_samples(sc, &raw.samples)?;
        if crate::loops::winding(sc, &lp) != config.class {
            return Err(Error::ClassDrift {
                from: config.class.clone(),
                to: crate::loops::winding(sc, &lp),
            });
        }
        let g = crate::loops::energy_gradient(sc, grid, &lp)?;
        let gnorm = crate::loops::l2_norm_field(grid, &g);
        if gnorm > 1e-6 {
            return Err(Error::NotAGeodesic { grad_norm: gnorm, tol: 1e-6 });
        }
        return gauge_normalize(sc, grid, &lp);
    }
    let seed = seed_loop(sc, grid, &config.class, 0.15)?;
    Ok(find_geodesic(sc, grid, &seed, &config.class, DescentOptions::default())?.geodesic)
}

fn mode_of(config: &RunConfig, scenario: &Scenario) -> OdeMode {
    match config.mode.as_deref() {
        Some("repulsive") => OdeMode::Repulsive,
        Some("attractive") => OdeMode::Attractive,
        _ => match scenario.sign() {
            crate::geometry::Sign::Repulsive => OdeMode::Repulsive,
            crate::geometry::Sign::Attractive => OdeMode::Attractive,
        },
    }
}

/// Attractive runs take their eps list from the resonance-avoiding grid
/// when a k-range is configured.
fn resonance_eps_list(config: &RunConfig, scenario: &Scenario) -> Option<Vec<f64>> {
    let (lo, hi) = config.k_range?;
    let b0 = scenario.b0();
    if b0 <= 0.0 {
        return None;
    }
    Some(
        crate::periodic_ode::resonance_epsilons(b0, lo, hi)
            .into_iter()
            .map(|(_, e)| e)
            .collect(),
    )
}

/// Execute a configured pipeline; deterministic for a fixed config and seed.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let mut outcome = RunOutcome { reports: vec![], files: vec![], summary: vec![] };
    let grid = Grid::new(config.n, config.scheme);
    match config.task {
        Task::Geodesic => {
            let sc = scenario_of(config)?;
            let seed = seed_loop(&sc, &grid, &config.class, 0.15)?;
            let res = find_geodesic(&sc, &grid, &seed, &config.class, DescentOptions::default())?;
            let path = config.out_dir.join("geodesic.csv");
            csv::write_loop(
                &path,
                &grid,
                &res.geodesic,
                &format!(
                    "geodesic scenario={} class={:?} scheme={} L0={:.12e} grad={:.3e} iters={}",
                    sc.name,
                    config.class,
                    grid.scheme.name(),
                    res.energy,
                    res.grad_norm,
                    res.iters
                ),
            )?;
            outcome.summary.push(format!(
                "geodesic: L0 = {:.12e}, gradient = {:.3e}, {} iterations",
                res.energy, res.grad_norm, res.iters
            ));
            outcome.files.push(path);
        }
        Task::Expand => {
            let sc = scenario_of(config)?;
            let geo = geodesic_for(config, &sc, &grid)?;
            let bundle = build_bundle(&sc, &grid, &geo)?;
            let path = config.out_dir.join("bundle.csv");
            csv::write_bundle(
                &path,
                &grid,
                &bundle,
                &format!("expansion bundle scenario={} class={:?}", sc.name, config.class),
            )?;
            outcome.files.push(path);
            if let Some(eps_grid) = &config.eps_grid {
                let sweep = crate::expansion::residual_sweep(&sc, &grid, &bundle, eps_grid)?;
                let fit = fit_slope(&sweep)?;
                outcome
                    .summary
                    .push(format!("residual slope {:.4} (r2 {:.6})", fit.slope, fit.r2));
                let path = config.out_dir.join("residual_sweep.csv");
                csv::write_residual_sweep(&path, &sweep, "pseudo-orbit residual sweep")?;
                outcome.files.push(path);
            }
        }
        Task::Solve => {
            let sc = scenario_of(config)?;
            let eps = config
                .eps
                .ok_or_else(|| Error::Invalid("solve needs a single eps".into()))?;
            let geo = geodesic_for(config, &sc, &grid)?;
            let bundle = build_bundle(&sc, &grid, &geo)?;
            let r = correct_orbit(&sc, &grid, &bundle, eps, &OrbitOptions::default())?;
            let path = config.out_dir.join("orbit.csv");
            csv::write_loop(
                &path,
                &grid,
                &r.solution,
                &format!(
                    "orbit eps={:.6e} residual_sup={:.3e} newton_iters={} cond={:.3e}",
                    eps, r.residual_sup, r.newton_iters, r.cond_estimate
                ),
            )?;
            outcome.summary.push(format!(
                "orbit at eps = {eps:.3e}: correction {:.3e}, normal {:.3e}, {} Newton iterations",
                r.correction_sup, r.correction_normal_sup, r.newton_iters
            ));
            outcome.files.push(path);
        }
        Task::Sweep => {
            let sc = scenario_of(config)?;
            // attractive scenarios may induce the period grid from the
            // resonance-avoiding k-range: T_k = 1/eps_k^2
            let t_list = match resonance_eps_list(config, &sc) {
                Some(eps) => eps.iter().map(|e| 1.0 / (e * e)).collect(),
                None => config
                    .periods()
                    .ok_or_else(|| Error::Invalid("sweep needs a T grid, eps grid, or k-range".into()))?,
            };
            let geo = geodesic_for(config, &sc, &grid)?;
            let bundle = build_bundle(&sc, &grid, &geo)?;
            let rep = adiabatic_sweep(&sc, &grid, &bundle, &t_list, config.threads, &OrbitOptions::default())?;
            let path = config.out_dir.join("sweep.csv");
            csv::write_sweep(
                &path,
                &rep.rows,
                &format!("adiabatic sweep scenario={} class={:?} seed={}", sc.name, config.class, config.seed),
            )?;
            outcome.files.push(path);
            outcome.summary.push(format!(
                "C0 slope {:.4} (r2 {:.6}), C1 strictly decreasing: {}",
                rep.slope_c0, rep.slope_c0_r2, rep.c1_strictly_decreasing
            ));
        }
        Task::Reduce => {
            let sc = scenario_of(config)?;
            let mode = mode_of(config, &sc);
            let eps_grid = match resonance_eps_list(config, &sc) {
                Some(eps) => eps,
                None => config
                    .eps_grid
                    .clone()
                    .ok_or_else(|| Error::Invalid("reduce needs an eps grid or k-range".into()))?,
            };
            let seed = seed_loop(&sc, &grid, &config.class, 0.12)?;
            let mut rows = Vec::new();
            for (i, &eps) in eps_grid.iter().enumerate() {
                let m = minimize_reduced(&sc, &grid, &seed, &config.class, eps, mode, &ReduceOptions::default())?;
                rows.push(csv::ReductionRow {
                    eps,
                    sup_v: m.state.sup_v,
                    g_eps: m.g_eps,
                    l_eps: m.l_eps,
                    l0: m.l0,
                    red_grad_norm: m.grad_norm,
                    l0_grad_norm: m.l0_grad_norm,
                    iters: m.iters,
                });
                let path = config.out_dir.join(format!("minimizer_{i}.csv"));
                csv::write_loop(&path, &grid, &m.h, &format!("reduced minimizer eps={eps:.6e}"))?;
                outcome.files.push(path);
            }
            let path = config.out_dir.join("reduction.csv");
            csv::write_reduction(
                &path,
                &rows,
                &format!("reduction scenario={} class={:?}", sc.name, config.class),
            )?;
            outcome.files.push(path);
            outcome.summary.push(format!(
                "L_eps values: {}",
                rows.iter().map(|r| format!("{:.8e}", r.l_eps)).collect::<Vec<_>>().join(", ")
            ));
        }
        Task::GreenAudit => {
            let lambdas = config
                .lambda_grid
                .clone()
                .ok_or_else(|| Error::Invalid("green-audit needs a lambda grid".into()))?;
            let mode = match config.mode.as_deref() {
                Some("repulsive") => OdeMode::Repulsive,
                Some("attractive") => OdeMode::Attractive,
                _ if lambdas.iter().all(|&l| l < 0.0) => OdeMode::Repulsive,
                _ => OdeMode::Attractive,
            };
            if mode == OdeMode::Repulsive && lambdas.iter().any(|&l| l >= 0.0) {
                return Err(Error::Invalid("repulsive audit needs negative lambdas".into()));
            }
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(config.seed);
            let rows = crate::periodic_ode::estimate_audit(&grid, mode, &lambdas, 25, &mut rng)?;
            let path = config.out_dir.join("green_audit.csv");
            csv::write_audit(&path, &rows, &format!("green audit mode={} seed={}", mode.name(), config.seed))?;
            outcome.files.push(path);
            let violations = rows.iter().filter(|r| r.margin < -1e-9 * r.bound).count();
            outcome
                .summary
                .push(format!("{} audit rows, {} bound violations", rows.len(), violations));
        }
        Task::Claims => {
            let copts = ClaimOptions { n: config.n, seed: config.seed, threads: config.threads };
            let reports = claims::run_all(&copts);
            let path = config.out_dir.join("claims.csv");
            csv::write_claims(&path, &reports, &format!("acceptance claims seed={}", config.seed))?;
            outcome.files.push(path);
            let manifest = config.out_dir.join("manifest.txt");
            csv::write_manifest(&manifest, &reports)?;
            outcome.files.push(manifest);
            for r in &reports {
                outcome.summary.push(r.line());
            }
            outcome.reports = reports;
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_slope_synthetic() {
        // y = x^2 exactly
        let pairs: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, (i * i) as f64)).collect();
        let fit = fit_slope(&pairs).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12 && (fit.r2 - 1.0).abs() < 1e-12);

        // y = 3 x^2 with tiny noise: slope within 0.02 of 2
        let pairs: Vec<(f64, f64)> = (1..=8)
            .map(|i| {
                let x = 10.0_f64.powf(i as f64 / 4.0);
                (x, 3.0 * x * x * (1.0 + 1e-3 * ((i * 37) % 7) as f64 / 7.0))
            })
            .collect();
        let fit = fit_slope(&pairs).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.02);

        // too few points
        assert!(matches!(
            fit_slope(&[(1.0, 1.0), (2.0, 4.0)]),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn slope_claim_inconclusive_on_non_monotone_data() {
        let pairs: Vec<(f64, f64)> = vec![
            (1.0, 1.0),
            (2.0, 8.0),
            (4.0, 2.0),
            (8.0, 60.0),
            (16.0, 30.0),
        ];
        let (_, status) = slope_claim(&pairs, 1.8, 2.2).unwrap();
        assert_eq!(status, ClaimStatus::Inconclusive);
    }
}
