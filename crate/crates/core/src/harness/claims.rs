//! The acceptance suite: one claim per verified statement, each with a
//! pinned tolerance and a deterministic seed. `run_all` executes every claim
//! and is what the CLI `claims` task and the acceptance test target drive.

use crate::error::Result;
use crate::expansion::{self, build_bundle};
use crate::geometry::Scenario;
use crate::harness::fit_slope;
use crate::loops::{
    self, circle_cover, energy, find_geodesic, seed_loop, torus_meridian, DescentOptions,
};
use crate::num::{geometric_grid, Grid, TWO_PI};
use crate::orbit::{
    adiabatic_sweep, attractive_correct, correct_orbit, resonance_probe, OrbitOptions,
};
use crate::periodic_ode::{
    random_gamma_l1, random_trig, solve_perturbed, GreenKernel, OdeMode, PeriodicLinearProblem,
};
use crate::reduction::{
    minimize_reduced, random_loop, reduced_energy, reduced_gradient, solve_normal, ReduceOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl ClaimStatus {
    pub fn name(self) -> &'static str {
        match self {
            ClaimStatus::Pass => "PASS",
            ClaimStatus::Fail => "FAIL",
            ClaimStatus::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClaimReport {
    pub id: String,
    /// the verified statement, in plain words
    pub statement: String,
    pub measured: f64,
    pub tolerance: String,
    pub status: ClaimStatus,
    pub runtime_s: f64,
    pub notes: Vec<String>,
}

impl ClaimReport {
    pub fn passed(&self) -> bool {
        self.status == ClaimStatus::Pass
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} measured={:.6e} tol={} ({:.2}s)",
            self.status.name(),
            self.id,
            self.measured,
            self.tolerance,
            self.runtime_s
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClaimOptions {
    pub n: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for ClaimOptions {
    fn default() -> Self {
        ClaimOptions { n: 256, seed: 42, threads: crate::par::pool_size() }
    }
}

fn finish(
    id: &str,
    statement: &str,
    measured: f64,
    tolerance: &str,
    pass: bool,
    start: Instant,
    notes: Vec<String>,
) -> ClaimReport {
    ClaimReport {
        id: id.into(),
        statement: statement.into(),
        measured,
        tolerance: tolerance.into(),
        status: if pass { ClaimStatus::Pass } else { ClaimStatus::Fail },
        runtime_s: start.elapsed().as_secs_f64(),
        notes,
    }
}

fn geodesic_circle(grid: &Grid, scenario: &Scenario) -> Result<loops::Loop> {
    let seed = seed_loop(scenario, grid, &[1], 0.15)?;
    Ok(find_geodesic(scenario, grid, &seed, &[1], DescentOptions::default())?.geodesic)
}

/// Criterion 1: the corrected orbit of the unit-circle scenario with b0 = -1
/// has radius (1 + 4 pi^2 eps)^{-1} to 1e-9 at eps = 1e-3, end-to-end through
/// geometry, expansion and Newton.
pub fn claim_exact_circle_orbit(opts: &ClaimOptions) -> ClaimReport {
    let t0 = Instant::now();
    let id = "exact-circle-orbit";
    let st = "corrected orbit radius equals (1+4pi^2 eps)^{-1} at eps=1e-3";
    let run = || -> Result<f64> {
        let sc = Scenario::circle(-1.0);
        let g = Grid::spectral(opts.n);
        let x0 = geodesic_circle(&g, &sc)?;
        let bundle = build_bundle(&sc, &g, &x0)?;
        let eps = 1e-3;
        let r = correct_orbit(&sc, &g, &bundle, eps, &OrbitOptions::default())?;
        let exact = 1.0 / (1.0 + 4.0 * PI * PI * eps);
        let mut worst: f64 = 0.0;
        for j in 0..g.n {
            let rad =
                (r.solution.samples[(j, 0)].powi(2) + r.solution.samples[(j, 1)].powi(2)).sqrt();
            worst = worst.max((rad - exact).abs());
        }
        Ok(worst)
    };
    match run() {
        Ok(worst) => finish(
            id,
            st,
            worst,
            "<= 1e-9",
            worst <= 1e-9,
            t0,
            vec![
                "sign convention pinned by the exact radius series: with the outward normal, \
                 a = -4 pi^2 and g_n = +16 pi^4 reproduce (1+4 pi^2 eps)^{-1} through eps^2"
                    .into(),
            ],
        ),
        Err(e) => finish(id, st, f64::NAN, "<= 1e-9", false, t0, vec![e.to_string()]),
    }
}

/// Criterion 2: log-log slope of the pseudo-orbit residual dual norm vs eps
/// lies in [1.8, 2.2] with r^2 >= 0.99 on the circle and the torus meridian.
pub fn claim_residual_rate(opts: &ClaimOptions) -> ClaimReport {
    let t0 = Instant::now();
    let id = "pseudo-orbit-residual-rate";
    let st = "residual of the second-order pseudo orbit scales like eps^2";
    let run = || -> Result<(f64, bool, Vec<String>)> {
        let g = Grid::spectral(opts.n);
        let eps_list = geometric_grid(1e-4, 1e-2, 8);
        let mut notes = Vec::new();
        let mut worst_dev = 0.0_f64;
        let mut ok = true;
        // circle
        {
            let sc = Scenario::circle(-1.0);
            let x0 = geodesic_circle(&g, &sc)?;
            let bundle = build_bundle(&sc, &g, &x0)?;
            let sweep = expansion::residual_sweep(&sc, &g, &bundle, &eps_list)?;
            let fit = fit_slope(&sweep)?;
            notes.push(format!("circle slope {:.4} r2 {:.6}", fit.slope, fit.r2));
            ok &= fit.slope >= 1.8 && fit.slope <= 2.2 && fit.r2 >= 0.99;
            worst_dev = worst_dev.max((fit.slope - 2.0).abs());
        }
        // torus meridian
        {
            let sc = Scenario::torus(2.0, 1.0, -1.0);
            let seed = seed_loop(&sc, &g, &[0, 1], 0.12)?;
            let x0 = find_geodesic(&sc, &g, &seed, &[0, 1], DescentOptions::default())?.geodesic;
            let bundle = build_bundle(&sc, &g, &x0)?;
            let sweep = expansion::residual_sweep(&sc, &g, &bundle, &eps_list)?;
            let fit = fit_slope(&sweep)?;
            notes.push(format!("torus-meridian slope {:.4} r2 {:.6}", fit.slope, fit.r2));
            ok &= fit.slope >= 1.8 && fit.slope <= 2.2 && fit.r2 >= 0.99;
            worst_dev = worst_dev.max((fit.slope - 2.0).abs());
        }
        Ok((worst_dev, ok, notes))
    };
    match run() {
        Ok((dev, ok, notes)) => finish(id, st, dev, "slope in [1.8,2.2], r2>=0.99", ok, t0, notes),
        Err(e) => finish(id, st, f64::NAN, "slope in [1.8,2.2]", false, t0, vec![e.to_string()]),
    }
}

/// Criterion 3: Newton correction size: slope of ||corrected - pseudo||_sup
/// vs eps at least 1.8; its normal component strictly super-quadratic.
pub fn claim_correction_rate(opts: &ClaimOptions) -> ClaimReport {
    let t0 = Instant::now();
    let id = "correction-rate";
    let st = "Newton correction is O(eps^2) in sup norm, o(eps^2) normally";
    let run = || -> Result<(f64, bool, Vec<String>)> {
        let sc = Scenario::circle(-1.0);
        let g = Grid::spectral(opts.n);
        let x0 = geodesic_circle(&g, &sc)?;
        let bundle = build_bundle(&sc, &g, &x0)?;
        let eps_list = geometric_grid(1e-4, 1e-2, 4);
        let oopts = OrbitOptions::default();
        let rows: Vec<(f64, f64, f64)> = crate::par::parallel_map(eps_list, opts.threads, |eps| {
            let r = correct_orbit(&sc, &g, &bundle, eps, &oopts).expect("newton converges");
            (eps, r.correction_sup, r.correction_normal_sup)
        });
        let fit = fit_slope(&rows.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>())?;
        let fit_n = fit_slope(&rows.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>())?;
        let notes = vec![
            format!("corr slope {:.4} r2 {:.6}", fit.slope, fit.r2),
            format!("normal corr slope {:.4}", fit_n.slope),
        ];
        let ok = fit.slope >= 1.8 && fit.r2 >= 0.99 && fit_n.slope > 2.0;
        Ok((fit.slope, ok, notes))
    };
    match run() {
        Ok((m, ok, notes)) => finish(id, st, m, "slope >= 1.8, normal slope > 2.0", ok, t0, notes),
        Err(e) => finish(id, st, f64::NAN, "slope >= 1.8", false, t0, vec![e.to_string()]),
    }
}

/// Criterion 4: adiabatic limit: C0 distance of the rescaled orbit to the
/// geodesic decays with slope -0.5 +- 0.1 over T in [1e2, 1e6]; C1 distance
/// strictly decreasing. Run on a stiff circle (b0 = -100) so the
/// leading-order law eps |a| stays unsaturated over the whole window.
pub fn claim_adiabatic_limit(opts: &ClaimOptions) -> ClaimReport {
    let t0 = Instant::now();
    let id = "adiabatic-limit-rate";
    let st = "rescaled orbits approach the geodesic at rate T^{-1/2}, C1 decaying";
    let run = || -> Result<(f64, bool, Vec<String>)> {
        let sc = Scenario::circle(-100.0);
        let g = Grid::spectral(opts.n);
        let x0 = geodesic_circle(&g, &sc)?;
        let bundle = build_bundle(&sc, &g, &x0)?;
        let t_list = geometric_grid(1e2, 1e6, 8);
        let rep = adiabatic_sweep(&sc, &g, &bundle, &t_list, opts.threads, &OrbitOptions::default())?;
        let last = rep.rows.last().unwrap();
        let l0 = energy(&g, &bundle.x0);
        let energy_gap = (last.orbit_energy - l0).abs() / l0;
        let notes = vec![
            format!("scenario circle b0=-100 (stiff: eps|a| unsaturated on [1e2,1e6])"),
            format!("C0 slope {:.4} r2 {:.6}", rep.slope_c0, rep.slope_c0_r2),
            format!("C1 strictly decreasing: {}", rep.c1_strictly_decreasing),
            format!("final rescaled-orbit energy gap {:.3e}", energy_gap),
        ];
        let ok = (rep.slope_c0 + 0.5).abs() <= 0.1
            && rep.c1_strictly_decreasing
            && energy_gap <= 1e-3;
        Ok((rep.slope_c0, ok, notes))
    };
    match run() {
        Ok((m, ok, notes)) => {
            finish(id, st, m, "slope = -0.5 +- 0.1; C1 decreasing", ok, t0, notes)
        }
        Err(e) => finish(id, st, f64::NAN, "slope = -0.5 +- 0.1", false, t0, vec![e.to_string()]),
    }
}

/// Criterion 5: the periodic-ODE estimates: perturbation bounds with
/// delta = 0.1 at |lambda_2pi| >= 100 (both modes, 100 random problems each)
/// and exact kernel norms to 1e-10.
pub fn claim_green_estimates(opts: &ClaimOptions) -> ClaimReport {
    let t0 = Instant::now();
    let id = "periodic-green-estimates";
    let st = "perturbed periodic solves obey the kernel bounds; norms exact";
    let delta = 0.1;
    let run = || -> Result<(f64, bool, Vec<String>)> {
        let g = Grid::spectral(opts.n);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut worst_ratio = 0.0_f64; // observed / bound, must stay <= 1
        let mut ok = true;
        // repulsive: 100 random problems at lambda_2pi <= -100
        for trial in 0..100 {
            let l2p = -100.0 * (1.0 + (trial % 10) as f64);
            let lambda0 = l2p * TWO_PI * TWO_PI;
            let gamma_2pi = random_gamma_l1(&g, 1.0, &mut rng);
            let gamma: Vec<f64> = gamma_2pi.iter().map(|v| v * TWO_PI * TWO_PI).collect();
            let sigma = random_trig(&g, 8, &mut rng);
            let p = PeriodicLinearProblem { mode: OdeMode::Repulsive, lambda0, gamma, sigma: sigma.clone() };
            let sol = solve_perturbed(&g, &p)?;
            let sup_v = g.sup_norm(&sol.v);
            let b_l1 = (1.0 + delta) * (g.l1_norm(&sigma) / TWO_PI) / (2.0 * (-l2p).sqrt());
            let b_inf = (1.0 + delta) * (g.sup_norm(&sigma) / (TWO_PI * TWO_PI)) / (-l2p);
            worst_ratio = worst_ratio.max(sup_v / b_l1).max(sup_v / b_inf);
            ok &= sup_v <= b_l1 && sup_v <= b_inf;
        }
        // attractive: half-integer grid k in [10, 50]
        for trial in 0..100 {
            let k = 10 + (trial * 7) % 41;
            let l2p = (k as f64 + 0.5).powi(2);
            let lambda0 = l2p * TWO_PI * TWO_PI;
            let gamma_2pi = random_gamma_l1(&g, 1.0, &mut rng);
            let gamma: Vec<f64> = gamma_2pi.iter().map(|v| v * TWO_PI * TWO_PI).collect();
            let sigma = random_trig(&g, 8, &mut rng);
            let p = PeriodicLinearProblem { mode: OdeMode::Attractive, lambda0, gamma, sigma: sigma.clone() };
            let sol = solve_perturbed(&g, &p)?;
            let sup_v = g.sup_norm(&sol.v);
            let b_l1 = (1.0 + delta) * (g.l1_norm(&sigma) / TWO_PI) / (2.0 * l2p.sqrt());
            let b_inf = (1.0 + delta) * 2.0 * (g.sup_norm(&sigma) / (TWO_PI * TWO_PI)) / l2p.sqrt();
            worst_ratio = worst_ratio.max(sup_v / b_l1).max(sup_v / b_inf);
            ok &= sup_v <= b_l1 && sup_v <= b_inf;
        }
        // kernel norms against closed forms
        let mut worst_norm_err = 0.0_f64;
        for &l2p in &[-1.0, -25.0, -400.0] {
            let k = GreenKernel::new(&g, l2p * TWO_PI * TWO_PI)?;
            worst_norm_err = worst_norm_err
                .max((k.sup_norm_2pi_numeric() - k.sup_norm_2pi_closed()).abs())
                .max((k.l1_norm_2pi_numeric() - k.l1_norm_2pi_closed()).abs());
        }
        for kk in [10usize, 30, 50] {
            let l2p = (kk as f64 + 0.5).powi(2);
            let k = GreenKernel::new(&g, l2p * TWO_PI * TWO_PI)?;
            worst_norm_err = worst_norm_err
                .max((k.sup_norm_2pi_numeric() - k.sup_norm_2pi_closed()).abs())
                .max((k.l1_norm_2pi_numeric() - k.l1_norm_2pi_closed()).abs());
        }
        ok &= worst_norm_err <= 1e-10;
        let notes = vec![
            format!("worst observed/bound ratio {:.6}", worst_ratio),
            format!("worst kernel norm error {:.3e}", worst_norm_err),
        ];
        Ok((worst_ratio, ok, notes))
    };
    match run() {
        Ok((m, ok, notes)) => {
            finish(id, st, m, "ratios <= 1 with delta=0.1; norms to 1e-10", ok, t0, notes)
        }
        Err(e) => finish(id, st, f64::NAN, "ratios <= 1", false, t0, vec![e.to_string()]),
    }
}

/// Criterion 6: normal fixed point: ||v(h)|| eps^{-1/2} bounded over the
/// sweep for 20 random loops with L0 <= A; both solve routes agree to 1e-9.
pub fn claim_normal_fixed_point(opts: &ClaimOptions) -> ClaimReport {
    let t0 = Instant::now();
    let id = "normal-fixed-point-bound";
    let st = "normal solutions satisfy ||v|| <= C sqrt(eps); two routes agree";
    let run = || -> Result<(f64, bool, Vec<String>)> {
        let sc = Scenario::circle(-1.0);
        let g = Grid::spectral(opts.n);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6);
        let a_cap = 2.0 * energy(&g, &circle_cover(&g, 1)) + 1.0;
        let bounds = sc.scenario_bounds(256)?;
        // the contraction constant of the proofs: (1+delta) Hbar A / sqrt|b*|
        let c_a_bound = 2.0 * bounds.h_bar * a_cap / bounds.b_sup.abs().sqrt();
        let eps_list = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5];
        let mut worst_c = 0.0_f64;
        let mut worst_route = 0.0_f64;
        let mut ok = true;
        let mut loops_used = 0;
        while loops_used < 20 {
            let h = random_loop(&sc, &g, &[1], 0.15, &mut rng)?;
            if energy(&g, &h) > a_cap {
                continue;
            }
            loops_used += 1;
            for &eps in &eps_list {
                let stt = solve_normal(&sc, &g, &h, eps, OdeMode::Repulsive, None)?;
                worst_c = worst_c.max(stt.c_a_observed);
                let rel_route = stt.route_diff / stt.sup_v.max(1e-12);
                worst_route = worst_route.max(rel_route);
                ok &= stt.c_a_observed <= c_a_bound && rel_route <= 1e-9;
                ok &= stt.ambient_consistency <= 1e-9;
            }
        }
        let notes = vec![
            format!("sup ||v|| eps^-1/2 = {:.4} (bound {:.4})", worst_c, c_a_bound),
            format!("worst relative route difference {:.3e}", worst_route),
        ];
        Ok((worst_c, ok, notes))
    };
    match run() {
        Ok((m, ok, notes)) => finish(id, st, m, "<= 2 Hbar A / sqrt|b*|; routes 1e-9", ok, t0, notes),
        Err(e) => finish(id, st, f64::NAN, "bounded", false, t0, vec![e.to_string()]),
    }
}

/// Criterion 7: reduced gap: |G_eps| eps^{-1/2} and ||DG_eps|| eps^{-1/2}
/// bounded over the sweep; for quadratic-in-distance potentials the
/// (1/eps) int((1/2) v dV/dv - V) term vanishes and the completed closed
/// form tracks the direct difference to 1e-8.
pub fn claim_reduced_gap(opts: &ClaimOptions) -> ClaimReport {
    let t0 = Instant::now();
    let id = "reduced-gap-bound";
    let st = "reduced gap and its gradient are O(sqrt(eps)); closed form exact";
    let run = || -> Result<(f64, bool, Vec<String>)> {
        let sc = Scenario::circle(-1.0);
        let g = Grid::spectral(opts.n);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7);
        let eps_list = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5];
        let mut ok = true;
        let mut worst_identity = 0.0_f64;
        let mut worst_closed = 0.0_f64;
        let mut worst_gap_ratio = 0.0_f64;
        for _ in 0..8 {
            let h = random_loop(&sc, &g, &[1], 0.12, &mut rng)?;
            let mut gap_scaled = Vec::new();
            let mut dgap_scaled = Vec::new();
            for &eps in &eps_list {
                let stt = solve_normal(&sc, &g, &h, eps, OdeMode::Repulsive, None)?;
                let gap = reduced_energy(&sc, &g, &h, eps, &stt)?;
                worst_identity = worst_identity.max(gap.g_half_identity.abs());
                worst_closed =
                    worst_closed.max((gap.g_closed - gap.g_direct).abs() / (1.0 + gap.g_direct.abs()));
                gap_scaled.push(gap.g_direct.abs() / eps.sqrt());
                let dg = {
                    let rg = reduced_gradient(&sc, &g, &h, eps, &stt)?;
                    let lg = loops::energy_gradient(&sc, &g, &h)?;
                    crate::loops::l2_norm_field(&g, &crate::loops::TangentField {
                        vectors: &rg.vectors - &lg.vectors,
                    })
                };
                dgap_scaled.push(dg / eps.sqrt());
            }
            worst_gap_ratio = worst_gap_ratio.max(gap_scaled[0]);
            // boundedness as eps -> 0: the scaled sequences must not grow
            // beyond their large-eps values
            for w in [&gap_scaled, &dgap_scaled] {
                let head = w[0].max(1e-14);
                for &v in &w[1..] {
                    ok &= v <= 1.1 * head + 1e-12;
                }
            }
        }
        ok &= worst_identity <= 1e-8 && worst_closed <= 1e-8;
        let notes = vec![
            format!("quadratic closed-form term sup {:.3e} (identically zero)", worst_identity),
            format!("closed-vs-direct gap mismatch {:.3e}", worst_closed),
            format!("|G| eps^-1/2 at largest eps {:.4}", worst_gap_ratio),
        ];
        Ok((worst_identity.max(worst_closed), ok, notes))
    };
    match run() {
        Ok((m, ok, notes)) => finish(
            id,
            st,
            m,
            "identity & closed-form <= 1e-8; scaled gaps non-growing",
            ok,
            t0,
            notes,
        ),
        Err(e) => finish(id, st, f64::NAN, "<= 1e-8", false, t0, vec![e.to_string()]),
    }
}

/// Criterion 8: class minima on the torus: reduced minimization in classes
/// (1,0) and (0,1) converges to the analytic minima 2 pi^2 (R-r)^2 and
/// 2 pi^2 r^2 with |alpha_eps - alpha_0| decreasing and the final loop
/// energy within 1e-3 of the target.
pub fn claim_class_minima(opts: &ClaimOptions) -> ClaimReport {
    let t0 = Instant::now();
    let id = "class-minima-convergence";
    let st = "reduced minimizers converge to the analytic class minima";
    let run = || -> Result<(f64, bool, Vec<String>)> {
        let sc = Scenario::torus(2.0, 1.0, -1.0);
        let g = Grid::spectral(opts.n.min(128));
        let eps_list = [1e-2, 1e-3, 1e-4];
        let mut notes = Vec::new();
        let mut ok = true;
        let mut worst_final = 0.0_f64;
        for (class, alpha0) in [
            (vec![1i64, 0], 2.0 * PI * PI * (2.0 - 1.0) * (2.0 - 1.0)),
            (vec![0i64, 1], 2.0 * PI * PI),
        ] {
            let seed = seed_loop(&sc, &g, &class, 0.12)?;
            let mut gaps = Vec::new();
            let mut final_l0_err = f64::NAN;
            for &eps in &eps_list {
                let m = minimize_reduced(
                    &sc,
                    &g,
                    &seed,
                    &class,
                    eps,
                    OdeMode::Repulsive,
                    &ReduceOptions::default(),
                )?;
                gaps.push((m.l_eps - alpha0).abs());
                final_l0_err = (m.l0 - alpha0).abs() / alpha0;
            }
            let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
            notes.push(format!(
                "class {:?}: |L_eps - alpha0| = {:.3e} -> {:.3e} -> {:.3e}, final L0 rel err {:.3e}",
                class, gaps[0], gaps[1], gaps[2], final_l0_err
            ));
            ok &= decreasing && final_l0_err <= 1e-3;
            worst_final = worst_final.max(final_l0_err);
        }
        notes.push(
            "alpha_eps carries the O(eps) gap G_eps < 0; the loop-energy value is the 1e-3 target"
                .into(),
        );
        Ok((worst_final, ok, notes))
    };
    match run() {
        Ok((m, ok, notes)) => finish(
            id,
            st,
            m,
            "gaps decreasing; final loop-energy rel err <= 1e-3",
            ok,
            t0,
            notes,
        ),
        Err(e) => finish(id, st, f64::NAN, "<= 1e-3", false, t0, vec![e.to_string()]),
    }
}

/// Criterion 9: attractive case: orbits on the resonance-avoiding grid
/// eps_k, k in [10, 100], with the T^{-1/2} distance law; off-grid eps near
/// an eigenvalue crossing drives the condition estimate at least 1e6 times
/// above the on-grid median.
pub fn claim_attractive_grid(opts: &ClaimOptions) -> ClaimReport {
    let t0 = Instant::now();
    let id = "attractive-resonance-grid";
    let st = "attractive orbits exist on the eps_k grid; off-grid resonance detected";
    let run = || -> Result<(f64, bool, Vec<String>)> {
        let sc = Scenario::circle(1.0);
        let g = Grid::spectral(opts.n.min(128));
        let x0 = geodesic_circle(&g, &sc)?;
        let bundle = build_bundle(&sc, &g, &x0)?;
        let a_cap = 2.0 * energy(&g, &x0) + 1.0;
        let ks: Vec<usize> = (10..=100).collect();
        let oopts = OrbitOptions::default();
        let rows: Vec<Result<(f64, f64, f64)>> =
            crate::par::parallel_map(ks, opts.threads, |k| {
                let r = attractive_correct(&sc, &g, &bundle, k, a_cap, &oopts)?;
                let dist = r.solution.sup_distance(&bundle.x0);
                let t = 1.0 / (r.eps * r.eps);
                Ok((t, dist, r.cond_estimate))
            });
        let mut pts = Vec::new();
        let mut conds = Vec::new();
        for r in rows {
            let (t, dist, cond) = r?;
            pts.push((t, dist));
            conds.push(cond);
        }
        let fit = fit_slope(&pts)?;
        conds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median_cond = conds[conds.len() / 2];
        let (eps_star, cond_star) = resonance_probe(&sc, &g, &bundle, 30, 5e-3)?;
        let ratio = cond_star / median_cond;
        let notes = vec![
            format!("grid slope {:.4} r2 {:.6} over k in [10,100]", fit.slope, fit.r2),
            format!("on-grid median cond {:.3e}", median_cond),
            format!("crossing at eps = {:.9e}: cond {:.3e} ({:.1e} x median)", eps_star, cond_star, ratio),
        ];
        let ok = (fit.slope + 0.5).abs() <= 0.1 && fit.r2 >= 0.99 && ratio >= 1e6;
        Ok((ratio, ok, notes))
    };
    match run() {
        Ok((m, ok, notes)) => finish(
            id,
            st,
            m,
            "slope -0.5 +- 0.1; resonance cond >= 1e6 x median",
            ok,
            t0,
            notes,
        ),
        Err(e) => finish(id, st, f64::NAN, ">= 1e6 x median", false, t0, vec![e.to_string()]),
    }
}

/// Criterion 10: structural invariants across the modules, 100% required:
/// gradient-vs-FD, Jacobi symmetry, first-integral conservation, gauge
/// uniqueness, equivariance, frame orthonormality and the Gauss-map check.
pub fn claim_structural_invariants(opts: &ClaimOptions) -> ClaimReport {
    let t0 = Instant::now();
    let id = "structural-invariants";
    let st = "gradient/FD, symmetry, first-integral, gauge and frame checks";
    let run = || -> Result<(f64, bool, Vec<String>)> {
        let mut notes = Vec::new();
        let mut ok = true;
        let g = Grid::spectral(opts.n.min(128));
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xa);

        // loop-energy gradient vs finite differences (<= 1e-4 relative)
        {
            let sc = Scenario::torus(2.0, 1.0, -1.0);
            let mut worst = 0.0_f64;
            for trial in 0..5 {
                let lp = seed_loop(&sc, &g, &[1, 1], 0.1 + 0.02 * trial as f64)?;
                let gr = loops::energy_gradient(&sc, &g, &lp)?;
                let mut amb = nalgebra::DMatrix::zeros(g.n, 3);
                for c in 0..3 {
                    for k in 0..3 {
                        let (a, b): (f64, f64) =
                            (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                        for j in 0..g.n {
                            let t = g.ts[j];
                            amb[(j, c)] += a * (TWO_PI * k as f64 * t).cos()
                                + b * (TWO_PI * k as f64 * t).sin();
                        }
                    }
                }
                let k = loops::project_tangent(&sc, &lp, &amb)?;
                let pairing = gr
                    .vectors
                    .iter()
                    .zip(k.vectors.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / g.n as f64;
                let s = 1e-5;
                let lp_p = loops::reproject_samples(&sc, &(&lp.samples + &k.vectors * s))?;
                let lp_m = loops::reproject_samples(&sc, &(&lp.samples - &k.vectors * s))?;
                let fd = (energy(&g, &lp_p) - energy(&g, &lp_m)) / (2.0 * s);
                worst = worst.max((fd - pairing).abs() / pairing.abs().max(1e-10));
            }
            notes.push(format!("gradient-vs-FD rel err {:.3e}", worst));
            ok &= worst <= 1e-4;
        }

        // Jacobi operator symmetry (<= 1e-8)
        {
            let sc = Scenario::circle(-1.0);
            let sys = loops::jacobi_system(&sc, &g, &circle_cover(&g, 1))?;
            let asym = (&sys.bilinear - sys.bilinear.transpose()).norm();
            notes.push(format!("Jacobi symmetry defect {:.3e}", asym));
            ok &= asym <= 1e-8;
        }

        // first integral of the corrected orbit (<= 1e-8 relative)
        let sc = Scenario::circle(-1.0);
        let x0 = circle_cover(&g, 1);
        let bundle = build_bundle(&sc, &g, &x0)?;
        {
            let r = correct_orbit(&sc, &g, &bundle, 1e-3, &OrbitOptions::default())?;
            notes.push(format!("energy first-integral drift {:.3e}", r.energy_drift));
            ok &= r.energy_drift <= 1e-8;
        }

        // gauge uniqueness under time rotation (<= 1e-9)
        {
            let shift = g.n / 5;
            let r0 = correct_orbit(&sc, &g, &bundle, 1e-3, &OrbitOptions::default())?;
            let bundle_shift = build_bundle(&sc, &g, &x0.time_shift(shift))?;
            let r1 = correct_orbit(&sc, &g, &bundle_shift, 1e-3, &OrbitOptions::default())?;
            let realigned = r1.solution.time_shift(g.n - shift);
            let dist = r0.solution.sup_distance(&realigned);
            notes.push(format!("gauge uniqueness after realignment {:.3e}", dist));
            ok &= dist <= 1e-9;
        }

        // expansion equivariance under time shift (<= 1e-8 relative)
        {
            let sct = Scenario::torus(2.0, 1.0, -1.0);
            let mer = torus_meridian(&g, 2.0, 1.0, 0.4);
            let b0 = build_bundle(&sct, &g, &mer)?;
            let shift = 11;
            let b1 = build_bundle(&sct, &g, &mer.time_shift(shift))?;
            let mut worst = 0.0_f64;
            for j in 0..g.n {
                let scale = 1.0 + b0.g_n[j].abs();
                worst = worst.max((b0.g_n[(j + shift) % g.n] - b1.g_n[j]).abs() / scale);
                worst = worst.max((b0.a[(j + shift) % g.n] - b1.a[j]).abs());
            }
            notes.push(format!("equivariance defect {:.3e}", worst));
            ok &= worst <= 1e-8;
        }

        // frame orthonormality (1e-12) and Gauss map vs FD (1e-5 at step 1e-4)
        {
            let mut worst_frame = 0.0_f64;
            let mut worst_gauss = 0.0_f64;
            for sc in [
                Scenario::circle(-1.0),
                Scenario::sphere(-2.0),
                Scenario::sphere_quartic(),
                Scenario::torus(2.0, 1.0, -1.0),
            ] {
                let samples = sc.manifold_samples(100);
                for x in samples.iter().take(25) {
                    let f = sc.frame_at(x.as_slice())?;
                    worst_frame = worst_frame.max((f.normal.norm() - 1.0).abs());
                    for (i, ei) in f.tangent.iter().enumerate() {
                        worst_frame = worst_frame.max(ei.dot(&f.normal).abs());
                        worst_frame = worst_frame.max((ei.norm() - 1.0).abs());
                        for ej in f.tangent.iter().skip(i + 1) {
                            worst_frame = worst_frame.max(ei.dot(ej).abs());
                        }
                    }
                    // central FD of the Gauss map against H
                    let dim = sc.dim();
                    let mut v = nalgebra::DVector::zeros(dim);
                    for e in &f.tangent {
                        v += e * rng.random_range(-1.0..1.0_f64);
                    }
                    if v.norm() < 1e-3 {
                        continue;
                    }
                    v /= v.norm();
                    let step = 1e-4;
                    let np = sc.normal_at((x + &v * step).as_slice())?;
                    let nm = sc.normal_at((x - &v * step).as_slice())?;
                    let fd = (np - nm) / (2.0 * step);
                    let jet = sc.distance_jet(x.as_slice());
                    let hv = nalgebra::DVector::from_iterator(
                        dim,
                        (0..dim).map(|i| (0..dim).map(|k| jet.h[i][k] * v[k]).sum::<f64>()),
                    );
                    worst_gauss = worst_gauss.max((fd - &hv).norm() / hv.norm().max(1e-12));
                }
            }
            notes.push(format!("frame orthonormality defect {:.3e}", worst_frame));
            notes.push(format!("Gauss-map FD rel err {:.3e}", worst_gauss));
            ok &= worst_frame <= 1e-12 && worst_gauss <= 1e-5;
        }

        // reduced-gradient envelope property (<= 1e-4 relative)
        {
            let mut worst = 0.0_f64;
            for _ in 0..5 {
                let h = random_loop(&sc, &g, &[1], 0.1, &mut rng)?;
                let eps = 1e-3;
                let stt = solve_normal(&sc, &g, &h, eps, OdeMode::Repulsive, None)?;
                let gr = reduced_gradient(&sc, &g, &h, eps, &stt)?;
                let mut amb = nalgebra::DMatrix::zeros(g.n, 2);
                for c in 0..2 {
                    for k in 0..3 {
                        let (a, b): (f64, f64) =
                            (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                        for j in 0..g.n {
                            let t = g.ts[j];
                            amb[(j, c)] += a * (TWO_PI * k as f64 * t).cos()
                                + b * (TWO_PI * k as f64 * t).sin();
                        }
                    }
                }
                let normals = loops::normals_along(&sc, &h)?;
                let k = loops::project_tangent_with(&normals, &amb);
                let pairing = gr
                    .vectors
                    .iter()
                    .zip(k.vectors.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / g.n as f64;
                let s = 1e-6;
                let eval = |sgn: f64| -> Result<f64> {
                    let trial = loops::reproject_samples(&sc, &(&h.samples + &k.vectors * (sgn * s)))?;
                    let tst = solve_normal(&sc, &g, &trial, eps, OdeMode::Repulsive, None)?;
                    Ok(reduced_energy(&sc, &g, &trial, eps, &tst)?.l_eps)
                };
                let fd = (eval(1.0)? - eval(-1.0)?) / (2.0 * s);
                worst = worst.max((fd - pairing).abs() / pairing.abs().max(1e-8));
            }
            notes.push(format!("envelope-property rel err {:.3e}", worst));
            ok &= worst <= 1e-4;
        }

        let measured = if ok { 1.0 } else { 0.0 };
        Ok((measured, ok, notes))
    };
    match run() {
        Ok((m, ok, notes)) => finish(id, st, m, "100% pass", ok, t0, notes),
        Err(e) => finish(id, st, f64::NAN, "100% pass", false, t0, vec![e.to_string()]),
    }
}

/// Run the full acceptance suite in criterion order.
pub fn run_all(opts: &ClaimOptions) -> Vec<ClaimReport> {
    vec![
        claim_exact_circle_orbit(opts),
        claim_residual_rate(opts),
        claim_correction_rate(opts),
        claim_adiabatic_limit(opts),
        claim_green_estimates(opts),
        claim_normal_fixed_point(opts),
        claim_reduced_gap(opts),
        claim_class_minima(opts),
        claim_attractive_grid(opts),
        claim_structural_invariants(opts),
    ]
}
