//! Newton correction of the assembled pseudo orbit to a true periodic
//! solution of x'' + (1/eps) V'(x) = 0, with the S^1 phase gauge and the
//! adiabatic sweeps T -> infinity.

use crate::error::{Error, Result};
use crate::expansion::ExpansionBundle;
use crate::geometry::{Scenario, Sign};
use crate::linalg::{cond_estimate, orthonormalize};
use crate::loops::{velocity, Loop};
use crate::num::{linear_fit, Grid};
use crate::par::parallel_map;
use crate::periodic_ode::{nearest_eigenvalue, resonance_epsilon};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct OrbitOptions {
    pub max_newton: usize,
    /// relative sup-norm increment at which Newton is declared converged
    pub step_tol: f64,
    pub cond_threshold: f64,
    /// estimate the Jacobian condition number (skippable for speed)
    pub estimate_condition: bool,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            max_newton: 25,
            step_tol: 1e-12,
            cond_threshold: 1e12,
            estimate_condition: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessKind {
    SecondOrder,
    FirstOrder,
}

#[derive(Debug)]
pub struct OrbitResult {
    pub solution: Loop,
    pub eps: f64,
    /// sup norm of x'' + (1/eps) V'(x) at the solution
    pub residual_sup: f64,
    pub newton_iters: usize,
    /// sup norm of y = solution - x_eps
    pub correction_sup: f64,
    /// sup norm of the normal component of y along the base geodesic
    pub correction_normal_sup: f64,
    pub cond_estimate: f64,
    /// residual of the phase-gauge constraints at the solution
    pub gauge_residual: f64,
    /// relative drift of the first integral (1/2)|x'|^2 + (1/eps)V(x)
    pub energy_drift: f64,
    pub guess: GuessKind,
    /// sup-norm Newton increments, for quadratic-convergence audits
    pub increments: Vec<f64>,
    /// distance of b0/eps to the nearest periodic eigenvalue (attractive runs)
    pub eigen_distance: f64,
}

fn flatten(lp: &DMatrix<f64>) -> DVector<f64> {
    let (n, d) = (lp.nrows(), lp.ncols());
    DVector::from_fn(n * d, |i, _| lp[(i / d, i % d)])
}

fn unflatten(v: &DVector<f64>, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |j, c| v[j * d + c])
}

/// Gauge fields at the linearization point: the time-translation direction
/// plus declared scenario isometries, orthonormalized (dependent directions
/// drop out, e.g. rotating the circle equals a time shift).
fn gauge_fields(scenario: &Scenario, grid: &Grid, x_eps: &Loop) -> Vec<DVector<f64>> {
    let n = x_eps.n_samples();
    let d = x_eps.dim();
    let vel = velocity(grid, x_eps);
    let mut raw = vec![flatten(&vel)];
    let probe = scenario.killing_fields(&x_eps.point(0)).len();
    for which in 0..probe {
        let mut kf = DMatrix::zeros(n, d);
        for j in 0..n {
            let v = &scenario.killing_fields(&x_eps.point(j))[which];
            for c in 0..d {
                kf[(j, c)] = v[c];
            }
        }
        raw.push(flatten(&kf));
    }
    orthonormalize(&raw, 1e-6)
}

struct NewtonSystem {
    dim: usize,
    n: usize,
    d: usize,
    gauges: Vec<DVector<f64>>,
    /// symmetric scaling of the gauge border, of the order of ||D1||, so the
    /// bordered condition number reflects the physics and not the bookkeeping
    gauge_scale: f64,
}

impl NewtonSystem {
    /// F(x, mu) = [x'' + (1/eps)V'(x) + sum mu_i w_i ; <x - x_eps, w_i>/N]
    fn residual(
        &self,
        scenario: &Scenario,
        grid: &Grid,
        x: &DVector<f64>,
        mu: &DVector<f64>,
        anchor: &DVector<f64>,
        eps: f64,
    ) -> Result<DVector<f64>> {
        let (n, d) = (self.n, self.d);
        let xm = unflatten(x, n, d);
        let acc = &grid.d2 * &xm;
        let mut out = DVector::zeros(self.dim);
        for j in 0..n {
            let pt: Vec<f64> = (0..d).map(|c| xm[(j, c)]).collect();
            scenario.domain_ok(&pt)?;
            let grad = scenario.gradient(&pt);
            for c in 0..d {
                out[j * d + c] = acc[(j, c)] + grad[c] / eps;
            }
        }
        for (i, w) in self.gauges.iter().enumerate() {
            for r in 0..n * d {
                out[r] += mu[i] * self.gauge_scale * w[r];
            }
            out[n * d + i] = self.gauge_scale * (x - anchor).dot(w);
        }
        Ok(out)
    }

    fn jacobian(&self, scenario: &Scenario, grid: &Grid, x: &DVector<f64>, eps: f64) -> DMatrix<f64> {
        let (n, d) = (self.n, self.d);
        let mut jac = DMatrix::zeros(self.dim, self.dim);
        for j in 0..n {
            for m in 0..n {
                let w = grid.d2[(j, m)];
                if w != 0.0 {
                    for c in 0..d {
                        jac[(j * d + c, m * d + c)] = w;
                    }
                }
            }
        }
        for j in 0..n {
            let pt: Vec<f64> = (0..d).map(|c| x[j * d + c]).collect();
            let hess = scenario.hessian(&pt);
            for a in 0..d {
                for b in 0..d {
                    jac[(j * d + a, j * d + b)] += hess[(a, b)] / eps;
                }
            }
        }
        for (i, w) in self.gauges.iter().enumerate() {
            for r in 0..n * d {
                jac[(r, n * d + i)] = self.gauge_scale * w[r];
                jac[(n * d + i, r)] = self.gauge_scale * w[r];
            }
        }
        jac
    }
}

fn correct_from_guess(
    scenario: &Scenario,
    grid: &Grid,
    bundle: &ExpansionBundle,
    x_guess: &Loop,
    eps: f64,
    guess: GuessKind,
    opts: &OrbitOptions,
) -> Result<OrbitResult> {
    let n = x_guess.n_samples();
    let d = x_guess.dim();
    let gauges = gauge_fields(scenario, grid, x_guess);
    let gauge_scale = std::f64::consts::PI * n as f64;
    let sys = NewtonSystem { dim: n * d + gauges.len(), n, d, gauges, gauge_scale };
    let anchor = flatten(&x_guess.samples);
    let mut x = anchor.clone();
    let mut mu = DVector::zeros(sys.gauges.len());
    let mut increments = Vec::new();
    let mut cond = f64::NAN;
    let mut converged = false;
    let mut iters = 0;

    for it in 0..opts.max_newton {
        let f = sys.residual(scenario, grid, &x, &mu, &anchor, eps)?;
        let jac = sys.jacobian(scenario, grid, &x, eps);
        if it == 0 && opts.estimate_condition {
            cond = cond_estimate(&jac);
            if cond > opts.cond_threshold {
                return Err(Error::SingularJacobian { cond });
            }
        }
        let delta = jac
            .lu()
            .solve(&f)
            .ok_or(Error::SingularJacobian { cond: f64::INFINITY })?;
        let scale = 1.0 + x.amax();
        let step = delta.amax();
        for r in 0..n * d {
            x[r] -= delta[r];
        }
        for (i, m) in mu.iter_mut().enumerate() {
            *m -= delta[n * d + i];
        }
        increments.push(step);
        iters = it + 1;
        if step <= opts.step_tol * scale {
            converged = true;
            break;
        }
        // stagnation at the roundoff floor still counts once increments are tiny
        if increments.len() >= 2 {
            let prev = increments[increments.len() - 2];
            if step <= 1e-9 * scale && step >= 0.25 * prev {
                converged = true;
                break;
            }
        }
        if !step.is_finite() || step > 1e6 * scale {
            return Err(Error::NewtonDiverged { eps, iters: it + 1, residual: step });
        }
    }
    if !converged {
        let f = sys.residual(scenario, grid, &x, &mu, &anchor, eps)?;
        return Err(Error::NewtonDiverged { eps, iters, residual: f.amax() });
    }

    let xm = unflatten(&x, n, d);
    let solution = Loop { samples: xm.clone(), on_manifold: false };

    let acc = &grid.d2 * &xm;
    let mut residual_sup: f64 = 0.0;
    for j in 0..n {
        let pt: Vec<f64> = (0..d).map(|c| xm[(j, c)]).collect();
        let grad = scenario.gradient(&pt);
        let mut s = 0.0;
        for c in 0..d {
            let e = acc[(j, c)] + grad[c] / eps;
            s += e * e;
        }
        residual_sup = residual_sup.max(s.sqrt());
    }

    let y = &x - &anchor;
    let correction_sup = {
        let ym = unflatten(&y, n, d);
        grid.sup_norm_field(&ym)
    };
    let correction_normal_sup = {
        let ym = unflatten(&y, n, d);
        let mut m = 0.0_f64;
        for j in 0..n {
            let mut dot = 0.0;
            for c in 0..d {
                dot += ym[(j, c)] * bundle.frame.normal[(j, c)];
            }
            m = m.max(dot.abs());
        }
        m
    };
    // the phase-gauge pairing <y, x_eps'>_{L2}
    let gauge_residual = {
        let vel_eps = velocity(grid, x_guess);
        let vel_flat = flatten(&vel_eps);
        (y.dot(&vel_flat) / n as f64).abs()
    };

    let energy_drift = first_integral_drift(scenario, grid, &solution, eps);

    Ok(OrbitResult {
        solution,
        eps,
        residual_sup,
        newton_iters: iters,
        correction_sup,
        correction_normal_sup,
        cond_estimate: cond,
        gauge_residual,
        energy_drift,
        guess,
        increments,
        eigen_distance: f64::NAN,
    })
}

/// Relative drift of the conserved energy (1/2)|x'|^2 + (1/eps) V(x).
pub fn first_integral_drift(scenario: &Scenario, grid: &Grid, orbit: &Loop, eps: f64) -> f64 {
    let n = orbit.n_samples();
    let d = orbit.dim();
    let vel = velocity(grid, orbit);
    let es: Vec<f64> = (0..n)
        .map(|j| {
            let ke: f64 = 0.5 * (0..d).map(|c| vel[(j, c)] * vel[(j, c)]).sum::<f64>();
            ke + scenario.potential(&orbit.point(j)) / eps
        })
        .collect();
    let mean = es.iter().sum::<f64>() / n as f64;
    let dev = es.iter().map(|e| (e - mean).abs()).fold(0.0_f64, f64::max);
    dev / mean.abs().max(1e-300)
}

/// Correct the second-order pseudo orbit at a given eps; falls back to the
/// first-order guess if the second-order one leaves the tube.
pub fn correct_orbit(
    scenario: &Scenario,
    grid: &Grid,
    bundle: &ExpansionBundle,
    eps: f64,
    opts: &OrbitOptions,
) -> Result<OrbitResult> {
    match bundle.assemble(scenario, eps) {
        Ok(guess) => correct_from_guess(scenario, grid, bundle, &guess, eps, GuessKind::SecondOrder, opts),
        Err(Error::TubeExit { .. }) => {
            let guess = bundle.assemble_order1(scenario, eps)?;
            correct_from_guess(scenario, grid, bundle, &guess, eps, GuessKind::FirstOrder, opts)
        }
        Err(e) => Err(e),
    }
}

/// Correct along the resonance-avoiding grid eps_k = b0/(2 pi (k+1/2))^2.
/// Requires a constant attractive normal Hessian and the smallness condition
/// 4 Lambda Hbar A < b0 (vacuous when the third normal derivative vanishes).
pub fn attractive_correct(
    scenario: &Scenario,
    grid: &Grid,
    bundle: &ExpansionBundle,
    k: usize,
    energy_cap: f64,
    opts: &OrbitOptions,
) -> Result<OrbitResult> {
    let b0 = scenario.b0();
    if scenario.sign() != Sign::Attractive {
        return Err(Error::Invalid("attractive_correct needs b0 > 0".into()));
    }
    let bounds = scenario.scenario_bounds(256)?;
    if (bounds.b_sup - bounds.b_inf).abs() > 1e-8 * b0.abs() {
        return Err(Error::Invalid(
            "attractive case needs a constant normal Hessian on M".into(),
        ));
    }
    bounds.attractive_admissible(b0, energy_cap)?;
    let eps = resonance_epsilon(b0, k);
    let mut result = correct_orbit(scenario, grid, bundle, eps, opts)?;
    let (_, dist) = nearest_eigenvalue(b0 / eps);
    result.eigen_distance = dist;
    Ok(result)
}

/// Condition estimate of the gauged linearization at the assembled pseudo
/// orbit for an arbitrary eps (no Newton run); this is the resonance detector.
pub fn linearization_condition(
    scenario: &Scenario,
    grid: &Grid,
    bundle: &ExpansionBundle,
    eps: f64,
) -> Result<f64> {
    Ok(cond_estimate(&linearization_jacobian(scenario, grid, bundle, eps)?))
}

fn linearization_jacobian(
    scenario: &Scenario,
    grid: &Grid,
    bundle: &ExpansionBundle,
    eps: f64,
) -> Result<DMatrix<f64>> {
    let x_eps = bundle.assemble(scenario, eps)?;
    let n = x_eps.n_samples();
    let d = x_eps.dim();
    let gauges = gauge_fields(scenario, grid, &x_eps);
    let gauge_scale = std::f64::consts::PI * n as f64;
    let sys = NewtonSystem { dim: n * d + gauges.len(), n, d, gauges, gauge_scale };
    Ok(sys.jacobian(scenario, grid, &flatten(&x_eps.samples), eps))
}

/// Locate the eigenvalue crossing of the gauged linearization near the
/// nominal resonance eps = b0/(2 pi m)^2 by bisecting the inertia (negative
/// eigenvalue count), and return (eps at the crossing, condition there).
/// The count changes when b0/eps sweeps through the eigenvalue of the
/// linearized normal operator, which sits O(1) away from (2 pi m)^2.
pub fn resonance_probe(
    scenario: &Scenario,
    grid: &Grid,
    bundle: &ExpansionBundle,
    m: usize,
    half_width_rel: f64,
) -> Result<(f64, f64)> {
    let b0 = scenario.b0();
    let eps_nominal = b0 / (crate::num::TWO_PI * m as f64).powi(2);
    let count = |eps: f64| -> Result<usize> {
        Ok(crate::linalg::negative_eigenvalue_count(&linearization_jacobian(
            scenario, grid, bundle, eps,
        )?))
    };
    let mut lo = eps_nominal * (1.0 - half_width_rel);
    let mut hi = eps_nominal * (1.0 + half_width_rel);
    let mut c_lo = count(lo)?;
    let c_hi = count(hi)?;
    if c_lo == c_hi {
        return Err(Error::Invalid(format!(
            "no eigenvalue crossing inside the bracket around eps = {eps_nominal:.6e}"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let c_mid = count(mid)?;
        if c_mid == c_lo {
            lo = mid;
            c_lo = c_mid;
        } else {
            hi = mid;
        }
    }
    let eps_star = 0.5 * (lo + hi);
    let cond = linearization_condition(scenario, grid, bundle, eps_star)?;
    Ok((eps_star, cond))
}

/// Empirical contraction threshold: halve eps from 1e-2 until Newton
/// converges within 12 iterations.
pub fn determine_eps0(
    scenario: &Scenario,
    grid: &Grid,
    bundle: &ExpansionBundle,
    opts: &OrbitOptions,
) -> Result<f64> {
    let mut eps = 1e-2;
    for _ in 0..40 {
        let trial = correct_orbit(scenario, grid, bundle, eps, opts);
        match trial {
            Ok(r) if r.newton_iters <= 12 => return Ok(eps),
            _ => eps *= 0.5,
        }
    }
    Err(Error::NewtonDiverged { eps, iters: 0, residual: f64::NAN })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub t_period: f64,
    pub eps: f64,
    pub dist_c0: f64,
    pub dist_c1: f64,
    pub corr_sup: f64,
    pub corr_normal_sup: f64,
    pub newton_iters: usize,
    pub cond_est: f64,
    pub slope_c0_running: f64,
    /// kinetic energy of the rescaled orbit, converging to L0 of the geodesic
    pub orbit_energy: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub slope_c0: f64,
    pub slope_c0_r2: f64,
    pub slope_corr: f64,
    pub slope_corr_r2: f64,
    pub slope_corr_normal: f64,
    pub c1_strictly_decreasing: bool,
}

/// For each period T: eps = T^{-1/2}, correct the orbit and record distances
/// of the rescaled solution to the base geodesic.
pub fn adiabatic_sweep(
    scenario: &Scenario,
    grid: &Grid,
    bundle: &ExpansionBundle,
    t_list: &[f64],
    threads: usize,
    opts: &OrbitOptions,
) -> Result<SweepReport> {
    let items: Vec<f64> = t_list.to_vec();
    let results: Vec<Result<(f64, OrbitResult)>> = parallel_map(items, threads, |t| {
        let eps = 1.0 / t.sqrt();
        debug_assert!((eps * eps * t - 1.0).abs() < 1e-12);
        correct_orbit(scenario, grid, bundle, eps, opts).map(|r| (t, r))
    });
    let vel0 = velocity(grid, &bundle.x0);
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut log_t = Vec::new();
    let mut log_c0 = Vec::new();
    for res in results {
        let (t, r) = res?;
        let dist_c0 = r.solution.sup_distance(&bundle.x0);
        let dv = velocity(grid, &r.solution) - &vel0;
        let dist_c1 = dist_c0 + grid.sup_norm_field(&dv);
        let orbit_energy = crate::loops::energy(grid, &r.solution);
        log_t.push(t.ln());
        log_c0.push(dist_c0.ln());
        let slope_c0_running = if log_t.len() >= 4 {
            linear_fit(&log_t, &log_c0).0
        } else {
            f64::NAN
        };
        rows.push(SweepRow {
            t_period: t,
            eps: r.eps,
            dist_c0,
            dist_c1,
            corr_sup: r.correction_sup,
            corr_normal_sup: r.correction_normal_sup,
            newton_iters: r.newton_iters,
            cond_est: r.cond_estimate,
            slope_c0_running,
            orbit_energy,
        });
    }
    let (slope_c0, _, slope_c0_r2) = linear_fit(&log_t, &log_c0);
    let log_eps: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
    let log_corr: Vec<f64> = rows.iter().map(|r| r.corr_sup.max(1e-300).ln()).collect();
    let log_corr_n: Vec<f64> = rows.iter().map(|r| r.corr_normal_sup.max(1e-300).ln()).collect();
    let (slope_corr, _, slope_corr_r2) = linear_fit(&log_eps, &log_corr);
    let (slope_corr_normal, _, _) = linear_fit(&log_eps, &log_corr_n);
    let c1_strictly_decreasing = rows.windows(2).all(|w| w[1].dist_c1 < w[0].dist_c1);
    Ok(SweepReport {
        rows,
        slope_c0,
        slope_c0_r2,
        slope_corr,
        slope_corr_r2,
        slope_corr_normal,
        c1_strictly_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::build_bundle;
    use crate::loops::circle_cover;
    use crate::num::geometric_grid;
    use std::f64::consts::PI;

    const FOUR_PI2: f64 = 4.0 * PI * PI;

    fn setup(b0: f64) -> (Scenario, Grid, ExpansionBundle) {
        let sc = Scenario::circle(b0);
        let g = Grid::spectral(256);
        let bundle = build_bundle(&sc, &g, &circle_cover(&g, 1)).unwrap();
        (sc, g, bundle)
    }

    #[test]
    fn circle_orbit_matches_exact_radius() {
        // repulsive circle: radius (1 + 4 pi^2 eps)^{-1} to 1e-10
        let (sc, g, bundle) = setup(-1.0);
        let eps = 1e-3;
        let r = correct_orbit(&sc, &g, &bundle, eps, &OrbitOptions::default()).unwrap();
        let exact = 1.0 / (1.0 + FOUR_PI2 * eps);
        for j in 0..g.n {
            let rad = (r.solution.samples[(j, 0)].powi(2) + r.solution.samples[(j, 1)].powi(2)).sqrt();
            assert!((rad - exact).abs() < 1e-10, "radius {rad} vs {exact}");
        }
        // phase gauge <y, x_eps'>_{L2} = 0 within 1e-10
        assert!(r.gauge_residual < 1e-10);
        assert!(r.energy_drift < 1e-8);
        assert!(r.newton_iters <= 12);
        // residual of the corrected orbit stays below 1e-9 of the forcing
        // scale 1/eps
        assert!(r.residual_sup <= 1e-9 / eps, "residual_sup {}", r.residual_sup);
    }

    #[test]
    fn attractive_circle_orbit_radius() {
        // attractive circle on the resonance grid: radius (1 - 4 pi^2 eps)^{-1}
        let (sc, g, bundle) = setup(1.0);
        let r = attractive_correct(&sc, &g, &bundle, 50, 100.0, &OrbitOptions::default()).unwrap();
        let exact = 1.0 / (1.0 - FOUR_PI2 * r.eps);
        let rad = (r.solution.samples[(0, 0)].powi(2) + r.solution.samples[(0, 1)].powi(2)).sqrt();
        assert!((rad - exact).abs() < 1e-10, "radius {rad} vs {exact}");
        assert!(r.eigen_distance > 0.0);
    }

    #[test]
    fn torus_meridian_orbit_matches_radial_balance() {
        // in the meridian plane the orbit is a circle about the core-circle
        // point with radius r/(1 + 4 pi^2 eps): the 3D analog of the circle
        // oracle, exercising the killing-field gauge
        let sc = Scenario::torus(2.0, 1.0, -1.0);
        let g = Grid::spectral(128);
        let theta0 = 0.6_f64;
        let x0 = crate::loops::torus_meridian(&g, 2.0, 1.0, theta0);
        let bundle = build_bundle(&sc, &g, &x0).unwrap();
        let eps = 1e-3;
        let r = correct_orbit(&sc, &g, &bundle, eps, &OrbitOptions::default()).unwrap();
        let exact = 1.0 / (1.0 + FOUR_PI2 * eps);
        let center = [2.0 * theta0.cos(), 2.0 * theta0.sin(), 0.0];
        for j in 0..g.n {
            let mut d2 = 0.0;
            for c in 0..3 {
                let d = r.solution.samples[(j, c)] - center[c];
                d2 += d * d;
            }
            assert!((d2.sqrt() - exact).abs() < 1e-9, "meridian radius {}", d2.sqrt());
        }
        assert!(r.energy_drift < 1e-8);
    }

    #[test]
    fn first_order_fallback_when_second_order_leaves_tube() {
        // at eps where eps a + eps^2 g_n exceeds rho0 but eps a does not,
        // the corrector falls back to the first-order guess
        let sc = Scenario::circle(1.0);
        let g = Grid::spectral(128);
        let bundle = build_bundle(&sc, &g, &circle_cover(&g, 1)).unwrap();
        let eps = 1.06e-2;
        assert!(matches!(bundle.assemble(&sc, eps), Err(Error::TubeExit { .. })));
        let r = correct_orbit(&sc, &g, &bundle, eps, &OrbitOptions::default()).unwrap();
        assert_eq!(r.guess, GuessKind::FirstOrder);
        let exact = 1.0 / (1.0 - FOUR_PI2 * eps);
        let rad = (r.solution.samples[(0, 0)].powi(2) + r.solution.samples[(0, 1)].powi(2)).sqrt();
        assert!((rad - exact).abs() < 1e-9, "fallback radius {rad} vs {exact}");
    }

    #[test]
    fn correction_slopes_over_eps() {
        // ||y||_sup ~ eps^3 on the circle (the expansion is exact through
        // eps^2 in the radius), comfortably above the >= 1.8 law; the normal
        // part dominates y so its slope is also > 2
        let (sc, g, bundle) = setup(-1.0);
        let eps_list = geometric_grid(1e-4, 1e-2, 4);
        let mut le = Vec::new();
        let mut lc = Vec::new();
        let mut lcn = Vec::new();
        for &eps in &eps_list {
            let r = correct_orbit(&sc, &g, &bundle, eps, &OrbitOptions::default()).unwrap();
            le.push(eps.ln());
            lc.push(r.correction_sup.ln());
            lcn.push(r.correction_normal_sup.ln());
        }
        let (slope, _, r2) = linear_fit(&le, &lc);
        assert!(slope >= 1.8, "correction slope {slope}");
        assert!(r2 > 0.99);
        let (slope_n, _, _) = linear_fit(&le, &lcn);
        assert!(slope_n > 2.0, "normal correction slope {slope_n}");
    }

    #[test]
    fn newton_quadratic_convergence() {
        let (sc, g, bundle) = setup(-1.0);
        let r = correct_orbit(&sc, &g, &bundle, 1e-3, &OrbitOptions::default()).unwrap();
        // increments above the roundoff floor must collapse quadratically
        let incs = &r.increments;
        assert!(incs.len() >= 2 && r.newton_iters <= 12);
        let mut saw_quadratic = false;
        for w in incs.windows(2) {
            if w[0] < 1e-2 && w[1] > 1e-13 {
                let ratio = w[1] / (w[0] * w[0]);
                assert!(ratio < 1e4 / 1e-3, "quadratic ratio {ratio}");
            }
            if w[0] < 1e-2 && w[1] <= 0.01 * w[0] {
                saw_quadratic = true;
            }
        }
        assert!(saw_quadratic, "no superlinear contraction seen: {incs:?}");
    }

    #[test]
    fn gauge_uniqueness_up_to_time_rotation() {
        let (sc, g, bundle) = setup(-1.0);
        let eps = 1e-3;
        let r0 = correct_orbit(&sc, &g, &bundle, eps, &OrbitOptions::default()).unwrap();
        // correcting from a time-rotated guess yields the rotated orbit
        let shift = 37;
        let x_eps = bundle.assemble(&sc, eps).unwrap().time_shift(shift);
        let r1 = correct_from_guess(
            &sc,
            &g,
            &bundle,
            &x_eps,
            eps,
            GuessKind::SecondOrder,
            &OrbitOptions::default(),
        )
        .unwrap();
        let realigned = r1.solution.time_shift(g.n - shift);
        assert!(r0.solution.sup_distance(&realigned) < 1e-9);
    }

    #[test]
    fn adiabatic_sweep_circle_rates() {
        // stiff circle (b0 = -100) keeps eps |a| small over the whole
        // T in [1e2, 1e6] window, so the leading-order law is unsaturated
        let (sc, g, bundle) = setup(-100.0);
        let t_list = geometric_grid(1e2, 1e6, 2);
        let rep = adiabatic_sweep(&sc, &g, &bundle, &t_list, 2, &OrbitOptions::default()).unwrap();
        assert!((rep.slope_c0 - -0.5).abs() < 0.1, "C0 slope {}", rep.slope_c0);
        assert!(rep.slope_c0_r2 > 0.99);
        assert!(rep.c1_strictly_decreasing);
        // energy of the rescaled orbit approaches L0(x0) = 2 pi^2
        let last = rep.rows.last().unwrap();
        assert!(last.eps * last.eps * last.t_period - 1.0 < 1e-12);
        // condition stays bounded along the sweep
        let max_cond = rep.rows.iter().map(|r| r.cond_est).fold(0.0_f64, f64::max);
        assert!(max_cond < 1e8, "cond {max_cond}");
    }

    #[test]
    fn resonance_detection_off_grid() {
        let sc = Scenario::circle(1.0);
        let g = Grid::spectral(128);
        let bundle = build_bundle(&sc, &g, &circle_cover(&g, 1)).unwrap();
        // on-grid condition is moderate
        let on = linearization_condition(&sc, &g, &bundle, resonance_epsilon(1.0, 30)).unwrap();
        assert!(on < 1e8, "on-grid condition {on}");
        // near b0/m^2 the linearized normal operator crosses zero; the probe
        // locates the crossing between the grid points
        let (eps_star, cond_star) = resonance_probe(&sc, &g, &bundle, 30, 5e-3).unwrap();
        let eps_nominal = 1.0 / (crate::num::TWO_PI * 30.0).powi(2);
        assert!(((eps_star - eps_nominal) / eps_nominal).abs() < 5e-3);
        assert!(
            cond_star > 1e6 * on,
            "resonance ratio {} (on-grid {on})",
            cond_star / on
        );
        // and Newton refuses to run there: the Jacobian gate trips
        let opts = OrbitOptions::default();
        let bad = correct_orbit(&sc, &g, &bundle, eps_star, &opts);
        assert!(matches!(bad, Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn determine_eps0_reasonable() {
        let (sc, g, bundle) = setup(-1.0);
        let eps0 = determine_eps0(&sc, &g, &bundle, &OrbitOptions::default()).unwrap();
        assert!(eps0 <= 1e-2 && eps0 > 1e-5);
    }
}
