//! Lyapunov-Schmidt reduction on loops in M: the normal fixed point v(h),
//! the reduced functional L_eps = L0 + G_eps, its gradient through the
//! envelope property, and minimization within a homotopy class.

use crate::error::{Error, Result};
use crate::geometry::Scenario;
use crate::loops::{
    self, energy, normals_along, project_tangent_with, reproject_samples, second_form_apply,
    velocity, winding, Loop, TangentField,
};
use crate::num::{apply_multiplier, Grid, TWO_PI};
use crate::periodic_ode::{nearest_eigenvalue, OdeMode};
use nalgebra::{DMatrix, DVector};

/// Pointwise coefficient fields of the normal equation.
#[derive(Debug, Clone)]
pub struct ReducedCoefficients {
    /// Q_h = |H(h)[h']|^2
    pub q: Vec<f64>,
    /// P_h = h' . H(h)[h']
    pub p: Vec<f64>,
    /// B_h = b(h)
    pub b: Vec<f64>,
}

pub fn reduced_coefficients(scenario: &Scenario, grid: &Grid, h: &Loop) -> Result<ReducedCoefficients> {
    let n = h.n_samples();
    let d = h.dim();
    let vel = velocity(grid, h);
    let mut q = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for j in 0..n {
        let x = h.point(j);
        let hd: Vec<f64> = (0..d).map(|c| vel[(j, c)]).collect();
        let w = second_form_apply(scenario, &x, &hd);
        q.push(w.dot(&w));
        p.push((0..d).map(|c| w[c] * hd[c]).sum());
        b.push(scenario.b_field(&x).0);
    }
    Ok(ReducedCoefficients { q, p, b })
}

impl ReducedCoefficients {
    /// The L1 bounds the contraction proofs lean on:
    /// ||P||_L1 <= 2 Hbar L0 and ||Q||_L1 <= 2 Hbar^2 L0.
    pub fn check_l1_bounds(&self, grid: &Grid, h_bar: f64, l0: f64) -> (f64, f64, bool) {
        let p_l1 = grid.l1_norm(&self.p);
        let q_l1 = grid.l1_norm(&self.q);
        let ok = p_l1 <= 2.0 * h_bar * l0 + 1e-9 && q_l1 <= 2.0 * h_bar * h_bar * l0 + 1e-9;
        (p_l1, q_l1, ok)
    }
}

/// dVbar/dv and d2Vbar/dv2 at u = h + v n, evaluated exactly from V.
fn vbar_derivs(scenario: &Scenario, point: &[f64], normal: &DVector<f64>, v: f64) -> (f64, f64) {
    let d = point.len();
    let u: Vec<f64> = (0..d).map(|c| point[c] + v * normal[c]).collect();
    let jet = scenario.potential_jet(&u);
    let mut dv = 0.0;
    let mut d2v = 0.0;
    for i in 0..d {
        dv += jet.g[i] * normal[i];
        for k in 0..d {
            d2v += jet.h[i][k] * normal[i] * normal[k];
        }
    }
    (dv, d2v)
}

fn vbar(scenario: &Scenario, point: &[f64], normal: &DVector<f64>, v: f64) -> f64 {
    let d = point.len();
    let u: Vec<f64> = (0..d).map(|c| point[c] + v * normal[c]).collect();
    scenario.potential(&u)
}

#[derive(Debug, Clone)]
pub struct ReducedState {
    pub v: Vec<f64>,
    pub eps: f64,
    pub mode: OdeMode,
    pub fixed_point_iters: usize,
    /// sup difference between the fixed-point and direct-Newton solutions
    pub route_diff: f64,
    /// relative residual of the normal equation at v
    pub residual_rel: f64,
    pub sup_v: f64,
    /// observed constant ||v||_sup eps^{-1/2}
    pub c_a_observed: f64,
    /// worst roundtrip error of project_to_tube over the ambient loop
    pub ambient_consistency: f64,
}

impl ReducedState {
    pub fn ambient(&self, scenario: &Scenario, h: &Loop) -> Result<Loop> {
        let normals = normals_along(scenario, h)?;
        let n = h.n_samples();
        let d = h.dim();
        let mut s = h.samples.clone();
        for j in 0..n {
            for c in 0..d {
                s[(j, c)] += self.v[j] * normals[(j, c)];
            }
        }
        Ok(Loop { samples: s, on_manifold: false })
    }
}

/// Solve the normal equation v'' - Q v = P - (1/eps) dVbar/dv along h by the
/// contraction iteration of the reduction proofs and by direct Newton
/// collocation; the two must agree.
pub fn solve_normal(
    scenario: &Scenario,
    grid: &Grid,
    h: &Loop,
    eps: f64,
    mode: OdeMode,
    a_cap: Option<f64>,
) -> Result<ReducedState> {
    let n = h.n_samples();
    let coeffs = reduced_coefficients(scenario, grid, h)?;
    let normals = normals_along(scenario, h)?;
    let points: Vec<Vec<f64>> = (0..n).map(|j| h.point(j)).collect();
    let normal_vecs: Vec<DVector<f64>> = (0..n)
        .map(|j| DVector::from_iterator(h.dim(), (0..h.dim()).map(|c| normals[(j, c)])))
        .collect();

    match mode {
        OdeMode::Repulsive => {
            let b_star = coeffs.b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if b_star >= 0.0 {
                return Err(Error::Invalid("repulsive reduction needs B_h < 0 pointwise".into()));
            }
        }
        OdeMode::Attractive => {
            // the resonance-avoiding grid keeps b0/eps half a gap away from
            // the periodic spectrum
            let b0 = scenario.b0();
            let l2p = (b0 / eps) / (TWO_PI * TWO_PI);
            let half = (l2p.sqrt() - 0.5).round() + 0.5;
            if ((l2p.sqrt() - half) / half).abs() > 1e-6 {
                let (eigen, dist) = nearest_eigenvalue(b0 / eps);
                return Err(Error::ResonantLambda { lambda0: b0 / eps, eigen, dist });
            }
            if let Some(a) = a_cap {
                let bounds = scenario.scenario_bounds(256)?;
                bounds.attractive_admissible(b0, a)?;
            }
        }
    }

    // contraction route: v <- Sigma_{h,eps}(P + (1/eps)(B_h v - dVbar/dv)),
    // where Sigma is the exact resolvent of v'' + ((1/eps)B_h - Q) v,
    // factored once per loop
    let resolvent = {
        let mut a = grid.d2.clone();
        for j in 0..n {
            a[(j, j)] += coeffs.b[j] / eps - coeffs.q[j];
        }
        a.lu()
    };
    let scale_guess = {
        let p_sup = grid.sup_norm(&coeffs.p);
        p_sup * eps / scenario.b0().abs() + 1e-14
    };
    let mut v_fp = vec![0.0; n];
    let mut fp_iters = 0;
    let mut last_inc = f64::INFINITY;
    let mut growth = 0;
    loop {
        let sigma = DVector::from_iterator(
            n,
            (0..n).map(|j| {
                let (dv, _) = vbar_derivs(scenario, &points[j], &normal_vecs[j], v_fp[j]);
                coeffs.p[j] + (coeffs.b[j] * v_fp[j] - dv) / eps
            }),
        );
        let sol = resolvent
            .solve(&sigma)
            .ok_or(Error::SingularJacobian { cond: f64::INFINITY })?;
        let inc = sol
            .iter()
            .zip(&v_fp)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        v_fp = sol.as_slice().to_vec();
        fp_iters += 1;
        // 1e-12 relative increments, with a floor at the collocation solver's
        // roundoff (increments below it are noise, not contraction failure)
        let sup_now = grid.sup_norm(&v_fp);
        if inc <= 1e-12 * scale_guess.max(sup_now) || inc <= 5e-12 * sup_now {
            break;
        }
        if inc > last_inc {
            growth += 1;
            if growth >= 3 {
                return Err(Error::ContractionFailed {
                    eps,
                    detail: format!("normal fixed point diverging (increment {inc:.3e})"),
                });
            }
        } else {
            growth = 0;
        }
        last_inc = inc;
        if fp_iters > 200 {
            return Err(Error::ContractionFailed {
                eps,
                detail: "normal fixed point did not reach 1e-12 increments".into(),
            });
        }
    }

    // direct Newton on the collocated normal equation
    let mut v = DVector::from_column_slice(&v_fp);
    for _ in 0..30 {
        let mut f = &grid.d2 * &v;
        let mut jac = grid.d2.clone();
        for j in 0..n {
            let (dv, d2v) = vbar_derivs(scenario, &points[j], &normal_vecs[j], v[j]);
            f[j] += -coeffs.q[j] * v[j] - coeffs.p[j] + dv / eps;
            jac[(j, j)] += -coeffs.q[j] + d2v / eps;
        }
        let delta = jac
            .lu()
            .solve(&f)
            .ok_or(Error::SingularJacobian { cond: f64::INFINITY })?;
        v -= &delta;
        if delta.amax() <= 1e-14 * (1.0 + v.amax()) {
            break;
        }
    }

    let route_diff = v
        .iter()
        .zip(&v_fp)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);

    let residual_rel = {
        let r = &grid.d2 * &v;
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let (dv, _) = vbar_derivs(scenario, &points[j], &normal_vecs[j], v[j]);
            let e = r[j] - coeffs.q[j] * v[j] - coeffs.p[j] + dv / eps;
            num += e * e;
            let s = coeffs.p[j].abs() + dv.abs() / eps;
            den += s * s;
        }
        (num / den.max(1e-300)).sqrt()
    };

    let sup_v = v.amax();
    if sup_v > scenario.rho0 {
        return Err(Error::TubeExit { dist: sup_v, rho0: scenario.rho0 });
    }

    let state = ReducedState {
        v: v.as_slice().to_vec(),
        eps,
        mode,
        fixed_point_iters: fp_iters,
        route_diff,
        residual_rel,
        sup_v,
        c_a_observed: sup_v / eps.sqrt(),
        ambient_consistency: 0.0,
    };
    // ambient roundtrip: project_to_tube(h + v n) must return (h, v)
    let ambient = state.ambient(scenario, h)?;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let (hp, vp) = scenario.project_to_tube(&ambient.point(j))?;
        let mut dh: f64 = 0.0;
        for c in 0..h.dim() {
            dh = dh.max((hp[c] - h.samples[(j, c)]).abs());
        }
        worst = worst.max(dh).max((vp - state.v[j]).abs());
    }
    Ok(ReducedState { ambient_consistency: worst, ..state })
}

/// Reduced energy and gap: L_eps = Ebar_eps(h, v(h)), G_eps = L_eps - L0.
#[derive(Debug, Clone)]
pub struct EnergyGap {
    pub l0: f64,
    pub l_eps: f64,
    /// direct difference L_eps - L0
    pub g_direct: f64,
    /// the classical closed-form term (1/eps) int((1/2) v dVbar/dv - Vbar);
    /// vanishes identically for potentials quadratic in the distance
    pub g_half_identity: f64,
    /// (1/2) int v P_h, the cross term the weak equation leaves in the gap
    pub p_term: f64,
    /// completed closed form: g_half_identity + p_term; must match g_direct
    pub g_closed: f64,
}

pub fn reduced_energy(
    scenario: &Scenario,
    grid: &Grid,
    h: &Loop,
    eps: f64,
    state: &ReducedState,
) -> Result<EnergyGap> {
    let n = h.n_samples();
    let coeffs = reduced_coefficients(scenario, grid, h)?;
    let normals = normals_along(scenario, h)?;
    let l0 = energy(grid, h);
    let vdot = {
        let vv = DVector::from_column_slice(&state.v);
        &grid.d1 * vv
    };
    let mut quad = 0.0;
    let mut pot = 0.0;
    let mut half_id = 0.0;
    let mut p_term = 0.0;
    for j in 0..n {
        let v = state.v[j];
        quad += 0.5 * (vdot[j] * vdot[j] + coeffs.q[j] * v * v) + v * coeffs.p[j];
        let pt = h.point(j);
        let nv = DVector::from_iterator(h.dim(), (0..h.dim()).map(|c| normals[(j, c)]));
        let vb = vbar(scenario, &pt, &nv, v);
        let (dv, _) = vbar_derivs(scenario, &pt, &nv, v);
        pot += vb;
        half_id += 0.5 * v * dv - vb;
        p_term += 0.5 * v * coeffs.p[j];
    }
    let nf = n as f64;
    let l_eps = l0 + quad / nf - pot / (nf * eps);
    let g_direct = l_eps - l0;
    let g_half_identity = half_id / (nf * eps);
    let p_term = p_term / nf;
    Ok(EnergyGap {
        l0,
        l_eps,
        g_direct,
        g_half_identity,
        p_term,
        g_closed: g_half_identity + p_term,
    })
}

/// L2 gradient of the reduced functional via the envelope property: the
/// partial h-gradient of Ebar_eps at frozen v(h), assembled exactly from the
/// third-derivative jets of the distance function, projected tangentially.
pub fn reduced_gradient(
    scenario: &Scenario,
    grid: &Grid,
    h: &Loop,
    eps: f64,
    state: &ReducedState,
) -> Result<TangentField> {
    let n = h.n_samples();
    let d = h.dim();
    let vel = velocity(grid, h);
    let normals = normals_along(scenario, h)?;
    let mut grad = -(&grid.d2 * &h.samples);

    // pointwise caches
    let mut w_field = DMatrix::zeros(n, d); // W = D^2 d [h']
    let mut hw_field = DMatrix::zeros(n, d); // D^2 d [W]
    for j in 0..n {
        let x = h.point(j);
        let hd: Vec<f64> = (0..d).map(|c| vel[(j, c)]).collect();
        let w = second_form_apply(scenario, &x, &hd);
        let hw = second_form_apply(scenario, &x, w.as_slice());
        for c in 0..d {
            w_field[(j, c)] = w[c];
            hw_field[(j, c)] = hw[c];
        }
    }

    // velocity-dependence terms: -D1 (v^2 Hw) - 2 D1 (v W)
    let mut vel_terms = DMatrix::zeros(n, d);
    for j in 0..n {
        let v = state.v[j];
        for c in 0..d {
            vel_terms[(j, c)] = v * v * hw_field[(j, c)] + 2.0 * v * w_field[(j, c)];
        }
    }
    let vel_terms = -(&grid.d1 * vel_terms);
    grad += vel_terms;

    for j in 0..n {
        let x = h.point(j);
        let v = state.v[j];
        let jet = scenario.distance_jet(&x);
        let hd: Vec<f64> = (0..d).map(|c| vel[(j, c)]).collect();
        let wv: Vec<f64> = (0..d).map(|c| w_field[(j, c)]).collect();
        // point-dependence of |W|^2 and of h'.W through the third derivative
        for c in 0..d {
            let mut t3_w = 0.0;
            let mut t3_hh = 0.0;
            for a in 0..d {
                for bb in 0..d {
                    t3_w += jet.t[a][bb][c] * hd[a] * wv[bb];
                    t3_hh += jet.t[a][bb][c] * hd[a] * hd[bb];
                }
            }
            grad[(j, c)] += v * v * t3_w + v * t3_hh;
        }
        // potential term: -(1/eps) (I + v D^2 d) V'(u)
        let u: Vec<f64> = (0..d).map(|c| x[c] + v * normals[(j, c)]).collect();
        let gv = scenario.gradient(&u);
        let d2d_gv = second_form_apply(scenario, &x, gv.as_slice());
        for c in 0..d {
            grad[(j, c)] -= (gv[c] + v * d2d_gv[c]) / eps;
        }
    }
    Ok(project_tangent_with(&normals, &grad))
}

#[derive(Debug, Clone, Copy)]
pub struct ReduceOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub initial_step: f64,
    pub a_cap: Option<f64>,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { max_iters: 5000, grad_tol: 1e-6, initial_step: 0.25, a_cap: None }
    }
}

#[derive(Debug)]
pub struct ReducedMinimum {
    pub h: Loop,
    pub l_eps: f64,
    pub l0: f64,
    pub g_eps: f64,
    pub iters: usize,
    pub grad_norm: f64,
    /// gradient norm of the bare loop energy at the minimizer: must shrink
    /// to O(sqrt(eps)) as the minimizer approaches a geodesic
    pub l0_grad_norm: f64,
    pub state: ReducedState,
}

/// Descent on L_eps within a homotopy class: same preconditioned backtracking
/// scheme as the geodesic search, with the reduced gradient and per-step
/// renormalization of the normal fixed point.
pub fn minimize_reduced(
    scenario: &Scenario,
    grid: &Grid,
    seed: &Loop,
    class: &[i64],
    eps: f64,
    mode: OdeMode,
    opts: &ReduceOptions,
) -> Result<ReducedMinimum> {
    let start_class = winding(scenario, seed);
    if start_class != class {
        return Err(Error::ClassDrift { from: class.to_vec(), to: start_class });
    }
    let mut h = reproject_samples(scenario, &seed.samples)?;
    let mut state = solve_normal(scenario, grid, &h, eps, mode, opts.a_cap)?;
    let mut l_eps = reduced_energy(scenario, grid, &h, eps, &state)?.l_eps;
    let mut step = opts.initial_step;
    let mut grad_norm = f64::INFINITY;
    let mut iters = 0;
    for iter in 0..opts.max_iters {
        iters = iter;
        let g = reduced_gradient(scenario, grid, &h, eps, &state)?;
        grad_norm = loops::l2_norm_field(grid, &g);
        if grad_norm <= opts.grad_tol {
            break;
        }
        let p = precondition(scenario, &h, &g)?;
        let descent = g
            .vectors
            .iter()
            .zip(p.vectors.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / grid.n as f64;
        let noise_floor = 1e-12 * (1.0 + l_eps.abs());
        step = (step * 2.0).clamp(1e-2, 2.0);
        let mut accepted = false;
        while step > 1e-13 {
            let trial_samples = &h.samples - &p.vectors * step;
            let trial = match reproject_samples(scenario, &trial_samples) {
                Ok(t) => t,
                Err(_) => {
                    step *= 0.5;
                    continue;
                }
            };
            let tstate = match solve_normal(scenario, grid, &trial, eps, mode, opts.a_cap) {
                Ok(s) => s,
                Err(_) => {
                    step *= 0.5;
                    continue;
                }
            };
            let tl = reduced_energy(scenario, grid, &trial, eps, &tstate)?.l_eps;
            let ok = if step * descent > noise_floor {
                tl <= l_eps - 1e-4 * step * descent
            } else {
                let gt = reduced_gradient(scenario, grid, &trial, eps, &tstate)?;
                loops::l2_norm_field(grid, &gt) <= grad_norm * (1.0 - 1e-3)
                    && tl <= l_eps + noise_floor
            };
            if ok {
                let tclass = winding(scenario, &trial);
                if tclass != class {
                    return Err(Error::ClassDrift { from: class.to_vec(), to: tclass });
                }
                h = trial;
                state = tstate;
                l_eps = tl;
                step = (step * 1.5).min(2.0);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if grad_norm <= 100.0 * opts.grad_tol {
                break;
            }
            return Err(Error::MaxItersExceeded { max_iters: iter, grad_norm });
        }
    }
    if grad_norm > 100.0 * opts.grad_tol {
        return Err(Error::MaxItersExceeded { max_iters: opts.max_iters, grad_norm });
    }
    let gap = reduced_energy(scenario, grid, &h, eps, &state)?;
    let l0_grad_norm =
        loops::l2_norm_field(grid, &loops::energy_gradient(scenario, grid, &h)?);
    Ok(ReducedMinimum {
        l_eps: gap.l_eps,
        l0: gap.l0,
        g_eps: gap.g_direct,
        iters,
        grad_norm,
        l0_grad_norm,
        state,
        h,
    })
}

fn precondition(scenario: &Scenario, h: &Loop, g: &TangentField) -> Result<TangentField> {
    let n = g.vectors.nrows();
    let d = g.vectors.ncols();
    let mut sm = DMatrix::zeros(n, d);
    for c in 0..d {
        let col: Vec<f64> = (0..n).map(|j| g.vectors[(j, c)]).collect();
        let s = apply_multiplier(&col, |k| 1.0 / (1.0 + (TWO_PI * k as f64).powi(2)));
        for j in 0..n {
            sm[(j, c)] = s[j];
        }
    }
    let normals = normals_along(scenario, h)?;
    Ok(project_tangent_with(&normals, &sm))
}

/// Random smooth loop on M in a given class with bounded energy, for the
/// reduction property trials.
pub fn random_loop(
    scenario: &Scenario,
    grid: &Grid,
    class: &[i64],
    amplitude: f64,
    rng: &mut impl rand::Rng,
) -> Result<Loop> {
    let base = loops::seed_loop(scenario, grid, class, 0.0)?;
    let n = grid.n;
    let d = base.dim();
    let mut s = base.samples.clone();
    for c in 0..d {
        for k in 1..=4u32 {
            let a: f64 = rng.random_range(-amplitude..amplitude) / k as f64;
            let b: f64 = rng.random_range(-amplitude..amplitude) / k as f64;
            for j in 0..n {
                let t = grid.ts[j];
                s[(j, c)] += a * (TWO_PI * k as f64 * t).cos() + b * (TWO_PI * k as f64 * t).sin();
            }
        }
    }
    reproject_samples(scenario, &s)
}
