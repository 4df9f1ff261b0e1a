//! Second-order approximate orbit x_eps = x0 + eps f + eps^2 g built from a
//! closed geodesic: the normal profile a(t), the tangential correction f^T,
//! the second-order normal term g_n, and the residual law of the pseudo
//! critical point.

use crate::error::{Error, Result};
use crate::geometry::Scenario;
use crate::loops::{
    self, constrained_jacobi_solve, energy_gradient, jacobi_system, l2_norm_field, loop_frame,
    second_form_apply, velocity, Loop, LoopFrame, TangentField,
};
use crate::num::{h_minus1_norm, Grid};
use nalgebra::{DMatrix, DVector};

const GEODESIC_TOL: f64 = 1e-6;
const COND_LIMIT: f64 = 1e10;

/// Per-sample geometric data along the base geodesic.
#[derive(Debug, Clone)]
pub struct SampleGeometry {
    pub normal: DVector<f64>,
    pub velocity: DVector<f64>,
    /// H[x'] as an ambient vector
    pub h_xdot: DVector<f64>,
    /// H[x', x']
    pub hxx: f64,
    /// |H[x']|^2 = H^2[x', x']
    pub h2xx: f64,
    pub b: f64,
    /// tangential gradient of b
    pub grad_b_t: DVector<f64>,
    pub dn_b: f64,
    /// full third normal derivative of V (3 D_n b plus any cubic term)
    pub d3_nnn: f64,
}

pub fn sample_geometry(scenario: &Scenario, grid: &Grid, x0: &Loop) -> Result<Vec<SampleGeometry>> {
    let n = x0.n_samples();
    let d = x0.dim();
    let vel = velocity(grid, x0);
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let x = x0.point(j);
        let normal = scenario.normal_at(&x)?;
        let v = DVector::from_iterator(d, (0..d).map(|c| vel[(j, c)]));
        let h_xdot = second_form_apply(scenario, &x, v.as_slice());
        let hxx = h_xdot.dot(&v);
        let h2xx = h_xdot.dot(&h_xdot);
        let (b, grad_b) = scenario.b_field(&x);
        let dn_b = grad_b.dot(&normal);
        let grad_b_t = &grad_b - &normal * dn_b;
        let d3_nnn = 3.0 * dn_b + 6.0 * scenario.cubic();
        out.push(SampleGeometry {
            normal,
            velocity: v,
            h_xdot,
            hxx,
            h2xx,
            b,
            grad_b_t,
            dn_b,
            d3_nnn,
        });
    }
    Ok(out)
}

/// f_n(t) = a(t) = H[x', x'] / b along the geodesic, with the consistency
/// check (x'')_n = -H[x', x'].
pub fn compute_a(scenario: &Scenario, grid: &Grid, x0: &Loop) -> Result<(Vec<f64>, f64)> {
    let geom = sample_geometry(scenario, grid, x0)?;
    let acc = &grid.d2 * &x0.samples;
    let mut a = Vec::with_capacity(x0.n_samples());
    let mut consistency: f64 = 0.0;
    for (j, gj) in geom.iter().enumerate() {
        a.push(gj.hxx / gj.b);
        let acc_n: f64 = (0..x0.dim()).map(|c| acc[(j, c)] * gj.normal[c]).sum();
        consistency = consistency.max((acc_n + gj.hxx).abs());
    }
    Ok((a, consistency))
}

#[derive(Debug, Clone)]
pub struct FtDiagnostics {
    pub cond: f64,
    /// residual of the compatibility identity (test field x')
    pub compat_residual: f64,
    /// H^1 pairing of f^T with x'
    pub orto_residual: f64,
    /// number of symmetry fields deflated beyond time translation
    pub deflated: usize,
    /// consistency of the full weak equation including deflated directions
    pub consistency_residual: f64,
}

/// Solve the tangential first-order system D^2 L0 [z, f^T] = RHS(z) with
/// f^T orthogonal to x' and to the declared scenario isometries. Degenerate
/// directions not generated by those isometries make the bordered system
/// singular and are rejected.
pub fn solve_f_t(
    scenario: &Scenario,
    grid: &Grid,
    x0: &Loop,
) -> Result<(TangentField, FtDiagnostics)> {
    let gnorm = l2_norm_field(grid, &energy_gradient(scenario, grid, x0)?);
    if gnorm > GEODESIC_TOL {
        return Err(Error::NotAGeodesic { grad_norm: gnorm, tol: GEODESIC_TOL });
    }
    let n = x0.n_samples();
    let d = x0.dim();
    let k = d - 1;
    let geom = sample_geometry(scenario, grid, x0)?;
    let sys = jacobi_system(scenario, grid, x0)?;
    let a: Vec<f64> = geom.iter().map(|g| g.hxx / g.b).collect();
    let a_dot = {
        let av = DVector::from_column_slice(&a);
        &grid.d1 * av
    };

    // dual vector of RHS(z) = -int a H[x', nabla z] + (1/2) int a^2 gradT b . z
    //                         + int H[x', z] a'
    let mut w1 = DVector::zeros(n * k);
    let mut w2 = DVector::zeros(n * k);
    for j in 0..n {
        let gj = &geom[j];
        for i in 0..k {
            let ei = DVector::from_iterator(d, (0..d).map(|c| sys.frame.basis[i][(j, c)]));
            let h_dot_ei = gj.h_xdot.dot(&ei);
            w1[i * n + j] = a[j] * h_dot_ei / n as f64;
            w2[i * n + j] =
                (0.5 * a[j] * a[j] * gj.grad_b_t.dot(&ei) + a_dot[j] * h_dot_ei) / n as f64;
        }
    }
    // transpose of the covariant-derivative map applied through the bilinear
    // assembly: rebuild A once more for the dual pairing
    let a_map = covariant_matrix(&sys, grid);
    let rhs = -(&a_map.transpose() * &w1) + &w2;

    // constraints: time translation plus declared isometries along the loop
    let vel = velocity(grid, x0);
    let mut constraints = vec![TangentField { vectors: vel.clone() }];
    let mut killing_count = 0;
    {
        let mut kf = DMatrix::zeros(n, d);
        let probe = scenario.killing_fields(&x0.point(0));
        for which in 0..probe.len() {
            for j in 0..n {
                let v = &scenario.killing_fields(&x0.point(j))[which];
                for c in 0..d {
                    kf[(j, c)] = v[c];
                }
            }
            constraints.push(TangentField { vectors: kf.clone() });
            killing_count += 1;
        }
    }

    let (coeffs, cond, multiplier_norm) =
        constrained_jacobi_solve(&sys, &rhs, &constraints, COND_LIMIT)?;
    let f_t = sys.field_of(&coeffs);

    // The bordered solve gives B f + C mu = rhs exactly, so |mu| measures the
    // component of the functional along the deflated directions: the weak
    // equation holds against every test field iff mu vanishes. Scale by the
    // size of the functional's ingredients before cancellation.
    let ingredient_scale =
        std::f64::consts::PI * n as f64 * w1.norm() + w2.norm() + 1e-300;
    let consistency_residual = multiplier_norm / ingredient_scale;
    if consistency_residual > 1e-8 {
        return Err(Error::DegenerateGeodesic {
            reason: format!(
                "first-order system inconsistent along degenerate directions \
                 (obstruction {consistency_residual:.3e})"
            ),
        });
    }

    // compatibility identity: RHS(x') = 0
    let vel_c = sys.coeffs_of(&TangentField { vectors: vel });
    let compat_residual = rhs.dot(&vel_c).abs() / vel_c.norm().max(1e-12);

    // orthogonality in the tangent H^1 inner product (nabla x' = 0 on a geodesic,
    // so the L2 pairing decides)
    let orto_residual = {
        let vel2 = velocity(grid, x0);
        let mut dot = 0.0;
        for j in 0..n {
            for c in 0..d {
                dot += f_t.vectors[(j, c)] * vel2[(j, c)];
            }
        }
        (dot / n as f64).abs()
    };

    Ok((
        f_t,
        FtDiagnostics {
            cond,
            compat_residual,
            orto_residual,
            deflated: killing_count,
            consistency_residual,
        },
    ))
}

/// Coefficient-space matrix of the covariant derivative in a loop frame.
fn covariant_matrix(sys: &crate::loops::JacobiSystem, grid: &Grid) -> DMatrix<f64> {
    let n = grid.n;
    let k = sys.basis_len();
    let d = sys.frame.normal.ncols();
    let mut a = DMatrix::zeros(n * k, n * k);
    for (l, el) in sys.frame.basis.iter().enumerate() {
        for m in 0..n {
            let col = l * n + m;
            for j in 0..n {
                let w = grid.d1[(j, m)];
                if w == 0.0 {
                    continue;
                }
                for (i, ei) in sys.frame.basis.iter().enumerate() {
                    let mut dot = 0.0;
                    for c in 0..d {
                        dot += ei[(j, c)] * el[(m, c)];
                    }
                    a[(i * n + j, col)] += w * dot;
                }
            }
        }
    }
    a
}

/// g_n from the second-order normal equation:
/// b g_n = -(1/2)(b H[fT,fT] + 2 a gradT b . fT + D3_nnn a^2 - 2 H[x', nabla fT])
///         - a'' + a H^2[x', x'] + d/dt H[x', fT].
pub fn compute_g_n(
    scenario: &Scenario,
    grid: &Grid,
    x0: &Loop,
    a: &[f64],
    f_t: &TangentField,
) -> Result<Vec<f64>> {
    let n = x0.n_samples();
    let d = x0.dim();
    let geom = sample_geometry(scenario, grid, x0)?;
    let a_dd = {
        let av = DVector::from_column_slice(a);
        &grid.d2 * av
    };
    let nabla_ft = loops::covariant_derivative(scenario, grid, x0, f_t)?;
    let h_x_ft: Vec<f64> = (0..n)
        .map(|j| {
            let ftj: Vec<f64> = (0..d).map(|c| f_t.vectors[(j, c)]).collect();
            let hf = second_form_apply(scenario, &x0.point(j), &ftj);
            geom[j].velocity.dot(&hf)
        })
        .collect();
    let ddt_h_x_ft = {
        let hv = DVector::from_column_slice(&h_x_ft);
        &grid.d1 * hv
    };
    let mut g_n = Vec::with_capacity(n);
    for j in 0..n {
        let gj = &geom[j];
        let ftj: Vec<f64> = (0..d).map(|c| f_t.vectors[(j, c)]).collect();
        let hf = second_form_apply(scenario, &x0.point(j), &ftj);
        let h_ftft: f64 = (0..d).map(|c| hf[c] * ftj[c]).sum();
        let gradtb_ft: f64 = (0..d).map(|c| gj.grad_b_t[c] * ftj[c]).sum();
        let h_x_nabla_ft: f64 = (0..d).map(|c| gj.h_xdot[c] * nabla_ft.vectors[(j, c)]).sum();
        let bracket = gj.b * h_ftft + 2.0 * a[j] * gradtb_ft + gj.d3_nnn * a[j] * a[j]
            - 2.0 * h_x_nabla_ft;
        let rhs = -0.5 * bracket - a_dd[j] + a[j] * gj.h2xx + ddt_h_x_ft[j];
        g_n.push(rhs / gj.b);
    }
    Ok(g_n)
}

/// Complete second-order bundle over a nondegenerate geodesic.
#[derive(Debug, Clone)]
pub struct ExpansionBundle {
    pub x0: Loop,
    pub frame: LoopFrame,
    pub a: Vec<f64>,
    pub f_t: TangentField,
    pub g_n: Vec<f64>,
    pub a_consistency: f64,
    pub ft_diagnostics: FtDiagnostics,
}

pub fn build_bundle(scenario: &Scenario, grid: &Grid, x0: &Loop) -> Result<ExpansionBundle> {
    let (a, a_consistency) = compute_a(scenario, grid, x0)?;
    let (f_t, ft_diagnostics) = solve_f_t(scenario, grid, x0)?;
    let g_n = compute_g_n(scenario, grid, x0, &a, &f_t)?;
    let frame = loop_frame(scenario, grid, x0)?;
    Ok(ExpansionBundle {
        x0: x0.clone(),
        frame,
        a,
        f_t,
        g_n,
        a_consistency,
        ft_diagnostics,
    })
}

impl ExpansionBundle {
    /// First-order displacement field f = f^T + a n.
    pub fn f_field(&self) -> DMatrix<f64> {
        let n = self.x0.n_samples();
        let d = self.x0.dim();
        let mut f = self.f_t.vectors.clone();
        for j in 0..n {
            for c in 0..d {
                f[(j, c)] += self.a[j] * self.frame.normal[(j, c)];
            }
        }
        f
    }

    /// x_eps = x0 + eps (fT + a n) + eps^2 g_n n, off-manifold.
    pub fn assemble(&self, scenario: &Scenario, eps: f64) -> Result<Loop> {
        assert!(eps >= 0.0);
        let n = self.x0.n_samples();
        let d = self.x0.dim();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            worst = worst.max((eps * self.a[j] + eps * eps * self.g_n[j]).abs());
        }
        if worst > scenario.rho0 {
            return Err(Error::TubeExit { dist: worst, rho0: scenario.rho0 });
        }
        let mut s = self.x0.samples.clone();
        for j in 0..n {
            for c in 0..d {
                s[(j, c)] += eps * self.f_t.vectors[(j, c)]
                    + (eps * self.a[j] + eps * eps * self.g_n[j]) * self.frame.normal[(j, c)];
            }
        }
        Ok(Loop { samples: s, on_manifold: false })
    }

    /// Order-1 truncation x0 + eps f (used for the first-order residual law).
    pub fn assemble_order1(&self, scenario: &Scenario, eps: f64) -> Result<Loop> {
        let n = self.x0.n_samples();
        let d = self.x0.dim();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            worst = worst.max((eps * self.a[j]).abs());
        }
        if worst > scenario.rho0 {
            return Err(Error::TubeExit { dist: worst, rho0: scenario.rho0 });
        }
        let mut s = self.x0.samples.clone();
        for j in 0..n {
            for c in 0..d {
                s[(j, c)] += eps * self.f_t.vectors[(j, c)]
                    + eps * self.a[j] * self.frame.normal[(j, c)];
            }
        }
        Ok(Loop { samples: s, on_manifold: false })
    }

    /// Closed-form expansion coefficients of V'(x_eps) = eps alpha + eps^2 beta.
    pub fn alpha_beta_closed(&self, scenario: &Scenario, grid: &Grid) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.x0.n_samples();
        let d = self.x0.dim();
        let geom = sample_geometry(scenario, grid, &self.x0)?;
        let mut alpha = DMatrix::zeros(n, d);
        let mut beta = DMatrix::zeros(n, d);
        for j in 0..n {
            let gj = &geom[j];
            let a = self.a[j];
            let ftj: Vec<f64> = (0..d).map(|c| self.f_t.vectors[(j, c)]).collect();
            let hf = second_form_apply(scenario, &self.x0.point(j), &ftj);
            let h_ftft: f64 = (0..d).map(|c| hf[c] * ftj[c]).sum();
            let gradtb_ft: f64 = (0..d).map(|c| gj.grad_b_t[c] * ftj[c]).sum();
            let beta_n = gj.b * self.g_n[j]
                + 0.5 * (gj.b * h_ftft + 2.0 * a * gradtb_ft + gj.d3_nnn * a * a);
            for c in 0..d {
                alpha[(j, c)] = gj.b * a * gj.normal[c];
                beta[(j, c)] = beta_n * gj.normal[c]
                    + a * gj.b * hf[c]
                    + 0.5 * a * a * gj.grad_b_t[c];
            }
        }
        Ok((alpha, beta))
    }
}

/// Residual report for the assembled pseudo orbit.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// H^{-1}-dual norm of x_eps'' + (1/eps) V'(x_eps)
    pub dual_norm: f64,
    pub sup_norm: f64,
    /// leading-order cancellation: ||x0'' + b a n||_sup
    pub eqfn_err: f64,
    /// first-order cancellation: ||f'' + beta||_sup
    pub eqftgn_err: f64,
}

pub fn residual(
    scenario: &Scenario,
    grid: &Grid,
    bundle: &ExpansionBundle,
    eps: f64,
) -> Result<ResidualReport> {
    let x_eps = bundle.assemble(scenario, eps)?;
    let n = x_eps.n_samples();
    let d = x_eps.dim();
    // every sample must remain inside the tube for V' to be meaningful
    for j in 0..n {
        scenario.project_to_tube(&x_eps.point(j))?;
    }
    let acc = &grid.d2 * &x_eps.samples;
    let mut field = DMatrix::zeros(n, d);
    for j in 0..n {
        let grad = scenario.gradient(&x_eps.point(j));
        for c in 0..d {
            field[(j, c)] = acc[(j, c)] + grad[c] / eps;
        }
    }
    let dual_norm = h_minus1_norm(&field);
    let sup_norm = grid.sup_norm_field(&field);

    // order-by-order cancellations
    let acc0 = &grid.d2 * &bundle.x0.samples;
    let geom = sample_geometry(scenario, grid, &bundle.x0)?;
    let mut eqfn_err: f64 = 0.0;
    for j in 0..n {
        let mut s = 0.0;
        for c in 0..d {
            let e = acc0[(j, c)] + geom[j].b * bundle.a[j] * bundle.frame.normal[(j, c)];
            s += e * e;
        }
        eqfn_err = eqfn_err.max(s.sqrt());
    }
    let (_, beta) = bundle.alpha_beta_closed(scenario, grid)?;
    let facc = &grid.d2 * bundle.f_field();
    let mut eqftgn_err: f64 = 0.0;
    for j in 0..n {
        let mut s = 0.0;
        for c in 0..d {
            let e = facc[(j, c)] + beta[(j, c)];
            s += e * e;
        }
        eqftgn_err = eqftgn_err.max(s.sqrt());
    }
    Ok(ResidualReport { dual_norm, sup_norm, eqfn_err, eqftgn_err })
}

/// Residual sweep across an epsilon grid (dual norms), for slope fits.
pub fn residual_sweep(
    scenario: &Scenario,
    grid: &Grid,
    bundle: &ExpansionBundle,
    eps_list: &[f64],
) -> Result<Vec<(f64, f64)>> {
    eps_list
        .iter()
        .map(|&e| residual(scenario, grid, bundle, e).map(|r| (e, r.dual_norm)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct AlphaBetaReport {
    pub alpha_rel_err: f64,
    pub beta_rel_err: f64,
}

/// Fit V'(x0 + eps f + eps^2 g) = eps alpha + eps^2 beta + eps^3 rho across
/// an epsilon list and compare the fitted fields with the closed forms.
pub fn verify_alpha_beta(
    scenario: &Scenario,
    grid: &Grid,
    bundle: &ExpansionBundle,
    eps_list: &[f64],
) -> Result<AlphaBetaReport> {
    assert!(eps_list.len() >= 4, "need at least 4 epsilons for the cubic fit");
    let n = bundle.x0.n_samples();
    let d = bundle.x0.dim();
    let m = eps_list.len();
    // regression matrix for [eps, eps^2, eps^3]
    let design = DMatrix::from_fn(m, 3, |r, c| eps_list[r].powi(c as i32 + 1));
    let normal_eqs = design.transpose() * &design;
    let lu = normal_eqs.lu();

    let mut values = vec![DVector::zeros(m); n * d];
    for (r, &eps) in eps_list.iter().enumerate() {
        let x_eps = bundle.assemble(scenario, eps)?;
        for j in 0..n {
            let grad = scenario.gradient(&x_eps.point(j));
            for c in 0..d {
                values[j * d + c][r] = grad[c];
            }
        }
    }
    let (alpha_cf, beta_cf) = bundle.alpha_beta_closed(scenario, grid)?;
    let mut alpha_fit = DMatrix::zeros(n, d);
    let mut beta_fit = DMatrix::zeros(n, d);
    for j in 0..n {
        for c in 0..d {
            let rhs = design.transpose() * &values[j * d + c];
            let sol = lu.solve(&rhs).ok_or(Error::SingularJacobian { cond: f64::INFINITY })?;
            alpha_fit[(j, c)] = sol[0];
            beta_fit[(j, c)] = sol[1];
        }
    }
    let alpha_scale = grid.sup_norm_field(&alpha_cf).max(1e-12);
    let beta_scale = grid.sup_norm_field(&beta_cf).max(1e-12);
    let alpha_rel_err = grid.sup_norm_field(&(&alpha_fit - &alpha_cf)) / alpha_scale;
    let beta_rel_err = grid.sup_norm_field(&(&beta_fit - &beta_cf)) / beta_scale;
    Ok(AlphaBetaReport { alpha_rel_err, beta_rel_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loops::{circle_cover, sphere_great_circle, torus_meridian};
    use crate::num::{geometric_grid, linear_fit, Grid};
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::spectral(256)
    }

    const FOUR_PI2: f64 = 4.0 * PI * PI;

    #[test]
    fn a_profile_circle_sphere_torus() {
        let g = grid();
        // circle b0 = -1, speed 2 pi, H = 1: a = (2 pi)^2 / (-1)
        let sc = Scenario::circle(-1.0);
        let (a, cons) = compute_a(&sc, &g, &circle_cover(&g, 1)).unwrap();
        for &v in &a {
            assert!((v - -FOUR_PI2).abs() < 1e-8);
        }
        assert!(cons < 1e-8);

        // sphere b0 = -2, great circle: a = (2 pi)^2 / (-2)
        let ss = Scenario::sphere(-2.0);
        let (a, _) = compute_a(&ss, &g, &sphere_great_circle(&g)).unwrap();
        for &v in &a {
            assert!((v - -2.0 * PI * PI).abs() < 1e-8);
        }

        // torus meridian r = 1: H[x',x'] = (1/r)(2 pi r)^2 = 4 pi^2
        let st = Scenario::torus(2.0, 1.0, -1.0);
        let (a, _) = compute_a(&st, &g, &torus_meridian(&g, 2.0, 1.0, 0.0)).unwrap();
        for &v in &a {
            assert!((v - -FOUR_PI2).abs() < 1e-8);
        }
    }

    #[test]
    fn f_t_vanishes_on_circle_and_meridian() {
        let g = grid();
        let sc = Scenario::circle(-1.0);
        let (ft, diag) = solve_f_t(&sc, &g, &circle_cover(&g, 1)).unwrap();
        assert!(g.sup_norm_field(&ft.vectors) < 1e-8, "circle f^T must vanish");
        assert!(diag.compat_residual < 1e-8);
        assert!(diag.orto_residual < 1e-8);

        let st = Scenario::torus(2.0, 1.0, -1.0);
        let (ft, diag) = solve_f_t(&st, &g, &torus_meridian(&g, 2.0, 1.0, 0.0)).unwrap();
        assert!(
            g.sup_norm_field(&ft.vectors) < 1e-7,
            "meridian f^T must vanish, got {}",
            g.sup_norm_field(&ft.vectors)
        );
        assert!(diag.deflated == 1, "torus rotation must be deflated");
        assert!(diag.compat_residual < 1e-8);
    }

    #[test]
    fn sphere_great_circle_rejected() {
        let g = grid();
        let sc = Scenario::sphere(-2.0);
        let res = solve_f_t(&sc, &g, &sphere_great_circle(&g));
        assert!(
            matches!(res, Err(Error::DegenerateGeodesic { .. })),
            "rotational Jacobi fields must trigger rejection"
        );
    }

    #[test]
    fn g_n_circle_oracle() {
        // b0 = -1: g_n = a H^2[x',x'] / b0 = (-4 pi^2)(4 pi^2)/(-1) = 16 pi^4,
        // matching the eps^2 coefficient of the exact radius (1 + 4 pi^2 eps)^{-1}
        let g = grid();
        let sc = Scenario::circle(-1.0);
        let bundle = build_bundle(&sc, &g, &circle_cover(&g, 1)).unwrap();
        let expect = 16.0 * PI.powi(4);
        for &v in &bundle.g_n {
            assert!((v - expect).abs() < 1e-8 * expect, "g_n = {v}");
        }
        // torus meridian r = 1: same value
        let st = Scenario::torus(2.0, 1.0, -1.0);
        let bt = build_bundle(&st, &g, &torus_meridian(&g, 2.0, 1.0, 0.0)).unwrap();
        for &v in &bt.g_n {
            assert!((v - expect).abs() < 1e-7 * expect, "meridian g_n = {v}");
        }
    }

    #[test]
    fn assembled_radius_matches_exact_series() {
        let g = grid();
        let sc = Scenario::circle(-1.0);
        let bundle = build_bundle(&sc, &g, &circle_cover(&g, 1)).unwrap();
        let eps = 1e-3;
        let x_eps = bundle.assemble(&sc, eps).unwrap();
        let radius = (x_eps.samples[(0, 0)].powi(2) + x_eps.samples[(0, 1)].powi(2)).sqrt();
        let series = 1.0 - FOUR_PI2 * eps + (FOUR_PI2 * eps).powi(2);
        assert!((radius - series).abs() < 1e-12);
        // eps = 0 reproduces x0 exactly
        let x_0 = bundle.assemble(&sc, 0.0).unwrap();
        assert!(x_0.sup_distance(&bundle.x0) < 1e-15);
        // tube exit at large eps
        assert!(matches!(bundle.assemble(&sc, 0.1), Err(Error::TubeExit { .. })));
    }

    #[test]
    fn residual_slope_two_on_circle() {
        let g = grid();
        let sc = Scenario::circle(-1.0);
        let bundle = build_bundle(&sc, &g, &circle_cover(&g, 1)).unwrap();
        let eps_list = geometric_grid(1e-4, 1e-2, 8);
        let sweep = residual_sweep(&sc, &g, &bundle, &eps_list).unwrap();
        let xs: Vec<f64> = sweep.iter().map(|(e, _)| e.ln()).collect();
        let ys: Vec<f64> = sweep.iter().map(|(_, r)| r.ln()).collect();
        let (slope, _, r2) = linear_fit(&xs, &ys);
        assert!(slope > 1.8 && slope < 2.2, "slope = {slope}");
        assert!(r2 > 0.99, "r2 = {r2}");
    }

    #[test]
    fn order1_bundle_residual_slope_one() {
        let g = grid();
        let sc = Scenario::circle(-1.0);
        let bundle = build_bundle(&sc, &g, &circle_cover(&g, 1)).unwrap();
        let eps_list = geometric_grid(1e-4, 1e-2, 8);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &e in &eps_list {
            let x1 = bundle.assemble_order1(&sc, e).unwrap();
            let acc = &g.d2 * &x1.samples;
            let mut field = acc.clone();
            for j in 0..g.n {
                let grad = sc.gradient(&x1.point(j));
                for c in 0..2 {
                    field[(j, c)] += grad[c] / e;
                }
            }
            xs.push(e.ln());
            ys.push(h_minus1_norm(&field).ln());
        }
        let (slope, _, r2) = linear_fit(&xs, &ys);
        assert!((slope - 1.0).abs() < 0.1, "first-order law gives slope {slope}");
        assert!(r2 > 0.99);
    }

    #[test]
    fn exact_radial_orbit_has_floor_residual() {
        // substituting the exact equilibrium circle leaves only roundoff,
        // independent of eps
        let g = grid();
        let sc = Scenario::circle(-1.0);
        for &eps in &[1e-2, 1e-3, 1e-4] {
            let rho = 1.0 / (1.0 + FOUR_PI2 * eps);
            let mut s = DMatrix::zeros(g.n, 2);
            for j in 0..g.n {
                let th = crate::num::TWO_PI * g.ts[j];
                s[(j, 0)] = rho * th.cos();
                s[(j, 1)] = rho * th.sin();
            }
            let acc = &g.d2 * &s;
            let mut field = acc.clone();
            for j in 0..g.n {
                let grad = sc.gradient(&[s[(j, 0)], s[(j, 1)]]);
                for c in 0..2 {
                    field[(j, c)] += grad[c] / eps;
                }
            }
            let dual = h_minus1_norm(&field);
            assert!(dual < 1e-7, "exact orbit residual {dual} at eps {eps}");
        }
    }

    #[test]
    fn residual_decomposition_cancellations() {
        let g = grid();
        let sc = Scenario::circle(-1.0);
        let bundle = build_bundle(&sc, &g, &circle_cover(&g, 1)).unwrap();
        let rep = residual(&sc, &g, &bundle, 1e-3).unwrap();
        assert!(rep.eqfn_err < 1e-7, "eps^0 cancellation: {}", rep.eqfn_err);
        assert!(rep.eqftgn_err < 1e-6, "eps^1 cancellation: {}", rep.eqftgn_err);
    }

    #[test]
    fn equivariance_under_time_shift() {
        let g = grid();
        let sc = Scenario::torus(2.0, 1.0, -1.0);
        let x0 = torus_meridian(&g, 2.0, 1.0, 0.7);
        let bundle = build_bundle(&sc, &g, &x0).unwrap();
        let shift = 13;
        let bundle_shifted = build_bundle(&sc, &g, &x0.time_shift(shift)).unwrap();
        let eps = 1e-3;
        let xe = bundle.assemble(&sc, eps).unwrap().time_shift(shift);
        let xe_shifted = bundle_shifted.assemble(&sc, eps).unwrap();
        assert!(xe.sup_distance(&xe_shifted) < 1e-9);
        for j in 0..g.n {
            assert!((bundle.a[(j + shift) % g.n] - bundle_shifted.a[j]).abs() < 1e-9);
            let gd = (bundle.g_n[(j + shift) % g.n] - bundle_shifted.g_n[j]).abs();
            assert!(gd < 1e-8 * (1.0 + bundle.g_n[j].abs()));
        }
    }

    #[test]
    fn cubic_distance_term_keeps_the_residual_law() {
        // V = (1/2) b0 d^2 + c d^3 shifts the third normal derivative to
        // 3 D_n b + 6c; a wrong coefficient in the second-order normal term
        // would break the eps^0/eps^1 cancellations and flatten the slope
        let g = grid();
        let sc = Scenario::circle_cubic(-1.0, 0.4);
        let bundle = build_bundle(&sc, &g, &circle_cover(&g, 1)).unwrap();
        // g_n picks up the cubic shift: b g_n = -(1/2)(6c) a^2 + a H^2
        let a = -FOUR_PI2;
        let expected_gn = (-0.5 * (6.0 * 0.4) * a * a - 0.0 + a * FOUR_PI2) / -1.0;
        for &v in &bundle.g_n {
            assert!((v - expected_gn).abs() < 1e-7 * expected_gn.abs(), "g_n {v} vs {expected_gn}");
        }
        let eps_list = geometric_grid(1e-5, 1e-3, 8);
        let sweep = residual_sweep(&sc, &g, &bundle, &eps_list).unwrap();
        let xs: Vec<f64> = sweep.iter().map(|(e, _)| e.ln()).collect();
        let ys: Vec<f64> = sweep.iter().map(|(_, r)| r.ln()).collect();
        let (slope, _, r2) = linear_fit(&xs, &ys);
        assert!(slope > 1.8 && slope < 2.2, "cubic residual slope {slope}");
        assert!(r2 > 0.99);
        let rep = verify_alpha_beta(&sc, &g, &bundle, &geometric_grid(1e-5, 1e-4, 8)).unwrap();
        assert!(rep.alpha_rel_err < 1e-4 && rep.beta_rel_err < 1e-3,
            "cubic alpha/beta errs {} {}", rep.alpha_rel_err, rep.beta_rel_err);
    }

    #[test]
    fn full_tangential_branch_on_oblique_torus_geodesic() {
        // the (1,1) torus geodesic has varying curvature along the loop, so
        // a(t) is nonconstant and the tangential correction is genuinely
        // nonzero; the eps^2 residual law then tests every term of the
        // first- and second-order assembly at once
        let g = grid();
        let sc = Scenario::torus(2.0, 1.0, -1.0);
        let seed = crate::loops::seed_loop(&sc, &g, &[1, 1], 0.1).unwrap();
        let x0 = crate::loops::find_geodesic(
            &sc,
            &g,
            &seed,
            &[1, 1],
            crate::loops::DescentOptions::default(),
        )
        .unwrap()
        .geodesic;
        let bundle = build_bundle(&sc, &g, &x0).unwrap();
        assert!(
            g.sup_norm_field(&bundle.f_t.vectors) > 1.0,
            "oblique geodesic must produce a nonzero tangential correction"
        );
        assert!(bundle.ft_diagnostics.compat_residual < 1e-8);
        assert!(bundle.ft_diagnostics.orto_residual < 1e-8);
        let eps_list = geometric_grid(1e-5, 1e-3, 8);
        let sweep = residual_sweep(&sc, &g, &bundle, &eps_list).unwrap();
        let xs: Vec<f64> = sweep.iter().map(|(e, _)| e.ln()).collect();
        let ys: Vec<f64> = sweep.iter().map(|(_, r)| r.ln()).collect();
        let (slope, _, r2) = linear_fit(&xs, &ys);
        assert!(slope > 1.8 && slope < 2.2, "oblique residual slope {slope}");
        assert!(r2 > 0.99, "r2 = {r2}");
        // closed-form expansion coefficients still match the fitted ones
        let rep = verify_alpha_beta(&sc, &g, &bundle, &geometric_grid(1e-5, 1e-4, 8)).unwrap();
        assert!(rep.alpha_rel_err < 1e-4, "alpha err {}", rep.alpha_rel_err);
        assert!(rep.beta_rel_err < 1e-3, "beta err {}", rep.beta_rel_err);
    }

    #[test]
    fn alpha_beta_verification_circle() {
        let g = grid();
        let sc = Scenario::circle(-1.0);
        let bundle = build_bundle(&sc, &g, &circle_cover(&g, 1)).unwrap();
        let eps_list = geometric_grid(1e-3, 1e-2, 8);
        let rep = verify_alpha_beta(&sc, &g, &bundle, &eps_list).unwrap();
        assert!(rep.alpha_rel_err < 1e-4, "alpha err {}", rep.alpha_rel_err);
        assert!(rep.beta_rel_err < 1e-4, "beta err {}", rep.beta_rel_err);
        // closed forms themselves: alpha = b a n = 4 pi^2 n, beta = -16 pi^4 n
        let (alpha, beta) = bundle.alpha_beta_closed(&sc, &g).unwrap();
        for j in 0..g.n {
            let nx = bundle.frame.normal[(j, 0)];
            assert!((alpha[(j, 0)] - FOUR_PI2 * nx).abs() < 1e-8);
            assert!((beta[(j, 0)] - -16.0 * PI.powi(4) * nx).abs() < 1e-6);
        }
    }
}
