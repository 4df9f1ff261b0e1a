//! Analytic scenarios: the potential V, its critical manifold M, tubular
//! projection, Gauss map, second fundamental form and adapted-frame
//! derivatives.
//!
//! Built-in manifolds are the unit circle (n = 2), the unit sphere (n = 3)
//! and a torus of revolution (n = 3). Potentials are either quadratic in the
//! signed distance, V = (1/2) b0 d^2 + cubic * d^3, or the quartic radial
//! V = -(1/4)(|x|^2 - 1)^2 which has a varying normal Hessian b(x) on the
//! ambient space with b = -2 on M.

use crate::error::{Error, Result};
use crate::jets::{radial_jet, Jet3};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const TOL_MANIFOLD: f64 = 1e-10;
const ADAPTED_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Repulsive,
    Attractive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ManifoldKind {
    Circle,
    Sphere,
    Torus { big_r: f64, small_r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialForm {
    /// V = (1/2) b0 d^2 + cubic d^3 with d the signed tube distance.
    DistanceQuadratic { b0: f64, cubic: f64 },
    /// V = -(1/4)(|x|^2 - 1)^2; normal Hessian on M equals -2.
    QuarticRadial,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub kind: ManifoldKind,
    pub form: PotentialForm,
    pub rho0: f64,
    pub tol_manifold: f64,
}

/// Orthonormal adapted frame at a manifold point.
#[derive(Debug, Clone)]
pub struct ManifoldFrame {
    pub point: DVector<f64>,
    pub normal: DVector<f64>,
    pub tangent: Vec<DVector<f64>>,
    /// Second fundamental form in the tangent basis, H_ij = e_i . D^2 d [e_j].
    pub second_form: DMatrix<f64>,
    /// Normal Hessian b(x) = V''(x)[n, n].
    pub b: f64,
    /// |d^3 V / d n^3| at the point.
    pub lambda_local: f64,
}

/// Second- and third-derivative components of V in the adapted frame,
/// together with the closed forms they must equal in normal form.
#[derive(Debug, Clone)]
pub struct AdaptedDerivatives {
    pub d2_nn: f64,
    pub d3_inn: DVector<f64>,
    pub d3_ijn: DMatrix<f64>,
    pub d3_nnn: f64,
    pub b: f64,
    pub grad_b_tangential: DVector<f64>,
    pub dn_b: f64,
    /// Largest adapted component that the normal form forces to vanish.
    pub max_forbidden: f64,
}

/// Supremum data over manifold samples.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioBounds {
    pub h_bar: f64,
    /// sup of b over M (the extremal normal Hessian in the repulsive case).
    pub b_sup: f64,
    pub b_inf: f64,
    pub lambda: f64,
    pub sample_count: usize,
}

impl ScenarioBounds {
    /// Attractive admissibility 4 Lambda Hbar A < b0.
    pub fn attractive_admissible(&self, b0: f64, energy_cap: f64) -> Result<f64> {
        let lhs = 4.0 * self.lambda * self.h_bar * energy_cap;
        if lhs < b0 {
            Ok(lhs)
        } else {
            Err(Error::AdmissibilityFailed { lhs, b0 })
        }
    }
}

impl Scenario {
    pub fn circle(b0: f64) -> Scenario {
        Scenario::circle_cubic(b0, 0.0)
    }

    pub fn circle_cubic(b0: f64, cubic: f64) -> Scenario {
        assert!(b0 != 0.0);
        Scenario {
            name: "circle".into(),
            kind: ManifoldKind::Circle,
            form: PotentialForm::DistanceQuadratic { b0, cubic },
            rho0: 0.5,
            tol_manifold: TOL_MANIFOLD,
        }
    }

    pub fn sphere(b0: f64) -> Scenario {
        assert!(b0 != 0.0);
        Scenario {
            name: "sphere".into(),
            kind: ManifoldKind::Sphere,
            form: PotentialForm::DistanceQuadratic { b0, cubic: 0.0 },
            rho0: 0.5,
            tol_manifold: TOL_MANIFOLD,
        }
    }

    /// V = -(1/4)(|x|^2-1)^2 on R^3: b = -2 on M, nonzero third normal derivative.
    pub fn sphere_quartic() -> Scenario {
        Scenario {
            name: "sphere-quartic".into(),
            kind: ManifoldKind::Sphere,
            form: PotentialForm::QuarticRadial,
            rho0: 0.5,
            tol_manifold: TOL_MANIFOLD,
        }
    }

    pub fn torus(big_r: f64, small_r: f64, b0: f64) -> Scenario {
        assert!(b0 != 0.0 && big_r > small_r && small_r > 0.0);
        Scenario {
            name: "torus".into(),
            kind: ManifoldKind::Torus { big_r, small_r },
            form: PotentialForm::DistanceQuadratic { b0, cubic: 0.0 },
            rho0: 0.5 * small_r,
            tol_manifold: TOL_MANIFOLD,
        }
    }

    /// Registry lookup used by the CLI config: name plus parameter map.
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Scenario> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        match name {
            "circle" => Ok(Scenario::circle_cubic(get("b0", -1.0), get("cubic", 0.0))),
            "sphere" => Ok(Scenario::sphere(get("b0", -1.0))),
            "sphere-quartic" => Ok(Scenario::sphere_quartic()),
            "torus" => Ok(Scenario::torus(get("R", 2.0), get("r", 1.0), get("b0", -1.0))),
            other => Err(Error::Invalid(format!("unknown scenario `{other}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 2,
            _ => 3,
        }
    }

    /// Normal Hessian on the manifold (constant along M for all built-ins).
    pub fn b0(&self) -> f64 {
        match self.form {
            PotentialForm::DistanceQuadratic { b0, .. } => b0,
            PotentialForm::QuarticRadial => -2.0,
        }
    }

    pub fn cubic(&self) -> f64 {
        match self.form {
            PotentialForm::DistanceQuadratic { cubic, .. } => cubic,
            PotentialForm::QuarticRadial => 0.0,
        }
    }

    pub fn sign(&self) -> Sign {
        if self.b0() < 0.0 {
            Sign::Repulsive
        } else {
            Sign::Attractive
        }
    }

    /// Signed tube distance as a jet; valid away from the singular set.
    pub fn distance_jet(&self, u: &[f64]) -> Jet3 {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere => radial_jet(u).add_scalar(-1.0),
            ManifoldKind::Torus { big_r, small_r } => {
                let d = u.len();
                let x = Jet3::variable(d, 0, u[0]);
                let y = Jet3::variable(d, 1, u[1]);
                let z = Jet3::variable(d, 2, u[2]);
                let s = x.square().add(&y.square()).sqrt();
                let w = s.add_scalar(-big_r).square().add(&z.square()).sqrt();
                w.add_scalar(-small_r)
            }
        }
    }

    /// Full jet of V at an ambient point.
    pub fn potential_jet(&self, u: &[f64]) -> Jet3 {
        match self.form {
            PotentialForm::DistanceQuadratic { b0, cubic } => {
                let d = self.distance_jet(u);
                let s = d.v;
                let m0 = 0.5 * b0 * s * s + cubic * s * s * s;
                let m1 = b0 * s + 3.0 * cubic * s * s;
                let m2 = b0 + 6.0 * cubic * s;
                let m3 = 6.0 * cubic;
                d.chain(m0, m1, m2, m3)
            }
            PotentialForm::QuarticRadial => {
                let rho = radial_jet(u);
                let r = rho.v;
                let m0 = -0.25 * (r * r - 1.0).powi(2);
                let m1 = -r * (r * r - 1.0);
                let m2 = -(3.0 * r * r - 1.0);
                let m3 = -6.0 * r;
                rho.chain(m0, m1, m2, m3)
            }
        }
    }

    pub fn potential(&self, u: &[f64]) -> f64 {
        self.potential_jet(u).v
    }

    pub fn gradient(&self, u: &[f64]) -> DVector<f64> {
        let j = self.potential_jet(u);
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|i| j.g[i]))
    }

    pub fn hessian(&self, u: &[f64]) -> DMatrix<f64> {
        let j = self.potential_jet(u);
        DMatrix::from_fn(self.dim(), self.dim(), |i, k| j.h[i][k])
    }

    /// b(x) and its ambient gradient; b is the coefficient of the normal form
    /// V = (1/2) b(x) d^2 so that V''[n,n] = b on M.
    pub fn b_field(&self, x: &[f64]) -> (f64, DVector<f64>) {
        let n = self.dim();
        match self.form {
            PotentialForm::DistanceQuadratic { b0, .. } => (b0, DVector::zeros(n)),
            PotentialForm::QuarticRadial => {
                let rho = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let b = -0.5 * (rho + 1.0) * (rho + 1.0);
                let grad = DVector::from_iterator(n, x.iter().map(|&xi| -(rho + 1.0) * xi / rho));
                (b, grad)
            }
        }
    }

    /// Nearest manifold point and signed normal distance: u = h + v n_h.
    pub fn project_to_tube(&self, u: &[f64]) -> Result<(DVector<f64>, f64)> {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere => {
                let rho = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                let v = rho - 1.0;
                if v.abs() > self.rho0 {
                    return Err(Error::TubeExit { dist: v.abs(), rho0: self.rho0 });
                }
                let h = DVector::from_iterator(u.len(), u.iter().map(|&x| x / rho));
                Ok((h, v))
            }
            ManifoldKind::Torus { big_r, small_r } => {
                let s = (u[0] * u[0] + u[1] * u[1]).sqrt();
                // the distance function is smooth away from the revolution
                // axis and the core circle; the inner tube legitimately
                // reaches s = R - r - rho0
                if s < 0.05 * big_r {
                    return Err(Error::DegenerateNormal { grad_norm: 0.0 });
                }
                let w = ((s - big_r).powi(2) + u[2] * u[2]).sqrt();
                let v = w - small_r;
                if v.abs() > self.rho0 {
                    return Err(Error::TubeExit { dist: v.abs(), rho0: self.rho0 });
                }
                let cx = big_r * u[0] / s;
                let cy = big_r * u[1] / s;
                let mx = (s - big_r) / w * (u[0] / s);
                let my = (s - big_r) / w * (u[1] / s);
                let mz = u[2] / w;
                let h = DVector::from_vec(vec![
                    cx + small_r * mx,
                    cy + small_r * my,
                    small_r * mz,
                ]);
                Ok((h, v))
            }
        }
    }

    /// Unit normal (Gauss map): the gradient of the signed distance.
    pub fn normal_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        let d = self.distance_jet(x);
        let n = self.dim();
        let g = DVector::from_iterator(n, (0..n).map(|i| d.g[i]));
        let gn = g.norm();
        if gn < 0.5 {
            return Err(Error::DegenerateNormal { grad_norm: gn });
        }
        Ok(g / gn)
    }

    fn check_on_manifold(&self, x: &[f64]) -> Result<()> {
        let gv = self.gradient(x).norm();
        // scale tolerance with |b0| so attractive/repulsive behave alike
        if gv > self.tol_manifold * self.b0().abs().max(1.0) {
            return Err(Error::Invalid(format!(
                "point is not on the critical manifold: |V'| = {gv:.3e}"
            )));
        }
        Ok(())
    }

    /// Adapted orthonormal frame, second fundamental form and local bounds.
    pub fn frame_at(&self, x: &[f64]) -> Result<ManifoldFrame> {
        self.check_on_manifold(x)?;
        let n = self.dim();
        let normal = self.normal_at(x)?;
        let tangent = tangent_basis(&normal);
        let dj = self.distance_jet(x);
        let d2d = DMatrix::from_fn(n, n, |i, k| dj.h[i][k]);
        let mut second_form = DMatrix::zeros(n - 1, n - 1);
        for (i, ei) in tangent.iter().enumerate() {
            let hei = &d2d * ei;
            for (j, ej) in tangent.iter().enumerate() {
                second_form[(i, j)] = ej.dot(&hei);
            }
        }
        let vj = self.potential_jet(x);
        let b = quad_form(&vj, &normal, &normal, n);
        let lambda_local = cubic_form(&vj, &normal, &normal, &normal, n).abs();
        Ok(ManifoldFrame {
            point: DVector::from_column_slice(x),
            normal,
            tangent,
            second_form,
            b,
            lambda_local,
        })
    }

    /// Second and third derivatives of V in the adapted frame; asserts the
    /// vanishing pattern the critical-manifold normal form forces.
    pub fn adapted_derivatives(&self, x: &[f64]) -> Result<AdaptedDerivatives> {
        let frame = self.frame_at(x)?;
        let n = self.dim();
        let vj = self.potential_jet(x);
        let nv = &frame.normal;
        let k = n - 1;
        let d2_nn = quad_form(&vj, nv, nv, n);
        let mut d3_inn = DVector::zeros(k);
        let mut d3_ijn = DMatrix::zeros(k, k);
        for i in 0..k {
            d3_inn[i] = cubic_form(&vj, &frame.tangent[i], nv, nv, n);
            for j in 0..k {
                d3_ijn[(i, j)] = cubic_form(&vj, &frame.tangent[i], &frame.tangent[j], nv, n);
            }
        }
        let d3_nnn = cubic_form(&vj, nv, nv, nv, n);

        // components the normal form forces to zero
        let mut max_forbidden: f64 = 0.0;
        for i in 0..k {
            max_forbidden = max_forbidden.max(quad_form(&vj, &frame.tangent[i], nv, n).abs());
            for j in 0..k {
                max_forbidden =
                    max_forbidden.max(quad_form(&vj, &frame.tangent[i], &frame.tangent[j], n).abs());
                for l in 0..k {
                    max_forbidden = max_forbidden.max(
                        cubic_form(&vj, &frame.tangent[i], &frame.tangent[j], &frame.tangent[l], n)
                            .abs(),
                    );
                }
            }
        }
        let scale = self.b0().abs().max(1.0);
        if max_forbidden > ADAPTED_TOL * scale {
            return Err(Error::NondegeneracyViolation {
                component: "tangential second/third derivative",
                value: max_forbidden,
                tol: ADAPTED_TOL * scale,
            });
        }
        let (b, grad_b) = self.b_field(x);
        let grad_b_tangential =
            DVector::from_iterator(k, frame.tangent.iter().map(|e| e.dot(&grad_b)));
        let dn_b = nv.dot(&grad_b);
        Ok(AdaptedDerivatives {
            d2_nn,
            d3_inn,
            d3_ijn,
            d3_nnn,
            b,
            grad_b_tangential,
            dn_b,
            max_forbidden,
        })
    }

    /// Quasi-uniform manifold samples for supremum estimates.
    pub fn manifold_samples(&self, count: usize) -> Vec<DVector<f64>> {
        match self.kind {
            ManifoldKind::Circle => (0..count)
                .map(|i| {
                    let th = 2.0 * PI * i as f64 / count as f64;
                    DVector::from_vec(vec![th.cos(), th.sin()])
                })
                .collect(),
            ManifoldKind::Sphere => {
                // Fibonacci sphere
                let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
                (0..count)
                    .map(|i| {
                        let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                        let r = (1.0 - z * z).sqrt();
                        let th = 2.0 * PI * i as f64 / golden;
                        DVector::from_vec(vec![r * th.cos(), r * th.sin(), z])
                    })
                    .collect()
            }
            ManifoldKind::Torus { big_r, small_r } => {
                let m = (count as f64).sqrt().ceil() as usize;
                let mut out = Vec::with_capacity(m * m);
                for i in 0..m {
                    for j in 0..m {
                        let th = 2.0 * PI * i as f64 / m as f64;
                        let ph = 2.0 * PI * j as f64 / m as f64;
                        let s = big_r + small_r * ph.cos();
                        out.push(DVector::from_vec(vec![
                            s * th.cos(),
                            s * th.sin(),
                            small_r * ph.sin(),
                        ]));
                    }
                }
                out
            }
        }
    }

    /// Supremum bounds over at least `sample_count` quasi-uniform samples.
    pub fn scenario_bounds(&self, sample_count: usize) -> Result<ScenarioBounds> {
        assert!(sample_count >= 100, "need at least 100 manifold samples");
        let samples = self.manifold_samples(sample_count);
        let mut h_bar: f64 = 0.0;
        let mut b_sup = f64::NEG_INFINITY;
        let mut b_inf = f64::INFINITY;
        let mut lambda: f64 = 0.0;
        for x in &samples {
            let f = self.frame_at(x.as_slice())?;
            let op_norm = sym_operator_norm(&f.second_form);
            h_bar = h_bar.max(op_norm);
            b_sup = b_sup.max(f.b);
            b_inf = b_inf.min(f.b);
            lambda = lambda.max(f.lambda_local);
        }
        Ok(ScenarioBounds {
            h_bar,
            b_sup,
            b_inf,
            lambda,
            sample_count: samples.len(),
        })
    }

    /// Validity of V and its derivatives at an ambient point: the analytic
    /// formulas only degenerate at the radial origin (circle/sphere) and at
    /// the revolution axis or core circle (torus). The tubular-coordinate
    /// restriction |v| <= rho0 is a separate, stricter condition.
    pub fn domain_ok(&self, u: &[f64]) -> Result<()> {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere => {
                let rho = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                if rho < 0.05 {
                    return Err(Error::DegenerateNormal { grad_norm: 0.0 });
                }
            }
            ManifoldKind::Torus { big_r, .. } => {
                let s = (u[0] * u[0] + u[1] * u[1]).sqrt();
                let w = ((s - big_r).powi(2) + u[2] * u[2]).sqrt();
                if s < 0.05 * big_r || w < 1e-8 {
                    return Err(Error::DegenerateNormal { grad_norm: 0.0 });
                }
            }
        }
        Ok(())
    }

    /// Generators of the scenario isometries used for kernel deflation and
    /// orbit gauges. The circle and torus expose their rotation about the
    /// symmetry axis, which preserves every homotopy class; the sphere
    /// deliberately exposes none, so rotationally degenerate great circles
    /// are rejected rather than quotiented.
    pub fn killing_fields(&self, x: &[f64]) -> Vec<DVector<f64>> {
        match self.kind {
            ManifoldKind::Circle => vec![DVector::from_vec(vec![-x[1], x[0]])],
            ManifoldKind::Torus { .. } => vec![DVector::from_vec(vec![-x[1], x[0], 0.0])],
            ManifoldKind::Sphere => vec![],
        }
    }
}

fn quad_form(jet: &Jet3, a: &DVector<f64>, b: &DVector<f64>, dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            s += jet.h[i][j] * a[i] * b[j];
        }
    }
    s
}

fn cubic_form(jet: &Jet3, a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>, dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                s += jet.t[i][j][k] * a[i] * b[j] * c[k];
            }
        }
    }
    s
}

/// Deterministic orthonormal tangent basis completing a unit normal.
pub fn tangent_basis(normal: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = normal.len();
    if n == 2 {
        return vec![DVector::from_vec(vec![-normal[1], normal[0]])];
    }
    // pick the axis least aligned with the normal
    let mut axis = 0;
    for i in 1..n {
        if normal[i].abs() < normal[axis].abs() {
            axis = i;
        }
    }
    let mut a = DVector::zeros(n);
    a[axis] = 1.0;
    let mut e1 = &a - normal * normal.dot(&a);
    e1 /= e1.norm();
    let e2 = cross3(normal, &e1);
    vec![e1, e2]
}

pub fn cross3(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

fn sym_operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().fold(0.0_f64, |acc, &l| acc.max(l.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_projection_examples() {
        let sc = Scenario::circle(-1.0);
        let (h, v) = sc.project_to_tube(&[1.2, 0.0]).unwrap();
        assert!((h[0] - 1.0).abs() < 1e-14 && h[1].abs() < 1e-14);
        assert!((v - 0.2).abs() < 1e-14);
        let (h, v) = sc.project_to_tube(&[1.0, 0.0]).unwrap();
        assert!((h[0] - 1.0).abs() < 1e-14 && v.abs() < 1e-14);
        assert!(matches!(
            sc.project_to_tube(&[2.0, 0.0]),
            Err(Error::TubeExit { .. })
        ));
    }

    #[test]
    fn torus_projection_closed_form() {
        // d = sqrt((sqrt(x^2+y^2)-R)^2 + z^2) - r
        let sc = Scenario::torus(2.0, 1.0, -1.0);
        let (h, v) = sc.project_to_tube(&[3.5, 0.0, 0.0]).unwrap();
        assert!((h[0] - 3.0).abs() < 1e-14);
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn reconstruction_u_equals_h_plus_vn() {
        let sc = Scenario::torus(2.0, 1.0, -1.0);
        let u = [2.3, 1.1, 0.4];
        let (h, v) = sc.project_to_tube(&u).unwrap();
        let n = sc.normal_at(h.as_slice()).unwrap();
        let rec = &h + &n * v;
        for i in 0..3 {
            assert!((rec[i] - u[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_frame_and_curvature() {
        let sc = Scenario::circle(-1.0);
        let f = sc.frame_at(&[1.0, 0.0]).unwrap();
        assert!((f.normal[0] - 1.0).abs() < 1e-14);
        assert!((f.second_form[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((f.b - -1.0).abs() < 1e-12);
        assert!(f.lambda_local < 1e-12);
        // orthonormality to 1e-12
        assert!((f.normal.norm() - 1.0).abs() < 1e-12);
        assert!(f.tangent[0].dot(&f.normal).abs() < 1e-12);
    }

    #[test]
    fn sphere_second_form_is_identity() {
        let sc = Scenario::sphere(-1.0);
        let x = [0.36, 0.48, 0.8];
        let f = sc.frame_at(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((f.second_form[(i, j)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gauss_map_finite_difference_consistency() {
        // (n_{x+dv} - n_x)/d ~ H[v] with relative error <= 1e-5 at step 1e-4
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for sc in [
            Scenario::circle(-1.0),
            Scenario::sphere(-2.0),
            Scenario::torus(2.0, 1.0, -1.0),
        ] {
            let samples = sc.manifold_samples(100);
            for _ in 0..100 {
                let x = &samples[rng.random_range(0..samples.len())];
                let f = sc.frame_at(x.as_slice()).unwrap();
                let mut v = DVector::zeros(sc.dim());
                for e in &f.tangent {
                    v += e * rng.random_range(-1.0..1.0);
                }
                if v.norm() < 1e-3 {
                    continue;
                }
                v /= v.norm();
                let step = 1e-4;
                let xp = x + &v * step;
                let xm = x - &v * step;
                let np = sc.normal_at(xp.as_slice()).unwrap();
                let nm = sc.normal_at(xm.as_slice()).unwrap();
                let fd = (np - nm) / (2.0 * step);
                // H[v] in ambient coordinates
                let dj = sc.distance_jet(x.as_slice());
                let d2d = DMatrix::from_fn(sc.dim(), sc.dim(), |i, k| dj.h[i][k]);
                let hv = &d2d * &v;
                let rel = (fd - &hv).norm() / hv.norm().max(1e-12);
                assert!(rel < 1e-5, "{}: rel = {rel}", sc.name);
            }
        }
    }

    #[test]
    fn manifold_samples_are_critical() {
        for sc in [
            Scenario::circle(-1.0),
            Scenario::sphere_quartic(),
            Scenario::torus(2.0, 1.0, -1.0),
        ] {
            for x in sc.manifold_samples(120) {
                assert!(sc.gradient(x.as_slice()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn adapted_derivatives_circle() {
        let sc = Scenario::circle(-1.0);
        let a = sc.adapted_derivatives(&[1.0, 0.0]).unwrap();
        assert!((a.d2_nn - -1.0).abs() < 1e-10);
        // D^3_ijn = b H_ij = -1
        assert!((a.d3_ijn[(0, 0)] - -1.0).abs() < 1e-8);
        assert!(a.d3_nnn.abs() < 1e-8);
        assert!(a.max_forbidden < 1e-8);
    }

    #[test]
    fn adapted_derivatives_quartic_sphere() {
        let sc = Scenario::sphere_quartic();
        let a = sc.adapted_derivatives(&[0.0, 0.0, 1.0]).unwrap();
        assert!((a.d2_nn - -2.0).abs() < 1e-10);
        // D^3_nnn V = 3 D_n b = -6 for the quartic radial potential
        assert!((a.d3_nnn - -6.0).abs() < 1e-8);
        assert!((a.dn_b - -2.0).abs() < 1e-10);
        // closed-form cross-check: D^3_ijn = b H_ij = -2 delta_ij
        for i in 0..2 {
            assert!((a.d3_ijn[(i, i)] - -2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn adapted_derivatives_cubic_term() {
        let sc = Scenario::circle_cubic(-1.0, 0.25);
        let a = sc.adapted_derivatives(&[0.0, 1.0]).unwrap();
        // D^3_nnn = 3 D_n b + 6 c = 1.5
        assert!((a.d3_nnn - 1.5).abs() < 1e-8);
    }

    #[test]
    fn bounds_circle_and_torus() {
        let sc = Scenario::circle(-1.0);
        let b = sc.scenario_bounds(128).unwrap();
        assert!((b.h_bar - 1.0).abs() < 1e-10);
        assert!(b.lambda < 1e-10);
        let sc = Scenario::torus(2.0, 1.0, -1.0);
        let b = sc.scenario_bounds(400).unwrap();
        // principal curvatures 1/r = 1 and cos(phi)/(R + r cos(phi)); sup norm 1
        assert!((b.h_bar - 1.0).abs() < 1e-6, "h_bar = {}", b.h_bar);
        assert!((b.b_sup - -1.0).abs() < 1e-12);
    }

    #[test]
    fn attractive_admissibility_vacuous_when_lambda_zero() {
        let sc = Scenario::circle(1.0);
        let b = sc.scenario_bounds(128).unwrap();
        assert!(b.attractive_admissible(1.0, 100.0).is_ok());
    }
}
