//! Third-order forward jets in dimension <= 3.
//!
//! A `Jet3` carries value, gradient, Hessian and third-derivative tensor of a
//! scalar expression of the ambient point. Scenario potentials and distance
//! functions are built from these, so every derivative the expansion needs is
//! exact to machine precision; no nested finite differences anywhere.

pub const MAXD: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct Jet3 {
    pub dim: usize,
    pub v: f64,
    pub g: [f64; MAXD],
    pub h: [[f64; MAXD]; MAXD],
    pub t: [[[f64; MAXD]; MAXD]; MAXD],
}

impl Jet3 {
    pub fn constant(dim: usize, v: f64) -> Jet3 {
        Jet3 {
            dim,
            v,
            g: [0.0; MAXD],
            h: [[0.0; MAXD]; MAXD],
            t: [[[0.0; MAXD]; MAXD]; MAXD],
        }
    }

    /// The coordinate function x_i.
    pub fn variable(dim: usize, i: usize, x: f64) -> Jet3 {
        let mut j = Jet3::constant(dim, x);
        j.g[i] = 1.0;
        j
    }

    pub fn add(&self, o: &Jet3) -> Jet3 {
        let mut r = *self;
        r.v += o.v;
        for i in 0..self.dim {
            r.g[i] += o.g[i];
            for j in 0..self.dim {
                r.h[i][j] += o.h[i][j];
                for k in 0..self.dim {
                    r.t[i][j][k] += o.t[i][j][k];
                }
            }
        }
        r
    }

    pub fn sub(&self, o: &Jet3) -> Jet3 {
        self.add(&o.scale(-1.0))
    }

    pub fn add_scalar(&self, c: f64) -> Jet3 {
        let mut r = *self;
        r.v += c;
        r
    }

    pub fn scale(&self, c: f64) -> Jet3 {
        let mut r = *self;
        r.v *= c;
        for i in 0..self.dim {
            r.g[i] *= c;
            for j in 0..self.dim {
                r.h[i][j] *= c;
                for k in 0..self.dim {
                    r.t[i][j][k] *= c;
                }
            }
        }
        r
    }

    pub fn mul(&self, o: &Jet3) -> Jet3 {
        let d = self.dim;
        let mut r = Jet3::constant(d, self.v * o.v);
        for i in 0..d {
            r.g[i] = self.g[i] * o.v + self.v * o.g[i];
        }
        for i in 0..d {
            for j in 0..d {
                r.h[i][j] = self.h[i][j] * o.v
                    + self.g[i] * o.g[j]
                    + self.g[j] * o.g[i]
                    + self.v * o.h[i][j];
            }
        }
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    r.t[i][j][k] = self.t[i][j][k] * o.v
                        + self.h[i][j] * o.g[k]
                        + self.h[i][k] * o.g[j]
                        + self.h[j][k] * o.g[i]
                        + o.h[i][j] * self.g[k]
                        + o.h[i][k] * self.g[j]
                        + o.h[j][k] * self.g[i]
                        + self.v * o.t[i][j][k];
                }
            }
        }
        r
    }

    /// Compose with a scalar function given its derivatives at self.v.
    pub fn chain(&self, m0: f64, m1: f64, m2: f64, m3: f64) -> Jet3 {
        let d = self.dim;
        let mut r = Jet3::constant(d, m0);
        for i in 0..d {
            r.g[i] = m1 * self.g[i];
        }
        for i in 0..d {
            for j in 0..d {
                r.h[i][j] = m2 * self.g[i] * self.g[j] + m1 * self.h[i][j];
            }
        }
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    r.t[i][j][k] = m3 * self.g[i] * self.g[j] * self.g[k]
                        + m2 * (self.h[i][j] * self.g[k]
                            + self.h[i][k] * self.g[j]
                            + self.h[j][k] * self.g[i])
                        + m1 * self.t[i][j][k];
                }
            }
        }
        r
    }

    pub fn sqrt(&self) -> Jet3 {
        let s = self.v.sqrt();
        assert!(s > 0.0, "sqrt of nonpositive jet value");
        self.chain(s, 0.5 / s, -0.25 / (s * s * s), 0.375 / (s * s * s * s * s))
    }

    pub fn square(&self) -> Jet3 {
        self.mul(self)
    }
}

/// Euclidean norm |u| as a jet (u away from the origin).
pub fn radial_jet(u: &[f64]) -> Jet3 {
    let d = u.len();
    let mut sumsq = Jet3::constant(d, 0.0);
    for i in 0..d {
        let xi = Jet3::variable(d, i, u[i]);
        sumsq = sumsq.add(&xi.square());
    }
    sumsq.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_dir3(f: impl Fn(&[f64]) -> f64, u: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        // third mixed directional derivative by nested central differences
        let e = 2e-3;
        let g = |u: &[f64]| {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            for i in 0..u.len() {
                up[i] += e * c[i];
                um[i] -= e * c[i];
            }
            (f(&up) - f(&um)) / (2.0 * e)
        };
        let h = |u: &[f64]| {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            for i in 0..u.len() {
                up[i] += e * b[i];
                um[i] -= e * b[i];
            }
            (g(&up) - g(&um)) / (2.0 * e)
        };
        let mut up = u.to_vec();
        let mut um = u.to_vec();
        for i in 0..u.len() {
            up[i] += e * a[i];
            um[i] -= e * a[i];
        }
        (h(&up) - h(&um)) / (2.0 * e)
    }

    #[test]
    fn jet_matches_finite_differences_on_torus_distance() {
        let big_r = 2.0;
        let small_r = 1.0;
        let f = |u: &[f64]| {
            let s = (u[0] * u[0] + u[1] * u[1]).sqrt();
            (((s - big_r).powi(2) + u[2] * u[2]).sqrt()) - small_r
        };
        let u = [2.4, 0.9, 0.55];
        let d = u.len();
        let s = {
            let x = Jet3::variable(d, 0, u[0]);
            let y = Jet3::variable(d, 1, u[1]);
            x.square().add(&y.square()).sqrt()
        };
        let z = Jet3::variable(d, 2, u[2]);
        let w = s.add_scalar(-big_r).square().add(&z.square()).sqrt();
        let jet = w.add_scalar(-small_r);

        assert!((jet.v - f(&u)).abs() < 1e-14);
        // gradient and Hessian vs finite differences
        for i in 0..3 {
            let mut up = u;
            let mut um = u;
            up[i] += 1e-6;
            um[i] -= 1e-6;
            let fd = (f(&up) - f(&um)) / 2e-6;
            assert!((jet.g[i] - fd).abs() < 1e-8, "grad {i}");
        }
        let dirs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for a in &dirs {
            for b in &dirs {
                for c in &dirs {
                    let mut exact = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            for k in 0..3 {
                                exact += jet.t[i][j][k] * a[i] * b[j] * c[k];
                            }
                        }
                    }
                    let fd = fd_dir3(f, &u, a, b, c);
                    assert!(
                        (exact - fd).abs() < 5e-5 * (1.0 + exact.abs()),
                        "third derivative mismatch: {exact} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn chain_and_mul_symmetry() {
        let x = Jet3::variable(2, 0, 0.7);
        let y = Jet3::variable(2, 1, -0.4);
        let p = x.mul(&y).add(&x.square().mul(&y.square()));
        for i in 0..2 {
            for j in 0..2 {
                assert!((p.h[i][j] - p.h[j][i]).abs() < 1e-14);
                for k in 0..2 {
                    assert!((p.t[i][j][k] - p.t[j][i][k]).abs() < 1e-14);
                    assert!((p.t[i][j][k] - p.t[k][j][i]).abs() < 1e-14);
                }
            }
        }
    }
}
