//! Second variation of `F_{p,f}`, its finite-difference oracle, the local L_p
//! quadratic form, and the eigenvalue path `g(t)` with its derivative at `t = 0`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::body::{ConvexBody, SupportGeometry, DEFAULT_PD_TOL};
use crate::error::{MinkError, Result};
use crate::solver::{functional_geom, residual_geom, ProblemSpec};
use crate::spectrum::lambda_1e;
use crate::sphere::{Domain, HessianField, ScalarField, TangentField};

/// Residual above which a body is not treated as a critical point.
pub const CRITICAL_THRESHOLD: f64 = 1e-6;

/// A nodal function with first and second covariant derivatives (packed layout).
#[derive(Debug, Clone)]
pub struct NodalJet {
    pub v: DVector<f64>,
    pub g: Vec<DVector<f64>>,
    pub s: Vec<DVector<f64>>,
}

impl NodalJet {
    pub fn from_coeffs(d: &Domain, c: &DVector<f64>) -> Result<Self> {
        Ok(NodalJet {
            v: d.evaluate(c)?.0,
            g: d.tangent_gradient(c)?.comps,
            s: d.second_derivatives(c)?,
        })
    }

    pub fn constant(d: &Domain, c: f64) -> Self {
        let z = DVector::zeros(d.node_count());
        NodalJet {
            v: DVector::from_element(d.node_count(), c),
            g: vec![z.clone(); d.n()],
            s: vec![z; if d.n() == 1 { 1 } else { 3 }],
        }
    }

    fn n(&self) -> usize {
        self.g.len()
    }

    fn second(&self, i: usize, j: usize) -> &DVector<f64> {
        if self.n() == 1 {
            &self.s[0]
        } else if i == j {
            &self.s[2 * i]
        } else {
            &self.s[1]
        }
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        if self.n() == 1 {
            vec![(0, 0)]
        } else {
            vec![(0, 0), (0, 1), (1, 1)]
        }
    }

    pub fn mul(&self, o: &NodalJet) -> NodalJet {
        let v = self.v.component_mul(&o.v);
        let g = (0..self.n())
            .map(|i| self.g[i].component_mul(&o.v) + self.v.component_mul(&o.g[i]))
            .collect();
        let s = self
            .pairs()
            .into_iter()
            .map(|(i, j)| {
                self.second(i, j).component_mul(&o.v)
                    + self.g[i].component_mul(&o.g[j])
                    + self.g[j].component_mul(&o.g[i])
                    + self.v.component_mul(o.second(i, j))
            })
            .collect();
        NodalJet { v, g, s }
    }

    pub fn add_scaled(&self, t: f64, o: &NodalJet) -> NodalJet {
        NodalJet {
            v: &self.v + &o.v * t,
            g: self.g.iter().zip(&o.g).map(|(a, b)| a + b * t).collect(),
            s: self.s.iter().zip(&o.s).map(|(a, b)| a + b * t).collect(),
        }
    }

    /// `a / b` for `b > 0`.
    pub fn div(&self, b: &NodalJet) -> NodalJet {
        let q = self.v.component_div(&b.v);
        let g: Vec<_> = (0..self.n())
            .map(|i| (&self.g[i] - q.component_mul(&b.g[i])).component_div(&b.v))
            .collect();
        let s = self
            .pairs()
            .into_iter()
            .map(|(i, j)| {
                (self.second(i, j)
                    - g[i].component_mul(&b.g[j])
                    - g[j].component_mul(&b.g[i])
                    - q.component_mul(b.second(i, j)))
                .component_div(&b.v)
            })
            .collect();
        NodalJet { v: q, g, s }
    }

    /// `exp(t · self)`.
    pub fn exp_scaled(&self, t: f64) -> NodalJet {
        let e = self.v.map(|x| (t * x).exp());
        let g: Vec<_> = self.g.iter().map(|gi| gi.component_mul(&e) * t).collect();
        let s = self
            .pairs()
            .into_iter()
            .map(|(i, j)| {
                (self.second(i, j) * t + self.g[i].component_mul(&self.g[j]) * (t * t)).component_mul(&e)
            })
            .collect();
        NodalJet { v: e, g, s }
    }

    /// Support geometry `(h, ∇h, ∇²h + h Id)` with `h = self`.
    pub fn geometry(&self) -> SupportGeometry {
        let mut entries = self.s.clone();
        entries[0] += &self.v;
        if self.n() == 2 {
            entries[2] += &self.v;
        }
        SupportGeometry {
            h: self.v.clone(),
            grad: TangentField { comps: self.g.clone() },
            hess: HessianField::from_entries(self.n(), entries),
        }
    }

    pub fn of_body(body: &ConvexBody) -> Result<Self> {
        NodalJet::from_coeffs(body.domain(), body.coeffs())
    }
}

/// `U^{ij} a_i b_j` per node.
fn cofactor_pair(hess: &HessianField, a: &[DVector<f64>], b: &[DVector<f64>]) -> DVector<f64> {
    let u = &hess.cofactor;
    if hess.dim() == 1 {
        u[0].component_mul(&a[0]).component_mul(&b[0])
    } else {
        u[0].component_mul(&a[0]).component_mul(&b[0])
            + u[1].component_mul(&(a[0].component_mul(&b[1]) + a[1].component_mul(&b[0])))
            + u[2].component_mul(&a[1]).component_mul(&b[1])
    }
}

/// The three terms of the second variation at a critical point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondVariation {
    /// `(p−1−n)/((n+1)V) ∫ z² h dS_h`.
    pub term1: f64,
    /// `(n+1−p) (∫ z h dS_h / ((n+1)V))²`.
    pub term2: f64,
    /// `1/((n+1)V) ∫ U^{ij} z_i z_j h²`.
    pub term3: f64,
    pub total: f64,
}

fn even_jet(d: &Domain, z: &ScalarField) -> Result<NodalJet> {
    let c = d.project_even(z)?;
    NodalJet::from_coeffs(d, &c)
}

/// Second variation of `F_{p,f}` at a critical point along `∂_t h = h z`.
pub fn second_variation(spec: &ProblemSpec, body: &ConvexBody, z: &ScalarField) -> Result<SecondVariation> {
    let d = body.domain();
    if !d.same_as(spec.domain()) {
        return Err(MinkError::DomainMismatch("body and problem live on different domains".into()));
    }
    let (res, _) = residual_geom(spec, body.geometry());
    if res > CRITICAL_THRESHOLD {
        return Err(MinkError::NotCritical {
            residual: res,
            threshold: CRITICAL_THRESHOLD,
        });
    }
    let zj = even_jet(d, z)?;
    Ok(second_variation_terms(body, spec.p(), &zj))
}

fn second_variation_terms(body: &ConvexBody, p: f64, z: &NodalJet) -> SecondVariation {
    let d = body.domain();
    let n = d.n() as f64;
    let h = body.support();
    let hess = body.hessian();
    let hdet = h.component_mul(&hess.det);
    let mass = d.quad(&hdet);
    let term1 = (p - 1.0 - n) / mass * d.quad(&z.v.component_mul(&z.v).component_mul(&hdet));
    let mean = d.quad(&z.v.component_mul(&hdet)) / mass;
    let term2 = (n + 1.0 - p) * mean * mean;
    let term3 = d.quad(&cofactor_pair(hess, &z.g, &z.g).component_mul(&h.component_mul(h))) / mass;
    SecondVariation {
        term1,
        term2,
        term3,
        total: term1 + term2 + term3,
    }
}

/// ε below which [`fd_second_variation`] gives up.
pub const FD_EPS_MIN: f64 = 1e-6;

/// Richardson-extrapolated central second difference of `t ↦ F(h(1 + t z))`
/// over `ε` and `ε/2`.
pub fn fd_second_variation(spec: &ProblemSpec, body: &ConvexBody, z: &ScalarField, eps: f64) -> Result<f64> {
    let d = body.domain();
    let hj = NodalJet::of_body(body)?;
    let hz = hj.mul(&even_jet(d, z)?);
    let f_at = |t: f64| -> Option<f64> {
        let g = hj.add_scaled(t, &hz).geometry();
        g.validate(DEFAULT_PD_TOL).ok()?;
        Some(functional_geom(spec, &g))
    };
    let f0 = functional_geom(spec, body.geometry());
    let mut e = eps;
    while e >= FD_EPS_MIN {
        let second = |e: f64| -> Option<f64> { Some((f_at(e)? - 2.0 * f0 + f_at(-e)?) / (e * e)) };
        if let (Some(a), Some(b)) = (second(e), second(e / 2.0)) {
            return Ok((4.0 * b - a) / 3.0);
        }
        e *= 0.5;
    }
    Err(MinkError::InvalidPath(format!(
        "no valid body along h(1 + t z) for |t| >= {FD_EPS_MIN:e}"
    )))
}

/// `∫ U^{ij} z_i z_j h² − (n+1−p) ∫ z² h dS_h` after removing the mean of `z`
/// against `h dS_h`.
pub fn local_lp_form(body: &ConvexBody, p: f64, z: &ScalarField) -> Result<f64> {
    let d = body.domain();
    let zj = even_jet(d, z)?;
    Ok(local_lp_form_jet(body, p, &zj))
}

fn local_lp_form_jet(body: &ConvexBody, p: f64, z: &NodalJet) -> f64 {
    let d = body.domain();
    let n = d.n() as f64;
    let h = body.support();
    let hess = body.hessian();
    let hdet = h.component_mul(&hess.det);
    let mean = d.quad(&z.v.component_mul(&hdet)) / d.quad(&hdet);
    let zc = z.v.add_scalar(-mean);
    let lhs = d.quad(&cofactor_pair(hess, &z.g, &z.g).component_mul(&h.component_mul(h)));
    let rhs = (n + 1.0 - p) * d.quad(&zc.component_mul(&zc).component_mul(&hdet));
    lhs - rhs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// `h + t w`.
    Additive,
    /// `h e^{t w / h}`.
    Multiplicative,
}

/// A one-parameter family of support functions through a base body.
#[derive(Debug, Clone)]
pub struct PathSpec {
    pub base: ConvexBody,
    /// Even coefficients of the initial velocity `w`.
    pub w: DVector<f64>,
    pub kind: PathKind,
    pub t_grid: Vec<f64>,
}

impl PathSpec {
    pub fn new(base: &ConvexBody, w: DVector<f64>, kind: PathKind) -> Result<Self> {
        base.domain().check_coeffs(&w)?;
        Ok(PathSpec {
            base: base.clone(),
            w,
            kind,
            t_grid: vec![-1e-2, -5e-3, 0.0, 5e-3, 1e-2],
        })
    }

    /// Nodal geometry at parameter `t`, or `None` if the body is invalid there.
    pub fn geometry_at(&self, t: f64) -> Result<Option<SupportGeometry>> {
        let d = self.base.domain();
        let h = NodalJet::of_body(&self.base)?;
        let w = NodalJet::from_coeffs(d, &self.w)?;
        let ht = match self.kind {
            PathKind::Additive => h.add_scaled(t, &w),
            PathKind::Multiplicative => h.mul(&w.div(&h).exp_scaled(t)),
        };
        let g = ht.geometry();
        Ok(g.validate(DEFAULT_PD_TOL).ok().map(|_| g))
    }
}

/// Samples of `g(t)` with analytic and finite-difference `g′(0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GPathReport {
    pub p0: f64,
    pub t: Vec<f64>,
    pub g: Vec<f64>,
    /// Largest `t` magnitude before the first invalid body, if truncated.
    pub truncated_at: Option<f64>,
    pub g0: f64,
    pub s0: f64,
    pub s_prime0: f64,
    pub analytic: f64,
    pub fd: f64,
    pub rel_err: f64,
    /// Norm of the weak Euler-Lagrange residual (pairings with each basis function).
    pub euler_lagrange_norm: f64,
}

/// `g(t) = g₁ − (n+1−p₀) g₂ + (n+1−p₀) s` at nodal geometry `geom`.
fn g_parts(d: &Domain, geom: &SupportGeometry, z: &NodalJet, p0: f64) -> (f64, f64, f64) {
    let n = d.n() as f64;
    let h = &geom.h;
    let det = &geom.hess.det;
    let g1 = d.quad(&cofactor_pair(&geom.hess, &z.g, &z.g).component_mul(&h.component_mul(h)));
    let hdet = h.component_mul(det);
    let g2 = d.quad(&z.v.component_mul(&z.v).component_mul(&hdet));
    let s = d.quad(&z.v.component_mul(&hdet)).powi(2) / d.quad(&hdet);
    let lam = n + 1.0 - p0;
    (g1 - lam * g2 + lam * s, g1, s)
}

/// Pairings `r_a` of the derivative of `g` at `t = 0` with each basis direction:
/// the direct derivative of `g₁` plus the simplified derivative of `g₂`.
pub fn euler_lagrange_pairings(body: &ConvexBody, z: &ScalarField, p0: f64) -> Result<DVector<f64>> {
    let d = body.domain();
    let zj = even_jet(d, z)?;
    Ok(el_pairings(body, &zj, p0))
}

fn el_pairings(body: &ConvexBody, z: &NodalJet, p0: f64) -> DVector<f64> {
    let d = body.domain();
    let n = d.n();
    let nf = n as f64;
    let h = body.support();
    let hess = body.hessian();
    let det = &hess.det;
    let inv = hess.inverse();
    let w = d.weights();
    let lam = nf + 1.0 - p0;
    let t = d.basis();

    // H^{ij} h z_i z_j det H
    let q = cofactor_pair(hess, &z.g, &z.g).component_mul(h);
    let z2det = z.v.component_mul(&z.v).component_mul(det);

    // Zeroth-order density multiplying w.
    let mut zeroth = &q * 2.0 - (&q * 2.0 - &z2det * (nf + 1.0 - 2.0 * p0)) * lam;
    // Second-order coefficient C^{kl} multiplying (w_kl + w δ_kl).
    let mut second: Vec<DVector<f64>> = Vec::new();
    if n == 2 {
        // (H^{ij}H^{kl} − H^{ik}H^{jl}) h² z_i z_j det H
        let zu = [&z.g[0], &z.g[1]];
        let hi = |i: usize, j: usize| -> &DVector<f64> { if i == j { &inv[2 * i] } else { &inv[1] } };
        let h2det = h.component_mul(h).component_mul(det);
        let pairs = [(0usize, 0usize), (0, 1), (1, 1)];
        for &(k, l) in &pairs {
            let mut acc = DVector::zeros(d.node_count());
            for i in 0..2 {
                for j in 0..2 {
                    let coef = hi(i, j).component_mul(hi(k, l)) - hi(i, k).component_mul(hi(j, l));
                    acc += coef.component_mul(zu[i]).component_mul(zu[j]);
                }
            }
            second.push(acc.component_mul(&h2det));
        }
        zeroth += &second[0] + &second[2];
    }
    DVector::from_fn(t.len(), |a, _| {
        let mut s = 0.0;
        for k in 0..t.node_count() {
            let mut v = zeroth[k] * t.values[(a, k)];
            if n == 2 {
                v += second[0][k] * t.hess[0][(a, k)]
                    + 2.0 * second[1][k] * t.hess[1][(a, k)]
                    + second[2][k] * t.hess[2][(a, k)];
            }
            s += w[k] * v;
        }
        s
    })
}

/// Evaluates `g` along the path with `z` an eigenfunction of the base body and
/// eigenvalue `n + 1 − p₀`.
pub fn g_path(path: &PathSpec, z: &ScalarField, p0: f64) -> Result<GPathReport> {
    let body = &path.base;
    let d = body.domain();
    let zj = even_jet(d, z)?;

    let mut ts = Vec::new();
    let mut gs = Vec::new();
    let mut truncated_at = None;
    let mut grid = path.t_grid.clone();
    grid.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    for &t in &grid {
        match path.geometry_at(t)? {
            Some(geom) => {
                ts.push(t);
                gs.push(g_parts(d, &geom, &zj, p0).0);
            }
            None => {
                truncated_at = Some(t.abs());
                break;
            }
        }
    }
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    let ts: Vec<f64> = order.iter().map(|&i| ts[i]).collect();
    let gs: Vec<f64> = order.iter().map(|&i| gs[i]).collect();

    let (g0, _, s0) = g_parts(d, body.geometry(), &zj, p0);
    let eval = |t: f64| -> Result<(f64, f64)> {
        let geom = path
            .geometry_at(t)?
            .ok_or_else(|| MinkError::InvalidPath(format!("path leaves the admissible class at t = {t:e}")))?;
        let (g, _, s) = g_parts(d, &geom, &zj, p0);
        Ok((g, s))
    };
    let eps = 1e-4;
    let (gp, sp) = eval(eps)?;
    let (gm, sm) = eval(-eps)?;
    let (gp2, _) = eval(eps / 2.0)?;
    let (gm2, _) = eval(-eps / 2.0)?;
    let fd1 = (gp - gm) / (2.0 * eps);
    let fd2 = (gp2 - gm2) / eps;
    let fd = (4.0 * fd2 - fd1) / 3.0;
    let s_prime0 = (sp - sm) / (2.0 * eps);

    let r = el_pairings(body, &zj, p0);
    let analytic = r.dot(&path.w);
    let rel_err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-12);
    Ok(GPathReport {
        p0,
        t: ts,
        g: gs,
        truncated_at,
        g0,
        s0,
        s_prime0,
        analytic,
        fd,
        rel_err,
        euler_lagrange_norm: r.norm(),
    })
}

/// The first even eigenfunction of `body` (nodal) and `p₀ = n + 1 − λ₁,ₑ`.
pub fn eigen_direction(body: &ConvexBody) -> Result<(ScalarField, f64)> {
    let r = lambda_1e(body)?;
    let z = body.domain().evaluate(&r.eigenfunction_coeffs())?;
    Ok((z, body.n() as f64 + 1.0 - r.lambda))
}
