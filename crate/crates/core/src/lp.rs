//! L_p combinations of support functions, Wulff (Alexandrov) bodies and checkers
//! for the L_p Brunn-Minkowski and L_p Minkowski inequalities.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::body::{make_body, ConvexBody};
use crate::error::{MinkError, Result};
use crate::sphere::{dot3, Domain, ScalarField};

/// Nodal `q_λ` of an L_p combination.
#[derive(Debug, Clone)]
pub struct LpCombination {
    pub p: f64,
    pub lambda: f64,
    pub q: ScalarField,
}

/// `q_λ = ((1−λ) h_L^p + λ h_K^p)^{1/p}`, or `h_L^{1−λ} h_K^λ` for `p = 0`.
pub fn lp_combination(l: &ConvexBody, k: &ConvexBody, p: f64, lambda: f64) -> Result<LpCombination> {
    if !l.domain().same_as(k.domain()) {
        return Err(MinkError::DomainMismatch("bodies live on different domains".into()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(MinkError::Config(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if !p.is_finite() {
        return Err(MinkError::Config(format!("p must be finite, got {p}")));
    }
    let (hl, hk) = (l.support(), k.support());
    let q = if lambda == 0.0 {
        hl.clone()
    } else if lambda == 1.0 {
        hk.clone()
    } else if p == 0.0 {
        hl.zip_map(hk, |a, b| a.powf(1.0 - lambda) * b.powf(lambda))
    } else {
        hl.zip_map(hk, |a, b| ((1.0 - lambda) * a.powf(p) + lambda * b.powf(p)).powf(1.0 / p))
    };
    Ok(LpCombination {
        p,
        lambda,
        q: ScalarField(q),
    })
}

/// The Wulff shape `∩_u {x · u ≤ q(u)}` over the domain nodes.
#[derive(Debug, Clone)]
pub struct WulffShape {
    /// Nodal support function of the shape.
    pub support: ScalarField,
    /// Nodes where the support equals `q` within the equality tolerance.
    pub equality: Vec<usize>,
    pub volume: f64,
    /// The projected support as a body, when it is admissible.
    pub body: Option<ConvexBody>,
    pub vertices: Vec<[f64; 3]>,
}

impl WulffShape {
    pub fn is_full_equality(&self) -> bool {
        self.equality.len() == self.support.len()
    }
}

/// Relative tolerance of the equality set.
pub const EQUALITY_TOL: f64 = 1e-7;

pub fn wulff_body(domain: &Arc<Domain>, q: &ScalarField) -> Result<WulffShape> {
    domain.check_field(q)?;
    if let Some(k) = q.0.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(MinkError::DegenerateWulff(format!(
            "q must be positive for the origin to be interior; q = {} at node {k}",
            q.0[k]
        )));
    }
    let (vertices, poly_volume) = if domain.n() == 1 {
        polygon_wulff(domain.nodes(), &q.0)?
    } else {
        polytope_wulff(domain.nodes(), &q.0)?
    };
    let support = DVector::from_iterator(
        domain.node_count(),
        domain
            .nodes()
            .iter()
            .map(|u| vertices.iter().map(|v| dot3(*u, *v)).fold(f64::NEG_INFINITY, f64::max)),
    );
    let tol = EQUALITY_TOL * q.0.amax();
    let equality: Vec<usize> = (0..support.len()).filter(|&k| support[k] >= q.0[k] - tol).collect();
    let support = ScalarField(support);
    let body = make_body(domain, domain.project_even(&support)?).ok();
    let volume = match &body {
        Some(b) if equality.len() == support.len() => b.volume(),
        _ => poly_volume,
    };
    Ok(WulffShape {
        support,
        equality,
        volume,
        body,
        vertices,
    })
}

/// Polar hull on S^1: the polar points `u_i / q_i` are hulled (monotone chain) and
/// each hull edge yields one vertex of the Wulff polygon.
fn polygon_wulff(nodes: &[[f64; 3]], q: &DVector<f64>) -> Result<(Vec<[f64; 3]>, f64)> {
    let mut pts: Vec<[f64; 2]> = nodes
        .iter()
        .zip(q.iter())
        .map(|(u, &qv)| [u[0] / qv, u[1] / qv])
        .collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() + 1);
    for &pt in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], pt) <= 0.0 {
            hull.pop();
        }
        hull.push(pt);
    }
    let lower = hull.len() + 1;
    for &pt in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], pt) <= 0.0 {
            hull.pop();
        }
        hull.push(pt);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(MinkError::DegenerateWulff("polar hull has fewer than three vertices".into()));
    }
    let m = hull.len();
    let mut verts = Vec::with_capacity(m);
    for i in 0..m {
        let (a, b) = (hull[i], hull[(i + 1) % m]);
        // Vertex v with v·a = v·b = 1.
        let det = a[0] * b[1] - a[1] * b[0];
        if det.abs() < f64::MIN_POSITIVE {
            return Err(MinkError::DegenerateWulff("polar hull edge through the origin".into()));
        }
        verts.push([(b[1] - a[1]) / det, (a[0] - b[0]) / det, 0.0]);
    }
    let mut area = 0.0;
    for i in 0..m {
        let (a, b) = (verts[i], verts[(i + 1) % m]);
        area += a[0] * b[1] - a[1] * b[0];
    }
    Ok((verts, 0.5 * area))
}

#[derive(Debug, Clone)]
struct Facet {
    normal: [f64; 3],
    offset: f64,
    poly: Vec<[f64; 3]>,
}

/// Halfspace clipping on S^2: a bounding cube is cut by every nodal halfspace.
fn polytope_wulff(nodes: &[[f64; 3]], q: &DVector<f64>) -> Result<(Vec<[f64; 3]>, f64)> {
    let big = 10.0 * q.amax() * 3f64.sqrt();
    let mut facets = cube(big);
    let eps = 1e-12 * big;
    for (u, &qv) in nodes.iter().zip(q.iter()) {
        clip(&mut facets, *u, qv, eps);
        if facets.len() < 4 {
            return Err(MinkError::DegenerateWulff("halfspace intersection collapsed".into()));
        }
    }
    let mut verts: Vec<[f64; 3]> = Vec::new();
    let mut volume = 0.0;
    for f in &facets {
        volume += f.offset * polygon_area(&f.poly, f.normal) / 3.0;
        for v in &f.poly {
            if v.iter().any(|c| c.abs() > big * (1.0 - 1e-9)) {
                return Err(MinkError::DegenerateWulff("halfspace intersection is unbounded".into()));
            }
            if !verts.iter().any(|w| dist3(*w, *v) <= eps) {
                verts.push(*v);
            }
        }
    }
    Ok((verts, volume))
}

fn cube(b: f64) -> Vec<Facet> {
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        for s in [1.0, -1.0] {
            let mut normal = [0.0; 3];
            normal[axis] = s;
            let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
            let corners = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
            let mut poly: Vec<[f64; 3]> = corners
                .iter()
                .map(|&(a, c)| {
                    let mut p = [0.0; 3];
                    p[axis] = s * b;
                    p[i] = a * b;
                    p[j] = c * b;
                    p
                })
                .collect();
            orient(&mut poly, normal);
            out.push(Facet { normal, offset: b, poly });
        }
    }
    out
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub3(a, b);
    dot3(d, d).sqrt()
}

fn polygon_area(poly: &[[f64; 3]], normal: [f64; 3]) -> f64 {
    let mut acc = [0.0; 3];
    for i in 1..poly.len().saturating_sub(1) {
        let c = crate::sphere::cross(sub3(poly[i], poly[0]), sub3(poly[i + 1], poly[0]));
        for a in 0..3 {
            acc[a] += c[a];
        }
    }
    0.5 * dot3(acc, normal)
}

/// Sorts a convex planar point set counter-clockwise around `normal`.
fn orient(poly: &mut [[f64; 3]], normal: [f64; 3]) {
    let n = poly.len() as f64;
    let mut c = [0.0; 3];
    for p in poly.iter() {
        for a in 0..3 {
            c[a] += p[a] / n;
        }
    }
    let e1 = {
        let d = sub3(poly[0], c);
        let r = dot3(d, d).sqrt();
        [d[0] / r, d[1] / r, d[2] / r]
    };
    let e2 = crate::sphere::cross(normal, e1);
    poly.sort_by(|a, b| {
        let (da, db) = (sub3(*a, c), sub3(*b, c));
        let ta = dot3(da, e2).atan2(dot3(da, e1));
        let tb = dot3(db, e2).atan2(dot3(db, e1));
        ta.total_cmp(&tb)
    });
}

fn clip(facets: &mut Vec<Facet>, u: [f64; 3], q: f64, eps: f64) {
    let side = |x: [f64; 3]| dot3(x, u) - q;
    if facets.iter().all(|f| f.poly.iter().all(|&x| side(x) <= eps)) {
        return;
    }
    let mut cut: Vec<[f64; 3]> = Vec::new();
    let push_cut = |x: [f64; 3], cut: &mut Vec<[f64; 3]>| {
        if !cut.iter().any(|w| dist3(*w, x) <= eps) {
            cut.push(x);
        }
    };
    let mut kept = Vec::with_capacity(facets.len() + 1);
    for f in facets.drain(..) {
        let m = f.poly.len();
        let mut out: Vec<[f64; 3]> = Vec::with_capacity(m + 1);
        for i in 0..m {
            let (a, b) = (f.poly[i], f.poly[(i + 1) % m]);
            let (sa, sb) = (side(a), side(b));
            if sa <= eps {
                out.push(a);
                if sa >= -eps {
                    push_cut(a, &mut cut);
                }
            }
            if (sa < -eps && sb > eps) || (sa > eps && sb < -eps) {
                let t = sa / (sa - sb);
                let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])];
                out.push(x);
                push_cut(x, &mut cut);
            }
        }
        if out.len() >= 3 && polygon_area(&out, f.normal) > eps * eps {
            kept.push(Facet { poly: out, ..f });
        }
    }
    if cut.len() >= 3 {
        orient(&mut cut, u);
        if polygon_area(&cut, u) > eps * eps {
            kept.push(Facet {
                normal: u,
                offset: q,
                poly: cut,
            });
        }
    }
    *facets = kept;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated { margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub p: f64,
    pub lambda: Option<f64>,
    pub bodies: [String; 2],
    pub tolerance: f64,
    pub verdict: Verdict,
}

fn report(lhs: f64, rhs: f64, p: f64, lambda: Option<f64>, l: &ConvexBody, k: &ConvexBody) -> InequalityReport {
    let margin = lhs - rhs;
    let tolerance = 1e-9 * lhs.abs().max(rhs.abs()).max(1.0);
    InequalityReport {
        lhs,
        rhs,
        margin,
        p,
        lambda,
        bodies: [l.meta.name.clone(), k.meta.name.clone()],
        tolerance,
        verdict: if margin >= -tolerance {
            Verdict::Holds
        } else {
            Verdict::Violated { margin }
        },
    }
}

/// `V((1−λ)L +_p λK) ≥ ((1−λ)V(L)^{p/(n+1)} + λV(K)^{p/(n+1)})^{(n+1)/p}`,
/// with the geometric-mean right side at `p = 0`.
pub fn check_lp_bm(l: &ConvexBody, k: &ConvexBody, p: f64, lambda: f64) -> Result<InequalityReport> {
    let comb = lp_combination(l, k, p, lambda)?;
    let w = wulff_body(l.domain(), &comb.q)?;
    let n1 = l.n() as f64 + 1.0;
    let (vl, vk) = (l.volume(), k.volume());
    let rhs = if p == 0.0 {
        vl.powf(1.0 - lambda) * vk.powf(lambda)
    } else {
        ((1.0 - lambda) * vl.powf(p / n1) + lambda * vk.powf(p / n1)).powf(n1 / p)
    };
    Ok(report(w.volume, rhs, p, Some(lambda), l, k))
}

/// `(1/p) ∫ h_L^p h_K^{1−p} dS_K ≥ ((n+1)/p) V(K)^{1−p/(n+1)} V(L)^{p/(n+1)}`, or its
/// logarithmic form at `p = 0`.
pub fn check_lp_minkowski(l: &ConvexBody, k: &ConvexBody, p: f64) -> Result<InequalityReport> {
    if !l.domain().same_as(k.domain()) {
        return Err(MinkError::DomainMismatch("bodies live on different domains".into()));
    }
    let d = k.domain();
    let n1 = k.n() as f64 + 1.0;
    let (hl, hk, det) = (l.support(), k.support(), &k.hessian().det);
    let (vl, vk) = (l.volume(), k.volume());
    let (lhs, rhs) = if p == 0.0 {
        let dens = DVector::from_fn(hk.len(), |i, _| (hl[i] / hk[i]).ln() * hk[i] * det[i] / n1);
        (d.quad(&dens) / vk, (vl / vk).ln() / n1)
    } else {
        let dens = DVector::from_fn(hk.len(), |i, _| hl[i].powf(p) * hk[i].powf(1.0 - p) * det[i]);
        (d.quad(&dens) / p, n1 / p * vk.powf(1.0 - p / n1) * vl.powf(p / n1))
    };
    Ok(report(lhs, rhs, p, None, l, k))
}
