//! Even convex bodies represented by their support functions, the catalog of named
//! bodies, and the surface, L_p and cone-volume measures.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{InvalidReason, MinkError, Result};
use crate::sphere::{dot3, Domain, DomainSpec, HessianField, ScalarField, TangentField};

/// Smallest eigenvalue of `∇²h + h Id` a body must exceed at every node.
pub const DEFAULT_PD_TOL: f64 = 1e-8;

/// Nodal support data: `h`, its tangential gradient and `H = ∇²h + h Id`.
///
/// Usually derived from basis coefficients, but paths such as `h(1 + t z)` are
/// assembled directly through the product rule so no projection error enters.
#[derive(Debug, Clone)]
pub struct SupportGeometry {
    pub h: DVector<f64>,
    pub grad: TangentField,
    pub hess: HessianField,
}

impl SupportGeometry {
    pub fn from_coeffs(domain: &Domain, coeffs: &DVector<f64>) -> Result<Self> {
        Ok(SupportGeometry {
            h: domain.evaluate(coeffs)?.0,
            grad: domain.tangent_gradient(coeffs)?,
            hess: domain.covariant_hessian(coeffs)?,
        })
    }

    /// Geometry of `h + t·w` where `w` is given by value, gradient and covariant Hessian.
    pub fn perturbed(
        &self,
        t: f64,
        w: &DVector<f64>,
        w_grad: &[DVector<f64>],
        w_hess: &[DVector<f64>],
    ) -> Self {
        let n = self.hess.dim();
        let h = &self.h + w * t;
        let grad = TangentField {
            comps: self
                .grad
                .comps
                .iter()
                .zip(w_grad)
                .map(|(g, d)| g + d * t)
                .collect(),
        };
        let mut entries: Vec<DVector<f64>> = self
            .hess
            .entries
            .iter()
            .zip(w_hess)
            .map(|(e, d)| e + d * t)
            .collect();
        entries[0] += w * t;
        if n == 2 {
            entries[2] += w * t;
        }
        SupportGeometry {
            h,
            grad,
            hess: HessianField::from_entries(n, entries),
        }
    }

    pub fn validate(&self, pd_tol: f64) -> Result<()> {
        if let Some(k) = self.h.iter().position(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(MinkError::InvalidBody {
                node: k,
                reason: InvalidReason::NonpositiveSupport,
            });
        }
        if let Some(k) = self
            .hess
            .min_eig
            .iter()
            .position(|&e| e <= pd_tol || !e.is_finite())
        {
            return Err(MinkError::InvalidBody {
                node: k,
                reason: InvalidReason::HessianNotPd,
            });
        }
        Ok(())
    }

    pub fn volume(&self, domain: &Domain) -> f64 {
        let n = domain.n() as f64;
        domain.quad(&self.h.component_mul(&self.hess.det)) / (n + 1.0)
    }
}

/// Provenance recorded with a body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BodyMeta {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A validated member of the smooth, strictly convex, origin-symmetric class.
#[derive(Debug, Clone)]
pub struct ConvexBody {
    domain: Arc<Domain>,
    coeffs: DVector<f64>,
    geom: SupportGeometry,
    volume: f64,
    pub meta: BodyMeta,
}

/// Builds a validated body with the default positive-definiteness tolerance.
pub fn make_body(domain: &Arc<Domain>, coeffs: DVector<f64>) -> Result<ConvexBody> {
    ConvexBody::with_tolerance(domain, coeffs, DEFAULT_PD_TOL)
}

impl ConvexBody {
    pub fn with_tolerance(domain: &Arc<Domain>, coeffs: DVector<f64>, pd_tol: f64) -> Result<Self> {
        let geom = SupportGeometry::from_coeffs(domain, &coeffs)?;
        geom.validate(pd_tol)?;
        let volume = geom.volume(domain);
        Ok(ConvexBody {
            domain: Arc::clone(domain),
            coeffs,
            geom,
            volume,
            meta: BodyMeta::default(),
        })
    }

    pub fn with_meta(mut self, meta: BodyMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.domain.n()
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn geometry(&self) -> &SupportGeometry {
        &self.geom
    }

    pub fn support(&self) -> &DVector<f64> {
        &self.geom.h
    }

    pub fn hessian(&self) -> &HessianField {
        &self.geom.hess
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// `c · K`.
    pub fn scaled(&self, c: f64) -> Result<ConvexBody> {
        Ok(make_body(&self.domain, &self.coeffs * c)?.with_meta(self.meta.clone()))
    }

    /// The dilate with `(n+1) V = ω_n`.
    pub fn normalized(&self) -> Result<ConvexBody> {
        let n = self.n() as f64;
        let target = self.domain.omega() / (n + 1.0);
        self.scaled((target / self.volume).powf(1.0 / (n + 1.0)))
    }

    /// Surface area density `det H`.
    pub fn surface_measure(&self) -> MeasureField {
        MeasureField {
            density: self.geom.hess.det.clone(),
            kind: MeasureKind::Surface,
        }
    }

    /// `h^{1-p} det H`.
    pub fn lp_measure(&self, p: f64) -> MeasureField {
        let density = self
            .geom
            .h
            .zip_map(&self.geom.hess.det, |h, d| h.powf(1.0 - p) * d);
        MeasureField {
            density,
            kind: MeasureKind::Lp(p),
        }
    }

    /// Cone volume density `h det H / (n + 1)`.
    pub fn cone_measure(&self) -> MeasureField {
        let n = self.n() as f64;
        MeasureField {
            density: self.geom.h.component_mul(&self.geom.hess.det) / (n + 1.0),
            kind: MeasureKind::Cone,
        }
    }

    /// Boundary points `x(u) = h(u) u + ∇h(u)`; each satisfies `x · u = h(u)`.
    pub fn boundary_points(&self) -> Vec<[f64; 3]> {
        let d = &self.domain;
        (0..d.node_count())
            .map(|k| {
                let u = d.nodes()[k];
                let fr = d.frames()[k];
                let mut x = [0.0; 3];
                for (a, xa) in x.iter_mut().enumerate() {
                    *xa = self.geom.h[k] * u[a];
                    for (i, e) in fr.iter().enumerate().take(d.n()) {
                        *xa += self.geom.grad.comps[i][k] * e[a];
                    }
                }
                x
            })
            .collect()
    }

    /// Support function of `T(K)`, projected to the basis and validated.
    /// `t` is `(n+1) × (n+1)`.
    pub fn linear_image(&self, t: &DMatrix<f64>) -> Result<ConvexBody> {
        let dim = self.n() + 1;
        if t.nrows() != dim || t.ncols() != dim {
            return Err(MinkError::Config(format!(
                "linear map must be {dim}×{dim}"
            )));
        }
        let d = &self.domain;
        let mut dirs = Vec::with_capacity(d.node_count());
        let mut scale = Vec::with_capacity(d.node_count());
        for u in d.nodes() {
            // h_{TK}(u) = h_K(Tᵀu)
            let mut v = [0.0; 3];
            for (j, vj) in v.iter_mut().enumerate().take(dim) {
                *vj = (0..dim).map(|i| t[(i, j)] * u[i]).sum();
            }
            let r = dot3(v, v).sqrt();
            dirs.push([v[0] / r, v[1] / r, v[2] / r]);
            scale.push(r);
        }
        let base = d.evaluate_at(&self.coeffs, &dirs)?;
        let vals = DVector::from_iterator(d.node_count(), (0..d.node_count()).map(|k| base[k] * scale[k]));
        let coeffs = d.project_even(&ScalarField(vals))?;
        make_body(d, coeffs)
    }

    fn bare(&self) -> ConvexBody {
        ConvexBody {
            meta: BodyMeta::default(),
            ..self.clone()
        }
    }

    pub fn to_file(&self) -> BodyFile {
        BodyFile {
            version: 1,
            domain: self.domain.spec(),
            coeffs: self.coeffs.iter().copied().collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn without_meta(&self) -> ConvexBody {
        self.bare()
    }
}

/// Sup-norm distance between support functions at the nodes.
pub fn support_distance(b1: &ConvexBody, b2: &ConvexBody) -> Result<f64> {
    if !b1.domain.same_as(&b2.domain) {
        return Err(MinkError::DomainMismatch(
            "bodies live on different domains".into(),
        ));
    }
    Ok((b1.support() - b2.support()).amax())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Surface,
    Lp(f64),
    Cone,
}

#[derive(Debug, Clone)]
pub struct MeasureField {
    pub density: DVector<f64>,
    pub kind: MeasureKind,
}

impl MeasureField {
    pub fn total(&self, domain: &Domain) -> f64 {
        domain.quad(&self.density)
    }
}

/// Named bodies of the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CatalogEntry {
    Ball { r: f64 },
    /// Rows of the symmetric positive definite matrix `A`, with `h(u) = |A u|`.
    Ellipsoid { a: Vec<Vec<f64>> },
    /// `h(u) = ‖u‖_{q'}` projected to the basis, heat-filtered for `smoothing > 0`.
    /// Without an explicit smoothing the plain projection is tried first and the
    /// smallest admissible time on [`SMOOTHING_LADDER`] is used if it fails.
    LqBall {
        q: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smoothing: Option<f64>,
    },
    RandomEven {
        seed: u64,
        amplitude: f64,
        max_degree: usize,
    },
}

impl CatalogEntry {
    pub fn label(&self) -> &'static str {
        match self {
            CatalogEntry::Ball { .. } => "ball",
            CatalogEntry::Ellipsoid { .. } => "ellipsoid",
            CatalogEntry::LqBall { .. } => "lq_ball",
            CatalogEntry::RandomEven { .. } => "random_even",
        }
    }
}

/// Builds a catalog body on `domain`.
pub fn catalog(domain: &Arc<Domain>, entry: &CatalogEntry) -> Result<ConvexBody> {
    let mut recorded = entry.clone();
    let body = match entry {
        CatalogEntry::Ball { r } => {
            if !(*r > 0.0) {
                return Err(MinkError::Config(format!("ball radius must be positive, got {r}")));
            }
            make_body(domain, domain.constant_coeffs(*r))?
        }
        CatalogEntry::Ellipsoid { a } => ellipsoid(domain, a)?,
        CatalogEntry::LqBall { q, smoothing } => {
            let (b, t) = lq_ball(domain, *q, *smoothing)?;
            recorded = CatalogEntry::LqBall {
                q: *q,
                smoothing: (t > 0.0).then_some(t),
            };
            b
        }
        CatalogEntry::RandomEven {
            seed,
            amplitude,
            max_degree,
        } => random_even(domain, *seed, *amplitude, *max_degree)?,
    };
    let mut params = serde_json::to_value(&recorded)?;
    if let Some(o) = params.as_object_mut() {
        o.remove("name");
    }
    let seed = match entry {
        CatalogEntry::RandomEven { seed, .. } => Some(*seed),
        _ => None,
    };
    Ok(body.with_meta(BodyMeta {
        name: entry.label().into(),
        params,
        seed,
    }))
}

pub fn ball(domain: &Arc<Domain>, r: f64) -> Result<ConvexBody> {
    catalog(domain, &CatalogEntry::Ball { r })
}

fn ellipsoid(domain: &Arc<Domain>, a: &[Vec<f64>]) -> Result<ConvexBody> {
    let dim = domain.n() + 1;
    if a.len() != dim || a.iter().any(|r| r.len() != dim) {
        return Err(MinkError::Config(format!("ellipsoid matrix must be {dim}×{dim}")));
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| a[i][j]);
    if (&m - m.transpose()).amax() > 1e-12 {
        return Err(MinkError::Config("ellipsoid matrix must be symmetric".into()));
    }
    if m.clone().cholesky().is_none() {
        return Err(MinkError::Config("ellipsoid matrix must be positive definite".into()));
    }
    let vals = ScalarField::from_fn(domain, |u| {
        let mut s = 0.0;
        for i in 0..dim {
            let ai: f64 = (0..dim).map(|j| m[(i, j)] * u[j]).sum();
            s += ai * ai;
        }
        s.sqrt()
    });
    make_body(domain, domain.project_even(&vals)?)
}

/// Heat times tried, in order, when an `lq_ball` projection is not admissible.
pub const SMOOTHING_LADDER: [f64; 16] = [
    1e-5, 2e-5, 5e-5, 1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 0.1, 0.2, 0.5, 1.0,
];

/// Builds `lq_ball(q)` and returns the heat time used.
pub fn lq_ball(domain: &Arc<Domain>, q: f64, smoothing: Option<f64>) -> Result<(ConvexBody, f64)> {
    if !(q >= 2.0) || !q.is_finite() {
        return Err(MinkError::Config(format!("lq_ball requires finite q >= 2, got {q}")));
    }
    let dual = q / (q - 1.0);
    let dim = domain.n() + 1;
    let vals = ScalarField::from_fn(domain, |u| {
        u.iter()
            .take(dim)
            .map(|c| c.abs().powf(dual))
            .sum::<f64>()
            .powf(1.0 / dual)
    });
    let raw = domain.project_even(&vals)?;
    if let Some(t) = smoothing {
        if !(t >= 0.0) {
            return Err(MinkError::Config(format!("smoothing must be nonnegative, got {t}")));
        }
        return Ok((make_body(domain, domain.heat_filter(&raw, t))?, t));
    }
    let mut last = match make_body(domain, raw.clone()) {
        Ok(b) => return Ok((b, 0.0)),
        Err(e) => e,
    };
    for &t in &SMOOTHING_LADDER {
        match make_body(domain, domain.heat_filter(&raw, t)) {
            Ok(b) => return Ok((b, t)),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// `lq_ball(q)` for every `q` in `schedule` with one common heat time: the
/// smallest ladder value (or 0) admissible for all members.
pub fn lq_family(domain: &Arc<Domain>, schedule: &[f64]) -> Result<(Vec<ConvexBody>, f64)> {
    let mut t = 0.0f64;
    for &q in schedule {
        t = t.max(lq_ball(domain, q, None)?.1);
    }
    let bodies = schedule
        .iter()
        .map(|&q| catalog(domain, &CatalogEntry::LqBall { q, smoothing: Some(t) }))
        .collect::<Result<Vec<_>>>()?;
    Ok((bodies, t))
}

fn random_even(domain: &Arc<Domain>, seed: u64, amplitude: f64, max_degree: usize) -> Result<ConvexBody> {
    if !(amplitude >= 0.0) {
        return Err(MinkError::Config("amplitude must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = &domain.basis().labels;
    let mut dir = DVector::zeros(domain.basis_len());
    for (a, lab) in labels.iter().enumerate() {
        // Always draw, so that the stream does not depend on max_degree.
        let r: f64 = rng.random_range(-1.0..1.0);
        if lab.degree > 0 && lab.degree <= max_degree {
            dir[a] = r;
        }
    }
    let nodal = domain.evaluate(&dir)?.0;
    let peak = nodal.amax();
    if peak > 0.0 {
        dir /= peak;
    }
    let base = domain.constant_coeffs(1.0);
    let mut amp = amplitude;
    let mut last_err = None;
    for _ in 0..40 {
        match make_body(domain, &base + &dir * amp) {
            Ok(b) => return Ok(b),
            Err(e) => {
                last_err = Some(e);
                amp *= 0.5;
            }
        }
    }
    Err(last_err.unwrap_or_else(|| MinkError::Numeric("random_even failed".into())))
}

/// Serialized body.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyFile {
    pub version: u32,
    pub domain: DomainSpec,
    pub coeffs: Vec<f64>,
    #[serde(default)]
    pub meta: BodyMeta,
}

impl BodyFile {
    /// Rebuilds the body, regenerating the domain from its spec.
    pub fn into_body(self) -> Result<ConvexBody> {
        let domain = Arc::new(self.domain.build()?);
        self.into_body_on(&domain)
    }

    /// Rebuilds the body on an existing domain (which must match the recorded spec).
    pub fn into_body_on(self, domain: &Arc<Domain>) -> Result<ConvexBody> {
        if self.version != 1 {
            return Err(MinkError::Config(format!("unsupported body version {}", self.version)));
        }
        if domain.spec() != self.domain {
            return Err(MinkError::DomainMismatch("body file domain differs".into()));
        }
        let coeffs = DVector::from_vec(self.coeffs);
        Ok(make_body(domain, coeffs)?.with_meta(self.meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::build_domain;
    use std::f64::consts::PI;

    fn circle(res: usize) -> Arc<Domain> {
        Arc::new(build_domain(1, res).unwrap())
    }

    fn coeffs_with(d: &Domain, entries: &[(usize, f64)]) -> DVector<f64> {
        let mut c = d.constant_coeffs(1.0);
        for &(a, v) in entries {
            c[a] = v;
        }
        c
    }

    #[test]
    fn unit_ball_area() {
        let d = circle(8);
        let b = make_body(&d, d.constant_coeffs(1.0)).unwrap();
        assert!((b.volume() - PI).abs() < 1e-12);
        let d2 = Arc::new(build_domain(2, 6).unwrap());
        let b2 = ball(&d2, 1.0).unwrap();
        assert!((b2.volume() - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_pd_and_accepts_mild_perturbation() {
        let d = circle(8);
        match make_body(&d, coeffs_with(&d, &[(1, 0.5)])) {
            Err(MinkError::InvalidBody { reason, .. }) => assert_eq!(reason, InvalidReason::HessianNotPd),
            other => panic!("unexpected {other:?}"),
        }
        let b = make_body(&d, coeffs_with(&d, &[(1, 0.1)])).unwrap();
        assert!((b.hessian().det[0] - 0.7).abs() < 1e-12);
        let neg = make_body(&d, d.constant_coeffs(-1.0));
        assert!(matches!(
            neg,
            Err(MinkError::InvalidBody {
                reason: InvalidReason::NonpositiveSupport,
                ..
            })
        ));
    }

    #[test]
    fn ellipse_area_and_boundary() {
        let d = circle(32);
        let e = catalog(&d, &CatalogEntry::Ellipsoid { a: vec![vec![2.0, 0.0], vec![0.0, 1.0]] }).unwrap();
        assert!((e.volume() - 2.0 * PI).abs() < 1e-8);
        assert!((e.support()[0] - 2.0).abs() < 1e-9);
        let quarter = d.node_count() / 4;
        assert!((e.support()[quarter] - 1.0).abs() < 1e-9);
        for x in e.boundary_points() {
            assert!(((x[0] / 2.0).powi(2) + x[1] * x[1] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn measures_agree_with_definitions() {
        let d = circle(16);
        let b = random_even(&d, 7, 0.1, 6).unwrap();
        let cone = b.cone_measure();
        assert!((cone.total(&d) - b.volume()).abs() < 1e-13);
        let lp1 = b.lp_measure(1.0);
        assert!((lp1.density - b.surface_measure().density).amax() < 1e-15);
        let ballb = ball(&d, 1.0).unwrap();
        for p in [-0.5, 0.0, 0.5] {
            assert!((ballb.lp_measure(p).density.add_scalar(-1.0)).amax() < 1e-13);
        }
    }

    #[test]
    fn support_distance_examples() {
        let d = circle(16);
        let b1 = ball(&d, 1.0).unwrap();
        let b2 = ball(&d, 2.0).unwrap();
        assert!((support_distance(&b1, &b2).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(support_distance(&b1, &b1).unwrap(), 0.0);
        let e = catalog(&d, &CatalogEntry::Ellipsoid { a: vec![vec![2.0, 0.0], vec![0.0, 1.0]] }).unwrap();
        assert!((support_distance(&b1, &e).unwrap() - 1.0).abs() < 1e-8);
        let other = ball(&circle(8), 1.0).unwrap();
        assert!(matches!(support_distance(&b1, &other), Err(MinkError::DomainMismatch(_))));
    }

    #[test]
    fn lq2_is_the_unit_ball() {
        let d = circle(16);
        let b = catalog(&d, &CatalogEntry::LqBall { q: 2.0, smoothing: None }).unwrap();
        assert!((b.support().add_scalar(-1.0)).amax() < 1e-10);
    }

    #[test]
    fn lq_family_shares_one_admissible_smoothing() {
        let d = circle(64);
        let (fam, t) = lq_family(&d, &[4.0, 16.0]).unwrap();
        assert!(t > 0.0);
        assert!(lq_ball(&d, 16.0, Some(0.0)).is_err());
        assert_eq!(fam.len(), 2);
        assert_eq!(fam[1].meta.params["smoothing"], serde_json::json!(t));
    }

    #[test]
    fn random_even_is_deterministic() {
        let d = circle(16);
        let a = random_even(&d, 42, 0.2, 8).unwrap();
        let b = random_even(&d, 42, 0.2, 8).unwrap();
        assert_eq!(a.coeffs(), b.coeffs());
        let c = random_even(&d, 43, 0.2, 8).unwrap();
        assert!(support_distance(&a, &c).unwrap() > 1e-3);
    }

    #[test]
    fn body_file_round_trip() {
        let d = circle(8);
        let b = catalog(&d, &CatalogEntry::RandomEven { seed: 3, amplitude: 0.1, max_degree: 4 }).unwrap();
        let json = serde_json::to_string(&b.to_file()).unwrap();
        let back: BodyFile = serde_json::from_str(&json).unwrap();
        let b2 = back.into_body().unwrap();
        assert_eq!(b.coeffs(), b2.coeffs());
        assert_eq!(b2.meta.name, "random_even");
        assert_eq!(b2.meta.seed, Some(3));
    }
}
