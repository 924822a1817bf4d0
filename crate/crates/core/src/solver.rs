//! The variational solver for the even L_p Minkowski problem: the functional
//! `F_{p,f}`, its gradient and Hessian, the normalized residual, the Jacobi
//! matrix, the minimizer and the multi-start non-uniqueness probe.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{catalog, make_body, support_distance, BodyFile, BodyMeta, CatalogEntry, ConvexBody, SupportGeometry, DEFAULT_PD_TOL};
use crate::error::{MinkError, Result};
use crate::spectrum::{lambda_1e, mass_matrix, stiffness, Deflation};
use crate::sphere::{Domain, ScalarField};

/// One instance of the L_p Minkowski problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    p: f64,
    f: ScalarField,
    domain: Arc<Domain>,
    f_total: f64,
}

/// Accepted iterations without a residual improvement before a solve is declared stagnated.
pub const STALL_WINDOW: usize = 30;

/// Relative tolerance for the evenness check on `f`.
const EVEN_TOL: f64 = 1e-12;

impl ProblemSpec {
    pub fn new(domain: &Arc<Domain>, p: f64, f: ScalarField) -> Result<Self> {
        domain.check_field(&f)?;
        let n = domain.n() as f64;
        if !p.is_finite() || p <= -n - 1.0 {
            return Err(MinkError::Validation(format!("p must exceed -(n+1) = {}, got {p}", -n - 1.0)));
        }
        if let Some(k) = f.0.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(MinkError::Validation(format!("f must be positive; f = {} at node {k}", f.0[k])));
        }
        let scale = f.0.amax();
        for (k, &a) in domain.antipodes().iter().enumerate() {
            if (f.0[k] - f.0[a]).abs() > EVEN_TOL * scale {
                return Err(MinkError::Validation(format!("f is not even at node {k}")));
            }
        }
        let f_total = domain.quad(&f.0);
        Ok(ProblemSpec {
            p,
            f,
            domain: Arc::clone(domain),
            f_total,
        })
    }

    pub fn constant(domain: &Arc<Domain>, p: f64, c: f64) -> Result<Self> {
        Self::new(domain, p, ScalarField::constant(domain, c))
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    fn check(&self, body: &ConvexBody) -> Result<()> {
        if !self.domain.same_as(body.domain()) {
            return Err(MinkError::DomainMismatch("body and problem live on different domains".into()));
        }
        Ok(())
    }
}

/// Quantities shared by the functional, its derivatives and the residual.
#[derive(Debug, Clone)]
pub(crate) struct Pointwise {
    /// `h^p f`.
    pub hp_f: DVector<f64>,
    /// `∫ h^p f`.
    pub i_p: f64,
    /// `(n+1) V`.
    pub mass: f64,
}

impl Pointwise {
    pub fn new(spec: &ProblemSpec, g: &SupportGeometry) -> Self {
        let d = &spec.domain;
        let hp_f = g.h.zip_map(&spec.f.0, |h, f| h.powf(spec.p) * f);
        let i_p = d.quad(&hp_f);
        let mass = d.quad(&g.h.component_mul(&g.hess.det));
        Pointwise { hp_f, i_p, mass }
    }
}

pub(crate) fn functional_geom(spec: &ProblemSpec, g: &SupportGeometry) -> f64 {
    let d = &spec.domain;
    let n1 = d.n() as f64 + 1.0;
    let v = d.quad(&g.h.component_mul(&g.hess.det)) / n1;
    let first = if spec.p == 0.0 {
        d.quad(&g.h.zip_map(&spec.f.0, |h, f| h.ln() * f)) / spec.f_total
    } else {
        let pw = Pointwise::new(spec, g);
        (pw.i_p / spec.f_total).ln() / spec.p
    };
    first - v.ln() / n1
}

/// `F_{p,f}(h)`.
pub fn functional_f(spec: &ProblemSpec, body: &ConvexBody) -> Result<f64> {
    spec.check(body)?;
    Ok(functional_geom(spec, body.geometry()))
}

/// Nodal density of the first variation: `h^{p-1} f / ∫h^p f − det H / ((n+1) V)`.
pub(crate) fn gradient_density(spec: &ProblemSpec, g: &SupportGeometry) -> DVector<f64> {
    let pw = Pointwise::new(spec, g);
    let lhs = pw.hp_f.component_div(&g.h) / pw.i_p;
    lhs - &g.hess.det / pw.mass
}

pub(crate) fn gradient_geom(spec: &ProblemSpec, g: &SupportGeometry) -> DVector<f64> {
    let d = &spec.domain;
    let dens = gradient_density(spec, g).component_mul(d.weights());
    &d.basis().values * dens
}

/// Pairings of the first-variation density with every basis function.
pub fn gradient_f(spec: &ProblemSpec, body: &ConvexBody) -> Result<DVector<f64>> {
    spec.check(body)?;
    Ok(gradient_geom(spec, body.geometry()))
}

/// Returns `(residual, c)` for nodal geometry.
pub(crate) fn residual_geom(spec: &ProblemSpec, g: &SupportGeometry) -> (f64, f64) {
    let pw = Pointwise::new(spec, g);
    let c = pw.mass / pw.i_p;
    let p = spec.p;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for k in 0..g.h.len() {
        let lhs = g.h[k].powf(1.0 - p) * g.hess.det[k];
        let cf = c * spec.f.0[k];
        num = num.max((lhs - cf).abs());
        den = den.max(cf);
    }
    (num / den, c)
}

/// `max |h^{1-p} det H − c f| / max(c f)` with `c = (n+1) V / ∫ h^p f`.
pub fn residual(spec: &ProblemSpec, body: &ConvexBody) -> Result<f64> {
    spec.check(body)?;
    Ok(residual_geom(spec, body.geometry()).0)
}

/// Data `f = h^{1-p} det H` for which `body` solves the equation exactly.
pub fn forward_data(body: &ConvexBody, p: f64) -> ScalarField {
    ScalarField(body.lp_measure(p).density)
}

/// Hessian of `F_{p,f}` in the even basis (weak form, symmetric).
pub(crate) fn hessian_geom(spec: &ProblemSpec, g: &SupportGeometry) -> DMatrix<f64> {
    let d = &spec.domain;
    let table = d.basis();
    let w = d.weights();
    let p = spec.p;
    let pw = Pointwise::new(spec, g);
    let h2 = g.h.component_mul(&g.h);
    let tr_u = if d.n() == 1 {
        g.hess.cofactor[0].clone()
    } else {
        &g.hess.cofactor[0] + &g.hess.cofactor[2]
    };
    // Zeroth-order density: (p−1) h^{p−2} f / I − tr U / ((n+1)V).
    let zeroth = pw.hp_f.component_div(&h2) * ((p - 1.0) / pw.i_p) - tr_u / pw.mass;
    let coef: Vec<_> = g.hess.cofactor.iter().map(|c| c / pw.mass).collect();
    let mut out = mass_matrix(table, w, &zeroth) + stiffness(d.n(), table, w, &coef);
    let a = &table.values * pw.hp_f.component_div(&g.h).component_mul(w);
    let c = &table.values * g.hess.det.component_mul(w);
    let n1 = d.n() as f64 + 1.0;
    out.ger(-p / (pw.i_p * pw.i_p), &a, &a, 1.0);
    out.ger(n1 / (pw.mass * pw.mass), &c, &c, 1.0);
    out
}

/// Linearization of the first-variation map with its diagnostics.
#[derive(Debug, Clone)]
pub struct JacobiReport {
    pub matrix: DMatrix<f64>,
    /// `max |J − Jᵀ|`.
    pub symmetry_defect: f64,
    /// Smallest singular value of `J` on `{∫ u det H = 0}`.
    pub min_singular: f64,
    /// `max |J h|`, which vanishes at critical points.
    pub scale_residual: f64,
}

pub fn jacobi_operator(spec: &ProblemSpec, body: &ConvexBody) -> Result<JacobiReport> {
    spec.check(body)?;
    let g = body.geometry();
    let matrix = hessian_geom(spec, g);
    let d = &spec.domain;
    let c = &d.basis().values * g.hess.det.component_mul(d.weights());
    let reduced = Deflation::new(&c).reduce(&matrix);
    let sv = reduced.singular_values();
    Ok(JacobiReport {
        symmetry_defect: (&matrix - matrix.transpose()).amax(),
        min_singular: sv.min(),
        scale_residual: (&matrix * body.coeffs()).amax(),
        matrix,
    })
}

/// Solver controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub tol: f64,
    pub newton_threshold: f64,
    pub step_min: f64,
    pub max_iters: usize,
    pub allow_p_gt_1: bool,
    /// Abort when a normalized solution leaves `[1/C₁, C₁]`.
    pub chll_c1: Option<f64>,
    /// Compare the gradient against central differences every 50 iterations.
    pub self_check: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            newton_threshold: 1e-3,
            step_min: 1e-12,
            max_iters: 5000,
            allow_p_gt_1: false,
            chll_c1: None,
            self_check: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    LineSearchStalled,
    MaxIterations,
    Stagnated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gradient,
    /// Gradient in the curvature variable, rescaled pointwise by `det H`.
    Curvature,
    Newton,
}

/// Two-sided sup bound of a normalized solution against the bound on `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChllCheck {
    /// `max(max f, 1 / min f)`.
    pub c0: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Empirical `C₁ = max(h_max, 1 / h_min)`.
    pub c1: f64,
    pub bound: Option<f64>,
    pub ok: bool,
}

pub fn chll_check(spec: &ProblemSpec, body: &ConvexBody, bound: Option<f64>) -> ChllCheck {
    let f = &spec.f.0;
    let c0 = f.max().max(1.0 / f.min());
    let h = body.support();
    let (h_min, h_max) = (h.min(), h.max());
    let c1 = h_max.max(1.0 / h_min);
    ChllCheck {
        c0,
        h_min,
        h_max,
        c1,
        bound,
        ok: bound.is_none_or(|b| c1 <= b),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub solution: ConvexBody,
    pub body: BodyFile,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub residual: f64,
    pub functional: f64,
    pub gradient_norm: f64,
    /// The constant `c` of the normalized equation.
    pub normalization: f64,
    pub residual_history: Vec<f64>,
    pub f_history: Vec<f64>,
    pub method_trace: Vec<Method>,
    /// Smallest singular value of the constrained Jacobi matrix at the output.
    pub kernel_diagnostic: f64,
    pub chll: ChllCheck,
    /// Largest relative gradient/finite-difference discrepancy seen in self-check mode.
    pub self_check_error: Option<f64>,
}

struct Iterate {
    coeffs: DVector<f64>,
    geom: SupportGeometry,
    value: f64,
    grad: DVector<f64>,
    residual: f64,
}

impl Iterate {
    fn try_new(spec: &ProblemSpec, coeffs: DVector<f64>) -> Option<Self> {
        let d = &spec.domain;
        let geom = SupportGeometry::from_coeffs(d, &coeffs).ok()?;
        geom.validate(DEFAULT_PD_TOL).ok()?;
        let n1 = d.n() as f64 + 1.0;
        let target = d.omega() / n1;
        let s = (target / geom.volume(d)).powf(1.0 / n1);
        let coeffs = coeffs * s;
        let geom = SupportGeometry::from_coeffs(d, &coeffs).ok()?;
        geom.validate(DEFAULT_PD_TOL).ok()?;
        let value = functional_geom(spec, &geom);
        if !value.is_finite() {
            return None;
        }
        let grad = gradient_geom(spec, &geom);
        let residual = residual_geom(spec, &geom).0;
        Some(Iterate {
            coeffs,
            geom,
            value,
            grad,
            residual,
        })
    }
}

/// Preconditioner `∫ φ² + ∫ |∇φ|²` per basis function.
fn h1_diagonal(d: &Domain) -> DVector<f64> {
    let t = d.basis();
    DVector::from_fn(t.len(), |a, _| {
        let mut s = 0.0;
        for k in 0..t.node_count() {
            let mut v = t.values[(a, k)].powi(2);
            for g in &t.grad {
                v += g[(a, k)].powi(2);
            }
            s += d.weights()[k] * v;
        }
        s
    })
}

fn newton_direction(spec: &ProblemSpec, it: &Iterate) -> Option<DVector<f64>> {
    let d = &spec.domain;
    let hs = hessian_geom(spec, &it.geom);
    let c = &d.basis().values * it.geom.hess.det.component_mul(d.weights());
    let defl = Deflation::new(&c);
    let reduced = defl.reduce(&hs);
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let chol = reduced.cholesky()?;
    let y = chol.solve(&(-defl.restrict(&it.grad)));
    Some(defl.extend(&y))
}

/// Eigenvalue of `∇² · + n` (the trace of `H` as a linear map of `h`) on each basis function.
fn trace_symbol(d: &Domain) -> DVector<f64> {
    let n = d.n() as f64;
    DVector::from_iterator(
        d.basis_len(),
        d.basis().labels.iter().map(|lab| {
            let l = lab.degree as f64;
            let mu = if d.n() == 1 { l * l } else { l * (l + 1.0) };
            n - mu
        }),
    )
}

/// Descent direction `δh = L⁻¹ P(−det H · L⁻¹ G)` with `L = ∇² + n`, which
/// shrinks curvature radii multiplicatively where they are small, so that steps
/// do not run into the boundary of the admissible class.
fn curvature_direction(spec: &ProblemSpec, it: &Iterate, symbol: &DVector<f64>) -> Option<DVector<f64>> {
    let d = &spec.domain;
    let dens = gradient_density(spec, &it.geom);
    let ghat = d.project_even(&ScalarField(dens)).ok()?;
    let y = ghat.component_div(symbol);
    let yn = d.evaluate(&y).ok()?.0;
    let dr = -yn.component_mul(&it.geom.hess.det);
    let r = d.project_even(&ScalarField(dr)).ok()?;
    let dir = r.component_div(symbol);
    (dir.dot(&it.grad) < 0.0).then_some(dir)
}

fn fd_gradient_error(spec: &ProblemSpec, it: &Iterate, iter: usize) -> Option<f64> {
    let d = &spec.domain;
    let m = d.basis_len();
    let dir = DVector::from_fn(m, |a, _| (((a * 7919 + iter * 104_729) % 1000) as f64 / 500.0 - 1.0) / (1.0 + a as f64));
    let eps = 1e-5;
    let f_at = |t: f64| {
        let c = &it.coeffs + &dir * t;
        let g = SupportGeometry::from_coeffs(d, &c).ok()?;
        g.validate(DEFAULT_PD_TOL).ok()?;
        Some(functional_geom(spec, &g))
    };
    let fd = (f_at(eps)? - f_at(-eps)?) / (2.0 * eps);
    let an = it.grad.dot(&dir);
    Some((fd - an).abs() / an.abs().max(1e-8))
}

/// Minimizes `F_{p,f}` from `init`, switching from preconditioned gradient descent
/// to damped Newton once the gradient is small.
pub fn minimize(spec: &ProblemSpec, init: &ConvexBody, opts: &SolveOptions) -> Result<SolveReport> {
    spec.check(init)?;
    let d = Arc::clone(&spec.domain);
    let n = d.n() as f64;
    if spec.p <= -n - 1.0 {
        return Err(MinkError::Validation(format!("p must exceed -(n+1), got {}", spec.p)));
    }
    if spec.p > 1.0 && !opts.allow_p_gt_1 {
        return Err(MinkError::Validation(format!(
            "p = {} > 1 is outside the validated range; pass allow_p_gt_1 to override",
            spec.p
        )));
    }
    let mut it = Iterate::try_new(spec, init.coeffs().clone())
        .ok_or_else(|| MinkError::Numeric("initial body has an undefined functional".into()))?;
    let precond = h1_diagonal(&d);
    let symbol = trace_symbol(&d);
    let slack = |v: f64| 8.0 * f64::EPSILON * v.abs().max(1.0);

    let mut residual_history = vec![it.residual];
    let mut f_history = vec![it.value];
    let mut method_trace = Vec::new();
    let mut self_check_error: Option<f64> = None;
    let mut grad_step = 1.0f64;
    let mut curv_step = 1.0f64;
    let mut stalls = 0usize;
    let mut best_residual = it.residual;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0usize;

    for iter in 0..opts.max_iters {
        if it.residual < opts.tol {
            termination = Termination::Converged;
            break;
        }
        if opts.self_check && iter % 50 == 0 {
            if let Some(e) = fd_gradient_error(spec, &it, iter) {
                self_check_error = Some(self_check_error.map_or(e, |x: f64| x.max(e)));
            }
        }
        iterations = iter + 1;
        let gnorm = it.grad.amax();
        let mut candidates: Vec<(Method, DVector<f64>, f64)> = Vec::with_capacity(2);
        if gnorm < opts.newton_threshold {
            if let Some(dir) = newton_direction(spec, &it) {
                if dir.dot(&it.grad) < 0.0 {
                    candidates.push((Method::Newton, dir, 1.0));
                }
            }
        }
        if let Some(dir) = curvature_direction(spec, &it, &symbol) {
            candidates.push((Method::Curvature, dir, curv_step));
        }
        let gdir = -it.grad.component_div(&precond);
        candidates.push((Method::Gradient, gdir, grad_step));

        let mut accepted = None;
        for (method, dir, t0) in candidates {
            let slope = it.grad.dot(&dir);
            let mut t = t0;
            while t >= opts.step_min {
                if let Some(trial) = Iterate::try_new(spec, &it.coeffs + &dir * t) {
                    if trial.value <= it.value + 1e-4 * t * slope + slack(it.value) {
                        accepted = Some((method, t, trial));
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((method, t, trial)) = accepted else {
            termination = Termination::LineSearchStalled;
            break;
        };
        match method {
            Method::Gradient => grad_step = (t * 2.0).min(1e6),
            Method::Curvature => curv_step = (t * 2.0).min(1e6),
            Method::Newton => {}
        }
        method_trace.push(method);
        let drop = it.value - trial.value;
        let flat = drop <= 1e3 * slack(it.value);
        it = trial;
        residual_history.push(it.residual);
        f_history.push(it.value);
        if it.residual < best_residual * (1.0 - 1e-6) || !flat {
            best_residual = best_residual.min(it.residual);
            stalls = 0;
        } else {
            stalls += 1;
            if stalls >= STALL_WINDOW {
                termination = Termination::Stagnated;
                break;
            }
        }
    }
    if termination == Termination::MaxIterations && it.residual < opts.tol {
        termination = Termination::Converged;
    }

    let solution = make_body(&d, it.coeffs.clone())?.with_meta(BodyMeta {
        name: "solution".into(),
        params: serde_json::json!({ "p": spec.p, "init": init.meta.name }),
        seed: init.meta.seed,
    });
    let (res, c) = residual_geom(spec, solution.geometry());
    let chll = chll_check(spec, &solution, opts.chll_c1);
    if !chll.ok {
        return Err(MinkError::Numeric(format!(
            "solution violates the sup bound: C1 = {:.6e} exceeds {:.6e} (h in [{:.6e}, {:.6e}], C0 = {:.6e})",
            chll.c1,
            chll.bound.unwrap_or(f64::NAN),
            chll.h_min,
            chll.h_max,
            chll.c0
        )));
    }
    let jac = jacobi_operator(spec, &solution)?;
    Ok(SolveReport {
        body: solution.to_file(),
        converged: termination == Termination::Converged,
        termination,
        iterations,
        residual: res,
        functional: functional_geom(spec, solution.geometry()),
        gradient_norm: gradient_geom(spec, solution.geometry()).amax(),
        normalization: c,
        residual_history,
        f_history,
        method_trace,
        kernel_diagnostic: jac.min_singular,
        chll,
        self_check_error,
        solution,
    })
}

/// Default heat time of the probe seed.
pub const PROBE_SMOOTHING: f64 = 5e-4;

/// Controls for [`nonuniqueness_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeOptions {
    pub q: f64,
    /// Heat time of the seed body; the smoothing ladder is used if it is not admissible.
    pub smoothing: Option<f64>,
    /// Number of random starts, in addition to the ball and the two eigen-direction starts.
    pub starts: usize,
    pub perturbation: f64,
    pub seed: u64,
    pub distinct_tol: f64,
    /// Residual a start must reach to count as a solution.
    pub accept_tol: f64,
    pub solve: SolveOptions,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            q: 16.0,
            smoothing: Some(PROBE_SMOOTHING),
            starts: 4,
            perturbation: 0.05,
            seed: 0,
            distinct_tol: 1e-2,
            accept_tol: 1e-6,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeStatus {
    /// `p >= −δ`: the seed body is not a saddle.
    InapplicableEigenvalueGap,
    /// Distinct solutions found.
    NonUnique,
    /// Only the seed critical point was found.
    NoSecondSolution,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeStart {
    pub label: String,
    pub termination: Termination,
    pub residual: f64,
    pub functional: f64,
    pub distance_to_seed: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub p: f64,
    pub q: f64,
    pub status: ProbeStatus,
    /// `λ₁,ₑ(K)`.
    pub lambda: f64,
    /// `δ = λ₁,ₑ(K) − 2`.
    pub delta: f64,
    pub seed_residual: f64,
    /// Second variation of `F_{p,f}` at the seed along its first even eigenfunction.
    pub second_variation: Option<f64>,
    pub saddle_certified: bool,
    pub starts: Vec<ProbeStart>,
    /// Distinct solutions, the seed body first.
    pub solutions: Vec<BodyFile>,
    pub solution_residuals: Vec<f64>,
    pub min_pairwise_distance: Option<f64>,
}

/// Builds the saddle `K = lq_ball(q)` with `f = h_K^{1-p} det H_K` and searches for a
/// second solution by minimizing from several starts.
pub fn nonuniqueness_probe(domain: &Arc<Domain>, p: f64, opts: &ProbeOptions) -> Result<ProbeReport> {
    if domain.n() != 1 {
        return Err(MinkError::Config("the non-uniqueness probe runs on S^1 only".into()));
    }
    if !(p < 0.0 && p > -2.0) {
        return Err(MinkError::Validation(format!("the probe requires p in (-2, 0), got {p}")));
    }
    let seed_entry = |smoothing| CatalogEntry::LqBall { q: opts.q, smoothing };
    let seed_body = match catalog(domain, &seed_entry(opts.smoothing)) {
        Err(MinkError::InvalidBody { .. }) if opts.smoothing.is_some() => catalog(domain, &seed_entry(None))?,
        other => other?,
    }
    .normalized()?;
    let spec_lambda = lambda_1e(&seed_body)?;
    let lambda = spec_lambda.lambda;
    let delta = lambda - 2.0;
    let f = forward_data(&seed_body, p);
    let spec = ProblemSpec::new(domain, p, f)?;
    let seed_residual = residual(&spec, &seed_body)?;
    let mut report = ProbeReport {
        p,
        q: opts.q,
        status: ProbeStatus::InapplicableEigenvalueGap,
        lambda,
        delta,
        seed_residual,
        second_variation: None,
        saddle_certified: false,
        starts: Vec::new(),
        solutions: vec![seed_body.to_file()],
        solution_residuals: vec![seed_residual],
        min_pairwise_distance: None,
    };
    if p >= -delta {
        return Ok(report);
    }

    let z_coeffs = spec_lambda.eigenfunction_coeffs();
    let z = domain.evaluate(&z_coeffs)?;
    let sv = crate::variation::second_variation(&spec, &seed_body, &z)?;
    report.second_variation = Some(sv.total);
    report.saddle_certified = sv.total < 0.0 && seed_residual < opts.accept_tol;

    // Starts: the ball, the seed pushed both ways along the unstable direction,
    // and random even bodies.
    let mut starts: Vec<(String, ConvexBody)> = vec![("ball".into(), catalog(domain, &CatalogEntry::Ball { r: 1.0 })?)];
    let zn = z.0.amax();
    for sign in [1.0, -1.0] {
        let mut eps = opts.perturbation;
        let h = seed_body.support();
        loop {
            let vals = h.zip_map(&z.0, |hv, zv| hv * (1.0 + sign * eps * zv / zn));
            let coeffs = domain.project_even(&ScalarField(vals))?;
            match make_body(domain, coeffs) {
                Ok(b) => {
                    starts.push((format!("seed{}eigen", if sign > 0.0 { "+" } else { "-" }), b));
                    break;
                }
                Err(_) if eps > 1e-6 => eps *= 0.5,
                Err(e) => return Err(e),
            }
        }
    }
    for s in 0..opts.starts {
        let entry = CatalogEntry::RandomEven {
            seed: opts.seed.wrapping_add(s as u64),
            amplitude: 0.3,
            max_degree: 6,
        };
        starts.push((format!("random{s}"), catalog(domain, &entry)?));
    }

    let runs: Vec<(String, Result<SolveReport>)> = starts
        .into_par_iter()
        .map(|(label, b)| {
            let r = minimize(&spec, &b, &opts.solve);
            (label, r)
        })
        .collect();

    let mut sols: Vec<ConvexBody> = vec![seed_body.clone()];
    for (label, run) in runs {
        let run = run?;
        let dist = support_distance(&run.solution, &seed_body)?;
        report.starts.push(ProbeStart {
            label,
            termination: run.termination,
            residual: run.residual,
            functional: run.functional,
            distance_to_seed: dist,
            iterations: run.iterations,
        });
        if run.residual < opts.accept_tol {
            let mut fresh = true;
            for s in &sols {
                if support_distance(s, &run.solution)? <= opts.distinct_tol {
                    fresh = false;
                    break;
                }
            }
            if fresh {
                report.solutions.push(run.solution.to_file());
                report.solution_residuals.push(run.residual);
                sols.push(run.solution);
            }
        }
    }
    let mut min_d: Option<f64> = None;
    for i in 0..sols.len() {
        for j in i + 1..sols.len() {
            let dd = support_distance(&sols[i], &sols[j])?;
            min_d = Some(min_d.map_or(dd, |m| m.min(dd)));
        }
    }
    report.min_pairwise_distance = min_d;
    report.status = if sols.len() >= 2 {
        ProbeStatus::NonUnique
    } else {
        ProbeStatus::NoSecondSolution
    };
    Ok(report)
}

/// Eigenvalues of the reduced Jacobi matrix, ascending.
pub fn reduced_jacobi_spectrum(spec: &ProblemSpec, body: &ConvexBody) -> Result<Vec<f64>> {
    let j = jacobi_operator(spec, body)?;
    let d = &spec.domain;
    let c = &d.basis().values * body.hessian().det.component_mul(d.weights());
    let r = Deflation::new(&c).reduce(&j.matrix);
    let mut v: Vec<f64> = SymmetricEigen::new((&r + r.transpose()) * 0.5).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::ball;
    use crate::sphere::build_domain;
    use std::f64::consts::PI;

    fn circle(res: usize) -> Arc<Domain> {
        Arc::new(build_domain(1, res).unwrap())
    }

    fn random(d: &Arc<Domain>, seed: u64) -> ConvexBody {
        catalog(d, &CatalogEntry::RandomEven { seed, amplitude: 0.15, max_degree: 6 }).unwrap()
    }

    #[test]
    fn functional_at_ball() {
        let d = circle(16);
        let b = ball(&d, 1.0).unwrap();
        for p in [-0.5, 0.0, 0.5, 1.0] {
            let s = ProblemSpec::constant(&d, p, 1.0).unwrap();
            let expected = -(PI).ln() / 2.0;
            assert!((functional_f(&s, &b).unwrap() - expected).abs() < 1e-12);
            assert!(gradient_f(&s, &b).unwrap().amax() < 1e-10);
            assert!(residual(&s, &b).unwrap() < 1e-12);
        }
    }

    #[test]
    fn scale_invariance_and_scale_direction() {
        let d = circle(16);
        let b = random(&d, 3);
        let s = ProblemSpec::new(&d, 0.3, ScalarField::from_fn(&d, |u| 1.0 + 0.2 * u[0] * u[0])).unwrap();
        let f1 = functional_f(&s, &b).unwrap();
        let f2 = functional_f(&s, &b.scaled(2.0).unwrap()).unwrap();
        assert!((f1 - f2).abs() < 1e-10);
        let g = gradient_f(&s, &b).unwrap();
        assert!(g.dot(b.coeffs()).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let d = circle(16);
        let b = random(&d, 11);
        for p in [0.0, 0.5, -0.7] {
            let s = ProblemSpec::new(&d, p, ScalarField::from_fn(&d, |u| 1.0 + 0.3 * u[1] * u[1])).unwrap();
            let dir = DVector::from_fn(d.basis_len(), |a, _| ((a % 3) as f64 - 1.0) / (1.0 + a as f64));
            let g = gradient_f(&s, &b).unwrap().dot(&dir);
            let eps = 1e-5;
            let fp = functional_f(&s, &make_body(&d, b.coeffs() + &dir * eps).unwrap()).unwrap();
            let fm = functional_f(&s, &make_body(&d, b.coeffs() - &dir * eps).unwrap()).unwrap();
            let fd = (fp - fm) / (2.0 * eps);
            assert!((fd - g).abs() < 1e-5 * g.abs(), "p={p}: {fd} vs {g}");
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let d = circle(12);
        let b = random(&d, 4);
        let s = ProblemSpec::new(&d, 0.4, ScalarField::from_fn(&d, |u| 1.0 + 0.3 * u[1] * u[1])).unwrap();
        let hs = hessian_geom(&s, b.geometry());
        let dir = DVector::from_fn(d.basis_len(), |a, _| ((a % 4) as f64 - 1.5) / (1.0 + a as f64));
        let eps = 1e-6;
        let gp = gradient_f(&s, &make_body(&d, b.coeffs() + &dir * eps).unwrap()).unwrap();
        let gm = gradient_f(&s, &make_body(&d, b.coeffs() - &dir * eps).unwrap()).unwrap();
        let fd = (gp - gm) / (2.0 * eps);
        let an = &hs * &dir;
        assert!((&fd - &an).amax() < 1e-6 * an.amax(), "{}", (&fd - &an).amax());
    }

    #[test]
    fn residual_examples() {
        let d = circle(16);
        let b = ball(&d, 1.0).unwrap();
        let s = ProblemSpec::new(&d, 0.0, ScalarField::from_fn(&d, |u| 1.0 + 0.1 * (2.0 * u[1].atan2(u[0])).cos())).unwrap();
        assert!((residual(&s, &b).unwrap() - 0.1 / 1.1).abs() < 1e-10);
        let k = random(&d, 8);
        for p in [-0.5, 0.0, 0.5] {
            let s = ProblemSpec::new(&d, p, forward_data(&k, p)).unwrap();
            assert!(residual(&s, &k).unwrap() < 1e-12);
        }
    }

    #[test]
    fn spec_rejects_bad_data() {
        let d = circle(8);
        let neg = ScalarField::from_fn(&d, |u| u[0] * u[0] - 0.5);
        assert!(matches!(ProblemSpec::new(&d, 0.0, neg), Err(MinkError::Validation(_))));
        let odd = ScalarField::from_fn(&d, |u| 2.0 + u[0]);
        assert!(matches!(ProblemSpec::new(&d, 0.0, odd), Err(MinkError::Validation(_))));
        assert!(ProblemSpec::constant(&d, -2.0, 1.0).is_err());
    }

    #[test]
    fn jacobi_on_ball_has_harmonic_symbol() {
        let d = circle(8);
        let b = ball(&d, 1.0).unwrap();
        let omega = 2.0 * PI;
        for p in [-0.5, 0.0, 0.5] {
            let s = ProblemSpec::constant(&d, p, 1.0).unwrap();
            let j = jacobi_operator(&s, &b).unwrap();
            assert!(j.symmetry_defect < 1e-9);
            assert!(j.scale_residual < 1e-12);
            for (a, lab) in d.basis().labels.iter().enumerate().skip(1) {
                let l = lab.degree as f64;
                let symbol = l * l - 1.0 - (1.0 - p);
                assert!((j.matrix[(a, a)] - symbol * PI / omega).abs() < 1e-12);
            }
            assert!(j.min_singular > 0.0);
        }
    }

    #[test]
    fn minimize_recovers_ball_and_forward_body() {
        let d = circle(16);
        let s = ProblemSpec::constant(&d, 0.0, 1.0).unwrap();
        let r = minimize(&s, &random(&d, 21), &SolveOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r.termination);
        assert!(r.residual < 1e-8);
        assert!((r.solution.support().add_scalar(-1.0)).amax() < 1e-6);
        assert!(r.f_history.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert!((r.residual - residual(&s, &r.solution).unwrap()).abs() < 1e-12);

        let k = random(&d, 5).normalized().unwrap();
        let s = ProblemSpec::new(&d, 0.5, forward_data(&k, 0.5)).unwrap();
        let r = minimize(&s, &ball(&d, 1.0).unwrap(), &SolveOptions::default()).unwrap();
        assert!(r.converged);
        assert!(support_distance(&r.solution, &k).unwrap() < 1e-6);
    }

    #[test]
    fn minimize_refuses_large_p() {
        let d = circle(8);
        let s = ProblemSpec::constant(&d, 1.5, 1.0).unwrap();
        let b = ball(&d, 1.0).unwrap();
        assert!(matches!(minimize(&s, &b, &SolveOptions::default()), Err(MinkError::Validation(_))));
        let opts = SolveOptions { allow_p_gt_1: true, ..Default::default() };
        assert!(minimize(&s, &b, &opts).unwrap().converged);
    }

    #[test]
    fn probe_preconditions() {
        let d = circle(16);
        assert!(nonuniqueness_probe(&d, 0.0, &ProbeOptions::default()).is_err());
        let opts = ProbeOptions { q: 4.0, ..Default::default() };
        let r = nonuniqueness_probe(&d, -0.05, &opts).unwrap();
        assert_eq!(r.status, ProbeStatus::InapplicableEigenvalueGap);
        assert!(r.delta > 0.05);
    }
}
