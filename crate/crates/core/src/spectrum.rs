//! Quadratic forms of the Hilbert-Brunn-Minkowski operator, the first even
//! eigenvalue in both formulations, and nodal application of `L_K`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::body::ConvexBody;
use crate::error::{MinkError, Result};
use crate::sphere::{weighted_gram, BasisTable, Domain, ScalarField};

/// Default number of eigenvalues kept in a [`SpectrumReport`].
pub const DEFAULT_SPECTRUM_LEN: usize = 6;

/// Matrices of the Rayleigh quotients over a basis table.
#[derive(Debug, Clone)]
pub struct QuadraticForms {
    /// `∫ h² U^{ij} φ_{a,i} φ_{b,j}`.
    pub a: DMatrix<f64>,
    /// `∫ φ_a φ_b h det H`.
    pub b: DMatrix<f64>,
    /// `∫ φ_a h det H`.
    pub m: DVector<f64>,
    /// `∫ U^{ij} φ_{a,i} φ_{b,j} − ∫ tr U φ_a φ_b + n ∫ φ_a φ_b h⁻¹ det H`.
    pub a_alt: DMatrix<f64>,
    /// `∫ φ_a φ_b h⁻¹ det H`.
    pub b_alt: DMatrix<f64>,
    /// `∫ φ_a det H`.
    pub m_alt: DVector<f64>,
    /// `∫ h det H = (n+1) V`.
    pub mass: f64,
    /// Largest entrywise asymmetry seen before symmetrization.
    pub asymmetry: f64,
}

fn symmetrize(m: DMatrix<f64>, asym: &mut f64) -> DMatrix<f64> {
    let t = m.transpose();
    *asym = asym.max((&m - &t).amax());
    (m + t) * 0.5
}

/// `Σ_ij G_i diag(w c^{ij}) G_jᵀ` with `c` in the packed `[11]` / `[11, 12, 22]` layout.
pub(crate) fn stiffness(
    n: usize,
    table: &BasisTable,
    weights: &DVector<f64>,
    coef: &[DVector<f64>],
) -> DMatrix<f64> {
    let g = &table.grad;
    let wc = |c: &DVector<f64>| c.component_mul(weights);
    if n == 1 {
        weighted_gram(&g[0], wc(&coef[0]).as_slice(), &g[0])
    } else {
        let c12 = wc(&coef[1]);
        let cross = weighted_gram(&g[0], c12.as_slice(), &g[1]);
        weighted_gram(&g[0], wc(&coef[0]).as_slice(), &g[0])
            + weighted_gram(&g[1], wc(&coef[2]).as_slice(), &g[1])
            + &cross
            + cross.transpose()
    }
}

pub(crate) fn mass_matrix(table: &BasisTable, weights: &DVector<f64>, density: &DVector<f64>) -> DMatrix<f64> {
    let d = density.component_mul(weights);
    weighted_gram(&table.values, d.as_slice(), &table.values)
}

/// Assembles the forms over the body's even basis.
pub fn assemble_forms(body: &ConvexBody) -> QuadraticForms {
    assemble_on(body, body.domain().basis())
}

/// Assembles the forms over an arbitrary basis table sampled at the domain nodes.
pub fn assemble_on(body: &ConvexBody, table: &BasisTable) -> QuadraticForms {
    let d = body.domain();
    let n = d.n();
    let w = d.weights();
    let h = body.support();
    let hess = body.hessian();
    let det = &hess.det;
    let mut asym = 0.0f64;

    let h2 = h.component_mul(h);
    let a_coef: Vec<_> = hess.cofactor.iter().map(|c| c.component_mul(&h2)).collect();
    let a = symmetrize(stiffness(n, table, w, &a_coef), &mut asym);
    let hdet = h.component_mul(det);
    let b = symmetrize(mass_matrix(table, w, &hdet), &mut asym);
    let m = &table.values * hdet.component_mul(w);

    let tr_u = if n == 1 {
        hess.cofactor[0].clone()
    } else {
        &hess.cofactor[0] + &hess.cofactor[2]
    };
    let det_over_h = det.component_div(h);
    let zeroth = det_over_h.clone() * n as f64 - tr_u;
    let a_alt = symmetrize(
        stiffness(n, table, w, &hess.cofactor) + mass_matrix(table, w, &zeroth),
        &mut asym,
    );
    let b_alt = symmetrize(mass_matrix(table, w, &det_over_h), &mut asym);
    let m_alt = &table.values * det.component_mul(w);

    QuadraticForms {
        a,
        b,
        m,
        a_alt,
        b_alt,
        m_alt,
        mass: d.quad(&hdet),
        asymmetry: asym,
    }
}

/// The Householder reflector `P = I − 2 v vᵀ / vᵀv` mapping `c` onto the first
/// axis; its trailing columns span `{x : cᵀx = 0}`.
#[derive(Debug, Clone)]
pub(crate) struct Deflation {
    v: DVector<f64>,
    beta: f64,
}

impl Deflation {
    pub fn new(c: &DVector<f64>) -> Self {
        let mut v = c.clone();
        let s = if c[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += s * c.norm();
        let beta = v.dot(&v) / 2.0;
        Deflation { v, beta }
    }

    /// `Qᵀ M Q` for symmetric `M`, in `O(dim²)`.
    pub fn reduce(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let dim = m.nrows();
        let w = m * &self.v;
        let gamma = self.v.dot(&w) / (self.beta * self.beta);
        let mut out = m.clone();
        for j in 0..dim {
            for i in 0..dim {
                out[(i, j)] += -(self.v[i] * w[j] + w[i] * self.v[j]) / self.beta + gamma * self.v[i] * self.v[j];
            }
        }
        out.view((1, 1), (dim - 1, dim - 1)).into_owned()
    }

    /// `Qᵀ x`.
    pub fn restrict(&self, x: &DVector<f64>) -> DVector<f64> {
        let px = x - &self.v * (self.v.dot(x) / self.beta);
        px.rows(1, x.len() - 1).into_owned()
    }

    /// `Q y`.
    pub fn extend(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(y.len() + 1);
        x.rows_mut(1, y.len()).copy_from(y);
        let s = self.v.dot(&x) / self.beta;
        x - &self.v * s
    }

    /// `Q` as a dense matrix.
    #[cfg(test)]
    pub fn basis(&self) -> DMatrix<f64> {
        let dim = self.v.len();
        let p = DMatrix::identity(dim, dim) - (&self.v * self.v.transpose()) / self.beta;
        p.columns(1, dim - 1).into_owned()
    }
}

/// Solution of `A x = λ B x` on `{cᵀx = 0}`.
#[derive(Debug, Clone)]
pub struct ConstrainedEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// B-orthonormal eigenvectors in full coordinates, one column each.
    pub vectors: DMatrix<f64>,
    /// Reduced-space residual norms `‖Qᵀ(A x − λ B x)‖`.
    pub residuals: Vec<f64>,
}

pub fn constrained_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DVector<f64>) -> Result<ConstrainedEigen> {
    let defl = Deflation::new(c);
    let ar = defl.reduce(a);
    let br = defl.reduce(b);
    let br = (&br + br.transpose()) * 0.5;
    let chol = br.clone().cholesky().ok_or_else(|| {
        MinkError::Numeric("denominator form is not positive definite after deflation".into())
    })?;
    let l = chol.l();
    let linv = l
        .try_inverse()
        .ok_or_else(|| MinkError::Numeric("singular Cholesky factor".into()))?;
    let c_mat = &linv * &ar * linv.transpose();
    let c_mat = (&c_mat + c_mat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c_mat);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt = linv.transpose();
    let mut vectors = DMatrix::zeros(a.nrows(), order.len());
    let mut values = Vec::with_capacity(order.len());
    let mut residuals = Vec::with_capacity(order.len());
    for (col, &i) in order.iter().enumerate() {
        let lam = eig.eigenvalues[i];
        let y = &lt * eig.eigenvectors.column(i);
        let r = &ar * &y - (&br * &y) * lam;
        residuals.push(r.norm());
        values.push(lam);
        vectors.set_column(col, &defl.extend(&y));
    }
    Ok(ConstrainedEigen {
        values,
        vectors,
        residuals,
    })
}

/// First even eigenvalue with its eigenfunction and the low end of the spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub lambda: f64,
    /// Coefficients of the eigenfunction: B-normalized and m-orthogonal.
    pub eigenfunction: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl SpectrumReport {
    pub fn eigenfunction_coeffs(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.eigenfunction)
    }
}

pub fn lambda_1e(body: &ConvexBody) -> Result<SpectrumReport> {
    lambda_1e_k(body, DEFAULT_SPECTRUM_LEN)
}

pub fn lambda_1e_k(body: &ConvexBody, k: usize) -> Result<SpectrumReport> {
    let forms = assemble_forms(body);
    spectrum_from_forms(&forms, k)
}

pub fn spectrum_from_forms(forms: &QuadraticForms, k: usize) -> Result<SpectrumReport> {
    let eig = constrained_eigen(&forms.a, &forms.b, &forms.m)?;
    let k = k.clamp(1, eig.values.len());
    Ok(SpectrumReport {
        lambda: eig.values[0],
        eigenfunction: eig.vectors.column(0).iter().copied().collect(),
        spectrum: eig.values[..k].to_vec(),
        residuals: eig.residuals[..k].to_vec(),
    })
}

/// First even eigenvalue of the alternative quotient, whose numerator and
/// denominator both vanish on the direction `z = h`; that direction is removed by
/// restricting to `{∫ z det H = 0}`, where the rank-one correction vanishes.
pub fn lambda_1e_alt(body: &ConvexBody) -> Result<f64> {
    let forms = assemble_forms(body);
    Ok(alt_spectrum(&forms)?.values[0])
}

pub fn alt_spectrum(forms: &QuadraticForms) -> Result<ConstrainedEigen> {
    constrained_eigen(&forms.a_alt, &forms.b_alt, &forms.m_alt)
}

/// `L_K u = H^{ij}(2 h_j u_i + h u_ij)` from nodal first and second covariant
/// derivatives of `u` (packed layout).
pub fn lk_from_derivatives(body: &ConvexBody, grad: &[DVector<f64>], second: &[DVector<f64>]) -> DVector<f64> {
    let n = body.n();
    let h = body.support();
    let hg = &body.geometry().grad.comps;
    let inv = body.hessian().inverse();
    if n == 1 {
        let inner = (hg[0].component_mul(&grad[0])) * 2.0 + h.component_mul(&second[0]);
        inner.component_mul(&inv[0])
    } else {
        let t = |i: usize, j: usize| -> DVector<f64> {
            let s = &second[if i == j { 2 * i } else { 1 }];
            hg[j].component_mul(&grad[i]) + hg[i].component_mul(&grad[j]) + h.component_mul(s)
        };
        inv[0].component_mul(&t(0, 0)) + inv[1].component_mul(&t(0, 1)) * 2.0 + inv[2].component_mul(&t(1, 1))
    }
}

/// Nodal `L_K u` for arbitrary (not necessarily even) nodal data, differentiated
/// through its projection onto the complete basis.
pub fn apply_lk(body: &ConvexBody, u: &ScalarField) -> Result<ScalarField> {
    let d = body.domain();
    let table = d.full_basis();
    apply_lk_with(body, &table, u)
}

fn apply_lk_with(body: &ConvexBody, table: &BasisTable, u: &ScalarField) -> Result<ScalarField> {
    let d = body.domain();
    let c = d.project_onto(table, u)?;
    let grad: Vec<_> = table.grad.iter().map(|g| g.tr_mul(&c)).collect();
    let second: Vec<_> = table.hess.iter().map(|g| g.tr_mul(&c)).collect();
    Ok(ScalarField(lk_from_derivatives(body, &grad, &second)))
}

/// Outcome of the three spectral facts on the complete basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralFacts {
    /// `‖A 1‖∞ / ‖A‖∞` on the complete basis.
    pub kernel_residual: f64,
    /// Relative residual of `−L_K u = n u` for `u = h⁻¹⟨·, e_k⟩`, one per axis.
    pub linear_residuals: Vec<f64>,
    /// Lowest nonzero full-space eigenvalues.
    pub full_spectrum: Vec<f64>,
    /// Number of full-space eigenvalues within the cluster tolerance of `n`.
    pub cluster_multiplicity: usize,
    pub kernel_ok: bool,
    pub linear_ok: bool,
    pub lower_bound_ok: bool,
    pub multiplicity_ok: bool,
}

impl SpectralFacts {
    pub fn passed(&self) -> bool {
        self.kernel_ok && self.linear_ok && self.lower_bound_ok && self.multiplicity_ok
    }
}

pub const CLUSTER_TOL: f64 = 1e-5;

pub fn spectral_facts_check(body: &ConvexBody) -> Result<SpectralFacts> {
    let d = body.domain();
    let n = d.n();
    let table = d.full_basis();
    let forms = assemble_on(body, &table);

    let const_coeffs = {
        let mut x = DVector::zeros(table.len());
        x[0] = 1.0;
        x
    };
    let kernel_residual = (&forms.a * const_coeffs).amax() / forms.a.amax().max(f64::MIN_POSITIVE);

    let h = body.support();
    let mut linear_residuals = Vec::with_capacity(n + 1);
    for axis in 0..=n {
        let u = linear_mode(d, h, axis);
        let lu = apply_lk_with(body, &table, &u)?;
        let res = (&lu.0 + &u.0 * n as f64).amax() / (u.0.amax() * n as f64);
        linear_residuals.push(res);
    }

    let eig = constrained_eigen(&forms.a, &forms.b, &forms.m)?;
    let full_spectrum: Vec<f64> = eig.values.iter().take(2 * (n + 1) + 2).copied().collect();
    let cluster_multiplicity = eig
        .values
        .iter()
        .filter(|&&v| (v - n as f64).abs() < CLUSTER_TOL)
        .count();
    Ok(SpectralFacts {
        kernel_ok: kernel_residual < 1e-9,
        linear_ok: linear_residuals.iter().all(|&r| r < 1e-6),
        lower_bound_ok: eig.values[0] >= n as f64 - 1e-6,
        multiplicity_ok: cluster_multiplicity == n + 1,
        kernel_residual,
        linear_residuals,
        full_spectrum,
        cluster_multiplicity,
    })
}

/// `u(x) = x_axis / h(x)` at the nodes.
pub fn linear_mode(d: &Domain, h: &DVector<f64>, axis: usize) -> ScalarField {
    ScalarField(DVector::from_iterator(
        d.node_count(),
        d.nodes().iter().zip(h.iter()).map(|(x, hv)| x[axis] / hv),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{ball, catalog, CatalogEntry};
    use crate::sphere::build_domain;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn circle(res: usize) -> Arc<Domain> {
        Arc::new(build_domain(1, res).unwrap())
    }

    #[test]
    fn ball_forms_on_circle() {
        let d = circle(8);
        let f = assemble_forms(&ball(&d, 1.0).unwrap());
        for a in 0..d.basis_len() {
            let freq = d.basis().labels[a].degree as f64;
            let expected_b = if a == 0 { 2.0 * PI } else { PI };
            assert!((f.b[(a, a)] - expected_b).abs() < 1e-12);
            assert!((f.a[(a, a)] - freq * freq * PI * if a == 0 { 0.0 } else { 1.0 }).abs() < 1e-11);
        }
        let off = &f.a - DMatrix::from_diagonal(&f.a.diagonal());
        assert!(off.amax() < 1e-11);
    }

    #[test]
    fn ball_eigenvalues() {
        let d = circle(32);
        let r = lambda_1e(&ball(&d, 1.0).unwrap()).unwrap();
        assert!((r.lambda - 4.0).abs() < 1e-8);
        let d2 = Arc::new(build_domain(2, 8).unwrap());
        let b2 = ball(&d2, 1.0).unwrap();
        let r2 = lambda_1e(&b2).unwrap();
        assert!((r2.lambda - 6.0).abs() < 1e-6);
        assert!((lambda_1e_alt(&b2).unwrap() - 6.0).abs() < 1e-6);
    }

    #[test]
    fn sphere_alt_stiffness_is_laplacian() {
        let d = Arc::new(build_domain(2, 6).unwrap());
        let f = assemble_forms(&ball(&d, 1.0).unwrap());
        for (a, lab) in d.basis().labels.iter().enumerate() {
            let l = lab.degree as f64;
            assert!((f.a_alt[(a, a)] - l * (l + 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn constants_in_kernel() {
        let d = circle(16);
        let b = catalog(&d, &CatalogEntry::RandomEven { seed: 5, amplitude: 0.15, max_degree: 6 }).unwrap();
        let f = assemble_forms(&b);
        assert!(f.asymmetry < 1e-10);
        let e0 = d.constant_coeffs(1.0);
        assert!((&f.a * e0).amax() < 1e-10);
    }

    #[test]
    fn ellipse_and_alt_agree() {
        let d = circle(32);
        let e = catalog(&d, &CatalogEntry::Ellipsoid { a: vec![vec![2.0, 0.0], vec![0.0, 1.0]] }).unwrap();
        assert!((lambda_1e(&e).unwrap().lambda - 4.0).abs() < 1e-6);
        let b = catalog(&d, &CatalogEntry::RandomEven { seed: 9, amplitude: 0.1, max_degree: 4 }).unwrap();
        let l1 = lambda_1e(&b).unwrap().lambda;
        let l2 = lambda_1e_alt(&b).unwrap();
        assert!((l1 - l2).abs() < 1e-7 * l1, "{l1} {l2}");
    }

    #[test]
    fn eigenvector_normalization_and_rayleigh() {
        let d = circle(16);
        let b = catalog(&d, &CatalogEntry::RandomEven { seed: 1, amplitude: 0.2, max_degree: 6 }).unwrap();
        let f = assemble_forms(&b);
        let r = spectrum_from_forms(&f, 4).unwrap();
        let x = r.eigenfunction_coeffs();
        assert!((x.dot(&(&f.b * &x)) - 1.0).abs() < 1e-10);
        assert!(f.m.dot(&x).abs() < 1e-10);
        let q = x.dot(&(&f.a * &x)) / x.dot(&(&f.b * &x));
        assert!((q - r.lambda).abs() < 1e-10);
        assert!(r.spectrum.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn lk_examples() {
        let d = circle(16);
        let bb = ball(&d, 1.0).unwrap();
        let u = ScalarField::from_fn(&d, |x| (2.0 * x[1].atan2(x[0])).cos());
        let lu = apply_lk(&bb, &u).unwrap();
        assert!((&lu.0 + &u.0 * 4.0).amax() < 1e-10);
        let one = ScalarField::constant(&d, 1.0);
        assert!(apply_lk(&bb, &one).unwrap().0.amax() < 1e-12);
    }

    #[test]
    fn lk_weak_form_matches_a() {
        let d = circle(16);
        let b = catalog(&d, &CatalogEntry::RandomEven { seed: 2, amplitude: 0.1, max_degree: 4 }).unwrap();
        let f = assemble_forms(&b);
        let x = DVector::from_fn(d.basis_len(), |i, _| ((i * 7 % 5) as f64 - 2.0) / (1.0 + i as f64));
        let y = DVector::from_fn(d.basis_len(), |i, _| ((i * 3 % 4) as f64 - 1.5) / (1.0 + i as f64));
        let u = d.evaluate(&x).unwrap();
        let v = d.evaluate(&y).unwrap().0;
        let lu = apply_lk(&b, &u).unwrap().0;
        let hd = b.support().component_mul(&b.hessian().det);
        let weak = -d.quad(&lu.component_mul(&v).component_mul(&hd));
        let a_xy = x.dot(&(&f.a * &y));
        assert!((weak - a_xy).abs() < 1e-7 * a_xy.abs().max(1.0), "{weak} {a_xy}");
    }

    #[test]
    fn spectral_facts_on_ball_and_sphere() {
        let d = circle(16);
        let rep = spectral_facts_check(&ball(&d, 1.0).unwrap()).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!((rep.full_spectrum[0] - 1.0).abs() < 1e-10);
        let d2 = Arc::new(build_domain(2, 6).unwrap());
        let rep2 = spectral_facts_check(&ball(&d2, 1.0).unwrap()).unwrap();
        assert!(rep2.passed(), "{rep2:?}");
        assert_eq!(rep2.cluster_multiplicity, 3);
    }

    #[test]
    fn deflation_matches_dense_reflector() {
        let c = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5]);
        let m = DMatrix::from_fn(4, 4, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let d = Deflation::new(&c);
        let q = d.basis();
        assert!((q.tr_mul(&c)).amax() < 1e-14);
        assert!((q.tr_mul(&q) - DMatrix::identity(3, 3)).amax() < 1e-14);
        assert!((d.reduce(&m) - q.tr_mul(&m) * &q).amax() < 1e-14);
        let y = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        assert!((d.extend(&y) - &q * &y).amax() < 1e-14);
        let x = DVector::from_vec(vec![1.0, 0.0, 2.0, -3.0]);
        assert!((d.restrict(&x) - q.tr_mul(&x)).amax() < 1e-14);
    }

    #[test]
    fn non_pd_denominator_reports_numeric_error() {
        let a = DMatrix::identity(3, 3);
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0]));
        let c = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(matches!(constrained_eigen(&a, &b, &c), Err(MinkError::Numeric(_))));
    }
}
