//! Discretizations of S^1 and S^2: quadrature nodes, even function bases with
//! analytic derivative tables, and the covariant calculus built on them.
//!
//! On S^1 the even basis is `{1, cos 2kθ, sin 2kθ : 1 <= k <= resolution}` on
//! `8 * resolution` equispaced nodes. On S^2 it is the real spherical harmonics of
//! even degree `<= resolution` on a Gauss-Legendre × equispaced-longitude grid exact
//! for polynomials of degree `2 * resolution + 2`.

mod harmonics;
mod jet;
mod quadrature;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MinkError, Result};

pub use jet::Jet3;
pub use quadrature::gauss_legendre;

/// Smallest admissible resolution for either sphere.
pub const MIN_RESOLUTION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    #[serde(rename = "fourier-even")]
    FourierEven,
    #[serde(rename = "sph-harm-even")]
    SphHarmEven,
}

/// Serialized form of a [`Domain`]; nodes and weights are regenerated from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub version: u32,
    pub n: usize,
    pub basis_kind: BasisKind,
    pub resolution: usize,
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        if self.version != 1 {
            return Err(MinkError::Config(format!(
                "unsupported domain version {}",
                self.version
            )));
        }
        let expected = if self.n == 1 {
            BasisKind::FourierEven
        } else {
            BasisKind::SphHarmEven
        };
        if self.basis_kind != expected {
            return Err(MinkError::Config(format!(
                "basis kind {:?} does not match n = {}",
                self.basis_kind, self.n
            )));
        }
        build_domain(self.n, self.resolution)
    }
}

/// Identifies a basis function. On S^1 `degree` is the frequency and the sign of
/// `order` selects cosine (+) or sine (-); on S^2 these are `(l, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisLabel {
    pub degree: usize,
    pub order: i64,
}

/// Nodal tables of a basis: values, tangential gradient components and covariant
/// Hessian components (`[11]` on S^1, `[11, 12, 22]` on S^2). Each matrix is
/// `basis size × node count`.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub labels: Vec<BasisLabel>,
    pub values: DMatrix<f64>,
    pub grad: Vec<DMatrix<f64>>,
    pub hess: Vec<DMatrix<f64>>,
}

impl BasisTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.values.ncols()
    }

    fn zeros(labels: Vec<BasisLabel>, nodes: usize, n: usize) -> Self {
        let m = labels.len();
        let ncomp = if n == 1 { 1 } else { 3 };
        BasisTable {
            labels,
            values: DMatrix::zeros(m, nodes),
            grad: (0..n).map(|_| DMatrix::zeros(m, nodes)).collect(),
            hess: (0..ncomp).map(|_| DMatrix::zeros(m, nodes)).collect(),
        }
    }

    fn copy_column(&mut self, from: usize, to: usize) {
        let v = self.values.column(from).clone_owned();
        self.values.set_column(to, &v);
        for g in self.grad.iter_mut().chain(self.hess.iter_mut()) {
            let c = g.column(from).clone_owned();
            g.set_column(to, &c);
        }
    }
}

/// Nodal values of a scalar function on the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField(pub DVector<f64>);

impl ScalarField {
    pub fn from_fn(domain: &Domain, f: impl Fn([f64; 3]) -> f64) -> Self {
        ScalarField(DVector::from_iterator(
            domain.node_count(),
            domain.nodes().iter().map(|&u| f(u)),
        ))
    }

    pub fn constant(domain: &Domain, c: f64) -> Self {
        ScalarField(DVector::from_element(domain.node_count(), c))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Tangential vector field in the per-node orthonormal frame; one vector per component.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    pub comps: Vec<DVector<f64>>,
}

/// A symmetric `n × n` matrix per node together with its determinant, inverse
/// (when invertible), cofactor matrix and smallest eigenvalue.
#[derive(Debug, Clone)]
pub struct HessianField {
    n: usize,
    /// `[11]` or `[11, 12, 22]`.
    pub entries: Vec<DVector<f64>>,
    pub det: DVector<f64>,
    /// Cofactor (adjugate) entries, same layout as `entries`; equals `det · inverse`.
    pub cofactor: Vec<DVector<f64>>,
    pub min_eig: DVector<f64>,
}

impl HessianField {
    pub fn from_entries(n: usize, entries: Vec<DVector<f64>>) -> Self {
        let nodes = entries[0].len();
        if n == 1 {
            let det = entries[0].clone();
            HessianField {
                n,
                cofactor: vec![DVector::from_element(nodes, 1.0)],
                min_eig: det.clone(),
                det,
                entries,
            }
        } else {
            let (a, b, c) = (&entries[0], &entries[1], &entries[2]);
            let det = DVector::from_iterator(nodes, (0..nodes).map(|k| a[k] * c[k] - b[k] * b[k]));
            let min_eig = DVector::from_iterator(
                nodes,
                (0..nodes).map(|k| {
                    let mean = 0.5 * (a[k] + c[k]);
                    let dev = (0.25 * (a[k] - c[k]).powi(2) + b[k] * b[k]).sqrt();
                    mean - dev
                }),
            );
            let cofactor = vec![c.clone(), -b.clone(), a.clone()];
            HessianField {
                n,
                entries,
                det,
                cofactor,
                min_eig,
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.det.len()
    }

    /// Whether the smallest eigenvalue exceeds `tol` at every node.
    pub fn is_positive_definite(&self, tol: f64) -> bool {
        self.min_eig.iter().all(|&e| e > tol)
    }

    /// Inverse entries `H^{ij}` (same layout as `entries`).
    pub fn inverse(&self) -> Vec<DVector<f64>> {
        self.cofactor
            .iter()
            .map(|c| c.component_div(&self.det))
            .collect()
    }

    /// Trace of the inverse, `H^{ij} δ_ij`.
    pub fn inverse_trace(&self) -> DVector<f64> {
        if self.n == 1 {
            self.det.map(|d| 1.0 / d)
        } else {
            (&self.entries[0] + &self.entries[2]).component_div(&self.det)
        }
    }

    /// Per-node matrix as a dense 2×2 array (the S^1 case fills only `[0][0]`).
    pub fn at(&self, k: usize) -> [[f64; 2]; 2] {
        if self.n == 1 {
            [[self.entries[0][k], 0.0], [0.0, 0.0]]
        } else {
            let b = self.entries[1][k];
            [[self.entries[0][k], b], [b, self.entries[2][k]]]
        }
    }
}

/// A discretized sphere S^n (n = 1 or 2) with its even basis.
#[derive(Debug, Clone)]
pub struct Domain {
    n: usize,
    resolution: usize,
    nodes: Vec<[f64; 3]>,
    frames: Vec<[[f64; 3]; 2]>,
    weights: DVector<f64>,
    antipodes: Vec<usize>,
    basis: BasisTable,
    gram_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

/// Builds the discretization of S^n at the given resolution.
pub fn build_domain(n: usize, resolution: usize) -> Result<Domain> {
    if n != 1 && n != 2 {
        return Err(MinkError::Config(format!(
            "sphere dimension must be 1 or 2, got {n}"
        )));
    }
    if resolution < MIN_RESOLUTION {
        return Err(MinkError::Config(format!(
            "resolution {resolution} below minimum {MIN_RESOLUTION}"
        )));
    }
    let (nodes, frames, weights, antipodes) = if n == 1 {
        circle_nodes(8 * resolution)
    } else {
        sphere_nodes(resolution)
    };
    let labels = if n == 1 {
        fourier_labels(resolution, true)
    } else {
        harmonic_labels(resolution, true)
    };
    let mut basis = BasisTable::zeros(labels, nodes.len(), n);
    for k in 0..nodes.len() {
        if antipodes[k] < k {
            continue;
        }
        fill_column(&mut basis, n, k, nodes[k], &frames[k]);
        // Even functions take identical values (and, with the negated frame,
        // identical derivative components) at the antipode.
        basis.copy_column(k, antipodes[k]);
    }
    let gram = weighted_gram(&basis.values, &weights, &basis.values);
    let gram_chol = gram
        .cholesky()
        .ok_or_else(|| MinkError::Numeric("basis Gram matrix is singular".into()))?;
    Ok(Domain {
        n,
        resolution,
        nodes,
        frames,
        weights: DVector::from_vec(weights),
        antipodes,
        basis,
        gram_chol,
    })
}

fn circle_nodes(count: usize) -> (Vec<[f64; 3]>, Vec<[[f64; 3]; 2]>, Vec<f64>, Vec<usize>) {
    let half = count / 2;
    let mut nodes = vec![[0.0; 3]; count];
    let mut frames = vec![[[0.0; 3]; 2]; count];
    for k in 0..half {
        let t = 2.0 * PI * k as f64 / count as f64;
        let (s, c) = t.sin_cos();
        nodes[k] = [c, s, 0.0];
        nodes[k + half] = [-c, -s, 0.0];
        frames[k][0] = [-s, c, 0.0];
        frames[k + half][0] = [s, -c, 0.0];
    }
    let weights = vec![2.0 * PI / count as f64; count];
    let antipodes = (0..count).map(|k| (k + half) % count).collect();
    (nodes, frames, weights, antipodes)
}

fn sphere_nodes(resolution: usize) -> (Vec<[f64; 3]>, Vec<[[f64; 3]; 2]>, Vec<f64>, Vec<usize>) {
    let nlat = resolution + 2;
    let nlon = 2 * resolution + 4;
    let (zs, wz) = gauss_legendre(nlat);
    let count = nlat * nlon;
    let mut nodes = vec![[0.0; 3]; count];
    let mut frames = vec![[[0.0; 3]; 2]; count];
    let mut weights = vec![0.0; count];
    let mut antipodes = vec![0; count];
    let index = |i: usize, j: usize| i * nlon + j;
    for i in 0..nlat {
        for j in 0..nlon {
            let k = index(i, j);
            let a = index(nlat - 1 - i, (j + nlon / 2) % nlon);
            antipodes[k] = a;
            weights[k] = wz[i] * 2.0 * PI / nlon as f64;
        }
    }
    for i in 0..nlat {
        for j in 0..nlon {
            let k = index(i, j);
            let a = antipodes[k];
            if a < k {
                continue;
            }
            let z = zs[i];
            let st = (1.0 - z * z).sqrt();
            let phi = 2.0 * PI * j as f64 / nlon as f64;
            let (sp, cp) = phi.sin_cos();
            let u = [st * cp, st * sp, z];
            let e_theta = [z * cp, z * sp, -st];
            let e_phi = [-sp, cp, 0.0];
            nodes[k] = u;
            frames[k] = [e_theta, e_phi];
            nodes[a] = neg3(u);
            frames[a] = [neg3(e_theta), neg3(e_phi)];
        }
    }
    (nodes, frames, weights, antipodes)
}

fn neg3(v: [f64; 3]) -> [f64; 3] {
    [-v[0], -v[1], -v[2]]
}

fn fourier_labels(resolution: usize, even: bool) -> Vec<BasisLabel> {
    let mut labels = vec![BasisLabel {
        degree: 0,
        order: 0,
    }];
    let (step, top) = if even { (2, 2 * resolution) } else { (1, 2 * resolution) };
    let mut f = step;
    while f <= top {
        labels.push(BasisLabel {
            degree: f,
            order: 1,
        });
        labels.push(BasisLabel {
            degree: f,
            order: -1,
        });
        f += step;
    }
    labels
}

fn harmonic_labels(resolution: usize, even: bool) -> Vec<BasisLabel> {
    let mut labels = Vec::new();
    let step = if even { 2 } else { 1 };
    let mut l = 0;
    while l <= resolution {
        for m in -(l as i64)..=(l as i64) {
            labels.push(BasisLabel { degree: l, order: m });
        }
        l += step;
    }
    labels
}

fn fill_column(table: &mut BasisTable, n: usize, k: usize, u: [f64; 3], frame: &[[f64; 3]; 2]) {
    if n == 1 {
        let theta = u[1].atan2(u[0]);
        for (a, lab) in table.labels.iter().enumerate() {
            let f = lab.degree as f64;
            let (s, c) = (f * theta).sin_cos();
            let (v, d) = match lab.order {
                0 => (1.0, 0.0),
                o if o > 0 => (c, -f * s),
                _ => (s, f * c),
            };
            // d/dθ along the frame vector; the frame is the counter-clockwise tangent.
            let orient = frame[0][1] * u[0] - frame[0][0] * u[1];
            table.values[(a, k)] = v;
            table.grad[0][(a, k)] = d * orient;
            table.hess[0][(a, k)] = -f * f * v;
        }
    } else {
        let labels: Vec<(usize, i64)> = table.labels.iter().map(|l| (l.degree, l.order)).collect();
        let ext = harmonics::homogeneous_extensions(u, &labels);
        for (a, e) in ext.iter().enumerate() {
            let (v, g, h) = harmonics::tangential_parts(e, frame);
            table.values[(a, k)] = v;
            table.grad[0][(a, k)] = g[0];
            table.grad[1][(a, k)] = g[1];
            table.hess[0][(a, k)] = h[0];
            table.hess[1][(a, k)] = h[1];
            table.hess[2][(a, k)] = h[2];
        }
    }
}

/// `X · diag(d) · Yᵀ`.
pub fn weighted_gram(x: &DMatrix<f64>, d: &[f64], y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scaled = y.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= d[j];
    }
    x * scaled.transpose()
}

/// An orthonormal tangent frame at an arbitrary unit vector (S^2) or the
/// counter-clockwise tangent (S^1).
pub fn tangent_frame(n: usize, u: [f64; 3]) -> [[f64; 3]; 2] {
    if n == 1 {
        return [[-u[1], u[0], 0.0], [0.0; 3]];
    }
    let axis = if u[0].abs() <= u[1].abs() && u[0].abs() <= u[2].abs() {
        [1.0, 0.0, 0.0]
    } else if u[1].abs() <= u[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let e1 = normalize(cross(axis, u));
    let e2 = cross(u, e1);
    [e1, e2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn normalize(v: [f64; 3]) -> [f64; 3] {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / r, v[1] / r, v[2] / r]
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Domain {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn kind(&self) -> BasisKind {
        if self.n == 1 {
            BasisKind::FourierEven
        } else {
            BasisKind::SphHarmEven
        }
    }

    pub fn spec(&self) -> DomainSpec {
        DomainSpec {
            version: 1,
            n: self.n,
            basis_kind: self.kind(),
            resolution: self.resolution,
        }
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn frames(&self) -> &[[[f64; 3]; 2]] {
        &self.frames
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn antipodes(&self) -> &[usize] {
        &self.antipodes
    }

    pub fn basis(&self) -> &BasisTable {
        &self.basis
    }

    pub fn basis_len(&self) -> usize {
        self.basis.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Surface area ω_n of the unit sphere.
    pub fn omega(&self) -> f64 {
        if self.n == 1 {
            2.0 * PI
        } else {
            4.0 * PI
        }
    }

    pub fn same_as(&self, other: &Domain) -> bool {
        self.n == other.n && self.resolution == other.resolution
    }

    pub fn check_field(&self, g: &ScalarField) -> Result<()> {
        if g.len() != self.node_count() {
            return Err(MinkError::shape(self.node_count(), g.len()));
        }
        Ok(())
    }

    pub fn check_coeffs(&self, c: &DVector<f64>) -> Result<()> {
        if c.len() != self.basis_len() {
            return Err(MinkError::shape(self.basis_len(), c.len()));
        }
        Ok(())
    }

    /// Quadrature value of `∫ g dS`.
    pub fn integrate(&self, g: &ScalarField) -> Result<f64> {
        self.check_field(g)?;
        Ok(self.weights.dot(&g.0))
    }

    pub(crate) fn quad(&self, g: &DVector<f64>) -> f64 {
        self.weights.dot(g)
    }

    /// Nodal values of the basis expansion with coefficients `coeffs`.
    pub fn evaluate(&self, coeffs: &DVector<f64>) -> Result<ScalarField> {
        self.check_coeffs(coeffs)?;
        Ok(ScalarField(self.basis.values.tr_mul(coeffs)))
    }

    pub fn tangent_gradient(&self, coeffs: &DVector<f64>) -> Result<TangentField> {
        self.check_coeffs(coeffs)?;
        Ok(TangentField {
            comps: self.basis.grad.iter().map(|g| g.tr_mul(coeffs)).collect(),
        })
    }

    /// Covariant Hessian `∇²g` (without the `g Id` shift) of a basis expansion.
    pub fn second_derivatives(&self, coeffs: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        self.check_coeffs(coeffs)?;
        Ok(self.basis.hess.iter().map(|g| g.tr_mul(coeffs)).collect())
    }

    /// `H = ∇²h + h Id` for the expansion `h` with coefficients `coeffs`.
    pub fn covariant_hessian(&self, coeffs: &DVector<f64>) -> Result<HessianField> {
        let h = self.evaluate(coeffs)?.0;
        let mut entries = self.second_derivatives(coeffs)?;
        entries[0] += &h;
        if self.n == 2 {
            entries[2] += &h;
        }
        Ok(HessianField::from_entries(self.n, entries))
    }

    /// Weighted least-squares projection of nodal data onto the even basis.
    pub fn project_even(&self, g: &ScalarField) -> Result<DVector<f64>> {
        self.check_field(g)?;
        let w = g.0.component_mul(&self.weights);
        Ok(self.gram_chol.solve(&(&self.basis.values * w)))
    }

    /// Even basis tables evaluated at arbitrary unit vectors.
    pub fn basis_at(&self, dirs: &[[f64; 3]]) -> BasisTable {
        let mut table = BasisTable::zeros(self.basis.labels.clone(), dirs.len(), self.n);
        for (k, &u) in dirs.iter().enumerate() {
            let frame = tangent_frame(self.n, u);
            fill_column(&mut table, self.n, k, u, &frame);
        }
        table
    }

    /// Evaluates an even expansion at arbitrary unit directions.
    pub fn evaluate_at(&self, coeffs: &DVector<f64>, dirs: &[[f64; 3]]) -> Result<DVector<f64>> {
        self.check_coeffs(coeffs)?;
        Ok(self.basis_at(dirs).values.tr_mul(coeffs))
    }

    /// Complete (even and odd) basis on the same nodes: all frequencies up to
    /// `2 * resolution` on S^1, all harmonic degrees up to `resolution` on S^2.
    pub fn full_basis(&self) -> BasisTable {
        let labels = if self.n == 1 {
            fourier_labels(self.resolution, false)
        } else {
            harmonic_labels(self.resolution, false)
        };
        let mut table = BasisTable::zeros(labels, self.node_count(), self.n);
        for k in 0..self.node_count() {
            fill_column(&mut table, self.n, k, self.nodes[k], &self.frames[k]);
        }
        table
    }

    /// Gram matrix `∫ φ_a φ_b dS` of a basis table under this quadrature.
    pub fn gram_of(&self, table: &BasisTable) -> DMatrix<f64> {
        weighted_gram(&table.values, self.weights.as_slice(), &table.values)
    }

    /// Weighted least-squares projection onto an arbitrary basis table on these nodes.
    pub fn project_onto(&self, table: &BasisTable, g: &ScalarField) -> Result<DVector<f64>> {
        self.check_field(g)?;
        let gram = self.gram_of(table);
        let chol = gram
            .cholesky()
            .ok_or_else(|| MinkError::Numeric("basis Gram matrix is singular".into()))?;
        let w = g.0.component_mul(&self.weights);
        Ok(chol.solve(&(&table.values * w)))
    }

    /// Heat-kernel filter: scales each coefficient by `exp(−t μ)` where `μ` is the
    /// Laplace-Beltrami eigenvalue of its basis function. The kernel is positive, so
    /// the filtered support function is a Minkowski average of rotated copies.
    pub fn heat_filter(&self, coeffs: &DVector<f64>, t: f64) -> DVector<f64> {
        DVector::from_fn(coeffs.len(), |a, _| {
            let l = self.basis.labels[a].degree as f64;
            let mu = if self.n == 1 { l * l } else { l * (l + 1.0) };
            coeffs[a] * (-t * mu).exp()
        })
    }

    /// Coefficients of the constant function 1.
    pub fn constant_coeffs(&self, c: f64) -> DVector<f64> {
        let mut x = DVector::zeros(self.basis_len());
        x[0] = c / self.basis.values[(0, 0)];
        x
    }
}
