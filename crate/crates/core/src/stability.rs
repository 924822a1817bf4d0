//! Smoothed families and the measure `U^{ij} u_i u_j dS`: pairing stability under
//! support perturbations, upper semicontinuity of `λ₁,ₑ` along a family, and the
//! agreement of the two eigenvalue definitions.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{lq_family, support_distance, ConvexBody};
use crate::error::{MinkError, Result};
use crate::solver::ProblemSpec;
use crate::spectrum::{lambda_1e, lambda_1e_alt};
use crate::sphere::{Domain, ScalarField};
use crate::variation::SecondVariation;

/// Members ordered by increasing fidelity; the last one stands in for the limit.
#[derive(Debug, Clone)]
pub struct SmoothFamily {
    pub members: Vec<ConvexBody>,
    pub descriptor: String,
    /// `support_distance(member, last)`.
    pub distances: Vec<f64>,
}

impl SmoothFamily {
    pub fn new(members: Vec<ConvexBody>, descriptor: impl Into<String>) -> Result<Self> {
        let last = members
            .last()
            .ok_or_else(|| MinkError::Validation("a family needs at least one member".into()))?;
        let distances = members
            .iter()
            .map(|m| support_distance(m, last))
            .collect::<Result<Vec<_>>>()?;
        for (k, w) in distances.windows(2).enumerate() {
            if w[1] > w[0] * (1.0 + 1e-9) + 1e-14 {
                return Err(MinkError::Validation(format!(
                    "support distances to the limit must decrease along the family (member {k}: {} then {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(SmoothFamily {
            members,
            descriptor: descriptor.into(),
            distances,
        })
    }

    /// `lq_ball(q)` for each `q` of the schedule, with one shared smoothing parameter.
    pub fn lq(domain: &Arc<Domain>, schedule: &[f64]) -> Result<Self> {
        let (members, t) = lq_family(domain, schedule)?;
        let qs: Vec<String> = schedule.iter().map(|q| q.to_string()).collect();
        Self::new(members, format!("lq[{}] smoothing {t:e}", qs.join(",")))
    }

    pub fn constant(body: &ConvexBody, len: usize) -> Result<Self> {
        Self::new(vec![body.clone(); len.max(1)], "constant")
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// `∫ φ U^{ij} u_i u_j` with `U` the cofactor matrix of `H`.
pub fn measure_pairing(body: &ConvexBody, u: &ScalarField, phi: &ScalarField) -> Result<f64> {
    let d = body.domain();
    d.check_field(phi)?;
    let grad = d.tangent_gradient(&d.project_even(u)?)?.comps;
    let cof = &body.hessian().cofactor;
    let dens = if body.n() == 1 {
        DVector::from_fn(phi.len(), |k, _| phi.0[k] * grad[0][k] * grad[0][k])
    } else {
        DVector::from_fn(phi.len(), |k, _| {
            let (a, b) = (grad[0][k], grad[1][k]);
            phi.0[k] * (cof[0][k] * a * a + 2.0 * cof[1][k] * a * b + cof[2][k] * b * b)
        })
    };
    Ok(d.quad(&dens))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub descriptor: String,
    pub pairings: Vec<f64>,
    pub distances: Vec<f64>,
    pub gaps: Vec<f64>,
    /// `g_k / d_k`, absent where `d_k = 0`.
    pub ratios: Vec<Option<f64>>,
    pub constant: f64,
    /// `max_k g_k / (C d_k)` over the validation members.
    pub max_exceedance: f64,
    pub passed: bool,
}

/// Allowed ratio of a gap to the fitted envelope `C d_k`.
pub const EXCEEDANCE_LIMIT: f64 = 2.0;

/// Checks `g_k ≤ C d_k` with `C` fitted on the two coarsest members.
pub fn stability_experiment(family: &SmoothFamily, u: &ScalarField, phi: &ScalarField) -> Result<StabilityReport> {
    if family.len() < 4 {
        return Err(MinkError::Validation(format!(
            "stability experiment needs at least 4 members, got {}",
            family.len()
        )));
    }
    let pairings = family
        .members
        .par_iter()
        .map(|m| measure_pairing(m, u, phi))
        .collect::<Result<Vec<_>>>()?;
    let limit = *pairings.last().unwrap();
    let scale = pairings.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let floor = 1e-12 * scale;
    let gaps: Vec<f64> = pairings.iter().map(|v| (v - limit).abs()).collect();
    let ratios: Vec<Option<f64>> = gaps
        .iter()
        .zip(&family.distances)
        .map(|(g, d)| (*d > 0.0).then(|| g / d))
        .collect();
    let constant = ratios[..2].iter().flatten().fold(0.0f64, |a, r| a.max(*r));
    let last = family.len() - 1;
    let mut max_exceedance: f64 = 0.0;
    let mut passed = true;
    for k in 2..last {
        let bound = constant * family.distances[k];
        if gaps[k] <= floor {
            continue;
        }
        let e = if bound > 0.0 { gaps[k] / bound } else { f64::INFINITY };
        max_exceedance = max_exceedance.max(e);
        passed &= e <= EXCEEDANCE_LIMIT;
    }
    Ok(StabilityReport {
        descriptor: family.descriptor.clone(),
        pairings,
        distances: family.distances.clone(),
        gaps,
        ratios,
        constant,
        max_exceedance,
        passed,
    })
}

pub const SEMICONT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemicontinuityReport {
    pub descriptor: String,
    pub lambdas: Vec<f64>,
    pub distances: Vec<f64>,
    pub limit_lambda: f64,
    /// Estimate of `limsup λ(K_i)` from the two members preceding the limit.
    pub limsup_estimate: f64,
    pub tail_max: f64,
    pub tolerance: f64,
    pub monotone_decreasing: bool,
    pub passed: bool,
}

/// `λ(limit) ≥ limsup λ(K_i) − tol`; the limsup is the value at `d = 0` of the line
/// through the last two coarse members in the `(d, λ)` plane.
pub fn semicontinuity_probe(family: &SmoothFamily, tol: f64) -> Result<SemicontinuityReport> {
    if family.len() < 3 {
        return Err(MinkError::Validation(format!(
            "semicontinuity probe needs at least 3 members, got {}",
            family.len()
        )));
    }
    let lambdas = family
        .members
        .par_iter()
        .map(|m| lambda_1e(m).map(|r| r.lambda))
        .collect::<Result<Vec<_>>>()?;
    let m = lambdas.len();
    let limit_lambda = lambdas[m - 1];
    let (l1, l2) = (lambdas[m - 3], lambdas[m - 2]);
    let (d1, d2) = (family.distances[m - 3], family.distances[m - 2]);
    let tail_max = l1.max(l2);
    let limsup_estimate = if d1 - d2 > 1e-12 * d1.max(1e-300) {
        l2 - (l1 - l2) / (d1 - d2) * d2
    } else {
        tail_max
    };
    Ok(SemicontinuityReport {
        descriptor: family.descriptor.clone(),
        monotone_decreasing: lambdas.windows(2).all(|w| w[1] <= w[0] + 1e-9),
        passed: limit_lambda >= limsup_estimate - tol,
        lambdas,
        distances: family.distances.clone(),
        limit_lambda,
        limsup_estimate,
        tail_max,
        tolerance: tol,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoDefinitionReport {
    pub lambda: f64,
    pub lambda_alt: f64,
    pub relative_difference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn two_definition_check(body: &ConvexBody) -> Result<TwoDefinitionReport> {
    let lambda = lambda_1e(body)?.lambda;
    let lambda_alt = lambda_1e_alt(body)?;
    let relative_difference = (lambda - lambda_alt).abs() / lambda.abs();
    let tolerance = if body.n() == 1 { 1e-6 } else { 1e-4 };
    Ok(TwoDefinitionReport {
        lambda,
        lambda_alt,
        relative_difference,
        tolerance,
        passed: relative_difference < tolerance,
    })
}

/// Second variation along `h' = h z` written with measures:
/// `(p−1−n)/((n+1)V) ∫ z² h dS + (n+1−p) (∫ z h dS / ((n+1)V))² + 𝔪_{K,z}(h²) / ((n+1)V)`.
pub fn measure_second_variation(spec: &ProblemSpec, body: &ConvexBody, z: &ScalarField) -> Result<SecondVariation> {
    let d = body.domain();
    d.check_field(z)?;
    let (p, n) = (spec.p(), body.n() as f64);
    let h = body.support();
    let ds = &body.surface_measure().density;
    let mass = (n + 1.0) * body.volume();
    let z2 = DVector::from_fn(h.len(), |k, _| z.0[k] * z.0[k] * h[k] * ds[k]);
    let z1 = DVector::from_fn(h.len(), |k, _| z.0[k] * h[k] * ds[k]);
    let term1 = (p - 1.0 - n) / mass * d.quad(&z2);
    let term2 = (n + 1.0 - p) * (d.quad(&z1) / mass).powi(2);
    let term3 = measure_pairing(body, z, &ScalarField(h.component_mul(h)))? / mass;
    Ok(SecondVariation {
        term1,
        term2,
        term3,
        total: term1 + term2 + term3,
    })
}

/// Pairing of each body against the empirical envelope `‖φ‖∞ ‖∇u‖∞² (1 + ‖h‖∞)^n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub values: Vec<f64>,
    pub proxies: Vec<f64>,
    /// Largest `|value| / proxy` over the first body.
    pub constant: f64,
    /// Bodies whose ratio exceeds `EXCEEDANCE_LIMIT · constant`.
    pub exceedances: Vec<usize>,
}

pub fn pairing_envelope(bodies: &[ConvexBody], u: &ScalarField, phi: &ScalarField) -> Result<EnvelopeReport> {
    if bodies.is_empty() {
        return Err(MinkError::Validation("envelope needs at least one body".into()));
    }
    let mut values = Vec::with_capacity(bodies.len());
    let mut proxies = Vec::with_capacity(bodies.len());
    for b in bodies {
        let d = b.domain();
        let grad = d.tangent_gradient(&d.project_even(u)?)?.comps;
        let g2 = (0..d.node_count())
            .map(|k| grad.iter().map(|c| c[k] * c[k]).sum::<f64>())
            .fold(0.0f64, f64::max);
        values.push(measure_pairing(b, u, phi)?);
        proxies.push(phi.0.amax() * g2 * (1.0 + b.support().amax()).powi(b.n() as i32));
    }
    let ratio = |k: usize| if proxies[k] > 0.0 { values[k].abs() / proxies[k] } else { 0.0 };
    let constant = ratio(0);
    let exceedances = (0..bodies.len())
        .filter(|&k| ratio(k) > EXCEEDANCE_LIMIT * constant * (1.0 + 1e-12))
        .collect();
    Ok(EnvelopeReport {
        values,
        proxies,
        constant,
        exceedances,
    })
}
