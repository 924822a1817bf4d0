//! Acceptance suite: one line per criterion, nonzero exit status if any fails.

use std::sync::Arc;
use std::time::Instant;

use mink_core::lp::{check_lp_bm, check_lp_minkowski, wulff_body};
use mink_core::solver::{
    forward_data, functional_f, gradient_f, minimize, nonuniqueness_probe, ProbeOptions, ProblemSpec, SolveOptions,
};
use mink_core::spectrum::{lambda_1e, spectral_facts_check};
use mink_core::stability::{stability_experiment, two_definition_check, SmoothFamily};
use mink_core::variation::{
    eigen_direction, fd_second_variation, g_path, local_lp_form, second_variation, PathKind, PathSpec,
};
use mink_core::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn circle(res: usize) -> Arc<Domain> {
    Arc::new(build_domain(1, res).unwrap())
}

fn random_body(d: &Arc<Domain>, seed: u64, amplitude: f64) -> ConvexBody {
    catalog(d, &CatalogEntry::RandomEven { seed, amplitude, max_degree: 6 }).unwrap()
}

/// Random even coefficients with decaying amplitudes, zero constant term.
fn random_direction(d: &Domain, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let labels = &d.basis().labels;
    DVector::from_fn(labels.len(), |a, _| {
        let r: f64 = rng.random_range(-1.0..1.0);
        let deg = labels[a].degree as f64;
        if deg == 0.0 || deg > 8.0 {
            0.0
        } else {
            r / (1.0 + deg * deg)
        }
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn c1_ball_anchor() -> Outcome {
    let t = Instant::now();
    let l1 = lambda_1e(&ball(&circle(32), 1.0).unwrap()).unwrap().lambda;
    let t1 = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let d2 = Arc::new(build_domain(2, 8).unwrap());
    let l2 = lambda_1e(&ball(&d2, 1.0).unwrap()).unwrap().lambda;
    let t2 = t.elapsed().as_secs_f64();
    outcome(
        (l1 - 4.0).abs() < 1e-8 && t1 < 1.0 && (l2 - 6.0).abs() < 1e-6 && t2 < 10.0,
        format!("n=1 λ={l1:.12} ({t1:.3}s), n=2 λ={l2:.12} ({t2:.3}s)"),
    )
}

fn c2_linear_modes() -> Outcome {
    let d = circle(32);
    let mut worst: f64 = 0.0;
    let mut mult_ok = true;
    for seed in 0..20 {
        let f = spectral_facts_check(&random_body(&d, 1000 + seed, 0.3)).unwrap();
        worst = worst.max(f.linear_residuals.iter().cloned().fold(0.0, f64::max));
        mult_ok &= f.cluster_multiplicity == 2;
    }
    outcome(worst < 1e-6 && mult_ok, format!("max residual {worst:.2e}, multiplicity 2 in all: {mult_ok}"))
}

fn c3_gl_invariance() -> Outcome {
    let d = circle(64);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut max_cond: f64 = 0.0;
    let mut count = 0;
    while count < 10 {
        let t = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
        let sv = t.clone().svd(false, false).singular_values;
        let cond = sv.max() / sv.min();
        if !(cond <= 10.0) {
            continue;
        }
        let k = random_body(&d, 300 + count, 0.2);
        let tk = k.linear_image(&t).unwrap();
        let (a, b) = (lambda_1e(&k).unwrap().lambda, lambda_1e(&tk).unwrap().lambda);
        worst = worst.max(rel(b, a));
        max_cond = max_cond.max(cond);
        count += 1;
    }
    outcome(worst < 1e-5, format!("max relative change {worst:.2e}, max cond(T) {max_cond:.2}"))
}

fn c4_cube_trend() -> Outcome {
    let d = circle(128);
    let (fam, t) = lq_family(&d, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap();
    let l: Vec<f64> = fam.iter().map(|b| lambda_1e(b).unwrap().lambda).collect();
    let monotone = l.windows(2).all(|w| w[1] < w[0]);
    let range = l.iter().all(|v| (2.0 - 1e-6..=4.0 + 1e-6).contains(v));
    let last = *l.last().unwrap();
    outcome(
        monotone && range && (last - 2.0).abs() < 0.2,
        format!("λ = {l:.6?} (smoothing {t:e})"),
    )
}

fn c5_uniqueness() -> Outcome {
    let t = Instant::now();
    let d = circle(64);
    let opts = SolveOptions {
        tol: 1e-10,
        ..SolveOptions::default()
    };
    let (mut dev, mut res): (f64, f64) = (0.0, 0.0);
    let mut all_converged = true;
    for p in [-1.0, 0.0, 0.5] {
        let spec = ProblemSpec::constant(&d, p, 1.0).unwrap();
        for s in 0..5 {
            let r = minimize(&spec, &random_body(&d, 500 + s, 0.3), &opts).unwrap();
            all_converged &= r.converged;
            dev = dev.max(r.solution.support().add_scalar(-1.0).amax());
            res = res.max(r.residual);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        all_converged && dev < 1e-6 && res < 1e-8 && secs < 30.0,
        format!("max ‖h−1‖∞ {dev:.2e}, max residual {res:.2e}, {secs:.2}s"),
    )
}

fn c6_round_trip() -> Outcome {
    let d = circle(64);
    let mut worst: f64 = 0.0;
    for p in [0.0, 0.5] {
        for s in 0..10 {
            let k = random_body(&d, 600 + s, 0.3).normalized().unwrap();
            let spec = ProblemSpec::new(&d, p, forward_data(&k, p)).unwrap();
            let r = minimize(&spec, &ball(&d, 1.0).unwrap(), &SolveOptions::default()).unwrap();
            worst = worst.max(support_distance(&r.solution, &k).unwrap());
        }
    }
    outcome(worst < 1e-6, format!("max support distance {worst:.2e}"))
}

fn c7_variational_oracles() -> Outcome {
    let d = circle(32);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let f = ScalarField::from_fn(&d, |u| 1.0 + 0.4 * u[0] * u[0]);
    let mut grad_err: f64 = 0.0;
    for i in 0..20 {
        let p = [-0.5, 0.0, 0.5, 0.9][i % 4];
        let spec = ProblemSpec::new(&d, p, f.clone()).unwrap();
        let k = random_body(&d, 700 + i as u64, 0.2);
        let dir = random_direction(&d, &mut rng);
        let an = gradient_f(&spec, &k).unwrap().dot(&dir);
        let eps = 1e-5;
        let fp = functional_f(&spec, &make_body(&d, k.coeffs() + &dir * eps).unwrap()).unwrap();
        let fm = functional_f(&spec, &make_body(&d, k.coeffs() - &dir * eps).unwrap()).unwrap();
        grad_err = grad_err.max(rel(an, (fp - fm) / (2.0 * eps)));
    }
    let mut sv_err: f64 = 0.0;
    for i in 0..10 {
        let p = [-0.5, 0.0, 0.5][i % 3];
        let k = random_body(&d, 720 + i as u64, 0.15);
        let spec = ProblemSpec::new(&d, p, forward_data(&k, p)).unwrap();
        let z = ScalarField(d.evaluate(&random_direction(&d, &mut rng)).unwrap().0);
        let an = second_variation(&spec, &k, &z).unwrap().total;
        let fd = fd_second_variation(&spec, &k, &z, 1e-3).unwrap();
        sv_err = sv_err.max(rel(an, fd));
    }
    let mut path_err: f64 = 0.0;
    for i in 0..10 {
        let k = random_body(&d, 740 + i as u64, 0.15);
        let (z, p0) = eigen_direction(&k).unwrap();
        let kind = if i % 2 == 0 { PathKind::Additive } else { PathKind::Multiplicative };
        let w = random_direction(&d, &mut rng);
        let r = g_path(&PathSpec::new(&k, w, kind).unwrap(), &z, p0).unwrap();
        path_err = path_err.max(r.rel_err);
    }
    outcome(
        grad_err < 1e-5 && sv_err < 1e-4 && path_err < 1e-3,
        format!("gradient {grad_err:.2e}, second variation {sv_err:.2e}, g_path {path_err:.2e}"),
    )
}

fn c8_local_inequality() -> Outcome {
    let d = circle(32);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut min = f64::INFINITY;
    for b in 0..100 {
        let k = random_body(&d, 800 + b, 0.3);
        for _ in 0..20 {
            let z = ScalarField(d.evaluate(&random_direction(&d, &mut rng)).unwrap().0);
            min = min.min(local_lp_form(&k, 0.0, &z).unwrap());
        }
    }
    outcome(min >= -1e-7, format!("min form value {min:.3e}"))
}

fn c9_inequality_checkers() -> Outcome {
    let d = circle(32);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = f64::INFINITY;
    let mut worst_homothetic: f64 = 0.0;
    for i in 0..200 {
        let l = random_body(&d, 900 + 2 * i, 0.3);
        let k = random_body(&d, 901 + 2 * i, 0.3);
        let c = rng.random_range(0.5..2.0);
        let kc = l.scaled(c).unwrap();
        let lambda = rng.random_range(0.05..0.95);
        for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
            worst = worst.min(check_lp_bm(&l, &k, p, lambda).unwrap().margin);
            worst = worst.min(check_lp_minkowski(&l, &k, p).unwrap().margin);
            let h1 = check_lp_bm(&l, &kc, p, lambda).unwrap().margin.abs();
            let h2 = check_lp_minkowski(&kc, &l, p).unwrap().margin.abs();
            worst_homothetic = worst_homothetic.max(h1).max(h2);
        }
    }
    outcome(
        worst >= -1e-9 && worst_homothetic < 1e-9,
        format!("min margin {worst:.3e}, max homothetic |margin| {worst_homothetic:.2e}"),
    )
}

/// Sutherland-Hodgman clipping of a large square by every halfplane `x·u ≤ q`.
fn halfplane_oracle(dirs: &[[f64; 3]], q: &[f64]) -> Vec<[f64; 2]> {
    let b = 100.0 * q.iter().cloned().fold(0.0, f64::max);
    let mut poly = vec![[b, b], [-b, b], [-b, -b], [b, -b]];
    for (u, &qv) in dirs.iter().zip(q) {
        let side = |x: [f64; 2]| x[0] * u[0] + x[1] * u[1] - qv;
        let mut out = Vec::with_capacity(poly.len() + 1);
        for i in 0..poly.len() {
            let (a, c) = (poly[i], poly[(i + 1) % poly.len()]);
            let (sa, sc) = (side(a), side(c));
            if sa <= 0.0 {
                out.push(a);
            }
            if (sa < 0.0) != (sc < 0.0) && sa != sc {
                let t = sa / (sa - sc);
                out.push([a[0] + t * (c[0] - a[0]), a[1] + t * (c[1] - a[1])]);
            }
        }
        poly = out;
    }
    poly
}

fn c10_wulff() -> Outcome {
    let d = circle(64);
    let mut entries = vec![
        CatalogEntry::Ball { r: 1.0 },
        CatalogEntry::Ball { r: 2.5 },
        CatalogEntry::Ellipsoid { a: vec![vec![2.0, 0.3], vec![0.3, 1.0]] },
        CatalogEntry::Ellipsoid { a: vec![vec![1.0, 0.0], vec![0.0, 3.0]] },
        CatalogEntry::LqBall { q: 4.0, smoothing: None },
        CatalogEntry::LqBall { q: 8.0, smoothing: None },
    ];
    entries.extend((0..14).map(|s| CatalogEntry::RandomEven { seed: 1100 + s, amplitude: 0.3, max_degree: 8 }));
    let mut worst: f64 = 0.0;
    for e in &entries {
        let k = catalog(&d, e).unwrap();
        let w = wulff_body(&d, &ScalarField(k.support().clone())).unwrap();
        worst = match w.body {
            Some(b) => worst.max(support_distance(&b, &k).unwrap()),
            None => f64::INFINITY,
        };
    }
    let fine = circle(512);
    let q = ScalarField::from_fn(&fine, |u| 1.0 + 0.3 * (4.0 * u[1].atan2(u[0])).cos());
    let w = wulff_body(&fine, &q).unwrap();
    let poly = halfplane_oracle(fine.nodes(), q.values().as_slice());
    let oracle: Vec<f64> = fine
        .nodes()
        .iter()
        .map(|u| poly.iter().map(|x| x[0] * u[0] + x[1] * u[1]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let agree = w
        .support
        .values()
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        worst < 1e-8 && agree < 1e-6,
        format!(
            "catalog max distance {worst:.2e}, oracle agreement {agree:.2e} on {} directions",
            fine.node_count()
        ),
    )
}

fn c11_nonuniqueness() -> Outcome {
    let t = Instant::now();
    let d = circle(256);
    let opts = ProbeOptions {
        starts: 1,
        ..ProbeOptions::default()
    };
    let r = nonuniqueness_probe(&d, -0.5, &opts).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let distinct = r.solutions.len() >= 2
        && r.min_pairwise_distance.is_some_and(|m| m > 1e-2)
        && r.solution_residuals.iter().all(|&x| x < 1e-6);
    let saddle = r.saddle_certified && r.second_variation.is_some_and(|s| s < 0.0);
    outcome(
        saddle && (distinct || r.seed_residual < 1e-6) && secs < 300.0,
        format!(
            "λ={:.6}, second variation {:.3e}, {} solutions, min distance {:?}, residuals {:?}, {secs:.1}s{}",
            r.lambda,
            r.second_variation.unwrap_or(f64::NAN),
            r.solutions.len(),
            r.min_pairwise_distance,
            r.solution_residuals,
            if distinct { "" } else { " (saddle certificate only)" }
        ),
    )
}

fn c12_stability() -> Outcome {
    let schedule = [4.0, 6.0, 8.0, 12.0, 16.0, 24.0];
    let d = circle(128);
    let fam = SmoothFamily::lq(&d, &schedule).unwrap();
    let u = ScalarField::from_fn(&d, |x| x[0] * x[0] - x[1] * x[1]);
    let s1 = stability_experiment(&fam, &u, &ScalarField::constant(&d, 1.0)).unwrap();
    let d2 = Arc::new(build_domain(2, 8).unwrap());
    let fam2 = SmoothFamily::lq(&d2, &schedule).unwrap();
    let u2 = ScalarField::from_fn(&d2, |x| x[0] * x[0] - x[1] * x[1]);
    let s2 = stability_experiment(&fam2, &u2, &ScalarField::constant(&d2, 1.0)).unwrap();
    let mut worst: f64 = 0.0;
    let mut all = true;
    for s in 0..50 {
        let r = two_definition_check(&random_body(&d, 1200 + s, 0.3)).unwrap();
        worst = worst.max(r.relative_difference);
        all &= r.passed;
    }
    outcome(
        s1.passed && s2.passed && all && worst < 1e-6,
        format!(
            "exceedance n=1 {:.3}, n=2 {:.3}; two-definition max relative difference {worst:.2e}",
            s1.max_exceedance, s2.max_exceedance
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("spectral anchor (ball)", c1_ball_anchor),
        ("spectral anchor (linear modes)", c2_linear_modes),
        ("GL invariance", c3_gl_invariance),
        ("cube-limit trend", c4_cube_trend),
        ("solver uniqueness", c5_uniqueness),
        ("forward-inverse round trip", c6_round_trip),
        ("variational oracles", c7_variational_oracles),
        ("local inequality", c8_local_inequality),
        ("inequality checkers", c9_inequality_checkers),
        ("Wulff correctness", c10_wulff),
        ("non-uniqueness probe", c11_nonuniqueness),
        ("stability", c12_stability),
    ];
    let filter: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if filter.is_some_and(|f| f != i + 1) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {status} {name} [{:.1}s]: {}",
            i + 1,
            t.elapsed().as_secs_f64(),
            o.detail
        );
        failures += usize::from(!o.passed);
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
