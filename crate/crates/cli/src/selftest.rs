//! Fast closed-form checks across the toolkit.

use std::f64::consts::PI;
use std::sync::Arc;

use mink_core::lp::{check_lp_bm, check_lp_minkowski, wulff_body};
use mink_core::solver::{minimize, residual, ProblemSpec, SolveOptions};
use mink_core::spectrum::{lambda_1e, lambda_1e_alt};
use mink_core::stability::measure_pairing;
use mink_core::variation::second_variation;
use mink_core::{ball, build_domain, catalog, support_distance, CatalogEntry, Domain, ScalarField};

use crate::{CliError, CliResult};

type Check = (&'static str, fn() -> mink_core::Result<f64>, f64);

fn circle(res: usize) -> Arc<Domain> {
    Arc::new(build_domain(1, res).expect("valid resolution"))
}

fn cos2(d: &Domain) -> ScalarField {
    ScalarField::from_fn(d, |u| u[0] * u[0] - u[1] * u[1])
}

fn checks() -> Vec<Check> {
    vec![
        ("unit disc area is pi", || Ok((ball(&circle(16), 1.0)?.volume() - PI).abs()), 1e-12),
        (
            "unit ball volume is 4pi/3",
            || {
                let d = Arc::new(build_domain(2, 6)?);
                Ok((ball(&d, 1.0)?.volume() - 4.0 * PI / 3.0).abs())
            },
            1e-12,
        ),
        ("lambda of the disc is 4", || Ok((lambda_1e(&ball(&circle(16), 1.0)?)?.lambda - 4.0).abs()), 1e-8),
        (
            "lambda of the ball is 6",
            || {
                let d = Arc::new(build_domain(2, 6)?);
                Ok((lambda_1e(&ball(&d, 1.0)?)?.lambda - 6.0).abs())
            },
            1e-6,
        ),
        ("both lambda definitions agree on the disc", || Ok((lambda_1e_alt(&ball(&circle(16), 1.0)?)? - 4.0).abs()), 1e-8),
        (
            "ball is critical for constant data",
            || {
                let d = circle(16);
                residual(&ProblemSpec::constant(&d, 0.0, 1.0)?, &ball(&d, 1.0)?)
            },
            1e-12,
        ),
        (
            "second variation on the disc along cos 2t is 1",
            || {
                let d = circle(16);
                let s = second_variation(&ProblemSpec::constant(&d, 0.0, 1.0)?, &ball(&d, 1.0)?, &cos2(&d))?;
                Ok((s.total - 1.0).abs())
            },
            1e-10,
        ),
        (
            "solver returns the disc from a random start",
            || {
                let d = circle(16);
                let k = catalog(&d, &CatalogEntry::RandomEven { seed: 1, amplitude: 0.2, max_degree: 4 })?;
                let r = minimize(&ProblemSpec::constant(&d, 0.5, 1.0)?, &k, &SolveOptions::default())?;
                Ok(r.solution.support().add_scalar(-1.0).amax())
            },
            1e-6,
        ),
        (
            "Wulff shape of a support function is the body",
            || {
                let d = circle(16);
                let k = catalog(&d, &CatalogEntry::RandomEven { seed: 2, amplitude: 0.2, max_degree: 4 })?;
                let w = wulff_body(&d, &ScalarField(k.support().clone()))?;
                match w.body {
                    Some(b) => support_distance(&b, &k),
                    None => Ok(f64::INFINITY),
                }
            },
            1e-8,
        ),
        (
            "inequalities are equalities on a body and itself",
            || {
                let d = circle(16);
                let k = catalog(&d, &CatalogEntry::RandomEven { seed: 3, amplitude: 0.2, max_degree: 4 })?;
                let a = check_lp_bm(&k, &k, 0.5, 0.3)?.margin.abs();
                let b = check_lp_minkowski(&k, &k, 0.0)?.margin.abs();
                Ok(a.max(b))
            },
            1e-9,
        ),
        (
            "pairing on the disc along cos 2t is 4pi",
            || {
                let d = circle(16);
                let one = ScalarField::constant(&d, 1.0);
                Ok((measure_pairing(&ball(&d, 1.0)?, &cos2(&d), &one)? - 4.0 * PI).abs())
            },
            1e-12,
        ),
    ]
}

pub fn run() -> CliResult<()> {
    let mut failed = 0;
    for (name, check, tol) in checks() {
        match check() {
            Ok(err) if err <= tol => println!("ok   {name} (error {err:.1e})"),
            Ok(err) => {
                failed += 1;
                println!("FAIL {name} (error {err:.3e} > {tol:.0e})");
            }
            Err(e) => {
                failed += 1;
                println!("FAIL {name} ({e})");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Numeric(format!("{failed} selftest checks failed")));
    }
    Ok(())
}
