//! Subcommand implementations.

use std::path::Path;
use std::sync::Arc;

use mink_core::lp::{check_lp_bm, check_lp_minkowski, InequalityReport, Verdict};
use mink_core::solver::{minimize, nonuniqueness_probe, ProbeOptions, ProblemSpec, SolveOptions};
use mink_core::spectrum::{lambda_1e, lambda_1e_k};
use mink_core::stability::{semicontinuity_probe, stability_experiment, SmoothFamily, SEMICONT_TOL};
use mink_core::variation::{fd_second_variation, second_variation};
use mink_core::{build_domain, catalog, lq_family, CatalogEntry, ConvexBody, Domain};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::*;
use crate::config::Invocation;
use crate::output::{write_csv, write_json, Cell, Provenance};
use crate::source::{body_from_spec, load_body, load_field, PairSpec};
use crate::{selftest, CliError, CliResult};

pub fn dispatch(inv: &Invocation) -> CliResult<()> {
    let prov = Provenance::new(&inv.config_hash, inv.seed);
    match &inv.command {
        Command::Body(BodyCommand::Make(a)) => body_make(a, &prov),
        Command::Body(BodyCommand::Info(a)) => body_info(a, &prov),
        Command::Body(BodyCommand::Boundary(a)) => body_boundary(a, &prov),
        Command::Solve(a) => solve(a, &prov),
        Command::Eigen(a) => eigen(a, &prov),
        Command::EigenSweep(a) => eigen_sweep(a, &prov),
        Command::BmCheck(a) => bm_check(a, inv.seed, &prov),
        Command::Variation(a) => variation(a, &prov),
        Command::Stability(a) => stability(a, &prov),
        Command::ProbeNonunique(a) => probe(a, inv.seed, &prov),
        Command::Selftest(_) => selftest::run(),
    }
}

fn domain(args: &DomainArgs, res1: usize, res2: usize) -> CliResult<Arc<Domain>> {
    let res = args.res.unwrap_or(if args.n == 2 { res2 } else { res1 });
    Ok(Arc::new(build_domain(args.n, res)?))
}

fn body_make(a: &MakeArgs, prov: &Provenance) -> CliResult<()> {
    let d = domain(&a.domain, 64, 8)?;
    let entry: CatalogEntry = serde_json::from_str(&a.catalog)?;
    let body = catalog(&d, &entry)?;
    write_json(a.out.as_deref(), prov, "body make", &body.to_file())
}

#[derive(Serialize)]
struct BodyInfo {
    name: String,
    n: usize,
    resolution: usize,
    basis_len: usize,
    volume: f64,
    surface_area: f64,
    h_min: f64,
    h_max: f64,
    min_eig: f64,
    lambda_1e: f64,
}

fn body_info(a: &BodyInput, prov: &Provenance) -> CliResult<()> {
    let b = load_body(&a.body)?;
    let d = b.domain();
    let info = BodyInfo {
        name: b.meta.name.clone(),
        n: b.n(),
        resolution: d.resolution(),
        basis_len: d.basis_len(),
        volume: b.volume(),
        surface_area: b.surface_measure().total(d),
        h_min: b.support().min(),
        h_max: b.support().max(),
        min_eig: b.hessian().min_eig.min(),
        lambda_1e: lambda_1e(&b)?.lambda,
    };
    write_json(None, prov, "body info", &info)
}

fn body_boundary(a: &BoundaryArgs, prov: &Provenance) -> CliResult<()> {
    let b = load_body(&a.body)?;
    let dims = b.n() + 1;
    let header: Vec<&str> = ["x", "y", "z"][..dims].to_vec();
    let rows: Vec<Vec<Cell>> = b
        .boundary_points()
        .iter()
        .map(|x| x[..dims].iter().map(|&c| Cell::Float(c)).collect())
        .collect();
    write_csv(a.out.as_deref(), prov, &header, &rows)
}

fn is_path_spec(s: &str) -> bool {
    s != "ball" && !s.trim_start().starts_with('{')
}

fn solve(a: &SolveArgs, prov: &Provenance) -> CliResult<()> {
    let d = if is_path_spec(&a.init) {
        let b = load_body(Path::new(&a.init))?;
        let spec = b.domain().spec();
        if a.domain.n != spec.n || a.domain.res.is_some_and(|r| r != spec.resolution) {
            return Err(CliError::Validation(format!(
                "--n/--res disagree with the domain of {}",
                a.init
            )));
        }
        b.domain().clone()
    } else {
        domain(&a.domain, 64, 8)?
    };
    let init = body_from_spec(&a.init, &d)?;
    let f = load_field(&a.f, &d, true)?;
    let spec = ProblemSpec::new(&d, a.p, f)?;
    let opts = SolveOptions {
        tol: a.tol,
        newton_threshold: a.newton_threshold,
        step_min: a.step_min,
        max_iters: a.max_iters,
        allow_p_gt_1: a.allow_p_gt_1,
        chll_c1: a.chll_c1,
        self_check: a.self_check,
    };
    let report = minimize(&spec, &init, &opts)?;
    write_json(a.out.as_deref(), prov, "solve", &report)?;
    if let Some(t) = &a.trace {
        let rows: Vec<Vec<Cell>> = (0..report.residual_history.len())
            .map(|i| {
                vec![
                    i.into(),
                    report.residual_history[i].into(),
                    report.f_history.get(i).copied().into(),
                    report
                        .method_trace
                        .get(i)
                        .map_or(Cell::Empty, |m| Cell::Str(format!("{m:?}").to_lowercase())),
                ]
            })
            .collect();
        write_csv(Some(t), prov, &["iteration", "residual", "functional", "method"], &rows)?;
    }
    if !report.converged {
        return Err(CliError::NotConverged(format!(
            "{:?} after {} iterations, residual {:e}",
            report.termination, report.iterations, report.residual
        )));
    }
    Ok(())
}

fn eigen(a: &EigenArgs, prov: &Provenance) -> CliResult<()> {
    let b = load_body(&a.body)?;
    let r = lambda_1e_k(&b, a.k)?;
    let rows: Vec<Vec<Cell>> = r
        .spectrum
        .iter()
        .zip(&r.residuals)
        .enumerate()
        .map(|(i, (v, res))| vec![(i + 1).into(), (*v).into(), (*res).into()])
        .collect();
    write_csv(a.out.as_deref(), prov, &["index", "eigenvalue", "residual"], &rows)
}

fn eigen_sweep(a: &SweepArgs, prov: &Provenance) -> CliResult<()> {
    let d = domain(&a.domain, 128, 8)?;
    let (members, _) = match a.family {
        Family::Lq => lq_family(&d, &a.q)?,
    };
    let lambdas = members
        .par_iter()
        .map(|m| lambda_1e(m).map(|r| r.lambda))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<Cell>> = a.q.iter().zip(&lambdas).map(|(q, l)| vec![(*q).into(), (*l).into()]).collect();
    write_csv(a.out.as_deref(), prov, &["q", "lambda"], &rows)
}

fn pairs(a: &BmArgs, d: &Arc<Domain>, seed: u64) -> CliResult<Vec<(String, ConvexBody, ConvexBody)>> {
    if let Some(path) = &a.pairs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let specs: Vec<PairSpec> = serde_json::from_str(&text)?;
        return specs
            .into_iter()
            .enumerate()
            .map(|(i, s)| Ok((s.id.unwrap_or_else(|| i.to_string()), s.l.build(d)?, s.k.build(d)?)))
            .collect();
    }
    (0..a.random_pairs)
        .map(|i| {
            let body = |j: u64| {
                catalog(
                    d,
                    &CatalogEntry::RandomEven {
                        seed: seed.wrapping_mul(1_000_003).wrapping_add(j),
                        amplitude: 0.3,
                        max_degree: 6,
                    },
                )
            };
            Ok((i.to_string(), body(2 * i as u64)?, body(2 * i as u64 + 1)?))
        })
        .collect()
}

fn bm_check(a: &BmArgs, seed: u64, prov: &Provenance) -> CliResult<()> {
    let d = domain(&a.domain, 32, 6)?;
    let pairs = pairs(a, &d, seed)?;
    let kinds: &[&str] = match a.check {
        Inequality::Bm => &["bm"],
        Inequality::Minkowski => &["minkowski"],
        Inequality::Both => &["bm", "minkowski"],
    };
    let reports = pairs
        .par_iter()
        .map(|(id, l, k)| {
            kinds
                .iter()
                .map(|kind| {
                    let r = if *kind == "bm" {
                        check_lp_bm(l, k, a.p, a.lambda)?
                    } else {
                        check_lp_minkowski(l, k, a.p)?
                    };
                    Ok((id.clone(), *kind, r))
                })
                .collect::<CliResult<Vec<(String, &str, InequalityReport)>>>()
        })
        .collect::<CliResult<Vec<_>>>()?;
    let rows: Vec<Vec<Cell>> = reports
        .into_iter()
        .flatten()
        .map(|(id, kind, r)| {
            let verdict = match r.verdict {
                Verdict::Holds => "holds",
                Verdict::Violated { .. } => "violated",
            };
            vec![
                id.into(),
                r.p.into(),
                r.lambda.into(),
                r.lhs.into(),
                r.rhs.into(),
                r.margin.into(),
                verdict.into(),
                kind.into(),
            ]
        })
        .collect();
    write_csv(
        a.out.as_deref(),
        prov,
        &["pair_id", "p", "lambda", "lhs", "rhs", "margin", "verdict", "inequality"],
        &rows,
    )
}

fn variation(a: &VariationArgs, prov: &Provenance) -> CliResult<()> {
    let b = load_body(&a.body)?;
    let d = b.domain();
    let spec = ProblemSpec::new(d, a.p, load_field(&a.f, d, true)?)?;
    let z = load_field(&a.dir, d, false)?;
    let sv = second_variation(&spec, &b, &z)?;
    let fd = fd_second_variation(&spec, &b, &z, a.eps)?;
    let rel = (sv.total - fd).abs() / fd.abs().max(f64::MIN_POSITIVE);
    write_csv(
        a.out.as_deref(),
        prov,
        &["term1", "term2", "term3", "total", "fd_value", "rel_err"],
        &[vec![sv.term1.into(), sv.term2.into(), sv.term3.into(), sv.total.into(), fd.into(), rel.into()]],
    )
}

fn stability(a: &StabilityArgs, prov: &Provenance) -> CliResult<()> {
    let d = domain(&a.domain, 128, 8)?;
    let fam = match a.family {
        Family::Lq => SmoothFamily::lq(&d, &a.schedule)?,
    };
    let u = load_field(&a.u, &d, false)?;
    let phi = load_field(&a.phi, &d, false)?;
    let st = stability_experiment(&fam, &u, &phi)?;
    let sc = semicontinuity_probe(&fam, SEMICONT_TOL)?;
    let rows: Vec<Vec<Cell>> = (0..fam.len())
        .map(|i| {
            vec![
                i.into(),
                a.schedule[i].into(),
                st.distances[i].into(),
                st.pairings[i].into(),
                st.gaps[i].into(),
                sc.lambdas[i].into(),
            ]
        })
        .collect();
    write_csv(
        a.out.as_deref(),
        prov,
        &["index", "q", "distance", "pairing", "gap", "lambda"],
        &rows,
    )?;
    eprintln!(
        "stability: bound {} (C = {:e}, max exceedance {:.3}); semicontinuity {} (limit {:.10}, limsup estimate {:.10})",
        if st.passed { "holds" } else { "violated" },
        st.constant,
        st.max_exceedance,
        if sc.passed { "holds" } else { "violated" },
        sc.limit_lambda,
        sc.limsup_estimate
    );
    Ok(())
}

fn probe(a: &ProbeArgs, seed: u64, prov: &Provenance) -> CliResult<()> {
    let d = Arc::new(build_domain(1, a.res)?);
    let opts = ProbeOptions {
        q: a.q,
        starts: a.starts,
        perturbation: a.perturbation,
        seed,
        ..ProbeOptions::default()
    };
    let r = nonuniqueness_probe(&d, a.p, &opts)?;
    write_json(a.out.as_deref(), prov, "probe-nonunique", &r)
}
