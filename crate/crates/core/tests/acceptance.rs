//! Acceptance criteria 1–10, one line each. Runs without the libtest harness so
//! the verdict lines are always printed; exits nonzero if any criterion fails.

mod common;

use std::time::Instant;

use memkit_core::index::{
    analyze, kronecker_oracle, tractability_chain, AnalysisOptions, Pencil, ProjectorKind,
};
use memkit_core::linalg::{Vector, DEFAULT_RANK_TOL};
use memkit_core::nodal::{assemble, SemiExplicitDAE};
use memkit_core::random::random_linear_circuit;
use memkit_core::sim::{simulate, simulate_observed, SolverConfig};
use memkit_core::{degeneracy_report, DeviceClass, TractabilityIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{all_fixtures, fd_jacobian, fixture, max_relative_error, DEGENERATE, NONDEGENERATE};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn options() -> AnalysisOptions {
    AnalysisOptions {
        rank_tol: DEFAULT_RANK_TOL,
        oracle: true,
        ..Default::default()
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut agree = 0;
    let mut total = 0;
    let mut problems = Vec::new();
    let mut covered = std::collections::BTreeSet::new();
    for name in NONDEGENERATE.iter().chain(DEGENERATE.iter()) {
        let circuit = fixture(name);
        covered.extend(circuit.branches().iter().map(|b| b.device.class));
        let report = analyze(&assemble(&circuit), None, &options()).unwrap();
        if !report.hypothesis_warnings.is_empty() {
            problems.push(format!("{name}: {}", report.hypothesis_warnings.join("; ")));
        }
        total += 1;
        if report.index_one == report.degeneracy.nondegenerate {
            agree += 1;
        } else {
            problems.push(format!(
                "{name}: index_one={} nondegenerate={}",
                report.index_one, report.degeneracy.nondegenerate
            ));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let dynamic = [
        DeviceClass::Capacitor,
        DeviceClass::Inductor,
        DeviceClass::QMemristor,
        DeviceClass::PhiMemristor,
        DeviceClass::Memcapacitor,
        DeviceClass::Meminductor,
        DeviceClass::HybridM,
        DeviceClass::HybridW,
    ];
    let missing: Vec<String> = dynamic
        .iter()
        .filter(|c| !covered.contains(c))
        .map(|c| c.keyword().to_string())
        .collect();
    if !missing.is_empty() {
        problems.push(format!("classes not covered: {}", missing.join(",")));
    }
    let pass = problems.is_empty() && agree == total && total >= 12 && elapsed < 1.0;
    verdict(
        pass,
        format!("index-one test agrees with nondegeneracy on {agree}/{total} fixtures in {elapsed:.3} s {}", problems.join(" | ")),
    )
}

fn criterion_2() -> Verdict {
    let mut hits = 0;
    let mut detail = Vec::new();
    for name in DEGENERATE {
        let circuit = fixture(name);
        let report = analyze(&assemble(&circuit), None, &options()).unwrap();
        let index = report.tractability_index();
        if index == TractabilityIndex::Two && report.hypothesis_warnings.is_empty() {
            hits += 1;
        } else {
            detail.push(format!("{name}: index {index}"));
        }
    }
    verdict(
        hits == DEGENERATE.len(),
        format!(
            "tractability index 2 on {hits}/{} degenerate fixtures {}",
            DEGENERATE.len(),
            detail.join(" | ")
        ),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut agree = 0;
    let mut histogram = [0usize; 3];
    let mut detail = Vec::new();
    for k in 0..25 {
        let circuit = random_linear_circuit(&mut rng, 9);
        let dae = assemble(&circuit);
        let jac = dae.jacobian(&Vector::zeros(dae.dim()), 0.0).unwrap();
        let pencil = Pencil::new(dae.e_matrix(), jac.f);
        let chain = tractability_chain(&pencil, DEFAULT_RANK_TOL, ProjectorKind::Orthogonal).index;
        let oracle = kronecker_oracle(&pencil, DEFAULT_RANK_TOL);
        match (chain.as_number(), &oracle) {
            (Some(a), Ok(b)) if a == *b => {
                agree += 1;
                histogram[a.min(2)] += 1;
            }
            _ => detail.push(format!(
                "circuit {k}: chain {chain}, oracle {oracle:?}\n{circuit}"
            )),
        }
    }
    verdict(
        agree == 25,
        format!(
            "chain index = Kronecker oracle on {agree}/25 random linear circuits (index 1: {}, index 2: {}) {}",
            histogram[1],
            histogram[2],
            detail.join(" | ")
        ),
    )
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut count = 0;
    for (name, circuit) in all_fixtures() {
        let dae = assemble(&circuit);
        for _ in 0..10 {
            let z = Vector::from_fn(dae.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let t = rng.gen_range(0.0..1.0);
            let exact = dae.jacobian(&z, t).unwrap().f;
            let err = max_relative_error(&exact, &fd_jacobian(&dae, &z, t));
            if err > worst {
                worst = err;
                worst_at = name.clone();
            }
            count += 1;
        }
    }
    verdict(worst <= 1e-6, format!("max relative Jacobian error vs central differences {worst:.2e} over {count} points (worst: {worst_at})"))
}

fn criterion_5() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut chains = 0;
    let mut mismatches = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pencils: Vec<(String, Pencil)> = Vec::new();
    for (name, circuit) in all_fixtures() {
        let report = analyze(&assemble(&circuit), None, &options()).unwrap();
        pencils.push((name, report.pencil));
    }
    for k in 0..25 {
        let dae = assemble(&random_linear_circuit(&mut rng, 9));
        let jac = dae.jacobian(&Vector::zeros(dae.dim()), 0.0).unwrap();
        pencils.push((format!("random {k}"), Pencil::new(dae.e_matrix(), jac.f)));
    }
    for (name, pencil) in &pencils {
        let orthogonal = tractability_chain(pencil, DEFAULT_RANK_TOL, ProjectorKind::Orthogonal);
        worst = worst.max(orthogonal.residuals.max());
        chains += 1;
        for seed in [11, 12, 13] {
            let oblique =
                tractability_chain(pencil, DEFAULT_RANK_TOL, ProjectorKind::Oblique(seed));
            worst = worst.max(oblique.residuals.max());
            chains += 1;
            if oblique.index != orthogonal.index {
                mismatches.push(format!(
                    "{name} (seed {seed}): {} vs {}",
                    orthogonal.index, oblique.index
                ));
            }
        }
    }
    verdict(
        worst <= 1e-10 && mismatches.is_empty(),
        format!(
            "max projector residual {worst:.2e} over {chains} chains; orthogonal/oblique verdicts agree on {}/{} pencils {}",
            pencils.len() - mismatches.len().min(pencils.len()),
            pencils.len(),
            mismatches.join(" | ")
        ),
    )
}

fn gc_error(h: f64) -> f64 {
    let dae = assemble(&fixture("rc.ckt"));
    let config = SolverConfig {
        h,
        ..Default::default()
    };
    let trace = simulate(&dae, &dae.initial_dynamic(), 0.0, 1.0, &config).unwrap();
    let e = trace.column("e(1)").unwrap();
    (e.last().unwrap() - (-1.0f64).exp()).abs()
}

fn criterion_6() -> Verdict {
    let e2 = gc_error(1e-2);
    let e3 = gc_error(1e-3);
    let ratio = e2 / e3;
    verdict(
        e3 <= 1e-3 && (8.0..=12.0).contains(&ratio),
        format!("|e(1) - exp(-1)| = {e3:.3e} at h=1e-3; error ratio h=1e-2/h=1e-3 = {ratio:.3}"),
    )
}

/// Runs both circuits with identical stepping and returns the largest
/// deviation over each pair of labels.
fn max_deviation(a: &str, b: &str, pairs: &[(&str, &str)], h: f64, t_stop: f64) -> Vec<f64> {
    let run = |name: &str, labels: Vec<&str>| -> Vec<Vec<f64>> {
        let dae = assemble(&fixture(name));
        let idx: Vec<usize> = labels
            .iter()
            .map(|l| {
                dae.layout()
                    .index_of(l)
                    .unwrap_or_else(|| panic!("{name}: {l}"))
            })
            .collect();
        let mut cols = vec![Vec::new(); idx.len()];
        let config = SolverConfig {
            h,
            ..Default::default()
        };
        simulate_observed(
            &dae,
            &dae.initial_dynamic(),
            0.0,
            t_stop,
            &config,
            |_, z| {
                for (col, &k) in cols.iter_mut().zip(&idx) {
                    col.push(z[k]);
                }
            },
        )
        .unwrap();
        cols
    };
    let (left, right) = std::thread::scope(|s| {
        let l = s.spawn(|| run(a, pairs.iter().map(|p| p.0).collect()));
        let r = s.spawn(|| run(b, pairs.iter().map(|p| p.1).collect()));
        (l.join().unwrap(), r.join().unwrap())
    });
    left.iter()
        .zip(&right)
        .map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter()
                .zip(y)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

const EQUIVALENCE_STEP: f64 = 1e-5;

fn criterion_7() -> Verdict {
    let dev = max_deviation(
        "josephson_a.ckt",
        "josephson_b.ckt",
        &[("e(1)", "e(1)")],
        EQUIVALENCE_STEP,
        10.0,
    )[0];
    verdict(dev <= 1e-6, format!("Josephson four-element vs memcapacitor form: max |dv| = {dev:.3e} over [0, 10] at h = {EQUIVALENCE_STEP:e}"))
}

fn criterion_8() -> Verdict {
    let series = max_deviation(
        "chua_series_pair.ckt",
        "hybrid_series.ckt",
        &[("i(V1)", "i(V1)"), ("e(1)", "e(1)"), ("q(MQ1)", "q(HM1)")],
        EQUIVALENCE_STEP,
        10.0,
    );
    let parallel = max_deviation(
        "chua_parallel_pair.ckt",
        "hybrid_parallel.ckt",
        &[("e(1)", "e(1)"), ("phi(MW1)", "phi(HW1)")],
        EQUIVALENCE_STEP,
        10.0,
    );
    let s = series.iter().copied().fold(0.0, f64::max);
    let p = parallel.iter().copied().fold(0.0, f64::max);
    verdict(
        s <= 1e-6 && p <= 1e-6,
        format!("series pair vs hybrid_series max dev {s:.3e}; parallel pair vs hybrid_parallel max dev {p:.3e} (h = {EQUIVALENCE_STEP:e})"),
    )
}

fn is_memristive(class: DeviceClass) -> bool {
    !class.state_vars().is_empty()
        && !matches!(class, DeviceClass::Capacitor | DeviceClass::Inductor)
}

fn criterion_9() -> Verdict {
    let config = SolverConfig::default();
    let bound = 10.0 * config.newton_tol;
    let mut worst: f64 = 0.0;
    let mut worst_chua: f64 = 0.0;
    let mut simulated = 0;
    for name in NONDEGENERATE {
        let circuit = fixture(name);
        let memristive: Vec<usize> = (0..circuit.branches().len())
            .filter(|&j| is_memristive(circuit.branches()[j].device.class))
            .collect();
        if memristive.is_empty() {
            continue;
        }
        let dae = assemble(&circuit);
        let chua: Vec<usize> = memristive
            .iter()
            .copied()
            .filter(|&j| circuit.branches()[j].device.class == DeviceClass::QMemristor)
            .collect();
        simulated += 1;
        simulate_observed(&dae, &dae.initial_dynamic(), 0.0, 10.0, &config, |_, z| {
            for &j in &memristive {
                worst = worst.max(dae.characteristic_residual(z, j).unwrap().unwrap().abs());
            }
            // builtin chua_m: v = φ'(q)·i with φ(q) = q + q³/3
            for &j in &chua {
                let p = dae.branch_point(z, j);
                worst_chua = worst_chua.max((p.v - (1.0 + p.q * p.q) * p.i).abs());
            }
        })
        .unwrap();
    }
    verdict(
        worst <= bound && worst_chua <= bound,
        format!("max constitutive residual {worst:.2e}, Chua v - M(q) i {worst_chua:.2e} (bound {bound:e}) over {simulated} memristive fixtures"),
    )
}

fn criterion_10() -> Verdict {
    let mut ok = 0;
    let mut total = 0;
    let mut detail = Vec::new();
    for name in NONDEGENERATE {
        let dae: SemiExplicitDAE = assemble(&fixture(name));
        let report = analyze(&dae, None, &options()).unwrap();
        if !report.index_one {
            continue;
        }
        total += 1;
        let jac = dae.jacobian(&report.point, 0.0).unwrap();
        let dof = dae.dynamic_degrees_of_freedom(&jac, DEFAULT_RANK_TOL);
        let orders = dae.state_order_sum();
        if dof == orders {
            ok += 1;
        } else {
            detail.push(format!("{name}: dof {dof} vs state orders {orders}"));
        }
    }
    verdict(ok == total && total > 0, format!("dynamic degrees of freedom = sum of state orders on {ok}/{total} index-one fixtures {}", detail.join(" | ")))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    // sanity: fixtures used above are well-posed
    for name in NONDEGENERATE.iter().chain(DEGENERATE.iter()) {
        degeneracy_report(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let criteria: [Criterion; 10] = [
        ("index one <=> nondegenerate", criterion_1),
        ("degenerate => index two", criterion_2),
        ("oracle equivalence", criterion_3),
        ("Jacobian exactness", criterion_4),
        ("projector algebra", criterion_5),
        ("analytic integration", criterion_6),
        ("Josephson equivalence", criterion_7),
        ("Chua hybrid equivalence", criterion_8),
        ("constitutive consistency", criterion_9),
        ("state-order accounting", criterion_10),
    ];
    let mut failed = 0;
    for (k, (title, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} [{tag}] {title}: {} ({:.2} s)",
            k + 1,
            v.detail.trim_end(),
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
