//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero when a
//! gating criterion fails or a known failure no longer fails for its documented reason.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use invmetrics::bergman::{bergman_metric_at, build_kernel, default_budget, interior_estimate_probe, BergmanMetric, KernelModel};
use invmetrics::compare::{self, SamplePlan};
use invmetrics::einstein::{
    apriori_monitor, continuity_path, einstein_defect_via_geometry, ma_newton_solve, ricci_flow_run, NewtonOptions,
    PathOptions, RadialProfile, Reference,
};
use invmetrics::geometry::fields::BallHyperbolic;
use invmetrics::geometry::norm_sq;
use invmetrics::kobayashi::{decreasing_property_check, kr_exact_ball, kr_lower_schwarz, kr_upper, DiskSearch};
use invmetrics::{ComplexPoint, DomainSpec, TangentVector, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
    /// For known failures: the measured failure matches its documented cause.
    explained: bool,
}

impl Outcome {
    fn check(passed: bool, detail: String) -> Self {
        Self { passed, detail, explained: false }
    }
}

enum Gate {
    Hard,
    KnownFailure,
    Informational,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn point(z: &[C64]) -> ComplexPoint {
    ComplexPoint::new(z.to_vec()).unwrap()
}

fn random_in_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..n).map(|_| c(2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0)).collect();
        let s: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if s < 1.0 {
            return v.into_iter().map(|z| z * radius).collect();
        }
    }
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..n).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        if v.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-4 {
            return v;
        }
    }
}

fn disk_model(degree: usize) -> KernelModel {
    let d = DomainSpec::unit_disk();
    build_kernel(&d, degree, default_budget(&d, degree), 1).unwrap()
}

fn bergman_disk_closed_form() -> Outcome {
    let started = Instant::now();
    let model = disk_model(40);
    let mut worst = 0.0f64;
    for i in 0..=14 {
        let r = 0.05 * i as f64;
        for k in 0..8 {
            let z = C64::from_polar(r, 2.0 * PI * k as f64 / 8.0 + 0.3);
            let g = bergman_metric_at(&model, &point(&[z])).unwrap()[(0, 0)].re;
            let exact = 2.0 / (1.0 - r * r).powi(2);
            worst = worst.max((g / exact - 1.0).abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Outcome::check(worst < 1e-5 && secs < 5.0, format!("max rel err {worst:.2e} for |z| <= 0.7, {secs:.2} s"))
}

fn punctured_disk_identity() -> Outcome {
    let pd_domain = DomainSpec::PuncturedDisk;
    let pd = build_kernel(&pd_domain, 40, default_budget(&pd_domain, 40), 1).unwrap();
    let dk = disk_model(40);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let z = point(&random_in_ball(&mut rng, 1, 0.9));
        let w = point(&random_in_ball(&mut rng, 1, 0.9));
        for (a, b) in [(&z, &z), (&z, &w)] {
            let x = pd.kernel_at(a, b).unwrap();
            let y = dk.kernel_at(a, b).unwrap();
            worst = worst.max((x - y).norm() / y.norm());
        }
    }
    let metrics = ["bergman", "poincare"].map(|m| compare::build_metric(&m.parse().unwrap(), &pd_domain, 1).unwrap());
    let mut plan = SamplePlan::new(24, 1);
    plan.min_radius = 1e-3;
    let samples = compare::comparison_samples(&pd_domain, &plan).unwrap();
    let smallest = samples.iter().map(|v| v.base.norm()).fold(f64::INFINITY, f64::min);
    let report = compare::compare(&pd_domain, &metrics, &samples, 1).unwrap();
    let sup = report.pair("bergman", "poincare").unwrap().sup_ratio;
    Outcome::check(
        worst < 1e-6 && sup > 1e3 && smallest <= 1e-3 * (1.0 + 1e-9),
        format!("kernel rel diff {worst:.2e}; sup g_P/g_B = {sup:.4e} with samples down to |z| = {smallest:.1e}"),
    )
}

fn kobayashi_ball_oracle() -> Outcome {
    let started = Instant::now();
    let search = DiskSearch::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let n = 1 + i % 2;
        let d = DomainSpec::ball(1.0, n).unwrap();
        let a = point(&random_in_ball(&mut rng, n, 1.0));
        let v = TangentVector::new(a.clone(), random_direction(&mut rng, n)).unwrap();
        let exact = kr_exact_ball(1.0, &a, &v).unwrap();
        let upper = kr_upper(&d, &a, &v, &search).unwrap().value;
        worst = worst.max((upper / exact - 1.0).abs());
    }
    let mut worst_centre = 0.0f64;
    for (n, r) in [(1, 1.0), (2, 1.0), (1, 0.5), (2, 2.0)] {
        let d = DomainSpec::ball(r, n).unwrap();
        let o = ComplexPoint::origin(n);
        let v = TangentVector::new(o.clone(), random_direction(&mut rng, n)).unwrap();
        let upper = kr_upper(&d, &o, &v, &search).unwrap().value;
        worst_centre = worst_centre.max((upper / (v.euclidean_norm() / r) - 1.0).abs());
    }
    let secs = started.elapsed().as_secs_f64();
    Outcome::check(
        worst < 1e-2 && worst_centre < 5e-3 && secs < 60.0,
        format!("50 points: max rel err {worst:.2e}; centre: {worst_centre:.2e}; {secs:.1} s"),
    )
}

fn schwarz_equality() -> Outcome {
    let poincare = BallHyperbolic::poincare_disk();
    let disk = DomainSpec::unit_disk();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let probes: Vec<ComplexPoint> = (0..16).map(|_| point(&random_in_ball(&mut rng, 1, 0.95))).collect();
    let search = DiskSearch::default();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x = point(&random_in_ball(&mut rng, 1, 0.9));
        let v = TangentVector::new(x.clone(), random_direction(&mut rng, 1)).unwrap();
        let lower = kr_lower_schwarz(&poincare, &v, &probes).unwrap().value;
        let upper = kr_upper(&disk, &x, &v, &search).unwrap().value;
        worst = worst.max((lower / upper - 1.0).abs());
    }
    Outcome::check(worst < 1e-2, format!("max |lower/upper - 1| = {worst:.2e} at 20 samples"))
}

fn decreasing_property() -> Outcome {
    let suites = [
        (DomainSpec::ball(0.6, 2).unwrap(), DomainSpec::ball(1.0, 2).unwrap()),
        (DomainSpec::ball(0.5, 1).unwrap(), DomainSpec::unit_disk()),
        (DomainSpec::PuncturedDisk, DomainSpec::unit_disk()),
    ];
    let search = DiskSearch { restarts: 4, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut details = Vec::new();
    let mut total = 0;
    for (inner, outer) in &suites {
        let n = inner.dim();
        let radius = match inner {
            DomainSpec::Ball { radius, .. } => 0.9 * radius,
            _ => 0.9,
        };
        let samples: Vec<TangentVector> = (0..8)
            .map(|_| {
                let mut z = random_in_ball(&mut rng, n, radius);
                if z[0].norm() < 0.05 {
                    z[0] += 0.1;
                }
                TangentVector::new(point(&z), random_direction(&mut rng, n)).unwrap()
            })
            .collect();
        let rep = decreasing_property_check(inner, outer, &samples, &search).unwrap();
        total += rep.violations.len();
        details.push(format!("{inner} in {outer}: {} violations", rep.violations.len()));
    }
    Outcome::check(total == 0, details.join("; "))
}

fn ke_fixed_point() -> Outcome {
    let p = RadialProfile::poincare(129).unwrap();
    let opts = PathOptions::default();
    let from_p = continuity_path(&p, &opts).unwrap();
    let from_2p = continuity_path(&p.scaled(2.0).unwrap(), &opts).unwrap();
    let defect_geo = einstein_defect_via_geometry(&from_p.kahler_einstein).unwrap();
    let dev_p = from_p.kahler_einstein.max_ratio_deviation(&p);
    let dev_2p = from_2p.kahler_einstein.max_ratio_deviation(&from_p.kahler_einstein);
    Outcome::check(
        from_p.einstein_defect < 1e-6 && defect_geo < 1e-6 && dev_p < 1e-6 && dev_2p < 1e-6 && from_2p.einstein_defect < 1e-6,
        format!(
            "residual {:.1e} (grid) / {defect_geo:.1e} (curvature route); |g_KE/g_P - 1| = {dev_p:.1e}; from 2P: {dev_2p:.1e}",
            from_p.einstein_defect
        ),
    )
}

fn apriori_trace_bound() -> Outcome {
    let nodes = 129;
    let p = RadialProfile::poincare(nodes).unwrap();
    let family = [
        ("P", p.clone()),
        ("2P", p.scaled(2.0).unwrap()),
        ("P/2", p.scaled(0.5).unwrap()),
        ("P(1+0.1(1-s))", RadialProfile::from_fn(Reference::poincare(), nodes, 1.0, |s| (1.0 + 0.1 * (1.0 - s)).ln()).unwrap()),
        ("P(1-0.05(1-s))", RadialProfile::from_fn(Reference::poincare(), nodes, 1.0, |s| (1.0 - 0.05 * (1.0 - s)).ln()).unwrap()),
    ];
    let mut worst = f64::NEG_INFINITY;
    let mut states = 0;
    for (_, omega) in &family {
        let kappa1 = omega.curvature_pinching().0;
        let path = continuity_path(omega, &PathOptions::default()).unwrap();
        for s in &path.states {
            let r = apriori_monitor(s, omega, kappa1).unwrap();
            worst = worst.max(r.sup_trace / r.trace_bound - 1.0);
            states += 1;
        }
    }
    let kappa1 = p.curvature_pinching().0;
    let sharp = ma_newton_solve(&p, 0.0, &vec![0.0; p.len()], &NewtonOptions::default()).unwrap();
    let r = apriori_monitor(&sharp, &p, kappa1).unwrap();
    let sharp_gap = (r.sup_trace / r.trace_bound - 1.0).abs();
    Outcome::check(
        worst <= 1e-6 && sharp_gap <= 1e-6,
        format!("{states} states, max S/bound - 1 = {worst:.2e}; sharp case |S/bound - 1| = {sharp_gap:.2e}"),
    )
}

/// Max relative error of `g(t)/g₀` at `t_max` against `target(t_max)`.
fn flow_error(dt: f64, target: impl Fn(f64) -> f64) -> f64 {
    let g0 = RadialProfile::poincare(33).unwrap();
    let run = ricci_flow_run(&g0, 0.1, dt).unwrap();
    let t = run.monitors.last().unwrap().t;
    let want = target(t);
    run.final_profile().values().iter().zip(g0.values()).map(|(w, w0)| ((w - w0).exp() / want - 1.0).abs()).fold(0.0, f64::max)
}

fn ricci_flow_exactness() -> Outcome {
    let exp = |t: f64| (4.0 * t).exp();
    let e1 = flow_error(1e-3, exp);
    let e2 = flow_error(5e-4, exp);
    let passed = e1 < 1e-8 && e1 / e2 >= 8.0;
    let lin = |t: f64| 1.0 + 4.0 * t;
    let l1 = flow_error(1e-3, lin);
    let l2 = flow_error(5e-4, lin);
    Outcome {
        passed,
        detail: format!(
            "vs e^(4t): err {e1:.2e}, halving ratio {:.2}; vs (1+4t): err {l1:.1e} / {l2:.1e}",
            e1 / e2
        ),
        explained: !passed && l1 < 1e-8 && l2 < 1e-8,
    }
}

fn pinching_preservation() -> Outcome {
    let data = |n| RadialProfile::from_fn(Reference::poincare(), n, 1.0, |s| (1.0 - 0.05 * (1.0 - s)).ln()).unwrap();
    let run = ricci_flow_run(&data(33), 0.05, 1e-3).unwrap();
    let reference = ricci_flow_run(&data(65), 0.05, 1e-4).unwrap();
    let in_window = run.monitors.iter().all(|m| (-1.2..=-0.8).contains(&m.h_max));
    let mut fixture_gap = 0.0f64;
    for (k, m) in run.monitors.iter().enumerate() {
        let r = &reference.monitors[10 * k];
        assert!((r.t - m.t).abs() < 1e-12);
        fixture_gap = fixture_gap.max((m.h_max - r.h_max).abs());
    }
    let (lo, hi) = run.pinching_window();
    Outcome::check(in_window && fixture_gap < 1e-3, format!("h(t) in [{lo:.6}, {hi:.6}] for t <= 0.05; fixture gap {fixture_gap:.1e}"))
}

fn interior_kernel_slopes() -> Outcome {
    let family: Vec<KernelModel> = [1.0, 0.5, 0.25, 0.125]
        .iter()
        .map(|&r| {
            let d = DomainSpec::ball(r, 1).unwrap();
            build_kernel(&d, 10, default_budget(&d, 10), 0).unwrap()
        })
        .collect();
    let e = [ComplexPoint::origin(1)];
    let s0 = interior_estimate_probe(&family, &[0], &[0], &e).unwrap().slope.unwrap();
    let s1 = interior_estimate_probe(&family, &[1], &[1], &e).unwrap().slope.unwrap();
    Outcome::check((s0 - 2.0).abs() < 0.05 && (s1 - 4.0).abs() < 0.05, format!("slopes {s0:.6} (want 2), {s1:.6} (want 4)"))
}

fn equivalence_table() -> Outcome {
    let disk = DomainSpec::unit_disk();
    let specs = compare::parse_metric_list("poincare,bergman(degree=40),kahler_einstein,kobayashi").unwrap();
    let metrics: Vec<_> = specs.iter().map(|s| compare::build_metric(s, &disk, 7).unwrap()).collect();
    let samples = compare::comparison_samples(&disk, &SamplePlan::new(16, 7)).unwrap();
    let report = compare::compare(&disk, &metrics, &samples, 7).unwrap();
    let mut hermitian = 0.0f64;
    let mut kobayashi = 0.0f64;
    for p in &report.pairs {
        let dev = (p.inf_ratio - 1.0).abs().max((p.sup_ratio - 1.0).abs());
        if p.first == "kobayashi" || p.second == "kobayashi" {
            kobayashi = kobayashi.max(dev);
        } else {
            hermitian = hermitian.max(dev);
        }
    }
    Outcome::check(
        hermitian <= 1e-4 && kobayashi <= 2e-2 && report.pairs.len() == 6,
        format!("hermitian pairs max |ratio - 1| = {hermitian:.2e}; 2K^2 vs hermitian {kobayashi:.2e}"),
    )
}

fn dfh_demo() -> Outcome {
    let started = Instant::now();
    let d = DomainSpec::DfhOmega;
    let model = build_kernel(&d, 6, 100_000, 12).unwrap();
    let bergman = BergmanMetric::new(model);
    let search = DiskSearch { restarts: 2, ..Default::default() };
    let deltas = [0.5, 0.2, 0.1, 0.05, 0.02];
    let mut lines = Vec::new();
    let mut best = 0.0f64;
    for k in 0..3 {
        let mut ratios = Vec::new();
        for delta in deltas {
            let x = point(&[c(-delta, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
            let dir: Vec<C64> = (0..3).map(|i| c(if i == k { 1.0 } else { 0.0 }, 0.0)).collect();
            let v = TangentVector::new(x.clone(), dir).unwrap();
            let b = norm_sq(&bergman, &v).unwrap();
            let kr = kr_upper(&d, &x, &v, &search).unwrap().value;
            ratios.push(b / (2.0 * kr * kr));
        }
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        best = best.max(hi / lo);
        let r: Vec<String> = ratios.iter().map(|r| format!("{r:.2e}")).collect();
        lines.push(format!("e{}: [{}] x{:.1}", k + 1, r.join(" "), hi / lo));
    }
    Outcome::check(
        best > 5.0,
        format!(
            "|xi|_B^2/(2K^2) at Re z1 = -delta, delta = {deltas:?}: {}; {:.1} s",
            lines.join("; "),
            started.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, Gate, fn() -> Outcome); 12] = [
        (1, "Bergman disk closed form", Gate::Hard, bergman_disk_closed_form),
        (2, "punctured-disk identity", Gate::Hard, punctured_disk_identity),
        (3, "Kobayashi ball oracle", Gate::Hard, kobayashi_ball_oracle),
        (4, "Schwarz equality case", Gate::Hard, schwarz_equality),
        (5, "decreasing property", Gate::Hard, decreasing_property),
        (6, "Kahler-Einstein fixed point", Gate::Hard, ke_fixed_point),
        (7, "a priori trace bound", Gate::Hard, apriori_trace_bound),
        (8, "Ricci-flow exactness (e^{4t})", Gate::KnownFailure, ricci_flow_exactness),
        (9, "pinching preservation", Gate::Hard, pinching_preservation),
        (10, "interior kernel estimates", Gate::Hard, interior_kernel_slopes),
        (11, "equivalence table", Gate::Hard, equivalence_table),
        (12, "DFH demo", Gate::Informational, dfh_demo),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut gate_failed = false;
    for (id, name, gate, run) in criteria {
        let label = format!("criterion {id:>2} {name}");
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                Outcome::check(false, format!("panicked: {}", msg.unwrap_or_default()))
            });
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        let note = match gate {
            Gate::Hard => "",
            Gate::KnownFailure if outcome.passed => " [known failure now passes]",
            Gate::KnownFailure if outcome.explained => " [known failure, documented cause confirmed]",
            Gate::KnownFailure => " [known failure, cause NOT confirmed]",
            Gate::Informational => " [informational]",
        };
        println!("{label}: {verdict}{note} ({}) [{:.1} s]", outcome.detail, started.elapsed().as_secs_f64());
        gate_failed |= match gate {
            Gate::Hard => !outcome.passed,
            Gate::KnownFailure => !outcome.passed && !outcome.explained,
            Gate::Informational => false,
        };
    }
    if gate_failed {
        std::process::exit(1);
    }
}
