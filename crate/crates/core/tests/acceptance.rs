//! Acceptance suite: every criterion runs and prints one PASS/FAIL line with
//! its measured quantities and wall time; the process exits non-zero if any
//! criterion failed. Runs without the libtest harness so the lines are never
//! captured.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use common::{closed_form_cases, segment_cases, v};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rollball::cost::power_cost;
use rollball::geometry::{
    gauss_inverse, outward_normal, polyline_convexity, ray_hit, second_fundamental_form, weingarten_spectrum,
    ImplicitSurface, TangentFrame,
};
use rollball::linalg::{random_in_box, random_tangent, random_unit};
use rollball::mtw::{audit_grid, default_step, draw_samples, mtw_contraction, AuditConfig, Classification};
use rollball::reflector::{
    align_paraboloid_tangency, contact_residuals, reflector_inclusion, sff_consistency_gap, GridSampler, Paraboloid,
};
use rollball::report::{read_polyline_csv, write_polyline_csv};
use rollball::rolling::{
    blaschke_verdict, curvature_dominance_scan, random_convex_curve, theorem2_pipeline, Theorem2Config,
};
use rollball::sublevel::{build_sublevel_psi, trace_level_curve_2d, SublevelSpec};

/// Name, optional time limit in seconds, body.
type Criterion = (&'static str, Option<u64>, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration, bool) {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    (out, elapsed, in_time)
}

fn quadratic_zero_tensor() -> Outcome {
    let model = power_cost(2.0, 2).unwrap();
    let samples = draw_samples(2, &AuditConfig::default(), 1000, 42);
    let max = samples
        .iter()
        .map(|s| mtw_contraction(&model, s, default_step(&s.p_vec)).unwrap().abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: max <= 1e-8,
        detail: format!("max |contraction| = {max:e} over 1000 samples"),
    }
}

fn a3_range() -> Outcome {
    let config = AuditConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (p, want) in [
        (-1.0, Classification::A3Positive),
        (0.5, Classification::A3Positive),
        (-2.0, Classification::WeakA3),
        (2.0, Classification::WeakA3),
    ] {
        let report = audit_grid(&power_cost(p, 2).unwrap(), &config, 1000, 42, 1e-5).unwrap();
        pass &= report.classification == want;
        parts.push(format!(
            "p={p}: {:?} min {:.3e}",
            report.classification, report.min_value
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn formulation_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for (p, seed) in [(-2.0, 3), (-1.0, 4)] {
        for case in segment_cases(p, 50, seed) {
            worst = worst.max(case.relative_gap());
        }
    }
    Outcome {
        pass: worst <= 1e-3,
        detail: format!("max relative gap {worst:.3e} over 2 x 50 samples"),
    }
}

fn closed_form_algebra() -> Outcome {
    let cases = closed_form_cases(500, 17);
    let mut worst_rel: f64 = 0.0;
    let mut sign_ok = true;
    for c in &cases {
        worst_rel = worst_rel.max((c.closed - c.difference).abs() / c.difference.abs());
        sign_ok &= if c.a >= 0.0 {
            c.closed <= 1e-9
        } else {
            c.swapped <= 1e-9 && c.closed >= -1e-9
        };
    }
    Outcome {
        pass: worst_rel <= 1e-6 && sign_ok,
        detail: format!(
            "{} points, max relative gap {worst_rel:.3e}, sign rule {}",
            cases.len(),
            sign_ok
        ),
    }
}

fn example_curves() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for i in 0..3 {
        let start = Instant::now();
        let built = build_sublevel_psi(&SublevelSpec::example_set(i).unwrap()).unwrap();
        let seed = ray_hit(&built.surface, &v(&[1.0, 0.0])).unwrap();
        let curve = trace_level_curve_2d(&built.surface, &seed, 0.01).unwrap();
        let convex = curve.closed && polyline_convexity(&curve).unwrap().is_convex();
        let path = dir.path().join(format!("curve_{i}.csv"));
        write_polyline_csv(&curve, &path).unwrap();
        let back = read_polyline_csv(&path, curve.closed).unwrap();
        let csv_ok = back.len() == curve.len() && polyline_convexity(&back).unwrap().is_convex() == convex;
        let elapsed = start.elapsed();
        pass &= convex && csv_ok && elapsed < Duration::from_secs(5);
        parts.push(format!(
            "set {i}: {} vertices, convex {convex}, csv {csv_ok}, {:.0?}",
            curve.len(),
            elapsed
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn rolling_property_suite() -> Outcome {
    let circle = |r: f64| ImplicitSurface::sphere(v(&[0.0, 0.0]), r).unwrap();
    let mut margin_err: f64 = 0.0;
    for (r1, r2) in [(1.0, 2.0), (2.0, 1.0), (0.5, 0.7), (1.0, 1.0)] {
        let scan = curvature_dominance_scan(&circle(r1), &circle(r2), 64, 1).unwrap();
        margin_err = margin_err.max((scan.margin - (1.0 / r1 - 1.0 / r2)).abs());
    }
    let mut sweep_ok = 0;
    let mut findings = 0;
    for seed in 0..20u64 {
        let curve = random_convex_curve(seed, [0.0, 0.0], 1.0);
        let w = v(&[(seed as f64).cos(), (seed as f64).sin()]);
        let verdict = blaschke_verdict(
            &curve.surface().unwrap(),
            &curve.scaled(1.5).surface().unwrap(),
            &w,
            128,
            256,
            seed,
        )
        .unwrap();
        sweep_ok += (verdict.dominance_holds && verdict.inclusion_holds) as usize;
        findings += verdict.is_forbidden_finding() as usize;
    }
    let mut shapes: Vec<ImplicitSurface> = [0.5, 1.0, 2.0].iter().map(|&r| circle(r)).collect();
    shapes.push(ImplicitSurface::ellipsoid(v(&[0.0, 0.0]), v(&[1.0, 1.5])).unwrap());
    shapes.push(random_convex_curve(77, [0.0, 0.0], 1.2).surface().unwrap());
    for (i, inner) in shapes.iter().enumerate() {
        for (j, outer) in shapes.iter().enumerate() {
            let verdict = blaschke_verdict(inner, outer, &v(&[0.6, -0.8]), 64, 128, (10 * i + j) as u64).unwrap();
            findings += verdict.is_forbidden_finding() as usize;
        }
    }
    Outcome {
        pass: margin_err <= 1e-12 && sweep_ok == 20 && findings == 0,
        detail: format!("circle margin error {margin_err:.1e}, sweep {sweep_ok}/20, findings {findings}"),
    }
}

fn two_focus_pipeline() -> Outcome {
    let spec = SublevelSpec::example_set(0).unwrap();
    let built = build_sublevel_psi(&spec).unwrap();
    let seed = ray_hit(&built.surface, &v(&[1.0, 0.0])).unwrap();
    let curve = trace_level_curve_2d(&built.surface, &seed, 0.005).unwrap();
    let max_k = (0..curve.len())
        .map(|k| weingarten_spectrum(&built.surface, &curve.vertex(k)).unwrap()[0])
        .fold(0.0, f64::max);
    let radius = 0.2;
    let w = v(&[1.0, 0.0]);
    let z0 = gauss_inverse(&built.surface, &w).unwrap();
    let disk = ImplicitSurface::sphere(&z0 - &w * radius, radius).unwrap();
    match theorem2_pipeline(
        spec.model.clone(),
        &disk,
        &spec.y1,
        &spec.y2,
        &w,
        &Theorem2Config::default(),
    ) {
        Ok(out) => Outcome {
            pass: radius < 1.0 / max_k
                && out.gates_passed
                && out.audit_classification != Classification::Violated
                && out.sublevel_min_tangential_hessian >= -1e-9
                && out.sublevel_min_curvature > 0.0
                && out.verdict.dominance_holds
                && out.verdict.inclusion_holds,
            detail: format!(
                "radius {radius} vs min curvature radius {:.3}; audit {:?}; margin {:.3}; max violation {:.2e}",
                1.0 / max_k,
                out.audit_classification,
                out.verdict.dominance_margin,
                out.verdict.max_violation
            ),
        },
        Err(e) => Outcome {
            pass: false,
            detail: format!("pipeline error: {e}"),
        },
    }
}

fn reflector_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut sff_gap: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let mut ordered = 0;
    let pairs = 10;
    for k in 0..pairs {
        let z2: Vec<f64> = random_in_box(&mut rng, 2, 1.0).iter().copied().collect();
        let par2 = Paraboloid::new(1.0 + 0.2 * k as f64, z2, 0.3).unwrap();
        let x_c = random_in_box(&mut rng, 2, 2.0);
        let par1 = align_paraboloid_tangency(par2.sigma * (0.3 + 0.07 * k as f64), &par2, &x_c).unwrap();
        for _ in 0..10 {
            let x = random_in_box(&mut rng, 2, 5.0);
            sff_gap = sff_gap
                .max(sff_consistency_gap(&par1, &x).unwrap())
                .max(sff_consistency_gap(&par2, &x).unwrap());
        }
        let (dv, dg) = contact_residuals(&par1, &par2, &x_c).unwrap();
        let verdict = reflector_inclusion(&par1, &par2, &x_c, &GridSampler::default()).unwrap();
        residual = residual.max(dv).max(dg).max(verdict.normal_factor_residual);
        ordered += (verdict.sigma_dominance && verdict.ordering_holds) as usize;
    }
    Outcome {
        pass: sff_gap <= 1e-6 && residual <= 1e-12 && ordered == pairs,
        detail: format!("form gap {sff_gap:.1e}, contact residual {residual:.1e}, ordered {ordered}/{pairs}"),
    }
}

fn geometry_kernel() -> Outcome {
    let mut surfaces = vec![
        ImplicitSurface::sphere(v(&[0.3, -0.2]), 1.7).unwrap(),
        ImplicitSurface::sphere(v(&[1.0, 1.0, 1.0]), 3.0).unwrap(),
        ImplicitSurface::ellipsoid(v(&[0.0, 0.0]), v(&[2.0, 1.0])).unwrap(),
        ImplicitSurface::ellipsoid(v(&[0.0, 0.5, 0.0]), v(&[1.0, 1.5, 0.7])).unwrap(),
        random_convex_curve(11, [0.1, 0.2], 1.0).surface().unwrap(),
    ];
    for i in 0..3 {
        surfaces.push(
            build_sublevel_psi(&SublevelSpec::example_set(i).unwrap())
                .unwrap()
                .surface,
        );
    }
    let mut round_trip: f64 = 0.0;
    for s in &surfaces {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..100 {
            let w = random_unit(&mut rng, s.dim());
            let x = gauss_inverse(s, &w).unwrap();
            round_trip = round_trip.max((outward_normal(s, &x).unwrap() - w).norm());
        }
    }
    let mut curvature: f64 = 0.0;
    for (r, d) in [(2.0, 2), (0.5, 2), (3.0, 3), (1.3, 4)] {
        let s = ImplicitSurface::sphere(rollball::Vector::zeros(d), r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for k in 0..16 {
            let x = if d == 2 {
                let t = 2.0 * PI * k as f64 / 16.0;
                v(&[r * t.cos(), r * t.sin()])
            } else {
                random_unit(&mut rng, d) * r
            };
            let frame = TangentFrame::at(&s, &x).unwrap();
            let t = random_tangent(&mut rng, &frame.tangents);
            curvature = curvature.max((second_fundamental_form(&s, &frame, &t).unwrap() - 1.0 / r).abs());
            for kappa in weingarten_spectrum(&s, &x).unwrap() {
                curvature = curvature.max((kappa - 1.0 / r).abs());
            }
        }
    }
    Outcome {
        pass: round_trip <= 1e-8 && curvature <= 1e-10,
        detail: format!(
            "Gauss round trip {round_trip:.1e} on {} surfaces, sphere curvature error {curvature:.1e}",
            surfaces.len()
        ),
    }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 quadratic zero tensor", Some(1), quadratic_zero_tensor),
        ("2 A3 range", Some(10), a3_range),
        ("3 formulation equivalence", None, formulation_equivalence),
        ("4 closed-form tangential Hessian", Some(5), closed_form_algebra),
        ("5 example curve reproduction", None, example_curves),
        ("6 rolling-ball property suite", Some(30), rolling_property_suite),
        ("7 two-focus pipeline", Some(30), two_focus_pipeline),
        ("8 reflector suite", Some(5), reflector_suite),
        ("9 geometry kernel", None, geometry_kernel),
    ];
    let mut failed = Vec::new();
    for (name, limit, run) in criteria {
        let (out, elapsed, in_time) = timed(limit.map(Duration::from_secs), run);
        let pass = out.pass && in_time;
        let budget = limit.map(|l| format!(" (limit {l} s)")).unwrap_or_default();
        println!(
            "{} criterion {name}: {} [{:.2?}{budget}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed
        );
        if !pass {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
