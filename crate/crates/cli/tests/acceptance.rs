//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,4` restricts the run to the listed criteria.
//! Criteria listed in `KNOWN_RED` print FAIL without failing the process;
//! each has a written explanation in the README.

use std::time::{Duration, Instant};

use fkplab::ainfty::theorem_sweep;
use fkplab::fkp::{h1, h2, identity_residual};
use fkplab::heat::{good_doubling_heat_check, psi_over_u_sup, thin_approx_ratio};
use fkplab::weight::{annulus_modulus, certified_good_doubling, good_doubling_deficit, GoodDoublingSampling};
use fkplab::{
    ainfty_constant, carleson_norm, BallQuery, BoxConfig, CarlesonBox, FkpConfig, HeatConfig, Region, Sampling, ScaleRange,
    Smoothing, Tolerance, WeightSpec,
};
use fkplab_dkp::experiment::{experiment_row, ratio_range, ExperimentConfig};
use fkplab_dkp::dkp_experiment;

/// The centred closed form is not the supremum over all balls; see README.
const KNOWN_RED: &[usize] = &[3];

struct Verdict {
    passed: bool,
    detail: String,
}

fn lattice(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

fn boxes(family: &[BallQuery]) -> Vec<CarlesonBox> {
    family.iter().map(|q| CarlesonBox::new(*q)).collect()
}

fn identity_grid() -> Verdict {
    let cfg = FkpConfig::default();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (name, w) in [("x^2", WeightSpec::power(1, 2.0).unwrap()), ("|x|^0.2", WeightSpec::power(1, 0.2).unwrap())] {
        for &x in &lattice(0.5, 2.0, 3) {
            for &r in &lattice(0.25, 1.0, 3) {
                let rep = identity_residual(&w, &BallQuery::d1(x, r).unwrap(), &cfg).unwrap();
                let budget = (1e-2 * rep.lhs.abs()).max(1e-4);
                ok &= rep.residual <= budget;
                worst = worst.max(rep.residual / budget);
                if rep.residual > budget {
                    eprintln!("  {name} at ({x}, {r}): residual {:e} > {budget:e}", rep.residual);
                }
            }
        }
    }
    Verdict {
        passed: ok,
        detail: format!("18 points, worst residual/budget = {worst:.2e}"),
    }
}

fn exact_zeros() -> Verdict {
    let family = Sampling::new(5, 4).balls(1, &Region::interval(-2.0, 2.0), &ScaleRange::new(0.25, 2.0).unwrap());
    let cfg = FkpConfig::default();
    let mut worst: f64 = 0.0;
    for c in [1.0, 3.7] {
        let w = WeightSpec::constant(1, c).unwrap();
        worst = worst.max(carleson_norm(&w, Smoothing::Gauss, &boxes(&family), &cfg.boxes).unwrap().value);
        worst = worst.max(ainfty_constant(&w, &family, cfg.mean_tol).unwrap().value - 1.0);
        for q in &family {
            worst = worst.max(h1(&w, q, &cfg).unwrap().0.abs());
            worst = worst.max(h2(&w, q, &cfg).unwrap().0.abs());
        }
    }
    Verdict {
        passed: worst <= 1e-12,
        detail: format!("max |norm|, |h1|, |h2|, [w]-1 = {worst:e}"),
    }
}

fn power_ainfty() -> Verdict {
    let tol = Tolerance::new(1e-14, 1e-12);
    // By scaling, unit balls with centres across [-1, 1] cover every ball
    // containing the origin.
    let sweep: Vec<BallQuery> = lattice(-1.0, 1.0, 2001).iter().map(|&c| BallQuery::d1(c, 1.0).unwrap()).collect();
    let centred = [BallQuery::d1(0.0, 1.0).unwrap()];
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [0.25, 0.5, 1.0] {
        let w = WeightSpec::power(1, a).unwrap();
        let want = a.exp() / (1.0 + a);
        let sup = ainfty_constant(&w, &sweep, tol).unwrap();
        let at_centre = ainfty_constant(&w, &centred, tol).unwrap().value;
        let centred_witness = sup.witness.center.x().abs() < 1e-9;
        ok &= (sup.value - want).abs() <= 1e-3 && centred_witness;
        parts.push(format!(
            "a={a}: sup {:.6} at centre {:+.3} vs e^a/(1+a) {want:.6} (centred ball {at_centre:.6})",
            sup.value,
            sup.witness.center.x()
        ));
    }
    Verdict {
        passed: ok,
        detail: parts.join("; "),
    }
}

fn power_sweep() -> Verdict {
    let family = Sampling::new(5, 3).balls(1, &Region::interval(-1.0, 1.0), &ScaleRange::new(0.25, 1.0).unwrap());
    let rows: Vec<(f64, WeightSpec)> = [0.4, 0.2, 0.1, 0.05].iter().map(|&t| (t, WeightSpec::power(1, t).unwrap())).collect();
    let out = theorem_sweep(&rows, &family, &FkpConfig::default()).unwrap();
    let decreasing = out
        .windows(2)
        .all(|p| p[1].carleson_norm < p[0].carleson_norm && p[1].ainfty_minus_1 < p[0].ainfty_minus_1);
    let bound = out.iter().all(|r| r.log_bound_holds && !r.carleson_flagged);
    let table: Vec<String> = out
        .iter()
        .map(|r| format!("t={} |mu|={:.4e} [w]-1={:.4e} E={:.4e}", r.t, r.carleson_norm, r.ainfty_minus_1, r.error_term))
        .collect();
    Verdict {
        passed: decreasing && bound,
        detail: format!("decreasing={decreasing} log-bound={bound}; {}", table.join("; ")),
    }
}

fn lemma_suite() -> Verdict {
    let hc = HeatConfig::default();
    let tol = Tolerance::default();
    let family = Sampling::new(5, 3).balls(1, &Region::interval(-1.0, 1.0), &ScaleRange::new(0.25, 1.0).unwrap());

    // Thin approximation: 1 <= (bump ∗ w)/(indicator ∗ w) <= annulus modulus.
    let eta = 0.1;
    let mut sandwich = true;
    for w in [WeightSpec::power(1, 1.0).unwrap(), WeightSpec::power(1, 2.0).unwrap(), WeightSpec::plateau(1, 0.1).unwrap()] {
        let range = thin_approx_ratio(&w, eta, &family, &hc).unwrap();
        let modulus = annulus_modulus(&w, 1.0 + eta, &family, tol).unwrap().value;
        sandwich &= range.min >= 1.0 - 1e-12 && range.max <= modulus * (1.0 + 1e-12);
    }

    // Near-constant family 1 + eps·bump.
    let centres = Region::interval(-1.0, 1.0).lattice(1, 5);
    let radii = ScaleRange::new(0.25, 4.0).unwrap().log_spaced(5);
    let candidates = [2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
    let mut heat_bound = true;
    let mut rows = Vec::new();
    for eps in [0.2, 0.1, 0.05, 0.02] {
        let w = WeightSpec::plateau(1, eps).unwrap();
        // All averages of a weight with values in [1, 1 + eps] lie in that range.
        let heat = good_doubling_heat_check(&w, &family, &hc).unwrap().value;
        heat_bound &= heat <= (1.0 + eps).ln();
        let m = certified_good_doubling(&w, &candidates, &centres, &radii, GoodDoublingSampling::default(), tol)
            .unwrap()
            .map_or(1.0, |r| r.m);
        let grad = psi_over_u_sup(&w, &family, &hc).unwrap().value;
        rows.push((eps, m, heat, grad));
    }
    // Heat ratio and gradient ratio both shrink as the certified M grows.
    let decay = rows.windows(2).all(|p| p[1].1 >= p[0].1 && p[1].2 < p[0].2 && p[1].3 < p[0].3) && rows[0].1 < rows[rows.len() - 1].1;
    let table: Vec<String> = rows
        .iter()
        .map(|(e, m, h, g)| format!("eps={e} M={m} heat={h:.3e} r|grad u|/u={g:.3e}"))
        .collect();
    Verdict {
        passed: sandwich && heat_bound && decay,
        detail: format!("sandwich={sandwich} heat-bound={heat_bound} decay={decay}; {}", table.join("; ")),
    }
}

fn kernel_change() -> Verdict {
    let family = Sampling::new(3, 3).balls(1, &Region::interval(-1.0, 1.0), &ScaleRange::new(0.25, 1.0).unwrap());
    // A ratio bracket needs a few digits, not the default box accuracy.
    let cfg = BoxConfig {
        s_rel_tol: 1e-5,
        x_rel_tol: 1e-6,
        heat: HeatConfig {
            rel_tol: 1e-8,
            ..HeatConfig::default()
        },
        ..BoxConfig::default()
    };
    let suite = [
        ("x^2", WeightSpec::power(1, 2.0).unwrap()),
        ("|x|", WeightSpec::power(1, 1.0).unwrap()),
        ("|x|^0.5", WeightSpec::power(1, 0.5).unwrap()),
        ("|x|^0.2", WeightSpec::power(1, 0.2).unwrap()),
        ("|x|^0.5(1+x^2)", WeightSpec::poly_power(1, 0.5, 1.0).unwrap()),
        ("1+0.2 bump", WeightSpec::plateau(1, 0.2).unwrap()),
        ("1+0.05 bump", WeightSpec::plateau(1, 0.05).unwrap()),
    ];
    let mut ratios = Vec::new();
    let mut clean = true;
    for (name, w) in &suite {
        let g = carleson_norm(w, Smoothing::Gauss, &boxes(&family), &cfg).unwrap();
        let b = carleson_norm(w, Smoothing::ReferenceBump, &boxes(&family), &cfg).unwrap();
        clean &= !g.is_flagged() && !b.is_flagged() && g.value > 0.0;
        ratios.push((name, b.value / g.value));
    }
    let lo = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let c = hi.max(1.0 / lo);
    let table: Vec<String> = ratios.iter().map(|(n, r)| format!("{n}: {r:.4}")).collect();
    Verdict {
        passed: clean && c.is_finite() && c < 10.0,
        detail: format!("C = {c:.4} (ratios in [{lo:.4}, {hi:.4}]); {}", table.join("; ")),
    }
}

fn dkp_pipeline() -> Verdict {
    let cfg = ExperimentConfig::default();
    let (identity, density) = experiment_row(0.0, &cfg.field(0.0).unwrap(), &cfg).unwrap();
    let interior = 2.0 * cfg.grid.half_width / 3.0;
    let (_, d) = density.window(interior);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let flat = d.iter().map(|v| (v / mean - 1.0).abs()).fold(0.0, f64::max);
    let identity_ok = flat <= 0.01 && identity.ainfty <= 1.02;

    let rows = dkp_experiment(&cfg).unwrap();
    let mono = rows.windows(2).all(|p| {
        p[1].nu_norm < p[0].nu_norm && p[1].mu_tilde_norm < p[0].mu_tilde_norm && p[1].ainfty - 1.0 < p[0].ainfty - 1.0
    });
    let (lo, hi) = ratio_range(&rows).unwrap_or((f64::NAN, f64::NAN));
    let bounded = lo > 0.0 && hi / lo < 2.0;
    let flagged = rows.iter().any(|r| r.is_flagged());
    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "eps={} nu={:.4e} mu~={:.4e} [w]-1={:.4e} ratio={:.4}",
                r.eps,
                r.nu_norm,
                r.mu_tilde_norm,
                r.ainfty - 1.0,
                r.ratio.unwrap_or(f64::NAN)
            )
        })
        .collect();
    Verdict {
        passed: identity_ok && mono && bounded && !flagged,
        detail: format!(
            "A=I: density spread {flat:.2e}, [w] = {:.6}; monotone={mono}; ratio in [{lo:.4}, {hi:.4}]; flagged={flagged}; {}",
            identity.ainfty,
            table.join("; ")
        ),
    }
}

fn good_doubling_from_ainfty() -> Verdict {
    let tol = Tolerance::default();
    let family = Sampling::new(9, 5).balls(1, &Region::interval(-1.5, 1.5), &ScaleRange::new(0.1, 4.0).unwrap());
    let centres = Region::interval(-1.0, 1.0).lattice(1, 5);
    let radii = ScaleRange::new(0.25, 4.0).unwrap().log_spaced(5);
    let mut tested = 0;
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [0.1, 0.05, 0.02] {
        let w = WeightSpec::plateau(1, eps).unwrap();
        let a = ainfty_constant(&w, &family, tol).unwrap().value;
        if a > 1.01 {
            parts.push(format!("eps={eps}: [w]={a:.6} (above 1.01, skipped)"));
            continue;
        }
        tested += 1;
        let rep = good_doubling_deficit(&w, 10.0, &centres, &radii, GoodDoublingSampling::default(), tol).unwrap();
        ok &= rep.certified;
        parts.push(format!(
            "eps={eps}: [w]={a:.6} deficit {:.3e} vs log(1.1) {:.3e}",
            rep.deficit, rep.threshold
        ));
    }
    Verdict {
        passed: ok && tested > 0,
        detail: parts.join("; "),
    }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    type Check = fn() -> Verdict;
    let criteria: [(usize, &str, Duration, Check); 8] = [
        (1, "heat-flow identity on x^2 and |x|^0.2", Duration::from_secs(120), identity_grid),
        (2, "exact zeros for constant weights", Duration::from_secs(60), exact_zeros),
        (3, "A-infinity constant of |x|^a equals e^a/(1+a)", Duration::from_secs(60), power_ainfty),
        (4, "power-family sweep trends and log bound", Duration::from_secs(600), power_sweep),
        (5, "lemma suite (thin approximation, heat ratio, gradient decay)", Duration::from_secs(300), lemma_suite),
        (6, "kernel-change comparability", Duration::from_secs(300), kernel_change),
        (7, "DKP pipeline at 256x256", Duration::from_secs(900), dkp_pipeline),
        (8, "A-infinity near 1 certifies M = 10", Duration::from_secs(120), good_doubling_from_ainfty),
    ];
    let mut unexpected = 0;
    for (id, name, limit, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let passed = v.passed && elapsed <= limit;
        let status = if passed { "PASS" } else { "FAIL" };
        let note = if !passed && KNOWN_RED.contains(&id) { " [known red]" } else { "" };
        println!(
            "criterion {id} {status}{note}: {name} ({:.1}s of {}s) | {}",
            elapsed.as_secs_f64(),
            limit.as_secs(),
            v.detail
        );
        if !passed && !KNOWN_RED.contains(&id) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
