//! Acceptance criteria 1-10, one pass/fail line each. Exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use frame_forge::amalgam::{inner, Envelope};
use frame_forge::atoms::{gaussian_bumps, random_signals, random_span_elements, rational_bumps, seeded_rng};
use frame_forge::frame::{
    canonical_dual, decay_fit, pseudo_inverse, pseudo_inverse_contour, relative_frobenius, span_basis,
};
use frame_forge::gabor::{
    certify_gabor, covariance_defect, isometry_defect, prepare_gabor_quilt, quilt_gabor, stft_with, tf_atom, tf_torus,
    GaborDonor, GaussWindow, TfLattice, TfPoint,
};
use frame_forge::grid::{conv_nodes_check, rel_separation, NodeSet, Torus, Weight};
use frame_forge::kn::{
    hs_inner, kn_symbol_rank_one, multiplier_certify, multiplier_recover, rank_one_operator, GaborMultiplier,
    GeneratorPair, MultiplierProblem,
};
use frame_forge::sampling::{kernel_at, kernel_frame_bounds, quilt_sampling, sampling_bounds, SamplingExperiment};
use frame_forge::sis::{direct_verdict, fiber_verdict, translates, LatticePair};
use frame_forge::surgery::{build_partition, certify, error_sweep, exterior_frame_pair, Covering, QuiltedSystem};
use frame_forge::{fourier, CMatrix, CVector, Error, C64};
use rand::Rng;

type Outcome = (bool, String);

fn random_vector(n: usize, rng: &mut impl Rng) -> CVector {
    CVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn integers(t: &Torus) -> NodeSet {
    NodeSet::lattice(t, &[1.0], &[0.0]).unwrap()
}

fn dual_reconstruction() -> Outcome {
    let t = Torus::new(1, 32.0, 512).unwrap();
    let family = gaussian_bumps(&integers(&t), 0.6).with_fitted_envelope(4.0).unwrap();
    let pair = canonical_dual(&family).unwrap();
    let mut rng = seeded_rng(1);
    let worst = random_span_elements(&family, 20, &mut rng)
        .iter()
        .map(|f| (pair.expand(f).unwrap() - f).norm() / f.norm())
        .fold(0.0, f64::max);
    (worst <= 1e-8, format!("worst relative error {worst:.2e} (<= 1e-8)"))
}

fn dual_decay() -> Outcome {
    let t = Torus::new(1, 32.0, 512).unwrap();
    let family = rational_bumps(&integers(&t), 0.4, 4.0).with_fitted_envelope(4.0).unwrap();
    let dual = canonical_dual(&family).unwrap().duals;
    let fit = decay_fit(&dual).unwrap();
    (
        fit.exponent >= 3.5,
        format!("fitted dual exponent {:.3} over {} annuli (>= 3.5)", fit.exponent, fit.annuli),
    )
}

fn contour_pseudo_inverse() -> Outcome {
    let mut rng = seeded_rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=64);
        let rank = rng.random_range(1..=n);
        let lower = rng.random_range(0.5..1.0);
        let upper = rng.random_range(lower + 0.1..8.0);
        let q = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .qr()
            .q();
        let diag = CVector::from_fn(n, |i, _| {
            C64::new(if i < rank { rng.random_range(lower..upper) } else { 0.0 }, 0.0)
        });
        let m = &q * CMatrix::from_diagonal(&diag) * q.adjoint();
        let contour = pseudo_inverse_contour(&m, lower, 64).unwrap();
        worst = worst.max(relative_frobenius(&contour, &pseudo_inverse(&m)));
    }
    (worst <= 1e-6, format!("worst Frobenius discrepancy {worst:.2e} over 20 matrices (<= 1e-6)"))
}

struct SurgeryCase {
    template: QuiltedSystem,
    pou: frame_forge::surgery::PartitionOfUnity,
    basis: CMatrix,
    tests: Vec<CVector>,
}

fn surgery_case() -> SurgeryCase {
    let t = Torus::new(1, 32.0, 512).unwrap();
    let reference = rational_bumps(&integers(&t), 0.5, 5.0);
    let basis = span_basis(&reference).unwrap();
    let donors = [0.25, 0.75]
        .iter()
        .map(|&o| {
            let nodes = NodeSet::lattice(&t, &[1.0], &[o]).unwrap();
            exterior_frame_pair(&rational_bumps(&nodes, 0.5, 5.0).with_fitted_envelope(5.0).unwrap(), &basis).unwrap()
        })
        .collect();
    let covering = Covering::slabs(&t, 0, 2, 0.0).unwrap();
    let pou = build_partition(&covering).unwrap();
    let mut rng = seeded_rng(4);
    SurgeryCase {
        template: QuiltedSystem::new(donors, covering, 0.0).unwrap(),
        pou,
        tests: random_span_elements(&reference, 20, &mut rng),
        basis,
    }
}

const SURGERY_RADII: [f64; 5] = [1.5, 2.5, 3.5, 5.0, 8.0];

fn surgery_rate(case: &SurgeryCase) -> Outcome {
    // Envelope exponent s + alpha = 5 with alpha = 1, d = 1: slope target -(s - d) + 0.5.
    let target = -(4.0 - 1.0) + 0.5;
    let table = error_sweep(&case.template, &case.pou, &SURGERY_RADII, &case.tests, &case.basis, 2.0, &Weight::unit())
        .unwrap();
    let last = table.rows.last().unwrap().worst_rel_error;
    (
        table.fitted_slope <= target && last <= 1e-6,
        format!(
            "interior slope {:.3} (<= {target}), error at r = 8: {last:.2e} (<= 1e-6)",
            table.fitted_slope
        ),
    )
}

fn surgery_certification(case: &SurgeryCase) -> Outcome {
    match certify(&case.template, &case.pou, &SURGERY_RADII, &case.basis).unwrap() {
        Some(c) => (
            c.positive() && c.consistent(),
            format!(
                "r = {}, ||A^r - I|| = {:.3}, sigma_min^2 = {:.3e} >= predicted {:.3e}",
                c.r, c.deviation, c.lower_bound, c.predicted_lower
            ),
        ),
        None => (false, "no radius with ||A^r - I|| < 1".into()),
    }
}

fn quilted_gabor() -> Outcome {
    let t = Torus::new(1, 16.0, 64).unwrap();
    let w = GaussWindow::new(&t).unwrap();
    let donor = |lattice| GaborDonor {
        lattice,
        window: w.samples().clone(),
        envelope: GaussWindow::tf_envelope(4.0),
    };
    let donors = [
        donor(TfLattice::new(1.0, 0.5)),
        donor(TfLattice::new(1.0, 0.5).with_offset(0.5, 0.25)),
    ];
    let covering = Covering::slabs(&tf_torus(&t).unwrap(), 0, 2, 0.0).unwrap();
    let setup = prepare_gabor_quilt(&donors, &w, covering).unwrap();
    let Some(cert) = certify_gabor(&setup, &[0.5, 1.0, 2.0, 3.0, 4.0]).unwrap() else {
        return (false, "no certified radius".into());
    };
    let (_, rep) = quilt_gabor(&setup, cert.r).unwrap();
    let mut rng = seeded_rng(6);
    let iso = random_signals(64, 20, &mut rng)
        .iter()
        .map(|f| isometry_defect(f, &w).unwrap().abs())
        .fold(0.0, f64::max);
    let g = random_vector(64, &mut rng);
    let cov = donors[1]
        .lattice
        .points(&t)
        .unwrap()
        .into_iter()
        .map(|p| covariance_defect(p, &g, &w).unwrap())
        .fold(0.0, f64::max);
    (
        rep.tf_lower > 0.0 && iso <= 1e-6 && cov <= 1e-10,
        format!(
            "certified r = {}, lower bound {:.3e}; isometry defect {iso:.1e}; covariance defect {cov:.1e}",
            cert.r, rep.tf_lower
        ),
    )
}

fn fiber_criterion() -> Outcome {
    let t = Torus::new(1, 16.0, 256).unwrap();
    let lat = LatticePair::new(&t, &[1.0]).unwrap();
    let profile = |width: f64, bspline: bool| {
        CVector::from_fn(256, |x, _| {
            let u = t.norm(x) / width;
            C64::new(if bspline { frame_forge::atoms::cubic_bspline(u) } else { (-u * u / 2.0).exp() }, 0.0)
        })
    };
    let shift = |g: &CVector, s: i64| CVector::from_fn(256, |x, _| g[t.shift(x, [-s, 0])]);
    let mut rng = seeded_rng(7);
    let mut configs: Vec<Vec<CVector>> = Vec::new();
    for _ in 0..5 {
        configs.push(vec![profile(rng.random_range(0.3..1.2), false)]);
    }
    for _ in 0..3 {
        let g1 = profile(rng.random_range(0.3..0.8), false);
        let g2 = shift(&profile(rng.random_range(0.6..1.0), true), rng.random_range(1..8));
        configs.push(vec![g1, g2]);
    }
    let g = profile(0.8, false);
    // Vanishes on the dual lattice, so the fiber at the origin is singular.
    configs.push(vec![&g - shift(&g, 16)]);
    configs.push(vec![profile(1.0, true)]);
    let mut disagreements = 0;
    let mut singular = 0;
    for gens in &configs {
        let f = fiber_verdict(gens, &lat).unwrap();
        let d = direct_verdict(gens, &lat).unwrap();
        disagreements += usize::from(f.riesz != d.riesz);
        singular += usize::from(!d.riesz);
    }
    (
        disagreements == 0 && singular >= 1,
        format!("{} configurations, {singular} singular, {disagreements} disagreements", configs.len()),
    )
}

fn kn_machinery() -> Outcome {
    let t = Torus::new(1, 16.0, 64).unwrap();
    let mut rng = seeded_rng(8);
    let s = random_signals(64, 4, &mut rng);
    let sab = kn_symbol_rank_one(&s[0], &s[1], &t).unwrap();
    let scd = kn_symbol_rank_one(&s[2], &s[3], &t).unwrap();
    let hs = hs_inner(&rank_one_operator(&s[0], &s[1], &t), &rank_one_operator(&s[2], &s[3], &t));
    let iso = (sab.inner(&scd) - hs).norm().max((sab.inner(&sab) - inner(&t, &s[0], &s[0]) * inner(&t, &s[1], &s[1])).norm());
    let hat = fourier::forward(&sab.torus, &sab.values);
    let v = stft_with(&s[0], &s[1], &t).unwrap();
    let fourier_err = (0..64 * 64)
        .map(|i| (hat[i] - v.values[((64 - i % 64) % 64) * 64 + i / 64]).norm())
        .fold(0.0, f64::max);

    let gauss = |width: f64| CVector::from_fn(64, |x, _| C64::new((-t.norm(x).powi(2) / (2.0 * width * width)).exp(), 0.0));
    let pair = |g: CVector| GeneratorPair { f: g.clone(), g };
    let lattice = TfLattice::new(2.0, 1.0);
    let tf = tf_torus(&t).unwrap();
    let lat = LatticePair::new(&tf, &[2.0, 1.0]).unwrap();
    let far = TfPoint { time: 8.0, freq: 0.0 };
    let families = [
        vec![pair(gauss(1.0)), pair(gauss(0.8))],
        vec![pair(tf_atom(far, &gauss(1.0), &t).unwrap()), pair(gauss(1.0))],
    ];
    let envelope = |probes: &[GeneratorPair]| {
        let mut syms = vec![kn_symbol_rank_one(&gauss(1.0), &gauss(1.0), &t).unwrap().values];
        syms.extend(probes.iter().map(|p| kn_symbol_rank_one(&p.f, &p.g, &t).unwrap().values));
        let c = syms
            .iter()
            .map(|s| translates(std::slice::from_ref(s), &lat).unwrap().tightest_constant(4.0))
            .fold(0.0, f64::max);
        Envelope { constant: c * 1.01, exponent: 4.0 }
    };
    let problem = |probes: &[GeneratorPair]| MultiplierProblem {
        signal: t.clone(),
        lattice,
        reference: vec![pair(gauss(1.0))],
        probes: probes.iter().map(|p| vec![p.clone()]).collect(),
        envelope: envelope(probes),
        covering: Covering::slabs(&tf, 0, 2, 0.0).unwrap(),
    };
    let mask = |seed| {
        let mut r = seeded_rng(seed);
        GaborMultiplier::new(&t, lattice, vec![pair(gauss(1.0))], vec![frame_forge::atoms::random_coefficients(32, &mut r)])
            .unwrap()
    };
    let mixed = problem(&families[0]);
    let tests: Vec<CVector> = (20..23).map(|s| mask(s).symbol().unwrap().values).collect();
    let report = multiplier_certify(&mixed, &[0.5, 1.0, 2.0, 4.0], &tests).unwrap();
    let Some(cert) = report.certification else {
        return (false, "no certified radius for the mixed probe families".into());
    };
    let rec = multiplier_recover(&mixed, cert.r, &mask(9)).unwrap();
    let deficient = matches!(
        multiplier_recover(&problem(&families[1]), 0.0, &mask(9)),
        Err(Error::RankDeficient { .. })
    );
    (
        iso <= 1e-8 && fourier_err <= 1e-8 && rec.mask_rel_error <= 1e-6 && deficient,
        format!(
            "HS isometry {iso:.1e}; Fourier identity {fourier_err:.1e}; mask error {:.1e} at certified r = {}; r = 0 rank deficiency reported: {deficient}",
            rec.mask_rel_error, cert.r
        ),
    )
}

fn sampling() -> Outcome {
    let t = Torus::new(1, 16.0, 256).unwrap();
    let reference = rational_bumps(&integers(&t), 0.5, 5.0);
    let frame = canonical_dual(&reference).unwrap();
    let basis = span_basis(&reference).unwrap();
    let mut rng = seeded_rng(9);
    let fs = random_span_elements(&reference, 10, &mut rng);
    let mut repro: f64 = 0.0;
    for x0 in [0, 77, 200] {
        let k = kernel_at(x0, &frame).unwrap();
        for f in &fs {
            repro = repro.max((inner(&t, f, &k.kernel) - f[x0]).norm() / f.camax());
        }
    }
    let donors = vec![
        NodeSet::lattice(&t, &[0.5], &[0.0]).unwrap(),
        NodeSet::lattice(&t, &[0.5], &[0.25]).unwrap(),
    ];
    let a = sampling_bounds(&donors[0], &basis).unwrap();
    let b = kernel_frame_bounds(&donors[0], &frame, &basis).unwrap();
    let equiv = (a.smallest() - b.smallest()).abs().max((a.upper() - b.upper()).abs());
    let exp = SamplingExperiment {
        frame,
        basis,
        donors,
        covering: Covering::slabs(&t, 0, 2, 0.0).unwrap(),
    };
    let tests = random_span_elements(&reference, 5, &mut rng);
    let table = quilt_sampling(&exp, 2.0, &Weight::unit(), &[0.5, 1.0, 2.0, 4.0, 8.0], &tests).unwrap();
    let Some(cert) = table.certification.clone() else {
        return (false, "no certified radius".into());
    };
    let a_cert = table.rows.iter().find(|r| r.r == cert.r).map(|r| r.a_r).unwrap_or(0.0);
    let last = table.rows.last().unwrap().recon_rel_error;
    (
        repro <= 1e-8 && a_cert > 0.0 && last <= 1e-6 && equiv <= 1e-8,
        format!(
            "reproduction {repro:.1e}; A_r = {a_cert:.3} at certified r = {}; error at r = 8: {last:.1e}; kernel-frame equivalence {equiv:.1e}",
            cert.r
        ),
    )
}

fn exhaustive_rel(nodes: &NodeSet) -> usize {
    let t = nodes.torus();
    (0..t.len())
        .map(|anchor| {
            nodes
                .points()
                .iter()
                .filter(|&&p| {
                    let off = t.coords(t.diff(p, anchor));
                    (0..t.dim()).all(|a| off[a] <= 1.0 + 1e-9)
                })
                .count()
        })
        .max()
        .unwrap_or(0)
}

fn node_checks() -> Outcome {
    let t = Torus::new(1, 32.0, 512).unwrap();
    let report = conv_nodes_check(&integers(&t), 2.0).unwrap();
    let slope_err = (report.tail_slope - report.expected_tail_slope(1)).abs();
    let mut rng = seeded_rng(10);
    let mut mismatches = 0;
    for trial in 0..50 {
        let torus = if trial % 2 == 0 {
            Torus::new(1, 16.0, 128).unwrap()
        } else {
            Torus::new(2, 6.0, 24).unwrap()
        };
        let count = rng.random_range(1..40);
        let points = (0..count).map(|_| rng.random_range(0..torus.len())).collect();
        let nodes = NodeSet::from_grid_points(&torus, points).unwrap();
        mismatches += usize::from(rel_separation(&nodes).unwrap() != exhaustive_rel(&nodes));
    }
    (
        report.constants_finite() && slope_err <= 0.3 && mismatches == 0,
        format!(
            "constants ({:.3}, {:.3}, {:.3}); tail slope {:.3} vs {}; rel mismatches {mismatches}/50",
            report.k_sum,
            report.k_tail,
            report.k_ratio,
            report.tail_slope,
            report.expected_tail_slope(1)
        ),
    )
}

fn main() -> ExitCode {
    let case = surgery_case();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("dual-frame reconstruction", Box::new(dual_reconstruction)),
        ("dual decay", Box::new(dual_decay)),
        ("contour pseudo-inverse", Box::new(contour_pseudo_inverse)),
        ("surgery error rate", Box::new(|| surgery_rate(&case))),
        ("quilted frame certification", Box::new(|| surgery_certification(&case))),
        ("quilted Gabor frames", Box::new(quilted_gabor)),
        ("shift-invariant fiber criterion", Box::new(fiber_criterion)),
        ("Kohn-Nirenberg machinery", Box::new(kn_machinery)),
        ("sampling", Box::new(sampling)),
        ("node and weight bounds", Box::new(node_checks)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = run();
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {}: {name}: {detail} [{:.1}s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

