use frame_forge::amalgam::inner;
use frame_forge::atoms::{gaussian_bumps, random_signals, random_span_elements, seeded_rng};
use frame_forge::frame::{canonical_dual, pseudo_inverse, pseudo_inverse_contour, relative_frobenius};
use frame_forge::gabor::{isometry_defect, GaussWindow};
use frame_forge::grid::{rel_separation, NodeSet, Torus};
use frame_forge::sampling::kernel_at;
use frame_forge::sis::{direct_verdict, fiber_verdict, LatticePair};
use frame_forge::{fourier, CMatrix, CVector, C64};
use rand::Rng;
use serde_json::json;

use crate::run::{num, Report};

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
}

/// Small instances of the library invariants, each compared against an independent computation.
pub fn run(seed: u64) -> Report {
    let mut rng = seeded_rng(seed);
    let checks = vec![
        fourier_roundtrip(&mut rng),
        dual_reconstruction(&mut rng),
        contour_pseudo_inverse(&mut rng),
        stft_isometry(&mut rng),
        fiber_agreement(),
        kernel_reproduction(&mut rng),
        separation_oracle(&mut rng),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !passes(c)).map(|c| c.name).collect();
    let rows = checks
        .iter()
        .map(|c| vec![c.name.to_string(), num(c.value), num(c.tolerance), passes(c).to_string()])
        .collect();
    Report {
        header: vec!["check", "value", "tolerance", "pass"],
        rows,
        fitted: json!({ "failed": failed }),
        refusal: None,
    }
}

fn passes(c: &Check) -> bool {
    c.value <= c.tolerance
}

fn fourier_roundtrip(rng: &mut impl Rng) -> Check {
    let t = Torus::new(1, 16.0, 64).expect("valid torus");
    let f = random_signals(t.len(), 1, rng).remove(0);
    let back = fourier::inverse(&t, &fourier::forward(&t, &f));
    Check {
        name: "fourier_roundtrip",
        value: (back - &f).norm() / f.norm(),
        tolerance: 1e-12,
    }
}

fn dual_reconstruction(rng: &mut impl Rng) -> Check {
    let t = Torus::new(1, 16.0, 128).expect("valid torus");
    let nodes = NodeSet::lattice(&t, &[1.0], &[0.0]).expect("valid lattice");
    let family = gaussian_bumps(&nodes, 0.6);
    let value = match canonical_dual(&family) {
        Ok(pair) => random_span_elements(&family, 5, rng)
            .iter()
            .map(|f| pair.expand(f).map_or(f64::INFINITY, |g| (g - f).norm() / f.norm()))
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    Check {
        name: "dual_reconstruction",
        value,
        tolerance: 1e-8,
    }
}

fn contour_pseudo_inverse(rng: &mut impl Rng) -> Check {
    let mut worst: f64 = 0.0;
    for n in [4, 9, 16] {
        let q = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .qr()
            .q();
        let diag = CVector::from_fn(n, |i, _| C64::new(if i % 3 == 2 { 0.0 } else { 1.0 + i as f64 / 4.0 }, 0.0));
        let m = &q * CMatrix::from_diagonal(&diag) * q.adjoint();
        worst = match pseudo_inverse_contour(&m, 1.0, 64) {
            Ok(p) => worst.max(relative_frobenius(&p, &pseudo_inverse(&m))),
            Err(_) => f64::INFINITY,
        };
    }
    Check {
        name: "contour_pseudo_inverse",
        value: worst,
        tolerance: 1e-6,
    }
}

fn stft_isometry(rng: &mut impl Rng) -> Check {
    let t = Torus::new(1, 16.0, 64).expect("valid torus");
    let value = match GaussWindow::new(&t) {
        Ok(w) => random_signals(t.len(), 3, rng)
            .iter()
            .map(|f| isometry_defect(f, &w).map_or(f64::INFINITY, f64::abs))
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    Check {
        name: "stft_isometry",
        value,
        tolerance: 1e-10,
    }
}

fn fiber_agreement() -> Check {
    let t = Torus::new(1, 16.0, 128).expect("valid torus");
    let lattice = LatticePair::new(&t, &[1.0]).expect("valid lattice");
    let gauss = CVector::from_fn(t.len(), |x, _| C64::new((-t.norm(x).powi(2) / 1.28).exp(), 0.0));
    let delayed = CVector::from_fn(t.len(), |x, _| gauss[t.shift(x, [-8, 0])]);
    let configs = [vec![gauss.clone()], vec![&gauss - &delayed]];
    let disagreements = configs
        .iter()
        .filter(|g| match (fiber_verdict(g, &lattice), direct_verdict(g, &lattice)) {
            (Ok(a), Ok(b)) => a.riesz != b.riesz,
            _ => true,
        })
        .count();
    Check {
        name: "fiber_direct_agreement",
        value: disagreements as f64,
        tolerance: 0.0,
    }
}

fn kernel_reproduction(rng: &mut impl Rng) -> Check {
    let t = Torus::new(1, 16.0, 128).expect("valid torus");
    let nodes = NodeSet::lattice(&t, &[1.0], &[0.0]).expect("valid lattice");
    let family = gaussian_bumps(&nodes, 0.6);
    let value = match canonical_dual(&family) {
        Ok(frame) => {
            let f = random_span_elements(&family, 1, rng).remove(0);
            [0, 37, 100]
                .iter()
                .map(|&x0| match kernel_at(x0, &frame) {
                    Ok(k) => (inner(&t, &f, &k.kernel) - f[x0]).norm() / f.camax(),
                    Err(_) => f64::INFINITY,
                })
                .fold(0.0, f64::max)
        }
        Err(_) => f64::INFINITY,
    };
    Check {
        name: "kernel_reproduction",
        value,
        tolerance: 1e-8,
    }
}

fn separation_oracle(rng: &mut impl Rng) -> Check {
    let t = Torus::new(1, 8.0, 64).expect("valid torus");
    let mut mismatches = 0;
    for _ in 0..10 {
        let points = (0..rng.random_range(1..20)).map(|_| rng.random_range(0..t.len())).collect();
        let nodes = NodeSet::from_grid_points(&t, points).expect("points on the grid");
        let exhaustive = (0..t.len())
            .map(|a| {
                nodes
                    .points()
                    .iter()
                    .filter(|&&p| t.coords(t.diff(p, a))[0] <= 1.0 + 1e-9)
                    .count()
            })
            .max()
            .unwrap_or(0);
        mismatches += usize::from(rel_separation(&nodes).ok() != Some(exhaustive));
    }
    Check {
        name: "rel_separation_oracle",
        value: mismatches as f64,
        tolerance: 0.0,
    }
}
