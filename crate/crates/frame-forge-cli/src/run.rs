use frame_forge::amalgam::{AtomFamily, AtomFamilyRecord, Envelope};
use frame_forge::atoms::{bspline_like, cubic_bspline, gaussian_bumps, random_coefficients, random_signals, random_span_elements, rational_bumps, seeded_rng};
use frame_forge::frame::{canonical_dual, span_basis};
use frame_forge::gabor::{certify_gabor, gabor_frame_bounds, gabor_sweep, prepare_gabor_quilt, tf_atom, tf_torus, GaborDonor, GaussWindow, TfLattice, TfPoint};
use frame_forge::grid::{NodeSet, Torus, Weight};
use frame_forge::kn::{kn_symbol_rank_one, mixed_lower_symbol, multiplier_certify, multiplier_recover, GaborMultiplier, GeneratorPair, MultiplierProblem};
use frame_forge::sampling::{quilt_sampling, SamplingExperiment};
use frame_forge::sis::{quilt_sis, translates, LatticePair, SisProblem};
use frame_forge::surgery::{build_partition, certify, error_sweep, exterior_frame_pair, Certification, Covering, QuiltedSystem, SweepTable};
use frame_forge::{CVector, Error, C64};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::*;
use crate::RunError;

/// Everything an experiment produces before it is written out.
pub struct Report {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Fitted constants and diagnostics recorded in the manifest.
    pub fitted: Value,
    /// Set when the run completed but nothing was certified.
    pub refusal: Option<String>,
}

/// Shortest round-trip representation, always in exponent form.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn execute(config: &ExperimentConfig) -> Result<Report, RunError> {
    match config {
        ExperimentConfig::SurgerySweep(c) => surgery_sweep(c),
        ExperimentConfig::GaborQuilt(c) => gabor_quilt(c),
        ExperimentConfig::SisQuilt(c) => sis_quilt(c),
        ExperimentConfig::Sampling(c) => sampling(c),
        ExperimentConfig::Multiplier(c) => multiplier(c),
        ExperimentConfig::Selftest(c) => Ok(crate::selftest::run(c.seed)),
    }
}

fn torus(d: &Domain) -> Result<Torus, RunError> {
    Ok(Torus::new(d.dim, d.side, d.points)?)
}

fn lattice_nodes(t: &Torus, spec: &LatticeSpec) -> Result<NodeSet, RunError> {
    Ok(NodeSet::lattice(t, &spec.step, &spec.offset)?)
}

fn family(t: &Torus, spec: &FamilySpec) -> Result<AtomFamily, RunError> {
    Ok(match spec {
        FamilySpec::GaussianBumps { width, nodes } => gaussian_bumps(&lattice_nodes(t, nodes)?, *width),
        FamilySpec::BsplineLike { width, nodes } => bspline_like(&lattice_nodes(t, nodes)?, *width),
        FamilySpec::RationalBumps { scale, exponent, nodes } => rational_bumps(&lattice_nodes(t, nodes)?, *scale, *exponent),
        FamilySpec::CustomFile { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Input(format!("cannot read atom file {}: {e}", path.display())))?;
            let record: AtomFamilyRecord = serde_json::from_str(&text)
                .map_err(|e| RunError::Input(format!("invalid atom file {}: {e}", path.display())))?;
            let fam = AtomFamily::from_record(&record)?;
            if fam.torus() != t {
                return Err(RunError::Input(format!(
                    "atom file {} lives on a different domain than `domain`",
                    path.display()
                )));
            }
            fam.without_envelope()
        }
    })
}

fn with_envelope(fam: AtomFamily, spec: &EnvelopeSpec) -> Result<AtomFamily, RunError> {
    Ok(match spec.constant {
        EnvelopeConstant::Fit(_) => fam.with_fitted_envelope(spec.exponent)?,
        EnvelopeConstant::Value(constant) => fam.with_envelope(Envelope { constant, exponent: spec.exponent })?,
    })
}

/// Envelope for a set of generator translates, fitting the constant on request.
fn translate_envelope(families: &[AtomFamily], spec: &EnvelopeSpec) -> Envelope {
    let constant = match spec.constant {
        EnvelopeConstant::Value(c) => c,
        EnvelopeConstant::Fit(_) => {
            families.iter().map(|f| f.tightest_constant(spec.exponent)).fold(0.0, f64::max) * (1.0 + 1e-12)
        }
    };
    Envelope { constant, exponent: spec.exponent }
}

fn covering(t: &Torus, spec: &CoveringSpec) -> Result<Covering, RunError> {
    match *spec {
        CoveringSpec::Slabs { axis, pieces, overlap } => Ok(Covering::slabs(t, axis, pieces, overlap)?),
    }
}

fn signal(t: &Torus, spec: &SignalSpec) -> Result<CVector, RunError> {
    if !(spec.width > 0.0) {
        return Err(RunError::Input("invalid field `width`: must be positive".into()));
    }
    let centred = CVector::from_fn(t.len(), |x, _| {
        let u = t.norm(x) / spec.width;
        let v = match spec.profile {
            Profile::Gaussian => (-u * u / 2.0).exp(),
            Profile::Bspline => cubic_bspline(u),
        };
        C64::new(v, 0.0)
    });
    let shift = TfPoint {
        time: spec.time_shift,
        freq: spec.freq_shift,
    };
    Ok(tf_atom(shift, &centred, t)?)
}

fn tf_lattice(spec: &TfLatticeSpec) -> TfLattice {
    TfLattice::new(spec.time_step, spec.freq_step).with_offset(spec.time_offset, spec.freq_offset)
}

fn certification_json(c: &Option<Certification>) -> Value {
    serde_json::to_value(c).unwrap_or(Value::Null)
}

fn refusal(c: &Option<Certification>) -> Option<String> {
    c.is_none().then(|| "certification refused: no radius with reconstruction deviation below one".to_string())
}

const SWEEP_HEADER: [&str; 7] = ["r", "worst_rel_error", "fitted_slope", "deviation", "lower_bound", "upper_bound", "selected"];

fn sweep_rows(table: &SweepTable) -> Vec<Vec<String>> {
    table
        .rows
        .iter()
        .map(|row| {
            vec![
                num(row.r),
                num(row.worst_rel_error),
                num(table.fitted_slope),
                num(row.deviation),
                num(row.lower_bound),
                num(row.upper_bound),
                row.selected.to_string(),
            ]
        })
        .collect()
}

fn surgery_sweep(c: &SurgerySweep) -> Result<Report, RunError> {
    let t = torus(&c.domain)?;
    let reference = family(&t, &c.reference)?;
    let basis = span_basis(&reference)?;
    let donors = c
        .donors
        .iter()
        .map(|spec| Ok(exterior_frame_pair(&with_envelope(family(&t, spec)?, &c.envelope)?, &basis)?))
        .collect::<Result<Vec<_>, RunError>>()?;
    let donor_bounds: Vec<Value> = donors
        .iter()
        .map(|d| json!({ "lower_bound": d.lower_bound, "upper_bound": d.upper_bound }))
        .collect();
    let cover = covering(&t, &c.covering)?;
    let pou = build_partition(&cover)?;
    let template = QuiltedSystem::new(donors, cover, 0.0)?;
    let tests = random_span_elements(&reference, c.test_functions, &mut seeded_rng(c.seed));
    let tables = c
        .norms
        .par_iter()
        .map(|n| {
            error_sweep(&template, &pou, &c.radii, &tests, &basis, n.p, &Weight::polynomial(n.weight_exponent))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let certification = certify(&template, &pou, &c.radii, &basis)?;
    let mut rows = Vec::new();
    for table in &tables {
        for row in &table.rows {
            rows.push(vec![
                num(row.r),
                num(table.p),
                num(table.weight_exponent),
                num(row.worst_rel_error),
                num(table.fitted_slope),
                num(row.lower_bound),
                num(row.upper_bound),
                table.overlap_count.to_string(),
            ]);
        }
    }
    let sweeps: Vec<Value> = tables
        .iter()
        .map(|tb| json!({ "p": tb.p, "weight_exponent": tb.weight_exponent, "fitted_slope": tb.fitted_slope, "monotone": tb.monotone }))
        .collect();
    Ok(Report {
        header: vec!["r", "p", "weight_exponent", "worst_rel_error", "fitted_slope", "lower_bound", "upper_bound", "overlap_count"],
        rows,
        fitted: json!({
            "donor_bounds": donor_bounds,
            "sweeps": sweeps,
            "certification": certification_json(&certification),
        }),
        refusal: refusal(&certification),
    })
}

fn gabor_quilt(c: &GaborQuilt) -> Result<Report, RunError> {
    let t = torus(&c.domain)?;
    let WindowSpec::Gaussian = c.window;
    let window = GaussWindow::new(&t)?;
    let donors: Vec<GaborDonor> = c
        .donors
        .iter()
        .map(|d| GaborDonor {
            lattice: tf_lattice(d),
            window: window.samples().clone(),
            envelope: GaussWindow::tf_envelope(c.envelope_exponent),
        })
        .collect();
    let donor_bounds = donors
        .iter()
        .map(|d| {
            let b = gabor_frame_bounds(&d.lattice, &d.window, &t)?;
            Ok(json!({ "density": d.lattice.density(), "lower_bound": b.smallest(), "upper_bound": b.upper() }))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let cover = covering(&tf_torus(&t)?, &c.covering)?;
    let setup = prepare_gabor_quilt(&donors, &window, cover)?;
    let tests = random_signals(t.len(), c.test_signals, &mut seeded_rng(c.seed));
    let table = gabor_sweep(&setup, &c.radii, &tests)?;
    let certification = certify_gabor(&setup, &c.radii)?;
    Ok(Report {
        header: SWEEP_HEADER.to_vec(),
        rows: sweep_rows(&table),
        fitted: json!({
            "donor_bounds": donor_bounds,
            "envelope": GaussWindow::tf_envelope(c.envelope_exponent),
            "fitted_slope": table.fitted_slope,
            "monotone": table.monotone,
            "certification": certification_json(&certification),
        }),
        refusal: refusal(&certification),
    })
}

fn sis_quilt(c: &SisQuilt) -> Result<Report, RunError> {
    let t = torus(&c.domain)?;
    let lattice = LatticePair::new(&t, &[c.lattice_step])?;
    let signals = |specs: &[SignalSpec]| specs.iter().map(|s| signal(&t, s)).collect::<Result<Vec<_>, _>>();
    let reference = signals(&c.reference)?;
    let donors = c.donors.iter().map(|d| signals(d)).collect::<Result<Vec<_>, _>>()?;
    let reference_family = translates(&reference, &lattice)?;
    let mut families = vec![reference_family.clone()];
    for d in &donors {
        families.push(translates(d, &lattice)?);
    }
    let problem = SisProblem {
        envelope: translate_envelope(&families, &c.envelope),
        lattice,
        reference,
        donors,
        covering: covering(&t, &c.covering)?,
    };
    let tests = random_span_elements(&reference_family, c.test_functions, &mut seeded_rng(c.seed));
    let report = quilt_sis(&problem, &c.radii, &tests)?;
    Ok(Report {
        header: SWEEP_HEADER.to_vec(),
        rows: sweep_rows(&report.table),
        fitted: json!({
            "envelope": problem.envelope,
            "reference_bounds": report.reference_bounds,
            "fibers": report.fibers,
            "fitted_slope": report.table.fitted_slope,
            "monotone": report.table.monotone,
            "certification": certification_json(&report.certification),
        }),
        refusal: refusal(&report.certification),
    })
}

fn sampling(c: &Sampling) -> Result<Report, RunError> {
    let t = torus(&c.domain)?;
    let reference = family(&t, &c.reference)?;
    let experiment = SamplingExperiment {
        frame: canonical_dual(&reference)?,
        basis: span_basis(&reference)?,
        donors: c.donors.iter().map(|d| lattice_nodes(&t, d)).collect::<Result<Vec<_>, _>>()?,
        covering: covering(&t, &c.covering)?,
    };
    let donor_bounds = experiment
        .donor_bounds()?
        .iter()
        .map(|b| json!({ "lower_bound": b.smallest(), "upper_bound": b.upper() }))
        .collect::<Vec<_>>();
    let tests = random_span_elements(&reference, c.test_functions, &mut seeded_rng(c.seed));
    let table = quilt_sampling(&experiment, c.norm.p, &Weight::polynomial(c.norm.weight_exponent), &c.radii, &tests)?;
    let rows = table
        .rows
        .iter()
        .map(|r| vec![num(r.r), num(r.a_r), num(r.b_r), num(r.recon_rel_error), r.n_points.to_string()])
        .collect();
    Ok(Report {
        header: vec!["r", "A_r", "B_r", "recon_rel_error", "n_points"],
        rows,
        fitted: json!({
            "donor_sampling_bounds": donor_bounds,
            "p": table.p,
            "weight_exponent": table.weight_exponent,
            "fitted_slope": table.fitted_slope,
            "certification": certification_json(&table.certification),
        }),
        refusal: refusal(&table.certification),
    })
}

fn multiplier(c: &Multiplier) -> Result<Report, RunError> {
    let t = torus(&c.domain)?;
    let lattice = tf_lattice(&c.lattice);
    let pair = |p: &PairSpec| -> Result<GeneratorPair, RunError> {
        Ok(GeneratorPair {
            f: signal(&t, &p.f)?,
            g: signal(&t, &p.g)?,
        })
    };
    let pairs = |ps: &[PairSpec]| ps.iter().map(pair).collect::<Result<Vec<_>, _>>();
    let reference = pairs(&c.reference)?;
    let probes = c.probes.iter().map(|p| pairs(p)).collect::<Result<Vec<_>, _>>()?;
    let tf = tf_torus(&t)?;
    let symbol_lattice = LatticePair::new(&tf, &[c.lattice.time_step, c.lattice.freq_step])?;
    let mut families = Vec::new();
    for p in reference.iter().chain(probes.iter().flatten()) {
        let s = kn_symbol_rank_one(&p.f, &p.g, &t)?.values;
        families.push(translates(std::slice::from_ref(&s), &symbol_lattice)?);
    }
    let problem = MultiplierProblem {
        signal: t.clone(),
        lattice,
        reference: reference.clone(),
        probes,
        envelope: translate_envelope(&families, &c.envelope),
        covering: covering(&tf, &c.covering)?,
    };
    let n_masks = lattice.points(&t)?.len();
    let mut rng = seeded_rng(c.seed);
    let mut random_multiplier = || {
        let masks = (0..reference.len()).map(|_| random_coefficients(n_masks, &mut rng)).collect();
        GaborMultiplier::new(&t, lattice, reference.clone(), masks)
    };
    let target = random_multiplier()?;
    let tests = (0..c.test_multipliers)
        .map(|_| Ok(random_multiplier()?.symbol()?.values))
        .collect::<Result<Vec<_>, Error>>()?;
    let report = multiplier_certify(&problem, &c.radii, &tests)?;
    let sigma = target.symbol()?;
    let rows = c
        .radii
        .par_iter()
        .map(|&r| match multiplier_recover(&problem, r, &target) {
            Ok(rec) => Ok(vec![
                num(r),
                rec.n_probes.to_string(),
                num(rec.smallest_singular_value),
                num(rec.mask_rel_error),
                num(rec.hs_residual),
            ]),
            Err(Error::RankDeficient { sigma_min, .. }) => {
                let (a, _) = mixed_lower_symbol(&problem, r, &sigma)?;
                Ok(vec![num(r), a.nrows().to_string(), num(sigma_min), num(f64::NAN), num(f64::NAN)])
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let recovery = match &report.certification {
        Some(cert) => {
            let rec = multiplier_recover(&problem, cert.r, &target)?;
            json!({ "r": rec.r, "mask_rel_error": rec.mask_rel_error, "hs_residual": rec.hs_residual })
        }
        None => Value::Null,
    };
    Ok(Report {
        header: vec!["r", "n_probes", "smallest_singular_value", "mask_rel_error", "hs_residual"],
        rows,
        fitted: json!({
            "envelope": problem.envelope,
            "fibers": report.fibers,
            "deviation_slope": report.table.fitted_slope,
            "certification": certification_json(&report.certification),
            "recovery_at_certified_radius": recovery,
        }),
        refusal: refusal(&report.certification),
    })
}
