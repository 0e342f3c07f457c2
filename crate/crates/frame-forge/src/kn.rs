//! Kohn-Nirenberg symbols, Gabor multipliers and their recovery from mixed lower symbols.
//!
//! Operators on the signal grid are matrices acting on sample vectors; with the grid
//! inner product the Hilbert-Schmidt inner product is `sum a_ij conj(b_ij)`. Symbols
//! live on the time-frequency torus of [`crate::gabor::tf_torus`], where the
//! Kohn-Nirenberg map is an isometry and turns conjugation by `pi(z)` into translation.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::amalgam::Envelope;
use crate::error::{Error, Result};
use crate::fourier;
use crate::frame::RANK_TOLERANCE;
use crate::gabor::{tf_atom, tf_torus, TfLattice, TfPoint};
use crate::grid::Torus;
use crate::sis::{fiber_gram, quilt_sis, translates, LatticePair, SisProblem, SisReport};
use crate::surgery::{select_entries, Covering};
use crate::{CMatrix, CVector, C64};

/// A function on the time-frequency torus identifying an operator.
#[derive(Clone, Debug, PartialEq)]
pub struct KnSymbol {
    pub torus: Torus,
    pub values: CVector,
    /// Which operator the symbol was computed from.
    pub source: String,
}

impl KnSymbol {
    /// `<sigma, tau>` with the time-frequency cell area as weight.
    pub fn inner(&self, other: &KnSymbol) -> C64 {
        self.values.dotc(&other.values).conj() * self.torus.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        (self.values.norm_squared() * self.torus.cell_volume()).sqrt()
    }

    /// `sigma(. - z)` for a grid point `z` of the time-frequency torus.
    pub fn translated(&self, z: TfPoint) -> Result<KnSymbol> {
        let t = &self.torus;
        let zi = t.snap(&[z.time, z.freq])?;
        Ok(KnSymbol {
            torus: t.clone(),
            values: CVector::from_fn(t.len(), |i, _| self.values[t.diff(i, zi)]),
            source: format!("{} translated by ({}, {})", self.source, z.time, z.freq),
        })
    }
}

/// `sigma(P_{f,g})(x, w) = f(x) conj(hat g(w)) e^{-2 pi i x w}` for `P_{f,g} = <., g> f`.
pub fn kn_symbol_rank_one(f: &CVector, g: &CVector, signal: &Torus) -> Result<KnSymbol> {
    check_signal(f, signal)?;
    check_signal(g, signal)?;
    let tf = tf_torus(signal)?;
    let gh = fourier::forward(signal, g);
    let n = signal.len();
    let values = CVector::from_fn(tf.len(), |i, _| {
        let (x, j) = (i / n, i % n);
        // x w = (x h)(j / L) = x j / N.
        let phase = C64::from_polar(1.0, -2.0 * PI * ((x * j) % n) as f64 / n as f64);
        f[x] * gh[j].conj() * phase
    });
    Ok(KnSymbol {
        torus: tf,
        values,
        source: "rank-one operator".into(),
    })
}

/// `sigma(T)(x, w) = h sum_s K(x, x - s) e^{-2 pi i s w}` for the operator matrix `T`.
pub fn kn_symbol(operator: &CMatrix, signal: &Torus) -> Result<KnSymbol> {
    let n = signal.len();
    if operator.nrows() != n || operator.ncols() != n {
        return Err(Error::LengthMismatch {
            what: "operator matrix and grid",
            left: operator.nrows(),
            right: n,
        });
    }
    let tf = tf_torus(signal)?;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let rows: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut buf: Vec<C64> = (0..n).map(|s| operator[(x, (x + n - s) % n)]).collect();
            fft.process(&mut buf);
            buf
        })
        .collect();
    Ok(KnSymbol {
        torus: tf,
        values: CVector::from_iterator(n * n, rows.into_iter().flatten()),
        source: "operator matrix".into(),
    })
}

fn check_signal(f: &CVector, signal: &Torus) -> Result<()> {
    if signal.dim() != 1 {
        return Err(Error::InvalidDomain("signals must be one-dimensional".into()));
    }
    if f.len() != signal.len() {
        return Err(Error::LengthMismatch {
            what: "signal samples and grid",
            left: f.len(),
            right: signal.len(),
        });
    }
    Ok(())
}

/// Matrix of `P_{f,g} = <., g> f` on the grid, `h f g^*`.
pub fn rank_one_operator(f: &CVector, g: &CVector, signal: &Torus) -> CMatrix {
    f * g.adjoint() * C64::new(signal.cell_volume(), 0.0)
}

/// Hilbert-Schmidt inner product of two operator matrices.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// Matrix of the unitary `pi(z) = M_w T_x` on the grid.
pub fn tf_shift_operator(z: TfPoint, signal: &Torus) -> Result<CMatrix> {
    let n = signal.len();
    let cols = (0..n)
        .map(|k| {
            let mut e = CVector::zeros(n);
            e[k] = C64::new(1.0, 0.0);
            tf_atom(z, &e, signal)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CMatrix::from_columns(&cols))
}

/// `rho(z) T = pi(z) T pi(z)^*`.
pub fn conjugate_by_tf_shift(operator: &CMatrix, z: TfPoint, signal: &Torus) -> Result<CMatrix> {
    let p = tf_shift_operator(z, signal)?;
    Ok(&p * operator * p.adjoint())
}

/// Window pair `(f, g)` of the rank-one operator `P_{f,g}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorPair {
    pub f: CVector,
    pub g: CVector,
}

/// `sum_n sum_lambda m_n(lambda) P_{pi(lambda) f_n, pi(lambda) g_n}`.
#[derive(Clone, Debug)]
pub struct GaborMultiplier {
    pub signal: Torus,
    pub lattice: TfLattice,
    pub pairs: Vec<GeneratorPair>,
    /// One mask per pair, indexed like the lattice points.
    pub masks: Vec<Vec<C64>>,
}

impl GaborMultiplier {
    pub fn new(signal: &Torus, lattice: TfLattice, pairs: Vec<GeneratorPair>, masks: Vec<Vec<C64>>) -> Result<Self> {
        let count = lattice.points(signal)?.len();
        if masks.len() != pairs.len() {
            return Err(Error::LengthMismatch {
                what: "masks and generator pairs",
                left: masks.len(),
                right: pairs.len(),
            });
        }
        if let Some(m) = masks.iter().find(|m| m.len() != count) {
            return Err(Error::LengthMismatch {
                what: "mask and lattice",
                left: m.len(),
                right: count,
            });
        }
        Ok(Self {
            signal: signal.clone(),
            lattice,
            pairs,
            masks,
        })
    }

    /// Operator matrix assembled atom by atom.
    pub fn operator(&self) -> Result<CMatrix> {
        let t = &self.signal;
        let pts = self.lattice.points(t)?;
        let mut op = CMatrix::zeros(t.len(), t.len());
        for (pair, mask) in self.pairs.iter().zip(&self.masks) {
            for (p, m) in pts.iter().zip(mask) {
                let f = tf_atom(*p, &pair.f, t)?;
                let g = tf_atom(*p, &pair.g, t)?;
                op += rank_one_operator(&f, &g, t) * *m;
            }
        }
        Ok(op)
    }

    /// Symbol as a combination of translated rank-one symbols.
    pub fn symbol(&self) -> Result<KnSymbol> {
        let family = elementary_symbols(&self.signal, &self.lattice, &self.pairs)?;
        let m = CVector::from_iterator(family.ncols(), self.masks.iter().flatten().cloned());
        Ok(KnSymbol {
            torus: tf_torus(&self.signal)?,
            values: family * m,
            source: "Gabor multiplier".into(),
        })
    }

    pub fn mask_vector(&self) -> CVector {
        CVector::from_iterator(self.masks.iter().map(Vec::len).sum(), self.masks.iter().flatten().cloned())
    }
}

fn symbol_lattice(signal: &Torus, lattice: &TfLattice) -> Result<LatticePair> {
    if lattice.time_offset != 0.0 || lattice.freq_offset != 0.0 {
        return Err(Error::InvalidParameter {
            name: "lattice",
            reason: "multiplier lattices must contain the origin".into(),
        });
    }
    LatticePair::new(&tf_torus(signal)?, &[lattice.time_step, lattice.freq_step])
}

fn pair_symbols(signal: &Torus, pairs: &[GeneratorPair]) -> Result<Vec<CVector>> {
    pairs
        .iter()
        .map(|p| Ok(kn_symbol_rank_one(&p.f, &p.g, signal)?.values))
        .collect()
}

/// Symbols of `P_{pi(lambda) f_n, pi(lambda) g_n}`, one column per `(n, lambda)`, pair-major.
pub fn elementary_symbols(signal: &Torus, lattice: &TfLattice, pairs: &[GeneratorPair]) -> Result<CMatrix> {
    let lat = symbol_lattice(signal, lattice)?;
    Ok(translates(&pair_symbols(signal, pairs)?, &lat)?.atoms().clone())
}

/// Reference pairs defining the multiplier class and probe families quilted over a
/// covering of the time-frequency plane.
#[derive(Clone, Debug)]
pub struct MultiplierProblem {
    pub signal: Torus,
    pub lattice: TfLattice,
    pub reference: Vec<GeneratorPair>,
    pub probes: Vec<Vec<GeneratorPair>>,
    /// Declared envelope of every rank-one symbol, centred at its lattice point.
    pub envelope: Envelope,
    pub covering: Covering,
}

/// Masks recovered from the mixed lower symbol at one radius.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Recovery {
    pub r: f64,
    pub n_probes: usize,
    pub smallest_singular_value: f64,
    pub masks: Vec<Vec<C64>>,
    pub mask_rel_error: f64,
    pub hs_residual: f64,
}

/// Mixed lower symbol `<T, P_{pi(lambda) f^i_n, pi(lambda) g^i_n}>` over `d(lambda, E_i) <= r`
/// together with the matrix of the same functionals applied to each elementary operator.
pub fn mixed_lower_symbol(problem: &MultiplierProblem, r: f64, target: &KnSymbol) -> Result<(CMatrix, CVector)> {
    let lat = symbol_lattice(&problem.signal, &problem.lattice)?;
    let h = C64::new(lat.torus().cell_volume(), 0.0);
    let unknowns = translates(&pair_symbols(&problem.signal, &problem.reference)?, &lat)?;
    let mut probe_cols = Vec::new();
    for (i, fam) in problem.probes.iter().enumerate() {
        let probes = translates(&pair_symbols(&problem.signal, fam)?, &lat)?;
        for e in select_entries(probes.nodes(), &problem.covering, i, r) {
            probe_cols.push(probes.atoms().column(e).into_owned());
        }
    }
    if probe_cols.is_empty() {
        return Ok((CMatrix::zeros(0, unknowns.len()), CVector::zeros(0)));
    }
    let probes = CMatrix::from_columns(&probe_cols);
    let system = probes.ad_mul(unknowns.atoms()) * h;
    let lower = probes.ad_mul(&target.values) * h;
    Ok((system, lower))
}

/// Check the reference and every probe family against the fiber criterion.
pub fn check_fibers(problem: &MultiplierProblem) -> Result<()> {
    let lat = symbol_lattice(&problem.signal, &problem.lattice)?;
    let reference = pair_symbols(&problem.signal, &problem.reference)?;
    let mut systems = vec![reference.clone()];
    for fam in &problem.probes {
        systems.push(pair_symbols(&problem.signal, fam)?);
    }
    for (system, g) in systems.iter().enumerate() {
        let fg = fiber_gram(&reference, g, &lat)?;
        if !fg.uniformly_invertible() {
            return Err(Error::SingularFiber {
                system,
                fiber: fg.worst_fiber,
                sigma_min: fg.smallest_singular_value,
            });
        }
    }
    Ok(())
}

/// Least-squares recovery of the masks of `target` at radius `r`.
///
/// Fails with [`Error::RankDeficient`] when the smallest singular value of the system is
/// at most the shared rank threshold times the largest; no regularization is applied.
pub fn multiplier_recover(problem: &MultiplierProblem, r: f64, target: &GaborMultiplier) -> Result<Recovery> {
    if target.pairs != problem.reference || target.lattice != problem.lattice {
        return Err(Error::InvalidParameter {
            name: "target",
            reason: "the multiplier must use the reference pairs and lattice".into(),
        });
    }
    check_fibers(problem)?;
    let sigma = target.symbol()?;
    let (a, y) = mixed_lower_symbol(problem, r, &sigma)?;
    let unknowns = a.ncols();
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = if a.nrows() < unknowns { 0.0 } else { sv.min() };
    let threshold = RANK_TOLERANCE * smax;
    if smin <= threshold || smax == 0.0 {
        return Err(Error::RankDeficient {
            sigma_min: smin,
            threshold,
        });
    }
    let m = svd.solve(&y, threshold).map_err(|reason| Error::InvalidParameter {
        name: "system",
        reason: reason.into(),
    })?;
    let per = unknowns / problem.reference.len();
    let masks: Vec<Vec<C64>> = m.as_slice().chunks(per).map(|c| c.to_vec()).collect();
    let truth = target.mask_vector();
    let rebuilt = GaborMultiplier::new(&problem.signal, problem.lattice, problem.reference.clone(), masks.clone())?;
    let residual = &rebuilt.symbol()?.values - &sigma.values;
    Ok(Recovery {
        r,
        n_probes: a.nrows(),
        smallest_singular_value: smin,
        masks,
        mask_rel_error: (&m - &truth).norm() / truth.norm(),
        hs_residual: residual.norm() / sigma.values.norm(),
    })
}

/// Quilt the probe symbols over the covering as a translate system and sweep the radius;
/// the certification is the first radius whose reconstruction deviation is below one.
pub fn multiplier_certify(problem: &MultiplierProblem, radii: &[f64], test_symbols: &[CVector]) -> Result<SisReport> {
    let lat = symbol_lattice(&problem.signal, &problem.lattice)?;
    let sis = SisProblem {
        lattice: lat,
        reference: pair_symbols(&problem.signal, &problem.reference)?,
        donors: problem
            .probes
            .iter()
            .map(|fam| pair_symbols(&problem.signal, fam))
            .collect::<Result<Vec<_>>>()?,
        envelope: problem.envelope,
        covering: problem.covering.clone(),
    };
    quilt_sis(&sis, radii, test_symbols)
}
