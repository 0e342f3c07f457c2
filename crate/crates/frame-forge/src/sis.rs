//! Systems of lattice translates: bracket products, fiber Gram matrices and quilting of
//! translate systems through fiberwise dual generators.
//!
//! On a torus of side `L` with `N` samples, the Fourier transform lives at the
//! frequencies `j / L`. For a lattice `a Z` the dual lattice `(1 / a) Z` is a shift by
//! `K = L / a` frequency indices, so fibers are the indices `0 <= j < K`.

use rayon::prelude::*;
use serde::Serialize;

use crate::amalgam::{AtomFamily, Envelope};
use crate::error::{Error, Result};
use crate::fourier;
use crate::frame::{eigh, span_basis, FramePair, SpectrumInfo, RANK_TOLERANCE};
use crate::grid::{commensurate, NodeSet, Torus, MAX_DIM};
use crate::surgery::{build_partition, certify, error_sweep, Certification, Covering, QuiltedSystem, SweepTable};
use crate::{CMatrix, CVector, C64};

/// A rectangular lattice `diag(step) Z^d` on a torus and its dual lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticePair {
    torus: Torus,
    step: Vec<f64>,
    strides: [usize; MAX_DIM],
    counts: [usize; MAX_DIM],
}

impl LatticePair {
    /// Each step must be a whole number of grid steps dividing the side.
    pub fn new(torus: &Torus, step: &[f64]) -> Result<Self> {
        if step.len() != torus.dim() {
            return Err(Error::LengthMismatch {
                what: "lattice steps",
                left: step.len(),
                right: torus.dim(),
            });
        }
        let mut strides = [0usize; MAX_DIM];
        let mut counts = [1usize; MAX_DIM];
        for a in 0..torus.dim() {
            let (s, c) = commensurate(torus, a, step[a])?;
            strides[a] = s;
            counts[a] = c;
        }
        Ok(Self {
            torus: torus.clone(),
            step: step.to_vec(),
            strides,
            counts,
        })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn step(&self) -> &[f64] {
        &self.step
    }

    /// Steps of the dual lattice, `1 / step` per axis.
    pub fn dual_step(&self) -> Vec<f64> {
        self.step.iter().map(|a| 1.0 / a).collect()
    }

    /// `|det A|`.
    pub fn volume(&self) -> f64 {
        self.step.iter().product()
    }

    /// Lattice points on the torus.
    pub fn nodes(&self) -> Result<NodeSet> {
        NodeSet::lattice(&self.torus, &self.step, &vec![0.0; self.torus.dim()])
    }

    /// Number of fibers per axis; also the number of lattice points per axis.
    pub fn fiber_shape(&self) -> [usize; MAX_DIM] {
        self.counts
    }

    pub fn fiber_count(&self) -> usize {
        self.counts.iter().take(self.torus.dim()).product()
    }

    /// Frequency indices per axis of fiber `fiber` (row-major over the fiber shape).
    pub fn fiber_index(&self, fiber: usize) -> Vec<usize> {
        match self.torus.dim() {
            1 => vec![fiber],
            _ => vec![fiber / self.counts[1], fiber % self.counts[1]],
        }
    }

    /// Grid indices of the frequencies `fiber + dual lattice`.
    fn orbit(&self, fiber: usize) -> Vec<usize> {
        let j = self.fiber_index(fiber);
        let t = &self.torus;
        let reps: Vec<usize> = (0..t.dim()).map(|a| t.points_per_axis(a) / self.counts[a]).collect();
        let mut out = Vec::new();
        match t.dim() {
            1 => {
                for m in 0..reps[0] {
                    out.push(t.linear([j[0] + m * self.counts[0], 0]));
                }
            }
            _ => {
                for m0 in 0..reps[0] {
                    for m1 in 0..reps[1] {
                        out.push(t.linear([j[0] + m0 * self.counts[0], j[1] + m1 * self.counts[1]]));
                    }
                }
            }
        }
        out
    }

    /// Fiber containing frequency grid index `idx`.
    fn fiber_of(&self, idx: usize) -> usize {
        let mi = self.torus.multi_index(idx);
        match self.torus.dim() {
            1 => mi[0] % self.counts[0],
            _ => (mi[0] % self.counts[0]) * self.counts[1] + mi[1] % self.counts[1],
        }
    }

    fn translate(&self, g: &CVector, point: usize) -> CVector {
        let t = &self.torus;
        CVector::from_fn(t.len(), |x, _| g[t.diff(x, point)])
    }
}

/// Translates `g_n(. - lambda)` of every generator, ordered generator-major and labelled
/// by generator index.
pub fn translates(generators: &[CVector], lattice: &LatticePair) -> Result<AtomFamily> {
    let t = lattice.torus();
    check_generators(generators, t)?;
    let nodes = lattice.nodes()?;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut cols = Vec::new();
    for (n, g) in generators.iter().enumerate() {
        for &p in nodes.points() {
            points.push(p);
            labels.push(n);
            cols.push(lattice.translate(g, p));
        }
    }
    let nodes = NodeSet::from_grid_points(t, points)?.with_labels(labels)?;
    AtomFamily::new(nodes, CMatrix::from_columns(&cols))
}

fn check_generators(generators: &[CVector], t: &Torus) -> Result<()> {
    if generators.is_empty() {
        return Err(Error::InvalidParameter {
            name: "generators",
            reason: "at least one generator is needed".into(),
        });
    }
    if let Some(g) = generators.iter().find(|g| g.len() != t.len()) {
        return Err(Error::LengthMismatch {
            what: "generator samples and grid",
            left: g.len(),
            right: t.len(),
        });
    }
    Ok(())
}

/// Bracket product on the fibers; evaluation at any frequency index is periodic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bracket {
    pub shape: [usize; MAX_DIM],
    /// Values at the fibers, row-major over `shape`.
    pub values: Vec<C64>,
}

impl Bracket {
    /// Value at frequency index `j` (per axis), reduced modulo the dual lattice.
    pub fn at(&self, j: &[i64]) -> C64 {
        let r: Vec<usize> = j
            .iter()
            .zip(self.shape)
            .map(|(&ji, k)| ji.rem_euclid(k as i64) as usize)
            .collect();
        match r.len() {
            1 => self.values[r[0]],
            _ => self.values[r[0] * self.shape[1] + r[1]],
        }
    }
}

fn bracket_hat(fh: &CVector, gh: &CVector, lattice: &LatticePair, fiber: usize) -> C64 {
    lattice.orbit(fiber).into_iter().map(|i| fh[i] * gh[i].conj()).sum()
}

/// `[f, g](x) = sum over the dual lattice of hat f(x + mu) conj(hat g(x + mu))`.
pub fn bracket(f: &CVector, g: &CVector, lattice: &LatticePair) -> Result<Bracket> {
    let t = lattice.torus();
    check_generators(&[f.clone(), g.clone()], t)?;
    let (fh, gh) = (fourier::forward(t, f), fourier::forward(t, g));
    Ok(Bracket {
        shape: lattice.fiber_shape(),
        values: (0..lattice.fiber_count())
            .map(|x| bracket_hat(&fh, &gh, lattice, x))
            .collect(),
    })
}

/// Cross-Gram matrices `[f_n, g_m](x)` on every fiber.
#[derive(Clone, Debug)]
pub struct FiberGram {
    pub shape: [usize; MAX_DIM],
    pub fibers: Vec<CMatrix>,
    /// `sup_x ||G(x)||`.
    pub sup_norm: f64,
    /// `sup_x ||G(x)^{-1}||`; infinite when some fiber is singular.
    pub sup_inverse_norm: f64,
    /// Fiber with the smallest singular value, and that value.
    pub worst_fiber: Vec<usize>,
    pub smallest_singular_value: f64,
}

impl FiberGram {
    /// Whether every fiber is invertible relative to the largest fiber norm.
    pub fn uniformly_invertible(&self) -> bool {
        self.smallest_singular_value > RANK_TOLERANCE * self.sup_norm
    }
}

fn hats(generators: &[CVector], t: &Torus) -> Vec<CVector> {
    generators.iter().map(|g| fourier::forward(t, g)).collect()
}

/// Per-fiber cross-Gram matrices; a singular fiber reports an infinite inverse norm.
pub fn fiber_gram(f: &[CVector], g: &[CVector], lattice: &LatticePair) -> Result<FiberGram> {
    let t = lattice.torus();
    check_generators(f, t)?;
    check_generators(g, t)?;
    if f.len() != g.len() {
        return Err(Error::LengthMismatch {
            what: "generator counts",
            left: f.len(),
            right: g.len(),
        });
    }
    let (fh, gh) = (hats(f, t), hats(g, t));
    let n = f.len();
    let fibers: Vec<(CMatrix, f64, f64)> = (0..lattice.fiber_count())
        .into_par_iter()
        .map(|x| {
            let m = CMatrix::from_fn(n, n, |a, b| bracket_hat(&fh[a], &gh[b], lattice, x));
            let sv = m.singular_values();
            let (smax, smin) = (sv.max(), sv.min());
            (m, smax, smin)
        })
        .collect();
    let sup_norm = fibers.iter().map(|f| f.1).fold(0.0, f64::max);
    let (worst, smin) = fibers
        .iter()
        .enumerate()
        .map(|(x, f)| (x, f.2))
        .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
    let singular = smin <= RANK_TOLERANCE * sup_norm;
    Ok(FiberGram {
        shape: lattice.fiber_shape(),
        sup_inverse_norm: if singular { f64::INFINITY } else { 1.0 / smin },
        fibers: fibers.into_iter().map(|f| f.0).collect(),
        sup_norm,
        worst_fiber: lattice.fiber_index(worst),
        smallest_singular_value: smin,
    })
}

/// Riesz-sequence verdict for the translates of a generator set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RieszVerdict {
    pub riesz: bool,
    pub lower: f64,
    pub upper: f64,
}

impl RieszVerdict {
    fn from_range(lower: f64, upper: f64) -> Self {
        Self {
            riesz: lower > RANK_TOLERANCE * upper,
            lower,
            upper,
        }
    }
}

/// Riesz bounds from the fiber spectra, which equal the Gram spectrum times the lattice volume.
pub fn fiber_verdict(generators: &[CVector], lattice: &LatticePair) -> Result<RieszVerdict> {
    let fg = fiber_gram(generators, generators, lattice)?;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for m in &fg.fibers {
        let (ev, _) = eigh(m);
        lo = lo.min(ev[0]);
        hi = hi.max(ev[ev.len() - 1]);
    }
    let vol = lattice.volume();
    Ok(RieszVerdict::from_range(lo.max(0.0) / vol, hi / vol))
}

/// Riesz bounds from the Gram matrix of all translates.
pub fn direct_verdict(generators: &[CVector], lattice: &LatticePair) -> Result<RieszVerdict> {
    let fam = translates(generators, lattice)?;
    let h = C64::new(lattice.torus().cell_volume(), 0.0);
    let info = SpectrumInfo::of_hermitian(&(fam.atoms().ad_mul(fam.atoms()) * h));
    Ok(RieszVerdict::from_range(info.smallest().max(0.0), info.upper()))
}

/// Dual generators `hat psi_m = vol sum_n (G(x)^{-1})_{m,n} hat f_n` for the cross-Gram
/// `G(x)_{n,m} = [f_n, g_m](x)`, so that `sum <f, g_m(. - lambda)> psi_m(. - lambda) = f`
/// on the span of the translates of `f`.
pub fn fiber_duals(f: &[CVector], g: &[CVector], lattice: &LatticePair, system: usize) -> Result<Vec<CVector>> {
    let t = lattice.torus();
    let fg = fiber_gram(f, g, lattice)?;
    if !fg.uniformly_invertible() {
        return Err(Error::SingularFiber {
            system,
            fiber: fg.worst_fiber,
            sigma_min: fg.smallest_singular_value,
        });
    }
    let inverses: Vec<CMatrix> = fg
        .fibers
        .iter()
        .map(|m| m.clone().try_inverse().expect("fiber checked invertible"))
        .collect();
    let fh = hats(f, t);
    let vol = C64::new(lattice.volume(), 0.0);
    Ok((0..f.len())
        .map(|m| {
            let hat = CVector::from_fn(t.len(), |i, _| {
                let inv = &inverses[lattice.fiber_of(i)];
                (0..f.len()).map(|n| inv[(m, n)] * fh[n][i]).sum::<C64>() * vol
            });
            fourier::inverse(t, &hat)
        })
        .collect())
}

/// Reference generators, donor generator families and the covering to quilt them over.
#[derive(Clone, Debug)]
pub struct SisProblem {
    pub lattice: LatticePair,
    pub reference: Vec<CVector>,
    pub donors: Vec<Vec<CVector>>,
    /// Declared envelope for every generator, centred at its lattice point.
    pub envelope: Envelope,
    pub covering: Covering,
}

/// Fiber diagnostics of one system; system 0 is the reference, donor `i` is system `i + 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberSummary {
    pub system: usize,
    pub sup_norm: f64,
    pub sup_inverse_norm: f64,
    pub smallest_singular_value: f64,
}

/// Quilting result for translate systems.
#[derive(Clone, Debug)]
pub struct SisReport {
    pub reference_bounds: RieszVerdict,
    pub fibers: Vec<FiberSummary>,
    pub table: SweepTable,
    pub certification: Option<Certification>,
}

/// Quilt the donor translate systems over the covering and sweep the radius.
///
/// Refuses with [`Error::SingularFiber`] when the reference or any donor cross-Gram has a
/// singular fiber.
pub fn quilt_sis(problem: &SisProblem, radii: &[f64], test_functions: &[CVector]) -> Result<SisReport> {
    let lat = &problem.lattice;
    let reference = translates(&problem.reference, lat)?.with_envelope(problem.envelope)?;
    let own = fiber_gram(&problem.reference, &problem.reference, lat)?;
    let mut fibers = vec![summary(0, &own)];
    if !own.uniformly_invertible() {
        return Err(Error::SingularFiber {
            system: 0,
            fiber: own.worst_fiber,
            sigma_min: own.smallest_singular_value,
        });
    }
    let basis = span_basis(&reference)?;
    let mut pairs = Vec::with_capacity(problem.donors.len());
    for (i, g) in problem.donors.iter().enumerate() {
        let fg = fiber_gram(&problem.reference, g, lat)?;
        fibers.push(summary(i + 1, &fg));
        let atoms = translates(g, lat)?.with_envelope(problem.envelope)?;
        let duals = translates(&fiber_duals(&problem.reference, g, lat, i + 1)?, lat)?;
        let c = atoms.atoms().ad_mul(&basis) * C64::new(lat.torus().cell_volume(), 0.0);
        let info = SpectrumInfo::of_hermitian(&c.ad_mul(&c));
        pairs.push(FramePair {
            atoms,
            duals,
            lower_bound: info.smallest().max(0.0),
            upper_bound: info.upper(),
        });
    }
    let pou = build_partition(&problem.covering)?;
    let template = QuiltedSystem::new(pairs, problem.covering.clone(), 0.0)?;
    let table = error_sweep(
        &template,
        &pou,
        radii,
        test_functions,
        &basis,
        2.0,
        &crate::grid::Weight::unit(),
    )?;
    let certification = certify(&template, &pou, radii, &basis)?;
    let vol = lat.volume();
    let reference_bounds = RieszVerdict::from_range(
        own.fibers.iter().map(|m| eigh(m).0[0]).fold(f64::INFINITY, f64::min).max(0.0) / vol,
        own.sup_norm / vol,
    );
    Ok(SisReport {
        reference_bounds,
        fibers,
        table,
        certification,
    })
}

fn summary(system: usize, fg: &FiberGram) -> FiberSummary {
    FiberSummary {
        system,
        sup_norm: fg.sup_norm,
        sup_inverse_norm: fg.sup_inverse_norm,
        smallest_singular_value: fg.smallest_singular_value,
    }
}
