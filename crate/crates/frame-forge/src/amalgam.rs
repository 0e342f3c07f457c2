//! Atom families, amalgam norms of families and the Schur-type multiplier calculus.
//!
//! The local component of every amalgam norm is the supremum over a closed cube
//! `Q + x`, and integrals are Riemann sums with the grid cell volume as weight.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_exponent, lp_sum, ModeratedPair, NodeSet, NodeSetRecord, Torus, Weight, MAX_DIM};
use crate::{CMatrix, CVector, C64};

/// Declared decay `|f_k(x)| <= C (1 + |x - k|)^{-exponent}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "C")]
    pub constant: f64,
    pub exponent: f64,
}

/// One sampled function per node. Atoms are the columns of a `grid points x nodes` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomFamily {
    nodes: NodeSet,
    atoms: CMatrix,
    envelope: Option<Envelope>,
}

impl AtomFamily {
    pub fn new(nodes: NodeSet, atoms: CMatrix) -> Result<Self> {
        if atoms.nrows() != nodes.torus().len() {
            return Err(Error::LengthMismatch {
                what: "atom samples and grid",
                left: atoms.nrows(),
                right: nodes.torus().len(),
            });
        }
        if atoms.ncols() != nodes.len() {
            return Err(Error::LengthMismatch {
                what: "atoms and nodes",
                left: atoms.ncols(),
                right: nodes.len(),
            });
        }
        Ok(Self {
            nodes,
            atoms,
            envelope: None,
        })
    }

    /// Build atoms from `f(node grid index, sample grid index)`.
    pub fn from_fn<F>(nodes: NodeSet, f: F) -> Self
    where
        F: Fn(usize, usize) -> C64 + Sync,
    {
        let n = nodes.torus().len();
        let cols: Vec<Vec<C64>> = nodes
            .points()
            .par_iter()
            .map(|&k| (0..n).map(|x| f(k, x)).collect())
            .collect();
        let atoms = CMatrix::from_fn(n, nodes.len(), |i, j| cols[j][i]);
        Self {
            nodes,
            atoms,
            envelope: None,
        }
    }

    /// Attach a decay envelope after checking it at every grid point.
    pub fn with_envelope(mut self, envelope: Envelope) -> Result<Self> {
        if let Some((atom, point, value, bound)) = self.envelope_violation(&envelope) {
            return Err(Error::EnvelopeViolation {
                atom,
                point,
                value,
                bound,
            });
        }
        self.envelope = Some(envelope);
        Ok(self)
    }

    /// Attach the envelope with the smallest constant valid on the grid for `exponent`.
    pub fn with_fitted_envelope(self, exponent: f64) -> Result<Self> {
        let constant = self.tightest_constant(exponent) * (1.0 + 1e-12);
        self.with_envelope(Envelope { constant, exponent })
    }

    /// Drop any declared envelope.
    pub fn without_envelope(mut self) -> Self {
        self.envelope = None;
        self
    }

    /// `max_k max_x |f_k(x)| (1 + |x - k|)^exponent`.
    pub fn tightest_constant(&self, exponent: f64) -> f64 {
        let t = self.torus();
        let w = Weight::polynomial(exponent);
        (0..self.len())
            .map(|k| {
                let node = self.nodes.points()[k];
                (0..t.len())
                    .map(|x| self.atoms[(x, k)].norm() * w.between(t, x, node))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// The worst offending `(atom, point, |f|, bound)` if the envelope fails anywhere.
    pub fn envelope_violation(&self, envelope: &Envelope) -> Option<(usize, usize, f64, f64)> {
        let t = self.torus();
        let w = Weight::polynomial(-envelope.exponent);
        let mut worst: Option<(usize, usize, f64, f64)> = None;
        let mut worst_excess = 1.0;
        for k in 0..self.len() {
            let node = self.nodes.points()[k];
            for x in 0..t.len() {
                let bound = envelope.constant * w.between(t, x, node);
                let value = self.atoms[(x, k)].norm();
                if value > bound {
                    let excess = value / bound;
                    if excess > worst_excess {
                        worst_excess = excess;
                        worst = Some((k, x, value, bound));
                    }
                }
            }
        }
        worst
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn torus(&self) -> &Torus {
        self.nodes.torus()
    }

    pub fn atoms(&self) -> &CMatrix {
        &self.atoms
    }

    pub fn envelope(&self) -> Option<Envelope> {
        self.envelope
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The `k`-th atom as a grid function.
    pub fn atom(&self, k: usize) -> CVector {
        self.atoms.column(k).into_owned()
    }

    /// Family with every atom multiplied by `s`; a declared envelope scales along.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            nodes: self.nodes.clone(),
            atoms: &self.atoms * C64::new(s, 0.0),
            envelope: self.envelope.map(|e| Envelope {
                constant: e.constant * s.abs(),
                exponent: e.exponent,
            }),
        }
    }

    /// Union with multiplicity. The envelope is kept only if both agree.
    pub fn concat(&self, other: &AtomFamily) -> Result<Self> {
        if self.torus() != other.torus() {
            return Err(Error::InvalidDomain("families live on different grids".into()));
        }
        let n = self.atoms.nrows();
        let mut atoms = CMatrix::zeros(n, self.len() + other.len());
        atoms.columns_mut(0, self.len()).copy_from(&self.atoms);
        atoms.columns_mut(self.len(), other.len()).copy_from(&other.atoms);
        let envelope = match (self.envelope, other.envelope) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        };
        Ok(Self {
            nodes: self.nodes.union(&other.nodes),
            atoms,
            envelope,
        })
    }

    /// Sub-family at the given entry indices.
    pub fn subset(&self, entries: &[usize]) -> Self {
        Self {
            nodes: self.nodes.subset(entries),
            atoms: self.atoms.select_columns(entries),
            envelope: self.envelope,
        }
    }

    /// Same nodes with new atoms (no envelope).
    pub fn with_atoms(&self, atoms: CMatrix) -> Result<Self> {
        Self::new(self.nodes.clone(), atoms)
    }

    pub fn to_record(&self) -> AtomFamilyRecord {
        AtomFamilyRecord {
            nodes: NodeSetRecord::from_nodes(&self.nodes, None),
            atoms: (0..self.len())
                .map(|k| self.atoms.column(k).iter().map(|z| [z.re, z.im]).collect())
                .collect(),
            envelope: self.envelope,
        }
    }

    pub fn from_record(record: &AtomFamilyRecord) -> Result<Self> {
        let nodes = record.nodes.to_nodes()?;
        let n = nodes.torus().len();
        if record.atoms.len() != nodes.len() {
            return Err(Error::LengthMismatch {
                what: "atoms and nodes",
                left: record.atoms.len(),
                right: nodes.len(),
            });
        }
        if let Some(bad) = record.atoms.iter().find(|a| a.len() != n) {
            return Err(Error::LengthMismatch {
                what: "atom samples and grid",
                left: bad.len(),
                right: n,
            });
        }
        let atoms = CMatrix::from_fn(n, nodes.len(), |i, j| {
            let [re, im] = record.atoms[j][i];
            C64::new(re, im)
        });
        let family = Self::new(nodes, atoms)?;
        match record.envelope {
            Some(e) => family.with_envelope(e),
            None => Ok(family),
        }
    }
}

/// Structured-text form of an atom family: node set, one `[re, im]` array per atom, envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomFamilyRecord {
    pub nodes: NodeSetRecord,
    pub atoms: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<Envelope>,
}

/// Grid inner product `<f, g> = h^d sum f conj(g)`.
pub fn inner(torus: &Torus, f: &CVector, g: &CVector) -> C64 {
    g.dotc(f) * torus.cell_volume()
}

/// Grid `L^2` norm.
pub fn l2_norm(torus: &Torus, f: &CVector) -> f64 {
    (f.norm_squared() * torus.cell_volume()).sqrt()
}

/// Weighted norm `(h^d sum |f(x)|^p v(x)^p)^(1/p)`, or `max |f| v` for infinite `p`.
pub fn lp_norm(torus: &Torus, f: &CVector, p: f64, v: &Weight) -> Result<f64> {
    check_exponent(p)?;
    let vs = v.sample(torus);
    let raw = lp_sum(f.iter().zip(&vs).map(|(z, w)| z.norm() * w), p);
    Ok(if p.is_infinite() {
        raw
    } else {
        raw * torus.cell_volume().powf(1.0 / p)
    })
}

/// Amalgam norm of a family with its two components.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyAmalgamNorm {
    pub value: f64,
    pub per_node_l1: Vec<f64>,
    pub sup_sum: f64,
    pub window_cube_side: f64,
}

/// Number of extra grid steps spanned by a closed cube of the given side along each axis.
fn cube_reach(torus: &Torus, cube_side: f64) -> [usize; MAX_DIM] {
    let mut r = [0usize; MAX_DIM];
    for (a, ra) in r.iter_mut().enumerate().take(torus.dim()) {
        *ra = ((cube_side / torus.step(a)) + 1e-9).floor() as usize;
    }
    r
}

/// `M(x) = max over the closed cube [x, x + side]^d of values`.
pub fn local_sup(torus: &Torus, values: &[f64], cube_side: f64) -> Vec<f64> {
    let reach = cube_reach(torus, cube_side);
    let mut cur = values.to_vec();
    for axis in 0..torus.dim() {
        let span = (reach[axis] + 1).min(torus.points_per_axis(axis));
        let src = cur.clone();
        for (idx, c) in cur.iter_mut().enumerate() {
            let mut steps = [0i64; MAX_DIM];
            let mut m: f64 = 0.0;
            for k in 0..span {
                steps[axis] = k as i64;
                m = m.max(src[torus.shift(idx, steps)]);
            }
            *c = m;
        }
    }
    cur
}

fn check_cube_side(torus: &Torus, cube_side: f64) -> Result<()> {
    let hmax = (0..torus.dim()).map(|a| torus.step(a)).fold(0.0, f64::max);
    let limit = torus.min_side() / 4.0;
    if !(cube_side >= hmax * (1.0 - 1e-12) && cube_side <= limit * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter {
            name: "cube_side",
            reason: format!("{cube_side} is outside [{hmax}, {limit}]"),
        });
    }
    Ok(())
}

/// Control functions `g_k(x) = sup_{Q+x} |f_k| * w(x - k)`, one vector per atom.
fn control_functions(family: &AtomFamily, w: &Weight, cube_side: f64) -> Vec<Vec<f64>> {
    let t = family.torus();
    (0..family.len())
        .into_par_iter()
        .map(|k| {
            let node = family.nodes().points()[k];
            let mags: Vec<f64> = family.atoms().column(k).iter().map(|z| z.norm()).collect();
            let sup = local_sup(t, &mags, cube_side);
            sup.iter()
                .enumerate()
                .map(|(x, s)| s * w.between(t, x, node))
                .collect()
        })
        .collect()
}

/// `max(sup_k ||g_k||_1, max_x sum_k g_k(x))` with `g_k(x) = sup_{Q+x}|f_k| w(x-k)` and `Q = [0, cube_side]^d`.
pub fn family_amalgam_norm(family: &AtomFamily, w: &Weight, cube_side: f64) -> Result<FamilyAmalgamNorm> {
    let t = family.torus();
    check_cube_side(t, cube_side)?;
    let g = control_functions(family, w, cube_side);
    let vol = t.cell_volume();
    let per_node_l1: Vec<f64> = g.iter().map(|gk| gk.iter().sum::<f64>() * vol).collect();
    let mut sums = vec![0.0; t.len()];
    for gk in &g {
        for (s, v) in sums.iter_mut().zip(gk) {
            *s += v;
        }
    }
    let sup_sum = sums.into_iter().fold(0.0, f64::max);
    let value = per_node_l1.iter().cloned().fold(sup_sum, f64::max);
    Ok(FamilyAmalgamNorm {
        value,
        per_node_l1,
        sup_sum,
        window_cube_side: cube_side,
    })
}

/// Single-function amalgam norm `|| sup_{Q+x}|f| v(x) ||_{L^p}`.
pub fn function_amalgam_norm(torus: &Torus, f: &CVector, p: f64, v: &Weight, cube_side: f64) -> Result<f64> {
    check_exponent(p)?;
    check_cube_side(torus, cube_side)?;
    let mags: Vec<f64> = f.iter().map(|z| z.norm()).collect();
    let sup = local_sup(torus, &mags, cube_side);
    let terms = sup.iter().enumerate().map(|(x, s)| s * v.value(torus, x));
    let raw = lp_sum(terms, p);
    Ok(if p.is_infinite() {
        raw
    } else {
        raw * torus.cell_volume().powf(1.0 / p)
    })
}

/// A measured inequality `measured <= bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub measured: f64,
    pub bound: f64,
}

impl BoundCheck {
    /// `measured / bound`; zero when both vanish.
    pub fn ratio(&self) -> f64 {
        if self.bound == 0.0 {
            if self.measured == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.measured / self.bound
        }
    }

    pub fn holds(&self) -> bool {
        self.measured <= self.bound * (1.0 + 1e-10) + 1e-300
    }
}

/// `c . F = sum_k c_k f_k`.
pub fn synthesize(c: &[C64], family: &AtomFamily) -> Result<CVector> {
    if c.len() != family.len() {
        return Err(Error::LengthMismatch {
            what: "coefficients and atoms",
            left: c.len(),
            right: family.len(),
        });
    }
    Ok(family.atoms() * CVector::from_column_slice(c))
}

/// Synthesis with the amalgam bound `||c.F||_{W(L^inf, L^p_v)} <= C ||c||_{l^p_v} ||F||_{W(L^inf, L^1_w)}`.
pub fn synthesize_checked(
    c: &[C64],
    family: &AtomFamily,
    p: f64,
    pair: &ModeratedPair,
    cube_side: f64,
) -> Result<(CVector, BoundCheck)> {
    let f = synthesize(c, family)?;
    let t = family.torus();
    let measured = function_amalgam_norm(t, &f, p, &pair.v, cube_side)?;
    let cn = crate::grid::weighted_seq_norm(c, family.nodes(), p, &pair.v)?;
    let fam = family_amalgam_norm(family, &pair.w, cube_side)?;
    Ok((
        f,
        BoundCheck {
            measured,
            bound: pair.constant * cn * fam.value,
        },
    ))
}

/// A matrix indexed by two node sets.
#[derive(Clone, Debug, PartialEq)]
pub struct SchurMatrix {
    pub rows: NodeSet,
    pub cols: NodeSet,
    pub entries: CMatrix,
}

impl SchurMatrix {
    pub fn new(rows: NodeSet, cols: NodeSet, entries: CMatrix) -> Result<Self> {
        if entries.nrows() != rows.len() || entries.ncols() != cols.len() {
            return Err(Error::LengthMismatch {
                what: "matrix shape and node sets",
                left: entries.nrows() * entries.ncols(),
                right: rows.len() * cols.len(),
            });
        }
        Ok(Self { rows, cols, entries })
    }

    /// `max(sup_k sum_j |c_kj| w(k-j), sup_j sum_k |c_kj| w(k-j))`.
    pub fn schur_norm(&self, w: &Weight) -> f64 {
        let t = self.rows.torus();
        let (nr, nc) = self.entries.shape();
        let mut row = vec![0.0; nr];
        let mut col = vec![0.0; nc];
        for j in 0..nc {
            let pj = self.cols.points()[j];
            for k in 0..nr {
                let a = self.entries[(k, j)].norm() * w.between(t, self.rows.points()[k], pj);
                row[k] += a;
                col[j] += a;
            }
        }
        row.into_iter().chain(col).fold(0.0, f64::max)
    }

    /// Matrix product, indexed by the outer node sets.
    pub fn compose(&self, other: &SchurMatrix) -> Result<SchurMatrix> {
        if self.entries.ncols() != other.entries.nrows() {
            return Err(Error::LengthMismatch {
                what: "matrix product",
                left: self.entries.ncols(),
                right: other.entries.nrows(),
            });
        }
        SchurMatrix::new(self.rows.clone(), other.cols.clone(), &self.entries * &other.entries)
    }

    pub fn to_record(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.entries.nrows())
            .map(|i| self.entries.row(i).iter().map(|z| [z.re, z.im]).collect())
            .collect()
    }
}

/// `g_k = sum_j c_kj f_j`, indexed by the row nodes of `c`.
pub fn matrix_apply(c: &SchurMatrix, family: &AtomFamily) -> Result<AtomFamily> {
    if c.cols.points() != family.nodes().points() {
        return Err(Error::InvalidParameter {
            name: "matrix columns",
            reason: "column node set differs from the family's nodes".into(),
        });
    }
    AtomFamily::new(c.rows.clone(), family.atoms() * c.entries.transpose())
}

/// [`matrix_apply`] with the bound `||C.F||_W <= ||C||_{S_w} ||F||_W`.
pub fn matrix_apply_checked(
    c: &SchurMatrix,
    family: &AtomFamily,
    w: &Weight,
    cube_side: f64,
) -> Result<(AtomFamily, BoundCheck)> {
    let g = matrix_apply(c, family)?;
    let measured = family_amalgam_norm(&g, w, cube_side)?.value;
    let bound = c.schur_norm(w) * family_amalgam_norm(family, w, cube_side)?.value;
    Ok((g, BoundCheck { measured, bound }))
}

/// `C_kj = <f_k, g_j>`.
pub fn cross_correlation(f: &AtomFamily, g: &AtomFamily) -> Result<SchurMatrix> {
    if f.torus() != g.torus() {
        return Err(Error::InvalidDomain("families live on different grids".into()));
    }
    let vol = C64::new(f.torus().cell_volume(), 0.0);
    let entries = f.atoms().transpose() * g.atoms().map(|z| z.conj()) * vol;
    SchurMatrix::new(f.nodes().clone(), g.nodes().clone(), entries)
}

/// Cross-correlation with its Schur norm measured against `||F||_W ||G||_W`.
pub fn cross_correlation_checked(
    f: &AtomFamily,
    g: &AtomFamily,
    w: &Weight,
    cube_side: f64,
) -> Result<(SchurMatrix, BoundCheck)> {
    let c = cross_correlation(f, g)?;
    let measured = c.schur_norm(w);
    let bound = family_amalgam_norm(f, w, cube_side)?.value * family_amalgam_norm(g, w, cube_side)?.value;
    Ok((c, BoundCheck { measured, bound }))
}

/// Analysis sequence `c_k = <f, f_k>`.
pub fn analyze(f: &CVector, family: &AtomFamily) -> Result<Vec<C64>> {
    if f.len() != family.torus().len() {
        return Err(Error::LengthMismatch {
            what: "function samples and grid",
            left: f.len(),
            right: family.torus().len(),
        });
    }
    let c = family.atoms().ad_mul(f) * C64::new(family.torus().cell_volume(), 0.0);
    Ok(c.iter().cloned().collect())
}

/// Analysis with `||c||_{l^p_v}` measured against `||f||_{L^p_v} ||F||_W`.
pub fn analyze_checked(
    f: &CVector,
    family: &AtomFamily,
    p: f64,
    pair: &ModeratedPair,
    cube_side: f64,
) -> Result<(Vec<C64>, BoundCheck)> {
    let c = analyze(f, family)?;
    let measured = crate::grid::weighted_seq_norm(&c, family.nodes(), p, &pair.v)?;
    let bound = lp_norm(family.torus(), f, p, &pair.v)? * family_amalgam_norm(family, &pair.w, cube_side)?.value;
    Ok((c, BoundCheck { measured, bound }))
}

/// Both halves of the Schur interpolation inequality for one exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SchurBoundReport {
    pub p: f64,
    /// `||sum c_k f_k||_p` against `||c||_p A^(1/p) S^(1/p')`.
    pub synthesis: BoundCheck,
    /// `||(int g f_k)_k||_p` against `||g||_p A^(1/p') S^(1/p)`.
    pub analysis: BoundCheck,
}

/// Check the Schur interpolation inequality on given data.
///
/// `A = sup_k ||f_k||_1`, `S = max_x sum_k |f_k(x)|`; for `p = 1` the exponent `1/p'` is zero.
pub fn schur_interpolation_check(
    torus: &Torus,
    family: &CMatrix,
    c: &[C64],
    g: &[f64],
    p: f64,
) -> Result<SchurBoundReport> {
    check_exponent(p)?;
    if family.nrows() != torus.len() || g.len() != torus.len() || c.len() != family.ncols() {
        return Err(Error::LengthMismatch {
            what: "schur data",
            left: family.nrows(),
            right: torus.len(),
        });
    }
    let vol = torus.cell_volume();
    let a = (0..family.ncols())
        .map(|k| family.column(k).iter().map(|z| z.norm()).sum::<f64>() * vol)
        .fold(0.0, f64::max);
    let s = (0..family.nrows())
        .map(|x| family.row(x).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
    let inv_q = 1.0 - inv_p;
    let pw = |base: f64, e: f64| if e == 0.0 { 1.0 } else { base.powf(e) };

    let fsum = family * CVector::from_column_slice(c);
    let unit = Weight::unit();
    let lhs_a = lp_norm(torus, &fsum, p, &unit)?;
    let c_norm = lp_sum(c.iter().map(|z| z.norm()), p);
    let synthesis = BoundCheck {
        measured: lhs_a,
        bound: c_norm * pw(a, inv_p) * pw(s, inv_q),
    };

    let coeffs: Vec<f64> = (0..family.ncols())
        .map(|k| {
            family
                .column(k)
                .iter()
                .zip(g)
                .map(|(z, gx)| z * *gx)
                .sum::<C64>()
                .norm()
                * vol
        })
        .collect();
    let lhs_b = lp_sum(coeffs.into_iter(), p);
    let gv = CVector::from_iterator(g.len(), g.iter().map(|&x| C64::new(x, 0.0)));
    let analysis = BoundCheck {
        measured: lhs_b,
        bound: lp_norm(torus, &gv, p, &unit)? * pw(a, inv_q) * pw(s, inv_p),
    };
    Ok(SchurBoundReport { p, synthesis, analysis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::gaussian_bumps;
    use crate::grid::rel_separation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn torus() -> Torus {
        Torus::new(1, 16.0, 128).unwrap()
    }

    fn integers(t: &Torus) -> NodeSet {
        NodeSet::lattice(t, &[1.0], &[0.0]).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    // Unit-norm indicators of the given grid cells.
    fn cell_indicators(t: &Torus, cells: &[usize]) -> AtomFamily {
        let nodes = NodeSet::from_grid_points(t, cells.to_vec()).unwrap();
        let amp = 1.0 / t.cell_volume().sqrt();
        AtomFamily::from_fn(nodes, move |k, x| C64::new(if x == k { amp } else { 0.0 }, 0.0))
    }

    fn random_banded(rng: &mut ChaCha8Rng, nodes: &NodeSet, band: usize) -> SchurMatrix {
        let n = nodes.len();
        let m = CMatrix::from_fn(n, n, |i, j| {
            let d = (i as i64 - j as i64).unsigned_abs() as usize;
            let d = d.min(n - d);
            if d <= band {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            } else {
                C64::new(0.0, 0.0)
            }
        });
        SchurMatrix::new(nodes.clone(), nodes.clone(), m).unwrap()
    }

    #[test]
    fn indicator_cell_amalgam_norm() {
        let t = torus();
        let nodes = NodeSet::from_grid_points(&t, vec![0]).unwrap();
        let fam = AtomFamily::from_fn(nodes, |_, x| C64::new(if x == 0 { 1.0 } else { 0.0 }, 0.0));
        let n = family_amalgam_norm(&fam, &Weight::unit(), 1.0).unwrap();
        // Anchors x whose closed window [x, x + 1] contains the origin.
        let h = t.step(0);
        let hits = (0..t.len())
            .filter(|&x| {
                let off = (16.0 - t.coords(x)[0]) % 16.0;
                off <= 1.0 + 1e-9
            })
            .count();
        assert!((n.per_node_l1[0] - hits as f64 * h).abs() < 1e-12);
        assert!((n.per_node_l1[0] - (1.0 + h)).abs() < 1e-12);
    }

    #[test]
    fn translate_family_norm_within_separation_bound() {
        let t = torus();
        let nodes = integers(&t);
        let fam = gaussian_bumps(&nodes, 0.5);
        let w = Weight::unit();
        let family = family_amalgam_norm(&fam, &w, 1.0).unwrap().value;
        let f = fam.atom(0);
        let single = function_amalgam_norm(&t, &f, 1.0, &w, 1.0).unwrap();
        let control_peak = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
        // Sum of a unimodal control over a unit-spaced set is at most integral plus peak.
        let k = 1.0 + control_peak / single;
        let ratio = family / single;
        let rel = rel_separation(&nodes).unwrap() as f64;
        assert!(ratio >= 1.0 - 1e-12, "{ratio}");
        assert!(ratio <= k * rel, "{ratio} > {}", k * rel);
    }

    #[test]
    fn empty_family_norm_is_zero() {
        let t = torus();
        let nodes = NodeSet::from_grid_points(&t, vec![]).unwrap();
        let fam = AtomFamily::new(nodes, CMatrix::zeros(t.len(), 0)).unwrap();
        assert_eq!(family_amalgam_norm(&fam, &Weight::unit(), 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn cube_side_outside_range_is_rejected() {
        let fam = gaussian_bumps(&integers(&torus()), 0.5);
        assert!(family_amalgam_norm(&fam, &Weight::unit(), 0.01).is_err());
        assert!(family_amalgam_norm(&fam, &Weight::unit(), 5.0).is_err());
    }

    #[test]
    fn window_sides_give_equivalent_norms() {
        let fam = gaussian_bumps(&integers(&torus()), 0.5);
        let w = Weight::unit();
        let small = family_amalgam_norm(&fam, &w, 0.5).unwrap().value;
        let large = family_amalgam_norm(&fam, &w, 1.0).unwrap().value;
        // A closed cube of side 1 is covered by two cubes of side 1/2.
        let ratio = large / small;
        assert!((1.0..=2.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn synthesis_examples() {
        let t = torus();
        let fam = gaussian_bumps(&integers(&t), 0.5);
        let mut delta = vec![C64::new(0.0, 0.0); fam.len()];
        delta[3] = C64::new(1.0, 0.0);
        assert_eq!(synthesize(&delta, &fam).unwrap(), fam.atom(3));
        let zero = vec![C64::new(0.0, 0.0); fam.len()];
        assert!(synthesize(&zero, &fam).unwrap().iter().all(|z| z.norm() == 0.0));
        assert!(synthesize(&zero[1..], &fam).is_err());
    }

    #[test]
    fn synthesis_bound_holds_for_random_coefficients() {
        let t = torus();
        let fam = gaussian_bumps(&integers(&t), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pair = ModeratedPair::strict(1.0, 1.0).unwrap();
        for p in [1.0, 2.0, f64::INFINITY] {
            let c = random_vec(&mut rng, fam.len());
            let (_, check) = synthesize_checked(&c, &fam, p, &pair, 1.0).unwrap();
            assert!(check.holds(), "p={p}: {check:?}");
            assert!(check.ratio() <= pair.constant);
        }
    }

    #[test]
    fn matrix_apply_identity_and_permutation() {
        let t = torus();
        let nodes = integers(&t);
        let fam = gaussian_bumps(&nodes, 0.5);
        let id = SchurMatrix::new(nodes.clone(), nodes.clone(), CMatrix::identity(16, 16)).unwrap();
        assert_eq!(matrix_apply(&id, &fam).unwrap().atoms(), fam.atoms());

        let twin = NodeSet::from_grid_points(&t, vec![24, 24]).unwrap();
        let pair = AtomFamily::from_fn(twin.clone(), |_, x| C64::new((x as f64 * 0.1).sin(), 0.0));
        let pair = pair.with_atoms({
            let mut a = pair.atoms().clone();
            a.column_mut(1).scale_mut(2.0);
            a
        })
        .unwrap();
        let swap = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        );
        let p = SchurMatrix::new(twin.clone(), twin, swap).unwrap();
        let out = matrix_apply(&p, &pair).unwrap();
        assert_eq!(out.atom(0), pair.atom(1));
        assert_eq!(out.atom(1), pair.atom(0));
        let w = Weight::polynomial(1.0);
        assert_eq!(
            family_amalgam_norm(&out, &w, 1.0).unwrap().value,
            family_amalgam_norm(&pair, &w, 1.0).unwrap().value
        );
    }

    #[test]
    fn matrix_apply_bound_for_banded_matrices() {
        let t = torus();
        let nodes = integers(&t);
        let fam = gaussian_bumps(&nodes, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Weight::polynomial(1.0);
        for band in [0, 1, 3] {
            let c = random_banded(&mut rng, &nodes, band);
            let (_, check) = matrix_apply_checked(&c, &fam, &w, 1.0).unwrap();
            assert!(check.holds(), "{check:?}");
        }
    }

    #[test]
    fn cross_correlation_examples() {
        let t = torus();
        let ind = cell_indicators(&t, &[0, 5, 9, 40]);
        let c = cross_correlation(&ind, &ind).unwrap();
        assert!((c.entries.clone() - CMatrix::identity(4, 4)).norm() < 1e-12);
        let one = cell_indicators(&t, &[7]);
        assert!((cross_correlation(&one, &one).unwrap().entries[(0, 0)] - 1.0).norm() < 1e-12);

        let fam = gaussian_bumps(&integers(&t), 0.5);
        let (c, check) = cross_correlation_checked(&fam, &fam, &Weight::polynomial(1.0), 1.0).unwrap();
        assert!(c.schur_norm(&Weight::polynomial(1.0)).is_finite());
        assert!(check.holds(), "{check:?}");
    }

    #[test]
    fn analysis_examples() {
        let t = torus();
        let ind = cell_indicators(&t, &[0, 5, 9]);
        let mut f = CVector::zeros(t.len());
        f[3] = C64::new(1.0, 0.0);
        assert!(analyze(&f, &ind).unwrap().iter().all(|z| z.norm() == 0.0));
        let c = analyze(&ind.atom(1), &ind).unwrap();
        for (k, ck) in c.iter().enumerate() {
            let want = if k == 1 { 1.0 } else { 0.0 };
            assert!((ck - want).norm() < 1e-12);
        }

        let fam = gaussian_bumps(&integers(&t), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pair = ModeratedPair::strict(1.0, 1.0).unwrap();
        for p in [1.0, 2.0, f64::INFINITY] {
            let f = CVector::from_vec(random_vec(&mut rng, t.len()));
            let (_, check) = analyze_checked(&f, &fam, p, &pair, 1.0).unwrap();
            assert!(check.holds(), "p={p}: {check:?}");
        }
    }

    #[test]
    fn schur_bound_examples() {
        let t = torus();
        let fam = gaussian_bumps(&integers(&t), 0.7);
        let ones = vec![C64::new(1.0, 0.0); fam.len()];
        let g = vec![1.0; t.len()];
        for p in [1.0, f64::INFINITY] {
            let r = schur_interpolation_check(&t, fam.atoms(), &ones, &g, p).unwrap();
            assert!(r.synthesis.holds() && r.analysis.holds(), "{r:?}");
        }
        // For p = infinity and c = 1 the synthesis bound is max_x sum_k |f_k(x)| itself.
        let r = schur_interpolation_check(&t, fam.atoms(), &ones, &g, f64::INFINITY).unwrap();
        let direct = (0..t.len())
            .map(|x| fam.atoms().row(x).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        assert!((r.synthesis.bound - direct).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let c = random_vec(&mut rng, fam.len());
            let g: Vec<f64> = (0..t.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = schur_interpolation_check(&t, fam.atoms(), &c, &g, 2.0).unwrap();
            assert!(r.synthesis.holds() && r.analysis.holds(), "{r:?}");
        }
    }

    #[test]
    fn envelope_is_checked_on_construction() {
        let t = torus();
        let fam = crate::atoms::envelope_atoms(&integers(&t), 3.0);
        assert!(fam.clone().with_envelope(Envelope { constant: 1.0, exponent: 3.0 }).is_ok());
        match fam.with_envelope(Envelope { constant: 1.0, exponent: 4.0 }) {
            Err(Error::EnvelopeViolation { value, bound, .. }) => assert!(value > bound),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn family_record_round_trip() {
        let t = torus();
        let fam = gaussian_bumps(&integers(&t), 0.5).with_fitted_envelope(4.0).unwrap();
        let json = serde_json::to_string(&fam.to_record()).unwrap();
        assert!(json.contains("\"envelope\":{\"C\":"));
        let back = AtomFamily::from_record(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.atoms(), fam.atoms());
        assert_eq!(back.envelope(), fam.envelope());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn synthesis_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let t = torus();
            let fam = gaussian_bumps(&integers(&t), 0.5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_vec(&mut rng, fam.len());
            let d = random_vec(&mut rng, fam.len());
            let mix: Vec<C64> = c.iter().zip(&d).map(|(x, y)| x * a + y * b).collect();
            let lhs = synthesize(&mix, &fam).unwrap();
            let rhs = synthesize(&c, &fam).unwrap() * C64::new(a, 0.0) + synthesize(&d, &fam).unwrap() * C64::new(b, 0.0);
            prop_assert!((lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }

        #[test]
        fn cross_correlation_is_hermitian_pairing(seed in any::<u64>()) {
            let t = torus();
            let nodes = integers(&t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = AtomFamily::new(nodes.clone(), CMatrix::from_vec(t.len(), 16, random_vec(&mut rng, t.len() * 16))).unwrap();
            let g = AtomFamily::new(nodes, CMatrix::from_vec(t.len(), 16, random_vec(&mut rng, t.len() * 16))).unwrap();
            let fg = cross_correlation(&f, &g).unwrap().entries;
            let gf = cross_correlation(&g, &f).unwrap().entries;
            prop_assert!((fg.clone() - gf.adjoint()).norm() <= 1e-12 * fg.norm());
        }

        #[test]
        fn schur_norm_is_submultiplicative(seed in any::<u64>(), s in 0.0f64..3.0) {
            let t = torus();
            let nodes = integers(&t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_banded(&mut rng, &nodes, 2);
            let b = random_banded(&mut rng, &nodes, 3);
            let w = Weight::polynomial(s);
            let ab = a.compose(&b).unwrap();
            prop_assert!(ab.schur_norm(&w) <= a.schur_norm(&w) * b.schur_norm(&w) * (1.0 + 1e-12));
        }
    }
}
