//! Coverings, partitions of unity, node selection and the approximate reconstruction
//! operator `A^r f = sum_i sum_{k in Lambda_i^r} <f, phi^i_k> psi^i_k eta_i` that glues
//! pieces of several donor frames into one quilted system.

use rayon::prelude::*;
use serde::Serialize;

use crate::amalgam::{local_sup, lp_norm, AtomFamily};
use crate::error::{Error, Result};
use crate::frame::{canonical_dual, singular_range, spectral_norm, FramePair, SpectrumInfo};
use crate::grid::{rel_separation, NodeSet, Torus, Weight, MAX_DIM};
use crate::stats::loglog_slope;
use crate::{CMatrix, CVector, C64};

/// Indexed family of grid-cell subsets `E_i`.
#[derive(Clone, Debug)]
pub struct Covering {
    torus: Torus,
    members: Vec<Vec<bool>>,
    distance: Vec<Vec<f64>>,
}

impl Covering {
    /// Regions given as lists of grid indices. The union need not be the whole grid;
    /// [`build_partition`] rejects gaps.
    pub fn new(torus: &Torus, regions: Vec<Vec<usize>>) -> Result<Self> {
        let mut members = Vec::with_capacity(regions.len());
        for cells in &regions {
            let mut m = vec![false; torus.len()];
            for &c in cells {
                if c >= torus.len() {
                    return Err(Error::InvalidParameter {
                        name: "regions",
                        reason: format!("cell {c} is outside the grid of {} points", torus.len()),
                    });
                }
                m[c] = true;
            }
            members.push(m);
        }
        let distance = members
            .par_iter()
            .map(|m| {
                let cells: Vec<usize> = (0..torus.len()).filter(|&c| m[c]).collect();
                (0..torus.len())
                    .map(|x| {
                        if m[x] {
                            0.0
                        } else {
                            cells.iter().map(|&c| torus.dist(x, c)).fold(f64::INFINITY, f64::min)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            torus: torus.clone(),
            members,
            distance,
        })
    }

    /// Regions defined by a membership predicate on coordinates.
    pub fn from_fn<F>(torus: &Torus, count: usize, member: F) -> Result<Self>
    where
        F: Fn(usize, [f64; MAX_DIM]) -> bool,
    {
        let regions = (0..count)
            .map(|i| (0..torus.len()).filter(|&x| member(i, torus.coords(x))).collect())
            .collect();
        Self::new(torus, regions)
    }

    /// The whole grid as a single region.
    pub fn whole(torus: &Torus) -> Result<Self> {
        Self::new(torus, vec![(0..torus.len()).collect()])
    }

    /// `pieces` equal slabs along `axis`, each widened by `overlap` on both ends:
    /// region `i` holds points with coordinate in `[i L/p - overlap, (i+1) L/p + overlap)` modulo `L`.
    pub fn slabs(torus: &Torus, axis: usize, pieces: usize, overlap: f64) -> Result<Self> {
        if axis >= torus.dim() || pieces == 0 {
            return Err(Error::InvalidParameter {
                name: "covering",
                reason: format!("cannot cut axis {axis} into {pieces} slabs"),
            });
        }
        let l = torus.side(axis);
        let width = l / pieces as f64;
        if !(overlap >= 0.0 && 2.0 * overlap + width < l) {
            return Err(Error::InvalidParameter {
                name: "overlap",
                reason: format!("{overlap} must be nonnegative and leave slabs shorter than the side"),
            });
        }
        Self::from_fn(torus, pieces, |i, x| {
            let start = i as f64 * width - overlap;
            let off = (x[axis] - start).rem_euclid(l);
            off < width + 2.0 * overlap - 1e-9 * l
        })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Grid indices of region `i`.
    pub fn region(&self, i: usize) -> Vec<usize> {
        (0..self.torus.len()).filter(|&x| self.members[i][x]).collect()
    }

    pub fn contains(&self, i: usize, x: usize) -> bool {
        self.members[i][x]
    }

    /// Torus distance from every grid point to region `i`.
    pub fn distance_to(&self, i: usize) -> &[f64] {
        &self.distance[i]
    }

    /// First grid point in no region.
    pub fn uncovered(&self) -> Option<usize> {
        (0..self.torus.len()).find(|&x| self.members.iter().all(|m| !m[x]))
    }

    /// `#_E`: the largest number of regions sharing a grid point.
    pub fn overlap_count(&self) -> usize {
        (0..self.torus.len())
            .map(|x| self.members.iter().filter(|m| m[x]).count())
            .max()
            .unwrap_or(0)
    }

    /// `#_{E,Q}`: the largest number of regions meeting a cube `[0, cube_side]^d + x`.
    pub fn local_finiteness(&self, cube_side: f64) -> usize {
        let mut counts = vec![0usize; self.torus.len()];
        for m in &self.members {
            let ind: Vec<f64> = m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            for (c, hit) in counts.iter_mut().zip(local_sup(&self.torus, &ind, cube_side)) {
                if hit > 0.0 {
                    *c += 1;
                }
            }
        }
        counts.into_iter().max().unwrap_or(0)
    }
}

/// Nonnegative weights `eta_i` supported in `E_i` with `sum_i eta_i = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionOfUnity {
    pub weights: Vec<Vec<f64>>,
}

/// `eta_i = chi_{E_i} / sum_j chi_{E_j}`.
pub fn build_partition(covering: &Covering) -> Result<PartitionOfUnity> {
    if let Some(point) = covering.uncovered() {
        return Err(Error::NotACovering { point });
    }
    let n = covering.torus().len();
    let counts: Vec<f64> = (0..n)
        .map(|x| covering.members.iter().filter(|m| m[x]).count() as f64)
        .collect();
    let weights = covering
        .members
        .iter()
        .map(|m| (0..n).map(|x| if m[x] { 1.0 / counts[x] } else { 0.0 }).collect())
        .collect();
    Ok(PartitionOfUnity { weights })
}

fn within(d: f64, r: f64) -> bool {
    d <= r + 1e-12 * (1.0 + r)
}

/// Entry indices of the nodes at torus distance `<= r` from region `i`.
pub fn select_entries(nodes: &NodeSet, covering: &Covering, i: usize, r: f64) -> Vec<usize> {
    let dist = covering.distance_to(i);
    (0..nodes.len())
        .filter(|&e| within(dist[nodes.points()[e]], r))
        .collect()
}

/// `Lambda_i^r = {k in Lambda_i : d(k, E_i) <= r}`.
pub fn select_nodes(nodes: &NodeSet, covering: &Covering, i: usize, r: f64) -> NodeSet {
    nodes.subset(&select_entries(nodes, covering, i, r))
}

/// Donor frame pairs, a covering with one region per donor, and the selections at radius `r`.
#[derive(Clone, Debug)]
pub struct QuiltedSystem {
    donors: Vec<FramePair>,
    covering: Covering,
    radius: f64,
    selection: Vec<Vec<usize>>,
}

impl QuiltedSystem {
    pub fn new(donors: Vec<FramePair>, covering: Covering, radius: f64) -> Result<Self> {
        if donors.len() != covering.len() {
            return Err(Error::LengthMismatch {
                what: "donors and regions",
                left: donors.len(),
                right: covering.len(),
            });
        }
        if !(radius >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("{radius} must be nonnegative"),
            });
        }
        for d in &donors {
            if d.atoms.torus() != covering.torus() || d.duals.torus() != covering.torus() {
                return Err(Error::InvalidDomain("donor and covering grids differ".into()));
            }
            if d.atoms.nodes() != d.duals.nodes() {
                return Err(Error::InvalidParameter {
                    name: "donors",
                    reason: "analysis and synthesis atoms must share their nodes".into(),
                });
            }
        }
        let selection = donors
            .iter()
            .enumerate()
            .map(|(i, d)| select_entries(d.atoms.nodes(), &covering, i, radius))
            .collect();
        Ok(Self {
            donors,
            covering,
            radius,
            selection,
        })
    }

    /// The same donors and covering at another radius.
    pub fn at_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.donors.clone(), self.covering.clone(), radius)
    }

    pub fn donors(&self) -> &[FramePair] {
        &self.donors
    }

    pub fn covering(&self) -> &Covering {
        &self.covering
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Selected entry indices per donor.
    pub fn selection(&self) -> &[Vec<usize>] {
        &self.selection
    }

    pub fn len(&self) -> usize {
        self.selection.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(donor, entry)` pairs of the merged index set, donor-major.
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        self.selection
            .iter()
            .enumerate()
            .flat_map(|(i, sel)| sel.iter().map(move |&e| (i, e)))
            .collect()
    }

    /// Positions of the merged index set, with multiplicity; labels are donor indices.
    pub fn merged_index(&self) -> Result<NodeSet> {
        let pairs = self.index_pairs();
        let points = pairs
            .iter()
            .map(|&(i, e)| self.donors[i].atoms.nodes().points()[e])
            .collect();
        NodeSet::from_grid_points(self.covering.torus(), points)?
            .with_labels(pairs.iter().map(|&(i, _)| i).collect())
    }

    /// `V(k, i) = v(k)` over the merged index set.
    pub fn product_weight(&self, v: &Weight) -> Vec<f64> {
        let t = self.covering.torus();
        self.index_pairs()
            .iter()
            .map(|&(i, e)| v.value(t, self.donors[i].atoms.nodes().points()[e]))
            .collect()
    }

    /// Selected analysis atoms of all donors, donor-major.
    pub fn analysis_family(&self) -> Result<AtomFamily> {
        self.stacked(|d| &d.atoms, None)
    }

    /// Selected synthesis atoms multiplied by their donor's partition weight.
    pub fn synthesis_family(&self, pou: &PartitionOfUnity) -> Result<AtomFamily> {
        self.stacked(|d| &d.duals, Some(pou))
    }

    fn stacked<F>(&self, pick: F, pou: Option<&PartitionOfUnity>) -> Result<AtomFamily>
    where
        F: Fn(&FramePair) -> &AtomFamily,
    {
        let t = self.covering.torus();
        let pairs = self.index_pairs();
        let atoms = CMatrix::from_fn(t.len(), pairs.len(), |x, c| {
            let (i, e) = pairs[c];
            let v = pick(&self.donors[i]).atoms()[(x, e)];
            match pou {
                Some(p) => v * p.weights[i][x],
                None => v,
            }
        });
        AtomFamily::new(self.merged_index()?, atoms)
    }

    /// `rel(Gamma^r)` and its bound `#_{E,Q'} max_i rel(Lambda_i)` with `Q' = [-r, 1 + r]^d`.
    pub fn index_separation(&self) -> Result<(usize, usize)> {
        let merged = self.merged_index()?;
        if merged.is_empty() {
            return Err(Error::EmptyQuilt);
        }
        let rel = rel_separation(&merged)?;
        let donor_rel = self
            .donors
            .iter()
            .map(|d| rel_separation(d.atoms.nodes()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max()
            .unwrap_or(0);
        let side = 1.0 + 2.0 * self.radius;
        Ok((rel, self.covering.local_finiteness(side) * donor_rel))
    }
}

/// `A^r` applied to every column of `fs`.
pub fn approx_reconstruct_columns(q: &QuiltedSystem, pou: &PartitionOfUnity, fs: &CMatrix) -> Result<CMatrix> {
    let t = q.covering.torus();
    if fs.nrows() != t.len() {
        return Err(Error::LengthMismatch {
            what: "function samples and grid",
            left: fs.nrows(),
            right: t.len(),
        });
    }
    if pou.weights.len() != q.donors.len() {
        return Err(Error::LengthMismatch {
            what: "partition weights and donors",
            left: pou.weights.len(),
            right: q.donors.len(),
        });
    }
    let h = C64::new(t.cell_volume(), 0.0);
    let mut out = CMatrix::zeros(fs.nrows(), fs.ncols());
    for (i, donor) in q.donors.iter().enumerate() {
        let sel = &q.selection[i];
        if sel.is_empty() {
            continue;
        }
        let phi = donor.atoms.atoms().select_columns(sel);
        let psi = donor.duals.atoms().select_columns(sel);
        let coeffs = phi.ad_mul(fs) * h;
        let mut piece = psi * coeffs;
        for (x, mut row) in piece.row_iter_mut().enumerate() {
            row *= C64::new(pou.weights[i][x], 0.0);
        }
        out += piece;
    }
    Ok(out)
}

/// `A^r f`.
pub fn approx_reconstruct(q: &QuiltedSystem, pou: &PartitionOfUnity, f: &CVector) -> Result<CVector> {
    let m = CMatrix::from_column_slice(f.len(), 1, f.as_slice());
    Ok(approx_reconstruct_columns(q, pou, &m)?.column(0).into_owned())
}

/// `||A^r - I||` on the span of an orthonormal basis (grid inner product).
pub fn operator_deviation(q: &QuiltedSystem, pou: &PartitionOfUnity, basis: &CMatrix) -> Result<f64> {
    let diff = approx_reconstruct_columns(q, pou, basis)? - basis;
    let h = q.covering.torus().cell_volume();
    Ok(spectral_norm(&(diff * C64::new(h.sqrt(), 0.0))))
}

/// Exterior frame bounds of the quilted analysis atoms on a span.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuiltBounds {
    /// Smallest eigenvalue of `C^* C`, `C_{(i,k), m} = <b_m, phi^i_k>`.
    pub lower: f64,
    /// Largest eigenvalue of `C^* C`.
    pub upper: f64,
    pub spectrum: SpectrumInfo,
}

/// Frame bounds of the selected analysis atoms restricted to the span of `basis`.
pub fn quilted_frame_bounds(q: &QuiltedSystem, basis: &CMatrix) -> Result<QuiltBounds> {
    if q.is_empty() {
        return Err(Error::EmptyQuilt);
    }
    let c = analysis_matrix(q, basis)?;
    let spectrum = SpectrumInfo::of_hermitian(&c.ad_mul(&c));
    Ok(QuiltBounds {
        lower: spectrum.smallest().max(0.0),
        upper: spectrum.upper(),
        spectrum,
    })
}

/// `[<b_m, phi^i_k>]` with rows over the merged index set.
pub fn analysis_matrix(q: &QuiltedSystem, basis: &CMatrix) -> Result<CMatrix> {
    let t = q.covering.torus();
    if basis.nrows() != t.len() {
        return Err(Error::LengthMismatch {
            what: "basis samples and grid",
            left: basis.nrows(),
            right: t.len(),
        });
    }
    let phi = q.analysis_family()?;
    Ok(phi.atoms().ad_mul(basis) * C64::new(t.cell_volume(), 0.0))
}

/// Exterior frame pair for the span of `basis`: analysis atoms `phi`, synthesis atoms
/// the canonical dual of their orthogonal projections onto the span.
pub fn exterior_frame_pair(phi: &AtomFamily, basis: &CMatrix) -> Result<FramePair> {
    let h = C64::new(phi.torus().cell_volume(), 0.0);
    let projected = phi.with_atoms(basis * (basis.ad_mul(phi.atoms()) * h))?;
    let pair = canonical_dual(&projected)?;
    Ok(FramePair {
        atoms: phi.clone(),
        duals: pair.duals,
        lower_bound: pair.lower_bound,
        upper_bound: pair.upper_bound,
    })
}

/// One row of an error sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub r: f64,
    /// Worst `||A^r f - f|| / ||f||` over the test functions in weighted `L^p`.
    pub worst_rel_error: f64,
    /// `||A^r - I||` on the span.
    pub deviation: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub selected: usize,
}

/// Error table over radii.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub p: f64,
    pub weight_exponent: f64,
    pub overlap_count: usize,
    pub rows: Vec<SweepRow>,
    /// Log-log slope of worst error against `r` over the interior radii
    /// (first and last dropped when there are at least five).
    pub fitted_slope: f64,
    /// Errors never grow by more than 10% from one radius to the next.
    pub monotone: bool,
}

/// Check radii are finite, nonnegative, strictly increasing and at least two.
pub fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "radii",
            reason: format!("{} entries, at least 2 are needed", radii.len()),
        });
    }
    if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "radii",
            reason: format!("{radii:?} must be nonnegative and strictly increasing"),
        });
    }
    Ok(())
}

/// Slope over the interior points when there are at least five, over all points otherwise.
pub fn interior_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let (xs, ys) = if xs.len() >= 5 {
        (&xs[1..xs.len() - 1], &ys[1..ys.len() - 1])
    } else {
        (xs, ys)
    };
    loglog_slope(xs, ys)
}

/// Sweep `A^r` over increasing radii on the given test functions.
pub fn error_sweep(
    template: &QuiltedSystem,
    pou: &PartitionOfUnity,
    radii: &[f64],
    test_functions: &[CVector],
    basis: &CMatrix,
    p: f64,
    v: &Weight,
) -> Result<SweepTable> {
    check_radii(radii)?;
    let t = template.covering.torus().clone();
    let tests = CMatrix::from_columns(test_functions);
    let norms = test_functions
        .iter()
        .map(|f| lp_norm(&t, f, p, v))
        .collect::<Result<Vec<_>>>()?;
    let rows = radii
        .par_iter()
        .map(|&r| {
            let q = template.at_radius(r)?;
            let rec = approx_reconstruct_columns(&q, pou, &tests)?;
            let mut worst: f64 = 0.0;
            for (m, norm) in norms.iter().enumerate() {
                let err = rec.column(m) - tests.column(m);
                worst = worst.max(lp_norm(&t, &err, p, v)? / norm);
            }
            let deviation = operator_deviation(&q, pou, basis)?;
            let (lower, upper) = match quilted_frame_bounds(&q, basis) {
                Ok(b) => (b.lower, b.upper),
                Err(Error::EmptyQuilt) => (0.0, 0.0),
                Err(e) => return Err(e),
            };
            Ok(SweepRow {
                r,
                worst_rel_error: worst,
                deviation,
                lower_bound: lower,
                upper_bound: upper,
                selected: q.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|row| row.r).collect();
    let ys: Vec<f64> = rows.iter().map(|row| row.worst_rel_error).collect();
    let monotone = ys.windows(2).all(|w| w[1] <= w[0] * 1.1);
    Ok(SweepTable {
        p,
        weight_exponent: v.exponent,
        overlap_count: template.covering.overlap_count(),
        rows,
        fitted_slope: interior_slope(&xs, &ys),
        monotone,
    })
}

/// Two a-posteriori certificates of the quilted frame at one radius.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certification {
    pub r: f64,
    /// `||A^r - I||` on the span, below one.
    pub deviation: f64,
    /// Smallest singular value squared of the analysis matrix on the span.
    pub lower_bound: f64,
    /// Operator norm of the synthesis map `c -> sum c_(i,k) psi^i_k eta_i`.
    pub synthesis_norm: f64,
    /// `(1 - deviation)^2 / synthesis_norm^2`, implied by `A^r = synthesis o analysis`.
    pub predicted_lower: f64,
}

impl Certification {
    /// Strict positivity of the measured lower bound.
    pub fn positive(&self) -> bool {
        self.lower_bound > 0.0
    }

    /// The measured lower bound dominates the one implied by the deviation.
    pub fn consistent(&self) -> bool {
        self.lower_bound >= self.predicted_lower * (1.0 - 1e-9)
    }
}

/// Certificates at a single radius, regardless of the deviation.
pub fn certificate_at(q: &QuiltedSystem, pou: &PartitionOfUnity, basis: &CMatrix) -> Result<Certification> {
    let deviation = operator_deviation(q, pou, basis)?;
    let c = analysis_matrix(q, basis)?;
    let (smin, _) = singular_range(&c);
    let h = q.covering.torus().cell_volume();
    let synth = q.synthesis_family(pou)?;
    let synthesis_norm = spectral_norm(&(synth.atoms() * C64::new(h.sqrt(), 0.0)));
    let predicted_lower = if deviation < 1.0 && synthesis_norm > 0.0 {
        ((1.0 - deviation) / synthesis_norm).powi(2)
    } else {
        0.0
    };
    Ok(Certification {
        r: q.radius(),
        deviation,
        lower_bound: smin * smin,
        synthesis_norm,
        predicted_lower,
    })
}

/// Certificates at the first radius whose deviation is below one, if any.
pub fn certify(
    template: &QuiltedSystem,
    pou: &PartitionOfUnity,
    radii: &[f64],
    basis: &CMatrix,
) -> Result<Option<Certification>> {
    check_radii(radii)?;
    for &r in radii {
        let q = template.at_radius(r)?;
        if q.is_empty() {
            continue;
        }
        let cert = certificate_at(&q, pou, basis)?;
        if cert.deviation < 1.0 {
            return Ok(Some(cert));
        }
    }
    Ok(None)
}
