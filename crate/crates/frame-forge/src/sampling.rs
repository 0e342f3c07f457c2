//! Reproducing kernels of spline-type spaces, sampling inequalities and quilted sampling
//! sets reconstructed through the kernel frames.
//!
//! Sample points are grid points, so point evaluation is exact; sampling sets are node
//! sets and repeated points count with multiplicity.

use rayon::prelude::*;
use serde::Serialize;

use crate::amalgam::{lp_norm, AtomFamily};
use crate::error::{Error, Result};
use crate::frame::{canonical_dual, eigh, FramePair, SpectrumInfo};
use crate::grid::{NodeSet, Weight};
use crate::surgery::{
    build_partition, certify, check_radii, error_sweep, select_entries, Certification, Covering, QuiltedSystem,
};
use crate::{CMatrix, CVector, C64};

/// The span element representing evaluation at a grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct ReproducingKernel {
    pub point: usize,
    pub kernel: CVector,
}

/// `K_{x0} = sum_k conj(g_k(x0)) f_k` for analysis atoms `f_k` and synthesis atoms `g_k`,
/// so that `<f, K_{x0}> = f(x0)` for every `f = sum <f, f_k> g_k` in the span.
pub fn kernel_at(x0: usize, frame: &FramePair) -> Result<ReproducingKernel> {
    let t = frame.atoms.torus();
    if x0 >= t.len() {
        return Err(Error::InvalidParameter {
            name: "point",
            reason: format!("grid index {x0} is outside the grid of {} points", t.len()),
        });
    }
    let coeffs = CVector::from_fn(frame.duals.len(), |k, _| frame.duals.atoms()[(x0, k)].conj());
    Ok(ReproducingKernel {
        point: x0,
        kernel: frame.atoms.atoms() * coeffs,
    })
}

/// Kernels at every point of `points`, as a family centred at those points.
pub fn kernel_family(points: &NodeSet, frame: &FramePair) -> Result<AtomFamily> {
    let cols = points
        .points()
        .par_iter()
        .map(|&x| kernel_at(x, frame).map(|k| k.kernel))
        .collect::<Result<Vec<_>>>()?;
    let t = frame.atoms.torus();
    let atoms = if cols.is_empty() {
        CMatrix::zeros(t.len(), 0)
    } else {
        CMatrix::from_columns(&cols)
    };
    AtomFamily::new(points.clone(), atoms)
}

/// `[b_m(x)]` with one row per sample point.
pub fn evaluation_matrix(points: &NodeSet, basis: &CMatrix) -> CMatrix {
    CMatrix::from_fn(points.len(), basis.ncols(), |i, m| basis[(points.points()[i], m)])
}

/// Spectrum of `E^* E` for the evaluation matrix `E` on an orthonormal span basis:
/// the optimal `A, B` with `A ||f||^2 <= sum_x |f(x)|^2 <= B ||f||^2`.
pub fn sampling_bounds(points: &NodeSet, basis: &CMatrix) -> Result<SpectrumInfo> {
    if points.is_empty() {
        return Err(Error::EmptySamplingSet);
    }
    let e = evaluation_matrix(points, basis);
    Ok(SpectrumInfo::of_hermitian(&e.ad_mul(&e)))
}

/// Frame bounds of the kernels at `points` restricted to the span of `basis`.
pub fn kernel_frame_bounds(points: &NodeSet, frame: &FramePair, basis: &CMatrix) -> Result<SpectrumInfo> {
    if points.is_empty() {
        return Err(Error::EmptySamplingSet);
    }
    let k = kernel_family(points, frame)?;
    let c = k.atoms().ad_mul(basis) * C64::new(k.torus().cell_volume(), 0.0);
    Ok(SpectrumInfo::of_hermitian(&c.ad_mul(&c)))
}

/// Donor sampling sets over a covering, for a span with a reference frame pair.
#[derive(Clone, Debug)]
pub struct SamplingExperiment {
    pub frame: FramePair,
    /// Orthonormal basis of the span.
    pub basis: CMatrix,
    pub donors: Vec<NodeSet>,
    pub covering: Covering,
}

impl SamplingExperiment {
    /// Sampling bounds of every donor set on its own.
    pub fn donor_bounds(&self) -> Result<Vec<SpectrumInfo>> {
        self.donors.iter().map(|x| sampling_bounds(x, &self.basis)).collect()
    }

    /// `X^r = {(i, x) : x in X_i, d(x, E_i) <= r}`, labelled by donor index.
    pub fn quilted_set(&self, r: f64) -> Result<NodeSet> {
        let t = self.covering.torus();
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (i, x) in self.donors.iter().enumerate() {
            for e in select_entries(x, &self.covering, i, r) {
                points.push(x.points()[e]);
                labels.push(i);
            }
        }
        NodeSet::from_grid_points(t, points)?.with_labels(labels)
    }

    /// Surgery template whose donors are the kernel families and their canonical duals.
    pub fn kernel_quilt(&self) -> Result<QuiltedSystem> {
        let pairs = self
            .donors
            .iter()
            .map(|x| canonical_dual(&kernel_family(x, &self.frame)?))
            .collect::<Result<Vec<_>>>()?;
        QuiltedSystem::new(pairs, self.covering.clone(), 0.0)
    }
}

/// Constants `A, B` of `A ||f||_{L^p_v} <= (sum |f(x)|^p v(x)^p)^{1/p} <= B ||f||_{L^p_v}`.
///
/// For `p = 2` they are exact over the span (generalized eigenvalues); otherwise they are
/// the extreme ratios over the basis functions and `tests`.
pub fn sampling_constants(
    points: &NodeSet,
    basis: &CMatrix,
    p: f64,
    v: &Weight,
    tests: &[CVector],
) -> Result<(f64, f64)> {
    if points.is_empty() {
        return Ok((0.0, 0.0));
    }
    let t = points.torus();
    let vx: Vec<f64> = points.points().iter().map(|&x| v.value(t, x)).collect();
    if p == 2.0 {
        let wb = CMatrix::from_fn(basis.nrows(), basis.ncols(), |x, m| basis[(x, m)] * v.value(t, x));
        let q = wb.ad_mul(&wb) * C64::new(t.cell_volume(), 0.0);
        let e = CMatrix::from_fn(points.len(), basis.ncols(), |i, m| basis[(points.points()[i], m)] * vx[i]);
        let s = e.ad_mul(&e);
        let chol = q.cholesky().ok_or_else(|| Error::InvalidParameter {
            name: "basis",
            reason: "weighted Gram matrix of the basis is not positive definite".into(),
        })?;
        let linv = chol.l().try_inverse().ok_or(Error::ZeroFamily)?;
        let (ev, _) = eigh(&(&linv * s * linv.adjoint()));
        return Ok((ev[0].max(0.0).sqrt(), ev[ev.len() - 1].max(0.0).sqrt()));
    }
    let mut fs: Vec<CVector> = basis.column_iter().map(|c| c.into_owned()).collect();
    fs.extend(tests.iter().cloned());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for f in &fs {
        let norm = lp_norm(t, f, p, v)?;
        let vals: Vec<f64> = points.points().iter().zip(&vx).map(|(&x, w)| f[x].norm() * w).collect();
        let sampled = if p.is_infinite() {
            vals.iter().copied().fold(0.0, f64::max)
        } else {
            vals.iter().map(|a| a.powf(p)).sum::<f64>().powf(1.0 / p)
        };
        lo = lo.min(sampled / norm);
        hi = hi.max(sampled / norm);
    }
    Ok((lo, hi))
}

/// One row of a quilted sampling sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplingRow {
    pub r: f64,
    pub a_r: f64,
    pub b_r: f64,
    /// Worst `||A^r f - f|| / ||f||` of the reconstruction from the samples in `X^r`.
    pub recon_rel_error: f64,
    pub n_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplingTable {
    pub p: f64,
    pub weight_exponent: f64,
    pub rows: Vec<SamplingRow>,
    pub fitted_slope: f64,
    pub certification: Option<Certification>,
}

/// Sampling constants and reconstruction error of `X^r` for every radius.
pub fn quilt_sampling(
    experiment: &SamplingExperiment,
    p: f64,
    v: &Weight,
    radii: &[f64],
    tests: &[CVector],
) -> Result<SamplingTable> {
    check_radii(radii)?;
    let template = experiment.kernel_quilt()?;
    let pou = build_partition(&experiment.covering)?;
    let sweep = error_sweep(&template, &pou, radii, tests, &experiment.basis, p, v)?;
    let rows = radii
        .iter()
        .zip(&sweep.rows)
        .map(|(&r, row)| {
            let x = experiment.quilted_set(r)?;
            let (a_r, b_r) = sampling_constants(&x, &experiment.basis, p, v, tests)?;
            Ok(SamplingRow {
                r,
                a_r,
                b_r,
                recon_rel_error: row.worst_rel_error,
                n_points: x.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let certification = certify(&template, &pou, radii, &experiment.basis)?;
    Ok(SamplingTable {
        p,
        weight_exponent: v.exponent,
        rows,
        fitted_slope: sweep.fitted_slope,
        certification,
    })
}
