//! Gram matrices, frame bounds, pseudo-inverses, canonical duals and decay fits.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::Serialize;

use crate::amalgam::{analyze, cross_correlation, matrix_apply, synthesize, AtomFamily, SchurMatrix};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::stats::linear_fit;
use crate::{CMatrix, CVector, C64};

/// Relative rank threshold: eigenvalues below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Sorted spectrum of a positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumInfo {
    /// Eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    /// Smallest eigenvalue above the rank threshold, or zero if there is none.
    pub gap: f64,
}

impl SpectrumInfo {
    /// Classify eigenvalues with the default relative threshold.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        let largest = eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
        let threshold = RANK_TOLERANCE * largest;
        let above: Vec<f64> = eigenvalues
            .iter()
            .copied()
            .filter(|&e| e > threshold && largest > 0.0)
            .collect();
        Self {
            rank: above.len(),
            gap: above.first().copied().unwrap_or(0.0),
            eigenvalues,
        }
    }

    /// Spectrum of a Hermitian matrix.
    pub fn of_hermitian(m: &CMatrix) -> Self {
        Self::from_eigenvalues(eigh(m).0)
    }

    /// Lower frame bound on the span: the smallest nonzero eigenvalue.
    pub fn lower(&self) -> f64 {
        self.gap
    }

    /// Upper frame bound: the largest eigenvalue.
    pub fn upper(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0).max(0.0)
    }

    /// The smallest eigenvalue, including the numerical nullspace.
    pub fn smallest(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }
}

/// Eigenvalues (ascending) and matching orthonormal eigenvectors of a Hermitian matrix.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// A family with its dual family and the frame bounds of the atoms on their span.
#[derive(Clone, Debug)]
pub struct FramePair {
    /// Analysis atoms.
    pub atoms: AtomFamily,
    /// Synthesis atoms.
    pub duals: AtomFamily,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl FramePair {
    /// `sum_k <f, atoms_k> duals_k`.
    pub fn expand(&self, f: &CVector) -> Result<CVector> {
        synthesize(&analyze(f, &self.atoms)?, &self.duals)
    }

    /// `sum_k <f, duals_k> atoms_k`.
    pub fn expand_dual(&self, f: &CVector) -> Result<CVector> {
        synthesize(&analyze(f, &self.duals)?, &self.atoms)
    }
}

/// Self-correlation matrix `c_kj = <f_k, f_j>`.
pub fn gram(family: &AtomFamily) -> Result<SchurMatrix> {
    cross_correlation(family, family)
}

/// Frame-sequence bounds of a family from the spectrum of its Gram matrix.
pub fn frame_bounds(family: &AtomFamily) -> Result<SpectrumInfo> {
    let info = SpectrumInfo::of_hermitian(&gram(family)?.entries);
    if info.rank == 0 {
        return Err(Error::ZeroFamily);
    }
    Ok(info)
}

/// Moore-Penrose pseudo-inverse of a Hermitian positive semidefinite matrix.
///
/// Eigenvalues at or below `rank_threshold` are treated as zero.
pub fn pseudo_inverse_svd(m: &CMatrix, rank_threshold: f64) -> CMatrix {
    let (values, vectors) = eigh(m);
    let n = values.len();
    let scaled = CMatrix::from_fn(n, n, |r, c| {
        if values[c] > rank_threshold {
            vectors[(r, c)] / values[c]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    scaled * vectors.adjoint()
}

/// [`pseudo_inverse_svd`] with the default relative threshold.
pub fn pseudo_inverse(m: &CMatrix) -> CMatrix {
    let largest = eigh(m).0.last().copied().unwrap_or(0.0).max(0.0);
    pseudo_inverse_svd(m, RANK_TOLERANCE * largest)
}

/// Quadrature rule applied on each side of the contour.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContourRule {
    GaussLegendre,
    Trapezoid,
}

/// Pseudo-inverse `(1 / 2 pi i) \oint z^{-1} (z I - M)^{-1} dz` over the rectangle with
/// vertices `gap/2 +- i` and `||M|| + gap/2 +- i`, Gauss-Legendre on each side.
///
/// The nonzero spectrum must lie in `[gap, ||M||]`.
pub fn pseudo_inverse_contour(m: &CMatrix, gap: f64, num_quad: usize) -> Result<CMatrix> {
    pseudo_inverse_contour_with(m, gap, num_quad, ContourRule::GaussLegendre)
}

/// [`pseudo_inverse_contour`] with a choice of quadrature rule.
pub fn pseudo_inverse_contour_with(
    m: &CMatrix,
    gap: f64,
    num_quad: usize,
    rule: ContourRule,
) -> Result<CMatrix> {
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "gap",
            reason: format!("{gap} must be positive"),
        });
    }
    if num_quad < 8 {
        return Err(Error::InvalidParameter {
            name: "num_quad",
            reason: format!("{num_quad} nodes per side, at least 8 are needed"),
        });
    }
    let n = m.nrows();
    let values = eigh(m).0;
    let norm = values.last().copied().unwrap_or(0.0).max(0.0);
    let threshold = RANK_TOLERANCE * norm;
    if let Some(&e) = values
        .iter()
        .find(|&&e| e > threshold && e < gap * (1.0 - 1e-9))
    {
        return Err(Error::SpectralGapViolated { eigenvalue: e, gap });
    }

    let (t, w) = match rule {
        ContourRule::GaussLegendre => quadrature::gauss_legendre(num_quad),
        ContourRule::Trapezoid => quadrature::trapezoid(num_quad),
    };
    let x0 = gap / 2.0;
    let x1 = norm + gap / 2.0;
    let corners = [
        C64::new(x0, -1.0),
        C64::new(x1, -1.0),
        C64::new(x1, 1.0),
        C64::new(x0, 1.0),
    ];
    // Anti-clockwise sides; each is parametrized over [-1, 1].
    let mut nodes = Vec::with_capacity(4 * t.len());
    for s in 0..4 {
        let (a, b) = (corners[s], corners[(s + 1) % 4]);
        let half = (b - a) * 0.5;
        let mid = (a + b) * 0.5;
        for (ti, wi) in t.iter().zip(&w) {
            nodes.push((mid + half * *ti, half * *wi));
        }
    }
    let terms: Vec<Result<CMatrix>> = nodes
        .par_iter()
        .map(|&(z, dz)| {
            let shifted = CMatrix::from_diagonal_element(n, n, z) - m;
            let resolvent = shifted
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::InvalidParameter {
                    name: "contour",
                    reason: format!("resolvent singular at {z}"),
                })?;
            Ok(resolvent * (dz / z))
        })
        .collect();
    let mut sum = CMatrix::zeros(n, n);
    for term in terms {
        sum += term?;
    }
    Ok(sum / C64::new(0.0, 2.0 * PI))
}

/// Canonical dual family `psi_k = sum_j (M^+)_kj f_j` with `M` the Gram matrix.
pub fn canonical_dual(family: &AtomFamily) -> Result<FramePair> {
    let g = gram(family)?;
    let info = SpectrumInfo::of_hermitian(&g.entries);
    if info.rank == 0 {
        return Err(Error::ZeroFamily);
    }
    let threshold = RANK_TOLERANCE * info.upper();
    let pinv = pseudo_inverse_svd(&g.entries, threshold);
    let c = SchurMatrix::new(family.nodes().clone(), family.nodes().clone(), pinv)?;
    let duals = matrix_apply(&c, family)?;
    Ok(FramePair {
        atoms: family.clone(),
        duals,
        lower_bound: info.lower(),
        upper_bound: info.upper(),
    })
}

/// Fitted envelope `|f_k(x)| <= constant (1 + |x - k|)^{-exponent}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub constant: f64,
    pub exponent: f64,
    /// Number of unit-width annuli used in the fit.
    pub annuli: usize,
}

/// Least-squares fit of the radial decay of a family.
///
/// For each annulus `r <= dist < r + 1` up to half the shortest side, the largest
/// `|f_k(x)|` over all atoms is regressed against `log(1 + r)`. Annuli whose maximum
/// sits at the rounding floor are skipped.
pub fn decay_fit(family: &AtomFamily) -> Result<DecayFit> {
    let t = family.torus();
    let bins = (t.min_side() / 2.0).floor() as usize;
    let mut maxima = vec![0.0f64; bins.max(1)];
    for k in 0..family.len() {
        let node = family.nodes().points()[k];
        for x in 0..t.len() {
            let d = t.dist(x, node);
            let b = d.floor() as usize;
            if b < bins {
                maxima[b] = maxima[b].max(family.atoms()[(x, k)].norm());
            }
        }
    }
    let peak = maxima.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::ZeroFamily);
    }
    let floor = 64.0 * f64::EPSILON * peak;
    let (xs, ys): (Vec<f64>, Vec<f64>) = maxima
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > floor)
        .map(|(r, &m)| ((1.0 + r as f64).ln(), m.ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::InsufficientRadialRange { annuli: xs.len() });
    }
    let exponent = -linear_fit(&xs, &ys).slope;
    let constant = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y + exponent * x).exp())
        .fold(0.0, f64::max);
    Ok(DecayFit {
        constant,
        exponent,
        annuli: xs.len(),
    })
}

/// The projector `f -> sum_k <f, g_k> f_k` onto the span of a family.
#[derive(Clone, Debug)]
pub struct Projector {
    pair: FramePair,
}

impl Projector {
    pub fn apply(&self, f: &CVector) -> Result<CVector> {
        self.pair.expand_dual(f)
    }

    pub fn frame_pair(&self) -> &FramePair {
        &self.pair
    }
}

/// Projector onto the span of `family` built from its canonical dual.
pub fn universal_projector(family: &AtomFamily) -> Result<Projector> {
    Ok(Projector {
        pair: canonical_dual(family)?,
    })
}

/// Orthonormal basis (grid inner product) of the span of a family, one vector per column.
pub fn span_basis(family: &AtomFamily) -> Result<CMatrix> {
    let h = family.torus().cell_volume();
    let scaled = family.atoms() * C64::new(h.sqrt(), 0.0);
    let svd = scaled.svd(true, false);
    let u = svd.u.ok_or(Error::ZeroFamily)?;
    let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return Err(Error::ZeroFamily);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i].powi(2) > RANK_TOLERANCE * largest * largest)
        .collect();
    let inv = C64::new(1.0 / h.sqrt(), 0.0);
    Ok(CMatrix::from_fn(u.nrows(), keep.len(), |r, c| u[(r, keep[c])] * inv))
}

/// Spectral norm of a matrix.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Smallest and largest singular values.
pub fn singular_range(m: &CMatrix) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let lo = if m.nrows() < m.ncols() {
        // A wide matrix has a nontrivial kernel.
        0.0
    } else {
        sv.iter().copied().fold(f64::INFINITY, f64::min)
    };
    (lo, sv.iter().copied().fold(0.0, f64::max))
}

/// Frobenius norm of `a - b` relative to `b`.
pub fn relative_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    let denom = b.norm();
    if denom == 0.0 {
        a.norm()
    } else {
        (a - b).norm() / denom
    }
}
