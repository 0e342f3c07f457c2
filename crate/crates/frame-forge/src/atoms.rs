//! Generators for common atom families centred at the nodes of a node set.
//!
//! Every profile is a radial function of the torus distance to the node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::amalgam::AtomFamily;
use crate::grid::NodeSet;
use crate::{CVector, C64};

/// Family with atom `k` equal to `profile(dist(x, node_k))`.
pub fn radial<P>(nodes: &NodeSet, profile: P) -> AtomFamily
where
    P: Fn(f64) -> f64 + Sync,
{
    let torus = nodes.torus().clone();
    AtomFamily::from_fn(nodes.clone(), move |k, x| {
        C64::new(profile(torus.dist(x, k)), 0.0)
    })
}

/// Gaussian bumps `exp(-d^2 / (2 width^2))`.
pub fn gaussian_bumps(nodes: &NodeSet, width: f64) -> AtomFamily {
    let s2 = 2.0 * width * width;
    radial(nodes, move |d| (-d * d / s2).exp())
}

/// Rational bumps `(1 + (d / scale)^2)^{-exponent / 2}`, which decay like `d^{-exponent}`.
pub fn rational_bumps(nodes: &NodeSet, scale: f64, exponent: f64) -> AtomFamily {
    radial(nodes, move |d| (1.0 + (d / scale).powi(2)).powf(-exponent / 2.0))
}

/// Atoms equal to the polynomial envelope itself, `(1 + d)^{-exponent}`.
pub fn envelope_atoms(nodes: &NodeSet, exponent: f64) -> AtomFamily {
    radial(nodes, move |d| (1.0 + d).powf(-exponent))
}

/// Centred cubic B-spline dilated to support `[-2 width, 2 width]`.
pub fn bspline_like(nodes: &NodeSet, width: f64) -> AtomFamily {
    radial(nodes, move |d| cubic_bspline(d / width))
}

/// Centred cardinal cubic B-spline.
pub fn cubic_bspline(u: f64) -> f64 {
    let u = u.abs();
    if u < 1.0 {
        2.0 / 3.0 - u * u + 0.5 * u * u * u
    } else if u < 2.0 {
        (2.0 - u).powi(3) / 6.0
    } else {
        0.0
    }
}

/// Seeded generator shared by every random draw in experiments.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Complex numbers with real and imaginary parts uniform in `[-1, 1)`.
pub fn random_coefficients<R: Rng>(count: usize, rng: &mut R) -> Vec<C64> {
    (0..count)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

/// Grid functions with independent uniform complex samples.
pub fn random_signals<R: Rng>(len: usize, count: usize, rng: &mut R) -> Vec<CVector> {
    (0..count)
        .map(|_| CVector::from_vec(random_coefficients(len, rng)))
        .collect()
}

/// Random finite combinations of the atoms of a family.
pub fn random_span_elements<R: Rng>(family: &AtomFamily, count: usize, rng: &mut R) -> Vec<CVector> {
    (0..count)
        .map(|_| family.atoms() * CVector::from_vec(random_coefficients(family.len(), rng)))
        .collect()
}
