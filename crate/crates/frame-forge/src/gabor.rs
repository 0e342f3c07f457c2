//! Short-time Fourier transform with a Gaussian window, lattice Gabor systems and
//! quilted Gabor frames glued on the time-frequency side.
//!
//! Signals live on a one-dimensional torus of side `L` with `N` samples (step `h`).
//! The time-frequency plane is the torus `[0, L) x [0, 1/h)` sampled at `h` in time
//! and `1/L` in frequency, so every time shift and modulation on a commensurate
//! lattice is an exact grid shift and the transform is an isometry.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::amalgam::{AtomFamily, Envelope};
use crate::error::{Error, Result};
use crate::frame::{spectral_norm, FramePair, SpectrumInfo};
use crate::grid::{NodeSet, Torus};
use crate::surgery::{
    build_partition, certify, error_sweep, exterior_frame_pair, quilted_frame_bounds, Certification, Covering,
    PartitionOfUnity, QuiltBounds, QuiltedSystem, SweepTable,
};
use crate::{CMatrix, CVector, C64};

/// Time-frequency torus of a signal torus: sides `L` and `N / L`, `N` points per axis.
pub fn tf_torus(signal: &Torus) -> Result<Torus> {
    if signal.dim() != 1 {
        return Err(Error::InvalidDomain("signals must be one-dimensional".into()));
    }
    let (l, n) = (signal.side(0), signal.points_per_axis(0));
    Torus::rect(&[l, n as f64 / l], &[n, n])
}

/// Periodized Gaussian `pi^{-1/4} e^{-x^2/2}` sampled on a signal torus.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussWindow {
    torus: Torus,
    samples: CVector,
}

impl GaussWindow {
    pub fn new(torus: &Torus) -> Result<Self> {
        if torus.dim() != 1 {
            return Err(Error::InvalidDomain("signals must be one-dimensional".into()));
        }
        let l = torus.side(0);
        let norm = PI.powf(-0.25);
        let samples = CVector::from_fn(torus.len(), |i, _| {
            let x = torus.coords(i)[0];
            let s: f64 = (-3..=3).map(|n| (-(x - n as f64 * l).powi(2) / 2.0).exp()).sum();
            C64::new(norm * s, 0.0)
        });
        Ok(Self {
            torus: torus.clone(),
            samples,
        })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn samples(&self) -> &CVector {
        &self.samples
    }

    /// Envelope `C (1 + |z|)^{-exponent}` dominating `|V_phi phi(z)| = e^{-x^2/4 - pi^2 w^2}`.
    pub fn tf_envelope(exponent: f64) -> Envelope {
        // e^{-x^2/4 - pi^2 w^2} <= e^{-|z|^2/4}; maximize e^{-rho^2/4} (1 + rho)^s in rho.
        let constant = (0..=200_000)
            .map(|k| {
                let rho = k as f64 * 1e-4;
                (-rho * rho / 4.0).exp() * (1.0 + rho).powf(exponent)
            })
            .fold(0.0, f64::max);
        Envelope {
            constant: constant * 1.001,
            exponent,
        }
    }
}

/// Values of a short-time Fourier transform on the time-frequency torus.
#[derive(Clone, Debug, PartialEq)]
pub struct StftImage {
    pub torus: Torus,
    pub values: CVector,
}

struct Transform {
    signal: Torus,
    fft: Arc<dyn Fft<f64>>,
}

impl Transform {
    fn new(signal: &Torus) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(signal.len());
        Self {
            signal: signal.clone(),
            fft,
        }
    }

    // Row-major over (time, frequency).
    fn apply(&self, f: &CVector, window: &CVector) -> CVector {
        let n = self.signal.len();
        let h = self.signal.cell_volume();
        let rows: Vec<Vec<C64>> = (0..n)
            .into_par_iter()
            .map(|m| {
                let mut buf: Vec<C64> = (0..n)
                    .map(|y| f[y] * window[(y + n - m) % n].conj() * h)
                    .collect();
                self.fft.process(&mut buf);
                buf
            })
            .collect();
        CVector::from_iterator(n * n, rows.into_iter().flatten())
    }
}

/// `V_g f(x, w) = <f, M_w T_x g>` at every time-frequency grid point.
pub fn stft_with(f: &CVector, g: &CVector, signal: &Torus) -> Result<StftImage> {
    if f.len() != signal.len() || g.len() != signal.len() {
        return Err(Error::LengthMismatch {
            what: "signal samples and grid",
            left: f.len().min(g.len()),
            right: signal.len(),
        });
    }
    let torus = tf_torus(signal)?;
    Ok(StftImage {
        torus,
        values: Transform::new(signal).apply(f, g),
    })
}

/// `V_phi f` with the Gaussian window.
pub fn stft(f: &CVector, window: &GaussWindow) -> Result<StftImage> {
    stft_with(f, window.samples(), window.torus())
}

/// Transforms of every column of `signals`, one column per signal.
pub fn stft_columns(signals: &CMatrix, g: &CVector, signal: &Torus) -> Result<CMatrix> {
    if signals.nrows() != signal.len() || g.len() != signal.len() {
        return Err(Error::LengthMismatch {
            what: "signal samples and grid",
            left: signals.nrows(),
            right: signal.len(),
        });
    }
    let tr = Transform::new(signal);
    let cols: Vec<CVector> = (0..signals.ncols())
        .map(|c| tr.apply(&signals.column(c).into_owned(), g))
        .collect();
    Ok(CMatrix::from_columns(&cols))
}

/// A time-frequency point `(x, w)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TfPoint {
    pub time: f64,
    pub freq: f64,
}

/// `pi(x, w) g = M_w T_x g`, with `x` a multiple of `h` and `w` a multiple of `1/L`.
pub fn tf_atom(point: TfPoint, g: &CVector, signal: &Torus) -> Result<CVector> {
    let n = signal.len();
    let h = signal.step(0);
    let l = signal.side(0);
    let shift = point.time / h;
    let bin = point.freq * l;
    if (shift - shift.round()).abs() > 1e-9 || (bin - bin.round()).abs() > 1e-9 {
        return Err(Error::IncommensurateLattice(format!(
            "({}, {}) is not on the time-frequency grid",
            point.time, point.freq
        )));
    }
    let s = (shift.round() as i64).rem_euclid(n as i64) as usize;
    let j = (bin.round() as i64).rem_euclid(n as i64) as usize;
    Ok(CVector::from_fn(n, |y, _| {
        let phase = C64::from_polar(1.0, 2.0 * PI * ((j * y) % n) as f64 / n as f64);
        phase * g[(y + n - s) % n]
    }))
}

/// Unimodular `c` with `pi(a) pi(b) = c pi(a + b)`, namely `e^{-2 pi i x_a w_b}`.
pub fn composition_phase(a: TfPoint, b: TfPoint) -> C64 {
    C64::from_polar(1.0, -2.0 * PI * a.time * b.freq)
}

/// Rectangular lattice `offset + (a Z) x (b Z)` on the time-frequency torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TfLattice {
    pub time_step: f64,
    pub freq_step: f64,
    pub time_offset: f64,
    pub freq_offset: f64,
}

impl TfLattice {
    pub fn new(time_step: f64, freq_step: f64) -> Self {
        Self {
            time_step,
            freq_step,
            time_offset: 0.0,
            freq_offset: 0.0,
        }
    }

    pub fn with_offset(mut self, time: f64, freq: f64) -> Self {
        self.time_offset = time;
        self.freq_offset = freq;
        self
    }

    /// `a b`; its inverse is the redundancy.
    pub fn density(&self) -> f64 {
        self.time_step * self.freq_step
    }

    /// Lattice points as nodes on the time-frequency torus.
    pub fn nodes(&self, signal: &Torus) -> Result<NodeSet> {
        NodeSet::lattice(
            &tf_torus(signal)?,
            &[self.time_step, self.freq_step],
            &[self.time_offset, self.freq_offset],
        )
    }

    pub fn points(&self, signal: &Torus) -> Result<Vec<TfPoint>> {
        let nodes = self.nodes(signal)?;
        Ok((0..nodes.len())
            .map(|i| {
                let p = nodes.position(i);
                TfPoint {
                    time: p[0],
                    freq: p[1],
                }
            })
            .collect())
    }

    /// Gabor atoms `pi(lambda) g`, one column per lattice point.
    pub fn atoms(&self, g: &CVector, signal: &Torus) -> Result<CMatrix> {
        let cols = self
            .points(signal)?
            .into_iter()
            .map(|p| tf_atom(p, g, signal))
            .collect::<Result<Vec<_>>>()?;
        Ok(CMatrix::from_columns(&cols))
    }
}

/// Spectrum of the frame operator `S f = sum <f, pi(lambda) g> pi(lambda) g` on the signal grid.
///
/// The frame bounds for the whole signal space are `smallest()` and `upper()`.
pub fn gabor_frame_bounds(lattice: &TfLattice, g: &CVector, signal: &Torus) -> Result<SpectrumInfo> {
    let atoms = lattice.atoms(g, signal)?;
    let s = &atoms * atoms.adjoint() * C64::new(signal.cell_volume(), 0.0);
    Ok(SpectrumInfo::of_hermitian(&s))
}

/// One Gabor donor: a lattice, a window and the envelope declared for `|V_phi pi(lambda) g|`.
#[derive(Clone, Debug)]
pub struct GaborDonor {
    pub lattice: TfLattice,
    pub window: CVector,
    pub envelope: Envelope,
}

/// Orthonormal basis of the transform's range: the images of the scaled unit impulses.
pub fn tf_basis(window: &GaussWindow) -> Result<CMatrix> {
    let t = window.torus();
    let scale = C64::new(1.0 / t.cell_volume().sqrt(), 0.0);
    let impulses = CMatrix::identity(t.len(), t.len()) * scale;
    stft_columns(&impulses, window.samples(), t)
}

/// Time-frequency side family `V_phi(pi(lambda) g)` of a donor, with its envelope checked.
pub fn tf_family(donor: &GaborDonor, window: &GaussWindow) -> Result<AtomFamily> {
    let t = window.torus();
    let nodes = donor.lattice.nodes(t)?;
    let atoms = donor.lattice.atoms(&donor.window, t)?;
    let images = stft_columns(&atoms, window.samples(), t)?;
    AtomFamily::new(nodes, images)?.with_envelope(donor.envelope)
}

/// Donor frame pairs on the time-frequency side, covering and reference basis.
#[derive(Clone, Debug)]
pub struct GaborQuiltSetup {
    pub window: GaussWindow,
    pub signal_atoms: Vec<CMatrix>,
    pub template: QuiltedSystem,
    pub pou: PartitionOfUnity,
    pub basis: CMatrix,
}

/// Map every donor to the time-frequency side and prepare the quilt.
pub fn prepare_gabor_quilt(donors: &[GaborDonor], window: &GaussWindow, covering: Covering) -> Result<GaborQuiltSetup> {
    let basis = tf_basis(window)?;
    let pairs = donors
        .iter()
        .map(|d| exterior_frame_pair(&tf_family(d, window)?, &basis))
        .collect::<Result<Vec<FramePair>>>()?;
    let signal_atoms = donors
        .iter()
        .map(|d| d.lattice.atoms(&d.window, window.torus()))
        .collect::<Result<Vec<_>>>()?;
    let pou = build_partition(&covering)?;
    let template = QuiltedSystem::new(pairs, covering, 0.0)?;
    Ok(GaborQuiltSetup {
        window: window.clone(),
        signal_atoms,
        template,
        pou,
        basis,
    })
}

/// Bounds of a quilted Gabor system at one radius, computed on both sides.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaborQuilt {
    pub r: f64,
    pub selected: usize,
    /// Bounds of the selected transform-side atoms on the transform's range.
    pub tf_lower: f64,
    pub tf_upper: f64,
    /// Frame bounds of the selected signal-side atoms on the signal space.
    pub signal_lower: f64,
    pub signal_upper: f64,
}

/// Quilted Gabor system at radius `r`; empty selections report zero bounds.
pub fn quilt_gabor(setup: &GaborQuiltSetup, r: f64) -> Result<(QuiltedSystem, GaborQuilt)> {
    let q = setup.template.at_radius(r)?;
    let (tf_lower, tf_upper) = match quilted_frame_bounds(&q, &setup.basis) {
        Ok(QuiltBounds { lower, upper, .. }) => (lower, upper),
        Err(Error::EmptyQuilt) => (0.0, 0.0),
        Err(e) => return Err(e),
    };
    let (signal_lower, signal_upper) = signal_side_bounds(setup, &q);
    let report = GaborQuilt {
        r,
        selected: q.len(),
        tf_lower,
        tf_upper,
        signal_lower,
        signal_upper,
    };
    Ok((q, report))
}

fn signal_side_bounds(setup: &GaborQuiltSetup, q: &QuiltedSystem) -> (f64, f64) {
    let t = setup.window.torus();
    let cols: Vec<CVector> = q
        .index_pairs()
        .into_iter()
        .map(|(i, e)| setup.signal_atoms[i].column(e).into_owned())
        .collect();
    if cols.is_empty() {
        return (0.0, 0.0);
    }
    let g = CMatrix::from_columns(&cols);
    let s = &g * g.adjoint() * C64::new(t.cell_volume(), 0.0);
    let info = SpectrumInfo::of_hermitian(&s);
    (info.smallest().max(0.0), info.upper())
}

/// Error sweep of the time-frequency side reconstruction on transformed test signals.
pub fn gabor_sweep(setup: &GaborQuiltSetup, radii: &[f64], test_signals: &[CVector]) -> Result<SweepTable> {
    let tests = test_signals
        .iter()
        .map(|f| Ok(stft(f, &setup.window)?.values))
        .collect::<Result<Vec<_>>>()?;
    error_sweep(
        &setup.template,
        &setup.pou,
        radii,
        &tests,
        &setup.basis,
        2.0,
        &crate::grid::Weight::unit(),
    )
}

/// Certificate at the first radius whose deviation on the transform's range is below one.
pub fn certify_gabor(setup: &GaborQuiltSetup, radii: &[f64]) -> Result<Option<Certification>> {
    certify(&setup.template, &setup.pou, radii, &setup.basis)
}

/// `||V_phi f||_2 / ||f||_2 - 1`.
pub fn isometry_defect(f: &CVector, window: &GaussWindow) -> Result<f64> {
    let t = window.torus();
    let img = stft(f, window)?;
    let lhs = (img.values.norm_squared() * img.torus.cell_volume()).sqrt();
    let rhs = (f.norm_squared() * t.cell_volume()).sqrt();
    Ok(lhs / rhs - 1.0)
}

/// Largest `| |V_phi(pi(lambda) g)| - |V_phi g(. - lambda)| |` over the time-frequency grid.
pub fn covariance_defect(point: TfPoint, g: &CVector, window: &GaussWindow) -> Result<f64> {
    let t = window.torus();
    let shifted = stft(&tf_atom(point, g, t)?, window)?;
    let base = stft(g, window)?;
    let tf = &base.torus;
    let lambda = tf.snap(&[point.time, point.freq])?;
    Ok((0..tf.len())
        .map(|z| (shifted.values[z].norm() - base.values[tf.diff(z, lambda)].norm()).abs())
        .fold(0.0, f64::max))
}

/// Spectral norm of the signal-side synthesis of selected atoms; diagnostics for reports.
pub fn signal_synthesis_norm(setup: &GaborQuiltSetup, q: &QuiltedSystem) -> f64 {
    let cols: Vec<CVector> = q
        .index_pairs()
        .into_iter()
        .map(|(i, e)| setup.signal_atoms[i].column(e).into_owned())
        .collect();
    if cols.is_empty() {
        return 0.0;
    }
    spectral_norm(&(CMatrix::from_columns(&cols) * C64::new(setup.window.torus().cell_volume().sqrt(), 0.0)))
}
