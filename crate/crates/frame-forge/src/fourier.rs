//! Discrete Fourier transforms on a torus grid with continuous-transform scaling.
//!
//! `hat f(xi) = h^d sum_y f(y) e^{-2 pi i xi . y}` at frequencies `xi = j / L` per axis,
//! so that `<f, g> = (1 / vol) sum_xi hat f(xi) conj(hat g(xi))` with `vol` the torus volume.

use rustfft::FftPlanner;

use crate::grid::Torus;
use crate::{CVector, C64};

fn transform(torus: &Torus, data: &mut [C64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let shape = torus.shape();
    match torus.dim() {
        1 => {
            let fft = if inverse {
                planner.plan_fft_inverse(shape[0])
            } else {
                planner.plan_fft_forward(shape[0])
            };
            fft.process(data);
        }
        _ => {
            let (n0, n1) = (shape[0], shape[1]);
            let fft1 = if inverse {
                planner.plan_fft_inverse(n1)
            } else {
                planner.plan_fft_forward(n1)
            };
            for row in data.chunks_mut(n1) {
                fft1.process(row);
            }
            let fft0 = if inverse {
                planner.plan_fft_inverse(n0)
            } else {
                planner.plan_fft_forward(n0)
            };
            let mut col = vec![C64::new(0.0, 0.0); n0];
            for j in 0..n1 {
                for i in 0..n0 {
                    col[i] = data[i * n1 + j];
                }
                fft0.process(&mut col);
                for i in 0..n0 {
                    data[i * n1 + j] = col[i];
                }
            }
        }
    }
}

/// Fourier transform of a grid function, indexed like the grid (index `j` is frequency `j / L`).
pub fn forward(torus: &Torus, f: &CVector) -> CVector {
    let mut data: Vec<C64> = f.iter().cloned().collect();
    transform(torus, &mut data, false);
    let h = torus.cell_volume();
    CVector::from_iterator(data.len(), data.into_iter().map(|z| z * h))
}

/// Inverse of [`forward`].
pub fn inverse(torus: &Torus, fhat: &CVector) -> CVector {
    let mut data: Vec<C64> = fhat.iter().cloned().collect();
    transform(torus, &mut data, true);
    let vol: f64 = torus.sides().iter().product();
    CVector::from_iterator(data.len(), data.into_iter().map(|z| z / vol))
}

/// Frequency grid dual to `torus`: sides `N_a / L_a`, same sample counts.
pub fn dual_torus(torus: &Torus) -> crate::Result<Torus> {
    let sides: Vec<f64> = (0..torus.dim())
        .map(|a| torus.points_per_axis(a) as f64 / torus.side(a))
        .collect();
    Torus::rect(&sides, torus.shape())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amalgam::inner;

    #[test]
    fn round_trip_and_parseval() {
        let t = Torus::rect(&[16.0, 8.0], &[32, 16]).unwrap();
        let f = CVector::from_iterator(t.len(), (0..t.len()).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.37).cos())));
        let g = CVector::from_iterator(t.len(), (0..t.len()).map(|i| C64::new((i as f64 * 1.3).cos(), 0.2)));
        let back = inverse(&t, &forward(&t, &f));
        assert!((back - &f).norm() < 1e-12 * f.norm());
        let vol = 16.0 * 8.0;
        let lhs = inner(&t, &f, &g);
        let rhs = forward(&t, &g).dotc(&forward(&t, &f)) / vol;
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn pure_exponential_lands_in_one_bin() {
        let t = Torus::new(1, 8.0, 32).unwrap();
        let j = 3usize;
        let f = CVector::from_iterator(t.len(), (0..t.len()).map(|i| {
            let y = t.coords(i)[0];
            C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / 8.0 * y)
        }));
        let fh = forward(&t, &f);
        for (k, z) in fh.iter().enumerate() {
            let expected = if k == j { 8.0 } else { 0.0 };
            assert!((z.norm() - expected).abs() < 1e-10);
        }
    }
}
