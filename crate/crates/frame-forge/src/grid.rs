//! Discretized periodic domains, node sets with multiplicity and polynomial weights.
//!
//! Every distance in the crate is the torus distance of a [`Torus`]: the
//! minimum over periodic shifts of the Euclidean distance. Node positions are
//! snapped to grid points on ingestion, so all separation and density
//! statistics below are exact grid computations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Largest supported dimension.
pub const MAX_DIM: usize = 2;

/// A periodic box `[0, L_0) x ... x [0, L_{d-1})` sampled with `N_a` points per axis.
///
/// Grid points are addressed by a linear index with axis 0 varying slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct Torus {
    sides: Vec<f64>,
    points: Vec<usize>,
    axis_dist: Vec<Vec<f64>>,
}

impl Torus {
    /// Cube torus of side `side` with `points_per_axis` samples on each of `dim` axes.
    pub fn new(dim: usize, side: f64, points_per_axis: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidDomain(format!(
                "dimension {dim} is not supported (use 1 or 2)"
            )));
        }
        Self::rect(&vec![side; dim], &vec![points_per_axis; dim])
    }

    /// Rectangular torus with one side length and sample count per axis.
    pub fn rect(sides: &[f64], points: &[usize]) -> Result<Self> {
        if sides.len() != points.len() || sides.is_empty() || sides.len() > MAX_DIM {
            return Err(Error::InvalidDomain(format!(
                "need 1 or 2 axes with matching sides and sample counts, got {} and {}",
                sides.len(),
                points.len()
            )));
        }
        for (&l, &n) in sides.iter().zip(points) {
            if !(l.is_finite() && l >= 4.0) {
                return Err(Error::InvalidDomain(format!(
                    "side {l} must be finite and at least 4"
                )));
            }
            if n < 2 {
                return Err(Error::InvalidDomain(format!(
                    "points per axis {n} must be at least 2"
                )));
            }
        }
        let axis_dist = sides
            .iter()
            .zip(points)
            .map(|(&l, &n)| {
                let h = l / n as f64;
                (0..n).map(|k| k.min(n - k) as f64 * h).collect()
            })
            .collect();
        Ok(Self {
            sides: sides.to_vec(),
            points: points.to_vec(),
            axis_dist,
        })
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.sides[axis]
    }

    pub fn sides(&self) -> &[f64] {
        &self.sides
    }

    pub fn points_per_axis(&self, axis: usize) -> usize {
        self.points[axis]
    }

    pub fn shape(&self) -> &[usize] {
        &self.points
    }

    pub fn step(&self, axis: usize) -> f64 {
        self.sides[axis] / self.points[axis] as f64
    }

    /// True when all axes share side and sample count.
    pub fn is_cube(&self) -> bool {
        self.sides.windows(2).all(|w| w[0] == w[1]) && self.points.windows(2).all(|w| w[0] == w[1])
    }

    /// Smallest side; the natural scale for radii on a rectangular torus.
    pub fn min_side(&self) -> f64 {
        self.sides.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h_0 * ... * h_{d-1}` of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.step(a)).product()
    }

    /// Per-axis grid indices of a linear index.
    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        match self.dim() {
            1 => [idx, 0],
            _ => [idx / self.points[1], idx % self.points[1]],
        }
    }

    /// Linear index of per-axis grid indices, each reduced modulo its axis length.
    pub fn linear(&self, mi: [usize; MAX_DIM]) -> usize {
        match self.dim() {
            1 => mi[0] % self.points[0],
            _ => (mi[0] % self.points[0]) * self.points[1] + mi[1] % self.points[1],
        }
    }

    /// Coordinates of a grid point in `[0, L)^d`.
    pub fn coords(&self, idx: usize) -> [f64; MAX_DIM] {
        let mi = self.multi_index(idx);
        let mut c = [0.0; MAX_DIM];
        for (a, ca) in c.iter_mut().enumerate().take(self.dim()) {
            *ca = mi[a] as f64 * self.step(a);
        }
        c
    }

    /// Nearest grid point to an arbitrary position (coordinates reduced modulo the sides).
    pub fn snap(&self, position: &[f64]) -> Result<usize> {
        if position.len() != self.dim() {
            return Err(Error::LengthMismatch {
                what: "position coordinates",
                left: position.len(),
                right: self.dim(),
            });
        }
        let mut mi = [0usize; MAX_DIM];
        for a in 0..self.dim() {
            if !position[a].is_finite() {
                return Err(Error::InvalidParameter {
                    name: "position",
                    reason: format!("coordinate {} is not finite", position[a]),
                });
            }
            let n = self.points[a] as i64;
            let k = (position[a] / self.step(a)).round() as i64;
            mi[a] = k.rem_euclid(n) as usize;
        }
        Ok(self.linear(mi))
    }

    /// Grid point `a - b` (componentwise, wrapped).
    pub fn diff(&self, a: usize, b: usize) -> usize {
        let (ma, mb) = (self.multi_index(a), self.multi_index(b));
        let mut mi = [0usize; MAX_DIM];
        for ax in 0..self.dim() {
            let n = self.points[ax];
            mi[ax] = (ma[ax] + n - mb[ax]) % n;
        }
        self.linear(mi)
    }

    /// Grid point `a + b` (componentwise, wrapped).
    pub fn add(&self, a: usize, b: usize) -> usize {
        let (ma, mb) = (self.multi_index(a), self.multi_index(b));
        let mut mi = [0usize; MAX_DIM];
        for ax in 0..self.dim() {
            mi[ax] = (ma[ax] + mb[ax]) % self.points[ax];
        }
        self.linear(mi)
    }

    /// Grid point shifted by signed per-axis step counts.
    pub fn shift(&self, idx: usize, steps: [i64; MAX_DIM]) -> usize {
        let m = self.multi_index(idx);
        let mut mi = [0usize; MAX_DIM];
        for ax in 0..self.dim() {
            let n = self.points[ax] as i64;
            mi[ax] = (m[ax] as i64 + steps[ax]).rem_euclid(n) as usize;
        }
        self.linear(mi)
    }

    /// Torus distance between two grid points.
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        let (ma, mb) = (self.multi_index(a), self.multi_index(b));
        let mut s = 0.0;
        for ax in 0..self.dim() {
            let n = self.points[ax];
            let d = self.axis_dist[ax][(ma[ax] + n - mb[ax]) % n];
            s += d * d;
        }
        s.sqrt()
    }

    /// Torus distance from a grid point to the origin.
    pub fn norm(&self, a: usize) -> f64 {
        let ma = self.multi_index(a);
        let mut s = 0.0;
        for ax in 0..self.dim() {
            let d = self.axis_dist[ax][ma[ax]];
            s += d * d;
        }
        s.sqrt()
    }

    /// Torus distance between arbitrary positions.
    pub fn dist_coords(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for ax in 0..self.dim() {
            let l = self.sides[ax];
            let mut d = (x[ax] - y[ax]).rem_euclid(l);
            if d > l / 2.0 {
                d = l - d;
            }
            s += d * d;
        }
        s.sqrt()
    }

    /// Sample a function of the position on every grid point.
    pub fn sample<F: Fn([f64; MAX_DIM]) -> C64>(&self, f: F) -> Vec<C64> {
        (0..self.len()).map(|i| f(self.coords(i))).collect()
    }
}

/// Indexed point cloud on a torus; positions may repeat.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSet {
    torus: Torus,
    points: Vec<usize>,
    labels: Vec<usize>,
}

impl NodeSet {
    /// Nodes at the given grid points, labelled by their position in the list.
    pub fn from_grid_points(torus: &Torus, points: Vec<usize>) -> Result<Self> {
        if let Some(&p) = points.iter().find(|&&p| p >= torus.len()) {
            return Err(Error::InvalidParameter {
                name: "points",
                reason: format!("grid index {p} is outside the grid of {} points", torus.len()),
            });
        }
        let labels = (0..points.len()).collect();
        Ok(Self {
            torus: torus.clone(),
            points,
            labels,
        })
    }

    /// Nodes at arbitrary positions, snapped to the nearest grid points.
    pub fn from_positions(torus: &Torus, positions: &[Vec<f64>]) -> Result<Self> {
        let points = positions
            .iter()
            .map(|p| torus.snap(p))
            .collect::<Result<Vec<_>>>()?;
        Self::from_grid_points(torus, points)
    }

    /// Rectangular lattice `offset + step * Z^d` restricted to the torus.
    ///
    /// Each step must be a whole number of grid steps and divide the side.
    pub fn lattice(torus: &Torus, step: &[f64], offset: &[f64]) -> Result<Self> {
        if step.len() != torus.dim() || offset.len() != torus.dim() {
            return Err(Error::LengthMismatch {
                what: "lattice step/offset",
                left: step.len().min(offset.len()),
                right: torus.dim(),
            });
        }
        let mut counts = [1usize; MAX_DIM];
        let mut strides = [0usize; MAX_DIM];
        for a in 0..torus.dim() {
            let (stride, count) = commensurate(torus, a, step[a])?;
            strides[a] = stride;
            counts[a] = count;
        }
        let base = torus.snap(offset)?;
        let mut points = Vec::with_capacity(counts.iter().product());
        for i in 0..counts[0] {
            for j in 0..counts[1] {
                points.push(torus.shift(
                    base,
                    [(i * strides[0]) as i64, (j * strides[1]) as i64],
                ));
            }
        }
        Self::from_grid_points(torus, points)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                what: "node labels",
                left: labels.len(),
                right: self.points.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn position(&self, i: usize) -> [f64; MAX_DIM] {
        self.torus.coords(self.points[i])
    }

    /// Union with multiplicity; labels of `other` follow those of `self`.
    pub fn union(&self, other: &NodeSet) -> NodeSet {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        NodeSet {
            torus: self.torus.clone(),
            points,
            labels,
        }
    }

    /// Sub-collection at the given entry indices (labels are kept).
    pub fn subset(&self, entries: &[usize]) -> NodeSet {
        NodeSet {
            torus: self.torus.clone(),
            points: entries.iter().map(|&e| self.points[e]).collect(),
            labels: entries.iter().map(|&e| self.labels[e]).collect(),
        }
    }

    /// Every node moved by the same grid offset.
    pub fn translate(&self, steps: [i64; MAX_DIM]) -> NodeSet {
        NodeSet {
            torus: self.torus.clone(),
            points: self.points.iter().map(|&p| self.torus.shift(p, steps)).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Node counts per grid point.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.torus.len()];
        for &p in &self.points {
            h[p] += 1;
        }
        h
    }
}

/// Grid stride and count of a lattice step along one axis.
pub(crate) fn commensurate(torus: &Torus, axis: usize, step: f64) -> Result<(usize, usize)> {
    let h = torus.step(axis);
    let n = torus.points_per_axis(axis);
    let stride_f = step / h;
    let stride = stride_f.round() as usize;
    if stride == 0 || (stride_f - stride as f64).abs() > 1e-9 * stride_f.max(1.0) || n % stride != 0 {
        return Err(Error::IncommensurateLattice(format!(
            "step {step} on axis {axis} is not a divisor of the side made of whole grid steps (h = {h})"
        )));
    }
    Ok((stride, n / stride))
}

/// Polynomial weight `w_t(x) = (1 + |x|)^t`, with `|x|` the torus distance to the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    #[serde(rename = "t")]
    pub exponent: f64,
}

impl Weight {
    pub fn polynomial(exponent: f64) -> Self {
        Self { exponent }
    }

    /// The constant weight `w_0`.
    pub fn unit() -> Self {
        Self { exponent: 0.0 }
    }

    pub fn at_distance(&self, dist: f64) -> f64 {
        if self.exponent == 0.0 {
            1.0
        } else {
            (1.0 + dist).powf(self.exponent)
        }
    }

    /// Weight at a grid point.
    pub fn value(&self, torus: &Torus, idx: usize) -> f64 {
        self.at_distance(torus.norm(idx))
    }

    /// Weight evaluated at the difference of two grid points.
    pub fn between(&self, torus: &Torus, a: usize, b: usize) -> f64 {
        self.at_distance(torus.dist(a, b))
    }

    /// The weight sampled on the whole grid.
    pub fn sample(&self, torus: &Torus) -> Vec<f64> {
        (0..torus.len()).map(|i| self.value(torus, i)).collect()
    }
}

/// A weight `v` moderated by a submultiplicative weight `w`: `v(x+y) <= C v(x) w(y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeratedPair {
    pub v: Weight,
    pub w: Weight,
    pub constant: f64,
}

impl ModeratedPair {
    /// `w_t` is strictly `w_s`-moderated when `s >= 0` and `|t| <= s`.
    pub fn strict(t: f64, s: f64) -> Result<Self> {
        if s < 0.0 || t.abs() > s {
            return Err(Error::InvalidParameter {
                name: "moderation",
                reason: format!("w_{t} is not strictly moderated by w_{s}"),
            });
        }
        Ok(Self {
            v: Weight::polynomial(t),
            w: Weight::polynomial(s),
            constant: 1.0,
        })
    }

    /// Largest ratio `v(x+y) / (v(x) w(y))` over grid points within half the smallest side.
    pub fn measured_constant(&self, torus: &Torus) -> f64 {
        let half = torus.min_side() / 2.0;
        let near: Vec<usize> = (0..torus.len()).filter(|&i| torus.norm(i) <= half).collect();
        let mut worst: f64 = 0.0;
        for &x in &near {
            let vx = self.v.value(torus, x);
            for &y in &near {
                let r = self.v.value(torus, torus.add(x, y)) / (vx * self.w.value(torus, y));
                worst = worst.max(r);
            }
        }
        worst
    }

    pub fn holds(&self, torus: &Torus) -> bool {
        self.measured_constant(torus) <= self.constant * (1.0 + 1e-12)
    }
}

/// Largest number of nodes in a closed unit cube `[0,1]^d + x`, over grid anchors `x`.
///
/// Positions are grid points, so sweeping anchors at grid resolution is exact.
/// Repeated positions count with multiplicity.
pub fn rel_separation(nodes: &NodeSet) -> Result<usize> {
    if nodes.is_empty() {
        return Err(Error::EmptyNodeSet);
    }
    let t = nodes.torus();
    let hist = nodes.histogram();
    let reach: Vec<usize> = (0..t.dim())
        .map(|a| ((1.0 / t.step(a)) + 1e-9).floor() as usize)
        .collect();
    // Window sums along axis 0, then along axis 1.
    let along = |src: &[usize], axis: usize| -> Vec<usize> {
        let n = t.points_per_axis(axis);
        let span = (reach[axis] + 1).min(n);
        let mut out = vec![0usize; src.len()];
        for (idx, o) in out.iter_mut().enumerate() {
            let mut steps = [0i64; MAX_DIM];
            let mut s = 0;
            for k in 0..span {
                steps[axis] = k as i64;
                s += src[t.shift(idx, steps)];
            }
            *o = s;
        }
        out
    };
    let mut counts = along(&hist, 0);
    if t.dim() == 2 {
        counts = along(&counts, 1);
    }
    Ok(counts.into_iter().max().unwrap_or(0))
}

/// True iff every grid point lies at torus distance `< radius` from some node.
pub fn is_l_dense(nodes: &NodeSet, radius: f64) -> bool {
    let t = nodes.torus();
    let mut occupied: Vec<usize> = nodes.points().to_vec();
    occupied.sort_unstable();
    occupied.dedup();
    (0..t.len()).all(|x| occupied.iter().any(|&k| t.dist(x, k) < radius))
}

/// Weighted sequence norm `|| (|c_k| v(k))_k ||_p`; `p = f64::INFINITY` gives the supremum.
pub fn weighted_seq_norm(c: &[C64], nodes: &NodeSet, p: f64, v: &Weight) -> Result<f64> {
    if c.len() != nodes.len() {
        return Err(Error::LengthMismatch {
            what: "sequence and node set",
            left: c.len(),
            right: nodes.len(),
        });
    }
    check_exponent(p)?;
    let t = nodes.torus();
    let terms = c
        .iter()
        .zip(nodes.points())
        .map(|(ck, &k)| ck.norm() * v.value(t, k));
    Ok(lp_sum(terms, p))
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("{p} is not in [1, inf]"),
        });
    }
    Ok(())
}

/// `(sum a_i^p)^(1/p)` for nonnegative terms, or the maximum when `p` is infinite.
pub(crate) fn lp_sum<I: Iterator<Item = f64>>(terms: I, p: f64) -> f64 {
    if p.is_infinite() {
        terms.fold(0.0, f64::max)
    } else if p == 1.0 {
        terms.sum()
    } else if p == 2.0 {
        terms.map(|a| a * a).sum::<f64>().sqrt()
    } else {
        terms.map(|a| a.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Measured constants for sums of the decaying weight `w_{-t}` over a node set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvNodesReport {
    pub exponent: f64,
    pub rel: usize,
    /// `sum_g w_{-t}(g)` over the nodes (torus distances).
    pub sum: f64,
    /// Radii `M` of the tail sums.
    pub tail_radii: Vec<f64>,
    /// `sum_{|g| > M} w_{-t}(g)` over the periodic extension of the node set.
    pub tails: Vec<f64>,
    /// `sup_x sum_g w_{-t}(g) w_{-t}(x-g) / w_{-t}(x)` over grid points `x`.
    pub sup_ratio: f64,
    pub k_sum: f64,
    pub k_tail: f64,
    pub k_ratio: f64,
    /// Least-squares slope of `log tail` against `log M`.
    pub tail_slope: f64,
}

impl ConvNodesReport {
    /// Expected tail slope `-(t - d)`.
    pub fn expected_tail_slope(&self, dim: usize) -> f64 {
        -(self.exponent - dim as f64)
    }

    pub fn constants_finite(&self) -> bool {
        [self.k_sum, self.k_tail, self.k_ratio]
            .iter()
            .all(|k| k.is_finite() && *k >= 0.0)
    }
}

/// Evaluate the three node-sum estimates for `w_{-t}` and fit their constants against `rel`.
///
/// The sum and the convolution ratio use torus distances. The tail sums are
/// taken over the periodic extension of the nodes to the whole space, which is
/// a relatively separated set with the same separation; summing on the torus
/// alone would cut every tail at half the period.
pub fn conv_nodes_check(nodes: &NodeSet, t: f64) -> Result<ConvNodesReport> {
    let torus = nodes.torus();
    let d = torus.dim();
    if !(t > d as f64) {
        return Err(Error::DivergentExponent { t, dim: d });
    }
    let rel = rel_separation(nodes)?;
    let w = Weight::polynomial(-t);

    let sum: f64 = nodes.points().iter().map(|&g| w.value(torus, g)).sum();

    let l = torus.min_side();
    let tail_radii = vec![l / 8.0, l / 6.0, l / 4.0];
    let tails: Vec<f64> = tail_radii
        .iter()
        .map(|&m| lifted_tail(nodes, t, m))
        .collect();

    let wn: Vec<f64> = nodes.points().iter().map(|&g| w.value(torus, g)).collect();
    let sup_ratio = (0..torus.len())
        .map(|x| {
            let s: f64 = nodes
                .points()
                .iter()
                .zip(&wn)
                .map(|(&g, &wg)| wg * w.between(torus, x, g))
                .sum();
            s / w.value(torus, x)
        })
        .fold(0.0, f64::max);

    let relf = rel as f64;
    let k_tail = tail_radii
        .iter()
        .zip(&tails)
        .map(|(m, b)| b * m.powf(t - d as f64) / relf)
        .fold(0.0, f64::max);
    let xs: Vec<f64> = tail_radii.iter().map(|m| m.ln()).collect();
    let ys: Vec<f64> = tails.iter().map(|b| b.ln()).collect();
    let tail_slope = crate::stats::linear_fit(&xs, &ys).slope;

    Ok(ConvNodesReport {
        exponent: t,
        rel,
        sum,
        tail_radii,
        tails,
        sup_ratio,
        k_sum: sum / relf,
        k_tail,
        k_ratio: sup_ratio / relf,
        tail_slope,
    })
}

/// `sum (1+|y|)^{-t}` over periodic images `y` of the nodes with `|y| > m`.
///
/// Images are summed explicitly up to a large radius; the remainder is the
/// node density times the integral of the weight outside that radius.
fn lifted_tail(nodes: &NodeSet, t: f64, m: f64) -> f64 {
    let torus = nodes.torus();
    let d = torus.dim();
    let sides = torus.sides();
    let n_img: i64 = if d == 1 { 4096 } else { 48 };
    let r_max = (n_img - 1) as f64 * torus.min_side();
    let mut total = 0.0;
    for &g in nodes.points() {
        let c = torus.coords(g);
        let base: Vec<f64> = (0..d).map(|a| c[a] - sides[a] * (c[a] / sides[a]).round()).collect();
        let mut add = |y: f64| {
            if y > m && y <= r_max {
                total += (1.0 + y).powf(-t);
            }
        };
        if d == 1 {
            for n in -n_img..=n_img {
                add((base[0] + n as f64 * sides[0]).abs());
            }
        } else {
            for n0 in -n_img..=n_img {
                for n1 in -n_img..=n_img {
                    let y0 = base[0] + n0 as f64 * sides[0];
                    let y1 = base[1] + n1 as f64 * sides[1];
                    add((y0 * y0 + y1 * y1).sqrt());
                }
            }
        }
    }
    let volume: f64 = sides.iter().product();
    let density = nodes.len() as f64 / volume;
    let r1 = 1.0 + r_max;
    let remainder = if d == 1 {
        2.0 * r1.powf(1.0 - t) / (t - 1.0)
    } else {
        2.0 * std::f64::consts::PI * (r1.powf(2.0 - t) / (t - 2.0) - r1.powf(1.0 - t) / (t - 1.0))
    };
    total + density * remainder
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue<T> {
    Uniform(T),
    PerAxis(Vec<T>),
}

impl<T: Clone> AxisValue<T> {
    fn expand(&self, dim: usize) -> Vec<T> {
        match self {
            AxisValue::Uniform(v) => vec![v.clone(); dim],
            AxisValue::PerAxis(v) => v.clone(),
        }
    }
}

/// Structured-text form of a node set and an optional weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSetRecord {
    pub dim: usize,
    pub side: AxisValue<f64>,
    pub points_per_axis: AxisValue<usize>,
    pub positions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Weight>,
}

impl NodeSetRecord {
    pub fn from_nodes(nodes: &NodeSet, weight: Option<Weight>) -> Self {
        let t = nodes.torus();
        let d = t.dim();
        let (side, points_per_axis) = if t.is_cube() {
            (AxisValue::Uniform(t.side(0)), AxisValue::Uniform(t.points_per_axis(0)))
        } else {
            (AxisValue::PerAxis(t.sides().to_vec()), AxisValue::PerAxis(t.shape().to_vec()))
        };
        let positions = (0..nodes.len())
            .map(|i| nodes.position(i)[..d].to_vec())
            .collect();
        Self {
            dim: d,
            side,
            points_per_axis,
            positions,
            weight,
        }
    }

    pub fn torus(&self) -> Result<Torus> {
        let sides = self.side.expand(self.dim);
        let points = self.points_per_axis.expand(self.dim);
        if sides.len() != self.dim || points.len() != self.dim {
            return Err(Error::InvalidDomain(format!(
                "per-axis sides/points must have {} entries",
                self.dim
            )));
        }
        Torus::rect(&sides, &points)
    }

    pub fn to_nodes(&self) -> Result<NodeSet> {
        NodeSet::from_positions(&self.torus()?, &self.positions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(side: f64, n: usize) -> Torus {
        Torus::new(1, side, n).unwrap()
    }

    fn at(t: &Torus, xs: &[f64]) -> NodeSet {
        let pos: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        NodeSet::from_positions(t, &pos).unwrap()
    }

    // Anchors at every grid point; count nodes whose offset from the anchor is in [0, 1].
    fn brute_rel(nodes: &NodeSet) -> usize {
        let t = nodes.torus();
        (0..t.len())
            .map(|a| {
                nodes
                    .points()
                    .iter()
                    .filter(|&&p| {
                        let off = t.diff(p, a);
                        (0..t.dim()).all(|ax| t.coords(off)[ax] <= 1.0 + 1e-9)
                    })
                    .count()
            })
            .max()
            .unwrap()
    }

    #[test]
    fn rel_separation_of_integers_is_two() {
        let t = line(10.0, 100);
        let ints: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(rel_separation(&at(&t, &ints)).unwrap(), 2);
    }

    #[test]
    fn rel_separation_counts_multiplicity() {
        let t = line(10.0, 100);
        assert_eq!(rel_separation(&at(&t, &[0.0, 0.0, 5.0])).unwrap(), 2);
    }

    #[test]
    fn rel_separation_of_empty_set_fails() {
        let t = line(10.0, 100);
        let e = rel_separation(&at(&t, &[])).unwrap_err();
        assert_eq!(e.to_string(), "empty node set");
    }

    #[test]
    fn rel_separation_matches_anchor_sweep_on_random_points() {
        let t = line(10.0, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..10.0)).collect();
        let nodes = at(&t, &xs);
        assert_eq!(rel_separation(&nodes).unwrap(), brute_rel(&nodes));
    }

    #[test]
    fn rel_separation_in_two_dimensions() {
        let t = Torus::new(2, 8.0, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pos: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random_range(0.0..8.0), rng.random_range(0.0..8.0)])
            .collect();
        let nodes = NodeSet::from_positions(&t, &pos).unwrap();
        assert_eq!(rel_separation(&nodes).unwrap(), brute_rel(&nodes));
        let lat = NodeSet::lattice(&t, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(rel_separation(&lat).unwrap(), 4);
    }

    #[test]
    fn density_of_integers() {
        let t = line(10.0, 100);
        let ints = at(&t, &(0..10).map(f64::from).collect::<Vec<_>>());
        assert!(is_l_dense(&ints, 0.6));
        assert!(!is_l_dense(&ints, 0.4));
    }

    #[test]
    fn density_at_measured_covering_radius() {
        let t = line(10.0, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..10.0)).collect();
        let nodes = at(&t, &xs);
        let covering = (0..t.len())
            .map(|x| nodes.points().iter().map(|&k| t.dist(x, k)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        assert!(is_l_dense(&nodes, covering + t.step(0)));
        assert!(!is_l_dense(&nodes, covering));
    }

    #[test]
    fn weighted_norms_by_substitution() {
        let t = line(10.0, 100);
        let nodes = at(&t, &[0.0, 1.0, 2.0]);
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        for p in [1.0, 2.0, f64::INFINITY] {
            let n = weighted_seq_norm(&[one, zero, zero], &nodes, p, &Weight::polynomial(2.0)).unwrap();
            assert_eq!(n, 1.0);
        }
        let n = weighted_seq_norm(&[one; 3], &nodes, 1.0, &Weight::polynomial(1.0)).unwrap();
        assert!((n - 6.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_norm_matches_naive_sum() {
        let t = line(10.0, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..10.0)).collect();
        let nodes = at(&t, &xs);
        let c: Vec<C64> = (0..20)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let v = Weight::polynomial(1.5);
        let mut naive = 0.0;
        for (i, ci) in c.iter().enumerate() {
            let x = nodes.position(i)[0];
            let d = x.min(10.0 - x);
            naive += (ci.norm() * (1.0 + d).powf(1.5)).powi(2);
        }
        let n = weighted_seq_norm(&c, &nodes, 2.0, &v).unwrap();
        assert!((n - naive.sqrt()).abs() < 1e-10 * n);
    }

    #[test]
    fn conv_nodes_on_integers() {
        let t = line(32.0, 512);
        let ints = at(&t, &(0..32).map(f64::from).collect::<Vec<_>>());
        let r = conv_nodes_check(&ints, 2.0).unwrap();
        assert!(r.constants_finite());
        // Direct sum: 1 + 2 sum_{n=1}^{15} (1+n)^-2 + (1+16)^-2.
        let direct: f64 = 1.0
            + 2.0 * (1..16).map(|n| (1.0 + n as f64).powi(-2)).sum::<f64>()
            + 17f64.powi(-2);
        assert!((r.sum - direct).abs() < 1e-12);
        assert!(r.sum <= r.k_sum * 2.0 + 1e-12);
        assert!((r.tail_slope - r.expected_tail_slope(1)).abs() < 0.3);
    }

    #[test]
    fn conv_nodes_single_node_ratio_is_one() {
        let t = line(16.0, 128);
        let r = conv_nodes_check(&at(&t, &[0.0]), 2.0).unwrap();
        assert!((r.sup_ratio - 1.0).abs() < 1e-14);
    }

    #[test]
    fn conv_nodes_rejects_small_exponent() {
        let t = line(16.0, 128);
        let e = conv_nodes_check(&at(&t, &[0.0]), 1.0).unwrap_err();
        assert!(e.to_string().starts_with("divergent exponent"));
    }

    #[test]
    fn lattice_requires_commensurate_step() {
        let t = line(16.0, 128);
        assert!(NodeSet::lattice(&t, &[1.0], &[0.0]).is_ok());
        assert!(matches!(
            NodeSet::lattice(&t, &[0.3], &[0.0]),
            Err(Error::IncommensurateLattice(_))
        ));
        assert!(Torus::new(1, 2.0, 16).is_err());
    }

    #[test]
    fn record_round_trip() {
        let t = Torus::rect(&[16.0, 8.0], &[64, 32]).unwrap();
        let nodes = NodeSet::lattice(&t, &[2.0, 1.0], &[0.25, 0.5]).unwrap();
        let rec = NodeSetRecord::from_nodes(&nodes, Some(Weight::polynomial(2.0)));
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"weight\":{\"t\":2.0}"));
        let back: NodeSetRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_nodes().unwrap().points(), nodes.points());
    }

    #[test]
    fn strict_moderation_holds_with_unit_constant() {
        let t = line(16.0, 64);
        for (tt, s) in [(0.0, 0.0), (1.0, 1.0), (-2.0, 2.0), (0.5, 3.0)] {
            assert!(ModeratedPair::strict(tt, s).unwrap().holds(&t));
        }
        assert!(ModeratedPair::strict(2.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn rel_separation_is_translation_invariant(
            xs in prop::collection::vec(0.0f64..16.0, 1..40),
            shift in -200i64..200,
        ) {
            let t = line(16.0, 64);
            let nodes = at(&t, &xs);
            prop_assert_eq!(
                rel_separation(&nodes).unwrap(),
                rel_separation(&nodes.translate([shift, 0])).unwrap()
            );
        }

        #[test]
        fn rel_separation_is_subadditive(
            xs in prop::collection::vec(0.0f64..16.0, 1..30),
            ys in prop::collection::vec(0.0f64..16.0, 1..30),
        ) {
            let t = line(16.0, 64);
            let (a, b) = (at(&t, &xs), at(&t, &ys));
            let u = rel_separation(&a.union(&b)).unwrap();
            prop_assert!(u <= rel_separation(&a).unwrap() + rel_separation(&b).unwrap());
        }

        #[test]
        fn weight_is_symmetric(t_exp in -4.0f64..4.0, i in 0usize..96) {
            let t = line(12.0, 96);
            let w = Weight::polynomial(t_exp);
            let minus = t.diff(0, i);
            prop_assert_eq!(w.value(&t, i), w.value(&t, minus));
        }

        #[test]
        fn strict_moderation_for_all_admissible_pairs(s in 0.0f64..4.0, frac in -1.0f64..1.0) {
            let t = line(8.0, 32);
            let pair = ModeratedPair::strict(s * frac, s).unwrap();
            prop_assert!(pair.holds(&t));
        }
    }
}
