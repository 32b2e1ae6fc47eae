//! Product-kernel density and derivative estimates.
//!
//! `f̂(x) = (n Π h_j)⁻¹ Σ_i Π_j K((x_j − X_ij)/h_j)`. A derivative of order
//! `m_j` in coordinate `j` replaces `K` by `K^{(m_j)}` and adds a factor
//! `h_j^{−m_j}`.
//!
//! Sums over the sample are accumulated in eight interleaved lanes that are
//! combined pairwise at the end. Pointwise and grid evaluation share this
//! summation and the node-coordinate formula, so a grid value is bit-identical
//! to [`kde_at`] at the same node.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;
use crate::sample::Sample;

/// Largest number of grid nodes accepted.
pub const MAX_GRID_NODES: usize = 1 << 26;
/// Default grid resolution per axis for `d = 1`.
pub const DEFAULT_RES_1D: usize = 4096;
/// Default grid resolution per axis for `d = 2`.
pub const DEFAULT_RES_2D: usize = 512;
/// Default grid margin around the sample, in units of `max h`.
pub const DEFAULT_MARGIN: f64 = 4.0;

// Kernel tables for d = 2 grids are used while they fit in this budget.
const TABLE_BUDGET_BYTES: usize = 512 << 20;
/// Truncation radius, in bandwidths, of the tabulated two-dimensional grid
/// path; kernel derivatives up to order six are below `1e-15` relative
/// beyond it.
const GRID_RADIUS: f64 = 10.0;

/// Per-coordinate positive bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthVector {
    h: Vec<f64>,
}

impl BandwidthVector {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::arg("bandwidth vector is empty"));
        }
        if let Some(bad) = h.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::arg(format!("bandwidth {bad} is not positive and finite")));
        }
        Ok(Self { h })
    }

    /// The same bandwidth `h` in every one of `d` coordinates.
    pub fn isotropic(h: f64, d: usize) -> Result<Self> {
        Self::new(vec![h; d])
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.h
    }

    pub fn max(&self) -> f64 {
        self.h.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn product(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.h.iter().map(|v| v * factor).collect())
    }
}

impl std::ops::Index<usize> for BandwidthVector {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.h[j]
    }
}

/// A rectangular lattice: `resolution[j]` nodes per axis spanning
/// `[lo_j, hi_j]` inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub bounds: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(bounds: Vec<(f64, f64)>, resolution: Vec<usize>) -> Result<Self> {
        check_dim(bounds.len(), resolution.len())?;
        if bounds.is_empty() {
            return Err(Error::arg("grid needs at least one axis"));
        }
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::arg(format!("axis {j}: bounds ({lo}, {hi}) are not increasing")));
            }
        }
        if let Some(&r) = resolution.iter().find(|&&r| r < 2) {
            return Err(Error::arg(format!("grid resolution {r} is below 2")));
        }
        let total = resolution
            .iter()
            .try_fold(1usize, |acc, &r| acc.checked_mul(r))
            .filter(|&t| t <= MAX_GRID_NODES)
            .ok_or_else(|| Error::arg(format!("grid exceeds {MAX_GRID_NODES} nodes")))?;
        debug_assert!(total >= 2);
        Ok(Self { bounds, resolution })
    }

    /// Sample bounding box widened by `margin · max(h)` per side.
    pub fn around_sample(sample: &Sample, h: &BandwidthVector, margin: f64, res: usize) -> Result<Self> {
        let pad = margin * h.max();
        let bounds = sample.bounding_box().into_iter().map(|(lo, hi)| (lo - pad, hi + pad)).collect();
        Self::new(bounds, vec![res; sample.dim()])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `k` on `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        lo + (hi - lo) * k as f64 / (self.resolution[axis] - 1) as f64
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.resolution[axis]).map(|k| self.coord(axis, k)).collect()
    }

    /// Node spacing on `axis`.
    pub fn step(&self, axis: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        (hi - lo) / (self.resolution[axis] - 1) as f64
    }

    /// Multi-index of the flat (row-major, last axis fastest) node index.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            idx[j] = flat % self.resolution[j];
            flat /= self.resolution[j];
        }
        idx
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat).iter().enumerate().map(|(j, &k)| self.coord(j, k)).collect()
    }
}

/// Values on the nodes of a [`GridSpec`], row-major with the last axis
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_dim(spec.len(), values.len())?;
        Ok(Self { spec, values })
    }

    /// Evaluates `f` on every node in parallel.
    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync>(spec: GridSpec, f: F) -> Self {
        let values = (0..spec.len())
            .into_par_iter()
            .map_init(Vec::new, |x, flat| {
                x.clear();
                x.extend(spec.node(flat));
                f(x)
            })
            .collect();
        Self { spec, values }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Value at node `(i, j)` of a two-dimensional field.
    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.spec.resolution[1] + j]
    }

    /// Trapezoid-rule integral of the field over its box.
    pub fn trapezoid(&self) -> f64 {
        let d = self.dim();
        let cell: f64 = (0..d).map(|j| self.spec.step(j)).product();
        let mut total = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            let idx = self.spec.unravel(flat);
            let w: f64 = idx
                .iter()
                .zip(&self.spec.resolution)
                .map(|(&k, &r)| if k == 0 || k == r - 1 { 0.5 } else { 1.0 })
                .product();
            total += w * v;
        }
        total * cell
    }
}

/// Eight-lane accumulator; lane `i mod 8` receives term `i`.
#[derive(Default, Clone, Copy)]
pub(crate) struct Lanes([f64; 8]);

impl Lanes {
    #[inline(always)]
    pub(crate) fn add(&mut self, i: usize, v: f64) {
        self.0[i & 7] += v;
    }

    #[inline(always)]
    pub(crate) fn total(&self) -> f64 {
        let a = &self.0;
        ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]))
    }
}

fn check_inputs(sample: &Sample, h: &BandwidthVector, x_len: Option<usize>) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::arg("sample is empty"));
    }
    check_dim(sample.dim(), h.dim())?;
    if let Some(len) = x_len {
        check_dim(sample.dim(), len)?;
    }
    Ok(())
}

/// Per-coordinate derivative orders from a list of coordinate indices.
fn derivative_orders(d: usize, index: &[usize]) -> Result<Vec<usize>> {
    if index.len() > crate::kernels::MAX_KERNEL_DERIVATIVE {
        return Err(Error::arg(format!(
            "derivative order {} exceeds {}",
            index.len(),
            crate::kernels::MAX_KERNEL_DERIVATIVE
        )));
    }
    let mut orders = vec![0; d];
    for &j in index {
        if j >= d {
            return Err(Error::arg(format!("coordinate index {j} out of range for d = {d}")));
        }
        orders[j] += 1;
    }
    Ok(orders)
}

fn normaliser(n: usize, h: &[f64], orders: &[usize]) -> f64 {
    let scale: f64 = h.iter().zip(orders).map(|(&hj, &m)| hj.powi(1 + m as i32)).product();
    1.0 / (n as f64 * scale)
}

#[inline]
fn raw_sum(sample: &Sample, h: &[f64], spec: &KernelSpec, x: &[f64], orders: &[usize]) -> f64 {
    let d = x.len();
    let mut lanes = Lanes::default();
    for (i, p) in sample.points().enumerate() {
        let mut prod = spec.eval_unchecked((x[0] - p[0]) / h[0], orders[0]);
        for j in 1..d {
            prod *= spec.eval_unchecked((x[j] - p[j]) / h[j], orders[j]);
        }
        lanes.add(i, prod);
    }
    lanes.total()
}

/// `f̂(x)`. Negative values are possible for kernels of order above two.
pub fn kde_at(sample: &Sample, h: &BandwidthVector, spec: &KernelSpec, x: &[f64]) -> Result<f64> {
    kde_partial_at(sample, h, spec, x, &[])
}

/// Partial derivative of `f̂` at `x`; `index` lists zero-based coordinates,
/// so `[0, 0]` is the second derivative in the first coordinate.
pub fn kde_partial_at(
    sample: &Sample,
    h: &BandwidthVector,
    spec: &KernelSpec,
    x: &[f64],
    index: &[usize],
) -> Result<f64> {
    check_inputs(sample, h, Some(x.len()))?;
    let orders = derivative_orders(sample.dim(), index)?;
    let norm = normaliser(sample.len(), h.as_slice(), &orders);
    Ok(raw_sum(sample, h.as_slice(), spec, x, &orders) * norm)
}

/// `∇f̂(x)`.
pub fn kde_gradient_at(sample: &Sample, h: &BandwidthVector, spec: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    (0..sample.dim()).map(|j| kde_partial_at(sample, h, spec, x, &[j])).collect()
}

/// `f̂` on every node of `grid`.
pub fn kde_grid(sample: &Sample, h: &BandwidthVector, spec: &KernelSpec, grid: &GridSpec) -> Result<GridField> {
    kde_partial_grid(sample, h, spec, grid, &[])
}

/// A partial derivative of `f̂` on every node of `grid`.
pub fn kde_partial_grid(
    sample: &Sample,
    h: &BandwidthVector,
    spec: &KernelSpec,
    grid: &GridSpec,
    index: &[usize],
) -> Result<GridField> {
    check_inputs(sample, h, None)?;
    check_dim(sample.dim(), grid.dim())?;
    let orders = derivative_orders(sample.dim(), index)?;
    let norm = normaliser(sample.len(), h.as_slice(), &orders);
    let n = sample.len();
    let table_bytes = (grid.resolution.iter().sum::<usize>()) * n * 8;
    let values = if grid.dim() == 2 && table_bytes <= TABLE_BUDGET_BYTES {
        grid_2d_tables(sample, h.as_slice(), spec, grid, &orders, norm)
    } else {
        let field = GridField::from_fn(grid.clone(), |x| raw_sum(sample, h.as_slice(), spec, x, &orders) * norm);
        field.values
    };
    GridField::new(grid.clone(), values)
}

/// [`kde_grid`] for bivariate samples with observations further than
/// `GRID_RADIUS` bandwidths from a node (in the first coordinate) left out.
/// Values agree with [`kde_grid`] to about `1e-15` relative but are not
/// bit-identical; other dimensions fall back to [`kde_grid`].
pub fn kde_grid_truncated(sample: &Sample, h: &BandwidthVector, spec: &KernelSpec, grid: &GridSpec) -> Result<GridField> {
    check_inputs(sample, h, None)?;
    check_dim(sample.dim(), grid.dim())?;
    if grid.dim() != 2 || grid.resolution[1] * sample.len() * 8 > TABLE_BUDGET_BYTES {
        return kde_grid(sample, h, spec, grid);
    }
    let norm = normaliser(sample.len(), h.as_slice(), &[0, 0]);
    let values = grid_2d_truncated(sample, h.as_slice(), spec, grid, &[0, 0], norm);
    GridField::new(grid.clone(), values)
}

fn axis_table(sample: &Sample, h: f64, spec: &KernelSpec, grid: &GridSpec, axis: usize, order: usize) -> Vec<f64> {
    let n = sample.len();
    let data = sample.column(axis);
    let mut table = vec![0.0; grid.resolution[axis] * n];
    table.par_chunks_mut(n).enumerate().for_each(|(k, row)| {
        let x = grid.coord(axis, k);
        for (t, &xi) in row.iter_mut().zip(&data) {
            *t = spec.eval_unchecked((x - xi) / h, order);
        }
    });
    table
}

fn grid_2d_tables(
    sample: &Sample,
    h: &[f64],
    spec: &KernelSpec,
    grid: &GridSpec,
    orders: &[usize],
    norm: f64,
) -> Vec<f64> {
    let n = sample.len();
    let t0 = axis_table(sample, h[0], spec, grid, 0, orders[0]);
    let t1 = axis_table(sample, h[1], spec, grid, 1, orders[1]);
    let (r0, r1) = (grid.resolution[0], grid.resolution[1]);
    let mut values = vec![0.0; r0 * r1];
    values.par_chunks_mut(r1).enumerate().for_each(|(i, row)| {
        let a = &t0[i * n..(i + 1) * n];
        for (j, out) in row.iter_mut().enumerate() {
            let b = &t1[j * n..(j + 1) * n];
            *out = lane_dot(a, b) * norm;
        }
    });
    values
}

// Rows of the first axis only see observations within `GRID_RADIUS · h₀`
// in that coordinate, a contiguous run once the sample is sorted by it.
fn grid_2d_truncated(
    sample: &Sample,
    h: &[f64],
    spec: &KernelSpec,
    grid: &GridSpec,
    orders: &[usize],
    norm: f64,
) -> Vec<f64> {
    let n = sample.len();
    let sorted = sample.sorted_by_first();
    let xs = sorted.column(0);
    let t1 = axis_table(&sorted, h[1], spec, grid, 1, orders[1]);
    let reach = spec.support_radius.unwrap_or(GRID_RADIUS) * h[0];
    let (r0, r1) = (grid.resolution[0], grid.resolution[1]);
    let mut values = vec![0.0; r0 * r1];
    values.par_chunks_mut(r1).enumerate().for_each(|(i, row)| {
        let x = grid.coord(0, i);
        let lo = xs.partition_point(|&v| v < x - reach);
        let hi = xs.partition_point(|&v| v <= x + reach);
        if lo == hi {
            return;
        }
        let a: Vec<f64> = xs[lo..hi].iter().map(|&xi| spec.eval_unchecked((x - xi) / h[0], orders[0])).collect();
        for (j, out) in row.iter_mut().enumerate() {
            *out = lane_dot(&a, &t1[j * n + lo..j * n + hi]) * norm;
        }
    });
    values
}

#[inline]
fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    for (l, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        lanes[l] += x * y;
    }
    Lanes(lanes).total()
}

/// Fast one-dimensional evaluator over a sorted copy of the sample.
///
/// Only observations within `radius · h` of the evaluation point contribute,
/// so values differ from [`kde_at`] by at most the kernel tail mass beyond
/// the radius (below `1e-14` relative for the Gaussian at radius 8).
#[derive(Debug, Clone)]
pub struct SortedKde1 {
    data: Vec<f64>,
    h: f64,
    spec: KernelSpec,
    radius: f64,
}

impl SortedKde1 {
    pub fn new(sample: &Sample, h: f64, spec: &KernelSpec) -> Result<Self> {
        check_dim(1, sample.dim())?;
        if sample.is_empty() {
            return Err(Error::arg("sample is empty"));
        }
        BandwidthVector::new(vec![h])?;
        let mut data = sample.as_slice().to_vec();
        data.sort_unstable_by(f64::total_cmp);
        Ok(Self {
            data,
            h,
            spec: spec.clone(),
            radius: crate::kernels::TRUNCATION_RADIUS,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `f̂^{(m)}(x)`.
    pub fn eval(&self, x: f64, m: usize) -> f64 {
        let lo = self.data.partition_point(|&v| v < x - self.radius * self.h);
        let hi = self.data.partition_point(|&v| v <= x + self.radius * self.h);
        let mut lanes = Lanes::default();
        for (i, &xi) in self.data[lo..hi].iter().enumerate() {
            lanes.add(i, self.spec.eval_unchecked((x - xi) / self.h, m));
        }
        lanes.total() / (self.data.len() as f64 * self.h.powi(1 + m as i32))
    }

    pub fn density(&self, x: f64) -> f64 {
        self.eval(x, 0)
    }

    /// Interval outside of which `f̂` vanishes up to the truncation.
    pub fn support(&self) -> (f64, f64) {
        let pad = self.radius * self.h;
        (self.data[0] - pad, self.data[self.data.len() - 1] + pad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixtures::MixtureModel;
    use proptest::prelude::*;

    fn phi(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn single_point_values() {
        let g = KernelSpec::gaussian();
        let s = Sample::from_1d(vec![0.0]).unwrap();
        let h = BandwidthVector::new(vec![1.0]).unwrap();
        assert!((kde_at(&s, &h, &g, &[0.0]).unwrap() - 0.398942).abs() < 1e-6);
        assert_eq!(kde_partial_at(&s, &h, &g, &[0.0], &[0]).unwrap(), 0.0);
        let s2 = Sample::new(2, vec![0.0, 0.0]).unwrap();
        let h2 = BandwidthVector::new(vec![1.0, 1.0]).unwrap();
        assert!((kde_at(&s2, &h2, &g, &[0.0, 0.0]).unwrap() - 0.159155).abs() < 1e-6);
        let pair = Sample::from_1d(vec![-1.0, 1.0]).unwrap();
        assert!((kde_at(&pair, &h, &g, &[0.0]).unwrap() - phi(1.0)).abs() < 1e-15);
    }

    #[test]
    fn first_derivative_at_half_bandwidth() {
        let g = KernelSpec::gaussian();
        let s = Sample::from_1d(vec![0.0]).unwrap();
        let h = BandwidthVector::new(vec![0.5]).unwrap();
        let v = kde_partial_at(&s, &h, &g, &[0.5], &[0]).unwrap();
        let step = 1e-6;
        let fd = (kde_at(&s, &h, &g, &[0.5 + step]).unwrap() - kde_at(&s, &h, &g, &[0.5 - step]).unwrap())
            / (2.0 * step);
        assert!((v - fd).abs() < 1e-8);
        assert!((v + 4.0 * phi(1.0)).abs() < 1e-14);
    }

    #[test]
    fn argument_errors() {
        let g = KernelSpec::gaussian();
        let h = BandwidthVector::new(vec![1.0]).unwrap();
        let empty = Sample::new(1, vec![]).unwrap();
        assert!(kde_at(&empty, &h, &g, &[0.0]).is_err());
        assert!(BandwidthVector::new(vec![0.0]).is_err());
        assert!(GridSpec::new(vec![(0.0, 1.0); 2], vec![1 << 14, 1 << 13]).is_err());
        assert!(GridSpec::new(vec![(1.0, 0.0)], vec![4]).is_err());
    }

    #[test]
    fn two_node_grid() {
        let g = KernelSpec::gaussian();
        let s = Sample::from_1d(vec![0.3]).unwrap();
        let h = BandwidthVector::new(vec![0.7]).unwrap();
        let grid = GridSpec::new(vec![(-1.0, 1.0)], vec![2]).unwrap();
        let f = kde_grid(&s, &h, &g, &grid).unwrap();
        assert_eq!(f.values, vec![kde_at(&s, &h, &g, &[-1.0]).unwrap(), kde_at(&s, &h, &g, &[1.0]).unwrap()]);
    }

    #[test]
    fn truncated_grid_matches_exact_grid() {
        let g = KernelSpec::gaussian();
        let s = MixtureModel::m13().sample(500, 9).unwrap();
        let h = BandwidthVector::new(vec![0.05, 0.1]).unwrap();
        let grid = GridSpec::around_sample(&s, &h, DEFAULT_MARGIN, 96).unwrap();
        let exact = kde_grid(&s, &h, &g, &grid).unwrap();
        let fast = kde_grid_truncated(&s, &h, &g, &grid).unwrap();
        let peak = exact.values.iter().cloned().fold(0.0, f64::max);
        for (a, b) in exact.values.iter().zip(&fast.values) {
            assert!((a - b).abs() <= 1e-14 * peak, "{a} vs {b}");
        }
    }

    #[test]
    fn grid_integrates_to_one() {
        let g = KernelSpec::gaussian();
        let s = MixtureModel::standard_normal(1).unwrap().sample(10_000, 3).unwrap();
        let h = BandwidthVector::new(vec![0.3]).unwrap();
        let grid = GridSpec::new(vec![(-6.0, 6.0)], vec![4096]).unwrap();
        let total = kde_grid(&s, &h, &g, &grid).unwrap().trapezoid();
        assert!((0.99..=1.01).contains(&total), "{total}");
    }

    #[test]
    fn grid_values_are_bit_identical_to_pointwise() {
        let g = KernelSpec::gaussian();
        let m = MixtureModel::by_id("D").unwrap();
        let s = m.sample(300, 4).unwrap();
        let h = BandwidthVector::new(vec![0.4, 0.25]).unwrap();
        let grid = GridSpec::around_sample(&s, &h, DEFAULT_MARGIN, 37).unwrap();
        for index in [vec![], vec![0], vec![1, 1], vec![0, 1]] {
            let field = kde_partial_grid(&s, &h, &g, &grid, &index).unwrap();
            for flat in [0, 5, 400, 777, grid.len() - 1] {
                let x = grid.node(flat);
                let direct = kde_partial_at(&s, &h, &g, &x, &index).unwrap();
                assert_eq!(field.values[flat].to_bits(), direct.to_bits(), "{index:?} at {flat}");
            }
        }
        let s1 = MixtureModel::standard_normal(1).unwrap().sample(101, 2).unwrap();
        let h1 = BandwidthVector::new(vec![0.3]).unwrap();
        let grid1 = GridSpec::around_sample(&s1, &h1, DEFAULT_MARGIN, 129).unwrap();
        let field1 = kde_grid(&s1, &h1, &g, &grid1).unwrap();
        for flat in [0, 64, 128] {
            let direct = kde_at(&s1, &h1, &g, &grid1.node(flat)).unwrap();
            assert_eq!(field1.values[flat].to_bits(), direct.to_bits());
        }
    }

    #[test]
    fn sorted_evaluator_matches_exact_sum() {
        let g = KernelSpec::gaussian();
        let s = MixtureModel::standard_normal(1).unwrap().sample(5000, 8).unwrap();
        let fast = SortedKde1::new(&s, 0.2, &g).unwrap();
        let h = BandwidthVector::new(vec![0.2]).unwrap();
        for &x in &[-2.5, -0.3, 0.0, 1.7] {
            for m in 0..3 {
                let exact = kde_partial_at(&s, &h, &g, &[x], &vec![0; m]).unwrap();
                assert!((fast.eval(x, m) - exact).abs() < 1e-12 * (1.0 + exact.abs()));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn translation_equivariance(vx in -5.0f64..5.0, vy in -5.0f64..5.0, seed in 0u64..1000) {
            let g = KernelSpec::gaussian();
            let s = MixtureModel::by_id("B").unwrap().sample(60, seed).unwrap();
            let h = BandwidthVector::new(vec![0.5, 0.3]).unwrap();
            let grid = GridSpec::around_sample(&s, &h, 2.0, 9).unwrap();
            let shifted_grid = GridSpec::new(
                grid.bounds.iter().zip([vx, vy]).map(|(&(lo, hi), v)| (lo + v, hi + v)).collect(),
                grid.resolution.clone(),
            ).unwrap();
            let a = kde_grid(&s, &h, &g, &grid).unwrap();
            let b = kde_grid(&s.translated(&[vx, vy]), &h, &g, &shifted_grid).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn derivatives_match_finite_differences(x in -2.0f64..2.0, y in -2.0f64..2.0, seed in 0u64..1000, fam in 0u8..2) {
            let spec = if fam == 0 { KernelSpec::gaussian() } else { KernelSpec::gaussian4() };
            let s = MixtureModel::by_id("C").unwrap().sample(40, seed).unwrap();
            let h = BandwidthVector::new(vec![0.6, 0.45]).unwrap();
            let step = 1e-5;
            for index in [vec![0], vec![1], vec![0, 0], vec![0, 1]] {
                let (&last, head) = index.split_last().unwrap();
                let mut p = [x, y];
                let mut q = [x, y];
                p[last] += step;
                q[last] -= step;
                let fd = (kde_partial_at(&s, &h, &spec, &p, head).unwrap()
                    - kde_partial_at(&s, &h, &spec, &q, head).unwrap()) / (2.0 * step);
                let exact = kde_partial_at(&s, &h, &spec, &[x, y], &index).unwrap();
                prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-2));
            }
        }
    }
}
