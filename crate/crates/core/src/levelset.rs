//! Boundaries `{f = c}` of level sets and integrals along them.
//!
//! In one dimension the boundary is a finite set of crossings located by a
//! dense scan followed by bisection. In two dimensions it is a set of
//! polylines traced by marching squares with linear interpolation on cell
//! edges; ambiguous saddle cells are resolved by the mean of the four
//! corners. A node belongs to the region when its value is `>= c`.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kde::GridField;

/// Default number of scan points for [`extract_d1`].
pub const DEFAULT_SCAN_RESOLUTION: usize = 8192;
/// Bisection stops once `|f − c|` is at most this.
pub const ROOT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `f − c` changes from negative to nonnegative with increasing `x`.
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub x: f64,
    pub direction: Direction,
}

/// A vertex chain. Closed chains do not repeat their first vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub vertices: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Polyline {
    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        let count = if self.closed && n > 2 { n } else { n.saturating_sub(1) };
        (0..count).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1])).sum()
    }
}

/// The extracted boundary of `{f >= level}`.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelSetBoundary {
    OneD { level: f64, crossings: Vec<Crossing> },
    TwoD { level: f64, polylines: Vec<Polyline> },
}

impl LevelSetBoundary {
    pub fn dim(&self) -> usize {
        match self {
            LevelSetBoundary::OneD { .. } => 1,
            LevelSetBoundary::TwoD { .. } => 2,
        }
    }

    pub fn level(&self) -> f64 {
        match self {
            LevelSetBoundary::OneD { level, .. } | LevelSetBoundary::TwoD { level, .. } => *level,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            LevelSetBoundary::OneD { crossings, .. } => crossings.is_empty(),
            LevelSetBoundary::TwoD { polylines, .. } => polylines.is_empty(),
        }
    }

    pub fn crossings(&self) -> &[Crossing] {
        match self {
            LevelSetBoundary::OneD { crossings, .. } => crossings,
            LevelSetBoundary::TwoD { .. } => &[],
        }
    }

    pub fn polylines(&self) -> &[Polyline] {
        match self {
            LevelSetBoundary::TwoD { polylines, .. } => polylines,
            LevelSetBoundary::OneD { .. } => &[],
        }
    }

    /// Quadrature nodes and weights on the boundary: the crossings with unit
    /// weight in one dimension, segment midpoints with segment lengths in two.
    pub fn quadrature_nodes(&self) -> Vec<(Vec<f64>, f64)> {
        match self {
            LevelSetBoundary::OneD { crossings, .. } => crossings.iter().map(|c| (vec![c.x], 1.0)).collect(),
            LevelSetBoundary::TwoD { polylines, .. } => polylines
                .iter()
                .flat_map(|p| p.segments())
                .map(|(a, b)| {
                    let mid = vec![0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                    (mid, (b[0] - a[0]).hypot(b[1] - a[1]))
                })
                .collect(),
        }
    }
}

/// Roots of `f − c` on `[a, b]`: sign changes on a uniform scan of
/// `scan_resolution` points, each refined by bisection.
pub fn extract_d1<F: Fn(f64) -> f64>(f: F, c: f64, interval: (f64, f64), scan_resolution: usize) -> Result<LevelSetBoundary> {
    let (a, b) = interval;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::arg(format!("search interval ({a}, {b}) is not a finite increasing pair")));
    }
    if scan_resolution < 2 {
        return Err(Error::arg("scan resolution must be at least 2"));
    }
    let node = |k: usize| a + (b - a) * k as f64 / (scan_resolution - 1) as f64;
    let mut crossings = Vec::new();
    let mut x_prev = a;
    let mut in_prev = f(a) >= c;
    for k in 1..scan_resolution {
        let x = node(k);
        let inside = f(x) >= c;
        if inside != in_prev {
            let root = bisect(&f, c, x_prev, x, in_prev);
            let direction = if inside { Direction::Up } else { Direction::Down };
            crossings.push(Crossing { x: root, direction });
        }
        x_prev = x;
        in_prev = inside;
    }
    Ok(LevelSetBoundary::OneD { level: c, crossings })
}

fn bisect<F: Fn(f64) -> f64>(f: &F, c: f64, mut lo: f64, mut hi: f64, lo_inside: bool) -> f64 {
    let (mut f_lo, mut f_hi) = (f(lo) - c, f(hi) - c);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return if f_lo.abs() <= f_hi.abs() { lo } else { hi };
        }
        let fm = f(mid) - c;
        if fm.abs() <= ROOT_TOLERANCE {
            return mid;
        }
        if (fm >= 0.0) == lo_inside {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
            f_hi = fm;
        }
    }
}

// Grid edge between node (i, j) and (i + 1, j) (kind 0), or (i, j) and
// (i, j + 1) (kind 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct EdgeKey(u8, usize, usize);

/// Marching-squares boundary of `{field >= c}` on a two-dimensional grid.
pub fn extract_d2(field: &GridField, c: f64) -> Result<LevelSetBoundary> {
    if field.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: field.dim(),
        });
    }
    if field.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("field contains non-finite values"));
    }
    let (r0, r1) = (field.spec.resolution[0], field.spec.resolution[1]);
    let rows: Vec<Vec<(EdgeKey, EdgeKey)>> = (0..r0 - 1)
        .into_par_iter()
        .map(|i| (0..r1 - 1).flat_map(|j| cell_segments(field, c, i, j)).collect())
        .collect();
    let segments: Vec<(EdgeKey, EdgeKey)> = rows.into_iter().flatten().collect();
    let polylines = chain(field, c, &segments);
    Ok(LevelSetBoundary::TwoD { level: c, polylines })
}

fn cell_segments(field: &GridField, c: f64, i: usize, j: usize) -> Vec<(EdgeKey, EdgeKey)> {
    // corners counter-clockwise from (i, j); edge k joins corner k and k + 1
    let v = [field.at2(i, j), field.at2(i + 1, j), field.at2(i + 1, j + 1), field.at2(i, j + 1)];
    let inside = v.map(|x| x >= c);
    let edges = [EdgeKey(0, i, j), EdgeKey(1, i + 1, j), EdgeKey(0, i, j + 1), EdgeKey(1, i, j)];
    let crossed: Vec<usize> = (0..4).filter(|&k| inside[k] != inside[(k + 1) % 4]).collect();
    match crossed.len() {
        2 => vec![(edges[crossed[0]], edges[crossed[1]])],
        4 => {
            let center_inside = 0.25 * (v[0] + v[1] + v[2] + v[3]) >= c;
            // cut off the corners on the side opposite to the center
            (0..4)
                .filter(|&k| inside[k] != center_inside)
                .map(|k| (edges[(k + 3) % 4], edges[k]))
                .collect()
        }
        _ => Vec::new(),
    }
}

fn edge_point(field: &GridField, c: f64, key: EdgeKey) -> [f64; 2] {
    let EdgeKey(kind, i, j) = key;
    let spec = &field.spec;
    let (ib, jb) = if kind == 0 { (i + 1, j) } else { (i, j + 1) };
    let (va, vb) = (field.at2(i, j), field.at2(ib, jb));
    let t = (c - va) / (vb - va);
    let (xa, ya) = (spec.coord(0, i), spec.coord(1, j));
    let (xb, yb) = (spec.coord(0, ib), spec.coord(1, jb));
    [xa + t * (xb - xa), ya + t * (yb - ya)]
}

fn chain(field: &GridField, c: f64, segments: &[(EdgeKey, EdgeKey)]) -> Vec<Polyline> {
    let mut adjacency: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        adjacency.entry(a).or_default().push(s);
        adjacency.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();
    let walk = |start: EdgeKey, used: &mut Vec<bool>| -> (Vec<EdgeKey>, bool) {
        let mut keys = vec![start];
        let mut current = start;
        loop {
            let next = adjacency[&current].iter().copied().find(|&s| !used[s]);
            let Some(s) = next else { break };
            used[s] = true;
            let (a, b) = segments[s];
            current = if a == current { b } else { a };
            if current == start {
                return (keys, true);
            }
            keys.push(current);
        }
        (keys, false)
    };
    let ends: Vec<EdgeKey> = adjacency.iter().filter(|(_, s)| s.len() == 1).map(|(&k, _)| k).collect();
    for start in ends {
        if adjacency[&start].iter().all(|&s| used[s]) {
            continue;
        }
        let (keys, closed) = walk(start, &mut used);
        polylines.push((keys, closed));
    }
    let keys: Vec<EdgeKey> = adjacency.keys().copied().collect();
    for start in keys {
        if adjacency[&start].iter().all(|&s| used[s]) {
            continue;
        }
        let (keys, closed) = walk(start, &mut used);
        polylines.push((keys, closed));
    }
    polylines
        .into_iter()
        .map(|(keys, closed)| Polyline {
            vertices: keys.into_iter().map(|k| edge_point(field, c, k)).collect(),
            closed,
        })
        .collect()
}

/// Result of a boundary integral; `empty` marks an empty boundary, whose
/// value is reported as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceIntegral {
    pub value: f64,
    pub empty: bool,
}

/// `∫_M w dH`: a sum over crossings in one dimension, a midpoint rule over
/// polyline segments in two.
pub fn surface_integral<W: Fn(&[f64]) -> f64 + Sync>(boundary: &LevelSetBoundary, w: W) -> SurfaceIntegral {
    try_surface_integral(boundary, |x| Ok(w(x))).expect("infallible weight")
}

/// [`surface_integral`] with a fallible weight.
pub fn try_surface_integral<W: Fn(&[f64]) -> Result<f64> + Sync>(
    boundary: &LevelSetBoundary,
    w: W,
) -> Result<SurfaceIntegral> {
    let nodes = boundary.quadrature_nodes();
    let terms: Vec<f64> = nodes
        .par_iter()
        .map(|(x, weight)| w(x).map(|v| v * weight))
        .collect::<Result<_>>()?;
    Ok(SurfaceIntegral {
        value: terms.iter().sum(),
        empty: boundary.is_empty(),
    })
}

/// The region `{field >= level}` on a grid.
#[derive(Debug, Clone)]
pub struct RegionIndicator {
    pub field: GridField,
    pub level: f64,
}

impl RegionIndicator {
    pub fn new(field: GridField, level: f64) -> Self {
        Self { field, level }
    }

    pub fn contains_node(&self, flat: usize) -> bool {
        self.field.values[flat] >= self.level
    }

    pub fn boundary(&self) -> Result<LevelSetBoundary> {
        extract_d2(&self.field, self.level)
    }
}

/// Writes polylines as `polyline_id,vertex_x,vertex_y` rows.
pub fn write_polylines_csv<W: Write>(writer: W, polylines: &[Polyline]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["polyline_id", "vertex_x", "vertex_y"])?;
    for (id, p) in polylines.iter().enumerate() {
        for v in &p.vertices {
            out.write_record([id.to_string(), v[0].to_string(), v[1].to_string()])?;
        }
    }
    out.flush()
}
