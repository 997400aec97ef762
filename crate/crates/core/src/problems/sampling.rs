use ndarray::Array2;

use super::{Benchmark, SamplerKind};
use crate::rng::Stream;
use crate::{Error, Result};

/// Points (`count × input_dim`) with their attached targets (`count × target_dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub kind: SamplerKind,
    pub points: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub const GRID_POINTS_PER_AXIS: usize = 100;

/// Uniform evaluation grid including the domain edges: 100×100 nodes in 2D,
/// 100 nodes in 1D, rows ordered with the last axis fastest.
pub fn evaluation_grid(benchmark: &Benchmark) -> Array2<f64> {
    let dom = benchmark.domain();
    let n = GRID_POINTS_PER_AXIS;
    let axis = |d: usize, i: usize| dom.lo[d] + (dom.hi[d] - dom.lo[d]) * i as f64 / (n - 1) as f64;
    if dom.dims == 1 {
        return Array2::from_shape_fn((n, 1), |(i, _)| axis(0, i));
    }
    Array2::from_shape_fn((n * n, 2), |(r, d)| if d == 0 { axis(0, r / n) } else { axis(1, r % n) })
}

/// Boundary segments of a box, each parametrised over a half-open interval so
/// that every corner belongs to exactly one segment.
///
/// 2D order: bottom (x ascending from the lower-left corner), right (y
/// ascending), top (x descending from the upper-right corner), left (y
/// descending). The KG problem uses only its two spatial edges.
fn boundary_point(b: &Benchmark, segment: usize, s: f64) -> ([f64; 2], bool) {
    let dom = b.domain();
    let (lo, hi) = (dom.lo, dom.hi);
    let lerp = |d: usize, s: f64| lo[d] + (hi[d] - lo[d]) * s;
    let unlerp = |d: usize, s: f64| hi[d] - (hi[d] - lo[d]) * s;
    match b {
        Benchmark::Poisson { .. } => ([if segment == 0 { lo[0] } else { hi[0] }, 0.0], false),
        // Dirichlet edges x = 0 and x = 1, time ascending.
        Benchmark::KleinGordon { .. } => ([if segment == 0 { lo[0] } else { hi[0] }, lerp(1, s)], false),
        _ => match segment {
            0 => ([lerp(0, s), lo[1]], false),
            1 => ([hi[0], lerp(1, s)], false),
            2 => ([unlerp(0, s), hi[1]], true),
            _ => ([lo[0], unlerp(1, s)], false),
        },
    }
}

fn segment_count(b: &Benchmark) -> usize {
    match b {
        Benchmark::Poisson { .. } | Benchmark::KleinGordon { .. } => 2,
        _ => 4,
    }
}

pub(super) fn sample(b: &Benchmark, kind: SamplerKind, count: usize, rng: &mut Stream) -> Result<Batch> {
    if count == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let dims = b.input_dim();
    let dom = b.domain();
    let tdim = b.target_dim(kind);
    let mut points = Array2::zeros((count, dims));
    let mut targets = Array2::zeros((count, tdim));
    let mut t = [0.0; 2];
    for i in 0..count {
        let (p, on_lid) = match kind {
            SamplerKind::Collocation => {
                let mut p = [0.0; 2];
                for (d, v) in p.iter_mut().enumerate().take(dims) {
                    *v = rng.uniform_in(dom.lo[d], dom.hi[d]);
                }
                (p, false)
            }
            SamplerKind::Boundary => {
                let segments = segment_count(b);
                let segment = ((rng.uniform() * segments as f64) as usize).min(segments - 1);
                let s = rng.uniform();
                boundary_point(b, segment, s)
            }
            SamplerKind::Initial => {
                if !matches!(b, Benchmark::KleinGordon { .. }) {
                    return Err(Error::Config(format!("{} has no initial condition", b.name())));
                }
                ([rng.uniform_in(dom.lo[0], dom.hi[0]), dom.lo[1]], false)
            }
        };
        for d in 0..dims {
            points[[i, d]] = p[d];
        }
        b.targets(kind, &p, on_lid, &mut t[..tdim]);
        for (k, v) in t[..tdim].iter().enumerate() {
            targets[[i, k]] = *v;
        }
    }
    Ok(Batch { kind, points, targets })
}
