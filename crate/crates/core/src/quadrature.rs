//! Smooth ball quadrature: Gauss-Legendre in the radius times a product rule
//! on the sphere, applied to the multilinear interpolant of lattice samples.
//!
//! Lattice counting makes `r ↦ ∫_{B(x,r)} V` a step function with an atom at
//! the center, which breaks root finding in the radius. This rule is exact for
//! constants and continuous in `r`.

use crate::grid::{unit_ball_volume, Grid};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// Directions and weights on the unit sphere `S^{d-1}`; weights sum to its area.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub directions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(d: usize, resolution: usize) -> Self {
        let mut rule = Self::unnormalized(d, resolution.max(2));
        let area = d as f64 * unit_ball_volume(d);
        let total: f64 = rule.weights.iter().sum();
        for w in &mut rule.weights {
            *w *= area / total;
        }
        rule
    }

    fn unnormalized(d: usize, res: usize) -> Self {
        match d {
            1 => SphereRule {
                directions: vec![vec![1.0], vec![-1.0]],
                weights: vec![1.0, 1.0],
            },
            2 => {
                let m = 2 * res;
                let directions = (0..m)
                    .map(|k| {
                        let t = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
                        vec![t.cos(), t.sin()]
                    })
                    .collect();
                SphereRule {
                    directions,
                    weights: vec![1.0; m],
                }
            }
            _ => {
                // ω = (sqrt(1 - t²)·u, t) with u on S^{d-2}; density (1 - t²)^{(d-3)/2}.
                let inner = Self::unnormalized(d - 1, res);
                let (ts, tw) = gauss_legendre(res);
                let mut directions = Vec::with_capacity(ts.len() * inner.directions.len());
                let mut weights = Vec::with_capacity(directions.capacity());
                for (&t, &wt) in ts.iter().zip(&tw) {
                    let s = (1.0 - t * t).sqrt();
                    let density = (1.0 - t * t).powf((d as f64 - 3.0) / 2.0);
                    for (u, &wu) in inner.directions.iter().zip(&inner.weights) {
                        let mut dir: Vec<f64> = u.iter().map(|c| s * c).collect();
                        dir.push(t);
                        directions.push(dir);
                        weights.push(wt * density * wu);
                    }
                }
                SphereRule {
                    directions,
                    weights,
                }
            }
        }
    }
}

/// Multilinear interpolation of lattice samples, extended outside the box by
/// clamping to the nearest boundary point.
pub fn interpolate(grid: &Grid, values: &[f64], point: &[f64]) -> f64 {
    let d = grid.dim();
    let n = grid.points_per_axis();
    let h = grid.spacing();
    let l = grid.half_width();
    let mut base = 0usize;
    let mut frac = [0.0f64; 16];
    let mut strides = [0usize; 16];
    debug_assert!(d <= 16);
    for (axis, &x) in point.iter().enumerate() {
        let s = ((x.clamp(-l, l) + l) / h).min((n - 1) as f64);
        let k = (s.floor() as usize).min(n - 2);
        frac[axis] = s - k as f64;
        strides[axis] = grid.axis_stride(axis);
        base += k * strides[axis];
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut weight = 1.0;
        let mut index = base;
        for axis in 0..d {
            if corner >> axis & 1 == 1 {
                weight *= frac[axis];
                index += strides[axis];
            } else {
                weight *= 1.0 - frac[axis];
            }
        }
        if weight != 0.0 {
            acc += weight * values[index];
        }
    }
    acc
}

/// Reusable rule for `∫_{B(x,r)} V` against the interpolant of `V`.
#[derive(Debug, Clone)]
pub struct BallQuadrature {
    grid: Grid,
    sphere: SphereRule,
    radial: Vec<(Vec<f64>, Vec<f64>)>,
}

impl BallQuadrature {
    pub const MIN_RADIAL: usize = 4;
    pub const MAX_RADIAL: usize = 16;

    pub fn new(grid: Grid) -> Self {
        let sphere = SphereRule::new(grid.dim(), 8);
        let radial = (0..=Self::MAX_RADIAL)
            .map(|k| {
                if k == 0 {
                    (Vec::new(), Vec::new())
                } else {
                    gauss_legendre(k)
                }
            })
            .collect();
        BallQuadrature {
            grid,
            sphere,
            radial,
        }
    }

    /// Radial node count grows with the number of cells the radius crosses.
    fn radial_nodes(&self, radius: f64) -> usize {
        let cells = (2.0 * radius / self.grid.spacing()).ceil() as usize + 2;
        cells.clamp(Self::MIN_RADIAL, Self::MAX_RADIAL)
    }

    pub fn ball_integral(&self, values: &[f64], center: &[f64], radius: f64) -> f64 {
        let d = self.grid.dim();
        let (nodes, weights) = &self.radial[self.radial_nodes(radius)];
        let mut point = vec![0.0; d];
        let mut total = 0.0;
        for (&x, &wx) in nodes.iter().zip(weights) {
            let s = 0.5 * radius * (x + 1.0);
            let ws = 0.5 * radius * wx * s.powi(d as i32 - 1);
            let mut shell = 0.0;
            for (dir, &wd) in self.sphere.directions.iter().zip(&self.sphere.weights) {
                for k in 0..d {
                    point[k] = center[k] + s * dir[k];
                }
                shell += wd * interpolate(&self.grid, values, &point);
            }
            total += ws * shell;
        }
        total
    }
}
