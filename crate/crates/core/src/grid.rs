//! Truncated uniform lattices on `[-L, L]^d`, sampled fields, open balls and
//! the lattice quadrature used for every `∫_B` expression.
//!
//! Points are enumerated with axis 0 varying fastest:
//! `index = Σ_k coordinate_k · n^k`.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    d: usize,
    half_width: f64,
    n: usize,
}

impl Grid {
    pub fn new(d: usize, half_width: f64, n: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument(
                "dimension must be at least 1".into(),
            ));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 points per axis, got {n}"
            )));
        }
        n.checked_pow(d as u32)
            .ok_or_else(|| Error::InvalidArgument("grid point count overflows".into()))?;
        Ok(Grid { d, half_width, n })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    /// Total number of lattice points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of lattice index `k` along any axis.
    pub fn coord(&self, k: usize) -> f64 {
        -self.half_width + k as f64 * self.spacing()
    }

    /// Index of the middle lattice line (the origin for odd `n`).
    pub fn mid_index(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn multi_index(&self, mut index: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            out.push(index % self.n);
            index /= self.n;
        }
        out
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        multi.iter().rev().fold(0usize, |acc, &k| acc * self.n + k)
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.d);
        self.point_into(index, &mut p);
        p
    }

    pub fn point_into(&self, mut index: usize, out: &mut Vec<f64>) {
        out.clear();
        for _ in 0..self.d {
            out.push(self.coord(index % self.n));
            index /= self.n;
        }
    }

    /// Stride of the linear index along `axis`.
    pub fn axis_stride(&self, axis: usize) -> usize {
        self.n.pow(axis as u32)
    }

    /// Forward neighbour `index + e_axis`, if it lies on the grid.
    pub fn forward_neighbor(&self, index: usize, axis: usize) -> Option<usize> {
        let stride = self.axis_stride(axis);
        if (index / stride) % self.n + 1 < self.n {
            Some(index + stride)
        } else {
            None
        }
    }

    /// Backward neighbour `index - e_axis`, if it lies on the grid.
    pub fn backward_neighbor(&self, index: usize, axis: usize) -> Option<usize> {
        let stride = self.axis_stride(axis);
        if !(index / stride).is_multiple_of(self.n) {
            Some(index - stride)
        } else {
            None
        }
    }

    /// Nearest lattice point to an arbitrary point (clamped into the box).
    pub fn nearest_index(&self, point: &[f64]) -> usize {
        let h = self.spacing();
        let multi: Vec<usize> = point
            .iter()
            .map(|&x| {
                let k = ((x + self.half_width) / h).round();
                k.clamp(0.0, (self.n - 1) as f64) as usize
            })
            .collect();
        self.linear_index(&multi)
    }

    /// Lattice index of `point` if it coincides with a grid point.
    pub fn exact_index(&self, point: &[f64]) -> Option<usize> {
        let i = self.nearest_index(point);
        let tol = 1e-9 * self.spacing();
        let p = self.point(i);
        p.iter()
            .zip(point)
            .all(|(a, b)| (a - b).abs() <= tol)
            .then_some(i)
    }

    /// Plain key-value descriptor (`d`, `L`, `n`).
    pub fn to_descriptor(&self) -> String {
        format!(
            "d = {}\nL = {:?}\nn = {}\n",
            self.d, self.half_width, self.n
        )
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let (mut d, mut l, mut n) = (None, None, None);
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                continue;
            };
            let value = value.trim();
            match key.trim() {
                "d" => d = value.parse::<usize>().ok(),
                "L" => l = value.parse::<f64>().ok(),
                "n" => n = value.parse::<usize>().ok(),
                _ => {}
            }
        }
        match (d, l, n) {
            (Some(d), Some(l), Some(n)) => Grid::new(d, l, n),
            _ => Err(Error::Parse("grid descriptor needs d, L and n".into())),
        }
    }
}

/// Samples of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} samples, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut p = Vec::with_capacity(grid.dim());
        let values = (0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut p);
                f(&p)
            })
            .collect();
        ScalarField { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }

    /// Errors with the first negative sample, if any.
    pub fn check_weight(&self) -> Result<()> {
        match self.values.iter().position(|&v| !(v >= 0.0)) {
            Some(index) => Err(Error::NotAWeight {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }

    /// Grid descriptor followed by one value per line, in index order.
    pub fn to_text(&self) -> String {
        let mut out = self.grid.to_descriptor();
        out.push_str("values\n");
        for v in &self.values {
            let _ = writeln!(out, "{v:?}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (head, body) = text
            .split_once("values\n")
            .ok_or_else(|| Error::Parse("missing `values` marker".into()))?;
        let grid = Grid::from_descriptor(head)?;
        let values = body
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad sample `{l}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ScalarField::new(grid, values)
    }

    /// Little-endian binary layout: `u64 d`, `f64 L`, `u64 n`, then `n^d` f64 samples.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.values.len());
        out.extend_from_slice(&(self.grid.d as u64).to_le_bytes());
        out.extend_from_slice(&self.grid.half_width.to_le_bytes());
        out.extend_from_slice(&(self.grid.n as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |i: usize| -> Result<[u8; 8]> {
            bytes
                .get(8 * i..8 * i + 8)
                .map(|s| s.try_into().unwrap())
                .ok_or_else(|| Error::Parse("truncated field data".into()))
        };
        let d = u64::from_le_bytes(word(0)?) as usize;
        let l = f64::from_le_bytes(word(1)?);
        let n = u64::from_le_bytes(word(2)?) as usize;
        let grid = Grid::new(d, l, n)?;
        let values = (0..grid.len())
            .map(|i| word(3 + i).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        ScalarField::new(grid, values)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Open ball `{x : |x - center| < radius}` together with the lattice points it contains.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    grid: Grid,
    center: Vec<f64>,
    radius: f64,
    members: Vec<usize>,
    boundary: bool,
}

impl Ball {
    pub fn new(grid: Grid, center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.len() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "center has dimension {}, grid has {}",
                center.len(),
                grid.dim()
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "radius must be positive, got {radius}"
            )));
        }
        let members = lattice_members(&grid, &center, radius);
        let boundary = !fits(&grid, &center, 2.0 * radius);
        Ok(Ball {
            grid,
            center,
            radius,
            members,
            boundary,
        })
    }

    /// Ball centered at lattice point `index`.
    pub fn at_index(grid: Grid, index: usize, radius: f64) -> Result<Self> {
        Ball::new(grid, grid.point(index), radius)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Sorted lattice indices strictly inside the ball.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// True when the doubled ball leaves the grid box.
    pub fn is_boundary(&self) -> bool {
        self.boundary
    }

    /// True when `B(center, t·radius)` lies in the closed grid box.
    pub fn fits_in_box(&self, t: f64) -> bool {
        fits(&self.grid, &self.center, t * self.radius)
    }

    pub fn discrete_volume(&self) -> f64 {
        self.members.len() as f64 * self.grid.cell_volume()
    }

    pub fn continuum_volume(&self) -> f64 {
        unit_ball_volume(self.grid.dim()) * self.radius.powi(self.grid.dim() as i32)
    }

    /// Lattice index nearest to the center.
    pub fn center_index(&self) -> usize {
        self.grid.nearest_index(&self.center)
    }

    pub fn record(&self) -> BallRecord {
        BallRecord {
            center: self.center.clone(),
            radius: self.radius,
        }
    }
}

fn fits(grid: &Grid, center: &[f64], radius: f64) -> bool {
    center
        .iter()
        .all(|&c| c.abs() + radius <= grid.half_width() * (1.0 + 1e-12))
}

/// Serializable identity of a ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallRecord {
    pub center: Vec<f64>,
    pub radius: f64,
}

fn lattice_members(grid: &Grid, center: &[f64], radius: f64) -> Vec<usize> {
    let h = grid.spacing();
    let l = grid.half_width();
    let last = (grid.points_per_axis() - 1) as f64;
    let mut lo = Vec::with_capacity(grid.dim());
    let mut hi = Vec::with_capacity(grid.dim());
    for &c in center {
        let a = ((c - radius + l) / h).ceil().max(0.0);
        let b = ((c + radius + l) / h).floor().min(last);
        if a > b {
            return Vec::new();
        }
        lo.push(a as usize);
        hi.push(b as usize);
    }
    let r2 = radius * radius;
    let mut members = Vec::new();
    let mut cur = lo.clone();
    // Odometer with axis 0 fastest yields ascending linear indices.
    'outer: loop {
        let dist2: f64 = cur
            .iter()
            .zip(center)
            .map(|(&k, &c)| {
                let x = grid.coord(k) - c;
                x * x
            })
            .sum();
        if dist2 < r2 {
            members.push(grid.linear_index(&cur));
        }
        for axis in 0..cur.len() {
            if cur[axis] < hi[axis] {
                cur[axis] += 1;
                continue 'outer;
            }
            cur[axis] = lo[axis];
        }
        break;
    }
    members
}

/// Quadrature `cell_volume · Σ_{i ∈ B} f_i`.
pub fn integrate(f: &ScalarField, ball: &Ball) -> Result<f64> {
    if f.grid() != ball.grid() {
        return Err(Error::GridMismatch);
    }
    let values = f.values();
    let sum: f64 = ball.members().iter().map(|&i| values[i]).sum();
    Ok(sum * f.grid().cell_volume())
}

/// Weighted measure `w(B)`.
pub fn measure(w: &ScalarField, ball: &Ball) -> Result<f64> {
    if w.grid() != ball.grid() {
        return Err(Error::GridMismatch);
    }
    let values = w.values();
    if let Some(&index) = ball.members().iter().find(|&&i| !(values[i] >= 0.0)) {
        return Err(Error::NotAWeight {
            index,
            value: values[index],
        });
    }
    integrate(w, ball)
}

/// Lebesgue average `|B|^{-1} ∫_B f` with the discrete volume.
pub fn average(f: &ScalarField, ball: &Ball) -> Result<f64> {
    if ball.is_empty() {
        return Err(Error::InvalidArgument("average over an empty ball".into()));
    }
    Ok(integrate(f, ball)? / ball.discrete_volume())
}

/// The t-dilate ball `tB`.
pub fn dilate(ball: &Ball, t: f64) -> Result<Ball> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "dilation factor must be positive, got {t}"
        )));
    }
    Ball::new(*ball.grid(), ball.center().to_vec(), t * ball.radius())
}

/// How a finite ball family is laid out over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyPolicy {
    /// Centers sit at `mid ± k·stride` along every axis.
    pub center_stride: usize,
    /// Strictly increasing positive radii.
    pub radii: Vec<f64>,
    /// Keep balls whose doubles leave the box.
    #[serde(default)]
    pub include_boundary: bool,
    /// Append one origin-centered ball covering the whole box.
    #[serde(default)]
    pub include_box_ball: bool,
}

impl FamilyPolicy {
    /// Radius ladder `r_min · 2^k`, `k = 0..count`.
    pub fn geometric(center_stride: usize, r_min: f64, count: usize) -> Self {
        FamilyPolicy {
            center_stride,
            radii: (0..count).map(|k| r_min * 2f64.powi(k as i32)).collect(),
            include_boundary: false,
            include_box_ball: false,
        }
    }

    pub fn with_boundary(mut self, include: bool) -> Self {
        self.include_boundary = include;
        self
    }

    pub fn with_box_ball(mut self, include: bool) -> Self {
        self.include_box_ball = include;
        self
    }
}

#[derive(Debug, Clone)]
pub struct BallFamily {
    balls: Vec<Ball>,
    policy: FamilyPolicy,
}

impl BallFamily {
    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn policy(&self) -> &FamilyPolicy {
        &self.policy
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Ball> {
        self.balls.iter()
    }

    /// Family made of an explicit list of balls.
    pub fn from_balls(balls: Vec<Ball>) -> Self {
        let mut radii: Vec<f64> = balls.iter().map(Ball::radius).collect();
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        BallFamily {
            balls,
            policy: FamilyPolicy {
                center_stride: 0,
                radii,
                include_boundary: true,
                include_box_ball: false,
            },
        }
    }

    /// Lattice indices used as centers under `stride`.
    pub fn center_indices(grid: &Grid, stride: usize) -> Vec<usize> {
        let n = grid.points_per_axis();
        let mid = grid.mid_index();
        let mut axis: Vec<usize> = (0..n).filter(|k| k.abs_diff(mid) % stride == 0).collect();
        axis.sort_unstable();
        let d = grid.dim();
        let count = axis.len().pow(d as u32);
        (0..count)
            .map(|mut c| {
                let multi: Vec<usize> = (0..d)
                    .map(|_| {
                        let k = axis[c % axis.len()];
                        c /= axis.len();
                        k
                    })
                    .collect();
                grid.linear_index(&multi)
            })
            .collect()
    }
}

pub fn generate_ball_family(grid: &Grid, policy: &FamilyPolicy) -> Result<BallFamily> {
    if policy.center_stride == 0 {
        return Err(Error::InvalidArgument(
            "center stride must be at least 1".into(),
        ));
    }
    if policy.radii.is_empty() {
        return Err(Error::InvalidArgument("empty radius ladder".into()));
    }
    if policy.radii.iter().any(|&r| !(r > 0.0 && r.is_finite()))
        || policy.radii.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidArgument(
            "radius ladder must be positive and strictly increasing".into(),
        ));
    }
    let mut balls = Vec::new();
    for center in BallFamily::center_indices(grid, policy.center_stride) {
        for &r in &policy.radii {
            let ball = Ball::at_index(*grid, center, r)?;
            if ball.is_empty() || (ball.is_boundary() && !policy.include_boundary) {
                continue;
            }
            balls.push(ball);
        }
    }
    if policy.include_box_ball {
        let origin = vec![0.0; grid.dim()];
        let r = grid.half_width() * (grid.dim() as f64).sqrt() + grid.spacing();
        balls.push(Ball::new(*grid, origin, r)?);
    }
    Ok(BallFamily {
        balls,
        policy: policy.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid3(n: usize) -> Grid {
        Grid::new(3, 4.0, n).unwrap()
    }

    #[test]
    fn spacing_and_counts() {
        let g = grid3(33);
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.len(), 33 * 33 * 33);
        let box_vol = 8f64.powi(3);
        let approx = g.cell_volume() * g.len() as f64;
        // one extra boundary layer per axis at most
        assert!(approx >= box_vol && approx <= (8.0 + g.spacing()).powi(3));
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid::new(3, 1.0, 5).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.linear_index(&g.multi_index(i)), i);
        }
        assert_eq!(g.linear_index(&[1, 2, 3]), 1 + 2 * 5 + 3 * 25);
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn membership_matches_brute_force() {
        let g = Grid::new(3, 2.0, 9).unwrap();
        let center = vec![0.3, -0.5, 1.0];
        let ball = Ball::new(g, center.clone(), 1.2).unwrap();
        let brute: Vec<usize> = (0..g.len())
            .filter(|&i| {
                let p = g.point(i);
                let d2: f64 = p.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum();
                d2 < 1.2 * 1.2
            })
            .collect();
        assert_eq!(ball.members(), brute.as_slice());
    }

    #[test]
    fn open_ball_excludes_ties() {
        let g = grid3(17); // h = 0.5
        let ball = Ball::new(g, vec![0.0; 3], 0.5).unwrap();
        assert_eq!(ball.members().len(), 1);
    }

    #[test]
    fn integrate_constant_one_is_ball_volume() {
        let g = grid3(33);
        let one = ScalarField::constant(g, 1.0);
        let ball = Ball::new(g, vec![0.0; 3], 1.0).unwrap();
        let v = integrate(&one, &ball).unwrap();
        assert!((v / (4.0 * PI / 3.0) - 1.0).abs() < 0.10, "{v}");
        let zero = ScalarField::zeros(g);
        assert_eq!(integrate(&zero, &ball).unwrap(), 0.0);
        let c = ScalarField::constant(g, 2.5);
        assert_eq!(integrate(&c, &ball).unwrap(), 2.5 * ball.discrete_volume());
    }

    #[test]
    fn integrate_rejects_other_grid() {
        let ball = Ball::new(grid3(9), vec![0.0; 3], 1.0).unwrap();
        let f = ScalarField::constant(grid3(17), 1.0);
        assert!(matches!(integrate(&f, &ball), Err(Error::GridMismatch)));
    }

    #[test]
    fn measure_of_radial_weight() {
        let g = grid3(33);
        let ball = Ball::new(g, vec![0.0; 3], 1.0).unwrap();
        let one = ScalarField::constant(g, 1.0);
        assert_eq!(measure(&one, &ball).unwrap(), ball.discrete_volume());
        let two = ScalarField::constant(g, 2.0);
        assert_eq!(measure(&two, &ball).unwrap(), 2.0 * ball.discrete_volume());
        let radial = ScalarField::from_fn(g, |x| x.iter().map(|v| v * v).sum::<f64>().sqrt());
        let m = measure(&radial, &ball).unwrap();
        assert!((m / PI - 1.0).abs() < 0.10, "{m}");
        let mut neg = one.clone();
        neg.values_mut()[ball.members()[0]] = -1.0;
        assert!(matches!(
            measure(&neg, &ball),
            Err(Error::NotAWeight { .. })
        ));
    }

    #[test]
    fn resolution_consistency() {
        let gap = |n: usize| {
            let g = grid3(n);
            let ball = Ball::new(g, vec![0.0; 3], 1.0).unwrap();
            let one = ScalarField::constant(g, 1.0);
            (integrate(&one, &ball).unwrap() / (4.0 * PI / 3.0) - 1.0).abs()
        };
        assert!(gap(33) < gap(17));
    }

    #[test]
    fn dilation() {
        let g = grid3(33);
        let ball = Ball::new(g, vec![0.0; 3], 1.0).unwrap();
        assert_eq!(dilate(&ball, 1.0).unwrap(), ball);
        let big = dilate(&ball, 2.0).unwrap();
        assert_eq!(big.radius(), 2.0);
        let ratio = big.members().len() as f64 / ball.members().len() as f64;
        assert!((ratio / 8.0 - 1.0).abs() < 0.15, "{ratio}");
        let twice = dilate(&dilate(&ball, 0.5).unwrap(), 0.5).unwrap();
        let once = dilate(&ball, 0.25).unwrap();
        assert!((twice.radius() - once.radius()).abs() < g.spacing());
        assert!(dilate(&ball, 0.0).is_err());
        assert!(dilate(&ball, -1.0).is_err());
    }

    #[test]
    fn family_generation() {
        let g = grid3(33);
        let single = generate_ball_family(&g, &FamilyPolicy::geometric(33, 1.0, 1)).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.balls()[0].center(), &[0.0, 0.0, 0.0]);

        let nested =
            generate_ball_family(&g, &FamilyPolicy::geometric(33, 1.0, 3).with_boundary(true))
                .unwrap();
        assert_eq!(nested.len(), 3);
        for w in nested.balls().windows(2) {
            assert!(w[0]
                .members()
                .iter()
                .all(|i| w[1].members().binary_search(i).is_ok()));
        }

        assert_eq!(BallFamily::center_indices(&g, 8).len(), 125);

        let empty = FamilyPolicy {
            center_stride: 1,
            radii: vec![],
            include_boundary: false,
            include_box_ball: false,
        };
        assert!(generate_ball_family(&g, &empty).is_err());
        let a = generate_ball_family(&g, &FamilyPolicy::geometric(8, 0.5, 3)).unwrap();
        let b = generate_ball_family(&g, &FamilyPolicy::geometric(8, 0.5, 3)).unwrap();
        assert_eq!(a.balls(), b.balls());
        assert!(a.iter().all(|ball| !ball.is_boundary()));
    }

    #[test]
    fn box_ball_covers_grid() {
        let g = Grid::new(3, 2.0, 7).unwrap();
        let fam = generate_ball_family(&g, &FamilyPolicy::geometric(3, 0.5, 1).with_box_ball(true))
            .unwrap();
        assert_eq!(fam.balls().last().unwrap().members().len(), g.len());
    }

    #[test]
    fn descriptor_and_field_io() {
        let g = Grid::new(2, 1.5, 4).unwrap();
        assert_eq!(Grid::from_descriptor(&g.to_descriptor()).unwrap(), g);
        let f = ScalarField::from_fn(g, |x| x[0] * 0.1 + x[1].sin());
        assert_eq!(ScalarField::from_text(&f.to_text()).unwrap(), f);
        assert_eq!(ScalarField::from_bytes(&f.to_bytes()).unwrap(), f);
        assert!(ScalarField::from_bytes(&f.to_bytes()[..30]).is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn quadrature_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, r in 0.3f64..2.0) {
            let g = Grid::new(3, 2.0, 9).unwrap();
            let f = ScalarField::from_fn(g, |x| x[0] + 2.0 * x[1] * x[2]);
            let h = ScalarField::from_fn(g, |x| (x[0] * x[1]).cos());
            let combo = f.zip_with(&h, |u, v| a * u + b * v).unwrap();
            let ball = Ball::new(g, vec![0.1, 0.0, -0.2], r).unwrap();
            let lhs = integrate(&combo, &ball).unwrap();
            let rhs = a * integrate(&f, &ball).unwrap() + b * integrate(&h, &ball).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn nested_balls_nested_measures(r in 0.2f64..1.5, t in 1.0f64..2.5) {
            let g = Grid::new(3, 2.0, 9).unwrap();
            let w = ScalarField::from_fn(g, |x| 1.0 + x[0].abs());
            let small = Ball::new(g, vec![0.0, 0.25, 0.0], r).unwrap();
            let large = dilate(&small, t).unwrap();
            prop_assert!(small.members().iter().all(|i| large.members().binary_search(i).is_ok()));
            prop_assert!(measure(&w, &small).unwrap() <= measure(&w, &large).unwrap());
        }

        #[test]
        fn text_io_roundtrip(values in proptest::collection::vec(-1e6f64..1e6, 8)) {
            let g = Grid::new(3, 1.0, 2).unwrap();
            let f = ScalarField::new(g, values).unwrap();
            prop_assert_eq!(ScalarField::from_text(&f.to_text()).unwrap(), f);
        }
    }
}
