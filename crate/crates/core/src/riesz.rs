//! Discrete Schrödinger operator `L = DᵀD + V`, its inverse square root, the
//! Riesz transforms `R = D L^{-1/2}` and `R* = L^{-1/2} Dᵀ`, their kernels and
//! commutators of every order.
//!
//! `D_j f(x) = (f(x + h e_j) - f(x))/h` with zero values past the upper face,
//! so `DᵀD` is positive definite and `‖R‖₂ ≤ 1` holds exactly.

use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{unit_ball_volume, Ball, Grid, ScalarField};
use crate::ladder::{smallest_at_least, Ladders};
use crate::oscillation::Symbol;
use crate::potentials::{CriticalRadiusField, Potential};
use crate::report::{CheckReport, Witness};

/// Default cap on `n^d` for the dense factorization (33³).
pub const DEFAULT_DENSE_CAP: usize = 35937;

const CACHE_MAGIC: &[u8; 8] = b"RHOEIG01";

/// `d` real components on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch);
        }
        Ok(VectorField { grid, components })
    }

    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            grid,
            components: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &[f64] {
        &self.components[j]
    }

    /// Pointwise Euclidean length `|F(x)|`.
    pub fn magnitude(&self) -> ScalarField {
        let values = (0..self.grid.len())
            .map(|i| {
                self.components
                    .iter()
                    .map(|c| c[i] * c[i])
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        ScalarField::new(self.grid, values).expect("matching length")
    }

    /// Discrete `L²` norm with cell volumes.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.components.iter().flatten().map(|v| v * v).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        let s: f64 = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        self.components
            .iter()
            .flatten()
            .zip(other.components.iter().flatten())
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

fn scalar_l2(grid: &Grid, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * grid.cell_volume()).sqrt()
}

/// Which singular integral is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `R_j = D_j L^{-1/2}`
    Riesz,
    /// `R*_j = L^{-1/2} D_jᵀ`, the exact adjoint of each `R_j`.
    Dual,
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::Riesz => "R",
            Transform::Dual => "R*",
        }
    }
}

/// How an operator is built and where its eigendecomposition is cached.
#[derive(Debug, Clone)]
pub struct OperatorOptions {
    pub dense_cap: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions {
            dense_cap: DEFAULT_DENSE_CAP,
            cache_dir: None,
        }
    }
}

/// Eigendecomposition of `L` with `L^{-1/2}` stored densely.
pub struct SpectralOperator {
    grid: Grid,
    potential: Vec<f64>,
    descriptor: String,
    eigenvalues: Vec<f64>,
    /// Column-major: column `k` is the `k`-th eigenvector.
    eigenvectors: Vec<f64>,
    /// Symmetric, so column `x` is also row `x`.
    inv_sqrt: Vec<f64>,
}

impl std::fmt::Debug for SpectralOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOperator")
            .field("grid", &self.grid)
            .field("descriptor", &self.descriptor)
            .field("lambda_min", &self.eigenvalues.first())
            .field("lambda_max", &self.eigenvalues.last())
            .finish()
    }
}

pub fn build_operator(potential: &Potential) -> Result<SpectralOperator> {
    build_operator_with(potential, &OperatorOptions::default())
}

pub fn build_operator_with(
    potential: &Potential,
    options: &OperatorOptions,
) -> Result<SpectralOperator> {
    let grid = *potential.grid();
    let n = grid.len();
    if n > options.dense_cap {
        return Err(Error::TooLarge {
            points: n,
            cap: options.dense_cap,
        });
    }
    let descriptor = potential.descriptor();
    let cache_path = options
        .cache_dir
        .as_ref()
        .map(|dir| dir.join(format!("{}.eig", cache_key(&grid, &descriptor))));
    let v = potential.field().values().to_vec();
    if let Some(path) = cache_path.as_ref().filter(|p| p.exists()) {
        let (eigenvalues, eigenvectors) = read_cache(path, &grid)?;
        return SpectralOperator::from_parts(grid, v, descriptor, eigenvalues, eigenvectors);
    }

    let h2 = grid.spacing().powi(2);
    let mut diag = v.clone();
    for (i, d) in diag.iter_mut().enumerate() {
        for axis in 0..grid.dim() {
            *d += if grid.backward_neighbor(i, axis).is_some() {
                2.0
            } else {
                1.0
            } / h2;
        }
    }
    let strides: Vec<usize> = (0..grid.dim()).map(|a| grid.axis_stride(a)).collect();
    let l = Mat::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            return diag[i];
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        for (axis, &s) in strides.iter().enumerate() {
            if hi - lo == s && grid.forward_neighbor(lo, axis) == Some(hi) {
                return -1.0 / h2;
            }
        }
        0.0
    });
    let evd = l
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    drop(l);
    let eigenvalues: Vec<f64> = (0..n).map(|k| evd.S().column_vector()[k]).collect();
    let u = evd.U();
    let mut eigenvectors = Vec::with_capacity(n * n);
    for k in 0..n {
        for i in 0..n {
            eigenvectors.push(u[(i, k)]);
        }
    }
    drop(evd);
    if let Some(path) = &cache_path {
        write_cache(path, &grid, &eigenvalues, &eigenvectors)?;
    }
    SpectralOperator::from_parts(grid, v, descriptor, eigenvalues, eigenvectors)
}

/// Hex SHA-256 of `"d,n,L,descriptor"`.
pub fn cache_key(grid: &Grid, descriptor: &str) -> String {
    let text = format!(
        "{},{},{:?},{}",
        grid.dim(),
        grid.points_per_axis(),
        grid.half_width(),
        descriptor
    );
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Layout (little endian): magic `RHOEIG01`, u64 d, u64 n, f64 L, u64 N,
/// N eigenvalues, then the N×N eigenvector matrix row-major
/// (row `i` holds component `i` of every eigenvector).
pub fn write_cache(
    path: &Path,
    grid: &Grid,
    eigenvalues: &[f64],
    eigenvectors: &[f64],
) -> Result<()> {
    let n = eigenvalues.len();
    let mut bytes = Vec::with_capacity(40 + 8 * n * (n + 1));
    bytes.extend_from_slice(CACHE_MAGIC);
    bytes.extend_from_slice(&(grid.dim() as u64).to_le_bytes());
    bytes.extend_from_slice(&(grid.points_per_axis() as u64).to_le_bytes());
    bytes.extend_from_slice(&grid.half_width().to_le_bytes());
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    for v in eigenvalues {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for i in 0..n {
        for k in 0..n {
            bytes.extend_from_slice(&eigenvectors[k * n + i].to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Returns eigenvalues and column-major eigenvectors.
pub fn read_cache(path: &Path, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |what: &str| Error::Parse(format!("{}: {what}", path.display()));
    if bytes.len() < 40 || &bytes[..8] != CACHE_MAGIC {
        return Err(bad("not an eigen cache"));
    }
    let word = |k: usize| -> [u8; 8] { bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap() };
    let d = u64::from_le_bytes(word(0)) as usize;
    let n_axis = u64::from_le_bytes(word(1)) as usize;
    let l = f64::from_le_bytes(word(2));
    let n = u64::from_le_bytes(word(3)) as usize;
    if d != grid.dim()
        || n_axis != grid.points_per_axis()
        || l != grid.half_width()
        || n != grid.len()
    {
        return Err(bad("grid does not match"));
    }
    if bytes.len() != 40 + 8 * n * (n + 1) {
        return Err(bad("truncated"));
    }
    let at = |k: usize| f64::from_le_bytes(bytes[40 + 8 * k..48 + 8 * k].try_into().unwrap());
    let eigenvalues = (0..n).map(at).collect();
    let mut eigenvectors = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            eigenvectors[k * n + i] = at(n + i * n + k);
        }
    }
    Ok((eigenvalues, eigenvectors))
}

impl SpectralOperator {
    fn from_parts(
        grid: Grid,
        potential: Vec<f64>,
        descriptor: String,
        eigenvalues: Vec<f64>,
        eigenvectors: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.len();
        let lambda_min = eigenvalues[0];
        if !(lambda_min > 0.0) {
            return Err(Error::OperatorNotPositive(lambda_min));
        }
        let u = faer::MatRef::from_column_major_slice(&eigenvectors, n, n);
        let w = Mat::<f64>::from_fn(n, n, |i, k| u[(i, k)] / eigenvalues[k].sqrt());
        let a = &w * u.transpose();
        drop(w);
        let mut inv_sqrt = Vec::with_capacity(n * n);
        for j in 0..n {
            inv_sqrt.extend_from_slice(a.col_as_slice(j));
        }
        Ok(SpectralOperator {
            grid,
            potential,
            descriptor,
            eigenvalues,
            eigenvectors,
            inv_sqrt,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.eigenvectors[k * n..(k + 1) * n]
    }

    /// Row (equivalently column) `x` of `L^{-1/2}`.
    pub fn inv_sqrt_row(&self, x: usize) -> &[f64] {
        let n = self.grid.len();
        &self.inv_sqrt[x * n..(x + 1) * n]
    }

    /// `L f` from the sparse stencil.
    pub fn apply_l(&self, f: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let h2 = g.spacing().powi(2);
        (0..g.len())
            .map(|i| {
                let mut acc = self.potential[i] * f[i];
                for axis in 0..g.dim() {
                    let fwd = g.forward_neighbor(i, axis);
                    let bwd = g.backward_neighbor(i, axis);
                    acc += f[i] * if bwd.is_some() { 2.0 } else { 1.0 } / h2;
                    if let Some(j) = fwd {
                        acc -= f[j] / h2;
                    }
                    if let Some(j) = bwd {
                        acc -= f[j] / h2;
                    }
                }
                acc
            })
            .collect()
    }

    /// `L^{-1/2} f`.
    pub fn apply_inv_sqrt(&self, f: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|x| dot(self.inv_sqrt_row(x), f))
            .collect()
    }

    /// `D_j f` with zeros past the upper face.
    pub fn forward_difference(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let g = &self.grid;
        let h = g.spacing();
        (0..g.len())
            .map(|i| (g.forward_neighbor(i, axis).map_or(0.0, |j| f[j]) - f[i]) / h)
            .collect()
    }

    /// `D_jᵀ g(y) = (g(y - e_j) - g(y))/h`.
    pub fn difference_adjoint(&self, g: &[f64], axis: usize) -> Vec<f64> {
        let grid = &self.grid;
        let h = grid.spacing();
        (0..grid.len())
            .map(|i| (grid.backward_neighbor(i, axis).map_or(0.0, |j| g[j]) - g[i]) / h)
            .collect()
    }

    /// `R f = D L^{-1/2} f`, or `R* f = (L^{-1/2} D_jᵀ f)_j`.
    pub fn apply(&self, transform: Transform, f: &ScalarField) -> Result<VectorField> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let d = self.grid.dim();
        let components = match transform {
            Transform::Riesz => {
                let u = self.apply_inv_sqrt(f.values());
                (0..d).map(|j| self.forward_difference(&u, j)).collect()
            }
            Transform::Dual => (0..d)
                .map(|j| self.apply_inv_sqrt(&self.difference_adjoint(f.values(), j)))
                .collect(),
        };
        VectorField::new(self.grid, components)
    }

    pub fn apply_riesz(&self, f: &ScalarField) -> Result<VectorField> {
        self.apply(Transform::Riesz, f)
    }

    /// Exact adjoint of the stacked `R`: `L^{-1/2} Σ_j D_jᵀ g_j`.
    pub fn apply_riesz_adjoint(&self, g: &VectorField) -> Result<ScalarField> {
        if g.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut acc = vec![0.0; self.grid.len()];
        for j in 0..self.grid.dim() {
            for (a, v) in acc
                .iter_mut()
                .zip(self.difference_adjoint(g.component(j), j))
            {
                *a += v;
            }
        }
        ScalarField::new(self.grid, self.apply_inv_sqrt(&acc))
    }

    /// Matrix entry `R_j[x, y]`.
    pub fn riesz_entry(&self, j: usize, x: usize, y: usize) -> f64 {
        let h = self.grid.spacing();
        let here = self.inv_sqrt[x * self.grid.len() + y];
        let next = self
            .grid
            .forward_neighbor(x, j)
            .map_or(0.0, |xp| self.inv_sqrt[xp * self.grid.len() + y]);
        (next - here) / h
    }

    /// Kernel `K(x, y) = (R_j[x, y])_j / cell_volume`; `K*(x, y) = K(y, x)`.
    pub fn kernel(&self, transform: Transform, x: usize, y: usize) -> Vec<f64> {
        let cv = self.grid.cell_volume();
        let (a, b) = match transform {
            Transform::Riesz => (x, y),
            Transform::Dual => (y, x),
        };
        (0..self.grid.dim())
            .map(|j| self.riesz_entry(j, a, b) / cv)
            .collect()
    }

    /// `max_i ‖(LU - UΛ)_{i,:}‖₂`, an upper bound for `‖L - UΛUᵀ‖_max`
    /// since the rows of `U` are orthonormal.
    pub fn reconstruction_bound(&self) -> f64 {
        let n = self.grid.len();
        let mut row_sq = vec![0.0f64; n];
        for k in 0..n {
            let u = self.eigenvector(k);
            let lu = self.apply_l(u);
            for i in 0..n {
                let r = lu[i] - self.eigenvalues[k] * u[i];
                row_sq[i] += r * r;
            }
        }
        row_sq.into_iter().fold(0.0, f64::max).sqrt()
    }

    /// `‖L - UΛUᵀ‖_max` formed densely; intended for small grids.
    pub fn reconstruction_error(&self) -> f64 {
        let n = self.grid.len();
        let mut worst = 0.0f64;
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.apply_l(&e);
            for (i, lij) in col.iter().enumerate() {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.eigenvectors[k * n + i]
                        * self.eigenvalues[k]
                        * self.eigenvectors[k * n + j];
                }
                worst = worst.max((lij - s).abs());
            }
        }
        worst
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `[b, T]_m f(x) = Σ_y (b(x) - b(y))^m K(x, y) f(y) dy`; `m = 1` is evaluated
/// as `b·Tf - T(bf)`, higher orders row by row from the kernel.
pub fn commutator_apply(
    op: &SpectralOperator,
    b: &Symbol,
    f: &ScalarField,
    m: u32,
    transform: Transform,
) -> Result<VectorField> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "commutator order must be at least 1".into(),
        ));
    }
    if b.grid() != op.grid() || f.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    if b.field().is_constant() {
        return Ok(VectorField::zeros(*op.grid()));
    }
    if m == 1 {
        let bf = f.zip_with(b.field(), |x, y| x * y)?;
        let tf = op.apply(transform, f)?;
        let tbf = op.apply(transform, &bf)?;
        let bv = b.values();
        let components = tf
            .components()
            .iter()
            .zip(tbf.components())
            .map(|(a, c)| {
                a.iter()
                    .zip(c)
                    .zip(bv)
                    .map(|((a, c), b)| b * a - c)
                    .collect()
            })
            .collect();
        return VectorField::new(*op.grid(), components);
    }
    commutator_kernel_form(op, b, f, m, transform)
}

/// Kernel-weighted form for any `m ≥ 1`, one row at a time.
pub fn commutator_kernel_form(
    op: &SpectralOperator,
    b: &Symbol,
    f: &ScalarField,
    m: u32,
    transform: Transform,
) -> Result<VectorField> {
    if b.grid() != op.grid() || f.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *op.grid();
    let d = grid.dim();
    let n = grid.len();
    let h = grid.spacing();
    let bv = b.values();
    let fv = f.values();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|x| {
            let g: Vec<f64> = (0..n)
                .map(|y| (bv[x] - bv[y]).powi(m as i32) * fv[y])
                .collect();
            match transform {
                Transform::Riesz => {
                    let here = dot(op.inv_sqrt_row(x), &g);
                    (0..d)
                        .map(|j| {
                            let next = grid
                                .forward_neighbor(x, j)
                                .map_or(0.0, |xp| dot(op.inv_sqrt_row(xp), &g));
                            (next - here) / h
                        })
                        .collect()
                }
                Transform::Dual => (0..d)
                    .map(|j| dot(op.inv_sqrt_row(x), &op.difference_adjoint(&g, j)))
                    .collect(),
            }
        })
        .collect();
    let components = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    VectorField::new(grid, components)
}

/// `[b, [b, … [b, T]]]f` with `m` nested brackets, each componentwise.
pub fn commutator_nested(
    op: &SpectralOperator,
    b: &Symbol,
    f: &ScalarField,
    m: u32,
    transform: Transform,
) -> Result<VectorField> {
    if m == 0 {
        return op.apply(transform, f);
    }
    let inner = commutator_nested(op, b, f, m - 1, transform)?;
    let bf = f.zip_with(b.field(), |x, y| x * y)?;
    let inner_bf = commutator_nested(op, b, &bf, m - 1, transform)?;
    let bv = b.values();
    let components = inner
        .components()
        .iter()
        .zip(inner_bf.components())
        .map(|(a, c)| {
            a.iter()
                .zip(c)
                .zip(bv)
                .map(|((a, c), b)| b * a - c)
                .collect()
        })
        .collect();
    VectorField::new(*op.grid(), components)
}

fn gaussian_field(grid: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    ScalarField::from_fn(grid, |_| StandardNormal.sample(rng))
}

/// Largest `‖Rf‖₂/‖f‖₂` over `count` Gaussian fields; passes at `≤ 1 + 1e-8`.
pub fn spectral_bound_check(op: &SpectralOperator, count: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, 0usize);
    for k in 0..count {
        let f = gaussian_field(*op.grid(), &mut rng);
        let rf = op.apply_riesz(&f)?;
        let ratio = rf.l2_norm() / scalar_l2(op.grid(), f.values());
        if ratio > worst.0 {
            worst = (ratio, k);
        }
    }
    Ok(CheckReport::new("riesz_spectral_bound")
        .with_pass(worst.0 <= 1.0 + 1e-8)
        .constant("bound", 1.0 + 1e-8)
        .measure("max_ratio", worst.0)
        .measure("trials", count as f64)
        .with_witness(
            Witness::default()
                .with_function(worst.1)
                .with_value(worst.0),
        ))
}

/// Worst `|⟨Rf, g⟩ - ⟨f, R*g⟩| / (‖Rf‖‖g‖ + ‖f‖‖R*g‖)` over random pairs.
pub fn adjoint_identity_check(
    op: &SpectralOperator,
    count: usize,
    seed: u64,
) -> Result<CheckReport> {
    let grid = *op.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, 0usize);
    for k in 0..count {
        let f = gaussian_field(grid, &mut rng);
        let comps = (0..grid.dim())
            .map(|_| gaussian_field(grid, &mut rng).into_values())
            .collect();
        let g = VectorField::new(grid, comps)?;
        let rf = op.apply_riesz(&f)?;
        let rsg = op.apply_riesz_adjoint(&g)?;
        let lhs = rf.dot(&g);
        let rhs = dot(f.values(), rsg.values()) * grid.cell_volume();
        let scale = rf.l2_norm() * g.l2_norm()
            + scalar_l2(&grid, f.values()) * scalar_l2(&grid, rsg.values());
        let rel = (lhs - rhs).abs() / scale;
        if rel > worst.0 {
            worst = (rel, k);
        }
    }
    Ok(CheckReport::new("riesz_adjoint_identity")
        .with_pass(worst.0 <= 1e-8)
        .constant("tolerance", 1e-8)
        .measure("max_relative_error", worst.0)
        .measure("trials", count as f64)
        .with_witness(
            Witness::default()
                .with_function(worst.1)
                .with_value(worst.0),
        ))
}

/// `‖L (L^{-1/2})² f - f‖ / ‖f‖` over random fields; passes at `≤ 1e-6`.
pub fn functional_calculus_check(
    op: &SpectralOperator,
    count: usize,
    seed: u64,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let f = gaussian_field(*op.grid(), &mut rng);
        let a2f = op.apply_inv_sqrt(&op.apply_inv_sqrt(f.values()));
        let r: Vec<f64> = op
            .apply_l(&a2f)
            .iter()
            .zip(f.values())
            .map(|(a, b)| a - b)
            .collect();
        worst = worst.max(scalar_l2(op.grid(), &r) / scalar_l2(op.grid(), f.values()));
    }
    Ok(CheckReport::new("inverse_square_root")
        .with_pass(worst <= 1e-6)
        .measure("max_relative_residual", worst)
        .measure("lambda_min", op.eigenvalues()[0])
        .measure("lambda_max", *op.eigenvalues().last().unwrap()))
}

/// `C_N = max_{x≠y} |K(x,y)| |x-y|^d (1+|x-y|/ρ(x))^N` for `K` and `K*`.
pub fn kernel_decay_check(
    op: &SpectralOperator,
    rho: &CriticalRadiusField,
    n_list: &[u32],
) -> Result<CheckReport> {
    let grid = *op.grid();
    if rho.grid() != &grid {
        return Err(Error::GridMismatch);
    }
    let n = grid.len();
    let d = grid.dim() as i32;
    let points: Vec<Vec<f64>> = (0..n).map(|i| grid.point(i)).collect();
    let cv = grid.cell_volume();
    let k_count = n_list.len();
    // per row: C_N for K with ρ(x), and for K* (pairs (y, x)) with ρ(y)
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut ck = vec![0.0f64; k_count];
            let mut cs = vec![0.0f64; k_count];
            for y in 0..n {
                if y == x {
                    continue;
                }
                let mut k2 = 0.0;
                for j in 0..grid.dim() {
                    let e = op.riesz_entry(j, x, y) / cv;
                    k2 += e * e;
                }
                let dist = points[x]
                    .iter()
                    .zip(&points[y])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let base = k2.sqrt() * dist.powi(d);
                let sx = 1.0 + dist / rho.at_index(x);
                let sy = 1.0 + dist / rho.at_index(y);
                for (i, &nn) in n_list.iter().enumerate() {
                    ck[i] = ck[i].max(base * sx.powi(nn as i32));
                    cs[i] = cs[i].max(base * sy.powi(nn as i32));
                }
            }
            (ck, cs)
        })
        .collect();
    let mut ck = vec![0.0f64; k_count];
    let mut cs = vec![0.0f64; k_count];
    for (a, b) in &partial {
        for i in 0..k_count {
            ck[i] = ck[i].max(a[i]);
            cs[i] = cs[i].max(b[i]);
        }
    }
    let monotone = ck.windows(2).all(|w| w[0] <= w[1]) && cs.windows(2).all(|w| w[0] <= w[1]);
    let finite = ck.iter().chain(&cs).all(|v| v.is_finite());
    let mut report = CheckReport::new("kernel_decay").with_pass(monotone && finite);
    for (i, &nn) in n_list.iter().enumerate() {
        report = report
            .measure(format!("C_{nn}"), ck[i])
            .measure(format!("C*_{nn}"), cs[i]);
    }
    Ok(report)
}

/// Pointwise tail estimate for `f` vanishing on `2B`: for `x ∈ B`,
/// `|Tf(x)| ≤ C Σ_{k≥1} avg_{2^{k+1}B}|f| (1+r/ρ)^{N N_0/(N_0+1)} (1+2^{k+1}r/ρ)^{-N}`,
/// averages taken against the continuum volume `|2^{k+1}B|`, `k` running until
/// `2^{k+1}B` covers the box. `C` is minimal on the constant ladder.
#[allow(clippy::too_many_arguments)]
pub fn tail_bound_check(
    op: &SpectralOperator,
    transform: Transform,
    rho: &CriticalRadiusField,
    ball: &Ball,
    f: &ScalarField,
    n: u32,
    n0: u32,
    ladders: &Ladders,
) -> Result<CheckReport> {
    let grid = *op.grid();
    if f.grid() != &grid || ball.grid() != &grid || rho.grid() != &grid {
        return Err(Error::GridMismatch);
    }
    let doubled = Ball::new(grid, ball.center().to_vec(), 2.0 * ball.radius())?;
    if doubled.members().iter().any(|&i| f.values()[i] != 0.0) {
        return Err(Error::InvalidArgument("f must vanish on 2B".into()));
    }
    let rc = rho.at_point(ball.center());
    let r = ball.radius();
    let reach = ball.center().iter().map(|c| c * c).sum::<f64>().sqrt()
        + grid.half_width() * (grid.dim() as f64).sqrt();
    let nf = n as f64;
    let lead = (1.0 + r / rc).powf(nf * n0 as f64 / (n0 as f64 + 1.0));
    let mut sum = 0.0;
    let mut k = 1;
    loop {
        let t = 2f64.powi(k + 1);
        let big = Ball::new(grid, ball.center().to_vec(), t * r)?;
        let mass: f64 = big
            .members()
            .iter()
            .map(|&i| f.values()[i].abs())
            .sum::<f64>()
            * grid.cell_volume();
        let vol = unit_ball_volume(grid.dim()) * (t * r).powi(grid.dim() as i32);
        sum += mass / vol * lead * (1.0 + t * r / rc).powf(-nf);
        if t * r >= 2.0 * reach {
            break;
        }
        k += 1;
    }
    let tf = op.apply(transform, f)?.magnitude();
    let (lhs, at) = ball.members().iter().map(|&i| (tf.values()[i], i)).fold(
        (0.0, ball.center_index()),
        |a, b| if b.0 > a.0 { b } else { a },
    );
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / sum };
    let c = if ratio == 0.0 {
        ladders.constants.first().copied()
    } else {
        smallest_at_least(&ladders.constants, ratio)
    };
    let mut report = CheckReport::new(format!("tail_bound_{}", transform.name()))
        .with_pass(c.is_some())
        .constant("N", nf)
        .constant("N0", n0 as f64)
        .measure("lhs", lhs)
        .measure("rhs_sum", sum)
        .measure("ratio", ratio)
        .with_witness(Witness::ball(ball.record()).with_value(ratio));
    if let Some(w) = report.witness.as_mut() {
        w.point = Some(grid.point(at));
    }
    if let Some(c) = c {
        report = report.constant("C", c);
    }
    Ok(report)
}
