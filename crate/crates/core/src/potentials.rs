//! Nonnegative potentials, reverse Hölder diagnostics and the critical radius
//! function `ρ(x) = sup{r : r^{2-d} ∫_{B(x,r)} V ≤ 1}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ball, BallFamily, BallRecord, Grid, ScalarField};
use crate::quadrature::BallQuadrature;
use crate::report::{CheckReport, Witness};

/// Default relative tolerance of the radius bisection.
pub const DEFAULT_RHO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub height: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Constant {
        value: f64,
    },
    /// `coefficient · |x|^exponent`
    Power {
        coefficient: f64,
        exponent: f64,
    },
    /// Sum of Gaussian bumps.
    Bumps {
        bumps: Vec<Bump>,
    },
    Samples,
}

#[derive(Debug, Clone)]
pub struct Potential {
    field: ScalarField,
    kind: PotentialKind,
}

impl Potential {
    pub fn new(grid: Grid, kind: PotentialKind) -> Result<Self> {
        let field = match &kind {
            PotentialKind::Constant { value } => ScalarField::constant(grid, *value),
            PotentialKind::Power {
                coefficient,
                exponent,
            } => ScalarField::from_fn(grid, |x| coefficient * norm(x).powf(*exponent)),
            PotentialKind::Bumps { bumps } => ScalarField::from_fn(grid, |x| {
                bumps
                    .iter()
                    .map(|b| {
                        let d2: f64 = x.iter().zip(&b.center).map(|(a, c)| (a - c).powi(2)).sum();
                        b.height * (-d2 / (b.width * b.width)).exp()
                    })
                    .sum()
            }),
            PotentialKind::Samples => {
                return Err(Error::InvalidArgument(
                    "use Potential::from_samples for sampled potentials".into(),
                ))
            }
        };
        Self::validated(field, kind)
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::new(grid, PotentialKind::Constant { value })
    }

    pub fn power(grid: Grid, coefficient: f64, exponent: f64) -> Result<Self> {
        Self::new(
            grid,
            PotentialKind::Power {
                coefficient,
                exponent,
            },
        )
    }

    pub fn from_samples(field: ScalarField) -> Result<Self> {
        Self::validated(field, PotentialKind::Samples)
    }

    fn validated(field: ScalarField, kind: PotentialKind) -> Result<Self> {
        field.check_weight()?;
        if field.values().iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidArgument(
                "potential vanishes identically".into(),
            ));
        }
        Ok(Potential { field, kind })
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    /// Stable textual identity, used as a cache key.
    pub fn descriptor(&self) -> String {
        match &self.kind {
            PotentialKind::Samples => {
                let mut s = String::from("samples:");
                for v in self.field.values() {
                    s.push_str(&format!("{:016x}", v.to_bits()));
                }
                s
            }
            kind => serde_json::to_string(kind).expect("descriptor serializes"),
        }
    }

    /// Scaled copy `c·V`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let kind = match &self.kind {
            PotentialKind::Constant { value } => PotentialKind::Constant { value: c * value },
            PotentialKind::Power {
                coefficient,
                exponent,
            } => PotentialKind::Power {
                coefficient: c * coefficient,
                exponent: *exponent,
            },
            PotentialKind::Bumps { bumps } => PotentialKind::Bumps {
                bumps: bumps
                    .iter()
                    .map(|b| Bump {
                        height: c * b.height,
                        ..b.clone()
                    })
                    .collect(),
            },
            PotentialKind::Samples => PotentialKind::Samples,
        };
        Self::validated(self.field.scale(c), kind)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The functional `r ↦ r^{2-d} ∫_{B(x,r)} V` whose last crossing of 1 defines ρ.
pub struct RhoFunctional<'a> {
    potential: &'a Potential,
    quadrature: BallQuadrature,
}

impl<'a> RhoFunctional<'a> {
    pub fn new(potential: &'a Potential) -> Self {
        RhoFunctional {
            potential,
            quadrature: BallQuadrature::new(*potential.grid()),
        }
    }

    pub fn eval(&self, center: &[f64], r: f64) -> f64 {
        let d = self.potential.grid().dim() as i32;
        let mass = self
            .quadrature
            .ball_integral(self.potential.field.values(), center, r);
        mass * r.powi(2 - d)
    }

    /// ρ at an arbitrary point.
    pub fn rho_at(&self, center: &[f64], tol: f64) -> std::result::Result<f64, f64> {
        let grid = self.potential.grid();
        let top = 2.0 * grid.half_width() * (grid.dim() as f64).sqrt();
        if self.eval(center, top) <= 1.0 {
            return Err(top);
        }
        // Scan down a dyadic ladder for the largest radius where the condition
        // holds, so the final bracket straddles the last crossing.
        let mut hi = top;
        let mut lo = top / 2.0;
        let mut steps = 0;
        while self.eval(center, lo) > 1.0 {
            hi = lo;
            lo /= 2.0;
            steps += 1;
            if steps > 200 {
                return Err(0.0);
            }
        }
        while hi - lo > tol * lo {
            let mid = 0.5 * (lo + hi);
            if self.eval(center, mid) <= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Critical radius at lattice point `index`.
pub fn compute_rho(potential: &Potential, index: usize, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let functional = RhoFunctional::new(potential);
    functional
        .rho_at(&potential.grid().point(index), tol)
        .map_err(|radius| Error::RhoExceedsDomain { index, radius })
}

/// ρ sampled at every lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalRadiusField {
    field: ScalarField,
    tol: f64,
}

impl CriticalRadiusField {
    pub fn new(field: ScalarField, tol: f64) -> Result<Self> {
        if let Some(i) = field
            .values()
            .iter()
            .position(|&v| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "critical radius must be positive and finite, got {} at {i}",
                field.values()[i]
            )));
        }
        Ok(CriticalRadiusField { field, tol })
    }

    /// Constant ρ, for experiments that bypass a potential.
    pub fn constant(grid: Grid, rho: f64) -> Result<Self> {
        Self::new(ScalarField::constant(grid, rho), 0.0)
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn at_index(&self, index: usize) -> f64 {
        self.field.values()[index]
    }

    /// ρ at the lattice point nearest to `point`.
    pub fn at_point(&self, point: &[f64]) -> f64 {
        self.at_index(self.grid().nearest_index(point))
    }

    /// `1 + r/ρ(x_0)` for a ball `B(x_0, r)`.
    pub fn base(&self, ball: &Ball) -> f64 {
        1.0 + ball.radius() / self.at_point(ball.center())
    }
}

/// ρ at every grid point; any failure rejects the whole field.
pub fn rho_field(potential: &Potential, tol: f64) -> Result<CriticalRadiusField> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let grid = *potential.grid();
    let functional = RhoFunctional::new(potential);
    let results: Vec<std::result::Result<f64, f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| functional.rho_at(&grid.point(i), tol))
        .collect();
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed > 0 {
        return Err(Error::RhoFieldRejected { failed });
    }
    let values = results.into_iter().map(|r| r.unwrap()).collect();
    CriticalRadiusField::new(ScalarField::new(grid, values)?, tol)
}

/// Candidate constants for the comparability sandwich.
pub const COMPARABILITY_C: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
pub const COMPARABILITY_N0: [u32; 4] = [1, 2, 3, 4];

/// Fits `(C, N_0)` in
/// `C^{-1}(1+|x-y|/ρ(x))^{-N_0} ≤ ρ(y)/ρ(x) ≤ C(1+|x-y|/ρ(x))^{N_0/(N_0+1)}`
/// over pairs with `x` on the stride-`center_stride` sublattice and `y` anywhere,
/// then checks the dyadic consequence
/// `1 + 2^k r/ρ(y) ≥ C^{-1}(1+r/ρ(x))^{-N_0/(N_0+1)}(1+2^k r/ρ(x))` for
/// `y ∈ B(x,r)`, `r ∈ radii`, `1 ≤ k ≤ k_max`.
pub fn check_rho_comparability(
    rho: &CriticalRadiusField,
    center_stride: usize,
    radii: &[f64],
    k_max: u32,
) -> Result<CheckReport> {
    let grid = *rho.grid();
    let xs = BallFamily::center_indices(&grid, center_stride.max(1));
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let values = rho.values();

    // required[n] = max over pairs of the smallest C that works for N_0 = n.
    let mut required = [(0.0f64, 0usize, 0usize); COMPARABILITY_N0.len()];
    for &x in &xs {
        let rx = values[x];
        for y in 0..grid.len() {
            let dist = distance(&points[x], &points[y]);
            let s = 1.0 + dist / rx;
            let q = values[y] / rx;
            for (slot, &n0) in required.iter_mut().zip(&COMPARABILITY_N0) {
                let n0 = n0 as f64;
                let need = (1.0 / (q * s.powf(n0))).max(q / s.powf(n0 / (n0 + 1.0)));
                if need > slot.0 {
                    *slot = (need, x, y);
                }
            }
        }
    }

    let chosen = COMPARABILITY_C.iter().find_map(|&c| {
        COMPARABILITY_N0
            .iter()
            .zip(&required)
            .find(|(_, r)| r.0 <= c)
            .map(|(&n0, r)| (c, n0, *r))
    });

    let pairs = xs.len() * grid.len();
    let Some((c, n0, worst)) = chosen else {
        let (need, x, y) = required[COMPARABILITY_N0.len() - 1];
        return Ok(CheckReport::new("rho_comparability")
            .with_pass(false)
            .measure("required_C_at_max_N0", need)
            .measure("pairs", pairs as f64)
            .with_witness(Witness::point(points[x].clone()).with_other_point(points[y].clone())));
    };

    let alpha = n0 as f64 / (n0 as f64 + 1.0);
    let mut dyadic_checked = 0usize;
    let mut dyadic_worst = f64::INFINITY;
    let mut dyadic_witness = None;
    for &x in &xs {
        let rx = values[x];
        for &r in radii {
            let ball = Ball::at_index(grid, x, r)?;
            for &y in ball.members() {
                for k in 1..=k_max {
                    let scale = 2f64.powi(k as i32) * r;
                    let lhs = 1.0 + scale / values[y];
                    let rhs = (1.0 / c) * (1.0 + r / rx).powf(-alpha) * (1.0 + scale / rx);
                    dyadic_checked += 1;
                    let margin = lhs / rhs;
                    if margin < dyadic_worst {
                        dyadic_worst = margin;
                        dyadic_witness = Some((x, y, r, k));
                    }
                }
            }
        }
    }
    let dyadic_pass = dyadic_worst >= 1.0;
    let mut report = CheckReport::new("rho_comparability")
        .with_pass(dyadic_pass)
        .constant("C", c)
        .constant("N0", n0 as f64)
        .constant("dyadic_C", 1.0 / c)
        .measure("required_C", worst.0)
        .measure("pairs", pairs as f64)
        .measure("dyadic_checked", dyadic_checked as f64)
        .with_witness(
            Witness::point(points[worst.1].clone()).with_other_point(points[worst.2].clone()),
        );
    if dyadic_checked > 0 {
        report = report.measure("dyadic_min_margin", dyadic_worst);
    }
    if !dyadic_pass {
        if let Some((x, y, r, k)) = dyadic_witness {
            report = report.note(format!(
                "dyadic bound fails at x={:?} y={:?} r={r} k={k}",
                points[x], points[y]
            ));
        }
    }
    Ok(report)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RHReport {
    pub q: f64,
    /// `max_B (avg_B V^q)^{1/q} / avg_B V`.
    pub constant: f64,
    pub worst_ball: Option<BallRecord>,
    /// Balls where `avg_B V = 0`.
    pub skipped: Vec<BallRecord>,
}

pub fn reverse_holder_report(
    potential: &Potential,
    q: f64,
    family: &BallFamily,
) -> Result<RHReport> {
    if !(q > 1.0) {
        return Err(Error::InvalidArgument(format!("q must exceed 1, got {q}")));
    }
    let v = potential.field().values();
    let mut constant = 0.0f64;
    let mut worst = None;
    let mut skipped = Vec::new();
    for ball in family.iter() {
        if ball.grid() != potential.grid() {
            return Err(Error::GridMismatch);
        }
        if ball.is_empty() {
            continue;
        }
        let count = ball.members().len() as f64;
        let avg: f64 = ball.members().iter().map(|&i| v[i]).sum::<f64>() / count;
        if avg == 0.0 {
            skipped.push(ball.record());
            continue;
        }
        let avg_q: f64 = ball.members().iter().map(|&i| v[i].powf(q)).sum::<f64>() / count;
        let ratio = avg_q.powf(1.0 / q) / avg;
        if ratio > constant || worst.is_none() {
            constant = constant.max(ratio);
            worst = Some(ball.record());
        }
    }
    Ok(RHReport {
        q,
        constant,
        worst_ball: worst,
        skipped,
    })
}

impl RHReport {
    pub fn to_check(&self) -> CheckReport {
        let mut report = CheckReport::new("reverse_holder_potential")
            .with_pass(self.constant >= 1.0 - 1e-12)
            .constant("q", self.q)
            .measure("constant", self.constant)
            .measure("skipped", self.skipped.len() as f64);
        if let Some(b) = &self.worst_ball {
            report = report.with_witness(Witness::ball(b.clone()));
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_ball_family, FamilyPolicy};
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(3, 4.0, n).unwrap()
    }

    #[test]
    fn potential_validation() {
        let g = grid(5);
        assert!(Potential::constant(g, 0.0).is_err());
        assert!(Potential::constant(g, -1.0).is_err());
        assert!(Potential::constant(g, 1.0).is_ok());
        let mut f = ScalarField::constant(g, 1.0);
        f.values_mut()[3] = -0.5;
        assert!(Potential::from_samples(f).is_err());
    }

    #[test]
    fn rho_for_constant_potential_matches_closed_form() {
        let exact = (3.0 / (4.0 * PI)).sqrt();
        let v = Potential::constant(grid(17), 1.0).unwrap();
        let mid = grid(17).linear_index(&[8, 8, 8]);
        let rho = compute_rho(&v, mid, DEFAULT_RHO_TOL).unwrap();
        assert!((rho / exact - 1.0).abs() < 1e-5, "{rho}");
        // translation invariance, including near the box edge
        let corner = compute_rho(&v, 0, DEFAULT_RHO_TOL).unwrap();
        assert!((corner / rho - 1.0).abs() < 4e-6);
    }

    #[test]
    fn rho_scaling_for_constants() {
        let g = grid(9);
        let v = Potential::constant(g, 1.0).unwrap();
        let v4 = v.scaled(4.0).unwrap();
        let a = compute_rho(&v, 40, DEFAULT_RHO_TOL).unwrap();
        let b = compute_rho(&v4, 40, DEFAULT_RHO_TOL).unwrap();
        assert!((b - a / 2.0).abs() <= 2.0 * DEFAULT_RHO_TOL * a);
    }

    #[test]
    fn rho_for_radial_square_at_origin() {
        // r^{-1} · 4π r⁵/5 = 1
        let exact = (5.0 / (4.0 * PI)).powf(0.25);
        // the interpolant of |x|² overshoots by O(h²), so ρ converges from below
        let mut errors = Vec::new();
        for n in [17, 33, 65] {
            let g = grid(n);
            let v = Potential::power(g, 1.0, 2.0).unwrap();
            let m = g.mid_index();
            let rho = compute_rho(&v, g.linear_index(&[m, m, m]), DEFAULT_RHO_TOL).unwrap();
            assert!(rho <= exact);
            errors.push(1.0 - rho / exact);
        }
        assert!(errors[2] < 0.01, "{errors:?}");
        assert!(
            errors[1] / errors[2] > 3.0 && errors[0] / errors[1] > 3.0,
            "{errors:?}"
        );
    }

    #[test]
    fn rho_decreases_along_ray_for_radial_square() {
        let g = grid(17);
        let v = Potential::power(g, 1.0, 2.0).unwrap();
        let rhos: Vec<f64> = (8..13)
            .map(|k| compute_rho(&v, g.linear_index(&[k, 8, 8]), DEFAULT_RHO_TOL).unwrap())
            .collect();
        // brute-force oracle: the defining integral grows with the center's distance
        let f = RhoFunctional::new(&v);
        for k in 8..12 {
            let a = f.eval(&g.point(g.linear_index(&[k, 8, 8])), 0.3);
            let b = f.eval(&g.point(g.linear_index(&[k + 1, 8, 8])), 0.3);
            assert!(b >= a);
        }
        for w in rhos.windows(2) {
            assert!(w[1] <= w[0], "{rhos:?}");
        }
    }

    #[test]
    fn rho_exceeding_domain_is_an_error() {
        let g = grid(9);
        let v = Potential::constant(g, 1e-6).unwrap();
        assert!(matches!(
            compute_rho(&v, 0, 1e-6),
            Err(Error::RhoExceedsDomain { .. })
        ));
        assert!(matches!(
            rho_field(&v, 1e-6),
            Err(Error::RhoFieldRejected { .. })
        ));
    }

    #[test]
    fn rho_field_resolution_consistency() {
        let exact = (3.0 / (4.0 * PI)).sqrt();
        for n in [9, 17] {
            let field = rho_field(&Potential::constant(grid(n), 1.0).unwrap(), 1e-6).unwrap();
            for &r in field.values() {
                assert!((r / exact - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn comparability_for_constant_rho() {
        let g = grid(9);
        let rho = CriticalRadiusField::constant(g, 0.5).unwrap();
        let report = check_rho_comparability(&rho, 2, &[0.5, 1.0], 3).unwrap();
        assert!(report.pass);
        assert_eq!(report.get("C"), Some(1.0));
        assert_eq!(report.get("N0"), Some(1.0));
    }

    #[test]
    fn comparability_for_radial_square() {
        let g = grid(9);
        let v = Potential::power(g, 1.0, 2.0).unwrap();
        let rho = rho_field(&v, 1e-6).unwrap();
        let report = check_rho_comparability(&rho, 2, &[0.5, 1.0, 2.0], 3).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.get("C").unwrap() <= 16.0);
    }

    #[test]
    fn reverse_holder_of_constants_and_scaling() {
        let g = grid(9);
        let family = generate_ball_family(&g, &FamilyPolicy::geometric(2, 1.0, 2)).unwrap();
        let one = Potential::constant(g, 1.0).unwrap();
        let r = reverse_holder_report(&one, 3.0, &family).unwrap();
        assert_eq!(r.constant, 1.0);
        let sq = Potential::power(g, 1.0, 2.0).unwrap();
        let a = reverse_holder_report(&sq, 3.0, &family).unwrap();
        let b = reverse_holder_report(&sq.scaled(2.0).unwrap(), 3.0, &family).unwrap();
        assert!(a.constant >= 1.0 && a.constant.is_finite());
        assert!((a.constant - b.constant).abs() < 1e-12 * a.constant);
        assert!(reverse_holder_report(&sq, 1.0, &family).is_err());
    }

    #[test]
    fn reverse_holder_skips_vanishing_balls() {
        let g = grid(9);
        let v = Potential::new(
            g,
            PotentialKind::Bumps {
                bumps: vec![Bump {
                    center: vec![3.0, 3.0, 3.0],
                    height: 1.0,
                    width: 0.1,
                }],
            },
        )
        .unwrap();
        let family = generate_ball_family(&g, &FamilyPolicy::geometric(4, 1.0, 1)).unwrap();
        let r = reverse_holder_report(&v, 2.0, &family).unwrap();
        assert!(!r.skipped.is_empty());
    }
}
