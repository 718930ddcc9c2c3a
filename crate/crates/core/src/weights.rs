//! ρ-localized Muckenhoupt characteristics, the maximal operator `M_{ρ,θ}`,
//! weighted Lebesgue norms and the structural weight lemmas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ball, BallFamily, BallRecord, Grid, ScalarField};
use crate::ladder::{pow2_ladder, smallest_at_least, Ladders};
use crate::potentials::CriticalRadiusField;
use crate::report::{CheckReport, Witness};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Constant {
        value: f64,
    },
    /// `|x|^alpha`, sampled on the lattice shifted by `h/3` per axis.
    Power {
        alpha: f64,
    },
    /// `(1 + |x|)^alpha`
    ShiftedPower {
        alpha: f64,
    },
    /// `(1 + |x|/ρ(x))^gamma`
    RhoModulated {
        gamma: f64,
    },
    Samples,
}

#[derive(Debug, Clone)]
pub struct Weight {
    field: ScalarField,
    kind: WeightKind,
}

impl Weight {
    /// `rho` is required only for [`WeightKind::RhoModulated`].
    pub fn new(grid: Grid, kind: WeightKind, rho: Option<&CriticalRadiusField>) -> Result<Self> {
        let shift = grid.spacing() / 3.0;
        let field = match &kind {
            WeightKind::Constant { value } => ScalarField::constant(grid, *value),
            WeightKind::Power { alpha } => ScalarField::from_fn(grid, |x| {
                x.iter()
                    .map(|c| (c + shift).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    .powf(*alpha)
            }),
            WeightKind::ShiftedPower { alpha } => {
                ScalarField::from_fn(grid, |x| (1.0 + norm(x)).powf(*alpha))
            }
            WeightKind::RhoModulated { gamma } => {
                let rho = rho.ok_or_else(|| {
                    Error::InvalidArgument(
                        "rho-modulated weight needs a critical radius field".into(),
                    )
                })?;
                if rho.grid() != &grid {
                    return Err(Error::GridMismatch);
                }
                let values = (0..grid.len())
                    .map(|i| (1.0 + norm(&grid.point(i)) / rho.at_index(i)).powf(*gamma))
                    .collect();
                ScalarField::new(grid, values)?
            }
            WeightKind::Samples => {
                return Err(Error::InvalidArgument(
                    "use Weight::from_samples for sampled weights".into(),
                ))
            }
        };
        Self::validated(field, kind)
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::new(grid, WeightKind::Constant { value }, None)
    }

    pub fn power(grid: Grid, alpha: f64) -> Result<Self> {
        Self::new(grid, WeightKind::Power { alpha }, None)
    }

    pub fn from_samples(field: ScalarField) -> Result<Self> {
        Self::validated(field, WeightKind::Samples)
    }

    fn validated(field: ScalarField, kind: WeightKind) -> Result<Self> {
        if let Some(index) = field
            .values()
            .iter()
            .position(|&v| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::NotAWeight {
                index,
                value: field.values()[index],
            });
        }
        Ok(Weight { field, kind })
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn is_unit(&self) -> bool {
        self.values().iter().all(|&v| v == 1.0)
    }

    /// The dual weight `w^{-p'/p}`.
    pub fn dual(&self, p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "dual weight needs p > 1, got {p}"
            )));
        }
        let e = -1.0 / (p - 1.0);
        Self::from_samples(self.field.map(|v| v.powf(e)))
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `p' = p/(p-1)`; infinite for `p = 1`.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// Plain mean of `values` over the ball's lattice points.
fn mean_over(values: &[f64], ball: &Ball, f: impl Fn(f64) -> f64) -> f64 {
    let sum: f64 = ball.members().iter().map(|&i| f(values[i])).sum();
    sum / ball.members().len() as f64
}

fn check_grids(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// The A_p product of one ball, before the `(1+r/ρ)^{-θ}` factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ApSample {
    pub product: f64,
    pub base: f64,
    pub ball: usize,
}

/// Per-ball A_p products; empty balls are skipped.
pub fn ap_products(
    w: &Weight,
    p: f64,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<(Vec<ApSample>, Vec<BallRecord>)> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "p must be at least 1, got {p}"
        )));
    }
    check_grids(w.grid(), rho.grid())?;
    let v = w.values();
    let mut skipped = Vec::new();
    let mut balls = Vec::with_capacity(family.len());
    for (i, ball) in family.iter().enumerate() {
        check_grids(w.grid(), ball.grid())?;
        if ball.is_empty() {
            skipped.push(ball.record());
        } else {
            balls.push(i);
        }
    }
    let samples = balls
        .par_iter()
        .map(|&i| {
            let ball = &family.balls()[i];
            let avg = mean_over(v, ball, |x| x);
            let product = if p == 1.0 {
                let min = ball
                    .members()
                    .iter()
                    .map(|&k| v[k])
                    .fold(f64::INFINITY, f64::min);
                avg / min
            } else {
                let e = -1.0 / (p - 1.0);
                let dual = mean_over(v, ball, |x| x.powf(e));
                avg.powf(1.0 / p) * dual.powf((p - 1.0) / p)
            };
            ApSample {
                product,
                base: rho.base(ball),
                ball: i,
            }
        })
        .collect();
    Ok((samples, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApCharacteristic {
    pub p: f64,
    pub theta: f64,
    pub value: f64,
    pub argmax: Option<BallRecord>,
    pub skipped: Vec<BallRecord>,
}

/// `max_B (avg_B w)^{1/p}(avg_B w^{-p'/p})^{1/p'}(1+r/ρ(x_0))^{-θ}`.
pub fn ap_characteristic(
    w: &Weight,
    p: f64,
    theta: f64,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<ApCharacteristic> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must be nonnegative, got {theta}"
        )));
    }
    let (samples, skipped) = ap_products(w, p, rho, family)?;
    Ok(characteristic_from_samples(
        &samples, family, p, theta, skipped,
    ))
}

pub fn characteristic_from_samples(
    samples: &[ApSample],
    family: &BallFamily,
    p: f64,
    theta: f64,
    skipped: Vec<BallRecord>,
) -> ApCharacteristic {
    let mut value = 0.0;
    let mut argmax = None;
    for s in samples {
        let v = s.product * s.base.powf(-theta);
        if argmax.is_none() || v > value {
            value = v;
            argmax = Some(family.balls()[s.ball].record());
        }
    }
    ApCharacteristic {
        p,
        theta,
        value,
        argmax,
        skipped,
    }
}

/// `M_{ρ,θ} f(x) = max_r (1+r/ρ(x))^{-θ} avg_{B(x,r)} |f|` at every family center;
/// points that center no ball get 0.
pub fn maximal_rho_theta(
    f: &ScalarField,
    theta: f64,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<ScalarField> {
    check_grids(f.grid(), rho.grid())?;
    let v = f.values();
    let mut out = vec![0.0; f.grid().len()];
    let terms: Vec<(usize, f64)> = family
        .balls()
        .par_iter()
        .filter(|b| !b.is_empty())
        .map(|ball| {
            let c = ball.center_index();
            let avg = mean_over(v, ball, f64::abs);
            (
                c,
                avg * (1.0 + ball.radius() / rho.at_index(c)).powf(-theta),
            )
        })
        .collect();
    for ball in family.iter() {
        check_grids(f.grid(), ball.grid())?;
    }
    for (c, t) in terms {
        out[c] = f64::max(out[c], t);
    }
    ScalarField::new(*f.grid(), out)
}

/// Minimal `(θ, C)` on the ladders with `M_{ρ,θ} w ≤ C w` at every family center.
pub fn a1_pointwise_fit(
    w: &Weight,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    ladders: &Ladders,
) -> Result<CheckReport> {
    let centers: Vec<usize> = {
        let mut c: Vec<usize> = family.iter().map(Ball::center_index).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut last = (f64::NAN, 0.0, 0usize);
    for &theta in &ladders.exponents {
        let m = maximal_rho_theta(w.field(), theta, rho, family)?;
        let (worst, ratio) = centers
            .iter()
            .map(|&c| (c, m.values()[c] / w.values()[c]))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        if let Some(c) = smallest_at_least(&ladders.constants, ratio) {
            return Ok(CheckReport::new("a1_pointwise")
                .constant("theta", theta)
                .constant("C", c)
                .measure("ratio", ratio)
                .with_witness(Witness::point(w.grid().point(worst)).with_value(ratio)));
        }
        last = (theta, ratio, worst);
    }
    Ok(CheckReport::new("a1_pointwise")
        .with_pass(false)
        .measure("ratio", last.1)
        .with_witness(Witness::point(w.grid().point(last.2)).with_value(last.1)))
}

/// `(Σ |f|^p w · cell_volume)^{1/p}`.
pub fn weighted_lp_norm(f: &ScalarField, w: &Weight, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p must be at least 1, got {p}"
        )));
    }
    check_grids(f.grid(), w.grid())?;
    let sum: f64 = f
        .values()
        .iter()
        .zip(w.values())
        .map(|(x, wx)| x.abs().powf(p) * wx)
        .sum();
    Ok((sum * f.grid().cell_volume()).powf(1.0 / p))
}

/// `sup_λ λ·w({|f| > λ})`, exact on the lattice.
pub fn weak_l1_quasinorm(f: &ScalarField, w: &Weight) -> Result<f64> {
    check_grids(f.grid(), w.grid())?;
    let cv = f.grid().cell_volume();
    let masses: Vec<f64> = w.values().iter().map(|x| x * cv).collect();
    Ok(weak_l1_from_parts(f.values(), &masses))
}

/// Weak quasinorm of values `f_i` carrying point masses `m_i ≥ 0`:
/// `max_k |f|_(k) · m({top k})` after sorting `|f|` descending.
pub fn weak_l1_from_parts(values: &[f64], masses: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    let mut cumulative = 0.0;
    let mut best = 0.0f64;
    for &i in &order {
        cumulative += masses[i];
        best = best.max(values[i].abs() * cumulative);
    }
    best
}

pub const RH_EPSILONS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];
pub const RH_ETAS: [f64; 4] = [0.0, 1.0, 2.0, 4.0];
pub const RH_CONSTANTS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Per-ball `(avg w^{1+ε})^{1/(1+ε)} / avg w` and the ball's base.
fn rh_ratios(
    w: &Weight,
    eps: f64,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Vec<(f64, f64, usize)> {
    let v = w.values();
    family
        .balls()
        .par_iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(i, ball)| {
            let avg = mean_over(v, ball, |x| x);
            let high = mean_over(v, ball, |x| x.powf(1.0 + eps)).powf(1.0 / (1.0 + eps));
            (high / avg, rho.base(ball), i)
        })
        .collect()
}

/// Smallest `(η, C)` on the ladders with `ratio ≤ C·base^η` for all samples.
fn fit_eta_constant(
    samples: &[(f64, f64, usize)],
    etas: &[f64],
    constants: &[f64],
) -> Option<(f64, f64, f64, usize)> {
    etas.iter().find_map(|&eta| {
        let (ratio, ball) = samples
            .iter()
            .map(|&(r, base, i)| (r / base.powf(eta), i))
            .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
        smallest_at_least(constants, ratio).map(|c| (eta, c, ratio, ball))
    })
}

/// Reverse Hölder inequality for weights:
/// `(avg_B w^{1+ε})^{1/(1+ε)} ≤ C avg_B w (1+r/ρ(x_0))^η`, with ε searched from
/// the largest ladder value down, then η and C ascending.
pub fn reverse_holder_weight_fit(
    w: &Weight,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<CheckReport> {
    check_grids(w.grid(), rho.grid())?;
    let mut worst = None;
    for &eps in &RH_EPSILONS {
        let samples = rh_ratios(w, eps, rho, family);
        if let Some((eta, c, measured, ball)) = fit_eta_constant(&samples, &RH_ETAS, &RH_CONSTANTS)
        {
            return Ok(CheckReport::new("reverse_holder_weight")
                .constant("epsilon", eps)
                .constant("eta", eta)
                .constant("C", c)
                .measure("ratio", measured)
                .measure("balls", samples.len() as f64)
                .with_witness(Witness::ball(family.balls()[ball].record()).with_value(measured)));
        }
        let eta = *RH_ETAS.last().unwrap();
        let (ratio, ball) = samples
            .iter()
            .map(|&(r, base, i)| (r / base.powf(eta), i))
            .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
        worst = Some((ratio, ball));
    }
    let (ratio, ball) = worst.unwrap_or((f64::NAN, 0));
    let mut report = CheckReport::new("reverse_holder_weight")
        .with_pass(false)
        .measure("ratio", ratio);
    if let Some(b) = family.balls().get(ball) {
        report = report.with_witness(Witness::ball(b.record()).with_value(ratio));
    }
    Ok(report)
}

/// How subsets `E ⊂ B` are sampled for the measure comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetPolicy {
    /// Coordinate half-balls `{x_k < c_k}` and `{x_k ≥ c_k}`.
    pub half_balls: bool,
    /// Inner ball `B(x_0, r/2)` and the shell `B \ B(x_0, r/2)`.
    pub shells: bool,
    /// Independent Bernoulli masks per ball, one per density.
    pub mask_densities: Vec<f64>,
    pub seed: u64,
}

impl Default for SubsetPolicy {
    fn default() -> Self {
        SubsetPolicy {
            half_balls: true,
            shells: true,
            mask_densities: vec![0.5, 0.125],
            seed: 0,
        }
    }
}

/// Subsets of `ball` as sorted member lists: always `B` and `∅`, then the policy's shapes.
pub fn sample_subsets(ball: &Ball, policy: &SubsetPolicy, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let grid = ball.grid();
    let members = ball.members();
    let mut out = vec![members.to_vec(), Vec::new()];
    if policy.half_balls {
        for axis in 0..grid.dim() {
            let c = ball.center()[axis];
            let (lo, hi): (Vec<usize>, Vec<usize>) =
                members.iter().partition(|&&i| grid.point(i)[axis] < c);
            out.push(lo);
            out.push(hi);
        }
    }
    if policy.shells {
        let r2 = (ball.radius() / 2.0).powi(2);
        let (inner, shell): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| {
            let p = grid.point(i);
            p.iter()
                .zip(ball.center())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                < r2
        });
        out.push(inner);
        out.push(shell);
    }
    for &density in &policy.mask_densities {
        out.push(
            members
                .iter()
                .copied()
                .filter(|_| rng.random::<f64>() < density)
                .collect(),
        );
    }
    out
}

pub const MC_DELTAS: [f64; 5] = [1.0, 0.5, 1.0 / 3.0, 0.2, 1.0 / 9.0];

/// One `(E, B)` instance: `w(E)/w(B)`, `|E|/|B|` and the base of `B`.
#[derive(Debug, Clone, Copy)]
struct Comparison {
    weight_ratio: f64,
    volume_ratio: f64,
    base: f64,
    ball: usize,
}

fn comparisons(
    w: &Weight,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    policy: &SubsetPolicy,
) -> Result<Vec<Comparison>> {
    check_grids(w.grid(), rho.grid())?;
    let v = w.values();
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut out = Vec::new();
    for (i, ball) in family.iter().enumerate() {
        check_grids(w.grid(), ball.grid())?;
        if ball.is_empty() {
            continue;
        }
        let wb: f64 = ball.members().iter().map(|&k| v[k]).sum();
        let nb = ball.members().len() as f64;
        let base = rho.base(ball);
        for e in sample_subsets(ball, policy, &mut rng) {
            let we: f64 = e.iter().map(|&k| v[k]).sum();
            out.push(Comparison {
                weight_ratio: we / wb,
                volume_ratio: e.len() as f64 / nb,
                base,
                ball: i,
            });
        }
    }
    Ok(out)
}

fn comparison_samples(cs: &[Comparison], delta: f64) -> Vec<(f64, f64, usize)> {
    cs.iter()
        .map(|c| {
            let value = if c.weight_ratio == 0.0 {
                0.0
            } else {
                c.weight_ratio / c.volume_ratio.powf(delta)
            };
            (value, c.base, c.ball)
        })
        .collect()
}

/// Fits `(δ, η, C)` in `w(E)/w(B) ≤ C(|E|/|B|)^δ(1+r/ρ(x_0))^η`, δ searched from
/// the largest ladder value down, then η and C ascending.
pub fn measure_comparison_check(
    w: &Weight,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    policy: &SubsetPolicy,
) -> Result<CheckReport> {
    let cs = comparisons(w, rho, family, policy)?;
    for &delta in &MC_DELTAS {
        let samples = comparison_samples(&cs, delta);
        if let Some((eta, c, measured, ball)) = fit_eta_constant(&samples, &RH_ETAS, &RH_CONSTANTS)
        {
            return Ok(CheckReport::new("measure_comparison")
                .constant("delta", delta)
                .constant("eta", eta)
                .constant("C", c)
                .measure("ratio", measured)
                .measure("pairs", cs.len() as f64)
                .with_witness(Witness::ball(family.balls()[ball].record()).with_value(measured)));
        }
    }
    Ok(CheckReport::new("measure_comparison")
        .with_pass(false)
        .measure("pairs", cs.len() as f64))
}

/// The comparison at a prescribed `(δ, η, C)`; reports the worst
/// `w(E)/w(B) / ((|E|/|B|)^δ (1+r/ρ)^η)` and passes when it is at most `C`.
pub fn measure_comparison_at(
    w: &Weight,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    policy: &SubsetPolicy,
    delta: f64,
    eta: f64,
    constant: f64,
) -> Result<CheckReport> {
    let cs = comparisons(w, rho, family, policy)?;
    let (worst, ball) = comparison_samples(&cs, delta)
        .into_iter()
        .map(|(v, base, i)| (v / base.powf(eta), i))
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    let mut report = CheckReport::new("measure_comparison_at")
        .with_pass(worst <= constant * (1.0 + 1e-12))
        .constant("delta", delta)
        .constant("eta", eta)
        .constant("C", constant)
        .measure("ratio", worst)
        .measure("pairs", cs.len() as f64);
    if let Some(b) = family.balls().get(ball) {
        report = report.with_witness(Witness::ball(b.record()).with_value(worst));
    }
    Ok(report)
}

/// `w(2B) ≤ C(1+2r/ρ(x_0))^{pθ'} w(B)` over family balls whose doubles fit in
/// the box (exponent `θ'` for `p = 1`), with `C` minimal on `{2^k : 0 ≤ k ≤ 20}`.
pub fn doubling_check(
    w: &Weight,
    p: f64,
    theta_prime: f64,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<CheckReport> {
    check_grids(w.grid(), rho.grid())?;
    let exponent = if p == 1.0 {
        theta_prime
    } else {
        p * theta_prime
    };
    let v = w.values();
    let eligible: Vec<usize> = family
        .iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty() && b.fits_in_box(2.0))
        .map(|(i, _)| i)
        .collect();
    let ratios: Vec<(f64, usize)> = eligible
        .par_iter()
        .map(|&i| {
            let ball = &family.balls()[i];
            let doubled = Ball::new(*ball.grid(), ball.center().to_vec(), 2.0 * ball.radius())
                .expect("valid ball");
            let wb: f64 = ball.members().iter().map(|&k| v[k]).sum();
            let w2b: f64 = doubled.members().iter().map(|&k| v[k]).sum();
            let rc = rho.at_point(ball.center());
            let factor = (1.0 + 2.0 * ball.radius() / rc).powf(exponent);
            (w2b / (wb * factor), i)
        })
        .collect();
    let (worst, ball) = ratios
        .iter()
        .copied()
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    let ladder = pow2_ladder(0, 20);
    let c = smallest_at_least(&ladder, worst);
    let mut report = CheckReport::new("doubling")
        .with_pass(c.is_some() && !eligible.is_empty())
        .constant("p", p)
        .constant("theta_prime", theta_prime)
        .measure("ratio", worst)
        .measure("balls", eligible.len() as f64)
        .measure("skipped", (family.len() - eligible.len()) as f64);
    if let Some(c) = c {
        report = report.constant("C", c);
    }
    if eligible.is_empty() {
        report = report.note("no family ball has its double inside the box");
    } else {
        report =
            report.with_witness(Witness::ball(family.balls()[ball].record()).with_value(worst));
    }
    Ok(report)
}
