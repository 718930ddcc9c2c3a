//! `BMO_{ρ,θ}` characteristics, John–Nirenberg tails and the oscillation lemmas
//! used by the commutator estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ball, BallFamily, BallRecord, Grid, ScalarField};
use crate::ladder::{fit_exponent, pow2_ladder, smallest_at_least, Ladders, Sample};
use crate::potentials::CriticalRadiusField;
use crate::report::{CheckReport, Witness};
use crate::weights::{Weight, RH_CONSTANTS, RH_ETAS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolKind {
    Constant {
        value: f64,
    },
    /// `log(1 + |x|)`
    Log,
    Samples,
}

#[derive(Debug, Clone)]
pub struct Symbol {
    field: ScalarField,
    kind: SymbolKind,
}

impl Symbol {
    pub fn new(grid: Grid, kind: SymbolKind) -> Result<Self> {
        let field = match &kind {
            SymbolKind::Constant { value } => ScalarField::constant(grid, *value),
            SymbolKind::Log => ScalarField::from_fn(grid, |x| {
                x.iter().map(|v| v * v).sum::<f64>().sqrt().ln_1p()
            }),
            SymbolKind::Samples => {
                return Err(Error::InvalidArgument(
                    "use Symbol::from_samples for sampled symbols".into(),
                ))
            }
        };
        Self::validated(field, kind)
    }

    pub fn from_samples(field: ScalarField) -> Result<Self> {
        Self::validated(field, SymbolKind::Samples)
    }

    fn validated(field: ScalarField, kind: SymbolKind) -> Result<Self> {
        if let Some(i) = field.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "symbol is not finite at {i}"
            )));
        }
        Ok(Symbol { field, kind })
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

    pub fn kind(&self) -> &SymbolKind {
        &self.kind
    }
}

/// Unweighted mean `b_B` over the ball's lattice points.
pub fn ball_mean(values: &[f64], ball: &Ball) -> f64 {
    let first = values[ball.members()[0]];
    if ball.members().iter().all(|&i| values[i] == first) {
        return first;
    }
    ball.members().iter().map(|&i| values[i]).sum::<f64>() / ball.members().len() as f64
}

/// `avg_B |b - b_B|`; exactly 0 when `b` is constant on `B`.
pub fn mean_oscillation(values: &[f64], ball: &Ball) -> f64 {
    let mean = ball_mean(values, ball);
    ball.members()
        .iter()
        .map(|&i| (values[i] - mean).abs())
        .sum::<f64>()
        / ball.members().len() as f64
}

fn check_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmoCharacteristic {
    pub theta: f64,
    pub value: f64,
    pub argmax: Option<BallRecord>,
}

/// `sup_B (1+r/ρ(x_0))^{-θ} avg_B |b - b_B|` over the family.
pub fn bmo_characteristic(
    b: &Symbol,
    theta: f64,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<BmoCharacteristic> {
    check_grid(b.grid(), rho.grid())?;
    for ball in family.iter() {
        check_grid(b.grid(), ball.grid())?;
    }
    let terms: Vec<(f64, usize)> = family
        .balls()
        .par_iter()
        .enumerate()
        .filter(|(_, ball)| !ball.is_empty())
        .map(|(i, ball)| {
            (
                mean_oscillation(b.values(), ball) * rho.base(ball).powf(-theta),
                i,
            )
        })
        .collect();
    let mut value = 0.0;
    let mut argmax = None;
    for (v, i) in terms {
        if argmax.is_none() || v > value {
            value = v;
            argmax = Some(family.balls()[i].record());
        }
    }
    Ok(BmoCharacteristic {
        theta,
        value,
        argmax,
    })
}

/// Exact distribution of `|b - b_B|` on `B`: levels `v_1 > v_2 > …` with the
/// (weighted) mass of `{|b - b_B| ≥ v_j}`. Zero deviations are dropped.
pub fn deviation_distribution(b: &Symbol, ball: &Ball, w: Option<&Weight>) -> Vec<(f64, f64)> {
    let values = b.values();
    let mean = ball_mean(values, ball);
    let mut devs: Vec<(f64, f64)> = ball
        .members()
        .iter()
        .map(|&i| ((values[i] - mean).abs(), w.map_or(1.0, |w| w.values()[i])))
        .collect();
    devs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let cv = ball.grid().cell_volume();
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut mass = 0.0;
    for (v, m) in devs {
        mass += m * cv;
        if v == 0.0 {
            break;
        }
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = mass,
            _ => out.push((v, mass)),
        }
    }
    out
}

pub const JN_C2: [f64; 7] = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625];

/// `|{x ∈ B : |b - b_B| > λ}| ≤ C_1|B| exp(-(1+r/ρ)^{-θ*} C_2 λ/‖b‖)(1+r/ρ)^η`
/// with `θ* = (N_0+1)θ`, `‖b‖` the family BMO characteristic at θ, and w-measure
/// in place of Lebesgue measure when `w` is given (η = 0 otherwise). The sup
/// over `λ` is taken exactly at the jump points of the distribution.
pub fn john_nirenberg_tail(
    b: &Symbol,
    theta: f64,
    n0: u32,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    w: Option<&Weight>,
) -> Result<CheckReport> {
    let norm = bmo_characteristic(b, theta, rho, family)?.value;
    let theta_star = (n0 as f64 + 1.0) * theta;
    let name = if w.is_some() {
        "john_nirenberg_weighted"
    } else {
        "john_nirenberg"
    };
    let base_report = CheckReport::new(name)
        .constant("theta", theta)
        .constant("theta_star", theta_star)
        .measure("bmo_norm", norm);
    if norm == 0.0 {
        return Ok(base_report
            .constant("C1", 1.0)
            .constant("C2", 1.0)
            .constant("eta", 0.0)
            .note("symbol has zero oscillation on every family ball"));
    }
    struct BallTail {
        ball: usize,
        base: f64,
        mass: f64,
        levels: Vec<(f64, f64)>,
    }
    let tails: Vec<BallTail> = family
        .iter()
        .enumerate()
        .filter(|(_, ball)| !ball.is_empty())
        .map(|(i, ball)| {
            let mass = match w {
                Some(w) => {
                    ball.members().iter().map(|&k| w.values()[k]).sum::<f64>()
                        * ball.grid().cell_volume()
                }
                None => ball.discrete_volume(),
            };
            BallTail {
                ball: i,
                base: rho.base(ball),
                mass,
                levels: deviation_distribution(b, ball, w),
            }
        })
        .collect();
    let etas: &[f64] = if w.is_some() { &RH_ETAS } else { &[0.0] };
    let c1_ladder = pow2_ladder(0, 20);
    let mut worst = (0.0, 0usize, 0.0);
    for &c2 in &JN_C2 {
        for &eta in etas {
            // required C_1 with its witness ball and level
            let mut need = (0.0f64, 0usize, 0.0f64);
            for t in &tails {
                let a = t.base.powf(-theta_star) * c2 / norm;
                for &(v, m) in &t.levels {
                    let r = m / (t.mass * (-a * v).exp() * t.base.powf(eta));
                    if r > need.0 {
                        need = (r, t.ball, v);
                    }
                }
            }
            if let Some(c1) = smallest_at_least(&c1_ladder, need.0) {
                return Ok(base_report
                    .constant("C1", c1)
                    .constant("C2", c2)
                    .constant("eta", eta)
                    .measure("required_C1", need.0)
                    .with_witness(
                        Witness::ball(family.balls()[need.1].record())
                            .with_lambda(need.2)
                            .with_value(need.0),
                    ));
            }
            worst = need;
        }
    }
    Ok(base_report
        .with_pass(false)
        .measure("required_C1", worst.0)
        .with_witness(
            Witness::ball(family.balls()[worst.1].record())
                .with_lambda(worst.2)
                .with_value(worst.0),
        ))
}

/// `(∫_B |b - b_B|^p w)^{1/p} ≤ C w(B)^{1/p}(1+r/ρ)^μ`, `(μ, C)` fitted on `ladders`.
pub fn oscillation_weighted_lp_check(
    b: &Symbol,
    w: &Weight,
    p: f64,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    ladders: &Ladders,
) -> Result<CheckReport> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p must be at least 1, got {p}"
        )));
    }
    check_grid(b.grid(), w.grid())?;
    let bv = b.values();
    let wv = w.values();
    let samples: Vec<Sample> = family
        .balls()
        .par_iter()
        .filter(|ball| !ball.is_empty())
        .map(|ball| {
            let mean = ball_mean(bv, ball);
            let lhs: f64 = ball
                .members()
                .iter()
                .map(|&i| (bv[i] - mean).abs().powf(p) * wv[i])
                .sum();
            let wb: f64 = ball.members().iter().map(|&i| wv[i]).sum();
            // cell volumes cancel
            Sample {
                value: (lhs / wb).powf(1.0 / p),
                base: rho.base(ball),
            }
        })
        .collect();
    let balls: Vec<&Ball> = family.iter().filter(|b| !b.is_empty()).collect();
    Ok(fit_report("oscillation_weighted_lp", &samples, &balls, ladders, "mu").constant("p", p))
}

fn fit_report(
    name: &str,
    samples: &[Sample],
    balls: &[&Ball],
    ladders: &Ladders,
    exponent: &str,
) -> CheckReport {
    match fit_exponent(samples, ladders) {
        Ok(fit) => {
            let mut r = CheckReport::new(name)
                .constant(exponent, fit.exponent)
                .constant("C", fit.constant)
                .measure("measured", fit.measured)
                .measure("samples", samples.len() as f64);
            if let Some(ball) = balls.get(fit.witness) {
                r = r.with_witness(Witness::ball(ball.record()).with_value(fit.measured));
            }
            r
        }
        Err(fit) => {
            let mut r = CheckReport::new(name)
                .with_pass(false)
                .measure("measured", fit.measured)
                .measure("samples", samples.len() as f64);
            if let Some(ball) = balls.get(fit.witness) {
                r = r.with_witness(Witness::ball(ball.record()).with_value(fit.measured));
            }
            r
        }
    }
}

/// Descending ladder `{2^{-k} : 0 ≤ k ≤ 10}` for the exponential integrability constant.
pub fn gamma_ladder() -> Vec<f64> {
    (0..=10).map(|k| 2f64.powi(-k)).collect()
}

/// `∫_B {exp[(1+r/ρ)^{-θ*} γ|b - b_B|/‖b‖] - 1} w ≤ C w(B)(1+r/ρ)^η` with
/// `‖b‖` the BMO characteristic at θ; reports the largest passing γ with
/// minimal `(η, C)` on `{0,1,2,4} × {1,2,4,8,16}`.
pub fn exp_integrability_check(
    b: &Symbol,
    w: &Weight,
    theta: f64,
    n0: u32,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<CheckReport> {
    check_grid(b.grid(), w.grid())?;
    let norm = bmo_characteristic(b, theta, rho, family)?.value;
    let theta_star = (n0 as f64 + 1.0) * theta;
    let report = CheckReport::new("exp_integrability")
        .constant("theta", theta)
        .constant("theta_star", theta_star)
        .measure("bmo_norm", norm);
    if norm == 0.0 {
        return Ok(report
            .constant("gamma", 1.0)
            .constant("eta", 0.0)
            .constant("C", 1.0)
            .note("symbol has zero oscillation on every family ball"));
    }
    let bv = b.values();
    let wv = w.values();
    let balls: Vec<&Ball> = family.iter().filter(|b| !b.is_empty()).collect();
    for gamma in gamma_ladder() {
        let samples: Vec<(f64, f64)> = balls
            .par_iter()
            .map(|ball| {
                let base = rho.base(ball);
                let mean = ball_mean(bv, ball);
                let a = base.powf(-theta_star) * gamma / norm;
                let lhs: f64 = ball
                    .members()
                    .iter()
                    .map(|&i| (a * (bv[i] - mean).abs()).exp_m1() * wv[i])
                    .sum();
                let wb: f64 = ball.members().iter().map(|&i| wv[i]).sum();
                (lhs / wb, base)
            })
            .collect();
        let found = RH_ETAS.iter().find_map(|&eta| {
            let (worst, at) = samples
                .iter()
                .enumerate()
                .map(|(i, &(v, base))| (v / base.powf(eta), i))
                .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
            smallest_at_least(&RH_CONSTANTS, worst).map(|c| (eta, c, worst, at))
        });
        if let Some((eta, c, worst, at)) = found {
            return Ok(report
                .constant("gamma", gamma)
                .constant("eta", eta)
                .constant("C", c)
                .measure("ratio", worst)
                .with_witness(Witness::ball(balls[at].record()).with_value(worst)));
        }
    }
    Ok(report.with_pass(false))
}

/// `|b_{2^{k+1}B} - b_B| ≤ C(k+1)(1+2^{k+1}r/ρ(x_0))^{θ''}` for `0 ≤ k ≤ k_max`,
/// `C` minimal on the constant ladder; `k` stops once `2^{k+1}B` leaves the box.
pub fn dyadic_mean_drift_check(
    b: &Symbol,
    theta_pp: f64,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    k_max: u32,
    ladders: &Ladders,
) -> Result<CheckReport> {
    check_grid(b.grid(), rho.grid())?;
    let bv = b.values();
    let results: Vec<(f64, usize, u32, usize, bool)> = family
        .balls()
        .par_iter()
        .enumerate()
        .filter(|(_, ball)| !ball.is_empty())
        .map(|(i, ball)| {
            let mean = ball_mean(bv, ball);
            let rc = rho.at_point(ball.center());
            let mut worst = (0.0f64, 0u32);
            let mut checked = 0usize;
            let mut truncated = false;
            for k in 0..=k_max {
                let t = 2f64.powi(k as i32 + 1);
                if !ball.fits_in_box(t) {
                    truncated = true;
                    break;
                }
                let big = Ball::new(*ball.grid(), ball.center().to_vec(), t * ball.radius())
                    .expect("valid ball");
                let drift = (ball_mean(bv, &big) - mean).abs();
                let bound = (k as f64 + 1.0) * (1.0 + t * ball.radius() / rc).powf(theta_pp);
                checked += 1;
                if drift / bound > worst.0 {
                    worst = (drift / bound, k);
                }
            }
            (worst.0, i, worst.1, checked, truncated)
        })
        .collect();
    let checked: usize = results.iter().map(|r| r.3).sum();
    let truncated = results.iter().filter(|r| r.4).count();
    let worst = results
        .iter()
        .copied()
        .fold((0.0, 0, 0, 0, false), |a, b| if b.0 > a.0 { b } else { a });
    let c = smallest_at_least(&ladders.constants, worst.0);
    let mut report = CheckReport::new("dyadic_mean_drift")
        .with_pass(c.is_some() && checked > 0)
        .constant("theta", theta_pp)
        .constant("k_max", k_max as f64)
        .measure("ratio", worst.0)
        .measure("checked", checked as f64)
        .measure("truncated_balls", truncated as f64);
    if let Some(c) = c {
        report = report.constant("C", c);
    }
    if checked == 0 {
        report = report.note("no dilate 2^{k+1}B fits in the box");
    } else {
        report = report.with_witness(
            Witness::ball(family.balls()[worst.1].record())
                .with_value(worst.0)
                .with_lambda(worst.2 as f64),
        );
    }
    if truncated > 0 {
        report = report.note(format!(
            "{truncated} balls had k truncated at the box boundary"
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_ball_family, FamilyPolicy};
    use proptest::prelude::*;

    fn setup() -> (Grid, CriticalRadiusField, BallFamily) {
        let g = Grid::new(3, 4.0, 17).unwrap();
        let rho = CriticalRadiusField::constant(g, 0.6).unwrap();
        let family = generate_ball_family(&g, &FamilyPolicy::geometric(4, 0.75, 3)).unwrap();
        (g, rho, family)
    }

    #[test]
    fn constant_symbol_has_zero_characteristic() {
        let (g, rho, family) = setup();
        let b = Symbol::new(g, SymbolKind::Constant { value: 0.3 }).unwrap();
        assert_eq!(
            bmo_characteristic(&b, 0.0, &rho, &family).unwrap().value,
            0.0
        );
        let w = Weight::constant(g, 1.0).unwrap();
        for r in [
            john_nirenberg_tail(&b, 1.0, 1, &rho, &family, None).unwrap(),
            exp_integrability_check(&b, &w, 1.0, 1, &rho, &family).unwrap(),
            oscillation_weighted_lp_check(&b, &w, 2.0, &rho, &family, &Ladders::default()).unwrap(),
            dyadic_mean_drift_check(&b, 1.0, &rho, &family, 3, &Ladders::default()).unwrap(),
        ] {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn log_symbol_characteristic_matches_scan() {
        let (g, rho, family) = setup();
        let b = Symbol::new(g, SymbolKind::Log).unwrap();
        let got = bmo_characteristic(&b, 0.0, &rho, &family).unwrap();
        // oracle: two-pass mean and oscillation per ball
        let mut expected = 0.0f64;
        for ball in family.iter() {
            let vals: Vec<f64> = ball
                .members()
                .iter()
                .map(|&i| {
                    let p = g.point(i);
                    (1.0 + p.iter().map(|x| x * x).sum::<f64>().sqrt()).ln()
                })
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            expected =
                expected.max(vals.iter().map(|v| (v - m).abs()).sum::<f64>() / vals.len() as f64);
        }
        assert!((got.value - expected).abs() < 1e-12);
        assert!(got.value > 0.0 && got.value < 1.0);
        let t1 = bmo_characteristic(&b, 1.0, &rho, &family).unwrap().value;
        assert!(t1 <= got.value);
    }

    #[test]
    fn deviation_distribution_counts_levels() {
        let g = Grid::new(1, 1.0, 5).unwrap();
        let b = Symbol::from_samples(ScalarField::new(g, vec![0.0, 0.0, 1.0, 2.0, 2.0]).unwrap())
            .unwrap();
        let ball = Ball::new(g, vec![0.0], 1.5).unwrap();
        // mean 1: deviations 1,1,0,1,1 → a single level with four cells
        let levels = deviation_distribution(&b, &ball, None);
        assert_eq!(levels, vec![(1.0, 4.0 * g.cell_volume())]);
    }

    #[test]
    fn john_nirenberg_for_log_symbol() {
        let (g, rho, family) = setup();
        let b = Symbol::new(g, SymbolKind::Log).unwrap();
        let r = john_nirenberg_tail(&b, 0.5, 1, &rho, &family, None).unwrap();
        assert!(r.pass, "{r:?}");
        // the λ → 0⁺ limit alone needs C_1 ≥ mass{|b - b_B| > 0}/|B|, at most 1
        assert!(r.get("required_C1").unwrap() >= 0.5);
        let w = Weight::power(g, 1.0).unwrap();
        let rw = john_nirenberg_tail(&b, 0.5, 1, &rho, &family, Some(&w)).unwrap();
        assert!(rw.pass, "{rw:?}");
    }

    #[test]
    fn exp_integrability_small_gamma_passes() {
        let (g, rho, family) = setup();
        let b = Symbol::new(g, SymbolKind::Log).unwrap();
        let w = Weight::constant(g, 1.0).unwrap();
        let r = exp_integrability_check(&b, &w, 0.5, 1, &rho, &family).unwrap();
        assert!(r.pass);
        assert!(r.get("gamma").unwrap() > 0.0);
    }

    #[test]
    fn oscillation_lp_reduces_to_mean_oscillation() {
        let (g, rho, family) = setup();
        let b = Symbol::new(g, SymbolKind::Log).unwrap();
        let w = Weight::constant(g, 1.0).unwrap();
        let ladders = Ladders {
            exponents: vec![0.0],
            constants: vec![1e-3, 1e-2, 0.1, 1.0],
        };
        let r = oscillation_weighted_lp_check(&b, &w, 1.0, &rho, &family, &ladders).unwrap();
        let bmo = bmo_characteristic(&b, 0.0, &rho, &family).unwrap().value;
        assert!((r.get("measured").unwrap() - bmo).abs() < 1e-12);
    }

    #[test]
    fn dyadic_drift_first_step_is_one_doubling() {
        let g = Grid::new(3, 4.0, 17).unwrap();
        let rho = CriticalRadiusField::constant(g, 1.0).unwrap();
        let b = Symbol::new(g, SymbolKind::Log).unwrap();
        let ball = Ball::new(g, vec![0.0; 3], 0.75).unwrap();
        let family = BallFamily::from_balls(vec![ball.clone()]);
        let r = dyadic_mean_drift_check(&b, 0.0, &rho, &family, 0, &Ladders::default()).unwrap();
        let doubled = Ball::new(g, vec![0.0; 3], 1.5).unwrap();
        let expected = (ball_mean(b.values(), &doubled) - ball_mean(b.values(), &ball)).abs();
        assert!((r.get("ratio").unwrap() - expected).abs() < 1e-15);
        assert_eq!(r.get("checked"), Some(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn bmo_invariant_under_constants(values in prop::collection::vec(-3.0f64..3.0, 125), c in -100.0f64..100.0) {
            let g = Grid::new(3, 2.0, 5).unwrap();
            let rho = CriticalRadiusField::constant(g, 1.0).unwrap();
            let family = generate_ball_family(&g, &FamilyPolicy::geometric(1, 0.6, 3).with_boundary(true)).unwrap();
            let b = Symbol::from_samples(ScalarField::new(g, values.clone()).unwrap()).unwrap();
            let bc = Symbol::from_samples(ScalarField::new(g, values.iter().map(|v| v + c).collect()).unwrap()).unwrap();
            let a = bmo_characteristic(&b, 0.5, &rho, &family).unwrap().value;
            let e = bmo_characteristic(&bc, 0.5, &rho, &family).unwrap().value;
            prop_assert!((a - e).abs() <= 1e-12 * (1.0 + c.abs()));
        }
    }
}
