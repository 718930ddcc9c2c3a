//! Empirical boundedness suites: random test functions pushed through the
//! transforms and commutators, with a fitted growth `C (1 + r/ρ)^ϑ`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ball, BallFamily, Grid, ScalarField};
use crate::ladder::{fit_exponent, smallest_at_least, worst_ratio, Ladders, Sample};
use crate::morrey::{lloglog_morrey_norm, local_quantities, morrey_norm, Flavor, MorreyParams};
use crate::orlicz::YoungFunction;
use crate::oscillation::{
    dyadic_mean_drift_check, exp_integrability_check, john_nirenberg_tail,
    oscillation_weighted_lp_check, Symbol,
};
use crate::potentials::{check_rho_comparability, CriticalRadiusField};
use crate::report::{BoundednessReport, CheckReport, Witness};
use crate::riesz::{commutator_apply, SpectralOperator, Transform};
use crate::weights::{
    doubling_check, measure_comparison_check, reverse_holder_weight_fit, weak_l1_quasinorm,
    weighted_lp_norm, SubsetPolicy, Weight,
};

pub const DEFAULT_SUITE_SIZE: usize = 50;
pub const DEFAULT_LAMBDA_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Gaussian,
    BallIndicator,
    ShellIndicator,
    KernelColumn,
    Oscillatory,
}

const GENERATORS: [Generator; 5] = [
    Generator::Gaussian,
    Generator::BallIndicator,
    Generator::ShellIndicator,
    Generator::KernelColumn,
    Generator::Oscillatory,
];

#[derive(Debug, Clone)]
pub struct TestFunction {
    pub generator: Generator,
    pub field: ScalarField,
}

/// Seeded list of test functions cycling through the generators.
#[derive(Debug, Clone)]
pub struct TestFunctionSuite {
    seed: u64,
    functions: Vec<TestFunction>,
}

fn random_center(grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let l = grid.half_width();
    (0..grid.dim())
        .map(|_| rng.random_range(-0.5 * l..=0.5 * l))
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn draw(
    generator: Generator,
    grid: Grid,
    rng: &mut ChaCha8Rng,
    op: Option<&SpectralOperator>,
) -> Result<ScalarField> {
    let h = grid.spacing();
    let l = grid.half_width();
    Ok(match generator {
        Generator::Gaussian => ScalarField::from_fn(grid, |_| StandardNormal.sample(rng)),
        Generator::BallIndicator => {
            let c = random_center(&grid, rng);
            let r = rng.random_range(h..=h + 0.5 * l);
            let ball = Ball::new(grid, c, r)?;
            let mut f = ScalarField::zeros(grid);
            for &i in ball.members() {
                f.values_mut()[i] = 1.0;
            }
            f
        }
        Generator::ShellIndicator => {
            let c = random_center(&grid, rng);
            let inner = rng.random_range(0.5 * h..=0.5 * (h + l));
            let outer = inner + rng.random_range(h..=h + 0.5 * l);
            ScalarField::from_fn(grid, |x| {
                let r = distance(x, &c);
                if (inner..outer).contains(&r) {
                    1.0
                } else {
                    0.0
                }
            })
        }
        Generator::KernelColumn => {
            let y = rng.random_range(0..grid.len());
            match op {
                Some(op) => {
                    let j = rng.random_range(0..grid.dim());
                    let values = (0..grid.len()).map(|x| op.riesz_entry(j, x, y)).collect();
                    ScalarField::new(grid, values)?
                }
                None => {
                    let c = grid.point(y);
                    ScalarField::from_fn(grid, |x| (-distance(x, &c).powi(2) / (h * h)).exp())
                }
            }
        }
        Generator::Oscillatory => {
            let c = random_center(&grid, rng);
            let k: Vec<f64> = (0..grid.dim())
                .map(|_| rng.random_range(-3.0..=3.0))
                .collect();
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let s = rng.random_range(0.25 * l..=l);
            ScalarField::from_fn(grid, |x| {
                let kx: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
                (kx + phase).cos() * (-distance(x, &c).powi(2) / (2.0 * s * s)).exp()
            })
        }
    })
}

impl TestFunctionSuite {
    /// `count` functions; kernel columns need `op`, otherwise a narrow bump stands in.
    pub fn generate(
        grid: Grid,
        count: usize,
        seed: u64,
        op: Option<&SpectralOperator>,
    ) -> Result<Self> {
        if let Some(op) = op {
            if op.grid() != &grid {
                return Err(Error::GridMismatch);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut functions = Vec::with_capacity(count);
        for k in 0..count {
            let generator = GENERATORS[k % GENERATORS.len()];
            let mut tries = 0;
            let field = loop {
                let f = draw(generator, grid, &mut rng, op)?;
                let m = f.max_abs();
                if m > 0.0 && m.is_finite() {
                    break f;
                }
                tries += 1;
                if tries > 100 {
                    return Err(Error::InvalidArgument(format!(
                        "{generator:?} keeps producing zero functions"
                    )));
                }
            };
            functions.push(TestFunction { generator, field });
        }
        Ok(TestFunctionSuite { seed, functions })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn functions(&self) -> &[TestFunction] {
        &self.functions
    }

    pub fn fields(&self) -> Vec<ScalarField> {
        self.functions.iter().map(|t| t.field.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Every member multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        TestFunctionSuite {
            seed: self.seed,
            functions: self
                .functions
                .iter()
                .map(|t| TestFunction {
                    generator: t.generator,
                    field: t.field.scale(c),
                })
                .collect(),
        }
    }
}

/// `|Tf|` for every member of the suite.
pub fn transform_outputs(
    op: &SpectralOperator,
    suite: &TestFunctionSuite,
    transform: Transform,
) -> Result<Vec<ScalarField>> {
    suite
        .functions()
        .par_iter()
        .map(|t| Ok(op.apply(transform, &t.field)?.magnitude()))
        .collect()
}

/// `|[b, T]_m f|` for every member of the suite.
pub fn commutator_outputs(
    op: &SpectralOperator,
    b: &Symbol,
    suite: &TestFunctionSuite,
    m: u32,
    transform: Transform,
) -> Result<Vec<ScalarField>> {
    suite
        .functions()
        .iter()
        .map(|t| Ok(commutator_apply(op, b, &t.field, m, transform)?.magnitude()))
        .collect()
}

/// Largest `‖Tf‖/‖f‖` in `L^p(w)`; at `p = 1` the output is measured in weak `L¹(w)`.
pub fn lebesgue_boundedness_suite(
    op: &SpectralOperator,
    w: &Weight,
    p: f64,
    suite: &TestFunctionSuite,
    transform: Transform,
) -> Result<BoundednessReport> {
    let outputs = transform_outputs(op, suite, transform)?;
    lebesgue_from_outputs(transform.name(), &suite.fields(), &outputs, w, p)
}

pub fn lebesgue_from_outputs(
    operator: &str,
    inputs: &[ScalarField],
    outputs: &[ScalarField],
    w: &Weight,
    p: f64,
) -> Result<BoundednessReport> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p must be at least 1, got {p}"
        )));
    }
    let mut ratios = Vec::with_capacity(inputs.len());
    let mut skipped = 0usize;
    for (f, tf) in inputs.iter().zip(outputs) {
        let denominator = weighted_lp_norm(f, w, p)?;
        if denominator == 0.0 {
            skipped += 1;
            ratios.push(0.0);
            continue;
        }
        let numerator = if p == 1.0 {
            weak_l1_quasinorm(tf, w)?
        } else {
            weighted_lp_norm(tf, w, p)?
        };
        ratios.push(numerator / denominator);
    }
    let (worst, measured) =
        ratios.iter().enumerate().fold(
            (0usize, 0.0f64),
            |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc },
        );
    let finite = ratios.iter().all(|r| r.is_finite());
    let ladders = Ladders::default();
    let constant = if finite {
        smallest_at_least(&ladders.constants, measured)
    } else {
        None
    };
    let mut notes = Vec::new();
    if skipped > 0 {
        notes.push(format!("{skipped} zero-norm inputs skipped"));
    }
    Ok(BoundednessReport {
        theorem: if p == 1.0 {
            "lebesgue_weak".into()
        } else {
            "lebesgue".into()
        },
        operator: operator.into(),
        pass: constant.is_some(),
        parameters: BTreeMap::from([("p".to_string(), p)]),
        ratios,
        fitted_exponent: Some(0.0),
        fitted_constant: constant,
        measured_constant: measured,
        witness: Some(Witness::default().with_function(worst).with_value(measured)),
        notes,
    })
}

#[derive(Debug, Clone, Copy)]
struct Meta {
    function: usize,
    ball: usize,
    lambda: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    theorem: &str,
    operator: &str,
    parameters: BTreeMap<String, f64>,
    samples: &[Sample],
    metas: &[Meta],
    functions: usize,
    family: &BallFamily,
    ladders: &Ladders,
    mut notes: Vec<String>,
) -> BoundednessReport {
    let finite = samples.iter().all(|s| s.value.is_finite());
    let fit = fit_exponent(samples, ladders);
    let (pass, exponent, constant, chosen) = match fit {
        Ok(f) if finite => (true, Some(f.exponent), Some(f.constant), f),
        Ok(f) => (false, None, None, f),
        Err(f) => (false, None, None, f),
    };
    if !finite {
        notes.push("non-finite ratio encountered".into());
    }
    let at = if chosen.exponent.is_finite() {
        chosen.exponent
    } else {
        0.0
    };
    let mut ratios = vec![0.0f64; functions];
    for (s, m) in samples.iter().zip(metas) {
        let r = s.value / s.base.powf(at);
        if r > ratios[m.function] || r.is_nan() {
            ratios[m.function] = r;
        }
    }
    let (wi, measured) = worst_ratio(samples, at);
    let witness = metas.get(wi).filter(|_| !samples.is_empty()).map(|m| {
        let mut w = Witness::ball(family.balls()[m.ball].record())
            .with_function(m.function)
            .with_value(samples[wi].value);
        if let Some(l) = m.lambda {
            w = w.with_lambda(l);
        }
        w
    });
    if samples.is_empty() {
        notes.push("all left-hand sides vanish".into());
    }
    BoundednessReport {
        theorem: theorem.into(),
        operator: operator.into(),
        pass,
        parameters,
        ratios,
        fitted_exponent: exponent,
        fitted_constant: constant,
        measured_constant: measured,
        witness,
        notes,
    }
}

/// Input norm with the θ-factor; output entries without it, fitted against
/// `C (1 + r/ρ)^ϑ`. Strong params read `L^{p,κ} → L^{p,κ}`, weak params read
/// `L^{1,κ} → WL^{1,κ}`.
#[allow(clippy::too_many_arguments)]
pub fn morrey_from_outputs(
    theorem: &str,
    operator: &str,
    inputs: &[ScalarField],
    outputs: &[ScalarField],
    w: &Weight,
    params: &MorreyParams,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    ladders: &Ladders,
) -> Result<BoundednessReport> {
    params.validate()?;
    if params.flavor == Flavor::LlogL {
        return Err(Error::InvalidArgument(
            "use the endpoint suite for L log L".into(),
        ));
    }
    let input_params = MorreyParams {
        flavor: Flavor::Strong,
        ..*params
    };
    let per_function: Vec<Vec<(Sample, Meta)>> = inputs
        .par_iter()
        .zip(outputs)
        .enumerate()
        .map(|(k, (f, tf))| {
            let norm = morrey_norm(f, w, &input_params, rho, family)?.value;
            if norm == 0.0 {
                return Ok(Vec::new());
            }
            let locals = local_quantities(tf, w, params, family)?;
            Ok(locals
                .into_iter()
                .filter(|&(_, q)| q != 0.0)
                .map(|(i, q)| {
                    (
                        Sample {
                            value: q / norm,
                            base: rho.base(&family.balls()[i]),
                        },
                        Meta {
                            function: k,
                            ball: i,
                            lambda: None,
                        },
                    )
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let (samples, metas): (Vec<Sample>, Vec<Meta>) = per_function.into_iter().flatten().unzip();
    let parameters = BTreeMap::from([
        ("p".to_string(), params.p),
        ("kappa".to_string(), params.kappa),
        ("theta".to_string(), params.theta),
    ]);
    Ok(assemble(
        theorem,
        operator,
        parameters,
        &samples,
        &metas,
        inputs.len(),
        family,
        ladders,
        Vec::new(),
    ))
}

fn kernel_column_note(report: &mut BoundednessReport, suite: &TestFunctionSuite) {
    if let Some(f) = report.witness.as_ref().and_then(|w| w.function) {
        let attained = suite.functions()[f].generator == Generator::KernelColumn;
        report.notes.push(format!(
            "worst case is a {:?} probe; kernel column attains max: {attained}",
            suite.functions()[f].generator
        ));
    }
}

#[allow(clippy::too_many_arguments)]
pub fn morrey_boundedness_suite(
    op: &SpectralOperator,
    w: &Weight,
    params: &MorreyParams,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    suite: &TestFunctionSuite,
    transform: Transform,
    ladders: &Ladders,
) -> Result<BoundednessReport> {
    if params.flavor != Flavor::Strong {
        return Err(Error::InvalidArgument(
            "Morrey suite needs strong parameters".into(),
        ));
    }
    let outputs = transform_outputs(op, suite, transform)?;
    let mut r = morrey_from_outputs(
        "morrey",
        transform.name(),
        &suite.fields(),
        &outputs,
        w,
        params,
        rho,
        family,
        ladders,
    )?;
    kernel_column_note(&mut r, suite);
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
pub fn weak_morrey_boundedness_suite(
    op: &SpectralOperator,
    w: &Weight,
    kappa: f64,
    theta: f64,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    suite: &TestFunctionSuite,
    transform: Transform,
    ladders: &Ladders,
) -> Result<BoundednessReport> {
    let params = MorreyParams::weak(kappa, theta)?;
    let outputs = transform_outputs(op, suite, transform)?;
    let mut r = morrey_from_outputs(
        "weak_morrey",
        transform.name(),
        &suite.fields(),
        &outputs,
        w,
        &params,
        rho,
        family,
        ladders,
    )?;
    kernel_column_note(&mut r, suite);
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
pub fn commutator_boundedness_suite(
    op: &SpectralOperator,
    b: &Symbol,
    w: &Weight,
    params: &MorreyParams,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    suite: &TestFunctionSuite,
    m: u32,
    transform: Transform,
    ladders: &Ladders,
) -> Result<BoundednessReport> {
    if params.flavor != Flavor::Strong {
        return Err(Error::InvalidArgument(
            "commutator suite needs strong parameters".into(),
        ));
    }
    let outputs = commutator_outputs(op, b, suite, m, transform)?;
    let mut r = morrey_from_outputs(
        "commutator",
        &format!("[b,{}]_{m}", transform.name()),
        &suite.fields(),
        &outputs,
        w,
        params,
        rho,
        family,
        ladders,
    )?;
    r.parameters.insert("m".into(), m as f64);
    Ok(r)
}

/// Levels probed by the endpoint suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaGrid<'a> {
    /// The same explicit levels for every test function.
    Fixed(&'a [f64]),
    /// [`default_lambda_grid`] with this many points, per output.
    AroundMedian(usize),
}

impl Default for LambdaGrid<'_> {
    fn default() -> Self {
        LambdaGrid::AroundMedian(DEFAULT_LAMBDA_POINTS)
    }
}

/// `points` geometric levels spanning `[0.01, 100]·median(|output|)`.
pub fn default_lambda_grid(output: &ScalarField, points: usize) -> Vec<f64> {
    let mut v: Vec<f64> = output.values().iter().map(|x| x.abs()).collect();
    v.sort_by(f64::total_cmp);
    let mut median = if v.is_empty() { 0.0 } else { v[v.len() / 2] };
    if median == 0.0 {
        median = v.last().copied().unwrap_or(0.0);
    }
    if median == 0.0 {
        return Vec::new();
    }
    let (lo, hi) = (0.01 * median, 100.0 * median);
    if points == 1 {
        return vec![median];
    }
    (0..points)
        .map(|k| lo * (hi / lo).powf(k as f64 / (points - 1) as f64))
        .collect()
}

/// Fits `w(B)^{-κ} w({x ∈ B : |out| > λ}) ≤ C(1 + r/ρ)^ϑ ‖Φ_m(|f|/λ)‖` with the
/// right side in `(L log L)^{1,κ}_{ρ,θ}(w)`.
#[allow(clippy::too_many_arguments)]
pub fn endpoint_from_outputs(
    operator: &str,
    inputs: &[ScalarField],
    outputs: &[ScalarField],
    w: &Weight,
    kappa: f64,
    theta: f64,
    m: u32,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    lambda_grid: LambdaGrid<'_>,
    ladders: &Ladders,
) -> Result<BoundednessReport> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "commutator order must be at least 1".into(),
        ));
    }
    if let LambdaGrid::Fixed(grid) = lambda_grid {
        if grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument("λ grid must be positive".into()));
        }
    }
    let params = MorreyParams::llogl(kappa, theta)?;
    let phi = YoungFunction::LlogLPower { m };
    let cv = w.grid().cell_volume();
    let wv = w.values();
    let weight_of = |ball: &Ball| ball.members().iter().map(|&i| wv[i]).sum::<f64>() * cv;
    let ball_weights: Vec<f64> = family.iter().map(weight_of).collect();

    let per_function: Vec<(Vec<(Sample, Meta)>, usize)> = inputs
        .par_iter()
        .zip(outputs)
        .enumerate()
        .map(|(k, (f, tf))| {
            let lambdas = match lambda_grid {
                LambdaGrid::Fixed(g) => g.to_vec(),
                LambdaGrid::AroundMedian(points) => default_lambda_grid(tf, points),
            };
            let mut out = Vec::new();
            let mut unbracketed = 0usize;
            for lambda in lambdas {
                let lhs: Vec<(usize, f64)> = family
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| !b.is_empty())
                    .filter_map(|(i, ball)| {
                        let level: f64 = ball
                            .members()
                            .iter()
                            .filter(|&&x| tf.values()[x].abs() > lambda)
                            .map(|&x| wv[x])
                            .sum::<f64>()
                            * cv;
                        (level > 0.0).then(|| (i, level / ball_weights[i].powf(kappa)))
                    })
                    .collect();
                if lhs.is_empty() {
                    continue;
                }
                let g = f.map(|v| phi.eval(v.abs() / lambda));
                let rhs = match lloglog_morrey_norm(&g, w, &params, rho, family) {
                    Ok(r) => r.value,
                    Err(Error::BracketNotFound(_)) => {
                        unbracketed += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                for (i, l) in lhs {
                    out.push((
                        Sample {
                            value: if rhs > 0.0 { l / rhs } else { f64::INFINITY },
                            base: rho.base(&family.balls()[i]),
                        },
                        Meta {
                            function: k,
                            ball: i,
                            lambda: Some(lambda),
                        },
                    ));
                }
            }
            Ok((out, unbracketed))
        })
        .collect::<Result<_>>()?;
    let unbracketed: usize = per_function.iter().map(|(_, u)| u).sum();
    let (samples, metas): (Vec<Sample>, Vec<Meta>) =
        per_function.into_iter().flat_map(|(o, _)| o).unzip();
    let mut notes = Vec::new();
    if unbracketed > 0 {
        notes.push(format!(
            "{unbracketed} (f, λ) levels skipped: Φ_m(|f|/λ) exceeds the Luxemburg bracket, so lhs/rhs is negligible there"
        ));
    }
    let parameters = BTreeMap::from([
        ("kappa".to_string(), kappa),
        ("theta".to_string(), theta),
        ("m".to_string(), m as f64),
    ]);
    Ok(assemble(
        "endpoint_lloglog",
        operator,
        parameters,
        &samples,
        &metas,
        inputs.len(),
        family,
        ladders,
        notes,
    ))
}

#[allow(clippy::too_many_arguments)]
pub fn endpoint_lloglog_suite(
    op: &SpectralOperator,
    b: &Symbol,
    w: &Weight,
    kappa: f64,
    theta: f64,
    rho: &CriticalRadiusField,
    family: &BallFamily,
    lambda_grid: LambdaGrid<'_>,
    suite: &TestFunctionSuite,
    m: u32,
    transform: Transform,
    ladders: &Ladders,
) -> Result<BoundednessReport> {
    let outputs = commutator_outputs(op, b, suite, m, transform)?;
    endpoint_from_outputs(
        &format!("[b,{}]_{m}", transform.name()),
        &suite.fields(),
        &outputs,
        w,
        kappa,
        theta,
        m,
        rho,
        family,
        lambda_grid,
        ladders,
    )
}

/// Parameters shared by the structural lemma checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSettings {
    pub p: f64,
    pub theta: f64,
    pub n0: u32,
    pub k_max: u32,
    pub seed: u64,
    pub ladders: Ladders,
}

impl Default for LemmaSettings {
    fn default() -> Self {
        LemmaSettings {
            p: 2.0,
            theta: 1.0,
            n0: 1,
            k_max: 3,
            seed: 0,
            ladders: Ladders::default(),
        }
    }
}

/// Comparability of ρ, the weight lemmas and the oscillation lemmas on one
/// `(V, w, b)` instance, in a fixed order.
pub fn lemma_suite(
    rho: &CriticalRadiusField,
    w: &Weight,
    b: &Symbol,
    family: &BallFamily,
    settings: &LemmaSettings,
) -> Result<Vec<CheckReport>> {
    let policy = family.policy();
    let stride = policy.center_stride.max(1);
    let subsets = SubsetPolicy {
        seed: settings.seed,
        ..SubsetPolicy::default()
    };
    Ok(vec![
        check_rho_comparability(rho, stride, &policy.radii, settings.k_max)?,
        reverse_holder_weight_fit(w, rho, family)?,
        measure_comparison_check(w, rho, family, &subsets)?,
        doubling_check(w, settings.p, settings.theta, rho, family)?,
        john_nirenberg_tail(b, settings.theta, settings.n0, rho, family, Some(w))?,
        oscillation_weighted_lp_check(b, w, settings.p, rho, family, &settings.ladders)?,
        exp_integrability_check(b, w, settings.theta, settings.n0, rho, family)?,
        dyadic_mean_drift_check(
            b,
            settings.theta,
            rho,
            family,
            settings.k_max,
            &settings.ladders,
        )?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_ball_family, FamilyPolicy};
    use crate::oscillation::SymbolKind;
    use crate::potentials::{rho_field, Potential, DEFAULT_RHO_TOL};
    use crate::riesz::build_operator;
    use std::sync::OnceLock;

    struct Fixture {
        op: SpectralOperator,
        rho: CriticalRadiusField,
        family: BallFamily,
    }

    fn fixture() -> &'static Fixture {
        static F: OnceLock<Fixture> = OnceLock::new();
        F.get_or_init(|| {
            let g = Grid::new(3, 2.0, 7).unwrap();
            let v = Potential::constant(g, 1.0).unwrap();
            let op = build_operator(&v).unwrap();
            let rho = rho_field(&v, DEFAULT_RHO_TOL).unwrap();
            let family = generate_ball_family(
                &g,
                &FamilyPolicy::geometric(2, 0.75, 2)
                    .with_boundary(true)
                    .with_box_ball(true),
            )
            .unwrap();
            Fixture { op, rho, family }
        })
    }

    #[test]
    fn suite_is_deterministic_and_nonzero() {
        let fx = fixture();
        let a = TestFunctionSuite::generate(*fx.op.grid(), 12, 5, Some(&fx.op)).unwrap();
        let b = TestFunctionSuite::generate(*fx.op.grid(), 12, 5, Some(&fx.op)).unwrap();
        for (x, y) in a.functions().iter().zip(b.functions()) {
            assert_eq!(x.field, y.field);
            assert!(x.field.max_abs() > 0.0);
        }
        let kinds: Vec<Generator> = a.functions().iter().map(|t| t.generator).collect();
        assert_eq!(&kinds[..5], &GENERATORS);
    }

    #[test]
    fn lebesgue_unweighted_ratio_at_most_one() {
        let fx = fixture();
        let g = *fx.op.grid();
        let suite = TestFunctionSuite::generate(g, 10, 1, Some(&fx.op)).unwrap();
        let w = Weight::constant(g, 1.0).unwrap();
        let r = lebesgue_boundedness_suite(&fx.op, &w, 2.0, &suite, Transform::Riesz).unwrap();
        assert!(r.pass);
        assert!(r.ratios.iter().all(|&x| x <= 1.0 + 1e-10));
        assert_eq!(r.fitted_constant, Some(1.0));
        let weak = lebesgue_boundedness_suite(&fx.op, &w, 1.0, &suite, Transform::Dual).unwrap();
        assert!(weak.pass && weak.theorem == "lebesgue_weak");
    }

    #[test]
    fn specialization_reproduces_lebesgue_constant() {
        let fx = fixture();
        let g = *fx.op.grid();
        let suite = TestFunctionSuite::generate(g, 10, 2, Some(&fx.op)).unwrap();
        let w = Weight::constant(g, 1.0).unwrap();
        let leb = lebesgue_boundedness_suite(&fx.op, &w, 2.0, &suite, Transform::Riesz).unwrap();
        let params = MorreyParams::strong(2.0, 0.0, 0.0).unwrap();
        let mor = morrey_boundedness_suite(
            &fx.op,
            &w,
            &params,
            &fx.rho,
            &fx.family,
            &suite,
            Transform::Riesz,
            &Ladders::default(),
        )
        .unwrap();
        assert!(mor.pass);
        assert_eq!(mor.fitted_exponent, Some(0.0));
        assert!(
            (mor.measured_constant - leb.measured_constant).abs() <= 0.05 * leb.measured_constant
        );
    }

    #[test]
    fn scaling_the_suite_changes_nothing() {
        let fx = fixture();
        let g = *fx.op.grid();
        let suite = TestFunctionSuite::generate(g, 6, 3, Some(&fx.op)).unwrap();
        let w = Weight::power(g, 1.0).unwrap();
        let b = Symbol::new(g, SymbolKind::Log).unwrap();
        let params = MorreyParams::strong(2.0, 0.3, 1.0).unwrap();
        let l = Ladders::default();
        let a = commutator_boundedness_suite(
            &fx.op,
            &b,
            &w,
            &params,
            &fx.rho,
            &fx.family,
            &suite,
            1,
            Transform::Riesz,
            &l,
        )
        .unwrap();
        let twice = suite.scaled(2.0);
        let c = commutator_boundedness_suite(
            &fx.op,
            &b,
            &w,
            &params,
            &fx.rho,
            &fx.family,
            &twice,
            1,
            Transform::Riesz,
            &l,
        )
        .unwrap();
        assert_eq!(a.pass, c.pass);
        assert_eq!(a.fitted_exponent, c.fitted_exponent);
        assert_eq!(a.fitted_constant, c.fitted_constant);
        let e1 = endpoint_lloglog_suite(
            &fx.op,
            &b,
            &w,
            0.3,
            1.0,
            &fx.rho,
            &fx.family,
            LambdaGrid::default(),
            &suite,
            1,
            Transform::Dual,
            &l,
        )
        .unwrap();
        let e2 = endpoint_lloglog_suite(
            &fx.op,
            &b,
            &w,
            0.3,
            1.0,
            &fx.rho,
            &fx.family,
            LambdaGrid::default(),
            &twice,
            1,
            Transform::Dual,
            &l,
        )
        .unwrap();
        assert!(e1.pass);
        assert_eq!(e1.fitted_exponent, e2.fitted_exponent);
        assert_eq!(e1.fitted_constant, e2.fitted_constant);
    }

    #[test]
    fn constant_symbol_gives_vanishing_left_sides() {
        let fx = fixture();
        let g = *fx.op.grid();
        let suite = TestFunctionSuite::generate(g, 5, 4, Some(&fx.op)).unwrap();
        let w = Weight::constant(g, 1.0).unwrap();
        let b = Symbol::new(g, SymbolKind::Constant { value: 3.0 }).unwrap();
        let params = MorreyParams::strong(2.0, 0.3, 0.0).unwrap();
        let l = Ladders::default();
        let c = commutator_boundedness_suite(
            &fx.op,
            &b,
            &w,
            &params,
            &fx.rho,
            &fx.family,
            &suite,
            2,
            Transform::Riesz,
            &l,
        )
        .unwrap();
        assert!(c.pass);
        assert!(c.ratios.iter().all(|&r| r == 0.0));
        let e = endpoint_lloglog_suite(
            &fx.op,
            &b,
            &w,
            0.3,
            0.0,
            &fx.rho,
            &fx.family,
            LambdaGrid::default(),
            &suite,
            1,
            Transform::Riesz,
            &l,
        )
        .unwrap();
        assert!(e.pass && e.ratios.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn large_lambda_has_empty_level_sets() {
        let fx = fixture();
        let g = *fx.op.grid();
        let suite = TestFunctionSuite::generate(g, 3, 6, Some(&fx.op)).unwrap();
        let w = Weight::constant(g, 1.0).unwrap();
        let b = Symbol::new(g, SymbolKind::Log).unwrap();
        let e = endpoint_lloglog_suite(
            &fx.op,
            &b,
            &w,
            0.3,
            1.0,
            &fx.rho,
            &fx.family,
            LambdaGrid::Fixed(&[1e12]),
            &suite,
            1,
            Transform::Riesz,
            &Ladders::default(),
        )
        .unwrap();
        assert!(e.ratios.iter().all(|&r| r == 0.0));
        assert!(e.notes.iter().any(|n| n.contains("vanish")));
    }

    #[test]
    fn weak_suite_passes_and_rejects_bad_lambdas() {
        let fx = fixture();
        let g = *fx.op.grid();
        let suite = TestFunctionSuite::generate(g, 5, 7, Some(&fx.op)).unwrap();
        let w = Weight::power(g, 1.0).unwrap();
        let r = weak_morrey_boundedness_suite(
            &fx.op,
            &w,
            0.3,
            1.0,
            &fx.rho,
            &fx.family,
            &suite,
            Transform::Dual,
            &Ladders::default(),
        )
        .unwrap();
        assert!(r.pass);
        assert_eq!(r.ratios.len(), 5);
        let b = Symbol::new(g, SymbolKind::Log).unwrap();
        assert!(endpoint_lloglog_suite(
            &fx.op,
            &b,
            &w,
            0.3,
            1.0,
            &fx.rho,
            &fx.family,
            LambdaGrid::Fixed(&[0.0]),
            &suite,
            1,
            Transform::Riesz,
            &Ladders::default()
        )
        .is_err());
    }

    #[test]
    fn lambda_grid_spans_four_decades() {
        let g = Grid::new(1, 1.0, 5).unwrap();
        let f = ScalarField::new(g, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let grid = default_lambda_grid(&f, 10);
        assert_eq!(grid.len(), 10);
        assert!((grid[0] - 0.02).abs() < 1e-15 && (grid[9] - 200.0).abs() < 1e-10);
        assert!(default_lambda_grid(&ScalarField::zeros(g), 10).is_empty());
    }

    #[test]
    fn lemma_suite_runs_in_order() {
        let fx = fixture();
        let g = *fx.op.grid();
        let w = Weight::power(g, 1.0).unwrap();
        let b = Symbol::new(g, SymbolKind::Log).unwrap();
        let family = generate_ball_family(&g, &FamilyPolicy::geometric(2, 0.75, 2)).unwrap();
        let checks = lemma_suite(&fx.rho, &w, &b, &family, &LemmaSettings::default()).unwrap();
        assert_eq!(checks.len(), 8);
        for c in &checks {
            assert!(c.pass, "{c:?}");
        }
    }
}
