use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rholab::config::{Config, GridSection};
use rholab::grid::{generate_ball_family, Ball, BallFamily, ScalarField};
use rholab::morrey::{lloglog_morrey_norm, morrey_norm, weak_morrey_norm, Flavor, MorreyParams};
use rholab::orlicz::holder_orlicz_check;
use rholab::oscillation::bmo_characteristic;
use rholab::potentials::{
    check_rho_comparability, reverse_holder_report, rho_field, CriticalRadiusField,
};
use rholab::report::{emit_report, parse_json_lines, summary_table, CheckReport, Record, Witness};
use rholab::riesz::{
    adjoint_identity_check, build_operator_with, functional_calculus_check, kernel_decay_check,
    spectral_bound_check, SpectralOperator,
};
use rholab::verify::{
    commutator_outputs, endpoint_from_outputs, lebesgue_from_outputs, lemma_suite,
    morrey_from_outputs, transform_outputs, LambdaGrid, LemmaSettings, TestFunctionSuite,
};
use rholab::weights::{ap_characteristic, doubling_check, reverse_holder_weight_fit};
use rholab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "rholab",
    about = "Critical-radius weighted Morrey estimates on a lattice"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON-lines report path; the summary goes to `<path>.summary.txt`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Grid as `d,n,L`.
    #[arg(long, global = true)]
    grid: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical radius field and its comparability.
    Rho {
        /// Write ρ as a text field.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Muckenhoupt characteristic and weight lemmas.
    Weights,
    /// BMO characteristic of the symbol.
    Bmo,
    /// Generalized Hölder inequality for the symbol and weight.
    Orlicz,
    /// Spectral checks of the Riesz transforms.
    Riesz,
    /// Morrey norm of a field (the symbol by default).
    Morrey {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "strong")]
        flavor: FlavorArg,
        /// Per-ball breakdown.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a verification suite.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
    },
    /// Print the summary of an existing report.
    Report { input: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    Strong,
    Weak,
    Llogl,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    Lebesgue,
    Morrey,
    WeakMorrey,
    Commutator,
    Endpoint,
    Lemmas,
    All,
}

struct Instance {
    config: Config,
    rho: CriticalRadiusField,
    family: BallFamily,
}

impl Instance {
    fn new(config: Config) -> Result<Self> {
        let potential = config.potential()?;
        let rho = rho_field(&potential, config.rho.tolerance)?;
        let family = generate_ball_family(&config.grid()?, &config.family)?;
        Ok(Instance {
            config,
            rho,
            family,
        })
    }

    fn operator(&self) -> Result<SpectralOperator> {
        build_operator_with(&self.config.potential()?, &self.config.operator.options())
    }

    /// Interior balls only, for the structural lemmas.
    fn lemma_family(&self) -> Result<BallFamily> {
        let policy = self
            .config
            .family
            .clone()
            .with_boundary(false)
            .with_box_ball(false);
        generate_ball_family(&self.config.grid()?, &policy)
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(grid) = &cli.grid {
        config.grid = GridSection::parse(grid)?;
    }
    Ok(config)
}

fn finish(records: Vec<Record>, out: Option<&Path>) -> Result<bool> {
    let pass = records.iter().all(Record::pass);
    match out {
        Some(path) => {
            let summary = emit_report(&records, path)?;
            print!("{summary}");
        }
        None => print!("{}", summary_table(&records)),
    }
    Ok(pass)
}

fn theorem_records(inst: &Instance, suite: SuiteArg) -> Result<Vec<Record>> {
    let c = &inst.config;
    let grid = c.grid()?;
    let op = inst.operator()?;
    let rho = Some(&inst.rho);
    let w = c.weight(rho)?;
    let b = c.symbol()?;
    let tests = TestFunctionSuite::generate(grid, c.suite.count, c.seed, Some(&op))?;
    let inputs = tests.fields();
    let strong = MorreyParams::strong(c.params.p, c.params.kappa, c.params.theta)?;
    let weak = MorreyParams::weak(c.params.kappa, c.params.theta)?;
    let lambdas = if c.suite.lambdas.is_empty() {
        LambdaGrid::AroundMedian(c.suite.lambda_points)
    } else {
        LambdaGrid::Fixed(&c.suite.lambdas)
    };
    let wants = |s: SuiteArg| suite == s || suite == SuiteArg::All;
    let mut records = Vec::new();
    for &t in &c.params.transforms {
        let outputs = transform_outputs(&op, &tests, t)?;
        if wants(SuiteArg::Lebesgue) {
            records
                .push(lebesgue_from_outputs(t.name(), &inputs, &outputs, &w, c.params.p)?.into());
            records.push(lebesgue_from_outputs(t.name(), &inputs, &outputs, &w, 1.0)?.into());
        }
        if wants(SuiteArg::Morrey) {
            records.push(
                morrey_from_outputs(
                    "morrey",
                    t.name(),
                    &inputs,
                    &outputs,
                    &w,
                    &strong,
                    &inst.rho,
                    &inst.family,
                    &c.ladders,
                )?
                .into(),
            );
        }
        if wants(SuiteArg::WeakMorrey) {
            records.push(
                morrey_from_outputs(
                    "weak_morrey",
                    t.name(),
                    &inputs,
                    &outputs,
                    &w,
                    &weak,
                    &inst.rho,
                    &inst.family,
                    &c.ladders,
                )?
                .into(),
            );
        }
        if !(wants(SuiteArg::Commutator) || wants(SuiteArg::Endpoint)) {
            continue;
        }
        for &m in &c.params.orders {
            let name = format!("[b,{}]_{m}", t.name());
            let outputs = commutator_outputs(&op, &b, &tests, m, t)?;
            if wants(SuiteArg::Commutator) {
                let mut r = morrey_from_outputs(
                    "commutator",
                    &name,
                    &inputs,
                    &outputs,
                    &w,
                    &strong,
                    &inst.rho,
                    &inst.family,
                    &c.ladders,
                )?;
                r.parameters.insert("m".into(), m as f64);
                records.push(r.into());
            }
            if wants(SuiteArg::Endpoint) {
                records.push(
                    endpoint_from_outputs(
                        &name,
                        &inputs,
                        &outputs,
                        &w,
                        c.params.kappa,
                        c.params.theta,
                        m,
                        &inst.rho,
                        &inst.family,
                        lambdas,
                        &c.ladders,
                    )?
                    .into(),
                );
            }
        }
    }
    Ok(records)
}

fn run(cli: &Cli) -> Result<bool> {
    if let Command::Report { input } = &cli.command {
        let text = std::fs::read_to_string(input).map_err(|e| Error::Io {
            path: input.clone(),
            source: e,
        })?;
        let records = parse_json_lines(&text)?;
        print!("{}", summary_table(&records));
        return Ok(records.iter().all(Record::pass));
    }
    let config = load_config(cli)?;
    let inst = Instance::new(config)?;
    let c = &inst.config;
    let out = cli.out.as_deref();
    let records: Vec<Record> = match &cli.command {
        Command::Rho { field } => {
            if let Some(path) = field {
                inst.rho.field().write_text(path)?;
            }
            let potential = c.potential()?;
            let (lo, hi) = inst
                .rho
                .values()
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            let summary = CheckReport::new("rho_field")
                .with_pass(true)
                .measure("min", lo)
                .measure("max", hi);
            let family = inst.lemma_family()?;
            vec![
                summary.into(),
                check_rho_comparability(
                    &inst.rho,
                    c.family.center_stride.max(1),
                    &c.family.radii,
                    3,
                )?
                .into(),
                reverse_holder_report(&potential, 1.5, &family)?
                    .to_check()
                    .into(),
            ]
        }
        Command::Weights => {
            let w = c.weight(Some(&inst.rho))?;
            let family = inst.lemma_family()?;
            let ap = ap_characteristic(&w, c.params.p, c.params.theta, &inst.rho, &family)?;
            let mut check = CheckReport::new("ap_characteristic")
                .with_pass(ap.value.is_finite())
                .constant("p", ap.p)
                .constant("theta", ap.theta)
                .measure("value", ap.value)
                .measure("skipped", ap.skipped.len() as f64);
            if let Some(ball) = ap.argmax {
                check = check.with_witness(Witness::ball(ball).with_value(ap.value));
            }
            vec![
                check.into(),
                reverse_holder_weight_fit(&w, &inst.rho, &family)?.into(),
                doubling_check(&w, c.params.p, c.params.theta, &inst.rho, &family)?.into(),
            ]
        }
        Command::Bmo => {
            let b = c.symbol()?;
            let bmo = bmo_characteristic(&b, c.params.theta, &inst.rho, &inst.lemma_family()?)?;
            let mut check = CheckReport::new("bmo_characteristic")
                .with_pass(bmo.value.is_finite())
                .constant("theta", bmo.theta)
                .measure("value", bmo.value);
            if let Some(ball) = bmo.argmax {
                check = check.with_witness(Witness::ball(ball).with_value(bmo.value));
            }
            vec![check.into()]
        }
        Command::Orlicz => {
            let grid = c.grid()?;
            let w = c.weight(Some(&inst.rho))?;
            let b = c.symbol()?;
            let ball = Ball::new(grid, vec![0.0; grid.dim()], grid.half_width())?;
            vec![
                holder_orlicz_check(b.field(), w.field(), &ball, None)?.into(),
                holder_orlicz_check(b.field(), w.field(), &ball, Some(&w))?.into(),
            ]
        }
        Command::Riesz => {
            let op = inst.operator()?;
            vec![
                spectral_bound_check(&op, 100, c.seed)?.into(),
                adjoint_identity_check(&op, 20, c.seed)?.into(),
                functional_calculus_check(&op, 20, c.seed)?.into(),
                kernel_decay_check(&op, &inst.rho, &[0, 1, 2, 3])?.into(),
            ]
        }
        Command::Morrey { input, flavor, csv } => {
            let w = c.weight(Some(&inst.rho))?;
            let f = match input {
                Some(path) => ScalarField::read_text(path)?,
                None => c.symbol()?.field().clone(),
            };
            let (params, result) = match flavor {
                FlavorArg::Strong => {
                    let p = MorreyParams::strong(c.params.p, c.params.kappa, c.params.theta)?;
                    (p, morrey_norm(&f, &w, &p, &inst.rho, &inst.family)?)
                }
                FlavorArg::Weak => {
                    let p = MorreyParams::weak(c.params.kappa, c.params.theta)?;
                    (p, weak_morrey_norm(&f, &w, &p, &inst.rho, &inst.family)?)
                }
                FlavorArg::Llogl => {
                    let p = MorreyParams::llogl(c.params.kappa, c.params.theta)?;
                    (p, lloglog_morrey_norm(&f, &w, &p, &inst.rho, &inst.family)?)
                }
            };
            if let Some(path) = csv {
                std::fs::write(path, result.to_csv()).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
            }
            let name = match params.flavor {
                Flavor::Strong => "morrey_norm",
                Flavor::Weak => "weak_morrey_norm",
                Flavor::LlogL => "lloglog_morrey_norm",
            };
            let mut check = CheckReport::new(name)
                .with_pass(result.value.is_finite())
                .constant("p", params.p)
                .constant("kappa", params.kappa)
                .constant("theta", params.theta)
                .measure("value", result.value)
                .measure("balls", result.entries.len() as f64);
            if let Some(ball) = result.argmax {
                check = check.with_witness(Witness::ball(ball).with_value(result.value));
            }
            vec![check.into()]
        }
        Command::Verify { suite } => {
            let mut records = Vec::new();
            if matches!(suite, SuiteArg::Lemmas | SuiteArg::All) {
                let settings = LemmaSettings {
                    p: c.params.p,
                    theta: c.params.theta,
                    seed: c.seed,
                    ladders: c.ladders.clone(),
                    ..LemmaSettings::default()
                };
                let w = c.weight(Some(&inst.rho))?;
                let b = c.symbol()?;
                for check in lemma_suite(&inst.rho, &w, &b, &inst.lemma_family()?, &settings)? {
                    records.push(check.into());
                }
            }
            if *suite != SuiteArg::Lemmas {
                records.extend(theorem_records(&inst, *suite)?);
            }
            records
        }
        Command::Report { .. } => unreachable!(),
    };
    finish(records, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
