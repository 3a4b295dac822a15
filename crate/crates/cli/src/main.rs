//! `qfi` — QFI lower bounds from randomized measurements.
//!
//! Subcommands: `bounds`, `convergence`, `pstar`, `simulate`, `estimate`,
//! `budget`, `sweep`. Exit codes: 0 ok, 2 usage, 3 numerical integrity,
//! 4 capacity.

mod output;

use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::{Format, Sink};
use qfi_core::bench::{self, ExperimentConfig, Family};
use qfi_core::budget::{self, ShadowChannel};
use qfi_core::protocol::{self, MeasurementScheme, QuenchParams, UnitarySource};
use qfi_core::states::{
    collective_spin_observable, number_difference_observable, Axis, Observable, SpaceKind,
};
use qfi_core::stream::SeededStream;
use qfi_core::{estimators, Error};

#[derive(Parser)]
#[command(
    name = "qfi",
    version,
    about = "Quantum Fisher information lower bounds from randomized measurements",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed for every random draw in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted. With a file, a `.manifest.json`
    /// carrying config, seed, and version is written alongside.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Row format for tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// JSON experiment config; explicit flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Ghz,
    Noon,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Ghz => Family::NoisyGhz,
            FamilyArg::Noon => Family::NoisyNoon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Local,
    GlobalCue,
    GlobalQuench,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ObservableArg {
    /// Collective spin ½Σσ_z (qubit registers).
    CollectiveZ,
    /// Two-mode population difference n̂₁ − n̂₂ (collective spin).
    NumberDifference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BudgetOrder {
    F0,
    F1,
    P2,
    P3,
}

#[derive(Subcommand)]
enum Command {
    /// Exact bound series F_0..F_n, F_Q, and gaps for one noisy state.
    Bounds(BoundsArgs),
    /// Convergence table over bound orders and noise strengths.
    Convergence(ConvergenceArgs),
    /// Noise thresholds p*(N, k) for bound orders and the exact QFI.
    Pstar(PstarArgs),
    /// Simulate randomized measurements and write the record CSV.
    Simulate(SimulateArgs),
    /// Estimate bounds from a measurement-record CSV.
    Estimate(EstimateArgs),
    /// Measurement budget M(ε, δ) from the analytic variance bounds.
    Budget(BudgetArgs),
    /// Monte-Carlo error-scaling sweep with exponent fits.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Ghz)]
    family: FamilyArg,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    p: Option<f64>,
    /// Orders as a comma list or inclusive range, e.g. `0,1,2` or `0..8`.
    #[arg(long, default_value = "0..8")]
    orders: String,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Ghz)]
    family: FamilyArg,
    #[arg(long)]
    n: u32,
    /// Noise strengths, e.g. `0.1,0.25,0.5`.
    #[arg(long, value_delimiter = ',')]
    p_list: Vec<f64>,
    #[arg(long, default_value = "0..8")]
    orders: String,
}

#[derive(Args)]
struct PstarArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Ghz)]
    family: FamilyArg,
    /// Particle counts, e.g. `2..10` or `4,6,8`.
    #[arg(long, default_value = "2..10")]
    n_list: String,
    /// Producibility orders k.
    #[arg(long, default_value = "1")]
    k_list: String,
    #[arg(long, default_value = "0,1,2")]
    orders: String,
    /// Bisection tolerance on p*.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Ghz)]
    family: FamilyArg,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    p: Option<f64>,
    /// Number of measurement rounds.
    #[arg(long)]
    m: usize,
    /// Unitary scheme; defaults to the family's natural one.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Quench depth (global-quench scheme).
    #[arg(long, default_value_t = 4)]
    quench_depth: u32,
    /// Quench evolution time per layer.
    #[arg(long, default_value_t = 0.5)]
    quench_time: f64,
    /// Tunneling J and interaction U for the quench Hamiltonian.
    #[arg(long, default_value_t = 1.0)]
    quench_tunneling: f64,
    #[arg(long, default_value_t = 0.5)]
    quench_interaction: f64,
    /// Uniform tilt-offset range half-width.
    #[arg(long, default_value_t = 2.0)]
    quench_offset: f64,
    /// Intended estimation order; recorded in the manifest for downstream
    /// bookkeeping only.
    #[arg(long)]
    order: Option<u32>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Measurement-record CSV produced by `simulate` (or external data in
    /// the same format).
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value = "0,1")]
    orders: String,
    /// Observable; defaults to the natural one for the record space.
    #[arg(long, value_enum)]
    observable: Option<ObservableArg>,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Ghz)]
    family: FamilyArg,
    #[arg(long)]
    n: u32,
    /// Depolarization strength of the state entering the trace terms.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, value_enum)]
    order: BudgetOrder,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long)]
    n_list: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    orders: Option<String>,
    /// Measurement grid, e.g. `6,12,25,50,100`.
    #[arg(long)]
    m_grid: Option<String>,
    #[arg(long)]
    reps: Option<u32>,
    /// Target mean relative error for M_at_target interpolation.
    #[arg(long)]
    target: Option<f64>,
}

fn parse_u32_list(text: &str) -> Result<Vec<u32>, Error> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let lo: u32 = a
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad range start {a:?}")))?;
        let hi: u32 = b
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad range end {b:?}")))?;
        if lo > hi {
            return Err(Error::Parse(format!("empty range {text:?}")));
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| Error::Parse(format!("bad integer {s:?}")))
        })
        .collect()
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>, Error> {
    Ok(parse_u32_list(text)?.into_iter().map(|x| x as usize).collect())
}

/// Effective config: file (when given) under defaults, then flag overrides.
fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, Error> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = output::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("bad config file {}: {e}", p.display())))
        }
    }
}

fn natural_observable(scheme: &MeasurementScheme) -> Result<Observable, Error> {
    match scheme.space().kind() {
        SpaceKind::QubitRegister => collective_spin_observable(scheme.space().n_particles(), Axis::Z),
        SpaceKind::CollectiveSpin => number_difference_observable(scheme.space().n_particles()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let sink = Sink::new(cli.out.clone());
    let mut config = load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let format = cli.format;

    match &cli.command {
        Command::Bounds(args) => {
            config.family = args.family.into();
            config.n_list = vec![args.n];
            if let Some(p) = args.p {
                config.p = p;
            }
            config.p_list = Some(vec![config.p]);
            config.orders = parse_u32_list(&args.orders)?;
            let rows = bench::run_convergence(&config)?;
            let mut w = sink.writer()?;
            output::write_convergence(&mut w, &rows, format)?;
            drop(w);
            manifest(&sink, "bounds", &config, format, None)
        }
        Command::Convergence(args) => {
            config.family = args.family.into();
            config.n_list = vec![args.n];
            if !args.p_list.is_empty() {
                config.p_list = Some(args.p_list.clone());
            } else if config.p_list.is_none() {
                config.p_list = Some(vec![config.p]);
            }
            config.orders = parse_u32_list(&args.orders)?;
            let rows = bench::run_convergence(&config)?;
            let mut w = sink.writer()?;
            output::write_convergence(&mut w, &rows, format)?;
            drop(w);
            manifest(&sink, "convergence", &config, format, None)
        }
        Command::Pstar(args) => {
            config.family = args.family.into();
            config.n_list = parse_u32_list(&args.n_list)?;
            config.k_list = Some(parse_u32_list(&args.k_list)?);
            config.orders = parse_u32_list(&args.orders)?;
            config.pstar_tol = args.tol;
            let rows = bench::run_pstar_curves(&config)?;
            let mut w = sink.writer()?;
            output::write_pstar(&mut w, &rows, format)?;
            drop(w);
            manifest(&sink, "pstar", &config, format, None)
        }
        Command::Simulate(args) => {
            config.family = args.family.into();
            config.n_list = vec![args.n];
            if let Some(p) = args.p {
                config.p = p;
            }
            let inst = bench::instantiate(config.family, args.n, config.p)?;
            let scheme = match args.scheme {
                None => inst.scheme,
                Some(SchemeArg::Local) => MeasurementScheme::local_qubit(inst.rho.space())?,
                Some(SchemeArg::GlobalCue) => {
                    MeasurementScheme::global_collective(inst.rho.space(), UnitarySource::Cue)?
                }
                Some(SchemeArg::GlobalQuench) => MeasurementScheme::global_collective(
                    inst.rho.space(),
                    UnitarySource::Quench(QuenchParams {
                        depth: args.quench_depth,
                        time_step: args.quench_time,
                        tunneling: args.quench_tunneling,
                        interaction: args.quench_interaction,
                        offset_range: (-args.quench_offset, args.quench_offset),
                    }),
                )?,
            };
            let stream = SeededStream::new(config.seed);
            let records: Vec<protocol::MeasurementRecord> = (0..args.m as u64)
                .map(|r| protocol::simulate_round(&inst.rho, &scheme, &stream, r))
                .collect::<Result<_, _>>()?;
            let mut w = sink.writer()?;
            protocol::write_records(&mut w, &scheme, &records)?;
            drop(w);
            #[derive(Serialize)]
            struct SimSummary {
                scheme: String,
                rounds: usize,
                intended_order: Option<u32>,
            }
            manifest(
                &sink,
                "simulate",
                &config,
                format,
                Some(serde_json::to_value(SimSummary {
                    scheme: scheme.to_string(),
                    rounds: args.m,
                    intended_order: args.order,
                })
                .map_err(|e| Error::Parse(e.to_string()))?),
            )
        }
        Command::Estimate(args) => {
            let file = std::fs::File::open(&args.records)?;
            let (scheme, records) = protocol::read_records(BufReader::new(file))?;
            let shadows: Vec<protocol::ShadowSnapshot> = records
                .iter()
                .map(|r| protocol::build_shadow(r, &scheme))
                .collect::<Result<_, _>>()?;
            let observable = match args.observable {
                None => natural_observable(&scheme)?,
                Some(ObservableArg::CollectiveZ) => {
                    collective_spin_observable(scheme.space().n_particles(), Axis::Z)?
                }
                Some(ObservableArg::NumberDifference) => {
                    number_difference_observable(scheme.space().n_particles())?
                }
            };
            let seed_repr = records
                .first()
                .map(|r| r.unitary_stream.master_seed().to_string())
                .unwrap_or_default();
            let mut out_rows = Vec::new();
            for order in parse_u32_list(&args.orders)? {
                let est = estimators::estimate_fn(&shadows, &observable, order)?;
                out_rows.push(output::EstimateRecord {
                    n: est.order,
                    m: est.rounds,
                    value: est.value,
                    method: est.method.to_string(),
                    seed: seed_repr.clone(),
                });
            }
            let mut w = sink.writer()?;
            output::write_estimates(&mut w, &out_rows, format)?;
            drop(w);
            manifest(&sink, "estimate", &config, format, None)
        }
        Command::Budget(args) => {
            config.family = args.family.into();
            config.n_list = vec![args.n];
            // budgets refer to the pure state unless noise is requested
            config.p = args.p.unwrap_or(0.0);
            let family: Family = args.family.into();
            let channel = match family {
                Family::NoisyGhz => ShadowChannel::LocalQubit,
                Family::NoisyNoon => ShadowChannel::GlobalCollective,
            };
            let inst = bench::instantiate(family, args.n, config.p)?;
            let d = inst.rho.dim();
            let pure_ghz = family == Family::NoisyGhz && config.p == 0.0;
            let report = match args.order {
                BudgetOrder::F0 => {
                    let traces = if pure_ghz {
                        budget::ghz_trace_terms_f0(args.n)
                    } else {
                        budget::trace_terms_f0(&inst.rho, &inst.observable)?
                    };
                    budget::budget_f0(&traces, args.eps, args.delta, d, channel)?
                }
                BudgetOrder::F1 => {
                    let (t2, t3) = if pure_ghz {
                        (budget::ghz_trace_terms_f0(args.n), budget::ghz_trace_terms_f1(args.n))
                    } else {
                        (
                            budget::trace_terms_f0(&inst.rho, &inst.observable)?,
                            budget::trace_terms_f1(&inst.rho, &inst.observable)?,
                        )
                    };
                    budget::budget_f1(&t2, &t3, args.eps, args.delta, d, channel)?
                }
                BudgetOrder::P2 => {
                    budget::budget_p2(inst.rho.purity(), args.eps, args.delta, d, channel)?
                }
                BudgetOrder::P3 => {
                    let r2 = inst.rho.mat().dot(inst.rho.mat());
                    let tr_rho4 = qfi_core::linalg::trace_of_product(&r2, &r2).re;
                    budget::budget_p3(tr_rho4, inst.rho.purity(), args.eps, args.delta, d, channel)?
                }
            };
            #[derive(Serialize)]
            struct BudgetDocument<'a> {
                family: &'a Family,
                n_particles: u32,
                p: f64,
                order: String,
                m_required: f64,
                report: &'a budget::BudgetReport,
            }
            let doc = BudgetDocument {
                family: &family,
                n_particles: args.n,
                p: config.p,
                order: format!("{:?}", args.order).to_lowercase(),
                m_required: report.m_required,
                report: &report,
            };
            let mut w = sink.writer()?;
            output::write_json_document(&mut w, &doc)?;
            drop(w);
            manifest(&sink, "budget", &config, format, None)
        }
        Command::Sweep(args) => {
            if let Some(f) = args.family {
                config.family = f.into();
            }
            if let Some(list) = &args.n_list {
                config.n_list = parse_u32_list(list)?;
            }
            if let Some(p) = args.p {
                config.p = p;
            }
            if let Some(orders) = &args.orders {
                config.orders = parse_u32_list(orders)?;
            }
            if let Some(grid) = &args.m_grid {
                config.m_grid = parse_usize_list(grid)?;
            }
            if let Some(reps) = args.reps {
                config.repetitions = reps;
            }
            if let Some(target) = args.target {
                config.target_error = target;
            }
            let result = bench::run_error_scaling(&config)?;
            let mut w = sink.writer()?;
            output::write_sweep(&mut w, &result, format)?;
            drop(w);
            let summary = serde_json::to_value(output::SweepSummary {
                target_error: result.target_error,
                m_at_target: &result.m_at_target,
                fits: &result.fits,
            })
            .map_err(|e| Error::Parse(e.to_string()))?;
            if format == Format::Csv && sink.manifest_path().is_none() {
                eprintln!("{summary}");
            }
            manifest(&sink, "sweep", &config, format, Some(summary))
        }
    }
}

fn manifest(
    sink: &Sink,
    command: &str,
    config: &ExperimentConfig,
    format: Format,
    summary: Option<serde_json::Value>,
) -> Result<(), Error> {
    output::write_manifest(
        sink,
        &output::Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            format: match format {
                Format::Csv => "csv",
                Format::Json => "json",
            },
            config,
            summary,
        },
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Validation(_) | Error::InsufficientData(_) | Error::Parse(_) => 2,
                Error::NumericalIntegrity(_) => 3,
                Error::Capacity(_) => 4,
                Error::Io(_) => 2,
            };
            ExitCode::from(code)
        }
    }
}
