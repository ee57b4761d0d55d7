//! Batch frontend: generate benchmark families, construct models, run the
//! iterative reordering loop, and fan out heuristic comparisons.
//!
//! Exit codes: 0 success, 2 usage, 3 input parse/validation error,
//! 4 node limit exceeded, 5 time budget exceeded, 6 iteration failed
//! (partial results were emitted), 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use famsift::compare::{compare, CompareConfig, CompareRow};
use famsift::dd::DdError;
use famsift::familygen::{generate, GenConfig, Mechanism};
use famsift::iterate::{iterate, Heuristic, IterateError, IterateOptions, IterationStats, Selection};
use famsift::program::{parse, Program};
use famsift::reorder::{SiftConfig, VarOrder};
use famsift::symbolic::{construct, Budget, ConstructError};

const EXIT_PARSE: u8 = 3;
const EXIT_NODE_LIMIT: u8 = 4;
const EXIT_TIME_BUDGET: u8 = 5;
const EXIT_ITERATION_FAILED: u8 = 6;

#[derive(Parser)]
#[command(
    name = "famsift",
    version,
    about = "Symbolic family-model construction with iterative variable reordering"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic redundancy-family model plus metadata sidecar
    Gen(GenArgs),
    /// Construct the symbolic model once and report its statistics
    Build(BuildArgs),
    /// Grow the family iteratively, reordering after every step
    Iterate(IterateArgs),
    /// Tabulate selection heuristics against step sizes
    Compare(CompareArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    None,
    Comparison,
    Voting,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Mechanism {
        match m {
            MechanismArg::None => Mechanism::None,
            MechanismArg::Comparison => Mechanism::Comparison,
            MechanismArg::Voting => Mechanism::Voting,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    #[value(name = "pi-min")]
    PiMin,
    #[value(name = "rho-min")]
    RhoMin,
    #[value(name = "rho-max")]
    RhoMax,
}

impl From<SelectionArg> for Selection {
    fn from(s: SelectionArg) -> Selection {
        match s {
            SelectionArg::PiMin => Selection::PiMinimal,
            SelectionArg::RhoMin => Selection::RhoMinimal,
            SelectionArg::RhoMax => Selection::RhoMaximal,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Number of protectable blocks
    #[arg(short = 'm', long, value_parser = clap::value_parser!(u32).range(1..))]
    blocks: u32,
    /// Fault probability per replica execution
    #[arg(short = 'p', long, default_value_t = 0.1)]
    fault_prob: f64,
    /// Mechanisms admitted per block
    #[arg(long, value_delimiter = ',', default_values = ["none", "comparison", "voting"])]
    mechanisms: Vec<MechanismArg>,
    /// Jitter the per-block fault probability deterministically
    #[arg(long)]
    jitter_seed: Option<u64>,
    /// Where to write the model (sidecar goes to <OUT>.meta.json)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BudgetArgs {
    /// Maximum live decision-diagram nodes
    #[arg(long)]
    node_limit: Option<usize>,
    /// Wall-clock budget per construction, in seconds
    #[arg(long)]
    time_limit: Option<f64>,
}

impl BudgetArgs {
    fn budget(&self) -> Budget {
        Budget {
            node_limit: self.node_limit.unwrap_or(usize::MAX),
            time_limit: self.time_limit.map(Duration::from_secs_f64),
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    /// Model file
    input: PathBuf,
    /// Variable order to build under (JSON array file); default is the
    /// declaration order
    #[arg(long)]
    order: Option<PathBuf>,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Output path; default is stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IterateArgs {
    /// Model file
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = SelectionArg::PiMin)]
    heuristic: SelectionArg,
    /// Pick/grow sub-steps per iteration
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    step: u32,
    /// Sifting passes per reorder call
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    passes: u32,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Output path for the rows; default is stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the final variable order (JSON array)
    #[arg(long)]
    order_out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Model file
    input: PathBuf,
    /// Wall-clock snapshot in seconds; running cells report their last
    /// completed iteration
    #[arg(long)]
    deadline: Option<f64>,
    /// Concurrent workers, one engine instance each
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    workers: u32,
    /// Step sizes to tabulate
    #[arg(long, value_delimiter = ',', default_values = ["1", "2", "3", "4"])]
    steps: Vec<usize>,
    /// Sifting passes per reorder call
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    passes: u32,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Failure {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::new(1, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Build(args) => cmd_build(args),
        Cmd::Iterate(args) => cmd_iterate(args),
        Cmd::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("famsift: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn load_program(path: &Path) -> Result<Program, Failure> {
    let source = fs::read_to_string(path)?;
    parse(&source).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn construct_failure(e: &ConstructError) -> Failure {
    let code = match e.dd_cause() {
        Some(DdError::NodeLimit { .. }) => EXIT_NODE_LIMIT,
        Some(DdError::TimeBudget) => EXIT_TIME_BUDGET,
        _ => EXIT_PARSE,
    };
    Failure::new(code, e.to_string())
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let cfg = GenConfig {
        blocks: args.blocks as usize,
        fault_prob: args.fault_prob,
        mechanisms: args.mechanisms.into_iter().map(Into::into).collect(),
        jitter_seed: args.jitter_seed,
    };
    let family = generate(&cfg).map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    fs::write(&args.out, &family.source)?;
    let sidecar = args.out.with_extension("meta.json");
    fs::write(&sidecar, family.metadata_json())?;
    println!(
        "wrote {} and {} (family size {})",
        args.out.display(),
        sidecar.display(),
        family.metadata.family_size
    );
    Ok(())
}

fn load_order(path: &Path, p: &Program) -> Result<VarOrder, Failure> {
    let text = fs::read_to_string(path)?;
    let order: VarOrder = serde_json::from_str(&text)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    if !order.is_permutation_of(p.var_names()) {
        return Err(Failure::new(
            EXIT_PARSE,
            format!("{}: not a permutation of the program variables", path.display()),
        ));
    }
    Ok(order)
}

fn cmd_build(args: BuildArgs) -> Result<(), Failure> {
    let program = load_program(&args.input)?;
    let order = match &args.order {
        Some(path) => load_order(path, &program)?,
        None => program.declaration_order(),
    };
    let model =
        construct(&program, &order, &args.budget.budget()).map_err(|e| construct_failure(&e))?;
    let stats = model.stats_json();
    let content = match args.format {
        FormatArg::Json => format!("{}\n", serde_json::to_string_pretty(&stats).unwrap()),
        FormatArg::Csv => format!(
            "states,trans_nodes,init_nodes,build_seconds\n{},{},{},{:.2}\n",
            model.states, model.stats.trans_nodes, model.stats.init_nodes, model.stats.build_seconds
        ),
    };
    emit(&args.out, &content)
}

fn rows_to_csv(rows: &[IterationStats]) -> String {
    let mut out = String::from(IterationStats::CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

fn cmd_iterate(args: IterateArgs) -> Result<(), Failure> {
    let program = load_program(&args.input)?;
    let pi = program.declaration_order();
    let opts = IterateOptions {
        heuristic: Heuristic {
            selection: args.heuristic.into(),
            step: args.step as usize,
        },
        budget: args.budget.budget(),
        sift: SiftConfig {
            passes: args.passes as usize,
            ..SiftConfig::default()
        },
        eta: None,
        deadline: None,
    };
    match iterate(&program, &pi, &opts) {
        Ok(report) => {
            let order_json = serde_json::to_string(&report.order).unwrap();
            let content = match args.format {
                FormatArg::Csv => rows_to_csv(&report.rows),
                FormatArg::Json => {
                    let v = serde_json::json!({
                        "rows": report.rows,
                        "order": report.order,
                        "completed": report.completed,
                    });
                    format!("{}\n", serde_json::to_string_pretty(&v).unwrap())
                }
            };
            emit(&args.out, &content)?;
            match &args.order_out {
                Some(path) => fs::write(path, format!("{order_json}\n"))?,
                None => {
                    if args.format == FormatArg::Csv {
                        eprintln!("final order: {order_json}");
                    }
                }
            }
            Ok(())
        }
        Err(IterateError::ConstructionFailed {
            iteration,
            cause,
            rows,
            last_order,
        }) => {
            let order_json = serde_json::to_string(&last_order).unwrap();
            let content = match args.format {
                FormatArg::Csv => rows_to_csv(&rows),
                FormatArg::Json => {
                    let v = serde_json::json!({
                        "rows": rows,
                        "order": last_order,
                        "completed": false,
                        "failed_iteration": iteration,
                        "error": cause.to_string(),
                    });
                    format!("{}\n", serde_json::to_string_pretty(&v).unwrap())
                }
            };
            emit(&args.out, &content)?;
            if let Some(path) = &args.order_out {
                fs::write(path, format!("{order_json}\n"))?;
            }
            Err(Failure::new(
                EXIT_ITERATION_FAILED,
                format!("iteration {iteration} failed: {cause}"),
            ))
        }
        Err(other) => Err(Failure::new(EXIT_PARSE, other.to_string())),
    }
}

fn cmd_compare(args: CompareArgs) -> Result<(), Failure> {
    let program = load_program(&args.input)?;
    let pi = program.declaration_order();
    let cfg = CompareConfig {
        selections: Selection::ALL.to_vec(),
        steps: args.steps.clone(),
        budget: args.budget.budget(),
        sift: SiftConfig {
            passes: args.passes as usize,
            ..SiftConfig::default()
        },
        deadline: args.deadline.map(Duration::from_secs_f64),
        workers: args.workers as usize,
    };
    let rows = compare(&program, &pi, &cfg);
    let content = match args.format {
        FormatArg::Csv => {
            let mut out = String::from(CompareRow::CSV_HEADER);
            out.push('\n');
            for row in &rows {
                out.push_str(&row.csv_row());
                out.push('\n');
            }
            out
        }
        FormatArg::Json => format!("{}\n", serde_json::to_string_pretty(&rows).unwrap()),
    };
    emit(&args.out, &content)
}
