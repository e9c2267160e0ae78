mod cache;
mod scan;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use segre_core::bounds::{all_reports, TransferInputs};
use segre_core::reduction::{build_tree, check_eligibility, reduce, NodeVerdict, Split, TreePolicy};
use segre_core::safety::{conjecture_check, safety_region_with, RECHECK_SEED};
use segre_core::field::DEFAULT_MAX_ENTRIES;
use segre_core::tangent::{Verdict, Verifier, VerifyConfig};
use segre_core::{SegreShape, Statement};
use serde::{Deserialize, Serialize};

use cache::CachedVerifier;

const EXIT_TRUE: u8 = 0;
const EXIT_MALFORMED: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INELIGIBLE: u8 = 3;
const EXIT_NOT_PROVEN: u8 = 10;

#[derive(Parser)]
#[command(name = "segre", version, about = "Defectivity checks for secant varieties of Segre varieties")]
struct Cli {
    /// Independent prime/seed trials per statement.
    #[arg(long, global = true, default_value_t = 3)]
    trials: u32,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Largest tangent matrix (rows x cols) to assemble.
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_ENTRIES)]
    max_entries: u64,
    /// Append-only JSONL verdict cache.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Json,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// Verify one statement, given as JSON or @file.
    Check { statement: String },
    /// Verify T(n; s; 0) for s = 1 up to the generic rank.
    ScanSecants {
        /// Shape as a JSON array, a comma list, or @file.
        shape: String,
        /// Verify every s directly instead of using monotonicity.
        #[arg(long)]
        exhaustive: bool,
        /// Last s to report (default: generic rank).
        #[arg(long)]
        s_max: Option<u64>,
    },
    /// Compute the safety bounds of a shape.
    Safety {
        shape: String,
        /// Only scan subabundant statements.
        #[arg(long)]
        o_plus_only: bool,
    },
    /// Prove a statement through a reduction tree.
    Reduce {
        statement: String,
        #[arg(long, value_enum, default_value_t = Emit::Json)]
        emit: Emit,
        /// Leaves have every n_i below this.
        #[arg(long, default_value_t = 3)]
        leaf_below: u64,
        /// Also stop at nodes with at most this many columns.
        #[arg(long)]
        leaf_max_cols: Option<u64>,
        #[arg(long)]
        no_strip: bool,
        /// Rebuild with the next-best split this many times.
        #[arg(long, default_value_t = 3)]
        retries: usize,
        /// Split the root this way: {"factor", "left_dim", "left_s", "left_a"}.
        #[arg(long)]
        split: Option<String>,
    },
    /// Closed-form bounds for a shape.
    Bounds {
        shape: String,
        /// Transfer safety bounds from (P^{c-1})^k.
        #[arg(long, requires = "o_plus_y")]
        c: Option<u64>,
        #[arg(long, requires = "c", allow_hyphen_values = true)]
        o_plus_y: Option<i64>,
        #[arg(long, requires = "c", allow_hyphen_values = true)]
        o_minus_y: Option<i64>,
    },
    /// Compare a computed safety region with the symmetric formula.
    Conjecture { shape: String },
}

#[derive(Deserialize)]
struct ForcedSplit {
    factor: usize,
    left_dim: u64,
    left_s: u64,
    left_a: Vec<u64>,
}

fn read_arg(arg: &str) -> Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {path}")),
        None => Ok(arg.to_string()),
    }
}

fn parse_statement(arg: &str) -> Result<Statement> {
    let text = read_arg(arg)?;
    serde_json::from_str(text.trim()).context("malformed statement")
}

fn parse_shape(arg: &str) -> Result<SegreShape> {
    let text = read_arg(arg)?;
    let text = text.trim();
    let dims: Vec<u64> = if text.starts_with('[') {
        serde_json::from_str(text).context("malformed shape")?
    } else {
        text.trim_matches(|c| c == '(' || c == ')')
            .split(',')
            .map(|x| x.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .context("malformed shape")?
    };
    Ok(SegreShape::new(dims)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn print_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn verdict_exit(v: Verdict) -> u8 {
    match v {
        Verdict::ProvenTrue => EXIT_TRUE,
        Verdict::ProbablyFalse => EXIT_NOT_PROVEN,
    }
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let cfg = VerifyConfig {
        trials: cli.trials,
        base_seed: cli.seed,
        max_entries: cli.max_entries,
    };
    let verifier = CachedVerifier::open(cfg, cli.cache.clone())?;
    let format = cli.format;
    match cli.command {
        Command::Check { statement } => {
            let st = parse_statement(&statement)?;
            let r = verifier.verify(&st)?;
            if format == Format::Csv {
                #[derive(Serialize)]
                struct Row {
                    statement: String,
                    verdict: Verdict,
                    rank: u64,
                    expected: u64,
                    deficiency: u64,
                    trials: u32,
                }
                print_csv([Row {
                    statement: r.statement.to_string(),
                    verdict: r.verdict,
                    rank: r.best_rank,
                    expected: r.expected,
                    deficiency: r.deficiency,
                    trials: r.trials_run,
                }])?;
            } else {
                print_json(&r)?;
            }
            Ok(verdict_exit(r.verdict))
        }
        Command::ScanSecants { shape, exhaustive, s_max } => {
            let shape = parse_shape(&shape)?;
            let table = scan::scan_secants(&shape, &verifier, s_max, exhaustive)?;
            if format == Format::Csv {
                print_csv(&table.rows)?;
            } else {
                print_json(&table)?;
            }
            Ok(table.exit_code())
        }
        Command::Safety { shape, o_plus_only } => {
            let shape = parse_shape(&shape)?;
            let recheck = cfg.with_seed(cfg.base_seed ^ RECHECK_SEED);
            let region = safety_region_with(&shape, &verifier, &recheck, o_plus_only)?;
            if format == Format::Csv {
                #[derive(Serialize)]
                struct Row {
                    shape: String,
                    o_plus: i64,
                    o_minus: Option<i64>,
                    source: &'static str,
                }
                let source = if region.sub_none_found || region.super_none_found {
                    "scan; no false statement on one side"
                } else {
                    "scan"
                };
                print_csv([Row {
                    shape: region.shape.to_string(),
                    o_plus: region.o_plus,
                    o_minus: region.o_minus,
                    source,
                }])?;
            } else {
                print_json(&region)?;
            }
            Ok(EXIT_TRUE)
        }
        Command::Reduce {
            statement,
            emit,
            leaf_below,
            leaf_max_cols,
            no_strip,
            retries,
            split,
        } => {
            let st = parse_statement(&statement)?;
            let mut policy = TreePolicy {
                leaf_dim_below: leaf_below,
                leaf_max_cols,
                strip_zero_factors: !no_strip,
                ..TreePolicy::default()
            };
            let mut retries = retries;
            if let Some(split) = split {
                let f: ForcedSplit = serde_json::from_str(read_arg(&split)?.trim()).context("malformed split")?;
                let split = Split::from_left(&st, f.factor, f.left_dim, f.left_s, &f.left_a)?;
                policy.root_split = Some(split);
                retries = 0;
                let report = check_eligibility(&build_tree(&st, &policy)?);
                if !report.eligible {
                    print_json(&report)?;
                    return Ok(EXIT_INELIGIBLE);
                }
            }
            let outcome = reduce(&st, &policy, &verifier, retries)?;
            match emit {
                Emit::Dot => print!("{}", outcome.tree.to_dot()),
                Emit::Json => print_json(&outcome)?,
            }
            Ok(if outcome.verdict == NodeVerdict::ProvenTrue {
                EXIT_TRUE
            } else {
                EXIT_NOT_PROVEN
            })
        }
        Command::Bounds {
            shape,
            c,
            o_plus_y,
            o_minus_y,
        } => {
            let shape = parse_shape(&shape)?;
            let transfer = match (c, o_plus_y) {
                (Some(c), Some(o_plus_y)) => Some(TransferInputs { c, o_plus_y, o_minus_y }),
                (None, None) => None,
                _ => bail!("--c and --o-plus-y go together"),
            };
            let reports = all_reports(&shape, transfer)?;
            if format == Format::Csv {
                #[derive(Serialize)]
                struct Row {
                    shape: String,
                    theorem: String,
                    name: String,
                    value: String,
                }
                let mut rows = Vec::new();
                for r in &reports {
                    let theorem = serde_json::to_value(r.kind)?.as_str().unwrap_or_default().to_string();
                    for (name, value) in &r.values {
                        rows.push(Row {
                            shape: shape.to_string(),
                            theorem: theorem.clone(),
                            name: name.clone(),
                            value: match value {
                                serde_json::Value::String(s) => s.clone(),
                                v => v.to_string(),
                            },
                        });
                    }
                }
                print_csv(rows)?;
            } else {
                print_json(&reports)?;
            }
            Ok(EXIT_TRUE)
        }
        Command::Conjecture { shape } => {
            let shape = parse_shape(&shape)?;
            let recheck = cfg.with_seed(cfg.base_seed ^ RECHECK_SEED);
            let region = safety_region_with(&shape, &verifier, &recheck, false)?;
            let report = conjecture_check(&region, &verifier)?;
            if format == Format::Csv {
                #[derive(Serialize)]
                struct Row {
                    shape: String,
                    o_plus: i64,
                    o_minus: Option<i64>,
                    symmetric: Option<bool>,
                    formula: i64,
                    formula_holds: bool,
                    witness: Option<String>,
                    witness_false: Option<bool>,
                    witness_room_matches: Option<bool>,
                }
                print_csv([Row {
                    shape: shape.to_string(),
                    o_plus: report.o_plus,
                    o_minus: report.o_minus,
                    symmetric: report.symmetric,
                    formula: report.formula,
                    formula_holds: report.formula_holds,
                    witness: report.witness.as_ref().map(ToString::to_string),
                    witness_false: report.witness_false,
                    witness_room_matches: report.witness_room_matches,
                }])?;
            } else {
                print_json(&report)?;
            }
            Ok(EXIT_TRUE)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_MALFORMED } else { EXIT_TRUE });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let closed = e
                .chain()
                .any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe));
            if closed {
                return ExitCode::from(EXIT_TRUE);
            }
            eprintln!("error: {e:#}");
            let cap = matches!(e.downcast_ref::<segre_core::Error>(), Some(segre_core::Error::MemoryCap { .. }));
            ExitCode::from(if cap { EXIT_INFEASIBLE } else { EXIT_MALFORMED })
        }
    }
}
