use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tracial_core::flat::{extend_to_degree, flat_ranks};
use tracial_core::gns::{extract_representation, verify_representation};
use tracial_core::poly::infer_variable_count;
use tracial_core::theta2::{dual_witness_search, theta2_feasibility, Theta2Verdict};
use tracial_core::{build_moment_matrix, parse_poly, Error, Polynomial, TracialSequence};

const EXIT_FAILURE: u8 = 1;
const EXIT_PRECONDITION: u8 = 2;
const EXIT_NOT_PSD: u8 = 3;
const EXIT_UNKNOWN: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "tracial", version, about = "Truncated tracial moment problems")]
struct Cli {
    #[command(flatten)]
    config: RunConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunConfig {
    /// Numerical tolerance for ranks, residuals and PSD checks.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 5000)]
    max_iter: usize,
    /// Format of the report; artifacts are always JSON.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Half-degree of the moment matrix or Gram basis.
    #[arg(short, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    target_k: Option<usize>,
    /// Write the artifact here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Number of variables in a polynomial (inferred when absent).
    #[arg(long, global = true)]
    vars: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Positivity, ranks and flatness of M_k(y).
    Check { sequence: PathBuf },
    /// Extend a flat sequence to order 2 * target-k.
    Extend { sequence: PathBuf },
    /// Finite-atomic matrix representation of a flat sequence.
    Represent { sequence: PathBuf },
    /// Decide membership of a polynomial in the cyclic sums of hermitian squares.
    Theta2 {
        #[arg(allow_hyphen_values = true)]
        poly: String,
    },
    /// Search for a moment sequence with M_k(y) ⪰ 0 and L_y(f) < 0.
    Witness {
        #[arg(allow_hyphen_values = true)]
        poly: String,
    },
    /// Evaluate the Riesz functional L_y(p).
    Riesz {
        sequence: PathBuf,
        #[arg(allow_hyphen_values = true)]
        poly: String,
    },
}

/// A failed command with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. }
            | Error::VariableOutOfRange { .. }
            | Error::DegreeOverflow { .. }
            | Error::Dimension(_)
            | Error::NotSymmetric { .. }
            | Error::Weights(_)
            | Error::InconsistentMoment { .. }
            | Error::MissingMoment(_)
            | Error::NotNormalized(_)
            | Error::InvalidSequence(_)
            | Error::Json(_)
            | Error::Io(_) => EXIT_USAGE,
            Error::NotPsd { .. } | Error::NotFlat { .. } | Error::BasisExtraction { .. } => EXIT_PRECONDITION,
            _ => EXIT_FAILURE,
        };
        Failure::new(code, e.to_string())
    }
}

type Outcome = std::result::Result<u8, Failure>;

fn main() -> ExitCode {
    // clap's own usage status (2) would collide with the precondition code
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let config = cli.config;
    if config.tol.is_nan() || config.tol <= 0.0 || config.max_iter == 0 {
        eprintln!("error: --tol must be positive and --max-iter at least 1");
        return ExitCode::from(EXIT_USAGE);
    }
    let outcome = match &cli.command {
        Command::Check { sequence } => check(&config, sequence),
        Command::Extend { sequence } => extend(&config, sequence),
        Command::Represent { sequence } => represent(&config, sequence),
        Command::Theta2 { poly } => theta2(&config, poly),
        Command::Witness { poly } => witness(&config, poly),
        Command::Riesz { sequence, poly } => riesz(&config, sequence, poly),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn emit(config: &RunConfig, artifact: &str) -> std::result::Result<(), Failure> {
    match &config.output {
        Some(path) => fs::write(path, format!("{artifact}\n"))
            .map_err(|e| Failure::new(EXIT_FAILURE, format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{artifact}");
            Ok(())
        }
    }
}

fn report(config: &RunConfig, value: serde_json::Value, text: String) {
    match config.format {
        Format::Json => eprintln!("{value}"),
        Format::Text => eprintln!("{text}"),
    }
}

fn load(path: &Path) -> std::result::Result<TracialSequence, Failure> {
    TracialSequence::load(path).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn order_k(config: &RunConfig, y: &TracialSequence) -> std::result::Result<usize, Failure> {
    let k = config.k.unwrap_or_else(|| y.max_k());
    if k == 0 || k > y.max_k() {
        return Err(Failure::new(
            EXIT_USAGE,
            format!("-k {k} needs moments up to degree {}, the file has {}", 2 * k, y.order()),
        ));
    }
    Ok(k)
}

/// Reads `arg` as a file if one exists at that path, else as the polynomial itself.
fn read_poly(config: &RunConfig, arg: &str) -> std::result::Result<Polynomial, Failure> {
    let text = match Path::new(arg).is_file() {
        true => fs::read_to_string(arg).map_err(Error::from)?,
        false => arg.to_string(),
    };
    let n = config.vars.unwrap_or_else(|| infer_variable_count(&text));
    Ok(parse_poly(text.trim(), n)?)
}

fn poly_k(config: &RunConfig, f: &Polynomial) -> usize {
    config.k.unwrap_or_else(|| f.degree().div_ceil(2).max(1))
}

fn check(config: &RunConfig, path: &Path) -> Outcome {
    let y = load(path)?;
    let k = order_k(config, &y)?;
    let m = build_moment_matrix(&y, k)?;
    let (psd, min_eig) = m.psd_check(config.tol)?;
    let (prev, rank) = flat_ranks(&y, k, config.tol)?;
    let flat = psd && prev == rank;
    let line = format!(
        "psd={psd} rank(M{})={prev} rank(M{k})={rank} flat={flat} min_eig={min_eig:.6e}",
        k - 1
    );
    let value = json!({ "psd": psd, "min_eig": min_eig, "k": k, "rank_prev": prev, "rank": rank, "flat": flat });
    match config.format {
        Format::Json => emit(config, &value.to_string())?,
        Format::Text => emit(config, &line)?,
    }
    Ok(match (psd, flat) {
        (false, _) => EXIT_NOT_PSD,
        (true, false) => EXIT_PRECONDITION,
        (true, true) => 0,
    })
}

fn extend(config: &RunConfig, path: &Path) -> Outcome {
    let y = load(path)?;
    let k = order_k(config, &y)?;
    let target = config
        .target_k
        .ok_or_else(|| Failure::new(EXIT_USAGE, "extend needs --target-k"))?;
    let extended = extend_to_degree(&y, k, target, config.tol).map_err(|e| {
        let mut f = Failure::from(e);
        if f.code == EXIT_PRECONDITION {
            f.message.push_str("\nnote: flat extensions are only propagated; non-flat data is not searched for a flat extension");
        }
        f
    })?;
    let (prev, rank) = flat_ranks(&y, k, config.tol)?;
    emit(config, &extended.to_json())?;
    report(
        config,
        json!({ "k": k, "target_k": target, "rank_prev": prev, "rank": rank, "order": extended.order() }),
        format!("flat at k={k} (rank {rank}); extended to order {}", extended.order()),
    );
    Ok(0)
}

fn represent(config: &RunConfig, path: &Path) -> Outcome {
    let y = load(path)?;
    let k = order_k(config, &y)?;
    let rep = match extract_representation(&y, k, config.tol, config.seed) {
        Ok(rep) => rep,
        Err(Error::Residual { residual, tol }) => {
            return Err(Failure::new(
                EXIT_FAILURE,
                format!("best representation misses the moments by {residual:.3e} (tolerance {tol:.3e})"),
            ))
        }
        Err(e) => return Err(e.into()),
    };
    let residual = verify_representation(&y, &rep)?;
    emit(config, &rep.to_json())?;
    let sizes: Vec<usize> = rep.atoms.iter().map(|a| a[0].nrows()).collect();
    report(
        config,
        json!({ "atoms": rep.atoms.len(), "sizes": sizes, "weights": rep.weights, "residual": residual }),
        format!(
            "{} atom(s) of sizes {sizes:?}, weights {:?}, residual {residual:.3e}",
            rep.atoms.len(),
            rep.weights
        ),
    );
    Ok(if residual <= config.tol { 0 } else { EXIT_FAILURE })
}

fn theta2(config: &RunConfig, arg: &str) -> Outcome {
    let f = read_poly(config, arg)?;
    let k = poly_k(config, &f);
    let verdict = theta2_feasibility(&f, k, config.tol, config.max_iter, config.seed)?;
    let file = verdict.to_file();
    emit(config, &serde_json::to_string(&file).map_err(Error::from)?)?;
    let text = match &verdict {
        Theta2Verdict::Member(c) => format!(
            "member: {} square(s), constraint residual {:.3e}",
            c.squares.len(),
            c.residual
        ),
        Theta2Verdict::NotMember(w) => format!("not a member: witness with L_y(f) = {:.6e}", w.value),
        Theta2Verdict::Unknown { residual, iterations } => {
            format!("undecided after {iterations} iterations (residual {residual:.3e})")
        }
    };
    report(config, json!({ "verdict": file.verdict, "residuals": file.residuals }), text);
    Ok(match verdict {
        Theta2Verdict::Member(_) => 0,
        Theta2Verdict::NotMember(_) => EXIT_FAILURE,
        Theta2Verdict::Unknown { .. } => EXIT_UNKNOWN,
    })
}

fn witness(config: &RunConfig, arg: &str) -> Outcome {
    let f = read_poly(config, arg)?;
    let k = poly_k(config, &f);
    match dual_witness_search(&f, k, config.tol, config.max_iter, config.seed) {
        Ok(w) => {
            emit(config, &w.y.to_json())?;
            report(
                config,
                json!({ "riesz": w.value, "min_eig": w.min_eig }),
                format!("witness: L_y(f) = {:.6e}, min eigenvalue {:.3e}", w.value, w.min_eig),
            );
            Ok(0)
        }
        Err(e @ Error::NoWitness(_)) => {
            eprintln!("{e}");
            Ok(EXIT_UNKNOWN)
        }
        Err(e) => Err(e.into()),
    }
}

fn riesz(config: &RunConfig, path: &Path, arg: &str) -> Outcome {
    let y = load(path)?;
    let f = match Path::new(arg).is_file() {
        true => parse_poly(fs::read_to_string(arg).map_err(Error::from)?.trim(), y.n())?,
        false => parse_poly(arg, y.n())?,
    };
    let value = y.riesz(&f)?;
    match config.format {
        Format::Json => emit(config, &json!({ "value": value }).to_string())?,
        Format::Text => emit(config, &format!("{value}"))?,
    }
    Ok(0)
}
