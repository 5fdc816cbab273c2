//! `natlat`: check natural-latent conditions, search for exact latents,
//! replay derivations, and reproduce the coin example.
//!
//! Exit status: 0 pass, 1 threshold or property failure, 2 usage, parse or
//! validation error.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use natlat::format::{
    parse_distribution_with_roles, parse_model, write_distribution, write_label_map, write_model,
};
use natlat::naturality::{theorem_sweep, THEOREM_TOLERANCE};
use natlat::rules::{replay_redund_bound, run_script, SamplerConfig};
use natlat::scenarios::{coin_bias_check, coin_median, coin_model, CoinExampleConfig};
use natlat::search::{chunk_model, Partition, SUPPORT_THRESHOLD};
use natlat::{
    chunk_observables, exact_natural_latent, naturality_report, AgentModel, NaturalityReport,
};

use output::Report;

#[derive(Parser)]
#[command(
    name = "natlat",
    version,
    about = "Natural latents over discrete distributions"
)]
struct Cli {
    /// Print `key<TAB>value` lines instead of aligned text.
    #[arg(long, global = true)]
    machine: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mediation and redundancy errors of an agent model file.
    Check {
        model: PathBuf,
        /// Pass if every error is at most this many bits.
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Merge observables into two blocks first, e.g. `A,B|C,D`.
        #[arg(long)]
        chunk: Option<String>,
    },
    /// Exact natural latent of a two-observable distribution, from the
    /// connected components of its support (cells above 1e-12).
    ///
    /// Passes if the component latent mediates to within `--eps`.
    Search {
        distribution: PathBuf,
        #[arg(long, default_value_t = SUPPORT_THRESHOLD)]
        eps: f64,
        /// Merge observables into two blocks first, e.g. `A,B|C,D`.
        #[arg(long)]
        chunk: Option<String>,
        /// Also write the label maps to this file.
        #[arg(long)]
        map_out: Option<PathBuf>,
    },
    /// Randomized check of H(L'|L) <= eps_med + 2 eps_red.
    Theorem {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Largest alphabet size of any variable.
        #[arg(long, default_value_t = 4)]
        max_card: usize,
    },
    /// Median-label entropy for two batches of coin flips with uniform bias.
    Coin {
        /// Flips per batch (even).
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Also check the bound with the bias discretized to this many points.
        #[arg(long)]
        grid: Option<usize>,
        /// Write the (N1, N2, median) agent model to this file.
        #[arg(long)]
        emit_model: Option<PathBuf>,
    },
    /// Replay a derivation script.
    Derive {
        script: PathBuf,
        /// Numerically validate every step on this many random distributions.
        #[arg(long)]
        validate: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Merge observables into two blocks and print the result.
    Chunk {
        distribution: PathBuf,
        #[arg(long)]
        chunk: String,
        /// Write here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Errors that end the run with status 2.
struct Failure(String);

impl From<natlat::Error> for Failure {
    fn from(e: natlat::Error) -> Self {
        Failure(e.to_string())
    }
}

fn in_file(path: &Path) -> impl Fn(natlat::Error) -> Failure + '_ {
    move |e| Failure(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn non_negative(eps: f64) -> Result<(), Failure> {
    if eps >= 0.0 {
        Ok(())
    } else {
        Err(Failure(format!("--eps must be >= 0, got {eps}")))
    }
}

fn at_least_one(flag: &str, n: usize) -> Result<(), Failure> {
    if n >= 1 {
        Ok(())
    } else {
        Err(Failure(format!("{flag} must be >= 1")))
    }
}

fn partition(spec: &Option<String>) -> Result<Option<Partition>, Failure> {
    spec.as_deref()
        .map(Partition::parse)
        .transpose()
        .map_err(Failure::from)
}

fn naturality_rows(out: &mut Report, m: &AgentModel, r: &NaturalityReport) {
    out.text("observables", m.observables().join(","));
    out.text("latents", m.latents().join(","));
    out.num("eps_mediation", r.eps_mediation_bits);
    for (name, e) in m.observables().iter().zip(&r.eps_redundancy_bits) {
        out.num(format!("eps_redundancy.{name}"), *e);
    }
    out.num("eps_redundancy_max", r.eps_redundancy_max_bits);
    out.text("exact", r.is_exact.to_string());
}

fn check(machine: bool, path: &Path, eps: f64, chunk: &Option<String>) -> Result<bool, Failure> {
    non_negative(eps)?;
    let mut m = parse_model(&read(path)?).map_err(in_file(path))?;
    if let Some(p) = partition(chunk)? {
        m = chunk_model(&m, &p)?;
    }
    let r = naturality_report(&m)?;
    let mut out = Report::new(machine);
    naturality_rows(&mut out, &m, &r);
    let pass = r.within(eps);
    out.num("threshold", eps)
        .text("verdict", if pass { "pass" } else { "fail" });
    print!("{}", out.render());
    Ok(pass)
}

fn search(
    machine: bool,
    path: &Path,
    eps: f64,
    chunk: &Option<String>,
    map_out: &Option<PathBuf>,
) -> Result<bool, Failure> {
    non_negative(eps)?;
    let (mut p, roles) = parse_distribution_with_roles(&read(path)?).map_err(in_file(path))?;
    if let Some(roles) = roles {
        p = p.marginalize(&roles.observables)?;
    }
    if let Some(part) = partition(chunk)? {
        p = chunk_observables(&p, &part)?;
    } else if p.num_vars() != 2 {
        return Err(Failure(format!(
            "search needs 2 observables, found {}; pass --chunk `A,B|C,D` to merge them into two blocks",
            p.num_vars()
        )));
    }
    let (f, r) = exact_natural_latent(&p)?;
    let mut out = Report::new(machine);
    out.text("observables", f.observables().join(","));
    out.int("labels", f.num_labels());
    out.num("eps_mediation", r.eps_mediation_bits);
    for (name, e) in f.observables().iter().zip(&r.eps_redundancy_bits) {
        out.num(format!("eps_redundancy.{name}"), *e);
    }
    let pass = r.eps_mediation_bits <= eps;
    out.text("exact_latent", if pass { "found" } else { "none" });
    let maps = write_label_map(&f);
    for line in maps.lines() {
        out.text("map", line.trim_start_matches("map "));
    }
    if let Some(dest) = map_out {
        write(dest, &maps)?;
    }
    print!("{}", out.render());
    Ok(pass)
}

fn theorem(machine: bool, seed: u64, samples: usize, max_card: usize) -> Result<bool, Failure> {
    at_least_one("--samples", samples)?;
    let r = theorem_sweep(seed, samples, max_card)?;
    let mut out = Report::new(machine);
    out.int("samples", r.samples)
        .int("violations", r.violations.len())
        .num("min_slack", r.min_slack)
        .num("max_slack", r.max_slack)
        .num("max_conclusion", r.max_conclusion)
        .num("tolerance", THEOREM_TOLERANCE);
    for (i, c) in &r.violations {
        out.text(
            "violation",
            format!(
                "instance {i}: H(L'|L) = {} > bound {}",
                c.conclusion_bits, c.bound_bits
            ),
        );
    }
    print!("{}", out.render());
    Ok(r.violations.is_empty())
}

fn coin(
    machine: bool,
    n: usize,
    grid: Option<usize>,
    emit: &Option<PathBuf>,
) -> Result<bool, Failure> {
    let cfg = CoinExampleConfig::new(n)?;
    let med = coin_median(&cfg);
    let mut out = Report::new(machine);
    out.int("n", n)
        .num("H", med.entropy_bits)
        .num(
            "bound",
            natlat::naturality::theorem_bound(0.0, med.entropy_bits),
        )
        .num("max_normalization_error", med.max_normalization_error);
    let mut pass = med.max_normalization_error <= 1e-9;
    if let Some(g) = grid {
        let c = coin_bias_check(&cfg, g)?;
        out.int("grid", g)
            .num("grid_eps_redundancy", c.eps_redundancy_max)
            .num("grid_conclusion", c.conclusion_bits)
            .num("grid_bound", c.bound_bits)
            .text("grid_holds", c.holds.to_string());
        pass &= c.holds;
    }
    if let Some(dest) = emit {
        write(dest, &write_model(&coin_model(&cfg)?))?;
        out.text("model", dest.display().to_string());
    }
    print!("{}", out.render());
    Ok(pass)
}

fn derive(machine: bool, path: &Path, validate: Option<usize>, seed: u64) -> Result<bool, Failure> {
    let text = read(path)?;
    let run = run_script(&text).map_err(in_file(path))?;
    let d = &run.derivation;
    let mut out = Report::new(machine);
    for (i, s) in d.steps().iter().enumerate() {
        out.text(
            format!("step.{}", i + 1),
            format!(
                "{} {} -> {}: {}",
                s.rule.name(),
                s.inputs.join(" "),
                s.output,
                s.judgment
            ),
        );
    }
    let Some(last) = d.conclusion() else {
        return Err(Failure(format!("{}: script has no steps", path.display())));
    };
    out.text("conclusion", last.diagram.to_string());
    out.text("epsilon", last.epsilon.to_string());
    for (name, source, target) in &run.conclusions {
        out.text(
            format!("concludes.{name}"),
            format!("{target} <- {source} -> {target}"),
        );
    }
    if let Ok(r) = replay_redund_bound(&text) {
        out.text("bound_equal_redundancy", r.bound.to_string());
    }
    let mut pass = true;
    if let Some(samples) = validate {
        at_least_one("--validate", samples)?;
        let cfg = SamplerConfig {
            seed,
            samples,
            ..SamplerConfig::default()
        };
        let mut violations = 0;
        for (name, r) in d.validate_steps(&cfg)? {
            violations += r.violations.len();
            out.text(
                format!("validate.{name}"),
                format!("{} checks, {} violations", r.checks, r.violations.len()),
            );
        }
        if d.budgets().is_empty() {
            let r = d.validate_end_to_end(&cfg)?;
            violations += r.violations.len();
            out.text(
                "validate.end_to_end",
                format!("{} checks, {} violations", r.checks, r.violations.len()),
            );
        }
        out.int("violations", violations);
        pass = violations == 0;
    }
    print!("{}", out.render());
    Ok(pass)
}

fn chunk(path: &Path, spec: &str, output: &Option<PathBuf>) -> Result<bool, Failure> {
    let part = Partition::parse(spec)?;
    let (p, roles) = parse_distribution_with_roles(&read(path)?).map_err(in_file(path))?;
    let text = match roles {
        Some(roles) => {
            let m = AgentModel::new(p, roles.observables, roles.latents)?;
            write_model(&chunk_model(&m, &part)?)
        }
        None => write_distribution(&chunk_observables(&p, &part)?),
    };
    match output {
        Some(dest) => write(dest, &text)?,
        None => print!("{text}"),
    }
    Ok(true)
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let m = cli.machine;
    match &cli.command {
        Command::Check { model, eps, chunk } => check(m, model, *eps, chunk),
        Command::Search {
            distribution,
            eps,
            chunk,
            map_out,
        } => search(m, distribution, *eps, chunk, map_out),
        Command::Theorem {
            seed,
            samples,
            max_card,
        } => theorem(m, *seed, *samples, *max_card),
        Command::Coin {
            n,
            grid,
            emit_model,
        } => coin(m, *n, *grid, emit_model),
        Command::Derive {
            script,
            validate,
            seed,
        } => derive(m, script, *validate, *seed),
        Command::Chunk {
            distribution,
            chunk: spec,
            output,
        } => chunk(distribution, spec, output),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
