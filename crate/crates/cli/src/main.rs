//! `mmlt` — MML Student-t regression fitting, model selection, posteriors,
//! simulations, and cross-validation from the command line.
//!
//! Exit codes: 0 success, 2 usage/validation error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use mmlt::codelength::{total_message_length, StructureCodingScheme};
use mmlt::divergence::build_dof_grid;
use mmlt::estimation::{ml_fit, mml_fit, EMConfig};
use mmlt::search::{enumerate_structures, select};
use mmlt::simulation::{boston_cv, run_experiment, SimConfig};
use mmlt::{CriterionName, Dataset, Error, ModelStructure, Scheme};

#[derive(Parser)]
#[command(name = "mmlt", about = "MML variable selection for Student-t regression", version)]
struct Cli {
    /// Worker threads (default: available parallelism; 1 forces serial runs)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write the full JSON report to this path (stdout tables are printed regardless)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Nested,
    Subsets,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Nested => Scheme::Nested,
            SchemeArg::Subsets => Scheme::AllSubsets,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Mml,
    Bic,
    Aicc,
    Mdl,
}

impl From<CriterionArg> for CriterionName {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Mml => CriterionName::Mml,
            CriterionArg::Bic => CriterionName::Bic,
            CriterionArg::Aicc => CriterionName::Aicc,
            CriterionArg::Mdl => CriterionName::Mdl,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model structure at a fixed degrees-of-freedom value
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        /// Comma-separated predictor column names, or "all" / "none"
        #[arg(long, default_value = "all")]
        columns: String,
        /// Degrees of freedom ("inf" for Gaussian)
        #[arg(long, default_value = "inf")]
        nu: String,
        /// Use the maximum-likelihood fit instead of the MML fit
        #[arg(long)]
        ml: bool,
    },
    /// Search candidate structures x dof grid under a criterion
    Select {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, value_enum, default_value = "subsets")]
        scheme: SchemeArg,
        /// Size of the JS-equidistant dof grid (built from scratch); omit to
        /// use the default grid {1, 1.9, 5, inf}
        #[arg(long)]
        dof_grid: Option<usize>,
        #[arg(long, value_enum, default_value = "mml")]
        criterion: CriterionArg,
        /// Rows of the ranking table to print
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// All-subsets MML posteriors and marginal inclusion probabilities
    Posterior {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        dof_grid: Option<usize>,
    },
    /// Replicated synthetic experiment comparing criteria
    Simulate {
        #[arg(long, default_value_t = 3)]
        support_size: usize,
        #[arg(long, default_value_t = 2.0)]
        signal: f64,
        /// True noise dof ("inf" for Gaussian)
        #[arg(long, default_value = "5")]
        nu: String,
        #[arg(long, default_value_t = 100)]
        replications: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Run the full 3x3x3 sparsity/signal/dof grid instead of one cell
        #[arg(long)]
        full_grid: bool,
        /// Also score the MDL denoising comparator
        #[arg(long)]
        with_mdl: bool,
    },
    /// Repeated random half/half splits with exhaustive selection per split
    BostonCv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 50)]
        splits: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_nu(s: &str) -> Result<f64, Error> {
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Validation(format!("invalid dof value '{s}'")))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Validation(format!("dof must be positive, got {v}")))
    }
}

fn fmt_nu(nu: f64) -> String {
    if nu.is_infinite() { "inf".into() } else { format!("{nu:.4}") }
}

fn dof_values(m: Option<usize>) -> Result<Vec<f64>, Error> {
    match m {
        Some(m) => Ok(build_dof_grid(m, 1.0)?.values),
        None => Ok(vec![1.0, 1.9, 5.0, f64::INFINITY]),
    }
}

fn resolve_columns(dataset: &Dataset, spec: &str) -> Result<ModelStructure, Error> {
    let gamma = match spec {
        "all" => (1..=dataset.q).collect(),
        "none" | "" => vec![],
        _ => spec
            .split(',')
            .map(|name| {
                let name = name.trim();
                dataset
                    .names
                    .iter()
                    .position(|n| n == name)
                    .map(|i| i + 1)
                    .ok_or_else(|| Error::Validation(format!("unknown column '{name}'")))
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    ModelStructure::subset(gamma)
}

fn structure_names(dataset: &Dataset, s: &ModelStructure) -> Vec<String> {
    s.gamma.iter().map(|&j| dataset.names[j - 1].clone()).collect()
}

fn write_out(out: &Option<PathBuf>, value: &serde_json::Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).expect("serializable report");
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let em = EMConfig::default();
    match cli.command {
        Command::Fit { data, target, columns, nu, ml } => {
            let dataset = Dataset::load(&data, &target)?;
            let structure = resolve_columns(&dataset, &columns)?;
            let nu = parse_nu(&nu)?;
            let fit = if ml {
                ml_fit(&dataset, &structure, nu, &em)?
            } else {
                mml_fit(&dataset, &structure, nu, &em)?
            };
            let coding = StructureCodingScheme::new(Scheme::AllSubsets, dataset.q)?;
            let breakdown = total_message_length(&dataset, &structure, &fit.params, fit.k, &coding)?;
            println!(
                "fit p={} nu={} tau={:.4} K={:.4} codelength={:.4} nits (iters {}, converged {})",
                structure.p(),
                fmt_nu(nu),
                fit.params.tau,
                fit.k.0,
                breakdown.total,
                fit.iterations,
                fit.converged
            );
            write_out(
                &cli.out,
                &json!({
                    "columns": structure_names(&dataset, &structure),
                    "params": fit.params,
                    "K": fit.k.0,
                    "breakdown": breakdown,
                    "iterations": fit.iterations,
                    "converged": fit.converged,
                }),
            )
        }
        Command::Select { data, target, scheme, dof_grid, criterion, top } => {
            let dataset = Dataset::load(&data, &target)?;
            let scheme: Scheme = scheme.into();
            let criterion: CriterionName = criterion.into();
            let structures = enumerate_structures(dataset.q, scheme)?;
            let coding = StructureCodingScheme::new(scheme, dataset.q)?;
            let dof = dof_values(dof_grid)?;
            let report = select(&dataset, &structures, &dof, criterion, &coding, &em)?;
            println!("{:<6} {:>8} {:>12}  structure", "rank", "nu", "score");
            for (i, c) in report.candidates.iter().take(top).enumerate() {
                println!(
                    "{:<6} {:>8} {:>12.4}  {}",
                    i + 1,
                    fmt_nu(c.nu),
                    c.value,
                    structure_names(&dataset, &c.structure).join(",")
                );
            }
            let best = &report.best;
            println!(
                "best: p={} nu={} score={:.4} [{}]",
                best.structure.p(),
                fmt_nu(best.nu),
                best.value,
                structure_names(&dataset, &best.structure).join(",")
            );
            write_out(
                &cli.out,
                &json!({
                    "criterion": criterion,
                    "best": {
                        "columns": structure_names(&dataset, &best.structure),
                        "nu": best.nu,
                        "score": best.value,
                        "params": best.fit.params,
                    },
                    "candidates": report.candidates.iter().take(top.max(100)).map(|c| json!({
                        "columns": structure_names(&dataset, &c.structure),
                        "nu": c.nu,
                        "score": c.value,
                    })).collect::<Vec<_>>(),
                    "failures": report.failures,
                }),
            )
        }
        Command::Posterior { data, target, dof_grid } => {
            let dataset = Dataset::load(&data, &target)?;
            let structures = enumerate_structures(dataset.q, Scheme::AllSubsets)?;
            let coding = StructureCodingScheme::new(Scheme::AllSubsets, dataset.q)?;
            let dof = dof_values(dof_grid)?;
            let report = select(&dataset, &structures, &dof, CriterionName::Mml, &coding, &em)?;
            let mut marg: Vec<(String, f64)> = dataset
                .names
                .iter()
                .cloned()
                .zip(report.marginal_inclusion.iter().copied())
                .collect();
            marg.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
            println!("{:<12} {:>10}", "predictor", "inclusion");
            for (name, p) in &marg {
                println!("{name:<12} {p:>10.4}");
            }
            write_out(
                &cli.out,
                &json!({
                    "marginal_inclusion": marg.iter().map(|(n, p)| json!({"predictor": n, "probability": p})).collect::<Vec<_>>(),
                    "best": {
                        "columns": structure_names(&dataset, &report.best.structure),
                        "nu": report.best.nu,
                        "score": report.best.value,
                    },
                }),
            )
        }
        Command::Simulate { support_size, signal, nu, replications, seed, full_grid, with_mdl } => {
            let dof = [1.0, 1.9, 5.0, f64::INFINITY];
            let mut criteria = vec![CriterionName::Mml, CriterionName::Bic, CriterionName::Aicc];
            if with_mdl {
                criteria.push(CriterionName::Mdl);
            }
            let cells: Vec<(usize, f64, f64)> = if full_grid {
                let mut v = Vec::new();
                for &ss in &[15usize, 8, 3] {
                    for &sig in &[2.0, 1.0, 0.5] {
                        for &tnu in &[1.0, 5.0, f64::INFINITY] {
                            v.push((ss, sig, tnu));
                        }
                    }
                }
                v
            } else {
                vec![(support_size, signal, parse_nu(&nu)?)]
            };
            let mut all = Vec::new();
            for (ss, sig, tnu) in cells {
                let mut cfg = SimConfig::new(ss, sig, tnu, seed);
                cfg.replications = replications;
                let res = run_experiment(&cfg, &criteria, &dof, &em)?;
                println!(
                    "support={ss} signal={sig} nu={}  ({} reps, {} failed)",
                    fmt_nu(tnu),
                    replications,
                    res.failed_replications
                );
                println!(
                    "{:<6} {:>10} {:>10} {:>8} {:>8}",
                    "crit", "KL", "MAE", "FP", "FN"
                );
                for (c, m) in &res.per_criterion {
                    println!(
                        "{:<6} {:>10.4} {:>10.4} {:>8.2} {:>8.2}",
                        format!("{c:?}"),
                        m.empirical_kl,
                        m.mae,
                        m.false_positives,
                        m.false_negatives
                    );
                }
                all.push(res);
            }
            write_out(&cli.out, &serde_json::to_value(&all).expect("serializable"))
        }
        Command::BostonCv { data, target, splits, seed } => {
            let dataset = Dataset::load(&data, &target)?;
            let dof = dof_values(None)?;
            let report = boston_cv(&dataset, splits, &dof, seed, &em)?;
            for (ci, crit) in report.criteria.iter().enumerate() {
                println!("criterion {crit:?}");
                println!("{:<8} {:>10} {:>10} {:>10}", "nu", "NLL", "MAE", "freq");
                for (di, &nu) in report.dof.iter().enumerate() {
                    println!(
                        "{:<8} {:>10.4} {:>10.4} {:>10.2}",
                        fmt_nu(nu),
                        report.nll[ci][di],
                        report.mae[ci][di],
                        report.dof_freq[ci][di]
                    );
                }
            }
            write_out(&cli.out, &serde_json::to_value(&report).expect("serializable"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if rayon::ThreadPoolBuilder::new().num_threads(workers).build_global().is_err() {
            eprintln!("{}", json!({"error": "failed to configure worker pool"}));
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match &e {
                Error::Validation(_) | Error::Io(_) | Error::Csv(_) => 2u8,
                _ => 3u8,
            };
            eprintln!("{}", json!({"error": e.to_string(), "exit_code": code}));
            ExitCode::from(code)
        }
    }
}
