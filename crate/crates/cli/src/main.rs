//! `usat` command-line tool: genome scans, simulation studies and
//! large-sample determinant checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use usat::io::report::{power_tsv, type1_long_tsv, type1_wide_tsv};
use usat::io::{ExperimentConfig, ExperimentKind, ScanConfig, ScanTest};
use usat::sim::{run_power_study, run_type1_study, verify_theorem_limits, SyntheticGwas, TheoremConfig};
use usat::WeightGrid;

#[derive(Parser)]
#[command(name = "usat", version, about = "Multivariate association tests for correlated quantitative traits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test every variant of a dosage file against a phenotype table.
    Scan(ScanArgs),
    /// Run the experiment described by a config file.
    Simulate(SimArgs),
    /// Run the designs of a config file as power studies.
    Power(SimArgs),
    /// Run the designs of a config file as null (type-I) studies.
    Calibrate(SimArgs),
    /// Compare simulated determinants with their large-sample limits.
    VerifyTheorems(TheoremArgs),
    /// Write a synthetic genome-wide dataset with planted pleiotropic signals.
    SynthGwas(SynthArgs),
}

#[derive(Args)]
struct ScanArgs {
    /// TOML scan config; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pheno: Option<PathBuf>,
    #[arg(long)]
    geno: Option<PathBuf>,
    #[arg(long)]
    covar: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of manova,ssu,usat,fisher,minp,marginal.
    #[arg(long, value_delimiter = ',')]
    tests: Option<Vec<String>>,
    #[arg(long)]
    maf_min: Option<f64>,
    #[arg(long)]
    max_missing: Option<f64>,
    /// Comma-separated MANOVA weights; must contain 0 and 1.
    #[arg(long, value_delimiter = ',')]
    weight_grid: Option<Vec<f64>>,
    #[arg(long)]
    threads: Option<usize>,
    /// shared or per_trait
    #[arg(long)]
    covariate_mode: Option<String>,
    #[arg(long)]
    chunk_size: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Wide,
    Long,
}

#[derive(Args)]
struct SimArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output TSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicates per design, overriding the config.
    #[arg(long)]
    replicates: Option<usize>,
    /// Type-I table layout.
    #[arg(long, value_enum, default_value = "wide")]
    layout: Layout,
}

#[derive(Args)]
struct TheoremArgs {
    /// TOML file with a `[theorems]` table; built-in scenarios when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Repetitions per scenario, overriding the config.
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 5816)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 100_000)]
    variants: usize,
    #[arg(long, default_value_t = 20)]
    planted: usize,
    /// Noncentrality of each planted signal's marginal tests.
    #[arg(long, default_value_t = 2.5)]
    marginal_ncp: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_target(false)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Scan(a) => cmd_scan(a),
        Command::Simulate(a) => cmd_simulate(a, None),
        Command::Power(a) => cmd_simulate(a, Some(ExperimentKind::Power)),
        Command::Calibrate(a) => cmd_simulate(a, Some(ExperimentKind::Type1)),
        Command::VerifyTheorems(a) => cmd_verify(a),
        Command::SynthGwas(a) => cmd_synth(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn scan_config(a: ScanArgs) -> Result<ScanConfig> {
    let mut c = match &a.config {
        Some(p) => ScanConfig::from_file(p)?,
        None => {
            let (Some(p), Some(g), Some(o)) = (&a.pheno, &a.geno, &a.out) else {
                bail!("--pheno, --geno and --out are required without --config");
            };
            ScanConfig::new(p, g, o)
        }
    };
    if a.config.is_some() {
        if let Some(p) = a.pheno {
            c.pheno_path = p;
        }
        if let Some(g) = a.geno {
            c.geno_path = g;
        }
        if let Some(o) = a.out {
            c.out_path = o;
        }
    }
    if a.covar.is_some() {
        c.covar_path = a.covar;
    }
    if let Some(t) = a.tests {
        c.tests = t.iter().map(|s| s.parse::<ScanTest>()).collect::<usat::Result<_>>()?;
    }
    if let Some(v) = a.maf_min {
        c.maf_min = v;
    }
    if let Some(v) = a.max_missing {
        c.max_missing = v;
    }
    if let Some(w) = a.weight_grid {
        c.weight_grid = WeightGrid::new(w)?;
    }
    if a.threads.is_some() {
        c.threads = a.threads;
    }
    if let Some(m) = a.covariate_mode {
        c.covariate_mode = m.parse()?;
    }
    if let Some(v) = a.chunk_size {
        c.chunk_size = v;
    }
    c.validate()?;
    Ok(c)
}

fn cmd_scan(a: ScanArgs) -> Result<bool> {
    let c = scan_config(a)?;
    let s = usat::scan::run_scan(&c)?;
    eprintln!(
        "read {} variants, wrote {} rows ({} below maf_min, {} too many missing, {} with NA results) in {:.2} s on {} thread(s): {:.0} variants/s",
        s.variants_read,
        s.rows_written,
        s.skipped_maf,
        s.skipped_missing,
        s.failed,
        s.elapsed.as_secs_f64(),
        s.threads,
        s.variants_per_second()
    );
    Ok(true)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_simulate(a: SimArgs, force: Option<ExperimentKind>) -> Result<bool> {
    let mut c = ExperimentConfig::from_file(&a.config)?;
    c.override_run(a.seed, a.replicates);
    if c.designs.is_empty() {
        bail!("{} defines no [[design]] tables", a.config.display());
    }
    let kind = force.unwrap_or(c.kind);
    let mut failures = 0;
    let text = match kind {
        ExperimentKind::Type1 => {
            let mut tables = Vec::new();
            for d in &c.designs {
                log::info!("type-I study '{}': {} replicates", d.name, d.design.replicates);
                let t = run_type1_study(&d.design, &c.tests, &c.alphas, &c.weight_grid, c.mode)
                    .with_context(|| format!("design '{}'", d.name))?;
                failures += t.rows.first().map_or(0, |r| r.failures);
                tables.push((d.name.clone(), t));
            }
            match a.layout {
                Layout::Wide => type1_wide_tsv(&tables, &c.tests),
                Layout::Long => type1_long_tsv(&tables),
            }
        }
        ExperimentKind::Power => {
            let mut tables = Vec::new();
            for d in &c.designs {
                log::info!("power study '{}': {} replicates", d.name, d.design.replicates);
                let t = run_power_study(&d.design, &d.n_assoc, &c.tests, &c.weight_grid, c.level, c.mode)
                    .with_context(|| format!("design '{}'", d.name))?;
                tables.push((d.name.clone(), t));
            }
            power_tsv(&tables)
        }
    };
    emit(a.out.as_deref(), &text)?;
    if failures > 0 {
        eprintln!("error: {failures} replicate(s) could not be evaluated");
        return Ok(false);
    }
    Ok(true)
}

fn cmd_verify(a: TheoremArgs) -> Result<bool> {
    let mut t = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?.theorems.unwrap_or_default(),
        None => TheoremConfig::default(),
    };
    if let Some(s) = a.seed {
        t.seed = s;
    }
    if let Some(r) = a.replicates {
        t.reps = r;
    }
    let report = verify_theorem_limits(&t)?;
    emit(a.out.as_deref(), &report.to_tsv())?;
    let pass = report.all_pass();
    eprintln!("{}", if pass { "all checks passed" } else { "some checks FAILED" });
    Ok(pass)
}

fn cmd_synth(a: SynthArgs) -> Result<bool> {
    let g = SyntheticGwas::pleiotropic(a.n, a.k, a.variants, a.planted, a.marginal_ncp, a.seed);
    let files = g.write(&a.out_dir)?;
    let planted = a.out_dir.join("planted.tsv");
    let mut s = String::from("snp_id\tindex\n");
    for p in &g.planted {
        s.push_str(&format!("snp{}\t{}\n", p.index, p.index));
    }
    std::fs::write(&planted, s)?;
    eprintln!(
        "wrote {}, {}, {} and {}",
        files.pheno.display(),
        files.geno.display(),
        files.covar.display(),
        planted.display()
    );
    Ok(true)
}
