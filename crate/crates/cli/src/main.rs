use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use lrequiv::datagen::{self, RegenPlan, SpecFile};
use lrequiv::equiv::PeAlphaConvention;
use lrequiv::io::{self, RawTable, Schema};
use lrequiv::report::{self, CompareOptions, Gold, InputDigest, Population};
use lrequiv::simulation::{self, Execution, GridFile};

#[derive(Parser)]
#[command(name = "lrequiv", version, about = "Equivalence tests for logistic regression models of two populations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model per population and run every equivalence and significance test.
    Compare(CompareArgs),
    /// Run a Monte Carlo sweep over a scenario grid and write rates as CSV.
    Simulate(SimulateArgs),
    /// Regenerate synthetic train/test data through a Gaussian copula.
    Regen(RegenArgs),
}

#[derive(Args)]
struct OutDir {
    /// Directory for outputs written under default names.
    #[arg(long, env = "LREQUIV_OUTPUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Training CSV(s): two files (A then B), or one file with --group.
    #[arg(long, required = true, num_args = 1..=2)]
    train: Vec<PathBuf>,
    /// Test CSV(s), matched to the populations like --train.
    #[arg(long, num_args = 1..=2)]
    test: Vec<PathBuf>,
    /// Response column (0/1).
    #[arg(long, default_value = "y")]
    response: String,
    /// Comma-separated covariate columns [default: all other columns].
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Column splitting a single file into two populations.
    #[arg(long)]
    group: Option<String>,
    /// Population names, A then B [default: A,B or the group values].
    #[arg(long, value_delimiter = ',')]
    names: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Allowed coefficient difference: one value, or one per coefficient (intercept first).
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    delta_beta: Vec<f64>,
    /// Quantile of |gold log-odds| used as the IPE threshold.
    #[arg(long, default_value_t = 0.075)]
    delta_theta: f64,
    /// Allowed Brier score inflation; the ratio bound is its square.
    #[arg(long, default_value_t = 1.1)]
    delta_b: f64,
    /// Gold-standard model for the IPE threshold: native, A or B.
    #[arg(long, default_value = "native")]
    gold: String,
    /// Level of each one-sided PE test: per-eq4 (alpha) or table-halved (alpha/2).
    #[arg(long, default_value = "per-eq4")]
    pe_alpha_convention: String,
    /// Hosmer-Lemeshow groups.
    #[arg(long, default_value_t = 10)]
    hl_groups: usize,
    /// Recorded in the report metadata.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path [default: <out-dir>/report.json].
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    dir: OutDir,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario grid file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    grid: Option<PathBuf>,
    /// Built-in grid: error-rates, logodds-multiplicative, logodds-additive, probability-multiplicative.
    #[arg(long)]
    preset: Option<String>,
    /// Override the replicate count of every cell.
    #[arg(long)]
    replicates: Option<usize>,
    /// Override the seed of every cell.
    #[arg(long)]
    seed: Option<u64>,
    /// Sweep CSV path [default: <out-dir>/sweep.csv].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-cell results with the full config as JSON.
    #[arg(long)]
    cells_json: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Run replicates on the calling thread only.
    #[arg(long)]
    serial: bool,
    #[command(flatten)]
    dir: OutDir,
}

#[derive(Args)]
struct RegenArgs {
    /// Copula spec file (JSON) to regenerate from.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    spec: Option<PathBuf>,
    /// Raw score CSV to estimate specs from.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Population column of --data.
    #[arg(long, requires = "data")]
    population: Option<String>,
    /// Comma-separated binary label columns of --data; each combination is a subgroup.
    #[arg(long, value_delimiter = ',', requires = "data")]
    labels: Vec<String>,
    /// Regeneration plan (TOML).
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    dir: OutDir,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compare(a) => compare(a),
        Command::Simulate(a) => simulate(a),
        Command::Regen(a) => regen(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numeric = e
                .chain()
                .filter_map(|c| c.downcast_ref::<lrequiv::Error>())
                .any(lrequiv::Error::is_numeric);
            ExitCode::from(if numeric { 3 } else { 2 })
        }
    }
}

fn set_threads(threads: Option<usize>) -> anyhow::Result<()> {
    match threads {
        Some(0) => bail!("--threads must be >= 1"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?,
        None => {}
    }
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn compare(args: CompareArgs) -> anyhow::Result<ExitCode> {
    let schema = Schema {
        response: args.response.clone(),
        covariates: args.covariates.clone(),
        group: args.group.clone(),
    };
    if args.names.as_ref().is_some_and(|n| n.len() != 2) {
        bail!("--names takes exactly two names, A then B");
    }
    let mut inputs = Vec::new();
    for (i, p) in args.train.iter().enumerate() {
        inputs.push(InputDigest::of_file(&format!("train{}", i + 1), p)?);
    }
    for (i, p) in args.test.iter().enumerate() {
        inputs.push(InputDigest::of_file(&format!("test{}", i + 1), p)?);
    }

    let (a, b) = match &args.group {
        Some(col) => {
            if args.train.len() != 1 || args.test.len() > 1 {
                bail!("with --group, pass one --train file and at most one --test file");
            }
            let train = RawTable::read_path(&args.train[0])?.split_by(col)?;
            let test = match args.test.first() {
                Some(p) => Some(RawTable::read_path(p)?.split_by(col)?),
                None => None,
            };
            let names = match &args.names {
                Some(n) => n.clone(),
                None if train.len() == 2 => train.keys().cloned().collect(),
                None => bail!(
                    "--group `{col}` has {} values ({}); pick two with --names",
                    train.len(),
                    train.keys().cloned().collect::<Vec<_>>().join(", ")
                ),
            };
            let pick = |name: &String| -> anyhow::Result<Population> {
                let tr = train
                    .get(name)
                    .with_context(|| format!("no training rows with {col} = {name}"))?;
                let te = match &test {
                    Some(t) => Some(io::to_dataset(
                        t.get(name).with_context(|| format!("no test rows with {col} = {name}"))?,
                        &schema,
                    )?),
                    None => None,
                };
                Ok(Population {
                    name: name.clone(),
                    train: io::to_dataset(tr, &schema)?,
                    test: te,
                })
            };
            (pick(&names[0])?, pick(&names[1])?)
        }
        None => {
            if args.train.len() != 2 {
                bail!("pass two --train files (A then B), or one with --group");
            }
            if args.test.len() == 1 {
                bail!("pass zero or two --test files (A then B)");
            }
            let names = args.names.clone().unwrap_or_else(|| vec!["A".into(), "B".into()]);
            let load = |i: usize| -> anyhow::Result<Population> {
                Ok(Population {
                    name: names[i].clone(),
                    train: io::read_dataset(&args.train[i], &schema)?,
                    test: match args.test.get(i) {
                        Some(p) => Some(io::read_dataset(p, &schema)?),
                        None => None,
                    },
                })
            };
            (load(0)?, load(1)?)
        }
    };

    let opts = CompareOptions {
        alpha: args.alpha,
        delta_beta: args.delta_beta.clone(),
        delta_theta: args.delta_theta,
        delta_b: args.delta_b,
        gold: args.gold.parse::<Gold>()?,
        pe_alpha_convention: args.pe_alpha_convention.parse::<PeAlphaConvention>()?,
        hl_groups: args.hl_groups,
        seed: args.seed,
    };
    let rep = report::compare(&a, &b, &opts, inputs)?;
    let out = args.out.unwrap_or_else(|| args.dir.out_dir.join("report.json"));
    let mut w = create(&out)?;
    w.write_all(rep.to_json()?.as_bytes())?;
    w.flush()?;

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", rep.render_coefficients())?;
    write!(stdout, "{}", rep.render_table())?;
    writeln!(stdout, "\nreport written to {}", out.display())?;
    Ok(ExitCode::SUCCESS)
}

fn simulate(args: SimulateArgs) -> anyhow::Result<ExitCode> {
    set_threads(args.threads)?;
    let mut grid = match (&args.grid, &args.preset) {
        (Some(path), _) => simulation::read_grid(path)?,
        (None, Some(name)) => {
            let text = simulation::preset(name).with_context(|| {
                format!("unknown preset `{name}` (have: {})", simulation::preset_names().join(", "))
            })?;
            GridFile::parse(&text, name)?
        }
        (None, None) => unreachable!("clap requires --grid or --preset"),
    };
    grid.override_all(args.replicates, args.seed);
    for c in &grid.cells {
        c.validate()?;
    }
    let exec = if args.serial { Execution::Serial } else { Execution::Parallel };

    let mut ok = Vec::new();
    let mut failed = 0;
    for (i, res) in simulation::sweep(&grid.cells, exec).into_iter().enumerate() {
        match res {
            Ok(r) => ok.push(r),
            Err(e) => {
                let c = &grid.cells[i];
                eprintln!("cell {} (n={}, effect={}, k={}) failed: {e}", i + 1, c.n, c.effect, c.k);
                failed += 1;
            }
        }
    }
    let out = args.out.unwrap_or_else(|| args.dir.out_dir.join("sweep.csv"));
    let mut w = create(&out)?;
    simulation::write_sweep_csv(&mut w, &ok)?;
    w.flush()?;
    if let Some(path) = &args.cells_json {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &ok)?;
        writeln!(w)?;
        w.flush()?;
    }
    eprintln!("{} of {} cells written to {}", ok.len(), grid.cells.len(), out.display());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn regen(args: RegenArgs) -> anyhow::Result<ExitCode> {
    set_threads(args.threads)?;
    if !args.plan.exists() {
        bail!("plan file {} does not exist", args.plan.display());
    }
    let plan = RegenPlan::read(&args.plan)?;
    let specs = match (&args.spec, &args.data) {
        (Some(path), _) => SpecFile::read(path)?,
        (None, Some(path)) => estimate_specs(path, args.population.as_deref(), &args.labels)?,
        (None, None) => unreachable!("clap requires --spec or --data"),
    };
    let splits = datagen::build_splits(&plan, &specs, args.seed)?;

    let dir = &args.dir.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (population, split) in &splits {
        for (kind, table) in [("train", &split.train), ("test", &split.test)] {
            let path = dir.join(format!("{population}_{kind}.csv"));
            let mut w = create(&path)?;
            table.write_csv(&mut w)?;
            w.flush()?;
            eprintln!("{}: {} rows", path.display(), table.n_rows());
        }
    }
    let mut w = create(&dir.join("copula_spec.json"))?;
    specs.write(&mut w)?;
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

/// One spec per (population, label combination) of a raw CSV.
fn estimate_specs(path: &Path, population: Option<&str>, labels: &[String]) -> anyhow::Result<SpecFile> {
    let table = RawTable::read_path(path)?;
    let by_pop = match population {
        Some(col) => table.split_by(col)?,
        None => BTreeMap::from([("all".to_string(), table.clone())]),
    };
    let score_cols: Vec<String> = table
        .columns
        .iter()
        .filter(|c| Some(c.as_str()) != population && !labels.contains(c))
        .cloned()
        .collect();
    let mut specs = Vec::new();
    for (pop, rows) in by_pop {
        // Subgroups keyed by label combination, with the label values parsed as 0/1.
        let mut groups: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
        let label_idx: Vec<usize> = labels
            .iter()
            .map(|l| rows.columns.iter().position(|c| c == l).with_context(|| format!("missing label column `{l}`")))
            .collect::<anyhow::Result<_>>()?;
        for (i, row) in rows.rows.iter().enumerate() {
            let key = label_idx
                .iter()
                .zip(labels)
                .map(|(&j, l)| match row[j].as_str() {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    v => bail!("{}: row {}, column `{l}`: label must be 0 or 1, found `{v}`", rows.origin, i + 1),
                })
                .collect::<anyhow::Result<Vec<u8>>>()?;
            groups.entry(key).or_default().push(i);
        }
        for (key, idx) in groups {
            let sub = RawTable {
                origin: rows.origin.clone(),
                columns: rows.columns.clone(),
                rows: idx.iter().map(|&i| rows.rows[i].clone()).collect(),
            };
            let scores = score_matrix(&sub, &score_cols)?;
            let label_map: BTreeMap<String, u8> = labels.iter().cloned().zip(key.iter().copied()).collect();
            let id = subgroup_id(&pop, &label_map);
            specs.push(datagen::estimate_copula(&scores, &score_cols, &id, &pop, label_map)?);
        }
    }
    Ok(SpecFile { specs })
}

fn subgroup_id(population: &str, labels: &BTreeMap<String, u8>) -> String {
    if labels.is_empty() {
        return population.to_string();
    }
    let parts: Vec<String> = labels.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{population}:{}", parts.join(","))
}

fn score_matrix(table: &RawTable, cols: &[String]) -> anyhow::Result<nalgebra::DMatrix<f64>> {
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| table.columns.iter().position(|h| h == c).with_context(|| format!("missing column `{c}`")))
        .collect::<anyhow::Result<_>>()?;
    let mut m = nalgebra::DMatrix::zeros(table.rows.len(), cols.len());
    for (i, row) in table.rows.iter().enumerate() {
        for (j, &c) in idx.iter().enumerate() {
            let v: f64 = row[c].parse().ok().filter(|v: &f64| v.is_finite()).with_context(|| {
                format!("{}: row {}, column `{}`: `{}` is not a finite number", table.origin, i + 1, cols[j], row[c])
            })?;
            m[(i, j)] = v;
        }
    }
    Ok(m)
}
