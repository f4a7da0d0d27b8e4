use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use colindep::audit::{self, AuditConfig, ScanNullKind};
use colindep::correlation::{correlation_report, ReportOptions};
use colindep::exec::{self, stage_seed};
use colindep::fdr::{correlation_histogram, scan_column_pairs, write_histogram_csv, ScanNull, Tail};
use colindep::io::{self, Groups, ParseOptions};
use colindep::matrix::{demean, double_standardize, normal_scores_columns, DataMatrix, DoubleStdOptions, SweepOrder};
use colindep::normal::{
    bilinear_test, calibrate_gamma, eigenratio, eigenratio_of_matrix, sample_matrix_normal_with,
    two_sample_w_for_labels, CalibrationOptions, DeltaModel, NullModel, SigmaModel, SimulationSpec, WishartSampler,
};
use colindep::permutation::{perm_pvalue, PValueRule, PermOptions, PermStatistic, TestResult};
use colindep::spectral::{spectral, RANK_TOL};
use colindep::nalgebra::DMatrix;
use colindep::{CorrelationReport, Error};

const THREADS_ENV: &str = "COLINDEP_THREADS";

#[derive(Parser, Debug)]
#[command(name = "colindep", version, about = "Tests of column-wise independence for row-correlated data matrices")]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    /// Convergence tolerance of double standardization.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Demean and doubly standardize a matrix, writing the result as CSV.
    Standardize(StandardizeArgs),
    /// Permutation test on the first eigenvector or the column covariance.
    Permtest(PermtestArgs),
    /// Eigenratio test against a simulated null.
    EigenratioTest(EigenratioArgs),
    /// Two-sample bilinear statistic.
    Bilinear(BilinearArgs),
    /// Outlier scan of all column-pair correlations with FDR control.
    FdrScan(FdrArgs),
    /// Simulate replicate statistics from a null model.
    Simulate(SimulateArgs),
    /// Run the full battery and emit one report.
    Audit(AuditArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// CSV/TSV matrix, rows = features, columns = samples.
    input: PathBuf,
    /// Field delimiter (detected when omitted).
    #[arg(long)]
    delimiter: Option<char>,
    /// First line is a header.
    #[arg(long, conflicts_with = "no_header")]
    header: bool,
    /// First line is data.
    #[arg(long)]
    no_header: bool,
    /// First column holds row IDs.
    #[arg(long, conflicts_with = "no_row_ids")]
    row_ids: bool,
    /// First column is data.
    #[arg(long)]
    no_row_ids: bool,
}

impl InputArgs {
    fn read(&self) -> Result<io::Table> {
        let delimiter = match self.delimiter {
            Some(c) if c.is_ascii() => Some(c as u8),
            Some(c) => bail!(Error::InvalidInput(format!("delimiter must be ASCII, got {c:?}"))),
            None => None,
        };
        let flag = |yes: bool, no: bool| if yes { Some(true) } else if no { Some(false) } else { None };
        let opts = ParseOptions {
            delimiter,
            header: flag(self.header, self.no_header),
            row_ids: flag(self.row_ids, self.no_row_ids),
        };
        io::read_table(&self.input, &opts).with_context(|| format!("reading {}", self.input.display()))
    }
}

#[derive(Args, Debug)]
struct StdArgs {
    /// Treat the input as already doubly standardized.
    #[arg(long)]
    no_standardize: bool,
    #[arg(long, value_enum, default_value_t = Order::ColumnFirst)]
    order: Order,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Order {
    ColumnFirst,
    RowFirst,
}

impl From<Order> for SweepOrder {
    fn from(o: Order) -> Self {
        match o {
            Order::ColumnFirst => SweepOrder::ColumnFirst,
            Order::RowFirst => SweepOrder::RowFirst,
        }
    }
}

#[derive(Args, Debug)]
struct StandardizeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    std: StdArgs,
    /// Replace each column by normal scores of its ranks before standardizing.
    #[arg(long)]
    normal_scores: bool,
    /// Only subtract row and column means.
    #[arg(long)]
    demean_only: bool,
    /// Write the standardization log as JSON here.
    #[arg(long)]
    log_out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Stat {
    Block,
    Trend,
    Trace,
}

#[derive(Args, Debug)]
struct PermtestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    std: StdArgs,
    #[arg(long, value_enum, default_value_t = Stat::Block)]
    stat: Stat,
    /// Number of permutations.
    #[arg(long = "L", default_value_t = 2000)]
    l: usize,
    #[arg(long, default_value_t = 2)]
    min_block: usize,
    #[arg(long, default_value_t = 10)]
    max_block: usize,
    /// Use (count + 1) / (L + 1) instead of count / L.
    #[arg(long)]
    conservative: bool,
    /// Write the permutation null draws here, one per line.
    #[arg(long)]
    null_out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum EigenNull {
    Wishart,
    Blocks,
}

#[derive(Args, Debug)]
struct EigenratioArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    std: StdArgs,
    #[arg(long, value_enum, default_value_t = EigenNull::Wishart)]
    null: EigenNull,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Wishart degrees of freedom: `auto` uses the estimated effective sample size.
    #[arg(long, default_value = "auto")]
    df: AutoValue,
    /// Use the scale I (instead of I - J/n) for the Wishart null.
    #[arg(long)]
    uncentered: bool,
    /// Row count of the simulated correlated-rows matrices (capped at m).
    #[arg(long, default_value_t = 2000)]
    null_m: usize,
    #[arg(long, default_value_t = 5)]
    blocks: usize,
    /// Block effect size: `auto` calibrates it to the estimated alpha.
    #[arg(long, default_value = "auto")]
    gamma: AutoValue,
    #[arg(long)]
    null_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GroupArgs {
    /// Contiguous group sizes `n1,n2`.
    #[arg(long, conflicts_with = "groups_file")]
    groups: Option<String>,
    /// File with one group label per column.
    #[arg(long)]
    groups_file: Option<PathBuf>,
}

impl GroupArgs {
    fn read(&self) -> Result<Option<Groups>> {
        Ok(match (&self.groups, &self.groups_file) {
            (Some(s), _) => Some(io::parse_group_sizes(s)?),
            (None, Some(p)) => Some(io::read_groups(p).with_context(|| format!("reading {}", p.display()))?),
            (None, None) => None,
        })
    }
}

#[derive(Args, Debug)]
struct BilinearArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    std: StdArgs,
    #[command(flatten)]
    groups: GroupArgs,
    #[arg(long, default_value = "auto")]
    mtilde: AutoValue,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FdrNull {
    Corr,
    Gauss,
}

#[derive(Args, Debug)]
struct FdrArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    std: StdArgs,
    #[arg(long, default_value_t = 0.1)]
    q: f64,
    #[arg(long, value_enum, default_value_t = FdrNull::Corr)]
    null: FdrNull,
    #[arg(long, default_value = "auto")]
    mtilde: AutoValue,
    #[arg(long)]
    two_sided: bool,
    /// Write histogram bins of the correlations as CSV here.
    #[arg(long)]
    hist_out: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    bins: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Model {
    Wishart,
    Blocks,
    Spiked,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: Model,
    #[arg(long, default_value_t = 2000)]
    m: usize,
    #[arg(long, default_value_t = 44)]
    n: usize,
    /// Block effect size (blocks model).
    #[arg(long, default_value_t = 1.23)]
    gamma: f64,
    #[arg(long, default_value_t = 5)]
    blocks: usize,
    /// Spike strength (spiked model): Delta = I + lambda beta beta' with beta = 1/sqrt(n).
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Wishart degrees of freedom (wishart model); defaults to m.
    #[arg(long)]
    df: Option<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Write the first replicate's matrix here.
    #[arg(long)]
    matrix_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = Order::ColumnFirst)]
    order: Order,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long = "L", default_value_t = 2000)]
    l: usize,
    /// Replicates per eigenratio null.
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0.1)]
    q: f64,
    #[arg(long, value_enum, default_value_t = FdrNull::Corr)]
    scan_null: FdrNull,
    #[arg(long, default_value_t = 2)]
    min_block: usize,
    #[arg(long, default_value_t = 10)]
    max_block: usize,
    #[arg(long)]
    conservative: bool,
    #[command(flatten)]
    groups: GroupArgs,
    /// Require the two-sample bilinear test (needs groups).
    #[arg(long)]
    bilinear: bool,
    /// Row count of the simulated correlated-rows null.
    #[arg(long, default_value_t = 2000)]
    null_m_cap: usize,
    #[arg(long, default_value_t = 4)]
    calibration_reps: usize,
    /// Leave wall-clock timings out of the report.
    #[arg(long)]
    omit_timings: bool,
    /// Write histogram bins of the scanned correlations as CSV here.
    #[arg(long)]
    hist_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum AutoValue {
    Auto,
    Value(f64),
}

impl std::str::FromStr for AutoValue {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AutoValue::Auto);
        }
        s.parse::<f64>()
            .map(AutoValue::Value)
            .map_err(|_| format!("expected `auto` or a number, got {s:?}"))
    }
}

struct Prepared {
    x: DataMatrix,
    report: CorrelationReport,
}

fn prepare(input: &InputArgs, std: &StdArgs, cli: &Cli) -> Result<Prepared> {
    let table = input.read()?;
    let x = if std.no_standardize {
        DataMatrix::with_verified_state(
            table.matrix.into_values(),
            colindep::Standardization::DoubleStd,
            cli.tol.max(1e-6),
        )?
    } else {
        let opts = DoubleStdOptions { max_iter: std.max_iter, tol: cli.tol, order: std.order.into() };
        double_standardize(&demean(&table.matrix), &opts)?.0
    };
    let s = spectral(&x, RANK_TOL)?;
    let opts = ReportOptions { seed: stage_seed(cli.seed, "correlation"), ..Default::default() };
    let report = correlation_report(&x, &s, &opts)?;
    Ok(Prepared { x, report })
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn test_line(t: &TestResult) -> String {
    format!("{} {} {}\n", t.method, t.statistic, t.p_value)
}

fn emit_test(cli: &Cli, t: &TestResult) -> Result<()> {
    let bytes = match cli.format {
        OutputFormat::Json => json(t)?,
        OutputFormat::Text => test_line(t).into_bytes(),
    };
    write_out(cli.out.as_deref(), &bytes)
}

fn write_null(path: Option<&Path>, draws: &[f64]) -> Result<()> {
    if let Some(p) = path {
        let rows: Vec<Vec<f64>> = draws.iter().map(|&v| vec![v]).collect();
        let file = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        io::write_rows(file, &["statistic"], &rows)?;
    }
    Ok(())
}

fn resolve(v: AutoValue, auto: f64) -> f64 {
    match v {
        AutoValue::Auto => auto,
        AutoValue::Value(x) => x,
    }
}

fn run_standardize(cli: &Cli, a: &StandardizeArgs) -> Result<()> {
    let table = a.input.read()?;
    let mut x = table.matrix;
    if a.normal_scores {
        x = normal_scores_columns(&x);
    }
    let d = demean(&x);
    let (out, log) = if a.demean_only {
        (d, None)
    } else {
        let opts = DoubleStdOptions { max_iter: a.std.max_iter, tol: cli.tol, order: a.std.order.into() };
        let (s, log) = double_standardize(&d, &opts)?;
        (s, Some(log))
    };
    let mut buf = Vec::new();
    io::write_matrix(
        &mut buf,
        out.values(),
        table.column_names.as_deref(),
        table.row_ids.as_deref(),
        b',',
    )?;
    write_out(cli.out.as_deref(), &buf)?;
    if let (Some(p), Some(log)) = (&a.log_out, &log) {
        write_out(Some(p), &json(log)?)?;
    }
    if let Some(log) = log {
        eprintln!("double standardization: {} sweeps, max deviation {:.2e}", log.iterations, log.final_deviation);
    }
    Ok(())
}

fn run_permtest(cli: &Cli, a: &PermtestArgs) -> Result<()> {
    let p = prepare(&a.input, &a.std, cli)?;
    let stat = match a.stat {
        Stat::Block => PermStatistic::BlockOnV1,
        Stat::Trend => PermStatistic::TrendOnV1,
        Stat::Trace => PermStatistic::TraceB,
    };
    let opts = PermOptions {
        l: a.l,
        seed: stage_seed(cli.seed, stat.label()),
        min_block: a.min_block,
        max_block: a.max_block.min(p.x.ncols()),
        rule: if a.conservative { PValueRule::Conservative } else { PValueRule::Plain },
    };
    let t = perm_pvalue(&p.x, stat, &opts)?;
    for w in &t.warnings {
        eprintln!("warning: {w}");
    }
    write_null(a.null_out.as_deref(), &t.null_samples)?;
    emit_test(cli, &t)
}

fn run_eigenratio(cli: &Cli, a: &EigenratioArgs) -> Result<()> {
    let p = prepare(&a.input, &a.std, cli)?;
    let (m, n) = (p.x.nrows(), p.x.ncols());
    let observed = eigenratio(&spectral(&p.x, RANK_TOL)?)?;
    let model = match a.null {
        EigenNull::Wishart => NullModel::Wishart { df: resolve(a.df, p.report.m_tilde), centered: !a.uncentered },
        EigenNull::Blocks => {
            let null_m = a.null_m.min(m);
            let gamma = match a.gamma {
                AutoValue::Value(g) => g,
                AutoValue::Auto => {
                    let mut opts = CalibrationOptions::new(p.report.alpha(), null_m, n, a.blocks);
                    opts.reps = 4;
                    opts.seed = stage_seed(cli.seed, "calibration");
                    let c = calibrate_gamma(&opts)?;
                    eprintln!("calibrated gamma = {:.4} (alpha {:.4})", c.gamma, c.achieved_alpha);
                    c.gamma
                }
            };
            let spec = SimulationSpec::new(null_m, n).with_sigma(SigmaModel::Block { num_blocks: a.blocks, gamma });
            NullModel::CorrelatedRows { spec }
        }
    };
    let label = model.label();
    let t = colindep::normal::eigenratio_test(observed, &model, a.reps, n, stage_seed(cli.seed, label))?;
    write_null(a.null_out.as_deref(), &t.null_samples)?;
    emit_test(cli, &t)
}

fn run_bilinear(cli: &Cli, a: &BilinearArgs) -> Result<()> {
    let Some(groups) = a.groups.read()? else {
        bail!(Error::InvalidInput("the bilinear test needs --groups or --groups-file".into()));
    };
    let p = prepare(&a.input, &a.std, cli)?;
    groups.check_columns(p.x.ncols())?;
    let w = two_sample_w_for_labels(&groups.labels)?;
    let r = bilinear_test(&p.x, &w, resolve(a.mtilde, p.report.m_tilde))?;
    let bytes = match cli.format {
        OutputFormat::Json => json(&r)?,
        OutputFormat::Text => format!(
            "bilinear_tau_sq {} {}\ntau_hat {}  cv {:.4}  standardized distance {:.3}\n",
            r.tau_hat_sq, r.p_value, r.tau_hat, r.cv, r.std_distance
        )
        .into_bytes(),
    };
    write_out(cli.out.as_deref(), &bytes)
}

fn run_fdr(cli: &Cli, a: &FdrArgs) -> Result<()> {
    let p = prepare(&a.input, &a.std, cli)?;
    let m_tilde = resolve(a.mtilde, p.report.m_tilde);
    let null = match a.null {
        FdrNull::Corr => ScanNull::correlation_df(m_tilde, p.x.ncols()),
        FdrNull::Gauss => ScanNull::Gaussian { mu: p.report.mu_hat, sd: p.report.alpha_hat },
    };
    let tail = if a.two_sided { Tail::TwoSided } else { Tail::Upper };
    let report = scan_column_pairs(&p.x, null, a.q, tail)?;
    if let Some(path) = &a.hist_out {
        let bins = correlation_histogram(&report, a.bins)?;
        write_histogram_csv(&bins, fs::File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
    }
    let bytes = match cli.format {
        OutputFormat::Json => json(&report)?,
        OutputFormat::Text => {
            let mut s = format!(
                "fdr_scan {} discoveries of {} pairs, threshold r {}\n",
                report.discoveries,
                report.pairs.len(),
                report.threshold_r.map_or("-".into(), |r| format!("{r:.4}"))
            );
            for pr in report.significant_pairs() {
                s.push_str(&format!("{} {} {} {}\n", pr.j + 1, pr.k + 1, pr.r, pr.p));
            }
            s.into_bytes()
        }
    };
    write_out(cli.out.as_deref(), &bytes)
}

fn run_simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    if a.reps == 0 {
        bail!(Error::InvalidInput("reps must be positive".into()));
    }
    let (header, rows, first): (Vec<&str>, Vec<Vec<f64>>, DMatrix<f64>) = match a.model {
        Model::Wishart => {
            let df = a.df.unwrap_or(a.m as f64);
            let sampler = WishartSampler::extended(df, &DMatrix::identity(a.n, a.n))?;
            let draws = exec::map_indices(a.reps, |r| sampler.sample(&mut exec::substream(cli.seed, r as u64)));
            let rows = draws
                .iter()
                .enumerate()
                .map(|(r, w)| {
                    let n = w.nrows();
                    let off: Vec<f64> =
                        (0..n).flat_map(|j| (0..n).filter(move |&k| k != j).map(move |k| (j, k))).map(|(j, k)| w[(j, k)]).collect();
                    let (_, var) = colindep::matrix::mean_var(off);
                    vec![r as f64, eigenratio_of_matrix(w), w.trace() / n as f64, var]
                })
                .collect();
            (vec!["replicate", "eigenratio", "mean_diagonal", "offdiag_var"], rows, draws[0].clone())
        }
        Model::Blocks | Model::Spiked => {
            let mut spec = SimulationSpec::new(a.m, a.n);
            if a.model == Model::Blocks {
                spec = spec.with_sigma(SigmaModel::Block { num_blocks: a.blocks, gamma: a.gamma });
            } else {
                let beta = vec![1.0 / (a.n as f64).sqrt(); a.n];
                spec = spec.with_delta(DeltaModel::Spiked { lambda: a.lambda, beta });
            }
            spec.validate()?;
            let opts = DoubleStdOptions { tol: cli.tol, ..Default::default() };
            let results = exec::try_map_indices(a.reps, |r| {
                let x = sample_matrix_normal_with(&spec, &mut exec::substream(cli.seed, r as u64))?;
                let (xs, _) = double_standardize(&demean(&x), &opts)?;
                let s = spectral(&xs, RANK_TOL)?;
                let rep = correlation_report(
                    &xs,
                    &s,
                    &ReportOptions { row_pairs: 0, ..Default::default() },
                )?;
                Ok::<_, Error>((vec![r as f64, eigenratio(&s)?, rep.c2, rep.alpha_hat, rep.m_tilde], x))
            })?;
            let first = results[0].1.values().clone();
            let rows = results.into_iter().map(|(row, _)| row).collect();
            (vec!["replicate", "eigenratio", "c2", "alpha_hat", "m_tilde"], rows, first)
        }
    };
    let mut buf = Vec::new();
    io::write_rows(&mut buf, &header, &rows)?;
    write_out(cli.out.as_deref(), &buf)?;
    if let Some(path) = &a.matrix_out {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        io::write_matrix(file, &first, None, None, b',')?;
    }
    Ok(())
}

fn run_audit(cli: &Cli, a: &AuditArgs) -> Result<()> {
    let table = a.input.read()?;
    let config = AuditConfig {
        seed: cli.seed,
        permutations: a.l,
        eigenratio_reps: a.reps,
        q: a.q,
        tol: cli.tol,
        max_iter: a.max_iter,
        order: a.order.into(),
        min_block: a.min_block,
        max_block: a.max_block,
        rule: if a.conservative { PValueRule::Conservative } else { PValueRule::Plain },
        null_m_cap: a.null_m_cap,
        calibration_reps: a.calibration_reps,
        scan_null: match a.scan_null {
            FdrNull::Corr => ScanNullKind::Corr,
            FdrNull::Gauss => ScanNullKind::Gauss,
        },
        groups: a.groups.read()?,
        bilinear: a.bilinear,
        ..Default::default()
    };
    let mut report = audit::audit(&table.matrix, &config)?;
    if a.omit_timings {
        report = report.without_timings();
    }
    if let (Some(path), Some(outliers)) = (&a.hist_out, &report.outliers) {
        let bins = correlation_histogram(outliers, 40)?;
        write_histogram_csv(&bins, fs::File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
    }
    let format = match cli.format {
        OutputFormat::Json => audit::Format::Json,
        OutputFormat::Text => audit::Format::Text,
    };
    write_out(cli.out.as_deref(), &audit::emit(&report, format)?)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Standardize(a) => run_standardize(cli, a),
        Command::Permtest(a) => run_permtest(cli, a),
        Command::EigenratioTest(a) => run_eigenratio(cli, a),
        Command::Bilinear(a) => run_bilinear(cli, a),
        Command::FdrScan(a) => run_fdr(cli, a),
        Command::Simulate(a) => run_simulate(cli, a),
        Command::Audit(a) => run_audit(cli, a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(t) if t > 0 => {
                if let Err(e) = exec::configure_threads(t) {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got {v:?}");
                return ExitCode::from(1);
            }
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
