//! The full battery: standardization, correlation summary, permutation tests,
//! eigenratio against both nulls, the two-sample bilinear statistic and the
//! correlation outlier scan, assembled into one report.
//!
//! Every stage draws from its own seed, `exec::stage_seed(seed, stage_name)`,
//! so adding or removing a stage never changes the numbers of another.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::correlation::{correlation_report, AlphaEstimator, CorrelationReport, ReportOptions};
use crate::error::{Error, Result, Warning};
use crate::exec::stage_seed;
use crate::fdr::{scan_column_pairs, OutlierReport, ScanNull, Tail};
use crate::io::Groups;
use crate::matrix::{demean, double_standardize, DataMatrix, DoubleStdOptions, StandardizationLog, SweepOrder};
use crate::normal::{
    bilinear_test, calibrate_gamma, eigenratio, eigenratio_test, two_sample_w_for_labels, BilinearResult, Calibration,
    CalibrationOptions, NullModel, SigmaModel, SimulationSpec,
};
use crate::permutation::{perm_pvalue, PValueRule, PermOptions, PermStatistic, TestResult};
use crate::spectral::{spectral, RANK_TOL};

/// Null used by the outlier scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanNullKind {
    /// Correlation of `m_tilde` independent pairs, recentered by `1/(n - 1)`.
    #[default]
    Corr,
    /// `N(mu_hat, alpha_hat^2)`.
    Gauss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub seed: u64,
    pub permutations: usize,
    pub eigenratio_reps: usize,
    pub q: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub order: SweepOrder,
    pub min_block: usize,
    pub max_block: usize,
    pub rule: PValueRule,
    pub row_pairs: usize,
    pub estimator: AlphaEstimator,
    /// Row count of the simulated correlated-rows null (capped at the data's m).
    pub null_m_cap: usize,
    pub null_blocks: usize,
    pub calibration_reps: usize,
    pub scan_null: ScanNullKind,
    pub tail: Tail,
    pub groups: Option<Groups>,
    /// Requires `groups`.
    pub bilinear: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            seed: 0,
            permutations: 2000,
            eigenratio_reps: 200,
            q: 0.1,
            tol: crate::matrix::STD_TOL,
            max_iter: crate::matrix::DEFAULT_MAX_ITER,
            order: SweepOrder::ColumnFirst,
            min_block: 2,
            max_block: 10,
            rule: PValueRule::Plain,
            row_pairs: 10_000,
            estimator: AlphaEstimator::EigenC2,
            null_m_cap: 2000,
            null_blocks: 5,
            calibration_reps: 4,
            scan_null: ScanNullKind::Corr,
            tail: Tail::Upper,
            groups: None,
            bilinear: false,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.bilinear && self.groups.is_none() {
            return Err(Error::invalid("the bilinear test needs group labels"));
        }
        if let Some(g) = &self.groups {
            g.check_columns(n)?;
        }
        if self.permutations == 0 || self.eigenratio_reps == 0 {
            return Err(Error::invalid("permutation and replicate counts must be positive"));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::invalid(format!("q must lie in (0, 1), got {}", self.q)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub m: usize,
    pub n: usize,
    pub groups: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageWarning {
    pub stage: String,
    pub warning: Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub input: InputSummary,
    pub config: AuditConfig,
    pub standardization: Option<StandardizationLog>,
    pub correlation: Option<CorrelationReport>,
    pub tests: Vec<TestResult>,
    pub calibration: Option<Calibration>,
    pub bilinear: Option<BilinearResult>,
    pub outliers: Option<OutlierReport>,
    pub warnings: Vec<StageWarning>,
    pub errors: Vec<StageError>,
    /// Wall-clock seconds per stage; not covered by the determinism guarantee.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timings: Vec<StageTiming>,
}

impl AuditReport {
    /// A report with no stage results.
    pub fn skeleton(m: usize, n: usize, config: AuditConfig) -> Self {
        AuditReport {
            tool: "colindep".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            input: InputSummary { m, n, groups: config.groups.as_ref().map(Groups::sizes) },
            config,
            standardization: None,
            correlation: None,
            tests: Vec::new(),
            calibration: None,
            bilinear: None,
            outliers: None,
            warnings: Vec::new(),
            errors: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn without_timings(mut self) -> Self {
        self.timings.clear();
        self
    }

    pub fn test(&self, method: &str) -> Option<&TestResult> {
        self.tests.iter().find(|t| t.method == method)
    }

    /// Smallest p-value across the tests that produced one.
    pub fn min_p_value(&self) -> Option<f64> {
        self.tests
            .iter()
            .map(|t| t.p_value)
            .chain(self.bilinear.as_ref().map(|b| b.p_value))
            .min_by(|a, b| a.total_cmp(b))
    }
}

struct Stages {
    report: AuditReport,
}

impl Stages {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Option<T> {
        let start = Instant::now();
        let out = f();
        self.report.timings.push(StageTiming { stage: stage.into(), seconds: start.elapsed().as_secs_f64() });
        match out {
            Ok(v) => Some(v),
            Err(e) => {
                self.report.errors.push(StageError { stage: stage.into(), message: e.to_string() });
                None
            }
        }
    }

    fn warn(&mut self, stage: &str, warnings: impl IntoIterator<Item = Warning>) {
        for w in warnings {
            self.report.warnings.push(StageWarning { stage: stage.into(), warning: w });
        }
    }

    fn push_test(&mut self, stage: &str, mut t: TestResult) {
        self.warn(stage, t.warnings.clone());
        t.null_samples = Vec::new();
        self.report.tests.push(t);
    }
}

/// Runs the battery on `x`. Configuration errors are returned; failures inside
/// a stage are recorded in the report and the remaining independent stages
/// still run.
pub fn audit(x: &DataMatrix, config: &AuditConfig) -> Result<AuditReport> {
    config.validate(x.ncols())?;
    let (m, n) = (x.nrows(), x.ncols());
    let seed = config.seed;
    let mut st = Stages { report: AuditReport::skeleton(m, n, config.clone()) };

    let demeaned = st.run("demean", || Ok(demean(x)));
    let std_opts = DoubleStdOptions { max_iter: config.max_iter, tol: config.tol, order: config.order };
    let Some((xs, log)) = demeaned.and_then(|d| st.run("double_standardize", || double_standardize(&d, &std_opts)))
    else {
        return Ok(st.report);
    };
    st.report.standardization = Some(log);

    let Some(spec) = st.run("spectral", || spectral(&xs, RANK_TOL)) else {
        return Ok(st.report);
    };
    let report_opts = ReportOptions {
        row_pairs: config.row_pairs,
        seed: stage_seed(seed, "correlation"),
        estimator: config.estimator,
    };
    let corr = st.run("correlation", || correlation_report(&xs, &spec, &report_opts));
    if let Some(c) = &corr {
        st.warn("correlation", c.warnings());
    }
    st.report.correlation = corr.clone();

    for stat in [PermStatistic::BlockOnV1, PermStatistic::TrendOnV1, PermStatistic::TraceB] {
        let label = stat.label();
        let opts = PermOptions {
            l: config.permutations,
            seed: stage_seed(seed, label),
            min_block: config.min_block,
            max_block: config.max_block.min(n),
            rule: config.rule,
        };
        if let Some(t) = st.run(label, || perm_pvalue(&xs, stat, &opts)) {
            st.push_test(label, t);
        }
    }

    let observed = st.run("eigenratio", || eigenratio(&spec));
    if let (Some(s), Some(c)) = (observed, &corr) {
        let wishart = NullModel::Wishart { df: c.m_tilde, centered: true };
        let label = wishart.label();
        if let Some(t) = st.run(label, || eigenratio_test(s, &wishart, config.eigenratio_reps, n, stage_seed(seed, label))) {
            st.push_test(label, t);
        }

        let null_m = m.min(config.null_m_cap).max(2);
        let alpha = c.alpha();
        let calibration = st.run("calibration", || {
            let mut opts = CalibrationOptions::new(alpha, null_m, n, config.null_blocks.min(null_m));
            opts.reps = config.calibration_reps;
            opts.pairs = config.row_pairs;
            opts.seed = stage_seed(seed, "calibration");
            calibrate_gamma(&opts)
        });
        st.report.calibration = calibration;
        if let Some(cal) = calibration {
            let spec = SimulationSpec::new(null_m, n)
                .with_sigma(SigmaModel::Block { num_blocks: config.null_blocks.min(null_m), gamma: cal.gamma });
            let rows = NullModel::CorrelatedRows { spec };
            let label = rows.label();
            if let Some(t) = st.run(label, || eigenratio_test(s, &rows, config.eigenratio_reps, n, stage_seed(seed, label))) {
                st.push_test(label, t);
            }
        }
    }

    if let (Some(groups), Some(c)) = (&config.groups, &corr) {
        st.report.bilinear = st.run("bilinear", || {
            let w = two_sample_w_for_labels(&groups.labels)?;
            let mut b = bilinear_test(&xs, &w, c.m_tilde)?;
            b.z_scores = Vec::new();
            Ok(b)
        });
    }

    if let Some(c) = &corr {
        let null = match config.scan_null {
            ScanNullKind::Corr => ScanNull::correlation_df(c.m_tilde, n),
            ScanNullKind::Gauss => ScanNull::Gaussian { mu: c.mu_hat, sd: c.alpha_hat },
        };
        st.report.outliers = st.run("fdr_scan", || scan_column_pairs(&xs, null, config.q, config.tail));
    }

    Ok(st.report)
}

/// Output format of [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Text,
}

/// Pretty JSON with fields in declaration order, followed by a newline.
pub fn to_json(report: &AuditReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<AuditReport> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

/// Human-readable summary with one line per test: name, statistic, p.
pub fn to_text(report: &AuditReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}  m = {}  n = {}  seed = {}", report.tool, report.version, report.input.m, report.input.n, report.seed);
    if let Some((a, b)) = report.input.groups {
        let _ = writeln!(s, "groups: {a} + {b}");
    }
    if let Some(l) = &report.standardization {
        let _ = writeln!(s, "double standardization: {} sweeps, max deviation {:.2e}", l.iterations, l.final_deviation);
    }
    if let Some(c) = &report.correlation {
        let _ = writeln!(
            s,
            "c2 = {:.6}  mu_hat = {:.4}  alpha_hat = {:.4}  alpha_corrected = {}  m_tilde = {:.2}  K = {}",
            c.c2,
            c.mu_hat,
            c.alpha_hat,
            fmt_opt(c.alpha_corrected),
            c.m_tilde,
            c.k
        );
    }
    if let Some(c) = &report.calibration {
        let _ = writeln!(s, "correlated-rows null: gamma = {:.4} (alpha {:.4})", c.gamma, c.achieved_alpha);
    }
    let _ = writeln!(s, "{:<28} {:>14} {:>10}", "test", "statistic", "p");
    for t in &report.tests {
        let _ = writeln!(s, "{:<28} {:>14.6} {:>10.4}", t.method, t.statistic, t.p_value);
    }
    if let Some(b) = &report.bilinear {
        let _ = writeln!(s, "{:<28} {:>14.6} {:>10.4}", "bilinear_tau_sq", b.tau_hat_sq, b.p_value);
    }
    if let Some(o) = &report.outliers {
        let _ = writeln!(
            s,
            "fdr scan (q = {}): {} of {} pairs significant, threshold r = {}",
            o.q,
            o.discoveries,
            o.pairs.len(),
            fmt_opt(o.threshold_r)
        );
        for p in o.significant_pairs() {
            let _ = writeln!(s, "  columns {} and {}: r = {:.4}, p = {:.3e}", p.j + 1, p.k + 1, p.r, p.p);
        }
    }
    for w in &report.warnings {
        let _ = writeln!(s, "warning [{}]: {}", w.stage, w.warning);
    }
    for e in &report.errors {
        let _ = writeln!(s, "error [{}]: {}", e.stage, e.message);
    }
    s
}

pub fn emit(report: &AuditReport, format: Format) -> Result<Vec<u8>> {
    Ok(match format {
        Format::Json => to_json(report)?.into_bytes(),
        Format::Text => to_text(report).into_bytes(),
    })
}
