//! Command-line front end. `run` parses arguments, executes one subcommand
//! and returns the process exit code:
//! 0 ok, 1 usage, 2 validation or I/O, 3 numerical failure.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::check;
use crate::criteria::{list_appendix, Compiled, CriterionError, CriterionSpec, Representation, ROUNDING_REL};
use crate::fields::{FieldError, FieldModel};
use crate::kernel::{apply_ordering, build_kernel_with, KernelError, KernelMethod, COLUMN_TOLERANCE};
use crate::pmf::{load_counts, to_json, Arm, Format, JointPmf, PmfError};
use crate::quantify::{KernelCache, NcResult, NuValue, QuantError, QuantOptions, Quantifier};
use crate::scan::{bootstrap_errors, run_scan_with, BootstrapTarget, GridFamily, MinBallFamily, ScanConfig, ScanError, ScanOptions};

#[derive(Debug, Parser)]
#[command(name = "ncprob", version, about = "Non-classicality criteria and depths for bipartite photon-number distributions")]
pub struct Cli {
    /// Worker threads; 1 gives bit-stable single-threaded runs [default: available parallelism]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic field and write it as histogram JSON
    Gen(GenArgs),
    /// Evaluate criteria at the origin
    Eval(EvalArgs),
    /// Non-classicality depth tau, one CSV row per criterion
    Depth(QuantCmdArgs),
    /// Non-classicality counting parameter nu, one CSV row per criterion
    Nccp(QuantCmdArgs),
    /// Map depths over a family of criteria
    Scan(ScanArgs),
    /// Apply the ordering transform or dump its kernel
    Transform(TransformArgs),
    /// Run the built-in property suites
    Check(CheckArgs),
    /// Print every default tolerance as JSON
    Defaults,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Ideal twin beam, keys B (mean pairs) and Mp (modes)
    #[arg(long, num_args = 1.., value_name = "KEY=VAL", group = "model")]
    pub ideal_twin: Option<Vec<String>>,
    /// Coherent product, keys mu_s and mu_i
    #[arg(long, num_args = 1.., value_name = "KEY=VAL", group = "model")]
    pub coherent: Option<Vec<String>>,
    /// Thermal product, keys mean_s, M_s, mean_i, M_i
    #[arg(long, num_args = 1.., value_name = "KEY=VAL", group = "model")]
    pub thermal: Option<Vec<String>>,
    /// Twin beam plus noise, keys B, Mp, n_s, M_s, n_i, M_i
    #[arg(long, num_args = 1.., value_name = "KEY=VAL", group = "model")]
    pub noisy_twin: Option<Vec<String>>,
    /// Cutoff for both arms [default: mean + 10 sd, grown until the tail is below 1e-13]
    #[arg(long)]
    pub cutoff: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Histogram in JSON triples or CSV
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Input format [default: from the file extension]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct CriteriaArgs {
    /// Criterion names such as `E:2,1,1`, `CS:N=1,1;L=2,0` or `A:E101` (repeatable)
    #[arg(long = "criterion", value_name = "NAME")]
    pub criteria: Vec<String>,
    /// Add the 32 appendix criteria
    #[arg(long)]
    pub appendix: bool,
    /// Use the moment form instead of the probability form
    #[arg(long)]
    pub moment: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub criteria: CriteriaArgs,
    /// Statistical threshold below which a value counts as negative
    #[arg(long, default_value_t = 0.0)]
    pub eps_stat: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Recurrence,
    HighPrecision,
}

#[derive(Debug, Args)]
pub struct QuantArgs {
    /// Mode count M of the ordering transform
    #[arg(long)]
    pub modes: f64,
    /// Coarse grid points over (-1+delta, 1]
    #[arg(long, default_value_t = 33)]
    pub grid_points: usize,
    /// Lowest grid point sits at -1 + delta
    #[arg(long, default_value_t = 1e-3)]
    pub s_floor_delta: f64,
    /// Width of the final s bracket
    #[arg(long, default_value_t = 1e-4)]
    pub s_width: f64,
    /// First trial noise
    #[arg(long, default_value_t = 1e-3)]
    pub nu_start: f64,
    /// Noise beyond which nu is reported unbounded
    #[arg(long, default_value_t = 1e3)]
    pub nu_cap: f64,
    /// Relative width of the final nu bracket
    #[arg(long, default_value_t = 1e-4)]
    pub nu_rel_width: f64,
    /// Statistical threshold below which a value counts as negative
    #[arg(long, default_value_t = 0.0)]
    pub eps_stat: f64,
    #[arg(long, value_enum, default_value = "recurrence")]
    pub kernel_method: MethodArg,
}

impl QuantArgs {
    fn options(&self) -> QuantOptions {
        QuantOptions {
            grid_points: self.grid_points,
            s_floor_delta: self.s_floor_delta,
            s_width: self.s_width,
            nu_start: self.nu_start,
            nu_cap: self.nu_cap,
            nu_rel_width: self.nu_rel_width,
            eps_stat: self.eps_stat,
            method: match self.kernel_method {
                MethodArg::Recurrence => KernelMethod::Recurrence,
                MethodArg::HighPrecision => KernelMethod::HighPrecision,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct QuantCmdArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub criteria: CriteriaArgs,
    #[command(flatten)]
    pub quant: QuantArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    Grid,
    Touching,
    Local,
    IndexSum,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    /// E(n_s, n_i, l) over (n_s, n_i)
    E3,
    /// second three-variable system, m = 1
    Dsys2,
    /// four-variable system, m = 1
    Dsys3,
    /// three-variable minimum-type criteria
    Minball3,
    /// four-variable minimum-type criteria
    Minball4,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ArmArg {
    S,
    I,
}

impl From<ArmArg> for Arm {
    fn from(a: ArmArg) -> Arm {
        match a {
            ArmArg::S => Arm::Signal,
            ArmArg::I => Arm::Idler,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub quant: QuantArgs,
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    /// Family for grid and index-sum scans
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Third index of the E3 grid
    #[arg(long, default_value_t = 1)]
    pub l: u32,
    #[arg(long, value_enum, default_value = "s")]
    pub arm: ArmArg,
    /// Row range `a..=b` (or `a..b` inclusive of b) of grid and local scans
    #[arg(long, value_parser = parse_range)]
    pub rows: Option<RangeInclusive<u32>>,
    #[arg(long, value_parser = parse_range)]
    pub cols: Option<RangeInclusive<u32>>,
    /// Largest index component of touching scans
    #[arg(long)]
    pub max_index: Option<u32>,
    /// Neighborhood radius of local scans
    #[arg(long, default_value_t = 1)]
    pub d: u32,
    /// Index-sum range
    #[arg(long, value_parser = parse_range)]
    pub sums: Option<RangeInclusive<u32>>,
    /// Also compute nu per cell
    #[arg(long)]
    pub with_nu: bool,
    /// Bootstrap resamples of the raw counts (at least 100)
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Histogram to transform; omit with --dump-kernel
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Ordering parameter in (-1, 1]
    #[arg(long, allow_negative_numbers = true)]
    pub s: f64,
    #[arg(long)]
    pub modes: f64,
    /// Write the kernel as `n,m,value` rows instead
    #[arg(long)]
    pub dump_kernel: bool,
    /// Largest input photon number of the dumped kernel
    #[arg(long, default_value_t = 20)]
    pub n_in: u32,
    #[arg(long, value_enum, default_value = "recurrence")]
    pub kernel_method: MethodArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Seed of the random distributions in the duality and identity suites
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}

fn parse_range(s: &str) -> Result<RangeInclusive<u32>, String> {
    let parts: Vec<&str> = if s.contains("..=") { s.split("..=").collect() } else { s.split("..").collect() };
    match parts.as_slice() {
        [a] => a.trim().parse::<u32>().map(|x| x..=x).map_err(|e| e.to_string()),
        [a, b] => {
            let a = a.trim().parse::<u32>().map_err(|e| e.to_string())?;
            let b = b.trim().parse::<u32>().map_err(|e| e.to_string())?;
            if a > b {
                return Err(format!("empty range {a}..{b}"));
            }
            Ok(a..=b)
        }
        _ => Err(format!("expected a..b, got {s}")),
    }
}

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<PmfError> for CliError {
    fn from(e: PmfError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CriterionError> for CliError {
    fn from(e: CriterionError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::PrecisionEscalation { .. } | KernelError::TooManyRows { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<QuantError> for CliError {
    fn from(e: QuantError) -> Self {
        match e {
            QuantError::Criterion(c) => c.into(),
            QuantError::Kernel(k) => k.into(),
            QuantError::InvalidOption(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ScanError> for CliError {
    fn from(e: ScanError) -> Self {
        match e {
            ScanError::Quant(q) => q.into(),
            ScanError::Criterion(c) => c.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let mut buf = Vec::new();
    let result = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli.command, &mut buf)),
            Err(e) => Err(CliError::Validation(format!("thread pool: {e}"))),
        },
        None => execute(&cli.command, &mut buf),
    };
    if out.write_all(&buf).and_then(|_| out.flush()).is_err() {
        let _ = writeln!(err, "error: cannot write to stdout");
        return 2;
    }
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

fn execute(cmd: &Command, out: &mut Vec<u8>) -> Result<i32, CliError> {
    match cmd {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Depth(a) => cmd_quant(a, false, out),
        Command::Nccp(a) => cmd_quant(a, true, out),
        Command::Scan(a) => cmd_scan(a, out),
        Command::Transform(a) => cmd_transform(a, out),
        Command::Check(a) => {
            let lines = check::run_all(a.seed);
            emit(None, out, check::render(&lines).as_bytes())?;
            Ok(if lines.iter().all(|l| l.passed) { 0 } else { 3 })
        }
        Command::Defaults => {
            let text = serde_json::to_string_pretty(&defaults()).expect("plain JSON");
            emit(None, out, format!("{text}\n").as_bytes())?;
            Ok(0)
        }
    }
}

/// Every tunable default in one JSON document.
pub fn defaults() -> serde_json::Value {
    let q = QuantOptions::default();
    json!({
        "quantify": q,
        "kernel_method": "recurrence",
        "kernel_column_tolerance": COLUMN_TOLERANCE,
        "rounding_relative": ROUNDING_REL,
        "generator_cutoff": "mean + 10 sd per arm, doubled until the tail is below 1e-13",
        "bootstrap_min_resamples": 100,
        "check_seed": 2024,
        "threads": "available parallelism",
    })
}

fn emit(path: Option<&Path>, out: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| io_err(p, e)),
        None => out.write_all(bytes).map_err(|e| CliError::Validation(format!("stdout: {e}"))),
    }
}

fn key_values(items: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut map = BTreeMap::new();
    for it in items {
        let (k, v) = it.split_once('=').ok_or_else(|| CliError::Usage(format!("expected KEY=VAL, got '{it}'")))?;
        let v: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("'{v}' is not a number in '{it}'")))?;
        map.insert(k.trim().to_string(), v);
    }
    Ok(map)
}

fn take(map: &mut BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64, CliError> {
    match (map.remove(key), default) {
        (Some(v), _) => Ok(v),
        (None, Some(d)) => Ok(d),
        (None, None) => Err(CliError::Usage(format!("missing key {key}"))),
    }
}

fn field_model(a: &GenArgs) -> Result<FieldModel, CliError> {
    let (items, kind) = if let Some(v) = &a.ideal_twin {
        (v, 0)
    } else if let Some(v) = &a.coherent {
        (v, 1)
    } else if let Some(v) = &a.thermal {
        (v, 2)
    } else if let Some(v) = &a.noisy_twin {
        (v, 3)
    } else {
        return Err(CliError::Usage("choose one of --ideal-twin, --coherent, --thermal, --noisy-twin".into()));
    };
    let mut m = key_values(items)?;
    let model = match kind {
        0 => FieldModel::IdealTwin { pairs: take(&mut m, "B", None)?, modes: take(&mut m, "Mp", Some(1.0))? },
        1 => FieldModel::CoherentProduct { mu_s: take(&mut m, "mu_s", None)?, mu_i: take(&mut m, "mu_i", None)? },
        2 => FieldModel::ThermalProduct {
            mean_s: take(&mut m, "mean_s", None)?,
            modes_s: take(&mut m, "M_s", Some(1.0))?,
            mean_i: take(&mut m, "mean_i", None)?,
            modes_i: take(&mut m, "M_i", Some(1.0))?,
        },
        _ => FieldModel::NoisyTwin {
            pairs: take(&mut m, "B", None)?,
            modes: take(&mut m, "Mp", Some(1.0))?,
            noise_s: (take(&mut m, "n_s", Some(0.0))?, take(&mut m, "M_s", Some(1.0))?),
            noise_i: (take(&mut m, "n_i", Some(0.0))?, take(&mut m, "M_i", Some(1.0))?),
        },
    };
    if let Some(k) = m.keys().next() {
        return Err(CliError::Usage(format!("unknown key {k}")));
    }
    Ok(model)
}

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let pmf = field_model(a)?.generate(a.cutoff)?;
    emit(a.out.as_deref(), out, format!("{}\n", to_json(&pmf)).as_bytes())?;
    Ok(0)
}

fn format_of(path: &Path, arg: Option<FormatArg>) -> Result<Format, CliError> {
    match arg {
        Some(FormatArg::Json) => Ok(Format::Json),
        Some(FormatArg::Csv) => Ok(Format::Csv),
        None => Format::from_path(path)
            .ok_or_else(|| CliError::Usage(format!("{}: unknown extension, pass --format json|csv", path.display()))),
    }
}

fn load(path: &Path, arg: Option<FormatArg>) -> Result<crate::pmf::Histogram, CliError> {
    let format = format_of(path, arg)?;
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    load_counts(BufReader::new(file), format).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn specs(a: &CriteriaArgs) -> Result<Vec<CriterionSpec>, CliError> {
    let mut v = Vec::new();
    for name in &a.criteria {
        v.push(name.parse::<CriterionSpec>()?);
    }
    if a.appendix {
        v.extend(list_appendix());
    }
    if v.is_empty() {
        return Err(CliError::Usage("no criterion given; use --criterion or --appendix".into()));
    }
    if a.moment {
        v = v.into_iter().map(|s| s.with_representation(Representation::Moment)).collect();
    }
    Ok(v)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory writer")
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn moment_order(c: &Compiled) -> u32 {
    let (a, b) = c.max_index();
    a + b
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let pmf = load(&a.input.input, a.input.format)?.to_pmf();
    let mut w = csv_writer();
    w.write_record(["criterion", "representation", "value", "scale", "verdict"]).expect("in-memory");
    for spec in specs(&a.criteria)? {
        let c = Compiled::new(&spec)?;
        let v = match spec.representation() {
            Representation::Probability => c.eval_pmf(&pmf)?,
            Representation::Moment => c.eval_moments(&pmf.modified_moments(moment_order(&c))?)?,
        };
        let verdict = if v.indicates(a.eps_stat) {
            "nonclassical"
        } else if v.is_boundary() {
            "classical boundary"
        } else {
            "not violated"
        };
        let repr = match spec.representation() {
            Representation::Probability => "probability",
            Representation::Moment => "moment",
        };
        w.write_record([spec.to_string(), repr.into(), fmt(v.value), fmt(v.scale), verdict.into()]).expect("in-memory");
    }
    emit(a.out.as_deref(), out, &finish(w))?;
    Ok(0)
}

fn indices(spec: &CriterionSpec) -> String {
    spec.indices().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

fn cmd_quant(a: &QuantCmdArgs, counting: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    use rayon::prelude::*;
    let pmf = load(&a.input.input, a.input.format)?.to_pmf();
    let opts = a.quant.options();
    let specs = specs(&a.criteria)?;
    let compiled = specs.iter().map(Compiled::new).collect::<Result<Vec<_>, _>>()?;
    let table_max = compiled.iter().map(|c| c.max_index().0.max(c.max_index().1)).max().unwrap_or(0);
    let cache = KernelCache::new();
    let q = Quantifier::new(&pmf, a.quant.modes, opts, &cache, table_max)?;
    let results: Vec<NcResult> = compiled
        .par_iter()
        .map(|c| if counting { q.nccp(c) } else { q.ncd(c) })
        .collect::<Result<_, QuantError>>()?;
    let mut w = csv_writer();
    if counting {
        w.write_record(["criterion", "indices", "value_at_origin", "nu", "bracket_low", "bracket_high", "evaluations", "flags"])
    } else {
        w.write_record(["criterion", "indices", "value_at_origin", "tau", "m_tau", "bracket_low", "bracket_high", "evaluations", "flags"])
    }
    .expect("in-memory");
    for r in &results {
        let mut rec = vec![r.criterion.to_string(), indices(&r.criterion), fmt(r.verdict_at_origin.value)];
        if counting {
            rec.push(match r.nu {
                Some(NuValue::Finite(v)) => fmt(v),
                Some(NuValue::Unbounded) => "unbounded".into(),
                None => String::new(),
            });
        } else {
            rec.push(r.tau.map(fmt).unwrap_or_default());
            rec.push(r.m_tau().map(fmt).unwrap_or_default());
        }
        rec.extend([fmt(r.bracket.0), fmt(r.bracket.1), r.evaluations.to_string(), r.flag_string()]);
        w.write_record(&rec).expect("in-memory");
    }
    emit(a.out.as_deref(), out, &finish(w))?;
    Ok(0)
}

fn scan_config(a: &ScanArgs) -> Result<ScanConfig, CliError> {
    let need = |r: &Option<RangeInclusive<u32>>, name: &str| r.clone().ok_or_else(|| CliError::Usage(format!("--{name} is required for this scenario")));
    let arm: Arm = a.arm.into();
    Ok(match a.scenario {
        ScenarioArg::Grid => {
            let family = match a.family {
                Some(FamilyArg::E3) | None => GridFamily::E3 { l: a.l },
                Some(FamilyArg::Dsys2) => GridFamily::Dsys2 { arm },
                Some(FamilyArg::Dsys3) => GridFamily::Dsys3,
                Some(f) => return Err(CliError::Usage(format!("family {f:?} is not a grid family"))),
            };
            ScanConfig::Grid { family, rows: need(&a.rows, "rows")?, cols: need(&a.cols, "cols")? }
        }
        ScenarioArg::Touching => ScanConfig::Touching {
            max_index: a.max_index.ok_or_else(|| CliError::Usage("--max-index is required for touching scans".into()))?,
        },
        ScenarioArg::Local => ScanConfig::Local { d: a.d, rows: need(&a.rows, "rows")?, cols: need(&a.cols, "cols")? },
        ScenarioArg::IndexSum => {
            let family = match a.family {
                Some(FamilyArg::Minball3) => MinBallFamily::Three { arm },
                Some(FamilyArg::Minball4) | None => MinBallFamily::Four,
                Some(f) => return Err(CliError::Usage(format!("family {f:?} is not an index-sum family"))),
            };
            ScanConfig::IndexSum { family, sums: need(&a.sums, "sums")? }
        }
    })
}

fn cmd_scan(a: &ScanArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let hist = load(&a.input.input, a.input.format)?;
    let pmf = hist.to_pmf();
    let config = scan_config(a)?;
    let opts = ScanOptions { quant: a.quant.options(), with_nu: a.with_nu };
    let cache = KernelCache::new();
    let mut report = run_scan_with(&config, &pmf, a.quant.modes, &opts, &cache)?;
    if let Some(r) = a.bootstrap {
        let boot = bootstrap_errors(&hist, &BootstrapTarget::Scan(config), a.quant.modes, r, a.seed, &opts)?;
        let se = report
            .rows
            .iter()
            .map(|row| boot.keys.iter().position(|k| row.idx.starts_with(k)).map(|j| boot.tau_se[j]).unwrap_or(f64::NAN))
            .collect();
        report.errors = Some(se);
    }
    emit(a.out.as_deref(), out, report.to_csv().as_bytes())?;
    Ok(0)
}

fn cmd_transform(a: &TransformArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let method = match a.kernel_method {
        MethodArg::Recurrence => KernelMethod::Recurrence,
        MethodArg::HighPrecision => KernelMethod::HighPrecision,
    };
    if a.dump_kernel {
        let k = build_kernel_with(a.s, a.modes, a.n_in, method)?;
        let mut buf = Vec::new();
        k.write_csv(&mut buf).map_err(|e| CliError::Validation(e.to_string()))?;
        emit(a.out.as_deref(), out, &buf)?;
        return Ok(0);
    }
    let path = a.input.as_ref().ok_or_else(|| CliError::Usage("transform needs --in or --dump-kernel".into()))?;
    let pmf: JointPmf = load(path, a.format)?.to_pmf();
    let table = apply_ordering(&pmf, a.s, a.modes)?;
    let mut w = csv_writer();
    w.write_record(["n_s", "n_i", "value"]).expect("in-memory");
    for n_s in 0..=table.cutoff_s {
        for n_i in 0..=table.cutoff_i {
            w.write_record([n_s.to_string(), n_i.to_string(), fmt(table.get(n_s, n_i))]).expect("in-memory");
        }
    }
    emit(a.out.as_deref(), out, &finish(w))?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("ncprob").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("2..5").unwrap(), 2..=5);
        assert_eq!(parse_range("3").unwrap(), 3..=3);
        assert!(parse_range("5..2").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_str(&["frobnicate"]).0, 1);
        assert_eq!(run_str(&["gen", "--ideal-twin", "Mp=3"]).0, 1);
        assert_eq!(run_str(&["--help"]).0, 0);
    }

    #[test]
    fn invalid_parameters_exit_two() {
        let (code, _, err) = run_str(&["gen", "--coherent", "mu_s=-1", "mu_i=1"]);
        assert_eq!(code, 2);
        assert!(err.contains("mu_s"));
    }

    #[test]
    fn defaults_is_json() {
        let (code, out, _) = run_str(&["defaults"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["quantify"]["grid_points"], 33);
    }
}
