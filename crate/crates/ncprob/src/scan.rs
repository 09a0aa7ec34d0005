//! Parametric scans over criterion families and bootstrap error bars.
//!
//! Each scan builds a plan (map keys and the criteria that feed each key),
//! evaluates every distinct criterion once against a shared [`Quantifier`]
//! and reduces per key to the largest depth. Cells without an admissible
//! criterion stay empty, which is different from a cell with `τ = 0`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::ops::RangeInclusive;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use thiserror::Error;

use crate::criteria::{sorted_tuples, Compiled, Criterion, CriterionError, CriterionSpec};
use crate::pmf::{Arm, Histogram, JointPmf};
use crate::quantify::{KernelCache, NcResult, NuValue, QuantError, QuantOptions, Quantifier};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Criterion(#[from] CriterionError),
    #[error("scan range {0}")]
    Range(String),
    #[error("bootstrap needs raw integer counts, got normalized or fractional input")]
    NotCounts,
    #[error("bootstrap needs at least 100 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("scan CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Grid,
    Touching,
    Local,
    IndexSum,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Grid => "grid",
            Scenario::Touching => "touching",
            Scenario::Local => "local",
            Scenario::IndexSum => "index_sum",
        }
    }

    fn parse(s: &str) -> Option<Scenario> {
        [Scenario::Grid, Scenario::Touching, Scenario::Local, Scenario::IndexSum].into_iter().find(|x| x.as_str() == s)
    }
}

/// Families mapped over a two-index grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFamily {
    /// `Ē_{n_s n_i l}` over `(n_s, n_i)`.
    E3 { l: u32 },
    /// Second three-variable system with `m = 1`, over `(k, l)`.
    Dsys2 { arm: Arm },
    /// Four-variable system with `m = 1`, over `(k, l)`.
    Dsys3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinBallFamily {
    Three { arm: Arm },
    Four,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanConfig {
    Grid { family: GridFamily, rows: RangeInclusive<u32>, cols: RangeInclusive<u32> },
    /// Cauchy–Schwarz criteria with every index component at most `max_index`.
    Touching { max_index: u32 },
    /// Matrix criteria whose `K`, `L` lie within `d` of `N = (n_s, n_i)`.
    Local { d: u32, rows: RangeInclusive<u32>, cols: RangeInclusive<u32> },
    IndexSum { family: MinBallFamily, sums: RangeInclusive<u32> },
}

impl ScanConfig {
    pub fn scenario(&self) -> Scenario {
        match self {
            ScanConfig::Grid { .. } => Scenario::Grid,
            ScanConfig::Touching { .. } => Scenario::Touching,
            ScanConfig::Local { .. } => Scenario::Local,
            ScanConfig::IndexSum { .. } => Scenario::IndexSum,
        }
    }

    pub fn family_label(&self) -> String {
        match self {
            ScanConfig::Grid { family: GridFamily::E3 { l }, .. } => format!("E3_l{l}"),
            ScanConfig::Grid { family: GridFamily::Dsys2 { arm }, .. } => format!("Dsys2_{}", arm.short()),
            ScanConfig::Grid { family: GridFamily::Dsys3, .. } => "Dsys3".into(),
            ScanConfig::Touching { .. } => "CS".into(),
            ScanConfig::Local { d, .. } => format!("M3_d{d}"),
            ScanConfig::IndexSum { family: MinBallFamily::Three { arm }, .. } => format!("DminBall3_{}", arm.short()),
            ScanConfig::IndexSum { family: MinBallFamily::Four, .. } => "DminBall4".into(),
        }
    }

    /// Map keys and, per key, the positions of the criteria feeding it.
    fn plan(&self, pmf: &JointPmf) -> Result<Plan, ScanError> {
        let mut plan = Plan::default();
        match self {
            ScanConfig::Grid { family, rows, cols } => {
                if family_needs_cutoff(*family, rows, cols) > pmf.cutoff_s().min(pmf.cutoff_i()) {
                    return Err(ScanError::Range(format!(
                        "{rows:?} x {cols:?} reads indices beyond the cutoffs ({}, {})",
                        pmf.cutoff_s(),
                        pmf.cutoff_i()
                    )));
                }
                for a in rows.clone() {
                    for b in cols.clone() {
                        let c = match *family {
                            GridFamily::E3 { l } => Criterion::E3 { ks: a, ki: b, l },
                            GridFamily::Dsys2 { arm } => Criterion::Dsys2 { arm, k: a, l: b, m: 1 },
                            GridFamily::Dsys3 => Criterion::Dsys3 { k: a, l: b, m: 1 },
                        };
                        let members = CriterionSpec::new(c).ok().map(|s| plan.intern(s)).into_iter().collect();
                        plan.keys.push((vec![a, b], members));
                    }
                }
            }
            ScanConfig::Touching { max_index } => {
                let r = *max_index;
                let mut by_cell: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
                for n0 in 0..=r {
                    for n1 in 0..=r {
                        for l0 in 0..=(2 * n0).min(r) {
                            for l1 in 0..=(2 * n1).min(r) {
                                let (r0, r1) = (2 * n0 - l0, 2 * n1 - l1);
                                if r0 > r || r1 > r || (l0, l1) >= (r0, r1) {
                                    continue;
                                }
                                let spec = CriterionSpec::cs((n0, n1), (l0, l1))?;
                                let id = plan.intern(spec);
                                for cell in [(l0, l1), (n0, n1), (r0, r1)] {
                                    by_cell.entry(cell).or_default().push(id);
                                }
                            }
                        }
                    }
                }
                for a in 0..=r {
                    for b in 0..=r {
                        let members = by_cell.remove(&(a, b)).unwrap_or_default();
                        plan.keys.push((vec![a, b], members));
                    }
                }
            }
            ScanConfig::Local { d, rows, cols } => {
                let d = *d as i64;
                for a in rows.clone() {
                    for b in cols.clone() {
                        let near: Vec<(u32, u32)> = ((a as i64 - d)..=(a as i64 + d))
                            .flat_map(|x| ((b as i64 - d)..=(b as i64 + d)).map(move |y| (x, y)))
                            .filter(|&(x, y)| x >= 0 && y >= 0)
                            .map(|(x, y)| (x as u32, y as u32))
                            .collect();
                        let mut members = Vec::new();
                        for (i, &k) in near.iter().enumerate() {
                            for &l in &near[i..] {
                                members.push(plan.intern(CriterionSpec::m3(k, l, (a, b))?));
                            }
                        }
                        plan.keys.push((vec![a, b], members));
                    }
                }
            }
            ScanConfig::IndexSum { family, sums } => {
                for sigma in sums.clone() {
                    let mut members = Vec::new();
                    for t in sorted_tuples(sigma, if matches!(family, MinBallFamily::Four) { 4 } else { 3 }) {
                        let c = match *family {
                            MinBallFamily::Three { arm } => Criterion::MinBall3 { arm, k: t[0], l: t[1], m: t[2] },
                            MinBallFamily::Four => Criterion::MinBall4 { k: t[0], l: t[1], m: t[2], n: t[3] },
                        };
                        if let Ok(s) = CriterionSpec::new(c) {
                            members.push(plan.intern(s));
                        }
                    }
                    if !members.is_empty() {
                        plan.keys.push((vec![sigma], members));
                    }
                }
            }
        }
        Ok(plan)
    }
}

fn family_needs_cutoff(family: GridFamily, rows: &RangeInclusive<u32>, cols: &RangeInclusive<u32>) -> u32 {
    let (a, b) = (*rows.end(), *cols.end());
    match family {
        GridFamily::E3 { l } => a.max(b) + l,
        GridFamily::Dsys2 { .. } | GridFamily::Dsys3 => a + 1 + b.max(1),
    }
}

#[derive(Debug, Default)]
struct Plan {
    criteria: Vec<CriterionSpec>,
    index: BTreeMap<CriterionSpec, usize>,
    keys: Vec<(Vec<u32>, Vec<usize>)>,
}

impl Plan {
    fn intern(&mut self, spec: CriterionSpec) -> usize {
        if let Some(&i) = self.index.get(&spec) {
            return i;
        }
        self.criteria.push(spec.clone());
        self.index.insert(spec, self.criteria.len() - 1);
        self.criteria.len() - 1
    }
}

#[derive(Debug, Clone)]
#[derive(Default)]
pub struct ScanOptions {
    pub quant: QuantOptions,
    /// Also compute the counting parameter of the best criterion per cell.
    pub with_nu: bool,
}


/// One line of the long-form report.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub idx: Vec<u32>,
    pub value: Option<f64>,
    pub tau: Option<f64>,
    pub nu: Option<NuValue>,
    pub flag: String,
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub scenario: Scenario,
    pub family: String,
    pub rows: Vec<ScanRow>,
    /// Attaining result per row; empty after loading from CSV.
    pub results: Vec<Option<NcResult>>,
    /// Bootstrap standard error of `τ` per row.
    pub errors: Option<Vec<f64>>,
}

impl ScanReport {
    /// Row with the largest depth; ties keep the first row.
    pub fn max_row(&self) -> Option<&ScanRow> {
        let mut best: Option<&ScanRow> = None;
        for r in &self.rows {
            if let Some(t) = r.tau {
                if best.is_none_or(|b| t > b.tau.unwrap()) {
                    best = Some(r);
                }
            }
        }
        best
    }

    pub fn max_result(&self) -> Option<&NcResult> {
        let row = self.max_row()?;
        let i = self.rows.iter().position(|r| std::ptr::eq(r, row))?;
        self.results.get(i)?.as_ref()
    }

    /// Row by key; for index-sum scans the key is the sum alone.
    pub fn get(&self, idx: &[u32]) -> Option<&ScanRow> {
        self.rows.iter().find(|r| r.idx.starts_with(idx) && (r.idx.len() == idx.len() || self.scenario == Scenario::IndexSum))
    }

    pub fn to_csv(&self) -> String {
        let width = self.rows.iter().map(|r| r.idx.len()).max().unwrap_or(0);
        let mut out = String::from("scenario,family");
        for j in 0..width {
            let _ = write!(out, ",idx{}", j + 1);
        }
        out.push_str(",value,tau,nu,flag");
        if self.errors.is_some() {
            out.push_str(",tau_se");
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for (i, r) in self.rows.iter().enumerate() {
            let _ = write!(out, "{},{}", self.scenario.as_str(), self.family);
            for j in 0..width {
                out.push(',');
                if let Some(x) = r.idx.get(j) {
                    let _ = write!(out, "{x}");
                }
            }
            let nu = match r.nu {
                None => String::new(),
                Some(NuValue::Finite(v)) => format!("{v:?}"),
                Some(NuValue::Unbounded) => "unbounded".into(),
            };
            let _ = write!(out, ",{},{},{},{}", opt(r.value), opt(r.tau), nu, r.flag);
            if let Some(e) = &self.errors {
                let _ = write!(out, ",{:?}", e[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn from_csv(mut r: impl Read) -> Result<ScanReport, ScanError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let err = |line: usize, message: String| ScanError::Csv { line, message };
        let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
        let has_se = headers.iter().next_back() == Some("tau_se");
        let width = headers.iter().filter(|h| h.starts_with("idx")).count();
        if headers.get(0) != Some("scenario") || headers.get(1) != Some("family") || headers.len() != width + 6 + has_se as usize {
            return Err(err(1, "unexpected header".into()));
        }
        let mut rows = Vec::new();
        let mut errors = Vec::new();
        let mut scenario = None;
        let mut family = String::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| err(line, e.to_string()))?;
            let sc = Scenario::parse(&rec[0]).ok_or_else(|| err(line, format!("unknown scenario '{}'", &rec[0])))?;
            scenario = Some(sc);
            family = rec[1].to_string();
            let num = |s: &str| -> Result<Option<f64>, ScanError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>().map(Some).map_err(|_| err(line, format!("'{s}' is not a number")))
                }
            };
            let mut idx = Vec::new();
            for j in 0..width {
                let s = &rec[2 + j];
                if !s.is_empty() {
                    idx.push(s.parse::<u32>().map_err(|_| err(line, format!("bad index '{s}'")))?);
                }
            }
            let k = 2 + width;
            let nu = match &rec[k + 2] {
                "" => None,
                "unbounded" => Some(NuValue::Unbounded),
                s => Some(NuValue::Finite(num(s)?.unwrap())),
            };
            rows.push(ScanRow { idx, value: num(&rec[k])?, tau: num(&rec[k + 1])?, nu, flag: rec[k + 3].to_string() });
            if has_se {
                errors.push(num(&rec[k + 4])?.unwrap_or(f64::NAN));
            }
        }
        let scenario = scenario.ok_or_else(|| err(2, "no rows".into()))?;
        let n = rows.len();
        Ok(ScanReport { scenario, family, rows, results: vec![None; n], errors: has_se.then_some(errors) })
    }
}

/// Orders results by depth, breaking ties towards the more negative value.
fn better(a: &NcResult, b: &NcResult) -> bool {
    let (ta, tb) = (a.tau.unwrap_or(0.0), b.tau.unwrap_or(0.0));
    ta > tb || (ta == tb && a.verdict_at_origin.value < b.verdict_at_origin.value)
}

/// Runs a scan with an explicit kernel cache.
pub fn run_scan_with(config: &ScanConfig, pmf: &JointPmf, modes: f64, opts: &ScanOptions, cache: &KernelCache) -> Result<ScanReport, ScanError> {
    let plan = config.plan(pmf)?;
    let compiled: Vec<Compiled> = plan.criteria.iter().map(Compiled::new).collect::<Result<_, _>>()?;
    let table_max = compiled.iter().map(|c| c.max_index().0.max(c.max_index().1)).max().unwrap_or(0);
    let q = Quantifier::new(pmf, modes, opts.quant.clone(), cache, table_max)?;
    let results: Vec<NcResult> = compiled.par_iter().map(|c| q.ncd(c)).collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(plan.keys.len());
    let mut best_results = Vec::with_capacity(plan.keys.len());
    for (key, members) in &plan.keys {
        let best = members.iter().map(|&i| &results[i]).fold(None::<&NcResult>, |acc, r| match acc {
            Some(a) if !better(r, a) => Some(a),
            _ => Some(r),
        });
        let mut idx = key.clone();
        let row = match best {
            None => ScanRow { idx, value: None, tau: None, nu: None, flag: String::new() },
            Some(r) => {
                if config.scenario() == Scenario::IndexSum {
                    idx.extend(r.criterion.indices());
                }
                let nu = if opts.with_nu {
                    let c = Compiled::new(&r.criterion)?;
                    q.nccp(&c)?.nu
                } else {
                    None
                };
                ScanRow { idx, value: Some(r.verdict_at_origin.value), tau: r.tau, nu, flag: r.flag_string() }
            }
        };
        rows.push(row);
        best_results.push(best.cloned());
    }
    Ok(ScanReport { scenario: config.scenario(), family: config.family_label(), rows, results: best_results, errors: None })
}

pub fn run_scan(config: &ScanConfig, pmf: &JointPmf, modes: f64, opts: &ScanOptions) -> Result<ScanReport, ScanError> {
    run_scan_with(config, pmf, modes, opts, KernelCache::global())
}

/// Depth map of a grid family over `rows × cols`.
pub fn scan_grid(family: GridFamily, pmf: &JointPmf, modes: f64, rows: RangeInclusive<u32>, cols: RangeInclusive<u32>) -> Result<ScanReport, ScanError> {
    run_scan(&ScanConfig::Grid { family, rows, cols }, pmf, modes, &ScanOptions::default())
}

/// Largest Cauchy–Schwarz depth among criteria touching each cell.
pub fn scan_touching(pmf: &JointPmf, modes: f64, max_index: u32) -> Result<ScanReport, ScanError> {
    run_scan(&ScanConfig::Touching { max_index }, pmf, modes, &ScanOptions::default())
}

/// Largest matrix-criterion depth within radius `d` of each cell.
pub fn scan_local(pmf: &JointPmf, modes: f64, d: u32, rows: RangeInclusive<u32>, cols: RangeInclusive<u32>) -> Result<ScanReport, ScanError> {
    run_scan(&ScanConfig::Local { d, rows, cols }, pmf, modes, &ScanOptions::default())
}

/// Largest minimum-type depth per index sum, with the attaining tuple.
pub fn scan_index_sum(family: MinBallFamily, pmf: &JointPmf, modes: f64, sums: RangeInclusive<u32>) -> Result<ScanReport, ScanError> {
    run_scan(&ScanConfig::IndexSum { family, sums }, pmf, modes, &ScanOptions::default())
}

// ---------------------------------------------------------------------------
// bootstrap

#[derive(Debug, Clone)]
pub enum BootstrapTarget {
    Criterion(CriterionSpec),
    Scan(ScanConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReport {
    /// Map keys (the criterion itself has the empty key).
    pub keys: Vec<Vec<u32>>,
    pub value_se: Vec<f64>,
    pub tau_se: Vec<f64>,
    pub resamples: usize,
}

/// Multinomial resample of the histogram by conditional binomial draws.
pub fn resample(hist: &Histogram, rng: &mut ChaCha8Rng) -> Histogram {
    let counts = hist.counts();
    let mut left = hist.total().round() as u64;
    let mut mass_left: f64 = counts.iter().sum();
    let mut out = vec![0.0; counts.len()];
    for (o, &c) in out.iter_mut().zip(counts) {
        if left == 0 || c == 0.0 {
            mass_left -= c;
            continue;
        }
        let p = (c / mass_left).clamp(0.0, 1.0);
        let x = Binomial::new(left, p).expect("valid binomial").sample(rng);
        *o = x as f64;
        left -= x;
        mass_left -= c;
    }
    Histogram::new(hist.cutoff_s(), hist.cutoff_i(), out).expect("resample keeps shape")
}

fn std_dev(xs: &[f64]) -> f64 {
    let v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.len() < 2 {
        return f64::NAN;
    }
    if v.iter().all(|&x| x == v[0]) {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Standard errors of criterion values and depths across `resamples`
/// multinomial resamples of the raw counts.
pub fn bootstrap_errors(
    hist: &Histogram,
    target: &BootstrapTarget,
    modes: f64,
    resamples: usize,
    seed: u64,
    opts: &ScanOptions,
) -> Result<BootstrapReport, ScanError> {
    if resamples < 100 {
        return Err(ScanError::TooFewResamples(resamples));
    }
    if !hist.is_integral() {
        return Err(ScanError::NotCounts);
    }
    let base = hist.to_pmf();
    let keys: Vec<Vec<u32>> = match target {
        BootstrapTarget::Criterion(_) => vec![Vec::new()],
        BootstrapTarget::Scan(cfg) => cfg.plan(&base)?.keys.into_iter().map(|(k, _)| k).collect(),
    };
    let cache = KernelCache::new();
    let samples: Vec<Vec<(f64, f64)>> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let pmf = resample(hist, &mut rng).to_pmf();
            match target {
                BootstrapTarget::Criterion(spec) => {
                    let c = Compiled::new(spec)?;
                    let (a, b) = c.max_index();
                    let q = Quantifier::new(&pmf, modes, opts.quant.clone(), &cache, a.max(b))?;
                    Ok(vec![match q.ncd(&c) {
                        Ok(res) => (res.verdict_at_origin.value, res.tau.unwrap_or(f64::NAN)),
                        Err(QuantError::Criterion(CriterionError::DivisionByVacuum(_))) => (f64::NAN, f64::NAN),
                        Err(e) => return Err(e.into()),
                    }])
                }
                BootstrapTarget::Scan(cfg) => {
                    let rep = run_scan_with(cfg, &pmf, modes, opts, &cache)?;
                    Ok(rep.rows.iter().map(|row| (row.value.unwrap_or(f64::NAN), row.tau.unwrap_or(f64::NAN))).collect())
                }
            }
        })
        .collect::<Result<_, ScanError>>()?;
    let n = keys.len();
    let col = |j: usize, f: fn(&(f64, f64)) -> f64| -> Vec<f64> { samples.iter().map(|s| s.get(j).map(f).unwrap_or(f64::NAN)).collect() };
    let value_se = (0..n).map(|j| std_dev(&col(j, |x| x.0))).collect();
    let tau_se = (0..n).map(|j| std_dev(&col(j, |x| x.1))).collect();
    Ok(BootstrapReport { keys, value_se, tau_se, resamples })
}
