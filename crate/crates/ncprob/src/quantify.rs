//! Non-classicality depth `τ` and counting parameter `ν` by bracketed root
//! search along the ordering parameter and the admixed noise.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::Serialize;
use thiserror::Error;

use crate::criteria::{Compiled, CriterionError, CriterionSpec, CriterionValue, Representation};
use crate::kernel::{bilinear_cell, build_kernel_with, mandel_rice_prefix, KernelError, KernelMethod, OrderingKernel};
use crate::pmf::{JointPmf, MomentVector};
use crate::poly::Cell;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error(transparent)]
    Criterion(#[from] CriterionError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

/// Search settings; the defaults are the documented ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantOptions {
    /// Points of the coarse grid over `(-1+δ, 1]`.
    pub grid_points: usize,
    /// Distance of the lowest grid point from `s = -1`.
    pub s_floor_delta: f64,
    /// Bisection stops when the `s` bracket is this narrow.
    pub s_width: f64,
    /// First trial noise of the geometric expansion.
    pub nu_start: f64,
    /// Largest noise tried before reporting "unbounded".
    pub nu_cap: f64,
    /// Relative bracket width at which the noise bisection stops.
    pub nu_rel_width: f64,
    /// Statistical threshold below which a value counts as negative.
    pub eps_stat: f64,
    #[serde(skip)]
    pub method: KernelMethod,
}

impl Default for QuantOptions {
    fn default() -> Self {
        QuantOptions {
            grid_points: 33,
            s_floor_delta: 1e-3,
            s_width: 1e-4,
            nu_start: 1e-3,
            nu_cap: 1e3,
            nu_rel_width: 1e-4,
            eps_stat: 0.0,
            method: KernelMethod::Recurrence,
        }
    }
}

impl QuantOptions {
    fn validate(&self) -> Result<(), QuantError> {
        let bad = |m: &str| Err(QuantError::InvalidOption(m.into()));
        if self.grid_points < 2 {
            return bad("grid_points must be at least 2");
        }
        if !(self.s_floor_delta > 0.0 && self.s_floor_delta < 2.0) {
            return bad("s_floor_delta must lie in (0, 2)");
        }
        if !(self.s_width > 0.0) || !(self.nu_rel_width > 0.0) {
            return bad("bracket widths must be positive");
        }
        if !(self.nu_start > 0.0 && self.nu_cap >= self.nu_start) {
            return bad("need 0 < nu_start <= nu_cap");
        }
        if !(self.eps_stat >= 0.0) {
            return bad("eps_stat must be nonnegative");
        }
        Ok(())
    }

    /// Grid of ordering parameters from 1 down to `-1+δ`.
    pub fn s_grid(&self) -> Vec<f64> {
        let n = self.grid_points - 1;
        let span = 2.0 - self.s_floor_delta;
        (0..=n).map(|j| if j == n { -1.0 + self.s_floor_delta } else { 1.0 - span * j as f64 / n as f64 }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Flag {
    /// Negative over the whole `s` grid; `τ` is a lower bound.
    Cap,
    /// More than one sign change on the grid; the root nearest `s = 1` is used.
    Multiplicity,
    /// Negative up to the noise cap.
    Unbounded,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Cap => "cap",
            Flag::Multiplicity => "multiplicity",
            Flag::Unbounded => "unbounded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NuValue {
    Finite(f64),
    Unbounded,
}

impl NuValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            NuValue::Finite(v) => Some(v),
            NuValue::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcResult {
    pub criterion: CriterionSpec,
    pub tau: Option<f64>,
    pub nu: Option<NuValue>,
    /// Final bracket in units of the reported quantity.
    pub bracket: (f64, f64),
    pub evaluations: usize,
    pub modes_used: f64,
    pub verdict_at_origin: CriterionValue,
    pub flags: Vec<Flag>,
}

impl NcResult {
    /// `M τ`, the mean number of noise photons that the ordering shift adds.
    pub fn m_tau(&self) -> Option<f64> {
        self.tau.map(|t| t * self.modes_used)
    }

    pub fn flag_string(&self) -> String {
        self.flags.iter().map(|f| f.as_str()).collect::<Vec<_>>().join("|")
    }
}

type KernelKey = (u64, u64, u32, bool);

/// Kernels keyed by `(s, M, N_in)`, shared between threads.
#[derive(Debug, Default)]
pub struct KernelCache {
    map: RwLock<HashMap<KernelKey, Arc<OrderingKernel>>>,
}

impl KernelCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process-wide cache used by the free functions.
    pub fn global() -> &'static KernelCache {
        static GLOBAL: OnceLock<KernelCache> = OnceLock::new();
        GLOBAL.get_or_init(KernelCache::new)
    }

    pub fn get(&self, s: f64, modes: f64, n_in: u32, method: KernelMethod) -> Result<Arc<OrderingKernel>, KernelError> {
        let key = (s.to_bits(), modes.to_bits(), n_in, method == KernelMethod::HighPrecision);
        if let Some(k) = self.map.read().expect("cache lock").get(&key) {
            return Ok(k.clone());
        }
        let k = Arc::new(build_kernel_with(s, modes, n_in, method)?);
        // concurrent builders produce identical kernels; keep whichever lands
        self.map.write().expect("cache lock").entry(key).or_insert_with(|| k.clone());
        Ok(k)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn kernel_row(k: &OrderingKernel, n: u32) -> &[f64] {
    if n > k.n_out() {
        &[]
    } else {
        k.row(n)
    }
}

/// `p_s(a, b)` for one cell.
pub fn ordered_cell(k: &OrderingKernel, pmf: &JointPmf, a: u32, b: u32) -> f64 {
    bilinear_cell(kernel_row(k, a), kernel_row(k, b), pmf)
}

/// Transformed cells on the grid of ordering parameters, computed once.
#[derive(Debug)]
struct GridTable {
    size: u32,
    values: Vec<f64>,
}

enum SPoint {
    Grid(usize),
    Free(f64),
}

/// Search context for one distribution and mode count, reused across criteria.
pub struct Quantifier<'a> {
    pmf: &'a JointPmf,
    modes: f64,
    opts: QuantOptions,
    cache: &'a KernelCache,
    n_in: u32,
    grid: Vec<f64>,
    table_size: u32,
    tables: Vec<OnceLock<Result<Arc<GridTable>, KernelError>>>,
}

impl<'a> Quantifier<'a> {
    /// `table_max` bounds the cell indices tabulated per grid point; larger
    /// indices are computed on demand.
    pub fn new(pmf: &'a JointPmf, modes: f64, opts: QuantOptions, cache: &'a KernelCache, table_max: u32) -> Result<Self, QuantError> {
        opts.validate()?;
        if !(modes > 0.0) || !modes.is_finite() {
            return Err(KernelError::InvalidModes(modes).into());
        }
        let grid = opts.s_grid();
        let tables = (0..grid.len()).map(|_| OnceLock::new()).collect();
        Ok(Quantifier { pmf, modes, n_in: pmf.cutoff_s().max(pmf.cutoff_i()), grid, table_size: table_max + 1, tables, opts, cache })
    }

    pub fn options(&self) -> &QuantOptions {
        &self.opts
    }

    pub fn modes(&self) -> f64 {
        self.modes
    }

    fn table(&self, j: usize) -> Result<Arc<GridTable>, KernelError> {
        self.tables[j]
            .get_or_init(|| {
                let k = self.cache.get(self.grid[j], self.modes, self.n_in, self.opts.method)?;
                let n = self.table_size;
                let mut values = Vec::with_capacity((n * n) as usize);
                for a in 0..n {
                    for b in 0..n {
                        values.push(ordered_cell(&k, self.pmf, a, b));
                    }
                }
                Ok(Arc::new(GridTable { size: n, values }))
            })
            .clone()
    }

    fn eval_ordered(&self, c: &Compiled, point: SPoint) -> Result<CriterionValue, QuantError> {
        let s = match point {
            SPoint::Grid(j) => self.grid[j],
            SPoint::Free(s) => s,
        };
        if s == 1.0 {
            return Ok(c.eval_pmf(self.pmf)?);
        }
        let (mi_s, mi_i) = c.max_index();
        if let SPoint::Grid(j) = point {
            if mi_s < self.table_size && mi_i < self.table_size {
                let t = self.table(j)?;
                return Ok(c.eval_cells(|a, b| t.values[(a * t.size + b) as usize]));
            }
        }
        let k = match point {
            SPoint::Grid(_) => self.cache.get(s, self.modes, self.n_in, self.opts.method)?,
            SPoint::Free(_) => Arc::new(build_kernel_with(s, self.modes, self.n_in, self.opts.method)?),
        };
        let mut memo: HashMap<Cell, f64> = HashMap::new();
        Ok(c.eval_cells(|a, b| *memo.entry((a, b)).or_insert_with(|| ordered_cell(&k, self.pmf, a, b))))
    }

    /// Criterion value on the distribution transformed to ordering `s`.
    pub fn value_at_s(&self, c: &Compiled, s: f64) -> Result<CriterionValue, QuantError> {
        self.eval_ordered(c, SPoint::Free(s))
    }

    /// Criterion value after admixing `ν` photons per mode of `M`-mode noise.
    pub fn value_at_nu(&self, c: &Compiled, nu: f64) -> Result<CriterionValue, QuantError> {
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(KernelError::InvalidNoise(nu).into());
        }
        if nu == 0.0 {
            return Ok(c.eval_pmf(self.pmf)?);
        }
        let (ms, mi) = c.max_index();
        let band = mandel_rice_prefix(nu, self.modes, ms.max(mi) as usize + 1);
        let mut rows: HashMap<u32, Vec<f64>> = HashMap::new();
        let mut row = |a: u32| rows.entry(a).or_insert_with(|| (0..=a).map(|m| band[(a - m) as usize]).collect()).clone();
        let mut memo: HashMap<Cell, f64> = HashMap::new();
        Ok(c.eval_cells(|a, b| {
            *memo.entry((a, b)).or_insert_with(|| {
                let (x, y) = (row(a), row(b));
                bilinear_cell(&x, &y, self.pmf)
            })
        }))
    }

    /// Non-classicality depth of the criterion.
    pub fn ncd(&self, c: &Compiled) -> Result<NcResult, QuantError> {
        if c.spec().representation() == Representation::Moment {
            let mv = self.pmf.moments(moment_order(c));
            return moment_ncd_compiled(c, &mv, self.modes, &self.opts);
        }
        if c.spec().requires_vacuum() && self.pmf.get(0, 0) <= 0.0 {
            return Err(CriterionError::DivisionByVacuum(c.spec().to_string()).into());
        }
        let origin = c.eval_pmf(self.pmf)?;
        let out = search_s(&self.opts, &self.grid, &origin, |p| self.eval_ordered(c, p))?;
        Ok(out.into_result(c.spec(), self.modes, origin))
    }

    /// Non-classicality counting parameter of the criterion.
    pub fn nccp(&self, c: &Compiled) -> Result<NcResult, QuantError> {
        if c.spec().representation() == Representation::Moment {
            let mv = self.pmf.moments(moment_order(c));
            return moment_nccp_compiled(c, &mv, self.modes, &self.opts);
        }
        if c.spec().requires_vacuum() && self.pmf.get(0, 0) <= 0.0 {
            return Err(CriterionError::DivisionByVacuum(c.spec().to_string()).into());
        }
        let origin = c.eval_pmf(self.pmf)?;
        let out = search_nu(&self.opts, &origin, |nu| self.value_at_nu(c, nu))?;
        Ok(out.into_result(c.spec(), self.modes, origin))
    }
}

fn moment_order(c: &Compiled) -> u32 {
    let (a, b) = c.max_index();
    a.max(b)
}

struct Search {
    tau: Option<f64>,
    nu: Option<NuValue>,
    bracket: (f64, f64),
    evaluations: usize,
    flags: Vec<Flag>,
}

impl Search {
    fn into_result(self, spec: &CriterionSpec, modes: f64, origin: CriterionValue) -> NcResult {
        NcResult {
            criterion: spec.clone(),
            tau: self.tau,
            nu: self.nu,
            bracket: self.bracket,
            evaluations: self.evaluations,
            modes_used: modes,
            verdict_at_origin: origin,
            flags: self.flags,
        }
    }
}

fn search_s(
    opts: &QuantOptions,
    grid: &[f64],
    origin: &CriterionValue,
    mut g: impl FnMut(SPoint) -> Result<CriterionValue, QuantError>,
) -> Result<Search, QuantError> {
    let neg = |v: &CriterionValue| v.indicates(opts.eps_stat);
    let mut evaluations = 1;
    if !neg(origin) {
        return Ok(Search { tau: Some(0.0), nu: None, bracket: (0.0, 0.0), evaluations, flags: Vec::new() });
    }
    let mut negative = vec![true];
    for j in 1..grid.len() {
        negative.push(neg(&g(SPoint::Grid(j))?));
        evaluations += 1;
    }
    let changes = negative.windows(2).filter(|w| w[0] != w[1]).count();
    let mut flags = Vec::new();
    let Some(j) = negative.iter().position(|&n| !n) else {
        let tau = 0.5 * (1.0 - grid[grid.len() - 1]);
        return Ok(Search { tau: Some(tau), nu: None, bracket: (tau, 1.0), evaluations, flags: vec![Flag::Cap] });
    };
    if changes > 1 {
        flags.push(Flag::Multiplicity);
    }
    // g(lo) >= 0 > g(hi)
    let (mut lo, mut hi) = (grid[j], grid[j - 1]);
    while hi - lo > opts.s_width {
        let mid = 0.5 * (lo + hi);
        if neg(&g(SPoint::Free(mid))?) {
            hi = mid;
        } else {
            lo = mid;
        }
        evaluations += 1;
    }
    let s_root = 0.5 * (lo + hi);
    Ok(Search { tau: Some(0.5 * (1.0 - s_root)), nu: None, bracket: (0.5 * (1.0 - hi), 0.5 * (1.0 - lo)), evaluations, flags })
}

fn search_nu(
    opts: &QuantOptions,
    origin: &CriterionValue,
    mut h: impl FnMut(f64) -> Result<CriterionValue, QuantError>,
) -> Result<Search, QuantError> {
    let neg = |v: &CriterionValue| v.indicates(opts.eps_stat);
    let mut evaluations = 1;
    if !neg(origin) {
        return Ok(Search { tau: None, nu: Some(NuValue::Finite(0.0)), bracket: (0.0, 0.0), evaluations, flags: Vec::new() });
    }
    let (mut lo, mut hi) = (0.0, opts.nu_start);
    loop {
        evaluations += 1;
        if !neg(&h(hi)?) {
            break;
        }
        if hi >= opts.nu_cap {
            return Ok(Search { tau: None, nu: Some(NuValue::Unbounded), bracket: (hi, f64::INFINITY), evaluations, flags: vec![Flag::Unbounded] });
        }
        lo = hi;
        hi = (2.0 * hi).min(opts.nu_cap);
    }
    while hi - lo > opts.nu_rel_width * hi {
        let mid = 0.5 * (lo + hi);
        if neg(&h(mid)?) {
            lo = mid;
        } else {
            hi = mid;
        }
        evaluations += 1;
    }
    Ok(Search { tau: None, nu: Some(NuValue::Finite(0.5 * (lo + hi))), bracket: (lo, hi), evaluations, flags: Vec::new() })
}

fn moment_ncd_compiled(c: &Compiled, moments: &MomentVector, modes: f64, opts: &QuantOptions) -> Result<NcResult, QuantError> {
    opts.validate()?;
    if !(modes > 0.0) || !modes.is_finite() {
        return Err(KernelError::InvalidModes(modes).into());
    }
    let origin = c.eval_moments(moments)?;
    let grid = opts.s_grid();
    let out = search_s(opts, &grid, &origin, |p| {
        let s = match p {
            SPoint::Grid(j) => grid[j],
            SPoint::Free(s) => s,
        };
        Ok(c.eval_moments(&moments.to_s_ordered(s, modes))?)
    })?;
    Ok(out.into_result(c.spec(), modes, origin))
}

fn moment_nccp_compiled(c: &Compiled, moments: &MomentVector, modes: f64, opts: &QuantOptions) -> Result<NcResult, QuantError> {
    opts.validate()?;
    let origin = c.eval_moments(moments)?;
    let out = search_nu(opts, &origin, |nu| Ok(c.eval_moments(&moments.with_thermal_noise(nu, modes))?))?;
    Ok(out.into_result(c.spec(), modes, origin))
}

fn compile(spec: &CriterionSpec, repr: Representation) -> Result<Compiled, QuantError> {
    Ok(Compiled::new(&spec.clone().with_representation(repr))?)
}

/// Depth of `spec` on `pmf` with `M` modes in the ordering transform.
pub fn ncd(spec: &CriterionSpec, pmf: &JointPmf, modes: f64) -> Result<NcResult, QuantError> {
    ncd_with(spec, pmf, modes, &QuantOptions::default())
}

pub fn ncd_with(spec: &CriterionSpec, pmf: &JointPmf, modes: f64, opts: &QuantOptions) -> Result<NcResult, QuantError> {
    let c = Compiled::new(spec)?;
    let (a, b) = c.max_index();
    Quantifier::new(pmf, modes, opts.clone(), KernelCache::global(), a.max(b))?.ncd(&c)
}

/// Counting parameter of `spec` on `pmf` with `M`-mode noise up to `nu_cap`.
pub fn nccp(spec: &CriterionSpec, pmf: &JointPmf, modes: f64, nu_cap: f64) -> Result<NcResult, QuantError> {
    nccp_with(spec, pmf, modes, &QuantOptions { nu_cap, ..QuantOptions::default() })
}

pub fn nccp_with(spec: &CriterionSpec, pmf: &JointPmf, modes: f64, opts: &QuantOptions) -> Result<NcResult, QuantError> {
    let c = Compiled::new(spec)?;
    Quantifier::new(pmf, modes, opts.clone(), KernelCache::global(), 0)?.nccp(&c)
}

/// Depth from the moment form evaluated on ordering-transformed moments.
pub fn moment_ncd(spec: &CriterionSpec, moments: &MomentVector, modes: f64) -> Result<NcResult, QuantError> {
    moment_ncd_with(spec, moments, modes, &QuantOptions::default())
}

pub fn moment_ncd_with(spec: &CriterionSpec, moments: &MomentVector, modes: f64, opts: &QuantOptions) -> Result<NcResult, QuantError> {
    moment_ncd_compiled(&compile(spec, Representation::Moment)?, moments, modes, opts)
}

/// Counting parameter from the moment form on noise-convolved moments.
pub fn moment_nccp(spec: &CriterionSpec, moments: &MomentVector, modes: f64, nu_cap: f64) -> Result<NcResult, QuantError> {
    let opts = QuantOptions { nu_cap, ..QuantOptions::default() };
    moment_nccp_compiled(&compile(spec, Representation::Moment)?, moments, modes, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{coherent_product, ideal_twin, thermal_product};
    use crate::kernel::{apply_noise, apply_ordering};
    use approx::assert_relative_eq;

    fn spec(s: &str) -> CriterionSpec {
        s.parse().unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = QuantOptions::default().s_grid();
        assert_eq!(g.len(), 33);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[32], -1.0 + 1e-3);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn classical_fields_have_zero_depth() {
        let p = coherent_product(1.0, 1.0, None).unwrap();
        let r = ncd(&spec("A:E001"), &p, 1.0).unwrap();
        assert_eq!(r.tau, Some(0.0));
        let p = thermal_product(1.0, 2.0, 0.5, 1.0, None).unwrap();
        let r = nccp(&spec("A:E001"), &p, 1.0, 1e3).unwrap();
        assert_eq!(r.nu, Some(NuValue::Finite(0.0)));
    }

    #[test]
    fn ideal_twin_depth_is_bracketed() {
        let p = ideal_twin(1.0, 1.0, None).unwrap();
        let c = Compiled::new(&spec("A:E001")).unwrap();
        let q = Quantifier::new(&p, 1.0, QuantOptions::default(), KernelCache::global(), 4).unwrap();
        let r = q.ncd(&c).unwrap();
        let tau = r.tau.unwrap();
        assert!(tau > 0.0 && tau < 1.0);
        assert!(r.bracket.1 - r.bracket.0 <= 0.5e-4 + 1e-15);
        // the value changes sign across the bracket
        let below = q.value_at_s(&c, 1.0 - 2.0 * r.bracket.0).unwrap();
        let above = q.value_at_s(&c, 1.0 - 2.0 * r.bracket.1).unwrap();
        assert!(below.value < 0.0 && above.value >= 0.0);
    }

    #[test]
    fn on_demand_cells_match_full_transform() {
        let p = ideal_twin(2.0, 3.0, Some(15)).unwrap();
        let k = build_kernel_with(0.2, 3.0, 15, KernelMethod::Recurrence).unwrap();
        let full = apply_ordering(&p, 0.2, 3.0).unwrap();
        for (a, b) in [(0, 0), (1, 2), (4, 4), (7, 3)] {
            assert_relative_eq!(ordered_cell(&k, &p, a, b), full.get(a, b), epsilon = 1e-15, max_relative = 1e-12);
        }
        let c = Compiled::new(&spec("E:2,2,1")).unwrap();
        let q = Quantifier::new(&p, 3.0, QuantOptions::default(), KernelCache::global(), 6).unwrap();
        let noisy = apply_noise(&p, 0.3, 3.0).unwrap();
        assert_relative_eq!(q.value_at_nu(&c, 0.3).unwrap().value, c.eval_pmf(&noisy).unwrap().value, max_relative = 1e-10);
    }

    #[test]
    fn nccp_exceeds_ncd() {
        let p = ideal_twin(1.0, 2.0, None).unwrap();
        let t = ncd(&spec("A:E001"), &p, 2.0).unwrap().tau.unwrap();
        let n = nccp(&spec("A:E001"), &p, 2.0, 1e3).unwrap().nu.unwrap().finite().unwrap();
        assert!(n >= t, "nu {n} tau {t}");
    }

    #[test]
    fn unbounded_noise() {
        let p = ideal_twin(1.0, 1.0, None).unwrap();
        let r = nccp(&spec("A:E001"), &p, 1.0, 1e-3).unwrap();
        assert_eq!(r.nu, Some(NuValue::Unbounded));
        assert_eq!(r.flags, vec![Flag::Unbounded]);
    }

    #[test]
    fn moment_depth_origin_and_vacuum() {
        let p = ideal_twin(1.0, 1.0, None).unwrap();
        let mv = p.moments(2);
        let r = moment_ncd(&spec("A:E001"), &mv, 1.0).unwrap();
        assert!(r.tau.unwrap() > 0.0);
        // vacuum, single mode: <W>_{s=0} = 1/2
        let vac = JointPmf::delta(0, 0).moments(1).to_s_ordered(0.0, 1.0);
        assert_relative_eq!(vac.get(1, 0).unwrap(), 0.5);
        assert!(matches!(moment_ncd(&spec("E:3,3,1"), &mv, 1.0), Err(QuantError::Criterion(CriterionError::MissingOrder(..)))));
    }

    #[test]
    fn cache_is_shared() {
        let cache = KernelCache::new();
        let a = cache.get(0.5, 2.0, 5, KernelMethod::Recurrence).unwrap();
        let b = cache.get(0.5, 2.0, 5, KernelMethod::Recurrence).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn invalid_options() {
        let p = ideal_twin(1.0, 1.0, None).unwrap();
        let opts = QuantOptions { grid_points: 1, ..QuantOptions::default() };
        assert!(matches!(ncd_with(&spec("A:E001"), &p, 1.0, &opts), Err(QuantError::InvalidOption(_))));
        assert!(ncd(&spec("A:E001"), &p, 0.0).is_err());
    }
}
