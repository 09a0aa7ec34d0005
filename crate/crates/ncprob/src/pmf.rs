//! Joint photon-number distributions, histograms and their moments.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{binomial, lgamma};

/// Tail mass below which a truncated distribution is considered complete.
pub const TAIL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PmfError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid data at {location}: {message}")]
    Validation { location: String, message: String },
    #[error("histogram has zero total count")]
    EmptyHistogram,
    #[error("p(0,0) = 0: the vacuum-normalized mapping is undefined")]
    DivisionByVacuum,
    #[error("distribution is not chaotic-like: {0}")]
    NotChaoticLike(String),
    #[error("moment of order ({0},{1}) is not available")]
    MissingOrder(u32, u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> PmfError {
    PmfError::Validation { location: location.into(), message: message.into() }
}

/// One arm of the bipartite field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Signal,
    Idler,
}

impl Arm {
    pub fn other(self) -> Arm {
        match self {
            Arm::Signal => Arm::Idler,
            Arm::Idler => Arm::Signal,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Arm::Signal => "s",
            Arm::Idler => "i",
        }
    }
}

/// Which arm(s) to use when estimating the number of modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArm {
    Signal,
    Idler,
    Mean,
}

/// Dense joint distribution `p(n_s, n_i)` for `n_s <= cutoff_s`, `n_i <= cutoff_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    cutoff_s: u32,
    cutoff_i: u32,
    probs: Vec<f64>,
    norm_deficit: f64,
}

impl JointPmf {
    /// Builds a distribution from row-major probabilities (`n_s` major).
    pub fn new(cutoff_s: u32, cutoff_i: u32, probs: Vec<f64>, norm_deficit: f64) -> Result<Self, PmfError> {
        let cols = cutoff_i as usize + 1;
        if probs.len() != (cutoff_s as usize + 1) * cols {
            return Err(invalid("table", format!("expected {} entries, got {}", (cutoff_s as usize + 1) * cols, probs.len())));
        }
        for (idx, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(invalid(format!("cell ({},{})", idx / cols, idx % cols), format!("probability {p} is not a finite nonnegative number")));
            }
        }
        if !(norm_deficit >= 0.0) {
            return Err(invalid("norm_deficit", format!("{norm_deficit} is negative")));
        }
        let total: f64 = probs.iter().sum();
        if (total + norm_deficit - 1.0).abs() > 1e-12 {
            return Err(invalid("table", format!("probabilities sum to {total} with deficit {norm_deficit}")));
        }
        Ok(JointPmf { cutoff_s, cutoff_i, probs, norm_deficit })
    }

    /// Builds a truncated distribution whose deficit is whatever mass is missing.
    pub fn from_fn(cutoff_s: u32, cutoff_i: u32, mut f: impl FnMut(u32, u32) -> f64) -> Result<Self, PmfError> {
        let mut probs = Vec::with_capacity((cutoff_s as usize + 1) * (cutoff_i as usize + 1));
        for a in 0..=cutoff_s {
            for b in 0..=cutoff_i {
                probs.push(f(a, b));
            }
        }
        let total: f64 = probs.iter().sum();
        Self::new(cutoff_s, cutoff_i, probs, (1.0 - total).max(0.0))
    }

    /// Normalizes arbitrary nonnegative weights into a distribution.
    pub fn from_weights(cutoff_s: u32, cutoff_i: u32, weights: Vec<f64>) -> Result<Self, PmfError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(PmfError::EmptyHistogram);
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Self::new(cutoff_s, cutoff_i, probs, 0.0)
    }

    /// Point mass at `(n_s, n_i)`.
    pub fn delta(n_s: u32, n_i: u32) -> Self {
        let mut probs = vec![0.0; (n_s as usize + 1) * (n_i as usize + 1)];
        *probs.last_mut().unwrap() = 1.0;
        JointPmf { cutoff_s: n_s, cutoff_i: n_i, probs, norm_deficit: 0.0 }
    }

    /// Product of two one-dimensional distributions.
    pub fn product(signal: &Pmf1, idler: &Pmf1) -> Self {
        let (cs, ci) = (signal.cutoff(), idler.cutoff());
        let mut probs = Vec::with_capacity((cs as usize + 1) * (ci as usize + 1));
        for &p in signal.probs() {
            for &q in idler.probs() {
                probs.push(p * q);
            }
        }
        let total: f64 = probs.iter().sum();
        JointPmf { cutoff_s: cs, cutoff_i: ci, probs, norm_deficit: (1.0 - total).max(0.0) }
    }

    pub fn cutoff_s(&self) -> u32 {
        self.cutoff_s
    }

    pub fn cutoff_i(&self) -> u32 {
        self.cutoff_i
    }

    pub fn norm_deficit(&self) -> f64 {
        self.norm_deficit
    }

    /// Row-major probabilities.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `p(n_s, n_i)`, zero outside the stored range.
    #[inline]
    pub fn get(&self, n_s: u32, n_i: u32) -> f64 {
        if n_s > self.cutoff_s || n_i > self.cutoff_i {
            0.0
        } else {
            self.probs[n_s as usize * (self.cutoff_i as usize + 1) + n_i as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Nonzero cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        let cols = self.cutoff_i as usize + 1;
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(move |(idx, &p)| ((idx / cols) as u32, (idx % cols) as u32, p))
    }

    /// Swaps the roles of signal and idler.
    pub fn transpose(&self) -> Self {
        let mut probs = Vec::with_capacity(self.probs.len());
        for b in 0..=self.cutoff_i {
            for a in 0..=self.cutoff_s {
                probs.push(self.get(a, b));
            }
        }
        JointPmf { cutoff_s: self.cutoff_i, cutoff_i: self.cutoff_s, probs, norm_deficit: self.norm_deficit }
    }

    pub fn marginal(&self, arm: Arm) -> Pmf1 {
        let probs = match arm {
            Arm::Signal => (0..=self.cutoff_s).map(|a| (0..=self.cutoff_i).map(|b| self.get(a, b)).sum()).collect(),
            Arm::Idler => (0..=self.cutoff_i).map(|b| (0..=self.cutoff_s).map(|a| self.get(a, b)).sum()).collect(),
        };
        Pmf1 { probs, norm_deficit: self.norm_deficit }
    }

    /// Joint falling-factorial moment, i.e. the normally ordered `<W_s^k W_i^l>`.
    pub fn factorial_moment(&self, k: u32, l: u32) -> FactorialMoment {
        let mut value = 0.0;
        for a in k..=self.cutoff_s {
            let fa = falling(a, k);
            for b in l..=self.cutoff_i {
                value += self.get(a, b) * fa * falling(b, l);
            }
        }
        FactorialMoment {
            value,
            truncated: k > self.cutoff_s || l > self.cutoff_i || self.norm_deficit > TAIL_TOLERANCE,
        }
    }

    /// `n_s! n_i! p(n_s, n_i) / p(0,0)`.
    pub fn modified_moment(&self, n_s: u32, n_i: u32) -> Result<f64, PmfError> {
        let p00 = self.get(0, 0);
        if p00 <= 0.0 {
            return Err(PmfError::DivisionByVacuum);
        }
        Ok(crate::special::factorial(n_s) * crate::special::factorial(n_i) * self.get(n_s, n_i) / p00)
    }

    /// Effective number of modes `<W>^2 / <(ΔW)^2>` from normally ordered moments.
    pub fn estimate_modes(&self, arm: ModeArm) -> Result<f64, PmfError> {
        let one = |arm: Arm| {
            let m = self.marginal(arm);
            let f1 = m.factorial_moment(1);
            let var = m.factorial_moment(2) - f1 * f1;
            if !(var > 0.0) {
                Err(PmfError::NotChaoticLike(format!("{:?} arm has normally ordered variance {var:e}", arm)))
            } else {
                Ok(f1 * f1 / var)
            }
        };
        match arm {
            ModeArm::Signal => one(Arm::Signal),
            ModeArm::Idler => one(Arm::Idler),
            ModeArm::Mean => Ok(0.5 * (one(Arm::Signal)? + one(Arm::Idler)?)),
        }
    }

    /// Normally ordered moment table up to `max_order` per arm.
    pub fn moments(&self, max_order: u32) -> MomentVector {
        MomentVector::from_fn(max_order, 1.0, |k, l| self.factorial_moment(k, l).value)
    }

    /// Table of modified moments of the vacuum-normalized mapping.
    pub fn modified_moments(&self, max_order: u32) -> Result<MomentVector, PmfError> {
        let mut err = None;
        let mv = MomentVector::from_fn(max_order, 1.0, |k, l| match self.modified_moment(k, l) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(mv),
        }
    }
}

/// Falling factorial `n (n-1) ... (n-k+1)`.
fn falling(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorialMoment {
    pub value: f64,
    /// Set when the order exceeds the stored support or mass was truncated.
    pub truncated: bool,
}

/// One-dimensional distribution with explicit truncation deficit.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf1 {
    probs: Vec<f64>,
    norm_deficit: f64,
}

impl Pmf1 {
    pub fn new(probs: Vec<f64>, norm_deficit: f64) -> Result<Self, PmfError> {
        if probs.is_empty() {
            return Err(invalid("pmf", "empty"));
        }
        if let Some((n, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
            return Err(invalid(format!("cell {n}"), format!("probability {p} is not a finite nonnegative number")));
        }
        Ok(Pmf1 { probs, norm_deficit })
    }

    /// Truncated distribution with deficit `1 - Σ probs`.
    pub fn truncated(probs: Vec<f64>) -> Result<Self, PmfError> {
        let total: f64 = probs.iter().sum();
        Self::new(probs, (1.0 - total).max(0.0))
    }

    pub fn delta(n: u32) -> Self {
        let mut probs = vec![0.0; n as usize + 1];
        probs[n as usize] = 1.0;
        Pmf1 { probs, norm_deficit: 0.0 }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cutoff(&self) -> u32 {
        self.probs.len() as u32 - 1
    }

    pub fn norm_deficit(&self) -> f64 {
        self.norm_deficit
    }

    pub fn get(&self, n: u32) -> f64 {
        self.probs.get(n as usize).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.factorial_moment(1)
    }

    pub fn factorial_moment(&self, k: u32) -> f64 {
        self.probs.iter().enumerate().skip(k as usize).map(|(n, &p)| p * falling(n as u32, k)).sum()
    }
}

/// Per-arm convolution `out(n,m) = Σ p(a,b) noise_s(n-a) noise_i(m-b)`.
///
/// Output cutoffs are the input cutoffs plus the noise supports; the noise
/// bands are expected to already be truncated at [`TAIL_TOLERANCE`].
pub fn convolve(pmf: &JointPmf, noise_s: &Pmf1, noise_i: &Pmf1) -> JointPmf {
    let cs = pmf.cutoff_s() + noise_s.cutoff();
    let ci = pmf.cutoff_i() + noise_i.cutoff();
    let cols = ci as usize + 1;
    // signal direction first, then idler
    let mut mid = vec![0.0; (cs as usize + 1) * (pmf.cutoff_i() as usize + 1)];
    let mid_cols = pmf.cutoff_i() as usize + 1;
    for (a, b, p) in pmf.cells() {
        for (d, &q) in noise_s.probs().iter().enumerate() {
            mid[(a as usize + d) * mid_cols + b as usize] += p * q;
        }
    }
    let mut probs = vec![0.0; (cs as usize + 1) * cols];
    for n in 0..=cs as usize {
        for b in 0..mid_cols {
            let p = mid[n * mid_cols + b];
            if p == 0.0 {
                continue;
            }
            for (d, &q) in noise_i.probs().iter().enumerate() {
                probs[n * cols + b + d] += p * q;
            }
        }
    }
    let total: f64 = probs.iter().sum();
    JointPmf { cutoff_s: cs, cutoff_i: ci, probs, norm_deficit: (1.0 - total).max(0.0) }
}

/// Convolution of two one-dimensional distributions.
pub fn convolve1(p: &Pmf1, noise: &Pmf1) -> Pmf1 {
    let mut out = vec![0.0; p.probs.len() + noise.probs.len() - 1];
    for (a, &x) in p.probs.iter().enumerate() {
        for (d, &q) in noise.probs.iter().enumerate() {
            out[a + d] += x * q;
        }
    }
    let total: f64 = out.iter().sum();
    Pmf1 { probs: out, norm_deficit: (1.0 - total).max(0.0) }
}

/// Table of joint moments `<W_s^k W_i^l>` for `k, l <= max_order`, at ordering `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    max_order: u32,
    ordering: f64,
    values: Vec<f64>,
}

impl MomentVector {
    pub fn from_fn(max_order: u32, ordering: f64, mut f: impl FnMut(u32, u32) -> f64) -> Self {
        let mut values = Vec::with_capacity((max_order as usize + 1).pow(2));
        for k in 0..=max_order {
            for l in 0..=max_order {
                values.push(f(k, l));
            }
        }
        MomentVector { max_order, ordering, values }
    }

    /// Moments of a product of two independent arms.
    pub fn product(signal: &[f64], idler: &[f64], ordering: f64) -> Self {
        let max_order = (signal.len().min(idler.len()) - 1) as u32;
        Self::from_fn(max_order, ordering, |k, l| signal[k as usize] * idler[l as usize])
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn ordering(&self) -> f64 {
        self.ordering
    }

    pub fn get(&self, k: u32, l: u32) -> Result<f64, PmfError> {
        if k > self.max_order || l > self.max_order {
            return Err(PmfError::MissingOrder(k, l));
        }
        Ok(self.values[k as usize * (self.max_order as usize + 1) + l as usize])
    }

    fn at(&self, k: usize, l: usize) -> f64 {
        self.values[k * (self.max_order as usize + 1) + l]
    }

    /// Re-expresses normally ordered moments at ordering `s` with the same
    /// mode count on both arms.
    pub fn to_s_ordered(&self, s: f64, modes: f64) -> MomentVector {
        self.to_s_ordered_arms(s, modes, s, modes)
    }

    /// Per-arm ordering transform:
    /// `<W^k>_s = k! β^k <L_k^{M-1}(-W/β)>` with `β = (1-s)/2`.
    pub fn to_s_ordered_arms(&self, s_s: f64, modes_s: f64, s_i: f64, modes_i: f64) -> MomentVector {
        let cs = ordering_coefficients(self.max_order, s_s, modes_s);
        let ci = ordering_coefficients(self.max_order, s_i, modes_i);
        let n = self.max_order as usize + 1;
        // contract the idler index, then the signal index
        let mut mid = vec![0.0; n * n];
        for k in 0..n {
            for l in 0..n {
                mid[k * n + l] = (0..=l).map(|b| ci[l][b] * self.at(k, b)).sum();
            }
        }
        let values = (0..n)
            .flat_map(|k| {
                let cs = &cs;
                let mid = &mid;
                (0..n).map(move |l| (0..=k).map(|a| cs[k][a] * mid[a * n + l]).sum())
            })
            .collect();
        MomentVector { max_order: self.max_order, ordering: s_s, values }
    }

    /// Moments after admixing an independent `M`-mode thermal field with
    /// `ν` photons per mode on both arms.
    pub fn with_thermal_noise(&self, nu: f64, modes: f64) -> MomentVector {
        let n = self.max_order as usize + 1;
        let noise: Vec<f64> = (0..n).map(|j| thermal_moment(j as u32, nu, modes)).collect();
        let values = (0..n)
            .flat_map(|k| {
                let noise = &noise;
                (0..n).map(move |l| {
                    let mut v = 0.0;
                    for a in 0..=k {
                        for b in 0..=l {
                            v += binomial(k as u32, a as u32)
                                * binomial(l as u32, b as u32)
                                * noise[k - a]
                                * noise[l - b]
                                * self.at(a, b);
                        }
                    }
                    v
                })
            })
            .collect();
        MomentVector { max_order: self.max_order, ordering: self.ordering, values }
    }
}

/// `<W^j>` of an `M`-mode chaotic field: `Γ(j+M)/Γ(M) ν^j`.
pub fn thermal_moment(j: u32, nu: f64, modes: f64) -> f64 {
    (0..j).fold(1.0, |acc, r| acc * (modes + r as f64) * nu)
}

/// Lower-triangular matrix `c[k][a]` with `<W^k>_s = Σ_a c[k][a] <W^a>`.
pub fn ordering_coefficients(max_order: u32, s: f64, modes: f64) -> Vec<Vec<f64>> {
    let beta = 0.5 * (1.0 - s);
    (0..=max_order)
        .map(|k| {
            if beta == 0.0 {
                let mut row = vec![0.0; k as usize + 1];
                row[k as usize] = 1.0;
                return row;
            }
            // k! β^k Σ_a coef_a (-W/β)^a
            let coef = crate::special::laguerre_coefficients(k, modes - 1.0);
            let kf = crate::special::factorial(k);
            coef.iter()
                .enumerate()
                .map(|(a, &c)| {
                    let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
                    kf * c * sign * beta.powi(k as i32 - a as i32)
                })
                .collect()
        })
        .collect()
}

/// Closed form `C(k,a) Γ(k+M)/Γ(a+M) β^{k-a}`, kept for cross-checks.
pub fn ordering_coefficient_closed(k: u32, a: u32, s: f64, modes: f64) -> f64 {
    let beta = 0.5 * (1.0 - s);
    binomial(k, a) * (lgamma(k as f64 + modes) - lgamma(a as f64 + modes)).exp() * beta.powi((k - a) as i32)
}

/// Raw photocount histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    cutoff_s: u32,
    cutoff_i: u32,
    counts: Vec<f64>,
}

impl Histogram {
    pub fn new(cutoff_s: u32, cutoff_i: u32, counts: Vec<f64>) -> Result<Self, PmfError> {
        let cols = cutoff_i as usize + 1;
        if counts.len() != (cutoff_s as usize + 1) * cols {
            return Err(invalid("histogram", "size does not match cutoffs"));
        }
        if let Some((idx, c)) = counts.iter().enumerate().find(|(_, c)| !(**c >= 0.0) || !c.is_finite()) {
            return Err(invalid(format!("cell ({},{})", idx / cols, idx % cols), format!("count {c} is negative or not finite")));
        }
        if !(counts.iter().sum::<f64>() > 0.0) {
            return Err(PmfError::EmptyHistogram);
        }
        Ok(Histogram { cutoff_s, cutoff_i, counts })
    }

    pub fn from_triples(triples: &[(u32, u32, f64)]) -> Result<Self, PmfError> {
        let cs = triples.iter().map(|t| t.0).max().unwrap_or(0);
        let ci = triples.iter().map(|t| t.1).max().unwrap_or(0);
        let cols = ci as usize + 1;
        let mut counts = vec![0.0; (cs as usize + 1) * cols];
        for (r, &(a, b, c)) in triples.iter().enumerate() {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(invalid(format!("record {}", r + 1), format!("count {c} is negative or not finite")));
            }
            counts[a as usize * cols + b as usize] += c;
        }
        Self::new(cs, ci, counts)
    }

    pub fn cutoff_s(&self) -> u32 {
        self.cutoff_s
    }

    pub fn cutoff_i(&self) -> u32 {
        self.cutoff_i
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// True when every count is a whole number, i.e. raw counts rather than
    /// normalized frequencies.
    pub fn is_integral(&self) -> bool {
        self.counts.iter().all(|c| c.fract() == 0.0) && self.total() >= 1.0
    }

    pub fn to_pmf(&self) -> JointPmf {
        let total = self.total();
        let probs: Vec<f64> = self.counts.iter().map(|c| c / total).collect();
        let sum: f64 = probs.iter().sum();
        JointPmf { cutoff_s: self.cutoff_s, cutoff_i: self.cutoff_i, probs, norm_deficit: (1.0 - sum).max(0.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &std::path::Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "json" => Some(Format::Json),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

/// Reads a histogram of counts from JSON triples or CSV.
pub fn load_counts(mut source: impl Read, format: Format) -> Result<Histogram, PmfError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let triples = match format {
        Format::Json => parse_json(&text)?,
        Format::Csv => parse_csv(&text)?,
    };
    Histogram::from_triples(&triples)
}

/// Reads a histogram and normalizes it into a distribution.
pub fn load_histogram(source: impl Read, format: Format) -> Result<JointPmf, PmfError> {
    Ok(load_counts(source, format)?.to_pmf())
}

fn parse_json(text: &str) -> Result<Vec<(u32, u32, f64)>, PmfError> {
    let rows: Vec<(i64, i64, f64)> = serde_json::from_str(text).map_err(|e| PmfError::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    rows.into_iter()
        .enumerate()
        .map(|(r, (a, b, c))| {
            let loc = format!("record {}", r + 1);
            if a < 0 || b < 0 || a > u32::MAX as i64 || b > u32::MAX as i64 {
                return Err(invalid(loc, format!("index ({a},{b}) is out of range")));
            }
            if !(c >= 0.0) {
                return Err(invalid(loc, format!("count {c} is negative")));
            }
            Ok((a as u32, b as u32, c))
        })
        .collect()
}

fn parse_csv(text: &str) -> Result<Vec<(u32, u32, f64)>, PmfError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| PmfError::Parse {
            location: e.position().map(|p| format!("line {}", p.line())).unwrap_or_else(|| "unknown".into()),
            message: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        records.push((line, rec));
    }
    let Some((_, first)) = records.first() else {
        return Ok(Vec::new());
    };
    let is_header = first.get(0).map(|f| f.parse::<f64>().is_err()).unwrap_or(false);
    let number = |line: u64, field: &str| {
        field.parse::<f64>().map_err(|_| PmfError::Parse { location: format!("line {line}"), message: format!("'{field}' is not a number") })
    };
    let mut triples = Vec::new();
    if is_header {
        let names: Vec<&str> = first.iter().collect();
        if names != ["n_s", "n_i", "count"] {
            return Err(PmfError::Parse { location: "line 1".into(), message: format!("expected header n_s,n_i,count, got {}", names.join(",")) });
        }
        for (line, rec) in &records[1..] {
            if rec.len() != 3 {
                return Err(PmfError::Parse { location: format!("line {line}"), message: format!("expected 3 fields, got {}", rec.len()) });
            }
            let a = number(*line, &rec[0])?;
            let b = number(*line, &rec[1])?;
            let c = number(*line, &rec[2])?;
            if a < 0.0 || b < 0.0 || a.fract() != 0.0 || b.fract() != 0.0 {
                return Err(invalid(format!("line {line}"), format!("index ({a},{b}) is not a nonnegative integer")));
            }
            if c < 0.0 {
                return Err(invalid(format!("line {line}"), format!("count {c} is negative")));
            }
            triples.push((a as u32, b as u32, c));
        }
    } else {
        for (row, (line, rec)) in records.iter().enumerate() {
            for (col, field) in rec.iter().enumerate() {
                let c = number(*line, field)?;
                if c < 0.0 {
                    return Err(invalid(format!("line {line} column {}", col + 1), format!("count {c} is negative")));
                }
                triples.push((row as u32, col as u32, c));
            }
        }
    }
    Ok(triples)
}

/// Writes a distribution as JSON `[n_s, n_i, p]` triples of its nonzero cells.
pub fn to_json(pmf: &JointPmf) -> String {
    let cells: Vec<(u32, u32, f64)> = pmf.cells().collect();
    serde_json::to_string(&cells).expect("serializing plain triples")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pair() -> JointPmf {
        load_histogram("[[0,0,50],[1,1,50]]".as_bytes(), Format::Json).unwrap()
    }

    #[test]
    fn json_two_cells() {
        let p = pair();
        assert_eq!(p.get(0, 0), 0.5);
        assert_eq!(p.get(1, 1), 0.5);
        assert_eq!(p.get(1, 0), 0.0);
        assert_eq!(p.norm_deficit(), 0.0);
        assert_eq!((p.cutoff_s(), p.cutoff_i()), (1, 1));
    }

    #[test]
    fn json_negative_count_rejected() {
        let err = load_histogram("[[2,3,-1]]".as_bytes(), Format::Json).unwrap_err();
        assert!(matches!(err, PmfError::Validation { .. }), "{err}");
    }

    #[test]
    fn json_malformed_reports_position() {
        let err = load_histogram("[[0,0,1],\n[1,x]]".as_bytes(), Format::Json).unwrap_err();
        match err {
            PmfError::Parse { location, .. } => assert!(location.contains("line 2"), "{location}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn csv_dense_uniform() {
        let p = load_histogram("1,1,1\n1,1,1\n1,1,1\n".as_bytes(), Format::Csv).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_relative_eq!(p.get(a, b), 1.0 / 9.0);
            }
        }
    }

    #[test]
    fn csv_triples_with_header() {
        let p = load_histogram("n_s,n_i,count\n0,0,3\n2,1,1\n".as_bytes(), Format::Csv).unwrap();
        assert_eq!(p.get(0, 0), 0.75);
        assert_eq!(p.get(2, 1), 0.25);
        let err = load_histogram("n_s,n_i,count\n0,0,3\n2,1,-1\n".as_bytes(), Format::Csv).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn zero_total_rejected() {
        assert!(matches!(load_histogram("[[0,0,0]]".as_bytes(), Format::Json), Err(PmfError::EmptyHistogram)));
        assert!(load_histogram("[[4,2,7]]".as_bytes(), Format::Json).is_ok());
    }

    #[test]
    fn marginal_of_pair() {
        let m = pair().marginal(Arm::Signal);
        assert_eq!(m.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn marginal_of_product() {
        let q = Pmf1::new(vec![0.2, 0.5, 0.3], 0.0).unwrap();
        let r = Pmf1::new(vec![0.6, 0.4], 0.0).unwrap();
        let m = JointPmf::product(&q, &r).marginal(Arm::Signal);
        for n in 0..3 {
            assert_relative_eq!(m.get(n), q.get(n), epsilon = 1e-15);
        }
    }

    #[test]
    fn convolve_with_delta_is_identity() {
        let p = pair();
        assert_eq!(convolve(&p, &Pmf1::delta(0), &Pmf1::delta(0)), p);
    }

    #[test]
    fn convolve_delta_with_geometric_shifts() {
        let geo: Vec<f64> = (0..60).map(|n| 0.5f64.powi(n + 1)).collect();
        let geo = Pmf1::truncated(geo).unwrap();
        let out = convolve(&JointPmf::delta(1, 0), &geo, &Pmf1::delta(0));
        assert_eq!(out.get(0, 0), 0.0);
        for n in 1..20 {
            assert_relative_eq!(out.get(n, 0), 0.5f64.powi(n as i32), epsilon = 1e-15);
        }
    }

    #[test]
    fn factorial_moments() {
        let p = pair();
        assert_eq!(p.factorial_moment(0, 0).value, 1.0);
        assert_eq!(p.factorial_moment(1, 1).value, 0.5);
        let f = p.factorial_moment(2, 0);
        assert_eq!(f.value, 0.0);
        assert!(f.truncated);
    }

    #[test]
    fn modified_moment_formula() {
        let p = JointPmf::new(2, 1, vec![0.5, 0.2, 0.1, 0.1, 0.0, 0.1], 0.0).unwrap();
        assert_relative_eq!(p.modified_moment(2, 1).unwrap(), 0.4);
        assert_eq!(p.modified_moment(0, 0).unwrap(), 1.0);
        let q = JointPmf::delta(1, 1);
        assert!(matches!(q.modified_moment(1, 1), Err(PmfError::DivisionByVacuum)));
    }

    #[test]
    fn transpose_swaps_arms() {
        let p = JointPmf::new(2, 1, vec![0.5, 0.2, 0.1, 0.1, 0.0, 0.1], 0.0).unwrap();
        let t = p.transpose();
        assert_eq!((t.cutoff_s(), t.cutoff_i()), (1, 2));
        assert_eq!(t.get(1, 2), p.get(2, 1));
        assert_eq!(t.transpose(), p);
    }

    #[test]
    fn moment_transform_identity_at_s1() {
        let p = JointPmf::new(2, 1, vec![0.5, 0.2, 0.1, 0.1, 0.0, 0.1], 0.0).unwrap();
        let m = p.moments(3);
        assert_eq!(m.to_s_ordered(1.0, 7.0).get(2, 1).unwrap(), m.get(2, 1).unwrap());
    }

    #[test]
    fn ordering_coefficients_match_closed_form() {
        for &(s, modes) in &[(0.0, 1.0), (-0.5, 80.0), (0.3, 2.5)] {
            let c = ordering_coefficients(6, s, modes);
            for k in 0..=6 {
                for a in 0..=k {
                    assert_relative_eq!(c[k as usize][a as usize], ordering_coefficient_closed(k, a, s, modes), max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn histogram_integrality() {
        let h = Histogram::from_triples(&[(0, 0, 3.0), (1, 1, 2.0)]).unwrap();
        assert!(h.is_integral());
        let h = Histogram::from_triples(&[(0, 0, 0.6), (1, 1, 0.4)]).unwrap();
        assert!(!h.is_integral());
    }
}
