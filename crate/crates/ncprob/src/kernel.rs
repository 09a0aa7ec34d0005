//! s-ordering kernels, the S function, Mandel–Rice noise and the transforms
//! they induce on joint distributions.

use std::io::Write;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::pmf::{JointPmf, Pmf1, TAIL_TOLERANCE};
use crate::special::{lgamma, ln_factorial};

/// Column-sum tolerance that decides how many output rows a kernel keeps.
pub const COLUMN_TOLERANCE: f64 = 1e-9;
/// Hard ceiling for precision escalation.
pub const MAX_PRECISION_BITS: u32 = 4096;
const MAX_ROWS: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("ordering parameter s = {0} is outside (-1, 1]")]
    OrderingOutOfRange(f64),
    #[error("mode count M = {0} must be positive")]
    InvalidModes(f64),
    #[error("noise ν = {0} must be nonnegative")]
    InvalidNoise(f64),
    #[error("kernel entry (n={n}, m={m}, s={s}, M={modes}) not resolved at {bits} bits")]
    PrecisionEscalation { n: u32, m: u32, s: f64, modes: f64, bits: u32 },
    #[error("kernel for s = {s}, M = {modes} needs more than {MAX_ROWS} output rows")]
    TooManyRows { s: f64, modes: f64 },
}

fn check_params(s: f64, modes: f64) -> Result<(), KernelError> {
    if !(s > -1.0 && s <= 1.0) {
        return Err(KernelError::OrderingOutOfRange(s));
    }
    if !(modes > 0.0) || !modes.is_finite() {
        return Err(KernelError::InvalidModes(modes));
    }
    Ok(())
}

/// Exact rational for a finite float.
fn rational_of(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

/// `S(n,m,α) = 2^{m-n} Σ_l (-1)^{m-l} C(m,l) C(n+l+α, n)` in exact arithmetic.
pub fn s_function(n: u32, m: u32, alpha: f64) -> BigRational {
    let alpha = rational_of(alpha);
    let mut sum = BigRational::zero();
    let mut cml = BigInt::one();
    for l in 0..=m {
        // C(n+l+α, n) = Π_{j=1}^{n} (l+α+j)/j
        let mut c = BigRational::one();
        for j in 1..=n {
            c *= (&alpha + BigRational::from_integer(BigInt::from(l + j))) / BigRational::from_integer(BigInt::from(j));
        }
        let term = c * BigRational::from_integer(cml.clone());
        if (m - l).is_multiple_of(2) {
            sum += term;
        } else {
            sum -= term;
        }
        cml = cml * BigInt::from(m - l) / BigInt::from(l + 1);
    }
    let two = BigRational::from_integer(BigInt::from(2));
    if m >= n {
        sum * num_traits::pow(two, (m - n) as usize)
    } else {
        sum / num_traits::pow(two, (n - m) as usize)
    }
}

/// Mandel–Rice probability `Γ(n+M)/(n! Γ(M)) ν^n / (1+ν)^{n+M}`, in log space.
pub fn mandel_rice(n: u32, nu: f64, modes: f64) -> f64 {
    if nu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    (lgamma(nf + modes) - ln_factorial(n) - lgamma(modes) + nf * nu.ln() - (nf + modes) * nu.ln_1p()).exp()
}

/// First `len` Mandel–Rice probabilities by the ratio recurrence.
pub fn mandel_rice_prefix(nu: f64, modes: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return out;
    }
    if nu == 0.0 {
        out.push(1.0);
        out.resize(len, 0.0);
        return out;
    }
    let step = (nu / (1.0 + nu)).ln();
    let mut lp = -modes * nu.ln_1p();
    out.push(lp.exp());
    for n in 1..len {
        lp += ((n as f64 - 1.0 + modes) / n as f64).ln() + step;
        out.push(lp.exp());
    }
    out
}

/// Mandel–Rice band truncated once the tail falls below [`TAIL_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseKernel {
    pub nu: f64,
    pub modes: f64,
    pub band: Pmf1,
}

impl NoiseKernel {
    pub fn new(nu: f64, modes: f64) -> Result<Self, KernelError> {
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(KernelError::InvalidNoise(nu));
        }
        if !(modes > 0.0) {
            return Err(KernelError::InvalidModes(modes));
        }
        if nu == 0.0 {
            return Ok(NoiseKernel { nu, modes, band: Pmf1::delta(0) });
        }
        let mean = modes * nu;
        let sd = (modes * nu * (1.0 + nu)).sqrt();
        let mut len = (mean + 10.0 * sd + 10.0).ceil() as usize;
        loop {
            let band = mandel_rice_prefix(nu, modes, len);
            let total: f64 = band.iter().sum();
            if 1.0 - total < TAIL_TOLERANCE || len > MAX_ROWS {
                let band = Pmf1::truncated(band).expect("nonnegative band");
                return Ok(NoiseKernel { nu, modes, band });
            }
            len *= 2;
        }
    }
}

/// Admixes `M`-mode thermal noise with `ν` photons per mode on both arms.
pub fn apply_noise(pmf: &JointPmf, nu: f64, modes: f64) -> Result<JointPmf, KernelError> {
    let k = NoiseKernel::new(nu, modes)?;
    Ok(crate::pmf::convolve(pmf, &k.band, &k.band))
}

/// How kernel entries are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelMethod {
    /// Cancellation-free column recurrence in double precision.
    #[default]
    Recurrence,
    /// The alternating sum in interval-checked fixed point big integers.
    HighPrecision,
}

/// Materialized `K_s(n, m; M)` for `n <= n_out`, `m <= n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingKernel {
    s: f64,
    modes: f64,
    n_in: u32,
    n_out: u32,
    entries: Vec<f64>,
    precision_bits: u32,
    column_residuals: Vec<f64>,
    column_abs_sums: Vec<f64>,
}

impl OrderingKernel {
    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn modes(&self) -> f64 {
        self.modes
    }

    pub fn n_in(&self) -> u32 {
        self.n_in
    }

    pub fn n_out(&self) -> u32 {
        self.n_out
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    /// `|1 - Σ_n K(n,m)|` per input column.
    pub fn column_residuals(&self) -> &[f64] {
        &self.column_residuals
    }

    pub fn column_abs_sums(&self) -> &[f64] {
        &self.column_abs_sums
    }

    #[inline]
    pub fn get(&self, n: u32, m: u32) -> f64 {
        if n > self.n_out || m > self.n_in {
            0.0
        } else {
            self.entries[n as usize * (self.n_in as usize + 1) + m as usize]
        }
    }

    /// Row `n`, i.e. `K(n, 0..=n_in)`.
    pub fn row(&self, n: u32) -> &[f64] {
        let w = self.n_in as usize + 1;
        &self.entries[n as usize * w..(n as usize + 1) * w]
    }

    /// Writes `n,m,value` rows.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "n,m,value")?;
        for n in 0..=self.n_out {
            for m in 0..=self.n_in {
                writeln!(out, "{n},{m},{:e}", self.get(n, m))?;
            }
        }
        Ok(())
    }
}

/// Ratios of the recurrence form: `b = (1-s)/(3-s)`, `v = (1+s)/(3-s)`.
fn ratios(s: f64) -> (f64, f64) {
    ((1.0 - s) / (3.0 - s), (1.0 + s) / (3.0 - s))
}

/// Rows `0..n_rows` of the kernel by the column recurrence.
///
/// Column 0 is Mandel–Rice with `ν = (1-s)/2`; column `m` follows from
/// column `m-1` by the generating-function step `(b + v x)/(1 - b x)`,
/// which only adds positive quantities.
pub fn kernel_rows(s: f64, modes: f64, n_in: u32, n_rows: usize) -> Vec<f64> {
    let w = n_in as usize + 1;
    let mut out = vec![0.0; n_rows * w];
    if s == 1.0 {
        for n in 0..n_rows.min(w) {
            out[n * w + n] = 1.0;
        }
        return out;
    }
    let (b, v) = ratios(s);
    let col0 = mandel_rice_prefix(0.5 * (1.0 - s), modes, n_rows);
    for (n, &p) in col0.iter().enumerate() {
        out[n * w] = p;
    }
    let mut r = vec![0.0; n_rows];
    for m in 1..w {
        let mut prev = 0.0;
        for n in 0..n_rows {
            prev = out[n * w + m - 1] + b * prev;
            r[n] = prev;
        }
        out[m] = b * r[0];
        for n in 1..n_rows {
            out[n * w + m] = b * r[n] + v * r[n - 1];
        }
    }
    out
}

/// Builds the kernel with the default (recurrence) method.
pub fn build_kernel(s: f64, modes: f64, n_in: u32) -> Result<OrderingKernel, KernelError> {
    build_kernel_with(s, modes, n_in, KernelMethod::Recurrence)
}

/// Builds the kernel, growing the output range until every column sums to
/// one within [`COLUMN_TOLERANCE`].
pub fn build_kernel_with(s: f64, modes: f64, n_in: u32, method: KernelMethod) -> Result<OrderingKernel, KernelError> {
    build_kernel_rows(s, modes, n_in, 0, method)
}

/// As [`build_kernel_with`] but keeping at least `min_rows` output rows.
pub fn build_kernel_rows(s: f64, modes: f64, n_in: u32, min_rows: u32, method: KernelMethod) -> Result<OrderingKernel, KernelError> {
    check_params(s, modes)?;
    let w = n_in as usize + 1;
    let beta = 0.5 * (1.0 - s);
    let mean = n_in as f64 + modes * beta;
    let spread = (mean * (1.0 + 2.0 * beta) + 1.0).sqrt();
    let mut rows = ((mean + 12.0 * spread + 16.0).ceil() as usize).max(w).max(min_rows as usize + 1);
    if s == 1.0 {
        rows = w.max(min_rows as usize + 1);
    }
    loop {
        if rows > MAX_ROWS {
            return Err(KernelError::TooManyRows { s, modes });
        }
        let entries = kernel_rows(s, modes, n_in, rows);
        let mut sums = vec![0.0; w];
        let mut abs_sums = vec![0.0; w];
        for n in 0..rows {
            for m in 0..w {
                let e = entries[n * w + m];
                sums[m] += e;
                abs_sums[m] += e.abs();
            }
        }
        let residuals: Vec<f64> = sums.iter().map(|t| (1.0 - t).abs()).collect();
        if residuals.iter().all(|&r| r < COLUMN_TOLERANCE) {
            let (entries, precision_bits) = match method {
                KernelMethod::Recurrence => (entries, f64::MANTISSA_DIGITS),
                KernelMethod::HighPrecision if s == 1.0 => (entries, f64::MANTISSA_DIGITS),
                KernelMethod::HighPrecision => high_precision_rows(s, modes, n_in, rows)?,
            };
            let (residuals, abs_sums) = if method == KernelMethod::HighPrecision {
                let mut sums = vec![0.0; w];
                let mut abs = vec![0.0; w];
                for n in 0..rows {
                    for m in 0..w {
                        sums[m] += entries[n * w + m];
                        abs[m] += entries[n * w + m].abs();
                    }
                }
                (sums.iter().map(|t| (1.0 - t).abs()).collect(), abs)
            } else {
                (residuals, abs_sums)
            };
            return Ok(OrderingKernel {
                s,
                modes,
                n_in,
                n_out: rows as u32 - 1,
                entries,
                precision_bits,
                column_residuals: residuals,
                column_abs_sums: abs_sums,
            });
        }
        rows *= 2;
    }
}

/// Signed quasi-probability table produced by an ordering transform.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiTable {
    pub cutoff_s: u32,
    pub cutoff_i: u32,
    pub values: Vec<f64>,
}

impl QuasiTable {
    #[inline]
    pub fn get(&self, n_s: u32, n_i: u32) -> f64 {
        if n_s > self.cutoff_s || n_i > self.cutoff_i {
            0.0
        } else {
            self.values[n_s as usize * (self.cutoff_i as usize + 1) + n_i as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Falling-factorial moment of the table.
    pub fn factorial_moment(&self, k: u32, l: u32) -> f64 {
        let fall = |n: u32, k: u32| (0..k).fold(1.0, |acc, j| acc * n.saturating_sub(j) as f64);
        let mut v = 0.0;
        for a in k..=self.cutoff_s {
            for b in l..=self.cutoff_i {
                v += self.get(a, b) * fall(a, k) * fall(b, l);
            }
        }
        v
    }
}

/// `p_s(n_s, n_i) = Σ K_s(n_s,a) K_s(n_i,b) p(a,b)` with the same `(s, M)` on both arms.
pub fn apply_ordering(pmf: &JointPmf, s: f64, modes: f64) -> Result<QuasiTable, KernelError> {
    apply_ordering_arms(pmf, (s, modes), (s, modes))
}

/// Per-arm `(s, M)` override of [`apply_ordering`].
pub fn apply_ordering_arms(pmf: &JointPmf, signal: (f64, f64), idler: (f64, f64)) -> Result<QuasiTable, KernelError> {
    let ks = build_kernel(signal.0, signal.1, pmf.cutoff_s())?;
    let ki = build_kernel(idler.0, idler.1, pmf.cutoff_i())?;
    let (cs, ci) = (pmf.cutoff_s() as usize + 1, pmf.cutoff_i() as usize + 1);
    let (rs, ri) = (ks.n_out() as usize + 1, ki.n_out() as usize + 1);
    // mid(a, n_i) = Σ_b p(a,b) K_i(n_i, b)
    let mut mid = vec![0.0; cs * ri];
    mid.par_chunks_mut(ri).enumerate().for_each(|(a, row)| {
        for (ni, out) in row.iter_mut().enumerate() {
            let k = ki.row(ni as u32);
            *out = (0..ci).map(|b| pmf.get(a as u32, b as u32) * k[b]).sum();
        }
    });
    let mut values = vec![0.0; rs * ri];
    values.par_chunks_mut(ri).enumerate().for_each(|(ns, row)| {
        let k = ks.row(ns as u32);
        for (ni, out) in row.iter_mut().enumerate() {
            *out = (0..cs).map(|a| k[a] * mid[a * ri + ni]).sum();
        }
    });
    Ok(QuasiTable { cutoff_s: rs as u32 - 1, cutoff_i: ri as u32 - 1, values })
}

/// `Σ_{m,m'} x[m] y[m'] p(m,m')`, summed over unordered index pairs so that
/// swapping `x`, `y` together with transposing `p` gives a bitwise equal result.
pub(crate) fn bilinear_cell(x: &[f64], y: &[f64], pmf: &JointPmf) -> f64 {
    let n = x.len().max(y.len());
    let xv = |m: usize| x.get(m).copied().unwrap_or(0.0);
    let yv = |m: usize| y.get(m).copied().unwrap_or(0.0);
    let mut acc = 0.0;
    for m in 0..n {
        let pd = pmf.get(m as u32, m as u32);
        if pd != 0.0 {
            acc += (xv(m) * yv(m)) * pd;
        }
        for m2 in (m + 1)..n {
            let p1 = pmf.get(m as u32, m2 as u32);
            let p2 = pmf.get(m2 as u32, m as u32);
            if p1 == 0.0 && p2 == 0.0 {
                continue;
            }
            acc += (xv(m) * yv(m2)) * p1 + (xv(m2) * yv(m)) * p2;
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// interval evaluation of the alternating sum

/// Exact `mant · 2^exp`.
#[derive(Debug, Clone)]
struct Dyadic {
    mant: BigInt,
    exp: i64,
}

impl Dyadic {
    fn of(x: f64) -> Dyadic {
        use num_traits::float::FloatCore;
        let (m, e, sign) = FloatCore::integer_decode(x);
        Dyadic { mant: BigInt::from(m) * sign as i64, exp: e as i64 }
    }

    fn int(x: i64) -> Dyadic {
        Dyadic { mant: BigInt::from(x), exp: 0 }
    }

    /// Mantissa scaled to exponent `e <= self.exp`.
    fn at(&self, e: i64) -> BigInt {
        &self.mant << ((self.exp - e) as usize)
    }

    fn add(&self, other: &Dyadic) -> Dyadic {
        let e = self.exp.min(other.exp);
        Dyadic { mant: self.at(e) + other.at(e), exp: e }
    }
}

/// `log2 |x|` for a big integer, with its sign.
fn big_log2(x: &BigInt) -> (Sign, f64) {
    let bits = x.bits();
    if bits == 0 {
        return (Sign::NoSign, f64::NEG_INFINITY);
    }
    let shift = bits.saturating_sub(60);
    let top = (x.abs() >> shift as usize).to_f64().unwrap();
    (x.sign(), top.log2() + shift as f64)
}

/// Fixed-point data shared by every entry of a given `(s, M)` at precision `P`.
struct FixedPoint {
    bits: u32,
    /// `floor/ceil(c^l 2^P)` for `c = 4 / ((1+s)(3-s))`.
    pow_lo: Vec<BigInt>,
    pow_hi: Vec<BigInt>,
    /// `(l - 1 + j) + M` scaled by `2^{-e0}`: factor numerators share exponent `e0`.
    modes: Dyadic,
    e0: i64,
}

impl FixedPoint {
    fn new(s: f64, modes: f64, bits: u32, max_l: u32) -> FixedPoint {
        let sd = Dyadic::of(s);
        let a = Dyadic::int(1).add(&sd);
        let b = Dyadic::int(3).add(&Dyadic { mant: -sd.mant.clone(), exp: sd.exp });
        let den = &a.mant * &b.mant;
        let shift = bits as i64 + 2 - a.exp - b.exp;
        let (num, den) = if shift >= 0 { (BigInt::one() << shift as usize, den) } else { (BigInt::one(), den << (-shift) as usize) };
        let (c_lo, rem) = num.div_rem(&den);
        let c_hi = if rem.is_zero() { c_lo.clone() } else { &c_lo + 1 };
        let one = BigInt::one() << bits as usize;
        let mut pow_lo = vec![one.clone()];
        let mut pow_hi = vec![one];
        for l in 1..=max_l as usize {
            let lo = (&pow_lo[l - 1] * &c_lo) >> bits as usize;
            let hi_full = &pow_hi[l - 1] * &c_hi;
            let hi = {
                let q = &hi_full >> bits as usize;
                if (&q << bits as usize) == hi_full { q } else { q + 1 }
            };
            pow_lo.push(lo);
            pow_hi.push(hi);
        }
        let md = Dyadic::of(modes);
        let e0 = md.exp.min(0);
        FixedPoint { bits, pow_lo, pow_hi, modes: md, e0 }
    }

    /// Numerator of `(l - 1 + j) + M` at exponent `e0`.
    fn factor(&self, l: u32, j: u32) -> BigInt {
        (BigInt::from(l as i64 - 1 + j as i64) << (-self.e0) as usize) + self.modes.at(self.e0)
    }
}

/// `ln` of the prefactor `(2/(3-s))^M ((1+s)/(1-s))^m ((1-s)/(3-s))^n / n!`.
fn log_prefactor(n: u32, m: u32, s: f64, modes: f64) -> f64 {
    modes * (2.0 / (3.0 - s)).ln() + m as f64 * ((1.0 + s) / (1.0 - s)).ln() + n as f64 * ((1.0 - s) / (3.0 - s)).ln() - ln_factorial(n)
}

/// Converts the interval `[lo, hi] · 2^{scale}` times `e^{ln_pref}` to a double,
/// or `None` when the interval is too wide.
fn resolve(lo: &BigInt, hi: &BigInt, scale: i64, ln_pref: f64) -> Option<f64> {
    let ln2 = std::f64::consts::LN_2;
    let (shi, log_hi) = big_log2(hi);
    let (slo, log_lo) = big_log2(lo);
    let width = hi - lo;
    let (_, log_w) = big_log2(&width);
    let to_ln = |log2: f64| (log2 + scale as f64) * ln2 + ln_pref;
    // everything below the smallest normal double is returned as its midpoint
    if shi != Sign::Minus && to_ln(log_hi.max(log_lo)) < (1e-300f64).ln() {
        return Some(0.0);
    }
    if slo != Sign::Plus || shi != Sign::Plus {
        return None;
    }
    if width.is_positive() && log_w - log_lo > (1e-12f64).log2() {
        return None;
    }
    let mid: BigInt = (lo + hi) >> 1usize;
    let (_, log_mid) = big_log2(&mid);
    Some(to_ln(log_mid).exp())
}

/// One entry of the kernel by the alternating sum at `precision_bits` of
/// fixed-point precision; wide intervals ask the caller to retry with more bits.
pub fn kernel_entry(n: u32, m: u32, s: f64, modes: f64, precision_bits: u32) -> Result<f64, KernelError> {
    check_params(s, modes)?;
    if s == 1.0 {
        return Ok(if n == m { 1.0 } else { 0.0 });
    }
    let fp = FixedPoint::new(s, modes, precision_bits, m);
    let (mut lo, mut hi) = (BigInt::zero(), BigInt::zero());
    let mut cml = BigUint::one();
    for l in 0..=m {
        let mut d = BigInt::one();
        for j in 1..=n {
            d *= fp.factor(l, j);
        }
        let t = d * BigInt::from(cml.clone());
        if (m - l).is_multiple_of(2) {
            lo += &t * &fp.pow_lo[l as usize];
            hi += &t * &fp.pow_hi[l as usize];
        } else {
            lo -= &t * &fp.pow_hi[l as usize];
            hi -= &t * &fp.pow_lo[l as usize];
        }
        cml = cml * BigUint::from(m - l) / BigUint::from(l + 1);
    }
    let scale = n as i64 * fp.e0 - fp.bits as i64;
    resolve(&lo, &hi, scale, log_prefactor(n, m, s, modes))
        .ok_or(KernelError::PrecisionEscalation { n, m, s, modes, bits: precision_bits })
}

/// Starting precision `64 + 4 (n + m + ceil M)`.
pub fn default_precision(n: u32, m: u32, modes: f64) -> u32 {
    64 + 4 * (n + m + modes.ceil() as u32)
}

/// [`kernel_entry`] with precision doubling up to [`MAX_PRECISION_BITS`].
/// Returns the value and the precision that resolved it.
pub fn kernel_entry_adaptive(n: u32, m: u32, s: f64, modes: f64) -> Result<(f64, u32), KernelError> {
    let mut bits = default_precision(n, m, modes).min(MAX_PRECISION_BITS);
    loop {
        match kernel_entry(n, m, s, modes, bits) {
            Ok(v) => return Ok((v, bits)),
            Err(KernelError::PrecisionEscalation { .. }) if bits < MAX_PRECISION_BITS => {
                bits = (bits * 2).min(MAX_PRECISION_BITS);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Whole kernel block by the alternating sum, sharing row products across
/// columns; entries that fail at the base precision escalate individually.
fn high_precision_rows(s: f64, modes: f64, n_in: u32, rows: usize) -> Result<(Vec<f64>, u32), KernelError> {
    let w = n_in as usize + 1;
    let bits = default_precision(rows as u32 - 1, n_in, modes).min(MAX_PRECISION_BITS);
    let fp = FixedPoint::new(s, modes, bits, n_in);
    let mut pascal: Vec<Vec<BigInt>> = Vec::with_capacity(w);
    for m in 0..w {
        let mut row = vec![BigInt::one(); m + 1];
        for l in 1..m {
            row[l] = &pascal[m - 1][l - 1] + &pascal[m - 1][l];
        }
        pascal.push(row);
    }
    let mut entries = vec![0.0; rows * w];
    let mut d: Vec<BigInt> = vec![BigInt::one(); w];
    let mut failed = Vec::new();
    for n in 0..rows {
        if n > 0 {
            d.par_iter_mut().enumerate().for_each(|(l, dl)| *dl *= fp.factor(l as u32, n as u32));
        }
        let e_lo: Vec<BigInt> = d.iter().zip(&fp.pow_lo).map(|(a, b)| a * b).collect();
        let e_hi: Vec<BigInt> = d.iter().zip(&fp.pow_hi).map(|(a, b)| a * b).collect();
        let scale = n as i64 * fp.e0 - fp.bits as i64;
        let row: Vec<Option<f64>> = (0..w)
            .into_par_iter()
            .map(|m| {
                let (mut lo, mut hi) = (BigInt::zero(), BigInt::zero());
                for l in 0..=m {
                    let c = &pascal[m][l];
                    if (m - l) % 2 == 0 {
                        lo += c * &e_lo[l];
                        hi += c * &e_hi[l];
                    } else {
                        lo -= c * &e_hi[l];
                        hi -= c * &e_lo[l];
                    }
                }
                resolve(&lo, &hi, scale, log_prefactor(n as u32, m as u32, s, modes))
            })
            .collect();
        for (m, v) in row.into_iter().enumerate() {
            match v {
                Some(v) => entries[n * w + m] = v,
                None => failed.push((n, m)),
            }
        }
    }
    let mut max_bits = bits;
    for (n, m) in failed {
        let mut b = (bits * 2).min(MAX_PRECISION_BITS);
        loop {
            match kernel_entry(n as u32, m as u32, s, modes, b) {
                Ok(v) => {
                    entries[n * w + m] = v;
                    max_bits = max_bits.max(b);
                    break;
                }
                Err(KernelError::PrecisionEscalation { .. }) if b < MAX_PRECISION_BITS => b = (b * 2).min(MAX_PRECISION_BITS),
                Err(e) => return Err(e),
            }
        }
    }
    Ok((entries, max_bits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn s_function_examples() {
        for &alpha in &[0.0, 0.5, 79.0] {
            assert!(s_function(1, 2, alpha).is_zero());
        }
        assert_eq!(s_function(2, 2, 0.0), BigRational::one());
        assert_eq!(s_function(2, 1, 0.0), BigRational::one());
    }

    #[test]
    fn kernel_entry_examples() {
        let (v, _) = kernel_entry_adaptive(0, 0, 0.0, 5.0).unwrap();
        assert_relative_eq!(v, (2.0f64 / 3.0).powi(5), max_relative = 1e-13);
        for n in 0..10 {
            let (v, _) = kernel_entry_adaptive(n, 0, 0.0, 1.0).unwrap();
            assert_relative_eq!(v, 2.0 / 3.0 * (1.0f64 / 3.0).powi(n as i32), max_relative = 1e-13);
        }
    }

    #[test]
    fn kernel_entry_approaches_delta() {
        let s = 1.0 - 1e-9;
        let (d, _) = kernel_entry_adaptive(3, 3, s, 2.0).unwrap();
        let (o, _) = kernel_entry_adaptive(4, 3, s, 2.0).unwrap();
        assert!((d - 1.0).abs() < 1e-7 && o.abs() < 1e-7, "{d} {o}");
    }

    #[test]
    fn recurrence_matches_alternating_sum() {
        for &(s, modes) in &[(0.0, 1.0), (0.5, 80.0), (-0.5, 3.5), (-0.9, 80.0), (0.9375, 10.0)] {
            let rows = kernel_rows(s, modes, 12, 40);
            for n in [0u32, 1, 5, 17, 39] {
                for m in [0u32, 1, 6, 12] {
                    let (hp, _) = kernel_entry_adaptive(n, m, s, modes).unwrap();
                    let rec = rows[n as usize * 13 + m as usize];
                    assert_relative_eq!(rec, hp, max_relative = 1e-10, epsilon = 1e-290);
                }
            }
        }
    }

    #[test]
    fn insufficient_precision_escalates() {
        let r = kernel_entry(30, 30, -0.9, 80.0, 16);
        assert!(matches!(r, Err(KernelError::PrecisionEscalation { .. })), "{r:?}");
    }

    #[test]
    fn identity_at_s1() {
        let k = build_kernel(1.0, 80.0, 10).unwrap();
        for n in 0..=k.n_out() {
            for m in 0..=10 {
                assert_eq!(k.get(n, m), if n == m { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn column_sums() {
        let k = build_kernel(0.0, 1.0, 0).unwrap();
        assert!(k.column_residuals()[0] < 1e-9);
        let k = build_kernel(0.5, 80.0, 30).unwrap();
        assert_eq!(k.column_residuals().len(), 31);
        assert!(k.column_residuals().iter().all(|&r| r < 1e-9));
    }

    #[test]
    fn high_precision_build_agrees() {
        let a = build_kernel_with(-0.3, 4.0, 8, KernelMethod::Recurrence).unwrap();
        let b = build_kernel_with(-0.3, 4.0, 8, KernelMethod::HighPrecision).unwrap();
        assert_eq!(a.n_out(), b.n_out());
        assert!(b.precision_bits() > 64);
        for n in 0..=a.n_out() {
            for m in 0..=8 {
                assert_relative_eq!(a.get(n, m), b.get(n, m), max_relative = 1e-11, epsilon = 1e-290);
            }
        }
    }

    #[test]
    fn mandel_rice_examples() {
        assert_relative_eq!(mandel_rice(0, 0.7, 3.0), 1.7f64.powf(-3.0), max_relative = 1e-14);
        for n in 0..8 {
            assert_relative_eq!(mandel_rice(n, 2.0, 1.0), 2f64.powi(n as i32) / 3f64.powi(n as i32 + 1), max_relative = 1e-13);
        }
        let total: f64 = (0..2000).map(|n| mandel_rice(n, 1.0, 80.0)).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        let pre = mandel_rice_prefix(1.3, 7.5, 50);
        for (n, &p) in pre.iter().enumerate() {
            assert_relative_eq!(p, mandel_rice(n as u32, 1.3, 7.5), max_relative = 1e-12);
        }
    }

    #[test]
    fn vacuum_ordering_is_geometric_product() {
        let t = apply_ordering(&JointPmf::delta(0, 0), 0.0, 1.0).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let g = |n: u32| 2.0 / 3.0 * (1.0f64 / 3.0).powi(n as i32);
                assert_relative_eq!(t.get(a, b), g(a) * g(b), max_relative = 1e-13);
            }
        }
        assert_relative_eq!(t.total(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn noise_identity_and_mean_shift() {
        let p = JointPmf::new(1, 1, vec![0.25, 0.25, 0.25, 0.25], 0.0).unwrap();
        assert_eq!(apply_noise(&p, 0.0, 3.0).unwrap(), p);
        let out = apply_noise(&p, 0.4, 3.0).unwrap();
        let mean = out.factorial_moment(1, 0).value;
        assert_relative_eq!(mean, 0.5 + 1.2, max_relative = 1e-10);
    }

    #[test]
    fn bilinear_cell_matches_direct() {
        let p = JointPmf::new(1, 2, vec![0.1, 0.2, 0.05, 0.3, 0.15, 0.2], 0.0).unwrap();
        let x = [0.3, -0.2, 0.9];
        let y = [1.1, 0.4, -0.6];
        let direct: f64 = (0..2).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| x[a] * y[b] * p.get(a as u32, b as u32)).sum();
        assert_relative_eq!(bilinear_cell(&x, &y, &p), direct, epsilon = 1e-15);
        assert_eq!(bilinear_cell(&x, &y, &p).to_bits(), bilinear_cell(&y, &x, &p.transpose()).to_bits());
    }

    #[test]
    fn bilinear_cell_unequal_lengths() {
        let p = JointPmf::new(2, 1, vec![0.1, 0.2, 0.05, 0.3, 0.15, 0.2], 0.0).unwrap();
        let x = [0.3, -0.2, 0.9];
        let y = [1.1, 0.4];
        let direct: f64 = (0..3).flat_map(|a| (0..2).map(move |b| (a, b))).map(|(a, b)| x[a] * y[b] * p.get(a as u32, b as u32)).sum();
        assert_relative_eq!(bilinear_cell(&x, &y, &p), direct, epsilon = 1e-15);
        assert_relative_eq!(bilinear_cell(&y, &x, &p.transpose()), direct, epsilon = 1e-15);
    }
}
