//! Small numerical helpers shared by the kernels and criteria.

use statrs::function::gamma::ln_gamma;

/// `ln Γ(x)` for `x > 0`.
pub fn lgamma(x: f64) -> f64 {
    ln_gamma(x)
}

/// `ln n!`
pub fn ln_factorial(n: u32) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// `n!` as a float. Exact for `n <= 22`, rounded above.
pub fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, j| acc * j as f64)
}

/// Binomial coefficient `C(n, k)` as a float.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for j in 0..k {
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    c.round()
}

/// Ratio `a! b! / (c! d!)` evaluated as a product of small factors.
pub fn factorial_ratio(num: &[u32], den: &[u32]) -> f64 {
    let mut n: Vec<u32> = num.to_vec();
    let mut d: Vec<u32> = den.to_vec();
    n.sort_unstable();
    d.sort_unstable();
    let mut r = 1.0;
    let len = n.len().max(d.len());
    n.resize(len, 0);
    d.resize(len, 0);
    // pair the sorted lists so partial products stay near unity
    for (&a, &b) in n.iter().zip(d.iter()) {
        if a >= b {
            for j in (b + 1)..=a {
                r *= j as f64;
            }
        } else {
            for j in (a + 1)..=b {
                r /= j as f64;
            }
        }
    }
    r
}

/// Generalized Laguerre polynomial `L_k^α(x)` by the three-term recurrence.
pub fn laguerre(k: u32, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for j in 1..k {
        let j = j as f64;
        let next = ((2.0 * j + 1.0 + alpha - x) * cur - (j + alpha) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Monomial coefficients of `L_k^α`, lowest power first.
pub fn laguerre_coefficients(k: u32, alpha: f64) -> Vec<f64> {
    // L_k^α(x) = Σ_j (-1)^j Γ(k+α+1) / (Γ(k-j+1) Γ(α+j+1) j!) x^j
    let mut c = Vec::with_capacity(k as usize + 1);
    // j = 0 term: C(k+α, k)
    let mut term = 1.0;
    for j in 1..=k {
        term *= (alpha + j as f64) / j as f64;
    }
    c.push(term);
    for j in 0..k {
        // ratio of consecutive terms
        term *= -((k - j) as f64) / ((alpha + j as f64 + 1.0) * (j + 1) as f64);
        c.push(term);
    }
    c
}
