//! Sparse polynomials in table cells, shared by probability and moment forms.
//!
//! A term is `coeff · Π x(a_j, b_j)` where `x` is either a probability
//! `p(a,b)` or a normally ordered moment `<W_s^a W_i^b>`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::pmf::Arm;
use crate::special::{factorial, factorial_ratio};

pub type Cell = (u32, u32);

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: f64,
    /// Factors in ascending order, repeated for powers.
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    terms: Vec<Term>,
}

/// Result of evaluating a polynomial on concrete cell values.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub value: f64,
    /// `Σ |term|`, the magnitude against which rounding is judged.
    pub scale: f64,
    pub term_values: Vec<f64>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Poly {
        Poly { terms: vec![Term { coeff: c, cells: Vec::new() }] }.normalized()
    }

    pub fn cell(a: u32, b: u32) -> Poly {
        Poly { terms: vec![Term { coeff: 1.0, cells: vec![(a, b)] }] }
    }

    /// `x_a(x, y)`: `x(x,y)` on the signal arm, `x(y,x)` on the idler arm.
    pub fn arm_cell(arm: Arm, x: u32, y: u32) -> Poly {
        match arm {
            Arm::Signal => Poly::cell(x, y),
            Arm::Idler => Poly::cell(y, x),
        }
    }

    /// `Σ_b f(b)` over both arms.
    pub fn sum_arms(f: impl Fn(Arm) -> Poly) -> Poly {
        f(Arm::Signal) + f(Arm::Idler)
    }

    pub fn from_terms(terms: Vec<Term>) -> Poly {
        Poly { terms }.normalized()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sorts factors and terms, merges like terms and drops zero coefficients.
    fn normalized(mut self) -> Poly {
        for t in &mut self.terms {
            t.cells.sort_unstable();
        }
        self.terms.sort_by(|a, b| a.cells.cmp(&b.cells));
        let mut out: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms {
            match out.last_mut() {
                Some(last) if last.cells == t.cells => last.coeff += t.coeff,
                _ => out.push(t),
            }
        }
        out.retain(|t| t.coeff != 0.0);
        Poly { terms: out }
    }

    pub fn pow(&self, k: u32) -> Poly {
        (0..k).fold(Poly::constant(1.0), |acc, _| acc * self.clone())
    }

    pub fn scale(self, c: f64) -> Poly {
        self * c
    }

    /// Largest number of factors in a term.
    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.cells.len()).max().unwrap_or(0)
    }

    pub fn is_homogeneous(&self) -> bool {
        let d = self.degree();
        self.terms.iter().all(|t| t.cells.len() == d)
    }

    /// Largest signal and idler indices that occur.
    pub fn max_index(&self) -> Cell {
        self.cells().fold((0, 0), |(a, b), (x, y)| (a.max(x), b.max(y)))
    }

    /// Every distinct cell, sorted.
    pub fn cells(&self) -> impl Iterator<Item = Cell> {
        let mut c: Vec<Cell> = self.terms.iter().flat_map(|t| t.cells.iter().copied()).collect();
        c.sort_unstable();
        c.dedup();
        c.into_iter()
    }

    pub fn contains_cell(&self, cell: Cell) -> bool {
        self.terms.iter().any(|t| t.cells.contains(&cell))
    }

    /// Exchanges signal and idler indices.
    pub fn swap_arms(&self) -> Poly {
        Poly::from_terms(
            self.terms.iter().map(|t| Term { coeff: t.coeff, cells: t.cells.iter().map(|&(a, b)| (b, a)).collect() }).collect(),
        )
    }

    /// Evaluates with the given cell values.
    ///
    /// Factors and terms are combined in sorted order so the result does not
    /// depend on how the polynomial happens to be laid out; in particular a
    /// polynomial and its arm-swapped image agree bitwise on transposed tables.
    pub fn eval(&self, mut cell: impl FnMut(u32, u32) -> f64) -> Evaluated {
        let mut term_values = Vec::with_capacity(self.terms.len());
        let mut factors = Vec::new();
        for t in &self.terms {
            factors.clear();
            factors.extend(t.cells.iter().map(|&(a, b)| cell(a, b)));
            factors.sort_by(f64::total_cmp);
            term_values.push(factors.iter().fold(t.coeff, |acc, &f| acc * f));
        }
        let mut sorted = term_values.clone();
        sorted.sort_by(f64::total_cmp);
        let value = sorted.iter().sum();
        let scale = sorted.iter().map(|v| v.abs()).sum();
        Evaluated { value, scale, term_values }
    }

    /// Maps a moment polynomial to probabilities through
    /// `<W_s^a W_i^b> = a! b! p(a,b) / p(0,0)`, multiplied by `p(0,0)^R` with `R`
    /// the degree so that the result is a homogeneous polynomial.
    pub fn moment_to_probability(&self) -> Poly {
        let r = self.degree();
        Poly::from_terms(
            self.terms
                .iter()
                .map(|t| {
                    let coeff = t.cells.iter().fold(t.coeff, |acc, &(a, b)| acc * factorial(a) * factorial(b));
                    let mut cells = t.cells.clone();
                    cells.resize(r, (0, 0));
                    Term { coeff, cells }
                })
                .collect(),
        )
    }

    /// Same as [`Poly::moment_to_probability`] followed by division by `a! b!`,
    /// with the factorial ratios formed directly to avoid overflow.
    pub fn moment_to_probability_normalized(&self, den: &[u32]) -> Poly {
        let r = self.degree();
        Poly::from_terms(
            self.terms
                .iter()
                .map(|t| {
                    let num: Vec<u32> = t.cells.iter().flat_map(|&(a, b)| [a, b]).collect();
                    let mut cells = t.cells.clone();
                    cells.resize(r, (0, 0));
                    Term { coeff: t.coeff * factorial_ratio(&num, den), cells }
                })
                .collect(),
        )
    }

    /// Inverse of the mapping for a homogeneous probability polynomial:
    /// `p(a,b) -> <W_s^a W_i^b> / (a! b!)`, dropping the common `p(0,0)^R`.
    pub fn probability_to_moment(&self) -> Poly {
        debug_assert!(self.is_homogeneous());
        Poly::from_terms(
            self.terms
                .iter()
                .map(|t| {
                    let coeff = t.cells.iter().fold(t.coeff, |acc, &(a, b)| acc / (factorial(a) * factorial(b)));
                    let cells = t.cells.iter().copied().filter(|&c| c != (0, 0)).collect();
                    Term { coeff, cells }
                })
                .collect(),
        )
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(mut self, rhs: Poly) -> Poly {
        self.terms.extend(rhs.terms);
        self.normalized()
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        self + (-rhs)
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(mut self) -> Poly {
        for t in &mut self.terms {
            t.coeff = -t.coeff;
        }
        self
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for a in &self.terms {
            for b in &rhs.terms {
                let mut cells = a.cells.clone();
                cells.extend_from_slice(&b.cells);
                terms.push(Term { coeff: a.coeff * b.coeff, cells });
            }
        }
        Poly { terms }.normalized()
    }
}

impl Mul<f64> for Poly {
    type Output = Poly;
    fn mul(mut self, c: f64) -> Poly {
        for t in &mut self.terms {
            t.coeff *= c;
        }
        self.normalized()
    }
}

impl Mul<Poly> for f64 {
    type Output = Poly;
    fn mul(self, p: Poly) -> Poly {
        p * self
    }
}
