//! Criterion families in probability and moment form.
//!
//! Index conventions: the polynomial families `E3`/`E4` are addressed by the
//! indices of their probability form, so `E:k_s,k_i,l` is
//! `k_s+1)/k_i p(k_s+1,k_i-1) + ...`, whose moment counterpart is
//! `<W_s^{k_s-l} W_i^{k_i-l} (W_s-W_i)^{2l}>`. Appendix names such as `E001`
//! follow the moment labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pmf::{Arm, JointPmf, MomentVector, PmfError};
use crate::poly::{Cell, Evaluated, Poly};
use crate::special::{binomial, factorial, factorial_ratio};

/// Relative size below which a value is indistinguishable from zero.
pub const ROUNDING_REL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriterionError {
    #[error("invalid indices for {family}: {message}")]
    InvalidIndices { family: &'static str, message: String },
    #[error("p(0,0) = 0: {0} is only defined for fields with a vacuum component")]
    DivisionByVacuum(String),
    #[error("moment of order ({0},{1}) is not available")]
    MissingOrder(u32, u32),
    #[error("cannot parse criterion '{0}': {1}")]
    Parse(String, String),
}

fn invalid(family: &'static str, message: impl Into<String>) -> CriterionError {
    CriterionError::InvalidIndices { family, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    E3,
    E4,
    CS,
    M3,
    D3,
    D4,
    Dsys1,
    Dsys2,
    Dsys3,
    DminBall3,
    DminBall4,
    Dmn,
    AppendixA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Representation {
    #[default]
    Probability,
    Moment,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    E3 { ks: u32, ki: u32, l: u32 },
    E4 { ks: u32, ki: u32, ls: u32, li: u32 },
    Cs { n: Cell, l: Cell },
    M3 { k: Cell, l: Cell, n: Cell },
    D3 { arm: Arm, upper: [u32; 3], lower: [u32; 3] },
    D4 { upper: [u32; 4], lower: [u32; 4] },
    Dsys1 { arm: Arm, k: u32, l: u32, m: u32 },
    Dsys2 { arm: Arm, k: u32, l: u32, m: u32 },
    Dsys3 { k: u32, l: u32, m: u32 },
    MinBall3 { arm: Arm, k: u32, l: u32, m: u32 },
    MinBall4 { k: u32, l: u32, m: u32, n: u32 },
    Dmn { k: u32, l: u32, m: u32, n: u32 },
    Appendix { label: u8, arm: Option<Arm> },
}

/// A validated criterion together with the representation to evaluate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CriterionSpec {
    criterion: Criterion,
    representation: Representation,
}

impl PartialOrd for Representation {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Representation {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

// ---------------------------------------------------------------------------
// appendix registry

/// `(label, name, arm dependent)`; arm-dependent names take an `s`/`i` prefix.
const APPENDIX: [(u8, &str, bool); 32] = [
    (1, "E001", false),
    (2, "E101", false),
    (3, "E011", false),
    (4, "E201", false),
    (5, "E021", false),
    (6, "E111", false),
    (7, "E301", false),
    (8, "E031", false),
    (9, "E211", false),
    (10, "E121", false),
    (11, "E002", false),
    (12, "E102", false),
    (13, "E012", false),
    (14, "E1011", false),
    (15, "E0111", false),
    (16, "E0011", false),
    (17, "C12_10", false),
    (18, "C01_21", false),
    (19, "M1100", false),
    (20, "M1001", false),
    (21, "M001001", false),
    (22, "D210_111", true),
    (23, "D220_211", true),
    (24, "D2110_1111", false),
    (25, "D2200_1111", false),
    (26, "D4000_1111", false),
    (27, "T2100_1110", true),
    (28, "T2100_1110", false),
    (29, "T2200_2110", true),
    (30, "T2200_2110", false),
    (31, "T2110_1111", true),
    (32, "T2110_1111", false),
];

/// The 32 appendix criteria in label order; arm-dependent ones on the signal arm.
pub fn list_appendix() -> Vec<CriterionSpec> {
    APPENDIX
        .iter()
        .map(|&(label, _, arm)| CriterionSpec::new(Criterion::Appendix { label, arm: arm.then_some(Arm::Signal) }).unwrap())
        .collect()
}

/// Every appendix criterion including both arms of the arm-dependent ones.
pub fn list_appendix_all() -> Vec<CriterionSpec> {
    let mut out = Vec::new();
    for &(label, _, arm) in &APPENDIX {
        if arm {
            for a in [Arm::Signal, Arm::Idler] {
                out.push(CriterionSpec::new(Criterion::Appendix { label, arm: Some(a) }).unwrap());
            }
        } else {
            out.push(CriterionSpec::new(Criterion::Appendix { label, arm: None }).unwrap());
        }
    }
    out
}

fn appendix_name(label: u8, arm: Option<Arm>) -> String {
    let name = APPENDIX[label as usize - 1].1;
    match arm {
        Some(a) => format!("{}{}", a.short(), name),
        None => name.to_string(),
    }
}

// ---------------------------------------------------------------------------
// construction and validation

fn majorizes(upper: &[u32], lower: &[u32]) -> bool {
    let mut u = upper.to_vec();
    let mut l = lower.to_vec();
    u.sort_unstable_by(|a, b| b.cmp(a));
    l.sort_unstable_by(|a, b| b.cmp(a));
    let (mut su, mut sl) = (0u32, 0u32);
    for (a, b) in u.iter().zip(&l) {
        su += a;
        sl += b;
        if su < sl {
            return false;
        }
    }
    su == sl
}

/// Candidates of the three-variable minimum in a fixed canonical order, each paired with
/// its own admissibility row.
fn min_ball3_candidates(k: u32, l: u32, m: u32) -> [(bool, Option<[u32; 3]>); 3] {
    let (k, l, m) = (k as i64, l as i64, m as i64);
    let t = |a: i64, b: i64, c: i64| Some([a as u32, b as u32, c as u32]);
    [
        (k > l - 1 && l > m && m >= 0, t(k + 1, (l - 1).max(0), m)),
        (k >= l && l >= m && m >= 1, t(k + 1, l, (m - 1).max(0))),
        (k > l && l >= m && m >= 1, t(k, l + 1, (m - 1).max(0))),
    ]
}

fn min_ball4_candidates(k: u32, l: u32, m: u32, n: u32) -> [(bool, Option<[u32; 4]>); 6] {
    let (k, l, m, n) = (k as i64, l as i64, m as i64, n as i64);
    let t = |a: i64, b: i64, c: i64, d: i64| Some([a.max(0) as u32, b.max(0) as u32, c.max(0) as u32, d.max(0) as u32]);
    [
        (k >= l && l >= m && m >= n && n >= 1, t(k + 1, l, m, n - 1)),
        (k > l - 1 && l > m - 1 && m > n && n >= 0, t(k + 1, l, m - 1, n)),
        (k > l - 1 && l > m && m >= n && n >= 0, t(k + 1, l - 1, m, n)),
        (k > l && l >= m && m >= n && n >= 1, t(k, l + 1, m, n - 1)),
        (k - 2 >= l - 1 && l > m - 1 && m > n && n >= 0, t(k, l + 1, m - 1, n)),
        (k > l - 1 && l > m && m >= n && n >= 1, t(k, l, m + 1, n - 1)),
    ]
}

impl Criterion {
    pub fn family(&self) -> Family {
        match self {
            Criterion::E3 { .. } => Family::E3,
            Criterion::E4 { .. } => Family::E4,
            Criterion::Cs { .. } => Family::CS,
            Criterion::M3 { .. } => Family::M3,
            Criterion::D3 { .. } => Family::D3,
            Criterion::D4 { .. } => Family::D4,
            Criterion::Dsys1 { .. } => Family::Dsys1,
            Criterion::Dsys2 { .. } => Family::Dsys2,
            Criterion::Dsys3 { .. } => Family::Dsys3,
            Criterion::MinBall3 { .. } => Family::DminBall3,
            Criterion::MinBall4 { .. } => Family::DminBall4,
            Criterion::Dmn { .. } => Family::Dmn,
            Criterion::Appendix { .. } => Family::AppendixA,
        }
    }

    fn validate(&self) -> Result<(), CriterionError> {
        match *self {
            Criterion::E3 { ks, ki, l } => {
                if l == 0 || ks < l || ki < l {
                    return Err(invalid("E3", format!("need l >= 1 and k_s, k_i >= l, got ({ks},{ki},{l})")));
                }
            }
            Criterion::E4 { ks, ki, ls, li } => {
                if ls + li == 0 || ks < ls || ki < li {
                    return Err(invalid("E4", format!("need l_s + l_i >= 1, k_s >= l_s, k_i >= l_i, got ({ks},{ki},{ls},{li})")));
                }
            }
            Criterion::Cs { n, l } => {
                if l.0 > 2 * n.0 || l.1 > 2 * n.1 {
                    return Err(invalid("CS", format!("need 2N >= L componentwise, got N={n:?}, L={l:?}")));
                }
            }
            Criterion::M3 { .. } => {}
            Criterion::D3 { upper, lower, .. } => {
                if !majorizes(&upper, &lower) {
                    return Err(invalid("D3", format!("{upper:?} does not majorize {lower:?}")));
                }
            }
            Criterion::D4 { upper, lower } => {
                if !majorizes(&upper, &lower) {
                    return Err(invalid("D4", format!("{upper:?} does not majorize {lower:?}")));
                }
            }
            Criterion::Dsys1 { k, l, m, .. } => {
                if !(k >= l && l >= m && m >= 1) {
                    return Err(invalid("Dsys1", format!("need k >= l >= m >= 1, got ({k},{l},{m})")));
                }
            }
            Criterion::Dsys2 { k, l, m, .. } => {
                if !(k >= 1 && m >= 1 && k >= m + l) {
                    return Err(invalid("Dsys2", format!("need k - m >= l, k, m >= 1, got ({k},{l},{m})")));
                }
            }
            Criterion::Dsys3 { k, l, m } => {
                if !(k >= l && l >= m && m >= 1) {
                    return Err(invalid("Dsys3", format!("need k >= l >= m >= 1, got ({k},{l},{m})")));
                }
            }
            Criterion::MinBall3 { k, l, m, .. } => {
                if !min_ball3_candidates(k, l, m).iter().any(|c| c.0) {
                    return Err(invalid("DminBall3", format!("no admissible candidate for ({k},{l},{m})")));
                }
            }
            Criterion::MinBall4 { k, l, m, n } => {
                if !min_ball4_candidates(k, l, m, n).iter().any(|c| c.0) {
                    return Err(invalid("DminBall4", format!("no admissible candidate for ({k},{l},{m},{n})")));
                }
            }
            Criterion::Dmn { k, l, m, n } => {
                if !(m >= n && n >= 1) {
                    return Err(invalid("Dmn", format!("need m >= n >= 1, got m={m}, n={n}")));
                }
                if (k + l) % 2 != 0 || k + l == 0 {
                    return Err(invalid("Dmn", format!("need k + l even and positive, got k={k}, l={l}")));
                }
            }
            Criterion::Appendix { label, arm } => {
                if !(1..=32).contains(&label) {
                    return Err(invalid("AppendixA", format!("label {label} outside 1..=32")));
                }
                if APPENDIX[label as usize - 1].2 != arm.is_some() {
                    return Err(invalid("AppendixA", format!("arm {} for {}", if arm.is_some() { "given" } else { "missing" }, APPENDIX[label as usize - 1].1)));
                }
            }
        }
        Ok(())
    }
}

impl CriterionSpec {
    pub fn new(criterion: Criterion) -> Result<Self, CriterionError> {
        criterion.validate()?;
        Ok(CriterionSpec { criterion, representation: Representation::Probability })
    }

    pub fn with_representation(mut self, representation: Representation) -> Self {
        self.representation = representation;
        self
    }

    pub fn e3(ks: u32, ki: u32, l: u32) -> Result<Self, CriterionError> {
        Self::new(Criterion::E3 { ks, ki, l })
    }

    pub fn e4(ks: u32, ki: u32, ls: u32, li: u32) -> Result<Self, CriterionError> {
        Self::new(Criterion::E4 { ks, ki, ls, li })
    }

    pub fn cs(n: Cell, l: Cell) -> Result<Self, CriterionError> {
        Self::new(Criterion::Cs { n, l })
    }

    pub fn m3(k: Cell, l: Cell, n: Cell) -> Result<Self, CriterionError> {
        Self::new(Criterion::M3 { k, l, n })
    }

    /// Appendix criterion by name, e.g. `E101`, `sD210_111`, `T2110_1111`.
    pub fn appendix(name: &str) -> Result<Self, CriterionError> {
        let (arm, base) = match name.split_at(1) {
            ("s", rest) if APPENDIX.iter().any(|e| e.2 && e.1 == rest) => (Some(Arm::Signal), rest),
            ("i", rest) if APPENDIX.iter().any(|e| e.2 && e.1 == rest) => (Some(Arm::Idler), rest),
            _ => (None, name),
        };
        let entry = APPENDIX
            .iter()
            .find(|e| e.1 == base && e.2 == arm.is_some())
            .ok_or_else(|| CriterionError::Parse(name.into(), "unknown appendix criterion".into()))?;
        Self::new(Criterion::Appendix { label: entry.0, arm })
    }

    pub fn criterion(&self) -> &Criterion {
        &self.criterion
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn family(&self) -> Family {
        self.criterion.family()
    }

    pub fn arm(&self) -> Option<Arm> {
        match self.criterion {
            Criterion::D3 { arm, .. }
            | Criterion::Dsys1 { arm, .. }
            | Criterion::Dsys2 { arm, .. }
            | Criterion::MinBall3 { arm, .. } => Some(arm),
            Criterion::Appendix { arm, .. } => arm,
            _ => None,
        }
    }

    /// Flat integer tuple identifying the criterion within its family.
    pub fn indices(&self) -> Vec<u32> {
        match self.criterion {
            Criterion::E3 { ks, ki, l } => vec![ks, ki, l],
            Criterion::E4 { ks, ki, ls, li } => vec![ks, ki, ls, li],
            Criterion::Cs { n, l } => vec![n.0, n.1, l.0, l.1],
            Criterion::M3 { k, l, n } => vec![k.0, k.1, l.0, l.1, n.0, n.1],
            Criterion::D3 { upper, lower, .. } => upper.iter().chain(&lower).copied().collect(),
            Criterion::D4 { upper, lower } => upper.iter().chain(&lower).copied().collect(),
            Criterion::Dsys1 { k, l, m, .. } | Criterion::Dsys2 { k, l, m, .. } | Criterion::Dsys3 { k, l, m } => vec![k, l, m],
            Criterion::MinBall3 { k, l, m, .. } => vec![k, l, m],
            Criterion::MinBall4 { k, l, m, n } | Criterion::Dmn { k, l, m, n } => vec![k, l, m, n],
            Criterion::Appendix { label, .. } => vec![label as u32],
        }
    }

    /// The same criterion with signal and idler exchanged, when that is again
    /// a criterion of the catalog.
    pub fn swap_arms(&self) -> Option<CriterionSpec> {
        let sw = |c: Cell| (c.1, c.0);
        let c = match self.criterion.clone() {
            Criterion::E3 { ks, ki, l } => Criterion::E3 { ks: ki, ki: ks, l },
            Criterion::E4 { ks, ki, ls, li } => Criterion::E4 { ks: ki, ki: ks, ls: li, li: ls },
            Criterion::Cs { n, l } => Criterion::Cs { n: sw(n), l: sw(l) },
            Criterion::M3 { k, l, n } => Criterion::M3 { k: sw(k), l: sw(l), n: sw(n) },
            Criterion::D3 { arm, upper, lower } => Criterion::D3 { arm: arm.other(), upper, lower },
            Criterion::Dsys1 { arm, k, l, m } => Criterion::Dsys1 { arm: arm.other(), k, l, m },
            Criterion::Dsys2 { arm, k, l, m } => Criterion::Dsys2 { arm: arm.other(), k, l, m },
            Criterion::MinBall3 { arm, k, l, m } => Criterion::MinBall3 { arm: arm.other(), k, l, m },
            c @ (Criterion::D4 { .. } | Criterion::Dsys3 { .. } | Criterion::MinBall4 { .. } | Criterion::Dmn { .. }) => c,
            Criterion::Appendix { label, arm } => match (label, arm) {
                (_, Some(a)) => Criterion::Appendix { label, arm: Some(a.other()) },
                (14, None) => Criterion::Appendix { label: 15, arm: None },
                (15, None) => Criterion::Appendix { label: 14, arm: None },
                (l @ 1..=13, None) => {
                    let name = APPENDIX[l as usize - 1].1.as_bytes();
                    let swapped = format!("E{}{}{}", name[2] as char, name[1] as char, name[3] as char);
                    return CriterionSpec::appendix(&swapped).ok().map(|s| s.with_representation(self.representation));
                }
                (16 | 19 | 20 | 21 | 24 | 25 | 26 | 28 | 30 | 32, None) => Criterion::Appendix { label, arm },
                _ => return None,
            },
        };
        Some(CriterionSpec { criterion: c, representation: self.representation })
    }

    /// Whether the criterion relies on the vacuum-normalized mapping and so
    /// needs `p(0,0) > 0`.
    pub fn requires_vacuum(&self) -> bool {
        match self.criterion {
            Criterion::E4 { .. } | Criterion::Dmn { .. } => true,
            Criterion::E3 { l, .. } => l > 2,
            Criterion::Appendix { label, .. } => matches!(label, 14..=16 | 27..=32),
            _ => false,
        }
    }
}

impl fmt::Display for CriterionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[u32]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let arm = |a: Arm| format!(";a={}", a.short());
        match &self.criterion {
            Criterion::E3 { ks, ki, l } => write!(f, "E:{ks},{ki},{l}"),
            Criterion::E4 { ks, ki, ls, li } => write!(f, "E:{ks},{ki},{ls},{li}"),
            Criterion::Cs { n, l } => write!(f, "CS:N={},{};L={},{}", n.0, n.1, l.0, l.1),
            Criterion::M3 { k, l, n } => write!(f, "M:K={},{};L={},{};N={},{}", k.0, k.1, l.0, l.1, n.0, n.1),
            Criterion::D3 { arm: a, upper, lower } => write!(f, "D3:U={};L={}{}", list(upper), list(lower), arm(*a)),
            Criterion::D4 { upper, lower } => write!(f, "D4:U={};L={}", list(upper), list(lower)),
            Criterion::Dsys1 { arm: a, k, l, m } => write!(f, "D3sys1:{k},{l},{m}{}", arm(*a)),
            Criterion::Dsys2 { arm: a, k, l, m } => write!(f, "D3sys2:{k},{l},{m}{}", arm(*a)),
            Criterion::Dsys3 { k, l, m } => write!(f, "D4sys3:{k},{l},{m}"),
            Criterion::MinBall3 { arm: a, k, l, m } => write!(f, "D3min:{k},{l},{m}{}", arm(*a)),
            Criterion::MinBall4 { k, l, m, n } => write!(f, "D4min:{k},{l},{m},{n}"),
            Criterion::Dmn { k, l, m, n } => write!(f, "Dmn:{k},{l},{m},{n}"),
            Criterion::Appendix { label, arm } => write!(f, "A:{}", appendix_name(*label, *arm)),
        }
    }
}

impl FromStr for CriterionSpec {
    type Err = CriterionError;

    fn from_str(text: &str) -> Result<Self, CriterionError> {
        let err = |m: &str| CriterionError::Parse(text.to_string(), m.to_string());
        let (head, body) = text.trim().split_once(':').ok_or_else(|| err("expected FAMILY:indices"))?;
        let nums = |s: &str| -> Result<Vec<u32>, CriterionError> {
            s.split(',').map(|x| x.trim().parse::<u32>().map_err(|_| err(&format!("'{x}' is not a nonnegative integer")))).collect()
        };
        // split "a,b,c;key=val;..." into positional part and keyed parts
        let mut positional = None;
        let mut keyed: Vec<(String, String)> = Vec::new();
        for part in body.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once('=') {
                Some((k, v)) => keyed.push((k.trim().to_string(), v.trim().to_string())),
                None if positional.is_none() => positional = Some(part.to_string()),
                None => return Err(err("more than one positional index list")),
            }
        }
        let key = |name: &str| keyed.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str());
        let pair = |name: &str| -> Result<Cell, CriterionError> {
            let v = nums(key(name).ok_or_else(|| err(&format!("missing {name}=")))?)?;
            match v[..] {
                [a, b] => Ok((a, b)),
                _ => Err(err(&format!("{name} needs two indices"))),
            }
        };
        let arm = || -> Result<Arm, CriterionError> {
            match key("a") {
                None | Some("s") => Ok(Arm::Signal),
                Some("i") => Ok(Arm::Idler),
                Some(other) => Err(err(&format!("arm '{other}' is not s or i"))),
            }
        };
        let pos = || -> Result<Vec<u32>, CriterionError> { nums(positional.as_deref().ok_or_else(|| err("missing indices"))?) };
        let fixed = |name: &str, n: usize| -> Result<Vec<u32>, CriterionError> {
            let v = nums(key(name).ok_or_else(|| err(&format!("missing {name}=")))?)?;
            if v.len() != n {
                return Err(err(&format!("{name} needs {n} indices")));
            }
            Ok(v)
        };
        let criterion = match head.trim() {
            "E" => match pos()?[..] {
                [ks, ki, l] => Criterion::E3 { ks, ki, l },
                [ks, ki, ls, li] => Criterion::E4 { ks, ki, ls, li },
                _ => return Err(err("E takes 3 or 4 indices")),
            },
            "CS" => Criterion::Cs { n: pair("N")?, l: pair("L")? },
            "M" => Criterion::M3 { k: pair("K")?, l: pair("L")?, n: pair("N")? },
            "D3" => {
                let (u, l) = (fixed("U", 3)?, fixed("L", 3)?);
                Criterion::D3 { arm: arm()?, upper: [u[0], u[1], u[2]], lower: [l[0], l[1], l[2]] }
            }
            "D4" => {
                let (u, l) = (fixed("U", 4)?, fixed("L", 4)?);
                Criterion::D4 { upper: [u[0], u[1], u[2], u[3]], lower: [l[0], l[1], l[2], l[3]] }
            }
            h @ ("D3sys1" | "D3sys2" | "D4sys3" | "D3min") => match pos()?[..] {
                [k, l, m] => match h {
                    "D3sys1" => Criterion::Dsys1 { arm: arm()?, k, l, m },
                    "D3sys2" => Criterion::Dsys2 { arm: arm()?, k, l, m },
                    "D4sys3" => Criterion::Dsys3 { k, l, m },
                    _ => Criterion::MinBall3 { arm: arm()?, k, l, m },
                },
                _ => return Err(err("expected k,l,m")),
            },
            h @ ("D4min" | "Dmn") => match pos()?[..] {
                [k, l, m, n] if h == "D4min" => Criterion::MinBall4 { k, l, m, n },
                [k, l, m, n] => Criterion::Dmn { k, l, m, n },
                _ => return Err(err("expected k,l,m,n")),
            },
            "A" => return CriterionSpec::appendix(body.trim()),
            other => return Err(err(&format!("unknown family '{other}'"))),
        };
        CriterionSpec::new(criterion)
    }
}

// ---------------------------------------------------------------------------
// polynomial forms

fn p(a: u32, b: u32) -> Poly {
    Poly::cell(a, b)
}

fn pa(arm: Arm, x: u32, y: u32) -> Poly {
    Poly::arm_cell(arm, x, y)
}

fn sum_b(f: impl Fn(Arm) -> Poly) -> Poly {
    Poly::sum_arms(f)
}

fn fact2(c: Cell) -> [u32; 2] {
    [c.0, c.1]
}

fn add(a: Cell, b: Cell) -> Cell {
    (a.0 + b.0, a.1 + b.1)
}

fn twice(a: Cell) -> Cell {
    (2 * a.0, 2 * a.1)
}

/// `<W_s^{k_s} W_i^{k_i} (W_s - W_i)^{2l}>` expanded into moments (moment labels).
pub fn expand_e3(ks: u32, ki: u32, l: u32) -> Result<Poly, CriterionError> {
    if l == 0 {
        return Err(invalid("E3", "l must be at least 1"));
    }
    let mut out = Poly::zero();
    for j in 0..=2 * l {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        out = out + sign * binomial(2 * l, j) * p(ks + 2 * l - j, ki + j);
    }
    Ok(out)
}

/// `<W_s^{k_s} W_i^{k_i} (W_s - <W_s>)^{2l_s} (W_i - <W_i>)^{2l_i}>` with the
/// means kept as factors `<W_s> = m(1,0)`, `<W_i> = m(0,1)` (moment labels).
pub fn expand_e4(ks: u32, ki: u32, ls: u32, li: u32) -> Result<Poly, CriterionError> {
    if ls + li == 0 {
        return Err(invalid("E4", "l_s + l_i must be at least 1"));
    }
    let mut out = Poly::zero();
    for x in 0..=2 * ls {
        for y in 0..=2 * li {
            let c = binomial(2 * ls, x) * binomial(2 * li, y);
            let means = (-p(1, 0)).pow(2 * ls - x) * (-p(0, 1)).pow(2 * li - y);
            // <W^0> = 1 is not a factor, so the degree stays that of the form
            let m = if ks + x + ki + y == 0 { Poly::constant(1.0) } else { p(ks + x, ki + y) };
            out = out + c * means * m;
        }
    }
    Ok(out)
}

fn e3_probability(ks: u32, ki: u32, l: u32) -> Result<Poly, CriterionError> {
    let (fs, fi) = (ks as f64, ki as f64);
    Ok(match l {
        1 => (fs + 1.0) / fi * p(ks + 1, ki - 1) + (fi + 1.0) / fs * p(ks - 1, ki + 1) - 2.0 * p(ks, ki),
        2 => {
            (fs + 2.0) * (fs + 1.0) / (fi * (fi - 1.0)) * p(ks + 2, ki - 2)
                + 6.0 * p(ks, ki)
                + (fi + 2.0) * (fi + 1.0) / (fs * (fs - 1.0)) * p(ks - 2, ki + 2)
                - 4.0 * (fs + 1.0) / fi * p(ks + 1, ki - 1)
                - 4.0 * (fi + 1.0) / fs * p(ks - 1, ki + 1)
        }
        _ => expand_e3(ks - l, ki - l, l)?.moment_to_probability_normalized(&[ks, ki]),
    })
}

fn e4_probability(ks: u32, ki: u32, ls: u32, li: u32) -> Result<Poly, CriterionError> {
    let p00 = || p(0, 0);
    Ok(match (ls, li) {
        (1, 0) => {
            (ks as f64 + 1.0) * p(ks + 1, ki) * p00().pow(2) + (1.0 / ks as f64) * p(ks - 1, ki) * p(1, 0).pow(2)
                - 2.0 * p(ks, ki) * p(1, 0) * p00()
        }
        (0, 1) => {
            (ki as f64 + 1.0) * p(ks, ki + 1) * p00().pow(2) + (1.0 / ki as f64) * p(ks, ki - 1) * p(0, 1).pow(2)
                - 2.0 * p(ks, ki) * p(0, 1) * p00()
        }
        _ => expand_e4(ks - ls, ki - li, ls, li)?.moment_to_probability_normalized(&[ks, ki]),
    })
}

fn cs_probability(n: Cell, l: Cell) -> Poly {
    let r = (2 * n.0 - l.0, 2 * n.1 - l.1);
    let c = factorial_ratio(&[r.0, r.1, l.0, l.1], &[n.0, n.1, n.0, n.1]);
    c * p(l.0, l.1) * p(r.0, r.1) - p(n.0, n.1).pow(2)
}

fn cs_moment(n: Cell, l: Cell) -> Poly {
    let r = (2 * n.0 - l.0, 2 * n.1 - l.1);
    p(l.0, l.1) * p(r.0, r.1) - p(n.0, n.1).pow(2)
}

fn m3_probability(k: Cell, l: Cell, n: Cell) -> Poly {
    let q = |c: Cell| p(c.0, c.1);
    let fr = |num: &[Cell], den: &[Cell]| {
        let a: Vec<u32> = num.iter().flat_map(|&c| fact2(c)).collect();
        let b: Vec<u32> = den.iter().flat_map(|&c| fact2(c)).collect();
        factorial_ratio(&a, &b)
    };
    let (x, y, z) = (q(twice(k)), q(twice(l)), q(twice(n)));
    let (kl, kn, ln) = (add(k, l), add(k, n), add(l, n));
    let part = |a: Poly, b: Poly, c: Poly, cross: Cell, d1: Cell, d2: Cell| {
        a * (b * c - fr(&[cross, cross], &[twice(d1), twice(d2)]) * q(cross).pow(2))
    };
    part(x.clone(), y.clone(), z.clone(), ln, l, n)
        + part(z.clone(), x.clone(), y.clone(), kl, k, l)
        + part(y.clone(), z.clone(), x.clone(), kn, n, k)
        + 2.0 * (fr(&[kl, kn, ln], &[twice(k), twice(l), twice(n)]) * q(kl) * q(kn) * q(ln) - x * y * z)
}

fn m3_moment(k: Cell, l: Cell, n: Cell) -> Poly {
    let q = |c: Cell| p(c.0, c.1);
    let (x, y, z) = (q(twice(k)), q(twice(l)), q(twice(n)));
    let (kl, kn, ln) = (q(add(k, l)), q(add(k, n)), q(add(l, n)));
    x.clone() * (y.clone() * z.clone() - ln.clone().pow(2))
        + z.clone() * (x.clone() * y.clone() - kl.clone().pow(2))
        + y.clone() * (z.clone() * x.clone() - kn.clone().pow(2))
        + 2.0 * (kl * kn * ln - x * y * z)
}

fn g(a: u32, b: u32) -> Poly {
    p(a, b) + p(b, a)
}

/// `f^a(k,l,m)` without the factorial prefactor.
fn f3_core(arm: Arm, k: u32, l: u32, m: u32) -> Poly {
    g(k, l) * pa(arm, m, 0) + g(m, k) * pa(arm, l, 0) + g(l, m) * pa(arm, k, 0)
}

fn f4_core(k: u32, l: u32, m: u32, n: u32) -> Poly {
    g(k, l) * g(m, n) + g(k, m) * g(l, n) + g(k, n) * g(l, m)
}

fn d3_probability(arm: Arm, u: [u32; 3], w: [u32; 3]) -> Poly {
    let fb = |t: [u32; 3]| factorial(t[0]) * factorial(t[1]) * factorial(t[2]) * f3_core(arm, t[0], t[1], t[2]);
    fb(u) - fb(w)
}

fn d3_moment(arm: Arm, u: [u32; 3], w: [u32; 3]) -> Poly {
    f3_core(arm, u[0], u[1], u[2]) - f3_core(arm, w[0], w[1], w[2])
}

fn d4_probability(u: [u32; 4], w: [u32; 4]) -> Poly {
    let fb = |t: [u32; 4]| t.iter().map(|&x| factorial(x)).product::<f64>() * f4_core(t[0], t[1], t[2], t[3]);
    fb(u) - fb(w)
}

fn d4_moment(u: [u32; 4], w: [u32; 4]) -> Poly {
    f4_core(u[0], u[1], u[2], u[3]) - f4_core(w[0], w[1], w[2], w[3])
}

fn dmn_probability(k: u32, l: u32, m: u32, n: u32) -> Poly {
    let h = (k + l) / 2;
    let hf = h as f64;
    let c = factorial_ratio(&[k + m, l + n], &[m, n]);
    c * (g(k + m, l + n) * p(0, 0) + hf * g(k + m, 0) * g(l + n, 0)) * p(0, 0).pow(h - 1)
        - (g(m, n) * p(1, 1) + hf * g(m, 1) * g(n, 1)) * p(1, 1).pow(h - 1)
}

fn dmn_moment(k: u32, l: u32, m: u32, n: u32) -> Poly {
    let h = (k + l) / 2;
    let hf = h as f64;
    g(k + m, l + n) + hf * g(k + m, 0) * g(l + n, 0)
        - (0.5 * g(m, n) * g(1, 1) + hf * g(m, 1) * g(n, 1)) * (0.5 * g(1, 1)).pow(h - 1)
}

/// Closed forms of the appendix.
fn appendix_probability(label: u8, arm: Option<Arm>) -> Poly {
    let a = arm.unwrap_or(Arm::Signal);
    let p00 = || p(0, 0);
    match label {
        1 => p(2, 0) + p(0, 2) - p(1, 1),
        2 => 3.0 * p(3, 0) + p(1, 2) - 2.0 * p(2, 1),
        3 => 3.0 * p(0, 3) + p(2, 1) - 2.0 * p(1, 2),
        4 => 6.0 * p(4, 0) + p(2, 2) - 3.0 * p(3, 1),
        5 => 6.0 * p(0, 4) + p(2, 2) - 3.0 * p(1, 3),
        6 => 3.0 * p(3, 1) + 3.0 * p(1, 3) - 4.0 * p(2, 2),
        7 => 10.0 * p(5, 0) + p(3, 2) - 4.0 * p(4, 1),
        8 => 10.0 * p(0, 5) + p(2, 3) - 4.0 * p(1, 4),
        9 => 2.0 * p(4, 1) + p(2, 3) - 2.0 * p(3, 2),
        10 => 2.0 * p(1, 4) + p(3, 2) - 2.0 * p(2, 3),
        11 => p(4, 0) + p(2, 2) + p(0, 4) - p(3, 1) - p(1, 3),
        12 => 5.0 * p(5, 0) + 3.0 * p(3, 2) + p(1, 4) - 4.0 * p(4, 1) - 2.0 * p(2, 3),
        13 => 5.0 * p(0, 5) + 3.0 * p(2, 3) + p(4, 1) - 4.0 * p(1, 4) - 2.0 * p(3, 2),
        14 | 15 => {
            let a = if label == 14 { Arm::Signal } else { Arm::Idler };
            let q = |x, y| pa(a, x, y);
            12.0 * q(3, 2) * p00().pow(4)
                + 2.0 * (q(1, 0).pow(2) * q(1, 2) + 3.0 * q(0, 1).pow(2) * q(3, 0) + 4.0 * p(0, 1) * p(1, 0) * q(2, 1)) * p00().pow(2)
                + q(0, 1).pow(2) * q(1, 0).pow(3)
                - 4.0 * (2.0 * q(1, 0) * p(2, 2) + 3.0 * q(0, 1) * q(3, 1)) * p00().pow(3)
                - 2.0 * (2.0 * q(0, 1).pow(2) * q(1, 0) * q(2, 0) + q(1, 0).pow(2) * q(0, 1) * p(1, 1)) * p00()
        }
        16 => {
            4.0 * p(2, 2) * p00().pow(3)
                + 2.0 * (sum_b(|b| pa(b, 1, 0).pow(2) * pa(b, 0, 2)) + 2.0 * p(1, 0) * p(0, 1) * p(1, 1)) * p00()
                - 4.0 * sum_b(|b| pa(b, 1, 0) * pa(b, 1, 2)) * p00().pow(2)
                - 3.0 * p(1, 0).pow(2) * p(0, 1).pow(2)
        }
        17 => 2.0 * p(1, 2) * p(1, 0) - p(1, 1).pow(2),
        18 => 2.0 * p(2, 1) * p(0, 1) - p(1, 1).pow(2),
        19 => 4.0 * p(2, 2) * p00() - p(1, 1).pow(2),
        20 => 4.0 * p(2, 0) * p(0, 2) - p(1, 1).pow(2),
        21 => {
            4.0 * p(2, 0) * p(0, 2) * p00() + 2.0 * p(1, 1) * p(1, 0) * p(0, 1)
                - p(1, 1).pow(2) * p00()
                - 2.0 * sum_b(|b| pa(b, 2, 0) * pa(b, 0, 1).pow(2))
        }
        22 => {
            2.0 * pa(a, 2, 0) * pa(a, 1, 0) + sum_b(|b| pa(b, 2, 1)) * p00() + sum_b(|b| pa(b, 2, 0) * pa(b, 0, 1))
                - 3.0 * pa(a, 1, 0) * p(1, 1)
        }
        23 => {
            2.0 * pa(a, 2, 0).pow(2) + 2.0 * p(2, 2) * p00() + 2.0 * p(2, 0) * p(0, 2)
                - sum_b(|b| pa(b, 2, 1)) * pa(a, 1, 0)
                - pa(a, 2, 0) * p(1, 1)
        }
        24 => sum_b(|b| pa(b, 2, 1)) * sum_b(|c| pa(c, 1, 0)) + sum_b(|b| pa(b, 2, 0)) * p(1, 1) - 3.0 * p(1, 1).pow(2),
        25 => 2.0 * sum_b(|b| pa(b, 2, 0)).pow(2) + 4.0 * p(2, 2) * p00() - 3.0 * p(1, 1).pow(2),
        26 => 12.0 * sum_b(|b| pa(b, 4, 0)) * p00() - p(1, 1).pow(2),
        27 => {
            2.0 * sum_b(|b| pa(b, 2, 1)) * p00().pow(2)
                + 4.0 * (3.0 * pa(a, 2, 0) * pa(a, 1, 0) + sum_b(|b| pa(b, 2, 0) * pa(b, 0, 1))) * p00()
                - 6.0 * pa(a, 1, 0) * p(1, 1) * p00()
                - 3.0 * pa(a, 1, 0).pow(2) * sum_b(|b| pa(b, 1, 0))
        }
        28 => {
            2.0 * sum_b(|b| pa(b, 2, 1)) * p00().pow(2)
                + 2.0 * (2.0 * sum_b(|b| pa(b, 2, 0) * pa(b, 1, 0)) + 3.0 * sum_b(|b| pa(b, 2, 0) * pa(b, 0, 1))) * p00()
                - 3.0 * sum_b(|b| pa(b, 1, 0)) * p(1, 1) * p00()
                - 3.0 * sum_b(|b| pa(b, 1, 0).pow(2) * pa(b, 0, 1))
        }
        29 => {
            4.0 * p(2, 2) * p00().pow(2) + 4.0 * (3.0 * pa(a, 2, 0).pow(2) + 2.0 * p(2, 0) * p(0, 2)) * p00()
                - 2.0 * (sum_b(|b| pa(b, 2, 1)) * pa(a, 1, 0) + pa(a, 2, 0) * p(1, 1)) * p00()
                - 2.0 * pa(a, 1, 0).pow(2) * pa(a, 2, 0)
                - sum_b(|b| pa(b, 2, 0)) * pa(a, 1, 0).pow(2)
                - 2.0 * pa(a, 2, 0) * p(0, 1) * p(1, 0)
        }
        30 => {
            4.0 * p(2, 2) * p00().pow(2) + 4.0 * (sum_b(|b| pa(b, 2, 0).pow(2)) + 3.0 * p(2, 0) * p(0, 2)) * p00()
                - (sum_b(|b| pa(b, 1, 0)) * sum_b(|c| pa(c, 2, 1)) + sum_b(|b| pa(b, 2, 0)) * p(1, 1)) * p00()
                - 2.0 * sum_b(|b| pa(b, 2, 0)) * p(1, 0) * p(0, 1)
                - sum_b(|b| pa(b, 2, 0) * pa(b, 0, 1).pow(2))
        }
        31 => {
            2.0 * (sum_b(|b| pa(b, 2, 1)) * pa(a, 1, 0) + pa(a, 2, 0) * p(1, 1)) * p00()
                + (3.0 * pa(a, 2, 0) + pa(a, 0, 2)) * pa(a, 1, 0).pow(2)
                + 2.0 * pa(a, 2, 0) * p(1, 0) * p(0, 1)
                - 6.0 * pa(a, 1, 0).pow(2) * p(1, 1)
        }
        32 => {
            (sum_b(|b| pa(b, 1, 0)) * sum_b(|c| pa(c, 2, 1)) + sum_b(|b| pa(b, 2, 0)) * p(1, 1)) * p00()
                + 2.0 * sum_b(|b| pa(b, 2, 0)) * p(1, 0) * p(0, 1)
                + sum_b(|b| pa(b, 2, 0) * pa(b, 0, 1).pow(2))
                - 6.0 * p(1, 0) * p(0, 1) * p(1, 1)
        }
        _ => unreachable!("validated label"),
    }
}

/// Nonincreasing `parts`-tuples summing to `sigma`.
pub fn sorted_tuples(sigma: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(rest: u32, max: u32, parts: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 0 {
            if rest == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for x in (0..=rest.min(max)).rev() {
            cur.push(x);
            rec(rest - x, x, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(sigma, sigma, parts, &mut Vec::new(), &mut out);
    out
}

/// A finite sample of every family with indices up to about `max`, plus
/// the whole appendix (both arms where relevant).
pub fn catalog(max: u32) -> Vec<CriterionSpec> {
    let mut out: Vec<Criterion> = Vec::new();
    let arms = [Arm::Signal, Arm::Idler];
    for ks in 1..=max {
        for ki in 1..=max {
            for l in 1..=ks.min(ki).min(3) {
                out.push(Criterion::E3 { ks, ki, l });
            }
        }
    }
    for ks in 0..=max {
        for ki in 0..=max {
            for (ls, li) in [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2)] {
                out.push(Criterion::E4 { ks, ki, ls, li });
            }
        }
    }
    let half = max / 2;
    for n in (0..=half).flat_map(|a| (0..=half).map(move |b| (a, b))) {
        for l in (0..=2 * n.0).flat_map(|a| (0..=2 * n.1).map(move |b| (a, b))) {
            let r = (2 * n.0 - l.0, 2 * n.1 - l.1);
            if l < r {
                out.push(Criterion::Cs { n, l });
            }
        }
    }
    let small = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)];
    for i in 0..small.len() {
        for j in i + 1..small.len() {
            for k in j + 1..small.len() {
                out.push(Criterion::M3 { k: small[i], l: small[j], n: small[k] });
            }
        }
    }
    for sigma in 1..=max {
        let t3 = sorted_tuples(sigma, 3);
        for u in &t3 {
            for w in &t3 {
                if u != w && majorizes(u, w) {
                    for arm in arms {
                        out.push(Criterion::D3 { arm, upper: [u[0], u[1], u[2]], lower: [w[0], w[1], w[2]] });
                    }
                }
            }
            for arm in arms {
                out.push(Criterion::MinBall3 { arm, k: u[0], l: u[1], m: u[2] });
            }
        }
        let t4 = sorted_tuples(sigma, 4);
        for u in &t4 {
            for w in &t4 {
                if u != w && majorizes(u, w) {
                    out.push(Criterion::D4 { upper: [u[0], u[1], u[2], u[3]], lower: [w[0], w[1], w[2], w[3]] });
                }
            }
            out.push(Criterion::MinBall4 { k: u[0], l: u[1], m: u[2], n: u[3] });
        }
    }
    for k in 1..=max {
        for l in 0..=k {
            for m in 1..=l.max(1) {
                for arm in arms {
                    out.push(Criterion::Dsys1 { arm, k, l, m });
                    out.push(Criterion::Dsys2 { arm, k, l, m });
                }
                out.push(Criterion::Dsys3 { k, l, m });
            }
        }
    }
    for (k, l) in [(1, 1), (2, 0), (0, 2), (2, 2), (3, 1)] {
        for (m, n) in [(1, 1), (2, 1), (2, 2), (3, 1)] {
            out.push(Criterion::Dmn { k, l, m, n });
        }
    }
    let mut specs: Vec<CriterionSpec> = out.into_iter().filter_map(|c| CriterionSpec::new(c).ok()).collect();
    specs.extend(list_appendix_all());
    specs
}

/// General-family criterion that an appendix entry instantiates, if any.
pub fn appendix_general(label: u8, arm: Option<Arm>) -> Option<CriterionSpec> {
    let c = match label {
        1..=13 => {
            let d: Vec<u32> = APPENDIX[label as usize - 1].1[1..].bytes().map(|b| (b - b'0') as u32).collect();
            Criterion::E3 { ks: d[0] + d[2], ki: d[1] + d[2], l: d[2] }
        }
        14 => Criterion::E4 { ks: 2, ki: 1, ls: 1, li: 1 },
        15 => Criterion::E4 { ks: 1, ki: 2, ls: 1, li: 1 },
        16 => Criterion::E4 { ks: 1, ki: 1, ls: 1, li: 1 },
        17 => Criterion::Cs { n: (1, 1), l: (1, 0) },
        18 => Criterion::Cs { n: (1, 1), l: (0, 1) },
        19 => Criterion::Cs { n: (1, 1), l: (2, 2) },
        20 => Criterion::Cs { n: (1, 1), l: (2, 0) },
        21 => Criterion::M3 { k: (0, 0), l: (1, 0), n: (0, 1) },
        22 => Criterion::D3 { arm: arm?, upper: [2, 1, 0], lower: [1, 1, 1] },
        23 => Criterion::D3 { arm: arm?, upper: [2, 2, 0], lower: [2, 1, 1] },
        24 => Criterion::D4 { upper: [2, 1, 1, 0], lower: [1, 1, 1, 1] },
        25 => Criterion::D4 { upper: [2, 2, 0, 0], lower: [1, 1, 1, 1] },
        26 => Criterion::D4 { upper: [4, 0, 0, 0], lower: [1, 1, 1, 1] },
        _ => return None,
    };
    CriterionSpec::new(c).ok()
}

/// One evaluable polynomial, with its position among the min-ball candidates.
#[derive(Debug, Clone)]
struct Form {
    candidate: usize,
    poly: Poly,
}

/// A criterion reduced to polynomials, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Compiled {
    spec: CriterionSpec,
    forms: Vec<Form>,
    max_index: Cell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermValue {
    pub coeff: f64,
    pub cells: Vec<Cell>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionValue {
    pub value: f64,
    pub negative: bool,
    /// `Σ |term|` of the attaining form.
    pub scale: f64,
    pub terms: Vec<TermValue>,
    /// 1-based position of the attaining candidate for minimum-type criteria.
    pub candidate: Option<usize>,
}

impl CriterionValue {
    /// Non-classicality verdict with statistical threshold `eps_stat`; values
    /// within rounding of zero count as the classical boundary.
    pub fn indicates(&self, eps_stat: f64) -> bool {
        self.value < -(eps_stat + ROUNDING_REL * self.scale)
    }

    /// True when the value is zero up to rounding.
    pub fn is_boundary(&self) -> bool {
        self.value.abs() <= ROUNDING_REL * self.scale.max(f64::MIN_POSITIVE)
    }
}

impl Compiled {
    pub fn new(spec: &CriterionSpec) -> Result<Compiled, CriterionError> {
        let repr = spec.representation;
        let single = |poly: Poly| vec![Form { candidate: 0, poly }];
        let forms = match (&spec.criterion, repr) {
            (&Criterion::E3 { ks, ki, l }, Representation::Probability) => single(e3_probability(ks, ki, l)?),
            (&Criterion::E3 { ks, ki, l }, Representation::Moment) => single(expand_e3(ks - l, ki - l, l)?),
            (&Criterion::E4 { ks, ki, ls, li }, Representation::Probability) => single(e4_probability(ks, ki, ls, li)?),
            (&Criterion::E4 { ks, ki, ls, li }, Representation::Moment) => single(expand_e4(ks - ls, ki - li, ls, li)?),
            (&Criterion::Cs { n, l }, Representation::Probability) => single(cs_probability(n, l)),
            (&Criterion::Cs { n, l }, Representation::Moment) => single(cs_moment(n, l)),
            (&Criterion::M3 { k, l, n }, Representation::Probability) => single(m3_probability(k, l, n)),
            (&Criterion::M3 { k, l, n }, Representation::Moment) => single(m3_moment(k, l, n)),
            (&Criterion::D3 { arm, upper, lower }, r) => single(d3(arm, upper, lower, r)),
            (&Criterion::D4 { upper, lower }, r) => single(d4(upper, lower, r)),
            (&Criterion::Dsys1 { arm, k, l, m }, r) => single(d3(arm, [k + m, k, l - m], [k, k, l], r)),
            (&Criterion::Dsys2 { arm, k, l, m }, r) => single(d3(arm, [k + m, k - m, l], [k, k, l], r)),
            (&Criterion::Dsys3 { k, l, m }, r) => single(d4([k + m, k, l, l - m], [k, k, l, l], r)),
            (&Criterion::MinBall3 { arm, k, l, m }, r) => min_ball3_candidates(k, l, m)
                .iter()
                .enumerate()
                .filter(|&(_i, &(ok, _up))| ok).map(|(i, &(_ok, up))| Form { candidate: i + 1, poly: d3(arm, up.unwrap(), [k, l, m], r) })
                .collect(),
            (&Criterion::MinBall4 { k, l, m, n }, r) => min_ball4_candidates(k, l, m, n)
                .iter()
                .enumerate()
                .filter(|&(_i, &(ok, _up))| ok).map(|(i, &(_ok, up))| Form { candidate: i + 1, poly: d4(up.unwrap(), [k, l, m, n], r) })
                .collect(),
            (&Criterion::Dmn { k, l, m, n }, Representation::Probability) => single(dmn_probability(k, l, m, n)),
            (&Criterion::Dmn { k, l, m, n }, Representation::Moment) => single(dmn_moment(k, l, m, n)),
            (&Criterion::Appendix { label, arm }, Representation::Probability) => single(appendix_probability(label, arm)),
            (&Criterion::Appendix { label, arm }, Representation::Moment) => match appendix_general(label, arm) {
                Some(general) => Compiled::new(&general.with_representation(Representation::Moment))?.forms,
                None => single(appendix_probability(label, arm).probability_to_moment()),
            },
        };
        let max_index = forms.iter().map(|f| f.poly.max_index()).fold((0, 0), |(a, b), (x, y)| (a.max(x), b.max(y)));
        Ok(Compiled { spec: spec.clone(), forms, max_index })
    }

    pub fn spec(&self) -> &CriterionSpec {
        &self.spec
    }

    /// Polynomials in candidate order (a single one for most families).
    pub fn polys(&self) -> impl Iterator<Item = &Poly> {
        self.forms.iter().map(|f| &f.poly)
    }

    /// Largest signal and idler index that is read.
    pub fn max_index(&self) -> Cell {
        self.max_index
    }

    /// All cells the criterion reads.
    pub fn cells(&self) -> Vec<Cell> {
        let mut c: Vec<Cell> = self.forms.iter().flat_map(|f| f.poly.cells()).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Evaluates on arbitrary cell values (probabilities or moments).
    pub fn eval_cells(&self, mut cell: impl FnMut(u32, u32) -> f64) -> CriterionValue {
        let mut best: Option<(usize, Evaluated)> = None;
        for (i, f) in self.forms.iter().enumerate() {
            let e = f.poly.eval(&mut cell);
            if best.as_ref().is_none_or(|(_, b)| e.value < b.value) {
                best = Some((i, e));
            }
        }
        let (i, e) = best.expect("at least one form");
        let form = &self.forms[i];
        CriterionValue {
            value: e.value,
            negative: e.value < 0.0,
            scale: e.scale,
            terms: form
                .poly
                .terms()
                .iter()
                .zip(&e.term_values)
                .map(|(t, &v)| TermValue { coeff: t.coeff, cells: t.cells.clone(), value: v })
                .collect(),
            candidate: (form.candidate > 0).then_some(form.candidate),
        }
    }

    pub fn eval_pmf(&self, pmf: &JointPmf) -> Result<CriterionValue, CriterionError> {
        if self.spec.requires_vacuum() && pmf.get(0, 0) <= 0.0 {
            return Err(CriterionError::DivisionByVacuum(self.spec.to_string()));
        }
        Ok(self.eval_cells(|a, b| pmf.get(a, b)))
    }

    pub fn eval_moments(&self, moments: &MomentVector) -> Result<CriterionValue, CriterionError> {
        let (a, b) = self.max_index;
        if a > moments.max_order() || b > moments.max_order() {
            return Err(CriterionError::MissingOrder(a, b));
        }
        Ok(self.eval_cells(|a, b| moments.get(a, b).expect("order checked")))
    }
}

fn d3(arm: Arm, upper: [u32; 3], lower: [u32; 3], r: Representation) -> Poly {
    match r {
        Representation::Probability => d3_probability(arm, upper, lower),
        Representation::Moment => d3_moment(arm, upper, lower),
    }
}

fn d4(upper: [u32; 4], lower: [u32; 4], r: Representation) -> Poly {
    match r {
        Representation::Probability => d4_probability(upper, lower),
        Representation::Moment => d4_moment(upper, lower),
    }
}

/// Evaluates the probability form of `spec` on `pmf`.
pub fn eval_probability(spec: &CriterionSpec, pmf: &JointPmf) -> Result<CriterionValue, CriterionError> {
    Compiled::new(&spec.clone().with_representation(Representation::Probability))?.eval_pmf(pmf)
}

/// Evaluates the moment form of `spec` on a moment table.
pub fn eval_moment(spec: &CriterionSpec, moments: &MomentVector) -> Result<CriterionValue, CriterionError> {
    Compiled::new(&spec.clone().with_representation(Representation::Moment))?.eval_moments(moments)
}

/// Minimum over the admissible "moving one ball" candidates.
pub fn min_ball(spec: &CriterionSpec, pmf: &JointPmf) -> Result<CriterionValue, CriterionError> {
    match spec.family() {
        Family::DminBall3 | Family::DminBall4 => eval_probability(spec, pmf),
        _ => Err(invalid("DminBall", format!("{spec} is not a minimum-type criterion"))),
    }
}

/// Admissible candidate positions (1-based) of a minimum-type criterion.
pub fn min_ball_admissible(spec: &CriterionSpec) -> Vec<usize> {
    match spec.criterion {
        Criterion::MinBall3 { k, l, m, .. } => {
            min_ball3_candidates(k, l, m).iter().enumerate().filter(|c| c.1 .0).map(|c| c.0 + 1).collect()
        }
        Criterion::MinBall4 { k, l, m, n } => {
            min_ball4_candidates(k, l, m, n).iter().enumerate().filter(|c| c.1 .0).map(|c| c.0 + 1).collect()
        }
        _ => Vec::new(),
    }
}

/// Residual of the redundancy identity expressing the two-variable
/// majorization combination through `E_{a,b,1}` terms:
///
/// `m(k+m,l-m) + m(l-m,k+m) - m(k,l) - m(l,k) = Σ_a c_a E_{a,k+l-a,1}`
///
/// with tent weights `c_a = min(m, a-(l-m), k+m-a)`. Both sides are evaluated
/// on the normally ordered moments of `pmf`; the returned residual is scaled
/// by the magnitude of the moments involved.
pub fn identity_check_eq19(k: u32, l: u32, m: u32, pmf: &JointPmf) -> Result<f64, CriterionError> {
    if !(k >= l && m >= 1 && m <= l) {
        return Err(invalid("Eq19", format!("need k >= l and 1 <= m <= l, got ({k},{l},{m})")));
    }
    let n = k + l;
    let mv = pmf.moments(n);
    let f = |a: u32| mv.get(a, n - a).expect("order within table");
    let lhs = f(k + m) + f(l - m) - f(k) - f(l);
    let mut rhs = 0.0;
    let mut scale = lhs.abs();
    for a in (l - m + 1)..(k + m) {
        let c = m.min(a - (l - m)).min(k + m - a) as f64;
        // centered E_{a, n-a, 1} = f(a+1) - 2 f(a) + f(a-1)
        rhs += c * (f(a + 1) - 2.0 * f(a) + f(a - 1));
        scale += c * (f(a + 1) + 2.0 * f(a) + f(a - 1)).abs();
    }
    Ok((lhs - rhs).abs() / scale.max(1.0))
}

impl From<PmfError> for CriterionError {
    fn from(e: PmfError) -> Self {
        match e {
            PmfError::MissingOrder(a, b) => CriterionError::MissingOrder(a, b),
            PmfError::DivisionByVacuum => CriterionError::DivisionByVacuum("modified moments".into()),
            other => CriterionError::Parse(String::new(), other.to_string()),
        }
    }
}
