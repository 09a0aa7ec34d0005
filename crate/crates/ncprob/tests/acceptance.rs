//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Oracles here are written independently of the library.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::Instant;

use ncprob::criteria::{catalog, identity_check_eq19, list_appendix, Compiled, CriterionSpec, Family, Representation};
use ncprob::fields::{coherent_product, ideal_twin, noisy_twin, thermal_product};
use ncprob::kernel::{apply_ordering, build_kernel, s_function};
use ncprob::pmf::{Arm, JointPmf};
use ncprob::quantify::{moment_ncd, nccp, ncd, KernelCache, NuValue, QuantOptions, Quantifier};
use ncprob::scan::{run_scan, GridFamily, MinBallFamily, ScanConfig, ScanOptions, ScanReport};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn random_pmf(rng: &mut ChaCha8Rng, cutoff: u32) -> JointPmf {
    let w: Vec<f64> = (0..(cutoff + 1) * (cutoff + 1)).map(|_| rng.gen::<f64>().powi(3) + 1e-4).collect();
    JointPmf::from_weights(cutoff, cutoff, w).unwrap()
}

fn falling(n: u32, k: u32) -> f64 {
    (0..k).map(|j| n as f64 - j as f64).product()
}

/// Falling-factorial moment by direct summation.
fn direct_moment(p: &JointPmf, k: u32, l: u32) -> f64 {
    let mut v = 0.0;
    for a in 0..=p.cutoff_s() {
        for b in 0..=p.cutoff_i() {
            v += p.get(a, b) * falling(a, k) * falling(b, l);
        }
    }
    v
}

/// Binomial coefficient with a real upper argument.
fn gen_binom(x: f64, r: u32) -> f64 {
    (0..r).map(|i| (x - i as f64) / (i + 1) as f64).product()
}

/// s-ordered moments from `k! β^k <L_k^{M-1}(-W/β)>` per arm, expanded with
/// the explicit Laguerre coefficients.
fn ordered_moment_oracle(p: &JointPmf, k: u32, l: u32, s: f64, modes: f64) -> f64 {
    let beta = (1.0 - s) / 2.0;
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let c = |k: u32, a: u32| fact(k) / fact(a) * gen_binom(k as f64 + modes - 1.0, k - a) * beta.powi((k - a) as i32);
    let mut v = 0.0;
    for a in 0..=k {
        for b in 0..=l {
            v += c(k, a) * c(l, b) * direct_moment(p, a, b);
        }
    }
    v
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut wrong = 0;
    for alpha in [0.0, 0.5, 1.0, 79.0] {
        for n in 0..=20 {
            for m in n..=20 {
                let v = s_function(n, m, alpha);
                if (n == m && !v.is_one()) || (n < m && !v.is_zero()) {
                    wrong += 1;
                }
            }
        }
    }
    let mut worst: f64 = 0.0;
    for s in [-0.5, 0.0, 0.5] {
        for modes in [1.0, 80.0] {
            let k = build_kernel(s, modes, 30).unwrap();
            for m in 0..=30 {
                let sum: f64 = (0..=k.n_out()).map(|n| k.get(n, m)).sum();
                worst = worst.max((sum - 1.0).abs());
            }
        }
    }
    let mut identity = true;
    for modes in [1.0, 80.0] {
        let k = build_kernel(1.0, modes, 30).unwrap();
        for n in 0..=k.n_out() {
            for m in 0..=30 {
                identity &= k.get(n, m) == if n == m { 1.0 } else { 0.0 };
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        wrong == 0 && worst < 1e-9 && identity && secs <= 60.0,
        format!("{wrong} wrong S values, max column deviation {worst:.2e}, K_1 identity {identity}, {secs:.1}s"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let cutoff = rng.gen_range(3..=8);
        let p = random_pmf(&mut rng, cutoff);
        for s in [-0.5, 0.0, 0.5] {
            for modes in [1.0, 80.0] {
                let table = apply_ordering(&p, s, modes).unwrap();
                for k in 0..=4 {
                    for l in 0..=4 - k {
                        let want = ordered_moment_oracle(&p, k, l, s, modes);
                        let got = table.factorial_moment(k, l);
                        worst = worst.max((got - want).abs() / want.abs());
                    }
                }
            }
        }
    }
    outcome(worst < 1e-6, format!("max relative deviation {worst:.2e} (tolerance 1e-6)"))
}

fn criterion_3() -> Outcome {
    let specs = catalog(4);
    let families: std::collections::BTreeSet<Family> = specs.iter().map(|s| s.family()).collect();
    let compiled: Vec<Compiled> = specs.iter().map(|s| Compiled::new(s).unwrap()).collect();
    let means = [0.5, 1.0, 2.0];
    let mut fields = Vec::new();
    for &a in &means {
        for &b in &means {
            fields.push((format!("coherent {a},{b}"), coherent_product(a, b, None).unwrap()));
            fields.push((format!("thermal {a}x1,{b}x3"), thermal_product(a, 1.0, b, 3.0, None).unwrap()));
        }
    }
    let cache = KernelCache::new();
    let mut min = (f64::INFINITY, String::new());
    let mut bad = Vec::new();
    for (name, p) in &fields {
        let q = Quantifier::new(p, 1.0, QuantOptions::default(), &cache, 0).unwrap();
        for c in &compiled {
            let v = c.eval_pmf(p).unwrap().value;
            if v < min.0 {
                min = (v, format!("{} on {name}", c.spec()));
            }
            let tau = q.ncd(c).unwrap().tau;
            let nu = q.nccp(c).unwrap().nu;
            if v < -1e-10 || tau != Some(0.0) || nu != Some(NuValue::Finite(0.0)) {
                bad.push(format!("{} on {name}", c.spec()));
            }
        }
    }
    outcome(
        bad.is_empty() && families.len() == 13,
        format!(
            "{} criteria from {} families on {} fields, min value {:.2e} ({}), {} violations{}",
            specs.len(),
            families.len(),
            fields.len(),
            min.0,
            min.1,
            bad.len(),
            bad.first().map(|b| format!(", first {b}")).unwrap_or_default()
        ),
    )
}

fn max_diag_tau(q: &Quantifier, l: u32) -> (f64, u32) {
    let mut best = (0.0, 0);
    for n in l..=30 {
        let c = Compiled::new(&CriterionSpec::e3(n, n, l).unwrap()).unwrap();
        let t = q.ncd(&c).unwrap().tau.unwrap();
        if t > best.0 {
            best = (t, n);
        }
    }
    best
}

fn criterion_4() -> (Outcome, Outcome) {
    let t = Instant::now();
    let p = ideal_twin(8.86, 80.0, None).unwrap();
    let cache = KernelCache::new();
    let q = Quantifier::new(&p, 80.0, QuantOptions::default(), &cache, 32).unwrap();
    let (t1, n1) = max_diag_tau(&q, 1);
    let (t2, n2) = max_diag_tau(&q, 2);
    let mut grid2 = (0.0, (0, 0));
    for ns in 2..=12 {
        for ni in 2..=12 {
            let c = Compiled::new(&CriterionSpec::e3(ns, ni, 2).unwrap()).unwrap();
            let t = q.ncd(&c).unwrap().tau.unwrap();
            if t > grid2.0 {
                grid2 = (t, (ns, ni));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    (
        outcome((t1 - 0.25).abs() <= 0.03 && secs <= 600.0, format!("max_n tau(E_nn1) = {t1:.4} at n = {n1}, expected 0.25 +- 0.03, {secs:.1}s")),
        outcome((t2 - 0.08).abs() <= 0.03 && secs <= 600.0, format!(
                "max_n tau(E_nn2) = {t2:.4} at n = {n2}, expected 0.08 +- 0.03; off-diagonal max {:.4} at {:?}",
                grid2.0, grid2.1
            )),
    )
}

fn criterion_5() -> Outcome {
    let p = ideal_twin(8.86, 80.0, None).unwrap();
    let spec = CriterionSpec::appendix("E001").unwrap();
    let mut taus = Vec::new();
    let mut nus = Vec::new();
    for modes in [1.0, 2.0, 5.0, 10.0, 50.0, 100.0] {
        taus.push(ncd(&spec, &p, modes).unwrap().tau.unwrap());
        nus.push(match nccp(&spec, &p, modes, 1e3).unwrap().nu.unwrap() {
            NuValue::Finite(v) => v,
            NuValue::Unbounded => f64::INFINITY,
        });
    }
    let tau_down = taus.windows(2).all(|w| w[1] <= w[0]);
    let nu_down = nus.windows(2).all(|w| w[1] <= w[0]);
    let above = taus.iter().zip(&nus).all(|(t, n)| n >= t);
    outcome(
        tau_down && nu_down && above,
        format!("tau {taus:.3?}, nu {nus:.3?} (inf = unbounded)"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_lib: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..100 {
        let p = random_pmf(&mut rng, 12);
        for k in 1..=6u32 {
            for l in 1..=4u32.min(k) {
                for m in 1..=l {
                    cases += 1;
                    worst_lib = worst_lib.max(identity_check_eq19(k, l, m, &p).unwrap());
                    // the same identity with the library's E criteria in moment form
                    let n = k + l;
                    let f = |a: u32| direct_moment(&p, a, n - a);
                    let lhs = f(k + m) + f(l - m) - f(k) - f(l);
                    let moments = p.moments(n);
                    let mut rhs = 0.0;
                    let mut scale = lhs.abs();
                    for a in (l - m + 1)..(k + m) {
                        let c = m.min(a - (l - m)).min(k + m - a) as f64;
                        let spec = CriterionSpec::e3(a, n - a, 1).unwrap().with_representation(Representation::Moment);
                        let e = Compiled::new(&spec).unwrap().eval_moments(&moments).unwrap();
                        rhs += c * e.value;
                        scale += c * e.scale;
                    }
                    worst_oracle = worst_oracle.max((lhs - rhs).abs() / scale.max(1.0));
                }
            }
        }
    }
    outcome(
        worst_lib < 1e-10 && worst_oracle < 1e-10,
        format!("{cases} cases, max residual {worst_lib:.2e} (library) {worst_oracle:.2e} (independent)"),
    )
}

fn moment_order(c: &Compiled) -> u32 {
    let (a, b) = c.max_index();
    a + b
}

fn criterion_7() -> (Outcome, Outcome) {
    let mut by_family: BTreeMap<Family, Vec<CriterionSpec>> = BTreeMap::new();
    for s in catalog(3) {
        by_family.entry(s.family()).or_default().push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut disagreements = Vec::new();
    let mut checked = 0;
    for (family, specs) in &by_family {
        let pairs: Vec<(Compiled, Compiled)> = specs
            .iter()
            .map(|s| (Compiled::new(s).unwrap(), Compiled::new(&s.clone().with_representation(Representation::Moment)).unwrap()))
            .collect();
        for _ in 0..200 {
            let p = random_pmf(&mut rng, 8);
            for (prob, mom) in &pairs {
                let a = prob.eval_pmf(&p).unwrap();
                let b = mom.eval_moments(&p.modified_moments(moment_order(mom)).unwrap()).unwrap();
                checked += 1;
                if a.indicates(0.0) != b.indicates(0.0) {
                    disagreements.push(format!("{family:?} {}", prob.spec()));
                }
            }
        }
    }
    let sign = outcome(
        disagreements.is_empty(),
        format!("{checked} evaluations over {} families, {} sign disagreements", by_family.len(), disagreements.len()),
    );

    let p = ideal_twin(8.86, 80.0, None).unwrap();
    let moments = p.moments(16);
    let mut worst = (0.0f64, String::new());
    let mut over = 0;
    for spec in list_appendix() {
        let a = ncd(&spec, &p, 80.0).unwrap().tau.unwrap();
        let b = moment_ncd(&spec, &moments, 80.0).unwrap().tau.unwrap();
        let d = (a - b).abs();
        if d > 2e-3 {
            over += 1;
        }
        if d > worst.0 {
            worst = (d, format!("{spec}: {a:.4} vs {b:.4}"));
        }
    }
    let depth = outcome(
        over == 0,
        format!("{over} of 32 appendix criteria differ by more than 2e-3, largest {:.4} ({})", worst.0, worst.1),
    );
    (sign, depth)
}

fn same(a: &ScanReport, b: &ScanReport, key: impl Fn(&[u32]) -> Vec<u32>) -> Result<(), String> {
    if a.rows.len() != b.rows.len() {
        return Err(format!("{}: {} vs {} rows", a.family, a.rows.len(), b.rows.len()));
    }
    for r in &a.rows {
        let k = key(&r.idx);
        let o = b.rows.iter().find(|x| x.idx[..k.len()] == k[..]).ok_or_else(|| format!("{}: no row {k:?}", a.family))?;
        let bits = |v: Option<f64>| v.map(f64::to_bits);
        if bits(r.value) != bits(o.value) || bits(r.tau) != bits(o.tau) {
            return Err(format!("{} {:?}: {:?}/{:?} vs {:?}/{:?}", a.family, r.idx, r.value, r.tau, o.value, o.tau));
        }
    }
    Ok(())
}

/// Key of the transposed map that corresponds to a key of the original.
type KeyMap<'a> = &'a dyn Fn(&[u32]) -> Vec<u32>;

fn criterion_8() -> Outcome {
    let twin = ideal_twin(8.86, 80.0, None).unwrap();
    let opts = ScanOptions::default();
    let grid = run_scan(&ScanConfig::Grid { family: GridFamily::E3 { l: 1 }, rows: 1..=12, cols: 1..=12 }, &twin, 80.0, &opts).unwrap();
    let off: Vec<_> = grid
        .rows
        .iter()
        .filter(|r| r.tau.unwrap_or(0.0) > 0.0 && r.idx[0].abs_diff(r.idx[1]) > 1)
        .map(|r| r.idx.clone())
        .collect();
    let on = grid.rows.iter().filter(|r| r.tau.unwrap_or(0.0) > 0.0).count();

    let p = noisy_twin(2.0, 5.0, (0.3, 1.0), (0.1, 2.0), Some(25)).unwrap();
    let pt = p.transpose();
    let swap = |k: &[u32]| vec![k[1], k[0]];
    let keep = |k: &[u32]| k.to_vec();
    let first = |k: &[u32]| vec![k[0]];
    let cases: Vec<(ScanConfig, ScanConfig, KeyMap)> = vec![
        (ScanConfig::Grid { family: GridFamily::E3 { l: 1 }, rows: 1..=6, cols: 1..=6 }, ScanConfig::Grid { family: GridFamily::E3 { l: 1 }, rows: 1..=6, cols: 1..=6 }, &swap),
        (ScanConfig::Grid { family: GridFamily::E3 { l: 2 }, rows: 2..=6, cols: 2..=6 }, ScanConfig::Grid { family: GridFamily::E3 { l: 2 }, rows: 2..=6, cols: 2..=6 }, &swap),
        (
            ScanConfig::Grid { family: GridFamily::Dsys2 { arm: Arm::Signal }, rows: 1..=5, cols: 1..=5 },
            ScanConfig::Grid { family: GridFamily::Dsys2 { arm: Arm::Idler }, rows: 1..=5, cols: 1..=5 },
            &keep,
        ),
        (ScanConfig::Grid { family: GridFamily::Dsys3, rows: 1..=5, cols: 1..=5 }, ScanConfig::Grid { family: GridFamily::Dsys3, rows: 1..=5, cols: 1..=5 }, &keep),
        (ScanConfig::Touching { max_index: 3 }, ScanConfig::Touching { max_index: 3 }, &swap),
        (ScanConfig::Local { d: 1, rows: 1..=4, cols: 1..=4 }, ScanConfig::Local { d: 1, rows: 1..=4, cols: 1..=4 }, &swap),
        (
            ScanConfig::IndexSum { family: MinBallFamily::Three { arm: Arm::Signal }, sums: 2..=6 },
            ScanConfig::IndexSum { family: MinBallFamily::Three { arm: Arm::Idler }, sums: 2..=6 },
            &first,
        ),
        (ScanConfig::IndexSum { family: MinBallFamily::Four, sums: 2..=6 }, ScanConfig::IndexSum { family: MinBallFamily::Four, sums: 2..=6 }, &first),
    ];
    let mut errors = Vec::new();
    for (a, b, key) in &cases {
        let ra = run_scan(a, &p, 3.0, &opts).unwrap();
        let rb = run_scan(b, &pt, 3.0, &opts).unwrap();
        if let Err(e) = same(&ra, &rb, key) {
            errors.push(e);
        }
    }
    outcome(
        off.is_empty() && on > 0 && errors.is_empty(),
        format!(
            "{on} nonzero cells, {} off the |n_s - n_i| <= 1 band; {} of {} maps transposition-exact{}",
            off.len(),
            cases.len() - errors.len(),
            cases.len(),
            errors.first().map(|e| format!(", first mismatch {e}")).unwrap_or_default()
        ),
    )
}

fn criterion_9() -> Outcome {
    let run = || Command::new(env!("CARGO_BIN_EXE_ncprob")).args(["--threads", "1", "check"]).output().unwrap();
    let a = run();
    let b = run();
    let identical = a.stdout == b.stdout && a.status.code() == b.status.code();
    outcome(
        identical && !a.stdout.is_empty(),
        format!(
            "{} bytes, identical {identical}, exit {:?}, last line {:?}",
            a.stdout.len(),
            a.status.code(),
            String::from_utf8_lossy(&a.stdout).lines().last().unwrap_or("")
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 kernel identities", criterion_1()));
    results.push(("2 moment/probability duality", criterion_2()));
    results.push(("3 classical soundness", criterion_3()));
    let (a, b) = criterion_4();
    results.push(("4a twin beam max tau(E_nn1)", a));
    results.push(("4b twin beam max tau(E_nn2)", b));
    results.push(("5 mode-count trend", criterion_5()));
    results.push(("6 majorization identity", criterion_6()));
    let (a, b) = criterion_7();
    results.push(("7a sign duality", a));
    results.push(("7b probability vs moment depth", b));
    results.push(("8 scenario behavior", criterion_8()));
    results.push(("9 determinism", criterion_9()));

    println!();
    for (name, o) in &results {
        println!("criterion {name}: {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = results.iter().filter(|(_, o)| !o.passed).count();
    println!("\n{} criteria, {} passed, {} failed", results.len(), results.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
