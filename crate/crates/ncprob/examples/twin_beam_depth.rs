//! Depth of the diagonal `E(n, n, l)` criteria on a multimode twin beam.

use ncprob::criteria::{Compiled, CriterionSpec};
use ncprob::fields::ideal_twin;
use ncprob::quantify::{KernelCache, QuantOptions, Quantifier};

fn main() {
    let pmf = ideal_twin(8.86, 80.0, None).expect("valid twin beam");
    let modes = 80.0;
    let cache = KernelCache::new();
    let q = Quantifier::new(&pmf, modes, QuantOptions::default(), &cache, 30).unwrap();

    for l in [1, 2] {
        println!("l = {l}");
        for n in l..=12 {
            let c = Compiled::new(&CriterionSpec::e3(n, n, l).unwrap()).unwrap();
            let r = q.ncd(&c).unwrap();
            println!(
                "  {:<10} value {:+.3e}  tau {:.4}  M tau {:.2}  {}",
                c.spec().to_string(),
                r.verdict_at_origin.value,
                r.tau.unwrap(),
                r.m_tau().unwrap(),
                r.flag_string()
            );
        }
    }
}
