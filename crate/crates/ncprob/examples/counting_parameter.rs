//! Depth and counting parameter of one criterion as the mode count varies.

use ncprob::criteria::CriterionSpec;
use ncprob::fields::ideal_twin;
use ncprob::quantify::{ncd, nccp, NuValue};

fn main() {
    let pmf = ideal_twin(8.86, 80.0, None).unwrap();
    let spec = CriterionSpec::appendix("E001").unwrap();
    println!("{spec} on a twin beam with 8.86 pairs in 80 modes");
    println!("{:>6} {:>8} {:>10}", "M", "tau", "nu");
    for modes in [1.0, 2.0, 5.0, 10.0, 50.0, 100.0] {
        let tau = ncd(&spec, &pmf, modes).unwrap().tau.unwrap();
        let nu = match nccp(&spec, &pmf, modes, 1e3).unwrap().nu.unwrap() {
            NuValue::Finite(v) => format!("{v:.4}"),
            NuValue::Unbounded => "unbounded".into(),
        };
        println!("{modes:>6} {tau:>8.4} {nu:>10}");
    }
}
