//! Largest minimum-type depth per index sum.

use ncprob::fields::ideal_twin;
use ncprob::pmf::Arm;
use ncprob::scan::{scan_index_sum, MinBallFamily};

fn main() {
    let pmf = ideal_twin(2.0, 5.0, None).unwrap();
    for family in [MinBallFamily::Three { arm: Arm::Signal }, MinBallFamily::Four] {
        let report = scan_index_sum(family, &pmf, 5.0, 2..=8).unwrap();
        println!("{}", report.family);
        for r in &report.rows {
            println!("  sigma {:>2}  tuple {:?}  tau {:?}", r.idx[0], &r.idx[1..], r.tau);
        }
    }
}
