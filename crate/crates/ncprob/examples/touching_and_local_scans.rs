//! Cauchy–Schwarz criteria on touching indices and 3x3 matrix criteria near
//! each cell.

use ncprob::fields::noisy_twin;
use ncprob::scan::{scan_local, scan_touching};

fn main() {
    let pmf = noisy_twin(2.0, 10.0, (0.1, 1.0), (0.1, 1.0), None).unwrap();

    let cs = scan_touching(&pmf, 10.0, 3).unwrap();
    let hits = cs.rows.iter().filter(|r| r.tau.unwrap_or(0.0) > 0.0).count();
    println!("touching: {} criteria, {hits} nonclassical", cs.rows.len());
    if let Some(r) = cs.max_row() {
        println!("  deepest {:?} tau {:?}", r.idx, r.tau);
    }

    let local = scan_local(&pmf, 10.0, 1, 1..=4, 1..=4).unwrap();
    print!("{}", local.to_csv());
}
