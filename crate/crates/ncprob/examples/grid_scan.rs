//! Map of `tau(E(n_s, n_i, 1))` over a grid, printed as a table.

use ncprob::fields::ideal_twin;
use ncprob::scan::{scan_grid, GridFamily};

fn main() {
    let pmf = ideal_twin(8.86, 80.0, None).unwrap();
    let report = scan_grid(GridFamily::E3 { l: 1 }, &pmf, 80.0, 1..=10, 1..=10).unwrap();
    print!("n_s\\n_i");
    for b in 1..=10 {
        print!("{b:>7}");
    }
    println!();
    for a in 1..=10 {
        print!("{a:>7}");
        for b in 1..=10 {
            match report.get(&[a, b]).and_then(|r| r.tau) {
                Some(t) => print!("{t:>7.3}"),
                None => print!("{:>7}", "-"),
            }
        }
        println!();
    }
    let best = report.max_row().unwrap();
    println!("max tau {:?} at {:?}", best.tau, best.idx);
}
