//! Prints a few ordering kernels and their column sums.

use ncprob::kernel::{build_kernel, build_kernel_with, KernelMethod};

fn main() {
    for (s, modes) in [(0.5, 1.0), (0.0, 1.0), (-0.5, 80.0)] {
        let k = build_kernel(s, modes, 6).expect("valid parameters");
        println!("s = {s}, M = {modes}: {} output rows", k.n_out() + 1);
        for n in 0..=6 {
            let row: Vec<String> = (0..=6).map(|m| format!("{:+.4}", k.get(n, m))).collect();
            println!("  n={n}  {}", row.join(" "));
        }
        let worst = k.column_residuals().iter().copied().fold(0.0, f64::max);
        println!("  max |1 - column sum| = {worst:.2e}");
    }

    // the fixed point evaluation agrees with the recurrence
    let a = build_kernel_with(-0.3, 10.0, 12, KernelMethod::Recurrence).unwrap();
    let b = build_kernel_with(-0.3, 10.0, 12, KernelMethod::HighPrecision).unwrap();
    let diff = (0..=12).flat_map(|n| (0..=12).map(move |m| (n, m))).map(|(n, m)| (a.get(n, m) - b.get(n, m)).abs()).fold(0.0, f64::max);
    println!("recurrence vs high precision, max difference {diff:.2e}");
}
