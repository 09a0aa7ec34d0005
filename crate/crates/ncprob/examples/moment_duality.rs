//! Ordering a distribution and transforming its moments give the same numbers.

use ncprob::kernel::apply_ordering;
use ncprob::fields::noisy_twin;

fn main() {
    let pmf = noisy_twin(2.0, 4.0, (0.5, 1.0), (0.3, 2.0), None).unwrap();
    let moments = pmf.moments(4);
    for s in [0.5, 0.0, -0.5] {
        let table = apply_ordering(&pmf, s, 4.0).unwrap();
        let shifted = moments.to_s_ordered(s, 4.0);
        println!("s = {s}, smallest quasi-probability {:+.3e}", table.min());
        for (k, l) in [(1, 0), (1, 1), (2, 1), (2, 2)] {
            println!(
                "  ({k},{l})  from table {:.10}  from moments {:.10}",
                table.factorial_moment(k, l),
                shifted.get(k, l).unwrap()
            );
        }
    }
}
