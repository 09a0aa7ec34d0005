//! Standard errors of a depth from multinomial resamples of raw counts.

use ncprob::criteria::CriterionSpec;
use ncprob::fields::ideal_twin;
use ncprob::pmf::Histogram;
use ncprob::quantify::ncd;
use ncprob::scan::{bootstrap_errors, BootstrapTarget, ScanOptions};

fn main() {
    let pmf = ideal_twin(2.0, 5.0, Some(20)).unwrap();
    let shots = 20_000.0;
    let counts: Vec<f64> = pmf.probs().iter().map(|p| (p * shots).round()).collect();
    let hist = Histogram::new(20, 20, counts).unwrap();

    let spec = CriterionSpec::appendix("E001").unwrap();
    let tau = ncd(&spec, &hist.to_pmf(), 5.0).unwrap().tau.unwrap();
    let target = BootstrapTarget::Criterion(spec.clone());
    let boot = bootstrap_errors(&hist, &target, 5.0, 200, 7, &ScanOptions::default()).unwrap();
    println!("{spec}: tau = {tau:.4} +- {:.4} ({} resamples)", boot.tau_se[0], boot.resamples);
    println!("value standard error {:.3e}", boot.value_se[0]);
}
