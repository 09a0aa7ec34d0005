//! Builds each synthetic field and writes one as histogram JSON.

use ncprob::fields::FieldModel;
use ncprob::pmf::{to_json, Arm, ModeArm};

fn main() {
    let models = [
        FieldModel::IdealTwin { pairs: 8.86, modes: 80.0 },
        FieldModel::CoherentProduct { mu_s: 1.0, mu_i: 2.0 },
        FieldModel::ThermalProduct { mean_s: 1.0, modes_s: 1.0, mean_i: 2.0, modes_i: 3.0 },
        FieldModel::NoisyTwin { pairs: 3.0, modes: 10.0, noise_s: (0.4, 2.0), noise_i: (0.2, 1.0) },
    ];
    for m in models {
        let pmf = m.generate(None).unwrap();
        println!("{}", serde_json::to_string(&m).unwrap());
        println!(
            "  cutoff ({}, {})  tail {:.1e}  means {:.4} {:.4}  signal modes {:?}",
            pmf.cutoff_s(),
            pmf.cutoff_i(),
            pmf.norm_deficit(),
            pmf.marginal(Arm::Signal).mean(),
            pmf.marginal(Arm::Idler).mean(),
            pmf.estimate_modes(ModeArm::Signal).ok(),
        );
    }
    let small = FieldModel::IdealTwin { pairs: 0.5, modes: 1.0 }.generate(Some(3)).unwrap();
    println!("{}", to_json(&small));
}
