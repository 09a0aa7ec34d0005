use ncprob::criteria::{catalog, Compiled, CriterionSpec, Representation};
use ncprob::kernel::{apply_noise, apply_ordering, build_kernel};
use ncprob::pmf::{load_histogram, to_json, Format, JointPmf};
use ncprob::quantify::{ncd, NuValue};
use ncprob::scan::{ScanReport, ScanRow, Scenario};
use proptest::prelude::*;
use std::sync::OnceLock;

fn specs() -> &'static [CriterionSpec] {
    static SPECS: OnceLock<Vec<CriterionSpec>> = OnceLock::new();
    SPECS.get_or_init(|| catalog(3))
}

fn pmf_strategy(max_cutoff: u32) -> impl Strategy<Value = JointPmf> {
    (1..=max_cutoff).prop_flat_map(|c| {
        let n = ((c + 1) * (c + 1)) as usize;
        prop::collection::vec(1e-4f64..1.0, n).prop_map(move |w| JointPmf::from_weights(c, c, w).unwrap())
    })
}

fn moment_order(c: &Compiled) -> u32 {
    let (a, b) = c.max_index();
    a + b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_columns_sum_to_one(s in -0.95f64..=1.0, modes in 1.0f64..100.0, n_in in 0u32..25) {
        let k = build_kernel(s, modes, n_in).unwrap();
        for m in 0..=n_in {
            let sum: f64 = (0..=k.n_out()).map(|n| k.get(n, m)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9, "column {m}: {sum}");
        }
    }

    #[test]
    fn ordering_keeps_total_mass(p in pmf_strategy(6), s in -0.9f64..=1.0, modes in 1.0f64..20.0) {
        let t = apply_ordering(&p, s, modes).unwrap();
        prop_assert!((t.total() - p.total()).abs() < 1e-9);
    }

    #[test]
    fn noise_keeps_a_distribution(p in pmf_strategy(6), nu in 0.0f64..2.0, modes in 1.0f64..10.0) {
        let q = apply_noise(&p, nu, modes).unwrap();
        prop_assert!(q.probs().iter().all(|&x| x >= 0.0));
        prop_assert!((q.total() + q.norm_deficit() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn transposition_symmetry_is_exact(p in pmf_strategy(6), i in 0usize..10_000) {
        let spec = &specs()[i % specs().len()];
        if let Some(sw) = spec.swap_arms() {
            let a = Compiled::new(spec).unwrap().eval_pmf(&p).unwrap();
            let b = Compiled::new(&sw).unwrap().eval_pmf(&p.transpose()).unwrap();
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits(), "{}", spec);
        }
    }

    #[test]
    fn moment_form_has_the_probability_sign(p in pmf_strategy(6), i in 0usize..10_000) {
        let spec = &specs()[i % specs().len()];
        let prob = Compiled::new(spec).unwrap();
        let mom = Compiled::new(&spec.clone().with_representation(Representation::Moment)).unwrap();
        let a = prob.eval_pmf(&p).unwrap();
        let b = mom.eval_moments(&p.modified_moments(moment_order(&mom)).unwrap()).unwrap();
        prop_assert_eq!(a.indicates(0.0), b.indicates(0.0), "{}: {} vs {}", spec, a.value, b.value);
    }

    #[test]
    fn depth_lies_in_unit_interval(p in pmf_strategy(4), i in 0usize..10_000, modes in 1.0f64..10.0) {
        let spec = &specs()[i % specs().len()];
        let r = ncd(spec, &p, modes).unwrap();
        let t = r.tau.unwrap();
        prop_assert!((0.0..1.0).contains(&t));
        prop_assert_eq!(t > 0.0, r.verdict_at_origin.indicates(0.0));
    }

    #[test]
    fn histogram_json_round_trip(p in pmf_strategy(6)) {
        let q = load_histogram(to_json(&p).as_bytes(), Format::Json).unwrap();
        for (a, b, v) in p.cells() {
            prop_assert!((q.get(a, b) - v).abs() <= 1e-15);
        }
    }

    #[test]
    fn scan_csv_round_trip(
        rows in prop::collection::vec(
            (0u32..50, 0u32..50, prop::option::of(-1e3f64..1e3), prop::option::of(0.0f64..1.0), prop::option::of(prop::option::of(0.0f64..1e3)), any::<bool>()),
            1..20,
        ),
    ) {
        let rows: Vec<ScanRow> = rows
            .into_iter()
            .map(|(a, b, value, tau, nu, cap)| ScanRow {
                idx: vec![a, b],
                value,
                tau,
                nu: nu.map(|n| n.map(NuValue::Finite).unwrap_or(NuValue::Unbounded)),
                flag: if cap { "cap".into() } else { String::new() },
            })
            .collect();
        let n = rows.len();
        let report = ScanReport { scenario: Scenario::Grid, family: "E3_l1".into(), rows, results: vec![None; n], errors: None };
        let back = ScanReport::from_csv(report.to_csv().as_bytes()).unwrap();
        prop_assert_eq!(back.scenario, report.scenario);
        prop_assert_eq!(&back.family, &report.family);
        prop_assert_eq!(&back.rows, &report.rows);
        prop_assert_eq!(back.to_csv(), report.to_csv());
    }
}
