use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qmlp_core::bounds::{
    approximation_bound, depth_for_tolerance, uniform_deviation_bound, BoundConstants,
};
use qmlp_core::data::{encode_dna, gen_diagrams, gen_dna, Dataset, Split, BASES};
use qmlp_core::model::softmax;
use qmlp_core::noise::{
    apply_channel_density, kraus_amplitude_damping, kraus_phase_damping, DensityMatrix,
};
use qmlp_core::simulator::{
    amplitude_encode, expectations_z, run_circuit, CircuitParams, StateVector,
};

fn random_state(num_qubits: usize, seed: u64) -> StateVector {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1 << num_qubits;
    let amps: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(num_qubits, amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

fn excited_marginals(rho: &DensityMatrix) -> Vec<f64> {
    let u = rho.num_qubits();
    let pops = rho.populations();
    (0..u)
        .map(|q| {
            let mask = 1 << (u - 1 - q);
            pops.iter()
                .enumerate()
                .filter(|(i, _)| i & mask != 0)
                .map(|(_, p)| p)
                .sum()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..12), shift in -100.0f64..100.0) {
        let v = DVector::from_vec(logits.clone());
        let p = softmax(&v);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        let q = softmax(&v.add_scalar(shift));
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn circuits_preserve_norm(u in 1usize..5, l in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = CircuitParams::random(u, l, &mut rng).unwrap();
        let out = run_circuit(&random_state(u, seed ^ 1), &params).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-12);
        for e in expectations_z(&out) {
            prop_assert!((-1.0..=1.0).contains(&e));
        }
    }

    #[test]
    fn encoding_is_idempotent_on_normalized_inputs(raw in prop::collection::vec(0.0f64..1.0, 1..16)) {
        prop_assume!(raw.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let u = 4;
        let s = amplitude_encode(&raw, u).unwrap();
        let re: Vec<f64> = s.amplitudes().iter().map(|a| a.re).collect();
        let again = amplitude_encode(&re, u).unwrap();
        for (a, b) in s.amplitudes().iter().zip(again.amplitudes()) {
            prop_assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn kraus_sets_are_complete(adr in 0.0f64..=1.0, pdr in 0.0f64..=1.0) {
        prop_assert!(kraus_amplitude_damping(adr).unwrap().completeness_error() < 1e-12);
        prop_assert!(kraus_phase_damping(pdr).unwrap().completeness_error() < 1e-12);
    }

    #[test]
    fn amplitude_damping_never_raises_excitation(adr in 0.0f64..=1.0, qubit in 0usize..3, seed in any::<u64>()) {
        let rho = DensityMatrix::from_pure(&random_state(3, seed)).unwrap();
        let out = apply_channel_density(&rho, &kraus_amplitude_damping(adr).unwrap(), qubit).unwrap();
        let (before, after) = (excited_marginals(&rho), excited_marginals(&out));
        for q in 0..3 {
            prop_assert!(after[q] <= before[q] + 1e-12);
        }
        prop_assert!((after[qubit] - (1.0 - adr) * before[qubit]).abs() < 1e-12);
    }

    #[test]
    fn approximation_bound_decreases_in_every_argument(
        c1 in 0.01f64..10.0, c2 in 0.01f64..10.0, c3 in 0.01f64..10.0,
        alpha in 0.01f64..1.0, beta in 0.01f64..=0.5,
        m in 1usize..4096, l in 1usize..20, u in 1usize..30,
    ) {
        let c = BoundConstants { c1, c2, c3, alpha, beta, ..BoundConstants::default() };
        let base = approximation_bound(&c, m, l, u).unwrap();
        prop_assert!(approximation_bound(&c, m + 1, l, u).unwrap() < base);
        prop_assert!(approximation_bound(&c, m, l + 1, u).unwrap() < base);
        prop_assert!(approximation_bound(&c, m, l, u + 1).unwrap() < base);
    }

    #[test]
    fn deviation_scales_as_inverse_root(samples in 1usize..10_000, lambda in 0.1f64..5.0, r in 0.1f64..5.0, refined: bool) {
        let c = BoundConstants { lambda, r, ..BoundConstants::default() };
        let a = uniform_deviation_bound(&c, 4, samples, refined).unwrap();
        let b = uniform_deviation_bound(&c, 4, 4 * samples, refined).unwrap();
        prop_assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dna_encoding_is_injective(
        a in prop::collection::vec(0usize..4, 20),
        b in prop::collection::vec(0usize..4, 20),
    ) {
        let s = |v: &[usize]| v.iter().map(|&i| BASES[i] as char).collect::<String>();
        let (sa, sb) = (s(&a), s(&b));
        let (ea, eb) = (encode_dna(&sa).unwrap(), encode_dna(&sb).unwrap());
        prop_assert_eq!(sa == sb, ea == eb);
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 3), 0usize..3), 1..20)) {
        let features: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
        let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let set = Dataset::from_rows(&features, labels, Split::Train).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), Split::Train).unwrap();
        prop_assert_eq!(back.labels(), set.labels());
        for i in 0..set.len() {
            prop_assert_eq!(back.row(i), set.row(i));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn depth_for_tolerance_is_tight(c2 in 1e-3f64..1e3, alpha in 1e-3f64..5.0, tau in 1e-6f64..10.0) {
        let l = depth_for_tolerance(c2, alpha, tau).unwrap();
        prop_assert!(c2 * (-alpha * l as f64).exp() <= tau);
        if l >= 1 {
            prop_assert!(c2 * (-alpha * (l - 1) as f64).exp() > tau);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn generators_are_balanced_and_seeded(count in 2usize..60, seed in any::<u64>()) {
        let d = gen_diagrams(count, 8, 0.05, seed).unwrap();
        let ones = d.iter().filter(|x| x.label == 1).count();
        prop_assert!((count as i64 - 2 * ones as i64).abs() <= 1);
        let again = gen_diagrams(count, 8, 0.05, seed).unwrap();
        prop_assert!(d.iter().zip(&again).all(|(a, b)| a.pixels == b.pixels && a.label == b.label));

        let s = gen_dna(count, "TGACTCA", seed).unwrap();
        let pos = s.iter().filter(|x| x.label == 1).count();
        prop_assert!((count as i64 - 2 * pos as i64).abs() <= 1);
        let again = gen_dna(count, "TGACTCA", seed).unwrap();
        prop_assert!(s.iter().zip(&again).all(|(a, b)| a.sequence == b.sequence && a.label == b.label));
    }
}
