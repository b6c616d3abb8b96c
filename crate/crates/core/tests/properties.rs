use matchkit::datagen::{generate_record, DataConfig, DatasetRecord};
use matchkit::matching::{
    blocking_pairs, check_strategy_proofness, is_individually_rational, is_pareto_efficient, is_stable,
    random_profile, random_ranking, run_sd, validate_matching, Instance, PreferenceProfile,
};
use matchkit::mechanisms::{deferred_acceptance, hungarian_matching, Mechanism, RewardSpec};
use matchkit::metrics::{dense_f64, ir_violation, optimal_ranking_set, recovery_rate, stability_violation};
use matchkit::neuralsd::{forward_train, loss};
use matchkit::ranking::RankingParams;
use matchkit::tsd::{build_preference_tensor, build_ranking_matrix, tsd};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sd_outputs_valid_pareto_efficient_matchings(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=8) {
        let mut r = rng(seed);
        let p = random_profile(&mut r, n, m);
        let mm = run_sd(&p, &random_ranking(&mut r, n + m)).unwrap();
        prop_assert!(validate_matching(&dense_f64(&mm), n, m).is_ok());
        if n <= 4 && m <= 4 {
            prop_assert!(is_pareto_efficient(&mm, &p).unwrap());
        }
    }

    #[test]
    fn sd_is_strategy_proof(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let mut r = rng(seed);
        let p = random_profile(&mut r, n, m);
        let ranking = random_ranking(&mut r, n + m);
        let inst = Instance::blank(n, m);
        let mech = |_: &Instance, q: &PreferenceProfile| run_sd(q, &ranking);
        prop_assert!(check_strategy_proofness(mech, &inst, &p).unwrap().is_empty());
    }

    #[test]
    fn stable_iff_no_blocking_pair_and_rational(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=5) {
        let mut r = rng(seed);
        let p = random_profile(&mut r, n, m);
        let mm = run_sd(&p, &random_ranking(&mut r, n + m)).unwrap();
        let composed = blocking_pairs(&mm, &p).unwrap().is_empty() && is_individually_rational(&mm, &p).unwrap();
        prop_assert_eq!(is_stable(&mm, &p).unwrap(), composed);
    }

    #[test]
    fn tensor_sd_equals_sd(seed in any::<u64>(), n in 1usize..=6, m in 1usize..=6) {
        let mut r = rng(seed);
        let p = random_profile(&mut r, n, m);
        let ranking = random_ranking(&mut r, n + m);
        let soft = tsd(&build_preference_tensor(&p).unwrap(), &build_ranking_matrix(&ranking)).unwrap();
        let hard = run_sd(&p, &ranking).unwrap().to_f64();
        prop_assert_eq!(soft.data(), hard.as_slice());
    }

    #[test]
    fn da_is_stable(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=8) {
        let p = random_profile(&mut rng(seed), n, m);
        let mm = deferred_acceptance(&p).unwrap();
        prop_assert!(blocking_pairs(&mm, &p).unwrap().is_empty());
        prop_assert!(is_individually_rational(&mm, &p).unwrap());
    }

    #[test]
    fn hungarian_outputs_valid_matchings(seed in any::<u64>(), n in 1usize..=7, weighted in any::<bool>()) {
        let mut r = rng(seed);
        let p = random_profile(&mut r, n, n);
        let spec = if weighted { RewardSpec::weighted_random(n, &mut r) } else { RewardSpec::equal(n) };
        let mm = hungarian_matching(&p, &spec).unwrap();
        prop_assert!(validate_matching(&dense_f64(&mm), n, n).is_ok());
    }

    #[test]
    fn hard_stability_violation_tracks_stability(seed in any::<u64>(), n in 1usize..=6) {
        let mut r = rng(seed);
        let p = random_profile(&mut r, n, n);
        let mm = run_sd(&p, &random_ranking(&mut r, 2 * n)).unwrap();
        let dense = dense_f64(&mm);
        let sv = stability_violation(&dense, &p).unwrap();
        prop_assert_eq!(sv == 0.0, blocking_pairs(&mm, &p).unwrap().is_empty());
        let stable = sv == 0.0 && ir_violation(&dense, &p).unwrap() == 0.0;
        prop_assert_eq!(stable, is_stable(&mm, &p).unwrap());
    }

    #[test]
    fn sd_irv_at_most_half(seed in any::<u64>(), n in 1usize..=8) {
        let mut r = rng(seed);
        let p = random_profile(&mut r, n, n);
        let mm = run_sd(&p, &random_ranking(&mut r, 2 * n)).unwrap();
        prop_assert!(ir_violation(&dense_f64(&mm), &p).unwrap() <= 0.5);
    }

    #[test]
    fn records_round_trip(seed in any::<u64>(), id in 0usize..1000, mech in prop::sample::select(vec![Mechanism::Da, Mechanism::Eh, Mechanism::Mh, Mechanism::Rsd])) {
        let cfg = DataConfig { n: 4, m: 3, count: 1, mechanism: mech, seed, ..DataConfig::default() };
        let rec = generate_record(&cfg, id).unwrap();
        let back: DatasetRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
        prop_assert_eq!(back, rec);
    }

    #[test]
    fn loss_is_finite_and_non_negative(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=5) {
        let cfg = DataConfig { n, m, count: 1, seed, ..DataConfig::default() };
        let rec = generate_record(&cfg, 0).unwrap();
        let params = RankingParams::init(10, 10, 0.1, &mut rng(seed)).unwrap();
        let out = forward_train(&rec.profile, &rec.instance, &params.tensors(false).unwrap()).unwrap();
        let l = loss(&out.soft_matching, &rec.example).unwrap().item().unwrap();
        prop_assert!(l.is_finite() && l >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn optimal_set_members_bound_any_predictor(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cfg = DataConfig { n: 3, m: 3, count: 1, seed, ..DataConfig::default() };
        let recs: Vec<DatasetRecord> = (0..6).map(|id| generate_record(&cfg, id).unwrap()).collect();
        let sets: Vec<_> = recs.iter().map(|rec| optimal_ranking_set(&rec.profile, &rec.example).unwrap()).collect();
        let oracle: Vec<_> = sets.iter().map(|s| s.rankings.iter().next().unwrap().clone()).collect();
        let guesses: Vec<_> = recs.iter().map(|_| random_ranking(&mut r, 6)).collect();
        let best = recovery_rate(&oracle, &sets).unwrap();
        prop_assert_eq!(best, 1.0);
        prop_assert!(recovery_rate(&guesses, &sets).unwrap() <= best);
    }
}
