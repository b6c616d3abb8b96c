//! Property oracles on random small markets.

use anyhow::Result;
use clap::ValueEnum;
use matchkit::matching::{
    check_strategy_proofness, enumerate_matchings, is_pareto_efficient, random_profile, random_ranking, run_sd,
    Instance, PreferenceProfile,
};
use matchkit::mechanisms::{hungarian_matching, matching_reward, RewardSpec};
use matchkit::metrics::ir_violation_exact;
use matchkit::neuralsd::forward_infer;
use matchkit::ranking::RankingParams;
use matchkit::tsd::{build_preference_tensor, build_ranking_matrix, tsd};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const CONTEXT_DIM: usize = 4;
const SHOWN: usize = 5;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Sp,
    Pareto,
    Irv,
    TsdEquiv,
    Hungarian,
    All,
}

struct Report {
    summary: String,
    counterexamples: Vec<String>,
}

fn instance(rng: &mut ChaCha20Rng, n: usize, m: usize) -> Result<Instance> {
    let mut rows = |k: usize| -> Vec<Vec<f64>> {
        (0..k).map(|_| (0..CONTEXT_DIM).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
    };
    let w = rows(n);
    let f = rows(m);
    Ok(Instance::new(w, f)?)
}

fn params(rng: &mut ChaCha20Rng) -> Result<RankingParams> {
    Ok(RankingParams::init(CONTEXT_DIM, 6, 0.1, rng)?)
}

fn describe(p: &PreferenceProfile) -> String {
    serde_json::to_string(p).unwrap_or_default()
}

fn sp(trials: usize, rng: &mut ChaCha20Rng) -> Result<Report> {
    let mut counterexamples = Vec::new();
    for _ in 0..trials {
        let (n, m) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let inst = instance(rng, n, m)?;
        let p = random_profile(rng, n, m);
        let prm = params(rng)?;
        let mech = |i: &Instance, q: &PreferenceProfile| forward_infer(q, i, &prm);
        for dev in check_strategy_proofness(mech, &inst, &p)? {
            counterexamples.push(format!("{dev:?} in {}", describe(&p)));
        }
    }
    Ok(Report { summary: format!("{trials} markets with fresh parameters"), counterexamples })
}

fn pareto(trials: usize, rng: &mut ChaCha20Rng) -> Result<Report> {
    let mut counterexamples = Vec::new();
    for _ in 0..trials {
        let (n, m) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let p = random_profile(rng, n, m);
        let inst = instance(rng, n, m)?;
        let sd = run_sd(&p, &random_ranking(rng, n + m))?;
        let nsd = forward_infer(&p, &inst, &params(rng)?)?;
        for (name, mm) in [("sd", sd), ("neuralsd", nsd)] {
            if !is_pareto_efficient(&mm, &p)? {
                counterexamples.push(format!("{name} output {mm:?} is dominated in {}", describe(&p)));
            }
        }
    }
    Ok(Report { summary: format!("{trials} markets, SD and NeuralSD"), counterexamples })
}

fn irv(trials: usize, rng: &mut ChaCha20Rng) -> Result<Report> {
    let mut counterexamples = Vec::new();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let p = random_profile(rng, n, m);
        let inst = instance(rng, n, m)?;
        let sd = run_sd(&p, &random_ranking(rng, n + m))?;
        let nsd = forward_infer(&p, &inst, &params(rng)?)?;
        for mm in [sd, nsd] {
            let (num, den) = ir_violation_exact(&mm, &p)?;
            worst = worst.max(num as f64 / den as f64);
            if 2 * num > den {
                counterexamples.push(format!("IRV {num}/{den} in {}", describe(&p)));
            }
        }
    }
    Ok(Report { summary: format!("{trials} markets, max observed IRV {worst:.4}"), counterexamples })
}

fn tsd_equiv(trials: usize, rng: &mut ChaCha20Rng) -> Result<Report> {
    let mut counterexamples = Vec::new();
    for _ in 0..trials {
        let (n, m) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let p = random_profile(rng, n, m);
        let r = random_ranking(rng, n + m);
        let soft = tsd(&build_preference_tensor(&p)?, &build_ranking_matrix(&r))?;
        if soft.data() != run_sd(&p, &r)?.to_f64().as_slice() {
            counterexamples.push(format!("ranking {r:?} in {}", describe(&p)));
        }
    }
    Ok(Report { summary: format!("{trials} markets"), counterexamples })
}

fn hungarian(trials: usize, rng: &mut ChaCha20Rng) -> Result<Report> {
    let mut counterexamples = Vec::new();
    for t in 0..trials {
        let n = rng.random_range(1..=4);
        let p = random_profile(rng, n, n);
        let spec = if t % 2 == 0 { RewardSpec::equal(n) } else { RewardSpec::weighted_random(n, rng) };
        let got = matching_reward(&hungarian_matching(&p, &spec)?, &p, &spec)?;
        let mut best = f64::NEG_INFINITY;
        for mm in enumerate_matchings(n, n) {
            best = best.max(matching_reward(&mm, &p, &spec)?);
        }
        if got != best {
            counterexamples.push(format!("reward {got} < {best} in {}", describe(&p)));
        }
    }
    Ok(Report { summary: format!("{trials} markets against enumeration"), counterexamples })
}

/// Runs the selected suites and returns how many failed.
pub fn run(suite: Suite, trials: usize, seed: u64) -> Result<usize> {
    let all = [Suite::Sp, Suite::Pareto, Suite::Irv, Suite::TsdEquiv, Suite::Hungarian];
    let selected: Vec<Suite> = if suite == Suite::All { all.to_vec() } else { vec![suite] };
    let mut failed = 0;
    for (k, s) in selected.into_iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let (name, report) = match s {
            Suite::Sp => ("sp", sp(trials, &mut rng)?),
            Suite::Pareto => ("pareto", pareto(trials, &mut rng)?),
            Suite::Irv => ("irv", irv(trials, &mut rng)?),
            Suite::TsdEquiv => ("tsd-equiv", tsd_equiv(trials, &mut rng)?),
            Suite::Hungarian => ("hungarian", hungarian(trials, &mut rng)?),
            Suite::All => unreachable!(),
        };
        if report.counterexamples.is_empty() {
            println!("{name}: PASS ({})", report.summary);
        } else {
            failed += 1;
            println!("{name}: FAIL ({}, {} counterexamples)", report.summary, report.counterexamples.len());
            for c in report.counterexamples.iter().take(SHOWN) {
                println!("  {c}");
            }
        }
    }
    Ok(failed)
}
