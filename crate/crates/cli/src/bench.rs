//! Wall-time scaling of the matching pipeline.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{bail, Result};
use clap::ValueEnum;
use matchkit::matching::{random_profile, random_ranking, Instance};
use matchkit::ranking::{ranking_block, RankingParams};
use matchkit::tsd::{build_preference_tensor, build_ranking_matrix, tsd};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::json;

const CONTEXT_DIM: usize = 10;

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Op {
    /// Tensor serial dictatorship on a hard ranking.
    Tsd,
    /// Attention scores followed by SoftSort.
    Ranking,
}

impl Op {
    fn name(self) -> &'static str {
        match self {
            Op::Tsd => "tsd",
            Op::Ranking => "ranking",
        }
    }
}

fn median(mut f: impl FnMut() -> Result<()>, reps: usize) -> Result<Duration> {
    let mut ts = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        ts.push(t.elapsed());
    }
    ts.sort();
    Ok(ts[reps / 2])
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn run(op: Op, sizes: &[usize], reps: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    if sizes.is_empty() || sizes.contains(&0) || reps == 0 {
        bail!("sizes must be positive and reps at least 1");
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let prm = RankingParams::init(CONTEXT_DIM, 10, 0.1, &mut rng)?;
    let pt = prm.tensors(false)?;
    let mut rows = Vec::new();
    for &n in sizes {
        let t = match op {
            Op::Tsd => {
                let prefs = build_preference_tensor(&random_profile(&mut rng, n, n))?;
                let r = build_ranking_matrix(&random_ranking(&mut rng, 2 * n));
                median(|| tsd(&prefs, &r).map(drop).map_err(Into::into), reps)?
            }
            Op::Ranking => {
                let mut ctx = |k: usize| -> Vec<Vec<f64>> {
                    (0..k).map(|_| (0..CONTEXT_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
                };
                let inst = Instance::new(ctx(n), ctx(n))?;
                median(|| ranking_block(&inst, &pt).map(drop).map_err(Into::into), reps)?
            }
        };
        eprintln!("n = {n}: {:.6} s", t.as_secs_f64());
        rows.push((n, t.as_secs_f64()));
    }

    let mut w: Box<dyn Write> = match out {
        Some(p) => {
            crate::echo_config(p, &json!({ "command": "bench", "op": op.name(), "sizes": sizes, "reps": reps, "seed": seed }))?;
            Box::new(std::fs::File::create(p)?)
        }
        None => Box::new(std::io::stdout()),
    };
    writeln!(w, "op,n,median_seconds,reps")?;
    for (n, s) in &rows {
        writeln!(w, "{},{n},{s:.9},{reps}", op.name())?;
    }
    w.flush()?;
    if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let slope = loglog_slope(&xs, &ys);
        match out {
            Some(_) => println!("log-log slope: {slope:.3}"),
            None => eprintln!("log-log slope: {slope:.3}"),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [20.0, 40.0, 80.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3e-7 * x.powi(4)).collect();
        assert!((loglog_slope(&xs, &ys) - 4.0).abs() < 1e-12);
    }
}
