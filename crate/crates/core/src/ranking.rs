//! Context-driven agent ranking: single-head self-attention, a linear score,
//! a tie breaker and SoftSort.
//!
//! Parameter shapes depend only on the context dimension and the embedding
//! width, so one parameter set ranks markets of any size.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::matching::{Instance, Ranking};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingParams {
    pub d: usize,
    pub d_emb: usize,
    /// Row-major `d × d_emb`.
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    /// Length `d_emb`.
    pub w: Vec<f64>,
    pub b: f64,
    pub tau: f64,
}

impl RankingParams {
    /// Uniform in `±1/sqrt(fan_in)` for every weight, zero bias.
    pub fn init<R: Rng + ?Sized>(d: usize, d_emb: usize, tau: f64, rng: &mut R) -> Result<Self> {
        if d == 0 || d_emb == 0 {
            return Err(Error::InvalidArgument("d and d_emb must be positive".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
        }
        let mut uniform = |len: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..len).map(|_| rng.random_range(-bound..bound)).collect::<Vec<f64>>()
        };
        Ok(RankingParams {
            d,
            d_emb,
            wq: uniform(d * d_emb, d),
            wk: uniform(d * d_emb, d),
            wv: uniform(d * d_emb, d),
            w: uniform(d_emb, d_emb),
            b: 0.0,
            tau,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let dd = self.d * self.d_emb;
        if self.wq.len() != dd || self.wk.len() != dd || self.wv.len() != dd || self.w.len() != self.d_emb {
            return Err(Error::dims("parameter arrays do not match d and d_emb"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        if self.flatten().iter().any(|x| !x.is_finite()) || !self.tau.is_finite() {
            return Err(Error::NonFinite("ranking parameter".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        3 * self.d * self.d_emb + self.d_emb + 1
    }

    /// `wq, wk, wv, w, b` concatenated; the layout used by the optimiser.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(&self.wq);
        out.extend_from_slice(&self.wk);
        out.extend_from_slice(&self.wv);
        out.extend_from_slice(&self.w);
        out.push(self.b);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dims(format!("{} values for {} parameters", flat.len(), self.num_params())));
        }
        let dd = self.d * self.d_emb;
        self.wq.copy_from_slice(&flat[..dd]);
        self.wk.copy_from_slice(&flat[dd..2 * dd]);
        self.wv.copy_from_slice(&flat[2 * dd..3 * dd]);
        self.w.copy_from_slice(&flat[3 * dd..3 * dd + self.d_emb]);
        self.b = flat[flat.len() - 1];
        Ok(())
    }

    /// Fresh graph leaves for one pass.
    pub fn tensors(&self, requires_grad: bool) -> Result<ParamTensors> {
        let leaf = |shape: &[usize], v: &[f64]| {
            if requires_grad {
                Tensor::param(shape, v.to_vec())
            } else {
                Tensor::new(shape, v.to_vec())
            }
        };
        let (d, e) = (self.d, self.d_emb);
        Ok(ParamTensors {
            wq: leaf(&[d, e], &self.wq)?,
            wk: leaf(&[d, e], &self.wk)?,
            wv: leaf(&[d, e], &self.wv)?,
            w: leaf(&[e], &self.w)?,
            b: leaf(&[1], &[self.b])?,
            tau: self.tau,
        })
    }
}

/// Parameters as graph leaves.
pub struct ParamTensors {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub w: Tensor,
    pub b: Tensor,
    pub tau: f64,
}

impl ParamTensors {
    /// Views of a flat parameter tensor laid out as [`RankingParams::flatten`].
    pub fn from_flat(flat: &Tensor, d: usize, d_emb: usize, tau: f64) -> Result<Self> {
        let dd = d * d_emb;
        if flat.shape() != [3 * dd + d_emb + 1] {
            return Err(Error::dims(format!("flat parameters of shape {:?}", flat.shape())));
        }
        let slice = |start: usize, shape: &[usize]| flat.gather((start..start + shape.iter().product::<usize>()).collect(), shape);
        Ok(ParamTensors {
            wq: slice(0, &[d, d_emb])?,
            wk: slice(dd, &[d, d_emb])?,
            wv: slice(2 * dd, &[d, d_emb])?,
            w: slice(3 * dd, &[d_emb])?,
            b: slice(3 * dd + d_emb, &[1])?,
            tau,
        })
    }

    /// Gradient in [`RankingParams::flatten`] layout.
    pub fn flat_grad(&self, grads: &crate::autodiff::Gradients) -> Vec<f64> {
        [&self.wq, &self.wk, &self.wv, &self.w, &self.b]
            .iter()
            .flat_map(|t| grads.get_or_zeros(t))
            .collect()
    }
}

/// Stacks worker contexts over firm contexts.
pub fn context_matrix(instance: &Instance) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = instance.contexts_w.iter().chain(&instance.contexts_f).cloned().collect();
    Tensor::matrix(&rows)
}

/// Scaled dot-product attention of every agent over every agent.
pub fn self_attention(x: &Tensor, p: &ParamTensors) -> Result<Tensor> {
    let q = x.matmul(&p.wq)?;
    let k = x.matmul(&p.wk)?;
    let v = x.matmul(&p.wv)?;
    let d_emb = p.w.len() as f64;
    q.matmul(&k.transpose()?)?.scale(1.0 / d_emb.sqrt()).softmax_rows()?.matmul(&v)
}

/// `A·w + b` for every agent embedding.
pub fn linear_score(a: &Tensor, p: &ParamTensors) -> Result<Tensor> {
    let rows = a.shape()[0];
    a.matvec(&p.w)?.add(&p.b.repeat(rows)?.reshape(&[rows])?)
}

/// `rank(a)_i = #{j : a_j < a_i, or a_j = a_i and j < i}`.
pub fn ascending_ranks(a: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(i.cmp(&j)));
    let mut ranks = vec![0; a.len()];
    for (r, &i) in idx.iter().enumerate() {
        ranks[i] = r;
    }
    ranks
}

/// Adds the ascending rank of each entry. The rank is a constant in the graph.
pub fn tie_break(a: &Tensor) -> Result<Tensor> {
    let ranks = ascending_ranks(a.data()).into_iter().map(|r| r as f64).collect();
    a.add(&Tensor::vector(ranks))
}

/// Indices sorted by decreasing value, lower index first among equals.
pub fn argsort_desc(a: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));
    idx
}

/// `softmax_rows(-|sorted(a) 1ᵀ - 1 aᵀ| / tau)` with `a` sorted decreasingly.
/// Row `k` is a distribution over the agents for rank `k`.
pub fn soft_sort(a: &Tensor, tau: f64) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let k = a.len();
    let sorted = a.gather(argsort_desc(a.data()), &[k])?;
    let diff = sorted.repeat(k)?.transpose()?.sub(&a.repeat(k)?)?;
    diff.abs().scale(-1.0 / tau).softmax_rows()
}

/// Post-tie-break score of every agent.
pub fn scores(x: &Tensor, p: &ParamTensors) -> Result<Tensor> {
    tie_break(&linear_score(&self_attention(x, p)?, p)?)
}

/// Soft ranking, rows = ranks, columns = agents.
pub fn ranking_block(instance: &Instance, p: &ParamTensors) -> Result<Tensor> {
    check_dims(instance, p)?;
    soft_sort(&scores(&context_matrix(instance)?, p)?, p.tau)
}

/// The exact argsort of the tie-broken scores.
pub fn hard_ranking(instance: &Instance, params: &RankingParams) -> Result<Ranking> {
    let p = params.tensors(false)?;
    check_dims(instance, &p)?;
    let s = scores(&context_matrix(instance)?, &p)?;
    Ranking::new(argsort_desc(s.data()))
}

fn check_dims(instance: &Instance, p: &ParamTensors) -> Result<()> {
    if instance.d != p.wq.shape()[0] {
        return Err(Error::dims(format!("contexts have d={}, parameters expect {}", instance.d, p.wq.shape()[0])));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{backward, grad_check};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_instance(rng: &mut ChaCha20Rng, n: usize, m: usize, d: usize) -> Instance {
        let mut rows = |k: usize| (0..k).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect();
        let w = rows(n);
        let f = rows(m);
        Instance::new(w, f).unwrap()
    }

    fn params(seed: u64, d: usize, tau: f64) -> RankingParams {
        RankingParams::init(d, 4, tau, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn tie_break_examples() {
        let t = tie_break(&Tensor::vector(vec![0.5, 0.5, 0.2])).unwrap();
        assert_eq!(t.data(), &[1.5, 2.5, 0.2]);
        let t = tie_break(&Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(t.data(), &[1.0, 3.0, 5.0]);
        let t = tie_break(&Tensor::vector(vec![0.7; 5])).unwrap();
        assert!(t.data().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tie_break_rank_is_detached() {
        let a = Tensor::param(&[3], vec![0.5, 0.5, 0.2]).unwrap();
        let g = backward(&tie_break(&a).unwrap().mul(&Tensor::vector(vec![1., 2., 3.])).unwrap().sum()).unwrap();
        assert_eq!(g.get(&a).unwrap(), &[1., 2., 3.]);
    }

    #[test]
    fn soft_sort_examples() {
        let s = soft_sort(&Tensor::vector(vec![3.0, 1.0]), 1.0).unwrap();
        let e = [0.8808, 0.1192, 0.1192, 0.8808];
        for (x, y) in s.data().iter().zip(e) {
            assert!((x - y).abs() < 1e-3);
        }
        let s = soft_sort(&Tensor::vector(vec![4.0, 2.5, 1.0, -3.0]), 1e-4).unwrap();
        for (i, row) in s.to_rows().iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert!((x - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn attention_degenerate_and_equal_rows() {
        let p = params(1, 3, 0.1).tensors(false).unwrap();
        let x = Tensor::matrix(&[vec![0.3, -1.0, 2.0]]).unwrap();
        let out = self_attention(&x, &p).unwrap();
        let xv = x.matmul(&p.wv).unwrap();
        assert_eq!(out.data(), xv.data());
        let x = Tensor::matrix(&[vec![0.3, -1.0, 2.0], vec![1.0, 1.0, 0.0], vec![0.3, -1.0, 2.0]]).unwrap();
        let rows = self_attention(&x, &p).unwrap().to_rows();
        assert_eq!(rows[0], rows[2]);
    }

    #[test]
    fn attention_is_permutation_equivariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let p = params(2, 4, 0.1).tensors(false).unwrap();
        let inst = random_instance(&mut rng, 3, 2, 4);
        let x = context_matrix(&inst).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let rows = x.to_rows();
        let xp = Tensor::matrix(&perm.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>()).unwrap();
        let a = self_attention(&x, &p).unwrap().to_rows();
        let b = self_attention(&xp, &p).unwrap().to_rows();
        for (k, &i) in perm.iter().enumerate() {
            for (u, v) in a[i].iter().zip(&b[k]) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_agent_block_is_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let inst = random_instance(&mut rng, 1, 1, 3);
        let one = Instance { n: 1, m: 0, d: 3, contexts_w: inst.contexts_w.clone(), contexts_f: vec![] };
        let r = ranking_block(&one, &params(0, 3, 0.1).tensors(false).unwrap()).unwrap();
        assert_eq!(r.data(), &[1.0]);
    }

    #[test]
    fn hard_ranking_agrees_with_cold_soft_ranking() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for t in 0..100 {
            let n = 1 + t % 6;
            let inst = random_instance(&mut rng, n, 1 + (t * 7) % 5, 10);
            let prm = params(t as u64, 10, 1e-4);
            let hard = hard_ranking(&inst, &prm).unwrap();
            let soft = ranking_block(&inst, &prm.tensors(false).unwrap()).unwrap();
            for (k, row) in soft.to_rows().iter().enumerate() {
                let arg = argsort_desc(row)[0];
                assert_eq!(arg, hard.agent_at(k));
                assert!((row[arg] - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn decreasing_scores_give_identity() {
        assert_eq!(argsort_desc(&[5.0, 3.0, 1.0]), vec![0, 1, 2]);
        let s = tie_break(&Tensor::vector(vec![0.5, 0.5])).unwrap();
        assert_eq!(argsort_desc(s.data()), vec![1, 0]);
    }

    #[test]
    fn flat_round_trip() {
        let p = params(3, 5, 0.1);
        let mut q = p.clone();
        q.set_flat(&p.flatten()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.flatten().len(), p.num_params());
        assert!(q.set_flat(&[0.0]).is_err());
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let inst = random_instance(&mut rng, 3, 3, 4);
        let base = params(4, 4, 1.0);
        let flat = base.flatten();
        let weights: Vec<f64> = (0..36).map(|i| ((i * 5 + 1) % 7) as f64 - 3.0).collect();
        let f = |t: &Tensor| {
            let dd = 16;
            let pt = ParamTensors {
                wq: t.gather((0..dd).collect(), &[4, 4])?,
                wk: t.gather((dd..2 * dd).collect(), &[4, 4])?,
                wv: t.gather((2 * dd..3 * dd).collect(), &[4, 4])?,
                w: t.gather((3 * dd..3 * dd + 4).collect(), &[4])?,
                b: t.gather(vec![3 * dd + 4], &[1])?,
                tau: base.tau,
            };
            let r = ranking_block(&inst, &pt)?;
            Ok(r.mul(&Tensor::new(&[6, 6], weights.clone())?)?.sum())
        };
        let err = grad_check(f, &[flat.len()], &flat, 1e-5).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    proptest! {
        #[test]
        fn soft_sort_rows_sum_to_one(v in prop::collection::vec(-5.0f64..5.0, 1..8), tau in 0.01f64..2.0) {
            let s = soft_sort(&Tensor::vector(v), tau).unwrap();
            for row in s.to_rows() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }

        #[test]
        fn hard_ranking_is_a_permutation_even_with_ties(v in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0]), 1..10)) {
            let s = tie_break(&Tensor::vector(v)).unwrap();
            let order = argsort_desc(s.data());
            prop_assert!(Ranking::new(order).is_ok());
        }

        #[test]
        fn argsort_ignores_monotone_rescaling(v in prop::collection::vec(-5.0f64..5.0, 1..10), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let s = tie_break(&Tensor::vector(v)).unwrap();
            let scaled: Vec<f64> = s.data().iter().map(|x| a * x + b).collect();
            prop_assert_eq!(argsort_desc(s.data()), argsort_desc(&scaled));
        }
    }
}
