//! Optimisation loop, checkpoints and the evaluation harness.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{record_seed, Dataset, DatasetRecord};
use crate::error::{Error, Result};
use crate::matching::{random_ranking, run_sd, MatchingMatrix, Ranking};
use crate::mechanisms::Mechanism;
use crate::metrics::{
    dense_f64, hamming_distance, ir_violation, num_blocking_pairs, optimal_ranking_set, reward_ratio,
    stability_violation, summarize, wilcoxon_one_sided, Metric, OptimalSet, Summary, WilcoxonMethod,
};
use crate::neuralsd::{forward_train, infer_with_ranking, loss_with_stability_reg};
use crate::par::{self, Exec};
use crate::ranking::RankingParams;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub d_emb: usize,
    pub clip_l1_max: f64,
    pub lambda_stability: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 4,
            learning_rate: 0.1,
            tau: 0.1,
            d_emb: 10,
            clip_l1_max: 10.0,
            lambda_stability: 0.0,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.batch_size == 0 || self.d_emb == 0 {
            return bad("batch size and d_emb must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.clip_l1_max > 0.0) {
            return bad("clipping norm must be positive");
        }
        if !(self.lambda_stability >= 0.0 && self.lambda_stability.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }
}

/// Rescales `grads` so that their L1 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_l1(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm: f64 = grads.iter().map(|g| g.abs()).sum();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, t: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dims(format!(
                "{} parameters and {} gradients for an optimiser of size {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grads[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grads[k] * grads[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Loss of one record and its gradient in [`RankingParams::flatten`] layout.
pub fn record_loss_grad(
    record: &DatasetRecord,
    params: &RankingParams,
    lambda: f64,
    dataset_len: usize,
) -> Result<(f64, Vec<f64>)> {
    let pt = params.tensors(true)?;
    let out = forward_train(&record.profile, &record.instance, &pt)?;
    let loss = loss_with_stability_reg(&out.soft_matching, &record.example, &record.profile, lambda, dataset_len)?;
    let value = loss.item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("training loss on record {}", record.id)));
    }
    let grads = crate::autodiff::backward(&loss)?;
    let g = pt.flat_grad(&grads);
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("gradient on record {}", record.id)));
    }
    Ok((value, g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub params: RankingParams,
    pub config: TrainConfig,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
    pub final_train_loss: f64,
}

impl Checkpoint {
    /// Untrained checkpoint with parameters drawn from `config.seed`.
    pub fn initial(d: usize, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        Ok(Checkpoint {
            format_version: CHECKPOINT_VERSION,
            params: RankingParams::init(d, config.d_emb, config.tau, &mut rng)?,
            config: config.clone(),
            loss_curve: Vec::new(),
            final_train_loss: f64::NAN,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {}", ck.format_version)));
        }
        ck.params.validate()?;
        Ok(ck)
    }
}

/// Trains a ranking on the examples of `dataset`.
pub fn train(dataset: &Dataset, config: &TrainConfig, exec: Exec) -> Result<Checkpoint> {
    train_with_progress(dataset, config, exec, |_, _| {})
}

/// [`train`], calling `on_epoch(epoch, mean_loss)` after every epoch.
pub fn train_with_progress<F: FnMut(usize, f64)>(
    dataset: &Dataset,
    config: &TrainConfig,
    exec: Exec,
    mut on_epoch: F,
) -> Result<Checkpoint> {
    config.validate()?;
    let records = &dataset.records;
    if records.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let (n, m, d) = (records[0].instance.n, records[0].instance.m, records[0].instance.d);
    if records.iter().any(|r| (r.instance.n, r.instance.m, r.instance.d) != (n, m, d)) {
        return Err(Error::dims("training records must share n, m and d"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut params = RankingParams::init(d, config.d_emb, config.tau, &mut rng)?;
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len(), config.learning_rate, config.beta1, config.beta2, config.adam_eps);
    let len = records.len();
    let mut order: Vec<usize> = (0..len).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results = par::map(exec, batch, |&k| {
                record_loss_grad(&records[k], &params, config.lambda_stability, len)
            });
            let mut grad = vec![0.0; flat.len()];
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r?;
                batch_loss += l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            epoch_loss += batch_loss;
            clip_grad_l1(&mut grad, config.clip_l1_max);
            adam.step(&mut flat, &grad)?;
            params.set_flat(&flat)?;
        }
        let mean = epoch_loss / len as f64;
        curve.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(Checkpoint {
        format_version: CHECKPOINT_VERSION,
        params,
        config: config.clone(),
        final_train_loss: curve.last().copied().unwrap_or(f64::NAN),
        loss_curve: curve,
    })
}

pub fn write_loss_curve(path: &Path, curve: &[f64]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        epoch: usize,
        mean_loss: f64,
    }
    let mut w = csv::Writer::from_path(path)?;
    for (epoch, &mean_loss) in curve.iter().enumerate() {
        w.serialize(Row { epoch, mean_loss })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    NeuralSd,
    Rsd,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::NeuralSd => "neuralsd",
            Model::Rsd => "rsd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub record_id: usize,
    pub model: Model,
    pub metric: Metric,
    pub value: f64,
}

/// One-sided paired comparison of the learned mechanism against the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: Metric,
    /// The alternative hypothesis, e.g. `neuralsd < rsd`.
    pub alternative: String,
    pub statistic: Option<f64>,
    pub n_eff: usize,
    pub p_value: Option<f64>,
    pub method: Option<WilcoxonMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rows: Vec<MetricRow>,
    pub summary: BTreeMap<Model, BTreeMap<Metric, Summary>>,
    pub comparisons: Vec<Comparison>,
}

impl Evaluation {
    pub fn values(&self, model: Model, metric: Metric) -> Vec<f64> {
        self.rows.iter().filter(|r| r.model == model && r.metric == metric).map(|r| r.value).collect()
    }

    pub fn mean(&self, model: Model, metric: Metric) -> Option<f64> {
        self.summary.get(&model)?.get(&metric).map(|s| s.mean)
    }

    pub fn comparison(&self, metric: Metric) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.metric == metric)
    }

    pub fn write_rows_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_comparisons_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["metric", "alternative", "statistic", "n_eff", "p_value", "method"])?;
        for c in &self.comparisons {
            let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
            w.write_record([
                c.metric.name().to_string(),
                c.alternative.clone(),
                opt(c.statistic),
                c.n_eff.to_string(),
                opt(c.p_value),
                c.method.map_or(String::new(), |m| format!("{m:?}").to_lowercase()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `{model: {metric: {mean, std, n}}}` plus the comparisons.
    pub fn summary_json(&self) -> serde_json::Value {
        let summary: BTreeMap<&str, BTreeMap<&str, &Summary>> = self
            .summary
            .iter()
            .map(|(model, ms)| (model.name(), ms.iter().map(|(k, v)| (k.name(), v)).collect()))
            .collect();
        serde_json::json!({ "summary": summary, "wilcoxon": self.comparisons })
    }
}

/// Metrics reported for examples produced by `mechanism`.
pub fn metrics_for(mechanism: Mechanism) -> &'static [Metric] {
    match mechanism {
        Mechanism::Da | Mechanism::Rsd => &[Metric::Hd, Metric::Bp, Metric::Sv, Metric::Irv],
        Mechanism::Eh | Mechanism::Mh => &[Metric::Hd, Metric::Rw],
    }
}

fn metric_value(metric: Metric, pred: &MatchingMatrix, record: &DatasetRecord) -> Result<f64> {
    let p = &record.profile;
    match metric {
        Metric::Hd => hamming_distance(pred, &record.example),
        Metric::Bp => num_blocking_pairs(pred, p),
        Metric::Sv => stability_violation(&dense_f64(pred), p),
        Metric::Irv => ir_violation(&dense_f64(pred), p),
        Metric::Rw => reward_ratio(pred, p, &record.reward_spec()?, &record.example),
    }
}

/// Baseline ranking of record `id` under evaluation seed `seed`.
pub fn baseline_ranking(seed: u64, record: &DatasetRecord) -> Ranking {
    let mut rng = ChaCha20Rng::seed_from_u64(record_seed(seed, record.id));
    random_ranking(&mut rng, record.instance.n + record.instance.m)
}

fn check_compatible(params: &RankingParams, dataset: &Dataset) -> Result<()> {
    if let Some(r) = dataset.records.iter().find(|r| r.instance.d != params.d) {
        return Err(Error::dims(format!(
            "checkpoint expects d = {}, record {} has d = {}",
            params.d, r.id, r.instance.d
        )));
    }
    Ok(())
}

/// Scores the learned mechanism and the random baseline on every record.
pub fn evaluate(params: &RankingParams, dataset: &Dataset, seed: u64, exec: Exec) -> Result<Evaluation> {
    params.validate()?;
    check_compatible(params, dataset)?;
    let metrics = metrics_for(dataset.header.config.mechanism);
    let per_record = par::map(exec, &dataset.records, |rec| -> Result<Vec<MetricRow>> {
        let (_, nsd) = infer_with_ranking(&rec.profile, &rec.instance, params)?;
        let rsd = run_sd(&rec.profile, &baseline_ranking(seed, rec))?;
        let mut rows = Vec::with_capacity(2 * metrics.len());
        for (model, pred) in [(Model::NeuralSd, &nsd), (Model::Rsd, &rsd)] {
            for &metric in metrics {
                rows.push(MetricRow { record_id: rec.id, model, metric, value: metric_value(metric, pred, rec)? });
            }
        }
        Ok(rows)
    });
    let mut rows = Vec::new();
    for r in per_record {
        rows.extend(r?);
    }
    let mut ev = Evaluation { rows, summary: BTreeMap::new(), comparisons: Vec::new() };
    for model in [Model::NeuralSd, Model::Rsd] {
        let per_metric = metrics.iter().map(|&k| (k, summarize(&ev.values(model, k)))).collect();
        ev.summary.insert(model, per_metric);
    }
    ev.comparisons = metrics.iter().map(|&k| compare(&ev, k)).collect();
    Ok(ev)
}

fn compare(ev: &Evaluation, metric: Metric) -> Comparison {
    let nsd = ev.values(Model::NeuralSd, metric);
    let rsd = ev.values(Model::Rsd, metric);
    let (a, b, alternative) = if metric.higher_is_better() {
        (rsd, nsd, "rsd < neuralsd")
    } else {
        (nsd, rsd, "neuralsd < rsd")
    };
    match wilcoxon_one_sided(&a, &b) {
        Ok(w) => Comparison {
            metric,
            alternative: alternative.into(),
            statistic: Some(w.statistic),
            n_eff: w.n_eff,
            p_value: Some(w.p_value),
            method: Some(w.method),
            note: None,
        },
        Err(e) => Comparison {
            metric,
            alternative: alternative.into(),
            statistic: None,
            n_eff: 0,
            p_value: None,
            method: None,
            note: Some(e.to_string()),
        },
    }
}

/// Per-record outcome of the ranking recovery search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub record_id: usize,
    pub optimal_set_size: usize,
    pub rankings_searched: usize,
    pub best_distance: usize,
    pub neuralsd_hit: bool,
    pub rsd_hit: bool,
    /// Probability that a uniform ranking lands in the optimal set.
    pub rsd_expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub rows: Vec<RecoveryRow>,
    pub neuralsd_rate: f64,
    pub rsd_rate: f64,
    pub rsd_expected_rate: f64,
}

/// Optimal ranking set of every record.
pub fn optimal_sets(dataset: &Dataset, exec: Exec) -> Result<Vec<OptimalSet>> {
    par::map(exec, &dataset.records, |r| optimal_ranking_set(&r.profile, &r.example)).into_iter().collect()
}

pub fn recovery(params: &RankingParams, dataset: &Dataset, sets: &[OptimalSet], seed: u64) -> Result<RecoveryReport> {
    check_compatible(params, dataset)?;
    if sets.len() != dataset.records.len() {
        return Err(Error::dims(format!("{} optimal sets for {} records", sets.len(), dataset.records.len())));
    }
    if sets.is_empty() {
        return Err(Error::InvalidArgument("no records".into()));
    }
    let mut rows = Vec::with_capacity(sets.len());
    for (rec, set) in dataset.records.iter().zip(sets) {
        let (r, _) = infer_with_ranking(&rec.profile, &rec.instance, params)?;
        rows.push(RecoveryRow {
            record_id: rec.id,
            optimal_set_size: set.len(),
            rankings_searched: set.searched,
            best_distance: set.distance,
            neuralsd_hit: set.contains(&r),
            rsd_hit: set.contains(&baseline_ranking(seed, rec)),
            rsd_expected: set.uniform_hit_probability(),
        });
    }
    let k = rows.len() as f64;
    Ok(RecoveryReport {
        neuralsd_rate: rows.iter().filter(|r| r.neuralsd_hit).count() as f64 / k,
        rsd_rate: rows.iter().filter(|r| r.rsd_hit).count() as f64 / k,
        rsd_expected_rate: rows.iter().map(|r| r.rsd_expected).sum::<f64>() / k,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, DataConfig};

    fn data(n: usize, count: usize, mechanism: Mechanism, seed: u64) -> Dataset {
        let cfg = DataConfig { n, m: n, count, mechanism, seed, ..DataConfig::default() };
        generate_dataset(&cfg, Exec::available()).unwrap()
    }

    #[test]
    fn clipping() {
        let mut g = vec![2.0, -3.0];
        assert_eq!(clip_grad_l1(&mut g, 10.0), 5.0);
        assert_eq!(g, vec![2.0, -3.0]);
        let mut g = vec![10.0, -10.0];
        clip_grad_l1(&mut g, 10.0);
        assert_eq!(g, vec![5.0, -5.0]);
    }

    #[test]
    fn adam_matches_hand_recurrence() {
        // f(x, y) = x^2 + 3 y^2
        let mut adam = Adam::new(2, 0.01, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0, -2.0];
        let (mut m, mut v, mut q) = ([0.0f64; 2], [0.0f64; 2], [1.0f64, -2.0]);
        for t in 1..=100 {
            let g = [2.0 * p[0], 6.0 * p[1]];
            adam.step(&mut p, &g).unwrap();
            let gq = [2.0 * q[0], 6.0 * q[1]];
            for k in 0..2 {
                m[k] = 0.9 * m[k] + 0.1 * gq[k];
                v[k] = 0.999 * v[k] + 0.001 * gq[k] * gq[k];
                let mh = m[k] / (1.0 - 0.9f64.powi(t));
                let vh = v[k] / (1.0 - 0.999f64.powi(t));
                q[k] -= 0.01 * mh / (vh.sqrt() + 1e-8);
            }
            assert!((p[0] - q[0]).abs() < 1e-10 && (p[1] - q[1]).abs() < 1e-10);
        }
        assert!(p[0].abs() < 1.0 && p[1].abs() < 2.0);
    }

    #[test]
    fn adam_zero_and_constant_gradients() {
        let mut adam = Adam::new(1, 0.1, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0];
        adam.step(&mut p, &[0.0]).unwrap();
        assert_eq!(p, vec![1.0]);
        let mut adam = Adam::new(1, 0.1, 0.9, 0.999, 1e-8);
        for _ in 0..50 {
            let before = p[0];
            adam.step(&mut p, &[3.0]).unwrap();
            assert!((before - p[0] - 0.1).abs() < 1e-6);
        }
        assert!(adam.step(&mut p, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn training_is_deterministic_across_execution_modes() {
        let ds = data(4, 24, Mechanism::Da, 1);
        let cfg = TrainConfig { epochs: 2, seed: 9, ..TrainConfig::default() };
        let a = train(&ds, &cfg, Exec::Parallel).unwrap();
        let b = train(&ds, &cfg, Exec::Sequential).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.loss_curve.len(), 2);
        assert!(a.loss_curve.iter().all(|l| l.is_finite()));
        let reg = train(&ds, &TrainConfig { lambda_stability: 0.1, ..cfg.clone() }, Exec::Parallel).unwrap();
        assert!(reg.final_train_loss.is_finite());
    }

    #[test]
    fn checkpoint_round_trip() {
        let ds = data(3, 8, Mechanism::Da, 2);
        let ck = train(&ds, &TrainConfig { epochs: 1, ..TrainConfig::default() }, Exec::available()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let e1 = evaluate(&ck.params, &ds, 0, Exec::available()).unwrap();
        let e2 = evaluate(&back.params, &ds, 0, Exec::available()).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn evaluation_rows_and_scale_change() {
        let ck = Checkpoint::initial(10, &TrainConfig::default()).unwrap();
        let ds = data(6, 12, Mechanism::Da, 3);
        let ev = evaluate(&ck.params, &ds, 5, Exec::available()).unwrap();
        assert_eq!(ev.rows.len(), 12 * 2 * 4);
        assert!(ev.values(Model::NeuralSd, Metric::Irv).iter().all(|&x| x <= 0.5));
        let big = data(12, 4, Mechanism::Eh, 4);
        let ev = evaluate(&ck.params, &big, 5, Exec::available()).unwrap();
        assert!(ev.values(Model::Rsd, Metric::Rw).iter().all(|&x| x <= 1.0 + 1e-12));
        assert_eq!(ev.comparisons.len(), 2);
        let wrong_d = Checkpoint::initial(3, &TrainConfig::default()).unwrap();
        assert!(evaluate(&wrong_d.params, &ds, 5, Exec::available()).is_err());
    }

    #[test]
    fn recovery_report() {
        let ds = data(3, 10, Mechanism::Da, 5);
        let sets = optimal_sets(&ds, Exec::available()).unwrap();
        let ck = Checkpoint::initial(10, &TrainConfig::default()).unwrap();
        let rep = recovery(&ck.params, &ds, &sets, 1).unwrap();
        assert_eq!(rep.rows.len(), 10);
        assert!(rep.rows.iter().all(|r| r.rankings_searched == 720 && r.optimal_set_size >= 1));
        assert!((0.0..=1.0).contains(&rep.rsd_expected_rate));
    }
}
