//! Synthetic markets with distance-based preferences, example matchings and
//! JSONL persistence.
//!
//! A dataset file starts with a header line `{format_version, generator,
//! config}` followed by one record per line. Files whose name ends in `.gz`
//! are gzip-compressed. Every record draws from its own ChaCha20 stream,
//! seeded from the dataset seed and the record id, so generation can run in
//! parallel and still produce identical bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{Instance, LinearOrder, MatchingMatrix, PreferenceProfile};
use crate::mechanisms::{deferred_acceptance, hungarian_matching, rsd, Mechanism, RewardSpec};
use crate::par::{self, Exec};

pub const FORMAT_VERSION: u32 = 1;
pub const GENERATOR: &str = "chacha20-splitmix64";

/// Distance compared against the acceptability threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMetric {
    #[default]
    Euclidean,
    SquaredEuclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub n: usize,
    pub m: usize,
    pub count: usize,
    pub mechanism: Mechanism,
    pub seed: u64,
    pub t: f64,
    pub d: usize,
    #[serde(default)]
    pub metric: ThresholdMetric,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n: 10,
            m: 10,
            count: 1000,
            mechanism: Mechanism::Da,
            seed: 0,
            t: 8.0,
            d: 10,
            metric: ThresholdMetric::Euclidean,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("n, m and d must be positive".into()));
        }
        if !self.t.is_finite() {
            return Err(Error::NonFinite("threshold".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub generator: String,
    pub config: DataConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: usize,
    /// Seed of this record's generator stream.
    pub seed: u64,
    pub instance: Instance,
    pub profile: PreferenceProfile,
    pub example: MatchingMatrix,
    pub mechanism: Mechanism,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mh_selected: Option<Vec<usize>>,
}

impl DatasetRecord {
    /// Reward weights that apply to this record: the stored selection for
    /// weighted records, equal weights otherwise.
    pub fn reward_spec(&self) -> Result<RewardSpec> {
        match &self.mh_selected {
            Some(sel) => RewardSpec::weighted(self.instance.n, sel.clone()),
            None => Ok(RewardSpec::equal(self.instance.n)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.header.config.n
    }

    pub fn m(&self) -> usize {
        self.header.config.m
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of record `id` in a dataset seeded with `seed`.
pub fn record_seed(seed: u64, id: usize) -> u64 {
    splitmix64(splitmix64(seed) ^ id as u64)
}

/// Worker contexts from `N(+1, I)`, firm contexts from `N(-1, I)`.
pub fn sample_contexts<R: Rng + ?Sized>(n: usize, m: usize, d: usize, rng: &mut R) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let plus = Normal::new(1.0, 1.0).expect("unit variance");
    let minus = Normal::new(-1.0, 1.0).expect("unit variance");
    let xw = (0..n).map(|_| (0..d).map(|_| plus.sample(rng)).collect()).collect();
    let xf = (0..m).map(|_| (0..d).map(|_| minus.sample(rng)).collect()).collect();
    (xw, xf)
}

fn distance(a: &[f64], b: &[f64], metric: ThresholdMetric) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    match metric {
        ThresholdMetric::Euclidean => sq.sqrt(),
        ThresholdMetric::SquaredEuclidean => sq,
    }
}

/// Nearer is better; ties go to the lower index; options farther than `t`
/// fall below the unmatch option.
fn order_by_distance(dists: &[f64], t: f64) -> LinearOrder {
    let k = dists.len();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    let cut = idx.iter().take_while(|&&o| dists[o] <= t).count();
    idx.insert(cut, k);
    LinearOrder::from_options(idx).expect("a permutation of 0..=k")
}

/// Preferences induced by context distances with acceptability threshold `t`.
pub fn euclidean_preferences(
    xw: &[Vec<f64>],
    xf: &[Vec<f64>],
    t: f64,
    metric: ThresholdMetric,
) -> Result<PreferenceProfile> {
    if xw.iter().chain(xf).flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("context entry".into()));
    }
    let dist: Vec<Vec<f64>> = xw.iter().map(|w| xf.iter().map(|f| distance(w, f, metric)).collect()).collect();
    let workers = dist.iter().map(|row| order_by_distance(row, t)).collect();
    let firms = (0..xf.len())
        .map(|j| order_by_distance(&dist.iter().map(|row| row[j]).collect::<Vec<_>>(), t))
        .collect();
    PreferenceProfile::new(workers, firms)
}

/// Runs an example mechanism; returns the matching and, for the weighted
/// reward, the selected workers.
pub fn run_mechanism<R: Rng + ?Sized>(
    mechanism: Mechanism,
    profile: &PreferenceProfile,
    rng: &mut R,
) -> Result<(MatchingMatrix, Option<Vec<usize>>)> {
    Ok(match mechanism {
        Mechanism::Da => (deferred_acceptance(profile)?, None),
        Mechanism::Rsd => (rsd(profile, rng)?.1, None),
        Mechanism::Eh => (hungarian_matching(profile, &RewardSpec::equal(profile.n()))?, None),
        Mechanism::Mh => {
            let spec = RewardSpec::weighted_random(profile.n(), rng);
            (hungarian_matching(profile, &spec)?, Some(spec.selected))
        }
    })
}

/// Record `id` of the dataset described by `config`.
pub fn generate_record(config: &DataConfig, id: usize) -> Result<DatasetRecord> {
    let seed = record_seed(config.seed, id);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (xw, xf) = sample_contexts(config.n, config.m, config.d, &mut rng);
    let profile = euclidean_preferences(&xw, &xf, config.t, config.metric)?;
    let (example, mh_selected) = run_mechanism(config.mechanism, &profile, &mut rng)?;
    Ok(DatasetRecord {
        id,
        seed,
        instance: Instance::new(xw, xf)?,
        profile,
        example,
        mechanism: config.mechanism,
        mh_selected,
    })
}

pub fn generate_dataset(config: &DataConfig, exec: Exec) -> Result<Dataset> {
    config.validate()?;
    let records = par::map_range(exec, config.count, |id| generate_record(config, id))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        header: DatasetHeader { format_version: FORMAT_VERSION, generator: GENERATOR.into(), config: config.clone() },
        records,
    })
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, mut w: W) -> Result<()> {
    serde_json::to_writer(&mut w, &dataset.header)?;
    w.write_all(b"\n")?;
    for r in &dataset.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))?;
    let header: DatasetHeader =
        serde_json::from_str(&first?).map_err(|e| Error::Parse(format!("header line: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported format_version {}", header.format_version)));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines {
        let rec: DatasetRecord =
            serde_json::from_str(&line?).map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        if rec.instance.n != rec.profile.n() || rec.instance.m != rec.profile.m() {
            return Err(Error::Parse(format!("line {}: instance and profile sizes differ", lineno + 1)));
        }
        records.push(rec);
    }
    Ok(Dataset { header, records })
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    if is_gz(path) {
        let mut enc = GzEncoder::new(file, Compression::default());
        write_jsonl(dataset, &mut enc)?;
        enc.finish()?.flush()?;
    } else {
        write_jsonl(dataset, file)?;
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    if is_gz(path) {
        read_jsonl(BufReader::new(GzDecoder::new(file)))
    } else {
        read_jsonl(BufReader::new(file))
    }
}
