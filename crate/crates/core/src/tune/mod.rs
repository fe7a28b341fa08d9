//! Tree-structured Parzen Estimator over the pipeline hyperparameters.

mod parzen;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use parzen::{BandwidthRule, ParzenEstimator};

pub const PARAM_NAMES: [&str; 9] = [
    "w_token",
    "w_first_token",
    "w_url_text",
    "w_domain",
    "w_cos",
    "threshold",
    "resolution",
    "bridgeness_threshold",
    "location_boost",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl Default for SearchSpace {
    /// Weights `[0.1, 1]`, threshold `[0.5, 5]`, resolution `[0.001, 2]`,
    /// bridgeness `[-2, 2]`, location boost `[0, 2]`.
    fn default() -> Self {
        let bounds = [
            (0.1, 1.0),
            (0.1, 1.0),
            (0.1, 1.0),
            (0.1, 1.0),
            (0.1, 1.0),
            (0.5, 5.0),
            (0.001, 2.0),
            (-2.0, 2.0),
            (0.0, 2.0),
        ];
        let dims = PARAM_NAMES
            .iter()
            .zip(bounds)
            .map(|(n, (lower, upper))| Dimension { name: n.to_string(), lower, upper })
            .collect();
        Self { dims }
    }
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        let space = Self { dims };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Config("search space has no dimensions".into()));
        }
        for d in &self.dims {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::Config(format!("tune.space.{}: need lower < upper, got [{}, {}]", d.name, d.lower, d.upper)));
            }
        }
        Ok(())
    }

    /// Replaces the bounds of an existing dimension.
    pub fn set_bounds(&mut self, name: &str, lower: f64, upper: f64) -> Result<()> {
        let d = self
            .dims
            .iter_mut()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Config(format!("unknown tuning parameter `{name}`")))?;
        d.lower = lower;
        d.upper = upper;
        self.validate()
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn contains(&self, params: &[f64]) -> bool {
        params.len() == self.dims.len()
            && params.iter().zip(&self.dims).all(|(x, d)| (d.lower..=d.upper).contains(x))
    }

    pub fn uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.dims.iter().map(|d| rng.gen_range(d.lower..=d.upper)).collect()
    }

    pub fn named(&self, params: &[f64]) -> BTreeMap<String, f64> {
        self.dims.iter().zip(params).map(|(d, &x)| (d.name.clone(), x)).collect()
    }

    pub fn from_named(&self, named: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        self.dims
            .iter()
            .map(|d| {
                named
                    .get(&d.name)
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("trial lacks parameter `{}`", d.name)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
    pub bandwidth_rule: BandwidthRule,
    pub seed: u64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_startup: 10,
            n_candidates: 24,
            bandwidth_rule: BandwidthRule::Scaled,
            seed: 0,
        }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("tune.gamma must be in (0, 1), got {}", self.gamma)));
        }
        if self.n_candidates == 0 {
            return Err(Error::Config("tune.n_candidates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub trial_id: usize,
    pub params: Vec<f64>,
    pub objective: f64,
    pub seed: u64,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

/// Serialized form of a trial: parameters keyed by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrialLine {
    trial_id: usize,
    params: BTreeMap<String, f64>,
    objective: f64,
    seed: u64,
    wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn better(a: &Trial, b: &Trial) -> std::cmp::Ordering {
    b.objective.total_cmp(&a.objective).then(a.trial_id.cmp(&b.trial_id))
}

/// Top `ceil(gamma * n)` trials by objective and the rest; ties go to the
/// lower trial id.
pub fn split_trials(history: &[Trial], gamma: f64) -> (Vec<&Trial>, Vec<&Trial>) {
    let mut sorted: Vec<&Trial> = history.iter().collect();
    sorted.sort_by(|a, b| better(a, b));
    let n_good = ((gamma * history.len() as f64).ceil() as usize).min(history.len());
    let bad = sorted.split_off(n_good);
    (sorted, bad)
}

/// Next parameter vector. Uniform while the history is shorter than
/// `n_startup`; afterwards each dimension independently maximizes l(x)/g(x)
/// over candidates drawn from l.
pub fn suggest<R: Rng + ?Sized>(history: &[Trial], space: &SearchSpace, cfg: &TpeConfig, rng: &mut R) -> Vec<f64> {
    if history.len() < cfg.n_startup.max(1) {
        return space.uniform(rng);
    }
    let (good, bad) = split_trials(history, cfg.gamma);
    space
        .dims()
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let lv: Vec<f64> = good.iter().map(|t| t.params[k]).collect();
            let gv: Vec<f64> = bad.iter().map(|t| t.params[k]).collect();
            let l = ParzenEstimator::new(&lv, d.lower, d.upper, cfg.bandwidth_rule).expect("validated bounds");
            let g = ParzenEstimator::new(&gv, d.lower, d.upper, cfg.bandwidth_rule).expect("validated bounds");
            let mut best = (f64::NEG_INFINITY, 0.5 * (d.lower + d.upper));
            for _ in 0..cfg.n_candidates {
                let x = l.sample(rng);
                let score = l.pdf(x).ln() - g.pdf(x).ln();
                if score > best.0 {
                    best = (score, x);
                }
            }
            best.1
        })
        .collect()
}

fn trial_seed(seed: u64, trial_id: usize) -> u64 {
    seed ^ (trial_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, Default)]
pub struct TrialHistory {
    pub trials: Vec<Trial>,
}

impl TrialHistory {
    /// Highest objective; ties go to the earliest trial.
    pub fn best(&self) -> Option<&Trial> {
        self.trials.iter().min_by(|a, b| better(a, b))
    }
}

/// JSON-lines trial log, one trial per line.
pub struct TrialStore {
    path: PathBuf,
    file: File,
    space: SearchSpace,
}

impl TrialStore {
    pub fn create(path: &Path, space: &SearchSpace) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), file, space: space.clone() })
    }

    pub fn append_to(path: &Path, space: &SearchSpace) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), file, space: space.clone() })
    }

    pub fn record(&mut self, t: &Trial) -> Result<()> {
        let line = TrialLine {
            trial_id: t.trial_id,
            params: self.space.named(&t.params),
            objective: t.objective,
            seed: t.seed,
            wall_time_s: t.wall_time_s,
            error: t.error.clone(),
        };
        let text = serde_json::to_string(&line).expect("trial serializes");
        writeln!(self.file, "{text}").map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn load(path: &Path, space: &SearchSpace) -> Result<Vec<Trial>> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| Error::Malformed { path: path.to_path_buf(), line: i + 1, message };
            let t: TrialLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            let params = space.from_named(&t.params).map_err(|e| malformed(e.to_string()))?;
            out.push(Trial {
                trial_id: t.trial_id,
                params,
                objective: t.objective,
                seed: t.seed,
                wall_time_s: t.wall_time_s,
                error: t.error,
            });
        }
        Ok(out)
    }
}

/// Runs `n_trials` sequential trials. `enqueued` vectors are evaluated first
/// (e.g. the default configuration); failing or panicking objectives score 0.
pub fn optimize<F>(
    mut objective: F,
    space: &SearchSpace,
    n_trials: usize,
    cfg: &TpeConfig,
    enqueued: &[Vec<f64>],
    mut store: Option<&mut TrialStore>,
) -> Result<TrialHistory>
where
    F: FnMut(&[f64], u64) -> Result<f64>,
{
    space.validate()?;
    cfg.validate()?;
    for v in enqueued {
        if !space.contains(v) {
            return Err(Error::InvalidInput(format!("enqueued trial {v:?} lies outside the search space")));
        }
    }
    let mut history = TrialHistory::default();
    for trial_id in 0..n_trials {
        let seed = trial_seed(cfg.seed, trial_id);
        let params = match enqueued.get(trial_id) {
            Some(v) => v.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                suggest(&history.trials, space, cfg, &mut rng)
            }
        };
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| objective(&params, seed)));
        let (value, error) = match outcome {
            Ok(Ok(v)) if v.is_finite() => (v, None),
            Ok(Ok(v)) => (0.0, Some(format!("non-finite objective {v}"))),
            Ok(Err(e)) => (0.0, Some(e.to_string())),
            Err(_) => (0.0, Some("objective panicked".to_string())),
        };
        let trial = Trial {
            trial_id,
            params,
            objective: value,
            seed,
            wall_time_s: start.elapsed().as_secs_f64(),
            error,
        };
        if let Some(s) = store.as_deref_mut() {
            s.record(&trial)?;
        }
        history.trials.push(trial);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn trial(id: usize, x: f64, objective: f64) -> Trial {
        Trial { trial_id: id, params: vec![x], objective, seed: 0, wall_time_s: 0.0, error: None }
    }

    fn unit_space() -> SearchSpace {
        SearchSpace::new(vec![Dimension { name: "x".into(), lower: 0.0, upper: 1.0 }]).unwrap()
    }

    #[test]
    fn default_space_has_nine_dimensions() {
        let s = SearchSpace::default();
        assert_eq!(s.len(), 9);
        s.validate().unwrap();
    }

    #[test]
    fn split_sizes_and_ties() {
        let h: Vec<Trial> = (0..4).map(|i| trial(i, 0.0, 0.5)).collect();
        let (good, bad) = split_trials(&h, 0.25);
        assert_eq!(good.len(), 1);
        assert_eq!(good[0].trial_id, 0);
        assert_eq!(bad.len(), 3);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h: Vec<Trial> = (0..100).map(|i| trial(i, 0.0, rng.gen())).collect();
        let (good, _) = split_trials(&h, 0.25);
        assert_eq!(good.len(), 25);
        let mut all: Vec<f64> = h.iter().map(|t| t.objective).collect();
        all.sort_by(|a, b| b.total_cmp(a));
        let got: Vec<f64> = good.iter().map(|t| t.objective).collect();
        assert_eq!(got, all[..25].to_vec());
    }

    #[test]
    fn good_cluster_attracts_suggestions() {
        let space = unit_space();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h: Vec<Trial> = (0..40)
            .map(|i| {
                let x: f64 = rng.gen();
                trial(i, x, -(x - 0.3).abs())
            })
            .collect();
        let hits = (0..1000)
            .filter(|&s| {
                let x = suggest(&h, &space, &TpeConfig::default(), &mut ChaCha8Rng::seed_from_u64(s))[0];
                (0.1..=0.5).contains(&x)
            })
            .count();
        assert!(hits >= 900, "{hits}");
    }

    #[test]
    fn deterministic() {
        let space = SearchSpace::default();
        let h: Vec<Trial> = (0..12)
            .map(|i| Trial { trial_id: i, params: space.uniform(&mut ChaCha8Rng::seed_from_u64(i as u64)), objective: i as f64, seed: 0, wall_time_s: 0.0, error: None })
            .collect();
        let a = suggest(&h, &space, &TpeConfig::default(), &mut ChaCha8Rng::seed_from_u64(5));
        let b = suggest(&h, &space, &TpeConfig::default(), &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn single_trial_is_best() {
        let h = optimize(|x, _| Ok(x[0]), &unit_space(), 1, &TpeConfig::default(), &[], None).unwrap();
        assert_eq!(h.trials.len(), 1);
        assert_eq!(h.best().unwrap().trial_id, 0);
    }

    #[test]
    fn failures_score_zero_and_are_logged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        let space = unit_space();
        let mut store = TrialStore::create(&path, &space).unwrap();
        let h = optimize(
            |x, _| match (x[0] * 3.0) as u32 {
                0 => Err(Error::Stage { stage: "filter", source: Box::new(Error::Degenerate("x".into())) }),
                1 => panic!("boom"),
                _ => Ok(0.9),
            },
            &space,
            12,
            &TpeConfig { seed: 2, ..TpeConfig::default() },
            &[vec![0.1], vec![0.5]],
            Some(&mut store),
        )
        .unwrap();
        assert_eq!(h.trials[0].objective, 0.0);
        assert!(h.trials[0].error.is_some());
        assert_eq!(h.trials[1].error.as_deref(), Some("objective panicked"));
        let loaded = TrialStore::load(&path, &space).unwrap();
        assert_eq!(loaded, h.trials);
    }

    #[test]
    fn enqueued_outside_space_is_rejected() {
        assert!(optimize(|_, _| Ok(0.0), &unit_space(), 2, &TpeConfig::default(), &[vec![2.0]], None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn suggestions_stay_in_bounds(objs in proptest::collection::vec(-1.0f64..1.0, 0..30), seed in 0u64..1000) {
            let space = SearchSpace::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h: Vec<Trial> = objs
                .iter()
                .enumerate()
                .map(|(i, &o)| Trial { trial_id: i, params: space.uniform(&mut rng), objective: o, seed: 0, wall_time_s: 0.0, error: None })
                .collect();
            let x = suggest(&h, &space, &TpeConfig::default(), &mut rng);
            prop_assert!(space.contains(&x));
        }

        #[test]
        fn best_is_argmax(n in 1usize..25, seed in 0u64..100) {
            let h = optimize(|x, _| Ok((x[0] * 13.0).sin()), &unit_space(), n, &TpeConfig { seed, ..TpeConfig::default() }, &[], None).unwrap();
            let best = h.best().unwrap().objective;
            prop_assert!(h.trials.iter().all(|t| t.objective <= best));
        }
    }
}
