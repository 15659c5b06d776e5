//! Parallel execution of simulation jobs into a results store.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;

use super::store::{RecordKey, ResultRecord, ResultsStore, SCHEMA_VERSION};
use super::ExperimentError;
use crate::config::ScenarioConfig;
use crate::metrics::evaluate_reports;
use crate::sim::{resolve_site, run_with, DayReport};
use crate::site::SiteGraph;
use crate::weather::{resolve_weather, WeatherSeries};

/// One simulation: a scenario (its `rng_seed` is the replicate seed) and
/// optional bookkeeping carried into the record.
#[derive(Debug, Clone)]
pub struct Job {
    pub config: ScenarioConfig,
    pub label: Option<String>,
    pub candidate: Option<Vec<i64>>,
}

impl Job {
    pub fn new(config: ScenarioConfig) -> Self {
        Self { config, label: None, candidate: None }
    }

    pub fn key(&self, experiment: &str) -> RecordKey {
        RecordKey { experiment: experiment.to_string(), scenario_hash: self.config.scenario_hash(), seed: self.config.rng_seed }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Directory that relative weather and site paths resolve against.
    pub base_dir: Option<PathBuf>,
    /// Also write each run's day reports under `day_reports/`.
    pub keep_day_reports: bool,
}

type Inputs = (Arc<WeatherSeries>, Arc<SiteGraph>);

fn canonical(config: &ScenarioConfig) -> String {
    let mut c = config.clone();
    c.rng_seed = 0;
    serde_json::to_string(&c).expect("scenario serializes")
}

fn file_stem(experiment: &str) -> String {
    experiment.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Runs every job whose key is not yet stored and returns one record per
/// job, in job order. Stored records are appended in job order too, so an
/// interrupted campaign resumes into the same file an uninterrupted one
/// would have written. The worker count only changes wall time.
pub fn run_jobs(
    store: &mut ResultsStore,
    experiment: &str,
    jobs: &[Job],
    opts: &RunOptions,
) -> Result<Vec<ResultRecord>, ExperimentError> {
    let mut seen_hash: HashMap<String, String> = HashMap::new();
    let keys: Vec<RecordKey> = jobs.iter().map(|j| j.key(experiment)).collect();
    for (job, key) in jobs.iter().zip(&keys) {
        let canon = canonical(&job.config);
        match seen_hash.get(&key.scenario_hash) {
            Some(prev) if *prev != canon => return Err(ExperimentError::HashCollision(key.scenario_hash.clone())),
            Some(_) => {}
            None => {
                seen_hash.insert(key.scenario_hash.clone(), canon);
            }
        }
    }

    let mut pending: Vec<usize> = Vec::new();
    let mut queued: HashMap<&RecordKey, ()> = HashMap::new();
    for (i, key) in keys.iter().enumerate() {
        if !store.contains(key) && queued.insert(key, ()).is_none() {
            pending.push(i);
        }
    }

    let mut inputs: HashMap<(String, u32, Option<String>), Inputs> = HashMap::new();
    for &i in &pending {
        let c = &jobs[i].config;
        let k = (c.weather_ref.clone(), c.horizon_days, c.site_ref.clone());
        if !inputs.contains_key(&k) {
            c.validate_for_engine()?;
            let weather = resolve_weather(&c.weather_ref, opts.base_dir.as_deref(), c.horizon_days as usize)
                .map_err(crate::sim::SimError::from)?;
            let site = resolve_site(c, opts.base_dir.as_deref()).map_err(crate::sim::SimError::from)?;
            inputs.insert(k, (Arc::new(weather), Arc::new(site)));
        }
    }

    let pool = match opts.workers {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| ExperimentError::Invalid(e.to_string()))?,
        ),
        None => None,
    };
    let chunk = opts.workers.unwrap_or_else(rayon::current_num_threads).max(1) * 4;
    for batch in pending.chunks(chunk) {
        let work = || -> Vec<Result<(ResultRecord, Vec<DayReport>), ExperimentError>> {
            batch
                .par_iter()
                .map(|&i| {
                    let job = &jobs[i];
                    let c = &job.config;
                    let (weather, site) = inputs[&(c.weather_ref.clone(), c.horizon_days, c.site_ref.clone())].clone();
                    let reports = run_with(c, weather, site)?;
                    let metrics = evaluate_reports(&reports, &c.energy, &c.metrics)?;
                    let key = &keys[i];
                    let record = ResultRecord {
                        schema_version: SCHEMA_VERSION,
                        experiment: experiment.to_string(),
                        scenario_hash: key.scenario_hash.clone(),
                        seed: key.seed,
                        label: job.label.clone(),
                        candidate: job.candidate.clone(),
                        metrics,
                        day_reports_ref: opts
                            .keep_day_reports
                            .then(|| format!("day_reports/{}-{}-{}.jsonl", file_stem(experiment), key.scenario_hash, key.seed)),
                    };
                    Ok((record, reports))
                })
                .collect()
        };
        let results = match &pool {
            Some(p) => p.install(work),
            None => work(),
        };
        for r in results {
            let (record, reports) = r?;
            if let Some(rel) = &record.day_reports_ref {
                let body: String = reports
                    .iter()
                    .map(|d| serde_json::to_string(d).expect("day report serializes") + "\n")
                    .collect();
                store.write_artifact(rel, &body)?;
            }
            store.append(record)?;
        }
    }

    Ok(keys.iter().map(|k| store.get(k).expect("every job is stored").clone()).collect())
}
