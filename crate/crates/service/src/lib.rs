//! HTTP job service. Jobs are accepted under `/v1`, run on a bounded worker
//! pool and persisted so that a restart neither loses queued work nor
//! pretends interrupted work finished.

mod api;
pub mod registry;
pub mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::Router;
use fairforge::harness::{self, ConsensusPlan, Runner, SearchPlan, SweepPlan, SweepOutcome, TrainPlan};
use tokio::sync::Semaphore;

pub use api::{ApiError, SubmitRequest};
pub use registry::{DatasetSummary, Registry};
pub use store::{JobKind, JobRecord, JobState, JobStore};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Holds `jobs/` and `results/`.
    pub data_dir: PathBuf,
    pub registry: Option<PathBuf>,
    /// Jobs allowed to run at once.
    pub max_concurrent_jobs: usize,
    /// Worker threads per job; `None` uses the harness default.
    pub threads_per_job: Option<usize>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            registry: None,
            max_concurrent_jobs: 1,
            threads_per_job: None,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub(crate) store: Arc<JobStore>,
    pub(crate) registry: Arc<Registry>,
    permits: Arc<Semaphore>,
    threads_per_job: Option<usize>,
}

impl AppState {
    /// Opens the store and registry and reschedules any jobs left queued by
    /// a previous process. Must be called inside a tokio runtime.
    pub fn open(config: &ServiceConfig) -> std::io::Result<Self> {
        let (store, requeue) = JobStore::open(&config.data_dir)?;
        let registry = match &config.registry {
            Some(p) => Registry::load(p),
            None => Registry::empty(),
        };
        let state = AppState {
            store: Arc::new(store),
            registry: Arc::new(registry),
            permits: Arc::new(Semaphore::new(config.max_concurrent_jobs.max(1))),
            threads_per_job: config.threads_per_job,
        };
        for (record, payload) in requeue {
            log::info!("requeueing job {}", record.id);
            match api::resolve_plan(&state.registry, record.kind, payload) {
                Ok(plan) => state.spawn_job(record.id, plan),
                Err(e) => state.fail(&record.id, e.message),
            }
        }
        Ok(state)
    }

    pub fn store(&self) -> &JobStore {
        &self.store
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    fn fail(&self, id: &str, message: String) {
        let mut res = self.store.update(id, |r| r.state = JobState::Running);
        if res.is_ok() {
            res = self.store.update(id, |r| {
                r.state = JobState::Failed;
                r.error = Some(message);
            });
        }
        if let Err(e) = res {
            log::error!("could not mark job {id} failed: {e}");
        }
    }

    pub(crate) fn spawn_job(&self, id: String, plan: Plan) {
        let state = self.clone();
        tokio::spawn(async move {
            let Ok(_permit) = state.permits.clone().acquire_owned().await else {
                return;
            };
            if let Err(e) = state.store.update(&id, |r| r.state = JobState::Running) {
                log::error!("job {id}: {e}");
                return;
            }
            log::info!("job {id} started");
            let worker = state.clone();
            let job_id = id.clone();
            let result = tokio::task::spawn_blocking(move || worker.run_blocking(&job_id, plan)).await;
            let result = match result {
                Ok(r) => r,
                Err(e) => Err(format!("job panicked: {e}")),
            };
            let update = match result {
                Ok((outcome, result_ref)) => state.store.update(&id, |r| {
                    r.state = JobState::Done;
                    r.progress = 1.0;
                    r.result_ref = Some(result_ref);
                    r.selected = outcome.selection.as_ref().map(|p| p.config_hash.clone());
                    r.config_hashes = outcome.points.iter().map(|p| p.config_hash.clone()).collect();
                }),
                Err(message) => {
                    log::warn!("job {id} failed: {message}");
                    state.store.update(&id, |r| {
                        r.state = JobState::Failed;
                        r.error = Some(message);
                    })
                }
            };
            match update {
                Ok(r) => log::info!("job {id} finished: {:?}", r.state),
                Err(e) => log::error!("job {id}: {e}"),
            }
        });
    }

    fn run_blocking(&self, id: &str, plan: Plan) -> Result<(SweepOutcome, String), String> {
        let store = self.store.clone();
        let progress_id = id.to_string();
        let mut runner = Runner::default().progress(move |done, total| {
            store.set_progress(&progress_id, done as f64 / total.max(1) as f64);
        });
        runner.jobs = self.threads_per_job;
        let loaded = plan.dataset().prepare().map_err(|e| e.to_string())?;
        let outcome = match &plan {
            Plan::Train(p) => harness::train_once(p, &loaded, &runner),
            Plan::LambdaSweep(p) => harness::run_lambda_sweep(p, &loaded, &runner),
            Plan::AlphaSweep(p) => harness::run_alpha_sweep(p, &loaded, &runner),
            Plan::Consensus(p) => harness::consensus_sweep(p, &loaded, &runner),
            Plan::Search(p) => harness::run_stakeholder_grid(p, &loaded, &runner),
        }
        .map_err(|e| e.to_string())?;
        let rel = format!("results/{id}");
        let dir = self.store.result_dir(id);
        harness::write_outcome(&dir, &outcome, plan.kind().as_str(), &plan.to_json(), None)
            .map_err(|e| e.to_string())?;
        Ok((outcome, rel))
    }

    pub(crate) fn frontier_path(&self, record: &JobRecord) -> Option<PathBuf> {
        record
            .result_ref
            .as_ref()
            .map(|r| self.store.root().join(r).join(harness::FRONTIER_FILE))
    }
}

/// A validated plan ready to run.
#[derive(Debug, Clone)]
pub(crate) enum Plan {
    Train(TrainPlan),
    LambdaSweep(SweepPlan),
    AlphaSweep(SweepPlan),
    Consensus(ConsensusPlan),
    Search(SearchPlan),
}

impl Plan {
    fn kind(&self) -> JobKind {
        match self {
            Plan::Train(_) => JobKind::Train,
            Plan::LambdaSweep(_) => JobKind::LambdaSweep,
            Plan::AlphaSweep(_) => JobKind::AlphaSweep,
            Plan::Consensus(_) => JobKind::ConsensusSweep,
            Plan::Search(_) => JobKind::StakeholderSearch,
        }
    }

    fn dataset(&self) -> &harness::DatasetRef {
        match self {
            Plan::Train(p) => &p.dataset,
            Plan::LambdaSweep(p) | Plan::AlphaSweep(p) => &p.dataset,
            Plan::Consensus(p) => &p.dataset,
            Plan::Search(p) => &p.dataset,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let v = match self {
            Plan::Train(p) => serde_json::to_value(p),
            Plan::LambdaSweep(p) | Plan::AlphaSweep(p) => serde_json::to_value(p),
            Plan::Consensus(p) => serde_json::to_value(p),
            Plan::Search(p) => serde_json::to_value(p),
        };
        v.unwrap_or(serde_json::Value::Null)
    }
}

pub fn router(state: AppState) -> Router {
    api::routes().with_state(state)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::open(&config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "listening on {} (data in {})",
        listener.local_addr()?,
        display(&config.data_dir)
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
