//! On-disk job store. Records live in `<root>/jobs/<id>.json`, results in
//! `<root>/results/<id>/`. All mutations go through one lock so writes to a
//! record never interleave.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Train,
    LambdaSweep,
    AlphaSweep,
    ConsensusSweep,
    StakeholderSearch,
}

impl JobKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JobKind::Train => "train",
            JobKind::LambdaSweep => "lambda_sweep",
            JobKind::AlphaSweep => "alpha_sweep",
            JobKind::ConsensusSweep => "consensus_sweep",
            JobKind::StakeholderSearch => "stakeholder_search",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running)
                | (JobState::Running, JobState::Done)
                | (JobState::Running, JobState::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: f64,
    pub result_ref: Option<String>,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
    /// Selected configuration hash, for stakeholder searches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<String>,
    /// Hashes of every frontier point, once the job is done.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub config_hashes: Vec<String>,
}

/// Stored alongside the record so queued jobs survive a restart.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredJob {
    record: JobRecord,
    payload: serde_json::Value,
}

#[derive(Default)]
struct Inner {
    jobs: HashMap<String, StoredJob>,
    by_key: HashMap<String, String>,
}

pub struct JobStore {
    root: PathBuf,
    inner: Mutex<Inner>,
}

/// What [`JobStore::insert`] did.
pub enum Inserted {
    New(JobRecord),
    /// Same key, same request.
    Existing(JobRecord),
    /// Same key, different request.
    Conflict(JobRecord),
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

impl JobStore {
    /// Opens (or creates) a store. Jobs that were running when the previous
    /// process stopped are marked failed; queued jobs are returned so the
    /// caller can schedule them again.
    pub fn open(root: impl Into<PathBuf>) -> io::Result<(Self, Vec<(JobRecord, serde_json::Value)>)> {
        let root = root.into();
        fs::create_dir_all(root.join("jobs"))?;
        fs::create_dir_all(root.join("results"))?;
        let mut inner = Inner::default();
        let mut entries: Vec<PathBuf> = fs::read_dir(root.join("jobs"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let parsed = fs::read(&path)
                .ok()
                .and_then(|b| serde_json::from_slice::<StoredJob>(&b).ok());
            match parsed {
                Some(job) => {
                    if let Some(k) = &job.record.idempotency_key {
                        inner.by_key.insert(k.clone(), job.record.id.clone());
                    }
                    inner.jobs.insert(job.record.id.clone(), job);
                }
                None => log::warn!("skipping unreadable job record {}", path.display()),
            }
        }
        let store = JobStore {
            root,
            inner: Mutex::new(inner),
        };
        let mut requeue = Vec::new();
        {
            let mut inner = store.inner.lock().expect("store lock");
            let ids: Vec<String> = inner.jobs.keys().cloned().collect();
            for id in ids {
                let job = inner.jobs.get_mut(&id).expect("present");
                match job.record.state {
                    JobState::Running => {
                        job.record.state = JobState::Failed;
                        job.record.error = Some("service stopped while the job was running".into());
                        store.persist(job)?;
                    }
                    JobState::Queued => requeue.push((job.record.clone(), job.payload.clone())),
                    _ => {}
                }
            }
        }
        requeue.sort_by(|a, b| a.0.id.cmp(&b.0.id));
        Ok((store, requeue))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn result_dir(&self, id: &str) -> PathBuf {
        self.root.join("results").join(id)
    }

    fn persist(&self, job: &StoredJob) -> io::Result<()> {
        let path = self.root.join("jobs").join(format!("{}.json", job.record.id));
        let bytes = serde_json::to_vec_pretty(job).map_err(io::Error::other)?;
        write_atomic(&path, &bytes)
    }

    /// Registers a queued job, or returns the job already holding `key`.
    pub fn insert(
        &self,
        kind: JobKind,
        payload: serde_json::Value,
        key: Option<String>,
    ) -> io::Result<Inserted> {
        let mut inner = self.inner.lock().expect("store lock");
        if let Some(k) = &key {
            if let Some(id) = inner.by_key.get(k) {
                let job = &inner.jobs[id];
                let same = job.record.kind == kind && job.payload == payload;
                let rec = job.record.clone();
                return Ok(if same { Inserted::Existing(rec) } else { Inserted::Conflict(rec) });
            }
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let job = StoredJob {
            record: JobRecord {
                id: id.clone(),
                kind,
                state: JobState::Queued,
                progress: 0.0,
                result_ref: None,
                error: None,
                idempotency_key: key.clone(),
                selected: None,
                config_hashes: Vec::new(),
            },
            payload,
        };
        self.persist(&job)?;
        let record = job.record.clone();
        if let Some(k) = key {
            inner.by_key.insert(k, id.clone());
        }
        inner.jobs.insert(id, job);
        Ok(Inserted::New(record))
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        let inner = self.inner.lock().expect("store lock");
        inner.jobs.get(id).map(|j| j.record.clone())
    }

    pub fn list(&self) -> Vec<JobRecord> {
        let inner = self.inner.lock().expect("store lock");
        let mut v: Vec<JobRecord> = inner.jobs.values().map(|j| j.record.clone()).collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    /// Applies `f` to a record and persists it. State changes that skip or
    /// reverse the queued → running → done/failed order are refused.
    pub fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord)) -> io::Result<JobRecord> {
        let mut inner = self.inner.lock().expect("store lock");
        let job = inner
            .jobs
            .get_mut(id)
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("job {id}")))?;
        let mut next = job.record.clone();
        f(&mut next);
        if next.state != job.record.state && !job.record.state.can_become(next.state) {
            return Err(io::Error::other(format!(
                "illegal job transition {:?} -> {:?}",
                job.record.state, next.state
            )));
        }
        if next.state == JobState::Done && next.result_ref.is_none() {
            return Err(io::Error::other("a finished job needs a result reference"));
        }
        let prev = std::mem::replace(&mut job.record, next);
        if let Err(e) = self.persist(job) {
            job.record = prev;
            return Err(e);
        }
        Ok(job.record.clone())
    }

    pub fn set_progress(&self, id: &str, progress: f64) {
        if let Err(e) = self.update(id, |r| r.progress = progress.clamp(0.0, 1.0)) {
            log::warn!("progress update for {id} failed: {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions_are_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = JobStore::open(dir.path()).unwrap();
        let Inserted::New(r) = store.insert(JobKind::Train, serde_json::json!({}), None).unwrap() else {
            panic!()
        };
        assert!(store.update(&r.id, |r| r.state = JobState::Done).is_err());
        store.update(&r.id, |r| r.state = JobState::Running).unwrap();
        assert!(store.update(&r.id, |r| r.state = JobState::Done).is_err(), "needs result_ref");
        store
            .update(&r.id, |r| {
                r.state = JobState::Done;
                r.result_ref = Some("x".into());
            })
            .unwrap();
        assert!(store.update(&r.id, |r| r.state = JobState::Running).is_err());
    }

    #[test]
    fn idempotency_keys_survive_restart() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let (store, _) = JobStore::open(dir.path()).unwrap();
            match store.insert(JobKind::Train, serde_json::json!({}), Some("k".into())).unwrap() {
                Inserted::New(r) => r.id,
                _ => panic!(),
            }
        };
        let (store, requeue) = JobStore::open(dir.path()).unwrap();
        assert_eq!(requeue.len(), 1);
        match store.insert(JobKind::Train, serde_json::json!({}), Some("k".into())).unwrap() {
            Inserted::Existing(r) => assert_eq!(r.id, id),
            _ => panic!("duplicate job"),
        }
        match store.insert(JobKind::LambdaSweep, serde_json::json!({}), Some("k".into())).unwrap() {
            Inserted::Conflict(r) => assert_eq!(r.id, id),
            _ => panic!("expected conflict"),
        }
    }

    #[test]
    fn running_jobs_fail_on_restart() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let (store, _) = JobStore::open(dir.path()).unwrap();
            let Inserted::New(r) = store.insert(JobKind::Train, serde_json::json!({}), None).unwrap() else {
                panic!()
            };
            store.update(&r.id, |r| r.state = JobState::Running).unwrap();
            r.id
        };
        let (store, requeue) = JobStore::open(dir.path()).unwrap();
        assert!(requeue.is_empty());
        assert_eq!(store.get(&id).unwrap().state, JobState::Failed);
    }
}
