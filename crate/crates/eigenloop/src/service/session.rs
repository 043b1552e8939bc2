//! Annotation sessions: one progressive loop per session, stepped off the
//! request path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use eigenloop_core::transfer::{AnswerError, Budget, Evaluator, MetricsRow, ProgressiveLoop};
use eigenloop_core::{sq_euclidean, SampleId};
use serde::Serialize;
use uuid::Uuid;

use crate::config::ExperimentConfig;
use crate::error::{AppError, AppResult};
use crate::experiment::{loop_inputs, start_loop};
use crate::formats::save_snapshot;
use crate::projection::project_2d;

pub const NEIGHBORS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    AwaitingLabels,
    Stepping,
    Finished,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Neighbor {
    pub id: u64,
    pub label: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PendingItem {
    pub sample_id: u64,
    pub cluster: usize,
    pub x: f64,
    pub y: f64,
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectedPoint {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub cluster: Option<usize>,
    pub labeled: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Rejected {
    pub sample_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LabelOutcome {
    pub accepted: Vec<u64>,
    pub rejected: Vec<Rejected>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionStatus {
    pub status: Status,
    pub kappa: usize,
    pub kappa_max: usize,
    pub budget: Budget,
    pub labels_spent: usize,
    pub pending: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Inner {
    engine: ProgressiveLoop,
    status: Status,
    error: Option<String>,
    coords: Vec<(f64, f64)>,
}

impl Inner {
    fn new(engine: ProgressiveLoop) -> Self {
        let coords = project_2d(engine.current_features());
        let status = if engine.is_finished() { Status::Finished } else { Status::AwaitingLabels };
        Self { engine, status, error: None, coords }
    }
}

/// A live session. Reads see the loop as of the last completed step.
pub struct Session {
    inner: Mutex<Inner>,
    eval: Option<Evaluator>,
}

impl Session {
    pub fn create(cfg: &ExperimentConfig) -> AppResult<Session> {
        cfg.validate()?;
        let seed = cfg.seeds.first().copied().unwrap_or(0);
        let inputs = loop_inputs(cfg, seed)?;
        let engine = start_loop(&inputs)?;
        Ok(Session {
            inner: Mutex::new(Inner::new(engine)),
            eval: inputs.eval,
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn status(&self) -> SessionStatus {
        let g = self.lock();
        let e = &g.engine;
        SessionStatus {
            status: g.status,
            kappa: e.state().kappa,
            kappa_max: e.budget().kappa_max(),
            budget: e.budget().clone(),
            labels_spent: e.state().queried.len(),
            pending: e.unanswered().count(),
            error: g.error.clone(),
        }
    }

    pub fn metrics(&self) -> (Status, Vec<MetricsRow>) {
        let g = self.lock();
        (g.status, g.engine.state().history.clone())
    }

    pub fn pending(&self) -> Vec<PendingItem> {
        let g = self.lock();
        let e = &g.engine;
        let feats = e.current_features();
        let labeled = &e.state().labeled;
        e.unanswered()
            .filter_map(|q| {
                let pos = feats.position(q.id)?;
                let row = feats.row(pos);
                let mut neighbors: Vec<Neighbor> = labeled
                    .iter()
                    .filter_map(|(id, label)| {
                        let d = sq_euclidean(row, feats.get(id)?).ok()?;
                        Some(Neighbor { id: id.0, label, distance: d.sqrt() })
                    })
                    .collect();
                neighbors.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)));
                neighbors.truncate(NEIGHBORS);
                let (x, y) = g.coords[pos];
                Some(PendingItem { sample_id: q.id.0, cluster: q.cluster, x, y, neighbors })
            })
            .collect()
    }

    pub fn projection(&self) -> Vec<ProjectedPoint> {
        let g = self.lock();
        let e = &g.engine;
        let feats = e.current_features();
        let assignment = e.last_assignment();
        feats
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| ProjectedPoint {
                id: id.0,
                x: g.coords[i].0,
                y: g.coords[i].1,
                cluster: assignment.map(|a| a[i]),
                labeled: e.state().labeled.contains(*id),
            })
            .collect()
    }

    /// Records answers. Returns whether the loop is now ready to step.
    pub fn submit(&self, labels: &[(u64, usize)]) -> Result<(LabelOutcome, bool), Status> {
        let mut g = self.lock();
        if g.status != Status::AwaitingLabels {
            return Err(g.status);
        }
        let mut out = LabelOutcome::default();
        for &(id, class) in labels {
            match g.engine.answer(SampleId(id), class) {
                Ok(()) => out.accepted.push(id),
                Err(e) => out.rejected.push(Rejected {
                    sample_id: id,
                    reason: match e {
                        AnswerError::NotPending(_) => "not pending".into(),
                        AnswerError::ClassOutOfRange { .. } => "class out of range".into(),
                    },
                }),
            }
        }
        let ready = g.engine.is_ready();
        if ready {
            g.status = Status::Stepping;
        }
        Ok((out, ready))
    }

    /// Runs one step on a copy of the loop and publishes it when done.
    pub fn step(&self) {
        let mut engine = {
            let g = self.lock();
            if g.status != Status::Stepping {
                return;
            }
            g.engine.clone()
        };
        let result = engine.advance();
        let coords = project_2d(engine.current_features());
        let mut g = self.lock();
        match result {
            Ok(()) => {
                g.status = if engine.is_finished() { Status::Finished } else { Status::AwaitingLabels };
                g.engine = engine;
                g.coords = coords;
            }
            Err(e) => {
                log::error!("step failed: {e}");
                g.status = Status::Failed;
                g.error = Some(e.to_string());
            }
        }
    }

    pub fn checkpoint(&self, path: &Path) -> AppResult<()> {
        let snap = self.lock().engine.snapshot();
        save_snapshot(path, &snap)
    }

    pub fn evaluator(&self) -> Option<&Evaluator> {
        self.eval.as_ref()
    }
}

/// All live sessions, keyed by id.
#[derive(Default)]
pub struct SessionManager {
    sessions: RwLock<BTreeMap<Uuid, Arc<Session>>>,
    checkpoint_dir: Option<PathBuf>,
}

impl SessionManager {
    pub fn new(checkpoint_dir: Option<PathBuf>) -> Self {
        Self {
            sessions: RwLock::default(),
            checkpoint_dir,
        }
    }

    pub fn insert(&self, session: Session) -> Uuid {
        let id = Uuid::new_v4();
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, Arc::new(session));
        id
    }

    pub fn get(&self, id: &Uuid) -> Option<Arc<Session>> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `<dir>/<id>.json` for every session.
    pub fn checkpoint_all(&self) -> AppResult<Vec<PathBuf>> {
        let Some(dir) = &self.checkpoint_dir else {
            return Ok(Vec::new());
        };
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        let sessions: Vec<(Uuid, Arc<Session>)> = self
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .iter()
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        let mut written = Vec::new();
        for (id, s) in sessions {
            let path = dir.join(format!("{id}.json"));
            s.checkpoint(&path)?;
            written.push(path);
        }
        Ok(written)
    }
}
