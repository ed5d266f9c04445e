//! A live acquisition session: the loop runs on its own thread and blocks on
//! an answer channel whenever it needs the user.

use std::sync::mpsc;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::Duration;

use serde::Serialize;
use tokio::sync::watch;

use guidacq::acquisition::{Acquisition, AcquisitionConfig, Layer, Oracle, OracleError, QueryContext};
use guidacq::learning::Guide;
use guidacq::{Assignment, Constraint, ConstraintSet, Relation, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    AwaitingAnswer,
    Generating,
    Converged,
    Collapsed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    /// Candidates left in the current step's bias.
    pub bias_size: usize,
    pub learned_size: usize,
    pub top_level_queries: u64,
    pub findscope_queries: u64,
    pub findc_queries: u64,
    pub total_queries: u64,
    /// Candidates refuted so far.
    pub removed: u64,
}

#[derive(Debug, Clone)]
pub struct Pending {
    pub query_id: u64,
    pub assignment: Assignment,
    pub layer: Layer,
}

#[derive(Debug, Clone)]
pub struct View {
    pub phase: Phase,
    pub pending: Option<Pending>,
    pub stats: Stats,
    /// Learned constraints with the last probability the classifier gave them.
    pub learned: Vec<(Constraint, Option<f64>)>,
    pub error: Option<String>,
}

impl View {
    fn refresh(&mut self, learned: &ConstraintSet, bias: &ConstraintSet, stats: &guidacq::acquisition::AcquisitionStats, guide: &Guide) {
        self.stats = Stats {
            bias_size: bias.len(),
            learned_size: learned.len(),
            top_level_queries: stats.top_level_queries,
            findscope_queries: stats.findscope_queries,
            findc_queries: stats.findc_queries,
            total_queries: stats.total_queries(),
            removed: stats.negative_labels,
        };
        if self.learned.len() != learned.len() {
            self.learned = learned.iter().map(|c| (*c, guide.probability(c))).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerError {
    Stale { pending: u64 },
    NotAwaiting(Phase),
    Closed,
}

pub struct Session {
    pub id: String,
    pub vocabulary: Vocabulary,
    pub language: Vec<Relation>,
    pub config: AcquisitionConfig,
    pub known: ConstraintSet,
    view: Mutex<View>,
    answers: Mutex<Option<mpsc::Sender<bool>>>,
    version: watch::Sender<u64>,
}

struct ChannelOracle {
    session: Arc<Session>,
    answers: mpsc::Receiver<bool>,
}

impl Oracle for ChannelOracle {
    fn ask(&mut self, query: &Assignment, ctx: &QueryContext<'_>) -> Result<bool, OracleError> {
        {
            let mut view = self.session.view();
            view.refresh(ctx.learned, ctx.bias, ctx.stats, ctx.guide);
            view.phase = Phase::AwaitingAnswer;
            view.pending = Some(Pending { query_id: ctx.query_id, assignment: query.clone(), layer: ctx.layer });
        }
        self.session.bump();
        self.answers.recv().map_err(|_| OracleError("the session was closed".into()))
    }
}

impl Session {
    pub fn start(
        id: String,
        vocabulary: Vocabulary,
        language: Vec<Relation>,
        config: AcquisitionConfig,
        known: ConstraintSet,
    ) -> Arc<Session> {
        let (tx, rx) = mpsc::channel();
        let session = Arc::new(Session {
            id,
            vocabulary,
            language,
            config,
            known,
            view: Mutex::new(View {
                phase: Phase::Generating,
                pending: None,
                stats: Stats::default(),
                learned: Vec::new(),
                error: None,
            }),
            answers: Mutex::new(Some(tx)),
            version: watch::channel(0).0,
        });
        let worker = Arc::clone(&session);
        thread::spawn(move || {
            let mut acq = Acquisition::new(worker.vocabulary.clone(), worker.language.clone(), worker.config)
                .with_known(worker.known.clone());
            let mut oracle = ChannelOracle { session: Arc::clone(&worker), answers: rx };
            let result = acq.grow_acquire(&mut oracle);
            {
                let mut view = worker.view();
                view.learned.clear();
                view.refresh(acq.learned(), acq.bias(), acq.stats(), acq.guide());
                view.pending = None;
                match result {
                    Ok(()) => view.phase = Phase::Converged,
                    Err(e) => {
                        view.phase = Phase::Collapsed;
                        view.error = Some(e.to_string());
                    }
                }
            }
            worker.bump();
        });
        session
    }

    pub fn view(&self) -> MutexGuard<'_, View> {
        self.view.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn bump(&self) {
        self.version.send_modify(|v| *v += 1);
    }

    /// Hands an answer to the waiting loop. Checked and sent under the view
    /// lock, so concurrent answers to one query cannot both go through.
    pub fn answer(&self, query_id: u64, answer: bool) -> Result<(), AnswerError> {
        let mut view = self.view();
        let pending = match (&view.phase, &view.pending) {
            (Phase::AwaitingAnswer, Some(p)) => p.query_id,
            (phase, _) => return Err(AnswerError::NotAwaiting(*phase)),
        };
        if pending != query_id {
            return Err(AnswerError::Stale { pending });
        }
        let sender = self.answers.lock().unwrap_or_else(|p| p.into_inner());
        let Some(tx) = sender.as_ref() else { return Err(AnswerError::Closed) };
        tx.send(answer).map_err(|_| AnswerError::Closed)?;
        view.phase = Phase::Generating;
        view.pending = None;
        drop(view);
        self.bump();
        Ok(())
    }

    /// Waits until the loop is no longer generating, or `timeout` passes.
    pub async fn settled(&self, timeout: Duration) -> Phase {
        let mut rx = self.version.subscribe();
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let phase = self.view().phase;
            if phase != Phase::Generating {
                return phase;
            }
            match tokio::time::timeout_at(deadline, rx.changed()).await {
                Ok(Ok(())) => continue,
                _ => return self.view().phase,
            }
        }
    }

    /// Unblocks the loop thread so it can finish.
    pub fn close(&self) {
        self.answers.lock().unwrap_or_else(|p| p.into_inner()).take();
    }
}
