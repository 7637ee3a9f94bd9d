//! Live decision-maker sessions: state machine and on-disk persistence.

use bope_core::bope_loop::{Engine, EngineState, Question, RunConfig};
use bope_core::dm::DmConfig;
use bope_core::problems::OutputProblem;
use bope_core::record::IterationRecord;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Experimenting,
    AwaitingPreference,
    Finished,
}

/// What can go wrong when driving a session.
#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] bope_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// The pair currently put to the decision maker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairView {
    /// Increases with every question asked in the session.
    pub question_id: usize,
    pub iteration: usize,
    pub initial: bool,
    pub fallback: bool,
    pub indices: [usize; 2],
    pub outputs: [Vec<f64>; 2],
    pub axes: Vec<Axis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    First,
    Second,
    Tie,
}

impl Choice {
    pub fn label(self) -> i8 {
        match self {
            Choice::First => 1,
            Choice::Second => -1,
            Choice::Tie => 0,
        }
    }
}

impl<'de> Deserialize<'de> for Choice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) if n.as_u64() == Some(1) => Ok(Choice::First),
            serde_json::Value::Number(n) if n.as_u64() == Some(2) => Ok(Choice::Second),
            serde_json::Value::String(s) if s == "tie" => Ok(Choice::Tie),
            other => Err(serde::de::Error::custom(format!("choice must be 1, 2 or \"tie\", got {other}"))),
        }
    }
}

impl Serialize for Choice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Choice::First => s.serialize_u8(1),
            Choice::Second => s.serialize_u8(2),
            Choice::Tie => s.serialize_str("tie"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceBody {
    pub choice: Choice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedOutput {
    pub index: usize,
    pub output: Vec<f64>,
    /// Utility-model mean.
    pub score: f64,
}

/// Progress without regret: a live decision maker's utility is unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressView {
    pub phase: Phase,
    pub iteration: usize,
    pub budget: usize,
    pub observations: usize,
    pub comparisons: usize,
    /// Top observed outputs by the current utility model, best first.
    pub best: Vec<RankedOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub phase: Phase,
    pub problem: String,
    pub iteration: usize,
    pub budget: usize,
    pub observations: usize,
    pub comparisons: usize,
    pub pending_initial: usize,
    pub question: Option<PairView>,
    pub created_ms: u64,
    pub updated_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsweredQuestion {
    pub question_id: usize,
    pub iteration: usize,
    pub indices: [usize; 2],
    pub label: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: String,
    pub phase: Phase,
    pub initial_x: Vec<Vec<f64>>,
    pub initial_y: Vec<Vec<f64>>,
    pub iterations: Vec<IterationRecord>,
    pub answers: Vec<AnsweredQuestion>,
    pub ranking: Vec<RankedOutput>,
}

/// Everything persisted for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub config: RunConfig,
    pub phase: Phase,
    pub question: Option<PairView>,
    pub questions_asked: usize,
    pub answers: Vec<AnsweredQuestion>,
    pub engine: EngineState,
    /// Model ranking after the last answer.
    pub ranking: Vec<RankedOutput>,
    pub created_ms: u64,
    pub updated_ms: u64,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn problem_of(cfg: &RunConfig) -> Result<OutputProblem, SessionError> {
    OutputProblem::builtin(&cfg.problem).map_err(|e| SessionError::Invalid(format!("problem: {e}")))
}

impl SessionState {
    /// New session; the decision maker is forced to be a live human.
    pub fn create(id: String, mut config: RunConfig) -> Result<Self, SessionError> {
        config.dm = DmConfig::LiveHuman;
        config.validate().map_err(|e| SessionError::Invalid(e.to_string()))?;
        let problem = problem_of(&config)?;
        let engine = Engine::new(config.clone(), problem, None).map_err(|e| match e {
            bope_core::Error::Config(m) => SessionError::Invalid(m),
            other => SessionError::Core(other),
        })?;
        let now = now_ms();
        Ok(SessionState {
            id,
            config,
            phase: Phase::Idle,
            question: None,
            questions_asked: 0,
            answers: Vec::new(),
            engine: engine.state().clone(),
            ranking: Vec::new(),
            created_ms: now,
            updated_ms: now,
        })
    }

    fn engine(&self) -> Result<Engine, SessionError> {
        let problem = problem_of(&self.config)?;
        Ok(Engine::restore(self.config.clone(), problem, None, self.engine.clone())?)
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            phase: self.phase,
            problem: self.config.problem.clone(),
            iteration: self.engine.record.iterations.len().saturating_sub(1),
            budget: self.config.budget,
            observations: self.engine.data.len(),
            comparisons: self.engine.comparisons.len(),
            pending_initial: self.engine.pending_initial.len(),
            question: self.question.clone(),
            created_ms: self.created_ms,
            updated_ms: self.updated_ms,
        }
    }

    pub fn trace(&self) -> Trace {
        Trace {
            id: self.id.clone(),
            phase: self.phase,
            initial_x: self.engine.record.initial_x.clone(),
            initial_y: self.engine.record.initial_y.clone(),
            iterations: self.engine.record.iterations.clone(),
            answers: self.answers.clone(),
            ranking: self.ranking.clone(),
        }
    }

    pub fn progress(&self) -> ProgressView {
        ProgressView {
            phase: self.phase,
            iteration: self.engine.record.iterations.len().saturating_sub(1),
            budget: self.config.budget,
            observations: self.engine.data.len(),
            comparisons: self.engine.comparisons.len(),
            best: self.ranking.iter().take(5).cloned().collect(),
        }
    }

    /// Idle -> Experimenting. The caller persists, then runs [`Self::step`].
    pub fn begin_step(&mut self) -> Result<(), SessionError> {
        match self.phase {
            Phase::Idle => {
                self.phase = Phase::Experimenting;
                self.updated_ms = now_ms();
                Ok(())
            }
            p => Err(SessionError::Conflict(format!("cannot step while {p:?}"))),
        }
    }

    /// Experimenting -> AwaitingPreference: runs the experimentation stage
    /// (unless an initial pair is pending) and picks the next question. On
    /// failure the session returns to Idle.
    pub fn step(&mut self) -> Result<PairView, SessionError> {
        if self.phase != Phase::Experimenting {
            return Err(SessionError::Conflict(format!("cannot step while {:?}", self.phase)));
        }
        let result = self.engine().and_then(|mut engine| {
            let q = engine.next_question()?;
            Ok((q, engine))
        });
        let (q, engine) = match result {
            Ok(v) => v,
            Err(e) => {
                self.phase = Phase::Idle;
                return Err(e);
            }
        };
        self.engine = engine.state().clone();
        let view = self.view(&q, engine.problem());
        self.question = Some(view.clone());
        self.questions_asked += 1;
        self.phase = Phase::AwaitingPreference;
        self.updated_ms = now_ms();
        Ok(view)
    }

    fn view(&self, q: &Question, problem: &OutputProblem) -> PairView {
        let ys = self.engine.data.ys();
        PairView {
            question_id: self.questions_asked + 1,
            iteration: self.engine.record.iterations.len().saturating_sub(1),
            initial: q.initial,
            fallback: q.fallback,
            indices: [q.i, q.j],
            outputs: [ys[q.i].0.clone(), ys[q.j].0.clone()],
            axes: problem
                .output_names()
                .iter()
                .zip(problem.output_ranges())
                .map(|(n, r)| Axis {
                    name: n.clone(),
                    lower: r.lower,
                    upper: r.upper,
                })
                .collect(),
        }
    }

    /// AwaitingPreference -> Idle (or Finished when the budget is spent).
    pub fn answer(&mut self, choice: Choice) -> Result<ProgressView, SessionError> {
        if self.phase != Phase::AwaitingPreference {
            return Err(SessionError::Conflict(format!("no question is pending (phase {:?})", self.phase)));
        }
        let view = self.question.clone().expect("a pending question exists while awaiting");
        let mut engine = self.engine()?;
        let q = Question {
            i: view.indices[0],
            j: view.indices[1],
            initial: view.initial,
            fallback: view.fallback,
        };
        engine.answer_question(&q, choice.label())?;
        let ranking = engine
            .ranked_outputs()?
            .into_iter()
            .map(|(index, score)| RankedOutput {
                index,
                output: engine.state().data.ys()[index].0.clone(),
                score,
            })
            .collect();
        self.engine = engine.state().clone();
        self.ranking = ranking;
        self.answers.push(AnsweredQuestion {
            question_id: view.question_id,
            iteration: view.iteration,
            indices: view.indices,
            label: choice.label(),
        });
        self.question = None;
        self.phase = if engine.is_finished() { Phase::Finished } else { Phase::Idle };
        self.updated_ms = now_ms();
        Ok(self.progress())
    }

    /// A session interrupted mid-step resumes as Idle; the step is retried.
    pub fn recover(&mut self) {
        if self.phase == Phase::Experimenting {
            self.phase = Phase::Idle;
        }
    }
}

/// One JSON file per session.
#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Store { dir: dir.to_path_buf() })
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Atomic write: temporary file then rename.
    pub fn save(&self, s: &SessionState) -> std::io::Result<()> {
        let tmp = self.dir.join(format!(".{}.json.tmp", s.id));
        std::fs::write(&tmp, serde_json::to_vec(s)?)?;
        std::fs::rename(tmp, self.path(&s.id))
    }

    pub fn load(&self, id: &str) -> std::io::Result<SessionState> {
        let bytes = std::fs::read(self.path(id))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn load_all(&self) -> std::io::Result<Vec<SessionState>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.ends_with(".json") && !name.starts_with('.') {
                let bytes = std::fs::read(&path)?;
                match serde_json::from_slice::<SessionState>(&bytes) {
                    Ok(s) => out.push(s),
                    Err(e) => log::warn!("skipping unreadable session file {}: {e}", path.display()),
                }
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }
}
