//! The alternating experimentation / preference-exploration loop.
//!
//! [`Engine`] holds the evolving state of one run and exposes the stages
//! separately so the same code drives simulated runs ([`run`]) and live
//! sessions where a person answers the preference questions.

use crate::acquisition::{self, AcquisitionConfig, PairChoice, PreferenceModel, Qneiuu, TrueUtility};
use crate::dm::{self, DmConfig};
use crate::gp::{GaussianBelief, GpConfig, GpSurrogate, ObservationSet};
use crate::monne::{ComparisonSet, InputScaling, MonotonicEnsemble, TrainConfig};
use crate::problems::{reference_optimum, OutputProblem, OutputVector, UtilityFunction};
use crate::qmc::SobolSequence;
use crate::record::{AskedPair, IterationRecord, RunRecord, Seeds, Termination, Timings, SCHEMA_VERSION};
use crate::seed::{self, Stream};
use crate::{normal, Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    BopeMonne,
    /// Quasi-random designs, no surrogates.
    Random,
    /// qNEIUU with the true utility (M = 1); no preference queries.
    KnownUtility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputScalingMode {
    /// Outputs enter the networks unchanged.
    #[default]
    None,
    /// Reachable output ranges mapped onto `[-1, 1]`.
    Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    /// Defaults to the problem's standard utility.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility: Option<String>,
    pub utility_params: BTreeMap<String, Vec<f64>>,
    /// Number of loop iterations `T`.
    pub budget: usize,
    /// 16 if `d < 5`, else 32.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_observations: Option<usize>,
    /// 10 if `d < 5`, else 20.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_comparisons: Option<usize>,
    pub algorithm: Algorithm,
    /// Ensemble size `M_e`.
    pub ensemble_size: usize,
    pub input_scaling: InputScalingMode,
    pub regret_floor: f64,
    pub seed: u64,
    pub dm: DmConfig,
    pub train: TrainConfig,
    pub acquisition: AcquisitionConfig,
    pub gp: GpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "DTLZ2".into(),
            utility: None,
            utility_params: BTreeMap::new(),
            budget: 20,
            init_observations: None,
            init_comparisons: None,
            algorithm: Algorithm::BopeMonne,
            ensemble_size: 8,
            input_scaling: InputScalingMode::None,
            regret_floor: 1e-5,
            seed: 0,
            dm: DmConfig::default(),
            train: TrainConfig::default(),
            acquisition: AcquisitionConfig::default(),
            gp: GpConfig::default(),
        }
    }
}

impl RunConfig {
    /// Checks every field that does not need the problem definition.
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble_size must be at least 1".into()));
        }
        if !(self.regret_floor >= 0.0 && self.regret_floor.is_finite()) {
            return Err(Error::Config("regret_floor must be finite and >= 0".into()));
        }
        if self.init_observations == Some(0) {
            return Err(Error::Config("init_observations must be at least 1".into()));
        }
        if self.gp.restarts == 0 {
            return Err(Error::Config("gp.restarts must be at least 1".into()));
        }
        self.dm.validate()?;
        self.train.validate()?;
        self.acquisition.validate()?;
        if self.dm == DmConfig::LiveHuman && self.algorithm != Algorithm::BopeMonne {
            return Err(Error::Config("algorithm: live human sessions need bope_monne".into()));
        }
        Ok(())
    }

    /// Built-in problem and utility named by the config.
    pub fn resolve(&self) -> Result<(OutputProblem, UtilityFunction)> {
        let problem = OutputProblem::builtin(&self.problem).map_err(|e| Error::Config(format!("problem: {e}")))?;
        let utility = match &self.utility {
            Some(name) => UtilityFunction::builtin(name, &self.utility_params)
                .map_err(|e| Error::Config(format!("utility: {e}")))?,
            None if self.utility_params.is_empty() => UtilityFunction::default_for(problem.kind())
                .ok_or_else(|| Error::Config("utility: no default for this problem".into()))?,
            None => {
                let name = UtilityFunction::default_for(problem.kind())
                    .ok_or_else(|| Error::Config("utility: no default for this problem".into()))?
                    .name()
                    .to_string();
                UtilityFunction::builtin(&name, &self.utility_params)
                    .map_err(|e| Error::Config(format!("utility_params: {e}")))?
            }
        };
        utility
            .check_compatible(&problem)
            .map_err(|e| Error::Config(format!("utility: {e}")))?;
        Ok((problem, utility))
    }

    pub fn init_sizes(&self, d: usize) -> (usize, usize) {
        let small = d < 5;
        (
            self.init_observations.unwrap_or(if small { 16 } else { 32 }),
            self.init_comparisons.unwrap_or(if small { 10 } else { 20 }),
        )
    }
}

/// Simple regret `max(0, optimum - best utility among the observations)`.
pub fn simple_regret(optimum: f64, data: &ObservationSet, utility: &UtilityFunction) -> f64 {
    (optimum - best_utility(data, utility)).max(0.0)
}

fn best_utility(data: &ObservationSet, utility: &UtilityFunction) -> f64 {
    data.ys()
        .iter()
        .map(|y| utility.evaluate_unchecked(y))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Serialisable part of a run in progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub data: ObservationSet,
    pub comparisons: ComparisonSet,
    /// Initial pairs still waiting for an answer (live sessions only).
    pub pending_initial: Vec<(usize, usize)>,
    pub record: RunRecord,
}

pub struct Engine {
    cfg: RunConfig,
    problem: OutputProblem,
    /// Ground truth; absent for live sessions.
    utility: Option<UtilityFunction>,
    optimum: Option<f64>,
    state: EngineState,
    model: Option<MonotonicEnsemble>,
}

/// A question for the decision maker: indices into the observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub i: usize,
    pub j: usize,
    pub initial: bool,
    pub fallback: bool,
}

impl Engine {
    /// Evaluates the initial design and draws the initial comparisons. With a
    /// simulated decision maker they are answered immediately.
    pub fn new(cfg: RunConfig, problem: OutputProblem, utility: Option<UtilityFunction>) -> Result<Self> {
        cfg.validate()?;
        let simulated = cfg.dm != DmConfig::LiveHuman;
        if simulated && utility.is_none() {
            return Err(Error::Config("a simulated decision maker needs a utility".into()));
        }
        let (n0, m0) = cfg.init_sizes(problem.dim());
        let design_seed = seed::stream_seed(cfg.seed, Stream::InitDesign, 0);
        let pair_seed = seed::stream_seed(cfg.seed, Stream::InitPairs, 0);

        let mut data = ObservationSet::new(problem.dim(), problem.n_outputs());
        for x in SobolSequence::new(problem.bounds(), design_seed).points(0, n0) {
            let y = problem.evaluate(&x.clone().into())?;
            data.push(x.into(), y)?;
        }
        let pairs = sample_pairs(data.ys(), m0, &mut seed::rng(pair_seed))?;

        let optimum = match &utility {
            Some(u) if simulated => Some(reference_optimum(&problem, u)?),
            _ => None,
        };
        let (utility_name, params_hash) = match &utility {
            Some(u) => (u.name().to_string(), u.params_hash()),
            None => (String::new(), String::new()),
        };
        let record = RunRecord {
            schema_version: SCHEMA_VERSION,
            config: cfg.clone(),
            problem: problem.name().to_string(),
            utility: utility_name,
            utility_params_hash: params_hash,
            train_config_hash: cfg.train.hash(),
            seeds: Seeds {
                master: cfg.seed,
                init_design: design_seed,
                init_pairs: pair_seed,
            },
            reference_optimum: optimum,
            initial_x: data.xs().iter().map(|x| x.0.clone()).collect(),
            initial_y: data.ys().iter().map(|y| y.0.clone()).collect(),
            initial_pairs: Vec::new(),
            iterations: Vec::new(),
            termination: Termination::InProgress,
        };
        let mut engine = Engine {
            cfg,
            problem,
            utility,
            optimum,
            state: EngineState {
                data,
                comparisons: ComparisonSet::new(),
                pending_initial: Vec::new(),
                record,
            },
            model: None,
        };
        if simulated {
            let mut rng = seed::rng(seed::stream_seed(engine.cfg.seed, Stream::DecisionMaker, 0));
            for (i, j) in pairs {
                let (label, was_error) = engine.simulate_answer(i, j, &mut rng)?;
                engine.add_initial_answer(i, j, label, Some(was_error))?;
            }
        } else {
            engine.state.pending_initial = pairs;
        }
        let regret = engine.current_regret();
        engine.state.record.iterations.push(IterationRecord {
            iteration: 0,
            x: None,
            y: None,
            acquisition_value: None,
            pair: None,
            regret,
            best_utility: engine.utility.as_ref().map(|u| best_utility(&engine.state.data, u)),
            cumulative_errors: count_errors(&engine.state.record.initial_pairs),
            warnings: Vec::new(),
            timings: Timings::default(),
        });
        engine.apply_floor();
        Ok(engine)
    }

    /// Rebuilds an engine from persisted state.
    pub fn restore(
        cfg: RunConfig,
        problem: OutputProblem,
        utility: Option<UtilityFunction>,
        state: EngineState,
    ) -> Result<Self> {
        cfg.validate()?;
        let optimum = state.record.reference_optimum;
        Ok(Engine {
            cfg,
            problem,
            utility,
            optimum,
            state,
            model: None,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &OutputProblem {
        &self.problem
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn record(&self) -> &RunRecord {
        &self.state.record
    }

    pub fn into_record(self) -> RunRecord {
        self.state.record
    }

    /// Latest trained utility model, if any.
    pub fn model(&self) -> Option<&MonotonicEnsemble> {
        self.model.as_ref()
    }

    /// Index of the last completed iteration.
    pub fn iteration(&self) -> usize {
        self.state.record.iterations.len().saturating_sub(1)
    }

    pub fn is_finished(&self) -> bool {
        !matches!(self.state.record.termination, Termination::InProgress)
    }

    fn current_regret(&self) -> Option<f64> {
        match (&self.utility, self.optimum) {
            (Some(u), Some(opt)) => Some(simple_regret(opt, &self.state.data, u)),
            _ => None,
        }
    }

    fn apply_floor(&mut self) {
        let floor = self.cfg.regret_floor;
        let last = self.state.record.iterations.last_mut().expect("iteration 0 exists");
        if let Some(r) = last.regret {
            if r < floor {
                last.regret = Some(floor);
                self.state.record.termination = Termination::EarlyStop {
                    iteration: last.iteration,
                };
            }
        }
    }

    fn simulate_answer<R: Rng>(&self, i: usize, j: usize, rng: &mut R) -> Result<(i8, bool)> {
        let u = self.utility.as_ref().expect("simulation has a utility");
        let ys = self.state.data.ys();
        let r = dm::respond(u.evaluate_unchecked(&ys[i]), u.evaluate_unchecked(&ys[j]), &self.cfg.dm, rng)?;
        Ok((r.label, r.was_error))
    }

    fn add_initial_answer(&mut self, i: usize, j: usize, label: i8, was_error: Option<bool>) -> Result<()> {
        let ys = self.state.data.ys();
        self.state.comparisons.push(ys[i].clone(), ys[j].clone(), label)?;
        self.state.record.initial_pairs.push(AskedPair {
            i,
            j,
            label,
            was_error,
            fallback: false,
        });
        Ok(())
    }

    fn scaling(&self) -> InputScaling {
        match self.cfg.input_scaling {
            InputScalingMode::None => InputScaling::identity(self.problem.n_outputs()),
            InputScalingMode::Range => InputScaling::from_ranges(self.problem.output_ranges()),
        }
    }

    fn train_model(&self, iteration: usize) -> Result<MonotonicEnsemble> {
        MonotonicEnsemble::train(
            &self.state.comparisons,
            self.cfg.ensemble_size,
            &self.cfg.train,
            self.scaling(),
            seed::stream_seed(self.cfg.seed, Stream::UtilityModel, iteration as u64),
        )
    }

    /// Experimentation stage of the next iteration: fit the surrogates, pick
    /// and evaluate a design, and record the new iteration.
    pub fn experiment(&mut self) -> Result<()> {
        if self.is_finished() {
            return Err(Error::State("run already finished".into()));
        }
        if !self.state.pending_initial.is_empty() {
            return Err(Error::State("initial comparisons are still unanswered".into()));
        }
        let t = self.iteration() + 1;
        let acq_seed = seed::stream_seed(self.cfg.seed, Stream::Acquisition, t as u64);
        let bounds = self.problem.bounds().to_vec();
        let mut timings = Timings::default();
        let mut warnings = Vec::new();
        let started = Instant::now();

        let (x, value) = match self.cfg.algorithm {
            Algorithm::Random => (self.fresh_sobol_point(), None),
            alg => {
                let clock = Instant::now();
                let gp = GpSurrogate::fit(
                    &self.state.data,
                    &bounds,
                    &self.cfg.gp,
                    seed::stream_seed(self.cfg.seed, Stream::GpFit, t as u64),
                )?;
                timings.gp_fit = clock.elapsed().as_secs_f64();
                let n_mc = self.cfg.acquisition.n_mc;
                let base_seed = seed::derive(acq_seed, 0);
                let raw_seed = seed::derive(acq_seed, 1);
                let res = if alg == Algorithm::KnownUtility {
                    let u = self
                        .utility
                        .as_ref()
                        .ok_or_else(|| Error::Config("known_utility needs a utility".into()))?;
                    let util = TrueUtility(u);
                    let acq = Qneiuu::new(&gp, &util, &self.state.data, n_mc, base_seed)?;
                    acquisition::optimize_qneiuu(&acq, &bounds, &self.cfg.acquisition, raw_seed)
                } else {
                    let clock = Instant::now();
                    let model = self.train_model(t)?;
                    timings.utility_fit = clock.elapsed().as_secs_f64();
                    let acq = Qneiuu::new(&gp, &model, &self.state.data, n_mc, base_seed)?;
                    let res = acquisition::optimize_qneiuu(&acq, &bounds, &self.cfg.acquisition, raw_seed);
                    self.model = Some(model);
                    res
                };
                warnings.extend(res.warning);
                if self.state.data.contains(&res.x) {
                    warnings.push("acquisition optimum repeats an evaluated design; using a quasi-random design".into());
                    (self.fresh_sobol_point(), Some(res.value))
                } else {
                    (res.x, Some(res.value))
                }
            }
        };
        let y = self.problem.evaluate(&x.clone().into())?;
        self.state.data.push(x.clone().into(), y.clone())?;
        timings.experimentation = started.elapsed().as_secs_f64() - timings.gp_fit - timings.utility_fit;

        let regret = self.current_regret();
        let errors = self.state.record.cumulative_errors();
        self.state.record.iterations.push(IterationRecord {
            iteration: t,
            x: Some(x),
            y: Some(y.0),
            acquisition_value: value,
            pair: None,
            regret,
            best_utility: self.utility.as_ref().map(|u| best_utility(&self.state.data, u)),
            cumulative_errors: errors,
            warnings,
            timings,
        });
        Ok(())
    }

    /// Next point of a dedicated quasi-random sequence not yet evaluated.
    fn fresh_sobol_point(&self) -> Vec<f64> {
        let seq = SobolSequence::new(
            self.problem.bounds(),
            seed::stream_seed(self.cfg.seed, Stream::Acquisition, 0),
        );
        let mut idx = (self.state.data.len() - self.state.record.initial_x.len()) as u64;
        loop {
            let x = seq.point(idx);
            if !self.state.data.contains(&x) {
                return x;
            }
            idx += 1;
        }
    }

    /// Preference-exploration stage: the pair of observed outputs that
    /// maximises the configured criterion under the current utility model.
    pub fn propose_pair(&mut self) -> Result<PairChoice> {
        if self.model.is_none() {
            let t = self.iteration();
            self.model = Some(self.train_model(t)?);
        }
        let model = self.model.as_ref().expect("trained above");
        acquisition::select_pair(
            self.state.data.ys(),
            model,
            &self.state.comparisons,
            self.cfg.acquisition.pair_criterion,
            self.cfg.acquisition.exclude_asked_pairs,
        )
    }

    /// Records the answer to the pair asked in the current iteration.
    pub fn answer(&mut self, choice: &PairChoice, label: i8, was_error: Option<bool>) -> Result<()> {
        let last = self.state.record.iterations.last().expect("iteration 0 exists");
        if last.iteration == 0 || last.pair.is_some() {
            return Err(Error::State("no open question in this iteration".into()));
        }
        let ys = self.state.data.ys();
        self.state.comparisons.push(ys[choice.i].clone(), ys[choice.j].clone(), label)?;
        let last = self.state.record.iterations.last_mut().expect("checked");
        last.pair = Some(AskedPair {
            i: choice.i,
            j: choice.j,
            label,
            was_error,
            fallback: choice.fallback,
        });
        if was_error == Some(true) {
            last.cumulative_errors += 1;
        }
        if choice.fallback {
            last.warnings.push("every observed pair was already asked; repeating a pair".into());
        }
        // the model no longer reflects the comparisons
        self.model = None;
        Ok(())
    }

    /// One full simulated iteration.
    pub fn step_simulated(&mut self) -> Result<()> {
        self.experiment()?;
        let t = self.iteration();
        if self.cfg.algorithm == Algorithm::BopeMonne {
            let clock = Instant::now();
            let choice = self.propose_pair()?;
            let mut rng = seed::rng(seed::stream_seed(self.cfg.seed, Stream::DecisionMaker, t as u64));
            let (label, was_error) = self.simulate_answer(choice.i, choice.j, &mut rng)?;
            self.answer(&choice, label, Some(was_error))?;
            let last = self.state.record.iterations.last_mut().expect("just pushed");
            last.timings.preference = clock.elapsed().as_secs_f64();
        }
        self.apply_floor();
        if !self.is_finished() && t >= self.cfg.budget {
            self.state.record.termination = Termination::Budget;
        }
        Ok(())
    }

    /// Next question for a live decision maker: an unanswered initial pair,
    /// or a new iteration's experiment followed by pair selection.
    pub fn next_question(&mut self) -> Result<Question> {
        if let Some(&(i, j)) = self.state.pending_initial.first() {
            return Ok(Question {
                i,
                j,
                initial: true,
                fallback: false,
            });
        }
        if self.iteration() >= self.cfg.budget {
            return Err(Error::State("budget exhausted".into()));
        }
        self.experiment()?;
        let c = self.propose_pair()?;
        Ok(Question {
            i: c.i,
            j: c.j,
            initial: false,
            fallback: c.fallback,
        })
    }

    /// Records a live answer to `q` (label +1, -1 or 0).
    pub fn answer_question(&mut self, q: &Question, label: i8) -> Result<()> {
        if q.initial {
            if self.state.pending_initial.first() != Some(&(q.i, q.j)) {
                return Err(Error::State("that initial pair is not pending".into()));
            }
            self.add_initial_answer(q.i, q.j, label, None)?;
            self.state.pending_initial.remove(0);
            self.model = None;
        } else {
            let choice = PairChoice {
                i: q.i,
                j: q.j,
                value: f64::NAN,
                fallback: q.fallback,
            };
            self.answer(&choice, label, None)?;
            if self.iteration() >= self.cfg.budget {
                self.state.record.termination = Termination::Budget;
            }
        }
        Ok(())
    }

    /// Observed outputs ranked by the utility model's mean (best first),
    /// as `(index, mean)`. Trains a model if none is current.
    pub fn ranked_outputs(&mut self) -> Result<Vec<(usize, f64)>> {
        if self.state.comparisons.is_empty() {
            return Ok(Vec::new());
        }
        if self.model.is_none() {
            let t = self.iteration();
            self.model = Some(self.train_model(t)?);
        }
        let model = self.model.as_ref().expect("trained above");
        let mut ranked: Vec<(usize, f64)> = self
            .state
            .data
            .ys()
            .iter()
            .enumerate()
            .map(|(i, y)| (i, model.predict_belief(y).mean))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranked)
    }
}

fn count_errors(pairs: &[AskedPair]) -> usize {
    pairs.iter().filter(|p| p.was_error == Some(true)).count()
}

/// `m` distinct index pairs `(i, j)`, `i < j`, with distinct outputs, drawn
/// uniformly without replacement.
fn sample_pairs<R: Rng>(ys: &[OutputVector], m: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let mut eligible = Vec::new();
    for i in 0..ys.len() {
        for j in i + 1..ys.len() {
            if ys[i] != ys[j] {
                eligible.push((i, j));
            }
        }
    }
    if m > eligible.len() {
        return Err(Error::Config(format!(
            "init_comparisons = {m} exceeds the {} available distinct output pairs",
            eligible.len()
        )));
    }
    Ok(rand::seq::index::sample(rng, eligible.len(), m)
        .into_iter()
        .map(|k| eligible[k])
        .collect())
}

/// Initial observations and comparisons for a built-in config.
pub fn initialize(cfg: &RunConfig) -> Result<(ObservationSet, ComparisonSet)> {
    let (problem, utility) = cfg.resolve()?;
    let engine = Engine::new(cfg.clone(), problem, Some(utility))?;
    Ok((engine.state.data, engine.state.comparisons))
}

/// Runs a built-in config to completion.
pub fn run(cfg: &RunConfig) -> Result<RunRecord> {
    let (problem, utility) = cfg.resolve()?;
    run_with(cfg, problem, utility)
}

/// Runs to completion on an arbitrary problem and utility. Failures after
/// initialisation end the run early; the partial record says why.
pub fn run_with(cfg: &RunConfig, problem: OutputProblem, utility: UtilityFunction) -> Result<RunRecord> {
    if cfg.dm == DmConfig::LiveHuman {
        return Err(Error::Config("dm: a live human run needs the session service".into()));
    }
    let mut engine = Engine::new(cfg.clone(), problem, Some(utility))?;
    if cfg.budget == 0 && !engine.is_finished() {
        engine.state.record.termination = Termination::Budget;
    }
    while !engine.is_finished() {
        let t = engine.iteration() + 1;
        if let Err(e) = engine.step_simulated() {
            engine.state.record.termination = Termination::Failed {
                iteration: t,
                message: e.to_string(),
            };
        }
    }
    Ok(engine.into_record())
}

/// Probability the model assigns to "first preferred" for two independent
/// Gaussian beliefs.
pub fn model_preference_probability(a: &GaussianBelief, b: &GaussianBelief) -> f64 {
    let d = a.mean - b.mean;
    let s = (a.variance + b.variance).sqrt();
    if s > 0.0 {
        normal::cdf(d / s)
    } else if d > 0.0 {
        1.0
    } else if d < 0.0 {
        0.0
    } else {
        0.5
    }
}

fn random_pair<R: Rng>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// Mean probability the model gives to the decision maker's realised answer
/// over `trials` random pairs of `outputs`.
pub fn uncertainty_quality<M: PreferenceModel + ?Sized, R: Rng>(
    model: &M,
    utility: &UtilityFunction,
    outputs: &[OutputVector],
    trials: usize,
    dm_cfg: &DmConfig,
    rng: &mut R,
) -> Result<f64> {
    if outputs.len() < 2 || trials == 0 {
        return Err(Error::Input("need at least 2 outputs and 1 trial".into()));
    }
    let mut total = 0.0;
    for _ in 0..trials {
        let (i, j) = random_pair(outputs.len(), rng);
        let r = dm::respond(
            utility.evaluate_unchecked(&outputs[i]),
            utility.evaluate_unchecked(&outputs[j]),
            dm_cfg,
            rng,
        )?;
        let p = model_preference_probability(&model.belief(&outputs[i]), &model.belief(&outputs[j]));
        total += if r.label > 0 { p } else { 1.0 - p };
    }
    Ok(total / trials as f64)
}

/// Fraction of random pairs where the model's mean gap has the sign of the
/// true utility gap.
pub fn pairwise_accuracy<M: PreferenceModel + ?Sized, R: Rng>(
    model: &M,
    utility: &UtilityFunction,
    outputs: &[OutputVector],
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if outputs.len() < 2 || trials == 0 {
        return Err(Error::Input("need at least 2 outputs and 1 trial".into()));
    }
    let mut correct = 0;
    for _ in 0..trials {
        let (i, j) = random_pair(outputs.len(), rng);
        let truth = utility.evaluate_unchecked(&outputs[i]) - utility.evaluate_unchecked(&outputs[j]);
        let pred = model.belief(&outputs[i]).mean - model.belief(&outputs[j]).mean;
        if truth.total_cmp(&0.0) == pred.total_cmp(&0.0) {
            correct += 1;
        }
    }
    Ok(correct as f64 / trials as f64)
}

/// Pinned protocol for the surrogate-quality tables: evaluate `samples`
/// quasi-random designs, label `comparisons` random pairs of their outputs
/// with the noisy decision maker, train the ensemble, then score `trials`
/// fresh random pairs of the same outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityProtocol {
    /// 160 if `d < 5`, else 320.
    pub samples: Option<usize>,
    /// 10 if `d < 5`, else 20.
    pub comparisons: Option<usize>,
    pub trials: usize,
    pub ensemble_size: usize,
    pub dm: DmConfig,
    pub train: TrainConfig,
    pub input_scaling: InputScalingMode,
}

impl Default for QualityProtocol {
    fn default() -> Self {
        Self {
            samples: None,
            comparisons: None,
            trials: 50,
            ensemble_size: 8,
            dm: DmConfig::Gaussian { sigma: 0.1 },
            train: TrainConfig::default(),
            input_scaling: InputScalingMode::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub uncertainty_quality: f64,
    pub accuracy: f64,
}

pub fn quality_protocol(
    problem: &OutputProblem,
    utility: &UtilityFunction,
    protocol: &QualityProtocol,
    seed: u64,
) -> Result<QualityScores> {
    let small = problem.dim() < 5;
    let n = protocol.samples.unwrap_or(if small { 160 } else { 320 });
    let m = protocol.comparisons.unwrap_or(if small { 10 } else { 20 });
    let outputs: Vec<OutputVector> = SobolSequence::new(problem.bounds(), seed::stream_seed(seed, Stream::InitDesign, 0))
        .points(0, n)
        .into_iter()
        .map(|x| problem.evaluate(&x.into()))
        .collect::<Result<_>>()?;
    let pairs = sample_pairs(&outputs, m, &mut seed::rng(seed::stream_seed(seed, Stream::InitPairs, 0)))?;
    let mut dm_rng = seed::rng(seed::stream_seed(seed, Stream::DecisionMaker, 0));
    let mut data = ComparisonSet::new();
    for (i, j) in pairs {
        let r = dm::respond(
            utility.evaluate_unchecked(&outputs[i]),
            utility.evaluate_unchecked(&outputs[j]),
            &protocol.dm,
            &mut dm_rng,
        )?;
        data.push(outputs[i].clone(), outputs[j].clone(), r.label)?;
    }
    let scaling = match protocol.input_scaling {
        InputScalingMode::None => InputScaling::identity(problem.n_outputs()),
        InputScalingMode::Range => InputScaling::from_ranges(problem.output_ranges()),
    };
    let model = MonotonicEnsemble::train(
        &data,
        protocol.ensemble_size,
        &protocol.train,
        scaling,
        seed::stream_seed(seed, Stream::UtilityModel, 0),
    )?;
    let uq = uncertainty_quality(
        &model,
        utility,
        &outputs,
        protocol.trials,
        &protocol.dm,
        &mut seed::rng(seed::stream_seed(seed, Stream::Metrics, 0)),
    )?;
    let acc = pairwise_accuracy(
        &model,
        utility,
        &outputs,
        protocol.trials,
        &mut seed::rng(seed::stream_seed(seed, Stream::Metrics, 1)),
    )?;
    Ok(QualityScores {
        uncertainty_quality: uq,
        accuracy: acc,
    })
}
