//! Python bindings: task generation and scoring, advantages, novelty
//! networks and rewards, training, evaluation and log analysis.

use std::path::PathBuf;

use novarl_core::advantage::{self, Algo, GaeConfig};
use novarl_core::explore::{self, ExplorationSchedule, ExploreSample, NoveltyMode, Phase, RunningStd};
use novarl_core::policy::{GenerationConfig, PolicyParams};
use novarl_core::toytask::{self, solver, GenerationLimits, Mode, Token, Vocabulary};
use novarl_core::trainer::{self, MetricRow, TrainOptions};
use novarl_core::{rng, Error};
use pyo3::exceptions::{PyFileNotFoundError, PyFloatingPointError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match &e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            PyFileNotFoundError::new_err(e.to_string())
        }
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::NonFinite { .. } => PyFloatingPointError::new_err(e.to_string()),
        Error::Invariant { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn tokens(text: &str) -> PyResult<Vec<Token>> {
    Vocabulary::standard().tokenize(text).map_err(to_py)
}

fn parse_algo(algo: &str) -> PyResult<Algo> {
    match algo {
        "grpo" => Ok(Algo::Grpo),
        "ppo" => Ok(Algo::Ppo),
        other => Err(PyValueError::new_err(format!("unknown algo {other:?}"))),
    }
}

/// A Countdown problem: combine `operands` with + - * / to reach `target`.
#[pyclass(module = "novarl", from_py_object)]
#[derive(Clone)]
struct Problem {
    inner: toytask::Problem,
}

#[pymethods]
impl Problem {
    #[new]
    #[pyo3(signature = (operands, target, id = 0))]
    fn new(operands: Vec<i64>, target: i64, id: u64) -> Self {
        Problem {
            inner: toytask::Problem { id, operands, target },
        }
    }

    #[getter]
    fn id(&self) -> u64 {
        self.inner.id
    }

    #[getter]
    fn operands(&self) -> Vec<i64> {
        self.inner.operands.clone()
    }

    #[getter]
    fn target(&self) -> i64 {
        self.inner.target
    }

    fn prompt(&self) -> String {
        self.inner.prompt()
    }

    /// A solution expression, or None.
    fn certificate(&self) -> Option<String> {
        self.inner.certificate().map(|e| e.to_string())
    }

    /// `(reward, correct, well_formed)` for a response text.
    fn verify(&self, response: &str) -> PyResult<(f64, bool, bool)> {
        let label = toytask::verify(&tokens(response)?, &self.inner, &Vocabulary::standard());
        Ok((label.reward, label.correct, label.well_formed))
    }

    fn __repr__(&self) -> String {
        format!("Problem(operands={:?}, target={}, id={})", self.inner.operands, self.inner.target, self.inner.id)
    }
}

fn mode(name: &str) -> PyResult<Mode> {
    name.parse().map_err(PyValueError::new_err)
}

/// Distinct solvable problems with ids `0..count`.
#[pyfunction]
#[pyo3(signature = (seed, count, mode_name = "countdown34", max_operand = 20, max_target = 100))]
fn generate_dataset(seed: u64, count: usize, mode_name: &str, max_operand: i64, max_target: i64) -> PyResult<Vec<Problem>> {
    let limits = GenerationLimits {
        max_operand,
        max_target,
        ..GenerationLimits::default()
    };
    let problems = toytask::generate_dataset(seed, count, mode(mode_name)?, &limits).map_err(to_py)?;
    Ok(problems.into_iter().map(|inner| Problem { inner }).collect())
}

#[pyfunction]
fn read_problems(path: PathBuf) -> PyResult<Vec<Problem>> {
    let problems = toytask::read_problems(&path).map_err(to_py)?;
    Ok(problems.into_iter().map(|inner| Problem { inner }).collect())
}

#[pyfunction]
fn write_problems(path: PathBuf, problems: Vec<Problem>) -> PyResult<()> {
    let inner: Vec<_> = problems.into_iter().map(|p| p.inner).collect();
    toytask::write_problems(&path, &inner).map_err(to_py)
}

#[pyfunction]
fn solve(operands: Vec<i64>, target: i64) -> Option<String> {
    solver::solve(&operands, target).map(|e| e.to_string())
}

#[pyfunction]
fn tokenize(text: &str) -> PyResult<Vec<u8>> {
    Ok(tokens(text)?.iter().map(|t| t.id()).collect())
}

#[pyfunction]
fn detokenize(ids: Vec<u8>) -> PyResult<String> {
    let vocab = Vocabulary::standard();
    let toks: Vec<Token> = ids.into_iter().map(Token::new).collect();
    if let Some(bad) = toks.iter().find(|t| !vocab.contains(**t)) {
        return Err(PyValueError::new_err(format!("token id {} out of range", bad.id())));
    }
    Ok(vocab.detokenize(&toks))
}

/// Group-relative advantages: rewards standardized by the group mean and
/// population standard deviation.
#[pyfunction]
#[pyo3(signature = (rewards, eps = advantage::GROUP_STD_EPS))]
fn group_normalize(rewards: Vec<f64>, eps: f64) -> PyResult<Vec<f64>> {
    advantage::group_normalize(&rewards, eps).map_err(to_py)
}

/// `(advantages, returns)`; `values` has one more entry than `rewards`.
#[pyfunction]
#[pyo3(signature = (rewards, values, gamma = 1.0, lam = 1.0))]
fn gae(rewards: Vec<f64>, values: Vec<f64>, gamma: f64, lam: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    advantage::gae(&rewards, &values, &GaeConfig { gamma, lambda: lam }).map_err(to_py)
}

/// Frozen random target network and trainable predictor over token
/// sequences; novelty is their squared disagreement.
#[pyclass(module = "novarl")]
struct ExplorationNets {
    inner: explore::ExplorationNets,
}

#[pymethods]
impl ExplorationNets {
    #[new]
    #[pyo3(signature = (seed = 0, lr = 1e-3))]
    fn new(seed: u64, lr: f64) -> Self {
        ExplorationNets {
            inner: explore::ExplorationNets::new(Vocabulary::standard().len(), seed, lr),
        }
    }

    /// Raw novelty of a question/response pair given as text.
    fn novelty(&self, question: &str, response: &str) -> PyResult<f64> {
        self.inner.novelty_raw(&tokens(question)?, &tokens(response)?).map_err(to_py)
    }

    /// One gradient step on the mean novelty of the batch; returns the loss
    /// before the step.
    fn update(&mut self, batch: Vec<(String, String)>) -> PyResult<f64> {
        let toks: Vec<(Vec<Token>, Vec<Token>)> =
            batch.iter().map(|(q, o)| Ok((tokens(q)?, tokens(o)?))).collect::<PyResult<_>>()?;
        let pairs: Vec<(&[Token], &[Token])> = toks.iter().map(|(q, o)| (q.as_slice(), o.as_slice())).collect();
        self.inner.update_predictor(&pairs).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        explore::save_state(&path, &self.inner, &ExplorationSchedule::default()).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, _) = explore::load_state(&path).map_err(to_py)?;
        Ok(ExplorationNets { inner })
    }
}

/// Exploration rewards for one batch of raw novelties: min-max normalized
/// to `[0, alpha]`, zero for correct answers, scaled by `gamma/(gamma+step)`.
#[pyfunction]
#[pyo3(signature = (raw, correct, alpha = 0.5, gamma = 40.0, step = 0))]
fn exploration_rewards(raw: Vec<f64>, correct: Vec<bool>, alpha: f64, gamma: f64, step: u64) -> PyResult<Vec<f64>> {
    if raw.len() != correct.len() {
        return Err(PyValueError::new_err("raw and correct differ in length"));
    }
    let samples: Vec<ExploreSample<'_>> = correct
        .iter()
        .map(|&c| ExploreSample {
            problem_id: 0,
            question: &[],
            response: &[],
            correct: c,
        })
        .collect();
    let mut schedule = ExplorationSchedule {
        alpha,
        gamma,
        step,
        mode: NoveltyMode::MinmaxDecay,
        running: RunningStd::new(0.99),
    };
    let records = explore::allocate(&raw, &samples, &mut schedule, Phase::Train);
    Ok(records.iter().map(|r| r.reward).collect())
}

/// Adds exploration rewards to per-token advantages: every token for grpo,
/// the last token for ppo.
#[pyfunction]
#[pyo3(signature = (advantages, rewards, algo = "grpo"))]
fn inject(advantages: Vec<Vec<f64>>, rewards: Vec<f64>, algo: &str) -> PyResult<Vec<Vec<f64>>> {
    let records: Vec<explore::NoveltyRecord> = rewards
        .iter()
        .enumerate()
        .map(|(index, &r)| explore::NoveltyRecord {
            problem_id: 0,
            index,
            raw: r,
            normalized: r,
            conditioned: r,
            reward: r,
        })
        .collect();
    explore::inject(&advantages, &records, parse_algo(algo)?).map_err(to_py)
}

/// Training configuration; read and written as TOML.
#[pyclass(module = "novarl", skip_from_py_object)]
#[derive(Clone)]
struct TrainConfig {
    inner: trainer::TrainConfig,
}

#[pymethods]
impl TrainConfig {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(text) => trainer::TrainConfig::from_toml(text).map_err(to_py)?,
            None => trainer::TrainConfig::default(),
        };
        Ok(TrainConfig { inner })
    }

    /// Applies `section.key=value`.
    fn set(&mut self, assignment: &str) -> PyResult<()> {
        self.inner.set(assignment).map_err(to_py)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn __repr__(&self) -> String {
        format!("TrainConfig(\"\"\"\n{}\"\"\")", self.inner.to_toml())
    }
}

fn row_dict<'py>(py: Python<'py>, r: &MetricRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", r.step)?;
    d.set_item("train_accuracy", r.train_accuracy)?;
    d.set_item("eval_accuracy", r.eval_accuracy)?;
    d.set_item("mean_response_length", r.mean_response_length)?;
    d.set_item("mean_outcome_reward", r.mean_outcome_reward)?;
    d.set_item("max_outcome_reward", r.max_outcome_reward)?;
    d.set_item("mean_predictor_loss", r.mean_predictor_loss)?;
    d.set_item("mean_exploration_reward", r.mean_exploration_reward)?;
    d.set_item("decay_factor", r.decay_factor)?;
    d.set_item("wall_clock_seconds", r.wall_clock_seconds)?;
    Ok(d)
}

/// A trained policy.
#[pyclass(module = "novarl")]
struct Policy {
    params: PolicyParams,
    config: trainer::TrainConfig,
}

#[pymethods]
impl Policy {
    /// Loads `policy.ckpt` and `config.toml` from a checkpoint directory.
    #[staticmethod]
    fn load(ckpt_dir: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(ckpt_dir.join("config.toml"))
            .map_err(|source| to_py(Error::Io { path: ckpt_dir.join("config.toml"), source }))?;
        Ok(Policy {
            params: PolicyParams::load(&ckpt_dir.join("policy.ckpt")).map_err(to_py)?,
            config: trainer::TrainConfig::from_toml(&text).map_err(to_py)?,
        })
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Samples one response and returns its text.
    #[pyo3(signature = (problem, seed = 0, greedy = false))]
    fn sample(&self, problem: &Problem, seed: u64, greedy: bool) -> String {
        let vocab = Vocabulary::standard();
        let gen = GenerationConfig {
            greedy,
            ..self.config.generation(seed)
        };
        let t = self.params.compile().sample(&problem.inner.question_tokens(&vocab), &gen);
        vocab.detokenize(&t.response)
    }

    /// `{"pass@1", "pass@k", "avg@k"}` from `k` samples per problem.
    #[pyo3(signature = (problems, k = 4, seed = 0))]
    fn evaluate<'py>(&self, py: Python<'py>, problems: Vec<Problem>, k: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        if k == 0 {
            return Err(PyValueError::new_err("k must be at least 1"));
        }
        let inner: Vec<_> = problems.into_iter().map(|p| p.inner).collect();
        let gen = self.config.generation(rng::derive(seed, &[rng::tag::EVAL]));
        let m = py.detach(|| trainer::evaluate(&self.params.compile(), &inner, &gen, k, &Vocabulary::standard()));
        let d = PyDict::new(py);
        d.set_item("pass@1", m.pass_at_1())?;
        d.set_item(format!("pass@{k}"), m.pass_at_k())?;
        d.set_item(format!("avg@{k}"), m.avg_at_k)?;
        Ok(d)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.params.save(&path).map_err(to_py)
    }
}

/// Runs training. Returns `(metric rows, policy)`; with `out_dir` the log
/// and checkpoints are also written there.
#[pyfunction]
#[pyo3(signature = (config, train_set, test_set, out_dir = None))]
fn train<'py>(
    py: Python<'py>,
    config: &TrainConfig,
    train_set: Vec<Problem>,
    test_set: Vec<Problem>,
    out_dir: Option<PathBuf>,
) -> PyResult<(Vec<Bound<'py, PyDict>>, Policy)> {
    let train_set: Vec<_> = train_set.into_iter().map(|p| p.inner).collect();
    let test_set: Vec<_> = test_set.into_iter().map(|p| p.inner).collect();
    let cfg = config.inner.clone();
    let out = py
        .detach(|| {
            let opts = TrainOptions {
                out_dir,
                ..Default::default()
            };
            trainer::train_with(&cfg, &train_set, &test_set, opts)
        })
        .map_err(to_py)?;
    let rows = out.log.iter().map(|r| row_dict(py, r)).collect::<PyResult<_>>()?;
    Ok((rows, Policy { params: out.params, config: cfg }))
}

#[pyfunction]
fn read_log<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Vec<Bound<'py, PyDict>>> {
    trainer::read_log(&path).map_err(to_py)?.iter().map(|r| row_dict(py, r)).collect()
}

/// Least-squares decay rate of the predictor loss per log. `logs` maps
/// labels to JSONL paths; returns `{label: slope}` and the labels ordered
/// from fastest decay.
#[pyfunction]
fn exploration_diagnostic(logs: Vec<(String, PathBuf)>) -> PyResult<(Vec<(String, f64)>, Vec<String>)> {
    let loaded = logs
        .into_iter()
        .map(|(label, path)| Ok((label, trainer::read_log(&path).map_err(to_py)?)))
        .collect::<PyResult<Vec<_>>>()?;
    let report = trainer::exploration_diagnostic(&loaded).map_err(to_py)?;
    Ok((
        report.runs.iter().map(|r| (r.label.clone(), r.slope)).collect(),
        report.fastest_decay_first,
    ))
}

#[pymodule]
fn novarl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<ExplorationNets>()?;
    m.add_class::<TrainConfig>()?;
    m.add_class::<Policy>()?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(read_problems, m)?)?;
    m.add_function(wrap_pyfunction!(write_problems, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(detokenize, m)?)?;
    m.add_function(wrap_pyfunction!(group_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(gae, m)?)?;
    m.add_function(wrap_pyfunction!(exploration_rewards, m)?)?;
    m.add_function(wrap_pyfunction!(inject, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(read_log, m)?)?;
    m.add_function(wrap_pyfunction!(exploration_diagnostic, m)?)?;
    Ok(())
}
