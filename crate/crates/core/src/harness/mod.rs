//! The experiment driver: curriculum runs, ablations, metrics, and replay.
//!
//! One run walks the curriculum in order. Per task it loops
//! plan → synthesize/lookup → execute; failures trigger the optimizer,
//! successes feed calibration and (every fifth success) the refactorer.
//! A task is mastered when its success rate over the trailing five attempts
//! clears the threshold; after each new mastery every previously mastered
//! task is re-evaluated once, which is what the skill-retention series
//! measures. All randomness derives from the run seed, so identical configs
//! yield byte-identical logs and final networks.

mod metrics;

pub use metrics::{compute_srr, parse_log, render_csv, render_log, EpisodeRecord, LogLine, Metrics, TaskOutcome};

use std::path::PathBuf;

use rand::rngs::StdRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Bindings;
use crate::executor::{
    calibrate_conditions, execute_skill, record_trace_outcomes, synthesize_composite,
    SynthesisContext, DEFAULT_STEP_BUDGET,
};
use crate::network::{network_from_sources, NodeId, SkillNetwork};
use crate::operator::{
    ComposerAdapter, ForwardAdapter, HttpOperator, OperatorBackend, OracleOperator, WithFallback,
};
use crate::planner::{Plan, PlannerConfig};
use crate::refactorer::{maybe_refactor, WindowTask};
use crate::rng::{mix3, stream, tag};
use crate::world::{
    check_goal, curriculum_faults, inject_fault, load_curriculum, parse_curriculum, reset_world,
    RecipeTable, Task,
};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    pub no_optimizer: bool,
    pub no_gating: bool,
    pub no_refactor: bool,
    pub always_new_skill: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    Oracle,
    Http { url: String },
}

impl Default for BackendChoice {
    fn default() -> Self {
        BackendChoice::Oracle
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Curriculum file; the bundled nine-task curriculum when unset.
    pub curriculum: Option<PathBuf>,
    /// Recipe table override; the bundled table when unset.
    pub recipes: Option<PathBuf>,
    pub backend: BackendChoice,
    pub ablations: Ablations,
    pub temperature: f64,
    /// Success rate over the trailing window that counts as mastery.
    pub mastery_threshold: f64,
    pub mastery_window: u32,
    /// Hard cap on attempts per task (the task budget still applies).
    pub max_attempts: u32,
    pub step_budget: u64,
    /// Inject the built-in fault corpus into the seed library.
    pub inject_faults: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            curriculum: None,
            recipes: None,
            backend: BackendChoice::Oracle,
            ablations: Ablations::default(),
            temperature: 0.5,
            mastery_threshold: 0.8,
            mastery_window: 5,
            max_attempts: 24,
            step_budget: DEFAULT_STEP_BUDGET,
            inject_faults: true,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        if !(self.mastery_threshold > 0.0 && self.mastery_threshold <= 1.0) {
            return Err(HarnessError::Config(format!(
                "mastery threshold {} outside (0, 1]",
                self.mastery_threshold
            )));
        }
        if self.temperature <= 0.0 {
            return Err(HarnessError::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad config: {0}")]
    Config(String),
    #[error(transparent)]
    Tasks(#[from] crate::world::TaskError),
    #[error("recipes: {0}")]
    Recipes(#[from] crate::world::RecipeTableError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("seed library: {0}")]
    Seed(#[from] crate::network::NetworkError),
    #[error("seed library: {0}")]
    SeedParse(#[from] crate::dsl::ParseError),
    #[error("operator: {0}")]
    Operator(#[from] crate::operator::OperatorError),
    #[error("log: {0}")]
    Log(String),
    #[error("replay diverged at episode {episode}: {detail}")]
    Divergence { episode: u64, detail: String },
}

/// A finished run: metrics plus the artifacts the caller may persist.
pub struct RunOutput {
    pub metrics: Metrics,
    pub log: Vec<LogLine>,
    pub network: SkillNetwork,
}

pub fn run_curriculum(config: &RunConfig) -> Result<RunOutput, HarnessError> {
    config.validate()?;
    let recipes = match &config.recipes {
        Some(path) => crate::world::parse_recipes_file(path)?,
        None => RecipeTable::bundled(),
    };
    let tasks = match &config.curriculum {
        Some(path) => load_curriculum(path)?,
        None => parse_curriculum(crate::world::BUNDLED_CURRICULUM)?,
    };
    let mut backend: Box<dyn OperatorBackend> = match &config.backend {
        BackendChoice::Oracle => Box::new(OracleOperator),
        BackendChoice::Http { url } => Box::new(WithFallback::new(HttpOperator::new(url)?)),
    };

    let vocab = recipes.vocabulary();
    let seed_skills = crate::dsl::parse_skill_file(crate::world::BUNDLED_SEED_SKILLS)?;
    let mut net = network_from_sources(&seed_skills, &vocab)?;
    if config.inject_faults {
        let mut fault_rng = stream(config.seed, "faults", 0);
        for spec in curriculum_faults() {
            if let Some(node) = net.node(&spec.skill) {
                let faulty = inject_fault(&node.program, &spec, &mut fault_rng)
                    .map_err(|e| HarnessError::Config(format!("fault corpus: {e}")))?;
                // faults bypass contract validation on purpose: they are
                // behaviorally wrong, not ill-formed
                net.set_program(&spec.skill, faulty, &vocab)?;
            }
        }
    }

    let mut driver = Driver {
        config,
        recipes: &recipes,
        vocab: &vocab,
        backend: backend.as_mut(),
        net,
        buffers: crate::optimizer::MomentumBuffer::default(),
        episode_index: 0,
        success_counter: 0,
        history: Vec::new(),
        log: Vec::new(),
        metrics: Metrics::default(),
        srr_rounds: Vec::new(),
    };
    driver.log.push(LogLine::Config {
        config: serde_json::to_value(config).expect("config serializes"),
    });

    let mut mastered: Vec<Task> = Vec::new();
    for task in &tasks {
        let budget = task.iteration_budget.min(config.max_attempts).max(1);
        let mut outcomes: Vec<bool> = Vec::new();
        let mut mastered_at = None;
        while (outcomes.len() as u32) < budget {
            let delta = driver.episode(task, "train")?;
            outcomes.push(delta);
            let window = config.mastery_window.max(1) as usize;
            let tail = &outcomes[outcomes.len().saturating_sub(window)..];
            let rate = tail.iter().filter(|&&b| b).count() as f64 / tail.len() as f64;
            if delta && rate >= config.mastery_threshold {
                mastered_at = Some(outcomes.len() as u32);
                break;
            }
        }
        driver.metrics.tasks.push(TaskOutcome {
            name: task.name.clone(),
            attempts: outcomes.len() as u32,
            mastered: mastered_at.is_some(),
            iterations_to_master: mastered_at,
        });
        if mastered_at.is_some() {
            // retention protocol: re-evaluate everything mastered before
            let mut round = Vec::new();
            for earlier in &mastered {
                let delta = driver.episode(earlier, "reeval")?;
                round.push(delta);
            }
            if !round.is_empty() {
                driver.srr_rounds.push(round);
                let series = compute_srr(&driver.srr_rounds);
                let srr = *series.last().expect("nonempty rounds");
                driver.metrics.srr_series = series;
                driver.metrics.srr_successes = driver
                    .srr_rounds
                    .iter()
                    .flatten()
                    .filter(|&&b| b)
                    .count() as u64;
                driver.metrics.srr_total =
                    driver.srr_rounds.iter().map(|r| r.len()).sum::<usize>() as u64;
                driver.log.push(LogLine::Srr {
                    after_task: task.name.clone(),
                    srr,
                });
            }
            mastered.push(task.clone());
        }
    }

    driver.metrics.warnings = driver.backend.take_warnings();
    driver.metrics.final_library_size = driver.net.library_size();
    driver.metrics.final_network_hash = hash_bytes(&driver.net.serialize());
    let metrics = driver.metrics.clone();
    driver.log.push(LogLine::Summary {
        metrics: metrics.clone(),
    });

    Ok(RunOutput {
        metrics,
        log: driver.log,
        network: driver.net,
    })
}

struct Driver<'a> {
    config: &'a RunConfig,
    recipes: &'a RecipeTable,
    vocab: &'a crate::dsl::Vocabulary,
    backend: &'a mut dyn OperatorBackend,
    net: SkillNetwork,
    buffers: crate::optimizer::MomentumBuffer,
    episode_index: u64,
    success_counter: u64,
    history: Vec<WindowTask>,
    log: Vec<LogLine>,
    metrics: Metrics,
    srr_rounds: Vec<Vec<bool>>,
}

impl Driver<'_> {
    /// Runs one episode (training or re-evaluation) of a task.
    fn episode(&mut self, task: &Task, kind: &str) -> Result<bool, HarnessError> {
        let index = self.episode_index;
        self.episode_index += 1;
        let world_seed = mix3(self.config.seed, tag("world"), index);
        let world = reset_world(world_seed, self.recipes);
        let mut planner_rng = stream(self.config.seed, "planner", index);
        let mut gate_rng = stream(self.config.seed, "gate", index);

        let mut record = EpisodeRecord {
            index,
            task: task.name.clone(),
            kind: kind.to_string(),
            world_seed,
            root: None,
            delta: false,
            library_size: self.net.library_size(),
            network_hash: 0,
            gate_applied: Vec::new(),
            gate_skipped: Vec::new(),
            plan_len: 0,
            failure: Vec::new(),
        };

        let planned = self.plan_episode(task, &world, &mut planner_rng, index);
        let (root, plan) = match planned {
            Ok(pair) => pair,
            Err(message) => {
                record.failure.push(message);
                record.network_hash = hash_bytes(&self.net.serialize());
                self.metrics.episodes.push(record.clone());
                self.log.push(LogLine::Episode { record });
                return Ok(false);
            }
        };
        record.plan_len = plan.steps.len();

        let Some(root) = root else {
            // goal already satisfied in the fresh world
            record.delta = check_goal(task, &world);
            record.network_hash = hash_bytes(&self.net.serialize());
            self.metrics.episodes.push(record.clone());
            self.log.push(LogLine::Episode { record });
            return Ok(true);
        };
        record.root = Some(root.clone());

        let (feedback, delta_exec, mut trace, final_world) = execute_skill(
            &root,
            &Bindings::new(),
            &world,
            &self.net,
            self.recipes,
            self.config.step_budget,
        )
        .map_err(|e| HarnessError::Config(format!("episode execution: {e}")))?;
        trace.episode = index;
        trace.task = task.name.clone();
        record_trace_outcomes(&mut self.net, &trace);

        // success means the task goal, not just the composite's own post
        let delta = delta_exec && check_goal(task, &final_world);
        record.delta = delta;
        if !delta {
            record
                .failure
                .extend(feedback.messages.iter().map(render_message));
        }

        if delta {
            self.success_counter += 1;
            if kind == "train" {
                for id in trace.skills() {
                    calibrate_conditions(&mut self.net, &id, &trace, self.vocab)
                        .map_err(|e| HarnessError::Config(format!("calibration: {e}")))?;
                }
                self.history.push(WindowTask {
                    task: task.clone(),
                    world_seed,
                    pre_success: true,
                    involved: trace.skills(),
                });
                if !self.config.ablations.no_refactor {
                    let seed = self.config.seed;
                    let recipes = self.recipes;
                    let step_budget = self.config.step_budget;
                    let temperature = self.config.temperature;
                    let mut evaluate = |candidate: &SkillNetwork, wt: &WindowTask| {
                        evaluate_window_task(
                            candidate,
                            wt,
                            recipes,
                            seed,
                            step_budget,
                            temperature,
                        )
                    };
                    // discovery looks around every skill that succeeded in
                    // this episode, root first
                    let mut succeeded: Vec<NodeId> = vec![root.clone()];
                    trace.root.walk(&mut |entry| {
                        if entry.succeeded() && !succeeded.contains(&entry.skill) {
                            succeeded.push(entry.skill.clone());
                        }
                    });
                    if let Some(event) = maybe_refactor(
                        &mut self.net,
                        &succeeded,
                        self.success_counter,
                        &self.history,
                        self.vocab,
                        &mut evaluate,
                    ) {
                        self.metrics.refactors.push(event.clone());
                        self.log.push(LogLine::Refactor { event });
                    }
                }
            }
        } else {
            if kind == "train" {
                self.history.push(WindowTask {
                    task: task.clone(),
                    world_seed,
                    pre_success: false,
                    involved: trace.skills(),
                });
            }
            // the optimizer runs on any failed episode, re-evaluations
            // included: online learning does not pause for measurement
            if !self.config.ablations.no_optimizer {
                let reports = crate::optimizer::optimize(
                    &root,
                    &feedback,
                    &trace,
                    &mut self.net,
                    &mut self.buffers,
                    self.recipes,
                    self.backend,
                    &mut gate_rng,
                    !self.config.ablations.no_gating,
                );
                for report in &reports {
                    if report.skipped {
                        record.gate_skipped.push(report.skill.clone());
                    } else {
                        record.gate_applied.push(report.skill.clone());
                    }
                }
            }
        }

        record.library_size = self.net.library_size();
        record.network_hash = hash_bytes(&self.net.serialize());
        self.metrics.episodes.push(record.clone());
        self.log.push(LogLine::Episode { record });
        Ok(delta)
    }

    /// Plans the episode and resolves the composite to execute. `Ok(None)`
    /// means the goal needs no steps.
    fn plan_episode(
        &mut self,
        task: &Task,
        world: &crate::world::WorldState,
        planner_rng: &mut StdRng,
        index: u64,
    ) -> Result<(Option<NodeId>, Plan), String> {
        let planner_cfg = PlannerConfig {
            temperature: self.config.temperature,
            max_depth: 16,
            rng_seed: self.config.seed,
        };

        let result = if self.config.ablations.always_new_skill {
            // bypass reuse entirely: forward-plan the whole goal
            let mut adapter = ForwardAdapter {
                backend: self.backend,
                recipes: self.recipes,
            };
            let atoms: Vec<crate::dsl::Condition> = task.goal.iter().cloned().collect();
            let proposal = crate::planner::ForwardPlanner::forward_plan(
                &mut adapter,
                &atoms,
                world,
                &self.net,
            )
            .map_err(|e| format!("forward planning failed: {e}"))?;
            crate::planner::PlanResult {
                plan: Plan {
                    steps: proposal.steps,
                    unground: Vec::new(),
                },
                pending_skills: proposal.new_skills,
            }
        } else {
            let mut adapter = ForwardAdapter {
                backend: self.backend,
                recipes: self.recipes,
            };
            crate::planner::plan(
                &task.goal,
                &self.net,
                world,
                &mut adapter,
                &planner_cfg,
                planner_rng,
            )
            .map_err(|e| format!("unplannable: {e}"))?
        };

        for program in &result.pending_skills {
            if !self.net.contains(&program.name) {
                self.net
                    .insert_skill(program.clone(), self.vocab)
                    .map_err(|e| format!("forward skill rejected: {e}"))?;
            }
        }

        if result.plan.steps.is_empty() {
            return Ok((None, result.plan));
        }

        let existing: Vec<NodeId> = self.net.ids().cloned().collect();
        let context = SynthesisContext {
            task: if self.config.ablations.always_new_skill {
                format!("{}_a{}", task.name, index)
            } else {
                task.name.clone()
            },
            goal: task.goal.iter().cloned().collect(),
            existing,
        };
        let mut composer = ComposerAdapter {
            backend: self.backend,
        };
        let root = synthesize_composite(
            &result.plan,
            &context,
            &mut composer,
            &mut self.net,
            self.vocab,
        )
        .map_err(|e| format!("synthesis failed: {e}"))?;
        Ok((root, result.plan))
    }
}

/// Replays one window task against a candidate network for rollback
/// validation: fresh world from the recorded seed, plan with a
/// validation-only stream, execute, check the goal. Runs on a clone; no
/// statistics stick.
pub fn evaluate_window_task(
    candidate: &SkillNetwork,
    wt: &WindowTask,
    recipes: &RecipeTable,
    run_seed: u64,
    step_budget: u64,
    temperature: f64,
) -> bool {
    let mut net = candidate.clone();
    let world = reset_world(wt.world_seed, recipes);
    let mut rng = stream(run_seed, "validate", wt.world_seed);
    let cfg = PlannerConfig {
        temperature,
        max_depth: 16,
        rng_seed: run_seed,
    };
    let mut oracle = OracleOperator;
    let mut adapter = ForwardAdapter {
        backend: &mut oracle,
        recipes,
    };
    let Ok(result) = crate::planner::plan(&wt.task.goal, &net, &world, &mut adapter, &cfg, &mut rng)
    else {
        return false;
    };
    for program in &result.pending_skills {
        if !net.contains(&program.name) && net.insert_skill(program.clone(), &recipes.vocabulary()).is_err() {
            return false;
        }
    }
    if result.plan.steps.is_empty() {
        return check_goal(&wt.task, &world);
    }
    let context = SynthesisContext {
        task: format!("validate_{}", wt.task.name),
        goal: wt.task.goal.iter().cloned().collect(),
        existing: net.ids().cloned().collect(),
    };
    let mut oracle2 = OracleOperator;
    let mut composer = ComposerAdapter {
        backend: &mut oracle2,
    };
    let Ok(Some(root)) =
        synthesize_composite(&result.plan, &context, &mut composer, &mut net, &recipes.vocabulary())
    else {
        return false;
    };
    match execute_skill(&root, &Bindings::new(), &world, &net, recipes, step_budget) {
        Ok((_, _, _, final_world)) => check_goal(&wt.task, &final_world),
        Err(_) => false,
    }
}

fn render_message(message: &crate::executor::FeedbackMessage) -> String {
    serde_json::to_string(message).expect("message serializes")
}

pub fn hash_bytes(bytes: &[u8]) -> u64 {
    // FNV-1a, stable across runs and platforms
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Re-executes a recorded run from its logged config and asserts equality at
/// every episode boundary. Divergence reports the first differing episode.
pub fn replay(log_text: &str) -> Result<Metrics, HarnessError> {
    let lines = parse_log(log_text).map_err(|e| HarnessError::Log(e.to_string()))?;
    let Some(LogLine::Config { config }) = lines.first() else {
        return Err(HarnessError::Log("log does not start with a config line".into()));
    };
    let config: RunConfig =
        serde_json::from_value(config.clone()).map_err(|e| HarnessError::Log(e.to_string()))?;
    let recorded: Vec<&EpisodeRecord> = lines
        .iter()
        .filter_map(|l| match l {
            LogLine::Episode { record } => Some(record),
            _ => None,
        })
        .collect();
    if recorded.is_empty() {
        return Err(HarnessError::Log("log carries no episodes".into()));
    }
    let rerun = run_curriculum(&config)?;
    for (i, fresh) in rerun.metrics.episodes.iter().enumerate() {
        match recorded.get(i) {
            Some(old) if *old == fresh => {}
            Some(old) => {
                let detail = first_difference(old, fresh);
                return Err(HarnessError::Divergence {
                    episode: fresh.index,
                    detail,
                });
            }
            None => {
                return Err(HarnessError::Divergence {
                    episode: fresh.index,
                    detail: "log ends early (truncated?)".into(),
                })
            }
        }
    }
    if recorded.len() > rerun.metrics.episodes.len() {
        return Err(HarnessError::Divergence {
            episode: rerun.metrics.episodes.len() as u64,
            detail: "log has extra episodes".into(),
        });
    }
    Ok(rerun.metrics)
}

fn first_difference(old: &EpisodeRecord, new: &EpisodeRecord) -> String {
    if old.delta != new.delta {
        return format!("delta {} vs {}", old.delta, new.delta);
    }
    if old.gate_skipped != new.gate_skipped || old.gate_applied != new.gate_applied {
        return "gate decisions differ".into();
    }
    if old.network_hash != new.network_hash {
        return "network hash differs".into();
    }
    "records differ".into()
}
