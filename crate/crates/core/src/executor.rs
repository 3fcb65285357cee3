//! Skill interpretation with trace construction, composite synthesis, and
//! empirical condition calibration.
//!
//! Every skill invocation opens a trace frame with symbolic state snapshots
//! taken before and after. Execution is fail-fast: the first primitive
//! failure marks the innermost frame and aborts the remaining statements of
//! every enclosing frame — no fallbacks, failures surface loudly. A frame
//! succeeds only if its body completes and its declared postconditions hold
//! in the resulting state.
//!
//! Declared preconditions are not enforced at runtime; they are planner
//! annotations. A bad composition therefore fails concretely (a primitive
//! refusal or a post violation), which is exactly the feedback the optimizer
//! assigns credit over.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{
    eval_condition, eval_expr, AstPath, Bindings, Condition, ParamKind, PathStep, SkillProgram,
    Statement, Value, Vocabulary,
};
use crate::network::{NetworkError, NodeId, SkillNetwork};
use crate::planner::{Plan, PlanStep};
use crate::world::{step_primitive, PrimitiveFeedback, RecipeTable, WorldState};

/// Primitive steps one episode may spend before aborting.
pub const DEFAULT_STEP_BUDGET: u64 = 512;

/// Invocation nesting bound; a cycle of calls aborts the episode instead of
/// recursing without limit (calls consume no step budget).
pub const MAX_FRAME_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    Failed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub skill: NodeId,
    pub bindings: Bindings,
    pub sigma_pre: WorldState,
    pub sigma_post: WorldState,
    pub status: Status,
    /// Path of the failing statement within this skill's body, when the
    /// failure is local to this frame.
    pub failing_path: Option<AstPath>,
    /// Primitive feedback of a local failure.
    pub feedback: Option<PrimitiveFeedback>,
    /// Instantiated postcondition atoms that did not hold at frame exit.
    pub violated_post: Vec<Condition>,
    pub children: Vec<TraceEntry>,
}

impl TraceEntry {
    pub fn succeeded(&self) -> bool {
        self.status == Status::Success
    }

    /// Depth-first walk over this frame and all nested frames.
    pub fn walk<'a>(&'a self, visit: &mut dyn FnMut(&'a TraceEntry)) {
        visit(self);
        for child in &self.children {
            child.walk(visit);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub root: TraceEntry,
    pub episode: u64,
    pub task: String,
}

impl Trace {
    /// Every skill id appearing in the trace.
    pub fn skills(&self) -> Vec<NodeId> {
        let mut ids = Vec::new();
        self.root.walk(&mut |entry| ids.push(entry.skill.clone()));
        ids.sort();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeedbackMessage {
    Primitive {
        skill: NodeId,
        path: AstPath,
        feedback: PrimitiveFeedback,
    },
    ViolatedPostcondition {
        skill: NodeId,
        atom: String,
    },
    AssertFailed {
        skill: NodeId,
        path: AstPath,
        atom: String,
    },
    EvalError {
        skill: NodeId,
        path: AstPath,
        message: String,
    },
    MissingCallee {
        skill: NodeId,
        path: AstPath,
        callee: NodeId,
    },
    BudgetExhausted {
        limit: u64,
    },
}

/// Aggregated execution feedback. `delta` is the success flag; a successful
/// episode carries no error messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub delta: bool,
    pub messages: Vec<FeedbackMessage>,
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("unknown skill `{0}`")]
    UnknownSkill(NodeId),
    #[error("skill `{skill}` binding mismatch: {message}")]
    BindingMismatch { skill: NodeId, message: String },
    #[error("world error: {0}")]
    World(#[from] crate::world::WorldError),
    #[error("composite synthesis failed: {0}")]
    Synthesis(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Interprets a skill against the world, producing the execution trace and
/// the final state. Primitive steps across the whole episode are bounded by
/// `budget`; exhaustion aborts the episode (status, not an error).
pub fn execute_skill(
    id: &str,
    bindings: &Bindings,
    state: &WorldState,
    net: &SkillNetwork,
    recipes: &RecipeTable,
    budget: u64,
) -> Result<(Feedback, bool, Trace, WorldState), ExecError> {
    let node = net
        .node(id)
        .ok_or_else(|| ExecError::UnknownSkill(id.to_string()))?;
    let env = bind_params(&node.program, bindings)?;

    let mut interp = Interp {
        net,
        recipes,
        budget,
        steps_used: 0,
        messages: Vec::new(),
    };
    let mut world = state.clone();
    let root = interp.run_frame(id, env, &mut world, 0);
    let delta = root.succeeded();
    let feedback = Feedback {
        delta,
        messages: interp.messages,
    };
    let trace = Trace {
        root,
        episode: 0,
        task: String::new(),
    };
    Ok((feedback, delta, trace, world))
}

fn bind_params(program: &SkillProgram, provided: &Bindings) -> Result<Bindings, ExecError> {
    let mut env = Bindings::new();
    for param in &program.params {
        match provided.get(&param.name).cloned().or(param.default.clone()) {
            Some(value) => {
                let ok = matches!(
                    (&value, param.kind),
                    (Value::Int(_), ParamKind::Int)
                        | (Value::Kind(_), ParamKind::Item)
                        | (Value::Kind(_), ParamKind::Station)
                );
                if !ok {
                    return Err(ExecError::BindingMismatch {
                        skill: program.name.clone(),
                        message: format!("`{}` does not match kind {}", param.name, param.kind.keyword()),
                    });
                }
                env.insert(param.name.clone(), value);
            }
            None => {
                return Err(ExecError::BindingMismatch {
                    skill: program.name.clone(),
                    message: format!("missing binding for `{}`", param.name),
                })
            }
        }
    }
    Ok(env)
}

enum Flow {
    Continue,
    Fail,
    Abort,
}

struct Interp<'a> {
    net: &'a SkillNetwork,
    recipes: &'a RecipeTable,
    budget: u64,
    steps_used: u64,
    messages: Vec<FeedbackMessage>,
}

impl Interp<'_> {
    fn run_frame(
        &mut self,
        id: &str,
        env: Bindings,
        world: &mut WorldState,
        depth: usize,
    ) -> TraceEntry {
        let program = &self.net.node(id).expect("caller checked").program;
        let mut entry = TraceEntry {
            skill: id.to_string(),
            bindings: env.clone(),
            sigma_pre: world.clone(),
            sigma_post: world.clone(),
            status: Status::Success,
            failing_path: None,
            feedback: None,
            violated_post: Vec::new(),
            children: Vec::new(),
        };
        if depth >= MAX_FRAME_DEPTH {
            self.messages.push(FeedbackMessage::EvalError {
                skill: id.to_string(),
                path: AstPath::root(),
                message: format!("invocation nesting exceeds {MAX_FRAME_DEPTH} frames"),
            });
            entry.status = Status::Aborted;
            return entry;
        }
        let mut env = env;
        let flow = self.exec_block(
            &program.body.clone(),
            &AstPath::root(),
            &mut env,
            world,
            &mut entry,
            depth,
        );
        match flow {
            Flow::Continue => {
                // frame success additionally requires the declared post
                for atom in program.post.clone().iter() {
                    let instantiated = crate::dsl::subst_condition(atom, &env);
                    if !eval_condition(&instantiated, &env, world).unwrap_or(false) {
                        entry.violated_post.push(instantiated.clone());
                        self.messages.push(FeedbackMessage::ViolatedPostcondition {
                            skill: id.to_string(),
                            atom: crate::dsl::print_condition(&instantiated),
                        });
                    }
                }
                if !entry.violated_post.is_empty() {
                    entry.status = Status::Failed;
                }
            }
            Flow::Fail => entry.status = Status::Failed,
            Flow::Abort => entry.status = Status::Aborted,
        }
        entry.sigma_post = world.clone();
        entry
    }

    #[allow(clippy::too_many_arguments)]
    fn exec_block(
        &mut self,
        body: &[Statement],
        prefix: &AstPath,
        env: &mut Bindings,
        world: &mut WorldState,
        entry: &mut TraceEntry,
        depth: usize,
    ) -> Flow {
        for (i, stmt) in body.iter().enumerate() {
            let path = prefix.clone().push(PathStep::Stmt(i));
            match self.exec_statement(stmt, &path, env, world, entry, depth) {
                Flow::Continue => {}
                other => return other,
            }
        }
        Flow::Continue
    }

    #[allow(clippy::too_many_arguments)]
    fn exec_statement(
        &mut self,
        stmt: &Statement,
        path: &AstPath,
        env: &mut Bindings,
        world: &mut WorldState,
        entry: &mut TraceEntry,
        depth: usize,
    ) -> Flow {
        match stmt {
            Statement::CallPrimitive { name, args } => {
                if self.steps_used >= self.budget {
                    self.messages
                        .push(FeedbackMessage::BudgetExhausted { limit: self.budget });
                    return Flow::Abort;
                }
                let mut values = Vec::with_capacity(args.len());
                for arg in args {
                    match eval_expr(arg, env, world) {
                        Ok(v) => values.push(v),
                        Err(e) => {
                            self.fail_local(entry, path, None, e.to_string());
                            return Flow::Fail;
                        }
                    }
                }
                self.steps_used += 1;
                match step_primitive(world, name, &values, self.recipes) {
                    Ok((next, feedback, ok)) => {
                        *world = next;
                        if ok {
                            Flow::Continue
                        } else {
                            self.messages.push(FeedbackMessage::Primitive {
                                skill: entry.skill.clone(),
                                path: path.clone(),
                                feedback: feedback.clone(),
                            });
                            entry.failing_path = Some(path.clone());
                            entry.feedback = Some(feedback);
                            Flow::Fail
                        }
                    }
                    Err(e) => {
                        self.fail_local(entry, path, None, e.to_string());
                        Flow::Fail
                    }
                }
            }
            Statement::CallSkill { name, args } => {
                let Some(node) = self.net.node(name) else {
                    self.messages.push(FeedbackMessage::MissingCallee {
                        skill: entry.skill.clone(),
                        path: path.clone(),
                        callee: name.clone(),
                    });
                    entry.failing_path = Some(path.clone());
                    return Flow::Fail;
                };
                let mut values = Vec::with_capacity(args.len());
                for arg in args {
                    match eval_expr(arg, env, world) {
                        Ok(v) => values.push(v),
                        Err(e) => {
                            self.fail_local(entry, path, None, e.to_string());
                            return Flow::Fail;
                        }
                    }
                }
                let params = &node.program.params;
                if params.len() != values.len() {
                    self.fail_local(
                        entry,
                        path,
                        None,
                        format!(
                            "call to `{name}` has {} args, expected {}",
                            values.len(),
                            params.len()
                        ),
                    );
                    return Flow::Fail;
                }
                let child_env: Bindings = params
                    .iter()
                    .map(|p| p.name.clone())
                    .zip(values)
                    .collect();
                let child = self.run_frame(name, child_env, world, depth + 1);
                let child_status = child.status;
                entry.children.push(child);
                match child_status {
                    Status::Success => Flow::Continue,
                    Status::Failed => Flow::Fail,
                    Status::Aborted => Flow::Abort,
                }
            }
            Statement::If {
                cond,
                then_body,
                else_body,
            } => match eval_condition(cond, env, world) {
                Ok(true) => {
                    let mut scope = env.clone();
                    self.exec_block(then_body, &path.clone().push(PathStep::Then), &mut scope, world, entry, depth)
                }
                Ok(false) => {
                    let mut scope = env.clone();
                    self.exec_block(else_body, &path.clone().push(PathStep::Else), &mut scope, world, entry, depth)
                }
                Err(e) => {
                    self.fail_local(entry, path, None, e.to_string());
                    Flow::Fail
                }
            },
            Statement::Repeat { count, body } => {
                let n = match eval_expr(count, env, world) {
                    Ok(Value::Int(n)) if n >= 0 => n,
                    Ok(Value::Int(n)) => {
                        self.fail_local(entry, path, None, format!("repeat bound {n} is negative"));
                        return Flow::Fail;
                    }
                    Ok(Value::Kind(k)) => {
                        self.fail_local(entry, path, None, format!("repeat bound `{k}` is not an integer"));
                        return Flow::Fail;
                    }
                    Err(e) => {
                        self.fail_local(entry, path, None, e.to_string());
                        return Flow::Fail;
                    }
                };
                for _ in 0..n {
                    let mut scope = env.clone();
                    match self.exec_block(body, &path.clone().push(PathStep::Loop), &mut scope, world, entry, depth)
                    {
                        Flow::Continue => {}
                        other => return other,
                    }
                }
                Flow::Continue
            }
            Statement::Let { var, value } => match eval_expr(value, env, world) {
                Ok(Value::Int(n)) => {
                    env.insert(var.clone(), Value::Int(n));
                    Flow::Continue
                }
                Ok(Value::Kind(k)) => {
                    self.fail_local(entry, path, None, format!("let binds `{k}`, not an integer"));
                    Flow::Fail
                }
                Err(e) => {
                    self.fail_local(entry, path, None, e.to_string());
                    Flow::Fail
                }
            },
            Statement::Assert { cond } => match eval_condition(cond, env, world) {
                Ok(true) => Flow::Continue,
                Ok(false) => {
                    let instantiated = crate::dsl::subst_condition(cond, env);
                    self.messages.push(FeedbackMessage::AssertFailed {
                        skill: entry.skill.clone(),
                        path: path.clone(),
                        atom: crate::dsl::print_condition(&instantiated),
                    });
                    entry.failing_path = Some(path.clone());
                    Flow::Fail
                }
                Err(e) => {
                    self.fail_local(entry, path, None, e.to_string());
                    Flow::Fail
                }
            },
        }
    }

    fn fail_local(
        &mut self,
        entry: &mut TraceEntry,
        path: &AstPath,
        feedback: Option<PrimitiveFeedback>,
        message: String,
    ) {
        self.messages.push(FeedbackMessage::EvalError {
            skill: entry.skill.clone(),
            path: path.clone(),
            message,
        });
        entry.failing_path = Some(path.clone());
        if let Some(fb) = feedback {
            entry.feedback = Some(fb);
        }
    }
}

/// Record every non-alias frame's outcome into the network. Alias frames are
/// skipped: their canonical target's own nested frame records once.
pub fn record_trace_outcomes(net: &mut SkillNetwork, trace: &Trace) {
    let mut outcomes = Vec::new();
    trace.root.walk(&mut |entry| {
        outcomes.push((entry.skill.clone(), entry.succeeded()));
    });
    for (id, success) in outcomes {
        let is_alias = net.node(&id).map(|n| n.is_alias()).unwrap_or(false);
        if !is_alias {
            let _ = net.record_outcome(&id, success);
        }
    }
}

/// What composite synthesis needs besides the plan itself.
#[derive(Debug, Clone)]
pub struct SynthesisContext {
    pub task: String,
    pub goal: Vec<Condition>,
    /// Names already taken in the network.
    pub existing: Vec<NodeId>,
}

/// Pluggable composite synthesizer (the CodeGen operator). The oracle and
/// the HTTP backend both implement this; responses are skill source text.
pub trait ComposerBackend {
    fn synthesize(&mut self, request: &SynthesisRequest) -> Result<String, String>;
}

/// Self-contained synthesis request; everything a remote operator needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisRequest {
    pub task: String,
    pub name_hint: String,
    /// Goal atoms, printed in the condition syntax.
    pub goal: Vec<String>,
    pub steps: Vec<SynthesisStep>,
    /// Pre atoms nothing inside the plan establishes (the composite's pre).
    pub unmet: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisStep {
    pub skill: String,
    /// Argument expressions in source syntax, already ground.
    pub args: Vec<String>,
    pub pre: Vec<String>,
    pub post: Vec<String>,
}

/// Distills a plan into a composite skill and inserts it with links to its
/// children. Returns the episode's root skill id:
/// - an empty plan means the goal already holds (`None`);
/// - a single step whose post entails the whole goal is used directly;
/// - an existing composite with an identical body is reused;
/// - otherwise the codegen backend emits a new skill.
pub fn synthesize_composite(
    plan: &Plan,
    context: &SynthesisContext,
    codegen: &mut dyn ComposerBackend,
    net: &mut SkillNetwork,
    base_vocab: &Vocabulary,
) -> Result<Option<NodeId>, ExecError> {
    assert!(plan.unground.is_empty(), "grounded plans only");
    if plan.steps.is_empty() {
        return Ok(None);
    }
    if plan.steps.len() == 1 {
        let step = &plan.steps[0];
        if let Some(node) = net.node(&step.skill) {
            let covers = context
                .goal
                .iter()
                .all(|atom| crate::dsl::bind_for_goal(&node.program, atom).is_some());
            if covers && node.program.params.is_empty() {
                return Ok(Some(step.skill.clone()));
            }
        }
    }

    let body = plan_body(&plan.steps, net);
    // reuse an existing composite with the same body and goal
    for (id, node) in net.nodes() {
        if !node.is_alias()
            && node.program.body == body
            && node.program.params.is_empty()
            && context
                .goal
                .iter()
                .all(|atom| crate::dsl::entails(&node.program.post, atom))
        {
            return Ok(Some(id.clone()));
        }
    }

    let name = fresh_name(&context.task, &context.existing, net);
    let request = build_request(plan, context, &name, net);
    let source = codegen
        .synthesize(&request)
        .map_err(ExecError::Synthesis)?;
    let program = crate::dsl::parse_skill(&source)
        .map_err(|e| ExecError::Synthesis(format!("emitted source does not parse: {e}")))?;
    let id = program.name.clone();
    net.insert_skill(program, base_vocab)?;
    Ok(Some(id))
}

pub fn build_request(
    plan: &Plan,
    context: &SynthesisContext,
    name_hint: &str,
    net: &SkillNetwork,
) -> SynthesisRequest {
    let lookup = |id: &str| net.node(id).map(|n| n.program.clone());
    let unmet = crate::planner::unmet_requirements(&plan.steps, &lookup, None);
    SynthesisRequest {
        task: context.task.clone(),
        name_hint: name_hint.to_string(),
        goal: context.goal.iter().map(crate::dsl::print_condition).collect(),
        steps: plan
            .steps
            .iter()
            .map(|step| {
                let program = net.node(&step.skill).map(|n| &n.program);
                let (pre, post) = program
                    .map(|p| {
                        (
                            crate::dsl::subst_condition_set(&p.pre, &step.bindings)
                                .iter()
                                .map(crate::dsl::print_condition)
                                .collect(),
                            crate::dsl::subst_condition_set(&p.post, &step.bindings)
                                .iter()
                                .map(crate::dsl::print_condition)
                                .collect(),
                        )
                    })
                    .unwrap_or((Vec::new(), Vec::new()));
                SynthesisStep {
                    skill: step.skill.clone(),
                    args: step_args(step, net)
                        .iter()
                        .map(crate::dsl::print_expr)
                        .collect(),
                    pre,
                    post,
                }
            })
            .collect(),
        unmet: unmet.iter().map(crate::dsl::print_condition).collect(),
    }
}

/// The composite body a plan denotes: one call per step, argument order
/// following each callee's parameter order.
pub fn plan_body(steps: &[PlanStep], net: &SkillNetwork) -> Vec<Statement> {
    steps
        .iter()
        .map(|step| Statement::CallSkill {
            name: step.skill.clone(),
            args: step_args(step, net),
        })
        .collect()
}

fn step_args(step: &PlanStep, net: &SkillNetwork) -> Vec<crate::dsl::Expr> {
    // argument order follows the callee's parameter order
    let Some(node) = net.node(&step.skill) else {
        return Vec::new();
    };
    node.program
        .params
        .iter()
        .map(|p| match step.bindings.get(&p.name) {
            Some(Value::Int(n)) => crate::dsl::Expr::Int(*n),
            Some(Value::Kind(k)) => crate::dsl::Expr::Ident(k.clone()),
            None => crate::dsl::Expr::Ident(p.name.clone()),
        })
        .collect()
}

fn fresh_name(task: &str, existing: &[NodeId], net: &SkillNetwork) -> String {
    let base = format!("do_{}", task.replace([' ', '-'], "_"));
    if !net.contains(&base) && !existing.contains(&base) {
        return base;
    }
    for version in 2.. {
        let candidate = format!("{base}_v{version}");
        if !net.contains(&candidate) && !existing.contains(&candidate) {
            return candidate;
        }
    }
    unreachable!()
}

/// Empirical condition calibration from an episode trace.
///
/// For each skill with successful frames, the per-item net outflow
/// (σ_pre minus σ_post, when positive) is compared with what the declared
/// preconditions promise under that frame's bindings. An item whose observed
/// requirement exceeds the declared one for three consecutive calibrated
/// episodes gets its precondition raised to the observed requirement.
pub fn calibrate_conditions(
    net: &mut SkillNetwork,
    id: &str,
    trace: &Trace,
    base_vocab: &Vocabulary,
) -> Result<(), ExecError> {
    let node = net
        .node(id)
        .ok_or_else(|| ExecError::UnknownSkill(id.to_string()))?;
    let program = node.program.clone();

    let mut entries = Vec::new();
    trace.root.walk(&mut |entry| {
        if entry.skill == id && entry.succeeded() {
            entries.push(entry.clone());
        }
    });
    if entries.is_empty() {
        return Ok(());
    }

    // worst observed requirement per item across this episode's frames
    let mut observed: std::collections::BTreeMap<String, i64> = Default::default();
    let mut declared_floor: std::collections::BTreeMap<String, i64> = Default::default();
    for entry in &entries {
        for (item, &before) in &entry.sigma_pre.inventory {
            let after = entry.sigma_post.count(item);
            let consumed = before - after;
            if consumed > 0 {
                let declared = declared_need(&program, item, &entry.bindings);
                if consumed > declared {
                    let o = observed.entry(item.clone()).or_insert(0);
                    *o = (*o).max(consumed);
                    let f = declared_floor.entry(item.clone()).or_insert(declared);
                    *f = (*f).max(declared);
                }
            }
        }
    }

    let node = net.node_mut(id).expect("checked");
    let mut to_raise = Vec::new();
    // bump streaks for contradicted items, reset the rest
    let contradicted: Vec<String> = observed.keys().cloned().collect();
    node.calibration.retain(|item, _| contradicted.contains(item));
    for item in &contradicted {
        let streak = node.calibration.entry(item.clone()).or_insert(0);
        *streak += 1;
        if *streak >= 3 {
            to_raise.push((item.clone(), observed[item]));
        }
    }
    for (item, _) in &to_raise {
        node.calibration.remove(item);
    }

    if to_raise.is_empty() {
        return Ok(());
    }
    let mut program = program;
    for (item, need) in to_raise {
        raise_pre_atom(&mut program, &item, need);
    }
    net.set_program(id, program, base_vocab)?;
    Ok(())
}

fn declared_need(program: &SkillProgram, item: &str, bindings: &Bindings) -> i64 {
    let state = NullState;
    program
        .pre
        .iter()
        .filter_map(|atom| match atom {
            Condition::InventoryAtLeast { item: ie, count } => {
                let kind = crate::dsl::eval_expr(ie, bindings, &state).ok()?;
                if kind.as_kind() == Some(item) {
                    crate::dsl::eval_expr(count, bindings, &state)
                        .ok()
                        .and_then(|v| v.as_int())
                } else {
                    None
                }
            }
            _ => None,
        })
        .max()
        .unwrap_or(0)
}

fn raise_pre_atom(program: &mut SkillProgram, item: &str, need: i64) {
    let state = NullState;
    let empty = Bindings::new();
    let mut atoms: Vec<Condition> = program.pre.iter().cloned().collect();
    atoms.retain(|atom| match atom {
        Condition::InventoryAtLeast { item: ie, count } => {
            let same = crate::dsl::eval_expr(ie, &empty, &state)
                .ok()
                .and_then(|v| v.as_kind().map(str::to_string))
                .as_deref()
                == Some(item);
            // keep parameterized counts; replace only dominated literals
            !(same && matches!(count, crate::dsl::Expr::Int(n) if *n < need))
        }
        _ => true,
    });
    atoms.push(Condition::inv(item, need));
    program.pre = crate::dsl::ConditionSet::new(atoms);
}

/// State query that answers nothing; for evaluating ground expressions.
struct NullState;

impl crate::dsl::StateQuery for NullState {
    fn item_count(&self, _item: &str) -> i64 {
        0
    }
    fn has_station(&self, _station: &str) -> bool {
        false
    }
    fn tool_tier(&self) -> i64 {
        0
    }
    fn capacity_for(&self, _item: &str) -> i64 {
        0
    }
}
