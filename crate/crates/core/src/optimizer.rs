//! Two-phase skill optimization.
//!
//! Phase I walks the failure top-down along the execution trace: each
//! reflected skill yields a gradient (localized edit proposals) plus feedback
//! for the children it implicates. No program changes during this phase, and
//! skills absent from the trace are never touched.
//!
//! Phase II walks the pending subgraph bottom-up. Each skill's pending edits
//! are applied only if a seeded draw clears the maturity gate
//! P(update) = (1-ε)·σ(γ(0.6-V)) + ε, with γ = 5 and ε = 0.1: reliable
//! skills stabilize while uncertain ones stay plastic, and the ε floor keeps
//! even mature skills reachable under repeated failures. A five-slot
//! momentum buffer per skill suppresses edits that invert a recent edit at
//! the same path. Gated skips still record their proposal in the buffer.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::rngs::StdRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{
    apply_edit, print_condition, subst_condition_set, AstPath, Bindings, CallTarget, Condition,
    Edit, Expr, SkillProgram, Statement, Vocabulary,
};
use crate::executor::{Feedback, Status, Trace, TraceEntry};
use crate::network::{NodeId, SkillNetwork};
use crate::operator::{
    provider_index, recipe_summary, CalleeView, ChildFrameView, FeedbackView, FrameView,
    IssueView, OperatorBackend, ReflectRequest, Shortage, ViolationView,
};
use crate::world::{PrimitiveFeedback, RecipeTable};

pub const GATE_GAMMA: f64 = 5.0;
pub const GATE_EPSILON: f64 = 0.1;
pub const GATE_PIVOT: f64 = 0.6;
pub const MOMENTUM_CAPACITY: usize = 5;

/// Probability that a skill's pending edits are applied, given its value.
/// Strictly decreasing in V; bounded inside (ε, 1) for finite V.
pub fn gate_probability(v: f64) -> f64 {
    (1.0 - GATE_EPSILON) * sigmoid(GATE_GAMMA * (GATE_PIVOT - v)) + GATE_EPSILON
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A localized repair proposal for one skill.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gradient {
    pub target: NodeId,
    pub issues: Vec<IssueView>,
    pub child_feedback: BTreeMap<NodeId, FeedbackView>,
    pub reasoning: String,
}

pub type GradientMap = BTreeMap<NodeId, Gradient>;
pub type FeedbackMap = BTreeMap<NodeId, FeedbackView>;

/// The trace-induced subgraph over the skills that received gradients.
#[derive(Debug, Clone, Default)]
pub struct PendingSubgraph {
    pub root: NodeId,
    pub nodes: BTreeSet<NodeId>,
    pub edges: BTreeSet<(NodeId, NodeId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub skill: NodeId,
    pub applied: Vec<String>,
    pub skipped: bool,
    pub summary: String,
    pub postcondition_changes: Vec<String>,
    /// Application order stamp within this optimization pass.
    pub seq: u64,
}

/// Rolling per-skill window of the five most recent proposals, for
/// contradictory-edit suppression.
#[derive(Debug, Clone, Default)]
pub struct MomentumBuffer {
    per_skill: BTreeMap<NodeId, VecDeque<BufferedProposal>>,
}

#[derive(Debug, Clone)]
pub struct BufferedProposal {
    pub deltas: Vec<EditDelta>,
}

/// The direction of an applied (or proposed) edit, for inversion checks.
#[derive(Debug, Clone, PartialEq)]
pub enum EditDelta {
    Constant {
        path: AstPath,
        from: i64,
        to: i64,
    },
    Inserted {
        path: AstPath,
    },
    Removed {
        path: AstPath,
    },
    Replaced {
        path: AstPath,
        old_callee: CallTarget,
        old_args: Vec<Expr>,
        new_callee: CallTarget,
        new_args: Vec<Expr>,
    },
}

impl MomentumBuffer {
    pub fn push(&mut self, skill: &str, proposal: BufferedProposal) {
        let ring = self.per_skill.entry(skill.to_string()).or_default();
        ring.push_back(proposal);
        while ring.len() > MOMENTUM_CAPACITY {
            ring.pop_front();
        }
    }

    pub fn proposals(&self, skill: &str) -> impl Iterator<Item = &BufferedProposal> {
        self.per_skill.get(skill).into_iter().flatten()
    }

    pub fn len(&self, skill: &str) -> usize {
        self.per_skill.get(skill).map(|r| r.len()).unwrap_or(0)
    }

    /// Does this delta invert one buffered within the window?
    pub fn inverts(&self, skill: &str, delta: &EditDelta) -> bool {
        self.proposals(skill)
            .flat_map(|p| p.deltas.iter())
            .any(|buffered| deltas_invert(buffered, delta))
    }
}

fn deltas_invert(buffered: &EditDelta, new: &EditDelta) -> bool {
    match (buffered, new) {
        (
            EditDelta::Constant {
                path: p1,
                from: f1,
                to: t1,
            },
            EditDelta::Constant {
                path: p2,
                from: f2,
                to: t2,
            },
        ) => p1 == p2 && (t1 - f1).signum() != 0 && (t2 - f2).signum() == -(t1 - f1).signum(),
        (EditDelta::Inserted { path: p1 }, EditDelta::Removed { path: p2 })
        | (EditDelta::Removed { path: p1 }, EditDelta::Inserted { path: p2 }) => p1 == p2,
        (
            EditDelta::Replaced {
                path: p1,
                old_callee,
                old_args,
                ..
            },
            EditDelta::Replaced {
                path: p2,
                new_callee,
                new_args,
                ..
            },
        ) => p1 == p2 && old_callee == new_callee && old_args == new_args,
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Phase I

/// Top-down feedback backpropagation. Reflect runs for every implicated
/// frame, producing the gradient map, feedback map, and pending subgraph.
/// The network is read-only here: no skill code changes in this phase.
pub fn backprop_feedback(
    root: &str,
    _feedback: &Feedback,
    trace: &Trace,
    net: &SkillNetwork,
    recipes: &RecipeTable,
    operator: &mut dyn OperatorBackend,
) -> (GradientMap, FeedbackMap, PendingSubgraph) {
    let mut gradients = GradientMap::new();
    let mut feedbacks = FeedbackMap::new();
    let mut subgraph = PendingSubgraph {
        root: root.to_string(),
        ..Default::default()
    };

    let recipes_summary = recipe_summary(recipes);
    let providers = provider_index(net);

    let mut queue: VecDeque<(&TraceEntry, FeedbackView)> = VecDeque::new();
    queue.push_back((&trace.root, FeedbackView::FrameFailed));

    while let Some((frame, fb)) = queue.pop_front() {
        let id = frame.skill.clone();
        if gradients.contains_key(&id) {
            continue; // first feedback wins; each skill reflects once
        }
        let Some(node) = net.node(&id) else { continue };
        let request = ReflectRequest {
            skill: id.clone(),
            source: crate::dsl::print_skill(&node.program),
            feedback: fb.clone(),
            frame: frame_view(frame, net),
            callees: callee_views(&node.program, net),
            recipes: recipes_summary.clone(),
            providers: providers.clone(),
        };
        let response = match operator.reflect(&request) {
            Ok(r) => r,
            Err(_) => continue, // operator failures leave the skill untouched
        };
        subgraph.nodes.insert(id.clone());
        feedbacks.insert(id.clone(), fb.clone());
        let mut child_feedback = BTreeMap::new();
        for child_issue in &response.child_issues {
            let (child_fb, want_failed) = match &child_issue.under_delivered {
                Some(ud) => (
                    FeedbackView::UnderDelivered {
                        item: ud.item.clone(),
                        deficit: ud.deficit,
                        weight: child_issue.weight,
                    },
                    false,
                ),
                None => (FeedbackView::FrameFailed, true),
            };
            let target = if want_failed {
                frame
                    .children
                    .iter()
                    .find(|c| c.skill == child_issue.child_skill && !c.succeeded())
            } else {
                frame
                    .children
                    .iter()
                    .rev()
                    .find(|c| c.skill == child_issue.child_skill && c.succeeded())
            };
            if let Some(child_frame) = target {
                subgraph
                    .edges
                    .insert((id.clone(), child_issue.child_skill.clone()));
                child_feedback.insert(child_issue.child_skill.clone(), child_fb.clone());
                queue.push_back((child_frame, child_fb));
            }
        }
        gradients.insert(
            id.clone(),
            Gradient {
                target: id,
                issues: response.self_issues,
                child_feedback,
                reasoning: response.reasoning,
            },
        );
    }

    (gradients, feedbacks, subgraph)
}

fn frame_view(frame: &TraceEntry, net: &SkillNetwork) -> FrameView {
    FrameView {
        status: status_str(frame.status).to_string(),
        bindings: frame.bindings.clone(),
        failing_path: frame.failing_path.clone(),
        feedback: frame.feedback.clone(),
        violations: frame
            .violated_post
            .iter()
            .map(|atom| violation_view(atom, frame))
            .collect(),
        children: frame
            .children
            .iter()
            .map(|child| ChildFrameView {
                skill: child.skill.clone(),
                status: status_str(child.status).to_string(),
                post: instantiated_post(child, net),
                shortage: if child.succeeded() {
                    None
                } else {
                    Some(terminal_shortage(child))
                },
            })
            .collect(),
    }
}

fn status_str(status: Status) -> &'static str {
    match status {
        Status::Success => "success",
        Status::Failed => "failed",
        Status::Aborted => "aborted",
    }
}

fn instantiated_post(frame: &TraceEntry, net: &SkillNetwork) -> Vec<String> {
    net.node(&frame.skill)
        .map(|node| {
            subst_condition_set(&node.program.post, &frame.bindings)
                .iter()
                .map(print_condition)
                .collect()
        })
        .unwrap_or_default()
}

fn violation_view(atom: &Condition, frame: &TraceEntry) -> ViolationView {
    let mut view = ViolationView {
        atom: print_condition(atom),
        item: None,
        need: 0,
        have: 0,
        station: None,
        tier: None,
    };
    match atom {
        Condition::InventoryAtLeast { item, count } => {
            if let Expr::Ident(kind) = item {
                view.item = Some(kind.clone());
                view.have = frame.sigma_post.count(kind);
            }
            let env = Bindings::new();
            if let Ok(crate::dsl::Value::Int(n)) =
                crate::dsl::eval_expr(count, &env, &frame.sigma_post)
            {
                view.need = n;
            }
        }
        Condition::StationPlaced { station } => {
            if let Expr::Ident(kind) = station {
                view.station = Some(kind.clone());
            }
        }
        Condition::ToolTierAtLeast { tier } => view.tier = Some(*tier),
        Condition::ParamCompare { .. } => {}
    }
    view
}

/// The deepest concrete evidence under a failed frame.
pub fn terminal_shortage(frame: &TraceEntry) -> Shortage {
    if let Some(feedback) = &frame.feedback {
        return match feedback {
            PrimitiveFeedback::InsufficientItem { item, need, have }
            | PrimitiveFeedback::FieldDepleted { item, need, have } => Shortage::Item {
                item: item.clone(),
                need: *need,
                have: *have,
            },
            PrimitiveFeedback::MissingStation { station } => Shortage::Station {
                station: station.clone(),
            },
            PrimitiveFeedback::ToolTierTooLow { required, .. } => Shortage::Tier {
                required: *required,
            },
            PrimitiveFeedback::DestinationFull { item, .. } => Shortage::Capacity {
                item: item.clone(),
            },
            other => Shortage::Other {
                message: other.to_string(),
            },
        };
    }
    if let Some(child) = frame.children.iter().find(|c| !c.succeeded()) {
        return terminal_shortage(child);
    }
    if let Some(atom) = frame.violated_post.first() {
        let view = violation_view(atom, frame);
        if let Some(item) = view.item {
            return Shortage::Item {
                item,
                need: view.need,
                have: view.have,
            };
        }
        if let Some(station) = view.station {
            return Shortage::Station { station };
        }
        if let Some(required) = view.tier {
            return Shortage::Tier { required };
        }
    }
    Shortage::Other {
        message: match frame.status {
            Status::Aborted => "episode budget exhausted".into(),
            _ => "no concrete evidence".into(),
        },
    }
}

fn callee_views(program: &SkillProgram, net: &SkillNetwork) -> BTreeMap<String, CalleeView> {
    program
        .called_skills()
        .into_iter()
        .filter_map(|name| {
            net.node(&name).map(|node| {
                (
                    name.clone(),
                    CalleeView {
                        params: node
                            .program
                            .params
                            .iter()
                            .map(|p| (p.name.clone(), p.kind.keyword().to_string()))
                            .collect(),
                        pre: node.program.pre.iter().map(print_condition).collect(),
                        post: node.program.post.iter().map(print_condition).collect(),
                    },
                )
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Phase II

/// Bottom-up order over the pending subgraph: every skill appears after all
/// of its descendants. Errs on a cycle, which a trace-induced subgraph
/// cannot produce.
pub fn post_order(subgraph: &PendingSubgraph) -> Result<Vec<NodeId>, String> {
    fn visit(
        id: &NodeId,
        subgraph: &PendingSubgraph,
        visiting: &mut BTreeSet<NodeId>,
        done: &mut BTreeSet<NodeId>,
        order: &mut Vec<NodeId>,
    ) -> Result<(), String> {
        if done.contains(id) {
            return Ok(());
        }
        if !visiting.insert(id.clone()) {
            return Err(format!("cycle through `{id}` in the pending subgraph"));
        }
        for (from, to) in &subgraph.edges {
            if from == id {
                visit(to, subgraph, visiting, done, order)?;
            }
        }
        visiting.remove(id);
        done.insert(id.clone());
        order.push(id.clone());
        Ok(())
    }

    let mut order = Vec::new();
    let mut visiting = BTreeSet::new();
    let mut done = BTreeSet::new();
    visit(&subgraph.root, subgraph, &mut visiting, &mut done, &mut order)?;
    for id in &subgraph.nodes {
        if !done.contains(id) {
            visit(id, subgraph, &mut visiting, &mut done, &mut order)?;
        }
    }
    order.retain(|id| subgraph.nodes.contains(id));
    Ok(order)
}

/// Applies a gradient's edits to one skill, in issue order, skipping edits
/// that would leave the program ill-formed. Two edits mutating the same
/// statement conflict: only the highest-magnitude one applies. Context
/// reports from already-updated children may make provisioning in this skill
/// redundant (the child now guarantees it); such calls are dropped before
/// the edits apply. `contracts` resolves callee programs for that check.
pub fn apply_gradients(
    program: &SkillProgram,
    gradient: &Gradient,
    context: &[&OptimizationReport],
    vocab: &Vocabulary,
    contracts: &dyn Fn(&str) -> Option<SkillProgram>,
) -> (SkillProgram, OptimizationReport) {
    let mut current = program.clone();
    let mut applied = Vec::new();
    let mut notes = Vec::new();

    // re-derive against updated child contracts
    for report in context {
        if report.postcondition_changes.is_empty() {
            continue;
        }
        if let Some((cleaned, what)) = drop_redundant_provisioning(&current, report, contracts) {
            notes.push(what);
            current = cleaned;
        }
    }

    // conflict rule: one edit per mutated statement, highest magnitude wins
    let mut by_target: BTreeMap<AstPath, usize> = BTreeMap::new();
    let mut keep = vec![true; gradient.issues.len()];
    for (i, issue) in gradient.issues.iter().enumerate() {
        if let Some(path) = issue.edit.mutated_statement() {
            match by_target.get(&path).copied() {
                Some(j) => {
                    let (winner, loser) = if gradient.issues[j].magnitude >= issue.magnitude {
                        (j, i)
                    } else {
                        (i, j)
                    };
                    keep[loser] = false;
                    keep[winner] = true;
                    by_target.insert(path, winner);
                    notes.push(format!(
                        "conflicting edits at one statement; kept \"{}\"",
                        gradient.issues[winner].direction
                    ));
                }
                None => {
                    by_target.insert(path, i);
                }
            }
        }
    }

    let mut post_changes = Vec::new();
    for (i, issue) in gradient.issues.iter().enumerate() {
        if !keep[i] {
            continue;
        }
        match apply_edit(&current, &issue.edit) {
            Ok(next) => match crate::dsl::validate(&next, vocab) {
                Ok(()) => {
                    if let Edit::AddPostcondition { cond } = &issue.edit {
                        post_changes.push(print_condition(cond));
                    }
                    applied.push(issue.edit.describe());
                    current = next;
                }
                Err(e) => notes.push(format!("edit rejected (would be ill-formed): {e}")),
            },
            Err(e) => notes.push(format!("edit rejected: {e}")),
        }
    }

    let summary = if applied.is_empty() && notes.is_empty() {
        format!("no edits; {}", gradient.reasoning)
    } else if notes.is_empty() {
        gradient.reasoning.clone()
    } else {
        format!("{}; {}", gradient.reasoning, notes.join("; "))
    };
    let report = OptimizationReport {
        skill: program.name.clone(),
        applied,
        skipped: false,
        summary,
        postcondition_changes: post_changes,
        seq: 0,
    };
    (current, report)
}

/// Removes a provisioning call rendered redundant by a child whose declared
/// postconditions just widened: a call immediately preceding an invocation
/// of that child, every one of whose instantiated promises the child's new
/// atoms now entail.
fn drop_redundant_provisioning(
    program: &SkillProgram,
    child_report: &OptimizationReport,
    contracts: &dyn Fn(&str) -> Option<SkillProgram>,
) -> Option<(SkillProgram, String)> {
    let new_atoms: Vec<Condition> = child_report
        .postcondition_changes
        .iter()
        .filter_map(|s| crate::dsl::parse_condition(s).ok())
        .collect();
    if new_atoms.is_empty() {
        return None;
    }
    for (i, window) in program.body.windows(2).enumerate() {
        let (
            Statement::CallSkill {
                name: provider,
                args,
            },
            Statement::CallSkill { name: child, .. },
        ) = (&window[0], &window[1])
        else {
            continue;
        };
        if *child != child_report.skill || provider == child {
            continue;
        }
        let Some(provider_program) = contracts(provider) else {
            continue;
        };
        if provider_program.params.len() != args.len() {
            continue;
        }
        // ground the provider's promises through its call arguments
        let mut bindings = Bindings::new();
        let mut ground = true;
        for (param, arg) in provider_program.params.iter().zip(args) {
            match arg {
                Expr::Int(n) => {
                    bindings.insert(param.name.clone(), crate::dsl::Value::Int(*n));
                }
                Expr::Ident(k) => {
                    bindings.insert(param.name.clone(), crate::dsl::Value::Kind(k.clone()));
                }
                _ => {
                    ground = false;
                    break;
                }
            }
        }
        if !ground {
            continue;
        }
        let promises = subst_condition_set(&provider_program.post, &bindings);
        if promises.is_empty() {
            continue;
        }
        let covered = promises.iter().all(|atom| {
            new_atoms
                .iter()
                .any(|have| crate::dsl::entails_atom(have, atom))
        });
        if covered {
            let mut cleaned = program.clone();
            cleaned.body.remove(i);
            return Some((
                cleaned,
                format!(
                    "dropped `{provider}` provisioning made redundant by `{}`",
                    child_report.skill
                ),
            ));
        }
    }
    None
}

/// One full optimization pass over a failed episode.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    root: &str,
    feedback: &Feedback,
    trace: &Trace,
    net: &mut SkillNetwork,
    buffers: &mut MomentumBuffer,
    recipes: &RecipeTable,
    operator: &mut dyn OperatorBackend,
    rng: &mut StdRng,
    gating_enabled: bool,
) -> Vec<OptimizationReport> {
    let (gradients, _feedbacks, subgraph) =
        backprop_feedback(root, feedback, trace, net, recipes, operator);
    let Ok(order) = post_order(&subgraph) else {
        return Vec::new();
    };
    let vocab = net.vocabulary(&recipes.vocabulary());

    let mut reports: Vec<OptimizationReport> = Vec::new();
    let mut seq = 0u64;
    for id in order {
        let Some(gradient) = gradients.get(&id) else {
            continue;
        };
        let Some(node) = net.node(&id) else { continue };
        let program = node.program.clone();
        let value = node.value();

        // momentum: drop issues whose edits invert a recent proposal
        let mut kept = gradient.clone();
        let mut suppressed = Vec::new();
        kept.issues.retain(|issue| {
            match edit_delta(&program, &issue.edit) {
                Some(delta) if buffers.inverts(&id, &delta) => {
                    suppressed.push(issue.direction.clone());
                    false
                }
                _ => true,
            }
        });

        let gate = if gating_enabled {
            gate_probability(value)
        } else {
            1.0
        };
        let draw: f64 = rng.random();
        let deltas: Vec<EditDelta> = kept
            .issues
            .iter()
            .filter_map(|issue| edit_delta(&program, &issue.edit))
            .collect();

        if draw > gate {
            // gated: record the proposal anyway so repeated failures can
            // surface through the ε floor later
            buffers.push(&id, BufferedProposal { deltas });
            seq += 1;
            reports.push(OptimizationReport {
                skill: id.clone(),
                applied: Vec::new(),
                skipped: true,
                summary: format!(
                    "maturity gate held (V = {value:.3}, gate = {gate:.3}); proposal buffered"
                ),
                postcondition_changes: Vec::new(),
                seq,
            });
            continue;
        }

        let context: Vec<&OptimizationReport> = reports
            .iter()
            .filter(|r| !r.skipped && subgraph.edges.contains(&(id.clone(), r.skill.clone())))
            .collect();
        let contracts = |name: &str| net.node(name).map(|n| n.program.clone());
        let (updated, mut report) = apply_gradients(&program, &kept, &context, &vocab, &contracts);
        if !suppressed.is_empty() {
            report.summary = format!(
                "{}; momentum suppressed: {}",
                report.summary,
                suppressed.join(", ")
            );
        }
        if updated != program {
            let ok = net.set_program(&id, updated, &recipes.vocabulary()).is_ok();
            if ok && has_call_cycle(net) {
                // an inserted ensure-call closed a loop; back out
                let _ = net.set_program(&id, program.clone(), &recipes.vocabulary());
                report.applied.clear();
                report.summary =
                    format!("{}; rejected: the edit would make invocations cyclic", report.summary);
            } else if !ok {
                report.applied.clear();
                report.summary = format!("{}; network rejected the result", report.summary);
            }
        }
        buffers.push(&id, BufferedProposal { deltas });
        seq += 1;
        report.seq = seq;
        reports.push(report);
    }
    reports
}

fn has_call_cycle(net: &SkillNetwork) -> bool {
    let mut state: BTreeMap<NodeId, u8> = BTreeMap::new();
    fn visit(net: &SkillNetwork, id: &NodeId, state: &mut BTreeMap<NodeId, u8>) -> bool {
        match state.get(id) {
            Some(1) => return true,
            Some(2) => return false,
            _ => {}
        }
        state.insert(id.clone(), 1);
        for child in net.children_of(id) {
            if visit(net, &child, state) {
                return true;
            }
        }
        state.insert(id.clone(), 2);
        false
    }
    let ids: Vec<NodeId> = net.ids().cloned().collect();
    ids.iter().any(|id| visit(net, id, &mut state))
}

/// The delta an edit would cause against the current program, when the edit
/// is of a kind the momentum buffer tracks.
pub fn edit_delta(program: &SkillProgram, edit: &Edit) -> Option<EditDelta> {
    match edit {
        Edit::SetConstant { path, value } => {
            let from = crate::dsl::literal_at(&program.body, path)?;
            Some(EditDelta::Constant {
                path: path.clone(),
                from,
                to: *value,
            })
        }
        Edit::InsertStatement { path, .. } => Some(EditDelta::Inserted { path: path.clone() }),
        Edit::RemoveStatement { path } => Some(EditDelta::Removed { path: path.clone() }),
        Edit::ReplaceCall { path, callee, args } => {
            let (old_callee, old_args) = match crate::dsl::statement_at(&program.body, path)? {
                Statement::CallPrimitive { name, args } => {
                    (CallTarget::Primitive(name.clone()), args.clone())
                }
                Statement::CallSkill { name, args } => {
                    (CallTarget::Skill(name.clone()), args.clone())
                }
                _ => return None,
            };
            Some(EditDelta::Replaced {
                path: path.clone(),
                old_callee,
                old_args,
                new_callee: callee.clone(),
                new_args: args.clone(),
            })
        }
        _ => None,
    }
}
