//! The deterministic rule-based operator backend.
//!
//! Reflect maps concrete failure evidence to canonical edits:
//! - an insufficient-item refusal raises the responsible provider (a call
//!   argument or literal batch count) or inserts a provisioning step;
//! - a missing station inserts an ensure-call and declares the precondition;
//! - a too-low tool tier inserts a tier-raising call and its precondition;
//! - a capacity refusal clamps the bulk count with `min(.., capacity(..))`;
//! - a postcondition violation flattens a silent fallback branch, redirects
//!   a mis-targeted call, or tops up provisioning.
//!
//! When a shortage implicates a sibling that had promised the lacking item,
//! Reflect also emits a low-weight "under-delivered" child issue: defensive
//! provisioning pressure on the provider. Those edits bloat shared skills if
//! applied indiscriminately, which is exactly the behavior the maturity gate
//! exists to damp.
//!
//! CodeGen distills a plan into a composite; Plan solves unground atoms by
//! recursive requirement closure over the recipe graph against a simulated
//! world.

use std::collections::BTreeMap;

use crate::dsl::{
    parse_condition, parse_skill, print_skill, AstPath, CallTarget, Condition, Edit, Expr,
    PathStep, SkillProgram, Statement,
};
use crate::executor::SynthesisRequest;

use super::{
    ChildIssueView, FeedbackView, GradientType, IssueView, OperatorBackend, OperatorError,
    PlanRequest, PlanResponse, PlanStepView, RecipeSummary, ReflectRequest, ReflectResponse,
    Shortage, UnderDelivery,
};

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleOperator;

impl OperatorBackend for OracleOperator {
    fn reflect(&mut self, request: &ReflectRequest) -> Result<ReflectResponse, OperatorError> {
        let program = parse_skill(&request.source)
            .map_err(|e| OperatorError::Schema(format!("skill source does not parse: {e}")))?;
        let response = match &request.feedback {
            FeedbackView::UnderDelivered {
                item,
                deficit,
                weight,
            } => reflect_under_delivery(&program, request, item, *deficit, *weight),
            FeedbackView::FrameFailed => reflect_frame(&program, request),
        };
        response.validate()?;
        Ok(response)
    }

    fn codegen(&mut self, request: &SynthesisRequest) -> Result<String, OperatorError> {
        let mut pre = Vec::new();
        for atom in &request.unmet {
            pre.push(parse_atom(atom)?);
        }
        let mut post = Vec::new();
        for atom in &request.goal {
            post.push(parse_atom(atom)?);
        }
        let mut body = Vec::new();
        for step in &request.steps {
            let mut args = Vec::new();
            for arg in &step.args {
                args.push(
                    crate::dsl::parse_expr(arg)
                        .map_err(|e| OperatorError::Schema(e.to_string()))?,
                );
            }
            body.push(Statement::CallSkill {
                name: step.skill.clone(),
                args,
            });
        }
        let program = SkillProgram::new(request.name_hint.clone(), Vec::new(), pre, post, body);
        Ok(print_skill(&program))
    }

    fn forward(&mut self, request: &PlanRequest) -> Result<PlanResponse, OperatorError> {
        forward_plan(request)
    }
}

fn parse_atom(source: &str) -> Result<Condition, OperatorError> {
    parse_condition(source)
        .map_err(|e| OperatorError::Schema(format!("condition `{source}` does not parse: {e}")))
}

// ---------------------------------------------------------------------------
// reflect

fn reflect_under_delivery(
    program: &SkillProgram,
    request: &ReflectRequest,
    item: &str,
    deficit: i64,
    weight: f64,
) -> ReflectResponse {
    // top up at the start of the body with whatever primitive this skill
    // already uses to produce the item
    let producer = statements_in_order(&program.body)
        .into_iter()
        .find_map(|(_, stmt)| producer_of(stmt, item));
    if let Some(mode) = producer {
        let stmt = top_up_statement(item, deficit, mode, &request.recipes);
        return ReflectResponse {
            self_issues: vec![IssueView {
                gradient_type: GradientType::ResourceManagement,
                magnitude: weight,
                direction: format!("top up {item} production; a dependent ran {deficit} short"),
                edit: Edit::InsertStatement {
                    path: AstPath::stmt(&[0]),
                    stmt,
                },
            }],
            child_issues: Vec::new(),
            reasoning: format!("defensive provisioning for {item}"),
        };
    }
    // no local producer: responsibility descends to the called skill that
    // promised the item
    for stmt in &program.body {
        let Statement::CallSkill { name, .. } = stmt else {
            continue;
        };
        let promised = request
            .callees
            .get(name)
            .map(|callee| {
                callee.post.iter().any(|atom| {
                    parse_condition(atom)
                        .ok()
                        .map(|c| condition_mentions_item(&c, item))
                        .unwrap_or(false)
                })
            })
            .unwrap_or(false);
        if promised {
            return ReflectResponse {
                self_issues: Vec::new(),
                child_issues: vec![ChildIssueView {
                    child_skill: name.clone(),
                    issue_description: format!(
                        "this provider's {item} supply fell {deficit} short downstream"
                    ),
                    weight: (weight * 0.9).min(1.0),
                    under_delivered: Some(UnderDelivery {
                        item: item.to_string(),
                        deficit,
                    }),
                }],
                reasoning: format!("under-delivery of {item} descends to `{name}`"),
            };
        }
    }
    ReflectResponse {
        self_issues: Vec::new(),
        child_issues: Vec::new(),
        reasoning: format!("under-delivery of {item} reported, but no producer to reinforce"),
    }
}

fn reflect_frame(program: &SkillProgram, request: &ReflectRequest) -> ReflectResponse {
    let frame = &request.frame;

    // a failed or aborted child owns the failure; forward feedback to it and
    // add defensive blame on the provider sibling when the evidence is an
    // item shortage
    if let Some(failed_child) = frame
        .children
        .iter()
        .find(|c| c.status == "failed" || c.status == "aborted")
    {
        let mut child_issues = vec![ChildIssueView {
            child_skill: failed_child.skill.clone(),
            issue_description: format!(
                "invocation failed: {}",
                failed_child
                    .shortage
                    .as_ref()
                    .map(describe_shortage)
                    .unwrap_or_else(|| "see child trace".into())
            ),
            weight: 1.0,
            under_delivered: None,
        }];
        if let Some(Shortage::Item { item, need, have }) = &failed_child.shortage {
            if let Some(provider) = provider_sibling(frame, &failed_child.skill, item) {
                child_issues.push(ChildIssueView {
                    child_skill: provider,
                    issue_description: format!(
                        "promised inv({item}) but the chain still ran short ({need} needed, {have} held)"
                    ),
                    weight: 0.4,
                    under_delivered: Some(UnderDelivery {
                        item: item.clone(),
                        deficit: (need - have).max(1),
                    }),
                });
            }
        }
        return ReflectResponse {
            self_issues: Vec::new(),
            child_issues,
            reasoning: format!("failure localized to child `{}`", failed_child.skill),
        };
    }

    // local primitive failure
    if let (Some(path), Some(feedback)) = (&frame.failing_path, &frame.feedback) {
        use crate::world::PrimitiveFeedback as PF;
        return match feedback {
            PF::InsufficientItem { item, need, have } => {
                insufficient_item(program, request, path, item, *need, *have)
            }
            PF::MissingStation { station } => missing_station(request, path, station),
            PF::ToolTierTooLow { required, .. } => too_low_tier(request, path, *required),
            PF::DestinationFull { item, .. } => capacity_clamp(program, request, path, item),
            other => diagnostic(format!("no canonical repair for: {other}")),
        };
    }

    // body completed, own postcondition violated
    if let Some(violation) = frame.violations.first() {
        if let Some(item) = &violation.item {
            return post_item_violation(program, request, item, violation.need, violation.have);
        }
        if let Some(station) = &violation.station {
            return post_station_violation(program, request, station);
        }
        if let Some(tier) = violation.tier {
            return post_tier_violation(request, tier);
        }
    }

    diagnostic("failure evidence insufficient for a canonical repair".into())
}

fn diagnostic(reasoning: String) -> ReflectResponse {
    ReflectResponse {
        self_issues: Vec::new(),
        child_issues: Vec::new(),
        reasoning,
    }
}

fn describe_shortage(shortage: &Shortage) -> String {
    match shortage {
        Shortage::Item { item, need, have } => {
            format!("insufficient {item}: need {need} have {have}")
        }
        Shortage::Station { station } => format!("requires {station}"),
        Shortage::Tier { required } => format!("requires tool tier {required}"),
        Shortage::Capacity { item } => format!("no room for {item}"),
        Shortage::Other { message } => message.clone(),
    }
}

/// The most recent successfully completed child, before the failed one,
/// whose promised post mentions the item.
fn provider_sibling(
    frame: &super::FrameView,
    failed: &str,
    item: &str,
) -> Option<String> {
    let failed_index = frame.children.iter().position(|c| c.skill == failed)?;
    frame.children[..failed_index]
        .iter()
        .rev()
        .find(|child| {
            child.status == "success"
                && child.post.iter().any(|atom| {
                    parse_condition(atom)
                        .ok()
                        .map(|c| condition_mentions_item(&c, item))
                        .unwrap_or(false)
                })
        })
        .map(|child| child.skill.clone())
}

fn condition_mentions_item(cond: &Condition, item: &str) -> bool {
    matches!(cond, Condition::InventoryAtLeast { item: e, .. }
        if matches!(e, Expr::Ident(name) if name == item))
}

#[derive(Clone, Copy, PartialEq)]
enum ProduceMode {
    Gather,
    Craft,
    Smelt,
}

fn producer_of(stmt: &Statement, item: &str) -> Option<ProduceMode> {
    let Statement::CallPrimitive { name, args } = stmt else {
        return None;
    };
    let target = args.first().and_then(|e| match e {
        Expr::Ident(k) => Some(k.as_str()),
        _ => None,
    })?;
    if target != item {
        return None;
    }
    match name.as_str() {
        "gather" => Some(ProduceMode::Gather),
        "craft" => Some(ProduceMode::Craft),
        "smelt" => Some(ProduceMode::Smelt),
        _ => None,
    }
}

fn top_up_statement(
    item: &str,
    deficit: i64,
    mode: ProduceMode,
    recipes: &RecipeSummary,
) -> Statement {
    let (name, count) = match mode {
        ProduceMode::Gather => ("gather", deficit.max(1)),
        ProduceMode::Craft | ProduceMode::Smelt => {
            let per_batch = recipes
                .recipes
                .get(item)
                .map(|r| r.yield_per_batch)
                .unwrap_or(1)
                .max(1);
            let batches = (deficit + per_batch - 1).div_euclid(per_batch).max(1);
            (
                if mode == ProduceMode::Craft {
                    "craft"
                } else {
                    "smelt"
                },
                batches,
            )
        }
    };
    Statement::CallPrimitive {
        name: name.into(),
        args: vec![Expr::ident(item), Expr::Int(count)],
    }
}

/// Every statement in the body paired with its path, pre-order.
fn statements_in_order(body: &[Statement]) -> Vec<(AstPath, &Statement)> {
    fn walk<'a>(body: &'a [Statement], prefix: &AstPath, out: &mut Vec<(AstPath, &'a Statement)>) {
        for (i, stmt) in body.iter().enumerate() {
            let path = prefix.clone().push(PathStep::Stmt(i));
            out.push((path.clone(), stmt));
            match stmt {
                Statement::If {
                    then_body,
                    else_body,
                    ..
                } => {
                    walk(then_body, &path.clone().push(PathStep::Then), out);
                    walk(else_body, &path.clone().push(PathStep::Else), out);
                }
                Statement::Repeat { body, .. } => {
                    walk(body, &path.clone().push(PathStep::Loop), out)
                }
                _ => {}
            }
        }
    }
    let mut out = Vec::new();
    walk(body, &AstPath::root(), &mut out);
    out
}

/// How many units one argument unit of a provider call yields for `item`,
/// judging by the callee's postcondition shape, plus the arg index bound to
/// that count parameter.
fn call_provider_shape(
    callee: &super::CalleeView,
    call_args: &[Expr],
    item: &str,
) -> Option<(usize, i64, Expr)> {
    for atom in &callee.post {
        let Ok(Condition::InventoryAtLeast { item: ie, count }) = parse_condition(atom) else {
            continue;
        };
        // the post item may be a parameter bound by the call
        let names_item = match &ie {
            Expr::Ident(name) => {
                if name == item {
                    true
                } else if let Some(pos) = callee.params.iter().position(|(p, _)| p == name) {
                    matches!(call_args.get(pos), Some(Expr::Ident(a)) if a == item)
                } else {
                    false
                }
            }
            _ => false,
        };
        if !names_item {
            continue;
        }
        let (param, scale) = match &count {
            Expr::Ident(p) => (p.clone(), 1),
            Expr::Binary { op: crate::dsl::BinOp::Mul, lhs, rhs } => match (lhs.as_ref(), rhs.as_ref()) {
                (Expr::Ident(p), Expr::Int(k)) | (Expr::Int(k), Expr::Ident(p)) => {
                    (p.clone(), *k)
                }
                _ => continue,
            },
            _ => continue,
        };
        let pos = callee.params.iter().position(|(p, _)| *p == param)?;
        let arg = call_args.get(pos)?.clone();
        return Some((pos, scale.max(1), arg));
    }
    None
}

fn insufficient_item(
    program: &SkillProgram,
    request: &ReflectRequest,
    failing_path: &AstPath,
    item: &str,
    need: i64,
    have: i64,
) -> ReflectResponse {
    let deficit = (need - have).max(1);
    let all = statements_in_order(&program.body);
    let failing_index = all.iter().position(|(p, _)| p == failing_path);
    let before = match failing_index {
        Some(i) => &all[..i],
        None => &all[..],
    };

    // prefer raising an existing provider, nearest first
    for (path, stmt) in before.iter().rev() {
        // a provider call to a skill that promises the item
        if let Statement::CallSkill { name, args } = stmt {
            if let Some(callee) = request.callees.get(name) {
                if let Some((pos, scale, arg)) = call_provider_shape(callee, args, item) {
                    let raise_units = (deficit + scale - 1).div_euclid(scale).max(1);
                    match arg {
                        Expr::Int(current) => {
                            return single_issue(
                                GradientType::ResourceManagement,
                                0.9,
                                format!(
                                    "raise `{name}` provisioning of {item} to cover a {deficit} shortfall"
                                ),
                                Edit::SetConstant {
                                    path: path.clone().push(PathStep::Arg(pos)),
                                    value: current + raise_units,
                                },
                            );
                        }
                        _ if scale == 1 => {
                            // a symbolic arg under-delivers; re-derive the
                            // required amount from the failing statement
                            if let Some(required) =
                                required_expr(&all, failing_path, item, &request.recipes)
                            {
                                let mut new_args = args.clone();
                                new_args[pos] = required;
                                return single_issue(
                                    GradientType::ResourceManagement,
                                    0.9,
                                    format!(
                                        "provision `{name}` with the full {item} requirement"
                                    ),
                                    Edit::ReplaceCall {
                                        path: path.clone(),
                                        callee: CallTarget::Skill(name.clone()),
                                        args: new_args,
                                    },
                                );
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        // a primitive producer with a literal count
        if let Some(mode) = producer_of(stmt, item) {
            if let Statement::CallPrimitive { args, .. } = stmt {
                if let Some(Expr::Int(current)) = args.get(1) {
                    let per_unit = match mode {
                        ProduceMode::Gather => 1,
                        _ => request
                            .recipes
                            .recipes
                            .get(item)
                            .map(|r| r.yield_per_batch)
                            .unwrap_or(1)
                            .max(1),
                    };
                    let raise = (deficit + per_unit - 1).div_euclid(per_unit).max(1);
                    return single_issue(
                        GradientType::ResourceManagement,
                        0.9,
                        format!("raise local {item} production by {raise} to cover the shortfall"),
                        Edit::SetConstant {
                            path: path.clone().push(PathStep::Arg(1)),
                            value: current + raise,
                        },
                    );
                }
            }
        }
    }

    // no provider: insert one right before the failing statement
    match provisioning_statement(item, deficit, &request.recipes) {
        Some(stmt) => single_issue(
            GradientType::ResourceManagement,
            0.9,
            format!("provision {deficit} {item} before the failing step"),
            Edit::InsertStatement {
                path: failing_path.clone(),
                stmt,
            },
        ),
        None => diagnostic(format!("{item} cannot be produced by any primitive")),
    }
}

fn provisioning_statement(
    item: &str,
    deficit: i64,
    recipes: &RecipeSummary,
) -> Option<Statement> {
    if recipes.gatherable.contains_key(item) {
        return Some(Statement::CallPrimitive {
            name: "gather".into(),
            args: vec![Expr::ident(item), Expr::Int(deficit.max(1))],
        });
    }
    let recipe = recipes.recipes.get(item)?;
    let batches = (deficit + recipe.yield_per_batch - 1)
        .div_euclid(recipe.yield_per_batch)
        .max(1);
    Some(Statement::CallPrimitive {
        name: recipe.kind.clone(),
        args: vec![Expr::ident(item), Expr::Int(batches)],
    })
}

/// The amount of `item` the failing statement consumes, as an expression
/// (recipe input per batch times the batch-count argument).
fn required_expr(
    all: &[(AstPath, &Statement)],
    failing_path: &AstPath,
    item: &str,
    recipes: &RecipeSummary,
) -> Option<Expr> {
    let (_, stmt) = all.iter().find(|(p, _)| p == failing_path)?;
    let Statement::CallPrimitive { name, args } = stmt else {
        return None;
    };
    if !matches!(name.as_str(), "craft" | "smelt") {
        return None;
    }
    let output = match args.first() {
        Some(Expr::Ident(k)) => k.clone(),
        _ => return None,
    };
    let count = args.get(1)?.clone();
    let per_batch = *recipes.recipes.get(&output)?.inputs.get(item)?;
    Some(match per_batch {
        1 => count,
        k => Expr::binary(crate::dsl::BinOp::Mul, count, Expr::Int(k)),
    })
}

fn single_issue(
    gradient_type: GradientType,
    magnitude: f64,
    direction: String,
    edit: Edit,
) -> ReflectResponse {
    ReflectResponse {
        reasoning: direction.clone(),
        self_issues: vec![IssueView {
            gradient_type,
            magnitude,
            direction,
            edit,
        }],
        child_issues: Vec::new(),
    }
}

fn missing_station(
    request: &ReflectRequest,
    failing_path: &AstPath,
    station: &str,
) -> ReflectResponse {
    let mut issues = Vec::new();
    let ensure = request
        .providers
        .station
        .get(station)
        .and_then(|v| v.iter().find(|id| **id != request.skill))
        .cloned();
    let stmt = match ensure {
        Some(provider) => Statement::CallSkill {
            name: provider,
            args: Vec::new(),
        },
        // no network provider: inline craft-and-place guarded by the check
        None => Statement::If {
            cond: Condition::station(station),
            then_body: Vec::new(),
            else_body: vec![
                Statement::CallPrimitive {
                    name: "craft".into(),
                    args: vec![Expr::ident(station), Expr::Int(1)],
                },
                Statement::CallPrimitive {
                    name: "place".into(),
                    args: vec![Expr::ident(station)],
                },
            ],
        },
    };
    issues.push(IssueView {
        gradient_type: GradientType::Precondition,
        magnitude: 0.9,
        direction: format!("guarantee {station} is present before the failing step"),
        edit: Edit::InsertStatement {
            path: failing_path.clone(),
            stmt,
        },
    });
    issues.push(IssueView {
        gradient_type: GradientType::Precondition,
        magnitude: 0.6,
        direction: format!("declare the {station} requirement"),
        edit: Edit::AddPrecondition {
            cond: Condition::station(station),
        },
    });
    ReflectResponse {
        self_issues: issues,
        child_issues: Vec::new(),
        reasoning: format!("station {station} was missing at the failing step"),
    }
}

fn too_low_tier(request: &ReflectRequest, failing_path: &AstPath, required: i64) -> ReflectResponse {
    let provider = request
        .providers
        .tier
        .iter()
        .filter(|(tier, _)| *tier >= required)
        .flat_map(|(_, ids)| ids.iter())
        .find(|id| **id != request.skill)
        .cloned();
    let Some(provider) = provider else {
        return diagnostic(format!("no skill establishes tool tier {required}"));
    };
    ReflectResponse {
        reasoning: format!("tool tier {required} unavailable at the failing step"),
        self_issues: vec![
            IssueView {
                gradient_type: GradientType::Precondition,
                magnitude: 0.9,
                direction: format!("raise the tool tier to {required} before the failing step"),
                edit: Edit::InsertStatement {
                    path: failing_path.clone(),
                    stmt: Statement::CallSkill {
                        name: provider,
                        args: Vec::new(),
                    },
                },
            },
            IssueView {
                gradient_type: GradientType::Precondition,
                magnitude: 0.6,
                direction: format!("declare the tier-{required} requirement"),
                edit: Edit::AddPrecondition {
                    cond: Condition::tool_tier(required),
                },
            },
        ],
        child_issues: Vec::new(),
    }
}

fn capacity_clamp(
    program: &SkillProgram,
    request: &ReflectRequest,
    failing_path: &AstPath,
    item: &str,
) -> ReflectResponse {
    let all = statements_in_order(&program.body);
    let Some((_, stmt)) = all.iter().find(|(p, _)| p == failing_path) else {
        return diagnostic("capacity failure at an unknown path".into());
    };
    let Statement::CallPrimitive { name, args } = stmt else {
        return diagnostic("capacity failure outside a primitive call".into());
    };
    let Some(count) = args.get(1).cloned() else {
        return diagnostic("capacity failure on a call without a count".into());
    };
    let capacity = Expr::Capacity(Box::new(Expr::ident(item)));
    let clamped_units = match name.as_str() {
        "gather" => capacity,
        "craft" | "smelt" => {
            let per_batch = request
                .recipes
                .recipes
                .get(item)
                .map(|r| r.yield_per_batch)
                .unwrap_or(1)
                .max(1);
            if per_batch == 1 {
                capacity
            } else {
                Expr::binary(crate::dsl::BinOp::Div, capacity, Expr::Int(per_batch))
            }
        }
        _ => return diagnostic("capacity failure on a non-producing primitive".into()),
    };
    let clamped = Expr::Min(Box::new(count), Box::new(clamped_units));
    let mut new_args = args.clone();
    new_args[1] = clamped;
    single_issue(
        GradientType::PhysicalConstraint,
        0.8,
        format!("clamp the {item} amount to what the inventory can hold"),
        Edit::ReplaceCall {
            path: failing_path.clone(),
            callee: CallTarget::Primitive(name.clone()),
            args: new_args,
        },
    )
}

fn post_item_violation(
    program: &SkillProgram,
    request: &ReflectRequest,
    item: &str,
    need: i64,
    have: i64,
) -> ReflectResponse {
    // a post whose item slot is a parameter promises whatever the caller
    // binds; a violation there means the binding was infeasible for this
    // body, not that the code is wrong
    let parameterized = program.post.iter().any(|atom| {
        matches!(atom, Condition::InventoryAtLeast { item: Expr::Ident(name), .. }
            if program.param(name).is_some())
    });
    if parameterized {
        return diagnostic(format!(
            "parameterized contract could not be met for {item}; no local repair"
        ));
    }
    let deficit = (need - have).max(1);
    let all = statements_in_order(&program.body);

    // silent-fallback pattern: an if whose then-branch produces the item
    // while the taken else-branch does not
    for (path, stmt) in &all {
        if let Statement::If {
            then_body,
            else_body,
            ..
        } = stmt
        {
            let then_produces = block_produces(then_body, item, request);
            let else_produces = block_produces(else_body, item, request);
            if then_produces && !else_produces {
                let Some(PathStep::Stmt(index)) = path.0.last().copied() else {
                    continue;
                };
                let prefix = AstPath(path.0[..path.0.len() - 1].to_vec());
                let mut edits = Vec::new();
                for (offset, inner) in then_body.iter().enumerate() {
                    edits.push(Edit::InsertStatement {
                        path: prefix.clone().push(PathStep::Stmt(index + 1 + offset)),
                        stmt: inner.clone(),
                    });
                }
                edits.push(Edit::RemoveStatement { path: path.clone() });
                let issues = edits
                    .into_iter()
                    .map(|edit| IssueView {
                        gradient_type: GradientType::ErrorHandling,
                        magnitude: 0.85,
                        direction: "fail loudly rather than fall back silently".into(),
                        edit,
                    })
                    .collect();
                return ReflectResponse {
                    self_issues: issues,
                    child_issues: Vec::new(),
                    reasoning: format!(
                        "a guarded branch silently skips {item} production; inline the real path"
                    ),
                };
            }
        }
    }

    // wrong-target pattern: a primitive produces something no postcondition
    // wants while the wanted item goes unproduced
    let post_items: Vec<String> = program
        .post
        .iter()
        .filter_map(|c| match c {
            Condition::InventoryAtLeast { item: Expr::Ident(k), .. } => Some(k.clone()),
            _ => None,
        })
        .collect();
    for (path, stmt) in &all {
        if let Statement::CallPrimitive { name, args } = stmt {
            if !matches!(name.as_str(), "gather" | "craft" | "smelt") {
                continue;
            }
            let Some(Expr::Ident(target)) = args.first() else {
                continue;
            };
            if target == item || post_items.iter().any(|p| p == target) {
                continue;
            }
            let mut new_args = args.clone();
            new_args[0] = Expr::ident(item);
            // keep the count; switch the primitive to how the item is made
            let correct_prim = if request.recipes.gatherable.contains_key(item) {
                "gather"
            } else if let Some(recipe) = request.recipes.recipes.get(item) {
                recipe.kind.as_str()
            } else {
                name.as_str()
            };
            return single_issue(
                GradientType::ParameterSemantic,
                0.8,
                format!("the call targets {target}, but the contract wants {item}"),
                Edit::ReplaceCall {
                    path: path.clone(),
                    callee: CallTarget::Primitive(correct_prim.to_string()),
                    args: new_args,
                },
            );
        }
    }

    // otherwise treat it as under-provisioning local to this skill: raise a
    // provider or append a top-up, and flag the provider child defensively
    let mut response = insufficient_item(
        program,
        request,
        &AstPath::stmt(&[program.body.len()]),
        item,
        need,
        have,
    );
    if let Some(provider) = last_successful_provider(&request.frame, item) {
        response.child_issues.push(ChildIssueView {
            child_skill: provider,
            issue_description: format!(
                "postcondition on {item} failed downstream of this provider"
            ),
            weight: 0.4,
            under_delivered: Some(UnderDelivery {
                item: item.to_string(),
                deficit,
            }),
        });
    }
    response
}

fn last_successful_provider(frame: &super::FrameView, item: &str) -> Option<String> {
    frame
        .children
        .iter()
        .rev()
        .find(|child| {
            child.status == "success"
                && child.post.iter().any(|atom| {
                    parse_condition(atom)
                        .ok()
                        .map(|c| condition_mentions_item(&c, item))
                        .unwrap_or(false)
                })
        })
        .map(|c| c.skill.clone())
}

fn block_produces(body: &[Statement], item: &str, request: &ReflectRequest) -> bool {
    statements_in_order(body).iter().any(|(_, stmt)| {
        if producer_of(stmt, item).is_some() {
            return true;
        }
        if let Statement::CallSkill { name, .. } = stmt {
            if let Some(callee) = request.callees.get(name) {
                return callee.post.iter().any(|atom| {
                    parse_condition(atom)
                        .ok()
                        .map(|c| condition_mentions_item(&c, item))
                        .unwrap_or(false)
                });
            }
        }
        false
    })
}

fn post_station_violation(
    program: &SkillProgram,
    request: &ReflectRequest,
    station: &str,
) -> ReflectResponse {
    let all = statements_in_order(&program.body);
    // crafted but never placed
    for (path, stmt) in &all {
        if let Statement::CallPrimitive { name, args } = stmt {
            if name == "craft"
                && matches!(args.first(), Some(Expr::Ident(k)) if k == station)
            {
                let Some(PathStep::Stmt(index)) = path.0.last().copied() else {
                    continue;
                };
                let prefix = AstPath(path.0[..path.0.len() - 1].to_vec());
                return single_issue(
                    GradientType::Precondition,
                    0.8,
                    format!("{station} is crafted but never placed"),
                    Edit::InsertStatement {
                        path: prefix.push(PathStep::Stmt(index + 1)),
                        stmt: Statement::CallPrimitive {
                            name: "place".into(),
                            args: vec![Expr::ident(station)],
                        },
                    },
                );
            }
        }
    }
    let provider = request
        .providers
        .station
        .get(station)
        .and_then(|v| v.iter().find(|id| **id != request.skill))
        .cloned();
    match provider {
        Some(provider) => single_issue(
            GradientType::Precondition,
            0.8,
            format!("establish {station} before finishing"),
            Edit::InsertStatement {
                path: AstPath::stmt(&[program.body.len()]),
                stmt: Statement::CallSkill {
                    name: provider,
                    args: Vec::new(),
                },
            },
        ),
        None => diagnostic(format!("no way to establish {station}")),
    }
}

fn post_tier_violation(request: &ReflectRequest, tier: i64) -> ReflectResponse {
    let provider = request
        .providers
        .tier
        .iter()
        .filter(|(t, _)| *t >= tier)
        .flat_map(|(_, ids)| ids.iter())
        .find(|id| **id != request.skill)
        .cloned();
    match provider {
        Some(provider) => single_issue(
            GradientType::Precondition,
            0.8,
            format!("reach tool tier {tier} before finishing"),
            Edit::InsertStatement {
                path: AstPath::stmt(&[0]),
                stmt: Statement::CallSkill {
                    name: provider,
                    args: Vec::new(),
                },
            },
        ),
        None => diagnostic(format!("no skill establishes tool tier {tier}")),
    }
}

// ---------------------------------------------------------------------------
// forward planning: requirement closure over the recipe graph

struct Sim {
    inventory: BTreeMap<String, i64>,
    stations: Vec<String>,
    tool_tier: i64,
}

impl Sim {
    fn count(&self, item: &str) -> i64 {
        self.inventory.get(item).copied().unwrap_or(0)
    }

    fn add(&mut self, item: &str, n: i64) {
        *self.inventory.entry(item.to_string()).or_insert(0) += n;
    }
}

struct ForwardSolver<'a> {
    recipes: &'a RecipeSummary,
    sim: Sim,
    steps: Vec<Statement>,
    depth: u32,
}

impl ForwardSolver<'_> {
    fn ensure_item(&mut self, item: &str, amount: i64) -> Result<(), String> {
        self.depth += 1;
        if self.depth > 64 {
            return Err(format!("requirement recursion too deep at {item}"));
        }
        let need = amount - self.sim.count(item);
        if need <= 0 {
            self.depth -= 1;
            return Ok(());
        }
        if let Some(&tier) = self.recipes.gatherable.get(item) {
            self.ensure_tier(tier)?;
            self.steps.push(Statement::CallPrimitive {
                name: "gather".into(),
                args: vec![Expr::ident(item), Expr::Int(need)],
            });
            self.sim.add(item, need);
            self.depth -= 1;
            return Ok(());
        }
        let Some(recipe) = self.recipes.recipes.get(item).cloned() else {
            return Err(format!("no way to produce {item}"));
        };
        let batches = (need + recipe.yield_per_batch - 1).div_euclid(recipe.yield_per_batch);
        // producing one input may consume another (sticks eat planks), so
        // iterate the requirement closure to a fixpoint
        for pass in 0.. {
            let mut stable = true;
            for (input, per_batch) in &recipe.inputs {
                let required = per_batch * batches;
                if self.sim.count(input) < required {
                    self.ensure_item(input, required)?;
                    stable = false;
                }
            }
            if stable {
                break;
            }
            if pass > 8 {
                return Err(format!("requirements for {item} do not stabilize"));
            }
        }
        if let Some(station) = &recipe.station {
            self.ensure_station(station)?;
        }
        self.steps.push(Statement::CallPrimitive {
            name: recipe.kind.clone(),
            args: vec![Expr::ident(item), Expr::Int(batches)],
        });
        for (input, per_batch) in &recipe.inputs {
            self.sim.add(input, -(per_batch * batches));
        }
        self.sim.add(item, recipe.yield_per_batch * batches);
        self.depth -= 1;
        Ok(())
    }

    fn ensure_station(&mut self, station: &str) -> Result<(), String> {
        if self.sim.stations.iter().any(|s| s == station) {
            return Ok(());
        }
        self.ensure_item(station, 1)?;
        self.steps.push(Statement::CallPrimitive {
            name: "place".into(),
            args: vec![Expr::ident(station)],
        });
        self.sim.add(station, -1);
        self.sim.stations.push(station.to_string());
        Ok(())
    }

    fn ensure_tier(&mut self, tier: i64) -> Result<(), String> {
        if self.sim.tool_tier >= tier {
            return Ok(());
        }
        // climb one tool tier at a time; each tool is a craftable item
        for next in (self.sim.tool_tier + 1)..=tier {
            let tool = self
                .recipes
                .recipes
                .keys()
                .find(|item| tool_tier_of(item) == Some(next))
                .cloned()
                .ok_or_else(|| format!("no tool grants tier {next}"))?;
            self.ensure_item(&tool, 1)?;
            self.sim.tool_tier = next;
        }
        Ok(())
    }
}

// The tier table is world data the summary does not carry; the tool items
// follow the pickaxe naming convention.
fn tool_tier_of(item: &str) -> Option<i64> {
    match item {
        "wooden_pickaxe" => Some(1),
        "stone_pickaxe" => Some(2),
        "iron_pickaxe" => Some(3),
        _ => None,
    }
}

fn forward_plan(request: &PlanRequest) -> Result<PlanResponse, OperatorError> {
    let mut response = PlanResponse::default();
    let mut sim = Sim {
        inventory: request.state.inventory.clone(),
        stations: request.state.stations.clone(),
        tool_tier: request.state.tool_tier,
    };
    let mut taken: Vec<String> = request.existing.clone();
    for atom_src in &request.atoms {
        let atom = parse_atom(atom_src)?;
        let mut solver = ForwardSolver {
            recipes: &request.recipes,
            sim,
            steps: Vec::new(),
            depth: 0,
        };
        let (hint, result) = match &atom {
            Condition::InventoryAtLeast { item, count } => {
                let (Expr::Ident(item), Expr::Int(n)) = (item, count) else {
                    return Err(OperatorError::Unsolvable(format!(
                        "forward planning needs ground atoms, got `{atom_src}`"
                    )));
                };
                (
                    format!("acquire_{item}_{n}"),
                    solver.ensure_item(item, *n),
                )
            }
            Condition::StationPlaced { station } => {
                let Expr::Ident(kind) = station else {
                    return Err(OperatorError::Unsolvable(format!(
                        "forward planning needs ground atoms, got `{atom_src}`"
                    )));
                };
                (format!("establish_{kind}"), solver.ensure_station(kind))
            }
            Condition::ToolTierAtLeast { tier } => {
                (format!("reach_tier_{tier}"), solver.ensure_tier(*tier))
            }
            Condition::ParamCompare { .. } => {
                return Err(OperatorError::Unsolvable(format!(
                    "comparison atoms have no recipe closure: `{atom_src}`"
                )))
            }
        };
        result.map_err(OperatorError::Unsolvable)?;
        sim = solver.sim;
        if solver.steps.is_empty() {
            continue; // atom already true in the simulated state
        }
        let name = unique_name(&hint, &taken);
        taken.push(name.clone());
        let program = SkillProgram::new(
            name.clone(),
            Vec::new(),
            Vec::new(),
            vec![atom],
            solver.steps,
        );
        response.new_skills.push(print_skill(&program));
        response.steps.push(PlanStepView {
            skill: name,
            args: Vec::new(),
        });
    }
    Ok(response)
}

fn unique_name(hint: &str, taken: &[String]) -> String {
    if !taken.iter().any(|t| t == hint) {
        return hint.to_string();
    }
    for version in 2.. {
        let candidate = format!("{hint}_v{version}");
        if !taken.iter().any(|t| *t == candidate) {
            return candidate;
        }
    }
    unreachable!()
}

