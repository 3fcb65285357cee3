//! Expression evaluation, condition checking, and syntactic entailment.
//!
//! Entailment is sound but deliberately incomplete: an atom entails a goal
//! only by dominance on the same item/station/tier — there is no arithmetic
//! reasoning across atoms. That keeps the planner's goal matching decidable.

use std::collections::BTreeMap;

use thiserror::Error;

use super::ast::{BinOp, Condition, ConditionSet, Expr, ParamKind, SkillProgram, Value};

/// Variable bindings in scope during evaluation or instantiation.
pub type Bindings = BTreeMap<String, Value>;

/// World-state queries needed to evaluate conditions and `capacity(..)`.
pub trait StateQuery {
    fn item_count(&self, item: &str) -> i64;
    fn has_station(&self, station: &str) -> bool;
    fn tool_tier(&self) -> i64;
    fn capacity_for(&self, item: &str) -> i64;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("`{0}` is not bound to a value")]
    Unbound(String),
    #[error("expected an integer, got kind `{0}`")]
    ExpectedInt(String),
    #[error("expected an item or station kind, got integer {0}")]
    ExpectedKind(i64),
    #[error("division by zero")]
    DivisionByZero,
}

/// Evaluates an expression. Unbound identifiers evaluate to themselves as
/// kind literals, which is how item/station names appear in bodies.
pub fn eval_expr(expr: &Expr, env: &Bindings, state: &dyn StateQuery) -> Result<Value, EvalError> {
    match expr {
        Expr::Int(n) => Ok(Value::Int(*n)),
        Expr::Ident(name) => Ok(env
            .get(name)
            .cloned()
            .unwrap_or_else(|| Value::Kind(name.clone()))),
        Expr::Binary { op, lhs, rhs } => {
            let l = eval_int(lhs, env, state)?;
            let r = eval_int(rhs, env, state)?;
            let v = match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => {
                    if r == 0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    l.div_euclid(r)
                }
            };
            Ok(Value::Int(v))
        }
        Expr::Min(a, b) => {
            let l = eval_int(a, env, state)?;
            let r = eval_int(b, env, state)?;
            Ok(Value::Int(l.min(r)))
        }
        Expr::Capacity(item) => {
            let kind = eval_kind(item, env, state)?;
            Ok(Value::Int(state.capacity_for(&kind)))
        }
    }
}

pub(crate) fn eval_int(
    expr: &Expr,
    env: &Bindings,
    state: &dyn StateQuery,
) -> Result<i64, EvalError> {
    match eval_expr(expr, env, state)? {
        Value::Int(n) => Ok(n),
        Value::Kind(k) => Err(EvalError::ExpectedInt(k)),
    }
}

pub(crate) fn eval_kind(
    expr: &Expr,
    env: &Bindings,
    state: &dyn StateQuery,
) -> Result<String, EvalError> {
    match eval_expr(expr, env, state)? {
        Value::Kind(k) => Ok(k),
        Value::Int(n) => Err(EvalError::ExpectedKind(n)),
    }
}

/// Evaluates a condition atom against a state under bindings.
pub fn eval_condition(
    cond: &Condition,
    env: &Bindings,
    state: &dyn StateQuery,
) -> Result<bool, EvalError> {
    match cond {
        Condition::InventoryAtLeast { item, count } => {
            let kind = eval_kind(item, env, state)?;
            let need = eval_int(count, env, state)?;
            Ok(state.item_count(&kind) >= need)
        }
        Condition::StationPlaced { station } => {
            let kind = eval_kind(station, env, state)?;
            Ok(state.has_station(&kind))
        }
        Condition::ToolTierAtLeast { tier } => Ok(state.tool_tier() >= *tier),
        Condition::ParamCompare { lhs, rel, rhs } => {
            let l = eval_int(lhs, env, state)?;
            let r = eval_int(rhs, env, state)?;
            Ok(rel.holds(l, r))
        }
    }
}

/// Substitutes bindings into an expression. Bound identifiers become their
/// values; everything else is untouched.
pub fn subst_expr(expr: &Expr, env: &Bindings) -> Expr {
    match expr {
        Expr::Int(_) => expr.clone(),
        Expr::Ident(name) => match env.get(name) {
            Some(Value::Int(n)) => Expr::Int(*n),
            Some(Value::Kind(k)) => Expr::Ident(k.clone()),
            None => expr.clone(),
        },
        Expr::Binary { op, lhs, rhs } => {
            let l = subst_expr(lhs, env);
            let r = subst_expr(rhs, env);
            // constant-fold so instantiated conditions compare syntactically
            if let (Expr::Int(a), Expr::Int(b)) = (&l, &r) {
                let v = match op {
                    BinOp::Add => Some(a + b),
                    BinOp::Sub => Some(a - b),
                    BinOp::Mul => Some(a * b),
                    BinOp::Div => (*b != 0).then(|| a.div_euclid(*b)),
                };
                if let Some(v) = v {
                    return Expr::Int(v);
                }
            }
            Expr::Binary {
                op: *op,
                lhs: Box::new(l),
                rhs: Box::new(r),
            }
        }
        Expr::Min(a, b) => {
            let l = subst_expr(a, env);
            let r = subst_expr(b, env);
            if let (Expr::Int(a), Expr::Int(b)) = (&l, &r) {
                return Expr::Int(*a.min(b));
            }
            Expr::Min(Box::new(l), Box::new(r))
        }
        Expr::Capacity(item) => Expr::Capacity(Box::new(subst_expr(item, env))),
    }
}

pub fn subst_condition(cond: &Condition, env: &Bindings) -> Condition {
    match cond {
        Condition::InventoryAtLeast { item, count } => Condition::InventoryAtLeast {
            item: subst_expr(item, env),
            count: subst_expr(count, env),
        },
        Condition::StationPlaced { station } => Condition::StationPlaced {
            station: subst_expr(station, env),
        },
        Condition::ToolTierAtLeast { tier } => Condition::ToolTierAtLeast { tier: *tier },
        Condition::ParamCompare { lhs, rel, rhs } => Condition::ParamCompare {
            lhs: subst_expr(lhs, env),
            rel: *rel,
            rhs: subst_expr(rhs, env),
        },
    }
}

pub fn subst_condition_set(set: &ConditionSet, env: &Bindings) -> ConditionSet {
    set.iter().map(|c| subst_condition(c, env)).collect()
}

/// Does one atom syntactically imply another?
///
/// Same item with guaranteed count >= goal count (numeric when both are
/// literals, otherwise structural equality), same station, or tier dominance.
pub fn entails_atom(have: &Condition, goal: &Condition) -> bool {
    match (have, goal) {
        (
            Condition::InventoryAtLeast { item: ih, count: ch },
            Condition::InventoryAtLeast { item: ig, count: cg },
        ) => {
            if ih != ig {
                return false;
            }
            match (ch, cg) {
                (Expr::Int(h), Expr::Int(g)) => h >= g,
                (h, g) => h == g,
            }
        }
        (
            Condition::StationPlaced { station: sh },
            Condition::StationPlaced { station: sg },
        ) => sh == sg,
        (
            Condition::ToolTierAtLeast { tier: th },
            Condition::ToolTierAtLeast { tier: tg },
        ) => th >= tg,
        (
            Condition::ParamCompare { .. },
            Condition::ParamCompare { .. },
        ) => have == goal,
        _ => false,
    }
}

/// True iff some atom of `post` syntactically implies `goal`.
pub fn entails(post: &ConditionSet, goal: &Condition) -> bool {
    post.iter().any(|atom| entails_atom(atom, goal))
}

/// Solves for parameter bindings that make a skill's declared post entail a
/// ground goal atom. Returns `None` when no binding works.
///
/// Count patterns handled: a literal, a bare parameter, or `param * k` /
/// `k * param` (bound by ceiling division). All other shapes must match the
/// goal syntactically. Parameters left unbound fall back to their declared
/// defaults; a skill with residual unbound parameters does not match.
pub fn bind_for_goal(skill: &SkillProgram, goal: &Condition) -> Option<Bindings> {
    for atom in skill.post.iter() {
        if let Some(bindings) = bind_atom(skill, atom, goal) {
            // final gate: the instantiated post must entail the goal outright
            let instantiated = subst_condition_set(&skill.post, &bindings);
            if entails(&instantiated, goal) {
                return Some(bindings);
            }
        }
    }
    None
}

fn bind_atom(skill: &SkillProgram, atom: &Condition, goal: &Condition) -> Option<Bindings> {
    let mut bindings = Bindings::new();
    match (atom, goal) {
        (
            Condition::InventoryAtLeast { item: pi, count: pc },
            Condition::InventoryAtLeast { item: gi, count: gc },
        ) => {
            bind_kind_expr(skill, pi, gi, ParamKind::Item, &mut bindings)?;
            bind_count_expr(skill, pc, gc, &mut bindings)?;
        }
        (
            Condition::StationPlaced { station: ps },
            Condition::StationPlaced { station: gs },
        ) => {
            bind_kind_expr(skill, ps, gs, ParamKind::Station, &mut bindings)?;
        }
        (
            Condition::ToolTierAtLeast { tier: pt },
            Condition::ToolTierAtLeast { tier: gt },
        ) => {
            if pt < gt {
                return None;
            }
        }
        (Condition::ParamCompare { .. }, Condition::ParamCompare { .. }) => {
            if atom != goal {
                return None;
            }
        }
        _ => return None,
    }
    // unbound parameters fall back to defaults
    for param in &skill.params {
        if !bindings.contains_key(&param.name) {
            match &param.default {
                Some(v) => {
                    bindings.insert(param.name.clone(), v.clone());
                }
                None => return None,
            }
        }
    }
    Some(bindings)
}

fn bind_kind_expr(
    skill: &SkillProgram,
    have: &Expr,
    goal: &Expr,
    kind: ParamKind,
    bindings: &mut Bindings,
) -> Option<()> {
    let Expr::Ident(goal_kind) = goal else {
        return (have == goal).then_some(());
    };
    match have {
        Expr::Ident(name) => {
            if let Some(param) = skill.param(name) {
                if param.kind != kind {
                    return None;
                }
                match bindings.get(name) {
                    Some(Value::Kind(existing)) if existing == goal_kind => Some(()),
                    Some(_) => None,
                    None => {
                        bindings.insert(name.clone(), Value::Kind(goal_kind.clone()));
                        Some(())
                    }
                }
            } else {
                (name == goal_kind).then_some(())
            }
        }
        _ => None,
    }
}

fn bind_count_expr(
    skill: &SkillProgram,
    have: &Expr,
    goal: &Expr,
    bindings: &mut Bindings,
) -> Option<()> {
    let Expr::Int(goal_n) = goal else {
        return (have == goal).then_some(());
    };
    let bind_scaled = |name: &str, scale: i64, bindings: &mut Bindings| -> Option<()> {
        let param = skill.param(name)?;
        if param.kind != ParamKind::Int || scale <= 0 {
            return None;
        }
        let needed = (goal_n + scale - 1).div_euclid(scale).max(1);
        match bindings.get(name) {
            Some(Value::Int(existing)) if existing * scale >= *goal_n => Some(()),
            Some(_) => None,
            None => {
                bindings.insert(name.to_string(), Value::Int(needed));
                Some(())
            }
        }
    };
    match have {
        Expr::Int(n) => (n >= goal_n).then_some(()),
        Expr::Ident(name) => bind_scaled(name, 1, bindings),
        Expr::Binary {
            op: BinOp::Mul,
            lhs,
            rhs,
        } => match (lhs.as_ref(), rhs.as_ref()) {
            (Expr::Ident(name), Expr::Int(k)) | (Expr::Int(k), Expr::Ident(name)) => {
                bind_scaled(name, *k, bindings)
            }
            _ => None,
        },
        _ => None,
    }
}
