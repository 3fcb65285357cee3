//! Online structural refactoring.
//!
//! Around a freshly succeeded skill the refactorer collects a candidate set
//! (graph neighbors plus the five most feature-similar skills), detects five
//! canonical structural relationships, and applies at most one deterministic
//! rewrite per trigger:
//!
//! - E duplication: canonical forms equal up to name — keep the higher-value
//!   node, redirect callers, demote the other to an alias;
//! - A parametric coverage: one skill is a bound instance of a general one —
//!   rewrite it as a one-call wrapper;
//! - B subgraph coverage: a body inlines another skill's body — replace the
//!   block with a call;
//! - D common extraction: two bodies share an identical parameter-free block
//!   — extract it as a shared subskill;
//! - C sibling specialization: two skills anti-unify to a template differing
//!   only in literal leaves — synthesize the general skill and wrap both.
//!
//! Rewrites only reorganize existing programs and links; no new behavior is
//! introduced. Every application is tentative: the last three relevant tasks
//! replay against the refactored network, and a success-rate drop beyond 20%
//! reverts through the journaled inverse script (or the snapshot if the
//! inverse itself fails).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{
    print_skill, Condition, Expr, ParamKind, ParamSig, SkillProgram, Statement, Vocabulary,
};
use crate::network::{NetworkError, NetworkSnapshot, NodeId, SkillNetwork};
use crate::world::Task;

pub const TRIGGER_PERIOD: u64 = 5;
pub const WINDOW_SIZE: usize = 3;
/// Commit requires post_rate >= 0.8 * pre_rate.
pub const REGRESSION_FRACTION: f64 = 0.8;
const MAX_FRESH_PARAMS: usize = 4;
const TOP_SIMILAR: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefactorCase {
    #[serde(rename = "A-parametric")]
    Parametric,
    #[serde(rename = "B-subgraph")]
    Subgraph,
    #[serde(rename = "C-sibling")]
    Sibling,
    #[serde(rename = "D-extract")]
    Extract,
    #[serde(rename = "E-duplicate")]
    Duplicate,
}

impl RefactorCase {
    /// Most conservative first: E > A > B > D > C.
    fn priority(self) -> u8 {
        match self {
            RefactorCase::Duplicate => 0,
            RefactorCase::Parametric => 1,
            RefactorCase::Subgraph => 2,
            RefactorCase::Extract => 3,
            RefactorCase::Sibling => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteStep {
    SetProgram { id: NodeId, program: SkillProgram },
    InsertSkill { program: SkillProgram },
    RemoveSkill { id: NodeId },
    RedirectCalls { from: NodeId, to: NodeId },
    DemoteToAlias { id: NodeId, target: NodeId },
    PromoteFromAlias { id: NodeId, program: SkillProgram },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefactorProposal {
    pub case: RefactorCase,
    pub involved: Vec<NodeId>,
    pub script: Vec<RewriteStep>,
    pub inverse: Vec<RewriteStep>,
    /// Network generation the detection ran against.
    pub detected_generation: u64,
}

/// Inverse script plus bookkeeping, produced by a successful application.
#[derive(Debug, Clone)]
pub struct Journal {
    pub case: RefactorCase,
    pub involved: Vec<NodeId>,
    pub inverse: Vec<RewriteStep>,
}

#[derive(Debug, Error)]
pub enum RefactorError {
    #[error("proposal is stale: detected at generation {detected}, network at {current}")]
    StaleGeneration { detected: u64, current: u64 },
    #[error("rewrite step failed: {0}")]
    Step(#[from] NetworkError),
}

/// One completed task relevant to validation: what to replay and how it went
/// before the refactor.
#[derive(Debug, Clone)]
pub struct WindowTask {
    pub task: Task,
    pub world_seed: u64,
    pub pre_success: bool,
    /// Skills the pre-refactor episode touched (its trace set).
    pub involved: Vec<NodeId>,
}

/// Sliding window of the most recent completed tasks that touched the
/// affected skills.
#[derive(Debug, Clone, Default)]
pub struct ValidationWindow {
    pub tasks: Vec<WindowTask>,
}

impl ValidationWindow {
    /// Last `WINDOW_SIZE` completed tasks whose traces touched any affected
    /// skill, most recent last.
    pub fn select(history: &[WindowTask], affected: &[NodeId]) -> Self {
        let tasks: Vec<WindowTask> = history
            .iter()
            .rev()
            .filter(|t| t.involved.iter().any(|id| affected.contains(id)))
            .take(WINDOW_SIZE)
            .cloned()
            .collect();
        ValidationWindow {
            tasks: tasks.into_iter().rev().collect(),
        }
    }

    pub fn pre_rate(&self) -> Option<f64> {
        if self.tasks.is_empty() {
            return None;
        }
        let wins = self.tasks.iter().filter(|t| t.pre_success).count();
        Some(wins as f64 / self.tasks.len() as f64)
    }
}

// ---------------------------------------------------------------------------
// candidate discovery

/// Sparse bag-of-features: primitive names, called skill names, kind
/// literals, and parameter kinds. A deterministic stand-in for embedding
/// similarity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector(BTreeMap<String, f64>);

impl FeatureVector {
    pub fn of(program: &SkillProgram) -> Self {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        let mut bump = |key: String| *counts.entry(key).or_insert(0.0) += 1.0;
        for param in &program.params {
            bump(format!("pkind:{}", param.kind.keyword()));
        }
        collect_features(&program.body, program, &mut bump);
        for cond in program.pre.iter().chain(program.post.iter()) {
            collect_cond_features(cond, program, &mut bump);
        }
        FeatureVector(counts)
    }

    pub fn cosine(&self, other: &FeatureVector) -> f64 {
        let dot: f64 = self
            .0
            .iter()
            .filter_map(|(k, v)| other.0.get(k).map(|w| v * w))
            .sum();
        let na: f64 = self.0.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = other.0.values().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

fn collect_features(body: &[Statement], program: &SkillProgram, bump: &mut dyn FnMut(String)) {
    for stmt in body {
        match stmt {
            Statement::CallPrimitive { name, args } => {
                bump(format!("prim:{name}"));
                for arg in args {
                    collect_expr_features(arg, program, bump);
                }
            }
            Statement::CallSkill { name, args } => {
                bump(format!("call:{name}"));
                for arg in args {
                    collect_expr_features(arg, program, bump);
                }
            }
            Statement::If {
                cond,
                then_body,
                else_body,
            } => {
                collect_cond_features(cond, program, bump);
                collect_features(then_body, program, bump);
                collect_features(else_body, program, bump);
            }
            Statement::Repeat { count, body } => {
                collect_expr_features(count, program, bump);
                collect_features(body, program, bump);
            }
            Statement::Let { value, .. } => collect_expr_features(value, program, bump),
            Statement::Assert { cond } => collect_cond_features(cond, program, bump),
        }
    }
}

fn collect_expr_features(expr: &Expr, program: &SkillProgram, bump: &mut dyn FnMut(String)) {
    match expr {
        Expr::Ident(name) if program.param(name).is_none() => bump(format!("kind:{name}")),
        Expr::Binary { lhs, rhs, .. } | Expr::Min(lhs, rhs) => {
            collect_expr_features(lhs, program, bump);
            collect_expr_features(rhs, program, bump);
        }
        Expr::Capacity(item) => collect_expr_features(item, program, bump),
        _ => {}
    }
}

fn collect_cond_features(cond: &Condition, program: &SkillProgram, bump: &mut dyn FnMut(String)) {
    match cond {
        Condition::InventoryAtLeast { item, count } => {
            collect_expr_features(item, program, bump);
            collect_expr_features(count, program, bump);
        }
        Condition::StationPlaced { station } => collect_expr_features(station, program, bump),
        Condition::ToolTierAtLeast { .. } => {}
        Condition::ParamCompare { lhs, rhs, .. } => {
            collect_expr_features(lhs, program, bump);
            collect_expr_features(rhs, program, bump);
        }
    }
}

/// Graph neighbors of the succeeded skill plus the five most similar
/// non-neighbors, aliases excluded, deterministically ordered.
pub fn candidate_set(s_t: &str, net: &SkillNetwork) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = Vec::new();
    let mut neighbors: Vec<NodeId> = net.callers_of(s_t);
    neighbors.extend(net.children_of(s_t));
    neighbors.sort();
    neighbors.dedup();
    for id in neighbors {
        let alias = net.node(&id).map(|n| n.is_alias()).unwrap_or(true);
        if !alias && id != s_t {
            out.push(id);
        }
    }

    let Some(own) = net.node(s_t) else { return out };
    let own_features = FeatureVector::of(&own.program);
    let mut scored: Vec<(f64, NodeId)> = net
        .nodes()
        .filter(|(id, node)| *id != s_t && !node.is_alias() && !out.contains(id))
        .map(|(id, node)| (own_features.cosine(&FeatureVector::of(&node.program)), id.clone()))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    out.extend(scored.into_iter().take(TOP_SIMILAR).map(|(_, id)| id));
    out
}

// ---------------------------------------------------------------------------
// case detection

/// Detects the canonical cases over the candidate pool (the succeeded skill
/// plus its candidates), ordered most conservative first.
pub fn detect_cases(
    s_t: &str,
    candidates: &[NodeId],
    net: &SkillNetwork,
    vocab: &Vocabulary,
) -> Vec<RefactorProposal> {
    let mut pool: Vec<NodeId> = Vec::new();
    if net.node(s_t).map(|n| !n.is_alias()).unwrap_or(false) {
        pool.push(s_t.to_string());
    }
    for id in candidates {
        if !pool.contains(id) && net.node(id).map(|n| !n.is_alias()).unwrap_or(false) {
            pool.push(id.clone());
        }
    }

    let mut proposals = Vec::new();
    for (i, a) in pool.iter().enumerate() {
        for b in pool.iter().skip(i + 1) {
            if let Some(p) = detect_duplicate(a, b, net) {
                proposals.push(p);
            }
            if let Some(p) = detect_sibling(a, b, net, vocab) {
                proposals.push(p);
            }
            if let Some(p) = detect_extract(a, b, net) {
                proposals.push(p);
            }
        }
    }
    for host in &pool {
        for other in &pool {
            if host == other {
                continue;
            }
            if let Some(p) = detect_parametric(host, other, net) {
                proposals.push(p);
            }
            if let Some(p) = detect_subgraph(host, other, net) {
                proposals.push(p);
            }
        }
    }
    proposals.sort_by(|a, b| {
        a.case
            .priority()
            .cmp(&b.case.priority())
            .then_with(|| a.involved.cmp(&b.involved))
    });
    proposals
}

fn canonical_print_unnamed(program: &SkillProgram) -> String {
    let mut p = program.clone();
    p.name = "_".into();
    print_skill(&p)
}

/// Case E: equal canonical forms up to the skill name.
fn detect_duplicate(a: &str, b: &str, net: &SkillNetwork) -> Option<RefactorProposal> {
    let na = net.node(a)?;
    let nb = net.node(b)?;
    if canonical_print_unnamed(&na.program) != canonical_print_unnamed(&nb.program) {
        return None;
    }
    // the higher-value node stays canonical; ties break lexicographically
    let (canonical, dup) = if (na.value(), b) > (nb.value(), a) {
        (a, b)
    } else {
        (b, a)
    };
    let dup_node = net.node(dup)?;
    let mut inverse = Vec::new();
    for caller in net.callers_of(dup) {
        inverse.push(RewriteStep::SetProgram {
            id: caller.clone(),
            program: net.node(&caller)?.program.clone(),
        });
    }
    inverse.push(RewriteStep::PromoteFromAlias {
        id: dup.to_string(),
        program: dup_node.program.clone(),
    });
    Some(RefactorProposal {
        case: RefactorCase::Duplicate,
        involved: vec![canonical.to_string(), dup.to_string()],
        script: vec![
            RewriteStep::RedirectCalls {
                from: dup.to_string(),
                to: canonical.to_string(),
            },
            RewriteStep::DemoteToAlias {
                id: dup.to_string(),
                target: canonical.to_string(),
            },
        ],
        inverse,
        detected_generation: net.generation(),
    })
}

/// Matches a parameterized template against concrete syntax. Template
/// parameters bind to literal ints or kind idents; everything else must be
/// structurally identical.
fn match_template(
    template: &SkillProgram,
    concrete_body: &[Statement],
) -> Option<BTreeMap<String, Expr>> {
    let mut bindings = BTreeMap::new();
    if match_blocks(&template.body, concrete_body, template, &mut bindings)
        && template.params.iter().all(|p| bindings.contains_key(&p.name))
    {
        Some(bindings)
    } else {
        None
    }
}

fn match_blocks(
    template: &[Statement],
    concrete: &[Statement],
    owner: &SkillProgram,
    bindings: &mut BTreeMap<String, Expr>,
) -> bool {
    template.len() == concrete.len()
        && template
            .iter()
            .zip(concrete)
            .all(|(t, c)| match_stmt(t, c, owner, bindings))
}

fn match_stmt(
    template: &Statement,
    concrete: &Statement,
    owner: &SkillProgram,
    bindings: &mut BTreeMap<String, Expr>,
) -> bool {
    match (template, concrete) {
        (
            Statement::CallPrimitive { name: n1, args: a1 },
            Statement::CallPrimitive { name: n2, args: a2 },
        )
        | (
            Statement::CallSkill { name: n1, args: a1 },
            Statement::CallSkill { name: n2, args: a2 },
        ) => {
            n1 == n2
                && a1.len() == a2.len()
                && a1
                    .iter()
                    .zip(a2)
                    .all(|(t, c)| match_expr(t, c, owner, bindings))
        }
        (
            Statement::If {
                cond: c1,
                then_body: t1,
                else_body: e1,
            },
            Statement::If {
                cond: c2,
                then_body: t2,
                else_body: e2,
            },
        ) => {
            match_cond(c1, c2, owner, bindings)
                && match_blocks(t1, t2, owner, bindings)
                && match_blocks(e1, e2, owner, bindings)
        }
        (
            Statement::Repeat { count: c1, body: b1 },
            Statement::Repeat { count: c2, body: b2 },
        ) => match_expr(c1, c2, owner, bindings) && match_blocks(b1, b2, owner, bindings),
        (
            Statement::Let { var: v1, value: e1 },
            Statement::Let { var: v2, value: e2 },
        ) => v1 == v2 && match_expr(e1, e2, owner, bindings),
        (Statement::Assert { cond: c1 }, Statement::Assert { cond: c2 }) => {
            match_cond(c1, c2, owner, bindings)
        }
        _ => false,
    }
}

fn match_cond(
    template: &Condition,
    concrete: &Condition,
    owner: &SkillProgram,
    bindings: &mut BTreeMap<String, Expr>,
) -> bool {
    match (template, concrete) {
        (
            Condition::InventoryAtLeast { item: i1, count: c1 },
            Condition::InventoryAtLeast { item: i2, count: c2 },
        ) => match_expr(i1, i2, owner, bindings) && match_expr(c1, c2, owner, bindings),
        (
            Condition::StationPlaced { station: s1 },
            Condition::StationPlaced { station: s2 },
        ) => match_expr(s1, s2, owner, bindings),
        (
            Condition::ToolTierAtLeast { tier: t1 },
            Condition::ToolTierAtLeast { tier: t2 },
        ) => t1 == t2,
        (
            Condition::ParamCompare {
                lhs: l1,
                rel: r1,
                rhs: h1,
            },
            Condition::ParamCompare {
                lhs: l2,
                rel: r2,
                rhs: h2,
            },
        ) => r1 == r2 && match_expr(l1, l2, owner, bindings) && match_expr(h1, h2, owner, bindings),
        _ => false,
    }
}

fn match_expr(
    template: &Expr,
    concrete: &Expr,
    owner: &SkillProgram,
    bindings: &mut BTreeMap<String, Expr>,
) -> bool {
    match template {
        Expr::Ident(name) if owner.param(name).is_some() => {
            let ok_shape = matches!(concrete, Expr::Int(_) | Expr::Ident(_));
            if !ok_shape {
                return false;
            }
            match bindings.get(name) {
                Some(bound) => bound == concrete,
                None => {
                    bindings.insert(name.clone(), concrete.clone());
                    true
                }
            }
        }
        Expr::Int(a) => matches!(concrete, Expr::Int(b) if a == b),
        Expr::Ident(a) => matches!(concrete, Expr::Ident(b) if a == b),
        Expr::Binary { op, lhs, rhs } => match concrete {
            Expr::Binary {
                op: op2,
                lhs: l2,
                rhs: r2,
            } => op == op2 && match_expr(lhs, l2, owner, bindings) && match_expr(rhs, r2, owner, bindings),
            _ => false,
        },
        Expr::Min(a, b) => match concrete {
            Expr::Min(c, d) => match_expr(a, c, owner, bindings) && match_expr(b, d, owner, bindings),
            _ => false,
        },
        Expr::Capacity(a) => match concrete {
            Expr::Capacity(b) => match_expr(a, b, owner, bindings),
            _ => false,
        },
    }
}

fn is_wrapper(program: &SkillProgram) -> bool {
    matches!(program.body.as_slice(), [Statement::CallSkill { .. }])
}

/// Case A: `special` is `general` with parameters pinned to constants.
fn detect_parametric(special: &str, general: &str, net: &SkillNetwork) -> Option<RefactorProposal> {
    let s = net.node(special)?;
    let g = net.node(general)?;
    if g.program.params.is_empty() || is_wrapper(&s.program) || special == general {
        return None;
    }
    let bindings = match_template(&g.program, &s.program.body)?;
    // conditions must line up under the same binding
    let env: crate::dsl::Bindings = bindings
        .iter()
        .filter_map(|(k, v)| match v {
            Expr::Int(n) => Some((k.clone(), crate::dsl::Value::Int(*n))),
            Expr::Ident(kind) if s.program.param(kind).is_none() => {
                Some((k.clone(), crate::dsl::Value::Kind(kind.clone())))
            }
            _ => None,
        })
        .collect();
    if env.len() != bindings.len() {
        return None; // bindings must be fully ground for a wrapper
    }
    let g_pre = crate::dsl::subst_condition_set(&g.program.pre, &env);
    let g_post = crate::dsl::subst_condition_set(&g.program.post, &env);
    if g_pre != s.program.pre || g_post != s.program.post {
        return None;
    }
    let args: Vec<Expr> = g
        .program
        .params
        .iter()
        .map(|p| bindings[&p.name].clone())
        .collect();
    let mut wrapper = s.program.clone();
    wrapper.body = vec![Statement::CallSkill {
        name: general.to_string(),
        args,
    }];
    Some(RefactorProposal {
        case: RefactorCase::Parametric,
        involved: vec![special.to_string(), general.to_string()],
        script: vec![RewriteStep::SetProgram {
            id: special.to_string(),
            program: wrapper,
        }],
        inverse: vec![RewriteStep::SetProgram {
            id: special.to_string(),
            program: s.program.clone(),
        }],
        detected_generation: net.generation(),
    })
}

/// Case B: a block of `host` reimplements `provider`'s whole body.
fn detect_subgraph(host: &str, provider: &str, net: &SkillNetwork) -> Option<RefactorProposal> {
    let h = net.node(host)?;
    let p = net.node(provider)?;
    let len = p.program.body.len();
    if len < 2 || h.program.body.len() < len || host == provider {
        return None;
    }
    // the provider must not (transitively) call the host
    if reaches(net, provider, host) {
        return None;
    }
    for start in 0..=(h.program.body.len() - len) {
        let window = &h.program.body[start..start + len];
        // skip when the block is exactly a wrapper call already
        if len == 1 {
            continue;
        }
        let mut bindings = BTreeMap::new();
        if !match_blocks(&p.program.body, window, &p.program, &mut bindings) {
            continue;
        }
        if !p.program.params.iter().all(|pp| bindings.contains_key(&pp.name)) {
            continue;
        }
        let args: Vec<Expr> = p
            .program
            .params
            .iter()
            .map(|pp| bindings[&pp.name].clone())
            .collect();
        let mut rewritten = h.program.clone();
        rewritten.body.splice(
            start..start + len,
            [Statement::CallSkill {
                name: provider.to_string(),
                args,
            }],
        );
        return Some(RefactorProposal {
            case: RefactorCase::Subgraph,
            involved: vec![host.to_string(), provider.to_string()],
            script: vec![RewriteStep::SetProgram {
                id: host.to_string(),
                program: rewritten,
            }],
            inverse: vec![RewriteStep::SetProgram {
                id: host.to_string(),
                program: h.program.clone(),
            }],
            detected_generation: net.generation(),
        });
    }
    None
}

fn reaches(net: &SkillNetwork, from: &str, to: &str) -> bool {
    let mut stack = vec![from.to_string()];
    let mut seen = std::collections::BTreeSet::new();
    while let Some(id) = stack.pop() {
        if id == to {
            return true;
        }
        if seen.insert(id.clone()) {
            stack.extend(net.children_of(&id));
        }
    }
    false
}

/// Case D: two bodies share an identical top-level block (length >= 3) free
/// of parameters and let bindings; extract it as a nullary subskill. The
/// length floor keeps extraction a net compaction once the new node's
/// overhead is counted.
const MIN_EXTRACT_BLOCK: usize = 3;

fn detect_extract(a: &str, b: &str, net: &SkillNetwork) -> Option<RefactorProposal> {
    let na = net.node(a)?;
    let nb = net.node(b)?;
    let body_a = &na.program.body;
    let body_b = &nb.program.body;
    let mut best: Option<(usize, usize, usize)> = None; // (len, start_a, start_b)
    for len in (MIN_EXTRACT_BLOCK..=body_a.len().min(body_b.len())).rev() {
        for sa in 0..=(body_a.len() - len) {
            let block = &body_a[sa..sa + len];
            if !block_is_closed(block, &na.program) {
                continue;
            }
            for sb in 0..=(body_b.len() - len) {
                if block == &body_b[sb..sb + len] {
                    best = Some((len, sa, sb));
                    break;
                }
            }
            if best.is_some() {
                break;
            }
        }
        if best.is_some() {
            break;
        }
    }
    let (len, sa, sb) = best?;
    let block: Vec<Statement> = body_a[sa..sa + len].to_vec();
    let name = extracted_name(&block, net);
    let sub = SkillProgram::new(name.clone(), Vec::new(), Vec::new(), Vec::new(), block);

    let call = Statement::CallSkill {
        name: name.clone(),
        args: Vec::new(),
    };
    let mut new_a = na.program.clone();
    new_a.body.splice(sa..sa + len, [call.clone()]);
    let mut new_b = nb.program.clone();
    new_b.body.splice(sb..sb + len, [call]);

    Some(RefactorProposal {
        case: RefactorCase::Extract,
        involved: vec![a.to_string(), b.to_string(), name.clone()],
        script: vec![
            RewriteStep::InsertSkill { program: sub },
            RewriteStep::SetProgram {
                id: a.to_string(),
                program: new_a,
            },
            RewriteStep::SetProgram {
                id: b.to_string(),
                program: new_b,
            },
        ],
        inverse: vec![
            RewriteStep::SetProgram {
                id: a.to_string(),
                program: na.program.clone(),
            },
            RewriteStep::SetProgram {
                id: b.to_string(),
                program: nb.program.clone(),
            },
            RewriteStep::RemoveSkill { id: name },
        ],
        detected_generation: net.generation(),
    })
}

/// No parameter or let references: the block can stand alone as a nullary
/// skill body.
fn block_is_closed(block: &[Statement], owner: &SkillProgram) -> bool {
    fn expr_closed(e: &Expr, owner: &SkillProgram, lets: &[String]) -> bool {
        match e {
            Expr::Int(_) => true,
            Expr::Ident(name) => owner.param(name).is_none() && !lets.iter().any(|l| l == name),
            Expr::Binary { lhs, rhs, .. } | Expr::Min(lhs, rhs) => {
                expr_closed(lhs, owner, lets) && expr_closed(rhs, owner, lets)
            }
            Expr::Capacity(item) => expr_closed(item, owner, lets),
        }
    }
    fn cond_closed(c: &Condition, owner: &SkillProgram, lets: &[String]) -> bool {
        match c {
            Condition::InventoryAtLeast { item, count } => {
                expr_closed(item, owner, lets) && expr_closed(count, owner, lets)
            }
            Condition::StationPlaced { station } => expr_closed(station, owner, lets),
            Condition::ToolTierAtLeast { .. } => true,
            Condition::ParamCompare { lhs, rhs, .. } => {
                expr_closed(lhs, owner, lets) && expr_closed(rhs, owner, lets)
            }
        }
    }
    fn walk(block: &[Statement], owner: &SkillProgram, lets: &mut Vec<String>) -> bool {
        for stmt in block {
            let ok = match stmt {
                Statement::CallPrimitive { args, .. } | Statement::CallSkill { args, .. } => {
                    args.iter().all(|a| expr_closed(a, owner, lets))
                }
                Statement::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    cond_closed(cond, owner, lets)
                        && walk(then_body, owner, &mut lets.clone())
                        && walk(else_body, owner, &mut lets.clone())
                }
                Statement::Repeat { count, body } => {
                    expr_closed(count, owner, lets) && walk(body, owner, &mut lets.clone())
                }
                Statement::Let { var, value } => {
                    let ok = expr_closed(value, owner, lets);
                    lets.push(var.clone());
                    ok
                }
                Statement::Assert { cond } => cond_closed(cond, owner, lets),
            };
            if !ok {
                return false;
            }
        }
        true
    }
    walk(block, owner, &mut Vec::new())
}

fn extracted_name(block: &[Statement], net: &SkillNetwork) -> String {
    // stable short digest of the block's canonical print
    let text: String = block.iter().map(crate::dsl::print_statement).collect();
    let digest = crate::rng::mix(crate::rng::tag(&text));
    let base = format!("shared_{:06x}", digest & 0xff_ffff);
    if !net.contains(&base) {
        return base;
    }
    for version in 2.. {
        let candidate = format!("{base}_v{version}");
        if !net.contains(&candidate) {
            return candidate;
        }
    }
    unreachable!()
}

/// Case C: two skills anti-unify to a common template whose only
/// differences are literal leaves; synthesize the generalization and rewrite
/// both as wrappers.
fn detect_sibling(
    a: &str,
    b: &str,
    net: &SkillNetwork,
    vocab: &Vocabulary,
) -> Option<RefactorProposal> {
    let na = net.node(a)?;
    let nb = net.node(b)?;
    let pa = &na.program;
    let pb = &nb.program;
    if is_wrapper(pa) || is_wrapper(pb) {
        return None;
    }
    if pa.params.len() != pb.params.len()
        || pa
            .params
            .iter()
            .zip(&pb.params)
            .any(|(x, y)| x.kind != y.kind)
    {
        return None;
    }
    // align b's parameter names onto a's
    let rename: BTreeMap<&str, &str> = pb
        .params
        .iter()
        .zip(&pa.params)
        .map(|(from, to)| (from.name.as_str(), to.name.as_str()))
        .collect();

    let mut au = AntiUnifier {
        owner_a: pa,
        rename,
        fresh: Vec::new(),
        vocab,
    };
    let body = au.blocks(&pa.body, &pb.body)?;
    let pre = au.cond_set(pa.pre.atoms(), pb.pre.atoms())?;
    let post = au.cond_set(pa.post.atoms(), pb.post.atoms())?;
    if au.fresh.is_empty() {
        return None; // identical programs are case E, not C
    }
    if au.fresh.len() > MAX_FRESH_PARAMS {
        return None; // vacuous template
    }

    let name = general_name(a, b, net);
    let mut params = pa.params.clone();
    let fresh = au.fresh;
    for f in &fresh {
        params.push(ParamSig::new(f.name.clone(), f.kind));
    }
    let general = SkillProgram::new(name.clone(), params, pre, post, body);

    let wrapper = |original: &SkillProgram, leaf_of: &dyn Fn(&FreshParam) -> Expr| {
        let mut args: Vec<Expr> = original
            .params
            .iter()
            .map(|p| Expr::Ident(p.name.clone()))
            .collect();
        args.extend(fresh.iter().map(leaf_of));
        let mut w = original.clone();
        w.body = vec![Statement::CallSkill {
            name: name.clone(),
            args,
        }];
        w
    };
    let wrapper_a = wrapper(pa, &|f: &FreshParam| f.leaf_a.clone());
    let wrapper_b = wrapper(pb, &|f: &FreshParam| f.leaf_b.clone());

    Some(RefactorProposal {
        case: RefactorCase::Sibling,
        involved: vec![a.to_string(), b.to_string(), name.clone()],
        script: vec![
            RewriteStep::InsertSkill { program: general },
            RewriteStep::SetProgram {
                id: a.to_string(),
                program: wrapper_a,
            },
            RewriteStep::SetProgram {
                id: b.to_string(),
                program: wrapper_b,
            },
        ],
        inverse: vec![
            RewriteStep::SetProgram {
                id: a.to_string(),
                program: pa.clone(),
            },
            RewriteStep::SetProgram {
                id: b.to_string(),
                program: pb.clone(),
            },
            RewriteStep::RemoveSkill { id: name },
        ],
        detected_generation: net.generation(),
    })
}

#[derive(Clone)]
struct FreshParam {
    name: String,
    kind: ParamKind,
    leaf_a: Expr,
    leaf_b: Expr,
}

struct AntiUnifier<'a> {
    owner_a: &'a SkillProgram,
    rename: BTreeMap<&'a str, &'a str>,
    fresh: Vec<FreshParam>,
    vocab: &'a Vocabulary,
}

impl AntiUnifier<'_> {
    fn blocks(&mut self, a: &[Statement], b: &[Statement]) -> Option<Vec<Statement>> {
        if a.len() != b.len() {
            return None;
        }
        a.iter().zip(b).map(|(x, y)| self.stmt(x, y)).collect()
    }

    fn stmt(&mut self, a: &Statement, b: &Statement) -> Option<Statement> {
        match (a, b) {
            (
                Statement::CallPrimitive { name: n1, args: a1 },
                Statement::CallPrimitive { name: n2, args: a2 },
            ) if n1 == n2 => Some(Statement::CallPrimitive {
                name: n1.clone(),
                args: self.exprs(a1, a2)?,
            }),
            (
                Statement::CallSkill { name: n1, args: a1 },
                Statement::CallSkill { name: n2, args: a2 },
            ) if n1 == n2 => Some(Statement::CallSkill {
                name: n1.clone(),
                args: self.exprs(a1, a2)?,
            }),
            (
                Statement::If {
                    cond: c1,
                    then_body: t1,
                    else_body: e1,
                },
                Statement::If {
                    cond: c2,
                    then_body: t2,
                    else_body: e2,
                },
            ) => Some(Statement::If {
                cond: self.cond(c1, c2)?,
                then_body: self.blocks(t1, t2)?,
                else_body: self.blocks(e1, e2)?,
            }),
            (
                Statement::Repeat { count: c1, body: b1 },
                Statement::Repeat { count: c2, body: b2 },
            ) => Some(Statement::Repeat {
                count: self.expr(c1, c2)?,
                body: self.blocks(b1, b2)?,
            }),
            (
                Statement::Let { var: v1, value: e1 },
                Statement::Let { var: v2, value: e2 },
            ) if v1 == v2 => Some(Statement::Let {
                var: v1.clone(),
                value: self.expr(e1, e2)?,
            }),
            (Statement::Assert { cond: c1 }, Statement::Assert { cond: c2 }) => {
                Some(Statement::Assert {
                    cond: self.cond(c1, c2)?,
                })
            }
            _ => None,
        }
    }

    fn exprs(&mut self, a: &[Expr], b: &[Expr]) -> Option<Vec<Expr>> {
        if a.len() != b.len() {
            return None;
        }
        a.iter().zip(b).map(|(x, y)| self.expr(x, y)).collect()
    }

    fn cond_set(&mut self, a: &[Condition], b: &[Condition]) -> Option<Vec<Condition>> {
        if a.len() != b.len() {
            return None;
        }
        a.iter().zip(b).map(|(x, y)| self.cond(x, y)).collect()
    }

    fn cond(&mut self, a: &Condition, b: &Condition) -> Option<Condition> {
        match (a, b) {
            (
                Condition::InventoryAtLeast { item: i1, count: c1 },
                Condition::InventoryAtLeast { item: i2, count: c2 },
            ) => Some(Condition::InventoryAtLeast {
                item: self.expr(i1, i2)?,
                count: self.expr(c1, c2)?,
            }),
            (
                Condition::StationPlaced { station: s1 },
                Condition::StationPlaced { station: s2 },
            ) => Some(Condition::StationPlaced {
                station: self.expr(s1, s2)?,
            }),
            // the grammar pins tiers to integer literals, so tier atoms can
            // never be abstracted into a parameter
            (
                Condition::ToolTierAtLeast { tier: t1 },
                Condition::ToolTierAtLeast { tier: t2 },
            ) if t1 == t2 => Some(Condition::ToolTierAtLeast { tier: *t1 }),
            (
                Condition::ParamCompare {
                    lhs: l1,
                    rel: r1,
                    rhs: h1,
                },
                Condition::ParamCompare {
                    lhs: l2,
                    rel: r2,
                    rhs: h2,
                },
            ) if r1 == r2 => Some(Condition::ParamCompare {
                lhs: self.expr(l1, l2)?,
                rel: *r1,
                rhs: self.expr(h1, h2)?,
            }),
            _ => None,
        }
    }

    fn expr(&mut self, a: &Expr, b: &Expr) -> Option<Expr> {
        let b_renamed = match b {
            Expr::Ident(name) => match self.rename.get(name.as_str()) {
                Some(to) => Expr::Ident((*to).to_string()),
                None => b.clone(),
            },
            _ => b.clone(),
        };
        if *a == b_renamed {
            return Some(a.clone());
        }
        match (a, &b_renamed) {
            (Expr::Int(x), Expr::Int(y)) => Some(Expr::Ident(self.fresh_param(
                ParamKind::Int,
                Expr::Int(*x),
                Expr::Int(*y),
            ))),
            (Expr::Ident(x), Expr::Ident(y)) => {
                // both must be kind literals of the same family
                if self.owner_a.param(x).is_some() || self.owner_a.param(y).is_some() {
                    return None;
                }
                let kind = if self.vocab.items.contains(x) && self.vocab.items.contains(y) {
                    ParamKind::Item
                } else if self.vocab.stations.contains(x) && self.vocab.stations.contains(y) {
                    ParamKind::Station
                } else {
                    return None;
                };
                Some(Expr::Ident(self.fresh_param(
                    kind,
                    Expr::Ident(x.clone()),
                    Expr::Ident(y.clone()),
                )))
            }
            (
                Expr::Binary {
                    op: o1,
                    lhs: l1,
                    rhs: r1,
                },
                Expr::Binary {
                    op: o2,
                    lhs: l2,
                    rhs: r2,
                },
            ) if o1 == o2 => Some(Expr::Binary {
                op: *o1,
                lhs: Box::new(self.expr(l1, l2)?),
                rhs: Box::new(self.expr(r1, r2)?),
            }),
            (Expr::Min(a1, a2), Expr::Min(b1, b2)) => Some(Expr::Min(
                Box::new(self.expr(a1, b1)?),
                Box::new(self.expr(a2, b2)?),
            )),
            (Expr::Capacity(i1), Expr::Capacity(i2)) => {
                Some(Expr::Capacity(Box::new(self.expr(i1, i2)?)))
            }
            _ => None,
        }
    }

    fn fresh_param(&mut self, kind: ParamKind, leaf_a: Expr, leaf_b: Expr) -> String {
        // reuse the same parameter for a repeated mismatch pair
        if let Some(existing) = self
            .fresh
            .iter()
            .find(|f| f.leaf_a == leaf_a && f.leaf_b == leaf_b && f.kind == kind)
        {
            return existing.name.clone();
        }
        let name = format!("p{}", self.fresh.len());
        self.fresh.push(FreshParam {
            name: name.clone(),
            kind,
            leaf_a,
            leaf_b,
        });
        name
    }
}

/// Longest common prefix plus longest common suffix of the two names:
/// mineOakLogs + mineBirchLogs becomes mineLogs.
fn general_name(a: &str, b: &str, net: &SkillNetwork) -> String {
    let prefix_len = a
        .bytes()
        .zip(b.bytes())
        .take_while(|(x, y)| x == y)
        .count();
    let suffix_len = a
        .bytes()
        .rev()
        .zip(b.bytes().rev())
        .take_while(|(x, y)| x == y)
        .count()
        .min(a.len() - prefix_len)
        .min(b.len() - prefix_len);
    let candidate = format!("{}{}", &a[..prefix_len], &a[a.len() - suffix_len..]);
    let base = if candidate.len() >= 3 && candidate.chars().next().is_some_and(|c| c.is_alphabetic())
    {
        candidate
    } else {
        format!("general_{a}_{b}")
    };
    if !net.contains(&base) {
        return base;
    }
    for version in 2.. {
        let versioned = format!("{base}_v{version}");
        if !net.contains(&versioned) {
            return versioned;
        }
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// application, validation, rollback

fn apply_step(
    net: &mut SkillNetwork,
    step: &RewriteStep,
    vocab: &Vocabulary,
) -> Result<(), NetworkError> {
    match step {
        RewriteStep::SetProgram { id, program } => net.set_program(id, program.clone(), vocab),
        RewriteStep::InsertSkill { program } => net.insert_skill(program.clone(), vocab),
        RewriteStep::RemoveSkill { id } => net.remove_skill(id).map(|_| ()),
        RewriteStep::RedirectCalls { from, to } => net.redirect_links(from, to),
        RewriteStep::DemoteToAlias { id, target } => net.demote_to_alias(id, target),
        RewriteStep::PromoteFromAlias { id, program } => {
            net.promote_from_alias(id, program.clone())
        }
    }
}

/// Applies a proposal's script. Fails on a stale proposal (the network
/// changed since detection); fails atomically per step otherwise.
pub fn apply_refactor(
    net: &mut SkillNetwork,
    proposal: &RefactorProposal,
    vocab: &Vocabulary,
) -> Result<Journal, RefactorError> {
    if proposal.detected_generation != net.generation() {
        return Err(RefactorError::StaleGeneration {
            detected: proposal.detected_generation,
            current: net.generation(),
        });
    }
    for step in &proposal.script {
        apply_step(net, step, vocab)?;
    }
    Ok(Journal {
        case: proposal.case,
        involved: proposal.involved.clone(),
        inverse: proposal.inverse.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitOutcome {
    Committed {
        pre_rate: Option<f64>,
        post_rate: Option<f64>,
    },
    Reverted {
        pre_rate: f64,
        post_rate: f64,
        via_snapshot: bool,
    },
}

/// Replays the validation window against the refactored network and commits
/// or reverts. The evaluator runs one episode of a window task against a
/// network and reports goal satisfaction; it must not mutate shared state.
pub fn validate_and_commit(
    net: &mut SkillNetwork,
    window: &ValidationWindow,
    journal: &Journal,
    snapshot: &NetworkSnapshot,
    vocab: &Vocabulary,
    evaluate: &mut dyn FnMut(&SkillNetwork, &WindowTask) -> bool,
) -> CommitOutcome {
    let Some(pre_rate) = window.pre_rate() else {
        // nothing relevant to replay; the rewrite stands
        return CommitOutcome::Committed {
            pre_rate: None,
            post_rate: None,
        };
    };
    let wins = window
        .tasks
        .iter()
        .filter(|t| evaluate(net, t))
        .count();
    let post_rate = wins as f64 / window.tasks.len() as f64;
    if post_rate >= REGRESSION_FRACTION * pre_rate {
        return CommitOutcome::Committed {
            pre_rate: Some(pre_rate),
            post_rate: Some(post_rate),
        };
    }
    // revert through the journal; fall back to the snapshot if any inverse
    // step fails its own application checks
    let mut candidate = net.clone();
    let mut inverse_ok = true;
    for step in &journal.inverse {
        if apply_step(&mut candidate, step, vocab).is_err() {
            inverse_ok = false;
            break;
        }
    }
    if inverse_ok {
        *net = candidate;
        CommitOutcome::Reverted {
            pre_rate,
            post_rate,
            via_snapshot: false,
        }
    } else {
        *net = SkillNetwork::restore(snapshot);
        CommitOutcome::Reverted {
            pre_rate,
            post_rate,
            via_snapshot: true,
        }
    }
}

/// What one trigger did, for the journal log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefactorEvent {
    pub case: RefactorCase,
    pub involved: Vec<NodeId>,
    pub outcome: CommitOutcome,
}

/// The refactor pipeline, gated to every `TRIGGER_PERIOD`-th success. The
/// episode's succeeded skills each seed a candidate set; of everything
/// detected, at most one proposal (the most conservative) applies.
#[allow(clippy::too_many_arguments)]
pub fn maybe_refactor(
    net: &mut SkillNetwork,
    succeeded: &[NodeId],
    success_counter: u64,
    history: &[WindowTask],
    vocab: &Vocabulary,
    evaluate: &mut dyn FnMut(&SkillNetwork, &WindowTask) -> bool,
) -> Option<RefactorEvent> {
    if success_counter == 0 || success_counter % TRIGGER_PERIOD != 0 {
        return None;
    }
    let mut proposals = Vec::new();
    for s_t in succeeded {
        if !net.contains(s_t) {
            continue;
        }
        let candidates = candidate_set(s_t, net);
        proposals.extend(detect_cases(s_t, &candidates, net, vocab));
    }
    proposals.sort_by(|a, b| {
        a.case
            .priority()
            .cmp(&b.case.priority())
            .then_with(|| a.involved.cmp(&b.involved))
    });
    proposals.dedup();
    let proposal = proposals
        .into_iter()
        .find(|p| proposal_is_sound(net, p, vocab))?;
    let snapshot = net.snapshot();
    let window = ValidationWindow::select(history, &proposal.involved);
    let journal = match apply_refactor(net, &proposal, vocab) {
        Ok(j) => j,
        Err(_) => return None,
    };
    let outcome = validate_and_commit(net, &window, &journal, &snapshot, vocab, evaluate);
    Some(RefactorEvent {
        case: journal.case,
        involved: journal.involved,
        outcome,
    })
}

/// Dry-runs a proposal on a clone: every step must apply cleanly and the
/// resulting invocation graph must stay acyclic (a cycle would recurse at
/// execution time).
pub fn proposal_is_sound(
    net: &SkillNetwork,
    proposal: &RefactorProposal,
    vocab: &Vocabulary,
) -> bool {
    let mut trial = net.clone();
    for step in &proposal.script {
        if apply_step(&mut trial, step, vocab).is_err() {
            return false;
        }
    }
    !has_call_cycle(&trial)
}

fn has_call_cycle(net: &SkillNetwork) -> bool {
    // DFS coloring over the link graph
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
