//! AST types for skill programs.

use serde::{Deserialize, Serialize};

use super::printer::print_condition;

/// A parsed skill: name, typed parameters, declared conditions, and a body.
///
/// Invariants (enforced by the parser and `validate`):
/// - parameter names are unique and defaults type-match their kind;
/// - `pre` and `post` are positive conjunctions, kept in canonical order;
/// - every identifier in the body is a parameter, a let binding in scope,
///   a primitive name, a skill name, or a world kind literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillProgram {
    pub name: String,
    pub params: Vec<ParamSig>,
    pub pre: ConditionSet,
    pub post: ConditionSet,
    pub body: Vec<Statement>,
}

impl SkillProgram {
    pub fn new(
        name: impl Into<String>,
        params: Vec<ParamSig>,
        pre: Vec<Condition>,
        post: Vec<Condition>,
        body: Vec<Statement>,
    ) -> Self {
        SkillProgram {
            name: name.into(),
            params,
            pre: ConditionSet::new(pre),
            post: ConditionSet::new(post),
            body,
        }
    }

    /// Names of skills invoked anywhere in the body (the node's children).
    pub fn called_skills(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_calls(&self.body, &mut out);
        out.sort();
        out.dedup();
        out
    }

    pub fn param(&self, name: &str) -> Option<&ParamSig> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Total number of AST nodes; the refactorer's compactness metric.
    pub fn node_count(&self) -> usize {
        1 + self.params.len()
            + self.pre.atoms().iter().map(condition_nodes).sum::<usize>()
            + self.post.atoms().iter().map(condition_nodes).sum::<usize>()
            + self.body.iter().map(statement_nodes).sum::<usize>()
    }
}

fn collect_calls(body: &[Statement], out: &mut Vec<String>) {
    for stmt in body {
        match stmt {
            Statement::CallSkill { name, .. } => out.push(name.clone()),
            Statement::If {
                then_body,
                else_body,
                ..
            } => {
                collect_calls(then_body, out);
                collect_calls(else_body, out);
            }
            Statement::Repeat { body, .. } => collect_calls(body, out),
            _ => {}
        }
    }
}

fn statement_nodes(stmt: &Statement) -> usize {
    match stmt {
        Statement::CallPrimitive { args, .. } | Statement::CallSkill { args, .. } => {
            1 + args.iter().map(expr_nodes).sum::<usize>()
        }
        Statement::If {
            cond,
            then_body,
            else_body,
        } => {
            1 + condition_nodes(cond)
                + then_body.iter().map(statement_nodes).sum::<usize>()
                + else_body.iter().map(statement_nodes).sum::<usize>()
        }
        Statement::Repeat { count, body } => {
            1 + expr_nodes(count) + body.iter().map(statement_nodes).sum::<usize>()
        }
        Statement::Let { value, .. } => 1 + expr_nodes(value),
        Statement::Assert { cond } => 1 + condition_nodes(cond),
    }
}

fn expr_nodes(e: &Expr) -> usize {
    match e {
        Expr::Int(_) | Expr::Ident(_) => 1,
        Expr::Binary { lhs, rhs, .. } | Expr::Min(lhs, rhs) => {
            1 + expr_nodes(lhs) + expr_nodes(rhs)
        }
        Expr::Capacity(item) => 1 + expr_nodes(item),
    }
}

fn condition_nodes(c: &Condition) -> usize {
    match c {
        Condition::InventoryAtLeast { item, count } => 1 + expr_nodes(item) + expr_nodes(count),
        Condition::StationPlaced { station } => 1 + expr_nodes(station),
        Condition::ToolTierAtLeast { .. } => 1,
        Condition::ParamCompare { lhs, rhs, .. } => 1 + expr_nodes(lhs) + expr_nodes(rhs),
    }
}

/// One declared parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSig {
    pub name: String,
    pub kind: ParamKind,
    pub default: Option<Value>,
}

impl ParamSig {
    pub fn new(name: impl Into<String>, kind: ParamKind) -> Self {
        ParamSig {
            name: name.into(),
            kind,
            default: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Int,
    Item,
    Station,
}

impl ParamKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ParamKind::Int => "int",
            ParamKind::Item => "item",
            ParamKind::Station => "station",
        }
    }
}

/// Runtime values: integers, or item/station kind names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Int(i64),
    Kind(String),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            Value::Kind(_) => None,
        }
    }

    pub fn as_kind(&self) -> Option<&str> {
        match self {
            Value::Kind(k) => Some(k),
            Value::Int(_) => None,
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Kind(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statement {
    CallPrimitive { name: String, args: Vec<Expr> },
    CallSkill { name: String, args: Vec<Expr> },
    If {
        cond: Condition,
        then_body: Vec<Statement>,
        else_body: Vec<Statement>,
    },
    Repeat { count: Expr, body: Vec<Statement> },
    Let { var: String, value: Expr },
    Assert { cond: Condition },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Int(i64),
    Ident(String),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// `min(a, b)` over integers.
    Min(Box<Expr>, Box<Expr>),
    /// `capacity(item)`: how many more units of the item fit in the inventory.
    Capacity(Box<Expr>),
}

impl Expr {
    pub fn ident(name: impl Into<String>) -> Self {
        Expr::Ident(name.into())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rel {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
            Rel::Eq => "==",
            Rel::Ne => "!=",
        }
    }

    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Rel::Lt => lhs < rhs,
            Rel::Le => lhs <= rhs,
            Rel::Gt => lhs > rhs,
            Rel::Ge => lhs >= rhs,
            Rel::Eq => lhs == rhs,
            Rel::Ne => lhs != rhs,
        }
    }
}

/// A single condition atom. Negation and disjunction are not expressible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    InventoryAtLeast { item: Expr, count: Expr },
    StationPlaced { station: Expr },
    ToolTierAtLeast { tier: i64 },
    ParamCompare { lhs: Expr, rel: Rel, rhs: Expr },
}

impl Condition {
    pub fn inv(item: impl Into<String>, count: i64) -> Self {
        Condition::InventoryAtLeast {
            item: Expr::Ident(item.into()),
            count: Expr::Int(count),
        }
    }

    pub fn station(station: impl Into<String>) -> Self {
        Condition::StationPlaced {
            station: Expr::Ident(station.into()),
        }
    }

    pub fn tool_tier(tier: i64) -> Self {
        Condition::ToolTierAtLeast { tier }
    }
}

/// A conjunction of atoms, kept sorted by printed form and deduplicated so
/// that structural equality lines up with canonical textual equality.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConditionSet {
    atoms: Vec<Condition>,
}

impl ConditionSet {
    pub fn new(mut atoms: Vec<Condition>) -> Self {
        atoms.sort_by_key(print_condition);
        atoms.dedup();
        ConditionSet { atoms }
    }

    pub fn empty() -> Self {
        ConditionSet { atoms: Vec::new() }
    }

    pub fn atoms(&self) -> &[Condition] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    /// Adds an atom, preserving canonical order. Duplicates are no-ops.
    pub fn insert(&mut self, cond: Condition) {
        if !self.atoms.contains(&cond) {
            self.atoms.push(cond);
            self.atoms.sort_by_key(print_condition);
        }
    }

    pub fn remove(&mut self, index: usize) -> Option<Condition> {
        if index < self.atoms.len() {
            Some(self.atoms.remove(index))
        } else {
            None
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Condition> {
        self.atoms.iter()
    }
}

impl FromIterator<Condition> for ConditionSet {
    fn from_iter<T: IntoIterator<Item = Condition>>(iter: T) -> Self {
        ConditionSet::new(iter.into_iter().collect())
    }
}
