//! Paths into a skill body.
//!
//! A path is a sequence of steps walked from the top-level statement list.
//! Depending on its final step it addresses a statement, an expression slot
//! of a statement, or a whole block. Paths serialize as strings like
//! `"2/else/0/arg1"` so they can travel over the operator wire protocol.

use serde::{Deserialize, Serialize};

use super::ast::{Expr, Statement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PathStep {
    /// Index into the current statement list.
    Stmt(usize),
    /// Descend into the then-block of an `if`.
    Then,
    /// Descend into the else-block of an `if`.
    Else,
    /// Descend into the body of a `repeat`.
    Loop,
    /// Address the n-th argument expression of a call.
    Arg(usize),
    /// Address the bound expression of a `repeat`.
    Count,
    /// Address the value expression of a `let`.
    Value,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct AstPath(pub Vec<PathStep>);

impl AstPath {
    pub fn root() -> Self {
        AstPath(Vec::new())
    }

    pub fn stmt(indices: &[usize]) -> Self {
        AstPath(indices.iter().map(|&i| PathStep::Stmt(i)).collect())
    }

    pub fn push(mut self, step: PathStep) -> Self {
        self.0.push(step);
        self
    }

    /// The statement address this path mutates, if any: the path up to and
    /// including its last `Stmt` step. Expression slots resolve to their
    /// owning statement; block addresses resolve to the enclosing statement.
    pub fn owning_statement(&self) -> Option<AstPath> {
        let last = self
            .0
            .iter()
            .rposition(|s| matches!(s, PathStep::Stmt(_)))?;
        Some(AstPath(self.0[..=last].to_vec()))
    }
}

impl std::fmt::Display for AstPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, step) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "/")?;
            }
            match step {
                PathStep::Stmt(n) => write!(f, "{n}")?,
                PathStep::Then => write!(f, "then")?,
                PathStep::Else => write!(f, "else")?,
                PathStep::Loop => write!(f, "loop")?,
                PathStep::Arg(n) => write!(f, "arg{n}")?,
                PathStep::Count => write!(f, "count")?,
                PathStep::Value => write!(f, "value")?,
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for AstPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Ok(AstPath::root());
        }
        let mut steps = Vec::new();
        for part in s.split('/') {
            let step = match part {
                "then" => PathStep::Then,
                "else" => PathStep::Else,
                "loop" => PathStep::Loop,
                "count" => PathStep::Count,
                "value" => PathStep::Value,
                p if p.starts_with("arg") => PathStep::Arg(
                    p[3..]
                        .parse()
                        .map_err(|_| format!("bad path step `{p}`"))?,
                ),
                p => PathStep::Stmt(p.parse().map_err(|_| format!("bad path step `{p}`"))?),
            };
            steps.push(step);
        }
        Ok(AstPath(steps))
    }
}

impl Serialize for AstPath {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AstPath {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What a fully-resolved path points at.
pub enum Resolved<'a> {
    Statement(&'a Statement),
    Expr(&'a Expr),
    Block(&'a [Statement]),
}

/// The integer literal at an expression slot, if the path addresses one.
pub fn literal_at(body: &[Statement], path: &AstPath) -> Option<i64> {
    match resolve(body, path)? {
        Resolved::Expr(Expr::Int(n)) => Some(*n),
        _ => None,
    }
}

/// The statement a path addresses, if any.
pub fn statement_at<'a>(body: &'a [Statement], path: &AstPath) -> Option<&'a Statement> {
    match resolve(body, path)? {
        Resolved::Statement(s) => Some(s),
        _ => None,
    }
}

/// Resolves a path against a body. `None` if any step is invalid.
pub fn resolve<'a>(body: &'a [Statement], path: &AstPath) -> Option<Resolved<'a>> {
    let mut block: &'a [Statement] = body;
    let mut stmt: Option<&'a Statement> = None;
    let mut steps = path.0.iter().peekable();

    while let Some(step) = steps.next() {
        match step {
            PathStep::Stmt(i) => {
                stmt = Some(block.get(*i)?);
            }
            PathStep::Then | PathStep::Else | PathStep::Loop => {
                let s = stmt.take()?;
                block = match (step, s) {
                    (PathStep::Then, Statement::If { then_body, .. }) => then_body,
                    (PathStep::Else, Statement::If { else_body, .. }) => else_body,
                    (PathStep::Loop, Statement::Repeat { body, .. }) => body,
                    _ => return None,
                };
            }
            PathStep::Arg(i) => {
                let s = stmt.take()?;
                let args = match s {
                    Statement::CallPrimitive { args, .. } | Statement::CallSkill { args, .. } => {
                        args
                    }
                    _ => return None,
                };
                let e = args.get(*i)?;
                return if steps.next().is_none() {
                    Some(Resolved::Expr(e))
                } else {
                    None
                };
            }
            PathStep::Count => {
                let s = stmt.take()?;
                let Statement::Repeat { count, .. } = s else {
                    return None;
                };
                return if steps.next().is_none() {
                    Some(Resolved::Expr(count))
                } else {
                    None
                };
            }
            PathStep::Value => {
                let s = stmt.take()?;
                let Statement::Let { value, .. } = s else {
                    return None;
                };
                return if steps.next().is_none() {
                    Some(Resolved::Expr(value))
                } else {
                    None
                };
            }
        }
    }
    match stmt {
        Some(s) => Some(Resolved::Statement(s)),
        None => Some(Resolved::Block(block)),
    }
}

/// Mutable access to the block containing the path's final `Stmt` step.
/// Returns the block and the index; for a block-address path, the index is
/// `None`. Fails if intermediate steps are invalid.
pub(crate) fn resolve_block_mut<'a>(
    body: &'a mut Vec<Statement>,
    path: &AstPath,
) -> Option<(&'a mut Vec<Statement>, Option<usize>)> {
    let mut block: &'a mut Vec<Statement> = body;
    let mut index: Option<usize> = None;

    for step in &path.0 {
        match step {
            PathStep::Stmt(i) => {
                if index.is_some() {
                    // two Stmt steps in a row are only valid across a block step
                    return None;
                }
                index = Some(*i);
            }
            PathStep::Then | PathStep::Else | PathStep::Loop => {
                let i = index.take()?;
                let s = block.get_mut(i)?;
                block = match (step, s) {
                    (PathStep::Then, Statement::If { then_body, .. }) => then_body,
                    (PathStep::Else, Statement::If { else_body, .. }) => else_body,
                    (PathStep::Loop, Statement::Repeat { body, .. }) => body,
                    _ => return None,
                };
            }
            PathStep::Arg(_) | PathStep::Count | PathStep::Value => return None,
        }
    }
    Some((block, index))
}

/// Mutable access to the expression slot a path addresses.
pub(crate) fn resolve_expr_mut<'a>(
    body: &'a mut Vec<Statement>,
    path: &AstPath,
) -> Option<&'a mut Expr> {
    let (last, prefix) = path.0.split_last()?;
    let stmt_path = AstPath(prefix.to_vec());
    let (block, index) = resolve_block_mut(body, &stmt_path)?;
    let stmt = block.get_mut(index?)?;
    match (last, stmt) {
        (PathStep::Arg(i), Statement::CallPrimitive { args, .. })
        | (PathStep::Arg(i), Statement::CallSkill { args, .. }) => args.get_mut(*i),
        (PathStep::Count, Statement::Repeat { count, .. }) => Some(count),
        (PathStep::Value, Statement::Let { value, .. }) => Some(value),
        _ => None,
    }
}
