//! Structural edits: the concrete carrier of a repair proposal.
//!
//! `apply_edit` has value semantics — it either returns a new program or
//! fails without touching the input. Semantic validation against a
//! vocabulary is the caller's second step (see `validate`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Condition, Expr, SkillProgram, Statement};
use super::path::{resolve_block_mut, resolve_expr_mut, AstPath};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallTarget {
    Primitive(String),
    Skill(String),
}

impl CallTarget {
    pub fn name(&self) -> &str {
        match self {
            CallTarget::Primitive(n) | CallTarget::Skill(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edit {
    /// Replace an integer literal at an expression slot.
    SetConstant { path: AstPath, value: i64 },
    /// Insert a statement before index i of a block (i == len appends).
    InsertStatement { path: AstPath, stmt: Statement },
    RemoveStatement { path: AstPath },
    /// Replace the callee and arguments of a call statement.
    ReplaceCall {
        path: AstPath,
        callee: CallTarget,
        args: Vec<Expr>,
    },
    AddPrecondition { cond: Condition },
    AddPostcondition { cond: Condition },
    /// Permute the statements of a block.
    ReorderStatements { path: AstPath, perm: Vec<usize> },
}

impl Edit {
    /// The statement address this edit mutates, used for conflict and
    /// momentum-inversion checks. Inserts address a gap, not a node, and
    /// condition edits address no statement; both return `None`.
    pub fn mutated_statement(&self) -> Option<AstPath> {
        match self {
            Edit::SetConstant { path, .. } => path.owning_statement(),
            Edit::RemoveStatement { path } | Edit::ReplaceCall { path, .. } => {
                path.owning_statement()
            }
            Edit::InsertStatement { .. }
            | Edit::AddPrecondition { .. }
            | Edit::AddPostcondition { .. }
            | Edit::ReorderStatements { .. } => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Edit::SetConstant { path, value } => format!("set constant at {path} to {value}"),
            Edit::InsertStatement { path, stmt } => format!(
                "insert `{}` at {path}",
                super::printer::print_statement(stmt).trim()
            ),
            Edit::RemoveStatement { path } => format!("remove statement at {path}"),
            Edit::ReplaceCall { path, callee, .. } => {
                format!("replace call at {path} with {}", callee.name())
            }
            Edit::AddPrecondition { cond } => {
                format!("add precondition {}", super::printer::print_condition(cond))
            }
            Edit::AddPostcondition { cond } => format!(
                "add postcondition {}",
                super::printer::print_condition(cond)
            ),
            Edit::ReorderStatements { path, perm } => {
                format!("reorder block at {path} by {perm:?}")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EditError {
    #[error("invalid path `{0}`")]
    InvalidPath(AstPathDisplay),
    #[error("path `{0}` does not address an integer literal")]
    NotALiteral(AstPathDisplay),
    #[error("path `{0}` does not address a call statement")]
    NotACall(AstPathDisplay),
    #[error("invalid permutation {perm:?} for block of {len} statements")]
    BadPermutation { perm: Vec<usize>, len: usize },
}

/// Newtype so the error can own a readable path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstPathDisplay(pub String);

impl std::fmt::Display for AstPathDisplay {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad_path(path: &AstPath) -> EditError {
    EditError::InvalidPath(AstPathDisplay(path.to_string()))
}

/// Applies one edit, returning the edited program. The input is untouched.
pub fn apply_edit(program: &SkillProgram, edit: &Edit) -> Result<SkillProgram, EditError> {
    let mut p = program.clone();
    match edit {
        Edit::SetConstant { path, value } => {
            let slot = resolve_expr_mut(&mut p.body, path).ok_or_else(|| bad_path(path))?;
            match slot {
                Expr::Int(n) => *n = *value,
                _ => return Err(EditError::NotALiteral(AstPathDisplay(path.to_string()))),
            }
        }
        Edit::InsertStatement { path, stmt } => {
            let (block, index) = resolve_block_mut(&mut p.body, path).ok_or_else(|| bad_path(path))?;
            let i = index.ok_or_else(|| bad_path(path))?;
            if i > block.len() {
                return Err(bad_path(path));
            }
            block.insert(i, stmt.clone());
        }
        Edit::RemoveStatement { path } => {
            let (block, index) = resolve_block_mut(&mut p.body, path).ok_or_else(|| bad_path(path))?;
            let i = index.ok_or_else(|| bad_path(path))?;
            if i >= block.len() {
                return Err(bad_path(path));
            }
            block.remove(i);
        }
        Edit::ReplaceCall { path, callee, args } => {
            let (block, index) = resolve_block_mut(&mut p.body, path).ok_or_else(|| bad_path(path))?;
            let i = index.ok_or_else(|| bad_path(path))?;
            let slot = block.get_mut(i).ok_or_else(|| bad_path(path))?;
            match slot {
                Statement::CallPrimitive { .. } | Statement::CallSkill { .. } => {
                    *slot = match callee {
                        CallTarget::Primitive(name) => Statement::CallPrimitive {
                            name: name.clone(),
                            args: args.clone(),
                        },
                        CallTarget::Skill(name) => Statement::CallSkill {
                            name: name.clone(),
                            args: args.clone(),
                        },
                    };
                }
                _ => return Err(EditError::NotACall(AstPathDisplay(path.to_string()))),
            }
        }
        Edit::AddPrecondition { cond } => p.pre.insert(cond.clone()),
        Edit::AddPostcondition { cond } => p.post.insert(cond.clone()),
        Edit::ReorderStatements { path, perm } => {
            let (block, index) = resolve_block_mut(&mut p.body, path).ok_or_else(|| bad_path(path))?;
            if index.is_some() {
                return Err(bad_path(path));
            }
            let len = block.len();
            let mut seen = vec![false; len];
            if perm.len() != len || perm.iter().any(|&i| i >= len || std::mem::replace(&mut seen[i], true)) {
                return Err(EditError::BadPermutation {
                    perm: perm.clone(),
                    len,
                });
            }
            let old = std::mem::take(block);
            let mut slots: Vec<Option<Statement>> = old.into_iter().map(Some).collect();
            for &i in perm {
                block.push(slots[i].take().expect("permutation checked"));
            }
        }
    }
    Ok(p)
}
