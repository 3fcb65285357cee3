//! The skill programming language.
//!
//! A skill is a named program with typed parameters, a body of statements,
//! and declared pre/postconditions. The condition language is a positive
//! conjunction of four atom kinds; entailment between atoms is syntactic
//! dominance, which keeps goal matching decidable for the planner.
//!
//! Programs are values: parsing, printing, and edits never share mutable
//! state, so everything here is safe to use from any thread.
//!
//! Canonical printing sorts condition atoms and fixes indentation so that
//! textual equality of printed programs implies structural equality; the
//! refactorer's duplicate detection leans on this.

mod ast;
mod edit;
mod entail;
mod lexer;
mod parser;
mod path;
mod printer;
mod validate;

pub use ast::{
    BinOp, Condition, ConditionSet, Expr, ParamKind, ParamSig, Rel, SkillProgram, Statement,
    Value,
};
pub use edit::{apply_edit, CallTarget, Edit, EditError};
pub use entail::{
    bind_for_goal, entails, entails_atom, eval_condition, eval_expr, subst_condition,
    subst_condition_set, subst_expr, Bindings, EvalError, StateQuery,
};
pub use lexer::Lexed;
pub use parser::{parse_condition, parse_expr, parse_skill, parse_skill_file, ParseError};
pub use path::{literal_at, resolve, statement_at, AstPath, PathStep, Resolved};
pub use printer::{print_condition, print_expr, print_skill, print_statement};
pub use validate::{validate, PrimitiveSig, ValidateError, Vocabulary};
