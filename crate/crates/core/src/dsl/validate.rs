//! Semantic validation of a parsed skill against a vocabulary.
//!
//! The parser is world-agnostic; this pass classifies identifiers
//! (parameter, let binding, item kind, station kind) and checks call
//! signatures, so a program that validates can be interpreted without
//! name errors.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::ast::{Condition, Expr, ParamKind, SkillProgram, Statement};

/// Argument signature of a primitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimitiveSig {
    pub name: String,
    pub args: Vec<ParamKind>,
}

/// The names a body may reference: primitives with signatures, item and
/// station kinds, and the skills visible for `call` (with their arities).
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    pub primitives: BTreeMap<String, Vec<ParamKind>>,
    pub items: BTreeSet<String>,
    pub stations: BTreeSet<String>,
    pub skills: BTreeMap<String, Vec<ParamKind>>,
    /// When false, `call` targets missing from `skills` are tolerated;
    /// the network re-validates on insertion when all nodes are known.
    pub strict_skill_calls: bool,
}

impl Vocabulary {
    pub fn with_skill(mut self, name: &str, params: Vec<ParamKind>) -> Self {
        self.skills.insert(name.to_string(), params);
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidateError {
    #[error("skill `{skill}`: unknown identifier `{name}`")]
    UnknownIdent { skill: String, name: String },
    #[error("skill `{skill}`: unknown primitive `{name}`")]
    UnknownPrimitive { skill: String, name: String },
    #[error("skill `{skill}`: unknown skill `{name}` in call")]
    UnknownSkill { skill: String, name: String },
    #[error("skill `{skill}`: call to `{name}` has {got} args, expected {want}")]
    ArityMismatch {
        skill: String,
        name: String,
        got: usize,
        want: usize,
    },
    #[error("skill `{skill}`: argument {index} of `{name}` should be {expected}")]
    ArgKind {
        skill: String,
        name: String,
        index: usize,
        expected: &'static str,
    },
    #[error("skill `{skill}`: `{name}` is not usable as an integer expression")]
    NotInteger { skill: String, name: String },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ExprKind {
    Item,
    Station,
}

struct Ctx<'a> {
    vocab: &'a Vocabulary,
    skill: &'a SkillProgram,
}

impl Ctx<'_> {
    fn err_unknown(&self, name: &str) -> ValidateError {
        ValidateError::UnknownIdent {
            skill: self.skill.name.clone(),
            name: name.to_string(),
        }
    }

    fn check_int_expr(&self, e: &Expr, lets: &BTreeSet<String>) -> Result<(), ValidateError> {
        match e {
            Expr::Int(_) => Ok(()),
            Expr::Ident(name) => {
                if matches!(self.skill.param(name), Some(p) if p.kind == ParamKind::Int)
                    || lets.contains(name)
                {
                    Ok(())
                } else if self.skill.param(name).is_some()
                    || self.vocab.items.contains(name)
                    || self.vocab.stations.contains(name)
                {
                    Err(ValidateError::NotInteger {
                        skill: self.skill.name.clone(),
                        name: name.clone(),
                    })
                } else {
                    Err(self.err_unknown(name))
                }
            }
            Expr::Binary { lhs, rhs, .. } | Expr::Min(lhs, rhs) => {
                self.check_int_expr(lhs, lets)?;
                self.check_int_expr(rhs, lets)
            }
            Expr::Capacity(item) => self.check_kind_expr(item, ExprKind::Item, lets),
        }
    }

    /// A kind expression is an identifier naming a parameter of the wanted
    /// kind or a world kind in the wanted set. An identifier may be both an
    /// item and a station (a placeable like crafting_table); context decides.
    fn check_kind_expr(
        &self,
        e: &Expr,
        want: ExprKind,
        lets: &BTreeSet<String>,
    ) -> Result<(), ValidateError> {
        match e {
            Expr::Ident(name) => {
                if let Some(param) = self.skill.param(name) {
                    let ok = matches!(
                        (param.kind, want),
                        (ParamKind::Item, ExprKind::Item) | (ParamKind::Station, ExprKind::Station)
                    );
                    return if ok { Ok(()) } else { Err(self.err_unknown(name)) };
                }
                if lets.contains(name) {
                    return Err(self.err_unknown(name));
                }
                let known = match want {
                    ExprKind::Item => self.vocab.items.contains(name),
                    ExprKind::Station => self.vocab.stations.contains(name),
                };
                if known {
                    Ok(())
                } else {
                    Err(self.err_unknown(name))
                }
            }
            _ => Err(self.err_unknown(&super::printer::print_expr(e))),
        }
    }

    fn check_arg(
        &self,
        name: &str,
        index: usize,
        kind: ParamKind,
        e: &Expr,
        lets: &BTreeSet<String>,
    ) -> Result<(), ValidateError> {
        let r = match kind {
            ParamKind::Int => self.check_int_expr(e, lets),
            ParamKind::Item => self.check_kind_expr(e, ExprKind::Item, lets),
            ParamKind::Station => self.check_kind_expr(e, ExprKind::Station, lets),
        };
        r.map_err(|_| ValidateError::ArgKind {
            skill: self.skill.name.clone(),
            name: name.to_string(),
            index,
            expected: kind.keyword(),
        })
    }

    fn check_condition(&self, c: &Condition, lets: &BTreeSet<String>) -> Result<(), ValidateError> {
        match c {
            Condition::InventoryAtLeast { item, count } => {
                self.check_kind_expr(item, ExprKind::Item, lets)?;
                self.check_int_expr(count, lets)
            }
            Condition::StationPlaced { station } => {
                self.check_kind_expr(station, ExprKind::Station, lets)
            }
            Condition::ToolTierAtLeast { .. } => Ok(()),
            Condition::ParamCompare { lhs, rhs, .. } => {
                self.check_int_expr(lhs, lets)?;
                self.check_int_expr(rhs, lets)
            }
        }
    }

    fn check_body(
        &self,
        body: &[Statement],
        lets: &mut BTreeSet<String>,
    ) -> Result<(), ValidateError> {
        for stmt in body {
            match stmt {
                Statement::CallPrimitive { name, args } => {
                    let Some(sig) = self.vocab.primitives.get(name) else {
                        return Err(ValidateError::UnknownPrimitive {
                            skill: self.skill.name.clone(),
                            name: name.clone(),
                        });
                    };
                    if sig.len() != args.len() {
                        return Err(ValidateError::ArityMismatch {
                            skill: self.skill.name.clone(),
                            name: name.clone(),
                            got: args.len(),
                            want: sig.len(),
                        });
                    }
                    for (i, (kind, arg)) in sig.iter().zip(args).enumerate() {
                        self.check_arg(name, i, *kind, arg, lets)?;
                    }
                }
                Statement::CallSkill { name, args } => {
                    match self.vocab.skills.get(name) {
                        Some(sig) => {
                            if sig.len() != args.len() {
                                return Err(ValidateError::ArityMismatch {
                                    skill: self.skill.name.clone(),
                                    name: name.clone(),
                                    got: args.len(),
                                    want: sig.len(),
                                });
                            }
                            for (i, (kind, arg)) in sig.iter().zip(args).enumerate() {
                                self.check_arg(name, i, *kind, arg, lets)?;
                            }
                        }
                        None if self.vocab.strict_skill_calls => {
                            return Err(ValidateError::UnknownSkill {
                                skill: self.skill.name.clone(),
                                name: name.clone(),
                            });
                        }
                        None => {
                            // arity unknown; args still need known identifiers
                            for arg in args {
                                self.check_any_expr(arg, lets)?;
                            }
                        }
                    }
                }
                Statement::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    self.check_condition(cond, lets)?;
                    let mut then_lets = lets.clone();
                    self.check_body(then_body, &mut then_lets)?;
                    let mut else_lets = lets.clone();
                    self.check_body(else_body, &mut else_lets)?;
                }
                Statement::Repeat { count, body } => {
                    self.check_int_expr(count, lets)?;
                    let mut inner = lets.clone();
                    self.check_body(body, &mut inner)?;
                }
                Statement::Let { var, value } => {
                    self.check_int_expr(value, lets)?;
                    lets.insert(var.clone());
                }
                Statement::Assert { cond } => self.check_condition(cond, lets)?,
            }
        }
        Ok(())
    }

    fn check_any_expr(&self, e: &Expr, lets: &BTreeSet<String>) -> Result<(), ValidateError> {
        match e {
            Expr::Int(_) => Ok(()),
            Expr::Ident(name) => {
                if self.skill.param(name).is_some()
                    || lets.contains(name)
                    || self.vocab.items.contains(name)
                    || self.vocab.stations.contains(name)
                {
                    Ok(())
                } else {
                    Err(self.err_unknown(name))
                }
            }
            Expr::Binary { lhs, rhs, .. } | Expr::Min(lhs, rhs) => {
                self.check_any_expr(lhs, lets)?;
                self.check_any_expr(rhs, lets)
            }
            Expr::Capacity(item) => self.check_any_expr(item, lets),
        }
    }
}

/// Checks a skill against a vocabulary. Conditions may reference parameters
/// and kinds but not let bindings (they live in body scope only).
pub fn validate(skill: &SkillProgram, vocab: &Vocabulary) -> Result<(), ValidateError> {
    let ctx = Ctx { vocab, skill };
    let no_lets = BTreeSet::new();
    for cond in skill.pre.iter().chain(skill.post.iter()) {
        ctx.check_condition(cond, &no_lets)?;
    }
    // defaults for item/station params must name known kinds
    for param in &skill.params {
        if let Some(super::ast::Value::Kind(k)) = &param.default {
            let known = match param.kind {
                ParamKind::Item => vocab.items.contains(k),
                ParamKind::Station => vocab.stations.contains(k),
                ParamKind::Int => false,
            };
            if !known {
                return Err(ValidateError::UnknownIdent {
                    skill: skill.name.clone(),
                    name: k.clone(),
                });
            }
        }
    }
    let mut lets = BTreeSet::new();
    ctx.check_body(&skill.body, &mut lets)
}
