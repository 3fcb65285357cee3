//! Recursive-descent parser for skill source.
//!
//! Grammar (see the repository README for the full sketch):
//!
//! ```text
//! skill    := "skill" NAME "(" params? ")" "pre" condblock "post" condblock block
//! params   := param ("," param)*
//! param    := NAME ":" ("int" | "item" | "station") ("=" literal)?
//! condblock:= "{" (cond ";")* "}"
//! block    := "{" stmt* "}"
//! stmt     := "call" NAME "(" args? ")" ";"
//!           | "prim" NAME "(" args? ")" ";"
//!           | "if" "(" cond ")" block ("else" block)?
//!           | "repeat" "(" expr ")" block
//!           | "let" NAME "=" expr ";"
//!           | "assert" "(" cond ")" ";"
//! cond     := "inv" "(" expr ")" ">=" expr
//!           | "station" "(" expr ")"
//!           | "tooltier" ">=" INT
//!           | expr REL expr
//! expr     := term (("+" | "-") term)*
//! term     := factor (("*" | "/") factor)*
//! factor   := INT | NAME | "(" expr ")"
//!           | "min" "(" expr "," expr ")" | "capacity" "(" expr ")"
//! ```

use thiserror::Error;

use super::ast::{
    BinOp, Condition, Expr, ParamKind, ParamSig, Rel, SkillProgram, Statement, Value,
};
use super::lexer::{lex, Lexed, Token};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unexpected end of input: {message}")]
    UnexpectedEnd { message: String },
}

struct Parser {
    tokens: Vec<Lexed>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Lexed> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Lexed> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, message: impl Into<String>) -> ParseError {
        match self.peek() {
            Some(t) => ParseError::Syntax {
                line: t.line,
                col: t.col,
                message: message.into(),
            },
            None => ParseError::UnexpectedEnd {
                message: message.into(),
            },
        }
    }

    fn expect(&mut self, want: Token) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t.token == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(ParseError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("expected {}, found {}", want.describe(), t.token.describe()),
            }),
            None => Err(ParseError::UnexpectedEnd {
                message: format!("expected {}", want.describe()),
            }),
        }
    }

    fn eat(&mut self, want: &Token) -> bool {
        if self.peek().map(|t| &t.token) == Some(want) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.next() {
            Some(Lexed {
                token: Token::Ident(name),
                ..
            }) => Ok(name),
            Some(t) => Err(ParseError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("expected {what}, found {}", t.token.describe()),
            }),
            None => Err(ParseError::UnexpectedEnd {
                message: format!("expected {what}"),
            }),
        }
    }

    fn skill(&mut self) -> Result<SkillProgram, ParseError> {
        self.expect(Token::Skill)?;
        let name = self.ident("skill name")?;
        self.expect(Token::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Token::RParen) {
            loop {
                params.push(self.param(&params)?);
                if self.eat(&Token::Comma) {
                    continue;
                }
                self.expect(Token::RParen)?;
                break;
            }
        }
        self.expect(Token::Pre)?;
        let pre = self.cond_block()?;
        self.expect(Token::Post)?;
        let post = self.cond_block()?;
        let body = self.block()?;
        Ok(SkillProgram::new(name, params, pre, post, body))
    }

    fn param(&mut self, seen: &[ParamSig]) -> Result<ParamSig, ParseError> {
        let at = self.peek().map(|t| (t.line, t.col));
        let name = self.ident("parameter name")?;
        if seen.iter().any(|p| p.name == name) {
            let (line, col) = at.unwrap_or((0, 0));
            return Err(ParseError::Syntax {
                line,
                col,
                message: format!("duplicate parameter `{name}`"),
            });
        }
        self.expect(Token::Colon)?;
        let kind_name = self.ident("parameter kind (int, item, or station)")?;
        let kind = match kind_name.as_str() {
            "int" => ParamKind::Int,
            "item" => ParamKind::Item,
            "station" => ParamKind::Station,
            other => {
                let (line, col) = at.unwrap_or((0, 0));
                return Err(ParseError::Syntax {
                    line,
                    col,
                    message: format!("unknown parameter kind `{other}` for `{name}`"),
                });
            }
        };
        let default = if self.eat(&Token::Assign) {
            let value = match self.next() {
                Some(Lexed {
                    token: Token::Int(n),
                    ..
                }) => Value::Int(n),
                Some(Lexed {
                    token: Token::Ident(k),
                    ..
                }) => Value::Kind(k),
                _ => return Err(self.err_here("expected literal default")),
            };
            let matches = matches!(
                (&value, kind),
                (Value::Int(_), ParamKind::Int)
                    | (Value::Kind(_), ParamKind::Item)
                    | (Value::Kind(_), ParamKind::Station)
            );
            if !matches {
                let (line, col) = at.unwrap_or((0, 0));
                return Err(ParseError::Syntax {
                    line,
                    col,
                    message: format!("default for `{name}` does not match kind {}", kind.keyword()),
                });
            }
            Some(value)
        } else {
            None
        };
        Ok(ParamSig {
            name,
            kind,
            default,
        })
    }

    fn cond_block(&mut self) -> Result<Vec<Condition>, ParseError> {
        self.expect(Token::LBrace)?;
        let mut atoms = Vec::new();
        while !self.eat(&Token::RBrace) {
            atoms.push(self.condition()?);
            // trailing semicolon is canonical, a comma is tolerated
            if !self.eat(&Token::Semi) {
                self.eat(&Token::Comma);
            }
        }
        Ok(atoms)
    }

    fn block(&mut self) -> Result<Vec<Statement>, ParseError> {
        self.expect(Token::LBrace)?;
        let mut body = Vec::new();
        while !self.eat(&Token::RBrace) {
            body.push(self.statement()?);
        }
        Ok(body)
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        let t = match self.peek() {
            Some(t) => t.token.clone(),
            None => {
                return Err(ParseError::UnexpectedEnd {
                    message: "expected statement".into(),
                })
            }
        };
        match t {
            Token::Call => {
                self.pos += 1;
                let name = self.ident("skill name")?;
                let args = self.call_args()?;
                self.expect(Token::Semi)?;
                Ok(Statement::CallSkill { name, args })
            }
            Token::Prim => {
                self.pos += 1;
                let name = self.ident("primitive name")?;
                let args = self.call_args()?;
                self.expect(Token::Semi)?;
                Ok(Statement::CallPrimitive { name, args })
            }
            Token::If => {
                self.pos += 1;
                self.expect(Token::LParen)?;
                let cond = self.condition()?;
                self.expect(Token::RParen)?;
                let then_body = self.block()?;
                let else_body = if self.eat(&Token::Else) {
                    self.block()?
                } else {
                    Vec::new()
                };
                Ok(Statement::If {
                    cond,
                    then_body,
                    else_body,
                })
            }
            Token::Repeat => {
                self.pos += 1;
                self.expect(Token::LParen)?;
                let count = self.expr()?;
                self.expect(Token::RParen)?;
                let body = self.block()?;
                Ok(Statement::Repeat { count, body })
            }
            Token::Let => {
                self.pos += 1;
                let var = self.ident("binding name")?;
                self.expect(Token::Assign)?;
                let value = self.expr()?;
                self.expect(Token::Semi)?;
                Ok(Statement::Let { var, value })
            }
            Token::Assert => {
                self.pos += 1;
                self.expect(Token::LParen)?;
                let cond = self.condition()?;
                self.expect(Token::RParen)?;
                self.expect(Token::Semi)?;
                Ok(Statement::Assert { cond })
            }
            other => Err(self.err_here(format!(
                "expected statement, found {}",
                other.describe()
            ))),
        }
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect(Token::LParen)?;
        let mut args = Vec::new();
        if self.eat(&Token::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&Token::Comma) {
                continue;
            }
            self.expect(Token::RParen)?;
            return Ok(args);
        }
    }

    fn condition(&mut self) -> Result<Condition, ParseError> {
        match self.peek().map(|t| t.token.clone()) {
            Some(Token::Inv) => {
                self.pos += 1;
                self.expect(Token::LParen)?;
                let item = self.expr()?;
                self.expect(Token::RParen)?;
                self.expect(Token::Ge)?;
                let count = self.expr()?;
                Ok(Condition::InventoryAtLeast { item, count })
            }
            Some(Token::Station) => {
                self.pos += 1;
                self.expect(Token::LParen)?;
                let station = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(Condition::StationPlaced { station })
            }
            Some(Token::ToolTier) => {
                self.pos += 1;
                self.expect(Token::Ge)?;
                match self.next() {
                    Some(Lexed {
                        token: Token::Int(tier),
                        ..
                    }) => Ok(Condition::ToolTierAtLeast { tier }),
                    _ => Err(self.err_here("expected integer tier after `tooltier >=`")),
                }
            }
            _ => {
                let lhs = self.expr()?;
                let rel = match self.next().map(|t| t.token) {
                    Some(Token::Lt) => Rel::Lt,
                    Some(Token::Le) => Rel::Le,
                    Some(Token::Gt) => Rel::Gt,
                    Some(Token::Ge) => Rel::Ge,
                    Some(Token::EqEq) => Rel::Eq,
                    Some(Token::Ne) => Rel::Ne,
                    _ => return Err(self.err_here("expected comparison operator")),
                };
                let rhs = self.expr()?;
                Ok(Condition::ParamCompare { lhs, rel, rhs })
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().map(|t| &t.token) {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().map(|t| &t.token) {
                Some(Token::Star) => BinOp::Mul,
                Some(Token::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            Some(Lexed {
                token: Token::Int(n),
                ..
            }) => Ok(Expr::Int(n)),
            Some(Lexed {
                token: Token::Ident(name),
                ..
            }) => Ok(Expr::Ident(name)),
            Some(Lexed {
                token: Token::LParen,
                ..
            }) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Lexed {
                token: Token::Min, ..
            }) => {
                self.expect(Token::LParen)?;
                let a = self.expr()?;
                self.expect(Token::Comma)?;
                let b = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(Expr::Min(Box::new(a), Box::new(b)))
            }
            Some(Lexed {
                token: Token::Capacity,
                ..
            }) => {
                self.expect(Token::LParen)?;
                let item = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(Expr::Capacity(Box::new(item)))
            }
            Some(t) => Err(ParseError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("expected expression, found {}", t.token.describe()),
            }),
            None => Err(ParseError::UnexpectedEnd {
                message: "expected expression".into(),
            }),
        }
    }
}

/// Parses a single skill definition.
pub fn parse_skill(source: &str) -> Result<SkillProgram, ParseError> {
    let tokens = lex(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    let skill = parser.skill()?;
    if let Some(t) = parser.peek() {
        return Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            message: format!("trailing input after skill: {}", t.token.describe()),
        });
    }
    Ok(skill)
}

/// Parses a file containing any number of skill definitions.
pub fn parse_skill_file(source: &str) -> Result<Vec<SkillProgram>, ParseError> {
    let tokens = lex(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut skills = Vec::new();
    while parser.peek().is_some() {
        skills.push(parser.skill()?);
    }
    Ok(skills)
}

/// Parses a bare condition atom (used by the curriculum file format and
/// operator wire payloads).
pub fn parse_condition(source: &str) -> Result<Condition, ParseError> {
    let tokens = lex(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    let cond = parser.condition()?;
    if let Some(t) = parser.peek() {
        return Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            message: format!("trailing input after condition: {}", t.token.describe()),
        });
    }
    Ok(cond)
}

/// Parses a bare expression (operator wire payloads).
pub fn parse_expr(source: &str) -> Result<Expr, ParseError> {
    let tokens = lex(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    let e = parser.expr()?;
    if let Some(t) = parser.peek() {
        return Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            message: format!("trailing input after expression: {}", t.token.describe()),
        });
    }
    Ok(e)
}
