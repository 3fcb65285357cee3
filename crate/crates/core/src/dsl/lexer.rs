//! Hand-rolled lexer. Tokens carry line/column for error reporting.

use super::parser::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Ident(String),
    Int(i64),
    // keywords
    Skill,
    Pre,
    Post,
    Call,
    Prim,
    If,
    Else,
    Repeat,
    Let,
    Assert,
    Inv,
    Station,
    ToolTier,
    Min,
    Capacity,
    // punctuation
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
}

impl Token {
    pub fn describe(&self) -> String {
        match self {
            Token::Ident(name) => format!("identifier `{name}`"),
            Token::Int(n) => format!("integer `{n}`"),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Token::Ident(_) | Token::Int(_) => "",
            Token::Skill => "skill",
            Token::Pre => "pre",
            Token::Post => "post",
            Token::Call => "call",
            Token::Prim => "prim",
            Token::If => "if",
            Token::Else => "else",
            Token::Repeat => "repeat",
            Token::Let => "let",
            Token::Assert => "assert",
            Token::Inv => "inv",
            Token::Station => "station",
            Token::ToolTier => "tooltier",
            Token::Min => "min",
            Token::Capacity => "capacity",
            Token::LParen => "(",
            Token::RParen => ")",
            Token::LBrace => "{",
            Token::RBrace => "}",
            Token::Comma => ",",
            Token::Semi => ";",
            Token::Colon => ":",
            Token::Assign => "=",
            Token::Plus => "+",
            Token::Minus => "-",
            Token::Star => "*",
            Token::Slash => "/",
            Token::Lt => "<",
            Token::Le => "<=",
            Token::Gt => ">",
            Token::Ge => ">=",
            Token::EqEq => "==",
            Token::Ne => "!=",
        }
    }
}

/// A token plus its source position (1-indexed).
#[derive(Debug, Clone)]
pub struct Lexed {
    pub token: Token,
    pub line: usize,
    pub col: usize,
}

pub fn lex(source: &str) -> Result<Vec<Lexed>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = source.chars().peekable();

    while let Some(&c) = chars.peek() {
        let (tok_line, tok_col) = (line, col);
        let bump = |chars: &mut std::iter::Peekable<std::str::Chars<'_>>,
                        line: &mut usize,
                        col: &mut usize| {
            let c = chars.next().unwrap();
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            c
        };

        if c.is_whitespace() {
            bump(&mut chars, &mut line, &mut col);
            continue;
        }
        // line comments
        if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                bump(&mut chars, &mut line, &mut col);
            }
            continue;
        }
        if c.is_ascii_digit() {
            let mut text = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_digit() {
                    text.push(bump(&mut chars, &mut line, &mut col));
                } else {
                    break;
                }
            }
            let n: i64 = text.parse().map_err(|_| ParseError::Syntax {
                line: tok_line,
                col: tok_col,
                message: format!("integer literal `{text}` out of range"),
            })?;
            out.push(Lexed {
                token: Token::Int(n),
                line: tok_line,
                col: tok_col,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut text = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    text.push(bump(&mut chars, &mut line, &mut col));
                } else {
                    break;
                }
            }
            let token = match text.as_str() {
                "skill" => Token::Skill,
                "pre" => Token::Pre,
                "post" => Token::Post,
                "call" => Token::Call,
                "prim" => Token::Prim,
                "if" => Token::If,
                "else" => Token::Else,
                "repeat" => Token::Repeat,
                "let" => Token::Let,
                "assert" => Token::Assert,
                "inv" => Token::Inv,
                "station" => Token::Station,
                "tooltier" => Token::ToolTier,
                "min" => Token::Min,
                "capacity" => Token::Capacity,
                _ => Token::Ident(text),
            };
            out.push(Lexed {
                token,
                line: tok_line,
                col: tok_col,
            });
            continue;
        }

        bump(&mut chars, &mut line, &mut col);
        let two = |second: char, chars: &mut std::iter::Peekable<std::str::Chars<'_>>| {
            chars.peek() == Some(&second)
        };
        let token = match c {
            '(' => Token::LParen,
            ')' => Token::RParen,
            '{' => Token::LBrace,
            '}' => Token::RBrace,
            ',' => Token::Comma,
            ';' => Token::Semi,
            ':' => Token::Colon,
            '+' => Token::Plus,
            '-' => Token::Minus,
            '*' => Token::Star,
            '/' => Token::Slash,
            '<' => {
                if two('=', &mut chars) {
                    bump(&mut chars, &mut line, &mut col);
                    Token::Le
                } else {
                    Token::Lt
                }
            }
            '>' => {
                if two('=', &mut chars) {
                    bump(&mut chars, &mut line, &mut col);
                    Token::Ge
                } else {
                    Token::Gt
                }
            }
            '=' => {
                if two('=', &mut chars) {
                    bump(&mut chars, &mut line, &mut col);
                    Token::EqEq
                } else {
                    Token::Assign
                }
            }
            '!' => {
                if two('=', &mut chars) {
                    bump(&mut chars, &mut line, &mut col);
                    Token::Ne
                } else {
                    return Err(ParseError::Syntax {
                        line: tok_line,
                        col: tok_col,
                        message: "unexpected `!` (negation is not part of the language)".into(),
                    });
                }
            }
            other => {
                return Err(ParseError::Syntax {
                    line: tok_line,
                    col: tok_col,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push(Lexed {
            token,
            line: tok_line,
            col: tok_col,
        });
    }
    Ok(out)
}
