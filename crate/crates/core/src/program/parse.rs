//! Lexer and recursive-descent parser for the modeling language.
//!
//! Grammar (stable):
//!
//! ```text
//! program  := (decl | command)* initblock?
//! decl     := "var" NAME ":" "[" INT ".." INT "]" ("init" INT)? ";"
//! command  := "[" NAME? "]" expr "->" branch ("+" branch)* ";"
//! branch   := prob ":" update
//! prob     := NUMBER | INT "/" INT
//! update   := "true" | assign ("&" assign)*
//! assign   := "(" NAME "'" "=" expr ")"
//! initblock:= "init" expr "endinit"
//! expr     := or-expression over & | ! comparisons and +,-,*,/ arithmetic
//! ```
//!
//! `//` starts a comment running to the end of the line.

use super::{validate, ArithOp, Branch, CmpOp, Command, Domain, Expr, ParseError, Program, Update, VarDecl};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    // punctuation
    Colon,
    Semi,
    LBracket,
    RBracket,
    LParen,
    RParen,
    DotDot,
    Arrow,
    Plus,
    Minus,
    Star,
    Slash,
    Amp,
    Pipe,
    Bang,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Prime,
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Tok::Ident(name) => return write!(f, "`{name}`"),
            Tok::Int(v) => return write!(f, "`{v}`"),
            Tok::Float(v) => return write!(f, "`{v}`"),
            Tok::Colon => ":",
            Tok::Semi => ";",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::DotDot => "..",
            Tok::Arrow => "->",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Amp => "&",
            Tok::Pipe => "|",
            Tok::Bang => "!",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Prime => "'",
            Tok::Eof => "end of input",
        };
        write!(f, "`{s}`")
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

type Spanned = (Tok, usize, usize);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn peek(&self, ahead: usize) -> u8 {
        *self.src.get(self.pos + ahead).unwrap_or(&0)
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            while self.pos < self.src.len() {
                let c = self.peek(0);
                if c.is_ascii_whitespace() {
                    self.bump();
                } else if c == b'/' && self.peek(1) == b'/' {
                    while self.pos < self.src.len() && self.peek(0) != b'\n' {
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            if self.pos >= self.src.len() {
                out.push((Tok::Eof, self.line, self.col));
                return Ok(out);
            }
            let (line, col) = (self.line, self.col);
            let tok = self.next_token()?;
            out.push((tok, line, col));
        }
    }

    fn next_token(&mut self) -> Result<Tok, ParseError> {
        let c = self.peek(0);
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.peek(0).is_ascii_alphanumeric() || self.peek(0) == b'_' {
                self.bump();
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return Ok(Tok::Ident(name.to_owned()));
        }
        if c.is_ascii_digit() {
            return self.number();
        }
        self.bump();
        let tok = match c {
            b':' => Tok::Colon,
            b';' => Tok::Semi,
            b'[' => Tok::LBracket,
            b']' => Tok::RBracket,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'+' => Tok::Plus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'&' => Tok::Amp,
            b'|' => Tok::Pipe,
            b'\'' => Tok::Prime,
            b'=' => Tok::Eq,
            b'-' => {
                if self.peek(0) == b'>' {
                    self.bump();
                    Tok::Arrow
                } else {
                    Tok::Minus
                }
            }
            b'.' => {
                if self.peek(0) == b'.' {
                    self.bump();
                    Tok::DotDot
                } else {
                    return Err(self.error("stray `.`"));
                }
            }
            b'!' => {
                if self.peek(0) == b'=' {
                    self.bump();
                    Tok::Ne
                } else {
                    Tok::Bang
                }
            }
            b'<' => {
                if self.peek(0) == b'=' {
                    self.bump();
                    Tok::Le
                } else {
                    Tok::Lt
                }
            }
            b'>' => {
                if self.peek(0) == b'=' {
                    self.bump();
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            other => return Err(self.error(format!("unexpected character `{}`", other as char))),
        };
        Ok(tok)
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        while self.peek(0).is_ascii_digit() {
            self.bump();
        }
        // a dot starts a fraction only when a digit follows; `0..5` stays two ints
        let mut float = false;
        if self.peek(0) == b'.' && self.peek(1).is_ascii_digit() {
            float = true;
            self.bump();
            while self.peek(0).is_ascii_digit() {
                self.bump();
            }
        }
        if self.peek(0) == b'e' || self.peek(0) == b'E' {
            let mut ahead = 1;
            if self.peek(1) == b'-' || self.peek(1) == b'+' {
                ahead = 2;
            }
            if self.peek(ahead).is_ascii_digit() {
                float = true;
                for _ in 0..ahead {
                    self.bump();
                }
                while self.peek(0).is_ascii_digit() {
                    self.bump();
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if float {
            text.parse::<f64>()
                .map(Tok::Float)
                .map_err(|e| self.error(format!("bad number `{text}`: {e}")))
        } else {
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|e| self.error(format!("bad integer `{text}`: {e}")))
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn line(&self) -> usize {
        self.toks[self.at].1
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        let (_, line, col) = self.toks[self.at];
        ParseError::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {want}, found {}", self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            other => Err(self.error(format!("expected a name, found {other}"))),
        }
    }

    fn keyword(&mut self, word: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(name) if name == word) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn int_literal(&mut self) -> Result<i64, ParseError> {
        let negative = *self.peek() == Tok::Minus;
        if negative {
            self.bump();
        }
        match self.bump() {
            Tok::Int(v) => Ok(if negative { -v } else { v }),
            other => Err(self.error(format!("expected an integer, found {other}"))),
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut decls = Vec::new();
        let mut commands = Vec::new();
        let mut init_block = None;
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Ident(name) if name == "var" => decls.push(self.decl()?),
                Tok::Ident(name) if name == "init" => {
                    if init_block.is_some() {
                        return Err(self.error("second init block"));
                    }
                    self.bump();
                    let e = self.expr()?;
                    if !self.keyword("endinit") {
                        return Err(self.error("expected `endinit` after the init expression"));
                    }
                    init_block = Some(e);
                }
                Tok::LBracket => commands.push(self.command()?),
                other => {
                    let msg = format!("expected `var`, `init` or a command, found {other}");
                    return Err(self.error(msg));
                }
            }
        }
        Ok(Program {
            decls,
            commands,
            init_block,
        })
    }

    fn decl(&mut self) -> Result<VarDecl, ParseError> {
        let line = self.line();
        assert!(self.keyword("var"));
        let name = self.ident()?;
        self.expect(Tok::Colon)?;
        self.expect(Tok::LBracket)?;
        let lo = self.int_literal()?;
        self.expect(Tok::DotDot)?;
        let hi = self.int_literal()?;
        self.expect(Tok::RBracket)?;
        if hi < lo {
            return Err(ParseError::TypeError {
                line,
                msg: format!("empty domain [{lo}..{hi}] for {name}"),
            });
        }
        let initer = if self.keyword("init") {
            Some(self.int_literal()?)
        } else {
            None
        };
        self.expect(Tok::Semi)?;
        Ok(VarDecl {
            name,
            domain: Domain::new(lo, hi),
            initer,
            line,
        })
    }

    fn command(&mut self) -> Result<Command, ParseError> {
        let line = self.line();
        self.expect(Tok::LBracket)?;
        let action = match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Some(name)
            }
            _ => None,
        };
        self.expect(Tok::RBracket)?;
        let guard = self.expr()?;
        self.expect(Tok::Arrow)?;
        let mut branches = vec![self.branch()?];
        while *self.peek() == Tok::Plus {
            self.bump();
            branches.push(self.branch()?);
        }
        self.expect(Tok::Semi)?;
        Ok(Command {
            action,
            guard,
            branches,
            line,
        })
    }

    fn branch(&mut self) -> Result<Branch, ParseError> {
        let prob = match self.bump() {
            Tok::Float(v) => v,
            Tok::Int(numer) => {
                // integer probability or a rational `a/b`
                if *self.peek() == Tok::Slash {
                    self.bump();
                    match self.bump() {
                        Tok::Int(denom) if denom != 0 => numer as f64 / denom as f64,
                        Tok::Int(_) => return Err(self.error("zero denominator")),
                        other => {
                            return Err(self.error(format!(
                                "expected a denominator, found {other}"
                            )))
                        }
                    }
                } else {
                    numer as f64
                }
            }
            other => return Err(self.error(format!("expected a probability, found {other}"))),
        };
        self.expect(Tok::Colon)?;
        Ok(Branch {
            prob,
            update: self.update()?,
        })
    }

    fn update(&mut self) -> Result<Update, ParseError> {
        if self.keyword("true") {
            return Ok(Update::default());
        }
        let mut assigns = vec![self.assign()?];
        while *self.peek() == Tok::Amp {
            self.bump();
            assigns.push(self.assign()?);
        }
        Ok(Update { assigns })
    }

    fn assign(&mut self) -> Result<(String, Expr), ParseError> {
        self.expect(Tok::LParen)?;
        let name = self.ident()?;
        self.expect(Tok::Prime)?;
        self.expect(Tok::Eq)?;
        let rhs = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok((name, rhs))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.and_expr()?;
        while *self.peek() == Tok::Pipe {
            self.bump();
            e = Expr::or(e, self.and_expr()?);
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.not_expr()?;
        while *self.peek() == Tok::Amp {
            self.bump();
            e = Expr::and(e, self.not_expr()?);
        }
        Ok(e)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Bang {
            self.bump();
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.rel_expr()
    }

    fn rel_expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.sum_expr()?;
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.sum_expr()?;
        Ok(Expr::Cmp(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum_expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(e),
            };
            self.bump();
            e = Expr::Arith(op, Box::new(e), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(e),
            };
            self.bump();
            e = Expr::Arith(op, Box::new(e), Box::new(self.factor()?));
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Minus => {
                self.bump();
                let inner = self.factor()?;
                Ok(match inner {
                    Expr::Int(v) => Expr::Int(-v),
                    other => Expr::Arith(ArithOp::Sub, Box::new(Expr::Int(0)), Box::new(other)),
                })
            }
            Tok::Ident(name) if name == "true" => {
                self.bump();
                Ok(Expr::Bool(true))
            }
            Tok::Ident(name) if name == "false" => {
                self.bump();
                Ok(Expr::Bool(false))
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Expr::Var(name))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            other => Err(self.error(format!("expected an expression, found {other}"))),
        }
    }
}

/// Parses and validates a program.
pub fn parse(source: &str) -> Result<Program, ParseError> {
    let toks = Lexer::new(source).tokens()?;
    let mut parser = Parser { toks, at: 0 };
    let program = parser.program()?;
    validate(&program)?;
    Ok(program)
}
