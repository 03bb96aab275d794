//! A small expression language for user-supplied coefficients.
//!
//! Grammar (usual precedence, `^` binds tightest and is right-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'pi' | 't' | 'x' | 'x1'..'xd' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func  := min | max | abs | sin | cos | exp
//! ```
//!
//! `x` is an alias of `x1`.

use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message} at column {}", .position + 1)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            _ => return None,
        })
    }

    fn arity(self) -> Option<usize> {
        match self {
            Func::Min | Func::Max => None,
            _ => Some(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    /// Zero-based coordinate index.
    Coord(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Parses `src`, accepting coordinates `x1..x{dim}`.
    pub fn parse(src: &str, dim: usize) -> Result<Expr, ParseError> {
        let mut p = Parser {
            src,
            tokens: tokenize(src)?,
            pos: 0,
            dim,
        };
        let e = p.expr()?;
        match p.peek() {
            None => Ok(e),
            Some(tok) => Err(p.error_at(tok.start, format!("unexpected '{}'", tok.text(src)))),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Time => t,
            Expr::Coord(i) => x[*i],
            Expr::Neg(a) => -a.eval(t, x),
            Expr::Add(a, b) => a.eval(t, x) + b.eval(t, x),
            Expr::Sub(a, b) => a.eval(t, x) - b.eval(t, x),
            Expr::Mul(a, b) => a.eval(t, x) * b.eval(t, x),
            Expr::Div(a, b) => a.eval(t, x) / b.eval(t, x),
            Expr::Pow(a, b) => a.eval(t, x).powf(b.eval(t, x)),
            Expr::Call(f, args) => {
                let mut vals = args.iter().map(|a| a.eval(t, x));
                match f {
                    Func::Min => vals.fold(f64::INFINITY, f64::min),
                    Func::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                    Func::Abs => vals.next().unwrap_or(f64::NAN).abs(),
                    Func::Sin => vals.next().unwrap_or(f64::NAN).sin(),
                    Func::Cos => vals.next().unwrap_or(f64::NAN).cos(),
                    Func::Exp => vals.next().unwrap_or(f64::NAN).exp(),
                }
            }
        }
    }

    pub fn uses_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Num(_) | Expr::Coord(_) => false,
            Expr::Neg(a) => a.uses_time(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.uses_time() || b.uses_time()
            }
            Expr::Call(_, args) => args.iter().any(Expr::uses_time),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Time => write!(f, "t"),
            Expr::Coord(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, args) => {
                let name = format!("{func:?}").to_lowercase();
                let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                write!(f, "{name}({})", args.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Num(f64),
    Ident,
    Op(char),
}

#[derive(Debug, Clone, Copy)]
struct Token {
    kind: Kind,
    start: usize,
    end: usize,
}

impl Token {
    fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let v = src[start..i].parse::<f64>().map_err(|_| ParseError {
                position: start,
                message: format!("malformed number '{}'", &src[start..i]),
            })?;
            out.push(Token { kind: Kind::Num(v), start, end: i });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token { kind: Kind::Ident, start, end: i });
        } else if "+-*/^(),".contains(c) {
            out.push(Token { kind: Kind::Op(c), start: i, end: i + 1 });
            i += 1;
        } else {
            return Err(ParseError {
                position: i,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).copied()
    }

    fn error_at(&self, position: usize, message: String) -> ParseError {
        ParseError { position, message }
    }

    fn eof(&self) -> ParseError {
        self.error_at(self.src.len(), "unexpected end of expression".into())
    }

    fn eat(&mut self, op: char) -> bool {
        if matches!(self.peek(), Some(Token { kind: Kind::Op(c), .. }) if c == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ParseError> {
        if self.eat(op) {
            return Ok(());
        }
        match self.peek() {
            Some(t) => Err(self.error_at(t.start, format!("expected '{op}', found '{}'", t.text(self.src)))),
            None => Err(self.eof()),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let tok = self.peek().ok_or_else(|| self.eof())?;
        self.pos += 1;
        match tok.kind {
            Kind::Num(v) => Ok(Expr::Num(v)),
            Kind::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Kind::Op(c) => Err(self.error_at(tok.start, format!("unexpected '{c}'"))),
            Kind::Ident => {
                let name = tok.text(self.src);
                if let Some(func) = Func::from_name(name) {
                    return self.call(func, tok);
                }
                match name {
                    "t" => Ok(Expr::Time),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "x" if self.dim >= 1 => Ok(Expr::Coord(0)),
                    _ => match name.strip_prefix('x').and_then(|n| n.parse::<usize>().ok()) {
                        Some(k) if k >= 1 && k <= self.dim => Ok(Expr::Coord(k - 1)),
                        Some(k) => Err(self.error_at(
                            tok.start,
                            format!("coordinate x{k} is out of range for dimension {}", self.dim),
                        )),
                        None => Err(self.error_at(tok.start, format!("unknown name '{name}'"))),
                    },
                }
            }
        }
    }

    fn call(&mut self, func: Func, tok: Token) -> Result<Expr, ParseError> {
        self.expect('(')?;
        let mut args = vec![self.expr()?];
        while self.eat(',') {
            args.push(self.expr()?);
        }
        self.expect(')')?;
        if let Some(n) = func.arity() {
            if args.len() != n {
                return Err(self.error_at(
                    tok.start,
                    format!("{} takes {n} argument, got {}", tok.text(self.src), args.len()),
                ));
            }
        }
        Ok(Expr::Call(func, args))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, t: f64, x: &[f64]) -> f64 {
        Expr::parse(src, x.len()).unwrap().eval(t, x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, &[]), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, &[]), 9.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, &[]), 1.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, &[]), 512.0);
        assert_eq!(ev("-2 ^ 2", 0.0, &[]), -4.0);
        assert_eq!(ev("1 - -1", 0.0, &[]), 2.0);
        assert_eq!(ev("2.5e-1 * 4", 0.0, &[]), 1.0);
    }

    #[test]
    fn variables_and_functions() {
        assert_eq!(ev("x1 + 2 * x2 - t", 1.0, &[3.0, 4.0]), 10.0);
        assert_eq!(ev("x", 0.0, &[5.0]), 5.0);
        assert_eq!(ev("max(1 - abs(x1), 0)", 0.0, &[0.25]), 0.75);
        assert_eq!(ev("min(3, x1, 2)", 0.0, &[-1.0]), -1.0);
        assert!((ev("cos(pi)", 0.0, &[]) + 1.0).abs() < 1e-15);
        assert!((ev("exp(1) - sin(0)", 0.0, &[]) - std::f64::consts::E).abs() < 1e-15);
        assert!(Expr::parse("sin(t) + x1", 1).unwrap().uses_time());
        assert!(!Expr::parse("sin(x1)", 1).unwrap().uses_time());
    }

    #[test]
    fn errors_point_at_the_problem() {
        let e = Expr::parse("1 + x3", 2).unwrap_err();
        assert_eq!(e.position, 4);
        assert!(Expr::parse("foo(1)", 1).is_err());
        assert!(Expr::parse("sin(1, 2)", 1).is_err());
        assert!(Expr::parse("(1 + 2", 1).is_err());
        assert!(Expr::parse("1 2", 1).is_err());
        assert!(Expr::parse("1 $ 2", 1).is_err());
        assert!(Expr::parse("", 1).is_err());
    }

    #[test]
    fn display_reparses_to_the_same_tree() {
        for src in ["max(1 - abs(x1), 0) * exp(-t)", "-x1 ^ 2 / (1 + x2)", "min(x1, x2, 3)"] {
            let e = Expr::parse(src, 2).unwrap();
            assert_eq!(Expr::parse(&e.to_string(), 2).unwrap(), e);
        }
    }
}
