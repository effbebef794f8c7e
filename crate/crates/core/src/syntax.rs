/*!
Surface syntax: types, terms, judgments, and the operations every later
stage leans on (parsing, typechecking, fragment classification, substitution).

The language is call-by-value Idealized Algol with bad variables: base types
`com`, `exp`, `var` and right-associative arrows. Judgments are written

```text
x1:ty1, ..., xn:tyn |- term : ty
```

with an optional result annotation. `let x = M in N` is definitionally
`(fn x:ty => N) M`; the parser keeps the let node as a display form and the
typechecker fills in the binder annotation. `M; N` is a let with an unused
binder. Loops (`while`) are native here so the finitary fragments can be
classified syntactically; in the full language they read as sugar for a
`fix` loop.
*/

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Com,
    Exp,
    Var,
    Arrow(Box<Type>, Box<Type>),
}

impl Type {
    pub fn arrow(a: Type, b: Type) -> Type {
        Type::Arrow(Box::new(a), Box::new(b))
    }

    pub fn is_base(&self) -> bool {
        matches!(self, Type::Com | Type::Exp)
    }

    pub fn is_ground(&self) -> bool {
        matches!(self, Type::Com | Type::Exp | Type::Var)
    }
}

/// ord(com) = ord(exp) = 0, ord(var) = 1, ord(a->b) = max(ord(a)+1, ord(b)).
pub fn type_order(ty: &Type) -> u32 {
    match ty {
        Type::Com | Type::Exp => 0,
        Type::Var => 1,
        Type::Arrow(a, b) => (type_order(a) + 1).max(type_order(b)),
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Com => write!(f, "com"),
            Type::Exp => write!(f, "exp"),
            Type::Var => write!(f, "var"),
            Type::Arrow(a, b) => {
                if matches!(**a, Type::Arrow(_, _)) {
                    write!(f, "({}) -> {}", a, b)
                } else {
                    write!(f, "{} -> {}", a, b)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

impl BinOp {
    /// Finitary arithmetic: everything modulo N+1 so values stay in {0..N}.
    pub fn apply_mod(self, a: i64, b: i64, n: u32) -> i64 {
        let m = n as i64 + 1;
        let r = match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
        };
        r.rem_euclid(m)
    }

    pub fn apply(self, a: i64, b: i64) -> i64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
        }
    }
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinOp::Add => write!(f, "+"),
            BinOp::Sub => write!(f, "-"),
            BinOp::Mul => write!(f, "*"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Unit,
    IntLit(i64),
    Ident(String),
    Bin(BinOp, Box<Term>, Box<Term>),
    /// `if guard then tt else ff`; branches may have any common type.
    If(Box<Term>, Box<Term>, Box<Term>),
    Deref(Box<Term>),
    Assign(Box<Term>, Box<Term>),
    /// Bad-variable constructor: read method `com -> exp`, write `exp -> com`.
    MkVar(Box<Term>, Box<Term>),
    App(Box<Term>, Box<Term>),
    Lambda(String, Type, Box<Term>),
    Fix(Box<Term>),
    /// Block allocation; the body must have base type.
    New(String, Box<Term>),
    Ref,
    While(Box<Term>, Box<Term>),
    /// Display form of `(fn x:ty => body) bound`; annotation filled by typing.
    Let(String, Option<Type>, Box<Term>, Box<Term>),
    /// Runtime location; never produced by the parser.
    Loc(u64),
}

impl Term {
    pub fn ident(s: &str) -> Term {
        Term::Ident(s.to_string())
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }

    pub fn lambda(x: &str, ty: Type, body: Term) -> Term {
        Term::Lambda(x.to_string(), ty, Box::new(body))
    }

    pub fn let_(x: &str, ty: Option<Type>, bound: Term, body: Term) -> Term {
        Term::Let(x.to_string(), ty, Box::new(bound), Box::new(body))
    }

    pub fn assign(lhs: Term, rhs: Term) -> Term {
        Term::Assign(Box::new(lhs), Box::new(rhs))
    }

    pub fn deref(t: Term) -> Term {
        Term::Deref(Box::new(t))
    }

    pub fn bin(op: BinOp, a: Term, b: Term) -> Term {
        Term::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn ite(g: Term, tt: Term, ff: Term) -> Term {
        Term::If(Box::new(g), Box::new(tt), Box::new(ff))
    }

    pub fn size(&self) -> usize {
        1 + match self {
            Term::Unit | Term::IntLit(_) | Term::Ident(_) | Term::Ref | Term::Loc(_) => 0,
            Term::Bin(_, a, b)
            | Term::Assign(a, b)
            | Term::MkVar(a, b)
            | Term::App(a, b)
            | Term::While(a, b) => a.size() + b.size(),
            Term::If(a, b, c) => a.size() + b.size() + c.size(),
            Term::Deref(a) | Term::Fix(a) => a.size(),
            Term::Lambda(_, _, b) | Term::New(_, b) => b.size(),
            Term::Let(_, _, a, b) => a.size() + b.size(),
        }
    }
}

/// Sequencing sugar: `m; n` is a let with an unused fresh binder.
pub fn seq(m: Term, n: Term) -> Term {
    Term::Let(fresh_name(), None, Box::new(m), Box::new(n))
}

/// Canonical diverging term of each type: a busy loop, sequenced to a dummy
/// value where the type demands one.
pub fn omega(ty: &Type) -> Term {
    let spin = Term::While(Box::new(Term::IntLit(1)), Box::new(Term::Unit));
    match ty {
        Type::Com => spin,
        _ => seq(spin, dummy_value(ty)),
    }
}

fn dummy_value(ty: &Type) -> Term {
    match ty {
        Type::Com => Term::Unit,
        Type::Exp => Term::IntLit(0),
        Type::Var => Term::MkVar(
            Box::new(Term::lambda("$u", Type::Com, Term::IntLit(0))),
            Box::new(Term::lambda("$v", Type::Exp, Term::Unit)),
        ),
        Type::Arrow(a, b) => Term::Lambda(fresh_name(), (**a).clone(), Box::new(dummy_value(b))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Context(pub Vec<(String, Type)>);

impl Context {
    pub fn empty() -> Context {
        Context(Vec::new())
    }

    pub fn lookup(&self, name: &str) -> Option<&Type> {
        // Later bindings shadow earlier ones.
        self.0.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn extended(&self, name: &str, ty: Type) -> Context {
        let mut v = self.0.clone();
        v.push((name.to_string(), ty));
        Context(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, t)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}:{}", n, t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgment {
    pub ctx: Context,
    pub term: Term,
    pub ty: Type,
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ctx.is_empty() {
            write!(f, "|- {} : {}", self.term, self.ty)
        } else {
            write!(f, "{} |- {} : {}", self.ctx, self.term, self.ty)
        }
    }
}

// ---------------------------------------------------------------------------
// Fresh names. All machine-generated binders live in the `$` namespace; the
// parser bumps the counter past any `$k` identifiers it sees, so fresh names
// never collide with live ones.

static FRESH: AtomicU64 = AtomicU64::new(0);

pub fn fresh_name() -> String {
    format!("${}", FRESH.fetch_add(1, Ordering::Relaxed))
}

fn reserve_name(name: &str) {
    if let Some(rest) = name.strip_prefix('$') {
        if let Ok(k) = rest.parse::<u64>() {
            FRESH.fetch_max(k + 1, Ordering::Relaxed);
        }
    }
}

// ---------------------------------------------------------------------------
// Errors

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for SyntaxError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeError(pub String);

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "type error: {}", self.0)
    }
}

impl std::error::Error for TypeError {}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    KwSkip,
    KwIf,
    KwThen,
    KwElse,
    KwFn,
    KwFix,
    KwNew,
    KwRef,
    KwWhile,
    KwDo,
    KwLet,
    KwIn,
    KwMkvar,
    KwCom,
    KwExp,
    KwVar,
    Turnstile, // |-
    ArrowTy,   // ->
    ArrowFn,   // =>
    AssignOp,  // :=
    Semi,
    Colon,
    Comma,
    LParen,
    RParen,
    Bang,
    Plus,
    Minus,
    Star,
    Eq,
}

#[derive(Debug, Clone)]
struct Sp {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Sp>, SyntaxError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    let err = |line, col, m: &str| SyntaxError {
        line,
        col,
        message: m.to_string(),
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut push = |tok| out.push(Sp { tok, line: tl, col: tc });
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '#' => {
                // Comment to end of line.
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '(' => push(Tok::LParen),
            ')' => push(Tok::RParen),
            ';' => push(Tok::Semi),
            ',' => push(Tok::Comma),
            '!' => push(Tok::Bang),
            '+' => push(Tok::Plus),
            '*' => push(Tok::Star),
            '=' => {
                if chars.get(i + 1) == Some(&'>') {
                    push(Tok::ArrowFn);
                    i += 1;
                    col += 1;
                } else {
                    push(Tok::Eq);
                }
            }
            '-' => {
                if chars.get(i + 1) == Some(&'>') {
                    push(Tok::ArrowTy);
                    i += 1;
                    col += 1;
                } else {
                    push(Tok::Minus);
                }
            }
            ':' => {
                if chars.get(i + 1) == Some(&'=') {
                    push(Tok::AssignOp);
                    i += 1;
                    col += 1;
                } else {
                    push(Tok::Colon);
                }
            }
            '|' => {
                if chars.get(i + 1) == Some(&'-') {
                    push(Tok::Turnstile);
                    i += 1;
                    col += 1;
                } else {
                    return Err(err(line, col, "expected '|-'"));
                }
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let s: String = chars[i..j].iter().collect();
                let v = s
                    .parse::<i64>()
                    .map_err(|_| err(line, col, "integer literal out of range"))?;
                push(Tok::Int(v));
                col += (j - i - 1) as usize;
                i = j - 1;
            }
            c if c.is_alphabetic() || c == '_' || c == '$' => {
                let mut j = i;
                while j < chars.len()
                    && (chars[j].is_alphanumeric()
                        || chars[j] == '_'
                        || chars[j] == '$'
                        || chars[j] == '\'')
                {
                    j += 1;
                }
                let s: String = chars[i..j].iter().collect();
                let tok = match s.as_str() {
                    "skip" => Tok::KwSkip,
                    "if" => Tok::KwIf,
                    "then" => Tok::KwThen,
                    "else" => Tok::KwElse,
                    "fn" => Tok::KwFn,
                    "fix" => Tok::KwFix,
                    "new" => Tok::KwNew,
                    "ref" => Tok::KwRef,
                    "while" => Tok::KwWhile,
                    "do" => Tok::KwDo,
                    "let" => Tok::KwLet,
                    "in" => Tok::KwIn,
                    "mkvar" => Tok::KwMkvar,
                    "com" => Tok::KwCom,
                    "exp" => Tok::KwExp,
                    "var" => Tok::KwVar,
                    _ => {
                        reserve_name(&s);
                        Tok::Ident(s)
                    }
                };
                push(tok);
                col += (j - i - 1) as usize;
                i = j - 1;
            }
            _ => return Err(err(line, col, &format!("unexpected character '{}'", c))),
        }
        i += 1;
        col += 1;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser: recursive descent, one precedence level per function.
//
//   judgment := [ctx] '|-' term [':' type]
//   term     := bind (';' term)?
//   bind     := let | fn | if | while | new | fix bind | assign
//   assign   := add (':=' bind)?
//   add      := mul (('+'|'-') mul)*
//   mul      := app ('*' app)*
//   app      := prefix prefix*
//   prefix   := '!' prefix | atom
//   atom     := skip | INT | ident | ref | mkvar '(' term ',' term ')' | '(' term ')'

struct Parser {
    toks: Vec<Sp>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|s| (s.line, s.col))
            .unwrap_or((1, 1))
    }

    fn fail<T>(&self, m: &str) -> Result<T, SyntaxError> {
        let (line, col) = self.here();
        Err(SyntaxError {
            line,
            col,
            message: m.to_string(),
        })
    }

    fn eat(&mut self, t: &Tok, what: &str) -> Result<(), SyntaxError> {
        if self.peek() == Some(t) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(&format!("expected {}", what))
        }
    }

    fn eat_ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            _ => self.fail("expected identifier"),
        }
    }

    fn ty(&mut self) -> Result<Type, SyntaxError> {
        let lhs = self.ty_atom()?;
        if self.peek() == Some(&Tok::ArrowTy) {
            self.pos += 1;
            let rhs = self.ty()?;
            Ok(Type::arrow(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn ty_atom(&mut self) -> Result<Type, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::KwCom) => {
                self.pos += 1;
                Ok(Type::Com)
            }
            Some(Tok::KwExp) => {
                self.pos += 1;
                Ok(Type::Exp)
            }
            Some(Tok::KwVar) => {
                self.pos += 1;
                Ok(Type::Var)
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let t = self.ty()?;
                self.eat(&Tok::RParen, "')'")?;
                Ok(t)
            }
            _ => self.fail("expected type"),
        }
    }

    fn term(&mut self) -> Result<Term, SyntaxError> {
        let head = self.bind()?;
        if self.peek() == Some(&Tok::Semi) {
            self.pos += 1;
            let rest = self.term()?;
            Ok(seq(head, rest))
        } else {
            Ok(head)
        }
    }

    fn bind(&mut self) -> Result<Term, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::KwLet) => {
                self.pos += 1;
                let x = self.eat_ident()?;
                self.eat(&Tok::Eq, "'='")?;
                let bound = self.term()?;
                self.eat(&Tok::KwIn, "'in'")?;
                let body = self.term()?;
                Ok(Term::Let(x, None, Box::new(bound), Box::new(body)))
            }
            Some(Tok::KwFn) => {
                self.pos += 1;
                let x = self.eat_ident()?;
                self.eat(&Tok::Colon, "':'")?;
                let ty = self.ty()?;
                self.eat(&Tok::ArrowFn, "'=>'")?;
                let body = self.term()?;
                Ok(Term::Lambda(x, ty, Box::new(body)))
            }
            Some(Tok::KwIf) => {
                self.pos += 1;
                let g = self.term()?;
                self.eat(&Tok::KwThen, "'then'")?;
                let tt = self.term()?;
                self.eat(&Tok::KwElse, "'else'")?;
                let ff = self.bind()?;
                Ok(Term::ite(g, tt, ff))
            }
            Some(Tok::KwWhile) => {
                self.pos += 1;
                let g = self.term()?;
                self.eat(&Tok::KwDo, "'do'")?;
                let body = self.bind()?;
                Ok(Term::While(Box::new(g), Box::new(body)))
            }
            Some(Tok::KwNew) => {
                self.pos += 1;
                let x = self.eat_ident()?;
                self.eat(&Tok::KwIn, "'in'")?;
                let body = self.term()?;
                Ok(Term::New(x, Box::new(body)))
            }
            Some(Tok::KwFix) => {
                self.pos += 1;
                let body = self.bind()?;
                Ok(Term::Fix(Box::new(body)))
            }
            _ => self.assign(),
        }
    }

    fn assign(&mut self) -> Result<Term, SyntaxError> {
        let lhs = self.add()?;
        if self.peek() == Some(&Tok::AssignOp) {
            self.pos += 1;
            let rhs = self.bind()?;
            Ok(Term::assign(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn add(&mut self) -> Result<Term, SyntaxError> {
        let mut acc = self.mul()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.mul()?;
            acc = Term::bin(op, acc, rhs);
        }
        Ok(acc)
    }

    fn mul(&mut self) -> Result<Term, SyntaxError> {
        let mut acc = self.app()?;
        while self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            let rhs = self.app()?;
            acc = Term::bin(BinOp::Mul, acc, rhs);
        }
        Ok(acc)
    }

    fn starts_prefix(&self) -> bool {
        matches!(
            self.peek(),
            Some(
                Tok::Bang
                    | Tok::KwSkip
                    | Tok::Int(_)
                    | Tok::Ident(_)
                    | Tok::KwRef
                    | Tok::KwMkvar
                    | Tok::LParen
            )
        )
    }

    fn app(&mut self) -> Result<Term, SyntaxError> {
        let mut acc = self.prefix()?;
        while self.starts_prefix() {
            let arg = self.prefix()?;
            acc = Term::app(acc, arg);
        }
        Ok(acc)
    }

    fn prefix(&mut self) -> Result<Term, SyntaxError> {
        if self.peek() == Some(&Tok::Bang) {
            self.pos += 1;
            let t = self.prefix()?;
            Ok(Term::deref(t))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<Term, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::KwSkip) => {
                self.pos += 1;
                Ok(Term::Unit)
            }
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Term::IntLit(v))
            }
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(Term::Ident(s))
            }
            Some(Tok::KwRef) => {
                self.pos += 1;
                Ok(Term::Ref)
            }
            Some(Tok::KwMkvar) => {
                self.pos += 1;
                self.eat(&Tok::LParen, "'('")?;
                let rd = self.term()?;
                self.eat(&Tok::Comma, "','")?;
                let wr = self.term()?;
                self.eat(&Tok::RParen, "')'")?;
                Ok(Term::MkVar(Box::new(rd), Box::new(wr)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let t = self.term()?;
                self.eat(&Tok::RParen, "')'")?;
                Ok(t)
            }
            _ => self.fail("expected term"),
        }
    }

    fn judgment(&mut self) -> Result<(Context, Term, Option<Type>), SyntaxError> {
        let mut ctx = Context::empty();
        if self.peek() != Some(&Tok::Turnstile) {
            loop {
                let x = self.eat_ident()?;
                self.eat(&Tok::Colon, "':'")?;
                let ty = self.ty()?;
                if ctx.0.iter().any(|(n, _)| *n == x) {
                    return self.fail(&format!("duplicate context identifier '{}'", x));
                }
                ctx.0.push((x, ty));
                match self.peek() {
                    Some(Tok::Comma) => {
                        self.pos += 1;
                    }
                    _ => break,
                }
            }
        }
        self.eat(&Tok::Turnstile, "'|-'")?;
        let t = self.term()?;
        let ann = if self.peek() == Some(&Tok::Colon) {
            self.pos += 1;
            Some(self.ty()?)
        } else {
            None
        };
        if self.pos != self.toks.len() {
            return self.fail("trailing input after judgment");
        }
        Ok((ctx, t, ann))
    }
}

/// Raw parse of `Γ |- M [: θ]` with no typechecking.
pub fn parse_judgment_raw(src: &str) -> Result<(Context, Term, Option<Type>), SyntaxError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    p.judgment()
}

/// Parse and typecheck a judgment. Let binders get their inferred
/// annotations; an explicit result annotation is verified.
pub fn parse_term(src: &str) -> Result<Judgment, SyntaxError> {
    let (ctx, mut term, ann) = parse_judgment_raw(src)?;
    let ty = typecheck_fill(&ctx, &mut term).map_err(|e| SyntaxError {
        line: 0,
        col: 0,
        message: e.to_string(),
    })?;
    if let Some(a) = ann {
        if a != ty {
            return Err(SyntaxError {
                line: 0,
                col: 0,
                message: format!("annotation says {} but the term has type {}", a, ty),
            });
        }
    }
    Ok(Judgment { ctx, term, ty })
}

// ---------------------------------------------------------------------------
// Typechecking

pub fn typecheck(ctx: &Context, t: &Term) -> Result<Type, TypeError> {
    let mut c = t.clone();
    typecheck_fill(ctx, &mut c)
}

/// Worker: infers the type and fills in missing `let` annotations in place.
pub fn typecheck_fill(ctx: &Context, t: &mut Term) -> Result<Type, TypeError> {
    match t {
        Term::Unit => Ok(Type::Com),
        Term::IntLit(_) => Ok(Type::Exp),
        Term::Loc(_) => Ok(Type::Var),
        Term::Ref => Ok(Type::Var),
        Term::Ident(x) => ctx
            .lookup(x)
            .cloned()
            .ok_or_else(|| TypeError(format!("unbound identifier '{}'", x))),
        Term::Bin(_, a, b) => {
            expect(ctx, a, &Type::Exp)?;
            expect(ctx, b, &Type::Exp)?;
            Ok(Type::Exp)
        }
        Term::If(g, tt, ff) => {
            expect(ctx, g, &Type::Exp)?;
            let t1 = typecheck_fill(ctx, tt)?;
            let t0 = typecheck_fill(ctx, ff)?;
            if t1 != t0 {
                return Err(TypeError(format!(
                    "branches disagree: {} vs {}",
                    t1, t0
                )));
            }
            Ok(t1)
        }
        Term::Deref(m) => {
            expect(ctx, m, &Type::Var)?;
            Ok(Type::Exp)
        }
        Term::Assign(m, n) => {
            expect(ctx, m, &Type::Var)?;
            expect(ctx, n, &Type::Exp)?;
            Ok(Type::Com)
        }
        Term::MkVar(rd, wr) => {
            expect(ctx, rd, &Type::arrow(Type::Com, Type::Exp))?;
            expect(ctx, wr, &Type::arrow(Type::Exp, Type::Com))?;
            Ok(Type::Var)
        }
        Term::App(f, a) => {
            let tf = typecheck_fill(ctx, f)?;
            match tf {
                Type::Arrow(dom, cod) => {
                    expect(ctx, a, &dom)?;
                    Ok(*cod)
                }
                other => Err(TypeError(format!(
                    "applied a term of non-function type {}",
                    other
                ))),
            }
        }
        Term::Lambda(x, ty, body) => {
            let inner = ctx.extended(x, ty.clone());
            let tb = typecheck_fill(&inner, body)?;
            Ok(Type::arrow(ty.clone(), tb))
        }
        Term::Fix(m) => {
            let tm = typecheck_fill(ctx, m)?;
            match tm {
                Type::Arrow(a, b) if *a == *b && matches!(*a, Type::Arrow(_, _)) => Ok(*a),
                other => Err(TypeError(format!(
                    "fix needs type (t -> t') -> (t -> t'), got {}",
                    other
                ))),
            }
        }
        Term::New(x, body) => {
            let inner = ctx.extended(x, Type::Var);
            let tb = typecheck_fill(&inner, body)?;
            if !tb.is_base() {
                return Err(TypeError(format!(
                    "new body must have base type, got {}",
                    tb
                )));
            }
            Ok(tb)
        }
        Term::While(g, body) => {
            expect(ctx, g, &Type::Exp)?;
            expect(ctx, body, &Type::Com)?;
            Ok(Type::Com)
        }
        Term::Let(x, ann, bound, body) => {
            let tb = typecheck_fill(ctx, bound)?;
            if let Some(a) = ann {
                if *a != tb {
                    return Err(TypeError(format!(
                        "let annotation {} does not match bound term type {}",
                        a, tb
                    )));
                }
            } else {
                *ann = Some(tb.clone());
            }
            let inner = ctx.extended(x, tb);
            typecheck_fill(&inner, body)
        }
    }
}

fn expect(ctx: &Context, t: &mut Term, want: &Type) -> Result<(), TypeError> {
    let got = typecheck_fill(ctx, t)?;
    if got == *want {
        Ok(())
    } else {
        Err(TypeError(format!("expected {}, got {}", want, got)))
    }
}

// ---------------------------------------------------------------------------
// Fragments

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fragment {
    PCFplus,
    IAcbv,
    RML,
    FullL,
    IAloop,
    IA2plus,
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Fragment::PCFplus => "PCF+",
            Fragment::IAcbv => "IAcbv",
            Fragment::RML => "RML",
            Fragment::FullL => "FullL",
            Fragment::IAloop => "IAloop",
            Fragment::IA2plus => "IA2+",
        };
        write!(f, "{}", s)
    }
}

/// Argument-side type grammar of the second-order fragment:
/// Φ ::= β | var | β→Φ | var→Φ | (β→β)→Φ.
pub fn is_phi(ty: &Type) -> bool {
    match ty {
        Type::Com | Type::Exp | Type::Var => true,
        Type::Arrow(a, b) => {
            let arg_ok = match &**a {
                Type::Com | Type::Exp | Type::Var => true,
                Type::Arrow(c, d) => c.is_base() && d.is_base(),
            };
            arg_ok && is_phi(b)
        }
    }
}

/// Result-side type grammar: Θ ::= β | var | Φ→Θ.
pub fn is_theta_shape(ty: &Type) -> bool {
    match ty {
        Type::Com | Type::Exp | Type::Var => true,
        Type::Arrow(a, b) => is_phi(a) && is_theta_shape(b),
    }
}

struct Flags {
    has_new: bool,
    has_ref: bool,
    has_fix: bool,
    has_loc: bool,
    lits_in_range: bool,
}

fn scan(t: &Term, n: u32, f: &mut Flags) {
    match t {
        Term::Unit | Term::Ident(_) => {}
        Term::IntLit(v) => {
            if *v < 0 || *v > n as i64 {
                f.lits_in_range = false;
            }
        }
        Term::Ref => f.has_ref = true,
        Term::Loc(_) => f.has_loc = true,
        Term::Fix(m) => {
            f.has_fix = true;
            scan(m, n, f);
        }
        Term::New(_, b) => {
            f.has_new = true;
            scan(b, n, f);
        }
        Term::Bin(_, a, b)
        | Term::Assign(a, b)
        | Term::MkVar(a, b)
        | Term::App(a, b)
        | Term::While(a, b)
        | Term::Let(_, _, a, b) => {
            scan(a, n, f);
            scan(b, n, f);
        }
        Term::If(a, b, c) => {
            scan(a, n, f);
            scan(b, n, f);
            scan(c, n, f);
        }
        Term::Deref(a) | Term::Lambda(_, _, a) => scan(a, n, f),
    }
}

/// Every judgment of the typing derivation must be `x̄:Φ̄ ⊢ M:Θ`: contexts
/// stay inside Φ (so: every binder type is Φ) and every subterm's type is
/// Θ-shaped.
fn derivation_second_order(ctx: &Context, t: &Term) -> bool {
    fn walk(ctx: &Context, t: &Term) -> Option<Type> {
        let ty = match t {
            Term::Unit => Type::Com,
            Term::IntLit(_) => Type::Exp,
            Term::Loc(_) | Term::Ref => Type::Var,
            Term::Ident(x) => ctx.lookup(x)?.clone(),
            Term::Bin(_, a, b) => {
                walk(ctx, a)?;
                walk(ctx, b)?;
                Type::Exp
            }
            Term::If(g, tt, ff) => {
                walk(ctx, g)?;
                let t1 = walk(ctx, tt)?;
                walk(ctx, ff)?;
                t1
            }
            Term::Deref(m) => {
                walk(ctx, m)?;
                Type::Exp
            }
            Term::Assign(m, n) => {
                walk(ctx, m)?;
                walk(ctx, n)?;
                Type::Com
            }
            Term::MkVar(rd, wr) => {
                walk(ctx, rd)?;
                walk(ctx, wr)?;
                Type::Var
            }
            Term::App(f, a) => {
                let tf = walk(ctx, f)?;
                walk(ctx, a)?;
                match tf {
                    Type::Arrow(_, cod) => *cod,
                    _ => return None,
                }
            }
            Term::Lambda(x, ty, body) => {
                if !is_phi(ty) {
                    return None;
                }
                let tb = walk(&ctx.extended(x, ty.clone()), body)?;
                Type::arrow(ty.clone(), tb)
            }
            Term::Fix(m) => {
                let tm = walk(ctx, m)?;
                match tm {
                    Type::Arrow(a, _) => *a,
                    _ => return None,
                }
            }
            Term::New(x, body) => walk(&ctx.extended(x, Type::Var), body)?,
            Term::While(g, body) => {
                walk(ctx, g)?;
                walk(ctx, body)?;
                Type::Com
            }
            Term::Let(x, ann, bound, body) => {
                let tb = walk(ctx, bound)?;
                if ann.as_ref().is_some_and(|a| *a != tb) {
                    return None;
                }
                if !is_phi(&tb) {
                    return None;
                }
                walk(&ctx.extended(x, tb), body)?
            }
        };
        if is_theta_shape(&ty) {
            Some(ty)
        } else {
            None
        }
    }
    ctx.0.iter().all(|(_, ty)| is_phi(ty)) && walk(ctx, t).is_some()
}

/// All fragments the judgment inhabits. `n` bounds integer literals for the
/// finitary fragments. Loops classify everywhere (in the full language they
/// are sugar for a fix loop); runtime locations only in the full language.
pub fn classify_fragment(ctx: &Context, t: &Term, n: u32) -> BTreeSet<Fragment> {
    let mut f = Flags {
        has_new: false,
        has_ref: false,
        has_fix: false,
        has_loc: false,
        lits_in_range: true,
    };
    scan(t, n, &mut f);
    let mut out = BTreeSet::new();
    out.insert(Fragment::FullL);
    if f.has_loc {
        return out;
    }
    if !f.has_ref {
        out.insert(Fragment::IAcbv);
    }
    if !f.has_new {
        out.insert(Fragment::RML);
    }
    if !f.has_ref && !f.has_new {
        out.insert(Fragment::PCFplus);
    }
    if !f.has_ref && !f.has_fix && f.lits_in_range {
        out.insert(Fragment::IAloop);
        if derivation_second_order(ctx, t) {
            out.insert(Fragment::IA2plus);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Free variables, substitution, alpha-equivalence

pub fn free_vars(t: &Term) -> BTreeSet<String> {
    fn go(t: &Term, out: &mut BTreeSet<String>, bound: &mut Vec<String>) {
        match t {
            Term::Ident(x) => {
                if !bound.iter().any(|b| b == x) {
                    out.insert(x.clone());
                }
            }
            Term::Unit | Term::IntLit(_) | Term::Ref | Term::Loc(_) => {}
            Term::Bin(_, a, b)
            | Term::Assign(a, b)
            | Term::MkVar(a, b)
            | Term::App(a, b)
            | Term::While(a, b) => {
                go(a, out, bound);
                go(b, out, bound);
            }
            Term::If(a, b, c) => {
                go(a, out, bound);
                go(b, out, bound);
                go(c, out, bound);
            }
            Term::Deref(a) | Term::Fix(a) => go(a, out, bound),
            Term::Lambda(x, _, body) | Term::New(x, body) => {
                bound.push(x.clone());
                go(body, out, bound);
                bound.pop();
            }
            Term::Let(x, _, bd, body) => {
                go(bd, out, bound);
                bound.push(x.clone());
                go(body, out, bound);
                bound.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    go(t, &mut out, &mut Vec::new());
    out
}

/// Capture-avoiding substitution of `v` for free occurrences of `x`.
pub fn substitute(t: &Term, x: &str, v: &Term) -> Term {
    let fv = free_vars(v);
    subst_go(t, x, v, &fv)
}

fn subst_go(t: &Term, x: &str, v: &Term, fv: &BTreeSet<String>) -> Term {
    // Binder handling shared by lambda/new/let bodies.
    fn under(
        binder: &str,
        body: &Term,
        x: &str,
        v: &Term,
        fv: &BTreeSet<String>,
    ) -> (String, Term) {
        if binder == x {
            return (binder.to_string(), body.clone());
        }
        if fv.contains(binder) && free_vars(body).contains(x) {
            // Rename the binder so `v`'s free occurrence survives.
            let fresh = fresh_name();
            let renamed = substitute(body, binder, &Term::Ident(fresh.clone()));
            (fresh.clone(), subst_go(&renamed, x, v, fv))
        } else {
            (binder.to_string(), subst_go(body, x, v, fv))
        }
    }
    match t {
        Term::Ident(y) if y == x => v.clone(),
        Term::Ident(_) | Term::Unit | Term::IntLit(_) | Term::Ref | Term::Loc(_) => t.clone(),
        Term::Bin(op, a, b) => Term::bin(*op, subst_go(a, x, v, fv), subst_go(b, x, v, fv)),
        Term::If(a, b, c) => Term::ite(
            subst_go(a, x, v, fv),
            subst_go(b, x, v, fv),
            subst_go(c, x, v, fv),
        ),
        Term::Deref(a) => Term::deref(subst_go(a, x, v, fv)),
        Term::Assign(a, b) => Term::assign(subst_go(a, x, v, fv), subst_go(b, x, v, fv)),
        Term::MkVar(a, b) => Term::MkVar(
            Box::new(subst_go(a, x, v, fv)),
            Box::new(subst_go(b, x, v, fv)),
        ),
        Term::App(a, b) => Term::app(subst_go(a, x, v, fv), subst_go(b, x, v, fv)),
        Term::Fix(a) => Term::Fix(Box::new(subst_go(a, x, v, fv))),
        Term::While(a, b) => {
            Term::While(Box::new(subst_go(a, x, v, fv)), Box::new(subst_go(b, x, v, fv)))
        }
        Term::Lambda(y, ty, body) => {
            let (b2, t2) = under(y, body, x, v, fv);
            Term::Lambda(b2, ty.clone(), Box::new(t2))
        }
        Term::New(y, body) => {
            let (b2, t2) = under(y, body, x, v, fv);
            Term::New(b2, Box::new(t2))
        }
        Term::Let(y, ann, bd, body) => {
            let bd2 = subst_go(bd, x, v, fv);
            let (b2, t2) = under(y, body, x, v, fv);
            Term::Let(b2, ann.clone(), Box::new(bd2), Box::new(t2))
        }
    }
}

/// Alpha-equivalence by de Bruijn comparison; let annotations are ignored
/// (they are derived data).
pub fn alpha_eq(a: &Term, b: &Term) -> bool {
    fn go(a: &Term, b: &Term, ea: &mut Vec<String>, eb: &mut Vec<String>) -> bool {
        match (a, b) {
            (Term::Unit, Term::Unit) | (Term::Ref, Term::Ref) => true,
            (Term::IntLit(x), Term::IntLit(y)) => x == y,
            (Term::Loc(x), Term::Loc(y)) => x == y,
            (Term::Ident(x), Term::Ident(y)) => {
                let ia = ea.iter().rev().position(|n| n == x);
                let ib = eb.iter().rev().position(|n| n == y);
                match (ia, ib) {
                    (Some(i), Some(j)) => i == j,
                    (None, None) => x == y,
                    _ => false,
                }
            }
            (Term::Bin(o1, a1, b1), Term::Bin(o2, a2, b2)) => {
                o1 == o2 && go(a1, a2, ea, eb) && go(b1, b2, ea, eb)
            }
            (Term::If(g1, t1, f1), Term::If(g2, t2, f2)) => {
                go(g1, g2, ea, eb) && go(t1, t2, ea, eb) && go(f1, f2, ea, eb)
            }
            (Term::Deref(x), Term::Deref(y)) | (Term::Fix(x), Term::Fix(y)) => go(x, y, ea, eb),
            (Term::Assign(a1, b1), Term::Assign(a2, b2))
            | (Term::MkVar(a1, b1), Term::MkVar(a2, b2))
            | (Term::App(a1, b1), Term::App(a2, b2))
            | (Term::While(a1, b1), Term::While(a2, b2)) => {
                go(a1, a2, ea, eb) && go(b1, b2, ea, eb)
            }
            (Term::Lambda(x, tx, bx), Term::Lambda(y, ty, by)) => {
                tx == ty && {
                    ea.push(x.clone());
                    eb.push(y.clone());
                    let r = go(bx, by, ea, eb);
                    ea.pop();
                    eb.pop();
                    r
                }
            }
            (Term::New(x, bx), Term::New(y, by)) => {
                ea.push(x.clone());
                eb.push(y.clone());
                let r = go(bx, by, ea, eb);
                ea.pop();
                eb.pop();
                r
            }
            (Term::Let(x, _, dx, bx), Term::Let(y, _, dy, by)) => {
                go(dx, dy, ea, eb) && {
                    ea.push(x.clone());
                    eb.push(y.clone());
                    let r = go(bx, by, ea, eb);
                    ea.pop();
                    eb.pop();
                    r
                }
            }
            _ => false,
        }
    }
    go(a, b, &mut Vec::new(), &mut Vec::new())
}

// ---------------------------------------------------------------------------
// Printing (re-parseable)

// Precedence levels, loosest to tightest; mirrors the parser. Sequencing
// sits below the binder forms because `else` and `do` take a binder-level
// term: `if g then a else b; c` parses as `(if g then a else b); c`.
const L_SEQ: u8 = 0;
const L_TERM: u8 = 1; // let / fn / if / while / new / fix
const L_ASSIGN: u8 = 2;
const L_ADD: u8 = 3;
const L_MUL: u8 = 4;
const L_APP: u8 = 5;
const L_PREFIX: u8 = 6;
const L_ATOM: u8 = 7;

// Unused '$'-fresh binders are the sequencing sugar: they print as ';' and
// reparse one level looser than the named binder forms.
fn seq_sugar(x: &str, body: &Term) -> bool {
    x.starts_with('$') && !free_vars(body).contains(x)
}

fn prec(t: &Term) -> u8 {
    match t {
        Term::Unit | Term::IntLit(_) | Term::Ident(_) | Term::Ref | Term::MkVar(_, _) => L_ATOM,
        Term::Loc(_) => L_ATOM,
        Term::Deref(_) => L_PREFIX,
        Term::App(_, _) => L_APP,
        Term::Bin(BinOp::Mul, _, _) => L_MUL,
        Term::Bin(_, _, _) => L_ADD,
        Term::Assign(_, _) => L_ASSIGN,
        Term::Let(x, _, _, body) if seq_sugar(x, body) => L_SEQ,
        _ => L_TERM,
    }
}

fn write_at(t: &Term, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = prec(t);
    if p < min {
        write!(f, "(")?;
        write_term(t, f)?;
        write!(f, ")")
    } else {
        write_term(t, f)
    }
}

fn write_term(t: &Term, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match t {
        Term::Unit => write!(f, "skip"),
        Term::IntLit(v) => {
            if *v < 0 {
                write!(f, "(0-{})", -v)
            } else {
                write!(f, "{}", v)
            }
        }
        Term::Ident(x) => write!(f, "{}", x),
        Term::Ref => write!(f, "ref"),
        Term::Loc(l) => write!(f, "<loc{}>", l),
        Term::MkVar(a, b) => write!(f, "mkvar({}, {})", a, b),
        Term::Deref(m) => {
            write!(f, "!")?;
            write_at(m, L_PREFIX, f)
        }
        Term::App(a, b) => {
            write_at(a, L_APP, f)?;
            write!(f, " ")?;
            write_at(b, L_PREFIX, f)
        }
        Term::Bin(op, a, b) => {
            let lvl = if *op == BinOp::Mul { L_MUL } else { L_ADD };
            write_at(a, lvl, f)?;
            write!(f, " {} ", op)?;
            write_at(b, lvl + 1, f)
        }
        Term::Assign(a, b) => {
            write_at(a, L_ADD, f)?;
            write!(f, " := ")?;
            write_at(b, L_ASSIGN, f)
        }
        Term::If(g, tt, ff) => {
            write!(f, "if ")?;
            write_term(g, f)?;
            write!(f, " then ")?;
            write_term(tt, f)?;
            write!(f, " else ")?;
            write_at(ff, L_TERM, f)
        }
        Term::While(g, b) => {
            write!(f, "while ")?;
            write_term(g, f)?;
            write!(f, " do ")?;
            write_at(b, L_TERM, f)
        }
        Term::New(x, b) => {
            write!(f, "new {} in ", x)?;
            write_term(b, f)
        }
        Term::Lambda(x, ty, b) => {
            write!(f, "fn {}:{} => ", x, ty)?;
            write_term(b, f)
        }
        Term::Fix(m) => {
            write!(f, "fix ")?;
            write_at(m, L_ASSIGN, f)
        }
        Term::Let(x, _, bound, body) => {
            // Named binders print longhand even when the body ignores them,
            // so that contexts whose holes use the binding stay readable.
            if seq_sugar(x, body) {
                write_at(bound, L_ASSIGN, f)?;
                write!(f, "; ")?;
                write_term(body, f)
            } else {
                write!(f, "let {} = ", x)?;
                write_term(bound, f)?;
                write!(f, " in ")?;
                write_term(body, f)
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(src: &str) -> Judgment {
        parse_term(src).unwrap_or_else(|e| panic!("parse of {:?} failed: {}", src, e))
    }

    #[test]
    fn parses_basic_judgments() {
        let j = p("|- skip : com");
        assert_eq!(j.term, Term::Unit);
        assert_eq!(j.ty, Type::Com);

        let j = p("x:var |- x := !x + 1 : com");
        assert_eq!(j.ty, Type::Com);
        assert_eq!(
            j.term,
            Term::assign(
                Term::ident("x"),
                Term::bin(BinOp::Add, Term::deref(Term::ident("x")), Term::IntLit(1))
            )
        );
    }

    #[test]
    fn application_is_left_associative_and_tight() {
        let j = p("f:exp->exp->exp, x:exp |- f x 1 : exp");
        assert_eq!(
            j.term,
            Term::app(
                Term::app(Term::ident("f"), Term::ident("x")),
                Term::IntLit(1)
            )
        );
        // * binds tighter than +
        let j = p("|- 1 + 2 * 2 : exp");
        assert_eq!(
            j.term,
            Term::bin(
                BinOp::Add,
                Term::IntLit(1),
                Term::bin(BinOp::Mul, Term::IntLit(2), Term::IntLit(2))
            )
        );
    }

    #[test]
    fn sequencing_desugars_to_unused_let() {
        let j = p("x:var |- x := 1; !x : exp");
        match &j.term {
            Term::Let(b, ann, bound, body) => {
                assert!(b.starts_with('$'));
                assert_eq!(*ann, Some(Type::Com));
                assert!(matches!(**bound, Term::Assign(_, _)));
                assert!(matches!(**body, Term::Deref(_)));
            }
            other => panic!("expected let, got {:?}", other),
        }
    }

    #[test]
    fn let_gets_annotated_and_types_definitionally() {
        let j = p("|- let x = 1 in x + x : exp");
        match &j.term {
            Term::Let(_, ann, _, _) => assert_eq!(*ann, Some(Type::Exp)),
            other => panic!("expected let, got {:?}", other),
        }
        // Same typing as the application form.
        let app = p("|- (fn x:exp => x + x) 1 : exp");
        assert_eq!(app.ty, Type::Exp);
    }

    #[test]
    fn mkvar_and_fix_type_rules() {
        let j = p("|- mkvar(fn u:com => 0, fn v:exp => skip) : var");
        assert_eq!(j.ty, Type::Var);
        assert!(parse_term("|- mkvar(fn u:exp => 0, fn v:exp => skip) : var").is_err());

        let j = p("|- fix (fn k:com->com => fn c:com => k c) : com -> com");
        assert_eq!(j.ty, Type::arrow(Type::Com, Type::Com));
        // fix is only available at function types
        assert!(parse_term("|- fix (fn x:exp => x) : exp").is_err());
    }

    #[test]
    fn new_requires_base_body() {
        assert!(parse_term("|- new x in fn c:com => c : com -> com").is_err());
        let j = p("|- new x in (x := 1; !x) : exp");
        assert_eq!(j.ty, Type::Exp);
    }

    #[test]
    fn if_branches_may_be_higher_order() {
        let j = p("b:exp |- if b then (fn c:com => c) else (fn c:com => skip) : com -> com");
        assert_eq!(j.ty, Type::arrow(Type::Com, Type::Com));
    }

    #[test]
    fn type_order_matches_definition() {
        assert_eq!(type_order(&Type::Com), 0);
        assert_eq!(type_order(&Type::Var), 1);
        assert_eq!(type_order(&Type::arrow(Type::Com, Type::Exp)), 1);
        assert_eq!(type_order(&Type::arrow(Type::Var, Type::Exp)), 2);
        assert_eq!(
            type_order(&Type::arrow(
                Type::arrow(Type::Com, Type::Com),
                Type::Com
            )),
            2
        );
        // ord is max(ord a + 1, ord b): right nesting stays low.
        assert_eq!(
            type_order(&Type::arrow(
                Type::Com,
                Type::arrow(Type::Com, Type::Com)
            )),
            1
        );
    }

    #[test]
    fn fragment_classification() {
        let j = p("|- new x in (x := 1; !x) : exp");
        let fs = classify_fragment(&j.ctx, &j.term, 2);
        assert!(fs.contains(&Fragment::IAcbv));
        assert!(fs.contains(&Fragment::FullL));
        assert!(fs.contains(&Fragment::IAloop));
        assert!(fs.contains(&Fragment::IA2plus));
        assert!(!fs.contains(&Fragment::RML));
        assert!(!fs.contains(&Fragment::PCFplus));

        let j = p("|- let x = ref in skip : com");
        let fs = classify_fragment(&j.ctx, &j.term, 2);
        assert!(fs.contains(&Fragment::RML));
        assert!(!fs.contains(&Fragment::IAcbv));
        assert!(!fs.contains(&Fragment::IAloop));

        // Literal out of range blocks the finitary fragments at n=2.
        let j = p("|- 5 : exp");
        let fs = classify_fragment(&j.ctx, &j.term, 2);
        assert!(!fs.contains(&Fragment::IAloop));
        let fs5 = classify_fragment(&j.ctx, &j.term, 5);
        assert!(fs5.contains(&Fragment::IA2plus));

        // Third-order context type falls outside the second-order fragment.
        let j = p("f:((com->com)->com)->com |- f (fn g:com->com => g skip) : com");
        let fs = classify_fragment(&j.ctx, &j.term, 2);
        assert!(fs.contains(&Fragment::IAloop));
        assert!(!fs.contains(&Fragment::IA2plus));

        // Second-order shapes stay inside.
        let j = p("f:(com->com)->com |- f (fn c:com => c) : com");
        let fs = classify_fragment(&j.ctx, &j.term, 2);
        assert!(fs.contains(&Fragment::IA2plus));
    }

    #[test]
    fn second_order_gate_checks_subderivations() {
        // The top judgment is innocuous, but a binder inside introduces a
        // third-order context entry.
        let j = p(
            "|- (fn g:((com->com)->com)->com => g (fn h:com->com => h skip)) \
             (fn k:(com->com)->com => k (fn c:com => c)) : com",
        );
        let fs = classify_fragment(&j.ctx, &j.term, 2);
        assert!(!fs.contains(&Fragment::IA2plus));
        assert!(fs.contains(&Fragment::IAloop));
        // (com->com)->com itself is a legal second-order argument shape.
        assert!(is_phi(&Type::arrow(
            Type::arrow(Type::Com, Type::Com),
            Type::Com
        )));
    }

    #[test]
    fn substitution_avoids_capture() {
        // (fn y => x) with x := y must rename the binder.
        let t = Term::lambda("y", Type::Com, Term::ident("x"));
        let r = substitute(&t, "x", &Term::ident("y"));
        match r {
            Term::Lambda(b, _, body) => {
                assert_ne!(b, "y");
                assert_eq!(*body, Term::ident("y"));
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn alpha_equivalence() {
        let a = p("|- fn x:exp => x + 0 : exp -> exp").term;
        let b = p("|- fn y:exp => y + 0 : exp -> exp").term;
        assert!(alpha_eq(&a, &b));
        let c = p("|- fn y:exp => y + 1 : exp -> exp").term;
        assert!(!alpha_eq(&a, &c));
    }

    #[test]
    fn printing_roundtrips_up_to_alpha() {
        let srcs = [
            "|- skip : com",
            "x:var |- x := !x + 1 : com",
            "|- new x in (x := 1; x := 2; !x) : exp",
            "f:com->com->com |- let g1 = f skip in let g2 = f skip in g1 skip : com",
            "|- fn x:var => (x := !x + 1; !x) : var -> exp",
            "|- mkvar(fn u:com => 0, fn v:exp => skip) : var",
            "x:var |- while !x do x := !x - 1 : com",
            "b:exp |- if b then 1 else 0 - 1 : exp",
            "|- fix (fn k:com->com => fn c:com => k c) : com -> com",
            "f:(com->com)->exp |- f (fn c:com => c) * 2 : exp",
        ];
        for s in srcs {
            let j = p(s);
            let printed = format!("{}", j);
            let j2 = p(&printed);
            assert!(
                alpha_eq(&j.term, &j2.term),
                "roundtrip changed term:\n  {}\n  {}",
                s,
                printed
            );
            assert_eq!(j.ty, j2.ty);
            assert_eq!(j.ctx, j2.ctx);
        }

        // Built terms can put sequencing directly under 'else' and 'do',
        // which source text only reaches through parentheses.
        let x = || Term::Ident("x".into());
        let set = |v| Term::Assign(Box::new(x()), Box::new(Term::IntLit(v)));
        let built = Term::New(
            "x".into(),
            Box::new(seq(
                Term::While(
                    Box::new(Term::Deref(Box::new(x()))),
                    Box::new(seq(set(0), Term::Unit)),
                ),
                Term::ite(Term::Deref(Box::new(x())), Term::Unit, seq(set(1), Term::Unit)),
            )),
        );
        let printed = format!("|- {} : com", built);
        let j2 = p(&printed);
        assert!(
            alpha_eq(&built, &j2.term),
            "roundtrip changed term:\n  {}\n  {}",
            built,
            j2.term
        );
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_term("|- if skip then 1 else 2 : exp").is_err());
        assert!(parse_term("|- x : exp").is_err());
        assert!(parse_term("x:com, x:exp |- x : exp").is_err());
        assert!(parse_term("|- skip : exp").is_err());
        assert!(parse_term("|- skip skip : com").is_err());
        assert!(parse_term("|- (skip : com").is_err());
    }

    #[test]
    fn omega_typechecks_and_diverges_syntactically() {
        for ty in [
            Type::Com,
            Type::Exp,
            Type::Var,
            Type::arrow(Type::Com, Type::Exp),
        ] {
            let om = omega(&ty);
            assert_eq!(typecheck(&Context::empty(), &om), Ok(ty));
        }
    }
}
