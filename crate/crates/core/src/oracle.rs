/*!
Bounded distinguishing-context search driven by the interpreter.

This is the second, independent route to inequivalence: run both terms
under closing program contexts and watch for a convergence asymmetry. A
witness context is ground truth, since contextual equivalence quantifies
over exactly these contexts. Exhausting the budget proves nothing.

Contexts come from a fixed generator grammar. Every identifier the hole
expects is bound in front of it, either to a storage cell or to a probe
value of its type, and the hole's result feeds a base-type observer that
converts values into convergence behavior. Probe values form a small
systematic family: constants, diverging stubs, bad variables with
counting or value-guarded methods, and closures that switch behavior
between their first and second call through a private cell. The family is
what makes call-order and rebinding differences observable with contexts
of modest size; a breadth-first sweep of the raw term grammar would have
to cross strata of billions of smaller contexts before reaching the first
call-counting closure.
*/

use std::fmt;

use crate::interp::{eval_with_cost, EvalResult, Heap};
use crate::syntax::{alpha_eq, omega, seq, BinOp, Context, Fragment, Judgment, Term, Type};

/// The identifier standing for the hole inside a template term. The parser
/// cannot produce it in user programs that avoid the `$` namespace.
pub const HOLE: &str = "$hole";

/// A program context: a closed command with one hole of a declared
/// judgment. Filling the hole captures its free identifiers by design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextTemplate {
    pub term: Term,
    pub hole_ctx: Context,
    pub hole_ty: Type,
}

impl ContextTemplate {
    pub fn size(&self) -> usize {
        self.term.size()
    }

    /// Plugs `m` into the hole. Deliberately not capture-avoiding: the
    /// binders of the template are meant to bind `m`'s free identifiers.
    pub fn fill(&self, m: &Term) -> Term {
        plug(&self.term, m)
    }
}

impl fmt::Display for ContextTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format!("{}", self.term).replace(HOLE, "[-]"))
    }
}

fn plug(t: &Term, m: &Term) -> Term {
    match t {
        Term::Ident(x) if x == HOLE => m.clone(),
        Term::Unit | Term::IntLit(_) | Term::Ident(_) | Term::Ref | Term::Loc(_) => t.clone(),
        Term::Bin(op, a, b) => Term::bin(*op, plug(a, m), plug(b, m)),
        Term::If(g, tt, ff) => Term::ite(plug(g, m), plug(tt, m), plug(ff, m)),
        Term::Deref(a) => Term::deref(plug(a, m)),
        Term::Assign(a, b) => Term::assign(plug(a, m), plug(b, m)),
        Term::MkVar(rd, wr) => Term::MkVar(Box::new(plug(rd, m)), Box::new(plug(wr, m))),
        Term::App(a, b) => Term::app(plug(a, m), plug(b, m)),
        Term::Lambda(x, ty, body) => Term::lambda(x, ty.clone(), plug(body, m)),
        Term::Fix(a) => Term::Fix(Box::new(plug(a, m))),
        Term::New(x, body) => Term::New(x.clone(), Box::new(plug(body, m))),
        Term::While(g, b) => Term::While(Box::new(plug(g, m)), Box::new(plug(b, m))),
        Term::Let(x, ann, bound, body) => Term::Let(
            x.clone(),
            ann.clone(),
            Box::new(plug(bound, m)),
            Box::new(plug(body, m)),
        ),
    }
}

// ---------------------------------------------------------------------------
// Probe vocabulary

fn spin() -> Term {
    omega(&Type::Com)
}

fn hole() -> Term {
    Term::ident(HOLE)
}

fn lit(j: u32) -> Term {
    Term::IntLit(j as i64)
}

/// `if e - j then A else B`, with the subtraction dropped at j = 0. In
/// finitary arithmetic the guard is zero exactly when e equals j.
fn branch_on(e: Term, j: u32, nonzero: Term, zero: Term) -> Term {
    let g = if j == 0 {
        e
    } else {
        Term::bin(BinOp::Sub, e, lit(j))
    };
    Term::ite(g, nonzero, zero)
}

/// Closed terms of type `ty` used as return bodies inside probe values:
/// plain values plus one diverging computation.
fn ret_bodies(ty: &Type, n: u32) -> Vec<Term> {
    match ty {
        Type::Com => vec![Term::Unit, spin()],
        Type::Exp => {
            let mut out: Vec<Term> = (0..=n).map(lit).collect();
            out.push(omega(&Type::Exp));
            out
        }
        Type::Var => vec![
            Term::MkVar(
                Box::new(Term::lambda("u", Type::Com, lit(0))),
                Box::new(Term::lambda("v", Type::Exp, Term::Unit)),
            ),
            omega(&Type::Var),
        ],
        Type::Arrow(_, _) => {
            let mut out = pure_funs(ty, n);
            out.truncate(3);
            if let Some(first) = out.first().cloned() {
                out.push(seq(spin(), first));
            }
            out
        }
    }
}

/// Closed argument values used when an observer applies the hole.
fn closed_args(ty: &Type, n: u32) -> Vec<Term> {
    match ty {
        Type::Com => vec![Term::Unit],
        Type::Exp => (0..=n).map(lit).collect(),
        Type::Var => vec![
            Term::MkVar(
                Box::new(Term::lambda("u", Type::Com, lit(0))),
                Box::new(Term::lambda("v", Type::Exp, Term::Unit)),
            ),
            Term::MkVar(
                Box::new(Term::lambda("u", Type::Com, omega(&Type::Exp))),
                Box::new(Term::lambda("v", Type::Exp, Term::Unit)),
            ),
            Term::MkVar(
                Box::new(Term::lambda("u", Type::Com, lit(0))),
                Box::new(Term::lambda("v", Type::Exp, spin())),
            ),
        ],
        Type::Arrow(_, _) => {
            let mut out = pure_funs(ty, n);
            out.truncate(4);
            out
        }
    }
}

/// Cell-free probe closures of a function type: constant returns, and for
/// base or function arguments a little argument-sensitive branching.
fn pure_funs(ty: &Type, n: u32) -> Vec<Term> {
    let (dom, cod) = match ty {
        Type::Arrow(a, b) => (&**a, &**b),
        _ => panic!("pure_funs needs a function type, got {}", ty),
    };
    let rets = ret_bodies(cod, n);
    let mut out = Vec::new();
    for r in &rets {
        out.push(Term::lambda("a", dom.clone(), r.clone()));
    }
    let short: Vec<&Term> = rets.iter().take(2).collect();
    match dom {
        Type::Exp => {
            for j in 0..=n {
                for r1 in &short {
                    for r0 in &short {
                        if alpha_eq(r0, r1) {
                            continue;
                        }
                        out.push(Term::lambda(
                            "a",
                            dom.clone(),
                            branch_on(Term::ident("a"), j, (*r1).clone(), (*r0).clone()),
                        ));
                    }
                }
            }
        }
        Type::Var => {
            for r in &short {
                if n >= 1 {
                    out.push(Term::lambda(
                        "a",
                        dom.clone(),
                        seq(Term::assign(Term::ident("a"), lit(1)), (*r).clone()),
                    ));
                }
                out.push(Term::lambda(
                    "a",
                    dom.clone(),
                    seq(Term::deref(Term::ident("a")), (*r).clone()),
                ));
            }
        }
        Type::Arrow(d2, _) => {
            let arg = closed_args(d2, n).into_iter().next().expect("an argument");
            for r in &short {
                let one = seq(Term::app(Term::ident("a"), arg.clone()), (*r).clone());
                let two = seq(Term::app(Term::ident("a"), arg.clone()), one.clone());
                out.push(Term::lambda("a", dom.clone(), one));
                out.push(Term::lambda("a", dom.clone(), two));
            }
        }
        Type::Com => {}
    }
    out
}

/// Probe closures that change behavior between their first call and every
/// later one, through the private cell `cell`: the first call takes the
/// else branch and sets the cell, later calls take the then branch.
fn counting_funs(ty: &Type, n: u32, cell: &str) -> Vec<Term> {
    if n == 0 {
        return Vec::new();
    }
    let (dom, cod) = match ty {
        Type::Arrow(a, b) => (&**a, &**b),
        _ => panic!("counting_funs needs a function type, got {}", ty),
    };
    let rets = ret_bodies(cod, n);
    let mut out = Vec::new();
    for r1 in &rets {
        for r0 in &rets {
            if alpha_eq(r0, r1) {
                continue;
            }
            let first = seq(Term::assign(Term::ident(cell), lit(1)), r0.clone());
            out.push(Term::lambda(
                "a",
                dom.clone(),
                Term::ite(Term::deref(Term::ident(cell)), r1.clone(), first),
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Bindings for the hole's context

/// One way to close over a single context identifier.
#[derive(Debug, Clone)]
enum Binding {
    /// `let x = v in [..]`, allocating `cell` around it when the probe
    /// value needs private state.
    LetVal {
        x: String,
        val: Term,
        cell: Option<String>,
    },
    /// `new x in [..]`, optionally sequencing a final-value check behind
    /// the body: converges only if the cell ends up holding `check`.
    NewCell { x: String, check: Option<u32> },
}

impl Binding {
    fn wrap(&self, inner: Term) -> Term {
        match self {
            Binding::LetVal { x, val, cell } => {
                let t = Term::let_(x, None, val.clone(), inner);
                match cell {
                    Some(c) => Term::New(c.clone(), Box::new(t)),
                    None => t,
                }
            }
            Binding::NewCell { x, check } => {
                let body = match check {
                    Some(j) => seq(
                        inner,
                        branch_on(Term::deref(Term::ident(x)), *j, spin(), Term::Unit),
                    ),
                    None => inner,
                };
                Term::New(x.clone(), Box::new(body))
            }
        }
    }
}

/// Bad-variable probes for a var-typed identifier: methods drawn from
/// inert, diverging, counting and value-guarded behaviors.
fn var_bindings(x: &str, n: u32, cell: &str) -> Vec<Binding> {
    let mut out = vec![
        Binding::NewCell {
            x: x.to_string(),
            check: None,
        },
    ];
    for j in 0..=n {
        out.push(Binding::NewCell {
            x: x.to_string(),
            check: Some(j),
        });
    }
    let counter = |body: Term, diverge: Term| {
        Term::ite(
            Term::deref(Term::ident(cell)),
            diverge,
            seq(Term::assign(Term::ident(cell), lit(1)), body),
        )
    };
    let mut reads: Vec<(Term, bool)> = vec![(lit(0), false), (omega(&Type::Exp), false)];
    if n >= 1 {
        reads.push((counter(lit(0), omega(&Type::Exp)), true));
    }
    let mut writes: Vec<(Term, bool)> = vec![(Term::Unit, false), (spin(), false)];
    if n >= 1 {
        writes.push((counter(Term::Unit, spin()), true));
    }
    for j in 0..=n {
        writes.push((branch_on(Term::ident("v"), j, spin(), Term::Unit), false));
        writes.push((branch_on(Term::ident("v"), j, Term::Unit, spin()), false));
    }
    for (rd, rc) in &reads {
        for (wr, wc) in &writes {
            if *rc && *wc {
                continue;
            }
            let val = Term::MkVar(
                Box::new(Term::lambda("u", Type::Com, rd.clone())),
                Box::new(Term::lambda("v", Type::Exp, wr.clone())),
            );
            out.push(Binding::LetVal {
                x: x.to_string(),
                val,
                cell: (*rc || *wc).then(|| cell.to_string()),
            });
        }
    }
    out
}

fn bindings_for(x: &str, ty: &Type, n: u32, cell: &str) -> Vec<Binding> {
    match ty {
        Type::Com => vec![Binding::LetVal {
            x: x.to_string(),
            val: Term::Unit,
            cell: None,
        }],
        Type::Exp => (0..=n)
            .map(|j| Binding::LetVal {
                x: x.to_string(),
                val: lit(j),
                cell: None,
            })
            .collect(),
        Type::Var => var_bindings(x, n, cell),
        Type::Arrow(_, _) => {
            let mut out: Vec<Binding> = pure_funs(ty, n)
                .into_iter()
                .map(|val| Binding::LetVal {
                    x: x.to_string(),
                    val,
                    cell: None,
                })
                .collect();
            for val in counting_funs(ty, n, cell) {
                out.push(Binding::LetVal {
                    x: x.to_string(),
                    val,
                    cell: Some(cell.to_string()),
                });
            }
            out
        }
    }
}

// ---------------------------------------------------------------------------
// Observers

/// Contexts of a command result around the hole: terms with one hole of
/// type `ty` whose own type is com, converting the hole's outcome into a
/// convergence verdict.
fn observers(ty: &Type, n: u32) -> Vec<Term> {
    match ty {
        Type::Com => vec![hole()],
        Type::Exp => {
            let mut out = Vec::new();
            for j in 0..=n {
                out.push(branch_on(hole(), j, Term::Unit, spin()));
                out.push(branch_on(hole(), j, spin(), Term::Unit));
            }
            out
        }
        Type::Var => {
            let mut out: Vec<Term> = observers(&Type::Exp, n)
                .iter()
                .map(|o| plug(o, &Term::deref(hole())))
                .collect();
            for j in 0..=n {
                out.push(Term::assign(hole(), lit(j)));
            }
            out
        }
        Type::Arrow(dom, cod) => {
            let mut out = Vec::new();
            for arg in closed_args(dom, n) {
                for o in observers(cod, n) {
                    out.push(plug(&o, &Term::app(hole(), arg.clone())));
                }
            }
            if !cod.is_base() {
                let arg = closed_args(dom, n).into_iter().next().expect("an argument");
                out.push(seq(Term::app(hole(), arg), Term::Unit));
            }
            out
        }
    }
}

// ---------------------------------------------------------------------------
// Enumeration

fn cell_name(i: usize, taken: &Context) -> String {
    let mut name = format!("cc{}", i);
    while taken.lookup(&name).is_some() {
        name.push('c');
    }
    name
}

/// All closing contexts of the generator grammar for a hole of the given
/// judgment, duplicate-free and ordered by size. The same grammar serves
/// both fragments: it uses loops for divergence and stays inside each.
///
/// Panics when `fragment` names a fragment the search does not target.
pub fn enumerate_contexts(
    hole_ctx: &Context,
    hole_ty: &Type,
    max_size: usize,
    fragment: Fragment,
    n: u32,
) -> Vec<ContextTemplate> {
    assert!(
        matches!(fragment, Fragment::IAcbv | Fragment::IAloop),
        "context search targets IAcbv or IAloop, not {}",
        fragment
    );
    let slots: Vec<Vec<Binding>> = hole_ctx
        .0
        .iter()
        .enumerate()
        .map(|(i, (x, ty))| bindings_for(x, ty, n, &cell_name(i, hole_ctx)))
        .collect();
    let mut picks: Vec<Vec<&Binding>> = vec![Vec::new()];
    for slot in &slots {
        let mut next = Vec::new();
        for p in &picks {
            for b in slot {
                let mut p2 = p.clone();
                p2.push(b);
                next.push(p2);
            }
        }
        picks = next;
    }
    let mut out = Vec::new();
    for obs in observers(hole_ty, n) {
        for p in &picks {
            let mut term = obs.clone();
            for b in p.iter().rev() {
                term = b.wrap(term);
            }
            if term.size() <= max_size {
                out.push(ContextTemplate {
                    term,
                    hole_ctx: hole_ctx.clone(),
                    hole_ty: hole_ty.clone(),
                });
            }
        }
    }
    out.sort_by(|a, b| {
        (a.size(), format!("{}", a.term)).cmp(&(b.size(), format!("{}", b.term)))
    });
    out.dedup_by(|a, b| alpha_eq(&a.term, &b.term));
    out
}

// ---------------------------------------------------------------------------
// The search

/// Outcome of [`distinguish`]. Finding nothing within the budget is not
/// evidence of equivalence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchResult {
    Witness(ContextTemplate),
    NoneWithinBudget,
}

fn converged(r: &EvalResult) -> bool {
    match r {
        EvalResult::Value(v, _) => {
            debug_assert!(matches!(v, Term::Unit), "closed commands return unit");
            true
        }
        EvalResult::OutOfFuel => false,
        EvalResult::Stuck(m) => panic!("filled context got stuck: {}", m),
    }
}

/// Re-runs the diverging side with at least ten times the converging
/// side's cost before trusting the asymmetry; slow convergence must not
/// pass for divergence.
fn confirmed_divergent(t: &Term, fuel: u64, other_cost: u64, n: u32) -> bool {
    let budget = fuel.max(other_cost.saturating_mul(10)).max(10);
    let (r, _) = eval_with_cost(t, Heap::new(), budget, Some(n));
    !converged(&r)
}

/// The convergence verdicts of the two fills under this template, when
/// they differ; `None` when the template does not separate the terms.
/// Deterministic, so any witness is replayable.
pub fn convergence_gap(
    tpl: &ContextTemplate,
    m1: &Term,
    m2: &Term,
    fuel: u64,
    n: u32,
) -> Option<(bool, bool)> {
    let f1 = tpl.fill(m1);
    let f2 = tpl.fill(m2);
    let (r1, c1) = eval_with_cost(&f1, Heap::new(), fuel, Some(n));
    let (r2, c2) = eval_with_cost(&f2, Heap::new(), fuel, Some(n));
    match (converged(&r1), converged(&r2)) {
        (true, false) if confirmed_divergent(&f2, fuel, c1, n) => Some((true, false)),
        (false, true) if confirmed_divergent(&f1, fuel, c2, n) => Some((false, true)),
        _ => None,
    }
}

/// Searches the context stream for the first template under which exactly
/// one of the two terms converges.
///
/// Panics when the judgments disagree on context or type.
pub fn distinguish(a: &Judgment, b: &Judgment, max_size: usize, fuel: u64, n: u32) -> SearchResult {
    assert_eq!(a.ctx, b.ctx, "distinguish needs a common context");
    assert_eq!(a.ty, b.ty, "distinguish needs a common type");
    for tpl in enumerate_contexts(&a.ctx, &a.ty, max_size, Fragment::IAcbv, n) {
        if convergence_gap(&tpl, &a.term, &b.term, fuel, n).is_some() {
            return SearchResult::Witness(tpl);
        }
    }
    SearchResult::NoneWithinBudget
}
