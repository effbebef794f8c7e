//! Canonical forms for the loop fragment and the rewrite pass producing them.
//!
//! Canonical terms keep all sequencing in `let` bindings and all identifier
//! use first-order: the only bare identifiers are of base type, and
//! applications occur only as `let x = z ARG in ..` with `z` an in-scope
//! identifier and ARG an identifier (base argument), a literal mkvar pair
//! (var argument) or a literal lambda (arrow argument). With β ranging over
//! com and exp:
//!
//! ```text
//! C ::= () | i | x^β | x^β ⊕ y^β | if x^β then C else C
//!     | x^var := y^exp | !x^var
//!     | fn x:θ => C | mkvar(fn x:com => C, fn y:exp => C) | new x in C
//!     | while C do C
//!     | let x^β = C in C
//!     | let x = z y^β in C
//!     | let x = z mkvar(fn u:com => C, fn v:exp => C) in C
//!     | let x = z (fn w:θ => C) in C
//! ```
//!
//! `canonicalize` rewrites any well-typed term free of `fix`, `ref` and
//! runtime locations into this grammar, preserving its type and behaviour.
//! Subterms are canonicalized first, then each construct is repaired
//! locally: computed operands and guards are let-bound, if/let commute out
//! of operator positions, non-base identifiers are eta-expanded, and
//! non-base lets are eliminated by substitution (`let_canon` documents the
//! termination measure). Canonical forms are not unique, so callers compare
//! them semantically, never syntactically.

use std::collections::BTreeSet;
use std::fmt;

use crate::syntax::{
    classify_fragment, free_vars, fresh_name, substitute, typecheck, BinOp, Context, Fragment,
    Term, Type, TypeError,
};

/// Why a term was rejected by `canonicalize`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonError {
    /// The term contains `fix`, `ref` or a runtime location.
    Unsupported(&'static str),
    /// The term does not typecheck in the given context.
    IllTyped(TypeError),
}

impl fmt::Display for CanonError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CanonError::Unsupported(what) => write!(f, "cannot canonicalize {}", what),
            CanonError::IllTyped(e) => write!(f, "ill-typed input: {}", e),
        }
    }
}

impl std::error::Error for CanonError {}

/// A term certified to lie in the canonical grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalTerm(Term);

impl CanonicalTerm {
    /// Wraps a term after checking grammar membership.
    pub fn new(ctx: &Context, t: Term) -> Option<CanonicalTerm> {
        if is_canonical(ctx, &t) {
            Some(CanonicalTerm(t))
        } else {
            None
        }
    }

    pub fn term(&self) -> &Term {
        &self.0
    }

    pub fn into_term(self) -> Term {
        self.0
    }
}

impl fmt::Display for CanonicalTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

// ---------------------------------------------------------------------------
// Grammar membership

/// Membership in the canonical grammar. The context is needed to type bare
/// identifiers and application heads, so membership is relative to it.
pub fn is_canonical(ctx: &Context, t: &Term) -> bool {
    match t {
        Term::Unit | Term::IntLit(_) => true,
        Term::Ident(x) => ctx.lookup(x).is_some_and(Type::is_base),
        Term::Bin(_, a, b) => base_ident(ctx, a) && base_ident(ctx, b),
        Term::If(g, tt, ff) => base_ident(ctx, g) && is_canonical(ctx, tt) && is_canonical(ctx, ff),
        Term::Assign(l, r) => ident_of(ctx, l, &Type::Var) && ident_of(ctx, r, &Type::Exp),
        Term::Deref(m) => ident_of(ctx, m, &Type::Var),
        Term::MkVar(rd, wr) => mkvar_literal(ctx, rd, wr),
        Term::Lambda(x, ty, b) => is_canonical(&ctx.extended(x, ty.clone()), b),
        Term::New(x, b) => is_canonical(&ctx.extended(x, Type::Var), b),
        Term::While(g, b) => is_canonical(ctx, g) && is_canonical(ctx, b),
        Term::Let(x, ann, bound, body) => match &**bound {
            // Application right-hand side: head and argument shapes are fixed.
            Term::App(zf, arg) => {
                let Term::Ident(z) = &**zf else {
                    return false;
                };
                let Some(Type::Arrow(dom, cod)) = ctx.lookup(z) else {
                    return false;
                };
                let arg_ok = match (&**dom, &**arg) {
                    (d, Term::Ident(y)) if d.is_base() => ctx.lookup(y) == Some(d),
                    (Type::Var, Term::MkVar(rd, wr)) => mkvar_literal(ctx, rd, wr),
                    (Type::Arrow(d1, _), Term::Lambda(w, wt, wb)) => {
                        wt == &**d1 && is_canonical(&ctx.extended(w, wt.clone()), wb)
                    }
                    _ => false,
                };
                arg_ok
                    && ann.as_ref().map_or(true, |a| a == &**cod)
                    && is_canonical(&ctx.extended(x, (**cod).clone()), body)
            }
            // Otherwise only base-type bindings are in the grammar.
            _ => {
                if !is_canonical(ctx, bound) {
                    return false;
                }
                let bty = match ann {
                    Some(a) => a.clone(),
                    None => match typecheck(ctx, bound) {
                        Ok(ty) => ty,
                        Err(_) => return false,
                    },
                };
                bty.is_base() && is_canonical(&ctx.extended(x, bty), body)
            }
        },
        Term::App(_, _) | Term::Fix(_) | Term::Ref | Term::Loc(_) => false,
    }
}

fn base_ident(ctx: &Context, t: &Term) -> bool {
    matches!(t, Term::Ident(x) if ctx.lookup(x).is_some_and(Type::is_base))
}

fn ident_of(ctx: &Context, t: &Term, want: &Type) -> bool {
    matches!(t, Term::Ident(x) if ctx.lookup(x) == Some(want))
}

fn mkvar_literal(ctx: &Context, rd: &Term, wr: &Term) -> bool {
    let (Term::Lambda(u, ut, ub), Term::Lambda(v, vt, vb)) = (rd, wr) else {
        return false;
    };
    *ut == Type::Com
        && *vt == Type::Exp
        && is_canonical(&ctx.extended(u, Type::Com), ub)
        && is_canonical(&ctx.extended(v, Type::Exp), vb)
}

// ---------------------------------------------------------------------------
// Canonicalization

/// Rewrites `t` into the canonical grammar, preserving its type and its
/// behaviour under every context. Rejects ill-typed input and the constructs
/// outside the loop fragment (`fix`, `ref`, runtime locations).
pub fn canonicalize(ctx: &Context, t: &Term) -> Result<CanonicalTerm, CanonError> {
    check_supported(t)?;
    let ty = typecheck(ctx, t).map_err(CanonError::IllTyped)?;
    let out = cz(ctx, t);
    debug_assert!(is_canonical(ctx, &out), "output left the grammar: {}", out);
    debug_assert!(typecheck(ctx, &out).ok().as_ref() == Some(&ty));
    debug_assert!(stays_second_order(ctx, t, &out));
    Ok(CanonicalTerm(out))
}

fn check_supported(t: &Term) -> Result<(), CanonError> {
    match t {
        Term::Fix(_) => Err(CanonError::Unsupported("fix")),
        Term::Ref => Err(CanonError::Unsupported("ref")),
        Term::Loc(_) => Err(CanonError::Unsupported("a runtime location")),
        Term::Unit | Term::IntLit(_) | Term::Ident(_) => Ok(()),
        Term::Bin(_, a, b)
        | Term::Assign(a, b)
        | Term::MkVar(a, b)
        | Term::App(a, b)
        | Term::While(a, b)
        | Term::Let(_, _, a, b) => {
            check_supported(a)?;
            check_supported(b)
        }
        Term::If(a, b, c) => {
            check_supported(a)?;
            check_supported(b)?;
            check_supported(c)
        }
        Term::Deref(a) => check_supported(a),
        Term::Lambda(_, _, b) | Term::New(_, b) => check_supported(b),
    }
}

/// A second-order judgment must stay second-order across the rewrite.
fn stays_second_order(ctx: &Context, before: &Term, after: &Term) -> bool {
    let n = 2.max(max_literal(before));
    !classify_fragment(ctx, before, n).contains(&Fragment::IA2plus)
        || classify_fragment(ctx, after, n).contains(&Fragment::IA2plus)
}

fn max_literal(t: &Term) -> u32 {
    match t {
        Term::IntLit(v) => (*v).clamp(0, u32::MAX as i64) as u32,
        Term::Unit | Term::Ident(_) | Term::Ref | Term::Loc(_) => 0,
        Term::Bin(_, a, b)
        | Term::Assign(a, b)
        | Term::MkVar(a, b)
        | Term::App(a, b)
        | Term::While(a, b)
        | Term::Let(_, _, a, b) => max_literal(a).max(max_literal(b)),
        Term::If(a, b, c) => max_literal(a).max(max_literal(b)).max(max_literal(c)),
        Term::Deref(a) | Term::Fix(a) => max_literal(a),
        Term::Lambda(_, _, b) | Term::New(_, b) => max_literal(b),
    }
}

/// Canonicalizes subterms first, then repairs the construct at the root.
/// Assumes `t` is well-typed in `ctx` and inside the supported fragment.
fn cz(ctx: &Context, t: &Term) -> Term {
    match t {
        Term::Unit | Term::IntLit(_) => t.clone(),
        Term::Ident(x) => {
            let ty = ctx.lookup(x).expect("typechecked").clone();
            cz_ident(x, &ty)
        }
        Term::Bin(op, a, b) => bin_canon(*op, cz(ctx, a), cz(ctx, b)),
        Term::If(g, tt, ff) => {
            let cg = cz(ctx, g);
            let ct = cz(ctx, tt);
            let cf = cz(ctx, ff);
            if matches!(cg, Term::Ident(_)) {
                Term::ite(cg, ct, cf)
            } else {
                let x = fresh_name();
                Term::let_(&x, Some(Type::Exp), cg, Term::ite(Term::ident(&x), ct, cf))
            }
        }
        Term::Deref(m) => match &**m {
            Term::Ident(_) => t.clone(),
            _ => deref_canon(cz(ctx, m)),
        },
        Term::Assign(l, r) => {
            let cr = cz(ctx, r);
            match &**l {
                Term::Ident(x) => assign_ident(x, cr),
                _ => assign_canon(cz(ctx, l), cr),
            }
        }
        Term::MkVar(rd, wr) => mkvar_canon(cz(ctx, rd), cz(ctx, wr)),
        Term::App(f, a) => match &**f {
            Term::Ident(z) => {
                let Some(Type::Arrow(dom, cod)) = ctx.lookup(z) else {
                    unreachable!("typechecked")
                };
                let (dom, cod) = ((**dom).clone(), (**cod).clone());
                let v = fresh_name();
                let body = cz_ident(&v, &cod);
                zapp(z, &dom, &cod, cz(ctx, a), &v, body)
            }
            _ => {
                let cf = cz(ctx, f);
                let ca = cz(ctx, a);
                app_canon(cf, ca)
            }
        },
        Term::Lambda(x, ty, b) => {
            Term::lambda(x, ty.clone(), cz(&ctx.extended(x, ty.clone()), b))
        }
        Term::New(x, b) => Term::New(x.clone(), Box::new(cz(&ctx.extended(x, Type::Var), b))),
        Term::While(g, b) => Term::While(Box::new(cz(ctx, g)), Box::new(cz(ctx, b))),
        Term::Let(x, ann, bound, body) => {
            let bty = match ann {
                Some(a) => a.clone(),
                None => typecheck(ctx, bound).expect("typechecked"),
            };
            // An application bound to a let keeps its own binder.
            if let Term::App(zf, a) = &**bound {
                if let Term::Ident(z) = &**zf {
                    let Some(Type::Arrow(dom, cod)) = ctx.lookup(z) else {
                        unreachable!("typechecked")
                    };
                    let (dom, cod) = ((**dom).clone(), (**cod).clone());
                    let ca = cz(ctx, a);
                    let cbody = cz(&ctx.extended(x, bty), body);
                    return zapp(z, &dom, &cod, ca, x, cbody);
                }
            }
            let cb = cz(ctx, bound);
            let cbody = cz(&ctx.extended(x, bty.clone()), body);
            let_canon(x, &bty, cb, cbody)
        }
        Term::Fix(_) | Term::Ref | Term::Loc(_) => unreachable!("rejected by check_supported"),
    }
}

/// A bare identifier of non-base type is eta-expanded until only base
/// identifiers remain: var becomes the mkvar pair of its two access methods,
/// an arrow becomes a lambda whose application is let-bound.
fn cz_ident(x: &str, ty: &Type) -> Term {
    match ty {
        Type::Com | Type::Exp => Term::ident(x),
        Type::Var => {
            let u = fresh_name();
            let v = fresh_name();
            Term::MkVar(
                Box::new(Term::lambda(&u, Type::Com, Term::deref(Term::ident(x)))),
                Box::new(Term::lambda(
                    &v,
                    Type::Exp,
                    Term::assign(Term::ident(x), Term::ident(&v)),
                )),
            )
        }
        Type::Arrow(dom, cod) => {
            let z = fresh_name();
            let v = fresh_name();
            let arg = if dom.is_base() {
                Term::ident(&z)
            } else {
                cz_ident(&z, dom)
            };
            Term::lambda(
                &z,
                (**dom).clone(),
                Term::let_(
                    &v,
                    Some((**cod).clone()),
                    Term::app(Term::ident(x), arg),
                    cz_ident(&v, cod),
                ),
            )
        }
    }
}

/// Operands of a binary operator must be identifiers; computed operands are
/// let-bound. A bare left identifier is also bound when the right operand
/// still computes, keeping left-to-right evaluation order observable.
fn bin_canon(op: BinOp, a: Term, b: Term) -> Term {
    match (matches!(a, Term::Ident(_)), matches!(b, Term::Ident(_))) {
        (true, true) => Term::bin(op, a, b),
        (false, true) => {
            let x = fresh_name();
            Term::let_(&x, Some(Type::Exp), a, Term::bin(op, Term::ident(&x), b))
        }
        _ => {
            let x = fresh_name();
            let y = fresh_name();
            Term::let_(
                &x,
                Some(Type::Exp),
                a,
                Term::let_(
                    &y,
                    Some(Type::Exp),
                    b,
                    Term::bin(op, Term::ident(&x), Term::ident(&y)),
                ),
            )
        }
    }
}

/// `x := E` with an identifier target: the stored value must itself be an
/// identifier, so a computed right-hand side is bound first.
fn assign_ident(x: &str, rhs: Term) -> Term {
    if matches!(rhs, Term::Ident(_)) {
        Term::assign(Term::ident(x), rhs)
    } else {
        let v = fresh_name();
        Term::let_(
            &v,
            Some(Type::Exp),
            rhs,
            Term::assign(Term::ident(x), Term::ident(&v)),
        )
    }
}

/// `!C` for a canonical non-identifier target: the dereference distributes
/// through if/let and runs the read method of a literal mkvar. The unit
/// argument of the read method is let-bound rather than substituted so the
/// method body stays canonical even where the argument is used as one.
fn deref_canon(target: Term) -> Term {
    match target {
        Term::MkVar(rd, _) => {
            let Term::Lambda(u, _, body) = *rd else {
                unreachable!("canonical mkvar")
            };
            Term::let_(&u, Some(Type::Com), Term::Unit, *body)
        }
        Term::If(g, tt, ff) => {
            Term::If(g, Box::new(deref_canon(*tt)), Box::new(deref_canon(*ff)))
        }
        Term::Let(x, ann, bound, body) => Term::Let(x, ann, bound, Box::new(deref_canon(*body))),
        other => unreachable!("dereference of non-var canonical form {}", other),
    }
}

/// `C := rhs` for a canonical non-identifier target: the assignment sinks
/// through if/let of the target, and a literal mkvar binds the stored value
/// to the write method's parameter. The target's binders are renamed where
/// they would capture the right-hand side.
fn assign_canon(target: Term, rhs: Term) -> Term {
    match target {
        Term::MkVar(_, wr) => {
            let Term::Lambda(v, _, body) = *wr else {
                unreachable!("canonical mkvar")
            };
            Term::let_(&v, Some(Type::Exp), rhs, *body)
        }
        Term::If(g, tt, ff) => Term::If(
            g,
            Box::new(assign_canon(*tt, rhs.clone())),
            Box::new(assign_canon(*ff, rhs)),
        ),
        Term::Let(x, ann, bound, body) => {
            let (x, body) = unshadow(&x, *body, &free_vars(&rhs));
            Term::Let(x, ann, bound, Box::new(assign_canon(body, rhs)))
        }
        other => unreachable!("assignment to non-var canonical form {}", other),
    }
}

/// Both mkvar methods must be literal lambdas: if/let around the read method
/// lift out first, then the same for the write method (the read part is a
/// value by then, so reordering is unobservable).
fn mkvar_canon(rd: Term, wr: Term) -> Term {
    match rd {
        Term::If(g, tt, ff) => Term::If(
            g,
            Box::new(mkvar_canon(*tt, wr.clone())),
            Box::new(mkvar_canon(*ff, wr)),
        ),
        Term::Let(x, ann, bound, body) => {
            let (x, body) = unshadow(&x, *body, &free_vars(&wr));
            Term::Let(x, ann, bound, Box::new(mkvar_canon(body, wr)))
        }
        rd @ Term::Lambda(_, _, _) => mkvar_canon_wr(rd, wr),
        other => unreachable!("mkvar read method {}", other),
    }
}

fn mkvar_canon_wr(rd: Term, wr: Term) -> Term {
    match wr {
        Term::If(g, tt, ff) => Term::If(
            g,
            Box::new(mkvar_canon_wr(rd.clone(), *tt)),
            Box::new(mkvar_canon_wr(rd, *ff)),
        ),
        Term::Let(x, ann, bound, body) => {
            let (x, body) = unshadow(&x, *body, &free_vars(&rd));
            Term::Let(x, ann, bound, Box::new(mkvar_canon_wr(rd, body)))
        }
        wr @ Term::Lambda(_, _, _) => Term::MkVar(Box::new(rd), Box::new(wr)),
        other => unreachable!("mkvar write method {}", other),
    }
}

/// Canonical function part applied to a canonical argument: if/let around
/// the function distribute outwards and a literal lambda becomes a let.
fn app_canon(f: Term, arg: Term) -> Term {
    match f {
        Term::Lambda(x, ty, body) => let_canon(&x, &ty, arg, *body),
        Term::If(g, tt, ff) => Term::If(
            g,
            Box::new(app_canon(*tt, arg.clone())),
            Box::new(app_canon(*ff, arg)),
        ),
        Term::Let(x, ann, bound, body) => {
            let (x, body) = unshadow(&x, *body, &free_vars(&arg));
            Term::Let(x, ann, bound, Box::new(app_canon(body, arg)))
        }
        other => unreachable!("application of non-arrow canonical form {}", other),
    }
}

/// Builds `let x = z ARG in body` from a canonical argument: a computed base
/// argument is bound to an identifier first, and if/let around a non-base
/// argument lift outside the binding.
fn zapp(z: &str, dom: &Type, cod: &Type, arg: Term, x: &str, body: Term) -> Term {
    if dom.is_base() {
        return if matches!(arg, Term::Ident(_)) {
            Term::let_(x, Some(cod.clone()), Term::app(Term::ident(z), arg), body)
        } else {
            let y = fresh_name();
            Term::let_(
                &y,
                Some(dom.clone()),
                arg,
                Term::let_(
                    x,
                    Some(cod.clone()),
                    Term::app(Term::ident(z), Term::ident(&y)),
                    body,
                ),
            )
        };
    }
    match arg {
        Term::If(g, tt, ff) => Term::If(
            g,
            Box::new(zapp(z, dom, cod, *tt, x, body.clone())),
            Box::new(zapp(z, dom, cod, *ff, x, body)),
        ),
        Term::Let(w, ann, bound, wbody) => {
            let mut avoid = free_vars(&body);
            avoid.insert(x.to_string());
            avoid.insert(z.to_string());
            let (w, wbody) = unshadow(&w, *wbody, &avoid);
            Term::Let(w, ann, bound, Box::new(zapp(z, dom, cod, wbody, x, body)))
        }
        value => {
            debug_assert!(matches!(value, Term::MkVar(_, _) | Term::Lambda(_, _, _)));
            Term::let_(x, Some(cod.clone()), Term::app(Term::ident(z), value), body)
        }
    }
}

/// Merges `let x : ty = bound in body`, both parts canonical, into one
/// canonical term. Base bindings are grammar productions already; otherwise
/// the binding is eliminated: if/let around the bound term commute outwards,
/// a var binding substitutes the mkvar methods into the use sites, and an
/// arrow binding substitutes the lambda for one application head at a time,
/// rightmost first.
///
/// Termination measure, lexicographic: (size of `ty`, free occurrences of
/// `x` in `body`, size of `bound`). The if/let cases keep the first two
/// components and shrink `bound`; the mkvar case does not recurse; in the
/// arrow case each round rewrites one application head through two bindings
/// at the strictly smaller argument and result types, and the inserted text
/// is free of `x`, so the occurrence count drops.
fn let_canon(x: &str, ty: &Type, bound: Term, body: Term) -> Term {
    if ty.is_base() {
        return Term::let_(x, Some(ty.clone()), bound, body);
    }
    // The bound term may reference an outer binder of the same name; rename
    // ours so occurrence scanning cannot mix the two up.
    if free_vars(&bound).contains(x) {
        let x2 = fresh_name();
        let body = substitute(&body, x, &Term::ident(&x2));
        return let_canon(&x2, ty, bound, body);
    }
    match bound {
        Term::If(g, tt, ff) => Term::If(
            g,
            Box::new(let_canon(x, ty, *tt, body.clone())),
            Box::new(let_canon(x, ty, *ff, body)),
        ),
        Term::Let(w, ann, d1, d2) => {
            let mut avoid = free_vars(&body);
            avoid.insert(x.to_string());
            let (w, d2) = unshadow(&w, *d2, &avoid);
            Term::Let(w, ann, d1, Box::new(let_canon(x, ty, d2, body)))
        }
        Term::MkVar(rd, wr) => {
            let (Term::Lambda(u, _, rbody), Term::Lambda(v, _, wbody)) = (*rd, *wr) else {
                unreachable!("canonical mkvar")
            };
            let mut avoid = free_vars(&rbody);
            avoid.extend(free_vars(&wbody));
            avoid.insert(x.to_string());
            let body = alpha_avoid(&body, &avoid);
            replace_cell_uses(&body, x, &u, &rbody, &v, &wbody)
        }
        lam @ Term::Lambda(_, _, _) => subst_fun_uses(x, ty, &lam, body),
        other => unreachable!("non-base let binds {}", other),
    }
}

/// After binding a literal mkvar to `x`, each use site runs the matching
/// method: `!x` becomes the read body with its unit argument bound, and
/// `x := y` the write body with `y` bound to the value parameter. The body
/// has been renamed so no inner binder shadows `x` or captures the method
/// bodies; a single pass suffices because the inserted text contains no `x`.
fn replace_cell_uses(t: &Term, x: &str, u: &str, rd: &Term, v: &str, wr: &Term) -> Term {
    match t {
        Term::Deref(m) if matches!(&**m, Term::Ident(y) if y == x) => {
            Term::let_(u, Some(Type::Com), Term::Unit, rd.clone())
        }
        Term::Assign(l, r) if matches!(&**l, Term::Ident(y) if y == x) => {
            Term::let_(v, Some(Type::Exp), (**r).clone(), wr.clone())
        }
        Term::Unit | Term::IntLit(_) | Term::Ident(_) | Term::Ref | Term::Loc(_) => t.clone(),
        Term::Bin(op, a, b) => Term::Bin(
            *op,
            Box::new(replace_cell_uses(a, x, u, rd, v, wr)),
            Box::new(replace_cell_uses(b, x, u, rd, v, wr)),
        ),
        Term::If(g, tt, ff) => Term::If(
            Box::new(replace_cell_uses(g, x, u, rd, v, wr)),
            Box::new(replace_cell_uses(tt, x, u, rd, v, wr)),
            Box::new(replace_cell_uses(ff, x, u, rd, v, wr)),
        ),
        Term::Deref(m) => Term::Deref(Box::new(replace_cell_uses(m, x, u, rd, v, wr))),
        Term::Assign(l, r) => Term::Assign(
            Box::new(replace_cell_uses(l, x, u, rd, v, wr)),
            Box::new(replace_cell_uses(r, x, u, rd, v, wr)),
        ),
        Term::MkVar(a, b) => Term::MkVar(
            Box::new(replace_cell_uses(a, x, u, rd, v, wr)),
            Box::new(replace_cell_uses(b, x, u, rd, v, wr)),
        ),
        Term::App(f, a) => Term::App(
            Box::new(replace_cell_uses(f, x, u, rd, v, wr)),
            Box::new(replace_cell_uses(a, x, u, rd, v, wr)),
        ),
        Term::Lambda(y, ty, b) => Term::Lambda(
            y.clone(),
            ty.clone(),
            Box::new(replace_cell_uses(b, x, u, rd, v, wr)),
        ),
        Term::New(y, b) => Term::New(y.clone(), Box::new(replace_cell_uses(b, x, u, rd, v, wr))),
        Term::While(g, b) => Term::While(
            Box::new(replace_cell_uses(g, x, u, rd, v, wr)),
            Box::new(replace_cell_uses(b, x, u, rd, v, wr)),
        ),
        Term::Let(y, ann, bound, b) => Term::Let(
            y.clone(),
            ann.clone(),
            Box::new(replace_cell_uses(bound, x, u, rd, v, wr)),
            Box::new(replace_cell_uses(b, x, u, rd, v, wr)),
        ),
        Term::Fix(m) => Term::Fix(Box::new(replace_cell_uses(m, x, u, rd, v, wr))),
    }
}

/// Eliminates `let x = fn y => B in body` by rewriting application heads on
/// `x`, rightmost first. The rightmost head `let w = x ARG in K` has no
/// other `x` in ARG or K, so its replacement (a binding of ARG at the
/// argument type, then of B at the result type) is x-free and the occurrence
/// count strictly decreases.
fn subst_fun_uses(x: &str, ty: &Type, lam: &Term, body: Term) -> Term {
    let Type::Arrow(dom, cod) = ty else {
        unreachable!("arrow binding")
    };
    let mut avoid = free_vars(lam);
    avoid.insert(x.to_string());
    let mut cur = alpha_avoid(&body, &avoid);
    while let Some(next) = rewrite_rightmost_call(&cur, x, dom, cod, lam) {
        cur = next;
    }
    debug_assert!(!free_vars(&cur).contains(x), "missed a use of {}", x);
    cur
}

/// One step of the loop above: replaces the rightmost application head on
/// `x`, or reports that none remains. Children are tried right to left so
/// the chosen head's argument and continuation are already x-free.
fn rewrite_rightmost_call(t: &Term, x: &str, dom: &Type, cod: &Type, lam: &Term) -> Option<Term> {
    match t {
        Term::Let(w, ann, bound, k) => {
            if let Some(k2) = rewrite_rightmost_call(k, x, dom, cod, lam) {
                return Some(Term::Let(
                    w.clone(),
                    ann.clone(),
                    bound.clone(),
                    Box::new(k2),
                ));
            }
            if let Some(b2) = rewrite_rightmost_call(bound, x, dom, cod, lam) {
                return Some(Term::Let(w.clone(), ann.clone(), Box::new(b2), k.clone()));
            }
            if let Term::App(zf, arg) = &**bound {
                if matches!(&**zf, Term::Ident(z) if z == x) {
                    let Term::Lambda(y, _, lbody) = lam else {
                        unreachable!("arrow binding")
                    };
                    let inner = let_canon(y, dom, (**arg).clone(), (**lbody).clone());
                    return Some(let_canon(w, cod, inner, (**k).clone()));
                }
            }
            None
        }
        Term::If(g, tt, ff) => {
            if let Some(f2) = rewrite_rightmost_call(ff, x, dom, cod, lam) {
                return Some(Term::If(g.clone(), tt.clone(), Box::new(f2)));
            }
            rewrite_rightmost_call(tt, x, dom, cod, lam)
                .map(|t2| Term::If(g.clone(), Box::new(t2), ff.clone()))
        }
        Term::While(g, b) => {
            if let Some(b2) = rewrite_rightmost_call(b, x, dom, cod, lam) {
                return Some(Term::While(g.clone(), Box::new(b2)));
            }
            rewrite_rightmost_call(g, x, dom, cod, lam)
                .map(|g2| Term::While(Box::new(g2), b.clone()))
        }
        Term::MkVar(rd, wr) => {
            if let Some(w2) = rewrite_rightmost_call(wr, x, dom, cod, lam) {
                return Some(Term::MkVar(rd.clone(), Box::new(w2)));
            }
            rewrite_rightmost_call(rd, x, dom, cod, lam)
                .map(|r2| Term::MkVar(Box::new(r2), wr.clone()))
        }
        Term::App(f, a) => {
            if let Some(a2) = rewrite_rightmost_call(a, x, dom, cod, lam) {
                return Some(Term::App(f.clone(), Box::new(a2)));
            }
            rewrite_rightmost_call(f, x, dom, cod, lam)
                .map(|f2| Term::App(Box::new(f2), a.clone()))
        }
        Term::Lambda(y, yt, b) => rewrite_rightmost_call(b, x, dom, cod, lam)
            .map(|b2| Term::Lambda(y.clone(), yt.clone(), Box::new(b2))),
        Term::New(y, b) => rewrite_rightmost_call(b, x, dom, cod, lam)
            .map(|b2| Term::New(y.clone(), Box::new(b2))),
        // Remaining canonical shapes only mention base or var identifiers.
        _ => None,
    }
}

/// Renames every binder in `t` clashing with `avoid`, so that terms whose
/// free variables lie inside `avoid` can be inserted at any position of the
/// result without capture.
fn alpha_avoid(t: &Term, avoid: &BTreeSet<String>) -> Term {
    match t {
        Term::Unit | Term::IntLit(_) | Term::Ident(_) | Term::Ref | Term::Loc(_) => t.clone(),
        Term::Bin(op, a, b) => Term::Bin(
            *op,
            Box::new(alpha_avoid(a, avoid)),
            Box::new(alpha_avoid(b, avoid)),
        ),
        Term::If(g, tt, ff) => Term::If(
            Box::new(alpha_avoid(g, avoid)),
            Box::new(alpha_avoid(tt, avoid)),
            Box::new(alpha_avoid(ff, avoid)),
        ),
        Term::Deref(m) => Term::Deref(Box::new(alpha_avoid(m, avoid))),
        Term::Assign(l, r) => Term::Assign(
            Box::new(alpha_avoid(l, avoid)),
            Box::new(alpha_avoid(r, avoid)),
        ),
        Term::MkVar(a, b) => Term::MkVar(
            Box::new(alpha_avoid(a, avoid)),
            Box::new(alpha_avoid(b, avoid)),
        ),
        Term::App(f, a) => Term::App(
            Box::new(alpha_avoid(f, avoid)),
            Box::new(alpha_avoid(a, avoid)),
        ),
        Term::While(g, b) => Term::While(
            Box::new(alpha_avoid(g, avoid)),
            Box::new(alpha_avoid(b, avoid)),
        ),
        Term::Fix(m) => Term::Fix(Box::new(alpha_avoid(m, avoid))),
        Term::Lambda(x, ty, b) => {
            let (x, b) = unshadow(x, (**b).clone(), avoid);
            Term::Lambda(x, ty.clone(), Box::new(alpha_avoid(&b, avoid)))
        }
        Term::New(x, b) => {
            let (x, b) = unshadow(x, (**b).clone(), avoid);
            Term::New(x, Box::new(alpha_avoid(&b, avoid)))
        }
        Term::Let(x, ann, bound, b) => {
            let bound = alpha_avoid(bound, avoid);
            let (x, b) = unshadow(x, (**b).clone(), avoid);
            Term::Let(x, ann.clone(), Box::new(bound), Box::new(alpha_avoid(&b, avoid)))
        }
    }
}

/// Renames a binder to a fresh name when it clashes with `avoid`; bound
/// occurrences in the body follow the rename.
fn unshadow(name: &str, body: Term, avoid: &BTreeSet<String>) -> (String, Term) {
    if avoid.contains(name) {
        let fresh = fresh_name();
        let body = substitute(&body, name, &Term::ident(&fresh));
        (fresh, body)
    } else {
        (name.to_string(), body)
    }
}
