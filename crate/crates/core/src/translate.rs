/*!
Regular-language semantics of canonical second-order judgments.

A canonical judgment denotes a strategy whose spinal complete plays form a
regular language over the moves of the judgment's prearena. This module
builds that language by recursion on the canonical grammar and decides
program equivalence by comparing the languages of two judgments.

The language of `Γ |- C : θ` is kept as one automaton per initial move of
the prearena (see [`ComponentLang`]): a word never contains its initial
move, it is the tail of a complete play whose initial move is the
component's key. For base result types the components are refined further
by the value of the final answer, which the refined automata omit.

Justification pointers are the one part of a play that the move sequence
alone does not determine: a call to a let-bound function can point at any
prior answer with the same name. Such a pointer is encoded in the symbols
themselves, with a target mark on the answer that created the binding and
a source mark on the calls it enables. Every binding is encoded both with
and without its marks, so one play is represented by a set of decorated
words, and two judgments are equivalent exactly when their decorated
languages coincide componentwise.

Identifier move names are built from the identifier itself (`x.read`,
`f.ret.*`). Context names must therefore be distinct, must not contain a
dot and must not collide with the result namespace `r`; binders inside the
term are renamed apart automatically before translation.
*/

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::canon::{canonicalize, is_canonical, CanonError, CanonicalTerm};
use crate::games::{denote_type, Label};
use crate::lang::{Mark, Nfa, Symbol, Word};
use crate::syntax::{
    classify_fragment, fresh_name, substitute, typecheck, Context, Fragment, Judgment, Term, Type,
    TypeError,
};

// ---------------------------------------------------------------------------
// Component keys

/// One coordinate of an initial move: the choice of initial move in a single
/// context entry's arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InitSel {
    /// The unique initial move of com, var and function arenas.
    Star,
    /// An integer value, the initial moves of exp.
    Val(u32),
}

impl fmt::Display for InitSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSel::Star => write!(f, "*"),
            InitSel::Val(j) => write!(f, "{}", j),
        }
    }
}

/// The initial moves of a type's arena with integers drawn from {0..n}.
pub fn init_sels(ty: &Type, n: u32) -> Vec<InitSel> {
    match ty {
        Type::Exp => (0..=n).map(InitSel::Val).collect(),
        _ => vec![InitSel::Star],
    }
}

/// An initial move of the judgment's prearena, one selection per context
/// entry in context order.
pub type ComponentKey = Vec<InitSel>;

/// The prearena name of the initial move selected by `key`.
pub fn initial_name(key: &[InitSel]) -> String {
    let parts: Vec<String> = key.iter().map(|s| s.to_string()).collect();
    format!("@({})", parts.join(","))
}

fn all_keys(ctx: &Context, n: u32) -> Vec<ComponentKey> {
    let mut keys: Vec<ComponentKey> = vec![Vec::new()];
    for (_, ty) in &ctx.0 {
        let mut next = Vec::new();
        for k in &keys {
            for s in init_sels(ty, n) {
                let mut k2 = k.clone();
                k2.push(s);
                next.push(k2);
            }
        }
        keys = next;
    }
    keys
}

// ---------------------------------------------------------------------------
// Results and errors

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TranslateError {
    /// The judgments being compared do not share a context and result type.
    JudgmentMismatch(String),
    /// The judgment leaves the decidable second-order fragment.
    OutsideFragment,
    /// Context identifiers must be distinct, dot-free and distinct from the
    /// result namespace `r`.
    BadContextName(String),
    Type(TypeError),
    Canon(CanonError),
    /// The refinement by result value exists at base result types only.
    NonBaseSplit(Type),
}

impl fmt::Display for TranslateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TranslateError::JudgmentMismatch(m) => write!(f, "judgment mismatch: {}", m),
            TranslateError::OutsideFragment => {
                write!(f, "judgment is outside the decidable second-order fragment")
            }
            TranslateError::BadContextName(x) => {
                write!(f, "context identifier '{}' is reserved or repeated", x)
            }
            TranslateError::Type(e) => e.fmt(f),
            TranslateError::Canon(e) => e.fmt(f),
            TranslateError::NonBaseSplit(ty) => {
                write!(f, "no result-value refinement at non-base type {}", ty)
            }
        }
    }
}

impl std::error::Error for TranslateError {}

/// The languages of one judgment, one automaton per initial move.
#[derive(Debug, Clone)]
pub struct ComponentLang {
    pub ctx: Context,
    pub term: CanonicalTerm,
    pub ty: Type,
    pub n: u32,
    /// Tails of complete plays, keyed by the initial move they follow.
    pub components: BTreeMap<ComponentKey, Nfa>,
    /// For base result types: the plays of `components` that end with a
    /// given answer, with that final answer stripped. Empty otherwise.
    pub refined: BTreeMap<(ComponentKey, InitSel), Nfa>,
}

impl ComponentLang {
    /// The refinement by result value; defined at base result types only.
    pub fn split_components(
        &self,
    ) -> Result<&BTreeMap<(ComponentKey, InitSel), Nfa>, TranslateError> {
        if self.ty.is_base() {
            Ok(&self.refined)
        } else {
            Err(TranslateError::NonBaseSplit(self.ty.clone()))
        }
    }

    /// Every component prefixed with its initial move and summed: the full
    /// language of complete plays.
    pub fn full_language(&self) -> Nfa {
        Nfa::union_all(
            self.components
                .iter()
                .map(|(k, l)| Nfa::sym(&Symbol::plain(&initial_name(k))).concat(l)),
        )
    }
}

/// Verdict of [`decide_equiv`]. The witness is a complete play, initial
/// move included, accepted by exactly one of the two languages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Equivalence {
    Equivalent,
    Inequivalent(Word),
}

// ---------------------------------------------------------------------------
// Public operations

/// Translates a canonical judgment into its component languages.
pub fn translate(
    ctx: &Context,
    c: &CanonicalTerm,
    ty: &Type,
    n: u32,
) -> Result<ComponentLang, TranslateError> {
    check_context_names(ctx)?;
    let t = c.term();
    let got = typecheck(ctx, t).map_err(TranslateError::Type)?;
    if got != *ty {
        return Err(TranslateError::JudgmentMismatch(format!(
            "term has type {}, judgment claims {}",
            got, ty
        )));
    }
    if !classify_fragment(ctx, t, n).contains(&Fragment::IA2plus) {
        return Err(TranslateError::OutsideFragment);
    }
    // Identifier move names come from binder names, so binders are renamed
    // apart from the context, from each other and from the `r` namespace.
    let mut used: BTreeSet<String> = ctx.0.iter().map(|(x, _)| x.clone()).collect();
    let t = freshen(t, &mut used);
    debug_assert!(is_canonical(ctx, &t));
    let components: LangMap = comp(ctx, &t, ty, n)
        .into_iter()
        .map(|(k, l)| (k, l.prune_alphabet()))
        .collect();
    let refined = if ty.is_base() {
        let mut map = BTreeMap::new();
        for (k, l) in &components {
            for j in init_sels(ty, n) {
                map.insert((k.clone(), j), strip_answer(l, &answer(j)));
            }
        }
        map
    } else {
        BTreeMap::new()
    };
    Ok(ComponentLang {
        ctx: ctx.clone(),
        term: c.clone(),
        ty: ty.clone(),
        n,
        components,
        refined,
    })
}

/// Decides equivalence of two judgments over the same context and type by
/// canonicalizing, translating and comparing languages per component. On
/// inequivalence the shortest separating complete play is returned.
pub fn decide_equiv(a: &Judgment, b: &Judgment, n: u32) -> Result<Equivalence, TranslateError> {
    if a.ctx != b.ctx || a.ty != b.ty {
        return Err(TranslateError::JudgmentMismatch(format!(
            "({}) vs ({})",
            a, b
        )));
    }
    check_context_names(&a.ctx)?;
    let ta = normalize_literals(&a.term, n);
    let tb = normalize_literals(&b.term, n);
    for t in [&ta, &tb] {
        let got = typecheck(&a.ctx, t).map_err(TranslateError::Type)?;
        if got != a.ty {
            return Err(TranslateError::JudgmentMismatch(format!(
                "term has type {}, judgment claims {}",
                got, a.ty
            )));
        }
        if !classify_fragment(&a.ctx, t, n).contains(&Fragment::IA2plus) {
            return Err(TranslateError::OutsideFragment);
        }
    }
    let ca = canonicalize(&a.ctx, &ta).map_err(TranslateError::Canon)?;
    let cb = canonicalize(&a.ctx, &tb).map_err(TranslateError::Canon)?;
    let la = translate(&a.ctx, &ca, &a.ty, n)?;
    let lb = translate(&a.ctx, &cb, &a.ty, n)?;
    let mut best: Option<Word> = None;
    for (key, l1) in &la.components {
        let l2 = &lb.components[key];
        if let Some(w) = l1.difference_witness(l2) {
            let mut full = vec![Symbol::plain(&initial_name(key))];
            full.extend(w);
            if best.as_ref().map_or(true, |b| full.len() < b.len()) {
                best = Some(full);
            }
        }
    }
    Ok(match best {
        Some(w) => Equivalence::Inequivalent(w),
        None => Equivalence::Equivalent,
    })
}

/// The state discipline of a storage cell `x` as a language: reads before
/// the first write return 0, later reads repeat the most recent write, and
/// symbols of the ambient alphabet not belonging to `x` interleave freely.
pub fn cell_discipline(x: &str, n: u32, ambient: &BTreeSet<Symbol>) -> Nfa {
    let xdot = format!("{}.", x);
    let free: Vec<Nfa> = ambient
        .iter()
        .filter(|s| !s.mv.starts_with(xdot.as_str()))
        .map(Nfa::sym)
        .collect();
    let rd = |j: u32| {
        Nfa::lit(&[
            Symbol::plain(&format!("{}.read", x)),
            Symbol::plain(&format!("{}.{}", x, j)),
        ])
    };
    let wr = |j: u32| {
        Nfa::lit(&[
            Symbol::plain(&format!("{}.write({})", x, j)),
            Symbol::plain(&format!("{}.ok", x)),
        ])
    };
    let writes = Nfa::union_all((0..=n).map(|j| wr(j).concat(&rd(j).star()))).star();
    let discipline = rd(0).star().concat(&writes);
    Nfa::union_all(free).star().shuffle(&discipline)
}

// ---------------------------------------------------------------------------
// Preparation: context hygiene and binder freshening

fn check_context_names(ctx: &Context) -> Result<(), TranslateError> {
    let mut seen = BTreeSet::new();
    for (x, _) in &ctx.0 {
        if x == "r" || x.contains('.') || !seen.insert(x.clone()) {
            return Err(TranslateError::BadContextName(x.clone()));
        }
    }
    Ok(())
}

fn clashes(name: &str, used: &BTreeSet<String>) -> bool {
    name == "r" || name.contains('.') || used.contains(name)
}

fn freshen_binder(x: &str, body: &Term, used: &mut BTreeSet<String>) -> (String, Term) {
    if clashes(x, used) {
        let x2 = fresh_name();
        used.insert(x2.clone());
        (x2.clone(), substitute(body, x, &Term::Ident(x2)))
    } else {
        used.insert(x.to_string());
        (x.to_string(), body.clone())
    }
}

/// Renames binders so that every identifier in scope anywhere names its own
/// move component. Keeps user binder names when they do not clash.
fn freshen(t: &Term, used: &mut BTreeSet<String>) -> Term {
    match t {
        Term::Unit | Term::IntLit(_) | Term::Ident(_) | Term::Ref | Term::Loc(_) => t.clone(),
        Term::Bin(op, a, b) => Term::bin(*op, freshen(a, used), freshen(b, used)),
        Term::If(g, tt, ff) => Term::ite(freshen(g, used), freshen(tt, used), freshen(ff, used)),
        Term::Deref(m) => Term::Deref(Box::new(freshen(m, used))),
        Term::Assign(m, v) => Term::assign(freshen(m, used), freshen(v, used)),
        Term::MkVar(rd, wr) => Term::MkVar(
            Box::new(freshen(rd, used)),
            Box::new(freshen(wr, used)),
        ),
        Term::App(f, a) => Term::app(freshen(f, used), freshen(a, used)),
        Term::Fix(m) => Term::Fix(Box::new(freshen(m, used))),
        Term::While(g, b) => Term::While(Box::new(freshen(g, used)), Box::new(freshen(b, used))),
        Term::Lambda(x, ty, body) => {
            let (x2, body) = freshen_binder(x, body, used);
            Term::lambda(&x2, ty.clone(), freshen(&body, used))
        }
        Term::New(x, body) => {
            let (x2, body) = freshen_binder(x, body, used);
            Term::New(x2, Box::new(freshen(&body, used)))
        }
        Term::Let(x, ann, bound, body) => {
            let bound = freshen(bound, used);
            let (x2, body) = freshen_binder(x, body, used);
            Term::Let(
                x2,
                ann.clone(),
                Box::new(bound),
                Box::new(freshen(&body, used)),
            )
        }
    }
}

fn normalize_literals(t: &Term, n: u32) -> Term {
    let m = n as i64 + 1;
    match t {
        Term::IntLit(v) => Term::IntLit(v.rem_euclid(m)),
        Term::Unit | Term::Ident(_) | Term::Ref | Term::Loc(_) => t.clone(),
        Term::Bin(op, a, b) => Term::bin(*op, normalize_literals(a, n), normalize_literals(b, n)),
        Term::If(g, tt, ff) => Term::ite(
            normalize_literals(g, n),
            normalize_literals(tt, n),
            normalize_literals(ff, n),
        ),
        Term::Deref(m2) => Term::Deref(Box::new(normalize_literals(m2, n))),
        Term::Assign(a, b) => Term::assign(normalize_literals(a, n), normalize_literals(b, n)),
        Term::MkVar(rd, wr) => Term::MkVar(
            Box::new(normalize_literals(rd, n)),
            Box::new(normalize_literals(wr, n)),
        ),
        Term::App(f, a) => Term::app(normalize_literals(f, n), normalize_literals(a, n)),
        Term::Lambda(x, ty, body) => Term::lambda(x, ty.clone(), normalize_literals(body, n)),
        Term::Fix(m2) => Term::Fix(Box::new(normalize_literals(m2, n))),
        Term::New(x, body) => Term::New(x.clone(), Box::new(normalize_literals(body, n))),
        Term::While(g, b) => Term::While(
            Box::new(normalize_literals(g, n)),
            Box::new(normalize_literals(b, n)),
        ),
        Term::Let(x, ann, bound, body) => Term::Let(
            x.clone(),
            ann.clone(),
            Box::new(normalize_literals(bound, n)),
            Box::new(normalize_literals(body, n)),
        ),
    }
}

// ---------------------------------------------------------------------------
// The clause recursion

type LangMap = BTreeMap<ComponentKey, Nfa>;

fn sym(name: &str) -> Symbol {
    Symbol::plain(name)
}

/// The result answer carrying value `j`.
fn answer(j: InitSel) -> Symbol {
    sym(&format!("r.{}", j))
}

fn any_star<I: IntoIterator<Item = Symbol>>(alpha: I) -> Nfa {
    Nfa::union_all(alpha.into_iter().map(|s| Nfa::sym(&s))).star()
}

/// Keeps the plays ending with `ans` and strips that final answer. Sound
/// because a base result answer occurs exactly once, at the end of a play.
fn strip_answer(l: &Nfa, ans: &Symbol) -> Nfa {
    let mut alpha = l.alphabet.clone();
    alpha.insert(ans.clone());
    let suffix = any_star(alpha).concat(&Nfa::sym(ans));
    let kill: BTreeSet<Symbol> = [ans.clone()].into_iter().collect();
    l.intersect(&suffix).erase(&kill).prune_alphabet()
}

fn ident_name(t: &Term) -> &str {
    match t {
        Term::Ident(x) => x,
        _ => panic!("canonical grammar violation: expected an identifier"),
    }
}

fn lambda_parts(t: &Term) -> (&str, &Term) {
    match t {
        Term::Lambda(x, _, body) => (x, body),
        _ => panic!("canonical grammar violation: expected a lambda literal"),
    }
}

/// The selection `key` makes for identifier `x`; respects shadowing.
fn sel_of(ctx: &Context, key: &[InitSel], x: &str) -> InitSel {
    ctx.0
        .iter()
        .zip(key)
        .rev()
        .find(|((name, _), _)| name == x)
        .map(|(_, sel)| *sel)
        .unwrap_or_else(|| panic!("identifier '{}' not bound by the context", x))
}

fn exp_sel(ctx: &Context, key: &[InitSel], x: &str) -> u32 {
    match sel_of(ctx, key, x) {
        InitSel::Val(j) => j,
        InitSel::Star => panic!("identifier '{}' is not of type exp", x),
    }
}

/// Renames every alphabet symbol whose move name starts with a rule's
/// source prefix, keeping marks. The first matching rule wins.
fn relabel_map(l: &Nfa, rules: &[(&str, &str)]) -> BTreeMap<Symbol, Symbol> {
    let mut map = BTreeMap::new();
    for s in &l.alphabet {
        for (from, to) in rules {
            if let Some(rest) = s.mv.strip_prefix(from) {
                map.insert(
                    s.clone(),
                    Symbol::plain(&format!("{}{}", to, rest)).with_mark(s.mark),
                );
                break;
            }
        }
    }
    map
}

/// Non-initial moves of `ty`'s arena as seen from the context side of a
/// prearena: move path, ownership-flipped label, and whether the move is
/// enabled by the arena's initial move.
fn component_moves(ty: &Type, n: u32) -> BTreeMap<String, (Label, bool)> {
    let a = denote_type(ty, n);
    let inits: BTreeSet<usize> = a.initials().into_iter().collect();
    a.moves
        .iter()
        .filter(|m| !m.enablers.is_empty())
        .map(|m| {
            let by_init = m.enablers.iter().all(|e| inits.contains(e));
            (m.name.clone(), (m.label.flip_owner(), by_init))
        })
        .collect()
}

/// Substitution rules moving a bound identifier's component into the
/// caller's return component: `x.<p>` becomes `z.ret.<p>`. Every P-move is
/// followed by a detour window. The calls enabled by the binding answer
/// carry the pointer-source mark when `mark` is set.
fn call_rules(
    body: &Nfa,
    x: &str,
    z: &str,
    cod: &Type,
    n: u32,
    detour: &Nfa,
    mark: bool,
) -> BTreeMap<Symbol, Nfa> {
    let info = component_moves(cod, n);
    let xdot = format!("{}.", x);
    let mut rules = BTreeMap::new();
    for s in &body.alphabet {
        let Some(path) = s.mv.strip_prefix(xdot.as_str()) else {
            continue;
        };
        let (label, by_init) = *info
            .get(path)
            .unwrap_or_else(|| panic!("move '{}' is not in the component of {}", s.mv, x));
        let target = format!("{}.ret.{}", z, path);
        let lang = if by_init && label == Label::PQ {
            // A call justified by the binding answer: P-question, so a
            // detour may follow; marked in the marked alternative.
            debug_assert!(s.mark == Mark::Plain, "calls are emitted unmarked");
            let t = if mark {
                Symbol::bulleted(&target)
            } else {
                Symbol::plain(&target)
            };
            Nfa::sym(&t).concat(detour)
        } else {
            let t = Symbol::plain(&target).with_mark(s.mark);
            if label.is_o() {
                Nfa::sym(&t)
            } else {
                Nfa::sym(&t).concat(detour)
            }
        };
        rules.insert(s.clone(), lang);
    }
    rules
}

/// The component languages of a canonical judgment, one per initial move.
/// Words do not contain the initial move; they do contain the final answer.
fn comp(ctx: &Context, t: &Term, ty: &Type, n: u32) -> LangMap {
    let keys = all_keys(ctx, n);
    match t {
        Term::Unit => keys
            .into_iter()
            .map(|k| (k, Nfa::sym(&answer(InitSel::Star))))
            .collect(),
        Term::IntLit(j) => {
            let v = j.rem_euclid(n as i64 + 1) as u32;
            keys.into_iter()
                .map(|k| (k, Nfa::sym(&answer(InitSel::Val(v)))))
                .collect()
        }
        Term::Ident(x) => keys
            .into_iter()
            .map(|k| {
                let l = Nfa::sym(&answer(sel_of(ctx, &k, x)));
                (k, l)
            })
            .collect(),
        Term::Bin(op, a, b) => {
            let (x, y) = (ident_name(a), ident_name(b));
            keys.into_iter()
                .map(|k| {
                    let v = op.apply_mod(
                        exp_sel(ctx, &k, x) as i64,
                        exp_sel(ctx, &k, y) as i64,
                        n,
                    ) as u32;
                    (k, Nfa::sym(&answer(InitSel::Val(v))))
                })
                .collect()
        }
        Term::If(g, tt, ff) => {
            let x = ident_name(g);
            let lt = comp(ctx, tt, ty, n);
            let lf = comp(ctx, ff, ty, n);
            keys.into_iter()
                .map(|k| {
                    let arm = if exp_sel(ctx, &k, x) > 0 { &lt } else { &lf };
                    let l = arm[&k].clone();
                    (k, l)
                })
                .collect()
        }
        Term::Assign(xt, yt) => {
            let (x, y) = (ident_name(xt), ident_name(yt));
            keys.into_iter()
                .map(|k| {
                    let j = exp_sel(ctx, &k, y);
                    let l = Nfa::lit(&[
                        sym(&format!("{}.write({})", x, j)),
                        sym(&format!("{}.ok", x)),
                        answer(InitSel::Star),
                    ]);
                    (k, l)
                })
                .collect()
        }
        Term::Deref(xt) => {
            let x = ident_name(xt);
            let l = Nfa::union_all((0..=n).map(|j| {
                Nfa::lit(&[
                    sym(&format!("{}.read", x)),
                    sym(&format!("{}.{}", x, j)),
                    answer(InitSel::Val(j)),
                ])
            }));
            keys.into_iter().map(|k| (k, l.clone())).collect()
        }
        Term::MkVar(rd, wr) => {
            let (u, m1) = lambda_parts(rd);
            let (v, m2) = lambda_parts(wr);
            let c1 = comp(&ctx.extended(u, Type::Com), m1, &Type::Exp, n);
            let c2 = comp(&ctx.extended(v, Type::Exp), m2, &Type::Com, n);
            let ok_map: BTreeMap<Symbol, Symbol> =
                [(answer(InitSel::Star), sym("r.ok"))].into_iter().collect();
            keys.into_iter()
                .map(|k| {
                    let mut ku = k.clone();
                    ku.push(InitSel::Star);
                    let read = Nfa::sym(&sym("r.read")).concat(&c1[&ku]);
                    let writes = Nfa::union_all((0..=n).map(|j| {
                        let mut kv = k.clone();
                        kv.push(InitSel::Val(j));
                        Nfa::sym(&sym(&format!("r.write({})", j)))
                            .concat(&c2[&kv].rename(&ok_map))
                    }));
                    // At most one method call: a later one would have to
                    // follow the binding answer immediately, and spinal
                    // plays admit a single such successor.
                    let body = Nfa::epsilon().union(&read).union(&writes);
                    (k, Nfa::sym(&sym("r.*")).concat(&body))
                })
                .collect()
        }
        Term::Lambda(x, xty, body) => {
            let cod = match ty {
                Type::Arrow(_, c) => c,
                _ => panic!("lambda at non-function type"),
            };
            let cb = comp(&ctx.extended(x, xty.clone()), body, cod, n);
            let xdot = format!("{}.", x);
            keys.into_iter()
                .map(|k| {
                    let arms = Nfa::union_all(init_sels(xty, n).into_iter().map(|i| {
                        let mut kk = k.clone();
                        kk.push(i);
                        let inner = &cb[&kk];
                        let map = relabel_map(inner, &[(xdot.as_str(), "r.arg."), ("r.", "r.ret.")]);
                        Nfa::sym(&sym(&format!("r.arg.{}", i))).concat(&inner.rename(&map))
                    }));
                    let l = Nfa::sym(&sym("r.*")).concat(&Nfa::epsilon().union(&arms));
                    (k, l)
                })
                .collect()
        }
        Term::New(x, body) => {
            let cb = comp(&ctx.extended(x, Type::Var), body, ty, n);
            let xdot = format!("{}.", x);
            keys.into_iter()
                .map(|k| {
                    let mut kk = k.clone();
                    kk.push(InitSel::Star);
                    let inner = &cb[&kk];
                    let cell = cell_discipline(x, n, &inner.alphabet);
                    let constrained = inner.intersect(&cell);
                    let kill: BTreeSet<Symbol> = constrained
                        .alphabet
                        .iter()
                        .filter(|s| s.mv.starts_with(xdot.as_str()))
                        .cloned()
                        .collect();
                    (k, constrained.erase(&kill))
                })
                .collect()
        }
        Term::While(g, body) => {
            let cg = comp(ctx, g, &Type::Exp, n);
            let cb = comp(ctx, body, &Type::Com, n);
            keys.into_iter()
                .map(|k| {
                    let body_tail = strip_answer(&cb[&k], &answer(InitSel::Star));
                    let spin = Nfa::union_all((1..=n).map(|j| {
                        strip_answer(&cg[&k], &answer(InitSel::Val(j))).concat(&body_tail)
                    }))
                    .star();
                    let exit = strip_answer(&cg[&k], &answer(InitSel::Val(0)));
                    // The loop is a command, so the play closes with its
                    // own answer after the guard reports zero.
                    let l = spin.concat(&exit).concat(&Nfa::sym(&answer(InitSel::Star)));
                    (k, l)
                })
                .collect()
        }
        Term::Let(x, ann, bound, body) => {
            if let Term::App(zf, arg) = &**bound {
                let z = ident_name(zf);
                return zapp(ctx, x, z, arg, body, ty, n, keys);
            }
            let bty = ann
                .clone()
                .unwrap_or_else(|| typecheck(ctx, bound).expect("canonical let bound types"));
            let cm = comp(ctx, bound, &bty, n);
            let cb = comp(&ctx.extended(x, bty.clone()), body, ty, n);
            keys.into_iter()
                .map(|k| {
                    let l = Nfa::union_all(init_sels(&bty, n).into_iter().map(|j| {
                        let mut kk = k.clone();
                        kk.push(j);
                        strip_answer(&cm[&k], &answer(j)).concat(&cb[&kk])
                    }));
                    (k, l)
                })
                .collect()
        }
        Term::App(_, _) | Term::Fix(_) | Term::Ref | Term::Loc(_) => {
            panic!("canonical grammar violation: bare {:?}", t)
        }
    }
}

/// The let clauses binding the result of a call `z ARG`. The call prefix
/// and the detour window depend on the argument shape; the continuation
/// depends on whether the bound value is of base type.
#[allow(clippy::too_many_arguments)]
fn zapp(
    ctx: &Context,
    x: &str,
    z: &str,
    arg: &Term,
    body: &Term,
    ty: &Type,
    n: u32,
    keys: Vec<ComponentKey>,
) -> LangMap {
    let (dom, cod) = match ctx.lookup(z) {
        Some(Type::Arrow(d, c)) => ((**d).clone(), (**c).clone()),
        _ => panic!("canonical grammar violation: call head '{}' is not a function", z),
    };
    let cb = comp(&ctx.extended(x, cod.clone()), body, ty, n);

    // Call prefix and detour language per component key. A base argument is
    // passed as a value, so no detours ever interrogate it; function and
    // cell arguments open a window in which the environment may call back.
    let mut prefixes: BTreeMap<ComponentKey, Symbol> = BTreeMap::new();
    let mut detours: BTreeMap<ComponentKey, Nfa> = BTreeMap::new();
    match arg {
        Term::Ident(y) => {
            for k in &keys {
                prefixes.insert(
                    k.clone(),
                    sym(&format!("{}.arg.{}", z, sel_of(ctx, k, y))),
                );
                detours.insert(k.clone(), Nfa::epsilon());
            }
        }
        Term::Lambda(y, b1, m) => {
            let b2 = match &dom {
                Type::Arrow(_, b2) => (**b2).clone(),
                _ => panic!("lambda argument to a non-function domain"),
            };
            let cm = comp(&ctx.extended(y, b1.clone()), m, &b2, n);
            for k in &keys {
                prefixes.insert(k.clone(), sym(&format!("{}.arg.*", z)));
                let rounds = Nfa::union_all(init_sels(b1, n).into_iter().map(|i| {
                    let mut kk = k.clone();
                    kk.push(i);
                    let returns = Nfa::union_all(init_sels(&b2, n).into_iter().map(|j| {
                        strip_answer(&cm[&kk], &answer(j))
                            .concat(&Nfa::sym(&sym(&format!("{}.arg.ret.{}", z, j))))
                    }));
                    Nfa::sym(&sym(&format!("{}.arg.arg.{}", z, i))).concat(&returns)
                }));
                detours.insert(k.clone(), rounds.star());
            }
        }
        Term::MkVar(rd, wr) => {
            let (u, m1) = lambda_parts(rd);
            let (v, m2) = lambda_parts(wr);
            let c1 = comp(&ctx.extended(u, Type::Com), m1, &Type::Exp, n);
            let c2 = comp(&ctx.extended(v, Type::Exp), m2, &Type::Com, n);
            for k in &keys {
                prefixes.insert(k.clone(), sym(&format!("{}.arg.*", z)));
                let mut ku = k.clone();
                ku.push(InitSel::Star);
                let reads = Nfa::sym(&sym(&format!("{}.arg.read", z))).concat(&Nfa::union_all(
                    (0..=n).map(|j| {
                        strip_answer(&c1[&ku], &answer(InitSel::Val(j)))
                            .concat(&Nfa::sym(&sym(&format!("{}.arg.{}", z, j))))
                    }),
                ));
                let writes = Nfa::union_all((0..=n).map(|j| {
                    let mut kv = k.clone();
                    kv.push(InitSel::Val(j));
                    Nfa::sym(&sym(&format!("{}.arg.write({})", z, j)))
                        .concat(&strip_answer(&c2[&kv], &answer(InitSel::Star)))
                        .concat(&Nfa::sym(&sym(&format!("{}.arg.ok", z))))
                }));
                detours.insert(k.clone(), reads.union(&writes).star());
            }
        }
        _ => panic!("canonical grammar violation: bad call argument {:?}", arg),
    }

    keys.into_iter()
        .map(|k| {
            let pre = Nfa::sym(&prefixes[&k]).concat(&detours[&k]);
            let l = if cod.is_base() {
                // The call answer carries the bound value; no new moves for
                // the binding, so no pointer ambiguity and no marks.
                pre.concat(&Nfa::union_all(init_sels(&cod, n).into_iter().map(|kv| {
                    let mut kk = k.clone();
                    kk.push(kv);
                    Nfa::sym(&sym(&format!("{}.ret.{}", z, kv))).concat(&cb[&kk])
                })))
            } else {
                // The call answer creates a value the body keeps using; its
                // moves relocate into z's return component and later calls
                // may point at either of two same-named answers. Emit both
                // the marked and the unmarked encoding.
                let mut kk = k.clone();
                kk.push(InitSel::Star);
                let bl = &cb[&kk];
                let det = &detours[&k];
                let star = format!("{}.ret.*", z);
                let marked = Nfa::sym(&Symbol::circled(&star))
                    .concat(&bl.subst(&call_rules(bl, x, z, &cod, n, det, true)));
                let plain = Nfa::sym(&Symbol::plain(&star))
                    .concat(&bl.subst(&call_rules(bl, x, z, &cod, n, det, false)));
                pre.concat(&marked.union(&plain))
            };
            (k, l)
        })
        .collect()
}
