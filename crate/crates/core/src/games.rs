/*!
Arenas and prearenas of moves.

An arena interprets a type: `com` is the one-move arena, `exp` has one
initial move per integer in {0..N}, and `var` is built so that reads and
writes share a single acknowledgement move:

```text
⟦var⟧ = (1 ⇒ Z) ⊗ (Z ⇒ 1)
```

Initial arena moves are P-answers. The arrow `A ⇒ B` adds a fresh initial
move (the function value); A's initial moves become O-questions enabled by
it, A's other moves swap ownership, and B hangs unchanged under A's
initials, every initial of A enabling every initial of B.

A prearena interprets a judgment `x1:t1, ..., xn:tn |- M : t`: the left
side is the tensor of the context arenas, whose initial tuples become the
initial O-questions, with the remaining left moves ownership-swapped; the
right side (the result arena) is unchanged and hangs under the initials.

Move identity is a path string: context moves are `x.<path>`, result moves
`r.<path>`, with `arg`/`ret` segments at each arrow and payloads `*`, `j`,
`read`, `write(j)`, `ok`. Initial tuples print as `@(p1,...,pn)`.
*/

use crate::syntax::{Context, Type};
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    OQ,
    OA,
    PQ,
    PA,
}

impl Label {
    pub fn is_o(self) -> bool {
        matches!(self, Label::OQ | Label::OA)
    }

    pub fn is_question(self) -> bool {
        matches!(self, Label::OQ | Label::PQ)
    }

    /// Swap ownership, keep question/answer status.
    pub fn flip_owner(self) -> Label {
        match self {
            Label::OQ => Label::PQ,
            Label::OA => Label::PA,
            Label::PQ => Label::OQ,
            Label::PA => Label::OA,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::OQ => "OQ",
            Label::OA => "OA",
            Label::PQ => "PQ",
            Label::PA => "PA",
        };
        write!(f, "{}", s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AMove {
    pub name: String,
    pub label: Label,
    /// Indices of enabling moves; empty exactly for initial moves.
    pub enablers: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arena {
    pub moves: Vec<AMove>,
}

impl Arena {
    pub fn initials(&self) -> Vec<usize> {
        (0..self.moves.len())
            .filter(|&i| self.moves[i].enablers.is_empty())
            .collect()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.moves.iter().position(|m| m.name == name)
    }

    /// Equality up to naming: same indexing, labels, and enabling graph.
    pub fn structurally_eq(&self, other: &Arena) -> bool {
        self.moves.len() == other.moves.len()
            && self
                .moves
                .iter()
                .zip(&other.moves)
                .all(|(a, b)| a.label == b.label && a.enablers == b.enablers)
    }
}

/// Interpretation of a type as an arena, with integers drawn from {0..n}.
pub fn denote_type(ty: &Type, n: u32) -> Arena {
    match ty {
        Type::Com => Arena {
            moves: vec![AMove {
                name: "*".into(),
                label: Label::PA,
                enablers: BTreeSet::new(),
            }],
        },
        Type::Exp => Arena {
            moves: (0..=n)
                .map(|j| AMove {
                    name: j.to_string(),
                    label: Label::PA,
                    enablers: BTreeSet::new(),
                })
                .collect(),
        },
        Type::Var => {
            // (1 ⇒ Z) ⊗ (Z ⇒ 1) flattened: one initial, one read question
            // with N+1 answers, N+1 write questions sharing one ok answer.
            let mut moves = vec![AMove {
                name: "*".into(),
                label: Label::PA,
                enablers: BTreeSet::new(),
            }];
            let init: BTreeSet<usize> = [0].into_iter().collect();
            moves.push(AMove {
                name: "read".into(),
                label: Label::OQ,
                enablers: init.clone(),
            });
            let read_idx = 1;
            for j in 0..=n {
                moves.push(AMove {
                    name: j.to_string(),
                    label: Label::PA,
                    enablers: [read_idx].into_iter().collect(),
                });
            }
            let mut writes = BTreeSet::new();
            for j in 0..=n {
                writes.insert(moves.len());
                moves.push(AMove {
                    name: format!("write({})", j),
                    label: Label::OQ,
                    enablers: init.clone(),
                });
            }
            moves.push(AMove {
                name: "ok".into(),
                label: Label::PA,
                enablers: writes,
            });
            Arena { moves }
        }
        Type::Arrow(a, b) => arrow(&denote_type(a, n), &denote_type(b, n)),
    }
}

/// `A ⇒ B`.
pub fn arrow(a: &Arena, b: &Arena) -> Arena {
    let mut moves = vec![AMove {
        name: "*".into(),
        label: Label::PA,
        enablers: BTreeSet::new(),
    }];
    let a_off = moves.len();
    for m in &a.moves {
        let initial = m.enablers.is_empty();
        moves.push(AMove {
            name: format!("arg.{}", m.name),
            label: if initial { Label::OQ } else { m.label.flip_owner() },
            enablers: if initial {
                [0].into_iter().collect()
            } else {
                m.enablers.iter().map(|e| e + a_off).collect()
            },
        });
    }
    let b_off = moves.len();
    let a_inits: BTreeSet<usize> = a.initials().iter().map(|i| i + a_off).collect();
    for m in &b.moves {
        let initial = m.enablers.is_empty();
        moves.push(AMove {
            name: format!("ret.{}", m.name),
            label: m.label,
            enablers: if initial {
                a_inits.clone()
            } else {
                m.enablers.iter().map(|e| e + b_off).collect()
            },
        });
    }
    Arena { moves }
}

/// `A ⊗ B`: initial moves are pairs, everything else is kept.
pub fn tensor(a: &Arena, b: &Arena) -> Arena {
    tensor_named(&[("1".to_string(), a.clone()), ("2".to_string(), b.clone())])
}

/// n-ary tensor with per-component name prefixes. Initial moves are tuples
/// `(p1,...,pn)` over component initials (a single tuple `()` when there are
/// no components); a non-initial move of component `x` is named `x.<path>`
/// and enabled through every tuple containing its original enabler.
pub fn tensor_named(parts: &[(String, Arena)]) -> Arena {
    // Cartesian product of component initials.
    let mut tuples: Vec<Vec<usize>> = vec![Vec::new()];
    for (_, arena) in parts {
        let mut next = Vec::new();
        for t in &tuples {
            for i in arena.initials() {
                let mut t2 = t.clone();
                t2.push(i);
                next.push(t2);
            }
        }
        tuples = next;
    }
    let mut moves = Vec::new();
    for t in &tuples {
        let name = format!(
            "({})",
            t.iter()
                .enumerate()
                .map(|(k, &i)| parts[k].1.moves[i].name.clone())
                .collect::<Vec<_>>()
                .join(",")
        );
        moves.push(AMove {
            name,
            label: Label::PA,
            enablers: BTreeSet::new(),
        });
    }
    // Per-component offsets for non-initial moves; component move index ->
    // tensor index.
    let mut index_maps: Vec<BTreeMap<usize, usize>> = Vec::new();
    for (prefix, arena) in parts {
        let mut map = BTreeMap::new();
        for (i, m) in arena.moves.iter().enumerate() {
            if m.enablers.is_empty() {
                continue;
            }
            map.insert(i, moves.len());
            moves.push(AMove {
                name: format!("{}.{}", prefix, m.name),
                label: m.label,
                enablers: BTreeSet::new(), // filled below
            });
        }
        index_maps.push(map);
    }
    for (k, (_, arena)) in parts.iter().enumerate() {
        for (i, m) in arena.moves.iter().enumerate() {
            if m.enablers.is_empty() {
                continue;
            }
            let me = index_maps[k][&i];
            let mut en = BTreeSet::new();
            for &e in &m.enablers {
                if arena.moves[e].enablers.is_empty() {
                    // Enabled by a component initial: route through every
                    // tuple whose k-th slot is that initial.
                    for (ti, t) in tuples.iter().enumerate() {
                        if t[k] == e {
                            en.insert(ti);
                        }
                    }
                } else {
                    en.insert(index_maps[k][&e]);
                }
            }
            moves[me].enablers = en;
        }
    }
    Arena { moves }
}

// ---------------------------------------------------------------------------
// Prearenas

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Index into the left (context) arena.
    Lhs(usize),
    /// Index into the right (result) arena.
    Rhs(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PMove {
    pub name: String,
    pub label: Label,
    pub enablers: BTreeSet<usize>,
    pub origin: Origin,
}

#[derive(Debug, Clone)]
pub struct Prearena {
    pub lhs: Rc<Arena>,
    pub rhs: Rc<Arena>,
    pub moves: Vec<PMove>,
    name_index: BTreeMap<String, usize>,
}

impl Prearena {
    pub fn initials(&self) -> Vec<usize> {
        (0..self.moves.len())
            .filter(|&i| self.moves[i].enablers.is_empty())
            .collect()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.name_index.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> usize {
        self.find(name)
            .unwrap_or_else(|| panic!("no move named '{}'", name))
    }

    pub fn enables(&self, from: usize, to: usize) -> bool {
        self.moves[to].enablers.contains(&from)
    }

    pub fn is_initial(&self, m: usize) -> bool {
        self.moves[m].enablers.is_empty()
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph prearena {\n  rankdir=TB;\n");
        for (i, m) in self.moves.iter().enumerate() {
            let shape = if m.label.is_question() { "ellipse" } else { "box" };
            let color = if m.label.is_o() { "lightblue" } else { "lightgray" };
            s.push_str(&format!(
                "  n{} [label=\"{}\\n{}\", shape={}, style=filled, fillcolor={}];\n",
                i, m.name, m.label, shape, color
            ));
        }
        for (i, m) in self.moves.iter().enumerate() {
            for &e in &m.enablers {
                s.push_str(&format!("  n{} -> n{};\n", e, i));
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Prearena `A → B`: A's initials become the initial O-questions (renamed
/// `@(...)`), the rest of A swaps ownership, B hangs underneath unchanged
/// with its moves prefixed `r.`.
pub fn prearena(a: &Rc<Arena>, b: &Rc<Arena>) -> Prearena {
    let mut moves = Vec::new();
    let a_inits = a.initials();
    for (i, m) in a.moves.iter().enumerate() {
        let initial = m.enablers.is_empty();
        let name = if initial {
            if m.name.starts_with('(') {
                format!("@{}", m.name)
            } else {
                format!("@({})", m.name)
            }
        } else {
            m.name.clone()
        };
        moves.push(PMove {
            name,
            label: if initial { Label::OQ } else { m.label.flip_owner() },
            enablers: m.enablers.clone(),
            origin: Origin::Lhs(i),
        });
    }
    let b_off = moves.len();
    let init_set: BTreeSet<usize> = a_inits.iter().copied().collect();
    for (i, m) in b.moves.iter().enumerate() {
        let initial = m.enablers.is_empty();
        moves.push(PMove {
            name: format!("r.{}", m.name),
            label: m.label,
            enablers: if initial {
                init_set.clone()
            } else {
                m.enablers.iter().map(|e| e + b_off).collect()
            },
            origin: Origin::Rhs(i),
        });
    }
    let name_index = moves
        .iter()
        .enumerate()
        .map(|(i, m)| (m.name.clone(), i))
        .collect();
    Prearena {
        lhs: a.clone(),
        rhs: b.clone(),
        moves,
        name_index,
    }
}

/// The context arena of a judgment: the named tensor of the context entries'
/// arenas.
pub fn ctx_arena(ctx: &Context, n: u32) -> Arena {
    let parts: Vec<(String, Arena)> = ctx
        .0
        .iter()
        .map(|(name, ty)| (name.clone(), denote_type(ty, n)))
        .collect();
    tensor_named(&parts)
}

/// Prearena of `Γ |- _ : θ` with integers in {0..n}.
pub fn prearena_of_judgment(ctx: &Context, ty: &Type, n: u32) -> Prearena {
    let lhs = Rc::new(ctx_arena(ctx, n));
    let rhs = Rc::new(denote_type(ty, n));
    prearena(&lhs, &rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_term;

    fn labels(a: &Arena) -> Vec<(String, Label, Vec<usize>)> {
        a.moves
            .iter()
            .map(|m| {
                (
                    m.name.clone(),
                    m.label,
                    m.enablers.iter().copied().collect(),
                )
            })
            .collect()
    }

    #[test]
    fn base_arenas() {
        let com = denote_type(&Type::Com, 2);
        assert_eq!(labels(&com), vec![("*".into(), Label::PA, vec![])]);

        let exp = denote_type(&Type::Exp, 2);
        assert_eq!(
            labels(&exp),
            vec![
                ("0".into(), Label::PA, vec![]),
                ("1".into(), Label::PA, vec![]),
                ("2".into(), Label::PA, vec![]),
            ]
        );
    }

    #[test]
    fn var_arena_has_shared_ok() {
        // At n=1: initial, read, two read answers, two writes, one shared ok.
        let var = denote_type(&Type::Var, 1);
        assert_eq!(
            labels(&var),
            vec![
                ("*".into(), Label::PA, vec![]),
                ("read".into(), Label::OQ, vec![0]),
                ("0".into(), Label::PA, vec![1]),
                ("1".into(), Label::PA, vec![1]),
                ("write(0)".into(), Label::OQ, vec![0]),
                ("write(1)".into(), Label::OQ, vec![0]),
                ("ok".into(), Label::PA, vec![4, 5]),
            ]
        );
        assert_eq!(var.moves.len(), 7);
    }

    #[test]
    fn arrow_arena_shape() {
        // com -> exp at n=1: *, arg.*, ret.0, ret.1.
        let a = denote_type(&Type::arrow(Type::Com, Type::Exp), 1);
        assert_eq!(
            labels(&a),
            vec![
                ("*".into(), Label::PA, vec![]),
                ("arg.*".into(), Label::OQ, vec![0]),
                ("ret.0".into(), Label::PA, vec![1]),
                ("ret.1".into(), Label::PA, vec![1]),
            ]
        );
        // Ownership swap on the argument side: var -> exp.
        let a = denote_type(&Type::arrow(Type::Var, Type::Exp), 1);
        let read = a.find("arg.read").unwrap();
        assert_eq!(a.moves[read].label, Label::PQ);
        let r0 = a.find("arg.0").unwrap();
        assert_eq!(a.moves[r0].label, Label::OA);
        let ok = a.find("arg.ok").unwrap();
        assert_eq!(a.moves[ok].label, Label::OA);
        // Every initial of the argument enables every initial of the result.
        let argstar = a.find("arg.*").unwrap();
        let ret1 = a.find("ret.1").unwrap();
        assert!(a.moves[ret1].enablers.contains(&argstar));
    }

    #[test]
    fn tensor_pairs_initials() {
        let t = tensor(&denote_type(&Type::Com, 1), &denote_type(&Type::Com, 1));
        assert_eq!(t.initials().len(), 1);
        assert_eq!(t.moves[0].name, "(*,*)");

        let t = tensor(&denote_type(&Type::Com, 1), &denote_type(&Type::Exp, 1));
        assert_eq!(t.initials().len(), 2);

        // Non-initials of each side survive with prefixes and tuple enablers.
        let t = tensor(&denote_type(&Type::Var, 1), &denote_type(&Type::Exp, 1));
        assert_eq!(t.initials().len(), 2); // (*,0), (*,1)
        let read = t.find("1.read").unwrap();
        assert_eq!(t.moves[read].enablers.len(), 2);
    }

    #[test]
    fn judgment_prearena_empty_context() {
        let j = parse_term("|- skip : com").unwrap();
        let p = prearena_of_judgment(&j.ctx, &j.ty, 2);
        assert_eq!(p.moves.len(), 2);
        assert_eq!(p.moves[0].name, "@()");
        assert_eq!(p.moves[0].label, Label::OQ);
        assert_eq!(p.moves[1].name, "r.*");
        assert_eq!(p.moves[1].label, Label::PA);
        assert!(p.enables(0, 1));
    }

    #[test]
    fn judgment_prearena_polarities() {
        // x:var, y:exp |- _ : exp at n=1.
        let j = parse_term("x:var, y:exp |- !x + y : exp").unwrap();
        let p = prearena_of_judgment(&j.ctx, &j.ty, 1);
        // Initial tuples: (*,0), (*,1).
        let inits = p.initials();
        assert_eq!(inits.len(), 2);
        assert_eq!(p.moves[inits[0]].name, "@(*,0)");
        assert_eq!(p.moves[inits[0]].label, Label::OQ);
        // Context read is now a P-question, its answers O-answers.
        let read = p.lookup("x.read");
        assert_eq!(p.moves[read].label, Label::PQ);
        assert_eq!(p.moves[p.lookup("x.0")].label, Label::OA);
        assert_eq!(p.moves[p.lookup("x.ok")].label, Label::OA);
        assert_eq!(p.moves[p.lookup("x.write(1)")].label, Label::PQ);
        // Result answers are P-answers enabled by every initial.
        let r0 = p.lookup("r.0");
        assert_eq!(p.moves[r0].label, Label::PA);
        for i in inits {
            assert!(p.enables(i, r0));
        }
    }

    #[test]
    fn function_judgment_polarities() {
        // Under f: var->exp |- _ : exp the environment owns f's value thread.
        let j = parse_term("f:var->exp |- f mkvar(fn u:com => 0, fn v:exp => skip) : exp")
            .unwrap();
        let p = prearena_of_judgment(&j.ctx, &j.ty, 2);
        // P calls f by playing its argument initial.
        assert_eq!(p.moves[p.lookup("f.arg.*")].label, Label::PQ);
        // Inside the argument thread the environment asks read/write.
        assert_eq!(p.moves[p.lookup("f.arg.read")].label, Label::OQ);
        assert_eq!(p.moves[p.lookup("f.arg.0")].label, Label::PA);
        assert_eq!(p.moves[p.lookup("f.arg.ok")].label, Label::PA);
        // f's return is an O-answer to the call.
        let ret = p.lookup("f.ret.1");
        assert_eq!(p.moves[ret].label, Label::OA);
        assert!(p.enables(p.lookup("f.arg.*"), ret));
        // Result answers stay with P.
        assert_eq!(p.moves[p.lookup("r.1")].label, Label::PA);
    }

    #[test]
    fn single_entry_context_is_structurally_the_denotation() {
        // Composition matches a judgment's left arena against a result
        // arena; they must agree index-by-index.
        for ty in [
            Type::Com,
            Type::Exp,
            Type::Var,
            Type::arrow(Type::Var, Type::Exp),
            Type::arrow(Type::Com, Type::arrow(Type::Com, Type::Com)),
        ] {
            let ctx = Context(vec![("f".into(), ty.clone())]);
            let left = ctx_arena(&ctx, 2);
            let denoted = denote_type(&ty, 2);
            assert!(
                left.structurally_eq(&denoted),
                "mismatch for {}",
                ty
            );
        }
    }

    #[test]
    fn enabling_is_acyclic_and_initials_are_oq() {
        let j = parse_term("f:(com->com)->com, x:var |- f (fn c:com => x := 1) : com").unwrap();
        let p = prearena_of_judgment(&j.ctx, &j.ty, 2);
        for i in p.initials() {
            assert_eq!(p.moves[i].label, Label::OQ);
        }
        // Enablers always point to strictly earlier moves, so every
        // justification chain reaches an initial move.
        for (m, mv) in p.moves.iter().enumerate() {
            for &e in &mv.enablers {
                assert!(e < m, "enabler {} of {} not earlier", e, m);
            }
        }
    }

    #[test]
    fn dot_output_mentions_every_move() {
        let j = parse_term("|- new x in !x : exp").unwrap();
        let p = prearena_of_judgment(&j.ctx, &j.ty, 1);
        let dot = p.to_dot();
        for m in &p.moves {
            assert!(dot.contains(&m.name));
        }
    }
}
