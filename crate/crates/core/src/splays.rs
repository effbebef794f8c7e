/*!
Stores, moves-with-stores, and plays-with-stores over a prearena.

A store is an ordered, duplicate-free list of (name, value) pairs; the list
order encodes block nesting, so domains are compared as lists. An S-play is
a justified sequence of S-moves whose erasure is a play (Alternation,
Well-Bracketing, Visibility) and whose stores satisfy five conditions:

  Init     the first store is empty
  Just-P   a P-move keeps every name of its justifier (answers: exactly)
  Just-O   an O-move has the same domain as its justifier
  Prev-PQ  a P-question drops names only from the right end, keeps the
           rest as a prefix, adds only globally fresh names, and drops
           only closed names
  Val-O    O cannot change the value written by the last P-occurrence

`derived_checks` asserts three consequences (Prev-PA, Block form, Close)
that must hold on every valid play; they are used as test oracles.

Composition interleaves two plays sharing a middle arena (the dispatch is
forced by the Zipper lemma), recomputes stores along the interaction with
`nice`, and restricts to the outer arenas with pointers re-anchored through
the hidden middle moves.
*/

use crate::games::{prearena, Label, Origin, Prearena};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(pub u32);

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0 + 1)
    }
}

// ---------------------------------------------------------------------------
// Stores

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Store(pub Vec<(Name, i64)>);

impl Store {
    pub fn empty() -> Store {
        Store(Vec::new())
    }

    pub fn from_pairs(pairs: &[(u32, i64)]) -> Store {
        let s = Store(pairs.iter().map(|&(n, v)| (Name(n), v)).collect());
        debug_assert!(s.well_formed());
        s
    }

    pub fn well_formed(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.0.iter().all(|(n, _)| seen.insert(*n))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dom(&self) -> Vec<Name> {
        self.0.iter().map(|(n, _)| *n).collect()
    }

    pub fn names(&self) -> BTreeSet<Name> {
        self.0.iter().map(|(n, _)| *n).collect()
    }

    pub fn get(&self, n: Name) -> Option<i64> {
        self.0.iter().find(|(m, _)| *m == n).map(|(_, v)| *v)
    }

    pub fn contains(&self, n: Name) -> bool {
        self.get(n).is_some()
    }

    /// Σ∖T: the entries of Σ whose names do not occur in T.
    pub fn restrict(&self, t: &Store) -> Store {
        Store(
            self.0
                .iter()
                .filter(|(n, _)| !t.contains(*n))
                .cloned()
                .collect(),
        )
    }

    /// Σ[T]: overwrite values of names present in T, keeping Σ's domain.
    pub fn update(&self, t: &Store) -> Store {
        Store(
            self.0
                .iter()
                .map(|&(n, v)| (n, t.get(n).unwrap_or(v)))
                .collect(),
        )
    }

    /// Σ[s]: overwrite each name with its value in the last store of the
    /// sequence that mentions it.
    pub fn update_from_seq(&self, moves: &[SMove]) -> Store {
        self.update_from_stores(&moves.iter().map(|m| m.store.clone()).collect::<Vec<_>>())
    }

    pub(crate) fn update_from_stores(&self, stores: &[Store]) -> Store {
        Store(
            self.0
                .iter()
                .map(|&(n, v)| {
                    let last = stores.iter().rev().find_map(|s| s.get(n));
                    (n, last.unwrap_or(v))
                })
                .collect(),
        )
    }

    /// Σ+T: concatenation, defined only when the domains are disjoint.
    pub fn append(&self, t: &Store) -> Option<Store> {
        if self.0.iter().any(|(n, _)| t.contains(*n)) {
            return None;
        }
        let mut v = self.0.clone();
        v.extend(t.0.iter().cloned());
        Some(Store(v))
    }

    pub fn dom_subseq_of(&self, t: &Store) -> bool {
        let mut it = t.0.iter().map(|(n, _)| *n);
        self.0.iter().all(|(n, _)| it.any(|m| m == *n))
    }

    pub fn dom_prefix_of(&self, t: &Store) -> bool {
        self.0.len() <= t.0.len()
            && self.0.iter().zip(&t.0).all(|((a, _), (b, _))| a == b)
    }

    pub fn dom_suffix_of(&self, t: &Store) -> bool {
        self.0.len() <= t.0.len()
            && self
                .0
                .iter()
                .rev()
                .zip(t.0.iter().rev())
                .all(|((a, _), (b, _))| a == b)
    }
}

impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (n, v)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}={}", n, v)?;
        }
        write!(f, "}}")
    }
}

/// nice(Σ₀,Σ₁,Σ₂) = Σ₀[Σ₂] ∖ (Σ₁∖Σ₂) + (Σ₂∖Σ₁): update the ambient store,
/// remove the names dropped across the Σ₁→Σ₂ transition, add those
/// introduced. None when the final append is undefined.
pub fn nice(s0: &Store, s1: &Store, s2: &Store) -> Option<Store> {
    s0.update(s2).restrict(&s1.restrict(s2)).append(&s2.restrict(s1))
}

// ---------------------------------------------------------------------------
// S-moves and S-plays

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SMove {
    /// Index into the prearena's move list.
    pub mv: usize,
    pub store: Store,
    /// Index into the play; None exactly for the initial move.
    pub justifier: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SPlay {
    pub pre: Rc<Prearena>,
    pub moves: Vec<SMove>,
}

impl PartialEq for SPlay {
    // Plays compare by their (move, store, justifier) sequences; callers
    // are responsible for comparing plays over matching prearenas.
    fn eq(&self, other: &Self) -> bool {
        self.moves == other.moves
    }
}
impl Eq for SPlay {}

/// Build a play from (move name, 1-based justifier or 0 for initial, store
/// pairs) triples. Panics on unknown move names; intended for fixtures.
pub fn play_from(pre: &Rc<Prearena>, moves: &[(&str, usize, &[(u32, i64)])]) -> SPlay {
    SPlay {
        pre: pre.clone(),
        moves: moves
            .iter()
            .map(|&(name, j, pairs)| SMove {
                mv: pre.lookup(name),
                store: Store::from_pairs(pairs),
                justifier: if j == 0 { None } else { Some(j - 1) },
            })
            .collect(),
    }
}

impl SPlay {
    pub fn new(pre: &Rc<Prearena>) -> SPlay {
        SPlay {
            pre: pre.clone(),
            moves: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn label(&self, i: usize) -> Label {
        self.pre.moves[self.moves[i].mv].label
    }

    pub fn name_of(&self, i: usize) -> &str {
        &self.pre.moves[self.moves[i].mv].name
    }

    /// Store of the final move (ε for the empty play).
    pub fn st(&self) -> Store {
        self.moves.last().map(|m| m.store.clone()).unwrap_or_default()
    }

    /// All names occurring in the play's stores.
    pub fn names(&self) -> BTreeSet<Name> {
        self.moves.iter().flat_map(|m| m.store.names()).collect()
    }

    /// Positions of questions in s[0..end) left unanswered in that prefix.
    fn open_questions(&self, end: usize) -> Vec<usize> {
        let mut stack = Vec::new();
        for i in 0..end {
            if self.label(i).is_question() {
                stack.push(i);
            } else if let Some(j) = self.moves[i].justifier {
                if stack.last() == Some(&j) {
                    stack.pop();
                }
            }
        }
        stack
    }

    /// Indices of the P-view (or O-view) of the prefix s[0..=end], in play
    /// order. The walk steps over own moves and jumps along the opponent's
    /// justifiers.
    fn view_indices(&self, end: usize, p_view: bool) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = Some(end);
        while let Some(i) = cur {
            out.push(i);
            let jumps = self.label(i).is_o() == p_view;
            if jumps {
                match self.moves[i].justifier {
                    None => break,
                    Some(j) => {
                        out.push(j);
                        cur = if j == 0 { None } else { Some(j - 1) };
                    }
                }
            } else {
                cur = if i == 0 { None } else { Some(i - 1) };
            }
        }
        out.reverse();
        out
    }

    /// P-view of the prefix ending at `end`, with justifiers re-anchored to
    /// view positions (None when the justifier fell outside the view, which
    /// cannot happen on valid plays).
    pub fn pview(&self, end: usize) -> SPlay {
        self.view_play(end, true)
    }

    pub fn oview(&self, end: usize) -> SPlay {
        self.view_play(end, false)
    }

    fn view_play(&self, end: usize, p_view: bool) -> SPlay {
        let idx = self.view_indices(end, p_view);
        let slot: BTreeMap<usize, usize> =
            idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        SPlay {
            pre: self.pre.clone(),
            moves: idx
                .iter()
                .map(|&i| SMove {
                    mv: self.moves[i].mv,
                    store: self.moves[i].store.clone(),
                    justifier: self.moves[i]
                        .justifier
                        .and_then(|j| slot.get(&j).copied()),
                })
                .collect(),
        }
    }
}

impl fmt::Display for SPlay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", print_trace(self))
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub condition: &'static str,
    /// 0-based position of the offending move.
    pub position: usize,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violated at move {}: {}",
            self.condition,
            self.position + 1,
            self.detail
        )
    }
}

impl std::error::Error for Violation {}

fn violation(condition: &'static str, position: usize, detail: String) -> Violation {
    Violation {
        condition,
        position,
        detail,
    }
}

/// Checks, in order: justified-sequence structure, Alternation,
/// Well-Bracketing, Visibility on the erasure, then Init, Just-P, Just-O,
/// Prev-PQ, Val-O on the stores. Reports the first violated condition.
pub fn validate_splay(s: &SPlay) -> Result<(), Violation> {
    // Justified sequence over the prearena, one thread.
    for (i, m) in s.moves.iter().enumerate() {
        if m.mv >= s.pre.moves.len() {
            return Err(violation(
                "Justified-Sequence",
                i,
                "move index outside the prearena".into(),
            ));
        }
        if !m.store.well_formed() {
            return Err(violation(
                "Justified-Sequence",
                i,
                "store domain has a duplicate name".into(),
            ));
        }
        match m.justifier {
            None => {
                if !s.pre.is_initial(m.mv) {
                    return Err(violation(
                        "Justified-Sequence",
                        i,
                        format!("non-initial move {} lacks a justifier", s.name_of(i)),
                    ));
                }
                if i != 0 {
                    return Err(violation(
                        "Justified-Sequence",
                        i,
                        "initial move after the start".into(),
                    ));
                }
            }
            Some(j) => {
                if j >= i {
                    return Err(violation(
                        "Justified-Sequence",
                        i,
                        "justifier does not precede the move".into(),
                    ));
                }
                if !s.pre.enables(s.moves[j].mv, m.mv) {
                    return Err(violation(
                        "Justified-Sequence",
                        i,
                        format!(
                            "{} does not enable {}",
                            s.name_of(j),
                            s.name_of(i)
                        ),
                    ));
                }
            }
        }
    }

    // Alternation: O starts and the owner flips at each step.
    for i in 0..s.len() {
        let is_o = s.label(i).is_o();
        let want_o = i % 2 == 0;
        if is_o != want_o {
            return Err(violation(
                "Alternation",
                i,
                format!(
                    "{} is {}, expected {}",
                    s.name_of(i),
                    if is_o { "an O-move" } else { "a P-move" },
                    if want_o { "an O-move" } else { "a P-move" }
                ),
            ));
        }
    }

    // Well-Bracketing: each answer is justified by the pending question.
    let mut stack: Vec<usize> = Vec::new();
    for i in 0..s.len() {
        if s.label(i).is_question() {
            stack.push(i);
        } else {
            let j = s.moves[i].justifier.unwrap_or(usize::MAX);
            match stack.last() {
                Some(&q) if q == j => {
                    stack.pop();
                }
                Some(&q) => {
                    return Err(violation(
                        "Well-Bracketing",
                        i,
                        format!(
                            "answer justified by move {} but move {} is pending",
                            j + 1,
                            q + 1
                        ),
                    ));
                }
                None => {
                    return Err(violation(
                        "Well-Bracketing",
                        i,
                        "answer with no pending question".into(),
                    ));
                }
            }
        }
    }

    // Visibility: the justifier lies in the mover's view of the prefix.
    for i in 1..s.len() {
        let j = s.moves[i].justifier.unwrap();
        let view = s.view_indices(i - 1, !s.label(i).is_o());
        if !view.contains(&j) {
            return Err(violation(
                "Visibility",
                i,
                format!("justifier {} outside the view", j + 1),
            ));
        }
    }

    // Init.
    if let Some(m) = s.moves.first() {
        if !m.store.is_empty() {
            return Err(violation(
                "Init",
                0,
                format!("initial store {} is not empty", m.store),
            ));
        }
    }

    // Just-P.
    for i in 0..s.len() {
        if s.label(i).is_o() {
            continue;
        }
        let j = s.moves[i].justifier.unwrap();
        let sigma = &s.moves[j].store;
        let tau = &s.moves[i].store;
        if !sigma.dom_subseq_of(tau) {
            return Err(violation(
                "Just-P",
                i,
                format!("justifier store {} not a subsequence of {}", sigma, tau),
            ));
        }
        if s.label(i) == Label::PA && !tau.dom_subseq_of(sigma) {
            return Err(violation(
                "Just-P",
                i,
                format!("answer store {} exceeds justifier store {}", tau, sigma),
            ));
        }
    }

    // Just-O.
    for i in 1..s.len() {
        if !s.label(i).is_o() {
            continue;
        }
        let j = s.moves[i].justifier.unwrap();
        let sigma = &s.moves[j].store;
        let tau = &s.moves[i].store;
        if sigma.dom() != tau.dom() {
            return Err(violation(
                "Just-O",
                i,
                format!("store domain {} differs from justifier's {}", tau, sigma),
            ));
        }
    }

    // Prev-PQ.
    for i in 1..s.len() {
        if s.label(i) != Label::PQ {
            continue;
        }
        let sigma = &s.moves[i - 1].store;
        let tau = &s.moves[i].store;
        let dropped = sigma.restrict(tau);
        if !dropped.dom_suffix_of(sigma) {
            return Err(violation(
                "Prev-PQ",
                i,
                format!("dropped names {} are not a suffix of {}", dropped, sigma),
            ));
        }
        let kept = sigma.restrict(&dropped);
        if !kept.dom_prefix_of(tau) {
            return Err(violation(
                "Prev-PQ",
                i,
                format!("kept names {} are not a prefix of {}", kept, tau),
            ));
        }
        // (a) added names are fresh for the whole prefix.
        for n in tau.names().difference(&sigma.names()) {
            if s.moves[..i].iter().any(|m| m.store.contains(*n)) {
                return Err(violation(
                    "Prev-PQ",
                    i,
                    format!("added name {} is not fresh", n),
                ));
            }
        }
        // (b) dropped names are closed: no open question mentions them.
        let open = s.open_questions(i);
        for (n, _) in &dropped.0 {
            if let Some(&q) = open.iter().find(|&&q| s.moves[q].store.contains(*n)) {
                return Err(violation(
                    "Prev-PQ",
                    i,
                    format!("dropped name {} open at question {}", n, q + 1),
                ));
            }
        }
    }

    // Val-O: O preserves the last P-written value of every name it carries.
    for i in 0..s.len() {
        if !s.label(i).is_o() {
            continue;
        }
        for (n, v) in &s.moves[i].store.0 {
            let last = (0..i).rev().find(|&k| s.moves[k].store.contains(*n));
            if let Some(k) = last {
                if !s.label(k).is_o() {
                    let pv = s.moves[k].store.get(*n).unwrap();
                    if pv != *v {
                        return Err(violation(
                            "Val-O",
                            i,
                            format!("{} carries {}={} but P last wrote {}", s.name_of(i), n, v, pv),
                        ));
                    }
                }
            }
        }
    }

    Ok(())
}

/// Consequences of the play conditions, asserted as test oracles on valid
/// plays: a failure signals an implementation bug, not bad input.
pub fn derived_checks(s: &SPlay) -> Result<(), Violation> {
    // Prev-PA: like Prev-PQ at P-answers, but no new names may appear.
    for i in 1..s.len() {
        if s.label(i) != Label::PA {
            continue;
        }
        let sigma = &s.moves[i - 1].store;
        let tau = &s.moves[i].store;
        let dropped = sigma.restrict(tau);
        if !dropped.dom_suffix_of(sigma) {
            return Err(violation(
                "Prev-PA",
                i,
                format!("dropped names {} are not a suffix of {}", dropped, sigma),
            ));
        }
        if !sigma.restrict(&dropped).dom_prefix_of(tau) {
            return Err(violation("Prev-PA", i, "kept names not a prefix".into()));
        }
        if !tau.names().is_subset(&sigma.names()) {
            return Err(violation(
                "Prev-PA",
                i,
                "an answer introduced a fresh name".into(),
            ));
        }
        let open = s.open_questions(i);
        for (n, _) in &dropped.0 {
            if open.iter().any(|&q| s.moves[q].store.contains(*n)) {
                return Err(violation(
                    "Prev-PA",
                    i,
                    format!("dropped name {} still open", n),
                ));
            }
        }
    }

    // Block form: in the final P-view, the moves mentioning a name are
    // contiguous and start at the name's introducing move.
    if !s.is_empty() {
        let view = s.view_indices(s.len() - 1, true);
        let mut all_names = BTreeSet::new();
        for &i in &view {
            all_names.extend(s.moves[i].store.names());
        }
        for n in all_names {
            let slots: Vec<usize> = (0..view.len())
                .filter(|&k| s.moves[view[k]].store.contains(n))
                .collect();
            if let (Some(&first), Some(&last)) = (slots.first(), slots.last()) {
                if slots.len() != last - first + 1 {
                    return Err(violation(
                        "Block form",
                        view[last],
                        format!("name {} occurs non-contiguously in the P-view", n),
                    ));
                }
                let intro = (0..s.len())
                    .find(|&i| s.moves[i].store.contains(n))
                    .unwrap();
                if view[first] != intro {
                    return Err(violation(
                        "Block form",
                        view[first],
                        format!(
                            "first view occurrence of {} is move {}, introduced at {}",
                            n,
                            view[first] + 1,
                            intro + 1
                        ),
                    ));
                }
            }
        }
    }

    // Close: a name dropped across consecutive o p never reappears.
    for i in 1..s.len() {
        if s.label(i).is_o() {
            continue;
        }
        let sigma = &s.moves[i - 1].store;
        let tau = &s.moves[i].store;
        for n in sigma.names().difference(&tau.names()) {
            if let Some(k) = (i + 1..s.len()).find(|&k| s.moves[k].store.contains(*n)) {
                return Err(violation(
                    "Close",
                    k,
                    format!("name {} reappears after being dropped at {}", n, i + 1),
                ));
            }
        }
    }

    Ok(())
}

// ---------------------------------------------------------------------------
// Nominal structure and innocence

/// Rename names in order of first occurrence to a1, a2, ... Idempotent and
/// verdict-preserving, realizing equality up to name permutation.
pub fn nominal_canon(s: &SPlay) -> SPlay {
    let mut map: BTreeMap<Name, Name> = BTreeMap::new();
    let mut moves = Vec::with_capacity(s.len());
    for m in &s.moves {
        let store = Store(
            m.store
                .0
                .iter()
                .map(|&(n, v)| {
                    let next = Name(map.len() as u32);
                    (*map.entry(n).or_insert(next), v)
                })
                .collect(),
        );
        moves.push(SMove {
            mv: m.mv,
            store,
            justifier: m.justifier,
        });
    }
    SPlay {
        pre: s.pre.clone(),
        moves,
    }
}

pub fn nominally_equal(a: &SPlay, b: &SPlay) -> bool {
    nominal_canon(a).moves == nominal_canon(b).moves
}

/// A decorated view in canonical form: arena move, justifier as a view
/// slot, and the store with names numbered by first occurrence in the view.
type CanonView = Vec<(usize, Option<usize>, Vec<(usize, i64)>)>;

fn canon_view(s: &SPlay, end: usize) -> CanonView {
    let idx = s.view_indices(end, true);
    let slot: BTreeMap<usize, usize> = idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut names: BTreeMap<Name, usize> = BTreeMap::new();
    idx.iter()
        .map(|&i| {
            let m = &s.moves[i];
            let store = m
                .store
                .0
                .iter()
                .map(|&(n, v)| {
                    let next = names.len();
                    (*names.entry(n).or_insert(next), v)
                })
                .collect();
            (m.mv, m.justifier.and_then(|j| slot.get(&j).copied()), store)
        })
        .collect()
}

/// Necessary condition for membership in an innocent S-strategy, checked
/// within a single play: two P-moves made after nominally equal decorated
/// P-views must extend them to nominally equal views.
pub fn innocence_coherent(s: &SPlay) -> Result<(), Violation> {
    let p_positions: Vec<usize> =
        (1..s.len()).filter(|&i| !s.label(i).is_o()).collect();
    for (a, &i) in p_positions.iter().enumerate() {
        for &k in &p_positions[a + 1..] {
            if canon_view(s, i - 1) == canon_view(s, k - 1)
                && canon_view(s, i) != canon_view(s, k)
            {
                return Err(violation(
                    "Innocence",
                    k,
                    format!(
                        "moves {} and {} answer equal decorated views differently",
                        i + 1,
                        k + 1
                    ),
                ));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Spinal and complete plays

/// Every question has been answered.
pub fn is_complete(s: &SPlay) -> bool {
    s.open_questions(s.len()).is_empty()
}

/// `spine` is the q0 ⊢ a0 ⊢ q1 ⊢ a1 ⊢ ... chain of prearena moves along the
/// result type. The play is spinal when every occurrence of a spinal
/// question (after the first) immediately follows the preceding spinal
/// answer.
pub fn is_spinal(s: &SPlay, spine: &[usize]) -> bool {
    for qi in (2..spine.len()).step_by(2) {
        let (q, a_prev) = (spine[qi], spine[qi - 1]);
        for pos in 0..s.len() {
            if s.moves[pos].mv == q && (pos == 0 || s.moves[pos - 1].mv != a_prev) {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Composition

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ITag {
    /// A move private to the left play (its outer arena).
    SOnly(usize),
    /// A move private to the right play (its outer arena).
    TOnly(usize),
    /// A middle-arena move shared by both plays.
    Shared(usize, usize),
}

#[derive(Debug, Clone)]
pub struct Interaction {
    pub tags: Vec<ITag>,
    /// Store of each interaction move, as recomputed by the mix.
    pub stores: Vec<Store>,
    /// Justifier of each interaction move, as an interaction index.
    pub justifiers: Vec<Option<usize>>,
    /// The restriction to the outer arenas.
    pub composite: SPlay,
}

impl Interaction {
    /// The mix value: store of the final interaction move.
    pub fn mix(&self) -> Store {
        self.stores.last().cloned().unwrap_or_default()
    }
}

fn origin_of(play: &SPlay, i: usize) -> Origin {
    play.pre.moves[play.moves[i].mv].origin
}

/// Interleave two compatible plays over a shared middle arena. The
/// backward dispatch is forced by the Zipper lemma: a compatible pair ends
/// with a left-outer move, or a right-outer move, or the same shared move.
pub fn interact(s: &SPlay, t: &SPlay) -> Result<Interaction, String> {
    if !s.pre.rhs.structurally_eq(&t.pre.lhs) {
        return Err("middle arenas do not match".into());
    }
    if let Some(n) = s.names().intersection(&t.names()).next() {
        return Err(format!("name clash on {}", n));
    }

    // Backward peel.
    let mut rev: Vec<ITag> = Vec::new();
    let (mut si, mut ti) = (s.len(), t.len());
    loop {
        if si == 0 && ti == 0 {
            break;
        }
        if si > 0 {
            if let Origin::Lhs(_) = origin_of(s, si - 1) {
                si -= 1;
                rev.push(ITag::SOnly(si));
                continue;
            }
        }
        if ti > 0 {
            if let Origin::Rhs(_) = origin_of(t, ti - 1) {
                ti -= 1;
                rev.push(ITag::TOnly(ti));
                continue;
            }
        }
        if si > 0 && ti > 0 {
            let (Origin::Rhs(bs), Origin::Lhs(bt)) =
                (origin_of(s, si - 1), origin_of(t, ti - 1))
            else {
                unreachable!("outer moves were peeled above")
            };
            if bs != bt {
                return Err(format!(
                    "middle restrictions disagree: left move {} is {}, right move {} is {}",
                    si,
                    s.name_of(si - 1),
                    ti,
                    t.name_of(ti - 1)
                ));
            }
            si -= 1;
            ti -= 1;
            rev.push(ITag::Shared(si, ti));
            continue;
        }
        return Err(format!(
            "middle restrictions disagree in length ({} left, {} right unmatched)",
            si, ti
        ));
    }
    rev.reverse();
    let tags = rev;

    // Positions of each play's moves within the interaction.
    let mut s_map = vec![usize::MAX; s.len()];
    let mut t_map = vec![usize::MAX; t.len()];
    for (u, tag) in tags.iter().enumerate() {
        match *tag {
            ITag::SOnly(i) => s_map[i] = u,
            ITag::TOnly(i) => t_map[i] = u,
            ITag::Shared(i, j) => {
                s_map[i] = u;
                t_map[j] = u;
            }
        }
    }

    // Justifiers within the interaction; shared moves must agree.
    let mut justifiers: Vec<Option<usize>> = Vec::with_capacity(tags.len());
    for (u, tag) in tags.iter().enumerate() {
        let j = match *tag {
            ITag::SOnly(i) => s.moves[i].justifier.map(|x| s_map[x]),
            ITag::TOnly(i) => {
                let x = t.moves[i]
                    .justifier
                    .ok_or("right-outer move without justifier")?;
                Some(t_map[x])
            }
            ITag::Shared(i, j) => {
                let js = s.moves[i].justifier.map(|x| s_map[x]);
                let jt = t.moves[j].justifier.map(|x| t_map[x]);
                match (js, jt) {
                    (Some(a), Some(b)) if a == b => Some(a),
                    (Some(a), None) => Some(a), // the right play's initial move
                    (Some(_), Some(_)) => {
                        return Err(format!(
                            "middle restrictions disagree on the pointer of move {}",
                            u + 1
                        ))
                    }
                    (None, _) => {
                        return Err("shared move unjustified in the left play".into())
                    }
                }
            }
        };
        justifiers.push(j);
    }

    // Forward store pass. A generalized P-move (P in its owning play) gets
    // nice(previous interaction store, own predecessor store, own store);
    // an external O-move replays its justifier's interaction store updated
    // along the prefix.
    let mut stores: Vec<Store> = Vec::with_capacity(tags.len());
    for (u, tag) in tags.iter().enumerate() {
        let owner: Option<(&SPlay, usize)> = match *tag {
            ITag::SOnly(i) => (!s.label(i).is_o()).then_some((s, i)),
            ITag::TOnly(i) => (!t.label(i).is_o()).then_some((t, i)),
            ITag::Shared(i, j) => {
                let (ps, pt) = (!s.label(i).is_o(), !t.label(j).is_o());
                if ps == pt {
                    return Err("shared move owned by both sides".into());
                }
                Some(if ps { (s, i) } else { (t, j) })
            }
        };
        let store = match owner {
            Some((w, k)) => {
                if k == 0 {
                    return Err("a play opens with a P-move".into());
                }
                let prev = if u == 0 {
                    Store::empty()
                } else {
                    stores[u - 1].clone()
                };
                nice(&prev, &w.moves[k - 1].store, &w.moves[k].store)
                    .ok_or_else(|| format!("store clash in the mix at move {}", u + 1))?
            }
            None => {
                let ambient = match justifiers[u] {
                    Some(j) => stores[j].clone(),
                    None => Store::empty(),
                };
                ambient.update_from_stores(&stores[..u])
            }
        };
        stores.push(store);
    }

    // Restriction to the outer arenas, with pointers chased through the
    // hidden shared moves.
    let comp_pre = Rc::new(prearena(&s.pre.lhs, &t.pre.rhs));
    let lhs_len = s.pre.lhs.moves.len();
    let mut comp_idx = vec![usize::MAX; tags.len()];
    let mut moves = Vec::new();
    for (u, tag) in tags.iter().enumerate() {
        let mv = match *tag {
            ITag::SOnly(i) => match origin_of(s, i) {
                Origin::Lhs(a) => a,
                Origin::Rhs(_) => unreachable!(),
            },
            ITag::TOnly(i) => match origin_of(t, i) {
                Origin::Rhs(c) => lhs_len + c,
                Origin::Lhs(_) => unreachable!(),
            },
            ITag::Shared(..) => continue,
        };
        debug_assert!(matches!(
            comp_pre.moves[mv].origin,
            Origin::Lhs(_) | Origin::Rhs(_)
        ));
        let mut j = justifiers[u];
        while let Some(x) = j {
            match tags[x] {
                ITag::Shared(..) => j = justifiers[x],
                _ => break,
            }
        }
        comp_idx[u] = moves.len();
        moves.push(SMove {
            mv,
            store: stores[u].clone(),
            justifier: j.map(|x| comp_idx[x]),
        });
    }
    let composite = SPlay {
        pre: comp_pre,
        moves,
    };

    Ok(Interaction {
        tags,
        stores,
        justifiers,
        composite,
    })
}

pub fn compose(s: &SPlay, t: &SPlay) -> Result<SPlay, String> {
    interact(s, t).map(|i| i.composite)
}

// ---------------------------------------------------------------------------
// Triple interactions (internal: used by the associativity checker)

#[derive(Debug, Clone, Copy)]
enum Tag3 {
    A(usize),
    B(usize, usize),
    C(usize, usize),
    D(usize),
}

fn interact3(
    s1: &SPlay,
    s2: &SPlay,
    s3: &SPlay,
) -> Result<(Vec<Store>, SPlay), String> {
    if !s1.pre.rhs.structurally_eq(&s2.pre.lhs) || !s2.pre.rhs.structurally_eq(&s3.pre.lhs) {
        return Err("middle arenas do not match".into());
    }
    let (n1, n2, n3) = (s1.names(), s2.names(), s3.names());
    if !n1.is_disjoint(&n2) || !n2.is_disjoint(&n3) || !n1.is_disjoint(&n3) {
        return Err("name clash across the triple".into());
    }

    // Backward peel; the dispatch order is forced for compatible triples by
    // the pairwise Zipper lemma applied to (s1;s2, s3) and (s1, s2;s3).
    let mut rev = Vec::new();
    let (mut i1, mut i2, mut i3) = (s1.len(), s2.len(), s3.len());
    loop {
        if i1 == 0 && i2 == 0 && i3 == 0 {
            break;
        }
        if i1 > 0 && matches!(origin_of(s1, i1 - 1), Origin::Lhs(_)) {
            i1 -= 1;
            rev.push(Tag3::A(i1));
            continue;
        }
        if i3 > 0 && matches!(origin_of(s3, i3 - 1), Origin::Rhs(_)) {
            i3 -= 1;
            rev.push(Tag3::D(i3));
            continue;
        }
        if i2 > 0 && matches!(origin_of(s2, i2 - 1), Origin::Rhs(c) if i3 > 0 && matches!(origin_of(s3, i3 - 1), Origin::Lhs(c2) if c == c2))
        {
            i2 -= 1;
            i3 -= 1;
            rev.push(Tag3::C(i2, i3));
            continue;
        }
        if i1 > 0 && i2 > 0 {
            if let (Origin::Rhs(b1), Origin::Lhs(b2)) =
                (origin_of(s1, i1 - 1), origin_of(s2, i2 - 1))
            {
                if b1 == b2 {
                    i1 -= 1;
                    i2 -= 1;
                    rev.push(Tag3::B(i1, i2));
                    continue;
                }
            }
        }
        return Err("restrictions disagree in the triple".into());
    }
    rev.reverse();
    let tags = rev;

    let mut m1 = vec![usize::MAX; s1.len()];
    let mut m2 = vec![usize::MAX; s2.len()];
    let mut m3 = vec![usize::MAX; s3.len()];
    for (u, tag) in tags.iter().enumerate() {
        match *tag {
            Tag3::A(i) => m1[i] = u,
            Tag3::B(i, j) => {
                m1[i] = u;
                m2[j] = u;
            }
            Tag3::C(i, j) => {
                m2[i] = u;
                m3[j] = u;
            }
            Tag3::D(i) => m3[i] = u,
        }
    }

    let pick = |a: Option<usize>, b: Option<usize>, u: usize| -> Result<Option<usize>, String> {
        match (a, b) {
            (Some(x), Some(y)) if x == y => Ok(Some(x)),
            (Some(x), None) => Ok(Some(x)),
            (None, Some(y)) => Ok(Some(y)),
            (None, None) => Ok(None),
            _ => Err(format!("pointer disagreement at interaction move {}", u + 1)),
        }
    };
    let mut justifiers = Vec::with_capacity(tags.len());
    for (u, tag) in tags.iter().enumerate() {
        let j = match *tag {
            Tag3::A(i) => s1.moves[i].justifier.map(|x| m1[x]),
            Tag3::B(i, j) => pick(
                s1.moves[i].justifier.map(|x| m1[x]),
                s2.moves[j].justifier.map(|x| m2[x]),
                u,
            )?,
            Tag3::C(i, j) => pick(
                s2.moves[i].justifier.map(|x| m2[x]),
                s3.moves[j].justifier.map(|x| m3[x]),
                u,
            )?,
            Tag3::D(i) => s3.moves[i].justifier.map(|x| m3[x]),
        };
        justifiers.push(j);
    }

    let mut stores: Vec<Store> = Vec::with_capacity(tags.len());
    for (u, tag) in tags.iter().enumerate() {
        // Owner of a generalized P-move: the play in which it is a P-move.
        let owner: Option<(&SPlay, usize)> = match *tag {
            Tag3::A(i) => (!s1.label(i).is_o()).then_some((s1, i)),
            Tag3::B(i, j) => {
                if !s1.label(i).is_o() {
                    Some((s1, i))
                } else if !s2.label(j).is_o() {
                    Some((s2, j))
                } else {
                    return Err("shared move owned by neither side".into());
                }
            }
            Tag3::C(i, j) => {
                if !s2.label(i).is_o() {
                    Some((s2, i))
                } else if !s3.label(j).is_o() {
                    Some((s3, j))
                } else {
                    return Err("shared move owned by neither side".into());
                }
            }
            Tag3::D(i) => (!s3.label(i).is_o()).then_some((s3, i)),
        };
        let store = match owner {
            Some((w, k)) => {
                if k == 0 {
                    return Err("a play opens with a P-move".into());
                }
                let prev = if u == 0 {
                    Store::empty()
                } else {
                    stores[u - 1].clone()
                };
                nice(&prev, &w.moves[k - 1].store, &w.moves[k].store)
                    .ok_or_else(|| format!("store clash in the mix at move {}", u + 1))?
            }
            None => {
                let ambient = match justifiers[u] {
                    Some(j) => stores[j].clone(),
                    None => Store::empty(),
                };
                ambient.update_from_stores(&stores[..u])
            }
        };
        stores.push(store);
    }

    let comp_pre = Rc::new(prearena(&s1.pre.lhs, &s3.pre.rhs));
    let lhs_len = s1.pre.lhs.moves.len();
    let mut comp_idx = vec![usize::MAX; tags.len()];
    let mut moves = Vec::new();
    for (u, tag) in tags.iter().enumerate() {
        let mv = match *tag {
            Tag3::A(i) => match origin_of(s1, i) {
                Origin::Lhs(a) => a,
                Origin::Rhs(_) => unreachable!(),
            },
            Tag3::D(i) => match origin_of(s3, i) {
                Origin::Rhs(d) => lhs_len + d,
                Origin::Lhs(_) => unreachable!(),
            },
            _ => continue,
        };
        let mut j = justifiers[u];
        while let Some(x) = j {
            match tags[x] {
                Tag3::B(..) | Tag3::C(..) => j = justifiers[x],
                _ => break,
            }
        }
        comp_idx[u] = moves.len();
        moves.push(SMove {
            mv,
            store: stores[u].clone(),
            justifier: j.map(|x| comp_idx[x]),
        });
    }

    Ok((
        stores,
        SPlay {
            pre: comp_pre,
            moves,
        },
    ))
}

/// Both associativity identities: the three-way restriction agrees with
/// each pairwise nesting, and the triple mix agrees with the nice-adjusted
/// pairwise mixes.
pub fn associativity_check(s1: &SPlay, s2: &SPlay, s3: &SPlay) -> Result<(), String> {
    let c12 = compose(s1, s2)?;
    let c23 = compose(s2, s3)?;
    let left = compose(&c12, s3)?;
    let right = compose(s1, &c23)?;
    let (stores3, restriction) = interact3(s1, s2, s3)?;
    if left != restriction {
        return Err("(s1;s2);s3 differs from the triple restriction".into());
    }
    if right != restriction {
        return Err("s1;(s2;s3) differs from the triple restriction".into());
    }

    let mix3 = stores3.last().cloned().unwrap_or_default();
    let i12 = interact(s1, s2)?;
    let i23 = interact(s2, s3)?;
    let left_mix = nice(&interact(&c12, s3)?.mix(), &c12.st(), &i12.mix())
        .ok_or("undefined nice in the left mix identity")?;
    let right_mix = nice(&interact(s1, &c23)?.mix(), &c23.st(), &i23.mix())
        .ok_or("undefined nice in the right mix identity")?;
    if left_mix != mix3 {
        return Err(format!(
            "left mix identity fails: {} vs {}",
            left_mix, mix3
        ));
    }
    if right_mix != mix3 {
        return Err(format!(
            "right mix identity fails: {} vs {}",
            right_mix, mix3
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Trace format

/// One move per line: `<idx> <move-path> <j=idx|init> {a1=v1,...}`.
pub fn print_trace(s: &SPlay) -> String {
    let mut out = String::new();
    for (i, m) in s.moves.iter().enumerate() {
        let j = match m.justifier {
            None => "init".to_string(),
            Some(j) => format!("j={}", j + 1),
        };
        out.push_str(&format!(
            "{} {} {} {}\n",
            i + 1,
            s.pre.moves[m.mv].name,
            j,
            m.store
        ));
    }
    out
}

pub fn parse_trace(pre: &Rc<Prearena>, src: &str) -> Result<SPlay, String> {
    let mut moves = Vec::new();
    for (lineno, line) in src.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| format!("line {}: {}", lineno + 1, msg);
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(err(format!(
                "expected '<idx> <move> <j=idx|init> {{store}}', got {} fields",
                parts.len()
            )));
        }
        let idx: usize = parts[0]
            .parse()
            .map_err(|_| err(format!("bad index '{}'", parts[0])))?;
        if idx != moves.len() + 1 {
            return Err(err(format!("index {} out of order", idx)));
        }
        let mv = pre
            .find(parts[1])
            .ok_or_else(|| err(format!("unknown move '{}'", parts[1])))?;
        let justifier = if parts[2] == "init" {
            None
        } else if let Some(n) = parts[2].strip_prefix("j=") {
            let j: usize = n.parse().map_err(|_| err(format!("bad pointer '{}'", parts[2])))?;
            if j == 0 || j > moves.len() {
                return Err(err(format!("pointer {} out of range", j)));
            }
            Some(j - 1)
        } else {
            return Err(err(format!("expected 'j=<idx>' or 'init', got '{}'", parts[2])));
        };
        let body = parts[3]
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(|| err(format!("bad store '{}'", parts[3])))?;
        let mut pairs = Vec::new();
        if !body.is_empty() {
            for item in body.split(',') {
                let (n, v) = item
                    .split_once('=')
                    .ok_or_else(|| err(format!("bad store entry '{}'", item)))?;
                let n = n
                    .strip_prefix('a')
                    .and_then(|x| x.parse::<u32>().ok())
                    .filter(|&x| x >= 1)
                    .ok_or_else(|| err(format!("bad name '{}'", n)))?;
                let v: i64 = v
                    .parse()
                    .map_err(|_| err(format!("bad value '{}'", v)))?;
                pairs.push((Name(n - 1), v));
            }
        }
        let store = Store(pairs);
        if !store.well_formed() {
            return Err(err("duplicate name in store".into()));
        }
        moves.push(SMove {
            mv,
            store,
            justifier,
        });
    }
    Ok(SPlay {
        pre: pre.clone(),
        moves,
    })
}

// ---------------------------------------------------------------------------
// Generators for the theorem-suite corpus

#[derive(Debug, Clone, Copy)]
enum CellOp {
    Read,
    Write(i64),
}

fn random_ops<R: rand::Rng>(rng: &mut R, n: u32, count: usize) -> Vec<CellOp> {
    (0..count)
        .map(|_| {
            if rng.gen_bool(0.5) {
                CellOp::Read
            } else {
                CellOp::Write(rng.gen_range(0..=n as i64))
            }
        })
        .collect()
}

/// A random play of the one-cell allocator over `f: var -> exp |- _ : exp`:
/// the second move introduces a fresh name at value 0, reads answer the
/// current value, writes update it, and an optional closing answer pair
/// drops the name. Plays may stop after any O-P exchange.
pub fn random_cell_play<R: rand::Rng>(rng: &mut R, n: u32, max_ops: usize) -> SPlay {
    let ctx = crate::syntax::Context(vec![(
        "f".to_string(),
        crate::syntax::Type::arrow(crate::syntax::Type::Var, crate::syntax::Type::Exp),
    )]);
    let pre = Rc::new(crate::games::prearena_of_judgment(
        &ctx,
        &crate::syntax::Type::Exp,
        n,
    ));
    let alpha = Name(0);
    let mut moves = vec![
        SMove {
            mv: pre.lookup("@(*)"),
            store: Store::empty(),
            justifier: None,
        },
        SMove {
            mv: pre.lookup("f.arg.*"),
            store: Store(vec![(alpha, 0)]),
            justifier: Some(0),
        },
    ];
    let call = 1;
    let mut cur = 0i64;
    let count = rng.gen_range(0..=max_ops);
    for op in random_ops(rng, n, count) {
        match op {
            CellOp::Read => {
                moves.push(SMove {
                    mv: pre.lookup("f.arg.read"),
                    store: Store(vec![(alpha, cur)]),
                    justifier: Some(call),
                });
                moves.push(SMove {
                    mv: pre.lookup(&format!("f.arg.{}", cur)),
                    store: Store(vec![(alpha, cur)]),
                    justifier: Some(moves.len() - 1),
                });
            }
            CellOp::Write(v) => {
                moves.push(SMove {
                    mv: pre.lookup(&format!("f.arg.write({})", v)),
                    store: Store(vec![(alpha, cur)]),
                    justifier: Some(call),
                });
                cur = v;
                moves.push(SMove {
                    mv: pre.lookup("f.arg.ok"),
                    store: Store(vec![(alpha, cur)]),
                    justifier: Some(moves.len() - 1),
                });
            }
        }
    }
    if rng.gen_bool(0.7) {
        // Close the block: f returns some value and the play answers with
        // it, dropping the cell's name.
        let ret = rng.gen_range(0..=n as i64);
        moves.push(SMove {
            mv: pre.lookup(&format!("f.ret.{}", ret)),
            store: Store(vec![(alpha, cur)]),
            justifier: Some(call),
        });
        moves.push(SMove {
            mv: pre.lookup(&format!("r.{}", ret)),
            store: Store::empty(),
            justifier: Some(0),
        });
    }
    SPlay { pre, moves }
}

/// A compatible pair: a store-free behavior play of a function of type
/// `var -> exp` (read/write traffic with the environment answering per the
/// cell discipline) and the matching cell-allocating client play. Returns
/// the pair and the value their composite must answer. Patterned on the
/// playcomp example: the client runs one or two blocks, with a fresh or a
/// shared cell, and answers the sum of the block results.
pub fn random_matched_pair<R: rand::Rng>(rng: &mut R, n: u32) -> (SPlay, SPlay, i64) {
    use crate::syntax::{Context, Type};
    let arrow_ty = Type::arrow(Type::Var, Type::Exp);
    let s_pre = Rc::new(prearena(
        &Rc::new(crate::games::denote_type(&Type::Com, n)),
        &Rc::new(crate::games::denote_type(&arrow_ty, n)),
    ));
    let ctx = Context(vec![("f".to_string(), arrow_ty)]);
    let t_pre = Rc::new(crate::games::prearena_of_judgment(&ctx, &Type::Exp, n));

    let blocks = rng.gen_range(1..=2usize);
    let shared = blocks == 2 && rng.gen_bool(0.5);
    // Keep both plays at 12 moves or fewer.
    let mut ops_budget = 5 - blocks;

    let mut s = vec![
        SMove {
            mv: s_pre.lookup("@(*)"),
            store: Store::empty(),
            justifier: None,
        },
        SMove {
            mv: s_pre.lookup("r.*"),
            store: Store::empty(),
            justifier: Some(0),
        },
    ];
    let mut t = vec![SMove {
        mv: t_pre.lookup("@(*)"),
        store: Store::empty(),
        justifier: None,
    }];

    let mut total = 0i64;
    let mut cur = 0i64;
    for b in 0..blocks {
        let name = if shared { Name(0) } else { Name(b as u32) };
        if !shared || b == 0 {
            cur = 0;
        }
        let s_call = s.len();
        s.push(SMove {
            mv: s_pre.lookup("r.arg.*"),
            store: Store::empty(),
            justifier: Some(1),
        });
        let t_call = t.len();
        t.push(SMove {
            mv: t_pre.lookup("f.arg.*"),
            store: Store(vec![(name, cur)]),
            justifier: Some(0),
        });
        let ops_here = rng.gen_range(0..=ops_budget);
        ops_budget -= ops_here;
        for op in random_ops(rng, n, ops_here) {
            match op {
                CellOp::Read => {
                    s.push(SMove {
                        mv: s_pre.lookup("r.arg.read"),
                        store: Store::empty(),
                        justifier: Some(s_call),
                    });
                    s.push(SMove {
                        mv: s_pre.lookup(&format!("r.arg.{}", cur)),
                        store: Store::empty(),
                        justifier: Some(s.len() - 1),
                    });
                    t.push(SMove {
                        mv: t_pre.lookup("f.arg.read"),
                        store: Store(vec![(name, cur)]),
                        justifier: Some(t_call),
                    });
                    t.push(SMove {
                        mv: t_pre.lookup(&format!("f.arg.{}", cur)),
                        store: Store(vec![(name, cur)]),
                        justifier: Some(t.len() - 1),
                    });
                }
                CellOp::Write(v) => {
                    s.push(SMove {
                        mv: s_pre.lookup(&format!("r.arg.write({})", v)),
                        store: Store::empty(),
                        justifier: Some(s_call),
                    });
                    s.push(SMove {
                        mv: s_pre.lookup("r.arg.ok"),
                        store: Store::empty(),
                        justifier: Some(s.len() - 1),
                    });
                    t.push(SMove {
                        mv: t_pre.lookup(&format!("f.arg.write({})", v)),
                        store: Store(vec![(name, cur)]),
                        justifier: Some(t_call),
                    });
                    cur = v;
                    t.push(SMove {
                        mv: t_pre.lookup("f.arg.ok"),
                        store: Store(vec![(name, cur)]),
                        justifier: Some(t.len() - 1),
                    });
                }
            }
        }
        // The function returns the current cell value.
        total = (total + cur).rem_euclid(n as i64 + 1);
        s.push(SMove {
            mv: s_pre.lookup(&format!("r.ret.{}", cur)),
            store: Store::empty(),
            justifier: Some(s_call),
        });
        t.push(SMove {
            mv: t_pre.lookup(&format!("f.ret.{}", cur)),
            store: Store(vec![(name, cur)]),
            justifier: Some(t_call),
        });
    }
    t.push(SMove {
        mv: t_pre.lookup(&format!("r.{}", total)),
        store: Store::empty(),
        justifier: Some(0),
    });

    (
        SPlay {
            pre: s_pre,
            moves: s,
        },
        SPlay {
            pre: t_pre,
            moves: t,
        },
        total,
    )
}
