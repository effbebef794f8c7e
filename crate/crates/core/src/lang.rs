/*!
Finite automata over move symbols.

Languages of complete plays are represented as NFAs with first-class
epsilon transitions (Thompson style), over symbols that pair a move name
with an optional pointer mark (a target mark on an answer, a source mark on
a question). Alphabets are open: each automaton records the symbols it
mentions, unions propagate through the combinators, and complement is taken
relative to an explicitly supplied alphabet.

Besides the regular operations (literal, union, concatenation, star,
intersection, complement, language equivalence with a shortest separating
word), three less common combinators carry the translation:

* [`shuffle`](Nfa::shuffle): arbitrary interleavings of two languages,
  as an asynchronous product;
* [`erase`](Nfa::erase): homomorphic deletion of a symbol set;
* [`subst`](Nfa::subst): substitution of a whole language for a symbol,
  by inlining a copy of the replacement automaton along each edge.
*/

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mark {
    Plain,
    /// Target of a represented pointer (printed `∘`), sits on an answer.
    Circle,
    /// Source of a represented pointer (printed `•`), sits on a question.
    Bullet,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub mv: Rc<str>,
    pub mark: Mark,
}

impl Symbol {
    pub fn plain(mv: &str) -> Symbol {
        Symbol {
            mv: Rc::from(mv),
            mark: Mark::Plain,
        }
    }

    pub fn circled(mv: &str) -> Symbol {
        Symbol {
            mv: Rc::from(mv),
            mark: Mark::Circle,
        }
    }

    pub fn bulleted(mv: &str) -> Symbol {
        Symbol {
            mv: Rc::from(mv),
            mark: Mark::Bullet,
        }
    }

    pub fn with_mark(&self, mark: Mark) -> Symbol {
        Symbol {
            mv: self.mv.clone(),
            mark,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mark {
            Mark::Plain => write!(f, "{}", self.mv),
            Mark::Circle => write!(f, "{}∘", self.mv),
            Mark::Bullet => write!(f, "{}•", self.mv),
        }
    }
}

pub type Word = Vec<Symbol>;

#[derive(Debug, Clone)]
pub struct Nfa {
    pub alphabet: BTreeSet<Symbol>,
    start: usize,
    accept: Vec<bool>,
    eps: Vec<Vec<usize>>,
    trans: Vec<Vec<(Symbol, usize)>>,
}

impl Nfa {
    fn with_states(n: usize) -> Nfa {
        Nfa {
            alphabet: BTreeSet::new(),
            start: 0,
            accept: vec![false; n],
            eps: vec![Vec::new(); n],
            trans: vec![Vec::new(); n],
        }
    }

    pub fn n_states(&self) -> usize {
        self.accept.len()
    }

    /// The empty language.
    pub fn none() -> Nfa {
        Nfa::with_states(1)
    }

    /// The language containing only the empty word.
    pub fn epsilon() -> Nfa {
        let mut n = Nfa::with_states(1);
        n.accept[0] = true;
        n
    }

    /// The single-word language `word`.
    pub fn lit(word: &[Symbol]) -> Nfa {
        let mut n = Nfa::with_states(word.len() + 1);
        for (i, s) in word.iter().enumerate() {
            n.trans[i].push((s.clone(), i + 1));
            n.alphabet.insert(s.clone());
        }
        n.accept[word.len()] = true;
        n
    }

    /// `lit` for a single symbol.
    pub fn sym(s: &Symbol) -> Nfa {
        Nfa::lit(std::slice::from_ref(s))
    }

    fn import(&mut self, other: &Nfa) -> usize {
        let off = self.n_states();
        self.accept.extend_from_slice(&other.accept);
        for e in &other.eps {
            self.eps.push(e.iter().map(|q| q + off).collect());
        }
        for t in &other.trans {
            self.trans
                .push(t.iter().map(|(s, q)| (s.clone(), q + off)).collect());
        }
        self.alphabet.extend(other.alphabet.iter().cloned());
        off
    }

    pub fn union(&self, other: &Nfa) -> Nfa {
        let mut n = Nfa::with_states(1);
        let a = n.import(self);
        let b = n.import(other);
        n.eps[0].push(self.start + a);
        n.eps[0].push(other.start + b);
        n
    }

    pub fn union_all<I: IntoIterator<Item = Nfa>>(items: I) -> Nfa {
        let mut acc: Option<Nfa> = None;
        for it in items {
            acc = Some(match acc {
                None => it,
                Some(a) => a.union(&it),
            });
        }
        acc.unwrap_or_else(Nfa::none)
    }

    pub fn concat(&self, other: &Nfa) -> Nfa {
        let mut n = Nfa::with_states(0);
        let a = n.import(self);
        let b = n.import(other);
        n.start = self.start + a;
        for p in 0..self.n_states() {
            if self.accept[p] {
                n.accept[p + a] = false;
                n.eps[p + a].push(other.start + b);
            }
        }
        n
    }

    pub fn star(&self) -> Nfa {
        let mut n = Nfa::with_states(1);
        n.accept[0] = true;
        let a = n.import(self);
        n.eps[0].push(self.start + a);
        for p in 0..self.n_states() {
            if self.accept[p] {
                n.eps[p + a].push(0);
            }
        }
        n
    }

    // -- subset machinery ---------------------------------------------------

    fn closure(&self, set: &mut BTreeSet<usize>) {
        let mut stack: Vec<usize> = set.iter().copied().collect();
        while let Some(p) = stack.pop() {
            for &q in &self.eps[p] {
                if set.insert(q) {
                    stack.push(q);
                }
            }
        }
    }

    fn start_set(&self) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        s.insert(self.start);
        self.closure(&mut s);
        s
    }

    fn step(&self, set: &BTreeSet<usize>, sym: &Symbol) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &p in set {
            for (s, q) in &self.trans[p] {
                if s == sym {
                    out.insert(*q);
                }
            }
        }
        self.closure(&mut out);
        out
    }

    fn set_accepts(&self, set: &BTreeSet<usize>) -> bool {
        set.iter().any(|&p| self.accept[p])
    }

    pub fn member(&self, word: &[Symbol]) -> bool {
        let mut cur = self.start_set();
        for s in word {
            cur = self.step(&cur, s);
            if cur.is_empty() {
                return false;
            }
        }
        self.set_accepts(&cur)
    }

    pub fn is_empty_lang(&self) -> bool {
        // Reachability from the start closure to any accepting state.
        let mut seen = self.start_set();
        let mut stack: Vec<usize> = seen.iter().copied().collect();
        while let Some(p) = stack.pop() {
            if self.accept[p] {
                return false;
            }
            for (_, q) in &self.trans[p] {
                if seen.insert(*q) {
                    stack.push(*q);
                }
            }
            for &q in &self.eps[p] {
                if seen.insert(q) {
                    stack.push(q);
                }
            }
        }
        true
    }

    /// Same language with no epsilon transitions.
    pub fn without_eps(&self) -> Nfa {
        let n = self.n_states();
        let mut out = Nfa::with_states(n);
        out.start = self.start;
        out.alphabet = self.alphabet.clone();
        for p in 0..n {
            let mut cl = BTreeSet::new();
            cl.insert(p);
            self.closure(&mut cl);
            out.accept[p] = self.set_accepts(&cl);
            let mut edges = BTreeSet::new();
            for &r in &cl {
                for (s, q) in &self.trans[r] {
                    edges.insert((s.clone(), *q));
                }
            }
            out.trans[p] = edges.into_iter().collect();
        }
        out
    }

    /// Synchronous product: words accepted by both.
    pub fn intersect(&self, other: &Nfa) -> Nfa {
        let a = self.without_eps();
        let b = other.without_eps();
        let mut out = Nfa::with_states(0);
        out.alphabet = self
            .alphabet
            .union(&other.alphabet)
            .cloned()
            .collect();
        let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut queue = VecDeque::new();
        let sid = (a.start, b.start);
        index.insert(sid, 0);
        out.accept.push(a.accept[a.start] && b.accept[b.start]);
        out.eps.push(Vec::new());
        out.trans.push(Vec::new());
        queue.push_back(sid);
        while let Some((p, q)) = queue.pop_front() {
            let me = index[&(p, q)];
            let mut edges = Vec::new();
            for (s, p2) in &a.trans[p] {
                for (s2, q2) in &b.trans[q] {
                    if s == s2 {
                        let key = (*p2, *q2);
                        let id = *index.entry(key).or_insert_with(|| {
                            let id = out.accept.len();
                            out.accept.push(a.accept[*p2] && b.accept[*q2]);
                            out.eps.push(Vec::new());
                            out.trans.push(Vec::new());
                            queue.push_back(key);
                            id
                        });
                        edges.push((s.clone(), id));
                    }
                }
            }
            edges.sort();
            edges.dedup();
            out.trans[me] = edges;
        }
        out
    }

    /// Arbitrary interleavings of a word from each language.
    pub fn shuffle(&self, other: &Nfa) -> Nfa {
        let a = self.without_eps();
        let b = other.without_eps();
        let na = a.n_states();
        let nb = b.n_states();
        let mut out = Nfa::with_states(na * nb);
        out.alphabet = self.alphabet.union(&other.alphabet).cloned().collect();
        let id = |p: usize, q: usize| p * nb + q;
        out.start = id(a.start, b.start);
        for p in 0..na {
            for q in 0..nb {
                out.accept[id(p, q)] = a.accept[p] && b.accept[q];
                for (s, p2) in &a.trans[p] {
                    out.trans[id(p, q)].push((s.clone(), id(*p2, q)));
                }
                for (s, q2) in &b.trans[q] {
                    out.trans[id(p, q)].push((s.clone(), id(p, *q2)));
                }
            }
        }
        out
    }

    /// Relabel symbols; unmapped symbols are kept. The map need not be
    /// injective (the language becomes the homomorphic image).
    pub fn rename(&self, map: &BTreeMap<Symbol, Symbol>) -> Nfa {
        let mut out = self.clone();
        out.alphabet = self
            .alphabet
            .iter()
            .map(|s| map.get(s).unwrap_or(s).clone())
            .collect();
        for t in &mut out.trans {
            for (s, _) in t.iter_mut() {
                if let Some(r) = map.get(s) {
                    *s = r.clone();
                }
            }
        }
        out
    }

    /// Homomorphic deletion: occurrences of `kill` symbols vanish.
    pub fn erase(&self, kill: &BTreeSet<Symbol>) -> Nfa {
        let mut out = self.clone();
        out.alphabet = self.alphabet.difference(kill).cloned().collect();
        for p in 0..out.n_states() {
            let mut keep = Vec::new();
            for (s, q) in std::mem::take(&mut out.trans[p]) {
                if kill.contains(&s) {
                    out.eps[p].push(q);
                } else {
                    keep.push((s, q));
                }
            }
            out.trans[p] = keep;
        }
        out
    }

    /// Drops alphabet symbols that label no transition on a path from the
    /// start state to an accepting state. The language is unchanged;
    /// products such as [`Nfa::intersect`] union the operand alphabets, so
    /// dead letters can otherwise accumulate.
    pub fn prune_alphabet(&self) -> Nfa {
        let n = self.n_states();
        let mut fwd = vec![false; n];
        let mut stack = vec![self.start];
        fwd[self.start] = true;
        while let Some(p) = stack.pop() {
            for q in self.eps[p].iter().chain(self.trans[p].iter().map(|(_, q)| q)) {
                if !fwd[*q] {
                    fwd[*q] = true;
                    stack.push(*q);
                }
            }
        }
        let mut back = vec![Vec::new(); n];
        for p in 0..n {
            for q in self.eps[p].iter().chain(self.trans[p].iter().map(|(_, q)| q)) {
                back[*q].push(p);
            }
        }
        let mut bwd = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|q| self.accept[*q]).collect();
        for q in &stack {
            bwd[*q] = true;
        }
        while let Some(p) = stack.pop() {
            for q in &back[p] {
                if !bwd[*q] {
                    bwd[*q] = true;
                    stack.push(*q);
                }
            }
        }
        let used: BTreeSet<Symbol> = self
            .trans
            .iter()
            .enumerate()
            .filter(|(p, _)| fwd[*p])
            .flat_map(|(_, edges)| edges.iter())
            .filter(|(_, q)| bwd[*q])
            .map(|(s, _)| s.clone())
            .collect();
        let mut out = self.clone();
        out.alphabet = self.alphabet.intersection(&used).cloned().collect();
        out
    }

    /// Language substitution: each occurrence of a symbol with a rule is
    /// replaced by any word of the rule's language; other symbols stand for
    /// themselves.
    pub fn subst(&self, rules: &BTreeMap<Symbol, Nfa>) -> Nfa {
        let mut out = self.clone();
        let mut new_alpha: BTreeSet<Symbol> = self
            .alphabet
            .iter()
            .filter(|s| !rules.contains_key(s))
            .cloned()
            .collect();
        for r in rules.values() {
            new_alpha.extend(r.alphabet.iter().cloned());
        }
        for p in 0..self.n_states() {
            let mut keep = Vec::new();
            for (s, q) in std::mem::take(&mut out.trans[p]) {
                match rules.get(&s) {
                    None => keep.push((s, q)),
                    Some(r) => {
                        let off = out.import(r);
                        out.eps[p].push(r.start + off);
                        for rp in 0..r.n_states() {
                            if r.accept[rp] {
                                out.accept[rp + off] = false;
                                out.eps[rp + off].push(q);
                            }
                        }
                    }
                }
            }
            out.trans[p] = keep;
        }
        out.alphabet = new_alpha;
        out
    }

    // -- decision procedures ------------------------------------------------

    fn determinize(&self, alphabet: &BTreeSet<Symbol>) -> Dfa {
        let alpha: Vec<Symbol> = alphabet.iter().cloned().collect();
        let mut states: BTreeMap<BTreeSet<usize>, usize> = BTreeMap::new();
        let mut accept = Vec::new();
        let mut trans: Vec<Vec<usize>> = Vec::new();
        let mut queue = VecDeque::new();
        let s0 = self.start_set();
        states.insert(s0.clone(), 0);
        accept.push(self.set_accepts(&s0));
        trans.push(vec![usize::MAX; alpha.len()]);
        queue.push_back(s0);
        while let Some(cur) = queue.pop_front() {
            let me = states[&cur];
            for (i, s) in alpha.iter().enumerate() {
                let nxt = self.step(&cur, s);
                let id = match states.get(&nxt) {
                    Some(&id) => id,
                    None => {
                        let id = accept.len();
                        states.insert(nxt.clone(), id);
                        accept.push(self.set_accepts(&nxt));
                        trans.push(vec![usize::MAX; alpha.len()]);
                        queue.push_back(nxt);
                        id
                    }
                };
                trans[me][i] = id;
            }
        }
        Dfa {
            alpha,
            accept,
            trans,
        }
    }

    /// Complement relative to `alphabet`: the result accepts exactly the
    /// words over `alphabet` that `self` rejects.
    pub fn complement(&self, alphabet: &BTreeSet<Symbol>) -> Nfa {
        let dfa = self.determinize(alphabet);
        let mut out = Nfa::with_states(dfa.accept.len());
        out.alphabet = alphabet.clone();
        for (p, row) in dfa.trans.iter().enumerate() {
            out.accept[p] = !dfa.accept[p];
            for (i, &q) in row.iter().enumerate() {
                out.trans[p].push((dfa.alpha[i].clone(), q));
            }
        }
        out
    }

    /// Shortest word accepted by exactly one of the two languages, by
    /// breadth-first search over the product of determinizations. `None`
    /// means the languages are equal.
    pub fn difference_witness(&self, other: &Nfa) -> Option<Word> {
        let alphabet: BTreeSet<Symbol> = self
            .alphabet
            .union(&other.alphabet)
            .cloned()
            .collect();
        let da = self.determinize(&alphabet);
        let db = other.determinize(&alphabet);
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<(usize, usize, Word)> = VecDeque::new();
        seen.insert((0usize, 0usize));
        queue.push_back((0, 0, Vec::new()));
        while let Some((p, q, w)) = queue.pop_front() {
            if da.accept[p] != db.accept[q] {
                return Some(w);
            }
            for (i, s) in da.alpha.iter().enumerate() {
                let key = (da.trans[p][i], db.trans[q][i]);
                if seen.insert(key) {
                    let mut w2 = w.clone();
                    w2.push(s.clone());
                    queue.push_back((key.0, key.1, w2));
                }
            }
        }
        None
    }

    pub fn equivalent(&self, other: &Nfa) -> bool {
        self.difference_witness(other).is_none()
    }

    /// All accepted words of length at most `k`, by depth-first search over
    /// subset states (branches with empty state sets are pruned).
    pub fn enumerate_up_to(&self, k: usize) -> BTreeSet<Word> {
        let alpha: Vec<Symbol> = self.alphabet.iter().cloned().collect();
        let mut out = BTreeSet::new();
        let mut word = Vec::new();
        fn go(
            nfa: &Nfa,
            alpha: &[Symbol],
            set: &BTreeSet<usize>,
            k: usize,
            word: &mut Word,
            out: &mut BTreeSet<Word>,
        ) {
            if nfa.set_accepts(set) {
                out.insert(word.clone());
            }
            if word.len() == k {
                return;
            }
            for s in alpha {
                let nxt = nfa.step(set, s);
                if nxt.is_empty() {
                    continue;
                }
                word.push(s.clone());
                go(nfa, alpha, &nxt, k, word, out);
                word.pop();
            }
        }
        go(self, &alpha, &self.start_set(), k, &mut word, &mut out);
        out
    }

    /// Compact textual dump for golden files: a `states`, `start` and
    /// `accept` header followed by one `trans p <symbol> q` line per labelled
    /// edge and one `eps p q` line per epsilon edge. Symbols never contain
    /// whitespace, so the format splits on spaces.
    pub fn to_text(&self) -> String {
        let mut s = format!("states {}\nstart {}\naccept", self.n_states(), self.start);
        for (q, acc) in self.accept.iter().enumerate() {
            if *acc {
                s.push_str(&format!(" {}", q));
            }
        }
        s.push('\n');
        for (p, edges) in self.trans.iter().enumerate() {
            for (sym, q) in edges {
                s.push_str(&format!("trans {} {} {}\n", p, sym, q));
            }
        }
        for (p, targets) in self.eps.iter().enumerate() {
            for q in targets {
                s.push_str(&format!("eps {} {}\n", p, q));
            }
        }
        s
    }

    /// DOT-format dump; accepting states are double circles, the start state
    /// is marked by an arrow from a point node.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph nfa {\n  rankdir=LR;\n  _in [shape=point];\n");
        for q in 0..self.n_states() {
            let shape = if self.accept[q] {
                "doublecircle"
            } else {
                "circle"
            };
            s.push_str(&format!("  n{} [label=\"{}\", shape={}];\n", q, q, shape));
        }
        s.push_str(&format!("  _in -> n{};\n", self.start));
        for (p, edges) in self.trans.iter().enumerate() {
            for (sym, q) in edges {
                s.push_str(&format!("  n{} -> n{} [label=\"{}\"];\n", p, q, sym));
            }
        }
        for (p, targets) in self.eps.iter().enumerate() {
            for q in targets {
                s.push_str(&format!("  n{} -> n{} [label=\"ε\"];\n", p, q));
            }
        }
        s.push_str("}\n");
        s
    }
}

struct Dfa {
    alpha: Vec<Symbol>,
    accept: Vec<bool>,
    trans: Vec<Vec<usize>>, // complete: one target per (state, alpha index)
}

/// Random NFA over the given alphabet, for differential testing.
pub fn random_nfa<R: rand::Rng>(rng: &mut R, max_states: usize, alphabet: &[Symbol]) -> Nfa {
    let n = rng.gen_range(1..=max_states);
    let mut nfa = Nfa::with_states(n);
    nfa.alphabet = alphabet.iter().cloned().collect();
    for p in 0..n {
        nfa.accept[p] = rng.gen_bool(0.3);
        let edges = rng.gen_range(0..=3);
        for _ in 0..edges {
            let s = &alphabet[rng.gen_range(0..alphabet.len())];
            let q = rng.gen_range(0..n);
            nfa.trans[p].push((s.clone(), q));
        }
        if rng.gen_bool(0.15) {
            nfa.eps[p].push(rng.gen_range(0..n));
        }
    }
    nfa
}
