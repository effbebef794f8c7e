//! The acceptance gate: seven checks spanning the whole toolkit, each
//! printing one `ACCEPTANCE <n> <label>: PASS/FAIL` line with its runtime.
//! Run `cargo test --test acceptance -- --nocapture` to watch the lines.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iacbv_core::games::{denote_type, prearena, prearena_of_judgment, Prearena};
use iacbv_core::interp::{eval, EvalResult, Heap};
use iacbv_core::lang::{random_nfa, Nfa, Symbol, Word};
use iacbv_core::oracle::{convergence_gap, distinguish, SearchResult};
use iacbv_core::splays::{
    associativity_check, compose, derived_checks, innocence_coherent, play_from,
    random_cell_play, random_matched_pair, validate_splay, SMove, SPlay, Store,
};
use iacbv_core::syntax::{parse_term, seq};
use iacbv_core::translate::{decide_equiv, Equivalence};
use iacbv_core::{BinOp, Context, Term, Type};

const N: u32 = 2;
const MAX_CONTEXT: usize = 40;
const FUEL: u64 = 10_000;

#[test]
fn all_criteria() {
    type Check = fn() -> Result<String, String>;
    let checks: [(u32, &str, u64, Check); 7] = [
        (1, "composition fixtures", 1, criterion_1),
        (2, "introduction plays", 10, criterion_2),
        (3, "equivalence suite", 60, criterion_3),
        (4, "oracle consistency", 300, criterion_4),
        (5, "automata engine", 60, criterion_5),
        (6, "s-play theorem suite", 120, criterion_6),
        (7, "interpreter conservativity", 120, criterion_7),
    ];
    let mut failures = Vec::new();
    for (no, label, bound_secs, run) in checks {
        let bound = Duration::from_secs(bound_secs);
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let line = match outcome {
            Ok(detail) if took <= bound => {
                format!("ACCEPTANCE {} {}: PASS ({:.2?}; {})", no, label, took, detail)
            }
            Ok(detail) => format!(
                "ACCEPTANCE {} {}: FAIL (over budget: {:.2?} > {:?}; {})",
                no, label, took, bound, detail
            ),
            Err(why) => format!("ACCEPTANCE {} {}: FAIL ({:.2?}; {})", no, label, took, why),
        };
        println!("{}", line);
        if line.contains(": FAIL") {
            failures.push(line);
        }
    }
    assert!(failures.is_empty(), "\n{}", failures.join("\n"));
}

// --------------------------------------------------------------------------
// 1. The composition example: two store-traffic plays hide to a bare answer.

fn playcomp_s(pre: &Rc<Prearena>, block2: [&'static str; 8]) -> SPlay {
    let mut spec: Vec<(&str, usize, &[(u32, i64)])> = vec![
        ("@(*)", 0, &[]),
        ("r.*", 1, &[]),
        ("r.arg.*", 2, &[]),
        ("r.arg.read", 3, &[]),
        ("r.arg.0", 4, &[]),
        ("r.arg.write(1)", 3, &[]),
        ("r.arg.ok", 6, &[]),
        ("r.arg.read", 3, &[]),
        ("r.arg.1", 8, &[]),
        ("r.ret.1", 3, &[]),
        ("r.arg.*", 2, &[]),
    ];
    let js = [11, 12, 11, 14, 11, 16, 11];
    for (k, name) in block2.iter().enumerate().skip(1) {
        spec.push((*name, js[k - 1], &[]));
    }
    play_from(pre, &spec)
}

fn playcomp_fixture(n: u32) -> (SPlay, SPlay) {
    let arrow_ty = Type::arrow(Type::Var, Type::Exp);
    let s_pre = Rc::new(prearena(
        &Rc::new(denote_type(&Type::Com, n)),
        &Rc::new(denote_type(&arrow_ty, n)),
    ));
    let s = playcomp_s(
        &s_pre,
        [
            "r.arg.*",
            "r.arg.read",
            "r.arg.0",
            "r.arg.write(1)",
            "r.arg.ok",
            "r.arg.read",
            "r.arg.1",
            "r.ret.1",
        ],
    );
    let ctx = Context(vec![("f".to_string(), arrow_ty)]);
    let t_pre = Rc::new(prearena_of_judgment(&ctx, &Type::Exp, n));
    let t = play_from(
        &t_pre,
        &[
            ("@(*)", 0, &[]),
            ("f.arg.*", 1, &[(0, 0)]),
            ("f.arg.read", 2, &[(0, 0)]),
            ("f.arg.0", 3, &[(0, 0)]),
            ("f.arg.write(1)", 2, &[(0, 0)]),
            ("f.arg.ok", 5, &[(0, 1)]),
            ("f.arg.read", 2, &[(0, 1)]),
            ("f.arg.1", 7, &[(0, 1)]),
            ("f.ret.1", 2, &[(0, 1)]),
            ("f.arg.*", 1, &[(1, 0)]),
            ("f.arg.read", 10, &[(1, 0)]),
            ("f.arg.0", 11, &[(1, 0)]),
            ("f.arg.write(1)", 10, &[(1, 0)]),
            ("f.arg.ok", 13, &[(1, 1)]),
            ("f.arg.read", 10, &[(1, 1)]),
            ("f.arg.1", 15, &[(1, 1)]),
            ("f.ret.1", 10, &[(1, 1)]),
            ("r.2", 1, &[]),
        ],
    );
    (s, t)
}

fn playcomp_variant(n: u32) -> (SPlay, SPlay) {
    let arrow_ty = Type::arrow(Type::Var, Type::Exp);
    let s_pre = Rc::new(prearena(
        &Rc::new(denote_type(&Type::Com, n)),
        &Rc::new(denote_type(&arrow_ty, n)),
    ));
    let s = playcomp_s(
        &s_pre,
        [
            "r.arg.*",
            "r.arg.read",
            "r.arg.1",
            "r.arg.write(2)",
            "r.arg.ok",
            "r.arg.read",
            "r.arg.2",
            "r.ret.2",
        ],
    );
    let ctx = Context(vec![("f".to_string(), arrow_ty)]);
    let t_pre = Rc::new(prearena_of_judgment(&ctx, &Type::Exp, n));
    let t = play_from(
        &t_pre,
        &[
            ("@(*)", 0, &[]),
            ("f.arg.*", 1, &[(0, 0)]),
            ("f.arg.read", 2, &[(0, 0)]),
            ("f.arg.0", 3, &[(0, 0)]),
            ("f.arg.write(1)", 2, &[(0, 0)]),
            ("f.arg.ok", 5, &[(0, 1)]),
            ("f.arg.read", 2, &[(0, 1)]),
            ("f.arg.1", 7, &[(0, 1)]),
            ("f.ret.1", 2, &[(0, 1)]),
            ("f.arg.*", 1, &[(0, 1)]),
            ("f.arg.read", 10, &[(0, 1)]),
            ("f.arg.1", 11, &[(0, 1)]),
            ("f.arg.write(2)", 10, &[(0, 1)]),
            ("f.arg.ok", 13, &[(0, 2)]),
            ("f.arg.read", 10, &[(0, 2)]),
            ("f.arg.2", 15, &[(0, 2)]),
            ("f.ret.2", 10, &[(0, 2)]),
            ("r.3", 1, &[]),
        ],
    );
    (s, t)
}

fn criterion_1() -> Result<String, String> {
    let (s, t) = playcomp_fixture(2);
    let got = compose(&s, &t).map_err(|e| format!("compose failed: {}", e))?;
    let pre = Rc::new(prearena(
        &Rc::new(denote_type(&Type::Com, 2)),
        &Rc::new(denote_type(&Type::Exp, 2)),
    ));
    let expect = play_from(&pre, &[("@(*)", 0, &[]), ("r.2", 1, &[])]);
    if got != expect {
        return Err("s;t is not the bare answer 2".into());
    }
    let (s, t) = playcomp_variant(3);
    let got = compose(&s, &t).map_err(|e| format!("compose failed: {}", e))?;
    let pre = Rc::new(prearena(
        &Rc::new(denote_type(&Type::Com, 3)),
        &Rc::new(denote_type(&Type::Exp, 3)),
    ));
    let expect = play_from(&pre, &[("@(*)", 0, &[]), ("r.3", 1, &[])]);
    if got != expect {
        return Err("s';t' is not the bare answer 3".into());
    }
    Ok("s;t = *.2 and s';t' = *.3, move for move".into())
}

// --------------------------------------------------------------------------
// 2. The two introduction plays: the first validates with its revealed
// stores, the second admits no decoration at all.

fn intro_prearena(n: u32) -> Rc<Prearena> {
    let ce = Type::arrow(Type::Com, Type::Exp);
    let ctx = Context(vec![("f".to_string(), Type::arrow(ce.clone(), ce.clone()))]);
    Rc::new(prearena_of_judgment(&ctx, &ce, n))
}

fn intro_play1(pre: &Rc<Prearena>) -> SPlay {
    play_from(
        pre,
        &[
            ("@(*)", 0, &[]),
            ("f.arg.*", 1, &[(0, 0)]),
            ("f.arg.arg.*", 2, &[(0, 0)]),
            ("f.arg.ret.1", 3, &[(0, 1)]),
            ("f.arg.arg.*", 2, &[(0, 1)]),
            ("f.arg.ret.2", 5, &[(0, 2)]),
            ("f.ret.*", 2, &[(0, 2)]),
            ("r.*", 1, &[]),
            ("r.arg.*", 8, &[]),
            ("r.ret.0", 9, &[]),
            ("r.arg.*", 8, &[]),
            ("r.ret.0", 11, &[]),
        ],
    )
}

/// Every store over at most two names (0 and 1) with values in 0..=2,
/// both orders included: the raw material for the exhaustive decoration
/// search.
fn store_options() -> Vec<Store> {
    let mut out = vec![Store::empty()];
    for name in 0..2u32 {
        for v in 0..=2i64 {
            out.push(Store::from_pairs(&[(name, v)]));
        }
    }
    for (a, b) in [(0u32, 1u32), (1, 0)] {
        for v in 0..=2i64 {
            for w in 0..=2i64 {
                out.push(Store::from_pairs(&[(a, v), (b, w)]));
            }
        }
    }
    out
}

/// Depth-first search over store decorations of a fixed move skeleton.
/// Every condition is checked position by position, so a prefix that
/// already violates one can be pruned: no extension recovers. Returns
/// (viable prefixes, fully decorated survivors).
fn decoration_search(
    pre: &Rc<Prearena>,
    skeleton: &[(usize, Option<usize>)],
    options: &[Store],
    moves: &mut Vec<SMove>,
) -> (u64, u64) {
    if moves.len() == skeleton.len() {
        return (0, 1);
    }
    let (mv, justifier) = skeleton[moves.len()];
    let mut viable = 0;
    let mut survivors = 0;
    for store in options {
        moves.push(SMove {
            mv,
            store: store.clone(),
            justifier,
        });
        let prefix = SPlay {
            pre: pre.clone(),
            moves: moves.clone(),
        };
        if validate_splay(&prefix).is_ok() && innocence_coherent(&prefix).is_ok() {
            let (v, s) = decoration_search(pre, skeleton, options, moves);
            viable += 1 + v;
            survivors += s;
        }
        moves.pop();
    }
    (viable, survivors)
}

fn criterion_2() -> Result<String, String> {
    let pre = intro_prearena(2);
    let p1 = intro_play1(&pre);
    validate_splay(&p1).map_err(|v| format!("first play rejected: {}", v))?;
    innocence_coherent(&p1).map_err(|v| format!("first play incoherent: {}", v))?;

    let names = [
        "@(*)",
        "f.arg.*",
        "f.arg.arg.*",
        "f.arg.ret.0",
        "f.arg.arg.*",
        "f.arg.ret.1",
        "f.ret.*",
        "r.*",
        "r.arg.*",
        "f.ret.arg.*",
    ];
    let js = [0usize, 1, 2, 3, 2, 5, 2, 1, 8, 7];
    let skeleton: Vec<(usize, Option<usize>)> = names
        .iter()
        .zip(js)
        .map(|(name, j)| (pre.lookup(name), j.checked_sub(1)))
        .collect();
    let options = store_options();
    let (viable, survivors) =
        decoration_search(&pre, &skeleton, &options, &mut Vec::new());
    if survivors > 0 {
        return Err(format!(
            "{} decorations of the second play satisfy every condition",
            survivors
        ));
    }
    Ok(format!(
        "first play accepted; all decorations of the second break a condition ({} viable prefixes explored)",
        viable
    ))
}

// --------------------------------------------------------------------------
// 3. The curated equivalence suite, decided through the translation.

fn curated_pairs() -> Vec<(&'static str, &'static str, bool)> {
    vec![
        ("|- new x in 5 : exp", "|- 5 : exp", true),
        ("|- new x in (x := 1; !x) : exp", "|- 1 : exp", true),
        ("|- new x in (x := 1; x := 2; !x) : exp", "|- 2 : exp", true),
        ("|- skip; skip : com", "|- skip : com", true),
        (
            "x:var |- while !x do x := !x - 1 : com",
            "x:var |- if !x then (x := !x - 1; while !x do x := !x - 1) else skip : com",
            true,
        ),
        (
            "|- fn c:com => c : com -> com",
            "|- fn c:com => skip : com -> com",
            true,
        ),
        (
            "|- new x in (x := 1; if !x then skip else while 1 do skip) : com",
            "|- skip : com",
            true,
        ),
        ("|- while 0 do skip : com", "|- skip : com", true),
        ("x:exp |- x + 1 + 2 : exp", "x:exp |- x : exp", true),
        ("|- 1 + 1 : exp", "|- 2 : exp", true),
        ("|- 1 : exp", "|- 2 : exp", false),
        (
            "f:com->com->com |- let g1 = f skip in let g2 = f skip in g1 skip : com",
            "f:com->com->com |- let g1 = f skip in let g2 = f skip in g2 skip : com",
            false,
        ),
        ("x:var |- x := 0; x := 1 : com", "x:var |- x := 1 : com", false),
        ("x:var |- !x; skip : com", "x:var |- skip : com", false),
        (
            "f:com->com |- f skip; f skip : com",
            "f:com->com |- f skip : com",
            false,
        ),
    ]
}

fn criterion_3() -> Result<String, String> {
    let mut equivalent = 0;
    let mut inequivalent = 0;
    for (a, b, want_eq) in curated_pairs() {
        let ja = parse_term(a).map_err(|e| format!("{}: {}", a, e))?;
        let jb = parse_term(b).map_err(|e| format!("{}: {}", b, e))?;
        let verdict =
            decide_equiv(&ja, &jb, N).map_err(|e| format!("{} vs {}: {}", a, b, e))?;
        let got_eq = verdict == Equivalence::Equivalent;
        if got_eq != want_eq {
            return Err(format!("wrong verdict on {} vs {}", a, b));
        }
        for j in [&ja, &jb] {
            let refl = decide_equiv(j, j, N).map_err(|e| e.to_string())?;
            if refl != Equivalence::Equivalent {
                return Err(format!("{} does not equal itself", j));
            }
        }
        if got_eq {
            equivalent += 1;
        } else {
            inequivalent += 1;
        }
    }
    Ok(format!(
        "{} equivalent and {} inequivalent pairs decided, all as expected",
        equivalent, inequivalent
    ))
}

// --------------------------------------------------------------------------
// 4. The context search agrees with the decision procedure on every
// curated pair, and its witnesses replay.

fn criterion_4() -> Result<String, String> {
    let mut witnesses = 0;
    let mut exhausted = 0;
    for (a, b, want_eq) in curated_pairs() {
        let ja = parse_term(a).unwrap();
        let jb = parse_term(b).unwrap();
        match distinguish(&ja, &jb, MAX_CONTEXT, FUEL, N) {
            SearchResult::Witness(tpl) => {
                if want_eq {
                    return Err(format!("spurious witness {} for {} vs {}", tpl, a, b));
                }
                let gap = convergence_gap(&tpl, &ja.term, &jb.term, FUEL, N)
                    .ok_or_else(|| format!("witness {} does not replay for {} vs {}", tpl, a, b))?;
                if a.contains("let g1") {
                    replay_printed(&tpl.to_string(), &ja.term, &jb.term, gap)?;
                }
                witnesses += 1;
            }
            SearchResult::NoneWithinBudget => {
                if !want_eq {
                    return Err(format!("no context within budget for {} vs {}", a, b));
                }
                exhausted += 1;
            }
        }
    }
    Ok(format!(
        "{} witnesses found and replayed, {} equivalent pairs exhausted to size {}",
        witnesses, exhausted, MAX_CONTEXT
    ))
}

/// Re-reads a printed witness context through the parser, fills the hole
/// textually and checks the convergence gap again: what the user sees is
/// what ran.
fn replay_printed(
    printed: &str,
    m1: &Term,
    m2: &Term,
    gap: (bool, bool),
) -> Result<(), String> {
    let mut got = Vec::new();
    for m in [m1, m2] {
        let src = format!("|- {} : com", printed.replace("[-]", &format!("({})", m)));
        let j = parse_term(&src).map_err(|e| format!("printed witness misparses: {}", e))?;
        got.push(matches!(
            eval(&j.term, Heap::new(), FUEL, Some(N)),
            EvalResult::Value(..)
        ));
    }
    if (got[0], got[1]) != gap {
        return Err("printed witness replays differently than the template".into());
    }
    Ok(())
}

// --------------------------------------------------------------------------
// 5. The automata engine against brute-force word sets.

fn merges(u: &[Symbol], v: &[Symbol], acc: &mut Word, out: &mut BTreeSet<Word>) {
    if u.is_empty() && v.is_empty() {
        out.insert(acc.clone());
        return;
    }
    if let Some((head, rest)) = u.split_first() {
        acc.push(head.clone());
        merges(rest, v, acc, out);
        acc.pop();
    }
    if let Some((head, rest)) = v.split_first() {
        acc.push(head.clone());
        merges(u, rest, acc, out);
        acc.pop();
    }
}

fn expansions(
    w: &[Symbol],
    rule_words: &BTreeMap<Symbol, Vec<Word>>,
    cap: usize,
    acc: &mut Word,
    out: &mut BTreeSet<Word>,
) {
    if acc.len() > cap {
        return;
    }
    match w.split_first() {
        None => {
            out.insert(acc.clone());
        }
        Some((head, rest)) => {
            for rw in &rule_words[head] {
                let keep = acc.len();
                acc.extend(rw.iter().cloned());
                expansions(rest, rule_words, cap, acc, out);
                acc.truncate(keep);
            }
        }
    }
}

fn criterion_5() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let alpha: Vec<Symbol> = ["a", "b", "c"].iter().map(|s| Symbol::plain(s)).collect();

    // equivalent against depth-8 set equality: 500 independent pairs plus
    // a language-preserving rebuild of each of the 1000 automata.
    let nfas: Vec<Nfa> = (0..1000).map(|_| random_nfa(&mut rng, 5, &alpha)).collect();
    let mut agreed_equal = 0;
    for pair in nfas.chunks(2) {
        let brute = pair[0].enumerate_up_to(8) == pair[1].enumerate_up_to(8);
        if pair[0].equivalent(&pair[1]) != brute {
            return Err("equivalent disagrees with depth-8 enumeration".into());
        }
        if brute {
            agreed_equal += 1;
        }
    }
    for (i, x) in nfas.iter().enumerate() {
        let same = match i % 3 {
            0 => x.union(x),
            1 => x.concat(&Nfa::epsilon()),
            _ => x.without_eps(),
        };
        if !x.equivalent(&same) || x.enumerate_up_to(8) != same.enumerate_up_to(8) {
            return Err("a language-preserving rebuild changed the language".into());
        }
    }

    // shuffle against brute interleaving of enumerated word pairs.
    for _ in 0..100 {
        let x = random_nfa(&mut rng, 4, &alpha);
        let y = random_nfa(&mut rng, 4, &alpha);
        let mut brute = BTreeSet::new();
        for u in x.enumerate_up_to(6) {
            for v in y.enumerate_up_to(6) {
                if u.len() + v.len() <= 6 {
                    merges(&u, &v, &mut Vec::new(), &mut brute);
                }
            }
        }
        if x.shuffle(&y).enumerate_up_to(6) != brute {
            return Err("shuffle drifts from the brute interleaving set".into());
        }
    }

    // subst with finite rules whose words are never empty, so every
    // substituted word of length <= 6 stems from a source of length <= 6.
    let target: Vec<Symbol> = ["d", "e"].iter().map(|s| Symbol::plain(s)).collect();
    for _ in 0..100 {
        let x = random_nfa(&mut rng, 4, &alpha);
        let mut rules = BTreeMap::new();
        let mut rule_words: BTreeMap<Symbol, Vec<Word>> = BTreeMap::new();
        for sym in &alpha {
            let mut words: Vec<Word> = (0..rng.gen_range(1..=2))
                .map(|_| {
                    (0..rng.gen_range(1..=2))
                        .map(|_| target[rng.gen_range(0..target.len())].clone())
                        .collect()
                })
                .collect();
            words.sort();
            words.dedup();
            rules.insert(sym.clone(), Nfa::union_all(words.iter().map(|w| Nfa::lit(w))));
            rule_words.insert(sym.clone(), words);
        }
        let mut brute = BTreeSet::new();
        for w in x.enumerate_up_to(6) {
            expansions(&w, &rule_words, 6, &mut Vec::new(), &mut brute);
        }
        if x.subst(&rules).enumerate_up_to(6) != brute {
            return Err("subst drifts from the brute expansion set".into());
        }
    }

    // erase against literal projection on finite languages, then on two
    // loops whose erased letters pump.
    for _ in 0..100 {
        let words: BTreeSet<Word> = (0..rng.gen_range(1..=6))
            .map(|_| {
                (0..rng.gen_range(0..=5))
                    .map(|_| alpha[rng.gen_range(0..alpha.len())].clone())
                    .collect()
            })
            .collect();
        let x = Nfa::union_all(words.iter().map(|w| Nfa::lit(w)));
        let kill: BTreeSet<Symbol> =
            alpha.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
        let brute: BTreeSet<Word> = words
            .iter()
            .map(|w| w.iter().filter(|s| !kill.contains(*s)).cloned().collect())
            .collect();
        if x.erase(&kill).enumerate_up_to(6) != brute {
            return Err("erase drifts from the brute projection".into());
        }
    }
    let (a, b, c) = (&alpha[0], &alpha[1], &alpha[2]);
    let kill: BTreeSet<Symbol> = [a.clone()].into_iter().collect();
    let loop_x = Nfa::lit(&[a.clone(), b.clone()])
        .star()
        .concat(&Nfa::lit(&[c.clone()]));
    let expect: BTreeSet<Word> = (0..=5)
        .map(|k| {
            let mut w = vec![b.clone(); k];
            w.push(c.clone());
            w
        })
        .collect();
    if loop_x.erase(&kill).enumerate_up_to(6) != expect {
        return Err("erasing through a loop lost words".into());
    }
    let only_a = Nfa::lit(&[a.clone()]).star();
    if only_a.erase(&kill).enumerate_up_to(6) != BTreeSet::from([Word::new()]) {
        return Err("erasing a pure loop should leave the empty word".into());
    }

    Ok(format!(
        "1000 automata agree with brute enumeration ({} equal pairs); shuffle, subst and erase match on 300 instances",
        agreed_equal
    ))
}

// --------------------------------------------------------------------------
// 6. The S-play theorems on a generated corpus plus curated triples.

fn skip_play(n: u32) -> SPlay {
    let pre = Rc::new(prearena(
        &Rc::new(denote_type(&Type::Com, n)),
        &Rc::new(denote_type(&Type::Com, n)),
    ));
    play_from(&pre, &[("@(*)", 0, &[]), ("r.*", 1, &[])])
}

fn criterion_6() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut corpus = 0;
    for i in 0..500 {
        let n = 1 + (i % 2) as u32;
        let p = random_cell_play(&mut rng, n, 4);
        if p.len() > 12 {
            return Err("generated play exceeds 12 moves".into());
        }
        validate_splay(&p).map_err(|v| format!("cell play rejected: {}\n{}", v, p))?;
        derived_checks(&p).map_err(|v| format!("derived check failed: {}\n{}", v, p))?;
        corpus += 1;
    }

    let mut composites = 0;
    for i in 0..200 {
        let n = 1 + (i % 2) as u32;
        let (s, t, v) = random_matched_pair(&mut rng, n);
        for p in [&s, &t] {
            if p.len() > 12 {
                return Err("matched play exceeds 12 moves".into());
            }
            validate_splay(p).map_err(|v| format!("matched play rejected: {}\n{}", v, p))?;
            derived_checks(p).map_err(|v| format!("derived check failed: {}\n{}", v, p))?;
            corpus += 1;
        }
        let c = compose(&s, &t).map_err(|e| format!("compose failed: {}", e))?;
        validate_splay(&c).map_err(|v| format!("composite rejected: {}\n{}", v, c))?;
        if c.len() != 2 || c.pre.moves[c.moves[1].mv].name != format!("r.{}", v) {
            return Err(format!("composite does not answer {}", v));
        }
        composites += 1;
    }

    // Curated triples: the composition example against the identity and
    // the successor, a chain of skips, and pointer re-anchoring through
    // two hidden layers.
    let (s, t) = playcomp_fixture(2);
    let id_pre = Rc::new(prearena(
        &Rc::new(denote_type(&Type::Exp, 2)),
        &Rc::new(denote_type(&Type::Exp, 2)),
    ));
    let id2 = play_from(&id_pre, &[("@(2)", 0, &[]), ("r.2", 1, &[])]);
    let succ = play_from(&id_pre, &[("@(2)", 0, &[]), ("r.0", 1, &[])]);
    associativity_check(&s, &t, &id2).map_err(|e| format!("triple 1: {}", e))?;
    associativity_check(&s, &t, &succ).map_err(|e| format!("triple 2: {}", e))?;
    associativity_check(&skip_play(1), &skip_play(1), &skip_play(1))
        .map_err(|e| format!("triple 3: {}", e))?;

    let cc = Type::arrow(Type::Com, Type::Com);
    let s1_pre = Rc::new(prearena(
        &Rc::new(denote_type(&Type::Com, 1)),
        &Rc::new(denote_type(&cc, 1)),
    ));
    let s1 = play_from(
        &s1_pre,
        &[
            ("@(*)", 0, &[]),
            ("r.*", 1, &[]),
            ("r.arg.*", 2, &[]),
            ("r.ret.*", 3, &[]),
        ],
    );
    let ctx = Context(vec![("g".to_string(), cc)]);
    let s2_pre = Rc::new(prearena_of_judgment(&ctx, &Type::Com, 1));
    let s2 = play_from(
        &s2_pre,
        &[
            ("@(*)", 0, &[]),
            ("g.arg.*", 1, &[]),
            ("g.ret.*", 2, &[]),
            ("r.*", 1, &[]),
        ],
    );
    let ctx = Context(vec![("z".to_string(), Type::Com)]);
    let s3_pre = Rc::new(prearena_of_judgment(&ctx, &Type::Com, 1));
    let s3 = play_from(&s3_pre, &[("@(*)", 0, &[]), ("r.*", 1, &[])]);
    associativity_check(&s1, &s2, &s3).map_err(|e| format!("triple 4: {}", e))?;

    Ok(format!(
        "{} corpus plays pass every derived check, {} composites validate, 4 triples associate",
        corpus, composites
    ))
}

// --------------------------------------------------------------------------
// 7. Block allocation against first-class allocation on random programs.

fn pick_var(rng: &mut ChaCha8Rng, vars: &[String]) -> Term {
    Term::ident(&vars[rng.gen_range(0..vars.len())])
}

fn gen_exp(rng: &mut ChaCha8Rng, vars: &mut Vec<String>, depth: u32) -> Term {
    if depth == 0 || rng.gen_bool(0.25) {
        return if !vars.is_empty() && rng.gen_bool(0.5) {
            Term::deref(pick_var(rng, vars))
        } else {
            Term::IntLit(rng.gen_range(0..=2))
        };
    }
    match rng.gen_range(0..5) {
        0 => {
            let op = match rng.gen_range(0..3) {
                0 => BinOp::Add,
                1 => BinOp::Sub,
                _ => BinOp::Mul,
            };
            Term::bin(op, gen_exp(rng, vars, depth - 1), gen_exp(rng, vars, depth - 1))
        }
        1 => Term::ite(
            gen_exp(rng, vars, depth - 1),
            gen_exp(rng, vars, depth - 1),
            gen_exp(rng, vars, depth - 1),
        ),
        2 => seq(gen_com(rng, vars, depth - 1), gen_exp(rng, vars, depth - 1)),
        3 => {
            let x = format!("v{}", vars.len());
            vars.push(x.clone());
            let body = gen_exp(rng, vars, depth - 1);
            vars.pop();
            Term::New(x, Box::new(body))
        }
        _ if !vars.is_empty() => Term::deref(pick_var(rng, vars)),
        _ => Term::IntLit(rng.gen_range(0..=2)),
    }
}

fn gen_com(rng: &mut ChaCha8Rng, vars: &mut Vec<String>, depth: u32) -> Term {
    if depth == 0 || rng.gen_bool(0.2) {
        return if vars.is_empty() || rng.gen_bool(0.3) {
            Term::Unit
        } else {
            Term::assign(pick_var(rng, vars), Term::IntLit(rng.gen_range(0..=2)))
        };
    }
    match rng.gen_range(0..6) {
        0 => seq(gen_com(rng, vars, depth - 1), gen_com(rng, vars, depth - 1)),
        1 => Term::ite(
            gen_exp(rng, vars, depth - 1),
            gen_com(rng, vars, depth - 1),
            gen_com(rng, vars, depth - 1),
        ),
        2 => Term::While(
            Box::new(gen_exp(rng, vars, depth - 1)),
            Box::new(gen_com(rng, vars, depth - 1)),
        ),
        3 => {
            let x = format!("v{}", vars.len());
            vars.push(x.clone());
            let body = gen_com(rng, vars, depth - 1);
            vars.pop();
            Term::New(x, Box::new(body))
        }
        4 if !vars.is_empty() => Term::assign(pick_var(rng, vars), gen_exp(rng, vars, depth - 1)),
        _ => Term::Unit,
    }
}

/// Rewrites every block allocation `new x in M` into the first-class form
/// `let x = ref in M`.
fn ref_form(t: &Term) -> Term {
    match t {
        Term::New(x, b) => Term::let_(x, None, Term::Ref, ref_form(b)),
        Term::Unit | Term::IntLit(_) | Term::Ident(_) | Term::Ref | Term::Loc(_) => t.clone(),
        Term::Bin(op, a, b) => Term::bin(*op, ref_form(a), ref_form(b)),
        Term::If(g, tt, ff) => Term::ite(ref_form(g), ref_form(tt), ref_form(ff)),
        Term::Deref(m) => Term::deref(ref_form(m)),
        Term::Assign(a, b) => Term::assign(ref_form(a), ref_form(b)),
        Term::MkVar(r, w) => Term::MkVar(Box::new(ref_form(r)), Box::new(ref_form(w))),
        Term::App(f, a) => Term::app(ref_form(f), ref_form(a)),
        Term::Lambda(x, ty, b) => Term::lambda(x, ty.clone(), ref_form(b)),
        Term::Fix(m) => Term::Fix(Box::new(ref_form(m))),
        Term::While(g, b) => Term::While(Box::new(ref_form(g)), Box::new(ref_form(b))),
        Term::Let(x, ty, a, b) => Term::let_(x, ty.clone(), ref_form(a), ref_form(b)),
    }
}

fn criterion_7() -> Result<String, String> {
    const FUEL7: u64 = 50_000;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut converged = 0;
    let mut diverged = 0;
    for i in 0..200 {
        let mut vars = vec!["v0".to_string()];
        let body = if i % 2 == 0 {
            gen_exp(&mut rng, &mut vars, 4)
        } else {
            gen_com(&mut rng, &mut vars, 4)
        };
        let block = Term::New("v0".to_string(), Box::new(body));
        let first_class = ref_form(&block);
        let ra = eval(&block, Heap::new(), FUEL7, Some(N));
        let rb = eval(&first_class, Heap::new(), FUEL7, Some(N));
        match (ra, rb) {
            (EvalResult::Value(va, _), EvalResult::Value(vb, _)) => {
                if va != vb {
                    return Err(format!("values differ on {}", block));
                }
                converged += 1;
            }
            (EvalResult::OutOfFuel, EvalResult::OutOfFuel) => diverged += 1,
            (EvalResult::Stuck(m), _) | (_, EvalResult::Stuck(m)) => {
                return Err(format!("stuck ({}) on {}", m, block));
            }
            _ => return Err(format!("convergence differs on {}", block)),
        }
    }
    if converged == 0 || diverged == 0 {
        return Err(format!(
            "degenerate corpus: {} converged, {} diverged",
            converged, diverged
        ));
    }
    Ok(format!(
        "200 programs agree under both allocators ({} converge, {} diverge)",
        converged, diverged
    ))
}
