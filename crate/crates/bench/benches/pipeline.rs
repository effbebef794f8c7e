//! Benchmarks for the pieces with nontrivial asymptotics: splay
//! composition, NFA equivalence and the end-to-end equivalence decision.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use iacbv_core::lang::{random_nfa, Symbol};
use iacbv_core::splays::{compose, random_matched_pair};
use iacbv_core::syntax::parse_term;
use iacbv_core::translate::decide_equiv;

fn bench_compose(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pairs: Vec<_> = (0..32)
        .map(|_| {
            let (s, t, _) = random_matched_pair(&mut rng, 2);
            (s, t)
        })
        .collect();
    c.bench_function("compose/32 matched cell pairs", |b| {
        b.iter(|| {
            for (s, t) in &pairs {
                compose(s, t).unwrap();
            }
        })
    });
}

fn bench_nfa_equivalence(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alphabet: Vec<Symbol> = ["a", "b", "c"].iter().map(|s| Symbol::plain(s)).collect();
    let pairs: Vec<_> = (0..64)
        .map(|_| {
            (
                random_nfa(&mut rng, 5, &alphabet),
                random_nfa(&mut rng, 5, &alphabet),
            )
        })
        .collect();
    c.bench_function("nfa equivalence/64 random 5-state pairs", |b| {
        b.iter(|| pairs.iter().filter(|(x, y)| x.equivalent(y)).count())
    });
}

fn bench_decide(c: &mut Criterion) {
    let cell = parse_term("|- new x in (x := 1; x := 2; !x) : exp").unwrap();
    let two = parse_term("|- 2 : exp").unwrap();
    c.bench_function("decide/cell writes vs literal", |b| {
        b.iter(|| decide_equiv(&cell, &two, 2).unwrap())
    });

    let g1 = parse_term(
        "f:com->com->com |- let g1 = f skip in let g2 = f skip in g1 skip : com",
    )
    .unwrap();
    let g2 = parse_term(
        "f:com->com->com |- let g1 = f skip in let g2 = f skip in g2 skip : com",
    )
    .unwrap();
    c.bench_function("decide/rebinding pair", |b| {
        b.iter(|| decide_equiv(&g1, &g2, 1).unwrap())
    });
}

criterion_group!(benches, bench_compose, bench_nfa_equivalence, bench_decide);
criterion_main!(benches);
