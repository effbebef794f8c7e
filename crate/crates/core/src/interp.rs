/*!
Fueled big-step evaluator.

Evaluation follows the standard call-by-value rules with left-to-right state
threading: in every rule with several hypotheses the store coming out of one
premise feeds the next. Values are `skip`, integer literals, locations,
lambdas, and `mkvar` of two lambda values.

Two points worth calling out:

* `new x in M` allocates a zero-initialised cell, runs the body, and then
  drops the cell from the final heap, so block-allocated state never
  escapes; `ref` allocates the same way but the cell stays.
* `while` is evaluated natively by iteration (constant stack), so divergence
  burns fuel rather than the call stack. `fix M` unfolds to
  `fn x => (V (fix V)) x` as usual and recursion depth is bounded by fuel.

Fuel is charged one unit per rule application. In finitary mode all integers
(literals included) are reduced modulo N+1.
*/

use crate::syntax::{Term, Type};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Heap {
    cells: BTreeMap<u64, i64>,
    next: u64,
}

impl Heap {
    pub fn new() -> Heap {
        Heap::default()
    }

    pub fn alloc(&mut self) -> u64 {
        let l = self.next;
        self.next += 1;
        self.cells.insert(l, 0);
        l
    }

    pub fn read(&self, l: u64) -> Option<i64> {
        self.cells.get(&l).copied()
    }

    pub fn write(&mut self, l: u64, v: i64) -> bool {
        match self.cells.get_mut(&l) {
            Some(slot) => {
                *slot = v;
                true
            }
            None => false,
        }
    }

    pub fn drop_cell(&mut self, l: u64) {
        self.cells.remove(&l);
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalResult {
    /// Terminated with a value and the final heap.
    Value(Term, Heap),
    /// Fuel ran out; the program may diverge or just need more fuel.
    OutOfFuel,
    /// No rule applies (open term, read of a dropped cell, ...).
    Stuck(String),
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalResult::Value(v, _) => write!(f, "value {}", v),
            EvalResult::OutOfFuel => write!(f, "out of fuel"),
            EvalResult::Stuck(m) => write!(f, "stuck: {}", m),
        }
    }
}

pub fn is_value(t: &Term) -> bool {
    match t {
        Term::Unit | Term::IntLit(_) | Term::Loc(_) | Term::Lambda(_, _, _) => true,
        Term::MkVar(a, b) => {
            matches!(**a, Term::Lambda(_, _, _)) && matches!(**b, Term::Lambda(_, _, _))
        }
        _ => false,
    }
}

struct Ev {
    fuel: u64,
    modulus: Option<i64>, // Some(N+1) in finitary mode
}

enum Interrupt {
    OutOfFuel,
    Stuck(String),
}

type Res = Result<Term, Interrupt>;

impl Ev {
    fn tick(&mut self) -> Result<(), Interrupt> {
        if self.fuel == 0 {
            Err(Interrupt::OutOfFuel)
        } else {
            self.fuel -= 1;
            Ok(())
        }
    }

    fn norm(&self, v: i64) -> i64 {
        match self.modulus {
            Some(m) => v.rem_euclid(m),
            None => v,
        }
    }

    fn int(&mut self, t: &Term, heap: &mut Heap) -> Result<i64, Interrupt> {
        match self.eval(t, heap)? {
            Term::IntLit(i) => Ok(i),
            other => Err(Interrupt::Stuck(format!("expected integer, got {}", other))),
        }
    }

    fn eval(&mut self, t: &Term, heap: &mut Heap) -> Res {
        self.tick()?;
        match t {
            Term::Unit | Term::Loc(_) | Term::Lambda(_, _, _) => Ok(t.clone()),
            Term::IntLit(i) => Ok(Term::IntLit(self.norm(*i))),
            Term::MkVar(a, b) => {
                let v1 = self.eval(a, heap)?;
                let v2 = self.eval(b, heap)?;
                if !matches!(v1, Term::Lambda(_, _, _)) || !matches!(v2, Term::Lambda(_, _, _)) {
                    return Err(Interrupt::Stuck("mkvar of non-lambda values".into()));
                }
                Ok(Term::MkVar(Box::new(v1), Box::new(v2)))
            }
            Term::Ident(x) => Err(Interrupt::Stuck(format!("free identifier '{}'", x))),
            Term::Bin(op, a, b) => {
                let i1 = self.int(a, heap)?;
                let i2 = self.int(b, heap)?;
                Ok(Term::IntLit(self.norm(op.apply(i1, i2))))
            }
            Term::If(g, tt, ff) => {
                let i = self.int(g, heap)?;
                if i == 0 {
                    self.eval(ff, heap)
                } else {
                    self.eval(tt, heap)
                }
            }
            Term::App(f, a) => {
                let vf = self.eval(f, heap)?;
                let va = self.eval(a, heap)?;
                match vf {
                    Term::Lambda(x, _, body) => {
                        let inst = crate::syntax::substitute(&body, &x, &va);
                        self.eval(&inst, heap)
                    }
                    other => Err(Interrupt::Stuck(format!(
                        "applied non-function value {}",
                        other
                    ))),
                }
            }
            Term::Deref(m) => match self.eval(m, heap)? {
                Term::Loc(l) => match heap.read(l) {
                    Some(i) => Ok(Term::IntLit(i)),
                    None => Err(Interrupt::Stuck("read of a dropped cell".into())),
                },
                Term::MkVar(rd, _) => {
                    let call = Term::app((*rd).clone(), Term::Unit);
                    let i = self.int(&call, heap)?;
                    Ok(Term::IntLit(i))
                }
                other => Err(Interrupt::Stuck(format!("dereferenced {}", other))),
            },
            Term::Assign(m, n) => match self.eval(m, heap)? {
                Term::Loc(l) => {
                    let i = self.int(n, heap)?;
                    if heap.write(l, i) {
                        Ok(Term::Unit)
                    } else {
                        Err(Interrupt::Stuck("write to a dropped cell".into()))
                    }
                }
                Term::MkVar(_, wr) => {
                    let i = self.int(n, heap)?;
                    let call = Term::app((*wr).clone(), Term::IntLit(i));
                    match self.eval(&call, heap)? {
                        Term::Unit => Ok(Term::Unit),
                        other => Err(Interrupt::Stuck(format!(
                            "mkvar write returned {}",
                            other
                        ))),
                    }
                }
                other => Err(Interrupt::Stuck(format!("assigned to {}", other))),
            },
            Term::Fix(m) => {
                let v = self.eval(m, heap)?;
                // V : (t -> t') -> (t -> t'), so the parameter type of the
                // unfolding is the domain of V's own parameter type.
                let dom = match &v {
                    Term::Lambda(_, Type::Arrow(d, _), _) => (**d).clone(),
                    _ => {
                        return Err(Interrupt::Stuck(
                            "fix of a non-functional value".into(),
                        ))
                    }
                };
                let x = crate::syntax::fresh_name();
                let body = Term::app(
                    Term::app(v.clone(), Term::Fix(Box::new(v))),
                    Term::ident(&x),
                );
                Ok(Term::Lambda(x, dom, Box::new(body)))
            }
            Term::New(x, body) => {
                let l = heap.alloc();
                let inst = crate::syntax::substitute(body, x, &Term::Loc(l));
                let r = self.eval(&inst, heap);
                // The block cell is dropped whether or not the body finished.
                heap.drop_cell(l);
                r
            }
            Term::Ref => {
                let l = heap.alloc();
                Ok(Term::Loc(l))
            }
            Term::While(g, body) => {
                loop {
                    let i = self.int(g, heap)?;
                    if i == 0 {
                        return Ok(Term::Unit);
                    }
                    match self.eval(body, heap)? {
                        Term::Unit => {}
                        other => {
                            return Err(Interrupt::Stuck(format!(
                                "loop body returned {}",
                                other
                            )))
                        }
                    }
                    // Each unfolding is a rule application of its own.
                    self.tick()?;
                }
            }
            Term::Let(x, _, bound, body) => {
                // Definitionally (fn x => body) bound.
                let v = self.eval(bound, heap)?;
                let inst = crate::syntax::substitute(body, x, &v);
                self.eval(&inst, heap)
            }
        }
    }
}

/// Evaluate `t` in `heap`. `modulus_n = Some(N)` selects finitary arithmetic
/// modulo N+1. Fuel is charged per rule application.
pub fn eval(t: &Term, heap: Heap, fuel: u64, modulus_n: Option<u32>) -> EvalResult {
    eval_with_cost(t, heap, fuel, modulus_n).0
}

/// Like [`eval`], also reporting the number of steps consumed. On
/// [`EvalResult::OutOfFuel`] the cost equals the whole budget.
pub fn eval_with_cost(
    t: &Term,
    heap: Heap,
    fuel: u64,
    modulus_n: Option<u32>,
) -> (EvalResult, u64) {
    let mut ev = Ev {
        fuel,
        modulus: modulus_n.map(|n| n as i64 + 1),
    };
    let mut h = heap;
    let r = match ev.eval(t, &mut h) {
        Ok(v) => EvalResult::Value(v, h),
        Err(Interrupt::OutOfFuel) => EvalResult::OutOfFuel,
        Err(Interrupt::Stuck(m)) => EvalResult::Stuck(m),
    };
    (r, fuel - ev.fuel)
}

/// `M ⇓`: a closed command converges iff it evaluates to `skip` within fuel.
pub fn converges(t: &Term, fuel: u64, modulus_n: Option<u32>) -> bool {
    matches!(
        eval(t, Heap::new(), fuel, modulus_n),
        EvalResult::Value(Term::Unit, _)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_term;

    const FUEL: u64 = 100_000;

    fn run(src: &str) -> EvalResult {
        let j = parse_term(src).expect("parse");
        eval(&j.term, Heap::new(), FUEL, None)
    }

    fn val(src: &str) -> Term {
        match run(src) {
            EvalResult::Value(v, _) => v,
            other => panic!("{} did not converge: {}", src, other),
        }
    }

    #[test]
    fn values_evaluate_to_themselves() {
        assert_eq!(val("|- skip : com"), Term::Unit);
        assert_eq!(val("|- 7 : exp"), Term::IntLit(7));
        assert!(matches!(
            val("|- fn x:exp => x : exp -> exp"),
            Term::Lambda(_, _, _)
        ));
    }

    #[test]
    fn state_threads_left_to_right() {
        // First operand writes, second reads the written value.
        assert_eq!(val("|- new x in ((x := 1; 0) + !x) : exp"), Term::IntLit(1));
        // Assignment evaluates target before source.
        assert_eq!(
            val("|- new x in (x := (x := 2; !x) + 1; !x) : exp"),
            Term::IntLit(3)
        );
    }

    #[test]
    fn block_cells_are_dropped() {
        match run("|- new x in (x := 1; !x) : exp") {
            EvalResult::Value(v, h) => {
                assert_eq!(v, Term::IntLit(1));
                assert!(h.is_empty());
            }
            other => panic!("unexpected {}", other),
        }
        // ref leaks its cell into the final heap.
        match run("|- let x = ref in (x := 2; !x) : exp") {
            EvalResult::Value(v, h) => {
                assert_eq!(v, Term::IntLit(2));
                assert_eq!(h.len(), 1);
            }
            other => panic!("unexpected {}", other),
        }
    }

    #[test]
    fn new_and_ref_agree_at_base_type() {
        let a = val("|- new x in (x := 1; x := !x + 1; !x) : exp");
        let b = val("|- let x = ref in (x := 1; x := !x + 1; !x) : exp");
        assert_eq!(a, b);
    }

    #[test]
    fn bad_variables_route_through_methods() {
        // Reads ignore writes entirely for this mkvar.
        assert_eq!(
            val("|- !mkvar(fn u:com => 5, fn v:exp => skip) : exp"),
            Term::IntLit(5)
        );
        // Writes can target a real cell through the write method.
        assert_eq!(
            val("|- new c in (let m = mkvar(fn u:com => !c, fn v:exp => c := v + v) in \
                 (m := 3; !m)) : exp"),
            Term::IntLit(6)
        );
    }

    #[test]
    fn conditionals_branch_on_zero() {
        assert_eq!(val("|- if 0 then 1 else 2 : exp"), Term::IntLit(2));
        assert_eq!(val("|- if 5 then 1 else 2 : exp"), Term::IntLit(1));
    }

    #[test]
    fn while_loops_terminate_and_count() {
        assert_eq!(
            val("|- new x in (x := 5; new acc in (while !x do (acc := !acc + !x; x := !x - 1); \
                 !acc)) : exp"),
            Term::IntLit(15)
        );
    }

    #[test]
    fn fix_computes_factorial() {
        assert_eq!(
            val("|- (fix (fn k:exp->exp => fn n:exp => if n then n * k (n - 1) else 1)) 4 : exp"),
            Term::IntLit(24)
        );
    }

    #[test]
    fn divergence_exhausts_fuel() {
        assert_eq!(run("|- while 1 do skip : com"), EvalResult::OutOfFuel);
        assert!(!converges(
            &parse_term("|- while 1 do skip : com").unwrap().term,
            10_000,
            None
        ));
        assert!(converges(
            &parse_term("|- skip; skip : com").unwrap().term,
            10_000,
            None
        ));
    }

    #[test]
    fn finitary_mode_wraps_modulo() {
        let j = parse_term("|- 2 + 2 : exp").unwrap();
        match eval(&j.term, Heap::new(), FUEL, Some(2)) {
            EvalResult::Value(v, _) => assert_eq!(v, Term::IntLit(1)), // 4 mod 3
            other => panic!("unexpected {}", other),
        }
        let j = parse_term("|- 5 : exp").unwrap();
        match eval(&j.term, Heap::new(), FUEL, Some(2)) {
            EvalResult::Value(v, _) => assert_eq!(v, Term::IntLit(2)), // 5 mod 3
            other => panic!("unexpected {}", other),
        }
        let j = parse_term("|- 0 - 1 : exp").unwrap();
        match eval(&j.term, Heap::new(), FUEL, Some(2)) {
            EvalResult::Value(v, _) => assert_eq!(v, Term::IntLit(2)),
            other => panic!("unexpected {}", other),
        }
    }

    #[test]
    fn open_terms_get_stuck() {
        let j = parse_term("x:exp |- x + 1 : exp").unwrap();
        assert!(matches!(
            eval(&j.term, Heap::new(), FUEL, None),
            EvalResult::Stuck(_)
        ));
    }

    #[test]
    fn let_is_call_by_value() {
        // The bound effect happens exactly once, before the body.
        assert_eq!(
            val("|- new x in (let y = (x := !x + 1; !x) in y + y) : exp"),
            Term::IntLit(2)
        );
    }
}
