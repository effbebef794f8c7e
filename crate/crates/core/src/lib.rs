/*!
Contextual equivalence for a finitary, block-structured fragment of
call-by-value Idealized Algol.

The pipeline has two independent routes for comparing open programs:

* the deciding route: rewrite each term to canonical form ([`canon`]),
  translate the canonical form to a family of finite automata over move
  symbols ([`translate`] on top of [`games`] and [`lang`]), and compare the
  automata per initial move;
* the testing route: a big-step interpreter ([`interp`]) driving a bounded
  search for separating program contexts ([`oracle`]).

Between the two sits an executable calculus of plays decorated with stores
([`splays`]): validity conditions, view functions, and composition by
parallel interaction, used to check the game-semantic laws the translation
relies on.

Shared surface types (terms, types, judgments) live in [`syntax`] and are
re-exported here.
*/

pub mod canon;
pub mod games;
pub mod interp;
pub mod lang;
pub mod oracle;
pub mod splays;
pub mod syntax;
pub mod translate;

pub use syntax::{BinOp, Context, Fragment, Judgment, Term, Type};
