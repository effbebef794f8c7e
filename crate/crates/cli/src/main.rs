//! Command-line front end: parsing, evaluation, canonical forms, arenas,
//! the regular-language translation, the equivalence decision and the
//! context search, one subcommand each.
//!
//! Exit codes: 0 for success or an equivalent verdict, 1 for an
//! inequivalent verdict (or an invalid play, or a found witness context),
//! 2 for any error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::rc::Rc;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};

use iacbv_core::canon::canonicalize;
use iacbv_core::games::prearena_of_judgment;
use iacbv_core::interp::{eval, EvalResult, Heap};
use iacbv_core::lang::Word;
use iacbv_core::oracle::{distinguish, SearchResult};
use iacbv_core::splays::{validate_splay, SMove, SPlay, Store};
use iacbv_core::syntax::parse_term;
use iacbv_core::translate::{decide_equiv, initial_name, translate, Equivalence};
use iacbv_core::Judgment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Dot,
    Machine,
}

#[derive(Parser)]
#[command(
    name = "iacbv",
    about = "Contextual equivalence toolkit for finitary call-by-value Idealized Algol",
    version
)]
struct Cli {
    /// Integer bound: programs compute with values 0..=N
    #[arg(long, global = true, env = "IACBV_N", default_value_t = 2)]
    n: u32,

    /// Interpreter step budget
    #[arg(long, global = true, default_value_t = 10_000)]
    fuel: u64,

    /// Largest context the distinguishing search may try
    #[arg(long = "max-context", global = true, default_value_t = 14)]
    max_context: usize,

    /// Output format for structural dumps
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a judgment's term with the interpreter
    Eval { file: PathBuf },
    /// Print the canonical form of a judgment
    Canon { file: PathBuf },
    /// Print the prearena of a judgment
    Arena { file: PathBuf },
    /// Print the component languages of a judgment
    Translate { file: PathBuf },
    /// Decide equivalence of two judgments over the same context and type
    Check {
        a: PathBuf,
        b: PathBuf,
        /// On an inequivalent verdict, also search for a separating context
        #[arg(long)]
        find_context: bool,
    },
    /// Search for a program context separating two judgments
    Distinguish { a: PathBuf, b: PathBuf },
    /// Check the play conditions on a store-decorated play
    ValidatePlay { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(2)
        }
    }
}

fn load(path: &PathBuf) -> Result<Judgment> {
    let src = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    parse_term(src.trim())
        .map_err(|e| anyhow!("{}: {}", path.display(), e))
}

fn show_word(w: &Word) -> String {
    w.iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.cmd {
        Cmd::Eval { file } => {
            let j = load(file)?;
            match eval(&j.term, Heap::new(), cli.fuel, Some(cli.n)) {
                EvalResult::Value(v, _) => {
                    println!("value {}", v);
                    Ok(ExitCode::SUCCESS)
                }
                EvalResult::OutOfFuel => bail!("out of fuel after {} steps", cli.fuel),
                EvalResult::Stuck(m) => bail!("stuck: {}", m),
            }
        }
        Cmd::Canon { file } => {
            let j = load(file)?;
            let c = canonicalize(&j.ctx, &j.term).map_err(|e| anyhow!("{}", e))?;
            println!("{}", c);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Arena { file } => {
            let j = load(file)?;
            let pre = prearena_of_judgment(&j.ctx, &j.ty, cli.n);
            match cli.format {
                Format::Dot => print!("{}", pre.to_dot()),
                Format::Text | Format::Machine => {
                    for (i, m) in pre.moves.iter().enumerate() {
                        let en: Vec<String> =
                            m.enablers.iter().map(|e| e.to_string()).collect();
                        println!("{}\t{}\t{}\t{}", i, m.name, m.label, en.join(","));
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Translate { file } => {
            let j = load(file)?;
            let c = canonicalize(&j.ctx, &j.term).map_err(|e| anyhow!("{}", e))?;
            let l = translate(&j.ctx, &c, &j.ty, cli.n).map_err(|e| anyhow!("{}", e))?;
            for (key, nfa) in &l.components {
                println!("component {}", initial_name(key));
                match cli.format {
                    Format::Dot => print!("{}", nfa.to_dot()),
                    Format::Text | Format::Machine => print!("{}", nfa.to_text()),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Check { a, b, find_context } => {
            let ja = load(a)?;
            let jb = load(b)?;
            match decide_equiv(&ja, &jb, cli.n).map_err(|e| anyhow!("{}", e))? {
                Equivalence::Equivalent => {
                    println!("EQUIVALENT");
                    Ok(ExitCode::SUCCESS)
                }
                Equivalence::Inequivalent(w) => {
                    match cli.format {
                        Format::Machine => println!("INEQUIVALENT\t{}", show_word(&w)),
                        _ => println!("INEQUIVALENT witness {}", show_word(&w)),
                    }
                    if *find_context {
                        match distinguish(&ja, &jb, cli.max_context, cli.fuel, cli.n) {
                            SearchResult::Witness(tpl) => println!("context {}", tpl),
                            SearchResult::NoneWithinBudget => {
                                println!("no context within budget")
                            }
                        }
                    }
                    Ok(ExitCode::from(1))
                }
            }
        }
        Cmd::Distinguish { a, b } => {
            let ja = load(a)?;
            let jb = load(b)?;
            if ja.ctx != jb.ctx || ja.ty != jb.ty {
                bail!("the two judgments must share a context and type verbatim");
            }
            match distinguish(&ja, &jb, cli.max_context, cli.fuel, cli.n) {
                SearchResult::Witness(tpl) => {
                    println!("context {}", tpl);
                    Ok(ExitCode::from(1))
                }
                SearchResult::NoneWithinBudget => {
                    println!("no context within budget");
                    Ok(ExitCode::SUCCESS)
                }
            }
        }
        Cmd::ValidatePlay { file } => {
            let src = fs::read_to_string(file)
                .with_context(|| format!("reading {}", file.display()))?;
            let play = parse_play(&src, cli.n)?;
            match validate_splay(&play) {
                Ok(()) => {
                    println!("VALID");
                    Ok(ExitCode::SUCCESS)
                }
                Err(v) => {
                    println!("INVALID {}", v);
                    Ok(ExitCode::from(1))
                }
            }
        }
    }
}

/// Play file format: the first non-comment line is a judgment, each
/// following line one move: `<move-name> <justifier> [<store>]` with the
/// justifier 0 for the initial move and otherwise the 1-based index of the
/// justifying move, and the store a comma-separated list `name=value` or
/// `-` for empty.
fn parse_play(src: &str, n: u32) -> Result<SPlay> {
    let mut lines = src
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let head = lines.next().ok_or_else(|| anyhow!("empty play file"))?;
    let j = parse_term(head).map_err(|e| anyhow!("judgment line: {}", e))?;
    let pre = Rc::new(prearena_of_judgment(&j.ctx, &j.ty, n));
    let mut moves = Vec::new();
    for (ln, line) in lines.enumerate() {
        let mut parts = line.split_whitespace();
        let name = parts.next().ok_or_else(|| anyhow!("move {}: empty", ln + 1))?;
        let mv = pre
            .find(name)
            .ok_or_else(|| anyhow!("move {}: unknown move '{}'", ln + 1, name))?;
        let just: usize = parts
            .next()
            .ok_or_else(|| anyhow!("move {}: missing justifier", ln + 1))?
            .parse()
            .map_err(|e| anyhow!("move {}: bad justifier: {}", ln + 1, e))?;
        let store = match parts.next() {
            None | Some("-") => Store::empty(),
            Some(spec) => {
                let mut pairs = Vec::new();
                for item in spec.split(',') {
                    let (nm, val) = item
                        .split_once('=')
                        .ok_or_else(|| anyhow!("move {}: bad store item '{}'", ln + 1, item))?;
                    pairs.push((
                        nm.parse::<u32>()
                            .map_err(|e| anyhow!("move {}: bad store name: {}", ln + 1, e))?,
                        val.parse::<i64>()
                            .map_err(|e| anyhow!("move {}: bad store value: {}", ln + 1, e))?,
                    ));
                }
                Store::from_pairs(&pairs)
            }
        };
        moves.push(SMove {
            mv,
            store,
            justifier: if just == 0 { None } else { Some(just - 1) },
        });
    }
    Ok(SPlay { pre, moves })
}
