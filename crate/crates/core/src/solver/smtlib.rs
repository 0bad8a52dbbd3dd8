//! SMT-LIB 2 text: printing queries and parsing the subset the printer
//! emits, plus the common extras (`let`, `store`, `distinct`, `=>`, ...).

use std::collections::HashMap;
use std::fmt::Write;

use thiserror::Error;

use super::term::{ArrayId, BvOp, BvPred, Query, QueryKind, Sort, Term, TermId};

fn sort_str(s: Sort) -> String {
    match s {
        Sort::Bool => "Bool".into(),
        Sort::Bv(w) => format!("(_ BitVec {w})"),
    }
}

fn bv_literal(width: u32, value: u64) -> String {
    if width.is_multiple_of(4) {
        format!("#x{:0>1$x}", value, (width / 4) as usize)
    } else {
        format!("#b{:0>1$b}", value, width as usize)
    }
}

fn quote_symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c));
    if simple {
        name.to_string()
    } else {
        format!("|{name}|")
    }
}

/// Renders `q` as a complete SMT-LIB script ending in `(check-sat)` and
/// `(get-model)`. Subterms referenced more than once become `define-fun`s.
pub fn print_query(q: &Query) -> String {
    let n = q.num_terms();
    let mut refs = vec![0u32; n];
    let mut reachable = vec![false; n];
    let mut stack: Vec<TermId> = q.assertions.clone();
    for &a in &q.assertions {
        refs[a.0 as usize] += 1;
    }
    while let Some(t) = stack.pop() {
        if std::mem::replace(&mut reachable[t.0 as usize], true) {
            continue;
        }
        for c in children(q.term(t)) {
            refs[c.0 as usize] += 1;
            stack.push(c);
        }
    }
    let mut out = String::new();
    out.push_str("(set-option :produce-models true)\n(set-logic QF_ABV)\n");
    for v in &q.vars {
        let _ = writeln!(out, "(declare-fun {} () {})", quote_symbol(&v.name), sort_str(v.sort));
    }
    for a in &q.arrays {
        let _ = writeln!(
            out,
            "(declare-fun {} () (Array (_ BitVec {}) (_ BitVec {})))",
            quote_symbol(&a.name),
            a.index_width,
            a.elem_width
        );
    }
    let mut named: Vec<Option<u32>> = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        let t = TermId(i as u32);
        let leaf = matches!(q.term(t), Term::Var(_) | Term::BvConst { .. } | Term::BoolConst(_));
        if reachable[i] && refs[i] > 1 && !leaf {
            let mut body = String::new();
            term_str(q, t, &named, &mut body);
            let _ = writeln!(out, "(define-fun t.{next} () {} {body})", sort_str(q.sort(t)));
            named[i] = Some(next);
            next += 1;
        }
    }
    for &a in &q.assertions {
        let mut body = String::new();
        if let Some(k) = named[a.0 as usize] {
            let _ = write!(body, "t.{k}");
        } else {
            term_str(q, a, &named, &mut body);
        }
        let _ = writeln!(out, "(assert {body})");
    }
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

fn children(t: &Term) -> Vec<TermId> {
    match t {
        Term::BoolConst(_) | Term::BvConst { .. } | Term::Var(_) => vec![],
        Term::Not(a) | Term::BvNot(a) => vec![*a],
        Term::Extract { a, .. } | Term::ZeroExt { a, .. } | Term::SignExt { a, .. } => vec![*a],
        Term::Select { index, .. } => vec![*index],
        Term::And(v) | Term::Or(v) => v.clone(),
        Term::Eq(a, b) | Term::Pred(_, a, b) | Term::Bin(_, a, b) | Term::Concat(a, b) => vec![*a, *b],
        Term::Ite(c, a, b) => vec![*c, *a, *b],
    }
}

fn term_str(q: &Query, t: TermId, named: &[Option<u32>], out: &mut String) {
    let sub = |c: TermId, out: &mut String| {
        out.push(' ');
        if let Some(k) = named[c.0 as usize] {
            let _ = write!(out, "t.{k}");
        } else {
            term_str(q, c, named, out);
        }
    };
    match q.term(t) {
        Term::BoolConst(b) => out.push_str(if *b { "true" } else { "false" }),
        Term::BvConst { width, value } => out.push_str(&bv_literal(*width, *value)),
        Term::Var(v) => out.push_str(&quote_symbol(&q.var_decl(*v).name)),
        Term::Not(a) => {
            out.push_str("(not");
            sub(*a, out);
            out.push(')');
        }
        Term::And(items) | Term::Or(items) => {
            out.push_str(if matches!(q.term(t), Term::And(_)) { "(and" } else { "(or" });
            for &c in items {
                sub(c, out);
            }
            out.push(')');
        }
        Term::Eq(a, b) => {
            out.push_str("(=");
            sub(*a, out);
            sub(*b, out);
            out.push(')');
        }
        Term::Pred(p, a, b) => {
            let _ = write!(out, "({}", p.smt_name());
            sub(*a, out);
            sub(*b, out);
            out.push(')');
        }
        Term::Select { array, index } => {
            let _ = write!(out, "(select {}", quote_symbol(&q.array_decl(*array).name));
            sub(*index, out);
            out.push(')');
        }
        Term::Bin(op, a, b) => {
            let _ = write!(out, "({}", op.smt_name());
            sub(*a, out);
            sub(*b, out);
            out.push(')');
        }
        Term::BvNot(a) => {
            out.push_str("(bvnot");
            sub(*a, out);
            out.push(')');
        }
        Term::Extract { hi, lo, a } => {
            let _ = write!(out, "((_ extract {hi} {lo})");
            sub(*a, out);
            out.push(')');
        }
        Term::Concat(a, b) => {
            out.push_str("(concat");
            sub(*a, out);
            sub(*b, out);
            out.push(')');
        }
        Term::ZeroExt { extra, a } => {
            let _ = write!(out, "((_ zero_extend {extra})");
            sub(*a, out);
            out.push(')');
        }
        Term::SignExt { extra, a } => {
            let _ = write!(out, "((_ sign_extend {extra})");
            sub(*a, out);
            out.push(')');
        }
        Term::Ite(c, a, b) => {
            out.push_str("(ite");
            sub(*c, out);
            sub(*a, out);
            sub(*b, out);
            out.push(')');
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SmtParseError {
    #[error("unexpected end of input")]
    Eof,
    #[error("unbalanced parenthesis")]
    Unbalanced,
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("unsupported construct `{0}`")]
    Unsupported(String),
    #[error("sort mismatch in `{0}`")]
    Sort(String),
    #[error("malformed {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sx {
    Atom(String),
    List(Vec<Sx>),
}

impl Sx {
    fn atom(&self) -> Option<&str> {
        match self {
            Sx::Atom(a) => Some(a),
            Sx::List(_) => None,
        }
    }
}

/// Reads SMT-LIB s-expressions (with `;` comments, `|quoted|` symbols and
/// string literals).
pub fn read_sexprs(src: &str) -> Result<Vec<Sx>, SmtParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut stack: Vec<Vec<Sx>> = vec![Vec::new()];
    while i < chars.len() {
        let c = chars[i];
        match c {
            ';' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => {
                stack.push(Vec::new());
                i += 1;
            }
            ')' => {
                let done = stack.pop().ok_or(SmtParseError::Unbalanced)?;
                stack.last_mut().ok_or(SmtParseError::Unbalanced)?.push(Sx::List(done));
                i += 1;
            }
            '|' => {
                let start = i + 1;
                i = start;
                while i < chars.len() && chars[i] != '|' {
                    i += 1;
                }
                if i >= chars.len() {
                    return Err(SmtParseError::Eof);
                }
                let s: String = chars[start..i].iter().collect();
                stack.last_mut().ok_or(SmtParseError::Unbalanced)?.push(Sx::Atom(s));
                i += 1;
            }
            '"' => {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i] != '"' {
                    i += 1;
                }
                if i >= chars.len() {
                    return Err(SmtParseError::Eof);
                }
                i += 1;
                let s: String = chars[start..i].iter().collect();
                stack.last_mut().ok_or(SmtParseError::Unbalanced)?.push(Sx::Atom(s));
            }
            c if c.is_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"();|\"".contains(chars[i]) {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                stack.last_mut().ok_or(SmtParseError::Unbalanced)?.push(Sx::Atom(s));
            }
        }
    }
    if stack.len() != 1 {
        return Err(SmtParseError::Eof);
    }
    Ok(stack.pop().unwrap_or_default())
}

/// Parses a bitvector literal: `#x..`, `#b..` or `(_ bvN w)`.
pub fn parse_bv_literal(e: &Sx) -> Option<(u32, u64)> {
    match e {
        Sx::Atom(a) => {
            if let Some(h) = a.strip_prefix("#x") {
                Some(((h.len() * 4) as u32, u64::from_str_radix(h, 16).ok()?))
            } else if let Some(b) = a.strip_prefix("#b") {
                Some((b.len() as u32, u64::from_str_radix(b, 2).ok()?))
            } else {
                None
            }
        }
        Sx::List(items) => match items.as_slice() {
            [Sx::Atom(u), Sx::Atom(v), Sx::Atom(w)] if u == "_" && v.starts_with("bv") => {
                let width: u32 = w.parse().ok()?;
                let value: u128 = v[2..].parse().ok()?;
                Some((width, (value & crate::symexpr::ops::mask(width) as u128) as u64))
            }
            _ => None,
        },
    }
}

fn parse_sort(e: &Sx) -> Result<Option<Sort>, SmtParseError> {
    match e {
        Sx::Atom(a) if a == "Bool" => Ok(Some(Sort::Bool)),
        Sx::List(items) => match items.as_slice() {
            [Sx::Atom(u), Sx::Atom(b), Sx::Atom(w)] if u == "_" && b == "BitVec" => w
                .parse()
                .map(|w| Some(Sort::Bv(w)))
                .map_err(|_| SmtParseError::Malformed("sort".into())),
            [Sx::Atom(a), _, _] if a == "Array" => Ok(None),
            _ => Err(SmtParseError::Unsupported(format!("{e:?}"))),
        },
        _ => Err(SmtParseError::Unsupported(format!("{e:?}"))),
    }
}

fn array_widths(e: &Sx) -> Option<(u32, u32)> {
    let Sx::List(items) = e else { return None };
    let [Sx::Atom(a), i, v] = items.as_slice() else { return None };
    if a != "Array" {
        return None;
    }
    match (parse_sort(i).ok()??, parse_sort(v).ok()??) {
        (Sort::Bv(iw), Sort::Bv(vw)) => Some((iw, vw)),
        _ => None,
    }
}

#[derive(Clone, Debug)]
enum ArrayVal {
    Decl(ArrayId),
    Store(Box<ArrayVal>, TermId, TermId),
    Ite(TermId, Box<ArrayVal>, Box<ArrayVal>),
}

#[derive(Clone, Debug)]
enum Val {
    Term(TermId),
    Array(ArrayVal),
}

/// Result of parsing a script: the assertions as a query plus whether it
/// asked for a model.
pub struct Script {
    pub query: Query,
    pub get_model: bool,
    pub check_sat: bool,
}

struct Parser {
    q: Query,
    scopes: Vec<HashMap<String, Val>>,
}

impl Parser {
    fn lookup(&mut self, name: &str) -> Option<Val> {
        for s in self.scopes.iter().rev() {
            if let Some(v) = s.get(name) {
                return Some(v.clone());
            }
        }
        if let Some(v) = self.q.lookup_var(name) {
            return Some(Val::Term(self.q.mk(Term::Var(v))));
        }
        self.q.lookup_array(name).map(|a| Val::Array(ArrayVal::Decl(a)))
    }

    fn term(&mut self, e: &Sx) -> Result<TermId, SmtParseError> {
        match self.val(e)? {
            Val::Term(t) => Ok(t),
            Val::Array(_) => Err(SmtParseError::Sort(format!("{e:?}"))),
        }
    }

    fn bv_width(&self, t: TermId, ctx: &str) -> Result<u32, SmtParseError> {
        match self.q.sort(t) {
            Sort::Bv(w) => Ok(w),
            Sort::Bool => Err(SmtParseError::Sort(ctx.into())),
        }
    }

    fn array(&mut self, e: &Sx) -> Result<ArrayVal, SmtParseError> {
        match self.val(e)? {
            Val::Array(a) => Ok(a),
            Val::Term(_) => Err(SmtParseError::Sort(format!("{e:?}"))),
        }
    }

    fn select(&mut self, a: &ArrayVal, index: TermId) -> TermId {
        match a {
            ArrayVal::Decl(id) => self.q.select(*id, index),
            ArrayVal::Store(prev, i, v) => {
                let rest = self.select(prev, index);
                let hit = self.q.eq(*i, index);
                self.q.ite(hit, *v, rest)
            }
            ArrayVal::Ite(c, a, b) => {
                let x = self.select(a, index);
                let y = self.select(b, index);
                self.q.ite(*c, x, y)
            }
        }
    }

    fn val(&mut self, e: &Sx) -> Result<Val, SmtParseError> {
        if let Some((w, v)) = parse_bv_literal(e) {
            return Ok(Val::Term(self.q.bv(w, v)));
        }
        match e {
            Sx::Atom(a) => match a.as_str() {
                "true" => Ok(Val::Term(self.q.bool(true))),
                "false" => Ok(Val::Term(self.q.bool(false))),
                _ => self.lookup(a).ok_or_else(|| SmtParseError::UnknownSymbol(a.clone())),
            },
            Sx::List(items) => {
                let Some(head) = items.first() else {
                    return Err(SmtParseError::Malformed("empty application".into()));
                };
                let args = &items[1..];
                if let Sx::List(h) = head {
                    return self.indexed(h, args).map(Val::Term);
                }
                let op = head.atom().unwrap_or_default().to_string();
                self.apply(&op, args)
            }
        }
    }

    fn indexed(&mut self, h: &[Sx], args: &[Sx]) -> Result<TermId, SmtParseError> {
        let name = h.get(1).and_then(Sx::atom).unwrap_or_default().to_string();
        let nums: Vec<u32> = h[2..].iter().filter_map(|x| x.atom()?.parse().ok()).collect();
        let [a] = args else {
            return Err(SmtParseError::Malformed(name));
        };
        let a = self.term(a)?;
        match (name.as_str(), nums.as_slice()) {
            ("extract", [hi, lo]) => Ok(self.q.extract(*hi, *lo, a)),
            ("zero_extend", [k]) => Ok(if *k == 0 { a } else { self.q.mk(Term::ZeroExt { extra: *k, a }) }),
            ("sign_extend", [k]) => Ok(if *k == 0 { a } else { self.q.mk(Term::SignExt { extra: *k, a }) }),
            _ => Err(SmtParseError::Unsupported(name)),
        }
    }

    fn apply(&mut self, op: &str, args: &[Sx]) -> Result<Val, SmtParseError> {
        if op == "let" {
            let [Sx::List(binds), body] = args else {
                return Err(SmtParseError::Malformed("let".into()));
            };
            let mut scope = HashMap::new();
            for b in binds {
                let Sx::List(pair) = b else {
                    return Err(SmtParseError::Malformed("let binding".into()));
                };
                let [Sx::Atom(name), e] = pair.as_slice() else {
                    return Err(SmtParseError::Malformed("let binding".into()));
                };
                scope.insert(name.clone(), self.val(e)?);
            }
            self.scopes.push(scope);
            let r = self.val(body);
            self.scopes.pop();
            return r;
        }
        if op == "store" {
            let [a, i, v] = args else {
                return Err(SmtParseError::Malformed("store".into()));
            };
            let a = self.array(a)?;
            let (i, v) = (self.term(i)?, self.term(v)?);
            return Ok(Val::Array(ArrayVal::Store(Box::new(a), i, v)));
        }
        if op == "select" {
            let [a, i] = args else {
                return Err(SmtParseError::Malformed("select".into()));
            };
            let a = self.array(a)?;
            let i = self.term(i)?;
            return Ok(Val::Term(self.select(&a, i)));
        }
        if op == "ite" {
            let [c, a, b] = args else {
                return Err(SmtParseError::Malformed("ite".into()));
            };
            let c = self.term(c)?;
            return Ok(match (self.val(a)?, self.val(b)?) {
                (Val::Term(x), Val::Term(y)) => Val::Term(self.q.ite(c, x, y)),
                (Val::Array(x), Val::Array(y)) => Val::Array(ArrayVal::Ite(c, Box::new(x), Box::new(y))),
                _ => return Err(SmtParseError::Sort("ite".into())),
            });
        }
        let ts: Vec<TermId> = args.iter().map(|a| self.term(a)).collect::<Result<_, _>>()?;
        let q = &mut self.q;
        let two = |ts: &[TermId]| -> Result<(TermId, TermId), SmtParseError> {
            match ts {
                [a, b] => Ok((*a, *b)),
                _ => Err(SmtParseError::Malformed(op.to_string())),
            }
        };
        let bvop = |name: &str| -> Option<BvOp> {
            Some(match name {
                "bvadd" => BvOp::Add,
                "bvsub" => BvOp::Sub,
                "bvmul" => BvOp::Mul,
                "bvudiv" => BvOp::UDiv,
                "bvurem" => BvOp::URem,
                "bvsdiv" => BvOp::SDiv,
                "bvsrem" => BvOp::SRem,
                "bvand" => BvOp::And,
                "bvor" => BvOp::Or,
                "bvxor" => BvOp::Xor,
                "bvshl" => BvOp::Shl,
                "bvlshr" => BvOp::LShr,
                "bvashr" => BvOp::AShr,
                _ => return None,
            })
        };
        let t = match op {
            "not" => match ts.as_slice() {
                [a] => q.not(*a),
                _ => return Err(SmtParseError::Malformed("not".into())),
            },
            "and" => q.and(ts),
            "or" => q.or(ts),
            "=>" => {
                let (a, b) = two(&ts)?;
                let na = q.not(a);
                q.or(vec![na, b])
            }
            "xor" => {
                let (a, b) = two(&ts)?;
                let e = q.eq(a, b);
                q.not(e)
            }
            "=" => {
                let eqs: Vec<TermId> = ts.windows(2).map(|w| q.eq(w[0], w[1])).collect();
                q.and(eqs)
            }
            "distinct" => {
                let mut ne = Vec::new();
                for i in 0..ts.len() {
                    for j in i + 1..ts.len() {
                        let e = q.eq(ts[i], ts[j]);
                        ne.push(q.not(e));
                    }
                }
                q.and(ne)
            }
            "bvult" | "bvule" | "bvslt" | "bvsle" | "bvugt" | "bvuge" | "bvsgt" | "bvsge" => {
                let (a, b) = two(&ts)?;
                let (p, a, b) = match op {
                    "bvult" => (BvPred::Ult, a, b),
                    "bvule" => (BvPred::Ule, a, b),
                    "bvslt" => (BvPred::Slt, a, b),
                    "bvsle" => (BvPred::Sle, a, b),
                    "bvugt" => (BvPred::Ult, b, a),
                    "bvuge" => (BvPred::Ule, b, a),
                    "bvsgt" => (BvPred::Slt, b, a),
                    _ => (BvPred::Sle, b, a),
                };
                q.pred(p, a, b)
            }
            "bvnot" => match ts.as_slice() {
                [a] => q.mk(Term::BvNot(*a)),
                _ => return Err(SmtParseError::Malformed("bvnot".into())),
            },
            "bvneg" => match ts.as_slice() {
                [a] => {
                    let w = q.sort(*a).bv_width();
                    let z = q.bv(w, 0);
                    q.bin(BvOp::Sub, z, *a)
                }
                _ => return Err(SmtParseError::Malformed("bvneg".into())),
            },
            "concat" => {
                let (a, b) = two(&ts)?;
                q.mk(Term::Concat(a, b))
            }
            other => match bvop(other) {
                Some(o) => {
                    // Left-associative for n-ary uses of associative operators.
                    let mut it = ts.into_iter();
                    let first = it.next().ok_or_else(|| SmtParseError::Malformed(other.into()))?;
                    it.fold(first, |acc, t| q.bin(o, acc, t))
                }
                None => return Err(SmtParseError::Unsupported(other.to_string())),
            },
        };
        self.check_sorts(t, op)?;
        Ok(Val::Term(t))
    }

    fn check_sorts(&self, t: TermId, ctx: &str) -> Result<(), SmtParseError> {
        let ok = match self.q.term(t) {
            Term::Eq(a, b) => self.q.sort(*a) == self.q.sort(*b),
            Term::Pred(_, a, b) | Term::Bin(_, a, b) => {
                matches!(self.q.sort(*a), Sort::Bv(_)) && self.q.sort(*a) == self.q.sort(*b)
            }
            Term::Not(a) => self.q.sort(*a) == Sort::Bool,
            Term::And(v) | Term::Or(v) => v.iter().all(|x| self.q.sort(*x) == Sort::Bool),
            Term::Concat(a, b) => self.bv_width(*a, ctx).is_ok() && self.bv_width(*b, ctx).is_ok(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(SmtParseError::Sort(ctx.into()))
        }
    }
}

/// Parses a script of declarations, zero-arity definitions and assertions.
pub fn parse_script(src: &str) -> Result<Script, SmtParseError> {
    let forms = read_sexprs(src)?;
    let mut p = Parser {
        q: Query::new(QueryKind::Feasibility),
        scopes: vec![HashMap::new()],
    };
    let mut script_flags = (false, false);
    for f in &forms {
        let Sx::List(items) = f else {
            return Err(SmtParseError::Malformed("top-level form".into()));
        };
        let cmd = items.first().and_then(Sx::atom).unwrap_or_default();
        match cmd {
            "set-option" | "set-logic" | "set-info" | "exit" | "get-info" | "push" | "pop" => {}
            "check-sat" => script_flags.0 = true,
            "get-model" => script_flags.1 = true,
            "declare-const" | "declare-fun" => {
                let name = items.get(1).and_then(Sx::atom).ok_or(SmtParseError::Malformed(cmd.into()))?;
                let sort = if cmd == "declare-const" {
                    items.get(2)
                } else {
                    match items.get(2) {
                        Some(Sx::List(params)) if params.is_empty() => items.get(3),
                        _ => return Err(SmtParseError::Unsupported("uninterpreted functions".into())),
                    }
                }
                .ok_or(SmtParseError::Malformed(cmd.into()))?;
                match parse_sort(sort)? {
                    Some(s) => {
                        p.q.declare_var(name, s);
                    }
                    None => {
                        let (iw, vw) = array_widths(sort).ok_or(SmtParseError::Unsupported("array sort".into()))?;
                        p.q.declare_array(name, iw, vw);
                    }
                }
            }
            "define-fun" => {
                let [_, Sx::Atom(name), Sx::List(params), _sort, body] = items.as_slice() else {
                    return Err(SmtParseError::Malformed("define-fun".into()));
                };
                if !params.is_empty() {
                    return Err(SmtParseError::Unsupported("define-fun with parameters".into()));
                }
                let v = p.val(body)?;
                p.scopes[0].insert(name.clone(), v);
            }
            "assert" => {
                let [_, e] = items.as_slice() else {
                    return Err(SmtParseError::Malformed("assert".into()));
                };
                let t = p.term(e)?;
                if p.q.sort(t) != Sort::Bool {
                    return Err(SmtParseError::Sort("assert".into()));
                }
                p.q.assert(t);
            }
            other => return Err(SmtParseError::Unsupported(other.to_string())),
        }
    }
    Ok(Script {
        query: p.q,
        check_sat: script_flags.0,
        get_model: script_flags.1,
    })
}
