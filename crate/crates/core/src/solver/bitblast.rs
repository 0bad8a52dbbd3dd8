//! Bit-blasting of a [`Query`] to CNF, solved with varisat.
//!
//! Gates are Tseitin-encoded with constant propagation and structural
//! caching. Array reads are eliminated by Ackermann expansion: each distinct
//! `select` gets fresh value bits, and reads of one array at equal indices
//! are constrained to agree.

use std::collections::HashMap;

use varisat::{ExtendFormula, Lit, Solver};

use super::model::{Model, Status};
use super::term::{ArrayId, BvOp, BvPred, Query, Sort, Term, TermId};

#[derive(Clone, Debug)]
enum Blasted {
    Bool(Lit),
    Bv(Vec<Lit>),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Gate {
    And(Lit, Lit),
    Xor(Lit, Lit),
    Ite(Lit, Lit, Lit),
}

struct Blaster<'s> {
    sat: Solver<'s>,
    t: Lit,
    gates: HashMap<Gate, Lit>,
    memo: HashMap<TermId, Blasted>,
    selects: Vec<(ArrayId, Vec<Lit>, Vec<Lit>)>,
}

impl<'s> Blaster<'s> {
    fn new() -> Self {
        let mut sat = Solver::new();
        let t = sat.new_lit();
        sat.add_clause(&[t]);
        Blaster {
            sat,
            t,
            gates: HashMap::new(),
            memo: HashMap::new(),
            selects: Vec::new(),
        }
    }

    fn f(&self) -> Lit {
        !self.t
    }

    fn konst(&self, b: bool) -> Lit {
        if b {
            self.t
        } else {
            self.f()
        }
    }

    fn and(&mut self, a: Lit, b: Lit) -> Lit {
        let (t, f) = (self.t, self.f());
        if a == f || b == f || a == !b {
            return f;
        }
        if a == t || a == b {
            return b;
        }
        if b == t {
            return a;
        }
        let key = if a < b { Gate::And(a, b) } else { Gate::And(b, a) };
        if let Some(&g) = self.gates.get(&key) {
            return g;
        }
        let g = self.sat.new_lit();
        self.sat.add_clause(&[!g, a]);
        self.sat.add_clause(&[!g, b]);
        self.sat.add_clause(&[g, !a, !b]);
        self.gates.insert(key, g);
        g
    }

    fn or(&mut self, a: Lit, b: Lit) -> Lit {
        !self.and(!a, !b)
    }

    fn xor(&mut self, a: Lit, b: Lit) -> Lit {
        let (t, f) = (self.t, self.f());
        if a == f {
            return b;
        }
        if b == f {
            return a;
        }
        if a == t {
            return !b;
        }
        if b == t {
            return !a;
        }
        if a == b {
            return f;
        }
        if a == !b {
            return t;
        }
        // Normalize polarities: xor(!a, b) = !xor(a, b).
        let mut neg = false;
        let (mut a, mut b) = (a, b);
        if !a.is_positive() {
            a = !a;
            neg = !neg;
        }
        if !b.is_positive() {
            b = !b;
            neg = !neg;
        }
        let key = if a < b { Gate::Xor(a, b) } else { Gate::Xor(b, a) };
        let g = match self.gates.get(&key) {
            Some(&g) => g,
            None => {
                let g = self.sat.new_lit();
                self.sat.add_clause(&[!g, a, b]);
                self.sat.add_clause(&[!g, !a, !b]);
                self.sat.add_clause(&[g, !a, b]);
                self.sat.add_clause(&[g, a, !b]);
                self.gates.insert(key, g);
                g
            }
        };
        if neg {
            !g
        } else {
            g
        }
    }

    fn ite(&mut self, c: Lit, x: Lit, y: Lit) -> Lit {
        if c == self.t || x == y {
            return x;
        }
        if c == self.f() {
            return y;
        }
        if x == !y {
            return !self.xor(c, x);
        }
        if x == self.t {
            return self.or(c, y);
        }
        if x == self.f() {
            return self.and(!c, y);
        }
        if y == self.t {
            return self.or(!c, x);
        }
        if y == self.f() {
            return self.and(c, x);
        }
        let key = Gate::Ite(c, x, y);
        if let Some(&g) = self.gates.get(&key) {
            return g;
        }
        let g = self.sat.new_lit();
        self.sat.add_clause(&[!c, !x, g]);
        self.sat.add_clause(&[!c, x, !g]);
        self.sat.add_clause(&[c, !y, g]);
        self.sat.add_clause(&[c, y, !g]);
        self.sat.add_clause(&[!x, !y, g]);
        self.sat.add_clause(&[x, y, !g]);
        self.gates.insert(key, g);
        g
    }

    fn and_all(&mut self, items: &[Lit]) -> Lit {
        items.iter().fold(self.t, |acc, &x| self.and(acc, x))
    }

    fn or_all(&mut self, items: &[Lit]) -> Lit {
        items.iter().fold(self.f(), |acc, &x| self.or(acc, x))
    }

    fn bv_eq(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let bits: Vec<Lit> = a.iter().zip(b).map(|(&x, &y)| !self.xor(x, y)).collect();
        self.and_all(&bits)
    }

    fn add(&mut self, a: &[Lit], b: &[Lit], carry_in: Lit) -> (Vec<Lit>, Lit) {
        let mut c = carry_in;
        let mut out = Vec::with_capacity(a.len());
        for (&x, &y) in a.iter().zip(b) {
            let p = self.xor(x, y);
            out.push(self.xor(p, c));
            let g = self.and(x, y);
            let pc = self.and(p, c);
            c = self.or(g, pc);
        }
        (out, c)
    }

    fn neg_bits(&mut self, a: &[Lit]) -> Vec<Lit> {
        let inv: Vec<Lit> = a.iter().map(|&x| !x).collect();
        let zero = vec![self.f(); a.len()];
        self.add(&inv, &zero, self.t).0
    }

    fn sub(&mut self, a: &[Lit], b: &[Lit]) -> (Vec<Lit>, Lit) {
        let inv: Vec<Lit> = b.iter().map(|&x| !x).collect();
        // The carry out of a + !b + 1 is set iff a >= b (unsigned).
        self.add(a, &inv, self.t)
    }

    fn ult(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let (_, no_borrow) = self.sub(a, b);
        !no_borrow
    }

    fn slt(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let n = a.len();
        let mut a2 = a.to_vec();
        let mut b2 = b.to_vec();
        a2[n - 1] = !a2[n - 1];
        b2[n - 1] = !b2[n - 1];
        self.ult(&a2, &b2)
    }

    fn mul(&mut self, a: &[Lit], b: &[Lit]) -> Vec<Lit> {
        let n = a.len();
        let mut acc = vec![self.f(); n];
        for i in 0..n {
            if b[i] == self.f() {
                continue;
            }
            let partial: Vec<Lit> = (0..n - i).map(|j| self.and(a[j], b[i])).collect();
            let (sum, _) = self.add(&acc[i..], &partial, self.f());
            acc.splice(i.., sum);
        }
        acc
    }

    /// Restoring division; a zero divisor yields an all-ones quotient and
    /// the dividend as remainder, as in SMT-LIB.
    fn udivrem(&mut self, a: &[Lit], b: &[Lit]) -> (Vec<Lit>, Vec<Lit>) {
        let n = a.len();
        let mut r = vec![self.f(); n];
        let mut q = vec![self.f(); n];
        let mut bx = b.to_vec();
        bx.push(self.f());
        for i in (0..n).rev() {
            // shifted = (r << 1) | a[i], kept at n + 1 bits.
            let mut shifted = Vec::with_capacity(n + 1);
            shifted.push(a[i]);
            shifted.extend_from_slice(&r);
            let (diff, ge) = self.sub(&shifted, &bx);
            q[i] = ge;
            r = (0..n).map(|k| self.ite(ge, diff[k], shifted[k])).collect();
        }
        (q, r)
    }

    fn abs(&mut self, a: &[Lit]) -> Vec<Lit> {
        let s = a[a.len() - 1];
        let neg = self.neg_bits(a);
        a.iter().zip(&neg).map(|(&x, &y)| self.ite(s, y, x)).collect()
    }

    fn cond_neg(&mut self, c: Lit, a: &[Lit]) -> Vec<Lit> {
        let neg = self.neg_bits(a);
        a.iter().zip(&neg).map(|(&x, &y)| self.ite(c, y, x)).collect()
    }

    fn shift(&mut self, op: BvOp, a: &[Lit], s: &[Lit]) -> Vec<Lit> {
        let n = a.len();
        let fill = if op == BvOp::AShr { a[n - 1] } else { self.f() };
        let mut cur = a.to_vec();
        let mut k = 0;
        while k < s.len() && (1usize << k) < n {
            let dist = 1usize << k;
            let next: Vec<Lit> = (0..n)
                .map(|i| {
                    let moved = match op {
                        BvOp::Shl => {
                            if i >= dist {
                                cur[i - dist]
                            } else {
                                self.f()
                            }
                        }
                        _ => {
                            if i + dist < n {
                                cur[i + dist]
                            } else {
                                fill
                            }
                        }
                    };
                    self.ite(s[k], moved, cur[i])
                })
                .collect();
            cur = next;
            k += 1;
        }
        // Any shift amount of at least n clears (or sign-fills) everything.
        let wn: Vec<Lit> = (0..s.len())
            .map(|i| self.konst(i < 64 && ((n as u64) >> i) & 1 == 1))
            .collect();
        let big = if s.len() < 64 && (n as u128) >= (1u128 << s.len()) {
            self.f()
        } else {
            !self.ult(s, &wn)
        };
        cur.iter().map(|&x| self.ite(big, fill, x)).collect()
    }

    fn bits(&mut self, q: &Query, t: TermId) -> Vec<Lit> {
        match self.blast(q, t) {
            Blasted::Bv(v) => v,
            Blasted::Bool(_) => panic!("expected bitvector term"),
        }
    }

    fn lit(&mut self, q: &Query, t: TermId) -> Lit {
        match self.blast(q, t) {
            Blasted::Bool(l) => l,
            Blasted::Bv(_) => panic!("expected boolean term"),
        }
    }

    fn blast(&mut self, q: &Query, t: TermId) -> Blasted {
        if let Some(b) = self.memo.get(&t) {
            return b.clone();
        }
        let r = match q.term(t).clone() {
            Term::BoolConst(b) => Blasted::Bool(self.konst(b)),
            Term::Not(a) => Blasted::Bool(!self.lit(q, a)),
            Term::And(items) => {
                let ls: Vec<Lit> = items.iter().map(|&x| self.lit(q, x)).collect();
                Blasted::Bool(self.and_all(&ls))
            }
            Term::Or(items) => {
                let ls: Vec<Lit> = items.iter().map(|&x| self.lit(q, x)).collect();
                Blasted::Bool(self.or_all(&ls))
            }
            Term::Eq(a, b) => match (self.blast(q, a), self.blast(q, b)) {
                (Blasted::Bool(x), Blasted::Bool(y)) => Blasted::Bool(!self.xor(x, y)),
                (Blasted::Bv(x), Blasted::Bv(y)) => Blasted::Bool(self.bv_eq(&x, &y)),
                _ => panic!("sort mismatch in ="),
            },
            Term::Pred(p, a, b) => {
                let (x, y) = (self.bits(q, a), self.bits(q, b));
                Blasted::Bool(match p {
                    BvPred::Ult => self.ult(&x, &y),
                    BvPred::Ule => !self.ult(&y, &x),
                    BvPred::Slt => self.slt(&x, &y),
                    BvPred::Sle => !self.slt(&y, &x),
                })
            }
            Term::BvConst { width, value } => {
                Blasted::Bv((0..width).map(|i| self.konst(i < 64 && (value >> i) & 1 == 1)).collect())
            }
            Term::Var(v) => match q.var_decl(v).sort {
                Sort::Bool => Blasted::Bool(self.sat.new_lit()),
                Sort::Bv(w) => Blasted::Bv((0..w).map(|_| self.sat.new_lit()).collect()),
            },
            Term::Select { array, index } => {
                let idx = self.bits(q, index);
                let w = q.array_decl(array).elem_width;
                let val: Vec<Lit> = (0..w).map(|_| self.sat.new_lit()).collect();
                self.selects.push((array, idx, val.clone()));
                Blasted::Bv(val)
            }
            Term::Bin(op, a, b) => {
                let (x, y) = (self.bits(q, a), self.bits(q, b));
                Blasted::Bv(match op {
                    BvOp::Add => self.add(&x, &y, self.f()).0,
                    BvOp::Sub => self.sub(&x, &y).0,
                    BvOp::Mul => self.mul(&x, &y),
                    BvOp::UDiv => self.udivrem(&x, &y).0,
                    BvOp::URem => self.udivrem(&x, &y).1,
                    BvOp::SDiv => {
                        let (sx, sy) = (x[x.len() - 1], y[y.len() - 1]);
                        let (ax, ay) = (self.abs(&x), self.abs(&y));
                        let (qq, _) = self.udivrem(&ax, &ay);
                        let flip = self.xor(sx, sy);
                        self.cond_neg(flip, &qq)
                    }
                    BvOp::SRem => {
                        let sx = x[x.len() - 1];
                        let (ax, ay) = (self.abs(&x), self.abs(&y));
                        let (_, rr) = self.udivrem(&ax, &ay);
                        self.cond_neg(sx, &rr)
                    }
                    BvOp::And => x.iter().zip(&y).map(|(&p, &r)| self.and(p, r)).collect(),
                    BvOp::Or => x.iter().zip(&y).map(|(&p, &r)| self.or(p, r)).collect(),
                    BvOp::Xor => x.iter().zip(&y).map(|(&p, &r)| self.xor(p, r)).collect(),
                    BvOp::Shl | BvOp::LShr | BvOp::AShr => self.shift(op, &x, &y),
                })
            }
            Term::BvNot(a) => Blasted::Bv(self.bits(q, a).into_iter().map(|x| !x).collect()),
            Term::Extract { hi, lo, a } => Blasted::Bv(self.bits(q, a)[lo as usize..=hi as usize].to_vec()),
            Term::Concat(a, b) => {
                let mut v = self.bits(q, b);
                v.extend(self.bits(q, a));
                Blasted::Bv(v)
            }
            Term::ZeroExt { extra, a } => {
                let mut v = self.bits(q, a);
                v.extend(std::iter::repeat_n(self.f(), extra as usize));
                Blasted::Bv(v)
            }
            Term::SignExt { extra, a } => {
                let mut v = self.bits(q, a);
                let s = v[v.len() - 1];
                v.extend(std::iter::repeat_n(s, extra as usize));
                Blasted::Bv(v)
            }
            Term::Ite(c, a, b) => {
                let c = self.lit(q, c);
                match (self.blast(q, a), self.blast(q, b)) {
                    (Blasted::Bool(x), Blasted::Bool(y)) => Blasted::Bool(self.ite(c, x, y)),
                    (Blasted::Bv(x), Blasted::Bv(y)) => {
                        Blasted::Bv(x.iter().zip(&y).map(|(&p, &r)| self.ite(c, p, r)).collect())
                    }
                    _ => panic!("sort mismatch in ite"),
                }
            }
        };
        self.memo.insert(t, r.clone());
        r
    }

    fn ackermann(&mut self) {
        let selects = std::mem::take(&mut self.selects);
        for i in 0..selects.len() {
            for j in i + 1..selects.len() {
                let (a1, i1, v1) = &selects[i];
                let (a2, i2, v2) = &selects[j];
                if a1 != a2 {
                    continue;
                }
                let same = self.bv_eq(i1, i2);
                if same == self.f() {
                    continue;
                }
                for (&x, &y) in v1.iter().zip(v2) {
                    self.sat.add_clause(&[!same, !x, y]);
                    self.sat.add_clause(&[!same, x, !y]);
                }
            }
        }
    }
}

/// Decides `q` and returns a model covering every declared bitvector or
/// boolean constant when satisfiable.
pub fn solve(q: &Query) -> (Status, Option<Model>) {
    let mut b = Blaster::new();
    for &a in &q.assertions {
        let l = b.lit(q, a);
        if l == b.f() {
            return (Status::Unsat, None);
        }
        b.sat.add_clause(&[l]);
    }
    b.ackermann();
    match b.sat.solve() {
        Ok(true) => {
            let assignment: std::collections::HashSet<Lit> = b.sat.model().unwrap_or_default().into_iter().collect();
            let value_of = |l: Lit| assignment.contains(&l);
            let mut var_terms = HashMap::new();
            for t in (0..q.num_terms() as u32).map(TermId) {
                if let Term::Var(v) = q.term(t) {
                    var_terms.insert(v.0 as usize, t);
                }
            }
            let mut model = Model::default();
            for (i, v) in q.vars.iter().enumerate() {
                let bits = match var_terms.get(&i).and_then(|t| b.memo.get(t)) {
                    Some(Blasted::Bv(bits)) => bits.clone(),
                    Some(Blasted::Bool(l)) => vec![*l],
                    None => continue,
                };
                let mut value = 0u64;
                for (k, &l) in bits.iter().enumerate().take(64) {
                    if value_of(l) {
                        value |= 1 << k;
                    }
                }
                model.insert(v.name.clone(), value);
            }
            (Status::Sat, Some(model))
        }
        Ok(false) => (Status::Unsat, None),
        Err(_) => (Status::Error, None),
    }
}
