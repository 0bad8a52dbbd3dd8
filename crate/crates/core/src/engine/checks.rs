//! Constant-time checks, path feasibility and solver plumbing.

use crate::solver::{BaseRead, Model, QueryKind, SolverAnswer, Status, Translator};
use crate::symexpr::{count_nodes, simplify, ExprId, RelExpr, Side, SymOrigin};
use crate::wat::{ArgSpec, Classification, CmpOp, SiteId};

use super::{CheckKind, DualModel, Engine, Injection, Slot, SymState, Valuation, VerdictKind, Witness};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Outcome {
    Safe,
    Violation,
    Unknown,
    /// Checks are off during a loop pre-pass.
    Skipped,
}

impl Outcome {
    /// The two executions may disagree here and must be forced together.
    pub fn diverges(self) -> bool {
        matches!(self, Outcome::Violation | Outcome::Unknown)
    }
}

impl Engine<'_> {
    /// Conjoins a 0/1 condition to the path. False when it is constantly false.
    pub(crate) fn assume(&mut self, s: &mut SymState, c: ExprId) -> bool {
        match self.pool.as_const(c) {
            Some(0) => false,
            Some(_) => true,
            None => {
                s.pc.push(c);
                true
            }
        }
    }

    pub(crate) fn assume_rel(&mut self, s: &mut SymState, c: RelExpr) -> bool {
        let ok = self.assume(s, c.l);
        if c.is_shared() || !ok {
            return ok;
        }
        self.assume(s, c.r)
    }

    /// Forces both projections of `e` equal on this path.
    pub(crate) fn force_equal(&mut self, s: &mut SymState, e: RelExpr) {
        if !e.is_shared() {
            let eq = self.pool.cmp(CmpOp::Eq, e.l, e.r);
            self.assume(s, eq);
        }
    }

    /// Whether the path condition together with `extra` may hold.
    pub(crate) fn feasible(&mut self, s: &SymState, extra: &[ExprId]) -> bool {
        let mut goals = Vec::new();
        for &e in extra {
            match self.pool.as_const(e) {
                Some(0) => return false,
                Some(_) => {}
                None => goals.push(e),
            }
        }
        if goals.is_empty() {
            return true;
        }
        self.counters.formulas_simplified += 1;
        for g in goals.iter_mut() {
            *g = simplify(&mut self.pool, &mut self.cache, *g);
            if self.pool.as_const(*g) == Some(0) {
                return false;
            }
        }
        let (answer, _) = self.solve(QueryKind::Feasibility, s, &goals);
        if answer.status == Status::Unsat {
            self.counters.infeasible_pruned += 1;
            return false;
        }
        true
    }

    /// Divergence check for an address-like value: may the two executions
    /// compute different values of `e`?
    pub(crate) fn check_value(&mut self, s: &SymState, site: SiteId, kind: CheckKind, e: RelExpr) -> Outcome {
        if !self.checking {
            return Outcome::Skipped;
        }
        self.counters.formulas_simplified += 1;
        if e.is_shared() {
            self.record(site, Some(kind), VerdictKind::Safe, None, None);
            return Outcome::Safe;
        }
        let goal = self.pool.cmp(CmpOp::Ne, e.l, e.r);
        self.decide(s, site, kind, goal, QueryKind::MemIndexDivergence)
    }

    /// Divergence check for a condition: may the right execution see zero
    /// while the left sees non-zero?
    pub(crate) fn check_cond(&mut self, s: &SymState, site: SiteId, kind: CheckKind, c: RelExpr) -> Outcome {
        if !self.checking {
            return Outcome::Skipped;
        }
        self.counters.formulas_simplified += 1;
        if c.is_shared() {
            self.record(site, Some(kind), VerdictKind::Safe, None, None);
            return Outcome::Safe;
        }
        let r0 = self.pool.falsy(c.r);
        let l1 = self.pool.truthy(c.l);
        let goal = self.pool.and_bool(r0, l1);
        self.decide(s, site, kind, goal, QueryKind::BranchDivergence)
    }

    fn decide(&mut self, s: &SymState, site: SiteId, kind: CheckKind, goal: ExprId, qk: QueryKind) -> Outcome {
        let goal = simplify(&mut self.pool, &mut self.cache, goal);
        if self.pool.as_const(goal) == Some(0) {
            self.record(site, Some(kind), VerdictKind::Safe, None, None);
            return Outcome::Safe;
        }
        let (answer, reads) = self.solve(qk, s, &[goal]);
        match answer.status {
            Status::Unsat => {
                self.record(site, Some(kind), VerdictKind::Safe, None, None);
                Outcome::Safe
            }
            Status::Sat => {
                let model = answer.model.unwrap_or_default();
                let w = self.witness(&model, &reads);
                self.record(site, Some(kind), VerdictKind::Violation, Some(w), None);
                Outcome::Violation
            }
            other => {
                let detail = format!("{:?} from {}", other, answer.responder).to_lowercase();
                self.record(site, Some(kind), VerdictKind::Unknown, None, Some(detail));
                Outcome::Unknown
            }
        }
    }

    /// Asks whether the path condition and every goal can hold together.
    pub(crate) fn solve(&mut self, kind: QueryKind, s: &SymState, goals: &[ExprId]) -> (SolverAnswer, Vec<BaseRead>) {
        if self.over_budget() {
            return (SolverAnswer::new(Status::Timeout, None, "budget", 0.0), Vec::new());
        }
        let mut roots = s.pc.conjuncts();
        roots.extend_from_slice(goals);
        let mut tr = Translator::new(&self.pool, &self.layout, kind);
        for &r in &roots {
            tr.assert_truthy(r);
        }
        let q = tr.finish(count_nodes(&self.pool, &roots));
        let reads = q.reads.clone();
        self.counters.solver_queries += 1;
        self.solver.config.per_query_timeout = self.query_timeout();
        (self.solver.dispatch(q), reads)
    }

    /// Splits a model into per-execution inputs for reports and replay.
    pub(crate) fn witness(&self, model: &Model, reads: &[BaseRead]) -> (DualModel, Witness) {
        let mut dual = DualModel::default();
        let mut w = Witness::default();
        let both = |w: &mut Witness, f: &mut dyn FnMut(&mut Valuation, bool)| {
            f(&mut w.left, true);
            f(&mut w.right, false);
        };
        for (spec, _) in self.args() {
            match spec {
                ArgSpec::Concrete { value, .. } => {
                    w.left.args.push(*value);
                    w.right.args.push(*value);
                }
                ArgSpec::Symbolic { label, class, .. } => {
                    let (l, r) = match class {
                        Classification::Public => (model.get(label), model.get(label)),
                        Classification::Secret => (model.get(&format!("{label}_L")), model.get(&format!("{label}_R"))),
                    };
                    w.left.args.push(l);
                    w.right.args.push(r);
                    dual.left.insert(label.clone(), l);
                    dual.right.insert(label.clone(), r);
                }
            }
        }
        for (name, &value) in &model.values {
            let Some(id) = self.pool.sym_by_name(name) else {
                continue;
            };
            let info = self.pool.sym_info(id);
            let bare = name
                .strip_suffix("_L")
                .or_else(|| name.strip_suffix("_R"))
                .unwrap_or(name)
                .to_string();
            let (left, right) = match info.side {
                Side::Both => (true, true),
                Side::Left => (true, false),
                Side::Right => (false, true),
            };
            if left {
                dual.left.insert(bare.clone(), value);
            }
            if right {
                dual.right.insert(bare, value);
            }
            let target = match &info.origin {
                SymOrigin::Arg { .. } => continue,
                SymOrigin::MemByte { base: 0, addr } => Target::Memory(*addr),
                SymOrigin::MemByte { base, addr } => match self.havoc_bases.get(base) {
                    Some(&ordinal) => Target::Inject(ordinal, Slot::Byte(*addr)),
                    None => continue,
                },
                SymOrigin::Havoc { .. } => match self.havoc_syms.get(&id) {
                    Some(&(ordinal, slot)) => Target::Inject(ordinal, slot),
                    None => continue,
                },
            };
            both(&mut w, &mut |v, is_left| {
                if (is_left && left) || (!is_left && right) {
                    target.apply(v, value);
                }
            });
        }
        for rd in reads {
            let (Some(&i), Some(&val)) = (model.values.get(&rd.index_var), model.values.get(&rd.value_var)) else {
                continue;
            };
            let target = if rd.base == 0 {
                Target::Memory(i)
            } else {
                match self.havoc_bases.get(&rd.base) {
                    Some(&ordinal) => Target::Inject(ordinal, Slot::Byte(i)),
                    None => continue,
                }
            };
            let (left, right) = match rd.side {
                Side::Both => (true, true),
                Side::Left => (true, false),
                Side::Right => (false, true),
            };
            let name = format!("m.{}.{i}", rd.base);
            if left {
                dual.left.entry(name.clone()).or_insert(val);
            }
            if right {
                dual.right.entry(name).or_insert(val);
            }
            both(&mut w, &mut |v, is_left| {
                if (is_left && left) || (!is_left && right) {
                    target.apply(v, val);
                }
            });
        }
        for v in [&mut w.left, &mut w.right] {
            v.injections.sort_by_key(|j| (j.ordinal, j.slot));
            v.injections.dedup_by_key(|j| (j.ordinal, j.slot));
        }
        (dual, w)
    }
}

enum Target {
    Memory(u64),
    Inject(u32, Slot),
}

impl Target {
    fn apply(&self, v: &mut Valuation, value: u64) {
        match *self {
            Target::Memory(addr) => {
                v.memory.insert(addr, value as u8);
            }
            Target::Inject(ordinal, slot) => v.injections.push(Injection { ordinal, slot, value }),
        }
    }
}
