//! Relational loop invariants: havoc the slots a loop modifies, assume the
//! ones that stay public are equal across executions, explore one symbolic
//! iteration, and check that equality is preserved on every back edge.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, IncompleteReason, Label, LabelKind, Site, Slot, Succ, SymState, Watch, WriteLog};
use crate::solver::{QueryKind, Status};
use crate::symexpr::{simplify, ExprId, MemNode, RelExpr};
use crate::symmemory::{read_byte, SymMemory};
use crate::wat::{BinOp, CmpOp, SiteId};

/// Widening rounds before every slot of the frame is havoced.
const MAX_WIDENINGS: u32 = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopInvariant {
    pub loc: Site,
    /// Loop entries on the path up to and including this one.
    pub ordinal: u32,
    pub modified: Vec<Slot>,
    pub public_subset: Vec<Slot>,
    pub const_bindings: BTreeMap<Slot, u64>,
    /// Stores through symbolic addresses: the whole memory was havoced.
    pub whole_memory: bool,
    /// Slots whose equality did not survive an iteration.
    pub failed: Vec<String>,
}

impl LoopInvariant {
    pub fn holds(&self) -> bool {
        self.failed.is_empty()
    }

    /// The invariant as a set of equalities, e.g. `{lv4_l = lv4_r}`.
    pub fn formula(&self) -> String {
        let parts: Vec<String> = self
            .public_subset
            .iter()
            .map(|x| match self.const_bindings.get(x) {
                Some(c) => format!("{x}_l = {x}_r = {c}"),
                None => format!("{x}_l = {x}_r"),
            })
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

impl Engine<'_> {
    /// Runs a loop under a generated invariant; returns the exit states.
    pub(crate) fn analyze_loop(&mut self, mut s: SymState, site: SiteId) -> Succ {
        s.loop_entries += 1;
        let ordinal = s.loop_entries;
        let id = self.next_analysis;
        self.next_analysis += 1;
        let frame = s.frames.len() - 1;
        let label = s.frame().labels.len();
        let body = s.frame().ip;
        let height = s.stack.len();
        s.frame_mut().labels.push(Label {
            kind: LabelKind::Loop,
            target: body,
            arity: 0,
            height,
            iters: 0,
            analysis: Some(id),
        });
        let watch = Watch { id, frame, label };

        let checking = self.checking;
        self.checking = false;
        let (pre, log) = self.logged_run(&s, &watch, frame);
        self.checking = checking;
        let mut modified = log.slots;
        let mut whole = log.whole_memory;

        // Back-edge states that inference draws on. Widening adds those of
        // the havoced run, since the pre-pass never wrote the new slots.
        let mut evidence = pre.back_edges;
        let mut round = 0;
        loop {
            if whole {
                modified.retain(|x| !matches!(x, Slot::Byte(_)));
            }
            let (public, consts) = self.infer_public(&s, &evidence, &modified, frame);
            let mut failed = Vec::new();
            let mut h = s.clone();
            if whole && !self.memory_stays_public(&s, None) {
                failed.push("mem[*]".to_string());
            }
            self.havoc(&mut h, ordinal, frame, &modified, whole, &public, &consts);
            let (out, log) = self.logged_run(&h, &watch, frame);
            let widen = !log.slots.is_subset(&modified) || (log.whole_memory && !whole);
            if widen && !self.over_budget() {
                round += 1;
                if round > MAX_WIDENINGS {
                    modified.extend((0..s.frames[frame].locals.len() as u32).map(Slot::Local));
                    modified.extend((0..s.globals.len() as u32).map(Slot::Global));
                    whole = true;
                } else {
                    modified.extend(log.slots);
                    whole |= log.whole_memory;
                }
                evidence.extend(out.back_edges);
                continue;
            }
            let base = whole.then(|| self.pool.mem_base(h.mem.l).0);
            for b in &out.back_edges {
                for x in self.assert_invariant(b, frame, &public, &consts) {
                    if !failed.contains(&x) {
                        failed.push(x);
                    }
                }
                if whole && !self.memory_stays_public(b, base) && !failed.iter().any(|f| f == "mem[*]") {
                    failed.push("mem[*]".to_string());
                }
            }
            let loc = self.site(site);
            if !failed.is_empty() {
                self.incomplete(
                    IncompleteReason::InvariantAssertFailure,
                    format!("invariant assertion failed for {} at {}", failed.join(", "), loc),
                );
            }
            if self.checking {
                self.invariants.push(LoopInvariant {
                    loc,
                    ordinal,
                    modified: modified.iter().copied().collect(),
                    public_subset: public,
                    const_bindings: consts,
                    whole_memory: whole,
                    failed,
                });
            }
            return Succ::Many(out.exits.into_iter().map(Succ::Go).collect());
        }
    }

    fn logged_run(&mut self, s: &SymState, watch: &Watch, frame: usize) -> (crate::engine::RunOut, WriteLog) {
        self.logs.push(WriteLog {
            frame,
            ..WriteLog::default()
        });
        let out = self.run(vec![s.clone()], Some(watch));
        let log = self.logs.pop().expect("pushed above");
        (out, log)
    }

    fn slot_value(&mut self, s: &SymState, frame: usize, x: Slot) -> RelExpr {
        match x {
            Slot::Local(i) => s.frames[frame].locals[i as usize],
            Slot::Global(i) => s.globals[i as usize],
            Slot::Byte(a) => {
                let idx = self.pool.constant(32, a);
                let l = read_byte(&mut self.pool, &self.layout, s.mem.l, idx);
                if s.mem.is_shared() {
                    RelExpr::shared(l)
                } else {
                    let r = read_byte(&mut self.pool, &self.layout, s.mem.r, idx);
                    RelExpr::pair(l, r)
                }
            }
        }
    }

    /// Whether `e` may differ between the executions on the path of `s`.
    fn may_differ(&mut self, s: &SymState, e: RelExpr, expect: Option<u64>, kind: QueryKind) -> bool {
        self.counters.formulas_simplified += 1;
        let goal = match expect {
            None if e.is_shared() => return false,
            None => self.pool.cmp(CmpOp::Ne, e.l, e.r),
            Some(c) => {
                let c = self.pool.constant(self.pool.width(e.l), c);
                let l = self.pool.cmp(CmpOp::Ne, e.l, c);
                let r = self.pool.cmp(CmpOp::Ne, e.r, c);
                self.pool.bin(BinOp::Or, l, r)
            }
        };
        let goal = simplify(&mut self.pool, &mut self.cache, goal);
        if self.pool.as_const(goal) == Some(0) {
            return false;
        }
        let (answer, _) = self.solve(kind, s, &[goal]);
        answer.status != Status::Unsat
    }

    /// Slots public at loop entry and after one iteration on every path,
    /// and those holding the same constant in all of these states.
    fn infer_public(
        &mut self,
        entry: &SymState,
        backs: &[SymState],
        modified: &BTreeSet<Slot>,
        frame: usize,
    ) -> (Vec<Slot>, BTreeMap<Slot, u64>) {
        let mut public = Vec::new();
        let mut consts = BTreeMap::new();
        'slots: for &x in modified {
            let mut constant = None;
            for (k, st) in std::iter::once(entry).chain(backs).enumerate() {
                let v = self.slot_value(st, frame, x);
                if self.may_differ(st, v, None, QueryKind::PolicyProbe) {
                    continue 'slots;
                }
                let c = self.pool.rel_as_const(v);
                constant = if k == 0 || constant == c { c } else { None };
            }
            public.push(x);
            if let Some(c) = constant {
                consts.insert(x, c);
            }
        }
        (public, consts)
    }

    #[allow(clippy::too_many_arguments)]
    fn havoc(
        &mut self,
        h: &mut SymState,
        ordinal: u32,
        frame: usize,
        modified: &BTreeSet<Slot>,
        whole: bool,
        public: &[Slot],
        consts: &BTreeMap<Slot, u64>,
    ) {
        if whole {
            let base = self.pool.fresh_base();
            self.havoc_bases.insert(base, ordinal);
            h.mem = SymMemory::fresh(&mut self.pool, &self.layout, base);
        }
        for &x in modified {
            let width = match x {
                Slot::Local(i) => self.pool.rel_width(h.frames[frame].locals[i as usize]),
                Slot::Global(i) => self.pool.rel_width(h.globals[i as usize]),
                Slot::Byte(_) => 8,
            };
            let v = if let Some(&c) = consts.get(&x) {
                self.pool.rel_const(width, c)
            } else if public.contains(&x) {
                let e = self.pool.fresh_public(width, "hv");
                self.note_havoc(e, ordinal, x);
                RelExpr::shared(e)
            } else {
                let (l, r) = self.pool.fresh_pair(width, "hv");
                self.note_havoc(l, ordinal, x);
                self.note_havoc(r, ordinal, x);
                RelExpr::pair(l, r)
            };
            match x {
                Slot::Local(i) => h.frames[frame].locals[i as usize] = v,
                Slot::Global(i) => h.globals[i as usize] = v,
                Slot::Byte(a) => {
                    let idx = self.pool.rel_const(32, a);
                    h.mem = crate::symmemory::mem_store(&mut self.pool, h.mem, idx, v, 1);
                }
            }
        }
    }

    fn note_havoc(&mut self, e: ExprId, ordinal: u32, x: Slot) {
        if let crate::symexpr::Node::Sym(id) = self.pool.node(e) {
            self.havoc_syms.insert(id, (ordinal, x));
        }
    }

    fn assert_invariant(
        &mut self,
        b: &SymState,
        frame: usize,
        public: &[Slot],
        consts: &BTreeMap<Slot, u64>,
    ) -> Vec<String> {
        let mut failed = Vec::new();
        for &x in public {
            let v = self.slot_value(b, frame, x);
            if self.may_differ(b, v, consts.get(&x).copied(), QueryKind::InvariantAssert) {
                failed.push(x.to_string());
            }
        }
        failed
    }

    /// Whether every store made since `since` (or since the start) keeps
    /// public memory equal across the executions.
    fn memory_stays_public(&mut self, s: &SymState, since: Option<u32>) -> bool {
        let mut records = Vec::new();
        let (mut l, mut r) = (s.mem.l, s.mem.r);
        while l != r {
            match (self.pool.mem(l), self.pool.mem(r)) {
                (
                    MemNode::Store {
                        prev: pl,
                        index: il,
                        value: vl,
                    },
                    MemNode::Store {
                        prev: pr,
                        index: ir,
                        value: vr,
                    },
                ) => {
                    records.push((il, vl, ir, vr));
                    l = pl;
                    r = pr;
                }
                (MemNode::Base { base: bl, .. }, MemNode::Base { base: br, .. }) if bl == br => break,
                _ => return false,
            }
        }
        if let Some(base) = since {
            if self.pool.mem_base(l).0 != base {
                return false;
            }
        }
        if records.is_empty() {
            return true;
        }
        let mut bad = Vec::new();
        for (il, vl, ir, vr) in records {
            let same_idx = self.pool.cmp(CmpOp::Eq, il, ir);
            let same_val = self.pool.cmp(CmpOp::Eq, vl, vr);
            let secret = self.in_secret(il);
            let ok_val = self.pool.bin(BinOp::Or, secret, same_val);
            let ok = self.pool.and_bool(same_idx, ok_val);
            let not_ok = self.pool.falsy(ok);
            if self.pool.as_const(not_ok) != Some(0) {
                bad.push(not_ok);
            }
        }
        if bad.is_empty() {
            return true;
        }
        self.counters.formulas_simplified += 1;
        let mut any = bad[0];
        for &x in &bad[1..] {
            any = self.pool.bin(BinOp::Or, any, x);
        }
        let any = simplify(&mut self.pool, &mut self.cache, any);
        if self.pool.as_const(any) == Some(0) {
            return true;
        }
        let (answer, _) = self.solve(QueryKind::InvariantAssert, s, &[any]);
        answer.status == Status::Unsat
    }

    fn in_secret(&mut self, i: ExprId) -> ExprId {
        let mut acc = self.pool.constant(32, 0);
        for (a, b) in self.layout.secret.clone() {
            let lo = self.pool.constant(32, a);
            let hi = self.pool.constant(32, b);
            let ge = self.pool.cmp(CmpOp::LeU, lo, i);
            let le = self.pool.cmp(CmpOp::LeU, i, hi);
            let inside = self.pool.and_bool(ge, le);
            acc = self.pool.bin(BinOp::Or, acc, inside);
        }
        acc
    }
}
