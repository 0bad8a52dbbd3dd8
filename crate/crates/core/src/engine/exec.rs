//! Single-instruction semantics over relational states.

use std::rc::Rc;

use crate::symexpr::{self, mk_binop, mk_cmp, mk_extract, mk_ite, mk_sext, mk_unop, mk_zext, ExprId, RelExpr};
use crate::symmemory::{mem_load, mem_store};
use crate::wat::{BinOp, CmpOp, ConvOp, InstrKind, MemArg, SiteId, UnOp, ValType};

use super::{CheckKind, Engine, Frame, IncompleteReason, Label, LabelKind, Op, Slot, SymState, VerdictKind};

pub(crate) enum Succ {
    Go(SymState),
    /// The path ended: return from the entry, trap, or a limit.
    Done,
    Many(Vec<Succ>),
}

pub(crate) enum Write {
    Local(u32),
    Global(u32),
    Store(RelExpr, u32),
}

impl Engine<'_> {
    pub(crate) fn step(&mut self, mut s: SymState) -> Succ {
        let codes = Rc::clone(&self.codes);
        let (func, ip) = {
            let f = s.frame();
            (f.func, f.ip)
        };
        let code = &codes[func as usize];
        if ip >= code.ops.len() {
            return self.ret(s);
        }
        let site = code.site(ip);
        self.visit(site);
        s.steps += 1;
        s.frame_mut().ip = ip + 1;
        match &code.ops[ip] {
            Op::Block { arity, end } => {
                let height = s.stack.len();
                s.frame_mut().labels.push(block_label(*end, *arity, height));
                Succ::Go(s)
            }
            Op::Loop { .. } => {
                if self.cfg.invariants_enabled {
                    return self.analyze_loop(s, site);
                }
                s.loop_entries += 1;
                let height = s.stack.len();
                s.frame_mut().labels.push(Label {
                    kind: LabelKind::Loop,
                    target: ip + 1,
                    arity: 0,
                    height,
                    iters: 0,
                    analysis: None,
                });
                Succ::Go(s)
            }
            Op::If { arity, else_at, end } => {
                let c = s.pop();
                self.check_cond(&s, site, CheckKind::Branch, c);
                let height = s.stack.len();
                s.frame_mut().labels.push(block_label(*end, *arity, height));
                let (taken, not_taken) = self.split(s, c);
                let mut out = Vec::new();
                out.extend(taken.map(Succ::Go));
                if let Some(mut f) = not_taken {
                    f.frame_mut().ip = else_at.map_or(*end, |e| e + 1);
                    out.push(Succ::Go(f));
                }
                Succ::Many(out)
            }
            Op::Else { end } => {
                s.frame_mut().ip = *end;
                Succ::Go(s)
            }
            Op::End => {
                s.frame_mut().labels.pop();
                Succ::Go(s)
            }
            Op::Plain(k) => self.plain(s, site, k),
        }
    }

    fn plain(&mut self, mut s: SymState, site: SiteId, k: &InstrKind) -> Succ {
        use InstrKind as K;
        match k {
            K::Unreachable => return self.trap(site, None, "unreachable executed"),
            K::Nop => {}
            K::Br(d) => return self.branch(s, *d),
            K::BrIf(d) => {
                let c = s.pop();
                self.check_cond(&s, site, CheckKind::Branch, c);
                let (taken, not_taken) = self.split(s, c);
                let mut out = Vec::new();
                if let Some(t) = taken {
                    out.push(self.branch(t, *d));
                }
                out.extend(not_taken.map(Succ::Go));
                return Succ::Many(out);
            }
            K::BrTable { targets, default } => return self.br_table(s, site, targets, *default),
            K::Return => return self.ret(s),
            K::Call(f) => return self.call(s, *f),
            K::CallIndirect(t) => return self.call_indirect(s, site, *t),
            K::Drop => {
                s.pop();
            }
            K::Select => {
                let c = s.pop();
                let b = s.pop();
                let a = s.pop();
                if self.cfg.select_unsafe {
                    self.check_cond(&s, site, CheckKind::Select, c);
                }
                let v = mk_ite(&mut self.pool, c, a, b).expect("validated select operands");
                s.push(v);
            }
            K::LocalGet(i) => {
                let v = s.frame().locals[*i as usize];
                s.push(v);
            }
            K::LocalSet(i) | K::LocalTee(i) => {
                let v = s.pop();
                s.frame_mut().locals[*i as usize] = v;
                if matches!(k, K::LocalTee(_)) {
                    s.push(v);
                }
                self.note_write(&s, Write::Local(*i));
            }
            K::GlobalGet(i) => {
                let v = s.globals[*i as usize];
                s.push(v);
            }
            K::GlobalSet(i) => {
                let v = s.pop();
                s.globals[*i as usize] = v;
                self.note_write(&s, Write::Global(*i));
            }
            K::Load(op, arg) => {
                let idx = s.pop();
                let Some(ea) = self.access(&mut s, site, idx, *arg, op.bytes) else {
                    return self.trap(site, Some(CheckKind::MemoryIndex), "out-of-bounds memory access");
                };
                let v = mem_load(&mut self.pool, &self.layout, s.mem, ea, op.bytes, op.signed, op.ty.bits());
                s.push(v);
            }
            K::Store(op, arg) => {
                let v = s.pop();
                let idx = s.pop();
                let Some(ea) = self.access(&mut s, site, idx, *arg, op.bytes) else {
                    return self.trap(site, Some(CheckKind::MemoryIndex), "out-of-bounds memory access");
                };
                s.mem = mem_store(&mut self.pool, s.mem, ea, v, op.bytes);
                self.note_write(&s, Write::Store(ea, op.bytes));
            }
            K::Const(ty, v) => {
                let c = self.pool.rel_const(ty.bits(), *v);
                s.push(c);
            }
            K::Eqz(ty) => {
                let a = s.pop();
                let z = self.pool.rel_const(ty.bits(), 0);
                let v = mk_cmp(&mut self.pool, CmpOp::Eq, a, z).expect("validated operands");
                s.push(v);
            }
            K::Unary(ty, op) => {
                let a = s.pop();
                let v = match op {
                    UnOp::Clz => mk_unop(&mut self.pool, symexpr::UnOp::Clz, a),
                    UnOp::Ctz => mk_unop(&mut self.pool, symexpr::UnOp::Ctz, a),
                    UnOp::Popcnt => mk_unop(&mut self.pool, symexpr::UnOp::Popcnt, a),
                    UnOp::Extend8S => self.sign_extend_low(a, 8, *ty),
                    UnOp::Extend16S => self.sign_extend_low(a, 16, *ty),
                    UnOp::Extend32S => self.sign_extend_low(a, 32, *ty),
                };
                s.push(v);
            }
            K::Binary(ty, op) => {
                let b = s.pop();
                let a = s.pop();
                match self.guard_division(&mut s, *op, *ty, a, b) {
                    Guard::Ok => {}
                    Guard::Trap(why) => return self.trap(site, None, why),
                    Guard::Infeasible => {
                        self.counters.infeasible_pruned += 1;
                        return Succ::Many(Vec::new());
                    }
                }
                let v = mk_binop(&mut self.pool, *op, a, b).expect("validated operands");
                s.push(v);
            }
            K::Compare(_, op) => {
                let b = s.pop();
                let a = s.pop();
                let v = mk_cmp(&mut self.pool, *op, a, b).expect("validated operands");
                s.push(v);
            }
            K::Convert(op) => {
                let a = s.pop();
                let v = match op {
                    ConvOp::I32WrapI64 => mk_extract(&mut self.pool, 31, 0, a),
                    ConvOp::I64ExtendI32S => mk_sext(&mut self.pool, 64, a),
                    ConvOp::I64ExtendI32U => mk_zext(&mut self.pool, 64, a),
                };
                s.push(v);
            }
            K::Block { .. } | K::Loop { .. } | K::If { .. } => unreachable!("structured ops are flattened"),
        }
        Succ::Go(s)
    }

    fn sign_extend_low(&mut self, a: RelExpr, bits: u32, ty: ValType) -> RelExpr {
        let low = mk_extract(&mut self.pool, bits - 1, 0, a);
        mk_sext(&mut self.pool, ty.bits(), low)
    }

    fn guard_division(&mut self, s: &mut SymState, op: BinOp, ty: ValType, a: RelExpr, b: RelExpr) -> Guard {
        if !matches!(op, BinOp::DivS | BinOp::DivU | BinOp::RemS | BinOp::RemU) {
            return Guard::Ok;
        }
        let w = ty.bits();
        let zero = self.pool.rel_const(w, 0);
        let nonzero = mk_cmp(&mut self.pool, CmpOp::Ne, b, zero).expect("same width");
        if self.pool.rel_as_const(nonzero) == Some(0) {
            return Guard::Trap("integer divide by zero");
        }
        if !self.assume_rel(s, nonzero) {
            return Guard::Infeasible;
        }
        if op == BinOp::DivS {
            let min = self.pool.rel_const(w, 1 << (w - 1));
            let neg1 = self.pool.rel_const(w, symexpr::ops::mask(w));
            let a_ok = mk_cmp(&mut self.pool, CmpOp::Ne, a, min).expect("same width");
            let b_ok = mk_cmp(&mut self.pool, CmpOp::Ne, b, neg1).expect("same width");
            let ok = mk_binop(&mut self.pool, BinOp::Or, a_ok, b_ok).expect("same width");
            if self.pool.rel_as_const(ok) == Some(0) {
                return Guard::Trap("integer overflow");
            }
            if !self.assume_rel(s, ok) {
                return Guard::Infeasible;
            }
        }
        Guard::Ok
    }

    /// Checks the address of a memory access and constrains it in bounds.
    /// `None` when the access always traps.
    fn access(&mut self, s: &mut SymState, site: SiteId, idx: RelExpr, arg: MemArg, bytes: u32) -> Option<RelExpr> {
        let ea = if arg.offset == 0 {
            idx
        } else {
            let off = self.pool.rel_const(32, arg.offset as u64);
            mk_binop(&mut self.pool, BinOp::Add, idx, off).expect("i32 address")
        };
        if self.check_value(s, site, CheckKind::MemoryIndex, ea).diverges() {
            self.force_equal(s, ea);
        }
        let reach = arg.offset as u64 + bytes as u64;
        if let Some(i) = self.pool.rel_as_const(idx) {
            return (i + reach <= self.layout.size).then_some(ea);
        }
        if reach > self.layout.size {
            return None;
        }
        let limit = self.pool.rel_const(32, self.layout.size - reach);
        let inside = mk_cmp(&mut self.pool, CmpOp::LeU, idx, limit).expect("i32 address");
        self.assume_rel(s, inside).then_some(ea)
    }

    pub(crate) fn trap(&mut self, site: SiteId, check: Option<CheckKind>, why: &str) -> Succ {
        self.record(site, check, VerdictKind::Trap, None, Some(why.to_string()));
        Succ::Done
    }

    /// Successor states for a condition: taken (non-zero) and not taken,
    /// each with both executions agreeing. Infeasible sides are dropped.
    pub(crate) fn split(&mut self, s: SymState, c: RelExpr) -> (Option<SymState>, Option<SymState>) {
        if let Some(v) = self.pool.rel_as_const(c) {
            return if v != 0 { (Some(s), None) } else { (None, Some(s)) };
        }
        let t = c.map(|x| self.pool.truthy(x));
        let f = c.map(|x| self.pool.falsy(x));
        let check = self.cfg.feasibility == super::FeasibilityPolicy::AtBranch;
        let t_ok = !check || self.feasible(&s, &[t.l, t.r]);
        let f_ok = !t_ok || !check || self.feasible(&s, &[f.l, f.r]);
        let (mut ts, mut fs) = match (t_ok, f_ok) {
            (true, true) => (Some(s.clone()), Some(s)),
            (true, false) => (Some(s), None),
            (false, _) => (None, Some(s)),
        };
        if let Some(x) = ts.as_mut() {
            if !self.assume_rel(x, t) {
                ts = None;
            }
        }
        if let Some(x) = fs.as_mut() {
            if !self.assume_rel(x, f) {
                fs = None;
            }
        }
        (ts, fs)
    }

    pub(crate) fn branch(&mut self, mut s: SymState, depth: u32) -> Succ {
        let frame = s.frames.last_mut().expect("active frame");
        let li = frame.labels.len() - 1 - depth as usize;
        let label = frame.labels[li].clone();
        match label.kind {
            LabelKind::Func => self.ret(s),
            LabelKind::Block => {
                let keep = s.stack.split_off(s.stack.len() - label.arity);
                s.stack.truncate(label.height);
                s.stack.extend(keep);
                let frame = s.frame_mut();
                frame.labels.truncate(li);
                frame.ip = label.target + 1;
                Succ::Go(s)
            }
            LabelKind::Loop => {
                s.stack.truncate(label.height);
                let frame = s.frame_mut();
                frame.labels.truncate(li + 1);
                frame.ip = label.target;
                let l = &mut frame.labels[li];
                l.iters += 1;
                let iters = l.iters;
                if let Some(a) = label.analysis {
                    s.back_edge = Some(a);
                    return Succ::Go(s);
                }
                if iters > self.cfg.unroll_limit {
                    self.incomplete(
                        IncompleteReason::UnrollLimit,
                        format!("loop unrolled more than {} times", self.cfg.unroll_limit),
                    );
                    return Succ::Done;
                }
                Succ::Go(s)
            }
        }
    }

    pub(crate) fn ret(&mut self, mut s: SymState) -> Succ {
        let frame = s.frames.pop().expect("active frame");
        let base = &frame.labels[0];
        let results = s.stack.split_off(s.stack.len() - base.arity);
        s.stack.truncate(base.height);
        s.stack.extend(results);
        if s.frames.is_empty() {
            Succ::Done
        } else {
            Succ::Go(s)
        }
    }

    fn call(&mut self, mut s: SymState, f: u32) -> Succ {
        let depth = s.frames.iter().filter(|fr| fr.func == f).count() as u32;
        if depth > self.cfg.unroll_limit {
            self.incomplete(
                IncompleteReason::UnrollLimit,
                format!("recursion deeper than {}", self.cfg.unroll_limit),
            );
            return Succ::Done;
        }
        let def = &self.ast.functions[f as usize];
        let mut locals = s.stack.split_off(s.stack.len() - def.params.len());
        for ty in &def.locals {
            locals.push(self.pool.rel_const(ty.bits(), 0));
        }
        let end = self.codes[f as usize].ops.len();
        let height = s.stack.len();
        s.frames.push(Frame {
            func: f,
            ip: 0,
            locals,
            labels: vec![Label {
                kind: LabelKind::Func,
                target: end,
                arity: def.results.len(),
                height,
                iters: 0,
                analysis: None,
            }],
        });
        Succ::Go(s)
    }

    /// Depth each table index selects, as an expression over the index.
    fn table_target(&mut self, x: ExprId, targets: &[u32], default: u32) -> ExprId {
        let mut acc = self.pool.constant(32, default as u64);
        for (i, &t) in targets.iter().enumerate().rev() {
            if t == default {
                continue;
            }
            let k = self.pool.constant(32, i as u64);
            let hit = self.pool.cmp(CmpOp::Eq, x, k);
            let d = self.pool.constant(32, t as u64);
            acc = self.pool.ite(hit, d, acc);
        }
        acc
    }

    fn br_table(&mut self, mut s: SymState, site: SiteId, targets: &[u32], default: u32) -> Succ {
        let idx = s.pop();
        if let Some(i) = self.pool.rel_as_const(idx) {
            self.check_value(&s, site, CheckKind::BrTable, idx);
            let d = targets.get(i as usize).copied().unwrap_or(default);
            return self.branch(s, d);
        }
        let sel = idx.map(|x| self.table_target(x, targets, default));
        self.check_value(&s, site, CheckKind::BrTable, sel);
        let mut depths: Vec<u32> = Vec::new();
        for &d in targets.iter().chain(std::iter::once(&default)) {
            if !depths.contains(&d) {
                depths.push(d);
            }
        }
        let check = self.cfg.feasibility == super::FeasibilityPolicy::AtBranch;
        let mut out = Vec::new();
        for d in depths {
            let dc = self.pool.rel_const(32, d as u64);
            let hit = mk_cmp(&mut self.pool, CmpOp::Eq, sel, dc).expect("i32");
            if check && !self.feasible(&s, &[hit.l, hit.r]) {
                continue;
            }
            let mut t = s.clone();
            if self.assume_rel(&mut t, hit) {
                out.push(self.branch(t, d));
            }
        }
        Succ::Many(out)
    }

    fn call_indirect(&mut self, mut s: SymState, site: SiteId, type_index: u32) -> Succ {
        let idx = s.pop();
        if self.check_value(&s, site, CheckKind::CallIndirect, idx).diverges() {
            self.force_equal(&mut s, idx);
        }
        let want = &self.ast.types[type_index as usize];
        let valid: Vec<(u32, u32)> = self
            .ast
            .table
            .iter()
            .enumerate()
            .filter_map(|(k, slot)| slot.map(|f| (k as u32, f)))
            .filter(|&(_, f)| self.ast.functions[f as usize].ty() == *want)
            .collect();
        if let Some(i) = self.pool.rel_as_const(idx) {
            return match valid.iter().find(|&&(k, _)| k as u64 == i) {
                Some(&(_, f)) => self.call(s, f),
                None => self.trap(site, Some(CheckKind::CallIndirect), "invalid indirect call"),
            };
        }
        let check = self.cfg.feasibility == super::FeasibilityPolicy::AtBranch;
        let mut out = Vec::new();
        let mut misses = Vec::new();
        for (k, f) in valid {
            let kc = self.pool.rel_const(32, k as u64);
            let hit = mk_cmp(&mut self.pool, CmpOp::Eq, idx, kc).expect("i32");
            let miss = mk_cmp(&mut self.pool, CmpOp::Ne, idx, kc).expect("i32");
            misses.push(miss.l);
            if check && !self.feasible(&s, &[hit.l]) {
                continue;
            }
            let mut t = s.clone();
            if self.assume_rel(&mut t, hit) {
                out.push(self.call(t, f));
            }
        }
        if check && self.checking && self.feasible(&s, &misses) {
            self.record(site, Some(CheckKind::CallIndirect), VerdictKind::Trap, None, Some("invalid indirect call".into()));
        }
        Succ::Many(out)
    }

    /// Reports a write to every loop analysis in progress.
    pub(crate) fn note_write(&mut self, s: &SymState, w: Write) {
        if self.logs.is_empty() {
            return;
        }
        let top = s.frames.len() - 1;
        let addr = match &w {
            Write::Store(ea, _) => Some(self.pool.rel_as_const(*ea)),
            _ => None,
        };
        for log in self.logs.iter_mut() {
            match &w {
                Write::Local(i) => {
                    if log.frame == top {
                        log.slots.insert(Slot::Local(*i));
                    }
                }
                Write::Global(i) => {
                    log.slots.insert(Slot::Global(*i));
                }
                Write::Store(_, bytes) => match addr.flatten() {
                    Some(a) => {
                        for k in 0..*bytes as u64 {
                            log.slots.insert(Slot::Byte(a + k));
                        }
                    }
                    None => log.whole_memory = true,
                },
            }
        }
    }
}

enum Guard {
    Ok,
    Trap(&'static str),
    Infeasible,
}

fn block_label(end: usize, arity: usize, height: usize) -> Label {
    Label {
        kind: LabelKind::Block,
        target: end,
        arity,
        height,
        iters: 0,
        analysis: None,
    }
}
