//! A plain concrete interpreter over the AST, used to confirm counterexamples.
//! It shares nothing with the symbolic engine beyond the syntax tree.

use crate::engine::{Injection, Slot, Valuation};
use crate::wat::{BinOp, BlockType, CmpOp, ConvOp, Instr, InstrKind, ModuleAst, SiteId, UnOp, ValType};

/// Instruction budget for one concrete run.
pub const DEFAULT_FUEL: u64 = 50_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stop {
    Trap(String),
    OutOfFuel,
}

/// One concrete run: values seen at the watched site, in visit order, and
/// how the run ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub observed: Vec<u64>,
    /// Every observation at every site, when recording was requested.
    pub events: Vec<(SiteId, u64)>,
    pub headers: Vec<HeaderVisit>,
    pub result: Result<Vec<u64>, Stop>,
}

/// State at the top of one loop iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeaderVisit {
    pub site: SiteId,
    pub locals: Vec<u64>,
    pub globals: Vec<u64>,
    /// Values of the requested bytes, in request order.
    pub bytes: Vec<u8>,
}

enum Flow {
    Next,
    Br(u32),
    Return,
}

fn mask(ty: ValType) -> u64 {
    match ty {
        ValType::I32 => u32::MAX as u64,
        ValType::I64 => u64::MAX,
    }
}

pub struct Machine<'a> {
    ast: &'a ModuleAst,
    mem: Vec<u8>,
    globals: Vec<u64>,
    fuel: u64,
    loops_entered: u32,
    injections: &'a [Injection],
    watch: Option<SiteId>,
    observed: Vec<u64>,
    record: bool,
    events: Vec<(SiteId, u64)>,
    header_bytes: Option<Vec<u64>>,
    headers: Vec<HeaderVisit>,
    depth: u32,
}

impl<'a> Machine<'a> {
    pub fn new(ast: &'a ModuleAst, input: &'a Valuation, use_injections: bool, fuel: u64) -> Self {
        let mut mem = vec![0u8; ast.memory_size() as usize];
        for (&addr, &b) in &input.memory {
            if let Some(cell) = mem.get_mut(addr as usize) {
                *cell = b;
            }
        }
        Machine {
            ast,
            mem,
            globals: ast.globals.iter().map(|g| g.init & mask(g.ty)).collect(),
            fuel,
            loops_entered: 0,
            injections: if use_injections { &input.injections } else { &[] },
            watch: None,
            observed: Vec::new(),
            record: false,
            events: Vec::new(),
            header_bytes: None,
            headers: Vec::new(),
            depth: 0,
        }
    }

    pub fn watch(mut self, site: SiteId) -> Self {
        self.watch = Some(site);
        self
    }

    /// Records the observation of every site, not just the watched one.
    pub fn record_all(mut self) -> Self {
        self.record = true;
        self
    }

    /// Snapshots locals, globals and the given bytes at every loop iteration.
    pub fn record_headers(mut self, bytes: Vec<u64>) -> Self {
        self.header_bytes = Some(bytes);
        self
    }

    /// Runs function `func` with `args` and reports what the watch saw.
    pub fn run(mut self, func: u32, args: &[u64]) -> Trace {
        let result = self.invoke(func, args.to_vec());
        Trace {
            observed: self.observed,
            events: self.events,
            headers: self.headers,
            result,
        }
    }

    fn observe(&mut self, func: u32, i: &Instr, v: u64) {
        let site = SiteId { func, instr: i.id };
        if self.watch == Some(site) {
            self.observed.push(v);
        }
        if self.record {
            self.events.push((site, v));
        }
    }

    fn invoke(&mut self, func: u32, args: Vec<u64>) -> Result<Vec<u64>, Stop> {
        self.depth += 1;
        if self.depth > 10_000 {
            return Err(Stop::Trap("call stack exhausted".into()));
        }
        let f = &self.ast.functions[func as usize];
        let mut locals = args;
        for (slot, ty) in locals.iter_mut().zip(&f.params) {
            *slot &= mask(*ty);
        }
        locals.extend(f.locals.iter().map(|_| 0));
        let mut stack = Vec::new();
        self.seq(func, &f.body, &mut locals, &mut stack)?;
        self.depth -= 1;
        let n = f.results.len();
        Ok(stack.split_off(stack.len() - n))
    }

    fn local_type(&self, func: u32, idx: u32) -> ValType {
        self.ast.functions[func as usize]
            .local_type(idx)
            .expect("validated local index")
    }

    fn inject(&mut self, func: u32, locals: &mut [u64]) {
        let ordinal = self.loops_entered;
        for j in self.injections.iter().filter(|j| j.ordinal == ordinal) {
            match j.slot {
                Slot::Local(i) => locals[i as usize] = j.value & mask(self.local_type(func, i)),
                Slot::Global(i) => self.globals[i as usize] = j.value & mask(self.ast.globals[i as usize].ty),
                Slot::Byte(a) => {
                    if let Some(cell) = self.mem.get_mut(a as usize) {
                        *cell = j.value as u8;
                    }
                }
            }
        }
    }

    fn block(
        &mut self,
        func: u32,
        ty: BlockType,
        body: &[Instr],
        locals: &mut Vec<u64>,
        stack: &mut Vec<u64>,
    ) -> Result<Flow, Stop> {
        let height = stack.len();
        match self.seq(func, body, locals, stack)? {
            Flow::Br(0) => {
                let keep = stack.split_off(stack.len() - ty.arity());
                stack.truncate(height);
                stack.extend(keep);
                Ok(Flow::Next)
            }
            Flow::Br(n) => Ok(Flow::Br(n - 1)),
            other => Ok(other),
        }
    }

    fn seq(&mut self, func: u32, body: &[Instr], locals: &mut Vec<u64>, stack: &mut Vec<u64>) -> Result<Flow, Stop> {
        for i in body {
            if self.fuel == 0 {
                return Err(Stop::OutOfFuel);
            }
            self.fuel -= 1;
            match self.instr(func, i, locals, stack)? {
                Flow::Next => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Next)
    }

    fn instr(&mut self, func: u32, i: &Instr, locals: &mut Vec<u64>, stack: &mut Vec<u64>) -> Result<Flow, Stop> {
        use InstrKind as K;
        let pop = |stack: &mut Vec<u64>| stack.pop().expect("validated stack");
        match &i.kind {
            K::Unreachable => return Err(Stop::Trap("unreachable".into())),
            K::Nop => {}
            K::Block { ty, body } => return self.block(func, *ty, body, locals, stack),
            K::Loop { body, .. } => {
                self.loops_entered += 1;
                self.inject(func, locals);
                let height = stack.len();
                loop {
                    if let Some(bytes) = &self.header_bytes {
                        self.headers.push(HeaderVisit {
                            site: SiteId { func, instr: i.id },
                            locals: locals.clone(),
                            globals: self.globals.clone(),
                            bytes: bytes.iter().map(|&a| self.mem.get(a as usize).copied().unwrap_or(0)).collect(),
                        });
                    }
                    match self.seq(func, body, locals, stack)? {
                        Flow::Br(0) => stack.truncate(height),
                        Flow::Br(n) => return Ok(Flow::Br(n - 1)),
                        other => return Ok(other),
                    }
                }
            }
            K::If { ty, then_body, else_body } => {
                let c = pop(stack);
                self.observe(func, i, (c != 0) as u64);
                let body = if c != 0 { then_body } else { else_body };
                return self.block(func, *ty, body, locals, stack);
            }
            K::Br(d) => return Ok(Flow::Br(*d)),
            K::BrIf(d) => {
                let c = pop(stack);
                self.observe(func, i, (c != 0) as u64);
                if c != 0 {
                    return Ok(Flow::Br(*d));
                }
            }
            K::BrTable { targets, default } => {
                let idx = pop(stack);
                let d = targets.get(idx as usize).copied().unwrap_or(*default);
                self.observe(func, i, d as u64);
                return Ok(Flow::Br(d));
            }
            K::Return => return Ok(Flow::Return),
            K::Call(f) => {
                let n = self.ast.functions[*f as usize].params.len();
                let args = stack.split_off(stack.len() - n);
                let results = self.invoke(*f, args)?;
                stack.extend(results);
            }
            K::CallIndirect(t) => {
                let idx = pop(stack);
                self.observe(func, i, idx);
                let target = self
                    .ast
                    .table
                    .get(idx as usize)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Stop::Trap("undefined table element".into()))?;
                if self.ast.functions[target as usize].ty() != self.ast.types[*t as usize] {
                    return Err(Stop::Trap("indirect call type mismatch".into()));
                }
                let n = self.ast.functions[target as usize].params.len();
                let args = stack.split_off(stack.len() - n);
                let results = self.invoke(target, args)?;
                stack.extend(results);
            }
            K::Drop => {
                pop(stack);
            }
            K::Select => {
                let c = pop(stack);
                let b = pop(stack);
                let a = pop(stack);
                self.observe(func, i, (c != 0) as u64);
                stack.push(if c != 0 { a } else { b });
            }
            K::LocalGet(x) => stack.push(locals[*x as usize]),
            K::LocalSet(x) => locals[*x as usize] = pop(stack),
            K::LocalTee(x) => locals[*x as usize] = *stack.last().expect("validated stack"),
            K::GlobalGet(x) => stack.push(self.globals[*x as usize]),
            K::GlobalSet(x) => self.globals[*x as usize] = pop(stack),
            K::Load(op, arg) => {
                let base = pop(stack);
                let ea = base + arg.offset as u64;
                self.observe(func, i, ea);
                let bytes = self.bytes(ea, op.bytes)?;
                let mut v = 0u64;
                for (k, b) in bytes.iter().enumerate() {
                    v |= (*b as u64) << (8 * k);
                }
                let bits = 8 * op.bytes;
                if op.signed && bits < 64 && v >> (bits - 1) & 1 == 1 {
                    v |= u64::MAX << bits;
                }
                stack.push(v & mask(op.ty));
            }
            K::Store(op, arg) => {
                let v = pop(stack);
                let base = pop(stack);
                let ea = base + arg.offset as u64;
                self.observe(func, i, ea);
                self.bytes(ea, op.bytes)?;
                for k in 0..op.bytes as usize {
                    self.mem[ea as usize + k] = (v >> (8 * k)) as u8;
                }
            }
            K::Const(ty, v) => stack.push(v & mask(*ty)),
            K::Eqz(_) => {
                let a = pop(stack);
                stack.push((a == 0) as u64);
            }
            K::Unary(ty, op) => {
                let a = pop(stack);
                stack.push(unary(*ty, *op, a));
            }
            K::Binary(ty, op) => {
                let b = pop(stack);
                let a = pop(stack);
                stack.push(binary(*ty, *op, a, b)?);
            }
            K::Compare(ty, op) => {
                let b = pop(stack);
                let a = pop(stack);
                stack.push(compare(*ty, *op, a, b) as u64);
            }
            K::Convert(op) => {
                let a = pop(stack);
                stack.push(match op {
                    ConvOp::I32WrapI64 => a & u32::MAX as u64,
                    ConvOp::I64ExtendI32S => a as u32 as i32 as i64 as u64,
                    ConvOp::I64ExtendI32U => a & u32::MAX as u64,
                });
            }
        }
        Ok(Flow::Next)
    }

    fn bytes(&self, ea: u64, n: u32) -> Result<&[u8], Stop> {
        let end = ea + n as u64;
        if end > self.mem.len() as u64 {
            return Err(Stop::Trap(format!("out-of-bounds access at {ea}")));
        }
        Ok(&self.mem[ea as usize..end as usize])
    }
}

fn unary(ty: ValType, op: UnOp, a: u64) -> u64 {
    match ty {
        ValType::I32 => {
            let x = a as u32;
            (match op {
                UnOp::Clz => x.leading_zeros(),
                UnOp::Ctz => x.trailing_zeros(),
                UnOp::Popcnt => x.count_ones(),
                UnOp::Extend8S => x as u8 as i8 as i32 as u32,
                UnOp::Extend16S => x as u16 as i16 as i32 as u32,
                UnOp::Extend32S => x,
            }) as u64
        }
        ValType::I64 => match op {
            UnOp::Clz => a.leading_zeros() as u64,
            UnOp::Ctz => a.trailing_zeros() as u64,
            UnOp::Popcnt => a.count_ones() as u64,
            UnOp::Extend8S => a as u8 as i8 as i64 as u64,
            UnOp::Extend16S => a as u16 as i16 as i64 as u64,
            UnOp::Extend32S => a as u32 as i32 as i64 as u64,
        },
    }
}

fn binary(ty: ValType, op: BinOp, a: u64, b: u64) -> Result<u64, Stop> {
    let div0 = || Stop::Trap("integer divide by zero".into());
    let ovf = || Stop::Trap("integer overflow".into());
    Ok(match ty {
        ValType::I32 => {
            let (x, y) = (a as u32, b as u32);
            let (sx, sy) = (x as i32, y as i32);
            (match op {
                BinOp::Add => x.wrapping_add(y),
                BinOp::Sub => x.wrapping_sub(y),
                BinOp::Mul => x.wrapping_mul(y),
                BinOp::DivU => x.checked_div(y).ok_or_else(div0)?,
                BinOp::RemU => x.checked_rem(y).ok_or_else(div0)?,
                BinOp::DivS => {
                    if y == 0 {
                        return Err(div0());
                    }
                    sx.checked_div(sy).ok_or_else(ovf)? as u32
                }
                BinOp::RemS => {
                    if y == 0 {
                        return Err(div0());
                    }
                    sx.wrapping_rem(sy) as u32
                }
                BinOp::And => x & y,
                BinOp::Or => x | y,
                BinOp::Xor => x ^ y,
                BinOp::Shl => x.wrapping_shl(y),
                BinOp::ShrS => sx.wrapping_shr(y) as u32,
                BinOp::ShrU => x.wrapping_shr(y),
                BinOp::Rotl => x.rotate_left(y % 32),
                BinOp::Rotr => x.rotate_right(y % 32),
            }) as u64
        }
        ValType::I64 => {
            let (sx, sy) = (a as i64, b as i64);
            match op {
                BinOp::Add => a.wrapping_add(b),
                BinOp::Sub => a.wrapping_sub(b),
                BinOp::Mul => a.wrapping_mul(b),
                BinOp::DivU => a.checked_div(b).ok_or_else(div0)?,
                BinOp::RemU => a.checked_rem(b).ok_or_else(div0)?,
                BinOp::DivS => {
                    if b == 0 {
                        return Err(div0());
                    }
                    sx.checked_div(sy).ok_or_else(ovf)? as u64
                }
                BinOp::RemS => {
                    if b == 0 {
                        return Err(div0());
                    }
                    sx.wrapping_rem(sy) as u64
                }
                BinOp::And => a & b,
                BinOp::Or => a | b,
                BinOp::Xor => a ^ b,
                BinOp::Shl => a.wrapping_shl(b as u32),
                BinOp::ShrS => sx.wrapping_shr(b as u32) as u64,
                BinOp::ShrU => a.wrapping_shr(b as u32),
                BinOp::Rotl => a.rotate_left((b % 64) as u32),
                BinOp::Rotr => a.rotate_right((b % 64) as u32),
            }
        }
    })
}

fn compare(ty: ValType, op: CmpOp, a: u64, b: u64) -> bool {
    let (sa, sb) = match ty {
        ValType::I32 => (a as u32 as i32 as i64, b as u32 as i32 as i64),
        ValType::I64 => (a as i64, b as i64),
    };
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::LtS => sa < sb,
        CmpOp::LtU => a < b,
        CmpOp::GtS => sa > sb,
        CmpOp::GtU => a > b,
        CmpOp::LeS => sa <= sb,
        CmpOp::LeU => a <= b,
        CmpOp::GeS => sa >= sb,
        CmpOp::GeU => a >= b,
    }
}
