//! Standard WebAssembly operand-stack typing for the supported subset.

use super::ast::*;
use super::FrontendError;

struct Ctrl {
    /// Types a branch to this label must provide.
    label_types: Vec<ValType>,
    end_types: Vec<ValType>,
    height: usize,
    unreachable: bool,
}

struct Checker<'a> {
    ast: &'a ModuleAst,
    func: &'a FuncDef,
    stack: Vec<Option<ValType>>,
    ctrls: Vec<Ctrl>,
}

fn err(pos: Pos, msg: impl Into<String>) -> FrontendError {
    FrontendError::Validation {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

impl Checker<'_> {
    fn push(&mut self, t: ValType) {
        self.stack.push(Some(t));
    }

    fn pop(&mut self, pos: Pos) -> Result<Option<ValType>, FrontendError> {
        let ctrl = self.ctrls.last().expect("control frame");
        if self.stack.len() == ctrl.height {
            if ctrl.unreachable {
                return Ok(None);
            }
            return Err(err(pos, "operand stack underflow"));
        }
        Ok(self.stack.pop().flatten())
    }

    fn pop_expect(&mut self, pos: Pos, t: ValType) -> Result<(), FrontendError> {
        match self.pop(pos)? {
            Some(actual) if actual != t => Err(err(
                pos,
                format!("type mismatch: expected {}, found {}", t.name(), actual.name()),
            )),
            _ => Ok(()),
        }
    }

    fn pop_all(&mut self, pos: Pos, types: &[ValType]) -> Result<(), FrontendError> {
        for t in types.iter().rev() {
            self.pop_expect(pos, *t)?;
        }
        Ok(())
    }

    fn set_unreachable(&mut self) {
        let ctrl = self.ctrls.last_mut().expect("control frame");
        self.stack.truncate(ctrl.height);
        ctrl.unreachable = true;
    }

    fn label_types(&self, pos: Pos, depth: u32) -> Result<Vec<ValType>, FrontendError> {
        let n = self.ctrls.len();
        if depth as usize >= n {
            return Err(err(pos, format!("branch depth {depth} exceeds nesting depth {}", n - 1)));
        }
        Ok(self.ctrls[n - 1 - depth as usize].label_types.clone())
    }

    fn local(&self, pos: Pos, idx: u32) -> Result<ValType, FrontendError> {
        self.func
            .local_type(idx)
            .ok_or_else(|| err(pos, format!("unknown local {idx}")))
    }

    fn global(&self, pos: Pos, idx: u32) -> Result<&GlobalDef, FrontendError> {
        self.ast
            .globals
            .get(idx as usize)
            .ok_or_else(|| err(pos, format!("unknown global {idx}")))
    }

    fn need_memory(&self, pos: Pos) -> Result<(), FrontendError> {
        if self.ast.memory.is_none() {
            return Err(err(pos, "memory access without a declared memory"));
        }
        Ok(())
    }

    fn block(&mut self, pos: Pos, ty: BlockType, is_loop: bool, body: &[Instr]) -> Result<(), FrontendError> {
        let end_types: Vec<ValType> = match ty {
            BlockType::Empty => vec![],
            BlockType::Value(t) => vec![t],
        };
        self.ctrls.push(Ctrl {
            label_types: if is_loop { vec![] } else { end_types.clone() },
            end_types,
            height: self.stack.len(),
            unreachable: false,
        });
        self.seq(body)?;
        self.end(pos)
    }

    fn end(&mut self, pos: Pos) -> Result<(), FrontendError> {
        let ctrl = self.ctrls.last().expect("control frame");
        let end_types = ctrl.end_types.clone();
        let height = ctrl.height;
        self.pop_all(pos, &end_types)?;
        if self.stack.len() != height {
            return Err(err(pos, "values left on the operand stack at end of block"));
        }
        self.ctrls.pop();
        for t in end_types {
            self.push(t);
        }
        Ok(())
    }

    fn seq(&mut self, body: &[Instr]) -> Result<(), FrontendError> {
        for i in body {
            self.instr(i)?;
        }
        Ok(())
    }

    fn instr(&mut self, i: &Instr) -> Result<(), FrontendError> {
        use InstrKind as K;
        use ValType::I32;
        let pos = i.pos;
        match &i.kind {
            K::Unreachable => self.set_unreachable(),
            K::Nop => {}
            K::Block { ty, body } => self.block(pos, *ty, false, body)?,
            K::Loop { ty, body } => self.block(pos, *ty, true, body)?,
            K::If { ty, then_body, else_body } => {
                self.pop_expect(pos, I32)?;
                let end_types: Vec<ValType> = match ty {
                    BlockType::Empty => vec![],
                    BlockType::Value(t) => vec![*t],
                };
                if else_body.is_empty() && !end_types.is_empty() {
                    return Err(err(pos, "`if` with a result needs an `else` branch"));
                }
                let height = self.stack.len();
                self.ctrls.push(Ctrl {
                    label_types: end_types.clone(),
                    end_types: end_types.clone(),
                    height,
                    unreachable: false,
                });
                self.seq(then_body)?;
                self.pop_all(pos, &end_types)?;
                if self.stack.len() != height {
                    return Err(err(pos, "values left on the operand stack at end of `then`"));
                }
                let ctrl = self.ctrls.last_mut().expect("control frame");
                ctrl.unreachable = false;
                self.seq(else_body)?;
                self.end(pos)?;
            }
            K::Br(d) => {
                let types = self.label_types(pos, *d)?;
                self.pop_all(pos, &types)?;
                self.set_unreachable();
            }
            K::BrIf(d) => {
                self.pop_expect(pos, I32)?;
                let types = self.label_types(pos, *d)?;
                self.pop_all(pos, &types)?;
                for t in types {
                    self.push(t);
                }
            }
            K::BrTable { targets, default } => {
                self.pop_expect(pos, I32)?;
                let arity = self.label_types(pos, *default)?;
                for t in targets {
                    if self.label_types(pos, *t)? != arity {
                        return Err(err(pos, "br_table targets disagree on arity"));
                    }
                }
                self.pop_all(pos, &arity)?;
                self.set_unreachable();
            }
            K::Return => {
                let results = self.func.results.clone();
                self.pop_all(pos, &results)?;
                self.set_unreachable();
            }
            K::Call(f) => {
                let callee = self
                    .ast
                    .functions
                    .get(*f as usize)
                    .ok_or_else(|| err(pos, format!("unknown function {f}")))?;
                let ty = callee.ty();
                self.pop_all(pos, &ty.params)?;
                for t in ty.results {
                    self.push(t);
                }
            }
            K::CallIndirect(t) => {
                let ty = self
                    .ast
                    .types
                    .get(*t as usize)
                    .cloned()
                    .ok_or_else(|| err(pos, format!("unknown type {t}")))?;
                if ty.results.len() > 1 {
                    return Err(FrontendError::Unsupported {
                        line: pos.line,
                        col: pos.col,
                        what: "multi-value results".into(),
                    });
                }
                self.pop_expect(pos, I32)?;
                self.pop_all(pos, &ty.params)?;
                for t in ty.results {
                    self.push(t);
                }
            }
            K::Drop => {
                self.pop(pos)?;
            }
            K::Select => {
                self.pop_expect(pos, I32)?;
                let a = self.pop(pos)?;
                let b = self.pop(pos)?;
                match (a, b) {
                    (Some(x), Some(y)) if x != y => return Err(err(pos, "select operands differ in type")),
                    (Some(x), _) | (None, Some(x)) => self.push(x),
                    (None, None) => self.stack.push(None),
                }
            }
            K::LocalGet(l) => {
                let t = self.local(pos, *l)?;
                self.push(t);
            }
            K::LocalSet(l) => {
                let t = self.local(pos, *l)?;
                self.pop_expect(pos, t)?;
            }
            K::LocalTee(l) => {
                let t = self.local(pos, *l)?;
                self.pop_expect(pos, t)?;
                self.push(t);
            }
            K::GlobalGet(g) => {
                let t = self.global(pos, *g)?.ty;
                self.push(t);
            }
            K::GlobalSet(g) => {
                let gd = self.global(pos, *g)?;
                if !gd.mutable {
                    return Err(err(pos, format!("global {g} is immutable")));
                }
                let t = gd.ty;
                self.pop_expect(pos, t)?;
            }
            K::Load(op, _) => {
                self.need_memory(pos)?;
                self.pop_expect(pos, I32)?;
                self.push(op.ty);
            }
            K::Store(op, _) => {
                self.need_memory(pos)?;
                self.pop_expect(pos, op.ty)?;
                self.pop_expect(pos, I32)?;
            }
            K::Const(t, _) => self.push(*t),
            K::Eqz(t) => {
                self.pop_expect(pos, *t)?;
                self.push(I32);
            }
            K::Unary(t, _) => {
                self.pop_expect(pos, *t)?;
                self.push(*t);
            }
            K::Binary(t, _) => {
                self.pop_expect(pos, *t)?;
                self.pop_expect(pos, *t)?;
                self.push(*t);
            }
            K::Compare(t, _) => {
                self.pop_expect(pos, *t)?;
                self.pop_expect(pos, *t)?;
                self.push(I32);
            }
            K::Convert(c) => {
                let (from, to) = match c {
                    ConvOp::I32WrapI64 => (ValType::I64, I32),
                    ConvOp::I64ExtendI32S | ConvOp::I64ExtendI32U => (I32, ValType::I64),
                };
                self.pop_expect(pos, from)?;
                self.push(to);
            }
        }
        Ok(())
    }
}

pub(crate) fn validate(ast: &ModuleAst) -> Result<(), FrontendError> {
    for slot in ast.table.iter().flatten() {
        if *slot as usize >= ast.functions.len() {
            return Err(err(Pos::default(), format!("table references unknown function {slot}")));
        }
    }
    for func in &ast.functions {
        let mut c = Checker {
            ast,
            func,
            stack: Vec::new(),
            ctrls: vec![Ctrl {
                label_types: func.results.clone(),
                end_types: func.results.clone(),
                height: 0,
                unreachable: false,
            }],
        };
        c.seq(&func.body)?;
        c.end(func.pos)?;
    }
    Ok(())
}
