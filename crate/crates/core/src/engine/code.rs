//! Function bodies flattened into a linear op array with resolved jump
//! positions, so an execution cursor is just an index.

use crate::wat::{FuncDef, Instr, InstrKind, Pos, SiteId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    Block { arity: usize, end: usize },
    Loop { arity: usize, end: usize },
    If { arity: usize, else_at: Option<usize>, end: usize },
    /// Reached only by falling off the end of a `then` arm.
    Else { end: usize },
    End,
    /// Any instruction without a nested body.
    Plain(InstrKind),
}

#[derive(Clone, Debug)]
pub struct Code {
    pub ops: Vec<Op>,
    pub ids: Vec<u32>,
    pub pos: Vec<Pos>,
    pub func: u32,
}

impl Code {
    pub fn site(&self, ip: usize) -> SiteId {
        SiteId {
            func: self.func,
            instr: self.ids[ip],
        }
    }

    pub fn compile(func_index: u32, f: &FuncDef) -> Code {
        let mut c = Code {
            ops: Vec::new(),
            ids: Vec::new(),
            pos: Vec::new(),
            func: func_index,
        };
        c.seq(&f.body);
        c
    }

    fn push(&mut self, op: Op, i: &Instr) -> usize {
        self.ops.push(op);
        self.ids.push(i.id);
        self.pos.push(i.pos);
        self.ops.len() - 1
    }

    fn seq(&mut self, body: &[Instr]) {
        for i in body {
            match &i.kind {
                InstrKind::Block { ty, body } | InstrKind::Loop { ty, body } => {
                    let is_loop = matches!(i.kind, InstrKind::Loop { .. });
                    let at = self.push(Op::End, i);
                    self.seq(body);
                    let end = self.push(Op::End, i);
                    let arity = ty.arity();
                    self.ops[at] = if is_loop {
                        Op::Loop { arity, end }
                    } else {
                        Op::Block { arity, end }
                    };
                }
                InstrKind::If { ty, then_body, else_body } => {
                    let at = self.push(Op::End, i);
                    self.seq(then_body);
                    let else_at = if else_body.is_empty() {
                        None
                    } else {
                        let e = self.push(Op::End, i);
                        self.seq(else_body);
                        Some(e)
                    };
                    let end = self.push(Op::End, i);
                    if let Some(e) = else_at {
                        self.ops[e] = Op::Else { end };
                    }
                    self.ops[at] = Op::If {
                        arity: ty.arity(),
                        else_at,
                        end,
                    };
                }
                k => {
                    self.push(Op::Plain(k.clone()), i);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wat::parse_module;

    #[test]
    fn jump_positions() {
        let ast = parse_module(
            "(module (func (param i32) (block (loop (br_if 1 (local.get 0)) (br 0))) (if (local.get 0) (then nop) (else nop))))",
        )
        .unwrap();
        let c = Code::compile(0, &ast.functions[0]);
        assert_eq!(c.ops[0], Op::Block { arity: 0, end: 6 });
        assert_eq!(c.ops[1], Op::Loop { arity: 0, end: 5 });
        let Op::If { else_at: Some(e), end, .. } = c.ops[8] else {
            panic!("{:?}", c.ops[8])
        };
        assert_eq!(c.ops[e], Op::Else { end });
        assert_eq!(c.ops[end], Op::End);
        assert_eq!(end, c.ops.len() - 1);
    }
}
