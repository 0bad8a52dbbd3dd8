//! Prints a [`ModuleAst`] back to WAT text (flat instruction syntax).

use std::fmt::Write;

use super::ast::*;

fn memarg(out: &mut String, m: &MemArg) {
    if m.offset != 0 {
        let _ = write!(out, " offset={}", m.offset);
    }
    if let Some(a) = m.align {
        let _ = write!(out, " align={a}");
    }
}

fn block_type(out: &mut String, ty: BlockType) {
    if let BlockType::Value(t) = ty {
        let _ = write!(out, " (result {})", t.name());
    }
}

fn signed_literal(ty: ValType, v: u64) -> String {
    match ty {
        ValType::I32 => (v as u32 as i32).to_string(),
        ValType::I64 => (v as i64).to_string(),
    }
}

pub(crate) fn op_name(kind: &InstrKind) -> String {
    use InstrKind as K;
    let bin = |o: BinOp| match o {
        BinOp::Add => "add",
        BinOp::Sub => "sub",
        BinOp::Mul => "mul",
        BinOp::DivS => "div_s",
        BinOp::DivU => "div_u",
        BinOp::RemS => "rem_s",
        BinOp::RemU => "rem_u",
        BinOp::And => "and",
        BinOp::Or => "or",
        BinOp::Xor => "xor",
        BinOp::Shl => "shl",
        BinOp::ShrS => "shr_s",
        BinOp::ShrU => "shr_u",
        BinOp::Rotl => "rotl",
        BinOp::Rotr => "rotr",
    };
    let cmp = |o: CmpOp| match o {
        CmpOp::Eq => "eq",
        CmpOp::Ne => "ne",
        CmpOp::LtS => "lt_s",
        CmpOp::LtU => "lt_u",
        CmpOp::GtS => "gt_s",
        CmpOp::GtU => "gt_u",
        CmpOp::LeS => "le_s",
        CmpOp::LeU => "le_u",
        CmpOp::GeS => "ge_s",
        CmpOp::GeU => "ge_u",
    };
    match kind {
        K::Unreachable => "unreachable".into(),
        K::Nop => "nop".into(),
        K::Block { .. } => "block".into(),
        K::Loop { .. } => "loop".into(),
        K::If { .. } => "if".into(),
        K::Br(_) => "br".into(),
        K::BrIf(_) => "br_if".into(),
        K::BrTable { .. } => "br_table".into(),
        K::Return => "return".into(),
        K::Call(_) => "call".into(),
        K::CallIndirect(_) => "call_indirect".into(),
        K::Drop => "drop".into(),
        K::Select => "select".into(),
        K::LocalGet(_) => "local.get".into(),
        K::LocalSet(_) => "local.set".into(),
        K::LocalTee(_) => "local.tee".into(),
        K::GlobalGet(_) => "global.get".into(),
        K::GlobalSet(_) => "global.set".into(),
        K::Load(op, _) => {
            let suffix = match (op.ty, op.bytes) {
                (ValType::I32, 4) | (ValType::I64, 8) => String::new(),
                (_, b) => format!("{}_{}", b * 8, if op.signed { "s" } else { "u" }),
            };
            format!("{}.load{}", op.ty.name(), suffix)
        }
        K::Store(op, _) => {
            let suffix = match (op.ty, op.bytes) {
                (ValType::I32, 4) | (ValType::I64, 8) => String::new(),
                (_, b) => (b * 8).to_string(),
            };
            format!("{}.store{}", op.ty.name(), suffix)
        }
        K::Const(t, _) => format!("{}.const", t.name()),
        K::Eqz(t) => format!("{}.eqz", t.name()),
        K::Unary(t, u) => format!(
            "{}.{}",
            t.name(),
            match u {
                UnOp::Clz => "clz",
                UnOp::Ctz => "ctz",
                UnOp::Popcnt => "popcnt",
                UnOp::Extend8S => "extend8_s",
                UnOp::Extend16S => "extend16_s",
                UnOp::Extend32S => "extend32_s",
            }
        ),
        K::Binary(t, b) => format!("{}.{}", t.name(), bin(*b)),
        K::Compare(t, c) => format!("{}.{}", t.name(), cmp(*c)),
        K::Convert(ConvOp::I32WrapI64) => "i32.wrap_i64".into(),
        K::Convert(ConvOp::I64ExtendI32S) => "i64.extend_i32_s".into(),
        K::Convert(ConvOp::I64ExtendI32U) => "i64.extend_i32_u".into(),
    }
}

fn instrs(out: &mut String, body: &[Instr], depth: usize) {
    for i in body {
        let pad = "  ".repeat(depth);
        out.push('\n');
        out.push_str(&pad);
        out.push_str(&op_name(&i.kind));
        match &i.kind {
            InstrKind::Block { ty, body } | InstrKind::Loop { ty, body } => {
                block_type(out, *ty);
                instrs(out, body, depth + 1);
                let _ = write!(out, "\n{pad}end");
            }
            InstrKind::If { ty, then_body, else_body } => {
                block_type(out, *ty);
                instrs(out, then_body, depth + 1);
                if !else_body.is_empty() {
                    let _ = write!(out, "\n{pad}else");
                    instrs(out, else_body, depth + 1);
                }
                let _ = write!(out, "\n{pad}end");
            }
            InstrKind::Br(d) | InstrKind::BrIf(d) => {
                let _ = write!(out, " {d}");
            }
            InstrKind::BrTable { targets, default } => {
                for t in targets {
                    let _ = write!(out, " {t}");
                }
                let _ = write!(out, " {default}");
            }
            InstrKind::Call(f) => {
                let _ = write!(out, " {f}");
            }
            InstrKind::CallIndirect(t) => {
                let _ = write!(out, " (type {t})");
            }
            InstrKind::LocalGet(x)
            | InstrKind::LocalSet(x)
            | InstrKind::LocalTee(x)
            | InstrKind::GlobalGet(x)
            | InstrKind::GlobalSet(x) => {
                let _ = write!(out, " {x}");
            }
            InstrKind::Load(_, m) | InstrKind::Store(_, m) => memarg(out, m),
            InstrKind::Const(t, v) => {
                let _ = write!(out, " {}", signed_literal(*t, *v));
            }
            _ => {}
        }
    }
}

fn string_lit(s: &str) -> String {
    let mut out = String::from("\"");
    for b in s.bytes() {
        match b {
            b'"' => out.push_str("\\\""),
            b'\\' => out.push_str("\\\\"),
            0x20..=0x7e => out.push(b as char),
            _ => {
                let _ = write!(out, "\\{b:02x}");
            }
        }
    }
    out.push('"');
    out
}

fn types(out: &mut String, kw: &str, ts: &[ValType]) {
    if !ts.is_empty() {
        let _ = write!(out, " ({kw}");
        for t in ts {
            let _ = write!(out, " {}", t.name());
        }
        out.push(')');
    }
}

/// Renders `ast` as WAT text that parses back to a structurally identical AST.
pub fn print_module(ast: &ModuleAst) -> String {
    let mut out = String::from("(module");
    for t in &ast.types {
        out.push_str("\n  (type (func");
        types(&mut out, "param", &t.params);
        types(&mut out, "result", &t.results);
        out.push_str("))");
    }
    if let Some(m) = &ast.memory {
        let limits = match m.max_pages {
            Some(max) => format!("{} {max}", m.min_pages),
            None => m.min_pages.to_string(),
        };
        let exports: String = m.exports.iter().map(|e| format!(" (export {})", string_lit(e))).collect();
        match &m.import {
            Some((a, b)) => {
                let _ = write!(
                    out,
                    "\n  (memory{exports} (import {} {}) {limits})",
                    string_lit(a),
                    string_lit(b)
                );
            }
            None => {
                let _ = write!(out, "\n  (memory{exports} {limits})");
            }
        }
    }
    for g in &ast.globals {
        let ty = if g.mutable {
            format!("(mut {})", g.ty.name())
        } else {
            g.ty.name().to_string()
        };
        let name = g.name.as_deref().map(|n| format!(" ${n}")).unwrap_or_default();
        let _ = write!(
            out,
            "\n  (global{name} {ty} ({}.const {}))",
            g.ty.name(),
            signed_literal(g.ty, g.init)
        );
    }
    if !ast.table.is_empty() {
        let _ = write!(out, "\n  (table {} funcref)", ast.table.len());
        // Contiguous runs of initialised slots become element segments.
        let mut k = 0;
        while k < ast.table.len() {
            if ast.table[k].is_none() {
                k += 1;
                continue;
            }
            let start = k;
            let mut funcs = Vec::new();
            while let Some(Some(f)) = ast.table.get(k) {
                funcs.push(f.to_string());
                k += 1;
            }
            let _ = write!(out, "\n  (elem (i32.const {start}) {})", funcs.join(" "));
        }
    }
    for f in &ast.functions {
        out.push_str("\n  (func");
        if let Some(n) = &f.name {
            let _ = write!(out, " ${n}");
        }
        for e in &f.exports {
            let _ = write!(out, " (export {})", string_lit(e));
        }
        types(&mut out, "param", &f.params);
        types(&mut out, "result", &f.results);
        types(&mut out, "local", &f.locals);
        instrs(&mut out, &f.body, 2);
        out.push(')');
    }
    for p in &ast.policies {
        let kw = match p.class {
            Classification::Public => "public",
            Classification::Secret => "secret",
        };
        let _ = write!(out, "\n  ({kw} (i32.const {}) (i32.const {}))", p.start, p.end);
    }
    out.push_str(")\n");
    if let Some(e) = &ast.entry {
        let _ = write!(out, "(symb_exec {}", string_lit(&e.function));
        for a in &e.args {
            match a {
                ArgSpec::Concrete { ty, value } => {
                    let _ = write!(out, " ({}.sconst {})", ty.name(), signed_literal(*ty, *value));
                }
                ArgSpec::Symbolic { ty, label, .. } => {
                    let _ = write!(out, " ({}.sconst {label})", ty.name());
                }
            }
        }
        out.push_str(")\n");
    }
    out
}
