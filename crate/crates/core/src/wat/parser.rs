use std::collections::HashMap;

use super::ast::*;
use super::sexpr::{read_all, SExpr};
use super::FrontendError;

fn syntax(pos: Pos, msg: impl Into<String>) -> FrontendError {
    FrontendError::Syntax {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

fn unsupported(pos: Pos, what: impl Into<String>) -> FrontendError {
    FrontendError::Unsupported {
        line: pos.line,
        col: pos.col,
        what: what.into(),
    }
}

fn validation(pos: Pos, msg: impl Into<String>) -> FrontendError {
    FrontendError::Validation {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

/// Parses an integer literal and returns its two's-complement bit pattern at
/// `bits` width.
pub(crate) fn parse_int(text: &str, bits: u32) -> Option<u64> {
    let (neg, rest) = match text.as_bytes().first()? {
        b'-' => (true, &text[1..]),
        b'+' => (false, &text[1..]),
        _ => (false, text),
    };
    let cleaned: String = rest.chars().filter(|&c| c != '_').collect();
    if cleaned.is_empty() {
        return None;
    }
    let magnitude = if let Some(hex) = cleaned.strip_prefix("0x").or_else(|| cleaned.strip_prefix("0X")) {
        u128::from_str_radix(hex, 16).ok()?
    } else {
        if !cleaned.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        cleaned.parse::<u128>().ok()?
    };
    let limit_unsigned = 1u128 << bits;
    let limit_neg = 1u128 << (bits - 1);
    let mask = (limit_unsigned - 1) as u64;
    if neg {
        if magnitude > limit_neg {
            return None;
        }
        Some((magnitude as u64).wrapping_neg() & mask)
    } else {
        if magnitude >= limit_unsigned {
            return None;
        }
        Some(magnitude as u64)
    }
}

fn parse_valtype(e: &SExpr) -> Result<ValType, FrontendError> {
    match e.atom() {
        Some("i32") => Ok(ValType::I32),
        Some("i64") => Ok(ValType::I64),
        Some(t @ ("f32" | "f64" | "v128" | "funcref" | "externref")) => {
            Err(unsupported(e.pos(), format!("value type `{t}`")))
        }
        _ => Err(syntax(e.pos(), "expected value type")),
    }
}

fn is_id(e: &SExpr) -> bool {
    e.atom().is_some_and(|a| a.starts_with('$'))
}

fn expect_u32(e: &SExpr, what: &str) -> Result<u32, FrontendError> {
    e.atom()
        .and_then(|a| parse_int(a, 32))
        .map(|v| v as u32)
        .filter(|_| !e.atom().unwrap_or("").starts_with('-'))
        .ok_or_else(|| syntax(e.pos(), format!("expected {what}")))
}

/// `(i32.const N)` as used by policy ranges, element offsets and global
/// initialisers.
fn const_expr(e: &SExpr) -> Result<(ValType, u64), FrontendError> {
    let items = e.list().ok_or_else(|| syntax(e.pos(), "expected constant expression"))?;
    let (ty, bits) = match items.first().and_then(SExpr::atom) {
        Some("i32.const") => (ValType::I32, 32),
        Some("i64.const") => (ValType::I64, 64),
        _ => return Err(syntax(e.pos(), "expected `(i32.const N)` or `(i64.const N)`")),
    };
    let lit = items
        .get(1)
        .and_then(SExpr::atom)
        .and_then(|a| parse_int(a, bits))
        .ok_or_else(|| syntax(e.pos(), "bad integer literal"))?;
    if items.len() != 2 {
        return Err(syntax(e.pos(), "malformed constant expression"));
    }
    Ok((ty, lit))
}

/// Names declared in a module, collected before bodies are parsed.
#[derive(Default)]
struct Names {
    funcs: HashMap<String, u32>,
    globals: HashMap<String, u32>,
    types: HashMap<String, u32>,
}

#[derive(Default)]
struct PartialModule {
    types: Vec<FuncType>,
    functions: Vec<FuncDef>,
    memory: Option<MemoryDecl>,
    memory_pos: Option<Pos>,
    globals: Vec<GlobalDef>,
    policies: Vec<PolicyRange>,
    entry: Option<EntrySpec>,
    table_size: Option<u32>,
    elems: Vec<(u32, Vec<u32>, Pos)>,
    pending_func_exports: Vec<(u32, String)>,
    pending_mem_exports: Vec<String>,
    pos: Pos,
}

struct FuncCtx<'a> {
    names: &'a Names,
    types: &'a mut Vec<FuncType>,
    locals: HashMap<String, u32>,
    labels: Vec<Option<String>>,
}

impl FuncCtx<'_> {
    fn index(&self, e: &SExpr, space: &HashMap<String, u32>, what: &str) -> Result<u32, FrontendError> {
        match e.atom() {
            Some(a) if a.starts_with('$') => space
                .get(a)
                .copied()
                .ok_or_else(|| validation(e.pos(), format!("unknown {what} `{a}`"))),
            Some(_) => expect_u32(e, what),
            None => Err(syntax(e.pos(), format!("expected {what} index"))),
        }
    }

    fn label(&self, e: &SExpr) -> Result<u32, FrontendError> {
        match e.atom() {
            Some(a) if a.starts_with('$') => self
                .labels
                .iter()
                .rev()
                .position(|l| l.as_deref() == Some(a))
                .map(|d| d as u32)
                .ok_or_else(|| validation(e.pos(), format!("unknown label `{a}`"))),
            Some(_) => expect_u32(e, "label"),
            None => Err(syntax(e.pos(), "expected label")),
        }
    }

    fn type_use(&mut self, items: &[SExpr], i: &mut usize) -> Result<Option<u32>, FrontendError> {
        let mut explicit = None;
        let mut inline = FuncType::default();
        let mut saw_inline = false;
        while let Some(e) = items.get(*i) {
            match e.head() {
                Some("type") => {
                    let l = e.list().unwrap_or(&[]);
                    let t = l.get(1).ok_or_else(|| syntax(e.pos(), "expected type index"))?;
                    explicit = Some(self.index(t, &self.names.types, "type")?);
                }
                Some("param") => {
                    saw_inline = true;
                    for t in &e.list().unwrap_or(&[])[1..] {
                        if !is_id(t) {
                            inline.params.push(parse_valtype(t)?);
                        }
                    }
                }
                Some("result") => {
                    saw_inline = true;
                    for t in &e.list().unwrap_or(&[])[1..] {
                        inline.results.push(parse_valtype(t)?);
                    }
                }
                _ => break,
            }
            *i += 1;
        }
        match (explicit, saw_inline) {
            (Some(t), _) => Ok(Some(t)),
            (None, true) => {
                let idx = match self.types.iter().position(|t| *t == inline) {
                    Some(p) => p as u32,
                    None => {
                        self.types.push(inline);
                        (self.types.len() - 1) as u32
                    }
                };
                Ok(Some(idx))
            }
            (None, false) => Ok(None),
        }
    }

    fn block_type(&mut self, items: &[SExpr], i: &mut usize) -> Result<BlockType, FrontendError> {
        let mut ty = BlockType::Empty;
        while let Some(e) = items.get(*i) {
            match e.head() {
                Some("result") => {
                    let l = &e.list().unwrap_or(&[])[1..];
                    match l {
                        [] => {}
                        [t] => ty = BlockType::Value(parse_valtype(t)?),
                        _ => return Err(unsupported(e.pos(), "multi-value block results")),
                    }
                }
                Some("param") => return Err(unsupported(e.pos(), "block parameters")),
                Some("type") => return Err(unsupported(e.pos(), "block type indices")),
                _ => break,
            }
            *i += 1;
        }
        Ok(ty)
    }

    fn opt_label(items: &[SExpr], i: &mut usize) -> Option<String> {
        match items.get(*i) {
            Some(e) if is_id(e) => {
                *i += 1;
                e.atom().map(str::to_string)
            }
            _ => None,
        }
    }

    fn memarg(items: &[SExpr], i: &mut usize) -> Result<MemArg, FrontendError> {
        let mut arg = MemArg::default();
        while let Some(e) = items.get(*i) {
            let Some(a) = e.atom() else { break };
            if let Some(v) = a.strip_prefix("offset=") {
                arg.offset = parse_int(v, 32).ok_or_else(|| syntax(e.pos(), "bad offset"))? as u32;
            } else if let Some(v) = a.strip_prefix("align=") {
                arg.align = Some(parse_int(v, 32).ok_or_else(|| syntax(e.pos(), "bad alignment"))? as u32);
            } else {
                break;
            }
            *i += 1;
        }
        Ok(arg)
    }

    /// Parses a non-structured instruction keyword plus its immediates.
    fn plain(&mut self, kw: &str, pos: Pos, items: &[SExpr], i: &mut usize) -> Result<InstrKind, FrontendError> {
        use InstrKind as K;
        use ValType::{I32, I64};
        let next = |i: &mut usize| -> Result<&SExpr, FrontendError> {
            let e = items.get(*i).ok_or_else(|| syntax(pos, format!("`{kw}` expects an immediate")))?;
            *i += 1;
            Ok(e)
        };
        let load = |ty, bytes, signed| K::Load(LoadOp { ty, bytes, signed }, MemArg::default());
        let store = |ty, bytes| K::Store(StoreOp { ty, bytes }, MemArg::default());
        let kind = match kw {
            "unreachable" => K::Unreachable,
            "nop" => K::Nop,
            "return" => K::Return,
            "drop" => K::Drop,
            "select" => {
                // `select (result t)` is accepted and ignored for integer types.
                while let Some(e) = items.get(*i) {
                    if e.head() == Some("result") {
                        for t in &e.list().unwrap_or(&[])[1..] {
                            parse_valtype(t)?;
                        }
                        *i += 1;
                    } else {
                        break;
                    }
                }
                K::Select
            }
            "br" => K::Br(self.label(next(i)?)?),
            "br_if" => K::BrIf(self.label(next(i)?)?),
            "br_table" => {
                let mut labels = Vec::new();
                while let Some(e) = items.get(*i) {
                    match e.atom() {
                        Some(a) if a.starts_with('$') || a.bytes().all(|b| b.is_ascii_digit()) => {
                            labels.push(self.label(e)?);
                            *i += 1;
                        }
                        _ => break,
                    }
                }
                let default = labels.pop().ok_or_else(|| syntax(pos, "br_table needs at least one label"))?;
                K::BrTable { targets: labels, default }
            }
            "call" => {
                let e = next(i)?;
                K::Call(self.index(e, &self.names.funcs, "function")?)
            }
            "call_indirect" => {
                if let Some(e) = items.get(*i) {
                    if e.atom().is_some() {
                        // Table index; only table 0 exists.
                        let t = e.atom().unwrap_or("");
                        if t != "0" && !t.starts_with('$') {
                            return Err(unsupported(e.pos(), "multiple tables"));
                        }
                        *i += 1;
                    }
                }
                let ty = self
                    .type_use(items, i)?
                    .ok_or_else(|| syntax(pos, "call_indirect needs a type use"))?;
                K::CallIndirect(ty)
            }
            "local.get" | "get_local" => K::LocalGet(self.index(next(i)?, &self.locals, "local")?),
            "local.set" | "set_local" => K::LocalSet(self.index(next(i)?, &self.locals, "local")?),
            "local.tee" | "tee_local" => K::LocalTee(self.index(next(i)?, &self.locals, "local")?),
            "global.get" | "get_global" => K::GlobalGet(self.index(next(i)?, &self.names.globals, "global")?),
            "global.set" | "set_global" => K::GlobalSet(self.index(next(i)?, &self.names.globals, "global")?),
            "i32.const" | "i64.const" => {
                let (ty, bits) = if kw == "i32.const" { (I32, 32) } else { (I64, 64) };
                let e = next(i)?;
                let v = e
                    .atom()
                    .and_then(|a| parse_int(a, bits))
                    .ok_or_else(|| syntax(e.pos(), "bad integer literal"))?;
                K::Const(ty, v)
            }
            "i32.load" => load(I32, 4, false),
            "i64.load" => load(I64, 8, false),
            "i32.load8_s" => load(I32, 1, true),
            "i32.load8_u" => load(I32, 1, false),
            "i32.load16_s" => load(I32, 2, true),
            "i32.load16_u" => load(I32, 2, false),
            "i64.load8_s" => load(I64, 1, true),
            "i64.load8_u" => load(I64, 1, false),
            "i64.load16_s" => load(I64, 2, true),
            "i64.load16_u" => load(I64, 2, false),
            "i64.load32_s" => load(I64, 4, true),
            "i64.load32_u" => load(I64, 4, false),
            "i32.store" => store(I32, 4),
            "i64.store" => store(I64, 8),
            "i32.store8" => store(I32, 1),
            "i32.store16" => store(I32, 2),
            "i64.store8" => store(I64, 1),
            "i64.store16" => store(I64, 2),
            "i64.store32" => store(I64, 4),
            "i32.wrap_i64" | "i32.wrap/i64" => K::Convert(ConvOp::I32WrapI64),
            "i64.extend_i32_s" | "i64.extend_s/i32" => K::Convert(ConvOp::I64ExtendI32S),
            "i64.extend_i32_u" | "i64.extend_u/i32" => K::Convert(ConvOp::I64ExtendI32U),
            _ => return self.numeric(kw, pos),
        };
        if let K::Load(op, _) = kind {
            return Ok(K::Load(op, Self::memarg(items, i)?));
        }
        if let K::Store(op, _) = kind {
            return Ok(K::Store(op, Self::memarg(items, i)?));
        }
        Ok(kind)
    }

    fn numeric(&self, kw: &str, pos: Pos) -> Result<InstrKind, FrontendError> {
        use InstrKind as K;
        let Some((prefix, op)) = kw.split_once('.') else {
            return Err(syntax(pos, format!("unknown instruction `{kw}`")));
        };
        let ty = match prefix {
            "i32" => ValType::I32,
            "i64" => ValType::I64,
            "f32" | "f64" | "v128" => return Err(unsupported(pos, format!("instruction `{kw}`"))),
            "memory" | "table" | "ref" => return Err(unsupported(pos, format!("instruction `{kw}`"))),
            _ => return Err(syntax(pos, format!("unknown instruction `{kw}`"))),
        };
        let bin = |o| Ok(K::Binary(ty, o));
        let cmp = |o| Ok(K::Compare(ty, o));
        match op {
            "add" => bin(BinOp::Add),
            "sub" => bin(BinOp::Sub),
            "mul" => bin(BinOp::Mul),
            "div_s" => bin(BinOp::DivS),
            "div_u" => bin(BinOp::DivU),
            "rem_s" => bin(BinOp::RemS),
            "rem_u" => bin(BinOp::RemU),
            "and" => bin(BinOp::And),
            "or" => bin(BinOp::Or),
            "xor" => bin(BinOp::Xor),
            "shl" => bin(BinOp::Shl),
            "shr_s" => bin(BinOp::ShrS),
            "shr_u" => bin(BinOp::ShrU),
            "rotl" => bin(BinOp::Rotl),
            "rotr" => bin(BinOp::Rotr),
            "eqz" => Ok(K::Eqz(ty)),
            "eq" => cmp(CmpOp::Eq),
            "ne" => cmp(CmpOp::Ne),
            "lt_s" => cmp(CmpOp::LtS),
            "lt_u" => cmp(CmpOp::LtU),
            "gt_s" => cmp(CmpOp::GtS),
            "gt_u" => cmp(CmpOp::GtU),
            "le_s" => cmp(CmpOp::LeS),
            "le_u" => cmp(CmpOp::LeU),
            "ge_s" => cmp(CmpOp::GeS),
            "ge_u" => cmp(CmpOp::GeU),
            "clz" => Ok(K::Unary(ty, UnOp::Clz)),
            "ctz" => Ok(K::Unary(ty, UnOp::Ctz)),
            "popcnt" => Ok(K::Unary(ty, UnOp::Popcnt)),
            "extend8_s" => Ok(K::Unary(ty, UnOp::Extend8S)),
            "extend16_s" => Ok(K::Unary(ty, UnOp::Extend16S)),
            "extend32_s" if ty == ValType::I64 => Ok(K::Unary(ty, UnOp::Extend32S)),
            _ if op.contains("trunc") || op.contains("convert") || op.contains("reinterpret") => {
                Err(unsupported(pos, format!("instruction `{kw}`")))
            }
            _ => Err(syntax(pos, format!("unknown instruction `{kw}`"))),
        }
    }

    /// Parses a flat instruction sequence until one of `stops` (consumed and
    /// returned) or the end of `items`.
    fn seq(
        &mut self,
        items: &[SExpr],
        i: &mut usize,
        out: &mut Vec<Instr>,
        stops: &[&'static str],
    ) -> Result<Option<&'static str>, FrontendError> {
        while let Some(e) = items.get(*i) {
            match e {
                SExpr::List { .. } => {
                    *i += 1;
                    self.folded(e, out)?;
                }
                SExpr::Str { pos, .. } => return Err(syntax(*pos, "unexpected string in instruction sequence")),
                SExpr::Atom { text, pos } => {
                    if let Some(stop) = stops.iter().find(|s| **s == text.as_str()) {
                        *i += 1;
                        return Ok(Some(stop));
                    }
                    if text == "end" || text == "else" || text == "then" {
                        return Err(syntax(*pos, format!("unexpected `{text}`")));
                    }
                    *i += 1;
                    let pos = *pos;
                    match text.as_str() {
                        "block" | "loop" => {
                            let is_loop = text == "loop";
                            let label = Self::opt_label(items, i);
                            let ty = self.block_type(items, i)?;
                            self.labels.push(label.clone());
                            let mut body = Vec::new();
                            let stop = self.seq(items, i, &mut body, &["end"])?;
                            self.labels.pop();
                            if stop.is_none() {
                                return Err(syntax(pos, "missing `end`"));
                            }
                            Self::closing_label(items, i, &label)?;
                            let kind = if is_loop {
                                InstrKind::Loop { ty, body }
                            } else {
                                InstrKind::Block { ty, body }
                            };
                            out.push(Instr::new(kind, pos));
                        }
                        "if" => {
                            let label = Self::opt_label(items, i);
                            let ty = self.block_type(items, i)?;
                            self.labels.push(label.clone());
                            let mut then_body = Vec::new();
                            let mut else_body = Vec::new();
                            let stop = self.seq(items, i, &mut then_body, &["else", "end"])?;
                            match stop {
                                Some("else") => {
                                    Self::closing_label(items, i, &label)?;
                                    if self.seq(items, i, &mut else_body, &["end"])?.is_none() {
                                        return Err(syntax(pos, "missing `end`"));
                                    }
                                }
                                Some(_) => {}
                                None => return Err(syntax(pos, "missing `end`")),
                            }
                            self.labels.pop();
                            Self::closing_label(items, i, &label)?;
                            out.push(Instr::new(InstrKind::If { ty, then_body, else_body }, pos));
                        }
                        kw => {
                            let kw = kw.to_string();
                            let kind = self.plain(&kw, pos, items, i)?;
                            out.push(Instr::new(kind, pos));
                        }
                    }
                }
            }
        }
        Ok(None)
    }

    fn closing_label(items: &[SExpr], i: &mut usize, label: &Option<String>) -> Result<(), FrontendError> {
        if let Some(e) = items.get(*i) {
            if is_id(e) {
                if e.atom() != label.as_deref() {
                    return Err(syntax(e.pos(), "mismatched closing label"));
                }
                *i += 1;
            }
        }
        Ok(())
    }

    fn folded(&mut self, e: &SExpr, out: &mut Vec<Instr>) -> Result<(), FrontendError> {
        let items = e.list().unwrap_or(&[]);
        let pos = e.pos();
        let kw = items
            .first()
            .and_then(SExpr::atom)
            .ok_or_else(|| syntax(pos, "expected instruction"))?
            .to_string();
        let mut i = 1;
        match kw.as_str() {
            "block" | "loop" => {
                let label = Self::opt_label(items, &mut i);
                let ty = self.block_type(items, &mut i)?;
                self.labels.push(label);
                let mut body = Vec::new();
                self.seq(items, &mut i, &mut body, &[])?;
                self.labels.pop();
                let kind = if kw == "loop" {
                    InstrKind::Loop { ty, body }
                } else {
                    InstrKind::Block { ty, body }
                };
                out.push(Instr::new(kind, pos));
            }
            "if" => {
                let label = Self::opt_label(items, &mut i);
                let ty = self.block_type(items, &mut i)?;
                while let Some(c) = items.get(i) {
                    if matches!(c.head(), Some("then") | Some("else")) {
                        break;
                    }
                    if c.list().is_none() {
                        return Err(syntax(c.pos(), "expected folded condition or `(then ...)`"));
                    }
                    self.folded(c, out)?;
                    i += 1;
                }
                self.labels.push(label);
                let mut then_body = Vec::new();
                let mut else_body = Vec::new();
                let then = items
                    .get(i)
                    .filter(|c| c.head() == Some("then"))
                    .ok_or_else(|| syntax(pos, "folded `if` needs `(then ...)`"))?;
                let mut j = 1;
                self.seq(then.list().unwrap_or(&[]), &mut j, &mut then_body, &[])?;
                i += 1;
                if let Some(els) = items.get(i) {
                    if els.head() != Some("else") {
                        return Err(syntax(els.pos(), "expected `(else ...)`"));
                    }
                    let mut j = 1;
                    self.seq(els.list().unwrap_or(&[]), &mut j, &mut else_body, &[])?;
                    i += 1;
                }
                self.labels.pop();
                if let Some(extra) = items.get(i) {
                    return Err(syntax(extra.pos(), "unexpected item after `(else ...)`"));
                }
                out.push(Instr::new(InstrKind::If { ty, then_body, else_body }, pos));
            }
            _ => {
                let kind = self.plain(&kw, pos, items, &mut i)?;
                for operand in &items[i..] {
                    if operand.list().is_none() {
                        return Err(syntax(operand.pos(), "expected folded operand"));
                    }
                    self.folded(operand, out)?;
                }
                out.push(Instr::new(kind, pos));
            }
        }
        Ok(())
    }
}

fn parse_entry(e: &SExpr) -> Result<EntrySpec, FrontendError> {
    let items = e.list().unwrap_or(&[]);
    let name = items
        .get(1)
        .and_then(|n| n.string().or_else(|| n.atom().map(str::to_string)))
        .ok_or_else(|| syntax(e.pos(), "symb_exec needs a function name"))?;
    let mut args = Vec::new();
    for a in &items[2..] {
        let parts = a.list().ok_or_else(|| syntax(a.pos(), "expected `(i32.sconst ...)`"))?;
        let (ty, bits) = match parts.first().and_then(SExpr::atom) {
            Some("i32.sconst") | Some("i32.const") => (ValType::I32, 32),
            Some("i64.sconst") | Some("i64.const") => (ValType::I64, 64),
            _ => return Err(syntax(a.pos(), "expected `(i32.sconst ...)` or `(i64.sconst ...)`")),
        };
        if parts.len() != 2 {
            return Err(syntax(a.pos(), "sconst takes exactly one operand"));
        }
        let tok = parts[1].atom().ok_or_else(|| syntax(parts[1].pos(), "expected literal or label"))?;
        if let Some(v) = parse_int(tok, bits) {
            args.push(ArgSpec::Concrete { ty, value: v });
            continue;
        }
        let label = tok.strip_prefix('$').unwrap_or(tok);
        let class = match label.chars().next() {
            Some('l') => Classification::Public,
            Some('h') => Classification::Secret,
            _ => {
                return Err(FrontendError::Policy {
                    line: parts[1].pos().line,
                    col: parts[1].pos().col,
                    msg: format!("symbolic argument `{label}` must start with `l` (public) or `h` (secret)"),
                })
            }
        };
        if !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(syntax(parts[1].pos(), format!("bad symbolic label `{label}`")));
        }
        args.push(ArgSpec::Symbolic {
            ty,
            label: label.to_string(),
            class,
        });
    }
    Ok(EntrySpec {
        function: name,
        args,
        pos: e.pos(),
    })
}

fn parse_policy(e: &SExpr, class: Classification) -> Result<PolicyRange, FrontendError> {
    let items = e.list().unwrap_or(&[]);
    if items.len() != 3 {
        return Err(syntax(e.pos(), "policy range takes `(i32.const start) (i32.const end)`"));
    }
    let (_, start) = const_expr(&items[1])?;
    let (_, end) = const_expr(&items[2])?;
    Ok(PolicyRange {
        class,
        start: start as u32,
        end: end as u32,
        pos: e.pos(),
    })
}

fn parse_limits(items: &[SExpr], i: &mut usize, pos: Pos) -> Result<(u32, Option<u32>), FrontendError> {
    let min = items
        .get(*i)
        .ok_or_else(|| syntax(pos, "expected memory limits"))
        .and_then(|e| expect_u32(e, "page count"))?;
    *i += 1;
    let max = match items.get(*i) {
        Some(e) if e.atom().is_some() => {
            *i += 1;
            Some(expect_u32(e, "page count")?)
        }
        _ => None,
    };
    Ok((min, max))
}

fn parse_memory(e: &SExpr, m: &mut PartialModule, import: Option<(String, String)>) -> Result<(), FrontendError> {
    let items = e.list().unwrap_or(&[]);
    let mut i = 1;
    if items.get(i).is_some_and(is_id) {
        i += 1;
    }
    let mut exports = Vec::new();
    let mut import = import;
    while let Some(f) = items.get(i) {
        match f.head() {
            Some("export") => {
                let n = f.list().and_then(|l| l.get(1)).and_then(SExpr::string);
                exports.push(n.ok_or_else(|| syntax(f.pos(), "expected export name"))?);
            }
            Some("import") => {
                let l = f.list().unwrap_or(&[]);
                let (a, b) = (l.get(1).and_then(SExpr::string), l.get(2).and_then(SExpr::string));
                match (a, b) {
                    (Some(a), Some(b)) => import = Some((a, b)),
                    _ => return Err(syntax(f.pos(), "expected import module and name")),
                }
            }
            Some("data") => return Err(unsupported(f.pos(), "inline data segments")),
            _ => break,
        }
        i += 1;
    }
    let (min_pages, max_pages) = parse_limits(items, &mut i, e.pos())?;
    if m.memory.is_some() {
        return Err(validation(e.pos(), "at most one memory may be declared per module"));
    }
    m.memory = Some(MemoryDecl {
        min_pages,
        max_pages,
        import,
        exports,
    });
    m.memory_pos = Some(e.pos());
    Ok(())
}

fn parse_module_form(e: &SExpr) -> Result<PartialModule, FrontendError> {
    let items = e.list().unwrap_or(&[]);
    let mut m = PartialModule {
        pos: e.pos(),
        ..Default::default()
    };
    let mut start = 1;
    if items.get(1).is_some_and(is_id) {
        start = 2;
    }
    let fields = &items[start..];

    // First pass: index spaces and names.
    let mut names = Names::default();
    let mut func_forms = Vec::new();
    let mut global_count = 0u32;
    for f in fields {
        match f.head() {
            Some("type") => {
                let l = f.list().unwrap_or(&[]);
                let mut j = 1;
                if let Some(id) = l.get(1).filter(|x| is_id(x)) {
                    names.types.insert(id.atom().unwrap_or("").to_string(), m.types.len() as u32);
                    j = 2;
                }
                let func = l
                    .get(j)
                    .filter(|x| x.head() == Some("func"))
                    .ok_or_else(|| syntax(f.pos(), "expected `(func ...)` type"))?;
                let mut ty = FuncType::default();
                for part in &func.list().unwrap_or(&[])[1..] {
                    let pl = part.list().unwrap_or(&[]);
                    match part.head() {
                        Some("param") => {
                            for t in &pl[1..] {
                                if !is_id(t) {
                                    ty.params.push(parse_valtype(t)?);
                                }
                            }
                        }
                        Some("result") => {
                            for t in &pl[1..] {
                                ty.results.push(parse_valtype(t)?);
                            }
                        }
                        _ => return Err(syntax(part.pos(), "expected `param` or `result`")),
                    }
                }
                m.types.push(ty);
            }
            Some("func") => {
                let l = f.list().unwrap_or(&[]);
                if let Some(id) = l.get(1).filter(|x| is_id(x)) {
                    names.funcs.insert(id.atom().unwrap_or("").to_string(), func_forms.len() as u32);
                }
                if l.iter().any(|x| x.head() == Some("import")) {
                    return Err(unsupported(f.pos(), "function imports"));
                }
                func_forms.push(f);
            }
            Some("global") => {
                let l = f.list().unwrap_or(&[]);
                if let Some(id) = l.get(1).filter(|x| is_id(x)) {
                    names.globals.insert(id.atom().unwrap_or("").to_string(), global_count);
                }
                global_count += 1;
            }
            _ => {}
        }
    }

    for f in fields {
        let l = f.list().ok_or_else(|| syntax(f.pos(), "expected module field"))?;
        match f.head() {
            Some("type") | Some("func") => {}
            Some("memory") => parse_memory(f, &mut m, None)?,
            Some("import") => {
                let module = l.get(1).and_then(SExpr::string);
                let name = l.get(2).and_then(SExpr::string);
                let desc = l.get(3);
                match (module, name, desc) {
                    (Some(module), Some(name), Some(d)) if d.head() == Some("memory") => {
                        parse_memory(d, &mut m, Some((module, name)))?;
                    }
                    (Some(_), Some(_), Some(d)) => {
                        return Err(unsupported(
                            d.pos(),
                            format!("import of kind `{}`", d.head().unwrap_or("?")),
                        ))
                    }
                    _ => return Err(syntax(f.pos(), "malformed import")),
                }
            }
            Some("global") => {
                let mut j = 1;
                let name = l
                    .get(1)
                    .filter(|x| is_id(x))
                    .and_then(SExpr::atom)
                    .map(|s| s.trim_start_matches('$').to_string());
                if name.is_some() {
                    j = 2;
                }
                while l.get(j).is_some_and(|x| x.head() == Some("export")) {
                    j += 1;
                }
                if l.get(j).is_some_and(|x| x.head() == Some("import")) {
                    return Err(unsupported(f.pos(), "global imports"));
                }
                let tyf = l.get(j).ok_or_else(|| syntax(f.pos(), "expected global type"))?;
                let (ty, mutable) = if tyf.head() == Some("mut") {
                    let t = tyf.list().and_then(|x| x.get(1)).ok_or_else(|| syntax(tyf.pos(), "expected type"))?;
                    (parse_valtype(t)?, true)
                } else {
                    (parse_valtype(tyf)?, false)
                };
                j += 1;
                let init = match (l.get(j), l.get(j + 1)) {
                    (Some(c), None) if c.list().is_some() => const_expr(c)?,
                    (Some(a), Some(b)) if a.atom().is_some() => {
                        let bits = if a.atom() == Some("i64.const") { 64 } else { 32 };
                        let ty = if bits == 64 { ValType::I64 } else { ValType::I32 };
                        if !matches!(a.atom(), Some("i32.const") | Some("i64.const")) {
                            return Err(unsupported(a.pos(), "non-constant global initialiser"));
                        }
                        let v = b
                            .atom()
                            .and_then(|x| parse_int(x, bits))
                            .ok_or_else(|| syntax(b.pos(), "bad integer literal"))?;
                        (ty, v)
                    }
                    _ => return Err(syntax(f.pos(), "expected global initialiser")),
                };
                if init.0 != ty {
                    return Err(validation(f.pos(), "global initialiser type mismatch"));
                }
                m.globals.push(GlobalDef {
                    name,
                    ty,
                    mutable,
                    init: init.1,
                });
            }
            Some("table") => {
                let mut j = 1;
                if l.get(j).is_some_and(is_id) {
                    j += 1;
                }
                if let Some(n) = l.get(j).and_then(SExpr::atom).and_then(|a| parse_int(a, 32)) {
                    m.table_size = Some(n as u32);
                    j += 1;
                    if l.get(j).is_some_and(|x| x.atom().is_some_and(|a| a.bytes().all(|b| b.is_ascii_digit()))) {
                        j += 1;
                    }
                    if !matches!(l.get(j).and_then(SExpr::atom), Some("funcref") | Some("anyfunc")) {
                        return Err(syntax(f.pos(), "expected `funcref` table"));
                    }
                } else {
                    if !matches!(l.get(j).and_then(SExpr::atom), Some("funcref") | Some("anyfunc")) {
                        return Err(syntax(f.pos(), "expected `funcref` table"));
                    }
                    let elem = l.get(j + 1).filter(|x| x.head() == Some("elem"));
                    let mut funcs = Vec::new();
                    if let Some(elem) = elem {
                        for fi in &elem.list().unwrap_or(&[])[1..] {
                            funcs.push(func_ref(fi, &names)?);
                        }
                    }
                    m.table_size = Some(funcs.len() as u32);
                    m.elems.push((0, funcs, f.pos()));
                }
            }
            Some("elem") => {
                let mut j = 1;
                if l.get(j).is_some_and(is_id) {
                    j += 1;
                }
                if l.get(j).is_some_and(|x| x.head() == Some("table")) {
                    j += 1;
                }
                let off_form = l.get(j).ok_or_else(|| syntax(f.pos(), "expected element offset"))?;
                let off = if off_form.head() == Some("offset") {
                    let inner = off_form
                        .list()
                        .and_then(|x| x.get(1))
                        .ok_or_else(|| syntax(off_form.pos(), "expected offset expression"))?;
                    const_expr(inner)?.1
                } else {
                    const_expr(off_form)?.1
                };
                j += 1;
                if l.get(j).and_then(SExpr::atom) == Some("func") {
                    j += 1;
                }
                let mut funcs = Vec::new();
                for fi in &l[j..] {
                    funcs.push(func_ref(fi, &names)?);
                }
                m.elems.push((off as u32, funcs, f.pos()));
            }
            Some("export") => {
                let name = l.get(1).and_then(SExpr::string).ok_or_else(|| syntax(f.pos(), "expected export name"))?;
                let desc = l.get(2).ok_or_else(|| syntax(f.pos(), "expected export descriptor"))?;
                let target = desc.list().and_then(|x| x.get(1));
                match (desc.head(), target) {
                    (Some("func"), Some(t)) => {
                        let idx = func_ref(t, &names)?;
                        m.pending_func_exports.push((idx, name));
                    }
                    (Some("memory"), _) => m.pending_mem_exports.push(name),
                    (Some("global"), _) | (Some("table"), _) => {}
                    _ => return Err(syntax(desc.pos(), "malformed export")),
                }
            }
            Some("public") => m.policies.push(parse_policy(f, Classification::Public)?),
            Some("secret") => m.policies.push(parse_policy(f, Classification::Secret)?),
            Some("symb_exec") => {
                let entry = parse_entry(f)?;
                set_entry(&mut m, entry)?;
            }
            Some(other @ ("data" | "start" | "rec" | "tag")) => {
                return Err(unsupported(f.pos(), format!("module field `{other}`")));
            }
            _ => return Err(syntax(f.pos(), "unknown module field")),
        }
    }

    // Second pass: function bodies.
    for f in func_forms {
        let func = parse_func(f, &names, &mut m.types)?;
        m.functions.push(func);
    }
    for (idx, name) in std::mem::take(&mut m.pending_func_exports) {
        let func = m
            .functions
            .get_mut(idx as usize)
            .ok_or_else(|| validation(e.pos(), "export of unknown function"))?;
        func.exports.push(name);
    }
    let mem_exports = std::mem::take(&mut m.pending_mem_exports);
    if let Some(mem) = &mut m.memory {
        mem.exports.extend(mem_exports);
    } else if !mem_exports.is_empty() {
        return Err(validation(e.pos(), "export of undeclared memory"));
    }
    Ok(m)
}

fn func_ref(e: &SExpr, names: &Names) -> Result<u32, FrontendError> {
    match e.atom() {
        Some(a) if a.starts_with('$') => names
            .funcs
            .get(a)
            .copied()
            .ok_or_else(|| validation(e.pos(), format!("unknown function `{a}`"))),
        Some(_) => expect_u32(e, "function index"),
        None => Err(syntax(e.pos(), "expected function reference")),
    }
}

fn set_entry(m: &mut PartialModule, entry: EntrySpec) -> Result<(), FrontendError> {
    if m.entry.is_some() {
        return Err(syntax(entry.pos, "duplicate `symb_exec` entry point"));
    }
    m.entry = Some(entry);
    Ok(())
}

fn parse_func(f: &SExpr, names: &Names, types: &mut Vec<FuncType>) -> Result<FuncDef, FrontendError> {
    let items = f.list().unwrap_or(&[]);
    let mut i = 1;
    let name = items
        .get(1)
        .filter(|x| is_id(x))
        .and_then(SExpr::atom)
        .map(|s| s.trim_start_matches('$').to_string());
    if name.is_some() {
        i = 2;
    }
    let mut exports = Vec::new();
    while let Some(e) = items.get(i).filter(|x| x.head() == Some("export")) {
        let n = e.list().and_then(|l| l.get(1)).and_then(SExpr::string);
        exports.push(n.ok_or_else(|| syntax(e.pos(), "expected export name"))?);
        i += 1;
    }

    let mut locals_by_name = HashMap::new();
    let mut params = Vec::new();
    let mut results = Vec::new();
    let mut locals = Vec::new();
    let mut declared_type = None;
    let mut saw_inline = false;
    while let Some(e) = items.get(i) {
        let l = e.list().unwrap_or(&[]);
        match e.head() {
            Some("type") => {
                let t = l.get(1).ok_or_else(|| syntax(e.pos(), "expected type index"))?;
                let idx = match t.atom() {
                    Some(a) if a.starts_with('$') => *names
                        .types
                        .get(a)
                        .ok_or_else(|| validation(t.pos(), format!("unknown type `{a}`")))?,
                    _ => expect_u32(t, "type index")?,
                };
                declared_type = Some(
                    types
                        .get(idx as usize)
                        .cloned()
                        .ok_or_else(|| validation(t.pos(), "unknown type index"))?,
                );
            }
            Some("param") => {
                saw_inline = true;
                if l.get(1).is_some_and(is_id) {
                    let id = l[1].atom().unwrap_or("").to_string();
                    let ty = l.get(2).ok_or_else(|| syntax(e.pos(), "expected param type"))?;
                    locals_by_name.insert(id, params.len() as u32);
                    params.push(parse_valtype(ty)?);
                } else {
                    for t in &l[1..] {
                        params.push(parse_valtype(t)?);
                    }
                }
            }
            Some("result") => {
                saw_inline = true;
                for t in &l[1..] {
                    results.push(parse_valtype(t)?);
                }
            }
            Some("local") => {
                if l.get(1).is_some_and(is_id) {
                    let id = l[1].atom().unwrap_or("").to_string();
                    let ty = l.get(2).ok_or_else(|| syntax(e.pos(), "expected local type"))?;
                    locals_by_name.insert(id, u32::MAX - locals.len() as u32);
                    locals.push(parse_valtype(ty)?);
                } else {
                    for t in &l[1..] {
                        locals.push(parse_valtype(t)?);
                    }
                }
            }
            _ => break,
        }
        i += 1;
    }
    if let Some(ty) = declared_type {
        if saw_inline && (ty.params != params || ty.results != results) {
            return Err(validation(f.pos(), "inline signature disagrees with `(type ...)`"));
        }
        params = ty.params;
        results = ty.results;
    }
    if results.len() > 1 {
        return Err(unsupported(f.pos(), "multi-value function results"));
    }
    // Named locals were recorded with a placeholder; shift them past params.
    for v in locals_by_name.values_mut() {
        if *v > u32::MAX / 2 {
            *v = params.len() as u32 + (u32::MAX - *v);
        }
    }

    let mut ctx = FuncCtx {
        names,
        types,
        locals: locals_by_name,
        labels: Vec::new(),
    };
    let mut body = Vec::new();
    ctx.seq(items, &mut i, &mut body, &[])?;
    number_instrs(&mut body);
    Ok(FuncDef {
        name,
        exports,
        params,
        results,
        locals,
        body,
        pos: f.pos(),
    })
}

fn check_policies(ast: &ModuleAst) -> Result<(), FrontendError> {
    let size = ast.memory_size();
    for p in &ast.policies {
        let err = |msg: String| FrontendError::Policy {
            line: p.pos.line,
            col: p.pos.col,
            msg,
        };
        if p.start > p.end {
            return Err(err(format!("range start {} exceeds end {}", p.start, p.end)));
        }
        if ast.memory.is_none() {
            return Err(err("policy range declared without a memory".into()));
        }
        if p.end as u64 >= size {
            return Err(err(format!("range [{}, {}] exceeds memory of {size} bytes", p.start, p.end)));
        }
    }
    for (i, a) in ast.policies.iter().enumerate() {
        for b in &ast.policies[i + 1..] {
            if a.class != b.class && a.start <= b.end && b.start <= a.end {
                return Err(FrontendError::Policy {
                    line: b.pos.line,
                    col: b.pos.col,
                    msg: format!(
                        "range [{}, {}] overlaps a range of different classification [{}, {}]",
                        b.start, b.end, a.start, a.end
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Parses one or more source texts forming a module set.
///
/// Each text may hold any number of `(module ...)` forms and a top-level
/// `(symb_exec ...)` directive. At most one module may define functions;
/// other modules contribute the memory and policy annotations.
pub fn parse_sources(sources: &[&str]) -> Result<ModuleAst, FrontendError> {
    let mut modules = Vec::new();
    let mut entry: Option<EntrySpec> = None;
    for src in sources {
        for form in read_all(src)? {
            match form.head() {
                Some("module") => modules.push(parse_module_form(&form)?),
                Some("symb_exec") => {
                    let e = parse_entry(&form)?;
                    if entry.is_some() {
                        return Err(syntax(e.pos, "duplicate `symb_exec` entry point"));
                    }
                    entry = Some(e);
                }
                _ => return Err(syntax(form.pos(), "expected `(module ...)` or `(symb_exec ...)`")),
            }
        }
    }
    if modules.is_empty() {
        return Err(syntax(Default::default(), "no module found"));
    }

    let mut ast = ModuleAst::default();
    let mut code_module: Option<Pos> = None;
    let mut defined_mem: Option<MemoryDecl> = None;
    let mut imported_mem: Option<(MemoryDecl, Pos)> = None;
    for m in modules {
        if let Some(e) = m.entry {
            if entry.is_some() {
                return Err(syntax(e.pos, "duplicate `symb_exec` entry point"));
            }
            entry = Some(e);
        }
        ast.policies.extend(m.policies);
        if let Some(mem) = m.memory {
            let pos = m.memory_pos.unwrap_or(m.pos);
            if mem.import.is_some() {
                imported_mem = Some((mem, pos));
            } else if defined_mem.is_some() {
                return Err(unsupported(pos, "more than one memory definition in the module set"));
            } else {
                defined_mem = Some(mem);
            }
        }
        let has_code = !m.functions.is_empty() || !m.globals.is_empty() || !m.elems.is_empty();
        if has_code {
            if code_module.is_some() {
                return Err(unsupported(m.pos, "more than one module with code; only memory imports link modules"));
            }
            code_module = Some(m.pos);
            ast.types = m.types;
            ast.functions = m.functions;
            ast.globals = m.globals;
            let size = m.table_size.unwrap_or(0) as usize;
            let mut table = vec![None; size];
            for (off, funcs, pos) in m.elems {
                for (k, f) in funcs.into_iter().enumerate() {
                    let slot = off as usize + k;
                    if slot >= table.len() {
                        if m.table_size.is_some() {
                            return Err(validation(pos, "element segment exceeds table size"));
                        }
                        table.resize(slot + 1, None);
                    }
                    table[slot] = Some(f);
                }
            }
            ast.table = table;
        }
    }
    ast.memory = match (defined_mem, imported_mem) {
        (Some(mut def), Some((imp, _))) => {
            def.import = imp.import;
            Some(def)
        }
        (Some(def), None) => Some(def),
        (None, Some((imp, _))) => Some(imp),
        (None, None) => None,
    };
    ast.entry = entry;
    check_policies(&ast)?;
    super::validate::validate(&ast)?;
    Ok(ast)
}

/// Parses a single WAT source text.
pub fn parse_module(source: &str) -> Result<ModuleAst, FrontendError> {
    parse_sources(&[source])
}
