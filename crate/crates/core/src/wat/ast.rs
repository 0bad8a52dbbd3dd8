//! In-memory representation of a parsed module set.

use serde::{Deserialize, Serialize};

pub use super::sexpr::Pos;

pub const PAGE_SIZE: u64 = 65536;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValType {
    I32,
    I64,
}

impl ValType {
    pub fn bits(self) -> u32 {
        match self {
            ValType::I32 => 32,
            ValType::I64 => 64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValType::I32 => "i32",
            ValType::I64 => "i64",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FuncType {
    pub params: Vec<ValType>,
    pub results: Vec<ValType>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockType {
    Empty,
    Value(ValType),
}

impl BlockType {
    pub fn arity(self) -> usize {
        match self {
            BlockType::Empty => 0,
            BlockType::Value(_) => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    DivS,
    DivU,
    RemS,
    RemU,
    And,
    Or,
    Xor,
    Shl,
    ShrS,
    ShrU,
    Rotl,
    Rotr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Clz,
    Ctz,
    Popcnt,
    /// Sign-extend the low 8, 16 or 32 bits in place.
    Extend8S,
    Extend16S,
    Extend32S,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    LtS,
    LtU,
    GtS,
    GtU,
    LeS,
    LeU,
    GeS,
    GeU,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConvOp {
    I32WrapI64,
    I64ExtendI32S,
    I64ExtendI32U,
}

/// Load/store immediate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct MemArg {
    pub offset: u32,
    pub align: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadOp {
    pub ty: ValType,
    /// Access width in bytes (1, 2, 4 or 8).
    pub bytes: u32,
    pub signed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoreOp {
    pub ty: ValType,
    pub bytes: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InstrKind {
    Unreachable,
    Nop,
    Block { ty: BlockType, body: Vec<Instr> },
    Loop { ty: BlockType, body: Vec<Instr> },
    If { ty: BlockType, then_body: Vec<Instr>, else_body: Vec<Instr> },
    Br(u32),
    BrIf(u32),
    BrTable { targets: Vec<u32>, default: u32 },
    Return,
    Call(u32),
    CallIndirect(u32),
    Drop,
    Select,
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    GlobalGet(u32),
    GlobalSet(u32),
    Load(LoadOp, MemArg),
    Store(StoreOp, MemArg),
    Const(ValType, u64),
    Eqz(ValType),
    Unary(ValType, UnOp),
    Binary(ValType, BinOp),
    Compare(ValType, CmpOp),
    Convert(ConvOp),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instr {
    /// Pre-order index of the instruction within its function body.
    pub id: u32,
    pub pos: Pos,
    pub kind: InstrKind,
}

impl Instr {
    pub fn new(kind: InstrKind, pos: Pos) -> Self {
        Instr { id: 0, pos, kind }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuncDef {
    pub name: Option<String>,
    pub exports: Vec<String>,
    pub params: Vec<ValType>,
    pub results: Vec<ValType>,
    pub locals: Vec<ValType>,
    pub body: Vec<Instr>,
    pub pos: Pos,
}

impl FuncDef {
    pub fn display_name(&self, index: usize) -> String {
        self.exports
            .first()
            .cloned()
            .or_else(|| self.name.clone())
            .unwrap_or_else(|| format!("func{index}"))
    }

    pub fn local_type(&self, idx: u32) -> Option<ValType> {
        let idx = idx as usize;
        if idx < self.params.len() {
            Some(self.params[idx])
        } else {
            self.locals.get(idx - self.params.len()).copied()
        }
    }

    pub fn num_locals(&self) -> usize {
        self.params.len() + self.locals.len()
    }

    pub fn ty(&self) -> FuncType {
        FuncType {
            params: self.params.clone(),
            results: self.results.clone(),
        }
    }

    /// Number of instructions, including nested ones.
    pub fn instr_count(&self) -> usize {
        fn count(body: &[Instr]) -> usize {
            body.iter()
                .map(|i| {
                    1 + match &i.kind {
                        InstrKind::Block { body, .. } | InstrKind::Loop { body, .. } => count(body),
                        InstrKind::If { then_body, else_body, .. } => count(then_body) + count(else_body),
                        _ => 0,
                    }
                })
                .sum()
        }
        count(&self.body)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryDecl {
    pub min_pages: u32,
    pub max_pages: Option<u32>,
    /// `(module, name)` when the memory is imported.
    pub import: Option<(String, String)>,
    pub exports: Vec<String>,
}

impl MemoryDecl {
    pub fn size_bytes(&self) -> u64 {
        self.min_pages as u64 * PAGE_SIZE
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalDef {
    pub name: Option<String>,
    pub ty: ValType,
    pub mutable: bool,
    pub init: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Public,
    Secret,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyRange {
    pub class: Classification,
    /// First byte address (inclusive).
    pub start: u32,
    /// Last byte address (inclusive).
    pub end: u32,
    pub pos: Pos,
}

impl PolicyRange {
    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.start as u64 && addr <= self.end as u64
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ArgSpec {
    Concrete { ty: ValType, value: u64 },
    Symbolic { ty: ValType, label: String, class: Classification },
}

impl ArgSpec {
    pub fn ty(&self) -> ValType {
        match self {
            ArgSpec::Concrete { ty, .. } | ArgSpec::Symbolic { ty, .. } => *ty,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntrySpec {
    pub function: String,
    pub args: Vec<ArgSpec>,
    pub pos: Pos,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ModuleAst {
    pub types: Vec<FuncType>,
    pub functions: Vec<FuncDef>,
    pub memory: Option<MemoryDecl>,
    pub globals: Vec<GlobalDef>,
    pub policies: Vec<PolicyRange>,
    pub entry: Option<EntrySpec>,
    /// Function table for `call_indirect`; `None` marks an uninitialised slot.
    pub table: Vec<Option<u32>>,
}

impl ModuleAst {
    pub fn memory_size(&self) -> u64 {
        self.memory.as_ref().map_or(0, MemoryDecl::size_bytes)
    }

    /// Looks a function up by export name or `$name` (without the `$`).
    pub fn find_function(&self, name: &str) -> Option<u32> {
        let name = name.strip_prefix('$').unwrap_or(name);
        self.functions
            .iter()
            .position(|f| f.exports.iter().any(|e| e == name))
            .or_else(|| self.functions.iter().position(|f| f.name.as_deref() == Some(name)))
            .map(|i| i as u32)
    }

    /// Classification of a byte address under the module's policy; `None`
    /// for unannotated memory.
    pub fn classify(&self, addr: u64) -> Option<Classification> {
        self.policies.iter().find(|p| p.contains(addr)).map(|p| p.class)
    }

    pub fn secret_ranges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.policies
            .iter()
            .filter(|p| p.class == Classification::Secret)
            .map(|p| (p.start, p.end))
    }

    /// Resets every source position so two ASTs can be compared structurally.
    pub fn without_positions(&self) -> ModuleAst {
        fn strip(body: &mut [Instr]) {
            for i in body {
                i.pos = Pos::default();
                match &mut i.kind {
                    InstrKind::Block { body, .. } | InstrKind::Loop { body, .. } => strip(body),
                    InstrKind::If { then_body, else_body, .. } => {
                        strip(then_body);
                        strip(else_body);
                    }
                    _ => {}
                }
            }
        }
        let mut m = self.clone();
        for f in &mut m.functions {
            f.pos = Pos::default();
            strip(&mut f.body);
        }
        for p in &mut m.policies {
            p.pos = Pos::default();
        }
        if let Some(e) = &mut m.entry {
            e.pos = Pos::default();
        }
        m
    }
}

/// Identifies one instruction occurrence in the module.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteId {
    pub func: u32,
    pub instr: u32,
}

/// Assigns pre-order ids to every instruction in `body`.
pub fn number_instrs(body: &mut [Instr]) {
    fn go(body: &mut [Instr], next: &mut u32) {
        for i in body {
            i.id = *next;
            *next += 1;
            match &mut i.kind {
                InstrKind::Block { body, .. } | InstrKind::Loop { body, .. } => go(body, next),
                InstrKind::If { then_body, else_body, .. } => {
                    go(then_body, next);
                    go(else_body, next);
                }
                _ => {}
            }
        }
    }
    let mut next = 0;
    go(body, &mut next);
}

/// Finds the instruction with pre-order id `id`.
pub fn find_instr(body: &[Instr], id: u32) -> Option<&Instr> {
    for i in body {
        if i.id == id {
            return Some(i);
        }
        let found = match &i.kind {
            InstrKind::Block { body, .. } | InstrKind::Loop { body, .. } => find_instr(body, id),
            InstrKind::If { then_body, else_body, .. } => {
                find_instr(then_body, id).or_else(|| find_instr(else_body, id))
            }
            _ => None,
        };
        if found.is_some() {
            return found;
        }
    }
    None
}
