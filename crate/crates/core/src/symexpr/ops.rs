//! Bitvector semantics shared by constant folding and expression evaluation.
//! Values are carried as `u64` with the bits above the width cleared.

use crate::wat::{BinOp, CmpOp};

use super::UnOp;

pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Interprets the low `width` bits of `v` as a two's-complement integer.
pub fn to_signed(v: u64, width: u32) -> i64 {
    let shift = 64 - width;
    ((v << shift) as i64) >> shift
}

pub fn sign_extend(v: u64, from: u32, to: u32) -> u64 {
    to_signed(v, from) as u64 & mask(to)
}

/// Binary operator with wrap-around semantics. `None` where WebAssembly traps
/// (zero divisor, signed division overflow).
pub fn eval_bin(op: BinOp, width: u32, a: u64, b: u64) -> Option<u64> {
    let m = mask(width);
    let (a, b) = (a & m, b & m);
    let sh = (b % width as u64) as u32;
    let min = 1u64 << (width - 1);
    let r = match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::DivU => a.checked_div(b)?,
        BinOp::RemU => a.checked_rem(b)?,
        BinOp::DivS => {
            if b == 0 || (a == min && b == m) {
                return None;
            }
            (to_signed(a, width) / to_signed(b, width)) as u64
        }
        BinOp::RemS => {
            if b == 0 {
                return None;
            }
            if a == min && b == m {
                0
            } else {
                (to_signed(a, width) % to_signed(b, width)) as u64
            }
        }
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => a << sh,
        BinOp::ShrU => a >> sh,
        BinOp::ShrS => (to_signed(a, width) >> sh) as u64,
        BinOp::Rotl => {
            if sh == 0 {
                a
            } else {
                (a << sh) | (a >> (width - sh))
            }
        }
        BinOp::Rotr => {
            if sh == 0 {
                a
            } else {
                (a >> sh) | (a << (width - sh))
            }
        }
    };
    Some(r & m)
}

pub fn eval_cmp(op: CmpOp, width: u32, a: u64, b: u64) -> bool {
    let m = mask(width);
    let (a, b) = (a & m, b & m);
    let (sa, sb) = (to_signed(a, width), to_signed(b, width));
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::LtU => a < b,
        CmpOp::LeU => a <= b,
        CmpOp::GtU => a > b,
        CmpOp::GeU => a >= b,
        CmpOp::LtS => sa < sb,
        CmpOp::LeS => sa <= sb,
        CmpOp::GtS => sa > sb,
        CmpOp::GeS => sa >= sb,
    }
}

pub fn eval_un(op: UnOp, width: u32, a: u64) -> u64 {
    let a = a & mask(width);
    match op {
        UnOp::Clz => (a.leading_zeros() - (64 - width)) as u64,
        UnOp::Ctz => (a.trailing_zeros()).min(width) as u64,
        UnOp::Popcnt => a.count_ones() as u64,
    }
}

pub fn negate_cmp(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Eq => CmpOp::Ne,
        CmpOp::Ne => CmpOp::Eq,
        CmpOp::LtS => CmpOp::GeS,
        CmpOp::GeS => CmpOp::LtS,
        CmpOp::LtU => CmpOp::GeU,
        CmpOp::GeU => CmpOp::LtU,
        CmpOp::GtS => CmpOp::LeS,
        CmpOp::LeS => CmpOp::GtS,
        CmpOp::GtU => CmpOp::LeU,
        CmpOp::LeU => CmpOp::GtU,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wasm_edge_cases() {
        assert_eq!(eval_bin(BinOp::DivU, 32, 7, 0), None);
        assert_eq!(eval_bin(BinOp::DivS, 32, 0x8000_0000, 0xffff_ffff), None);
        assert_eq!(eval_bin(BinOp::RemS, 32, 0x8000_0000, 0xffff_ffff), Some(0));
        assert_eq!(eval_bin(BinOp::Shl, 32, 1, 33), Some(2));
        assert_eq!(eval_bin(BinOp::Rotl, 8, 0x81, 1), Some(0x03));
        assert_eq!(eval_bin(BinOp::ShrS, 8, 0x80, 7), Some(0xff));
        assert_eq!(eval_un(UnOp::Clz, 32, 0), 32);
        assert_eq!(eval_un(UnOp::Ctz, 64, 0), 64);
        assert!(eval_cmp(CmpOp::LtS, 32, 0xffff_ffff, 0));
        assert_eq!(sign_extend(0x80, 8, 32), 0xffff_ff80);
    }
}
