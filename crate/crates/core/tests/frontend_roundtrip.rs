use proptest::prelude::*;
use wasmct_core::wat::{parse_module, print_module};

/// Random i32-typed expression in folded syntax over locals 0..3.
fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        any::<i32>().prop_map(|c| format!("(i32.const {c})")),
        (0u32..3).prop_map(|l| format!("(local.get {l})")),
        (0u32..64).prop_map(|a| format!("(i32.load8_u offset={a} (i32.const 0))")),
    ];
    leaf.prop_recursive(4, 32, 3, |inner| {
        let bin = prop::sample::select(vec![
            "add", "sub", "mul", "and", "or", "xor", "shl", "shr_u", "shr_s", "rotl", "eq", "lt_s", "ge_u",
        ]);
        prop_oneof![
            (bin, inner.clone(), inner.clone()).prop_map(|(op, a, b)| format!("(i32.{op} {a} {b})")),
            (inner.clone(), inner.clone(), inner.clone())
                .prop_map(|(c, a, b)| format!("(if (result i32) {c} (then {a}) (else {b}))")),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(c, a, b)| format!("(select {a} {b} {c})")),
            (inner.clone(), inner.clone())
                .prop_map(|(a, c)| format!("(block (result i32) {a} {c} (br_if 0) (drop) (i32.const 1))")),
            (inner.clone()).prop_map(|a| format!("(i32.eqz {a})")),
            (inner.clone()).prop_map(|a| format!("(i32.wrap_i64 (i64.extend_i32_u {a}))")),
        ]
    })
}

fn module() -> impl Strategy<Value = String> {
    (expr(), expr(), 0u32..100, 0u32..100).prop_map(|(a, b, s, len)| {
        format!(
            r#"(module
                 (memory (export "mem") 1)
                 (global $g (mut i32) (i32.const -3))
                 (func $f (export "f") (param i32 i32) (result i32) (local i32)
                   (local.set 2 {a})
                   (global.set $g (local.get 2))
                   (i32.store16 offset=8 (local.get 0) {b})
                   (loop $l (br_if $l (i32.const 0)))
                   (local.get 2))
                 (secret (i32.const {lo}) (i32.const {hi}))
                 (public (i32.const 2000) (i32.const 2100)))
               (symb_exec "f" (i32.sconst l1) (i32.sconst h2))"#,
            lo = 200 + s,
            hi = 200 + s + len,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn print_then_parse_is_identity(src in module()) {
        let ast = parse_module(&src).unwrap();
        let printed = print_module(&ast);
        let again = parse_module(&printed).unwrap();
        prop_assert_eq!(ast.without_positions(), again.without_positions());
    }
}

#[test]
fn listing_style_module_round_trips() {
    let src = r#"
      (module
        (memory 1)
        (func $tls1_cbc_remove_padding (export "tls1_cbc_remove_padding")
          (param i32 i32 i32 i32) (result i32) (local i32 i32)
          local.get 0
          i32.load8_u offset=111
          local.set 4
          block
            loop
              local.get 4
              i32.eqz
              br_if 1
              local.get 4
              i32.const 1
              i32.sub
              local.set 4
              br 0
            end
          end
          local.get 4)
        (public (i32.const 2000) (i32.const 2039))
        (secret (i32.const 2048) (i32.const 2111)))
      (symb_exec "tls1_cbc_remove_padding" (i32.sconst 2000) (i32.sconst 2040) (i32.sconst l1) (i32.sconst l2))"#;
    let ast = parse_module(src).unwrap();
    let again = parse_module(&print_module(&ast)).unwrap();
    assert_eq!(ast.without_positions(), again.without_positions());
}
