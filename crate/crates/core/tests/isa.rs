mod common;

use pipedepth_core::isa::{
    class_counts, disassemble, parse, validate, Addr, Instruction, OpClass, Program, Reg, ViolationKind,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn listing_round_trips((program, _) in common::program()) {
        let text = disassemble(&program);
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &program);
        prop_assert_eq!(disassemble(&back), text);
    }

    #[test]
    fn counts_partition_the_program((program, _) in common::program()) {
        let counts = class_counts(&program);
        prop_assert_eq!(counts.total(), program.len());
        prop_assert_eq!(counts.fp_total(), program.fp_len());
        for class in OpClass::ALL {
            let n = program.instructions.iter().filter(|i| i.op == class).count();
            prop_assert_eq!(counts.get(class), n);
        }
    }

    #[test]
    fn generated_programs_are_valid((program, _) in common::program()) {
        prop_assert!(validate(&program).is_empty());
    }
}

#[test]
fn reports_every_violation() {
    let mut p = Program::new(2, 1);
    p.push(Instruction::add(Reg(0), Reg(1), Reg(1)))
        .push(Instruction::load(Reg(5), Addr(3)));
    let kinds: Vec<ViolationKind> = validate(&p).into_iter().map(|v| v.kind).collect();
    assert_eq!(
        kinds,
        vec![
            ViolationKind::UseBeforeDef(Reg(1)),
            ViolationKind::UseBeforeDef(Reg(1)),
            ViolationKind::AddressOutOfRange(Addr(3)),
            ViolationKind::RegisterOutOfRange(Reg(5)),
        ]
    );
}

#[test]
fn subtraction_is_counted_as_add() {
    let mut p = Program::new(3, 0);
    p.preloaded.insert(Reg(0), 1.0);
    p.push(Instruction::sub(Reg(1), Reg(0), Reg(0)))
        .push(Instruction::add(Reg(2), Reg(1), Reg(0)));
    assert_eq!(class_counts(&p).get(OpClass::Add), 2);
    assert!(parse(&disassemble(&p)).unwrap().instructions[0].negate);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let err = parse(".registers 4\n.memory 2\n0: FMA r0, r1, r2\n").unwrap_err();
    assert!(err.to_string().contains('3'), "{err}");
    // operand shape is checked by validation, not by the parser
    let short = parse(".registers 4\n.memory 2\n0: MUL r0, r1\n").unwrap();
    assert_eq!(validate(&short)[0].kind, ViolationKind::MissingOperand("src2"));
}
