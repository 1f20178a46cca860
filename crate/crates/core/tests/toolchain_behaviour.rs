use std::time::{Duration, Instant};

use liftcheck::generator::builtin;
use liftcheck::metrics::{tokenize_asm, Normalization};
use liftcheck::toolchain::{ExecutionResult, OptLevel, TargetLanguage, Toolchain, ToolchainConfig, ToolchainError};

fn toolchain() -> Toolchain {
    Toolchain::new(ToolchainConfig::default())
}

fn run_c(src: &str, opt: OptLevel, timeout: Duration) -> ExecutionResult {
    let tc = toolchain();
    let artifact = tc.compile("t", src, opt, TargetLanguage::C).expect("test program compiles");
    tc.execute(&artifact, timeout)
}

#[test]
fn ir_with_undefined_symbol_is_a_compile_error() {
    let ir = "declare i32 @missing_helper()\n\ndefine i32 @main() {\n  %r = call i32 @missing_helper()\n  ret i32 %r\n}\n";
    match toolchain().compile("t", ir, OptLevel::O0, TargetLanguage::LlvmIr) {
        Err(ToolchainError::Compile { diagnostic }) => assert!(diagnostic.contains("missing_helper"), "{diagnostic}"),
        other => panic!("expected a compile error, got {other:?}"),
    }
}

#[test]
fn ir_without_main_is_a_compile_error() {
    let ir = "define i32 @lifted() {\n  ret i32 0\n}\n";
    assert!(matches!(
        toolchain().compile("t", ir, OptLevel::O3, TargetLanguage::LlvmIr),
        Err(ToolchainError::Compile { .. })
    ));
}

#[test]
fn valid_ir_runs_to_a_checksum() {
    let ir = r#"@.fmt = private constant [15 x i8] c"checksum = %X\0A\00"
declare i32 @printf(i8*, ...)

define i32 @main() {
  %f = getelementptr [15 x i8], [15 x i8]* @.fmt, i32 0, i32 0
  %1 = call i32 (i8*, ...) @printf(i8* %f, i32 48879)
  ret i32 0
}
"#;
    let tc = toolchain();
    let artifact = tc.compile("t", ir, OptLevel::O0, TargetLanguage::LlvmIr).unwrap();
    assert_eq!(tc.execute(&artifact, Duration::from_secs(5)), ExecutionResult::Checksum { value: 0xBEEF });
}

#[test]
fn null_dereference_is_a_runtime_error() {
    let src = "int main(void) { volatile int *p = 0; return *p; }\n";
    match run_c(src, OptLevel::O0, Duration::from_secs(5)) {
        ExecutionResult::RuntimeError { detail } => assert!(detail.contains("signal"), "{detail}"),
        other => panic!("expected a runtime error, got {other:?}"),
    }
}

#[test]
fn nonzero_exit_and_missing_checksum_are_runtime_errors() {
    let src = "#include <stdio.h>\nint main(void) { printf(\"checksum = 1\\n\"); return 3; }\n";
    assert!(matches!(run_c(src, OptLevel::O0, Duration::from_secs(5)), ExecutionResult::RuntimeError { .. }));
    let src = "#include <stdio.h>\nint main(void) { printf(\"hello\\n\"); return 0; }\n";
    match run_c(src, OptLevel::O0, Duration::from_secs(5)) {
        ExecutionResult::RuntimeError { detail } => assert!(detail.starts_with("malformed output"), "{detail}"),
        other => panic!("{other:?}"),
    }
    let src = "#include <stdio.h>\nint main(void) { printf(\"checksum = 1\\nchecksum = 2\\n\"); return 0; }\n";
    assert!(matches!(run_c(src, OptLevel::O0, Duration::from_secs(5)), ExecutionResult::RuntimeError { .. }));
}

#[test]
fn infinite_loop_times_out_promptly() {
    let src = "int main(void) { volatile int x = 0; while (1) x++; return 0; }\n";
    let timeout = Duration::from_secs(1);
    let started = Instant::now();
    assert_eq!(run_c(src, OptLevel::O0, timeout), ExecutionResult::Timeout);
    assert!(started.elapsed() < timeout + Duration::from_secs(1), "took {:?}", started.elapsed());
}

#[test]
fn optimisation_levels_produce_different_assembly() {
    let program = builtin::generate(7);
    let tc = toolchain();
    let o0 = tc.emit_assembly(&program.source, OptLevel::O0, TargetLanguage::C).unwrap();
    let o3 = tc.emit_assembly(&program.source, OptLevel::O3, TargetLanguage::C).unwrap();
    assert_ne!(
        tokenize_asm(&o0, Normalization::Normalized).tokens,
        tokenize_asm(&o3, Normalization::Normalized).tokens
    );
    // Same input, same flags: same text.
    assert_eq!(o0, tc.emit_assembly(&program.source, OptLevel::O0, TargetLanguage::C).unwrap());
}

#[test]
fn generated_program_agrees_across_levels() {
    let program = builtin::generate(11);
    let a = run_c(&program.source, OptLevel::O0, Duration::from_secs(5));
    let b = run_c(&program.source, OptLevel::O3, Duration::from_secs(5));
    assert!(matches!(a, ExecutionResult::Checksum { .. }), "{a:?}");
    assert_eq!(a, b);
}

#[test]
fn empty_translation_unit() {
    let tc = toolchain();
    let asm = tc.emit_assembly("", OptLevel::O0, TargetLanguage::C).unwrap();
    assert!(tokenize_asm(&asm, Normalization::Normalized).is_empty());
    assert!(matches!(
        tc.compile("t", "", OptLevel::O0, TargetLanguage::C),
        Err(ToolchainError::Compile { .. })
    ));
}

#[test]
fn missing_compiler_is_infrastructure() {
    let tc = Toolchain::new(ToolchainConfig {
        c_compiler: "/nonexistent/cc {opt} -o {output} {input}".into(),
        ..ToolchainConfig::default()
    });
    assert!(matches!(
        tc.compile("t", "int main(void){return 0;}", OptLevel::O0, TargetLanguage::C),
        Err(ToolchainError::Infrastructure(_))
    ));
}
