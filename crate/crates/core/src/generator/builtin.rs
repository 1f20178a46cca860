//! Built-in random C program generator.
//!
//! Programs are straight-line `uint32_t` arithmetic with fixed-bound `for`
//! loops, guarded conditionals, a 16-slot global array and up to eight helper
//! functions that only call lower-numbered helpers. Every assignment is
//! followed by a CRC update of the assigned value; `main` prints the final
//! CRC as `checksum = %X`, the same observable format Csmith uses.
//!
//! Undefined behaviour is excluded by construction: all arithmetic is on
//! unsigned 32-bit values, shift amounts are masked to `0..31`, divisors are
//! forced odd, array indices are masked, comparison results are cast back to
//! `uint32_t`, and the call graph is acyclic with loops bounded by constants.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Version tag folded into manifests; bump whenever output for a given seed
/// changes.
pub const BUILTIN_VERSION: &str = "builtin-1";

const ARRAY_LEN: u32 = 16;
const MAX_HELPERS: usize = 8;
const MAX_LOOP_DEPTH: usize = 2;

const PRELUDE: &str = r#"#include <stdint.h>
#include <stdio.h>

static uint32_t crc32_tab[256];
static uint32_t crc32_context = 0xFFFFFFFFu;

static void crc32_gentab(void)
{
    uint32_t crc;
    const uint32_t poly = 0xEDB88320u;
    int i, j;
    for (i = 0; i < 256; i++) {
        crc = (uint32_t)i;
        for (j = 8; j > 0; j--) {
            if (crc & 1u)
                crc = (crc >> 1) ^ poly;
            else
                crc >>= 1;
        }
        crc32_tab[i] = crc;
    }
}

static void crc32_byte(uint8_t b)
{
    crc32_context = ((crc32_context >> 8) & 0x00FFFFFFu) ^ crc32_tab[(crc32_context ^ b) & 0xFFu];
}

static void transparent_crc(uint32_t val)
{
    int i;
    for (i = 0; i < 4; i++)
        crc32_byte((uint8_t)(val >> (i * 8)));
}
"#;

/// Output of one generation: the source text and the number of executable
/// statements emitted (counted during emission, outside the runtime).
#[derive(Debug, Clone)]
pub struct BuiltinProgram {
    pub source: String,
    pub statements: usize,
    pub loops: usize,
    pub helpers: usize,
}

struct Scope {
    /// readable and assignable scalar names
    scalars: Vec<String>,
    /// loop counters currently in scope (readable only)
    counters: Vec<String>,
    /// helpers callable from this function
    callable: usize,
    call_sites_left: usize,
}

struct Emitter {
    rng: ChaCha8Rng,
    out: String,
    statements: usize,
    loops: usize,
    globals: Vec<String>,
}

impl Emitter {
    fn line(&mut self, indent: usize, text: &str) {
        for _ in 0..indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn stmt(&mut self, indent: usize, text: &str) {
        self.statements += 1;
        self.line(indent, text);
    }

    fn constant(&mut self) -> String {
        match self.rng.random_range(0..4) {
            0 => format!("{}u", self.rng.random_range(0u32..16)),
            1 => format!("{}u", self.rng.random_range(16u32..4096)),
            _ => format!("0x{:X}u", self.rng.random::<u32>()),
        }
    }

    fn leaf(&mut self, scope: &Scope) -> String {
        let pick = self.rng.random_range(0..10);
        if pick < 2 {
            return self.constant();
        }
        if pick < 3 && !scope.counters.is_empty() {
            let c = &scope.counters[self.rng.random_range(0..scope.counters.len())];
            return format!("(uint32_t){c}");
        }
        if pick < 5 {
            let g = self.globals[self.rng.random_range(0..self.globals.len())].clone();
            return g;
        }
        scope.scalars[self.rng.random_range(0..scope.scalars.len())].clone()
    }

    fn expr(&mut self, scope: &mut Scope, depth: usize, allow_call: bool) -> String {
        if depth == 0 || self.rng.random_range(0..10) < 3 {
            return self.leaf(scope);
        }
        if allow_call && scope.callable > 0 && scope.call_sites_left > 0 && self.rng.random_range(0..6) == 0 {
            scope.call_sites_left -= 1;
            let callee = self.rng.random_range(0..scope.callable);
            let a = self.expr(scope, depth - 1, false);
            let b = self.expr(scope, depth - 1, false);
            return format!("func_{callee}({a}, {b})");
        }
        let a = self.expr(scope, depth - 1, allow_call);
        let b = self.expr(scope, depth - 1, allow_call);
        match self.rng.random_range(0..13) {
            0 => format!("({a} + {b})"),
            1 => format!("({a} - {b})"),
            2 => format!("({a} * {b})"),
            3 => format!("({a} ^ {b})"),
            4 => format!("({a} & {b})"),
            5 => format!("({a} | {b})"),
            6 => format!("({a} << ({b} & 31u))"),
            7 => format!("({a} >> ({b} & 31u))"),
            8 => format!("({a} / ({b} | 1u))"),
            9 => format!("({a} % ({b} | 1u))"),
            10 => {
                let op = ["<", "<=", ">", ">=", "==", "!="][self.rng.random_range(0..6)];
                format!("(uint32_t)({a} {op} {b})")
            }
            11 => format!("g_arr[({a}) & {}u]", ARRAY_LEN - 1),
            _ => {
                let c = self.expr(scope, depth - 1, false);
                format!("({c} ? {a} : {b})")
            }
        }
    }

    fn assignment(&mut self, scope: &mut Scope, indent: usize, allow_call: bool) {
        let value = self.expr(scope, 3, allow_call);
        match self.rng.random_range(0..10) {
            0..=5 => {
                let target = scope.scalars[self.rng.random_range(0..scope.scalars.len())].clone();
                self.stmt(indent, &format!("{target} = {value};"));
                self.stmt(indent, &format!("transparent_crc({target});"));
            }
            6..=7 => {
                let target = self.globals[self.rng.random_range(0..self.globals.len())].clone();
                self.stmt(indent, &format!("{target} = {value};"));
                self.stmt(indent, &format!("transparent_crc({target});"));
            }
            _ => {
                let idx = self.expr(scope, 1, false);
                let slot = format!("g_arr[({idx}) & {}u]", ARRAY_LEN - 1);
                self.stmt(indent, &format!("{slot} = {value};"));
                self.stmt(indent, &format!("transparent_crc({slot});"));
            }
        }
    }

    fn block(&mut self, scope: &mut Scope, indent: usize, budget: usize, loop_depth: usize) {
        for _ in 0..budget {
            let top = loop_depth == 0;
            match self.rng.random_range(0..10) {
                0..=1 if loop_depth < MAX_LOOP_DEPTH => self.for_loop(scope, indent, loop_depth),
                2 => {
                    let a = self.expr(scope, 2, false);
                    let b = self.expr(scope, 2, false);
                    self.stmt(indent, &format!("if ({a} > {b}) {{"));
                    let inner = self.rng.random_range(1..3);
                    self.block(scope, indent + 1, inner, loop_depth);
                    self.line(indent, "} else {");
                    self.block(scope, indent + 1, 1, loop_depth);
                    self.line(indent, "}");
                }
                _ => self.assignment(scope, indent, top),
            }
        }
    }

    fn for_loop(&mut self, scope: &mut Scope, indent: usize, loop_depth: usize) {
        let counter = format!("i_{loop_depth}");
        let bound = self.rng.random_range(2..=8);
        self.stmt(indent, &format!("for ({counter} = 0; {counter} < {bound}; {counter}++) {{"));
        self.loops += 1;
        scope.counters.push(counter);
        let inner = self.rng.random_range(1..4);
        self.block(scope, indent + 1, inner, loop_depth + 1);
        scope.counters.pop();
        self.line(indent, "}");
    }

    fn locals(&mut self, scope: &mut Scope, count: usize, params: &[&str]) {
        for k in 0..count {
            let init = if !params.is_empty() && self.rng.random_bool(0.5) {
                let p = params[self.rng.random_range(0..params.len())];
                let c = self.constant();
                format!("{p} ^ {c}")
            } else {
                self.constant()
            };
            let name = format!("l_{k}");
            self.stmt(1, &format!("uint32_t {name} = {init};"));
            scope.scalars.push(name);
        }
        self.stmt(1, &format!("int {};", (0..MAX_LOOP_DEPTH).map(|d| format!("i_{d}")).collect::<Vec<_>>().join(", ")));
    }
}

/// Generates the program for `seed`. Pure function of the seed.
pub fn generate(seed: u64) -> BuiltinProgram {
    let mut em = Emitter {
        rng: ChaCha8Rng::seed_from_u64(seed),
        out: String::new(),
        statements: 0,
        loops: 0,
        globals: Vec::new(),
    };
    let helpers = em.rng.random_range(1..=MAX_HELPERS);
    let n_globals = em.rng.random_range(3..=8);

    let _ = writeln!(em.out, "/* liftcheck {BUILTIN_VERSION} seed {seed} */");
    em.out.push_str(PRELUDE);
    em.out.push('\n');
    for g in 0..n_globals {
        let c = em.constant();
        em.line(0, &format!("static uint32_t g_{g} = {c};"));
        em.globals.push(format!("g_{g}"));
    }
    let init: Vec<String> = (0..ARRAY_LEN).map(|_| format!("0x{:X}u", em.rng.random::<u32>())).collect();
    em.line(0, &format!("static uint32_t g_arr[{ARRAY_LEN}] = {{{}}};", init.join(", ")));
    em.out.push('\n');

    for f in 0..helpers {
        em.line(0, &format!("static uint32_t func_{f}(uint32_t p_0, uint32_t p_1)"));
        em.line(0, "{");
        let mut scope = Scope {
            scalars: vec!["p_0".into(), "p_1".into()],
            counters: Vec::new(),
            callable: f,
            call_sites_left: 2,
        };
        let n_locals = em.rng.random_range(2..=5);
        em.locals(&mut scope, n_locals, &["p_0", "p_1"]);
        let budget = em.rng.random_range(3..=8);
        em.block(&mut scope, 1, budget, 0);
        let ret = em.expr(&mut scope, 2, false);
        em.stmt(1, &format!("return {ret};"));
        em.line(0, "}");
        em.out.push('\n');
    }

    em.line(0, "int main(void)");
    em.line(0, "{");
    let mut scope = Scope {
        scalars: Vec::new(),
        counters: Vec::new(),
        callable: helpers,
        call_sites_left: 4,
    };
    let n_locals = em.rng.random_range(2..=5);
    em.locals(&mut scope, n_locals, &[]);
    em.stmt(1, "crc32_gentab();");
    em.for_loop(&mut scope, 1, 0);
    // the top helper is always reached so the call graph is live
    let a = em.expr(&mut scope, 1, false);
    let b = em.expr(&mut scope, 1, false);
    let target = scope.scalars[0].clone();
    em.stmt(1, &format!("{target} = func_{}({a}, {b});", helpers - 1));
    em.stmt(1, &format!("transparent_crc({target});"));
    let budget = em.rng.random_range(4..=12);
    em.block(&mut scope, 1, budget, 0);
    em.stmt(1, &format!("for (i_0 = 0; i_0 < {ARRAY_LEN}; i_0++) {{"));
    em.loops += 1;
    em.stmt(2, "transparent_crc(g_arr[i_0]);");
    em.line(1, "}");
    for g in em.globals.clone() {
        em.stmt(1, &format!("transparent_crc({g});"));
    }
    em.stmt(1, "printf(\"checksum = %X\\n\", (unsigned int)(crc32_context ^ 0xFFFFFFFFu));");
    em.stmt(1, "return 0;");
    em.line(0, "}");

    BuiltinProgram {
        source: em.out,
        statements: em.statements,
        loops: em.loops,
        helpers,
    }
}
