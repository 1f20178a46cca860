//! Lexical measurements over C source: token counting and a coarse
//! statement/loop census used for the triviality filter.

/// Functions that make up the checksum runtime. Their bodies are not part of
/// the computation under test and are ignored by [`census`].
pub const CHECKSUM_RUNTIME: &[&str] = &[
    "crc32_gentab",
    "crc32_gen_tab",
    "crc32_byte",
    "crc32_8bytes",
    "transparent_crc",
    "transparent_crc_bytes",
    "platform_main_begin",
    "platform_main_end",
];

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Counts tokens as maximal runs of `[A-Za-z0-9_]` plus one token per other
/// non-whitespace character.
pub fn count_tokens(source: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in source.chars() {
        if is_word_char(c) {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Punct(char),
}

/// Removes comments, preprocessor lines and literal contents, then splits the
/// remainder into words and punctuation.
fn lex(source: &str) -> Vec<Tok> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line_start = true;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if line_start && c == '#' {
            // skip the directive, honouring backslash continuations
            while i < chars.len() && chars[i] != '\n' {
                if chars[i] == '\\' && i + 1 < chars.len() && chars[i + 1] == '\n' {
                    i += 1;
                }
                i += 1;
            }
            continue;
        }
        line_start = false;
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i + 1 < chars.len() && !(chars[i] == '*' && chars[i + 1] == '/') {
                i += 1;
            }
            i += 2;
            continue;
        }
        if c == '"' || c == '\'' {
            i += 1;
            while i < chars.len() && chars[i] != c {
                if chars[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            i += 1;
            out.push(Tok::Word("<lit>".into()));
            continue;
        }
        if is_word_char(c) {
            let start = i;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            out.push(Tok::Word(chars[start..i].iter().collect()));
            continue;
        }
        out.push(Tok::Punct(c));
        i += 1;
    }
    out
}

/// Statement census of one translation unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Census {
    /// `;`-terminated statements plus control statements (`if`, `for`,
    /// `while`, `do`, `switch`) inside function bodies.
    pub statements: usize,
    pub loops: usize,
    /// Function definitions other than `main` and the checksum runtime.
    pub helper_functions: usize,
    pub has_main: bool,
}

pub fn census(source: &str) -> Census {
    let toks = lex(source);
    let mut census = Census::default();
    let mut i = 0;
    let mut depth = 0usize;
    while i < toks.len() {
        match &toks[i] {
            Tok::Punct('{') => depth += 1,
            Tok::Punct('}') => depth = depth.saturating_sub(1),
            Tok::Punct('(') if depth == 0 => {
                let name = match i.checked_sub(1).map(|j| &toks[j]) {
                    Some(Tok::Word(w)) => Some(w.clone()),
                    _ => None,
                };
                let close = matching(&toks, i, '(', ')');
                if let (Some(name), Some(close)) = (name, close) {
                    // skip K&R-style or attribute noise between ')' and '{'
                    let mut k = close + 1;
                    while k < toks.len() && matches!(&toks[k], Tok::Word(_)) {
                        k += 1;
                    }
                    if matches!(toks.get(k), Some(Tok::Punct('{'))) {
                        let end = matching(&toks, k, '{', '}').unwrap_or(toks.len() - 1);
                        if !CHECKSUM_RUNTIME.contains(&name.as_str()) {
                            if name == "main" {
                                census.has_main = true;
                            } else {
                                census.helper_functions += 1;
                            }
                            count_body(&toks[k + 1..end], &mut census);
                        }
                        i = end + 1;
                        continue;
                    }
                    i = close + 1;
                    continue;
                }
            }
            _ => {}
        }
        i += 1;
    }
    census
}

fn matching(toks: &[Tok], open_at: usize, open: char, close: char) -> Option<usize> {
    let mut level = 0usize;
    for (j, t) in toks.iter().enumerate().skip(open_at) {
        match t {
            Tok::Punct(c) if *c == open => level += 1,
            Tok::Punct(c) if *c == close => {
                level -= 1;
                if level == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}

fn count_body(body: &[Tok], census: &mut Census) {
    let mut parens = 0usize;
    for t in body {
        match t {
            Tok::Punct('(') => parens += 1,
            Tok::Punct(')') => parens = parens.saturating_sub(1),
            Tok::Punct(';') if parens == 0 => census.statements += 1,
            Tok::Word(w) => match w.as_str() {
                "for" | "while" => {
                    census.statements += 1;
                    census.loops += 1;
                }
                "do" => {
                    census.statements += 1;
                    census.loops += 1;
                }
                "if" | "switch" => census.statements += 1,
                _ => {}
            },
            _ => {}
        }
    }
}

/// A program is trivial when it has fewer than `min_statements` executable
/// statements, or when it has neither a loop nor a helper function.
pub fn is_trivial(source: &str, min_statements: usize) -> bool {
    let c = census(source);
    c.statements < min_statements || (c.loops == 0 && c.helper_functions == 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_examples() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("int main ( ) { }"), 6);
        assert_eq!(count_tokens("int main(){}"), 6);
        assert_eq!(count_tokens("x1_y+=0x1Fu;"), 5);
    }

    #[test]
    fn empty_main_is_trivial() {
        assert!(is_trivial("int main(void) { }", 20));
        assert!(is_trivial("int main(void) { return 0; }", 1));
    }

    #[test]
    fn loop_over_floor_is_not_trivial() {
        let mut body = String::from("int main(void) { int i; unsigned x = 0;\n");
        body.push_str("for (i = 0; i < 4; i++) { x += i; }\n");
        for k in 0..18 {
            body.push_str(&format!("x ^= {k}u;\n"));
        }
        body.push_str("return 0; }\n");
        let c = census(&body);
        // 2 decls + for + body stmt + 18 + return
        assert_eq!(c.statements, 23);
        assert_eq!(c.loops, 1);
        assert!(!is_trivial(&body, 20));
        // statement-rich but loop-free and call-free stays trivial
        let flat = body.replace("for (i = 0; i < 4; i++) { x += i; }", "x += 1; x += 2;");
        assert!(is_trivial(&flat, 20));
    }

    #[test]
    fn comments_strings_and_directives_ignored() {
        let src = r#"#include <stdio.h>
#define X(a) \
   for (;;) ;
/* for (;;) { ; ; ; } */
static int f(int a) { return a; } // while ; ;
int main(void) { printf("; for while"); return f(1); }
"#;
        let c = census(src);
        assert_eq!(c.statements, 3);
        assert_eq!(c.loops, 0);
        assert_eq!(c.helper_functions, 1);
        assert!(c.has_main);
    }

    #[test]
    fn runtime_bodies_excluded() {
        let src = "static void crc32_gentab(void) { int i; for (i = 0; i < 8; i++) ; }\nint main(void) { return 0; }";
        let c = census(src);
        assert_eq!(c.statements, 1);
        assert_eq!(c.loops, 0);
        assert_eq!(c.helper_functions, 0);
    }
}
