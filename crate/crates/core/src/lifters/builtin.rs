//! Reference lifters with known outcomes, used to validate the harness.

/// Never terminates at any optimisation level; the volatile store keeps the
/// loop observable.
pub const NONTERMINATING: &str = "int main(void)\n{\n    volatile unsigned spin = 0;\n    for (;;)\n        spin++;\n    return 0;\n}\n";

const BROKEN_TAIL: &str = "\nint lifted_fragment( {\n";

/// Source text that cannot compile.
pub fn broken_syntax(original: Option<&str>) -> String {
    match original {
        Some(src) => format!("{src}{BROKEN_TAIL}"),
        None => BROKEN_TAIL.trim_start().to_string(),
    }
}

fn checksum_anchor(source: &str) -> Option<usize> {
    ["checksum = ", "platform_main_end("]
        .iter()
        .filter_map(|needle| source.rfind(needle))
        .min()
}

/// Byte range of the argument expression of the last `transparent_crc(`
/// call before the checksum is printed.
fn last_feed_argument(source: &str) -> Option<(usize, usize)> {
    let anchor = checksum_anchor(source)?;
    let call = source[..anchor].rfind("transparent_crc(")?;
    let start = call + "transparent_crc(".len();
    let mut depth = 0usize;
    for (i, c) in source[start..anchor].char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' if depth > 0 => depth -= 1,
            ')' | ',' if depth == 0 => return Some((start, start + i)),
            _ => {}
        }
    }
    None
}

/// Whether [`sabotage`] can perturb this program.
pub fn is_sabotage_target(source: &str) -> bool {
    last_feed_argument(source).is_some()
}

/// Flips the lowest bit of the last value fed into the checksum before it is
/// printed. With an unchanged prefix the CRC register differs after that
/// feed, and CRC-32 detects every error burst of 32 bits or fewer, so the
/// printed checksum changes whenever the feed is a scalar outside a loop.
pub fn sabotage(source: &str) -> Option<String> {
    let (start, end) = last_feed_argument(source)?;
    let arg = source[start..end].trim();
    Some(format!("{}({arg}) ^ 1{}", &source[..start], &source[end..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sabotage_rewrites_last_feed() {
        let src = "transparent_crc(a);\ntransparent_crc(g_arr[(x) & 15u]);\nprintf(\"checksum = %X\\n\", c);";
        let out = sabotage(src).unwrap();
        assert!(out.contains("transparent_crc(a);"));
        assert!(out.contains("transparent_crc((g_arr[(x) & 15u]) ^ 1);"));
    }

    #[test]
    fn sabotage_handles_csmith_calls() {
        let src = "    transparent_crc(g_2, \"g_2\", print_hash_value);\n    platform_main_end(crc32_context ^ 0xFFFFFFFFUL, print_hash_value);";
        let out = sabotage(src).unwrap();
        assert!(out.contains("transparent_crc((g_2) ^ 1, \"g_2\", print_hash_value);"));
    }

    #[test]
    fn no_site_no_target() {
        assert!(!is_sabotage_target("int main(void) { return 0; }"));
        assert!(sabotage("int main(void) { return 0; }").is_none());
    }
}
