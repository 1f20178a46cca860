//! CodeBLEU adapted to assembly.
//!
//! The four components are computed over normalized assembly tokens:
//!
//! * `ngram`: smoothed BLEU-4.
//! * `weighted_ngram`: BLEU-4 whose unigram precision weights instruction
//!   mnemonics five times higher than operand tokens. The mnemonic set is the
//!   set of first tokens of instruction lines observed in the pair.
//! * `syntax`: Dice-normalized longest common subsequence over the
//!   per-instruction shape sequence (mnemonic plus operand kinds: register,
//!   immediate, memory, symbol). Stands in for AST matching.
//! * `dataflow`: F1 over register def-use edges, with registers renumbered
//!   per function in order of first appearance so consistent renaming does
//!   not change the score.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::bleu::{brevity_penalty, clipped_matches, intern_pair, smoothed_precision};
use super::tokenize::TokenSequence;

pub const KEYWORD_WEIGHT: f64 = 1.0;
pub const OPERAND_WEIGHT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeBleuWeights {
    pub ngram: f64,
    pub weighted_ngram: f64,
    pub syntax: f64,
    pub dataflow: f64,
}

impl Default for CodeBleuWeights {
    fn default() -> Self {
        CodeBleuWeights {
            ngram: 0.25,
            weighted_ngram: 0.25,
            syntax: 0.25,
            dataflow: 0.25,
        }
    }
}

impl CodeBleuWeights {
    pub fn new(ngram: f64, weighted_ngram: f64, syntax: f64, dataflow: f64) -> Result<Self, String> {
        let w = CodeBleuWeights {
            ngram,
            weighted_ngram,
            syntax,
            dataflow,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), String> {
        let parts = [self.ngram, self.weighted_ngram, self.syntax, self.dataflow];
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("metrics.codebleu_weights: weights must be finite and non-negative".into());
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("metrics.codebleu_weights: weights must sum to 1, got {sum}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuComponents {
    pub ngram: f64,
    pub weighted_ngram: f64,
    pub syntax: f64,
    pub dataflow: f64,
}

impl CodeBleuComponents {
    pub fn combine(&self, w: &CodeBleuWeights) -> f64 {
        let s = w.ngram * self.ngram + w.weighted_ngram * self.weighted_ngram + w.syntax * self.syntax + w.dataflow * self.dataflow;
        s.clamp(0.0, 1.0)
    }

    const ZERO: CodeBleuComponents = CodeBleuComponents {
        ngram: 0.0,
        weighted_ngram: 0.0,
        syntax: 0.0,
        dataflow: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Line<'a> {
    Label(&'a str),
    Instruction { mnemonic: &'a str, operands: Vec<&'a [String]> },
}

pub(crate) fn parse_lines(seq: &TokenSequence) -> Vec<Line<'_>> {
    seq.lines()
        .map(|line| {
            if line.len() == 1 && line[0].ends_with(':') {
                return Line::Label(line[0].as_str());
            }
            let operands = if line.len() > 1 {
                line[1..].split(|t| t == ",").filter(|o| !o.is_empty()).collect()
            } else {
                Vec::new()
            };
            Line::Instruction {
                mnemonic: line[0].as_str(),
                operands,
            }
        })
        .collect()
}

/// Canonical family of an x86-64 register name (`eax` and `al` map to `rax`),
/// or `None` for anything else. AT&T `%` prefixes are accepted.
pub fn register_family(token: &str) -> Option<String> {
    let t = token.strip_prefix('%').unwrap_or(token).to_ascii_lowercase();
    const LEGACY: &[(&str, &[&str])] = &[
        ("rax", &["rax", "eax", "ax", "al", "ah"]),
        ("rbx", &["rbx", "ebx", "bx", "bl", "bh"]),
        ("rcx", &["rcx", "ecx", "cx", "cl", "ch"]),
        ("rdx", &["rdx", "edx", "dx", "dl", "dh"]),
        ("rsi", &["rsi", "esi", "si", "sil"]),
        ("rdi", &["rdi", "edi", "di", "dil"]),
        ("rbp", &["rbp", "ebp", "bp", "bpl"]),
        ("rsp", &["rsp", "esp", "sp", "spl"]),
        ("rip", &["rip", "eip"]),
    ];
    for (family, names) in LEGACY {
        if names.contains(&t.as_str()) {
            return Some((*family).to_string());
        }
    }
    if let Some(rest) = t.strip_prefix('r') {
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        let suffix = &rest[digits.len()..];
        if let Ok(n) = digits.parse::<u32>() {
            if (8..=15).contains(&n) && ["", "d", "w", "b"].contains(&suffix) {
                return Some(format!("r{n}"));
            }
        }
    }
    for prefix in ["xmm", "ymm", "zmm"] {
        if let Some(rest) = t.strip_prefix(prefix) {
            if let Ok(n) = rest.parse::<u32>() {
                if n < 32 {
                    return Some(format!("xmm{n}"));
                }
            }
        }
    }
    None
}

fn is_immediate(tok: &str) -> bool {
    let t = tok.strip_prefix('$').unwrap_or(tok);
    let t = t.strip_prefix('#').unwrap_or(t);
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        return !hex.is_empty() && hex.chars().all(|c| c.is_ascii_hexdigit());
    }
    !t.is_empty() && t.chars().all(|c| c.is_ascii_digit())
}

fn operand_kind(op: &[String]) -> char {
    if op.iter().any(|t| t == "[" || t == "(") {
        return 'm';
    }
    let last = op.last().map(String::as_str).unwrap_or("");
    if op.len() == 1 && register_family(last).is_some() {
        'r'
    } else if op.iter().all(|t| t == "-" || t == "+" || is_immediate(t)) {
        'i'
    } else {
        's'
    }
}

fn shape_sequence(lines: &[Line<'_>]) -> Vec<String> {
    lines
        .iter()
        .filter_map(|l| match l {
            Line::Label(_) => None,
            Line::Instruction { mnemonic, operands } => {
                let kinds: String = operands.iter().map(|o| operand_kind(o)).collect();
                Some(format!("{mnemonic}/{kinds}"))
            }
        })
        .collect()
}

pub(crate) fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    // A shared prefix or suffix is always part of some LCS.
    let head = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[head..], &b[head..]);
    let tail = a.iter().rev().zip(b.iter().rev()).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[..a.len() - tail], &b[..b.len() - tail]);
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    head + tail + prev[b.len()]
}

pub fn syntax_match(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    let c = shape_sequence(&parse_lines(candidate));
    let r = shape_sequence(&parse_lines(reference));
    match (c.is_empty(), r.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => {
            let (ci, ri) = intern_pair(&c, &r);
            2.0 * lcs_len(&ci, &ri) as f64 / (c.len() + r.len()) as f64
        }
    }
}

fn is_att(lines: &[Line<'_>]) -> bool {
    lines.iter().any(|l| match l {
        Line::Instruction { operands, .. } => operands.iter().flat_map(|o| o.iter()).any(|t| t.starts_with('%')),
        Line::Label(_) => false,
    })
}

fn writes_without_reading(mnemonic: &str) -> bool {
    let m = mnemonic.to_ascii_lowercase();
    m.starts_with("mov") || m.starts_with("lea") || m.starts_with("set") || m.starts_with("cvt") || m.starts_with("pop")
}

fn never_writes(mnemonic: &str) -> bool {
    let m = mnemonic.to_ascii_lowercase();
    m.starts_with("cmp")
        || m.starts_with("test")
        || m.starts_with("push")
        || m.starts_with('j')
        || m.starts_with("call")
        || m.starts_with("ret")
        || m.starts_with("nop")
        || m.starts_with("ucomis")
        || m.starts_with("comis")
}

/// A def-use edge: register (canonical per function), defining mnemonic,
/// using mnemonic.
pub type DataflowEdge = (usize, String, String);

/// Extracts register def-use edges, function by function. A function starts
/// at every label that is not a local `.L` label.
pub fn dataflow_edges(seq: &TokenSequence) -> Vec<DataflowEdge> {
    let lines = parse_lines(seq);
    let att = is_att(&lines);
    let mut edges = Vec::new();
    let mut canon: HashMap<String, usize> = HashMap::new();
    let mut last_def: HashMap<String, String> = HashMap::new();
    for line in &lines {
        let (mnemonic, operands) = match line {
            Line::Label(name) => {
                if !name.starts_with(".L") {
                    canon.clear();
                    last_def.clear();
                }
                continue;
            }
            Line::Instruction { mnemonic, operands } => (*mnemonic, operands),
        };
        let dest_idx = if operands.is_empty() {
            None
        } else if att {
            Some(operands.len() - 1)
        } else {
            Some(0)
        };
        let mut uses = Vec::new();
        let mut def = None;
        for (i, op) in operands.iter().enumerate() {
            let is_dest = Some(i) == dest_idx;
            let kind = operand_kind(op);
            let regs: Vec<String> = op.iter().filter_map(|t| register_family(t)).collect();
            if is_dest && kind == 'r' && !never_writes(mnemonic) {
                def = regs.first().cloned();
                if !writes_without_reading(mnemonic) {
                    uses.extend(regs);
                }
            } else {
                uses.extend(regs);
            }
        }
        for reg in uses.iter().chain(def.iter()) {
            let next = canon.len();
            canon.entry(reg.clone()).or_insert(next);
        }
        for reg in &uses {
            if let Some(def_mnemonic) = last_def.get(reg) {
                edges.push((canon[reg], def_mnemonic.clone(), mnemonic.to_string()));
            }
        }
        if let Some(reg) = def {
            last_def.insert(reg, mnemonic.to_string());
        }
    }
    edges
}

fn multiset<T: Eq + std::hash::Hash + Clone>(items: &[T]) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for it in items {
        *m.entry(it.clone()).or_insert(0) += 1;
    }
    m
}

pub fn dataflow_match(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    let c = dataflow_edges(candidate);
    let r = dataflow_edges(reference);
    match (c.is_empty(), r.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let cm = multiset(&c);
    let rm = multiset(&r);
    let common: usize = cm.iter().map(|(e, &n)| n.min(rm.get(e).copied().unwrap_or(0))).sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / c.len() as f64;
    let recall = common as f64 / r.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn mnemonic_set(seqs: [&TokenSequence; 2]) -> HashSet<&str> {
    let mut set = HashSet::new();
    for seq in seqs {
        for line in parse_lines(seq) {
            if let Line::Instruction { mnemonic, .. } = line {
                set.insert(mnemonic);
            }
        }
    }
    set
}

/// Clipped unigram precision where mnemonics weigh [`KEYWORD_WEIGHT`] and
/// every other token [`OPERAND_WEIGHT`].
pub fn weighted_unigram_precision(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    let keywords = mnemonic_set([candidate, reference]);
    let cand_counts = multiset(&candidate.tokens);
    let ref_counts = multiset(&reference.tokens);
    // Integer tallies per class keep the result independent of hash order.
    let (mut kw_hit, mut kw_all, mut op_hit, mut op_all) = (0usize, 0usize, 0usize, 0usize);
    for (tok, &n) in &cand_counts {
        let hit = n.min(ref_counts.get(tok).copied().unwrap_or(0));
        if keywords.contains(tok.as_str()) {
            kw_hit += hit;
            kw_all += n;
        } else {
            op_hit += hit;
            op_all += n;
        }
    }
    let matched = KEYWORD_WEIGHT * kw_hit as f64 + OPERAND_WEIGHT * op_hit as f64;
    let total = KEYWORD_WEIGHT * kw_all as f64 + OPERAND_WEIGHT * op_all as f64;
    smoothed_precision(matched, total, 1)
}

pub fn weighted_ngram_match(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    let c = &candidate.tokens;
    let r = &reference.tokens;
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let p1 = weighted_unigram_precision(candidate, reference);
    if p1 == 0.0 {
        return 0.0;
    }
    let (c, r) = intern_pair(c, r);
    let mut log_sum = p1.ln();
    for n in 2..=4 {
        let (m, t) = clipped_matches(&c, &r, n);
        log_sum += smoothed_precision(m as f64, t as f64, n).ln();
    }
    (brevity_penalty(c.len(), r.len()) * (log_sum / 4.0).exp()).clamp(0.0, 1.0)
}

/// Component scores. An empty candidate or reference scores zero throughout.
pub fn codebleu_components(candidate: &TokenSequence, reference: &TokenSequence) -> CodeBleuComponents {
    if candidate.is_empty() || reference.is_empty() {
        return CodeBleuComponents::ZERO;
    }
    CodeBleuComponents {
        ngram: super::bleu(candidate, reference, 4),
        weighted_ngram: weighted_ngram_match(candidate, reference),
        syntax: syntax_match(candidate, reference),
        dataflow: dataflow_match(candidate, reference),
    }
}

pub fn codebleu(candidate: &TokenSequence, reference: &TokenSequence, weights: &CodeBleuWeights) -> f64 {
    codebleu_components(candidate, reference).combine(weights)
}
