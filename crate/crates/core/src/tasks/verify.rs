//! Brute-force checkers, one per task, written independently of the generators.

use super::perm::{compose, permutations};
use super::spec::{arith, TaskKind, TaskSpec, CYCLE_LEN, IGNORE};
use super::{Dataset, Example};
use crate::{Error, Result};

fn fail(spec: &TaskSpec, detail: impl Into<String>) -> Error {
    Error::Contract(format!("{} example fails its verifier: {}", spec.kind, detail.into()))
}

/// Check one example against its task contract.
pub fn verify_example(spec: &TaskSpec, ex: &Example) -> Result<()> {
    if ex.inputs.len() != spec.input_len() || ex.targets.len() != spec.target_len() {
        return Err(fail(spec, "wrong row lengths"));
    }
    let v = spec.vocab_size as u16;
    if ex.inputs.iter().any(|&t| t >= v) {
        return Err(fail(spec, "input token outside the vocabulary"));
    }
    let expected = expected_targets(spec, &ex.inputs)?;
    if expected != ex.targets {
        return Err(fail(spec, format!("targets {:?}, oracle {:?}", ex.targets, expected)));
    }
    Ok(())
}

pub fn verify_dataset(data: &Dataset) -> Result<()> {
    (0..data.rows).try_for_each(|i| verify_example(&data.spec, &data.example(i)))
}

fn expected_targets(spec: &TaskSpec, inputs: &[u16]) -> Result<Vec<u16>> {
    let len = spec.target_len();
    let mut out = vec![IGNORE; len];
    match spec.kind {
        TaskKind::Compression => {
            if inputs[len] != (spec.vocab_size - 1) as u16 || inputs[..len].contains(&((spec.vocab_size - 1) as u16)) {
                return Err(fail(spec, "aggregation token misplaced"));
            }
            out.copy_from_slice(&inputs[..len]);
        }
        TaskKind::SelectiveCopy => {
            let k = spec.copy_count();
            let (noise, trigger) = ((spec.vocab_size - 2) as u16, (spec.vocab_size - 1) as u16);
            if inputs[len - k..].iter().any(|&t| t != trigger) || inputs[..len - k].contains(&trigger) {
                return Err(fail(spec, "triggers misplaced"));
            }
            let content: Vec<u16> = inputs.iter().copied().filter(|&t| t != noise && t != trigger).collect();
            if content.len() != k {
                return Err(fail(spec, format!("{} content tokens, expected {k}", content.len())));
            }
            out[len - k..].copy_from_slice(&content);
        }
        TaskKind::Recall => {
            let half = (spec.vocab_size / 2) as u16;
            let pairs = len / 2;
            let queries = (pairs / 4).max(1);
            let mut latest = std::collections::HashMap::new();
            for (p, kv) in inputs.chunks_exact(2).enumerate() {
                if kv[0] >= half || kv[1] < half {
                    return Err(fail(spec, "pair is not (key, value)"));
                }
                if p >= pairs - queries {
                    let value = *latest.get(&kv[0]).ok_or_else(|| fail(spec, "query of an unseen key"))?;
                    out[2 * p] = value;
                } else {
                    latest.insert(kv[0], kv[1]);
                }
            }
        }
        TaskKind::SnComposition => {
            let perms = permutations(spec.group_n.unwrap_or(3));
            let mut acc: Vec<u8> = perms[0].clone();
            for (t, &g) in inputs.iter().enumerate() {
                acc = compose(&acc, &perms[g as usize]);
                out[t] = perms.iter().position(|p| *p == acc).unwrap() as u16;
            }
        }
        TaskKind::Parity => {
            for t in 0..len {
                out[t] = (inputs[..=t].iter().filter(|&&b| b == 1).count() % 2) as u16;
            }
        }
        TaskKind::CycleNav => {
            let steps: i64 = inputs.iter().map(|&m| [0, 1, -1][m as usize]).sum();
            out[len - 1] = steps.rem_euclid(CYCLE_LEN as i64) as u16;
        }
        TaskKind::ModArith | TaskKind::ModArithBrackets => {
            let start = inputs.iter().position(|&t| t != arith::PAD).ok_or_else(|| fail(spec, "empty expression"))?;
            let body = &inputs[start..];
            if body.contains(&arith::PAD) {
                return Err(fail(spec, "padding inside the expression"));
            }
            let brackets = body.contains(&arith::OPEN);
            if brackets && spec.kind == TaskKind::ModArith {
                return Err(fail(spec, "brackets in the plain variant"));
            }
            let mut parser = Parser { tokens: body, pos: 0 };
            let value = parser.expr().ok_or_else(|| fail(spec, "malformed expression"))?;
            if parser.pos != body.len() {
                return Err(fail(spec, "trailing tokens"));
            }
            out[len - 1] = value.rem_euclid(5) as u16;
        }
    }
    Ok(out)
}

/// Recursive descent over `expr := term (('+'|'−') term)*`,
/// `term := atom ('·' atom)*`, `atom := digit | '(' expr ')'`, reducing mod 5 as it goes.
struct Parser<'a> {
    tokens: &'a [u16],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u16> {
        self.tokens.get(self.pos).copied()
    }

    fn expr(&mut self) -> Option<i64> {
        let mut v = self.term()?;
        while let Some(op @ (arith::PLUS | arith::MINUS)) = self.peek() {
            self.pos += 1;
            let r = self.term()?;
            v = (if op == arith::PLUS { v + r } else { v - r }).rem_euclid(5);
        }
        Some(v)
    }

    fn term(&mut self) -> Option<i64> {
        let mut v = self.atom()?;
        while self.peek() == Some(arith::TIMES) {
            self.pos += 1;
            v = (v * self.atom()?).rem_euclid(5);
        }
        Some(v)
    }

    fn atom(&mut self) -> Option<i64> {
        let t = self.peek()?;
        self.pos += 1;
        match t {
            0..=4 => Some(t as i64),
            arith::OPEN => {
                let v = self.expr()?;
                (self.peek() == Some(arith::CLOSE)).then(|| self.pos += 1)?;
                Some(v)
            }
            _ => None,
        }
    }
}
