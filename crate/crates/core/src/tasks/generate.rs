use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::perm::composition_table;
use super::spec::{arith, TaskKind, TaskSpec, CYCLE_LEN, IGNORE};
use crate::tensor::Rng;
use crate::{Error, Result};

/// Rejection attempts per example before giving up on a disjoint test split.
const MAX_ATTEMPTS: u64 = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub inputs: Vec<u16>,
    /// [`IGNORE`] where no loss is taken.
    pub targets: Vec<u16>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Row-major token matrices of one split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub spec: TaskSpec,
    pub split: Split,
    pub rows: usize,
    pub input_len: usize,
    pub target_len: usize,
    pub inputs: Vec<u16>,
    pub targets: Vec<u16>,
}

impl Dataset {
    fn empty(spec: &TaskSpec, split: Split) -> Self {
        Dataset {
            spec: spec.clone(),
            split,
            rows: 0,
            input_len: spec.input_len(),
            target_len: spec.target_len(),
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    fn push(&mut self, ex: Example) {
        debug_assert_eq!((ex.inputs.len(), ex.targets.len()), (self.input_len, self.target_len));
        self.inputs.extend(ex.inputs);
        self.targets.extend(ex.targets);
        self.rows += 1;
    }

    pub fn input_row(&self, i: usize) -> &[u16] {
        &self.inputs[i * self.input_len..][..self.input_len]
    }

    pub fn target_row(&self, i: usize) -> &[u16] {
        &self.targets[i * self.target_len..][..self.target_len]
    }

    pub fn example(&self, i: usize) -> Example {
        Example { inputs: self.input_row(i).to_vec(), targets: self.target_row(i).to_vec() }
    }

    /// Number of supervised target slots.
    pub fn supervised(&self) -> usize {
        self.targets.iter().filter(|&&t| t != IGNORE).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPair {
    pub train: Dataset,
    pub test: Dataset,
}

fn stream(split: Split, attempt: u64, index: usize) -> u64 {
    let s = match split {
        Split::Train => 0u64,
        Split::Test => 1,
    };
    (s << 48) | (attempt << 32) | index as u64
}

/// Train and test splits. Every example comes from its own RNG substream of
/// `(seed, split, attempt, index)`. Test inputs that also occur in the train
/// split are redrawn.
pub fn generate(spec: &TaskSpec) -> Result<DatasetPair> {
    spec.validate()?;
    let table = (spec.kind == TaskKind::SnComposition).then(|| composition_table(spec.group_n.unwrap()));
    let make = |rng: &mut Rng| gen_example(spec, table.as_deref(), rng);

    let mut train = Dataset::empty(spec, Split::Train);
    let mut seen = HashSet::with_capacity(spec.num_train);
    for i in 0..spec.num_train {
        let ex = make(&mut Rng::substream(spec.seed, stream(Split::Train, 0, i)));
        seen.insert(ex.inputs.clone());
        train.push(ex);
    }
    let mut test = Dataset::empty(spec, Split::Test);
    for i in 0..spec.num_test {
        let ex = (0..MAX_ATTEMPTS)
            .map(|attempt| make(&mut Rng::substream(spec.seed, stream(Split::Test, attempt, i))))
            .find(|ex| !seen.contains(&ex.inputs))
            .ok_or_else(|| {
                Error::spec(
                    "num_test",
                    format!("no test example disjoint from the train split after {MAX_ATTEMPTS} draws; the input space is too small"),
                )
            })?;
        test.push(ex);
    }
    Ok(DatasetPair { train, test })
}

pub fn gen_example(spec: &TaskSpec, sn_table: Option<&[Vec<u16>]>, rng: &mut Rng) -> Example {
    match spec.kind {
        TaskKind::Compression => compression(spec, rng),
        TaskKind::SelectiveCopy => selective_copy(spec, rng),
        TaskKind::Recall => recall(spec, rng),
        TaskKind::SnComposition => {
            let owned;
            let table = match sn_table {
                Some(t) => t,
                None => {
                    owned = composition_table(spec.group_n.unwrap_or(3));
                    &owned
                }
            };
            sn(spec, table, rng)
        }
        TaskKind::Parity => parity(spec, rng),
        TaskKind::CycleNav => cycle_nav(spec, rng),
        TaskKind::ModArith => mod_arith(spec, false, rng),
        TaskKind::ModArithBrackets => mod_arith(spec, true, rng),
    }
}

fn token(rng: &mut Rng, n: usize) -> u16 {
    rng.below(n) as u16
}

/// Content tokens `0..V−1`, then the aggregation token `V−1`; target = content.
fn compression(spec: &TaskSpec, rng: &mut Rng) -> Example {
    let agg = (spec.vocab_size - 1) as u16;
    let content: Vec<u16> = (0..spec.seq_len).map(|_| token(rng, spec.vocab_size - 1)).collect();
    let mut inputs = content.clone();
    inputs.push(agg);
    Example { inputs, targets: content }
}

/// Content `0..V−2`, noise `V−2`, trigger `V−1`. `k` content tokens sit at
/// random positions of the first `L−k` slots; the last `k` slots are triggers
/// whose targets are the content tokens in order.
fn selective_copy(spec: &TaskSpec, rng: &mut Rng) -> Example {
    let (len, k) = (spec.seq_len, spec.copy_count());
    let noise = (spec.vocab_size - 2) as u16;
    let trigger = (spec.vocab_size - 1) as u16;
    let mut slots: Vec<usize> = (0..len - k).collect();
    rng.shuffle(&mut slots);
    let mut chosen = slots[..k].to_vec();
    chosen.sort_unstable();
    let mut inputs = vec![noise; len];
    let mut targets = vec![IGNORE; len];
    for (j, &pos) in chosen.iter().enumerate() {
        let tok = token(rng, spec.vocab_size - 2);
        inputs[pos] = tok;
        targets[len - k + j] = tok;
    }
    inputs[len - k..].iter_mut().for_each(|t| *t = trigger);
    Example { inputs, targets }
}

/// Keys `0..V/2`, values `V/2..V`. `P = L/2` pairs; the last `max(1, P/4)`
/// pairs query a key seen in context. The target sits at the query key and is
/// the key's most recent value; the query's value token follows (teacher forcing).
fn recall(spec: &TaskSpec, rng: &mut Rng) -> Example {
    let half = spec.vocab_size / 2;
    let pairs = spec.seq_len / 2;
    let queries = (pairs / 4).max(1);
    let mut binding: Vec<Option<u16>> = vec![None; half];
    let mut inputs = Vec::with_capacity(spec.seq_len);
    let mut targets = vec![IGNORE; spec.seq_len];
    for _ in 0..pairs - queries {
        let key = token(rng, half);
        let value = (half as u16) + token(rng, half);
        binding[key as usize] = Some(value);
        inputs.extend([key, value]);
    }
    let known: Vec<u16> = (0..half as u16).filter(|&k| binding[k as usize].is_some()).collect();
    for _ in 0..queries {
        let key = known[rng.below(known.len())];
        let value = binding[key as usize].unwrap();
        targets[inputs.len()] = value;
        inputs.extend([key, value]);
    }
    Example { inputs, targets }
}

/// Uniform group elements; target `t` is `g_1 ∘ … ∘ g_t`.
fn sn(spec: &TaskSpec, table: &[Vec<u16>], rng: &mut Rng) -> Example {
    let order = table.len();
    let inputs: Vec<u16> = (0..spec.seq_len).map(|_| token(rng, order)).collect();
    let mut acc = 0u16;
    let targets = inputs
        .iter()
        .map(|&g| {
            acc = table[acc as usize][g as usize];
            acc
        })
        .collect();
    Example { inputs, targets }
}

fn parity(spec: &TaskSpec, rng: &mut Rng) -> Example {
    let inputs: Vec<u16> = (0..spec.seq_len).map(|_| token(rng, 2)).collect();
    let mut acc = 0;
    let targets = inputs
        .iter()
        .map(|&b| {
            acc ^= b;
            acc
        })
        .collect();
    Example { inputs, targets }
}

/// Moves: 0 stay, 1 step forward, 2 step back. Supervised at the last position only.
fn cycle_nav(spec: &TaskSpec, rng: &mut Rng) -> Example {
    let inputs: Vec<u16> = (0..spec.seq_len).map(|_| token(rng, 3)).collect();
    let mut targets = vec![IGNORE; spec.seq_len];
    *targets.last_mut().unwrap() = cycle_position(&inputs);
    Example { inputs, targets }
}

pub(crate) fn cycle_position(moves: &[u16]) -> u16 {
    let n = CYCLE_LEN as u16;
    moves.iter().fold(0u16, |pos, &mv| match mv {
        1 => (pos + 1) % n,
        2 => (pos + n - 1) % n,
        _ => pos,
    })
}

enum Expr {
    Num(u16),
    Bin(Box<Expr>, u16, Box<Expr>),
}

impl Expr {
    fn eval(&self) -> u16 {
        match self {
            Expr::Num(n) => *n,
            Expr::Bin(l, op, r) => apply_op(l.eval(), *op, r.eval()),
        }
    }

    fn render(&self, out: &mut Vec<u16>) {
        match self {
            Expr::Num(n) => out.push(*n),
            Expr::Bin(l, op, r) => {
                out.push(arith::OPEN);
                l.render(out);
                out.push(*op);
                r.render(out);
                out.push(arith::CLOSE);
            }
        }
    }
}

pub(crate) fn apply_op(a: u16, op: u16, b: u16) -> u16 {
    match op {
        arith::PLUS => (a + b) % 5,
        arith::MINUS => (a + 5 - b) % 5,
        arith::TIMES => (a * b) % 5,
        _ => unreachable!("not an operator: {op}"),
    }
}

fn random_op(rng: &mut Rng) -> u16 {
    arith::PLUS + token(rng, 3)
}

/// Fully bracketed tree using at most `budget` tokens.
fn random_tree(budget: usize, top: bool, rng: &mut Rng) -> Expr {
    if budget < 5 || (!top && rng.bernoulli(0.4)) {
        return Expr::Num(token(rng, 5));
    }
    let inner = budget - 3;
    let left = 1 + rng.below(inner - 1);
    let l = random_tree(left, false, rng);
    let op = random_op(rng);
    let r = random_tree(inner - left, false, rng);
    Expr::Bin(Box::new(l), op, Box::new(r))
}

/// Left-padded expression over digits 0–4 and `+ − ·`; the target is its value
/// mod 5 at the final position. Without brackets, `·` binds tighter.
fn mod_arith(spec: &TaskSpec, brackets: bool, rng: &mut Rng) -> Example {
    let len = spec.seq_len;
    let (tokens, value) = if brackets {
        let tree = random_tree(len, true, rng);
        let mut tokens = Vec::new();
        tree.render(&mut tokens);
        (tokens, tree.eval())
    } else {
        let ops = rng.below((len - 1) / 2 + 1);
        let mut tokens = vec![token(rng, 5)];
        for _ in 0..ops {
            tokens.push(random_op(rng));
            tokens.push(token(rng, 5));
        }
        let value = flat_value(&tokens);
        (tokens, value)
    };
    let mut inputs = vec![arith::PAD; len - tokens.len()];
    inputs.extend(tokens);
    let mut targets = vec![IGNORE; len];
    targets[len - 1] = value;
    Example { inputs, targets }
}

/// Sum of signed products of an unbracketed expression `d (op d)*`.
fn flat_value(tokens: &[u16]) -> u16 {
    let mut total = 0u16;
    let mut sign = arith::PLUS;
    let mut term = tokens[0];
    for pair in tokens[1..].chunks_exact(2) {
        let (op, d) = (pair[0], pair[1]);
        if op == arith::TIMES {
            term = term * d % 5;
        } else {
            total = apply_op(total, sign, term);
            sign = op;
            term = d;
        }
    }
    apply_op(total, sign, term)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: TaskKind) -> TaskSpec {
        let mut s = TaskSpec::baseline(kind);
        s.num_train = 50;
        s.num_test = 20;
        s
    }

    #[test]
    fn deterministic_under_seed() {
        for kind in TaskKind::ALL {
            let s = spec(kind);
            assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
            let mut other = s.clone();
            other.seed = 1;
            assert_ne!(generate(&s).unwrap().train.inputs, generate(&other).unwrap().train.inputs);
        }
    }

    #[test]
    fn splits_are_disjoint() {
        for kind in TaskKind::ALL {
            let pair = generate(&spec(kind)).unwrap();
            let train: HashSet<&[u16]> = (0..pair.train.rows).map(|i| pair.train.input_row(i)).collect();
            assert!((0..pair.test.rows).all(|i| !train.contains(pair.test.input_row(i))));
        }
    }

    #[test]
    fn exhausted_input_space_is_an_error() {
        let mut s = TaskSpec::baseline(TaskKind::Parity);
        s.seq_len = 3;
        s.num_train = 200;
        s.num_test = 5;
        assert!(matches!(generate(&s), Err(Error::Spec { .. })));
    }

    #[test]
    fn compression_single_token() {
        let mut s = spec(TaskKind::Compression);
        s.vocab_size = 2;
        s.seq_len = 1;
        s.num_train = 1;
        s.num_test = 0;
        let ex = generate(&s).unwrap().train.example(0);
        assert_eq!(ex.inputs, vec![0, 1]);
        assert_eq!(ex.targets, vec![0]);
    }

    #[test]
    fn compression_histogram_is_flat() {
        let mut s = spec(TaskKind::Compression);
        s.num_train = 2000;
        let d = generate(&s).unwrap().train;
        let mut counts = [0f64; 15];
        for (i, &t) in d.inputs.iter().enumerate() {
            if i % d.input_len != d.input_len - 1 {
                counts[t as usize] += 1.0;
            }
        }
        let expect = counts.iter().sum::<f64>() / 15.0;
        let chi2: f64 = counts.iter().map(|c| (c - expect).powi(2) / expect).sum();
        // 14 degrees of freedom; p = 0.001 critical value is 36.1
        assert!(chi2 < 36.1, "χ² = {chi2}");
    }

    #[test]
    fn selective_copy_edge_cases() {
        let mut s = spec(TaskKind::SelectiveCopy);
        s.seq_len = 8;
        s.copy_count = Some(4);
        let ex = generate(&s).unwrap().train.example(0);
        assert!(ex.inputs[..4].iter().all(|&t| (t as usize) < 14));
        assert_eq!(&ex.targets[4..], &ex.inputs[..4]);

        s.copy_count = Some(1);
        let ex = generate(&s).unwrap().train.example(3);
        let content: Vec<u16> = ex.inputs.iter().copied().filter(|&t| t < 14).collect();
        assert_eq!(content.len(), 1);
        assert_eq!(ex.targets[7], content[0]);
    }

    #[test]
    fn recall_one_pair() {
        let mut s = spec(TaskKind::Recall);
        s.seq_len = 4;
        s.num_test = 0;
        for i in 0..20 {
            let ex = generate(&s).unwrap().train.example(i);
            assert_eq!(ex.inputs[2], ex.inputs[0]);
            assert_eq!(ex.targets, vec![IGNORE, IGNORE, ex.inputs[1], IGNORE]);
        }
    }

    #[test]
    fn flat_arithmetic_precedence() {
        use arith::*;
        assert_eq!(flat_value(&[2]), 2);
        assert_eq!(flat_value(&[2, PLUS, 4]), 1);
        assert_eq!(flat_value(&[2, PLUS, 3, TIMES, 4]), (2 + 12) % 5);
        assert_eq!(flat_value(&[1, MINUS, 3, TIMES, 4, PLUS, 2]), ((1 - 12 + 2) % 5 + 5) as u16 % 5);
    }
}
