//! Symbolic rule-combination tasks.
//!
//! A task applies one rule per feature to a 3-sequences x 3-steps grid of
//! 4-feature tuples over the integers mod 8. Rule combinations are split
//! into train and held-out sets by a seeded hash so generalization to
//! unseen combinations can be measured.

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::{self, Rng};

pub const FEATURES: usize = 4;
pub const FEATURE_VALUES: usize = 8;
pub const SEQUENCES: usize = 3;
pub const STEPS: usize = 3;
/// One token per grid cell.
pub const SYMBOLIC_TOKENS: usize = SEQUENCES * STEPS;
/// One-hot width of a token: 4 features x 8 values.
pub const SYMBOLIC_TOKEN_DIM: usize = FEATURES * FEATURE_VALUES;
pub const RULE_COUNT: usize = 8;
/// 8^4 rule combinations.
pub const COMBO_COUNT: usize = RULE_COUNT.pow(FEATURES as u32);

/// The eight per-feature rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolicRule {
    /// All three steps keep the row's initial value.
    Constant,
    /// v, v+1, v+2 (mod 8).
    PlusOne,
    /// v, v+2, v+4.
    PlusTwo,
    /// v, v-1, v-2.
    MinusOne,
    /// v, 7-v, v.
    Mirror,
    /// a, b, a xor b.
    XorPrev,
    /// Rows are the successive cyclic rotations of one distinct triple.
    CyclicShift,
    /// Rows are the three rotations of one distinct triple in a random
    /// order.
    DistributeThree,
}

impl SymbolicRule {
    pub fn from_id(id: u8) -> Result<Self> {
        Ok(match id {
            0 => SymbolicRule::Constant,
            1 => SymbolicRule::PlusOne,
            2 => SymbolicRule::PlusTwo,
            3 => SymbolicRule::MinusOne,
            4 => SymbolicRule::Mirror,
            5 => SymbolicRule::XorPrev,
            6 => SymbolicRule::CyclicShift,
            7 => SymbolicRule::DistributeThree,
            other => {
                return Err(Error::InvalidConfig(format!("rule id {other} out of range")))
            }
        })
    }
}

/// One rule id per feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleCombo(pub [u8; FEATURES]);

impl RuleCombo {
    pub fn validate(&self) -> Result<()> {
        for &id in &self.0 {
            SymbolicRule::from_id(id)?;
        }
        Ok(())
    }

    /// All 4096 combinations in lexicographic order.
    pub fn all() -> Vec<RuleCombo> {
        let mut out = Vec::with_capacity(COMBO_COUNT);
        for a in 0..RULE_COUNT as u8 {
            for b in 0..RULE_COUNT as u8 {
                for c in 0..RULE_COUNT as u8 {
                    for d in 0..RULE_COUNT as u8 {
                        out.push(RuleCombo([a, b, c, d]));
                    }
                }
            }
        }
        out
    }
}

/// A generated grid instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicTask {
    pub combo: RuleCombo,
    /// `grid[sequence][step][feature]`, values in 0..8.
    pub grid: [[[u8; FEATURES]; STEPS]; SEQUENCES],
    /// The final tuple `grid[2][2]`.
    pub target: [u8; FEATURES],
}

fn val(rng: &mut Rng) -> u8 {
    rng::uniform_usize(rng, FEATURE_VALUES) as u8
}

fn distinct_triple(rng: &mut Rng) -> [u8; 3] {
    let picks = rng::sample_distinct(rng, FEATURE_VALUES, 3);
    [picks[0] as u8, picks[1] as u8, picks[2] as u8]
}

fn rotate(triple: [u8; 3], by: usize) -> [u8; 3] {
    [triple[by % 3], triple[(by + 1) % 3], triple[(by + 2) % 3]]
}

/// Fills one feature column of the grid according to `rule`.
fn unroll_rule(rule: SymbolicRule, rng: &mut Rng) -> [[u8; STEPS]; SEQUENCES] {
    let mut rows = [[0u8; STEPS]; SEQUENCES];
    match rule {
        SymbolicRule::Constant => {
            for row in rows.iter_mut() {
                let a = val(rng);
                *row = [a, a, a];
            }
        }
        SymbolicRule::PlusOne => {
            for row in rows.iter_mut() {
                let a = val(rng);
                *row = [a, (a + 1) % 8, (a + 2) % 8];
            }
        }
        SymbolicRule::PlusTwo => {
            for row in rows.iter_mut() {
                let a = val(rng);
                *row = [a, (a + 2) % 8, (a + 4) % 8];
            }
        }
        SymbolicRule::MinusOne => {
            for row in rows.iter_mut() {
                let a = val(rng);
                *row = [a, (a + 7) % 8, (a + 6) % 8];
            }
        }
        SymbolicRule::Mirror => {
            for row in rows.iter_mut() {
                let a = val(rng);
                *row = [a, 7 - a, a];
            }
        }
        SymbolicRule::XorPrev => {
            for row in rows.iter_mut() {
                let a = val(rng);
                let b = val(rng);
                *row = [a, b, a ^ b];
            }
        }
        SymbolicRule::CyclicShift => {
            let triple = distinct_triple(rng);
            for (r, row) in rows.iter_mut().enumerate() {
                *row = rotate(triple, r);
            }
        }
        SymbolicRule::DistributeThree => {
            let triple = distinct_triple(rng);
            let mut order = [0usize, 1, 2];
            rng::shuffle(rng, &mut order);
            for (row, &by) in rows.iter_mut().zip(&order) {
                *row = rotate(triple, by);
            }
        }
    }
    rows
}

/// Deterministic task for (combo, seed).
pub fn gen_symbolic_task(combo: RuleCombo, seed: u64) -> Result<SymbolicTask> {
    combo.validate()?;
    let mut rng = rng::substream(seed, 1);
    let mut grid = [[[0u8; FEATURES]; STEPS]; SEQUENCES];
    for (f, &rule_id) in combo.0.iter().enumerate() {
        let rule = SymbolicRule::from_id(rule_id)?;
        let col = unroll_rule(rule, &mut rng);
        for s in 0..SEQUENCES {
            for t in 0..STEPS {
                grid[s][t][f] = col[s][t];
            }
        }
    }
    Ok(SymbolicTask { combo, grid, target: grid[SEQUENCES - 1][STEPS - 1] })
}

/// Standalone checker: does feature `f` of the grid obey `rule`?
fn check_rule(rule: SymbolicRule, rows: &[[u8; STEPS]; SEQUENCES]) -> bool {
    match rule {
        SymbolicRule::Constant => rows.iter().all(|r| r[0] == r[1] && r[1] == r[2]),
        SymbolicRule::PlusOne => rows
            .iter()
            .all(|r| r[1] == (r[0] + 1) % 8 && r[2] == (r[1] + 1) % 8),
        SymbolicRule::PlusTwo => rows
            .iter()
            .all(|r| r[1] == (r[0] + 2) % 8 && r[2] == (r[1] + 2) % 8),
        SymbolicRule::MinusOne => rows
            .iter()
            .all(|r| r[1] == (r[0] + 7) % 8 && r[2] == (r[1] + 7) % 8),
        SymbolicRule::Mirror => rows.iter().all(|r| r[1] == 7 - r[0] && r[2] == r[0]),
        SymbolicRule::XorPrev => rows.iter().all(|r| r[2] == r[0] ^ r[1]),
        SymbolicRule::CyclicShift => {
            let t = rows[0];
            t[0] != t[1]
                && t[1] != t[2]
                && t[0] != t[2]
                && rows[1] == rotate(t, 1)
                && rows[2] == rotate(t, 2)
        }
        SymbolicRule::DistributeThree => {
            let t = rows[0];
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return false;
            }
            let r1 = rows[1];
            let r2 = rows[2];
            (r1 == rotate(t, 1) && r2 == rotate(t, 2))
                || (r1 == rotate(t, 2) && r2 == rotate(t, 1))
        }
    }
}

/// Validates every feature column of a task against its combo.
pub fn verify_symbolic_task(task: &SymbolicTask) -> bool {
    if task.combo.validate().is_err() {
        return false;
    }
    if task.target != task.grid[SEQUENCES - 1][STEPS - 1] {
        return false;
    }
    for (f, &rule_id) in task.combo.0.iter().enumerate() {
        let rule = SymbolicRule::from_id(rule_id).expect("validated above");
        let mut rows = [[0u8; STEPS]; SEQUENCES];
        for s in 0..SEQUENCES {
            for t in 0..STEPS {
                rows[s][t] = task.grid[s][t][f];
            }
        }
        if !check_rule(rule, &rows) {
            return false;
        }
    }
    true
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Seeded hash partition of rule combos into (train, test). The test side
/// gets `round(holdout * total)` combos; the split is disjoint, exhaustive
/// and independent of input order.
pub fn split_rule_combos(
    combos: &[RuleCombo],
    holdout: f64,
    seed: u64,
) -> Result<(Vec<RuleCombo>, Vec<RuleCombo>)> {
    if !(holdout > 0.0 && holdout < 1.0) {
        return Err(Error::InvalidParameter { what: "holdout", value: holdout });
    }
    if combos.is_empty() {
        return Err(Error::EmptyInput("split_rule_combos"));
    }
    let mut keyed: Vec<(u64, RuleCombo)> = combos
        .iter()
        .map(|&c| {
            let code = u32::from_le_bytes([c.0[0], c.0[1], c.0[2], c.0[3]]) as u64;
            (splitmix64(seed ^ splitmix64(code)), c)
        })
        .collect();
    keyed.sort_unstable_by(|a, b| a.cmp(b));
    let test_count = (holdout * combos.len() as f64).round() as usize;
    let test_count = test_count.clamp(1, combos.len() - 1);
    let mut test: Vec<RuleCombo> = keyed[..test_count].iter().map(|&(_, c)| c).collect();
    let mut train: Vec<RuleCombo> = keyed[test_count..].iter().map(|&(_, c)| c).collect();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Token matrix (9 x 32) for a task: tokens are grid cells in sequence
/// order, each the concatenation of four feature one-hots. When
/// `mask_target`, the last row is zeroed.
pub fn tokenize_symbolic(task: &SymbolicTask, mask_target: bool) -> Result<Matrix> {
    let mut data = vec![0.0f64; SYMBOLIC_TOKENS * SYMBOLIC_TOKEN_DIM];
    for s in 0..SEQUENCES {
        for t in 0..STEPS {
            let row = s * STEPS + t;
            if mask_target && row == SYMBOLIC_TOKENS - 1 {
                continue;
            }
            for f in 0..FEATURES {
                let v = task.grid[s][t][f] as usize;
                data[row * SYMBOLIC_TOKEN_DIM + f * FEATURE_VALUES + v] = 1.0;
            }
        }
    }
    Matrix::from_vec(SYMBOLIC_TOKENS, SYMBOLIC_TOKEN_DIM, data)
}
