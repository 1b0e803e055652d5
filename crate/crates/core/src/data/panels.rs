//! Compositional panel tasks.
//!
//! A task is nine 8x8 binary panels in three row-groups; each group
//! instantiates the rule template with its own (A, B, C) glyph triple. The
//! four 4x4 quadrants of a panel read top-left, top-right, bottom-left,
//! bottom-right.

use crate::data::glyphs::{self, EMPTY_INDEX, GLYPH_COUNT, GLYPH_SIDE};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

pub const PANELS_PER_TASK: usize = 9;
pub const QUADRANTS: usize = 4;
pub const PANEL_SIDE: usize = 8;
pub const PANEL_PIXELS: usize = PANEL_SIDE * PANEL_SIDE;
/// Tokens per task sequence: 9 panels x 4 quadrants.
pub const PANEL_TOKENS: usize = PANELS_PER_TASK * QUADRANTS;

/// Symbols a rule template may place in a quadrant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    A,
    B,
    C,
    Empty,
}

/// The two rule templates of the toy experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleId {
    A,
    B,
}

impl RuleId {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::A => "a",
            RuleId::B => "b",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(RuleId::A),
            "b" => Ok(RuleId::B),
            other => Err(Error::InvalidConfig(format!("unknown rule '{other}'"))),
        }
    }
}

/// Three quadrant patterns, one per panel of a row-group.
#[derive(Debug, Clone)]
pub struct RuleTemplate {
    pub id: RuleId,
    pub patterns: [[Slot; QUADRANTS]; 3],
}

impl RuleTemplate {
    /// (A,0,0,B), (B,0,0,C), (C,0,0,A) across the diagonal quadrants.
    pub fn rule_a() -> Self {
        use Slot::*;
        RuleTemplate {
            id: RuleId::A,
            patterns: [
                [A, Empty, Empty, B],
                [B, Empty, Empty, C],
                [C, Empty, Empty, A],
            ],
        }
    }

    /// (0,A,B,0), (0,B,C,0), (0,C,A,0) across the anti-diagonal quadrants.
    pub fn rule_b() -> Self {
        use Slot::*;
        RuleTemplate {
            id: RuleId::B,
            patterns: [
                [Empty, A, B, Empty],
                [Empty, B, C, Empty],
                [Empty, C, A, Empty],
            ],
        }
    }

    pub fn for_id(id: RuleId) -> Self {
        match id {
            RuleId::A => Self::rule_a(),
            RuleId::B => Self::rule_b(),
        }
    }

    /// The nonempty-slot positions must be identical across the three
    /// patterns.
    pub fn validate(&self) -> Result<()> {
        let occupied: Vec<bool> = self.patterns[0].iter().map(|s| *s != Slot::Empty).collect();
        for p in &self.patterns[1..] {
            let here: Vec<bool> = p.iter().map(|s| *s != Slot::Empty).collect();
            if here != occupied {
                return Err(Error::InvalidConfig(
                    "rule template patterns occupy different slots".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One generated nine-panel instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTask {
    pub rule: RuleId,
    /// Nine pairwise-distinct glyph indices; group g uses
    /// `elements[3g..3g+3]` as its (A, B, C) triple.
    pub elements: [u8; PANELS_PER_TASK],
    /// Glyph index per quadrant, `EMPTY_INDEX as u8` for empty slots.
    pub quadrant_glyphs: [[u8; QUADRANTS]; PANELS_PER_TASK],
    /// 8x8 binary images, row-major, values 0 or 1.
    pub panels: [[u8; PANEL_PIXELS]; PANELS_PER_TASK],
}

/// Renders a deterministic task for (template, seed).
pub fn gen_panel_task(template: &RuleTemplate, seed: u64) -> PanelTask {
    template.validate().expect("builtin templates are valid");
    let mut rng = rng::substream(seed, 0);
    let pick = rng::sample_distinct(&mut rng, GLYPH_COUNT, PANELS_PER_TASK);
    let mut elements = [0u8; PANELS_PER_TASK];
    for (dst, src) in elements.iter_mut().zip(&pick) {
        *dst = *src as u8;
    }
    let mut quadrant_glyphs = [[EMPTY_INDEX as u8; QUADRANTS]; PANELS_PER_TASK];
    let mut panels = [[0u8; PANEL_PIXELS]; PANELS_PER_TASK];
    for panel in 0..PANELS_PER_TASK {
        let group = panel / 3;
        let pattern = &template.patterns[panel % 3];
        let triple = &elements[group * 3..group * 3 + 3];
        for (q, slot) in pattern.iter().enumerate() {
            let glyph_index = match slot {
                Slot::A => triple[0],
                Slot::B => triple[1],
                Slot::C => triple[2],
                Slot::Empty => continue,
            };
            quadrant_glyphs[panel][q] = glyph_index;
            blit(&mut panels[panel], q, glyph_index as usize);
        }
    }
    PanelTask { rule: template.id, elements, quadrant_glyphs, panels }
}

fn blit(panel: &mut [u8; PANEL_PIXELS], quadrant: usize, glyph_index: usize) {
    let bitmap = glyphs::glyph(glyph_index);
    let (r0, c0) = quadrant_origin(quadrant);
    for r in 0..GLYPH_SIDE {
        for c in 0..GLYPH_SIDE {
            if bitmap[r * GLYPH_SIDE + c] == 1.0 {
                panel[(r0 + r) * PANEL_SIDE + (c0 + c)] = 1;
            }
        }
    }
}

/// Row/column origin of quadrant q in TL, TR, BL, BR order.
pub fn quadrant_origin(quadrant: usize) -> (usize, usize) {
    match quadrant {
        0 => (0, 0),
        1 => (0, GLYPH_SIDE),
        2 => (GLYPH_SIDE, 0),
        3 => (GLYPH_SIDE, GLYPH_SIDE),
        _ => panic!("quadrant {quadrant} out of range"),
    }
}

/// The 16 pixels of quadrant q of a panel.
pub fn quadrant_pixels(panel: &[u8; PANEL_PIXELS], quadrant: usize) -> [f64; 16] {
    let (r0, c0) = quadrant_origin(quadrant);
    let mut out = [0.0; 16];
    for r in 0..GLYPH_SIDE {
        for c in 0..GLYPH_SIDE {
            out[r * GLYPH_SIDE + c] = panel[(r0 + r) * PANEL_SIDE + (c0 + c)] as f64;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenMode {
    /// 36 x 16: each token is a flattened quadrant.
    Pixels,
    /// 36 x 17: each token is the one-hot of its glyph index (col 16 = empty).
    OneHot,
}

/// Token matrix for a task; `mask_target` zeroes the last panel's rows.
pub fn tokenize_panels(task: &PanelTask, mode: TokenMode, mask_target: bool) -> Result<Matrix> {
    let cols = match mode {
        TokenMode::Pixels => 16,
        TokenMode::OneHot => 17,
    };
    let mut data = vec![0.0f64; PANEL_TOKENS * cols];
    for panel in 0..PANELS_PER_TASK {
        for q in 0..QUADRANTS {
            let row = panel * QUADRANTS + q;
            if mask_target && panel == PANELS_PER_TASK - 1 {
                continue;
            }
            match mode {
                TokenMode::Pixels => {
                    let px = quadrant_pixels(&task.panels[panel], q);
                    data[row * cols..(row + 1) * cols].copy_from_slice(&px);
                }
                TokenMode::OneHot => {
                    let g = task.quadrant_glyphs[panel][q] as usize;
                    data[row * cols + g] = 1.0;
                }
            }
        }
    }
    Matrix::from_vec(PANEL_TOKENS, cols, data)
}

/// Independent rule verifier: decodes every quadrant from pixels, rebuilds
/// the symbol bindings per group, and checks the template structure plus
/// global distinctness. Reads nothing from the generator's bookkeeping
/// fields except the rule id.
pub fn verify_panel_task(task: &PanelTask, template: &RuleTemplate) -> bool {
    if template.validate().is_err() {
        return false;
    }
    let mut all_triples: Vec<[usize; 3]> = Vec::new();
    for group in 0..3 {
        // symbol -> glyph binding for this group
        let mut binding: [Option<usize>; 3] = [None; 3];
        for local in 0..3 {
            let panel = &task.panels[group * 3 + local];
            let pattern = &template.patterns[local];
            for (q, slot) in pattern.iter().enumerate() {
                let decoded = match glyphs::match_glyph(&quadrant_pixels(panel, q)) {
                    Some(g) => g,
                    None => return false,
                };
                match slot {
                    Slot::Empty => {
                        if decoded != EMPTY_INDEX {
                            return false;
                        }
                    }
                    sym => {
                        if decoded >= GLYPH_COUNT {
                            return false;
                        }
                        let idx = match sym {
                            Slot::A => 0,
                            Slot::B => 1,
                            Slot::C => 2,
                            Slot::Empty => unreachable!(),
                        };
                        match binding[idx] {
                            None => binding[idx] = Some(decoded),
                            Some(prev) if prev == decoded => {}
                            Some(_) => return false,
                        }
                    }
                }
            }
        }
        let Some(triple) = binding[0].zip(binding[1]).zip(binding[2]) else {
            return false;
        };
        all_triples.push([triple.0 .0, triple.0 .1, triple.1]);
    }
    // all nine bound glyphs pairwise distinct
    let mut seen = [false; GLYPH_COUNT];
    for t in &all_triples {
        for &g in t {
            if seen[g] {
                return false;
            }
            seen[g] = true;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::glyphs::glyph_pixel_count;

    #[test]
    fn rule_a_places_glyphs_on_diagonal() {
        // bind A,B,C = glyphs 0,1,2 by constructing with a template whose
        // sampling is bypassed: check panel 1 of a generated task instead
        let task = gen_panel_task(&RuleTemplate::rule_a(), 7);
        let (a, b) = (task.elements[0], task.elements[1]);
        assert_eq!(task.quadrant_glyphs[0][0], a);
        assert_eq!(task.quadrant_glyphs[0][3], b);
        assert_eq!(task.quadrant_glyphs[0][1], EMPTY_INDEX as u8);
        assert_eq!(task.quadrant_glyphs[0][2], EMPTY_INDEX as u8);
        // pixels follow
        let px = quadrant_pixels(&task.panels[0], 0);
        assert_eq!(glyphs::match_glyph(&px), Some(a as usize));
    }

    #[test]
    fn every_panel_has_exactly_two_nonempty_quadrants() {
        for seed in 0..20 {
            for template in [RuleTemplate::rule_a(), RuleTemplate::rule_b()] {
                let task = gen_panel_task(&template, seed);
                for panel in 0..PANELS_PER_TASK {
                    let nonempty = (0..QUADRANTS)
                        .filter(|&q| task.quadrant_glyphs[panel][q] != EMPTY_INDEX as u8)
                        .count();
                    assert_eq!(nonempty, 2);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_panel_task(&RuleTemplate::rule_a(), 123);
        let b = gen_panel_task(&RuleTemplate::rule_a(), 123);
        assert_eq!(a, b);
        let c = gen_panel_task(&RuleTemplate::rule_a(), 124);
        assert_ne!(a, c);
    }

    #[test]
    fn generated_tasks_pass_the_independent_verifier() {
        for seed in 0..50 {
            let a = gen_panel_task(&RuleTemplate::rule_a(), seed);
            assert!(verify_panel_task(&a, &RuleTemplate::rule_a()), "seed {seed}");
            let b = gen_panel_task(&RuleTemplate::rule_b(), seed);
            assert!(verify_panel_task(&b, &RuleTemplate::rule_b()), "seed {seed}");
            // cross-template must fail: occupied quadrants differ
            assert!(!verify_panel_task(&a, &RuleTemplate::rule_b()));
        }
    }

    #[test]
    fn verifier_rejects_tampered_panels() {
        let mut task = gen_panel_task(&RuleTemplate::rule_a(), 3);
        task.panels[4][0] ^= 1;
        assert!(!verify_panel_task(&task, &RuleTemplate::rule_a()));
    }

    #[test]
    fn onehot_tokens_follow_quadrant_glyphs() {
        let task = gen_panel_task(&RuleTemplate::rule_a(), 9);
        let m = tokenize_panels(&task, TokenMode::OneHot, false).unwrap();
        assert_eq!(m.shape(), (36, 17));
        for panel in 0..PANELS_PER_TASK {
            for q in 0..QUADRANTS {
                let row = m.row(panel * QUADRANTS + q);
                let g = task.quadrant_glyphs[panel][q] as usize;
                for (c, &v) in row.iter().enumerate() {
                    assert_eq!(v, if c == g { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn pixel_token_row_sums_are_glyph_pixel_counts() {
        let task = gen_panel_task(&RuleTemplate::rule_b(), 21);
        let m = tokenize_panels(&task, TokenMode::Pixels, false).unwrap();
        assert_eq!(m.shape(), (36, 16));
        for panel in 0..PANELS_PER_TASK {
            for q in 0..QUADRANTS {
                let sum: f64 = m.row(panel * QUADRANTS + q).iter().sum();
                let g = task.quadrant_glyphs[panel][q] as usize;
                let expect = if g == EMPTY_INDEX { 0 } else { glyph_pixel_count(g) };
                assert_eq!(sum as usize, expect);
            }
        }
    }

    #[test]
    fn mask_target_zeroes_last_four_rows() {
        let task = gen_panel_task(&RuleTemplate::rule_a(), 2);
        let m = tokenize_panels(&task, TokenMode::Pixels, true).unwrap();
        for row in 32..36 {
            assert!(m.row(row).iter().all(|&v| v == 0.0));
        }
        // unmasked rows kept
        let full = tokenize_panels(&task, TokenMode::Pixels, false).unwrap();
        for row in 0..32 {
            assert_eq!(m.row(row), full.row(row));
        }
    }
}
