//! Synthetic compositional datasets: panel tasks, symbolic rule-combination
//! tasks, rule splits, and dataset files.

pub mod glyphs;
mod io;
mod panels;
mod symbolic;

pub use io::{Dataset, DATASET_MAGIC, DATASET_VERSION};
pub use panels::{
    gen_panel_task, quadrant_origin, quadrant_pixels, tokenize_panels, verify_panel_task,
    PanelTask, RuleId, RuleTemplate, Slot, TokenMode, PANELS_PER_TASK, PANEL_PIXELS, PANEL_SIDE,
    PANEL_TOKENS, QUADRANTS,
};
pub use symbolic::{
    gen_symbolic_task, split_rule_combos, tokenize_symbolic, verify_symbolic_task, RuleCombo,
    SymbolicRule, SymbolicTask, COMBO_COUNT, FEATURES, FEATURE_VALUES, RULE_COUNT, SEQUENCES,
    STEPS, SYMBOLIC_TOKENS, SYMBOLIC_TOKEN_DIM,
};
