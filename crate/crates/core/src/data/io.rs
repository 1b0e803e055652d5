//! Dataset serialization, format "SCAD".
//!
//!   magic "SCAD" | u32 version | u8 task-kind (0 panel, 1 symbolic)
//!   | u64 count | packed records
//!
//! Panel record: rule u8, 9 element u8, 36 quadrant-glyph u8, 9 panels of
//! 8 row bytes (8 pixels per byte, MSB first). Symbolic record: 4 combo
//! u8, 36 grid u8, 4 target u8. Integers little-endian.

use std::path::Path;

use crate::data::panels::{PanelTask, RuleId, PANELS_PER_TASK, PANEL_SIDE, QUADRANTS};
use crate::data::symbolic::{RuleCombo, SymbolicTask, FEATURES, SEQUENCES, STEPS};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"SCAD";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Panels(Vec<PanelTask>),
    Symbolic(Vec<SymbolicTask>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Panels(v) => v.len(),
            Dataset::Symbolic(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            Dataset::Panels(_) => "panel",
            Dataset::Symbolic(_) => "symbolic",
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(DATASET_MAGIC);
        buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        match self {
            Dataset::Panels(tasks) => {
                buf.push(0);
                buf.extend_from_slice(&(tasks.len() as u64).to_le_bytes());
                for t in tasks {
                    write_panel(&mut buf, t);
                }
            }
            Dataset::Symbolic(tasks) => {
                buf.push(1);
                buf.extend_from_slice(&(tasks.len() as u64).to_le_bytes());
                for t in tasks {
                    write_symbolic(&mut buf, t);
                }
            }
        }
        std::fs::write(path, &buf).map_err(|source| Error::Io { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let bytes =
            std::fs::read(path).map_err(|source| Error::Io { path: path.into(), source })?;
        let mut r = Reader { path, bytes: &bytes, pos: 0 };
        if r.take(4)? != DATASET_MAGIC {
            return Err(Error::CorruptHeader { path: path.into() });
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != DATASET_VERSION {
            return Err(Error::VersionMismatch {
                path: path.into(),
                found: version,
                expected: DATASET_VERSION,
            });
        }
        let kind = r.take(1)?[0];
        let count = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let dataset = match kind {
            0 => {
                let mut tasks = Vec::with_capacity(count);
                for _ in 0..count {
                    tasks.push(read_panel(&mut r)?);
                }
                Dataset::Panels(tasks)
            }
            1 => {
                let mut tasks = Vec::with_capacity(count);
                for _ in 0..count {
                    tasks.push(read_symbolic(&mut r)?);
                }
                Dataset::Symbolic(tasks)
            }
            other => {
                return Err(Error::MalformedFile {
                    path: path.into(),
                    message: format!("unknown task kind byte {other}"),
                })
            }
        };
        if !r.at_end() {
            return Err(Error::MalformedFile {
                path: path.into(),
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(dataset)
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated { path: self.path.into() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn write_panel(buf: &mut Vec<u8>, t: &PanelTask) {
    buf.push(match t.rule {
        RuleId::A => 0,
        RuleId::B => 1,
    });
    buf.extend_from_slice(&t.elements);
    for panel in &t.quadrant_glyphs {
        buf.extend_from_slice(panel);
    }
    for panel in &t.panels {
        for row in 0..PANEL_SIDE {
            let mut byte = 0u8;
            for col in 0..PANEL_SIDE {
                if panel[row * PANEL_SIDE + col] != 0 {
                    byte |= 0x80 >> col;
                }
            }
            buf.push(byte);
        }
    }
}

fn read_panel(r: &mut Reader) -> Result<PanelTask> {
    let rule = match r.take(1)?[0] {
        0 => RuleId::A,
        1 => RuleId::B,
        other => {
            return Err(Error::MalformedFile {
                path: r.path.into(),
                message: format!("unknown rule byte {other}"),
            })
        }
    };
    let mut elements = [0u8; PANELS_PER_TASK];
    elements.copy_from_slice(r.take(PANELS_PER_TASK)?);
    let mut quadrant_glyphs = [[0u8; QUADRANTS]; PANELS_PER_TASK];
    for panel in quadrant_glyphs.iter_mut() {
        panel.copy_from_slice(r.take(QUADRANTS)?);
    }
    let mut panels = [[0u8; PANEL_SIDE * PANEL_SIDE]; PANELS_PER_TASK];
    for panel in panels.iter_mut() {
        let packed = r.take(PANEL_SIDE)?;
        for (row, &byte) in packed.iter().enumerate() {
            for col in 0..PANEL_SIDE {
                panel[row * PANEL_SIDE + col] = (byte >> (7 - col)) & 1;
            }
        }
    }
    Ok(PanelTask { rule, elements, quadrant_glyphs, panels })
}

fn write_symbolic(buf: &mut Vec<u8>, t: &SymbolicTask) {
    buf.extend_from_slice(&t.combo.0);
    for s in 0..SEQUENCES {
        for step in 0..STEPS {
            buf.extend_from_slice(&t.grid[s][step]);
        }
    }
    buf.extend_from_slice(&t.target);
}

fn read_symbolic(r: &mut Reader) -> Result<SymbolicTask> {
    let mut combo = [0u8; FEATURES];
    combo.copy_from_slice(r.take(FEATURES)?);
    let mut grid = [[[0u8; FEATURES]; STEPS]; SEQUENCES];
    for s in 0..SEQUENCES {
        for step in 0..STEPS {
            grid[s][step].copy_from_slice(r.take(FEATURES)?);
        }
    }
    let mut target = [0u8; FEATURES];
    target.copy_from_slice(r.take(FEATURES)?);
    Ok(SymbolicTask { combo: RuleCombo(combo), grid, target })
}
