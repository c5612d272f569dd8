//! Bundled experiment configs.

use crate::{AppError, ExperimentConfig};

pub const TABLE51: &str = include_str!("../presets/table51.json");
pub const TABLE52: &str = include_str!("../presets/table52.json");
pub const TAIL: &str = include_str!("../presets/tail.json");
pub const GROWTH: &str = include_str!("../presets/growth.json");

/// Replications under `--paper-scale`.
pub const PAPER_SCALE_REPLICATIONS: u64 = 10_000_000;

pub fn names() -> &'static [&'static str] {
    &["table51", "table52", "tail", "growth"]
}

pub fn text(name: &str) -> Option<&'static str> {
    match name {
        "table51" | "table5.1" => Some(TABLE51),
        "table52" | "table5.2" => Some(TABLE52),
        "tail" => Some(TAIL),
        "growth" => Some(GROWTH),
        _ => None,
    }
}

pub fn load(name: &str) -> Result<ExperimentConfig, AppError> {
    let text = text(name).ok_or_else(|| AppError::Schema(format!("unknown preset {name}")))?;
    ExperimentConfig::parse(text, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for n in names() {
            load(n).unwrap();
        }
        assert!(load("table5.3").is_err());
    }
}
