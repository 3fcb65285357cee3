//! Recipe table: gatherables, craft/smelt recipes, stations, tool tiers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{ParamKind, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeKind {
    Craft,
    Smelt,
}

/// One recipe, keyed by its output item. `count` is the yield of a single
/// batch; `inputs` are consumed per batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub kind: RecipeKind,
    pub output: String,
    pub count: i64,
    pub inputs: BTreeMap<String, i64>,
    pub station: Option<String>,
    pub tool_tier_required: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatherSpec {
    pub item: String,
    pub tool_tier: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipeTable {
    pub gather: BTreeMap<String, GatherSpec>,
    pub recipes: BTreeMap<String, Recipe>,
    pub stations: BTreeMap<String, String>,
    pub tool_tiers: BTreeMap<String, i64>,
    /// Items declared without any recipe or source.
    pub extra_items: Vec<String>,
}

#[derive(Debug, Error)]
pub enum RecipeTableError {
    #[error("recipe file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty recipe table")]
    Empty,
}

impl RecipeTable {
    pub fn bundled() -> Self {
        parse_recipes(super::BUNDLED_RECIPES).expect("bundled recipe table parses")
    }

    /// All item kinds the table mentions.
    pub fn item_kinds(&self) -> Vec<String> {
        let mut items: Vec<String> = self.gather.keys().cloned().collect();
        for recipe in self.recipes.values() {
            items.push(recipe.output.clone());
            items.extend(recipe.inputs.keys().cloned());
        }
        items.extend(self.stations.keys().cloned());
        items.extend(self.extra_items.iter().cloned());
        items.sort();
        items.dedup();
        items
    }

    pub fn station_kinds(&self) -> Vec<String> {
        self.stations.values().cloned().collect()
    }

    /// Tool tier granted by holding an item (0 when the item is no tool).
    pub fn tier_of(&self, item: &str) -> i64 {
        self.tool_tiers.get(item).copied().unwrap_or(0)
    }

    /// The vocabulary for validating skills against this world: the five
    /// primitives plus every known kind.
    pub fn vocabulary(&self) -> Vocabulary {
        let mut vocab = Vocabulary::default();
        vocab
            .primitives
            .insert("gather".into(), vec![ParamKind::Item, ParamKind::Int]);
        vocab
            .primitives
            .insert("craft".into(), vec![ParamKind::Item, ParamKind::Int]);
        vocab
            .primitives
            .insert("smelt".into(), vec![ParamKind::Item, ParamKind::Int]);
        vocab
            .primitives
            .insert("place".into(), vec![ParamKind::Station]);
        vocab.primitives.insert("explore".into(), vec![]);
        vocab.items = self.item_kinds().into_iter().collect();
        vocab.stations = self.station_kinds().into_iter().collect();
        vocab
    }
}

/// Loads a recipe table from a file (the CLI override path).
pub fn parse_recipes_file(path: &std::path::Path) -> Result<RecipeTable, RecipeTableError> {
    let text = std::fs::read_to_string(path).map_err(|e| RecipeTableError::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    parse_recipes(&text)
}

pub fn parse_recipes(source: &str) -> Result<RecipeTable, RecipeTableError> {
    let mut table = RecipeTable::default();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| RecipeTableError::Parse {
            line: i + 1,
            message,
        };
        let mut words = line.split_whitespace();
        match words.next() {
            Some("gather") => {
                let item = words.next().ok_or_else(|| err("missing item".into()))?;
                expect_word(&mut words, "tier").map_err(&err)?;
                let tier: i64 = parse_next(&mut words).map_err(&err)?;
                table.gather.insert(
                    item.to_string(),
                    GatherSpec {
                        item: item.to_string(),
                        tool_tier: tier,
                    },
                );
            }
            Some(kw @ ("craft" | "smelt")) => {
                let rest = line[kw.len()..].trim();
                let (head, tail) = rest
                    .split_once("<-")
                    .ok_or_else(|| err("missing `<-`".into()))?;
                let (output, count) = parse_counted(head.trim()).map_err(&err)?;
                let (inputs_part, station) = match tail.split_once('@') {
                    Some((ins, st)) => (ins.trim(), Some(st.trim().to_string())),
                    None => (tail.trim(), None),
                };
                let mut inputs = BTreeMap::new();
                for piece in inputs_part.split(',') {
                    let (item, n) = parse_counted(piece.trim()).map_err(&err)?;
                    inputs.insert(item, n);
                }
                if inputs.is_empty() {
                    return Err(err("recipe needs at least one input".into()));
                }
                let kind = if kw == "craft" {
                    RecipeKind::Craft
                } else {
                    RecipeKind::Smelt
                };
                table.recipes.insert(
                    output.clone(),
                    Recipe {
                        kind,
                        output,
                        count,
                        inputs,
                        station,
                        tool_tier_required: 0,
                    },
                );
            }
            Some("station") => {
                let item = words.next().ok_or_else(|| err("missing item".into()))?;
                table.stations.insert(item.to_string(), item.to_string());
            }
            Some("tool") => {
                let item = words.next().ok_or_else(|| err("missing item".into()))?;
                expect_word(&mut words, "tier").map_err(&err)?;
                let tier: i64 = parse_next(&mut words).map_err(&err)?;
                table.tool_tiers.insert(item.to_string(), tier);
            }
            Some("item") => {
                let item = words.next().ok_or_else(|| err("missing item".into()))?;
                table.extra_items.push(item.to_string());
            }
            Some(other) => return Err(err(format!("unknown directive `{other}`"))),
            None => unreachable!(),
        }
    }
    if table.gather.is_empty() && table.recipes.is_empty() {
        return Err(RecipeTableError::Empty);
    }
    Ok(table)
}

fn expect_word(words: &mut std::str::SplitWhitespace<'_>, want: &str) -> Result<(), String> {
    match words.next() {
        Some(w) if w == want => Ok(()),
        other => Err(format!("expected `{want}`, found {other:?}")),
    }
}

fn parse_next<T: std::str::FromStr>(words: &mut std::str::SplitWhitespace<'_>) -> Result<T, String> {
    words
        .next()
        .ok_or_else(|| "missing value".to_string())?
        .parse()
        .map_err(|_| "bad number".to_string())
}

/// "plank x4" -> ("plank", 4)
fn parse_counted(text: &str) -> Result<(String, i64), String> {
    let mut parts = text.split_whitespace();
    let item = parts.next().ok_or("missing item")?.to_string();
    let count = match parts.next() {
        Some(c) if c.starts_with('x') => c[1..].parse().map_err(|_| "bad count")?,
        Some(other) => return Err(format!("expected `xN`, found `{other}`")),
        None => 1,
    };
    if count < 1 {
        return Err("count must be >= 1".into());
    }
    Ok((item, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_parses_and_matches_conventions() {
        let t = RecipeTable::bundled();
        let plank = &t.recipes["plank"];
        assert_eq!(plank.count, 4);
        assert_eq!(plank.inputs["oak_log"], 1);
        let stick = &t.recipes["stick"];
        assert_eq!(stick.count, 4);
        assert_eq!(stick.inputs["plank"], 2);
        let pick = &t.recipes["wooden_pickaxe"];
        assert_eq!(pick.inputs["plank"], 3);
        assert_eq!(pick.inputs["stick"], 2);
        assert_eq!(pick.station.as_deref(), Some("crafting_table"));
        let furnace = &t.recipes["furnace"];
        assert_eq!(furnace.inputs["cobblestone"], 8);
        let ingot = &t.recipes["iron_ingot"];
        assert_eq!(ingot.kind, RecipeKind::Smelt);
        assert_eq!(ingot.inputs["iron_ore"], 1);
        assert_eq!(ingot.inputs["coal"], 1);
        assert_eq!(t.tier_of("stone_pickaxe"), 2);
        assert!(t.gather["iron_ore"].tool_tier == 2);
    }

    #[test]
    fn directive_errors_carry_line_numbers() {
        let e = parse_recipes("gather oak_log tier 0\nbogus line here\n").unwrap_err();
        match e {
            RecipeTableError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected: {other}"),
        }
    }
}
