//! World state and primitive semantics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{StateQuery, Value};
use crate::rng::mix2;

use super::recipes::{RecipeKind, RecipeTable};

/// Inventory holds at most this many stacks.
pub const INVENTORY_SLOTS: i64 = 36;
/// One stack holds at most this many units.
pub const STACK_SIZE: i64 = 64;

/// Fully observable symbolic world state. A value: stepping returns a new
/// state and never mutates the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub inventory: BTreeMap<String, i64>,
    pub stations: BTreeSet<String>,
    pub field: BTreeMap<String, i64>,
    pub tool_tier: i64,
    pub tick: u64,
}

impl WorldState {
    pub fn count(&self, item: &str) -> i64 {
        self.inventory.get(item).copied().unwrap_or(0)
    }

    /// Stacks currently occupied.
    pub fn slots_used(&self) -> i64 {
        self.inventory
            .values()
            .map(|&n| (n + STACK_SIZE - 1) / STACK_SIZE)
            .sum()
    }

    /// How many more units of `item` fit without exceeding the slot cap.
    pub fn capacity_for(&self, item: &str) -> i64 {
        let have = self.count(item);
        let free_slots = INVENTORY_SLOTS - self.slots_used();
        let headroom = (have + STACK_SIZE - 1) / STACK_SIZE * STACK_SIZE - have;
        headroom + free_slots.max(0) * STACK_SIZE
    }

    fn add_item(&mut self, item: &str, n: i64) {
        if n != 0 {
            *self.inventory.entry(item.to_string()).or_insert(0) += n;
            if self.inventory[item] == 0 {
                self.inventory.remove(item);
            }
        }
    }

    fn refresh_tool_tier(&mut self, recipes: &RecipeTable) {
        for (item, &tier) in &recipes.tool_tiers {
            if self.count(item) > 0 && tier > self.tool_tier {
                self.tool_tier = tier;
            }
        }
    }
}

impl StateQuery for WorldState {
    fn item_count(&self, item: &str) -> i64 {
        self.count(item)
    }

    fn has_station(&self, station: &str) -> bool {
        self.stations.contains(station)
    }

    fn tool_tier(&self) -> i64 {
        self.tool_tier
    }

    fn capacity_for(&self, item: &str) -> i64 {
        WorldState::capacity_for(self, item)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),
    #[error("malformed arguments for `{primitive}`: {message}")]
    BadArgs { primitive: String, message: String },
}

/// Structured outcome of one primitive step. `Display` renders the feedback
/// strings the optimizer pattern-matches on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PrimitiveFeedback {
    Ok,
    InsufficientItem {
        item: String,
        need: i64,
        have: i64,
    },
    MissingStation {
        station: String,
    },
    ToolTierTooLow {
        required: i64,
        current: i64,
    },
    FieldDepleted {
        item: String,
        need: i64,
        have: i64,
    },
    DestinationFull {
        item: String,
        slots_needed: i64,
        slots_free: i64,
    },
    NotGatherable {
        item: String,
    },
    NoRecipe {
        item: String,
    },
    WrongRecipeKind {
        item: String,
        expected: String,
    },
    NotAStation {
        item: String,
    },
    AlreadyPlaced {
        station: String,
    },
    NonPositiveCount {
        count: i64,
    },
}

impl PrimitiveFeedback {
    pub fn is_ok(&self) -> bool {
        matches!(self, PrimitiveFeedback::Ok)
    }
}

impl std::fmt::Display for PrimitiveFeedback {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PrimitiveFeedback::Ok => write!(f, "ok"),
            PrimitiveFeedback::InsufficientItem { item, need, have } => {
                write!(f, "insufficient {item}: need {need} have {have}")
            }
            PrimitiveFeedback::MissingStation { station } => {
                write!(f, "requires {station}")
            }
            PrimitiveFeedback::ToolTierTooLow { required, current } => {
                write!(f, "requires tool tier {required}, current tier is {current}")
            }
            PrimitiveFeedback::FieldDepleted { item, need, have } => {
                write!(f, "field depleted: {item} need {need} have {have}")
            }
            PrimitiveFeedback::DestinationFull {
                item,
                slots_needed,
                slots_free,
            } => write!(
                f,
                "destination full: {item} needs {slots_needed} slots, {slots_free} free"
            ),
            PrimitiveFeedback::NotGatherable { item } => write!(f, "{item} cannot be gathered"),
            PrimitiveFeedback::NoRecipe { item } => write!(f, "no recipe for {item}"),
            PrimitiveFeedback::WrongRecipeKind { item, expected } => {
                write!(f, "{item} is produced by `{expected}`, not this primitive")
            }
            PrimitiveFeedback::NotAStation { item } => write!(f, "{item} is not placeable"),
            PrimitiveFeedback::AlreadyPlaced { station } => {
                write!(f, "{station} is already placed")
            }
            PrimitiveFeedback::NonPositiveCount { count } => {
                write!(f, "count must be positive, got {count}")
            }
        }
    }
}

/// Deterministic initial state. The field is stocked per resource with
/// 64..=127 units derived from the seed, so different seeds differ while
/// every resource stays plentiful.
pub fn reset_world(seed: u64, recipes: &RecipeTable) -> WorldState {
    let mut field = BTreeMap::new();
    for item in recipes.gather.keys() {
        let qty = 64 + (mix2(seed, crate::rng::tag(item)) % 64) as i64;
        field.insert(item.clone(), qty);
    }
    WorldState {
        inventory: BTreeMap::new(),
        stations: BTreeSet::new(),
        field,
        tool_tier: 0,
        tick: 0,
    }
}

/// Applies one primitive. On failure the returned state differs from the
/// input only in `tick`. Unknown primitives and malformed argument lists are
/// errors, not failures: they indicate a broken caller, not a world refusal.
pub fn step_primitive(
    state: &WorldState,
    name: &str,
    args: &[Value],
    recipes: &RecipeTable,
) -> Result<(WorldState, PrimitiveFeedback, bool), WorldError> {
    let mut next = state.clone();
    next.tick += 1;

    let feedback = match name {
        "gather" => {
            let (item, count) = item_count_args(name, args)?;
            gather(&mut next, &item, count, recipes)
        }
        "craft" => {
            let (item, count) = item_count_args(name, args)?;
            produce(&mut next, &item, count, RecipeKind::Craft, recipes)
        }
        "smelt" => {
            let (item, count) = item_count_args(name, args)?;
            produce(&mut next, &item, count, RecipeKind::Smelt, recipes)
        }
        "place" => {
            let station = kind_arg(name, args, 0, 1)?;
            place(&mut next, &station, recipes)
        }
        "explore" => {
            if !args.is_empty() {
                return Err(WorldError::BadArgs {
                    primitive: name.into(),
                    message: format!("expected 0 args, got {}", args.len()),
                });
            }
            // surveys the field; changes nothing
            PrimitiveFeedback::Ok
        }
        other => return Err(WorldError::UnknownPrimitive(other.to_string())),
    };

    if feedback.is_ok() {
        Ok((next, feedback, true))
    } else {
        let mut unchanged = state.clone();
        unchanged.tick = next.tick;
        Ok((unchanged, feedback, false))
    }
}

fn item_count_args(name: &str, args: &[Value]) -> Result<(String, i64), WorldError> {
    if args.len() != 2 {
        return Err(WorldError::BadArgs {
            primitive: name.into(),
            message: format!("expected (item, count), got {} args", args.len()),
        });
    }
    let item = args[0].as_kind().ok_or_else(|| WorldError::BadArgs {
        primitive: name.into(),
        message: "first argument must be an item kind".into(),
    })?;
    let count = args[1].as_int().ok_or_else(|| WorldError::BadArgs {
        primitive: name.into(),
        message: "second argument must be an integer".into(),
    })?;
    Ok((item.to_string(), count))
}

fn kind_arg(name: &str, args: &[Value], index: usize, want_len: usize) -> Result<String, WorldError> {
    if args.len() != want_len {
        return Err(WorldError::BadArgs {
            primitive: name.into(),
            message: format!("expected {want_len} args, got {}", args.len()),
        });
    }
    args[index]
        .as_kind()
        .map(str::to_string)
        .ok_or_else(|| WorldError::BadArgs {
            primitive: name.into(),
            message: "argument must be a kind".into(),
        })
}

fn gather(state: &mut WorldState, item: &str, count: i64, recipes: &RecipeTable) -> PrimitiveFeedback {
    if count <= 0 {
        return PrimitiveFeedback::NonPositiveCount { count };
    }
    let Some(spec) = recipes.gather.get(item) else {
        return PrimitiveFeedback::NotGatherable { item: item.into() };
    };
    if state.tool_tier < spec.tool_tier {
        return PrimitiveFeedback::ToolTierTooLow {
            required: spec.tool_tier,
            current: state.tool_tier,
        };
    }
    let stock = state.field.get(item).copied().unwrap_or(0);
    if stock < count {
        return PrimitiveFeedback::FieldDepleted {
            item: item.into(),
            need: count,
            have: stock,
        };
    }
    if let Some(fb) = check_capacity(state, item, count) {
        return fb;
    }
    *state.field.get_mut(item).expect("stock checked") -= count;
    state.add_item(item, count);
    state.refresh_tool_tier(recipes);
    PrimitiveFeedback::Ok
}

/// Craft or smelt `batches` batches of the recipe for `item`.
fn produce(
    state: &mut WorldState,
    item: &str,
    batches: i64,
    kind: RecipeKind,
    recipes: &RecipeTable,
) -> PrimitiveFeedback {
    if batches <= 0 {
        return PrimitiveFeedback::NonPositiveCount { count: batches };
    }
    let Some(recipe) = recipes.recipes.get(item) else {
        return PrimitiveFeedback::NoRecipe { item: item.into() };
    };
    if recipe.kind != kind {
        return PrimitiveFeedback::WrongRecipeKind {
            item: item.into(),
            expected: match recipe.kind {
                RecipeKind::Craft => "craft".into(),
                RecipeKind::Smelt => "smelt".into(),
            },
        };
    }
    if let Some(station) = &recipe.station {
        if !state.stations.contains(station) {
            return PrimitiveFeedback::MissingStation {
                station: station.clone(),
            };
        }
    }
    if state.tool_tier < recipe.tool_tier_required {
        return PrimitiveFeedback::ToolTierTooLow {
            required: recipe.tool_tier_required,
            current: state.tool_tier,
        };
    }
    for (input, &per_batch) in &recipe.inputs {
        let need = per_batch * batches;
        let have = state.count(input);
        if have < need {
            return PrimitiveFeedback::InsufficientItem {
                item: input.clone(),
                need,
                have,
            };
        }
    }
    // capacity check on the post-consumption inventory
    let mut trial = state.clone();
    for (input, &per_batch) in &recipe.inputs {
        trial.add_item(input, -(per_batch * batches));
    }
    if let Some(fb) = check_capacity(&trial, item, recipe.count * batches) {
        return fb;
    }
    *state = trial;
    state.add_item(item, recipe.count * batches);
    state.refresh_tool_tier(recipes);
    PrimitiveFeedback::Ok
}

fn place(state: &mut WorldState, station: &str, recipes: &RecipeTable) -> PrimitiveFeedback {
    let Some(kind) = recipes.stations.get(station) else {
        return PrimitiveFeedback::NotAStation {
            item: station.into(),
        };
    };
    if state.stations.contains(kind) {
        return PrimitiveFeedback::AlreadyPlaced {
            station: kind.clone(),
        };
    }
    let have = state.count(station);
    if have < 1 {
        return PrimitiveFeedback::InsufficientItem {
            item: station.into(),
            need: 1,
            have,
        };
    }
    state.add_item(station, -1);
    state.stations.insert(kind.clone());
    PrimitiveFeedback::Ok
}

fn check_capacity(state: &WorldState, item: &str, add: i64) -> Option<PrimitiveFeedback> {
    let mut trial = state.clone();
    trial.add_item(item, add);
    if trial.slots_used() > INVENTORY_SLOTS {
        let have = state.count(item);
        let extra_slots =
            (have + add + STACK_SIZE - 1) / STACK_SIZE - (have + STACK_SIZE - 1) / STACK_SIZE;
        Some(PrimitiveFeedback::DestinationFull {
            item: item.into(),
            slots_needed: extra_slots,
            slots_free: INVENTORY_SLOTS - state.slots_used(),
        })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> RecipeTable {
        RecipeTable::bundled()
    }

    #[test]
    fn reset_is_deterministic_and_seed_sensitive() {
        let t = table();
        let a = reset_world(0, &t);
        let b = reset_world(0, &t);
        assert_eq!(a, b);
        assert!(a.inventory.is_empty());
        assert_eq!(a.tool_tier, 0);
        assert!(a.field.values().all(|&q| q >= 64));
        let c = reset_world(1, &t);
        assert_ne!(a.field, c.field);
    }

    #[test]
    fn gather_moves_stock_into_inventory() {
        let t = table();
        let w = reset_world(0, &t);
        let (w2, fb, ok) =
            step_primitive(&w, "gather", &[Value::Kind("oak_log".into()), Value::Int(1)], &t)
                .unwrap();
        assert!(ok, "{fb}");
        assert_eq!(w2.count("oak_log"), 1);
        assert_eq!(w2.field["oak_log"], w.field["oak_log"] - 1);
        assert_eq!(w2.tick, w.tick + 1);
    }

    #[test]
    fn craft_without_inputs_reports_exact_shortfall() {
        let t = table();
        let mut w = reset_world(0, &t);
        w.stations.insert("crafting_table".into());
        let (w2, fb, ok) = step_primitive(
            &w,
            "craft",
            &[Value::Kind("wooden_pickaxe".into()), Value::Int(1)],
            &t,
        )
        .unwrap();
        assert!(!ok);
        assert_eq!(fb.to_string(), "insufficient plank: need 3 have 0");
        // failure changes only the tick
        let mut expect = w.clone();
        expect.tick += 1;
        assert_eq!(w2, expect);
    }

    #[test]
    fn gather_iron_at_tier_zero_names_the_tier() {
        let t = table();
        let w = reset_world(0, &t);
        let (_, fb, ok) = step_primitive(
            &w,
            "gather",
            &[Value::Kind("iron_ore".into()), Value::Int(1)],
            &t,
        )
        .unwrap();
        assert!(!ok);
        assert_eq!(
            fb,
            PrimitiveFeedback::ToolTierTooLow {
                required: 2,
                current: 0
            }
        );
    }

    #[test]
    fn crafting_consumes_exactly_recipe_inputs() {
        let t = table();
        let mut w = reset_world(0, &t);
        w.inventory.insert("oak_log".into(), 3);
        let (w2, _, ok) =
            step_primitive(&w, "craft", &[Value::Kind("plank".into()), Value::Int(2)], &t)
                .unwrap();
        assert!(ok);
        assert_eq!(w2.count("oak_log"), 1);
        assert_eq!(w2.count("plank"), 8);
    }

    #[test]
    fn place_requires_item_and_rejects_double_placement() {
        let t = table();
        let mut w = reset_world(0, &t);
        w.inventory.insert("crafting_table".into(), 2);
        let (w2, _, ok) =
            step_primitive(&w, "place", &[Value::Kind("crafting_table".into())], &t).unwrap();
        assert!(ok);
        assert!(w2.stations.contains("crafting_table"));
        assert_eq!(w2.count("crafting_table"), 1);
        let (_, fb, ok) =
            step_primitive(&w2, "place", &[Value::Kind("crafting_table".into())], &t).unwrap();
        assert!(!ok);
        assert_eq!(
            fb,
            PrimitiveFeedback::AlreadyPlaced {
                station: "crafting_table".into()
            }
        );
    }

    #[test]
    fn capacity_limit_yields_destination_full() {
        let t = table();
        let mut w = reset_world(0, &t);
        // 35 slots of cobblestone, one slot short of the cap
        w.inventory.insert("cobblestone".into(), 35 * STACK_SIZE);
        w.field.insert("oak_log".into(), 500);
        let (_, fb, ok) = step_primitive(
            &w,
            "gather",
            &[Value::Kind("oak_log".into()), Value::Int(100)],
            &t,
        )
        .unwrap();
        assert!(!ok);
        assert!(matches!(fb, PrimitiveFeedback::DestinationFull { .. }), "{fb}");
        // exactly one stack still fits
        let (w2, _, ok) = step_primitive(
            &w,
            "gather",
            &[Value::Kind("oak_log".into()), Value::Int(64)],
            &t,
        )
        .unwrap();
        assert!(ok);
        assert_eq!(w2.slots_used(), INVENTORY_SLOTS);
    }

    #[test]
    fn unknown_primitive_is_an_error() {
        let t = table();
        let w = reset_world(0, &t);
        assert!(matches!(
            step_primitive(&w, "teleport", &[], &t),
            Err(WorldError::UnknownPrimitive(_))
        ));
    }

    #[test]
    fn crafting_a_pickaxe_raises_the_tool_tier() {
        let t = table();
        let mut w = reset_world(0, &t);
        w.inventory.insert("plank".into(), 3);
        w.inventory.insert("stick".into(), 2);
        w.stations.insert("crafting_table".into());
        let (w2, fb, ok) = step_primitive(
            &w,
            "craft",
            &[Value::Kind("wooden_pickaxe".into()), Value::Int(1)],
            &t,
        )
        .unwrap();
        assert!(ok, "{fb}");
        assert_eq!(w2.tool_tier, 1);
    }
}
