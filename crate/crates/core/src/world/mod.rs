//! The MiniCraft simulator: a deterministic, fully observable crafting world.
//!
//! The tech tree mirrors the usual wood → stone → iron progression; quantities
//! follow Minecraft conventions (1 log → 4 planks, 2 planks → 4 sticks,
//! pickaxes take 3 material + 2 sticks at a table, a furnace takes 8
//! cobblestone, smelting one ingot takes one ore and one fuel). Everything is
//! a pure function of (state, action), so episodes replay exactly.

mod fault;
mod recipes;
mod state;
mod task;

pub use fault::{builtin_corpus, curriculum_faults, inject_fault, FaultClass, FaultFixture, FaultSpec, Perturbation};
pub use recipes::{
    parse_recipes, parse_recipes_file, GatherSpec, Recipe, RecipeKind, RecipeTable,
    RecipeTableError,
};
pub use state::{
    reset_world, step_primitive, PrimitiveFeedback, WorldError, WorldState, INVENTORY_SLOTS,
    STACK_SIZE,
};
pub use task::{bundled_curriculum, check_goal, load_curriculum, parse_curriculum, Task, TaskError};

/// Bundled recipe table source.
pub const BUNDLED_RECIPES: &str = include_str!("../../data/recipes.txt");
/// Bundled nine-task curriculum source.
pub const BUNDLED_CURRICULUM: &str = include_str!("../../data/curriculum.txt");
/// Bundled seed skill library source.
pub const BUNDLED_SEED_SKILLS: &str = include_str!("../../data/seed_skills.psn");
