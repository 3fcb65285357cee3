//! Tasks, goal checking, and the curriculum file format.
//!
//! Curriculum files are line-oriented: `task NAME budget=N goal: cond (, cond)*`
//! with conditions in the skill language's condition syntax. Tasks load in
//! file order; nothing is sorted.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{eval_condition, parse_condition, Bindings, ConditionSet};

use super::state::WorldState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub goal: ConditionSet,
    pub iteration_budget: u32,
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("curriculum {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("curriculum line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("curriculum is empty")]
    Empty,
}

/// True iff every goal atom holds in the state.
pub fn check_goal(task: &Task, state: &WorldState) -> bool {
    let env = Bindings::new();
    task.goal
        .iter()
        .all(|atom| eval_condition(atom, &env, state).unwrap_or(false))
}

pub fn load_curriculum(path: &Path) -> Result<Vec<Task>, TaskError> {
    let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_curriculum(&text)
}

pub fn parse_curriculum(source: &str) -> Result<Vec<Task>, TaskError> {
    let mut tasks = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| TaskError::Parse {
            line: i + 1,
            message,
        };
        let rest = line
            .strip_prefix("task ")
            .ok_or_else(|| err("expected `task NAME budget=N goal: ...`".into()))?;
        let (head, goals) = rest
            .split_once("goal:")
            .ok_or_else(|| err("missing `goal:`".into()))?;
        let mut words = head.split_whitespace();
        let name = words
            .next()
            .ok_or_else(|| err("missing task name".into()))?
            .to_string();
        let budget_word = words
            .next()
            .ok_or_else(|| err("missing `budget=N`".into()))?;
        let budget: u32 = budget_word
            .strip_prefix("budget=")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| err(format!("bad budget `{budget_word}`")))?;
        if budget < 1 {
            return Err(err("budget must be >= 1".into()));
        }
        let mut atoms = Vec::new();
        for piece in goals.split(',') {
            let piece = piece.trim();
            if piece.is_empty() {
                continue;
            }
            let cond = parse_condition(piece).map_err(|e| err(e.to_string()))?;
            atoms.push(cond);
        }
        if atoms.is_empty() {
            return Err(err("goal must have at least one condition".into()));
        }
        tasks.push(Task {
            name,
            goal: ConditionSet::new(atoms),
            iteration_budget: budget,
        });
    }
    if tasks.is_empty() {
        return Err(TaskError::Empty);
    }
    Ok(tasks)
}

/// The bundled nine-task curriculum.
pub fn bundled_curriculum() -> Vec<Task> {
    parse_curriculum(super::BUNDLED_CURRICULUM).expect("bundled curriculum parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Condition;
    use crate::world::{reset_world, RecipeTable};

    #[test]
    fn bundled_curriculum_has_nine_tasks_ending_in_iron_pickaxe() {
        let tasks = bundled_curriculum();
        assert_eq!(tasks.len(), 9);
        assert_eq!(tasks[0].name, "mine_wood");
        assert_eq!(tasks[8].name, "craft_iron_pickaxe");
        assert!(tasks[8]
            .goal
            .iter()
            .any(|c| matches!(c, Condition::InventoryAtLeast { item, .. }
                if crate::dsl::print_expr(item) == "iron_pickaxe")));
    }

    #[test]
    fn empty_curriculum_is_an_error() {
        assert!(matches!(parse_curriculum("\n# nothing\n"), Err(TaskError::Empty)));
    }

    #[test]
    fn file_order_is_preserved() {
        let text = "task b budget=2 goal: inv(plank) >= 1\ntask a budget=2 goal: inv(plank) >= 1\n";
        let tasks = parse_curriculum(text).unwrap();
        assert_eq!(tasks[0].name, "b");
        assert_eq!(tasks[1].name, "a");
    }

    #[test]
    fn goal_checks_inventory_and_stations() {
        let t = RecipeTable::bundled();
        let mut w = reset_world(0, &t);
        let task = Task {
            name: "x".into(),
            goal: ConditionSet::new(vec![Condition::inv("oak_log", 1)]),
            iteration_budget: 1,
        };
        assert!(!check_goal(&task, &w));
        w.inventory.insert("oak_log".into(), 2);
        assert!(check_goal(&task, &w));

        let station_task = Task {
            name: "y".into(),
            goal: ConditionSet::new(vec![Condition::station("crafting_table")]),
            iteration_budget: 1,
        };
        assert!(!check_goal(&station_task, &w));
        w.stations.insert("crafting_table".into());
        assert!(check_goal(&station_task, &w));
    }
}
