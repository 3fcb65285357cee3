//! Fault injection: seeding behaviorally wrong (but well-formed) skills.
//!
//! Six fault classes cover the failure taxonomy the optimizer repairs:
//! resource miscalculation, missing preconditions, boundary conditions
//! (inventory capacity), unsafe fallbacks that swallow failures, wrong
//! calls, and cross-skill contract drift. The built-in corpus carries two
//! fixtures per class, each with the initial world that exposes the fault
//! and a bound argument list for the run loop.

use rand::rngs::StdRng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{
    apply_edit, AstPath, Bindings, CallTarget, Condition, Edit, Expr, SkillProgram,
    Statement, Value,
};

use super::recipes::RecipeTable;
use super::state::{reset_world, WorldState, STACK_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultClass {
    ResourceMiscalculation,
    MissingPrecondition,
    BoundaryCondition,
    UnsafeFallback,
    WrongCall,
    CrossSkillContract,
}

/// How a skill gets broken. The target (path or condition index) rides in
/// the variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Add `delta` to the integer literal at an expression slot. A zero
    /// delta means "pick a small nonzero delta from the rng".
    ConstantDelta { path: AstPath, delta: i64 },
    /// Swap a call statement for a different callee/arguments.
    ReplaceCall {
        path: AstPath,
        callee: CallTarget,
        args: Vec<Expr>,
    },
    /// Drop a precondition atom by canonical index.
    RemovePrecondition { index: usize },
    /// The Appendix-style combo: drop a precondition atom and the ensure
    /// statement that maintained it.
    RemovePreconditionAndStatement { index: usize, path: AstPath },
    /// Add `delta` to the first integer literal inside a precondition atom.
    PreCountDelta { index: usize, delta: i64 },
    /// Add `delta` to the first integer literal inside a postcondition atom.
    PostCountDelta { index: usize, delta: i64 },
    /// Wrap the statement at `path` in `if (cond) { stmt } else { fallback }`.
    WrapFallback {
        path: AstPath,
        cond: Condition,
        fallback: Vec<Statement>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub class: FaultClass,
    pub skill: String,
    pub perturbation: Perturbation,
}

#[derive(Debug, Error)]
pub enum FaultError {
    #[error("fault targets skill `{0}` which is absent")]
    NoSuchSkill(String),
    #[error("fault target invalid: {0}")]
    BadTarget(String),
}

/// Applies one fault. The input program is untouched; the caller keeps it as
/// the inverse record for convergence checks.
pub fn inject_fault(
    program: &SkillProgram,
    fault: &FaultSpec,
    rng: &mut StdRng,
) -> Result<SkillProgram, FaultError> {
    let bad = |m: String| FaultError::BadTarget(m);
    match &fault.perturbation {
        Perturbation::ConstantDelta { path, delta } => {
            let delta = if *delta == 0 {
                // small nonzero perturbation
                let d = rng.random_range(1..=3i64);
                if rng.random_bool(0.5) {
                    d
                } else {
                    -d
                }
            } else {
                *delta
            };
            let current = literal_at(program, path)
                .ok_or_else(|| bad(format!("no literal at {path}")))?;
            apply_edit(
                program,
                &Edit::SetConstant {
                    path: path.clone(),
                    value: current + delta,
                },
            )
            .map_err(|e| bad(e.to_string()))
        }
        Perturbation::ReplaceCall { path, callee, args } => apply_edit(
            program,
            &Edit::ReplaceCall {
                path: path.clone(),
                callee: callee.clone(),
                args: args.clone(),
            },
        )
        .map_err(|e| bad(e.to_string())),
        Perturbation::RemovePrecondition { index } => {
            let mut p = program.clone();
            p.pre
                .remove(*index)
                .ok_or_else(|| bad(format!("no precondition atom {index}")))?;
            Ok(p)
        }
        Perturbation::RemovePreconditionAndStatement { index, path } => {
            let mut p = program.clone();
            p.pre
                .remove(*index)
                .ok_or_else(|| bad(format!("no precondition atom {index}")))?;
            apply_edit(&p, &Edit::RemoveStatement { path: path.clone() })
                .map_err(|e| bad(e.to_string()))
        }
        Perturbation::PreCountDelta { index, delta } => {
            let mut p = program.clone();
            let atom = p
                .pre
                .remove(*index)
                .ok_or_else(|| bad(format!("no precondition atom {index}")))?;
            let atom = bump_condition_literal(atom, *delta)
                .ok_or_else(|| bad("precondition atom has no integer literal".into()))?;
            p.pre.insert(atom);
            Ok(p)
        }
        Perturbation::PostCountDelta { index, delta } => {
            let mut p = program.clone();
            let atom = p
                .post
                .remove(*index)
                .ok_or_else(|| bad(format!("no postcondition atom {index}")))?;
            let atom = bump_condition_literal(atom, *delta)
                .ok_or_else(|| bad("postcondition atom has no integer literal".into()))?;
            p.post.insert(atom);
            Ok(p)
        }
        Perturbation::WrapFallback {
            path,
            cond,
            fallback,
        } => {
            let removed = apply_edit(program, &Edit::RemoveStatement { path: path.clone() })
                .map_err(|e| bad(e.to_string()))?;
            let original = statement_at(program, path)
                .ok_or_else(|| bad(format!("no statement at {path}")))?;
            let wrapped = Statement::If {
                cond: cond.clone(),
                then_body: vec![original],
                else_body: fallback.clone(),
            };
            apply_edit(
                &removed,
                &Edit::InsertStatement {
                    path: path.clone(),
                    stmt: wrapped,
                },
            )
            .map_err(|e| bad(e.to_string()))
        }
    }
}

fn literal_at(program: &SkillProgram, path: &AstPath) -> Option<i64> {
    crate::dsl::literal_at(&program.body, path)
}

fn statement_at(program: &SkillProgram, path: &AstPath) -> Option<Statement> {
    crate::dsl::statement_at(&program.body, path).cloned()
}

fn bump_condition_literal(cond: Condition, delta: i64) -> Option<Condition> {
    fn bump_expr(e: &mut Expr, delta: i64) -> bool {
        match e {
            Expr::Int(n) => {
                *n += delta;
                true
            }
            Expr::Ident(_) => false,
            Expr::Binary { lhs, rhs, .. } | Expr::Min(lhs, rhs) => {
                bump_expr(lhs, delta) || bump_expr(rhs, delta)
            }
            Expr::Capacity(_) => false,
        }
    }
    match cond {
        Condition::InventoryAtLeast { item, mut count } => {
            bump_expr(&mut count, delta).then_some(Condition::InventoryAtLeast { item, count })
        }
        Condition::ToolTierAtLeast { tier } => Some(Condition::ToolTierAtLeast {
            tier: tier + delta,
        }),
        Condition::StationPlaced { .. } => None,
        Condition::ParamCompare { lhs, rel, mut rhs } => {
            bump_expr(&mut rhs, delta).then_some(Condition::ParamCompare { lhs, rel, rhs })
        }
    }
}

/// One repair-convergence fixture: a faulted skill, the bindings to run it
/// with, and the world that exposes the fault.
#[derive(Clone)]
pub struct FaultFixture {
    pub name: &'static str,
    pub spec: FaultSpec,
    /// Extra fixture-only skill sources to load alongside the seed library.
    pub extra_skills: &'static [&'static str],
    pub bindings: Vec<(&'static str, Value)>,
    pub prepare_world: fn(&RecipeTable) -> WorldState,
    /// Episodes the repair loop may take; the acceptance bound is 5.
    pub max_episodes: u32,
}

impl FaultFixture {
    pub fn bindings_map(&self) -> Bindings {
        self.bindings
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }
}

fn fresh(recipes: &RecipeTable) -> WorldState {
    reset_world(7, recipes)
}

fn tier1_table(recipes: &RecipeTable) -> WorldState {
    let mut w = fresh(recipes);
    w.tool_tier = 1;
    w.stations.insert("crafting_table".into());
    w
}

fn stone_kit(recipes: &RecipeTable) -> WorldState {
    let mut w = fresh(recipes);
    w.tool_tier = 1;
    w.stations.insert("crafting_table".into());
    w.inventory.insert("cobblestone".into(), 3);
    w.inventory.insert("stick".into(), 2);
    w
}

fn smelt_kit(recipes: &RecipeTable) -> WorldState {
    let mut w = fresh(recipes);
    w.inventory.insert("iron_ore".into(), 2);
    w.inventory.insert("coal".into(), 2);
    w
}

fn near_full_inventory(recipes: &RecipeTable) -> WorldState {
    let mut w = fresh(recipes);
    w.inventory.insert("cobblestone".into(), 34 * STACK_SIZE);
    w.field.insert("oak_log".into(), 500);
    w
}

fn tier2_table(recipes: &RecipeTable) -> WorldState {
    let mut w = fresh(recipes);
    w.tool_tier = 2;
    w.stations.insert("crafting_table".into());
    w
}

const STOCKPILE_OAK_LOGS: &str = "\
skill stockpileOakLogs()
pre {}
post { inv(oak_log) >= 64; }
{
  prim gather(oak_log, 64);
}
";

const STOCKPILE_PLANKS: &str = "\
skill stockpilePlanks()
pre {}
post { inv(plank) >= 64; }
{
  prim gather(oak_log, 40);
  prim craft(plank, 16);
}
";

const FORGE_INGOTS: &str = "\
skill forgeIngots(num: int)
pre { tooltier >= 2; }
post { inv(iron_ingot) >= num; }
{
  call mineIronOre(num);
  call mineCoal(num);
  call ensureFurnace();
  prim smelt(iron_ingot, num);
}
";

const PREPARE_TOOL_PARTS: &str = "\
skill prepareToolParts()
pre {}
post { inv(plank) >= 2; inv(stick) >= 6; }
{
  call mineOakLogs(1);
  call craftPlanks(1);
  call craftSticks(1);
}
";

/// The repair-convergence corpus: two fixtures per fault class.
pub fn builtin_corpus() -> Vec<FaultFixture> {
    use FaultClass::*;
    vec![
        FaultFixture {
            name: "resource_miscalc_wooden_pickaxe",
            spec: FaultSpec {
                class: ResourceMiscalculation,
                skill: "craftWoodenPickaxe".into(),
                // plank batches 2 -> 1: ignores the planks sticks consume
                perturbation: Perturbation::ConstantDelta {
                    path: "1/arg0".parse().unwrap(),
                    delta: -1,
                },
            },
            extra_skills: &[],
            bindings: vec![],
            prepare_world: fresh,
            max_episodes: 5,
        },
        FaultFixture {
            name: "resource_miscalc_furnace",
            spec: FaultSpec {
                class: ResourceMiscalculation,
                skill: "ensureFurnace".into(),
                // cobblestone 8 -> 6
                perturbation: Perturbation::ConstantDelta {
                    path: "0/else/0/arg0".parse().unwrap(),
                    delta: -2,
                },
            },
            extra_skills: &[],
            bindings: vec![],
            prepare_world: tier1_table,
            max_episodes: 5,
        },
        FaultFixture {
            name: "missing_pre_stone_pickaxe",
            spec: FaultSpec {
                class: MissingPrecondition,
                skill: "craftStonePickaxe".into(),
                // drop station(crafting_table); sorted atoms put it last
                perturbation: Perturbation::RemovePrecondition { index: 2 },
            },
            extra_skills: &[],
            bindings: vec![],
            prepare_world: |recipes| {
                let mut w = stone_kit(recipes);
                w.stations.clear();
                w
            },
            max_episodes: 5,
        },
        FaultFixture {
            name: "missing_pre_smelt_iron",
            spec: FaultSpec {
                class: MissingPrecondition,
                skill: "smeltIron".into(),
                perturbation: Perturbation::RemovePrecondition { index: 2 },
            },
            extra_skills: &[],
            bindings: vec![("num", Value::Int(2))],
            prepare_world: smelt_kit,
            max_episodes: 5,
        },
        FaultFixture {
            name: "boundary_bulk_gather",
            spec: FaultSpec {
                class: BoundaryCondition,
                skill: "stockpileOakLogs".into(),
                // 64 -> 150: three stacks into two free slots
                perturbation: Perturbation::ConstantDelta {
                    path: "0/arg1".parse().unwrap(),
                    delta: 86,
                },
            },
            extra_skills: &[STOCKPILE_OAK_LOGS],
            bindings: vec![],
            prepare_world: near_full_inventory,
            max_episodes: 5,
        },
        FaultFixture {
            name: "boundary_bulk_craft",
            spec: FaultSpec {
                class: BoundaryCondition,
                skill: "stockpilePlanks".into(),
                // plank batches 16 -> 40: 160 planks overflow the last slot
                perturbation: Perturbation::ConstantDelta {
                    path: "1/arg1".parse().unwrap(),
                    delta: 24,
                },
            },
            extra_skills: &[STOCKPILE_PLANKS],
            bindings: vec![],
            prepare_world: near_full_inventory,
            max_episodes: 5,
        },
        FaultFixture {
            name: "fallback_iron_ore",
            spec: FaultSpec {
                class: UnsafeFallback,
                skill: "mineIronOre".into(),
                // silently gather cobblestone when the tier is too low
                perturbation: Perturbation::WrapFallback {
                    path: "0".parse().unwrap(),
                    cond: Condition::tool_tier(2),
                    fallback: vec![Statement::CallPrimitive {
                        name: "gather".into(),
                        args: vec![Expr::ident("cobblestone"), Expr::Int(1)],
                    }],
                },
            },
            extra_skills: &[],
            bindings: vec![("num", Value::Int(2))],
            prepare_world: stone_kit,
            max_episodes: 5,
        },
        FaultFixture {
            name: "fallback_sticks",
            spec: FaultSpec {
                class: UnsafeFallback,
                skill: "craftSticks".into(),
                // silently survey the field instead of failing
                perturbation: Perturbation::WrapFallback {
                    path: "0".parse().unwrap(),
                    cond: Condition::InventoryAtLeast {
                        item: Expr::ident("plank"),
                        count: Expr::binary(
                            crate::dsl::BinOp::Mul,
                            Expr::ident("num"),
                            Expr::Int(2),
                        ),
                    },
                    fallback: vec![Statement::CallPrimitive {
                        name: "explore".into(),
                        args: vec![],
                    }],
                },
            },
            extra_skills: &[],
            bindings: vec![("num", Value::Int(1))],
            prepare_world: fresh,
            max_episodes: 5,
        },
        FaultFixture {
            name: "wrong_call_logs",
            spec: FaultSpec {
                class: WrongCall,
                skill: "mineOakLogs".into(),
                perturbation: Perturbation::ReplaceCall {
                    path: "0/loop/0".parse().unwrap(),
                    callee: CallTarget::Primitive("gather".into()),
                    args: vec![Expr::ident("birch_log"), Expr::Int(1)],
                },
            },
            extra_skills: &[],
            bindings: vec![("num", Value::Int(2))],
            prepare_world: fresh,
            max_episodes: 5,
        },
        FaultFixture {
            name: "wrong_call_planks",
            spec: FaultSpec {
                class: WrongCall,
                skill: "craftPlanks".into(),
                perturbation: Perturbation::ReplaceCall {
                    path: "0".parse().unwrap(),
                    callee: CallTarget::Primitive("craft".into()),
                    args: vec![Expr::ident("stick"), Expr::ident("num")],
                },
            },
            extra_skills: &[],
            bindings: vec![("num", Value::Int(1))],
            prepare_world: |recipes| {
                let mut w = fresh(recipes);
                w.inventory.insert("oak_log".into(), 1);
                w
            },
            max_episodes: 5,
        },
        FaultFixture {
            name: "contract_forge_fuel",
            spec: FaultSpec {
                class: CrossSkillContract,
                skill: "forgeIngots".into(),
                // provision half the fuel the smelt consumes
                perturbation: Perturbation::ReplaceCall {
                    path: "1".parse().unwrap(),
                    callee: CallTarget::Skill("mineCoal".into()),
                    args: vec![Expr::binary(
                        crate::dsl::BinOp::Div,
                        Expr::ident("num"),
                        Expr::Int(2),
                    )],
                },
            },
            extra_skills: &[FORGE_INGOTS],
            bindings: vec![("num", Value::Int(2))],
            prepare_world: tier2_table,
            max_episodes: 5,
        },
        FaultFixture {
            name: "contract_stick_promise",
            spec: FaultSpec {
                class: CrossSkillContract,
                skill: "craftSticks".into(),
                // post inflates num*4 to num*6: callers trust sticks that
                // never materialize
                perturbation: Perturbation::PostCountDelta { index: 0, delta: 2 },
            },
            extra_skills: &[PREPARE_TOOL_PARTS],
            bindings: vec![],
            prepare_world: fresh,
            max_episodes: 5,
        },
    ]
}

/// The skill each fixture's repair loop executes (the faulted skill itself,
/// or the fixture parent that exposes a contract fault).
pub fn fixture_root(fixture: &FaultFixture) -> &str {
    match fixture.name {
        "contract_stick_promise" => "prepareToolParts",
        _ => &fixture.spec.skill,
    }
}

/// Faults injected into the seed library for curriculum runs.
pub fn curriculum_faults() -> Vec<FaultSpec> {
    vec![
        FaultSpec {
            class: FaultClass::WrongCall,
            skill: "craftPlanks".into(),
            perturbation: Perturbation::ReplaceCall {
                path: "0".parse().unwrap(),
                callee: CallTarget::Primitive("craft".into()),
                args: vec![Expr::ident("stick"), Expr::ident("num")],
            },
        },
        FaultSpec {
            class: FaultClass::MissingPrecondition,
            skill: "smeltIron".into(),
            perturbation: Perturbation::RemovePrecondition { index: 2 },
        },
        FaultSpec {
            class: FaultClass::CrossSkillContract,
            skill: "craftIronPickaxe".into(),
            // pre claims one ingot suffices; the recipe takes three
            perturbation: Perturbation::PreCountDelta { index: 0, delta: -2 },
        },
        FaultSpec {
            class: FaultClass::CrossSkillContract,
            skill: "craftStonePickaxe".into(),
            // pre claims one cobblestone suffices; the recipe takes three
            perturbation: Perturbation::PreCountDelta { index: 0, delta: -2 },
        },
        FaultSpec {
            class: FaultClass::ResourceMiscalculation,
            skill: "craftWoodenPickaxe".into(),
            perturbation: Perturbation::ConstantDelta {
                path: "1/arg0".parse().unwrap(),
                delta: -1,
            },
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_skill, parse_skill_file, print_skill, validate};
    use rand::SeedableRng;

    fn seed_skill(name: &str) -> SkillProgram {
        parse_skill_file(super::super::BUNDLED_SEED_SKILLS)
            .unwrap()
            .into_iter()
            .find(|s| s.name == name)
            .unwrap_or_else(|| panic!("seed skill {name}"))
    }

    #[test]
    fn every_fixture_injects_a_wellformed_different_skill() {
        let recipes = RecipeTable::bundled();
        let mut vocab = recipes.vocabulary();
        for s in parse_skill_file(super::super::BUNDLED_SEED_SKILLS).unwrap() {
            vocab
                .skills
                .insert(s.name.clone(), s.params.iter().map(|p| p.kind).collect());
        }
        let mut rng = StdRng::seed_from_u64(0);
        for fixture in builtin_corpus() {
            let original = if fixture.extra_skills.is_empty() {
                seed_skill(&fixture.spec.skill)
            } else {
                let extras = fixture
                    .extra_skills
                    .iter()
                    .map(|src| parse_skill(src).unwrap())
                    .collect::<Vec<_>>();
                for e in &extras {
                    vocab
                        .skills
                        .insert(e.name.clone(), e.params.iter().map(|p| p.kind).collect());
                }
                extras
                    .into_iter()
                    .find(|s| s.name == fixture.spec.skill)
                    .unwrap_or_else(|| seed_skill(&fixture.spec.skill))
            };
            let faulty = inject_fault(&original, &fixture.spec, &mut rng)
                .unwrap_or_else(|e| panic!("{}: {e}", fixture.name));
            assert_ne!(
                print_skill(&faulty),
                print_skill(&original),
                "{} must change the program",
                fixture.name
            );
            validate(&faulty, &vocab).unwrap_or_else(|e| panic!("{}: {e}", fixture.name));
            // faulty skills must round-trip like any other program
            let reparsed = parse_skill(&print_skill(&faulty)).unwrap();
            assert_eq!(reparsed, faulty);
        }
    }

    #[test]
    fn invalid_target_is_an_error() {
        let p = seed_skill("craftPlanks");
        let spec = FaultSpec {
            class: FaultClass::ResourceMiscalculation,
            skill: "craftPlanks".into(),
            perturbation: Perturbation::ConstantDelta {
                path: "9/arg0".parse().unwrap(),
                delta: 1,
            },
        };
        let mut rng = StdRng::seed_from_u64(0);
        assert!(inject_fault(&p, &spec, &mut rng).is_err());
    }

    #[test]
    fn precondition_removal_drops_exactly_one_atom() {
        let p = seed_skill("smeltIron");
        assert_eq!(p.pre.len(), 3);
        let spec = FaultSpec {
            class: FaultClass::MissingPrecondition,
            skill: "smeltIron".into(),
            perturbation: Perturbation::RemovePrecondition { index: 2 },
        };
        let mut rng = StdRng::seed_from_u64(0);
        let faulty = inject_fault(&p, &spec, &mut rng).unwrap();
        assert_eq!(faulty.pre.len(), 2);
        assert!(!faulty
            .pre
            .iter()
            .any(|c| matches!(c, Condition::StationPlaced { .. })));
    }
}
