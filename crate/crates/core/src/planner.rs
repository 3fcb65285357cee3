//! Network-aware hybrid planning.
//!
//! Backward chaining regresses goal atoms through skill postconditions:
//! atoms already true in the state are dropped, one provider per atom is
//! sampled by Boltzmann exploration over V(s), and the provider's unmet
//! preconditions are expanded recursively (depth-capped, cycle-guarded).
//! Atoms no skill can reduce divert to `unground`; a pluggable forward
//! planner proposes steps (and, when necessary, new primitive-level skills)
//! for exactly those atoms.
//!
//! Plans are resource-oblivious at the symbolic level: identical
//! (skill, bindings) steps are emitted once, and shortfalls from shared
//! consumption surface at execution time, where the optimizer repairs them.

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{
    eval_condition, Bindings, Condition, ConditionSet, SkillProgram, StateQuery,
};
use crate::network::{NodeId, SkillNetwork};
use crate::world::WorldState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub skill: NodeId,
    pub bindings: Bindings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Dependency order: establishing steps precede their dependents.
    pub steps: Vec<PlanStep>,
    /// Goal or precondition atoms the network could not reduce.
    pub unground: Vec<Condition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub temperature: f64,
    pub max_depth: u32,
    pub rng_seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            temperature: 0.5,
            max_depth: 16,
            rng_seed: 0,
        }
    }
}

/// Forward fallback: proposes steps (and new skills) for atoms backward
/// chaining could not ground.
pub trait ForwardPlanner {
    fn forward_plan(
        &mut self,
        atoms: &[Condition],
        state: &WorldState,
        net: &SkillNetwork,
    ) -> Result<ForwardProposal, String>;
}

#[derive(Debug, Clone, Default)]
pub struct ForwardProposal {
    /// Skills to insert before executing the plan (validated by the caller).
    pub new_skills: Vec<SkillProgram>,
    pub steps: Vec<PlanStep>,
}

/// A grounded plan plus any skills the forward planner synthesized for it.
#[derive(Debug, Clone, Default)]
pub struct PlanResult {
    pub plan: Plan,
    pub pending_skills: Vec<SkillProgram>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("forward planner failed on {atoms:?}: {message}")]
    Forward {
        atoms: Vec<String>,
        message: String,
    },
    #[error("unplannable atoms: {atoms:?}")]
    Unplannable { atoms: Vec<String> },
}

/// Samples a candidate with probability proportional to exp(V/temperature).
///
/// Candidates are considered in lexicographic order, so a fixed rng stream
/// makes the draw deterministic. As temperature approaches zero this
/// degenerates to argmax-V (the max-shifted weight of every non-maximal
/// candidate underflows to zero, and exact ties resolve to the
/// lexicographically first candidate).
pub fn select_skill(
    candidates: &[NodeId],
    net: &SkillNetwork,
    cfg: &PlannerConfig,
    rng: &mut StdRng,
) -> Result<NodeId, PlanError> {
    if candidates.is_empty() {
        return Err(PlanError::Unplannable { atoms: vec![] });
    }
    let mut sorted: Vec<&NodeId> = candidates.iter().collect();
    sorted.sort();
    let values: Vec<f64> = sorted
        .iter()
        .map(|id| net.node(id).map(|n| n.value()).unwrap_or(-1.0))
        .collect();
    let max_v = values.iter().cloned().fold(f64::MIN, f64::max);
    let weights: Vec<f64> = values
        .iter()
        .map(|v| ((v - max_v) / cfg.temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let draw = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (id, w) in sorted.iter().zip(&weights) {
        acc += w;
        if draw < acc {
            return Ok((*id).clone());
        }
    }
    Ok(sorted.last().expect("nonempty").to_string())
}

/// Regresses the goal set through the network. Never fails: unsatisfiable
/// atoms land in `unground`.
pub fn backward_chain(
    goal: &ConditionSet,
    net: &SkillNetwork,
    state: &WorldState,
    cfg: &PlannerConfig,
    rng: &mut StdRng,
) -> Plan {
    let mut chainer = Chainer {
        net,
        state,
        cfg,
        rng,
        steps: Vec::new(),
        planned: BTreeSet::new(),
        unground: Vec::new(),
    };
    for atom in goal.iter() {
        let mut chain_stack = Vec::new();
        chainer.expand(atom, 0, &mut chain_stack);
    }
    Plan {
        steps: chainer.steps,
        unground: chainer.unground,
    }
}

struct Chainer<'a> {
    net: &'a SkillNetwork,
    state: &'a WorldState,
    cfg: &'a PlannerConfig,
    rng: &'a mut StdRng,
    steps: Vec<PlanStep>,
    planned: BTreeSet<(NodeId, String)>,
    unground: Vec<Condition>,
}

impl Chainer<'_> {
    fn expand(&mut self, atom: &Condition, depth: u32, chain: &mut Vec<NodeId>) {
        let env = Bindings::new();
        if eval_condition(atom, &env, self.state).unwrap_or(false) {
            return;
        }
        if depth > self.cfg.max_depth {
            self.push_unground(atom);
            return;
        }
        let mut candidates = self.net.skills_achieving(atom);
        candidates.retain(|id| !chain.contains(id));
        if candidates.is_empty() {
            self.push_unground(atom);
            return;
        }
        let chosen = match select_skill(&candidates, self.net, self.cfg, self.rng) {
            Ok(id) => id,
            Err(_) => {
                self.push_unground(atom);
                return;
            }
        };
        let program = &self.net.node(&chosen).expect("candidate exists").program;
        let bindings =
            crate::dsl::bind_for_goal(program, atom).expect("skills_achieving guarantees a binding");
        let key = (
            chosen.clone(),
            serde_json::to_string(&bindings).expect("bindings serialize"),
        );
        if self.planned.contains(&key) {
            return; // provider already scheduled earlier in this plan
        }
        let pre = crate::dsl::subst_condition_set(&program.pre, &bindings).clone();
        chain.push(chosen.clone());
        for pre_atom in pre.iter() {
            self.expand(pre_atom, depth + 1, chain);
        }
        chain.pop();
        self.planned.insert(key);
        self.steps.push(PlanStep {
            skill: chosen,
            bindings,
        });
    }

    fn push_unground(&mut self, atom: &Condition) {
        if !self.unground.contains(atom) {
            self.unground.push(atom.clone());
        }
    }
}

/// Full hybrid planning: backward chain, then hand any unground atoms to the
/// forward planner and splice its steps ahead of the dependents.
pub fn plan(
    goal: &ConditionSet,
    net: &SkillNetwork,
    state: &WorldState,
    forward: &mut dyn ForwardPlanner,
    cfg: &PlannerConfig,
    rng: &mut StdRng,
) -> Result<PlanResult, PlanError> {
    let chained = backward_chain(goal, net, state, cfg, rng);
    if chained.unground.is_empty() {
        return Ok(PlanResult {
            plan: chained,
            pending_skills: Vec::new(),
        });
    }
    let atom_names: Vec<String> = chained
        .unground
        .iter()
        .map(crate::dsl::print_condition)
        .collect();
    let proposal = forward
        .forward_plan(&chained.unground, state, net)
        .map_err(|message| PlanError::Forward {
            atoms: atom_names.clone(),
            message,
        })?;

    // every unground atom must be covered by a proposed step's skill
    let covered = |atom: &Condition| {
        proposal.steps.iter().any(|step| {
            let program = proposal
                .new_skills
                .iter()
                .find(|p| p.name == step.skill)
                .or_else(|| net.node(&step.skill).map(|n| &n.program));
            program
                .map(|p| crate::dsl::bind_for_goal(p, atom).is_some())
                .unwrap_or(false)
        })
    };
    let uncovered: Vec<String> = chained
        .unground
        .iter()
        .filter(|a| !covered(a))
        .map(crate::dsl::print_condition)
        .collect();
    if proposal.steps.is_empty() || !uncovered.is_empty() {
        return Err(PlanError::Unplannable {
            atoms: if uncovered.is_empty() {
                atom_names
            } else {
                uncovered
            },
        });
    }

    // forward steps are self-contained; splicing them ahead keeps every
    // dependent after its establisher
    let mut steps = proposal.steps;
    steps.extend(chained.steps);
    Ok(PlanResult {
        plan: Plan {
            steps,
            unground: Vec::new(),
        },
        pending_skills: proposal.new_skills,
    })
}

/// Symbolic replay: walks steps in order accumulating declared posts and
/// returns the pre atoms nothing established. With a state, atoms already
/// true there are excused; without one, the result is the state-independent
/// requirement set (used as a synthesized composite's precondition).
pub fn unmet_requirements(
    steps: &[PlanStep],
    lookup: &dyn Fn(&str) -> Option<SkillProgram>,
    state: Option<&WorldState>,
) -> Vec<Condition> {
    let mut established: Vec<Condition> = Vec::new();
    let mut unmet: Vec<Condition> = Vec::new();
    let env = Bindings::new();
    for step in steps {
        let Some(program) = lookup(&step.skill) else {
            continue;
        };
        let pre = crate::dsl::subst_condition_set(&program.pre, &step.bindings);
        for atom in pre.iter() {
            let in_state = state
                .map(|s| eval_condition(atom, &env, s as &dyn StateQuery).unwrap_or(false))
                .unwrap_or(false);
            let established_here = established
                .iter()
                .any(|have| crate::dsl::entails_atom(have, atom));
            if !in_state && !established_here && !unmet.contains(atom) {
                unmet.push(atom.clone());
            }
        }
        let post = crate::dsl::subst_condition_set(&program.post, &step.bindings);
        established.extend(post.iter().cloned());
    }
    unmet
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_skill;
    use crate::network::network_from_sources;
    use crate::world::{reset_world, RecipeTable};
    use rand::SeedableRng;

    fn three_skill_net() -> SkillNetwork {
        let recipes = RecipeTable::bundled();
        let sources = [
            parse_skill(
                "skill gatherLogs(num: int) pre {} post { inv(oak_log) >= num; } \
                 { repeat (num) { prim gather(oak_log, 1); } }",
            )
            .unwrap(),
            parse_skill(
                "skill craftPlanks(num: int) pre { inv(oak_log) >= num; } \
                 post { inv(plank) >= num * 4; } { prim craft(plank, num); }",
            )
            .unwrap(),
            parse_skill(
                "skill craftTable() pre { inv(plank) >= 4; } \
                 post { inv(crafting_table) >= 1; } { prim craft(crafting_table, 1); }",
            )
            .unwrap(),
        ];
        network_from_sources(&sources, &recipes.vocabulary()).unwrap()
    }

    fn fresh_world() -> WorldState {
        reset_world(0, &RecipeTable::bundled())
    }

    #[test]
    fn satisfied_goal_plans_to_nothing() {
        let net = three_skill_net();
        let mut world = fresh_world();
        world.inventory.insert("oak_log".into(), 2);
        let goal = ConditionSet::new(vec![Condition::inv("oak_log", 1)]);
        let mut rng = StdRng::seed_from_u64(0);
        let plan = backward_chain(&goal, &net, &world, &PlannerConfig::default(), &mut rng);
        assert!(plan.steps.is_empty());
        assert!(plan.unground.is_empty());
    }

    #[test]
    fn chains_table_goal_through_three_skills() {
        let net = three_skill_net();
        let world = fresh_world();
        let goal = ConditionSet::new(vec![Condition::inv("crafting_table", 1)]);
        let mut rng = StdRng::seed_from_u64(0);
        let plan = backward_chain(&goal, &net, &world, &PlannerConfig::default(), &mut rng);
        let names: Vec<&str> = plan.steps.iter().map(|s| s.skill.as_str()).collect();
        assert_eq!(names, ["gatherLogs", "craftPlanks", "craftTable"]);
        assert!(plan.unground.is_empty());
        // craftPlanks bound for four planks: one batch
        assert_eq!(
            plan.steps[1].bindings.get("num"),
            Some(&crate::dsl::Value::Int(1))
        );
    }

    #[test]
    fn unproducible_goal_diverts_to_unground() {
        let net = three_skill_net();
        let world = fresh_world();
        let goal = ConditionSet::new(vec![Condition::inv("diamond", 1)]);
        let mut rng = StdRng::seed_from_u64(0);
        let plan = backward_chain(&goal, &net, &world, &PlannerConfig::default(), &mut rng);
        assert!(plan.steps.is_empty());
        assert_eq!(plan.unground, vec![Condition::inv("diamond", 1)]);
    }

    #[test]
    fn equal_values_split_evenly() {
        let net = three_skill_net();
        let candidates = vec!["craftPlanks".to_string(), "gatherLogs".to_string()];
        let cfg = PlannerConfig::default();
        let mut rng = StdRng::seed_from_u64(42);
        let mut first = 0u32;
        let draws = 10_000;
        for _ in 0..draws {
            if select_skill(&candidates, &net, &cfg, &mut rng).unwrap() == "craftPlanks" {
                first += 1;
            }
        }
        let frequency = f64::from(first) / f64::from(draws);
        assert!((frequency - 0.5).abs() < 0.03, "frequency {frequency}");
    }

    #[test]
    fn boltzmann_frequency_matches_closed_form() {
        // V = {0.5, 0.0} at temperature 0.25: P(first) = e^2 / (e^2 + 1)
        let recipes = RecipeTable::bundled();
        let sources = [
            parse_skill("skill alpha() pre {} post { inv(plank) >= 1; } { prim craft(plank, 1); }")
                .unwrap(),
            parse_skill("skill beta() pre {} post { inv(plank) >= 1; } { prim craft(plank, 1); }")
                .unwrap(),
        ];
        let mut net = network_from_sources(&sources, &recipes.vocabulary()).unwrap();
        // shape counts so V(alpha) ~ 0.5 and V(beta) ~ 0.0
        force_value(&mut net, "alpha", 0.5);
        force_value(&mut net, "beta", 0.0);
        let cfg = PlannerConfig {
            temperature: 0.25,
            ..Default::default()
        };
        let candidates = vec!["alpha".to_string(), "beta".to_string()];
        let mut rng = StdRng::seed_from_u64(7);
        let mut alpha = 0u32;
        let draws = 10_000;
        for _ in 0..draws {
            if select_skill(&candidates, &net, &cfg, &mut rng).unwrap() == "alpha" {
                alpha += 1;
            }
        }
        let va = net.node("alpha").unwrap().value();
        let vb = net.node("beta").unwrap().value();
        let expected = ((va - vb) / 0.25).exp() / (((va - vb) / 0.25).exp() + 1.0);
        let frequency = f64::from(alpha) / f64::from(draws);
        assert!(
            (frequency - expected).abs() < 0.02,
            "frequency {frequency} expected {expected}"
        );
    }

    // finds counts whose value lands within 1e-3 of the target
    fn force_value(net: &mut SkillNetwork, id: &str, target: f64) {
        for n in 0..200_000u64 {
            let u = 1.0 / ((n as f64 + 1.0).sqrt());
            let s_star = ((target + u) * (n as f64 + 2.0) - 1.0).round();
            if s_star < 0.0 || s_star > n as f64 {
                continue;
            }
            let s = s_star as u64;
            if (crate::network::value_from_counts(n, s) - target).abs() < 1e-3 {
                let node = net.node_mut(id).unwrap();
                node.n_exec = n;
                node.n_succ = s;
                return;
            }
        }
        panic!("no counts reach value {target}");
    }

    #[test]
    fn tiny_temperature_is_argmax() {
        let net = {
            let mut n = three_skill_net();
            n.record_outcome("craftPlanks", true).unwrap();
            n
        };
        let cfg = PlannerConfig {
            temperature: 1e-6,
            ..Default::default()
        };
        let candidates = vec!["craftPlanks".to_string(), "gatherLogs".to_string()];
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..200 {
            assert_eq!(
                select_skill(&candidates, &net, &cfg, &mut rng).unwrap(),
                "craftPlanks"
            );
        }
    }

    #[test]
    fn softmax_is_shift_invariant() {
        // adding a constant to every value must not move frequencies beyond
        // sampling noise; exercised by comparing two nets whose values differ
        // by a constant offset
        let recipes = RecipeTable::bundled();
        let sources = [
            parse_skill("skill a() pre {} post { inv(plank) >= 1; } {}").unwrap(),
            parse_skill("skill b() pre {} post { inv(plank) >= 1; } {}").unwrap(),
        ];
        let mut low = network_from_sources(&sources, &recipes.vocabulary()).unwrap();
        let mut high = network_from_sources(&sources, &recipes.vocabulary()).unwrap();
        force_value(&mut low, "a", 0.1);
        force_value(&mut low, "b", 0.05);
        force_value(&mut high, "a", 0.6);
        force_value(&mut high, "b", 0.55);
        let cfg = PlannerConfig::default();
        let candidates = vec!["a".to_string(), "b".to_string()];
        let count_a = |net: &SkillNetwork, seed: u64| {
            let mut rng = StdRng::seed_from_u64(seed);
            (0..10_000)
                .filter(|_| select_skill(&candidates, net, &cfg, &mut rng).unwrap() == "a")
                .count() as f64
                / 10_000.0
        };
        let f_low = count_a(&low, 11);
        let f_high = count_a(&high, 13);
        assert!((f_low - f_high).abs() < 0.03, "{f_low} vs {f_high}");
    }

    #[test]
    fn same_seed_same_plan() {
        let net = {
            let mut n = three_skill_net();
            // second plank provider so sampling matters
            let p = parse_skill(
                "skill altPlanks(num: int) pre { inv(oak_log) >= num; } \
                 post { inv(plank) >= num * 4; } { prim craft(plank, num); }",
            )
            .unwrap();
            n.insert_skill(p, &RecipeTable::bundled().vocabulary()).unwrap();
            n
        };
        let world = fresh_world();
        let goal = ConditionSet::new(vec![Condition::inv("crafting_table", 1)]);
        let cfg = PlannerConfig::default();
        let run = |seed| {
            let mut rng = StdRng::seed_from_u64(seed);
            backward_chain(&goal, &net, &world, &cfg, &mut rng)
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn symbolic_replay_accepts_grounded_plans() {
        let net = three_skill_net();
        let world = fresh_world();
        let goal = ConditionSet::new(vec![Condition::inv("crafting_table", 1)]);
        let mut rng = StdRng::seed_from_u64(0);
        let plan = backward_chain(&goal, &net, &world, &PlannerConfig::default(), &mut rng);
        let lookup = |id: &str| net.node(id).map(|n| n.program.clone());
        let unmet = unmet_requirements(&plan.steps, &lookup, None);
        assert!(unmet.is_empty(), "unmet: {unmet:?}");
        // goal itself is established by the final step
        let established: Vec<Condition> = plan
            .steps
            .iter()
            .flat_map(|s| {
                let p = lookup(&s.skill).unwrap();
                crate::dsl::subst_condition_set(&p.post, &s.bindings)
                    .iter()
                    .cloned()
                    .collect::<Vec<_>>()
            })
            .collect();
        for atom in goal.iter() {
            assert!(established
                .iter()
                .any(|have| crate::dsl::entails_atom(have, atom)));
        }
    }

    struct NoForward;
    impl ForwardPlanner for NoForward {
        fn forward_plan(
            &mut self,
            _atoms: &[Condition],
            _state: &WorldState,
            _net: &SkillNetwork,
        ) -> Result<ForwardProposal, String> {
            Ok(ForwardProposal::default())
        }
    }

    #[test]
    fn stub_forward_planner_reports_unplannable() {
        let net = three_skill_net();
        let world = fresh_world();
        let goal = ConditionSet::new(vec![Condition::inv("diamond", 1)]);
        let mut rng = StdRng::seed_from_u64(0);
        let err = plan(
            &goal,
            &net,
            &world,
            &mut NoForward,
            &PlannerConfig::default(),
            &mut rng,
        )
        .unwrap_err();
        match err {
            PlanError::Unplannable { atoms } => {
                assert_eq!(atoms, vec!["inv(diamond) >= 1".to_string()])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grounded_goal_skips_forward_planner() {
        struct Panics;
        impl ForwardPlanner for Panics {
            fn forward_plan(
                &mut self,
                _: &[Condition],
                _: &WorldState,
                _: &SkillNetwork,
            ) -> Result<ForwardProposal, String> {
                panic!("forward planner must not run for groundable goals");
            }
        }
        let net = three_skill_net();
        let world = fresh_world();
        let goal = ConditionSet::new(vec![Condition::inv("crafting_table", 1)]);
        let mut rng = StdRng::seed_from_u64(0);
        let result = plan(
            &goal,
            &net,
            &world,
            &mut Panics,
            &PlannerConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(result.plan.steps.len(), 3);
        assert!(result.pending_skills.is_empty());
    }
}
