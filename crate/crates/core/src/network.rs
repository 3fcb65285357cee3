//! The skill network: nodes with execution statistics, invocation links,
//! goal-indexed lookup, snapshots, and serialization.
//!
//! Node ids are skill names. Links are recomputed from bodies after every
//! structural change, so they always mirror the `call` statements. Aliases
//! are demoted duplicates: one-call wrappers whose statistics forward to a
//! canonical target and which planning ignores.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{bind_for_goal, Condition, ParamKind, SkillProgram, Vocabulary};

pub type NodeId = String;

/// Smoothed success estimate minus a decaying uncertainty term.
///
/// p̂ = (successes + 1) / (executions + 2), u = 1 / sqrt(executions + 1).
/// A fresh node sits at -0.5, safely below the 0.6 maturity pivot, so new
/// skills start plastic.
pub fn value_from_counts(n_exec: u64, n_succ: u64) -> f64 {
    let p_hat = (n_succ as f64 + 1.0) / (n_exec as f64 + 2.0);
    let uncertainty = 1.0 / ((n_exec as f64 + 1.0).sqrt());
    p_hat - uncertainty
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillNode {
    pub program: SkillProgram,
    pub n_exec: u64,
    pub n_succ: u64,
    pub alias_of: Option<NodeId>,
    /// Consecutive-episode contradiction counters for condition calibration,
    /// keyed by item kind.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub calibration: BTreeMap<String, u32>,
}

impl SkillNode {
    pub fn new(program: SkillProgram) -> Self {
        SkillNode {
            program,
            n_exec: 0,
            n_succ: 0,
            alias_of: None,
            calibration: BTreeMap::new(),
        }
    }

    pub fn value(&self) -> f64 {
        value_from_counts(self.n_exec, self.n_succ)
    }

    pub fn is_alias(&self) -> bool {
        self.alias_of.is_some()
    }
}

/// Reliability value of a node; see [`value_from_counts`].
pub fn value(node: &SkillNode) -> f64 {
    node.value()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("unknown skill `{0}`")]
    UnknownSkill(NodeId),
    #[error("skill `{0}` already exists")]
    NameCollision(NodeId),
    #[error("skill `{id}` calls missing skill `{callee}`")]
    DanglingCallee { id: NodeId, callee: NodeId },
    #[error("cannot remove `{id}`: still called by {callers:?}")]
    HasInboundLinks { id: NodeId, callers: Vec<NodeId> },
    #[error("alias target `{0}` does not exist")]
    MissingAliasTarget(NodeId),
    #[error(transparent)]
    Invalid(#[from] crate::dsl::ValidateError),
    #[error("network payload version {0} unsupported")]
    Version(u32),
    #[error("corrupt network payload: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkillNetwork {
    nodes: BTreeMap<NodeId, SkillNode>,
    links: BTreeSet<(NodeId, NodeId)>,
    generation: u64,
}

/// Deep copy of the network tagged with the generation it captured.
#[derive(Debug, Clone)]
pub struct NetworkSnapshot {
    nodes: BTreeMap<NodeId, SkillNode>,
    links: BTreeSet<(NodeId, NodeId)>,
    pub generation: u64,
}

impl SkillNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Non-alias node count: the effective library size.
    pub fn library_size(&self) -> usize {
        self.nodes.values().filter(|n| !n.is_alias()).count()
    }

    pub fn node(&self, id: &str) -> Option<&SkillNode> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut SkillNode> {
        self.nodes.get_mut(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&NodeId, &SkillNode)> {
        self.nodes.iter()
    }

    pub fn links(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.links
    }

    pub fn callers_of(&self, id: &str) -> Vec<NodeId> {
        self.links
            .iter()
            .filter(|(_, callee)| callee == id)
            .map(|(caller, _)| caller.clone())
            .collect()
    }

    pub fn children_of(&self, id: &str) -> Vec<NodeId> {
        self.links
            .iter()
            .filter(|(caller, _)| caller == id)
            .map(|(_, callee)| callee.clone())
            .collect()
    }

    /// Resolves aliases to the canonical node id.
    pub fn canonical_id(&self, id: &str) -> Option<NodeId> {
        let mut current = self.nodes.get_key_value(id)?;
        let mut hops = 0;
        while let Some(target) = &current.1.alias_of {
            current = self.nodes.get_key_value(target)?;
            hops += 1;
            if hops > self.nodes.len() {
                return None; // alias cycle; defensive
            }
        }
        Some(current.0.clone())
    }

    /// The vocabulary of this network's skills layered over a base world
    /// vocabulary.
    pub fn vocabulary(&self, base: &Vocabulary) -> Vocabulary {
        let mut vocab = base.clone();
        for (id, node) in &self.nodes {
            vocab
                .skills
                .insert(id.clone(), node.program.params.iter().map(|p| p.kind).collect());
        }
        vocab
    }

    fn derive_links(nodes: &BTreeMap<NodeId, SkillNode>) -> BTreeSet<(NodeId, NodeId)> {
        let mut links = BTreeSet::new();
        for (id, node) in nodes {
            for callee in node.program.called_skills() {
                links.insert((id.clone(), callee));
            }
        }
        links
    }

    fn recompute_links(&mut self) {
        self.links = Self::derive_links(&self.nodes);
    }

    fn check_callees(&self, program: &SkillProgram) -> Result<(), NetworkError> {
        for callee in program.called_skills() {
            if !self.nodes.contains_key(&callee) && callee != program.name {
                return Err(NetworkError::DanglingCallee {
                    id: program.name.clone(),
                    callee,
                });
            }
        }
        Ok(())
    }

    /// Inserts a new skill. Fails on name collision, a dangling callee, or
    /// an invalid program.
    pub fn insert_skill(
        &mut self,
        program: SkillProgram,
        base_vocab: &Vocabulary,
    ) -> Result<(), NetworkError> {
        if self.nodes.contains_key(&program.name) {
            return Err(NetworkError::NameCollision(program.name));
        }
        self.check_callees(&program)?;
        let vocab = self.vocabulary(base_vocab).with_skill(
            &program.name,
            program.params.iter().map(|p| p.kind).collect::<Vec<ParamKind>>(),
        );
        crate::dsl::validate(&program, &vocab)?;
        self.nodes
            .insert(program.name.clone(), SkillNode::new(program));
        self.recompute_links();
        self.generation += 1;
        Ok(())
    }

    /// Replaces a node's program (repairs, refactors). Links re-derive and
    /// the generation bumps.
    pub fn set_program(
        &mut self,
        id: &str,
        program: SkillProgram,
        base_vocab: &Vocabulary,
    ) -> Result<(), NetworkError> {
        if !self.nodes.contains_key(id) {
            return Err(NetworkError::UnknownSkill(id.to_string()));
        }
        self.check_callees(&program)?;
        let vocab = self.vocabulary(base_vocab);
        crate::dsl::validate(&program, &vocab)?;
        self.nodes.get_mut(id).expect("checked").program = program;
        self.recompute_links();
        self.generation += 1;
        Ok(())
    }

    /// Removes a skill. Nodes with inbound links must be demoted to aliases
    /// and redirected first.
    pub fn remove_skill(&mut self, id: &str) -> Result<SkillNode, NetworkError> {
        if !self.nodes.contains_key(id) {
            return Err(NetworkError::UnknownSkill(id.to_string()));
        }
        let callers = self.callers_of(id);
        if !callers.is_empty() {
            return Err(NetworkError::HasInboundLinks {
                id: id.to_string(),
                callers,
            });
        }
        let node = self.nodes.remove(id).expect("checked");
        self.recompute_links();
        self.generation += 1;
        Ok(node)
    }

    /// Rewrites every `call from(...)` into `call to(...)` across all
    /// bodies. Afterwards no link targets `from`.
    pub fn redirect_links(&mut self, from: &str, to: &str) -> Result<(), NetworkError> {
        if !self.nodes.contains_key(from) {
            return Err(NetworkError::UnknownSkill(from.to_string()));
        }
        if !self.nodes.contains_key(to) {
            return Err(NetworkError::UnknownSkill(to.to_string()));
        }
        let ids: Vec<NodeId> = self.nodes.keys().cloned().collect();
        for id in ids {
            if id == from {
                continue;
            }
            let node = self.nodes.get_mut(&id).expect("listed");
            rename_calls(&mut node.program.body, from, to);
        }
        self.recompute_links();
        self.generation += 1;
        Ok(())
    }

    /// Demotes `id` to an alias of `target`: its body becomes a one-call
    /// wrapper forwarding its parameters.
    pub fn demote_to_alias(&mut self, id: &str, target: &str) -> Result<(), NetworkError> {
        if !self.nodes.contains_key(id) {
            return Err(NetworkError::UnknownSkill(id.to_string()));
        }
        if !self.nodes.contains_key(target) {
            return Err(NetworkError::MissingAliasTarget(target.to_string()));
        }
        let node = self.nodes.get_mut(id).expect("checked");
        let args = node
            .program
            .params
            .iter()
            .map(|p| crate::dsl::Expr::Ident(p.name.clone()))
            .collect();
        node.program.body = vec![crate::dsl::Statement::CallSkill {
            name: target.to_string(),
            args,
        }];
        node.alias_of = Some(target.to_string());
        self.recompute_links();
        self.generation += 1;
        Ok(())
    }

    /// Restores a previously demoted alias to a standalone skill.
    pub fn promote_from_alias(
        &mut self,
        id: &str,
        program: SkillProgram,
    ) -> Result<(), NetworkError> {
        let node = self
            .nodes
            .get_mut(id)
            .ok_or_else(|| NetworkError::UnknownSkill(id.to_string()))?;
        node.program = program;
        node.alias_of = None;
        self.recompute_links();
        self.generation += 1;
        Ok(())
    }

    /// Records one execution outcome. Alias statistics forward to the
    /// canonical target.
    pub fn record_outcome(&mut self, id: &str, success: bool) -> Result<(), NetworkError> {
        let canonical = self
            .canonical_id(id)
            .ok_or_else(|| NetworkError::UnknownSkill(id.to_string()))?;
        let node = self.nodes.get_mut(&canonical).expect("canonical exists");
        node.n_exec += 1;
        if success {
            node.n_succ += 1;
        }
        Ok(())
    }

    /// Non-alias skills whose declared post can entail the goal under some
    /// parameter binding. Sorted by id for determinism.
    pub fn skills_achieving(&self, goal: &Condition) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|(_, node)| !node.is_alias())
            .filter(|(_, node)| bind_for_goal(&node.program, goal).is_some())
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn snapshot(&self) -> NetworkSnapshot {
        NetworkSnapshot {
            nodes: self.nodes.clone(),
            links: self.links.clone(),
            generation: self.generation,
        }
    }

    pub fn restore(snapshot: &NetworkSnapshot) -> SkillNetwork {
        SkillNetwork {
            nodes: snapshot.nodes.clone(),
            links: snapshot.links.clone(),
            generation: snapshot.generation,
        }
    }

    /// Versioned JSON payload; links are implicit in the bodies.
    pub fn serialize(&self) -> Vec<u8> {
        let doc = NetworkDoc {
            version: NETWORK_VERSION,
            generation: self.generation,
            nodes: self
                .nodes
                .values()
                .map(|node| NodeDoc {
                    id: node.program.name.clone(),
                    source: crate::dsl::print_skill(&node.program),
                    n_exec: node.n_exec,
                    n_succ: node.n_succ,
                    alias_of: node.alias_of.clone(),
                    calibration: node.calibration.clone(),
                })
                .collect(),
        };
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("network serializes");
        bytes.push(b'\n');
        bytes
    }

    /// Serialization with the generation counter normalized to zero; the
    /// rollback-inversion checks compare networks modulo generation.
    pub fn serialize_ignoring_generation(&self) -> Vec<u8> {
        let mut copy = self.clone();
        copy.generation = 0;
        copy.serialize()
    }

    pub fn deserialize(bytes: &[u8]) -> Result<SkillNetwork, NetworkError> {
        let doc: NetworkDoc = serde_json::from_slice(bytes)
            .map_err(|e| NetworkError::Corrupt(e.to_string()))?;
        if doc.version != NETWORK_VERSION {
            return Err(NetworkError::Version(doc.version));
        }
        let mut nodes = BTreeMap::new();
        for node_doc in doc.nodes {
            let program = crate::dsl::parse_skill(&node_doc.source)
                .map_err(|e| NetworkError::Corrupt(format!("node {}: {e}", node_doc.id)))?;
            if program.name != node_doc.id {
                return Err(NetworkError::Corrupt(format!(
                    "node id `{}` does not match source name `{}`",
                    node_doc.id, program.name
                )));
            }
            nodes.insert(
                node_doc.id.clone(),
                SkillNode {
                    program,
                    n_exec: node_doc.n_exec,
                    n_succ: node_doc.n_succ,
                    alias_of: node_doc.alias_of,
                    calibration: node_doc.calibration,
                },
            );
        }
        for node in nodes.values() {
            if let Some(target) = &node.alias_of {
                if !nodes.contains_key(target) {
                    return Err(NetworkError::Corrupt(format!(
                        "alias target `{target}` missing"
                    )));
                }
            }
        }
        let links = Self::derive_links(&nodes);
        Ok(SkillNetwork {
            nodes,
            links,
            generation: doc.generation,
        })
    }
}

fn rename_calls(body: &mut [crate::dsl::Statement], from: &str, to: &str) {
    use crate::dsl::Statement;
    for stmt in body {
        match stmt {
            Statement::CallSkill { name, .. } if name == from => *name = to.to_string(),
            Statement::If {
                then_body,
                else_body,
                ..
            } => {
                rename_calls(then_body, from, to);
                rename_calls(else_body, from, to);
            }
            Statement::Repeat { body, .. } => rename_calls(body, from, to),
            _ => {}
        }
    }
}

const NETWORK_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    version: u32,
    generation: u64,
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: String,
    source: String,
    n_exec: u64,
    n_succ: u64,
    #[serde(default)]
    alias_of: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    calibration: BTreeMap<String, u32>,
}

/// Loads a skill file into a fresh network over the given vocabulary.
/// Definition order within the file may reference later skills; callee
/// checks run after all nodes are present.
pub fn network_from_sources(
    sources: &[SkillProgram],
    base_vocab: &Vocabulary,
) -> Result<SkillNetwork, NetworkError> {
    let mut net = SkillNetwork::new();
    for program in sources {
        if net.nodes.contains_key(&program.name) {
            return Err(NetworkError::NameCollision(program.name.clone()));
        }
        net.nodes
            .insert(program.name.clone(), SkillNode::new(program.clone()));
    }
    let vocab = net.vocabulary(base_vocab);
    for program in sources {
        crate::dsl::validate(program, &vocab)?;
        for callee in program.called_skills() {
            if !net.nodes.contains_key(&callee) {
                return Err(NetworkError::DanglingCallee {
                    id: program.name.clone(),
                    callee,
                });
            }
        }
    }
    net.recompute_links();
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::RecipeTable;
    use crate::dsl::parse_skill_file;

    fn seed_network() -> SkillNetwork {
        let recipes = RecipeTable::bundled();
        let skills = parse_skill_file(crate::world::BUNDLED_SEED_SKILLS).unwrap();
        network_from_sources(&skills, &recipes.vocabulary()).unwrap()
    }

    #[test]
    fn fresh_node_value_is_minus_half() {
        assert!((value_from_counts(0, 0) - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn one_success_value_matches_closed_form() {
        let expected = 2.0 / 3.0 - 1.0 / 2f64.sqrt();
        assert!((value_from_counts(1, 1) - expected).abs() < 1e-12);
        assert!((expected - (-0.040_440_115)).abs() < 1e-6);
    }

    #[test]
    fn one_failure_value_matches_closed_form() {
        let expected = 1.0 / 3.0 - 1.0 / 2f64.sqrt();
        assert!((value_from_counts(1, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn value_approaches_one_under_pure_success() {
        let mut last = value_from_counts(0, 0);
        for n in [1u64, 10, 100, 10_000, 1_000_000] {
            let v = value_from_counts(n, n);
            assert!(v > last);
            last = v;
        }
        assert!(last > 0.99);
    }

    #[test]
    fn success_strictly_increases_value_everywhere() {
        // exhaustive over n_exec <= 10_000 at the success-count extremes and
        // a mixed ratio
        for n in 0..=10_000u64 {
            for s in [0, n / 2, n] {
                let before = value_from_counts(n, s);
                let after = value_from_counts(n + 1, s + 1);
                assert!(after > before, "n={n} s={s}");
            }
        }
    }

    #[test]
    fn failure_strictly_drops_the_posterior() {
        // The full value V can rise after a failure at small n (the
        // uncertainty decay outweighs the posterior drop; e.g. n=4, s=0),
        // so the monotone guarantee is on p̂ alone.
        let p_hat = |n: u64, s: u64| (s as f64 + 1.0) / (n as f64 + 2.0);
        for n in 0..=10_000u64 {
            for s in [0, n / 2, n] {
                assert!(p_hat(n + 1, s) < p_hat(n, s), "n={n} s={s}");
            }
        }
        let v_before = value_from_counts(4, 0);
        let v_after = value_from_counts(5, 0);
        assert!(v_after > v_before, "documented counterexample holds");
    }

    #[test]
    fn record_outcome_moves_value_as_derived() {
        let mut net = seed_network();
        let before = net.node("mineOakLogs").unwrap().value();
        assert!((before - (-0.5)).abs() < 1e-12);
        net.record_outcome("mineOakLogs", true).unwrap();
        let after = net.node("mineOakLogs").unwrap().value();
        assert!((after - (2.0 / 3.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);

        net.record_outcome("mineBirchLogs", false).unwrap();
        let failed = net.node("mineBirchLogs").unwrap().value();
        assert!((failed - (1.0 / 3.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn alias_outcomes_forward_to_canonical() {
        let mut net = seed_network();
        net.demote_to_alias("gatherCoal", "mineCoal").unwrap();
        net.record_outcome("gatherCoal", true).unwrap();
        assert_eq!(net.node("mineCoal").unwrap().n_exec, 1);
        assert_eq!(net.node("mineCoal").unwrap().n_succ, 1);
        assert_eq!(net.node("gatherCoal").unwrap().n_exec, 0);
    }

    #[test]
    fn links_mirror_bodies() {
        let net = seed_network();
        let expected: BTreeSet<(NodeId, NodeId)> = net
            .nodes()
            .flat_map(|(id, node)| {
                node.program
                    .called_skills()
                    .into_iter()
                    .map(move |callee| (id.clone(), callee))
            })
            .collect();
        assert_eq!(net.links(), &expected);
        assert!(net
            .links()
            .contains(&("craftWoodenPickaxe".into(), "craftPlanks".into())));
    }

    #[test]
    fn skills_achieving_uses_binding_dominance() {
        let net = seed_network();
        let goal = Condition::inv("plank", 1);
        let ids = net.skills_achieving(&goal);
        assert!(ids.contains(&"craftPlanks".to_string()));
        assert!(ids.contains(&"makePlanks".to_string()));
        assert!(!ids.contains(&"mineOakLogs".to_string()));

        let none = net.skills_achieving(&Condition::inv("diamond", 1));
        assert!(none.is_empty());

        // tier dominance: both the tier-2 and tier-3 providers qualify
        let tier = net.skills_achieving(&Condition::tool_tier(2));
        assert_eq!(
            tier,
            vec!["craftIronPickaxe".to_string(), "craftStonePickaxe".to_string()]
        );
    }

    #[test]
    fn aliases_drop_out_of_goal_lookup() {
        let mut net = seed_network();
        let goal = Condition::inv("coal", 2);
        assert_eq!(net.skills_achieving(&goal).len(), 2);
        net.demote_to_alias("gatherCoal", "mineCoal").unwrap();
        assert_eq!(net.skills_achieving(&goal), vec!["mineCoal".to_string()]);
    }

    #[test]
    fn insert_remove_and_redirect_maintain_invariants() {
        let recipes = RecipeTable::bundled();
        let vocab = recipes.vocabulary();
        let mut net = seed_network();
        let before = net.generation();

        let composite = crate::dsl::parse_skill(
            "skill doMineWood() pre {} post { inv(oak_log) >= 1; } { call mineOakLogs(1); }",
        )
        .unwrap();
        net.insert_skill(composite, &vocab).unwrap();
        assert!(net.generation() > before);
        assert!(net
            .links()
            .contains(&("doMineWood".into(), "mineOakLogs".into())));

        // removal is blocked while callers exist
        let err = net.remove_skill("mineOakLogs").unwrap_err();
        assert!(matches!(err, NetworkError::HasInboundLinks { .. }));

        net.redirect_links("mineOakLogs", "mineBirchLogs").unwrap();
        assert!(net.callers_of("mineOakLogs").is_empty());

        net.remove_skill("mineOakLogs").unwrap();
        assert!(!net.contains("mineOakLogs"));
    }

    #[test]
    fn duplicate_insert_collides() {
        let recipes = RecipeTable::bundled();
        let mut net = seed_network();
        let dup = net.node("mineCoal").unwrap().program.clone();
        assert!(matches!(
            net.insert_skill(dup, &recipes.vocabulary()),
            Err(NetworkError::NameCollision(_))
        ));
    }

    #[test]
    fn snapshot_round_trips() {
        for build in [
            SkillNetwork::new as fn() -> SkillNetwork,
            || {
                let mut n = seed_network();
                n.record_outcome("mineCoal", true).unwrap();
                n
            },
            seed_network,
        ] {
            let net = build();
            let snap = net.snapshot();
            let restored = SkillNetwork::restore(&snap);
            assert_eq!(net, restored);
        }
    }

    #[test]
    fn serialization_round_trips_counts_and_aliases() {
        let mut net = seed_network();
        net.record_outcome("mineCoal", true).unwrap();
        net.record_outcome("mineCoal", false).unwrap();
        net.demote_to_alias("gatherCoal", "mineCoal").unwrap();
        let bytes = net.serialize();
        let back = SkillNetwork::deserialize(&bytes).unwrap();
        assert_eq!(net, back);
        assert_eq!(back.node("mineCoal").unwrap().n_exec, 2);
        assert_eq!(
            back.node("gatherCoal").unwrap().alias_of.as_deref(),
            Some("mineCoal")
        );
    }

    #[test]
    fn deserialize_rejects_garbage_and_bad_versions() {
        assert!(matches!(
            SkillNetwork::deserialize(b"not json"),
            Err(NetworkError::Corrupt(_))
        ));
        let doc = r#"{"version": 99, "generation": 0, "nodes": []}"#;
        assert!(matches!(
            SkillNetwork::deserialize(doc.as_bytes()),
            Err(NetworkError::Version(99))
        ));
    }
}
