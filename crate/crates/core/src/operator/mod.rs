//! Pluggable operator backends: reflect, codegen, and forward planning.
//!
//! Requests are self-contained JSON-serializable views (skill sources,
//! frame summaries, recipe and provider indexes), so a backend can run in
//! or out of process. The oracle backend is deterministic and rule-based;
//! the HTTP backend posts the same payloads to a sidecar endpoint and
//! validates the responses against the same schemas.

mod http;
mod oracle;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{AstPath, Bindings, Edit};
use crate::executor::SynthesisRequest;
use crate::network::SkillNetwork;
use crate::world::{PrimitiveFeedback, RecipeTable, WorldState};

pub use http::HttpOperator;
pub use oracle::OracleOperator;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("operator transport failed: {0}")]
    Transport(String),
    #[error("operator response violates the schema: {0}")]
    Schema(String),
    #[error("operator timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("operator cannot solve: {0}")]
    Unsolvable(String),
}

/// The three operator calls, over wire-level request/response types.
pub trait OperatorBackend {
    fn reflect(&mut self, request: &ReflectRequest) -> Result<ReflectResponse, OperatorError>;
    fn codegen(&mut self, request: &SynthesisRequest) -> Result<String, OperatorError>;
    fn forward(&mut self, request: &PlanRequest) -> Result<PlanResponse, OperatorError>;

    /// Drains accumulated warnings (fallbacks, rejected responses).
    fn take_warnings(&mut self) -> Vec<String> {
        Vec::new()
    }
}

// ---------------------------------------------------------------------------
// reflect wire types

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReflectRequest {
    pub skill: String,
    pub source: String,
    pub feedback: FeedbackView,
    pub frame: FrameView,
    /// Static contracts of the skills this body calls.
    pub callees: BTreeMap<String, CalleeView>,
    pub recipes: RecipeSummary,
    pub providers: ProviderIndex,
}

/// Why this skill is being reflected on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeedbackView {
    /// Its trace frame failed; the evidence is in the frame view.
    FrameFailed,
    /// A dependent ran short of an item this skill's post had promised.
    UnderDelivered {
        item: String,
        deficit: i64,
        weight: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameView {
    pub status: String,
    pub bindings: Bindings,
    pub failing_path: Option<AstPath>,
    pub feedback: Option<PrimitiveFeedback>,
    pub violations: Vec<ViolationView>,
    pub children: Vec<ChildFrameView>,
}

/// A postcondition atom that did not hold at frame exit, with the numbers
/// already evaluated against the exit state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationView {
    pub atom: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<String>,
    #[serde(default)]
    pub need: i64,
    #[serde(default)]
    pub have: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChildFrameView {
    pub skill: String,
    pub status: String,
    /// Instantiated postcondition atoms the call promised.
    pub post: Vec<String>,
    /// Terminal failure evidence, when the child (or a descendant) failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shortage: Option<Shortage>,
}

/// The deepest concrete evidence under a failed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Shortage {
    Item { item: String, need: i64, have: i64 },
    Station { station: String },
    Tier { required: i64 },
    Capacity { item: String },
    Other { message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalleeView {
    pub params: Vec<(String, String)>,
    pub pre: Vec<String>,
    pub post: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RecipeSummary {
    /// item -> tool tier needed to gather it
    pub gatherable: BTreeMap<String, i64>,
    pub recipes: BTreeMap<String, RecipeView>,
    pub stations: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecipeView {
    /// "craft" or "smelt"
    pub kind: String,
    pub yield_per_batch: i64,
    pub inputs: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station: Option<String>,
}

/// Skills that establish stations or tool tiers, best value first.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProviderIndex {
    pub station: BTreeMap<String, Vec<String>>,
    pub tier: Vec<(i64, Vec<String>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientType {
    Logic,
    ParameterSemantic,
    PhysicalConstraint,
    ErrorHandling,
    Interface,
    ResourceManagement,
    Precondition,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReflectResponse {
    pub self_issues: Vec<IssueView>,
    pub child_issues: Vec<ChildIssueView>,
    pub reasoning: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IssueView {
    pub gradient_type: GradientType,
    pub magnitude: f64,
    pub direction: String,
    pub edit: Edit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChildIssueView {
    pub child_skill: String,
    pub issue_description: String,
    pub weight: f64,
    /// Present when the issue is an under-delivery the child should absorb.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub under_delivered: Option<UnderDelivery>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnderDelivery {
    pub item: String,
    pub deficit: i64,
}

impl ReflectResponse {
    /// Schema validation shared by every backend.
    pub fn validate(&self) -> Result<(), OperatorError> {
        for issue in &self.self_issues {
            if !(0.0..=1.0).contains(&issue.magnitude) {
                return Err(OperatorError::Schema(format!(
                    "issue magnitude {} outside [0, 1]",
                    issue.magnitude
                )));
            }
        }
        for child in &self.child_issues {
            if !(0.0..=1.0).contains(&child.weight) {
                return Err(OperatorError::Schema(format!(
                    "child weight {} outside [0, 1]",
                    child.weight
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// forward-plan wire types

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanRequest {
    /// Unground atoms in condition syntax.
    pub atoms: Vec<String>,
    pub state: StateView,
    pub recipes: RecipeSummary,
    /// Names already taken in the network.
    pub existing: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateView {
    pub inventory: BTreeMap<String, i64>,
    pub stations: Vec<String>,
    pub tool_tier: i64,
    pub field: BTreeMap<String, i64>,
}

impl StateView {
    pub fn of(state: &WorldState) -> Self {
        StateView {
            inventory: state.inventory.clone(),
            stations: state.stations.iter().cloned().collect(),
            tool_tier: state.tool_tier,
            field: state.field.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlanResponse {
    /// New skill sources to insert before the steps run.
    pub new_skills: Vec<String>,
    pub steps: Vec<PlanStepView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanStepView {
    pub skill: String,
    /// Ground argument expressions in source syntax, parameter order.
    pub args: Vec<String>,
}

pub fn recipe_summary(recipes: &RecipeTable) -> RecipeSummary {
    RecipeSummary {
        gatherable: recipes
            .gather
            .iter()
            .map(|(item, spec)| (item.clone(), spec.tool_tier))
            .collect(),
        recipes: recipes
            .recipes
            .iter()
            .map(|(item, recipe)| {
                (
                    item.clone(),
                    RecipeView {
                        kind: match recipe.kind {
                            crate::world::RecipeKind::Craft => "craft".into(),
                            crate::world::RecipeKind::Smelt => "smelt".into(),
                        },
                        yield_per_batch: recipe.count,
                        inputs: recipe.inputs.clone(),
                        station: recipe.station.clone(),
                    },
                )
            })
            .collect(),
        stations: recipes.station_kinds(),
    }
}

/// Non-alias skills whose posts establish stations or tool tiers, ordered by
/// descending value then name, for the oracle's ensure-call selection.
pub fn provider_index(net: &SkillNetwork) -> ProviderIndex {
    let mut station: BTreeMap<String, Vec<(f64, String)>> = BTreeMap::new();
    let mut tier: BTreeMap<i64, Vec<(f64, String)>> = BTreeMap::new();
    for (id, node) in net.nodes() {
        if node.is_alias() {
            continue;
        }
        for atom in node.program.post.iter() {
            match atom {
                crate::dsl::Condition::StationPlaced { station: s } => {
                    if let crate::dsl::Expr::Ident(kind) = s {
                        if node.program.param(kind).is_none() {
                            station
                                .entry(kind.clone())
                                .or_default()
                                .push((node.value(), id.clone()));
                        }
                    }
                }
                crate::dsl::Condition::ToolTierAtLeast { tier: t } => {
                    tier.entry(*t).or_default().push((node.value(), id.clone()));
                }
                _ => {}
            }
        }
    }
    let order = |mut v: Vec<(f64, String)>| -> Vec<String> {
        v.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        v.into_iter().map(|(_, id)| id).collect()
    };
    ProviderIndex {
        station: station.into_iter().map(|(k, v)| (k, order(v))).collect(),
        tier: tier.into_iter().map(|(k, v)| (k, order(v))).collect(),
    }
}

/// Backend wrapper that falls back to the oracle when the primary backend
/// errors out, recording a warning per fallback.
pub struct WithFallback<P> {
    pub primary: P,
    pub oracle: OracleOperator,
    pub warnings: Vec<String>,
}

impl<P: OperatorBackend> WithFallback<P> {
    pub fn new(primary: P) -> Self {
        WithFallback {
            primary,
            oracle: OracleOperator,
            warnings: Vec::new(),
        }
    }
}

impl<P: OperatorBackend> OperatorBackend for WithFallback<P> {
    fn reflect(&mut self, request: &ReflectRequest) -> Result<ReflectResponse, OperatorError> {
        match self.primary.reflect(request) {
            Ok(resp) => Ok(resp),
            Err(e) => {
                self.warnings.push(format!("reflect fell back to oracle: {e}"));
                self.oracle.reflect(request)
            }
        }
    }

    fn codegen(&mut self, request: &SynthesisRequest) -> Result<String, OperatorError> {
        match self.primary.codegen(request) {
            Ok(resp) => Ok(resp),
            Err(e) => {
                self.warnings.push(format!("codegen fell back to oracle: {e}"));
                self.oracle.codegen(request)
            }
        }
    }

    fn forward(&mut self, request: &PlanRequest) -> Result<PlanResponse, OperatorError> {
        match self.primary.forward(request) {
            Ok(resp) => Ok(resp),
            Err(e) => {
                self.warnings.push(format!("forward plan fell back to oracle: {e}"));
                self.oracle.forward(request)
            }
        }
    }

    fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }
}

// ---------------------------------------------------------------------------
// adapters bridging the wire trait onto the planner/executor plug points

/// Adapts an [`OperatorBackend`] to the planner's forward-planning hook.
pub struct ForwardAdapter<'a, B: ?Sized> {
    pub backend: &'a mut B,
    pub recipes: &'a RecipeTable,
}

impl<B: OperatorBackend + ?Sized> crate::planner::ForwardPlanner for ForwardAdapter<'_, B> {
    fn forward_plan(
        &mut self,
        atoms: &[crate::dsl::Condition],
        state: &WorldState,
        net: &SkillNetwork,
    ) -> Result<crate::planner::ForwardProposal, String> {
        let request = PlanRequest {
            atoms: atoms.iter().map(crate::dsl::print_condition).collect(),
            state: StateView::of(state),
            recipes: recipe_summary(self.recipes),
            existing: net.ids().cloned().collect(),
        };
        let response = self.backend.forward(&request).map_err(|e| e.to_string())?;
        let mut new_skills = Vec::new();
        for source in &response.new_skills {
            let program = crate::dsl::parse_skill(source)
                .map_err(|e| format!("proposed skill does not parse: {e}"))?;
            new_skills.push(program);
        }
        let mut steps = Vec::new();
        for step in &response.steps {
            let program = new_skills
                .iter()
                .find(|p| p.name == step.skill)
                .cloned()
                .or_else(|| net.node(&step.skill).map(|n| n.program.clone()))
                .ok_or_else(|| format!("step references unknown skill `{}`", step.skill))?;
            if program.params.len() != step.args.len() {
                return Err(format!(
                    "step `{}` has {} args, expected {}",
                    step.skill,
                    step.args.len(),
                    program.params.len()
                ));
            }
            let mut bindings = Bindings::new();
            for (param, arg) in program.params.iter().zip(&step.args) {
                let expr = crate::dsl::parse_expr(arg).map_err(|e| e.to_string())?;
                let value = match expr {
                    crate::dsl::Expr::Int(n) => crate::dsl::Value::Int(n),
                    crate::dsl::Expr::Ident(k) => crate::dsl::Value::Kind(k),
                    other => {
                        return Err(format!(
                            "step argument `{}` must be ground",
                            crate::dsl::print_expr(&other)
                        ))
                    }
                };
                bindings.insert(param.name.clone(), value);
            }
            steps.push(crate::planner::PlanStep {
                skill: step.skill.clone(),
                bindings,
            });
        }
        Ok(crate::planner::ForwardProposal { new_skills, steps })
    }
}

/// Adapts an [`OperatorBackend`] to the executor's composite synthesizer.
pub struct ComposerAdapter<'a, B: ?Sized> {
    pub backend: &'a mut B,
}

impl<B: OperatorBackend + ?Sized> crate::executor::ComposerBackend for ComposerAdapter<'_, B> {
    fn synthesize(&mut self, request: &SynthesisRequest) -> Result<String, String> {
        self.backend.codegen(request).map_err(|e| e.to_string())
    }
}
