//! Zig-zag diagrams: sequential task completion as iterated gluing.
//!
//! A diagram alternates reward-carrying environments M₀…Mₙ with bridge
//! subprocesses N₀…Nₙ₋₁, each bridge mapping into its two neighboring
//! environments. Reaching a bridge region completes a task; the next
//! environment continues from there. The composite is the iterated
//! pushout C₀ = M₀, Cᵢ = Cᵢ₋₁ ∪_{Nᵢ₋₁} Mᵢ.
//!
//! The diagram is forward-moving when each left leg is a full subprocess:
//! once an agent reaches a bridge region, every action available there
//! belongs to the bridge, so it cannot fall back into the earlier part of
//! the environment. The value function is monotonic when, at every
//! environment state, the actions maximizing the one-step backup under
//! the composite's optimal values are exactly those maximizing it under
//! the environment's own optimal values. Under these two conditions,
//! stitching the independently learned per-environment policies yields an
//! optimal policy on the composite — which [`verify_componentwise`]
//! checks numerically against the value-iteration oracle.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::composition::{pushout, CompositionError, Span};
use crate::label::{ActionId, StateId};
use crate::mdp::FiniteMdp;
use crate::morphism::{MdpMorphism, MorphismError};
use crate::solver::{policy_evaluation, value_iteration, SolveOptions, SolverError};

#[derive(Debug, Error)]
pub enum ZigZagError {
    #[error("malformed diagram: {0}")]
    Shape(String),
    #[error("truncation index {index} out of range for {environments} environments")]
    IndexOutOfRange { index: usize, environments: usize },
    #[error("making the diagram forward-moving removed action {action} needed by bridge {bridge}")]
    EmptiedBridge { bridge: usize, action: ActionId },
    #[error("solver did not converge")]
    SolverDiverged,
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Morphism(#[from] MorphismError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// A bridge between consecutive environments: one subprocess mapped into
/// both of them.
#[derive(Debug, Clone)]
pub struct Bridge {
    left: MdpMorphism,
    right: MdpMorphism,
}

impl Bridge {
    pub fn new(left: MdpMorphism, right: MdpMorphism) -> Result<Self, ZigZagError> {
        if left.source() != right.source() {
            return Err(ZigZagError::Shape(
                "bridge legs have different sources".into(),
            ));
        }
        for (name, leg) in [("left", &left), ("right", &right)] {
            let report = leg.check();
            if !report.is_empty() {
                return Err(ZigZagError::Shape(format!(
                    "bridge {name} leg is invalid: {report}"
                )));
            }
            if !leg.is_subprocess() {
                return Err(ZigZagError::Shape(format!(
                    "bridge {name} leg is not a subprocess"
                )));
            }
        }
        Ok(Bridge { left, right })
    }

    /// Into the earlier environment.
    pub fn left(&self) -> &MdpMorphism {
        &self.left
    }

    /// Into the later environment.
    pub fn right(&self) -> &MdpMorphism {
        &self.right
    }

    pub fn mdp(&self) -> &FiniteMdp {
        self.left.source()
    }
}

/// An alternating chain of environments and bridges.
#[derive(Debug, Clone)]
pub struct ZigZagDiagram {
    environments: Vec<FiniteMdp>,
    bridges: Vec<Bridge>,
}

impl ZigZagDiagram {
    pub fn new(environments: Vec<FiniteMdp>, bridges: Vec<Bridge>) -> Result<Self, ZigZagError> {
        if environments.is_empty() {
            return Err(ZigZagError::Shape("no environments".into()));
        }
        if bridges.len() + 1 != environments.len() {
            return Err(ZigZagError::Shape(format!(
                "{} environments need {} bridges, got {}",
                environments.len(),
                environments.len() - 1,
                bridges.len()
            )));
        }
        for (i, env) in environments.iter().enumerate() {
            if !env.has_reward() {
                return Err(ZigZagError::Shape(format!(
                    "environment {i} carries no reward"
                )));
            }
        }
        for (i, b) in bridges.iter().enumerate() {
            if b.left.target() != &environments[i] {
                return Err(ZigZagError::Shape(format!(
                    "bridge {i} left leg does not target environment {i}"
                )));
            }
            if b.right.target() != &environments[i + 1] {
                return Err(ZigZagError::Shape(format!(
                    "bridge {i} right leg does not target environment {}",
                    i + 1
                )));
            }
        }
        Ok(ZigZagDiagram {
            environments,
            bridges,
        })
    }

    pub fn environments(&self) -> &[FiniteMdp] {
        &self.environments
    }

    pub fn bridges(&self) -> &[Bridge] {
        &self.bridges
    }

    /// The number of bridges (one less than the number of environments).
    pub fn len(&self) -> usize {
        self.bridges.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The iterated-pushout composite together with the inclusion of each
/// environment into it.
#[derive(Debug, Clone)]
pub struct Composite {
    pub mdp: FiniteMdp,
    pub inclusions: Vec<MdpMorphism>,
}

/// Builds the composite left to right, tracking every environment's
/// inclusion through the successive gluings. Reward clashes on identified
/// bridge actions surface as errors.
pub fn build_composite(z: &ZigZagDiagram) -> Result<Composite, ZigZagError> {
    let mut mdp = z.environments[0].clone();
    let mut inclusions = vec![MdpMorphism::identity(mdp.clone())];
    for (i, bridge) in z.bridges.iter().enumerate() {
        let into_current = bridge.left.then(&inclusions[i])?;
        let span = Span::new(into_current, bridge.right.clone())?;
        let po = pushout(&span)?;
        let mut updated = Vec::with_capacity(inclusions.len() + 1);
        for incl in &inclusions {
            updated.push(incl.then(&po.incl_left)?);
        }
        updated.push(po.incl_right);
        inclusions = updated;
        mdp = po.glued;
    }
    Ok(Composite { mdp, inclusions })
}

/// The sub-diagram starting at environment `index`.
pub fn truncate(z: &ZigZagDiagram, index: usize) -> Result<ZigZagDiagram, ZigZagError> {
    if index >= z.environments.len() {
        return Err(ZigZagError::IndexOutOfRange {
            index,
            environments: z.environments.len(),
        });
    }
    Ok(ZigZagDiagram {
        environments: z.environments[index..].to_vec(),
        bridges: z.bridges[index..].to_vec(),
    })
}

/// True iff every left leg is a full subprocess of its environment.
pub fn is_forward_moving(z: &ZigZagDiagram) -> bool {
    z.bridges.iter().all(|b| b.left.is_full_subprocess())
}

/// Rebuilds each environment so that its bridge region keeps only the
/// bridge's own actions, deleting everything else anchored there — in
/// particular every action that could move the agent off the region. The
/// result is forward-moving. Fails if a deletion would break the previous
/// bridge's right leg.
pub fn make_forward_moving(z: &ZigZagDiagram) -> Result<ZigZagDiagram, ZigZagError> {
    let mut environments = Vec::with_capacity(z.environments.len());
    for (i, env) in z.environments.iter().enumerate() {
        let rebuilt = match z.bridges.get(i) {
            Some(bridge) => {
                let region = bridge.left.state_image();
                let bridge_actions = bridge.left.action_image();
                let keep: std::collections::BTreeSet<ActionId> = env
                    .actions()
                    .filter(|a| {
                        let anchored_in_region =
                            env.anchor(a).is_some_and(|s| region.contains(s));
                        !anchored_in_region || bridge_actions.contains(*a)
                    })
                    .cloned()
                    .collect();
                let states = env.states().cloned().collect();
                env.restrict(&states, &keep)
            }
            None => env.clone(),
        };
        environments.push(rebuilt);
    }
    let mut bridges = Vec::with_capacity(z.bridges.len());
    for (i, bridge) in z.bridges.iter().enumerate() {
        for a in bridge.right.action_image() {
            if !environments[i + 1].has_action(&a) {
                return Err(ZigZagError::EmptiedBridge { bridge: i, action: a });
            }
        }
        let mut left = MdpMorphism::new(
            bridge.left.source_arc(),
            environments[i].clone(),
            bridge.left.state_map().clone(),
            bridge.left.action_map().clone(),
        );
        if bridge.left.preserves_reward() {
            left = left.preserving_reward();
        }
        let mut right = MdpMorphism::new(
            bridge.right.source_arc(),
            environments[i + 1].clone(),
            bridge.right.state_map().clone(),
            bridge.right.action_map().clone(),
        );
        if bridge.right.preserves_reward() {
            right = right.preserving_reward();
        }
        bridges.push(Bridge::new(left, right)?);
    }
    ZigZagDiagram::new(environments, bridges)
}

fn solve_env(m: &FiniteMdp, opts: SolveOptions) -> Result<crate::solver::Solution, ZigZagError> {
    let sol = value_iteration(m, opts)?;
    if !sol.converged {
        return Err(ZigZagError::SolverDiverged);
    }
    Ok(sol)
}

/// One-step backup of an environment action against a value function
/// keyed by composite states, read through the environment's inclusion.
fn component_backup(
    env: &FiniteMdp,
    incl: Option<&MdpMorphism>,
    values: &BTreeMap<StateId, f64>,
    a: &ActionId,
    gamma: f64,
) -> f64 {
    let r = env.reward(a).unwrap_or(0.0);
    let future: f64 = env
        .transition(a)
        .map(|d| {
            d.iter()
                .map(|(s, p)| {
                    let key = match incl {
                        Some(i) => i.apply_state(s).expect("total inclusion"),
                        None => s,
                    };
                    p * values.get(key).copied().unwrap_or(0.0)
                })
                .sum()
        })
        .unwrap_or(0.0);
    r + gamma * future
}

fn argmax_set(
    env: &FiniteMdp,
    s: &StateId,
    tie_tol: f64,
    mut q: impl FnMut(&ActionId) -> f64,
) -> Vec<ActionId> {
    let actions = env.actions_at(s);
    let qs: Vec<(ActionId, f64)> = actions.iter().map(|a| (a.clone(), q(a))).collect();
    let best = qs.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    let mut set: Vec<ActionId> = qs
        .into_iter()
        .filter(|(_, v)| *v >= best - tie_tol)
        .map(|(a, _)| a)
        .collect();
    set.sort();
    set
}

/// Decides monotonicity of the composite's optimal value function: at
/// every environment state where the stitched policy actually follows
/// that environment's own policy, the argmax set of the one-step backup
/// under the composite's optimal values must equal (as a set) the argmax
/// set under the environment's own optimal values. States in the
/// environment's exit-bridge region are excluded: there the stitched
/// policy already follows the continuation component, so the
/// environment's solo ties carry no weight. Values are solved three
/// orders of magnitude tighter than `tol` so that genuine ties are
/// classified reliably.
pub fn is_monotonic(z: &ZigZagDiagram, gamma: f64, tol: f64) -> Result<bool, ZigZagError> {
    let composite = build_composite(z)?;
    is_monotonic_with(z, &composite, gamma, tol)
}

fn is_monotonic_with(
    z: &ZigZagDiagram,
    composite: &Composite,
    gamma: f64,
    tol: f64,
) -> Result<bool, ZigZagError> {
    let solve_opts = SolveOptions {
        gamma,
        tol: tol * 1e-3,
        ..Default::default()
    };
    let composite_sol = solve_env(&composite.mdp, solve_opts)?;
    for (i, env) in z.environments.iter().enumerate() {
        let solo = solve_env(env, solve_opts)?;
        let incl = &composite.inclusions[i];
        let exit_region = z
            .bridges
            .get(i)
            .map(|b| b.left.state_image())
            .unwrap_or_default();
        for s in env.states() {
            if env.is_terminal(s) || exit_region.contains(s) {
                continue;
            }
            let under_composite = argmax_set(env, s, tol, |a| {
                component_backup(env, Some(incl), &composite_sol.values, a, gamma)
            });
            let under_solo = argmax_set(env, s, tol, |a| {
                component_backup(env, None, &solo.values, a, gamma)
            });
            if under_composite != under_solo {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Per-environment greedy policies and the global policy they induce on
/// the composite. Overlap states take the action of the highest-index
/// environment touching them: once a task is complete, the agent behaves
/// per the continuation.
#[derive(Debug, Clone)]
pub struct StitchedPolicy {
    pub component_policies: Vec<BTreeMap<StateId, ActionId>>,
    pub global: BTreeMap<StateId, ActionId>,
}

/// Solves every environment independently and maps the greedy policies
/// into the composite along the component inclusions.
pub fn stitch_policies(z: &ZigZagDiagram, gamma: f64) -> Result<StitchedPolicy, ZigZagError> {
    let composite = build_composite(z)?;
    stitch_policies_with(z, &composite, gamma)
}

fn stitch_policies_with(
    z: &ZigZagDiagram,
    composite: &Composite,
    gamma: f64,
) -> Result<StitchedPolicy, ZigZagError> {
    let opts = SolveOptions {
        gamma,
        ..Default::default()
    };
    let mut component_policies = Vec::with_capacity(z.environments.len());
    let mut global: BTreeMap<StateId, ActionId> = BTreeMap::new();
    for (i, env) in z.environments.iter().enumerate() {
        let sol = solve_env(env, opts)?;
        let incl = &composite.inclusions[i];
        for (s, a) in &sol.policy {
            let cs = incl.apply_state(s).expect("total inclusion").clone();
            let ca = incl.apply_action(a).expect("total inclusion").clone();
            global.insert(cs, ca);
        }
        component_policies.push(sol.policy);
    }
    Ok(StitchedPolicy {
        component_policies,
        global,
    })
}

/// Outcome of the componentwise-learning check on a diagram.
#[derive(Debug, Clone)]
pub struct StitchReport {
    pub forward_moving: bool,
    pub monotonic: bool,
    /// Max-norm gap between the stitched policy's value and the optimal
    /// value on the composite; absent when the diagram is not
    /// forward-moving (stitching is undefined there).
    pub gap: Option<f64>,
    pub tol: f64,
    pub pass: bool,
}

impl fmt::Display for StitchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "forward-moving: {}", self.forward_moving)?;
        writeln!(f, "monotonic: {}", self.monotonic)?;
        match self.gap {
            Some(gap) => writeln!(
                f,
                "stitched-policy value gap: {gap:.3e} (tolerance {:.1e})",
                self.tol
            )?,
            None => writeln!(f, "stitched-policy value gap: not computed")?,
        }
        write!(f, "{}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Runs the full componentwise-learning check: evaluates the
/// forward-moving and monotonicity predicates, stitches the independently
/// solved per-environment policies, and measures the max-norm gap between
/// the stitched policy's value and the optimal value of the composite.
/// Passes iff both predicates hold and the gap is within `tol`.
pub fn verify_componentwise(
    z: &ZigZagDiagram,
    gamma: f64,
    tol: f64,
) -> Result<StitchReport, ZigZagError> {
    let forward_moving = is_forward_moving(z);
    if !forward_moving {
        return Ok(StitchReport {
            forward_moving,
            monotonic: false,
            gap: None,
            tol,
            pass: false,
        });
    }
    let composite = build_composite(z)?;
    let monotonic = is_monotonic_with(z, &composite, gamma, tol)?;
    // Solve well below the gap tolerance so measurement noise cannot
    // drown a genuinely zero gap.
    let opts = SolveOptions {
        gamma,
        tol: tol * 1e-3,
        ..Default::default()
    };
    let optimal = solve_env(&composite.mdp, opts)?;
    let stitched = stitch_policies_with(z, &composite, gamma)?;
    let stitched_values = policy_evaluation(&composite.mdp, &stitched.global, opts)?;
    let gap = composite
        .mdp
        .states()
        .map(|s| (optimal.value(s) - stitched_values.get(s).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max);
    Ok(StitchReport {
        forward_moving,
        monotonic,
        gap: Some(gap),
        tol,
        pass: monotonic && gap <= tol,
    })
}
