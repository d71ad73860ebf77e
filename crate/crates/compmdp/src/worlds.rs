//! Builders for the running example worlds: slippery grid navigation,
//! sequential region visiting, and the two-zone fetch-and-place arm.
//!
//! Grid cells are labeled `x{col}y{row}` with the origin at the top left;
//! each cell carries five actions — up, down, left, right, stay — where a
//! move into a wall keeps the agent in place. With slip, the intended
//! move keeps mass 1−slip and the two lateral neighbors get slip/2 each.
//! The reward is 1 on every action that enters the goal cell from a
//! different cell, so an absorbing goal is worth γ^(d−1) from distance d.
//! Obstacles are validated but not removed: puncturing is the caller's
//! explicit step.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::composition::{cartesian_product, pushout, CompositionError, Span};
use crate::dist::Dist;
use crate::label::{ActionId, Label, StateId};
use crate::mdp::FiniteMdp;
use crate::morphism::{canonical_subprocess, MdpMorphism, MorphismError};
use crate::puncture::puncture;
use crate::symmetry::GroupElement;
use crate::zigzag::{Bridge, ZigZagDiagram, ZigZagError};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cell ({0}, {1}) is outside a {2}×{3} grid")]
    OutOfBounds(u32, u32, u32, u32),
    #[error("slip probability {0} is outside [0, 1)")]
    BadSlip(f64),
    #[error("region cell ({0}, {1}) coincides with an obstacle")]
    RegionOnObstacle(u32, u32),
    #[error("region cell ({0}, {1}) is listed twice")]
    DuplicateRegion(u32, u32),
    #[error("the overlap region is empty")]
    EmptyOverlap,
    #[error("the shelf cell may not lie in the overlap region")]
    ShelfOnOverlap,
    #[error(transparent)]
    ZigZag(#[from] ZigZagError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Morphism(#[from] MorphismError),
}

pub const DIRECTIONS: [&str; 5] = ["up", "down", "left", "right", "stay"];

/// The state identifier of a grid cell.
pub fn grid_cell(x: u32, y: u32) -> StateId {
    StateId::atom(format!("x{x}y{y}"))
}

/// The action identifier of a move at a grid cell.
pub fn grid_action(dir: &str, x: u32, y: u32) -> ActionId {
    ActionId::atom(format!("{dir}@x{x}y{y}"))
}

fn prefixed_cell(prefix: &str, x: u32, y: u32) -> StateId {
    StateId::atom(format!("{prefix}x{x}y{y}"))
}

fn prefixed_action(prefix: &str, dir: &str, x: u32, y: u32) -> ActionId {
    ActionId::atom(format!("{dir}@{prefix}x{x}y{y}"))
}

fn step(x: u32, y: u32, dir: &str, width: u32, height: u32) -> (u32, u32) {
    match dir {
        "up" if y > 0 => (x, y - 1),
        "down" if y + 1 < height => (x, y + 1),
        "left" if x > 0 => (x - 1, y),
        "right" if x + 1 < width => (x + 1, y),
        // Wall bounces and "stay" keep the agent in place.
        _ => (x, y),
    }
}

fn laterals(dir: &str) -> [&'static str; 2] {
    match dir {
        "up" | "down" => ["left", "right"],
        _ => ["up", "down"],
    }
}

fn grid(width: u32, height: u32, prefix: &str, goal: Option<(u32, u32)>, slip: f64) -> FiniteMdp {
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut reward = BTreeMap::new();
    for y in 0..height {
        for x in 0..width {
            states.push(prefixed_cell(prefix, x, y));
            for dir in DIRECTIONS {
                let id = prefixed_action(prefix, dir, x, y);
                let mut masses: Vec<((u32, u32), f64)> = Vec::new();
                if dir == "stay" || slip == 0.0 {
                    masses.push((step(x, y, dir, width, height), 1.0));
                } else {
                    masses.push((step(x, y, dir, width, height), 1.0 - slip));
                    for lateral in laterals(dir) {
                        masses.push((step(x, y, lateral, width, height), slip / 2.0));
                    }
                }
                let dist = Dist::from_pairs(
                    masses
                        .iter()
                        .map(|((tx, ty), p)| (prefixed_cell(prefix, *tx, *ty), *p)),
                )
                .expect("grid masses are nonnegative");
                let enters_goal = goal.is_some_and(|g| {
                    (x, y) != g && masses.iter().any(|(target, _)| *target == g)
                });
                reward.insert(id.clone(), if enters_goal { 1.0 } else { 0.0 });
                actions.push((id, prefixed_cell(prefix, x, y), dist));
            }
        }
    }
    FiniteMdp::new(states, actions, Some(reward))
}

/// A rectangular grid world. Obstacles and the goal are validated against
/// the bounds but obstacles are not removed — puncture the result to
/// enforce them. Every cell keeps all five actions; in a 1×1 grid the
/// four bounced moves behave exactly like the stay action.
pub fn grid_world(
    width: u32,
    height: u32,
    obstacles: &[(u32, u32)],
    goal: (u32, u32),
    slip: f64,
) -> Result<FiniteMdp, WorldError> {
    if !(0.0..1.0).contains(&slip) {
        return Err(WorldError::BadSlip(slip));
    }
    for &(x, y) in obstacles.iter().chain([&goal]) {
        if x >= width || y >= height {
            return Err(WorldError::OutOfBounds(x, y, width, height));
        }
    }
    Ok(grid(width, height, "", Some(goal), slip))
}

/// Deletes every action anchored at one of the given cells that carries
/// mass off its own cell, leaving the cells absorbing.
pub fn make_absorbing(m: &FiniteMdp, cells: &BTreeSet<StateId>) -> FiniteMdp {
    let keep: BTreeSet<ActionId> = m
        .actions()
        .filter(|a| {
            let anchor = m.anchor(a).expect("validated world");
            if !cells.contains(anchor) {
                return true;
            }
            m.transition(a)
                .is_some_and(|d| d.iter().all(|(s, _)| s == anchor))
        })
        .cloned()
        .collect();
    let states = m.states().cloned().collect();
    m.restrict(&states, &keep)
}

/// Deletes every action anchored at the cell except the listed ones, so
/// a point bridge there is a full subprocess. Wall bounces self-loop like
/// stay, so merely absorbing a boundary cell would keep them around.
fn keep_only_at(m: &FiniteMdp, cell: &StateId, keep: &[ActionId]) -> FiniteMdp {
    let actions: BTreeSet<ActionId> = m
        .actions()
        .filter(|a| m.anchor(a) != Some(cell) || keep.contains(a))
        .cloned()
        .collect();
    let states = m.states().cloned().collect();
    m.restrict(&states, &actions)
}

fn point_bridge(
    left_env: &FiniteMdp,
    right_env: &FiniteMdp,
    cell: &StateId,
    stay: &ActionId,
) -> Result<Bridge, ZigZagError> {
    let pt = FiniteMdp::point();
    let leg = |env: &FiniteMdp| {
        MdpMorphism::new(
            pt.clone(),
            env.clone(),
            [(StateId::atom("pt"), cell.clone())].into(),
            [(ActionId::atom("pt"), stay.clone())].into(),
        )
        .preserving_reward()
    };
    Bridge::new(leg(left_env), leg(right_env))
}

/// A task sequence on one grid: visit the given region cells in order,
/// always avoiding the obstacles. Environment i rewards entering region
/// i and has the region's move actions removed (so its bridge is a full
/// subprocess); a final environment with zero reward closes the chain.
/// Bridges are constant MDPs mapped to the region cell in both
/// neighbors.
pub fn sequential_regions(
    width: u32,
    height: u32,
    obstacles: &[(u32, u32)],
    regions: &[(u32, u32)],
    slip: f64,
) -> Result<ZigZagDiagram, WorldError> {
    let mut seen = BTreeSet::new();
    for &(x, y) in regions {
        if x >= width || y >= height {
            return Err(WorldError::OutOfBounds(x, y, width, height));
        }
        if obstacles.contains(&(x, y)) {
            return Err(WorldError::RegionOnObstacle(x, y));
        }
        if !seen.insert((x, y)) {
            return Err(WorldError::DuplicateRegion(x, y));
        }
    }
    let obstacle_states: BTreeSet<StateId> =
        obstacles.iter().map(|&(x, y)| grid_cell(x, y)).collect();

    let mut environments = Vec::new();
    for &region in regions {
        let full = grid_world(width, height, obstacles, region, slip)?;
        let (punctured, _) = puncture(&full, &obstacle_states);
        environments.push(keep_only_at(
            &punctured,
            &grid_cell(region.0, region.1),
            &[grid_action("stay", region.0, region.1)],
        ));
    }
    // Final environment: the same world with nothing left to do.
    let tail = grid(width, height, "", None, slip);
    let (tail, _) = puncture(&tail, &obstacle_states);
    environments.push(tail);

    let mut bridges = Vec::new();
    for (i, &(x, y)) in regions.iter().enumerate() {
        bridges.push(point_bridge(
            &environments[i],
            &environments[i + 1],
            &grid_cell(x, y),
            &grid_action("stay", x, y),
        )?);
    }
    Ok(ZigZagDiagram::new(environments, bridges)?)
}

/// The mirror symmetry of a grid world about its vertical axis: cells
/// reflect in x, the left and right actions swap.
pub fn grid_mirror_generator(width: u32, height: u32) -> GroupElement {
    let mut state_perm = BTreeMap::new();
    let mut action_perm = BTreeMap::new();
    for y in 0..height {
        for x in 0..width {
            let mx = width - 1 - x;
            state_perm.insert(grid_cell(x, y), grid_cell(mx, y));
            for dir in DIRECTIONS {
                let mirrored_dir = match dir {
                    "left" => "right",
                    "right" => "left",
                    other => other,
                };
                action_perm.insert(grid_action(dir, x, y), grid_action(mirrored_dir, mx, y));
            }
        }
    }
    GroupElement {
        state_perm,
        action_perm,
    }
}

/// The two-zone fetch world: a box whose state records the arm tip and
/// the object position, glued through the box-exit overlap onto an
/// outside grid where arm and object travel together, ending at a shelf.
///
/// `overlap` pairs a box cell with the outside cell it coincides with.
/// The object is stationary: away from the diagonal only the arm moves,
/// and on the diagonal (object fetched) the pair moves jointly, the
/// separating actions having been deleted. The resulting diagram is
/// forward-moving.
pub fn fetch_and_place(
    box_width: u32,
    box_height: u32,
    outside_width: u32,
    outside_height: u32,
    overlap: &[((u32, u32), (u32, u32))],
    shelf: (u32, u32),
) -> Result<ZigZagDiagram, WorldError> {
    if overlap.is_empty() {
        return Err(WorldError::EmptyOverlap);
    }
    for &((bx, by), (ox, oy)) in overlap {
        if bx >= box_width || by >= box_height {
            return Err(WorldError::OutOfBounds(bx, by, box_width, box_height));
        }
        if ox >= outside_width || oy >= outside_height {
            return Err(WorldError::OutOfBounds(ox, oy, outside_width, outside_height));
        }
    }
    if shelf.0 >= outside_width || shelf.1 >= outside_height {
        return Err(WorldError::OutOfBounds(
            shelf.0,
            shelf.1,
            outside_width,
            outside_height,
        ));
    }
    if overlap.iter().any(|&(_, o)| o == shelf) {
        return Err(WorldError::ShelfOnOverlap);
    }

    // The joint box process: arm position × object position.
    let arm = grid(box_width, box_height, "b", None, 0.0);
    let product = cartesian_product(&arm, &arm).product;
    let diagonal: BTreeSet<StateId> = product
        .states()
        .filter(|s| match s.label() {
            Label::Pair(a, b) => a == b,
            _ => false,
        })
        .cloned()
        .collect();
    // Stationary object: away from the diagonal only arm moves (the
    // object factor stays); on the diagonal only the non-separating joint
    // moves survive.
    let object_stay = |a: &ActionId| -> bool {
        match a.label() {
            Label::Pair(_, obj) => match obj.as_ref() {
                Label::Atom(name) => name.starts_with("stay@"),
                _ => false,
            },
            _ => false,
        }
    };
    let kept: BTreeSet<ActionId> = product
        .actions()
        .filter(|a| {
            let anchor = product.anchor(a).expect("validated product");
            if diagonal.contains(anchor) {
                product
                    .transition(a)
                    .is_some_and(|d| d.iter().all(|(s, _)| diagonal.contains(s)))
            } else {
                object_stay(a)
            }
        })
        .cloned()
        .collect();
    let all_states: BTreeSet<StateId> = product.states().cloned().collect();
    let boxed = product.restrict(&all_states, &kept);
    // Reward 1 on fetching: entering the diagonal from off it.
    let box_reward: BTreeMap<ActionId, f64> = boxed
        .actions()
        .map(|a| {
            let anchor = boxed.anchor(a).unwrap();
            let fetches = !diagonal.contains(anchor)
                && boxed
                    .transition(a)
                    .is_some_and(|d| d.iter().any(|(s, _)| diagonal.contains(s)));
            (a.clone(), if fetches { 1.0 } else { 0.0 })
        })
        .collect();
    let boxed = boxed.with_reward(Some(box_reward));

    let (fetch, fetch_incl) = canonical_subprocess(&boxed, &diagonal);

    // The outside world: arm and object travel together, one position.
    let outside = grid(outside_width, outside_height, "o", Some(shelf), 0.0);

    // The overlap: one absorbing cell per shared position, mapped to the
    // diagonal pair in the box and to the plain cell outside.
    let mut ov_states = Vec::new();
    let mut ov_actions = Vec::new();
    let mut ov_reward = BTreeMap::new();
    let mut to_fetch_s = BTreeMap::new();
    let mut to_fetch_a = BTreeMap::new();
    let mut to_out_s = BTreeMap::new();
    let mut to_out_a = BTreeMap::new();
    for (i, &((bx, by), (ox, oy))) in overlap.iter().enumerate() {
        let ov = StateId::atom(format!("ov{i}"));
        let ov_stay = ActionId::atom(format!("stay@ov{i}"));
        ov_states.push(ov.clone());
        ov_actions.push((ov_stay.clone(), ov.clone(), Dist::point(ov.clone())));
        ov_reward.insert(ov_stay.clone(), 0.0);
        let box_cell = prefixed_cell("b", bx, by);
        let box_stay = prefixed_action("b", "stay", bx, by);
        to_fetch_s.insert(ov.clone(), box_cell.pair(&box_cell));
        to_fetch_a.insert(ov_stay.clone(), box_stay.pair(&box_stay));
        to_out_s.insert(ov, prefixed_cell("o", ox, oy));
        to_out_a.insert(ov_stay, prefixed_action("o", "stay", ox, oy));
    }
    let overlap_mdp = FiniteMdp::new(ov_states, ov_actions, Some(ov_reward));
    let into_fetch = MdpMorphism::new(
        overlap_mdp.clone(),
        fetch.clone(),
        to_fetch_s,
        to_fetch_a,
    )
    .preserving_reward();
    let into_outside =
        MdpMorphism::new(overlap_mdp, outside.clone(), to_out_s, to_out_a).preserving_reward();

    // Move = Fetch ∪_Overlap Outside, with the shelf made absorbing so
    // the final placement bridge is full.
    let moved = pushout(&Span::new(into_fetch, into_outside)?)?;
    let shelf_in_move = StateId(Label::right(
        prefixed_cell("o", shelf.0, shelf.1).0.clone(),
    ));
    let shelf_stay_in_move = ActionId(Label::right(
        prefixed_action("o", "stay", shelf.0, shelf.1).0.clone(),
    ));
    let move_env = keep_only_at(&moved.glued, &shelf_in_move, &[shelf_stay_in_move.clone()]);

    // Bridge 0: Fetch into the box and into Move.
    let fetch_left = fetch_incl;
    let fetch_right = {
        let mut m = MdpMorphism::new(
            fetch.clone(),
            move_env.clone(),
            moved.incl_left.state_map().clone(),
            moved.incl_left.action_map().clone(),
        );
        if moved.incl_left.preserves_reward() {
            m = m.preserving_reward();
        }
        m
    };
    let fetch_bridge = Bridge::new(fetch_left, fetch_right)?;

    // Bridge 1: the placement point at the shelf, closing with the
    // constant MDP.
    let pt = FiniteMdp::point();
    let place_left = MdpMorphism::new(
        pt.clone(),
        move_env.clone(),
        [(StateId::atom("pt"), shelf_in_move)].into(),
        [(ActionId::atom("pt"), shelf_stay_in_move)].into(),
    )
    .preserving_reward();
    let place_right = MdpMorphism::identity(pt.clone());
    let place_bridge = Bridge::new(place_left, place_right)?;

    Ok(ZigZagDiagram::new(
        vec![boxed, move_env, pt],
        vec![fetch_bridge, place_bridge],
    )?)
}
