use std::collections::{HashMap, VecDeque};
use std::f64::consts::{FRAC_PI_2, PI};

use indexmap::IndexMap;
use nalgebra::{Vector2, Vector3};

use super::regions::{candidate_positions_with, classify, facing_yaw, yaw_toward};
use super::relations::{aabb_overlap, holds, wrap_pi, ObjectGeom};
use super::{in_bounds, placement_geom, scaling_factor, Layout, LayoutConfig, LayoutError, Placement};
use crate::gaussian::{yaw_quat, Box3};
use crate::spec::{AnchorRegion, ConstraintGraph, Relation};

const CARDINALS: [f64; 4] = [0.0, FRAC_PI_2, PI, -FRAC_PI_2];

/// Node of maximum degree; ties prefer a CENTER anchor, then the smaller id.
pub fn select_anchor_object(graph: &ConstraintGraph) -> Result<String, LayoutError> {
    let degree = degrees(graph);
    pick_anchor(graph, &degree, |_| true)
        .map(|i| graph.nodes[i].id.clone())
        .ok_or(LayoutError::EmptyGraph)
}

fn degrees(graph: &ConstraintGraph) -> Vec<usize> {
    let index: HashMap<&str, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut d = vec![0; graph.nodes.len()];
    for e in &graph.edges {
        if let Some(&i) = index.get(e.subject.as_str()) {
            d[i] += 1;
        }
        if let Some(&j) = index.get(e.object.as_str()) {
            d[j] += 1;
        }
    }
    d
}

fn pick_anchor(
    graph: &ConstraintGraph,
    degree: &[usize],
    allowed: impl Fn(usize) -> bool,
) -> Option<usize> {
    (0..graph.nodes.len()).filter(|&i| allowed(i)).min_by(|&a, &b| {
        let (na, nb) = (&graph.nodes[a], &graph.nodes[b]);
        degree[b]
            .cmp(&degree[a])
            .then_with(|| {
                let ca = na.anchor == AnchorRegion::Center;
                let cb = nb.anchor == AnchorRegion::Center;
                cb.cmp(&ca)
            })
            .then_with(|| na.id.cmp(&nb.id))
    })
}

pub fn solve_layout(
    graph: &ConstraintGraph,
    assets: &HashMap<String, Box3>,
    grid: f64,
    seed: u64,
) -> Result<Layout, LayoutError> {
    let cfg = LayoutConfig {
        grid,
        ..LayoutConfig::default()
    };
    solve_layout_with(graph, assets, &cfg, seed)
}

/// Solves the layout. The result depends only on the arguments; `seed` is
/// carried into the layout unchanged.
pub fn solve_layout_with(
    graph: &ConstraintGraph,
    assets: &HashMap<String, Box3>,
    cfg: &LayoutConfig,
    seed: u64,
) -> Result<Layout, LayoutError> {
    let problem = Problem::new(graph, assets, cfg)?;
    let n = graph.nodes.len();
    let mut placed: Vec<Option<Slot>> = vec![None; n];
    let mut deferred: Vec<usize> = Vec::new();
    let mut tried_root = vec![false; n];

    loop {
        let root = pick_anchor(graph, &problem.degree, |i| placed[i].is_none() && !tried_root[i]);
        let Some(root) = root else { break };
        tried_root[root] = true;
        match problem.place_root(root, &placed) {
            Some(slot) => {
                placed[root] = Some(slot);
                deferred.retain(|&d| d != root);
            }
            None => {
                push_unique(&mut deferred, root);
                continue;
            }
        }
        let mut queue = VecDeque::from([root]);
        while let Some(o) = queue.pop_front() {
            for j in problem.sorted_neighbors(o) {
                if placed[j].is_some() {
                    continue;
                }
                tried_root[j] = true;
                match problem.place_relative(j, o, &placed) {
                    Some(slot) => {
                        placed[j] = Some(slot);
                        deferred.retain(|&d| d != j);
                        queue.push_back(j);
                    }
                    None => push_unique(&mut deferred, j),
                }
            }
        }
    }

    let mut failed = Vec::new();
    for &i in &deferred {
        if placed[i].is_some() {
            continue;
        }
        match problem.place_fallback(i, &placed) {
            Some(slot) => placed[i] = Some(slot),
            None => failed.push(i),
        }
    }
    if !failed.is_empty() {
        log::debug!("layout: {} node(s) without a free slot, searching", failed.len());
        let mut budget = cfg.search_budget;
        if !problem.search(&failed, &mut placed, &mut budget) {
            let all: Vec<usize> = problem.bfs_order();
            let mut fresh = vec![None; n];
            let mut budget = cfg.search_budget;
            if !problem.search(&all, &mut fresh, &mut budget) {
                return Err(LayoutError::Infeasible(graph.nodes[failed[0]].id.clone()));
            }
            placed = fresh;
        }
    }

    let slots: Vec<Slot> = placed.into_iter().map(|s| s.expect("every node placed")).collect();
    Ok(problem.finish(&slots, seed))
}

/// Places one more node into an existing layout, keeping every other
/// placement fixed.
pub fn place_additional(
    layout: &Layout,
    graph: &ConstraintGraph,
    assets: &HashMap<String, Box3>,
    id: &str,
    cfg: &LayoutConfig,
) -> Result<Layout, LayoutError> {
    let problem = Problem::new(graph, assets, cfg)?;
    let target = graph
        .node_index(id)
        .ok_or_else(|| LayoutError::UnknownNode(id.to_string()))?;
    let mut placed: Vec<Option<Slot>> = vec![None; graph.nodes.len()];
    for (i, node) in graph.nodes.iter().enumerate() {
        if i == target {
            continue;
        }
        let p = layout
            .placements
            .get(&node.id)
            .ok_or_else(|| LayoutError::UnknownNode(node.id.clone()))?;
        placed[i] = Some(problem.slot_from(i, *p));
    }
    let reference = problem
        .sorted_neighbors(target)
        .into_iter()
        .find(|&j| placed[j].is_some());
    let slot = reference
        .and_then(|r| problem.place_relative(target, r, &placed))
        .or_else(|| problem.place_root(target, &placed))
        .or_else(|| problem.place_fallback(target, &placed))
        .or_else(|| {
            let mut budget = cfg.search_budget;
            let mut tmp = placed.clone();
            problem.search(&[target], &mut tmp, &mut budget).then(|| tmp[target].expect("placed"))
        })
        .ok_or_else(|| LayoutError::Infeasible(id.to_string()))?;
    placed[target] = Some(slot);
    let slots: Vec<Slot> = placed.into_iter().map(|s| s.expect("placed")).collect();
    Ok(problem.finish(&slots, layout.seed))
}

fn push_unique(v: &mut Vec<usize>, i: usize) {
    if !v.contains(&i) {
        v.push(i);
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    placement: Placement,
    geom: ObjectGeom,
}

/// Which relations a candidate must satisfy.
#[derive(Clone, Copy)]
enum Scope {
    AllPlaced,
    OnlyWith(usize),
    None,
}

#[derive(Clone)]
enum Tier {
    /// Facing the scene center for boundary anchors, +y otherwise.
    Anchor,
    Fixed(Vec<f64>),
    TowardCenter,
}

struct Problem<'a> {
    graph: &'a ConstraintGraph,
    cfg: &'a LayoutConfig,
    models: Vec<Box3>,
    scales: Vec<f64>,
    candidates: Vec<Vec<Vector2<f64>>>,
    centroids: Vec<Vector2<f64>>,
    edges: Vec<(usize, usize, Relation)>,
    exempt: Vec<Vec<bool>>,
    degree: Vec<usize>,
}

impl<'a> Problem<'a> {
    fn new(
        graph: &'a ConstraintGraph,
        assets: &HashMap<String, Box3>,
        cfg: &'a LayoutConfig,
    ) -> Result<Self, LayoutError> {
        if graph.nodes.is_empty() {
            return Err(LayoutError::EmptyGraph);
        }
        if !(cfg.grid > 0.0) || !cfg.grid.is_finite() {
            return Err(LayoutError::BadGrid(cfg.grid));
        }
        let n = graph.nodes.len();
        let index: HashMap<&str, usize> = graph
            .nodes
            .iter()
            .enumerate()
            .map(|(i, nd)| (nd.id.as_str(), i))
            .collect();
        let mut models = Vec::with_capacity(n);
        let mut scales = Vec::with_capacity(n);
        let mut candidates = Vec::with_capacity(n);
        let mut centroids = Vec::with_capacity(n);
        let mut by_region: HashMap<AnchorRegion, (Vec<Vector2<f64>>, Vector2<f64>)> = HashMap::new();
        for node in &graph.nodes {
            let model = *assets
                .get(&node.id)
                .ok_or_else(|| LayoutError::MissingAsset(node.id.clone()))?;
            scales.push(scaling_factor(node.size, &model)?);
            models.push(model);
            if !by_region.contains_key(&node.anchor) {
                let set = candidate_positions_with(node.anchor, &graph.scene, cfg.grid, &cfg.regions)?;
                let c = set.centroid();
                by_region.insert(node.anchor, (set.positions, c));
            }
            let (pos, c) = &by_region[&node.anchor];
            candidates.push(pos.clone());
            centroids.push(*c);
        }
        let mut edges = Vec::with_capacity(graph.edges.len());
        let mut exempt = vec![vec![false; n]; n];
        for e in &graph.edges {
            let s = *index
                .get(e.subject.as_str())
                .ok_or_else(|| LayoutError::UnknownNode(e.subject.clone()))?;
            let o = *index
                .get(e.object.as_str())
                .ok_or_else(|| LayoutError::UnknownNode(e.object.clone()))?;
            if e.relation.is_vertical() {
                exempt[s][o] = true;
                exempt[o][s] = true;
            }
            edges.push((s, o, e.relation));
        }
        Ok(Self {
            graph,
            cfg,
            models,
            scales,
            candidates,
            centroids,
            edges,
            exempt,
            degree: degrees(graph),
        })
    }

    fn sorted_neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &(s, o, _) in &self.edges {
            let other = if s == i {
                o
            } else if o == i {
                s
            } else {
                continue;
            };
            if !out.contains(&other) {
                out.push(other);
            }
        }
        out.sort_by(|&a, &b| {
            self.degree[b]
                .cmp(&self.degree[a])
                .then_with(|| self.graph.nodes[a].id.cmp(&self.graph.nodes[b].id))
        });
        out
    }

    /// Breadth-first order over all components, roots chosen like anchors.
    fn bfs_order(&self) -> Vec<usize> {
        let n = self.graph.nodes.len();
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while let Some(root) = pick_anchor(self.graph, &self.degree, |i| !seen[i]) {
            seen[root] = true;
            let mut q = VecDeque::from([root]);
            while let Some(o) = q.pop_front() {
                order.push(o);
                for j in self.sorted_neighbors(o) {
                    if !seen[j] {
                        seen[j] = true;
                        q.push_back(j);
                    }
                }
            }
        }
        order
    }

    fn slot_from(&self, i: usize, placement: Placement) -> Slot {
        Slot {
            placement,
            geom: placement_geom(&self.models[i], &placement),
        }
    }

    /// Slot whose footprint center lands on `p`, resting at height `z_base`.
    fn build(&self, i: usize, p: &Vector2<f64>, yaw: f64, z_base: f64) -> Slot {
        let s = self.scales[i];
        let m = &self.models[i];
        let c = yaw_quat(yaw) * (m.center() * s);
        let t = Vector3::new(p.x - c.x, p.y - c.y, z_base - s * m.min.z);
        self.slot_from(
            i,
            Placement {
                s,
                t: t.into(),
                yaw_radians: yaw,
            },
        )
    }

    fn hard_ok(&self, i: usize, slot: &Slot, placed: &[Option<Slot>]) -> bool {
        let node = &self.graph.nodes[i];
        if classify(&slot.geom.center, &self.graph.scene, &self.cfg.regions) != node.anchor {
            return false;
        }
        if !in_bounds(&slot.geom, &self.graph.scene) {
            return false;
        }
        placed.iter().enumerate().all(|(j, other)| match other {
            Some(o) if j != i && !self.exempt[i][j] => {
                !aabb_overlap(&slot.geom.bounds, &o.geom.bounds, self.cfg.clearance)
            }
            _ => true,
        })
    }

    fn relations_ok(&self, i: usize, slot: &Slot, placed: &[Option<Slot>], scope: Scope) -> bool {
        self.edges.iter().all(|&(s, o, rel)| {
            let other = if s == i {
                o
            } else if o == i {
                s
            } else {
                return true;
            };
            let in_scope = match scope {
                Scope::AllPlaced => true,
                Scope::OnlyWith(r) => r == other,
                Scope::None => false,
            };
            let Some(og) = placed[other].as_ref().filter(|_| in_scope) else {
                return true;
            };
            if s == i {
                holds(rel, &slot.geom, &og.geom, &self.cfg.relations)
            } else {
                holds(rel, &og.geom, &slot.geom, &self.cfg.relations)
            }
        })
    }

    /// Height at which `i` rests: on top of a placed supporter it must be
    /// OVER, or on the floor.
    fn support_height(&self, i: usize, placed: &[Option<Slot>], scope: Scope) -> f64 {
        let mut best: Option<(bool, f64)> = None;
        for &(s, o, rel) in &self.edges {
            let sup = match rel {
                Relation::Over if s == i => o,
                Relation::Under if o == i => s,
                _ => continue,
            };
            let preferred = match scope {
                Scope::AllPlaced => false,
                Scope::OnlyWith(r) => {
                    if r != sup {
                        continue;
                    }
                    true
                }
                Scope::None => continue,
            };
            if let Some(g) = &placed[sup] {
                if best.is_none_or(|(p, _)| preferred && !p) {
                    best = Some((preferred, g.geom.bounds.max.z));
                }
            }
        }
        best.map_or(0.0, |b| b.1)
    }

    fn tier_yaws(&self, i: usize, tier: &Tier, p: &Vector2<f64>) -> Vec<f64> {
        match tier {
            Tier::Anchor => {
                let node = &self.graph.nodes[i];
                vec![facing_yaw(node.anchor, p, &self.graph.scene, &self.cfg.regions).unwrap_or(0.0)]
            }
            Tier::Fixed(v) => v.clone(),
            Tier::TowardCenter => vec![yaw_toward(p, &Vector2::zeros())],
        }
    }

    /// Yaws implied by relations with already placed neighbors, the
    /// primary reference first.
    fn derived_yaws(&self, i: usize, reference: usize, placed: &[Option<Slot>]) -> Vec<f64> {
        let mut pairs: Vec<(bool, f64)> = Vec::new();
        for &(s, o, rel) in &self.edges {
            let other = if s == i {
                o
            } else if o == i {
                s
            } else {
                continue;
            };
            let Some(g) = &placed[other] else { continue };
            let yaw = match rel {
                Relation::Opposite => wrap_pi(g.placement.yaw_radians + PI),
                _ => g.placement.yaw_radians,
            };
            pairs.push((other != reference, yaw));
        }
        pairs.sort_by_key(|p| p.0);
        dedup_yaws(pairs.into_iter().map(|p| p.1))
    }

    /// Best slot over `tiers` in order; within a tier the candidate closest
    /// to `target` wins, ties going to the smaller (x, y).
    fn best_slot(
        &self,
        i: usize,
        target: &Vector2<f64>,
        tiers: &[Tier],
        scope: Scope,
        placed: &[Option<Slot>],
    ) -> Option<Slot> {
        let z = self.support_height(i, placed, scope);
        let order = sorted_by_distance(&self.candidates[i], target);
        for tier in tiers {
            // Scanning in (distance, x, y) order makes the first feasible
            // slot the best one.
            for p in &order {
                for yaw in self.tier_yaws(i, tier, p) {
                    let slot = self.build(i, p, yaw, z);
                    if self.hard_ok(i, &slot, placed) && self.relations_ok(i, &slot, placed, scope) {
                        return Some(slot);
                    }
                }
            }
        }
        None
    }

    fn place_root(&self, i: usize, placed: &[Option<Slot>]) -> Option<Slot> {
        let tiers = [Tier::Anchor, Tier::Fixed(CARDINALS.to_vec())];
        let target = self.centroids[i];
        self.best_slot(i, &target, &tiers, Scope::AllPlaced, placed)
            .or_else(|| self.best_slot(i, &target, &tiers, Scope::None, placed))
    }

    fn place_relative(&self, i: usize, reference: usize, placed: &[Option<Slot>]) -> Option<Slot> {
        let target = placed[reference].as_ref()?.geom.center;
        let tiers = [
            Tier::Anchor,
            Tier::Fixed(self.derived_yaws(i, reference, placed)),
            Tier::Fixed(CARDINALS.to_vec()),
        ];
        self.best_slot(i, &target, &tiers, Scope::AllPlaced, placed)
            .or_else(|| self.best_slot(i, &target, &tiers, Scope::OnlyWith(reference), placed))
    }

    fn place_fallback(&self, i: usize, placed: &[Option<Slot>]) -> Option<Slot> {
        let tiers = [Tier::TowardCenter, Tier::Fixed(CARDINALS.to_vec())];
        self.best_slot(i, &self.centroids[i], &tiers, Scope::None, placed)
    }

    /// All floor slots of node `i` that respect anchor, bounds and the
    /// already fixed placements, nearest to the region centroid first.
    fn options(&self, i: usize, fixed: &[Option<Slot>]) -> Vec<Slot> {
        let mut out: Vec<(i64, f64, f64, Slot)> = Vec::new();
        for p in &self.candidates[i] {
            let mut yaws = self.tier_yaws(i, &Tier::Anchor, p);
            yaws.push(yaw_toward(p, &Vector2::zeros()));
            yaws.extend(CARDINALS);
            for yaw in dedup_yaws(yaws) {
                let slot = self.build(i, p, yaw, 0.0);
                if self.hard_ok(i, &slot, fixed) {
                    out.push((quantize((p - self.centroids[i]).norm()), p.x, p.y, slot));
                }
            }
        }
        out.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.total_cmp(&b.2))
        });
        out.into_iter().map(|o| o.3).collect()
    }

    /// Depth-first assignment of `nodes` over their floor options with the
    /// other entries of `placed` held fixed. Returns false when the budget
    /// runs out or no assignment exists.
    fn search(&self, nodes: &[usize], placed: &mut [Option<Slot>], budget: &mut usize) -> bool {
        for &i in nodes {
            placed[i] = None;
        }
        let options: Vec<Vec<Slot>> = nodes.iter().map(|&i| self.options(i, placed)).collect();
        if options.iter().any(Vec::is_empty) {
            return false;
        }
        self.dfs(nodes, &options, 0, placed, budget)
    }

    fn dfs(
        &self,
        nodes: &[usize],
        options: &[Vec<Slot>],
        k: usize,
        placed: &mut [Option<Slot>],
        budget: &mut usize,
    ) -> bool {
        if k == nodes.len() {
            return true;
        }
        let i = nodes[k];
        for slot in &options[k] {
            if *budget == 0 {
                return false;
            }
            *budget -= 1;
            let clear = nodes[..k].iter().all(|&j| {
                self.exempt[i][j]
                    || !aabb_overlap(
                        &slot.geom.bounds,
                        &placed[j].as_ref().expect("assigned").geom.bounds,
                        self.cfg.clearance,
                    )
            });
            if !clear {
                continue;
            }
            placed[i] = Some(*slot);
            if self.dfs(nodes, options, k + 1, placed, budget) {
                return true;
            }
            placed[i] = None;
        }
        false
    }

    fn finish(&self, slots: &[Slot], seed: u64) -> Layout {
        let mut placements = IndexMap::with_capacity(slots.len());
        for (node, slot) in self.graph.nodes.iter().zip(slots) {
            placements.insert(node.id.clone(), slot.placement);
        }
        let deferred = self
            .graph
            .edges
            .iter()
            .zip(&self.edges)
            .filter(|(_, &(s, o, rel))| !holds(rel, &slots[s].geom, &slots[o].geom, &self.cfg.relations))
            .map(|(e, _)| e.clone())
            .collect();
        Layout {
            scene: self.graph.scene,
            seed,
            placements,
            deferred,
        }
    }
}

fn sorted_by_distance(points: &[Vector2<f64>], target: &Vector2<f64>) -> Vec<Vector2<f64>> {
    let mut keyed: Vec<(i64, Vector2<f64>)> =
        points.iter().map(|p| (quantize((p - target).norm()), *p)).collect();
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.x.total_cmp(&b.1.x))
            .then(a.1.y.total_cmp(&b.1.y))
    });
    keyed.into_iter().map(|k| k.1).collect()
}

fn quantize(d: f64) -> i64 {
    (d * 1e9).round() as i64
}

fn dedup_yaws(yaws: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for y in yaws {
        let y = wrap_pi(y);
        if !out.iter().any(|o| (wrap_pi(o - y)).abs() < 1e-12) {
            out.push(y);
        }
    }
    out
}
