use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::rc::Rc;

use num::{BigInt, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::equilibrium::{verify_candidate, EquilibriumCandidate, VerificationReport};
use crate::market::{
    build_influence_graph, AllocationProfile, Market, MarketError, PriceVector, TraderId,
};
use crate::rational::{sum, Q};

use super::grid::{enumerate_price_grid, GridSpec, UnitVectors};
use super::hierarchy::{validate_hierarchical, HierarchicalLabeling, TreeShape};
use super::local::{round_nearest, PriceEval, Units};
use super::HSolverError;

type Joint = Vec<Units>;
type Assignment = Vec<(usize, Units)>;

/// How leaf-group traders' influence on their parent is tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContributionMode {
    /// Exact rational form contributions.
    #[default]
    Exact,
    /// Each trader's contribution rounded to the nearest multiple of `1/N`.
    Rounded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverOptions {
    pub memoize: bool,
    pub contributions: ContributionMode,
    /// Worker threads over the price grid; 1 keeps statistics deterministic.
    pub jobs: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            memoize: true,
            contributions: ContributionMode::Exact,
            jobs: 1,
        }
    }
}

/// Memo key of one Check-Tree call. Vectors are in grid units.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CheckTreeKey {
    pub node: usize,
    pub x: Vec<Vec<u32>>,
    pub y: Vec<u32>,
    pub frozen: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SolveStats {
    pub prices_tried: u64,
    /// Check-Tree calls (and leaf-group tables) evaluated, by tree depth.
    pub expansions_by_depth: Vec<u64>,
    pub memo_hits: u64,
}

impl SolveStats {
    fn expand(&mut self, depth: usize) {
        if self.expansions_by_depth.len() <= depth {
            self.expansions_by_depth.resize(depth + 1, 0);
        }
        self.expansions_by_depth[depth] += 1;
    }

    pub fn total_expansions(&self) -> u64 {
        self.expansions_by_depth.iter().sum()
    }

    fn merge(&mut self, other: &SolveStats) {
        self.prices_tried += other.prices_tried;
        self.memo_hits += other.memo_hits;
        if self.expansions_by_depth.len() < other.expansions_by_depth.len() {
            self.expansions_by_depth.resize(other.expansions_by_depth.len(), 0);
        }
        for (d, c) in other.expansions_by_depth.iter().enumerate() {
            self.expansions_by_depth[d] += c;
        }
    }
}

impl fmt::Display for SolveStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "prices_tried {}", self.prices_tried)?;
        for (d, c) in self.expansions_by_depth.iter().enumerate() {
            writeln!(f, "depth {d} expansions {c}")?;
        }
        write!(f, "memo_hits {}", self.memo_hits)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveOutcome {
    pub candidate: Option<EquilibriumCandidate>,
    pub report: Option<VerificationReport>,
    pub stats: SolveStats,
    pub diagnostic: Option<String>,
}

/// Trader groups per tree node, with the neighbor pattern checked.
pub(crate) struct Layout {
    pub shape: TreeShape,
    pub groups: Vec<Vec<usize>>,
    pub node_of: Vec<usize>,
    pub pos: Vec<usize>,
}

impl Layout {
    pub fn new(market: &Market, labeling: &HierarchicalLabeling) -> Result<Self, HSolverError> {
        let shape = labeling.shape()?;
        let ids: Vec<String> = market.ids().map(str::to_string).collect();
        let node_of = labeling.node_of_vertices(&shape, &ids)?;
        let mut groups = vec![Vec::new(); shape.ids.len()];
        let mut pos = vec![0; ids.len()];
        for (k, &n) in node_of.iter().enumerate() {
            pos[k] = groups[n].len();
            groups[n].push(k);
        }
        for k in 0..ids.len() {
            let nk = node_of[k];
            for terms in market.resolved_forms(k) {
                for term in terms {
                    if term.weight.is_zero() {
                        continue;
                    }
                    let s = term
                        .source
                        .ok_or_else(|| MarketError::UnknownTrader(format!("referenced by {}", ids[k])))?;
                    let ns = node_of[s];
                    let fits = if s == k {
                        false
                    } else if ns == nk {
                        if shape.is_leaf(nk) {
                            return Err(HSolverError::IntraGroupEdge {
                                from: ids[s].clone(),
                                to: ids[k].clone(),
                            });
                        }
                        true
                    } else {
                        shape.adjacent(ns, nk)
                    };
                    if !fits {
                        return Err(HSolverError::NotTreeDecomposable {
                            trader: ids[k].clone(),
                            neighbor: ids[s].clone(),
                        });
                    }
                }
            }
        }
        Ok(Self {
            shape,
            groups,
            node_of,
            pos,
        })
    }
}

#[derive(Debug, Clone)]
struct LeafState {
    total: Units,
    contribution: Vec<Q>,
    witness: Joint,
}

struct Combo {
    internal: Vec<(usize, Joint, Units)>,
    leaf_picks: Vec<(usize, Rc<Vec<LeafState>>, usize)>,
    leaf_total: Units,
}

enum ChildOptions {
    Internal(Rc<Vec<Joint>>),
    Leaf(Rc<Vec<LeafState>>),
}

fn add_units(a: &mut [u32], b: &[u32]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn joint_sum(j: &Joint, h: usize) -> Units {
    let mut s = vec![0; h];
    for b in j {
        add_units(&mut s, b);
    }
    s
}

fn fits_under(a: &[u32], b: &[u32]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Check-Tree search state for one normalized price vector.
struct Search<'s, 'a> {
    layout: &'s Layout,
    ev: PriceEval<'a>,
    options: &'s SolverOptions,
    h: usize,
    cap: u32,
    bundles: Vec<Rc<Vec<Units>>>,
    joint_cache: HashMap<usize, Rc<Vec<Joint>>>,
    memo: HashMap<CheckTreeKey, Option<Rc<Assignment>>>,
    combo_cache: HashMap<(usize, Joint, Joint), Rc<Vec<Combo>>>,
    leaf_cache: HashMap<(usize, Joint), Rc<Vec<LeafState>>>,
    stats: SolveStats,
}

impl<'s, 'a> Search<'s, 'a> {
    fn new(layout: &'s Layout, ev: PriceEval<'a>, options: &'s SolverOptions) -> Self {
        let bundles = (0..ev.market.trader_count())
            .map(|k| Rc::new(ev.affordable_bundles(k)))
            .collect();
        let h = ev.market.good_count();
        let cap = (2 * ev.n) as u32;
        Self {
            layout,
            ev,
            options,
            h,
            cap,
            bundles,
            joint_cache: HashMap::new(),
            memo: HashMap::new(),
            combo_cache: HashMap::new(),
            leaf_cache: HashMap::new(),
            stats: SolveStats::default(),
        }
    }

    fn lookup<'v>(&self, parts: &[(usize, &'v Joint)], s: usize) -> Option<&'v [u32]> {
        let node = self.layout.node_of[s];
        parts
            .iter()
            .find(|(n, _)| *n == node)
            .map(|(_, j)| j[self.layout.pos[s]].as_slice())
    }

    fn group_ok(
        &mut self,
        node: usize,
        parts: &[(usize, &Joint)],
        extra: Option<&[Q]>,
    ) -> Result<bool, HSolverError> {
        let group = &self.layout.groups[node];
        let own = parts
            .iter()
            .find(|(n, _)| *n == node)
            .map(|(_, j)| *j)
            .expect("node allocation present");
        for (j, &k) in group.iter().enumerate() {
            let ex = extra.map(|e| &e[j * self.h..(j + 1) * self.h]);
            let f = self.ev.forms(k, |s| self.lookup(parts, s), ex);
            if !self.ev.ok(k, &own[j], f)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// All joint bundles of a node's group, lexicographic, with totals capped.
    fn joint_options(&mut self, node: usize) -> Rc<Vec<Joint>> {
        if let Some(j) = self.joint_cache.get(&node) {
            return j.clone();
        }
        let group = &self.layout.groups[node];
        let lists: Vec<Rc<Vec<Units>>> = group.iter().map(|&k| self.bundles[k].clone()).collect();
        let mut out = Vec::new();
        if lists.iter().all(|l| !l.is_empty()) {
            let max: Vec<u64> = lists.iter().map(|l| (l.len() - 1) as u64).collect();
            for idx in UnitVectors::bounded(max) {
                let joint: Joint = idx
                    .iter()
                    .zip(&lists)
                    .map(|(&i, l)| l[i as usize].clone())
                    .collect();
                if joint_sum(&joint, self.h).iter().all(|&x| x <= self.cap) {
                    out.push(joint);
                }
            }
        }
        let out = Rc::new(out);
        self.joint_cache.insert(node, out.clone());
        out
    }

    /// Reachable (total, parent contribution) states of a leaf group.
    fn leaf_states(
        &mut self,
        node: usize,
        parent_joint: &Joint,
    ) -> Result<Rc<Vec<LeafState>>, HSolverError> {
        let key = (node, parent_joint.clone());
        if self.options.memoize {
            if let Some(s) = self.leaf_cache.get(&key) {
                self.stats.memo_hits += 1;
                return Ok(s.clone());
            }
        }
        self.stats.expand(self.layout.shape.depth[node]);
        let parent = self.layout.shape.parent[node];
        let parent_group: Vec<usize> = parent
            .map(|p| self.layout.groups[p].clone())
            .unwrap_or_default();
        let parts: Vec<(usize, &Joint)> = parent.map(|p| (p, parent_joint)).into_iter().collect();
        let width = parent_group.len() * self.h;
        let mut states: BTreeMap<(Units, Vec<Q>), Joint> = BTreeMap::new();
        states.insert((vec![0; self.h], vec![Q::zero(); width]), Vec::new());
        for &t in &self.layout.groups[node].clone() {
            let f = self.ev.forms(t, |s| self.lookup(&parts, s), None);
            let mut options = Vec::new();
            for b in self.bundles[t].clone().iter() {
                if self.ev.ok(t, b, f.clone())? {
                    let mut contribution = Vec::with_capacity(width);
                    for &pt in &parent_group {
                        for c in self.ev.contribution(pt, t, b) {
                            contribution.push(match self.options.contributions {
                                ContributionMode::Exact => c,
                                ContributionMode::Rounded => round_nearest(&c, self.ev.n),
                            });
                        }
                    }
                    options.push((b.clone(), contribution));
                }
            }
            let mut next = BTreeMap::new();
            for ((total, contrib), witness) in &states {
                for (b, c) in &options {
                    let mut t2 = total.clone();
                    add_units(&mut t2, b);
                    if t2.iter().any(|&x| x > self.cap) {
                        continue;
                    }
                    let c2: Vec<Q> = contrib.iter().zip(c).map(|(a, b)| a + b).collect();
                    next.entry((t2, c2)).or_insert_with(|| {
                        let mut w = witness.clone();
                        w.push(b.clone());
                        w
                    });
                }
            }
            states = next;
        }
        let out = Rc::new(
            states
                .into_iter()
                .map(|((total, contribution), witness)| LeafState {
                    total,
                    contribution,
                    witness,
                })
                .collect::<Vec<_>>(),
        );
        if self.options.memoize {
            self.leaf_cache.insert(key, out.clone());
        }
        Ok(out)
    }

    /// Children choices under which every trader of `node` is locally fine.
    /// Independent of the subtree total, so shared across totals.
    fn combos(
        &mut self,
        node: usize,
        xv: &Joint,
        frozen: &Joint,
    ) -> Result<Rc<Vec<Combo>>, HSolverError> {
        let key = (node, xv.clone(), frozen.clone());
        if self.options.memoize {
            if let Some(c) = self.combo_cache.get(&key) {
                return Ok(c.clone());
            }
        }
        let children = self.layout.shape.children[node].clone();
        let mut options = Vec::with_capacity(children.len());
        for &c in &children {
            options.push(if self.layout.shape.is_leaf(c) {
                ChildOptions::Leaf(self.leaf_states(c, xv)?)
            } else {
                ChildOptions::Internal(self.joint_options(c))
            });
        }
        let mut out = Vec::new();
        let mut picks = vec![0usize; children.len()];
        let base = joint_sum(xv, self.h);
        self.combo_dfs(node, xv, frozen, &children, &options, 0, &mut picks, base, &mut out)?;
        let out = Rc::new(out);
        if self.options.memoize {
            self.combo_cache.insert(key, out.clone());
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn combo_dfs(
        &mut self,
        node: usize,
        xv: &Joint,
        frozen: &Joint,
        children: &[usize],
        options: &[ChildOptions],
        idx: usize,
        picks: &mut Vec<usize>,
        running: Units,
        out: &mut Vec<Combo>,
    ) -> Result<(), HSolverError> {
        if idx == children.len() {
            let width = self.layout.groups[node].len() * self.h;
            let mut extra = vec![Q::zero(); width];
            let mut has_leaf = false;
            let mut parts: Vec<(usize, &Joint)> = vec![(node, xv)];
            if let Some(p) = self.layout.shape.parent[node] {
                parts.push((p, frozen));
            }
            for (i, opt) in options.iter().enumerate() {
                match opt {
                    ChildOptions::Internal(js) => parts.push((children[i], &js[picks[i]])),
                    ChildOptions::Leaf(states) => {
                        has_leaf = true;
                        for (e, c) in extra.iter_mut().zip(&states[picks[i]].contribution) {
                            *e += c;
                        }
                    }
                }
            }
            let ex = has_leaf.then_some(extra.as_slice());
            if self.group_ok(node, &parts, ex)? {
                let mut combo = Combo {
                    internal: Vec::new(),
                    leaf_picks: Vec::new(),
                    leaf_total: vec![0; self.h],
                };
                for (i, opt) in options.iter().enumerate() {
                    match opt {
                        ChildOptions::Internal(js) => {
                            let j = js[picks[i]].clone();
                            let s = joint_sum(&j, self.h);
                            combo.internal.push((children[i], j, s));
                        }
                        ChildOptions::Leaf(states) => {
                            add_units(&mut combo.leaf_total, &states[picks[i]].total);
                            combo.leaf_picks.push((children[i], states.clone(), picks[i]));
                        }
                    }
                }
                out.push(combo);
            }
            return Ok(());
        }
        let count = match &options[idx] {
            ChildOptions::Internal(js) => js.len(),
            ChildOptions::Leaf(states) => states.len(),
        };
        for choice in 0..count {
            let mut r = running.clone();
            match &options[idx] {
                ChildOptions::Internal(js) => add_units(&mut r, &joint_sum(&js[choice], self.h)),
                ChildOptions::Leaf(states) => add_units(&mut r, &states[choice].total),
            }
            if r.iter().any(|&x| x > self.cap) {
                continue;
            }
            picks[idx] = choice;
            self.combo_dfs(node, xv, frozen, children, options, idx + 1, picks, r, out)?;
        }
        Ok(())
    }

    /// Check-Tree: an assignment of the subtree at `node` with the node's
    /// group holding `xv`, the subtree consuming `y` in total, and the
    /// parent's group frozen at `frozen`.
    fn check(
        &mut self,
        node: usize,
        xv: &Joint,
        y: &Units,
        frozen: &Joint,
    ) -> Result<Option<Rc<Assignment>>, HSolverError> {
        let key = CheckTreeKey {
            node,
            x: xv.clone(),
            y: y.clone(),
            frozen: frozen.clone(),
        };
        if self.options.memoize {
            if let Some(r) = self.memo.get(&key) {
                self.stats.memo_hits += 1;
                return Ok(r.clone());
            }
        }
        self.stats.expand(self.layout.shape.depth[node]);
        let result = self.check_uncached(node, xv, y, frozen)?;
        if self.options.memoize {
            self.memo.insert(key, result.clone());
        }
        Ok(result)
    }

    fn check_uncached(
        &mut self,
        node: usize,
        xv: &Joint,
        y: &Units,
        frozen: &Joint,
    ) -> Result<Option<Rc<Assignment>>, HSolverError> {
        let group = self.layout.groups[node].clone();
        let sx = joint_sum(xv, self.h);
        if self.layout.shape.is_leaf(node) {
            if &sx != y {
                return Ok(None);
            }
            let mut parts: Vec<(usize, &Joint)> = vec![(node, xv)];
            if let Some(p) = self.layout.shape.parent[node] {
                parts.push((p, frozen));
            }
            if !self.group_ok(node, &parts, None)? {
                return Ok(None);
            }
            let a: Assignment = group.iter().copied().zip(xv.iter().cloned()).collect();
            return Ok(Some(Rc::new(a)));
        }
        if !fits_under(&sx, y) {
            return Ok(None);
        }
        let combos = self.combos(node, xv, frozen)?;
        for combo in combos.iter() {
            let mut used = sx.clone();
            add_units(&mut used, &combo.leaf_total);
            if !fits_under(&used, y) {
                continue;
            }
            let rest: Units = y.iter().zip(&used).map(|(a, b)| a - b).collect();
            if let Some(sub) = self.split(xv, &combo.internal, 0, rest)? {
                let mut a: Assignment = group.iter().copied().zip(xv.iter().cloned()).collect();
                for (c, states, i) in &combo.leaf_picks {
                    let members = &self.layout.groups[*c];
                    a.extend(members.iter().copied().zip(states[*i].witness.iter().cloned()));
                }
                a.extend(sub);
                return Ok(Some(Rc::new(a)));
            }
        }
        Ok(None)
    }

    /// Distributes `rest` over the internal children, each at least its own
    /// group's consumption, recursing into Check-Tree for each share.
    fn split(
        &mut self,
        xv: &Joint,
        internal: &[(usize, Joint, Units)],
        idx: usize,
        rest: Units,
    ) -> Result<Option<Assignment>, HSolverError> {
        if idx == internal.len() {
            return Ok(rest.iter().all(|&x| x == 0).then(Vec::new));
        }
        let (c, xc, sc) = &internal[idx];
        if idx + 1 == internal.len() {
            if !fits_under(sc, &rest) {
                return Ok(None);
            }
            return Ok(self.check(*c, xc, &rest, xv)?.map(|a| (*a).clone()));
        }
        let mut others = vec![0; self.h];
        for (_, _, s) in &internal[idx + 1..] {
            add_units(&mut others, s);
        }
        let mut max = Vec::with_capacity(self.h);
        for i in 0..self.h {
            if sc[i] + others[i] > rest[i] {
                return Ok(None);
            }
            max.push((rest[i] - others[i] - sc[i]) as u64);
        }
        for delta in UnitVectors::bounded(max) {
            let yc: Units = sc.iter().zip(&delta).map(|(s, d)| s + *d as u32).collect();
            if let Some(a) = self.check(*c, xc, &yc, xv)? {
                let left: Units = rest.iter().zip(&yc).map(|(r, u)| r - u).collect();
                if let Some(mut b) = self.split(xv, internal, idx + 1, left)? {
                    let mut out = (*a).clone();
                    out.append(&mut b);
                    return Ok(Some(out));
                }
            }
        }
        Ok(None)
    }

    /// Whole-market search at this price: the first (total, root allocation)
    /// pair whose Check-Tree assignment `accept` approves.
    fn solve(
        &mut self,
        totals: &[Units],
        mut accept: impl FnMut(&PriceEval, &Assignment) -> Result<bool, HSolverError>,
    ) -> Result<Option<Assignment>, HSolverError> {
        let root = self.layout.shape.root;
        if self.layout.shape.is_leaf(root) {
            let states = self.leaf_states(root, &Vec::new())?;
            for y in totals {
                for st in states.iter().filter(|s| &s.total == y) {
                    let a: Assignment = self.layout.groups[root]
                        .iter()
                        .copied()
                        .zip(st.witness.iter().cloned())
                        .collect();
                    if accept(&self.ev, &a)? {
                        return Ok(Some(a));
                    }
                }
            }
            return Ok(None);
        }
        let joints = self.joint_options(root);
        for y in totals {
            for xr in joints.iter() {
                if !fits_under(&joint_sum(xr, self.h), y) {
                    continue;
                }
                if let Some(a) = self.check(root, xr, y, &Vec::new())? {
                    if accept(&self.ev, &a)? {
                        return Ok(Some((*a).clone()));
                    }
                }
            }
        }
        Ok(None)
    }
}

fn to_units(grid: &GridSpec, v: &[Q]) -> Result<Units, HSolverError> {
    v.iter()
        .map(|x| {
            grid.units_of(x)
                .map(|u| u as u32)
                .ok_or_else(|| HSolverError::BadQuery(format!("{x} is not a non-negative multiple of 1/{}", grid.n)))
        })
        .collect()
}

fn assignment_profile(ev: &PriceEval, a: &Assignment) -> AllocationProfile {
    AllocationProfile::from_pairs(
        a.iter()
            .map(|(k, u)| (ev.market.trader(*k).id.clone(), ev.to_q(u))),
    )
}

/// Discrete totals within epsilon of supply and at most 2, lexicographic.
fn supply_totals(market: &Market, grid: &GridSpec, eps: &Q) -> Vec<Units> {
    let n = Q::from_integer(BigInt::from(grid.n));
    let cap = grid.cap_units() as i64;
    let mut lo = Vec::new();
    let mut span = Vec::new();
    for s in market.supply() {
        let l = ((&s - eps) * &n).ceil().to_integer();
        let u = ((&s + eps) * &n).floor().to_integer();
        let l: i64 = l.try_into().unwrap_or(i64::MAX).max(0);
        let u: i64 = u.try_into().unwrap_or(i64::MAX).min(cap);
        if l > u {
            return Vec::new();
        }
        lo.push(l as u32);
        span.push((u - l) as u64);
    }
    UnitVectors::bounded(span)
        .map(|d| lo.iter().zip(&d).map(|(l, d)| l + *d as u32).collect())
        .collect()
}

fn check_eps(eps: &Q) -> Result<(), HSolverError> {
    if eps.is_negative() {
        return Err(HSolverError::BadQuery(format!("negative epsilon {eps}")));
    }
    Ok(())
}

fn normalized(p: &[Q]) -> Vec<Q> {
    let s = sum(p);
    p.iter().map(|x| x / &s).collect()
}

/// Check-Tree on a single subtree query.
///
/// `x` lists the node's traders' bundles in market (id) order, `frozen` holds
/// the parent node's traders. Returns the subtree assignment or `None`.
#[allow(clippy::too_many_arguments)]
pub fn check_tree(
    market: &Market,
    labeling: &HierarchicalLabeling,
    node: &str,
    prices: &PriceVector,
    x: &[Vec<Q>],
    y: &[Q],
    frozen: &AllocationProfile,
    eps: &Q,
    grid: &GridSpec,
    options: &SolverOptions,
) -> Result<(Option<AllocationProfile>, SolveStats), HSolverError> {
    check_eps(eps)?;
    if !prices.normalized || sum(&prices.values) != Q::from_integer(1.into()) {
        return Err(HSolverError::BadQuery("prices must be normalized".into()));
    }
    let layout = Layout::new(market, labeling)?;
    let v = layout
        .shape
        .index_of(node)
        .ok_or_else(|| HSolverError::BadQuery(format!("unknown tree node {node}")))?;
    let group = &layout.groups[v];
    if x.len() != group.len() {
        return Err(HSolverError::BadQuery(format!(
            "node {node} labels {} traders, got {} bundles",
            group.len(),
            x.len()
        )));
    }
    let xv: Joint = x.iter().map(|b| to_units(grid, b)).collect::<Result<_, _>>()?;
    let yu = to_units(grid, y)?;
    let frozen_joint: Joint = match layout.shape.parent[v] {
        None => Vec::new(),
        Some(p) => layout.groups[p]
            .iter()
            .map(|&k| {
                let id = &market.trader(k).id;
                let b = frozen
                    .get(id)
                    .ok_or_else(|| HSolverError::BadQuery(format!("frozen allocation missing for {id}")))?;
                to_units(grid, b)
            })
            .collect::<Result<_, _>>()?,
    };
    let h = market.good_count();
    if xv.iter().chain(std::iter::once(&yu)).any(|b| b.len() != h)
        || frozen_joint.iter().any(|b| b.len() != h)
    {
        return Err(HSolverError::BadQuery("vector length differs from good count".into()));
    }
    let ev = PriceEval::new(market, prices.values.clone(), eps.clone(), grid.n);
    let mut search = Search::new(&layout, ev, options);
    let result = search.check(v, &xv, &yu, &frozen_joint)?;
    let profile = result.map(|a| assignment_profile(&search.ev, &a));
    Ok((profile, search.stats))
}

/// One reachable state of a leaf group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafGroupState {
    pub total: Vec<Q>,
    /// Per parent trader, the group's contribution to each of its forms.
    pub contribution: BTreeMap<TraderId, Vec<Q>>,
    pub witness: AllocationProfile,
}

/// All (total, parent-contribution) states reachable by the traders labeled
/// `node`, each trader taking an epsilon-feasible, epsilon-optimal discrete
/// bundle given the parent's allocations.
#[allow(clippy::too_many_arguments)]
pub fn leaf_group_feasible_totals(
    market: &Market,
    labeling: &HierarchicalLabeling,
    node: &str,
    parent_allocations: &AllocationProfile,
    prices: &PriceVector,
    eps: &Q,
    grid: &GridSpec,
    options: &SolverOptions,
) -> Result<Vec<LeafGroupState>, HSolverError> {
    check_eps(eps)?;
    let layout = Layout::new(market, labeling)?;
    let v = layout
        .shape
        .index_of(node)
        .ok_or_else(|| HSolverError::BadQuery(format!("unknown tree node {node}")))?;
    if !layout.shape.is_leaf(v) {
        return Err(HSolverError::BadQuery(format!("{node} is not a leaf node")));
    }
    let parent_group: Vec<usize> = layout.shape.parent[v]
        .map(|p| layout.groups[p].clone())
        .unwrap_or_default();
    let parent_joint: Joint = parent_group
        .iter()
        .map(|&k| {
            let id = &market.trader(k).id;
            let b = parent_allocations
                .get(id)
                .ok_or_else(|| HSolverError::BadQuery(format!("parent allocation missing for {id}")))?;
            to_units(grid, b)
        })
        .collect::<Result<_, _>>()?;
    let prices = normalized(&prices.values);
    let ev = PriceEval::new(market, prices, eps.clone(), grid.n);
    let mut search = Search::new(&layout, ev, options);
    let states = search.leaf_states(v, &parent_joint)?;
    let h = market.good_count();
    Ok(states
        .iter()
        .map(|s| LeafGroupState {
            total: search.ev.to_q(&s.total),
            contribution: parent_group
                .iter()
                .enumerate()
                .map(|(j, &k)| {
                    (
                        market.trader(k).id.clone(),
                        s.contribution[j * h..(j + 1) * h].to_vec(),
                    )
                })
                .collect(),
            witness: assignment_profile(
                &search.ev,
                &layout.groups[v]
                    .iter()
                    .copied()
                    .zip(s.witness.iter().cloned())
                    .collect(),
            ),
        })
        .collect())
}

struct PriceResult {
    candidate: Option<(EquilibriumCandidate, VerificationReport)>,
    stats: SolveStats,
}

fn solve_at_price(
    market: &Market,
    layout: &Layout,
    options: &SolverOptions,
    grid: &GridSpec,
    eps: &Q,
    totals: &[Units],
    raw: &[Q],
) -> Result<PriceResult, HSolverError> {
    let prices = normalized(raw);
    let ev = PriceEval::new(market, prices.clone(), eps.clone(), grid.n);
    let mut search = Search::new(layout, ev, options);
    search.stats.prices_tried = 1;
    let mut candidate = None;
    search.solve(totals, |ev, a| {
        let cand = EquilibriumCandidate::new(
            PriceVector::normalized(prices.clone())?,
            assignment_profile(ev, a),
        );
        let report = verify_candidate(market, &cand, eps)?;
        let pass = report.verdict;
        if pass {
            candidate = Some((cand, report));
        }
        Ok(pass)
    })?;
    Ok(PriceResult {
        candidate,
        stats: search.stats,
    })
}

/// Grid search for an epsilon-approximate equilibrium of a market whose
/// influence graph is hierarchical under `labeling`.
pub fn solve_hierarchical(
    market: &Market,
    labeling: &HierarchicalLabeling,
    grid: &GridSpec,
    eps: &Q,
    options: &SolverOptions,
) -> Result<SolveOutcome, HSolverError> {
    check_eps(eps)?;
    if market.trader_count() == 0 {
        return Ok(SolveOutcome {
            candidate: None,
            report: None,
            stats: SolveStats::default(),
            diagnostic: Some("market has no traders".into()),
        });
    }
    let check = validate_hierarchical(&build_influence_graph(market), labeling)?;
    if !check.valid {
        return Err(HSolverError::InvalidLabeling(
            check.violation.unwrap_or_default(),
        ));
    }
    let layout = Layout::new(market, labeling)?;
    let prices: Vec<Vec<Q>> = enumerate_price_grid(market.good_count(), grid)?.collect();
    let totals = supply_totals(market, grid, eps);
    let jobs = options.jobs.max(1);

    let mut stats = SolveStats::default();
    let mut best: Option<(usize, EquilibriumCandidate, VerificationReport)> = None;
    if jobs == 1 {
        for (i, p) in prices.iter().enumerate() {
            let r = solve_at_price(market, &layout, options, grid, eps, &totals, p)?;
            stats.merge(&r.stats);
            if let Some((c, rep)) = r.candidate {
                best = Some((i, c, rep));
                break;
            }
        }
    } else {
        best = parallel_search(market, labeling, options, grid, eps, &totals, &prices, jobs, &mut stats)?;
    }
    let diagnostic = best
        .is_none()
        .then(|| format!("no candidate on the 1/{} grid at epsilon {eps}", grid.n));
    let (candidate, report) = match best {
        Some((_, c, r)) => (Some(c), Some(r)),
        None => (None, None),
    };
    Ok(SolveOutcome {
        candidate,
        report,
        stats,
        diagnostic,
    })
}

type Found = Option<(usize, EquilibriumCandidate, VerificationReport)>;

/// Workers take interleaved price slices; the lowest successful index wins,
/// so the answer matches the sequential search.
#[allow(clippy::too_many_arguments)]
fn parallel_search(
    market: &Market,
    labeling: &HierarchicalLabeling,
    options: &SolverOptions,
    grid: &GridSpec,
    eps: &Q,
    totals: &[Units],
    prices: &[Vec<Q>],
    jobs: usize,
    stats: &mut SolveStats,
) -> Result<Found, HSolverError> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    let bound = AtomicUsize::new(usize::MAX);
    let results: Vec<Result<(Found, SolveStats), HSolverError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let bound = &bound;
                scope.spawn(move || {
                    // Rc-based caches are per worker, so each builds its own layout
                    let layout = Layout::new(market, labeling)?;
                    let mut local = SolveStats::default();
                    for i in (w..prices.len()).step_by(jobs) {
                        if i > bound.load(Ordering::SeqCst) {
                            break;
                        }
                        let r = solve_at_price(market, &layout, options, grid, eps, totals, &prices[i])?;
                        local.merge(&r.stats);
                        if let Some((c, rep)) = r.candidate {
                            bound.fetch_min(i, Ordering::SeqCst);
                            return Ok((Some((i, c, rep)), local));
                        }
                    }
                    Ok((None, local))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver worker panicked"))
            .collect()
    });
    let mut best: Found = None;
    for r in results {
        let (found, s) = r?;
        stats.merge(&s);
        if let Some(f) = found {
            if best.as_ref().is_none_or(|b| f.0 < b.0) {
                best = Some(f);
            }
        }
    }
    Ok(best)
}
