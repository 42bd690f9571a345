//! Seeded market generators shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod reduction;

use std::collections::BTreeMap;

use influence_market::hsolver::{HierarchicalLabeling, TreeNode};
use influence_market::market::{
    LinearForm, LinearInfluenceUtility, Market, Term, ThresholdInfluenceUtility, Trader, Utility,
};
use influence_market::rational::{q, qi};
use influence_market::Q;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random multiple of `1/den` in `[lo/den, hi/den]`.
pub fn grid_q(rng: &mut impl Rng, lo: i64, hi: i64, den: i64) -> Q {
    q(rng.gen_range(lo..=hi), den)
}

/// A tree labeling: `(node, parent)` pairs plus trader labels.
pub struct TreeLayout {
    pub nodes: Vec<(String, Option<String>)>,
    pub labels: Vec<(String, String)>,
    pub k: usize,
}

impl TreeLayout {
    pub fn labeling(&self) -> HierarchicalLabeling {
        HierarchicalLabeling::new(
            self.nodes
                .iter()
                .map(|(id, p)| TreeNode {
                    id: id.clone(),
                    parent: p.clone(),
                })
                .collect(),
            self.labels.iter().cloned().collect(),
            self.k,
        )
    }

    fn node_of(&self, trader: &str) -> &str {
        &self.labels.iter().find(|(t, _)| t == trader).unwrap().1
    }

    fn is_leaf(&self, node: &str) -> bool {
        !self.nodes.iter().any(|(_, p)| p.as_deref() == Some(node))
    }

    fn adjacent(&self, a: &str, b: &str) -> bool {
        self.nodes
            .iter()
            .any(|(id, p)| (id == a && p.as_deref() == Some(b)) || (id == b && p.as_deref() == Some(a)))
    }

    /// Traders whose allocation `trader` must read to make the graph
    /// hierarchical under this labeling.
    pub fn required_sources(&self, trader: &str) -> Vec<String> {
        let nt = self.node_of(trader);
        self.labels
            .iter()
            .filter(|(s, _)| s != trader)
            .filter(|(_, ns)| {
                if ns == nt {
                    !self.is_leaf(nt)
                } else {
                    self.adjacent(ns, nt)
                }
            })
            .map(|(s, _)| s.clone())
            .collect()
    }
}

fn layout(nodes: &[(&str, Option<&str>)], labels: &[(&str, &str)], k: usize) -> TreeLayout {
    TreeLayout {
        nodes: nodes
            .iter()
            .map(|(a, b)| (a.to_string(), b.map(str::to_string)))
            .collect(),
        labels: labels
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
        k,
    }
}

/// Small tree shapes with at most three traders.
pub fn small_layouts() -> Vec<(&'static str, TreeLayout)> {
    vec![
        ("single", layout(&[("r", None)], &[("A", "r")], 1)),
        ("pair-leaf", layout(&[("r", None)], &[("A", "r"), ("B", "r")], 1)),
        ("path2", layout(&[("r", None), ("a", Some("r"))], &[("A", "r"), ("B", "a")], 1)),
        (
            "path3",
            layout(
                &[("r", None), ("a", Some("r")), ("b", Some("a"))],
                &[("A", "r"), ("B", "a"), ("C", "b")],
                1,
            ),
        ),
        (
            "star",
            layout(
                &[("r", None), ("l", Some("r"))],
                &[("B", "r"), ("A", "l"), ("C", "l")],
                1,
            ),
        ),
        (
            "wide-root",
            layout(
                &[("r", None), ("l", Some("r"))],
                &[("A", "r"), ("B", "r"), ("C", "l")],
                2,
            ),
        ),
    ]
}

/// Complete binary tree of the given depth (1 = root only), one trader per node.
pub fn binary_tree_layout(depth: usize) -> TreeLayout {
    let count = (1usize << depth) - 1;
    let mut nodes = Vec::new();
    let mut labels = Vec::new();
    for i in 0..count {
        let parent = (i > 0).then(|| format!("n{:02}", (i - 1) / 2));
        nodes.push((format!("n{i:02}"), parent));
        labels.push((format!("T{i:02}"), format!("n{i:02}")));
    }
    TreeLayout { nodes, labels, k: 1 }
}

/// Random endowments with every good's supply equal to 1.
pub fn unit_supply_endowments(rng: &mut impl Rng, m: usize, h: usize) -> Vec<Vec<Q>> {
    let mut raw = vec![vec![0i64; h]; m];
    for i in 0..h {
        loop {
            for row in raw.iter_mut() {
                row[i] = rng.gen_range(0..=3);
            }
            if raw.iter().any(|r| r[i] > 0) {
                break;
            }
        }
    }
    (0..m)
        .map(|k| {
            (0..h)
                .map(|i| {
                    let total: i64 = raw.iter().map(|r| r[i]).sum();
                    q(raw[k][i], total)
                })
                .collect()
        })
        .collect()
}

/// Random utility over `h` goods reading each of `sources` with a positive
/// weight on a random good.
pub fn random_utility(rng: &mut impl Rng, h: usize, sources: &[String], threshold: bool) -> Utility {
    let mut forms = vec![Vec::new(); h];
    for s in sources {
        let i = rng.gen_range(0..h);
        forms[i].push(Term::new(s.clone(), rng.gen_range(0..h), grid_q(rng, 1, 4, 4)));
    }
    let forms: Vec<LinearForm> = forms.into_iter().map(LinearForm::new).collect();
    let mut slopes: Vec<Q> = (0..h).map(|_| grid_q(rng, 0, 4, 4)).collect();
    if slopes.iter().all(|s| *s == qi(0)) {
        slopes[rng.gen_range(0..h)] = qi(1);
    }
    if threshold {
        let drops = slopes
            .iter()
            .map(|c| {
                let top: i64 = (c * qi(4)).to_integer().try_into().unwrap();
                q(rng.gen_range(0..=top), 4)
            })
            .collect();
        Utility::Threshold(ThresholdInfluenceUtility {
            peak_slopes: slopes,
            drops,
            threshold_forms: forms,
        })
    } else {
        Utility::Linear(LinearInfluenceUtility {
            base_slopes: slopes,
            influence: forms,
        })
    }
}

/// Seeded market whose influence graph is hierarchical under `layout`.
pub fn tree_market(seed: u64, layout: &TreeLayout, h: usize) -> Market {
    let mut r = rng(seed);
    let m = layout.labels.len();
    let endow = unit_supply_endowments(&mut r, m, h);
    let traders = layout
        .labels
        .iter()
        .zip(endow)
        .map(|((id, _), w)| {
            let sources = layout.required_sources(id);
            let threshold = r.gen_bool(0.5);
            Trader::new(id.clone(), w, random_utility(&mut r, h, &sources, threshold))
        })
        .collect();
    Market::new(h, traders).unwrap()
}

/// Labels as a map, for building labelings by hand.
pub fn labels(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// Seeded market over `h` goods whose traders read a random subset of the
/// others. Mixed utility kinds; slopes, drops and weights on a 1/4 grid.
pub fn random_market(rng: &mut impl Rng, m: usize, h: usize) -> Market {
    let ids: Vec<String> = (0..m).map(|k| format!("T{}", k + 1)).collect();
    let endow = unit_supply_endowments(rng, m, h);
    let traders = ids
        .iter()
        .zip(endow)
        .map(|(id, w)| {
            let sources: Vec<String> = ids
                .iter()
                .filter(|s| *s != id && rng.gen_bool(0.5))
                .cloned()
                .collect();
            let threshold = rng.gen_bool(0.5);
            Trader::new(id.clone(), w, random_utility(rng, h, &sources, threshold))
        })
        .collect();
    Market::new(h, traders).unwrap()
}

/// Dense random profile with entries on a `1/den` grid in `[0, hi/den]`.
pub fn random_dense(rng: &mut impl Rng, m: usize, h: usize, hi: i64, den: i64) -> Vec<Vec<Q>> {
    (0..m)
        .map(|_| (0..h).map(|_| grid_q(rng, 0, hi, den)).collect())
        .collect()
}

/// Largest value of `floor(x * den) / den`.
pub fn floor_to(x: &Q, den: i64) -> Q {
    (x * qi(den)).floor() / qi(den)
}

/// Best utility of trader `k` over budget-feasible bundles on the `1/den`
/// grid, each entry at most `cap` when given. Utilities are monotone, so the
/// last coordinate is always pushed to the largest affordable grid value.
pub fn grid_best(
    market: &Market,
    k: usize,
    prices: &[Q],
    dense: &[Vec<Q>],
    cap: Option<&Q>,
    den: i64,
) -> Q {
    let search = GridSearch { market, k, prices, dense, cap, den };
    let budget = influence_market::rational::dot(&market.trader(k).endowment, prices);
    let mut x = vec![qi(0); market.good_count()];
    let mut best = None;
    search.walk(0, budget, &mut x, &mut best);
    best.unwrap()
}

struct GridSearch<'a> {
    market: &'a Market,
    k: usize,
    prices: &'a [Q],
    dense: &'a [Vec<Q>],
    cap: Option<&'a Q>,
    den: i64,
}

impl GridSearch<'_> {
    fn limit(&self, i: usize, money: &Q) -> Q {
        let v = floor_to(&(money / &self.prices[i]), self.den);
        match self.cap {
            Some(c) if *c < v => c.clone(),
            _ => v,
        }
    }

    fn walk(&self, i: usize, money: Q, x: &mut Vec<Q>, best: &mut Option<Q>) {
        if i + 1 == x.len() {
            x[i] = self.limit(i, &money);
            let u = self.market.utility_of(self.k, x, self.dense).unwrap();
            if best.as_ref().is_none_or(|b| u > *b) {
                *best = Some(u);
            }
            return;
        }
        let top = self.limit(i, &money);
        let mut v = qi(0);
        while v <= top {
            x[i] = v.clone();
            self.walk(i + 1, &money - &v * &self.prices[i], x, best);
            v += q(1, self.den);
        }
    }
}

/// One seeded optimal-bundle comparison against [`grid_best`] with step
/// 1/64: three goods use a unit box, fewer goods are unboxed. Returns whether
/// some greedy bundle landed on the grid.
pub fn bundle_oracle_case(seed: u64) -> Result<bool, String> {
    use influence_market::equilibrium::{optimal_bundle_at, BundleOutcome};
    use influence_market::rational::{dot, is_grid_multiple};
    const DEN: i64 = 64;
    let mut r = rng(seed);
    let (m, h) = (r.gen_range(1..=3), r.gen_range(1..=3));
    let market = random_market(&mut r, m, h);
    let dense = random_dense(&mut r, m, h, 8, 4);
    let prices: Vec<Q> = (0..h).map(|_| grid_q(&mut r, 1, 8, 8)).collect();
    let cap = (h == 3).then(|| qi(1));
    let mut on_grid = false;
    for k in 0..m {
        let id = &market.trader(k).id;
        let out = optimal_bundle_at(&market, k, &prices, &dense, cap.as_ref())
            .map_err(|e| format!("seed {seed} {id}: {e}"))?;
        let BundleOutcome::Optimal { value, bundle } = out else {
            return Err(format!("seed {seed} {id}: unbounded at positive prices"));
        };
        let budget = dot(&market.trader(k).endowment, &prices);
        if dot(&bundle, &prices) > budget {
            return Err(format!("seed {seed} {id}: greedy bundle overspends"));
        }
        if market.utility_of(k, &bundle, &dense).unwrap() != value {
            return Err(format!("seed {seed} {id}: reported value is not the bundle's utility"));
        }
        let grid = grid_best(&market, k, &prices, &dense, cap.as_ref(), DEN);
        if value < grid {
            return Err(format!("seed {seed} {id}: grid bundle worth {grid} beats {value}"));
        }
        if bundle.iter().all(|x| is_grid_multiple(x, DEN as u64)) {
            on_grid = true;
            if value != grid {
                return Err(format!("seed {seed} {id}: on-grid optimum {value} vs grid {grid}"));
            }
        }
    }
    Ok(on_grid)
}

/// Two-good market with a known exact equilibrium: the first half of the
/// traders own good 0 and prefer good 1, the rest the reverse. Prices are
/// at least `1/m`, and preferred-good slopes also read the other traders.
pub fn two_sided_market(
    rng: &mut impl Rng,
    m: usize,
) -> (Market, influence_market::equilibrium::EquilibriumCandidate) {
    use influence_market::equilibrium::EquilibriumCandidate;
    use influence_market::market::{AllocationProfile, PriceVector};
    let lo = 12 / m as i64;
    let p0 = grid_q(rng, lo, 12 - lo, 12);
    let p1 = qi(1) - &p0;
    let sellers0 = m.div_ceil(2);
    let ids: Vec<String> = (0..m).map(|k| format!("T{}", k + 1)).collect();
    let own: Vec<Q> = (0..m).map(|_| grid_q(rng, 1, 8, 8)).collect();
    let total0: Q = own[..sellers0].iter().sum();
    let raw1: Q = own[sellers0..].iter().sum();
    // good 1 endowments scaled so that both goods clear at (p0, p1)
    let scale1 = &p0 * &total0 / (&p1 * &raw1);
    let mut traders = Vec::new();
    let mut profile = AllocationProfile::new();
    for (k, id) in ids.iter().enumerate() {
        let (have, want) = if k < sellers0 { (0, 1) } else { (1, 0) };
        let amount = if k < sellers0 { own[k].clone() } else { &own[k] * &scale1 };
        let mut w = vec![qi(0); 2];
        w[have] = amount.clone();
        let mut x = vec![qi(0); 2];
        let price = [&p0, &p1];
        x[want] = &amount * price[have] / price[want];
        // bang-per-buck strictly favors `want`
        let mut c = vec![qi(0); 2];
        c[want] = grid_q(rng, 4, 8, 8);
        c[have] = &c[want] * price[have] / price[want] * grid_q(rng, 0, 3, 4);
        let mut forms = vec![LinearForm::empty(), LinearForm::empty()];
        let mut terms = Vec::new();
        for s in ids.iter().filter(|s| *s != id) {
            if rng.gen_bool(0.5) {
                terms.push(Term::new(s.clone(), rng.gen_range(0..2), grid_q(rng, 1, 4, 4)));
            }
        }
        forms[want] = LinearForm::new(terms);
        traders.push(Trader::new(
            id.clone(),
            w,
            Utility::Linear(LinearInfluenceUtility {
                base_slopes: c,
                influence: forms,
            }),
        ));
        profile.insert(id.clone(), x);
    }
    let market = Market::new(2, traders).unwrap();
    let cand = EquilibriumCandidate::new(PriceVector::normalized(vec![p0, p1]).unwrap(), profile);
    (market, cand)
}
