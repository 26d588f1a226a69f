//! Exact one-dimensional bin packing used for fleet sizing.
//!
//! First-fit-decreasing gives the initial incumbent, the Martello-Toth L2
//! bound gives the target, and a depth-first branch and bound closes the gap
//! when the two differ.

/// Splits per-location demands into unsplittable items: `d / cap` full items
/// plus one remainder item when `d % cap != 0`. Returns `(location, size)`.
pub fn split_demands(w: &[u32], cap: u32) -> Vec<(usize, u32)> {
    assert!(cap >= 1, "capacity must be at least 1");
    let mut items = Vec::new();
    for (j, &d) in w.iter().enumerate() {
        for _ in 0..d / cap {
            items.push((j, cap));
        }
        if d % cap != 0 {
            items.push((j, d % cap));
        }
    }
    items
}

/// Indices of `items` sorted by decreasing size, ties by index.
fn decreasing_order(items: &[u32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].cmp(&items[a]).then(a.cmp(&b)));
    order
}

pub fn first_fit_decreasing(items: &[u32], cap: u32) -> Vec<Vec<usize>> {
    let mut bins: Vec<(u32, Vec<usize>)> = Vec::new();
    for i in decreasing_order(items) {
        match bins.iter_mut().find(|(load, _)| load + items[i] <= cap) {
            Some((load, members)) => {
                *load += items[i];
                members.push(i);
            }
            None => bins.push((items[i], vec![i])),
        }
    }
    bins.into_iter().map(|(_, m)| m).collect()
}

/// Martello-Toth L2 lower bound on the number of bins.
pub fn lower_bound_l2(items: &[u32], cap: u32) -> usize {
    if items.is_empty() {
        return 0;
    }
    let cap = cap as u64;
    let mut best = 0u64;
    for k in 0..=cap / 2 {
        let (mut n1, mut n2, mut s2, mut s3) = (0u64, 0u64, 0u64, 0u64);
        for &s in items {
            let s = s as u64;
            if s > cap - k {
                n1 += 1;
            } else if 2 * s > cap {
                n2 += 1;
                s2 += s;
            } else if s >= k {
                s3 += s;
            }
        }
        let free = n2 * cap - s2;
        let extra = s3.saturating_sub(free).div_ceil(cap);
        best = best.max(n1 + n2 + extra);
    }
    best as usize
}

struct Search<'a> {
    items: &'a [u32],
    order: Vec<usize>,
    cap: u32,
    suffix: Vec<u64>,
    target: usize,
    best: Vec<Vec<usize>>,
    loads: Vec<u32>,
    members: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn dfs(&mut self, depth: usize) {
        if self.best.len() == self.target {
            return;
        }
        if depth == self.order.len() {
            if self.loads.len() < self.best.len() {
                self.best = self.members.clone();
            }
            return;
        }
        let open = self.loads.len();
        let residual: u64 = self.loads.iter().map(|&l| (self.cap - l) as u64).sum();
        let overflow = self.suffix[depth].saturating_sub(residual);
        let bound = open + overflow.div_ceil(self.cap as u64) as usize;
        if bound >= self.best.len() {
            return;
        }

        let item = self.order[depth];
        let size = self.items[item];
        let mut tried: Vec<u32> = Vec::new();
        for b in 0..open {
            let load = self.loads[b];
            if load + size > self.cap || tried.contains(&load) {
                continue;
            }
            tried.push(load);
            self.loads[b] += size;
            self.members[b].push(item);
            self.dfs(depth + 1);
            self.members[b].pop();
            self.loads[b] -= size;
        }
        if open + 1 < self.best.len() {
            self.loads.push(size);
            self.members.push(vec![item]);
            self.dfs(depth + 1);
            self.members.pop();
            self.loads.pop();
        }
    }
}

/// Optimal packing: each inner vector lists the item indices of one bin.
///
/// Panics if an item is larger than `cap` or zero-sized.
pub fn pack(items: &[u32], cap: u32) -> Vec<Vec<usize>> {
    assert!(items.iter().all(|&s| s >= 1 && s <= cap), "items must lie in 1..=cap");
    let incumbent = first_fit_decreasing(items, cap);
    let target = lower_bound_l2(items, cap);
    if incumbent.len() <= target {
        return incumbent;
    }
    let order = decreasing_order(items);
    let mut suffix = vec![0u64; order.len() + 1];
    for d in (0..order.len()).rev() {
        suffix[d] = suffix[d + 1] + items[order[d]] as u64;
    }
    let mut search = Search {
        items,
        order,
        cap,
        suffix,
        target,
        best: incumbent,
        loads: Vec::new(),
        members: Vec::new(),
    };
    search.dfs(0);
    search.best
}

pub fn min_bins(items: &[u32], cap: u32) -> usize {
    pack(items, cap).len()
}

/// Minimum number of vehicles of capacity `cap` that can carry the demand `w`
/// without splitting any item.
pub fn min_vehicles(w: &[u32], cap: u32) -> usize {
    let items: Vec<u32> = split_demands(w, cap).into_iter().map(|(_, s)| s).collect();
    min_bins(&items, cap)
}
