//! Edmonds' blossom algorithm for maximum-weight matching, O(n^3).
//!
//! Follows the classic primal-dual formulation with nested blossoms. Vertex
//! duals, blossom duals and slacks are integers; input weights are doubled so
//! that every dual update of half a slack stays integral.

const LABEL_S: u8 = 1;
const LABEL_T: u8 = 2;
const BREADCRUMB: u8 = 4;

#[derive(Clone, Copy)]
struct Neighbor {
    vertex: usize,
    /// Remote endpoint index.
    endpoint: usize,
    weight: i64,
}

struct Solver<'a> {
    n: usize,
    edges: &'a [(usize, usize, i64)],
    /// `endpoint[p]` is the vertex at endpoint `p`; edge `k` has endpoints
    /// `2k` and `2k + 1`.
    endpoint: Vec<usize>,
    /// Incident edges of each vertex, stored contiguously so that scanning a
    /// vertex does not chase into the global edge arrays.
    adj: Vec<Vec<Neighbor>>,
    /// Remote endpoint of each vertex's matched edge.
    mate: Vec<Option<usize>>,
    label: Vec<u8>,
    labelend: Vec<Option<usize>>,
    inblossom: Vec<usize>,
    blossomparent: Vec<Option<usize>>,
    blossomchilds: Vec<Vec<usize>>,
    blossombase: Vec<Option<usize>>,
    blossomendps: Vec<Vec<usize>>,
    bestedge: Vec<Option<usize>>,
    blossombestedges: Vec<Option<Vec<usize>>>,
    unusedblossoms: Vec<usize>,
    dualvar: Vec<i64>,
    allowedge: Vec<bool>,
    queue: Vec<usize>,
}

/// Optimal matching together with the final dual solution.
pub(super) struct Solution {
    pub mate: Vec<Option<usize>>,
    dualvar: Vec<i64>,
    blossomparent: Vec<Option<usize>>,
}

impl Solution {
    /// Reduced cost of a (possibly absent) edge `(i, j)` of input weight `w`
    /// under the final duals. Every edge of the solved graph has slack >= 0;
    /// if an outside edge does too, adding it cannot improve the matching.
    pub fn slack(&self, i: usize, j: usize, w: i64) -> i64 {
        let mut s = self.dualvar[i] + self.dualvar[j] - 4 * w;
        let mut ancestors = Vec::new();
        let mut b = self.blossomparent[i];
        while let Some(x) = b {
            ancestors.push(x);
            b = self.blossomparent[x];
        }
        let mut b = self.blossomparent[j];
        while let Some(x) = b {
            if ancestors.contains(&x) {
                s += 2 * self.dualvar[x];
            }
            b = self.blossomparent[x];
        }
        s
    }
}

/// Solves the instance. Edge weights must be positive.
pub(super) fn solve(n: usize, input: &[(usize, usize, i64)]) -> Solution {
    let edges: Vec<(usize, usize, i64)> = input.iter().map(|&(a, b, w)| (a, b, 2 * w)).collect();
    let mut s = Solver::new(n, &edges);
    s.run();
    Solution {
        mate: s.mate.iter().map(|m| m.map(|p| s.endpoint[p])).collect(),
        dualvar: s.dualvar,
        blossomparent: s.blossomparent,
    }
}

impl<'a> Solver<'a> {
    fn new(n: usize, edges: &'a [(usize, usize, i64)]) -> Self {
        let maxweight = edges.iter().map(|e| e.2).max().unwrap_or(0);
        let endpoint: Vec<usize> = edges.iter().flat_map(|&(a, b, _)| [a, b]).collect();
        let mut adj = vec![Vec::new(); n];
        for (k, &(i, j, w)) in edges.iter().enumerate() {
            adj[i].push(Neighbor {
                vertex: j,
                endpoint: 2 * k + 1,
                weight: w,
            });
            adj[j].push(Neighbor {
                vertex: i,
                endpoint: 2 * k,
                weight: w,
            });
        }
        let mut dualvar = vec![maxweight; n];
        dualvar.extend(std::iter::repeat_n(0, n));
        Solver {
            n,
            edges,
            endpoint,
            adj,
            mate: vec![None; n],
            label: vec![0; 2 * n],
            labelend: vec![None; 2 * n],
            inblossom: (0..n).collect(),
            blossomparent: vec![None; 2 * n],
            blossomchilds: vec![Vec::new(); 2 * n],
            blossombase: (0..n).map(Some).chain(std::iter::repeat_n(None, n)).collect(),
            blossomendps: vec![Vec::new(); 2 * n],
            bestedge: vec![None; 2 * n],
            blossombestedges: vec![None; 2 * n],
            unusedblossoms: (n..2 * n).rev().collect(),
            dualvar,
            allowedge: vec![false; edges.len()],
            queue: Vec::new(),
        }
    }

    fn slack(&self, k: usize) -> i64 {
        let (i, j, w) = self.edges[k];
        self.dualvar[i] + self.dualvar[j] - 2 * w
    }

    fn leaves(&self, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(b, &mut out);
        out
    }

    fn collect_leaves(&self, b: usize, out: &mut Vec<usize>) {
        if b < self.n {
            out.push(b);
        } else {
            for &t in &self.blossomchilds[b] {
                self.collect_leaves(t, out);
            }
        }
    }

    fn assign_label(&mut self, w: usize, t: u8, p: Option<usize>) {
        let b = self.inblossom[w];
        debug_assert!(self.label[w] == 0 && self.label[b] == 0);
        self.label[w] = t;
        self.label[b] = t;
        self.labelend[w] = p;
        self.labelend[b] = p;
        self.bestedge[w] = None;
        self.bestedge[b] = None;
        if t == LABEL_S {
            let leaves = self.leaves(b);
            self.queue.extend(leaves);
        } else {
            let base = self.blossombase[b].expect("labelled blossom has a base");
            let m = self.mate[base].expect("T-blossom base is matched");
            self.assign_label(self.endpoint[m], LABEL_S, Some(m ^ 1));
        }
    }

    /// Traces back from `v` and `w` to find either a new blossom (returns its
    /// base) or an augmenting path (returns `None`).
    fn scan_blossom(&mut self, v: usize, w: usize) -> Option<usize> {
        let mut path = Vec::new();
        let mut base = None;
        let (mut v, mut w) = (Some(v), Some(w));
        while let Some(vv) = v {
            let mut b = self.inblossom[vv];
            if self.label[b] & BREADCRUMB != 0 {
                base = self.blossombase[b];
                break;
            }
            path.push(b);
            self.label[b] = LABEL_S | BREADCRUMB;
            match self.labelend[b] {
                None => v = None,
                Some(le) => {
                    let t = self.endpoint[le];
                    b = self.inblossom[t];
                    let le = self.labelend[b].expect("T-blossom has a label end");
                    v = Some(self.endpoint[le]);
                }
            }
            if w.is_some() {
                std::mem::swap(&mut v, &mut w);
            }
        }
        for b in path {
            self.label[b] = LABEL_S;
        }
        base
    }

    fn add_blossom(&mut self, base: usize, k: usize) {
        let n = self.n;
        let (mut v, mut w, _) = self.edges[k];
        let bb = self.inblossom[base];
        let mut bv = self.inblossom[v];
        let mut bw = self.inblossom[w];
        let b = self.unusedblossoms.pop().expect("at most n blossoms exist");
        self.blossombase[b] = Some(base);
        self.blossomparent[b] = None;
        self.blossomparent[bb] = Some(b);
        let mut path = Vec::new();
        let mut endps = Vec::new();
        while bv != bb {
            self.blossomparent[bv] = Some(b);
            path.push(bv);
            let le = self.labelend[bv].unwrap();
            endps.push(le);
            v = self.endpoint[le];
            bv = self.inblossom[v];
        }
        path.push(bb);
        path.reverse();
        endps.reverse();
        endps.push(2 * k);
        while bw != bb {
            self.blossomparent[bw] = Some(b);
            path.push(bw);
            let le = self.labelend[bw].unwrap();
            endps.push(le ^ 1);
            w = self.endpoint[le];
            bw = self.inblossom[w];
        }
        self.label[b] = LABEL_S;
        self.labelend[b] = self.labelend[bb];
        self.dualvar[b] = 0;
        self.blossomchilds[b] = path.clone();
        self.blossomendps[b] = endps;
        for leaf in self.leaves(b) {
            if self.label[self.inblossom[leaf]] == LABEL_T {
                self.queue.push(leaf);
            }
            self.inblossom[leaf] = b;
        }

        let mut bestedgeto: Vec<Option<usize>> = vec![None; 2 * n];
        for &child in &path {
            let lists: Vec<Vec<usize>> = match self.blossombestedges[child].take() {
                Some(list) => vec![list],
                None => self
                    .leaves(child)
                    .into_iter()
                    .map(|leaf| self.adj[leaf].iter().map(|nb| nb.endpoint / 2).collect())
                    .collect(),
            };
            for list in lists {
                for k in list {
                    let (i, mut j, _) = self.edges[k];
                    if self.inblossom[j] == b {
                        j = i;
                    }
                    let bj = self.inblossom[j];
                    if bj != b
                        && self.label[bj] == LABEL_S
                        && bestedgeto[bj].is_none_or(|be| self.slack(k) < self.slack(be))
                    {
                        bestedgeto[bj] = Some(k);
                    }
                }
            }
            self.bestedge[child] = None;
        }
        let list: Vec<usize> = bestedgeto.into_iter().flatten().collect();
        let mut best: Option<usize> = None;
        for &k in &list {
            if best.is_none_or(|be| self.slack(k) < self.slack(be)) {
                best = Some(k);
            }
        }
        self.bestedge[b] = best;
        self.blossombestedges[b] = Some(list);
    }

    fn expand_blossom(&mut self, b: usize, endstage: bool) {
        let n = self.n;
        let childs = self.blossomchilds[b].clone();
        for &s in &childs {
            self.blossomparent[s] = None;
            if s < n {
                self.inblossom[s] = s;
            } else if endstage && self.dualvar[s] == 0 {
                self.expand_blossom(s, endstage);
            } else {
                for leaf in self.leaves(s) {
                    self.inblossom[leaf] = s;
                }
            }
        }
        if !endstage && self.label[b] == LABEL_T {
            // relabel the children along the even path from the entry child
            // to the base; the rest become free or keep their S-labels
            let len = childs.len() as isize;
            let at = |j: isize| j.rem_euclid(len) as usize;
            let endps = self.blossomendps[b].clone();
            let lb = self.labelend[b].unwrap();
            let entrychild = self.inblossom[self.endpoint[lb ^ 1]];
            let mut j = childs.iter().position(|&c| c == entrychild).unwrap() as isize;
            let (jstep, trick): (isize, usize) = if j & 1 == 1 {
                j -= len;
                (1, 0)
            } else {
                (-1, 1)
            };
            let mut p = lb;
            while j != 0 {
                self.label[self.endpoint[p ^ 1]] = 0;
                let q = endps[at(j - trick as isize)];
                self.label[self.endpoint[q ^ trick ^ 1]] = 0;
                self.assign_label(self.endpoint[p ^ 1], LABEL_T, Some(p));
                self.allowedge[q / 2] = true;
                j += jstep;
                p = endps[at(j - trick as isize)] ^ trick;
                self.allowedge[p / 2] = true;
                j += jstep;
            }
            let bv = childs[at(j)];
            let ep = self.endpoint[p ^ 1];
            self.label[ep] = LABEL_T;
            self.label[bv] = LABEL_T;
            self.labelend[ep] = Some(p);
            self.labelend[bv] = Some(p);
            self.bestedge[bv] = None;
            j += jstep;
            while childs[at(j)] != entrychild {
                let bv = childs[at(j)];
                if self.label[bv] == LABEL_S {
                    j += jstep;
                    continue;
                }
                let reached = self.leaves(bv).into_iter().find(|&leaf| self.label[leaf] != 0);
                if let Some(leaf) = reached {
                    self.label[leaf] = 0;
                    let base = self.blossombase[bv].unwrap();
                    let m = self.mate[base].unwrap();
                    self.label[self.endpoint[m]] = 0;
                    self.assign_label(leaf, LABEL_T, self.labelend[leaf]);
                }
                j += jstep;
            }
        }
        self.label[b] = 0;
        self.labelend[b] = None;
        self.blossomchilds[b].clear();
        self.blossomendps[b].clear();
        self.blossombase[b] = None;
        self.blossombestedges[b] = None;
        self.bestedge[b] = None;
        self.unusedblossoms.push(b);
    }

    /// Swaps matched and unmatched edges along the even path from `v` to the
    /// base of blossom `b`, making `v` the new base.
    fn augment_blossom(&mut self, b: usize, v: usize) {
        let n = self.n;
        let mut t = v;
        while self.blossomparent[t] != Some(b) {
            t = self.blossomparent[t].unwrap();
        }
        if t >= n {
            self.augment_blossom(t, v);
        }
        let len = self.blossomchilds[b].len() as isize;
        let at = |j: isize| j.rem_euclid(len) as usize;
        let i = self.blossomchilds[b].iter().position(|&c| c == t).unwrap();
        let mut j = i as isize;
        let (jstep, trick): (isize, usize) = if i & 1 == 1 {
            j -= len;
            (1, 0)
        } else {
            (-1, 1)
        };
        while j != 0 {
            j += jstep;
            let t = self.blossomchilds[b][at(j)];
            let p = self.blossomendps[b][at(j - trick as isize)] ^ trick;
            if t >= n {
                self.augment_blossom(t, self.endpoint[p]);
            }
            j += jstep;
            let t = self.blossomchilds[b][at(j)];
            if t >= n {
                self.augment_blossom(t, self.endpoint[p ^ 1]);
            }
            self.mate[self.endpoint[p]] = Some(p ^ 1);
            self.mate[self.endpoint[p ^ 1]] = Some(p);
        }
        self.blossomchilds[b].rotate_left(i);
        self.blossomendps[b].rotate_left(i);
        self.blossombase[b] = self.blossombase[self.blossomchilds[b][0]];
    }

    fn augment_matching(&mut self, k: usize) {
        let n = self.n;
        let (v, w, _) = self.edges[k];
        for (mut s, mut p) in [(v, 2 * k + 1), (w, 2 * k)] {
            loop {
                let bs = self.inblossom[s];
                if bs >= n {
                    self.augment_blossom(bs, s);
                }
                self.mate[s] = Some(p);
                let Some(le) = self.labelend[bs] else { break };
                let t = self.endpoint[le];
                let bt = self.inblossom[t];
                let lt = self.labelend[bt].unwrap();
                s = self.endpoint[lt];
                let j = self.endpoint[lt ^ 1];
                if bt >= n {
                    self.augment_blossom(bt, j);
                }
                self.mate[j] = Some(lt);
                p = lt ^ 1;
            }
        }
    }

    fn run(&mut self) {
        let n = self.n;
        for _ in 0..n {
            self.label.fill(0);
            self.bestedge.fill(None);
            for b in n..2 * n {
                self.blossombestedges[b] = None;
            }
            self.allowedge.fill(false);
            self.queue.clear();
            for v in 0..n {
                if self.mate[v].is_none() && self.label[self.inblossom[v]] == 0 {
                    self.assign_label(v, LABEL_S, None);
                }
            }

            let mut augmented = false;
            loop {
                while !augmented {
                    let Some(v) = self.queue.pop() else { break };
                    for idx in 0..self.adj[v].len() {
                        let nb = self.adj[v][idx];
                        let (p, w) = (nb.endpoint, nb.vertex);
                        let k = p / 2;
                        if self.inblossom[v] == self.inblossom[w] {
                            continue;
                        }
                        let mut kslack = 0;
                        if !self.allowedge[k] {
                            kslack = self.dualvar[v] + self.dualvar[w] - 2 * nb.weight;
                            if kslack <= 0 {
                                self.allowedge[k] = true;
                            }
                        }
                        let bw_label = self.label[self.inblossom[w]];
                        if self.allowedge[k] {
                            if bw_label == 0 {
                                self.assign_label(w, LABEL_T, Some(p ^ 1));
                            } else if bw_label == LABEL_S {
                                match self.scan_blossom(v, w) {
                                    Some(base) => self.add_blossom(base, k),
                                    None => {
                                        self.augment_matching(k);
                                        augmented = true;
                                        break;
                                    }
                                }
                            } else if self.label[w] == 0 {
                                self.label[w] = LABEL_T;
                                self.labelend[w] = Some(p ^ 1);
                            }
                        } else if bw_label == LABEL_S {
                            let b = self.inblossom[v];
                            if self.bestedge[b].is_none_or(|be| kslack < self.slack(be)) {
                                self.bestedge[b] = Some(k);
                            }
                        } else if self.label[w] == 0
                            && self.bestedge[w].is_none_or(|be| kslack < self.slack(be))
                        {
                            self.bestedge[w] = Some(k);
                        }
                    }
                }
                if augmented {
                    break;
                }

                // no augmenting path under the current duals: pick the
                // smallest dual change that creates a new tight edge
                let mut deltatype = 1;
                let mut delta = self.dualvar[..n].iter().copied().min().unwrap_or(0);
                let mut deltaedge = None;
                let mut deltablossom = None;
                for v in 0..n {
                    if self.label[self.inblossom[v]] == 0 {
                        if let Some(be) = self.bestedge[v] {
                            let d = self.slack(be);
                            if d < delta {
                                delta = d;
                                deltatype = 2;
                                deltaedge = Some(be);
                            }
                        }
                    }
                }
                for b in 0..2 * n {
                    if self.blossomparent[b].is_none() && self.label[b] == LABEL_S {
                        if let Some(be) = self.bestedge[b] {
                            let d = self.slack(be) / 2;
                            if d < delta {
                                delta = d;
                                deltatype = 3;
                                deltaedge = Some(be);
                            }
                        }
                    }
                }
                for b in n..2 * n {
                    if self.blossombase[b].is_some()
                        && self.blossomparent[b].is_none()
                        && self.label[b] == LABEL_T
                        && self.dualvar[b] < delta
                    {
                        delta = self.dualvar[b];
                        deltatype = 4;
                        deltablossom = Some(b);
                    }
                }

                for v in 0..n {
                    match self.label[self.inblossom[v]] {
                        LABEL_S => self.dualvar[v] -= delta,
                        LABEL_T => self.dualvar[v] += delta,
                        _ => {}
                    }
                }
                for b in n..2 * n {
                    if self.blossombase[b].is_some() && self.blossomparent[b].is_none() {
                        match self.label[b] {
                            LABEL_S => self.dualvar[b] += delta,
                            LABEL_T => self.dualvar[b] -= delta,
                            _ => {}
                        }
                    }
                }

                match deltatype {
                    1 => break,
                    2 => {
                        let k = deltaedge.unwrap();
                        self.allowedge[k] = true;
                        let (mut i, j, _) = self.edges[k];
                        if self.label[self.inblossom[i]] == 0 {
                            i = j;
                        }
                        self.queue.push(i);
                    }
                    3 => {
                        let k = deltaedge.unwrap();
                        self.allowedge[k] = true;
                        let (i, _, _) = self.edges[k];
                        self.queue.push(i);
                    }
                    _ => self.expand_blossom(deltablossom.unwrap(), false),
                }
            }

            if !augmented {
                break;
            }
            for b in n..2 * n {
                if self.blossomparent[b].is_none()
                    && self.blossombase[b].is_some()
                    && self.label[b] == LABEL_S
                    && self.dualvar[b] == 0
                {
                    self.expand_blossom(b, true);
                }
            }
        }
    }
}
