//! Grouping of filter taps into complex-plane clusters.
//!
//! Taps that land close together on the tap circle can share one value: a
//! clustered filter stores N_C centroids plus a length-M routing map that
//! assigns every tap position to its cluster. The equalizer then sums the
//! input samples routed to each cluster before multiplying once per
//! cluster, cutting the multiplication count from M to N_C per output.

use crate::error::{Error, Result};
use crate::taps::TapSet;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

/// N_C complex centroids plus the tap-position-to-cluster routing map.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredFilter {
    centroids: Vec<Complex64>,
    routing: Vec<usize>,
    /// Free-form provenance notes carried through the file format
    /// (e.g. fine-tuning metadata). Never interpreted by the engines.
    pub meta: Vec<(String, String)>,
}

impl ClusteredFilter {
    pub fn new(centroids: Vec<Complex64>, routing: Vec<usize>) -> Result<Self> {
        let n_c = centroids.len();
        let m = routing.len();
        if n_c == 0 {
            return Err(Error::invalid("clustered filter needs at least one centroid"));
        }
        if m == 0 || m % 2 == 0 {
            return Err(Error::invalid(format!(
                "routing length must be odd and nonzero, got {m}"
            )));
        }
        if n_c > m {
            return Err(Error::invalid(format!(
                "more clusters ({n_c}) than taps ({m})"
            )));
        }
        let mut used = vec![false; n_c];
        for (k, &w) in routing.iter().enumerate() {
            if w >= n_c {
                return Err(Error::invalid(format!(
                    "routing[{k}] = {w} out of range for {n_c} clusters"
                )));
            }
            used[w] = true;
        }
        if let Some(idx) = used.iter().position(|&u| !u) {
            return Err(Error::invalid(format!("cluster {idx} is empty")));
        }
        Ok(ClusteredFilter {
            centroids,
            routing,
            meta: Vec::new(),
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    /// Length M of the original filter.
    pub fn filter_len(&self) -> usize {
        self.routing.len()
    }

    pub fn centroids(&self) -> &[Complex64] {
        &self.centroids
    }

    pub fn routing(&self) -> &[usize] {
        &self.routing
    }

    /// Same routing with replacement centroids (fine-tuning output).
    pub fn with_centroids(&self, centroids: Vec<Complex64>) -> Result<Self> {
        if centroids.len() != self.n_clusters() {
            return Err(Error::invalid(format!(
                "expected {} centroids, got {}",
                self.n_clusters(),
                centroids.len()
            )));
        }
        Ok(ClusteredFilter {
            centroids,
            routing: self.routing.clone(),
            meta: self.meta.clone(),
        })
    }

    /// Serialize to the structured text format consumed by the equalizer
    /// engines and the fine-tuner (see FORMATS.md).
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cdeq-clustered-filter v1")?;
        writeln!(w, "clusters {}", self.n_clusters())?;
        writeln!(w, "taps {}", self.filter_len())?;
        for c in &self.centroids {
            writeln!(w, "centroid {} {}", c.re, c.im)?;
        }
        write!(w, "routing")?;
        for q in &self.routing {
            write!(w, " {q}")?;
        }
        writeln!(w)?;
        for (k, v) in &self.meta {
            writeln!(w, "meta {k} {v}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Format {
            what: "clustered-filter",
            path: path.to_path_buf(),
            message,
        };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("cdeq-clustered-filter v1") {
            return Err(bad("missing 'cdeq-clustered-filter v1' header".into()));
        }
        let mut n_c: Option<usize> = None;
        let mut m: Option<usize> = None;
        let mut centroids = Vec::new();
        let mut routing = Vec::new();
        let mut meta = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            match tag {
                "clusters" => {
                    n_c = Some(rest.trim().parse().map_err(|_| {
                        bad(format!("bad cluster count '{rest}'"))
                    })?);
                }
                "taps" => {
                    m = Some(rest.trim().parse().map_err(|_| {
                        bad(format!("bad tap count '{rest}'"))
                    })?);
                }
                "centroid" => {
                    let mut parts = rest.split_whitespace();
                    let re: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(format!("bad centroid line '{line}'")))?;
                    let im: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(format!("bad centroid line '{line}'")))?;
                    centroids.push(Complex64::new(re, im));
                }
                "routing" => {
                    for tok in rest.split_whitespace() {
                        routing.push(tok.parse().map_err(|_| {
                            bad(format!("bad routing entry '{tok}'"))
                        })?);
                    }
                }
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    meta.push((k.to_string(), v.to_string()));
                }
                other => return Err(bad(format!("unknown line tag '{other}'"))),
            }
        }
        if Some(centroids.len()) != n_c {
            return Err(bad(format!(
                "centroid count {} does not match declared {:?}",
                centroids.len(),
                n_c
            )));
        }
        if Some(routing.len()) != m {
            return Err(bad(format!(
                "routing length {} does not match declared {:?}",
                routing.len(),
                m
            )));
        }
        let mut cf = ClusteredFilter::new(centroids, routing)
            .map_err(|e| bad(e.to_string()))?;
        cf.meta = meta;
        Ok(cf)
    }
}

/// Lloyd-iteration controls. The defaults match common practice; `restarts`
/// reruns the seeded initialization and keeps the lowest-objective result,
/// still fully determined by the caller's seed.
#[derive(Debug, Clone)]
pub struct KmeansOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        KmeansOptions {
            max_iter: 300,
            tol: 1e-10,
            restarts: 16,
        }
    }
}

/// Cluster the taps in the complex plane with seeded k-means.
///
/// Standard Lloyd iteration over the points (Re g[k], Im g[k]) with
/// k-means++ initialization; empty clusters are repaired by reassigning the
/// point farthest from its centroid. Deterministic given the seed.
pub fn kmeans_cluster(
    taps: &TapSet,
    n_clusters: usize,
    seed: u64,
    opts: &KmeansOptions,
) -> Result<ClusteredFilter> {
    let points = taps.taps();
    let m = points.len();
    if n_clusters < 1 {
        return Err(Error::invalid("cluster count must be >= 1"));
    }
    if n_clusters > m {
        return Err(Error::invalid(format!(
            "cluster count {n_clusters} exceeds tap count {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let restarts = opts.restarts.max(1);
    let mut best: Option<(f64, Vec<Complex64>, Vec<usize>)> = None;
    for _ in 0..restarts {
        let init = kmeanspp_init(points, n_clusters, &mut rng);
        let (centroids, routing, wcss_history) =
            lloyd(points, init, opts.max_iter, opts.tol);
        let wcss = *wcss_history.last().expect("at least one iteration");
        if best.as_ref().map_or(true, |(b, _, _)| wcss < *b) {
            best = Some((wcss, centroids, routing));
        }
    }
    let (_, centroids, routing) = best.expect("restarts >= 1");
    ClusteredFilter::new(centroids, routing)
}

fn dist2(a: Complex64, b: Complex64) -> f64 {
    let d = a - b;
    d.re * d.re + d.im * d.im
}

fn kmeanspp_init(points: &[Complex64], k: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let n = points.len();
    let mut chosen_idx = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|&p| dist2(p, points[chosen_idx[0]]))
        .collect();
    while chosen_idx.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // All remaining points coincide with chosen centroids
            // (duplicate taps); take the first index not yet chosen.
            (0..n)
                .find(|i| !chosen_idx.contains(i))
                .expect("k <= n guarantees an unchosen point")
        };
        chosen_idx.push(next);
        for (i, &p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, points[next]));
        }
    }
    chosen_idx.into_iter().map(|i| points[i]).collect()
}

/// One Lloyd run. Returns (centroids, assignment, per-iteration WCSS).
/// Exposed to tests so the objective's monotone descent can be checked.
pub(crate) fn lloyd(
    points: &[Complex64],
    mut centroids: Vec<Complex64>,
    max_iter: usize,
    tol: f64,
) -> (Vec<Complex64>, Vec<usize>, Vec<f64>) {
    let n = points.len();
    let k = centroids.len();
    let mut assign = vec![0usize; n];
    let mut wcss_history = Vec::new();
    for _ in 0..max_iter.max(1) {
        // Assignment: nearest centroid, ties to the lowest index.
        for (i, &p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = dist2(p, centroids[0]);
            for (c, &g) in centroids.iter().enumerate().skip(1) {
                let d = dist2(p, g);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assign[i] = best;
        }
        repair_empty_clusters(points, &mut centroids, &mut assign);
        wcss_history.push(
            points
                .iter()
                .zip(&assign)
                .map(|(&p, &c)| dist2(p, centroids[c]))
                .sum(),
        );
        // Update: cluster means.
        let mut sums = vec![Complex64::new(0.0, 0.0); k];
        let mut counts = vec![0usize; k];
        for (i, &p) in points.iter().enumerate() {
            sums[assign[i]] += p;
            counts[assign[i]] += 1;
        }
        let mut movement = 0.0f64;
        for c in 0..k {
            let new = sums[c] / counts[c] as f64;
            movement = movement.max((new - centroids[c]).norm());
            centroids[c] = new;
        }
        if movement < tol {
            // Final assignment against the converged centroids.
            for (i, &p) in points.iter().enumerate() {
                let mut best = 0usize;
                let mut best_d = dist2(p, centroids[0]);
                for (c, &g) in centroids.iter().enumerate().skip(1) {
                    let d = dist2(p, g);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                assign[i] = best;
            }
            repair_empty_clusters(points, &mut centroids, &mut assign);
            break;
        }
    }
    (centroids, assign, wcss_history)
}

/// Give every empty cluster the point farthest from its current centroid,
/// taken from a cluster that can spare one. With duplicate taps all
/// distances can be zero; any member of a multi-point cluster then works
/// and keeps the objective unchanged.
fn repair_empty_clusters(
    points: &[Complex64],
    centroids: &mut [Complex64],
    assign: &mut [usize],
) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assign.iter() {
        counts[a] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (i, &p) in points.iter().enumerate() {
            if counts[assign[i]] < 2 {
                continue;
            }
            let d = dist2(p, centroids[assign[i]]);
            if donor.map_or(true, |(_, bd)| d > bd) {
                donor = Some((i, d));
            }
        }
        let (i, _) = donor.expect("k <= n guarantees a donor point");
        counts[assign[i]] -= 1;
        assign[i] = c;
        counts[c] = 1;
        centroids[c] = points[i];
    }
}

/// Expand a clustered filter back to a full tap list:
/// taps[k] = centroids[routing[k]].
pub fn reconstruct_taps(cf: &ClusteredFilter) -> TapSet {
    let taps = cf
        .routing()
        .iter()
        .map(|&w| cf.centroids()[w])
        .collect();
    TapSet::new(taps).expect("clustered filters always have odd length")
}

/// Per-tap approximation error of a clustering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterError {
    pub max_abs: f64,
    pub rms: f64,
}

/// Max and RMS of |g[k] - g_C[Q[k]]| over the tap positions.
pub fn clustering_error(taps: &TapSet, cf: &ClusteredFilter) -> Result<ClusterError> {
    if taps.len() != cf.filter_len() {
        return Err(Error::invalid(format!(
            "tap count {} does not match routing length {}",
            taps.len(),
            cf.filter_len()
        )));
    }
    let mut max_abs = 0.0f64;
    let mut sum_sq = 0.0f64;
    for (t, &w) in taps.taps().iter().zip(cf.routing()) {
        let e = (t - cf.centroids()[w]).norm();
        max_abs = max_abs.max(e);
        sum_sq += e * e;
    }
    Ok(ClusterError {
        max_abs,
        rms: (sum_sq / taps.len() as f64).sqrt(),
    })
}

/// Within-cluster sum of squares of a clustering against the taps it
/// approximates.
pub fn wcss(taps: &TapSet, cf: &ClusteredFilter) -> Result<f64> {
    if taps.len() != cf.filter_len() {
        return Err(Error::invalid("length mismatch"));
    }
    Ok(taps
        .taps()
        .iter()
        .zip(cf.routing())
        .map(|(&t, &w)| dist2(t, cf.centroids()[w]))
        .sum())
}
