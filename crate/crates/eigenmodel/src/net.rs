//! Dynamic multilayer network data: binary symmetric dyad tensors over
//! (layer, time, node pair), file ingestion, and hold-out masking.
//!
//! Networks are undirected without self-loops, so each slice stores the
//! `n(n-1)/2` unordered pairs once. Every dyad additionally carries an
//! observed flag; reading the value of an unobserved dyad is an error, which
//! keeps estimation sums honest about the mask.
//!
//! On disk a network is an edge list (UTF-8 lines `k,t,i,j` with 1-based
//! indices, `#` comments allowed, absent dyads are implicit zeros) plus a
//! JSON metadata sidecar declaring `n_nodes`, `n_layers`, `n_steps` and
//! optional node `labels`. All in-memory indices in this crate are 0-based.

use std::io::BufRead;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Number of unordered node pairs among `n` nodes.
pub fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Index of the unordered pair `{i, j}` (0-based, `i != j`) in a slice.
pub fn pair_index(i: usize, j: usize) -> usize {
    let (hi, lo) = if i > j { (i, j) } else { (j, i) };
    hi * (hi - 1) / 2 + lo
}

/// Metadata sidecar for an edge-list file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub n_nodes: usize,
    pub n_layers: usize,
    pub n_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl NetworkMeta {
    pub fn new(n_nodes: usize, n_layers: usize, n_steps: usize) -> Self {
        NetworkMeta { n_nodes, n_layers, n_steps, labels: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::invalid("n_nodes must be at least 2"));
        }
        if self.n_layers == 0 || self.n_steps == 0 {
            return Err(Error::invalid("n_layers and n_steps must be positive"));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.n_nodes {
                return Err(Error::invalid(format!(
                    "{} labels given for {} nodes",
                    labels.len(),
                    self.n_nodes
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let meta: NetworkMeta = serde_json::from_str(text)?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes")
    }
}

/// A binary dynamic multilayer network with a per-dyad observation mask.
///
/// Immutable after construction; cheap to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicNetwork {
    n_nodes: usize,
    n_layers: usize,
    n_steps: usize,
    labels: Option<Vec<String>>,
    /// Dyad values, 0 or 1, in (k, t, pair) order.
    values: Vec<u8>,
    observed: Vec<bool>,
}

/// One held-out dyad together with its true value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldDyad {
    pub k: usize,
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub value: u8,
}

/// A train/test split of a fully observed network: `train` has the held-out
/// dyads masked out, `heldout` records their indices and true values.
#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub train: DynamicNetwork,
    pub heldout: Vec<HeldDyad>,
}

impl DynamicNetwork {
    /// An all-zero, fully observed network.
    pub fn empty(n_nodes: usize, n_layers: usize, n_steps: usize) -> Result<Self> {
        NetworkMeta::new(n_nodes, n_layers, n_steps).validate()?;
        let len = n_layers * n_steps * pair_count(n_nodes);
        Ok(DynamicNetwork {
            n_nodes,
            n_layers,
            n_steps,
            labels: None,
            values: vec![0; len],
            observed: vec![true; len],
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_pairs(&self) -> usize {
        pair_count(self.n_nodes)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn meta(&self) -> NetworkMeta {
        NetworkMeta {
            n_nodes: self.n_nodes,
            n_layers: self.n_layers,
            n_steps: self.n_steps,
            labels: self.labels.clone(),
        }
    }

    fn check_indices(&self, k: usize, t: usize, i: usize, j: usize) -> Result<()> {
        if k >= self.n_layers || t >= self.n_steps || i >= self.n_nodes || j >= self.n_nodes {
            return Err(Error::invalid(format!(
                "dyad index (k={k}, t={t}, i={i}, j={j}) out of range for \
                 K={}, T={}, n={}",
                self.n_layers, self.n_steps, self.n_nodes
            )));
        }
        if i == j {
            return Err(Error::invalid(format!("self-loop requested at node {i}")));
        }
        Ok(())
    }

    fn flat(&self, k: usize, t: usize, i: usize, j: usize) -> usize {
        (k * self.n_steps + t) * self.n_pairs() + pair_index(i, j)
    }

    pub(crate) fn slice_offset(&self, k: usize, t: usize) -> usize {
        (k * self.n_steps + t) * self.n_pairs()
    }

    pub(crate) fn slice_values(&self, k: usize, t: usize) -> &[u8] {
        let off = self.slice_offset(k, t);
        &self.values[off..off + self.n_pairs()]
    }

    pub(crate) fn slice_observed(&self, k: usize, t: usize) -> &[bool] {
        let off = self.slice_offset(k, t);
        &self.observed[off..off + self.n_pairs()]
    }

    /// Dyad value, symmetric in `(i, j)`. Errors on out-of-range indices,
    /// self-loops, and unobserved dyads.
    pub fn value(&self, k: usize, t: usize, i: usize, j: usize) -> Result<u8> {
        self.check_indices(k, t, i, j)?;
        let idx = self.flat(k, t, i, j);
        if !self.observed[idx] {
            return Err(Error::UnobservedDyad { k, t, i, j });
        }
        Ok(self.values[idx])
    }

    /// Whether a dyad is observed.
    pub fn observed(&self, k: usize, t: usize, i: usize, j: usize) -> Result<bool> {
        self.check_indices(k, t, i, j)?;
        Ok(self.observed[self.flat(k, t, i, j)])
    }

    /// Sets a dyad value on a fully observed network (builder use).
    pub fn set_value(&mut self, k: usize, t: usize, i: usize, j: usize, value: u8) -> Result<()> {
        self.check_indices(k, t, i, j)?;
        if value > 1 {
            return Err(Error::invalid(format!("dyad value must be 0 or 1, got {value}")));
        }
        let idx = self.flat(k, t, i, j);
        self.values[idx] = value;
        Ok(())
    }

    pub fn fully_observed(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    /// Count of observed dyads over all slices.
    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Count of observed edges (value 1) over all slices.
    pub fn edge_count(&self) -> usize {
        self.values
            .iter()
            .zip(&self.observed)
            .filter(|&(&v, &o)| o && v == 1)
            .count()
    }

    /// Node degrees of one fully observed slice.
    pub fn degrees(&self, k: usize, t: usize) -> Result<Vec<usize>> {
        let mut deg = vec![0usize; self.n_nodes];
        for i in 1..self.n_nodes {
            for j in 0..i {
                if self.value(k, t, i, j)? == 1 {
                    deg[i] += 1;
                    deg[j] += 1;
                }
            }
        }
        Ok(deg)
    }

    /// Parses an edge list against declared metadata. Lines are `k,t,i,j`
    /// with 1-based indices; `#` comments and blank lines are skipped;
    /// duplicates (in either node order) collapse to a single edge.
    pub fn from_edge_list<R: BufRead>(reader: R, meta: &NetworkMeta) -> Result<Self> {
        meta.validate()?;
        let mut net = DynamicNetwork::empty(meta.n_nodes, meta.n_layers, meta.n_steps)?;
        net.labels = meta.labels.clone();
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = text.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 4 comma-separated fields, got {}", fields.len()),
                });
            }
            let mut parsed = [0usize; 4];
            for (slot, field) in parsed.iter_mut().zip(&fields) {
                *slot = field.parse::<usize>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("invalid index {field:?}: {e}"),
                })?;
            }
            let [k, t, i, j] = parsed;
            if k == 0 || t == 0 || i == 0 || j == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    message: "indices are 1-based; 0 is out of range".into(),
                });
            }
            if k > meta.n_layers || t > meta.n_steps || i > meta.n_nodes || j > meta.n_nodes {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!(
                        "index out of declared range (n={}, K={}, T={})",
                        meta.n_nodes, meta.n_layers, meta.n_steps
                    ),
                });
            }
            if i == j {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("self-loop at node {i}"),
                });
            }
            net.set_value(k - 1, t - 1, i - 1, j - 1, 1)?;
        }
        Ok(net)
    }

    /// Serializes to edge-list text (1-based, sorted by `(k, t, i, j)`).
    /// Only fully observed networks can be represented as an edge list.
    pub fn to_edge_list(&self) -> Result<String> {
        if !self.fully_observed() {
            return Err(Error::invalid(
                "network has unobserved dyads; an edge list cannot represent a mask",
            ));
        }
        let mut out = String::new();
        for k in 0..self.n_layers {
            for t in 0..self.n_steps {
                for i in 1..self.n_nodes {
                    for j in 0..i {
                        if self.values[self.flat(k, t, i, j)] == 1 {
                            out.push_str(&format!("{},{},{},{}\n", k + 1, t + 1, i + 1, j + 1));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Marks every dyad unobserved (test scaffolding for masked sums).
    #[doc(hidden)]
    pub fn mask_all_dyads(&mut self) {
        self.observed.fill(false);
    }

    /// Masks `round(fraction * n(n-1)/2)` dyads per `(k, t)` slice, chosen
    /// uniformly without replacement; deterministic given `seed`.
    pub fn make_holdout(&self, fraction: f64, seed: u64) -> Result<HoldoutSplit> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::invalid(format!(
                "hold-out fraction must be in (0, 1), got {fraction}"
            )));
        }
        if !self.fully_observed() {
            return Err(Error::invalid("hold-out requires a fully observed network"));
        }
        let pairs = self.n_pairs();
        if fraction * (pairs as f64) < 1.0 {
            return Err(Error::invalid(format!(
                "hold-out fraction {fraction} selects less than one dyad per slice"
            )));
        }
        // Round-half-up per slice.
        let per_slice = (fraction * pairs as f64 + 0.5).floor() as usize;
        let mut train = self.clone();
        let mut heldout = Vec::with_capacity(per_slice * self.n_layers * self.n_steps);
        let mut pool: Vec<usize> = Vec::with_capacity(pairs);
        for k in 0..self.n_layers {
            for t in 0..self.n_steps {
                let mut rng = rng::stream(seed, &[0x484f_4c44, k as u64, t as u64]);
                pool.clear();
                pool.extend(0..pairs);
                // Partial Fisher-Yates: the first `per_slice` entries are a
                // uniform sample without replacement.
                for idx in 0..per_slice {
                    let swap = rng.random_range(idx..pairs);
                    pool.swap(idx, swap);
                }
                let mut chosen = pool[..per_slice].to_vec();
                chosen.sort_unstable();
                let off = self.slice_offset(k, t);
                for &p in &chosen {
                    train.observed[off + p] = false;
                    let (i, j) = pair_from_index(p);
                    heldout.push(HeldDyad { k, t, i, j, value: self.values[off + p] });
                }
            }
        }
        Ok(HoldoutSplit { train, heldout })
    }
}

/// Inverse of [`pair_index`]: the `(i, j)` pair with `j < i` at a flat index.
pub fn pair_from_index(p: usize) -> (usize, usize) {
    // Smallest i with i(i-1)/2 > p, minus adjustment.
    let i = ((1.0 + (1.0 + 8.0 * p as f64).sqrt()) / 2.0).floor() as usize;
    let i = if i * (i - 1) / 2 > p { i - 1 } else { i };
    let j = p - i * (i - 1) / 2;
    (i, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn meta(n: usize, k: usize, t: usize) -> NetworkMeta {
        NetworkMeta::new(n, k, t)
    }

    #[test]
    fn pair_index_round_trips() {
        let n = 17;
        for i in 1..n {
            for j in 0..i {
                let p = pair_index(i, j);
                assert_eq!(pair_index(j, i), p);
                assert_eq!(pair_from_index(p), (i, j));
            }
        }
    }

    #[test]
    fn single_edge_construction() {
        let net = DynamicNetwork::from_edge_list(Cursor::new("1,1,2,1\n"), &meta(3, 1, 1)).unwrap();
        assert_eq!(net.value(0, 0, 1, 0).unwrap(), 1);
        assert_eq!(net.value(0, 0, 0, 1).unwrap(), 1);
        assert_eq!(net.value(0, 0, 2, 0).unwrap(), 0);
        assert_eq!(net.value(0, 0, 2, 1).unwrap(), 0);
    }

    #[test]
    fn duplicate_orderings_collapse() {
        let a = DynamicNetwork::from_edge_list(Cursor::new("1,1,1,2\n1,1,2,1\n"), &meta(3, 1, 1))
            .unwrap();
        let b = DynamicNetwork::from_edge_list(Cursor::new("1,1,2,1\n"), &meta(3, 1, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn self_loop_is_rejected() {
        let err = DynamicNetwork::from_edge_list(Cursor::new("1,1,2,2\n"), &meta(3, 1, 1))
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = "# header\n1,1,2,1\n1,1,oops,1\n";
        let err =
            DynamicNetwork::from_edge_list(Cursor::new(text), &meta(3, 1, 1)).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let err = DynamicNetwork::from_edge_list(Cursor::new("2,1,2,1\n"), &meta(3, 1, 1))
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "1,2,3,1\n2,1,2,1\n1,1,3,2\n";
        let m = meta(3, 2, 2);
        let net = DynamicNetwork::from_edge_list(Cursor::new(text), &m).unwrap();
        let serialized = net.to_edge_list().unwrap();
        let reparsed = DynamicNetwork::from_edge_list(Cursor::new(serialized), &m).unwrap();
        assert_eq!(net, reparsed);
    }

    #[test]
    fn holdout_counts_and_determinism() {
        let net = DynamicNetwork::empty(5, 1, 1).unwrap();
        let split = net.make_holdout(0.2, 11).unwrap();
        assert_eq!(split.heldout.len(), 2);
        assert_eq!(split.train.observed_count(), 8);
        let again = net.make_holdout(0.2, 11).unwrap();
        assert_eq!(split.heldout, again.heldout);
        let different = net.make_holdout(0.2, 12).unwrap();
        assert_ne!(split.heldout, different.heldout);
    }

    #[test]
    fn holdout_counts_at_scale() {
        // 0.2 * 4950 = 990 per slice, 49,500 in total.
        let net = DynamicNetwork::empty(100, 5, 10).unwrap();
        let split = net.make_holdout(0.2, 3).unwrap();
        assert_eq!(split.heldout.len(), 49_500);
        for k in 0..5 {
            for t in 0..10 {
                let n = split.heldout.iter().filter(|h| h.k == k && h.t == t).count();
                assert_eq!(n, 990);
            }
        }
        // No duplicates, and hidden exactly where recorded.
        let mut seen = std::collections::HashSet::new();
        for h in &split.heldout {
            assert!(seen.insert((h.k, h.t, h.i, h.j)));
            assert!(!split.train.observed(h.k, h.t, h.i, h.j).unwrap());
            assert!(matches!(
                split.train.value(h.k, h.t, h.i, h.j),
                Err(Error::UnobservedDyad { .. })
            ));
        }
        assert_eq!(split.train.observed_count() + split.heldout.len(), 5 * 10 * 4950);
    }

    #[test]
    fn holdout_preserves_training_values() {
        let mut net = DynamicNetwork::empty(6, 2, 2).unwrap();
        let mut rng = crate::rng::stream(5, &[1]);
        for k in 0..2 {
            for t in 0..2 {
                for i in 1..6 {
                    for j in 0..i {
                        net.set_value(k, t, i, j, u8::from(rng.random_bool(0.4))).unwrap();
                    }
                }
            }
        }
        let split = net.make_holdout(0.3, 9).unwrap();
        for k in 0..2 {
            for t in 0..2 {
                for i in 1..6 {
                    for j in 0..i {
                        if split.train.observed(k, t, i, j).unwrap() {
                            assert_eq!(
                                split.train.value(k, t, i, j).unwrap(),
                                net.value(k, t, i, j).unwrap()
                            );
                        }
                    }
                }
            }
        }
        for h in &split.heldout {
            assert_eq!(h.value, net.value(h.k, h.t, h.i, h.j).unwrap());
        }
    }

    #[test]
    fn holdout_rejects_bad_inputs() {
        let net = DynamicNetwork::empty(5, 1, 1).unwrap();
        assert!(net.make_holdout(0.0, 1).is_err());
        assert!(net.make_holdout(1.0, 1).is_err());
        assert!(net.make_holdout(0.01, 1).is_err()); // selects < 1 dyad
        let split = net.make_holdout(0.2, 1).unwrap();
        assert!(split.train.make_holdout(0.2, 1).is_err()); // already masked
    }
}
