//! Pre-sorting and fixed per-feature bin layouts.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const MAX_BINS: usize = 256;

/// For every feature, the row indices ordered by ascending feature value
/// (ties keep row order).
pub fn presort(ds: &Dataset) -> Vec<Vec<usize>> {
    (0..ds.n_cols())
        .into_par_iter()
        .map(|j| {
            let mut idx: Vec<usize> = (0..ds.n_rows()).collect();
            idx.sort_by(|&a, &b| ds.value(a, j).total_cmp(&ds.value(b, j)));
            idx
        })
        .collect()
}

/// Bin edges for every feature plus the bin index of every training cell.
///
/// Bin `b` of feature `j` holds the values `x` with
/// `edges[j][b-1] < x <= edges[j][b]` (the first bin is open below, the last
/// open above). Bin indices are stored column-major.
#[derive(Debug, Clone)]
pub struct HistogramLayout {
    n_rows: usize,
    edges: Vec<Vec<f64>>,
    bins: Vec<u8>,
}

impl HistogramLayout {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.edges.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    pub fn edges(&self, feature: usize) -> &[f64] {
        &self.edges[feature]
    }

    /// Bin indices of all training rows for one feature.
    #[inline]
    pub fn column_bins(&self, feature: usize) -> &[u8] {
        &self.bins[feature * self.n_rows..(feature + 1) * self.n_rows]
    }

    #[inline]
    pub fn bin(&self, row: usize, feature: usize) -> u8 {
        self.bins[feature * self.n_rows + row]
    }

    /// Bin of an arbitrary value: the first bin whose upper edge is `>= x`.
    pub fn bin_of(&self, feature: usize, x: f64) -> usize {
        self.edges[feature].partition_point(|&e| e < x)
    }

    /// Split threshold that separates bins `..=b` from `b+1..`.
    pub fn threshold(&self, feature: usize, b: usize) -> f64 {
        self.edges[feature][b]
    }
}

/// Point strictly between `lo < hi` that is `>= lo` and `< hi`.
fn boundary(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi || mid < lo {
        lo
    } else {
        mid
    }
}

/// Builds bin edges greedily over the sorted values so that each bin gets
/// roughly `n / h_bins` rows; equal values always share a bin.
pub fn build_histograms(
    ds: &Dataset,
    presorted: &[Vec<usize>],
    h_bins: usize,
) -> Result<HistogramLayout> {
    if !(2..=MAX_BINS).contains(&h_bins) {
        return Err(Error::InvalidParam(format!(
            "hist_nbins must be in [2, {MAX_BINS}], got {h_bins}"
        )));
    }
    if presorted.len() != ds.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: ds.n_cols(),
            got: presorted.len(),
        });
    }
    let n = ds.n_rows();
    let per_feature: Vec<(Vec<f64>, Vec<u8>)> = presorted
        .par_iter()
        .enumerate()
        .map(|(j, order)| feature_bins(ds, j, order, h_bins))
        .collect();

    let mut edges = Vec::with_capacity(ds.n_cols());
    let mut bins = Vec::with_capacity(n * ds.n_cols());
    for (e, b) in per_feature {
        edges.push(e);
        bins.extend_from_slice(&b);
    }
    Ok(HistogramLayout {
        n_rows: n,
        edges,
        bins,
    })
}

fn feature_bins(ds: &Dataset, j: usize, order: &[usize], h_bins: usize) -> (Vec<f64>, Vec<u8>) {
    let n = order.len();
    // Runs of equal values along the sorted order: (value, start, len).
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (pos, &row) in order.iter().enumerate() {
        let v = ds.value(row, j);
        match groups.last_mut() {
            Some((gv, _, len)) if *gv == v => *len += 1,
            _ => groups.push((v, pos, 1)),
        }
    }

    // Index of the last group in each bin.
    let mut closes: Vec<usize> = Vec::new();
    if groups.len() <= h_bins {
        closes.extend(0..groups.len());
    } else {
        let mut remaining = n;
        let mut bins_left = h_bins;
        let mut current = 0usize;
        for (g, &(_, _, len)) in groups.iter().enumerate() {
            current += len;
            let last = g + 1 == groups.len();
            let target = remaining as f64 / bins_left as f64;
            if last || (bins_left > 1 && current as f64 >= target) {
                closes.push(g);
                remaining -= current;
                bins_left = bins_left.saturating_sub(1);
                current = 0;
            }
        }
    }

    let mut edges = Vec::with_capacity(closes.len().saturating_sub(1));
    let mut bins = vec![0u8; n];
    let mut first = 0usize;
    for (b, &last) in closes.iter().enumerate() {
        for &(_, start, len) in &groups[first..=last] {
            for &row in &order[start..start + len] {
                bins[row] = b as u8;
            }
        }
        if last + 1 < groups.len() {
            edges.push(boundary(groups[last].0, groups[last + 1].0));
        }
        first = last + 1;
    }
    (edges, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn column(values: &[f64]) -> Dataset {
        Dataset::new(
            values.to_vec(),
            values.len(),
            1,
            vec![0.0; values.len()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn presort_small() {
        let ds = column(&[3.0, 1.0, 2.0]);
        assert_eq!(presort(&ds)[0], vec![1, 2, 0]);
        let ds = column(&[1.0, 1.0, 2.0, 3.0]);
        assert_eq!(presort(&ds)[0], vec![0, 1, 2, 3]);
    }

    #[test]
    fn presort_random_is_sorted() {
        let mut rng = crate::rng::from_seed(1);
        let vals: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let ds = column(&vals);
        let p = &presort(&ds)[0];
        assert!(p.windows(2).all(|w| vals[w[0]] <= vals[w[1]]));
    }

    #[test]
    fn balanced_divisible_case() {
        let ds = column(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let layout = build_histograms(&ds, &presort(&ds), 4).unwrap();
        assert_eq!(layout.n_bins(0), 4);
        let mut counts = [0; 4];
        for &b in layout.column_bins(0) {
            counts[b as usize] += 1;
        }
        assert_eq!(counts, [2, 2, 2, 2]);
    }

    #[test]
    fn constant_column_single_bin() {
        let ds = column(&[5.0; 10]);
        let layout = build_histograms(&ds, &presort(&ds), 16).unwrap();
        assert_eq!(layout.n_bins(0), 1);
        assert!(layout.edges(0).is_empty());
    }

    #[test]
    fn few_distinct_values_get_own_bins() {
        let ds = column(&[2.0, 1.0, 2.0, 3.0, 1.0]);
        let layout = build_histograms(&ds, &presort(&ds), 256).unwrap();
        assert_eq!(layout.n_bins(0), 3);
        assert_eq!(layout.column_bins(0), &[1, 0, 1, 2, 0]);
    }

    #[test]
    fn occupancy_bound_uniform() {
        let mut rng = crate::rng::from_seed(2);
        let n = 10_000;
        let vals: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ds = column(&vals);
        let layout = build_histograms(&ds, &presort(&ds), 256).unwrap();
        assert!(layout.n_bins(0) <= 256);
        let mut counts = vec![0usize; layout.n_bins(0)];
        for &b in layout.column_bins(0) {
            counts[b as usize] += 1;
        }
        let bound = 2 * n / 256;
        assert!(
            counts.iter().all(|&c| c <= bound),
            "max {:?}",
            counts.iter().max()
        );
    }

    #[test]
    fn rejects_bad_bin_count() {
        let ds = column(&[1.0, 2.0]);
        assert!(build_histograms(&ds, &presort(&ds), 1).is_err());
        assert!(build_histograms(&ds, &presort(&ds), 257).is_err());
    }

    #[test]
    fn ties_never_split_and_bin_of_agrees() {
        let mut rng = crate::rng::from_seed(3);
        let vals: Vec<f64> = (0..2000)
            .map(|_| rng.random_range(0..40) as f64 * 0.25)
            .collect();
        let ds = column(&vals);
        let layout = build_histograms(&ds, &presort(&ds), 8).unwrap();
        let edges = layout.edges(0);
        assert!(edges.windows(2).all(|w| w[0] < w[1]));
        for (i, &v) in vals.iter().enumerate() {
            assert_eq!(layout.bin(i, 0) as usize, layout.bin_of(0, v));
        }
    }

    #[test]
    fn adjacent_floats_get_separated() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let ds = column(&[a, b]);
        let layout = build_histograms(&ds, &presort(&ds), 4).unwrap();
        let t = layout.threshold(0, 0);
        assert!(a <= t && b > t);
    }
}
