//! Confusion matrices, Cohen's kappa and accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphio::PatchGraph;
use crate::parallel::par_map;
use crate::train::Model;

/// `C × C` counts; rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|r| r.len() != c) {
            return Err(Error::InvalidArgument("confusion matrix must be square".into()));
        }
        Ok(Self { counts })
    }

    pub fn from_pairs(num_classes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut cm = Self::new(num_classes);
        for &(truth, pred) in pairs {
            cm.add(truth, pred)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        let c = self.num_classes();
        if truth >= c || pred >= c {
            return Err(Error::InvalidArgument(format!(
                "class pair ({truth}, {pred}) outside 0..{c}"
            )));
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::InvalidArgument("accuracy of an empty confusion matrix".into()));
        }
        let diag: u64 = (0..self.num_classes()).map(|i| self.counts[i][i]).sum();
        Ok(diag as f64 / total as f64)
    }

    pub fn kappa(&self, weighting: Weighting) -> Result<f64> {
        kappa(self, weighting)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// 0/1 disagreement.
    None,
    /// `(i − j)² / (C − 1)²`.
    Quadratic,
}

fn weight(weighting: Weighting, i: usize, j: usize, c: usize) -> f64 {
    match weighting {
        Weighting::None => (i != j) as u8 as f64,
        Weighting::Quadratic if c < 2 => 0.0,
        Weighting::Quadratic => {
            let d = i.abs_diff(j) as f64;
            d * d / ((c - 1) * (c - 1)) as f64
        }
    }
}

/// Cohen's kappa `1 − Σ w·O / Σ w·E`. When the expected disagreement is zero
/// the result is 1 if the observed disagreement is also zero and undefined
/// otherwise.
pub fn kappa(cm: &ConfusionMatrix, weighting: Weighting) -> Result<f64> {
    let c = cm.num_classes();
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("kappa of an empty confusion matrix".into()));
    }
    let n = total as f64;
    let rows: Vec<f64> = cm.counts.iter().map(|r| r.iter().sum::<u64>() as f64 / n).collect();
    let cols: Vec<f64> = (0..c)
        .map(|j| cm.counts.iter().map(|r| r[j]).sum::<u64>() as f64 / n)
        .collect();
    let (mut observed, mut expected) = (0.0, 0.0);
    for i in 0..c {
        for j in 0..c {
            let w = weight(weighting, i, j, c);
            observed += w * cm.counts[i][j] as f64 / n;
            expected += w * rows[i] * cols[j];
        }
    }
    if expected == 0.0 {
        return if observed == 0.0 { Ok(1.0) } else { Err(Error::UndefinedKappa) };
    }
    Ok(1.0 - observed / expected)
}

/// Evaluation summary as written to report files. An undefined kappa is
/// serialized as `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Vec<Vec<u64>>,
    pub kappa_quadratic: Option<f64>,
    pub kappa_unweighted: Option<f64>,
    pub accuracy: f64,
    pub n: u64,
}

impl EvalReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let defined = |r: Result<f64>| match r {
            Ok(k) => Ok(Some(k)),
            Err(Error::UndefinedKappa) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            confusion: cm.counts().to_vec(),
            kappa_quadratic: defined(cm.kappa(Weighting::Quadratic))?,
            kappa_unweighted: defined(cm.kappa(Weighting::None))?,
            accuracy: cm.accuracy()?,
            n: cm.total(),
        })
    }
}

/// Argmax predictions for `graphs`, computed on up to `threads` workers.
pub fn predict_all(model: &Model, graphs: &[&PatchGraph], threads: usize) -> Result<Vec<usize>> {
    par_map(graphs, threads, |g| model.prepare(g).and_then(|p| model.predict(&p)))
        .into_iter()
        .collect()
}

pub fn confusion(model: &Model, graphs: &[&PatchGraph], threads: usize) -> Result<ConfusionMatrix> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty split".into()));
    }
    let preds = predict_all(model, graphs, threads)?;
    let mut cm = ConfusionMatrix::new(model.config.num_classes);
    for (g, p) in graphs.iter().zip(preds) {
        cm.add(g.label, p)?;
    }
    Ok(cm)
}

pub fn evaluate(model: &Model, graphs: &[&PatchGraph], threads: usize) -> Result<EvalReport> {
    EvalReport::from_confusion(&confusion(model, graphs, threads)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook kappa computed from raw counts without normalising first.
    fn oracle(counts: &[Vec<u64>], quadratic: bool) -> Option<f64> {
        let c = counts.len();
        let n: f64 = counts.iter().flatten().map(|&v| v as f64).sum();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..c {
            let ri: f64 = counts[i].iter().map(|&v| v as f64).sum();
            for j in 0..c {
                let cj: f64 = counts.iter().map(|r| r[j] as f64).sum();
                let w = if quadratic {
                    ((i as f64 - j as f64) / (c as f64 - 1.0)).powi(2)
                } else if i == j {
                    0.0
                } else {
                    1.0
                };
                num += w * counts[i][j] as f64;
                den += w * ri * cj / n;
            }
        }
        (den != 0.0).then(|| 1.0 - num / den)
    }

    fn cm(counts: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(counts.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn perfect_agreement_is_one() {
        let m = cm(&[&[5, 0, 0], &[0, 3, 0], &[0, 0, 9]]);
        assert_eq!(m.kappa(Weighting::None).unwrap(), 1.0);
        assert_eq!(m.kappa(Weighting::Quadratic).unwrap(), 1.0);
        assert_eq!(m.accuracy().unwrap(), 1.0);
    }

    #[test]
    fn chance_agreement_is_zero() {
        let m = cm(&[&[25, 25], &[25, 25]]);
        assert_eq!(m.kappa(Weighting::None).unwrap(), 0.0);
        assert_eq!(m.kappa(Weighting::Quadratic).unwrap(), 0.0);
    }

    #[test]
    fn frozen_three_class_fixture() {
        // Values from an independent script: 23/33 and 5/6.
        let m = cm(&[&[10, 2, 0], &[1, 12, 3], &[0, 2, 10]]);
        assert!((m.kappa(Weighting::None).unwrap() - 0.696969696969697).abs() < 1e-15);
        assert!((m.kappa(Weighting::Quadratic).unwrap() - 0.8333333333333334).abs() < 1e-15);
        assert!((m.accuracy().unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cases() {
        let single = cm(&[&[0, 0], &[0, 7]]);
        assert_eq!(single.kappa(Weighting::None).unwrap(), 1.0);
        assert_eq!(single.kappa(Weighting::Quadratic).unwrap(), 1.0);
        let one_class = cm(&[&[4]]);
        assert_eq!(one_class.kappa(Weighting::Quadratic).unwrap(), 1.0);
        assert_eq!(one_class.kappa(Weighting::None).unwrap(), 1.0);
        let empty = ConfusionMatrix::new(3);
        assert!(matches!(empty.kappa(Weighting::None), Err(Error::InvalidArgument(_))));
        assert!(matches!(empty.accuracy(), Err(Error::InvalidArgument(_))));
        // all truth in class 0, all predictions class 1: expected disagreement
        // is 1 so kappa is defined (and 0)
        let shifted = cm(&[&[0, 6], &[0, 0]]);
        assert_eq!(shifted.kappa(Weighting::None).unwrap(), 0.0);
        let report = EvalReport::from_confusion(&single).unwrap();
        assert_eq!(report.kappa_quadratic, Some(1.0));
    }

    #[test]
    fn random_matrices_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let c = rng.random_range(2..7);
            let counts: Vec<Vec<u64>> = (0..c)
                .map(|_| (0..c).map(|_| rng.random_range(0..20)).collect())
                .collect();
            let m = ConfusionMatrix::from_counts(counts.clone()).unwrap();
            if m.total() == 0 {
                continue;
            }
            for (w, q) in [(Weighting::None, false), (Weighting::Quadratic, true)] {
                match (m.kappa(w), oracle(&counts, q)) {
                    (Ok(k), Some(o)) => assert!((k - o).abs() < 1e-12, "{counts:?}: {k} vs {o}"),
                    (Ok(k), None) => assert_eq!(k, 1.0),
                    (Err(e), o) => panic!("{counts:?}: {e} (oracle {o:?})"),
                }
            }
        }
    }

    #[test]
    fn report_serializes_expected_fields() {
        let m = cm(&[&[3, 1], &[0, 4]]);
        let json = serde_json::to_value(EvalReport::from_confusion(&m).unwrap()).unwrap();
        for key in ["confusion", "kappa_quadratic", "kappa_unweighted", "accuracy", "n"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["n"], 8);
    }

    fn counts_strategy() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..6).prop_flat_map(|c| prop::collection::vec(prop::collection::vec(0u64..30, c), c))
    }

    proptest! {
        #[test]
        fn unweighted_kappa_is_permutation_invariant(counts in counts_strategy(), seed in any::<u64>()) {
            let c = counts.len();
            let m = ConfusionMatrix::from_counts(counts.clone()).unwrap();
            prop_assume!(m.total() > 0);
            let mut perm: Vec<usize> = (0..c).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut permuted = vec![vec![0; c]; c];
            for i in 0..c {
                for j in 0..c {
                    permuted[perm[i]][perm[j]] = counts[i][j];
                }
            }
            let p = ConfusionMatrix::from_counts(permuted).unwrap();
            match (m.kappa(Weighting::None), p.kappa(Weighting::None)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }

        #[test]
        fn two_class_weightings_coincide(a in 0u64..50, b in 0u64..50, c in 0u64..50, d in 0u64..50) {
            let m = ConfusionMatrix::from_counts(vec![vec![a, b], vec![c, d]]).unwrap();
            prop_assume!(m.total() > 0);
            match (m.kappa(Weighting::None), m.kappa(Weighting::Quadratic)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
            }
        }

        #[test]
        fn bounds_hold(counts in counts_strategy()) {
            let m = ConfusionMatrix::from_counts(counts.clone()).unwrap();
            prop_assume!(m.total() > 0);
            let acc = m.accuracy().unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            let off_diagonal: u64 = (0..counts.len())
                .flat_map(|i| (0..counts.len()).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| counts[i][j])
                .sum();
            for w in [Weighting::None, Weighting::Quadratic] {
                if let Ok(k) = m.kappa(w) {
                    prop_assert!(k <= 1.0 + 1e-12);
                    prop_assert_eq!(k == 1.0, off_diagonal == 0, "{:?} {}", w, k);
                }
            }
        }
    }
}
