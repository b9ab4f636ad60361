use cipher_sim::baseline::BaselineParams;
use cipher_sim::corpus::{FeatureSet, FeatureSource, RowMatrix};
use cipher_sim::graphsim::CsiParams;
use cipher_sim::protocol::SamplingProtocol;
use cipher_sim::report::{
    agreement, all_pairs, nearest_pairs, znormalize, AllPairsOptions, Metric, MetricParams,
    SimilarityMatrix,
};
use cipher_sim::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn symmetric(ids: usize, vals: &[f64]) -> SimilarityMatrix {
    let mut m = SimilarityMatrix::new(
        (0..ids).map(|i| format!("d{i:02}")).collect(),
        Metric::Csi,
        "src",
    );
    let mut it = vals.iter().cycle();
    for i in 0..ids {
        for j in i + 1..ids {
            m.set_pair(i, j, Some(*it.next().unwrap()));
        }
    }
    m
}

fn off_diag(m: &SimilarityMatrix) -> Vec<f64> {
    let mut v = Vec::new();
    for i in 0..m.len() {
        for j in 0..m.len() {
            if i != j {
                v.extend(m.get(i, j));
            }
        }
    }
    v
}

proptest! {
    #[test]
    fn znorm_moments_and_ranks(vals in prop::collection::vec(0.0f64..1.0, 6..40), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let m = symmetric(6, &vals);
        let z = znormalize(&m).unwrap();
        let v = off_diag(&z);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((std - 1.0).abs() < 1e-9);
        let raw = off_diag(&m);
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                if raw[i] < raw[j] {
                    prop_assert!(v[i] < v[j]);
                }
            }
        }
        let mut affine = m.clone();
        for row in &mut affine.values {
            for x in row.iter_mut().flatten() {
                *x = a * *x + b;
            }
        }
        let za = znormalize(&affine).unwrap();
        for (x, y) in off_diag(&za).iter().zip(&v) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn agreement_is_bounded_and_commutative(
        a in prop::collection::vec(0.0f64..1.0, 10),
        b in prop::collection::vec(0.0f64..1.0, 10),
        c in prop::collection::vec(0.0f64..1.0, 10),
    ) {
        let ms = [symmetric(5, &a), symmetric(5, &b), symmetric(5, &c)];
        let g1 = agreement(&ms).unwrap();
        let g2 = agreement(&[ms[2].clone(), ms[0].clone(), ms[1].clone()]).unwrap();
        prop_assert_eq!(&g1.values, &g2.values);
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    continue;
                }
                let v = g1.get(i, j).unwrap();
                prop_assert_eq!(Some(v), g1.get(j, i));
                let ins: Vec<f64> = ms.iter().map(|m| m.get(i, j).unwrap()).collect();
                let lo = ins.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = ins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn agreement_identities() {
    let half = symmetric(2, &[0.5]);
    assert_eq!(
        agreement(&[half.clone(), half]).unwrap().get(0, 1),
        Some(0.5)
    );
    let ones = symmetric(2, &[1.0]);
    assert_eq!(
        agreement(&[ones.clone(), ones.clone(), ones])
            .unwrap()
            .get(0, 1),
        Some(1.0)
    );
    let g = agreement(&[symmetric(2, &[0.25]), symmetric(2, &[1.0])]).unwrap();
    assert!((g.get(0, 1).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn block_structure_pairs_within_groups() {
    let ids = ["vat1", "vat2", "vat3", "x1", "x2", "x3"];
    let mut m = SimilarityMatrix::new(
        ids.iter().map(|s| s.to_string()).collect(),
        Metric::Csi,
        "s",
    );
    let mut rng = seeded(2);
    for i in 0..6 {
        for j in i + 1..6 {
            let same = (i < 3) == (j < 3);
            let v = if same {
                rng.random_range(0.6..0.9)
            } else {
                rng.random_range(0.0..0.3)
            };
            m.set_pair(i, j, Some(v));
        }
    }
    for p in nearest_pairs(&m) {
        assert_eq!(
            p.doc.starts_with("vat"),
            p.partner.starts_with("vat"),
            "{p:?}"
        );
    }
}

fn doc(id: &str, n: usize, centre: f64, seed: u64) -> FeatureSet {
    let mut rng = seeded(seed);
    let data = (0..n * 3).map(|_| centre + rng.random::<f64>()).collect();
    FeatureSet::new(
        id,
        FeatureSource::External,
        RowMatrix::new(n, 3, data).unwrap(),
    )
    .unwrap()
}

fn quick_csi() -> MetricParams {
    MetricParams::Csi(CsiParams {
        k: 3,
        m_steps: 5,
        protocol: SamplingProtocol {
            per_doc: 15,
            runs: 2,
            seed: 4,
            ..Default::default()
        },
        ..Default::default()
    })
}

#[test]
fn pair_counts() {
    let docs: Vec<FeatureSet> = (0..12)
        .map(|i| doc(&format!("d{i:02}"), 20, i as f64 * 0.3, i))
        .collect();
    let r = all_pairs(&docs[..2], &quick_csi(), &AllPairsOptions::default()).unwrap();
    assert_eq!((r.matrix.len(), r.computed), (2, 1));
    let r = all_pairs(&docs, &quick_csi(), &AllPairsOptions::default()).unwrap();
    assert_eq!(r.computed, 66);
    for i in 0..12 {
        assert_eq!(r.matrix.get(i, i), None);
        for j in 0..12 {
            assert_eq!(r.matrix.get(i, j), r.matrix.get(j, i));
        }
    }
}

#[test]
fn input_order_does_not_matter() {
    let docs: Vec<FeatureSet> = (0..5)
        .map(|i| doc(&format!("d{i}"), 20, i as f64 * 0.4, i))
        .collect();
    let params = MetricParams::Baseline(BaselineParams {
        kmeans_k: 4,
        protocol: SamplingProtocol {
            per_doc: 15,
            runs: 2,
            seed: 9,
            ..Default::default()
        },
        ..Default::default()
    });
    let fwd = all_pairs(&docs, &params, &AllPairsOptions::default())
        .unwrap()
        .matrix;
    let rev_docs: Vec<FeatureSet> = docs.iter().rev().cloned().collect();
    let rev = all_pairs(&rev_docs, &params, &AllPairsOptions::default())
        .unwrap()
        .matrix;
    assert_eq!(rev.reindexed(&fwd.doc_ids).unwrap().values, fwd.values);
}

#[test]
fn cache_hits_are_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let docs: Vec<FeatureSet> = (0..4)
        .map(|i| doc(&format!("d{i}"), 20, i as f64 * 0.4, i))
        .collect();
    let options = AllPairsOptions {
        cache_dir: Some(dir.path().to_path_buf()),
        diagonal: true,
    };
    let fresh = all_pairs(&docs, &quick_csi(), &options).unwrap();
    assert_eq!((fresh.computed, fresh.cache_hits), (10, 0));
    let again = all_pairs(&docs, &quick_csi(), &options).unwrap();
    assert_eq!((again.computed, again.cache_hits), (0, 10));
    assert_eq!(again.reports, fresh.reports);
    assert_eq!(again.matrix, fresh.matrix);
    assert!(fresh.matrix.get(0, 0).is_some());
    // A changed seed is a different computation.
    let other = match quick_csi() {
        MetricParams::Csi(mut p) => {
            p.protocol.seed = 5;
            MetricParams::Csi(p)
        }
        _ => unreachable!(),
    };
    assert_eq!(all_pairs(&docs, &other, &options).unwrap().computed, 10);
}

#[test]
fn failed_pairs_leave_cells_absent() {
    let docs = vec![
        doc("a", 20, 0.0, 1),
        doc("b", 20, 1.0, 2),
        doc("tiny", 5, 2.0, 3),
    ];
    let r = all_pairs(&docs, &quick_csi(), &AllPairsOptions::default()).unwrap();
    assert_eq!(r.failures.len(), 2);
    assert!(r.matrix.get(0, 1).is_some());
    assert_eq!(r.matrix.get(0, 2), None);
    assert_eq!(r.matrix.get(2, 1), None);
}
