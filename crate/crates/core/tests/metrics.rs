mod common;

use common::metrics_fixture as fx;
use mipred::metrics::*;
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn fixture_matches_the_hand_tally() {
    let (t, p, names) = (fx::truth(), fx::pred(), fx::names());
    assert!(close(hamming_loss(&t, &p).unwrap(), fx::HAMMING));
    assert!(close(jaccard_index(&t, &p).unwrap(), fx::JACCARD));
    assert!(close(sample_accuracy(&t, &p).unwrap(), fx::ACCURACY));
    let r = precision_recall_f1(&t, &p, &names).unwrap();
    for (s, &(tp, fp, fn_, pr, rc, f1)) in r.per_label.iter().zip(&fx::PER_LABEL) {
        assert_eq!((s.tp, s.fp, s.fn_, s.support), (tp, fp, fn_, tp + fn_));
        assert!(
            close(s.precision, pr) && close(s.recall, rc) && close(s.f1, f1),
            "{s:?}"
        );
    }
    for (a, e) in [
        (r.micro, fx::MICRO),
        (r.macro_, fx::MACRO),
        (r.weighted, fx::WEIGHTED),
        (r.samples, fx::SAMPLES),
    ] {
        assert!(
            close(a.precision, e.0) && close(a.recall, e.1) && close(a.f1, e.2),
            "{a:?} vs {e:?}"
        );
    }
    let m = mlcm_confusion(&t, &p, &names).unwrap();
    let mut expected = vec![vec![0.0; 8]; 8];
    for (i, j, v) in fx::MLCM {
        expected[i][j] = v;
    }
    assert_eq!(m.counts, expected);
}

#[test]
fn small_cases() {
    let names: Vec<String> = (0..7).map(|i| format!("l{i}")).collect();
    let row = |a: &[usize]| {
        (0..7)
            .map(|j| u8::from(a.contains(&j)))
            .collect::<Vec<u8>>()
    };
    // One flipped label in one of two samples.
    let t = vec![row(&[0]), row(&[1])];
    let p = vec![row(&[0]), row(&[1, 3])];
    assert!(close(hamming_loss(&t, &p).unwrap(), 1.0 / 14.0));
    assert!(close(
        jaccard_index(&[row(&[1])], &[row(&[1, 2])]).unwrap(),
        0.5
    ));
    let t4 = vec![row(&[0]), row(&[1]), row(&[2]), row(&[3])];
    let mut p4 = t4.clone();
    p4[2] = row(&[4]);
    assert!(close(sample_accuracy(&t4, &p4).unwrap(), 0.75));
    // One false positive on m3 and one false negative on m1.
    let t = vec![row(&[0, 1]), row(&[0]), row(&[2]), row(&[6])];
    let p = vec![row(&[1]), row(&[0]), row(&[2]), row(&[6, 2])];
    let r = precision_recall_f1(&t, &p, &names).unwrap();
    let m1 = &r.per_label[0];
    assert_eq!((m1.tp, m1.fp, m1.fn_), (1, 0, 1));
    assert!(close(m1.precision, 1.0) && close(m1.recall, 0.5));
    let m3 = &r.per_label[2];
    assert_eq!((m3.tp, m3.fp, m3.fn_), (1, 1, 0));
    assert!(close(m3.precision, 0.5) && close(m3.recall, 1.0));
    // MLCM single cases.
    let m = mlcm_confusion(&[row(&[0])], &[row(&[])], &names).unwrap();
    assert_eq!(m.counts[0][7], 1.0);
    assert_eq!(m.counts.iter().flatten().sum::<f64>(), 1.0);
    let m = mlcm_confusion(&[row(&[0])], &[row(&[2])], &names).unwrap();
    assert_eq!(m.counts[0][2], 1.0);
    assert_eq!(m.counts.iter().flatten().sum::<f64>(), 1.0);
}

#[test]
fn perfect_prediction_scores_one() {
    let t = fx::truth();
    let names = fx::names();
    let r = evaluate(&t, &t, &names).unwrap();
    assert_eq!(
        (r.hamming_loss, r.jaccard_index, r.sample_accuracy),
        (0.0, 1.0, 1.0)
    );
    for a in [r.prf.micro, r.prf.samples] {
        assert_eq!((a.precision, a.recall, a.f1), (1.0, 1.0, 1.0));
    }
    let m = mlcm_confusion(&t, &t, &names).unwrap();
    for (i, row) in m.counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert!(i == j && i < 7 || v == 0.0);
        }
    }
}

#[test]
fn macro_and_micro_diverge_under_imbalance() {
    let names: Vec<String> = vec!["a".into(), "b".into()];
    // Label a: 9 of 9 right. Label b: 0 of 1.
    let mut t = vec![vec![1, 0]; 9];
    let mut p = t.clone();
    t.push(vec![0, 1]);
    p.push(vec![0, 0]);
    let r = precision_recall_f1(&t, &p, &names).unwrap();
    assert!(close(r.micro.recall, 0.9));
    assert!(close(r.macro_.recall, 0.5));
    assert!(close(r.micro.precision, 1.0));
    assert!(close(r.macro_.precision, 0.5));
}

#[test]
fn shape_errors() {
    let names = fx::names();
    assert!(hamming_loss(&fx::truth(), &fx::pred()[..5]).is_err());
    assert!(jaccard_index(&[vec![0, 1]], &[vec![0, 1, 0]]).is_err());
    assert!(precision_recall_f1(&fx::truth(), &fx::pred(), &names[..3]).is_err());
    assert!(sample_accuracy(&[vec![2]], &[vec![1]]).is_err());
}

#[test]
fn tables_have_fixed_shape() {
    let (t, p, names) = (fx::truth(), fx::pred(), fx::names());
    let r = evaluate(&t, &p, &names).unwrap();
    let table = r.label_table();
    assert_eq!(table.lines().count(), 1 + 7 + 4);
    assert!(
        table.starts_with("class,precision,recall,f1_score,weight\nm1,1.0000,1.0000,1.0000,3\n")
    );
    let m = mlcm_confusion(&t, &p, &names).unwrap();
    let text = m.to_table(true);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(lines.iter().all(|l| l.split(',').count() == 9));
    assert!(lines[8].starts_with("NTL,"));
}

fn label_rows(n: usize, k: usize) -> impl Strategy<Value = (Vec<Vec<u8>>, Vec<Vec<u8>>)> {
    (
        prop::collection::vec(prop::collection::vec(0u8..2, k), n),
        prop::collection::vec(prop::collection::vec(0u8..2, k), n),
    )
}

proptest! {
    #[test]
    fn invariants_hold_on_random_matrices((t, p) in (1usize..20).prop_flat_map(|n| label_rows(n, 7)), seed in any::<u64>()) {
        let names = fx::names();
        let r = evaluate(&t, &p, &names).unwrap();
        let h0 = r.hamming_loss == 0.0;
        prop_assert_eq!(h0, r.sample_accuracy == 1.0);
        prop_assert_eq!(h0, r.jaccard_index == 1.0);
        for v in [r.hamming_loss, r.jaccard_index, r.sample_accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        for a in [r.prf.micro, r.prf.macro_, r.prf.weighted, r.prf.samples] {
            for v in [a.precision, a.recall, a.f1] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
        for s in &r.prf.per_label {
            let h = if s.precision + s.recall > 0.0 { 2.0 * s.precision * s.recall / (s.precision + s.recall) } else { 0.0 };
            prop_assert!((s.f1 - h).abs() < 1e-15);
        }
        // Pooled counts.
        let mut tp = 0; let mut pp = 0; let mut tt = 0;
        for (a, b) in t.iter().zip(&p) {
            for (&x, &y) in a.iter().zip(b) { tp += (x & y) as usize; pp += y as usize; tt += x as usize; }
        }
        let micro_p = if pp == 0 { 0.0 } else { tp as f64 / pp as f64 };
        let micro_r = if tt == 0 { 0.0 } else { tp as f64 / tt as f64 };
        prop_assert_eq!(r.prf.micro.precision, micro_p);
        prop_assert_eq!(r.prf.micro.recall, micro_r);
        // MLCM rows.
        let m = mlcm_confusion(&t, &p, &names).unwrap();
        for j in 0..7 {
            let row: f64 = m.counts[j].iter().sum();
            prop_assert!((row - r.prf.per_label[j].support as f64).abs() < 1e-9);
        }
        for row in m.normalized() {
            let s: f64 = row.iter().sum();
            prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
        }
        // Sample order.
        let mut idx: Vec<usize> = (0..t.len()).collect();
        idx.rotate_left((seed % t.len() as u64) as usize);
        idx.reverse();
        let t2: Vec<_> = idx.iter().map(|&i| t[i].clone()).collect();
        let p2: Vec<_> = idx.iter().map(|&i| p[i].clone()).collect();
        let r2 = evaluate(&t2, &p2, &names).unwrap();
        prop_assert!((r2.hamming_loss - r.hamming_loss).abs() < 1e-12);
        prop_assert!((r2.jaccard_index - r.jaccard_index).abs() < 1e-12);
        prop_assert_eq!(r2.sample_accuracy, r.sample_accuracy);
        prop_assert_eq!(&r2.prf.per_label, &r.prf.per_label);
        let m2 = mlcm_confusion(&t2, &p2, &names).unwrap();
        for (a, b) in m2.counts.iter().flatten().zip(m.counts.iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
