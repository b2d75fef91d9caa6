mod common;

use common::{random_plane, random_records, split_records};
use num_complex::Complex;
use wstack::comms::{exchange_to_space_order, reduce_slabs, ring_pass, ReduceKind, ReduceStrategy, Topology};
use wstack::mesh::{ComplexGrid, GridSpec, SlabRange};

const KINDS: [ReduceKind; 3] = [ReduceKind::Direct, ReduceKind::HybridRing, ReduceKind::RingRdmaLike];

fn partials(n: usize, seed: u64) -> Vec<ComplexGrid<f64>> {
    let spec = GridSpec::new(32, 32, 2, 1e-3).unwrap();
    let slab = SlabRange {
        rank: 2,
        v_start: 8,
        v_count: 9,
    };
    (0..n)
        .map(|r| ComplexGrid {
            spec,
            slab,
            data: random_plane(32 * 9 * 2, seed + r as u64),
        })
        .collect()
}

#[test]
fn strategies_bit_exact_on_four_by_four() {
    let topo = Topology::new(4, 4, 1).unwrap();
    let parts = partials(16, 100);
    let results: Vec<_> = KINDS
        .iter()
        .map(|k| reduce_slabs(&ReduceStrategy::new(*k, true), &parts, 5, &topo).unwrap().0)
        .collect();
    assert_eq!(results[0].data, results[1].data);
    assert_eq!(results[0].data, results[2].data);
}

#[test]
fn reduction_conserves_the_sum() {
    let topo = Topology::new(2, 3, 1).unwrap();
    let parts = partials(6, 7);
    for kind in KINDS {
        for det in [true, false] {
            let (out, _) = reduce_slabs(&ReduceStrategy::new(kind, det), &parts, 0, &topo).unwrap();
            for (i, c) in out.data.iter().enumerate() {
                let expected: Complex<f64> = parts.iter().map(|p| p.data[i]).sum();
                assert!((c - expected).norm() <= 1e-12, "{kind:?} det={det}");
            }
        }
    }
}

#[test]
fn hybrid_cuts_inter_node_traffic() {
    let topo = Topology::new(4, 8, 1).unwrap();
    let parts = partials(32, 3);
    let (_, direct) = reduce_slabs(&ReduceStrategy::new(ReduceKind::Direct, true), &parts, 0, &topo).unwrap();
    let (_, hybrid) = reduce_slabs(&ReduceStrategy::new(ReduceKind::HybridRing, true), &parts, 0, &topo).unwrap();
    assert_eq!(hybrid.inter_node_count(), 3);
    assert!(hybrid.inter_node_bytes() < direct.inter_node_bytes());
    assert_eq!(direct.inter_node_count(), 24);
}

#[test]
fn message_logs_are_reproducible() {
    let topo = Topology::new(2, 4, 1).unwrap();
    let parts = partials(8, 4);
    for kind in KINDS {
        let s = ReduceStrategy::new(kind, true);
        let (_, a) = reduce_slabs(&s, &parts, 3, &topo).unwrap();
        let (_, b) = reduce_slabs(&s, &parts, 3, &topo).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn ring_pass_segments_sum_to_total() {
    let arrays: Vec<Vec<Complex<f64>>> = (0..5).map(|r| random_plane(23, 50 + r)).collect();
    let (segs, log) = ring_pass(arrays.clone()).unwrap();
    let flat: Vec<Complex<f64>> = segs.into_iter().flatten().collect();
    assert_eq!(flat.len(), 23);
    for (i, c) in flat.iter().enumerate() {
        let expected: Complex<f64> = arrays.iter().map(|a| a[i]).sum();
        assert!((c - expected).norm() <= 1e-12);
    }
    assert_eq!(log.len(), 5 * 4);
    assert_eq!(log.inter_node_count(), 0);
}

#[test]
fn exchange_matches_ownership_oracle() {
    let spec = GridSpec::new(64, 64, 4, 1e-3).unwrap();
    let topo = Topology::new(2, 2, 1).unwrap();
    let recs = random_records(1000, 1, 21);
    let per_rank = split_records(&recs, 4);
    let half = 3usize;
    let batches = exchange_to_space_order::<f64>(&per_rank, &spec, &topo, half).unwrap();
    // 64 rows over 4 ranks: 16 rows each.
    let sector_of_row = |row: i64| (row / 16) as usize;
    let mut owned = [0usize; 4];
    let mut halo = [0usize; 4];
    for r in &recs {
        let gv = r.v * 64.0;
        owned[sector_of_row(gv.floor() as i64)] += 1;
        let lo = (gv - half as f64).ceil().max(0.0) as i64;
        let hi = ((gv + half as f64).floor() as i64).min(63);
        let mut touched: Vec<usize> = (lo..=hi).map(sector_of_row).collect();
        touched.dedup();
        for s in touched {
            if s != sector_of_row(gv.floor() as i64) {
                halo[s] += 1;
            }
        }
    }
    for sector in 0..4 {
        let got_owned: usize = batches.iter().map(|b| b[sector].owned_len()).sum();
        let got_total: usize = batches.iter().map(|b| b[sector].points.len()).sum();
        assert_eq!(got_owned, owned[sector]);
        assert_eq!(got_total - got_owned, halo[sector]);
        for b in &batches {
            let keys: Vec<_> = b[sector].points.iter().map(|p| (p.time_index, p.order)).collect();
            assert!(keys.windows(2).all(|w| w[0] < w[1]));
        }
    }
    assert_eq!(owned.iter().sum::<usize>(), 1000);
}

#[test]
fn mismatched_inputs_rejected() {
    let topo = Topology::new(1, 2, 1).unwrap();
    let mut parts = partials(2, 1);
    assert!(reduce_slabs(&ReduceStrategy::default(), &parts[..1], 0, &topo).is_err());
    parts[1].slab.v_start = 0;
    assert!(reduce_slabs(&ReduceStrategy::default(), &parts, 0, &topo).is_err());
    assert!(Topology::new(0, 1, 1).is_err());
}
