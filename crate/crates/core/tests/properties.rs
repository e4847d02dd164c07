use std::collections::BTreeSet;

use corsem_core::correct::{
    apply_correction, connected_components, Connectivity, ClusterThreshold, McParams,
};
use corsem_core::glm::{group_ttest, one_sample_t, simple_ols};
use corsem_core::semantics::{
    build_network, hierarchy_overlay, overlay_counts, similarity_matrix, to_distance,
    ward_cluster, OverlayCategory, SquareMatrix,
};
use corsem_core::synth::{generate_hierarchy_phantom, HierarchyOverrides};
use corsem_core::tdist::t_critical;
use corsem_core::{LabelSet, Level, StatMap, VolumeGeometry};
use proptest::prelude::*;

fn small_geom() -> VolumeGeometry {
    VolumeGeometry::ellipsoid([6, 5, 4], [2.0; 3]).unwrap()
}

fn map_with_t(label: &str, level: Level, t: Vec<f32>) -> StatMap {
    let mut m = StatMap::empty(label, level, 20, t.len());
    m.t = t;
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ols_t_invariant_under_affine_response(
        xy in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..40),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
        let y2: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let r = simple_ols(&x, &y).unwrap();
        let r2 = simple_ols(&x, &y2).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.r2));
        prop_assert!((0.0..=1.0).contains(&r.p));
        prop_assert!((r.t - r2.t).abs() <= 1e-7 * r.t.abs().max(1.0));
        prop_assert!((r2.beta1 - a * r.beta1).abs() <= 1e-9 * (a * r.beta1).abs().max(1.0));
    }

    #[test]
    fn group_test_is_permutation_invariant(
        values in prop::collection::vec(-3.0f64..3.0, 2..12),
        rot in 0usize..12,
    ) {
        let mut rotated = values.clone();
        let k = rot % values.len();
        rotated.rotate_left(k);
        let a = one_sample_t(&values).unwrap();
        let b = one_sample_t(&rotated).unwrap();
        prop_assert_eq!(a.t.to_bits(), b.t.to_bits());
        prop_assert_eq!(a.p.to_bits(), b.p.to_bits());
    }

    #[test]
    fn distance_properties(seed_maps in prop::collection::vec(prop::collection::vec(-4.0f32..4.0, 30), 2..7)) {
        let maps: Vec<StatMap> = seed_maps
            .into_iter()
            .enumerate()
            .map(|(i, t)| map_with_t(&format!("l{i}"), Level::Group, t))
            .collect();
        let refs: Vec<&StatMap> = maps.iter().collect();
        let s = similarity_matrix(&refs, "t", 2).unwrap();
        prop_assert!(s.is_symmetric());
        let d = to_distance(&s).unwrap();
        for i in 0..d.n() {
            prop_assert_eq!(d.get(i, i), 0.0);
            for j in 0..d.n() {
                prop_assert_eq!(d.get(i, j), d.get(j, i));
                prop_assert!((0.0..=2.0).contains(&d.get(i, j)));
            }
        }
    }

    #[test]
    fn ward_cuts_and_heights(points in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..9), k_seed in 0usize..9) {
        let n = points.len();
        let mut d = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
                d.set(i, j, (dx * dx + dy * dy).sqrt());
            }
        }
        let k = 1 + k_seed % n;
        let (dend, assign) = ward_cluster(&d, k).unwrap();
        let distinct: BTreeSet<usize> = assign.iter().copied().collect();
        prop_assert_eq!(distinct.len(), k);
        // Ids appear in first-member order.
        let mut next = 0;
        for &c in &assign {
            prop_assert!(c <= next);
            if c == next {
                next += 1;
            }
        }
        // Ward on Euclidean input is monotone.
        let heights: Vec<f64> = dend.merges().map(|m| m.height).collect();
        for w in heights.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn network_edges_respect_threshold(vals in prop::collection::vec(-1.0f64..1.0, 15), thr in -0.9f64..0.9) {
        let n = 6;
        let mut s = SquareMatrix::identity(n);
        let mut it = vals.into_iter();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = it.next().unwrap();
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        let labels = LabelSet::new((0..n).map(|i| format!("l{i}")).collect()).unwrap();
        let net = build_network(&s, &labels, &[0; 6], thr).unwrap();
        let mut seen = BTreeSet::new();
        for e in &net.edges {
            prop_assert!(e.weight > thr);
            prop_assert!(e.a != e.b);
            prop_assert!(seen.insert((e.a.clone(), e.b.clone())));
        }
    }

    #[test]
    fn overlay_invariants(ts in prop::collection::vec(prop::collection::vec(prop::sample::select(vec![-2.0f32, 0.0, 3.0]), 20), 2..6)) {
        let maps: Vec<StatMap> = ts
            .into_iter()
            .enumerate()
            .map(|(i, t)| map_with_t(&format!("l{i}"), Level::Corrected, t))
            .collect();
        let refs: Vec<&StatMap> = maps.iter().collect();
        let o = overlay_counts(&refs).unwrap();
        for v in 0..20 {
            prop_assert_eq!(o.total[v], o.positive[v] + o.negative[v]);
            prop_assert!(o.total[v] as usize <= maps.len());
        }
        let cats = hierarchy_overlay(&maps[0], &maps[1]).unwrap();
        prop_assert_eq!(cats.len(), 20);
        prop_assert!(cats.iter().all(|c| OverlayCategory::ALL.contains(c)));
    }

    #[test]
    fn components_partition_active_voxels(bits in prop::collection::vec(any::<bool>(), 120), conn in prop::sample::select(vec![6u8, 18, 26])) {
        let g = VolumeGeometry::full([6, 5, 4], [1.0; 3]).unwrap();
        let conn = Connectivity::try_from(conn).unwrap();
        let set = connected_components(&bits, &g, conn).unwrap();
        let mut seen = vec![false; 120];
        for c in &set.clusters {
            for &v in &c.voxels {
                prop_assert!(bits[v]);
                prop_assert!(!seen[v]);
                seen[v] = true;
            }
        }
        prop_assert_eq!(seen, bits);
        // No two clusters touch under the chosen neighbourhood.
        let offs = conn.offsets();
        let mut owner = vec![usize::MAX; 120];
        for (ci, c) in set.clusters.iter().enumerate() {
            for &v in &c.voxels {
                owner[v] = ci;
            }
        }
        for v in 0..120 {
            if owner[v] == usize::MAX {
                continue;
            }
            let [x, y, z] = g.coords(v);
            for o in &offs {
                let (nx, ny, nz) = (x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]);
                if nx < 0 || ny < 0 || nz < 0 || nx >= 6 || ny >= 5 || nz >= 4 {
                    continue;
                }
                let u = g.masked_index([nx as usize, ny as usize, nz as usize]).unwrap();
                prop_assert!(owner[u] == usize::MAX || owner[u] == owner[v]);
            }
        }
    }

    #[test]
    fn corrected_support_obeys_rules(seed in any::<u64>(), min in 1usize..6) {
        let g = small_geom();
        use rand::Rng;
        let mut rng = corsem_core::rng::indexed_rng(seed, "prop", 0);
        let values: Vec<f32> = (0..g.n_masked()).map(|_| rng.random_range(-5.0f32..5.0)).collect();
        let map = map_with_t("x", Level::Subject, values);
        let thr = ClusterThreshold {
            params: McParams::default(),
            z_critical: 1.96,
            min_cluster_voxels: min,
            min_cluster_mm3: min as f64 * 8.0,
            voxel_volume_mm3: 8.0,
            dims: g.dims(),
            voxel_size_mm: g.voxel_size_mm(),
            n_masked: g.n_masked(),
            histogram: vec![1],
        };
        let out = apply_correction(&map, &thr, &g).unwrap();
        let crit = t_critical(0.05, 20.0).unwrap() as f32;
        for (v, &tv) in out.t.iter().enumerate() {
            if tv != 0.0 {
                prop_assert!(tv.abs() >= crit);
                prop_assert_eq!(tv, map.t[v]);
            }
        }
        for sign in [1.0f32, -1.0] {
            let active: Vec<bool> = out.t.iter().map(|&v| v * sign > 0.0).collect();
            let set = connected_components(&active, &g, Connectivity::Face6).unwrap();
            prop_assert!(set.clusters.iter().all(|c| c.size() >= min));
        }
    }

    #[test]
    fn hierarchy_rows_respect_implication(seed in any::<u64>(), len in 2usize..5) {
        let chain: Vec<String> = (0..len).map(|i| format!("level{i}")).collect();
        let o = HierarchyOverrides { seed, region_voxels: 12, n_samples: 64, ..Default::default() };
        let p = generate_hierarchy_phantom(&chain, &o).unwrap();
        for i in 0..p.annotations.n_rows() {
            let r = p.annotations.row(i);
            for k in 1..len {
                prop_assert!(r[k] == 0.0 || r[k - 1] == 1.0);
            }
        }
    }
}

#[test]
fn group_map_from_subjects() {
    let a = [1.0f32, 0.0, 2.0];
    let b = [3.0f32, 0.0, 2.0];
    let m = group_ttest("g", &[&a, &b], 2).unwrap();
    assert_eq!(m.level, Level::Group);
    assert_eq!(m.df, 1);
    assert_eq!(m.beta[0], 2.0);
    assert!((m.t[0] - 2.0).abs() < 1e-6);
    assert_eq!((m.t[1], m.p[1]), (0.0, 1.0));
    assert_eq!(m.t[2], f32::INFINITY);
}

#[test]
fn independent_noise_maps_are_nearly_uncorrelated() {
    use rand_distr::{Distribution, StandardNormal};
    let mut maps = Vec::new();
    for s in 0..2 {
        let mut rng = corsem_core::rng::indexed_rng(9, "noise-map", s);
        let t: Vec<f32> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        maps.push(map_with_t(&format!("n{s}"), Level::Group, t));
    }
    let s = similarity_matrix(&[&maps[0], &maps[1]], "t", 1).unwrap();
    assert!(s.get(0, 1).abs() < 0.1, "{}", s.get(0, 1));
}
