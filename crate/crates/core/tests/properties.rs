use matafkit::analytics::{bin_samples, fit_normal, SpeedDensitySample};
use matafkit::density::{
    average_density, count_accuracy, count_frame, density_field, flow_across_line, CountField,
    DensityField, Palette,
};
use matafkit::geometry::{
    cell_of, fit_homography, invert, project_to_image, project_to_plane, Gate, GridSpec, Homography,
    ImagePoint, SiteGeometry, WorldPoint,
};
use matafkit::synth::{generate, preset};
use matafkit::tracks::{segment_speeds, Cohort, Keyframe, SpeedSample, Track};
use proptest::prelude::*;

/// Mildly perspective maps: near-similarity plus a small projective term.
fn homography() -> impl Strategy<Value = Homography> {
    (
        0.02f64..0.2,
        -0.5f64..0.5,
        -50.0f64..50.0,
        -50.0f64..50.0,
        -1e-4f64..1e-4,
        -1e-4f64..1e-4,
        -0.01f64..0.01,
    )
        .prop_map(|(s, rot, tx, ty, p, q, shear)| {
            let (c, sn) = (rot.cos(), rot.sin());
            Homography::new([s * c, -s * sn + shear, tx, s * sn, s * c, ty, p, q, 1.0]).unwrap()
        })
}

fn pixel() -> impl Strategy<Value = ImagePoint> {
    (0.0f64..1280.0, 0.0f64..720.0).prop_map(|(u, v)| ImagePoint::new(u, v))
}

fn site_point() -> impl Strategy<Value = WorldPoint> {
    (-10.0f64..115.0, -10.0f64..165.0).prop_map(|(x, y)| WorldPoint::new(x, y))
}

proptest! {
    #[test]
    fn project_then_back(h in homography(), p in pixel()) {
        let w = project_to_plane(&h, p).unwrap();
        let back = project_to_image(&h, w).unwrap();
        prop_assert!((back.u - p.u).abs() < 1e-6 && (back.v - p.v).abs() < 1e-6);
    }

    #[test]
    fn inverse_composes_to_identity(h in homography(), p in pixel()) {
        let inv = invert(&h).unwrap();
        let (x, y) = h.apply(p.u, p.v).unwrap();
        let (u, v) = inv.apply(x, y).unwrap();
        prop_assert!((u - p.u).abs() < 1e-6 && (v - p.v).abs() < 1e-6);
    }

    #[test]
    fn exact_correspondences_are_refit(h in homography()) {
        let px = [
            ImagePoint::new(100.0, 80.0),
            ImagePoint::new(1150.0, 95.0),
            ImagePoint::new(1100.0, 650.0),
            ImagePoint::new(140.0, 600.0),
            ImagePoint::new(640.0, 360.0),
        ];
        let pairs: Vec<_> = px.iter().map(|&p| (p, project_to_plane(&h, p).unwrap())).collect();
        let fit = fit_homography(&pairs).unwrap();
        prop_assert!(fit.rms_error_m < 1e-7);
        let probe = ImagePoint::new(321.0, 222.0);
        let a = project_to_plane(&h, probe).unwrap();
        let b = project_to_plane(&fit.homography, probe).unwrap();
        prop_assert!(a.distance(&b) < 1e-6);
    }

    #[test]
    fn cell_contains_point(p in site_point(), cell in 1.0f64..10.0) {
        let g = GridSpec::covering(&SiteGeometry::default().bounds, cell).unwrap();
        match cell_of(&g, p) {
            Some(c) => {
                prop_assert!(g.contains(p));
                let lo_x = g.origin.x + c.col as f64 * g.cell_size;
                let lo_y = g.origin.y + c.row as f64 * g.cell_size;
                prop_assert!(p.x >= lo_x - 1e-9 && p.x <= lo_x + g.cell_size + 1e-9);
                prop_assert!(p.y >= lo_y - 1e-9 && p.y <= lo_y + g.cell_size + 1e-9);
                prop_assert_eq!(g.unflat(g.flat(c)), c);
            }
            None => prop_assert!(!g.contains(p)),
        }
    }

    #[test]
    fn counts_are_conserved(pts in prop::collection::vec(site_point(), 0..400)) {
        let g = SiteGeometry::default().grid(5.0).unwrap();
        let c = count_frame(&g, 0, &pts);
        prop_assert_eq!(c.total(), pts.len() as u64);
        let f = density_field(&c);
        let mass: f64 = f.rho.iter().map(|r| r * g.cell_area()).sum();
        prop_assert!((mass - c.inside() as f64).abs() < 1e-9);
    }

    #[test]
    fn interpolation_hits_keyframes_and_stays_between(
        steps in prop::collection::vec((1u64..30, -3.0f64..3.0, -3.0f64..3.0), 1..20),
        probe in 0.0f64..1.0,
    ) {
        let mut f = 0;
        let mut p = WorldPoint::new(50.0, 50.0);
        let mut keys = vec![Keyframe { frame: 0, pos: p }];
        for (df, dx, dy) in steps {
            f += df;
            p = WorldPoint::new(p.x + dx, p.y + dy);
            keys.push(Keyframe { frame: f, pos: p });
        }
        let t = Track::new("p", Cohort::default(), keys.clone()).unwrap();
        for k in &keys {
            prop_assert_eq!(t.position_at(k.frame as f64).unwrap(), k.pos);
        }
        let at = probe * f as f64;
        let q = t.position_at(at).unwrap();
        let i = keys.iter().rposition(|k| k.frame as f64 <= at).unwrap();
        let j = (i + 1).min(keys.len() - 1);
        let (a, b) = (keys[i].pos, keys[j].pos);
        prop_assert!(q.x >= a.x.min(b.x) - 1e-9 && q.x <= a.x.max(b.x) + 1e-9);
        prop_assert!(q.y >= a.y.min(b.y) - 1e-9 && q.y <= a.y.max(b.y) + 1e-9);

        let s = segment_speeds(&t, 25.0).unwrap();
        prop_assert_eq!(s.samples.len(), keys.len() - 1);
        prop_assert!(s.samples.iter().all(|x| x.speed >= 0.0 && x.speed.is_finite()));
    }

    #[test]
    fn palette_index_is_monotone(a in 0.0f64..12.0, b in 0.0f64..12.0) {
        let p = Palette::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(p.index_of(lo).map_or(-1, |i| i as i64) <= p.index_of(hi).map_or(-1, |i| i as i64));
    }

    #[test]
    fn averaging_copies_is_identity(vals in prop::collection::vec(0.0f64..10.0, 651), n in 1usize..6) {
        let g = SiteGeometry::default().grid(5.0).unwrap();
        let mut f = DensityField::zeros(g, 0.0, "x");
        f.rho = vals;
        let avg = average_density(&vec![f.clone(); n]).unwrap();
        for (a, b) in avg.rho.iter().zip(&f.rho) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn normal_fit_shifts_with_data(xs in prop::collection::vec(0.2f64..2.5, 2..200), shift in -0.1f64..0.1) {
        let s = fit_normal("c", &xs).unwrap();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.mu >= lo - 1e-12 && s.mu <= hi + 1e-12);
        prop_assert!(s.sigma >= 0.0);
        prop_assert!(s.p85_exceeded >= lo - 1e-12 && s.p85_exceeded <= hi + 1e-12);
        let moved: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let t = fit_normal("c", &moved).unwrap();
        prop_assert!((t.mu - s.mu - shift).abs() < 1e-9);
        prop_assert!((t.sigma - s.sigma).abs() < 1e-9);
    }

    #[test]
    fn binning_accounts_for_every_sample(
        pairs in prop::collection::vec((0.0f64..9.0, 0.0f64..2.0), 1..300),
        dropped in 0usize..20,
        width in 0.1f64..2.0,
    ) {
        let samples: Vec<SpeedDensitySample> = pairs
            .iter()
            .map(|&(rho, v)| SpeedDensitySample {
                sample: SpeedSample { mid_frame: 0.0, pos: WorldPoint::new(0.0, 0.0), speed: v },
                rho,
            })
            .collect();
        let fd = bin_samples(&samples, dropped, width, 10).unwrap();
        prop_assert_eq!(fd.bins.iter().map(|b| b.n).sum::<usize>() + fd.dropped, fd.total_samples);
        prop_assert_eq!(fd.total_samples, samples.len() + dropped);
        for b in &fd.bins {
            prop_assert_eq!(b.sparse, b.n < 10);
            if let Some(r) = b.mean_rho {
                prop_assert!(r >= b.rho_lo - 1e-9 && r < b.rho_hi + 1e-9);
            }
        }
    }

    #[test]
    fn accuracy_is_a_percentage(
        truth in prop::collection::vec(0u32..30, 651),
        est in prop::collection::vec(0u32..30, 651),
    ) {
        let g = SiteGeometry::default().grid(5.0).unwrap();
        let mut t = CountField::zeros(g, 0);
        t.counts = truth;
        let mut e = CountField::zeros(g, 0);
        e.counts = est;
        let a = count_accuracy(&e, &t).unwrap();
        prop_assert!((0.0..=100.0).contains(&a));
        prop_assert_eq!(count_accuracy(&t, &t).unwrap(), 100.0);
    }

    #[test]
    fn crossings_ignore_direction(
        pts in prop::collection::vec((20.0f64..80.0, 60.0f64..100.0), 2..30),
    ) {
        let mut site = SiteGeometry::default();
        site.gates = vec![Gate {
            name: "g".into(),
            a: WorldPoint::new(50.0, 60.0),
            b: WorldPoint::new(50.0, 100.0),
        }];
        let n = pts.len() as u64;
        let fwd: Vec<Keyframe> = pts.iter().enumerate().map(|(i, &(x, y))| Keyframe::new(i as u64, x, y)).collect();
        let rev: Vec<Keyframe> = pts.iter().rev().enumerate().map(|(i, &(x, y))| Keyframe::new(i as u64, x, y)).collect();
        let tf = Track::new("f", Cohort::default(), fwd).unwrap();
        let tr = Track::new("r", Cohort::default(), rev).unwrap();
        let w = (0.0, n as f64);
        let a = flow_across_line(&[tf], &site, "g", w, 1.0).unwrap();
        let b = flow_across_line(&[tr], &site, "g", w, 1.0).unwrap();
        prop_assert_eq!(a.crossings, b.crossings);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn generator_is_deterministic_and_conserves_heads(seed in any::<u64>(), n in 1usize..200) {
        let mut s = preset("free_flow").unwrap();
        s.n_agents = n;
        s.duration = 1.0;
        s.seed = seed;
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        prop_assert_eq!(&a, &b);
        for c in &a.count_fields {
            prop_assert_eq!(c.total(), n as u64);
        }
        prop_assert!(a.free_speeds.iter().all(|&v| v > 0.0));
    }
}
