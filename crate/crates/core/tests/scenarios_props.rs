use microgrid_core::model::{hour_of_day, Uncertainty};
use microgrid_core::scenarios::*;
use proptest::prelude::*;

fn opt_set(data: Vec<Vec<Uncertainty>>) -> ScenarioSet<Optimization> {
    ScenarioSet::new(data).unwrap().into_optimization()
}

#[test]
fn midday_peak_dominates_night() {
    let cfg = GeneratorConfig::default();
    let (mut night, mut nn, mut midday, mut nm) = (0.0, 0, 0.0, 0);
    for i in 0..1000 {
        let day = generate_day(&cfg, 96, 0.25, 2024, i);
        for (t, d) in day.demand.iter().enumerate() {
            let hr = hour_of_day(t, 0.25);
            if hr < 6.0 {
                night += d;
                nn += 1;
            } else if (11.5..13.5).contains(&hr) {
                midday += d;
                nm += 1;
            }
        }
    }
    let ratio = (midday / nm as f64) / (night / nn as f64);
    assert!(ratio > 5.0, "midday/night ratio {ratio}");
}

#[test]
fn pv_scale_matches_clear_sky_energy() {
    let cfg = GeneratorConfig { cloud_variability: 0.0, ..Default::default() };
    let day = generate_day(&cfg, 96, 0.25, 0, 0);
    let energy: f64 = day.pv.iter().take(96).map(|p| p * 0.25).sum();
    assert!((energy - cfg.pv_daily_kwh).abs() < 0.05 * cfg.pv_daily_kwh, "energy {energy}");
}

#[test]
fn two_point_stages_are_recovered_exactly() {
    let a = vec![Uncertainty::new(1.0, 0.0), Uncertainty::new(0.5, 0.2), Uncertainty::new(-1.0, 0.0)];
    let b = vec![Uncertainty::new(1.0, 0.0), Uncertainty::new(2.5, 0.0), Uncertainty::new(0.0, 1.0)];
    let set = opt_set(vec![a.clone(), b.clone(), a.clone()]);
    let d = quantize_stagewise(&set, 2, 1e-6, 200, 5).unwrap();
    for (k, dist) in d.iter().enumerate() {
        let t = k + 1;
        let mut expect = vec![(a[t], 2.0 / 3.0), (b[t], 1.0 / 3.0)];
        expect.sort_by(|x, y| x.0.d_el_net.total_cmp(&y.0.d_el_net));
        assert_eq!(dist.points, expect.iter().map(|e| e.0).collect::<Vec<_>>());
        for (w, e) in dist.weights.iter().zip(&expect) {
            assert!((w - e.1).abs() < 1e-15);
        }
    }
}

#[test]
fn stage_weights_sum_to_one_on_generated_data() {
    let set = generate_scenarios(&GeneratorConfig::default(), 16, 0.25, 200, 9).unwrap().into_optimization();
    let d = quantize_stagewise(&set, 20, 1e-6, 200, 9).unwrap();
    assert_eq!(d.len(), 16);
    for dist in &d {
        dist.check().unwrap();
        for i in 0..dist.len() {
            for j in 0..i {
                assert_ne!(dist.points[i], dist.points[j]);
            }
        }
    }
}

#[test]
fn split_is_a_deterministic_partition() {
    let all = generate_scenarios(&GeneratorConfig::default(), 8, 0.25, 2000, 3).unwrap();
    let (o1, a1) = split_scenarios(all.clone(), 1000, 42).unwrap();
    let (o2, a2) = split_scenarios(all.clone(), 1000, 42).unwrap();
    assert_eq!((o1.len(), a1.len()), (1000, 1000));
    assert_eq!(o1, o2);
    assert_eq!(a1, a2);
    let key = |s: &[Uncertainty]| s.iter().map(|w| (w.d_el_net.to_bits(), w.d_hw.to_bits())).collect::<Vec<_>>();
    let mut union: Vec<_> = o1.scenarios().iter().chain(a1.scenarios()).map(|s| key(s)).collect();
    let mut orig: Vec<_> = all.scenarios().iter().map(|s| key(s)).collect();
    union.sort();
    orig.sort();
    assert_eq!(union, orig);
}

#[test]
fn forecast_reads_only_current_observation() {
    let cfg = GeneratorConfig::default();
    let opt = generate_scenarios(&cfg, 16, 0.25, 50, 1).unwrap().into_optimization();
    let ar = fit_ar(&opt).unwrap();
    let means = opt.means();
    let mut s1 = generate_day(&cfg, 16, 0.25, 77, 0).to_uncertainties();
    let mut s2 = generate_day(&cfg, 16, 0.25, 77, 1).to_uncertainties();
    let t = 6;
    s2[..=t].copy_from_slice(&s1[..=t]);
    s1[t + 1].d_el_net += 3.0;
    assert_eq!(update_forecast(&ar, t, &s1[t], &means), update_forecast(&ar, t, &s2[t], &means));
}

fn cloud() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0).prop_map(|(a, b)| [a, b]), 5..80)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn distortion_never_increases(points in cloud(), s in 1usize..8, seed in any::<u64>()) {
        let q = lloyd_max(&points, s, 1e-6, 200, seed).unwrap();
        for w in q.distortion.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        let total: f64 = q.weights.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn quantization_preserves_the_mean(points in cloud(), s in 1usize..8, seed in any::<u64>()) {
        let q = lloyd_max(&points, s, 1e-6, 200, seed).unwrap();
        let n = points.len() as f64;
        for k in 0..2 {
            let sample = points.iter().map(|p| p[k]).sum::<f64>() / n;
            let quant: f64 = q.points.iter().zip(&q.weights).map(|(p, w)| w * p[k]).sum();
            prop_assert!((sample - quant).abs() <= 1e-9);
        }
    }

    #[test]
    fn ar_coefficients_minimize_squared_residuals(
        pairs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 3..30)
    ) {
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        prop_assume!({
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() > 1e-3
        });
        let data = pairs.iter().map(|&(x, y)| vec![Uncertainty::new(x, 0.0), Uncertainty::new(y, 0.0)]).collect();
        let ar = fit_ar(&opt_set(data)).unwrap();
        let (a, b) = (ar.alpha[0][EL], ar.beta[0][EL]);
        let ssr = |a: f64, b: f64| pairs.iter().map(|&(x, y)| (y - a * x - b).powi(2)).sum::<f64>();
        let base = ssr(a, b);
        let resid_mean = pairs.iter().map(|&(x, y)| y - a * x - b).sum::<f64>() / pairs.len() as f64;
        prop_assert!(resid_mean.abs() < 1e-10);
        for (da, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
            prop_assert!(ssr(a + da, b + db) >= base);
        }
    }

    #[test]
    fn csv_round_trip_is_bitwise(
        raw in prop::collection::vec(prop::collection::vec((-1e3f64..1e3, 0.0f64..1e3), 4), 0..5)
    ) {
        let data: Vec<Vec<Uncertainty>> =
            raw.iter().map(|s| s.iter().map(|&(a, b)| Uncertainty::new(a, b)).collect()).collect();
        let set = ScenarioSet::new(data).unwrap();
        let mut buf = Vec::new();
        write_scenarios(&set, &mut buf).unwrap();
        let back = read_scenarios(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), set.len());
        for (x, y) in back.scenarios().iter().zip(set.scenarios()) {
            for (u, v) in x.iter().zip(y) {
                prop_assert_eq!(u.d_el_net.to_bits(), v.d_el_net.to_bits());
                prop_assert_eq!(u.d_hw.to_bits(), v.d_hw.to_bits());
            }
        }
    }
}
