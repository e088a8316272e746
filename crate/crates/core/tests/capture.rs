use burstrank::capture::{run_session, select_best, RingBufferConfig, StreamFrame, Timing};
use burstrank::featstore::FeatureMap;
use burstrank::ranknet::{HeadCOrder, HeadKind, RankerModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn channel0_model() -> RankerModel {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut m = RankerModel::new(HeadKind::B, 2, 0, HeadCOrder::default(), &mut rng).unwrap();
    m.set_scoring(&[1.0, 0.0], 0.0).unwrap();
    m
}

fn stream(values: &[i8]) -> Vec<StreamFrame> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| StreamFrame {
            frame_id: format!("f{i:03}"),
            features: FeatureMap::new(2, 1, 1, vec![*v as f32, 0.5]).unwrap(),
        })
        .collect()
}

proptest! {
    #[test]
    fn buffer_keeps_the_window_around_the_shutter(
        values in prop::collection::vec(-5i8..5, 1..40),
        shutter_frac in 0.0f64..1.0,
        n_pre in 0usize..8,
        n_post in 2usize..8,
    ) {
        let shutter = (shutter_frac * values.len() as f64) as usize;
        let cfg = RingBufferConfig { n_pre, n_post, frame_interval_ms: 33.0 };
        let s = run_session(stream(&values), shutter, &cfg, &channel0_model(), Timing::default()).unwrap();
        let lo = shutter.saturating_sub(n_pre);
        let hi = (shutter + n_post).min(values.len());
        let expected: Vec<String> = (lo..hi).map(|i| format!("f{i:03}")).collect();
        let got: Vec<String> = s.retained.iter().map(|f| f.frame_id.clone()).collect();
        prop_assert_eq!(&got, &expected);
        prop_assert!(s.max_pre_occupancy <= n_pre);
        prop_assert!(s.max_occupancy <= n_pre + n_post);
        prop_assert_eq!(s.evicted, lo);
        prop_assert_eq!(s.latencies_ms.len(), s.frames_seen);

        let best = (lo..hi).max_by(|a, b| values[*a].cmp(&values[*b]).then(b.cmp(a))).unwrap();
        prop_assert_eq!(s.selected.clone(), format!("f{best:03}"));
        prop_assert_eq!(select_best(&s.retained).unwrap().frame_id.clone(), s.selected);
        prop_assert_eq!(s.partial, shutter < n_pre || values.len() < shutter + n_post);
    }
}

#[test]
fn planted_peak_after_shutter_is_selected() {
    let mut values = vec![0i8; 30];
    values[14] = 4;
    values[3] = 9;
    let s = run_session(stream(&values), 10, &RingBufferConfig::default(), &channel0_model(), Timing::default()).unwrap();
    assert_eq!(s.selected, "f014");
    assert!(!s.partial);
}

#[test]
fn wall_timing_records_every_scored_frame() {
    let s = run_session(stream(&[1; 20]), 8, &RingBufferConfig::default(), &channel0_model(), Timing::Wall).unwrap();
    assert_eq!(s.latencies_ms.len(), 14);
    let r = s.report();
    assert_eq!(r.scores.len(), 11);
    assert!(r.latency_ms.p99 >= r.latency_ms.p50);
}
