use std::collections::BTreeSet;

use dto_core::io::write_jsonl;
use dto_core::pipeline::{
    build_observations, run_pipeline, Event, EventKind, ObservationRecord, PipelineConfig,
};
use dto_core::schema::{FeatureSchema, Slot, SlotKind};
use proptest::prelude::*;

fn schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        Slot::new("intercept", SlotKind::Intercept),
        Slot::new("badge_count", SlotKind::BadgeCount),
        Slot::new("since", SlotKind::HoursSinceStateStart),
    ])
    .unwrap()
}

fn events() -> impl Strategy<Value = Vec<Event>> {
    proptest::collection::vec((0u8..6, 0u32..400, any::<bool>()), 0..80).prop_map(|raw| {
        raw.into_iter()
            .map(|(u, tenths, send)| Event {
                user_id: format!("user{u}"),
                timestamp: f64::from(tenths) / 10.0,
                kind: if send { EventKind::NotificationSend } else { EventKind::Visit },
                badge_count: None,
                raw_features: Default::default(),
            })
            .collect()
    })
}

fn permissive() -> PipelineConfig {
    PipelineConfig { max_notifications: u32::MAX, max_visits: u32::MAX, ..Default::default() }
}

proptest! {
    #[test]
    fn one_observation_per_resolved_send(evs in events()) {
        let users = build_observations(&evs, &schema(), &permissive()).unwrap();
        for u in &users {
            let mut mine: Vec<&Event> = evs.iter().filter(|e| e.user_id == u.user_id).collect();
            mine.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.kind.cmp(&b.kind)));
            let resolved = mine.windows(2).filter(|w| w[0].kind == EventKind::NotificationSend).count();
            prop_assert_eq!(u.observations.len(), resolved);
            for (o, w) in u.observations.iter().zip(mine.windows(2).filter(|w| w[0].kind == EventKind::NotificationSend)) {
                prop_assert!(o.duration > 0.0);
                prop_assert_eq!(o.uncensored, w[1].kind == EventKind::Visit);
                if !o.uncensored {
                    let gap = (w[1].timestamp - w[0].timestamp).max(permissive().duration_floor_hours);
                    prop_assert_eq!(o.duration, gap);
                }
            }
        }
    }

    #[test]
    fn shuffled_input_gives_same_observations(evs in events(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = evs.clone();
        // visits and sends sharing a timestamp are ordered by kind, so only
        // identical events could swap, and those are interchangeable
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = build_observations(&evs, &schema(), &permissive()).unwrap();
        let b = build_observations(&shuffled, &schema(), &permissive()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn split_is_disjoint_by_user_and_deterministic(evs in events(), split_seed in any::<u64>()) {
        let cfg = PipelineConfig { split_seed, ..permissive() };
        let (a, _) = run_pipeline(&evs, &schema(), &cfg).unwrap();
        let train: BTreeSet<&str> = a.train.iter().map(|o| o.user_id.as_str()).collect();
        prop_assert!(a.test.iter().all(|o| !train.contains(o.user_id.as_str())));
        let bytes = |ds: &dto_core::pipeline::SplitDataset| {
            let mut buf = Vec::new();
            let recs: Vec<ObservationRecord> = ds.train.iter().chain(&ds.test).map(ObservationRecord::from).collect();
            write_jsonl(&mut buf, &recs).unwrap();
            buf
        };
        let (b, _) = run_pipeline(&evs, &schema(), &cfg).unwrap();
        prop_assert_eq!(bytes(&a), bytes(&b));
    }
}
