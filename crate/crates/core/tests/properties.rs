use driftmem::driftsim::{apply_drift, generate_app, AppSpec, DriftOp};
use driftmem::stationary::{grounding_hint, PatchDescriptor, Rect, ScreenElement};
use proptest::prelude::*;

fn screen() -> impl Strategy<Value = Vec<ScreenElement>> {
    prop::collection::vec(
        (0.0..500.0f64, 0.0..500.0f64, 1.0..80.0f64, 1.0..80.0f64, prop::collection::vec(-1.0..1.0f64, 3)),
        1..10,
    )
    .prop_map(|els| {
        els.into_iter()
            .enumerate()
            .map(|(i, (x, y, w, h, mut f))| {
                f[0] += 2.0;
                ScreenElement { id: format!("e{i}"), bbox: Rect::new(x, y, w, h), features: f }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn hint_box_covers_anchor_and_grows_with_k(els in screen(), q in prop::collection::vec(-1.0..1.0f64, 3)) {
        let mut q = q;
        q[0] += 2.0;
        let patch = PatchDescriptor::new(q).unwrap();
        let mut prev: Option<Rect> = None;
        for k in 1..=els.len() + 1 {
            let h = grounding_hint(&els, &patch, k, -1.0).unwrap();
            prop_assert_eq!(h.covered.len(), k.min(els.len()));
            prop_assert_eq!(&h.covered[0], &h.anchor_id);
            for id in &h.covered {
                let el = els.iter().find(|e| &e.id == id).unwrap();
                prop_assert!(h.hint_box.contains(&el.bbox));
            }
            let best = els.iter().map(|e| patch.similarity(&e.features).unwrap()).fold(f64::MIN, f64::max);
            prop_assert_eq!(h.anchor_score, best);
            if let Some(p) = prev {
                prop_assert!(h.hint_box.contains(&p));
            }
            prev = Some(h.hint_box);
        }
    }
}

#[test]
fn drift_invariants_hold_across_seeds() {
    let spec = AppSpec::default();
    for seed in 0..40 {
        let app = generate_app(&spec, seed).unwrap();
        assert!(app.is_navigable(), "seed {seed}");
        let look = apply_drift(&app, &[DriftOp::Appearance { sigma: 0.3 }], seed).unwrap();
        assert_eq!(look.label_multiset(), app.label_multiset());
        for (_, e) in look.elements() {
            let norm: f64 = e.features.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "seed {seed}: norm {norm}");
        }
        let flow = apply_drift(&look, &[DriftOp::Workflow { moves: 3 }], seed).unwrap();
        assert!(flow.is_navigable(), "seed {seed}");
        assert_eq!(flow.version, app.version + 2);
        let labels = flow.label_multiset();
        for l in app.label_multiset() {
            assert!(labels.contains(&l), "seed {seed}: lost {l}");
        }
    }
}
