//! Browser bindings for the demo page in `www/`.
//!
//! Each exported function takes plain values and returns a JSON string; the
//! `*_json` functions hold the logic so they can be tested natively.

use driftmem::cluster::{build_similarity_graph, maximal_cliques};
use driftmem::driftsim::{apply_drift, generate_app, AppSpec, DriftOp};
use driftmem::embed::HashedBagOfWords;
use driftmem::memstore::retention;
use driftmem::stationary::{grounding_hint, PatchDescriptor, Rect, ScreenElement, StationaryError};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn rect(r: &Rect) -> Value {
    json!({ "x": r.x, "y": r.y, "w": r.w, "h": r.h })
}

/// Retention against the number of retrievals since last access, one curve
/// per access count.
pub fn retention_curves_json(max_gap: u32, counts: &[u32]) -> Result<String, String> {
    let mut curves = Vec::new();
    for &n in counts {
        let points = (0..=max_gap)
            .map(|g| retention(0, u64::from(n), u64::from(g)).map(|r| json!([g, r])))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        curves.push(json!({ "count": n, "points": points }));
    }
    Ok(Value::Array(curves).to_string())
}

/// Remembers element `target` of a generated screen, redraws the screen with
/// appearance drift `sigma`, and grounds the remembered patch on the new
/// design with a `k`-element hint box.
pub fn grounding_json(seed: u64, sigma: f64, target: usize, k: usize, floor: f64) -> Result<String, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let before = generate_app(&AppSpec::default(), seed).map_err(|e| err(&e))?;
    let after = apply_drift(&before, &[DriftOp::Appearance { sigma }], seed ^ 0x5eed).map_err(|e| err(&e))?;
    let old = &before.screens[&before.entry_screen];
    let new = &after.screens[&after.entry_screen];
    let remembered = old.elements.get(target).ok_or_else(|| format!("no element {target}"))?;
    let patch = PatchDescriptor::new(remembered.features.clone()).map_err(|e| err(&e))?;
    let view: Vec<ScreenElement> = new.elements.iter().map(|e| e.as_screen_element()).collect();
    let elements: Vec<Value> = new
        .elements
        .iter()
        .zip(&old.elements)
        .map(|(e, o)| {
            json!({
                "id": e.id,
                "text": e.display_text,
                "old_text": o.display_text,
                "bbox": rect(&e.bbox),
                "similarity": patch.similarity(&e.features).unwrap_or(0.0),
            })
        })
        .collect();
    let hint = match grounding_hint(&view, &patch, k, floor) {
        Ok(h) => json!({
            "anchor": h.anchor_id,
            "score": h.anchor_score,
            "box": rect(&h.hint_box),
            "covered": h.covered,
            "correct": h.anchor_id == remembered.id,
        }),
        Err(StationaryError::NoMatch { best, floor }) => json!({ "no_match": { "best": best, "floor": floor } }),
        Err(e) => return Err(e.to_string()),
    };
    Ok(json!({ "remembered": remembered.id, "elements": elements, "hint": hint }).to_string())
}

/// Similarity graph and maximal cliques over one instruction per line.
pub fn cluster_json(text: &str, tau: f64) -> Result<String, String> {
    let items: Vec<(String, String)> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| (format!("i{i}"), l.to_string()))
        .collect();
    let graph = build_similarity_graph(&items, &HashedBagOfWords::default(), tau).map_err(|e| e.to_string())?;
    let cliques = maximal_cliques(&graph).map_err(|e| e.to_string())?;
    let index = |id: &str| items.iter().position(|(k, _)| k == id).expect("clique ids come from items");
    Ok(json!({
        "nodes": items.iter().map(|(_, t)| t).collect::<Vec<_>>(),
        "edges": graph.edges(),
        "cliques": cliques.iter().map(|c| c.member_ids.iter().map(|m| index(m)).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
    .to_string())
}

fn to_js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn retention_curves(max_gap: u32, counts: Vec<u32>) -> Result<String, JsValue> {
    to_js(retention_curves_json(max_gap, &counts))
}

#[wasm_bindgen]
pub fn grounding(seed: u32, sigma: f64, target: usize, k: usize, floor: f64) -> Result<String, JsValue> {
    to_js(grounding_json(u64::from(seed), sigma, target, k, floor))
}

#[wasm_bindgen]
pub fn cluster(text: &str, tau: f64) -> Result<String, JsValue> {
    to_js(cluster_json(text, tau))
}
