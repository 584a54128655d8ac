//! Word lists, synonym tables and feature anchors for synthetic apps.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embed::fnv1a64;

pub(crate) const SCREEN_NOUNS: &[&str] = &[
    "settings",
    "gallery",
    "messages",
    "contacts",
    "calendar",
    "music",
    "camera",
    "notes",
    "files",
    "maps",
    "weather",
    "clock",
    "mail",
    "browser",
    "store",
    "wallet",
    "network",
    "display",
    "sound",
    "battery",
    "privacy",
    "account",
    "storage",
    "downloads",
    "alarms",
    "podcasts",
    "library",
    "profile",
    "reminders",
    "bookmarks",
    "fitness",
    "travel",
];

pub(crate) const ITEM_NOUNS: &[&str] = &[
    "photo", "video", "message", "contact", "event", "song", "note", "file", "route", "forecast", "alarm", "email",
    "page", "card", "album", "playlist", "document", "reminder", "bookmark", "device", "theme", "ringtone", "backup",
    "password", "widget", "shortcut", "ticket", "receipt", "recipe", "workout",
];

pub(crate) const VERBS: &[&str] = &[
    "share",
    "delete",
    "rename",
    "archive",
    "export",
    "favorite",
    "print",
    "sync",
    "pin",
    "copy",
    "restore",
    "download",
    "upload",
    "edit",
    "mute",
    "hide",
    "lock",
    "sort",
    "scan",
    "translate",
];

pub(crate) const ARG_WORDS: &[&str] = &[
    "sunset", "alice", "tokyo", "harbor", "maple", "quartz", "violet", "summit", "lagoon", "ember", "falcon", "meadow",
    "cobalt", "willow", "orbit", "canyon", "juniper", "saffron", "glacier", "pepper", "marble", "cedar", "lantern",
    "breeze", "copper", "velvet", "prism", "thistle", "harvest", "nimbus", "coral", "aspen", "delta", "ivory", "raven",
    "sierra",
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ru", "ze", "po", "ta", "vi", "sen", "dor", "qua", "bel", "fin", "gor", "lux", "nim", "pra",
    "sol", "tek", "vro", "wen", "yal", "zor", "bri",
];

/// Label of the cross link every non-entry screen carries back to the entry.
pub const HOME_LABEL: &str = "go home";
pub const HOME_TEXT: &str = "Home";

/// Number of redesign names each label can take besides its canonical text.
const SYNONYMS_PER_LABEL: usize = 3;

const ANCHOR_SALT: u64 = 0x5eed_a11c_0f00_d001;
const SYNONYM_SALT: u64 = 0x5eed_5a1e_7e47_0002;

/// Deterministic RNG for a label and a salt.
pub(crate) fn label_rng(label: &str, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(fnv1a64(label.as_bytes()) ^ salt)
}

pub(crate) fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=3);
    let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("nonempty")).collect();
    capitalize(&w)
}

/// Canonical display text first, then the redesign names. Redesign names are
/// invented words, so they share no token with the canonical text.
pub fn synonym_table(label: &str, canonical: &str) -> Vec<String> {
    let mut rng = label_rng(label, SYNONYM_SALT);
    let mut table = vec![canonical.to_string()];
    while table.len() < SYNONYMS_PER_LABEL + 1 {
        let w = pseudo_word(&mut rng);
        if !table.contains(&w) {
            table.push(w);
        }
    }
    table
}

/// Unit-norm feature anchor shared by every element with this label.
pub fn feature_anchor(label: &str, dim: usize) -> Vec<f64> {
    let mut rng = label_rng(label, ANCHOR_SALT);
    normalize((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Gaussian noise with expected squared norm 1.
pub(crate) fn noise(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

pub(crate) fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::tokenize;

    #[test]
    fn synonyms_are_stable_and_disjoint() {
        let a = synonym_table("open gallery", "Gallery");
        assert_eq!(a, synonym_table("open gallery", "Gallery"));
        assert_eq!(a.len(), 4);
        assert_eq!(a[0], "Gallery");
        for w in &a[1..] {
            assert!(tokenize(w).all(|t| t != "gallery"));
        }
    }

    #[test]
    fn anchors_are_unit_and_distinct() {
        let a = feature_anchor("open gallery", 16);
        let b = feature_anchor("share photo", 16);
        let na: f64 = a.iter().map(|x| x * x).sum();
        assert!((na - 1.0).abs() < 1e-12);
        assert_ne!(a, b);
        assert_eq!(a, feature_anchor("open gallery", 16));
    }

    #[test]
    fn word_lists_have_no_duplicates() {
        for list in [SCREEN_NOUNS, ITEM_NOUNS, VERBS, ARG_WORDS] {
            let mut v = list.to_vec();
            v.sort();
            v.dedup();
            assert_eq!(v.len(), list.len());
        }
    }
}
