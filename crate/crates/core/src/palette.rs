//! The fixed 12-color palette used for deterministic color assignment and
//! for naming colors in prompts.

use crate::canonical::sha256_hex;
use crate::scene_model::hex_to_rgb;

pub const PALETTE: [(&str, &str); 12] = [
    ("crimson", "#DC143C"),
    ("orange", "#FF8C00"),
    ("gold", "#FFD700"),
    ("olive", "#808000"),
    ("sea green", "#2E8B57"),
    ("teal", "#008080"),
    ("sky blue", "#87CEEB"),
    ("navy", "#000080"),
    ("purple", "#800080"),
    ("pink", "#FF69B4"),
    ("brown", "#8B4513"),
    ("slate gray", "#708090"),
];

/// Palette index for `(seed, label)`, from the first 8 bytes of
/// SHA-256 over `"{seed}:{label}"`.
pub fn palette_index(seed: u64, label: &str) -> usize {
    let h = sha256_hex(&format!("{seed}:{label}"));
    (u64::from_str_radix(&h[..16], 16).expect("hex digest") % PALETTE.len() as u64) as usize
}

pub fn color_for(seed: u64, label: &str) -> &'static str {
    PALETTE[palette_index(seed, label)].1
}

/// Name of the palette entry nearest in RGB (squared Euclidean distance);
/// ties resolve to the earlier entry.
pub fn nearest_name(hex: &str) -> &'static str {
    let Some((r, g, b)) = hex_to_rgb(hex) else {
        return "gray";
    };
    PALETTE
        .iter()
        .min_by_key(|(_, h)| {
            let (pr, pg, pb) = hex_to_rgb(h).expect("palette hex");
            let d = |a: u8, b: u8| (a as i32 - b as i32).pow(2);
            d(r, pr) + d(g, pg) + d(b, pb)
        })
        .map(|(n, _)| *n)
        .expect("palette is non-empty")
}
