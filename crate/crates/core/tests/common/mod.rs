//! Generators and brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vts_mask::grid::BitGrid;
use vts_mask::sequence_layout::GroupId;
use vts_mask::structured_input::{ImageRef, RegionBitmap, SelfAttributeDescription, VtsGroup};
use vts_mask::{CompositionSpec, LayoutConfig, MaskMode, Modality, Owner, Region, TokenLayout, TokenTag};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rule oracle written straight from the per-pair conditions, one clause
/// per condition, without sharing code with the library.
pub fn oracle_allow(q: TokenTag, k: TokenTag, mode: MaskMode) -> bool {
    let spatial = |t: TokenTag| t.modality() == Modality::Spatial;
    let cei = |t: TokenTag| t.owner() == Owner::Cei;
    let unc = |t: TokenTag| t.owner() == Owner::Uncontrolled;
    let grp = |t: TokenTag| matches!(t.owner(), Owner::Group(_));

    let gia = q.owner() == k.owner()
        || (spatial(q) && spatial(k))
        || (cei(q) && grp(k))
        || (grp(q) && cei(k))
        || (unc(q) != unc(k) && spatial(q) && spatial(k))
        || (cei(q) && unc(k))
        || (unc(q) && cei(k));
    if mode == MaskMode::Gia {
        return gia;
    }
    let cross_region = grp(q) && grp(k) && spatial(q) && spatial(k) && q.owner() != k.owner();
    let region_u = (grp(q) && spatial(q) && unc(k)) || (unc(q) && grp(k) && spatial(k));
    let region_c = (grp(q) && spatial(q) && cei(k)) || (cei(q) && grp(k) && spatial(k));
    let u_c = (unc(q) && cei(k)) || (cei(q) && unc(k));
    gia && !(cross_region || region_u || region_c || u_c)
}

/// Every valid tag for groups `1..=groups`.
pub fn all_tags(groups: u32) -> Vec<TokenTag> {
    let mut out = Vec::new();
    for g in 1..=groups {
        out.extend([TokenTag::textual(g), TokenTag::visual(g), TokenTag::spatial(g)]);
    }
    out.push(TokenTag::cei());
    out.push(TokenTag::uncontrolled());
    out
}

fn random_region(r: &mut ChaCha8Rng, w: u32, h: u32) -> Region {
    if r.random_bool(0.5) {
        let x0 = r.random_range(0..w);
        let y0 = r.random_range(0..h);
        let x1 = r.random_range(x0 + 1..=w);
        let y1 = r.random_range(y0 + 1..=h);
        Region::bbox(x0, y0, x1, y1)
    } else {
        // union of a few blobs plus sparse noise
        let (wu, hu) = (w as usize, h as usize);
        let mut mask = BitGrid::new(wu, hu);
        for _ in 0..r.random_range(1..=3) {
            let cx = r.random_range(0..wu);
            let cy = r.random_range(0..hu);
            let rad = r.random_range(2..=24usize);
            for y in 0..hu {
                for x in 0..wu {
                    if x.abs_diff(cx).pow(2) + y.abs_diff(cy).pow(2) <= rad * rad {
                        mask.set(x, y, true);
                    }
                }
            }
        }
        for _ in 0..r.random_range(0..20) {
            mask.set(r.random_range(0..wu), r.random_range(0..hu), true);
        }
        Region::Bitmap(RegionBitmap { source: None, mask })
    }
}

/// A valid spec: 1..=max_groups groups, canvas up to 128×128, optional CEI,
/// bbox or bitmap regions, group order shuffled.
pub fn random_spec(r: &mut ChaCha8Rng, max_groups: u32) -> CompositionSpec {
    let w = 16 * r.random_range(1..=8u32);
    let h = 16 * r.random_range(1..=8u32);
    let n = r.random_range(1..=max_groups);
    let mut groups: Vec<VtsGroup> = (1..=n)
        .map(|id| VtsGroup {
            group_id: id,
            visual_ref: ImageRef {
                source: format!("ref{id}.png"),
                width: r.random_range(1..=48),
                height: r.random_range(1..=48),
            },
            sad: SelfAttributeDescription {
                identifier: format!("entity{id}"),
                description: format!("entity number {id}"),
            },
            region: random_region(r, w, h),
        })
        .collect();
    for i in (1..groups.len()).rev() {
        groups.swap(i, r.random_range(0..=i));
    }
    CompositionSpec {
        canvas_width: w,
        canvas_height: h,
        groups,
        cei: r.random_bool(0.5).then(|| "scene".to_string()),
        total_steps: r.random_range(1..=30),
        first_stage_ratio: r.random_range(0.0..=1.0),
        guidance_scale: 3.5,
        seed: r.random_range(0..i64::MAX as u64),
    }
}

/// Small token budgets keep dense checks fast without losing any tag class.
pub fn small_config(r: &mut ChaCha8Rng) -> LayoutConfig {
    LayoutConfig {
        sad_tokens: r.random_range(1..=4),
        cei_tokens: r.random_range(1..=4),
    }
}

/// Random tag sequence over `groups` groups, in arbitrary order.
pub fn random_tag_sequence(r: &mut ChaCha8Rng, groups: u32, len: usize) -> Vec<TokenTag> {
    let pool = all_tags(groups);
    (0..len).map(|_| pool[r.random_range(0..pool.len())]).collect()
}

/// Owner of each 16×16 canvas footprint by direct pixel counting on the
/// normalized spec. Uncovered pixels compete as the uncontrolled region.
pub fn footprint_oracle(spec: &CompositionSpec) -> Vec<TokenTag> {
    let spec = spec.normalized();
    let (w, h) = (spec.canvas_width as usize, spec.canvas_height as usize);
    let rasters = spec.rasterized_regions();
    let mut out = Vec::new();
    for ty in 0..h / 16 {
        for tx in 0..w / 16 {
            let mut counts = vec![0usize; rasters.len()];
            let mut uncovered = 0usize;
            for y in ty * 16..ty * 16 + 16 {
                for x in tx * 16..tx * 16 + 16 {
                    let mut any = false;
                    for (c, m) in counts.iter_mut().zip(&rasters) {
                        if m.get(x, y) {
                            *c += 1;
                            any = true;
                        }
                    }
                    if !any {
                        uncovered += 1;
                    }
                }
            }
            // groups are sorted by id after normalization; first max wins
            let mut best: Option<(usize, usize)> = None;
            for (i, &c) in counts.iter().enumerate() {
                if best.is_none_or(|(_, b)| c > b) {
                    best = Some((i, c));
                }
            }
            let tag = match best {
                Some((i, c)) if c > 0 && c >= uncovered => TokenTag::spatial(spec.groups[i].group_id),
                _ => TokenTag::uncontrolled(),
            };
            out.push(tag);
        }
    }
    out
}

pub fn group_tokens(layout: &TokenLayout, g: u32) -> Vec<usize> {
    layout.indices_where(|t| t.owner() == Owner::Group(GroupId(g)))
}

pub fn random_mask(r: &mut ChaCha8Rng, w: usize, h: usize) -> BitGrid {
    let density: f64 = r.random_range(0.0..=1.0);
    BitGrid::from_fn(w, h, |_, _| r.random_bool(density))
}
