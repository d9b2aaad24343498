//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::Rng;

use common::*;
use vts_mask::attention_mask::{export_compressed, export_mask, import_compressed, import_dense, import_mask};
use vts_mask::grid::BitGrid;
use vts_mask::metrics::{
    area_filter, avg_report, bg_similarity, color_hist_sim, fill_ratio, in_ratio, ssim, ssim_rgb, AreaDecision,
    HistogramConfig, MetricValue, QualityScores, SimilarityInputs, SsimConfig,
};
use vts_mask::toy_mmdit::{perturbation_probe, ProbeTarget, SimulatorConfig};
use vts_mask::{
    allow_rule, build_mask, build_schedule, expand_dense, pack, LayoutConfig, MaskMode, Modality, Owner, Region,
    StageSchedule, TokenLayout, TokenTag,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Row/column order of the hand-derived tables.
fn eight_tags() -> [TokenTag; 8] {
    [
        TokenTag::textual(1),
        TokenTag::textual(2),
        TokenTag::visual(1),
        TokenTag::visual(2),
        TokenTag::spatial(1),
        TokenTag::spatial(2),
        TokenTag::uncontrolled(),
        TokenTag::cei(),
    ]
}

const NAMES: [&str; 8] = ["T1", "T2", "V1", "V2", "S1", "S2", "U", "C"];

#[rustfmt::skip]
const GIA_TABLE: [&str; 8] = [
    // T1 T2 V1 V2 S1 S2 U C
    "10101001", // T1
    "01010101", // T2
    "10101001", // V1
    "01010101", // V2
    "10101111", // S1
    "01011111", // S2
    "00001111", // U
    "11111111", // C
];

#[rustfmt::skip]
const RMA_TABLE: [&str; 8] = [
    "10101001", // T1
    "01010101", // T2
    "10101001", // V1
    "01010101", // V2
    "10101000", // S1
    "01010100", // S2
    "00000010", // U
    "11110001", // C
];

/// The tables above packed by hand, LSB-first, one byte per row.
const GIA_BYTES: [u8; 8] = [0x95, 0xAA, 0x95, 0xAA, 0xF5, 0xFA, 0xF0, 0xFF];
const RMA_BYTES: [u8; 8] = [0x95, 0xAA, 0x95, 0xAA, 0x15, 0x2A, 0x40, 0x8F];

fn eight_layout() -> TokenLayout {
    TokenLayout::from_tags(eight_tags().to_vec())
}

fn table_bit(table: &[&str; 8], q: usize, k: usize) -> bool {
    table[q].as_bytes()[k] == b'1'
}

struct Corpus {
    layouts: Vec<TokenLayout>,
    group_counts: BTreeSet<u32>,
    with_cei: usize,
    bbox_regions: usize,
    bitmap_regions: usize,
}

fn corpus(count: u64) -> Corpus {
    let mut c = Corpus {
        layouts: Vec::new(),
        group_counts: BTreeSet::new(),
        with_cei: 0,
        bbox_regions: 0,
        bitmap_regions: 0,
    };
    for seed in 0..count {
        let mut r = rng(seed);
        let spec = random_spec(&mut r, 5);
        c.group_counts.insert(spec.groups.len() as u32);
        c.with_cei += usize::from(spec.cei.is_some());
        for g in &spec.groups {
            match g.region {
                Region::BBox { .. } => c.bbox_regions += 1,
                Region::Bitmap(_) => c.bitmap_regions += 1,
            }
        }
        c.layouts
            .push(pack(&spec, &LayoutConfig::default()).expect("random spec packs"));
    }
    c
}

fn oracle_mismatches(layout: &TokenLayout, mode: MaskMode) -> usize {
    let dense = expand_dense(&build_mask(layout, mode));
    let tags = layout.tags();
    let mut bad = 0;
    for q in 0..tags.len() {
        for k in 0..tags.len() {
            bad += usize::from(dense.get(q, k) != oracle_allow(tags[q], tags[k], mode));
        }
    }
    bad
}

fn c1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let c = corpus(240);
    let mut pairs = 0usize;
    for (i, layout) in c.layouts.iter().enumerate() {
        for mode in [MaskMode::Gia, MaskMode::Rma] {
            let bad = oracle_mismatches(layout, mode);
            ensure(bad == 0, || format!("layout {i} {mode}: {bad} bits differ"))?;
            pairs += layout.total_len().pow(2);
        }
    }
    let elapsed = start.elapsed();
    ensure(c.group_counts == (1..=5).collect(), || {
        format!("group counts {:?}", c.group_counts)
    })?;
    ensure(c.with_cei > 0 && c.with_cei < c.layouts.len(), || "CEI coverage".into())?;
    ensure(c.bbox_regions > 0 && c.bitmap_regions > 0, || {
        "region kind coverage".into()
    })?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} layouts, {pairs} pairs, {} bbox + {} bitmap regions, {:.2}s",
        c.layouts.len(),
        c.bbox_regions,
        c.bitmap_regions,
        elapsed.as_secs_f64()
    ))
}

fn c2_truth_table() -> Outcome {
    let tags = eight_tags();
    let layout = eight_layout();
    for (mode, table) in [(MaskMode::Gia, &GIA_TABLE), (MaskMode::Rma, &RMA_TABLE)] {
        let dense = expand_dense(&build_mask(&layout, mode));
        for q in 0..8 {
            for k in 0..8 {
                let want = table_bit(table, q, k);
                ensure(allow_rule(tags[q], tags[k], mode) == want, || {
                    format!("{mode} rule ({}, {}) != {want}", NAMES[q], NAMES[k])
                })?;
                ensure(dense.get(q, k) == want, || {
                    format!("{mode} dense ({}, {})", NAMES[q], NAMES[k])
                })?;
            }
        }
    }
    let [t1, t2, v1, v2, s1, s2, u, c] = tags;
    let examples = [
        (t1, t2, MaskMode::Gia, false),
        (s1, s2, MaskMode::Gia, true),
        (s1, s2, MaskMode::Rma, false),
        (v2, c, MaskMode::Gia, true),
        (u, v2, MaskMode::Gia, false),
        (u, s2, MaskMode::Gia, true),
        (u, c, MaskMode::Rma, false),
        (t1, v1, MaskMode::Rma, true),
    ];
    for (q, k, mode, want) in examples {
        ensure(allow_rule(q, k, mode) == want, || format!("example ({q}, {k}, {mode})"))?;
    }
    for x in tags {
        for mode in [MaskMode::Gia, MaskMode::Rma] {
            ensure(allow_rule(x, x, mode), || format!("({x}, {x}, {mode}) must be allowed"))?;
        }
    }
    // RMA clears exactly the listed pairs from GIA
    let cleared = [(4, 5), (4, 6), (5, 6), (4, 7), (5, 7), (6, 7)];
    for (q, qn) in NAMES.iter().enumerate() {
        for (k, kn) in NAMES.iter().enumerate() {
            let listed = cleared.contains(&(q.min(k), q.max(k)));
            let diff = table_bit(&GIA_TABLE, q, k) && !table_bit(&RMA_TABLE, q, k);
            ensure(listed == diff, || format!("set difference at ({qn}, {kn})"))?;
        }
    }
    Ok(format!("64 pairs x 2 modes, {} example rows", examples.len() + 1))
}

fn c3_monotone() -> Outcome {
    let c = corpus(240);
    let mut layouts = c.layouts;
    for seed in 0..100 {
        let mut r = rng(10_000 + seed);
        let groups = r.random_range(1..=5);
        let len = r.random_range(1..120);
        layouts.push(TokenLayout::from_tags(random_tag_sequence(&mut r, groups, len)));
    }
    let mut violations = 0usize;
    for layout in &layouts {
        let gia = expand_dense(&build_mask(layout, MaskMode::Gia));
        let rma = expand_dense(&build_mask(layout, MaskMode::Rma));
        let n = layout.total_len();
        for q in 0..n {
            for k in 0..n {
                violations += usize::from(rma.get(q, k) && !gia.get(q, k));
            }
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok(format!("{} layouts, 0 violations", layouts.len()))
}

fn c4_isolation() -> Outcome {
    let mut layouts = 0;
    let mut probes = 0;
    let mut observed_changes = 0usize;
    let mut seed = 20_000u64;
    while layouts < 60 {
        seed += 1;
        let mut r = rng(seed);
        let spec = random_spec(&mut r, 5);
        if spec.groups.len() < 2 {
            continue;
        }
        let cfg = small_config(&mut r);
        let layout = pack(&spec, &cfg).unwrap();
        let sim = SimulatorConfig {
            dim: 8,
            layers: 1,
            seed: spec.seed,
        };
        let tags = layout.tags().to_vec();
        let n = spec.groups.len() as u32;
        let group_of = |q: usize| tags[q].group();
        let mut probe = |mode: MaskMode, target: ProbeTarget| -> Result<Option<Vec<usize>>, String> {
            if !tags.iter().any(|&t| target.matches(t)) {
                return Ok(None);
            }
            probes += 1;
            let report = perturbation_probe(&layout, mode, target, &sim).map_err(|e| e.to_string())?;
            observed_changes += report.changed.len();
            Ok(Some(report.changed))
        };

        for j in 1..=n {
            let target = ProbeTarget {
                owner: Owner::Group(vts_mask::sequence_layout::GroupId(j)),
                modality: None,
            };
            let changed = probe(MaskMode::Gia, target)?.unwrap_or_default();
            for &q in &changed {
                let leaked = group_of(q).is_some_and(|g| g.0 != j) && tags[q].modality() != Modality::Spatial;
                ensure(!leaked, || format!("seed {seed}: GIA group {j} reached {}", tags[q]))?;
            }
        }

        let mut rma_targets = vec![
            ProbeTarget {
                owner: Owner::Uncontrolled,
                modality: None,
            },
            ProbeTarget {
                owner: Owner::Cei,
                modality: None,
            },
        ];
        for j in 1..=n {
            rma_targets.push(ProbeTarget {
                owner: Owner::Group(vts_mask::sequence_layout::GroupId(j)),
                modality: Some(Modality::Spatial),
            });
        }
        for target in rma_targets {
            let Some(changed) = probe(MaskMode::Rma, target)? else {
                continue;
            };
            for &q in &changed {
                let spatial_group = tags[q].modality() == Modality::Spatial && group_of(q).is_some();
                let own_region = target.modality.is_some() && tags[q].owner() == target.owner;
                ensure(!spatial_group || own_region, || {
                    format!(
                        "seed {seed}: RMA perturbation of {:?} reached {}",
                        target.owner, tags[q]
                    )
                })?;
            }
        }
        layouts += 1;
    }
    ensure(observed_changes > 0, || "probes never changed anything".into())?;
    Ok(format!("{layouts} layouts, {probes} probes, tolerance 1e-9"))
}

fn c5_schedule() -> Outcome {
    let s = build_schedule(20, 0.05).map_err(|e| e.to_string())?;
    let mut want = vec![MaskMode::Rma];
    want.extend([MaskMode::Gia; 19]);
    ensure(s.steps() == want.as_slice(), || format!("(20, 0.05) gave {s}"))?;
    let s0 = build_schedule(20, 0.0).map_err(|e| e.to_string())?;
    ensure(s0.steps() == [MaskMode::Gia; 20].as_slice(), || {
        format!("(20, 0) gave {s0}")
    })?;
    Ok("RMA x1 + GIA x19; GIA x20".into())
}

fn c6_metric_oracles() -> Outcome {
    for seed in 0..100 {
        let mut r = rng(30_000 + seed);
        let (w, h) = (r.random_range(1..48), r.random_range(1..48));
        let g = random_mask(&mut r, w, h);
        let t = random_mask(&mut r, w, h);
        let (mut inter, mut ng, mut nt) = (0u64, 0u64, 0u64);
        for (a, b) in g.bits().iter().zip(t.bits()) {
            inter += u64::from(*a && *b);
            ng += u64::from(*a);
            nt += u64::from(*b);
        }
        let want = |den: u64| {
            if den == 0 {
                MetricValue::Undefined
            } else {
                MetricValue::Value(100.0 * inter as f64 / den as f64)
            }
        };
        let got = (in_ratio(&g, &t).unwrap(), fill_ratio(&g, &t).unwrap());
        ensure(got == (want(ng), want(nt)), || format!("pair {seed}: {got:?}"))?;
    }
    let m = BitGrid::rect(20, 20, 3, 3, 15, 11);
    ensure(
        in_ratio(&m, &m).unwrap() == MetricValue::Value(100.0)
            && fill_ratio(&m, &m).unwrap() == MetricValue::Value(100.0),
        || "identity".into(),
    )?;
    let (a, b) = (
        BitGrid::rect(20, 20, 0, 0, 10, 20),
        BitGrid::rect(20, 20, 10, 0, 20, 20),
    );
    ensure(
        in_ratio(&a, &b).unwrap() == MetricValue::Value(0.0) && fill_ratio(&a, &b).unwrap() == MetricValue::Value(0.0),
        || "disjoint".into(),
    )?;
    let with_pixels = |n: usize| BitGrid::from_fn(10, 10, |x, y| y * 10 + x < n);
    ensure(area_filter(&with_pixels(76)) == AreaDecision::Discard, || {
        "76% kept".into()
    })?;
    ensure(area_filter(&with_pixels(75)) == AreaDecision::Keep, || {
        "75% discarded".into()
    })?;
    Ok("100 random pairs exact; identity, disjoint, 75%/76% area".into())
}

fn c7_bg_similarity() -> Outcome {
    let bg = |d, c, s, h| {
        bg_similarity(&SimilarityInputs {
            dino: d,
            clip: c,
            ssim: s,
            ch: h,
        })
        .unwrap()
    };
    ensure(bg(1.0, 1.0, 1.0, 1.0) == 100.0, || "bg(1,1,1,1) != 100".into())?;
    ensure(bg(0.0, 0.0, 0.0, 0.0) == 0.0, || "bg(0,0,0,0) != 0".into())?;
    let want = [0.4, 0.25, 0.2, 0.15];
    for (base, step) in [(0.0, 1.0), (0.25, 0.5)] {
        for (i, &w) in want.iter().enumerate() {
            let mut x = [base; 4];
            let lo = bg(x[0], x[1], x[2], x[3]);
            x[i] += step;
            let hi = bg(x[0], x[1], x[2], x[3]);
            let recovered = (hi - lo) / step / 100.0;
            ensure(recovered == w, || format!("weight {i} at base {base}: {recovered}"))?;
        }
    }
    Ok("BG-S(1,1,1,1) = 100; weights (0.4, 0.25, 0.2, 0.15)".into())
}

fn c8_avg() -> Outcome {
    let avg = avg_report(&QualityScores {
        dpg: Some(85.61),
        id_s: Some(78.04),
        ip_s: Some(72.33),
        bg_s: Some(83.14),
        aes: Some(53.59),
    })
    .map_err(|e| e.to_string())?;
    ensure((avg - 74.54).abs() <= 0.005, || format!("AVG {avg}"))?;
    Ok(format!("AVG = {avg:.4}"))
}

fn c9_self_similarity() -> Outcome {
    let ssim_cfg = SsimConfig::default();
    let hist_cfg = HistogramConfig::default();
    let mut worst_asym = 0.0f64;
    for seed in 0..20 {
        let mut r = rng(40_000 + seed);
        let (w, h) = (r.random_range(8..40u32), r.random_range(8..40u32));
        let x = RgbImage::from_fn(w, h, |_, _| Rgb([r.random(), r.random(), r.random()]));
        let y = RgbImage::from_fn(w, h, |_, _| Rgb([r.random(), r.random(), r.random()]));
        let gx = GrayImage::from_fn(w, h, |_, _| Luma([r.random()]));
        let gy = GrayImage::from_fn(w, h, |_, _| Luma([r.random()]));
        let s = ssim_rgb(&x, &x, None, &ssim_cfg).map_err(|e| e.to_string())?;
        let sg = ssim(&gx, &gx, &ssim_cfg).map_err(|e| e.to_string())?;
        let ch = color_hist_sim(&x, &x, &hist_cfg).map_err(|e| e.to_string())?;
        ensure(s == 1.0 && sg == 1.0, || format!("image {seed}: ssim(x,x) = {s}, {sg}"))?;
        ensure(ch == 1.0, || format!("image {seed}: ch(x,x) = {ch}"))?;
        let asym = (ssim_rgb(&x, &y, None, &ssim_cfg).unwrap() - ssim_rgb(&y, &x, None, &ssim_cfg).unwrap())
            .abs()
            .max((ssim(&gx, &gy, &ssim_cfg).unwrap() - ssim(&gy, &gx, &ssim_cfg).unwrap()).abs());
        worst_asym = worst_asym.max(asym);
    }
    ensure(worst_asym <= 1e-12, || format!("SSIM asymmetry {worst_asym:e}"))?;
    Ok(format!("20 images; max SSIM asymmetry {worst_asym:e}"))
}

fn c10_wire_round_trip() -> Outcome {
    // hand-packed dense fixtures for the 8-tag layout
    let layout = eight_layout();
    for (mode, code, bytes) in [(MaskMode::Gia, 0u8, GIA_BYTES), (MaskMode::Rma, 1u8, RMA_BYTES)] {
        let artifact = build_mask(&layout, mode);
        let mut want = b"LAMK".to_vec();
        want.extend(1u32.to_le_bytes());
        want.push(code);
        want.extend(8u64.to_le_bytes());
        want.extend(layout.digest());
        want.push(1);
        want.extend(bytes);
        let got = export_mask(&artifact, true);
        ensure(got == want, || format!("{mode} dense bytes {got:02x?}"))?;
    }
    // a width that leaves padding bits
    let three = TokenLayout::from_tags(vec![TokenTag::textual(1), TokenTag::visual(1), TokenTag::spatial(1)]);
    let got = export_mask(&build_mask(&three, MaskMode::Rma), true);
    ensure(got[50..] == [0x07, 0x07, 0x07], || {
        format!("3-token payload {:02x?}", &got[50..])
    })?;

    let c = corpus(40);
    for (i, layout) in c.layouts.iter().enumerate() {
        let text = layout.to_text();
        let back = TokenLayout::from_text(&text).map_err(|e| e.to_string())?;
        ensure(&back == layout && back.to_text() == text, || format!("layout {i} text"))?;
        for mode in [MaskMode::Gia, MaskMode::Rma] {
            let artifact = build_mask(layout, mode);
            let compressed = export_compressed(&artifact);
            let from_text = import_compressed(&compressed).map_err(|e| e.to_string())?;
            ensure(from_text == artifact, || format!("layout {i} {mode} compressed"))?;
            for dense in [false, true] {
                let bytes = export_mask(&artifact, dense);
                let back = import_mask(&bytes, &compressed).map_err(|e| e.to_string())?;
                ensure(export_mask(&back, dense) == bytes, || {
                    format!("layout {i} {mode} binary")
                })?;
                let raw = import_dense(&bytes).map_err(|e| e.to_string())?;
                ensure(raw.layout_digest == layout.digest(), || format!("layout {i} digest"))?;
                if dense {
                    ensure(raw.dense.as_ref() == Some(&expand_dense(&artifact)), || {
                        format!("layout {i} {mode} dense payload")
                    })?;
                }
            }
        }
    }
    for (steps, ratio) in [(20, 0.05), (20, 0.0), (7, 1.0), (1, 0.5)] {
        let s = build_schedule(steps, ratio).unwrap();
        let back = StageSchedule::from_text(&s.to_text()).map_err(|e| e.to_string())?;
        ensure(back == s && back.to_text() == s.to_text(), || {
            format!("schedule ({steps}, {ratio})")
        })?;
    }
    let text = build_schedule(20, 0.05).unwrap().to_text();
    ensure(text == format!("RMA\n{}", "GIA\n".repeat(19)), || {
        format!("schedule text {text:?}")
    })?;
    Ok("hand-packed 8-tag and 3-token payloads; 40 layouts; 4 schedules".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("mask oracle equivalence", c1_oracle_equivalence),
        ("8-tag truth table", c2_truth_table),
        ("monotone restriction", c3_monotone),
        ("isolation", c4_isolation),
        ("two-stage schedule", c5_schedule),
        ("IN-R / FI-R oracles", c6_metric_oracles),
        ("BG-S arithmetic", c7_bg_similarity),
        ("AVG", c8_avg),
        ("SSIM / CH self-similarity", c9_self_similarity),
        ("wire round trip", c10_wire_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
