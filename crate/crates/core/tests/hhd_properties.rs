use hodgeflow_core::field::{normalize_field, NormMode};
use hodgeflow_core::hhd::{
    apply_edit_sequence, decompose, divergence_free_part, edit_region, format_edit_script, parse_edit_script,
    ComponentMask, EditRequest,
};
use hodgeflow_core::metrics::{cme, cs, mse, sfe, vpe};
use hodgeflow_core::synth::{combine_patterns, PatternKind, PatternSpec};
use hodgeflow_core::{Rect, VectorField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(w: usize, h: usize, seed: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VectorField::from_fn(w, h, |_, _| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).unwrap()
}

fn rms(f: &VectorField) -> f64 {
    let n = f.data().len() as f64;
    (f.data().iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>() / n).sqrt()
}

fn vortex_scene(n: usize) -> VectorField {
    let c = (n - 1) as f64 / 2.0;
    let specs = [
        (PatternSpec::new(PatternKind::Vortex, [c, c], 1.0), 1.0),
        (PatternSpec::new(PatternKind::Divergent, [c * 0.6, c * 1.3], 1.0), 0.5),
        (PatternSpec::new(PatternKind::Constant, [0.0, 0.0], 1.0), 0.3),
    ];
    combine_patterns(&specs, n, n).unwrap()
}

#[test]
fn extraction_is_linear() {
    let (f, g) = (random_field(40, 32, 1), random_field(40, 32, 2));
    let (a, b) = (1.7, -0.6);
    let combo = f.scale(a).add(&g.scale(b)).unwrap();
    let lhs = divergence_free_part(&combo).unwrap().field;
    let rhs = divergence_free_part(&f)
        .unwrap()
        .field
        .scale(a)
        .add(&divergence_free_part(&g).unwrap().field.scale(b))
        .unwrap();
    assert!(rms(&lhs.sub(&rhs).unwrap()) <= 1e-8);
}

#[test]
fn removing_harmonic_twice_is_idempotent() {
    for n in [64, 256] {
        let f = random_field(n, n, 7);
        let edit = [EditRequest {
            region: Rect::full(n, n),
            mask: ComponentMask::NO_HARMONIC,
        }];
        let once = apply_edit_sequence(&f, &edit).unwrap();
        let twice = apply_edit_sequence(&once, &edit).unwrap();
        let change = rms(&twice.sub(&once).unwrap());
        assert!(change <= 1e-8, "{n}: {change}");
    }
}

#[test]
fn whole_field_single_component_edits() {
    let f = random_field(48, 48, 3);
    let full = Rect::full(48, 48);
    let div_free = edit_region(&f, full, ComponentMask::DIV_FREE).unwrap();
    assert!(cs(&div_free) <= 1e-10, "{}", cs(&div_free));
    let curl_free = edit_region(&f, full, ComponentMask::CURL_FREE).unwrap();
    assert!(cme(&curl_free) <= 1e-10, "{}", cme(&curl_free));
}

#[test]
fn layered_region_sequence() {
    let n = 64;
    let f = vortex_scene(n);
    let center = Rect::new(16, 16, 48, 48);
    let corners = [Rect::new(0, 0, 16, 16), Rect::new(48, 48, 64, 64)];
    let mut edits = vec![
        EditRequest {
            region: Rect::full(n, n),
            mask: ComponentMask::NO_HARMONIC,
        },
        EditRequest {
            region: center,
            mask: ComponentMask::CURL_FREE,
        },
    ];
    edits.extend(corners.map(|region| EditRequest {
        region,
        mask: ComponentMask::DIV_FREE,
    }));
    let out = apply_edit_sequence(&f, &edits).unwrap();
    let c = cme(&out.extract(center).unwrap());
    assert!(c <= 1e-10, "center cme {c}");
    for r in corners {
        let s = cs(&out.extract(r).unwrap());
        assert!(s <= 1e-10, "corner {r} cs {s}");
    }
    // the script form replays to the same bits
    let script = format_edit_script(&edits);
    let replay = apply_edit_sequence(&f, &parse_edit_script(&script, n, n).unwrap()).unwrap();
    assert_eq!(replay, out);
}

#[test]
fn opposite_vortices_give_four_times_psi_energy() {
    let spec = PatternSpec::new(PatternKind::Vortex, [15.5, 15.5], 1.0);
    let b = combine_patterns(&[(spec, 1.0)], 32, 32).unwrap();
    let a = b.scale(-1.0);
    let psi = divergence_free_part(&b).unwrap().potential;
    let energy: f64 = psi.data().iter().map(|p| p * p).sum();
    for value in [vpe(&a, &b).unwrap(), sfe(&a, &b).unwrap()] {
        assert!((value - 4.0 * energy).abs() <= 1e-6 * 4.0 * energy, "{value} vs {}", 4.0 * energy);
    }
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (4usize..24, 4usize..24)
}

fn field_strategy() -> impl Strategy<Value = VectorField> {
    dims().prop_flat_map(|(w, h)| {
        prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), w * h)
            .prop_map(move |v| VectorField::new(w, h, v.into_iter().map(|(a, b)| [a, b]).collect()).unwrap())
    })
}

fn rect_in(w: usize, h: usize) -> impl Strategy<Value = Rect> {
    (0..=w - 4, 0..=h - 4).prop_flat_map(move |(x0, y0)| {
        (x0 + 4..=w, y0 + 4..=h).prop_map(move |(x1, y1)| Rect::new(x0, y0, x1, y1))
    })
}

fn mask_strategy() -> impl Strategy<Value = ComponentMask> {
    (any::<bool>(), any::<bool>(), any::<bool>())
        .prop_filter("at least one component", |(a, b, c)| *a || *b || *c)
        .prop_map(|(curl_free, div_free, harmonic)| ComponentMask {
            curl_free,
            div_free,
            harmonic,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn components_sum_to_input(f in field_strategy()) {
        let parts = decompose(&f).unwrap();
        let sum = parts.recompose(ComponentMask::ALL);
        for (a, b) in f.data().iter().zip(sum.data()) {
            prop_assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn edits_never_touch_cells_outside_the_rect(
        (f, rect) in field_strategy().prop_flat_map(|f| {
            let (w, h) = f.dims();
            (Just(f), rect_in(w, h))
        }),
        mask in mask_strategy(),
    ) {
        let out = edit_region(&f, rect, mask).unwrap();
        for y in 0..f.height() {
            for x in 0..f.width() {
                if !rect.contains(x, y) {
                    let (a, b) = (f.get(x, y), out.get(x, y));
                    prop_assert!(a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits());
                }
            }
        }
    }

    #[test]
    fn zscore_is_idempotent(f in field_strategy()) {
        if let Ok(once) = normalize_field(&f, NormMode::ZScore) {
            let twice = normalize_field(&once, NormMode::ZScore).unwrap();
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a[0] - b[0]).abs() <= 1e-9 && (a[1] - b[1]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn mse_is_symmetric_and_non_negative(seed in any::<u64>(), (w, h) in dims()) {
        let (a, b) = (random_field(w, h, seed), random_field(w, h, seed ^ 1));
        let (ab, ba) = (mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0 && cme(&a) >= 0.0 && cs(&a) >= 0.0);
    }
}
