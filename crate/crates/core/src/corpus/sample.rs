//! Slot-value samplers.

use rand::Rng;

use crate::entity::{EntityType, ScalarSpec, SlotValue, ValueKind};

/// Probability that a relative motor move is rendered with an attached `mm`.
pub const UNIT_SUFFIX_PROBABILITY: f64 = 0.5;

/// Draw a surface string and its parsed value for `entity`.
///
/// Scalars are drawn on the entity's step grid and rendered with as many
/// decimals as the step needs, integers without a decimal point. The value
/// is obtained by parsing the rendered digits, so surface and value agree
/// exactly.
pub fn sample_slot_value<R: Rng + ?Sized>(entity: EntityType, rng: &mut R) -> (String, SlotValue) {
    match entity.value_kind() {
        ValueKind::Words(words) => {
            let w = words[rng.gen_range(0..words.len())];
            (w.to_string(), SlotValue::Word(w.to_string()))
        }
        ValueKind::Scalar(spec) => {
            let digits = sample_digits(&spec, rng);
            let value = digits.parse().expect("rendered scalar parses");
            let attach_mm = matches!(entity, EntityType::XposRel | EntityType::YposRel)
                && rng.gen_bool(UNIT_SUFFIX_PROBABILITY);
            let surface = if attach_mm { format!("{digits}mm") } else { digits };
            (surface, SlotValue::Scalar(value))
        }
        ValueKind::Point(spec) => {
            let x = sample_digits(&spec, rng);
            let y = sample_digits(&spec, rng);
            let value = SlotValue::Point(x.parse().unwrap(), y.parse().unwrap());
            (format!("({x}, {y})"), value)
        }
    }
}

fn sample_digits<R: Rng + ?Sized>(spec: &ScalarSpec, rng: &mut R) -> String {
    format_fixed(rng.gen_range(spec.lo..=spec.hi), spec.decimals)
}

/// Render `n * 10^-decimals` with trailing fractional zeros removed.
pub fn format_fixed(n: i64, decimals: u32) -> String {
    if decimals == 0 {
        return n.to_string();
    }
    let scale = 10i64.pow(decimals);
    let sign = if n < 0 { "-" } else { "" };
    let abs = n.unsigned_abs() as i64;
    let (int, frac) = (abs / scale, abs % scale);
    if frac == 0 {
        return format!("{sign}{int}");
    }
    let frac = format!("{frac:0width$}", width = decimals as usize);
    format!("{sign}{int}.{}", frac.trim_end_matches('0'))
}
