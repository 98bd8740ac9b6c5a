//! Default names for part labels in the 40-part convention.
//!
//! The numbering comes from the body-part labels observed on a pretrained
//! skinning predictor's human template. It is a reading aid for the editor,
//! nothing in the pipeline depends on it. Labels without an entry are
//! unnamed.

use crate::skinning::PartLabel;

pub const DEFAULT_PART_NAMES: &[(usize, &str)] = &[
    (0, "left forearm"),
    (2, "left leg (lower)"),
    (3, "left leg (upper)"),
    (9, "right palm"),
    (16, "left sole"),
    (21, "chest"),
    (25, "left palm"),
    (31, "right upper arm"),
    (32, "right forearm"),
    (33, "lower abdomen"),
    (35, "head"),
    (36, "left leg (knee)"),
];

pub fn part_name(label: PartLabel) -> Option<&'static str> {
    DEFAULT_PART_NAMES
        .iter()
        .find(|(k, _)| *k == label.0)
        .map(|(_, name)| *name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup() {
        assert_eq!(part_name(PartLabel(35)), Some("head"));
        assert_eq!(part_name(PartLabel(23)), None);
        assert!(DEFAULT_PART_NAMES.windows(2).all(|w| w[0].0 < w[1].0));
    }
}
