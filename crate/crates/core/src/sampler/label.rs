use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neighbor offsets `(drow, dcol)` in label order.
pub const OFFSETS: [(i32, i32); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

pub const NUM_CLASSES: usize = 8;

/// Which of the eight neighboring grid cells the second patch occupies
/// relative to the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RelativeLabel(u8);

impl RelativeLabel {
    pub fn new(index: usize) -> Result<Self> {
        if index < NUM_CLASSES {
            Ok(Self(index as u8))
        } else {
            Err(Error::InvalidArgument(format!("label {index} not in 0..8")))
        }
    }

    pub fn from_offset(drow: i32, dcol: i32) -> Result<Self> {
        OFFSETS
            .iter()
            .position(|&o| o == (drow, dcol))
            .map(|i| Self(i as u8))
            .ok_or_else(|| Error::InvalidArgument(format!("offset ({drow},{dcol}) is not a neighbor")))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn offset(self) -> (i32, i32) {
        OFFSETS[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = RelativeLabel> {
        (0..NUM_CLASSES as u8).map(RelativeLabel)
    }
}

impl TryFrom<u8> for RelativeLabel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Self::new(v as usize)
    }
}

impl From<RelativeLabel> for u8 {
    fn from(l: RelativeLabel) -> u8 {
        l.0
    }
}

pub fn offset_to_label(drow: i32, dcol: i32) -> Result<RelativeLabel> {
    RelativeLabel::from_offset(drow, dcol)
}

pub fn label_to_offset(index: usize) -> Result<(i32, i32)> {
    RelativeLabel::new(index).map(RelativeLabel::offset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_enumeration() {
        assert_eq!(offset_to_label(-1, 0).unwrap().index(), 1);
        assert_eq!(offset_to_label(1, 1).unwrap().index(), 7);
        assert_eq!(offset_to_label(-1, -1).unwrap().index(), 0);
        assert_eq!(label_to_offset(3).unwrap(), (0, -1));
    }

    #[test]
    fn round_trip_exhaustive() {
        for dr in -1..=1 {
            for dc in -1..=1 {
                if (dr, dc) == (0, 0) {
                    assert!(offset_to_label(0, 0).is_err());
                    continue;
                }
                let l = offset_to_label(dr, dc).unwrap();
                assert_eq!(label_to_offset(l.index()).unwrap(), (dr, dc));
            }
        }
        for i in 0..8 {
            let (dr, dc) = label_to_offset(i).unwrap();
            assert_eq!(offset_to_label(dr, dc).unwrap().index(), i);
        }
    }

    #[test]
    fn out_of_range() {
        assert!(label_to_offset(8).is_err());
        assert!(offset_to_label(2, 0).is_err());
        assert!(offset_to_label(0, -2).is_err());
    }
}
