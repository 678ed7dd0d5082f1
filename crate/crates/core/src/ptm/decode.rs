//! Output tape grammar: a sign bit, a unary numerator, a `0` separator, and
//! a unary `denominator - 1`.
//!
//! `s, 1^numerator, 0, 1^(denominator-1)` decodes to the rational
//! `(-1)^s * numerator / denominator`. Sign bit 0 means non-negative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A signed rational logit value decoded from an output tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RationalLogit {
    pub negative: bool,
    pub numerator: u64,
    pub denominator: u64,
}

impl RationalLogit {
    pub fn new(negative: bool, numerator: u64, denominator: u64) -> Self {
        assert!(denominator > 0, "denominator must be positive");
        RationalLogit {
            negative,
            numerator,
            denominator,
        }
    }

    pub fn value(&self) -> f64 {
        let v = self.numerator as f64 / self.denominator as f64;
        if self.negative {
            -v
        } else {
            v
        }
    }
}

/// Tape contents that do not match the grammar.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("output tape {tape} is empty (missing sign bit)")]
    EmptyTape { tape: usize },
    #[error("output tape {tape} has invalid symbol {symbol} at position {position}")]
    BadSymbol {
        tape: usize,
        position: usize,
        symbol: u8,
    },
    #[error("output tape {tape} ended at position {position} before the separator")]
    MissingSeparator { tape: usize, position: usize },
}

fn decode_one(tape: &[u8], index: usize) -> Result<RationalLogit, DecodeError> {
    let mut pos = 0usize;
    let sign = *tape.first().ok_or(DecodeError::EmptyTape { tape: index })?;
    if sign > 1 {
        return Err(DecodeError::BadSymbol {
            tape: index,
            position: 0,
            symbol: sign,
        });
    }
    pos += 1;

    let mut numerator = 0u64;
    loop {
        match tape.get(pos) {
            Some(1) => {
                numerator += 1;
                pos += 1;
            }
            Some(0) => {
                pos += 1;
                break;
            }
            Some(sym) => {
                return Err(DecodeError::BadSymbol {
                    tape: index,
                    position: pos,
                    symbol: *sym,
                })
            }
            None => return Err(DecodeError::MissingSeparator { tape: index, position: pos }),
        }
    }

    let mut denominator = 1u64;
    while pos < tape.len() {
        match tape[pos] {
            1 => {
                denominator += 1;
                pos += 1;
            }
            sym => {
                return Err(DecodeError::BadSymbol {
                    tape: index,
                    position: pos,
                    symbol: sym,
                })
            }
        }
    }

    Ok(RationalLogit::new(sign == 1, numerator, denominator))
}

/// Decodes every output tape to a rational logit, one logit per tape.
pub fn decode_output_tapes(tapes: &[Vec<u8>]) -> Result<Vec<RationalLogit>, DecodeError> {
    tapes
        .iter()
        .enumerate()
        .map(|(i, tape)| decode_one(tape, i))
        .collect()
}

/// Encodes a rational back into the tape grammar. Inverse of decoding.
pub fn encode_rational(logit: &RationalLogit) -> Vec<u8> {
    let mut tape = Vec::with_capacity(2 + logit.numerator as usize + logit.denominator as usize);
    tape.push(if logit.negative { 1 } else { 0 });
    tape.extend(std::iter::repeat(1).take(logit.numerator as usize));
    tape.push(0);
    tape.extend(std::iter::repeat(1).take(logit.denominator as usize - 1));
    tape
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_three_halves() {
        // sign 0, three 1s, separator, one 1 -> +3/2
        let logits = decode_output_tapes(&[vec![0, 1, 1, 1, 0, 1]]).unwrap();
        assert_eq!(logits, vec![RationalLogit::new(false, 3, 2)]);
        assert_eq!(logits[0].value(), 1.5);
    }

    #[test]
    fn decodes_zero() {
        let logits = decode_output_tapes(&[vec![0, 0]]).unwrap();
        assert_eq!(logits, vec![RationalLogit::new(false, 0, 1)]);
        assert_eq!(logits[0].value(), 0.0);
    }

    #[test]
    fn decodes_minus_one() {
        let logits = decode_output_tapes(&[vec![1, 1, 0]]).unwrap();
        assert_eq!(logits, vec![RationalLogit::new(true, 1, 1)]);
        assert_eq!(logits[0].value(), -1.0);
    }

    #[test]
    fn error_identifies_tape_and_position() {
        let err = decode_output_tapes(&[vec![0, 0], vec![0, 1, 1]]).unwrap_err();
        assert_eq!(err, DecodeError::MissingSeparator { tape: 1, position: 3 });
        let err = decode_output_tapes(&[vec![2]]).unwrap_err();
        assert_eq!(
            err,
            DecodeError::BadSymbol {
                tape: 0,
                position: 0,
                symbol: 2
            }
        );
        let err = decode_output_tapes(&[vec![]]).unwrap_err();
        assert_eq!(err, DecodeError::EmptyTape { tape: 0 });
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(neg in any::<bool>(), num in 0u64..50, den in 1u64..50) {
            let q = RationalLogit::new(neg, num, den);
            let tape = encode_rational(&q);
            let back = decode_output_tapes(&[tape]).unwrap();
            prop_assert_eq!(back, vec![q]);
        }
    }
}
