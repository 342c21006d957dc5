//! Hamming-distance leakage: attack-side hypotheses and simulation-side truth.

use crate::aes::{inv_sbox, shift_rows_dst, Block, RoundStateTrace, BLOCK_LEN, ROUNDS};
use crate::error::{Error, Result};

pub const GUESSES: usize = 256;
pub const REGISTER_BITS: usize = 8 * BLOCK_LEN;

#[inline]
pub fn hamming_distance(a: u8, b: u8) -> u32 {
    (a ^ b).count_ones()
}

/// Predicted bit flips of register byte `p` in the last round for a guess
/// of the round-10 key byte at the ShiftRows destination of `p`.
#[inline]
pub fn last_round_hypothesis(ciphertext: &Block, p: usize, guess: u8) -> u32 {
    let before = inv_sbox(ciphertext[shift_rows_dst(p)] ^ guess);
    hamming_distance(ciphertext[p], before)
}

/// N x 256 matrix of last-round Hamming distances for one register byte.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypothesisMatrix {
    byte_index: usize,
    rows: usize,
    values: Vec<u8>,
}

impl HypothesisMatrix {
    pub fn byte_index(&self) -> usize {
        self.byte_index
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn get(&self, row: usize, guess: u8) -> u8 {
        self.values[row * GUESSES + guess as usize]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.values[row * GUESSES..(row + 1) * GUESSES]
    }

    pub fn column(&self, guess: u8) -> Vec<u8> {
        (0..self.rows).map(|r| self.get(r, guess)).collect()
    }
}

/// Fills `out` with the 256 hypotheses for one ciphertext.
#[inline]
pub fn hypothesis_row(ciphertext: &Block, p: usize, out: &mut [u8; GUESSES]) {
    let observed = ciphertext[p];
    let src = ciphertext[shift_rows_dst(p)];
    for (g, slot) in out.iter_mut().enumerate() {
        *slot = (observed ^ inv_sbox(src ^ g as u8)).count_ones() as u8;
    }
}

pub fn build_hypothesis_matrix(ciphertexts: &[Block], p: usize) -> Result<HypothesisMatrix> {
    if ciphertexts.is_empty() {
        return Err(Error::InvalidArgument("hypothesis matrix needs at least one ciphertext".into()));
    }
    if p >= BLOCK_LEN {
        return Err(Error::InvalidArgument(format!("byte index {p} out of range")));
    }
    let mut values = vec![0u8; ciphertexts.len() * GUESSES];
    let mut row = [0u8; GUESSES];
    for (ct, chunk) in ciphertexts.iter().zip(values.chunks_exact_mut(GUESSES)) {
        hypothesis_row(ct, p, &mut row);
        chunk.copy_from_slice(&row);
    }
    Ok(HypothesisMatrix {
        byte_index: p,
        rows: ciphertexts.len(),
        values,
    })
}

/// Bit flips of the state register for each of the ten round transitions.
///
/// Bit `j` is bit `j % 8` (LSB first) of register byte `j / 8`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwitchingProfile {
    toggles: [Block; ROUNDS],
}

impl SwitchingProfile {
    /// XOR mask of cycle `cycle` (snapshot `cycle` -> `cycle + 1`).
    pub fn mask(&self, cycle: usize) -> &Block {
        &self.toggles[cycle]
    }

    pub fn bit(&self, cycle: usize, j: usize) -> u8 {
        (self.toggles[cycle][j / 8] >> (j % 8)) & 1
    }

    pub fn cycle_bits(&self, cycle: usize) -> [u8; REGISTER_BITS] {
        let mut out = [0u8; REGISTER_BITS];
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.bit(cycle, j);
        }
        out
    }

    pub fn cycle_total(&self, cycle: usize) -> u32 {
        self.toggles[cycle].0.iter().map(|b| b.count_ones()).sum()
    }

    pub fn byte_flips(&self, cycle: usize, p: usize) -> u32 {
        self.toggles[cycle][p].count_ones()
    }
}

pub fn true_switching(trace: &RoundStateTrace) -> SwitchingProfile {
    let mut toggles = [Block::ZERO; ROUNDS];
    for (i, t) in toggles.iter_mut().enumerate() {
        *t = trace.snapshots[i].xor(&trace.snapshots[i + 1]);
    }
    SwitchingProfile { toggles }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::{encrypt_with_trace, expand_key, shift_rows_dst};

    #[test]
    fn hd_basics() {
        assert_eq!(hamming_distance(0x00, 0x00), 0);
        assert_eq!(hamming_distance(0xff, 0x00), 8);
        assert_eq!(hamming_distance(0xa5, 0x5a), 8);
    }

    #[test]
    fn zero_ciphertext_hypothesis() {
        // inv_sbox(0x00) = 0x52, popcount 3
        assert_eq!(inv_sbox(0x00), 0x52);
        assert_eq!(last_round_hypothesis(&Block::ZERO, 0, 0), 3);
    }

    #[test]
    fn correct_guess_matches_true_flips() {
        let key = Block::from_hex("2b7e151628aed2a6abf7158809cf4f3c").unwrap();
        let k10 = expand_key(&key).last();
        let t = encrypt_with_trace(&Block::from_hex("3243f6a8885a308d313198a2e0370734").unwrap(), &key);
        let sw = true_switching(&t);
        for p in 0..16 {
            let h = last_round_hypothesis(&t.ciphertext, p, k10[shift_rows_dst(p)]);
            assert_eq!(h, sw.byte_flips(9, p));
        }
    }

    #[test]
    fn fips_cycle9_flip_count() {
        let key = Block::from_hex("2b7e151628aed2a6abf7158809cf4f3c").unwrap();
        let t = encrypt_with_trace(&Block::from_hex("3243f6a8885a308d313198a2e0370734").unwrap(), &key);
        let sw = true_switching(&t);
        // popcount(eb40f21e592e38848ba113e71bc342d2 ^ 3925841d02dc09fbdc118597196a0b32)
        assert_eq!(sw.cycle_total(9), 61);
        let direct: u32 = (0..16)
            .map(|p| hamming_distance(t.snapshots[9][p], t.ciphertext[p]))
            .sum();
        assert_eq!(sw.cycle_total(9), direct);
    }

    #[test]
    fn identical_snapshots_no_flips() {
        let mut t = encrypt_with_trace(&Block::ZERO, &Block::ZERO);
        t.snapshots[4] = t.snapshots[3];
        let sw = true_switching(&t);
        assert_eq!(sw.cycle_total(3), 0);
        assert!(sw.cycle_bits(3).iter().all(|&b| b == 0));
    }

    #[test]
    fn matrix_composition() {
        assert!(build_hypothesis_matrix(&[], 0).is_err());
        let ct = Block::from_hex("3925841d02dc09fbdc118597196a0b32").unwrap();
        let m = build_hypothesis_matrix(&[ct, ct], 5).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.row(0), m.row(1));
        for g in 0..=255u8 {
            assert_eq!(m.get(0, g) as u32, last_round_hypothesis(&ct, 5, g));
        }
    }
}
