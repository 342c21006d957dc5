//! Iterative AES-128 with per-round register visibility.
//!
//! The state is laid out column-major: byte `p` sits at row `p % 4`, column
//! `p / 4`. One snapshot is recorded per clock of an iterative core, i.e. the
//! content of the 128-bit state register after the initial key addition and
//! after each of the ten rounds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const BLOCK_LEN: usize = 16;
pub const ROUNDS: usize = 10;

#[rustfmt::skip]
const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

const INV_SBOX: [u8; 256] = {
    let mut inv = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        inv[SBOX[i] as usize] = i as u8;
        i += 1;
    }
    inv
};

const RCON: [u8; ROUNDS] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

#[inline]
pub fn sbox(b: u8) -> u8 {
    SBOX[b as usize]
}

#[inline]
pub fn inv_sbox(b: u8) -> u8 {
    INV_SBOX[b as usize]
}

/// Register position whose byte ShiftRows moves into position `p`.
#[inline]
pub const fn shift_rows_src(p: usize) -> usize {
    let (row, col) = (p % 4, p / 4);
    row + 4 * ((col + row) % 4)
}

/// Position that register byte `p` occupies after ShiftRows.
#[inline]
pub const fn shift_rows_dst(p: usize) -> usize {
    let (row, col) = (p % 4, p / 4);
    row + 4 * ((col + 4 - row) % 4)
}

/// A 16-byte AES state, column-major.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Block(pub [u8; BLOCK_LEN]);

impl Block {
    pub const ZERO: Block = Block([0; BLOCK_LEN]);

    pub fn from_hex(s: &str) -> Result<Self, Error> {
        let bytes = hex::decode(s.trim()).map_err(|e| Error::Parse(format!("block hex: {e}")))?;
        let arr: [u8; BLOCK_LEN] = bytes
            .try_into()
            .map_err(|v: Vec<u8>| Error::Parse(format!("block must be 16 bytes, got {}", v.len())))?;
        Ok(Block(arr))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn xor(&self, other: &Block) -> Block {
        let mut out = self.0;
        out.iter_mut().zip(other.0.iter()).for_each(|(a, b)| *a ^= b);
        Block(out)
    }

    pub fn as_bytes(&self) -> &[u8; BLOCK_LEN] {
        &self.0
    }
}

impl From<[u8; BLOCK_LEN]> for Block {
    fn from(b: [u8; BLOCK_LEN]) -> Self {
        Block(b)
    }
}

impl std::ops::Index<usize> for Block {
    type Output = u8;
    fn index(&self, i: usize) -> &u8 {
        &self.0[i]
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block({})", self.to_hex())
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Block {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Block {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Block::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Round keys 0 (the master key) through 10.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundKeySchedule {
    pub round_keys: [Block; ROUNDS + 1],
}

impl RoundKeySchedule {
    pub fn master(&self) -> Block {
        self.round_keys[0]
    }

    pub fn last(&self) -> Block {
        self.round_keys[ROUNDS]
    }
}

/// Register contents of an iterative core across one encryption.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundStateTrace {
    pub plaintext: Block,
    pub key: Block,
    /// `snapshots[0]` follows the initial AddRoundKey, `snapshots[i]` round `i`.
    pub snapshots: [Block; ROUNDS + 1],
    pub ciphertext: Block,
}

fn next_round_key(prev: &Block, rcon: u8) -> Block {
    let p = &prev.0;
    let mut temp = [p[13], p[14], p[15], p[12]];
    temp.iter_mut().for_each(|b| *b = sbox(*b));
    temp[0] ^= rcon;
    let mut out = [0u8; BLOCK_LEN];
    for word in 0..4 {
        for i in 0..4 {
            let v = p[4 * word + i] ^ temp[i];
            out[4 * word + i] = v;
            temp[i] = v;
        }
    }
    Block(out)
}

fn prev_round_key(next: &Block, rcon: u8) -> Block {
    let n = &next.0;
    let mut out = [0u8; BLOCK_LEN];
    // words 1..3 of the previous key are XOR differences of adjacent words
    for word in (1..4).rev() {
        for i in 0..4 {
            out[4 * word + i] = n[4 * word + i] ^ n[4 * (word - 1) + i];
        }
    }
    let w3 = [out[12], out[13], out[14], out[15]];
    let mut temp = [sbox(w3[1]), sbox(w3[2]), sbox(w3[3]), sbox(w3[0])];
    temp[0] ^= rcon;
    for i in 0..4 {
        out[i] = n[i] ^ temp[i];
    }
    Block(out)
}

pub fn expand_key(master_key: &Block) -> RoundKeySchedule {
    let mut round_keys = [*master_key; ROUNDS + 1];
    for r in 1..=ROUNDS {
        round_keys[r] = next_round_key(&round_keys[r - 1], RCON[r - 1]);
    }
    RoundKeySchedule { round_keys }
}

/// Runs the key schedule backward from the last round key to the master key.
pub fn invert_key_schedule(round10_key: &Block) -> Block {
    let mut key = *round10_key;
    for r in (0..ROUNDS).rev() {
        key = prev_round_key(&key, RCON[r]);
    }
    key
}

#[inline]
fn xtime(b: u8) -> u8 {
    (b << 1) ^ (((b >> 7) & 1) * 0x1b)
}

fn sub_bytes(s: &mut [u8; BLOCK_LEN]) {
    s.iter_mut().for_each(|b| *b = sbox(*b));
}

fn shift_rows(s: &mut [u8; BLOCK_LEN]) {
    let old = *s;
    for (p, b) in s.iter_mut().enumerate() {
        *b = old[shift_rows_src(p)];
    }
}

fn mix_columns(s: &mut [u8; BLOCK_LEN]) {
    for col in s.chunks_exact_mut(4) {
        let [a0, a1, a2, a3] = [col[0], col[1], col[2], col[3]];
        let all = a0 ^ a1 ^ a2 ^ a3;
        col[0] = a0 ^ all ^ xtime(a0 ^ a1);
        col[1] = a1 ^ all ^ xtime(a1 ^ a2);
        col[2] = a2 ^ all ^ xtime(a2 ^ a3);
        col[3] = a3 ^ all ^ xtime(a3 ^ a0);
    }
}

fn add_round_key(s: &mut [u8; BLOCK_LEN], k: &Block) {
    s.iter_mut().zip(k.0.iter()).for_each(|(a, b)| *a ^= b);
}

pub fn encrypt_with_schedule(plaintext: &Block, key: &Block, schedule: &RoundKeySchedule) -> RoundStateTrace {
    let mut state = plaintext.0;
    add_round_key(&mut state, &schedule.round_keys[0]);
    let mut snapshots = [Block::ZERO; ROUNDS + 1];
    snapshots[0] = Block(state);
    for (r, (snap, rk)) in snapshots.iter_mut().zip(&schedule.round_keys).enumerate().skip(1) {
        sub_bytes(&mut state);
        shift_rows(&mut state);
        if r != ROUNDS {
            mix_columns(&mut state);
        }
        add_round_key(&mut state, rk);
        *snap = Block(state);
    }
    RoundStateTrace {
        plaintext: *plaintext,
        key: *key,
        snapshots,
        ciphertext: Block(state),
    }
}

pub fn encrypt_with_trace(plaintext: &Block, key: &Block) -> RoundStateTrace {
    encrypt_with_schedule(plaintext, key, &expand_key(key))
}

pub fn encrypt(plaintext: &Block, key: &Block) -> Block {
    encrypt_with_trace(plaintext, key).ciphertext
}

/// Short public identifier of a key: first 8 bytes of its SHA-256, hex.
pub fn key_fingerprint(key: &Block) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(key.as_bytes())[..8])
}
