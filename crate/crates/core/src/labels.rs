//! Mode, basis-state and conditional-transition labels.
//!
//! Basis states are written `n_A n_B n_C`, e.g. `"101"`. A conditional
//! transition replaces the driven mode's digit with its letter: `"0B1"` is
//! mode B flipping 0 -> 1 while A = 0 and C = 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    A,
    B,
    C,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::A, Mode::B, Mode::C];

    pub fn index(self) -> usize {
        match self {
            Mode::A => 0,
            Mode::B => 1,
            Mode::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Mode> {
        Mode::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        ['A', 'B', 'C'][self.index()]
    }

    /// The two other modes, in A, B, C order.
    pub fn spectators(self) -> [Mode; 2] {
        match self {
            Mode::A => [Mode::B, Mode::C],
            Mode::B => [Mode::A, Mode::C],
            Mode::C => [Mode::A, Mode::B],
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Mode::A),
            "B" | "b" => Ok(Mode::B),
            "C" | "c" => Ok(Mode::C),
            other => Err(Error::InvalidLabel(other.to_string())),
        }
    }
}

/// Occupation numbers `(n_A, n_B, n_C)` of a Fock basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BasisLabel(pub [u8; 3]);

impl BasisLabel {
    pub fn new(a: u8, b: u8, c: u8) -> Self {
        BasisLabel([a, b, c])
    }

    pub fn get(self, mode: Mode) -> u8 {
        self.0[mode.index()]
    }

    pub fn with(mut self, mode: Mode, n: u8) -> Self {
        self.0[mode.index()] = n;
        self
    }

    pub fn excitations(self) -> u32 {
        self.0.iter().map(|&n| n as u32).sum()
    }

    /// The eight states with every mode in {0, 1}, in basis order.
    pub fn computational() -> impl Iterator<Item = BasisLabel> {
        (0..8u8).map(|i| BasisLabel([(i >> 2) & 1, (i >> 1) & 1, i & 1]))
    }

    /// Index within the 8-state computational manifold (A slowest).
    pub fn computational_index(self) -> Option<usize> {
        if self.0.iter().all(|&n| n <= 1) {
            Some(4 * self.0[0] as usize + 2 * self.0[1] as usize + self.0[2] as usize)
        } else {
            None
        }
    }

    pub fn is_computational(self) -> bool {
        self.computational_index().is_some()
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for BasisLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits: Vec<u8> = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '|' && *c != '>' && *c != '_')
            .map(|c| c.to_digit(10).map(|d| d as u8))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidLabel(s.to_string()))?;
        if digits.len() != 3 || digits.iter().any(|&d| d > 3) {
            return Err(Error::InvalidLabel(s.to_string()));
        }
        Ok(BasisLabel([digits[0], digits[1], digits[2]]))
    }
}

impl Serialize for BasisLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BasisLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A 0 -> 1 transition of one mode with both spectators fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transition {
    pub mode: Mode,
    /// Spectator occupations in A, B, C order with the driven mode removed.
    pub spectators: [u8; 2],
}

impl Transition {
    pub fn new(mode: Mode, spectators: [u8; 2]) -> Self {
        Transition { mode, spectators }
    }

    /// All twelve conditional transitions of the computational manifold,
    /// grouped by mode.
    pub fn all() -> Vec<Transition> {
        let mut out = Vec::with_capacity(12);
        for mode in Mode::ALL {
            for s0 in 0..2 {
                for s1 in 0..2 {
                    out.push(Transition::new(mode, [s0, s1]));
                }
            }
        }
        out
    }

    pub fn lower(self) -> BasisLabel {
        let [m0, m1] = self.mode.spectators();
        BasisLabel::default()
            .with(m0, self.spectators[0])
            .with(m1, self.spectators[1])
            .with(self.mode, 0)
    }

    pub fn upper(self) -> BasisLabel {
        self.lower().with(self.mode, 1)
    }

    /// The transition connecting two computational states that differ in a
    /// single mode, if any.
    pub fn between(a: BasisLabel, b: BasisLabel) -> Option<Transition> {
        if !a.is_computational() || !b.is_computational() {
            return None;
        }
        let diff: Vec<Mode> = Mode::ALL.into_iter().filter(|m| a.get(*m) != b.get(*m)).collect();
        if diff.len() != 1 {
            return None;
        }
        let mode = diff[0];
        let [m0, m1] = mode.spectators();
        Some(Transition::new(mode, [a.get(m0), a.get(m1)]))
    }

    /// Position in [`Transition::all`].
    pub fn index(self) -> usize {
        4 * self.mode.index() + 2 * self.spectators[0] as usize + self.spectators[1] as usize
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut chars = ['0'; 3];
        let [m0, m1] = self.mode.spectators();
        chars[m0.index()] = char::from(b'0' + self.spectators[0]);
        chars[m1.index()] = char::from(b'0' + self.spectators[1]);
        chars[self.mode.index()] = self.mode.letter();
        write!(f, "{}{}{}", chars[0], chars[1], chars[2])
    }
}

impl FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.len() != 3 {
            return Err(Error::UnknownTransition(s.to_string()));
        }
        let mut mode = None;
        let mut occ = [0u8; 3];
        for (i, c) in chars.iter().enumerate() {
            match c {
                '0' | '1' => occ[i] = *c as u8 - b'0',
                'A' | 'B' | 'C' if Mode::from_index(i).map(|m| m.letter()) == Some(*c) => {
                    if mode.is_some() {
                        return Err(Error::UnknownTransition(s.to_string()));
                    }
                    mode = Mode::from_index(i);
                }
                _ => return Err(Error::UnknownTransition(s.to_string())),
            }
        }
        let mode = mode.ok_or_else(|| Error::UnknownTransition(s.to_string()))?;
        let [m0, m1] = mode.spectators();
        Ok(Transition::new(mode, [occ[m0.index()], occ[m1.index()]]))
    }
}

impl Serialize for Transition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Transition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
