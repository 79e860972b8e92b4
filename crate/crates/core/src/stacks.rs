//! Per-site instruction stacks.
//!
//! Each site of ℤ carries an infinite stack of `Left`/`Right`/`Sleep`
//! instructions. Random stacks are generated counter-style: the instruction
//! at `(site, index)` is a pure function of the master seed and the sleep
//! rate, so any toppling order reads the same stacks and any index can be
//! reached without replaying the ones before it.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{hash3, zigzag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instruction {
    Left,
    Right,
    Sleep,
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Instruction::Left => "L",
            Instruction::Right => "R",
            Instruction::Sleep => "S",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StackError {
    #[error("sleep rate must be a finite non-negative number, got {0}")]
    InvalidLambda(f64),
}

/// Sleep rate λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    lambda: f64,
}

impl Params {
    pub fn new(lambda: f64) -> Result<Self, StackError> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(StackError::InvalidLambda(lambda));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Probability that a stack entry is a sleep instruction: λ/(1+λ).
///
/// Left and right jumps share the remainder equally, 1/(2(1+λ)) each.
pub fn sleep_probability(params: Params) -> f64 {
    params.lambda / (1.0 + params.lambda)
}

const STACK_STREAM: u64 = 0x57AC_4B17;
const TWO_POW_53: f64 = (1u64 << 53) as f64;

/// i.i.d. stacks keyed by a master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomStacks {
    master_seed: u64,
    params: Params,
    // Draws use the top 53 bits `m` of the hash; `m < sleep_below` is Sleep,
    // `m < left_below` is Left, anything else Right.
    sleep_below: u64,
    left_below: u64,
}

impl RandomStacks {
    pub fn new(master_seed: u64, params: Params) -> Self {
        let p = sleep_probability(params);
        let sleep_below = (p * TWO_POW_53).ceil() as u64;
        let left_below = ((p + (1.0 - p) / 2.0) * TWO_POW_53).ceil() as u64;
        Self {
            master_seed,
            params,
            sleep_below,
            left_below,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn params(&self) -> Params {
        self.params
    }

    #[inline(always)]
    pub fn instruction_at(&self, site: i64, index: u64) -> Instruction {
        let m = hash3(self.master_seed ^ STACK_STREAM, zigzag(site), index) >> 11;
        if m < self.sleep_below {
            Instruction::Sleep
        } else if m < self.left_below {
            Instruction::Left
        } else {
            Instruction::Right
        }
    }
}

/// Hand-written stacks; everything not in the table reads as `default`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedStacks {
    table: HashMap<(i64, u64), Instruction>,
    default: Instruction,
}

impl ScriptedStacks {
    pub fn new(default: Instruction) -> Self {
        Self {
            table: HashMap::new(),
            default,
        }
    }

    /// Sets the first `instructions.len()` entries of the stack at `site`.
    pub fn with_stack(mut self, site: i64, instructions: &[Instruction]) -> Self {
        for (i, &ins) in instructions.iter().enumerate() {
            self.table.insert((site, i as u64), ins);
        }
        self
    }

    pub fn with_entry(mut self, site: i64, index: u64, instruction: Instruction) -> Self {
        self.table.insert((site, index), instruction);
        self
    }

    pub fn instruction_at(&self, site: i64, index: u64) -> Instruction {
        self.table
            .get(&(site, index))
            .copied()
            .unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstructionSource {
    Random(RandomStacks),
    Scripted(ScriptedStacks),
}

impl InstructionSource {
    pub fn random(master_seed: u64, params: Params) -> Self {
        InstructionSource::Random(RandomStacks::new(master_seed, params))
    }

    pub fn scripted(stacks: ScriptedStacks) -> Self {
        InstructionSource::Scripted(stacks)
    }

    #[inline]
    pub fn instruction_at(&self, site: i64, index: u64) -> Instruction {
        match self {
            InstructionSource::Random(r) => r.instruction_at(site, index),
            InstructionSource::Scripted(s) => s.instruction_at(site, index),
        }
    }

    /// The first `len` instructions of the stack at `site`.
    pub fn stack_prefix(&self, site: i64, len: usize) -> Vec<Instruction> {
        (0..len as u64)
            .map(|i| self.instruction_at(site, i))
            .collect()
    }
}
