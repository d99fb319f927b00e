//! Single-leaf samplers that never materialize the tree or its mutations. Only the
//! multiset of block sizes is tracked, with the position of leaf 1's block.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::genealogy::{check_inputs, choose_tail, draw_merger_size, draw_wait, growth_time};
use super::rng::{ReplicateSeed, Stream};
use crate::error::{Error, Result};
use crate::rates::RateTable;

struct SizeChain {
    sizes: Vec<u32>,
    one: usize,
}

impl SizeChain {
    fn new(n: usize) -> Self {
        Self { sizes: vec![1; n], one: 0 }
    }

    fn blocks(&self) -> usize {
        self.sizes.len()
    }

    fn one_size(&self) -> u32 {
        self.sizes[self.one]
    }

    /// Performs one `k`-merger; returns whether leaf 1's block took part.
    fn merge<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> bool {
        let b = self.sizes.len();
        let mut one = self.one;
        choose_tail(&mut self.sizes, k, rng, |i, j| {
            if one == i {
                one = j;
            } else if one == j {
                one = i;
            }
        });
        let involved = one >= b - k;
        let merged: u32 = self.sizes.drain(b - k..).sum();
        self.sizes.push(merged);
        self.one = if involved { b - k } else { one };
        involved
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::pre(format!("theta must be positive and finite, got {theta}")))
    }
}

/// Draws `O_n(1)`: an independent Exp(θ/2) clock starts at leaf 1's first merger,
/// and the result is the size of 1's block at its last merger at or before the
/// clock rings.
pub fn sample_o1(
    n: usize,
    rates: &RateTable<f64>,
    theta: f64,
    seed: impl Into<ReplicateSeed>,
    growth_rate: f64,
) -> Result<u32> {
    check_inputs(n, rates, growth_rate)?;
    check_theta(theta)?;
    if n < 2 {
        return Err(Error::pre(format!("observable clade needs n >= 2, got {n}")));
    }
    let mut rng = seed.into().rng(Stream::ObservableFast);
    let clock = Exp::new(theta / 2.0).expect("positive rate");
    let mut chain = SizeChain::new(n);
    let mut t = 0.0;
    let mut deadline = f64::INFINITY;
    while chain.blocks() > 1 {
        let b = chain.blocks();
        t += draw_wait(rates, b, &mut rng);
        let now = growth_time(t, growth_rate);
        if now > deadline {
            break;
        }
        let k = draw_merger_size(rates, b, &mut rng);
        let involved = chain.merge(k, &mut rng);
        if involved && deadline.is_infinite() {
            deadline = now + clock.sample(&mut rng);
        }
    }
    Ok(chain.one_size())
}

/// Draws `X_n`: the size of leaf 1's block when an Exp(θ/2) clock started at time
/// zero rings. `n = 1` gives 1.
pub fn sample_x(n: usize, rates: &RateTable<f64>, theta: f64, seed: impl Into<ReplicateSeed>) -> Result<u32> {
    check_theta(theta)?;
    if n == 0 {
        return Err(Error::pre("X_n needs n >= 1"));
    }
    if n == 1 {
        return Ok(1);
    }
    check_inputs(n, rates, 0.0)?;
    let mut rng = seed.into().rng(Stream::ClockFast);
    let deadline = Exp::new(theta / 2.0).expect("positive rate").sample(&mut rng);
    let mut chain = SizeChain::new(n);
    let mut t = 0.0;
    while chain.blocks() > 1 {
        let b = chain.blocks();
        t += draw_wait(rates, b, &mut rng);
        if t > deadline {
            break;
        }
        let k = draw_merger_size(rates, b, &mut rng);
        chain.merge(k, &mut rng);
    }
    Ok(chain.one_size())
}
