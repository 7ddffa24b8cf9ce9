//! Closed-form incentive bounds on the leader's fee share, payoffs of the
//! two deviations they guard against, and the censorship wait.

use std::fmt::Write as _;

use num_rational::Ratio;
use thiserror::Error;

pub type Fraction = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IncentiveError {
    #[error("attacker share must lie in [0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("fee share must lie in [0, 1], got {0}")]
    ShareOutOfRange(f64),
    #[error("honest fraction must lie in (0, 1], got {0}")]
    HonestFractionOutOfRange(f64),
    #[error("block interval must be positive, got {0}")]
    InvalidInterval(f64),
}

fn check_alpha(alpha: f64) -> Result<(), IncentiveError> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(IncentiveError::AlphaOutOfRange(alpha))
    }
}

fn check_share(r: f64) -> Result<(), IncentiveError> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(IncentiveError::ShareOutOfRange(r))
    }
}

fn as_f64(x: Fraction) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

fn check_alpha_exact(alpha: Fraction) -> Result<(), IncentiveError> {
    if alpha >= Fraction::from_integer(0) && alpha < Fraction::from_integer(1) {
        Ok(())
    } else {
        Err(IncentiveError::AlphaOutOfRange(as_f64(alpha)))
    }
}

/// Lower bound on the leader's share: below it, withholding transactions
/// from the current leader and mining them oneself pays off.
pub fn r_leader_lower_exact(alpha: Fraction) -> Result<Fraction, IncentiveError> {
    check_alpha_exact(alpha)?;
    let one = Fraction::from_integer(1);
    Ok(one - (one - alpha) / (one + alpha - alpha * alpha))
}

/// Upper bound on the leader's share: above it, mining on top of one's own
/// microblocks instead of the latest one pays off.
pub fn r_leader_upper_exact(alpha: Fraction) -> Result<Fraction, IncentiveError> {
    check_alpha_exact(alpha)?;
    let one = Fraction::from_integer(1);
    Ok((one - alpha) / (Fraction::from_integer(2) - alpha))
}

/// Both inequalities are strict, so equality with a bound is infeasible.
pub fn feasible_split_exact(alpha: Fraction, r: Fraction) -> Result<bool, IncentiveError> {
    Ok(r_leader_lower_exact(alpha)? < r && r < r_leader_upper_exact(alpha)?)
}

pub fn r_leader_lower(alpha: f64) -> Result<f64, IncentiveError> {
    check_alpha(alpha)?;
    Ok(1.0 - (1.0 - alpha) / (1.0 + alpha - alpha * alpha))
}

pub fn r_leader_upper(alpha: f64) -> Result<f64, IncentiveError> {
    check_alpha(alpha)?;
    Ok((1.0 - alpha) / (2.0 - alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncentiveBounds {
    pub alpha: f64,
    pub r_lower: f64,
    pub r_upper: f64,
    /// Whether any share lies strictly between the bounds.
    pub feasible: bool,
}

pub fn bounds(alpha: f64) -> Result<IncentiveBounds, IncentiveError> {
    let r_lower = r_leader_lower(alpha)?;
    let r_upper = r_leader_upper(alpha)?;
    Ok(IncentiveBounds {
        alpha,
        r_lower,
        r_upper,
        feasible: r_lower < r_upper,
    })
}

/// Whether share `r` satisfies both bounds at attacker share `alpha`.
pub fn feasible_split(alpha: f64, r: f64) -> Result<(bool, IncentiveBounds), IncentiveError> {
    check_share(r)?;
    let b = bounds(alpha)?;
    Ok((b.r_lower < r && r < b.r_upper, b))
}

/// Expected wait for a transaction that only honest miners will include:
/// one honest block takes `1 / honest_fraction` intervals on average.
pub fn censorship_wait(
    honest_fraction: f64,
    mean_block_interval: f64,
) -> Result<f64, IncentiveError> {
    if !(honest_fraction > 0.0 && honest_fraction <= 1.0) {
        return Err(IncentiveError::HonestFractionOutOfRange(honest_fraction));
    }
    if !(mean_block_interval > 0.0) {
        return Err(IncentiveError::InvalidInterval(mean_block_interval));
    }
    Ok(mean_block_interval / honest_fraction)
}

/// Expected fee fractions of deviating versus complying.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payoff {
    pub deviate: f64,
    pub comply: f64,
}

impl Payoff {
    pub fn compliance_optimal(&self) -> bool {
        self.deviate < self.comply
    }
}

/// Withholding a transaction from the leader: the attacker gets all of it
/// if it mines the next key block, or the next-leader part if it mines the
/// one after; including it earns the leader part.
pub fn inclusion_deviation_payoff(alpha: f64, r: f64) -> Result<Payoff, IncentiveError> {
    check_alpha(alpha)?;
    check_share(r)?;
    Ok(Payoff {
        deviate: alpha + (1.0 - alpha) * alpha * (1.0 - r),
        comply: r,
    })
}

/// Mining on one's own microblock instead of the latest: keep the leader
/// part and, with probability alpha, the next-leader part as well.
pub fn extension_deviation_payoff(alpha: f64, r: f64) -> Result<Payoff, IncentiveError> {
    check_alpha(alpha)?;
    check_share(r)?;
    Ok(Payoff {
        deviate: r + alpha * (1.0 - r),
        comply: 1.0 - r,
    })
}

/// Root of `f` on `[lo, hi]` by bisection; `f(lo)` and `f(hi)` must differ
/// in sign.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    let lo_sign = flo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || hi - lo < tol {
            return Some(mid);
        }
        if fm.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Attacker share at which the feasible window closes.
pub fn window_closing_alpha() -> Option<f64> {
    bisect(
        |a| r_leader_upper(a).unwrap() - r_leader_lower(a).unwrap(),
        0.0,
        0.99,
        1e-15,
    )
}

/// Renders `x` with `digits` significant figures.
pub fn sig_figs(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// CSV table of the bounds over `alphas`, with feasibility of share `r`.
pub fn bounds_table(alphas: &[f64], r: f64) -> Result<String, IncentiveError> {
    let mut s = format!("alpha,r_lower,r_upper,feasible_at_{}\n", sig_figs(r, 2));
    for &a in alphas {
        let (ok, b) = feasible_split(a, r)?;
        let _ = writeln!(
            s,
            "{},{},{},{}",
            sig_figs(a, 4),
            sig_figs(b.r_lower, 4),
            sig_figs(b.r_upper, 4),
            ok
        );
    }
    Ok(s)
}
