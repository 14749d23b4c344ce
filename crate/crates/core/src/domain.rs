//! Small shared vocabulary types.

use std::fmt;
use std::str::FromStr;

/// Ground truth or a predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Target,
    NonTarget,
}

impl Label {
    /// `+1` for Target, `-1` for NonTarget.
    pub fn sign(self) -> f64 {
        match self {
            Label::Target => 1.0,
            Label::NonTarget => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Target => Label::NonTarget,
            Label::NonTarget => Label::Target,
        }
    }

    /// Target on ties, matching the global tie rule.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Target
        } else {
            Label::NonTarget
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Label::Target => "T",
            Label::NonTarget => "NT",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "T" => Ok(Label::Target),
            "NT" => Ok(Label::NonTarget),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// AI-assistance regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    /// Fast / less accurate assistant: instant advice, 78% reliable.
    Fla,
    /// Slow / accurate assistant: delayed advice, 90% reliable.
    Sa,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::Fla, Condition::Sa];

    pub fn code(self) -> &'static str {
        match self {
            Condition::Fla => "FLA",
            Condition::Sa => "SA",
        }
    }

    pub fn index(self) -> u64 {
        match self {
            Condition::Fla => 0,
            Condition::Sa => 1,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "FLA" => Ok(Condition::Fla),
            "SA" => Ok(Condition::Sa),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

/// A human button press, or no press inside the response window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Response {
    Press(Label),
    Miss,
}

impl Response {
    pub fn label(self) -> Option<Label> {
        match self {
            Response::Press(l) => Some(l),
            Response::Miss => None,
        }
    }

    pub fn is_correct(self, truth: Label) -> bool {
        self == Response::Press(truth)
    }

    pub fn code(self) -> &'static str {
        match self {
            Response::Press(l) => l.code(),
            Response::Miss => "MISS",
        }
    }
}

impl FromStr for Response {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MISS" => Ok(Response::Miss),
            other => other.parse().map(Response::Press),
        }
    }
}

/// Chronological third of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Early,
    Mid,
    Late,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Early, Phase::Mid, Phase::Late];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Early => "Early",
            Phase::Mid => "Mid",
            Phase::Late => "Late",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Early" => Ok(Phase::Early),
            "Mid" => Ok(Phase::Mid),
            "Late" => Ok(Phase::Late),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

/// Reaction-time upper bound of an oracle cell. The bound is closed (`rt ≤ b`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RtBound {
    Seconds(f64),
    Unlimited,
}

impl RtBound {
    pub const GRID: [RtBound; 5] = [
        RtBound::Seconds(0.8),
        RtBound::Seconds(1.0),
        RtBound::Seconds(1.2),
        RtBound::Seconds(1.5),
        RtBound::Unlimited,
    ];

    pub fn admits(self, rt_s: f64) -> bool {
        match self {
            RtBound::Seconds(b) => rt_s <= b,
            RtBound::Unlimited => true,
        }
    }

    /// Orders bounds by width; Unlimited is widest.
    pub fn width(self) -> f64 {
        match self {
            RtBound::Seconds(b) => b,
            RtBound::Unlimited => f64::INFINITY,
        }
    }
}

impl fmt::Display for RtBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RtBound::Seconds(b) => write!(f, "{b}"),
            RtBound::Unlimited => f.write_str("Unlimited"),
        }
    }
}

impl FromStr for RtBound {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "Unlimited" {
            return Ok(RtBound::Unlimited);
        }
        s.parse::<f64>()
            .map(RtBound::Seconds)
            .map_err(|e| format!("bad rt bound {s:?}: {e}"))
    }
}

/// Identifies one (phase × RT bound) cell of the oracle grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub phase: Phase,
    pub bound: RtBound,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for l in [Label::Target, Label::NonTarget] {
            assert_eq!(l.code().parse::<Label>().unwrap(), l);
        }
        for r in [Response::Press(Label::Target), Response::Press(Label::NonTarget), Response::Miss] {
            assert_eq!(r.code().parse::<Response>().unwrap(), r);
        }
        for b in RtBound::GRID {
            assert_eq!(b.to_string().parse::<RtBound>().unwrap(), b);
        }
        assert_eq!(RtBound::Seconds(0.8).to_string(), "0.8");
    }

    #[test]
    fn tie_goes_to_target() {
        assert_eq!(Label::from_score(0.0), Label::Target);
        assert_eq!(Label::from_score(-1e-300), Label::NonTarget);
    }

    #[test]
    fn closed_bound() {
        assert!(RtBound::Seconds(0.8).admits(0.8));
        assert!(!RtBound::Seconds(0.8).admits(0.8000001));
        assert!(RtBound::Unlimited.admits(99.0));
    }
}
