//! Deterministic instruction grammar.
//!
//! Recognised forms (case-insensitive, articles stripped from objects):
//!
//! | form | result |
//! |------|--------|
//! | `avoid X`, `do not enter X`, `do not go near X`, `stay out of X`, `stay away from X` | exclusion |
//! | `don't go under X`, `do not go beneath X` | exclusion |
//! | `keep D m away from X`, `stay D m from X` | exclusion with buffer `D` |
//! | `slow down / reduce speed / move slowly near X [below V m/s]` | hybrid, speed limit |
//! | `be quiet / be careful / be extra careful near X [below V m/s]` | hybrid, speed and turn-rate limit |
//! | `max speed V`, `never exceed V`, `speed limit V` | global speed limit |
//! | `max turn rate W` | global turn-rate limit |
//!
//! Anything else asks for clarification.

use std::sync::LazyLock;

use regex::Regex;

use super::config::{LimitDefaults, ParseOutcome, RobotCapabilities, SafetyConfig};

const NUM: &str = r"(\d+(?:\.\d+)?|\.\d+)";

static BUFFER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^(?:keep|stay|remain)(?: at least)? {NUM} ?(?:m|meters?|metres?)(?: away)? (?:from|of) (.+)$"
    ))
    .unwrap()
});

static BENEATH: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:do not|don't|dont|never) (?:go|drive|pass|move|travel) (?:under|beneath|underneath|below) (.+)$")
        .unwrap()
});

static EXCLUDE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?:avoid|(?:do not|don't|dont|never) (?:enter|go into|drive into|go in|go near|come near|touch)|stay out of|keep out of|stay away from|keep away from) (.+)$",
    )
    .unwrap()
});

static PACE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^(slow down|reduce (?:your )?speed|move slowly|go slowly|drive slowly|be quiet|be (?:extra |very )?careful) (?:near|around|on|by|close to|next to|in|at) (.+?)(?: (?:below|under|at most|to|at) {NUM} ?(?:m/s|mps|meters per second)?)?$"
    ))
    .unwrap()
});

static SPEED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^(?:max(?:imum)? speed(?: is| of)?|never exceed|do not exceed|don't exceed|speed limit(?: is| of)?|limit (?:your )?speed to) {NUM} ?(?:m/s|mps|meters per second)?$"
    ))
    .unwrap()
});

static TURN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^max(?:imum)? (?:turn(?:ing)? rate|angular (?:speed|velocity))(?: is| of)? {NUM} ?(?:rad/s)?$"
    ))
    .unwrap()
});

/// Rule-based stand-in for the language model.
#[derive(Debug, Clone, Default)]
pub struct RuleParser {
    pub caps: RobotCapabilities,
    pub defaults: LimitDefaults,
}

fn normalize_sentence(s: &str) -> String {
    let s = s.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase();
    let s = s.trim().trim_end_matches(['.', '!', ';', ',']).trim();
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    s.strip_prefix("please ").map(str::to_string).unwrap_or(s)
}

fn clean_object(raw: &str) -> String {
    let mut s = raw.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_string();
    loop {
        let before = s.len();
        for art in ["the ", "a ", "an ", "any ", "all ", "your ", "my "] {
            if let Some(rest) = s.strip_prefix(art) {
                s = rest.trim_start().to_string();
            }
        }
        if s.len() == before {
            break;
        }
    }
    if ["the", "a", "an", "any", "all", "your", "my"].contains(&s.as_str()) {
        s.clear();
    }
    s
}

impl RuleParser {
    pub fn new(caps: RobotCapabilities, defaults: LimitDefaults) -> Self {
        Self { caps, defaults }
    }

    pub fn parse(&self, instruction: &str) -> ParseOutcome {
        let text = normalize_sentence(instruction);
        if text.is_empty() {
            return ParseOutcome::Rejected { reason: "empty instruction".into() };
        }
        let cfg = match self.match_grammar(&text, instruction) {
            Some(Ok(cfg)) => cfg,
            Some(Err(question)) => return ParseOutcome::Clarify { question },
            None => {
                return ParseOutcome::Clarify {
                    question: format!(
                        "I could not turn \"{}\" into a constraint. Which object should I avoid or slow down near, or what speed limit applies?",
                        instruction.trim()
                    ),
                }
            }
        };
        match cfg.validate(&self.caps) {
            Ok(()) => ParseOutcome::Parsed { config: cfg },
            Err(e) => ParseOutcome::Clarify {
                question: format!("That constraint is not something I can follow ({e}). Could you restate it?"),
            },
        }
    }

    fn match_grammar(&self, text: &str, source: &str) -> Option<Result<SafetyConfig, String>> {
        let num = |s: &str| s.parse::<f64>().ok();
        let obj_or_ask = |raw: &str| {
            let obj = clean_object(raw);
            if obj.is_empty() {
                Err("Which object do you mean?".to_string())
            } else {
                Ok(obj)
            }
        };

        if let Some(c) = BUFFER.captures(text) {
            let d = num(&c[1])?;
            return Some(obj_or_ask(&c[2]).map(|o| SafetyConfig::exclusion(&o, d, source)));
        }
        if let Some(c) = BENEATH.captures(text) {
            return Some(obj_or_ask(&c[1]).map(|o| SafetyConfig::exclusion(&o, 0.0, source)));
        }
        if let Some(c) = EXCLUDE.captures(text) {
            return Some(obj_or_ask(&c[1]).map(|o| SafetyConfig::exclusion(&o, 0.0, source)));
        }
        if let Some(c) = PACE.captures(text) {
            let intent = c[1].starts_with("be ");
            let explicit = c.get(3).and_then(|m| num(m.as_str()));
            let vel = explicit.unwrap_or(self.defaults.vel_fraction * self.caps.v_max);
            let omega = intent.then(|| self.defaults.omega_fraction * self.caps.omega_max);
            return Some(
                obj_or_ask(&c[2])
                    .map(|o| SafetyConfig::hybrid(&o, self.defaults.near_buffer, Some(vel), omega, source)),
            );
        }
        if let Some(c) = SPEED.captures(text) {
            return Some(Ok(SafetyConfig::modulation(Some(num(&c[1])?), None, source)));
        }
        if let Some(c) = TURN.captures(text) {
            return Some(Ok(SafetyConfig::modulation(None, Some(num(&c[1])?), source)));
        }
        None
    }
}

pub fn parse_rule_based(instruction: &str) -> ParseOutcome {
    RuleParser::default().parse(instruction)
}
