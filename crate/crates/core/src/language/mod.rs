//! Instruction parsing into structured safety configurations.

mod config;
pub mod llm;
mod rules;

pub use config::{
    add_config, remove_config, ConfigId, ConfigSet, ConstraintKind, LimitDefaults, ParseOutcome, RobotCapabilities,
    SafetyConfig, TemplateConfig,
};
pub use llm::{parse_llm, ChatTransport, EndpointConfig, HttpChat, LlmParser};
pub use rules::{parse_rule_based, RuleParser};

/// Published JSON schema of the five-field template.
pub const SAFETY_CONFIG_SCHEMA: &str = include_str!("../../../../schema/safety_config.schema.json");

/// Any parser the episode loop or the service can route instructions to.
pub trait InstructionParser: Send + Sync {
    fn parse(&self, instruction: &str) -> ParseOutcome;

    /// Follow-up after a `Clarify` outcome.
    fn clarify(&self, instruction: &str, question: &str, answer: &str) -> ParseOutcome;
}

impl InstructionParser for RuleParser {
    fn parse(&self, instruction: &str) -> ParseOutcome {
        RuleParser::parse(self, instruction)
    }

    fn clarify(&self, instruction: &str, _question: &str, answer: &str) -> ParseOutcome {
        match RuleParser::parse(self, answer) {
            ParseOutcome::Clarify { .. } => {
                RuleParser::parse(self, &format!("{} {}", instruction.trim(), answer.trim()))
            }
            other => other,
        }
    }
}

impl<T: ChatTransport> InstructionParser for LlmParser<T> {
    fn parse(&self, instruction: &str) -> ParseOutcome {
        LlmParser::parse(self, instruction)
    }

    fn clarify(&self, instruction: &str, question: &str, answer: &str) -> ParseOutcome {
        LlmParser::clarify(self, instruction, question, answer)
    }
}
