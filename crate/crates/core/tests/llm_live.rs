//! Exercises a real chat endpoint. Run with
//! `SEMSAFE_LLM_URL=... cargo test --test llm_live -- --ignored`.

mod common;

use common::{matches_loose, CANONICAL};
use semsafe_core::language::{EndpointConfig, HttpChat, LlmParser, ParseOutcome};

#[test]
#[ignore = "needs SEMSAFE_LLM_URL"]
fn canonical_instructions_against_endpoint() {
    let Some(cfg) = EndpointConfig::from_env() else {
        eprintln!("SEMSAFE_LLM_URL not set; nothing to do");
        return;
    };
    let parser = LlmParser::new(HttpChat::new(cfg).unwrap(), Default::default(), Default::default());
    let mut right = 0;
    for g in &CANONICAL {
        match parser.parse(g.text) {
            ParseOutcome::Parsed { config } => {
                assert!(matches_loose(&config, g), "{}: {config:?}", g.text);
                right += 1;
            }
            ParseOutcome::Clarify { question } => eprintln!("{}: asked {question:?}", g.text),
            other => panic!("{}: {other:?}", g.text),
        }
    }
    assert!(right >= 10, "{right} of 12");
}

#[test]
#[ignore = "needs SEMSAFE_LLM_URL"]
fn ambiguous_text_asks_back() {
    let Some(cfg) = EndpointConfig::from_env() else { return };
    let parser = LlmParser::new(HttpChat::new(cfg).unwrap(), Default::default(), Default::default());
    assert!(matches!(parser.parse("be careful"), ParseOutcome::Clarify { .. }));
}
