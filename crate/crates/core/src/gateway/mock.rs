//! Scripted offline backends. A scenario maps prompt predicates to canned
//! replies (or injected faults) so every pipeline stage can run without a
//! network.

/// A canned completion. Token counts are optional; when absent the gateway
/// falls back to its character-count estimate and marks the ledger entry
/// approximate.
#[derive(Debug, Clone)]
pub struct MockReply {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

impl MockReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            prompt_tokens: None,
            completion_tokens: None,
        }
    }

    pub fn with_usage(text: impl Into<String>, prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            text: text.into(),
            prompt_tokens: Some(prompt_tokens),
            completion_tokens: Some(completion_tokens),
        }
    }
}

/// What a script rule produces for a matched prompt.
pub enum ScriptOutcome {
    Reply(MockReply),
    /// A scripted failure; `transient` failures go through the retry loop.
    Fail { message: String, transient: bool },
}

impl From<MockReply> for ScriptOutcome {
    fn from(reply: MockReply) -> Self {
        ScriptOutcome::Reply(reply)
    }
}

type Predicate = Box<dyn Fn(&str) -> bool + Send + Sync>;
type Responder = Box<dyn Fn(&str) -> ScriptOutcome + Send + Sync>;

/// An ordered list of (predicate, responder) rules plus an optional default.
/// Rules are tried in registration order; unmatched prompts without a
/// default surface as an unscripted-prompt error.
#[derive(Default)]
pub struct MockScript {
    rules: Vec<(Predicate, Responder)>,
    fallback: Option<Responder>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule<P, R>(mut self, predicate: P, respond: R) -> Self
    where
        P: Fn(&str) -> bool + Send + Sync + 'static,
        R: Fn(&str) -> ScriptOutcome + Send + Sync + 'static,
    {
        self.rules.push((Box::new(predicate), Box::new(respond)));
        self
    }

    /// Convenience: fixed reply text for prompts containing `needle`.
    pub fn reply_when_contains(self, needle: &str, text: &str) -> Self {
        let needle = needle.to_string();
        let text = text.to_string();
        self.rule(move |p| p.contains(&needle), move |_| MockReply::text(text.clone()).into())
    }

    pub fn fail_when<P>(mut self, predicate: P, message: &str, transient: bool) -> Self
    where
        P: Fn(&str) -> bool + Send + Sync + 'static,
    {
        let message = message.to_string();
        self.rules.push((
            Box::new(predicate),
            Box::new(move |_| ScriptOutcome::Fail {
                message: message.clone(),
                transient,
            }),
        ));
        self
    }

    pub fn fallback<R>(mut self, respond: R) -> Self
    where
        R: Fn(&str) -> ScriptOutcome + Send + Sync + 'static,
    {
        self.fallback = Some(Box::new(respond));
        self
    }

    pub fn fallback_text(self, text: &str) -> Self {
        let text = text.to_string();
        self.fallback(move |_| MockReply::text(text.clone()).into())
    }

    /// Runs the first matching rule, then the fallback, else `None`.
    pub(crate) fn run(&self, prompt: &str) -> Option<ScriptOutcome> {
        for (predicate, respond) in &self.rules {
            if predicate(prompt) {
                return Some(respond(prompt));
            }
        }
        self.fallback.as_ref().map(|respond| respond(prompt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_match_in_order_and_fallback_applies() {
        let script = MockScript::new()
            .reply_when_contains("alpha", "first")
            .reply_when_contains("alpha beta", "never reached")
            .fallback_text("default");

        match script.run("alpha beta").unwrap() {
            ScriptOutcome::Reply(r) => assert_eq!(r.text, "first"),
            _ => panic!("expected reply"),
        }
        match script.run("nothing matches").unwrap() {
            ScriptOutcome::Reply(r) => assert_eq!(r.text, "default"),
            _ => panic!("expected fallback"),
        }
    }

    #[test]
    fn unmatched_prompt_without_fallback_is_none() {
        let script = MockScript::new().reply_when_contains("x", "y");
        assert!(script.run("zzz").is_none());
    }
}
