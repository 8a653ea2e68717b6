use crate::chat::{cap_message, ChatMessage, CapTooSmall};
use crate::corpus::Statement;

use super::ScenarioKind;

const SYSTEM_PROMPT: &str = "I need you to assume the role of a professional fact checker with an experience of 10+ years. You will fact-check a statement.

Task: For a given statement, delimited by triple backticks, rate it for truthfulness.

Format the response as \"false\", \"true\", or \"unclear\".

You may use the `fetch_wikipedia_entity` and `fetch_wikipedia_entity_with_header` tool to help you acquire information.

You ***MUST*** only respond with one of these options and provide no context or explanations.";

const TOOLS_LINE: &str =
    "You may use the `fetch_wikipedia_entity` and `fetch_wikipedia_entity_with_header` tool to help you acquire information.";

const USER_TEMPLATE: &str = "Now, let's get to task. Here is the statement: ```{statement}```
Please rate the statement as \"false\", \"true\", or \"unclear\".";

const RAG_USER_TEMPLATE: &str = "Now, let's get to task. Here is the statement: ```{statement}```

To rate the statement, use the following related news articles: ```{full_article}```

Please rate the statement as \"false\", \"true\", or \"unclear\".";

/// Sent once the agent has used up its tool-call steps.
pub const FORCED_ANSWER_MESSAGE: &str = "You have reached the maximum number of model calls. Please rate the statement as 'false', 'true', or 'unclear' and do not perform any more function calls.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub system_with_tools: String,
    pub system_without_tools: String,
    pub user_template: String,
    pub rag_user_template: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            system_with_tools: SYSTEM_PROMPT.to_string(),
            system_without_tools: SYSTEM_PROMPT.replace(&format!("{TOOLS_LINE}\n\n"), ""),
            user_template: USER_TEMPLATE.to_string(),
            rag_user_template: RAG_USER_TEMPLATE.to_string(),
        }
    }
}

impl PromptSet {
    /// `[System, User]` for one statement, before truncation.
    pub fn build(&self, s: &Statement, kind: ScenarioKind) -> Vec<ChatMessage> {
        let (system, user) = match kind {
            ScenarioKind::StatementOnly => {
                (&self.system_without_tools, self.user_template.replace("{statement}", &s.text))
            }
            ScenarioKind::AgentWiki => (&self.system_with_tools, self.user_template.replace("{statement}", &s.text)),
            ScenarioKind::RagGold => (
                &self.system_without_tools,
                // article substituted last so braces inside it are left alone
                self.rag_user_template.replace("{statement}", &s.text).replacen("{full_article}", &s.article_text, 1),
            ),
        };
        vec![ChatMessage::system(system.clone()), ChatMessage::user(user)]
    }
}

/// Opening messages of a run with the default prompts.
pub fn build_prompts(s: &Statement, kind: ScenarioKind) -> Vec<ChatMessage> {
    PromptSet::default().build(s, kind)
}

/// Opening messages after the character cap is applied; these are exactly
/// what the first completion request carries.
pub fn initial_messages(s: &Statement, kind: ScenarioKind, char_cap: usize) -> Result<Vec<ChatMessage>, CapTooSmall> {
    build_prompts(s, kind).into_iter().map(|m| cap_message(m, char_cap)).collect()
}
