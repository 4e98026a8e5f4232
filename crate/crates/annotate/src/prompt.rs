//! Annotation prompt templates and batch rendering.

use serde::{Deserialize, Serialize};

/// Bumped whenever a template changes; part of every cache key through the
/// prompt text itself.
pub const PROMPT_VERSION: &str = "v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Refund,
    Industry,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Refund => "refund",
            Kind::Industry => "industry",
        }
    }
}

/// Refund level definitions with their exemplar sentences, level 0 first.
pub const REFUND_LEVELS: [(&str, &[&str]); 5] = [
    (
        "No refunds (clear denial).",
        &["No refunds.", "Refunds are not offered on this product.", "This product is non-refundable.", "Refunds not applicable."],
    ),
    (
        "Undefined / Not specified.",
        &[
            "This product does not have a defined refund policy.",
            "Refund policy will be discussed...",
            "Refunds are not specified for this product.",
        ],
    ),
    (
        "No refunds, but with additional details (trial, sample, disclaimer).",
        &[
            "No refunds. Please utilize trial version before purchase.",
            "Please request a free sample before buying.",
            "Not Applicable.",
            "This is a free sample.",
            "All sales are final due to digital nature.",
        ],
    ),
    (
        "No refunds, but contact/support is offered.",
        &["No refunds but contact us at ...", "Refunds are not offered, but we will fix issues.", "Please contact support@... for assistance."],
    ),
    (
        "Conditional refunds (specific cases allowed).",
        &[
            "Full refund available upon request.",
            "Refund only if subscription is canceled within 90 days.",
            "Refunds issued for valid reasons only.",
        ],
    ),
];

/// Industry scenarios and their descriptions, in output-vector order.
pub const SCENARIOS: [(&str, &str); 12] = [
    ("E-commerce and Business Data", "Data products for e-commerce and online sales, such as sales data, inventory data, consumer behavior data."),
    ("Retail and Location Data", "Data involving geographical location and marketing activities, such as GPS data, advertising data, foot traffic data."),
    ("Financial Services", "Data for the financial industry, such as banking, insurance, investment data."),
    ("Healthcare and Life Sciences Data", "Data related to health, medicine, biology, such as disease data, clinical trial data, genomic data."),
    ("Resources Data", "Data about natural resources, such as energy data, mining data, agricultural data."),
    ("Public Sector Data", "Data from government and public sectors, such as census data, public records, regulatory data."),
    ("Media and Entertainment Data", "Data for media and entertainment, such as streaming data, content rating data, social media data."),
    ("Telecommunications Data", "Data from telecommunications networks and services, such as call records, network performance data."),
    ("Cars and Automotive Data", "Data related to vehicles and transportation, such as sensor data, traffic data, car sales data."),
    ("Manufacturing Data", "Data for manufacturing and industrial processes, such as production data, supply chain data."),
    ("Environmental Data", "Data about the environment, climate, sustainability, such as pollution data, climate indicators."),
    ("Gaming Data", "Data from the gaming industry, such as player statistics, game performance data."),
];

const INTRO: &str = "You are a text classification assistant.";

/// Stand-in for an empty input so that batch positions stay aligned.
pub const EMPTY_PLACEHOLDER: &str = "(empty)";

fn quoted(ws: &[&str]) -> String {
    ws.iter().map(|w| format!("\"{w}\"")).collect::<Vec<_>>().join(", ")
}

/// The refund instructions without any input texts.
pub fn refund_template() -> String {
    let mut s = format!("{INTRO} Your task is to assign a refund policy level (0\u{2013}4) based on the following rules:\n");
    for (level, (definition, examples)) in REFUND_LEVELS.iter().enumerate() {
        s.push_str(&format!("- Level {level}: {definition} Examples: {}\n", quoted(examples)));
    }
    s.push_str("Instruction:\nClassify each input text into a level 0\u{2013}4.\n");
    s.push_str("Return the result as a JSON array of integers, in the same order as input texts.\n");
    s.push_str("Do not output anything else.\n");
    s
}

/// The industry instructions without any input texts.
pub fn industry_template() -> String {
    let mut s = format!(
        "{INTRO} Your task is to calculate the similarity between the data product description text and each scenario \
         in the given list of application scenario type, with a numerical range of [0,1], where the most similar scenario \
         is assigned a value of 1. Do not output any other content. List of application scenario type and their brief \
         descriptions:\n"
    );
    for (name, description) in SCENARIOS {
        s.push_str(&format!("- {name}: {description}\n"));
    }
    s.push_str(
        "\nInstruction: For N input items, return N lines. For item i, output ONLY a JSON-style list of 12 numbers in \
         [0,1] whose maximum equals 1, corresponding to the scenarios in the exact order listed above. No extra text, no \
         codes fences.\n",
    );
    s
}

/// Template followed by the numbered input texts. Line breaks inside a text
/// are folded to spaces so each item stays on its own line.
pub fn build_prompt(kind: Kind, texts: &[String]) -> String {
    let mut s = match kind {
        Kind::Refund => refund_template(),
        Kind::Industry => industry_template(),
    };
    s.push_str("\nInput texts:\n");
    for (i, t) in texts.iter().enumerate() {
        let folded = t.split_whitespace().collect::<Vec<_>>().join(" ");
        let item = if folded.is_empty() { EMPTY_PLACEHOLDER } else { &folded };
        s.push_str(&format!("{}. {item}\n", i + 1));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_texts_keep_their_slot() {
        let p = build_prompt(Kind::Refund, &["a".into(), "  ".into(), "b\nc".into()]);
        assert!(p.ends_with("Input texts:\n1. a\n2. (empty)\n3. b c\n"));
    }

    #[test]
    fn scenario_names_match_the_industry_columns() {
        let names: Vec<&str> = SCENARIOS.iter().map(|s| s.0).collect();
        assert_eq!(names, dataprice_core::corpus::INDUSTRIES.to_vec());
    }
}
