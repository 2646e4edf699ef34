//! Stop and choice prompts for remote models.
//!
//! Each prompt is one text part followed by one observation part per
//! perspective, in action-index order. Strategy slots that are not in use
//! render as nothing.

use crate::episode::{index_letter, DecisionView, Phase};

const STOP_TEMPLATE: &str = "\
# Role
You are a navigation assistant guiding a person on foot toward whatever their request calls for. Study the views around your current position and decide whether this spot already satisfies the request.

# Reply format
Answer with a single JSON object holding the keys \"overall observation\" (what you can see here), \"thoughts\" (your reasoning) and \"action\". Set action to -1 when the destination has been reached and to 0 to keep walking.

# Sample
Request: I could use a coffee
Reply: {\"overall observation\": \"A laundromat, a parking lot and a row of apartment blocks.\", \"thoughts\": \"Nothing in view serves coffee, so I keep walking.\", \"action\": 0}

# Your turn
Request: {query}
Current viewpoint: {viewpoint}
{backtrack}The views from this position follow, one per walkable direction.";

const CHOICE_TEMPLATE: &str = "\
# Role
You are a navigation assistant comparing candidate views, one for each direction you could walk next. Pick the view most likely to lead toward what the request calls for and rate your confidence between 0 and 1.

# Reply format
Answer with a single JSON object holding the keys \"perspective observation\" (one short note per view letter), \"thoughts\" (your reasoning), \"action\" (the letter of the chosen view) and \"score\" (your confidence).

# Sample
Request: I could use a coffee
Reply: {\"perspective observation\": {\"A\": \"A quiet lane lined with garages.\", \"B\": \"A shopping street with cafe signs further along.\"}, \"thoughts\": \"Coffee is far more likely along the shopping street, so B.\", \"action\": \"B\", \"score\": 0.8}

# Your turn
{perspective}
{direction}
{backtrack}{surrounding}{history}Request: {query}
Current viewpoint: {viewpoint}";

#[derive(Debug, Clone, PartialEq)]
pub enum ObservationPart {
    /// Image reference (URL or data URI).
    Image(String),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub text: String,
    pub observations: Vec<ObservationPart>,
}

impl RenderedPrompt {
    /// Text part followed by the observation parts, joined for display and
    /// golden files.
    pub fn flatten(&self) -> String {
        let mut out = self.text.clone();
        for o in &self.observations {
            out.push_str("\n\n");
            match o {
                ObservationPart::Image(url) => {
                    out.push_str("[image] ");
                    out.push_str(url);
                }
                ObservationPart::Text(t) => out.push_str(t),
            }
        }
        out
    }
}

fn slot(label: &str, body: &str) -> String {
    if body.trim().is_empty() {
        String::new()
    } else {
        format!("{label}\n{}\n", body.trim_end())
    }
}

fn letters(n: usize) -> String {
    (0..n).map(index_letter).collect::<Vec<_>>().join(", ")
}

pub fn render(view: &DecisionView<'_>) -> RenderedPrompt {
    let ctx = view.context;
    let n = view.perspectives.len();
    let viewpoint = format!("{}.jpg", view.graph.id(view.node));
    let text = match view.phase {
        Phase::Stop => {
            let backtrack = if ctx.backtracked {
                "You came back to this position after retracing earlier steps.\n".to_string()
            } else {
                String::new()
            };
            STOP_TEMPLATE
                .replace("{backtrack}", &backtrack)
                .replace("{viewpoint}", &viewpoint)
                .replace("{query}", &view.task.instruction)
        }
        Phase::Choice => {
            let perspective = format!(
                "There are {n} views, labelled {}. Describe every one of them exactly once.",
                letters(n)
            );
            let dirs: Vec<String> = view
                .perspectives
                .iter()
                .map(|p| format!("{} = {}", index_letter(p.index), p.direction))
                .collect();
            let direction = format!(
                "Relative to your current heading: {}. Favour FORWARD, LEFT or RIGHT and turn BACK only when nothing else looks promising.",
                dirs.join(", ")
            );
            let backtrack = match (ctx.backtracked, ctx.hint) {
                (_, Some(h)) => format!("You have just retraced your steps; take view {} next.\n", index_letter(h)),
                (true, None) => "You have just retraced your steps to an earlier position.\n".to_string(),
                (false, None) => String::new(),
            };
            CHOICE_TEMPLATE
                .replace("{perspective}", &perspective)
                .replace("{direction}", &direction)
                .replace("{backtrack}", &backtrack)
                .replace("{surrounding}", &slot("What earlier rounds learned about this area:", &ctx.surrounding))
                .replace("{history}", &slot("Your most recent steps:", &ctx.history))
                .replace("{viewpoint}", &viewpoint)
                .replace("{query}", &view.task.instruction)
        }
    };
    let observations = view
        .perspectives
        .iter()
        .zip(view.observations)
        .map(|(p, o)| match &o.image {
            Some(url) => ObservationPart::Image(url.clone()),
            None => ObservationPart::Text(format!(
                "View {} ({}, heading {:.0}): {}",
                index_letter(p.index),
                p.direction,
                p.heading,
                o.text
            )),
        })
        .collect();
    RenderedPrompt { text, observations }
}
